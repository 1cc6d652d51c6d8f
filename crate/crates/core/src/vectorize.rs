//! Sparse document-term matrices, TF-IDF weighting and cosine dissimilarity.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::textprep::{Pipeline, TokenPipelineConfig, Vocabulary};

/// `(term index, weight)` pairs sorted by index; zeros are never stored.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
    dim: usize,
}

impl SparseVector {
    pub fn new(dim: usize, mut pairs: Vec<(u32, f64)>) -> Result<Self> {
        pairs.sort_by_key(|p| p.0);
        let mut indices = Vec::with_capacity(pairs.len());
        let mut values = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            if i as usize >= dim {
                return Err(Error::invalid(format!("index {i} out of dimension {dim}")));
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite weight at index {i}")));
            }
            if indices.last() == Some(&i) {
                return Err(Error::invalid(format!("duplicate index {i}")));
            }
            if v != 0.0 {
                indices.push(i);
                values.push(v);
            }
        }
        Ok(SparseVector { indices, values, dim })
    }

    /// Builds a vector from a dense slice, dropping zeros.
    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .unzip();
        SparseVector {
            indices,
            values,
            dim: dense.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i as usize]).sum()
    }

    /// Unit-length copy; zero vectors stay zero.
    pub fn normalized(&self) -> SparseVector {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        SparseVector {
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v / n).collect(),
            dim: self.dim,
        }
    }

    fn map_values(&self, mut f: impl FnMut(u32, f64) -> f64) -> SparseVector {
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.indices.len());
        for (i, v) in self.iter() {
            let w = f(i, v);
            if w != 0.0 {
                indices.push(i);
                values.push(w);
            }
        }
        SparseVector {
            indices,
            values,
            dim: self.dim,
        }
    }
}

/// `1 - cos(u, v)`. Zero-norm conventions: both zero gives 0, one zero gives 1.
pub fn cosine_dissimilarity(u: &SparseVector, v: &SparseVector) -> Result<f64> {
    if u.dim != v.dim {
        return Err(Error::DimensionMismatch {
            left: u.dim,
            right: v.dim,
        });
    }
    Ok(cosine_unchecked(u, v))
}

fn cosine_unchecked(u: &SparseVector, v: &SparseVector) -> f64 {
    let (nu, nv) = (u.norm(), v.norm());
    match (nu == 0.0, nv == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => (1.0 - u.dot(v) / (nu * nv)).clamp(0.0, 1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Counts,
    Tfidf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdfVariant {
    /// `ln(N / df)`
    #[default]
    Plain,
    /// `ln(1 + N / df)`
    Smoothed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocTermMatrix {
    pub doc_ids: Vec<String>,
    pub rows: Vec<SparseVector>,
    pub n_terms: usize,
    pub weighting: Weighting,
}

impl DocTermMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(SparseVector::nnz).sum()
    }

    /// Number of columns with at least one non-zero entry.
    pub fn active_terms(&self) -> usize {
        let mut seen = vec![false; self.n_terms];
        for row in &self.rows {
            for &i in row.indices() {
                seen[i as usize] = true;
            }
        }
        seen.into_iter().filter(|s| *s).count()
    }

    /// Keeps the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> DocTermMatrix {
        DocTermMatrix {
            doc_ids: rows.iter().map(|&r| self.doc_ids[r].clone()).collect(),
            rows: rows.iter().map(|&r| self.rows[r].clone()).collect(),
            n_terms: self.n_terms,
            weighting: self.weighting,
        }
    }

    /// Writes `doc_id term_index weight` lines.
    pub fn write_coordinates(&self, mut w: impl Write) -> std::io::Result<()> {
        for (id, row) in self.doc_ids.iter().zip(&self.rows) {
            for (i, v) in row.iter() {
                writeln!(w, "{id} {i} {v}")?;
            }
        }
        Ok(())
    }
}

/// Vocabulary-restricted term counts of one text, sorted by term index.
pub type TermBag = Vec<(u32, u32)>;

pub fn term_bag(text: &str, pipeline: &Pipeline<'_>, vocab: &Vocabulary) -> TermBag {
    let mut ids: Vec<u32> = pipeline
        .process(text)
        .iter()
        .filter_map(|t| vocab.index_of(t))
        .collect();
    ids.sort_unstable();
    let mut bag: TermBag = Vec::new();
    for id in ids {
        match bag.last_mut() {
            Some((last, c)) if *last == id => *c += 1,
            _ => bag.push((id, 1)),
        }
    }
    bag
}

/// Term bags for many documents, computed in parallel and returned in input order.
pub fn term_bags(docs: &[Document], config: &TokenPipelineConfig, vocab: &Vocabulary) -> Result<Vec<TermBag>> {
    let pipeline = Pipeline::new(config)?;
    Ok(docs.par_iter().map(|d| term_bag(&d.body, &pipeline, vocab)).collect())
}

pub fn counts_from_bags<'a>(
    doc_ids: impl IntoIterator<Item = String>,
    bags: impl IntoIterator<Item = &'a TermBag>,
    n_terms: usize,
) -> DocTermMatrix {
    let rows = bags
        .into_iter()
        .map(|bag| SparseVector {
            indices: bag.iter().map(|p| p.0).collect(),
            values: bag.iter().map(|p| p.1 as f64).collect(),
            dim: n_terms,
        })
        .collect();
    DocTermMatrix {
        doc_ids: doc_ids.into_iter().collect(),
        rows,
        n_terms,
        weighting: Weighting::Counts,
    }
}

/// Raw occurrence counts of vocabulary stems per document.
pub fn build_counts(corpus: &Corpus, vocab: &Vocabulary, config: &TokenPipelineConfig) -> Result<DocTermMatrix> {
    let bags = term_bags(corpus.documents(), config, vocab)?;
    Ok(counts_from_bags(
        corpus.documents().iter().map(|d| d.doc_id.clone()),
        &bags,
        vocab.len(),
    ))
}

/// `tf * ln(N / df)` with document frequencies taken from the matrix rows.
pub fn tfidf(matrix: &DocTermMatrix) -> Result<DocTermMatrix> {
    tfidf_with(matrix, IdfVariant::Plain)
}

pub fn tfidf_with(matrix: &DocTermMatrix, variant: IdfVariant) -> Result<DocTermMatrix> {
    if matrix.weighting != Weighting::Counts {
        return Err(Error::invalid("tfidf expects a counts matrix"));
    }
    let mut df = vec![0u32; matrix.n_terms];
    for row in &matrix.rows {
        for &i in row.indices() {
            df[i as usize] += 1;
        }
    }
    let n = matrix.n_rows() as f64;
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| match (d, variant) {
            (0, _) => 0.0,
            (d, IdfVariant::Plain) => (n / d as f64).ln(),
            (d, IdfVariant::Smoothed) => (1.0 + n / d as f64).ln(),
        })
        .collect();
    Ok(DocTermMatrix {
        doc_ids: matrix.doc_ids.clone(),
        rows: matrix
            .rows
            .iter()
            .map(|r| r.map_values(|i, tf| tf * idf[i as usize]))
            .collect(),
        n_terms: matrix.n_terms,
        weighting: Weighting::Tfidf,
    })
}

/// Symmetric matrix in condensed upper-triangular storage with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityMatrix {
    n: usize,
    condensed: Vec<f64>,
}

impl DissimilarityMatrix {
    /// Builds from a full square matrix, reading the upper triangle.
    pub fn from_square(square: &[Vec<f64>]) -> Result<Self> {
        let n = square.len();
        let mut condensed = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for (i, row) in square.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid("dissimilarity matrix is not square"));
            }
            for j in i + 1..n {
                if (row[j] - square[j][i]).abs() > 1e-12 {
                    return Err(Error::invalid(format!("asymmetric entry at ({i},{j})")));
                }
                condensed.push(row[j]);
            }
        }
        Ok(DissimilarityMatrix { n, condensed })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let condensed = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let f = &f;
                (i + 1..n).map(move |j| f(i, j))
            })
            .collect();
        DissimilarityMatrix { n, condensed }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        // i < j
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.condensed[self.offset(i, j)],
            std::cmp::Ordering::Greater => self.condensed[self.offset(j, i)],
        }
    }

    pub(crate) fn condensed(&self) -> &[f64] {
        &self.condensed
    }
}

/// Pairwise cosine dissimilarities over all rows.
pub fn dissimilarity_matrix(matrix: &DocTermMatrix) -> DissimilarityMatrix {
    let unit: Vec<SparseVector> = matrix.rows.iter().map(SparseVector::normalized).collect();
    DissimilarityMatrix::from_fn(unit.len(), |i, j| cosine_unchecked(&unit[i], &unit[j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv(dense: &[f64]) -> SparseVector {
        SparseVector::from_dense(dense)
    }

    fn counts(rows: &[&[f64]]) -> DocTermMatrix {
        DocTermMatrix {
            doc_ids: (0..rows.len()).map(|i| format!("d{i}")).collect(),
            rows: rows.iter().map(|r| sv(r)).collect(),
            n_terms: rows[0].len(),
            weighting: Weighting::Counts,
        }
    }

    #[test]
    fn sparse_vector_rejects_bad_input() {
        assert!(SparseVector::new(2, vec![(2, 1.0)]).is_err());
        assert!(SparseVector::new(2, vec![(0, f64::NAN)]).is_err());
        assert!(SparseVector::new(3, vec![(1, 1.0), (1, 2.0)]).is_err());
        let v = SparseVector::new(3, vec![(2, 1.0), (0, 0.0), (1, 3.0)]).unwrap();
        assert_eq!(v.indices(), [1, 2]);
    }

    #[test]
    fn tfidf_hand_values() {
        // N=4; term 0 in one doc with tf 2; term 1 in every doc.
        let m = counts(&[&[2.0, 1.0], &[0.0, 1.0], &[0.0, 3.0], &[0.0, 1.0]]);
        let t = tfidf(&m).unwrap();
        assert!((t.rows[0].values()[0] - 2.0 * 4f64.ln()).abs() < 1e-12);
        assert!((2.0 * 4f64.ln() - 2.7726).abs() < 1e-4);
        assert_eq!(t.rows[1].nnz(), 0);
        assert_eq!(t.weighting, Weighting::Tfidf);
    }

    #[test]
    fn tfidf_requires_counts() {
        let t = tfidf(&counts(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert!(tfidf(&t).is_err());
    }

    #[test]
    fn tfidf_of_zero_row_is_zero() {
        let t = tfidf(&counts(&[&[0.0, 0.0], &[1.0, 0.0]])).unwrap();
        assert_eq!(t.rows[0].nnz(), 0);
    }

    #[test]
    fn cosine_examples() {
        let u = sv(&[1.0, 1.0, 0.0]);
        let v = sv(&[1.0, 0.0, 1.0]);
        assert!((cosine_dissimilarity(&u, &v).unwrap() - 0.5).abs() < 1e-12);
        assert!(cosine_dissimilarity(&u, &u).unwrap().abs() < 1e-12);
        assert_eq!(cosine_dissimilarity(&sv(&[1.0, 0.0]), &sv(&[0.0, 2.0])).unwrap(), 1.0);
        assert_eq!(cosine_dissimilarity(&sv(&[0.0, 0.0]), &sv(&[0.0, 2.0])).unwrap(), 1.0);
        assert_eq!(cosine_dissimilarity(&sv(&[0.0, 0.0]), &sv(&[0.0, 0.0])).unwrap(), 0.0);
        assert!(matches!(
            cosine_dissimilarity(&sv(&[1.0]), &sv(&[1.0, 0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn dissimilarity_matrix_matches_pairwise() {
        let rows: [&[f64]; 3] = [&[1.0, 2.0, 0.0], &[0.0, 1.0, 1.0], &[3.0, 0.0, 4.0]];
        let m = counts(&rows);
        let d = dissimilarity_matrix(&m);
        // Brute force: explicit dense dot products.
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|c| rows[i][c] * rows[j][c]).sum();
                let ni: f64 = rows[i].iter().map(|x| x * x).sum::<f64>().sqrt();
                let nj: f64 = rows[j].iter().map(|x| x * x).sum::<f64>().sqrt();
                let expect = if i == j { 0.0 } else { 1.0 - dot / (ni * nj) };
                assert!((d.get(i, j) - expect).abs() < 1e-12, "({i},{j})");
            }
        }
        let one = dissimilarity_matrix(&counts(&[&[1.0, 0.0]]));
        assert_eq!(one.len(), 1);
        assert_eq!(one.get(0, 0), 0.0);
    }

    #[test]
    fn counts_for_hand_document() {
        use crate::corpus::Document;
        use crate::textprep::build_vocabulary;
        let corpus = Corpus::new(vec![
            Document {
                doc_id: "x".into(),
                author_id: "A".into(),
                group_id: None,
                initiative_id: None,
                title: String::new(),
                body: "a a b".into(),
                order: 0,
            },
            Document {
                doc_id: "y".into(),
                author_id: "A".into(),
                group_id: None,
                initiative_id: None,
                title: String::new(),
                body: "zzz".into(),
                order: 1,
            },
        ])
        .unwrap();
        let cfg = TokenPipelineConfig {
            min_doc_fraction: 0.5,
            ..TokenPipelineConfig::plain()
        };
        let vocab = build_vocabulary(&corpus, &cfg).unwrap();
        let m = build_counts(&corpus, &vocab, &cfg).unwrap();
        let a = vocab.index_of("a").unwrap();
        let b = vocab.index_of("b").unwrap();
        assert_eq!(m.rows[0].iter().collect::<Vec<_>>(), [(a, 2.0), (b, 1.0)]);

        let strict = TokenPipelineConfig {
            min_doc_fraction: 0.01,
            ..TokenPipelineConfig::plain()
        };
        let only_a = Vocabulary::from_parts(vec!["a".into()], vec![1], 2).unwrap();
        let m = build_counts(&corpus, &only_a, &strict).unwrap();
        assert_eq!(m.rows[1].nnz(), 0);
        assert_eq!(m.nnz(), 1);
    }

    fn arb_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop_oneof![Just(0.0), 0.1f64..10.0], dim)
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(a in arb_vec(6), b in arb_vec(6), s in 0.1f64..50.0) {
            let (u, v) = (sv(&a), sv(&b));
            let d = cosine_dissimilarity(&u, &v).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!((d - cosine_dissimilarity(&v, &u).unwrap()).abs() < 1e-12);
            let scaled: Vec<f64> = a.iter().map(|x| x * s).collect();
            prop_assert!((d - cosine_dissimilarity(&sv(&scaled), &v).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn tfidf_never_adds_nonzeros(rows in prop::collection::vec(prop::collection::vec(0u32..4, 5), 1..8)) {
            let dense: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&c| c as f64).collect()).collect();
            let refs: Vec<&[f64]> = dense.iter().map(|r| r.as_slice()).collect();
            let m = counts(&refs);
            let t = tfidf(&m).unwrap();
            prop_assert!(t.nnz() <= m.nnz());
            for (cr, tr) in m.rows.iter().zip(&t.rows) {
                // Non-zeros of the tfidf row are a subset of the counts row,
                // and coincide with it when no idf is zero.
                prop_assert!(tr.indices().iter().all(|i| cr.indices().contains(i)));
            }
            let n = m.n_rows() as u32;
            let mut df = [0u32; 5];
            for r in &m.rows { for &i in r.indices() { df[i as usize] += 1; } }
            if df.iter().all(|&d| d != n) {
                prop_assert_eq!(t.nnz(), m.nnz());
            }
        }
    }
}
