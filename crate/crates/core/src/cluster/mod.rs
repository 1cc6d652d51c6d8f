//! Clustering algorithms, k-selection strategies and validity indices.
//!
//! Every algorithm returns a [`Clustering`] whose labels are canonical: label
//! 0 is the cluster of the first row, label 1 the next cluster to appear, and
//! so on. Two runs that induce the same partition therefore produce equal
//! label vectors, which is what makes subprofile ids stable.

mod agnes;
mod diana;
mod kmeans;
mod lda;
mod pam;
mod som;
mod validity;

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use agnes::{agnes, agnes_with, Dendrogram, Linkage, Merge};
pub use diana::{diana, diana_with_splits, SplitStep};
pub use kmeans::{kmeans, kmeans_with_restarts, spherical_kmeans, KMeansOutput, DEFAULT_RESTARTS};
pub use lda::{lda_cluster, LdaConfig, LdaModel};
pub use pam::{pam, PamOutput};
pub use som::{default_grid_side, som_km, som_km_with_bmus, SomConfig, SomMode};
pub use validity::{adjusted_rand_index, davies_bouldin, same_partition, silhouette};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Kmeans,
    Pam,
    Agnes,
    Diana,
    Lda,
    SomKm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Agnes,
        Algorithm::Diana,
        Algorithm::Kmeans,
        Algorithm::Pam,
        Algorithm::Lda,
        Algorithm::SomKm,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Kmeans => "kmeans",
            Algorithm::Pam => "pam",
            Algorithm::Agnes => "agnes",
            Algorithm::Diana => "diana",
            Algorithm::Lda => "lda",
            Algorithm::SomKm => "som-km",
        }
    }

    /// Whether the algorithm needs the full pairwise dissimilarity matrix.
    pub fn needs_dissimilarities(&self) -> bool {
        matches!(self, Algorithm::Pam | Algorithm::Agnes | Algorithm::Diana)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "kmeans" | "k-means" => Ok(Algorithm::Kmeans),
            "pam" => Ok(Algorithm::Pam),
            "agnes" => Ok(Algorithm::Agnes),
            "diana" => Ok(Algorithm::Diana),
            "lda" => Ok(Algorithm::Lda),
            "som-km" | "somkm" | "som" => Ok(Algorithm::SomKm),
            other => Err(Error::invalid(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// How the number of clusters is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KStrategy {
    /// Number of distinct groups (committees) in scope.
    Groups,
    /// `floor(m * n / t)`.
    MnOverT,
    /// `floor(sqrt(n / 2))`.
    SqrtNHalf,
    Fixed(usize),
}

impl fmt::Display for KStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KStrategy::Groups => f.write_str("groups"),
            KStrategy::MnOverT => f.write_str("mn_over_t"),
            KStrategy::SqrtNHalf => f.write_str("sqrt_n_half"),
            KStrategy::Fixed(k) => write!(f, "fixed={k}"),
        }
    }
}

impl FromStr for KStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(k) = s.strip_prefix("fixed=").or_else(|| s.strip_prefix("fixed:")) {
            return k
                .parse()
                .map(KStrategy::Fixed)
                .map_err(|_| Error::invalid(format!("bad fixed k {k:?}")));
        }
        match s {
            "groups" | "#com" | "com" => Ok(KStrategy::Groups),
            "mn_over_t" | "mn/t" => Ok(KStrategy::MnOverT),
            "sqrt_n_half" | "sqrt(n/2)" => Ok(KStrategy::SqrtNHalf),
            other => Err(Error::invalid(format!("unknown k strategy {other:?}"))),
        }
    }
}

/// Collection statistics feeding k-selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KSelectionInputs {
    /// Documents.
    pub n: usize,
    /// Vocabulary size.
    pub m: usize,
    /// Non-zero entries of the document-term matrix.
    pub t: usize,
    pub group_count: usize,
}

/// Applies a k strategy; the result is clamped to `[1, n]`.
pub fn select_k(strategy: KStrategy, inputs: KSelectionInputs) -> usize {
    let raw = match strategy {
        KStrategy::Groups => inputs.group_count,
        KStrategy::MnOverT if inputs.t == 0 => 1,
        KStrategy::MnOverT => {
            // Integer arithmetic keeps floor exact for large m * n.
            ((inputs.m as u128 * inputs.n as u128) / inputs.t as u128) as usize
        }
        KStrategy::SqrtNHalf => (inputs.n as f64 / 2.0).sqrt().floor() as usize,
        KStrategy::Fixed(k) => k,
    };
    raw.clamp(1, inputs.n.max(1))
}

/// A hard assignment of rows to clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub doc_ids: Vec<String>,
    pub labels: Vec<usize>,
    pub k: usize,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub iterations: usize,
}

impl Clustering {
    /// Builds a clustering, relabeling clusters canonically.
    pub fn new(
        doc_ids: Vec<String>,
        labels: Vec<usize>,
        k: usize,
        algorithm: Algorithm,
        seed: u64,
        iterations: usize,
    ) -> Self {
        Clustering {
            doc_ids,
            labels: canonical_labels(&labels),
            k,
            algorithm,
            seed,
            iterations,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn non_empty_clusters(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn assignment(&self) -> HashMap<&str, usize> {
        self.doc_ids
            .iter()
            .map(String::as_str)
            .zip(self.labels.iter().copied())
            .collect()
    }

    /// Writes `doc_id,cluster_label` rows after a `#` provenance line.
    pub fn write_csv(&self, strategy: &str, mut w: impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "# algorithm={} k={} strategy={} seed={}",
            self.algorithm, self.k, strategy, self.seed
        )?;
        writeln!(w, "doc_id,cluster_label")?;
        for (id, l) in self.doc_ids.iter().zip(&self.labels) {
            writeln!(w, "{id},{l}")?;
        }
        Ok(())
    }
}

/// Reads the output of [`Clustering::write_csv`], returning the clustering
/// and its k-strategy label.
pub fn read_clustering_csv(reader: impl BufRead) -> Result<(Clustering, String)> {
    let mut lines = reader.lines().enumerate();
    let mut next = || -> Result<Option<(usize, String)>> {
        match lines.next() {
            None => Ok(None),
            Some((i, line)) => line.map(|l| Some((i + 1, l))).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    };
    let parse_err = |line: usize, message: String| Error::Parse { line, message };

    let (line, header) = next()?.ok_or_else(|| parse_err(1, "empty clustering file".into()))?;
    let fields: HashMap<&str, &str> = header
        .strip_prefix('#')
        .ok_or_else(|| parse_err(line, "missing provenance line".into()))?
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .collect();
    let field = |key: &str| -> Result<&str> {
        fields
            .get(key)
            .copied()
            .ok_or_else(|| parse_err(line, format!("provenance line lacks {key}=")))
    };
    let algorithm: Algorithm = field("algorithm")?.parse()?;
    let k: usize = field("k")?.parse().map_err(|_| parse_err(line, "bad k".into()))?;
    let seed: u64 = field("seed")?.parse().map_err(|_| parse_err(line, "bad seed".into()))?;
    let strategy = field("strategy")?.to_string();

    match next()? {
        Some((_, h)) if h.trim() == "doc_id,cluster_label" => {}
        Some((line, _)) => return Err(parse_err(line, "expected header doc_id,cluster_label".into())),
        None => return Err(parse_err(line + 1, "missing column header".into())),
    }
    let mut doc_ids = Vec::new();
    let mut labels = Vec::new();
    while let Some((line, row)) = next()? {
        if row.trim().is_empty() {
            continue;
        }
        let (id, label) = row
            .rsplit_once(',')
            .ok_or_else(|| parse_err(line, "expected doc_id,cluster_label".into()))?;
        doc_ids.push(id.to_string());
        labels.push(
            label
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("bad label {label:?}")))?,
        );
    }
    Ok((Clustering::new(doc_ids, labels, k, algorithm, seed, 0), strategy))
}

/// Relabels clusters in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map: HashMap<usize, usize> = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

pub(crate) fn check_k(k: usize, n: usize) -> Result<()> {
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_from_reported_collection_statistics() {
        let global = KSelectionInputs {
            n: 10025,
            m: 4208,
            t: 1_702_296,
            group_count: 26,
        };
        assert_eq!(select_k(KStrategy::MnOverT, global), 24);
        assert_eq!(select_k(KStrategy::SqrtNHalf, global), 70);
        assert_eq!(select_k(KStrategy::Groups, global), 26);
    }

    #[test]
    fn k_is_clamped() {
        let tiny = KSelectionInputs {
            n: 1,
            m: 50,
            t: 5,
            group_count: 0,
        };
        assert_eq!(select_k(KStrategy::MnOverT, tiny), 1);
        assert_eq!(select_k(KStrategy::Groups, tiny), 1);
        assert_eq!(select_k(KStrategy::SqrtNHalf, tiny), 1);
        assert_eq!(select_k(KStrategy::Fixed(9), tiny), 1);
    }

    #[test]
    fn strategy_and_algorithm_names_parse() {
        for s in ["groups", "mn_over_t", "sqrt_n_half", "fixed=6"] {
            assert_eq!(s.parse::<KStrategy>().unwrap().to_string(), s);
        }
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
    }

    #[test]
    fn canonical_relabeling() {
        assert_eq!(canonical_labels(&[5, 5, 2, 7, 2]), [0, 0, 1, 2, 1]);
    }

    #[test]
    fn clustering_csv_round_trips() {
        let c = Clustering::new(
            vec!["a".into(), "b,1".into(), "c".into()],
            vec![1, 0, 1],
            2,
            Algorithm::Pam,
            9,
            3,
        );
        let mut buf = Vec::new();
        c.write_csv("fixed=2", &mut buf).unwrap();
        let (back, strategy) = read_clustering_csv(buf.as_slice()).unwrap();
        assert_eq!(strategy, "fixed=2");
        assert_eq!(back.doc_ids, c.doc_ids);
        assert_eq!(back.labels, [0, 1, 0]);
        assert_eq!((back.k, back.algorithm, back.seed), (2, Algorithm::Pam, 9));
    }

    #[test]
    fn clustering_csv_errors_name_the_line() {
        let bad = "# algorithm=pam k=2 strategy=groups seed=1\ndoc_id,cluster_label\na,x\n";
        assert!(matches!(
            read_clustering_csv(bad.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
    }
}
