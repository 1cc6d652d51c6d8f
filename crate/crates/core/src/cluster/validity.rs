//! Internal validity indices and partition agreement.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::vectorize::{DissimilarityMatrix, DocTermMatrix, SparseVector};

fn cluster_count(labels: &[usize]) -> usize {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Mean silhouette width. Points alone in their cluster contribute 0, as do
/// points with `a = b = 0`.
pub fn silhouette(labels: &[usize], dissim: &DissimilarityMatrix) -> Result<f64> {
    let clusters = cluster_count(labels);
    if clusters < 2 {
        return Err(Error::TooFewClusters(clusters));
    }
    let n = labels.len();
    let k = labels.iter().max().unwrap() + 1;
    let mut size = vec![0usize; k];
    for &l in labels {
        size[l] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        if size[own] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if i != j {
                sums[labels[j]] += dissim.get(i, j);
            }
        }
        let a = sums[own] / (size[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && size[c] > 0)
            .map(|c| sums[c] / size[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

/// Davies-Bouldin index with cosine dissimilarity to normalized-mean centroids.
pub fn davies_bouldin(labels: &[usize], matrix: &DocTermMatrix) -> Result<f64> {
    let clusters = cluster_count(labels);
    if clusters < 2 {
        return Err(Error::TooFewClusters(clusters));
    }
    let k = labels.iter().max().unwrap() + 1;
    let unit: Vec<SparseVector> = matrix.rows.iter().map(SparseVector::normalized).collect();
    let mut sums = vec![vec![0.0; matrix.n_terms]; k];
    let mut size = vec![0usize; k];
    for (x, &l) in unit.iter().zip(labels) {
        size[l] += 1;
        for (i, v) in x.iter() {
            sums[l][i as usize] += v;
        }
    }
    let centroids: Vec<SparseVector> = sums.iter().map(|s| SparseVector::from_dense(s).normalized()).collect();
    let mut scatter = vec![0.0; k];
    for (x, &l) in unit.iter().zip(labels) {
        scatter[l] += cos_dissim(x, &centroids[l]);
    }
    let live: Vec<usize> = (0..k).filter(|&c| size[c] > 0).collect();
    for &c in &live {
        scatter[c] /= size[c] as f64;
    }
    let mut total = 0.0;
    for &i in &live {
        let worst = live
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| {
                let s = scatter[i] + scatter[j];
                let m = cos_dissim(&centroids[i], &centroids[j]);
                if s == 0.0 {
                    0.0
                } else {
                    s / m
                }
            })
            .fold(f64::NEG_INFINITY, f64::max);
        total += worst;
    }
    Ok(total / live.len() as f64)
}

fn cos_dissim(u: &SparseVector, v: &SparseVector) -> f64 {
    crate::vectorize::cosine_dissimilarity(u, v).expect("shared dimension")
}

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len() as u64;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        // Both labelings are trivial (all singletons or one cluster).
        return if a == b || same_partition(a, b) { 1.0 } else { 0.0 };
    }
    (index - expected) / (max - expected)
}

/// Whether two labelings induce the same partition (equal up to relabeling).
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len() && super::canonical_labels(a) == super::canonical_labels(b)
}
