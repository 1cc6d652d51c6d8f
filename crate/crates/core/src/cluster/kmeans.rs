//! Spherical K-Means with k-means++ seeding under cosine dissimilarity.
//!
//! A single k-means++ start can place two seeds in one well-separated group
//! and never recover, so [`kmeans`] keeps the best of several starts.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_k, Algorithm, Clustering};
use crate::error::{Error, Result};
use crate::seed;
use crate::vectorize::{DocTermMatrix, SparseVector, Weighting};

pub struct KMeansOutput {
    /// Raw (non-canonical) labels, indexing `centroids`.
    pub labels: Vec<usize>,
    /// Unit-length centroids (zero when a cluster holds only zero rows).
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Sum of cosine dissimilarities between rows and their centroids.
    pub objective: f64,
}

/// Starts used by [`kmeans`].
pub const DEFAULT_RESTARTS: usize = 10;

/// Cosine dissimilarity between a unit (or zero) row and a unit (or zero) centroid.
#[inline]
fn dissim(x: &SparseVector, x_zero: bool, c: &[f64], c_zero: bool) -> f64 {
    match (x_zero, c_zero) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => (1.0 - x.dot_dense(c)).clamp(0.0, 2.0),
    }
}

struct Centroid {
    v: Vec<f64>,
    zero: bool,
}

impl Centroid {
    fn from_row(x: &SparseVector, dim: usize) -> Self {
        let mut v = vec![0.0; dim];
        for (i, w) in x.iter() {
            v[i as usize] = w;
        }
        Centroid { v, zero: x.nnz() == 0 }
    }
}

fn nearest(x: &SparseVector, zero: bool, centroids: &[Centroid]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = dissim(x, zero, &c.v, c.zero);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus(rows: &[SparseVector], zero: &[bool], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = rows.len();
    let dim = rows[0].dim();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut best: Vec<f64> = vec![f64::INFINITY; n];
    while chosen.len() < k {
        let last = Centroid::from_row(&rows[*chosen.last().unwrap()], dim);
        for i in 0..n {
            best[i] = best[i].min(dissim(&rows[i], zero[i], &last.v, last.zero));
        }
        let weights: Vec<f64> = best.iter().map(|d| d * d).collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in weights.iter().enumerate() {
                if *w > 0.0 {
                    pick = i;
                    if r < *w {
                        break;
                    }
                    r -= w;
                }
            }
            pick
        } else {
            // Every point coincides with a chosen seed; take an unchosen one.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
    }
    chosen
}

fn update(rows: &[SparseVector], labels: &[usize], k: usize, dim: usize) -> Vec<Centroid> {
    let mut sums = vec![vec![0.0; dim]; k];
    for (x, &l) in rows.iter().zip(labels) {
        for (i, w) in x.iter() {
            sums[l][i as usize] += w;
        }
    }
    sums.into_iter()
        .map(|mut v| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let zero = norm == 0.0;
            if !zero {
                v.iter_mut().for_each(|x| *x /= norm);
            }
            Centroid { v, zero }
        })
        .collect()
}

/// Runs spherical K-Means on rows that are L2-normalized internally.
pub fn spherical_kmeans(
    rows: &[SparseVector],
    k: usize,
    rng: &mut ChaCha8Rng,
    max_iter: usize,
) -> Result<KMeansOutput> {
    let n = rows.len();
    check_k(k, n)?;
    let dim = rows[0].dim();
    let unit: Vec<SparseVector> = rows.iter().map(SparseVector::normalized).collect();
    let zero: Vec<bool> = unit.iter().map(|r| r.nnz() == 0).collect();

    let seeds = plus_plus(&unit, &zero, k, rng);
    let mut centroids: Vec<Centroid> = seeds.iter().map(|&s| Centroid::from_row(&unit[s], dim)).collect();
    let assign = |centroids: &[Centroid]| -> Vec<(usize, f64)> {
        (0..n)
            .into_par_iter()
            .map(|i| nearest(&unit[i], zero[i], centroids))
            .collect()
    };
    let mut labels: Vec<usize> = assign(&centroids).into_iter().map(|p| p.0).collect();

    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        centroids = update(&unit, &labels, k, dim);
        repair_empty(&unit, &zero, &mut labels, &mut centroids, k, dim);
        let next: Vec<usize> = assign(&centroids).into_iter().map(|p| p.0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    let objective = (0..n)
        .map(|i| {
            let c = &centroids[labels[i]];
            dissim(&unit[i], zero[i], &c.v, c.zero)
        })
        .sum();
    Ok(KMeansOutput {
        labels,
        centroids: centroids.into_iter().map(|c| c.v).collect(),
        iterations,
        objective,
    })
}

/// Reseeds each empty cluster with the point farthest from its own centroid,
/// taken from a cluster that keeps at least one other member.
fn repair_empty(
    unit: &[SparseVector],
    zero: &[bool],
    labels: &mut [usize],
    centroids: &mut Vec<Centroid>,
    k: usize,
    dim: usize,
) {
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let far = (0..unit.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .map(|i| {
                let c = &centroids[labels[i]];
                (i, dissim(&unit[i], zero[i], &c.v, c.zero))
            })
            .fold(None::<(usize, f64)>, |acc, (i, d)| match acc {
                Some((_, bd)) if bd >= d => acc,
                _ => Some((i, d)),
            });
        let Some((i, _)) = far else {
            return;
        };
        labels[i] = empty;
        *centroids = update(unit, labels, k, dim);
    }
}

/// Spherical K-Means over the rows of a TF-IDF matrix, best of
/// [`DEFAULT_RESTARTS`] starts.
pub fn kmeans(matrix: &DocTermMatrix, k: usize, seed: u64, max_iter: usize) -> Result<Clustering> {
    kmeans_with_restarts(matrix, k, seed, max_iter, DEFAULT_RESTARTS)
}

/// Runs `restarts` independently seeded starts and keeps the one with the
/// lowest objective (the earliest start on ties).
pub fn kmeans_with_restarts(
    matrix: &DocTermMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    restarts: usize,
) -> Result<Clustering> {
    if matrix.weighting != Weighting::Tfidf {
        return Err(Error::invalid("kmeans expects a TF-IDF matrix"));
    }
    check_k(k, matrix.n_rows())?;
    let mut best: Option<KMeansOutput> = None;
    for r in 0..restarts.max(1) {
        let mut rng = seed::rng(seed::derive_index(seed, r as u64));
        let out = spherical_kmeans(&matrix.rows, k, &mut rng, max_iter)?;
        if best.as_ref().is_none_or(|b| out.objective < b.objective) {
            best = Some(out);
        }
    }
    let out = best.expect("at least one start");
    Ok(Clustering::new(
        matrix.doc_ids.clone(),
        out.labels,
        k,
        Algorithm::Kmeans,
        seed,
        out.iterations,
    ))
}
