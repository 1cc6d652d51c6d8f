//! Partitioning Around Medoids: greedy BUILD followed by best-improvement SWAP.
//!
//! A SWAP iteration evaluates every (medoid, non-medoid) exchange and applies
//! the single best one. The per-candidate deltas for all medoids are computed
//! together from each point's nearest and second-nearest medoid distances, so
//! one iteration costs O(n^2) instead of O(k n^2); the chosen swap is the same
//! as in the exhaustive formulation.

use super::{check_k, Algorithm, Clustering};
use crate::error::Result;
use crate::vectorize::DissimilarityMatrix;

pub struct PamOutput {
    pub clustering: Clustering,
    /// Row indices of the medoids, in cluster-label order.
    pub medoids: Vec<usize>,
    /// Total cost after BUILD and after each accepted swap.
    pub cost_history: Vec<f64>,
}

struct Nearest {
    first: Vec<usize>, // position in `medoids`
    d1: Vec<f64>,
    d2: Vec<f64>,
}

fn nearest(d: &DissimilarityMatrix, medoids: &[usize]) -> Nearest {
    let n = d.len();
    let mut out = Nearest {
        first: vec![0; n],
        d1: vec![f64::INFINITY; n],
        d2: vec![f64::INFINITY; n],
    };
    for o in 0..n {
        for (mi, &m) in medoids.iter().enumerate() {
            let x = d.get(o, m);
            if x < out.d1[o] {
                out.d2[o] = out.d1[o];
                out.d1[o] = x;
                out.first[o] = mi;
            } else if x < out.d2[o] {
                out.d2[o] = x;
            }
        }
    }
    out
}

fn build(d: &DissimilarityMatrix, k: usize) -> Vec<usize> {
    let n = d.len();
    let first = (0..n)
        .map(|i| (i, (0..n).map(|j| d.get(i, j)).sum::<f64>()))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
        .0;
    let mut medoids = vec![first];
    let mut is_medoid = vec![false; n];
    is_medoid[first] = true;
    let mut dn: Vec<f64> = (0..n).map(|o| d.get(o, first)).collect();
    while medoids.len() < k {
        let mut best = (usize::MAX, f64::INFINITY);
        for c in (0..n).filter(|&c| !is_medoid[c]) {
            let delta: f64 = (0..n).map(|o| (d.get(o, c) - dn[o]).min(0.0)).sum();
            if delta < best.1 {
                best = (c, delta);
            }
        }
        let c = best.0;
        medoids.push(c);
        is_medoid[c] = true;
        for (o, dist) in dn.iter_mut().enumerate() {
            *dist = dist.min(d.get(o, c));
        }
    }
    medoids
}

/// PAM over a precomputed dissimilarity matrix. `seed` is recorded only; the
/// algorithm is deterministic.
pub fn pam(
    dissim: &DissimilarityMatrix,
    doc_ids: &[String],
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<PamOutput> {
    let n = dissim.len();
    check_k(k, n)?;
    let mut medoids = build(dissim, k);
    let mut is_medoid = vec![false; n];
    for &m in &medoids {
        is_medoid[m] = true;
    }
    let mut near = nearest(dissim, &medoids);
    let mut cost_history = vec![near.d1.iter().sum::<f64>()];
    let mut iterations = 0;

    while iterations < max_iter {
        let mut best = (0usize, 0usize, -1e-12);
        for c in (0..n).filter(|&c| !is_medoid[c]) {
            let mut delta = vec![0.0; k];
            let mut shared = 0.0;
            for o in 0..n {
                let doc = dissim.get(o, c);
                let gain = (doc - near.d1[o]).min(0.0);
                shared += gain;
                // Removing o's own medoid: o moves to c or to its second medoid.
                delta[near.first[o]] += doc.min(near.d2[o]) - near.d1[o] - gain;
            }
            for (mi, dm) in delta.iter().enumerate() {
                let total = shared + dm;
                if total < best.2 {
                    best = (c, mi, total);
                }
            }
        }
        if best.2 >= -1e-12 {
            break;
        }
        iterations += 1;
        let (c, mi, _) = best;
        is_medoid[medoids[mi]] = false;
        is_medoid[c] = true;
        medoids[mi] = c;
        near = nearest(dissim, &medoids);
        cost_history.push(near.d1.iter().sum());
    }

    let raw: Vec<usize> = near.first.clone();
    let clustering = Clustering::new(doc_ids.to_vec(), raw.clone(), k, Algorithm::Pam, seed, iterations);
    // Reorder medoids to match canonical labels.
    let mut ordered = vec![usize::MAX; k];
    for (o, &l) in clustering.labels.iter().enumerate() {
        ordered[l] = medoids[raw[o]];
    }
    ordered.retain(|&m| m != usize::MAX);
    Ok(PamOutput {
        clustering,
        medoids: ordered,
        cost_history,
    })
}
