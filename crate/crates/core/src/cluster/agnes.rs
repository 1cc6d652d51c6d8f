//! Agglomerative nesting with Lance-Williams linkage updates.
//!
//! Merges are found with the nearest-neighbor chain algorithm, which is exact
//! for reducible linkages (single, complete, average) and runs in O(n^2)
//! time. The chain discovers merges out of height order, so they are sorted
//! afterwards and replayed through a union-find to assign node ids.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{check_k, Algorithm, Clustering};
use crate::error::{Error, Result};
use crate::vectorize::DissimilarityMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Complete,
    /// Unweighted pair-group average (UPGMA).
    #[default]
    Average,
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" | "upgma" => Ok(Linkage::Average),
            other => Err(Error::invalid(format!("unknown linkage {other:?}"))),
        }
    }
}

/// One merge step. Nodes `0..n` are leaves; merge `i` creates node `n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    /// Sorted by non-decreasing height.
    pub merges: Vec<Merge>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

impl Dendrogram {
    /// Labels obtained by applying the first `n - k` merges.
    pub fn cut(&self, k: usize) -> Vec<usize> {
        let n = self.n;
        let mut uf = UnionFind::new(2 * n);
        for (i, m) in self.merges.iter().take(n.saturating_sub(k)).enumerate() {
            let node = n + i;
            uf.parent[m.left] = node;
            uf.parent[m.right] = node;
        }
        (0..n).map(|leaf| uf.find(leaf)).collect()
    }
}

struct Working {
    n: usize,
    d: Vec<f64>,
}

impl Working {
    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[self.at(i, j)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let at = self.at(i, j);
        self.d[at] = v;
    }
}

fn nn_chain(dissim: &DissimilarityMatrix, linkage: Linkage) -> Vec<(usize, usize, f64)> {
    let n = dissim.len();
    let mut w = Working {
        n,
        d: dissim.condensed().to_vec(),
    };
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut raw = Vec::with_capacity(n.saturating_sub(1));
    let mut chain: Vec<usize> = Vec::with_capacity(n);

    for _ in 1..n {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).unwrap());
        }
        let (a, b) = loop {
            let a = *chain.last().unwrap();
            let prev = if chain.len() >= 2 {
                Some(chain[chain.len() - 2])
            } else {
                None
            };
            // Prefer the previous chain element on ties so the chain terminates.
            let mut best = match prev {
                Some(p) => (p, w.get(a, p)),
                None => (usize::MAX, f64::INFINITY),
            };
            for (x, &alive) in active.iter().enumerate() {
                if x != a && alive {
                    let dx = w.get(a, x);
                    if dx < best.1 {
                        best = (x, dx);
                    }
                }
            }
            if Some(best.0) == prev {
                chain.pop();
                chain.pop();
                break (a, best.0);
            }
            chain.push(best.0);
        };

        let height = w.get(a, b);
        let (keep, drop) = if a < b { (a, b) } else { (b, a) };
        raw.push((keep, drop, height));
        let (sa, sb) = (size[keep] as f64, size[drop] as f64);
        for (x, &alive) in active.iter().enumerate() {
            if !alive || x == keep || x == drop {
                continue;
            }
            let (dk, dd) = (w.get(keep, x), w.get(drop, x));
            let v = match linkage {
                Linkage::Single => dk.min(dd),
                Linkage::Complete => dk.max(dd),
                Linkage::Average => (sa * dk + sb * dd) / (sa + sb),
            };
            w.set(keep, x, v);
        }
        active[drop] = false;
        size[keep] += size[drop];
        // A chain element that referred to `drop` now lives in `keep`.
        for c in chain.iter_mut() {
            if *c == drop {
                *c = keep;
            }
        }
        chain.dedup();
    }
    raw
}

fn build_dendrogram(n: usize, mut raw: Vec<(usize, usize, f64)>) -> Dendrogram {
    raw.sort_by(|x, y| x.2.total_cmp(&y.2));
    let mut uf = UnionFind::new(2 * n);
    let mut size = vec![1usize; 2 * n];
    let mut merges = Vec::with_capacity(raw.len());
    for (i, (a, b, h)) in raw.into_iter().enumerate() {
        let (ra, rb) = (uf.find(a), uf.find(b));
        let (left, right) = if ra < rb { (ra, rb) } else { (rb, ra) };
        let node = n + i;
        size[node] = size[left] + size[right];
        uf.parent[left] = node;
        uf.parent[right] = node;
        merges.push(Merge {
            left,
            right,
            height: h,
            size: size[node],
        });
    }
    Dendrogram { n, merges }
}

/// Average-linkage AGNES cut to exactly `k` clusters.
pub fn agnes(dissim: &DissimilarityMatrix, doc_ids: &[String], k: usize) -> Result<(Clustering, Dendrogram)> {
    agnes_with(dissim, doc_ids, k, Linkage::Average)
}

pub fn agnes_with(
    dissim: &DissimilarityMatrix,
    doc_ids: &[String],
    k: usize,
    linkage: Linkage,
) -> Result<(Clustering, Dendrogram)> {
    let n = dissim.len();
    check_k(k, n)?;
    let dendrogram = build_dendrogram(n, nn_chain(dissim, linkage));
    let labels = dendrogram.cut(k);
    let clustering = Clustering::new(doc_ids.to_vec(), labels, k, Algorithm::Agnes, 0, n - k);
    Ok((clustering, dendrogram))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    /// Textbook agglomeration: recompute average linkage between current
    /// clusters from the raw matrix at every step.
    fn naive_average(d: &[Vec<f64>]) -> Vec<(Vec<usize>, f64)> {
        let mut clusters: Vec<Vec<usize>> = (0..d.len()).map(|i| vec![i]).collect();
        let mut out = Vec::new();
        while clusters.len() > 1 {
            let mut best = (0, 0, f64::INFINITY);
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let mut s = 0.0;
                    for &i in &clusters[a] {
                        for &j in &clusters[b] {
                            s += d[i][j];
                        }
                    }
                    let avg = s / (clusters[a].len() * clusters[b].len()) as f64;
                    if avg < best.2 {
                        best = (a, b, avg);
                    }
                }
            }
            let removed = clusters.remove(best.1);
            clusters[best.0].extend(removed);
            let mut merged = clusters[best.0].clone();
            merged.sort();
            out.push((merged, best.2));
        }
        out
    }

    fn hand_matrix() -> Vec<Vec<f64>> {
        vec![
            vec![0.0, 0.10, 0.60, 0.90, 0.85],
            vec![0.10, 0.0, 0.50, 0.80, 0.95],
            vec![0.60, 0.50, 0.0, 0.45, 0.70],
            vec![0.90, 0.80, 0.45, 0.0, 0.20],
            vec![0.85, 0.95, 0.70, 0.20, 0.0],
        ]
    }

    fn members(dend: &Dendrogram, step: usize) -> Vec<usize> {
        let n = dend.n;
        let mut stack = vec![n + step];
        let mut out = Vec::new();
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                let m = dend.merges[x - n];
                stack.push(m.left);
                stack.push(m.right);
            }
        }
        out.sort();
        out
    }

    #[test]
    fn merge_trace_matches_hand_average_linkage() {
        let sq = hand_matrix();
        // Hand trace: {0,1}@0.10, {3,4}@0.20, {0,1,2}@(0.60+0.50)/2=0.55
        // (beats {2,3,4}@0.575), then all @ (0.90+0.85+0.80+0.95+0.45+0.70)/6.
        let d = DissimilarityMatrix::from_square(&sq).unwrap();
        let (_, dend) = agnes(&d, &ids(5), 1).unwrap();
        let expected = naive_average(&sq);
        assert_eq!(dend.merges.len(), 4);
        for (step, (set, h)) in expected.iter().enumerate() {
            assert_eq!(&members(&dend, step), set);
            assert!((dend.merges[step].height - h).abs() < 1e-12);
        }
        assert_eq!(members(&dend, 2), [0, 1, 2]);
        assert!((dend.merges[2].height - 0.55).abs() < 1e-12);
        assert!((dend.merges[3].height - 4.65 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn cut_extremes() {
        let d = DissimilarityMatrix::from_square(&hand_matrix()).unwrap();
        let (c, _) = agnes(&d, &ids(5), 5).unwrap();
        assert_eq!(c.labels, [0, 1, 2, 3, 4]);
        let (c, _) = agnes(&d, &ids(5), 1).unwrap();
        assert_eq!(c.labels, [0; 5]);
        let (c, _) = agnes(&d, &ids(5), 2).unwrap();
        assert_eq!(c.labels, [0, 0, 0, 1, 1]);
    }

    #[test]
    fn heights_non_decreasing_and_match_naive_on_random_points() {
        for s in 0..5u64 {
            let pts: Vec<(f64, f64)> = (0..30)
                .map(|i| {
                    let a = crate::seed::splitmix64(s * 1000 + i) as f64 / u64::MAX as f64;
                    let b = crate::seed::splitmix64(s * 1000 + i + 500) as f64 / u64::MAX as f64;
                    (a, b)
                })
                .collect();
            let sq: Vec<Vec<f64>> = pts
                .iter()
                .map(|p| {
                    pts.iter()
                        .map(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt())
                        .collect()
                })
                .collect();
            let d = DissimilarityMatrix::from_square(&sq).unwrap();
            let (_, dend) = agnes(&d, &ids(30), 1).unwrap();
            assert!(dend.merges.windows(2).all(|w| w[0].height <= w[1].height));
            let naive = naive_average(&sq);
            for (step, (set, h)) in naive.iter().enumerate() {
                assert!((dend.merges[step].height - h).abs() < 1e-9);
                assert_eq!(&members(&dend, step), set);
            }
        }
    }

    #[test]
    fn single_and_complete_linkage() {
        let d = DissimilarityMatrix::from_square(&hand_matrix()).unwrap();
        let (_, single) = agnes_with(&d, &ids(5), 1, Linkage::Single).unwrap();
        let hs: Vec<f64> = single.merges.iter().map(|m| m.height).collect();
        assert_eq!(hs, [0.10, 0.20, 0.45, 0.50]);
        let (_, complete) = agnes_with(&d, &ids(5), 1, Linkage::Complete).unwrap();
        let hs: Vec<f64> = complete.merges.iter().map(|m| m.height).collect();
        assert_eq!(hs, [0.10, 0.20, 0.60, 0.95]);
    }
}
