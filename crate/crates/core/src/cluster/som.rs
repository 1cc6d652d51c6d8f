//! Self-organizing map followed by K-Means over the codebook (SOM-KM).

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::spherical_kmeans;
use super::{check_k, Algorithm, Clustering};
use crate::error::{Error, Result};
use crate::seed;
use crate::vectorize::{DocTermMatrix, SparseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SomMode {
    #[default]
    Batch,
    Online,
}

impl FromStr for SomMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch" => Ok(SomMode::Batch),
            "online" => Ok(SomMode::Online),
            other => Err(Error::invalid(format!("unknown SOM mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomConfig {
    pub width: usize,
    pub height: usize,
    pub epochs: usize,
    /// Initial learning rate (online mode).
    pub learning_rate: f64,
    /// Initial neighborhood radius in grid units.
    pub radius: f64,
    pub mode: SomMode,
    pub seed: u64,
    /// Iteration cap for the codebook K-Means.
    pub kmeans_max_iter: usize,
}

/// `ceil(sqrt(5 * sqrt(n)))`, capped at 20.
pub fn default_grid_side(n: usize) -> usize {
    ((5.0 * (n as f64).sqrt()).sqrt().ceil() as usize).clamp(1, 20)
}

impl SomConfig {
    /// Default square grid for `n` documents, widened to hold `k` cells if needed.
    pub fn for_documents(n: usize, k: usize, seed: u64) -> Self {
        let side = default_grid_side(n).max((k as f64).sqrt().ceil() as usize);
        SomConfig {
            width: side,
            height: side,
            epochs: 100,
            learning_rate: 0.5,
            radius: (side as f64 / 2.0).max(1.0),
            mode: SomMode::Batch,
            seed,
            kmeans_max_iter: 100,
        }
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }
}

struct Map {
    width: usize,
    dim: usize,
    w: Vec<Vec<f64>>,
}

impl Map {
    fn grid_dist2(&self, a: usize, b: usize) -> f64 {
        let (ax, ay) = ((a % self.width) as f64, (a / self.width) as f64);
        let (bx, by) = ((b % self.width) as f64, (b / self.width) as f64);
        (ax - bx).powi(2) + (ay - by).powi(2)
    }

    fn bmu(&self, x: &SparseVector, sq_norms: &[f64]) -> usize {
        // ||w - x||^2 = ||w||^2 - 2 w.x + ||x||^2; the last term is constant.
        let mut best = (0, f64::INFINITY);
        for (c, w) in self.w.iter().enumerate() {
            let d = sq_norms[c] - 2.0 * x.dot_dense(w);
            if d < best.1 {
                best = (c, d);
            }
        }
        best.0
    }

    fn sq_norms(&self) -> Vec<f64> {
        self.w.iter().map(|w| w.iter().map(|v| v * v).sum()).collect()
    }
}

fn decay(start: f64, end: f64, frac: f64) -> f64 {
    start + (end - start) * frac
}

const FINAL_RADIUS: f64 = 0.5;

fn train_batch(map: &mut Map, rows: &[SparseVector], cfg: &SomConfig) {
    let cells = map.w.len();
    for epoch in 0..cfg.epochs {
        let frac = if cfg.epochs > 1 {
            epoch as f64 / (cfg.epochs - 1) as f64
        } else {
            1.0
        };
        let r = decay(cfg.radius, FINAL_RADIUS, frac);
        let norms = map.sq_norms();
        let bmus: Vec<usize> = rows.par_iter().map(|x| map.bmu(x, &norms)).collect();

        let mut sums = vec![vec![0.0; map.dim]; cells];
        let mut hits = vec![0.0; cells];
        for (x, &b) in rows.iter().zip(&bmus) {
            hits[b] += 1.0;
            for (i, v) in x.iter() {
                sums[b][i as usize] += v;
            }
        }
        let occupied: Vec<usize> = (0..cells).filter(|&c| hits[c] > 0.0).collect();
        let new_w: Vec<Vec<f64>> = (0..cells)
            .into_par_iter()
            .map(|c| {
                let mut num = vec![0.0; map.dim];
                let mut den = 0.0;
                for &j in &occupied {
                    let h = (-map.grid_dist2(c, j) / (2.0 * r * r)).exp();
                    if h < 1e-6 {
                        continue;
                    }
                    den += h * hits[j];
                    for (n, s) in num.iter_mut().zip(&sums[j]) {
                        *n += h * s;
                    }
                }
                if den > 0.0 {
                    num.iter_mut().for_each(|v| *v /= den);
                    num
                } else {
                    map.w[c].clone()
                }
            })
            .collect();
        map.w = new_w;
    }
}

fn train_online(map: &mut Map, rows: &[SparseVector], cfg: &SomConfig, rng: &mut impl Rng) {
    let cells = map.w.len();
    let total = (cfg.epochs * rows.len()).max(1);
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut norms = map.sq_norms();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for &i in &order {
            let frac = step as f64 / total as f64;
            let lr = cfg.learning_rate * (1.0 - frac);
            let r = decay(cfg.radius, FINAL_RADIUS, frac);
            let x = &rows[i];
            let b = map.bmu(x, &norms);
            let dist2: Vec<f64> = (0..cells).map(|c| map.grid_dist2(c, b)).collect();
            for ((w, norm), d2) in map.w.iter_mut().zip(norms.iter_mut()).zip(dist2) {
                let h = (-d2 / (2.0 * r * r)).exp();
                if h < 1e-6 {
                    continue;
                }
                let a = lr * h;
                w.iter_mut().for_each(|v| *v *= 1.0 - a);
                for (t, v) in x.iter() {
                    w[t as usize] += a * v;
                }
                *norm = w.iter().map(|v| v * v).sum();
            }
            step += 1;
        }
    }
}

/// Trains a rectangular SOM on L2-normalized rows, clusters the codebook
/// with spherical K-Means, and gives each document its BMU's cluster.
///
/// K-Means runs over the cells that won at least one document when there are
/// at least `k` of them, otherwise over the whole codebook.
pub fn som_km(matrix: &DocTermMatrix, k: usize, config: &SomConfig) -> Result<Clustering> {
    Ok(som_km_with_bmus(matrix, k, config)?.0)
}

/// As [`som_km`], also returning each document's best-matching cell.
pub fn som_km_with_bmus(matrix: &DocTermMatrix, k: usize, config: &SomConfig) -> Result<(Clustering, Vec<usize>)> {
    let n = matrix.n_rows();
    check_k(k, n)?;
    if config.cells() < k {
        return Err(Error::GridTooSmall {
            cells: config.cells(),
            k,
        });
    }
    let mut rng = seed::rng(config.seed);
    let rows: Vec<SparseVector> = matrix.rows.iter().map(SparseVector::normalized).collect();
    let dim = matrix.n_terms;
    let cells = config.cells();

    let w = (0..cells)
        .map(|_| {
            let x = &rows[rng.random_range(0..n)];
            let mut v = vec![0.0; dim];
            for (i, val) in x.iter() {
                v[i as usize] = val;
            }
            v
        })
        .collect();
    let mut map = Map {
        width: config.width,
        dim,
        w,
    };
    match config.mode {
        SomMode::Batch => train_batch(&mut map, &rows, config),
        SomMode::Online => train_online(&mut map, &rows, config, &mut rng),
    }

    let norms = map.sq_norms();
    let bmus: Vec<usize> = rows.par_iter().map(|x| map.bmu(x, &norms)).collect();
    let mut hit: Vec<usize> = bmus.clone();
    hit.sort_unstable();
    hit.dedup();
    let pool: Vec<usize> = if hit.len() >= k { hit } else { (0..cells).collect() };
    let codebook: Vec<SparseVector> = pool.iter().map(|&c| SparseVector::from_dense(&map.w[c])).collect();
    let km = spherical_kmeans(&codebook, k, &mut rng, config.kmeans_max_iter)?;
    let mut cell_label = vec![usize::MAX; cells];
    for (&c, &l) in pool.iter().zip(&km.labels) {
        cell_label[c] = l;
    }
    let labels: Vec<usize> = bmus.iter().map(|&b| cell_label[b]).collect();
    let clustering = Clustering::new(
        matrix.doc_ids.clone(),
        labels,
        k,
        Algorithm::SomKm,
        config.seed,
        config.epochs,
    );
    Ok((clustering, bmus))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{adjusted_rand_index, same_partition};
    use crate::vectorize::Weighting;

    fn matrix(rows: Vec<Vec<f64>>) -> DocTermMatrix {
        DocTermMatrix {
            doc_ids: (0..rows.len()).map(|i| format!("d{i}")).collect(),
            n_terms: rows[0].len(),
            rows: rows.iter().map(|r| SparseVector::from_dense(r)).collect(),
            weighting: Weighting::Tfidf,
        }
    }

    fn planted(topics: usize, per: usize, seed: u64) -> (DocTermMatrix, Vec<usize>) {
        let mut rng = crate::seed::rng(seed);
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for i in 0..topics * per {
            let t = i % topics;
            let mut r = vec![0.0; topics * 8];
            for _ in 0..20 {
                r[t * 8 + rng.random_range(0..8)] += 1.0;
            }
            rows.push(r);
            truth.push(t);
        }
        (matrix(rows), truth)
    }

    #[test]
    fn grid_side_heuristic() {
        assert_eq!(default_grid_side(1), 3);
        assert_eq!(default_grid_side(100), 8);
        assert_eq!(default_grid_side(10025), 20);
        assert_eq!(SomConfig::for_documents(4, 30, 0).cells(), 36);
    }

    #[test]
    fn grid_smaller_than_k_errors() {
        let (m, _) = planted(2, 5, 0);
        let cfg = SomConfig {
            width: 1,
            height: 2,
            ..SomConfig::for_documents(10, 3, 0)
        };
        assert!(matches!(
            som_km(&m, 3, &cfg),
            Err(Error::GridTooSmall { cells: 2, k: 3 })
        ));
    }

    #[test]
    fn identical_documents_collapse() {
        let m = matrix(vec![vec![1.0, 2.0, 0.0]; 12]);
        let c = som_km(&m, 3, &SomConfig::for_documents(12, 3, 5)).unwrap();
        assert_eq!(c.non_empty_clusters(), 1);
    }

    #[test]
    fn planted_three_topics_on_four_by_four() {
        for mode in [SomMode::Batch, SomMode::Online] {
            let (m, truth) = planted(3, 15, 21);
            let cfg = SomConfig {
                width: 4,
                height: 4,
                radius: 2.0,
                mode,
                ..SomConfig::for_documents(45, 3, 8)
            };
            let c = som_km(&m, 3, &cfg).unwrap();
            assert!(adjusted_rand_index(&c.labels, &truth) >= 0.8, "{mode:?}");
        }
    }

    #[test]
    fn k_equal_to_cells_refines_bmu_partition() {
        let (m, _) = planted(2, 6, 3);
        let cfg = SomConfig {
            width: 2,
            height: 2,
            radius: 1.0,
            ..SomConfig::for_documents(12, 4, 1)
        };
        let (c, bmus) = som_km_with_bmus(&m, 4, &cfg).unwrap();
        let mut cells = bmus.clone();
        cells.sort();
        cells.dedup();
        if cells.len() == 4 {
            assert!(same_partition(&c.labels, &bmus));
        }
        // Documents sharing a cell always share a cluster.
        for i in 0..bmus.len() {
            for j in 0..bmus.len() {
                if bmus[i] == bmus[j] {
                    assert_eq!(c.labels[i], c.labels[j]);
                }
            }
        }
    }
}
