//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling, used as a
//! hard clusterer: each document goes to its most probable topic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_k, Algorithm, Clustering};
use crate::error::{Error, Result};
use crate::seed;
use crate::vectorize::{DocTermMatrix, Weighting};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub topics: usize,
    /// Defaults to `50 / topics` when `None`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl LdaConfig {
    pub fn new(topics: usize, seed: u64) -> Self {
        LdaConfig {
            topics,
            alpha: None,
            beta: 0.01,
            iterations: 1000,
            burn_in: 200,
            seed,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.topics as f64)
    }
}

#[derive(Debug, Clone)]
pub struct LdaModel {
    /// Per-document topic proportions (rows sum to 1).
    pub theta: Vec<Vec<f64>>,
    /// Per-topic term distributions (rows sum to 1).
    pub phi: Vec<Vec<f64>>,
}

pub fn lda_cluster(counts: &DocTermMatrix, config: &LdaConfig) -> Result<(Clustering, LdaModel)> {
    if counts.weighting != Weighting::Counts {
        return Err(Error::invalid("LDA expects a counts matrix"));
    }
    let k = config.topics;
    let n_docs = counts.n_rows();
    check_k(k, n_docs)?;
    if config.beta <= 0.0 || config.alpha() <= 0.0 {
        return Err(Error::invalid("LDA hyperparameters must be positive"));
    }
    if config.burn_in > config.iterations {
        return Err(Error::invalid("burn-in exceeds the number of iterations"));
    }
    let v = counts.n_terms;
    let alpha = config.alpha();
    let beta = config.beta;
    let vbeta = v as f64 * beta;
    let mut rng = seed::rng(config.seed);

    // Token streams with random initial topics.
    let docs: Vec<Vec<u32>> = counts
        .rows
        .iter()
        .map(|r| {
            r.iter()
                .flat_map(|(t, c)| std::iter::repeat_n(t, c.round() as usize))
                .collect()
        })
        .collect();
    let mut z: Vec<Vec<usize>> = Vec::with_capacity(n_docs);
    let mut n_dk = vec![vec![0u32; k]; n_docs];
    let mut n_kw = vec![vec![0u32; v]; k];
    let mut n_k = vec![0u32; k];
    for (d, tokens) in docs.iter().enumerate() {
        let zd: Vec<usize> = tokens
            .iter()
            .map(|&w| {
                let t = rng.random_range(0..k);
                n_dk[d][t] += 1;
                n_kw[t][w as usize] += 1;
                n_k[t] += 1;
                t
            })
            .collect();
        z.push(zd);
    }

    let mut p = vec![0.0; k];
    for _ in 0..config.iterations {
        for (d, tokens) in docs.iter().enumerate() {
            for (pos, &w) in tokens.iter().enumerate() {
                let w = w as usize;
                let old = z[d][pos];
                n_dk[d][old] -= 1;
                n_kw[old][w] -= 1;
                n_k[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    total += (n_dk[d][t] as f64 + alpha) * (n_kw[t][w] as f64 + beta) / (n_k[t] as f64 + vbeta);
                    p[t] = total;
                }
                let u = rng.random::<f64>() * total;
                let new = p.iter().position(|&c| u < c).unwrap_or(k - 1);

                z[d][pos] = new;
                n_dk[d][new] += 1;
                n_kw[new][w] += 1;
                n_k[new] += 1;
            }
        }
    }

    let theta: Vec<Vec<f64>> = n_dk
        .iter()
        .zip(&docs)
        .map(|(row, tokens)| {
            let denom = tokens.len() as f64 + k as f64 * alpha;
            row.iter().map(|&c| (c as f64 + alpha) / denom).collect()
        })
        .collect();
    let phi: Vec<Vec<f64>> = n_kw
        .iter()
        .zip(&n_k)
        .map(|(row, &nk)| {
            let denom = nk as f64 + vbeta;
            row.iter().map(|&c| (c as f64 + beta) / denom).collect()
        })
        .collect();

    let labels: Vec<usize> = theta
        .iter()
        .zip(&docs)
        .map(|(row, tokens)| {
            if tokens.is_empty() {
                // No evidence: draw the topic from the symmetric prior.
                rng.random_range(0..k)
            } else {
                argmax(row)
            }
        })
        .collect();

    let clustering = Clustering::new(
        counts.doc_ids.clone(),
        labels,
        k,
        Algorithm::Lda,
        config.seed,
        config.iterations,
    );
    Ok((clustering, LdaModel { theta, phi }))
}

/// First index of the maximum.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..xs.len() {
        if xs[i] > xs[best] {
            best = i;
        }
    }
    best
}
