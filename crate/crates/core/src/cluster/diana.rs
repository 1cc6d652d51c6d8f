//! Divisive analysis (DIANA) with the splinter-group procedure.

use serde::{Deserialize, Serialize};

use super::{check_k, Algorithm, Clustering};
use crate::error::Result;
use crate::vectorize::DissimilarityMatrix;

/// One division: `cluster` (sorted members before the split) lost `splinter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStep {
    pub cluster: Vec<usize>,
    pub splinter: Vec<usize>,
    pub diameter: f64,
}

fn diameter(d: &DissimilarityMatrix, members: &[usize]) -> f64 {
    let mut best = 0.0f64;
    for (x, &i) in members.iter().enumerate() {
        for &j in &members[x + 1..] {
            best = best.max(d.get(i, j));
        }
    }
    best
}

/// Splits `members` into (remainder, splinter).
fn splinter(d: &DissimilarityMatrix, members: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let s = members.len();
    // Sums of dissimilarity from each member to the remainder and to the splinter group.
    let mut to_rest: Vec<f64> = members
        .iter()
        .map(|&i| members.iter().map(|&j| d.get(i, j)).sum())
        .collect();
    let mut to_splinter = vec![0.0; s];
    let mut in_splinter = vec![false; s];
    let mut rest_size = s;
    let mut splinter_size = 0usize;

    // Seed: largest average dissimilarity to the others.
    let mut seed = 0;
    for x in 1..s {
        if to_rest[x] > to_rest[seed] {
            seed = x;
        }
    }
    let mut moving = Some(seed);
    while let Some(m) = moving {
        in_splinter[m] = true;
        rest_size -= 1;
        splinter_size += 1;
        for y in 0..s {
            let dy = d.get(members[y], members[m]);
            to_rest[y] -= dy;
            to_splinter[y] += dy;
        }
        if rest_size <= 1 {
            break;
        }
        moving = None;
        let mut best = 0.0;
        for y in (0..s).filter(|&y| !in_splinter[y]) {
            let avg_rest = to_rest[y] / (rest_size - 1) as f64;
            let avg_splinter = to_splinter[y] / splinter_size as f64;
            let gap = avg_rest - avg_splinter;
            if gap > best {
                best = gap;
                moving = Some(y);
            }
        }
    }
    let rest = (0..s).filter(|&x| !in_splinter[x]).map(|x| members[x]).collect();
    let spl = (0..s).filter(|&x| in_splinter[x]).map(|x| members[x]).collect();
    (rest, spl)
}

/// DIANA stopped at exactly `k` clusters, with the sequence of splits.
pub fn diana_with_splits(
    dissim: &DissimilarityMatrix,
    doc_ids: &[String],
    k: usize,
) -> Result<(Clustering, Vec<SplitStep>)> {
    let n = dissim.len();
    check_k(k, n)?;
    let mut clusters: Vec<(Vec<usize>, f64)> = vec![{
        let all: Vec<usize> = (0..n).collect();
        let diam = diameter(dissim, &all);
        (all, diam)
    }];
    let mut steps = Vec::new();
    while clusters.len() < k {
        // Largest diameter; ties go to the cluster holding the smallest index.
        let pick = (0..clusters.len())
            .filter(|&c| clusters[c].0.len() > 1)
            .max_by(|&a, &b| {
                clusters[a]
                    .1
                    .total_cmp(&clusters[b].1)
                    .then(clusters[b].0[0].cmp(&clusters[a].0[0]))
            })
            .expect("k <= n leaves a divisible cluster");
        let (members, diam) = clusters.swap_remove(pick);
        let (rest, spl) = splinter(dissim, &members);
        steps.push(SplitStep {
            cluster: members,
            splinter: spl.clone(),
            diameter: diam,
        });
        let rd = diameter(dissim, &rest);
        let sd = diameter(dissim, &spl);
        clusters.push((rest, rd));
        clusters.push((spl, sd));
    }
    let mut labels = vec![0; n];
    for (c, (members, _)) in clusters.iter().enumerate() {
        for &i in members {
            labels[i] = c;
        }
    }
    let clustering = Clustering::new(doc_ids.to_vec(), labels, k, Algorithm::Diana, 0, steps.len());
    Ok((clustering, steps))
}

pub fn diana(dissim: &DissimilarityMatrix, doc_ids: &[String], k: usize) -> Result<Clustering> {
    Ok(diana_with_splits(dissim, doc_ids, k)?.0)
}
