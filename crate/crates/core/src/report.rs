//! Diagnostic artifacts: cluster-versus-group contingency matrices, top
//! terms per subprofile, and profile-size distributions.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::Clustering;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::profiles::{ProfileSet, Subprofile};
use crate::textprep::{Pipeline, Vocabulary};
use crate::vectorize::{term_bag, TermBag};

/// Rows are groups, columns cluster labels; each cell is the fraction of the
/// row group's documents assigned to that cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyMatrix {
    pub groups: Vec<String>,
    pub clusters: Vec<usize>,
    pub cells: Vec<Vec<f64>>,
}

impl ContingencyMatrix {
    /// True when every row and every column holds exactly one 1 and zeros
    /// elsewhere.
    pub fn is_permutation(&self) -> bool {
        if self.groups.len() != self.clusters.len() {
            return false;
        }
        let one_hot = |xs: &mut dyn Iterator<Item = f64>| {
            let v: Vec<f64> = xs.collect();
            v.iter().filter(|&&x| x == 1.0).count() == 1 && v.iter().all(|&x| x == 0.0 || x == 1.0)
        };
        (0..self.groups.len()).all(|r| one_hot(&mut self.cells[r].iter().copied()))
            && (0..self.clusters.len()).all(|c| one_hot(&mut self.cells.iter().map(|row| row[c])))
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        write!(w, "group")?;
        for c in &self.clusters {
            write!(w, ",c{c}")?;
        }
        writeln!(w)?;
        for (g, row) in self.groups.iter().zip(&self.cells) {
            write!(w, "{g}")?;
            for v in row {
                write!(w, ",{v:.4}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Cross-tabulates clusters against group ids. Documents without a group are
/// left out; rows are sorted by group id, columns by label.
pub fn contingency(clustering: &Clustering, corpus: &Corpus) -> Result<ContingencyMatrix> {
    let assignment = clustering.assignment();
    let mut counts: BTreeMap<&str, BTreeMap<usize, usize>> = BTreeMap::new();
    for d in corpus.documents() {
        let label = *assignment
            .get(d.doc_id.as_str())
            .ok_or_else(|| Error::invalid(format!("document {:?} is not clustered", d.doc_id)))?;
        if let Some(g) = &d.group_id {
            *counts.entry(g).or_default().entry(label).or_default() += 1;
        }
    }
    let clusters: Vec<usize> = (0..clustering.non_empty_clusters()).collect();
    let cells = counts
        .values()
        .map(|row| {
            let total: usize = row.values().sum();
            clusters
                .iter()
                .map(|c| row.get(c).copied().unwrap_or(0) as f64 / total as f64)
                .collect()
        })
        .collect();
    Ok(ContingencyMatrix {
        groups: counts.keys().map(|g| g.to_string()).collect(),
        clusters,
        cells,
    })
}

/// Document frequencies with subprofile macro-documents as the units.
#[derive(Debug, Clone, PartialEq)]
pub struct SubprofileTermStats {
    bags: HashMap<String, TermBag>,
    df: Vec<u32>,
    n: usize,
}

impl SubprofileTermStats {
    pub fn new(profiles: &ProfileSet, vocab: &Vocabulary, pipeline: &Pipeline<'_>) -> Self {
        let mut df = vec![0u32; vocab.len()];
        let mut bags = HashMap::new();
        for s in &profiles.subprofiles {
            let bag = term_bag(&s.macro_text, pipeline, vocab);
            for &(t, _) in &bag {
                df[t as usize] += 1;
            }
            bags.insert(s.subprofile_id.clone(), bag);
        }
        SubprofileTermStats {
            bags,
            df,
            n: profiles.len(),
        }
    }

    pub fn bag(&self, subprofile_id: &str) -> Option<&TermBag> {
        self.bags.get(subprofile_id)
    }
}

/// The `n` terms of a subprofile with the highest `tf * ln(N / df)`, where
/// `N` and `df` count subprofiles. Ties go to the lexicographically smaller
/// term. Every term of the macro-document is eligible, including those with
/// zero weight.
pub fn top_terms(
    subprofile: &Subprofile,
    stats: &SubprofileTermStats,
    vocab: &Vocabulary,
    n: usize,
) -> Result<Vec<(String, f64)>> {
    if n == 0 {
        return Err(Error::invalid("top-n must be at least 1"));
    }
    let bag = stats
        .bag(&subprofile.subprofile_id)
        .ok_or_else(|| Error::DanglingSubprofile(subprofile.subprofile_id.clone()))?;
    let mut weighted: Vec<(String, f64)> = bag
        .iter()
        .map(|&(t, tf)| {
            let idf = (stats.n as f64 / stats.df[t as usize] as f64).ln();
            (vocab.term(t).to_string(), tf as f64 * idf)
        })
        .collect();
    weighted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    weighted.truncate(n);
    Ok(weighted)
}

/// How a subprofile's size is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeMeasure {
    /// Vocabulary term occurrences.
    #[default]
    Tokens,
    /// Distinct vocabulary terms.
    DistinctTerms,
}

impl FromStr for SizeMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tokens" => Ok(SizeMeasure::Tokens),
            "distinct_terms" | "terms" => Ok(SizeMeasure::DistinctTerms),
            other => Err(Error::invalid(format!("unknown size measure {other:?}"))),
        }
    }
}

/// For each expert, each subprofile's share of the expert's total size.
/// Shares sum to 1 per expert; an expert with no vocabulary terms at all
/// gets equal shares.
pub fn profile_size_distribution(
    profiles: &ProfileSet,
    stats: &SubprofileTermStats,
    measure: SizeMeasure,
) -> BTreeMap<String, Vec<(String, f64)>> {
    let mut out = BTreeMap::new();
    for (expert, subs) in profiles.by_expert() {
        let sizes: Vec<f64> = subs
            .iter()
            .map(|s| {
                let bag = stats.bag(&s.subprofile_id).map(Vec::as_slice).unwrap_or(&[]);
                match measure {
                    SizeMeasure::Tokens => bag.iter().map(|p| p.1 as f64).sum(),
                    SizeMeasure::DistinctTerms => bag.len() as f64,
                }
            })
            .collect();
        let total: f64 = sizes.iter().sum();
        let shares = subs
            .iter()
            .zip(&sizes)
            .map(|(s, &size)| {
                let share = if total > 0.0 {
                    size / total
                } else {
                    1.0 / subs.len() as f64
                };
                (s.subprofile_id.clone(), share)
            })
            .collect();
        out.insert(expert.to_string(), shares);
    }
    out
}

/// Writes `expert_id,subprofile_id,share` rows.
pub fn write_size_distribution_csv(
    dist: &BTreeMap<String, Vec<(String, f64)>>,
    mut w: impl Write,
) -> std::io::Result<()> {
    writeln!(w, "expert_id,subprofile_id,share")?;
    for (expert, shares) in dist {
        for (id, share) in shares {
            writeln!(w, "{expert},{id},{share:.6}")?;
        }
    }
    Ok(())
}

/// Writes `subprofile_id,rank,term,weight` rows.
pub fn write_top_terms_csv(lists: &[(String, Vec<(String, f64)>)], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "subprofile_id,rank,term,weight")?;
    for (id, terms) in lists {
        for (i, (term, weight)) in terms.iter().enumerate() {
            writeln!(w, "{id},{},{term},{weight:.6}", i + 1)?;
        }
    }
    Ok(())
}
