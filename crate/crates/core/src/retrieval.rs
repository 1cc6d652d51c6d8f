//! BM25 over subprofile macro-documents and CombLgDCS expert fusion.
//!
//! Subprofiles are ranked by BM25; an expert's score is then the sum of their
//! ranked subprofiles' scores, each devalued by `log2(rank + 1)`:
//!
//! ```text
//! score(expert, q) = Σ_j s(expert_c_j, q) / log2(rank(expert_c_j, q) + 1)
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::ProfileSet;
use crate::textprep::{Pipeline, TokenPipelineConfig, Vocabulary};
use crate::vectorize::{term_bag, TermBag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`, never negative.
pub fn idf(n: usize, df: usize) -> f64 {
    (1.0 + (n as f64 - df as f64 + 0.5) / (df as f64 + 0.5)).ln()
}

/// Which kind of entity a ranking orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankScope {
    Subprofiles,
    Experts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Entries with non-increasing scores and consecutive ranks from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub scope: RankScope,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    /// Sorts `(id, score)` pairs by score descending, then id ascending, and
    /// keeps at most `cutoff` entries.
    pub fn from_scores(scope: RankScope, mut scored: Vec<(String, f64)>, cutoff: Option<usize>) -> Self {
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if let Some(c) = cutoff {
            scored.truncate(c);
        }
        RankedList {
            scope,
            entries: scored
                .into_iter()
                .enumerate()
                .map(|(i, (id, score))| RankedEntry { id, score, rank: i + 1 })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    /// `query_id Q0 id rank score run_tag` lines.
    pub fn write_trec(&self, query_id: &str, run_tag: &str, mut w: impl Write) -> std::io::Result<()> {
        for e in &self.entries {
            writeln!(w, "{query_id} Q0 {} {} {:.6} {run_tag}", e.id, e.rank, e.score)?;
        }
        Ok(())
    }
}

/// Evaluation task; decides which part of an initiative becomes the query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// The full text is the query.
    Filtering,
    /// The title is the query.
    Recommendation,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Filtering => "filtering",
            Task::Recommendation => "recommendation",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "filtering" => Ok(Task::Filtering),
            "recommendation" => Ok(Task::Recommendation),
            other => Err(Error::invalid(format!("unknown task {other:?}"))),
        }
    }
}

/// A query processed with the index's pipeline and vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub text: String,
    pub terms: TermBag,
    pub task: Task,
}

/// Inverted index over subprofile macro-documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    subprofile_ids: Vec<String>,
    experts: Vec<String>,
    /// Per term: (subprofile, tf), sorted by subprofile.
    postings: Vec<Vec<(u32, u32)>>,
    lengths: Vec<u32>,
    avg_len: f64,
    params: Bm25Params,
    vocab: Vocabulary,
    config: TokenPipelineConfig,
}

impl Index {
    /// Preprocesses every macro-document with `config` and keeps only
    /// vocabulary stems.
    pub fn build(
        profiles: &ProfileSet,
        vocab: &Vocabulary,
        config: &TokenPipelineConfig,
        params: Bm25Params,
    ) -> Result<Index> {
        let pipeline = Pipeline::new(config)?;
        let bags: Vec<TermBag> = {
            use rayon::prelude::*;
            profiles
                .subprofiles
                .par_iter()
                .map(|s| term_bag(&s.macro_text, &pipeline, vocab))
                .collect()
        };
        Self::from_bags(profiles, bags, vocab, config, params)
    }

    /// Builds from precomputed macro-document term bags, one per subprofile.
    pub fn from_bags(
        profiles: &ProfileSet,
        bags: Vec<TermBag>,
        vocab: &Vocabulary,
        config: &TokenPipelineConfig,
        params: Bm25Params,
    ) -> Result<Index> {
        if profiles.is_empty() {
            return Err(Error::invalid("cannot index an empty profile set"));
        }
        if bags.len() != profiles.len() {
            return Err(Error::invalid("one term bag per subprofile is required"));
        }
        let mut postings: Vec<Vec<(u32, u32)>> = vec![Vec::new(); vocab.len()];
        let mut lengths = Vec::with_capacity(bags.len());
        for (s, bag) in bags.iter().enumerate() {
            let mut len = 0u32;
            for &(t, tf) in bag {
                postings[t as usize].push((s as u32, tf));
                len += tf;
            }
            lengths.push(len);
        }
        let avg_len = lengths.iter().map(|&l| l.max(1) as f64).sum::<f64>() / lengths.len() as f64;
        Ok(Index {
            subprofile_ids: profiles.subprofiles.iter().map(|s| s.subprofile_id.clone()).collect(),
            experts: profiles.subprofiles.iter().map(|s| s.expert_id.clone()).collect(),
            postings,
            lengths,
            avg_len,
            params,
            vocab: vocab.clone(),
            config: config.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.subprofile_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subprofile_ids.is_empty()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn config(&self) -> &TokenPipelineConfig {
        &self.config
    }

    /// Document frequency of a term among subprofiles.
    pub fn df(&self, term: u32) -> usize {
        self.postings[term as usize].len()
    }

    pub fn postings(&self, term: u32) -> &[(u32, u32)] {
        &self.postings[term as usize]
    }

    pub fn length(&self, subprofile: usize) -> u32 {
        self.lengths[subprofile]
    }

    pub fn subprofile_id(&self, subprofile: usize) -> &str {
        &self.subprofile_ids[subprofile]
    }

    pub fn expert_of(&self, subprofile: usize) -> &str {
        &self.experts[subprofile]
    }

    /// Processes `text` with the index's own pipeline and vocabulary.
    pub fn query(&self, text: &str, task: Task) -> Result<Query> {
        let pipeline = Pipeline::new(&self.config)?;
        Ok(Query {
            text: text.to_string(),
            terms: term_bag(text, &pipeline, &self.vocab),
            task,
        })
    }

    /// Raw BM25 score per subprofile. A term repeated in the query counts once
    /// per occurrence.
    pub fn scores(&self, terms: &TermBag) -> Vec<f64> {
        let n = self.len();
        let Bm25Params { k1, b } = self.params;
        let mut acc = vec![0.0; n];
        for &(t, qtf) in terms {
            let list = &self.postings[t as usize];
            if list.is_empty() {
                continue;
            }
            let w = idf(n, list.len()) * qtf as f64;
            for &(s, tf) in list {
                let tf = tf as f64;
                let len = self.lengths[s as usize].max(1) as f64;
                acc[s as usize] += w * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / self.avg_len));
            }
        }
        acc
    }

    /// Subprofiles with a positive score, best first.
    pub fn bm25_rank(&self, query: &Query, cutoff: Option<usize>) -> RankedList {
        let scored = self
            .scores(&query.terms)
            .into_iter()
            .enumerate()
            .filter(|&(_, s)| s > 0.0)
            .map(|(i, s)| (self.subprofile_ids[i].clone(), s))
            .collect();
        RankedList::from_scores(RankScope::Subprofiles, scored, cutoff)
    }

    /// BM25 over subprofiles fused into an expert ranking; equivalent to
    /// [`comb_lg_dcs`] applied to the full [`Index::bm25_rank`] output.
    pub fn rank_experts(&self, query: &Query, cutoff: Option<usize>) -> RankedList {
        let mut hits: Vec<(usize, f64)> = self
            .scores(&query.terms)
            .into_iter()
            .enumerate()
            .filter(|&(_, s)| s > 0.0)
            .collect();
        hits.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.subprofile_ids[a.0].cmp(&self.subprofile_ids[b.0]))
        });
        let mut totals: BTreeMap<&str, f64> = BTreeMap::new();
        for (r, &(i, s)) in hits.iter().enumerate() {
            *totals.entry(self.experts[i].as_str()).or_default() += s / ((r + 2) as f64).log2();
        }
        RankedList::from_scores(
            RankScope::Experts,
            totals.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            cutoff,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self).map_err(|e| Error::invalid(e.to_string()))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Index> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut index: Index = serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        index.vocab.rebuild_index();
        Ok(index)
    }
}

/// CombLgDCS: each expert scores `Σ s / log2(rank + 1)` over their ranked
/// subprofiles. Experts are sorted by score descending, then by id.
pub fn comb_lg_dcs(ranking: &RankedList, profiles: &ProfileSet) -> Result<RankedList> {
    let owners = profiles.owners();
    fuse(ranking, |id| owners.get(id).copied())
}

fn fuse<'a>(ranking: &RankedList, owner: impl Fn(&str) -> Option<&'a str>) -> Result<RankedList> {
    let mut totals: BTreeMap<&str, f64> = BTreeMap::new();
    // Sum in rank order so the result does not depend on storage order.
    let mut entries: Vec<&RankedEntry> = ranking.entries.iter().collect();
    entries.sort_by(|a, b| a.rank.cmp(&b.rank).then_with(|| a.id.cmp(&b.id)));
    for e in entries {
        let expert = owner(&e.id).ok_or_else(|| Error::DanglingSubprofile(e.id.clone()))?;
        *totals.entry(expert).or_default() += e.score / ((e.rank + 1) as f64).log2();
    }
    Ok(RankedList::from_scores(
        RankScope::Experts,
        totals.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        None,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{Origin, Provenance, Subprofile};

    fn profiles(items: &[(&str, &str, &str)]) -> ProfileSet {
        ProfileSet {
            subprofiles: items
                .iter()
                .map(|(id, expert, text)| Subprofile {
                    subprofile_id: id.to_string(),
                    expert_id: expert.to_string(),
                    doc_ids: vec![id.to_string()],
                    macro_text: text.to_string(),
                    origin: Origin::Intervention,
                })
                .collect(),
            provenance: Provenance {
                origin: Origin::Intervention,
                algorithm: None,
                k_strategy: None,
                seed: None,
                note: None,
            },
            k_values: vec![],
        }
    }

    fn vocab(terms: &[&str]) -> Vocabulary {
        let mut t: Vec<String> = terms.iter().map(|s| s.to_string()).collect();
        t.sort();
        let n = t.len();
        Vocabulary::from_parts(t, vec![1; n], 1).unwrap()
    }

    fn list(entries: &[(&str, f64, usize)]) -> RankedList {
        RankedList {
            scope: RankScope::Subprofiles,
            entries: entries
                .iter()
                .map(|&(id, score, rank)| RankedEntry {
                    id: id.into(),
                    score,
                    rank,
                })
                .collect(),
        }
    }

    fn cfg() -> TokenPipelineConfig {
        TokenPipelineConfig::plain()
    }

    #[test]
    fn counts_postings_and_lengths() {
        let p = profiles(&[("s1", "A", "a a b")]);
        let v = vocab(&["a", "b"]);
        let idx = Index::build(&p, &v, &cfg(), Bm25Params::default()).unwrap();
        assert_eq!(idx.postings(v.index_of("a").unwrap()), [(0, 2)]);
        assert_eq!(idx.postings(v.index_of("b").unwrap()), [(0, 1)]);
        assert_eq!(idx.avg_len(), 3.0);
    }

    #[test]
    fn out_of_vocabulary_terms_are_not_indexed() {
        let p = profiles(&[("s1", "A", "a zzz")]);
        let idx = Index::build(&p, &vocab(&["a"]), &cfg(), Bm25Params::default()).unwrap();
        assert_eq!(idx.length(0), 1);
        assert!(idx
            .bm25_rank(&idx.query("zzz", Task::Filtering).unwrap(), None)
            .is_empty());
    }

    #[test]
    fn two_subprofile_hand_scores() {
        // s1 = "a b b" (len 3), s2 = "b c" (len 2), avg 2.5; query "a".
        let p = profiles(&[("s1", "A", "a b b"), ("s2", "B", "b c")]);
        let idx = Index::build(&p, &vocab(&["a", "b", "c"]), &cfg(), Bm25Params::default()).unwrap();
        let r = idx.bm25_rank(&idx.query("a", Task::Filtering).unwrap(), None);
        let idf_a = (1.0f64 + (2.0 - 1.0 + 0.5) / 1.5).ln();
        let expect = idf_a * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 3.0 / 2.5));
        assert_eq!(r.len(), 1);
        assert!((r.entries[0].score - expect).abs() < 1e-12);

        // Query "b": both match; s2 is shorter so it wins.
        let r = idx.bm25_rank(&idx.query("b", Task::Filtering).unwrap(), None);
        let idf_b = (1.0f64 + 0.5 / 2.5).ln();
        let s1 = idf_b * 2.0 * 2.2 / (2.0 + 1.2 * (0.25 + 0.75 * 3.0 / 2.5));
        let s2 = idf_b * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 2.0 / 2.5));
        let want = if s1 > s2 { ["s1", "s2"] } else { ["s2", "s1"] };
        assert_eq!(r.ids().collect::<Vec<_>>(), want);
        assert!((r.entries[0].score - s1.max(s2)).abs() < 1e-12);
    }

    #[test]
    fn zero_length_subprofile_is_guarded() {
        let p = profiles(&[("s1", "A", "zzz"), ("s2", "B", "a")]);
        let idx = Index::build(&p, &vocab(&["a"]), &cfg(), Bm25Params::default()).unwrap();
        assert_eq!(idx.avg_len(), 1.0);
        let r = idx.bm25_rank(&idx.query("a", Task::Filtering).unwrap(), None);
        assert!(r.entries[0].score.is_finite());
    }

    #[test]
    fn ties_break_by_id() {
        let p = profiles(&[("s2", "B", "a"), ("s1", "A", "a")]);
        let idx = Index::build(&p, &vocab(&["a"]), &cfg(), Bm25Params::default()).unwrap();
        let r = idx.bm25_rank(&idx.query("a", Task::Filtering).unwrap(), None);
        assert_eq!(r.ids().collect::<Vec<_>>(), ["s1", "s2"]);
        assert_eq!(r.entries[1].rank, 2);
    }

    #[test]
    fn fusion_rank_one_is_identity() {
        let p = profiles(&[("A_c1", "A", "")]);
        let e = comb_lg_dcs(&list(&[("A_c1", 3.7, 1)]), &p).unwrap();
        assert_eq!(e.entries[0].score, 3.7);
    }

    #[test]
    fn fusion_devalues_by_log_rank() {
        let p = profiles(&[("A_c1", "A", ""), ("A_c2", "A", ""), ("X_c1", "X", "")]);
        let e = comb_lg_dcs(&list(&[("A_c1", 2.0, 1), ("X_c1", 1.5, 2), ("A_c2", 1.0, 3)]), &p).unwrap();
        let a = e.entries.iter().find(|x| x.id == "A").unwrap();
        assert!((a.score - 2.5).abs() < 1e-12);
    }

    #[test]
    fn fusion_prefers_two_lower_subprofiles() {
        let p = profiles(&[("A_c1", "A", ""), ("B_c1", "B", ""), ("B_c2", "B", "")]);
        let e = comb_lg_dcs(&list(&[("A_c1", 1.0, 1), ("B_c1", 1.0, 2), ("B_c2", 1.0, 3)]), &p).unwrap();
        assert_eq!(e.ids().collect::<Vec<_>>(), ["B", "A"]);
        let b = 1.0 / 3f64.log2() + 1.0 / 4f64.log2();
        assert!((e.entries[0].score - b).abs() < 1e-12);
        assert!((b - 1.130_929_753_571_457).abs() < 1e-9);
    }

    #[test]
    fn fusion_ignores_storage_order_and_rejects_dangling() {
        let p = profiles(&[("A_c1", "A", ""), ("B_c1", "B", "")]);
        let fwd = comb_lg_dcs(&list(&[("A_c1", 2.0, 1), ("B_c1", 1.0, 2)]), &p).unwrap();
        let rev = comb_lg_dcs(&list(&[("B_c1", 1.0, 2), ("A_c1", 2.0, 1)]), &p).unwrap();
        assert_eq!(fwd, rev);
        assert!(matches!(
            comb_lg_dcs(&list(&[("Z_c1", 1.0, 1)]), &p),
            Err(Error::DanglingSubprofile(_))
        ));
    }

    #[test]
    fn rank_experts_equals_fused_subprofile_ranking() {
        let p = profiles(&[
            ("A_c1", "A", "a b"),
            ("A_c2", "A", "c c a"),
            ("B_c1", "B", "a a a d"),
            ("C_c1", "C", "d b"),
        ]);
        let idx = Index::build(&p, &vocab(&["a", "b", "c", "d"]), &cfg(), Bm25Params::default()).unwrap();
        for text in ["a", "a b", "c d d", "b a c", "zzz"] {
            let q = idx.query(text, Task::Filtering).unwrap();
            let fused = comb_lg_dcs(&idx.bm25_rank(&q, None), &p).unwrap();
            assert_eq!(idx.rank_experts(&q, None), fused, "{text}");
        }
    }

    #[test]
    fn trec_lines() {
        let r = RankedList::from_scores(RankScope::Experts, vec![("A".into(), 1.5), ("B".into(), 2.0)], None);
        let mut out = Vec::new();
        r.write_trec("q1", "run", &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "q1 Q0 B 1 2.000000 run\nq1 Q0 A 2 1.500000 run\n"
        );
    }
}
