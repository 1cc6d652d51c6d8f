//! Per-expert subprofiles assembled from clusterings or baseline rules.
//!
//! A subprofile is a macro-document: the bodies of a group of one expert's
//! documents, joined by newlines in ordering-key order. An expert's
//! subprofiles always partition exactly that expert's training documents.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{
    self, agnes_with, diana, kmeans_with_restarts, lda_cluster, pam, select_k, som_km, Algorithm, Clustering,
    KSelectionInputs, KStrategy, LdaConfig, Linkage, SomConfig, SomMode,
};
use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::seed;
use crate::textprep::{build_vocabulary, TokenPipelineConfig, Vocabulary};
use crate::vectorize::{counts_from_bags, dissimilarity_matrix, term_bags, tfidf, DocTermMatrix, TermBag};

/// How a subprofile came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Local,
    Global,
    Monolithic,
    Committee,
    Intervention,
}

impl Origin {
    pub fn as_str(&self) -> &'static str {
        match self {
            Origin::Local => "local",
            Origin::Global => "global",
            Origin::Monolithic => "monolithic",
            Origin::Committee => "committee",
            Origin::Intervention => "intervention",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(Origin::Local),
            "global" => Ok(Origin::Global),
            "monolithic" => Ok(Origin::Monolithic),
            "committee" => Ok(Origin::Committee),
            "intervention" => Ok(Origin::Intervention),
            other => Err(Error::invalid(format!("unknown profile origin {other:?}"))),
        }
    }
}

/// Whether clustering sees one expert's documents or everybody's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Local,
    Global,
}

impl Scope {
    pub fn origin(&self) -> Origin {
        match self {
            Scope::Local => Origin::Local,
            Scope::Global => Origin::Global,
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.origin().fmt(f)
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(Scope::Local),
            "global" => Ok(Scope::Global),
            other => Err(Error::invalid(format!("unknown scope {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subprofile {
    /// `{expert_id}_c{j}`, with `j` counted from 1.
    pub subprofile_id: String,
    pub expert_id: String,
    /// Source documents in ordering-key order.
    pub doc_ids: Vec<String>,
    pub macro_text: String,
    pub origin: Origin,
}

/// How a profile set was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub origin: Origin,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<Algorithm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_strategy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Provenance {
    fn baseline(origin: Origin) -> Self {
        Provenance {
            origin,
            algorithm: None,
            k_strategy: None,
            seed: None,
            note: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    pub subprofiles: Vec<Subprofile>,
    pub provenance: Provenance,
    /// The k each clustering ran with: one per expert for local clustering,
    /// a single value for global clustering, and the per-expert subprofile
    /// count for baselines.
    pub k_values: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ProfileLine {
    subprofile_id: String,
    expert_id: String,
    doc_ids: Vec<String>,
    origin: Origin,
    provenance: Provenance,
}

impl ProfileSet {
    pub fn len(&self) -> usize {
        self.subprofiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subprofiles.is_empty()
    }

    pub fn experts(&self) -> BTreeSet<&str> {
        self.subprofiles.iter().map(|s| s.expert_id.as_str()).collect()
    }

    pub fn mean_k(&self) -> f64 {
        if self.k_values.is_empty() {
            return 0.0;
        }
        self.k_values.iter().sum::<usize>() as f64 / self.k_values.len() as f64
    }

    /// Subprofile id → expert id.
    pub fn owners(&self) -> HashMap<&str, &str> {
        self.subprofiles
            .iter()
            .map(|s| (s.subprofile_id.as_str(), s.expert_id.as_str()))
            .collect()
    }

    /// Subprofiles of each expert, experts sorted by id.
    pub fn by_expert(&self) -> BTreeMap<&str, Vec<&Subprofile>> {
        let mut out: BTreeMap<&str, Vec<&Subprofile>> = BTreeMap::new();
        for s in &self.subprofiles {
            out.entry(s.expert_id.as_str()).or_default().push(s);
        }
        out
    }

    /// Checks the partition invariant against the training corpus: every
    /// expert's subprofiles are pairwise disjoint and cover exactly that
    /// expert's documents, and ids are unique.
    pub fn validate(&self, train: &Corpus) -> Result<()> {
        let mut ids = BTreeSet::new();
        let mut covered: HashMap<&str, &str> = HashMap::new();
        let authors: HashMap<&str, &str> = train
            .documents()
            .iter()
            .map(|d| (d.doc_id.as_str(), d.author_id.as_str()))
            .collect();
        for s in &self.subprofiles {
            if !ids.insert(s.subprofile_id.as_str()) {
                return Err(Error::invalid(format!("duplicate subprofile id {:?}", s.subprofile_id)));
            }
            if s.doc_ids.is_empty() {
                return Err(Error::invalid(format!("subprofile {:?} is empty", s.subprofile_id)));
            }
            for d in &s.doc_ids {
                match authors.get(d.as_str()) {
                    Some(a) if *a == s.expert_id => {}
                    _ => {
                        return Err(Error::invalid(format!(
                            "document {d:?} in {:?} is not a training document of {:?}",
                            s.subprofile_id, s.expert_id
                        )))
                    }
                }
                if covered.insert(d, &s.subprofile_id).is_some() {
                    return Err(Error::invalid(format!("document {d:?} appears in two subprofiles")));
                }
            }
        }
        if covered.len() != authors.len() {
            return Err(Error::invalid("some training documents belong to no subprofile"));
        }
        Ok(())
    }

    /// One JSON object per subprofile: id, expert, documents, origin and provenance.
    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for s in &self.subprofiles {
            let line = ProfileLine {
                subprofile_id: s.subprofile_id.clone(),
                expert_id: s.expert_id.clone(),
                doc_ids: s.doc_ids.clone(),
                origin: s.origin,
                provenance: self.provenance.clone(),
            };
            serde_json::to_writer(&mut w, &line)?;
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads a dump written by [`ProfileSet::write_jsonl`], restoring macro
    /// texts from `corpus`.
    pub fn read_jsonl(reader: impl BufRead, corpus: &Corpus) -> Result<ProfileSet> {
        let docs: HashMap<&str, &Document> = corpus.documents().iter().map(|d| (d.doc_id.as_str(), d)).collect();
        let mut subprofiles = Vec::new();
        let mut provenance = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ProfileLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let members = rec
                .doc_ids
                .iter()
                .map(|id| {
                    docs.get(id.as_str()).copied().ok_or_else(|| Error::Parse {
                        line: i + 1,
                        message: format!("unknown doc_id {id:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            provenance.get_or_insert(rec.provenance);
            subprofiles.push(Subprofile {
                subprofile_id: rec.subprofile_id,
                expert_id: rec.expert_id,
                doc_ids: rec.doc_ids,
                macro_text: macro_text(&members),
                origin: rec.origin,
            });
        }
        let provenance = provenance.ok_or_else(|| Error::invalid("profile dump is empty"))?;
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &subprofiles {
            *counts.entry(s.expert_id.as_str()).or_default() += 1;
        }
        let k_values = counts.into_values().collect();
        Ok(ProfileSet {
            subprofiles,
            provenance,
            k_values,
        })
    }
}

/// Bodies joined by newlines, in the given order.
pub fn macro_text(docs: &[&Document]) -> String {
    let mut out = String::new();
    for (i, d) in docs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&d.body);
    }
    out
}

/// A training split with its vocabulary and per-document term bags, shared by
/// every profile construction on that split.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub corpus: Corpus,
    pub vocab: Vocabulary,
    pub config: TokenPipelineConfig,
    /// One bag per training document, in corpus order.
    pub bags: Vec<TermBag>,
}

impl TrainingSet {
    pub fn new(corpus: Corpus, config: TokenPipelineConfig) -> Result<Self> {
        let vocab = build_vocabulary(&corpus, &config)?;
        Self::with_vocabulary(corpus, vocab, config)
    }

    pub fn with_vocabulary(corpus: Corpus, vocab: Vocabulary, config: TokenPipelineConfig) -> Result<Self> {
        let bags = term_bags(corpus.documents(), &config, &vocab)?;
        Ok(TrainingSet {
            corpus,
            vocab,
            config,
            bags,
        })
    }

    /// Raw counts for the given training documents (corpus indices).
    pub fn counts(&self, rows: &[usize]) -> DocTermMatrix {
        let docs = self.corpus.documents();
        counts_from_bags(
            rows.iter().map(|&i| docs[i].doc_id.clone()),
            rows.iter().map(|&i| &self.bags[i]),
            self.vocab.len(),
        )
    }
}

/// Algorithm parameters shared by every clustering run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Iteration cap for K-Means, PAM and the SOM codebook K-Means.
    pub max_iter: usize,
    /// Independent k-means++ starts per K-Means run; the best objective wins.
    pub kmeans_restarts: usize,
    pub linkage: Linkage,
    pub lda_alpha: Option<f64>,
    pub lda_beta: f64,
    pub lda_iterations: usize,
    pub lda_burn_in: usize,
    pub som_epochs: usize,
    pub som_mode: SomMode,
    /// Fixed grid; by default it is derived from the number of documents.
    pub som_grid: Option<(usize, usize)>,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            max_iter: 100,
            kmeans_restarts: cluster::DEFAULT_RESTARTS,
            linkage: Linkage::Average,
            lda_alpha: None,
            lda_beta: 0.01,
            lda_iterations: 1000,
            lda_burn_in: 200,
            som_epochs: 100,
            som_mode: SomMode::Batch,
            som_grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSettings {
    pub algorithm: Algorithm,
    pub k_strategy: KStrategy,
    pub seed: u64,
    pub params: ClusterParams,
}

impl ClusterSettings {
    pub fn new(algorithm: Algorithm, k_strategy: KStrategy, seed: u64) -> Self {
        ClusterSettings {
            algorithm,
            k_strategy,
            seed,
            params: ClusterParams::default(),
        }
    }
}

/// Clusters a document-term count matrix with `k` clusters.
pub fn run_algorithm(counts: &DocTermMatrix, k: usize, settings: &ClusterSettings, seed: u64) -> Result<Clustering> {
    let n = counts.n_rows();
    let p = &settings.params;
    if n == 1 {
        cluster::check_k(k, n)?;
        return Ok(Clustering::new(
            counts.doc_ids.clone(),
            vec![0],
            1,
            settings.algorithm,
            seed,
            0,
        ));
    }
    match settings.algorithm {
        Algorithm::Kmeans => kmeans_with_restarts(&tfidf(counts)?, k, seed, p.max_iter, p.kmeans_restarts),
        Algorithm::Pam => {
            let d = dissimilarity_matrix(&tfidf(counts)?);
            Ok(pam(&d, &counts.doc_ids, k, seed, p.max_iter)?.clustering)
        }
        Algorithm::Agnes => {
            let d = dissimilarity_matrix(&tfidf(counts)?);
            Ok(agnes_with(&d, &counts.doc_ids, k, p.linkage)?.0)
        }
        Algorithm::Diana => {
            let d = dissimilarity_matrix(&tfidf(counts)?);
            diana(&d, &counts.doc_ids, k)
        }
        Algorithm::Lda => {
            let cfg = LdaConfig {
                topics: k,
                alpha: p.lda_alpha,
                beta: p.lda_beta,
                iterations: p.lda_iterations,
                burn_in: p.lda_burn_in.min(p.lda_iterations),
                seed,
            };
            Ok(lda_cluster(counts, &cfg)?.0)
        }
        Algorithm::SomKm => {
            let mut cfg = SomConfig::for_documents(n, k, seed);
            if let Some((w, h)) = p.som_grid {
                cfg.width = w;
                cfg.height = h;
                cfg.radius = (w.max(h) as f64 / 2.0).max(1.0);
            }
            cfg.epochs = p.som_epochs;
            cfg.mode = p.som_mode;
            cfg.kmeans_max_iter = p.max_iter;
            som_km(&tfidf(counts)?, k, &cfg)
        }
    }
}

/// Builds subprofiles for one expert from document indices and their labels.
/// Groups are ordered by their smallest ordering key.
fn assemble(
    expert: &str,
    docs: &[&Document],
    labels: impl IntoIterator<Item = usize>,
    origin: Origin,
) -> Vec<Subprofile> {
    let mut groups: BTreeMap<usize, Vec<&Document>> = BTreeMap::new();
    for (d, l) in docs.iter().zip(labels) {
        groups.entry(l).or_default().push(d);
    }
    let mut groups: Vec<Vec<&Document>> = groups.into_values().collect();
    for g in &mut groups {
        g.sort_by_key(|d| d.order);
    }
    groups.sort_by_key(|g| g[0].order);
    groups
        .into_iter()
        .enumerate()
        .map(|(j, g)| Subprofile {
            subprofile_id: format!("{expert}_c{}", j + 1),
            expert_id: expert.to_string(),
            doc_ids: g.iter().map(|d| d.doc_id.clone()).collect(),
            macro_text: macro_text(&g),
            origin,
        })
        .collect()
}

/// Training-document indices per expert, experts sorted by id.
fn expert_rows(train: &Corpus) -> Vec<(&str, Vec<usize>)> {
    let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, d) in train.documents().iter().enumerate() {
        out.entry(d.author_id.as_str()).or_default().push(i);
    }
    out.into_iter().collect()
}

fn cluster_provenance(origin: Origin, settings: &ClusterSettings) -> Provenance {
    Provenance {
        origin,
        algorithm: Some(settings.algorithm),
        k_strategy: Some(settings.k_strategy.to_string()),
        seed: Some(settings.seed),
        note: None,
    }
}

/// Clusters each expert's documents separately, with k chosen from that
/// expert's own statistics.
pub fn build_local(train: &TrainingSet, settings: &ClusterSettings) -> Result<ProfileSet> {
    let docs = train.corpus.documents();
    let per_expert: Vec<(Vec<Subprofile>, usize)> = expert_rows(&train.corpus)
        .par_iter()
        .map(|(expert, rows)| {
            let counts = train.counts(rows);
            let group_count = rows
                .iter()
                .filter_map(|&i| docs[i].group_id.as_deref())
                .collect::<BTreeSet<_>>()
                .len();
            let k = select_k(
                settings.k_strategy,
                KSelectionInputs {
                    n: rows.len(),
                    m: counts.active_terms(),
                    t: counts.nnz(),
                    group_count,
                },
            );
            let seed = seed::derive(settings.seed, expert);
            let clustering = run_algorithm(&counts, k, settings, seed).map_err(|e| Error::Expert {
                expert: expert.to_string(),
                source: Box::new(e),
            })?;
            let members: Vec<&Document> = rows.iter().map(|&i| &docs[i]).collect();
            Ok((assemble(expert, &members, clustering.labels, Origin::Local), k))
        })
        .collect::<Result<_>>()?;
    let k_values = per_expert.iter().map(|p| p.1).collect();
    Ok(ProfileSet {
        subprofiles: per_expert.into_iter().flat_map(|p| p.0).collect(),
        provenance: cluster_provenance(Origin::Local, settings),
        k_values,
    })
}

/// Clusters all training documents together; each expert gets one
/// subprofile per cluster that holds any of their documents.
pub fn build_global(train: &TrainingSet, settings: &ClusterSettings) -> Result<ProfileSet> {
    let (clustering, k) = global_clustering(train, settings)?;
    Ok(profiles_from_clustering(train, &clustering, k, settings))
}

/// The single clustering behind [`build_global`], with the k it used.
pub fn global_clustering(train: &TrainingSet, settings: &ClusterSettings) -> Result<(Clustering, usize)> {
    if train.corpus.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }
    let rows: Vec<usize> = (0..train.corpus.len()).collect();
    let counts = train.counts(&rows);
    let k = select_k(
        settings.k_strategy,
        KSelectionInputs {
            n: rows.len(),
            m: train.vocab.len(),
            t: counts.nnz(),
            group_count: train.corpus.groups().len(),
        },
    );
    let clustering = run_algorithm(&counts, k, settings, seed::derive(settings.seed, "global"))?;
    Ok((clustering, k))
}

/// Splits a clustering over all training documents into per-expert subprofiles.
pub fn profiles_from_clustering(
    train: &TrainingSet,
    clustering: &Clustering,
    k: usize,
    settings: &ClusterSettings,
) -> ProfileSet {
    let docs = train.corpus.documents();
    let subprofiles = expert_rows(&train.corpus)
        .into_iter()
        .flat_map(|(expert, rows)| {
            let members: Vec<&Document> = rows.iter().map(|&i| &docs[i]).collect();
            assemble(
                expert,
                &members,
                rows.iter().map(|&i| clustering.labels[i]),
                Origin::Global,
            )
        })
        .collect();
    ProfileSet {
        subprofiles,
        provenance: cluster_provenance(Origin::Global, settings),
        k_values: vec![k],
    }
}

fn baseline(train: &Corpus, origin: Origin, key: impl Fn(&Document, usize) -> usize) -> ProfileSet {
    let docs = train.documents();
    let mut subprofiles = Vec::new();
    let mut k_values = Vec::new();
    for (expert, rows) in expert_rows(train) {
        let members: Vec<&Document> = rows.iter().map(|&i| &docs[i]).collect();
        let labels: Vec<usize> = members.iter().enumerate().map(|(j, d)| key(d, j)).collect();
        let built = assemble(expert, &members, labels, origin);
        k_values.push(built.len());
        subprofiles.extend(built);
    }
    ProfileSet {
        subprofiles,
        provenance: Provenance::baseline(origin),
        k_values,
    }
}

/// One subprofile per expert holding all their training documents.
pub fn build_monolithic(train: &Corpus) -> ProfileSet {
    baseline(train, Origin::Monolithic, |_, _| 0)
}

/// One subprofile per (expert, group); documents without a group are pooled
/// into one extra subprofile per expert.
pub fn build_committee(train: &Corpus) -> ProfileSet {
    let mut index: HashMap<Option<&str>, usize> = HashMap::new();
    for d in train.documents() {
        let next = index.len();
        index.entry(d.group_id.as_deref()).or_insert(next);
    }
    let mut set = baseline(train, Origin::Committee, |d, _| index[&d.group_id.as_deref()]);
    set.provenance.note = Some("documents without group_id form one extra ungrouped subprofile per expert".into());
    set
}

/// One subprofile per training document.
pub fn build_intervention(train: &Corpus) -> ProfileSet {
    baseline(train, Origin::Intervention, |_, j| j)
}
