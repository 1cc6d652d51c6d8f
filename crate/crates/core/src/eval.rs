//! Query construction, ranking metrics, Reciprocal Rank Fusion of metric
//! positions, significance tests, and the experiment runner.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::cluster::{Algorithm, KStrategy};
use crate::corpus::{filter_experts_min_docs, split_train_test, Corpus, Document, SplitPlan};
use crate::error::{Error, Result};
use crate::profiles::{
    build_committee, build_global, build_intervention, build_local, build_monolithic, ClusterParams, ClusterSettings,
    ProfileSet, Scope, TrainingSet,
};
use crate::retrieval::{Bm25Params, Index, Query, RankedList, Task};
use crate::seed;
use crate::textprep::{Pipeline, TokenPipelineConfig};
use crate::vectorize::{term_bag, TermBag};

/// One evaluation query with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryCase {
    /// The initiative id.
    pub query_id: String,
    pub text: String,
    pub task: Task,
    /// Authors taking part in the initiative who have a profile.
    pub relevant: BTreeSet<String>,
    pub source_doc_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet {
    pub cases: Vec<QueryCase>,
    /// Initiatives none of whose participants has a profile.
    pub dropped: usize,
}

/// One case per distinct initiative of the test corpus, in order of first
/// appearance. Filtering queries use the bodies of all the initiative's
/// documents; recommendation queries use its title.
pub fn make_query_cases(test: &Corpus, task: Task, profiled: &BTreeSet<String>) -> QuerySet {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&Document>> = HashMap::new();
    for d in test.documents() {
        let key = d.initiative();
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(d);
    }
    let mut cases = Vec::new();
    let mut dropped = 0;
    for key in order {
        let docs = &groups[key];
        let relevant: BTreeSet<String> = docs
            .iter()
            .map(|d| d.author_id.clone())
            .filter(|a| profiled.contains(a))
            .collect();
        if relevant.is_empty() {
            dropped += 1;
            continue;
        }
        let text = match task {
            Task::Filtering => docs.iter().map(|d| d.body.as_str()).collect::<Vec<_>>().join("\n"),
            Task::Recommendation => docs
                .iter()
                .map(|d| d.title.as_str())
                .find(|t| !t.is_empty())
                .unwrap_or("")
                .to_string(),
        };
        cases.push(QueryCase {
            query_id: key.to_string(),
            text,
            task,
            relevant,
            source_doc_ids: docs.iter().map(|d| d.doc_id.clone()).collect(),
        });
    }
    QuerySet { cases, dropped }
}

fn check_metric_args(relevant: &BTreeSet<String>, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("cutoff k must be at least 1"));
    }
    if relevant.is_empty() {
        return Err(Error::invalid("relevant set is empty"));
    }
    Ok(())
}

fn hits_at(ranking: &RankedList, relevant: &BTreeSet<String>, k: usize) -> usize {
    ranking.ids().take(k).filter(|id| relevant.contains(*id)).count()
}

/// `|top-k ∩ relevant| / k`; short rankings keep the denominator `k`.
pub fn precision_at_k(ranking: &RankedList, relevant: &BTreeSet<String>, k: usize) -> Result<f64> {
    check_metric_args(relevant, k)?;
    Ok(hits_at(ranking, relevant, k) as f64 / k as f64)
}

/// `|top-k ∩ relevant| / |relevant|`.
pub fn recall_at_k(ranking: &RankedList, relevant: &BTreeSet<String>, k: usize) -> Result<f64> {
    check_metric_args(relevant, k)?;
    Ok(hits_at(ranking, relevant, k) as f64 / relevant.len() as f64)
}

/// Binary-gain NDCG with `log2(i + 1)` discounts; the ideal ranking holds
/// `min(|relevant|, k)` relevant items.
pub fn ndcg_at_k(ranking: &RankedList, relevant: &BTreeSet<String>, k: usize) -> Result<f64> {
    check_metric_args(relevant, k)?;
    let dcg: f64 = ranking
        .ids()
        .take(k)
        .enumerate()
        .filter(|(_, id)| relevant.contains(*id))
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let idcg: f64 = (0..relevant.len().min(k)).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    Ok(dcg / idcg)
}

/// Competition positions (1-based) by value descending: ties share the
/// smaller position and the following position is skipped.
pub fn competition_positions(values: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|v| 1 + values.iter().filter(|w| *w > v).count())
        .collect()
}

/// `Σ 1 / (c + position)`.
pub fn rrf(positions: &[usize], c: f64) -> f64 {
    positions.iter().map(|&p| 1.0 / (c + p as f64)).sum()
}

/// Fuses per-metric positions of named configurations. Returns
/// `(configuration, RRF)` sorted by RRF descending, then by name.
pub fn rrf_combine(per_metric: &[BTreeMap<String, usize>], c: f64) -> Result<Vec<(String, f64)>> {
    let first = per_metric
        .first()
        .ok_or_else(|| Error::invalid("no metric positions to fuse"))?;
    for m in &per_metric[1..] {
        if m.keys().ne(first.keys()) {
            return Err(Error::invalid("metrics rank different configuration sets"));
        }
    }
    let mut out: Vec<(String, f64)> = first
        .keys()
        .map(|name| {
            let positions: Vec<usize> = per_metric.iter().map(|m| m[name]).collect();
            (name.clone(), rrf(&positions, c))
        })
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

/// `100 * (method - baseline) / baseline`.
pub fn improvement_pct(method_value: f64, baseline_value: f64) -> Result<f64> {
    if baseline_value <= 0.0 {
        return Err(Error::invalid("baseline value must be positive"));
    }
    Ok(100.0 * (method_value - baseline_value) / baseline_value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p_value: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.cdf(-t.abs())).min(1.0)
}

/// Two-sided paired t-test. Zero variance of the differences (up to rounding)
/// gives `t = 0, p = 1` when the mean difference is zero and `t = ±∞, p = 0`
/// otherwise.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::invalid("paired samples differ in length"));
    }
    if a.len() < 2 {
        return Err(Error::invalid("paired t-test needs at least 2 pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let md = mean(&d);
    let sd = sample_var(&d).sqrt();
    let df = n - 1.0;
    // Differences that agree to rounding error count as zero variance.
    let scale = d.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let t = if sd <= 1e-12 * scale || sd == 0.0 {
        if md == 0.0 {
            0.0
        } else {
            md.signum() * f64::INFINITY
        }
    } else {
        md / (sd / n.sqrt())
    };
    Ok(TTest {
        t,
        df,
        p_value: two_sided(t, df),
    })
}

/// Two-sided Welch t-test for unpaired samples.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("Welch t-test needs at least 2 values per sample"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_var(a) / na, sample_var(b) / nb);
    let diff = mean(a) - mean(b);
    let se2 = va + vb;
    if se2 == 0.0 {
        let t = if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        return Ok(TTest {
            t,
            df: na + nb - 2.0,
            p_value: if diff == 0.0 { 1.0 } else { 0.0 },
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(TTest {
        t,
        df,
        p_value: two_sided(t, df),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Anova {
    pub f: f64,
    pub df_between: f64,
    pub df_within: f64,
    pub p_value: f64,
}

/// One-way ANOVA. Zero within-group variance gives `F = ∞, p = 0` when the
/// group means differ and `F = 0, p = 1` when they do not.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<Anova> {
    if groups.len() < 2 {
        return Err(Error::invalid("ANOVA needs at least 2 groups"));
    }
    if groups.iter().any(|g| g.len() < 2) {
        return Err(Error::invalid("every ANOVA group needs at least 2 values"));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let ss_between: f64 = groups.iter().map(|g| g.len() as f64 * (mean(g) - grand).powi(2)).sum();
    let ss_within: f64 = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        })
        .sum();
    let df_between = (groups.len() - 1) as f64;
    let df_within = (n - groups.len()) as f64;
    let (f, p_value) = if ss_between == 0.0 {
        (0.0, 1.0)
    } else if ss_within == 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        let f = (ss_between / df_between) / (ss_within / df_within);
        let dist = FisherSnedecor::new(df_between, df_within).expect("positive degrees of freedom");
        (f, 1.0 - dist.cdf(f))
    };
    Ok(Anova {
        f,
        df_between,
        df_within,
        p_value,
    })
}

/// The three baseline profiling rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Monolithic,
    Committee,
    Intervention,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Monolithic, Baseline::Committee, Baseline::Intervention];

    pub fn as_str(&self) -> &'static str {
        match self {
            Baseline::Monolithic => "monolithic",
            Baseline::Committee => "committee",
            Baseline::Intervention => "intervention",
        }
    }

    pub fn build(&self, train: &Corpus) -> ProfileSet {
        match self {
            Baseline::Monolithic => build_monolithic(train),
            Baseline::Committee => build_committee(train),
            Baseline::Intervention => build_intervention(train),
        }
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "monolithic" => Ok(Baseline::Monolithic),
            "committee" => Ok(Baseline::Committee),
            "intervention" => Ok(Baseline::Intervention),
            other => Err(Error::invalid(format!("unknown baseline {other:?}"))),
        }
    }
}

/// One row of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConfigSpec {
    Clustering {
        scope: Scope,
        algorithm: Algorithm,
        k_strategy: KStrategy,
    },
    Baseline(Baseline),
}

impl ConfigSpec {
    pub fn row_type(&self) -> &'static str {
        match self {
            ConfigSpec::Clustering {
                scope: Scope::Local, ..
            } => "local",
            ConfigSpec::Clustering {
                scope: Scope::Global, ..
            } => "global",
            ConfigSpec::Baseline(_) => "baseline",
        }
    }

    pub fn algorithm_name(&self) -> &'static str {
        match self {
            ConfigSpec::Clustering { algorithm, .. } => algorithm.as_str(),
            ConfigSpec::Baseline(b) => b.as_str(),
        }
    }

    pub fn k_strategy_name(&self) -> String {
        match self {
            ConfigSpec::Clustering { k_strategy, .. } => k_strategy.to_string(),
            ConfigSpec::Baseline(_) => "-".into(),
        }
    }

    /// `type/algorithm/k_strategy`, or `baseline/name`.
    pub fn label(&self) -> String {
        match self {
            ConfigSpec::Clustering { .. } => {
                format!(
                    "{}/{}/{}",
                    self.row_type(),
                    self.algorithm_name(),
                    self.k_strategy_name()
                )
            }
            ConfigSpec::Baseline(b) => format!("baseline/{}", b.as_str()),
        }
    }

    /// The 36 clustering configurations (2 scopes × 6 algorithms × 3 k
    /// strategies) followed by the 3 baselines.
    pub fn full_grid() -> Vec<ConfigSpec> {
        let mut grid = Vec::new();
        for scope in [Scope::Local, Scope::Global] {
            for algorithm in Algorithm::ALL {
                for k_strategy in [KStrategy::Groups, KStrategy::MnOverT, KStrategy::SqrtNHalf] {
                    grid.push(ConfigSpec::Clustering {
                        scope,
                        algorithm,
                        k_strategy,
                    });
                }
            }
        }
        grid.extend(Baseline::ALL.map(ConfigSpec::Baseline));
        grid
    }

    /// Builds this configuration's profiles on a training split.
    pub fn build_profiles(&self, train: &TrainingSet, params: &ClusterParams, seed: u64) -> Result<ProfileSet> {
        match *self {
            ConfigSpec::Clustering {
                scope,
                algorithm,
                k_strategy,
            } => {
                let settings = ClusterSettings {
                    algorithm,
                    k_strategy,
                    seed,
                    params: params.clone(),
                };
                match scope {
                    Scope::Local => build_local(train, &settings),
                    Scope::Global => build_global(train, &settings),
                }
            }
            ConfigSpec::Baseline(b) => Ok(b.build(&train.corpus)),
        }
    }
}

impl fmt::Display for ConfigSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for ConfigSpec {
    type Err = Error;

    /// Parses the [`ConfigSpec::label`] form.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split('/').collect();
        match parts.as_slice() {
            ["baseline", b] => Ok(ConfigSpec::Baseline(b.parse()?)),
            [scope, algorithm, k] => Ok(ConfigSpec::Clustering {
                scope: scope.parse()?,
                algorithm: algorithm.parse()?,
                k_strategy: k.parse()?,
            }),
            _ => Err(Error::invalid(format!(
                "bad configuration {s:?}; expected scope/algorithm/k_strategy or baseline/name"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Recall,
    Precision,
    Ndcg,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Recall, Metric::Precision, Metric::Ndcg];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Recall => "recall",
            Metric::Precision => "precision",
            Metric::Ndcg => "ndcg",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recall" | "r" => Ok(Metric::Recall),
            "precision" | "p" => Ok(Metric::Precision),
            "ndcg" => Ok(Metric::Ndcg),
            other => Err(Error::invalid(format!("unknown metric {other:?}"))),
        }
    }
}

/// Everything [`run_experiment`] needs besides the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub seed: u64,
    pub min_docs: usize,
    pub train_fraction: f64,
    pub repetitions: usize,
    pub pipeline: TokenPipelineConfig,
    pub bm25: Bm25Params,
    pub params: ClusterParams,
    pub grid: Vec<ConfigSpec>,
    /// Metric cutoff (10 throughout).
    pub cutoff: usize,
    pub rrf_c: f64,
}

impl ExperimentConfig {
    pub fn new(task: Task, grid: Vec<ConfigSpec>) -> Self {
        ExperimentConfig {
            task,
            seed: 0,
            min_docs: 10,
            train_fraction: 0.8,
            repetitions: 5,
            pipeline: TokenPipelineConfig::spanish(),
            bm25: Bm25Params::default(),
            params: ClusterParams::default(),
            grid,
            cutoff: 10,
            rrf_c: 60.0,
        }
    }

    pub fn split_plan(&self) -> SplitPlan {
        SplitPlan {
            train_fraction: self.train_fraction,
            repetitions: self.repetitions,
            seed: seed::derive(self.seed, "split"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub recall: f64,
    pub precision: f64,
    pub ndcg: f64,
}

impl QueryMetrics {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Recall => self.recall,
            Metric::Precision => self.precision,
            Metric::Ndcg => self.ndcg,
        }
    }
}

/// One configuration on one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepMetrics {
    pub mean_k: f64,
    pub subprofiles: usize,
    /// Macro-averages over this repetition's queries.
    pub mean: QueryMetrics,
    pub per_query: Vec<QueryMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigResult {
    pub spec: ConfigSpec,
    pub label: String,
    pub mean_k: f64,
    /// Means of the per-repetition means.
    pub mean: QueryMetrics,
    pub position_recall: usize,
    pub position_precision: usize,
    pub position_ndcg: usize,
    pub rrf: f64,
    pub reps: Vec<RepMetrics>,
}

impl ConfigResult {
    /// Per-query values of all repetitions, concatenated in repetition order.
    pub fn pooled(&self, metric: Metric) -> Vec<f64> {
        self.reps
            .iter()
            .flat_map(|r| r.per_query.iter().map(move |q| q.get(metric)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFailure {
    pub label: String,
    pub repetition: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub label: String,
    pub baseline: String,
    pub metric: Metric,
    pub pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub task: Task,
    pub cutoff: usize,
    /// Successful configurations, best RRF first.
    pub rows: Vec<ConfigResult>,
    pub failures: Vec<ConfigFailure>,
    pub queries_per_rep: Vec<usize>,
    pub dropped_per_rep: Vec<usize>,
    /// Every clustering row against every baseline row, per metric.
    pub improvements: Vec<Improvement>,
}

impl ExperimentResult {
    pub fn row(&self, label: &str) -> Option<&ConfigResult> {
        self.rows.iter().find(|r| r.label == label)
    }

    fn require(&self, label: &str) -> Result<&ConfigResult> {
        self.row(label)
            .ok_or_else(|| Error::invalid(format!("no successful configuration {label:?}")))
    }

    pub fn improvement(&self, label: &str, baseline: &str, metric: Metric) -> Result<f64> {
        improvement_pct(
            self.require(label)?.mean.get(metric),
            self.require(baseline)?.mean.get(metric),
        )
    }

    /// t-test of per-query values pooled over repetitions; paired by query
    /// unless `paired` is false, in which case Welch's test is used.
    pub fn significance(&self, a: &str, b: &str, metric: Metric, paired: bool) -> Result<TTest> {
        let (x, y) = (self.require(a)?.pooled(metric), self.require(b)?.pooled(metric));
        if paired {
            paired_t_test(&x, &y)
        } else {
            welch_t_test(&x, &y)
        }
    }

    /// Columns `type, algorithm, k_strategy, mean_k, r@k, p@k, ndcg@k, P-r,
    /// P-p, P-ndcg, RRF`, one row per configuration in RRF order.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let k = self.cutoff;
        writeln!(
            w,
            "type,algorithm,k_strategy,mean_k,r@{k},p@{k},ndcg@{k},P-r,P-p,P-ndcg,RRF"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{:.2},{:.4},{:.4},{:.4},{},{},{},{:.4}",
                r.spec.row_type(),
                r.spec.algorithm_name(),
                r.spec.k_strategy_name(),
                r.mean_k,
                r.mean.recall,
                r.mean.precision,
                r.mean.ndcg,
                r.position_recall,
                r.position_precision,
                r.position_ndcg,
                r.rrf
            )?;
        }
        Ok(())
    }

    pub fn write_improvements_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "configuration,baseline,metric,improvement_pct")?;
        for i in &self.improvements {
            writeln!(w, "{},{},{},{:.2}", i.label, i.baseline, i.metric.as_str(), i.pct)?;
        }
        Ok(())
    }

    pub fn write_failures_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "configuration,repetition,message")?;
        for f in &self.failures {
            writeln!(w, "{},{},\"{}\"", f.label, f.repetition, f.message.replace('"', "\"\""))?;
        }
        Ok(())
    }
}

/// Sums document bags into one bag (sorted by term).
pub fn merge_bags<'a>(bags: impl IntoIterator<Item = &'a TermBag>) -> TermBag {
    let mut acc: BTreeMap<u32, u32> = BTreeMap::new();
    for bag in bags {
        for &(t, c) in bag {
            *acc.entry(t).or_default() += c;
        }
    }
    acc.into_iter().collect()
}

/// Builds an index whose macro-document bags are sums of the training
/// documents' bags. Equivalent to [`Index::build`] because the newline
/// separator never joins tokens.
pub fn index_profiles(train: &TrainingSet, profiles: &ProfileSet, bm25: Bm25Params) -> Result<Index> {
    let row: HashMap<&str, usize> = train
        .corpus
        .documents()
        .iter()
        .enumerate()
        .map(|(i, d)| (d.doc_id.as_str(), i))
        .collect();
    let bags = profiles
        .subprofiles
        .iter()
        .map(|s| {
            s.doc_ids
                .iter()
                .map(|d| row.get(d.as_str()).map(|&i| &train.bags[i]))
                .collect::<Option<Vec<_>>>()
                .map(merge_bags)
                .ok_or_else(|| Error::DanglingSubprofile(s.subprofile_id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Index::from_bags(profiles, bags, &train.vocab, &train.config, bm25)
}

/// Scores every query case against one profile set.
pub fn evaluate(index: &Index, cases: &[QueryCase], queries: &[Query], cutoff: usize) -> Result<Vec<QueryMetrics>> {
    cases
        .iter()
        .zip(queries)
        .map(|(case, q)| {
            let ranking = index.rank_experts(q, Some(cutoff));
            Ok(QueryMetrics {
                recall: recall_at_k(&ranking, &case.relevant, cutoff)?,
                precision: precision_at_k(&ranking, &case.relevant, cutoff)?,
                ndcg: ndcg_at_k(&ranking, &case.relevant, cutoff)?,
            })
        })
        .collect()
}

struct Repetition {
    train: TrainingSet,
    cases: Vec<QueryCase>,
    queries: Vec<Query>,
    dropped: usize,
}

fn prepare_repetition(corpus: &Corpus, config: &ExperimentConfig, rep: usize) -> Result<Repetition> {
    let (train, test) = split_train_test(corpus, &config.split_plan(), rep)?;
    let train = TrainingSet::new(train, config.pipeline.clone())?;
    let QuerySet { cases, dropped } = make_query_cases(&test, config.task, train.corpus.experts());
    let pipeline = Pipeline::new(&config.pipeline)?;
    let queries = cases
        .iter()
        .map(|c| Query {
            text: c.text.clone(),
            terms: term_bag(&c.text, &pipeline, &train.vocab),
            task: config.task,
        })
        .collect();
    Ok(Repetition {
        train,
        cases,
        queries,
        dropped,
    })
}

fn run_one(rep: &Repetition, spec: &ConfigSpec, config: &ExperimentConfig, seed: u64) -> Result<RepMetrics> {
    let profiles = spec.build_profiles(&rep.train, &config.params, seed)?;
    let index = index_profiles(&rep.train, &profiles, config.bm25)?;
    let per_query = evaluate(&index, &rep.cases, &rep.queries, config.cutoff)?;
    let n = per_query.len().max(1) as f64;
    let avg = |m: Metric| per_query.iter().map(|q| q.get(m)).sum::<f64>() / n;
    Ok(RepMetrics {
        mean_k: profiles.mean_k(),
        subprofiles: profiles.len(),
        mean: QueryMetrics {
            recall: avg(Metric::Recall),
            precision: avg(Metric::Precision),
            ndcg: avg(Metric::Ndcg),
        },
        per_query,
    })
}

/// Runs the whole protocol: per repetition split, vocabulary, profiles for
/// every configuration, index, queries and metrics; then averages over
/// repetitions, assigns per-metric positions and RRF, and computes
/// improvements against each baseline.
///
/// A configuration that fails on any repetition is recorded in
/// [`ExperimentResult::failures`] and left out of the ranking.
pub fn run_experiment(corpus: &Corpus, config: &ExperimentConfig) -> Result<ExperimentResult> {
    if config.grid.is_empty() {
        return Err(Error::invalid("the configuration grid is empty"));
    }
    if config.cutoff == 0 {
        return Err(Error::invalid("cutoff must be at least 1"));
    }
    let labels: Vec<String> = config.grid.iter().map(ConfigSpec::label).collect();
    if labels.iter().collect::<BTreeSet<_>>().len() != labels.len() {
        return Err(Error::invalid("the configuration grid has duplicates"));
    }
    config.split_plan().validate()?;
    let corpus = filter_experts_min_docs(corpus, config.min_docs.max(1))?;
    if corpus.is_empty() {
        return Err(Error::invalid(format!(
            "no expert has at least {} documents",
            config.min_docs
        )));
    }

    let reps: Vec<Repetition> = (0..config.repetitions)
        .into_par_iter()
        .map(|r| prepare_repetition(&corpus, config, r))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..reps.len())
        .flat_map(|r| (0..config.grid.len()).map(move |c| (r, c)))
        .collect();
    let outcomes: Vec<Result<RepMetrics>> = jobs
        .par_iter()
        .map(|&(r, c)| {
            let seed = seed::derive(seed::derive_index(config.seed, r as u64), &labels[c]);
            run_one(&reps[r], &config.grid[c], config, seed)
        })
        .collect();

    let mut per_config: Vec<Vec<RepMetrics>> = vec![Vec::new(); config.grid.len()];
    let mut failed = vec![false; config.grid.len()];
    let mut failures = Vec::new();
    for (&(r, c), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(m) => per_config[c].push(m),
            Err(e) => {
                failed[c] = true;
                failures.push(ConfigFailure {
                    label: labels[c].clone(),
                    repetition: r,
                    message: e.to_string(),
                });
            }
        }
    }

    let mut rows: Vec<ConfigResult> = Vec::new();
    for (c, reps_c) in per_config.into_iter().enumerate() {
        if failed[c] {
            continue;
        }
        let nr = reps_c.len() as f64;
        let avg = |f: &dyn Fn(&RepMetrics) -> f64| reps_c.iter().map(f).sum::<f64>() / nr;
        rows.push(ConfigResult {
            spec: config.grid[c],
            label: labels[c].clone(),
            mean_k: avg(&|r| r.mean_k),
            mean: QueryMetrics {
                recall: avg(&|r| r.mean.recall),
                precision: avg(&|r| r.mean.precision),
                ndcg: avg(&|r| r.mean.ndcg),
            },
            position_recall: 0,
            position_precision: 0,
            position_ndcg: 0,
            rrf: 0.0,
            reps: reps_c,
        });
    }

    if !rows.is_empty() {
        let positions: Vec<Vec<usize>> = Metric::ALL
            .iter()
            .map(|&m| competition_positions(&rows.iter().map(|r| r.mean.get(m)).collect::<Vec<_>>()))
            .collect();
        for (i, row) in rows.iter_mut().enumerate() {
            row.position_recall = positions[0][i];
            row.position_precision = positions[1][i];
            row.position_ndcg = positions[2][i];
            row.rrf = rrf(&[positions[0][i], positions[1][i], positions[2][i]], config.rrf_c);
        }
        rows.sort_by(|a, b| b.rrf.total_cmp(&a.rrf).then_with(|| a.label.cmp(&b.label)));
    }

    let mut improvements = Vec::new();
    for row in rows.iter().filter(|r| matches!(r.spec, ConfigSpec::Clustering { .. })) {
        for base in rows.iter().filter(|r| matches!(r.spec, ConfigSpec::Baseline(_))) {
            for m in Metric::ALL {
                if let Ok(pct) = improvement_pct(row.mean.get(m), base.mean.get(m)) {
                    improvements.push(Improvement {
                        label: row.label.clone(),
                        baseline: base.label.clone(),
                        metric: m,
                        pct,
                    });
                }
            }
        }
    }

    Ok(ExperimentResult {
        task: config.task,
        cutoff: config.cutoff,
        rows,
        failures,
        queries_per_rep: reps.iter().map(|r| r.cases.len()).collect(),
        dropped_per_rep: reps.iter().map(|r| r.dropped).collect(),
        improvements,
    })
}
