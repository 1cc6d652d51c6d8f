//! One function per subcommand. Each resolves its settings, writes the run
//! manifest, then its outputs.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use subprofiles::cluster::{read_clustering_csv, Algorithm, Clustering, KStrategy};
use subprofiles::corpus::{filter_experts_min_docs, load_corpus, save_corpus, split_train_test, Corpus, SplitPlan};
use subprofiles::eval::{run_experiment, Baseline, ConfigSpec, ExperimentConfig};
use subprofiles::profiles::{global_clustering, ClusterParams, ClusterSettings, ProfileSet, Scope, TrainingSet};
use subprofiles::report::{
    contingency, profile_size_distribution, top_terms, write_size_distribution_csv, write_top_terms_csv, SizeMeasure,
    SubprofileTermStats,
};
use subprofiles::retrieval::{Bm25Params, Index, Task};
use subprofiles::synthgen::{generate, MixtureSpec, PlantedSpec};
use subprofiles::textprep::{
    build_vocabulary, bundled_spanish_stopwords, load_stopwords, Pipeline, StemmerKind, TokenPipelineConfig,
};
use subprofiles::{seed, Error};

use crate::manifest::RunManifest;
use crate::settings::{ConfigError, Settings};

/// A failed command; the variant decides the exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad settings (2).
    Config(anyhow::Error),
    /// Unreadable or invalid corpus, or a missing artifact (3).
    Input(anyhow::Error),
    /// A pipeline stage failed (4).
    Stage(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Input(_) => 3,
            Failure::Stage(_) => 4,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Input(e) | Failure::Stage(e) => e,
        }
    }

    /// Classifies a library error raised while running a stage.
    fn from_stage(e: Error, context: &str) -> Self {
        let class: fn(anyhow::Error) -> Failure = match &e {
            Error::Config(_) | Error::UnknownStemmer(_) => Failure::Config,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::DuplicateDocId(_)
            | Error::EmptyBody(_)
            | Error::EmptyAuthor(_) => Failure::Input,
            _ => Failure::Stage,
        };
        class(anyhow::Error::new(e).context(context.to_string()))
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

trait StageExt<T> {
    fn stage(self, context: &str) -> Outcome<T>;
}

impl<T> StageExt<T> for subprofiles::Result<T> {
    fn stage(self, context: &str) -> Outcome<T> {
        self.map_err(|e| Failure::from_stage(e, context))
    }
}

fn config_err(msg: impl Into<String>) -> Failure {
    Failure::Config(anyhow!(msg.into()))
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Stage(anyhow::Error::new(e).context(format!("cannot write {}", path.display())))
}

// ---------------------------------------------------------------------------
// Settings resolution

pub fn out_dir(s: &Settings) -> Outcome<PathBuf> {
    let dir: PathBuf = s.get("run.out_dir")?;
    std::fs::create_dir_all(&dir).map_err(write_err(&dir))?;
    Ok(dir)
}

fn master_seed(s: &Settings) -> Outcome<u64> {
    Ok(s.get("run.seed")?)
}

fn artifact(s: &Settings, key: &str, out: &Path, default_name: &str) -> Outcome<PathBuf> {
    Ok(s.opt::<PathBuf>(key)?.unwrap_or_else(|| out.join(default_name)))
}

fn pipeline(s: &Settings) -> Outcome<TokenPipelineConfig> {
    let stemmer: String = s.get("text.stemmer")?;
    stemmer
        .parse::<StemmerKind>()
        .map_err(|e| config_err(format!("text.stemmer: {e}")))?;
    let stopwords = match s.get::<String>("text.stopwords")?.as_str() {
        "spanish" => bundled_spanish_stopwords(),
        "none" => BTreeSet::new(),
        path => load_stopwords(path).map_err(|e| Failure::Input(anyhow::Error::new(e).context("stopword file")))?,
    };
    let min_doc_fraction: f64 = s.get("text.min_df_fraction")?;
    if !(0.0..=1.0).contains(&min_doc_fraction) {
        return Err(config_err("text.min_df_fraction must lie in [0, 1]"));
    }
    Ok(TokenPipelineConfig {
        stopwords,
        stemmer,
        min_doc_fraction,
        ..TokenPipelineConfig::default()
    })
}

fn cluster_params(s: &Settings) -> Outcome<ClusterParams> {
    let som_grid = match s.raw("som.grid") {
        None => None,
        Some(g) => {
            let parsed = g
                .split_once('x')
                .and_then(|(r, c)| Some((r.trim().parse().ok()?, c.trim().parse().ok()?)));
            Some(parsed.ok_or_else(|| config_err(format!("som.grid: expected ROWSxCOLS, got {g:?}")))?)
        }
    };
    let linkage: String = s.get("cluster.linkage")?;
    let som_mode: String = s.get("som.mode")?;
    Ok(ClusterParams {
        max_iter: s.get("cluster.max_iter")?,
        kmeans_restarts: s.get("cluster.kmeans_restarts")?,
        linkage: linkage
            .parse()
            .map_err(|e| config_err(format!("cluster.linkage: {e}")))?,
        lda_alpha: s.opt("lda.alpha")?,
        lda_beta: s.get("lda.beta")?,
        lda_iterations: s.get("lda.iterations")?,
        lda_burn_in: s.get("lda.burn_in")?,
        som_epochs: s.get("som.epochs")?,
        som_mode: som_mode.parse().map_err(|e| config_err(format!("som.mode: {e}")))?,
        som_grid,
    })
}

fn k_strategy(s: &Settings) -> Outcome<KStrategy> {
    let raw: String = s.get("cluster.k_strategy")?;
    if raw == "fixed" {
        let k: usize = s
            .opt("cluster.k")?
            .ok_or_else(|| config_err("cluster.k_strategy = fixed needs cluster.k"))?;
        return Ok(KStrategy::Fixed(k));
    }
    raw.parse().map_err(|e| config_err(format!("cluster.k_strategy: {e}")))
}

/// The profile configuration selected by `profiles.baseline` or the
/// `cluster.*` keys.
fn config_spec(s: &Settings) -> Outcome<ConfigSpec> {
    if let Some(b) = s.raw("profiles.baseline") {
        let b: Baseline = b.parse().map_err(|e| config_err(format!("profiles.baseline: {e}")))?;
        return Ok(ConfigSpec::Baseline(b));
    }
    let scope: String = s.get("cluster.scope")?;
    let algo: String = s.get("cluster.algo")?;
    Ok(ConfigSpec::Clustering {
        scope: scope.parse().map_err(|e| config_err(format!("cluster.scope: {e}")))?,
        algorithm: algo
            .parse::<Algorithm>()
            .map_err(|e| config_err(format!("cluster.algo: {e}")))?,
        k_strategy: k_strategy(s)?,
    })
}

fn split_plan(s: &Settings) -> Outcome<SplitPlan> {
    let plan = SplitPlan {
        train_fraction: s.get("split.train_fraction")?,
        repetitions: s.get("split.repetitions")?,
        seed: seed::derive(master_seed(s)?, "split"),
    };
    plan.validate().map_err(|e| config_err(e.to_string()))?;
    Ok(plan)
}

fn bm25(s: &Settings) -> Outcome<Bm25Params> {
    Ok(Bm25Params {
        k1: s.get("bm25.k1")?,
        b: s.get("bm25.b")?,
    })
}

fn task(s: &Settings) -> Outcome<Task> {
    let t: String = s.get("eval.task")?;
    t.parse().map_err(|e| config_err(format!("eval.task: {e}")))
}

// ---------------------------------------------------------------------------
// Inputs

fn corpus_path(s: &Settings, out: &Path) -> Outcome<PathBuf> {
    if let Some(p) = s.opt::<PathBuf>("corpus.path")? {
        return Ok(p);
    }
    let ingested = out.join("corpus.jsonl");
    if ingested.exists() {
        return Ok(ingested);
    }
    Err(Failure::Input(anyhow!(
        "no corpus: pass --corpus or run `ingest` into {}",
        out.display()
    )))
}

fn read_corpus_file(path: &Path) -> Outcome<Corpus> {
    load_corpus(path).map_err(|e| Failure::Input(anyhow::Error::new(e).context(format!("corpus {}", path.display()))))
}

/// The corpus restricted to experts with enough documents.
fn filtered_corpus(s: &Settings, out: &Path) -> Outcome<Corpus> {
    let corpus = read_corpus_file(&corpus_path(s, out)?)?;
    let min_docs: usize = s.get("corpus.min_docs")?;
    let kept = filter_experts_min_docs(&corpus, min_docs.max(1)).stage("filtering experts")?;
    if kept.is_empty() {
        return Err(Failure::Input(anyhow!("no expert has at least {min_docs} documents")));
    }
    Ok(kept)
}

/// The documents profiles are built from: one split's training half when
/// `split.repetition` is set, otherwise the whole filtered corpus.
fn training_corpus(s: &Settings, out: &Path) -> Outcome<(Corpus, Option<usize>)> {
    let corpus = filtered_corpus(s, out)?;
    match s.opt::<usize>("split.repetition")? {
        None => Ok((corpus, None)),
        Some(r) => {
            let plan = split_plan(s)?;
            if r >= plan.repetitions {
                return Err(config_err(format!(
                    "split.repetition = {r} but split.repetitions = {}",
                    plan.repetitions
                )));
            }
            let (train, _) = split_train_test(&corpus, &plan, r).stage("splitting")?;
            Ok((train, Some(r)))
        }
    }
}

/// Seed for one configuration; matches the seed the experiment uses on the
/// same repetition, so stage-wise artifacts reproduce experiment profiles.
fn config_seed(s: &Settings, spec: &ConfigSpec, repetition: Option<usize>) -> Outcome<u64> {
    if let Some(seed) = s.opt("cluster.seed")? {
        return Ok(seed);
    }
    let master = master_seed(s)?;
    let base = repetition.map_or(master, |r| seed::derive_index(master, r as u64));
    Ok(seed::derive(base, &spec.label()))
}

fn read_profiles(path: &Path, corpus: &Corpus) -> Outcome<ProfileSet> {
    let file = File::open(path)
        .map_err(|e| Failure::Input(anyhow::Error::new(e).context(format!("profile set {}", path.display()))))?;
    ProfileSet::read_jsonl(BufReader::new(file), corpus)
        .map_err(|e| Failure::Input(anyhow::Error::new(e).context(format!("profile set {}", path.display()))))
}

/// The documents a profile set was built from.
fn profiled_documents(profiles: &ProfileSet, corpus: &Corpus) -> Outcome<Corpus> {
    let ids: BTreeSet<&str> = profiles
        .subprofiles
        .iter()
        .flat_map(|s| s.doc_ids.iter().map(String::as_str))
        .collect();
    Corpus::new(
        corpus
            .documents()
            .iter()
            .filter(|d| ids.contains(d.doc_id.as_str()))
            .cloned()
            .collect(),
    )
    .stage("collecting profiled documents")
}

// ---------------------------------------------------------------------------
// Outputs

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(write_err(parent))?;
    }
    File::create(path).map(BufWriter::new).map_err(write_err(path))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Outcome {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(write_err(path))
}

fn manifest(command: &str, s: &Settings, out: &Path, outputs: &[&Path]) -> Outcome {
    let path = out.join(format!("manifest-{command}.json"));
    RunManifest::new(
        command,
        s,
        master_seed(s)?,
        outputs.iter().map(|p| p.to_path_buf()).collect(),
    )
    .write(&path)
    .map_err(write_err(&path))
}

// ---------------------------------------------------------------------------
// Commands

pub fn ingest(s: &Settings) -> Outcome {
    let out = out_dir(s)?;
    let path = corpus_path(s, &out)?;
    let raw = read_corpus_file(&path)?;
    let kept = filtered_corpus(s, &out)?;
    let target = out.join("corpus.jsonl");
    manifest("ingest", s, &out, &[&target])?;
    save_corpus(&kept, &target).stage("writing corpus")?;
    println!(
        "{} of {} documents kept; {} of {} experts; {} groups -> {}",
        kept.len(),
        raw.len(),
        kept.experts().len(),
        raw.experts().len(),
        kept.groups().len(),
        target.display()
    );
    Ok(())
}

pub fn synth(s: &Settings) -> Outcome {
    let out = out_dir(s)?;
    let per_expert: usize = s.get("synth.topics_per_expert")?;
    let spec = PlantedSpec {
        topics: s.get("synth.topics")?,
        words_per_topic: s.get("synth.words_per_topic")?,
        overlap: s.get("synth.overlap")?,
        experts: s.get("synth.experts")?,
        docs_per_expert: (s.get("synth.docs_min")?, s.get("synth.docs_max")?),
        doc_length: (s.get("synth.length_min")?, s.get("synth.length_max")?),
        title_length: 4,
        mixture: if per_expert == 0 {
            MixtureSpec::Uniform
        } else {
            MixtureSpec::Subset {
                weights: vec![1.0; per_expert],
            }
        },
        zipf_exponent: s.opt("synth.zipf")?,
        seed: seed::derive(master_seed(s)?, "synth"),
    };
    let planted = generate(&spec).map_err(|e| config_err(format!("synthetic corpus: {e}")))?;
    let corpus_path = out.join("corpus.jsonl");
    let labels_path = out.join("labels.csv");
    manifest("synth", s, &out, &[&corpus_path, &labels_path])?;
    save_corpus(&planted.corpus, &corpus_path).stage("writing corpus")?;
    write_with(&labels_path, |w| planted.write_labels_csv(w))?;
    println!(
        "{} documents by {} experts on {} topics -> {}",
        planted.corpus.len(),
        planted.corpus.experts().len(),
        spec.topics,
        corpus_path.display()
    );
    Ok(())
}

pub fn cluster(s: &Settings) -> Outcome {
    let out = out_dir(s)?;
    let spec = config_spec(s)?;
    let ConfigSpec::Clustering {
        scope,
        algorithm,
        k_strategy,
    } = spec
    else {
        return Err(config_err("`cluster` needs a clustering algorithm, not a baseline"));
    };
    let params = cluster_params(s)?;
    let (train, rep) = training_corpus(s, &out)?;
    let seed = config_seed(s, &spec, rep)?;
    let target = artifact(s, "artifacts.clustering", &out, "clustering.csv")?;
    manifest("cluster", s, &out, &[&target])?;

    let train = TrainingSet::new(train, pipeline(s)?).stage("building the vocabulary")?;
    let settings = ClusterSettings {
        algorithm,
        k_strategy,
        seed,
        params,
    };
    let clustering = match scope {
        Scope::Global => global_clustering(&train, &settings).stage("global clustering")?.0,
        Scope::Local => {
            // Each document is labeled with its subprofile.
            let profiles = spec
                .build_profiles(&train, &settings.params, seed)
                .stage("local clustering")?;
            subprofile_clustering(&profiles, &train.corpus, algorithm, seed)
        }
    };
    write_with(&target, |w| clustering.write_csv(&k_strategy.to_string(), w))?;
    println!(
        "{} documents in {} clusters ({} {}) -> {}",
        clustering.len(),
        clustering.non_empty_clusters(),
        scope,
        algorithm,
        target.display()
    );
    Ok(())
}

/// Labels every document with the index of its subprofile.
fn subprofile_clustering(profiles: &ProfileSet, corpus: &Corpus, algorithm: Algorithm, seed: u64) -> Clustering {
    let owner: std::collections::HashMap<&str, usize> = profiles
        .subprofiles
        .iter()
        .enumerate()
        .flat_map(|(i, sp)| sp.doc_ids.iter().map(move |d| (d.as_str(), i)))
        .collect();
    let (doc_ids, labels) = corpus
        .documents()
        .iter()
        .map(|d| (d.doc_id.clone(), owner[d.doc_id.as_str()]))
        .unzip();
    Clustering::new(doc_ids, labels, profiles.len(), algorithm, seed, 0)
}

pub fn profiles(s: &Settings) -> Outcome {
    let out = out_dir(s)?;
    let spec = config_spec(s)?;
    let params = cluster_params(s)?;
    let (train, rep) = training_corpus(s, &out)?;
    let seed = config_seed(s, &spec, rep)?;
    let target = artifact(s, "artifacts.profiles", &out, "profiles.jsonl")?;
    manifest("profiles", s, &out, &[&target])?;

    let train = TrainingSet::new(train, pipeline(s)?).stage("building the vocabulary")?;
    let profiles = spec.build_profiles(&train, &params, seed).stage("building profiles")?;
    write_with(&target, |w| profiles.write_jsonl(w))?;
    println!(
        "{}: {} subprofiles for {} experts (mean k {:.2}) -> {}",
        spec.label(),
        profiles.len(),
        profiles.experts().len(),
        profiles.mean_k(),
        target.display()
    );
    Ok(())
}

pub fn index(s: &Settings) -> Outcome {
    let out = out_dir(s)?;
    let corpus = read_corpus_file(&corpus_path(s, &out)?)?;
    let profiles_path = artifact(s, "artifacts.profiles", &out, "profiles.jsonl")?;
    let profiles = read_profiles(&profiles_path, &corpus)?;
    let config = pipeline(s)?;
    let params = bm25(s)?;
    let target = artifact(s, "artifacts.index", &out, "index.json")?;
    manifest("index", s, &out, &[&target])?;

    let train = profiled_documents(&profiles, &corpus)?;
    let vocab = build_vocabulary(&train, &config).stage("building the vocabulary")?;
    let index = Index::build(&profiles, &vocab, &config, params).stage("indexing")?;
    index.save(&target).stage("writing the index")?;
    println!(
        "{} subprofiles, {} terms, average length {:.1} -> {}",
        index.len(),
        vocab.len(),
        index.avg_len(),
        target.display()
    );
    Ok(())
}

pub fn query(s: &Settings, text: &str) -> Outcome {
    let out: PathBuf = s.get("run.out_dir")?;
    let path = artifact(s, "artifacts.index", &out, "index.json")?;
    if !path.exists() {
        return Err(Failure::Input(anyhow!(
            "missing index {}; run `index` first",
            path.display()
        )));
    }
    let index = Index::load(&path)
        .map_err(|e| Failure::Input(anyhow::Error::new(e).context(format!("index {}", path.display()))))?;
    let cutoff: usize = s.get("eval.cutoff")?;
    let query_id: String = s.get("query.id")?;
    let run_tag: String = s.get("query.run_tag")?;
    let q = index.query(text, task(s)?).stage("processing the query")?;
    let ranking = index.rank_experts(&q, Some(cutoff));
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    ranking
        .write_trec(&query_id, &run_tag, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Failure::Stage(e.into()))
}

fn experiment_config(s: &Settings) -> Outcome<ExperimentConfig> {
    let grid = match s.get::<String>("eval.grid")?.as_str() {
        "full" => ConfigSpec::full_grid(),
        list => list
            .split(',')
            .map(|l| l.trim())
            .filter(|l| !l.is_empty())
            .map(|l| l.parse().map_err(|e| config_err(format!("eval.grid: {e}"))))
            .collect::<Outcome<Vec<ConfigSpec>>>()?,
    };
    if grid.is_empty() {
        return Err(config_err("eval.grid is empty"));
    }
    let plan = split_plan(s)?;
    let mut config = ExperimentConfig::new(task(s)?, grid);
    config.seed = master_seed(s)?;
    config.min_docs = s.get("corpus.min_docs")?;
    config.train_fraction = plan.train_fraction;
    config.repetitions = plan.repetitions;
    config.pipeline = pipeline(s)?;
    config.bm25 = bm25(s)?;
    config.params = cluster_params(s)?;
    config.cutoff = s.get("eval.cutoff")?;
    config.rrf_c = s.get("eval.rrf_c")?;
    Ok(config)
}

/// File name for a configuration label.
fn run_file_name(label: &str) -> String {
    format!("{}.json", label.replace('/', "__"))
}

pub fn experiment(s: &Settings) -> Outcome {
    let out = out_dir(s)?;
    let config = experiment_config(s)?;
    let corpus = read_corpus_file(&corpus_path(s, &out)?)?;
    let results = out.join("results.csv");
    let improvements = out.join("improvements.csv");
    let failures = out.join("failures.csv");
    let runs = out.join("runs");
    manifest("experiment", s, &out, &[&results, &improvements, &failures, &runs])?;

    let result = run_experiment(&corpus, &config).stage("experiment")?;
    write_with(&results, |w| result.write_csv(w))?;
    write_with(&improvements, |w| result.write_improvements_csv(w))?;
    write_with(&failures, |w| result.write_failures_csv(w))?;
    for row in &result.rows {
        let path = runs.join(run_file_name(&row.label));
        write_with(&path, |w| {
            serde_json::to_writer_pretty(&mut *w, row).map_err(std::io::Error::other)?;
            writeln!(w)
        })?;
    }
    println!(
        "{} configurations ranked, {} failed; {} queries per repetition -> {}",
        result.rows.len(),
        config.grid.len() - result.rows.len(),
        result.queries_per_rep.first().copied().unwrap_or(0),
        results.display()
    );
    for f in &result.failures {
        eprintln!(
            "configuration {} failed on repetition {}: {}",
            f.label, f.repetition, f.message
        );
    }
    if result.rows.is_empty() {
        return Err(Failure::Stage(anyhow!("every configuration failed")));
    }
    Ok(())
}

pub fn report(s: &Settings) -> Outcome {
    let out = out_dir(s)?;
    let corpus = read_corpus_file(&corpus_path(s, &out)?)?;
    let profiles_path = artifact(s, "artifacts.profiles", &out, "profiles.jsonl")?;
    let profiles = read_profiles(&profiles_path, &corpus)?;
    let clustering_path = match s.opt::<PathBuf>("artifacts.clustering")? {
        Some(p) => Some(p),
        None => Some(out.join("clustering.csv")).filter(|p| p.exists()),
    };
    let top_n: usize = s.get("report.top_n")?;
    if top_n == 0 {
        return Err(config_err("report.top_n must be at least 1"));
    }
    let measure: String = s.get("report.size_measure")?;
    let measure: SizeMeasure = measure
        .parse()
        .map_err(|e| config_err(format!("report.size_measure: {e}")))?;
    let config = pipeline(s)?;

    let terms_path = out.join("top_terms.csv");
    let sizes_path = out.join("profile_sizes.csv");
    let contingency_path = out.join("contingency.csv");
    let mut outputs = vec![terms_path.as_path(), sizes_path.as_path()];
    if clustering_path.is_some() {
        outputs.push(&contingency_path);
    }
    manifest("report", s, &out, &outputs)?;

    let train = profiled_documents(&profiles, &corpus)?;
    let vocab = build_vocabulary(&train, &config).stage("building the vocabulary")?;
    let pipe = Pipeline::new(&config).stage("building the pipeline")?;
    let stats = SubprofileTermStats::new(&profiles, &vocab, &pipe);
    let lists = profiles
        .subprofiles
        .iter()
        .map(|sp| Ok((sp.subprofile_id.clone(), top_terms(sp, &stats, &vocab, top_n)?)))
        .collect::<subprofiles::Result<Vec<_>>>()
        .stage("ranking terms")?;
    write_with(&terms_path, |w| write_top_terms_csv(&lists, w))?;
    let dist = profile_size_distribution(&profiles, &stats, measure);
    write_with(&sizes_path, |w| write_size_distribution_csv(&dist, w))?;

    if let Some(path) = clustering_path {
        let file = File::open(&path)
            .map_err(|e| Failure::Input(anyhow::Error::new(e).context(format!("clustering {}", path.display()))))?;
        let (clustering, _) = read_clustering_csv(BufReader::new(file))
            .map_err(|e| Failure::Input(anyhow::Error::new(e).context(format!("clustering {}", path.display()))))?;
        let matrix = contingency(&clustering, &corpus).stage("contingency matrix")?;
        write_with(&contingency_path, |w| matrix.write_csv(w))?;
        println!(
            "contingency {}x{} (permutation: {}) -> {}",
            matrix.groups.len(),
            matrix.clusters.len(),
            matrix.is_permutation(),
            contingency_path.display()
        );
    }
    println!(
        "top {top_n} terms for {} subprofiles -> {}",
        lists.len(),
        terms_path.display()
    );
    Ok(())
}
