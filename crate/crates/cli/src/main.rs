//! `subprofiles`: build multi-faceted expert profiles, index them and run
//! the evaluation grid.
//!
//! Every flag has a config-file key (shown in `--help`); flags override the
//! file given with `--config`, which overrides the built-in defaults.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 for an invalid
//! corpus or a missing artifact, 4 when a pipeline stage fails.

mod commands;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Failure, Outcome};
use settings::Settings;

type Flags = Vec<(&'static str, Option<String>)>;

fn flag<T: ToString>(key: &'static str, value: &Option<T>) -> (&'static str, Option<String>) {
    (key, value.as_ref().map(ToString::to_string))
}

fn path_flag(key: &'static str, value: &Option<PathBuf>) -> (&'static str, Option<String>) {
    (key, value.as_ref().map(|p| p.display().to_string()))
}

#[derive(Parser)]
#[command(name = "subprofiles", version, about = "Expert finding with clustered subprofiles")]
struct Cli {
    /// Config file (`section.key = value` lines) or a run manifest.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed [run.seed].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core [run.jobs].
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory [run.out_dir].
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus, drop experts with too few documents and store it.
    Ingest(CorpusArgs),
    /// Generate a planted-topic corpus with known topic labels.
    Synth(SynthArgs),
    /// Cluster training documents and write `doc_id,cluster_label` rows.
    Cluster(StageArgs),
    /// Build a profile set (clustered subprofiles or a baseline).
    Profiles(StageArgs),
    /// Build a BM25 index over a profile set.
    Index(IndexArgs),
    /// Rank experts for a query against a built index.
    Query(QueryArgs),
    /// Run the evaluation grid over repeated train/test splits.
    Experiment(ExperimentArgs),
    /// Contingency matrix, top terms and subprofile sizes.
    Report(ReportArgs),
}

#[derive(Args)]
struct CorpusArgs {
    /// JSON Lines corpus [corpus.path].
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Minimum documents per expert [corpus.min_docs].
    #[arg(long)]
    min_docs: Option<usize>,
}

impl CorpusArgs {
    fn flags(&self) -> Flags {
        vec![
            path_flag("corpus.path", &self.corpus),
            flag("corpus.min_docs", &self.min_docs),
        ]
    }
}

#[derive(Args)]
struct SplitArgs {
    /// Training share of each split [split.train_fraction].
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Number of splits [split.repetitions].
    #[arg(long)]
    repetitions: Option<usize>,
}

impl SplitArgs {
    fn flags(&self) -> Flags {
        vec![
            flag("split.train_fraction", &self.train_fraction),
            flag("split.repetitions", &self.repetitions),
        ]
    }
}

#[derive(Args)]
struct TextArgs {
    /// `spanish`, `none` or a stopword file [text.stopwords].
    #[arg(long)]
    stopwords: Option<String>,
    /// `spanish`, `english` or `none` [text.stemmer].
    #[arg(long)]
    stemmer: Option<String>,
    /// Minimum document-frequency fraction [text.min_df_fraction].
    #[arg(long)]
    min_df_fraction: Option<f64>,
}

impl TextArgs {
    fn flags(&self) -> Flags {
        vec![
            flag("text.stopwords", &self.stopwords),
            flag("text.stemmer", &self.stemmer),
            flag("text.min_df_fraction", &self.min_df_fraction),
        ]
    }
}

#[derive(Args)]
struct Bm25Args {
    /// BM25 k1 [bm25.k1].
    #[arg(long)]
    k1: Option<f64>,
    /// BM25 b [bm25.b].
    #[arg(long)]
    b: Option<f64>,
}

impl Bm25Args {
    fn flags(&self) -> Flags {
        vec![flag("bm25.k1", &self.k1), flag("bm25.b", &self.b)]
    }
}

#[derive(Args)]
struct StageArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    text: TextArgs,
    /// Use this split's training half instead of the whole corpus [split.repetition].
    #[arg(long)]
    repetition: Option<usize>,
    /// `local` or `global` [cluster.scope].
    #[arg(long)]
    scope: Option<String>,
    /// kmeans, pam, agnes, diana, lda or som-km [cluster.algo].
    #[arg(long)]
    algo: Option<String>,
    /// groups, mn_over_t, sqrt_n_half or fixed [cluster.k_strategy].
    #[arg(long)]
    k_strategy: Option<String>,
    /// k for the fixed strategy [cluster.k].
    #[arg(long)]
    k: Option<usize>,
    /// Clustering seed [cluster.seed].
    #[arg(long)]
    cluster_seed: Option<u64>,
    /// monolithic, committee or intervention instead of clustering [profiles.baseline].
    #[arg(long)]
    baseline: Option<String>,
    /// Output path [artifacts.clustering for `cluster`, artifacts.profiles for `profiles`].
    #[arg(long)]
    output: Option<PathBuf>,
}

impl StageArgs {
    fn flags(&self, output_key: &'static str) -> Flags {
        let mut f = self.corpus.flags();
        f.extend(self.split.flags());
        f.extend(self.text.flags());
        f.extend([
            flag("split.repetition", &self.repetition),
            flag("cluster.scope", &self.scope),
            flag("cluster.algo", &self.algo),
            flag("cluster.k_strategy", &self.k_strategy),
            flag("cluster.k", &self.k),
            flag("cluster.seed", &self.cluster_seed),
            flag("profiles.baseline", &self.baseline),
            path_flag(output_key, &self.output),
        ]);
        f
    }
}

#[derive(Args)]
struct SynthArgs {
    /// [synth.topics]
    #[arg(long)]
    topics: Option<usize>,
    /// [synth.experts]
    #[arg(long)]
    experts: Option<usize>,
    /// [synth.docs_min]
    #[arg(long)]
    docs_min: Option<usize>,
    /// [synth.docs_max]
    #[arg(long)]
    docs_max: Option<usize>,
    /// [synth.length_min]
    #[arg(long)]
    length_min: Option<usize>,
    /// [synth.length_max]
    #[arg(long)]
    length_max: Option<usize>,
    /// [synth.words_per_topic]
    #[arg(long)]
    words_per_topic: Option<usize>,
    /// [synth.overlap]
    #[arg(long)]
    overlap: Option<f64>,
    /// Topics per expert; 0 means all [synth.topics_per_expert].
    #[arg(long)]
    topics_per_expert: Option<usize>,
    /// [synth.zipf]
    #[arg(long)]
    zipf: Option<f64>,
}

impl SynthArgs {
    fn flags(&self) -> Flags {
        vec![
            flag("synth.topics", &self.topics),
            flag("synth.experts", &self.experts),
            flag("synth.docs_min", &self.docs_min),
            flag("synth.docs_max", &self.docs_max),
            flag("synth.length_min", &self.length_min),
            flag("synth.length_max", &self.length_max),
            flag("synth.words_per_topic", &self.words_per_topic),
            flag("synth.overlap", &self.overlap),
            flag("synth.topics_per_expert", &self.topics_per_expert),
            flag("synth.zipf", &self.zipf),
        ]
    }
}

#[derive(Args)]
struct IndexArgs {
    /// JSON Lines corpus [corpus.path].
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    text: TextArgs,
    #[command(flatten)]
    bm25: Bm25Args,
    /// Profile set to index [artifacts.profiles].
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Output path [artifacts.index].
    #[arg(long)]
    output: Option<PathBuf>,
}

impl IndexArgs {
    fn flags(&self) -> Flags {
        let mut f = vec![path_flag("corpus.path", &self.corpus)];
        f.extend(self.text.flags());
        f.extend(self.bm25.flags());
        f.push(path_flag("artifacts.profiles", &self.profiles));
        f.push(path_flag("artifacts.index", &self.output));
        f
    }
}

#[derive(Args)]
struct QueryArgs {
    /// Query text.
    text: String,
    /// Index to search [artifacts.index].
    #[arg(long)]
    index: Option<PathBuf>,
    /// `filtering` or `recommendation` [eval.task].
    #[arg(long)]
    task: Option<String>,
    /// Experts listed [eval.cutoff].
    #[arg(long)]
    cutoff: Option<usize>,
    /// [query.id]
    #[arg(long)]
    query_id: Option<String>,
    /// [query.run_tag]
    #[arg(long)]
    run_tag: Option<String>,
}

impl QueryArgs {
    fn flags(&self) -> Flags {
        vec![
            path_flag("artifacts.index", &self.index),
            flag("eval.task", &self.task),
            flag("eval.cutoff", &self.cutoff),
            flag("query.id", &self.query_id),
            flag("query.run_tag", &self.run_tag),
        ]
    }
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    text: TextArgs,
    #[command(flatten)]
    bm25: Bm25Args,
    /// `filtering` or `recommendation` [eval.task].
    #[arg(long)]
    task: Option<String>,
    /// `full` or comma-separated labels such as `global/kmeans/fixed=6,baseline/monolithic` [eval.grid].
    #[arg(long)]
    grid: Option<String>,
    /// Metric cutoff [eval.cutoff].
    #[arg(long)]
    cutoff: Option<usize>,
}

impl ExperimentArgs {
    fn flags(&self) -> Flags {
        let mut f = self.corpus.flags();
        f.extend(self.split.flags());
        f.extend(self.text.flags());
        f.extend(self.bm25.flags());
        f.extend([
            flag("eval.task", &self.task),
            flag("eval.grid", &self.grid),
            flag("eval.cutoff", &self.cutoff),
        ]);
        f
    }
}

#[derive(Args)]
struct ReportArgs {
    /// JSON Lines corpus [corpus.path].
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    text: TextArgs,
    /// Profile set to describe [artifacts.profiles].
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Clustering for the contingency matrix [artifacts.clustering].
    #[arg(long)]
    clustering: Option<PathBuf>,
    /// Terms listed per subprofile [report.top_n].
    #[arg(long)]
    top_n: Option<usize>,
    /// `tokens` or `distinct_terms` [report.size_measure].
    #[arg(long)]
    size_measure: Option<String>,
}

impl ReportArgs {
    fn flags(&self) -> Flags {
        let mut f = vec![path_flag("corpus.path", &self.corpus)];
        f.extend(self.text.flags());
        f.extend([
            path_flag("artifacts.profiles", &self.profiles),
            path_flag("artifacts.clustering", &self.clustering),
            flag("report.top_n", &self.top_n),
            flag("report.size_measure", &self.size_measure),
        ]);
        f
    }
}

fn settings(cli: &Cli) -> Outcome<Settings> {
    let mut s = Settings::defaults();
    if let Some(path) = &cli.config {
        s.apply_file(path)?;
    }
    s.apply_flags(&[
        flag("run.seed", &cli.seed),
        flag("run.jobs", &cli.jobs),
        path_flag("run.out_dir", &cli.out_dir),
    ]);
    let flags = match &cli.command {
        Command::Ingest(a) => a.flags(),
        Command::Synth(a) => a.flags(),
        Command::Cluster(a) => a.flags("artifacts.clustering"),
        Command::Profiles(a) => a.flags("artifacts.profiles"),
        Command::Index(a) => a.flags(),
        Command::Query(a) => a.flags(),
        Command::Experiment(a) => a.flags(),
        Command::Report(a) => a.flags(),
    };
    s.apply_flags(&flags);
    Ok(s)
}

fn run(cli: &Cli) -> Outcome {
    let s = settings(cli)?;
    let jobs: usize = s.get("run.jobs")?;
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Config(e.into()))?;
    }
    match &cli.command {
        Command::Ingest(_) => commands::ingest(&s),
        Command::Synth(_) => commands::synth(&s),
        Command::Cluster(_) => commands::cluster(&s),
        Command::Profiles(_) => commands::profiles(&s),
        Command::Index(_) => commands::index(&s),
        Command::Query(q) => commands::query(&s, &q.text),
        Command::Experiment(_) => commands::experiment(&s),
        Command::Report(_) => commands::report(&s),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.exit_code())
        }
    }
}
