//! Run settings: built-in defaults, then a config file, then command-line
//! flags, each layer overriding the one before.
//!
//! The config file is flat `section.key = value` text. Blank lines and lines
//! starting with `#` are ignored. A JSON run manifest written by an earlier
//! run is accepted too; its `config` object is read back as the file layer.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Every recognized key with its default and help text. Keys without a
/// default are unset unless a file or flag provides them.
pub const KEYS: &[(&str, Option<&str>, &str)] = &[
    ("run.seed", Some("0"), "master seed"),
    ("run.jobs", Some("0"), "worker threads; 0 uses every core"),
    ("run.out_dir", Some("out"), "directory for every artifact"),
    ("corpus.path", None, "JSON Lines corpus"),
    ("corpus.min_docs", Some("10"), "minimum documents per expert"),
    ("split.train_fraction", Some("0.8"), "training share of each split"),
    ("split.repetitions", Some("5"), "number of random splits"),
    (
        "split.repetition",
        None,
        "build stage artifacts on this split's training half",
    ),
    (
        "text.stopwords",
        Some("spanish"),
        "`spanish`, `none` or a stopword file",
    ),
    ("text.stemmer", Some("spanish"), "`spanish`, `english` or `none`"),
    (
        "text.min_df_fraction",
        Some("0.01"),
        "minimum document-frequency fraction",
    ),
    ("cluster.scope", Some("global"), "`local` or `global`"),
    (
        "cluster.algo",
        Some("kmeans"),
        "kmeans, pam, agnes, diana, lda or som-km",
    ),
    (
        "cluster.k_strategy",
        Some("mn_over_t"),
        "groups, mn_over_t, sqrt_n_half or fixed",
    ),
    ("cluster.k", None, "k for the fixed strategy"),
    (
        "cluster.seed",
        None,
        "clustering seed; derived from run.seed when unset",
    ),
    (
        "cluster.max_iter",
        Some("100"),
        "K-Means, PAM and codebook iteration cap",
    ),
    ("cluster.kmeans_restarts", Some("10"), "K-Means starts per run"),
    ("cluster.linkage", Some("average"), "AGNES linkage"),
    ("lda.alpha", None, "LDA document-topic prior; 50/k when unset"),
    ("lda.beta", Some("0.01"), "LDA topic-word prior"),
    ("lda.iterations", Some("1000"), "Gibbs sweeps"),
    ("lda.burn_in", Some("200"), "sweeps discarded before averaging"),
    ("som.epochs", Some("100"), "SOM training epochs"),
    ("som.mode", Some("batch"), "`batch` or `online`"),
    ("som.grid", None, "fixed SOM grid as ROWSxCOLS"),
    (
        "profiles.baseline",
        None,
        "monolithic, committee or intervention instead of clustering",
    ),
    ("bm25.k1", Some("1.2"), "BM25 k1"),
    ("bm25.b", Some("0.75"), "BM25 b"),
    ("eval.task", Some("filtering"), "`filtering` or `recommendation`"),
    (
        "eval.grid",
        Some("full"),
        "`full` or comma-separated configuration labels",
    ),
    ("eval.cutoff", Some("10"), "metric cutoff"),
    ("eval.rrf_c", Some("60"), "reciprocal rank fusion constant"),
    ("report.top_n", Some("50"), "terms listed per subprofile"),
    ("report.size_measure", Some("tokens"), "`tokens` or `distinct_terms`"),
    (
        "artifacts.clustering",
        None,
        "clustering CSV; <out_dir>/clustering.csv when unset",
    ),
    (
        "artifacts.profiles",
        None,
        "profile set; <out_dir>/profiles.jsonl when unset",
    ),
    ("artifacts.index", None, "index; <out_dir>/index.json when unset"),
    ("query.id", Some("q1"), "query id in ranking output"),
    ("query.run_tag", Some("subprofiles"), "run tag in ranking output"),
    ("synth.topics", Some("6"), "planted topics"),
    ("synth.experts", Some("50"), "experts"),
    ("synth.docs_min", Some("10"), "fewest documents per expert"),
    ("synth.docs_max", Some("100"), "most documents per expert"),
    ("synth.length_min", Some("30"), "shortest document in tokens"),
    ("synth.length_max", Some("60"), "longest document in tokens"),
    ("synth.words_per_topic", Some("40"), "vocabulary per topic"),
    (
        "synth.overlap",
        Some("0"),
        "share of each topic vocabulary drawn from a common pool",
    ),
    (
        "synth.topics_per_expert",
        Some("3"),
        "topics each expert writes on; 0 means all",
    ),
    (
        "synth.zipf",
        None,
        "Zipf exponent for word sampling; uniform when unset",
    ),
];

/// Where a value came from, for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    Default,
    File { path: PathBuf, line: usize },
    Flag,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Default => f.write_str("default"),
            Source::File { path, line } => write!(f, "{}:{line}", path.display()),
            Source::Flag => f.write_str("command line"),
        }
    }
}

/// A configuration problem; always exit status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, (String, Source)>,
}

#[derive(Serialize, Deserialize)]
struct ManifestConfig {
    config: BTreeMap<String, String>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

impl Settings {
    pub fn defaults() -> Self {
        let values = KEYS
            .iter()
            .filter_map(|(k, d, _)| d.map(|d| (k.to_string(), (d.to_string(), Source::Default))))
            .collect();
        Settings { values }
    }

    /// Parses flat `key = value` text.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let source = Source::File {
                path: path.to_path_buf(),
                line: i + 1,
            };
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError(format!(
                    "{source}: expected `section.key = value`, got {line:?}"
                )));
            };
            let key = key.trim();
            if !known(key) {
                return Err(ConfigError(format!("{source}: unknown key {key:?}")));
            }
            self.values.insert(key.to_string(), (value.trim().to_string(), source));
        }
        Ok(())
    }

    /// Reads a config file or a run manifest.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        if text.trim_start().starts_with('{') {
            let manifest: ManifestConfig = serde_json::from_str(&text)
                .map_err(|e| ConfigError(format!("{}:{}: {e}", path.display(), e.line())))?;
            for (key, value) in manifest.config {
                if !known(&key) {
                    return Err(ConfigError(format!("{}: unknown key {key:?}", path.display())));
                }
                let source = Source::File {
                    path: path.to_path_buf(),
                    line: 0,
                };
                self.values.insert(key, (value, source));
            }
            return Ok(());
        }
        self.apply_text(&text, path)
    }

    /// Applies command-line values; `None` leaves the key untouched.
    pub fn apply_flags(&mut self, flags: &[(&str, Option<String>)]) {
        for (key, value) in flags {
            debug_assert!(known(key), "flag mapped to unknown key {key}");
            if let Some(v) = value {
                self.values.insert(key.to_string(), (v.clone(), Source::Flag));
            }
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    /// Parses an optional value.
    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some((v, source)) => v
                .parse()
                .map(Some)
                .map_err(|e| ConfigError(format!("{source}: bad value {v:?} for {key}: {e}"))),
        }
    }

    /// Parses a value that must be present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.opt(key)?
            .ok_or_else(|| ConfigError(format!("missing setting {key} (set it in the config file or by flag)")))
    }

    /// Resolved values, for the run manifest.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        self.values.iter().map(|(k, (v, _))| (k.clone(), v.clone())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_default_and_flag_overrides_file() {
        let mut s = Settings::defaults();
        assert_eq!(s.get::<usize>("corpus.min_docs").unwrap(), 10);
        s.apply_text("# comment\n\ncorpus.min_docs = 3\nbm25.k1=2.0\n", Path::new("c.conf"))
            .unwrap();
        assert_eq!(s.get::<usize>("corpus.min_docs").unwrap(), 3);
        s.apply_flags(&[("corpus.min_docs", Some("7".into())), ("bm25.k1", None)]);
        assert_eq!(s.get::<usize>("corpus.min_docs").unwrap(), 7);
        assert_eq!(s.get::<f64>("bm25.k1").unwrap(), 2.0);
    }

    #[test]
    fn malformed_lines_are_reported_with_location() {
        let mut s = Settings::defaults();
        let e = s
            .apply_text("run.seed = 1\nnot a pair\n", Path::new("c.conf"))
            .unwrap_err();
        assert!(e.0.starts_with("c.conf:2:"), "{}", e.0);
        let e = s.apply_text("run.sed = 1\n", Path::new("c.conf")).unwrap_err();
        assert!(e.0.contains("unknown key"), "{}", e.0);
    }

    #[test]
    fn bad_values_name_their_source() {
        let mut s = Settings::defaults();
        s.apply_text("eval.cutoff = ten\n", Path::new("c.conf")).unwrap();
        let e = s.get::<usize>("eval.cutoff").unwrap_err();
        assert!(e.0.contains("c.conf:1") && e.0.contains("eval.cutoff"), "{}", e.0);
    }

    #[test]
    fn every_default_parses_as_text() {
        let s = Settings::defaults();
        for (k, d, _) in KEYS {
            assert_eq!(s.raw(k), *d);
        }
    }
}
