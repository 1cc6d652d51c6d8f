//! The run manifest, written before a command produces any output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::settings::Settings;

/// Default behaviours of each stage that a rerun depends on. Bump the tag
/// when a default changes so old manifests stay interpretable.
const STAGE_DEFAULTS: &[(&str, &str)] = &[
    ("seeds", "fnv1a-label+splitmix64/chacha8"),
    (
        "textprep",
        "lowercase,strip-numbers,stopwords-before-stemming,df-pruning-after-stemming",
    ),
    ("vectorize", "tfidf=tf*ln(N/df),cosine"),
    ("kmeans", "spherical,kmeans++,best-of-restarts,farthest-point-repair"),
    ("pam", "build+swap"),
    ("agnes", "nn-chain,lance-williams"),
    ("diana", "splinter-by-mean-dissimilarity,largest-diameter-first"),
    ("lda", "collapsed-gibbs,most-probable-topic"),
    ("som", "grid,hit-cell-codebook-kmeans,bmu-inheritance"),
    ("bm25", "idf=ln(1+(N-df+0.5)/(df+0.5)),zero-length-as-1,multiset-query"),
    ("fusion", "comblgdcs,ties-by-expert-id"),
    ("eval", "macro-average-per-repetition,competition-positions,rrf"),
];

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Every resolved setting; feeding this file back through `--config`
    /// reproduces the run.
    pub config: BTreeMap<String, String>,
    pub stage_defaults: BTreeMap<String, String>,
    pub started_unix_seconds: u64,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, settings: &Settings, seed: u64, outputs: Vec<PathBuf>) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config: settings.snapshot(),
            stage_defaults: STAGE_DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            started_unix_seconds: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            outputs,
        }
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(path, text)
    }
}
