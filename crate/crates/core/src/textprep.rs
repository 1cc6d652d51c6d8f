//! Tokenization, stopword removal, stemming and vocabulary pruning.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

const SPANISH_STOPWORDS: &str = include_str!("../data/stopwords_es.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StemmerKind {
    Spanish,
    English,
    None,
}

impl FromStr for StemmerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spanish" | "es" => Ok(StemmerKind::Spanish),
            "english" | "en" => Ok(StemmerKind::English),
            "none" | "noop" => Ok(StemmerKind::None),
            _ => Err(Error::UnknownStemmer(s.to_string())),
        }
    }
}

impl fmt::Display for StemmerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StemmerKind::Spanish => "spanish",
            StemmerKind::English => "english",
            StemmerKind::None => "none",
        })
    }
}

/// Settings shared by clustering and retrieval. The stemmer is held by name
/// and resolved when a [`Pipeline`] is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenPipelineConfig {
    pub stopwords: BTreeSet<String>,
    pub stemmer: String,
    pub min_doc_fraction: f64,
    pub lowercase: bool,
    pub strip_numbers: bool,
}

impl Default for TokenPipelineConfig {
    fn default() -> Self {
        TokenPipelineConfig {
            stopwords: BTreeSet::new(),
            stemmer: StemmerKind::Spanish.to_string(),
            min_doc_fraction: 0.01,
            lowercase: true,
            strip_numbers: true,
        }
    }
}

impl TokenPipelineConfig {
    /// Spanish stemming with the bundled Spanish stopword list.
    pub fn spanish() -> Self {
        TokenPipelineConfig {
            stopwords: parse_stopwords(SPANISH_STOPWORDS),
            ..Self::default()
        }
    }

    /// No stemming and no stopwords. Used for synthetic corpora.
    pub fn plain() -> Self {
        TokenPipelineConfig {
            stemmer: StemmerKind::None.to_string(),
            ..Self::default()
        }
    }
}

pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn load_stopwords(path: impl AsRef<Path>) -> Result<BTreeSet<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_stopwords(&text))
}

pub fn bundled_spanish_stopwords() -> BTreeSet<String> {
    parse_stopwords(SPANISH_STOPWORDS)
}

/// Splits text into maximal alphabetic runs. Digit runs are kept as their own
/// tokens unless `strip_numbers` is set.
pub fn tokenize(text: &str, config: &TokenPipelineConfig) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut numeric = false;

    let flush = |current: &mut String, numeric: bool, tokens: &mut Vec<String>| {
        if !current.is_empty() {
            if !(numeric && config.strip_numbers) {
                tokens.push(std::mem::take(current));
            } else {
                current.clear();
            }
        }
    };

    for ch in text.chars() {
        let class = if ch.is_alphabetic() {
            Some(false)
        } else if ch.is_numeric() {
            Some(true)
        } else {
            None
        };
        match class {
            Some(is_num) => {
                if !current.is_empty() && is_num != numeric {
                    flush(&mut current, numeric, &mut tokens);
                }
                numeric = is_num;
                if config.lowercase {
                    current.extend(ch.to_lowercase());
                } else {
                    current.push(ch);
                }
            }
            None => flush(&mut current, numeric, &mut tokens),
        }
    }
    flush(&mut current, numeric, &mut tokens);
    tokens
}

/// A resolved preprocessing pipeline.
pub struct Pipeline<'a> {
    config: &'a TokenPipelineConfig,
    stemmer: Option<Stemmer>,
}

impl<'a> Pipeline<'a> {
    pub fn new(config: &'a TokenPipelineConfig) -> Result<Self> {
        let stemmer = match config.stemmer.parse::<StemmerKind>()? {
            StemmerKind::Spanish => Some(Stemmer::create(Algorithm::Spanish)),
            StemmerKind::English => Some(Stemmer::create(Algorithm::English)),
            StemmerKind::None => None,
        };
        Ok(Pipeline { config, stemmer })
    }

    pub fn config(&self) -> &TokenPipelineConfig {
        self.config
    }

    pub fn stem(&self, token: &str) -> String {
        match &self.stemmer {
            Some(s) => s.stem(token).into_owned(),
            None => token.to_string(),
        }
    }

    /// tokenize, then drop stopwords, then stem.
    pub fn process(&self, text: &str) -> Vec<String> {
        tokenize(text, self.config)
            .into_iter()
            .filter(|t| !self.config.stopwords.contains(t))
            .map(|t| self.stem(&t))
            .collect()
    }
}

pub fn preprocess(text: &str, config: &TokenPipelineConfig) -> Result<Vec<String>> {
    Ok(Pipeline::new(config)?.process(text))
}

/// Stemmed term space with document frequencies, sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<u32>,
    n_docs: usize,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn from_parts(terms: Vec<String>, df: Vec<u32>, n_docs: usize) -> Result<Self> {
        if terms.len() != df.len() {
            return Err(Error::invalid("terms and df lengths differ"));
        }
        let mut v = Vocabulary {
            terms,
            df,
            n_docs,
            index: HashMap::new(),
        };
        v.rebuild_index();
        Ok(v)
    }

    /// Restores the term index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, index: u32) -> &str {
        &self.terms[index as usize]
    }

    pub fn index_of(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn df(&self, index: u32) -> u32 {
        self.df[index as usize]
    }

    /// Number of training documents the vocabulary was built from.
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }
}

/// Minimum document frequency for `n` documents: `ceil(fraction * n)`.
pub fn min_df(fraction: f64, n: usize) -> u32 {
    // Guard against 0.01 * 300 = 3.0000000000000004 style overshoot.
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as u32
}

/// Builds the vocabulary from the training corpus, keeping stems whose
/// document frequency is at least `ceil(min_doc_fraction * N)`.
pub fn build_vocabulary(train: &Corpus, config: &TokenPipelineConfig) -> Result<Vocabulary> {
    if train.is_empty() {
        return Err(Error::invalid("cannot build a vocabulary from an empty corpus"));
    }
    let pipeline = Pipeline::new(config)?;
    let term_sets: Vec<BTreeSet<String>> = train
        .documents()
        .par_iter()
        .map(|d| pipeline.process(&d.body).into_iter().collect())
        .collect();

    let mut df: BTreeMap<String, u32> = BTreeMap::new();
    for set in term_sets {
        for term in set {
            *df.entry(term).or_default() += 1;
        }
    }
    let threshold = min_df(config.min_doc_fraction, train.len());
    let (terms, dfs): (Vec<String>, Vec<u32>) = df.into_iter().filter(|&(_, f)| f >= threshold).unzip();
    if terms.is_empty() {
        return Err(Error::EmptyVocabulary {
            min_doc_fraction: config.min_doc_fraction,
        });
    }
    Vocabulary::from_parts(terms, dfs, train.len())
}
