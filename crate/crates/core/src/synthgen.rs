//! Planted-topic synthetic corpora.
//!
//! Each topic owns a vocabulary of alphabetic pseudo-words. Every expert has
//! a topic mixture; each of their documents draws one topic from it and then
//! draws all its tokens (and its title) from that topic's vocabulary. The
//! planted topic is stored as the document's `group_id`, so group-based
//! baselines and contingency tables see the ground truth.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Zipf;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::seed;

/// How experts spread their documents over topics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MixtureSpec {
    /// Every expert uses all topics with equal weight.
    Uniform,
    /// Each expert picks `weights.len()` distinct topics at random and gives
    /// them these weights in random order.
    Subset { weights: Vec<f64> },
    /// One mixture per expert, each of length `topics`.
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub topics: usize,
    pub words_per_topic: usize,
    /// Fraction of each topic's vocabulary drawn from a pool shared by all
    /// topics. 0 gives disjoint vocabularies.
    pub overlap: f64,
    pub experts: usize,
    /// Inclusive range of documents per expert.
    pub docs_per_expert: (usize, usize),
    /// Inclusive range of tokens per document.
    pub doc_length: (usize, usize),
    pub title_length: usize,
    pub mixture: MixtureSpec,
    /// Zipf exponent over each topic vocabulary; uniform sampling when absent.
    pub zipf_exponent: Option<f64>,
    pub seed: u64,
}

impl PlantedSpec {
    /// Disjoint topics, uniform mixtures and fixed sizes.
    pub fn simple(topics: usize, experts: usize, docs_per_expert: usize, doc_length: usize, seed: u64) -> Self {
        PlantedSpec {
            topics,
            words_per_topic: 30,
            overlap: 0.0,
            experts,
            docs_per_expert: (docs_per_expert, docs_per_expert),
            doc_length: (doc_length, doc_length),
            title_length: 4,
            mixture: MixtureSpec::Uniform,
            zipf_exponent: None,
            seed,
        }
    }

    fn shared_words(&self) -> usize {
        (self.overlap * self.words_per_topic as f64).round() as usize
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("degenerate planted spec: {m}")));
        if self.topics == 0 || self.words_per_topic == 0 {
            return bad("zero-size vocabulary");
        }
        if self.experts == 0 {
            return bad("no experts");
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return bad("overlap must lie in [0, 1)");
        }
        let (lo, hi) = self.docs_per_expert;
        if lo == 0 || lo > hi {
            return bad("docs_per_expert must be a non-empty range of positive counts");
        }
        let (lo, hi) = self.doc_length;
        if lo == 0 || lo > hi {
            return bad("doc_length must be a non-empty range of positive lengths");
        }
        if let Some(s) = self.zipf_exponent {
            if s.is_nan() || s < 0.0 {
                return bad("Zipf exponent must be non-negative");
            }
        }
        match &self.mixture {
            MixtureSpec::Uniform => Ok(()),
            MixtureSpec::Subset { weights } => {
                if weights.is_empty() || weights.len() > self.topics {
                    return bad("subset size must lie in [1, topics]");
                }
                check_weights(weights)
            }
            MixtureSpec::Explicit(rows) => {
                if rows.len() != self.experts || rows.iter().any(|r| r.len() != self.topics) {
                    return bad("explicit mixtures must be experts × topics");
                }
                rows.iter().try_for_each(|r| check_weights(r))
            }
        }
    }
}

fn check_weights(w: &[f64]) -> Result<()> {
    if w.iter().any(|x| x.is_nan() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
        return Err(Error::invalid(
            "mixture weights must be non-negative with a positive sum",
        ));
    }
    Ok(())
}

fn normalized(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

/// Fixed-width lowercase encoding of a word index (`aaaaa`, `aaaab`, ...).
pub fn pseudo_word(index: usize) -> String {
    let mut x = index;
    let mut out = [b'a'; 5];
    for slot in out.iter_mut().rev() {
        *slot = b'a' + (x % 26) as u8;
        x /= 26;
    }
    assert!(x == 0, "word index {index} exceeds the pseudo-word range");
    String::from_utf8(out.to_vec()).expect("ascii")
}

/// Vocabulary of every topic: shared words first, then the topic's own.
pub fn topic_vocabularies(spec: &PlantedSpec) -> Vec<Vec<String>> {
    let shared = spec.shared_words();
    let own = spec.words_per_topic - shared;
    let pool: Vec<String> = (0..shared).map(|i| pseudo_word(spec.topics * own + i)).collect();
    (0..spec.topics)
        .map(|t| {
            let mut words = pool.clone();
            words.extend((0..own).map(|i| pseudo_word(t * own + i)));
            words
        })
        .collect()
}

/// A generated corpus with its planted topic per document.
#[derive(Debug, Clone, PartialEq)]
pub struct Planted {
    pub corpus: Corpus,
    /// Planted topic of each document, in corpus order.
    pub labels: Vec<usize>,
    /// Normalized mixture of each expert, experts in id order.
    pub mixtures: Vec<Vec<f64>>,
}

impl Planted {
    /// `doc_id,topic` rows.
    pub fn write_labels_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "doc_id,topic")?;
        for (d, l) in self.corpus.documents().iter().zip(&self.labels) {
            writeln!(w, "{},{l}", d.doc_id)?;
        }
        Ok(())
    }
}

type LabeledDocs = Vec<(Document, usize)>;

enum Sampler {
    Uniform(usize),
    Zipf(Zipf<f64>),
}

impl Sampler {
    fn draw(&self, rng: &mut impl Rng) -> usize {
        match self {
            Sampler::Uniform(n) => rng.random_range(0..*n),
            Sampler::Zipf(z) => z.sample(rng) as usize - 1,
        }
    }
}

fn words(vocab: &[String], n: usize, sampler: &Sampler, rng: &mut impl Rng) -> String {
    (0..n)
        .map(|_| vocab[sampler.draw(rng)].as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Generates the corpus. Deterministic for a given spec; experts are
/// generated in parallel, each from its own derived seed.
pub fn generate(spec: &PlantedSpec) -> Result<Planted> {
    spec.validate()?;
    let vocabs = topic_vocabularies(spec);
    let sampler = match spec.zipf_exponent {
        None => Sampler::Uniform(spec.words_per_topic),
        Some(s) => Sampler::Zipf(Zipf::new(spec.words_per_topic as f64, s).map_err(|e| Error::invalid(e.to_string()))?),
    };
    let width = spec.experts.to_string().len().max(3);
    let doc_width = spec.docs_per_expert.1.to_string().len().max(3);

    // Per expert: its mixture and its documents with their planted topics.
    let per_expert: Vec<(Vec<f64>, LabeledDocs)> = (0..spec.experts)
        .into_par_iter()
        .map(|e| {
            let mut rng = seed::rng(seed::derive_index(spec.seed, e as u64));
            let mixture = match &spec.mixture {
                MixtureSpec::Uniform => vec![1.0 / spec.topics as f64; spec.topics],
                MixtureSpec::Subset { weights } => {
                    let mut topics: Vec<usize> = (0..spec.topics).collect();
                    topics.shuffle(&mut rng);
                    let mut w = normalized(weights);
                    w.shuffle(&mut rng);
                    let mut m = vec![0.0; spec.topics];
                    for (&t, x) in topics.iter().zip(w) {
                        m[t] = x;
                    }
                    m
                }
                MixtureSpec::Explicit(rows) => normalized(&rows[e]),
            };
            let pick = WeightedIndex::new(&mixture).expect("validated mixture");
            let expert = format!("e{e:0width$}");
            let n_docs = rng.random_range(spec.docs_per_expert.0..=spec.docs_per_expert.1);
            let docs = (0..n_docs)
                .map(|j| {
                    let topic = pick.sample(&mut rng);
                    let len = rng.random_range(spec.doc_length.0..=spec.doc_length.1);
                    let body = words(&vocabs[topic], len, &sampler, &mut rng);
                    let title = words(&vocabs[topic], spec.title_length, &sampler, &mut rng);
                    let doc = Document {
                        doc_id: format!("{expert}-d{j:0doc_width$}"),
                        author_id: expert.clone(),
                        group_id: Some(format!("topic{topic}")),
                        initiative_id: None,
                        title,
                        body,
                        order: 0,
                    };
                    (doc, topic)
                })
                .collect();
            (mixture, docs)
        })
        .collect();

    let mut documents = Vec::new();
    let mut labels = Vec::new();
    let mut mixtures = Vec::new();
    for (mixture, docs) in per_expert {
        mixtures.push(mixture);
        for (mut d, topic) in docs {
            d.order = documents.len() as u64;
            documents.push(d);
            labels.push(topic);
        }
    }
    Ok(Planted {
        corpus: Corpus::new(documents)?,
        labels,
        mixtures,
    })
}
