//! Author-attributed documents, corpus-level filters and train/test splits.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// One author-attributed text unit (an intervention).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub author_id: String,
    /// Committee or session label. Absent for plenary-style documents.
    pub group_id: Option<String>,
    /// Documents sharing an initiative form one evaluation query. Absent
    /// means the document is its own initiative.
    pub initiative_id: Option<String>,
    pub title: String,
    pub body: String,
    /// Position in the source file; fixes macro-document and cluster order.
    pub order: u64,
}

impl Document {
    pub fn initiative(&self) -> &str {
        self.initiative_id.as_deref().unwrap_or(&self.doc_id)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    doc_id: String,
    author_id: String,
    group_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initiative_id: Option<String>,
    title: String,
    body: String,
}

/// An ordered, validated collection of documents.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    experts: BTreeSet<String>,
    groups: BTreeSet<String>,
}

impl Corpus {
    /// Validates the documents and derives the expert and group sets.
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(Error::DuplicateDocId(doc.doc_id.clone()));
            }
            if doc.body.is_empty() {
                return Err(Error::EmptyBody(doc.doc_id.clone()));
            }
            if doc.author_id.is_empty() {
                return Err(Error::EmptyAuthor(doc.doc_id.clone()));
            }
        }
        Ok(Self::from_validated(documents))
    }

    fn from_validated(documents: Vec<Document>) -> Self {
        let experts = documents.iter().map(|d| d.author_id.clone()).collect();
        let groups = documents.iter().filter_map(|d| d.group_id.clone()).collect();
        Corpus {
            documents,
            experts,
            groups,
        }
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn experts(&self) -> &BTreeSet<String> {
        &self.experts
    }

    pub fn groups(&self) -> &BTreeSet<String> {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Documents of one expert, in corpus order.
    pub fn documents_of<'a>(&'a self, expert: &'a str) -> impl Iterator<Item = &'a Document> + 'a {
        self.documents.iter().filter(move |d| d.author_id == expert)
    }

    /// Groups every expert's documents, preserving corpus order within each.
    pub fn by_expert(&self) -> Vec<(&str, Vec<&Document>)> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut out: Vec<(&str, Vec<&Document>)> = Vec::new();
        for doc in &self.documents {
            let slot = *index.entry(doc.author_id.as_str()).or_insert_with(|| {
                out.push((doc.author_id.as_str(), Vec::new()));
                out.len() - 1
            });
            out[slot].1.push(doc);
        }
        out.sort_by(|a, b| a.0.cmp(b.0));
        out
    }

    fn retain(&self, mut keep: impl FnMut(&Document) -> bool) -> Corpus {
        Corpus::from_validated(self.documents.iter().filter(|d| keep(d)).cloned().collect())
    }
}

/// Reads a JSON Lines corpus file. Line numbers in errors are 1-based.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_corpus(reader: impl BufRead) -> Result<Corpus> {
    let mut documents = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        documents.push(Document {
            doc_id: rec.doc_id,
            author_id: rec.author_id,
            group_id: rec.group_id,
            initiative_id: rec.initiative_id,
            title: rec.title,
            body: rec.body,
            order: idx as u64,
        });
    }
    Corpus::new(documents)
}

pub fn write_corpus(corpus: &Corpus, writer: impl Write) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    for doc in corpus.documents() {
        let rec = Record {
            doc_id: doc.doc_id.clone(),
            author_id: doc.author_id.clone(),
            group_id: doc.group_id.clone(),
            initiative_id: doc.initiative_id.clone(),
            title: doc.title.clone(),
            body: doc.body.clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_corpus(corpus, file).map_err(|e| Error::io(path, e))
}

/// Keeps only documents whose author has at least `min_docs` documents.
pub fn filter_experts_min_docs(corpus: &Corpus, min_docs: usize) -> Result<Corpus> {
    if min_docs == 0 {
        return Err(Error::invalid("min_docs must be at least 1"));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in corpus.documents() {
        *counts.entry(doc.author_id.as_str()).or_default() += 1;
    }
    Ok(corpus.retain(|d| counts[d.author_id.as_str()] >= min_docs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_fraction: f64,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            train_fraction: 0.8,
            repetitions: 5,
            seed: 0,
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "train_fraction must lie in (0,1), got {}",
                self.train_fraction
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions must be positive"));
        }
        Ok(())
    }

    /// Training-set size for `n` documents, rounding half up.
    pub fn train_size(&self, n: usize) -> usize {
        ((self.train_fraction * n as f64) + 0.5).floor() as usize
    }
}

/// Uniform document-level partition for one repetition. Both halves keep
/// corpus order.
pub fn split_train_test(corpus: &Corpus, plan: &SplitPlan, repetition_index: usize) -> Result<(Corpus, Corpus)> {
    plan.validate()?;
    if repetition_index >= plan.repetitions {
        return Err(Error::RepetitionOutOfRange {
            index: repetition_index,
            repetitions: plan.repetitions,
        });
    }
    let n = corpus.len();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(seed::derive_index(plan.seed, repetition_index as u64));
    idx.shuffle(&mut rng);

    let mut in_train = vec![false; n];
    for &i in &idx[..plan.train_size(n)] {
        in_train[i] = true;
    }
    let docs = corpus.documents();
    let train = (0..n).filter(|&i| in_train[i]).map(|i| docs[i].clone()).collect();
    let test = (0..n).filter(|&i| !in_train[i]).map(|i| docs[i].clone()).collect();
    Ok((Corpus::from_validated(train), Corpus::from_validated(test)))
}
