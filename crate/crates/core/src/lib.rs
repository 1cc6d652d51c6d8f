//! Expert finding with multi-faceted profiles: cluster each expert's
//! documents into subprofiles, index them with BM25 and fuse subprofile
//! rankings back into expert rankings.
//!
//! The modules follow the pipeline: [`corpus`] → [`textprep`] →
//! [`vectorize`] → [`cluster`] → [`profiles`] → [`retrieval`] → [`eval`],
//! with [`report`] for inspecting profiles and [`synthgen`] for corpora with
//! planted topics. The book in `book/` walks through each stage.

pub mod cluster;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod profiles;
pub mod report;
pub mod retrieval;
pub mod seed;
pub mod synthgen;
pub mod textprep;
pub mod vectorize;

pub use error::{Error, Result};

// The book's chapters are compiled as doc-tests so their examples stay
// honest. One module per chapter makes failures easier to trace.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/text.md")]
    mod text {}
    #[doc = include_str!("../../../book/src/clustering.md")]
    mod clustering {}
    #[doc = include_str!("../../../book/src/profiles.md")]
    mod profiles {}
    #[doc = include_str!("../../../book/src/retrieval.md")]
    mod retrieval {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
