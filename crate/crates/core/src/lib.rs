//! Multi-label book genre classification by fusing text, metadata and
//! author knowledge-graph embeddings.
//!
//! The crate is organized along the data flow:
//!
//! - [`corpus`] reads records and the label taxonomy, splits data and
//!   generates synthetic corpora.
//! - [`metadata`], [`author_kg`] and [`text`] turn a record into its three
//!   representations; [`pipeline`] concatenates them.
//! - [`fusion`] is the MLP classifier, [`eval`] tunes thresholds and scores
//!   predictions, and [`baseline`] is the TF-IDF classifier chain.
//!
//! ```
//! use genrefuse::corpus::{synth_corpus, SynthSpec};
//!
//! let spec = SynthSpec { labels: 3, train_per_label: 5, validation_per_label: 2,
//!                        test_per_label: 2, ..SynthSpec::default() };
//! let corpus = synth_corpus(&spec, 7).unwrap();
//! assert_eq!(corpus.split.train.len(), 15);
//! assert_eq!(corpus.taxonomy.level_counts()[0], 3);
//! ```

pub mod author_kg;
pub mod baseline;
pub mod corpus;
mod error;
pub mod eval;
pub mod fusion;
pub mod metadata;
pub mod pipeline;
pub mod text;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $file:literal) => {
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            mod $name {}
        };
    }
    chapter!(overview, "overview.md");
    chapter!(corpus, "corpus.md");
    chapter!(features, "features.md");
    chapter!(text, "text.md");
    chapter!(fusion, "fusion.md");
    chapter!(evaluation, "evaluation.md");
    chapter!(baseline, "baseline.md");
    chapter!(cli, "cli.md");
}
