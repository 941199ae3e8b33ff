//! Records, the label taxonomy, dataset splits, synthetic corpora and label
//! statistics.

mod record;
mod stats;
pub mod synth;
mod taxonomy;

pub use record::{
    parse_records, parse_records_str, records_to_string, validate_labels, write_records,
    BookRecord, DatasetSplit, SplitPart,
};
pub use stats::{label_counts, label_stats, Coverage, LabelStats};
pub use synth::{synth_corpus, SynthCorpus, SynthFiles, SynthSpec};
pub use taxonomy::{load_taxonomy, parse_taxonomy, LabelTaxonomy, TaxonomyNode};
