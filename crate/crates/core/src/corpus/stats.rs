use crate::author_kg::{has_author_embedding, EmbeddingTable, EntityMap};
use crate::corpus::{BookRecord, DatasetSplit, LabelTaxonomy, SplitPart};
use crate::metadata::GenderTable;

/// Availability of auxiliary data for one split, counted per record on the
/// first author for gender and on any author for embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Coverage {
    pub records: usize,
    pub gender: usize,
    pub author_embedding: usize,
}

impl Coverage {
    pub fn compute(
        records: &[BookRecord],
        gender: &GenderTable,
        entities: &EntityMap,
        embeddings: &EmbeddingTable,
    ) -> Self {
        Coverage {
            records: records.len(),
            gender: records.iter().filter(|r| gender.covers(&r.authors)).count(),
            author_embedding: records
                .iter()
                .filter(|r| has_author_embedding(r, entities, embeddings))
                .count(),
        }
    }

    pub fn gender_fraction(&self) -> f64 {
        fraction(self.gender, self.records)
    }

    pub fn embedding_fraction(&self) -> f64 {
        fraction(self.author_embedding, self.records)
    }
}

fn fraction(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelStats {
    /// Training-record count per label, in flat order.
    pub train_counts: Vec<(String, usize)>,
    /// Coverage for train, validation and test, in that order.
    pub coverage: [(SplitPart, Coverage); 3],
}

impl LabelStats {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("label_id\ttrain_count\n");
        for (label, count) in &self.train_counts {
            out.push_str(&format!("{label}\t{count}\n"));
        }
        out.push_str("\nsplit\trecords\tgender_coverage\tauthor_embedding_coverage\n");
        for (part, c) in &self.coverage {
            out.push_str(&format!(
                "{}\t{}\t{:.4}\t{:.4}\n",
                part.name(),
                c.records,
                c.gender_fraction(),
                c.embedding_fraction()
            ));
        }
        out
    }
}

pub fn label_counts(records: &[BookRecord], taxonomy: &LabelTaxonomy) -> Vec<(String, usize)> {
    let mut counts = vec![0usize; taxonomy.len()];
    for record in records {
        for label in &record.labels {
            if let Some(i) = taxonomy.index_of(label) {
                counts[i] += 1;
            }
        }
    }
    taxonomy.flat_order().into_iter().zip(counts).collect()
}

pub fn label_stats(
    split: &DatasetSplit,
    taxonomy: &LabelTaxonomy,
    gender: &GenderTable,
    entities: &EntityMap,
    embeddings: &EmbeddingTable,
) -> LabelStats {
    let cov = |part| (part, Coverage::compute(split.part(part), gender, entities, embeddings));
    LabelStats {
        train_counts: label_counts(&split.train, taxonomy),
        coverage: [
            cov(SplitPart::Train),
            cov(SplitPart::Validation),
            cov(SplitPart::Test),
        ],
    }
}
