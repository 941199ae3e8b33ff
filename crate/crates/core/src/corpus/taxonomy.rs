use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::error::{self, Error, Result};

const HEADER: &str = "label_id\tname\tlevel\tparent_id";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxonomyNode {
    pub label_id: String,
    pub name: String,
    pub level: u8,
    pub parent: Option<String>,
}

/// A three-level label hierarchy. File order is the flat label order used
/// for every output unit and report row; it is never re-sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTaxonomy {
    nodes: Vec<TaxonomyNode>,
    index: HashMap<String, usize>,
}

impl LabelTaxonomy {
    /// Validates structure: unique ids, level-1 nodes without parents, every
    /// deeper node with an existing parent exactly one level up, no cycles.
    pub fn new(nodes: Vec<TaxonomyNode>) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if !(1..=3).contains(&node.level) {
                return Err(Error::Taxonomy(format!(
                    "node `{}` has level {}, expected 1, 2 or 3",
                    node.label_id, node.level
                )));
            }
            if index.insert(node.label_id.clone(), i).is_some() {
                return Err(Error::Taxonomy(format!(
                    "duplicate label id `{}`",
                    node.label_id
                )));
            }
        }
        for node in &nodes {
            match (&node.parent, node.level) {
                (None, 1) => {}
                (Some(_), 1) => {
                    return Err(Error::Taxonomy(format!(
                        "level-1 node `{}` must not have a parent",
                        node.label_id
                    )))
                }
                (None, _) => {
                    return Err(Error::Taxonomy(format!(
                        "orphan node `{}` at level {} has no parent",
                        node.label_id, node.level
                    )))
                }
                (Some(parent), _) if !index.contains_key(parent) => {
                    return Err(Error::Taxonomy(format!(
                        "orphan node `{}`: parent `{parent}` does not exist",
                        node.label_id
                    )))
                }
                (Some(_), _) => {}
            }
        }
        // Walk ancestors first so that a cycle is reported as such rather
        // than as the level violation it also implies.
        for node in &nodes {
            let mut current = node;
            for _ in 0..nodes.len() {
                match &current.parent {
                    None => break,
                    Some(p) => current = &nodes[index[p]],
                }
                if current.label_id == node.label_id {
                    return Err(Error::Taxonomy(format!(
                        "cycle through node `{}`",
                        node.label_id
                    )));
                }
            }
        }
        for node in &nodes {
            if let Some(parent) = &node.parent {
                let parent_level = nodes[index[parent]].level;
                if parent_level + 1 != node.level {
                    return Err(Error::Taxonomy(format!(
                        "node `{}` at level {} has parent `{parent}` at level {parent_level}",
                        node.label_id, node.level
                    )));
                }
            }
        }
        Ok(LabelTaxonomy { nodes, index })
    }

    pub fn nodes(&self) -> &[TaxonomyNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn flat_order(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.label_id.clone()).collect()
    }

    pub fn contains(&self, label_id: &str) -> bool {
        self.index.contains_key(label_id)
    }

    pub fn index_of(&self, label_id: &str) -> Option<usize> {
        self.index.get(label_id).copied()
    }

    pub fn node(&self, label_id: &str) -> Option<&TaxonomyNode> {
        self.index_of(label_id).map(|i| &self.nodes[i])
    }

    /// Node counts at levels 1, 2 and 3.
    pub fn level_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for node in &self.nodes {
            counts[node.level as usize - 1] += 1;
        }
        counts
    }

    /// Keeps the nodes at `level` or above, preserving file order.
    pub fn restrict_to_level(&self, level: u8) -> LabelTaxonomy {
        let nodes: Vec<_> = self
            .nodes
            .iter()
            .filter(|n| n.level <= level)
            .cloned()
            .collect();
        let index = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.label_id.clone(), i))
            .collect();
        LabelTaxonomy { nodes, index }
    }

    /// Drops labels this taxonomy does not contain, e.g. deeper labels after
    /// [`restrict_to_level`](Self::restrict_to_level).
    pub fn restrict_labels(&self, labels: &BTreeSet<String>) -> BTreeSet<String> {
        labels
            .iter()
            .filter(|l| self.contains(l))
            .cloned()
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for n in &self.nodes {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                n.label_id,
                n.name,
                n.level,
                n.parent.as_deref().unwrap_or("")
            ));
        }
        out
    }
}

pub fn parse_taxonomy(text: &str, source_name: &str) -> Result<LabelTaxonomy> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == HEADER => {}
        _ => {
            return Err(Error::parse(
                source_name,
                1,
                format!("expected header `{}`", HEADER.replace('\t', "<TAB>")),
            ))
        }
    }
    let mut nodes = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::parse(
                source_name,
                line_no,
                format!("expected 4 tab-separated columns, found {}", cols.len()),
            ));
        }
        let level: u8 = cols[2]
            .trim()
            .parse()
            .map_err(|_| Error::parse(source_name, line_no, format!("bad level `{}`", cols[2])))?;
        let parent = cols[3].trim();
        nodes.push(TaxonomyNode {
            label_id: cols[0].trim().to_string(),
            name: cols[1].to_string(),
            level,
            parent: (!parent.is_empty()).then(|| parent.to_string()),
        });
    }
    LabelTaxonomy::new(nodes)
}

pub fn load_taxonomy(path: &Path) -> Result<LabelTaxonomy> {
    let text = error::read_to_string(path)?;
    parse_taxonomy(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: &str, level: u8, parent: Option<&str>) -> TaxonomyNode {
        TaxonomyNode {
            label_id: id.into(),
            name: id.to_lowercase(),
            level,
            parent: parent.map(Into::into),
        }
    }

    #[test]
    fn single_node() {
        let t = parse_taxonomy("label_id\tname\tlevel\tparent_id\nA\tArts\t1\t\n", "t").unwrap();
        assert_eq!(t.flat_order(), vec!["A"]);
        assert_eq!(t.restrict_to_level(1), t);
    }

    #[test]
    fn header_required() {
        assert!(parse_taxonomy("A\tArts\t1\t\n", "t").is_err());
    }

    #[test]
    fn same_level_parent_is_structural_error() {
        let err = LabelTaxonomy::new(vec![node("A", 1, None), node("B", 1, Some("A"))]);
        assert!(matches!(err, Err(Error::Taxonomy(_))));
        let err = LabelTaxonomy::new(vec![
            node("A", 1, None),
            node("B", 2, Some("A")),
            node("C", 2, Some("B")),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("parent `B` at level 2"), "{err}");
    }

    #[test]
    fn orphans_and_cycles() {
        let err = LabelTaxonomy::new(vec![node("B", 2, None)]).unwrap_err();
        assert!(err.to_string().contains("orphan"));
        let err = LabelTaxonomy::new(vec![node("B", 2, Some("Z"))]).unwrap_err();
        assert!(err.to_string().contains("orphan"));
        let err =
            LabelTaxonomy::new(vec![node("B", 2, Some("C")), node("C", 3, Some("B"))]).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
        let err = LabelTaxonomy::new(vec![node("B", 2, Some("B"))]).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
    }

    #[test]
    fn forward_parent_references_are_allowed() {
        let t = LabelTaxonomy::new(vec![node("B", 2, Some("A")), node("A", 1, None)]).unwrap();
        assert_eq!(t.flat_order(), vec!["B", "A"]);
    }

    #[test]
    fn restrict_labels_drops_deeper() {
        let t = LabelTaxonomy::new(vec![
            node("A", 1, None),
            node("A1", 2, Some("A")),
            node("A11", 3, Some("A1")),
        ])
        .unwrap();
        let top = t.restrict_to_level(1);
        let labels: BTreeSet<String> = ["A", "A1", "A11"].iter().map(|s| s.to_string()).collect();
        assert_eq!(top.restrict_labels(&labels).len(), 1);
        assert_eq!(t.restrict_to_level(2).len(), 2);
        assert_eq!(t.restrict_to_level(3), t);
    }

    #[test]
    fn tsv_round_trip() {
        let t = LabelTaxonomy::new(vec![node("A", 1, None), node("A1", 2, Some("A"))]).unwrap();
        assert_eq!(parse_taxonomy(&t.to_tsv(), "t").unwrap(), t);
    }
}
