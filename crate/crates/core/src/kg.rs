//! Interned, indexed in-memory knowledge graph and its TSV ingestion.
//!
//! Entities and relations live in separate namespaces. Handles are dense and
//! assigned in first-appearance order, so identical input streams always
//! produce identical graphs.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for RelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: NodeId,
    pub rel: RelId,
    pub tail: NodeId,
}

impl Triple {
    pub fn new(head: NodeId, rel: RelId, tail: NodeId) -> Self {
        Self { head, rel, tail }
    }
}

/// Bidirectional map between external identifier strings and dense handles.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut interner = Self::new();
        for name in names {
            interner.intern(&name.into());
        }
        interner
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = u32::try_from(self.names.len()).expect("more than u32::MAX identifiers");
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn resolve(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Immutable knowledge graph. Build one with [`GraphBuilder`] or [`parse_triples`].
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    entities: Interner,
    relations: Interner,
    triples: Vec<Triple>,
    out_index: Vec<Vec<(RelId, NodeId)>>,
    labels: HashMap<String, String>,
}

impl KnowledgeGraph {
    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entities(&self) -> &Interner {
        &self.entities
    }

    pub fn relations(&self) -> &Interner {
        &self.relations
    }

    pub fn entity_id(&self, name: &str) -> Option<NodeId> {
        self.entities.get(name).map(NodeId)
    }

    pub fn relation_id(&self, name: &str) -> Option<RelId> {
        self.relations.get(name).map(RelId)
    }

    pub fn entity_name(&self, id: NodeId) -> Result<&str> {
        self.entities
            .resolve(id.0)
            .ok_or_else(|| Error::Lookup(format!("entity handle {id} out of range")))
    }

    pub fn relation_name(&self, id: RelId) -> Result<&str> {
        self.relations
            .resolve(id.0)
            .ok_or_else(|| Error::Lookup(format!("relation handle {id} out of range")))
    }

    /// Outgoing `(relation, tail)` pairs of `head`, in ingestion order.
    pub fn out_edges(&self, head: NodeId) -> &[(RelId, NodeId)] {
        self.out_index
            .get(head.index())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.out_edges(triple.head)
            .iter()
            .any(|&(r, t)| r == triple.rel && t == triple.tail)
    }

    pub fn labels(&self) -> &HashMap<String, String> {
        &self.labels
    }

    /// Attach labels keyed by external id. Later calls overwrite earlier entries.
    pub fn set_labels(&mut self, labels: HashMap<String, String>) {
        self.labels.extend(labels);
    }

    /// Label of an entity, falling back to its external identifier.
    pub fn entity_label(&self, id: NodeId) -> Result<&str> {
        let name = self.entity_name(id)?;
        Ok(self.labels.get(name).map(String::as_str).unwrap_or(name))
    }

    pub fn relation_label(&self, id: RelId) -> Result<&str> {
        let name = self.relation_name(id)?;
        Ok(self.labels.get(name).map(String::as_str).unwrap_or(name))
    }

    /// Label of any handle kind.
    pub fn label_of(&self, handle: Handle) -> Result<&str> {
        match handle {
            Handle::Entity(id) => self.entity_label(id),
            Handle::Relation(id) => self.relation_label(id),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Handle {
    Entity(NodeId),
    Relation(RelId),
}

/// Incremental graph construction with duplicate elimination.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    graph: KnowledgeGraph,
    seen: HashSet<Triple>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `false` when the triple was already present.
    pub fn add(&mut self, head: &str, rel: &str, tail: &str) -> bool {
        let g = &mut self.graph;
        let h = NodeId(g.entities.intern(head));
        let r = RelId(g.relations.intern(rel));
        let t = NodeId(g.entities.intern(tail));
        let triple = Triple::new(h, r, t);
        if !self.seen.insert(triple) {
            return false;
        }
        g.triples.push(triple);
        let needed = g.entities.len();
        if g.out_index.len() < needed {
            g.out_index.resize_with(needed, Vec::new);
        }
        g.out_index[h.index()].push((r, t));
        true
    }

    pub fn num_triples(&self) -> usize {
        self.graph.triples.len()
    }

    pub fn finish(mut self) -> KnowledgeGraph {
        let n = self.graph.entities.len();
        self.graph.out_index.resize_with(n, Vec::new);
        self.graph
    }
}

/// How a triple file is laid out and filtered.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripleFormat {
    /// Skip the first non-comment line.
    pub header: bool,
    /// Require `Q<digits>` heads and `P<digits>` relations.
    pub wikidata_ids: bool,
    /// Keep triples whose tail is a literal rather than an entity id.
    pub keep_literal_tails: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub lines_read: usize,
    pub triples_kept: usize,
    pub duplicates_dropped: usize,
    pub malformed_skipped: usize,
    pub filtered_non_wikidata: usize,
    pub literal_tails_dropped: usize,
}

fn is_wikidata_id(s: &str, prefix: char) -> bool {
    let mut chars = s.chars();
    chars.next() == Some(prefix) && s.len() > 1 && chars.all(|c| c.is_ascii_digit())
}

/// Literal tails: quoted strings, numbers, and KGTK-style dates (`^`) or
/// language-tagged/coordinate values (`@`).
fn is_literal(tail: &str, wikidata_ids: bool) -> bool {
    if wikidata_ids {
        return !is_wikidata_id(tail, 'Q');
    }
    match tail.chars().next() {
        Some(c) => c == '"' || c == '\'' || c == '^' || c == '@' || c == '+' || c == '-' || c.is_ascii_digit(),
        None => true,
    }
}

/// Parse a TSV triple stream. Malformed lines are counted and skipped; a
/// read failure aborts.
pub fn parse_triples<R: BufRead>(
    reader: R,
    format: &TripleFormat,
) -> Result<(KnowledgeGraph, IngestReport)> {
    let mut builder = GraphBuilder::new();
    let mut report = IngestReport::default();
    let mut header_pending = format.header;

    for line in reader.lines() {
        let line = line.map_err(|e| Error::Ingest(format!("unreadable triple stream: {e}")))?;
        report.lines_read += 1;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let mut fields = line.split('\t');
        let (head, rel, tail) = match (fields.next(), fields.next(), fields.next()) {
            (Some(h), Some(r), Some(t)) if !h.is_empty() && !r.is_empty() && !t.is_empty() => {
                (h.trim(), r.trim(), t.trim())
            }
            _ => {
                report.malformed_skipped += 1;
                continue;
            }
        };
        if format.wikidata_ids && !(is_wikidata_id(head, 'Q') && is_wikidata_id(rel, 'P')) {
            report.filtered_non_wikidata += 1;
            continue;
        }
        if !format.keep_literal_tails && is_literal(tail, format.wikidata_ids) {
            report.literal_tails_dropped += 1;
            continue;
        }
        if builder.add(head, rel, tail) {
            report.triples_kept += 1;
        } else {
            report.duplicates_dropped += 1;
        }
    }
    Ok((builder.finish(), report))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelReport {
    pub lines_read: usize,
    pub labels_kept: usize,
    pub malformed_skipped: usize,
}

/// Parse `id<TAB>label` lines. Later duplicates overwrite earlier ones.
pub fn parse_labels<R: BufRead>(reader: R) -> Result<(HashMap<String, String>, LabelReport)> {
    let mut labels = HashMap::new();
    let mut report = LabelReport::default();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::Ingest(format!("unreadable label stream: {e}")))?;
        report.lines_read += 1;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split_once('\t') {
            Some((id, label)) if !id.trim().is_empty() => {
                let label = label.split('\t').next().unwrap_or(label);
                labels.insert(id.trim().to_string(), label.to_string());
            }
            _ => report.malformed_skipped += 1,
        }
    }
    report.labels_kept = labels.len();
    Ok((labels, report))
}
