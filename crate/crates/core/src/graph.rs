//! Typed drug/protein graph with per-relation CSR adjacency.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown {node_type} id `{id}`")]
    UnknownNode { node_type: NodeType, id: String },
    #[error("{relation} edge expects a {expected} at `{id}`, found a {found}")]
    Schema {
        relation: Relation,
        id: String,
        expected: NodeType,
        found: NodeType,
    },
    #[error("duplicate {1} id `{0}`")]
    DuplicateNode(String, NodeType),
    #[error("{relation} edge {src}-{dst} appears twice with different values")]
    ConflictingDuplicate {
        relation: Relation,
        src: String,
        dst: String,
    },
    #[error("{relation} edge {src}-{dst}: {reason}")]
    InvalidValue {
        relation: Relation,
        src: String,
        dst: String,
        reason: String,
    },
    #[error("{relation} has no node {index} (node count {len})")]
    IndexOutOfRange {
        relation: Relation,
        index: usize,
        len: usize,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeType {
    Drug,
    Protein,
}

impl NodeType {
    pub const ALL: [NodeType; 2] = [NodeType::Drug, NodeType::Protein];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::Drug => "drug",
            NodeType::Protein => "protein",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "drug" => Ok(NodeType::Drug),
            "protein" => Ok(NodeType::Protein),
            other => Err(format!("unknown node type `{other}`")),
        }
    }
}

/// Edge relations. All are undirected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Ddi,
    Dpi,
    Ppi,
    Sim,
}

impl Relation {
    pub const ALL: [Relation; 4] = [Relation::Ddi, Relation::Dpi, Relation::Ppi, Relation::Sim];

    pub fn src_type(self) -> NodeType {
        match self {
            Relation::Ppi => NodeType::Protein,
            _ => NodeType::Drug,
        }
    }

    pub fn dst_type(self) -> NodeType {
        match self {
            Relation::Ddi | Relation::Sim => NodeType::Drug,
            Relation::Dpi | Relation::Ppi => NodeType::Protein,
        }
    }

    pub fn directed(self) -> bool {
        false
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Ddi => "ddi",
            Relation::Dpi => "dpi",
            Relation::Ppi => "ppi",
            Relation::Sim => "sim",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ddi" => Ok(Relation::Ddi),
            "dpi" => Ok(Relation::Dpi),
            "ppi" => Ok(Relation::Ppi),
            "sim" => Ok(Relation::Sim),
            other => Err(format!("unknown relation `{other}`")),
        }
    }
}

/// Which side of a relation a lookup starts from. Only DPI has a distinct
/// reverse (protein → drug) adjacency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Forward,
    Reverse,
}

/// External ids of one node type, densely indexed `0..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeTable {
    node_type: NodeType,
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl NodeTable {
    pub fn new(node_type: NodeType) -> Self {
        Self {
            node_type,
            ids: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn from_ids<I, S>(node_type: NodeType, ids: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut table = Self::new(node_type);
        for id in ids {
            table.push(id)?;
        }
        Ok(table)
    }

    pub fn push(&mut self, id: impl Into<String>) -> Result<usize, GraphError> {
        let id = id.into();
        if self.index.contains_key(&id) {
            return Err(GraphError::DuplicateNode(id, self.node_type));
        }
        let idx = self.ids.len();
        self.index.insert(id.clone(), idx);
        self.ids.push(id);
        Ok(idx)
    }

    pub fn node_type(&self) -> NodeType {
        self.node_type
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, idx: usize) -> &str {
        &self.ids[idx]
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn resolve(&self, id: &str) -> Result<usize, GraphError> {
        self.get(id).ok_or_else(|| GraphError::UnknownNode {
            node_type: self.node_type,
            id: id.to_string(),
        })
    }
}

/// Value attached to an input edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EdgeValue {
    None,
    Label(u16),
    Weight(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeRecord {
    pub src: String,
    pub dst: String,
    pub relation: Relation,
    pub value: EdgeValue,
}

impl EdgeRecord {
    pub fn new(src: impl Into<String>, dst: impl Into<String>, relation: Relation, value: EdgeValue) -> Self {
        Self {
            src: src.into(),
            dst: dst.into(),
            relation,
            value,
        }
    }
}

/// CSR arcs of one relation direction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency {
    n_cols: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    weights: Option<Vec<f64>>,
    labels: Option<Vec<u16>>,
}

/// Neighbors of one node, ascending by index.
#[derive(Clone, Copy, Debug)]
pub struct Neighbors<'a> {
    indices: &'a [usize],
    weights: Option<&'a [f64]>,
    labels: Option<&'a [u16]>,
}

impl<'a> Neighbors<'a> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &'a [usize] {
        self.indices
    }

    pub fn weights(&self) -> Option<&'a [f64]> {
        self.weights
    }

    pub fn labels(&self) -> Option<&'a [u16]> {
        self.labels
    }

    /// `(neighbor, weight)` pairs; unweighted relations report weight 1.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        let weights = self.weights;
        self.indices
            .iter()
            .enumerate()
            .map(move |(k, &u)| (u, weights.map_or(1.0, |w| w[k])))
    }
}

struct Arc {
    src: usize,
    dst: usize,
    weight: f64,
    label: u16,
}

impl Adjacency {
    fn from_arcs(n_rows: usize, n_cols: usize, mut arcs: Vec<Arc>, weighted: bool, labeled: bool) -> Self {
        arcs.sort_by_key(|a| (a.src, a.dst));
        let mut offsets = vec![0; n_rows + 1];
        for a in &arcs {
            offsets[a.src + 1] += 1;
        }
        for i in 0..n_rows {
            offsets[i + 1] += offsets[i];
        }
        Self {
            n_cols,
            offsets,
            cols: arcs.iter().map(|a| a.dst).collect(),
            weights: weighted.then(|| arcs.iter().map(|a| a.weight).collect()),
            labels: labeled.then(|| arcs.iter().map(|a| a.label).collect()),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn arc_count(&self) -> usize {
        self.cols.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn labels(&self) -> Option<&[u16]> {
        self.labels.as_deref()
    }

    /// Panics if `v` is out of range; use [`HeteroGraph::neighbors`] for a
    /// checked lookup.
    pub fn neighbors(&self, v: usize) -> Neighbors<'_> {
        let span = self.offsets[v]..self.offsets[v + 1];
        Neighbors {
            indices: &self.cols[span.clone()],
            weights: self.weights.as_ref().map(|w| &w[span.clone()]),
            labels: self.labels.as_ref().map(|l| &l[span]),
        }
    }

    /// Arc position of `(v, u)`, if present.
    pub fn find(&self, v: usize, u: usize) -> Option<usize> {
        let span = self.offsets[v]..self.offsets[v + 1];
        self.cols[span.clone()]
            .binary_search(&u)
            .ok()
            .map(|k| span.start + k)
    }
}

/// Heterogeneous graph over drug and protein nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct HeteroGraph {
    drugs: NodeTable,
    proteins: NodeTable,
    forward: Vec<Adjacency>,
    dpi_reverse: Adjacency,
}

/// An unordered edge after resolution, stored with `a <= b` for same-type
/// relations and `(drug, protein)` for DPI.
#[derive(Clone, Copy, Debug, PartialEq)]
struct ResolvedEdge {
    a: usize,
    b: usize,
    value: EdgeValue,
}

impl HeteroGraph {
    /// Builds the graph, symmetrizing every relation.
    ///
    /// Duplicate edges collapse to one; a duplicate carrying a different
    /// label or weight is an error. Self-loops are dropped with a warning.
    pub fn build(drugs: NodeTable, proteins: NodeTable, edges: &[EdgeRecord]) -> Result<Self, GraphError> {
        if drugs.node_type() != NodeType::Drug || proteins.node_type() != NodeType::Protein {
            return Err(GraphError::Format {
                line: 0,
                message: "node tables passed in the wrong order".into(),
            });
        }
        let mut unique: Vec<BTreeMap<(usize, usize), ResolvedEdge>> = vec![BTreeMap::new(); 4];
        for e in edges {
            let resolved = resolve_edge(&drugs, &proteins, e)?;
            let Some(resolved) = resolved else { continue };
            let slot = &mut unique[e.relation.index()];
            match slot.get(&(resolved.a, resolved.b)) {
                Some(prev) if prev.value != resolved.value => {
                    return Err(GraphError::ConflictingDuplicate {
                        relation: e.relation,
                        src: e.src.clone(),
                        dst: e.dst.clone(),
                    });
                }
                Some(_) => {}
                None => {
                    slot.insert((resolved.a, resolved.b), resolved);
                }
            }
        }
        Ok(Self::from_unique(drugs, proteins, &unique))
    }

    fn from_unique(
        drugs: NodeTable,
        proteins: NodeTable,
        unique: &[BTreeMap<(usize, usize), ResolvedEdge>],
    ) -> Self {
        let n_drug = drugs.len();
        let n_prot = proteins.len();
        let mut forward = Vec::with_capacity(4);
        let mut dpi_reverse = None;
        for rel in Relation::ALL {
            let edges = &unique[rel.index()];
            let arc = |src, dst, value: EdgeValue| Arc {
                src,
                dst,
                weight: match value {
                    EdgeValue::Weight(w) => w,
                    _ => 1.0,
                },
                label: match value {
                    EdgeValue::Label(l) => l,
                    _ => 0,
                },
            };
            let weighted = rel == Relation::Sim;
            let labeled = rel == Relation::Ddi;
            if rel == Relation::Dpi {
                let fwd = edges.values().map(|e| arc(e.a, e.b, e.value)).collect();
                let rev = edges.values().map(|e| arc(e.b, e.a, e.value)).collect();
                forward.push(Adjacency::from_arcs(n_drug, n_prot, fwd, false, false));
                dpi_reverse = Some(Adjacency::from_arcs(n_prot, n_drug, rev, false, false));
            } else {
                let n = if rel.src_type() == NodeType::Drug { n_drug } else { n_prot };
                let arcs = edges
                    .values()
                    .flat_map(|e| [arc(e.a, e.b, e.value), arc(e.b, e.a, e.value)])
                    .collect();
                forward.push(Adjacency::from_arcs(n, n, arcs, weighted, labeled));
            }
        }
        Self {
            drugs,
            proteins,
            forward,
            dpi_reverse: dpi_reverse.expect("dpi adjacency"),
        }
    }

    pub fn nodes(&self, t: NodeType) -> &NodeTable {
        match t {
            NodeType::Drug => &self.drugs,
            NodeType::Protein => &self.proteins,
        }
    }

    pub fn node_count(&self, t: NodeType) -> usize {
        self.nodes(t).len()
    }

    pub fn adjacency(&self, rel: Relation, dir: Direction) -> &Adjacency {
        match (rel, dir) {
            (Relation::Dpi, Direction::Reverse) => &self.dpi_reverse,
            _ => &self.forward[rel.index()],
        }
    }

    /// Neighbors of `v` (an index of `rel`'s source type).
    pub fn neighbors(&self, rel: Relation, v: usize) -> Result<Neighbors<'_>, GraphError> {
        self.neighbors_dir(rel, Direction::Forward, v)
    }

    pub fn neighbors_dir(&self, rel: Relation, dir: Direction, v: usize) -> Result<Neighbors<'_>, GraphError> {
        let adj = self.adjacency(rel, dir);
        if v >= adj.n_rows() {
            return Err(GraphError::IndexOutOfRange {
                relation: rel,
                index: v,
                len: adj.n_rows(),
            });
        }
        Ok(adj.neighbors(v))
    }

    /// Stored arcs; both directions are counted for every relation.
    pub fn arc_count(&self, rel: Relation) -> usize {
        match rel {
            Relation::Dpi => self.forward[rel.index()].arc_count() + self.dpi_reverse.arc_count(),
            _ => self.forward[rel.index()].arc_count(),
        }
    }

    /// Undirected edges.
    pub fn edge_count(&self, rel: Relation) -> usize {
        self.arc_count(rel) / 2
    }

    /// DDI label of the unordered pair, if the pair is an edge.
    pub fn ddi_label(&self, u: usize, v: usize) -> Option<u16> {
        let adj = &self.forward[Relation::Ddi.index()];
        if u >= adj.n_rows() || v >= adj.n_rows() {
            return None;
        }
        adj.find(u, v).map(|k| adj.labels.as_ref().expect("ddi labels")[k])
    }

    /// Unordered DDI pairs `(u, v, label)` with `u < v`, ascending.
    pub fn ddi_pairs(&self) -> Vec<(usize, usize, u16)> {
        let adj = &self.forward[Relation::Ddi.index()];
        let labels = adj.labels().expect("ddi labels");
        let mut out = Vec::with_capacity(adj.arc_count() / 2);
        for v in 0..adj.n_rows() {
            let range = adj.offsets[v]..adj.offsets[v + 1];
            for (&u, &label) in adj.cols[range.clone()].iter().zip(&labels[range]) {
                if v < u {
                    out.push((v, u, label));
                }
            }
        }
        out
    }

    /// Largest DDI label present (0 for a graph without DDI edges).
    pub fn max_label(&self) -> u16 {
        self.forward[Relation::Ddi.index()]
            .labels()
            .and_then(|l| l.iter().copied().max())
            .unwrap_or(0)
    }

    /// Copy of the graph with the given unordered DDI pairs removed.
    pub fn without_ddi_pairs(&self, pairs: &HashSet<(usize, usize)>) -> HeteroGraph {
        self.filtered(|rel, a, b| rel != Relation::Ddi || !pairs.contains(&(a.min(b), a.max(b))))
    }

    /// Copy of the graph with every edge of `rel` removed.
    pub fn without_relation(&self, rel: Relation) -> HeteroGraph {
        self.filtered(|r, _, _| r != rel)
    }

    fn filtered(&self, keep: impl Fn(Relation, usize, usize) -> bool) -> HeteroGraph {
        let mut unique: Vec<BTreeMap<(usize, usize), ResolvedEdge>> = vec![BTreeMap::new(); 4];
        for rel in Relation::ALL {
            for (a, b, value) in self.unique_edges(rel) {
                if keep(rel, a, b) {
                    unique[rel.index()].insert((a, b), ResolvedEdge { a, b, value });
                }
            }
        }
        Self::from_unique(self.drugs.clone(), self.proteins.clone(), &unique)
    }

    fn unique_edges(&self, rel: Relation) -> Vec<(usize, usize, EdgeValue)> {
        let adj = &self.forward[rel.index()];
        let mut out = Vec::new();
        for v in 0..adj.n_rows() {
            for k in adj.offsets[v]..adj.offsets[v + 1] {
                let u = adj.cols[k];
                if rel != Relation::Dpi && u < v {
                    continue;
                }
                let value = match rel {
                    Relation::Ddi => EdgeValue::Label(adj.labels.as_ref().expect("labels")[k]),
                    Relation::Sim => EdgeValue::Weight(adj.weights.as_ref().expect("weights")[k]),
                    _ => EdgeValue::None,
                };
                out.push((v, u, value));
            }
        }
        out
    }

    /// One record per undirected edge, in relation then index order.
    pub fn edge_records(&self) -> Vec<EdgeRecord> {
        let mut out = Vec::new();
        for rel in Relation::ALL {
            let (st, dt) = (self.nodes(rel.src_type()), self.nodes(rel.dst_type()));
            for (a, b, value) in self.unique_edges(rel) {
                out.push(EdgeRecord::new(st.id(a), dt.id(b), rel, value));
            }
        }
        out
    }

    /// Unordered drug pairs: `n(n−1)/2`.
    pub fn unordered_drug_pairs(&self) -> usize {
        let n = self.drugs.len();
        n * n.saturating_sub(1) / 2
    }

    /// Ordered drug pairs: `n(n−1)`.
    pub fn ordered_drug_pairs(&self) -> usize {
        let n = self.drugs.len();
        n * n.saturating_sub(1)
    }
}

fn resolve_edge(drugs: &NodeTable, proteins: &NodeTable, e: &EdgeRecord) -> Result<Option<ResolvedEdge>, GraphError> {
    let lookup = |id: &str, want: NodeType| -> Result<usize, GraphError> {
        let (table, other) = match want {
            NodeType::Drug => (drugs, proteins),
            NodeType::Protein => (proteins, drugs),
        };
        if let Some(i) = table.get(id) {
            return Ok(i);
        }
        if other.get(id).is_some() {
            return Err(GraphError::Schema {
                relation: e.relation,
                id: id.to_string(),
                expected: want,
                found: other.node_type(),
            });
        }
        Err(GraphError::UnknownNode {
            node_type: want,
            id: id.to_string(),
        })
    };
    let rel = e.relation;
    let invalid = |reason: &str| GraphError::InvalidValue {
        relation: rel,
        src: e.src.clone(),
        dst: e.dst.clone(),
        reason: reason.to_string(),
    };
    let (mut a, mut b) = match rel {
        // A DPI edge may be listed protein-first.
        Relation::Dpi if drugs.get(&e.src).is_none() && proteins.get(&e.src).is_some() => {
            (lookup(&e.dst, NodeType::Drug)?, lookup(&e.src, NodeType::Protein)?)
        }
        _ => (lookup(&e.src, rel.src_type())?, lookup(&e.dst, rel.dst_type())?),
    };
    let value = match (rel, e.value) {
        (Relation::Ddi, EdgeValue::Label(0)) => return Err(invalid("label 0 is reserved for no interaction")),
        (Relation::Ddi, EdgeValue::Label(l)) => EdgeValue::Label(l),
        (Relation::Ddi, _) => return Err(invalid("ddi edges need an integer class label")),
        (Relation::Sim, EdgeValue::Weight(w)) if w.is_finite() && w > 0.0 => EdgeValue::Weight(w),
        (Relation::Sim, _) => return Err(invalid("sim edges need a positive finite weight")),
        (_, EdgeValue::None) => EdgeValue::None,
        (_, _) => return Err(invalid("dpi/ppi edges carry no value")),
    };
    if rel != Relation::Dpi {
        if a == b {
            log::warn!("dropping {rel} self-loop on `{}`", e.src);
            return Ok(None);
        }
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
    }
    Ok(Some(ResolvedEdge { a, b, value }))
}

/// Non-empty, non-comment lines with 1-based line numbers.
pub(crate) fn data_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String), std::io::Error>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Err(e) => Some(Err(e)),
            Ok(l) => {
                let trimmed = l.trim_end_matches(['\r', '\n']);
                if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                    None
                } else {
                    Some(Ok((i + 1, trimmed.to_string())))
                }
            }
        })
}

/// Parses `nodes.tsv` into `(drugs, proteins)`.
pub fn read_nodes<R: BufRead>(reader: R) -> Result<(NodeTable, NodeTable), GraphError> {
    let mut drugs = NodeTable::new(NodeType::Drug);
    let mut proteins = NodeTable::new(NodeType::Protein);
    for line in data_lines(reader) {
        let (no, line) = line?;
        let mut fields = line.split('\t');
        let (Some(id), Some(kind)) = (fields.next(), fields.next()) else {
            return Err(GraphError::Format {
                line: no,
                message: "expected `external_id<TAB>node_type`".into(),
            });
        };
        let kind: NodeType = kind.parse().map_err(|message| GraphError::Format { line: no, message })?;
        let id = id.trim();
        let other = match kind {
            NodeType::Drug => &proteins,
            NodeType::Protein => &drugs,
        };
        if other.get(id).is_some() {
            return Err(GraphError::Format {
                line: no,
                message: format!("id `{id}` declared as both drug and protein"),
            });
        }
        match kind {
            NodeType::Drug => drugs.push(id)?,
            NodeType::Protein => proteins.push(id)?,
        };
    }
    Ok((drugs, proteins))
}

/// Parses `edges.tsv`.
pub fn read_edges<R: BufRead>(reader: R) -> Result<Vec<EdgeRecord>, GraphError> {
    let mut out = Vec::new();
    for line in data_lines(reader) {
        let (no, line) = line?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(GraphError::Format {
                line: no,
                message: "expected `src<TAB>dst<TAB>relation<TAB>value`".into(),
            });
        }
        let relation: Relation = fields[2]
            .parse()
            .map_err(|message| GraphError::Format { line: no, message })?;
        let raw = fields.get(3).map_or("", |v| v.trim());
        let bad = |what: &str| GraphError::Format {
            line: no,
            message: format!("{relation} value `{raw}` is not {what}"),
        };
        let value = match relation {
            Relation::Ddi => EdgeValue::Label(raw.parse().map_err(|_| bad("an integer label"))?),
            Relation::Sim => EdgeValue::Weight(raw.parse().map_err(|_| bad("a float weight"))?),
            _ if raw.is_empty() => EdgeValue::None,
            _ => return Err(bad("empty")),
        };
        out.push(EdgeRecord::new(fields[0].trim(), fields[1].trim(), relation, value));
    }
    Ok(out)
}

pub fn write_nodes<W: Write>(mut w: W, drugs: &NodeTable, proteins: &NodeTable) -> std::io::Result<()> {
    for table in [drugs, proteins] {
        for id in table.ids() {
            writeln!(w, "{id}\t{}", table.node_type())?;
        }
    }
    Ok(())
}

pub fn write_edges<W: Write>(mut w: W, edges: &[EdgeRecord]) -> std::io::Result<()> {
    for e in edges {
        let value = match e.value {
            EdgeValue::None => String::new(),
            EdgeValue::Label(l) => l.to_string(),
            EdgeValue::Weight(x) => format!("{x}"),
        };
        writeln!(w, "{}\t{}\t{}\t{value}", e.src, e.dst, e.relation)?;
    }
    Ok(())
}

/// Loads `nodes.tsv` plus one or more edge files into a graph.
pub fn load_graph(nodes: &Path, edge_files: &[impl AsRef<Path>]) -> Result<HeteroGraph, GraphError> {
    let (drugs, proteins) = read_nodes(std::io::BufReader::new(std::fs::File::open(nodes)?))?;
    let mut edges = Vec::new();
    for path in edge_files {
        edges.extend(read_edges(std::io::BufReader::new(std::fs::File::open(path)?))?);
    }
    HeteroGraph::build(drugs, proteins, &edges)
}
