//! Precomputed node embeddings and fingerprint similarity edges.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use thiserror::Error;

use crate::graph::{data_lines, EdgeRecord, EdgeValue, HeteroGraph, NodeTable, NodeType, Relation};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("{node_type} features missing for {} node(s): {}", .missing.len(), preview(.missing))]
    Coverage { node_type: NodeType, missing: Vec<String> },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("fingerprint length mismatch: `{a}` has {a_len} bits, `{b}` has {b_len}")]
    LengthMismatch {
        a: String,
        a_len: usize,
        b: String,
        b_len: usize,
    },
    #[error("similarity threshold must lie in (0, 1], got {0}")]
    Threshold(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn preview(ids: &[String]) -> String {
    const SHOWN: usize = 10;
    let mut s = ids.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        s.push_str(", ...");
    }
    s
}

/// Embedding matrix for one node type; row `i` belongs to dense index `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeFeatures {
    node_type: NodeType,
    matrix: Tensor,
}

impl NodeFeatures {
    pub fn new(node_type: NodeType, matrix: Tensor) -> Self {
        Self { node_type, matrix }
    }

    pub fn node_type(&self) -> NodeType {
        self.node_type
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Drug and protein feature matrices for one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub drug: NodeFeatures,
    pub protein: NodeFeatures,
}

impl Features {
    pub fn new(drug: NodeFeatures, protein: NodeFeatures) -> Self {
        Self { drug, protein }
    }

    pub fn get(&self, t: NodeType) -> &NodeFeatures {
        match t {
            NodeType::Drug => &self.drug,
            NodeType::Protein => &self.protein,
        }
    }

    /// Parses one file holding vectors for both node types.
    pub fn parse<R: BufRead>(mut reader: R, graph: &HeteroGraph) -> Result<Self, FeatureError> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let drug = parse_features(text.as_bytes(), graph.nodes(NodeType::Drug), FeatureOptions::default())?;
        let protein = parse_features(
            text.as_bytes(),
            graph.nodes(NodeType::Protein),
            FeatureOptions {
                empty_dim: drug.dim(),
                ..FeatureOptions::default()
            },
        )?;
        Ok(Self { drug, protein })
    }

    pub fn load(path: &Path, graph: &HeteroGraph) -> Result<Self, FeatureError> {
        let file = std::fs::File::open(path)?;
        Self::parse(std::io::BufReader::new(file), graph)
    }

    pub fn write<W: Write>(&self, mut w: W, graph: &HeteroGraph) -> std::io::Result<()> {
        write_features(&mut w, graph.nodes(NodeType::Drug), &self.drug)?;
        write_features(&mut w, graph.nodes(NodeType::Protein), &self.protein)
    }
}

/// Options for [`parse_features`].
#[derive(Clone, Copy, Debug, Default)]
pub struct FeatureOptions {
    pub allow_zero_rows: bool,
    /// Dimension to use when the table has no nodes.
    pub empty_dim: usize,
}

/// Reads `external_id<TAB>v1 v2 ... vd` rows for the nodes of `table`.
///
/// Rows for ids outside the table are skipped so drug and protein vectors
/// may share one file; the dimension is enforced among the rows that are
/// kept.
pub fn parse_features<R: BufRead>(
    reader: R,
    table: &NodeTable,
    opts: FeatureOptions,
) -> Result<NodeFeatures, FeatureError> {
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; table.len()];
    let mut dim = None;
    for line in data_lines(reader) {
        let (no, line) = line?;
        let format = |message: String| FeatureError::Format { line: no, message };
        let (id, values) = line
            .split_once('\t')
            .ok_or_else(|| format("expected `external_id<TAB>values`".into()))?;
        let Some(idx) = table.get(id.trim()) else {
            continue;
        };
        let parsed = values
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format(format!("bad value for `{id}`: {e}")))?;
        if parsed.is_empty() {
            return Err(format(format!("empty vector for `{id}`")));
        }
        match dim {
            None => dim = Some(parsed.len()),
            Some(d) if d != parsed.len() => {
                return Err(format(format!("`{id}` has {} values, expected {d}", parsed.len())));
            }
            _ => {}
        }
        if parsed.iter().any(|v| !v.is_finite()) {
            return Err(format(format!("non-finite value for `{id}`")));
        }
        if !opts.allow_zero_rows && parsed.iter().all(|&v| v == 0.0) {
            return Err(format(format!("all-zero vector for `{id}`")));
        }
        if rows[idx].is_some() {
            return Err(format(format!("duplicate row for `{id}`")));
        }
        rows[idx] = Some(parsed);
    }
    let missing: Vec<String> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_none())
        .map(|(i, _)| table.id(i).to_string())
        .collect();
    if !missing.is_empty() {
        return Err(FeatureError::Coverage {
            node_type: table.node_type(),
            missing,
        });
    }
    let dim = dim.unwrap_or(opts.empty_dim);
    let data: Vec<f64> = rows.into_iter().flatten().flatten().collect();
    let matrix = Tensor::matrix(table.len(), dim, data).expect("rows checked against dim");
    Ok(NodeFeatures::new(table.node_type(), matrix))
}

pub fn load_features(path: &Path, table: &NodeTable) -> Result<NodeFeatures, FeatureError> {
    let file = std::fs::File::open(path)?;
    parse_features(std::io::BufReader::new(file), table, FeatureOptions::default())
}

pub fn write_features<W: Write>(mut w: W, table: &NodeTable, features: &NodeFeatures) -> std::io::Result<()> {
    for (i, id) in table.ids().iter().enumerate() {
        let row: Vec<String> = features.matrix().row(i).iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{id}\t{}", row.join(" "))?;
    }
    Ok(())
}

/// Fixed-length bit vector keyed by a node id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fingerprint {
    id: String,
    len: usize,
    words: Vec<u64>,
}

impl Fingerprint {
    /// Parses a string of `'0'`/`'1'` characters.
    pub fn from_bitstring(id: impl Into<String>, bits: &str) -> Result<Self, String> {
        let len = bits.len();
        let mut words = vec![0u64; len.div_ceil(64)];
        for (i, c) in bits.bytes().enumerate() {
            match c {
                b'1' => words[i / 64] |= 1 << (i % 64),
                b'0' => {}
                other => return Err(format!("invalid fingerprint character `{}`", other as char)),
            }
        }
        Ok(Self {
            id: id.into(),
            len,
            words,
        })
    }

    pub fn from_bools(id: impl Into<String>, bits: &[bool]) -> Self {
        let mut words = vec![0u64; bits.len().div_ceil(64)];
        for (i, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
            words[i / 64] |= 1 << (i % 64);
        }
        Self {
            id: id.into(),
            len: bits.len(),
            words,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn to_bitstring(&self) -> String {
        (0..self.len).map(|i| if self.bit(i) { '1' } else { '0' }).collect()
    }
}

/// `|a ∧ b| / |a ∨ b|`, or 0 when both are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, FeatureError> {
    if a.len != b.len {
        return Err(FeatureError::LengthMismatch {
            a: a.id.clone(),
            a_len: a.len,
            b: b.id.clone(),
            b_len: b.len,
        });
    }
    let (mut both, mut either) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        both += (x & y).count_ones();
        either += (x | y).count_ones();
    }
    Ok(if either == 0 { 0.0 } else { f64::from(both) / f64::from(either) })
}

/// Reads `fingerprints.tsv`; every bitstring must share one length.
pub fn read_fingerprints<R: BufRead>(reader: R) -> Result<Vec<Fingerprint>, FeatureError> {
    let mut out: Vec<Fingerprint> = Vec::new();
    for line in data_lines(reader) {
        let (no, line) = line?;
        let format = |message: String| FeatureError::Format { line: no, message };
        let (id, bits) = line
            .split_once('\t')
            .ok_or_else(|| format("expected `external_id<TAB>bitstring`".into()))?;
        let fp = Fingerprint::from_bitstring(id.trim(), bits.trim()).map_err(format)?;
        if let Some(first) = out.first() {
            if first.len() != fp.len() {
                return Err(format(format!(
                    "`{}` has {} bits, expected {}",
                    fp.id(),
                    fp.len(),
                    first.len()
                )));
            }
        }
        out.push(fp);
    }
    Ok(out)
}

pub fn write_fingerprints<W: Write>(mut w: W, fps: &[Fingerprint]) -> std::io::Result<()> {
    for fp in fps {
        writeln!(w, "{}\t{}", fp.id(), fp.to_bitstring())?;
    }
    Ok(())
}

/// Weighted drug–drug similarity edge.
#[derive(Clone, Debug, PartialEq)]
pub struct SimEdge {
    pub src: String,
    pub dst: String,
    pub weight: f64,
}

impl From<&SimEdge> for EdgeRecord {
    fn from(e: &SimEdge) -> Self {
        EdgeRecord::new(e.src.clone(), e.dst.clone(), Relation::Sim, EdgeValue::Weight(e.weight))
    }
}

fn check_threshold(tau: f64) -> Result<(), FeatureError> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(FeatureError::Threshold(tau))
    }
}

/// Pairwise similarity edges with score strictly above `tau`, ordered by
/// `(i, j)` input position.
fn threshold_pairs<T: Sync>(
    items: &[T],
    tau: f64,
    score: impl Fn(&T, &T) -> Result<f64, FeatureError> + Sync,
) -> Result<Vec<(usize, usize, f64)>, FeatureError> {
    let row = |i: usize| -> Result<Vec<(usize, usize, f64)>, FeatureError> {
        let mut out = Vec::new();
        for j in i + 1..items.len() {
            let s = score(&items[i], &items[j])?;
            if s > tau {
                out.push((i, j, s));
            }
        }
        Ok(out)
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<_> = {
        use rayon::prelude::*;
        (0..items.len()).into_par_iter().map(row).collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<_> = (0..items.len()).map(row).collect::<Result<_, _>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// SIM edges between every fingerprint pair with Tanimoto similarity > `tau`.
pub fn build_similarity_edges(fps: &[Fingerprint], tau: f64) -> Result<Vec<SimEdge>, FeatureError> {
    check_threshold(tau)?;
    if let Some(first) = fps.first() {
        if let Some(bad) = fps.iter().find(|f| f.len() != first.len()) {
            return Err(FeatureError::LengthMismatch {
                a: first.id.clone(),
                a_len: first.len,
                b: bad.id.clone(),
                b_len: bad.len,
            });
        }
    }
    let pairs = threshold_pairs(fps, tau, tanimoto)?;
    Ok(pairs
        .into_iter()
        .map(|(i, j, w)| SimEdge {
            src: fps[i].id.clone(),
            dst: fps[j].id.clone(),
            weight: w,
        })
        .collect())
}

/// Alternative SIM source: cosine similarity between embedding rows.
pub fn build_cosine_similarity_edges(
    table: &NodeTable,
    features: &NodeFeatures,
    tau: f64,
) -> Result<Vec<SimEdge>, FeatureError> {
    check_threshold(tau)?;
    let rows: Vec<&[f64]> = (0..features.len()).map(|i| features.matrix().row(i)).collect();
    let norms: HashMap<usize, f64> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r.iter().map(|v| v * v).sum::<f64>().sqrt()))
        .collect();
    let indexed: Vec<(usize, &[f64])> = rows.into_iter().enumerate().collect();
    let pairs = threshold_pairs(&indexed, tau, |(i, a), (j, b)| {
        let denom = norms[i] * norms[j];
        let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
        Ok(if denom == 0.0 { 0.0 } else { dot / denom })
    })?;
    Ok(pairs
        .into_iter()
        .map(|(i, j, w)| SimEdge {
            src: table.id(i).to_string(),
            dst: table.id(j).to_string(),
            weight: w,
        })
        .collect())
}
