//! Labeled drug-pair sets: stratified train/test splitting and negative
//! sampling. Every pair is unordered and stored as `(min, max)`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{data_lines, GraphError, HeteroGraph, NodeTable, NodeType};

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("test fraction must lie in (0, 1), got {0}")]
    TestFraction(f64),
    #[error("negative ratio must lie in (0, 1), got {0}")]
    NegativeRatio(f64),
    #[error("requested {requested} negatives but only {available} non-edge pairs remain")]
    Exhausted { requested: usize, available: usize },
    #[error("pair ({0}, {1}) appears more than once")]
    DuplicatePair(usize, usize),
    #[error("pair ({0}, {1}) is a self-pair")]
    SelfPair(usize, usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Test,
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partition::Train => "train",
            Partition::Test => "test",
        })
    }
}

/// A drug pair with its class; label 0 means "no interaction".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledPair {
    pub src: usize,
    pub dst: usize,
    pub label: u16,
}

impl LabeledPair {
    /// Normalizes the pair so that `src < dst`.
    pub fn new(a: usize, b: usize, label: u16) -> Self {
        Self {
            src: a.min(b),
            dst: a.max(b),
            label,
        }
    }

    pub fn key(&self) -> (usize, usize) {
        (self.src, self.dst)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledEdgeSet {
    partition: Partition,
    pairs: Vec<LabeledPair>,
}

impl LabeledEdgeSet {
    pub fn new(partition: Partition, pairs: Vec<LabeledPair>) -> Result<Self, SplitError> {
        let mut seen = HashSet::with_capacity(pairs.len());
        let mut normalized = Vec::with_capacity(pairs.len());
        for p in pairs {
            let p = LabeledPair::new(p.src, p.dst, p.label);
            if p.src == p.dst {
                return Err(SplitError::SelfPair(p.src, p.dst));
            }
            if !seen.insert(p.key()) {
                return Err(SplitError::DuplicatePair(p.src, p.dst));
            }
            normalized.push(p);
        }
        Ok(Self {
            partition,
            pairs: normalized,
        })
    }

    pub fn partition(&self) -> Partition {
        self.partition
    }

    pub fn pairs(&self) -> &[LabeledPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn keys(&self) -> HashSet<(usize, usize)> {
        self.pairs.iter().map(LabeledPair::key).collect()
    }

    /// Positive (label > 0) pairs only.
    pub fn positives(&self) -> LabeledEdgeSet {
        LabeledEdgeSet {
            partition: self.partition,
            pairs: self.pairs.iter().copied().filter(|p| p.label > 0).collect(),
        }
    }

    pub fn negative_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.label == 0).count()
    }
}

/// How many "no interaction" pairs to add to a set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum NegativeRegime {
    None,
    /// Negatives make up this share of the resulting set.
    Fraction(f64),
    /// Every remaining non-edge drug pair.
    All,
}

impl NegativeRegime {
    pub fn validate(self) -> Result<(), SplitError> {
        match self {
            NegativeRegime::Fraction(r) if !(r > 0.0 && r < 1.0) => Err(SplitError::NegativeRatio(r)),
            _ => Ok(()),
        }
    }

    /// Negatives to add so that `negatives / (base + negatives)` is the
    /// configured fraction, rounded down. `None` for the `All` regime.
    pub fn count_for(self, base: usize) -> Option<usize> {
        match self {
            NegativeRegime::None => Some(0),
            // The epsilon keeps exact ratios such as 90·0.1/0.9 = 10 from
            // flooring to 9.
            NegativeRegime::Fraction(r) => Some((base as f64 * r / (1.0 - r) + 1e-9).floor() as usize),
            NegativeRegime::All => None,
        }
    }
}

impl fmt::Display for NegativeRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NegativeRegime::None => f.write_str("none"),
            NegativeRegime::Fraction(r) => write!(f, "frac:{r}"),
            NegativeRegime::All => f.write_str("all"),
        }
    }
}

impl TryFrom<String> for NegativeRegime {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<NegativeRegime> for String {
    fn from(r: NegativeRegime) -> Self {
        r.to_string()
    }
}

impl FromStr for NegativeRegime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "none" => Ok(NegativeRegime::None),
            "all" => Ok(NegativeRegime::All),
            _ => {
                let ratio = s
                    .strip_prefix("frac:")
                    .ok_or_else(|| format!("expected none, all or frac:<ratio>, got `{s}`"))?;
                let r: f64 = ratio.parse().map_err(|_| format!("bad ratio `{ratio}`"))?;
                NegativeRegime::Fraction(r).validate().map_err(|e| e.to_string())?;
                Ok(NegativeRegime::Fraction(r))
            }
        }
    }
}

/// Stratified random split of the graph's DDI pairs.
///
/// Each class with support ≥ 2 sends `round(support · test_fraction)` pairs
/// to test, clamped to `1..=support−1`. Classes with a single pair stay in
/// train.
pub fn split_edges(
    g: &HeteroGraph,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledEdgeSet, LabeledEdgeSet), SplitError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(SplitError::TestFraction(test_fraction));
    }
    let mut by_class: BTreeMap<u16, Vec<LabeledPair>> = BTreeMap::new();
    for (u, v, label) in g.ddi_pairs() {
        by_class.entry(label).or_default().push(LabeledPair::new(u, v, label));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, mut pairs) in by_class {
        let support = pairs.len();
        if support < 2 {
            log::warn!("class {label} has a single pair; keeping it in train");
            train.extend(pairs);
            continue;
        }
        let k = ((support as f64 * test_fraction).round() as usize).clamp(1, support - 1);
        pairs.shuffle(&mut rng);
        test.extend_from_slice(&pairs[..k]);
        train.extend_from_slice(&pairs[k..]);
    }
    train.sort();
    test.sort();
    Ok((
        LabeledEdgeSet::new(Partition::Train, train)?,
        LabeledEdgeSet::new(Partition::Test, test)?,
    ))
}

/// Appends class-0 pairs to `base` according to `regime`.
///
/// Candidates are drug pairs that are not DDI edges of `g` (train or test)
/// and not already in `base`.
pub fn sample_negatives(
    g: &HeteroGraph,
    base: &LabeledEdgeSet,
    regime: NegativeRegime,
    seed: u64,
) -> Result<LabeledEdgeSet, SplitError> {
    sample_negatives_excluding(g, base, regime, seed, &HashSet::new())
}

/// [`sample_negatives`] that additionally avoids every pair in `exclude`.
pub fn sample_negatives_excluding(
    g: &HeteroGraph,
    base: &LabeledEdgeSet,
    regime: NegativeRegime,
    seed: u64,
    exclude: &HashSet<(usize, usize)>,
) -> Result<LabeledEdgeSet, SplitError> {
    regime.validate()?;
    if regime == NegativeRegime::None {
        return Ok(base.clone());
    }
    let n = g.node_count(NodeType::Drug);
    let mut forbidden: HashSet<(usize, usize)> = g.ddi_pairs().into_iter().map(|(u, v, _)| (u, v)).collect();
    forbidden.extend(base.pairs().iter().map(LabeledPair::key));
    forbidden.extend(exclude.iter().filter(|(a, b)| a != b && *a.max(b) < n).map(|&(a, b)| (a.min(b), a.max(b))));
    let available = g.unordered_drug_pairs() - forbidden.len();

    let requested = regime.count_for(base.len()).unwrap_or(available);
    if requested > available {
        return Err(SplitError::Exhausted { requested, available });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut negatives: Vec<(usize, usize)> = if requested * 2 > available {
        let mut pool: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|k| !forbidden.contains(k))
            .collect();
        pool.shuffle(&mut rng);
        pool.truncate(requested);
        pool
    } else {
        let mut chosen = HashSet::with_capacity(requested);
        let mut out = Vec::with_capacity(requested);
        while out.len() < requested {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b {
                continue;
            }
            let key = (a.min(b), a.max(b));
            if forbidden.contains(&key) || !chosen.insert(key) {
                continue;
            }
            out.push(key);
        }
        out
    };
    negatives.sort();
    let mut pairs = base.pairs().to_vec();
    pairs.extend(negatives.into_iter().map(|(a, b)| LabeledPair::new(a, b, 0)));
    LabeledEdgeSet::new(base.partition(), pairs)
}

/// Writes `split.tsv`: `src_id<TAB>dst_id<TAB>label<TAB>partition`.
pub fn write_split<W: Write>(mut w: W, drugs: &NodeTable, sets: &[&LabeledEdgeSet]) -> std::io::Result<()> {
    for set in sets {
        for p in set.pairs() {
            writeln!(w, "{}\t{}\t{}\t{}", drugs.id(p.src), drugs.id(p.dst), p.label, set.partition())?;
        }
    }
    Ok(())
}

/// Reads `split.tsv` back into `(train, test)`.
pub fn read_split<R: BufRead>(reader: R, drugs: &NodeTable) -> Result<(LabeledEdgeSet, LabeledEdgeSet), SplitError> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for line in data_lines(reader) {
        let (no, line) = line.map_err(GraphError::from)?;
        let fields: Vec<&str> = line.split('\t').collect();
        let format = |message: String| SplitError::Graph(GraphError::Format { line: no, message });
        if fields.len() != 4 {
            return Err(format("expected `src<TAB>dst<TAB>label<TAB>partition`".into()));
        }
        let a = drugs.resolve(fields[0].trim())?;
        let b = drugs.resolve(fields[1].trim())?;
        let label: u16 = fields[2].trim().parse().map_err(|_| format(format!("bad label `{}`", fields[2])))?;
        let pair = LabeledPair::new(a, b, label);
        match fields[3].trim() {
            "train" => train.push(pair),
            "test" => test.push(pair),
            other => return Err(format(format!("unknown partition `{other}`"))),
        }
    }
    Ok((
        LabeledEdgeSet::new(Partition::Train, train)?,
        LabeledEdgeSet::new(Partition::Test, test)?,
    ))
}
