use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::features::{write_fingerprints, Features, Fingerprint, NodeFeatures};
use crate::metrics::ClassGrouping;
use crate::graph::{write_edges, write_nodes, EdgeRecord, EdgeValue, HeteroGraph, NodeTable, NodeType, Relation};
use crate::tensor::Tensor;

/// Parameters of the planted-cluster dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedSpec {
    pub n_drugs: usize,
    pub n_proteins: usize,
    pub class_count: usize,
    /// Drug clusters are `clusters_per_class · (class_count + 1)`.
    pub clusters_per_class: usize,
    pub feature_dim: usize,
    pub noise: f64,
    pub seed: u64,
    /// Probability that a pair with a non-zero planted class is emitted as
    /// a DDI edge; the rest become non-edges (class 0).
    pub edge_density: f64,
    pub dpi_per_drug: usize,
    pub ppi_per_protein: usize,
    /// Probability that an emitted label is replaced by its sibling class
    /// (see [`sibling_class`]); fine classes within a sibling group become
    /// hard to tell apart.
    pub sibling_noise: f64,
    pub fingerprint_bits: usize,
    pub fingerprint_flip: f64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            n_drugs: 60,
            n_proteins: 40,
            class_count: 3,
            clusters_per_class: 1,
            feature_dim: 16,
            noise: 0.05,
            seed: 1,
            edge_density: 1.0,
            dpi_per_drug: 2,
            ppi_per_protein: 2,
            sibling_noise: 0.0,
            fingerprint_bits: 64,
            fingerprint_flip: 0.05,
        }
    }
}

impl PlantedSpec {
    pub fn cluster_count(&self) -> usize {
        self.clusters_per_class * (self.class_count + 1)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if self.class_count == 0 || self.clusters_per_class == 0 {
            return bad("class_count and clusters_per_class must be at least 1".into());
        }
        if self.cluster_count() > self.n_drugs {
            return bad(format!(
                "{} clusters cannot be filled by {} drugs",
                self.cluster_count(),
                self.n_drugs
            ));
        }
        if self.class_count > u16::MAX as usize {
            return bad(format!("class_count {} is too large", self.class_count));
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be at least 1".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be finite and non-negative, got {}", self.noise));
        }
        if !(0.0..=1.0).contains(&self.edge_density) {
            return bad(format!("edge_density must lie in [0, 1], got {}", self.edge_density));
        }
        if !(0.0..=1.0).contains(&self.sibling_noise) {
            return bad(format!("sibling_noise must lie in [0, 1], got {}", self.sibling_noise));
        }
        if !(0.0..=1.0).contains(&self.fingerprint_flip) {
            return bad(format!("fingerprint_flip must lie in [0, 1], got {}", self.fingerprint_flip));
        }
        Ok(())
    }
}

/// Planted class of a pair of drug clusters: `(a + b) mod (C + 1)`.
pub fn planted_class(a: usize, b: usize, class_count: usize) -> u16 {
    ((a + b) % (class_count + 1)) as u16
}

/// Partner of class `c` in the pairing `(1, 2), (3, 4), ...`; an odd last
/// class is its own sibling.
pub fn sibling_class(c: u16, class_count: usize) -> u16 {
    if c == 0 {
        0
    } else if c % 2 == 1 {
        if (c as usize) < class_count {
            c + 1
        } else {
            c
        }
    } else {
        c - 1
    }
}

/// Grouping that merges each sibling pair: classes `2k-1, 2k` map to `k`.
pub fn sibling_grouping(class_count: usize) -> ClassGrouping {
    ClassGrouping::new((1..=class_count).map(|c| (c, c.div_ceil(2))).collect::<BTreeMap<_, _>>())
}

#[derive(Clone, Debug)]
pub struct PlantedData {
    pub spec: PlantedSpec,
    pub drugs: NodeTable,
    pub proteins: NodeTable,
    pub drug_cluster: Vec<usize>,
    pub protein_group: Vec<usize>,
    pub edges: Vec<EdgeRecord>,
    pub features: Features,
    /// Every unordered drug pair `(u < v)` with its emitted class.
    pub truth: Vec<(usize, usize, u16)>,
    pub fingerprints: Vec<Fingerprint>,
}

impl PlantedData {
    pub fn graph(&self) -> Result<HeteroGraph, TrainError> {
        Ok(HeteroGraph::build(self.drugs.clone(), self.proteins.clone(), &self.edges)?)
    }

    pub fn ddi_count(&self) -> usize {
        self.truth.iter().filter(|t| t.2 != 0).count()
    }

    /// Writes `nodes.tsv`, `edges.tsv`, `features.tsv`, `truth.tsv`,
    /// `clusters.tsv` and `fingerprints.tsv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, TrainError> {
        fs::create_dir_all(dir)?;
        let graph = self.graph()?;
        let mut written = Vec::new();
        let mut emit = |name: &str, f: &dyn Fn(&mut dyn Write) -> std::io::Result<()>| -> Result<(), TrainError> {
            let path = dir.join(name);
            let mut w = BufWriter::new(fs::File::create(&path)?);
            f(&mut w)?;
            w.flush()?;
            written.push(path);
            Ok(())
        };
        emit("nodes.tsv", &|w| write_nodes(w, &self.drugs, &self.proteins))?;
        emit("edges.tsv", &|w| write_edges(w, &self.edges))?;
        emit("features.tsv", &|w| self.features.write(w, &graph))?;
        emit("truth.tsv", &|w| {
            for &(u, v, c) in &self.truth {
                writeln!(w, "{}\t{}\t{c}", self.drugs.id(u), self.drugs.id(v))?;
            }
            Ok(())
        })?;
        emit("clusters.tsv", &|w| {
            for (i, c) in self.drug_cluster.iter().enumerate() {
                writeln!(w, "{}\tdrug\t{c}", self.drugs.id(i))?;
            }
            for (i, g) in self.protein_group.iter().enumerate() {
                writeln!(w, "{}\tprotein\t{g}", self.proteins.id(i))?;
            }
            Ok(())
        })?;
        emit("fingerprints.tsv", &|w| write_fingerprints(w, &self.fingerprints))?;
        Ok(written)
    }
}

fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

/// Drugs in planted clusters whose cluster pair fixes the interaction
/// class; proteins grouped alongside the clusters so that drug→protein→drug
/// paths stay within a cluster.
pub fn generate_planted(spec: &PlantedSpec) -> Result<PlantedData, TrainError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.cluster_count();
    let c = spec.class_count;

    let width = |n: usize| n.saturating_sub(1).to_string().len().max(3);
    let (dw, pw) = (width(spec.n_drugs), width(spec.n_proteins));
    let drugs = NodeTable::from_ids(NodeType::Drug, (0..spec.n_drugs).map(|i| format!("D{i:0dw$}")))?;
    let proteins = NodeTable::from_ids(NodeType::Protein, (0..spec.n_proteins).map(|i| format!("P{i:0pw$}")))?;

    let mut drug_cluster: Vec<usize> = (0..spec.n_drugs).map(|i| i % k).collect();
    rand::seq::SliceRandom::shuffle(drug_cluster.as_mut_slice(), &mut rng);

    let mut edges = Vec::new();
    let mut truth = Vec::with_capacity(spec.n_drugs * spec.n_drugs.saturating_sub(1) / 2);
    for u in 0..spec.n_drugs {
        for v in u + 1..spec.n_drugs {
            let planted = planted_class(drug_cluster[u], drug_cluster[v], c);
            let keep: f64 = rng.random();
            let mut label = if planted != 0 && keep < spec.edge_density { planted } else { 0 };
            if spec.sibling_noise > 0.0 && rng.random_bool(spec.sibling_noise) {
                label = sibling_class(label, c);
            }
            if label != 0 {
                edges.push(EdgeRecord::new(drugs.id(u), drugs.id(v), Relation::Ddi, EdgeValue::Label(label)));
            }
            truth.push((u, v, label));
        }
    }

    let groups = k.min(spec.n_proteins);
    let protein_group: Vec<usize> = (0..spec.n_proteins).map(|j| j % groups.max(1)).collect();
    let members: Vec<Vec<usize>> = (0..groups)
        .map(|g| (0..spec.n_proteins).filter(|&j| protein_group[j] == g).collect())
        .collect();
    if groups > 0 {
        for (u, &cluster) in drug_cluster.iter().enumerate() {
            let pool = &members[cluster % groups];
            for i in sample(&mut rng, pool.len(), spec.dpi_per_drug.min(pool.len())) {
                edges.push(EdgeRecord::new(drugs.id(u), proteins.id(pool[i]), Relation::Dpi, EdgeValue::None));
            }
        }
        for (j, &group) in protein_group.iter().enumerate() {
            let others: Vec<usize> = members[group].iter().copied().filter(|&o| o != j).collect();
            for i in sample(&mut rng, others.len(), spec.ppi_per_protein.min(others.len())) {
                edges.push(EdgeRecord::new(proteins.id(j), proteins.id(others[i]), Relation::Ppi, EdgeValue::None));
            }
        }
    }

    let dim = spec.feature_dim;
    let drug_centroids = gaussian_rows(&mut rng, k, dim);
    let protein_centroids = gaussian_rows(&mut rng, groups, dim);
    let mut jitter = |centroid: &[f64]| -> Vec<f64> {
        centroid
            .iter()
            .map(|&m| m + spec.noise * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let drug_rows: Vec<Vec<f64>> = drug_cluster.iter().map(|&cl| jitter(&drug_centroids[cl])).collect();
    let protein_rows: Vec<Vec<f64>> = protein_group.iter().map(|&g| jitter(&protein_centroids[g])).collect();
    let to_matrix = |rows: &[Vec<f64>]| {
        if rows.is_empty() {
            Tensor::zeros(&[0, dim])
        } else {
            Tensor::from_rows(rows).expect("equal-length rows")
        }
    };
    let features = Features::new(
        NodeFeatures::new(NodeType::Drug, to_matrix(&drug_rows)),
        NodeFeatures::new(NodeType::Protein, to_matrix(&protein_rows)),
    );

    let bits = spec.fingerprint_bits;
    let prototypes: Vec<Vec<bool>> = (0..k).map(|_| (0..bits).map(|_| rng.random_bool(0.3)).collect()).collect();
    let fingerprints = drug_cluster
        .iter()
        .enumerate()
        .map(|(u, &cl)| {
            let bits: Vec<bool> = prototypes[cl]
                .iter()
                .map(|&b| b ^ rng.random_bool(spec.fingerprint_flip))
                .collect();
            Fingerprint::from_bools(drugs.id(u), &bits)
        })
        .collect();

    Ok(PlantedData {
        spec: spec.clone(),
        drugs,
        proteins,
        drug_cluster,
        protein_group,
        edges,
        features,
        truth,
        fingerprints,
    })
}
