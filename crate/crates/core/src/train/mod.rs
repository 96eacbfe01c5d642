//! Training loop, evaluation and the planted synthetic dataset.

mod optim;
mod planted;

pub use optim::Adam;
pub use planted::{generate_planted, planted_class, sibling_class, sibling_grouping, PlantedData, PlantedSpec};

use std::collections::HashSet;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureError, Features};
use crate::graph::{GraphError, HeteroGraph, NodeType};
use crate::metrics::{
    confusion_matrix, weighted_metrics, ClassGrouping, ConfusionMatrix, MetricReport, MetricsError,
};
use crate::nn::{decode_pairs, encode, EncoderKind, GraphContext, ModelDims, ModelError, ModelParams};
use crate::split::{sample_negatives, sample_negatives_excluding, split_edges, LabeledEdgeSet, NegativeRegime, SplitError};
use crate::tensor::{Tape, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite value at epoch {epoch}: {detail}")]
    NonFinite { epoch: usize, detail: String },
    #[error("test set is empty")]
    EmptyTest,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub encoder_kind: EncoderKind,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub test_fraction: f64,
    pub train_negative_ratio: f64,
    pub test_negative_regime: NegativeRegime,
    pub hidden_dim: usize,
    pub decoder_hidden: usize,
    /// Number of interaction classes `C`; inferred from the largest DDI
    /// label when absent.
    pub class_count: Option<usize>,
    pub class_grouping_path: Option<PathBuf>,
    pub heads: usize,
    pub sim_weighting: bool,
    pub leaky_slope: f64,
    pub eval_every: usize,
    pub exclude_class0: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            encoder_kind: EncoderKind::Hgcn,
            epochs: 200,
            learning_rate: 1e-3,
            seed: 0,
            test_fraction: 0.2,
            train_negative_ratio: 0.1,
            test_negative_regime: NegativeRegime::Fraction(0.1),
            hidden_dim: 64,
            decoder_hidden: 128,
            class_count: None,
            class_grouping_path: None,
            heads: 1,
            sim_weighting: true,
            leaky_slope: 0.01,
            eval_every: 1,
            exclude_class0: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |field: &str, msg: String| Err(TrainError::Config(format!("{field}: {msg}")));
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", format!("must be finite and non-negative, got {}", self.learning_rate));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction", format!("must lie in (0, 1), got {}", self.test_fraction));
        }
        if !(self.train_negative_ratio >= 0.0 && self.train_negative_ratio < 1.0) {
            return bad(
                "train_negative_ratio",
                format!("must lie in [0, 1), got {}", self.train_negative_ratio),
            );
        }
        if let Err(e) = self.test_negative_regime.validate() {
            return bad("test_negative_regime", e.to_string());
        }
        for (field, v) in [
            ("hidden_dim", self.hidden_dim),
            ("decoder_hidden", self.decoder_hidden),
            ("heads", self.heads),
            ("eval_every", self.eval_every),
        ] {
            if v == 0 {
                return bad(field, "must be at least 1".into());
            }
        }
        if self.class_count == Some(0) {
            return bad("class_count", "must be at least 1".into());
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return bad("leaky_slope", format!("must be finite and non-negative, got {}", self.leaky_slope));
        }
        Ok(())
    }

    fn train_regime(&self) -> NegativeRegime {
        if self.train_negative_ratio == 0.0 {
            NegativeRegime::None
        } else {
            NegativeRegime::Fraction(self.train_negative_ratio)
        }
    }

    pub fn model_dims(&self, features: &Features, class_count: usize) -> ModelDims {
        ModelDims {
            drug_in: features.drug.dim(),
            protein_in: features.protein.dim(),
            hidden: self.hidden_dim,
            decoder_hidden: self.decoder_hidden,
            class_count,
            layers: 3,
            heads: self.heads,
            leaky_slope: self.leaky_slope,
            sim_weighting: self.sim_weighting,
        }
    }
}

/// Independent stream seeds derived from the run seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_SPLIT: u64 = 1;
const STREAM_TEST_NEGATIVES: u64 = 2;
const STREAM_INIT: u64 = 3;
const STREAM_TRAIN_NEGATIVES: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean cross-entropy before this epoch's update.
    pub loss: f64,
    pub train_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub epoch: usize,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub evals: Vec<EvalRecord>,
}

impl TrainHistory {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|r| r.loss)
    }

    /// `epoch, loss, f1, precision, recall, accuracy, train_accuracy`; metric
    /// cells are empty for epochs without an evaluation.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch\tloss\tf1\tprecision\trecall\taccuracy\ttrain_accuracy")?;
        let mut evals = self.evals.iter().peekable();
        for r in &self.epochs {
            write!(w, "{}\t{}", r.epoch, r.loss)?;
            match evals.next_if(|e| e.epoch == r.epoch) {
                Some(e) => write!(w, "\t{}\t{}\t{}\t{}", e.f1, e.precision, e.recall, e.accuracy)?,
                None => write!(w, "\t\t\t\t")?,
            }
            writeln!(w, "\t{}", r.train_accuracy)?;
        }
        Ok(())
    }
}

/// Confusion matrix and support-weighted metrics for one labeled set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub report: MetricReport,
    pub grouped: Option<GroupedEvaluation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupedEvaluation {
    pub confusion: ConfusionMatrix,
    pub report: MetricReport,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EvalOptions<'a> {
    pub exclude_class0: bool,
    pub grouping: Option<&'a ClassGrouping>,
}

/// The graph used for message passing when `held_out` is evaluated: every
/// DDI edge listed in `held_out` is removed.
pub fn message_graph(g: &HeteroGraph, held_out: &LabeledEdgeSet) -> HeteroGraph {
    let keys: HashSet<(usize, usize)> = held_out.pairs().iter().filter(|p| p.label != 0).map(|p| p.key()).collect();
    g.without_ddi_pairs(&keys)
}

/// Scores pairs against a fixed message graph.
pub struct Evaluator {
    graph: HeteroGraph,
    ctx: GraphContext,
}

impl Evaluator {
    /// Prepares evaluation of `held_out`; its DDI edges are hidden from the
    /// encoder.
    pub fn new(g: &HeteroGraph, held_out: &LabeledEdgeSet, sim_weighting: bool) -> Self {
        Self::on_graph(message_graph(g, held_out), sim_weighting)
    }

    pub fn on_graph(graph: HeteroGraph, sim_weighting: bool) -> Self {
        let ctx = GraphContext::new(&graph, sim_weighting);
        Self { graph, ctx }
    }

    pub fn graph(&self) -> &HeteroGraph {
        &self.graph
    }

    pub fn context(&self) -> &GraphContext {
        &self.ctx
    }

    /// Argmax class per pair; ties go to the lower class.
    pub fn predict(&self, model: &ModelParams, features: &Features, pairs: &[(usize, usize)]) -> Result<Vec<usize>, TrainError> {
        let probs = model.predict_pairs(&self.ctx, &self.graph, features, pairs)?;
        Ok((0..probs.rows()).map(|i| argmax(probs.row(i))).collect())
    }

    pub fn evaluate(
        &self,
        model: &ModelParams,
        features: &Features,
        set: &LabeledEdgeSet,
        opts: EvalOptions<'_>,
    ) -> Result<Evaluation, TrainError> {
        if set.is_empty() {
            return Err(TrainError::EmptyTest);
        }
        let pairs: Vec<(usize, usize)> = set.pairs().iter().map(|p| p.key()).collect();
        let labels: Vec<usize> = set.pairs().iter().map(|p| p.label as usize).collect();
        let preds = self.predict(model, features, &pairs)?;
        score(&preds, &labels, model.dims().class_count, opts)
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Builds the confusion matrix and metrics for given predictions.
pub fn score(preds: &[usize], labels: &[usize], class_count: usize, opts: EvalOptions<'_>) -> Result<Evaluation, TrainError> {
    let confusion = confusion_matrix(preds, labels, class_count)?;
    let report = weighted_metrics(&confusion, opts.exclude_class0)?;
    let grouped = match opts.grouping {
        Some(grouping) => {
            let confusion = confusion.aggregate(grouping)?;
            let report = weighted_metrics(&confusion, opts.exclude_class0)?;
            Some(GroupedEvaluation { confusion, report })
        }
        None => None,
    };
    Ok(Evaluation {
        confusion,
        report,
        grouped,
    })
}

/// Evaluates `model` on `test`, hiding the test DDI edges from the encoder.
pub fn evaluate(
    model: &ModelParams,
    g: &HeteroGraph,
    features: &Features,
    test: &LabeledEdgeSet,
    opts: EvalOptions<'_>,
) -> Result<Evaluation, TrainError> {
    Evaluator::new(g, test, model.dims().sim_weighting).evaluate(model, features, test, opts)
}

/// Everything produced by [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: TrainHistory,
    /// Train positives (negatives are resampled each epoch).
    pub train_set: LabeledEdgeSet,
    /// Test positives plus the fixed test negatives.
    pub test_set: LabeledEdgeSet,
    pub evaluation: Evaluation,
}

/// Resolves `C` from the config or the graph and checks every label fits.
pub fn resolve_class_count(g: &HeteroGraph, cfg: &TrainConfig) -> Result<usize, TrainError> {
    let max_label = g.max_label() as usize;
    let c = cfg.class_count.unwrap_or(max_label).max(1);
    if max_label > c {
        return Err(TrainError::Config(format!(
            "class_count: graph has DDI label {max_label} but class_count is {c}"
        )));
    }
    Ok(c)
}

pub fn load_grouping(cfg: &TrainConfig, class_count: usize) -> Result<Option<ClassGrouping>, TrainError> {
    let Some(path) = &cfg.class_grouping_path else {
        return Ok(None);
    };
    let file = std::fs::File::open(path)?;
    let grouping = ClassGrouping::parse(std::io::BufReader::new(file))?;
    grouping.check_total(class_count)?;
    Ok(Some(grouping))
}

pub fn train(g: &HeteroGraph, features: &Features, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_with_observer(g, features, cfg, |_, _| {})
}

/// [`train`] that reports each epoch record (and evaluation, if any) as it
/// completes.
pub fn train_with_observer(
    g: &HeteroGraph,
    features: &Features,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord, Option<&EvalRecord>),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let class_count = resolve_class_count(g, cfg)?;
    let grouping = load_grouping(cfg, class_count)?;
    let (train_pos, test_pos) = split_edges(g, cfg.test_fraction, derive_seed(cfg.seed, STREAM_SPLIT, 0))?;
    if test_pos.is_empty() {
        return Err(TrainError::EmptyTest);
    }
    let test_set = sample_negatives(
        g,
        &test_pos,
        cfg.test_negative_regime,
        derive_seed(cfg.seed, STREAM_TEST_NEGATIVES, 0),
    )?;
    let test_keys = test_set.keys();

    let evaluator = Evaluator::new(g, &test_set, cfg.sim_weighting);
    let dims = cfg.model_dims(features, class_count);
    let mut params = ModelParams::init(cfg.encoder_kind, dims, derive_seed(cfg.seed, STREAM_INIT, 0));
    // Checks feature shapes before the first epoch.
    params.feature_leaves(&mut Tape::new(), evaluator.graph(), features)?;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut history = TrainHistory::default();
    let opts = EvalOptions {
        exclude_class0: cfg.exclude_class0,
        grouping: grouping.as_ref(),
    };

    for epoch in 1..=cfg.epochs {
        let batch = sample_negatives_excluding(
            g,
            &train_pos,
            cfg.train_regime(),
            derive_seed(cfg.seed, STREAM_TRAIN_NEGATIVES, epoch as u64),
            &test_keys,
        )?;
        let non_finite = |e: TensorError| match e {
            TensorError::NonFinite { .. } => TrainError::NonFinite {
                epoch,
                detail: e.to_string(),
            },
            other => TrainError::Model(ModelError::Tensor(other)),
        };
        let (loss, train_accuracy, grads) = {
            let mut tape = Tape::new();
            let vars = params.bind(&mut tape, true);
            let h = params.feature_leaves(&mut tape, evaluator.graph(), features)?;
            let enc = encode(&mut tape, evaluator.context(), h, &params, &vars).map_err(|e| match e {
                ModelError::Tensor(t) => non_finite(t),
                other => TrainError::Model(other),
            })?;
            let us: Arc<[usize]> = batch.pairs().iter().map(|p| p.src).collect();
            let vs: Arc<[usize]> = batch.pairs().iter().map(|p| p.dst).collect();
            let labels: Arc<[usize]> = batch.pairs().iter().map(|p| p.label as usize).collect();
            let logits = decode_pairs(&mut tape, enc.h[NodeType::Drug.index()], us, vs, &params, &vars)
                .map_err(non_finite)?;
            let correct = {
                let l = tape.value(logits);
                (0..l.rows()).filter(|&i| argmax(l.row(i)) == labels[i]).count()
            };
            let loss_var = tape.cross_entropy(logits, labels).map_err(non_finite)?;
            let loss = tape.value(loss_var).item().expect("scalar loss");
            if !loss.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    detail: format!("loss is {loss}"),
                });
            }
            let mut grads = tape.backward(loss_var).map_err(non_finite)?;
            let grads: Vec<_> = vars.iter().map(|&v| grads.take(v)).collect();
            (loss, correct as f64 / batch.len().max(1) as f64, grads)
        };
        adam.step(params.tensors_mut(), &grads);
        if let Some((i, _)) = params.tensors().iter().enumerate().find(|(_, t)| !t.is_finite()) {
            return Err(TrainError::NonFinite {
                epoch,
                detail: format!("parameter `{}` diverged", params.layout().name(i)),
            });
        }
        let record = EpochRecord {
            epoch,
            loss,
            train_accuracy,
        };
        let eval = if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let ev = evaluator
                .evaluate(&params, features, &test_set, opts)
                .map_err(|e| at_epoch(e, epoch))?;
            let w = ev.report.weighted;
            Some(EvalRecord {
                epoch,
                f1: w.f1,
                precision: w.precision,
                recall: w.recall,
                accuracy: w.accuracy,
            })
        } else {
            None
        };
        observer(&record, eval.as_ref());
        history.epochs.push(record);
        history.evals.extend(eval);
    }

    let evaluation = evaluator
        .evaluate(&params, features, &test_set, opts)
        .map_err(|e| at_epoch(e, cfg.epochs))?;
    Ok(TrainOutcome {
        params,
        history,
        train_set: train_pos,
        test_set,
        evaluation,
    })
}

fn at_epoch(e: TrainError, epoch: usize) -> TrainError {
    match e {
        TrainError::Model(ModelError::Tensor(t @ TensorError::NonFinite { .. })) => TrainError::NonFinite {
            epoch,
            detail: t.to_string(),
        },
        other => other,
    }
}

/// Test set for a given negative regime: the positives of `test` plus
/// class-0 pairs drawn with the same seed stream used by [`train`].
pub fn test_set_for_regime(
    g: &HeteroGraph,
    test: &LabeledEdgeSet,
    regime: NegativeRegime,
    seed: u64,
) -> Result<LabeledEdgeSet, TrainError> {
    Ok(sample_negatives(
        g,
        &test.positives(),
        regime,
        derive_seed(seed, STREAM_TEST_NEGATIVES, 0),
    )?)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegimeResult {
    pub regime: NegativeRegime,
    pub negatives: usize,
    pub evaluation: Evaluation,
}

/// Evaluates one trained model on the same held-out positives under
/// several test-negative regimes.
pub fn evaluate_regimes(
    model: &ModelParams,
    g: &HeteroGraph,
    features: &Features,
    test: &LabeledEdgeSet,
    regimes: &[NegativeRegime],
    seed: u64,
    opts: EvalOptions<'_>,
) -> Result<Vec<RegimeResult>, TrainError> {
    let evaluator = Evaluator::new(g, test, model.dims().sim_weighting);
    regimes
        .iter()
        .map(|&regime| {
            let set = test_set_for_regime(g, test, regime, seed)?;
            let evaluation = evaluator.evaluate(model, features, &set, opts)?;
            Ok(RegimeResult {
                regime,
                negatives: set.negative_count(),
                evaluation,
            })
        })
        .collect()
}
