use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use hetlink::features::{
    build_cosine_similarity_edges, build_similarity_edges, read_fingerprints, FeatureError, Features,
};
use hetlink::graph::{load_graph, write_edges, EdgeRecord, GraphError, HeteroGraph, NodeType, Relation};
use hetlink::metrics::{read_confusion, weighted_metrics, write_confusion, ClassGrouping, MetricsError};
use hetlink::nn::{predict_edge, read_checkpoint, write_checkpoint, CheckpointError, ModelError, ModelParams};
use hetlink::report::{confusion_svg, summary_text};
use hetlink::split::{read_split, write_split, LabeledEdgeSet, NegativeRegime, SplitError};
use hetlink::tensor::TensorError;
use hetlink::train::{
    evaluate_regimes, generate_planted, load_grouping, message_graph, resolve_class_count, train_with_observer,
    EvalOptions, Evaluation, PlantedSpec, RegimeResult, TrainConfig, TrainError, TrainOutcome,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::run::RunDir;
use crate::{
    Common, DataArgs, EvalArgs, ExperimentArgs, Failure, PredictArgs, ReportArgs, SimArgs, StatsArgs, SynthArgs,
    TrainArgs, TrainFlags,
};

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => Failure::config(e.to_string()),
            TrainError::NonFinite { .. } => Failure::numeric(e.to_string()),
            TrainError::Split(s) => s.into(),
            TrainError::Model(m) => m.into(),
            TrainError::Features(f) => f.into(),
            other => Failure::data(other.to_string()),
        }
    }
}

impl From<SplitError> for Failure {
    fn from(e: SplitError) -> Self {
        match e {
            SplitError::TestFraction(_) | SplitError::NegativeRatio(_) => Failure::config(e.to_string()),
            other => Failure::data(other.to_string()),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Tensor(TensorError::NonFinite { .. }) => Failure::numeric(e.to_string()),
            ModelError::SelfPair(_) => Failure::config(e.to_string()),
            other => Failure::data(other.to_string()),
        }
    }
}

impl From<FeatureError> for Failure {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::Threshold(_) => Failure::config(e.to_string()),
            other => Failure::data(other.to_string()),
        }
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        Failure::data(e.to_string())
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        Failure::data(e.to_string())
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        Failure::data(e.to_string())
    }
}

fn need_out(common: &Common) -> Result<&Path, Failure> {
    common.out.as_deref().ok_or_else(|| Failure::config("--out is required"))
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("serializable")
}

fn write_json<T: Serialize>(dir: &mut RunDir, name: &str, value: &T) -> Result<PathBuf, Failure> {
    dir.write(name, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

struct Dataset {
    graph: HeteroGraph,
    features: Features,
    files: Vec<PathBuf>,
}

fn load_dataset(args: &DataArgs) -> Result<Dataset, Failure> {
    let nodes = args.data.join("nodes.tsv");
    let mut edge_files = vec![args.data.join("edges.tsv")];
    edge_files.extend(args.extra_edges.iter().cloned());
    let features_path = args.data.join("features.tsv");
    for p in std::iter::once(&nodes).chain(&edge_files).chain([&features_path]) {
        if !p.is_file() {
            return Err(Failure::data(format!("missing input file {}", p.display())));
        }
    }
    let graph = load_graph(&nodes, &edge_files)?;
    let features = Features::load(&features_path, &graph)?;
    let mut files = vec![nodes];
    files.extend(edge_files);
    files.push(features_path);
    Ok(Dataset { graph, features, files })
}

fn load_model(path: &Path) -> Result<ModelParams, Failure> {
    Ok(read_checkpoint(open(path)?)?)
}

fn test_positives(path: &Path, g: &HeteroGraph) -> Result<LabeledEdgeSet, Failure> {
    let (_, test) = read_split(open(path)?, g.nodes(NodeType::Drug))?;
    Ok(test.positives())
}

fn load_grouping_file(path: Option<&Path>, class_count: usize) -> Result<Option<ClassGrouping>, Failure> {
    let Some(path) = path else {
        return Ok(None);
    };
    let grouping = ClassGrouping::parse(open(path)?)?;
    grouping.check_total(class_count)?;
    Ok(Some(grouping))
}

fn write_evaluation(dir: &mut RunDir, prefix: &str, ev: &Evaluation) -> Result<(), Failure> {
    dir.write(&format!("{prefix}confusion.tsv"), |w| write_confusion(w, &ev.confusion))?;
    if let Some(g) = &ev.grouped {
        dir.write(&format!("{prefix}grouped_confusion.tsv"), |w| write_confusion(w, &g.confusion))?;
    }
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<(), Failure> {
    let out = need_out(&args.common)?;
    let mut spec: PlantedSpec = read_config(args.common.config.as_deref())?;
    if let Some(s) = args.common.seed {
        spec.seed = s;
    }
    spec.n_drugs = args.n_drugs.unwrap_or(spec.n_drugs);
    spec.n_proteins = args.n_proteins.unwrap_or(spec.n_proteins);
    spec.class_count = args.classes.unwrap_or(spec.class_count);
    spec.noise = args.noise.unwrap_or(spec.noise);
    spec.edge_density = args.edge_density.unwrap_or(spec.edge_density);
    spec.sibling_noise = args.sibling_noise.unwrap_or(spec.sibling_noise);
    let data = generate_planted(&spec)?;
    let mut dir = RunDir::open(out)?;
    if let Some(c) = &args.common.config {
        dir.input(c);
    }
    for path in data.write_to(out)? {
        dir.output(&path);
    }
    write_json(&mut dir, "spec.json", &spec)?;
    log::info!(
        "planted dataset: {} drugs, {} proteins, {} DDI edges over {} classes",
        spec.n_drugs,
        spec.n_proteins,
        data.ddi_count(),
        spec.class_count
    );
    dir.finish("synth", Some(spec.seed), to_json(&spec))
}

pub fn sim(args: SimArgs) -> Result<(), Failure> {
    let out = need_out(&args.common)?;
    let mut dir = RunDir::open(out)?;
    let records: Vec<EdgeRecord> = if let Some(data) = &args.cosine {
        let ds = load_dataset(&DataArgs {
            data: data.clone(),
            extra_edges: Vec::new(),
        })?;
        for f in &ds.files {
            dir.input(f);
        }
        let edges =
            build_cosine_similarity_edges(ds.graph.nodes(NodeType::Drug), ds.features.get(NodeType::Drug), args.tau)?;
        edges.iter().map(EdgeRecord::from).collect()
    } else {
        let path = args.fingerprints.as_deref().expect("clap requires one source");
        dir.input(path);
        let fps = read_fingerprints(open(path)?)?;
        build_similarity_edges(&fps, args.tau)?.iter().map(EdgeRecord::from).collect()
    };
    dir.write("sim_edges.tsv", |w| write_edges(w, &records))?;
    println!("{} SIM edges with similarity > {}", records.len(), args.tau);
    let source = if args.cosine.is_some() { "cosine" } else { "tanimoto" };
    dir.finish("sim", None, serde_json::json!({ "tau": args.tau, "source": source }))
}

#[derive(Serialize)]
struct GraphStats {
    drugs: usize,
    proteins: usize,
    edges: BTreeMap<String, usize>,
    arcs: BTreeMap<String, usize>,
    ddi_unordered_pairs: usize,
    ddi_ordered_pairs: usize,
    drug_pairs_unordered: usize,
    drug_pairs_ordered: usize,
    class_counts: BTreeMap<u16, usize>,
}

pub fn stats(args: StatsArgs) -> Result<(), Failure> {
    let ds = load_dataset(&args.data)?;
    let g = &ds.graph;
    let mut class_counts = BTreeMap::new();
    for (_, _, c) in g.ddi_pairs() {
        *class_counts.entry(c).or_insert(0) += 1;
    }
    let ddi = g.edge_count(Relation::Ddi);
    let stats = GraphStats {
        drugs: g.node_count(NodeType::Drug),
        proteins: g.node_count(NodeType::Protein),
        edges: Relation::ALL.iter().map(|&r| (r.to_string(), g.edge_count(r))).collect(),
        arcs: Relation::ALL.iter().map(|&r| (r.to_string(), g.arc_count(r))).collect(),
        ddi_unordered_pairs: ddi,
        ddi_ordered_pairs: 2 * ddi,
        drug_pairs_unordered: g.unordered_drug_pairs(),
        drug_pairs_ordered: g.ordered_drug_pairs(),
        class_counts,
    };
    println!("drugs\t{}", stats.drugs);
    println!("proteins\t{}", stats.proteins);
    for (r, n) in &stats.edges {
        println!("{r} edges\t{n}\t(arcs {})", stats.arcs[r]);
    }
    println!(
        "drug pairs\t{} unordered\t{} ordered",
        stats.drug_pairs_unordered, stats.drug_pairs_ordered
    );
    for (c, n) in &stats.class_counts {
        println!("class {c}\t{n}");
    }
    if let Some(out) = &args.common.out {
        let mut dir = RunDir::open(out)?;
        for f in &ds.files {
            dir.input(f);
        }
        write_json(&mut dir, "stats.json", &stats)?;
        dir.finish("stats", None, serde_json::Value::Null)?;
    }
    Ok(())
}

fn train_config(common: &Common, flags: &TrainFlags) -> Result<TrainConfig, Failure> {
    let mut cfg: TrainConfig = read_config(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(k) = flags.encoder {
        cfg.encoder_kind = k;
    }
    cfg.epochs = flags.epochs.unwrap_or(cfg.epochs);
    cfg.learning_rate = flags.lr.unwrap_or(cfg.learning_rate);
    cfg.hidden_dim = flags.hidden.unwrap_or(cfg.hidden_dim);
    cfg.heads = flags.heads.unwrap_or(cfg.heads);
    cfg.test_fraction = flags.test_fraction.unwrap_or(cfg.test_fraction);
    cfg.train_negative_ratio = flags.train_neg_ratio.unwrap_or(cfg.train_negative_ratio);
    cfg.test_negative_regime = flags.neg_regime.unwrap_or(cfg.test_negative_regime);
    cfg.eval_every = flags.eval_every.unwrap_or(cfg.eval_every);
    if flags.class_count.is_some() {
        cfg.class_count = flags.class_count;
    }
    if flags.grouping.is_some() {
        cfg.class_grouping_path = flags.grouping.clone();
    }
    cfg.exclude_class0 |= flags.exclude_class0;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct TrainReport<'a> {
    encoder: String,
    epochs: usize,
    final_loss: Option<f64>,
    final_train_accuracy: Option<f64>,
    test_regime: NegativeRegime,
    test_positives: usize,
    test_negatives: usize,
    evaluation: &'a Evaluation,
}

/// Trains on `ds` and writes config, history, checkpoint, split, confusion
/// matrix and report into `dir`.
fn run_training(dir: &mut RunDir, common: &Common, ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome, Failure> {
    for f in &ds.files {
        dir.input(f);
    }
    if let Some(c) = &common.config {
        dir.input(c);
    }
    if let Some(g) = &cfg.class_grouping_path {
        dir.input(g);
    }
    write_json(dir, "config.json", cfg)?;
    let epochs = cfg.epochs;
    let out = train_with_observer(&ds.graph, &ds.features, cfg, |r, e| {
        if let Some(e) = e {
            log::info!(
                "epoch {}/{epochs} loss {:.5} train acc {:.4} test f1 {:.4}",
                r.epoch,
                r.loss,
                r.train_accuracy,
                e.f1
            );
        }
    })?;
    dir.write("history.tsv", |w| out.history.write_tsv(w))?;
    dir.write("checkpoint.bin", |w| {
        write_checkpoint(w, &out.params).map_err(|e| std::io::Error::other(e.to_string()))
    })?;
    let drugs = ds.graph.nodes(NodeType::Drug);
    dir.write("split.tsv", |w| write_split(w, drugs, &[&out.train_set, &out.test_set]))?;
    write_evaluation(dir, "", &out.evaluation)?;
    let report = TrainReport {
        encoder: cfg.encoder_kind.to_string(),
        epochs,
        final_loss: out.history.final_loss(),
        final_train_accuracy: out.history.epochs.last().map(|r| r.train_accuracy),
        test_regime: cfg.test_negative_regime,
        test_positives: out.test_set.len() - out.test_set.negative_count(),
        test_negatives: out.test_set.negative_count(),
        evaluation: &out.evaluation,
    };
    write_json(dir, "report.json", &report)?;
    let w = out.evaluation.report.weighted;
    println!(
        "test f1 {:.4} precision {:.4} recall {:.4} accuracy {:.4}",
        w.f1, w.precision, w.recall, w.accuracy
    );
    Ok(out)
}

pub fn train(args: TrainArgs) -> Result<(), Failure> {
    let out = need_out(&args.common)?;
    let cfg = train_config(&args.common, &args.flags)?;
    let ds = load_dataset(&args.data)?;
    let mut dir = RunDir::open(out)?;
    run_training(&mut dir, &args.common, &ds, &cfg)?;
    dir.finish("train", Some(cfg.seed), to_json(&cfg))
}

#[derive(Serialize)]
struct EvalReport<'a> {
    regime: NegativeRegime,
    positives: usize,
    negatives: usize,
    evaluation: &'a Evaluation,
}

fn regime_report(r: &RegimeResult, positives: usize) -> EvalReport<'_> {
    EvalReport {
        regime: r.regime,
        positives,
        negatives: r.negatives,
        evaluation: &r.evaluation,
    }
}

/// Seed of the training run that wrote `checkpoint`, if its `config.json`
/// sits alongside.
fn sibling_seed(checkpoint: &Path) -> Option<u64> {
    let path = checkpoint.parent()?.join("config.json");
    let cfg: TrainConfig = serde_json::from_str(&fs::read_to_string(path).ok()?).ok()?;
    Some(cfg.seed)
}

pub fn eval(args: EvalArgs) -> Result<(), Failure> {
    let out = need_out(&args.common)?;
    let ds = load_dataset(&args.data)?;
    let model = load_model(&args.checkpoint)?;
    let test = test_positives(&args.split, &ds.graph)?;
    let grouping = load_grouping_file(args.grouping.as_deref(), model.dims().class_count)?;
    let seed = args.common.seed.or_else(|| sibling_seed(&args.checkpoint)).unwrap_or(0);
    let opts = EvalOptions {
        exclude_class0: args.exclude_class0,
        grouping: grouping.as_ref(),
    };
    let results = evaluate_regimes(&model, &ds.graph, &ds.features, &test, &[args.neg_regime], seed, opts)?;
    let r = &results[0];
    let mut dir = RunDir::open(out)?;
    for f in ds.files.iter().chain([&args.checkpoint, &args.split]) {
        dir.input(f);
    }
    if let Some(g) = &args.grouping {
        dir.input(g);
    }
    write_evaluation(&mut dir, "", &r.evaluation)?;
    write_json(&mut dir, "report.json", &regime_report(r, test.len()))?;
    let w = r.evaluation.report.weighted;
    println!(
        "{}: {} positives, {} negatives, f1 {:.4} precision {:.4} recall {:.4} accuracy {:.4}",
        r.regime,
        test.len(),
        r.negatives,
        w.f1,
        w.precision,
        w.recall,
        w.accuracy
    );
    let config = serde_json::json!({
        "neg_regime": args.neg_regime,
        "exclude_class0": args.exclude_class0,
    });
    dir.finish("eval", Some(seed), config)
}

fn render(dir: &mut RunDir, src: &Path, stem: &str, title: &str, exclude: bool) -> Result<(), Failure> {
    let cm = read_confusion(open(src)?)?;
    dir.input(src);
    let report = weighted_metrics(&cm, exclude)?;
    let svg = confusion_svg(&cm, title);
    dir.write(&format!("{stem}.svg"), |w| w.write_all(svg.as_bytes()))?;
    let summary = summary_text(&report);
    let name = if stem == "confusion" { "summary.txt".to_string() } else { format!("{stem}_summary.txt") };
    dir.write(&name, |w| w.write_all(summary.as_bytes()))?;
    Ok(())
}

pub fn report(args: ReportArgs) -> Result<(), Failure> {
    let src = args.run.join("confusion.tsv");
    if !src.is_file() {
        return Err(Failure::data(format!("{} has no confusion.tsv", args.run.display())));
    }
    let recorded = fs::read_to_string(args.run.join("report.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v["evaluation"]["report"]["class0_excluded"].as_bool())
        .unwrap_or(false);
    let exclude = args.exclude_class0 || recorded;
    let out = args.common.out.clone().unwrap_or_else(|| args.run.clone());
    let mut dir = RunDir::open(&out)?;
    let name = args
        .run
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "run".into());
    render(&mut dir, &src, "confusion", &format!("{name}: confusion matrix"), exclude)?;
    let grouped = args.run.join("grouped_confusion.tsv");
    if grouped.is_file() {
        render(&mut dir, &grouped, "grouped_confusion", &format!("{name}: grouped confusion matrix"), exclude)?;
    }
    print!("{}", fs::read_to_string(dir.path("summary.txt")).unwrap_or_default());
    dir.amend("report")
}

pub fn predict(args: PredictArgs) -> Result<(), Failure> {
    let ds = load_dataset(&args.data)?;
    let model = load_model(&args.checkpoint)?;
    let graph = match &args.split {
        Some(split) => message_graph(&ds.graph, &test_positives(split, &ds.graph)?),
        None => ds.graph.clone(),
    };
    let probs = predict_edge(&model, &graph, &ds.features, &args.drug_a, &args.drug_b)?;
    let lines: Vec<String> = probs.iter().enumerate().map(|(c, p)| format!("{c}\t{p}")).collect();
    for l in &lines {
        println!("{l}");
    }
    if let Some(out) = &args.common.out {
        let mut dir = RunDir::open(out)?;
        for f in ds.files.iter().chain([&args.checkpoint]).chain(&args.split) {
            dir.input(f);
        }
        dir.write("prediction.tsv", |w| {
            lines.iter().try_for_each(|l| writeln!(w, "{l}"))
        })?;
        let config = serde_json::json!({ "drug_a": args.drug_a, "drug_b": args.drug_b });
        dir.finish("predict", None, config)?;
    }
    Ok(())
}

fn regime_dir(r: NegativeRegime) -> String {
    format!("regime-{}", r.to_string().replace(':', "-"))
}

pub fn experiment(args: ExperimentArgs) -> Result<(), Failure> {
    let out = need_out(&args.common)?;
    if args.regimes.is_empty() {
        return Err(Failure::config("--regimes: at least one regime is required"));
    }
    let cfg = train_config(&args.common, &args.flags)?;
    let ds = load_dataset(&args.data)?;
    let mut dir = RunDir::open(out)?;
    let trained = run_training(&mut dir, &args.common, &ds, &cfg)?;
    let class_count = resolve_class_count(&ds.graph, &cfg)?;
    let grouping = load_grouping(&cfg, class_count)?;
    let opts = EvalOptions {
        exclude_class0: cfg.exclude_class0,
        grouping: grouping.as_ref(),
    };
    let positives = trained.test_set.positives();
    let results = evaluate_regimes(
        &trained.params,
        &ds.graph,
        &ds.features,
        &positives,
        &args.regimes,
        cfg.seed,
        opts,
    )?;
    let mut table = String::from("regime\tpositives\tnegatives\tf1\tprecision\trecall\taccuracy\tgrouped_f1\n");
    for r in &results {
        let sub = regime_dir(r.regime);
        write_evaluation(&mut dir, &format!("{sub}/"), &r.evaluation)?;
        write_json(&mut dir, &format!("{sub}/report.json"), &regime_report(r, positives.len()))?;
        let w = r.evaluation.report.weighted;
        let grouped = r
            .evaluation
            .grouped
            .as_ref()
            .map_or(String::new(), |g| g.report.weighted.f1.to_string());
        table.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{grouped}\n",
            r.regime,
            positives.len(),
            r.negatives,
            w.f1,
            w.precision,
            w.recall,
            w.accuracy
        ));
    }
    dir.write("regimes.tsv", |w| w.write_all(table.as_bytes()))?;
    print!("{table}");
    let config = serde_json::json!({ "train": cfg, "regimes": args.regimes });
    dir.finish("experiment", Some(cfg.seed), config)
}
