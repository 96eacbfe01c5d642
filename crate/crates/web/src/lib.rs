//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export takes plain strings and numbers and returns a JSON string.
//! The same functions are callable from Rust with `String` errors.

use hetlink::features::{build_similarity_edges, read_fingerprints};
use hetlink::metrics::{read_confusion, weighted_metrics, ConfusionMatrix};
use hetlink::nn::EncoderKind;
use hetlink::report::confusion_svg;
use hetlink::train::{generate_planted, train, PlantedSpec, TrainConfig};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Edge<'a> {
    src: &'a str,
    dst: &'a str,
    weight: f64,
}

/// Thresholded Tanimoto edges for `id<TAB>bitstring` lines.
pub fn similarity(fingerprints: &str, tau: f64) -> Result<String, String> {
    let fps = read_fingerprints(fingerprints.as_bytes()).map_err(|e| e.to_string())?;
    let edges = build_similarity_edges(&fps, tau).map_err(|e| e.to_string())?;
    let out: Vec<Edge> = edges
        .iter()
        .map(|e| Edge {
            src: &e.src,
            dst: &e.dst,
            weight: e.weight,
        })
        .collect();
    Ok(json!({ "nodes": fps.len(), "edges": out }).to_string())
}

fn metrics_json(cm: &ConfusionMatrix, exclude_class0: bool, title: &str) -> Result<serde_json::Value, String> {
    let report = weighted_metrics(cm, exclude_class0).map_err(|e| e.to_string())?;
    Ok(json!({ "report": report, "svg": confusion_svg(cm, title) }))
}

/// Weighted metrics and a heatmap for a `confusion.tsv` table.
pub fn metrics(confusion_tsv: &str, exclude_class0: bool) -> Result<String, String> {
    let cm = read_confusion(confusion_tsv.as_bytes()).map_err(|e| e.to_string())?;
    Ok(metrics_json(&cm, exclude_class0, "confusion")?.to_string())
}

/// Generates a small planted dataset, trains on it and reports the loss
/// curve with test metrics.
pub fn planted(encoder: &str, n_drugs: usize, classes: usize, epochs: usize, seed: u64) -> Result<String, String> {
    let encoder_kind = match encoder {
        "hgcn" => EncoderKind::Hgcn,
        "hgat" => EncoderKind::Hgat,
        other => return Err(format!("unknown encoder `{other}`")),
    };
    let spec = PlantedSpec {
        n_drugs,
        n_proteins: (n_drugs / 2).max(2),
        class_count: classes,
        seed,
        ..PlantedSpec::default()
    };
    let data = generate_planted(&spec).map_err(|e| e.to_string())?;
    let g = data.graph().map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        encoder_kind,
        epochs,
        learning_rate: 0.01,
        seed,
        hidden_dim: 16,
        decoder_hidden: 32,
        class_count: Some(classes),
        eval_every: epochs.max(1),
        ..TrainConfig::default()
    };
    let out = train(&g, &data.features, &cfg).map_err(|e| e.to_string())?;
    let loss: Vec<f64> = out.history.epochs.iter().map(|r| r.loss).collect();
    let train_accuracy = out.history.epochs.last().map_or(0.0, |r| r.train_accuracy);
    let mut result = metrics_json(&out.evaluation.confusion, false, "planted test split")?;
    result["loss"] = json!(loss);
    result["train_accuracy"] = json!(train_accuracy);
    result["ddi_edges"] = json!(data.ddi_count());
    Ok(result.to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = similarity)]
pub fn similarity_js(fingerprints: &str, tau: f64) -> Result<String, JsError> {
    js(similarity(fingerprints, tau))
}

#[wasm_bindgen(js_name = metrics)]
pub fn metrics_js(confusion_tsv: &str, exclude_class0: bool) -> Result<String, JsError> {
    js(metrics(confusion_tsv, exclude_class0))
}

#[wasm_bindgen(js_name = planted)]
pub fn planted_js(encoder: &str, n_drugs: usize, classes: usize, epochs: usize, seed: u64) -> Result<String, JsError> {
    js(planted(encoder, n_drugs, classes, epochs, seed))
}
