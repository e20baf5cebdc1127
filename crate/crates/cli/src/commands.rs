//! The subcommands, as library functions returning structured results.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use udrn::augment::AugmentConfig;
use udrn::checkpoint::Checkpoint;
use udrn::eval::{knn_accuracy, make_synthetic, smd, feature_recovery};
use udrn::trainer::{build_graph, infer_embeddings, train_observed, EpochRecord, Embeddings};
use udrn::{Error, Result, TrainReport, TrainedModel, UdrnModel};

use crate::artifacts::{self, write_atomic};
use crate::config::{ColorBy, EvalConfig, RunConfig, SmdSpace};
use crate::data::{self, Dataset};
use crate::plot::{render_svg, ScatterSpec};

/// A dataset plus the informative column set when it is synthetic.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub dataset: Dataset,
    pub informative: Option<Vec<usize>>,
}

pub fn load_data(cfg: &RunConfig) -> Result<LoadedData> {
    if let Some(spec) = &cfg.synthetic {
        let s = make_synthetic(spec)?;
        let clusters = spec.clusters;
        return Ok(LoadedData {
            dataset: Dataset {
                feature_names: (0..s.x.cols()).map(|j| format!("f{j}")).collect(),
                x: s.x,
                labels: Some(s.labels),
                class_names: (0..clusters).map(|c| c.to_string()).collect(),
            },
            informative: Some(s.informative),
        });
    }
    let path = cfg
        .io
        .input_path
        .as_deref()
        .ok_or_else(|| Error::config("no data source: set io.input_path or a [synthetic] section"))?;
    Ok(LoadedData {
        dataset: data::load(path, cfg.io.label_column.as_deref(), cfg.io.delimiter)?,
        informative: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub active_features: usize,
    pub selected_features: Vec<usize>,
    /// k-NN accuracy on the 2-D embedding; absent without labels.
    pub knn_accuracy: Option<f64>,
    pub smd_mean_rank_diff: Option<f64>,
    pub smd_score: Option<f64>,
    pub feature_recovery: Option<f64>,
    pub warnings: Vec<String>,
}

pub fn compute_metrics(model: &UdrnModel, data: &LoadedData, eval: &EvalConfig) -> Result<(Metrics, Embeddings)> {
    let x = &data.dataset.x;
    let emb = infer_embeddings(model, x)?;
    let mut warnings = Vec::new();
    let knn = match &data.dataset.labels {
        Some(labels) => {
            let r = knn_accuracy(&emb.zl, labels, eval.knn_k, eval.split_seed)?;
            warnings.extend(r.warnings);
            Some(r.accuracy)
        }
        None => None,
    };
    let ranked = match eval.smd_space {
        SmdSpace::Selected => &emb.selected,
        SmdSpace::Latent => &emb.zh,
    };
    let smd_result = if ranked.cols() == 0 {
        warnings.push("no features selected; SMD undefined".into());
        None
    } else if eval.smd_k >= x.rows() {
        warnings.push(format!("eval.smd_k={} needs more than {} rows; SMD skipped", eval.smd_k, x.rows()));
        None
    } else {
        Some(smd(x, ranked, eval.smd_k)?)
    };
    let metrics = Metrics {
        active_features: emb.selection.indices.len(),
        selected_features: emb.selection.indices.clone(),
        knn_accuracy: knn,
        smd_mean_rank_diff: smd_result.map(|s| s.mean_rank_diff),
        smd_score: smd_result.map(|s| s.score),
        feature_recovery: data.informative.as_ref().map(|inf| feature_recovery(&emb.selection.indices, inf)),
        warnings,
    };
    Ok((metrics, emb))
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub trained: TrainedModel,
    pub report: TrainReport,
    pub metrics: Metrics,
    pub embeddings: Embeddings,
}

/// Builds the graph, trains, and evaluates, without touching the disk.
pub fn run_training(cfg: &RunConfig, data: &LoadedData, progress: bool) -> Result<TrainOutcome> {
    cfg.validate()?;
    let graph = build_graph(data.dataset.x.clone(), data.dataset.labels.clone(), &cfg.train)?;
    let every = (cfg.train.epochs / 20).max(1);
    let mut observer = |r: &EpochRecord, _: &UdrnModel| {
        if progress && (r.epoch % every == 0 || r.epoch + 1 == cfg.train.epochs) {
            eprintln!(
                "epoch {:>4}  l_tp {:.6}  l_r {:.4}  lambda {:.3e}  active {}",
                r.epoch, r.l_tp, r.l_r, r.lambda, r.active_features
            );
        }
        Ok(())
    };
    let (trained, mut report) = train_observed(&graph, &cfg.train, &mut observer)?;
    if let Some(inf) = &data.informative {
        report.record_recovery(inf);
    }
    let (metrics, embeddings) = compute_metrics(&trained.model, data, &cfg.eval)?;
    Ok(TrainOutcome {
        trained,
        report,
        metrics,
        embeddings,
    })
}

fn json_pretty<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn render_plot(z: &udrn::Matrix, data: &Dataset, cfg: &RunConfig) -> Result<String> {
    let labels = match cfg.plot.color_by {
        ColorBy::Label => data.labels.as_deref(),
        ColorBy::None => None,
    };
    render_svg(&ScatterSpec {
        points: z,
        labels,
        class_names: &data.class_names,
        point_size: cfg.plot.point_size,
    })
}

/// Trains and writes every artifact into `out`.
pub fn cmd_train(cfg: &RunConfig, out: &Path, progress: bool) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let outcome = run_training(cfg, &data, progress)?;
    let ds = &data.dataset;
    let labels = ds.labels.as_deref();
    write_atomic(&out.join(artifacts::CONFIG_COPY), cfg.to_toml()?.as_bytes())?;
    write_atomic(
        &out.join(artifacts::SELECTED_FEATURES),
        artifacts::selected_features_text(&outcome.report.selection.indices).as_bytes(),
    )?;
    write_atomic(
        &out.join(artifacts::IMPORTANCE),
        artifacts::importance_csv(&outcome.trained.model.gate, &ds.feature_names).as_bytes(),
    )?;
    write_atomic(
        &out.join(artifacts::EMBEDDING),
        artifacts::embedding_csv(&outcome.embeddings.zl, labels).as_bytes(),
    )?;
    write_atomic(&out.join(artifacts::REPORT), outcome.report.to_jsonl().as_bytes())?;
    write_atomic(
        &out.join(artifacts::CHECKPOINT),
        Checkpoint::new(&outcome.trained).to_json()?.as_bytes(),
    )?;
    write_atomic(&out.join(artifacts::METRICS), &json_pretty(&outcome.metrics)?)?;
    let timings = serde_json::json!({
        "epoch_seconds": outcome.report.wall_times,
        "total_seconds": outcome.report.wall_times.iter().sum::<f64>(),
    });
    write_atomic(&out.join(artifacts::TIMINGS), &json_pretty(&timings)?)?;
    if outcome.embeddings.zl.cols() == 2 {
        write_atomic(&out.join(artifacts::PLOT), render_plot(&outcome.embeddings.zl, ds, cfg)?.as_bytes())?;
    }
    Ok(outcome)
}

/// Re-evaluates a checkpoint on the configured data.
pub fn cmd_evaluate(checkpoint: &Path, cfg: &RunConfig, out: Option<&Path>) -> Result<Metrics> {
    cfg.validate()?;
    let ck = Checkpoint::load(checkpoint)?;
    let data = load_data(cfg)?;
    if data.dataset.x.cols() != ck.model.input_dim() {
        return Err(Error::dim(format!(
            "checkpoint expects {} features, data has {}",
            ck.model.input_dim(),
            data.dataset.x.cols()
        )));
    }
    let (metrics, _) = compute_metrics(&ck.model, &data, &cfg.eval)?;
    if let Some(dir) = out {
        write_atomic(&dir.join(artifacts::METRICS), &json_pretty(&metrics)?)?;
    }
    Ok(metrics)
}

/// Renders a 2-D embedding CSV (as written by `train`) to an SVG file.
pub fn cmd_plot(embedding_csv: &Path, out: &Path, cfg: &RunConfig) -> Result<()> {
    let text = std::fs::read_to_string(embedding_csv)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", embedding_csv.display())))?;
    let has_label = text.lines().next().is_some_and(|h| h.split(',').any(|c| c.trim() == "label"));
    if text.trim().is_empty() {
        return Err(Error::data("empty embedding file"));
    }
    let ds = match data::parse_delimited(&text, has_label.then_some("label"), ',') {
        Err(Error::Data(m)) if m.contains("no data rows") => {
            return Err(Error::data("empty embedding: nothing to plot"))
        },
        other => other?,
    };
    let svg = render_plot(&ds.x, &ds, cfg)?;
    write_atomic(out, svg.as_bytes())
}

/// Writes the configured synthetic dataset as `data.csv` plus the
/// informative column list.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let spec = cfg.synthetic.clone().unwrap_or_default();
    let s = make_synthetic(&spec)?;
    let names: Vec<String> = (0..s.x.cols()).map(|j| format!("f{j}")).collect();
    write_atomic(&out.join("data.csv"), data::to_delimited(&s.x, &names, Some(&s.labels)).as_bytes())?;
    write_atomic(&out.join("informative.txt"), artifacts::selected_features_text(&s.informative).as_bytes())?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub kind: String,
    pub p: f64,
    /// The augmenter actually run (`none` for p = 0).
    pub effective_kind: String,
    pub config_hash: String,
    pub knn_accuracy: Option<f64>,
    pub smd_score: Option<f64>,
    pub active_features: usize,
    pub feature_recovery: Option<f64>,
}

pub fn sweep_cell(base: &AugmentConfig, kind: &str, p: f64) -> AugmentConfig {
    if p == 0.0 {
        return AugmentConfig::none();
    }
    let mut a = AugmentConfig {
        kind: kind.to_string(),
        ..base.clone()
    };
    match kind {
        "uniform" => a.p_u = p,
        "bernoulli" => a.p_b = p,
        "normal" => a.p_n = p,
        _ => {}
    }
    a
}

/// One training run per (kind, p) cell; identical cells are trained once.
/// Records are appended to `sweep.jsonl` in `out` as they complete.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path, progress: bool) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    if cfg.sweep.kinds.is_empty() || cfg.sweep.values.is_empty() {
        return Err(Error::config("sweep.kinds and sweep.values must be non-empty"));
    }
    let data = load_data(cfg)?;
    let mut cache: BTreeMap<String, Metrics> = BTreeMap::new();
    let mut records = Vec::new();
    let mut jsonl = String::new();
    for kind in &cfg.sweep.kinds {
        for &p in &cfg.sweep.values {
            let mut cell = cfg.clone();
            cell.train.augment = sweep_cell(&cfg.train.augment, kind, p);
            cell.train.ablation.no_augment = false;
            let hash = cell.train.hash();
            if !cache.contains_key(&hash) {
                if progress {
                    eprintln!("sweep cell {kind} p={p}");
                }
                let outcome = run_training(&cell, &data, false)?;
                cache.insert(hash.clone(), outcome.metrics);
            }
            let m = &cache[&hash];
            let rec = SweepRecord {
                kind: kind.clone(),
                p,
                effective_kind: cell.train.augment.kind.clone(),
                config_hash: hash,
                knn_accuracy: m.knn_accuracy,
                smd_score: m.smd_score,
                active_features: m.active_features,
                feature_recovery: m.feature_recovery,
            };
            jsonl.push_str(&serde_json::to_string(&rec)?);
            jsonl.push('\n');
            write_atomic(&out.join(artifacts::SWEEP), jsonl.as_bytes())?;
            records.push(rec);
        }
    }
    Ok(records)
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Dimension(_) => 3,
        Error::Divergence(_) => 4,
        _ => 1,
    }
}
