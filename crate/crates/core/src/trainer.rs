//! The end-to-end training loop: sample, augment, forward, loss, one AdamW
//! step over gates, backbone and projector; the L1 weight is scheduled per
//! epoch.

use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{make_augmented_batch, AugmentConfig, AugmentedBatch};
use crate::error::{DivergenceSnapshot, Error, Result};
use crate::graph::AttributedGraph;
use crate::model::{Architecture, BoundModel, Selection, UdrnModel};
use crate::objective::{tape_exaggerate, tape_similarity, Exaggeration, Kernel, LambdaSchedule, LossConfig};
use crate::registry::Registry;
use crate::rng;
use crate::tensor::{AdamW, AdamWConfig, Matrix, NodeId, Tape};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    /// Feed verbatim copies instead of augmentations; edge classes are kept.
    pub no_augment: bool,
    /// Replace the structural loss with a reconstruction objective.
    pub substitute_loss: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub k: usize,
    pub seed: u64,
    pub supervised: bool,
    pub optimizer: AdamWConfig,
    pub architecture: Architecture,
    pub augment: AugmentConfig,
    pub loss: LossConfig,
    pub ablation: AblationFlags,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 600,
            batch_size: 128,
            k: 10,
            seed: 0,
            supervised: false,
            optimizer: AdamWConfig::default(),
            architecture: Architecture::default(),
            augment: AugmentConfig::default(),
            loss: LossConfig::default(),
            ablation: AblationFlags::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::config(format!("batch_size must be >= 2, got {}", self.batch_size)));
        }
        if self.k < 1 {
            return Err(Error::config("k must be >= 1"));
        }
        self.optimizer.validate()?;
        self.architecture.validate()?;
        self.effective_augment().validate()?;
        self.loss.validate()?;
        Ok(())
    }

    pub fn validate_for(&self, graph: &AttributedGraph) -> Result<()> {
        self.validate()?;
        if self.batch_size > graph.n() {
            return Err(Error::config(format!(
                "batch_size {} exceeds the {} available rows",
                self.batch_size,
                graph.n()
            )));
        }
        if let Some(t) = self.loss.target_features {
            if t > graph.dim() {
                return Err(Error::config(format!(
                    "loss.target_features ({t}) exceeds the feature count ({})",
                    graph.dim()
                )));
            }
        }
        Ok(())
    }

    pub fn effective_augment(&self) -> AugmentConfig {
        if self.ablation.no_augment {
            AugmentConfig::none()
        } else {
            self.augment.clone()
        }
    }

    pub fn structural_loss_name(&self) -> &'static str {
        if self.ablation.substitute_loss {
            "reconstruction"
        } else {
            "fuzzy-ce"
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// The per-batch structural objective.
pub trait StructuralLoss: Send + Sync {
    fn name(&self) -> &'static str;

    fn needs_decoder(&self) -> bool {
        false
    }

    /// Records the loss on `tape` given the batch input `x` and `zh`.
    fn build(
        &self,
        tape: &mut Tape,
        model: &UdrnModel,
        bound: &BoundModel,
        x: NodeId,
        zh: NodeId,
        batch: &AugmentedBatch,
    ) -> Result<NodeId>;
}

/// Exaggerated high-dimensional similarities as targets for low-dimensional
/// similarities under fuzzy-set cross entropy.
pub struct FuzzyStructure {
    high: Arc<dyn Kernel>,
    low: Arc<dyn Kernel>,
    exaggeration: Arc<dyn Exaggeration>,
    beta: f64,
    delta: f64,
    detach_target: bool,
}

impl FuzzyStructure {
    pub fn from_config(cfg: &LossConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            high: cfg.high()?,
            low: cfg.low()?,
            exaggeration: cfg.exaggeration()?,
            beta: cfg.beta,
            delta: cfg.log_clamp,
            detach_target: cfg.detach_target,
        })
    }
}

impl StructuralLoss for FuzzyStructure {
    fn name(&self) -> &'static str {
        "fuzzy-ce"
    }

    fn build(
        &self,
        tape: &mut Tape,
        model: &UdrnModel,
        bound: &BoundModel,
        _x: NodeId,
        zh: NodeId,
        batch: &AugmentedBatch,
    ) -> Result<NodeId> {
        let zl = model.fp_forward_tape(tape, bound, zh)?;
        let source = if self.detach_target { tape.detach(zh) } else { zh };
        let sh = tape_similarity(tape, source, self.high.as_ref());
        let target = tape_exaggerate(tape, sh, &batch.positive_mask(), self.beta, self.exaggeration.as_ref())?;
        let sl = tape_similarity(tape, zl, self.low.as_ref());
        tape.fuzzy_ce(target, sl, self.delta)
    }
}

/// Mean squared reconstruction of the (ungated) batch rows from `Zh`.
pub struct Reconstruction;

impl StructuralLoss for Reconstruction {
    fn name(&self) -> &'static str {
        "reconstruction"
    }

    fn needs_decoder(&self) -> bool {
        true
    }

    fn build(
        &self,
        tape: &mut Tape,
        model: &UdrnModel,
        bound: &BoundModel,
        x: NodeId,
        zh: NodeId,
        _batch: &AugmentedBatch,
    ) -> Result<NodeId> {
        let xhat = model.decode_tape(tape, bound, zh)?;
        tape.mse(xhat, x)
    }
}

pub type StructuralLossFactory = fn(&LossConfig) -> Result<Arc<dyn StructuralLoss>>;

pub fn structural_loss_registry() -> Registry<StructuralLossFactory> {
    let mut r: Registry<StructuralLossFactory> = Registry::new("structural loss");
    r.register("fuzzy-ce", |c| Ok(Arc::new(FuzzyStructure::from_config(c)?)))
        .register("reconstruction", |_| Ok(Arc::new(Reconstruction)));
    r
}

/// Node handles of one recorded minibatch objective.
#[derive(Clone, Debug)]
pub struct BatchObjective {
    pub bound: BoundModel,
    pub zh: NodeId,
    pub l_tp: NodeId,
    pub l_r: NodeId,
    pub total: NodeId,
}

/// Records `L_struct + lambda * ||w||_1` for one augmented batch.
pub fn record_objective(
    tape: &mut Tape,
    model: &UdrnModel,
    batch: &AugmentedBatch,
    structural: &dyn StructuralLoss,
    lambda: f64,
) -> Result<BatchObjective> {
    let bound = model.bind(tape);
    let x = tape.constant(batch.rows.clone());
    let zh = model.fs_forward_tape(tape, &bound, x)?;
    let l_tp = structural.build(tape, model, &bound, x, zh, batch)?;
    let l_r = tape.l1(bound.gate);
    let penalty = tape.scale(l_r, lambda);
    let total = tape.add(l_tp, penalty)?;
    Ok(BatchObjective {
        bound,
        zh,
        l_tp,
        l_r,
        total,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_tp: f64,
    pub l_r: f64,
    pub lambda: f64,
    pub active_features: usize,
    /// Originals without neighbors, augmented against themselves.
    pub fallbacks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Seconds spent per epoch; not part of the deterministic record.
    pub wall_times: Vec<f64>,
    pub optimizer_steps: u64,
    pub selection: Selection,
    /// `|selected ∩ informative| / |informative|`, when ground truth exists.
    pub feature_recovery: Option<f64>,
}

impl TrainReport {
    pub fn final_active_features(&self) -> usize {
        self.selection.indices.len()
    }

    pub fn record_recovery(&mut self, informative: &[usize]) {
        self.feature_recovery = Some(crate::eval::feature_recovery(&self.selection.indices, informative));
    }

    /// One JSON object per epoch, newline terminated.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.epochs {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model: UdrnModel,
    pub config: TrainConfig,
}

pub trait TrainObserver {
    fn on_epoch_end(&mut self, _record: &EpochRecord, _model: &UdrnModel) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

impl<F: FnMut(&EpochRecord, &UdrnModel) -> Result<()>> TrainObserver for F {
    fn on_epoch_end(&mut self, record: &EpochRecord, model: &UdrnModel) -> Result<()> {
        self(record, model)
    }
}

/// Builds the graph the config asks for: label-filtered edges when
/// `supervised` is set and labels exist, plain k-NN otherwise.
pub fn build_graph(x: Matrix, labels: Option<Vec<usize>>, cfg: &TrainConfig) -> Result<AttributedGraph> {
    match labels {
        Some(l) if cfg.supervised => AttributedGraph::supervised(x, cfg.k, l),
        Some(l) => AttributedGraph::unsupervised(x, cfg.k)?.with_labels(l),
        None if cfg.supervised => Err(Error::config("supervised training requested but no labels supplied")),
        None => AttributedGraph::unsupervised(x, cfg.k),
    }
}

pub fn train(graph: &AttributedGraph, cfg: &TrainConfig) -> Result<(TrainedModel, TrainReport)> {
    train_observed(graph, cfg, &mut ())
}

pub fn train_observed(
    graph: &AttributedGraph,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(TrainedModel, TrainReport)> {
    cfg.validate_for(graph)?;
    let augmenter = cfg.effective_augment().build()?;
    let structural = structural_loss_registry().get(cfg.structural_loss_name())?(&cfg.loss)?;

    let mut model = UdrnModel::init(
        graph.dim(),
        &cfg.architecture,
        structural.needs_decoder(),
        &mut rng::stream(cfg.seed, "init"),
    )?;
    let mut shuffle_rng = rng::stream(cfg.seed, "shuffle");
    let mut augment_rng = rng::stream(cfg.seed, "augment");
    let mut optimizer = AdamW::new(cfg.optimizer.clone(), &model.shapes());
    let mut schedule = LambdaSchedule::new(
        cfg.loss.warmup_epochs,
        cfg.loss.growth,
        cfg.loss.target_features,
        cfg.loss.initial_ratio,
        graph.dim(),
    )?;

    let n = graph.n();
    let b = cfg.batch_size;
    let batches = n / b;
    let mut ids: Vec<usize> = (0..n).collect();
    let (mut prev_tp, mut prev_r) = (0.0, 0.0);
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut wall_times = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let lambda = schedule.step(epoch, model.gate.active_count(), prev_tp, prev_r);
        ids.shuffle(&mut shuffle_rng);
        let (mut sum_tp, mut sum_r, mut fallbacks) = (0.0, 0.0, 0);

        for bi in 0..batches {
            let batch_ids = &ids[bi * b..(bi + 1) * b];
            let batch = make_augmented_batch(graph, batch_ids, augmenter.as_ref(), &mut augment_rng)?;
            fallbacks += batch.fallback_count;

            let mut tape = Tape::new();
            let obj = record_objective(&mut tape, &model, &batch, structural.as_ref(), lambda)?;
            let l_tp = tape.value(obj.l_tp).item()?;
            let l_r = tape.value(obj.l_r).item()?;
            let total = tape.value(obj.total).item()?;
            if !total.is_finite() {
                return Err(Error::Divergence(Box::new(DivergenceSnapshot {
                    epoch,
                    batch: bi,
                    origin_ids: batch.origin_ids.clone(),
                    l_tp,
                    l_r,
                    lambda,
                })));
            }
            let grads = tape.backward(obj.total)?;
            let grad_list: Vec<Matrix> = obj.bound.all().into_iter().map(|id| grads.get(id)).collect();
            let grad_refs: Vec<&Matrix> = grad_list.iter().collect();
            optimizer.step(&mut model.tensors_mut(), &grad_refs)?;
            sum_tp += l_tp;
            sum_r += l_r;
        }

        prev_tp = sum_tp / batches as f64;
        prev_r = sum_r / batches as f64;
        let record = EpochRecord {
            epoch,
            l_tp: prev_tp,
            l_r: prev_r,
            lambda,
            active_features: model.gate.active_count(),
            fallbacks,
        };
        observer.on_epoch_end(&record, &model)?;
        records.push(record);
        wall_times.push(started.elapsed().as_secs_f64());
    }

    let report = TrainReport {
        epochs: records,
        wall_times,
        optimizer_steps: optimizer.step_count(),
        selection: model.gate.select_features(),
        feature_recovery: None,
    };
    Ok((
        TrainedModel {
            model,
            config: cfg.clone(),
        },
        report,
    ))
}

/// Full-dataset outputs of a trained model.
#[derive(Clone, Debug)]
pub struct Embeddings {
    pub selection: Selection,
    /// Columns of the input restricted to the selected features, in
    /// selection order.
    pub selected: Matrix,
    pub zh: Matrix,
    pub zl: Matrix,
}

const INFER_CHUNK: usize = 4096;

pub fn infer_embeddings(model: &UdrnModel, x: &Matrix) -> Result<Embeddings> {
    if x.cols() != model.input_dim() {
        return Err(Error::dim(format!(
            "model was trained on {} features, input has {}",
            model.input_dim(),
            x.cols()
        )));
    }
    let selection = model.gate.select_features();
    let mut zh = Matrix::zeros(0, model.backbone.output_dim());
    let mut zl = Matrix::zeros(0, model.projector.output_dim());
    let mut start = 0;
    while start < x.rows() {
        let end = (start + INFER_CHUNK).min(x.rows());
        let out = model.forward(&x.slice_rows(start, end))?;
        zh = zh.vstack(&out.zh)?;
        zl = zl.vstack(&out.zl)?;
        start = end;
    }
    Ok(Embeddings {
        selected: x.select_cols(&selection.indices),
        selection,
        zh,
        zl,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    NoTau,
    NoLtp,
    NoBoth,
}

pub fn ablation_variant(cfg: &TrainConfig, which: Ablation) -> TrainConfig {
    let mut out = cfg.clone();
    if matches!(which, Ablation::NoTau | Ablation::NoBoth) {
        out.ablation.no_augment = true;
        out.augment = AugmentConfig::none();
    }
    if matches!(which, Ablation::NoLtp | Ablation::NoBoth) {
        out.ablation.substitute_loss = true;
    }
    out
}

/// Structural loss of `model` on one fixed augmented batch, for tracking
/// progress on held-out data.
pub fn fixed_batch_loss(model: &UdrnModel, batch: &AugmentedBatch, cfg: &TrainConfig) -> Result<f64> {
    let structural = structural_loss_registry().get(cfg.structural_loss_name())?(&cfg.loss)?;
    let mut tape = Tape::new();
    let obj = record_objective(&mut tape, model, batch, structural.as_ref(), 0.0)?;
    tape.value(obj.l_tp).item()
}
