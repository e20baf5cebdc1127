//! Loss mathematics: kernels, similarity matrices, manifold exaggeration,
//! fuzzy-set cross entropy, the L1 gate penalty, and the lambda schedule.

mod exaggerate;
mod kernel;
mod lambda;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use exaggerate::{exaggeration_registry, Directional, Exaggeration, ExaggerationFactory, Literal};
pub use kernel::{gaussian_kernel, kernel_registry, t_kernel, Gaussian, Kernel, KernelFactory, StudentT};
pub use lambda::LambdaSchedule;

use crate::error::{Error, Result};
use crate::tensor::{fuzzy_ce_value, ops, Matrix, NodeId, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub beta: f64,
    pub nu: f64,
    pub sigma: f64,
    pub high_kernel: String,
    pub low_kernel: String,
    pub exaggeration_mode: String,
    pub target_features: Option<usize>,
    pub warmup_epochs: usize,
    pub growth: f64,
    pub initial_ratio: f64,
    pub log_clamp: f64,
    /// Treat the exaggerated high-dimensional similarities as constants.
    pub detach_target: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            beta: 0.01,
            nu: 1.0,
            sigma: 1.0,
            high_kernel: "gaussian".into(),
            low_kernel: "student-t".into(),
            exaggeration_mode: "directional".into(),
            target_features: None,
            warmup_epochs: 300,
            growth: 1.005,
            initial_ratio: 0.1,
            log_clamp: 1e-7,
            detach_target: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        exaggerate::check_beta(self.beta)?;
        self.high()?;
        self.low()?;
        exaggeration_registry().get(&self.exaggeration_mode)?;
        if !(self.log_clamp > 0.0 && self.log_clamp < 0.5) {
            return Err(Error::config(format!(
                "loss.log_clamp must lie in (0, 0.5), got {}",
                self.log_clamp
            )));
        }
        Ok(())
    }

    pub fn high(&self) -> Result<Arc<dyn Kernel>> {
        let param = if self.high_kernel == "gaussian" { self.sigma } else { self.nu };
        kernel_registry().get(&self.high_kernel)?(param)
    }

    pub fn low(&self) -> Result<Arc<dyn Kernel>> {
        let param = if self.low_kernel == "gaussian" { self.sigma } else { self.nu };
        kernel_registry().get(&self.low_kernel)?(param)
    }

    pub fn exaggeration(&self) -> Result<Arc<dyn Exaggeration>> {
        Ok(exaggeration_registry().get(&self.exaggeration_mode)?())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    High,
    Low,
}

/// Symmetric pairwise similarities in (0, 1] with a unit diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    pub values: Matrix,
    pub space: Space,
}

pub fn similarity_matrix(z: &Matrix, kernel: &dyn Kernel, space: Space) -> SimilarityMatrix {
    let d2 = ops::self_sq_dist(z);
    SimilarityMatrix {
        values: d2.map(|d| kernel.similarity(d)),
        space,
    }
}

/// Gaussian similarities at sigma = 1 over high-dimensional embeddings.
pub fn high_similarity(zh: &Matrix) -> SimilarityMatrix {
    similarity_matrix(zh, &Gaussian::new(1.0).expect("sigma 1"), Space::High)
}

/// Student-t similarities over low-dimensional embeddings.
pub fn low_similarity(zl: &Matrix, nu: f64) -> Result<SimilarityMatrix> {
    Ok(similarity_matrix(zl, &StudentT::new(nu)?, Space::Low))
}

fn edge_mask(n: usize, pos_edges: &BTreeSet<(usize, usize)>) -> Result<Vec<bool>> {
    let mut mask = vec![false; n * n];
    for &(a, b) in pos_edges {
        if a >= n || b >= n {
            return Err(Error::dim(format!("edge ({a}, {b}) outside a {n}x{n} matrix")));
        }
        mask[a * n + b] = true;
        mask[b * n + a] = true;
    }
    Ok(mask)
}

pub fn exaggerate(
    s: &SimilarityMatrix,
    pos_edges: &BTreeSet<(usize, usize)>,
    beta: f64,
    mode: &dyn Exaggeration,
) -> Result<SimilarityMatrix> {
    exaggerate::check_beta(beta)?;
    let n = s.values.rows();
    let mask = edge_mask(n, pos_edges)?;
    let (on, off) = mode.factors(beta);
    let mut values = s.values.clone();
    for (v, &edge) in values.as_mut_slice().iter_mut().zip(&mask) {
        *v = (*v * if edge { on } else { off }).min(1.0);
    }
    Ok(SimilarityMatrix {
        values,
        space: s.space,
    })
}

/// Negated binary cross entropy over off-diagonal pairs, averaged by `1/N^2`.
pub fn fuzzy_cross_entropy(target: &SimilarityMatrix, low: &SimilarityMatrix, delta: f64) -> Result<f64> {
    target.values.ensure_same_shape(&low.values, "fuzzy cross entropy")?;
    Ok(fuzzy_ce_value(&target.values, &low.values, delta))
}

pub fn l1_loss(w: &[f64]) -> f64 {
    w.iter().map(|v| v.abs()).sum()
}

/// Records `kernel(||z_i - z_j||^2)` for all pairs on the tape.
pub fn tape_similarity(tape: &mut Tape, z: NodeId, kernel: &dyn Kernel) -> NodeId {
    let d2 = tape.sq_dist(z);
    tape.pointwise(d2, |_, d| kernel.similarity(d), |_, d, s| kernel.similarity_grad_at(d, s))
}

/// Records the capped exaggeration; capped entries pass no gradient.
pub fn tape_exaggerate(
    tape: &mut Tape,
    s: NodeId,
    mask: &[bool],
    beta: f64,
    mode: &dyn Exaggeration,
) -> Result<NodeId> {
    exaggerate::check_beta(beta)?;
    if mask.len() != tape.value(s).len() {
        return Err(Error::dim("edge mask does not cover the similarity matrix"));
    }
    let (on, off) = mode.factors(beta);
    let factor = |i: usize| if mask[i] { on } else { off };
    Ok(tape.pointwise(
        s,
        |i, v| (v * factor(i)).min(1.0),
        |i, v, _| if v * factor(i) < 1.0 { factor(i) } else { 0.0 },
    ))
}
