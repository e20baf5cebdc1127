use std::sync::Arc;

use crate::error::{Error, Result};
use crate::registry::Registry;

/// Multiplicative reshaping of target similarities by edge membership; the
/// product is capped at 1.
pub trait Exaggeration: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    /// `(edge factor, non-edge factor)` for strength `beta`.
    fn factors(&self, beta: f64) -> (f64, f64);
}

/// Edges scaled up by `e^beta`, non-edges down by `e^-beta`.
#[derive(Debug, Clone, Copy)]
pub struct Directional;

impl Exaggeration for Directional {
    fn name(&self) -> &'static str {
        "directional"
    }

    fn factors(&self, beta: f64) -> (f64, f64) {
        (beta.exp(), (-beta).exp())
    }
}

/// Edges scaled by `e^(1-beta)`, non-edges by `e^(1+beta)`.
#[derive(Debug, Clone, Copy)]
pub struct Literal;

impl Exaggeration for Literal {
    fn name(&self) -> &'static str {
        "literal"
    }

    fn factors(&self, beta: f64) -> (f64, f64) {
        ((1.0 - beta).exp(), (1.0 + beta).exp())
    }
}

pub type ExaggerationFactory = fn() -> Arc<dyn Exaggeration>;

pub fn exaggeration_registry() -> Registry<ExaggerationFactory> {
    let mut r: Registry<ExaggerationFactory> = Registry::new("exaggeration mode");
    r.register("directional", || Arc::new(Directional))
        .register("literal", || Arc::new(Literal));
    r
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("loss.beta must be > 0, got {beta}")))
    }
}
