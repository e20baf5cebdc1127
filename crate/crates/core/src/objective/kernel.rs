use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::registry::Registry;

/// Gaussian density `exp(-d2 / (2 sigma^2)) / (sqrt(2 pi) sigma)`.
pub fn gaussian_kernel(d2: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::config(format!("gaussian sigma must be > 0, got {sigma}")));
    }
    Ok((-d2 / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma))
}

/// Student-t density `(1 + d2/nu)^(-(nu+1)/2) / (sqrt(nu) B(1/2, nu/2))`.
pub fn t_kernel(d2: f64, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::config(format!("t-kernel nu must be > 0, got {nu}")));
    }
    Ok((1.0 + d2 / nu).powf(-0.5 * (nu + 1.0)) / (nu.sqrt() * beta(0.5, 0.5 * nu)))
}

pub(crate) fn beta(a: f64, b: f64) -> f64 {
    (libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)).exp()
}

/// A similarity kernel over squared distances, rescaled so that a zero
/// distance maps to exactly 1.
pub trait Kernel: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    /// Unnormalized kernel value.
    fn density(&self, d2: f64) -> f64;

    /// `density(d2) / density(0)`, in (0, 1].
    fn similarity(&self, d2: f64) -> f64;

    /// Derivative of [`Kernel::similarity`] with respect to `d2`.
    fn similarity_grad(&self, d2: f64) -> f64;

    /// The same derivative given the already computed `similarity(d2)`.
    fn similarity_grad_at(&self, d2: f64, _similarity: f64) -> f64 {
        self.similarity_grad(d2)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Gaussian {
    sigma: f64,
}

impl Gaussian {
    pub fn new(sigma: f64) -> Result<Self> {
        gaussian_kernel(0.0, sigma)?;
        Ok(Self { sigma })
    }
}

impl Kernel for Gaussian {
    fn name(&self) -> &'static str {
        "gaussian"
    }

    fn density(&self, d2: f64) -> f64 {
        gaussian_kernel(d2, self.sigma).expect("validated")
    }

    fn similarity(&self, d2: f64) -> f64 {
        (-d2 / (2.0 * self.sigma * self.sigma)).exp()
    }

    fn similarity_grad(&self, d2: f64) -> f64 {
        self.similarity_grad_at(d2, self.similarity(d2))
    }

    fn similarity_grad_at(&self, _d2: f64, similarity: f64) -> f64 {
        -similarity / (2.0 * self.sigma * self.sigma)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StudentT {
    nu: f64,
}

impl StudentT {
    pub fn new(nu: f64) -> Result<Self> {
        t_kernel(0.0, nu)?;
        Ok(Self { nu })
    }
}

impl Kernel for StudentT {
    fn name(&self) -> &'static str {
        "student-t"
    }

    fn density(&self, d2: f64) -> f64 {
        t_kernel(d2, self.nu).expect("validated")
    }

    fn similarity(&self, d2: f64) -> f64 {
        if self.nu == 1.0 {
            return 1.0 / (1.0 + d2);
        }
        (1.0 + d2 / self.nu).powf(-0.5 * (self.nu + 1.0))
    }

    fn similarity_grad(&self, d2: f64) -> f64 {
        if self.nu == 1.0 {
            let q = 1.0 / (1.0 + d2);
            return -q * q;
        }
        let e = -0.5 * (self.nu + 1.0);
        e / self.nu * (1.0 + d2 / self.nu).powf(e - 1.0)
    }

    fn similarity_grad_at(&self, d2: f64, similarity: f64) -> f64 {
        let base = 1.0 + d2 / self.nu;
        -0.5 * (self.nu + 1.0) / self.nu * similarity / base
    }
}

/// Builds a kernel from its scale parameter (sigma or nu).
pub type KernelFactory = fn(f64) -> Result<Arc<dyn Kernel>>;

pub fn kernel_registry() -> Registry<KernelFactory> {
    let mut r: Registry<KernelFactory> = Registry::new("kernel");
    r.register("gaussian", |s| Ok(Arc::new(Gaussian::new(s)?)))
        .register("student-t", |nu| Ok(Arc::new(StudentT::new(nu)?)));
    r
}
