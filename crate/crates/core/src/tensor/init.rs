use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::matrix::Matrix;

/// He/Kaiming normal initialization for a `rows x cols` weight whose fan-in
/// is `cols`: entries are i.i.d. `N(0, 2 / cols)`.
pub fn kaiming_init<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    assert!(rows >= 1 && cols >= 1, "kaiming_init needs a non-empty shape");
    let std = (2.0 / cols as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Matrix::new(rows, cols, data).expect("length matches")
}
