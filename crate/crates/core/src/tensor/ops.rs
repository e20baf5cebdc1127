//! Forward kernels shared by the taped and tape-free code paths, so that
//! inference reproduces training-time activations bit for bit.

use super::matrix::{gemm, Matrix};

/// `x * weight^T + bias`, with `weight` stored `out x in` and `bias` `1 x out`.
pub fn linear(x: &Matrix, weight: &Matrix, bias: &Matrix) -> Matrix {
    debug_assert_eq!(x.cols(), weight.cols());
    debug_assert_eq!(bias.shape(), (1, weight.rows()));
    let mut out = Matrix::zeros(x.rows(), weight.rows());
    gemm(1.0, x, false, weight, true, 0.0, &mut out);
    let b = bias.as_slice();
    for r in 0..out.rows() {
        for (o, bv) in out.row_mut(r).iter_mut().zip(b) {
            *o += bv;
        }
    }
    out
}

pub fn leaky_relu(x: &Matrix, slope: f64) -> Matrix {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

/// Column `j` becomes `w_j * x_j` when `w_j > eps`, and exactly zero otherwise.
pub fn gate(x: &Matrix, w: &[f64], eps: f64) -> Matrix {
    debug_assert_eq!(x.cols(), w.len());
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let src = x.row(r);
        for ((o, &v), &wj) in out.row_mut(r).iter_mut().zip(src).zip(w) {
            if wj > eps {
                *o = wj * v;
            }
        }
    }
    out
}

/// Up to this width, distances are summed directly instead of through a Gram
/// matrix; narrow inputs lose too much precision to cancellation otherwise.
pub const DIRECT_DIST_MAX_COLS: usize = 16;

/// Squared Euclidean distances between all rows of `z`; symmetric with an
/// exactly zero diagonal.
pub fn self_sq_dist(z: &Matrix) -> Matrix {
    let n = z.rows();
    let mut out = Matrix::zeros(n, n);
    if z.cols() <= DIRECT_DIST_MAX_COLS {
        // (a - b)^2 == (b - a)^2 exactly, so full rows stay symmetric.
        for i in 0..n {
            let zi = z.row(i);
            for (j, o) in out.row_mut(i).iter_mut().enumerate() {
                if j != i {
                    *o = zi.iter().zip(z.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                }
            }
        }
        return out;
    }
    let mut gram = Matrix::zeros(n, n);
    gemm(1.0, z, false, z, true, 0.0, &mut gram);
    let diag: Vec<f64> = (0..n).map(|i| gram.get(i, i)).collect();
    for i in 0..n {
        let (g, o) = (gram.row(i), out.row_mut(i));
        for j in 0..n {
            if j != i {
                o[j] = (diag[i] + diag[j] - 2.0 * g[j]).max(0.0);
            }
        }
    }
    // Guard against any asymmetry in the Gram product.
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (out.get(i, j), out.get(j, i));
            if a != b {
                let m = 0.5 * (a + b);
                out.set(i, j, m);
                out.set(j, i, m);
            }
        }
    }
    out
}
