//! The matrix objective and its closed-form gradients.
//!
//! `loss` measures how far the (absolute) row-normalized rows of `M J` are
//! from an orthonormal set; it is zero exactly when the rows are mutually
//! orthogonal — with the absolute value, when their supports are disjoint.
//! `loss_det` is the Hadamard-inequality gap of the unnormalized row Gram
//! matrix: an alternative objective with the same minimizers.

use crate::error::{Error, Result};
use crate::numerics::{cholesky, invert_lower_triangular, Matrix};

/// Entries with magnitude below this get a zero subgradient through the
/// absolute value.
const ABS_SUBGRADIENT_CUTOFF: f64 = 1e-12;

/// Absolute-value row normalization: takes `|a|` (when `take_abs`) and
/// scales every row to unit L2 norm.
pub fn arn(a: &Matrix, take_abs: bool) -> Result<Matrix> {
    let mut out = if take_abs { a.abs() } else { a.clone() };
    for r in 0..out.rows() {
        let norm = row_norm(out.row(r));
        if norm <= 0.0 {
            return Err(Error::ZeroRow { row: r });
        }
        for v in out.row_mut(r) {
            *v /= norm;
        }
    }
    Ok(out)
}

fn row_norm(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Disjointness/orthogonality objective `|| arn(M J) arn(M J)^T - I ||_F^2`.
pub fn loss(m: &Matrix, jac: &Matrix, take_abs: bool) -> Result<f64> {
    let u = arn(&m.matmul(jac), take_abs)?;
    let gram = u.row_gram();
    let k = gram.rows();
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            let d = gram[(i, j)] - target;
            total += d * d;
        }
    }
    Ok(total)
}

/// Gradient of [`loss`] with respect to `M`.
pub fn loss_grad(m: &Matrix, jac: &Matrix, take_abs: bool) -> Result<Matrix> {
    let b = m.matmul(jac);
    let k = b.rows();
    let cols = b.cols();

    let a = if take_abs { b.abs() } else { b.clone() };
    let mut norms = Vec::with_capacity(k);
    let mut unit = a.clone();
    for r in 0..k {
        let norm = row_norm(unit.row(r));
        if norm <= 0.0 {
            return Err(Error::ZeroRow { row: r });
        }
        norms.push(norm);
        for v in unit.row_mut(r) {
            *v /= norm;
        }
    }

    // d loss / d unit = 4 (G - diag G) unit, with G the row Gram of unit.
    let gram = unit.row_gram();
    let mut d_unit = Matrix::zeros(k, cols);
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let g = 4.0 * gram[(i, j)];
            if g == 0.0 {
                continue;
            }
            let uj = unit.row(j);
            let row = d_unit.row_mut(i);
            for c in 0..cols {
                row[c] += g * uj[c];
            }
        }
    }

    // Back through the row normalization: project out the radial component
    // and divide by the row norm; then through the absolute value.
    let mut d_b = Matrix::zeros(k, cols);
    for i in 0..k {
        let ui = unit.row(i);
        let du = d_unit.row(i);
        let radial: f64 = ui.iter().zip(du).map(|(u, d)| u * d).sum();
        let bi = b.row(i);
        let row = d_b.row_mut(i);
        for c in 0..cols {
            let mut g = (du[c] - radial * ui[c]) / norms[i];
            if take_abs {
                g *= if bi[c].abs() < ABS_SUBGRADIENT_CUTOFF {
                    0.0
                } else {
                    bi[c].signum()
                };
            }
            row[c] = g;
        }
    }

    Ok(d_b.matmul(&jac.transpose()))
}

/// Hadamard-gap objective `log prod_i V_ii - log det V` with
/// `V = U U^T`, `U = |M J|` (or `M J` without the absolute value).
/// Nonnegative, zero exactly when `V` is diagonal, and invariant to row
/// rescaling of `M`.
pub fn loss_det(m: &Matrix, jac: &Matrix, take_abs: bool) -> Result<f64> {
    let b = m.matmul(jac);
    let u = if take_abs { b.abs() } else { b };
    let v = u.row_gram();
    let chol = cholesky(&v)?;
    let mut log_diag = 0.0;
    let mut log_det = 0.0;
    for i in 0..v.rows() {
        log_diag += v[(i, i)].ln();
        log_det += 2.0 * chol[(i, i)].ln();
    }
    Ok(log_diag - log_det)
}

/// Gradient of [`loss_det`] with respect to `M`.
pub fn loss_det_grad(m: &Matrix, jac: &Matrix, take_abs: bool) -> Result<Matrix> {
    let b = m.matmul(jac);
    let u = if take_abs { b.abs() } else { b.clone() };
    let v = u.row_gram();
    let chol = cholesky(&v)?;
    let l_inv = invert_lower_triangular(&chol);
    let v_inv = l_inv.transpose().matmul(&l_inv);

    // d loss / d V = diag(1/V_ii) - V^-1; both terms symmetric, so
    // d loss / d U = 2 (diag(1/V_ii) - V^-1) U.
    let k = v.rows();
    let mut d_v = v_inv.scale(-1.0);
    for i in 0..k {
        d_v[(i, i)] += 1.0 / v[(i, i)];
    }
    let mut d_b = d_v.matmul(&u).scale(2.0);
    if take_abs {
        for r in 0..d_b.rows() {
            for c in 0..d_b.cols() {
                let orig = b[(r, c)];
                d_b[(r, c)] *= if orig.abs() < ABS_SUBGRADIENT_CUTOFF {
                    0.0
                } else {
                    orig.signum()
                };
            }
        }
    }
    Ok(d_b.matmul(&jac.transpose()))
}
