//! Factorizations: symmetric eigendecomposition (cyclic Jacobi), Cholesky,
//! pseudo-inverse, square inverse and pivoted column selection.

use super::matrix::Matrix;
use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const JACOBI_OFF_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
const RANK_TOL: f64 = 1e-10;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// the columns of an orthonormal matrix.
pub fn sym_eig(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric {
            asymmetry: asym,
            tolerance: SYMMETRY_TOL,
        });
    }

    let n = a.rows();
    let mut m = a.clone();
    // Force exact symmetry so rotations stay consistent.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    let mut v = Matrix::identity(n);
    let norm = m.frobenius_norm().max(f64::MIN_POSITIVE);

    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < JACOBI_MAX_SWEEPS {
        let off = off_diagonal_norm(&m);
        if off <= JACOBI_OFF_TOL * norm {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                // Rotation angle from the classic Jacobi recurrence.
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        sweeps += 1;
    }
    if !converged && off_diagonal_norm(&m) > JACOBI_OFF_TOL * norm {
        return Err(Error::EigNotConverged {
            sweeps,
            remaining: off_diagonal_norm(&m),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let eigenvectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((eigenvalues, eigenvectors))
}

fn off_diagonal_norm(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cholesky factor `L` (lower triangular) of a symmetric positive definite
/// matrix, `L * L^T = a`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric {
            asymmetry: asym,
            tolerance: SYMMETRY_TOL,
        });
    }
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix by forward substitution.
pub fn invert_lower_triangular(l: &Matrix) -> Matrix {
    let n = l.rows();
    let mut inv = Matrix::zeros(n, n);
    for col in 0..n {
        inv[(col, col)] = 1.0 / l[(col, col)];
        for row in (col + 1)..n {
            let mut s = 0.0;
            for k in col..row {
                s += l[(row, k)] * inv[(k, col)];
            }
            inv[(row, col)] = -s / l[(row, row)];
        }
    }
    inv
}

/// Inverse of a square matrix by Gauss-Jordan elimination with partial
/// pivoting.
pub fn inverse(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let mut work = a.clone();
    let mut inv = Matrix::identity(n);
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let mut pivot = col;
        for r in (col + 1)..n {
            if work[(r, col)].abs() > work[(pivot, col)].abs() {
                pivot = r;
            }
        }
        let pv = work[(pivot, col)];
        if pv.abs() <= RANK_TOL * scale {
            return Err(Error::RankDeficient {
                smallest: pv.abs(),
                largest: scale,
            });
        }
        if pivot != col {
            for j in 0..n {
                let (a1, a2) = (work[(col, j)], work[(pivot, j)]);
                work[(col, j)] = a2;
                work[(pivot, j)] = a1;
                let (b1, b2) = (inv[(col, j)], inv[(pivot, j)]);
                inv[(col, j)] = b2;
                inv[(pivot, j)] = b1;
            }
        }
        let d = work[(col, col)];
        for j in 0..n {
            work[(col, j)] /= d;
            inv[(col, j)] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = work[(r, col)];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                work[(r, j)] -= f * work[(col, j)];
                inv[(r, j)] -= f * inv[(col, j)];
            }
        }
    }
    Ok(inv)
}

/// Singular values of `a` via the eigenvalues of `a^T a`, descending.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    let (eigs, _) = sym_eig(&a.gram())?;
    Ok(eigs.into_iter().map(|v| v.max(0.0).sqrt()).collect())
}

/// Condition number (ratio of extreme singular values).
pub fn condition_number(a: &Matrix) -> Result<f64> {
    let sv = singular_values(a)?;
    let largest = sv.first().copied().unwrap_or(0.0);
    let smallest = sv.last().copied().unwrap_or(0.0);
    if smallest <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(largest / smallest)
}

/// Moore-Penrose pseudo-inverse `(a^T a)^-1 a^T` for full-column-rank `a`.
pub fn pinv(a: &Matrix) -> Result<Matrix> {
    let gram = a.gram();
    let (eigs, vecs) = sym_eig(&gram)?;
    let largest = eigs.first().copied().unwrap_or(0.0).max(0.0).sqrt();
    let smallest = eigs.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    if smallest <= RANK_TOL * largest {
        return Err(Error::RankDeficient { smallest, largest });
    }
    // gram^-1 = V diag(1/eig) V^T, then pinv = gram^-1 a^T.
    let k = gram.rows();
    let mut gram_inv = Matrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let mut s = 0.0;
            for e in 0..k {
                s += vecs[(i, e)] * vecs[(j, e)] / eigs[e];
            }
            gram_inv[(i, j)] = s;
            gram_inv[(j, i)] = s;
        }
    }
    Ok(gram_inv.matmul(&a.transpose()))
}

/// Greedy pivoted column selection: repeatedly picks the column with the
/// largest residual norm after orthogonalizing against the chosen ones.
/// Returns `count` column indices spanning a well-conditioned submatrix.
pub fn pivoted_columns(a: &Matrix, count: usize) -> Result<Vec<usize>> {
    let mut residual: Vec<Vec<f64>> = (0..a.cols()).map(|c| a.column(c)).collect();
    let initial_max = residual
        .iter()
        .map(|c| norm(c))
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut chosen = Vec::with_capacity(count);
    for _ in 0..count {
        let (best, best_norm) = residual
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen.contains(i))
            .map(|(i, c)| (i, norm(c)))
            .fold((usize::MAX, -1.0), |acc, it| if it.1 > acc.1 { it } else { acc });
        if best_norm <= RANK_TOL * initial_max {
            return Err(Error::RankDeficient {
                smallest: best_norm,
                largest: initial_max,
            });
        }
        let q: Vec<f64> = residual[best].iter().map(|v| v / best_norm).collect();
        chosen.push(best);
        for (i, col) in residual.iter_mut().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let dot: f64 = col.iter().zip(&q).map(|(a, b)| a * b).sum();
            for (v, qv) in col.iter_mut().zip(&q) {
                *v -= dot * qv;
            }
        }
    }
    Ok(chosen)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
