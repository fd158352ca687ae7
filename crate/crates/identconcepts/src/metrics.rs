//! Recovery quantification: permutation-scale decomposition of the
//! composite map, DCI scores (matrix-exact and regression-based) and the
//! mutual-information gap.

use crate::error::{Error, Result};
use crate::numerics::{best_assignment, Matrix};
use serde::Serialize;

/// Permutation + scale decomposition of a composite recovery map, with the
/// leftover mass as a relative residual.
#[derive(Debug, Clone, Serialize)]
pub struct RecoveryReport {
    /// Column assigned to each row.
    pub permutation: Vec<usize>,
    pub scales: Vec<f64>,
    /// `||a' - P S'||_F / ||a'||_F` of the row-normalized map `a'`: the
    /// fraction of each component's mass that falls outside its assigned
    /// axis. Row-normalizing first keeps the residual invariant under the
    /// permutation-scale freedom the decomposition is meant to absorb.
    pub residual: f64,
    /// Cosine of each row with its assigned axis.
    pub matched_correlations: Vec<f64>,
}

/// Splits `a` into its best permutation-scale part and a residual. The
/// assignment maximizes row-normalized absolute mass so every component
/// gets an equal vote regardless of its scale.
pub fn decompose_ps(a: &Matrix) -> Result<RecoveryReport> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let k = a.rows();
    let mut score = a.abs();
    let mut row_norms = Vec::with_capacity(k);
    for r in 0..k {
        let norm = score.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        row_norms.push(norm);
        if norm > 0.0 {
            for v in score.row_mut(r) {
                *v /= norm;
            }
        }
    }
    let permutation = best_assignment(&score)?;
    let scales: Vec<f64> = permutation.iter().enumerate().map(|(i, &j)| a[(i, j)]).collect();
    let mut off_mass = 0.0;
    let mut total_mass = 0.0;
    for i in 0..k {
        for j in 0..k {
            let v = score[(i, j)];
            total_mass += v * v;
            if j != permutation[i] {
                off_mass += v * v;
            }
        }
    }
    let residual = if total_mass > 0.0 {
        (off_mass / total_mass).sqrt()
    } else {
        0.0
    };
    let matched_correlations = permutation
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            if row_norms[i] > 0.0 {
                a[(i, j)].abs() / row_norms[i]
            } else {
                0.0
            }
        })
        .collect();
    Ok(RecoveryReport {
        permutation,
        scales,
        residual,
        matched_correlations,
    })
}

/// Disentanglement / completeness / informativeness scores plus the
/// importance matrix they were computed from.
#[derive(Debug, Clone, Serialize)]
pub struct DciReport {
    pub disentanglement: f64,
    pub completeness: f64,
    pub informativeness: f64,
    /// Nonnegative importance of code (row) for factor (column); columns
    /// sum to one.
    pub importance: Matrix,
    /// Which mass convention weights the per-code entropies.
    pub weighting: &'static str,
}

/// Entropy of a nonnegative vector normalized to a distribution, in units
/// of `log(k)` so the result lies in `[0, 1]`.
fn normalized_entropy(weights: &[f64], k: usize) -> f64 {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 || k < 2 {
        return 0.0;
    }
    let mut h = 0.0;
    for &w in weights {
        if w > 0.0 {
            let p = w / total;
            h -= p * p.ln();
        }
    }
    h / (k as f64).ln()
}

/// Shared DCI aggregation over a nonnegative importance matrix. Rows or
/// columns with zero mass contribute zero weight.
fn dci_scores(importance: &Matrix) -> (f64, f64) {
    let (codes, factors) = (importance.rows(), importance.cols());
    let total: f64 = importance.data().iter().sum();
    let mut disentanglement = 0.0;
    for i in 0..codes {
        let row = importance.row(i);
        let mass: f64 = row.iter().sum();
        if mass <= 0.0 || total <= 0.0 {
            continue;
        }
        disentanglement += (mass / total) * (1.0 - normalized_entropy(row, factors));
    }
    let mut completeness = 0.0;
    let mut column_mass_total = 0.0;
    let mut column_scores = Vec::with_capacity(factors);
    for j in 0..factors {
        let col = importance.column(j);
        let mass: f64 = col.iter().sum();
        column_scores.push((mass, 1.0 - normalized_entropy(&col, codes)));
        column_mass_total += mass;
    }
    if column_mass_total > 0.0 {
        for (mass, score) in column_scores {
            completeness += (mass / column_mass_total) * score;
        }
    }
    (disentanglement, completeness)
}

/// Matrix-exact DCI of a linear recovery map: importance is the
/// column-normalized absolute map, informativeness is 1 because the map is
/// exact.
pub fn dci_from_matrix(a: &Matrix) -> Result<DciReport> {
    a.check_finite()?;
    let (k_codes, k_factors) = (a.rows(), a.cols());
    let abs = a.abs();
    for i in 0..k_codes {
        if abs.row(i).iter().sum::<f64>() <= 0.0 {
            return Err(Error::ZeroRow { row: i });
        }
    }
    let mut importance = Matrix::zeros(k_codes, k_factors);
    for j in 0..k_factors {
        let col = abs.column(j);
        let mass: f64 = col.iter().sum();
        if mass <= 0.0 {
            return Err(Error::Config(format!("column {j} of the recovery map is zero")));
        }
        for i in 0..k_codes {
            importance[(i, j)] = col[i] / mass;
        }
    }
    let (disentanglement, completeness) = dci_scores(&importance);
    Ok(DciReport {
        disentanglement,
        completeness,
        informativeness: 1.0,
        importance,
        weighting: "column-mass",
    })
}

/// L1-regularized (coordinate-descent) linear regression of `y` on the
/// standardized columns of `x`. Returns the coefficients.
fn lasso(x: &Matrix, y: &[f64], lambda: f64) -> Vec<f64> {
    let (n, p) = (x.rows(), x.cols());
    let nf = n as f64;
    let mut beta = vec![0.0; p];
    let mut residual = y.to_vec();
    // Columns are standardized by the caller, so x_i^T x_i / n == 1 for
    // live columns and 0 for dropped (constant) ones.
    let col_scale: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|r| x[(r, j)] * x[(r, j)]).sum::<f64>() / nf)
        .collect();
    for _ in 0..1000 {
        let mut max_change = 0.0f64;
        for j in 0..p {
            if col_scale[j] <= 0.0 {
                continue;
            }
            let old = beta[j];
            let mut rho = 0.0;
            for r in 0..n {
                rho += x[(r, j)] * (residual[r] + x[(r, j)] * old);
            }
            rho /= nf;
            let new = soft_threshold(rho, lambda) / col_scale[j];
            if new != old {
                for r in 0..n {
                    residual[r] -= x[(r, j)] * (new - old);
                }
                max_change = max_change.max((new - old).abs());
                beta[j] = new;
            }
        }
        if max_change < 1e-10 {
            break;
        }
    }
    beta
}

fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

/// Sample-based DCI: per-factor L1-regularized linear regression of each
/// true component on all (standardized) predicted components. Importance is
/// the matrix of absolute coefficients; informativeness averages the
/// training R^2 over factors.
pub fn dci_from_samples(
    z_true: &Matrix,
    z_pred: &Matrix,
    regressor_strength: f64,
) -> Result<DciReport> {
    let (n, k_true) = (z_true.rows(), z_true.cols());
    let k_pred = z_pred.cols();
    if z_pred.rows() != n {
        return Err(Error::DimensionMismatch {
            context: "z_true and z_pred disagree on sample count".into(),
        });
    }
    if n <= 10 * k_true {
        return Err(Error::Config(format!(
            "sample-based DCI needs n > 10k (n = {n}, k = {k_true})"
        )));
    }

    // Standardize predictors; constant columns are dropped with a warning
    // and keep zero importance.
    let mut x = Matrix::zeros(n, k_pred);
    for j in 0..k_pred {
        let col = z_pred.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        if var <= f64::EPSILON {
            log::warn!("predicted component {j} is constant; importance forced to zero");
            continue;
        }
        let std = var.sqrt();
        for r in 0..n {
            x[(r, j)] = (z_pred[(r, j)] - mean) / std;
        }
    }

    let mut importance = Matrix::zeros(k_pred, k_true);
    let mut r2_sum = 0.0;
    for j in 0..k_true {
        let col = z_true.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let y: Vec<f64> = col.iter().map(|v| v - mean).collect();
        let beta = lasso(&x, &y, regressor_strength);
        for (i, b) in beta.iter().enumerate() {
            importance[(i, j)] = b.abs();
        }
        let ss_tot: f64 = y.iter().map(|v| v * v).sum();
        let mut residual = y.clone();
        for (i, b) in beta.iter().enumerate() {
            if *b != 0.0 {
                for r in 0..n {
                    residual[r] -= x[(r, i)] * b;
                }
            }
        }
        let ss_res: f64 = residual.iter().map(|v| v * v).sum();
        if ss_tot > 0.0 {
            r2_sum += 1.0 - ss_res / ss_tot;
        }
    }

    // Column-normalize so the importance convention matches the
    // matrix-exact variant.
    let mut normalized = importance.clone();
    for j in 0..k_true {
        let mass: f64 = importance.column(j).iter().sum();
        if mass > 0.0 {
            for i in 0..k_pred {
                normalized[(i, j)] /= mass;
            }
        }
    }
    let (disentanglement, completeness) = dci_scores(&normalized);
    Ok(DciReport {
        disentanglement,
        completeness,
        informativeness: (r2_sum / k_true as f64).clamp(0.0, 1.0),
        importance: normalized,
        weighting: "column-mass",
    })
}

/// Mutual-information gap: discretizes both sides into equal-width bins and
/// averages, per true factor, the gap between the two largest mutual
/// informations normalized by the factor entropy. Zero-entropy factors are
/// excluded with a warning.
pub fn mig(z_true: &Matrix, z_pred: &Matrix, bins: usize) -> Result<f64> {
    let n = z_true.rows();
    if z_pred.rows() != n {
        return Err(Error::DimensionMismatch {
            context: "z_true and z_pred disagree on sample count".into(),
        });
    }
    if n <= 100 {
        return Err(Error::Config(format!("MIG needs n > 100, got {n}")));
    }
    let true_bins: Vec<Vec<usize>> = (0..z_true.cols())
        .map(|j| discretize(&z_true.column(j), bins))
        .collect();
    let pred_bins: Vec<Vec<usize>> = (0..z_pred.cols())
        .map(|j| discretize(&z_pred.column(j), bins))
        .collect();

    let mut gaps = Vec::new();
    for (j, tb) in true_bins.iter().enumerate() {
        let h = entropy_of_bins(tb, bins);
        if h <= 0.0 {
            log::warn!("true factor {j} has zero entropy; excluded from MIG");
            continue;
        }
        let mut mis: Vec<f64> = pred_bins
            .iter()
            .map(|pb| mutual_information(pb, tb, bins))
            .collect();
        mis.sort_by(|a, b| b.total_cmp(a));
        let top1 = mis.first().copied().unwrap_or(0.0);
        let top2 = mis.get(1).copied().unwrap_or(0.0);
        gaps.push(((top1 - top2) / h).clamp(0.0, 1.0));
    }
    if gaps.is_empty() {
        return Err(Error::Config("all true factors have zero entropy".into()));
    }
    Ok(gaps.iter().sum::<f64>() / gaps.len() as f64)
}

fn discretize(values: &[f64], bins: usize) -> Vec<usize> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = hi - lo;
    values
        .iter()
        .map(|&v| {
            if width <= 0.0 {
                0
            } else {
                (((v - lo) / width * bins as f64) as usize).min(bins - 1)
            }
        })
        .collect()
}

fn entropy_of_bins(assignments: &[usize], bins: usize) -> f64 {
    let mut counts = vec![0usize; bins];
    for &b in assignments {
        counts[b] += 1;
    }
    let n = assignments.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn mutual_information(a: &[usize], b: &[usize], bins: usize) -> f64 {
    let n = a.len() as f64;
    let mut joint = vec![0usize; bins * bins];
    let mut ma = vec![0usize; bins];
    let mut mb = vec![0usize; bins];
    for (&x, &y) in a.iter().zip(b) {
        joint[x * bins + y] += 1;
        ma[x] += 1;
        mb[y] += 1;
    }
    let mut mi = 0.0;
    for x in 0..bins {
        for y in 0..bins {
            let c = joint[x * bins + y];
            if c == 0 {
                continue;
            }
            let pxy = c as f64 / n;
            let px = ma[x] as f64 / n;
            let py = mb[y] as f64 / n;
            mi += pxy * (pxy / (px * py)).ln();
        }
    }
    mi.max(0.0)
}

/// Absolute Pearson correlations between matched predicted and true
/// components: computes the `K x K` correlation table, assigns each
/// predicted component its best factor and returns the matched values.
pub fn matched_correlations(z_true: &Matrix, z_pred: &Matrix) -> Result<(Vec<usize>, Vec<f64>)> {
    let k = z_true.cols();
    if z_pred.cols() != k {
        return Err(Error::DimensionMismatch {
            context: "matched correlations need equal component counts".into(),
        });
    }
    let corr = Matrix::from_fn(k, k, |i, j| {
        crate::sampling::pearson(&z_pred.column(i), &z_true.column(j)).abs()
    });
    let assignment = best_assignment(&corr)?;
    let values = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| corr[(i, j)])
        .collect();
    Ok((assignment, values))
}

/// Header for the compact per-run CSV export.
pub fn short_csv_header() -> &'static str {
    "method,dataset,seed,dci_d,dci_c,dci_i,mig,residual"
}

/// One compact CSV row; `mig` and `residual` may be absent.
pub fn short_csv_row(
    method: &str,
    dataset: &str,
    seed: u64,
    dci: &DciReport,
    mig: Option<f64>,
    residual: Option<f64>,
) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "null".to_string(), |x| format!("{x:.9e}"));
    format!(
        "{method},{dataset},{seed},{:.9e},{:.9e},{:.9e},{},{}",
        dci.disentanglement,
        dci.completeness,
        dci.informativeness,
        fmt(mig),
        fmt(residual)
    )
}
