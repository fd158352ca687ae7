//! Analytical discovery methods: PCA, FastICA and the closed-form solvers
//! for the disjoint- and independent-mechanism criteria.

use super::{ConceptMatrix, Diagnostics};
use crate::error::{Error, Result};
use crate::numerics::{
    cholesky, inverse, invert_lower_triangular, pivoted_columns, sym_eig, Matrix,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const RANK_TOL: f64 = 1e-10;

/// Column means of a sample matrix (rows are observations).
fn column_means(samples: &Matrix) -> Vec<f64> {
    let n = samples.rows() as f64;
    (0..samples.cols())
        .map(|c| (0..samples.rows()).map(|r| samples[(r, c)]).sum::<f64>() / n)
        .collect()
}

fn centered(samples: &Matrix) -> Matrix {
    let means = column_means(samples);
    Matrix::from_fn(samples.rows(), samples.cols(), |r, c| {
        samples[(r, c)] - means[c]
    })
}

/// Sample covariance (denominator `n - 1`).
pub fn covariance(samples: &Matrix) -> Matrix {
    let c = centered(samples);
    c.gram().scale(1.0 / (samples.rows() as f64 - 1.0))
}

/// PCA directions: rows of the result are the eigenvectors of the sample
/// covariance in descending eigenvalue order, so `M M^T = I` and the
/// projected components are uncorrelated in-sample.
pub fn pca(embeddings: &Matrix) -> Result<ConceptMatrix> {
    let (n, k) = (embeddings.rows(), embeddings.cols());
    if n <= k {
        return Err(Error::Config(format!(
            "PCA needs more samples than dimensions (n = {n}, k = {k})"
        )));
    }
    let cov = covariance(embeddings);
    let (eigs, vecs) = sym_eig(&cov)?;
    let largest = eigs.first().copied().unwrap_or(0.0);
    let smallest = eigs.last().copied().unwrap_or(0.0);
    if smallest <= RANK_TOL * largest.max(f64::MIN_POSITIVE) {
        return Err(Error::RankDeficient {
            smallest: smallest.max(0.0).sqrt(),
            largest: largest.max(0.0).sqrt(),
        });
    }
    ConceptMatrix::new(vecs.transpose(), "pca", Diagnostics::default())
}

/// FastICA with the tanh contrast and symmetric decorrelation.
///
/// Pipeline: center, whiten through the covariance eigendecomposition, then
/// run the fixed-point iteration until the largest per-row rotation falls
/// below `tol`. Non-convergence is reported as a diagnostics warning on the
/// best iterate, not an error.
pub fn fastica(
    embeddings: &Matrix,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<ConceptMatrix> {
    let (n, k) = (embeddings.rows(), embeddings.cols());
    if n <= 10 * k {
        return Err(Error::Config(format!(
            "FastICA needs n >> k (n = {n}, k = {k})"
        )));
    }
    let cov = covariance(embeddings);
    let (eigs, vecs) = sym_eig(&cov)?;
    let largest = eigs.first().copied().unwrap_or(0.0);
    if eigs.last().copied().unwrap_or(0.0) <= RANK_TOL * largest.max(f64::MIN_POSITIVE) {
        return Err(Error::RankDeficient {
            smallest: eigs.last().copied().unwrap_or(0.0).max(0.0).sqrt(),
            largest: largest.max(0.0).sqrt(),
        });
    }
    // Whitening transform: rows of `whiten` map centered embeddings to unit
    // covariance.
    let whiten = Matrix::from_fn(k, k, |r, c| vecs[(c, r)] / eigs[r].sqrt());
    let white = centered(embeddings).matmul(&whiten.transpose()); // n x k

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = Matrix::from_fn(k, k, |_, _| StandardNormal.sample(&mut rng));
    let mut w = symmetric_decorrelation(&init)?;

    let mut iterations = max_iter;
    let mut converged = false;
    for iter in 0..max_iter {
        let scores = white.matmul(&w.transpose()); // n x k
        let g = scores.map(f64::tanh);
        // Mean derivative of the contrast per component.
        let mut g_prime_mean = vec![0.0; k];
        for r in 0..n {
            for c in 0..k {
                let t = g[(r, c)];
                g_prime_mean[c] += 1.0 - t * t;
            }
        }
        for v in &mut g_prime_mean {
            *v /= n as f64;
        }
        // w_new_i = E[g(w_i x) x] - E[g'(w_i x)] w_i
        let mut w_new = g.transpose().matmul(&white).scale(1.0 / n as f64);
        for i in 0..k {
            for j in 0..k {
                w_new[(i, j)] -= g_prime_mean[i] * w[(i, j)];
            }
        }
        let w_next = symmetric_decorrelation(&w_new)?;
        let mut delta = 0.0f64;
        for i in 0..k {
            let dot: f64 = w_next.row(i).iter().zip(w.row(i)).map(|(a, b)| a * b).sum();
            delta = delta.max((1.0 - dot.abs()).abs());
        }
        w = w_next;
        if delta < tol {
            iterations = iter + 1;
            converged = true;
            break;
        }
    }

    let m = w.matmul(&whiten);
    let diagnostics = Diagnostics {
        final_loss: None,
        iterations,
        warning: (!converged).then(|| format!("fastICA did not converge in {max_iter} iterations")),
    };
    ConceptMatrix::new(m, "ica", diagnostics)
}

/// `(W W^T)^(-1/2) W`: makes the rows of `W` orthonormal without favoring
/// any single row.
fn symmetric_decorrelation(w: &Matrix) -> Result<Matrix> {
    let (eigs, vecs) = sym_eig(&w.row_gram())?;
    if eigs.last().copied().unwrap_or(0.0) <= 0.0 {
        return Err(Error::RankDeficient {
            smallest: eigs.last().copied().unwrap_or(0.0),
            largest: eigs.first().copied().unwrap_or(0.0),
        });
    }
    let k = w.rows();
    let mut inv_sqrt = Matrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let mut s = 0.0;
            for e in 0..k {
                s += vecs[(i, e)] * vecs[(j, e)] / eigs[e].sqrt();
            }
            inv_sqrt[(i, j)] = s;
            inv_sqrt[(j, i)] = s;
        }
    }
    Ok(inv_sqrt.matmul(w))
}

/// Analytical disjoint-mechanism solver: picks `K` independent columns of
/// the attribution matrix by greedy pivoting and inverts that submatrix.
pub fn dma_analytical(jac: &Matrix) -> Result<ConceptMatrix> {
    let k = jac.rows();
    let cols = pivoted_columns(jac, k)?;
    let j_reg = Matrix::from_fn(k, k, |r, c| jac[(r, cols[c])]);
    let m = inverse(&j_reg)?;
    ConceptMatrix::new(m, "dma_analytic", Diagnostics::default())
}

const EIGEN_DEGENERACY_TOL: f64 = 1e-8;

/// Analytical independent-mechanism solver from the Jacobian Gram matrices
/// at two points: whitens the first and diagonalizes the second in the
/// whitened frame, so the result simultaneously diagonalizes both.
///
/// Near-equal eigenvalues mean the two points fail the non-equal-ratio
/// condition and the rotation inside the degenerate block is arbitrary;
/// this is reported as a diagnostics warning.
pub fn ima_analytical(sigma_a: &Matrix, sigma_b: &Matrix) -> Result<ConceptMatrix> {
    let chol = cholesky(sigma_a)?;
    let u = invert_lower_triangular(&chol);
    let mut w = u.matmul(sigma_b).matmul(&u.transpose());
    // Symmetrize: the product picks up rounding asymmetry.
    for i in 0..w.rows() {
        for j in (i + 1)..w.cols() {
            let avg = 0.5 * (w[(i, j)] + w[(j, i)]);
            w[(i, j)] = avg;
            w[(j, i)] = avg;
        }
    }
    let (eigs, vecs) = sym_eig(&w)?;
    let scale = eigs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut degenerate = false;
    for i in 0..eigs.len() {
        for j in (i + 1)..eigs.len() {
            if (eigs[i] - eigs[j]).abs() < EIGEN_DEGENERACY_TOL * scale {
                degenerate = true;
            }
        }
    }
    let m = vecs.transpose().matmul(&u);
    let diagnostics = Diagnostics {
        final_loss: None,
        iterations: 0,
        warning: degenerate.then(|| {
            format!("near-equal magnitude ratios: eigenvalues {eigs:?} are degenerate")
        }),
    };
    ConceptMatrix::new(m, "ima_analytic", diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{sample_mixing, FaithfulEncoderOracle};
    use crate::generators::{GeneratorKind, GeneratorSpec};
    use crate::metrics::{dci_from_matrix, decompose_ps};
    use rand::Rng;

    fn random_orthogonal(k: usize, rng: &mut impl Rng) -> Matrix {
        // QR by Gram-Schmidt on a random Gaussian matrix.
        let a = Matrix::from_fn(k, k, |_, _| StandardNormal.sample(rng));
        let mut cols: Vec<Vec<f64>> = (0..k).map(|c| a.column(c)).collect();
        for i in 0..k {
            for j in 0..i {
                let dot: f64 = cols[i].iter().zip(&cols[j]).map(|(x, y)| x * y).sum();
                let prev = cols[j].clone();
                for (v, p) in cols[i].iter_mut().zip(prev) {
                    *v -= dot * p;
                }
            }
            let norm: f64 = cols[i].iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in &mut cols[i] {
                *v /= norm;
            }
        }
        Matrix::from_fn(k, k, |r, c| cols[c][r])
    }

    /// Centers, exactly whitens in-sample, then rescales columns, producing
    /// samples whose sample covariance is exactly diagonal with the given
    /// variances.
    fn exactly_uncorrelated(n: usize, stds: &[f64], rng: &mut impl Rng) -> Matrix {
        let k = stds.len();
        let raw = Matrix::from_fn(n, k, |_, _| rng.random_range(-1.0f64..1.0));
        let cov = covariance(&raw);
        let (eigs, vecs) = sym_eig(&cov).unwrap();
        let whiten = Matrix::from_fn(k, k, |r, c| vecs[(c, r)] / eigs[r].sqrt());
        let white = centered(&raw).matmul(&whiten.transpose());
        Matrix::from_fn(n, k, |r, c| white[(r, c)] * stds[c])
    }

    #[test]
    fn pca_identity_mixing_recovers_axes() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = exactly_uncorrelated(500, &[2.0, 1.0], &mut rng);
        let cm = pca(&z).unwrap();
        // Higher-variance direction first, axes up to sign.
        assert!(cm.m[(0, 0)].abs() > 1.0 - 1e-8);
        assert!(cm.m[(1, 1)].abs() > 1.0 - 1e-8);
        let mmt = cm.m.row_gram();
        assert!(mmt.sub(&Matrix::identity(2)).max_abs() < 1e-8);
    }

    #[test]
    fn pca_recovers_through_orthonormal_mixing() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let z = exactly_uncorrelated(400, &[3.0, 1.7, 0.6, 0.2], &mut rng);
            let d = random_orthogonal(4, &mut rng);
            let e = z.matmul(&d.transpose());
            let cm = pca(&e).unwrap();
            let composite = cm.m.matmul(&d);
            let report = decompose_ps(&composite).unwrap();
            assert!(report.residual < 1e-6, "residual = {}", report.residual);
        }
    }

    #[test]
    fn pca_equal_variances_gives_no_guarantee_but_completes() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z = exactly_uncorrelated(300, &[1.0, 1.0], &mut rng);
        let d = random_orthogonal(2, &mut rng);
        let e = z.matmul(&d.transpose());
        // Degenerate eigenvalues: recovery is not guaranteed, only that the
        // solver produces a valid orthonormal transform.
        let cm = pca(&e).unwrap();
        assert!(cm.m.row_gram().sub(&Matrix::identity(2)).max_abs() < 1e-6);
    }

    #[test]
    fn pca_rejects_rank_deficient_covariance() {
        let n = 50;
        let z = Matrix::from_fn(n, 2, |r, _| r as f64); // two identical columns
        assert!(matches!(pca(&z), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn fastica_separates_uniform_sources() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let z = Matrix::from_fn(n, 3, |_, _| rng.random_range(-1.0f64..1.0));
        let d = Matrix::from_fn(3, 3, |_, _| rng.random_range(-1.0f64..1.0));
        let e = z.matmul(&d.transpose());
        let cm = fastica(&e, 200, 1e-6, 77).unwrap();
        assert!(cm.diagnostics.warning.is_none());
        // Matched absolute correlations between recovered and true sources.
        let recovered = e.matmul(&cm.m.transpose());
        let mut corr = Matrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                corr[(i, j)] = crate::sampling::pearson(&recovered.column(i), &z.column(j)).abs();
            }
        }
        let pi = crate::numerics::best_assignment(&corr).unwrap();
        for (i, &j) in pi.iter().enumerate() {
            assert!(corr[(i, j)] > 0.99, "component {i}: corr {}", corr[(i, j)]);
        }
    }

    #[test]
    fn fastica_whitening_contract() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 5_000;
        let z = Matrix::from_fn(n, 3, |_, _| rng.random_range(-1.0f64..1.0));
        let d = Matrix::from_fn(3, 3, |_, _| rng.random_range(-1.0f64..1.0));
        let e = z.matmul(&d.transpose());
        let cm = fastica(&e, 200, 1e-6, 78).unwrap();
        let recovered = e.matmul(&cm.m.transpose());
        let cov = covariance(&recovered);
        assert!(cov.sub(&Matrix::identity(3)).max_abs() < 1e-6);
    }

    #[test]
    fn fastica_gaussian_sources_complete_without_crash() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 2_000;
        let z = Matrix::from_fn(n, 2, |_, _| StandardNormal.sample(&mut rng));
        let d = Matrix::from_fn(2, 2, |_, _| rng.random_range(-1.0f64..1.0));
        let e = z.matmul(&d.transpose());
        let cm = fastica(&e, 50, 1e-9, 79).unwrap();
        assert!(cm.m.check_finite().is_ok());
    }

    #[test]
    fn dma_on_disjoint_rows_is_permutation_scale_fixed_point() {
        let jac = Matrix::from_rows(&[
            vec![0.0, 0.0, 2.0, 1.0],
            vec![3.0, -1.0, 0.0, 0.0],
        ])
        .unwrap();
        let cm = dma_analytical(&jac).unwrap();
        // Rows stay disjoint: the product M * jac has disjoint supports.
        let transformed = cm.m.matmul(&jac);
        let disjoint = transformed.abs().row_gram();
        assert!(disjoint.max_off_diagonal() < 1e-12);
    }

    #[test]
    fn dma_recovers_mixing_on_fourbars() {
        let spec = GeneratorSpec::new(GeneratorKind::FourBars);
        let mixing = sample_mixing(4, 31, 20.0).unwrap();
        let d = mixing.d.clone();
        let oracle = FaithfulEncoderOracle::new(spec, mixing, 0.0, 31);
        let jac = oracle
            .encoder_jacobian(&vec![0.3, 0.6, 0.4, 0.7].into())
            .unwrap();
        let cm = dma_analytical(&jac.matrix).unwrap();
        let composite = cm.m.matmul(&d);
        let report = decompose_ps(&composite).unwrap();
        assert!(report.residual < 1e-6, "residual = {}", report.residual);
        assert!(dci_from_matrix(&composite).unwrap().disentanglement > 0.999);
    }

    #[test]
    fn dma_fails_on_colorbar() {
        let spec = GeneratorSpec::new(GeneratorKind::ColorBar);
        let mixing = sample_mixing(3, 33, 20.0).unwrap();
        let d = mixing.d.clone();
        let oracle = FaithfulEncoderOracle::new(spec, mixing, 0.0, 33);
        let jac = oracle
            .encoder_jacobian(&vec![0.4, 0.5, 0.6].into())
            .unwrap();
        let cm = dma_analytical(&jac.matrix).unwrap();
        let composite = cm.m.matmul(&d);
        assert!(dci_from_matrix(&composite).unwrap().disentanglement < 0.6);
    }

    #[test]
    fn ima_identity_grams_any_orthogonal_solution() {
        let cm = ima_analytical(&Matrix::identity(3), &Matrix::identity(3)).unwrap();
        assert!(cm.diagnostics.warning.is_some());
        let mmt = cm.m.row_gram();
        assert!(mmt.sub(&Matrix::identity(3)).max_abs() < 1e-8);
    }

    #[test]
    fn ima_recovers_mixing_on_colorbar() {
        let spec = GeneratorSpec::new(GeneratorKind::ColorBar);
        let mixing = sample_mixing(3, 37, 20.0).unwrap();
        let d = mixing.d.clone();
        let oracle = FaithfulEncoderOracle::new(spec, mixing, 0.0, 37);
        let sigma_a = oracle.jacobian_gram(&vec![0.3, 0.25, 0.6].into()).unwrap();
        let sigma_b = oracle.jacobian_gram(&vec![0.7, 0.8, 0.35].into()).unwrap();
        let cm = ima_analytical(&sigma_a, &sigma_b).unwrap();
        assert!(cm.diagnostics.warning.is_none(), "{:?}", cm.diagnostics.warning);
        // Simultaneous diagonalization of both Grams.
        for sigma in [&sigma_a, &sigma_b] {
            let diagd = cm.m.matmul(sigma).matmul(&cm.m.transpose());
            assert!(diagd.max_off_diagonal() <= 1e-6 * diagd.min_diagonal().abs());
        }
        let composite = cm.m.matmul(&d);
        let report = decompose_ps(&composite).unwrap();
        assert!(report.residual < 1e-5, "residual = {}", report.residual);
    }

    #[test]
    fn ima_degenerates_on_fourbars() {
        let spec = GeneratorSpec::new(GeneratorKind::FourBars);
        let mixing = sample_mixing(4, 39, 20.0).unwrap();
        let d = mixing.d.clone();
        let oracle = FaithfulEncoderOracle::new(spec, mixing, 0.0, 39);
        let sigma_a = oracle.jacobian_gram(&vec![0.3, 0.25, 0.6, 0.4].into()).unwrap();
        let sigma_b = oracle.jacobian_gram(&vec![0.7, 0.8, 0.35, 0.6].into()).unwrap();
        let cm = ima_analytical(&sigma_a, &sigma_b).unwrap();
        assert!(cm.diagnostics.warning.is_some());
        let composite = cm.m.matmul(&d);
        assert!(dci_from_matrix(&composite).unwrap().disentanglement < 0.6);
    }
}
