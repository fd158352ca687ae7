//! Analytical faithful encoders.
//!
//! A faithful encoder maps generated images back to embeddings `D z` for a
//! full-rank mixing `D`, while its Jacobian annihilates every pixel
//! direction the generator cannot produce. The canonical construction used
//! here is `J_f = D J_g^+`: the unique minimal-norm choice satisfying both
//! requirements. The encoder is represented as an oracle over embeddings and
//! Jacobians; no pixel-domain inverse is ever materialized.

use crate::error::{Error, Result};
use crate::generators::{jacobian, ComponentVector, GeneratorSpec};
use crate::numerics::{condition_number, pinv, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Full-rank square mixing applied to the ground-truth components by the
/// embedding space.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    pub d: Matrix,
    pub seed: u64,
    pub condition_number: f64,
}

const MAX_MIXING_REJECTIONS: usize = 1000;

/// Draws a `k x k` mixing with i.i.d. uniform entries on `[-1, 1]`,
/// resampling until the condition number is at most `max_condition`.
/// Deterministic per seed.
pub fn sample_mixing(k: usize, seed: u64, max_condition: f64) -> Result<MixingMatrix> {
    assert!(k >= 2, "mixing needs at least two components");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_MIXING_REJECTIONS {
        let d = Matrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
        let cond = condition_number(&d)?;
        if cond <= max_condition {
            return Ok(MixingMatrix {
                d,
                seed,
                condition_number: cond,
            });
        }
    }
    Err(Error::MixingRejected {
        attempts: MAX_MIXING_REJECTIONS,
        bound: max_condition,
    })
}

/// Encoder Jacobian (or any homogeneous attribution matrix that scales
/// linearly with the encoder): `K x L`, row `k` attributes embedding
/// dimension `k` over pixels.
#[derive(Debug, Clone)]
pub struct EncoderJacobian {
    pub matrix: Matrix,
    pub at: ComponentVector,
}

/// Oracle over the canonical faithful encoder for a generator and mixing:
/// exposes embeddings `D z` and Jacobians `D J_g(z)^+`, optionally corrupted
/// by seeded Gaussian noise.
#[derive(Debug, Clone)]
pub struct FaithfulEncoderOracle {
    pub generator: GeneratorSpec,
    pub mixing: MixingMatrix,
    /// Noise level relative to the root-mean-square entry magnitude of the
    /// noiseless Jacobian; 0 disables noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl FaithfulEncoderOracle {
    pub fn new(generator: GeneratorSpec, mixing: MixingMatrix, noise_sigma: f64, seed: u64) -> Self {
        FaithfulEncoderOracle {
            generator,
            mixing,
            noise_sigma,
            seed,
        }
    }

    /// Embedding of the image generated at `z`: exactly `D z`.
    pub fn embed(&self, z: &ComponentVector) -> Vec<f64> {
        self.mixing.d.matvec(&z.values)
    }

    /// Encoder Jacobian at `z`. With `noise_sigma > 0`, i.i.d. Gaussian
    /// noise is added to every entry, scaled by the RMS entry magnitude of
    /// the clean Jacobian so the level is comparable across generators and
    /// resolutions. Deterministic per (seed, z, noise_sigma).
    pub fn encoder_jacobian(&self, z: &ComponentVector) -> Result<EncoderJacobian> {
        let gen_jac = jacobian(&self.generator, z)?;
        let clean = self.mixing.d.matmul(&pinv(&gen_jac.matrix)?);
        let matrix = if self.noise_sigma > 0.0 {
            let entries = (clean.rows() * clean.cols()) as f64;
            let scale = self.noise_sigma * clean.frobenius_norm() / entries.sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &z.values));
            let mut noisy = clean;
            for r in 0..noisy.rows() {
                for c in 0..noisy.cols() {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    noisy[(r, c)] += scale * n;
                }
            }
            noisy
        } else {
            clean
        };
        Ok(EncoderJacobian {
            matrix,
            at: z.clone(),
        })
    }

    /// Gram matrix `J_f J_f^T` of the encoder Jacobian at `z`.
    pub fn jacobian_gram(&self, z: &ComponentVector) -> Result<Matrix> {
        Ok(self.encoder_jacobian(z)?.matrix.row_gram())
    }
}

/// Stable per-point stream key so noise depends only on (seed, z).
fn derive_seed(base: u64, values: &[f64]) -> u64 {
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15;
    for v in values {
        h ^= v.to_bits();
        h = splitmix(h);
    }
    h
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{GeneratorKind, GeneratorSpec};
    use rand::Rng;

    fn oracle(kind: GeneratorKind, seed: u64, noise: f64) -> FaithfulEncoderOracle {
        let spec = GeneratorSpec::new(kind);
        let mixing = sample_mixing(spec.component_count(), seed, 20.0).unwrap();
        FaithfulEncoderOracle::new(spec, mixing, noise, seed)
    }

    fn random_interior(k: usize, rng: &mut impl Rng) -> ComponentVector {
        (0..k)
            .map(|_| rng.random_range(0.1..0.9))
            .collect::<Vec<_>>()
            .into()
    }

    #[test]
    fn mixing_is_deterministic_and_conditioned() {
        let a = sample_mixing(4, 11, 20.0).unwrap();
        let b = sample_mixing(4, 11, 20.0).unwrap();
        assert_eq!(a.d, b.d);
        assert!(a.condition_number <= 20.0);
        for &v in a.d.data() {
            assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn mixing_rejects_impossible_bound() {
        assert!(matches!(
            sample_mixing(3, 5, 1.0),
            Err(Error::MixingRejected { .. })
        ));
    }

    #[test]
    fn embed_is_exactly_linear() {
        let o = oracle(GeneratorKind::FourBars, 3, 0.0);
        let z: ComponentVector = vec![0.2, 0.4, 0.6, 0.8].into();
        let e = o.embed(&z);
        let direct = o.mixing.d.matvec(&z.values);
        assert_eq!(e, direct);
        let zero = o.embed(&vec![0.0; 4].into());
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn faithfulness_identity_holds_on_both_generators() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for kind in [GeneratorKind::FourBars, GeneratorKind::ColorBar] {
            let o = oracle(kind, 7, 0.0);
            let k = o.generator.component_count();
            for _ in 0..20 {
                let z = random_interior(k, &mut rng);
                let jf = o.encoder_jacobian(&z).unwrap().matrix;
                let jg = jacobian(&o.generator, &z).unwrap().matrix;
                let product = jf.matmul(&jg);
                let err = product.sub(&o.mixing.d).frobenius_norm();
                assert!(
                    err <= 1e-8 * o.mixing.d.frobenius_norm(),
                    "{kind:?}: J_f J_g != D (err {err})"
                );
            }
        }
    }

    #[test]
    fn kernel_invariance_annihilates_orthogonal_complement() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let o = oracle(GeneratorKind::FourBars, 9, 0.0);
        let z = random_interior(4, &mut rng);
        let jf = o.encoder_jacobian(&z).unwrap().matrix;
        let jg = jacobian(&o.generator, &z).unwrap().matrix;
        let jg_pinv = pinv(&jg).unwrap();
        let jf_norm = jf.frobenius_norm();
        for _ in 0..20 {
            let v: Vec<f64> = (0..jg.rows()).map(|_| rng.random_range(-1.0..1.0)).collect();
            // Project v onto the orthogonal complement of span(J_g).
            let coeffs = jg_pinv.matvec(&v);
            let in_span = jg.matvec(&coeffs);
            let v_perp: Vec<f64> = v.iter().zip(&in_span).map(|(a, b)| a - b).collect();
            let v_norm = v_perp.iter().map(|x| x * x).sum::<f64>().sqrt();
            let image = jf.matvec(&v_perp);
            let image_norm = image.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(image_norm <= 1e-8 * jf_norm * v_norm);
        }
    }

    #[test]
    fn transfer_lemma_rows_align_with_generator_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let o = oracle(GeneratorKind::ColorBar, 13, 0.0);
        let z = random_interior(3, &mut rng);
        let jf = o.encoder_jacobian(&z).unwrap().matrix;
        let jg = jacobian(&o.generator, &z).unwrap().matrix;
        let unmixed = crate::numerics::inverse(&o.mixing.d).unwrap().matmul(&jf);
        // Row k of D^-1 J_f must be proportional to column k of J_g.
        for k in 0..3 {
            let row = unmixed.row(k);
            let col = jg.column(k);
            let dot: f64 = row.iter().zip(&col).map(|(a, b)| a * b).sum();
            let nr = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nc = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(dot.abs() / (nr * nc) > 1.0 - 1e-8);
        }
    }

    #[test]
    fn noise_is_deterministic_per_seed_and_point() {
        let o = oracle(GeneratorKind::FourBars, 21, 0.1);
        let z: ComponentVector = vec![0.3, 0.5, 0.7, 0.4].into();
        let a = o.encoder_jacobian(&z).unwrap().matrix;
        let b = o.encoder_jacobian(&z).unwrap().matrix;
        assert_eq!(a, b);
        // A different point gets a different noise draw.
        let z2: ComponentVector = vec![0.3, 0.5, 0.7, 0.41].into();
        let c = o.encoder_jacobian(&z2).unwrap().matrix;
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn noise_scale_tracks_row_norms() {
        let clean = oracle(GeneratorKind::FourBars, 21, 0.0);
        let noisy = FaithfulEncoderOracle::new(clean.generator, clean.mixing.clone(), 0.1, 21);
        let z: ComponentVector = vec![0.3, 0.5, 0.7, 0.4].into();
        let a = clean.encoder_jacobian(&z).unwrap().matrix;
        let b = noisy.encoder_jacobian(&z).unwrap().matrix;
        let diff = b.sub(&a);
        // Empirical std of the added noise should match the nominal scale
        // within Monte-Carlo slack.
        let entries = (a.rows() * a.cols()) as f64;
        let nominal = 0.1 * a.frobenius_norm() / entries.sqrt();
        let observed = diff.frobenius_norm() / entries.sqrt();
        assert!((observed / nominal - 1.0).abs() < 0.15);
    }
}
