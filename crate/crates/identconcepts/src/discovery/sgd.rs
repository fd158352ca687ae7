//! Stochastic gradient descent on the matrix objectives over a collection
//! of attribution matrices.

use super::loss::{loss, loss_det, loss_det_grad, loss_grad};
use super::{ConceptMatrix, Diagnostics};
use crate::error::{Error, Result};
use crate::numerics::{condition_number, Matrix};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    RmsProp,
    PlainSgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Squared Frobenius distance of the normalized row Gram from identity.
    #[default]
    Frobenius,
    /// Hadamard-inequality gap of the unnormalized row Gram.
    Determinant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    #[default]
    Identity,
    SeededRandom,
}

/// Configuration of the SGD discovery loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default)]
    pub init: InitKind,
    #[serde(default)]
    pub seed: u64,
}

fn default_learning_rate() -> f64 {
    1e-3
}

fn default_batch_size() -> usize {
    48
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: default_learning_rate(),
            epochs: 500,
            batch_size: default_batch_size(),
            optimizer: OptimizerKind::default(),
            loss: LossKind::default(),
            init: InitKind::default(),
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

const RMSPROP_DECAY: f64 = 0.9;
const RMSPROP_EPSILON: f64 = 1e-8;
const SGD_CONDITION_LIMIT: f64 = 1e8;

/// Minimizes the configured objective over the given attribution matrices,
/// making `epochs` shuffled passes in mini-batches of `batch_size`.
/// Deterministic per seed. Returns the transform with the final mean loss
/// in its diagnostics.
pub fn sgd_discover(
    jacobians: &[Matrix],
    cfg: &SgdConfig,
    take_abs: bool,
) -> Result<ConceptMatrix> {
    cfg.validate()?;
    let first = jacobians
        .first()
        .ok_or_else(|| Error::Config("sgd_discover needs at least one Jacobian".into()))?;
    let k = first.rows();
    if jacobians.iter().any(|j| j.rows() != k) {
        return Err(Error::DimensionMismatch {
            context: "attribution matrices disagree on K".into(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut m = match cfg.init {
        InitKind::Identity => Matrix::identity(k),
        InitKind::SeededRandom => {
            let mut m = Matrix::identity(k);
            for r in 0..k {
                for c in 0..k {
                    m[(r, c)] += rng.random_range(-0.1..0.1);
                }
            }
            m
        }
    };

    let (loss_fn, grad_fn): (
        fn(&Matrix, &Matrix, bool) -> Result<f64>,
        fn(&Matrix, &Matrix, bool) -> Result<Matrix>,
    ) = match cfg.loss {
        LossKind::Frobenius => (loss, loss_grad),
        LossKind::Determinant => (loss_det, loss_det_grad),
    };

    let mut second_moment = Matrix::zeros(k, k);
    let mut order: Vec<usize> = (0..jacobians.len()).collect();
    let batches_per_epoch = jacobians.len().div_ceil(cfg.batch_size);
    let total_steps = (cfg.epochs * batches_per_epoch).max(1);
    let mut step = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            // Cosine-annealed learning rate: RMSProp's normalized steps
            // otherwise keep bouncing at an amplitude set by the learning
            // rate and never settle onto the exact minimizer.
            let progress = step as f64 / total_steps as f64;
            let lr = cfg.learning_rate
                * 0.5
                * (1.0 + (std::f64::consts::PI * progress).cos());
            let mut grad = Matrix::zeros(k, k);
            let mut batch_loss = 0.0;
            for &idx in batch {
                grad = grad.add(&grad_fn(&m, &jacobians[idx], take_abs)?);
                batch_loss += loss_fn(&m, &jacobians[idx], take_abs)?;
            }
            let scale = 1.0 / batch.len() as f64;
            grad = grad.scale(scale);
            batch_loss *= scale;
            if !batch_loss.is_finite() || grad.check_finite().is_err() {
                return Err(Error::NonFiniteLoss { step });
            }
            match cfg.optimizer {
                OptimizerKind::RmsProp => {
                    for r in 0..k {
                        for c in 0..k {
                            let g = grad[(r, c)];
                            let v = RMSPROP_DECAY * second_moment[(r, c)]
                                + (1.0 - RMSPROP_DECAY) * g * g;
                            second_moment[(r, c)] = v;
                            m[(r, c)] -= lr * g / (v.sqrt() + RMSPROP_EPSILON);
                        }
                    }
                }
                OptimizerKind::PlainSgd => {
                    for r in 0..k {
                        for c in 0..k {
                            m[(r, c)] -= lr * grad[(r, c)];
                        }
                    }
                }
            }
            step += 1;
            let cond = condition_number(&m)?;
            if !cond.is_finite() || cond > SGD_CONDITION_LIMIT {
                return Err(Error::IllConditioned {
                    step,
                    condition: cond,
                });
            }
        }
    }

    let mut final_loss = 0.0;
    for jac in jacobians {
        final_loss += loss_fn(&m, jac, take_abs)?;
    }
    final_loss /= jacobians.len() as f64;

    let method = if take_abs { "dma_sgd" } else { "ima_sgd" };
    ConceptMatrix::new(
        m,
        method,
        Diagnostics {
            final_loss: Some(final_loss),
            iterations: step,
            warning: None,
        },
    )
}
