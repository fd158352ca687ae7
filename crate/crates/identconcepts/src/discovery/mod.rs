//! Concept-discovery methods.
//!
//! Four ways to find a `K x K` transform whose rows are concept directions:
//! PCA (decorrelation), FastICA (independence), and the two mechanism-based
//! criteria, each available as an analytical solve and as SGD on a matrix
//! objective. The disjoint-mechanism objective pushes the rows of
//! `M J_f` towards disjoint pixel supports; dropping the absolute value
//! relaxes it to orthogonal rows (independent mechanisms).

mod loss;
mod sgd;
mod solvers;

pub use loss::{arn, loss, loss_det, loss_det_grad, loss_grad};
pub use sgd::{sgd_discover, InitKind, LossKind, OptimizerKind, SgdConfig};
pub use solvers::{dma_analytical, fastica, ima_analytical, pca};

use crate::error::{Error, Result};
use crate::numerics::{condition_number, Matrix};
use serde::{Deserialize, Serialize};

/// Convergence and quality information attached to a discovery result.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub final_loss: Option<f64>,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Discovered concept directions: each row of `m` is one direction in the
/// embedding space. Always full rank.
#[derive(Debug, Clone)]
pub struct ConceptMatrix {
    pub m: Matrix,
    pub method: String,
    pub diagnostics: Diagnostics,
}

const CONDITION_LIMIT: f64 = 1e10;

impl ConceptMatrix {
    /// Wraps a solver output, rejecting rank-deficient transforms.
    pub fn new(m: Matrix, method: impl Into<String>, diagnostics: Diagnostics) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSquare {
                rows: m.rows(),
                cols: m.cols(),
            });
        }
        let cond = condition_number(&m)?;
        if !cond.is_finite() || cond > CONDITION_LIMIT {
            return Err(Error::IllConditioned {
                step: 0,
                condition: cond,
            });
        }
        Ok(ConceptMatrix {
            m,
            method: method.into(),
            diagnostics,
        })
    }

    pub fn k(&self) -> usize {
        self.m.rows()
    }

    /// JSON form: `{"k", "method", "rows", "diagnostics"}`.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<f64>> = (0..self.m.rows()).map(|r| self.m.row(r).to_vec()).collect();
        serde_json::json!({
            "k": self.k(),
            "method": self.method,
            "rows": rows,
            "diagnostics": self.diagnostics,
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let method = value
            .get("method")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Config("concept matrix JSON missing method".into()))?
            .to_string();
        let rows: Vec<Vec<f64>> = serde_json::from_value(
            value
                .get("rows")
                .cloned()
                .ok_or_else(|| Error::Config("concept matrix JSON missing rows".into()))?,
        )?;
        let diagnostics: Diagnostics = value
            .get("diagnostics")
            .cloned()
            .map(serde_json::from_value)
            .transpose()?
            .unwrap_or_default();
        ConceptMatrix::new(Matrix::from_rows(&rows)?, method, diagnostics)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concept_matrix_rejects_singular() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(ConceptMatrix::new(m, "pca", Diagnostics::default()).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let m = Matrix::from_rows(&[vec![0.0, 2.0], vec![-3.0, 0.0]]).unwrap();
        let cm = ConceptMatrix::new(m, "ica", Diagnostics::default()).unwrap();
        let json = cm.to_json();
        assert_eq!(json["k"], 2);
        assert_eq!(json["method"], "ica");
        let back = ConceptMatrix::from_json(&json).unwrap();
        assert_eq!(back.m, cm.m);
        assert_eq!(back.method, "ica");
    }
}
