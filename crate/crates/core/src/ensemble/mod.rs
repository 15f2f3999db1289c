//! Kernel SVMs trained by sequential minimal optimization, and the Learn++
//! ensemble that grows them batch by batch.

mod learnpp;
mod persist;
mod smo;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use learnpp::{
    learnpp_predict, learnpp_train_batch, EnsembleModel, RoundTrace, TrainParams, WeakHypothesis, BETA_FLOOR,
    MAX_RETRIES,
};
pub use persist::{load_models, read_ensemble, save_models, write_ensemble};
pub use smo::{svm_predict, svm_train, svm_train_traced, SmoOutcome, SvmModel, SvmParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
    Polynomial { degree: u32, coef: f64 },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Rbf { gamma: 1.0 }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::param("gamma", format!("must be positive, got {gamma}")))
            }
            KernelSpec::Polynomial { degree: 0, .. } => Err(Error::param("degree", "must be at least 1")),
            KernelSpec::Polynomial { coef, .. } if !coef.is_finite() => {
                Err(Error::param("coef", format!("must be finite, got {coef}")))
            }
            _ => Ok(()),
        }
    }

    /// Kernel value without the length check.
    pub(crate) fn eval_unchecked(&self, x: &[f64], z: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(x, z),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
            KernelSpec::Polynomial { degree, coef } => (dot(x, z) + coef).powi(degree as i32),
        }
    }
}

fn dot(x: &[f64], z: &[f64]) -> f64 {
    x.iter().zip(z).map(|(a, b)| a * b).sum()
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], z: &[f64]) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: z.len(),
        });
    }
    Ok(spec.eval_unchecked(x, z))
}
