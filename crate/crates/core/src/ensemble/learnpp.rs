use rand::seq::index::sample_weighted;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ensemble::smo::{svm_train, SvmModel, SvmParams};
use crate::ensemble::KernelSpec;
use crate::error::{Error, Result};

/// Lower bound on normalized errors so `log(1/β)` stays finite.
pub const BETA_FLOOR: f64 = 1e-10;
pub const MAX_RETRIES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub c: f64,
    pub kernel: KernelSpec,
    /// Hypotheses generated per batch.
    pub t_k: usize,
    /// Share of the batch drawn as each hypothesis's training subset.
    pub train_fraction: f64,
    pub kkt_tol: f64,
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        let s = SvmParams::default();
        Self {
            c: s.c,
            kernel: s.kernel,
            t_k: 5,
            train_fraction: 0.7,
            kkt_tol: s.kkt_tol,
            max_passes: s.max_passes,
            seed: 0,
        }
    }
}

impl TrainParams {
    pub fn svm(&self) -> SvmParams {
        SvmParams {
            c: self.c,
            kernel: self.kernel,
            kkt_tol: self.kkt_tol,
            max_passes: self.max_passes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_k == 0 {
            return Err(Error::param("T_k", "must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::param(
                "train_fraction",
                format!("must lie in (0, 1), got {}", self.train_fraction),
            ));
        }
        self.svm().validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakHypothesis {
    pub model: SvmModel,
    /// Normalized error of this hypothesis on its batch.
    pub beta: f64,
    pub batch: usize,
    pub iteration: usize,
}

impl WeakHypothesis {
    pub fn vote_weight(&self) -> f64 {
        (1.0 / self.beta).ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub target: String,
    pub hypotheses: Vec<WeakHypothesis>,
    /// Sampling distribution at the end of the last batch.
    pub distribution: Vec<f64>,
    pub batches: usize,
}

impl EnsembleModel {
    pub fn new(target: impl Into<String>) -> Self {
        Self {
            target: target.into(),
            hypotheses: Vec::new(),
            distribution: Vec::new(),
            batches: 0,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<(i8, f64)> {
        learnpp_predict(self, x)
    }
}

/// Diagnostics of one accepted round.
#[derive(Debug, Clone)]
pub struct RoundTrace {
    /// Sampling distribution `S_t` the round drew from.
    pub distribution: Vec<f64>,
    /// Weighted error of the new hypothesis alone.
    pub error: f64,
    pub beta: f64,
    /// Weighted error of the batch composite including the new hypothesis.
    pub composite_error: f64,
    pub composite_beta: f64,
    /// Which batch points the composite classified correctly.
    pub composite_correct: Vec<bool>,
    pub retries: usize,
}

fn normalized(e: f64) -> f64 {
    let e = e.max(BETA_FLOOR);
    e / (1.0 - e)
}

/// Weighted majority over `(weight, predictions)`; ties go to +1.
fn vote(members: &[(f64, Vec<i8>)], i: usize) -> i8 {
    let s: f64 = members.iter().map(|(w, p)| w * p[i] as f64).sum();
    if s >= 0.0 {
        1
    } else {
        -1
    }
}

/// One Learn++ pass over a new batch. Hypotheses are trained on subsets drawn
/// from the batch distribution; a hypothesis is kept only if both it and the
/// weighted majority of this batch's hypotheses so far err on less than half
/// the distribution mass. Correctly classified points then have their weight
/// multiplied by the composite's normalized error. Earlier batches' data is
/// never consulted.
pub fn learnpp_train_batch(
    ens: &mut EnsembleModel,
    xs: &[Vec<f64>],
    ys: &[i8],
    p: &TrainParams,
) -> Result<Vec<RoundTrace>> {
    p.validate()?;
    let n = xs.len();
    if ys.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: ys.len() });
    }
    if !(ys.contains(&1) && ys.contains(&-1)) {
        return Err(Error::InvalidData("batch needs both classes".into()));
    }
    let m = ((p.train_fraction * n as f64).round() as usize).clamp(2, n);
    let batch = ens.batches;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ (batch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let svm = p.svm();

    let mut w = vec![1.0 / n as f64; n];
    let mut members: Vec<(f64, Vec<i8>)> = Vec::new();
    let mut accepted = Vec::new();
    let mut traces = Vec::new();
    for t in 0..p.t_k {
        let total: f64 = w.iter().sum();
        let s: Vec<f64> = w.iter().map(|v| v / total).collect();
        let mut retries = 0;
        let round = loop {
            if retries > MAX_RETRIES {
                return Err(Error::RetriesExhausted { retries: MAX_RETRIES });
            }
            retries += 1;
            let picked = sample_weighted(&mut rng, n, |i| s[i].max(f64::MIN_POSITIVE), m)
                .map_err(|e| Error::InvalidData(format!("sampling the training subset: {e}")))?;
            let idx: Vec<usize> = picked.into_iter().collect();
            let sub_y: Vec<i8> = idx.iter().map(|&i| ys[i]).collect();
            if !(sub_y.contains(&1) && sub_y.contains(&-1)) {
                continue;
            }
            let sub_x: Vec<Vec<f64>> = idx.iter().map(|&i| xs[i].clone()).collect();
            let model = svm_train(&sub_x, &sub_y, None, &svm)?;
            let preds: Vec<i8> = xs
                .iter()
                .map(|x| if model.decision_unchecked(x) >= 0.0 { 1 } else { -1 })
                .collect();
            let error: f64 = (0..n).filter(|&i| preds[i] != ys[i]).map(|i| s[i]).sum();
            if error >= 0.5 {
                continue;
            }
            let beta = normalized(error);
            members.push(((1.0 / beta).ln(), preds));
            let correct: Vec<bool> = (0..n).map(|i| vote(&members, i) == ys[i]).collect();
            let composite_error: f64 = (0..n).filter(|&i| !correct[i]).map(|i| s[i]).sum();
            if composite_error >= 0.5 {
                members.pop();
                continue;
            }
            break (model, error, beta, composite_error, correct, retries - 1);
        };
        let (model, error, beta, composite_error, correct, retries) = round;
        let composite_beta = normalized(composite_error);
        for i in 0..n {
            if correct[i] {
                w[i] *= composite_beta;
            }
        }
        // Renormalize so repeated shrinking cannot underflow.
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        accepted.push(WeakHypothesis {
            model,
            beta,
            batch,
            iteration: t,
        });
        traces.push(RoundTrace {
            distribution: s,
            error,
            beta,
            composite_error,
            composite_beta,
            composite_correct: correct,
            retries,
        });
    }
    ens.hypotheses.extend(accepted);
    ens.distribution = w;
    ens.batches += 1;
    Ok(traces)
}

/// Weighted majority of every hypothesis with weights `log(1/β)`. The score is
/// `(W₊ − W₋)/(W₊ + W₋)`; ties go to +1.
pub fn learnpp_predict(ens: &EnsembleModel, x: &[f64]) -> Result<(i8, f64)> {
    if ens.hypotheses.is_empty() {
        return Err(Error::InvalidData(format!("ensemble `{}` has no hypotheses", ens.target)));
    }
    let (mut pos, mut neg) = (0.0, 0.0);
    for h in &ens.hypotheses {
        let w = h.vote_weight();
        if h.model.decision(x)? >= 0.0 {
            pos += w;
        } else {
            neg += w;
        }
    }
    let total = pos + neg;
    let score = if total > 0.0 { (pos - neg) / total } else { 0.0 };
    Ok((if pos >= neg { 1 } else { -1 }, score))
}
