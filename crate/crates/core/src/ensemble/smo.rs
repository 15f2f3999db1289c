use crate::ensemble::KernelSpec;
use crate::error::{Error, Result};

/// Curvature floor for non-positive-definite pairs.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: KernelSpec,
    /// Maximal KKT violation accepted at convergence.
    pub kkt_tol: f64,
    /// Iteration budget in units of the training-set size.
    pub max_passes: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 10.0,
            kernel: KernelSpec::default(),
            kkt_tol: 1e-3,
            max_passes: 1000,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::param("C", format!("must be positive, got {}", self.c)));
        }
        if !(self.kkt_tol > 0.0) {
            return Err(Error::param("kkt_tol", format!("must be positive, got {}", self.kkt_tol)));
        }
        if self.max_passes == 0 {
            return Err(Error::param("max_passes", "must be at least 1"));
        }
        self.kernel.validate()
    }
}

/// Decision function `f(x) = Σ α_i y_i K(x_i, x) − b` over the support vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub kernel: KernelSpec,
    pub support: Vec<Vec<f64>>,
    pub labels: Vec<i8>,
    pub alphas: Vec<f64>,
    pub b: f64,
    pub c: f64,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.support.first().map_or(0, |s| s.len())
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if !self.support.is_empty() && x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.decision_unchecked(x))
    }

    pub(crate) fn decision_unchecked(&self, x: &[f64]) -> f64 {
        let s: f64 = self
            .support
            .iter()
            .zip(&self.labels)
            .zip(&self.alphas)
            .map(|((sv, &y), &a)| a * y as f64 * self.kernel.eval_unchecked(sv, x))
            .sum();
        s - self.b
    }
}

/// Label in {−1, +1} (zero margin counts as +1) and the margin value.
pub fn svm_predict(m: &SvmModel, x: &[f64]) -> Result<(i8, f64)> {
    let f = m.decision(x)?;
    Ok((if f >= 0.0 { 1 } else { -1 }, f))
}

/// Full solver state, for inspection.
#[derive(Debug, Clone)]
pub struct SmoOutcome {
    pub model: SvmModel,
    /// Multiplier of every training point, zeros included.
    pub alpha: Vec<f64>,
    /// Per-sample upper bounds.
    pub bounds: Vec<f64>,
    /// Dual objective `Σα − ½ΣΣ α_i α_j y_i y_j K_ij` before the first and after every update.
    pub objective: Vec<f64>,
    pub iterations: usize,
    /// Maximal KKT violation at exit.
    pub violation: f64,
}

pub fn svm_train(xs: &[Vec<f64>], ys: &[i8], weights: Option<&[f64]>, p: &SvmParams) -> Result<SvmModel> {
    svm_train_traced(xs, ys, weights, p).map(|o| o.model)
}

/// Solves the soft-margin dual with per-sample bounds `C_i = C · w_i · n`,
/// where the weights are normalized to sum to one (uniform when absent).
/// Working pairs follow the second-order maximal-violating-pair rule.
pub fn svm_train_traced(xs: &[Vec<f64>], ys: &[i8], weights: Option<&[f64]>, p: &SvmParams) -> Result<SmoOutcome> {
    p.validate()?;
    let n = xs.len();
    if ys.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: ys.len() });
    }
    if ys.iter().any(|&y| y != 1 && y != -1) {
        return Err(Error::InvalidData("labels must be -1 or +1".into()));
    }
    if !(ys.contains(&1) && ys.contains(&-1)) {
        return Err(Error::InvalidData("SVM training needs both classes".into()));
    }
    let dim = xs[0].len();
    if let Some(bad) = xs.iter().find(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
    }
    let bounds: Vec<f64> = match weights {
        None => vec![p.c; n],
        Some(w) => {
            if w.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: w.len() });
            }
            if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidData("sample weights must be finite and non-negative".into()));
            }
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return Err(Error::InvalidData("sample weights sum to zero".into()));
            }
            w.iter().map(|v| p.c * v / total * n as f64).collect()
        }
    };

    let y: Vec<f64> = ys.iter().map(|&v| v as f64).collect();
    // Q_ij = y_i y_j K(x_i, x_j)
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = y[i] * y[j] * p.kernel.eval_unchecked(&xs[i], &xs[j]);
            q[i * n + j] = v;
            q[j * n + i] = v;
        }
    }
    let qd: Vec<f64> = (0..n).map(|i| q[i * n + i]).collect();

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let objective_of = |alpha: &[f64], grad: &[f64]| -0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();
    let mut objective = vec![0.0];
    let max_iter = p.max_passes.saturating_mul(n.max(1));
    let mut iterations = 0;
    let violation = loop {
        let (pair, gap) = select_pair(&q, &qd, &y, &alpha, &grad, &bounds, n);
        let (i, j) = match pair {
            Some(ij) if gap >= p.kkt_tol => ij,
            _ => break gap.max(0.0),
        };
        if iterations >= max_iter {
            return Err(Error::NoConvergence {
                iterations,
                violation: gap,
            });
        }
        iterations += 1;

        let (ci, cj) = (bounds[i], bounds[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = q[i * n + j];
        if y[i] != y[j] {
            let quad = positive(qd[i] + qd[j] + 2.0 * qij);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let quad = positive(qd[i] + qd[j] - 2.0 * qij);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q[t * n + i] * di + q[t * n + j] * dj;
        }
        objective.push(objective_of(&alpha, &grad));
    };

    let b = bias(&y, &alpha, &grad, &bounds);
    let mut model = SvmModel {
        kernel: p.kernel,
        support: Vec::new(),
        labels: Vec::new(),
        alphas: Vec::new(),
        b,
        c: p.c,
    };
    for i in 0..n {
        if alpha[i] > 0.0 {
            model.support.push(xs[i].clone());
            model.labels.push(ys[i]);
            model.alphas.push(alpha[i]);
        }
    }
    Ok(SmoOutcome {
        model,
        alpha,
        bounds,
        objective,
        iterations,
        violation,
    })
}

fn positive(quad: f64) -> f64 {
    if quad > 0.0 {
        quad
    } else {
        TAU
    }
}

/// Second-order working-pair selection. Returns the pair (if any) and the
/// current maximal violation `m(α) − M(α)`.
fn select_pair(
    q: &[f64],
    qd: &[f64],
    y: &[f64],
    alpha: &[f64],
    grad: &[f64],
    bounds: &[f64],
    n: usize,
) -> (Option<(usize, usize)>, f64) {
    let mut gmax = f64::NEG_INFINITY;
    let mut i_sel = None;
    for t in 0..n {
        let can_up = if y[t] > 0.0 { alpha[t] < bounds[t] } else { alpha[t] > 0.0 };
        if can_up && -y[t] * grad[t] >= gmax {
            gmax = -y[t] * grad[t];
            i_sel = Some(t);
        }
    }
    let Some(i) = i_sel else {
        return (None, 0.0);
    };
    let mut gmax2 = f64::NEG_INFINITY;
    let mut j_sel = None;
    let mut best = f64::INFINITY;
    for t in 0..n {
        let can_down = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < bounds[t] };
        if !can_down {
            continue;
        }
        let yg = y[t] * grad[t];
        gmax2 = gmax2.max(yg);
        let diff = gmax + yg;
        if diff > 0.0 {
            // y_i y_t Q_it = K_it
            let quad = positive(qd[i] + qd[t] - 2.0 * y[i] * y[t] * q[i * n + t]);
            let obj = -diff * diff / quad;
            if obj <= best {
                best = obj;
                j_sel = Some(t);
            }
        }
    }
    let gap = gmax + gmax2;
    (j_sel.map(|j| (i, j)), if gap.is_finite() { gap } else { 0.0 })
}

/// Average of `y_i G_i` over free multipliers, or the midpoint of the feasible
/// interval when none is free.
fn bias(y: &[f64], alpha: &[f64], grad: &[f64], bounds: &[f64]) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= bounds[t] {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn dual_objective(xs: &[Vec<f64>], ys: &[i8], k: &KernelSpec, alpha: &[f64]) -> f64 {
        let mut s: f64 = alpha.iter().sum();
        for i in 0..xs.len() {
            for j in 0..xs.len() {
                s -= 0.5 * alpha[i] * alpha[j] * (ys[i] * ys[j]) as f64 * k.eval_unchecked(&xs[i], &xs[j]);
            }
        }
        s
    }

    /// Exact dual optimum by enumerating, for every point, whether its
    /// multiplier sits at 0, at C or strictly between, and solving the
    /// equality-constrained stationarity system of each pattern.
    pub(crate) fn active_set_oracle(xs: &[Vec<f64>], ys: &[i8], k: &KernelSpec, c: f64) -> f64 {
        let n = xs.len();
        let y: Vec<f64> = ys.iter().map(|&v| v as f64).collect();
        let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k.eval_unchecked(&xs[i], &xs[j]));
        let mut best = 0.0f64;
        for code in 0..3usize.pow(n as u32) {
            let mut state = vec![0u8; n];
            let mut c_ = code;
            for s in state.iter_mut() {
                *s = (c_ % 3) as u8;
                c_ /= 3;
            }
            let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
            let mut alpha: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
            if !free.is_empty() {
                let m = free.len();
                let mut a = DMatrix::zeros(m + 1, m + 1);
                let mut rhs = DVector::zeros(m + 1);
                for (r, &i) in free.iter().enumerate() {
                    for (s, &j) in free.iter().enumerate() {
                        a[(r, s)] = q[(i, j)];
                    }
                    a[(r, m)] = y[i];
                    a[(m, r)] = y[i];
                    let bound_part: f64 = (0..n).filter(|&j| state[j] == 1).map(|j| q[(i, j)] * c).sum();
                    rhs[r] = 1.0 - bound_part;
                }
                rhs[m] = -(0..n).filter(|&j| state[j] == 1).map(|j| y[j] * c).sum::<f64>();
                let Ok(sol) = a.clone().svd(true, true).solve(&rhs, 1e-12) else { continue };
                if (&a * &sol - &rhs).norm() > 1e-8 {
                    continue;
                }
                for (r, &i) in free.iter().enumerate() {
                    alpha[i] = sol[r];
                }
            }
            let feasible = alpha.iter().all(|&a| (-1e-9..=c + 1e-9).contains(&a))
                && alpha.iter().zip(&y).map(|(a, y)| a * y).sum::<f64>().abs() < 1e-8;
            if feasible {
                best = best.max(dual_objective(xs, ys, k, &alpha));
            }
        }
        best
    }

    /// Checks the optimality conditions on `y_i f(x_i)` for every training point.
    pub(crate) fn kkt_violation(xs: &[Vec<f64>], ys: &[i8], o: &SmoOutcome) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..xs.len() {
            let yf = ys[i] as f64 * o.model.decision_unchecked(&xs[i]);
            let v = if o.alpha[i] <= 0.0 {
                (1.0 - yf).max(0.0)
            } else if o.alpha[i] >= o.bounds[i] {
                (yf - 1.0).max(0.0)
            } else {
                (yf - 1.0).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    fn params(kernel: KernelSpec, c: f64, tol: f64) -> SvmParams {
        SvmParams {
            c,
            kernel,
            kkt_tol: tol,
            max_passes: 10_000,
        }
    }

    #[test]
    fn symmetric_pair() {
        let xs = vec![vec![-1.0], vec![1.0]];
        let o = svm_train_traced(&xs, &[-1, 1], None, &params(KernelSpec::Linear, 1e6, 1e-9)).unwrap();
        assert!((o.alpha[0] - 0.5).abs() < 1e-9 && (o.alpha[1] - 0.5).abs() < 1e-9);
        assert!(o.model.b.abs() < 1e-9);
        // Scan α₁ = α₂ = a on a fine grid; Σαy = 0 holds on that line.
        let best_a = (0..=100_000)
            .map(|i| i as f64 * 1e-5)
            .max_by(|a, b| {
                let f = |a: f64| dual_objective(&xs, &[-1, 1], &KernelSpec::Linear, &[a, a]);
                f(*a).total_cmp(&f(*b))
            })
            .unwrap();
        assert!((best_a - 0.5).abs() < 1e-5);
        assert_eq!(svm_predict(&o.model, &[2.0]).unwrap().0, 1);
        let (label, margin) = svm_predict(&o.model, &[0.0]).unwrap();
        assert_eq!(label, 1);
        assert!(margin.abs() < 1e-9);
        assert!((svm_predict(&o.model, &[-0.3]).unwrap().1 + 0.3).abs() < 1e-9);
    }

    fn blobs(seed: u64, n: usize, sep: f64) -> (Vec<Vec<f64>>, Vec<i8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let y: i8 = if i % 2 == 0 { 1 } else { -1 };
            let c = sep * y as f64;
            xs.push(vec![c + rng.random_range(-1.0..1.0), c + rng.random_range(-1.0..1.0)]);
            ys.push(y);
        }
        (xs, ys)
    }

    #[test]
    fn separable_blobs_fit_exactly() {
        for seed in 0..5 {
            let (xs, ys) = blobs(seed, 40, 2.0);
            for k in [KernelSpec::Linear, KernelSpec::Rbf { gamma: 0.5 }] {
                let tol = 1e-4;
                let o = svm_train_traced(&xs, &ys, None, &params(k, 100.0, tol)).unwrap();
                for (x, &y) in xs.iter().zip(&ys) {
                    assert_eq!(svm_predict(&o.model, x).unwrap().0, y);
                }
                assert!(kkt_violation(&xs, &ys, &o) <= tol);
                let s: f64 = o.model.alphas.iter().zip(&o.model.labels).map(|(a, &y)| a * y as f64).sum();
                assert!(s.abs() < 1e-6);
                assert!(o.model.alphas.iter().all(|&a| a > 0.0 && a <= 100.0));
            }
        }
    }

    #[test]
    fn free_support_vectors_sit_on_the_margin() {
        let (xs, ys) = blobs(9, 30, 1.0);
        let tol = 1e-4;
        let o = svm_train_traced(&xs, &ys, None, &params(KernelSpec::Rbf { gamma: 1.0 }, 5.0, tol)).unwrap();
        let mut checked = 0;
        for i in 0..xs.len() {
            if o.alpha[i] > 0.0 && o.alpha[i] < o.bounds[i] {
                let m = o.model.decision(&xs[i]).unwrap();
                assert!((m.abs() - 1.0).abs() <= 10.0 * tol);
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn duplicated_data_same_decision() {
        let (xs, ys) = blobs(4, 20, 2.0);
        let p = params(KernelSpec::Linear, 1e4, 1e-10);
        let a = svm_train(&xs, &ys, None, &p).unwrap();
        let xs2: Vec<_> = xs.iter().chain(&xs).cloned().collect();
        let ys2: Vec<_> = ys.iter().chain(&ys).cloned().collect();
        let b = svm_train(&xs2, &ys2, None, &p).unwrap();
        for gx in -5..=5 {
            for gy in -5..=5 {
                let x = [gx as f64, gy as f64];
                let (fa, fb) = (a.decision(&x).unwrap(), b.decision(&x).unwrap());
                assert!((fa - fb).abs() < 1e-6, "{fa} vs {fb}");
            }
        }
    }

    #[test]
    fn input_validation() {
        let p = SvmParams::default();
        assert!(svm_train(&[vec![0.0], vec![1.0]], &[1, 1], None, &p).is_err());
        assert!(svm_train(&[vec![0.0], vec![1.0, 2.0]], &[1, -1], None, &p).is_err());
        assert!(svm_train(&[vec![0.0], vec![1.0]], &[1, -1], Some(&[0.0, 0.0]), &p).is_err());
        let bad = SvmParams { c: 0.0, ..SvmParams::default() };
        assert!(svm_train(&[vec![0.0], vec![1.0]], &[1, -1], None, &bad).is_err());
        let m = svm_train(&[vec![0.0], vec![1.0]], &[1, -1], None, &p).unwrap();
        assert!(svm_predict(&m, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn sample_weights_scale_bounds() {
        let (xs, ys) = blobs(2, 10, 0.3);
        let w: Vec<f64> = (0..10).map(|i| (i + 1) as f64).collect();
        let o = svm_train_traced(&xs, &ys, Some(&w), &params(KernelSpec::Linear, 2.0, 1e-6)).unwrap();
        let total: f64 = w.iter().sum();
        for i in 0..10 {
            assert!((o.bounds[i] - 2.0 * w[i] / total * 10.0).abs() < 1e-12);
            assert!(o.alpha[i] <= o.bounds[i]);
        }
        assert!(kkt_violation(&xs, &ys, &o) <= 1e-6);
    }

    #[test]
    fn small_instances_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in 2..=7 {
            let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
            let mut ys: Vec<i8> = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
            ys[0] = 1;
            ys[1] = -1;
            let k = KernelSpec::Rbf { gamma: 0.7 };
            let c = 1.5;
            let o = svm_train_traced(&xs, &ys, None, &params(k, c, 1e-8)).unwrap();
            let smo = dual_objective(&xs, &ys, &k, &o.alpha);
            let oracle = active_set_oracle(&xs, &ys, &k, c);
            assert!((smo - oracle).abs() < 1e-4, "n {n}: smo {smo} oracle {oracle}");
        }
    }

    proptest! {
        #[test]
        fn dual_objective_never_decreases(seed in 0u64..200) {
            let (xs, mut ys) = blobs(seed, 12, 0.4);
            ys[3] = -ys[3];
            let o = svm_train_traced(&xs, &ys, None, &params(KernelSpec::Rbf { gamma: 0.8 }, 3.0, 1e-6)).unwrap();
            for w in o.objective.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0));
            }
            let recomputed = dual_objective(&xs, &ys, &o.model.kernel, &o.alpha);
            prop_assert!((recomputed - o.objective.last().unwrap()).abs() < 1e-9);
        }
    }
}
