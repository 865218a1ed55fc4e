//! Trainers: a non-private weighted logistic baseline, private weighted ERM
//! via objective perturbation, a weighted DP-SGD linear classifier, and a
//! private bagging ensemble.
//!
//! All trainers are deterministic given a seed, return their spent budget
//! computed through the `dp_core` accountant, and carry a convergence
//! certificate where a solver is involved.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::dp_core::{self, PrivacyBudget};
use crate::error::{Error, Result};
use crate::preprocess::ClassWeights;
use crate::sampling;
use crate::stats::sigmoid;

/// Linear scorer: `s(x) = x . beta + intercept`; the predicted label is 1
/// iff `sigmoid(s) >= 0.5` (scores of exactly zero predict 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub beta: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn beta_array(&self) -> Array1<f64> {
        Array1::from_vec(self.beta.clone())
    }

    pub fn score_row(&self, row: &[f64]) -> f64 {
        row.iter()
            .zip(self.beta.iter())
            .map(|(x, b)| x * b)
            .sum::<f64>()
            + self.intercept
    }
}

/// Scores and thresholded labels for a feature matrix.
pub fn predict(model: &LinearModel, x: &Array2<f64>) -> Result<(Array1<f64>, Vec<u8>)> {
    if x.ncols() != model.dim() {
        return Err(Error::invalid(format!(
            "model expects {} features, matrix has {}",
            model.dim(),
            x.ncols()
        )));
    }
    let scores = x.dot(&model.beta_array()) + model.intercept;
    let labels = scores
        .iter()
        .map(|&s| u8::from(sigmoid(s) >= 0.5))
        .collect();
    Ok((scores, labels))
}

// ---------------------------------------------------------------------------
// Weighted logistic objective and the deterministic solver.
// ---------------------------------------------------------------------------

// Internally labels are mapped to {-1, +1}; the logistic loss
// l(y, eta) = ln(1 + e^{-yt eta}) then has |l'| <= 1 and |l''| <= 1/4.
const LOGISTIC_CURVATURE: f64 = 0.25;

fn log1p_exp(z: f64) -> f64 {
    // ln(1 + e^z), stable on both tails.
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// First derivative of the logistic loss in its linear argument:
/// `l'(yt, eta) = -yt * sigmoid(-yt * eta)`.
pub fn logistic_loss_derivative(y_signed: f64, eta: f64) -> f64 {
    -y_signed * sigmoid(-y_signed * eta)
}

struct WeightedLogistic<'a> {
    xa: &'a Array2<f64>,
    y_signed: &'a Array1<f64>,
    weights: &'a Array1<f64>,
    ridge: f64,           // lambda + extra regularizer Delta
    linear: Option<&'a Array1<f64>>, // the noise term b (scaled by 1/n below)
}

impl WeightedLogistic<'_> {
    fn n(&self) -> f64 {
        self.xa.nrows() as f64
    }

    fn value(&self, beta: &Array1<f64>) -> f64 {
        let eta = self.xa.dot(beta);
        let n = self.n();
        let mut v = 0.0;
        for i in 0..self.xa.nrows() {
            v += self.weights[i] * log1p_exp(-self.y_signed[i] * eta[i]);
        }
        v /= n;
        v += 0.5 * self.ridge * beta.dot(beta);
        if let Some(b) = self.linear {
            v += b.dot(beta) / n;
        }
        v
    }

    fn gradient(&self, beta: &Array1<f64>) -> Array1<f64> {
        let eta = self.xa.dot(beta);
        let n = self.n();
        let mut resid = Array1::<f64>::zeros(self.xa.nrows());
        for i in 0..self.xa.nrows() {
            resid[i] = self.weights[i] * logistic_loss_derivative(self.y_signed[i], eta[i]);
        }
        let mut g = self.xa.t().dot(&resid) / n;
        g = g + &(beta * self.ridge);
        if let Some(b) = self.linear {
            g = g + &(b / n);
        }
        g
    }

    fn hessian(&self, beta: &Array1<f64>) -> Array2<f64> {
        let eta = self.xa.dot(beta);
        let n = self.n();
        let d = self.xa.ncols();
        let mut h = Array2::<f64>::zeros((d, d));
        for i in 0..self.xa.nrows() {
            let p = sigmoid(eta[i]);
            let curv = self.weights[i] * p * (1.0 - p) / n;
            let row = self.xa.row(i);
            for a in 0..d {
                let ra = row[a] * curv;
                for b in a..d {
                    h[[a, b]] += ra * row[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                h[[a, b]] = h[[b, a]];
            }
            h[[a, a]] += self.ridge;
        }
        h
    }
}

/// Full-batch gradient descent with backtracking (Armijo) line search,
/// finished by damped Newton steps once the iterate is close.
///
/// The Newton polish exists because Armijo comparisons of the objective
/// saturate in f64 rounding around gradient norms of 1e-9, while the
/// stationarity certificate needs gradients at the 1e-6/n scale. Gradient
/// norms stay computable to machine precision, so the polish accepts a
/// step iff it shrinks the gradient norm.
fn minimize(
    f: &WeightedLogistic<'_>,
    dim: usize,
    tol: f64,
    max_iter: usize,
) -> Result<(Array1<f64>, f64, usize)> {
    let mut beta = Array1::<f64>::zeros(dim);
    let mut value = f.value(&beta);
    let mut step = 1.0f64;
    let coarse_tol = tol.max(1e-7);
    let mut iters = 0usize;
    let mut stalled = false;
    while iters < max_iter {
        let grad = f.gradient(&beta);
        let gnorm = grad.dot(&grad).sqrt();
        if gnorm <= tol {
            return Ok((beta, gnorm, iters));
        }
        if gnorm <= coarse_tol {
            break; // hand over to the polish phase
        }
        iters += 1;
        step = (step * 2.0).min(1e6);
        let gsq = gnorm * gnorm;
        loop {
            let candidate = &beta - &(&grad * step);
            let cand_value = f.value(&candidate);
            if cand_value <= value - 1e-4 * step * gsq {
                beta = candidate;
                value = cand_value;
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                stalled = true;
                break;
            }
        }
        if stalled {
            break;
        }
    }

    // Newton polish. The ridge term keeps the Hessian positive definite.
    for _ in 0..100 {
        let grad = f.gradient(&beta);
        let mut gnorm = grad.dot(&grad).sqrt();
        if gnorm <= tol {
            return Ok((beta, gnorm, iters));
        }
        iters += 1;
        let hessian = f.hessian(&beta);
        let direction = match cholesky_solve(&hessian, &grad) {
            Some(p) => p,
            None => break,
        };
        let mut alpha = 1.0f64;
        let mut improved = false;
        while alpha > 1e-12 {
            let candidate = &beta - &(&direction * alpha);
            let g2 = f.gradient(&candidate);
            let g2norm = g2.dot(&g2).sqrt();
            if g2norm < gnorm {
                beta = candidate;
                gnorm = g2norm;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }

    let grad = f.gradient(&beta);
    let gnorm = grad.dot(&grad).sqrt();
    if gnorm <= tol {
        return Ok((beta, gnorm, iters));
    }
    Err(Error::Convergence {
        iterations: iters,
        grad_norm: gnorm,
        tolerance: tol,
    })
}

/// Solve `H p = g` for symmetric positive definite `H` by Cholesky
/// factorization. Returns `None` if the factorization breaks down.
fn cholesky_solve(h: &Array2<f64>, g: &Array1<f64>) -> Option<Array1<f64>> {
    let n = h.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = h[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[[i, j]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    // Forward then back substitution.
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = g[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Some(x)
}

// ---------------------------------------------------------------------------
// Design-matrix plumbing shared by the ERM trainers.
// ---------------------------------------------------------------------------

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// The training design matrix for the unit-ball trainers.
///
/// With an intercept the raw features (rows inside the unit ball) are scaled
/// by 1/sqrt(2) and a constant 1/sqrt(2) column is appended, so augmented
/// rows stay inside the unit ball as the sensitivity argument requires.
pub fn design_matrix(x: &Array2<f64>, fit_intercept: bool) -> Array2<f64> {
    if !fit_intercept {
        return x.clone();
    }
    let (n, d) = x.dim();
    let mut xa = Array2::<f64>::zeros((n, d + 1));
    xa.slice_mut(ndarray::s![.., ..d]).assign(&(x * INV_SQRT_2));
    xa.column_mut(d).fill(INV_SQRT_2);
    xa
}

fn check_unit_ball(x: &Array2<f64>) -> Result<()> {
    for row in x.axis_iter(Axis(0)) {
        let norm = row.dot(&row).sqrt();
        if norm > 1.0 + 1e-9 {
            return Err(Error::invalid(format!(
                "row norm {norm:.6} exceeds 1; apply bound_features or scale_to_public_unit_ball first"
            )));
        }
    }
    Ok(())
}

fn unpack_model(beta_aug: &Array1<f64>, d: usize, fit_intercept: bool) -> LinearModel {
    if fit_intercept {
        LinearModel {
            beta: beta_aug.iter().take(d).map(|&b| b * INV_SQRT_2).collect(),
            intercept: beta_aug[d] * INV_SQRT_2,
        }
    } else {
        LinearModel {
            beta: beta_aug.to_vec(),
            intercept: 0.0,
        }
    }
}

fn signed_labels(y: &[u8]) -> Array1<f64> {
    Array1::from_iter(y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }))
}

// ---------------------------------------------------------------------------
// Non-private baseline.
// ---------------------------------------------------------------------------

/// Configuration of the non-private weighted logistic baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub fit_intercept: bool,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            lambda: 0.01,
            tol: 1e-8,
            max_iter: 100_000,
            fit_intercept: true,
        }
    }
}

/// Result of the baseline fit.
#[derive(Debug, Clone)]
pub struct LogRegFit {
    pub model: LinearModel,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Deterministic minimizer of the weighted, L2-regularized logistic risk.
pub fn train_logreg_baseline(
    ds: &Dataset,
    w: &ClassWeights,
    cfg: &LogRegConfig,
) -> Result<LogRegFit> {
    if !(cfg.lambda > 0.0) {
        return Err(Error::invalid("lambda must be positive"));
    }
    check_unit_ball(ds.x())?;
    let xa = design_matrix(ds.x(), cfg.fit_intercept);
    let y_signed = signed_labels(ds.y());
    let weights = w.per_row(ds.y());
    let problem = WeightedLogistic {
        xa: &xa,
        y_signed: &y_signed,
        weights: &weights,
        ridge: cfg.lambda,
        linear: None,
    };
    let (beta, grad_norm, iterations) = minimize(&problem, xa.ncols(), cfg.tol, cfg.max_iter)?;
    Ok(LogRegFit {
        model: unpack_model(&beta, ds.dim(), cfg.fit_intercept),
        grad_norm,
        iterations,
    })
}

// ---------------------------------------------------------------------------
// Objective perturbation.
// ---------------------------------------------------------------------------

/// Configuration of the objective-perturbation trainer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErmConfig {
    pub epsilon: f64,
    pub lambda: f64,
    /// Bound on the loss curvature |l''|; 1/4 for the logistic loss.
    pub curvature: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub fit_intercept: bool,
    /// Draw no noise (diagnostic mode; the returned budget is still the
    /// configured epsilon, which only makes sense in tests).
    pub noise_disabled: bool,
}

impl ErmConfig {
    pub fn new(epsilon: f64, lambda: f64) -> Self {
        ErmConfig {
            epsilon,
            lambda,
            curvature: LOGISTIC_CURVATURE,
            tol: 1e-8,
            max_iter: 100_000,
            fit_intercept: true,
            noise_disabled: false,
        }
    }
}

/// Everything needed to audit a private ERM fit.
#[derive(Debug, Clone)]
pub struct ErmCertificate {
    /// Gradient norm of the perturbed objective at the returned optimum.
    pub grad_norm: f64,
    pub iterations: usize,
    /// Effective noise parameter after the curvature correction.
    pub epsilon_prime: f64,
    /// Extra ridge term added when the corrected epsilon went nonpositive.
    pub delta_reg: f64,
    /// The drawn perturbation vector, in design-matrix coordinates.
    pub noise: Array1<f64>,
    /// The optimizer's solution, in design-matrix coordinates.
    pub beta_aug: Array1<f64>,
    pub fit_intercept: bool,
}

#[derive(Debug, Clone)]
pub struct ErmFit {
    pub model: LinearModel,
    pub budget: PrivacyBudget,
    pub certificate: ErmCertificate,
}

/// Draw the perturbation vector with density proportional to
/// `exp(-eps' ||b|| / 2)`: a uniform direction scaled by a Gamma(d, 2/eps')
/// radius.
pub fn sample_objective_noise<R: Rng + ?Sized>(
    d: usize,
    eps_prime: f64,
    rng: &mut R,
) -> Result<Array1<f64>> {
    if !(eps_prime > 0.0) {
        return Err(Error::invalid("eps' must be positive"));
    }
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    let direction = sampling::uniform_sphere(rng, d);
    let radius = sampling::gamma_integer_shape(rng, d as u32, 2.0 / eps_prime);
    Ok(direction * radius)
}

/// Weighted private ERM by objective perturbation.
///
/// Minimizes `(1/n) sum w_i l(y_i, x_i . beta) + (lambda/2)||beta||^2
/// + (1/n) b . beta + (delta_reg/2)||beta||^2` and returns the pure budget
/// `(epsilon, 0)`. Requires rows inside the unit ball and weights in [0, 1].
pub fn train_erm_objective_perturbation<R: Rng + ?Sized>(
    ds: &Dataset,
    w: &ClassWeights,
    cfg: &ErmConfig,
    rng: &mut R,
) -> Result<ErmFit> {
    if !(cfg.epsilon > 0.0) || !cfg.epsilon.is_finite() {
        return Err(Error::invalid("epsilon must be positive and finite"));
    }
    if !(cfg.lambda > 0.0) {
        return Err(Error::invalid("lambda must be positive"));
    }
    if !(cfg.curvature > 0.0) {
        return Err(Error::invalid("curvature bound must be positive"));
    }
    if !(0.0..=1.0).contains(&w.w_class0) || !(0.0..=1.0).contains(&w.w_class1) {
        return Err(Error::invalid("weights must lie in [0, 1]"));
    }
    if ds.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    check_unit_ball(ds.x())?;

    let n = ds.len() as f64;
    let c = cfg.curvature;
    let lambda = cfg.lambda;
    let correction = (1.0 + 2.0 * c / (n * lambda) + c * c / (n * n * lambda * lambda)).ln();
    let mut eps_prime = cfg.epsilon - correction;
    let mut delta_reg = 0.0;
    if eps_prime <= 0.0 {
        delta_reg = c / (n * ((cfg.epsilon / 4.0).exp() - 1.0)) - lambda;
        eps_prime = cfg.epsilon / 2.0;
        if delta_reg <= 0.0 {
            return Err(Error::BudgetInfeasible(format!(
                "lambda {lambda} is too large for epsilon {}: the regularizer branch yields a nonpositive addition",
                cfg.epsilon
            )));
        }
    }

    let xa = design_matrix(ds.x(), cfg.fit_intercept);
    let d_aug = xa.ncols();
    let noise = if cfg.noise_disabled {
        Array1::zeros(d_aug)
    } else {
        sample_objective_noise(d_aug, eps_prime, rng)?
    };

    let y_signed = signed_labels(ds.y());
    let weights = w.per_row(ds.y());
    let problem = WeightedLogistic {
        xa: &xa,
        y_signed: &y_signed,
        weights: &weights,
        ridge: lambda + delta_reg,
        linear: Some(&noise),
    };
    let (beta, grad_norm, iterations) = minimize(&problem, d_aug, cfg.tol, cfg.max_iter)?;

    Ok(ErmFit {
        model: unpack_model(&beta, ds.dim(), cfg.fit_intercept),
        budget: PrivacyBudget {
            epsilon: cfg.epsilon,
            delta: 0.0,
        },
        certificate: ErmCertificate {
            grad_norm,
            iterations,
            epsilon_prime: eps_prime,
            delta_reg,
            noise,
            beta_aug: beta,
        fit_intercept: cfg.fit_intercept,
        },
    })
}

/// Residual of the optimality identity
/// `b + sum_i w_i l'(y_i, x_i . beta) x_i + n (lambda + delta_reg) beta`
/// at the returned optimum, recomputed from the raw data. Near zero at a
/// true minimizer.
pub fn stationarity_residual(
    ds: &Dataset,
    w: &ClassWeights,
    cfg: &ErmConfig,
    fit: &ErmFit,
) -> Array1<f64> {
    let xa = design_matrix(ds.x(), fit.certificate.fit_intercept);
    let beta = &fit.certificate.beta_aug;
    let eta = xa.dot(beta);
    let y_signed = signed_labels(ds.y());
    let weights = w.per_row(ds.y());
    let mut resid = fit.certificate.noise.clone();
    for i in 0..xa.nrows() {
        let li = weights[i] * logistic_loss_derivative(y_signed[i], eta[i]);
        resid = resid + &(&xa.row(i).to_owned() * li);
    }
    let n = ds.len() as f64;
    resid + &(beta * (n * (cfg.lambda + fit.certificate.delta_reg)))
}

// ---------------------------------------------------------------------------
// Weighted DP-SGD.
// ---------------------------------------------------------------------------

/// What to do when the composed budget would exceed the configured target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetPolicy {
    /// Stop training early and report the budget actually spent.
    Truncate,
    /// Fail with a budget-infeasible error.
    Error,
}

/// Configuration of the weighted DP-SGD trainer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DpSgdConfig {
    /// Per-sample gradient clipping norm C.
    pub clip_norm: f64,
    pub learning_rate: f64,
    /// Expected batch size L; each point enters a batch with probability L/n.
    pub expected_batch: f64,
    /// Minibatch size B the batch is partitioned into.
    pub minibatch: usize,
    /// Outer iterations T.
    pub iterations: usize,
    /// Per-release Gaussian budget (epsilon must stay below 1).
    pub step_epsilon: f64,
    pub step_delta: f64,
    /// Slack term of the advanced composition over releases.
    pub delta_prime: f64,
    /// Optional overall budget cap.
    pub target: Option<PrivacyBudget>,
    pub policy: BudgetPolicy,
    /// Disable the Gaussian noise (diagnostic mode: the run is then not
    /// private and the reported epsilon is infinite).
    pub noise_disabled: bool,
    pub fit_intercept: bool,
}

impl Default for DpSgdConfig {
    fn default() -> Self {
        DpSgdConfig {
            clip_norm: 1.0,
            learning_rate: 0.5,
            expected_batch: 100.0,
            minibatch: 50,
            iterations: 30,
            step_epsilon: 0.3,
            step_delta: 1e-6,
            delta_prime: 1e-6,
            target: None,
            policy: BudgetPolicy::Truncate,
            noise_disabled: false,
            fit_intercept: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DpSgdFit {
    pub model: LinearModel,
    pub budget: PrivacyBudget,
    /// Number of noisy minibatch releases composed into the budget.
    pub releases: u64,
    /// Largest post-clip per-sample gradient norm observed (must be <= C).
    pub max_postclip_norm: f64,
    /// Steps were cut short to respect the target budget.
    pub truncated: bool,
}

/// Weighted DP-SGD on the logistic model.
///
/// Each outer iteration Poisson-samples a batch, partitions it into
/// minibatches, and for each minibatch averages the clipped per-sample
/// gradients `w_i (sigmoid(theta . x_i) - y_i) x_i` and adds Gaussian noise
/// calibrated to the average's sensitivity `2C/B` at the per-step budget.
/// One Gaussian release is accounted per minibatch; the total is composed
/// with `compose_advanced` (no subsampling amplification is claimed, which
/// keeps the accounting conservative).
pub fn train_dpsgd<R: Rng + ?Sized>(
    ds: &Dataset,
    w: &ClassWeights,
    cfg: &DpSgdConfig,
    rng: &mut R,
) -> Result<DpSgdFit> {
    if !(cfg.clip_norm > 0.0) {
        return Err(Error::invalid("clip norm must be positive"));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    if cfg.minibatch == 0 || cfg.iterations == 0 {
        return Err(Error::invalid("minibatch size and iterations must be >= 1"));
    }
    if !cfg.noise_disabled {
        if !(cfg.step_epsilon > 0.0 && cfg.step_epsilon < 1.0) {
            return Err(Error::OutOfRange(format!(
                "per-step epsilon must lie in (0,1) for the Gaussian mechanism, got {}",
                cfg.step_epsilon
            )));
        }
        if !(cfg.step_delta > 0.0 && cfg.step_delta < 1.0) {
            return Err(Error::invalid("per-step delta must lie in (0,1)"));
        }
        if !(cfg.delta_prime > 0.0 && cfg.delta_prime < 1.0) {
            return Err(Error::invalid("delta' must lie in (0,1)"));
        }
    }
    if ds.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }

    let n = ds.len();
    let q = (cfg.expected_batch / n as f64).clamp(0.0, 1.0);
    let xa = if cfg.fit_intercept {
        let mut m = Array2::<f64>::zeros((n, ds.dim() + 1));
        m.slice_mut(ndarray::s![.., ..ds.dim()]).assign(ds.x());
        m.column_mut(ds.dim()).fill(1.0);
        m
    } else {
        ds.x().clone()
    };
    let d_aug = xa.ncols();
    let y = ds.y_float();
    let weights = w.per_row(ds.y());
    let step_budget = PrivacyBudget {
        epsilon: cfg.step_epsilon,
        delta: cfg.step_delta,
    };

    let mut theta = Array1::<f64>::zeros(d_aug);
    let mut releases: u64 = 0;
    let mut max_postclip: f64 = 0.0;
    let mut truncated = false;

    'outer: for _t in 0..cfg.iterations {
        // Poisson batch: every point enters independently with probability q.
        let batch: Vec<usize> = (0..n).filter(|_| rng.gen::<f64>() < q).collect();
        if batch.is_empty() {
            // An empty sampled batch releases nothing; skip the step.
            continue;
        }
        for chunk in batch.chunks(cfg.minibatch) {
            if !cfg.noise_disabled {
                if let Some(target) = cfg.target {
                    let tentative =
                        dp_core::compose_advanced(step_budget, releases + 1, cfg.delta_prime)?;
                    if tentative.epsilon > target.epsilon + 1e-12
                        || tentative.delta > target.delta + 1e-18
                    {
                        match cfg.policy {
                            BudgetPolicy::Truncate => {
                                truncated = true;
                                break 'outer;
                            }
                            BudgetPolicy::Error => {
                                return Err(Error::BudgetInfeasible(format!(
                                    "release {} would exceed the target budget {}",
                                    releases + 1,
                                    target.display()
                                )));
                            }
                        }
                    }
                }
            }

            let b_actual = chunk.len();
            let mut avg = Array1::<f64>::zeros(d_aug);
            for &i in chunk {
                let score = xa.row(i).dot(&theta);
                let factor = weights[i] * (sigmoid(score) - y[i]);
                let mut g: Array1<f64> = xa.row(i).to_owned() * factor;
                let norm = g.dot(&g).sqrt();
                let clip = (cfg.clip_norm / norm).min(1.0);
                g *= clip;
                let post = g.dot(&g).sqrt();
                if post > cfg.clip_norm * (1.0 + 1e-12) {
                    return Err(Error::invalid(format!(
                        "post-clip gradient norm {post} exceeds C = {}",
                        cfg.clip_norm
                    )));
                }
                max_postclip = max_postclip.max(post);
                avg = avg + &g;
            }
            avg /= b_actual as f64;

            if !cfg.noise_disabled {
                // Sensitivity of the minibatch average under a one-record
                // swap is 2C / B.
                let sigma = dp_core::gaussian_noise_sigma(
                    2.0 * cfg.clip_norm / b_actual as f64,
                    step_budget,
                )?;
                for v in avg.iter_mut() {
                    *v += sigma * sampling::standard_normal(rng);
                }
                releases += 1;
            }

            theta = theta - &(&avg * cfg.learning_rate);
        }
    }

    let budget = if cfg.noise_disabled {
        PrivacyBudget {
            epsilon: f64::INFINITY,
            delta: 0.0,
        }
    } else if releases == 0 {
        PrivacyBudget {
            epsilon: 0.0,
            delta: 0.0,
        }
    } else {
        dp_core::compose_advanced(step_budget, releases, cfg.delta_prime)?
    };

    let model = if cfg.fit_intercept {
        LinearModel {
            beta: theta.iter().take(ds.dim()).copied().collect(),
            intercept: theta[ds.dim()],
        }
    } else {
        LinearModel {
            beta: theta.to_vec(),
            intercept: 0.0,
        }
    };

    Ok(DpSgdFit {
        model,
        budget,
        releases,
        max_postclip_norm: max_postclip,
        truncated,
    })
}

// ---------------------------------------------------------------------------
// Private bagging.
// ---------------------------------------------------------------------------

/// Configuration of the private bagging ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaggingConfig {
    /// Number of base learners.
    pub m: usize,
    /// Fraction of the dataset each learner trains on (without replacement).
    pub subsample: f64,
    /// Advanced-composition slack.
    pub delta_prime: f64,
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub fit_intercept: bool,
}

impl BaggingConfig {
    pub fn new(m: usize, subsample: f64, delta_prime: f64, lambda: f64) -> Self {
        BaggingConfig {
            m,
            subsample,
            delta_prime,
            lambda,
            tol: 1e-8,
            max_iter: 100_000,
            fit_intercept: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaggingFit {
    pub models: Vec<LinearModel>,
    pub budget: PrivacyBudget,
    pub per_learner_epsilon: f64,
}

impl BaggingFit {
    /// Majority vote over the base learners; an exact tie predicts the
    /// majority class 0.
    pub fn predict(&self, x: &Array2<f64>) -> Result<(Array1<f64>, Vec<u8>)> {
        let mut votes = Array1::<f64>::zeros(x.nrows());
        for m in &self.models {
            let (_, labels) = predict(m, x)?;
            for (v, l) in votes.iter_mut().zip(labels.iter()) {
                *v += f64::from(*l);
            }
        }
        votes /= self.models.len() as f64;
        let labels = votes.iter().map(|&v| u8::from(v > 0.5)).collect();
        Ok((votes, labels))
    }
}

/// Train `m` objective-perturbation learners on independent subsamples.
///
/// The per-learner epsilon is derived by inverting advanced composition so
/// the reported ensemble budget stays at or below `total_budget`. Each base
/// learner is pure epsilon-DP, so the composed delta is exactly
/// `delta_prime`, which must fit inside the target delta.
pub fn train_private_bagging<R: Rng + ?Sized>(
    ds: &Dataset,
    w: &ClassWeights,
    total_budget: PrivacyBudget,
    cfg: &BaggingConfig,
    rng: &mut R,
) -> Result<BaggingFit> {
    if cfg.m == 0 {
        return Err(Error::invalid("need at least one base learner"));
    }
    if !(cfg.subsample > 0.0 && cfg.subsample <= 1.0) {
        return Err(Error::invalid("subsample fraction must lie in (0, 1]"));
    }
    if cfg.delta_prime > total_budget.delta {
        return Err(Error::BudgetInfeasible(format!(
            "advanced composition needs delta' <= target delta ({} > {})",
            cfg.delta_prime, total_budget.delta
        )));
    }
    let per_eps = dp_core::invert_advanced_epsilon(
        total_budget.epsilon,
        cfg.m as u64,
        cfg.delta_prime,
    )?;
    if !(per_eps > 0.0) {
        return Err(Error::BudgetInfeasible(
            "per-learner epsilon came out nonpositive".into(),
        ));
    }

    let n = ds.len();
    let k_sub = ((cfg.subsample * n as f64).round() as usize).clamp(1, n);
    let mut models = Vec::with_capacity(cfg.m);
    for _ in 0..cfg.m {
        // Each learner gets an independent derived generator so results do
        // not depend on scheduling.
        let learner_seed: u64 = rng.gen();
        let mut lrng = sampling::rng_from_seed(learner_seed);
        let idx = sample_without_replacement(n, k_sub, &mut lrng);
        let sub = ds.select_rows(&idx);
        let erm_cfg = ErmConfig {
            epsilon: per_eps,
            lambda: cfg.lambda,
            curvature: LOGISTIC_CURVATURE,
            tol: cfg.tol,
            max_iter: cfg.max_iter,
            fit_intercept: cfg.fit_intercept,
            noise_disabled: false,
        };
        let fit = train_erm_objective_perturbation(&sub, w, &erm_cfg, &mut lrng)?;
        models.push(fit.model);
    }

    let budget = dp_core::compose_advanced(
        PrivacyBudget {
            epsilon: per_eps,
            delta: 0.0,
        },
        cfg.m as u64,
        cfg.delta_prime,
    )?;

    Ok(BaggingFit {
        models,
        budget,
        per_learner_epsilon: per_eps,
    })
}

/// Draw `k` distinct indices from `0..n` (partial Fisher-Yates), returned
/// sorted so row order stays stable.
pub fn sample_without_replacement<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    debug_assert!(k <= n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    let mut out = pool[..k].to_vec();
    out.sort_unstable();
    out
}
