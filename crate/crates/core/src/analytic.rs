//! The one-dimensional warm-up: a private threshold classifier for a
//! two-component Gaussian mixture, its error bound, and closed-form
//! imbalanced metrics for the reweighted threshold family.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::dp_core::{clip_scalar, compose_basic, gaussian_noise_sigma, PrivacyBudget};
use crate::error::{Error, Result};
use crate::sampling;
use crate::stats::{normal_cdf, normal_quantile};

/// A two-component Gaussian mixture with shared variance.
///
/// `r_star` is the population imbalance ratio Pr(y=0)/Pr(y=1); it is kept
/// distinct from the sample ratio n0/n1 that the private estimator sees.
/// `b_bound` is a public bound on the component means and `r_clip` the
/// clipping radius of the private mean estimator.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub mu0: f64,
    pub mu1: f64,
    pub sigma: f64,
    pub r_star: f64,
    pub b_bound: f64,
    pub r_clip: f64,
}

impl MixtureSpec {
    pub fn new(mu0: f64, mu1: f64, sigma: f64, r_star: f64, b_bound: f64, r_clip: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::invalid("sigma must be positive"));
        }
        if !(r_star >= 1.0) {
            return Err(Error::invalid("population imbalance ratio must be >= 1"));
        }
        if mu0.abs().max(mu1.abs()) > b_bound {
            return Err(Error::invalid("means must respect the public bound B"));
        }
        if !(r_clip > 0.0) {
            return Err(Error::invalid("clipping radius must be positive"));
        }
        Ok(MixtureSpec { mu0, mu1, sigma, r_star, b_bound, r_clip })
    }

    /// Standardized separation (mu1 - mu0) / sigma.
    pub fn separation(&self) -> f64 {
        (self.mu1 - self.mu0) / self.sigma
    }

    /// The clipping radius needed for the estimation bound to apply:
    /// `R > B + sigma sqrt(2 ln(4n/beta))`.
    pub fn check_clip_radius(&self, n: usize, beta: f64) -> Result<()> {
        let needed = self.b_bound + self.sigma * (2.0 * (4.0 * n as f64 / beta).ln()).sqrt();
        if self.r_clip <= needed {
            return Err(Error::invalid(format!(
                "clipping radius {} too small; the bound needs R > {needed:.4}",
                self.r_clip
            )));
        }
        Ok(())
    }
}

/// Threshold rule `predict 1 iff x >= theta`, with the class-weight
/// parameter used to derive it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThresholdClassifier {
    pub theta: f64,
    pub gamma: f64,
}

impl ThresholdClassifier {
    /// The reweighted threshold `theta_gamma = gamma mu1 + (1-gamma) mu0`.
    pub fn from_spec(spec: &MixtureSpec, gamma: f64) -> Self {
        ThresholdClassifier {
            theta: gamma * spec.mu1 + (1.0 - gamma) * spec.mu0,
            gamma,
        }
    }

    pub fn classify(&self, x: f64) -> u8 {
        u8::from(x >= self.theta)
    }
}

/// Whether a mechanism draws calibrated noise or runs in the noise-free
/// diagnostic mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Calibrated,
    Disabled,
}

/// Mean of samples clipped into `[-r, r]` (the noise-free core of the
/// private mean estimator).
pub fn clipped_mean(samples: &[f64], r: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("mean of an empty sample"));
    }
    if !(r > 0.0) {
        return Err(Error::invalid("clipping radius must be positive"));
    }
    Ok(samples.iter().map(|&x| clip_scalar(x, r)).sum::<f64>() / samples.len() as f64)
}

/// Gaussian-mechanism private mean: clip to `[-r, r]`, average, and add
/// noise with sigma from the mechanism at sensitivity `2r/n`.
pub fn private_mean<R: Rng + ?Sized>(
    samples: &[f64],
    r: f64,
    budget: PrivacyBudget,
    mode: NoiseMode,
    rng: &mut R,
) -> Result<f64> {
    let mean = clipped_mean(samples, r)?;
    match mode {
        NoiseMode::Disabled => Ok(mean),
        NoiseMode::Calibrated => {
            let sensitivity = 2.0 * r / samples.len() as f64;
            let sigma = gaussian_noise_sigma(sensitivity, budget)?;
            Ok(mean + sigma * sampling::standard_normal(rng))
        }
    }
}

/// The private threshold estimate and the budget it spent.
#[derive(Debug, Clone, Copy)]
pub struct BocFit {
    pub classifier: ThresholdClassifier,
    pub spent: PrivacyBudget,
}

/// Private threshold classifier: two private class means, threshold at
/// their midpoint. Spends `(2 eps, 2 delta)` by basic composition.
pub fn private_boc<R: Rng + ?Sized>(
    ds: &Dataset,
    budget_per_mean: PrivacyBudget,
    r_clip: f64,
    mode: NoiseMode,
    rng: &mut R,
) -> Result<BocFit> {
    if ds.dim() != 1 {
        return Err(Error::invalid("the warm-up classifier is one-dimensional"));
    }
    let class_values = |label: u8| -> Vec<f64> {
        ds.x()
            .outer_iter()
            .zip(ds.y())
            .filter(|(_, &l)| l == label)
            .map(|(row, _)| row[0])
            .collect()
    };
    let x0 = class_values(0);
    let x1 = class_values(1);
    if x0.is_empty() || x1.is_empty() {
        return Err(Error::invalid("both classes must be nonempty"));
    }
    let mu0 = private_mean(&x0, r_clip, budget_per_mean, mode, rng)?;
    let mu1 = private_mean(&x1, r_clip, budget_per_mean, mode, rng)?;
    let spent = compose_basic(&[budget_per_mean, budget_per_mean])?;
    Ok(BocFit {
        classifier: ThresholdClassifier {
            theta: 0.5 * (mu0 + mu1),
            gamma: 0.5,
        },
        spent,
    })
}

/// High-probability radius of `|theta_hat - theta|` for the private
/// threshold estimator:
/// `2 sqrt(ln(4/beta)) sqrt(sigma^2 (1+r)/n0 + 2 R^2 ln(1.25/delta) (1+r^2) / (n0^2 eps^2))`.
///
/// `r_sample` is the realized sample ratio n0/n1 and `budget_per_mean` the
/// per-class-mean budget.
pub fn boc_error_bound(
    spec: &MixtureSpec,
    n0: usize,
    r_sample: f64,
    budget_per_mean: PrivacyBudget,
    beta: f64,
) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid("beta must lie in (0,1)"));
    }
    if n0 == 0 {
        return Err(Error::invalid("n0 must be positive"));
    }
    let n0f = n0 as f64;
    let sampling_term = spec.sigma * spec.sigma / n0f * (1.0 + r_sample);
    let privacy_term = 2.0 * spec.r_clip * spec.r_clip * (1.25 / budget_per_mean.delta).ln()
        * (1.0 + r_sample * r_sample)
        / (n0f * n0f * budget_per_mean.epsilon * budget_per_mean.epsilon);
    Ok(2.0 * (4.0 / beta).ln().sqrt() * (sampling_term + privacy_term).sqrt())
}

/// Non-private estimation floor: any estimator of the threshold deviates by
/// at least `sigma sqrt((1+r)/n0) * PhiInv(1 - beta/2)` with probability
/// `beta` over the data.
pub fn mle_lower_bound(spec: &MixtureSpec, n0: usize, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid("beta must lie in (0,1)"));
    }
    if n0 == 0 {
        return Err(Error::invalid("n0 must be positive"));
    }
    Ok(spec.sigma * ((1.0 + spec.r_star) / n0 as f64).sqrt() * normal_quantile(1.0 - beta / 2.0))
}

/// Closed-form metrics of the reweighted threshold classifier, as functions
/// of the weight parameter.
///
/// With `D = (mu1 - mu0)/sigma` and `Phi` the standard normal CDF:
/// `Re = (1 + r*) Phi((1-g) D)`,
/// `Pre = Phi((1-g) D) / (Phi((1-g) D) + (1 + r*)(1 - Phi(g D)))`,
/// `BA = (Phi((1-g) D) + Phi(g D)) / 2`,
/// `F1 = Phi((1-g) D) / (Phi((1-g) D) + (1 - Phi(g D)) / 2)`.
/// Note the recall functional is normalized by the positive rate and can
/// exceed 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticMetrics {
    pub recall: f64,
    pub precision: f64,
    pub balanced_accuracy: f64,
    pub f1: f64,
    pub tpr: f64,
    pub tnr: f64,
}

pub fn analytic_metrics(spec: &MixtureSpec, gamma: f64) -> AnalyticMetrics {
    let delta = spec.separation();
    let tpr = normal_cdf((1.0 - gamma) * delta);
    let tnr = normal_cdf(gamma * delta);
    let fpr = 1.0 - tnr;
    AnalyticMetrics {
        recall: (1.0 + spec.r_star) * tpr,
        precision: tpr / (tpr + (1.0 + spec.r_star) * fpr),
        balanced_accuracy: 0.5 * (tpr + tnr),
        f1: tpr / (tpr + 0.5 * fpr),
        tpr,
        tnr,
    }
}

/// Monte Carlo estimate of the same functionals.
///
/// Draws `n` labeled points with Pr(y=1) = 1/(1+r*), classifies with the
/// population threshold `theta_gamma`, estimates TPR/TNR from the confusion
/// counts, and plugs them into the population functionals of
/// `analytic_metrics` (the population positive rate is known to the
/// simulator). Flagged undefined when a class receives zero draws.
#[derive(Debug, Clone, Copy)]
pub struct SimulatedMetrics {
    pub defined: bool,
    pub tpr: f64,
    pub tnr: f64,
    pub recall: f64,
    pub precision: f64,
    pub balanced_accuracy: f64,
    pub f1: f64,
    pub n0: usize,
    pub n1: usize,
}

pub fn simulate_metrics<R: Rng + ?Sized>(
    spec: &MixtureSpec,
    gamma: f64,
    n: usize,
    rng: &mut R,
) -> Result<SimulatedMetrics> {
    if n == 0 {
        return Err(Error::invalid("simulation needs n >= 1"));
    }
    let classifier = ThresholdClassifier::from_spec(spec, gamma);
    let p1 = 1.0 / (1.0 + spec.r_star);
    let mut counts = [[0usize; 2]; 2]; // [label][prediction]
    for _ in 0..n {
        let label = u8::from(rng.gen::<f64>() < p1);
        let mu = if label == 1 { spec.mu1 } else { spec.mu0 };
        let x = mu + spec.sigma * sampling::standard_normal(rng);
        counts[label as usize][classifier.classify(x) as usize] += 1;
    }
    let n1 = counts[1][0] + counts[1][1];
    let n0 = counts[0][0] + counts[0][1];
    if n0 == 0 || n1 == 0 {
        return Ok(SimulatedMetrics {
            defined: false,
            tpr: f64::NAN,
            tnr: f64::NAN,
            recall: f64::NAN,
            precision: f64::NAN,
            balanced_accuracy: f64::NAN,
            f1: f64::NAN,
            n0,
            n1,
        });
    }
    let tpr = counts[1][1] as f64 / n1 as f64;
    let tnr = counts[0][0] as f64 / n0 as f64;
    let fpr = 1.0 - tnr;
    Ok(SimulatedMetrics {
        defined: true,
        tpr,
        tnr,
        recall: (1.0 + spec.r_star) * tpr,
        precision: tpr / (tpr + (1.0 + spec.r_star) * fpr),
        balanced_accuracy: 0.5 * (tpr + tnr),
        f1: tpr / (tpr + 0.5 * fpr),
        n0,
        n1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::rng_from_seed;
    use ndarray::Array2;

    fn spec(mu0: f64, mu1: f64, sigma: f64, r_star: f64) -> MixtureSpec {
        MixtureSpec::new(mu0, mu1, sigma, r_star, mu0.abs().max(mu1.abs()).max(1.0), 50.0)
            .unwrap()
    }

    #[test]
    fn clipped_mean_modes() {
        // In-range samples: exact empirical mean.
        let xs = [1.0, 2.0, 3.0];
        assert_eq!(clipped_mean(&xs, 10.0).unwrap(), 2.0);
        // Saturated samples clip to R.
        let sat = [15.0, 15.0, 15.0];
        assert_eq!(clipped_mean(&sat, 10.0).unwrap(), 10.0);
        assert!(clipped_mean(&[], 1.0).is_err());
    }

    #[test]
    fn private_mean_noise_off_is_exact_and_eps_bound_enforced() {
        let xs = [0.5, -0.25, 0.75];
        let mut rng = rng_from_seed(1);
        let b = PrivacyBudget::new(0.5, 1e-5).unwrap();
        let m = private_mean(&xs, 1.0, b, NoiseMode::Disabled, &mut rng).unwrap();
        assert!((m - (1.0 / 3.0)).abs() < 1e-15);

        let bad = PrivacyBudget::new(1.5, 1e-5).unwrap();
        assert!(private_mean(&xs, 1.0, bad, NoiseMode::Calibrated, &mut rng).is_err());
    }

    #[test]
    fn private_mean_noise_concentration() {
        // Over 1000 trials the deviation from the clipped mean stays within
        // 3 sigma_DP in at least 99.5% minus Monte Carlo slack; check 99%.
        let n = 10_000usize;
        let r = 10.0;
        let budget = PrivacyBudget::new(0.5, 1e-5).unwrap();
        let mut rng = rng_from_seed(7);
        let xs: Vec<f64> = (0..n).map(|_| sampling::standard_normal(&mut rng)).collect();
        let base = clipped_mean(&xs, r).unwrap();
        let sigma_dp = gaussian_noise_sigma(2.0 * r / n as f64, budget).unwrap();
        let mut inside = 0usize;
        let trials = 1000usize;
        for _ in 0..trials {
            let m = private_mean(&xs, r, budget, NoiseMode::Calibrated, &mut rng).unwrap();
            if (m - base).abs() <= 3.0 * sigma_dp {
                inside += 1;
            }
        }
        assert!(inside >= 990, "inside {inside}/{trials}");
    }

    fn dataset_1d(x0: &[f64], x1: &[f64]) -> Dataset {
        let n = x0.len() + x1.len();
        let mut x = Array2::<f64>::zeros((n, 1));
        let mut y = Vec::with_capacity(n);
        for (i, &v) in x0.iter().chain(x1.iter()).enumerate() {
            x[[i, 0]] = v;
            y.push(u8::from(i >= x0.len()));
        }
        Dataset::from_parts(x, y, vec![(-100.0, 100.0)]).unwrap()
    }

    #[test]
    fn boc_spends_twice_the_per_mean_budget() {
        let ds = dataset_1d(&[-1.0, -2.0, -3.0], &[1.0, 2.0, 3.0]);
        let per = PrivacyBudget::new(0.4, 1e-6).unwrap();
        let mut rng = rng_from_seed(3);
        let fit = private_boc(&ds, per, 10.0, NoiseMode::Calibrated, &mut rng).unwrap();
        assert_eq!(fit.spent.epsilon, 0.8);
        assert_eq!(fit.spent.delta, 2e-6);
    }

    #[test]
    fn boc_symmetric_data_noise_off_gives_zero_threshold() {
        let ds = dataset_1d(&[-2.0, -2.0], &[2.0, 2.0]);
        let per = PrivacyBudget::new(0.4, 1e-6).unwrap();
        let mut rng = rng_from_seed(5);
        let fit = private_boc(&ds, per, 10.0, NoiseMode::Disabled, &mut rng).unwrap();
        assert_eq!(fit.classifier.theta, 0.0);

        let single = dataset_1d(&[], &[1.0]);
        assert!(private_boc(&single, per, 10.0, NoiseMode::Disabled, &mut rng).is_err());
    }

    #[test]
    fn analytic_metric_values() {
        // mu0=0, mu1=4, sigma=2, gamma=1/2: BA = Phi(1).
        let s = spec(0.0, 4.0, 2.0, 9.0);
        let m = analytic_metrics(&s, 0.5);
        assert!((m.balanced_accuracy - 0.8413447460685429).abs() < 1e-12);

        // gamma = 1: the TPR term is Phi(0) = 1/2.
        let m1 = analytic_metrics(&s, 1.0);
        assert_eq!(m1.tpr, 0.5);
        assert!((m1.balanced_accuracy - 0.5 * (0.5 + normal_cdf(2.0))).abs() < 1e-12);
    }

    #[test]
    fn recall_increases_as_gamma_decreases() {
        let s = spec(0.0, 2.0, 1.0, 9.0);
        let gammas = [0.9, 0.7, 0.5, 0.3, 0.1];
        let mut last = f64::NEG_INFINITY;
        for &g in gammas.iter() {
            let m = analytic_metrics(&s, g);
            assert!(m.recall > last, "gamma {g}");
            last = m.recall;
        }
    }

    #[test]
    fn precision_increases_in_gamma_and_ba_peaks_at_half() {
        let s = spec(0.0, 3.0, 1.5, 4.0);
        let grid: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
        let mut last_pre = f64::NEG_INFINITY;
        let mut best_ba = (0.0, f64::NEG_INFINITY);
        for &g in &grid {
            let m = analytic_metrics(&s, g);
            assert!(m.precision > last_pre, "gamma {g}");
            last_pre = m.precision;
            if m.balanced_accuracy > best_ba.1 {
                best_ba = (g, m.balanced_accuracy);
            }
        }
        assert_eq!(best_ba.0, 0.5);
    }

    #[test]
    fn simulation_matches_analytic_tpr_and_ba() {
        let s = spec(0.0, 2.0, 1.0, 9.0);
        let mut rng = rng_from_seed(11);
        let sim = simulate_metrics(&s, 0.5, 1_000_000, &mut rng).unwrap();
        assert!(sim.defined);
        let a = analytic_metrics(&s, 0.5);
        assert!((sim.tpr - a.tpr).abs() < 0.005, "tpr gap {}", (sim.tpr - a.tpr).abs());
        assert!(
            (sim.balanced_accuracy - a.balanced_accuracy).abs() < 0.005,
            "ba gap"
        );
    }

    #[test]
    fn simulation_symmetry_and_degenerate_class() {
        let s = spec(-1.0, 1.0, 1.0, 1.0);
        let mut rng = rng_from_seed(13);
        let sim = simulate_metrics(&s, 0.5, 500_000, &mut rng).unwrap();
        assert!((sim.tpr - sim.tnr).abs() < 0.01);

        // Huge imbalance and a tiny sample: the minority can get zero draws.
        let extreme = MixtureSpec::new(0.0, 1.0, 1.0, 1e9, 1.0, 50.0).unwrap();
        let mut rng = rng_from_seed(17);
        let sim = simulate_metrics(&extreme, 0.5, 10, &mut rng).unwrap();
        assert!(!sim.defined);
    }

    #[test]
    fn mle_bound_values_and_scaling() {
        let s = spec(0.0, 1.0, 1.0, 9.0);
        // beta=0.05, n0=1e4, sigma=1, r=9: sqrt(10/1e4) * PhiInv(0.975).
        let b = mle_lower_bound(&s, 10_000, 0.05).unwrap();
        assert!((b - 0.06197950323045614).abs() < 1e-12, "bound {b}");

        // Doubling n0 shrinks the bound by sqrt(2).
        let b2 = mle_lower_bound(&s, 20_000, 0.05).unwrap();
        assert!((b / b2 - std::f64::consts::SQRT_2).abs() < 1e-12);

        // r = 1 specializes to sigma sqrt(2/n0) PhiInv(1 - beta/2).
        let s1 = spec(0.0, 1.0, 1.0, 1.0);
        let b1 = mle_lower_bound(&s1, 100, 0.1).unwrap();
        let expect = (2.0f64 / 100.0).sqrt() * normal_quantile(0.95);
        assert!((b1 - expect).abs() < 1e-12);
    }

    #[test]
    fn clip_radius_check() {
        let s = MixtureSpec::new(0.0, 2.0, 1.0, 9.0, 2.0, 8.0).unwrap();
        assert!(s.check_clip_radius(10_000, 0.1).is_ok());
        let tight = MixtureSpec::new(0.0, 2.0, 1.0, 9.0, 2.0, 3.0).unwrap();
        assert!(tight.check_clip_radius(10_000, 0.1).is_err());
    }
}
