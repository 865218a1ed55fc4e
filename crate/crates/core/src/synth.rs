//! A minimal Select-Measure-Project private synthesizer and the balancing
//! wrapper around it.
//!
//! Select: the class prior plus every class-conditional one-way feature
//! marginal over a public discretization. Measure: Laplace noise on each
//! histogram (pure epsilon accounting). Project: clamp negatives to zero
//! and renormalize. The fitted model is parametric, so arbitrarily many
//! rows can be drawn afterwards at no further privacy cost.
//!
//! Known limitation of the one-way design: cross-feature correlations are
//! not preserved; each class is synthesized as a product distribution.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, RowOrigin};
use crate::dp_core::{compose_basic, PrivacyBudget};
use crate::error::{Error, Result};
use crate::sampling;

/// Uniform per-feature binning derived from public bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    /// Per-feature strictly increasing edges, `bins + 1` of them.
    edges: Vec<Vec<f64>>,
    bins: usize,
}

pub const DEFAULT_BINS: usize = 10;

impl Discretizer {
    /// Equal-width bins inside each feature's public bounds.
    pub fn from_bounds(bounds: &[(f64, f64)], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("need at least one bin per feature"));
        }
        let mut edges = Vec::with_capacity(bounds.len());
        for &(lo, hi) in bounds {
            if !(lo < hi) {
                return Err(Error::invalid("bounds must satisfy lo < hi"));
            }
            let width = (hi - lo) / bins as f64;
            let e: Vec<f64> = (0..=bins).map(|b| lo + b as f64 * width).collect();
            edges.push(e);
        }
        Ok(Discretizer { edges, bins })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn dim(&self) -> usize {
        self.edges.len()
    }

    /// Bin index of a value; out-of-bounds values clamp to the end bins.
    pub fn encode(&self, feature: usize, v: f64) -> usize {
        let e = &self.edges[feature];
        let lo = e[0];
        let hi = e[self.bins];
        let width = (hi - lo) / self.bins as f64;
        if v <= lo {
            return 0;
        }
        if v >= hi {
            return self.bins - 1;
        }
        (((v - lo) / width) as usize).min(self.bins - 1)
    }

    /// Midpoint of a bin.
    pub fn decode(&self, feature: usize, bin: usize) -> f64 {
        let e = &self.edges[feature];
        0.5 * (e[bin] + e[bin + 1])
    }

    /// The public bounds this discretizer covers.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.edges.iter().map(|e| (e[0], e[self.bins])).collect()
    }
}

/// Per-class noisy one-way marginal tables plus a noisy class prior.
///
/// All stored vectors are valid probability distributions. The model is
/// immutable after fit and freely shareable; sampling needs only a caller
/// owned random source.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginalSynthModel {
    class_prior: [f64; 2],
    /// `marginals[class][feature][bin]`.
    marginals: [Vec<Vec<f64>>; 2],
    disc: Discretizer,
    budget_spent: PrivacyBudget,
}

impl MarginalSynthModel {
    pub fn class_prior(&self) -> [f64; 2] {
        self.class_prior
    }

    pub fn marginal(&self, class: u8, feature: usize) -> &[f64] {
        &self.marginals[class as usize][feature]
    }

    pub fn budget_spent(&self) -> PrivacyBudget {
        self.budget_spent
    }

    pub fn discretizer(&self) -> &Discretizer {
        &self.disc
    }

    pub fn dim(&self) -> usize {
        self.disc.dim()
    }
}

// Clamp negatives to zero and normalize; all-zero mass falls back to the
// uniform distribution.
fn project_to_simplex(hist: &mut [f64]) {
    let mut total = 0.0;
    for v in hist.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
        total += *v;
    }
    if total <= 0.0 {
        let u = 1.0 / hist.len() as f64;
        hist.iter_mut().for_each(|v| *v = u);
    } else {
        hist.iter_mut().for_each(|v| *v /= total);
    }
}

/// Fit the synthesizer: the budget is split evenly across the `2d + 1`
/// measured histograms, each perturbed with Laplace noise of scale
/// `2 / eps_share` (L1 sensitivity 2 under the bounded neighbor relation:
/// one changed record moves one unit of count out of a cell and one in).
///
/// `budget.epsilon = +inf` is the documented noise-disabled test mode; the
/// stored tables then equal the empirical ones exactly.
pub fn fit_marginal_synth<R: Rng + ?Sized>(
    ds: &Dataset,
    disc: &Discretizer,
    budget: PrivacyBudget,
    rng: &mut R,
) -> Result<MarginalSynthModel> {
    if !(budget.epsilon > 0.0) {
        return Err(Error::invalid("synthesizer budget epsilon must be positive"));
    }
    if budget.delta != 0.0 {
        return Err(Error::invalid(
            "the marginal synthesizer accounts in pure epsilon; delta must be 0",
        ));
    }
    if ds.n0() == 0 || ds.n1() == 0 {
        return Err(Error::invalid("synthesizer needs both classes nonempty"));
    }
    if disc.dim() != ds.dim() {
        return Err(Error::invalid("discretizer dimension must match dataset"));
    }

    let d = ds.dim();
    let measurements = 2 * d + 1;
    let eps_share = budget.epsilon / measurements as f64;
    let noise_scale = 2.0 / eps_share; // 0 when epsilon is the inf sentinel
    let noise_enabled = budget.epsilon.is_finite();

    // Class prior.
    let mut prior = [ds.n0() as f64, ds.n1() as f64];
    if noise_enabled {
        prior[0] += sampling::laplace(rng, noise_scale);
        prior[1] += sampling::laplace(rng, noise_scale);
    }
    project_to_simplex(&mut prior);

    // Class-conditional one-way marginals.
    let mut marginals: [Vec<Vec<f64>>; 2] = [Vec::with_capacity(d), Vec::with_capacity(d)];
    for class in 0..2u8 {
        let rows = ds.class_matrix(class);
        for j in 0..d {
            let mut hist = vec![0.0f64; disc.bins()];
            for r in rows.outer_iter() {
                hist[disc.encode(j, r[j])] += 1.0;
            }
            if noise_enabled {
                for cell in hist.iter_mut() {
                    *cell += sampling::laplace(rng, noise_scale);
                }
            }
            project_to_simplex(&mut hist);
            marginals[class as usize].push(hist);
        }
    }

    // The spent budget is the basic composition of the even shares; by
    // construction it equals the requested epsilon.
    let spent = if noise_enabled {
        compose_basic(&vec![
            PrivacyBudget { epsilon: eps_share, delta: 0.0 };
            measurements
        ])?
    } else {
        budget
    };

    let model = MarginalSynthModel {
        class_prior: [prior[0], prior[1]],
        marginals,
        disc: disc.clone(),
        budget_spent: spent,
    };
    debug_assert!(model_distributions_valid(&model));
    Ok(model)
}

fn model_distributions_valid(m: &MarginalSynthModel) -> bool {
    let ok = |h: &[f64]| {
        h.iter().all(|&v| v >= 0.0) && (h.iter().sum::<f64>() - 1.0).abs() < 1e-9
    };
    ok(&m.class_prior)
        && m.marginals
            .iter()
            .all(|per_class| per_class.iter().all(|h| ok(h)))
}

fn sample_categorical<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.len() - 1
}

/// Draw `count` rows from the class-conditional product distribution.
/// Rows are bin midpoints; no privacy budget is consumed (post-processing).
pub fn sample_conditional<R: Rng + ?Sized>(
    model: &MarginalSynthModel,
    class: u8,
    count: usize,
    rng: &mut R,
) -> Array2<f64> {
    let d = model.dim();
    let mut out = Array2::<f64>::zeros((count, d));
    for t in 0..count {
        for j in 0..d {
            let bin = sample_categorical(model.marginal(class, j), rng);
            out[[t, j]] = model.disc.decode(j, bin);
        }
    }
    out
}

/// How the balancing wrapper draws rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    /// Condition on the class label (parametric path): N/2 per class.
    Conditional,
    /// Draw (label, features) jointly and keep draws until each class
    /// reaches N/2, discarding overflow.
    Rejection,
}

/// Draw a balanced dataset of `n_total` rows (even) from a fitted model.
pub fn balance_with_synth<R: Rng + ?Sized>(
    model: &MarginalSynthModel,
    n_total: usize,
    mode: SampleMode,
    rng: &mut R,
) -> Result<Dataset> {
    if n_total % 2 != 0 {
        return Err(Error::invalid("balanced sample size must be even"));
    }
    let per_class = n_total / 2;
    let d = model.dim();
    let (x, y) = match mode {
        SampleMode::Conditional => {
            let minority = sample_conditional(model, 1, per_class, rng);
            let majority = sample_conditional(model, 0, per_class, rng);
            let mut x = Array2::<f64>::zeros((n_total, d));
            let mut y = Vec::with_capacity(n_total);
            for t in 0..per_class {
                x.row_mut(t).assign(&minority.row(t));
                y.push(1u8);
            }
            for t in 0..per_class {
                x.row_mut(per_class + t).assign(&majority.row(t));
                y.push(0u8);
            }
            (x, y)
        }
        SampleMode::Rejection => {
            let prior = model.class_prior();
            if prior[0] < 1e-12 || prior[1] < 1e-12 {
                return Err(Error::invalid(
                    "rejection sampling cannot terminate: a class prior entry is (near) zero",
                ));
            }
            let mut x = Array2::<f64>::zeros((n_total, d));
            let mut y = Vec::with_capacity(n_total);
            let mut counts = [0usize; 2];
            let max_attempts = 1_000_000usize.saturating_mul(n_total);
            let mut attempts = 0usize;
            while counts[0] + counts[1] < n_total {
                attempts += 1;
                if attempts > max_attempts {
                    return Err(Error::invalid(
                        "rejection sampling exceeded its attempt budget",
                    ));
                }
                let label = u8::from(rng.gen::<f64>() < prior[1]);
                // Features are always drawn so the per-draw randomness
                // consumption does not depend on acceptance.
                let row = sample_conditional(model, label, 1, rng);
                if counts[label as usize] < per_class {
                    let pos = counts[0] + counts[1];
                    x.row_mut(pos).assign(&row.row(0));
                    y.push(label);
                    counts[label as usize] += 1;
                }
            }
            (x, y)
        }
    };

    let mut ds = Dataset::from_parts(x, y, model.disc.bounds())?;
    // Everything the synthesizer emits is synthetic by definition.
    ds.set_origin_all(RowOrigin::Synthetic);
    Ok(ds)
}

/// Fit then balance. The spent budget equals the synthesizer's budget
/// exactly: sampling is post-processing.
pub fn end_to_end_private_balance<R: Rng + ?Sized>(
    ds: &Dataset,
    disc: &Discretizer,
    budget: PrivacyBudget,
    n_total: usize,
    mode: SampleMode,
    rng: &mut R,
) -> Result<(Dataset, PrivacyBudget)> {
    let model = fit_marginal_synth(ds, disc, budget, rng)?;
    let balanced = balance_with_synth(&model, n_total, mode, rng)?;
    Ok((balanced, model.budget_spent()))
}
