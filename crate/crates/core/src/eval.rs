//! Imbalanced-classification metrics, stratified splitting, the multi-seed
//! experiment runner, and average-rank aggregation.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{self, MixtureGenSpec};
use crate::dataset::{Dataset, RowOrigin};
use crate::dp_core::{self, PrivacyBudget, SmoteAdjustment};
use crate::error::{Error, Result};
use crate::models::{self, BaggingConfig, BudgetPolicy, DpSgdConfig, ErmConfig, LinearModel, LogRegConfig};
use crate::preprocess::{self, ClassWeights};
use crate::sampling::derive_rng;
use crate::stats::{mean_std, sigmoid};
use crate::synth::{self, Discretizer, SampleMode};

/// The ranked metric columns, in report order.
pub const METRIC_NAMES: [&str; 9] = [
    "auc",
    "f1",
    "balanced_accuracy",
    "precision",
    "recall",
    "worst_class_accuracy",
    "macro_avg_accuracy",
    "g_mean",
    "mcc",
];

/// One evaluation of a scorer on a labeled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// Rank-statistic AUC; absent when the labels are single-class.
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub f1: f64,
    pub balanced_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub worst_class_accuracy: f64,
    pub macro_avg_accuracy: f64,
    pub g_mean: f64,
    pub mcc: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl MetricsRow {
    /// Metric values keyed by the ranked column names.
    pub fn named(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        if let Some(a) = self.auc {
            m.insert("auc".into(), a);
        }
        m.insert("f1".into(), self.f1);
        m.insert("balanced_accuracy".into(), self.balanced_accuracy);
        m.insert("precision".into(), self.precision);
        m.insert("recall".into(), self.recall);
        m.insert("worst_class_accuracy".into(), self.worst_class_accuracy);
        m.insert("macro_avg_accuracy".into(), self.macro_avg_accuracy);
        m.insert("g_mean".into(), self.g_mean);
        m.insert("mcc".into(), self.mcc);
        m
    }
}

/// Rank-statistic AUC with midranks for score ties. `None` when only one
/// class is present.
pub fn auc_rank(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n = scores.len();
    let n1 = labels.iter().filter(|&&l| l == 1).count();
    let n0 = n - n1;
    if n0 == 0 || n1 == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0usize;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Midrank of the tie group occupying positions i..=j (1-based).
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    Some((rank_sum_pos - n1 as f64 * (n1 as f64 + 1.0) / 2.0) / (n0 as f64 * n1 as f64))
}

/// Metrics from scores with labels thresholded at `sigmoid(score) >=
/// threshold` (0.5 reproduces the trainers' prediction rule).
pub fn compute_metrics(scores: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsRow> {
    let predicted: Vec<u8> = scores
        .iter()
        .map(|&s| u8::from(sigmoid(s) >= threshold))
        .collect();
    compute_metrics_with_predictions(scores, &predicted, labels)
}

/// Metrics with the confusion matrix taken from explicit predictions;
/// scores are still used for AUC. Lets voting ensembles keep their own
/// tie-breaking rule.
pub fn compute_metrics_with_predictions(
    scores: &[f64],
    predicted: &[u8],
    labels: &[u8],
) -> Result<MetricsRow> {
    if labels.is_empty() {
        return Err(Error::invalid("metrics need at least one example"));
    }
    if scores.len() != labels.len() || predicted.len() != labels.len() {
        return Err(Error::invalid("scores, predictions, and labels must align"));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut tn = 0usize;
    let mut fn_ = 0usize;
    for (&p, &l) in predicted.iter().zip(labels) {
        match (l, p) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (0, 0) => tn += 1,
            (1, 0) => fn_ += 1,
            _ => return Err(Error::invalid("labels must be 0 or 1")),
        }
    }
    let n = labels.len() as f64;
    let pos = tp + fn_;
    let neg = tn + fp;
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };

    let tpr = ratio(tp, pos);
    let tnr = ratio(tn, neg);
    let precision = ratio(tp, tp + fp); // zero predicted positives -> 0
    let recall = tpr;
    let f1 = if 2 * tp + fp + fn_ == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };
    let balanced_accuracy = 0.5 * (tpr + tnr);
    // Macro-averaged accuracy is the mean of the per-class accuracies,
    // which coincides with balanced accuracy for binary labels. Both are
    // reported; equality is asserted by the invariant tests.
    let macro_avg_accuracy = (tpr + tnr) / 2.0;
    let g_mean = (tpr * tnr).sqrt();
    let worst_class_accuracy = tpr.min(tnr);
    let mcc_den = ((tp + fp) as f64 * (tp + fn_) as f64 * (tn + fp) as f64 * (tn + fn_) as f64)
        .sqrt();
    let mcc = if mcc_den == 0.0 {
        0.0
    } else {
        (tp as f64 * tn as f64 - fp as f64 * fn_ as f64) / mcc_den
    };

    Ok(MetricsRow {
        auc: auc_rank(scores, labels),
        accuracy: (tp + tn) as f64 / n,
        f1,
        balanced_accuracy,
        precision,
        recall,
        worst_class_accuracy,
        macro_avg_accuracy,
        g_mean,
        mcc,
        tp,
        fp,
        tn,
        fn_,
    })
}

/// Per-class proportional split, deterministic per seed. Both sides keep
/// at least one member of each class.
pub fn stratified_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid("test fraction must lie in (0,1)"));
    }
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in 0..2u8 {
        let mut idx: Vec<usize> = ds
            .y()
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if idx.len() < 2 {
            return Err(Error::invalid(format!(
                "stratified split needs >= 2 members per class; class {class} has {}",
                idx.len()
            )));
        }
        let mut rng = derive_rng(seed, &[class as u64]);
        // Fisher-Yates shuffle.
        for i in (1..idx.len()).rev() {
            let j = rand::Rng::gen_range(&mut rng, 0..=i);
            idx.swap(i, j);
        }
        let want = (test_fraction * idx.len() as f64).round() as usize;
        let take = want.clamp(1, idx.len() - 1);
        test_idx.extend_from_slice(&idx[..take]);
        train_idx.extend_from_slice(&idx[take..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((ds.select_rows(&train_idx), ds.select_rows(&test_idx)))
}

// ---------------------------------------------------------------------------
// Experiment runner.
// ---------------------------------------------------------------------------

/// Where the experiment data comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default)]
        bounds: Option<BTreeMap<String, (f64, f64)>>,
    },
    Mixture {
        spec: MixtureGenSpec,
    },
}

/// Budget handling for the non-private augmenters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentBudgetMode {
    /// The grid epsilon is the pipeline target: the downstream trainer runs
    /// at the deflated epsilon so the adjusted budget meets the target.
    AdjustInput,
    /// The trainer runs at the grid epsilon and the receipt reports the
    /// inflated budget.
    ReportAdjusted,
}

/// Pre-processing stage of a pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PreprocessSpec {
    None,
    Oversample {
        budget_mode: AugmentBudgetMode,
    },
    Smote {
        k: usize,
        budget_mode: AugmentBudgetMode,
    },
    Synth {
        bins: usize,
        mode: SampleMode,
    },
}

/// Training stage of a pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TrainerSpec {
    /// Non-private weighted logistic regression.
    Baseline { lambda: f64, weighted: bool },
    /// Objective-perturbation private ERM.
    Erm { lambda: f64, weighted: bool },
    /// Weighted DP-SGD.
    Dpsgd {
        clip_norm: f64,
        learning_rate: f64,
        expected_batch: f64,
        minibatch: usize,
        iterations: usize,
        delta_prime: f64,
        weighted: bool,
    },
    /// Private bagging over objective-perturbation learners.
    Bagging {
        m: usize,
        subsample: f64,
        delta_prime: f64,
        lambda: f64,
        weighted: bool,
    },
}

/// One method column of the experiment grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub name: String,
    pub preprocess: PreprocessSpec,
    pub trainer: TrainerSpec,
}

fn default_eps_grid() -> Vec<f64> {
    vec![0.05, 0.1, 0.5, 1.0, 5.0]
}

fn default_seeds() -> u64 {
    10
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_delta() -> f64 {
    1e-5
}

/// Full experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset_name: String,
    pub dataset: DatasetSource,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_eps_grid")]
    pub eps_grid: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub master_seed: u64,
}

/// The accountant's statement for one pipeline cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BudgetReceipt {
    /// No privacy mechanism ran anywhere in the pipeline.
    NonPrivate,
    Private {
        epsilon: f64,
        delta: f64,
        mechanism: String,
    },
}

/// One (method, epsilon, seed) evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellReport {
    pub dataset: String,
    pub method: String,
    pub epsilon: f64,
    pub seed: u64,
    pub metrics: MetricsRow,
    pub receipt: BudgetReceipt,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Convergence { .. } | Error::BudgetInfeasible(_) => e,
        other => Error::Data(format!("stage {name}: {other}")),
    })
}

/// Load or generate the experiment dataset.
pub fn load_source(source: &DatasetSource) -> Result<Dataset> {
    match source {
        DatasetSource::Csv {
            path,
            label_column,
            bounds,
        } => {
            let (ds, _stats) = data::load_csv(path, label_column, bounds.as_ref())?;
            let (ds, _flipped) = ds.with_minority_positive();
            Ok(ds)
        }
        DatasetSource::Mixture { spec } => data::generate_mixture(spec),
    }
}

/// Run the full (method x epsilon x seed) grid.
///
/// Per cell: stratified split, pre-processing on the train side only,
/// training, scoring on the untouched test side, metrics, and a budget
/// receipt assembled exclusively from `dp_core` operations. Each cell
/// derives an independent generator from the master seed and its indices,
/// so results are order independent and reproducible cell by cell.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<CellReport>> {
    if cfg.methods.is_empty() {
        return Err(Error::invalid("experiment needs at least one method"));
    }
    if cfg.seeds == 0 {
        return Err(Error::invalid("experiment needs at least one seed"));
    }
    let ds = stage("load", load_source(&cfg.dataset))?;
    let mut reports = Vec::new();
    for (mi, method) in cfg.methods.iter().enumerate() {
        for (ei, &eps) in cfg.eps_grid.iter().enumerate() {
            if !(eps > 0.0) {
                return Err(Error::invalid("grid epsilon must be positive"));
            }
            for seed in 0..cfg.seeds {
                let report = run_cell(cfg, &ds, method, mi, eps, ei, seed)?;
                reports.push(report);
            }
        }
    }
    Ok(reports)
}

fn run_cell(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    method: &MethodSpec,
    method_idx: usize,
    eps: f64,
    eps_idx: usize,
    seed: u64,
) -> Result<CellReport> {
    // Splits depend only on the seed index so every method sees the same
    // partition, as in a paired comparison.
    let split_seed: u64 = rand::Rng::gen(&mut derive_rng(cfg.master_seed, &[0x5711, seed]));
    let (train, test) = stage("split", stratified_split(ds, cfg.test_fraction, split_seed))?;
    debug_assert!(test.origin().iter().all(|&o| o == RowOrigin::Original));

    let mut rng = derive_rng(cfg.master_seed, &[method_idx as u64, eps_idx as u64, seed]);

    // Pre-processing on the train split only.
    let mut trainer_eps = eps;
    let mut synth_receipt: Option<PrivacyBudget> = None;
    let mut augment_note: Option<(String, f64)> = None; // mechanism, inflation factor
    let aug_train = match &method.preprocess {
        PreprocessSpec::None => train.clone(),
        PreprocessSpec::Oversample { budget_mode } => {
            let n0 = train.n0();
            let n1 = train.n1();
            let n_new = n0.saturating_sub(n1);
            let out = stage("preprocess", preprocess::oversample_deterministic(&train, n_new))?;
            let factor = (n_new as u64).div_ceil(n1.max(1) as u64) as f64 + 1.0;
            match budget_mode {
                AugmentBudgetMode::AdjustInput => trainer_eps = eps / factor,
                AugmentBudgetMode::ReportAdjusted => {}
            }
            augment_note = Some(("oversample".into(), factor));
            out
        }
        PreprocessSpec::Smote { k, budget_mode } => {
            let n0 = train.n0();
            let n1 = train.n1();
            let n_new = n0.saturating_sub(n1);
            let out = if n_new == 0 {
                train.clone()
            } else {
                stage("preprocess", preprocess::smote_augment(&train, n_new, *k, &mut rng))?
            };
            let factor = if n_new == 0 {
                1.0
            } else {
                let adj = SmoteAdjustment::new(
                    train.dim() as u32,
                    *k as u32,
                    n1 as u64,
                    n_new as u64,
                    0.0,
                )?;
                dp_core::smote_adjusted_epsilon_pure(1.0, &adj)
            };
            match budget_mode {
                AugmentBudgetMode::AdjustInput => trainer_eps = eps / factor,
                AugmentBudgetMode::ReportAdjusted => {}
            }
            augment_note = Some(("smote".into(), factor));
            out
        }
        PreprocessSpec::Synth { bins, mode } => {
            let disc = Discretizer::from_bounds(train.bounds(), *bins)?;
            let budget = PrivacyBudget::pure(eps)?;
            let n_total = 2 * train.n0();
            let (balanced, spent) = stage(
                "preprocess",
                synth::end_to_end_private_balance(&train, &disc, budget, n_total, *mode, &mut rng),
            )?;
            synth_receipt = Some(spent);
            balanced
        }
    };

    // Public-bounds standardization for the trainers; the same fixed map
    // applies to the test rows.
    let train_scaled = stage("scale", preprocess::scale_to_public_unit_ball(&aug_train))?;
    let test_scaled = stage("scale", preprocess::scale_to_public_unit_ball(&test))?;

    let trainer_weighted = match &method.trainer {
        TrainerSpec::Baseline { weighted, .. }
        | TrainerSpec::Erm { weighted, .. }
        | TrainerSpec::Dpsgd { weighted, .. }
        | TrainerSpec::Bagging { weighted, .. } => *weighted,
    };
    let weights = if trainer_weighted {
        stage("weights", preprocess::class_weights(&train_scaled))?
    } else {
        ClassWeights::uniform()
    };

    // Train and assemble the receipt.
    let (scores, predicted, trainer_budget, mechanism): (Vec<f64>, Vec<u8>, Option<PrivacyBudget>, String) =
        match &method.trainer {
            TrainerSpec::Baseline { lambda, .. } => {
                let fit = stage(
                    "train",
                    models::train_logreg_baseline(
                        &train_scaled,
                        &weights,
                        &LogRegConfig {
                            lambda: *lambda,
                            ..LogRegConfig::default()
                        },
                    ),
                )?;
                let (s, p) = models::predict(&fit.model, test_scaled.x())?;
                (s.to_vec(), p, None, "logreg-baseline".into())
            }
            TrainerSpec::Erm { lambda, .. } => {
                let fit = stage(
                    "train",
                    models::train_erm_objective_perturbation(
                        &train_scaled,
                        &weights,
                        &ErmConfig::new(trainer_eps, *lambda),
                        &mut rng,
                    ),
                )?;
                let (s, p) = models::predict(&fit.model, test_scaled.x())?;
                (s.to_vec(), p, Some(fit.budget), "erm-objective-perturbation".into())
            }
            TrainerSpec::Dpsgd {
                clip_norm,
                learning_rate,
                expected_batch,
                minibatch,
                iterations,
                delta_prime,
                ..
            } => {
                let planned_releases = (*iterations as u64)
                    * ((*expected_batch / *minibatch as f64).ceil().max(1.0) as u64);
                if cfg.delta <= *delta_prime {
                    return Err(Error::BudgetInfeasible(
                        "dp-sgd needs the experiment delta above delta'".into(),
                    ));
                }
                let step_epsilon = dp_core::invert_advanced_epsilon(
                    trainer_eps,
                    planned_releases,
                    *delta_prime,
                )?
                .min(0.95);
                let step_delta = ((cfg.delta - delta_prime) / planned_releases as f64).min(0.5 * cfg.delta);
                let sgd_cfg = DpSgdConfig {
                    clip_norm: *clip_norm,
                    learning_rate: *learning_rate,
                    expected_batch: *expected_batch,
                    minibatch: *minibatch,
                    iterations: *iterations,
                    step_epsilon,
                    step_delta,
                    delta_prime: *delta_prime,
                    target: Some(PrivacyBudget {
                        epsilon: trainer_eps,
                        delta: cfg.delta,
                    }),
                    policy: BudgetPolicy::Truncate,
                    noise_disabled: false,
                    fit_intercept: true,
                };
                let fit = stage("train", models::train_dpsgd(&train_scaled, &weights, &sgd_cfg, &mut rng))?;
                let (s, p) = models::predict(&fit.model, test_scaled.x())?;
                (s.to_vec(), p, Some(fit.budget), "dp-sgd".into())
            }
            TrainerSpec::Bagging {
                m,
                subsample,
                delta_prime,
                lambda,
                ..
            } => {
                let total = PrivacyBudget {
                    epsilon: trainer_eps,
                    delta: cfg.delta,
                };
                let bag_cfg = BaggingConfig::new(*m, *subsample, *delta_prime, *lambda);
                let fit = stage(
                    "train",
                    models::train_private_bagging(&train_scaled, &weights, total, &bag_cfg, &mut rng),
                )?;
                let (votes, p) = fit.predict(test_scaled.x())?;
                // Vote fractions serve as ranking scores; map them onto the
                // score scale for AUC only (predictions keep the ensemble's
                // own tie rule).
                let s: Vec<f64> = votes.iter().map(|&v| v - 0.5).collect();
                (s, p, Some(fit.budget), format!("private-bagging(m={m})"))
            }
        };

    let metrics = stage(
        "metrics",
        compute_metrics_with_predictions(&scores, &predicted, test_scaled.y()),
    )?;

    // Receipts: synthesizer pipelines spend exactly the synthesizer's
    // budget (everything downstream is post-processing); augmented
    // pipelines report the inflated trainer budget.
    let receipt = match (&synth_receipt, &trainer_budget, &augment_note) {
        (Some(spent), _, _) => BudgetReceipt::Private {
            epsilon: spent.epsilon,
            delta: spent.delta,
            mechanism: format!("synthesizer({mechanism} is post-processing)"),
        },
        (None, Some(budget), Some((kind, factor))) => BudgetReceipt::Private {
            epsilon: budget.epsilon * factor,
            delta: budget.delta * factor,
            mechanism: format!("{kind}-adjusted({mechanism}, factor {factor:.6})"),
        },
        (None, Some(budget), None) => BudgetReceipt::Private {
            epsilon: budget.epsilon,
            delta: budget.delta,
            mechanism,
        },
        (None, None, _) => BudgetReceipt::NonPrivate,
    };

    Ok(CellReport {
        dataset: cfg.dataset_name.clone(),
        method: method.name.clone(),
        epsilon: eps,
        seed,
        metrics,
        receipt,
    })
}

/// Aggregate per-seed rows: (mean, std) per metric plus the count of
/// undefined AUC cells.
pub fn summarize(rows: &[MetricsRow]) -> BTreeMap<String, (f64, f64)> {
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in rows {
        for (k, v) in row.named() {
            columns.entry(k).or_default().push(v);
        }
    }
    columns
        .into_iter()
        .map(|(k, vals)| {
            let (m, s) = mean_std(&vals);
            (k, (m, s))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Average ranks.
// ---------------------------------------------------------------------------

/// Mean metrics of one method in one (dataset, epsilon) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankCell {
    pub dataset: String,
    pub epsilon: f64,
    pub method: String,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankResult {
    /// method -> metric -> mean rank (1 = best, ties get the average rank).
    pub mean_ranks: BTreeMap<String, BTreeMap<String, f64>>,
    /// (dataset, epsilon, metric) slots where some method had no value.
    pub missing_cells: usize,
}

/// Rank methods within every (dataset, epsilon, metric) slot, descending
/// (higher metric is better), then average the ranks per method and metric.
pub fn average_ranks(cells: &[RankCell]) -> Result<RankResult> {
    let mut methods: Vec<String> = cells.iter().map(|c| c.method.clone()).collect();
    methods.sort();
    methods.dedup();
    if methods.len() < 2 {
        return Err(Error::invalid("ranking needs at least two methods"));
    }
    let mut metrics: Vec<String> = cells
        .iter()
        .flat_map(|c| c.values.keys().cloned())
        .collect();
    metrics.sort();
    metrics.dedup();

    let mut groups: BTreeMap<(String, u64), Vec<&RankCell>> = BTreeMap::new();
    for c in cells {
        groups
            .entry((c.dataset.clone(), c.epsilon.to_bits()))
            .or_default()
            .push(c);
    }

    let mut sums: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    let mut missing = 0usize;
    for group in groups.values() {
        for metric in &metrics {
            let mut entries: Vec<(&str, f64)> = Vec::new();
            for &cell in group {
                if let Some(&v) = cell.values.get(metric) {
                    entries.push((cell.method.as_str(), v));
                }
            }
            if entries.len() < methods.len() {
                missing += 1;
            }
            if entries.len() < 2 {
                continue;
            }
            entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));
            // Average ranks across tie groups.
            let mut i = 0usize;
            while i < entries.len() {
                let mut j = i;
                while j + 1 < entries.len() && entries[j + 1].1 == entries[i].1 {
                    j += 1;
                }
                let rank = (i + 1 + j + 1) as f64 / 2.0;
                for &(m, _) in &entries[i..=j] {
                    let e = sums.entry((m.to_string(), metric.clone())).or_insert((0.0, 0));
                    e.0 += rank;
                    e.1 += 1;
                }
                i = j + 1;
            }
        }
    }

    let mut mean_ranks: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for ((method, metric), (sum, count)) in sums {
        mean_ranks
            .entry(method)
            .or_default()
            .insert(metric, sum / count as f64);
    }
    Ok(RankResult {
        mean_ranks,
        missing_cells: missing,
    })
}

// ---------------------------------------------------------------------------
// Decision-boundary grids.
// ---------------------------------------------------------------------------

/// One cell of a decision-boundary grid.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
    pub score: f64,
    pub label: u8,
}

/// Row-major grid of predictions of a 2-d linear model, for plotting.
/// A resolution of 1 along an axis evaluates the midpoint of its range.
pub fn boundary_grid(
    model: &LinearModel,
    x_range: (f64, f64),
    y_range: (f64, f64),
    resolution: (usize, usize),
) -> Result<Vec<GridPoint>> {
    if model.dim() != 2 {
        return Err(Error::invalid("boundary grids need a 2-d model"));
    }
    if resolution.0 == 0 || resolution.1 == 0 {
        return Err(Error::invalid("resolution must be >= 1 per axis"));
    }
    let coords = |range: (f64, f64), res: usize, i: usize| {
        if res == 1 {
            0.5 * (range.0 + range.1)
        } else {
            range.0 + (range.1 - range.0) * i as f64 / (res - 1) as f64
        }
    };
    let mut grid = Vec::with_capacity(resolution.0 * resolution.1);
    for iy in 0..resolution.1 {
        for ix in 0..resolution.0 {
            let x = coords(x_range, resolution.0, ix);
            let y = coords(y_range, resolution.1, iy);
            let score = model.score_row(&[x, y]);
            grid.push(GridPoint {
                x,
                y,
                score,
                label: u8::from(sigmoid(score) >= 0.5),
            });
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn perfect_separation_metrics() {
        let scores = vec![-3.0, -2.0, -2.5, 1.5, 2.0];
        let labels = vec![0, 0, 0, 1, 1];
        let m = compute_metrics(&scores, &labels, 0.5).unwrap();
        assert_eq!(m.auc, Some(1.0));
        assert_eq!(m.f1, 1.0);
        assert_eq!(m.g_mean, 1.0);
        assert_eq!(m.mcc, 1.0);
        assert_eq!(m.worst_class_accuracy, 1.0);
    }

    #[test]
    fn random_scores_have_null_auc() {
        let mut rng = rng_from_seed(3);
        let n = 100_000;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<bool>())).collect();
        let m = compute_metrics(&scores, &labels, 0.5).unwrap();
        let auc = m.auc.unwrap();
        assert!((auc - 0.5).abs() < 0.01, "auc {auc}");
    }

    #[test]
    fn degenerate_all_negative_classifier() {
        // r = 9 data, everything predicted negative: high plain accuracy,
        // zero recall, chance-level balanced accuracy.
        let n = 1000;
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i < 100)).collect();
        let scores = vec![-10.0; n];
        let m = compute_metrics(&scores, &labels, 0.5).unwrap();
        assert_eq!(m.accuracy, 0.9);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.worst_class_accuracy, 0.0);
        assert_eq!(m.balanced_accuracy, 0.5);
        assert_eq!(m.precision, 0.0); // zero predicted positives
        assert_eq!(m.mcc, 0.0); // 0/0 convention
        assert_eq!(m.g_mean, 0.0);
    }

    #[test]
    fn single_class_labels_flag_auc_undefined() {
        let m = compute_metrics(&[0.2, -0.1], &[1, 1], 0.5).unwrap();
        assert!(m.auc.is_none());
        assert_eq!(m.recall, 0.5);
    }

    #[test]
    fn metrics_recomputable_from_confusion_matrix() {
        let mut rng = rng_from_seed(7);
        for _ in 0..50 {
            let n = 200;
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<f64>() < 0.3)).collect();
            let m = compute_metrics(&scores, &labels, 0.5).unwrap();
            let (tp, fp, tn, fn_) = (m.tp as f64, m.fp as f64, m.tn as f64, m.fn_ as f64);
            let tpr = if tp + fn_ == 0.0 { 0.0 } else { tp / (tp + fn_) };
            let tnr = if tn + fp == 0.0 { 0.0 } else { tn / (tn + fp) };
            assert_eq!(m.g_mean, (tpr * tnr).sqrt());
            let f1 = if 2.0 * tp + fp + fn_ == 0.0 {
                0.0
            } else {
                2.0 * tp / (2.0 * tp + fp + fn_)
            };
            assert_eq!(m.f1, f1);
            let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
            let mcc = if den == 0.0 { 0.0 } else { (tp * tn - fp * fn_) / den };
            assert_eq!(m.mcc, mcc);
            assert_eq!(m.balanced_accuracy, m.macro_avg_accuracy);
        }
    }

    proptest! {
        #[test]
        fn rank_auc_equals_all_pairs(seed in 0u64..500) {
            let mut rng = rng_from_seed(seed);
            let n = rng.gen_range(5usize..120);
            // Coarse score grid to force plenty of ties.
            let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(-5i32..5)) as f64 / 2.0).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<f64>() < 0.4)).collect();
            labels[0] = 0;
            labels[n - 1] = 1;
            let fast = auc_rank(&scores, &labels).unwrap();
            let mut wins = 0.0f64;
            let mut pairs = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    if labels[i] == 1 && labels[j] == 0 {
                        pairs += 1.0;
                        if scores[i] > scores[j] {
                            wins += 1.0;
                        } else if scores[i] == scores[j] {
                            wins += 0.5;
                        }
                    }
                }
            }
            prop_assert_eq!(fast, wins / pairs);
        }
    }

    fn toy_imbalanced(n: usize, seed: u64) -> Dataset {
        let spec = MixtureGenSpec {
            n,
            ..MixtureGenSpec::paper_default(seed)
        };
        data::generate_mixture(&spec).unwrap()
    }

    #[test]
    fn split_is_stratified_disjoint_and_deterministic() {
        let ds = toy_imbalanced(500, 3);
        let (tr, te) = stratified_split(&ds, 0.2, 99).unwrap();
        assert_eq!(tr.len() + te.len(), ds.len());
        assert_eq!(tr.n1() + te.n1(), ds.n1());
        // Ratio preserved within one count per class.
        let want_test1 = (0.2 * ds.n1() as f64).round() as isize;
        assert!((te.n1() as isize - want_test1).abs() <= 1);
        let want_test0 = (0.2 * ds.n0() as f64).round() as isize;
        assert!((te.n0() as isize - want_test0).abs() <= 1);
        // Determinism.
        let (tr2, te2) = stratified_split(&ds, 0.2, 99).unwrap();
        assert_eq!(tr.x(), tr2.x());
        assert_eq!(te.y(), te2.y());
        // Coverage: counts per class add up and both sides see both classes.
        assert!(tr.n0() > 0 && tr.n1() > 0 && te.n0() > 0 && te.n1() > 0);

        let tiny = toy_imbalanced(12, 5);
        if tiny.n1() < 2 {
            assert!(stratified_split(&tiny, 0.2, 1).is_err());
        }
    }

    #[test]
    fn average_ranks_conventions() {
        let mk = |dataset: &str, eps: f64, method: &str, v: f64| RankCell {
            dataset: dataset.into(),
            epsilon: eps,
            method: method.into(),
            values: BTreeMap::from([("f1".to_string(), v)]),
        };
        // Method a dominates everywhere.
        let cells = vec![
            mk("d1", 1.0, "a", 0.9),
            mk("d1", 1.0, "b", 0.5),
            mk("d2", 1.0, "a", 0.8),
            mk("d2", 1.0, "b", 0.4),
        ];
        let r = average_ranks(&cells).unwrap();
        assert_eq!(r.mean_ranks["a"]["f1"], 1.0);
        assert_eq!(r.mean_ranks["b"]["f1"], 2.0);

        // Identical metrics tie at 1.5.
        let cells = vec![mk("d", 1.0, "a", 0.7), mk("d", 1.0, "b", 0.7)];
        let r = average_ranks(&cells).unwrap();
        assert_eq!(r.mean_ranks["a"]["f1"], 1.5);
        assert_eq!(r.mean_ranks["b"]["f1"], 1.5);

        // Fixed dominance order over three methods.
        let cells = vec![
            mk("d", 0.5, "a", 0.9),
            mk("d", 0.5, "b", 0.6),
            mk("d", 0.5, "c", 0.3),
        ];
        let r = average_ranks(&cells).unwrap();
        assert_eq!(r.mean_ranks["a"]["f1"], 1.0);
        assert_eq!(r.mean_ranks["b"]["f1"], 2.0);
        assert_eq!(r.mean_ranks["c"]["f1"], 3.0);

        // Missing cells are excluded and counted.
        let cells = vec![
            mk("d", 0.5, "a", 0.9),
            mk("d", 0.5, "b", 0.6),
            mk("e", 0.5, "a", 0.9),
        ];
        let r = average_ranks(&cells).unwrap();
        assert_eq!(r.missing_cells, 1);

        assert!(average_ranks(&[mk("d", 1.0, "a", 0.5)]).is_err());
    }

    #[test]
    fn boundary_grid_contract() {
        let model = LinearModel {
            beta: vec![1.0, -1.0],
            intercept: 0.0,
        };
        let grid = boundary_grid(&model, (-1.0, 1.0), (-1.0, 1.0), (21, 21)).unwrap();
        assert_eq!(grid.len(), 441);
        // The label transition tracks x = y within one cell.
        for p in &grid {
            if p.x - p.y > 0.1 {
                assert_eq!(p.label, 1, "at ({}, {})", p.x, p.y);
            }
            if p.x - p.y < -0.1 {
                assert_eq!(p.label, 0);
            }
        }

        // Single cell resolution evaluates the midpoint.
        let single = boundary_grid(&model, (0.0, 2.0), (0.0, 4.0), (1, 1)).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].x, 1.0);
        assert_eq!(single[0].y, 2.0);

        // Zero model: constant labels.
        let zero = LinearModel {
            beta: vec![0.0, 0.0],
            intercept: 0.0,
        };
        let g = boundary_grid(&zero, (-1.0, 1.0), (-1.0, 1.0), (5, 5)).unwrap();
        assert!(g.iter().all(|p| p.label == 1));

        let bad = LinearModel {
            beta: vec![0.0],
            intercept: 0.0,
        };
        assert!(boundary_grid(&bad, (-1.0, 1.0), (-1.0, 1.0), (5, 5)).is_err());
    }
}
