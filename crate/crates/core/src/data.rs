//! Synthetic data generators and CSV ingestion.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::MixtureSpec;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::sampling::{self, rng_from_seed};

/// A d-dimensional two-class Gaussian mixture with diagonal covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureGenSpec {
    pub mean0: Vec<f64>,
    pub mean1: Vec<f64>,
    /// Per-feature variance, shared by both classes.
    pub variance: Vec<f64>,
    /// Minority (label 1) probability.
    pub p1: f64,
    pub n: usize,
    pub seed: u64,
}

impl MixtureGenSpec {
    /// The 2-d benchmark mixture: majority at the origin, minority at
    /// (4, 4), shared variance 4, 10% positives, n = 1000.
    pub fn paper_default(seed: u64) -> Self {
        MixtureGenSpec {
            mean0: vec![0.0, 0.0],
            mean1: vec![4.0, 4.0],
            variance: vec![4.0, 4.0],
            p1: 0.1,
            n: 1000,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean0.len()
    }

    fn validate(&self) -> Result<()> {
        if self.mean0.len() != self.mean1.len() || self.mean0.len() != self.variance.len() {
            return Err(Error::invalid("mean and variance lengths disagree"));
        }
        if self.mean0.is_empty() {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        if !(self.p1 > 0.0 && self.p1 < 1.0) {
            return Err(Error::invalid("p1 must lie in (0,1)"));
        }
        if self.variance.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("variances must be positive"));
        }
        if self.n == 0 {
            return Err(Error::invalid("n must be >= 1"));
        }
        Ok(())
    }
}

/// Draw a labeled mixture sample. Public bounds are set per feature to the
/// envelope of the class means plus/minus six standard deviations.
pub fn generate_mixture(spec: &MixtureGenSpec) -> Result<Dataset> {
    spec.validate()?;
    let d = spec.dim();
    let mut rng = rng_from_seed(spec.seed);
    let mut x = Array2::<f64>::zeros((spec.n, d));
    let mut y = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let label = u8::from(rng.gen::<f64>() < spec.p1);
        let mean = if label == 1 { &spec.mean1 } else { &spec.mean0 };
        for j in 0..d {
            x[[i, j]] = mean[j] + spec.variance[j].sqrt() * sampling::standard_normal(&mut rng);
        }
        y.push(label);
    }
    let bounds: Vec<(f64, f64)> = (0..d)
        .map(|j| {
            let sd = spec.variance[j].sqrt();
            let lo = spec.mean0[j].min(spec.mean1[j]) - 6.0 * sd;
            let hi = spec.mean0[j].max(spec.mean1[j]) + 6.0 * sd;
            (lo, hi)
        })
        .collect();
    let (ds, _clipped) = Dataset::ingest(x, y, bounds)?;
    Ok(ds)
}

/// Draw the one-dimensional warm-up mixture with Pr(y=1) = 1/(1 + r*).
pub fn generate_1d_mixture<R: Rng + ?Sized>(
    spec: &MixtureSpec,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let p1 = 1.0 / (1.0 + spec.r_star);
    let mut x = Array2::<f64>::zeros((n, 1));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = u8::from(rng.gen::<f64>() < p1);
        let mu = if label == 1 { spec.mu1 } else { spec.mu0 };
        x[[i, 0]] = mu + spec.sigma * sampling::standard_normal(rng);
        y.push(label);
    }
    let bound = spec.b_bound + 8.0 * spec.sigma;
    Dataset::from_parts(x, y, vec![(-bound, bound)])
}

/// Summary statistics emitted alongside ingested datasets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n: usize,
    pub d: usize,
    pub n0: usize,
    pub n1: usize,
    pub imbalance_ratio: f64,
    pub bounds: Vec<(f64, f64)>,
    pub clipped_values: usize,
    /// Bounds were inferred from the data rather than supplied; inferred
    /// bounds are data dependent and technically leak.
    pub bounds_inferred: bool,
}

/// Load a CSV with a header row into a dataset.
///
/// `label_column` names the binary label column; all other columns must be
/// numeric features. When `bounds` is given (keyed by feature name) values
/// are clipped into them; otherwise bounds are inferred from the data and
/// flagged in the returned stats.
pub fn load_csv(
    path: &Path,
    label_column: &str,
    bounds: Option<&BTreeMap<String, (f64, f64)>>,
) -> Result<(Dataset, DatasetStats)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::data(format!("label column '{label_column}' not found")))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let d = feature_names.len();
    if d == 0 {
        return Err(Error::data("no feature columns"));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(d);
        for (i, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::data(format!(
                    "non-numeric value '{field}' in column '{}' at data row {line}",
                    headers[i]
                ))
            })?;
            if i == label_idx {
                if v == 0.0 {
                    labels.push(0);
                } else if v == 1.0 {
                    labels.push(1);
                } else {
                    return Err(Error::data(format!(
                        "label '{field}' at data row {line} is not binary"
                    )));
                }
            } else {
                row.push(v);
            }
        }
        if row.len() != d {
            return Err(Error::data(format!("row {line} has wrong field count")));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::data("file has no data rows"));
    }

    let n = rows.len();
    let mut x = Array2::<f64>::zeros((n, d));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            x[[i, j]] = v;
        }
    }

    let (resolved_bounds, inferred) = match bounds {
        Some(map) => {
            let mut b = Vec::with_capacity(d);
            for name in &feature_names {
                let got = map.get(name).ok_or_else(|| {
                    Error::data(format!("no bounds supplied for feature '{name}'"))
                })?;
                b.push(*got);
            }
            (b, false)
        }
        None => {
            let mut b = Vec::with_capacity(d);
            for j in 0..d {
                let col = x.column(j);
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                // Widen degenerate constant columns so lo < hi holds.
                if lo == hi {
                    b.push((lo - 0.5, hi + 0.5));
                } else {
                    b.push((lo, hi));
                }
            }
            (b, true)
        }
    };

    let (mut ds, clipped) = Dataset::ingest(x, labels, resolved_bounds)?;
    ds.set_feature_names(feature_names)?;
    if ds.n0() == 0 || ds.n1() == 0 {
        return Err(Error::data("file contains a single class"));
    }
    let stats = DatasetStats {
        n: ds.len(),
        d: ds.dim(),
        n0: ds.n0(),
        n1: ds.n1(),
        imbalance_ratio: ds.imbalance_ratio(),
        bounds: ds.bounds().to_vec(),
        clipped_values: clipped,
        bounds_inferred: inferred,
    };
    Ok((ds, stats))
}

/// Write a dataset as CSV (features then a `label` column). Values use the
/// shortest round-trip float representation, so a reload reproduces them
/// exactly.
pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let names: Vec<String> = match ds.feature_names() {
        Some(n) => n.to_vec(),
        None => (0..ds.dim()).map(|j| format!("f{j}")).collect(),
    };
    let mut header = names;
    header.push("label".to_string());
    writer.write_record(&header)?;
    for (row, &label) in ds.x().outer_iter().zip(ds.y()) {
        let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        record.push(label.to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
