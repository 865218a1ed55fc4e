//! Non-private data-augmentation pre-processors (deterministic
//! oversampling, SMOTE) and the class-weight / feature-bounding utilities
//! the trainers consume.
//!
//! These augmenters are non-private on purpose: the accountant in
//! `dp_core` quantifies exactly how much they inflate a downstream
//! mechanism's budget.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::dataset::{Dataset, RowOrigin};
use crate::error::{Error, Result};

/// Per-sample loss weights in (0, 1], constant within a class, with the
/// minority class pinned at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    pub w_class0: f64,
    pub w_class1: f64,
}

impl ClassWeights {
    /// Uniform weights (the unweighted objective).
    pub fn uniform() -> Self {
        ClassWeights {
            w_class0: 1.0,
            w_class1: 1.0,
        }
    }

    /// Weight of a given label.
    pub fn weight(&self, label: u8) -> f64 {
        if label == 0 {
            self.w_class0
        } else {
            self.w_class1
        }
    }

    /// Expand to one weight per row.
    pub fn per_row(&self, labels: &[u8]) -> Array1<f64> {
        Array1::from_iter(labels.iter().map(|&l| self.weight(l)))
    }
}

/// Inverse-frequency class weights normalized by their maximum, so the
/// minority class gets weight exactly 1 and all weights lie in (0, 1]
/// (the trainers' proofs need |w_i| <= 1).
pub fn class_weights(ds: &Dataset) -> Result<ClassWeights> {
    let n0 = ds.n0();
    let n1 = ds.n1();
    if n0 == 0 || n1 == 0 {
        return Err(Error::invalid("class weights need both classes nonempty"));
    }
    let n = (n0 + n1) as f64;
    let raw0 = n / n0 as f64; // 1 / pi_0
    let raw1 = n / n1 as f64; // 1 / pi_1
    let max = raw0.max(raw1);
    Ok(ClassWeights {
        w_class0: raw0 / max,
        w_class1: raw1 / max,
    })
}

/// Replicate each minority point either `ceil(N/n1)` or `floor(N/n1)` times
/// so that exactly `n_new` replicas are appended. Deterministic: the first
/// `N mod n1` minority points (in row order) receive the extra copy.
pub fn oversample_deterministic(ds: &Dataset, n_new: usize) -> Result<Dataset> {
    let n1 = ds.n1();
    if n1 == 0 {
        return Err(Error::invalid("oversampling needs at least one minority row"));
    }
    if n_new == 0 {
        return Ok(ds.clone());
    }
    let minority_idx: Vec<usize> = ds
        .y()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == 1)
        .map(|(i, _)| i)
        .collect();
    let base = n_new / n1;
    let extra = n_new % n1;

    let mut rows = Array2::<f64>::zeros((n_new, ds.dim()));
    let mut r = 0usize;
    for (pos, &i) in minority_idx.iter().enumerate() {
        let copies = base + usize::from(pos < extra);
        for _ in 0..copies {
            rows.row_mut(r).assign(&ds.x().row(i));
            r += 1;
        }
    }
    debug_assert_eq!(r, n_new);

    let mut out = ds.clone();
    out.append_rows(&rows, &vec![1u8; n_new], RowOrigin::Synthetic)?;
    Ok(out)
}

/// Indices of the k nearest L2 neighbors of each point among the others.
///
/// A point is never its own neighbor (duplicates of it are allowed). Ties
/// break toward the lower index so results are reproducible.
pub fn knn_indices(points: &Array2<f64>, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if n <= k {
        return Err(Error::invalid(format!(
            "k-NN needs more points than neighbors: n={n}, k={k}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let xi = points.row(i);
        let mut dists: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let diff = &xi - &points.row(j);
                (diff.dot(&diff), j)
            })
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        out.push(dists[..k].iter().map(|&(_, j)| j).collect());
    }
    Ok(out)
}

/// SMOTE: for t = 1..N cycle through the minority points; each step picks
/// one of the base point's k nearest minority neighbors uniformly and
/// interpolates coordinate-wise with independent uniform mixing weights.
/// Returns the `N x d` matrix of synthetic minority rows.
pub fn smote<R: Rng + ?Sized>(
    minority: &Array2<f64>,
    n_new: usize,
    k: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let n1 = minority.nrows();
    if n1 <= k {
        return Err(Error::invalid(format!(
            "SMOTE needs n1 > k (each point needs {k} neighbors among the others), got n1={n1}"
        )));
    }
    let d = minority.ncols();
    let neighbors = knn_indices(minority, k)?;
    let mut out = Array2::<f64>::zeros((n_new, d));
    for t in 0..n_new {
        let i = t % n1;
        let pick: usize = rng.gen_range(0..k);
        let j = neighbors[i][pick];
        for c in 0..d {
            let u: f64 = rng.gen();
            out[[t, c]] = (1.0 - u) * minority[[j, c]] + u * minority[[i, c]];
        }
    }
    Ok(out)
}

/// SMOTE applied to a dataset: synthesizes `n_new` minority rows from the
/// minority submatrix and appends them, all labeled positive.
pub fn smote_augment<R: Rng + ?Sized>(
    ds: &Dataset,
    n_new: usize,
    k: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let minority = ds.class_matrix(1);
    let rows = smote(&minority, n_new, k, rng)?;
    let mut out = ds.clone();
    out.append_rows(&rows, &vec![1u8; n_new], RowOrigin::Synthetic)?;
    Ok(out)
}

/// Project each row into the L2 ball of the given radius:
/// `x <- x * min(1, radius / ||x||)`. Records the radius on the dataset for
/// the trainers' sensitivity contract. Idempotent.
pub fn bound_features(ds: &Dataset, radius: f64) -> Result<Dataset> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("radius must be positive, got {radius}")));
    }
    let mut x = ds.x().clone();
    for mut row in x.axis_iter_mut(Axis(0)) {
        let norm = row.dot(&row).sqrt();
        if norm > radius {
            let s = radius / norm;
            row.mapv_inplace(|v| v * s);
        }
    }
    let mut out = ds.with_matrix(x);
    out.set_feature_radius(radius);
    Ok(out)
}

/// Affine map from the public per-feature bounds onto `[-1/sqrt(d), 1/sqrt(d)]`,
/// which places every row inside the unit L2 ball.
///
/// Unlike `bound_features` this is a fixed linear transform of the space
/// (it depends only on the public bounds, not the data), so it preserves
/// geometry and leaks nothing. Pipelines apply it before the private
/// trainers; the same map must be applied to test rows.
pub fn scale_to_public_unit_ball(ds: &Dataset) -> Result<Dataset> {
    let d = ds.dim();
    if d == 0 {
        return Err(Error::invalid("cannot scale an empty feature space"));
    }
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let mut x = ds.x().clone();
    for j in 0..d {
        let (lo, hi) = ds.bounds()[j];
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        for v in x.column_mut(j).iter_mut() {
            *v = (*v - mid) / half * inv_sqrt_d;
        }
    }
    let mut out = ds.with_matrix(x);
    out.set_bounds(vec![(-inv_sqrt_d, inv_sqrt_d); d])?;
    out.set_feature_radius(1.0);
    Ok(out)
}
