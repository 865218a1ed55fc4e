//! The labeled dataset type shared by pre-processors, trainers, and the
//! evaluation harness.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a row came from. Pre-processors tag the rows they fabricate so the
/// evaluation protocol can assert that no synthetic row leaks into a test
/// split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowOrigin {
    Original,
    Synthetic,
}

/// Feature matrix with per-feature public bounds plus a binary label vector.
///
/// Bounds are treated as public metadata: ingestion clips values into them,
/// and mechanisms calibrate sensitivity from them. Labels are 0 (majority by
/// convention) and 1 (minority by convention).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Vec<u8>,
    bounds: Vec<(f64, f64)>,
    origin: Vec<RowOrigin>,
    /// Row L2 norm bound recorded by `preprocess::bound_features`.
    feature_radius: Option<f64>,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    /// Build a dataset, clipping every value into its feature's public
    /// bounds. Returns the number of clipped entries alongside.
    pub fn ingest(
        x: Array2<f64>,
        y: Vec<u8>,
        bounds: Vec<(f64, f64)>,
    ) -> Result<(Self, usize)> {
        let mut ds = Self::from_parts(x, y, bounds)?;
        let mut clipped = 0usize;
        for mut row in ds.x.axis_iter_mut(Axis(0)) {
            for (j, v) in row.iter_mut().enumerate() {
                let (lo, hi) = ds.bounds[j];
                if *v < lo {
                    *v = lo;
                    clipped += 1;
                } else if *v > hi {
                    *v = hi;
                    clipped += 1;
                }
            }
        }
        Ok((ds, clipped))
    }

    /// Build a dataset without clipping. Values must already respect bounds
    /// when the caller says they do; no check is made here.
    pub fn from_parts(x: Array2<f64>, y: Vec<u8>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::data(format!(
                "feature matrix has {} rows but label vector has {}",
                x.nrows(),
                y.len()
            )));
        }
        if x.ncols() != bounds.len() {
            return Err(Error::data(format!(
                "feature matrix has {} columns but {} bounds were given",
                x.ncols(),
                bounds.len()
            )));
        }
        if bounds.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::data("each feature bound must satisfy lo < hi"));
        }
        if y.iter().any(|&l| l > 1) {
            return Err(Error::data("labels must be 0 or 1"));
        }
        let origin = vec![RowOrigin::Original; y.len()];
        Ok(Dataset {
            x,
            y,
            bounds,
            origin,
            feature_radius: None,
            feature_names: None,
        })
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn origin(&self) -> &[RowOrigin] {
        &self.origin
    }

    pub fn feature_radius(&self) -> Option<f64> {
        self.feature_radius
    }

    pub(crate) fn set_feature_radius(&mut self, r: f64) {
        self.feature_radius = Some(r);
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn set_feature_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.dim() {
            return Err(Error::data("feature name count must match dimension"));
        }
        self.feature_names = Some(names);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Majority (label 0) count.
    pub fn n0(&self) -> usize {
        self.y.iter().filter(|&&l| l == 0).count()
    }

    /// Minority (label 1) count.
    pub fn n1(&self) -> usize {
        self.y.iter().filter(|&&l| l == 1).count()
    }

    /// Imbalance ratio n0 / n1; infinite when no positive rows exist.
    pub fn imbalance_ratio(&self) -> f64 {
        self.n0() as f64 / self.n1() as f64
    }

    /// Feature matrix restricted to one class.
    pub fn class_matrix(&self, label: u8) -> Array2<f64> {
        let idx: Vec<usize> = self
            .y
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect();
        self.x.select(Axis(0), &idx)
    }

    /// Subset by row indices, preserving metadata.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            bounds: self.bounds.clone(),
            origin: idx.iter().map(|&i| self.origin[i]).collect(),
            feature_radius: self.feature_radius,
            feature_names: self.feature_names.clone(),
        }
    }

    /// Append rows with an explicit origin tag. Shapes must match.
    pub fn append_rows(&mut self, rows: &Array2<f64>, labels: &[u8], origin: RowOrigin) -> Result<()> {
        if rows.ncols() != self.dim() {
            return Err(Error::data("appended rows have wrong dimension"));
        }
        if rows.nrows() != labels.len() {
            return Err(Error::data("appended rows and labels disagree in count"));
        }
        self.x.append(Axis(0), rows.view()).map_err(|e| Error::data(e.to_string()))?;
        self.y.extend_from_slice(labels);
        self.origin.extend(std::iter::repeat(origin).take(labels.len()));
        // Row-wise norm bounds no longer certified after appending.
        self.feature_radius = None;
        Ok(())
    }

    /// Flip labels so the positive class is the minority, if it is not
    /// already. Returns whether a flip happened.
    pub fn with_minority_positive(mut self) -> (Dataset, bool) {
        if self.n1() > self.n0() {
            for l in &mut self.y {
                *l = 1 - *l;
            }
            (self, true)
        } else {
            (self, false)
        }
    }

    /// Replace the feature matrix (same shape) keeping metadata; used by
    /// row-scaling pre-processors.
    pub(crate) fn with_matrix(&self, x: Array2<f64>) -> Dataset {
        debug_assert_eq!(x.dim(), self.x.dim());
        Dataset {
            x,
            y: self.y.clone(),
            bounds: self.bounds.clone(),
            origin: self.origin.clone(),
            feature_radius: self.feature_radius,
            feature_names: self.feature_names.clone(),
        }
    }

    /// Tag every row with the same origin.
    pub(crate) fn set_origin_all(&mut self, origin: RowOrigin) {
        self.origin.fill(origin);
    }

    pub(crate) fn set_bounds(&mut self, bounds: Vec<(f64, f64)>) -> Result<()> {
        if bounds.len() != self.dim() {
            return Err(Error::data("bounds count must match dimension"));
        }
        self.bounds = bounds;
        Ok(())
    }

    /// Labels as a float vector (0.0 / 1.0).
    pub fn y_float(&self) -> Array1<f64> {
        Array1::from_iter(self.y.iter().map(|&l| l as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> Dataset {
        Dataset::from_parts(
            array![[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]],
            vec![0, 0, 1],
            vec![(-10.0, 10.0), (-10.0, 10.0)],
        )
        .unwrap()
    }

    #[test]
    fn counts_and_ratio() {
        let ds = toy();
        assert_eq!(ds.n0(), 2);
        assert_eq!(ds.n1(), 1);
        assert_eq!(ds.imbalance_ratio(), 2.0);
        assert_eq!(ds.dim(), 2);
    }

    #[test]
    fn ingestion_clips_and_counts() {
        let (ds, clipped) = Dataset::ingest(
            array![[20.0, -3.0], [0.0, 11.0]],
            vec![0, 1],
            vec![(-10.0, 10.0), (-10.0, 10.0)],
        )
        .unwrap();
        assert_eq!(clipped, 2);
        assert_eq!(ds.x()[[0, 0]], 10.0);
        assert_eq!(ds.x()[[1, 1]], 10.0);
    }

    #[test]
    fn minority_positive_flip() {
        let ds = Dataset::from_parts(
            array![[0.0], [1.0], [2.0]],
            vec![1, 1, 0],
            vec![(-5.0, 5.0)],
        )
        .unwrap();
        let (flipped, did) = ds.with_minority_positive();
        assert!(did);
        assert_eq!(flipped.y(), &[0, 0, 1]);
        let (same, did2) = flipped.with_minority_positive();
        assert!(!did2);
        assert_eq!(same.n1(), 1);
    }

    #[test]
    fn shape_mismatches_rejected() {
        assert!(Dataset::from_parts(array![[0.0]], vec![0, 1], vec![(-1.0, 1.0)]).is_err());
        assert!(Dataset::from_parts(array![[0.0]], vec![0], vec![]).is_err());
        assert!(Dataset::from_parts(array![[0.0]], vec![2], vec![(-1.0, 1.0)]).is_err());
    }
}
