//! Dense feature matrices and per-column normalization.

use crate::error::{Error, Result};

/// Per-column statistics recorded at normalization time so that queries can
/// be transformed with the training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ColStats {
    /// Column mean of the data the statistics were computed from.
    pub mean: f64,
    /// Sample standard deviation (1.0 for constant columns).
    pub scale: f64,
    /// Constant columns are left untouched by the transform.
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub cols: Vec<ColStats>,
}

impl Normalization {
    pub fn d(&self) -> usize {
        self.cols.len()
    }

    /// Applies the recorded transform to one row in place.
    pub fn apply_row(&self, row: &mut [f64]) {
        debug_assert_eq!(row.len(), self.cols.len());
        for (v, c) in row.iter_mut().zip(&self.cols) {
            if !c.constant {
                *v = (*v - c.mean) / c.scale;
            }
        }
    }

    pub fn transformed_row(&self, row: &[f64]) -> Vec<f64> {
        let mut out = row.to_vec();
        self.apply_row(&mut out);
        out
    }
}

/// N x d row-major matrix of scene descriptors (64-bit reals).
///
/// All values are finite by construction; `normalization` is present once the
/// columns have been z-scored.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
    normalization: Option<Normalization>,
}

impl FeatureMatrix {
    /// Builds a matrix, rejecting NaN/Inf values with the offending cell.
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, got: values.len() });
        }
        for (idx, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: idx / d, col: idx % d });
            }
        }
        Ok(Self { n, d, values, normalization: None })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row by 0-based position.
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.d..(r + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn set_normalization(&mut self, norm: Option<Normalization>) {
        self.normalization = norm;
    }

    /// Copies a contiguous row range (0-based, half-open) into a new matrix,
    /// carrying the normalization metadata along.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> FeatureMatrix {
        let values = self.values[range.start * self.d..range.end * self.d].to_vec();
        FeatureMatrix {
            n: range.len(),
            d: self.d,
            values,
            normalization: self.normalization.clone(),
        }
    }

    /// Z-scores every column in place and records the statistics.
    ///
    /// Constant columns keep their values and are marked so the query-side
    /// transform leaves them alone as well. Uses the Bessel-corrected sample
    /// standard deviation; a single-row matrix is all constant columns.
    pub fn normalize(&mut self) {
        let n = self.n;
        let d = self.d;
        let mut stats = Vec::with_capacity(d);
        for c in 0..d {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            let mut sum = 0.0;
            for r in 0..n {
                let v = self.values[r * d + c];
                min = min.min(v);
                max = max.max(v);
                sum += v;
            }
            let mean = sum / n as f64;
            if n < 2 || min == max {
                stats.push(ColStats { mean: 0.0, scale: 1.0, constant: true });
                continue;
            }
            let mut ss = 0.0;
            for r in 0..n {
                let dev = self.values[r * d + c] - mean;
                ss += dev * dev;
            }
            let scale = (ss / (n as f64 - 1.0)).sqrt();
            stats.push(ColStats { mean, scale, constant: false });
        }
        for r in 0..n {
            for (c, st) in stats.iter().enumerate() {
                if !st.constant {
                    let v = &mut self.values[r * d + c];
                    *v = (*v - st.mean) / st.scale;
                }
            }
        }
        self.normalization = Some(Normalization { cols: stats });
    }

    /// Transforms an already-built matrix (typically queries) with foreign
    /// statistics, e.g. the ones stored in a trained model.
    pub fn apply_normalization(&self, norm: &Normalization) -> Result<FeatureMatrix> {
        if norm.d() != self.d {
            return Err(Error::DimensionMismatch { expected: norm.d(), got: self.d });
        }
        let mut out = self.clone();
        for r in 0..out.n {
            norm.apply_row(&mut out.values[r * out.d..(r + 1) * out.d]);
        }
        out.normalization = Some(norm.clone());
        Ok(out)
    }
}
