//! End-to-end single-sequence encoder.
//!
//! Training plans the cycle lengths, assigns hierarchical phase labels,
//! learns a feature mask per pattern, and trains one phase encoder per
//! pattern over the masked columns. A query is masked per pattern, classified
//! by each phase encoder, and the label tuple is folded back into a scene
//! index in closed form. Storage is accounted exactly as the model file lays
//! the payload out: `width * (d' + 1) * (tau_1 + ... + tau_k)` bytes of
//! encoder parameters plus one d-bit mask per pattern.

use rayon::prelude::*;

use crate::cycles::{assign_labels, plan_cycles, reconstruct_index, CycleConfig};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Normalization};
use crate::selection::{bcss_scores, select_columns, solve_weights, FeatureMask};
use crate::svm::{self, derive_seed, LinearModel, Samples, TrainOptions};

/// Width of a stored real number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RealWidth {
    F32,
    F64,
}

impl RealWidth {
    pub fn bytes(self) -> u64 {
        match self {
            RealWidth::F32 => 4,
            RealWidth::F64 => 8,
        }
    }

    pub fn from_bytes(b: u8) -> Result<Self> {
        match b {
            4 => Ok(RealWidth::F32),
            8 => Ok(RealWidth::F64),
            other => Err(Error::CorruptPayload(format!("bad real width {other}"))),
        }
    }
}

/// Run-level training parameters, all recorded in the model file.
#[derive(Debug, Clone, Copy)]
pub struct TrainParams {
    /// Number of cyclic patterns.
    pub k: usize,
    /// Masked fraction: d' = round(rho * d).
    pub rho: f64,
    /// l1 budget for the weight solve.
    pub gamma: f64,
    /// Hinge penalty for the phase encoders.
    pub reg_strength: f64,
    pub seed: u64,
    pub real_width: RealWidth,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            k: 3,
            rho: 0.5,
            gamma: 10.0,
            reg_strength: 1.0,
            seed: 42,
            real_width: RealWidth::F64,
        }
    }
}

/// One cyclic pattern: its feature mask and trained phase encoder.
#[derive(Debug, Clone)]
pub struct PatternModel {
    pub tau: u32,
    pub mask: FeatureMask,
    pub encoder: LinearModel,
}

/// A fully trained single-sequence model.
#[derive(Debug, Clone)]
pub struct EncodedDatabase {
    config: CycleConfig,
    patterns: Vec<PatternModel>,
    d: usize,
    d_prime: usize,
    params: TrainParams,
    normalization: Option<Normalization>,
}

impl EncodedDatabase {
    pub fn config(&self) -> &CycleConfig {
        &self.config
    }

    pub fn patterns(&self) -> &[PatternModel] {
        &self.patterns
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn d_prime(&self) -> usize {
        self.d_prime
    }

    pub fn params(&self) -> &TrainParams {
        &self.params
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn n_scenes(&self) -> usize {
        self.config.n_scenes()
    }

    pub(crate) fn from_parts(
        config: CycleConfig,
        patterns: Vec<PatternModel>,
        d: usize,
        d_prime: usize,
        params: TrainParams,
        normalization: Option<Normalization>,
    ) -> Result<Self> {
        if patterns.len() != config.k() {
            return Err(Error::CorruptPayload(format!(
                "{} patterns for k = {}",
                patterns.len(),
                config.k()
            )));
        }
        for (j, p) in patterns.iter().enumerate() {
            if p.mask.cardinality() != d_prime
                || p.encoder.dim() != d_prime
                || p.encoder.n_classes() != p.tau as usize
                || p.tau != config.tau(j)
            {
                return Err(Error::CorruptPayload(format!("pattern {j} shape mismatch")));
            }
        }
        Ok(Self { config, patterns, d, d_prime, params, normalization })
    }

    /// Transforms a raw query with the model's stored training statistics.
    pub fn normalize_query(&self, x: &[f64]) -> Result<Vec<f64>> {
        let norm = self.normalization.as_ref().ok_or(Error::NotNormalized)?;
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: x.len() });
        }
        Ok(norm.transformed_row(x))
    }

    /// Predicts the phase labels of a normalized query, one per pattern.
    pub fn predict_labels(&self, x: &[f64]) -> Result<Vec<u32>> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: x.len() });
        }
        let mut labels = Vec::with_capacity(self.patterns.len());
        let mut masked = Vec::with_capacity(self.d_prime);
        for p in &self.patterns {
            p.mask.gather_row_into(x, &mut masked);
            labels.push(p.encoder.predict(&masked)?);
        }
        Ok(labels)
    }
}

/// Trains the full single-sequence pipeline on a normalized feature matrix.
pub fn train_database(s: &FeatureMatrix, params: &TrainParams) -> Result<EncodedDatabase> {
    if s.normalization().is_none() {
        return Err(Error::NotNormalized);
    }
    let n = s.n();
    let d = s.d();
    if n == 1 {
        return trivial_database(s, params);
    }
    let config = plan_cycles(n, params.k)?;
    let labels = assign_labels(&config);
    let d_prime = ((params.rho * d as f64).round() as usize).clamp(1, d);

    let patterns: Vec<PatternModel> = (0..config.k())
        .into_par_iter()
        .map(|j| {
            let tau = config.tau(j);
            let col = labels.column(j);
            let scores = bcss_scores(s, &col, tau)?;
            let weights = solve_weights(&scores, params.gamma);
            let mask = select_columns(&weights, d_prime)?;
            let masked = mask.gather_matrix(s);
            let x = Samples::new(&masked, n, d_prime)?;
            let opts = TrainOptions {
                reg_strength: params.reg_strength,
                tol: 1e-4,
                max_epochs: 1000,
                seed: derive_seed(params.seed, 0x5050_0000 + j as u64),
            };
            let encoder = svm::train(x, &col, tau as usize, opts)?;
            Ok(PatternModel { tau, mask, encoder })
        })
        .collect::<Result<_>>()?;

    EncodedDatabase::from_parts(
        config,
        patterns,
        d,
        d_prime,
        *params,
        s.normalization().cloned(),
    )
}

/// Single-scene database: the cycle plan is infeasible (no k-th root of 1
/// reaches 2), so a fixed two-phase pattern whose encoder always answers
/// phase 1 stands in. Every query then decodes to index 1.
fn trivial_database(s: &FeatureMatrix, params: &TrainParams) -> Result<EncodedDatabase> {
    let d = s.d();
    let d_prime = ((params.rho * d as f64).round() as usize).clamp(1, d);
    let config = CycleConfig::new(vec![2], 1)?;
    let scores = vec![0.0; d];
    let mask = select_columns(&solve_weights(&scores, params.gamma), d_prime)?;
    let hyperplanes = vec![0.0; 2 * d_prime];
    let biases = vec![1.0, 0.0];
    let encoder =
        LinearModel::from_parts(2, d_prime, hyperplanes, biases, params.reg_strength, params.seed)?;
    EncodedDatabase::from_parts(
        config,
        vec![PatternModel { tau: 2, mask, encoder }],
        d,
        d_prime,
        *params,
        s.normalization().cloned(),
    )
}

/// Decodes one normalized query to a scene index. `Ok(None)` means the
/// predicted labels address a virtual scene beyond the database, which is
/// reported as an abstention rather than a clamped guess.
pub fn query(db: &EncodedDatabase, x: &[f64]) -> Result<Option<usize>> {
    let labels = db.predict_labels(x)?;
    match reconstruct_index(&labels, db.config()) {
        Ok(i) => Ok(Some(i)),
        Err(Error::IndexBeyondDatabase { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Queries every row of a normalized matrix.
pub fn query_batch(db: &EncodedDatabase, queries: &FeatureMatrix) -> Result<Vec<Option<usize>>> {
    if queries.d() != db.d() {
        return Err(Error::DimensionMismatch { expected: db.d(), got: queries.d() });
    }
    (0..queries.n())
        .into_par_iter()
        .map(|r| query(db, queries.row(r)))
        .collect()
}

/// Model storage in bytes: `width * (d' + 1) * sum(taus) + k * ceil(d / 8)`.
pub fn storage_formula_bytes(db: &EncodedDatabase) -> u64 {
    storage_formula(
        db.params.real_width,
        db.d,
        db.d_prime,
        db.config.sum_taus() as u64,
        db.config.k() as u64,
    )
}

/// The same formula over raw quantities, for planned-but-untrained configs.
pub fn storage_formula(width: RealWidth, d: usize, d_prime: usize, sum_taus: u64, k: u64) -> u64 {
    width.bytes() * (d_prime as u64 + 1) * sum_taus + k * (d as u64).div_ceil(8)
}
