//! Storage-versus-size sweeps: for each database size, the cheapest
//! configuration on a small (k, rho) grid that still meets a target
//! precision.

use serde::Serialize;

use crate::cycles::plan_cycles;
use crate::encoder::{self, storage_formula, RealWidth, TrainParams};
use crate::error::{Error, Result};
use crate::eval::precision_at;
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Serialize)]
pub struct SweepParams {
    pub n_grid: Vec<usize>,
    pub k_grid: Vec<usize>,
    pub rho_grid: Vec<f64>,
    /// Frame tolerance the precision is measured at.
    pub tolerance: usize,
    pub gamma: f64,
    pub reg_strength: f64,
    pub seed: u64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            n_grid: vec![200, 500, 1000, 2000, 5000, 10_000],
            k_grid: vec![2, 3, 4, 5],
            rho_grid: vec![0.4, 0.5, 0.6],
            tolerance: 5,
            gamma: 10.0,
            reg_strength: 1.0,
            seed: 42,
        }
    }
}

/// One evaluated grid configuration at a fixed database size.
#[derive(Debug, Clone, Serialize)]
pub struct EvaluatedConfig {
    pub k: usize,
    pub rho: f64,
    pub storage_bytes: u64,
    pub precision: f64,
}

/// Result at one database size: every configuration evaluated (ascending
/// storage) and, per target, the cheapest one that met it.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub n: usize,
    pub evaluated: Vec<EvaluatedConfig>,
    /// Parallel to the sweep's target list; `None` marks an unreachable
    /// target at this size (a gap point, the sweep continues).
    pub best: Vec<Option<EvaluatedConfig>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutcome {
    pub targets: Vec<f64>,
    pub params: SweepParams,
    pub points: Vec<SweepPoint>,
}

impl SweepOutcome {
    /// (n, storage) series of the cheapest successful configs for one target.
    pub fn series(&self, target_idx: usize) -> (Vec<f64>, Vec<f64>) {
        let mut sizes = Vec::new();
        let mut storages = Vec::new();
        for p in &self.points {
            if let Some(best) = &p.best[target_idx] {
                sizes.push(p.n as f64);
                storages.push(best.storage_bytes as f64);
            }
        }
        (sizes, storages)
    }
}

/// Sweeps the size grid for several targets at once. For each size the grid
/// configurations are evaluated in ascending formula-storage order and
/// evaluation stops once every target has been met, so each target's minimum
/// is exact while cheap configs are tried first.
pub fn sweep_multi_target(
    train_raw: &FeatureMatrix,
    query_raw: &FeatureMatrix,
    targets: &[f64],
    params: &SweepParams,
) -> Result<SweepOutcome> {
    let max_n = *params.n_grid.iter().max().unwrap_or(&0);
    if train_raw.n() < max_n || query_raw.n() < max_n {
        return Err(Error::InvalidConfig(format!(
            "dataset holds {} rows, the sweep needs {max_n}",
            train_raw.n()
        )));
    }
    let d = train_raw.d();
    let mut points = Vec::with_capacity(params.n_grid.len());
    for &n in &params.n_grid {
        // Candidate configs with their formula storage, cheap first.
        let mut configs: Vec<(usize, f64, u64)> = Vec::new();
        for &k in &params.k_grid {
            let Ok(cfg) = plan_cycles(n, k) else { continue };
            for &rho in &params.rho_grid {
                let d_prime = ((rho * d as f64).round() as usize).clamp(1, d);
                let bytes = storage_formula(
                    RealWidth::F64,
                    d,
                    d_prime,
                    cfg.sum_taus() as u64,
                    k as u64,
                );
                configs.push((k, rho, bytes));
            }
        }
        configs.sort_by(|a, b| a.2.cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.total_cmp(&b.1)));

        let mut train = train_raw.slice_rows(0..n);
        train.set_normalization(None);
        train.normalize();
        let queries = query_raw
            .slice_rows(0..n)
            .apply_normalization(train.normalization().unwrap())?;
        let truth: Vec<usize> = (1..=n).collect();

        let mut evaluated = Vec::new();
        let mut best: Vec<Option<EvaluatedConfig>> = vec![None; targets.len()];
        for (k, rho, bytes) in configs {
            if best.iter().all(|b| b.is_some()) {
                break;
            }
            let train_params = TrainParams {
                k,
                rho,
                gamma: params.gamma,
                reg_strength: params.reg_strength,
                seed: params.seed,
                real_width: RealWidth::F64,
            };
            let db = encoder::train_database(&train, &train_params)?;
            debug_assert_eq!(encoder::storage_formula_bytes(&db), bytes);
            let preds = encoder::query_batch(&db, &queries)?;
            let precision = precision_at(&preds, &truth, params.tolerance);
            let config = EvaluatedConfig { k, rho, storage_bytes: bytes, precision };
            for (slot, &target) in best.iter_mut().zip(targets) {
                if slot.is_none() && precision >= target {
                    *slot = Some(config.clone());
                }
            }
            evaluated.push(config);
        }
        points.push(SweepPoint { n, evaluated, best });
    }
    Ok(SweepOutcome { targets: targets.to_vec(), params: params.clone(), points })
}

/// Single-target sweep: the smallest storage at each size that reaches the
/// target precision.
pub fn sweep_storage_vs_n(
    train_raw: &FeatureMatrix,
    query_raw: &FeatureMatrix,
    target_precision: f64,
    params: &SweepParams,
) -> Result<SweepOutcome> {
    sweep_multi_target(train_raw, query_raw, &[target_precision], params)
}
