//! Reference implementation of the prior co-prime encoding.
//!
//! Labels cycle sequentially (`(i-1) mod tau + 1`) over pairwise co-prime
//! cycle lengths whose product covers the database, and decoding intersects
//! the per-pattern residue candidate lists. Kept minimal: it exists to give
//! the benchmarks a faithful storage/time/precision baseline, not to
//! reproduce the full prior system.

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::selection::{bcss_scores, select_columns, solve_weights, FeatureMask};
use crate::svm::{self, derive_seed, LinearModel, Samples, TrainOptions};

#[derive(Debug, Clone)]
pub struct CoprimeParams {
    pub taus: Vec<u32>,
    /// `Some(rho)` borrows the pattern-learning masks (for matched-storage
    /// comparisons); `None` is the prior method's full-dimension form.
    pub rho: Option<f64>,
    pub gamma: f64,
    pub reg_strength: f64,
    pub seed: u64,
}

/// Trained co-prime phase encoders.
#[derive(Debug, Clone)]
pub struct CoprimeEncoder {
    taus: Vec<u32>,
    n_scenes: usize,
    d: usize,
    masks: Option<Vec<FeatureMask>>,
    models: Vec<LinearModel>,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn validate_coprime(taus: &[u32]) -> Result<()> {
    for i in 0..taus.len() {
        for j in i + 1..taus.len() {
            if gcd(taus[i] as u64, taus[j] as u64) != 1 {
                return Err(Error::NotCoprime { taus: taus.to_vec() });
            }
        }
    }
    Ok(())
}

/// Sequential cyclic labels for one pattern.
pub fn cyclic_labels(n: usize, tau: u32) -> Vec<u32> {
    (0..n).map(|i| (i % tau as usize) as u32 + 1).collect()
}

/// Picks k pairwise co-prime cycle lengths near the k-th root of n with a
/// product covering n: ascending candidates from the root, retrying from a
/// higher start until the product is large enough.
pub fn plan_coprime_cycles(n: usize, k: usize) -> Result<Vec<u32>> {
    if k == 0 || n == 0 {
        return Err(Error::InvalidConfig("need k >= 1 and n >= 1".into()));
    }
    let root = (n as f64).powf(1.0 / k as f64).floor() as u64;
    let mut start = root.max(2);
    loop {
        let mut chosen: Vec<u64> = Vec::with_capacity(k);
        let mut candidate = start;
        while chosen.len() < k {
            if chosen.iter().all(|&c| gcd(c, candidate) == 1) {
                chosen.push(candidate);
            }
            candidate += 1;
        }
        let product: u128 = chosen.iter().map(|&c| c as u128).product();
        if product >= n as u128 {
            return Ok(chosen.into_iter().map(|c| c as u32).collect());
        }
        start += 1;
    }
}

/// Trains one linear phase encoder per co-prime pattern.
pub fn train_coprime(s: &FeatureMatrix, params: &CoprimeParams) -> Result<CoprimeEncoder> {
    if s.normalization().is_none() {
        return Err(Error::NotNormalized);
    }
    validate_coprime(&params.taus)?;
    let n = s.n();
    let d = s.d();
    let product: u128 = params.taus.iter().map(|&t| t as u128).product();
    if product < n as u128 {
        return Err(Error::InvalidConfig(format!(
            "co-prime capacity {product} below n_scenes {n}"
        )));
    }

    let mut masks = params.rho.map(|_| Vec::with_capacity(params.taus.len()));
    let mut models = Vec::with_capacity(params.taus.len());
    for (j, &tau) in params.taus.iter().enumerate() {
        let labels = cyclic_labels(n, tau);
        let opts = TrainOptions {
            reg_strength: params.reg_strength,
            tol: 1e-4,
            max_epochs: 1000,
            seed: derive_seed(params.seed, 0xC0_0000 + j as u64),
        };
        let model = match params.rho {
            Some(rho) => {
                let d_prime = ((rho * d as f64).round() as usize).clamp(1, d);
                let scores = bcss_scores(s, &labels, tau)?;
                let mask = select_columns(&solve_weights(&scores, params.gamma), d_prime)?;
                let masked = mask.gather_matrix(s);
                let x = Samples::new(&masked, n, d_prime)?;
                let m = svm::train(x, &labels, tau as usize, opts)?;
                masks.as_mut().unwrap().push(mask);
                m
            }
            None => {
                let x = Samples::new(s.values(), n, d)?;
                svm::train(x, &labels, tau as usize, opts)?
            }
        };
        models.push(model);
    }
    Ok(CoprimeEncoder { taus: params.taus.clone(), n_scenes: n, d, masks, models })
}

impl CoprimeEncoder {
    pub fn taus(&self) -> &[u32] {
        &self.taus
    }

    pub fn predict_labels(&self, x: &[f64]) -> Result<Vec<u32>> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: x.len() });
        }
        let mut labels = Vec::with_capacity(self.models.len());
        for (j, model) in self.models.iter().enumerate() {
            let label = match &self.masks {
                Some(masks) => model.predict(&masks[j].gather_row(x))?,
                None => model.predict(x)?,
            };
            labels.push(label);
        }
        Ok(labels)
    }

    /// The prior method's decode: intersect the residue candidate lists of
    /// every pattern over 1..=n. Empty intersection is an abstention.
    pub fn decode_labels(&self, labels: &[u32]) -> Option<usize> {
        let tau0 = self.taus[0] as usize;
        let first = labels[0] as usize; // smallest index with that residue
        let mut candidates: Vec<usize> =
            (first..=self.n_scenes).step_by(tau0).collect();
        for (j, &tau) in self.taus.iter().enumerate().skip(1) {
            let want = labels[j] as usize - 1;
            candidates.retain(|&i| (i - 1) % tau as usize == want);
            if candidates.is_empty() {
                return None;
            }
        }
        debug_assert!(candidates.len() <= 1, "co-prime residues must pin one index");
        candidates.first().copied()
    }

    pub fn query(&self, x: &[f64]) -> Result<Option<usize>> {
        Ok(self.decode_labels(&self.predict_labels(x)?))
    }

    pub fn query_batch(&self, queries: &FeatureMatrix) -> Result<Vec<Option<usize>>> {
        (0..queries.n()).map(|r| self.query(queries.row(r))).collect()
    }

    /// Storage in bytes: masked form matches the main formula; the prior
    /// full-dimension form stores (d + 1) reals per class and no masks.
    pub fn storage_bytes(&self) -> u64 {
        let sum_taus: u64 = self.taus.iter().map(|&t| t as u64).sum();
        match &self.masks {
            Some(masks) => {
                let d_prime = masks[0].cardinality() as u64;
                8 * (d_prime + 1) * sum_taus
                    + self.taus.len() as u64 * (self.d as u64).div_ceil(8)
            }
            None => 8 * (self.d as u64 + 1) * sum_taus,
        }
    }
}
