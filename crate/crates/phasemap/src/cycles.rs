//! Cyclic pattern configuration, hierarchical phase-label assignment and
//! closed-form index reconstruction.
//!
//! A database of `n_scenes` ordered scenes is covered by `k` cyclic patterns
//! with cycle lengths `tau[0] >= ... >= tau[k-1]`. Labels are assigned by
//! recursive partition: pattern 1 splits the index range into `tau[0]` equal
//! contiguous blocks, each block is split again by pattern 2, and so on. The
//! k-tuple of phase labels then identifies a scene uniquely, with no
//! co-primality requirement on the cycle lengths.

use crate::error::{Error, Result};

/// Cycle lengths for the k cyclic patterns plus derived constants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleConfig {
    taus: Vec<u32>,
    /// Product of all cycle lengths.
    capacity: usize,
    /// Number of real scenes; indices n_scenes+1..=capacity are virtual.
    n_scenes: usize,
    /// strides[j] = capacity / (tau[0] * ... * tau[j]); strides[k-1] = 1.
    strides: Vec<usize>,
}

impl CycleConfig {
    /// Validates and builds a configuration. Cycle lengths need not be
    /// co-prime; each must be at least 2 and their product must cover
    /// `n_scenes`.
    pub fn new(taus: Vec<u32>, n_scenes: usize) -> Result<Self> {
        if taus.is_empty() {
            return Err(Error::InvalidConfig("need at least one pattern".into()));
        }
        if n_scenes == 0 {
            return Err(Error::InvalidConfig("need at least one scene".into()));
        }
        if let Some(&t) = taus.iter().find(|&&t| t < 2) {
            return Err(Error::InvalidConfig(format!("cycle length {t} below 2")));
        }
        let mut capacity: usize = 1;
        for &t in &taus {
            capacity = capacity
                .checked_mul(t as usize)
                .ok_or_else(|| Error::InvalidConfig("capacity overflows".into()))?;
        }
        if capacity < n_scenes {
            return Err(Error::InvalidConfig(format!(
                "capacity {capacity} below n_scenes {n_scenes}"
            )));
        }
        let mut strides = Vec::with_capacity(taus.len());
        let mut s = capacity;
        for &t in &taus {
            s /= t as usize;
            strides.push(s);
        }
        Ok(Self { taus, capacity, n_scenes, strides })
    }

    pub fn k(&self) -> usize {
        self.taus.len()
    }

    pub fn taus(&self) -> &[u32] {
        &self.taus
    }

    pub fn tau(&self, pattern: usize) -> u32 {
        self.taus[pattern]
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn n_scenes(&self) -> usize {
        self.n_scenes
    }

    /// Stride of pattern `j`: the run length of one label value.
    pub fn stride(&self, pattern: usize) -> usize {
        self.strides[pattern]
    }

    pub fn sum_taus(&self) -> usize {
        self.taus.iter().map(|&t| t as usize).sum()
    }
}

/// Per-scene phase labels, one column per pattern. Labels are 1-based:
/// `label(i, j)` lies in `1..=tau[j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseLabels {
    n: usize,
    k: usize,
    /// Row-major n x k, 1-based label values.
    labels: Vec<u32>,
}

impl PhaseLabels {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Labels of scene `i` (1-based scene index).
    pub fn row(&self, scene: usize) -> &[u32] {
        debug_assert!((1..=self.n).contains(&scene));
        &self.labels[(scene - 1) * self.k..scene * self.k]
    }

    /// The labels of one pattern across all scenes, as an owned column.
    pub fn column(&self, pattern: usize) -> Vec<u32> {
        debug_assert!(pattern < self.k);
        (0..self.n).map(|r| self.labels[r * self.k + pattern]).collect()
    }
}

/// Assigns hierarchical phase labels to scenes `1..=n_scenes`.
///
/// Scene `i` gets label `floor((i-1) / stride[j]) mod tau[j] + 1` for
/// pattern `j`; only real scenes are materialized even when the capacity
/// exceeds the database size.
pub fn assign_labels(config: &CycleConfig) -> PhaseLabels {
    let k = config.k();
    let n = config.n_scenes();
    let mut labels = Vec::with_capacity(n * k);
    for i in 0..n {
        for j in 0..k {
            let l = (i / config.strides[j]) % config.taus[j] as usize;
            labels.push(l as u32 + 1);
        }
    }
    PhaseLabels { n, k, labels }
}

/// Recovers the scene index from one row of phase labels:
/// `i = sum_j (l_j - 1) * stride[j] + l_k`.
///
/// Errors with [`Error::LabelOutOfRange`] when a label exceeds its cycle
/// length and [`Error::IndexBeyondDatabase`] when the labels address a
/// virtual scene beyond `n_scenes`.
pub fn reconstruct_index(labels_row: &[u32], config: &CycleConfig) -> Result<usize> {
    let k = config.k();
    if labels_row.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: labels_row.len() });
    }
    let mut index = 1usize;
    for (j, &l) in labels_row.iter().enumerate() {
        if l < 1 || l > config.taus[j] {
            return Err(Error::LabelOutOfRange { pattern: j, label: l, tau: config.taus[j] });
        }
        index += (l as usize - 1) * config.strides[j];
    }
    if index > config.n_scenes {
        return Err(Error::IndexBeyondDatabase { index, n_scenes: config.n_scenes });
    }
    Ok(index)
}

/// Picks k cycle lengths close to the k-th root of `n_scenes`.
///
/// Each length is `floor(root)` or `ceil(root)`; the larger value is placed
/// first and used just often enough that the capacity covers the database,
/// which keeps the slack below one top-level block.
pub fn plan_cycles(n_scenes: usize, k: usize) -> Result<CycleConfig> {
    if k == 0 {
        return Err(Error::InvalidConfig("need at least one pattern".into()));
    }
    if n_scenes == 0 {
        return Err(Error::InvalidConfig("need at least one scene".into()));
    }
    let lo = kth_root_floor(n_scenes, k);
    if lo < 2 {
        return Err(Error::InfeasibleK { n_scenes, k });
    }
    if pow_checked(lo, k).map_or(false, |c| c >= n_scenes) {
        // Exact k-th root.
        return CycleConfig::new(vec![lo as u32; k], n_scenes);
    }
    let hi = lo + 1;
    // Smallest number of `hi` factors (placed first) that covers n_scenes.
    for m in 1..=k {
        let cap = pow_checked(hi, m).and_then(|a| {
            pow_checked(lo, k - m).and_then(|b| a.checked_mul(b))
        });
        if cap.map_or(false, |c| c >= n_scenes) {
            let mut taus = vec![hi as u32; m];
            taus.extend(std::iter::repeat(lo as u32).take(k - m));
            return CycleConfig::new(taus, n_scenes);
        }
    }
    // hi^k >= n_scenes by definition of the floor root, so the loop returns.
    unreachable!("hi^k covers n_scenes");
}

/// Largest r with r^k <= n.
fn kth_root_floor(n: usize, k: usize) -> usize {
    if k == 1 {
        return n;
    }
    let mut r = (n as f64).powf(1.0 / k as f64).round() as usize;
    while r > 1 && pow_checked(r, k).map_or(true, |p| p > n) {
        r -= 1;
    }
    while pow_checked(r + 1, k).map_or(false, |p| p <= n) {
        r += 1;
    }
    r
}

fn pow_checked(base: usize, exp: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}
