//! Per-pattern sparse feature selection.
//!
//! Columns are scored by their between-cluster sum of squares under the
//! pattern's phase labels, a weight vector over the columns is solved under
//! l2 <= 1, l1 <= gamma and non-negativity constraints via soft-thresholding,
//! and the top-weighted columns form the pattern's feature mask.

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Solved column weights plus the scores they were derived from.
#[derive(Debug, Clone)]
pub struct FeatureWeights {
    /// Non-negative weights, unit l2 norm unless all scores are zero.
    pub w: Vec<f64>,
    /// The l1 budget the solve was run with.
    pub gamma: f64,
    /// Per-column between-cluster scores (diagnostic).
    pub bcss: Vec<f64>,
    /// False when no threshold can push the l1 norm down to gamma (gamma
    /// below 1 with several active columns); `w` is then the attainable
    /// minimum-l1 point rather than a feasible one.
    pub gamma_feasible: bool,
}

impl FeatureWeights {
    pub fn objective(&self) -> f64 {
        self.w.iter().zip(&self.bcss).map(|(w, a)| w * a).sum()
    }
}

/// Column subset of a d-dimensional space, stored both as sorted indices and
/// as a d-bit little-endian bitset (bit j of byte j/8 is column j).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMask {
    d: usize,
    selected: Vec<usize>,
    bits: Vec<u8>,
}

impl FeatureMask {
    pub fn from_selected(d: usize, mut selected: Vec<usize>) -> Result<Self> {
        selected.sort_unstable();
        selected.dedup();
        if selected.last().is_some_and(|&c| c >= d) {
            return Err(Error::DimensionMismatch { expected: d, got: *selected.last().unwrap() });
        }
        let mut bits = vec![0u8; d.div_ceil(8)];
        for &c in &selected {
            bits[c / 8] |= 1 << (c % 8);
        }
        Ok(Self { d, selected, bits })
    }

    /// Rebuilds the index list from a raw bitset.
    pub fn from_bits(d: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != d.div_ceil(8) {
            return Err(Error::DimensionMismatch { expected: d.div_ceil(8), got: bits.len() });
        }
        // Padding bits past d must be clear.
        for c in d..bits.len() * 8 {
            if bits[c / 8] & (1 << (c % 8)) != 0 {
                return Err(Error::CorruptPayload(format!("mask bit {c} beyond dimension {d}")));
            }
        }
        let selected = (0..d).filter(|&c| bits[c / 8] & (1 << (c % 8)) != 0).collect();
        Ok(Self { d, selected, bits })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of selected columns (d').
    pub fn cardinality(&self) -> usize {
        self.selected.len()
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn gather_row(&self, row: &[f64]) -> Vec<f64> {
        self.selected.iter().map(|&c| row[c]).collect()
    }

    pub fn gather_row_into(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.selected.iter().map(|&c| row[c]));
    }

    /// Extracts the masked columns of every row into a dense row-major block.
    pub fn gather_matrix(&self, m: &FeatureMatrix) -> Vec<f64> {
        let mut out = Vec::with_capacity(m.n() * self.selected.len());
        for row in m.rows() {
            out.extend(self.selected.iter().map(|&c| row[c]));
        }
        out
    }
}

/// Between-cluster sum of squares per column for one pattern.
///
/// For column j this is
/// `(1/N) sum_{p,q in S} (p_j - q_j)^2 - sum_i (1/|S_i|) sum_{p,q in S_i} (p_j - q_j)^2`,
/// computed through the identity
/// `sum_{p,q in G} (p_j - q_j)^2 = 2 |G| sum_{p in G} (p_j - mean_G(j))^2`
/// so the cost is O(N d) rather than O(N^2 d).
pub fn bcss_scores(m: &FeatureMatrix, labels: &[u32], tau: u32) -> Result<Vec<f64>> {
    let n = m.n();
    let d = m.d();
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
    }
    let t = tau as usize;
    let mut counts = vec![0usize; t];
    for &l in labels {
        if l < 1 || l > tau {
            return Err(Error::LabelOutOfRange { pattern: 0, label: l, tau });
        }
        counts[l as usize - 1] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass { class: empty as u32 + 1, n_classes: tau });
    }

    // First pass: per-class and total column sums.
    let mut class_sums = vec![0.0f64; t * d];
    for (row, &l) in m.rows().zip(labels) {
        let sums = &mut class_sums[(l as usize - 1) * d..l as usize * d];
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    let mut total_mean = vec![0.0f64; d];
    for c in 0..t {
        for (tm, s) in total_mean.iter_mut().zip(&class_sums[c * d..(c + 1) * d]) {
            *tm += s;
        }
    }
    for tm in &mut total_mean {
        *tm /= n as f64;
    }
    let mut class_means = class_sums;
    for c in 0..t {
        let inv = 1.0 / counts[c] as f64;
        for v in &mut class_means[c * d..(c + 1) * d] {
            *v *= inv;
        }
    }

    // Second pass: centered sums of squares, total and within-class.
    let mut css_total = vec![0.0f64; d];
    let mut css_within = vec![0.0f64; d];
    for (row, &l) in m.rows().zip(labels) {
        let means = &class_means[(l as usize - 1) * d..l as usize * d];
        for j in 0..d {
            let dt = row[j] - total_mean[j];
            css_total[j] += dt * dt;
            let dw = row[j] - means[j];
            css_within[j] += dw * dw;
        }
    }

    Ok((0..d).map(|j| 2.0 * (css_total[j] - css_within[j])).collect())
}

/// Maximizes `sum_j w_j a_j` over `w >= 0`, `||w||_2 <= 1`, `||w||_1 <= gamma`.
///
/// The solution is `soft(a+, delta)` normalized to unit l2 norm, with
/// `delta = 0` when the l1 budget is slack and otherwise found by binary
/// search until `| ||w||_1 - gamma | <= 1e-6` (capped at 200 iterations).
/// When several columns tie at the maximum score the l1 norm cannot drop
/// below 1; such infeasible budgets are reported through `gamma_feasible`
/// with the attainable minimum returned.
pub fn solve_weights(a: &[f64], gamma: f64) -> FeatureWeights {
    const L1_TOL: f64 = 1e-6;
    let apos: Vec<f64> = a.iter().map(|&x| x.max(0.0)).collect();
    let amax = apos.iter().cloned().fold(0.0, f64::max);
    if amax == 0.0 {
        return FeatureWeights {
            w: vec![0.0; a.len()],
            gamma,
            bcss: a.to_vec(),
            gamma_feasible: true,
        };
    }

    let at = |delta: f64| -> (Vec<f64>, f64) {
        let mut w: Vec<f64> = apos.iter().map(|&x| (x - delta).max(0.0)).collect();
        let norm2 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm2 > 0.0 {
            for v in &mut w {
                *v /= norm2;
            }
        } else {
            // Limit as delta approaches the maximum: uniform over the argmax set.
            let ties: Vec<usize> =
                (0..apos.len()).filter(|&j| apos[j] == amax).collect();
            let v = 1.0 / (ties.len() as f64).sqrt();
            for j in ties {
                w[j] = v;
            }
        }
        let l1 = w.iter().sum::<f64>();
        (w, l1)
    };

    let (w0, l1_0) = at(0.0);
    if l1_0 <= gamma {
        return FeatureWeights { w: w0, gamma, bcss: a.to_vec(), gamma_feasible: true };
    }

    let mut lo = 0.0;
    let mut hi = amax;
    let mut best = (w0, l1_0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (w, l1) = at(mid);
        best = (w, l1);
        if (l1 - gamma).abs() <= L1_TOL {
            break;
        }
        if l1 > gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let feasible = best.1 <= gamma + L1_TOL;
    if !feasible {
        // No threshold reaches the budget; hand back the minimum-l1 point.
        best = at(amax);
    }
    FeatureWeights { w: best.0, gamma, bcss: a.to_vec(), gamma_feasible: feasible }
}

/// Takes the `d_prime` columns with the largest weights, breaking ties toward
/// the smaller column index. When fewer than `d_prime` columns carry positive
/// weight, zero-weight columns fill the mask in ascending index order so the
/// mask size (and hence the storage accounting) stays fixed.
pub fn select_columns(weights: &FeatureWeights, d_prime: usize) -> Result<FeatureMask> {
    let d = weights.w.len();
    if d_prime == 0 || d_prime > d {
        return Err(Error::InvalidConfig(format!("d_prime {d_prime} outside 1..={d}")));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        weights.w[j].partial_cmp(&weights.w[i]).unwrap().then(i.cmp(&j))
    });
    FeatureMask::from_selected(d, order[..d_prime].to_vec())
}
