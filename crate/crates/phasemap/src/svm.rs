//! Multi-class linear max-margin classifier.
//!
//! One-vs-rest L2-regularized hinge-loss classifiers trained by dual
//! coordinate descent with shrinking. The bias is trained as an extra
//! always-one feature, so each class stores exactly dim + 1 reals. Row
//! visitation order is a permutation drawn from a per-class RNG seeded from
//! the training seed, which makes retraining bit-reproducible; the binary
//! subproblems run concurrently over disjoint outputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Borrowed row-major sample block.
#[derive(Debug, Clone, Copy)]
pub struct Samples<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
}

impl<'a> Samples<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(Self { data, rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &'a [f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    /// Hinge penalty C.
    pub reg_strength: f64,
    /// Stop once the projected-gradient gap falls below this.
    pub tol: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { reg_strength: 1.0, tol: 1e-4, max_epochs: 1000, seed: 42 }
    }
}

/// tau one-vs-rest linear decision functions over dim-dimensional inputs.
/// Storage shape is exactly tau * (dim + 1) reals.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    n_classes: usize,
    dim: usize,
    /// Row-major n_classes x dim.
    hyperplanes: Vec<f64>,
    biases: Vec<f64>,
    reg_strength: f64,
    seed: u64,
}

impl LinearModel {
    pub fn from_parts(
        n_classes: usize,
        dim: usize,
        hyperplanes: Vec<f64>,
        biases: Vec<f64>,
        reg_strength: f64,
        seed: u64,
    ) -> Result<Self> {
        if hyperplanes.len() != n_classes * dim {
            return Err(Error::DimensionMismatch {
                expected: n_classes * dim,
                got: hyperplanes.len(),
            });
        }
        if biases.len() != n_classes {
            return Err(Error::DimensionMismatch { expected: n_classes, got: biases.len() });
        }
        Ok(Self { n_classes, dim, hyperplanes, biases, reg_strength, seed })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hyperplane(&self, class: usize) -> &[f64] {
        &self.hyperplanes[class * self.dim..(class + 1) * self.dim]
    }

    pub fn hyperplanes(&self) -> &[f64] {
        &self.hyperplanes
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn reg_strength(&self) -> f64 {
        self.reg_strength
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Predicted label in 1..=n_classes; ties go to the smallest class index.
    pub fn predict(&self, x: &[f64]) -> Result<u32> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for c in 0..self.n_classes {
            let score = dot(self.hyperplane(c), x) + self.biases[c];
            if score > best_score {
                best_score = score;
                best = c;
            }
        }
        Ok(best as u32 + 1)
    }

    /// Elementwise equal to [`predict`](Self::predict), run as a blocked pass
    /// over the rows for throughput.
    pub fn predict_batch(&self, x: Samples<'_>) -> Result<Vec<u32>> {
        if x.cols() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.cols() });
        }
        const BLOCK: usize = 64;
        let mut out = Vec::with_capacity(x.rows());
        let mut scores = vec![f64::NEG_INFINITY; BLOCK];
        let mut winner = vec![0u32; BLOCK];
        let mut start = 0;
        while start < x.rows() {
            let len = BLOCK.min(x.rows() - start);
            scores[..len].fill(f64::NEG_INFINITY);
            winner[..len].fill(1);
            for c in 0..self.n_classes {
                let h = self.hyperplane(c);
                let b = self.biases[c];
                for r in 0..len {
                    let s = dot(h, x.row(start + r)) + b;
                    if s > scores[r] {
                        scores[r] = s;
                        winner[r] = c as u32 + 1;
                    }
                }
            }
            out.extend_from_slice(&winner[..len]);
            start += len;
        }
        Ok(out)
    }
}

/// Result of one binary subproblem.
struct BinarySolution {
    /// dim weights followed by the bias.
    w: Vec<f64>,
    /// Dual objective after each epoch (non-increasing).
    objective_trace: Vec<f64>,
}

/// Trains tau one-vs-rest classifiers on labels in 1..=n_classes.
///
/// Every class must have at least one row. The per-class subproblems run in
/// parallel and each is solved single-threaded to a projected-gradient gap
/// of `tol` or `max_epochs` passes.
pub fn train(x: Samples<'_>, y: &[u32], n_classes: usize, opts: TrainOptions) -> Result<LinearModel> {
    train_traced(x, y, n_classes, opts).map(|(m, _)| m)
}

/// Like [`train`] but also returns the per-class dual-objective traces.
pub fn train_traced(
    x: Samples<'_>,
    y: &[u32],
    n_classes: usize,
    opts: TrainOptions,
) -> Result<(LinearModel, Vec<Vec<f64>>)> {
    if n_classes == 0 {
        return Err(Error::InvalidConfig("need at least one class".into()));
    }
    if y.len() != x.rows() {
        return Err(Error::DimensionMismatch { expected: x.rows(), got: y.len() });
    }
    let mut counts = vec![0usize; n_classes];
    for &l in y {
        if l < 1 || l as usize > n_classes {
            return Err(Error::LabelOutOfRange { pattern: 0, label: l, tau: n_classes as u32 });
        }
        counts[l as usize - 1] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass { class: empty as u32 + 1, n_classes: n_classes as u32 });
    }

    // Squared row norms (plus the bias feature) are shared by all classes.
    let qd: Vec<f64> = (0..x.rows()).map(|r| dot(x.row(r), x.row(r)) + 1.0).collect();

    let solutions: Vec<BinarySolution> = (0..n_classes)
        .into_par_iter()
        .map(|c| {
            let target = c as u32 + 1;
            solve_binary(x, y, target, &qd, opts, derive_seed(opts.seed, c as u64))
        })
        .collect();

    let dim = x.cols();
    let mut hyperplanes = Vec::with_capacity(n_classes * dim);
    let mut biases = Vec::with_capacity(n_classes);
    let mut traces = Vec::with_capacity(n_classes);
    for sol in solutions {
        hyperplanes.extend_from_slice(&sol.w[..dim]);
        biases.push(sol.w[dim]);
        traces.push(sol.objective_trace);
    }
    let model = LinearModel {
        n_classes,
        dim,
        hyperplanes,
        biases,
        reg_strength: opts.reg_strength,
        seed: opts.seed,
    };
    Ok((model, traces))
}

/// Dual coordinate descent for one binary problem (target class vs rest),
/// with projected-gradient shrinking. Minimizes
/// `f(alpha) = 1/2 ||w||^2 - sum(alpha)` over `0 <= alpha_i <= C` where
/// `w = sum_i alpha_i y_i x_i` (bias folded in as a constant feature).
fn solve_binary(
    x: Samples<'_>,
    y: &[u32],
    target: u32,
    qd: &[f64],
    opts: TrainOptions,
    seed: u64,
) -> BinarySolution {
    let n = x.rows();
    let dim = x.cols();
    let c_reg = opts.reg_strength;
    let signs: Vec<f64> = y.iter().map(|&l| if l == target { 1.0 } else { -1.0 }).collect();

    let mut w = vec![0.0f64; dim + 1];
    let mut alpha = vec![0.0f64; n];
    let mut alpha_sum = 0.0f64;
    let mut index: Vec<u32> = (0..n as u32).collect();
    let mut active = n;
    let mut pgmax_old = f64::INFINITY;
    let mut pgmin_old = f64::NEG_INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::new();

    for _epoch in 0..opts.max_epochs {
        let mut pgmax_new = f64::NEG_INFINITY;
        let mut pgmin_new = f64::INFINITY;

        for i in 0..active {
            let j = i + rng.gen_range(0..(active - i));
            index.swap(i, j);
        }

        let mut s = 0;
        while s < active {
            let i = index[s] as usize;
            let yi = signs[i];
            let xi = x.row(i);
            let g = yi * (dot(&w[..dim], xi) + w[dim]) - 1.0;

            let pg;
            if alpha[i] == 0.0 {
                if g > pgmax_old {
                    active -= 1;
                    index.swap(s, active);
                    continue;
                }
                pg = if g < 0.0 { g } else { 0.0 };
            } else if alpha[i] == c_reg {
                if g < pgmin_old {
                    active -= 1;
                    index.swap(s, active);
                    continue;
                }
                pg = if g > 0.0 { g } else { 0.0 };
            } else {
                pg = g;
            }
            pgmax_new = pgmax_new.max(pg);
            pgmin_new = pgmin_new.min(pg);

            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).clamp(0.0, c_reg);
                let step = (alpha[i] - old) * yi;
                axpy(step, xi, &mut w[..dim]);
                w[dim] += step;
                alpha_sum += alpha[i] - old;
            }
            s += 1;
        }

        trace.push(0.5 * dot(&w, &w) - alpha_sum);

        if pgmax_new - pgmin_new <= opts.tol {
            if active == n {
                break;
            }
            // Converged on the shrunken set; re-check everything once.
            active = n;
            pgmax_old = f64::INFINITY;
            pgmin_old = f64::NEG_INFINITY;
            continue;
        }
        pgmax_old = if pgmax_new <= 0.0 { f64::INFINITY } else { pgmax_new };
        pgmin_old = if pgmin_new >= 0.0 { f64::NEG_INFINITY } else { pgmin_new };
    }

    BinarySolution { w, objective_trace: trace }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// One splitmix64 round; used to derive independent RNG streams for the
/// per-class, per-pattern and per-chunk jobs from a single run seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn separable_pair() -> (Vec<f64>, Vec<u32>) {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..10 {
            data.push(-2.0);
            labels.push(1);
            data.push(2.0);
            labels.push(2);
        }
        (data, labels)
    }

    fn accuracy(model: &LinearModel, x: Samples<'_>, y: &[u32]) -> f64 {
        let preds = model.predict_batch(x).unwrap();
        let hits = preds.iter().zip(y).filter(|(p, t)| p == t).count();
        hits as f64 / y.len() as f64
    }

    #[test]
    fn separable_two_class() {
        let (data, labels) = separable_pair();
        let x = Samples::new(&data, 20, 1).unwrap();
        let model = train(x, &labels, 2, TrainOptions::default()).unwrap();
        assert_eq!(accuracy(&model, x, &labels), 1.0);
    }

    #[test]
    fn single_class_predicts_it_always() {
        let data = vec![1.0, 1.0, 1.0, 1.0];
        let labels = vec![1u32; 4];
        let x = Samples::new(&data, 4, 1).unwrap();
        let model = train(x, &labels, 1, TrainOptions::default()).unwrap();
        assert_eq!(model.predict(&[100.0]).unwrap(), 1);
        assert_eq!(model.predict(&[-100.0]).unwrap(), 1);
    }

    #[test]
    fn gaussian_blobs_separate() {
        // tau = 3 blobs at 10 sigma in 8 dims; a test-only perceptron serves
        // as the reference classifier and must agree on training accuracy.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n_per = 40;
        let dim = 8;
        let mut centers = vec![vec![0.0; dim]; 3];
        for (c, center) in centers.iter_mut().enumerate() {
            center[c] = 10.0;
        }
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3 {
            for _ in 0..n_per {
                for j in 0..dim {
                    data.push(centers[c][j] + rng.gen_range(-1.0..1.0));
                }
                labels.push(c as u32 + 1);
            }
        }
        let x = Samples::new(&data, 3 * n_per, dim).unwrap();
        let model = train(x, &labels, 3, TrainOptions::default()).unwrap();
        assert_eq!(accuracy(&model, x, &labels), 1.0);

        // Reference: one-vs-rest perceptron, 200 passes.
        let mut ref_acc_total = 0usize;
        for c in 1..=3u32 {
            let mut w = vec![0.0; dim + 1];
            for _ in 0..200 {
                for r in 0..x.rows() {
                    let yi = if labels[r] == c { 1.0 } else { -1.0 };
                    let score = dot(&w[..dim], x.row(r)) + w[dim];
                    if yi * score <= 0.0 {
                        axpy(yi, x.row(r), &mut w[..dim]);
                        w[dim] += yi;
                    }
                }
            }
            for r in 0..x.rows() {
                let score = dot(&w[..dim], x.row(r)) + w[dim];
                let predicted_in = score > 0.0;
                if predicted_in == (labels[r] == c) {
                    ref_acc_total += 1;
                }
            }
        }
        assert_eq!(ref_acc_total, 3 * x.rows(), "perceptron oracle also separates");
    }

    #[test]
    fn empty_class_rejected() {
        let data = vec![0.0, 1.0, 2.0];
        let labels = vec![1, 1, 1];
        let x = Samples::new(&data, 3, 1).unwrap();
        let err = train(x, &labels, 2, TrainOptions::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyClass { class: 2, .. }));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let data = vec![0.0, 1.0];
        let x = Samples::new(&data, 2, 1).unwrap();
        let model = train(x, &[1, 2], 2, TrainOptions::default()).unwrap();
        assert!(matches!(
            model.predict(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
        assert!(Samples::new(&data, 2, 2).is_err());
    }

    #[test]
    fn sign_test_and_tie_rule() {
        let model =
            LinearModel::from_parts(2, 1, vec![1.0, -1.0], vec![0.0, 0.0], 1.0, 0).unwrap();
        assert_eq!(model.predict(&[3.0]).unwrap(), 1);
        assert_eq!(model.predict(&[-3.0]).unwrap(), 2);
        // Tie at x = 0 resolves to the lowest class index.
        assert_eq!(model.predict(&[0.0]).unwrap(), 1);
    }

    #[test]
    fn predict_matches_score_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let classes = rng.gen_range(1..=6);
            let dim = rng.gen_range(1..=10);
            let hyper: Vec<f64> = (0..classes * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let biases: Vec<f64> = (0..classes).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let model =
                LinearModel::from_parts(classes, dim, hyper, biases, 1.0, 0).unwrap();
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            // Direct per-class dot-product loop.
            let mut best = (0usize, f64::NEG_INFINITY);
            for c in 0..classes {
                let s = dot(model.hyperplane(c), &x) + model.biases()[c];
                if s > best.1 {
                    best = (c, s);
                }
            }
            assert_eq!(model.predict(&x).unwrap(), best.0 as u32 + 1);
        }
    }

    #[test]
    fn batch_equals_looped_predict() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let classes = 5;
        let dim = 17;
        let hyper: Vec<f64> = (0..classes * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let biases: Vec<f64> = (0..classes).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let model = LinearModel::from_parts(classes, dim, hyper, biases, 1.0, 0).unwrap();
        let rows = 1000;
        let data: Vec<f64> = (0..rows * dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x = Samples::new(&data, rows, dim).unwrap();
        let batch = model.predict_batch(x).unwrap();
        for r in 0..rows {
            assert_eq!(batch[r], model.predict(x.row(r)).unwrap());
        }
        // Batch of one equals predict.
        let one = Samples::new(&data[..dim], 1, dim).unwrap();
        assert_eq!(model.predict_batch(one).unwrap()[0], model.predict(&data[..dim]).unwrap());
    }

    #[test]
    fn permuting_rows_permutes_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let dim = 5;
        let hyper: Vec<f64> = (0..3 * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let biases = vec![0.1, -0.2, 0.0];
        let model = LinearModel::from_parts(3, dim, hyper, biases, 1.0, 0).unwrap();
        let rows = 50;
        let data: Vec<f64> = (0..rows * dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x = Samples::new(&data, rows, dim).unwrap();
        let base = model.predict_batch(x).unwrap();
        let mut reversed = Vec::new();
        for r in (0..rows).rev() {
            reversed.extend_from_slice(x.row(r));
        }
        let xr = Samples::new(&reversed, rows, dim).unwrap();
        let rev = model.predict_batch(xr).unwrap();
        for r in 0..rows {
            assert_eq!(base[r], rev[rows - 1 - r]);
        }
    }

    #[test]
    fn retraining_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let rows = 120;
        let dim = 12;
        let data: Vec<f64> = (0..rows * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels: Vec<u32> = (0..rows).map(|i| (i % 4) as u32 + 1).collect();
        let x = Samples::new(&data, rows, dim).unwrap();
        let opts = TrainOptions { seed: 77, ..TrainOptions::default() };
        let a = train(x, &labels, 4, opts).unwrap();
        let b = train(x, &labels, 4, opts).unwrap();
        assert_eq!(a.hyperplanes(), b.hyperplanes());
        assert_eq!(a.biases(), b.biases());
        let c = train(x, &labels, 4, TrainOptions { seed: 78, ..opts }).unwrap();
        assert_ne!(a.hyperplanes(), c.hyperplanes(), "different seed resamples the order");
    }

    #[test]
    fn objective_trace_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let rows = 200;
        let dim = 6;
        // Overlapping classes so the solver actually works for many epochs.
        let data: Vec<f64> = (0..rows * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels: Vec<u32> = (0..rows).map(|i| (i % 3) as u32 + 1).collect();
        let x = Samples::new(&data, rows, dim).unwrap();
        let (_, traces) = train_traced(x, &labels, 3, TrainOptions::default()).unwrap();
        for trace in traces {
            assert!(!trace.is_empty());
            for pair in trace.windows(2) {
                assert!(
                    pair[1] <= pair[0] + 1e-9 * (1.0 + pair[0].abs()),
                    "objective rose: {} -> {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }
}
