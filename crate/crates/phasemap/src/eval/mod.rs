//! Metrics and experiment harness: precision at a frame tolerance, storage
//! scaling sweeps with a log-log exponent fit, the co-prime reference
//! decoder, and wall-clock timing.

pub mod baseline;
pub mod report;
pub mod svg;
pub mod sweep;

use std::time::Instant;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub use baseline::{plan_coprime_cycles, train_coprime, CoprimeEncoder, CoprimeParams};
pub use report::EvalReport;
pub use sweep::{sweep_storage_vs_n, SweepOutcome, SweepParams, SweepPoint};

/// Fraction of queries whose decoded index lies within `tolerance` frames of
/// the truth. Abstentions (`None`) count as incorrect.
pub fn precision_at(predictions: &[Option<usize>], truth: &[usize], tolerance: usize) -> f64 {
    assert_eq!(predictions.len(), truth.len(), "prediction/truth length mismatch");
    if predictions.is_empty() {
        return 0.0;
    }
    let hits = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p.is_some_and(|p| p.abs_diff(**t) <= tolerance))
        .count();
    hits as f64 / predictions.len() as f64
}

/// Precision at every tolerance in `0..=max_tolerance`.
pub fn precision_curve(
    predictions: &[Option<usize>],
    truth: &[usize],
    max_tolerance: usize,
) -> Vec<(usize, f64)> {
    (0..=max_tolerance)
        .map(|t| (t, precision_at(predictions, truth, t)))
        .collect()
}

/// Log-log fit of storage against database size.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ExponentFit {
    /// Slope of log(storage) on log(n) with an intercept; the reported
    /// sub-linearity exponent.
    pub a: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    /// Slope of the intercept-free fit log(y) = a log(x), which depends on
    /// the storage unit; emitted for transparency only.
    pub a_through_origin: f64,
}

/// Least-squares fit of `log(storage) = a * log(n) + b` over at least three
/// points with increasing sizes.
pub fn fit_sublinear_exponent(sizes: &[f64], storages: &[f64]) -> Result<ExponentFit> {
    if sizes.len() != storages.len() {
        return Err(Error::DimensionMismatch { expected: sizes.len(), got: storages.len() });
    }
    if sizes.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: sizes.len() });
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("sizes must be strictly increasing".into()));
    }
    if sizes.iter().chain(storages).any(|&v| v <= 0.0) {
        return Err(Error::InvalidConfig("log fit needs positive values".into()));
    }
    let xs: Vec<f64> = sizes.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = storages.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let a = sxy / sxx;
    let intercept = my - a * mx;
    let rms = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (a * x + intercept);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    let a_origin = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>()
        / xs.iter().map(|x| x * x).sum::<f64>();
    Ok(ExponentFit { a, intercept, rms_residual: rms, a_through_origin: a_origin })
}

/// Wall-clock timings, medians over three runs.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Timings {
    pub train_seconds: f64,
    pub query_sweep_seconds: f64,
}

/// Median-of-3 wall time for training and for a full query sweep. Runs
/// serially (a one-thread pool) so the numbers are stable.
pub fn time_train_query<M, T, Q>(train: T, query_sweep: Q) -> Timings
where
    T: Fn() -> M + Sync,
    Q: Fn(&M) + Sync,
    M: Send,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let mut train_times = Vec::with_capacity(3);
        let mut query_times = Vec::with_capacity(3);
        for _ in 0..3 {
            let t0 = Instant::now();
            let model = train();
            train_times.push(t0.elapsed().as_secs_f64());
            let t1 = Instant::now();
            query_sweep(&model);
            query_times.push(t1.elapsed().as_secs_f64());
        }
        Timings {
            train_seconds: median3(&mut train_times),
            query_sweep_seconds: median3(&mut query_times),
        }
    })
}

/// Median wall time of `runs` repetitions of `f`, serial.
pub fn median_time<F: FnMut()>(runs: usize, mut f: F) -> f64 {
    let mut times: Vec<f64> = (0..runs)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times[times.len() / 2]
}

fn median3(times: &mut [f64]) -> f64 {
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times[times.len() / 2]
}

/// Queries every row of `queries` against a plain model and scores it against
/// the identity ground truth (row r is scene r+1).
pub fn resubstitution_truth(queries: &FeatureMatrix) -> Vec<usize> {
    (1..=queries.n()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_predictions_score_one() {
        let truth: Vec<usize> = (1..=50).collect();
        let preds: Vec<Option<usize>> = truth.iter().map(|&t| Some(t)).collect();
        for tol in [0, 3, 10] {
            assert_eq!(precision_at(&preds, &truth, tol), 1.0);
        }
    }

    #[test]
    fn constant_shift_flips_at_the_tolerance() {
        let truth: Vec<usize> = (1..=100).collect();
        let preds: Vec<Option<usize>> = truth.iter().map(|&t| Some(t + 3)).collect();
        assert_eq!(precision_at(&preds, &truth, 5), 1.0);
        assert_eq!(precision_at(&preds, &truth, 2), 0.0);
    }

    #[test]
    fn nomatch_counts_as_incorrect() {
        let truth = vec![1, 2, 3, 4];
        let preds = vec![Some(1), None, Some(3), None];
        assert_eq!(precision_at(&preds, &truth, 0), 0.5);
    }

    #[test]
    fn random_permutation_matches_analytic_rate() {
        // Expected hit rate of a random permutation at tolerance 5 is about
        // (2*5+1)/N; Monte-Carlo over seeds stays near it.
        let n = 1000usize;
        let truth: Vec<usize> = (1..=n).collect();
        let mut total = 0.0;
        let reps = 200;
        for seed in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut perm: Vec<usize> = (1..=n).collect();
            perm.shuffle(&mut rng);
            let preds: Vec<Option<usize>> = perm.into_iter().map(Some).collect();
            total += precision_at(&preds, &truth, 5);
        }
        let mean = total / reps as f64;
        let expected = 11.0 / n as f64;
        assert!(
            (mean - expected).abs() < 0.2 * expected,
            "mean {mean} vs analytic {expected}"
        );
    }

    #[test]
    fn reindexing_invariance() {
        let truth: Vec<usize> = (10..60).collect();
        let preds: Vec<Option<usize>> = truth.iter().map(|&t| Some(t + 1)).collect();
        let base = precision_at(&preds, &truth, 3);
        let shifted_truth: Vec<usize> = truth.iter().map(|t| t + 1000).collect();
        let shifted_preds: Vec<Option<usize>> =
            preds.iter().map(|p| p.map(|v| v + 1000)).collect();
        assert_eq!(precision_at(&shifted_preds, &shifted_truth, 3), base);
    }

    #[test]
    fn curve_is_monotone_in_tolerance() {
        let truth: Vec<usize> = (1..=200).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let preds: Vec<Option<usize>> = truth
            .iter()
            .map(|&t| {
                use rand::Rng;
                if rng.gen_bool(0.1) {
                    None
                } else {
                    Some((t as i64 + rng.gen_range(-8..=8)).max(1) as usize)
                }
            })
            .collect();
        let curve = precision_curve(&preds, &truth, 25);
        for w in curve.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
        for (_, p) in curve {
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn exponent_fit_exact_cases() {
        let sizes = [100.0, 1000.0, 10_000.0, 100_000.0];
        let linear: Vec<f64> = sizes.to_vec();
        let fit = fit_sublinear_exponent(&sizes, &linear).unwrap();
        assert!((fit.a - 1.0).abs() < 1e-12);
        assert!(fit.rms_residual < 1e-12);

        let sqrt: Vec<f64> = sizes.iter().map(|s| s.sqrt()).collect();
        let fit = fit_sublinear_exponent(&sizes, &sqrt).unwrap();
        assert!((fit.a - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exponent_fit_recovers_planted_slope_under_noise() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sizes: Vec<f64> = (0..12).map(|i| 100.0 * 1.6f64.powi(i)).collect();
        let storages: Vec<f64> = sizes
            .iter()
            .map(|s| 37.0 * s.powf(0.48) * (1.0 + rng.gen_range(-0.01..0.01)))
            .collect();
        let fit = fit_sublinear_exponent(&sizes, &storages).unwrap();
        assert!(fit.a > 0.45 && fit.a < 0.51, "a = {}", fit.a);
    }

    #[test]
    fn exponent_fit_rejects_bad_input() {
        assert!(matches!(
            fit_sublinear_exponent(&[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::TooFewPoints { .. })
        ));
        assert!(fit_sublinear_exponent(&[1.0, 3.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn timing_is_positive_and_stable() {
        let timings = time_train_query(
            || {
                let mut acc = 0u64;
                for i in 0..400_000u64 {
                    acc = acc.wrapping_add(i * i);
                }
                acc
            },
            |m| {
                std::hint::black_box(m);
            },
        );
        assert!(timings.train_seconds > 0.0);
    }
}
