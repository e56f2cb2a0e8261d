//! Evaluation report emission: JSON, CSV and the basic consistency checks.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{ExponentFit, Timings};

/// Everything one evaluation run produces. Timing fields live in their own
/// struct so deterministic outputs can be written without them.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    /// (frame tolerance, fraction correct), tolerance ascending.
    pub precision_curve: Vec<(usize, f64)>,
    pub storage_bytes: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_precision_curve: Option<Vec<(usize, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_storage_bytes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<ExponentFit>,
    /// Snapshot of the fully resolved run configuration.
    pub config: serde_json::Value,
    /// Excluded from the deterministic JSON body; written separately.
    #[serde(skip)]
    pub timings: Option<Timings>,
}

impl EvalReport {
    /// Precision curves must be monotone in the tolerance and within [0, 1].
    pub fn validate(&self) -> Result<()> {
        for curve in std::iter::once(&self.precision_curve)
            .chain(self.baseline_precision_curve.iter())
        {
            for (_, p) in curve {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidConfig(format!("precision {p} outside [0,1]")));
                }
            }
            for w in curve.windows(2) {
                if w[1].1 < w[0].1 - 1e-12 {
                    return Err(Error::InvalidConfig(
                        "precision curve decreasing in tolerance".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// CSV of the precision curve(s): tolerance, precision[, baseline].
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("tolerance,precision");
        if self.baseline_precision_curve.is_some() {
            out.push_str(",baseline_precision");
        }
        out.push('\n');
        for (i, (tol, p)) in self.precision_curve.iter().enumerate() {
            out.push_str(&format!("{tol},{p}"));
            if let Some(b) = &self.baseline_precision_curve {
                out.push_str(&format!(",{}", b[i].1));
            }
            out.push('\n');
        }
        out
    }

    pub fn timings_text(&self) -> Option<String> {
        self.timings.as_ref().map(|t| {
            format!(
                "train_seconds={}\nquery_sweep_seconds={}\n",
                t.train_seconds, t.query_sweep_seconds
            )
        })
    }
}
