//! Sub-linear encoding of ordered scene databases for place recognition.
//!
//! An ordered database of N feature vectors is covered by k cyclic patterns
//! whose phase labels are assigned hierarchically, so the tuple of labels
//! identifies every scene without co-prime cycle lengths. Each pattern keeps
//! only the feature columns that separate its phases (selected by maximizing
//! the between-cluster sum of squares under an l1/l2 budget) and trains one
//! linear max-margin phase encoder over them. A query is classified by every
//! phase encoder and the label tuple folds back into the scene index in
//! closed form. Stored parameters grow with `sum(tau_j) ~ k * N^(1/k)`
//! instead of N, which is what makes the map storage sub-linear.
//!
//! Modules:
//! - [`cycles`]: cycle planning, hierarchical labels, index reconstruction
//! - [`features`]: dense matrices and per-column normalization
//! - [`selection`]: BCSS scores, soft-threshold weight solve, feature masks
//! - [`svm`]: one-vs-rest linear classifiers (dual coordinate descent)
//! - [`encoder`]: the single-sequence pipeline and storage accounting
//! - [`chunking`]: chunk classifier plus per-chunk encoders for long routes
//! - [`io`]: FMAT/SLVP binary containers and CSV ingestion
//! - [`synthetic`]: planted-pattern generators used as test oracles
//! - [`eval`]: precision metrics, scaling sweeps, baseline, timing, plots

pub mod chunking;
pub mod cycles;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod selection;
pub mod svm;
pub mod synthetic;

pub use chunking::{
    chunk_boundaries, chunk_storage_bytes, query_chunked, query_chunked_batch, train_chunked,
    ChunkedModel, ChunkedTrainParams,
};
pub use cycles::{assign_labels, plan_cycles, reconstruct_index, CycleConfig, PhaseLabels};
pub use encoder::{
    query, query_batch, storage_formula_bytes, train_database, EncodedDatabase, PatternModel,
    RealWidth, TrainParams,
};
pub use error::{Error, Result};
pub use features::{ColStats, FeatureMatrix, Normalization};
pub use io::{load_features, load_model, save_features, save_model, Model};
pub use selection::{bcss_scores, select_columns, solve_weights, FeatureMask, FeatureWeights};
pub use svm::{LinearModel, Samples, TrainOptions};
