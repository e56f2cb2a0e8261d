//! Large-sequence support: contiguous chunks, a chunk classifier to route
//! queries, and one independent encoder stack per chunk.
//!
//! The chunk classifier is trained on all rows with the chunk index as the
//! label, reusing the same feature-selection machinery as the phase encoders
//! (its own mask of d~ columns). Chunks train independently and in parallel
//! over row-disjoint slices; assembly order is fixed, so the result does not
//! depend on scheduling.

use rayon::prelude::*;

use crate::encoder::{
    self, storage_formula_bytes, EncodedDatabase, RealWidth, TrainParams,
};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::selection::{bcss_scores, select_columns, solve_weights, FeatureMask};
use crate::svm::{self, LinearModel, Samples, TrainOptions};

/// Parameters for chunked training.
#[derive(Debug, Clone, Copy)]
pub struct ChunkedTrainParams {
    /// Number of contiguous chunks.
    pub chunks: usize,
    /// Mask fraction for the chunk classifier: d~ = round(rho_chunk * d).
    pub rho_chunk: f64,
    /// Per-chunk encoder parameters (chunk c trains with seed + c).
    pub per_chunk: TrainParams,
}

impl ChunkedTrainParams {
    /// Default chunk count mirroring a 10k-scenes-per-chunk split.
    pub fn default_chunk_count(n_scenes: usize) -> usize {
        n_scenes.div_ceil(10_000).max(1)
    }
}

/// Chunk classifier plus per-chunk encoder stacks.
#[derive(Debug, Clone)]
pub struct ChunkedModel {
    /// C+1 one-based cut indices: chunk c covers boundaries[c]..boundaries[c+1].
    boundaries: Vec<usize>,
    chunk_mask: FeatureMask,
    chunk_classifier: LinearModel,
    chunks: Vec<EncodedDatabase>,
    d: usize,
    rho_chunk: f64,
}

impl ChunkedModel {
    pub fn c(&self) -> usize {
        self.chunks.len()
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Global index offset of chunk c.
    pub fn offset(&self, chunk: usize) -> usize {
        self.boundaries[chunk] - 1
    }

    pub fn chunk_mask(&self) -> &FeatureMask {
        &self.chunk_mask
    }

    pub fn chunk_classifier(&self) -> &LinearModel {
        &self.chunk_classifier
    }

    pub fn chunks(&self) -> &[EncodedDatabase] {
        &self.chunks
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn d_tilde(&self) -> usize {
        self.chunk_mask.cardinality()
    }

    pub fn rho_chunk(&self) -> f64 {
        self.rho_chunk
    }

    pub fn n_scenes(&self) -> usize {
        self.boundaries[self.c()] - 1
    }

    pub fn normalization(&self) -> Option<&crate::features::Normalization> {
        self.chunks.first().and_then(|c| c.normalization())
    }

    pub(crate) fn from_parts(
        boundaries: Vec<usize>,
        chunk_mask: FeatureMask,
        chunk_classifier: LinearModel,
        chunks: Vec<EncodedDatabase>,
        d: usize,
        rho_chunk: f64,
    ) -> Result<Self> {
        if boundaries.len() != chunks.len() + 1
            || chunk_classifier.n_classes() != chunks.len()
            || chunk_classifier.dim() != chunk_mask.cardinality()
        {
            return Err(Error::CorruptPayload("chunk table shape mismatch".into()));
        }
        if boundaries[0] != 1 || boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::CorruptPayload("chunk boundaries not increasing from 1".into()));
        }
        Ok(Self { boundaries, chunk_mask, chunk_classifier, chunks, d, rho_chunk })
    }
}

/// One-based cut indices splitting 1..=n into `c` contiguous chunks of size
/// floor(n/c) or ceil(n/c), remainder spread over the first chunks.
pub fn chunk_boundaries(n: usize, c: usize) -> Result<Vec<usize>> {
    if c == 0 || n < c {
        return Err(Error::InvalidConfig(format!("cannot split {n} scenes into {c} chunks")));
    }
    let base = n / c;
    let rem = n % c;
    let mut bounds = Vec::with_capacity(c + 1);
    let mut at = 1usize;
    bounds.push(at);
    for i in 0..c {
        at += base + usize::from(i < rem);
        bounds.push(at);
    }
    Ok(bounds)
}

/// Trains the chunk classifier and the per-chunk encoders.
pub fn train_chunked(s: &FeatureMatrix, params: &ChunkedTrainParams) -> Result<ChunkedModel> {
    if s.normalization().is_none() {
        return Err(Error::NotNormalized);
    }
    let n = s.n();
    let d = s.d();
    let c = params.chunks;
    let boundaries = chunk_boundaries(n, c)?;

    let mut chunk_labels = vec![0u32; n];
    for chunk in 0..c {
        for l in &mut chunk_labels[boundaries[chunk] - 1..boundaries[chunk + 1] - 1] {
            *l = chunk as u32 + 1;
        }
    }

    let d_tilde = ((params.rho_chunk * d as f64).round() as usize).clamp(1, d);
    let scores = bcss_scores(s, &chunk_labels, c as u32)?;
    let weights = solve_weights(&scores, params.per_chunk.gamma);
    let chunk_mask = select_columns(&weights, d_tilde)?;
    let masked = chunk_mask.gather_matrix(s);
    let x = Samples::new(&masked, n, d_tilde)?;
    let opts = TrainOptions {
        reg_strength: params.per_chunk.reg_strength,
        tol: 1e-4,
        max_epochs: 1000,
        seed: params.per_chunk.seed,
    };
    let chunk_classifier = svm::train(x, &chunk_labels, c, opts)?;
    drop(masked);

    let chunks: Vec<EncodedDatabase> = (0..c)
        .into_par_iter()
        .map(|chunk| {
            let slice = s.slice_rows(boundaries[chunk] - 1..boundaries[chunk + 1] - 1);
            let chunk_params = TrainParams {
                seed: params.per_chunk.seed.wrapping_add(chunk as u64),
                ..params.per_chunk
            };
            encoder::train_database(&slice, &chunk_params).map_err(|e| match e {
                Error::InfeasibleK { n_scenes, .. } => Error::ChunkTooSmall {
                    chunk,
                    n_scenes,
                    source: Box::new(Error::InfeasibleK { n_scenes, k: chunk_params.k }),
                },
                other => Error::Chunk { chunk, source: Box::new(other) },
            })
        })
        .collect::<Result<_>>()?;

    ChunkedModel::from_parts(boundaries, chunk_mask, chunk_classifier, chunks, d, params.rho_chunk)
}

/// Routes a normalized query to its chunk and decodes there; the chunk's
/// local index is shifted by the chunk offset into the global range.
pub fn query_chunked(model: &ChunkedModel, x: &[f64]) -> Result<Option<usize>> {
    if x.len() != model.d {
        return Err(Error::DimensionMismatch { expected: model.d, got: x.len() });
    }
    let masked = model.chunk_mask.gather_row(x);
    let chunk = model.chunk_classifier.predict(&masked)? as usize - 1;
    let local = encoder::query(&model.chunks[chunk], x)?;
    Ok(local.map(|i| model.offset(chunk) + i))
}

/// Queries every row of a normalized matrix.
pub fn query_chunked_batch(
    model: &ChunkedModel,
    queries: &FeatureMatrix,
) -> Result<Vec<Option<usize>>> {
    if queries.d() != model.d {
        return Err(Error::DimensionMismatch { expected: model.d, got: queries.d() });
    }
    (0..queries.n())
        .into_par_iter()
        .map(|r| query_chunked(model, queries.row(r)))
        .collect()
}

/// Total storage: per-chunk formula bytes plus the chunk classifier
/// (`width * C * (d~ + 1)` reals and one d-bit mask).
pub fn chunk_storage_bytes(model: &ChunkedModel) -> u64 {
    let per_chunk: u64 = model.chunks.iter().map(storage_formula_bytes).sum();
    per_chunk + classifier_overhead_bytes(model)
}

/// The chunk classifier's share alone; independent of the number of scenes.
pub fn classifier_overhead_bytes(model: &ChunkedModel) -> u64 {
    let width = model
        .chunks
        .first()
        .map(|c| c.params().real_width)
        .unwrap_or(RealWidth::F64);
    width.bytes() * model.c() as u64 * (model.d_tilde() as u64 + 1)
        + (model.d as u64).div_ceil(8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::chunked_design;

    fn sizes(bounds: &[usize]) -> Vec<usize> {
        bounds.windows(2).map(|w| w[1] - w[0]).collect()
    }

    #[test]
    fn even_split() {
        let b = chunk_boundaries(30, 3).unwrap();
        assert_eq!(sizes(&b), vec![10, 10, 10]);
        assert_eq!(b, vec![1, 11, 21, 31]);
    }

    #[test]
    fn remainder_spreads_over_first_chunks() {
        let b = chunk_boundaries(31, 3).unwrap();
        assert_eq!(sizes(&b), vec![11, 10, 10]);
    }

    #[test]
    fn nordland_scale_split() {
        let b = chunk_boundaries(89_000, 10).unwrap();
        assert_eq!(sizes(&b), vec![8_900; 10]);
    }

    #[test]
    fn partition_covers_every_scene_once() {
        for n in [7usize, 100, 1234] {
            for c in 1..=7.min(n) {
                let b = chunk_boundaries(n, c).unwrap();
                assert_eq!(b[0], 1);
                assert_eq!(b[c], n + 1);
                let total: usize = sizes(&b).iter().sum();
                assert_eq!(total, n);
                for w in sizes(&b) {
                    assert!(w == n / c || w == n / c + 1);
                }
            }
        }
    }

    fn trained(n: usize, c: usize, k: usize, d: usize, noise: f64, seed: u64) -> (ChunkedModel, FeatureMatrix) {
        let boundaries = chunk_boundaries(n, c).unwrap();
        let design = chunked_design(&boundaries, k, d, 10.0, noise, seed).unwrap();
        let mut m = design.generate(0).unwrap();
        m.normalize();
        let params = ChunkedTrainParams {
            chunks: c,
            rho_chunk: 0.5,
            per_chunk: TrainParams { k, ..TrainParams::default() },
        };
        let model = train_chunked(&m, &params).unwrap();
        (model, m)
    }

    #[test]
    fn zero_noise_chunked_recovery() {
        let (model, m) = trained(300, 3, 2, 96, 0.0, 13);
        let preds = query_chunked_batch(&model, &m).unwrap();
        for (i, p) in preds.iter().enumerate() {
            assert_eq!(*p, Some(i + 1), "row {i}");
        }
    }

    #[test]
    fn single_chunk_equals_plain_training() {
        let (model, m) = trained(60, 1, 2, 64, 0.1, 3);
        let plain_params = TrainParams { k: 2, ..TrainParams::default() };
        let plain = encoder::train_database(&m, &plain_params).unwrap();
        for r in 0..m.n() {
            assert_eq!(
                query_chunked(&model, m.row(r)).unwrap(),
                encoder::query(&plain, m.row(r)).unwrap(),
                "row {r}"
            );
        }
        // Same bytes in the chunk encoder as in the plain model.
        let c0 = &model.chunks()[0];
        for (a, b) in c0.patterns().iter().zip(plain.patterns()) {
            assert_eq!(a.encoder.hyperplanes(), b.encoder.hyperplanes());
            assert_eq!(a.mask.selected(), b.mask.selected());
        }
    }

    #[test]
    fn misrouted_query_lands_in_wrong_chunk_range() {
        let (model, m) = trained(120, 3, 2, 96, 0.0, 17);
        // Force a misroute: feed a row of chunk 2 whose marker block is
        // overwritten with chunk 0's marker columns from a chunk-0 row.
        let marker_cols: Vec<usize> = model.chunk_mask().selected().to_vec();
        let mut corrupted = m.row(100).to_vec();
        for &c in &marker_cols {
            corrupted[c] = m.row(5)[c];
        }
        let masked = model.chunk_mask().gather_row(&corrupted);
        let routed = model.chunk_classifier().predict(&masked).unwrap() as usize - 1;
        if routed != 2 {
            // The answer, if any, is confined to the routed chunk's range, so
            // the error is at least the distance to the true chunk boundary.
            if let Some(ans) = query_chunked(&model, &corrupted).unwrap() {
                let lo = model.boundaries()[routed];
                let hi = model.boundaries()[routed + 1];
                assert!((lo..hi).contains(&ans));
                let truth = 101usize;
                let boundary_distance = truth - model.boundaries()[2];
                assert!(truth.abs_diff(ans) >= boundary_distance.max(1));
            }
        } else {
            panic!("corruption failed to misroute");
        }
    }

    #[test]
    fn chunk_too_small_reported_with_id() {
        let boundaries = chunk_boundaries(9, 3).unwrap();
        let design = chunked_design(&boundaries, 1, 32, 10.0, 0.0, 2).unwrap();
        let mut m = design.generate(0).unwrap();
        m.normalize();
        let params = ChunkedTrainParams {
            chunks: 3,
            rho_chunk: 0.5,
            // k = 2 needs at least 4 scenes per chunk; chunks have 3.
            per_chunk: TrainParams { k: 2, ..TrainParams::default() },
        };
        let err = train_chunked(&m, &params).unwrap_err();
        assert!(matches!(err, Error::ChunkTooSmall { .. }), "got {err:?}");
    }

    #[test]
    fn storage_formula_matches_components() {
        let (model, _) = trained(90, 3, 2, 64, 0.0, 23);
        let per_chunk: u64 = model.chunks().iter().map(storage_formula_bytes).sum();
        let overhead = classifier_overhead_bytes(&model);
        assert_eq!(chunk_storage_bytes(&model), per_chunk + overhead);
        assert_eq!(overhead, 8 * 3 * (model.d_tilde() as u64 + 1) + 8);
    }

    #[test]
    fn classifier_overhead_example() {
        // C=10, d=8192, d~=4096: 8 * 10 * 4097 + 1024 bytes.
        let overhead = 8u64 * 10 * (4096 + 1) + 8192u64.div_ceil(8);
        assert_eq!(overhead, 328_784);
    }

    #[test]
    fn parallel_training_matches_serial() {
        let (par, m) = trained(120, 3, 2, 64, 0.2, 31);
        let serial_pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let ser = serial_pool.install(|| {
            let params = ChunkedTrainParams {
                chunks: 3,
                rho_chunk: 0.5,
                per_chunk: TrainParams { k: 2, ..TrainParams::default() },
            };
            train_chunked(&m, &params).unwrap()
        });
        for (a, b) in par.chunks().iter().zip(ser.chunks()) {
            for (pa, pb) in a.patterns().iter().zip(b.patterns()) {
                assert_eq!(pa.encoder.hyperplanes(), pb.encoder.hyperplanes());
                assert_eq!(pa.encoder.biases(), pb.encoder.biases());
            }
        }
        assert_eq!(par.chunk_classifier().hyperplanes(), ser.chunk_classifier().hyperplanes());
    }
}
