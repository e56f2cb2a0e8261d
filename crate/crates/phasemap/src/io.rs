//! File formats: the `FMAT` feature-matrix container, the `SLVP` model
//! container, and numeric CSV ingestion.
//!
//! Both binary formats are little-endian and versioned. The model payload
//! (masks and encoder reals, headers excluded) is laid out exactly as the
//! storage formulas count it, and that equality is asserted on every save.
//! Decoders never trust declared lengths: every count is checked against the
//! remaining bytes before any allocation, so arbitrary input fails cleanly.

use std::path::Path;

use crate::chunking::{chunk_storage_bytes, ChunkedModel};
use crate::cycles::CycleConfig;
use crate::encoder::{
    storage_formula_bytes, EncodedDatabase, PatternModel, RealWidth, TrainParams,
};
use crate::error::{Error, Result};
use crate::features::{ColStats, FeatureMatrix, Normalization};
use crate::selection::FeatureMask;
use crate::svm::LinearModel;

const FMAT_MAGIC: &[u8; 4] = b"FMAT";
const SLVP_MAGIC: &[u8; 4] = b"SLVP";
const FORMAT_VERSION: u16 = 1;

const KIND_PLAIN: u8 = 0;
const KIND_CHUNKED: u8 = 1;

/// A loaded model file of either kind.
#[derive(Debug, Clone)]
pub enum Model {
    Plain(EncodedDatabase),
    Chunked(ChunkedModel),
}

impl Model {
    pub fn d(&self) -> usize {
        match self {
            Model::Plain(m) => m.d(),
            Model::Chunked(m) => m.d(),
        }
    }

    pub fn n_scenes(&self) -> usize {
        match self {
            Model::Plain(m) => m.n_scenes(),
            Model::Chunked(m) => m.n_scenes(),
        }
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        match self {
            Model::Plain(m) => m.normalization(),
            Model::Chunked(m) => m.normalization(),
        }
    }

    pub fn storage_bytes(&self) -> u64 {
        match self {
            Model::Plain(m) => storage_formula_bytes(m),
            Model::Chunked(m) => chunk_storage_bytes(m),
        }
    }

    pub fn query(&self, x: &[f64]) -> Result<Option<usize>> {
        match self {
            Model::Plain(m) => crate::encoder::query(m, x),
            Model::Chunked(m) => crate::chunking::query_chunked(m, x),
        }
    }

    pub fn query_batch(&self, queries: &FeatureMatrix) -> Result<Vec<Option<usize>>> {
        match self {
            Model::Plain(m) => crate::encoder::query_batch(m, queries),
            Model::Chunked(m) => crate::chunking::query_chunked_batch(m, queries),
        }
    }
}

// ---------------------------------------------------------------- encoding

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }

    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn real(&mut self, v: f64, width: RealWidth) {
        match width {
            RealWidth::F32 => self.buf.extend_from_slice(&(v as f32).to_le_bytes()),
            RealWidth::F64 => self.f64(v),
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::TruncatedFile { needed: n - self.remaining() });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn real(&mut self, width: RealWidth) -> Result<f64> {
        match width {
            RealWidth::F32 => Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64),
            RealWidth::F64 => self.f64(),
        }
    }

    /// A u64 that must fit in usize.
    fn size(&mut self, what: &str) -> Result<usize> {
        let raw = self.u64()?;
        usize::try_from(raw).map_err(|_| Error::CorruptPayload(format!("{what} overflows")))
    }
}

fn check_magic(r: &mut Reader<'_>, magic: &'static [u8; 4], name: &'static str) -> Result<()> {
    let got = r.take(4).map_err(|_| Error::BadMagic { expected: name })?;
    if got != magic {
        return Err(Error::BadMagic { expected: name });
    }
    Ok(())
}

fn check_version(r: &mut Reader<'_>) -> Result<()> {
    let v = r.u16()?;
    if v != FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: v });
    }
    Ok(())
}

// ------------------------------------------------------------- FMAT format

/// Encodes a feature matrix: magic, version, element width, n, d, row-major
/// values, then an optional normalization block.
pub fn encode_features(m: &FeatureMatrix, width: RealWidth) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(FMAT_MAGIC);
    w.u16(FORMAT_VERSION);
    w.u8(width.bytes() as u8);
    w.u64(m.n() as u64);
    w.u64(m.d() as u64);
    for v in m.values() {
        w.real(*v, width);
    }
    write_norm_block(&mut w, m.normalization());
    w.buf
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix> {
    let mut r = Reader::new(bytes);
    check_magic(&mut r, FMAT_MAGIC, "FMAT")?;
    check_version(&mut r)?;
    let width = RealWidth::from_bytes(r.u8()?)?;
    let per = width.bytes() as usize;
    let n = r.size("n")?;
    let d = r.size("d")?;
    let cells = n
        .checked_mul(d)
        .ok_or_else(|| Error::CorruptPayload("n*d overflows".into()))?;
    let need = cells
        .checked_mul(per)
        .ok_or_else(|| Error::CorruptPayload("matrix size overflows".into()))?;
    if r.remaining() < need {
        return Err(Error::TruncatedFile { needed: need - r.remaining() });
    }
    let mut values = Vec::with_capacity(cells);
    for _ in 0..cells {
        values.push(r.real(width)?);
    }
    let mut m = FeatureMatrix::new(n, d, values)?;
    m.set_normalization(read_norm_block(&mut r, d)?);
    Ok(m)
}

fn write_norm_block(w: &mut Writer, norm: Option<&Normalization>) {
    match norm {
        None => w.u8(0),
        Some(n) => {
            w.u8(1);
            for c in &n.cols {
                w.f64(c.mean);
                w.f64(c.scale);
                w.u8(u8::from(c.constant));
            }
        }
    }
}

fn read_norm_block(r: &mut Reader<'_>, d: usize) -> Result<Option<Normalization>> {
    match r.u8()? {
        0 => Ok(None),
        1 => {
            let mut cols = Vec::with_capacity(d);
            for _ in 0..d {
                let mean = r.f64()?;
                let scale = r.f64()?;
                let constant = match r.u8()? {
                    0 => false,
                    1 => true,
                    other => {
                        return Err(Error::CorruptPayload(format!(
                            "bad constant flag {other}"
                        )))
                    }
                };
                if !mean.is_finite() || !scale.is_finite() || scale <= 0.0 {
                    return Err(Error::CorruptPayload("bad normalization stats".into()));
                }
                cols.push(ColStats { mean, scale, constant });
            }
            Ok(Some(Normalization { cols }))
        }
        other => Err(Error::CorruptPayload(format!("bad normalization flag {other}"))),
    }
}

// ------------------------------------------------------------- SLVP format

/// Writes the plain-model header (everything the payload does not cover).
fn write_plain_header(w: &mut Writer, db: &EncodedDatabase) {
    let p = db.params();
    w.u64(db.n_scenes() as u64);
    w.u64(db.d() as u64);
    w.u64(db.d_prime() as u64);
    w.u16(db.config().k() as u16);
    for &t in db.config().taus() {
        w.u32(t);
    }
    w.f64(p.rho);
    w.f64(p.gamma);
    w.f64(p.reg_strength);
    w.u64(p.seed);
}

/// Writes the payload the storage formula counts: per pattern, the d-bit
/// mask then tau * (d' + 1) reals. Returns the bytes written.
fn write_plain_payload(w: &mut Writer, db: &EncodedDatabase, width: RealWidth) -> u64 {
    let before = w.buf.len();
    for p in db.patterns() {
        w.bytes(p.mask.bits());
        for c in 0..p.encoder.n_classes() {
            for &h in p.encoder.hyperplane(c) {
                w.real(h, width);
            }
            w.real(p.encoder.biases()[c], width);
        }
    }
    (w.buf.len() - before) as u64
}

fn read_plain_block(
    r: &mut Reader<'_>,
    width: RealWidth,
    normalization: Option<Normalization>,
) -> Result<EncodedDatabase> {
    let n_scenes = r.size("n")?;
    let d = r.size("d")?;
    let d_prime = r.size("d_prime")?;
    if d_prime == 0 || d_prime > d {
        return Err(Error::CorruptPayload(format!("d_prime {d_prime} outside 1..={d}")));
    }
    let k = r.u16()? as usize;
    if k == 0 {
        return Err(Error::CorruptPayload("zero patterns".into()));
    }
    let mut taus = Vec::with_capacity(k);
    for _ in 0..k {
        taus.push(r.u32()?);
    }
    let rho = r.f64()?;
    let gamma = r.f64()?;
    let reg_strength = r.f64()?;
    let seed = r.u64()?;
    let config = CycleConfig::new(taus, n_scenes)
        .map_err(|e| Error::CorruptPayload(format!("bad cycle config: {e}")))?;

    let mask_bytes = d.div_ceil(8);
    let per_real = width.bytes() as usize;
    let mut patterns = Vec::with_capacity(k);
    for j in 0..k {
        let tau = config.tau(j);
        let bits = r.take(mask_bytes)?.to_vec();
        let mask = FeatureMask::from_bits(d, bits)?;
        if mask.cardinality() != d_prime {
            return Err(Error::CorruptPayload(format!(
                "pattern {j} mask has {} bits set, expected {d_prime}",
                mask.cardinality()
            )));
        }
        let n_reals = tau as usize * (d_prime + 1);
        if r.remaining() < n_reals * per_real {
            return Err(Error::TruncatedFile { needed: n_reals * per_real - r.remaining() });
        }
        let mut hyperplanes = Vec::with_capacity(tau as usize * d_prime);
        let mut biases = Vec::with_capacity(tau as usize);
        for _ in 0..tau {
            for _ in 0..d_prime {
                hyperplanes.push(r.real(width)?);
            }
            biases.push(r.real(width)?);
        }
        for v in hyperplanes.iter().chain(&biases) {
            if !v.is_finite() {
                return Err(Error::CorruptPayload("non-finite encoder parameter".into()));
            }
        }
        let encoder =
            LinearModel::from_parts(tau as usize, d_prime, hyperplanes, biases, reg_strength, seed)?;
        patterns.push(PatternModel { tau, mask, encoder });
    }

    let params = TrainParams { k, rho, gamma, reg_strength, seed, real_width: width };
    EncodedDatabase::from_parts(config, patterns, d, d_prime, params, normalization)
}

/// Serializes a plain model. The payload length must equal the storage
/// formula exactly; that tie between the file and the accounting is asserted.
pub fn encode_plain_model(db: &EncodedDatabase) -> Vec<u8> {
    let width = db.params().real_width;
    let mut w = Writer::new();
    w.bytes(SLVP_MAGIC);
    w.u16(FORMAT_VERSION);
    w.u8(KIND_PLAIN);
    w.u8(width.bytes() as u8);
    write_plain_header(&mut w, db);
    write_norm_block(&mut w, db.normalization());
    let payload = write_plain_payload(&mut w, db, width);
    assert_eq!(
        payload,
        storage_formula_bytes(db),
        "payload bytes must match the storage formula"
    );
    w.buf
}

pub fn encode_chunked_model(m: &ChunkedModel) -> Vec<u8> {
    let width = m.chunks()[0].params().real_width;
    let mut w = Writer::new();
    w.bytes(SLVP_MAGIC);
    w.u16(FORMAT_VERSION);
    w.u8(KIND_CHUNKED);
    w.u8(width.bytes() as u8);
    w.u64(m.n_scenes() as u64);
    w.u64(m.d() as u64);
    w.u32(m.c() as u32);
    w.u64(m.d_tilde() as u64);
    w.f64(m.rho_chunk());
    for &b in m.boundaries() {
        w.u64(b as u64);
    }
    write_norm_block(&mut w, m.normalization());

    let mut payload = 0u64;
    let before = w.buf.len();
    w.bytes(m.chunk_mask().bits());
    let clf = m.chunk_classifier();
    for c in 0..clf.n_classes() {
        for &h in clf.hyperplane(c) {
            w.real(h, width);
        }
        w.real(clf.biases()[c], width);
    }
    payload += (w.buf.len() - before) as u64;

    for chunk in m.chunks() {
        write_plain_header(&mut w, chunk);
        payload += write_plain_payload(&mut w, chunk, width);
    }
    assert_eq!(
        payload,
        chunk_storage_bytes(m),
        "payload bytes must match the chunked storage formula"
    );
    w.buf
}

pub fn encode_model(model: &Model) -> Vec<u8> {
    match model {
        Model::Plain(db) => encode_plain_model(db),
        Model::Chunked(m) => encode_chunked_model(m),
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader::new(bytes);
    check_magic(&mut r, SLVP_MAGIC, "SLVP")?;
    check_version(&mut r)?;
    let kind = r.u8()?;
    let width = RealWidth::from_bytes(r.u8()?)?;
    match kind {
        KIND_PLAIN => {
            // Peek the dimensions to place the normalization block: the plain
            // header is fixed-size up to k, so read it via a scratch reader.
            let db = read_plain_with_norm(&mut r, width)?;
            Ok(Model::Plain(db))
        }
        KIND_CHUNKED => {
            let n = r.size("n")?;
            let d = r.size("d")?;
            let c = r.u32()? as usize;
            if c == 0 || c > n {
                return Err(Error::CorruptPayload(format!("bad chunk count {c}")));
            }
            let d_tilde = r.size("d_tilde")?;
            if d_tilde == 0 || d_tilde > d {
                return Err(Error::CorruptPayload(format!("d_tilde {d_tilde} outside 1..={d}")));
            }
            let rho_chunk = r.f64()?;
            if r.remaining() < (c + 1) * 8 {
                return Err(Error::TruncatedFile { needed: (c + 1) * 8 - r.remaining() });
            }
            let mut boundaries = Vec::with_capacity(c + 1);
            for _ in 0..=c {
                boundaries.push(r.size("boundary")?);
            }
            if boundaries[0] != 1
                || boundaries[c] != n + 1
                || boundaries.windows(2).any(|w| w[0] >= w[1])
            {
                return Err(Error::CorruptPayload("bad chunk boundaries".into()));
            }
            let norm = read_norm_block(&mut r, d)?;

            let bits = r.take(d.div_ceil(8))?.to_vec();
            let chunk_mask = FeatureMask::from_bits(d, bits)?;
            if chunk_mask.cardinality() != d_tilde {
                return Err(Error::CorruptPayload("chunk mask cardinality mismatch".into()));
            }
            let n_reals = c * (d_tilde + 1);
            if r.remaining() < n_reals * width.bytes() as usize {
                return Err(Error::TruncatedFile {
                    needed: n_reals * width.bytes() as usize - r.remaining(),
                });
            }
            let mut hyperplanes = Vec::with_capacity(c * d_tilde);
            let mut biases = Vec::with_capacity(c);
            for _ in 0..c {
                for _ in 0..d_tilde {
                    hyperplanes.push(r.real(width)?);
                }
                biases.push(r.real(width)?);
            }
            let classifier = LinearModel::from_parts(c, d_tilde, hyperplanes, biases, 1.0, 0)?;

            let mut chunks = Vec::with_capacity(c);
            for chunk in 0..c {
                let db = read_plain_block(&mut r, width, norm.clone())?;
                let expect = boundaries[chunk + 1] - boundaries[chunk];
                if db.n_scenes() != expect {
                    return Err(Error::CorruptPayload(format!(
                        "chunk {chunk} holds {} scenes, boundaries say {expect}",
                        db.n_scenes()
                    )));
                }
                if db.d() != d {
                    return Err(Error::CorruptPayload(format!("chunk {chunk} dimension mismatch")));
                }
                chunks.push(db);
            }
            if r.remaining() != 0 {
                return Err(Error::CorruptPayload(format!(
                    "{} trailing bytes",
                    r.remaining()
                )));
            }
            let model =
                ChunkedModel::from_parts(boundaries, chunk_mask, classifier, chunks, d, rho_chunk)?;
            Ok(Model::Chunked(model))
        }
        other => Err(Error::CorruptPayload(format!("unknown model kind {other}"))),
    }
}

fn read_plain_with_norm(r: &mut Reader<'_>, width: RealWidth) -> Result<EncodedDatabase> {
    // The normalization block sits between the header and the payload, so
    // decode header fields, the block, then re-assemble via read_plain_block
    // on a stitched view. Simpler: duplicate the header reads here.
    let start = r.pos;
    let _n = r.u64()?;
    let d = r.size("d")?;
    let _dp = r.u64()?;
    let k = r.u16()? as usize;
    for _ in 0..k {
        r.u32()?;
    }
    r.f64()?;
    r.f64()?;
    r.f64()?;
    r.u64()?;
    let header_end = r.pos;
    let norm = read_norm_block(r, d)?;
    // Re-read the header, then continue at the payload.
    let payload_pos = r.pos;
    r.pos = start;
    let mut stitched = Vec::with_capacity(header_end - start + r.buf.len() - payload_pos);
    stitched.extend_from_slice(&r.buf[start..header_end]);
    stitched.extend_from_slice(&r.buf[payload_pos..]);
    let mut rr = Reader::new(&stitched);
    let db = read_plain_block(&mut rr, width, norm)?;
    if rr.remaining() != 0 {
        return Err(Error::CorruptPayload(format!("{} trailing bytes", rr.remaining())));
    }
    Ok(db)
}

// ----------------------------------------------------------------- CSV

/// Parses a numeric CSV: one row per scene, comma-separated, '.' decimal.
pub fn parse_csv(text: &str) -> Result<FeatureMatrix> {
    let mut values = Vec::new();
    let mut d = None;
    let mut rows = 0usize;
    for (row, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut got = 0usize;
        for (col, field) in line.split(',').enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::BadNumber { row, col })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
            values.push(v);
            got += 1;
        }
        match d {
            None => d = Some(got),
            Some(expected) if expected != got => {
                return Err(Error::RaggedRows { row, expected, got })
            }
            _ => {}
        }
        rows += 1;
    }
    let d = d.ok_or_else(|| Error::CorruptPayload("empty CSV".into()))?;
    FeatureMatrix::new(rows, d, values)
}

pub fn format_csv(m: &FeatureMatrix) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    out
}

// ----------------------------------------------------------- file plumbing

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Binary,
    Csv,
}

/// Writes a file atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    let tmp_name = format!(
        ".{}.tmp-{}-{stamp}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id(),
    );
    let tmp = match dir {
        Some(d) => d.join(&tmp_name),
        None => std::path::PathBuf::from(&tmp_name),
    };
    std::fs::write(&tmp, bytes)?;
    match std::fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e.into())
        }
    }
}

pub fn save_features(m: &FeatureMatrix, path: &Path, width: RealWidth) -> Result<()> {
    write_atomic(path, &encode_features(m, width))
}

pub fn save_features_csv(m: &FeatureMatrix, path: &Path) -> Result<()> {
    write_atomic(path, format_csv(m).as_bytes())
}

pub fn load_features(path: &Path, format: FeatureFormat) -> Result<FeatureMatrix> {
    let bytes = std::fs::read(path)?;
    match format {
        FeatureFormat::Binary => decode_features(&bytes),
        FeatureFormat::Csv => {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::CorruptPayload("CSV is not UTF-8".into()))?;
            parse_csv(&text)
        }
    }
}

/// Picks the format from the extension: `.csv` is text, everything else is
/// the binary container.
pub fn load_features_auto(path: &Path) -> Result<FeatureMatrix> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => FeatureFormat::Csv,
        _ => FeatureFormat::Binary,
    };
    load_features(path, format)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    write_atomic(path, &encode_model(model))
}

pub fn load_model(path: &Path) -> Result<Model> {
    decode_model(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunking::{chunk_boundaries, train_chunked, ChunkedTrainParams};
    use crate::encoder::train_database;
    use crate::synthetic::{chunked_design, generate_synthetic, SyntheticSpec};

    fn sample_matrix() -> FeatureMatrix {
        let spec = SyntheticSpec::evenly_blocked(24, 2, 16, 0.3, 5).unwrap();
        let mut m = generate_synthetic(&spec).unwrap().features;
        m.normalize();
        m
    }

    #[test]
    fn feature_roundtrip_is_bit_exact() {
        let m = sample_matrix();
        let bytes = encode_features(&m, RealWidth::F64);
        let back = decode_features(&bytes).unwrap();
        assert_eq!(back.values(), m.values());
        assert_eq!(back.normalization(), m.normalization());
    }

    #[test]
    fn feature_f32_width_roundtrips_values() {
        let m = FeatureMatrix::new(2, 2, vec![0.5, 1.25, -3.0, 0.0]).unwrap();
        let bytes = encode_features(&m, RealWidth::F32);
        let back = decode_features(&bytes).unwrap();
        assert_eq!(back.values(), m.values(), "exact f32 values survive");
    }

    #[test]
    fn bad_magic_and_truncation() {
        let m = sample_matrix();
        let mut bytes = encode_features(&m, RealWidth::F64);
        assert!(matches!(
            decode_features(&bytes[..bytes.len() - 3]),
            Err(Error::TruncatedFile { .. })
        ));
        bytes[0] = b'X';
        assert!(matches!(decode_features(&bytes), Err(Error::BadMagic { .. })));
        assert!(matches!(decode_features(b"FM"), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn version_check() {
        let m = sample_matrix();
        let mut bytes = encode_features(&m, RealWidth::F64);
        bytes[4] = 9;
        assert!(matches!(decode_features(&bytes), Err(Error::VersionMismatch { found: 9 })));
    }

    #[test]
    fn csv_known_values() {
        let m = parse_csv("1.5,2\n-3,0.25\n0,1e3\n").unwrap();
        assert_eq!(m.n(), 3);
        assert_eq!(m.d(), 2);
        assert_eq!(m.values(), &[1.5, 2.0, -3.0, 0.25, 0.0, 1000.0]);
    }

    #[test]
    fn csv_nan_is_rejected_with_location() {
        let err = parse_csv("1,2\n3,NaN\n").unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 1, col: 1 }));
    }

    #[test]
    fn csv_ragged_rows_rejected() {
        let err = parse_csv("1,2\n3\n").unwrap_err();
        assert!(matches!(err, Error::RaggedRows { row: 1, expected: 2, got: 1 }));
    }

    #[test]
    fn csv_roundtrip() {
        let m = sample_matrix();
        let back = parse_csv(&format_csv(&m)).unwrap();
        assert_eq!(back.n(), m.n());
        for (a, b) in back.values().iter().zip(m.values()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    fn trained_plain() -> (EncodedDatabase, FeatureMatrix) {
        let m = sample_matrix();
        let db = train_database(&m, &TrainParams { k: 2, ..TrainParams::default() }).unwrap();
        (db, m)
    }

    #[test]
    fn plain_model_roundtrip_preserves_queries() {
        let (db, m) = trained_plain();
        let bytes = encode_plain_model(&db);
        let Model::Plain(back) = decode_model(&bytes).unwrap() else {
            panic!("wrong kind");
        };
        for r in 0..m.n() {
            assert_eq!(
                crate::encoder::query(&db, m.row(r)).unwrap(),
                crate::encoder::query(&back, m.row(r)).unwrap()
            );
        }
        assert_eq!(back.params().seed, db.params().seed);
        assert_eq!(back.config().taus(), db.config().taus());
    }

    #[test]
    fn payload_length_equals_formula() {
        let (db, _) = trained_plain();
        let bytes = encode_plain_model(&db);
        // Re-encode without the payload to measure the header share.
        let mut w = Writer::new();
        w.bytes(SLVP_MAGIC);
        w.u16(FORMAT_VERSION);
        w.u8(KIND_PLAIN);
        w.u8(8);
        write_plain_header(&mut w, &db);
        write_norm_block(&mut w, db.normalization());
        let header_len = w.buf.len() as u64;
        assert_eq!(bytes.len() as u64 - header_len, storage_formula_bytes(&db));
    }

    #[test]
    fn truncated_model_is_corrupt_or_truncated() {
        let (db, _) = trained_plain();
        let bytes = encode_plain_model(&db);
        for cut in [bytes.len() - 1, bytes.len() / 2, 20] {
            let err = decode_model(&bytes[..cut]).unwrap_err();
            assert!(
                matches!(err, Error::TruncatedFile { .. } | Error::CorruptPayload(_)),
                "cut {cut}: {err:?}"
            );
        }
    }

    #[test]
    fn chunked_model_roundtrip() {
        let boundaries = chunk_boundaries(90, 3).unwrap();
        let design = chunked_design(&boundaries, 2, 64, 10.0, 0.0, 7).unwrap();
        let mut m = design.generate(0).unwrap();
        m.normalize();
        let params = ChunkedTrainParams {
            chunks: 3,
            rho_chunk: 0.5,
            per_chunk: TrainParams { k: 2, ..TrainParams::default() },
        };
        let model = train_chunked(&m, &params).unwrap();
        let bytes = encode_chunked_model(&model);
        let Model::Chunked(back) = decode_model(&bytes).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!(back.boundaries(), model.boundaries());
        for r in 0..m.n() {
            assert_eq!(
                crate::chunking::query_chunked(&model, m.row(r)).unwrap(),
                crate::chunking::query_chunked(&back, m.row(r)).unwrap()
            );
        }
        // Payload equality for the chunked formula.
        let header = {
            let mut w = Writer::new();
            w.bytes(SLVP_MAGIC);
            w.u16(FORMAT_VERSION);
            w.u8(KIND_CHUNKED);
            w.u8(8);
            w.u64(model.n_scenes() as u64);
            w.u64(model.d() as u64);
            w.u32(model.c() as u32);
            w.u64(model.d_tilde() as u64);
            w.f64(model.rho_chunk());
            for &b in model.boundaries() {
                w.u64(b as u64);
            }
            write_norm_block(&mut w, model.normalization());
            let mut per_chunk_headers = 0usize;
            for chunk in model.chunks() {
                let mut cw = Writer::new();
                write_plain_header(&mut cw, chunk);
                per_chunk_headers += cw.buf.len();
            }
            w.buf.len() + per_chunk_headers
        };
        assert_eq!(bytes.len() as u64 - header as u64, chunk_storage_bytes(&model));
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.bin");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"second");
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().contains("tmp-"))
            .collect();
        assert!(leftovers.is_empty(), "temp files cleaned up");
    }

    #[test]
    fn f32_model_storage_uses_narrow_width() {
        let m = sample_matrix();
        let db = train_database(
            &m,
            &TrainParams { k: 2, real_width: RealWidth::F32, ..TrainParams::default() },
        )
        .unwrap();
        let bytes = encode_plain_model(&db);
        let Model::Plain(back) = decode_model(&bytes).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!(back.params().real_width, RealWidth::F32);
        let sum_taus = db.config().sum_taus() as u64;
        assert_eq!(
            storage_formula_bytes(&db),
            4 * (db.d_prime() as u64 + 1) * sum_taus + 2 * (db.d() as u64).div_ceil(8)
        );
    }
}
