//! PTAE embedding files, prototype snapshots and result logs.
//!
//! A PTAE file is a 32-byte little-endian header followed by a row-major
//! `f32` payload and, for streams, one `u32` label per row:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "PTAE"
//!      4     2  version (1)
//!      6     1  kind (0 anchors, 1 stream, 2 prototype snapshot)
//!      7     4  dim
//!     11     4  count
//!     15     1  flags (bit 0: rows pre-normalized)
//!     16    16  reserved, zero
//!     32     .  count * dim f32
//!      .     .  count u32 labels (kind 1 only)
//! ```

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::harness::{RunOutput, RunReport};
use crate::pta::{AnchorMode, PtaConfig, PtaState};
use crate::stream::Stream;
use crate::vector::Matrix;
use crate::zero_shot::TextAnchors;

pub const MAGIC: [u8; 4] = *b"PTAE";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;
pub const FLAG_PRE_NORMALIZED: u8 = 0b0000_0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingKind {
    Anchors = 0,
    Stream = 1,
    PrototypeSnapshot = 2,
}

impl EmbeddingKind {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(EmbeddingKind::Anchors),
            1 => Some(EmbeddingKind::Stream),
            2 => Some(EmbeddingKind::PrototypeSnapshot),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub kind: EmbeddingKind,
    pub dim: u32,
    pub count: u32,
    pub flags: u8,
}

impl Header {
    pub fn pre_normalized(&self) -> bool {
        self.flags & FLAG_PRE_NORMALIZED != 0
    }

    fn payload_len(&self) -> u64 {
        let rows = self.count as u64 * self.dim as u64 * 4;
        let labels = if self.kind == EmbeddingKind::Stream { self.count as u64 * 4 } else { 0 };
        rows + labels
    }

    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[0..4].copy_from_slice(&MAGIC);
        h[4..6].copy_from_slice(&VERSION.to_le_bytes());
        h[6] = self.kind as u8;
        h[7..11].copy_from_slice(&self.dim.to_le_bytes());
        h[11..15].copy_from_slice(&self.count.to_le_bytes());
        h[15] = self.flags;
        h
    }
}

/// Decoded PTAE contents. Values are widened to `f64` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub header: Header,
    pub matrix: Matrix,
    pub labels: Option<Vec<usize>>,
    /// Whether rows were L2-normalized while reading.
    pub normalized_on_ingest: bool,
}

impl EmbeddingFile {
    pub fn into_stream(self) -> Result<Stream> {
        let labels = self
            .labels
            .ok_or_else(|| Error::validation("file is not a labeled stream"))?;
        Stream::new(self.matrix, labels)
    }
}

/// Serializes a matrix into PTAE bytes. Labels must be given exactly when
/// `kind` is a stream.
pub fn encode(kind: EmbeddingKind, matrix: &Matrix, labels: Option<&[usize]>, pre_normalized: bool) -> Result<Vec<u8>> {
    match (kind, labels) {
        (EmbeddingKind::Stream, None) => return Err(Error::validation("stream files need labels")),
        (EmbeddingKind::Stream, Some(l)) => check_dim(matrix.rows(), l.len())?,
        (_, Some(_)) => return Err(Error::validation("only stream files carry labels")),
        _ => {}
    }
    let dim = u32::try_from(matrix.cols()).map_err(|_| Error::validation("dimension exceeds u32"))?;
    let count = u32::try_from(matrix.rows()).map_err(|_| Error::validation("row count exceeds u32"))?;
    let header = Header {
        kind,
        dim,
        count,
        flags: if pre_normalized { FLAG_PRE_NORMALIZED } else { 0 },
    };
    let mut out = Vec::with_capacity(HEADER_LEN + header.payload_len() as usize);
    out.extend_from_slice(&header.encode());
    for (index, &x) in matrix.as_slice().iter().enumerate() {
        let v = x as f32;
        if !v.is_finite() {
            return Err(Error::NonFinite { index });
        }
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(labels) = labels {
        for &l in labels {
            let l = u32::try_from(l).map_err(|_| Error::validation(format!("label {l} exceeds u32")))?;
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses PTAE bytes; `path` only labels errors.
pub fn decode(bytes: &[u8], path: &Path, normalize_on_ingest: bool) -> Result<EmbeddingFile> {
    let err = |offset: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < HEADER_LEN {
        return Err(err(
            bytes.len(),
            format!("truncated header: expected {HEADER_LEN} bytes, got {}", bytes.len()),
        ));
    }
    if bytes[0..4] != MAGIC {
        return Err(err(0, format!("bad magic {:?}, expected \"PTAE\"", &bytes[0..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(err(4, format!("unsupported version {version}, expected {VERSION}")));
    }
    let kind = EmbeddingKind::from_byte(bytes[6]).ok_or_else(|| err(6, format!("unknown kind {}", bytes[6])))?;
    let dim = u32::from_le_bytes(bytes[7..11].try_into().expect("4 bytes"));
    let count = u32::from_le_bytes(bytes[11..15].try_into().expect("4 bytes"));
    let flags = bytes[15];
    if flags & !FLAG_PRE_NORMALIZED != 0 {
        return Err(err(15, format!("unknown flag bits {flags:#010b}")));
    }
    if let Some(i) = bytes[16..HEADER_LEN].iter().position(|&b| b != 0) {
        return Err(err(16 + i, "reserved header bytes must be zero".to_string()));
    }
    if dim == 0 && count > 0 {
        return Err(err(7, "zero dimension with non-empty payload".to_string()));
    }
    let header = Header { kind, dim, count, flags };
    let expected = HEADER_LEN as u64 + header.payload_len();
    if bytes.len() as u64 != expected {
        return Err(err(
            bytes.len().min(expected as usize),
            format!("expected {expected} bytes in total, got {}", bytes.len()),
        ));
    }

    let n = count as usize * dim as usize;
    let payload = &bytes[HEADER_LEN..HEADER_LEN + n * 4];
    let mut data = Vec::with_capacity(n);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(err(HEADER_LEN + i * 4, format!("non-finite value {v}")));
        }
        data.push(v as f64);
    }
    let mut matrix = Matrix::from_vec(count as usize, dim as usize, data)?;
    if normalize_on_ingest {
        matrix.normalize_rows()?;
    }

    let labels = (kind == EmbeddingKind::Stream).then(|| {
        bytes[HEADER_LEN + n * 4..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
            .collect()
    });
    Ok(EmbeddingFile {
        header,
        matrix,
        labels,
        normalized_on_ingest: normalize_on_ingest,
    })
}

pub fn write_embeddings(
    path: &Path,
    kind: EmbeddingKind,
    matrix: &Matrix,
    labels: Option<&[usize]>,
    pre_normalized: bool,
) -> Result<()> {
    let bytes = encode(kind, matrix, labels, pre_normalized)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: &Path, normalize_on_ingest: bool) -> Result<EmbeddingFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path, normalize_on_ingest)
}

/// Reads an anchors file into [`TextAnchors`] (rows are always normalized).
pub fn read_anchors(path: &Path, tau: f64) -> Result<TextAnchors> {
    let file = read_embeddings(path, true)?;
    if file.header.kind != EmbeddingKind::Anchors {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: 6,
            message: format!("expected an anchors file, found {:?}", file.header.kind),
        });
    }
    TextAnchors::new(file.matrix, tau)
}

pub fn read_stream(path: &Path, normalize_on_ingest: bool) -> Result<Stream> {
    let file = read_embeddings(path, normalize_on_ingest)?;
    if file.header.kind != EmbeddingKind::Stream {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: 6,
            message: format!("expected a stream file, found {:?}", file.header.kind),
        });
    }
    file.into_stream()
}

/// Sidecar metadata stored next to a prototype snapshot as
/// `<snapshot>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub samples_seen: u64,
    pub class_count: usize,
    pub dim: usize,
    pub config: PtaConfig,
    /// In recurrent mode the PTAE rows hold `P_t` followed by `P_a`.
    pub includes_anchored: bool,
}

pub fn snapshot_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `P_t` (and `P_a` in recurrent mode) as a kind-2 PTAE file plus a
/// JSON sidecar with the counters and configuration. Values are stored as
/// `f32`.
pub fn write_snapshot(path: &Path, state: &PtaState, config: &PtaConfig) -> Result<()> {
    let protos = state.prototypes();
    let (matrix, includes_anchored) = match state.recurrent_prototypes() {
        None => (protos.clone(), false),
        Some(pa) => (
            Matrix::from_rows(protos.cols(), protos.iter_rows().chain(pa.iter_rows()))?,
            true,
        ),
    };
    write_embeddings(path, EmbeddingKind::PrototypeSnapshot, &matrix, None, false)?;
    let header = SnapshotHeader {
        samples_seen: state.samples_seen(),
        class_count: protos.rows(),
        dim: protos.cols(),
        config: *config,
        includes_anchored,
    };
    let sidecar = snapshot_sidecar(path);
    std::fs::write(&sidecar, serde_json::to_vec_pretty(&header)?).map_err(|e| Error::io(&sidecar, e))
}

pub fn read_snapshot(path: &Path, anchors: Arc<TextAnchors>) -> Result<(PtaState, PtaConfig)> {
    let sidecar = snapshot_sidecar(path);
    let text = std::fs::read(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let header: SnapshotHeader = serde_json::from_slice(&text)?;
    header.config.validate()?;
    let file = read_embeddings(path, false)?;
    if file.header.kind != EmbeddingKind::PrototypeSnapshot {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: 6,
            message: format!("expected a prototype snapshot, found {:?}", file.header.kind),
        });
    }
    let c = header.class_count;
    let rows = if header.includes_anchored { 2 * c } else { c };
    check_dim(rows, file.matrix.rows())?;
    check_dim(header.dim, file.matrix.cols())?;
    if header.includes_anchored != (header.config.anchor_mode == AnchorMode::Recurrent) {
        return Err(Error::validation("snapshot layout disagrees with its anchor mode"));
    }
    let all = file.matrix.into_vec();
    let split = c * header.dim;
    let prototypes = Matrix::from_vec(c, header.dim, all[..split].to_vec())?;
    let recurrent = header
        .includes_anchored
        .then(|| Matrix::from_vec(c, header.dim, all[split..].to_vec()))
        .transpose()?;
    let state = PtaState::from_parts(anchors, prototypes, recurrent, header.samples_seen)?;
    Ok((state, header.config))
}

/// One line of the results log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub run_id: String,
    pub method: String,
    pub config: String,
    pub position: usize,
    pub prediction: usize,
    pub truth: usize,
    pub wall_nanos: u64,
}

/// Flattens a run into one record per (method, sample).
pub fn result_records(run_id: &str, output: &RunOutput) -> Vec<ResultRecord> {
    let methods = &output.report.methods;
    let mut out = Vec::with_capacity(methods.len() * output.records.len());
    for (m, report) in methods.iter().enumerate() {
        for rec in &output.records {
            let o = &rec.outcomes[m];
            out.push(ResultRecord {
                run_id: run_id.to_string(),
                method: report.method.clone(),
                config: report.config.clone(),
                position: rec.index,
                prediction: o.prediction,
                truth: rec.true_label,
                wall_nanos: o.wall_nanos,
            });
        }
    }
    out
}

/// Appends records as newline-delimited JSON and flushes.
pub fn append_results(path: &Path, records: &[ResultRecord]) -> Result<()> {
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let len = line.len() as u64 + 1;
        if !line.trim().is_empty() {
            let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                offset,
                message: e.to_string(),
            })?;
            out.push(rec);
        }
        offset += len;
    }
    Ok(out)
}

/// Percent accuracy of `method` recomputed from a results log.
pub fn accuracy_from_results(records: &[ResultRecord], method: &str) -> Option<f64> {
    let mine: Vec<&ResultRecord> = records.iter().filter(|r| r.method == method).collect();
    if mine.is_empty() {
        return None;
    }
    let correct = mine.iter().filter(|r| r.prediction == r.truth).count();
    Some(100.0 * correct as f64 / mine.len() as f64)
}

pub const CURVE_CSV_HEADER: &str = "checkpoint_n,method,online_accuracy";

pub fn write_curve_csv(path: &Path, report: &RunReport) -> Result<()> {
    let mut out = String::from(CURVE_CSV_HEADER);
    out.push('\n');
    for m in &report.methods {
        for p in &m.online_curve {
            out.push_str(&format!("{},{},{:.6}\n", p.checkpoint_n, m.method, p.online_accuracy));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::Adapter;
    use crate::cache::CacheConfig;
    use crate::harness::{run_stream, MethodKind, RunOptions};
    use crate::synthetic::{generate, ShiftSpec};
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("mem.ptae")
    }

    fn small() -> Matrix {
        Matrix::from_vec(3, 4, (0..12).map(|i| i as f64 * 0.25 - 1.0).collect()).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode(EmbeddingKind::Stream, &small(), Some(&[0, 1, 2]), true).unwrap();
        assert_eq!(&bytes[0..4], b"PTAE");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], 1);
        assert_eq!(&bytes[7..11], &[4, 0, 0, 0]);
        assert_eq!(&bytes[11..15], &[3, 0, 0, 0]);
        assert_eq!(bytes[15], 1);
        assert!(bytes[16..32].iter().all(|&b| b == 0));
        assert_eq!(bytes.len(), 32 + 12 * 4 + 3 * 4);
        assert_eq!(&bytes[32..36], &(-1.0f32).to_le_bytes());
        assert_eq!(&bytes[bytes.len() - 4..], &2u32.to_le_bytes());
    }

    #[test]
    fn roundtrip_small() {
        let bytes = encode(EmbeddingKind::Anchors, &small(), None, false).unwrap();
        let back = decode(&bytes, p(), false).unwrap();
        assert_eq!(back.matrix, small());
        assert_eq!(back.labels, None);
        assert!(!back.header.pre_normalized());
    }

    #[test]
    fn stream_without_labels_rejected() {
        assert!(encode(EmbeddingKind::Stream, &small(), None, false).is_err());
        assert!(encode(EmbeddingKind::Stream, &small(), Some(&[0, 1]), false).is_err());
        assert!(encode(EmbeddingKind::Anchors, &small(), Some(&[0, 1, 2]), false).is_err());
    }

    #[test]
    fn empty_matrix_is_header_only() {
        let bytes = encode(EmbeddingKind::Anchors, &Matrix::zeros(0, 8), None, false).unwrap();
        assert_eq!(bytes.len(), 32);
        let back = decode(&bytes, p(), true).unwrap();
        assert_eq!(back.matrix.rows(), 0);
        assert_eq!(back.header.dim, 8);
    }

    #[test]
    fn non_finite_rejected_on_write() {
        let m = Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).unwrap();
        assert!(matches!(encode(EmbeddingKind::Anchors, &m, None, false), Err(Error::NonFinite { index: 1 })));
        let m = Matrix::from_vec(1, 2, vec![1.0, 1e300]).unwrap();
        assert!(encode(EmbeddingKind::Anchors, &m, None, false).is_err());
    }

    fn parse_err(bytes: &[u8]) -> (u64, String) {
        match decode(bytes, p(), false) {
            Err(Error::Parse { offset, message, .. }) => (offset, message),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn corrupt_files_name_offsets() {
        let good = encode(EmbeddingKind::Stream, &small(), Some(&[0, 1, 2]), false).unwrap();

        let (off, msg) = parse_err(&good[..good.len() - 3]);
        assert_eq!(off, good.len() as u64 - 3);
        assert!(msg.contains(&format!("expected {}", good.len())), "{msg}");
        assert!(msg.contains(&format!("got {}", good.len() - 3)), "{msg}");

        let mut bad = good.clone();
        bad[0] = b'X';
        assert_eq!(parse_err(&bad).0, 0);

        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(parse_err(&bad).0, 4);

        let mut bad = good.clone();
        bad[6] = 9;
        assert_eq!(parse_err(&bad).0, 6);

        let mut bad = good.clone();
        bad[15] = 0b10;
        assert_eq!(parse_err(&bad).0, 15);

        let mut bad = good.clone();
        bad[20] = 1;
        assert_eq!(parse_err(&bad).0, 20);

        let mut bad = good.clone();
        bad.push(0);
        assert!(parse_err(&bad).1.contains("expected"));

        let mut bad = good.clone();
        bad[36..40].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(parse_err(&bad).0, 36);

        assert_eq!(parse_err(&good[..10]).0, 10);
    }

    #[test]
    fn pre_normalized_rows_survive_ingest() {
        let spec = ShiftSpec { class_count: 4, dim: 16, stream_length: 20, ..Default::default() };
        let (_, stream) = generate(&spec).unwrap();
        let bytes = encode(EmbeddingKind::Stream, stream.features(), Some(stream.labels()), true).unwrap();
        let raw = decode(&bytes, p(), false).unwrap();
        let ingested = decode(&bytes, p(), true).unwrap();
        assert!(ingested.normalized_on_ingest);
        for (a, b) in raw.matrix.as_slice().iter().zip(ingested.matrix.as_slice()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn ingest_keeps_null_rows() {
        let m = Matrix::from_vec(2, 2, vec![0.0, 0.0, 3.0, 4.0]).unwrap();
        let bytes = encode(EmbeddingKind::Anchors, &m, None, false).unwrap();
        let back = decode(&bytes, p(), true).unwrap();
        assert_eq!(back.matrix.row(0), &[0.0, 0.0]);
        assert!((back.matrix.row(1)[0] - 0.6).abs() < 1e-7);
    }

    #[test]
    fn files_roundtrip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ptae");
        write_embeddings(&path, EmbeddingKind::Stream, &small(), Some(&[2, 1, 0]), false).unwrap();
        let stream = read_stream(&path, false).unwrap();
        assert_eq!(stream.labels(), &[2, 1, 0]);
        assert!(read_anchors(&path, 0.01).is_err());
        assert!(matches!(read_embeddings(&dir.path().join("missing"), false), Err(Error::Io { .. })));
    }

    #[test]
    fn snapshot_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ShiftSpec { class_count: 4, dim: 8, stream_length: 50, ..Default::default() };
        let (a, stream) = generate(&spec).unwrap();
        let anchors = Arc::new(a.into_text_anchors(0.01).unwrap());
        for mode in [AnchorMode::Fixed, AnchorMode::Recurrent] {
            let cfg = PtaConfig { anchor_mode: mode, ..Default::default() };
            let mut state = PtaState::new(anchors.clone(), mode);
            for (f, _) in stream.iter() {
                state.observe(f, &cfg).unwrap();
            }
            let path = dir.path().join(format!("{mode}.ptae"));
            write_snapshot(&path, &state, &cfg).unwrap();
            let (back, back_cfg) = read_snapshot(&path, anchors.clone()).unwrap();
            assert_eq!(back_cfg, cfg);
            assert_eq!(back.samples_seen(), 50);
            assert_eq!(back.anchor_mode(), mode);
            for (x, y) in back.prototypes().as_slice().iter().zip(state.prototypes().as_slice()) {
                assert!((x - y).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn results_log_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.jsonl");
        let spec = ShiftSpec { class_count: 4, dim: 16, stream_length: 5, ..Default::default() };
        let (a, stream) = generate(&spec).unwrap();
        let anchors = Arc::new(a.into_text_anchors(0.01).unwrap());
        let mut methods: Vec<Box<dyn Adapter>> =
            vec![MethodKind::Pta.build(&anchors, &PtaConfig::default(), &CacheConfig::default()).unwrap()];
        let out = run_stream(&stream, &mut methods, &RunOptions::default()).unwrap();
        let recs = result_records("r1", &out);
        append_results(&path, &recs).unwrap();
        append_results(&path, &recs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 10);
        for line in text.lines() {
            serde_json::from_str::<ResultRecord>(line).unwrap();
        }
        let back = read_results(&path).unwrap();
        assert_eq!(&back[..5], recs.as_slice());
        let acc = accuracy_from_results(&back[..5], "pta").unwrap();
        assert_eq!(acc, out.report.methods[0].final_accuracy);
    }

    proptest! {
        #[test]
        fn encode_decode_identity(
            rows in 0usize..6,
            cols in 1usize..9,
            seed in any::<u64>(),
            pre in any::<bool>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.random::<f32>() as f64 * 8.0 - 4.0).collect();
            let m = Matrix::from_vec(rows, cols, data).unwrap();
            let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..100)).collect();
            let bytes = encode(EmbeddingKind::Stream, &m, Some(&labels), pre).unwrap();
            let back = decode(&bytes, p(), false).unwrap();
            prop_assert_eq!(&back.matrix, &m);
            prop_assert_eq!(back.labels.as_deref(), Some(labels.as_slice()));
            prop_assert_eq!(back.header.pre_normalized(), pre);
            prop_assert_eq!(encode(EmbeddingKind::Stream, &back.matrix, Some(&labels), pre).unwrap(), bytes);
        }

        #[test]
        fn truncation_always_errors(cut in 0usize..100) {
            let bytes = encode(EmbeddingKind::Stream, &small(), Some(&[0, 1, 2]), false).unwrap();
            let cut = cut.min(bytes.len() - 1);
            let parsed = matches!(decode(&bytes[..cut], p(), false), Err(Error::Parse { .. }));
            prop_assert!(parsed);
        }
    }
}
