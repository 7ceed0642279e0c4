//! On-disk formats: TXL1 frames, CSM1 measurement records, JSON manifests,
//! vertex lists and PGM previews.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::compression::SbheHeader;
use crate::error::{Error, Result};
use crate::simulator::{PerturbationGrid, TaxelArray, SENSOR_MAX_N};

pub const TXL1_MAGIC: &[u8; 4] = b"TXL1";
pub const CSM1_MAGIC: &[u8; 4] = b"CSM1";

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MEASUREMENTS_FILE: &str = "measurements.csm";
pub const MATRIX_FILE: &str = "matrix.json";
pub const FRAMES_CSV: &str = "frames.csv";

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn push_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn parse_f64s(path: &Path, body: &[u8]) -> Result<Vec<f64>> {
    if !body.len().is_multiple_of(8) {
        return Err(format_err(
            path,
            format!(
                "payload of {} bytes is not a whole number of f64",
                body.len()
            ),
        ));
    }
    Ok(body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn strip_magic<'a>(path: &Path, bytes: &'a [u8], magic: &[u8; 4]) -> Result<&'a [u8]> {
    match bytes.strip_prefix(magic.as_slice()) {
        Some(body) => Ok(body),
        None => Err(format_err(
            path,
            format!("expected magic {:?}", String::from_utf8_lossy(magic)),
        )),
    }
}

pub fn encode_txl1(values: &[f64]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(4 + 8 * values.len());
    buf.extend_from_slice(TXL1_MAGIC);
    push_f64s(&mut buf, values);
    buf
}

/// Writes one frame: `"TXL1"` followed by `n` little-endian f64.
pub fn write_txl1(path: &Path, values: &[f64]) -> Result<()> {
    write_bytes(path, &encode_txl1(values))
}

pub fn read_txl1(path: &Path) -> Result<Vec<f64>> {
    let bytes = read_bytes(path)?;
    parse_f64s(path, strip_magic(path, &bytes, TXL1_MAGIC)?)
}

/// Writes `"CSM1"` followed by `m` little-endian f64 per record.
pub fn write_csm1(path: &Path, m: usize, records: &[Vec<f64>]) -> Result<()> {
    let mut buf = Vec::with_capacity(4 + 8 * m * records.len());
    buf.extend_from_slice(CSM1_MAGIC);
    for (i, r) in records.iter().enumerate() {
        if r.len() != m {
            return Err(Error::Dimension(format!(
                "record {i} has {} values, expected {m}",
                r.len()
            )));
        }
        push_f64s(&mut buf, r);
    }
    write_bytes(path, &buf)
}

pub fn read_csm1(path: &Path, m: usize) -> Result<Vec<Vec<f64>>> {
    if m == 0 {
        return Err(Error::InvalidInput("record length must be positive".into()));
    }
    let bytes = read_bytes(path)?;
    let values = parse_f64s(path, strip_magic(path, &bytes, CSM1_MAGIC)?)?;
    if values.len() % m != 0 {
        return Err(format_err(
            path,
            format!("{} values do not split into records of {m}", values.len()),
        ));
    }
    Ok(values.chunks_exact(m).map(<[f64]>::to_vec).collect())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Reads vertices from OBJ (`v x y z`), ASCII PLY, or whitespace `x y z` lines.
pub fn read_vertices(path: &Path) -> Result<Vec<[f64; 3]>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vertices(&text).map_err(|reason| format_err(path, reason))
}

fn parse_xyz<'a>(mut it: impl Iterator<Item = &'a str>) -> Option<[f64; 3]> {
    let mut p = [0.0f64; 3];
    for v in &mut p {
        *v = it.next()?.parse().ok()?;
    }
    p.iter().all(|v| v.is_finite()).then_some(p)
}

pub fn parse_vertices(text: &str) -> std::result::Result<Vec<[f64; 3]>, String> {
    let mut lines = text.lines().map(str::trim).enumerate();
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("");
    let mut out = Vec::new();

    if first == "ply" {
        let mut count = None;
        for (_, line) in lines.by_ref() {
            if line.starts_with("format") && !line.contains("ascii") {
                return Err("only ASCII PLY is supported".into());
            }
            if let Some(rest) = line.strip_prefix("element vertex") {
                count = rest.trim().parse::<usize>().ok();
            }
            if line == "end_header" {
                break;
            }
        }
        let count = count.ok_or("PLY header has no vertex element")?;
        for (i, line) in lines.take(count) {
            out.push(
                parse_xyz(line.split_whitespace()).ok_or(format!("line {}: bad vertex", i + 1))?,
            );
        }
        if out.len() != count {
            return Err(format!(
                "PLY declares {count} vertices but has {}",
                out.len()
            ));
        }
        return Ok(out);
    }

    let obj = text.lines().any(|l| l.trim_start().starts_with("v "));
    for (i, line) in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        if obj && it.next() != Some("v") {
            continue;
        }
        out.push(parse_xyz(it).ok_or(format!("line {}: expected three numbers", i + 1))?);
    }
    Ok(out)
}

/// Binary PGM (P5); values are scaled so `max_value` maps to 255.
pub fn encode_pgm(rows: usize, cols: usize, values: &[f64], max_value: f64) -> Result<Vec<u8>> {
    if values.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "{} values for a {rows}x{cols} image",
            values.len()
        )));
    }
    let mut buf = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    buf.extend(
        values
            .iter()
            .map(|v| (255.0 * (v / max_value)).round().clamp(0.0, 255.0) as u8),
    );
    Ok(buf)
}

pub fn write_pgm(path: &Path, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    write_bytes(path, &encode_pgm(rows, cols, values, SENSOR_MAX_N)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Raw,
    Compressed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    /// TXL1 file relative to the dataset directory (raw datasets only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    pub label: usize,
    pub perturbation: usize,
    pub seed: u64,
}

/// Describes a dataset directory. Raw datasets store one TXL1 file per frame;
/// compressed ones store every record in a single CSM1 file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub kind: DatasetKind,
    pub format: String,
    pub array: TaxelArray,
    pub objects: Vec<String>,
    pub perturbation_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbations: Option<PerturbationGrid>,
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<SbheHeader>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_file: Option<String>,
    pub records: Vec<FrameRecord>,
}

impl DatasetManifest {
    /// Length of each stored vector.
    pub fn dim(&self) -> usize {
        match (&self.kind, &self.matrix) {
            (DatasetKind::Compressed, Some(h)) => h.m,
            _ => self.array.len(),
        }
    }
}

/// Vectors and labels of a dataset directory, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub vectors: Vec<Vec<f64>>,
}

pub fn frame_file_name(index: usize) -> String {
    format!("frames/{index:05}.txl")
}

/// Writes a raw dataset: manifest, TXL1 frames and a CSV copy.
pub fn write_raw_dataset(
    dir: &Path,
    manifest: &DatasetManifest,
    vectors: &[Vec<f64>],
) -> Result<()> {
    if manifest.records.len() != vectors.len() {
        return Err(Error::Dimension("one record per frame required".into()));
    }
    for (rec, v) in manifest.records.iter().zip(vectors) {
        let file = rec
            .file
            .as_deref()
            .ok_or_else(|| Error::InvalidInput("raw record without file".into()))?;
        write_txl1(&dir.join(file), v)?;
    }
    write_frames_csv(&dir.join(FRAMES_CSV), &manifest.records, vectors)?;
    write_json(&dir.join(MANIFEST_FILE), manifest)
}

pub fn write_compressed_dataset(
    dir: &Path,
    manifest: &DatasetManifest,
    vectors: &[Vec<f64>],
) -> Result<()> {
    let header = manifest
        .matrix
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("compressed manifest needs a matrix header".into()))?;
    let data = manifest.data_file.as_deref().unwrap_or(MEASUREMENTS_FILE);
    write_csm1(&dir.join(data), header.m, vectors)?;
    write_json(&dir.join(MATRIX_FILE), header)?;
    write_json(&dir.join(MANIFEST_FILE), manifest)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: DatasetManifest = read_json(&dir.join(MANIFEST_FILE))?;
    let vectors = match manifest.kind {
        DatasetKind::Raw => manifest
            .records
            .iter()
            .map(|r| {
                let file = r.file.as_deref().ok_or_else(|| {
                    format_err(&dir.join(MANIFEST_FILE), "raw record without file")
                })?;
                read_txl1(&dir.join(file))
            })
            .collect::<Result<Vec<_>>>()?,
        DatasetKind::Compressed => {
            let data = manifest.data_file.as_deref().unwrap_or(MEASUREMENTS_FILE);
            read_csm1(&dir.join(data), manifest.dim())?
        }
    };
    let path = dir.join(MANIFEST_FILE);
    if vectors.len() != manifest.records.len() {
        return Err(format_err(
            &path,
            format!(
                "{} records listed but {} vectors stored",
                manifest.records.len(),
                vectors.len()
            ),
        ));
    }
    if let Some(bad) = vectors.iter().position(|v| v.len() != manifest.dim()) {
        return Err(format_err(
            &path,
            format!("vector {bad} has the wrong length"),
        ));
    }
    Ok(Dataset { manifest, vectors })
}

/// `label,perturbation,v0,…` with one row per frame.
pub fn write_frames_csv(path: &Path, records: &[FrameRecord], vectors: &[Vec<f64>]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let n = vectors.first().map_or(0, Vec::len);
    let mut header = String::from("label,perturbation");
    for i in 0..n {
        header.push_str(&format!(",v{i}"));
    }
    let io = |e| Error::io(PathBuf::from(path), e);
    writeln!(w, "{header}").map_err(io)?;
    for (r, v) in records.iter().zip(vectors) {
        write!(w, "{},{}", r.label, r.perturbation).map_err(io)?;
        for x in v {
            write!(w, ",{x}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn txl1_layout_is_exact() {
        let bytes = encode_txl1(&[1.0, -2.5]);
        assert_eq!(&bytes[..4], b"TXL1");
        assert_eq!(bytes.len(), 4 + 16);
        assert_eq!(&bytes[4..12], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[12..], &(-2.5f64).to_le_bytes());
    }

    #[test]
    fn binary_round_trips_and_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txl");
        write_txl1(&p, &[0.0, 0.01, f64::MIN_POSITIVE]).unwrap();
        assert_eq!(read_txl1(&p).unwrap(), vec![0.0, 0.01, f64::MIN_POSITIVE]);

        let c = dir.path().join("b.csm");
        let recs = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        write_csm1(&c, 2, &recs).unwrap();
        assert_eq!(fs::metadata(&c).unwrap().len(), 4 + 48);
        assert_eq!(read_csm1(&c, 2).unwrap(), recs);
        assert!(matches!(read_csm1(&c, 4), Err(Error::Format { .. })));
        assert!(matches!(read_txl1(&c), Err(Error::Format { .. })));
        assert!(write_csm1(&c, 3, &recs).is_err());

        fs::write(&p, b"TXL1abc").unwrap();
        assert!(matches!(read_txl1(&p), Err(Error::Format { .. })));
        let e = read_txl1(&dir.path().join("missing")).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn vertex_formats() {
        let plain = "0 0 0\n1 0 0\n\n# note\n0 1 0.5\n";
        assert_eq!(parse_vertices(plain).unwrap().len(), 3);
        let obj = "# obj\nv 1 2 3\nvn 0 0 1\nv 4 5 6\nf 1 2 3\n";
        assert_eq!(
            parse_vertices(obj).unwrap(),
            vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]
        );
        let ply = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nelement face 0\nend_header\n0 0 1\n2 0 1\n";
        assert_eq!(
            parse_vertices(ply).unwrap(),
            vec![[0.0, 0.0, 1.0], [2.0, 0.0, 1.0]]
        );
        assert!(parse_vertices("1 2\n").is_err());
        assert!(parse_vertices("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
    }

    #[test]
    fn pgm_scaling() {
        let img = encode_pgm(1, 3, &[0.0, 0.01, 0.05], 0.02).unwrap();
        assert!(img.starts_with(b"P5\n3 1\n255\n"));
        assert_eq!(&img[img.len() - 3..], &[0, 128, 255]);
        assert!(encode_pgm(2, 2, &[0.0], 0.02).is_err());
    }

    proptest! {
        #[test]
        fn txl1_round_trip(values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 0..64)) {
            let bytes = encode_txl1(&values);
            let back = parse_f64s(Path::new("x"), strip_magic(Path::new("x"), &bytes, TXL1_MAGIC).unwrap()).unwrap();
            prop_assert_eq!(back, values);
        }
    }
}
