//! On-disk formats.
//!
//! HCUBE: `"HCB1" | u32 H | u32 W | u32 B | H·W·B f32`, pixel-major then band.
//! HLBL: `"HLB1" | u32 H | u32 W | H·W u16`, 0 = unlabeled.
//! Checkpoint: `"GFCK" | u32 version | u32 n | n bytes of JSON model config |
//! u32 tensor count | per tensor (u32 rank | u32 dims… | f64 values…)`.
//! All integers and floats are little-endian.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian as LE, WriteBytesExt};
use geofuse_core::dataset::{DataCube, LabelMap};
use geofuse_core::model::{DualBranchModel, ModelConfig};
use geofuse_core::numerics::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, FormatError, Result};

pub const CUBE_MAGIC: [u8; 4] = *b"HCB1";
pub const LABEL_MAGIC: [u8; 4] = *b"HLB1";
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"GFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn check_magic(bytes: &[u8], expected: [u8; 4]) -> Result<(), FormatError> {
    if bytes.len() < 4 {
        return Err(FormatError::Truncated {
            expected: 4,
            found: bytes.len() as u64,
        });
    }
    let found = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if found != expected {
        return Err(FormatError::BadMagic { expected, found });
    }
    Ok(())
}

/// Reads `dims.len()` u32 extents after the magic and returns the payload
/// slice once its length is known to match `elem_size · Π dims`.
fn header_payload(bytes: &[u8], magic: [u8; 4], rank: usize, elem_size: u64) -> Result<(Vec<u32>, &[u8]), FormatError> {
    check_magic(bytes, magic)?;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(FormatError::Truncated {
            expected: header as u64,
            found: bytes.len() as u64,
        });
    }
    let dims: Vec<u32> = (0..rank).map(|i| LE::read_u32(&bytes[4 + 4 * i..])).collect();
    if dims.contains(&0) {
        return Err(FormatError::ZeroExtent { dims });
    }
    let payload = dims
        .iter()
        .try_fold(elem_size, |acc, &d| acc.checked_mul(d as u64))
        .filter(|&n| usize::try_from(n).is_ok_and(|n| n <= isize::MAX as usize))
        .ok_or_else(|| FormatError::DimensionOverflow { dims: dims.clone() })?;
    let found = (bytes.len() - header) as u64;
    if found < payload {
        return Err(FormatError::Truncated {
            expected: payload,
            found,
        });
    }
    if found > payload {
        return Err(FormatError::TrailingBytes {
            expected: found - payload,
        });
    }
    Ok((dims, &bytes[header..]))
}

pub fn decode_cube(bytes: &[u8]) -> Result<DataCube, FormatError> {
    let (dims, payload) = header_payload(bytes, CUBE_MAGIC, 3, 4)?;
    let mut values = vec![0f32; payload.len() / 4];
    LE::read_f32_into(payload, &mut values);
    let [h, w, b] = [dims[0], dims[1], dims[2]].map(|d| d as usize);
    DataCube::new(h, w, b, values).map_err(|e| FormatError::Header(e.to_string()))
}

pub fn encode_cube(cube: &DataCube) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * cube.values().len());
    out.extend_from_slice(&CUBE_MAGIC);
    for d in [cube.height(), cube.width(), cube.bands()] {
        out.write_u32::<LE>(d as u32).unwrap();
    }
    for &v in cube.values() {
        out.write_f32::<LE>(v).unwrap();
    }
    out
}

pub fn decode_labels(bytes: &[u8]) -> Result<LabelMap, FormatError> {
    let (dims, payload) = header_payload(bytes, LABEL_MAGIC, 2, 2)?;
    let mut labels = vec![0u16; payload.len() / 2];
    LE::read_u16_into(payload, &mut labels);
    LabelMap::new(dims[0] as usize, dims[1] as usize, labels).map_err(|e| FormatError::Header(e.to_string()))
}

pub fn encode_labels(labels: &LabelMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 2 * labels.labels().len());
    out.extend_from_slice(&LABEL_MAGIC);
    out.write_u32::<LE>(labels.height() as u32).unwrap();
    out.write_u32::<LE>(labels.width() as u32).unwrap();
    for &l in labels.labels() {
        out.write_u16::<LE>(l).unwrap();
    }
    out
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn load_cube(path: &Path) -> Result<DataCube> {
    decode_cube(&read(path)?).map_err(|e| CliError::format(path, e))
}

pub fn save_cube(path: &Path, cube: &DataCube) -> Result<()> {
    write_file(path, &encode_cube(cube))
}

pub fn load_labels(path: &Path) -> Result<LabelMap> {
    decode_labels(&read(path)?).map_err(|e| CliError::format(path, e))
}

pub fn save_labels(path: &Path, labels: &LabelMap) -> Result<()> {
    write_file(path, &encode_labels(labels))
}

/// Model configuration echoed into a checkpoint header.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEcho {
    pub num_bands: usize,
    pub num_classes: usize,
    pub baseline: bool,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pool_width: usize,
    pub pool_stride: usize,
    pub dense_width: usize,
    pub coord_hidden: usize,
    pub keep_prob: f64,
}

impl From<&ModelConfig> for ModelEcho {
    fn from(c: &ModelConfig) -> Self {
        ModelEcho {
            num_bands: c.num_bands,
            num_classes: c.num_classes,
            baseline: c.baseline,
            filters: c.filters,
            kernel: c.kernel,
            stride: c.stride,
            pool_width: c.pool_width,
            pool_stride: c.pool_stride,
            dense_width: c.dense_width,
            coord_hidden: c.coord_hidden,
            keep_prob: c.keep_prob,
        }
    }
}

impl From<ModelEcho> for ModelConfig {
    fn from(e: ModelEcho) -> Self {
        ModelConfig {
            num_bands: e.num_bands,
            num_classes: e.num_classes,
            baseline: e.baseline,
            filters: e.filters,
            kernel: e.kernel,
            stride: e.stride,
            pool_width: e.pool_width,
            pool_stride: e.pool_stride,
            dense_width: e.dense_width,
            coord_hidden: e.coord_hidden,
            keep_prob: e.keep_prob,
        }
    }
}

pub fn encode_checkpoint(model: &DualBranchModel) -> Vec<u8> {
    let header = serde_json::to_vec(&ModelEcho::from(model.config())).expect("model config serializes");
    let params = model.parameters();
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.write_u32::<LE>(CHECKPOINT_VERSION).unwrap();
    out.write_u32::<LE>(header.len() as u32).unwrap();
    out.extend_from_slice(&header);
    out.write_u32::<LE>(params.len() as u32).unwrap();
    for t in params {
        out.write_u32::<LE>(t.shape().len() as u32).unwrap();
        for &d in t.shape() {
            out.write_u32::<LE>(d as u32).unwrap();
        }
        for &v in t.data() {
            out.write_f64::<LE>(v).unwrap();
        }
    }
    out
}

/// Cursor over a byte slice that reports truncation instead of panicking.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(FormatError::Truncated {
            expected: (self.pos as u64).saturating_add(n as u64),
            found: self.bytes.len() as u64,
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        self.take(4).map(LE::read_u32)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<DualBranchModel, FormatError> {
    check_magic(bytes, CHECKPOINT_MAGIC)?;
    let mut cur = Cursor { bytes, pos: 4 };
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(FormatError::Version(version));
    }
    let header_len = cur.u32()? as usize;
    let echo: ModelEcho =
        serde_json::from_slice(cur.take(header_len)?).map_err(|e| FormatError::Header(e.to_string()))?;
    let count = cur.u32()? as usize;
    let mut params = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let rank = cur.u32()? as usize;
        let dims: Vec<u32> = (0..rank).map(|_| cur.u32()).collect::<Result<_, _>>()?;
        let len = dims
            .iter()
            .try_fold(8u64, |acc, &d| acc.checked_mul(d as u64))
            .and_then(|n| usize::try_from(n).ok())
            .ok_or_else(|| FormatError::DimensionOverflow { dims: dims.clone() })?;
        let raw = cur.take(len)?;
        let mut data = vec![0f64; len / 8];
        LE::read_f64_into(raw, &mut data);
        let shape: Vec<usize> = dims.iter().map(|&d| d as usize).collect();
        params.push(Tensor::from_vec(&shape, data).map_err(|e| FormatError::Header(e.to_string()))?);
    }
    if cur.pos != bytes.len() {
        return Err(FormatError::TrailingBytes {
            expected: (bytes.len() - cur.pos) as u64,
        });
    }
    DualBranchModel::from_parameters(echo.into(), params).map_err(|e| FormatError::Header(e.to_string()))
}

pub fn save_checkpoint(path: &Path, model: &DualBranchModel) -> Result<()> {
    write_file(path, &encode_checkpoint(model))
}

pub fn load_checkpoint(path: &Path) -> Result<DualBranchModel> {
    decode_checkpoint(&read(path)?).map_err(|e| CliError::format(path, e))
}

/// Binary PPM (P6) of an RGB buffer.
pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

/// Parses `row,col,label,b0,…` lines into a cube and label map. A first line
/// starting with `row` is taken as a header. Every pixel of the bounding grid
/// must appear exactly once and all lines must carry the same band count.
pub fn parse_csv(text: &[u8]) -> Result<(DataCube, LabelMap), FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text);
    struct Row {
        row: usize,
        col: usize,
        label: u16,
        bands: Vec<f32>,
    }
    let mut rows: Vec<Row> = Vec::new();
    let mut seen: HashMap<(usize, usize), u64> = HashMap::new();
    let mut band_count = None;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| FormatError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |message: String| FormatError::Csv { line, message };
        if i == 0 && record.get(0) == Some("row") {
            continue;
        }
        if record.len() < 4 {
            return Err(err(format!("expected row,col,label and at least one band, got {} fields", record.len())));
        }
        let int = |idx: usize, name: &str| -> Result<usize, FormatError> {
            record[idx].parse::<usize>().map_err(|e| err(format!("{name} {:?}: {e}", &record[idx])))
        };
        let (row, col) = (int(0, "row")?, int(1, "col")?);
        let label = record[2].parse::<u16>().map_err(|e| err(format!("label {:?}: {e}", &record[2])))?;
        let bands = record
            .iter()
            .skip(3)
            .map(|f| match f.parse::<f32>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) => Err(err(format!("non-finite band value {f:?}"))),
                Err(e) => Err(err(format!("band value {f:?}: {e}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        match band_count {
            None => band_count = Some(bands.len()),
            Some(b) if b != bands.len() => return Err(err(format!("expected {b} bands, got {}", bands.len()))),
            _ => {}
        }
        if let Some(first) = seen.insert((row, col), line) {
            return Err(err(format!("duplicate pixel ({row}, {col}), first given on line {first}")));
        }
        rows.push(Row { row, col, label, bands });
    }
    let bands = band_count.ok_or(FormatError::Csv {
        line: 0,
        message: "no pixel lines".into(),
    })?;
    let h = rows.iter().map(|r| r.row).max().unwrap_or(0) + 1;
    let w = rows.iter().map(|r| r.col).max().unwrap_or(0) + 1;
    if rows.len() != h * w {
        let missing = (0..h * w).find(|&p| !seen.contains_key(&(p / w, p % w))).unwrap_or(0);
        return Err(FormatError::MissingPixel {
            row: missing / w,
            col: missing % w,
        });
    }
    let mut values = vec![0f32; h * w * bands];
    let mut labels = vec![0u16; h * w];
    for r in rows {
        let p = r.row * w + r.col;
        labels[p] = r.label;
        values[p * bands..(p + 1) * bands].copy_from_slice(&r.bands);
    }
    let cube = DataCube::new(h, w, bands, values).map_err(|e| FormatError::Header(e.to_string()))?;
    let labels = LabelMap::new(h, w, labels).map_err(|e| FormatError::Header(e.to_string()))?;
    Ok((cube, labels))
}

/// Inverse of [`parse_csv`]: one line per pixel in raster order, no header.
pub fn write_csv(out: &mut impl Write, cube: &DataCube, labels: &LabelMap) -> std::io::Result<()> {
    for r in 0..cube.height() {
        for c in 0..cube.width() {
            write!(out, "{r},{c},{}", labels.get(r, c))?;
            for v in cube.pixel(r, c) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}
