//! The `NLV1` binary volume container and its `.meta` sidecar.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 0..4  | ASCII `NLV1` |
//! | 4     | payload kind: `0x01` transient, `0x02` directional volume |
//! | 5     | scalar width in bytes, always `0x08` (IEEE-754 binary64) |
//! | 6..8  | reserved, zero |
//! | 8..12 | rank `r` as `u32` |
//! | next `4r` | dims as `u32` each |
//! | rest  | scalars as `f64`, row-major (last dimension fastest) |
//!
//! Transients are rank 3 `(scan_x, scan_y, bin)`; directional volumes are rank 4
//! `(component, x, y, depth)`. Metadata lives in `<stem>.meta` next to the
//! payload as sorted `key=value` lines.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array3, Array4};

use crate::error::{Error, Result};
use crate::grid::ScanGrid;
use crate::volume::{DirectionalAlbedoVolume, TransientVolume};

pub const MAGIC: &[u8; 4] = b"NLV1";
pub const KIND_TRANSIENT: u8 = 0x01;
pub const KIND_DIRECTIONAL: u8 = 0x02;
const SCALAR_WIDTH: u8 = 0x08;
const HEADER_LEN: usize = 12;

/// Either payload kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Volume {
    Transient(TransientVolume),
    Directional(DirectionalAlbedoVolume),
}

impl Volume {
    pub fn grid(&self) -> &ScanGrid {
        match self {
            Volume::Transient(v) => v.grid(),
            Volume::Directional(v) => v.grid(),
        }
    }

    pub fn kind(&self) -> u8 {
        match self {
            Volume::Transient(_) => KIND_TRANSIENT,
            Volume::Directional(_) => KIND_DIRECTIONAL,
        }
    }

    pub fn into_transient(self) -> Result<TransientVolume> {
        match self {
            Volume::Transient(v) => Ok(v),
            Volume::Directional(_) => Err(Error::Decode(
                "expected a transient payload, found a directional volume".into(),
            )),
        }
    }

    pub fn into_directional(self) -> Result<DirectionalAlbedoVolume> {
        match self {
            Volume::Directional(v) => Ok(v),
            Volume::Transient(_) => Err(Error::Decode(
                "expected a directional volume, found a transient payload".into(),
            )),
        }
    }
}

impl From<TransientVolume> for Volume {
    fn from(v: TransientVolume) -> Self {
        Volume::Transient(v)
    }
}

impl From<DirectionalAlbedoVolume> for Volume {
    fn from(v: DirectionalAlbedoVolume) -> Self {
        Volume::Directional(v)
    }
}

/// Key/value metadata persisted beside a payload.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VolumeMeta {
    entries: BTreeMap<String, String>,
}

impl VolumeMeta {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::MissingMeta(key.into()))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::Decode(format!("metadata key `{key}` has invalid value `{raw}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Records the grid fields. Dims in the binary payload carry the rest.
    pub fn set_grid(&mut self, grid: &ScanGrid) -> &mut Self {
        self.set("wall_width_m", grid.wall_width_m)
            .set("bin_width", grid.bin_width)
            .set("light_speed", grid.light_speed)
            .set("scan_res", grid.scan_res)
            .set("num_bins", grid.num_bins)
            .set("depth_res", grid.depth_res)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut meta = VolumeMeta::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Decode(format!("metadata line {} is not key=value", lineno + 1))
            })?;
            let k = k.trim();
            if meta.entries.contains_key(k) {
                return Err(Error::Decode(format!("duplicate metadata key `{k}`")));
            }
            meta.entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(meta)
    }
}

/// Path of the metadata sidecar for a payload path.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta")
}

pub fn encode(volume: &Volume) -> Vec<u8> {
    let (dims, values): (Vec<usize>, Box<dyn Iterator<Item = &f64>>) = match volume {
        Volume::Transient(v) => (v.data().shape().to_vec(), Box::new(v.data().iter())),
        Volume::Directional(v) => (v.data().shape().to_vec(), Box::new(v.data().iter())),
    };
    let count: usize = dims.iter().product();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * dims.len() + 8 * count);
    out.extend_from_slice(MAGIC);
    out.push(volume.kind());
    out.push(SCALAR_WIDTH);
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in &dims {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Decode("truncated header".into()))
}

/// Decoded payload before it is attached to a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPayload {
    pub kind: u8,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

pub fn decode(bytes: &[u8]) -> Result<RawPayload> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Decode("truncated header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Decode(format!("bad magic {:02x?}", &bytes[0..4])));
    }
    let kind = bytes[4];
    let expected_rank = match kind {
        KIND_TRANSIENT => 3,
        KIND_DIRECTIONAL => 4,
        other => return Err(Error::Decode(format!("unknown payload kind 0x{other:02x}"))),
    };
    if bytes[5] != SCALAR_WIDTH {
        return Err(Error::Decode(format!(
            "unsupported scalar width {}",
            bytes[5]
        )));
    }
    if bytes[6] != 0 || bytes[7] != 0 {
        return Err(Error::Decode("reserved bytes are not zero".into()));
    }
    let rank = read_u32(bytes, 8)? as usize;
    if rank != expected_rank {
        return Err(Error::Decode(format!(
            "payload kind 0x{kind:02x} requires rank {expected_rank}, found {rank}"
        )));
    }
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        dims.push(read_u32(bytes, HEADER_LEN + 4 * i)? as usize);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|c| c.checked_mul(8).map(|_| c))
        .ok_or_else(|| Error::Decode(format!("dimensions {dims:?} overflow")))?;
    let start = HEADER_LEN + 4 * rank;
    let body = &bytes[start..];
    if body.len() != count * 8 {
        return Err(Error::Decode(format!(
            "payload holds {} bytes, dims {:?} require {}",
            body.len(),
            dims,
            count * 8
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(RawPayload { kind, dims, values })
}

fn grid_from_meta(meta: &VolumeMeta, payload: &RawPayload) -> Result<ScanGrid> {
    let d = &payload.dims;
    let (scan_res, num_bins, depth_res) = match payload.kind {
        KIND_TRANSIENT => {
            if d[0] != d[1] {
                return Err(Error::Decode(format!("non-square scan dims {d:?}")));
            }
            (d[0], d[2], meta.parse("depth_res")?)
        }
        _ => {
            if d[0] != 3 || d[1] != d[2] {
                return Err(Error::Decode(format!("bad directional dims {d:?}")));
            }
            (d[1], meta.parse("num_bins")?, d[3])
        }
    };
    let grid = ScanGrid::new(
        meta.parse("wall_width_m")?,
        scan_res,
        meta.parse("bin_width")?,
        num_bins,
        depth_res,
    )?
    .with_light_speed(meta.parse("light_speed")?)?;
    Ok(grid)
}

pub fn from_payload(payload: RawPayload, meta: &VolumeMeta) -> Result<Volume> {
    let grid = grid_from_meta(meta, &payload)?;
    let d = payload.dims.clone();
    match payload.kind {
        KIND_TRANSIENT => {
            let data = Array3::from_shape_vec((d[0], d[1], d[2]), payload.values)
                .map_err(|e| Error::Decode(e.to_string()))?;
            Ok(Volume::Transient(TransientVolume::new(grid, data)?))
        }
        _ => {
            let data = Array4::from_shape_vec((d[0], d[1], d[2], d[3]), payload.values)
                .map_err(|e| Error::Decode(e.to_string()))?;
            Ok(Volume::Directional(DirectionalAlbedoVolume::new(grid, data)?))
        }
    }
}

/// Writes the payload and its `.meta` sidecar. Grid keys are filled in from
/// the volume, overriding any stale values in `meta`.
pub fn write_volume(path: &Path, volume: &Volume, meta: &VolumeMeta) -> Result<()> {
    let mut meta = meta.clone();
    meta.set_grid(volume.grid());
    meta.set(
        "kind",
        match volume {
            Volume::Transient(_) => "transient",
            Volume::Directional(_) => "directional",
        },
    );
    fs::write(path, encode(volume)).map_err(|e| Error::io(path, e))?;
    let mp = meta_path(path);
    fs::write(&mp, meta.to_text()).map_err(|e| Error::io(&mp, e))?;
    Ok(())
}

pub fn read_volume(path: &Path) -> Result<(Volume, VolumeMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mp = meta_path(path);
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let meta = VolumeMeta::from_text(&text)?;
    let volume = from_payload(decode(&bytes)?, &meta)?;
    Ok((volume, meta))
}
