//! Binary artifact container and text exports.
//!
//! Every grid artifact (kernel cache, risk volume, terrain, 2D raster) uses
//! one container layout: an 8-byte magic, a little-endian u32 header length,
//! a JSON header, then the raw payload. Float payloads are little-endian
//! f32, row-major (altitude, y, x); terrain payloads pack one bit per voxel,
//! LSB-first, in the same order. Headers carry a SHA-256 of the payload and
//! optionally the scenario hash for provenance.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{GridSpec2, GridSpec3, GroundUseGrid, ScalarField2};
use crate::impact::{ImpactKernel, ImpactModel};
use crate::terrain::{
    ClearanceField, ColumnClearance, NoFlyTerrain, RiskVolume, TerrainKind, BLOCKED_SENTINEL,
};

const MAGIC: &[u8; 8] = b"VRTGRID\n";
pub const FORMAT_VERSION: u32 = 1;

/// Regulatory altitude cap reported alongside engine ceilings (400 ft).
pub const REGULATION_CEILING_M: f64 = 122.0;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FileHeader {
    Kernel(KernelHeader),
    RiskVolume(VolumeHeader),
    Terrain(TerrainHeader),
    Raster2d(RasterHeader),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelHeader {
    pub format_version: u32,
    pub model: ImpactModel,
    pub half_extent_m: f64,
    pub delta_m: f64,
    pub spacing_m: f64,
    pub altitudes_m: Vec<f64>,
    pub payload: String,
    pub payload_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_sha256: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub format_version: u32,
    pub grid: GridSpec3,
    pub units: String,
    pub blocked_sentinel: f64,
    pub payload: String,
    pub payload_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_sha256: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TerrainHeader {
    pub format_version: u32,
    pub grid: GridSpec3,
    pub terrain_kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<String>,
    pub payload: String,
    pub payload_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_sha256: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RasterHeader {
    pub format_version: u32,
    pub grid: GridSpec2,
    pub payload: String,
    pub payload_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_sha256: Option<String>,
}

fn encode_f32(values: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut out = Vec::new();
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn decode_f32(bytes: &[u8], path: &Path) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: "f32 payload length is not a multiple of 4".into(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn encode_bits(flags: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; flags.len().div_ceil(8)];
    for (i, b) in flags.iter().enumerate() {
        if *b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

fn decode_bits(bytes: &[u8], n: usize, path: &Path) -> Result<Vec<bool>> {
    if bytes.len() != n.div_ceil(8) {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: format!(
                "bit payload holds {} bytes, expected {}",
                bytes.len(),
                n.div_ceil(8)
            ),
        });
    }
    Ok((0..n).map(|i| bytes[i / 8] & (1 << (i % 8)) != 0).collect())
}

fn write_container(path: &Path, header: &FileHeader, payload: &[u8]) -> Result<()> {
    let header_json = serde_json::to_vec(header).expect("headers serialize");
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + header_json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(payload);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_container(path: &Path) -> Result<(FileHeader, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |message: String| Error::Format {
        path: path.display().to_string(),
        message,
    };
    if bytes.len() < MAGIC.len() + 4 || &bytes[..8] != MAGIC {
        return Err(fail("missing grid-container magic".into()));
    }
    let hlen = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    if bytes.len() < 12 + hlen {
        return Err(fail("truncated header".into()));
    }
    let header: FileHeader = serde_json::from_slice(&bytes[12..12 + hlen])
        .map_err(|e| fail(format!("invalid header: {e}")))?;
    let payload = bytes[12 + hlen..].to_vec();
    let (version, stored_hash) = match &header {
        FileHeader::Kernel(h) => (h.format_version, &h.payload_sha256),
        FileHeader::RiskVolume(h) => (h.format_version, &h.payload_sha256),
        FileHeader::Terrain(h) => (h.format_version, &h.payload_sha256),
        FileHeader::Raster2d(h) => (h.format_version, &h.payload_sha256),
    };
    if version != FORMAT_VERSION {
        return Err(fail(format!("unsupported format version {version}")));
    }
    let actual = sha256_hex(&payload);
    if &actual != stored_hash {
        return Err(fail(format!(
            "payload hash mismatch: header says {stored_hash}, payload is {actual}"
        )));
    }
    Ok((header, payload))
}

/// Write a kernel cache file; returns the payload hash.
pub fn write_kernel(
    path: impl AsRef<Path>,
    kernel: &ImpactKernel,
    scenario_sha256: Option<&str>,
) -> Result<String> {
    let payload = encode_f32(kernel.values().iter().copied());
    let hash = sha256_hex(&payload);
    let header = FileHeader::Kernel(KernelHeader {
        format_version: FORMAT_VERSION,
        model: kernel.model,
        half_extent_m: kernel.half_extent_m,
        delta_m: kernel.delta_m,
        spacing_m: kernel.spacing_m,
        altitudes_m: kernel.altitudes_m.clone(),
        payload: "f32le".into(),
        payload_sha256: hash.clone(),
        scenario_sha256: scenario_sha256.map(str::to_string),
    });
    write_container(path.as_ref(), &header, &payload)?;
    Ok(hash)
}

pub fn read_kernel(path: impl AsRef<Path>) -> Result<(ImpactKernel, KernelHeader)> {
    let path = path.as_ref();
    let (header, payload) = read_container(path)?;
    let FileHeader::Kernel(h) = header else {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: "not a kernel file".into(),
        });
    };
    let values = decode_f32(&payload, path)?;
    let kernel = ImpactKernel::from_parts(
        h.model,
        h.half_extent_m,
        h.delta_m,
        h.spacing_m,
        h.altitudes_m.clone(),
        values,
    )?;
    Ok((kernel, h))
}

pub fn write_risk_volume(
    path: impl AsRef<Path>,
    vol: &RiskVolume,
    scenario_sha256: Option<&str>,
) -> Result<String> {
    let payload = encode_f32(vol.values().iter().copied());
    let hash = sha256_hex(&payload);
    let header = FileHeader::RiskVolume(VolumeHeader {
        format_version: FORMAT_VERSION,
        grid: vol.spec,
        units: "harm_events_per_flight_hour".into(),
        blocked_sentinel: BLOCKED_SENTINEL,
        payload: "f32le".into(),
        payload_sha256: hash.clone(),
        scenario_sha256: scenario_sha256.map(str::to_string),
    });
    write_container(path.as_ref(), &header, &payload)?;
    Ok(hash)
}

pub fn read_risk_volume(path: impl AsRef<Path>) -> Result<(RiskVolume, VolumeHeader)> {
    let path = path.as_ref();
    let (header, payload) = read_container(path)?;
    let FileHeader::RiskVolume(h) = header else {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: "not a risk-volume file".into(),
        });
    };
    let values = decode_f32(&payload, path)?;
    let vol = RiskVolume::from_values(h.grid, values)?;
    Ok((vol, h))
}

pub fn write_terrain(
    path: impl AsRef<Path>,
    terrain: &NoFlyTerrain,
    scenario_sha256: Option<&str>,
) -> Result<String> {
    let payload = encode_bits(terrain.excluded());
    let hash = sha256_hex(&payload);
    let header = FileHeader::Terrain(TerrainHeader {
        format_version: FORMAT_VERSION,
        grid: terrain.spec,
        terrain_kind: terrain.kind.as_str().into(),
        threshold: terrain.threshold,
        sources: terrain.sources.clone(),
        payload: "bits_lsb".into(),
        payload_sha256: hash.clone(),
        scenario_sha256: scenario_sha256
            .map(str::to_string)
            .or_else(|| terrain.scenario_hash.clone()),
    });
    write_container(path.as_ref(), &header, &payload)?;
    Ok(hash)
}

pub fn read_terrain(path: impl AsRef<Path>) -> Result<(NoFlyTerrain, TerrainHeader)> {
    let path = path.as_ref();
    let (header, payload) = read_container(path)?;
    let FileHeader::Terrain(h) = header else {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: "not a terrain file".into(),
        });
    };
    let excluded = decode_bits(&payload, h.grid.len(), path)?;
    let kind = TerrainKind::parse(&h.terrain_kind).ok_or_else(|| Error::Format {
        path: path.display().to_string(),
        message: format!("unknown terrain kind '{}'", h.terrain_kind),
    })?;
    let mut terrain = NoFlyTerrain::from_parts(h.grid, excluded, h.threshold, kind)?;
    terrain.scenario_hash = h.scenario_sha256.clone();
    terrain.sources = h.sources.clone();
    Ok((terrain, h))
}

pub fn write_raster2d(
    path: impl AsRef<Path>,
    raster: &ScalarField2,
    scenario_sha256: Option<&str>,
) -> Result<String> {
    let payload = encode_f32(raster.values().iter().copied());
    let hash = sha256_hex(&payload);
    let header = FileHeader::Raster2d(RasterHeader {
        format_version: FORMAT_VERSION,
        grid: raster.spec,
        payload: "f32le".into(),
        payload_sha256: hash.clone(),
        scenario_sha256: scenario_sha256.map(str::to_string),
    });
    write_container(path.as_ref(), &header, &payload)?;
    Ok(hash)
}

pub fn read_raster2d(path: impl AsRef<Path>) -> Result<ScalarField2> {
    let path = path.as_ref();
    let (header, payload) = read_container(path)?;
    let FileHeader::Raster2d(h) = header else {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: "not a 2d raster file".into(),
        });
    };
    let values = decode_f32(&payload, path)?;
    ScalarField2::new(h.grid, values)
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
}

/// Render the per-column clearance CSV. Columns: x_m, y_m, ground_class,
/// clearance_m, status; closed columns leave clearance_m empty. A leading
/// `#` comment carries provenance.
pub fn clearance_csv(
    clearance: &ClearanceField,
    ground: &GroundUseGrid,
    scenario_sha256: Option<&str>,
) -> Result<String> {
    if ground.spec != clearance.spec {
        return Err(Error::Extent(
            "clearance field and ground grid do not align".into(),
        ));
    }
    let mut out = String::new();
    if let Some(h) = scenario_sha256 {
        out.push_str(&format!("# scenario_sha256={h}\n"));
    }
    out.push_str(&format!(
        "# ceiling_m={:.1} regulation_ceiling_m={:.1}\n",
        clearance.ceiling_m, REGULATION_CEILING_M
    ));
    out.push_str("x_m,y_m,ground_class,clearance_m,status\n");
    let [nx, ny] = clearance.spec.dims;
    for j in 0..ny {
        for i in 0..nx {
            let [x, y] = clearance.spec.cell_center(i, j);
            let col = clearance.column(i, j);
            let clearance_s = match col.clearance_m() {
                Some(v) => format!("{v:.1}"),
                None => String::new(),
            };
            out.push_str(&format!(
                "{x:.1},{y:.1},{},{clearance_s},{}\n",
                ground.class(i, j).as_str(),
                col.status()
            ));
        }
    }
    Ok(out)
}

/// Per-class clearance statistics (lower median; closed columns count as
/// unbounded and are excluded from min/median/max when any finite value
/// exists).
#[derive(Debug, Clone, Serialize)]
pub struct ClassSummary {
    pub class: String,
    pub columns: usize,
    pub open: usize,
    pub closed: usize,
    pub min_m: Option<f64>,
    pub median_m: Option<f64>,
    pub max_m: Option<f64>,
    /// Columns whose clearance exceeds the 122 m regulatory cap (closed
    /// columns included).
    pub above_regulation: usize,
}

pub fn clearance_summary(
    clearance: &ClearanceField,
    ground: &GroundUseGrid,
) -> Result<Vec<ClassSummary>> {
    use crate::grid::GroundClass;
    if ground.spec != clearance.spec {
        return Err(Error::Extent(
            "clearance field and ground grid do not align".into(),
        ));
    }
    let mut out = Vec::new();
    for class in [
        GroundClass::Pedestrian,
        GroundClass::Vehicle,
        GroundClass::None,
    ] {
        let mut values: Vec<f64> = Vec::new();
        let (mut open, mut closed, mut above) = (0usize, 0usize, 0usize);
        let [nx, ny] = clearance.spec.dims;
        for j in 0..ny {
            for i in 0..nx {
                if ground.class(i, j) != class {
                    continue;
                }
                match clearance.column(i, j) {
                    ColumnClearance::Open => {
                        open += 1;
                        values.push(0.0);
                    }
                    ColumnClearance::ClearAbove(h) => {
                        if h > REGULATION_CEILING_M {
                            above += 1;
                        }
                        values.push(h);
                    }
                    ColumnClearance::Closed => {
                        closed += 1;
                        above += 1;
                        values.push(f64::INFINITY);
                    }
                }
            }
        }
        let columns = values.len();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let finite = |v: f64| if v.is_finite() { Some(v) } else { None };
        let (min_m, median_m, max_m) = if columns == 0 {
            (None, None, None)
        } else {
            let max_finite = values.iter().rev().find(|v| v.is_finite()).copied();
            (
                finite(values[0]),
                finite(values[(columns - 1) / 2]),
                max_finite,
            )
        };
        out.push(ClassSummary {
            class: class.as_str().into(),
            columns,
            open,
            closed,
            min_m,
            median_m,
            max_m,
            above_regulation: above,
        });
    }
    Ok(out)
}
