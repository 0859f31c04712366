//! Scenario files: one JSON document that composes the urban model, grid,
//! impact model, hazard chain, exposure model, thresholds, and output paths.
//!
//! The scenario file's SHA-256 rides along into every artifact header for
//! provenance. Relative paths inside the document resolve against the
//! scenario file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exposure::{
    build_exposure_grid, DensityOverrides, ExposureGrid, ExposureModel, TemporalFactors,
};
use crate::grid::{
    classify_ground, load_urban_model, rasterize_occupancy, GridSpec3, GroundUseGrid,
    OccupancyMask, ScalarField2, UrbanModel,
};
use crate::hazard::{
    BodyModel, FailureModel, HarmConfig, HarmModel, HazardChain, RecoveryModel, UavSpec,
};
use crate::impact::{GaussianImpactParams, ImpactModel, RayleighImpactParams, RayleighMode};
use crate::io::sha256_hex;

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    /// Urban-model JSON path, relative to the scenario file.
    pub urban_model: String,
    #[serde(default)]
    pub grid: GridSection,
    pub impact: ImpactSection,
    pub uav: UavSection,
    pub failure: FailureSection,
    #[serde(default)]
    pub recovery: RecoverySection,
    #[serde(default)]
    pub harm: HarmSection,
    #[serde(default)]
    pub exposure: ExposureSection,
    /// Time-of-day label, e.g. "5pm".
    pub time: String,
    /// Risk thresholds in (0, 1), strictly decreasing.
    pub thresholds: Vec<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub outputs: OutputsSection,
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_spacing")]
    pub spacing_m: f64,
    #[serde(default = "default_ceiling")]
    pub ceiling_m: f64,
    /// Explicit grid override (center of the first voxel).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<[usize; 3]>,
    /// Optional ground-elevation raster (binary 2D raster file).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elevation_raster: Option<String>,
}

fn default_spacing() -> f64 {
    2.0
}

fn default_ceiling() -> f64 {
    200.0
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            spacing_m: default_spacing(),
            ceiling_m: default_ceiling(),
            origin: None,
            dims: None,
            elevation_raster: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpactSection {
    /// "gaussian" or "rayleigh".
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// "unnormalized" (default) or "normalized"; ring model only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default = "default_half_extent")]
    pub half_extent_m: f64,
    #[serde(default = "default_delta")]
    pub delta_m: f64,
}

fn default_half_extent() -> f64 {
    20.0
}

fn default_delta() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavSection {
    pub mass_kg: f64,
    pub cross_section_m2: f64,
    pub drag_coeff: f64,
    pub diameter_cm: f64,
    pub speed_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSection {
    pub lambda_per_hour: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverySection {
    #[serde(default)]
    pub parachute: bool,
    #[serde(default = "default_max_success")]
    pub max_success: f64,
    #[serde(default = "default_steepness")]
    pub steepness: f64,
    #[serde(default = "default_midpoint")]
    pub midpoint_m: f64,
}

fn default_max_success() -> f64 {
    0.5
}

fn default_steepness() -> f64 {
    1.35
}

fn default_midpoint() -> f64 {
    45.0
}

impl Default for RecoverySection {
    fn default() -> Self {
        Self {
            parachute: false,
            max_success: default_max_success(),
            steepness: default_steepness(),
            midpoint_m: default_midpoint(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmSection {
    /// "bc_ais3" | "shelley" | "primatesta".
    #[serde(default = "default_ped_model")]
    pub pedestrian_model: String,
    /// "windshield" | "shelley" | "primatesta".
    #[serde(default = "default_veh_model")]
    pub vehicle_model: String,
    #[serde(default)]
    pub parameters: HarmParameters,
}

fn default_ped_model() -> String {
    "bc_ais3".into()
}

fn default_veh_model() -> String {
    "windshield".into()
}

impl Default for HarmSection {
    fn default() -> Self {
        Self {
            pedestrian_model: default_ped_model(),
            vehicle_model: default_veh_model(),
            parameters: HarmParameters::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmParameters {
    #[serde(default = "default_body_mass")]
    pub body_mass_kg: f64,
    #[serde(default = "default_wall_coeff")]
    pub body_wall_coeff: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shelley_e0_j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shelley_k_per_j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primatesta_alpha_j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primatesta_beta_j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sheltering: Option<f64>,
    #[serde(default = "default_ws_offset")]
    pub windshield_offset: f64,
    #[serde(default = "default_ws_slope")]
    pub windshield_slope_per_kj: f64,
    #[serde(default = "default_ws_floor")]
    pub windshield_floor_coeff: f64,
}

fn default_body_mass() -> f64 {
    70.0
}

fn default_wall_coeff() -> f64 {
    0.652
}

fn default_ws_offset() -> f64 {
    6.0
}

fn default_ws_slope() -> f64 {
    5.0
}

fn default_ws_floor() -> f64 {
    0.5
}

impl Default for HarmParameters {
    fn default() -> Self {
        Self {
            body_mass_kg: default_body_mass(),
            body_wall_coeff: default_wall_coeff(),
            shelley_e0_j: None,
            shelley_k_per_j: None,
            primatesta_alpha_j: None,
            primatesta_beta_j: None,
            sheltering: None,
            windshield_offset: default_ws_offset(),
            windshield_slope_per_kj: default_ws_slope(),
            windshield_floor_coeff: default_ws_floor(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExposureSection {
    #[serde(default = "default_ped_base")]
    pub ped_base: f64,
    #[serde(default = "default_veh_base")]
    pub veh_base: f64,
    /// Label -> {tp, tv}; defaults to the shipped three-time table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<std::collections::BTreeMap<String, TemporalFactors>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ped_density_raster: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub veh_density_raster: Option<String>,
}

fn default_ped_base() -> f64 {
    0.15
}

fn default_veh_base() -> f64 {
    0.04
}

impl Default for ExposureSection {
    fn default() -> Self {
        Self {
            ped_base: default_ped_base(),
            veh_base: default_veh_base(),
            times: None,
            ped_density_raster: None,
            veh_density_raster: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terrain_prefix: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clearance_prefix: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_obj: Option<String>,
}

/// Parse a scenario document plus the content hash of its raw bytes.
pub fn parse_scenario(bytes: &[u8]) -> Result<(ScenarioFile, String)> {
    let file: ScenarioFile = serde_json::from_slice(bytes)
        .map_err(|e| Error::schema("$", format!("invalid scenario document: {e}")))?;
    if file.version != SCENARIO_VERSION {
        return Err(Error::schema(
            "version",
            format!("unsupported scenario version {}", file.version),
        ));
    }
    Ok((file, sha256_hex(bytes)))
}

/// Read and parse a scenario file from disk.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<(ScenarioFile, String)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&bytes)
}

impl ScenarioFile {
    pub fn impact_model(&self) -> Result<ImpactModel> {
        match self.impact.model.as_str() {
            "gaussian" => {
                let alpha = self.impact.alpha.ok_or_else(|| {
                    Error::schema("impact.alpha", "required for the gaussian model")
                })?;
                Ok(ImpactModel::Gaussian(GaussianImpactParams::new(alpha)?))
            }
            "rayleigh" => {
                let beta = self.impact.beta.ok_or_else(|| {
                    Error::schema("impact.beta", "required for the rayleigh model")
                })?;
                let gamma = self.impact.gamma.ok_or_else(|| {
                    Error::schema("impact.gamma", "required for the rayleigh model")
                })?;
                let mode = match self.impact.mode.as_deref() {
                    None | Some("unnormalized") => RayleighMode::Unnormalized,
                    Some("normalized") => RayleighMode::Normalized,
                    Some(other) => {
                        return Err(Error::schema(
                            "impact.mode",
                            format!("unknown mode '{other}'"),
                        ))
                    }
                };
                Ok(ImpactModel::Rayleigh(RayleighImpactParams::new(
                    beta, gamma, mode,
                )?))
            }
            other => Err(Error::schema(
                "impact.model",
                format!("unknown model '{other}'"),
            )),
        }
    }

    pub fn uav_spec(&self) -> UavSpec {
        UavSpec {
            mass_kg: self.uav.mass_kg,
            cross_section_m2: self.uav.cross_section_m2,
            drag_coeff: self.uav.drag_coeff,
            diameter_cm: self.uav.diameter_cm,
            cruise_speed_ms: self.uav.speed_ms,
        }
    }

    fn harm_model_for(&self, which: &str, name: &str) -> Result<HarmModel> {
        let p = &self.harm.parameters;
        match name {
            "bc_ais3" => Ok(HarmModel::BcAis3 {
                body: BodyModel {
                    mass_kg: p.body_mass_kg,
                    wall_coeff: p.body_wall_coeff,
                },
            }),
            "windshield" => Ok(HarmModel::VehicleWindshield {
                offset: p.windshield_offset,
                slope_per_kj: p.windshield_slope_per_kj,
                floor_coeff: p.windshield_floor_coeff,
            }),
            "shelley" => {
                let e0 = p.shelley_e0_j.ok_or_else(|| {
                    Error::schema("harm.parameters.shelley_e0_j", "required for shelley")
                })?;
                let k = p.shelley_k_per_j.ok_or_else(|| {
                    Error::schema("harm.parameters.shelley_k_per_j", "required for shelley")
                })?;
                Ok(HarmModel::ShelleyFatality {
                    e0_j: e0,
                    k_per_j: k,
                })
            }
            "primatesta" => {
                let alpha = p.primatesta_alpha_j.ok_or_else(|| {
                    Error::schema(
                        "harm.parameters.primatesta_alpha_j",
                        "required for primatesta",
                    )
                })?;
                let beta = p.primatesta_beta_j.ok_or_else(|| {
                    Error::schema(
                        "harm.parameters.primatesta_beta_j",
                        "required for primatesta",
                    )
                })?;
                let shelter = p.sheltering.ok_or_else(|| {
                    Error::schema("harm.parameters.sheltering", "required for primatesta")
                })?;
                Ok(HarmModel::PrimatestaFatality {
                    alpha_j: alpha,
                    beta_j: beta,
                    sheltering: shelter,
                })
            }
            other => Err(Error::schema(
                format!("harm.{which}"),
                format!("unknown harm model '{other}'"),
            )),
        }
    }

    pub fn hazard_chain(&self) -> Result<HazardChain> {
        let chain = HazardChain {
            failure: FailureModel::new(
                self.failure.lambda_per_hour,
                self.failure
                    .label
                    .clone()
                    .unwrap_or_else(|| format!("catastrophic-{:e}", self.failure.lambda_per_hour)),
            )?,
            recovery: RecoveryModel {
                parachute: self.recovery.parachute,
                max_success: self.recovery.max_success,
                steepness: self.recovery.steepness,
                midpoint_m: self.recovery.midpoint_m,
            },
            uav: self.uav_spec(),
            harm: HarmConfig {
                pedestrian: Some(
                    self.harm_model_for("pedestrian_model", &self.harm.pedestrian_model)?,
                ),
                vehicle: Some(self.harm_model_for("vehicle_model", &self.harm.vehicle_model)?),
            },
            add_cruise_energy: false,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn exposure_model(&self) -> Result<ExposureModel> {
        let model = ExposureModel {
            ped_base: self.exposure.ped_base,
            veh_base: self.exposure.veh_base,
            times: self
                .exposure
                .times
                .clone()
                .unwrap_or_else(|| ExposureModel::default().times),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate_thresholds(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::schema(
                "thresholds",
                "at least one threshold required",
            ));
        }
        for (i, t) in self.thresholds.iter().enumerate() {
            if !t.is_finite() || *t <= 0.0 || *t >= 1.0 {
                return Err(Error::schema(
                    format!("thresholds[{i}]"),
                    format!("must lie in (0, 1), got {t}"),
                ));
            }
        }
        for (i, w) in self.thresholds.windows(2).enumerate() {
            if w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Less) {
                return Err(Error::schema(
                    format!("thresholds[{}]", i + 1),
                    "thresholds must be strictly decreasing",
                ));
            }
        }
        Ok(())
    }
}

/// Everything derived from a scenario, ready for the pipeline stages.
pub struct ScenarioArtifacts {
    pub file: ScenarioFile,
    pub scenario_hash: String,
    pub urban: UrbanModel,
    pub grid: GridSpec3,
    pub impact: ImpactModel,
    pub altitudes: Vec<f64>,
    pub chain: HazardChain,
    pub exposure_model: ExposureModel,
    pub ground: GroundUseGrid,
    pub exposure: ExposureGrid,
    pub occupancy: OccupancyMask,
    pub elevation: Option<ScalarField2>,
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Derive the voxel grid from the urban-model extent: voxel centers start
/// half a spacing inside the extent and altitude levels run from one spacing
/// up to the ceiling.
pub fn derive_grid(extent: [f64; 4], spacing: f64, ceiling: f64) -> Result<GridSpec3> {
    if !spacing.is_finite() || spacing <= 0.0 {
        return Err(Error::Config(format!(
            "grid spacing must be > 0, got {spacing}"
        )));
    }
    if ceiling.is_nan() || ceiling < spacing {
        return Err(Error::Config(format!(
            "ceiling {ceiling} m must be at least one spacing ({spacing} m)"
        )));
    }
    let nx = ((extent[2] - extent[0]) / spacing).floor() as usize;
    let ny = ((extent[3] - extent[1]) / spacing).floor() as usize;
    let nz = (ceiling / spacing).floor() as usize;
    GridSpec3::new(
        [
            extent[0] + spacing / 2.0,
            extent[1] + spacing / 2.0,
            spacing,
        ],
        [spacing, spacing, spacing],
        [nx, ny, nz],
    )
}

/// Load referenced files and assemble the runtime artifacts for a scenario.
pub fn build_artifacts(
    file: ScenarioFile,
    scenario_hash: String,
    base_dir: &Path,
) -> Result<ScenarioArtifacts> {
    file.validate_thresholds()?;
    let urban_path = resolve(base_dir, &file.urban_model);
    let urban_text = std::fs::read_to_string(&urban_path).map_err(|e| Error::io(&urban_path, e))?;
    let urban = load_urban_model(&urban_text)?;

    let grid = match (file.grid.origin, file.grid.dims) {
        (Some(origin), Some(dims)) => GridSpec3::new(origin, [file.grid.spacing_m; 3], dims)?,
        (None, None) => derive_grid(urban.extent, file.grid.spacing_m, file.grid.ceiling_m)?,
        _ => {
            return Err(Error::schema(
                "grid",
                "origin and dims must be given together or both omitted",
            ))
        }
    };
    let altitudes: Vec<f64> = (0..grid.dims[2]).map(|k| grid.level_altitude(k)).collect();
    if altitudes.first().copied().unwrap_or(0.0) <= 0.0 {
        return Err(Error::Config(
            "lowest altitude level must be above ground".into(),
        ));
    }

    let impact = file.impact_model()?;
    let chain = file.hazard_chain()?;
    let exposure_model = file.exposure_model()?;

    let elevation = match &file.grid.elevation_raster {
        Some(rel) => Some(crate::io::read_raster2d(resolve(base_dir, rel))?),
        None => None,
    };
    let ground = classify_ground(&urban, &grid.horizontal())?;
    let ped_raster = match &file.exposure.ped_density_raster {
        Some(rel) => Some(crate::io::read_raster2d(resolve(base_dir, rel))?),
        None => None,
    };
    let veh_raster = match &file.exposure.veh_density_raster {
        Some(rel) => Some(crate::io::read_raster2d(resolve(base_dir, rel))?),
        None => None,
    };
    let exposure = build_exposure_grid(
        &ground,
        &exposure_model,
        &file.time,
        DensityOverrides {
            pedestrian: ped_raster.as_ref(),
            vehicle: veh_raster.as_ref(),
        },
    )?;
    let occupancy = rasterize_occupancy(&urban, &grid, elevation.as_ref())?;

    Ok(ScenarioArtifacts {
        scenario_hash,
        urban,
        grid,
        impact,
        altitudes,
        chain,
        exposure_model,
        ground,
        exposure,
        occupancy,
        elevation,
        file,
    })
}
