//! Entity-of-value density fields: base pedestrian/vehicle densities per
//! ground cell scaled by multiplicative time-of-day factors.
//!
//! Time is a discrete label set (the shipped table covers "12pm", "5pm",
//! "10pm"); there is no continuous-time interpolation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec2, GroundClass, GroundUseGrid, ScalarField2};

/// Pedestrian density bands in people/m², for reference when choosing a
/// base density. Urban CBD sidewalks at rush hour sit in the moderate band.
pub mod pedestrian_density_classes {
    pub const VERY_LOW_MAX: f64 = 0.05;
    pub const LOW: (f64, f64) = (0.05, 0.1);
    pub const MODERATE: (f64, f64) = (0.1, 0.2);
    pub const HIGH: (f64, f64) = (0.2, 0.3);
    pub const VERY_HIGH_MIN: f64 = 0.3;
}

/// Vehicle density bands in vehicles/100 m/lane, for reference. The engine's
/// vehicle base is expected windshield-strike targets per m² derived from
/// such counts (10 veh/100 m/lane, 3 m lane, 1.28 m² windshield projection
/// gives 0.04 counts/m²).
pub mod vehicle_density_classes {
    pub const VERY_LOW_MAX: f64 = 2.0;
    pub const LOW: (f64, f64) = (2.0, 5.0);
    pub const MODERATE: (f64, f64) = (5.0, 10.0);
    pub const HIGH: (f64, f64) = (10.0, 15.0);
    pub const VERY_HIGH_MIN: f64 = 15.0;
}

/// Temporal factor pair for one time label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalFactors {
    /// Pedestrian factor.
    pub tp: f64,
    /// Vehicle factor.
    pub tv: f64,
}

/// Base densities plus the table of time-of-day factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureModel {
    /// People per m² on pedestrian cells at the base time.
    pub ped_base: f64,
    /// Expected strike targets per m² on vehicle cells at the base time.
    pub veh_base: f64,
    /// Label -> factors; ordered map keeps serialization deterministic.
    pub times: BTreeMap<String, TemporalFactors>,
}

impl Default for ExposureModel {
    fn default() -> Self {
        let mut times = BTreeMap::new();
        times.insert("12pm".to_string(), TemporalFactors { tp: 0.5, tv: 0.6 });
        times.insert("5pm".to_string(), TemporalFactors { tp: 1.0, tv: 1.0 });
        times.insert("10pm".to_string(), TemporalFactors { tp: 0.1, tv: 0.2 });
        Self {
            ped_base: 0.15,
            veh_base: 0.04,
            times,
        }
    }
}

impl ExposureModel {
    pub fn validate(&self) -> Result<()> {
        if !self.ped_base.is_finite() || self.ped_base < 0.0 {
            return Err(Error::Config(format!(
                "pedestrian base density must be >= 0, got {}",
                self.ped_base
            )));
        }
        if !self.veh_base.is_finite() || self.veh_base < 0.0 {
            return Err(Error::Config(format!(
                "vehicle base density must be >= 0, got {}",
                self.veh_base
            )));
        }
        if self.times.is_empty() {
            return Err(Error::Config("temporal table must not be empty".into()));
        }
        for (label, f) in &self.times {
            if !f.tp.is_finite() || !f.tv.is_finite() || f.tp < 0.0 || f.tv < 0.0 {
                return Err(Error::Config(format!(
                    "temporal factors for '{label}' must be finite and >= 0"
                )));
            }
        }
        if !self.times.values().any(|f| f.tp == 1.0 && f.tv == 1.0) {
            return Err(Error::Config(
                "temporal table needs a base time with factors (1, 1)".into(),
            ));
        }
        Ok(())
    }

    fn factors(&self, time_label: &str) -> Result<&TemporalFactors> {
        self.times.get(time_label).ok_or_else(|| {
            Error::Config(format!(
                "unknown time label '{time_label}'; known: {}",
                self.times.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }
}

/// Temporal factor for a class at a time label.
pub fn temporal_factor(model: &ExposureModel, time_label: &str, class: GroundClass) -> Result<f64> {
    let f = model.factors(time_label)?;
    Ok(match class {
        GroundClass::Pedestrian => f.tp,
        GroundClass::Vehicle => f.tv,
        GroundClass::None => 0.0,
    })
}

/// Density (per m²) for a ground class at a time label.
pub fn exposure_at(model: &ExposureModel, class: GroundClass, time_label: &str) -> Result<f64> {
    let f = model.factors(time_label)?;
    Ok(match class {
        GroundClass::Pedestrian => model.ped_base * f.tp,
        GroundClass::Vehicle => model.veh_base * f.tv,
        GroundClass::None => 0.0,
    })
}

/// Expected entity count per cell (density x cell area) with the cell class.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureGrid {
    pub spec: GridSpec2,
    counts: Vec<f64>,
    classes: Vec<GroundClass>,
}

impl ExposureGrid {
    #[inline]
    pub fn count(&self, i: usize, j: usize) -> f64 {
        self.counts[self.spec.idx(i, j)]
    }

    #[inline]
    pub fn class(&self, i: usize, j: usize) -> GroundClass {
        self.classes[self.spec.idx(i, j)]
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn classes(&self) -> &[GroundClass] {
        &self.classes
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// Optional per-cell base-density overrides (per m², pre-temporal-factor).
#[derive(Debug, Clone, Copy, Default)]
pub struct DensityOverrides<'a> {
    pub pedestrian: Option<&'a ScalarField2>,
    pub vehicle: Option<&'a ScalarField2>,
}

/// Expand ground classification into expected counts per cell at a time
/// label. Cell values are `density * cell area`; `none` cells are zero.
pub fn build_exposure_grid(
    ground: &GroundUseGrid,
    model: &ExposureModel,
    time_label: &str,
    overrides: DensityOverrides<'_>,
) -> Result<ExposureGrid> {
    model.validate()?;
    let f = *model.factors(time_label)?;
    for (name, raster) in [
        ("pedestrian", overrides.pedestrian),
        ("vehicle", overrides.vehicle),
    ] {
        if let Some(r) = raster {
            if r.spec != ground.spec {
                return Err(Error::Extent(format!(
                    "{name} density raster does not align with the ground grid"
                )));
            }
            if r.values().iter().any(|v| *v < 0.0) {
                return Err(Error::Config(format!("{name} density raster must be >= 0")));
            }
        }
    }

    let area = ground.spec.cell_area();
    let [nx, ny] = ground.spec.dims;
    let mut counts = Vec::with_capacity(ground.spec.len());
    for j in 0..ny {
        for i in 0..nx {
            let class = ground.class(i, j);
            let density = match class {
                GroundClass::Pedestrian => {
                    overrides.pedestrian.map_or(model.ped_base, |r| r.get(i, j)) * f.tp
                }
                GroundClass::Vehicle => {
                    overrides.vehicle.map_or(model.veh_base, |r| r.get(i, j)) * f.tv
                }
                GroundClass::None => 0.0,
            };
            counts.push(density * area);
        }
    }
    Ok(ExposureGrid {
        spec: ground.spec,
        counts,
        classes: ground.classes().to_vec(),
    })
}
