//! Per-event probability chain excluding geometry: failure rate, recovery,
//! impact kinetic energy, and harm models for pedestrians and vehicles.
//!
//! Kinetic energy comes from vertical free fall against quadratic drag with
//! zero initial vertical velocity; horizontal cruise energy is not added
//! unless [`HazardChain::add_cruise_energy`] is set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Air density at sea level, kg/m³.
pub const AIR_DENSITY: f64 = 1.225;
/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.8;

/// Physical parameters of the vehicle relevant to descent and impact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavSpec {
    pub mass_kg: f64,
    pub cross_section_m2: f64,
    pub drag_coeff: f64,
    /// Characteristic impact diameter in centimeters.
    pub diameter_cm: f64,
    pub cruise_speed_ms: f64,
}

impl UavSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mass_kg", self.mass_kg),
            ("cross_section_m2", self.cross_section_m2),
            ("drag_coeff", self.drag_coeff),
            ("diameter_cm", self.diameter_cm),
            ("cruise_speed_ms", self.cruise_speed_ms),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!("uav.{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Combined drag constant `rho * S * C_D`.
    fn drag_k(&self) -> f64 {
        AIR_DENSITY * self.cross_section_m2 * self.drag_coeff
    }
}

/// Catastrophic failure rate per flight hour, with a scenario label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureModel {
    pub lambda_per_hour: f64,
    pub label: String,
}

impl FailureModel {
    pub fn new(lambda_per_hour: f64, label: impl Into<String>) -> Result<Self> {
        if !lambda_per_hour.is_finite() || lambda_per_hour <= 0.0 || lambda_per_hour >= 1.0 {
            return Err(Error::Config(format!(
                "failure rate must lie in (0, 1) per hour, got {lambda_per_hour}"
            )));
        }
        Ok(Self {
            lambda_per_hour,
            label: label.into(),
        })
    }
}

/// Named failure-rate presets.
pub mod failure_presets {
    use super::FailureModel;

    /// Flat catastrophic rates used for sensitivity sweeps, per flight hour.
    pub const CATASTROPHIC_RATES: [f64; 4] = [1e-5, 5e-6, 2e-6, 1e-6];

    /// Per-subsystem FIT rows (failures per 10^6 flight hours) for a
    /// commercial multi-rotor platform; the rows sum to 30.23.
    pub const SUBSYSTEM_FIT: [(&str, f64); 6] = [
        ("ground_control", 2.00),
        ("mainframe", 2.77),
        ("power_plant", 9.94),
        ("navigation", 9.41),
        ("electronic", 5.01),
        ("payload", 1.10),
    ];

    pub fn catastrophic(lambda: f64) -> FailureModel {
        FailureModel::new(lambda, format!("catastrophic-{lambda:e}"))
            .expect("preset rates are valid")
    }

    /// Subsystem FIT row as a failure model (FIT / 10^6 per hour).
    pub fn subsystem(name: &str) -> Option<FailureModel> {
        SUBSYSTEM_FIT
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, fit)| FailureModel::new(fit / 1e6, *n).expect("FIT rows are valid"))
    }
}

/// Recovery model: without a parachute the descent is always unrecoverable;
/// with one, success follows a sigmoid of deployment altitude saturating at
/// `max_success`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryModel {
    pub parachute: bool,
    pub max_success: f64,
    pub steepness: f64,
    pub midpoint_m: f64,
}

impl RecoveryModel {
    pub fn without_parachute() -> Self {
        Self {
            parachute: false,
            ..Self::with_parachute()
        }
    }

    pub fn with_parachute() -> Self {
        Self {
            parachute: true,
            max_success: 0.5,
            steepness: 1.35,
            midpoint_m: 45.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.max_success) {
            return Err(Error::Config(format!(
                "recovery max_success must lie in [0, 1], got {}",
                self.max_success
            )));
        }
        if self.midpoint_m.is_nan()
            || self.midpoint_m <= 0.0
            || self.steepness.is_nan()
            || self.steepness <= 0.0
        {
            return Err(Error::Config(
                "recovery midpoint and steepness must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Probability that recovery fails and the vehicle enters a crash descent.
pub fn p_unrecoverable(rec: &RecoveryModel, h0: f64) -> Result<f64> {
    if !h0.is_finite() || h0 <= 0.0 {
        return Err(Error::Domain(format!("altitude h0 must be > 0, got {h0}")));
    }
    if !rec.parachute {
        return Ok(1.0);
    }
    Ok(1.0 - rec.max_success / (1.0 + rec.steepness * (rec.midpoint_m - h0).exp()))
}

/// Impact velocity after falling `h` meters against quadratic drag.
pub fn terminal_velocity(uav: &UavSpec, h: f64) -> Result<f64> {
    if !h.is_finite() || h < 0.0 {
        return Err(Error::Domain(format!("fall height must be >= 0, got {h}")));
    }
    let k = uav.drag_k();
    let cap = 2.0 * uav.mass_kg * GRAVITY / k;
    Ok((cap * (1.0 - (-k * h / uav.mass_kg).exp())).sqrt())
}

/// Kinetic energy at ground impact after falling `h` meters, in joules.
pub fn impact_kinetic_energy(uav: &UavSpec, h: f64) -> Result<f64> {
    if !h.is_finite() || h < 0.0 {
        return Err(Error::Domain(format!("fall height must be >= 0, got {h}")));
    }
    let k = uav.drag_k();
    Ok(uav.mass_kg * uav.mass_kg * GRAVITY / k * (1.0 - (-k * h / uav.mass_kg).exp()))
}

/// Struck-body parameters for the blunt criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyModel {
    pub mass_kg: f64,
    /// Body wall thickness coefficient.
    pub wall_coeff: f64,
}

impl BodyModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass_kg > 0.0 && self.wall_coeff > 0.0) {
            return Err(Error::Config(
                "body mass and wall coefficient must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Blunt criterion: `BC = ln(E_i / (k * D * M^(2/3)))` with `D` in cm and
/// `M` in kg.
pub fn blunt_criterion(energy_j: f64, body: &BodyModel, diameter_cm: f64) -> Result<f64> {
    if energy_j.is_nan() || energy_j <= 0.0 {
        return Err(Error::Domain(format!(
            "impact energy must be > 0 J, got {energy_j}"
        )));
    }
    let denom = body.wall_coeff * diameter_cm * body.mass_kg.powf(2.0 / 3.0);
    Ok((energy_j / denom).ln())
}

/// Numerically stable standard logistic `1 / (1 + exp(-x))`.
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let t = x.exp();
        t / (1.0 + t)
    }
}

/// Probability of an AIS level 3 (serious) injury given a blunt-criterion
/// value. Does not overflow anywhere on the real line.
pub fn p_ais3(bc: f64) -> f64 {
    logistic(38.50 * bc - 17.76)
}

/// Fatality probability as a logistic curve in impact energy, with `e0_j`
/// the 50% energy and `k_per_j` the slope.
pub fn p_fatality_shelley(energy_j: f64, e0_j: f64, k_per_j: f64) -> f64 {
    logistic(k_per_j * (energy_j - e0_j))
}

/// Sheltering-aware fatality probability. `alpha_j` is the energy for 50%
/// fatality at sheltering 0.5, `beta_j` the fatality-threshold energy as
/// sheltering approaches zero, `sheltering` in (0, 1]. Requires
/// `alpha_j >= beta_j`; below that the curve leaves [0, 1].
pub fn p_fatality_primatesta(
    energy_j: f64,
    alpha_j: f64,
    beta_j: f64,
    sheltering: f64,
) -> Result<f64> {
    if sheltering.is_nan() || sheltering <= 0.0 || sheltering > 1.0 {
        return Err(Error::Domain(format!(
            "sheltering must lie in (0, 1], got {sheltering}"
        )));
    }
    if !(energy_j > 0.0 && alpha_j > 0.0 && beta_j > 0.0) {
        return Err(Error::Domain("energies must be > 0".into()));
    }
    if alpha_j < beta_j {
        return Err(Error::Domain(format!(
            "50% fatality energy ({alpha_j} J) must not undercut the fatality threshold \
             energy ({beta_j} J)"
        )));
    }
    let exponent = 1.0 / (4.0 * sheltering);
    let pow = (beta_j / energy_j).powf(exponent);
    let k = pow.min(1.0);
    let denom = 1.0 - 2.0 * k + (alpha_j / beta_j).sqrt() * pow;
    if !denom.is_finite() || denom <= 0.0 {
        return Err(Error::Evaluation(format!(
            "sheltered fatality denominator is {denom} (alpha {alpha_j}, beta {beta_j}, \
             sheltering {sheltering}, energy {energy_j})"
        )));
    }
    Ok((1.0 - k) / denom)
}

/// Probability of medium-level windshield damage given impact energy in
/// **kilojoules**. Inputs above 10^3 kJ are rejected as probable J/kJ
/// confusion.
pub fn p_vehicle_medium_damage(energy_kj: f64) -> Result<f64> {
    windshield_damage(energy_kj, 6.0, 5.0, 0.5)
}

fn windshield_damage(
    energy_kj: f64,
    offset: f64,
    slope_per_kj: f64,
    floor_coeff: f64,
) -> Result<f64> {
    if energy_kj.is_nan() || energy_kj < 0.0 {
        return Err(Error::Domain(format!(
            "impact energy must be >= 0 kJ, got {energy_kj}"
        )));
    }
    if energy_kj > 1e3 {
        return Err(Error::Domain(format!(
            "impact energy {energy_kj} kJ exceeds 10^3 kJ; probable J/kJ unit confusion"
        )));
    }
    Ok(1.0 / (1.0 + floor_coeff * (offset - slope_per_kj * energy_kj).exp()))
}

/// Harm model selection per entity class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HarmModel {
    /// Blunt criterion composed with the AIS-3 logistic (pedestrian default).
    BcAis3 { body: BodyModel },
    /// Energy-logistic fatality curve.
    ShelleyFatality { e0_j: f64, k_per_j: f64 },
    /// Sheltering-aware fatality model.
    PrimatestaFatality {
        alpha_j: f64,
        beta_j: f64,
        sheltering: f64,
    },
    /// Windshield medium-damage sigmoid (vehicle default). Energy in kJ.
    VehicleWindshield {
        offset: f64,
        slope_per_kj: f64,
        floor_coeff: f64,
    },
}

impl HarmModel {
    pub fn default_pedestrian() -> Self {
        HarmModel::BcAis3 {
            body: BodyModel {
                mass_kg: 70.0,
                wall_coeff: 0.652,
            },
        }
    }

    pub fn default_vehicle() -> Self {
        HarmModel::VehicleWindshield {
            offset: 6.0,
            slope_per_kj: 5.0,
            floor_coeff: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HarmModel::BcAis3 { body } => body.validate(),
            HarmModel::ShelleyFatality { e0_j, k_per_j } => {
                if !(*e0_j > 0.0 && *k_per_j > 0.0) {
                    return Err(Error::Config(
                        "fatality logistic parameters must be > 0".into(),
                    ));
                }
                Ok(())
            }
            HarmModel::PrimatestaFatality {
                alpha_j,
                beta_j,
                sheltering,
            } => {
                if !(*alpha_j > 0.0 && *beta_j > 0.0) {
                    return Err(Error::Config("fatality energies must be > 0".into()));
                }
                if alpha_j < beta_j {
                    return Err(Error::Config(
                        "50% fatality energy must not undercut the threshold energy".into(),
                    ));
                }
                if !(*sheltering > 0.0 && *sheltering <= 1.0) {
                    return Err(Error::Config("sheltering must lie in (0, 1]".into()));
                }
                Ok(())
            }
            HarmModel::VehicleWindshield {
                offset,
                slope_per_kj,
                floor_coeff,
            } => {
                if !(offset.is_finite() && *slope_per_kj > 0.0 && *floor_coeff > 0.0) {
                    return Err(Error::Config(
                        "windshield parameters must be positive".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Harm probability given impact energy in joules. The windshield model
    /// converts to kJ internally.
    pub fn probability(&self, energy_j: f64, uav: &UavSpec) -> Result<f64> {
        match self {
            HarmModel::BcAis3 { body } => {
                Ok(p_ais3(blunt_criterion(energy_j, body, uav.diameter_cm)?))
            }
            HarmModel::ShelleyFatality { e0_j, k_per_j } => {
                Ok(p_fatality_shelley(energy_j, *e0_j, *k_per_j))
            }
            HarmModel::PrimatestaFatality {
                alpha_j,
                beta_j,
                sheltering,
            } => p_fatality_primatesta(energy_j, *alpha_j, *beta_j, *sheltering),
            HarmModel::VehicleWindshield {
                offset,
                slope_per_kj,
                floor_coeff,
            } => windshield_damage(energy_j / 1000.0, *offset, *slope_per_kj, *floor_coeff),
        }
    }
}

/// Entity-of-value class exposed to crash harm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EovClass {
    Pedestrian,
    Vehicle,
}

/// Per-class harm model selection; a missing entry is a configuration error
/// when that class is evaluated.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HarmConfig {
    pub pedestrian: Option<HarmModel>,
    pub vehicle: Option<HarmModel>,
}

impl HarmConfig {
    pub fn defaults() -> Self {
        Self {
            pedestrian: Some(HarmModel::default_pedestrian()),
            vehicle: Some(HarmModel::default_vehicle()),
        }
    }
}

/// Harm probability dispatch over the entity class.
pub fn p_harm(eov: EovClass, energy_j: f64, config: &HarmConfig, uav: &UavSpec) -> Result<f64> {
    let model = match eov {
        EovClass::Pedestrian => config.pedestrian.as_ref(),
        EovClass::Vehicle => config.vehicle.as_ref(),
    }
    .ok_or_else(|| {
        Error::Config(format!(
            "no harm model configured for {} targets",
            match eov {
                EovClass::Pedestrian => "pedestrian",
                EovClass::Vehicle => "vehicle",
            }
        ))
    })?;
    model.probability(energy_j, uav)
}

/// Everything about a crash event except where it lands: failure rate,
/// recovery, vehicle physics, and per-class harm models. Evaluation is a
/// pure function of (chain, fall height, class).
#[derive(Debug, Clone, PartialEq)]
pub struct HazardChain {
    pub failure: FailureModel,
    pub recovery: RecoveryModel,
    pub uav: UavSpec,
    pub harm: HarmConfig,
    /// Add horizontal cruise kinetic energy to the impact energy.
    pub add_cruise_energy: bool,
}

impl HazardChain {
    pub fn validate(&self) -> Result<()> {
        self.uav.validate()?;
        self.recovery.validate()?;
        if let Some(m) = &self.harm.pedestrian {
            m.validate()?;
        }
        if let Some(m) = &self.harm.vehicle {
            m.validate()?;
        }
        Ok(())
    }

    /// Impact energy in joules for a fall of `fall_height` meters.
    pub fn impact_energy(&self, fall_height: f64) -> Result<f64> {
        let mut e = impact_kinetic_energy(&self.uav, fall_height)?;
        if self.add_cruise_energy {
            e += 0.5 * self.uav.mass_kg * self.uav.cruise_speed_ms * self.uav.cruise_speed_ms;
        }
        Ok(e)
    }

    /// `lambda * P_unrecoverable(h0)`: per-hour rate of unrecovered failures.
    pub fn rate_factor(&self, h0: f64) -> Result<f64> {
        Ok(self.failure.lambda_per_hour * p_unrecoverable(&self.recovery, h0)?)
    }

    /// Harm probability for the class at the given fall height.
    pub fn harm_probability(&self, eov: EovClass, fall_height: f64) -> Result<f64> {
        p_harm(eov, self.impact_energy(fall_height)?, &self.harm, &self.uav)
    }
}
