//! Impact-location probability models.
//!
//! Two parametric families describe where an unrecoverable failure at
//! altitude `h0` above a column hits the ground:
//!
//! * **Gaussian**: isotropic bivariate normal centered under the failure
//!   point with variance `alpha * h0^2`. Crashes cluster below the vehicle.
//! * **Rayleigh ring**: circularly symmetric density peaking on the ring of
//!   radius `Delta = beta * h0` with radial width `sigma = gamma * h0`,
//!   covering failures carrying horizontal momentum in an unknown heading.
//!
//! Cell-impact probabilities integrate the density over a `2*delta` square
//! with an adaptive midpoint rule. A precomputed [`ImpactKernel`] tabulates
//! these probabilities per (altitude, cell offset) so the terrain stage can
//! reuse one column's pattern everywhere, convolution-style.
//!
//! The ring density as defined does not integrate to one over the plane when
//! `Delta > 0`; its plane integral is the factor returned by
//! [`rayleigh_normalization`]. `RayleighMode::Unnormalized` keeps the raw
//! form (the default), `RayleighMode::Normalized` divides it out.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Nodes-per-axis ladder for the adaptive midpoint rule: 4x subdivision,
/// capped at 64x64 per cell.
const QUADRATURE_LEVELS: [usize; 4] = [1, 4, 16, 64];
/// Absolute convergence threshold between successive midpoint estimates.
const QUADRATURE_TOL: f64 = 1e-9;

/// Standard normal CDF.
pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianImpactParams {
    /// Dimensionless scaling constant: impact variance is `alpha * h0^2`.
    pub alpha: f64,
}

impl GaussianImpactParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::Config(format!(
                "gaussian alpha must be > 0, got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RayleighMode {
    /// Keep the ring density exactly as defined (plane integral = Z >= 1).
    #[default]
    Unnormalized,
    /// Divide by Z so the density integrates to one over the plane.
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayleighImpactParams {
    /// Ring displacement coefficient: `Delta = beta * h0`.
    pub beta: f64,
    /// Radial spread coefficient: `sigma = gamma * h0`.
    pub gamma: f64,
    #[serde(default)]
    pub mode: RayleighMode,
}

impl RayleighImpactParams {
    pub fn new(beta: f64, gamma: f64, mode: RayleighMode) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::Config(format!(
                "rayleigh beta must be >= 0, got {beta}"
            )));
        }
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(Error::Config(format!(
                "rayleigh gamma must be > 0, got {gamma}"
            )));
        }
        Ok(Self { beta, gamma, mode })
    }
}

/// Impact-location model selection carried through kernels and scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ImpactModel {
    Gaussian(GaussianImpactParams),
    Rayleigh(RayleighImpactParams),
}

impl ImpactModel {
    /// Probability density at ground point `p` for a failure above `p0` at
    /// altitude `h0`.
    pub fn density(&self, p: [f64; 2], p0: [f64; 2], h0: f64) -> Result<f64> {
        match self {
            ImpactModel::Gaussian(g) => gaussian_density(p, p0, h0, g),
            ImpactModel::Rayleigh(r) => rayleigh_density(p, p0, h0, r),
        }
    }

    /// Probability of impact inside the `2*delta` square centered at `p`.
    pub fn cell_prob(&self, p: [f64; 2], p0: [f64; 2], h0: f64, delta: f64) -> Result<f64> {
        match self {
            ImpactModel::Gaussian(g) => gaussian_cell_prob(p, p0, h0, g, delta),
            ImpactModel::Rayleigh(r) => rayleigh_cell_prob(p, p0, h0, r, delta),
        }
    }

    /// Plane integral of the density (1 except for the unnormalized ring).
    pub fn plane_mass(&self) -> f64 {
        match self {
            ImpactModel::Gaussian(_) => 1.0,
            ImpactModel::Rayleigh(r) => match r.mode {
                RayleighMode::Normalized => 1.0,
                RayleighMode::Unnormalized => rayleigh_normalization(r.beta, r.gamma),
            },
        }
    }
}

fn check_h0(h0: f64) -> Result<()> {
    if !h0.is_finite() || h0 <= 0.0 {
        return Err(Error::Domain(format!(
            "failure altitude h0 must be > 0, got {h0}"
        )));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::Domain(format!(
            "cell half side delta must be > 0, got {delta}"
        )));
    }
    Ok(())
}

#[inline]
fn gaussian_density_at(dx: f64, dy: f64, variance: f64) -> f64 {
    let d2 = dx * dx + dy * dy;
    (-d2 / (2.0 * variance)).exp() / (2.0 * std::f64::consts::PI * variance)
}

#[inline]
fn ring_density_at(dx: f64, dy: f64, displacement: f64, sigma2: f64) -> f64 {
    let r = (dx * dx + dy * dy).sqrt();
    let dev = r - displacement;
    (-dev * dev / (2.0 * sigma2)).exp() / (2.0 * std::f64::consts::PI * sigma2)
}

/// Isotropic bivariate normal impact density (per m²), variance `alpha*h0²`.
pub fn gaussian_density(
    p: [f64; 2],
    p0: [f64; 2],
    h0: f64,
    params: &GaussianImpactParams,
) -> Result<f64> {
    check_h0(h0)?;
    let variance = params.alpha * h0 * h0;
    Ok(gaussian_density_at(p[0] - p0[0], p[1] - p0[1], variance))
}

/// Ring impact density (per m²): `Delta = beta*h0`, `sigma = gamma*h0`.
pub fn rayleigh_density(
    p: [f64; 2],
    p0: [f64; 2],
    h0: f64,
    params: &RayleighImpactParams,
) -> Result<f64> {
    check_h0(h0)?;
    let displacement = params.beta * h0;
    let sigma = params.gamma * h0;
    let raw = ring_density_at(p[0] - p0[0], p[1] - p0[1], displacement, sigma * sigma);
    Ok(match params.mode {
        RayleighMode::Unnormalized => raw,
        RayleighMode::Normalized => raw / rayleigh_normalization(displacement, sigma),
    })
}

/// Plane integral of the raw ring density:
/// `Z = exp(-Delta²/(2 sigma²)) + (Delta/sigma) * sqrt(2 pi) * Phi(Delta/sigma)`.
///
/// Depends only on the ratio `Delta/sigma`; `Z = 1` when `Delta = 0` and
/// grows without bound as the ring moves out.
pub fn rayleigh_normalization(delta_disp: f64, sigma: f64) -> f64 {
    assert!(
        sigma > 0.0 && delta_disp >= 0.0,
        "sigma > 0 and Delta >= 0 required"
    );
    let z = delta_disp / sigma;
    (-z * z / 2.0).exp() + z * (2.0 * std::f64::consts::PI).sqrt() * normal_cdf(z)
}

/// Adaptive midpoint quadrature over the `2*delta` square centered at
/// `(cx, cy)`; subdivides 4x per step until successive estimates differ by
/// less than `QUADRATURE_TOL`, capped at 64x64 nodes.
fn midpoint_cell_integral(f: impl Fn(f64, f64) -> f64, cx: f64, cy: f64, delta: f64) -> f64 {
    let mut prev = f64::NAN;
    for &n in &QUADRATURE_LEVELS {
        let step = 2.0 * delta / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let x = cx - delta + (i as f64 + 0.5) * step;
            for j in 0..n {
                let y = cy - delta + (j as f64 + 0.5) * step;
                acc += f(x, y);
            }
        }
        let est = acc * step * step;
        if prev.is_finite() && (est - prev).abs() < QUADRATURE_TOL {
            return est;
        }
        prev = est;
    }
    prev
}

/// Gaussian cell-impact probability: density integrated over the square.
pub fn gaussian_cell_prob(
    p: [f64; 2],
    p0: [f64; 2],
    h0: f64,
    params: &GaussianImpactParams,
    delta: f64,
) -> Result<f64> {
    check_h0(h0)?;
    check_delta(delta)?;
    let variance = params.alpha * h0 * h0;
    Ok(midpoint_cell_integral(
        |x, y| gaussian_density_at(x - p0[0], y - p0[1], variance),
        p[0],
        p[1],
        delta,
    ))
}

/// Ring cell-impact probability. The normalized-mode value is exactly the
/// unnormalized value divided by Z.
pub fn rayleigh_cell_prob(
    p: [f64; 2],
    p0: [f64; 2],
    h0: f64,
    params: &RayleighImpactParams,
    delta: f64,
) -> Result<f64> {
    check_h0(h0)?;
    check_delta(delta)?;
    let displacement = params.beta * h0;
    let sigma = params.gamma * h0;
    let sigma2 = sigma * sigma;
    let raw = midpoint_cell_integral(
        |x, y| ring_density_at(x - p0[0], y - p0[1], displacement, sigma2),
        p[0],
        p[1],
        delta,
    );
    Ok(match params.mode {
        RayleighMode::Unnormalized => raw,
        RayleighMode::Normalized => raw / rayleigh_normalization(displacement, sigma),
    })
}

/// Precomputed per-column impact probabilities over a family of failure
/// altitudes: `prob(k, di, dj)` is the probability that a failure at
/// `altitudes[k]` above a column impacts the ground cell offset
/// `(di * spacing, dj * spacing)` from the column base.
///
/// Cell centers span `±half_extent` per axis (`2*half_cells + 1` cells);
/// probability mass falling outside the window is dropped, not renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactKernel {
    pub model: ImpactModel,
    pub half_extent_m: f64,
    pub delta_m: f64,
    pub spacing_m: f64,
    pub altitudes_m: Vec<f64>,
    half_cells: usize,
    /// Row-major (altitude, dy, dx), side = 2 * half_cells + 1.
    values: Vec<f64>,
}

impl ImpactKernel {
    /// Cells per side of a slice.
    pub fn side(&self) -> usize {
        2 * self.half_cells + 1
    }

    /// Signed cell-offset radius of the window.
    pub fn half_cells(&self) -> usize {
        self.half_cells
    }

    #[inline]
    pub fn prob(&self, slice: usize, di: isize, dj: isize) -> f64 {
        let side = self.side() as isize;
        let r = self.half_cells as isize;
        debug_assert!(di.abs() <= r && dj.abs() <= r);
        let idx = (slice as isize * side + (dj + r)) * side + (di + r);
        self.values[idx as usize]
    }

    pub fn slice(&self, slice: usize) -> &[f64] {
        let n = self.side() * self.side();
        &self.values[slice * n..(slice + 1) * n]
    }

    pub fn slice_sum(&self, slice: usize) -> f64 {
        self.slice(slice).iter().sum()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rebuild from raw parts (used when loading a cache file).
    pub fn from_parts(
        model: ImpactModel,
        half_extent_m: f64,
        delta_m: f64,
        spacing_m: f64,
        altitudes_m: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let half_cells = half_cells_for(half_extent_m, spacing_m)?;
        let side = 2 * half_cells + 1;
        if values.len() != side * side * altitudes_m.len() {
            return Err(Error::Config(format!(
                "kernel payload holds {} values, expected {}",
                values.len(),
                side * side * altitudes_m.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Config(format!(
                "kernel probabilities must be finite and >= 0, got {bad}"
            )));
        }
        Ok(Self {
            model,
            half_extent_m,
            delta_m,
            spacing_m,
            altitudes_m,
            half_cells,
            values,
        })
    }

    /// Index of the altitude slice nearest to `fall_height`; ties round up.
    pub fn nearest_slice(&self, fall_height: f64) -> usize {
        let alts = &self.altitudes_m;
        let i = alts.partition_point(|a| *a < fall_height);
        if i == 0 {
            return 0;
        }
        if i == alts.len() {
            return alts.len() - 1;
        }
        if fall_height - alts[i - 1] < alts[i] - fall_height {
            i - 1
        } else {
            i
        }
    }

    /// Plane integral of the underlying density (Z for the unnormalized ring).
    pub fn plane_mass(&self) -> f64 {
        self.model.plane_mass()
    }
}

fn half_cells_for(half_extent_m: f64, spacing_m: f64) -> Result<usize> {
    if spacing_m.is_nan() || spacing_m <= 0.0 || half_extent_m.is_nan() || half_extent_m < 0.0 {
        return Err(Error::Config(
            "kernel extent and spacing must be positive".into(),
        ));
    }
    let ratio = half_extent_m / spacing_m;
    let cells = ratio.round();
    if (ratio - cells).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "kernel half extent {half_extent_m} m is not a multiple of spacing {spacing_m} m"
        )));
    }
    Ok(cells as usize)
}

/// Precompute the impact kernel: `probs[k][dj][di] = cell_prob` at the cell
/// centered `(di*spacing, dj*spacing)` from the column base, for each
/// altitude. Deterministic regardless of parallelism.
pub fn build_kernel(
    model: &ImpactModel,
    half_extent_m: f64,
    altitudes_m: &[f64],
    delta_m: f64,
    spacing_m: f64,
) -> Result<ImpactKernel> {
    if altitudes_m.is_empty() {
        return Err(Error::Config("kernel altitude list is empty".into()));
    }
    if altitudes_m
        .windows(2)
        .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
    {
        return Err(Error::Config(
            "kernel altitudes must be strictly increasing".into(),
        ));
    }
    for &h in altitudes_m {
        check_h0(h).map_err(|_| Error::Config(format!("kernel altitudes must be > 0, got {h}")))?;
    }
    check_delta(delta_m).map_err(|_| Error::Config("kernel delta must be > 0".into()))?;
    let half_cells = half_cells_for(half_extent_m, spacing_m)?;
    let side = 2 * half_cells + 1;

    let values: Vec<f64> = altitudes_m
        .par_iter()
        .map(|&h0| {
            let mut slice = Vec::with_capacity(side * side);
            for dj in -(half_cells as isize)..=(half_cells as isize) {
                for di in -(half_cells as isize)..=(half_cells as isize) {
                    let p = [di as f64 * spacing_m, dj as f64 * spacing_m];
                    let v = model
                        .cell_prob(p, [0.0, 0.0], h0, delta_m)
                        .expect("validated kernel inputs");
                    slice.push(v);
                }
            }
            slice
        })
        .flatten()
        .collect();

    debug_assert!(values.iter().all(|v| v.is_finite() && *v >= 0.0));
    Ok(ImpactKernel {
        model: *model,
        half_extent_m,
        delta_m,
        spacing_m,
        altitudes_m: altitudes_m.to_vec(),
        half_cells,
        values,
    })
}
