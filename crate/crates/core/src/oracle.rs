//! Independent Monte Carlo sampler for impact locations.
//!
//! Sampling draws from a counter-based deterministic pseudo-random stream
//! keyed by (seed, stream id, index), so batches are byte-identical across
//! runs and parallelism degrees. The empirical cell frequencies give
//! statistical ground truth for the quadrature-built kernels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impact::{rayleigh_normalization, ImpactKernel, ImpactModel, RayleighMode};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Stateless counter-based generator: a strong 64-bit mixer applied to
/// (seed, stream, index). Any index range can be sampled independently.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
    stream: u64,
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    #[inline]
    pub fn u64_at(&self, index: u64) -> u64 {
        let mut z = self
            .seed
            .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(self.stream.wrapping_add(1)));
        z = mix64(z ^ mix64(index.wrapping_add(0x2545f4914f6cdd1d)));
        mix64(z.wrapping_add(index))
    }

    /// Uniform in the open interval (0, 1).
    #[inline]
    pub fn unit_open_at(&self, index: u64) -> f64 {
        ((self.u64_at(index) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

/// Reproducible batch of sampled ground impact points.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub model: ImpactModel,
    pub p0: [f64; 2],
    pub h0: f64,
    pub seed: u64,
    pub points: Vec<[f64; 2]>,
}

fn check_batch_inputs(n: usize, h0: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain("sample count must be >= 1".into()));
    }
    if !h0.is_finite() || h0 <= 0.0 {
        return Err(Error::Domain(format!("altitude h0 must be > 0, got {h0}")));
    }
    Ok(())
}

/// Draw i.i.d. impact points from the Gaussian model via Box-Muller over the
/// counter stream (two standard normals per point).
pub fn sample_gaussian(
    params: crate::impact::GaussianImpactParams,
    p0: [f64; 2],
    h0: f64,
    n: usize,
    seed: u64,
) -> Result<SampleBatch> {
    check_batch_inputs(n, h0)?;
    let sigma = (params.alpha * h0 * h0).sqrt();
    let rng = CounterRng::new(seed, 0x67);
    let points: Vec<[f64; 2]> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let u1 = rng.unit_open_at(2 * i);
            let u2 = rng.unit_open_at(2 * i + 1);
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (TWO_PI * u2).sin_cos();
            [p0[0] + sigma * r * c, p0[1] + sigma * r * s]
        })
        .collect();
    Ok(SampleBatch {
        model: ImpactModel::Gaussian(params),
        p0,
        h0,
        seed,
        points,
    })
}

/// Analytic CDF of the normalized radial density
/// `r exp(-(r-Delta)^2 / (2 sigma^2)) / (sigma^2 Z)`.
pub fn rayleigh_radial_cdf(r: f64, delta_disp: f64, sigma: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let z = rayleigh_normalization(delta_disp, sigma);
    let t0 = -delta_disp / sigma;
    let t1 = (r - delta_disp) / sigma;
    let phi = crate::impact::normal_cdf;
    let mass = delta_disp / sigma * TWO_PI.sqrt() * (phi(t1) - phi(t0))
        + ((-t0 * t0 / 2.0).exp() - (-t1 * t1 / 2.0).exp());
    (mass / z).clamp(0.0, 1.0)
}

/// Tabulated inverse of the radial CDF: uniform table plus linear
/// interpolation, accurate to well under 1e-6 in radius.
struct RadialInverse {
    rmax: f64,
    cdf: Vec<f64>,
}

impl RadialInverse {
    fn build(delta_disp: f64, sigma: f64) -> Self {
        let rmax = delta_disp + 9.0 * sigma;
        let n = 1 << 17;
        let cdf: Vec<f64> = (0..=n)
            .map(|i| rayleigh_radial_cdf(rmax * i as f64 / n as f64, delta_disp, sigma))
            .collect();
        Self { rmax, cdf }
    }

    fn invert(&self, u: f64) -> f64 {
        let n = self.cdf.len() - 1;
        let i = self.cdf.partition_point(|c| *c < u).clamp(1, n);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.rmax * ((i - 1) as f64 + frac) / n as f64
    }
}

/// Draw impact points from the ring model: uniform angle, radius by
/// numerical inverse CDF of the normalized radial density.
pub fn sample_rayleigh(
    params: crate::impact::RayleighImpactParams,
    p0: [f64; 2],
    h0: f64,
    n: usize,
    seed: u64,
) -> Result<SampleBatch> {
    check_batch_inputs(n, h0)?;
    let delta_disp = params.beta * h0;
    let sigma = params.gamma * h0;
    let table = RadialInverse::build(delta_disp, sigma);
    let radius_rng = CounterRng::new(seed, 0x72);
    let angle_rng = CounterRng::new(seed, 0x61);
    let points: Vec<[f64; 2]> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let r = table.invert(radius_rng.unit_open_at(i));
            let (s, c) = (TWO_PI * angle_rng.unit_open_at(i)).sin_cos();
            [p0[0] + r * c, p0[1] + r * s]
        })
        .collect();
    Ok(SampleBatch {
        model: ImpactModel::Rayleigh(params),
        p0,
        h0,
        seed,
        points,
    })
}

/// Fraction of batch points inside the `2*delta` square at `cell_center`,
/// with its binomial standard error.
pub fn empirical_cell_prob(batch: &SampleBatch, cell_center: [f64; 2], delta: f64) -> (f64, f64) {
    let n = batch.points.len();
    let hits = batch
        .points
        .iter()
        .filter(|p| {
            (p[0] - cell_center[0]).abs() <= delta && (p[1] - cell_center[1]).abs() <= delta
        })
        .count();
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Outcome for one compared kernel slice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceReport {
    pub altitude_m: f64,
    pub cells: usize,
    pub pooled_cells: usize,
    pub max_abs_z: f64,
    pub worst_cell: WorstCell,
    pub pooled_z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorstCell {
    pub di: isize,
    pub dj: isize,
    pub expected: f64,
    pub empirical: f64,
    pub standard_error: f64,
    pub z: f64,
}

/// Full kernel-validation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelReport {
    pub samples_per_slice: usize,
    pub seed: u64,
    pub z_correction: f64,
    pub slices: Vec<SliceReport>,
    pub pass: bool,
}

impl KernelReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Expected cells below this count are pooled into one aggregate bin.
const POOL_EXPECTED_COUNT: f64 = 10.0;
/// Pass line in binomial standard errors.
const Z_LIMIT: f64 = 3.0;

/// Compare kernel slice probabilities against Monte Carlo frequencies.
///
/// Each requested altitude must match a kernel slice. Sampling follows the
/// normalized law, so unnormalized ring kernels are compared after dividing
/// the quadrature values by Z (`z_correct` must be set for them). PASS means
/// every cell (and the pooled low-count bin) lies within 3 binomial standard
/// errors; low-expectation cells pool together.
pub fn compare_kernel(
    kernel: &ImpactKernel,
    altitudes: &[f64],
    n: usize,
    seed: u64,
    z_correct: bool,
) -> Result<KernelReport> {
    if n == 0 {
        return Err(Error::Domain("sample count must be >= 1".into()));
    }
    let z_correction = match kernel.model {
        ImpactModel::Rayleigh(p) if p.mode == RayleighMode::Unnormalized => {
            if !z_correct {
                return Err(Error::Config(
                    "unnormalized ring kernel needs the Z-correction enabled for \
                     Monte Carlo comparison"
                        .into(),
                ));
            }
            // Z depends only on the ratio Delta/sigma = beta/gamma.
            rayleigh_normalization(p.beta, p.gamma)
        }
        _ => 1.0,
    };

    let mut slices = Vec::with_capacity(altitudes.len());
    let mut all_pass = true;
    for &alt in altitudes {
        let slice_idx = kernel
            .altitudes_m
            .iter()
            .position(|a| (a - alt).abs() < 1e-9)
            .ok_or_else(|| Error::Config(format!("kernel has no altitude slice at {alt} m")))?;
        let batch = match kernel.model {
            ImpactModel::Gaussian(p) => sample_gaussian(p, [0.0, 0.0], alt, n, seed)?,
            ImpactModel::Rayleigh(p) => sample_rayleigh(p, [0.0, 0.0], alt, n, seed)?,
        };

        // Bin points onto the kernel lattice in one pass.
        let r = kernel.half_cells() as isize;
        let side = kernel.side();
        let spacing = kernel.spacing_m;
        let delta = kernel.delta_m;
        let mut hits = vec![0usize; side * side];
        for p in &batch.points {
            let ci = (p[0] / spacing).round();
            let cj = (p[1] / spacing).round();
            if ci.abs() > r as f64 || cj.abs() > r as f64 {
                continue;
            }
            // With 2*delta < spacing a point can sit between cells.
            if (p[0] - ci * spacing).abs() > delta || (p[1] - cj * spacing).abs() > delta {
                continue;
            }
            let (di, dj) = (ci as isize + r, cj as isize + r);
            hits[dj as usize * side + di as usize] += 1;
        }

        let mut max_abs_z = 0.0f64;
        let mut worst = WorstCell {
            di: 0,
            dj: 0,
            expected: 0.0,
            empirical: 0.0,
            standard_error: 0.0,
            z: 0.0,
        };
        let mut pooled_cells = 0usize;
        let (mut pooled_expected, mut pooled_hits) = (0.0f64, 0usize);
        for dj in -r..=r {
            for di in -r..=r {
                let expected = kernel.prob(slice_idx, di, dj) / z_correction;
                let h = hits[(dj + r) as usize * side + (di + r) as usize];
                if expected * (n as f64) < POOL_EXPECTED_COUNT {
                    pooled_cells += 1;
                    pooled_expected += expected;
                    pooled_hits += h;
                    continue;
                }
                let se = (expected * (1.0 - expected) / n as f64).sqrt();
                let z = (h as f64 / n as f64 - expected).abs() / se;
                if z > max_abs_z {
                    max_abs_z = z;
                    worst = WorstCell {
                        di,
                        dj,
                        expected,
                        empirical: h as f64 / n as f64,
                        standard_error: se,
                        z,
                    };
                }
            }
        }
        let pooled_z = if pooled_cells > 0 && pooled_expected > 0.0 {
            let se = (pooled_expected * (1.0 - pooled_expected) / n as f64).sqrt();
            (pooled_hits as f64 / n as f64 - pooled_expected).abs() / se
        } else {
            0.0
        };
        let pass = max_abs_z <= Z_LIMIT && pooled_z <= Z_LIMIT;
        all_pass &= pass;
        slices.push(SliceReport {
            altitude_m: alt,
            cells: side * side - pooled_cells,
            pooled_cells,
            max_abs_z,
            worst_cell: worst,
            pooled_z,
            pass,
        });
    }
    Ok(KernelReport {
        samples_per_slice: n,
        seed,
        z_correction,
        slices,
        pass: all_pass,
    })
}
