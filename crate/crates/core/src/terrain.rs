//! Assembly of the cumulative risk volume and its derived products.
//!
//! The cumulative risk at a free air voxel is the maximum over ground cells
//! within the kernel footprint of
//!
//! ```text
//! lambda * P_unrecoverable * P_impact(cell) * P_harm * N(cell)
//! ```
//!
//! in expected harm events per flight hour, where `N` is the expected entity
//! count in the cell. Thresholding the volume yields no-fly terrains;
//! reducing a terrain per column yields the minimum clearance altitude.
//!
//! All factor products run through one canonical expression so the gather,
//! scatter, and direct-evaluation routes produce bit-identical volumes.
//! The whole chain is evaluated at the kernel-slice altitude nearest to the
//! fall height (voxel altitude minus impact-cell ground elevation; flat
//! ground makes this the voxel altitude itself).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exposure::ExposureGrid;
use crate::grid::{GridSpec2, GridSpec3, GroundClass, OccupancyMask, ScalarField2};
use crate::hazard::{EovClass, HazardChain};
use crate::impact::ImpactKernel;

/// Marker stored in blocked voxels of a risk volume.
pub const BLOCKED_SENTINEL: f64 = -1.0;

/// Cumulative third-party risk per free air voxel; blocked voxels carry
/// [`BLOCKED_SENTINEL`].
#[derive(Debug, Clone, PartialEq)]
pub struct RiskVolume {
    pub spec: GridSpec3,
    values: Vec<f64>,
}

impl RiskVolume {
    pub fn from_values(spec: GridSpec3, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Config(format!(
                "risk volume holds {} values, grid has {} voxels",
                values.len(),
                spec.len()
            )));
        }
        if values
            .iter()
            .any(|v| !v.is_finite() || (*v < 0.0 && *v != BLOCKED_SENTINEL))
        {
            return Err(Error::Config(
                "risk values must be finite and >= 0 (or the blocked sentinel)".into(),
            ));
        }
        Ok(Self { spec, values })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.spec.idx(i, j, k)]
    }

    #[inline]
    pub fn is_blocked(&self, i: usize, j: usize, k: usize) -> bool {
        self.get(i, j, k) == BLOCKED_SENTINEL
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest risk over free voxels (zero for an all-blocked volume).
    pub fn max_risk(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .filter(|v| *v != BLOCKED_SENTINEL)
            .fold(0.0, f64::max)
    }
}

/// Provenance tag of an exclusion terrain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerrainKind {
    Risk,
    Acoustic,
    Fused,
}

impl TerrainKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TerrainKind::Risk => "risk",
            TerrainKind::Acoustic => "acoustic",
            TerrainKind::Fused => "fused",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "risk" => Some(TerrainKind::Risk),
            "acoustic" => Some(TerrainKind::Acoustic),
            "fused" => Some(TerrainKind::Fused),
            _ => None,
        }
    }
}

/// Boolean exclusion volume (true = no-fly) with provenance metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct NoFlyTerrain {
    pub spec: GridSpec3,
    excluded: Vec<bool>,
    pub threshold: Option<f64>,
    pub kind: TerrainKind,
    pub scenario_hash: Option<String>,
    /// Input descriptions for fused terrains.
    pub sources: Vec<String>,
}

impl NoFlyTerrain {
    pub fn from_parts(
        spec: GridSpec3,
        excluded: Vec<bool>,
        threshold: Option<f64>,
        kind: TerrainKind,
    ) -> Result<Self> {
        if excluded.len() != spec.len() {
            return Err(Error::Config(format!(
                "terrain holds {} flags, grid has {} voxels",
                excluded.len(),
                spec.len()
            )));
        }
        Ok(Self {
            spec,
            excluded,
            threshold,
            kind,
            scenario_hash: None,
            sources: Vec::new(),
        })
    }

    #[inline]
    pub fn is_excluded(&self, i: usize, j: usize, k: usize) -> bool {
        self.excluded[self.spec.idx(i, j, k)]
    }

    pub fn excluded(&self) -> &[bool] {
        &self.excluded
    }

    pub fn excluded_count(&self) -> usize {
        self.excluded.iter().filter(|b| **b).count()
    }
}

/// Per-column clearance state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColumnClearance {
    /// No excluded voxel anywhere in the column.
    Open,
    /// Lowest altitude (m) such that the column is free from there to the
    /// ceiling.
    ClearAbove(f64),
    /// Excluded up to and including the ceiling level.
    Closed,
}

impl ColumnClearance {
    /// Numeric clearance: 0 for open columns, `None` for closed ones.
    pub fn clearance_m(self) -> Option<f64> {
        match self {
            ColumnClearance::Open => Some(0.0),
            ColumnClearance::ClearAbove(h) => Some(h),
            ColumnClearance::Closed => None,
        }
    }

    pub fn status(self) -> &'static str {
        match self {
            ColumnClearance::Open => "open",
            ColumnClearance::ClearAbove(_) => "clear",
            ColumnClearance::Closed => "closed",
        }
    }
}

/// 2D reduction of a terrain: minimum clearance altitude per column.
#[derive(Debug, Clone, PartialEq)]
pub struct ClearanceField {
    pub spec: GridSpec2,
    pub ceiling_m: f64,
    values: Vec<ColumnClearance>,
}

impl ClearanceField {
    #[inline]
    pub fn column(&self, i: usize, j: usize) -> ColumnClearance {
        self.values[self.spec.idx(i, j)]
    }

    pub fn columns(&self) -> &[ColumnClearance] {
        &self.values
    }
}

/// Individual risk contribution: expected count times the per-event
/// probability chain. Linear in the exposure.
#[inline]
pub fn individual_risk(expected_count: f64, p_chain: f64) -> f64 {
    debug_assert!(expected_count >= 0.0 && (0.0..=1.0).contains(&p_chain.min(1.0)));
    p_chain * expected_count
}

/// Canonical factor product shared by every evaluation route; the grouping
/// is fixed so routes agree bitwise.
#[inline]
fn pair_product(rate: f64, p_g: f64, p_h: f64, n: f64) -> f64 {
    individual_risk(n, (rate * p_g) * p_h)
}

/// Per-kernel-slice chain factors.
struct SliceFactors {
    rate: Vec<f64>,
    ph_ped: Vec<f64>,
    ph_veh: Vec<f64>,
}

fn slice_factors(kernel: &ImpactKernel, chain: &HazardChain) -> Result<SliceFactors> {
    chain.validate()?;
    let n = kernel.altitudes_m.len();
    let mut rate = Vec::with_capacity(n);
    let mut ph_ped = Vec::with_capacity(n);
    let mut ph_veh = Vec::with_capacity(n);
    for &h in &kernel.altitudes_m {
        rate.push(chain.rate_factor(h)?);
        ph_ped.push(chain.harm_probability(EovClass::Pedestrian, h)?);
        ph_veh.push(chain.harm_probability(EovClass::Vehicle, h)?);
    }
    Ok(SliceFactors {
        rate,
        ph_ped,
        ph_veh,
    })
}

fn check_alignment(
    kernel: &ImpactKernel,
    exposure: &ExposureGrid,
    occupancy: &OccupancyMask,
    elevation: Option<&ScalarField2>,
) -> Result<()> {
    let spec = occupancy.spec;
    if exposure.spec != spec.horizontal() {
        return Err(Error::Extent(
            "exposure grid does not align with the voxel grid".into(),
        ));
    }
    if let Some(e) = elevation {
        if e.spec != spec.horizontal() {
            return Err(Error::Extent(
                "elevation raster does not align with the voxel grid".into(),
            ));
        }
    }
    if kernel.spacing_m != spec.spacing[0] || kernel.spacing_m != spec.spacing[1] {
        return Err(Error::Config(format!(
            "kernel spacing {} m does not match grid spacing {} x {} m",
            kernel.spacing_m, spec.spacing[0], spec.spacing[1]
        )));
    }
    if (2.0 * kernel.delta_m - kernel.spacing_m).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "kernel cells (2*delta = {} m) must tile the {} m ground lattice",
            2.0 * kernel.delta_m,
            kernel.spacing_m
        )));
    }
    Ok(())
}

#[inline]
fn ph_for(factors: &SliceFactors, slice: usize, class: GroundClass) -> f64 {
    match class {
        GroundClass::Pedestrian => factors.ph_ped[slice],
        GroundClass::Vehicle => factors.ph_veh[slice],
        GroundClass::None => 0.0,
    }
}

/// Cumulative risk volume, gather form: each free voxel takes the maximum
/// contribution over ground cells inside the kernel footprint. Parallel over
/// altitude slices; the max-reduction is order-independent, so results are
/// bit-identical for any parallelism degree.
pub fn cumulative_risk_volume(
    kernel: &ImpactKernel,
    chain: &HazardChain,
    exposure: &ExposureGrid,
    occupancy: &OccupancyMask,
    elevation: Option<&ScalarField2>,
) -> Result<RiskVolume> {
    check_alignment(kernel, exposure, occupancy, elevation)?;
    let factors = slice_factors(kernel, chain)?;
    let spec = occupancy.spec;
    let [nx, ny, _nz] = spec.dims;
    let r = kernel.half_cells() as isize;
    let counts = exposure.counts();
    let classes = exposure.classes();
    let blocked = occupancy.blocked();
    let elev = elevation.map(|e| e.values());

    let mut values = vec![0.0f64; spec.len()];
    values
        .par_chunks_mut(nx * ny)
        .enumerate()
        .for_each(|(k, level)| {
            let z = spec.level_altitude(k);
            // Flat ground lets the slice lookup hoist out of the cell loop.
            let flat_slice = if elev.is_none() && z > 0.0 {
                Some(kernel.nearest_slice(z))
            } else {
                None
            };
            for j in 0..ny {
                for i in 0..nx {
                    let cell2 = j * nx + i;
                    if blocked[(k * ny + j) * nx + i] {
                        level[cell2] = BLOCKED_SENTINEL;
                        continue;
                    }
                    let mut best = 0.0f64;
                    for dj in -r..=r {
                        let jj = j as isize + dj;
                        if jj < 0 || jj >= ny as isize {
                            continue;
                        }
                        let row = jj as usize * nx;
                        for di in -r..=r {
                            let ii = i as isize + di;
                            if ii < 0 || ii >= nx as isize {
                                continue;
                            }
                            let g = row + ii as usize;
                            let n = counts[g];
                            if n <= 0.0 {
                                continue;
                            }
                            let slice = match (flat_slice, &elev) {
                                (Some(s), _) => s,
                                (None, Some(e)) => {
                                    let fall = z - e[g];
                                    if fall <= 0.0 {
                                        continue;
                                    }
                                    kernel.nearest_slice(fall)
                                }
                                (None, None) => continue, // z <= 0, flat
                            };
                            let v = pair_product(
                                factors.rate[slice],
                                kernel.prob(slice, di, dj),
                                ph_for(&factors, slice, classes[g]),
                                n,
                            );
                            if v > best {
                                best = v;
                            }
                        }
                    }
                    level[cell2] = best;
                }
            }
        });
    Ok(RiskVolume { spec, values })
}

/// Cumulative risk volume, scatter form: every exposed ground cell scatters
/// its contribution into the air voxels that can reach it. Sequential
/// reference implementation; agrees with the gather form exactly.
pub fn scatter_risk_volume(
    kernel: &ImpactKernel,
    chain: &HazardChain,
    exposure: &ExposureGrid,
    occupancy: &OccupancyMask,
    elevation: Option<&ScalarField2>,
) -> Result<RiskVolume> {
    check_alignment(kernel, exposure, occupancy, elevation)?;
    let factors = slice_factors(kernel, chain)?;
    let spec = occupancy.spec;
    let [nx, ny, nz] = spec.dims;
    let r = kernel.half_cells() as isize;
    let counts = exposure.counts();
    let classes = exposure.classes();
    let elev = elevation.map(|e| e.values());

    let mut values = vec![0.0f64; spec.len()];
    for (idx, v) in values.iter_mut().enumerate() {
        if occupancy.blocked()[idx] {
            *v = BLOCKED_SENTINEL;
        }
    }
    for gj in 0..ny {
        for gi in 0..nx {
            let g = gj * nx + gi;
            let n = counts[g];
            if n <= 0.0 {
                continue;
            }
            let class = classes[g];
            let ground = elev.map_or(0.0, |e| e[g]);
            for k in 0..nz {
                let fall = spec.level_altitude(k) - ground;
                if fall <= 0.0 {
                    continue;
                }
                let slice = kernel.nearest_slice(fall);
                for dj in -r..=r {
                    let vj = gj as isize - dj;
                    if vj < 0 || vj >= ny as isize {
                        continue;
                    }
                    for di in -r..=r {
                        let vi = gi as isize - di;
                        if vi < 0 || vi >= nx as isize {
                            continue;
                        }
                        let idx = (k * ny + vj as usize) * nx + vi as usize;
                        if values[idx] == BLOCKED_SENTINEL {
                            continue;
                        }
                        let v = pair_product(
                            factors.rate[slice],
                            kernel.prob(slice, di, dj),
                            ph_for(&factors, slice, class),
                            n,
                        );
                        if v > values[idx] {
                            values[idx] = v;
                        }
                    }
                }
            }
        }
    }
    Ok(RiskVolume { spec, values })
}

/// Brute-force evaluation: a plain double loop over (voxel, ground cell)
/// pairs that recomputes every cell-impact probability by quadrature instead
/// of reading the kernel table. Oracle for kernel reuse; slow.
pub fn direct_risk_volume(
    kernel: &ImpactKernel,
    chain: &HazardChain,
    exposure: &ExposureGrid,
    occupancy: &OccupancyMask,
    elevation: Option<&ScalarField2>,
) -> Result<RiskVolume> {
    check_alignment(kernel, exposure, occupancy, elevation)?;
    let factors = slice_factors(kernel, chain)?;
    let spec = occupancy.spec;
    let [nx, ny, nz] = spec.dims;
    let r = kernel.half_cells() as isize;
    let elev = elevation.map(|e| e.values());

    let mut values = vec![0.0f64; spec.len()];
    for k in 0..nz {
        let z = spec.level_altitude(k);
        for j in 0..ny {
            for i in 0..nx {
                let idx = (k * ny + j) * nx + i;
                if occupancy.blocked()[idx] {
                    values[idx] = BLOCKED_SENTINEL;
                    continue;
                }
                let mut best = 0.0f64;
                for dj in -r..=r {
                    let jj = j as isize + dj;
                    if jj < 0 || jj >= ny as isize {
                        continue;
                    }
                    for di in -r..=r {
                        let ii = i as isize + di;
                        if ii < 0 || ii >= nx as isize {
                            continue;
                        }
                        let g = jj as usize * nx + ii as usize;
                        let n = exposure.counts()[g];
                        if n <= 0.0 {
                            continue;
                        }
                        let fall = z - elev.map_or(0.0, |e| e[g]);
                        if fall <= 0.0 {
                            continue;
                        }
                        let slice = kernel.nearest_slice(fall);
                        let p_g = kernel
                            .model
                            .cell_prob(
                                [di as f64 * kernel.spacing_m, dj as f64 * kernel.spacing_m],
                                [0.0, 0.0],
                                kernel.altitudes_m[slice],
                                kernel.delta_m,
                            )
                            .expect("kernel inputs were validated");
                        let v = pair_product(
                            factors.rate[slice],
                            p_g,
                            ph_for(&factors, slice, exposure.classes()[g]),
                            n,
                        );
                        if v > best {
                            best = v;
                        }
                    }
                }
                values[idx] = best;
            }
        }
    }
    Ok(RiskVolume { spec, values })
}

/// Threshold a risk volume into a no-fly terrain: excluded voxels are the
/// blocked set plus every voxel whose risk exceeds the threshold.
pub fn threshold_terrain(vol: &RiskVolume, threshold: f64) -> Result<NoFlyTerrain> {
    if !threshold.is_finite() || threshold <= 0.0 {
        return Err(Error::Domain(format!(
            "risk threshold must be > 0, got {threshold}"
        )));
    }
    let excluded = vol
        .values
        .iter()
        .map(|&v| v == BLOCKED_SENTINEL || v > threshold)
        .collect();
    NoFlyTerrain::from_parts(vol.spec, excluded, Some(threshold), TerrainKind::Risk)
}

/// Minimum clearance altitude per column: the lowest altitude from which
/// every voxel up to the ceiling is flyable. Holes below the highest
/// excluded voxel do not count; risk columns are not guaranteed monotone.
pub fn min_clearance(terrain: &NoFlyTerrain) -> ClearanceField {
    let spec = terrain.spec;
    let [nx, ny, nz] = spec.dims;
    let ceiling = spec.level_altitude(nz - 1);
    let mut values = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let highest = (0..nz).rev().find(|&k| terrain.is_excluded(i, j, k));
            let v = match highest {
                None => ColumnClearance::Open,
                Some(k) if k + 1 == nz => ColumnClearance::Closed,
                Some(k) => ColumnClearance::ClearAbove(spec.level_altitude(k + 1)),
            };
            values.push(v);
        }
    }
    ClearanceField {
        spec: spec.horizontal(),
        ceiling_m: ceiling,
        values,
    }
}

/// Voxelwise union of exclusion terrains on one grid.
pub fn fuse_terrains(terrains: &[&NoFlyTerrain]) -> Result<NoFlyTerrain> {
    let first = *terrains
        .first()
        .ok_or_else(|| Error::Config("fusion needs at least one terrain".into()))?;
    for t in &terrains[1..] {
        if t.spec != first.spec {
            return Err(Error::Extent("fused terrains must share one grid".into()));
        }
    }
    let mut excluded = first.excluded.clone();
    for t in &terrains[1..] {
        for (acc, b) in excluded.iter_mut().zip(&t.excluded) {
            *acc |= *b;
        }
    }
    let mut fused = NoFlyTerrain::from_parts(first.spec, excluded, None, TerrainKind::Fused)?;
    fused.sources = terrains
        .iter()
        .map(|t| {
            format!(
                "{}{}",
                t.kind.as_str(),
                t.threshold.map_or(String::new(), |x| format!("@{x:e}"))
            )
        })
        .collect();
    Ok(fused)
}

/// Watertight boundary mesh of the excluded voxel set as OBJ text: exposed
/// faces only, deterministic vertex ordering, outward-facing triangles.
pub fn export_terrain_mesh(terrain: &NoFlyTerrain) -> String {
    type Corner = (usize, usize, usize);
    let spec = terrain.spec;
    let [nx, ny, nz] = spec.dims;
    let excluded = |i: isize, j: isize, k: isize| -> bool {
        if i < 0 || j < 0 || k < 0 || i >= nx as isize || j >= ny as isize || k >= nz as isize {
            return false;
        }
        terrain.is_excluded(i as usize, j as usize, k as usize)
    };

    let mut vertex_ids: std::collections::HashMap<Corner, usize> = std::collections::HashMap::new();
    let mut vertices: Vec<Corner> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let vid = |vertices: &mut Vec<Corner>,
               vertex_ids: &mut std::collections::HashMap<Corner, usize>,
               c: Corner|
     -> usize {
        *vertex_ids.entry(c).or_insert_with(|| {
            vertices.push(c);
            vertices.len()
        })
    };

    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if !terrain.is_excluded(i, j, k) {
                    continue;
                }
                let (ii, jj, kk) = (i as isize, j as isize, k as isize);
                // Corner lattice: corner (a, b, c) has coordinate
                // origin + (index - 0.5) * spacing per axis.
                let quads: [(bool, [Corner; 4]); 6] = [
                    (
                        !excluded(ii - 1, jj, kk),
                        [(i, j, k), (i, j, k + 1), (i, j + 1, k + 1), (i, j + 1, k)],
                    ),
                    (
                        !excluded(ii + 1, jj, kk),
                        [
                            (i + 1, j, k),
                            (i + 1, j + 1, k),
                            (i + 1, j + 1, k + 1),
                            (i + 1, j, k + 1),
                        ],
                    ),
                    (
                        !excluded(ii, jj - 1, kk),
                        [(i, j, k), (i + 1, j, k), (i + 1, j, k + 1), (i, j, k + 1)],
                    ),
                    (
                        !excluded(ii, jj + 1, kk),
                        [
                            (i, j + 1, k),
                            (i, j + 1, k + 1),
                            (i + 1, j + 1, k + 1),
                            (i + 1, j + 1, k),
                        ],
                    ),
                    (
                        !excluded(ii, jj, kk - 1),
                        [(i, j, k), (i, j + 1, k), (i + 1, j + 1, k), (i + 1, j, k)],
                    ),
                    (
                        !excluded(ii, jj, kk + 1),
                        [
                            (i, j, k + 1),
                            (i + 1, j, k + 1),
                            (i + 1, j + 1, k + 1),
                            (i, j + 1, k + 1),
                        ],
                    ),
                ];
                for (exposed, corners) in quads {
                    if !exposed {
                        continue;
                    }
                    let ids: Vec<usize> = corners
                        .iter()
                        .map(|c| vid(&mut vertices, &mut vertex_ids, *c))
                        .collect();
                    faces.push([ids[0], ids[1], ids[2]]);
                    faces.push([ids[0], ids[2], ids[3]]);
                }
            }
        }
    }

    let mut out = String::new();
    out.push_str("# no-fly terrain boundary mesh\n");
    out.push_str(&format!(
        "# kind={} threshold={}\n",
        terrain.kind.as_str(),
        terrain
            .threshold
            .map_or("none".to_string(), |t| format!("{t:e}"))
    ));
    if let Some(h) = &terrain.scenario_hash {
        out.push_str(&format!("# scenario_sha256={h}\n"));
    }
    out.push_str(&format!(
        "# vertices={} triangles={}\n",
        vertices.len(),
        faces.len()
    ));
    for (a, b, c) in &vertices {
        let x = spec.origin[0] + (*a as f64 - 0.5) * spec.spacing[0];
        let y = spec.origin[1] + (*b as f64 - 0.5) * spec.spacing[1];
        let z = spec.origin[2] + (*c as f64 - 0.5) * spec.spacing[2];
        out.push_str(&format!("v {x:.3} {y:.3} {z:.3}\n"));
    }
    for [a, b, c] in &faces {
        out.push_str(&format!("f {a} {b} {c}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exposure::{build_exposure_grid, DensityOverrides, ExposureModel};
    use crate::grid::{classify_ground, load_urban_model, rasterize_occupancy, UrbanModel};
    use crate::hazard::{failure_presets, HarmConfig, HarmModel, RecoveryModel, UavSpec};
    use crate::impact::{build_kernel, GaussianImpactParams, ImpactModel};

    fn case_uav() -> UavSpec {
        UavSpec {
            mass_kg: 25.0,
            cross_section_m2: 0.2,
            drag_coeff: 1.8,
            diameter_cm: 50.0,
            cruise_speed_ms: 10.0,
        }
    }

    fn chain(lambda: f64) -> HazardChain {
        HazardChain {
            failure: failure_presets::catastrophic(lambda),
            recovery: RecoveryModel::without_parachute(),
            uav: case_uav(),
            harm: HarmConfig::defaults(),
            add_cruise_energy: false,
        }
    }

    /// 40 x 40 m toy world: a sidewalk strip, a road strip, one building.
    fn toy_model() -> UrbanModel {
        let text = r#"{"extent": [0, 0, 40, 40], "buildings": [
              {"footprint": [[2,30],[14,30],[14,38],[2,38]], "height_m": 12}
            ],
            "ground_use": [
              {"polygon": [[0,4],[40,4],[40,10],[0,10]], "class": "sidewalk"},
              {"polygon": [[0,16],[40,16],[40,22],[0,22]], "class": "road"}
            ]}"#;
        load_urban_model(text).unwrap()
    }

    struct ToyWorld {
        kernel: ImpactKernel,
        exposure: crate::exposure::ExposureGrid,
        occupancy: OccupancyMask,
    }

    /// 20 x 20 x 10 voxel toy grid with kernel altitudes equal to the grid's
    /// z levels.
    fn toy_world(half_extent: f64) -> ToyWorld {
        let model = toy_model();
        let spec = GridSpec3::new([1.0, 1.0, 2.0], [2.0, 2.0, 2.0], [20, 20, 10]).unwrap();
        let altitudes: Vec<f64> = (0..10).map(|k| spec.level_altitude(k)).collect();
        let impact = ImpactModel::Gaussian(GaussianImpactParams::new(0.0244).unwrap());
        let kernel = build_kernel(&impact, half_extent, &altitudes, 1.0, 2.0).unwrap();
        let ground = classify_ground(&model, &spec.horizontal()).unwrap();
        let exposure = build_exposure_grid(
            &ground,
            &ExposureModel::default(),
            "5pm",
            DensityOverrides::default(),
        )
        .unwrap();
        let occupancy = rasterize_occupancy(&model, &spec, None).unwrap();
        ToyWorld {
            kernel,
            exposure,
            occupancy,
        }
    }

    #[test]
    fn zero_exposure_gives_zero_volume() {
        let w = toy_world(8.0);
        let mut zero_chain = chain(1e-5);
        zero_chain.harm = HarmConfig::defaults();
        let empty_model =
            load_urban_model(r#"{"extent": [0, 0, 40, 40], "buildings": [], "ground_use": []}"#)
                .unwrap();
        let ground = classify_ground(&empty_model, &w.occupancy.spec.horizontal()).unwrap();
        let exposure = build_exposure_grid(
            &ground,
            &ExposureModel::default(),
            "5pm",
            DensityOverrides::default(),
        )
        .unwrap();
        let vol =
            cumulative_risk_volume(&w.kernel, &zero_chain, &exposure, &w.occupancy, None).unwrap();
        assert!(vol
            .values()
            .iter()
            .all(|v| *v == 0.0 || *v == BLOCKED_SENTINEL));
        assert_eq!(vol.max_risk(), 0.0);
    }

    #[test]
    fn gather_equals_direct_and_scatter_bitwise() {
        let w = toy_world(8.0);
        let c = chain(1e-5);
        let gather =
            cumulative_risk_volume(&w.kernel, &c, &w.exposure, &w.occupancy, None).unwrap();
        let scatter = scatter_risk_volume(&w.kernel, &c, &w.exposure, &w.occupancy, None).unwrap();
        let direct = direct_risk_volume(&w.kernel, &c, &w.exposure, &w.occupancy, None).unwrap();
        assert_eq!(gather.values(), scatter.values(), "gather vs scatter");
        assert_eq!(gather.values(), direct.values(), "gather vs direct");
        assert!(gather.max_risk() > 0.0, "toy world must carry some risk");
    }

    #[test]
    fn risk_above_single_cell_decays_with_altitude() {
        // A single pedestrian cell with a harm model pinned at ~1 isolates
        // the impact-probability decay.
        let text = r#"{"extent": [0, 0, 40, 40], "buildings": [],
            "ground_use": [{"polygon": [[18,18],[22,18],[22,22],[18,22]], "class": "sidewalk"}]}"#;
        let model = load_urban_model(text).unwrap();
        let spec = GridSpec3::new([1.0, 1.0, 2.0], [2.0, 2.0, 2.0], [20, 20, 60]).unwrap();
        let altitudes: Vec<f64> = (0..60).map(|k| spec.level_altitude(k)).collect();
        let impact = ImpactModel::Gaussian(GaussianImpactParams::new(0.0244).unwrap());
        let kernel = build_kernel(&impact, 20.0, &altitudes, 1.0, 2.0).unwrap();
        let ground = classify_ground(&model, &spec.horizontal()).unwrap();
        let exposure = build_exposure_grid(
            &ground,
            &ExposureModel::default(),
            "5pm",
            DensityOverrides::default(),
        )
        .unwrap();
        let occupancy = rasterize_occupancy(&model, &spec, None).unwrap();
        let mut c = chain(1e-5);
        c.harm.pedestrian = Some(HarmModel::ShelleyFatality {
            e0_j: 1.0,
            k_per_j: 10.0,
        });
        let vol = cumulative_risk_volume(&kernel, &c, &exposure, &occupancy, None).unwrap();

        // Column above the cell at (9, 9) (center (19, 19) inside the patch).
        let mut prev = f64::INFINITY;
        for k in 0..60 {
            let v = vol.get(9, 9, k);
            assert!(v < prev, "risk must strictly decrease along the column");
            prev = v;
        }
        // Peak scale law transfers to the column: R * z^2 roughly constant
        // well above the cell.
        let r100 = vol.get(9, 9, 49) * spec.level_altitude(49).powi(2);
        let r118 = vol.get(9, 9, 58) * spec.level_altitude(58).powi(2);
        assert!((r100 / r118 - 1.0).abs() < 0.01);
    }

    #[test]
    fn linear_in_exposure_scaling() {
        let w = toy_world(8.0);
        let c = chain(1e-5);
        let base = cumulative_risk_volume(&w.kernel, &c, &w.exposure, &w.occupancy, None).unwrap();

        let model = toy_model();
        let ground = classify_ground(&model, &w.occupancy.spec.horizontal()).unwrap();
        let mut scaled_model = ExposureModel::default();
        scaled_model.ped_base *= 2.0;
        scaled_model.veh_base *= 2.0;
        let scaled_exposure =
            build_exposure_grid(&ground, &scaled_model, "5pm", DensityOverrides::default())
                .unwrap();
        let scaled =
            cumulative_risk_volume(&w.kernel, &c, &scaled_exposure, &w.occupancy, None).unwrap();
        for (a, b) in base.values().iter().zip(scaled.values()) {
            if *a == BLOCKED_SENTINEL {
                assert_eq!(*b, BLOCKED_SENTINEL);
            } else {
                assert_eq!(*b, *a * 2.0, "risk must scale exactly with exposure");
            }
        }
    }

    #[test]
    fn monotone_in_failure_rate_and_thresholds() {
        let w = toy_world(8.0);
        let lo = cumulative_risk_volume(&w.kernel, &chain(1e-6), &w.exposure, &w.occupancy, None)
            .unwrap();
        let hi = cumulative_risk_volume(&w.kernel, &chain(1e-5), &w.exposure, &w.occupancy, None)
            .unwrap();
        let t = 2e-8;
        let e_lo = threshold_terrain(&lo, t).unwrap();
        let e_hi = threshold_terrain(&hi, t).unwrap();
        for (a, b) in e_lo.excluded().iter().zip(e_hi.excluded()) {
            assert!(
                !a | b,
                "raising the failure rate must not shrink the excluded set"
            );
        }

        // Threshold nesting on one volume.
        let strict = threshold_terrain(&hi, 1e-9).unwrap();
        let loose = threshold_terrain(&hi, 1e-7).unwrap();
        for (s, l) in strict.excluded().iter().zip(loose.excluded()) {
            assert!(!l | s);
        }
        assert!(strict.excluded_count() > loose.excluded_count());
    }

    #[test]
    fn threshold_extremes() {
        let w = toy_world(8.0);
        let vol = cumulative_risk_volume(&w.kernel, &chain(1e-5), &w.exposure, &w.occupancy, None)
            .unwrap();
        let above_max = threshold_terrain(&vol, vol.max_risk() * 1.01).unwrap();
        assert_eq!(above_max.excluded_count(), w.occupancy.blocked_count());
        let everything = threshold_terrain(&vol, f64::MIN_POSITIVE).unwrap();
        let positive = vol.values().iter().filter(|v| **v > 0.0).count();
        assert_eq!(
            everything.excluded_count(),
            positive + w.occupancy.blocked_count()
        );
        assert!(threshold_terrain(&vol, 0.0).is_err());
    }

    #[test]
    fn clearance_reduction_cases() {
        let spec = GridSpec3::new([1.0, 1.0, 2.0], [2.0, 2.0, 2.0], [3, 1, 5]).unwrap();
        // Column 0: empty. Column 1: excluded at k = 1 and a hole below the
        // top. Column 2: excluded at the ceiling.
        let mut excl = vec![false; spec.len()];
        let idx = |i: usize, k: usize| spec.idx(i, 0, k);
        excl[idx(1, 1)] = true;
        excl[idx(2, 4)] = true;
        let t = NoFlyTerrain::from_parts(spec, excl, Some(1e-8), TerrainKind::Risk).unwrap();
        let c = min_clearance(&t);
        assert_eq!(c.column(0, 0), ColumnClearance::Open);
        assert_eq!(c.column(1, 0), ColumnClearance::ClearAbove(6.0));
        assert_eq!(c.column(2, 0), ColumnClearance::Closed);
        assert_eq!(c.column(0, 0).clearance_m(), Some(0.0));
        assert_eq!(c.column(2, 0).clearance_m(), None);
        assert_eq!(c.ceiling_m, 10.0);

        // Empty terrain: every column fully open.
        let empty =
            NoFlyTerrain::from_parts(spec, vec![false; spec.len()], None, TerrainKind::Risk)
                .unwrap();
        assert!(min_clearance(&empty)
            .columns()
            .iter()
            .all(|c| *c == ColumnClearance::Open));
    }

    #[test]
    fn fusion_algebra_and_union_oracle() {
        let spec = GridSpec3::new([0.0, 0.0, 2.0], [2.0, 2.0, 2.0], [4, 4, 4]).unwrap();
        let pattern = |seed: u64| -> Vec<bool> {
            (0..spec.len())
                .map(|i| (i as u64).wrapping_mul(seed) % 7 < 2)
                .collect()
        };
        let a = NoFlyTerrain::from_parts(spec, pattern(11), Some(1e-8), TerrainKind::Risk).unwrap();
        let b = NoFlyTerrain::from_parts(spec, pattern(29), None, TerrainKind::Acoustic).unwrap();
        let c = NoFlyTerrain::from_parts(spec, pattern(41), None, TerrainKind::Acoustic).unwrap();

        let single = fuse_terrains(&[&a]).unwrap();
        assert_eq!(single.excluded(), a.excluded());
        assert_eq!(single.kind, TerrainKind::Fused);

        let ab = fuse_terrains(&[&a, &b]).unwrap();
        let ba = fuse_terrains(&[&b, &a]).unwrap();
        assert_eq!(ab.excluded(), ba.excluded());

        let abc1 = fuse_terrains(&[&ab, &c]).unwrap();
        let bc = fuse_terrains(&[&b, &c]).unwrap();
        let abc2 = fuse_terrains(&[&a, &bc]).unwrap();
        assert_eq!(abc1.excluded(), abc2.excluded());

        let aa = fuse_terrains(&[&a, &a]).unwrap();
        assert_eq!(aa.excluded(), a.excluded());

        // Union oracle: |A ∪ B| by explicit set union.
        let union_count = a
            .excluded()
            .iter()
            .zip(b.excluded())
            .filter(|(x, y)| **x || **y)
            .count();
        assert_eq!(ab.excluded_count(), union_count);

        let other = GridSpec3::new([0.0, 0.0, 0.0], [2.0, 2.0, 2.0], [4, 4, 4]).unwrap();
        let d =
            NoFlyTerrain::from_parts(other, vec![false; other.len()], None, TerrainKind::Acoustic)
                .unwrap();
        assert!(matches!(fuse_terrains(&[&a, &d]), Err(Error::Extent(_))));
        assert!(fuse_terrains(&[]).is_err());
    }

    fn mesh_stats(obj: &str) -> (usize, usize) {
        let v = obj.lines().filter(|l| l.starts_with("v ")).count();
        let f = obj.lines().filter(|l| l.starts_with("f ")).count();
        (v, f)
    }

    #[test]
    fn mesh_extraction_counts() {
        let spec = GridSpec3::new([1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [4, 1, 1]).unwrap();
        let single = {
            let mut e = vec![false; spec.len()];
            e[spec.idx(1, 0, 0)] = true;
            NoFlyTerrain::from_parts(spec, e, None, TerrainKind::Risk).unwrap()
        };
        assert_eq!(mesh_stats(&export_terrain_mesh(&single)), (8, 12));

        let pair = {
            let mut e = vec![false; spec.len()];
            e[spec.idx(1, 0, 0)] = true;
            e[spec.idx(2, 0, 0)] = true;
            NoFlyTerrain::from_parts(spec, e, None, TerrainKind::Risk).unwrap()
        };
        let obj = export_terrain_mesh(&pair);
        let (v, f) = mesh_stats(&obj);
        assert_eq!(f, 20, "shared face removed");
        assert_eq!(v, 12);

        let empty =
            NoFlyTerrain::from_parts(spec, vec![false; spec.len()], None, TerrainKind::Risk)
                .unwrap();
        let obj = export_terrain_mesh(&empty);
        assert_eq!(mesh_stats(&obj), (0, 0));
        assert!(obj.starts_with("# no-fly terrain boundary mesh"));
    }

    #[test]
    fn mesh_is_watertight() {
        // Every undirected edge must be shared by exactly two triangles.
        let spec = GridSpec3::new([1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [3, 3, 3]).unwrap();
        let mut e = vec![false; spec.len()];
        for (i, j, k) in [(0, 0, 0), (1, 0, 0), (1, 1, 0), (1, 1, 1), (2, 2, 2)] {
            e[spec.idx(i, j, k)] = true;
        }
        let t = NoFlyTerrain::from_parts(spec, e, None, TerrainKind::Risk).unwrap();
        let obj = export_terrain_mesh(&t);
        let mut edges: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        for line in obj.lines().filter(|l| l.starts_with("f ")) {
            let ids: Vec<usize> = line[2..]
                .split_whitespace()
                .map(|s| s.parse().unwrap())
                .collect();
            for w in [(ids[0], ids[1]), (ids[1], ids[2]), (ids[2], ids[0])] {
                let key = (w.0.min(w.1), w.0.max(w.1));
                *edges.entry(key).or_insert(0) += 1;
            }
        }
        assert!(
            edges.values().all(|c| *c == 2),
            "open or non-manifold edge found"
        );
    }

    #[test]
    fn elevation_shifts_fall_heights() {
        // One pedestrian cell on a 30 m plateau: the chain at voxel altitude z
        // must be evaluated at fall height z - 30.
        let text = r#"{"extent": [0, 0, 8, 8], "buildings": [],
            "ground_use": [{"polygon": [[0,0],[8,0],[8,8],[0,8]], "class": "sidewalk"}]}"#;
        let model = load_urban_model(text).unwrap();
        let spec = GridSpec3::new([1.0, 1.0, 2.0], [2.0, 2.0, 2.0], [1, 1, 40]).unwrap();
        let altitudes: Vec<f64> = (0..40).map(|k| spec.level_altitude(k)).collect();
        let impact = ImpactModel::Gaussian(GaussianImpactParams::new(0.0244).unwrap());
        let kernel = build_kernel(&impact, 0.0, &altitudes, 1.0, 2.0).unwrap();
        let ground = classify_ground(&model, &spec.horizontal()).unwrap();
        let exposure = build_exposure_grid(
            &ground,
            &ExposureModel::default(),
            "5pm",
            DensityOverrides::default(),
        )
        .unwrap();
        let c = chain(1e-5);

        let flat_occ = rasterize_occupancy(&model, &spec, None).unwrap();
        let flat = cumulative_risk_volume(&kernel, &c, &exposure, &flat_occ, None).unwrap();

        let elev = ScalarField2::new(spec.horizontal(), vec![30.0]).unwrap();
        let raised_occ = rasterize_occupancy(&model, &spec, Some(&elev)).unwrap();
        let raised =
            cumulative_risk_volume(&kernel, &c, &exposure, &raised_occ, Some(&elev)).unwrap();

        // Voxel at z = 80 over the plateau behaves like z = 50 on flat ground.
        let k80 = (0..40).find(|&k| spec.level_altitude(k) == 80.0).unwrap();
        let k50 = (0..40).find(|&k| spec.level_altitude(k) == 50.0).unwrap();
        assert_eq!(raised.get(0, 0, k80), flat.get(0, 0, k50));
        // Voxels at or below the plateau surface are blocked.
        let k30 = (0..40).find(|&k| spec.level_altitude(k) == 30.0).unwrap();
        assert!(raised.is_blocked(0, 0, k30));
        assert!(!raised.is_blocked(0, 0, k30 + 1));
        // Scatter and direct agree with gather under elevation too.
        let scat = scatter_risk_volume(&kernel, &c, &exposure, &raised_occ, Some(&elev)).unwrap();
        let dir = direct_risk_volume(&kernel, &c, &exposure, &raised_occ, Some(&elev)).unwrap();
        assert_eq!(raised.values(), scat.values());
        assert_eq!(raised.values(), dir.values());
    }

    #[test]
    fn individual_risk_examples() {
        assert_eq!(individual_risk(0.0, 0.73), 0.0);
        let v = individual_risk(0.6, 1e-5 * 1.0 * 1.67e-3 * 1.0);
        assert!((v - 1.002e-8).abs() < 1e-11);
        let doubled = individual_risk(1.2, 1e-5 * 1.0 * 1.67e-3 * 1.0);
        assert_eq!(doubled, 2.0 * v);
    }

    #[test]
    fn spacing_mismatch_is_config_error() {
        let w = toy_world(8.0);
        let impact = ImpactModel::Gaussian(GaussianImpactParams::new(0.0244).unwrap());
        let bad_kernel = build_kernel(&impact, 8.0, &[2.0, 4.0], 0.5, 1.0).unwrap();
        assert!(matches!(
            cumulative_risk_volume(&bad_kernel, &chain(1e-5), &w.exposure, &w.occupancy, None),
            Err(Error::Config(_))
        ));
    }
}
