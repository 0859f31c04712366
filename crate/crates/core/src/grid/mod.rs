//! Geometry substrate: sampled-field grids, polygon geometry, and urban-model
//! ingestion/rasterization.
//!
//! All coordinates live in a local ENU metric frame in meters. Grid origins
//! are the coordinates of the *center* of cell `(0, 0[, 0])`; a cell with
//! index `i` along an axis is centered at `origin + i * spacing` and occupies
//! `center ± spacing / 2`.

mod polygon;
mod urban;

pub use polygon::Polygon;
pub use urban::{
    classify_ground, load_urban_model, rasterize_occupancy, serialize_urban_model, Building,
    GroundClass, GroundUseArea, GroundUseClass, GroundUseGrid, OccupancyMask, UrbanModel,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned 2D grid: origin (center of first cell), spacing per axis in
/// meters, cell counts per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec2 {
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
    pub dims: [usize; 2],
}

/// Axis-aligned 3D grid; the third axis is altitude AGL in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec3 {
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub dims: [usize; 3],
}

fn check_axes(origin: &[f64], spacing: &[f64], dims: &[usize]) -> Result<usize> {
    for (axis, &s) in spacing.iter().enumerate() {
        if !s.is_finite() || s <= 0.0 {
            return Err(Error::Config(format!(
                "grid spacing must be positive and finite on axis {axis}, got {s}"
            )));
        }
    }
    for &o in origin {
        if !o.is_finite() {
            return Err(Error::Config("grid origin must be finite".into()));
        }
    }
    let mut total = 1usize;
    for (axis, &d) in dims.iter().enumerate() {
        if d == 0 {
            return Err(Error::Config(format!(
                "grid dims must be >= 1 on axis {axis}"
            )));
        }
        total = total
            .checked_mul(d)
            .ok_or_else(|| Error::Config("grid cell count overflows usize".into()))?;
    }
    // Guard against grids too large to address as a contiguous f64 buffer.
    total
        .checked_mul(std::mem::size_of::<f64>())
        .ok_or_else(|| Error::Config("grid byte size overflows usize".into()))?;
    Ok(total)
}

impl GridSpec2 {
    pub fn new(origin: [f64; 2], spacing: [f64; 2], dims: [usize; 2]) -> Result<Self> {
        check_axes(&origin, &spacing, &dims)?;
        Ok(Self {
            origin,
            spacing,
            dims,
        })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major flat index: y-major, x fastest.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.dims[0] && j < self.dims[1]);
        j * self.dims[0] + i
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
        ]
    }

    /// Cell area in m².
    pub fn cell_area(&self) -> f64 {
        self.spacing[0] * self.spacing[1]
    }
}

impl GridSpec3 {
    pub fn new(origin: [f64; 3], spacing: [f64; 3], dims: [usize; 3]) -> Result<Self> {
        check_axes(&origin, &spacing, &dims)?;
        Ok(Self {
            origin,
            spacing,
            dims,
        })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major flat index over (altitude, y, x): altitude-major, x fastest.
    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims[0] && j < self.dims[1] && k < self.dims[2]);
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    /// Altitude of level `k` in meters.
    #[inline]
    pub fn level_altitude(&self, k: usize) -> f64 {
        self.origin[2] + k as f64 * self.spacing[2]
    }

    /// The horizontal lattice shared with ground-aligned 2D grids.
    pub fn horizontal(&self) -> GridSpec2 {
        GridSpec2 {
            origin: [self.origin[0], self.origin[1]],
            spacing: [self.spacing[0], self.spacing[1]],
            dims: [self.dims[0], self.dims[1]],
        }
    }
}

/// Sampled 2D scalar field, row-major (y, x).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2 {
    pub spec: GridSpec2,
    values: Vec<f64>,
}

/// Sampled 3D scalar field, row-major (altitude, y, x).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField3 {
    pub spec: GridSpec3,
    values: Vec<f64>,
}

fn check_values(expected: usize, values: &[f64]) -> Result<()> {
    if values.len() != expected {
        return Err(Error::Config(format!(
            "field value count {} does not match grid cell count {expected}",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!(
            "field values must be finite, got {v}"
        )));
    }
    Ok(())
}

impl ScalarField2 {
    pub fn new(spec: GridSpec2, values: Vec<f64>) -> Result<Self> {
        check_values(spec.len(), &values)?;
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: GridSpec2) -> Self {
        let n = spec.len();
        Self {
            spec,
            values: vec![0.0; n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.spec.idx(i, j);
        self.values[idx] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl ScalarField3 {
    pub fn new(spec: GridSpec3, values: Vec<f64>) -> Result<Self> {
        check_values(spec.len(), &values)?;
        Ok(Self { spec, values })
    }

    pub fn filled(spec: GridSpec3, fill: f64) -> Self {
        let n = spec.len();
        Self {
            spec,
            values: vec![fill; n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.spec.idx(i, j, k)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_rejects_bad_axes() {
        assert!(GridSpec2::new([0.0, 0.0], [2.0, 0.0], [4, 4]).is_err());
        assert!(GridSpec2::new([0.0, 0.0], [2.0, 2.0], [0, 4]).is_err());
        assert!(GridSpec3::new([0.0, 0.0, 0.0], [2.0, 2.0, -1.0], [4, 4, 4]).is_err());
        assert!(GridSpec3::new([f64::NAN, 0.0, 0.0], [2.0, 2.0, 2.0], [4, 4, 4]).is_err());
    }

    #[test]
    fn flat_indexing_is_row_major() {
        let s = GridSpec3::new([1.0, 1.0, 2.0], [2.0, 2.0, 2.0], [3, 4, 5]).unwrap();
        assert_eq!(s.idx(0, 0, 0), 0);
        assert_eq!(s.idx(1, 0, 0), 1);
        assert_eq!(s.idx(0, 1, 0), 3);
        assert_eq!(s.idx(0, 0, 1), 12);
        assert_eq!(s.idx(2, 3, 4), 59);
        assert_eq!(s.len(), 60);
    }

    #[test]
    fn cell_centers_follow_origin_convention() {
        let s = GridSpec2::new([1.0, 1.0], [2.0, 2.0], [250, 125]).unwrap();
        assert_eq!(s.cell_center(0, 0), [1.0, 1.0]);
        assert_eq!(s.cell_center(249, 124), [499.0, 249.0]);
        assert_eq!(s.cell_area(), 4.0);
    }

    #[test]
    fn field_rejects_non_finite_and_wrong_len() {
        let s = GridSpec2::new([0.0, 0.0], [1.0, 1.0], [2, 2]).unwrap();
        assert!(ScalarField2::new(s, vec![0.0; 3]).is_err());
        assert!(ScalarField2::new(s, vec![0.0, 1.0, f64::INFINITY, 2.0]).is_err());
        assert!(ScalarField2::new(s, vec![0.0; 4]).is_ok());
    }
}
