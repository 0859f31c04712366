use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec2, GridSpec3, Polygon, ScalarField2};

/// Building prism: footprint polygon plus height above ground level.
#[derive(Debug, Clone, PartialEq)]
pub struct Building {
    pub footprint: Polygon,
    pub height_m: f64,
}

/// Ground-use input classes as they appear in the urban-model document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundUseClass {
    Sidewalk,
    Road,
    Other,
}

/// Ground-cell classification used by the exposure and terrain stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroundClass {
    Pedestrian,
    Vehicle,
    None,
}

impl GroundClass {
    pub fn as_str(self) -> &'static str {
        match self {
            GroundClass::Pedestrian => "pedestrian",
            GroundClass::Vehicle => "vehicle",
            GroundClass::None => "none",
        }
    }
}

impl From<GroundUseClass> for GroundClass {
    fn from(c: GroundUseClass) -> Self {
        match c {
            GroundUseClass::Sidewalk => GroundClass::Pedestrian,
            GroundUseClass::Road => GroundClass::Vehicle,
            GroundUseClass::Other => GroundClass::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundUseArea {
    pub polygon: Polygon,
    pub class: GroundUseClass,
    /// Higher wins when areas of different classes overlap; defaults to 0.
    pub priority: i32,
}

/// Urban model: building prisms and ground-use polygons in a local metric
/// frame, bounded by `extent = [xmin, ymin, xmax, ymax]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UrbanModel {
    pub extent: [f64; 4],
    pub buildings: Vec<Building>,
    pub ground_use: Vec<GroundUseArea>,
}

/// Boolean voxel mask: true where the voxel center lies inside a building
/// prism or below the terrain surface.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMask {
    pub spec: GridSpec3,
    blocked: Vec<bool>,
}

impl OccupancyMask {
    #[inline]
    pub fn is_blocked(&self, i: usize, j: usize, k: usize) -> bool {
        self.blocked[self.spec.idx(i, j, k)]
    }

    pub fn blocked(&self) -> &[bool] {
        &self.blocked
    }

    pub fn blocked_count(&self) -> usize {
        self.blocked.iter().filter(|b| **b).count()
    }
}

/// Per-cell ground classification on the shared horizontal lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundUseGrid {
    pub spec: GridSpec2,
    classes: Vec<GroundClass>,
}

impl GroundUseGrid {
    #[inline]
    pub fn class(&self, i: usize, j: usize) -> GroundClass {
        self.classes[self.spec.idx(i, j)]
    }

    pub fn classes(&self) -> &[GroundClass] {
        &self.classes
    }

    pub fn count(&self, class: GroundClass) -> usize {
        self.classes.iter().filter(|c| **c == class).count()
    }
}

// ---------------------------------------------------------------------------
// JSON document schema
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct UrbanModelDoc {
    extent: [f64; 4],
    buildings: Vec<BuildingDoc>,
    ground_use: Vec<GroundUseDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BuildingDoc {
    footprint: Vec<[f64; 2]>,
    height_m: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct GroundUseDoc {
    polygon: Vec<[f64; 2]>,
    class: GroundUseClass,
    #[serde(default, skip_serializing_if = "is_zero")]
    priority: i32,
}

fn is_zero(p: &i32) -> bool {
    *p == 0
}

fn bbox_within(bb: [f64; 4], extent: [f64; 4]) -> bool {
    bb[0] >= extent[0] && bb[1] >= extent[1] && bb[2] <= extent[2] && bb[3] <= extent[3]
}

/// Parse and validate an urban-model JSON document.
pub fn load_urban_model(text: &str) -> Result<UrbanModel> {
    let doc: UrbanModelDoc = serde_json::from_str(text)
        .map_err(|e| Error::schema("$", format!("invalid urban-model document: {e}")))?;
    let extent = doc.extent;
    for (i, v) in extent.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::schema(format!("extent[{i}]"), "must be finite"));
        }
    }
    if extent[2] <= extent[0] || extent[3] <= extent[1] {
        return Err(Error::schema("extent", "xmax/ymax must exceed xmin/ymin"));
    }

    let mut buildings = Vec::with_capacity(doc.buildings.len());
    for (i, b) in doc.buildings.into_iter().enumerate() {
        if !b.height_m.is_finite() || b.height_m < 0.0 {
            return Err(Error::schema(
                format!("buildings[{i}].height_m"),
                format!("must be finite and >= 0, got {}", b.height_m),
            ));
        }
        let footprint = Polygon::new(b.footprint)
            .map_err(|e| Error::schema(format!("buildings[{i}].footprint"), e.to_string()))?;
        if !bbox_within(footprint.bbox(), extent) {
            return Err(Error::Extent(format!(
                "buildings[{i}] footprint leaves the model extent"
            )));
        }
        buildings.push(Building {
            footprint,
            height_m: b.height_m,
        });
    }

    let mut ground_use = Vec::with_capacity(doc.ground_use.len());
    for (i, g) in doc.ground_use.into_iter().enumerate() {
        let polygon = Polygon::new(g.polygon)
            .map_err(|e| Error::schema(format!("ground_use[{i}].polygon"), e.to_string()))?;
        if !bbox_within(polygon.bbox(), extent) {
            return Err(Error::Extent(format!(
                "ground_use[{i}] polygon leaves the model extent"
            )));
        }
        ground_use.push(GroundUseArea {
            polygon,
            class: g.class,
            priority: g.priority,
        });
    }

    Ok(UrbanModel {
        extent,
        buildings,
        ground_use,
    })
}

/// Serialize back to the document schema; `load_urban_model` of the output
/// yields an equal model.
pub fn serialize_urban_model(model: &UrbanModel) -> String {
    let doc = UrbanModelDoc {
        extent: model.extent,
        buildings: model
            .buildings
            .iter()
            .map(|b| BuildingDoc {
                footprint: b.footprint.points().to_vec(),
                height_m: b.height_m,
            })
            .collect(),
        ground_use: model
            .ground_use
            .iter()
            .map(|g| GroundUseDoc {
                polygon: g.polygon.points().to_vec(),
                class: g.class,
                priority: g.priority,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("urban model document serializes")
}

fn check_grid_in_extent(
    origin: &[f64],
    spacing: &[f64],
    dims: &[usize],
    extent: [f64; 4],
) -> Result<()> {
    // Cell centers padded by one spacing must stay inside the model extent.
    for axis in 0..2 {
        let pad = spacing[axis];
        let lo = origin[axis] - pad;
        let hi = origin[axis] + (dims[axis] - 1) as f64 * spacing[axis] + pad;
        if lo < extent[axis] - pad || hi > extent[axis + 2] + pad {
            return Err(Error::Extent(format!(
                "grid axis {axis} spans [{lo}, {hi}] outside model extent padded by {pad}"
            )));
        }
    }
    Ok(())
}

/// Rasterize the urban model into a voxel occupancy mask.
///
/// A voxel is blocked iff its center lies inside some building prism (footprint
/// containment with boundary-inclusive tie-break, `z <= prism top`) or at or
/// below the terrain surface. `elevation`, when given, must share the grid's
/// horizontal lattice; the default surface is flat at z = 0.
pub fn rasterize_occupancy(
    model: &UrbanModel,
    spec: &GridSpec3,
    elevation: Option<&ScalarField2>,
) -> Result<OccupancyMask> {
    check_grid_in_extent(&spec.origin, &spec.spacing, &spec.dims, model.extent)?;
    if let Some(elev) = elevation {
        if elev.spec != spec.horizontal() {
            return Err(Error::Extent(
                "elevation raster does not align with the voxel grid".into(),
            ));
        }
    }
    let [nx, ny, nz] = spec.dims;
    // Bounding boxes prune the per-voxel polygon tests.
    let boxes: Vec<[f64; 4]> = model.buildings.iter().map(|b| b.footprint.bbox()).collect();

    let columns: Vec<Vec<bool>> = (0..nx * ny)
        .into_par_iter()
        .map(|cell| {
            let (i, j) = (cell % nx, cell / nx);
            let [x, y] = spec.horizontal().cell_center(i, j);
            let ground = elevation.map_or(0.0, |e| e.get(i, j));
            let mut top = f64::NEG_INFINITY;
            for (b, bb) in model.buildings.iter().zip(&boxes) {
                if x >= bb[0]
                    && x <= bb[2]
                    && y >= bb[1]
                    && y <= bb[3]
                    && b.footprint.contains([x, y])
                {
                    top = top.max(ground + b.height_m);
                }
            }
            (0..nz)
                .map(|k| {
                    let z = spec.level_altitude(k);
                    z <= ground || z <= top
                })
                .collect()
        })
        .collect();

    let mut blocked = vec![false; spec.len()];
    for (cell, column) in columns.iter().enumerate() {
        let (i, j) = (cell % nx, cell / nx);
        for (k, b) in column.iter().enumerate() {
            blocked[spec.idx(i, j, k)] = *b;
        }
    }
    Ok(OccupancyMask {
        spec: *spec,
        blocked,
    })
}

/// Classify each ground cell from the highest-priority covering ground-use
/// polygon; cells under building footprints are `none`.
///
/// Overlapping polygons of different classes with equal priority are an
/// ambiguity error naming the first offending cell.
pub fn classify_ground(model: &UrbanModel, spec: &GridSpec2) -> Result<GroundUseGrid> {
    check_grid_in_extent(&spec.origin, &spec.spacing, &spec.dims, model.extent)?;
    let [nx, ny] = spec.dims;
    let bboxes: Vec<[f64; 4]> = model.ground_use.iter().map(|g| g.polygon.bbox()).collect();
    let building_boxes: Vec<[f64; 4]> =
        model.buildings.iter().map(|b| b.footprint.bbox()).collect();

    let classes: Vec<std::result::Result<GroundClass, (usize, usize)>> = (0..nx * ny)
        .into_par_iter()
        .map(|cell| {
            let (i, j) = (cell % nx, cell / nx);
            let p = spec.cell_center(i, j);
            for (b, bb) in model.buildings.iter().zip(&building_boxes) {
                if p[0] >= bb[0]
                    && p[0] <= bb[2]
                    && p[1] >= bb[1]
                    && p[1] <= bb[3]
                    && b.footprint.contains(p)
                {
                    return Ok(GroundClass::None);
                }
            }
            let mut best: Option<(i32, GroundClass)> = None;
            let mut ambiguous = false;
            for (g, bb) in model.ground_use.iter().zip(&bboxes) {
                if p[0] < bb[0] || p[0] > bb[2] || p[1] < bb[1] || p[1] > bb[3] {
                    continue;
                }
                if !g.polygon.contains(p) {
                    continue;
                }
                let class = GroundClass::from(g.class);
                match best {
                    None => best = Some((g.priority, class)),
                    Some((bp, bc)) => {
                        if g.priority > bp {
                            best = Some((g.priority, class));
                            ambiguous = false;
                        } else if g.priority == bp && class != bc {
                            ambiguous = true;
                        }
                    }
                }
            }
            if ambiguous {
                return Err((i, j));
            }
            Ok(best.map_or(GroundClass::None, |(_, c)| c))
        })
        .collect();

    let mut out = Vec::with_capacity(classes.len());
    for c in classes {
        match c {
            Ok(class) => out.push(class),
            Err((i, j)) => {
                let p = spec.cell_center(i, j);
                return Err(Error::AmbiguousGroundUse(format!(
                    "cell ({i}, {j}) at ({}, {}) is covered by equal-priority polygons of different classes",
                    p[0], p[1]
                )));
            }
        }
    }
    Ok(GroundUseGrid {
        spec: *spec,
        classes: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_json(buildings: &str, ground: &str) -> String {
        format!(
            r#"{{"extent": [0, 0, 500, 250], "buildings": [{buildings}], "ground_use": [{ground}]}}"#
        )
    }

    #[test]
    fn empty_buildings_with_one_road() {
        let text = model_json(
            "",
            r#"{"polygon": [[0,0],[100,0],[100,10],[0,10]], "class": "road"}"#,
        );
        let m = load_urban_model(&text).unwrap();
        assert!(m.buildings.is_empty());
        assert_eq!(m.ground_use.len(), 1);
        assert_eq!(m.ground_use[0].class, GroundUseClass::Road);
    }

    #[test]
    fn single_prism_has_expected_volume() {
        let text = model_json(
            r#"{"footprint": [[0,0],[10,0],[10,10],[0,10]], "height_m": 50}"#,
            "",
        );
        let m = load_urban_model(&text).unwrap();
        assert_eq!(m.buildings.len(), 1);
        let b = &m.buildings[0];
        assert_eq!(b.footprint.area() * b.height_m, 5000.0);
    }

    #[test]
    fn schema_violation_names_path() {
        let text = model_json(
            r#"{"footprint": [[0,0],[10,0],[10,10],[0,10]], "height_m": -3}"#,
            "",
        );
        let err = load_urban_model(&text).unwrap_err();
        assert!(err.to_string().contains("buildings[0].height_m"), "{err}");
    }

    #[test]
    fn self_intersecting_footprint_is_rejected() {
        let text = model_json(
            r#"{"footprint": [[0,0],[10,10],[10,0],[0,10]], "height_m": 5}"#,
            "",
        );
        let err = load_urban_model(&text).unwrap_err();
        assert!(err.to_string().contains("footprint"), "{err}");
    }

    #[test]
    fn round_trip_preserves_model() {
        let text = model_json(
            r#"{"footprint": [[0,0],[10,0],[10,10],[0,10]], "height_m": 50}"#,
            r#"{"polygon": [[20,0],[120,0],[120,10],[20,10]], "class": "sidewalk", "priority": 2}"#,
        );
        let m = load_urban_model(&text).unwrap();
        let again = load_urban_model(&serialize_urban_model(&m)).unwrap();
        assert_eq!(m, again);
    }

    fn prism_model() -> UrbanModel {
        let text = model_json(
            r#"{"footprint": [[0,0],[10,0],[10,10],[0,10]], "height_m": 50}"#,
            "",
        );
        load_urban_model(&text).unwrap()
    }

    #[test]
    fn empty_model_rasterizes_all_free() {
        let m = load_urban_model(&model_json("", "")).unwrap();
        let spec = GridSpec3::new([1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [8, 8, 8]).unwrap();
        let mask = rasterize_occupancy(&m, &spec, None).unwrap();
        assert_eq!(mask.blocked_count(), 0);
    }

    #[test]
    fn prism_blocks_exactly_the_brute_force_count() {
        // 10 x 10 x 50 m prism on a 2 m voxel grid: 5*5*25 centers strictly inside.
        let m = prism_model();
        let spec = GridSpec3::new([1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [20, 20, 40]).unwrap();
        let mask = rasterize_occupancy(&m, &spec, None).unwrap();
        // Independent brute force over all voxel centers.
        let mut expect = 0;
        for k in 0..40usize {
            for j in 0..20usize {
                for i in 0..20usize {
                    let [x, y, z] = spec.voxel_center(i, j, k);
                    let inside = (0.0..=10.0).contains(&x)
                        && (0.0..=10.0).contains(&y)
                        && z <= 50.0
                        && z > 0.0;
                    if inside {
                        expect += 1;
                        assert!(mask.is_blocked(i, j, k), "({i},{j},{k}) should be blocked");
                    }
                }
            }
        }
        assert_eq!(expect, 625);
        assert_eq!(mask.blocked_count(), 625);
    }

    #[test]
    fn center_on_footprint_edge_counts_as_inside() {
        let m = prism_model();
        // x centers at 0, 2, ...: the center at x = 10 sits exactly on the edge.
        let spec = GridSpec3::new([10.0, 5.0, 1.0], [2.0, 2.0, 2.0], [1, 1, 1]).unwrap();
        let mask = rasterize_occupancy(&m, &spec, None).unwrap();
        assert!(mask.is_blocked(0, 0, 0));
    }

    #[test]
    fn grid_outside_extent_is_an_error() {
        let m = prism_model();
        let spec = GridSpec3::new([490.0, 1.0, 1.0], [2.0, 2.0, 2.0], [40, 4, 4]).unwrap();
        assert!(matches!(
            rasterize_occupancy(&m, &spec, None),
            Err(Error::Extent(_))
        ));
    }

    #[test]
    fn classify_road_building_override_and_partition() {
        let text = model_json(
            r#"{"footprint": [[0,0],[20,0],[20,20],[0,20]], "height_m": 30}"#,
            r#"{"polygon": [[0,0],[100,0],[100,20],[0,20]], "class": "sidewalk"},
               {"polygon": [[0,30],[100,30],[100,50],[0,50]], "class": "road"}"#,
        );
        let m = load_urban_model(&text).unwrap();
        let spec = GridSpec2::new([1.0, 1.0], [2.0, 2.0], [60, 30]).unwrap();
        let g = classify_ground(&m, &spec).unwrap();
        // Cell inside road polygon only.
        assert_eq!(g.class(10, 20), GroundClass::Vehicle);
        // Cell inside both building footprint and sidewalk polygon: building wins.
        assert_eq!(g.class(5, 5), GroundClass::None);
        // Sidewalk beyond the building.
        assert_eq!(g.class(30, 5), GroundClass::Pedestrian);
        // Partition: class counts sum to the total cell count.
        let total = g.count(GroundClass::Pedestrian)
            + g.count(GroundClass::Vehicle)
            + g.count(GroundClass::None);
        assert_eq!(total, spec.len());
    }

    #[test]
    fn sidewalk_strip_cell_count_matches_brute_force() {
        // 2 m wide sidewalk along a 100 m road edge: 50 pedestrian cells at 2 m spacing.
        let text = model_json(
            "",
            r#"{"polygon": [[0,10],[100,10],[100,12],[0,12]], "class": "sidewalk"}"#,
        );
        let m = load_urban_model(&text).unwrap();
        let spec = GridSpec2::new([1.0, 1.0], [2.0, 2.0], [60, 20]).unwrap();
        let g = classify_ground(&m, &spec).unwrap();
        // Brute-force oracle: count centers inside the strip.
        let mut expect = 0;
        for j in 0..20usize {
            for i in 0..60usize {
                let [x, y] = spec.cell_center(i, j);
                if (0.0..=100.0).contains(&x) && (10.0..=12.0).contains(&y) {
                    expect += 1;
                }
            }
        }
        assert_eq!(g.count(GroundClass::Pedestrian), expect);
        assert_eq!(expect, 50);
    }

    #[test]
    fn equal_priority_overlap_is_ambiguous() {
        let text = model_json(
            "",
            r#"{"polygon": [[0,0],[40,0],[40,20],[0,20]], "class": "sidewalk"},
               {"polygon": [[20,0],[60,0],[60,20],[20,20]], "class": "road"}"#,
        );
        let m = load_urban_model(&text).unwrap();
        let spec = GridSpec2::new([1.0, 1.0], [2.0, 2.0], [30, 10]).unwrap();
        assert!(matches!(
            classify_ground(&m, &spec),
            Err(Error::AmbiguousGroundUse(_))
        ));
    }

    #[test]
    fn priority_resolves_overlap() {
        let text = model_json(
            "",
            r#"{"polygon": [[0,0],[40,0],[40,20],[0,20]], "class": "sidewalk", "priority": 1},
               {"polygon": [[20,0],[60,0],[60,20],[20,20]], "class": "road"}"#,
        );
        let m = load_urban_model(&text).unwrap();
        let spec = GridSpec2::new([1.0, 1.0], [2.0, 2.0], [30, 10]).unwrap();
        let g = classify_ground(&m, &spec).unwrap();
        assert_eq!(g.class(15, 5), GroundClass::Pedestrian);
        assert_eq!(g.class(25, 5), GroundClass::Vehicle);
    }

    #[test]
    fn rasterization_is_deterministic() {
        let m = prism_model();
        let spec = GridSpec3::new([1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [20, 20, 40]).unwrap();
        let a = rasterize_occupancy(&m, &spec, None).unwrap();
        let b = rasterize_occupancy(&m, &spec, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn refinement_never_unblocks_deep_interior_voxels() {
        // Halving the spacing must keep blocked every voxel whose coarse
        // center sits inside the prism interior by at least one fine spacing.
        let m = prism_model();
        let coarse = GridSpec3::new([1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [10, 10, 30]).unwrap();
        let fine = GridSpec3::new([0.5, 0.5, 0.5], [1.0, 1.0, 1.0], [20, 20, 60]).unwrap();
        let cmask = rasterize_occupancy(&m, &coarse, None).unwrap();
        let fmask = rasterize_occupancy(&m, &fine, None).unwrap();
        let margin = 1.0; // one fine spacing
        for k in 0..30 {
            for j in 0..10 {
                for i in 0..10 {
                    if !cmask.is_blocked(i, j, k) {
                        continue;
                    }
                    let [x, y, z] = coarse.voxel_center(i, j, k);
                    let deep = x >= margin
                        && x <= 10.0 - margin
                        && y >= margin
                        && y <= 10.0 - margin
                        && z <= 50.0 - margin;
                    if !deep {
                        continue;
                    }
                    // Fine voxel containing the coarse center.
                    let fi = ((x - 0.5) / 1.0).round() as usize;
                    let fj = ((y - 0.5) / 1.0).round() as usize;
                    let fk = ((z - 0.5) / 1.0).round() as usize;
                    assert!(
                        fmask.is_blocked(fi, fj, fk),
                        "refinement unblocked deep voxel at ({x}, {y}, {z})"
                    );
                }
            }
        }
    }

    #[test]
    fn elevation_raster_blocks_below_terrain() {
        let m = load_urban_model(&model_json("", "")).unwrap();
        let spec = GridSpec3::new([1.0, 1.0, 2.0], [2.0, 2.0, 2.0], [4, 1, 5]).unwrap();
        let elev = ScalarField2::new(spec.horizontal(), vec![0.0, 0.0, 6.0, 6.0]).unwrap();
        let mask = rasterize_occupancy(&m, &spec, Some(&elev)).unwrap();
        assert!(!mask.is_blocked(0, 0, 0));
        assert!(mask.is_blocked(2, 0, 0)); // z = 2 <= 6
        assert!(mask.is_blocked(2, 0, 2)); // z = 6 <= 6 (boundary inside)
        assert!(!mask.is_blocked(2, 0, 3)); // z = 8
    }
}
