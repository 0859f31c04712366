use crate::error::{Error, Result};

/// Simple (non-self-intersecting) polygon in the local metric frame.
///
/// The ring is stored open (no repeated closing vertex). Containment treats
/// the boundary as inside, which is the tie-break rule used for voxel-center
/// membership throughout the engine.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    points: Vec<[f64; 2]>,
}

#[derive(Clone, Copy, PartialEq)]
enum Orient {
    Collinear,
    Clockwise,
    Counter,
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Orient {
    let v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    if v == 0.0 {
        Orient::Collinear
    } else if v > 0.0 {
        Orient::Counter
    } else {
        Orient::Clockwise
    }
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    orient(a, b, p) == Orient::Collinear
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

/// Whether segments (a,b) and (c,d) share any point.
fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if o1 != o2 && o3 != o4 {
        return true;
    }
    on_segment(a, b, c) || on_segment(a, b, d) || on_segment(c, d, a) || on_segment(c, d, b)
}

impl Polygon {
    /// Build a polygon from a ring of vertices. A repeated closing vertex is
    /// accepted and dropped. Rejects rings with fewer than 3 distinct
    /// vertices, non-finite coordinates, repeated consecutive vertices, zero
    /// area, or self-intersections.
    pub fn new(mut points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() >= 2 && points.first() == points.last() {
            points.pop();
        }
        if points.len() < 3 {
            return Err(Error::Geometry(format!(
                "polygon needs at least 3 distinct vertices, got {}",
                points.len()
            )));
        }
        for p in &points {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::Geometry("polygon vertices must be finite".into()));
            }
        }
        let n = points.len();
        for i in 0..n {
            if points[i] == points[(i + 1) % n] {
                return Err(Error::Geometry(format!(
                    "repeated consecutive vertex at index {i}"
                )));
            }
        }
        let poly = Self { points };
        if poly.signed_area() == 0.0 {
            return Err(Error::Geometry("polygon has zero area".into()));
        }
        poly.check_simple()?;
        Ok(poly)
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Axis-aligned rectangle helper: `[x0, y0] .. [x1, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    /// Shoelace area; sign carries winding, callers usually want `abs`.
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        let mut acc = 0.0;
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            acc += a[0] * b[1] - b[0] * a[1];
        }
        acc / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn bbox(&self) -> [f64; 4] {
        let mut bb = [
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        ];
        for p in &self.points {
            bb[0] = bb[0].min(p[0]);
            bb[1] = bb[1].min(p[1]);
            bb[2] = bb[2].max(p[0]);
            bb[3] = bb[3].max(p[1]);
        }
        bb
    }

    /// Point-in-polygon with boundary counted as inside.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let n = self.points.len();
        for i in 0..n {
            if on_segment(self.points[i], self.points[(i + 1) % n], p) {
                return true;
            }
        }
        // Even-odd crossing count with half-open vertical rule; vertices on
        // the test ray are handled consistently by the strict comparison.
        let mut inside = false;
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x_cross = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    fn check_simple(&self) -> Result<()> {
        let n = self.points.len();
        for i in 0..n {
            let (a, b) = (self.points[i], self.points[(i + 1) % n]);
            for j in (i + 1)..n {
                let (c, d) = (self.points[j], self.points[(j + 1) % n]);
                // Adjacent edges share one endpoint; the free endpoint of one
                // lying on the other means a spike or collinear overlap.
                let touches = if j == i + 1 {
                    on_segment(a, b, d) || on_segment(c, d, a)
                } else if i == 0 && j == n - 1 {
                    on_segment(a, b, c) || on_segment(c, d, b)
                } else {
                    segments_intersect(a, b, c, d)
                };
                if touches {
                    return Err(Error::Geometry(format!(
                        "self-intersecting polygon: edges {i} and {j} touch"
                    )));
                }
            }
        }
        Ok(())
    }
}
