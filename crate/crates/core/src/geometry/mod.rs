//! Cut geometry of a background mesh overlapped by a second mesh: cell
//! classification, overlap pieces and interface segments.

mod clip;
mod cut;

pub use clip::{clip_segment_triangle, clip_triangle_triangle, locate_point, segment_distance};
pub use cut::{
    build_cut_geometry, classify_cells, integrate_over_cut_part, CellClass, CellClassification, CutGeometry, InterfaceSegment, OverlapPiece,
};

use crate::point::Point2;

/// Absolute geometric tolerance; meshes are assumed to be O(1) in size.
pub const EPS_GEOM: f64 = 1e-10;

/// Relative area tolerance used to classify background cells.
pub const EPS_CLASS: f64 = 1e-9;

/// Convex polygon with counter-clockwise vertices. Fewer than three vertices
/// means empty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    /// Wraps a vertex loop without cleaning it; the caller guarantees convexity
    /// and counter-clockwise order.
    pub fn new(vertices: Vec<Point2>) -> Self {
        Self { vertices }
    }

    /// Drops duplicate and collinear vertices (within `EPS_GEOM`). Returns an
    /// empty polygon if nothing with positive area remains.
    pub fn cleaned(mut v: Vec<Point2>) -> Self {
        loop {
            let n = v.len();
            if n < 3 {
                return Self::default();
            }
            let mut drop = None;
            for i in 0..n {
                let prev = v[(i + n - 1) % n];
                let cur = v[i];
                let next = v[(i + 1) % n];
                if cur.dist(next) < EPS_GEOM {
                    drop = Some(i);
                    break;
                }
                let base = next - prev;
                let len = base.norm();
                if len < EPS_GEOM || (base.cross(cur - prev) / len).abs() < EPS_GEOM {
                    drop = Some(i);
                    break;
                }
            }
            match drop {
                Some(i) => {
                    v.remove(i);
                }
                None => break,
            }
        }
        let poly = Self { vertices: v };
        if poly.area() < EPS_GEOM * EPS_GEOM {
            Self::default()
        } else {
            poly
        }
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    /// Shoelace area.
    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        if v.len() < 3 {
            return 0.0;
        }
        0.5 * (0..v.len()).map(|i| v[i].cross(v[(i + 1) % v.len()])).sum::<f64>()
    }

    pub fn centroid(&self) -> Point2 {
        let v = &self.vertices;
        let n = v.len() as f64;
        v.iter().fold(Point2::default(), |acc, &p| acc + p) * (1.0 / n)
    }
}
