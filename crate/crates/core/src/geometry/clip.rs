use super::{ConvexPolygon, EPS_GEOM};
use crate::error::{Error, Result};
use crate::mesh::SimplicialMesh;
use crate::point::{barycentric, signed_area, Point2, Triangle};

fn counter_clockwise(t: &Triangle) -> Result<Triangle> {
    let a = signed_area(t);
    if a.abs() < EPS_GEOM * EPS_GEOM {
        return Err(Error::DegenerateTriangle(a));
    }
    Ok(if a > 0.0 { *t } else { [t[0], t[2], t[1]] })
}

/// Signed distance to the line through `p -> q`, positive on the left.
fn edge_distance(p: Point2, q: Point2) -> impl Fn(Point2) -> f64 {
    let e = q - p;
    let inv = 1.0 / e.norm();
    move |x| e.cross(x - p) * inv
}

fn clip_half_plane(poly: &[Point2], dist: impl Fn(Point2) -> f64) -> Vec<Point2> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..n {
        let cur = poly[k];
        let next = poly[(k + 1) % n];
        let (dc, dn) = (dist(cur), dist(next));
        if dc >= -EPS_GEOM {
            out.push(cur);
        }
        if (dc > EPS_GEOM && dn < -EPS_GEOM) || (dc < -EPS_GEOM && dn > EPS_GEOM) {
            out.push(cur.lerp(next, dc / (dc - dn)));
        }
    }
    out
}

/// Intersection of two triangles by successive half-plane clipping of `t1`
/// against the edges of `t2`. Orientation of the inputs is irrelevant.
pub fn clip_triangle_triangle(t1: &Triangle, t2: &Triangle) -> Result<ConvexPolygon> {
    let a = counter_clockwise(t1)?;
    let b = counter_clockwise(t2)?;
    let mut poly = a.to_vec();
    for i in 0..3 {
        poly = clip_half_plane(&poly, edge_distance(b[i], b[(i + 1) % 3]));
        if poly.len() < 3 {
            return Ok(ConvexPolygon::default());
        }
    }
    Ok(ConvexPolygon::cleaned(poly))
}

/// Parameter interval `[t0, t1]` of the segment `a + t (b - a)` inside `tri`,
/// or `None` if the overlap is shorter than the geometric tolerance.
pub fn clip_segment_triangle(a: Point2, b: Point2, tri: &Triangle) -> Option<(f64, f64)> {
    let tri = counter_clockwise(tri).ok()?;
    let len = a.dist(b);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for i in 0..3 {
        let d = edge_distance(tri[i], tri[(i + 1) % 3]);
        let (da, db) = (d(a), d(b));
        let slope = db - da;
        if slope.abs() < 1e-300 {
            if da < -EPS_GEOM {
                return None;
            }
            continue;
        }
        // da + t * slope >= -EPS_GEOM
        let t = (-EPS_GEOM - da) / slope;
        if slope > 0.0 {
            t0 = t0.max(t);
        } else {
            t1 = t1.min(t);
        }
        if (t1 - t0) * len <= EPS_GEOM {
            return None;
        }
    }
    Some((t0.max(0.0), t1.min(1.0)))
}

/// Lowest-numbered cell whose barycentric coordinates at `p` are all `>= -EPS_GEOM`.
pub fn locate_point(mesh: &SimplicialMesh, p: Point2) -> Option<usize> {
    (0..mesh.num_cells())
        .find(|&c| mesh.cell_bbox(c).contains(p, EPS_GEOM) && barycentric(&mesh.triangle(c), p).iter().all(|&l| l >= -EPS_GEOM))
}

/// Euclidean distance between segments `[a, b]` and `[c, d]`.
pub fn segment_distance(a: Point2, b: Point2, c: Point2, d: Point2) -> f64 {
    let orient = |p: Point2, q: Point2, r: Point2| (q - p).cross(r - p);
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return 0.0;
    }
    let point_seg = |p: Point2, s: Point2, e: Point2| {
        let v = e - s;
        let t = ((p - s).dot(v) / v.dot(v)).clamp(0.0, 1.0);
        p.dist(s + v * t)
    };
    point_seg(a, c, d).min(point_seg(b, c, d)).min(point_seg(c, a, b)).min(point_seg(d, a, b))
}
