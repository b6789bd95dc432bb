//! Quadrature on triangles, segments and convex polygons, in physical coordinates.

use crate::error::{Error, Result};
use crate::geometry::ConvexPolygon;
use crate::point::{signed_area, Point2, Triangle};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<Point2>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate<F: Fn(Point2) -> f64>(&self, f: F) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Point2, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    fn extend(&mut self, other: QuadratureRule) {
        self.points.extend(other.points);
        self.weights.extend(other.weights);
    }
}

// Barycentric points and weights normalized to sum 1.
const TRI_DEG2_A: f64 = 2.0 / 3.0;
const TRI_DEG2_B: f64 = 1.0 / 6.0;

// Six-point degree-4 rule (Dunavant).
const TRI_DEG4_A1: f64 = 0.445_948_490_915_965;
const TRI_DEG4_W1: f64 = 0.223_381_589_678_011;
const TRI_DEG4_A2: f64 = 0.091_576_213_509_771;
const TRI_DEG4_W2: f64 = 0.109_951_743_655_322;

fn reference_triangle_rule(degree: usize) -> Result<Vec<([f64; 3], f64)>> {
    Ok(match degree {
        1 => vec![([1.0 / 3.0; 3], 1.0)],
        2 => {
            let (a, b) = (TRI_DEG2_A, TRI_DEG2_B);
            vec![([a, b, b], 1.0 / 3.0), ([b, a, b], 1.0 / 3.0), ([b, b, a], 1.0 / 3.0)]
        }
        // the degree-4 rule also serves degree 3 with positive weights
        3 | 4 => {
            let (a1, a2) = (TRI_DEG4_A1, TRI_DEG4_A2);
            let (b1, b2) = (1.0 - 2.0 * a1, 1.0 - 2.0 * a2);
            vec![
                ([b1, a1, a1], TRI_DEG4_W1),
                ([a1, b1, a1], TRI_DEG4_W1),
                ([a1, a1, b1], TRI_DEG4_W1),
                ([b2, a2, a2], TRI_DEG4_W2),
                ([a2, b2, a2], TRI_DEG4_W2),
                ([a2, a2, b2], TRI_DEG4_W2),
            ]
        }
        d => return Err(Error::UnsupportedDegree(d)),
    })
}

/// Rule exact for bivariate polynomials up to `degree` (1 to 4) on `tri`.
pub fn triangle_rule(tri: &Triangle, degree: usize) -> Result<QuadratureRule> {
    let area = signed_area(tri).abs();
    let reference = reference_triangle_rule(degree)?;
    let mut rule = QuadratureRule { points: Vec::with_capacity(reference.len()), weights: Vec::with_capacity(reference.len()) };
    for (l, w) in reference {
        rule.points.push(tri[0] * l[0] + tri[1] * l[1] + tri[2] * l[2]);
        rule.weights.push(w * area);
    }
    Ok(rule)
}

// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> &'static [(f64, f64)] {
    const G1: [(f64, f64); 1] = [(0.0, 2.0)];
    const G2: [(f64, f64); 2] = [(-0.577_350_269_189_625_8, 1.0), (0.577_350_269_189_625_8, 1.0)];
    const G3: [(f64, f64); 3] = [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];
    match n {
        1 => &G1,
        2 => &G2,
        _ => &G3,
    }
}

/// Gauss rule on the segment `[a, b]`, exact up to `degree` (1 to 5) along it.
pub fn segment_rule(a: Point2, b: Point2, degree: usize) -> Result<QuadratureRule> {
    if !(1..=5).contains(&degree) {
        return Err(Error::UnsupportedDegree(degree));
    }
    let len = a.dist(b);
    if len == 0.0 {
        return Err(Error::DegenerateSegment);
    }
    let nodes = gauss_legendre(degree / 2 + 1);
    Ok(QuadratureRule {
        points: nodes.iter().map(|&(s, _)| a.lerp(b, 0.5 * (s + 1.0))).collect(),
        weights: nodes.iter().map(|&(_, w)| 0.5 * w * len).collect(),
    })
}

/// Fan triangulation from vertex 0 with `triangle_rule` on each fan triangle.
/// An empty polygon yields an empty rule.
pub fn polygon_rule(poly: &ConvexPolygon, degree: usize) -> Result<QuadratureRule> {
    let v = poly.vertices();
    let mut rule = QuadratureRule::default();
    if poly.is_empty() {
        // still validate the degree
        reference_triangle_rule(degree)?;
        return Ok(rule);
    }
    for i in 1..v.len() - 1 {
        let tri = [v[0], v[i], v[i + 1]];
        if signed_area(&tri) > 0.0 {
            rule.extend(triangle_rule(&tri, degree)?);
        }
    }
    Ok(rule)
}
