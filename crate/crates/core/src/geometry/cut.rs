use std::fmt::Write as _;
use std::ops::Range;

use super::{clip_segment_triangle, clip_triangle_triangle, locate_point, segment_distance, ConvexPolygon, EPS_CLASS, EPS_GEOM};
use crate::error::{Error, Result};
use crate::mesh::SimplicialMesh;
use crate::par;
use crate::point::{barycentric, triangle_diameter, Aabb, Point2};
use crate::quadrature::{polygon_rule, triangle_rule, QuadratureRule};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellClass {
    NotOverlapped,
    FullyOverlapped,
    PartiallyOverlapped,
}

/// Partition of the background cells by how much of each is covered by the
/// overlapping domain.
#[derive(Clone, Debug)]
pub struct CellClassification {
    pub not_overlapped: Vec<usize>,
    pub fully_overlapped: Vec<usize>,
    pub partially_overlapped: Vec<usize>,
    classes: Vec<CellClass>,
    overlap_area: Vec<f64>,
}

impl CellClassification {
    pub fn class(&self, cell: usize) -> CellClass {
        self.classes[cell]
    }

    /// `|T ∩ Ω_2|` as computed by clipping against every overlapping cell.
    pub fn overlap_area(&self, cell: usize) -> f64 {
        self.overlap_area[cell]
    }

    /// True for cells kept in the active background mesh (not fully overlapped).
    pub fn is_active(&self, cell: usize) -> bool {
        self.classes[cell] != CellClass::FullyOverlapped
    }

    pub fn num_cells(&self) -> usize {
        self.classes.len()
    }
}

/// Intersection of one active background cell with one overlapping cell.
#[derive(Clone, Debug)]
pub struct OverlapPiece {
    pub bg_cell: usize,
    pub ov_cell: usize,
    pub polygon: ConvexPolygon,
}

/// A piece of the overlapping mesh boundary that lies inside a single
/// background cell.
#[derive(Clone, Debug)]
pub struct InterfaceSegment {
    pub endpoints: [Point2; 2],
    pub bg_cell: usize,
    pub ov_cell: usize,
    pub ov_facet: usize,
    /// Unit normal pointing out of the overlapping domain.
    pub normal: Point2,
    /// Diameter of `ov_cell`.
    pub h_penalty: f64,
}

impl InterfaceSegment {
    pub fn length(&self) -> f64 {
        self.endpoints[0].dist(self.endpoints[1])
    }

    pub fn midpoint(&self) -> Point2 {
        (self.endpoints[0] + self.endpoints[1]) * 0.5
    }
}

#[derive(Clone, Debug)]
pub struct CutGeometry {
    pub classification: CellClassification,
    pub overlap_pieces: Vec<OverlapPiece>,
    pub interface_segments: Vec<InterfaceSegment>,
    /// Not-overlapped and partially overlapped background cells, ascending.
    pub t1_star_cells: Vec<usize>,
    piece_ranges: Vec<Range<usize>>,
}

impl CutGeometry {
    /// Overlap pieces belonging to a background cell.
    pub fn pieces_of(&self, bg_cell: usize) -> &[OverlapPiece] {
        &self.overlap_pieces[self.piece_ranges[bg_cell].clone()]
    }

    pub fn overlap_area_total(&self) -> f64 {
        self.overlap_pieces.iter().map(|p| p.polygon.area()).sum()
    }

    pub fn interface_length(&self) -> f64 {
        self.interface_segments.iter().map(InterfaceSegment::length).sum()
    }

    /// Largest ratio between the overlapping and background cell sizes over
    /// cell pairs meeting on the interface (always >= 1).
    pub fn mesh_size_ratio(&self, bg: &SimplicialMesh) -> f64 {
        self.interface_segments
            .iter()
            .map(|s| {
                let hb = triangle_diameter(&bg.triangle(s.bg_cell));
                (s.h_penalty / hb).max(hb / s.h_penalty)
            })
            .fold(1.0, f64::max)
    }

    /// Signed rules integrating over `T ∩ Ω_1` for an active background cell:
    /// the full cell with sign +1 and each overlap piece with sign -1.
    pub fn cut_cell_rules(&self, bg: &SimplicialMesh, cell: usize, degree: usize) -> Result<Vec<(QuadratureRule, f64)>> {
        if cell >= self.classification.num_cells() {
            return Err(Error::OutOfRange { index: cell, len: self.classification.num_cells() });
        }
        if !self.classification.is_active(cell) {
            return Err(Error::InactiveCell(cell));
        }
        let mut rules = vec![(triangle_rule(&bg.triangle(cell), degree)?, 1.0)];
        for piece in self.pieces_of(cell) {
            rules.push((polygon_rule(&piece.polygon, degree)?, -1.0));
        }
        Ok(rules)
    }

    /// Samples points on both sides of each interface segment and counts the
    /// segments whose normal does not point from the overlapping domain into
    /// the background-only region.
    pub fn count_misoriented_normals(
        &self,
        ov: &SimplicialMesh,
        delta: f64,
        samples_per_segment: usize,
        mut next_unit: impl FnMut() -> f64,
    ) -> usize {
        let mut bad = 0;
        for s in &self.interface_segments {
            for _ in 0..samples_per_segment.max(1) {
                let t = 0.05 + 0.9 * next_unit();
                let p = s.endpoints[0].lerp(s.endpoints[1], t);
                let outside = locate_point(ov, p + s.normal * delta).is_none();
                let inside = locate_point(ov, p - s.normal * delta).is_some();
                if !(outside && inside) {
                    bad += 1;
                    break;
                }
            }
        }
        bad
    }

    /// CSV dumps of the overlap pieces (one row per polygon vertex) and the
    /// interface segments.
    pub fn to_csv(&self) -> (String, String) {
        let mut pieces = String::from("piece,bg_cell,ov_cell,vertex,x,y\n");
        for (k, p) in self.overlap_pieces.iter().enumerate() {
            for (i, v) in p.polygon.vertices().iter().enumerate() {
                let _ = writeln!(pieces, "{k},{},{},{i},{},{}", p.bg_cell, p.ov_cell, v.x, v.y);
            }
        }
        let mut segments = String::from("bg_cell,ov_cell,ov_facet,x0,y0,x1,y1,nx,ny,h_penalty\n");
        for s in &self.interface_segments {
            let [a, b] = s.endpoints;
            let _ = writeln!(
                segments,
                "{},{},{},{},{},{},{},{},{},{}",
                s.bg_cell, s.ov_cell, s.ov_facet, a.x, a.y, b.x, b.y, s.normal.x, s.normal.y, s.h_penalty
            );
        }
        (pieces, segments)
    }
}

fn check_strictly_inside(bg: &SimplicialMesh, ov: &SimplicialMesh, covered_area: f64) -> Result<()> {
    let ov_area = ov.total_area();
    if (covered_area - ov_area).abs() > EPS_CLASS * ov_area {
        return Err(Error::NotInside(format!("only {covered_area:e} of {ov_area:e} lies in the background domain")));
    }
    for &fo in ov.boundary_facets() {
        let (a, b) = ov.facet_points(fo);
        for &fb in bg.boundary_facets() {
            let (c, d) = bg.facet_points(fb);
            if segment_distance(a, b, c, d) <= EPS_GEOM {
                return Err(Error::NotInside(format!("interface facet {fo} touches the outer boundary")));
            }
        }
    }
    Ok(())
}

/// Non-empty intersections of each background cell with the overlapping cells.
fn clip_all(bg: &SimplicialMesh, ov: &SimplicialMesh) -> Result<Vec<Vec<(usize, ConvexPolygon)>>> {
    let ov_boxes: Vec<Aabb> = (0..ov.num_cells()).map(|c| ov.cell_bbox(c)).collect();
    let per_cell = par::map_range(bg.num_cells(), |cell| -> Result<Vec<(usize, ConvexPolygon)>> {
        let t = bg.triangle(cell);
        let bb = Aabb::from_points(&t);
        let mut out = Vec::new();
        for (k, obb) in ov_boxes.iter().enumerate() {
            if !bb.overlaps(obb, EPS_GEOM) {
                continue;
            }
            let poly = clip_triangle_triangle(&t, &ov.triangle(k))?;
            if !poly.is_empty() {
                out.push((k, poly));
            }
        }
        Ok(out)
    });
    per_cell.into_iter().collect()
}

fn classify_from_clips(bg: &SimplicialMesh, clips: &[Vec<(usize, ConvexPolygon)>]) -> CellClassification {
    let mut c = CellClassification {
        not_overlapped: Vec::new(),
        fully_overlapped: Vec::new(),
        partially_overlapped: Vec::new(),
        classes: Vec::with_capacity(clips.len()),
        overlap_area: Vec::with_capacity(clips.len()),
    };
    for (cell, pieces) in clips.iter().enumerate() {
        let area: f64 = pieces.iter().map(|(_, p)| p.area()).sum();
        let ratio = area / bg.cell_area(cell);
        let class = if ratio <= EPS_CLASS {
            c.not_overlapped.push(cell);
            CellClass::NotOverlapped
        } else if ratio >= 1.0 - EPS_CLASS {
            c.fully_overlapped.push(cell);
            CellClass::FullyOverlapped
        } else {
            c.partially_overlapped.push(cell);
            CellClass::PartiallyOverlapped
        };
        c.classes.push(class);
        c.overlap_area.push(area);
    }
    c
}

/// Splits the background cells into not, fully and partially overlapped sets
/// using the clipped overlap area of each cell.
pub fn classify_cells(bg: &SimplicialMesh, ov: &SimplicialMesh) -> Result<CellClassification> {
    let clips = clip_all(bg, ov)?;
    let classification = classify_from_clips(bg, &clips);
    check_strictly_inside(bg, ov, classification.overlap_area.iter().sum())?;
    Ok(classification)
}

/// Pieces lying in a sliver dropped by the classification threshold go to the
/// neighbouring active cell.
const EPS_SLIVER: f64 = 1e-4;

/// Lowest-id active cell containing `p`, else the active cell that comes
/// closest in barycentric terms, provided it is within `EPS_SLIVER`.
fn locate_active(bg: &SimplicialMesh, classification: &CellClassification, p: Point2) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for c in (0..bg.num_cells()).filter(|&c| classification.is_active(c)) {
        let bb = bg.cell_bbox(c);
        let reach = EPS_SLIVER * (bb.max - bb.min).norm();
        if !bb.contains(p, reach) {
            continue;
        }
        let worst = barycentric(&bg.triangle(c), p).into_iter().fold(f64::INFINITY, f64::min);
        if worst >= -EPS_GEOM {
            return Some(c);
        }
        if best.is_none_or(|(_, w)| worst > w) {
            best = Some((c, worst));
        }
    }
    best.filter(|&(_, w)| w >= -EPS_SLIVER).map(|(c, w)| {
        log::debug!("interface piece at ({}, {}) assigned to cell {c} (barycentric {w:e})", p.x, p.y);
        c
    })
}

/// Breaks a boundary facet of the overlapping mesh at every background-cell
/// crossing and assigns each piece to an active background cell.
fn split_facet(
    bg: &SimplicialMesh,
    classification: &CellClassification,
    ov: &SimplicialMesh,
    facet: usize,
) -> Result<Vec<InterfaceSegment>> {
    let (a, b) = ov.facet_points(facet);
    let len = a.dist(b);
    let ov_cell = ov.facets()[facet].cells[0].expect("boundary facet has a cell").0;
    let normal = ov.outward_normal(facet);
    let h_penalty = triangle_diameter(&ov.triangle(ov_cell));
    let seg_box = Aabb::from_points(&[a, b]);

    let mut breaks = vec![0.0, 1.0];
    for cell in 0..bg.num_cells() {
        if !bg.cell_bbox(cell).overlaps(&seg_box, EPS_GEOM) {
            continue;
        }
        if let Some((t0, t1)) = clip_segment_triangle(a, b, &bg.triangle(cell)) {
            breaks.push(t0.clamp(0.0, 1.0));
            breaks.push(t1.clamp(0.0, 1.0));
        }
    }
    breaks.sort_by(f64::total_cmp);
    // the clipper pads triangles by EPS_GEOM, which leaves near-duplicate breaks at crossings
    let tol = 100.0 * EPS_GEOM / len;
    let mut ts: Vec<f64> = Vec::with_capacity(breaks.len());
    for t in breaks {
        if ts.last().is_none_or(|&last| t - last > tol) {
            ts.push(t);
        }
    }
    // keep the facet end exactly
    if let Some(last) = ts.last_mut() {
        *last = 1.0;
    }

    let mut out = Vec::with_capacity(ts.len() - 1);
    for w in ts.windows(2) {
        let (p, q) = (a.lerp(b, w[0]), a.lerp(b, w[1]));
        let mid = (p + q) * 0.5;
        let bg_cell = locate_active(bg, classification, mid).ok_or(Error::SegmentNotLocated { facet })?;
        out.push(InterfaceSegment { endpoints: [p, q], bg_cell, ov_cell, ov_facet: facet, normal, h_penalty });
    }
    Ok(out)
}

/// Builds the full cut geometry: classification, overlap pieces of the
/// partially overlapped cells and the interface segments.
pub fn build_cut_geometry(bg: &SimplicialMesh, ov: &SimplicialMesh) -> Result<CutGeometry> {
    let clips = clip_all(bg, ov)?;
    let classification = classify_from_clips(bg, &clips);
    check_strictly_inside(bg, ov, classification.overlap_area.iter().sum())?;

    let mut overlap_pieces = Vec::new();
    let mut piece_ranges = Vec::with_capacity(bg.num_cells());
    for (cell, pieces) in clips.into_iter().enumerate() {
        let start = overlap_pieces.len();
        if classification.class(cell) == CellClass::PartiallyOverlapped {
            overlap_pieces.extend(pieces.into_iter().map(|(ov_cell, polygon)| OverlapPiece { bg_cell: cell, ov_cell, polygon }));
        }
        piece_ranges.push(start..overlap_pieces.len());
    }

    let segments = par::map_slice(ov.boundary_facets(), |&f| split_facet(bg, &classification, ov, f));
    let mut interface_segments = Vec::new();
    for s in segments {
        interface_segments.extend(s?);
    }

    let t1_star_cells = (0..bg.num_cells()).filter(|&c| classification.is_active(c)).collect();
    let geom = CutGeometry { classification, overlap_pieces, interface_segments, t1_star_cells, piece_ranges };

    let ratio = geom.mesh_size_ratio(bg);
    if ratio > 10.0 {
        log::warn!("mesh sizes across the interface differ by a factor {ratio:.2}");
    }
    Ok(geom)
}

/// `∫_{T ∩ Ω_1} f` for an active background cell, computed as the integral
/// over the whole cell minus the integrals over its overlap pieces.
pub fn integrate_over_cut_part<F: Fn(Point2) -> f64>(
    bg: &SimplicialMesh,
    geom: &CutGeometry,
    cell: usize,
    degree: usize,
    f: F,
) -> Result<f64> {
    Ok(geom.cut_cell_rules(bg, cell, degree)?.iter().map(|(rule, sign)| sign * rule.integrate(&f)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_square_mesh, transform_mesh, MeshTransform};

    fn boxed(lo: f64, hi: f64, n: usize) -> SimplicialMesh {
        build_structured_square_mesh(Point2::new(lo, lo), Point2::new(hi, hi), n, n).unwrap()
    }

    #[test]
    fn coarse_box_all_partial() {
        let bg = boxed(0.0, 1.0, 2);
        let ov = boxed(0.25, 0.75, 1);
        let c = classify_cells(&bg, &ov).unwrap();
        // two cells meet the box only at a corner point
        assert_eq!(c.partially_overlapped.len(), 6);
        assert_eq!(c.not_overlapped, vec![2, 5]);
        assert!(c.fully_overlapped.is_empty());

        let g = build_cut_geometry(&bg, &ov).unwrap();
        assert!((g.interface_length() - 2.0).abs() < 1e-12);
        assert!((g.overlap_area_total() - 0.25).abs() < 1e-12);
        assert_eq!(g.t1_star_cells.len(), 8);
    }

    #[test]
    fn coincident_domain_rejected() {
        let bg = boxed(0.0, 1.0, 3);
        let ov = boxed(0.0, 1.0, 2);
        assert!(matches!(classify_cells(&bg, &ov), Err(Error::NotInside(_))));
        let outside = boxed(0.5, 1.5, 2);
        assert!(matches!(build_cut_geometry(&bg, &outside), Err(Error::NotInside(_))));
    }

    #[test]
    fn cut_integrals() {
        let bg = boxed(0.0, 1.0, 2);
        let ov = boxed(0.25, 0.75, 1);
        let g = build_cut_geometry(&bg, &ov).unwrap();
        for &c in &g.t1_star_cells {
            let a = integrate_over_cut_part(&bg, &g, c, 1, |_| 1.0).unwrap();
            assert!((a - (bg.cell_area(c) - g.classification.overlap_area(c))).abs() < 1e-12);
        }
        let sx: f64 = g.t1_star_cells.iter().map(|&c| integrate_over_cut_part(&bg, &g, c, 2, |p| p.x).unwrap()).sum();
        assert!((sx - 0.375).abs() < 1e-12);

        let bg = boxed(0.0, 1.0, 10);
        let g = build_cut_geometry(&bg, &ov).unwrap();
        let c = g.classification.not_overlapped[0];
        assert!((integrate_over_cut_part(&bg, &g, c, 1, |_| 1.0).unwrap() - bg.cell_area(c)).abs() < 1e-15);
        let full = g.classification.fully_overlapped[0];
        assert!(matches!(integrate_over_cut_part(&bg, &g, full, 1, |_| 1.0), Err(Error::InactiveCell(_))));
    }

    #[test]
    fn interface_on_background_edges() {
        // Γ runs exactly along background facets
        let bg = boxed(0.0, 1.0, 4);
        let ov = boxed(0.25, 0.75, 3);
        let g = build_cut_geometry(&bg, &ov).unwrap();
        assert!(g.classification.partially_overlapped.is_empty());
        assert_eq!(g.classification.fully_overlapped.len(), 8);
        assert!(g.overlap_pieces.is_empty());
        assert!((g.interface_length() - 2.0).abs() < 1e-12);
        for s in &g.interface_segments {
            assert_eq!(g.classification.class(s.bg_cell), CellClass::NotOverlapped);
        }
    }

    #[test]
    fn segments_tile_each_facet_and_normals_point_out() {
        let bg = boxed(0.0, 1.0, 7);
        let ov = transform_mesh(&boxed(0.3, 0.7, 3), &MeshTransform::rotation(0.4, Point2::new(0.5, 0.5)));
        let g = build_cut_geometry(&bg, &ov).unwrap();
        assert!(((g.interface_length() - ov.boundary_length()) / ov.boundary_length()).abs() < 1e-12);
        for &f in ov.boundary_facets() {
            let segs: Vec<_> = g.interface_segments.iter().filter(|s| s.ov_facet == f).collect();
            let (a, b) = ov.facet_points(f);
            assert!(segs[0].endpoints[0].dist(a) < EPS_GEOM);
            assert!(segs.last().unwrap().endpoints[1].dist(b) < EPS_GEOM);
            for w in segs.windows(2) {
                assert!(w[0].endpoints[1].dist(w[1].endpoints[0]) < EPS_GEOM);
            }
            for s in segs {
                let l = barycentric(&bg.triangle(s.bg_cell), s.midpoint());
                assert!(l.iter().all(|&x| x >= -EPS_GEOM));
                assert!((s.normal.norm() - 1.0).abs() < 1e-14);
                assert!(s.normal.dot(s.endpoints[1] - s.endpoints[0]).abs() < 1e-14);
            }
        }
        let mut k = 0u64;
        let bad = g.count_misoriented_normals(&ov, 1e-6, 3, || {
            k += 1;
            (k as f64 * 0.618_033_988_75).fract()
        });
        assert_eq!(bad, 0);
        assert!(g.mesh_size_ratio(&bg) < 10.0);
    }

    #[test]
    fn csv_dump_has_headers() {
        let g = build_cut_geometry(&boxed(0.0, 1.0, 2), &boxed(0.25, 0.75, 1)).unwrap();
        let (p, s) = g.to_csv();
        assert!(p.starts_with("piece,bg_cell,ov_cell,vertex,x,y\n"));
        assert_eq!(s.lines().count(), 1 + g.interface_segments.len());
    }
}
