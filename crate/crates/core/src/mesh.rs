//! Triangle meshes with facet connectivity.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::point::{signed_area, triangle_diameter, Aabb, Point2, Triangle};

/// An edge of the mesh with its incident cells.
///
/// `cells[k]` is `(cell, local_facet)`, where local facet `i` is the edge
/// opposite local vertex `i`. The vertex order follows the first incident
/// cell, so for a boundary facet `vertices[0] -> vertices[1]` runs
/// counter-clockwise around the mesh and the outward normal is on its right.
#[derive(Clone, Debug, PartialEq)]
pub struct Facet {
    pub vertices: [usize; 2],
    pub cells: [Option<(usize, usize)>; 2],
}

impl Facet {
    pub fn is_boundary(&self) -> bool {
        self.cells[1].is_none()
    }
}

#[derive(Clone, Debug)]
pub struct SimplicialMesh {
    vertices: Vec<Point2>,
    cells: Vec<[usize; 3]>,
    facets: Vec<Facet>,
    cell_facets: Vec<[usize; 3]>,
    boundary_facets: Vec<usize>,
}

impl SimplicialMesh {
    /// Builds a mesh and its facet connectivity. Cells must be counter-clockwise.
    pub fn new(vertices: Vec<Point2>, cells: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        for (c, cell) in cells.iter().enumerate() {
            if let Some(&bad) = cell.iter().find(|&&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("cell {c} references vertex {bad} of {nv}")));
            }
            let tri = [vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]];
            let area = signed_area(&tri);
            if !(area > 0.0) {
                return Err(Error::InvalidMesh(format!("cell {c} has non-positive signed area {area:e}")));
            }
        }

        let mut facets: Vec<Facet> = Vec::with_capacity(cells.len() * 2);
        let mut cell_facets = vec![[usize::MAX; 3]; cells.len()];
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(cells.len() * 2);
        for (c, cell) in cells.iter().enumerate() {
            for local in 0..3 {
                let a = cell[(local + 1) % 3];
                let b = cell[(local + 2) % 3];
                let key = (a.min(b), a.max(b));
                match lookup.get(&key) {
                    Some(&f) => {
                        if facets[f].cells[1].is_some() {
                            return Err(Error::InvalidMesh(format!("edge ({a}, {b}) shared by more than two cells")));
                        }
                        facets[f].cells[1] = Some((c, local));
                        cell_facets[c][local] = f;
                    }
                    None => {
                        let f = facets.len();
                        facets.push(Facet { vertices: [a, b], cells: [Some((c, local)), None] });
                        lookup.insert(key, f);
                        cell_facets[c][local] = f;
                    }
                }
            }
        }
        let boundary_facets = (0..facets.len()).filter(|&f| facets[f].is_boundary()).collect();

        Ok(Self { vertices, cells, facets, cell_facets, boundary_facets })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Facet ids of the three local facets of `cell`.
    pub fn cell_facets(&self, cell: usize) -> [usize; 3] {
        self.cell_facets[cell]
    }

    pub fn triangle(&self, cell: usize) -> Triangle {
        let c = self.cells[cell];
        [self.vertices[c[0]], self.vertices[c[1]], self.vertices[c[2]]]
    }

    pub fn checked_triangle(&self, cell: usize) -> Result<Triangle> {
        if cell >= self.cells.len() {
            return Err(Error::OutOfRange { index: cell, len: self.cells.len() });
        }
        Ok(self.triangle(cell))
    }

    pub fn cell_area(&self, cell: usize) -> f64 {
        signed_area(&self.triangle(cell))
    }

    /// Largest vertex-to-vertex distance of the cell.
    pub fn cell_diameter(&self, cell: usize) -> Result<f64> {
        Ok(triangle_diameter(&self.checked_triangle(cell)?))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.cell_area(c)).sum()
    }

    pub fn facet_points(&self, facet: usize) -> (Point2, Point2) {
        let [a, b] = self.facets[facet].vertices;
        (self.vertices[a], self.vertices[b])
    }

    pub fn facet_length(&self, facet: usize) -> f64 {
        let (a, b) = self.facet_points(facet);
        a.dist(b)
    }

    /// Facets with exactly one incident cell.
    pub fn boundary_facets(&self) -> &[usize] {
        &self.boundary_facets
    }

    /// Unit normal of a boundary facet pointing out of the mesh.
    pub fn outward_normal(&self, facet: usize) -> Point2 {
        let (a, b) = self.facet_points(facet);
        let t = b - a;
        Point2::new(t.y, -t.x) * (1.0 / t.norm())
    }

    pub fn boundary_length(&self) -> f64 {
        self.boundary_facets.iter().map(|&f| self.facet_length(f)).sum()
    }

    /// Flags vertices lying on a boundary facet.
    pub fn boundary_vertex_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.num_vertices()];
        for &f in &self.boundary_facets {
            for v in self.facets[f].vertices {
                mask[v] = true;
            }
        }
        mask
    }

    pub fn cell_bbox(&self, cell: usize) -> Aabb {
        Aabb::from_points(&self.triangle(cell))
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub fn h_max(&self) -> f64 {
        (0..self.num_cells()).map(|c| triangle_diameter(&self.triangle(c))).fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        (0..self.num_cells()).map(|c| triangle_diameter(&self.triangle(c))).fold(f64::INFINITY, f64::min)
    }

    /// Reads the plain-ASCII format: `nv nc`, then `nv` lines `x y`, then `nc`
    /// lines `i j k` with 0-based vertex indices.
    pub fn read_ascii<R: BufRead>(reader: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in reader.lines() {
            let line = line?;
            tokens.extend(line.split_whitespace().map(str::to_owned));
        }
        let mut it = tokens.into_iter();
        let mut next = |what: &str| it.next().ok_or_else(|| Error::Parse(format!("unexpected end of input reading {what}")));
        let parse_usize = |s: String| s.parse::<usize>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
        let parse_f64 = |s: String| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));

        let nv = parse_usize(next("vertex count")?)?;
        let nc = parse_usize(next("cell count")?)?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let x = parse_f64(next("x")?)?;
            let y = parse_f64(next("y")?)?;
            vertices.push(Point2::new(x, y));
        }
        let mut cells = Vec::with_capacity(nc);
        for _ in 0..nc {
            let i = parse_usize(next("cell")?)?;
            let j = parse_usize(next("cell")?)?;
            let k = parse_usize(next("cell")?)?;
            cells.push([i, j, k]);
        }
        if next("trailing").is_ok() {
            return Err(Error::Parse("trailing data after last cell".into()));
        }
        Self::new(vertices, cells)
    }

    pub fn write_ascii<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.num_vertices(), self.num_cells())?;
        for p in &self.vertices {
            writeln!(w, "{:e} {:e}", p.x, p.y)?;
        }
        for c in &self.cells {
            writeln!(w, "{} {} {}", c[0], c[1], c[2])?;
        }
        Ok(())
    }
}

/// Structured triangulation of an axis-aligned box: `nx * ny` squares, each
/// split along its lower-left to upper-right diagonal.
pub fn build_structured_square_mesh(corner_min: Point2, corner_max: Point2, nx: usize, ny: usize) -> Result<SimplicialMesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(format!("subdivisions must be positive, got {nx}x{ny}")));
    }
    if !(corner_min.x < corner_max.x && corner_min.y < corner_max.y) {
        return Err(Error::InvalidArgument(format!("degenerate box {corner_min:?}..{corner_max:?}")));
    }
    let dx = (corner_max.x - corner_min.x) / nx as f64;
    let dy = (corner_max.y - corner_min.y) / ny as f64;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        // hit the far corner exactly
        let y = if j == ny { corner_max.y } else { corner_min.y + j as f64 * dy };
        for i in 0..=nx {
            let x = if i == nx { corner_max.x } else { corner_min.x + i as f64 * dx };
            vertices.push(Point2::new(x, y));
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            cells.push([v00, v10, v11]);
            cells.push([v00, v11, v01]);
        }
    }
    SimplicialMesh::new(vertices, cells)
}

/// Rigid motion: rotate about `center`, then translate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshTransform {
    pub rotation_angle: f64,
    pub center: Point2,
    pub translation: Point2,
}

impl MeshTransform {
    pub fn rotation(angle: f64, center: Point2) -> Self {
        Self { rotation_angle: angle, center, translation: Point2::default() }
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.rotation_angle.sin_cos();
        [[c, -s], [s, c]]
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let r = self.matrix();
        let d = p - self.center;
        Point2::new(r[0][0] * d.x + r[0][1] * d.y, r[1][0] * d.x + r[1][1] * d.y) + self.center + self.translation
    }
}

pub fn transform_mesh(mesh: &SimplicialMesh, t: &MeshTransform) -> SimplicialMesh {
    let mut out = mesh.clone();
    for p in &mut out.vertices {
        *p = t.apply(*p);
    }
    out
}
