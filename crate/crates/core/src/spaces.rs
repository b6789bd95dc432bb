//! Continuous P1 spaces on each mesh and the composite velocity/pressure space.

use crate::error::{Error, Result};
use crate::geometry::{CutGeometry, EPS_GEOM};
use crate::mesh::SimplicialMesh;
use crate::point::{barycentric, Point2};

/// Vertex-based P1 space on a subset of the cells of a mesh. Only vertices
/// touched by an active cell carry a degree of freedom.
#[derive(Clone, Debug)]
pub struct ScalarP1Space<'m> {
    mesh: &'m SimplicialMesh,
    vertex_dof: Vec<Option<usize>>,
    active_cells: Vec<usize>,
    n_dofs: usize,
}

impl<'m> ScalarP1Space<'m> {
    pub fn new(mesh: &'m SimplicialMesh) -> Self {
        Self::on_cells(mesh, (0..mesh.num_cells()).collect())
    }

    /// Space restricted to `active_cells`; dofs are numbered by ascending vertex id.
    pub fn on_cells(mesh: &'m SimplicialMesh, active_cells: Vec<usize>) -> Self {
        let mut used = vec![false; mesh.num_vertices()];
        for &c in &active_cells {
            for v in mesh.cells()[c] {
                used[v] = true;
            }
        }
        let mut n_dofs = 0;
        let vertex_dof = used
            .into_iter()
            .map(|u| {
                u.then(|| {
                    n_dofs += 1;
                    n_dofs - 1
                })
            })
            .collect();
        Self { mesh, vertex_dof, active_cells, n_dofs }
    }

    pub fn mesh(&self) -> &'m SimplicialMesh {
        self.mesh
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn active_cells(&self) -> &[usize] {
        &self.active_cells
    }

    pub fn vertex_dof(&self, vertex: usize) -> Option<usize> {
        self.vertex_dof[vertex]
    }

    /// Local-to-global map of an active cell, in the cell's vertex order.
    pub fn cell_dofs(&self, cell: usize) -> [usize; 3] {
        self.mesh.cells()[cell].map(|v| self.vertex_dof[v].expect("cell is active"))
    }

    /// Vertex id of every dof.
    pub fn dof_vertices(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_dofs];
        for (v, d) in self.vertex_dof.iter().enumerate() {
            if let Some(d) = d {
                out[*d] = v;
            }
        }
        out
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate<F: Fn(Point2) -> f64>(&self, f: F) -> Vec<f64> {
        self.dof_vertices().iter().map(|&v| f(self.mesh.vertices()[v])).collect()
    }
}

/// Constant gradients of the three hat functions of a cell.
pub fn basis_gradients(mesh: &SimplicialMesh, cell: usize) -> [Point2; 3] {
    let t = mesh.triangle(cell);
    let two_area = (t[1] - t[0]).cross(t[2] - t[0]);
    // grad λ_i = perp(opposite edge) / (2|T|), edge oriented counter-clockwise
    [0, 1, 2].map(|i| (t[(i + 2) % 3] - t[(i + 1) % 3]).perp() * (1.0 / two_area))
}

/// Values and gradients of the three local hat functions at `p`.
pub fn eval_basis(space: &ScalarP1Space, cell: usize, p: Point2) -> Result<([f64; 3], [Point2; 3])> {
    let mesh = space.mesh();
    let tri = mesh.checked_triangle(cell)?;
    let values = barycentric(&tri, p);
    if values.iter().any(|&l| l < -EPS_GEOM) {
        return Err(Error::PointOutsideCell { cell, x: p.x, y: p.y });
    }
    Ok((values, basis_gradients(mesh, cell)))
}

/// Block of the composite space a global index belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    BackgroundVelocity,
    BackgroundPressure,
    OverlapVelocity,
    OverlapPressure,
}

/// Direct sum of P1 velocity and pressure spaces on the active background
/// cells and on the overlapping mesh. Global ordering is `[u1, p1, u2, p2]`
/// with velocity components interleaved per vertex.
#[derive(Clone, Debug)]
pub struct CompositeStokesSpace<'m> {
    pub bg: ScalarP1Space<'m>,
    pub ov: ScalarP1Space<'m>,
    offsets: [usize; 5],
}

impl<'m> CompositeStokesSpace<'m> {
    pub fn new(bg_mesh: &'m SimplicialMesh, ov_mesh: &'m SimplicialMesh, geom: &CutGeometry) -> Self {
        let bg = ScalarP1Space::on_cells(bg_mesh, geom.t1_star_cells.clone());
        let ov = ScalarP1Space::new(ov_mesh);
        let sizes = [2 * bg.n_dofs(), bg.n_dofs(), 2 * ov.n_dofs(), ov.n_dofs()];
        let mut offsets = [0; 5];
        for k in 0..4 {
            offsets[k + 1] = offsets[k] + sizes[k];
        }
        Self { bg, ov, offsets }
    }

    pub fn total_dofs(&self) -> usize {
        self.offsets[4]
    }

    /// Start of each block plus the total, `[u1, p1, u2, p2, end]`.
    pub fn offsets(&self) -> [usize; 5] {
        self.offsets
    }

    pub fn u1(&self, dof: usize, comp: usize) -> usize {
        self.offsets[0] + 2 * dof + comp
    }

    pub fn p1(&self, dof: usize) -> usize {
        self.offsets[1] + dof
    }

    pub fn u2(&self, dof: usize, comp: usize) -> usize {
        self.offsets[2] + 2 * dof + comp
    }

    pub fn p2(&self, dof: usize) -> usize {
        self.offsets[3] + dof
    }

    pub fn block_of(&self, index: usize) -> Option<Block> {
        let o = &self.offsets;
        match index {
            i if i < o[1] => Some(Block::BackgroundVelocity),
            i if i < o[2] => Some(Block::BackgroundPressure),
            i if i < o[3] => Some(Block::OverlapVelocity),
            i if i < o[4] => Some(Block::OverlapPressure),
            _ => None,
        }
    }

    pub fn is_pressure(&self, index: usize) -> bool {
        matches!(self.block_of(index), Some(Block::BackgroundPressure | Block::OverlapPressure))
    }

    pub fn is_velocity(&self, index: usize) -> bool {
        matches!(self.block_of(index), Some(Block::BackgroundVelocity | Block::OverlapVelocity))
    }

    /// Indicator of all pressure dofs, the kernel of the assembled operator
    /// once the velocity is fixed on the outer boundary.
    pub fn pressure_constant_mode(&self) -> Vec<f64> {
        (0..self.total_dofs()).map(|i| if self.is_pressure(i) { 1.0 } else { 0.0 }).collect()
    }

    /// Composite nodal interpolant of a velocity/pressure pair.
    pub fn interpolate<U, P>(&self, u: U, p: P) -> Vec<f64>
    where
        U: Fn(Point2) -> [f64; 2],
        P: Fn(Point2) -> f64,
    {
        let mut x = vec![0.0; self.total_dofs()];
        for (space, uo, po) in [(&self.bg, self.offsets[0], self.offsets[1]), (&self.ov, self.offsets[2], self.offsets[3])] {
            for (d, &v) in space.dof_vertices().iter().enumerate() {
                let pt = space.mesh().vertices()[v];
                let uv = u(pt);
                x[uo + 2 * d] = uv[0];
                x[uo + 2 * d + 1] = uv[1];
                x[po + d] = p(pt);
            }
        }
        x
    }
}

/// Background velocity dofs (both components) at vertices on the outer boundary.
pub fn boundary_velocity_dofs(space: &CompositeStokesSpace, bg: &SimplicialMesh) -> Vec<usize> {
    let mask = bg.boundary_vertex_mask();
    let mut out = Vec::new();
    for (v, on_boundary) in mask.into_iter().enumerate() {
        if let (true, Some(d)) = (on_boundary, space.bg.vertex_dof(v)) {
            out.push(space.u1(d, 0));
            out.push(space.u1(d, 1));
        }
    }
    out
}
