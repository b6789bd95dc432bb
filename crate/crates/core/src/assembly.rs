//! Assembly of the stabilized Nitsche overlapping-mesh Stokes system.
//!
//! The discrete form couples the background solution `(u1, p1)` on the active
//! background cells with `(u2, p2)` on the overlapping mesh:
//!
//! ```text
//! A_h = a_h(u, v) + b_h(v, p) + b_h(u, q) + s_h(u, v) - S_h(u, p; v, q)
//! a_h = (∇u, ∇v)_{Ω1 ∪ Ω2} - (∂_n u2, [v])_Γ - (∂_n v2, [u])_Γ + γ (h⁻¹ [u], [v])_Γ
//! b_h = -(∇·v, q)_{Ω1 ∪ Ω2} + (n·[v], q2)_Γ
//! s_h = (∇(u1 - u2), ∇(v1 - v2))_{Ω_O}
//! S_h = δ Σ_T h_T² (∇p, β ∇q)_T          (P1: the Laplacian terms vanish)
//! L_h = (f, v) - δ Σ_T h_T² (f, β ∇q)_T
//! ```
//!
//! with `[v] = v2 - v1` and `n` pointing out of the overlapping domain. The
//! `S_h` and `L_h` sums run over full cells of both meshes, so the overlap
//! region is counted twice.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{build_cut_geometry, CutGeometry};
use crate::linalg::SparseMatrix;
use crate::mesh::SimplicialMesh;
use crate::par;
use crate::point::{barycentric, triangle_diameter, Point2};
use crate::quadrature::{segment_rule, triangle_rule, QuadratureRule};
use crate::spaces::{basis_gradients, boundary_velocity_dofs, CompositeStokesSpace};

pub type VectorField = Arc<dyn Fn(Point2) -> [f64; 2] + Send + Sync>;

/// Degree of the rules used for volume terms and loads.
pub const BULK_DEGREE: usize = 4;
/// Degree of the segment rules on the interface.
pub const INTERFACE_DEGREE: usize = 2;

/// Data and parameters of the Stokes problem.
#[derive(Clone)]
pub struct StokesProblem {
    pub f: VectorField,
    pub g: VectorField,
    /// Nitsche penalty.
    pub gamma: f64,
    /// Weight of the least-squares stabilization.
    pub delta: f64,
    /// Multiplies the Laplacian of the test function in `S_h`. Inert for P1.
    pub alpha: i8,
    pub beta: f64,
}

impl StokesProblem {
    pub const DEFAULT_GAMMA: f64 = 10.0;
    pub const DEFAULT_DELTA: f64 = 0.05;

    pub fn new(f: VectorField, g: VectorField) -> Self {
        Self { f, g, gamma: Self::DEFAULT_GAMMA, delta: Self::DEFAULT_DELTA, alpha: 1, beta: 1.0 }
    }

    /// Homogeneous data: `f = 0`, `g = 0`.
    pub fn zero() -> Self {
        Self::new(Arc::new(|_| [0.0; 2]), Arc::new(|_| [0.0; 2]))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidArgument(format!("delta must be positive, got {}", self.delta)));
        }
        if !(-1..=1).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!("alpha must be -1, 0 or 1, got {}", self.alpha)));
        }
        if self.beta != 1.0 && self.beta != -1.0 {
            return Err(Error::InvalidArgument(format!("beta must be -1 or 1, got {}", self.beta)));
        }
        Ok(())
    }
}

impl std::fmt::Debug for StokesProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StokesProblem")
            .field("gamma", &self.gamma)
            .field("delta", &self.delta)
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AssemblyOptions {
    /// Include the overlap term `s_h`.
    pub with_overlap_stabilization: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { with_overlap_stabilization: true }
    }
}

/// Assembled system after strong Dirichlet elimination.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    /// Constant-pressure mode: 1 on every pressure dof, 0 on velocity dofs.
    pub nullspace: Vec<f64>,
    /// Dirichlet dofs and their prescribed values, ascending by dof.
    pub constrained_dofs: Vec<(usize, f64)>,
}

impl LinearSystem {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// Unconstrained dofs, ascending.
    pub fn free_dofs(&self) -> Vec<usize> {
        let mut constrained = vec![false; self.dim()];
        for &(i, _) in &self.constrained_dofs {
            constrained[i] = true;
        }
        (0..self.dim()).filter(|&i| !constrained[i]).collect()
    }

    /// Matrix with the Dirichlet rows and columns deleted.
    pub fn reduced_matrix(&self) -> SparseMatrix {
        self.matrix.submatrix(&self.free_dofs())
    }

    pub fn reduced_nullspace(&self) -> Vec<f64> {
        self.free_dofs().iter().map(|&i| self.nullspace[i]).collect()
    }
}

/// Matrix triplets and load entries produced by one assembly stage.
#[derive(Clone, Debug, Default)]
pub struct Contributions {
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<(usize, f64)>,
}

impl Contributions {
    fn concat(parts: Vec<Contributions>) -> Self {
        let mut out = Self {
            triplets: Vec::with_capacity(parts.iter().map(|p| p.triplets.len()).sum()),
            rhs: Vec::with_capacity(parts.iter().map(|p| p.rhs.len()).sum()),
        };
        for p in parts {
            out.append(p);
        }
        out
    }

    pub fn append(&mut self, other: Contributions) {
        self.triplets.extend(other.triplets);
        self.rhs.extend(other.rhs);
    }

    pub fn to_matrix(&self, n: usize) -> SparseMatrix {
        SparseMatrix::from_triplets(n, &self.triplets)
    }

    pub fn to_rhs(&self, n: usize) -> Vec<f64> {
        let mut b = vec![0.0; n];
        for &(i, v) in &self.rhs {
            b[i] += v;
        }
        b
    }
}

/// Per-cell volume integrals of P1 data over a (possibly cut) region.
struct VolumeMoments {
    area: f64,
    /// `∫ φ_k`
    basis: [f64; 3],
    /// `∫ f_c φ_k`, indexed `[k][c]`
    load: [[f64; 2]; 3],
}

fn volume_moments(tri: &[Point2; 3], rules: &[(QuadratureRule, f64)], f: &VectorField) -> VolumeMoments {
    let mut m = VolumeMoments { area: 0.0, basis: [0.0; 3], load: [[0.0; 2]; 3] };
    for (rule, sign) in rules {
        for (x, w) in rule.iter() {
            let w = sign * w;
            let phi = barycentric(tri, x);
            let fx = f(x);
            m.area += w;
            for k in 0..3 {
                m.basis[k] += w * phi[k];
                m.load[k][0] += w * fx[0] * phi[k];
                m.load[k][1] += w * fx[1] * phi[k];
            }
        }
    }
    m
}

fn scatter_volume(
    out: &mut Contributions,
    grads: &[Point2; 3],
    m: &VolumeMoments,
    vel: impl Fn(usize, usize) -> usize,
    pre: impl Fn(usize) -> usize,
) {
    for i in 0..3 {
        for j in 0..3 {
            let a = m.area * grads[i].dot(grads[j]);
            for c in 0..2 {
                out.triplets.push((vel(i, c), vel(j, c), a));
            }
        }
        let gi = [grads[i].x, grads[i].y];
        for k in 0..3 {
            for c in 0..2 {
                let b = -gi[c] * m.basis[k];
                out.triplets.push((vel(i, c), pre(k), b));
                out.triplets.push((pre(k), vel(i, c), b));
            }
        }
        for c in 0..2 {
            out.rhs.push((vel(i, c), m.load[i][c]));
        }
    }
}

/// Volume terms `(∇u, ∇v)`, `-(∇·v, q)`, `-(∇·u, p)` and the load `(f, v)`.
/// Background cells are integrated over their part outside the overlapping
/// domain, overlapping cells over the whole cell.
pub fn assemble_bulk(space: &CompositeStokesSpace, geom: &CutGeometry, problem: &StokesProblem) -> Result<Contributions> {
    let bg = space.bg.mesh();
    let ov = space.ov.mesh();
    let bg_parts = par::map_slice(space.bg.active_cells(), |&cell| -> Result<Contributions> {
        let rules = geom.cut_cell_rules(bg, cell, BULK_DEGREE)?;
        let m = volume_moments(&bg.triangle(cell), &rules, &problem.f);
        let dofs = space.bg.cell_dofs(cell);
        let mut out = Contributions::default();
        scatter_volume(&mut out, &basis_gradients(bg, cell), &m, |i, c| space.u1(dofs[i], c), |k| space.p1(dofs[k]));
        Ok(out)
    });
    let ov_parts = par::map_range(ov.num_cells(), |cell| -> Result<Contributions> {
        let tri = ov.triangle(cell);
        let rules = [(triangle_rule(&tri, BULK_DEGREE)?, 1.0)];
        let m = volume_moments(&tri, &rules, &problem.f);
        let dofs = space.ov.cell_dofs(cell);
        let mut out = Contributions::default();
        scatter_volume(&mut out, &basis_gradients(ov, cell), &m, |i, c| space.u2(dofs[i], c), |k| space.p2(dofs[k]));
        Ok(out)
    });
    let parts = bg_parts.into_iter().chain(ov_parts).collect::<Result<Vec<_>>>()?;
    Ok(Contributions::concat(parts))
}

/// Nitsche coupling on the interface: consistency, symmetry and penalty terms
/// of `a_h` and the pressure term `(n·[v], q2)` of `b_h` with its transpose.
pub fn assemble_interface(space: &CompositeStokesSpace, geom: &CutGeometry, problem: &StokesProblem) -> Result<Contributions> {
    let bg = space.bg.mesh();
    let ov = space.ov.mesh();
    let parts = par::map_slice(&geom.interface_segments, |seg| -> Result<Contributions> {
        if !geom.classification.is_active(seg.bg_cell) {
            return Err(Error::InactiveCell(seg.bg_cell));
        }
        let bg_tri = bg.triangle(seg.bg_cell);
        let ov_tri = ov.triangle(seg.ov_cell);
        let bg_dofs = space.bg.cell_dofs(seg.bg_cell);
        let ov_dofs = space.ov.cell_dofs(seg.ov_cell);
        let n = seg.normal;
        let flux_ov = basis_gradients(ov, seg.ov_cell).map(|g| g.dot(n));
        let penalty = problem.gamma / seg.h_penalty;

        // local velocity functions: three overlapping hats, then three background hats
        let mut k = [[0.0; 6]; 6];
        let mut bq = [[0.0; 3]; 6];
        let rule = segment_rule(seg.endpoints[0], seg.endpoints[1], INTERFACE_DEGREE)?;
        for (x, w) in rule.iter() {
            let psi = barycentric(&ov_tri, x);
            let phi = barycentric(&bg_tri, x);
            let jump = [psi[0], psi[1], psi[2], -phi[0], -phi[1], -phi[2]];
            let flux = [flux_ov[0], flux_ov[1], flux_ov[2], 0.0, 0.0, 0.0];
            for a in 0..6 {
                for b in 0..6 {
                    k[a][b] += w * (-flux[b] * jump[a] - flux[a] * jump[b] + penalty * jump[a] * jump[b]);
                }
                for q in 0..3 {
                    bq[a][q] += w * jump[a] * psi[q];
                }
            }
        }

        let vel = |a: usize, c: usize| if a < 3 { space.u2(ov_dofs[a], c) } else { space.u1(bg_dofs[a - 3], c) };
        let nc = [n.x, n.y];
        let mut out = Contributions::default();
        for a in 0..6 {
            for c in 0..2 {
                for b in 0..6 {
                    out.triplets.push((vel(a, c), vel(b, c), k[a][b]));
                }
                for q in 0..3 {
                    let v = nc[c] * bq[a][q];
                    out.triplets.push((vel(a, c), space.p2(ov_dofs[q]), v));
                    out.triplets.push((space.p2(ov_dofs[q]), vel(a, c), v));
                }
            }
        }
        Ok(out)
    });
    Ok(Contributions::concat(parts.into_iter().collect::<Result<Vec<_>>>()?))
}

/// Overlap term `(∇(u1 - u2), ∇(v1 - v2))` on every overlap piece.
pub fn assemble_overlap_stabilization(space: &CompositeStokesSpace, geom: &CutGeometry) -> Contributions {
    let bg = space.bg.mesh();
    let ov = space.ov.mesh();
    let parts = par::map_slice(&geom.overlap_pieces, |piece| {
        let area = piece.polygon.area();
        let gb = basis_gradients(bg, piece.bg_cell);
        let go = basis_gradients(ov, piece.ov_cell);
        let d = [gb[0], gb[1], gb[2], -go[0], -go[1], -go[2]];
        let bg_dofs = space.bg.cell_dofs(piece.bg_cell);
        let ov_dofs = space.ov.cell_dofs(piece.ov_cell);
        let vel = |a: usize, c: usize| if a < 3 { space.u1(bg_dofs[a], c) } else { space.u2(ov_dofs[a - 3], c) };
        let mut out = Contributions::default();
        for a in 0..6 {
            for b in 0..6 {
                let v = area * d[a].dot(d[b]);
                for c in 0..2 {
                    out.triplets.push((vel(a, c), vel(b, c), v));
                }
            }
        }
        out
    });
    Contributions::concat(parts)
}

fn least_squares_cell(
    mesh: &SimplicialMesh,
    cell: usize,
    dofs: [usize; 3],
    pre: impl Fn(usize) -> usize,
    problem: &StokesProblem,
) -> Result<Contributions> {
    let tri = mesh.triangle(cell);
    let h = triangle_diameter(&tri);
    let coef = -problem.delta * problem.beta * h * h;
    let grads = basis_gradients(mesh, cell);
    let area = mesh.cell_area(cell);
    let rule = triangle_rule(&tri, BULK_DEGREE)?;
    let mut out = Contributions::default();
    for k in 0..3 {
        for l in 0..3 {
            out.triplets.push((pre(dofs[k]), pre(dofs[l]), coef * area * grads[k].dot(grads[l])));
        }
        let fg = rule.integrate(|x| {
            let fx = (problem.f)(x);
            fx[0] * grads[k].x + fx[1] * grads[k].y
        });
        out.rhs.push((pre(dofs[k]), coef * fg));
    }
    Ok(out)
}

/// `-S_h` and its load counterpart over the full active background cells and
/// all overlapping cells. For P1 only the pressure-gradient part survives.
pub fn assemble_least_squares_stabilization(
    space: &CompositeStokesSpace,
    _geom: &CutGeometry,
    problem: &StokesProblem,
) -> Result<Contributions> {
    let bg = space.bg.mesh();
    let ov = space.ov.mesh();
    let bg_parts =
        par::map_slice(space.bg.active_cells(), |&cell| least_squares_cell(bg, cell, space.bg.cell_dofs(cell), |d| space.p1(d), problem));
    let ov_parts = par::map_range(ov.num_cells(), |cell| least_squares_cell(ov, cell, space.ov.cell_dofs(cell), |d| space.p2(d), problem));
    let parts = bg_parts.into_iter().chain(ov_parts).collect::<Result<Vec<_>>>()?;
    Ok(Contributions::concat(parts))
}

/// Symmetric elimination of Dirichlet dofs: the prescribed values are moved
/// to the right-hand side, constrained rows and columns are zeroed and get a
/// unit diagonal.
pub fn apply_dirichlet(matrix: &SparseMatrix, rhs: &[f64], constrained: &[(usize, f64)]) -> (SparseMatrix, Vec<f64>) {
    let n = matrix.dim();
    let mut value: Vec<Option<f64>> = vec![None; n];
    for &(i, v) in constrained {
        value[i] = Some(v);
    }
    let mut b = rhs.to_vec();
    let mut t = Vec::with_capacity(matrix.nnz());
    for i in 0..n {
        if let Some(gi) = value[i] {
            t.push((i, i, 1.0));
            b[i] = gi;
            continue;
        }
        for (j, a) in matrix.row(i) {
            match value[j] {
                Some(gj) => b[i] -= a * gj,
                None => t.push((i, j, a)),
            }
        }
    }
    (SparseMatrix::from_triplets(n, &t), b)
}

/// Matrix and load of `A_h` and `L_h` before boundary conditions.
pub fn assemble_unconstrained(
    space: &CompositeStokesSpace,
    geom: &CutGeometry,
    problem: &StokesProblem,
    options: AssemblyOptions,
) -> Result<(SparseMatrix, Vec<f64>)> {
    problem.validate()?;
    let n = space.total_dofs();
    let mut all = assemble_bulk(space, geom, problem)?;
    all.append(assemble_interface(space, geom, problem)?);
    if options.with_overlap_stabilization {
        all.append(assemble_overlap_stabilization(space, geom));
    }
    all.append(assemble_least_squares_stabilization(space, geom, problem)?);
    Ok((all.to_matrix(n), all.to_rhs(n)))
}

/// Dirichlet data at the boundary velocity dofs.
pub fn dirichlet_values(space: &CompositeStokesSpace, bg: &SimplicialMesh, g: &VectorField) -> Vec<(usize, f64)> {
    let verts = space.bg.dof_vertices();
    let base = space.offsets()[0];
    let mut dofs = boundary_velocity_dofs(space, bg);
    dofs.sort_unstable();
    dofs.into_iter()
        .map(|i| {
            let local = i - base;
            let gv = g(bg.vertices()[verts[local / 2]]);
            (i, gv[local % 2])
        })
        .collect()
}

/// Full system on a precomputed cut geometry.
pub fn assemble_with_geometry(
    space: &CompositeStokesSpace,
    geom: &CutGeometry,
    problem: &StokesProblem,
    options: AssemblyOptions,
) -> Result<LinearSystem> {
    let (matrix, rhs) = assemble_unconstrained(space, geom, problem, options)?;
    let constrained_dofs = dirichlet_values(space, space.bg.mesh(), &problem.g);
    let (matrix, rhs) = apply_dirichlet(&matrix, &rhs, &constrained_dofs);
    Ok(LinearSystem { matrix, rhs, nullspace: space.pressure_constant_mode(), constrained_dofs })
}

/// Builds the cut geometry and the composite space, then assembles the
/// constrained system.
pub fn assemble_system(
    bg: &SimplicialMesh,
    ov: &SimplicialMesh,
    problem: &StokesProblem,
    options: AssemblyOptions,
) -> Result<LinearSystem> {
    let geom = build_cut_geometry(bg, ov)?;
    let space = CompositeStokesSpace::new(bg, ov, &geom);
    assemble_with_geometry(&space, &geom, problem, options)
}
