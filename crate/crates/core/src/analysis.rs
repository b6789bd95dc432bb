//! Error norms, interface norms, rate fitting and the Gram matrix of the
//! mesh-dependent norm used for the inf-sup check.
//!
//! Volume norms are broken norms over the full cells of `T_1*` and `T_2`, so
//! the overlap region contributes twice.

use crate::error::{Error, Result};
use crate::geometry::CutGeometry;
use crate::linalg::SparseMatrix;
use crate::mesh::SimplicialMesh;
use crate::par;
use crate::point::{barycentric, Point2};
use crate::quadrature::{segment_rule, triangle_rule};
use crate::spaces::{basis_gradients, CompositeStokesSpace};

/// Quadrature degree for errors against smooth exact solutions.
pub const ERROR_DEGREE: usize = 4;

/// One row of a convergence study.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub level: usize,
    pub h_max: f64,
    pub n_dofs: usize,
    pub err_u_h1: f64,
    pub err_u_l2: f64,
    pub err_p_l2: f64,
    pub err_jump: f64,
}

impl ErrorReport {
    pub const CSV_HEADER: &'static str = "level,h_max,ndofs,err_u_h1,err_u_l2,err_p_l2,err_jump";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{:.12e},{},{:.12e},{:.12e},{:.12e},{:.12e}",
            self.level, self.h_max, self.n_dofs, self.err_u_h1, self.err_u_l2, self.err_p_l2, self.err_jump
        )
    }

    pub fn is_valid(&self) -> bool {
        [self.h_max, self.err_u_h1, self.err_u_l2, self.err_p_l2, self.err_jump].iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

#[derive(Clone, Copy)]
enum Side {
    Background,
    Overlapping,
}

struct CellView<'a> {
    mesh: &'a SimplicialMesh,
    cell: usize,
    vel: [[f64; 2]; 3],
    pre: [f64; 3],
}

impl CellView<'_> {
    fn velocity(&self, p: Point2) -> [f64; 2] {
        let l = barycentric(&self.mesh.triangle(self.cell), p);
        [0, 1].map(|c| (0..3).map(|k| l[k] * self.vel[k][c]).sum())
    }

    fn velocity_gradient(&self) -> [Point2; 2] {
        let g = basis_gradients(self.mesh, self.cell);
        [0, 1].map(|c| (0..3).fold(Point2::new(0.0, 0.0), |acc, k| acc + g[k] * self.vel[k][c]))
    }

    fn pressure(&self, p: Point2) -> f64 {
        let l = barycentric(&self.mesh.triangle(self.cell), p);
        (0..3).map(|k| l[k] * self.pre[k]).sum()
    }
}

fn cell_view<'a>(space: &CompositeStokesSpace<'a>, x: &[f64], side: Side, cell: usize) -> CellView<'a> {
    let [u1, p1, u2, p2, _] = space.offsets();
    let (mesh, dofs, uo, po) = match side {
        Side::Background => (space.bg.mesh(), space.bg.cell_dofs(cell), u1, p1),
        Side::Overlapping => (space.ov.mesh(), space.ov.cell_dofs(cell), u2, p2),
    };
    CellView { mesh, cell, vel: dofs.map(|d| [x[uo + 2 * d], x[uo + 2 * d + 1]]), pre: dofs.map(|d| x[po + d]) }
}

/// Every cell of `T_1* ∪ T_2`, background cells first.
fn all_cells(space: &CompositeStokesSpace) -> Vec<(Side, usize)> {
    let mut out: Vec<_> = space.bg.active_cells().iter().map(|&c| (Side::Background, c)).collect();
    out.extend((0..space.ov.mesh().num_cells()).map(|c| (Side::Overlapping, c)));
    out
}

/// Σ over `T_1* ∪ T_2` of `∫_T f(cell, x)`, summed in cell order.
fn sum_over_cells<F>(space: &CompositeStokesSpace, x: &[f64], f: F) -> f64
where
    F: Fn(&CellView, Point2) -> f64 + Sync,
{
    let cells = all_cells(space);
    let parts = par::map_slice(&cells, |&(side, cell)| {
        let view = cell_view(space, x, side, cell);
        let rule = triangle_rule(&view.mesh.triangle(cell), ERROR_DEGREE).expect("supported degree");
        rule.integrate(|p| f(&view, p))
    });
    parts.iter().sum()
}

fn check_len(space: &CompositeStokesSpace, x: &[f64]) {
    assert_eq!(x.len(), space.total_dofs(), "coefficient vector length");
}

/// `‖∇(u - u_h)‖` over `T_1* ∪ T_2`. `grad_u(p)[c]` is the gradient of
/// component `c`.
pub fn broken_h1_error<G>(space: &CompositeStokesSpace, x: &[f64], grad_u: G) -> f64
where
    G: Fn(Point2) -> [Point2; 2] + Sync,
{
    check_len(space, x);
    sum_over_cells(space, x, |view, p| {
        let gh = view.velocity_gradient();
        let g = grad_u(p);
        (g[0] - gh[0]).dot(g[0] - gh[0]) + (g[1] - gh[1]).dot(g[1] - gh[1])
    })
    .sqrt()
}

/// `‖u - u_h‖` over `T_1* ∪ T_2`.
pub fn velocity_l2_error<U>(space: &CompositeStokesSpace, x: &[f64], u: U) -> f64
where
    U: Fn(Point2) -> [f64; 2] + Sync,
{
    check_len(space, x);
    sum_over_cells(space, x, |view, p| {
        let uh = view.velocity(p);
        let ue = u(p);
        (ue[0] - uh[0]).powi(2) + (ue[1] - uh[1]).powi(2)
    })
    .sqrt()
}

/// Means of `p` and `p_h` over the physical domain: background cells are cut
/// to their part outside the overlapping domain.
fn physical_means<P>(space: &CompositeStokesSpace, geom: &CutGeometry, x: &[f64], p: &P) -> Result<(f64, f64)>
where
    P: Fn(Point2) -> f64 + Sync,
{
    let bg = space.bg.mesh();
    let bg_parts = par::map_slice(space.bg.active_cells(), |&cell| -> Result<[f64; 3]> {
        let view = cell_view(space, x, Side::Background, cell);
        let mut acc = [0.0; 3];
        for (rule, sign) in geom.cut_cell_rules(bg, cell, ERROR_DEGREE)? {
            for (q, w) in rule.iter() {
                acc[0] += sign * w;
                acc[1] += sign * w * p(q);
                acc[2] += sign * w * view.pressure(q);
            }
        }
        Ok(acc)
    });
    let ov = space.ov.mesh();
    let ov_parts = par::map_range(ov.num_cells(), |cell| -> Result<[f64; 3]> {
        let view = cell_view(space, x, Side::Overlapping, cell);
        let rule = triangle_rule(&ov.triangle(cell), ERROR_DEGREE)?;
        Ok([rule.measure(), rule.integrate(p), rule.integrate(|q| view.pressure(q))])
    });
    let mut total = [0.0; 3];
    for part in bg_parts.into_iter().chain(ov_parts) {
        let part = part?;
        for k in 0..3 {
            total[k] += part[k];
        }
    }
    Ok((total[1] / total[0], total[2] / total[0]))
}

/// `‖p - p_h‖` over `T_1* ∪ T_2` after shifting both to zero mean over Ω.
pub fn pressure_l2_error<P>(space: &CompositeStokesSpace, geom: &CutGeometry, x: &[f64], p: P) -> Result<f64>
where
    P: Fn(Point2) -> f64 + Sync,
{
    check_len(space, x);
    let (mean_exact, mean_h) = physical_means(space, geom, x, &p)?;
    Ok(sum_over_cells(space, x, |view, q| ((p(q) - mean_exact) - (view.pressure(q) - mean_h)).powi(2)).sqrt())
}

/// `(Σ_segments h^{-2α} ∫ |[u_h]|²)^{1/2}` with `[u_h] = u_{h,2} - u_{h,1}`.
pub fn interface_jump_norm(space: &CompositeStokesSpace, geom: &CutGeometry, x: &[f64], alpha: f64) -> Result<f64> {
    check_len(space, x);
    let parts = par::map_slice(&geom.interface_segments, |seg| -> Result<f64> {
        let v1 = cell_view(space, x, Side::Background, seg.bg_cell);
        let v2 = cell_view(space, x, Side::Overlapping, seg.ov_cell);
        let rule = segment_rule(seg.endpoints[0], seg.endpoints[1], 2)?;
        let weight = seg.h_penalty.powf(-2.0 * alpha);
        Ok(weight
            * rule.integrate(|q| {
                let (a, b) = (v2.velocity(q), v1.velocity(q));
                (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
            }))
    });
    Ok(parts.into_iter().sum::<Result<f64>>()?.sqrt())
}

/// Least-squares slope of `log e` against `log h`.
pub fn fit_rate(h: &[f64], e: &[f64]) -> Result<f64> {
    fit_rate_skipping(h, e, 0)
}

/// As [`fit_rate`], ignoring the first `skip` pairs.
pub fn fit_rate_skipping(h: &[f64], e: &[f64], skip: usize) -> Result<f64> {
    if h.len() != e.len() {
        return Err(Error::InvalidArgument(format!("{} mesh sizes for {} errors", h.len(), e.len())));
    }
    let pairs: Vec<(f64, f64)> = h.iter().zip(e).skip(skip).map(|(&a, &b)| (a, b)).collect();
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument("at least two pairs are needed".into()));
    }
    if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| !(a > 0.0 && b > 0.0)) {
        return Err(Error::InvalidArgument(format!("non-positive pair ({a}, {b})")));
    }
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(sx, sy), &(a, b)| (sx + a.ln() / n, sy + b.ln() / n));
    let (sxy, sxx) = pairs.iter().fold((0.0, 0.0), |(sxy, sxx), &(a, b)| {
        let dx = a.ln() - mx;
        (sxy + dx * (b.ln() - my), sxx + dx * dx)
    });
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all mesh sizes are equal".into()));
    }
    Ok(sxy / sxx)
}

/// The four Gram blocks of the mesh-dependent norm
/// `‖∇v‖² + h ‖∂_n v_2‖²_Γ + h⁻¹ ‖[v]‖²_Γ + ‖q‖²`.
#[derive(Clone, Debug)]
pub struct NormGram {
    pub gradient: SparseMatrix,
    pub flux: SparseMatrix,
    pub jump: SparseMatrix,
    pub pressure: SparseMatrix,
}

impl NormGram {
    pub fn total(&self) -> SparseMatrix {
        let t: Vec<_> = [&self.gradient, &self.flux, &self.jump, &self.pressure].iter().flat_map(|m| m.triplets()).collect();
        SparseMatrix::from_triplets(self.gradient.dim(), &t)
    }
}

pub fn build_norm_gram_parts(space: &CompositeStokesSpace, geom: &CutGeometry) -> NormGram {
    let n = space.total_dofs();
    let cells = all_cells(space);
    let volume = par::map_slice(&cells, |&(side, cell)| {
        let (mesh, dofs) = match side {
            Side::Background => (space.bg.mesh(), space.bg.cell_dofs(cell)),
            Side::Overlapping => (space.ov.mesh(), space.ov.cell_dofs(cell)),
        };
        let vel = |d: usize, c: usize| match side {
            Side::Background => space.u1(d, c),
            Side::Overlapping => space.u2(d, c),
        };
        let pre = |d: usize| match side {
            Side::Background => space.p1(d),
            Side::Overlapping => space.p2(d),
        };
        let area = mesh.cell_area(cell);
        let g = basis_gradients(mesh, cell);
        let mut grad = Vec::with_capacity(18);
        let mut mass = Vec::with_capacity(9);
        for i in 0..3 {
            for j in 0..3 {
                for c in 0..2 {
                    grad.push((vel(dofs[i], c), vel(dofs[j], c), area * g[i].dot(g[j])));
                }
                let m = if i == j { area / 6.0 } else { area / 12.0 };
                mass.push((pre(dofs[i]), pre(dofs[j]), m));
            }
        }
        (grad, mass)
    });
    let interface = par::map_slice(&geom.interface_segments, |seg| {
        let ov = space.ov.mesh();
        let bg_tri = space.bg.mesh().triangle(seg.bg_cell);
        let ov_tri = ov.triangle(seg.ov_cell);
        let bg_dofs = space.bg.cell_dofs(seg.bg_cell);
        let ov_dofs = space.ov.cell_dofs(seg.ov_cell);
        let flux = basis_gradients(ov, seg.ov_cell).map(|g| g.dot(seg.normal));
        let h = seg.h_penalty;
        let len = seg.length();
        let vel = |a: usize, c: usize| if a < 3 { space.u2(ov_dofs[a], c) } else { space.u1(bg_dofs[a - 3], c) };
        let mut jump = [[0.0; 6]; 6];
        let rule = segment_rule(seg.endpoints[0], seg.endpoints[1], 2).expect("supported degree");
        for (q, w) in rule.iter() {
            let psi = barycentric(&ov_tri, q);
            let phi = barycentric(&bg_tri, q);
            let j = [psi[0], psi[1], psi[2], -phi[0], -phi[1], -phi[2]];
            for a in 0..6 {
                for b in 0..6 {
                    jump[a][b] += w * j[a] * j[b] / h;
                }
            }
        }
        let mut f = Vec::with_capacity(18);
        let mut jmp = Vec::with_capacity(72);
        for c in 0..2 {
            for a in 0..6 {
                for b in 0..6 {
                    jmp.push((vel(a, c), vel(b, c), jump[a][b]));
                    if a < 3 && b < 3 {
                        f.push((vel(a, c), vel(b, c), h * len * flux[a] * flux[b]));
                    }
                }
            }
        }
        (f, jmp)
    });
    let (grad, mass): (Vec<_>, Vec<_>) = volume.into_iter().unzip();
    let (flux, jump): (Vec<_>, Vec<_>) = interface.into_iter().unzip();
    let build = |parts: Vec<Vec<(usize, usize, f64)>>| SparseMatrix::from_triplets(n, &parts.concat());
    NormGram { gradient: build(grad), flux: build(flux), jump: build(jump), pressure: build(mass) }
}

/// Gram matrix of the mesh-dependent norm on the composite space.
pub fn build_norm_gram(space: &CompositeStokesSpace, geom: &CutGeometry) -> SparseMatrix {
    build_norm_gram_parts(space, geom).total()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_cut_geometry;
    use crate::mesh::{build_structured_square_mesh, transform_mesh, MeshTransform};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn meshes(n: usize, m: usize, lo: f64, angle: f64) -> (SimplicialMesh, SimplicialMesh) {
        let bg = build_structured_square_mesh(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0), n, n).unwrap();
        let ov = build_structured_square_mesh(Point2::new(lo, lo), Point2::new(1.0 - lo, 1.0 - lo), m, m).unwrap();
        (bg, transform_mesh(&ov, &MeshTransform::rotation(angle, Point2::new(0.5, 0.5))))
    }

    fn full_area(space: &CompositeStokesSpace) -> f64 {
        space.bg.active_cells().iter().map(|&c| space.bg.mesh().cell_area(c)).sum::<f64>() + space.ov.mesh().total_area()
    }

    #[test]
    fn linear_interpolants_have_zero_error() {
        let (bg, ov) = meshes(6, 3, 0.3, 0.4);
        let geom = build_cut_geometry(&bg, &ov).unwrap();
        let space = CompositeStokesSpace::new(&bg, &ov, &geom);
        let u = |p: Point2| [2.0 * p.x - p.y, 0.5 * p.y + 1.0];
        let p = |q: Point2| 3.0 * q.x - q.y;
        let x = space.interpolate(u, p);
        assert!(broken_h1_error(&space, &x, |_| [Point2::new(2.0, -1.0), Point2::new(0.0, 0.5)]) < 1e-12);
        assert!(velocity_l2_error(&space, &x, u) < 1e-12);
        assert!(pressure_l2_error(&space, &geom, &x, p).unwrap() < 1e-12);
        assert!(pressure_l2_error(&space, &geom, &x, |q| p(q) + 5.0).unwrap() < 1e-12);
        assert!(interface_jump_norm(&space, &geom, &x, 0.5).unwrap() < 1e-12);
    }

    #[test]
    fn zero_solution_returns_exact_norm() {
        let (bg, ov) = meshes(5, 3, 0.27, 0.0);
        let geom = build_cut_geometry(&bg, &ov).unwrap();
        let space = CompositeStokesSpace::new(&bg, &ov, &geom);
        let x = vec![0.0; space.total_dofs()];
        // u = (x, 0): |∇u|² = 1, so the error is the square root of the full-cell area
        let e = broken_h1_error(&space, &x, |_| [Point2::new(1.0, 0.0), Point2::new(0.0, 0.0)]);
        assert!((e - full_area(&space).sqrt()).abs() < 1e-13);
        let e = velocity_l2_error(&space, &x, |_| [0.0, 2.0]);
        assert!((e - 2.0 * full_area(&space).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn constant_jump_norm() {
        let (bg, ov) = meshes(5, 2, 0.27, 0.0);
        let geom = build_cut_geometry(&bg, &ov).unwrap();
        let space = CompositeStokesSpace::new(&bg, &ov, &geom);
        let mut x = vec![0.0; space.total_dofs()];
        for d in 0..space.ov.n_dofs() {
            x[space.u2(d, 0)] = 1.0;
        }
        let h = geom.interface_segments[0].h_penalty;
        let len = geom.interface_length();
        assert!((interface_jump_norm(&space, &geom, &x, 0.5).unwrap() - (len / h).sqrt()).abs() < 1e-12);
        assert!((interface_jump_norm(&space, &geom, &x, -0.5).unwrap() - (len * h).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn interpolation_error_rate() {
        let grad = |p: Point2| {
            let c = std::f64::consts::PI;
            [Point2::new(0.0, c * (c * p.y).cos()), Point2::new(0.0, 0.0)]
        };
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        for k in 0..3 {
            let (bg, ov) = meshes(6 << k, 2 << k, 0.3331, 0.35);
            let geom = build_cut_geometry(&bg, &ov).unwrap();
            let space = CompositeStokesSpace::new(&bg, &ov, &geom);
            let x = space.interpolate(|p| [(std::f64::consts::PI * p.y).sin(), 0.0], |_| 0.0);
            errs.push(broken_h1_error(&space, &x, grad));
            hs.push(bg.h_max());
        }
        let rate = fit_rate(&hs, &errs).unwrap();
        assert!((rate - 1.0).abs() < 0.1, "rate {rate}");
    }

    #[test]
    fn rate_fitting() {
        let h = [0.5, 0.25, 0.125, 0.0625];
        assert!((fit_rate(&h, &h).unwrap() - 1.0).abs() < 1e-14);
        let e: Vec<f64> = h.iter().map(|v| 3.0 * v * v).collect();
        assert!((fit_rate(&h, &e).unwrap() - 2.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let hs: Vec<f64> = (0..6).map(|k| 0.5f64.powi(k)).collect();
        let noisy: Vec<f64> = hs.iter().map(|v| v * (1.0 + 0.05 * rng.random_range(-1.0..1.0))).collect();
        let s = fit_rate(&hs, &noisy).unwrap();
        assert!((0.9..=1.1).contains(&s));
        assert!(fit_rate(&[1.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(fit_rate(&[1.0], &[1.0]).is_err());
        let mut bent = e.clone();
        bent[0] = 100.0;
        assert!((fit_rate_skipping(&h, &bent, 1).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gram_energies() {
        let (bg, ov) = meshes(6, 3, 0.29, 0.3);
        let geom = build_cut_geometry(&bg, &ov).unwrap();
        let space = CompositeStokesSpace::new(&bg, &ov, &geom);
        let parts = build_norm_gram_parts(&space, &geom);
        let g = parts.total();
        assert!(g.asymmetry() < 1e-14);

        let ones = space.pressure_constant_mode();
        assert!((g.bilinear(&ones, &ones) - full_area(&space)).abs() < 1e-11);

        let x = space.interpolate(|p| [p.x + 2.0 * p.y, -p.x], |_| 0.0);
        assert!(parts.jump.bilinear(&x, &x).abs() < 1e-12);
        let grad = broken_h1_error(&space, &vec![0.0; x.len()], |_| [Point2::new(1.0, 2.0), Point2::new(-1.0, 0.0)]);
        assert!((parts.gradient.bilinear(&x, &x).sqrt() - grad).abs() < 1e-10);

        let eig = crate::linalg::symmetric_eigenvalues(&g).unwrap();
        assert!(eig[0] >= -1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn norms_are_homogeneous(seed in 0u64..1000, s in -4.0f64..4.0) {
            let (bg, ov) = meshes(5, 3, 0.28, 0.2);
            let geom = build_cut_geometry(&bg, &ov).unwrap();
            let space = CompositeStokesSpace::new(&bg, &ov, &geom);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..space.total_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let sx: Vec<f64> = x.iter().map(|v| s * v).collect();
            let zero = |_| [Point2::new(0.0, 0.0); 2];
            let pairs = [
                (broken_h1_error(&space, &x, zero), broken_h1_error(&space, &sx, zero)),
                (velocity_l2_error(&space, &x, |_| [0.0; 2]), velocity_l2_error(&space, &sx, |_| [0.0; 2])),
                (pressure_l2_error(&space, &geom, &x, |_| 0.0).unwrap(), pressure_l2_error(&space, &geom, &sx, |_| 0.0).unwrap()),
                (interface_jump_norm(&space, &geom, &x, 0.5).unwrap(), interface_jump_norm(&space, &geom, &sx, 0.5).unwrap()),
            ];
            for (a, b) in pairs {
                prop_assert!((b - s.abs() * a).abs() <= 1e-12 * b.abs().max(1e-300));
            }
        }
    }
}
