//! Convergence, conditioning, inf-sup and single-solve drivers.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{self, ErrorReport};
use crate::assembly::{assemble_with_geometry, AssemblyOptions, LinearSystem, StokesProblem};
use crate::error::{Error, Result};
use crate::geometry::{build_cut_geometry, CutGeometry};
use crate::linalg::{self, generalized_min_singular, spectrum_info, symmetric_eigenvalues};
use crate::mesh::{build_structured_square_mesh, transform_mesh, MeshTransform, SimplicialMesh};
use crate::par;
use crate::point::Point2;
use crate::spaces::CompositeStokesSpace;
use crate::vtk::composite_fields;

/// Corners of the inner box used by the convergence study.
pub const CONVERGENCE_BOX: (f64, f64) = (0.3331, 0.6669);
/// Inner-box parameters of the conditioning sweep.
pub const DEFAULT_L_SWEEP: [f64; 5] = [0.21, 0.201, 0.2001, 0.20001, 0.200001];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Finest convergence level; levels `0..=levels` are run.
    pub levels: usize,
    /// Background subdivisions per side.
    pub n: usize,
    /// Overlapping subdivisions per side.
    pub m: usize,
    pub l: Vec<f64>,
    pub angle: f64,
    pub gamma: f64,
    pub delta: f64,
    pub beta: f64,
    pub with_sh: bool,
    pub seed: u64,
    /// Directory for matrix and geometry dumps.
    pub output_dir: Option<PathBuf>,
    pub dump_matrix: bool,
    pub dump_geometry: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            n: 5,
            m: 3,
            l: DEFAULT_L_SWEEP.to_vec(),
            angle: 0.35,
            gamma: StokesProblem::DEFAULT_GAMMA,
            delta: StokesProblem::DEFAULT_DELTA,
            beta: 1.0,
            with_sh: true,
            seed: 0,
            output_dir: None,
            dump_matrix: false,
            dump_geometry: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 {
            return Err(Error::InvalidArgument("levels must be at least 1".into()));
        }
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidArgument("mesh subdivisions must be positive".into()));
        }
        if self.l.is_empty() {
            return Err(Error::InvalidArgument("empty l list".into()));
        }
        if let Some(l) = self.l.iter().find(|&&l| !(l > 0.2 && l < 0.5)) {
            return Err(Error::InvalidArgument(format!("l = {l} is outside (0.2, 0.5)")));
        }
        if !self.angle.is_finite() {
            return Err(Error::InvalidArgument("angle must be finite".into()));
        }
        self.problem(ExactCase::Zero).validate()
    }

    pub fn options(&self) -> AssemblyOptions {
        AssemblyOptions { with_overlap_stabilization: self.with_sh }
    }

    pub fn problem(&self, case: ExactCase) -> StokesProblem {
        let mut p = case.problem();
        p.gamma = self.gamma;
        p.delta = self.delta;
        p.beta = self.beta;
        p
    }
}

/// Data of the test problems. All are divergence free with `g = u`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExactCase {
    /// `u = (sin πy, 0)`, `p = cos πx + 1`.
    Manufactured,
    /// `u = (y, x)`, `p = 2x - 1`, reproduced exactly by P1.
    Patch,
    /// `f = 0`, `g = 0`.
    Zero,
}

impl ExactCase {
    pub fn velocity(self, q: Point2) -> [f64; 2] {
        match self {
            ExactCase::Manufactured => [(PI * q.y).sin(), 0.0],
            ExactCase::Patch => [q.y, q.x],
            ExactCase::Zero => [0.0; 2],
        }
    }

    pub fn velocity_gradient(self, q: Point2) -> [Point2; 2] {
        match self {
            ExactCase::Manufactured => [Point2::new(0.0, PI * (PI * q.y).cos()), Point2::new(0.0, 0.0)],
            ExactCase::Patch => [Point2::new(0.0, 1.0), Point2::new(1.0, 0.0)],
            ExactCase::Zero => [Point2::new(0.0, 0.0); 2],
        }
    }

    pub fn pressure(self, q: Point2) -> f64 {
        match self {
            ExactCase::Manufactured => (PI * q.x).cos() + 1.0,
            ExactCase::Patch => 2.0 * q.x - 1.0,
            ExactCase::Zero => 0.0,
        }
    }

    /// `-Δu + ∇p`.
    pub fn force(self, q: Point2) -> [f64; 2] {
        match self {
            ExactCase::Manufactured => [PI * PI * (PI * q.y).sin() - PI * (PI * q.x).sin(), 0.0],
            ExactCase::Patch => [2.0, 0.0],
            ExactCase::Zero => [0.0; 2],
        }
    }

    pub fn problem(self) -> StokesProblem {
        StokesProblem::new(Arc::new(move |q| self.force(q)), Arc::new(move |q| self.velocity(q)))
    }
}

fn unit_square(n: usize) -> Result<SimplicialMesh> {
    build_structured_square_mesh(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0), n, n)
}

fn inner_box(lo: f64, hi: f64, m: usize, angle: f64) -> Result<SimplicialMesh> {
    let ov = build_structured_square_mesh(Point2::new(lo, lo), Point2::new(hi, hi), m, m)?;
    if angle == 0.0 {
        return Ok(ov);
    }
    let c = 0.5 * (lo + hi);
    Ok(transform_mesh(&ov, &MeshTransform::rotation(angle, Point2::new(c, c))))
}

/// Meshes of convergence level `level`: `3·2^level` background cells per
/// side and `2^level` per side on the rotated inner box.
pub fn convergence_meshes(level: usize, angle: f64) -> Result<(SimplicialMesh, SimplicialMesh)> {
    let (lo, hi) = CONVERGENCE_BOX;
    Ok((unit_square(3 << level)?, inner_box(lo, hi, 1 << level, angle)?))
}

/// Background `n × n` mesh of the unit square and `m × m` mesh of `[l, 1-l]²`.
pub fn condition_meshes(n: usize, m: usize, l: f64) -> Result<(SimplicialMesh, SimplicialMesh)> {
    Ok((unit_square(n)?, inner_box(l, 1.0 - l, m, 0.0)?))
}

/// Meshes of a single solve: the `n × n` background mesh and an `m × m`
/// mesh of `[l, 1-l]²` for the first `l`, rotated by `angle`.
pub fn solve_meshes(config: &ExperimentConfig) -> Result<(SimplicialMesh, SimplicialMesh)> {
    let l = config.l[0];
    Ok((unit_square(config.n)?, inner_box(l, 1.0 - l, config.m, config.angle)?))
}

/// Geometry, space and constrained system of one configuration.
pub struct Discretization<'m> {
    pub geometry: CutGeometry,
    pub space: CompositeStokesSpace<'m>,
    pub system: LinearSystem,
}

pub fn discretize<'m>(
    bg: &'m SimplicialMesh,
    ov: &'m SimplicialMesh,
    problem: &StokesProblem,
    options: AssemblyOptions,
) -> Result<Discretization<'m>> {
    let geometry = build_cut_geometry(bg, ov)?;
    let space = CompositeStokesSpace::new(bg, ov, &geometry);
    let system = assemble_with_geometry(&space, &geometry, problem, options)?;
    Ok(Discretization { geometry, space, system })
}

/// Writes `contents` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn dump(config: &ExperimentConfig, tag: &str, d: &Discretization) -> Result<Vec<PathBuf>> {
    let Some(dir) = &config.output_dir else { return Ok(Vec::new()) };
    let mut written = Vec::new();
    if config.dump_matrix {
        let path = dir.join(format!("{tag}_matrix.mtx"));
        let mut buf = Vec::new();
        d.system.matrix.write_matrix_market(&mut buf)?;
        write_atomic(&path, &buf)?;
        written.push(path);
    }
    if config.dump_geometry {
        let (pieces, segments) = d.geometry.to_csv();
        for (name, body) in [("pieces", pieces), ("segments", segments)] {
            let path = dir.join(format!("{tag}_{name}.csv"));
            write_atomic(&path, body.as_bytes())?;
            written.push(path);
        }
    }
    Ok(written)
}

fn format_l(l: f64) -> String {
    format!("{l}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceStudy {
    pub reports: Vec<ErrorReport>,
    pub slope_u_h1: f64,
    pub slope_p_l2: f64,
}

impl ConvergenceStudy {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(ErrorReport::CSV_HEADER);
        out.push('\n');
        for r in &self.reports {
            out.push_str(&r.to_csv_row());
            out.push('\n');
        }
        out.push_str(&format!("# slope_u_h1={:.6} slope_p_l2={:.6}\n", self.slope_u_h1, self.slope_p_l2));
        out
    }
}

/// Solves one level of the convergence study.
pub fn convergence_level(config: &ExperimentConfig, case: ExactCase, level: usize) -> Result<ErrorReport> {
    let (bg, ov) = convergence_meshes(level, config.angle)?;
    let d = discretize(&bg, &ov, &config.problem(case), config.options())?;
    dump(config, &format!("level{level}"), &d)?;
    let sol = linalg::solve(&d.system)?;
    log::info!("level {level}: {} dofs, residual {:.3e}", d.system.dim(), sol.residual);
    let x = &sol.x;
    Ok(ErrorReport {
        level,
        h_max: bg.h_max(),
        n_dofs: d.system.dim(),
        err_u_h1: analysis::broken_h1_error(&d.space, x, |q| case.velocity_gradient(q)),
        err_u_l2: analysis::velocity_l2_error(&d.space, x, |q| case.velocity(q)),
        err_p_l2: analysis::pressure_l2_error(&d.space, &d.geometry, x, |q| case.pressure(q))?,
        err_jump: analysis::interface_jump_norm(&d.space, &d.geometry, x, 0.5)?,
    })
}

/// Levels `0..=config.levels` with fitted slopes against `h_max`.
pub fn run_convergence(config: &ExperimentConfig, case: ExactCase) -> Result<ConvergenceStudy> {
    config.validate()?;
    let mut reports = Vec::with_capacity(config.levels + 1);
    for level in 0..=config.levels {
        reports.push(convergence_level(config, case, level).map_err(|e| e.context(format!("convergence level {level}")))?);
    }
    let h: Vec<f64> = reports.iter().map(|r| r.h_max).collect();
    let slope = |e: Vec<f64>| if e.iter().all(|&v| v > 0.0) { analysis::fit_rate(&h, &e) } else { Ok(f64::NAN) };
    Ok(ConvergenceStudy {
        slope_u_h1: slope(reports.iter().map(|r| r.err_u_h1).collect())?,
        slope_p_l2: slope(reports.iter().map(|r| r.err_p_l2).collect())?,
        reports,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionRecord {
    pub l: f64,
    pub n: usize,
    pub m: usize,
    pub with_sh: bool,
    pub kappa: f64,
    pub kappa_h2: f64,
    /// Eigenvalues of the reduced matrix below the null threshold.
    pub zero_count: usize,
    /// Smallest eigenvalue of the reduced velocity block.
    pub velocity_min_eigenvalue: f64,
}

pub const CONDITION_CSV_HEADER: &str = "l,N,M,with_sh,kappa,kappa_h2";

pub fn condition_csv(records: &[ConditionRecord]) -> String {
    let mut out = format!("{CONDITION_CSV_HEADER}\n");
    for r in records {
        out.push_str(&format!("{},{},{},{},{:.12e},{:.12e}\n", format_l(r.l), r.n, r.m, r.with_sh, r.kappa, r.kappa_h2));
    }
    out
}

/// Smallest eigenvalue of the velocity block of the Dirichlet-reduced matrix.
pub fn velocity_block_min_eigenvalue(d: &Discretization) -> Result<f64> {
    let keep: Vec<usize> = d.system.free_dofs().into_iter().filter(|&i| d.space.is_velocity(i)).collect();
    let eig = symmetric_eigenvalues(&d.system.matrix.submatrix(&keep))?;
    Ok(eig[0])
}

fn sweep_cases(config: &ExperimentConfig) -> Vec<(f64, bool)> {
    config.l.iter().flat_map(|&l| [(l, true), (l, false)]).collect()
}

pub fn condition_case(n: usize, m: usize, l: f64, with_sh: bool, config: &ExperimentConfig) -> Result<ConditionRecord> {
    let (bg, ov) = condition_meshes(n, m, l)?;
    let d = discretize(&bg, &ov, &config.problem(ExactCase::Zero), AssemblyOptions { with_overlap_stabilization: with_sh })?;
    dump(config, &format!("l{}_N{n}_M{m}_sh{with_sh}", format_l(l)), &d)?;
    let info = spectrum_info(&d.system.reduced_matrix(), Some(&d.system.reduced_nullspace()))?;
    let h = ov.h_min();
    let kappa = info.kappa();
    Ok(ConditionRecord {
        l,
        n,
        m,
        with_sh,
        kappa,
        kappa_h2: kappa * h * h,
        zero_count: info.zero_count,
        velocity_min_eigenvalue: velocity_block_min_eigenvalue(&d)?,
    })
}

/// Every `l` of the sweep, with and without the overlap term.
pub fn run_condition(config: &ExperimentConfig) -> Result<Vec<ConditionRecord>> {
    config.validate()?;
    par::map_slice(&sweep_cases(config), |&(l, sh)| {
        condition_case(config.n, config.m, l, sh, config).map_err(|e| e.context(format!("condition case l={l} with_sh={sh}")))
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct InfSupRecord {
    pub l: f64,
    pub with_sh: bool,
    pub c_infsup: f64,
}

pub const INFSUP_CSV_HEADER: &str = "l,with_sh,c_infsup";

pub fn infsup_csv(records: &[InfSupRecord]) -> String {
    let mut out = format!("{INFSUP_CSV_HEADER}\n");
    for r in records {
        out.push_str(&format!("{},{},{:.12e}\n", format_l(r.l), r.with_sh, r.c_infsup));
    }
    out
}

/// Numerical inf-sup constant of the reduced system in the mesh-dependent norm.
pub fn infsup_case(n: usize, m: usize, l: f64, with_sh: bool, config: &ExperimentConfig) -> Result<InfSupRecord> {
    let (bg, ov) = condition_meshes(n, m, l)?;
    let d = discretize(&bg, &ov, &config.problem(ExactCase::Zero), AssemblyOptions { with_overlap_stabilization: with_sh })?;
    let free = d.system.free_dofs();
    let gram = analysis::build_norm_gram(&d.space, &d.geometry).submatrix(&free);
    let c_infsup = generalized_min_singular(&d.system.reduced_matrix(), &gram)?;
    Ok(InfSupRecord { l, with_sh, c_infsup })
}

pub fn run_infsup(config: &ExperimentConfig) -> Result<Vec<InfSupRecord>> {
    config.validate()?;
    par::map_slice(&sweep_cases(config), |&(l, sh)| {
        infsup_case(config.n, config.m, l, sh, config).map_err(|e| e.context(format!("inf-sup case l={l} with_sh={sh}")))
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub n_dofs: usize,
    pub residual: f64,
    pub kappa: Option<f64>,
    /// Interface normals failing the seeded orientation probe.
    pub misoriented_normals: usize,
    pub files: Vec<PathBuf>,
    pub solution: Vec<f64>,
}

/// Solves on [`solve_meshes`] and writes one VTK file per mesh when an
/// output directory is configured.
pub fn run_solve(config: &ExperimentConfig, case: ExactCase, with_kappa: bool) -> Result<SolveReport> {
    config.validate()?;
    let (bg, ov) = solve_meshes(config)?;
    let d = discretize(&bg, &ov, &config.problem(case), config.options())?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let probe = 1e-6 * ov.h_min();
    let misoriented_normals = d.geometry.count_misoriented_normals(&ov, probe, 3, || rng.random::<f64>());
    if misoriented_normals > 0 {
        log::warn!("{misoriented_normals} interface normals failed the orientation probe");
    }

    let sol = linalg::solve(&d.system)?;
    let kappa =
        if with_kappa { Some(spectrum_info(&d.system.reduced_matrix(), Some(&d.system.reduced_nullspace()))?.kappa()) } else { None };

    let mut files = dump(config, "solve", &d)?;
    if let Some(dir) = &config.output_dir {
        let (fb, fo) = composite_fields(&d.space, &sol.x);
        for (name, field) in [("background", fb), ("overlapping", fo)] {
            let path = dir.join(format!("{name}.vtk"));
            let mut buf = Vec::new();
            field.write_legacy(&mut buf, &format!("{name} mesh"))?;
            write_atomic(&path, &buf)?;
            files.push(path);
        }
    }
    Ok(SolveReport { n_dofs: d.system.dim(), residual: sol.residual, kappa, misoriented_normals, files, solution: sol.x })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_cases_are_consistent() {
        // central differences of the exact fields
        let e = 1e-4;
        for case in [ExactCase::Manufactured, ExactCase::Patch] {
            for q in [Point2::new(0.3, 0.7), Point2::new(0.81, 0.12)] {
                let u = |p| case.velocity(p);
                let dx = |p: Point2, c: usize| (u(p + Point2::new(e, 0.0))[c] - u(p - Point2::new(e, 0.0))[c]) / (2.0 * e);
                let dy = |p: Point2, c: usize| (u(p + Point2::new(0.0, e))[c] - u(p - Point2::new(0.0, e))[c]) / (2.0 * e);
                assert!((dx(q, 0) + dy(q, 1)).abs() < 1e-7);
                let g = case.velocity_gradient(q);
                for c in 0..2 {
                    assert!((g[c].x - dx(q, c)).abs() < 1e-6 && (g[c].y - dy(q, c)).abs() < 1e-6);
                    let lap = (u(q + Point2::new(e, 0.0))[c]
                        + u(q - Point2::new(e, 0.0))[c]
                        + u(q + Point2::new(0.0, e))[c]
                        + u(q - Point2::new(0.0, e))[c]
                        - 4.0 * u(q)[c])
                        / (e * e);
                    let dp = if c == 0 {
                        (case.pressure(q + Point2::new(e, 0.0)) - case.pressure(q - Point2::new(e, 0.0))) / (2.0 * e)
                    } else {
                        (case.pressure(q + Point2::new(0.0, e)) - case.pressure(q - Point2::new(0.0, e))) / (2.0 * e)
                    };
                    assert!((case.force(q)[c] - (-lap + dp)).abs() < 1e-4);
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = [
            ExperimentConfig { levels: 0, ..Default::default() },
            ExperimentConfig { l: vec![0.2], ..Default::default() },
            ExperimentConfig { l: vec![0.5], ..Default::default() },
            ExperimentConfig { gamma: -1.0, ..Default::default() },
            ExperimentConfig { delta: 0.0, ..Default::default() },
            ExperimentConfig { m: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn mesh_builders() {
        let (bg, ov) = convergence_meshes(1, 0.35).unwrap();
        assert_eq!(bg.num_cells(), 2 * 36);
        assert_eq!(ov.num_cells(), 2 * 4);
        assert!((ov.total_area() - 0.3338f64.powi(2)).abs() < 1e-12);
        let (bg, ov) = condition_meshes(5, 3, 0.201).unwrap();
        assert_eq!(bg.num_cells(), 50);
        assert!((ov.h_min() - 2f64.sqrt() * 0.598 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn patch_convergence_is_exact() {
        let config = ExperimentConfig { levels: 2, ..Default::default() };
        let study = run_convergence(&config, ExactCase::Patch).unwrap();
        for r in &study.reports {
            assert!(r.err_u_h1 < 1e-9 && r.err_u_l2 < 1e-9 && r.err_p_l2 < 1e-9 && r.err_jump < 1e-9, "{r:?}");
        }
        assert!(study.to_csv().starts_with("level,h_max,ndofs,err_u_h1,err_u_l2,err_p_l2,err_jump\n"));
    }

    #[test]
    fn condition_records() {
        let config = ExperimentConfig { l: vec![0.21], ..Default::default() };
        let recs = run_condition(&config).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs[0].with_sh && !recs[1].with_sh);
        for r in &recs {
            assert_eq!(r.zero_count, 1);
            assert!(r.kappa.is_finite() && r.kappa > 1.0);
        }
        let csv = condition_csv(&recs);
        assert!(csv.starts_with("l,N,M,with_sh,kappa,kappa_h2\n0.21,5,3,true,"));
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let config = ExperimentConfig { l: vec![0.3], ..Default::default() };
        let rep = run_solve(&config, ExactCase::Zero, false).unwrap();
        assert!(rep.solution.iter().all(|&v| v.abs() < 1e-14));
        assert_eq!(rep.misoriented_normals, 0);
    }
}
