use std::io::BufReader;

use olm_core::assembly::{assemble_system, AssemblyOptions, StokesProblem};
use olm_core::experiments::{condition_meshes, convergence_meshes, discretize, ExactCase};
use olm_core::linalg::{condition_number, solve, solve_pinned, SparseMatrix};
use olm_core::mesh::SimplicialMesh;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn pin_choice_only_shifts_pressure() {
    let (bg, ov) = convergence_meshes(2, 0.35).unwrap();
    let d = discretize(&bg, &ov, &ExactCase::Manufactured.problem(), AssemblyOptions::default()).unwrap();
    let a = solve(&d.system).unwrap();
    let other = d.space.p2(d.space.ov.n_dofs() / 2);
    let b = solve_pinned(&d.system, Some(other)).unwrap();
    assert!(a.residual < 1e-10 && b.residual < 1e-10);
    assert_eq!(a.x[a.pinned_dof.unwrap()], 0.0);
    assert_eq!(b.x[other], 0.0);

    let diff: Vec<f64> = (0..a.x.len()).filter(|&i| d.space.is_pressure(i)).map(|i| a.x[i] - b.x[i]).collect();
    let mean = diff.iter().sum::<f64>() / diff.len() as f64;
    assert!(diff.iter().all(|v| (v - mean).abs() < 1e-8));
    for i in (0..a.x.len()).filter(|&i| d.space.is_velocity(i)) {
        assert!((a.x[i] - b.x[i]).abs() < 1e-8);
    }
}

#[test]
fn kappa_is_invariant_under_symmetric_permutation() {
    let (bg, ov) = condition_meshes(5, 3, 0.23).unwrap();
    let sys = assemble_system(&bg, &ov, &StokesProblem::zero(), AssemblyOptions::default()).unwrap();
    let a = sys.reduced_matrix();
    let z = sys.reduced_nullspace();
    let k = condition_number(&a, Some(&z)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..3 {
        let mut perm: Vec<usize> = (0..a.dim()).collect();
        perm.shuffle(&mut rng);
        let pz: Vec<f64> = perm.iter().map(|&i| z[i]).collect();
        let kp = condition_number(&a.permuted(&perm), Some(&pz)).unwrap();
        assert!(((kp - k) / k).abs() < 1e-8, "{kp} vs {k}");
    }
}

#[test]
fn galerkin_orthogonality_for_linear_solution() {
    // the interpolant of an exact linear solution satisfies the discrete equations
    for angle in [0.0, 0.35, std::f64::consts::PI / 7.0] {
        let (bg, ov) = convergence_meshes(1, angle).unwrap();
        for with_sh in [true, false] {
            let d = discretize(&bg, &ov, &ExactCase::Patch.problem(), AssemblyOptions { with_overlap_stabilization: with_sh }).unwrap();
            let x = d.space.interpolate(|q| ExactCase::Patch.velocity(q), |q| ExactCase::Patch.pressure(q));
            let r = d.system.matrix.mul_vec(&x);
            let worst = r.iter().zip(&d.system.rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-12, "angle {angle} sh {with_sh}: {worst:e}");
        }
    }
}

#[test]
fn mesh_files_roundtrip_through_disk() {
    let (bg, _) = convergence_meshes(1, 0.0).unwrap();
    let mut file = tempfile::NamedTempFile::new().unwrap();
    bg.write_ascii(&mut file).unwrap();
    let back = SimplicialMesh::read_ascii(BufReader::new(file.reopen().unwrap())).unwrap();
    assert_eq!(back.cells(), bg.cells());
    assert_eq!(back.vertices(), bg.vertices());
}

#[test]
fn matrix_market_dump_matches_matrix() {
    let (bg, ov) = condition_meshes(5, 3, 0.3).unwrap();
    let sys = assemble_system(&bg, &ov, &StokesProblem::zero(), AssemblyOptions::default()).unwrap();
    let mut buf = Vec::new();
    sys.matrix.write_matrix_market(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('%'));
    let dims: Vec<usize> = lines.next().unwrap().split_whitespace().map(|t| t.parse().unwrap()).collect();
    assert_eq!(dims, vec![sys.dim(), sys.dim(), sys.matrix.nnz()]);
    let t: Vec<(usize, usize, f64)> = lines
        .map(|l| {
            let v: Vec<&str> = l.split_whitespace().collect();
            (v[0].parse::<usize>().unwrap() - 1, v[1].parse::<usize>().unwrap() - 1, v[2].parse().unwrap())
        })
        .collect();
    assert_eq!(SparseMatrix::from_triplets(sys.dim(), &t), sys.matrix);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn stabilized_matrix_has_one_zero_mode(l in 0.2001f64..0.32, n in 4usize..8, m in 2usize..5) {
        let (bg, ov) = condition_meshes(n, m, l).unwrap();
        let sys = assemble_system(&bg, &ov, &StokesProblem::zero(), AssemblyOptions::default()).unwrap();
        prop_assert!(sys.matrix.asymmetry() < 1e-12);
        let info = olm_core::linalg::spectrum_info(&sys.reduced_matrix(), Some(&sys.reduced_nullspace())).unwrap();
        prop_assert_eq!(info.zero_count, 1);
    }
}
