//! Compressed sparse row storage, direct solves and spectral diagnostics.

use std::io::Write;

use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Par, Side};

use crate::assembly::LinearSystem;
use crate::error::{Error, Result};

/// Relative threshold below which an eigenvalue counts as zero.
pub const EPS_NULL: f64 = 1e-9;

/// Square CSR matrix with sorted, unique column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Sums duplicate `(row, col, value)` entries. Explicit zeros are kept so
    /// that the sparsity pattern does not depend on cancellation.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, c, _) in triplets {
            assert!(r < n && c < n, "triplet ({r}, {c}) out of range {n}");
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for r in 0..n {
            let range = counts[r]..counts[r + 1];
            order.clear();
            order.extend(range.clone());
            // stable, so duplicates are summed in insertion order
            order.sort_by_key(|&k| cols[k]);
            for &k in &order {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == cols[k] {
                    *values.last_mut().unwrap() += vals[k];
                } else {
                    col_idx.push(cols[k]);
                    values.push(vals[k]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, &(0..n).map(|i| (i, i, 1.0)).collect::<Vec<_>>())
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut t = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &t)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.mul_vec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |a_ij - a_ji| / max |a_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        self.triplets().map(|(i, j, v)| (v - self.get(j, i)).abs()).fold(0.0, f64::max) / scale
    }

    /// Principal submatrix on `keep` (in the given order).
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            map[i] = k;
        }
        let mut t = Vec::new();
        for (new_i, &i) in keep.iter().enumerate() {
            for (j, v) in self.row(i) {
                if map[j] != usize::MAX {
                    t.push((new_i, map[j], v));
                }
            }
        }
        Self::from_triplets(keep.len(), &t)
    }

    /// `P A P^T` where row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        self.submatrix(perm)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::<f64>::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<Triplet<usize, usize, f64>> = self.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.n, self.n, &t).map_err(|e| Error::Factorization(format!("{e:?}")))
    }

    /// Matrix Market coordinate dump with 1-based indices.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n, self.n, self.nnz())?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }
}

/// Sparse LU solve of `a x = b`.
pub fn solve_sparse(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.dim() {
        return Err(Error::InvalidArgument(format!("rhs length {} for matrix of dimension {}", b.len(), a.dim())));
    }
    let lu = a.to_faer()?.sp_lu().map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let rhs = faer::Col::<f64>::from_fn(b.len(), |i| b[i]);
    let x = lu.solve(&rhs);
    let x: Vec<f64> = (0..b.len()).map(|i| x[i]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization("solution has non-finite entries; matrix is singular".into()));
    }
    Ok(x)
}

pub fn residual_norm(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let r = a.mul_vec(x);
    let num = r.iter().zip(b).map(|(ri, bi)| (ri - bi).powi(2)).sum::<f64>().sqrt();
    let den = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Solution of an assembled system.
#[derive(Clone, Debug)]
pub struct Solution {
    pub x: Vec<f64>,
    /// `‖A x - b‖ / ‖b‖` on the unpinned system.
    pub residual: f64,
    pub pinned_dof: Option<usize>,
}

/// Solves `system`, fixing the first dof of the declared nullspace to zero
/// when there is one.
pub fn solve(system: &LinearSystem) -> Result<Solution> {
    let pin = system.nullspace.iter().position(|&v| v != 0.0);
    solve_pinned(system, pin)
}

/// Solves with dof `pin` (if any) constrained to zero.
pub fn solve_pinned(system: &LinearSystem, pin: Option<usize>) -> Result<Solution> {
    let n = system.dim();
    let (a, b) = match pin {
        None => (system.matrix.clone(), system.rhs.clone()),
        Some(p) if p >= n => return Err(Error::OutOfRange { index: p, len: n }),
        Some(p) => {
            let t: Vec<_> = system.matrix.triplets().filter(|&(i, j, _)| i != p && j != p).chain([(p, p, 1.0)]).collect();
            let mut b = system.rhs.clone();
            b[p] = 0.0;
            (SparseMatrix::from_triplets(n, &t), b)
        }
    };
    let x = solve_sparse(&a, &b)?;
    let residual = residual_norm(&system.matrix, &x, &system.rhs);
    log::debug!("solved {n} dofs, relative residual {residual:e}");
    Ok(Solution { x, residual, pinned_dof: pin })
}

/// All eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &SparseMatrix) -> Result<Vec<f64>> {
    let asym = a.asymmetry();
    if asym > 1e-10 {
        return Err(Error::NotSymmetric(asym));
    }
    a.to_dense().self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))
}

/// Spectrum summary used for condition numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumInfo {
    pub max_abs: f64,
    pub min_nonzero_abs: f64,
    pub zero_count: usize,
}

impl SpectrumInfo {
    pub fn kappa(&self) -> f64 {
        self.max_abs / self.min_nonzero_abs
    }
}

fn split_spectrum(eigs: &[f64], expected_null: usize) -> Result<SpectrumInfo> {
    let max_abs = eigs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = EPS_NULL * max_abs;
    let zero_count = eigs.iter().filter(|v| v.abs() < cutoff).count();
    if zero_count > expected_null {
        return Err(Error::UnexpectedNullspace { found: zero_count, expected: expected_null });
    }
    let min_nonzero_abs = eigs.iter().map(|v| v.abs()).filter(|&v| v >= cutoff).fold(f64::INFINITY, f64::min);
    Ok(SpectrumInfo { max_abs, min_nonzero_abs, zero_count })
}

pub fn spectrum_info(matrix: &SparseMatrix, nullspace: Option<&[f64]>) -> Result<SpectrumInfo> {
    let expected = usize::from(nullspace.is_some());
    if let Some(z) = nullspace {
        if z.len() != matrix.dim() {
            return Err(Error::InvalidArgument("nullspace vector has the wrong length".into()));
        }
    }
    split_spectrum(&symmetric_eigenvalues(matrix)?, expected)
}

/// Ratio of the largest to the smallest nonzero eigenvalue modulus of a
/// symmetric matrix. `nullspace` declares at most one expected zero mode.
pub fn condition_number(matrix: &SparseMatrix, nullspace: Option<&[f64]>) -> Result<f64> {
    Ok(spectrum_info(matrix, nullspace)?.kappa())
}

/// Smallest nonzero generalized singular value of the symmetric `a` in the
/// inner product induced by the symmetric positive definite `m`, i.e. the
/// smallest nonzero `|λ|` of `a x = λ m x`. One zero mode of `a` is allowed.
pub fn generalized_min_singular(a: &SparseMatrix, m: &SparseMatrix) -> Result<f64> {
    if a.dim() != m.dim() {
        return Err(Error::InvalidArgument("matrix dimensions differ".into()));
    }
    for (mat, what) in [(a, "operator"), (m, "norm matrix")] {
        let asym = mat.asymmetry();
        if asym > 1e-10 {
            log::debug!("{what} asymmetry {asym:e}");
            return Err(Error::NotSymmetric(asym));
        }
    }
    let n = a.dim();
    let llt = m.to_dense().llt(Side::Lower).map_err(|_| Error::NotPositiveDefinite)?;
    let l = llt.L();
    // c = L^{-1} a L^{-T}
    let mut c = a.to_dense();
    solve_lower_triangular_in_place(l, c.as_mut(), Par::Seq);
    let mut ct = c.transpose().to_owned();
    solve_lower_triangular_in_place(l, ct.as_mut(), Par::Seq);
    let sym = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (ct[(i, j)] + ct[(j, i)]));
    let eigs = sym.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    Ok(split_spectrum(&eigs, 1)?.min_nonzero_abs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(d: &[f64]) -> SparseMatrix {
        SparseMatrix::from_triplets(d.len(), &d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect::<Vec<_>>())
    }

    #[test]
    fn triplets_are_summed_and_sorted() {
        let m = SparseMatrix::from_triplets(3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 3.0), (2, 1, -1.0), (1, 1, 0.0)]);
        assert_eq!(m.nnz(), 4);
        assert_eq!(m.get(0, 2), 4.0);
        assert_eq!(m.row(0).map(|(j, _)| j).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), vec![6.0, 0.0, -1.0]);
    }

    #[test]
    fn identity_and_two_by_two_solves() {
        let b = vec![1.0, -2.0, 3.5];
        assert_eq!(solve_sparse(&SparseMatrix::identity(3), &b).unwrap(), b);
        let a = SparseMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let x = solve_sparse(&a, &[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        assert!(residual_norm(&a, &x, &[3.0, 3.0]) < 1e-15);
    }

    #[test]
    fn singular_solve_fails() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(solve_sparse(&a, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn condition_numbers() {
        assert!((condition_number(&diag(&[4.0, 2.0, 1.0]), None).unwrap() - 4.0).abs() < 1e-12);
        let z = [0.0, 1.0, 0.0];
        assert!((condition_number(&diag(&[3.0, 0.0, 1.0]), Some(&z)).unwrap() - 3.0).abs() < 1e-12);
        assert!(matches!(condition_number(&diag(&[3.0, 0.0, 1.0]), None), Err(Error::UnexpectedNullspace { found: 1, expected: 0 })));
        assert!(matches!(condition_number(&diag(&[0.0, 0.0, 1.0]), Some(&z)), Err(Error::UnexpectedNullspace { .. })));
        let nonsym = SparseMatrix::from_dense(&[vec![1.0, 2.0], vec![0.0, 1.0]]);
        assert!(matches!(condition_number(&nonsym, None), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn condition_number_indefinite() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        // eigenvalues 3 and -1
        assert!((condition_number(&a, None).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn generalized_singular_values() {
        let i2 = SparseMatrix::identity(2);
        assert!((generalized_min_singular(&i2, &i2).unwrap() - 1.0).abs() < 1e-14);
        assert!((generalized_min_singular(&diag(&[2.0, 1.0]), &i2).unwrap() - 1.0).abs() < 1e-14);
        // a = m scaled by 3 gives 3 for any SPD m
        let m = SparseMatrix::from_dense(&[vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 0.5], vec![0.0, 0.5, 2.0]]);
        let a = SparseMatrix::from_triplets(3, &m.triplets().map(|(i, j, v)| (i, j, 3.0 * v)).collect::<Vec<_>>());
        assert!((generalized_min_singular(&a, &m).unwrap() - 3.0).abs() < 1e-12);
        let not_spd = diag(&[1.0, -1.0]);
        assert!(matches!(generalized_min_singular(&i2, &not_spd), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn matrix_market_dump() {
        let a = SparseMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 0.0]]);
        let mut out = Vec::new();
        a.write_matrix_market(&mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "%%MatrixMarket matrix coordinate real general");
        assert_eq!(lines[1], "2 2 3");
        assert_eq!(lines[2], "1 1 2e0");
    }

    #[test]
    fn submatrix_and_permutation() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 2.0, 0.0], vec![2.0, 5.0, 3.0], vec![0.0, 3.0, 10.0]]);
        let s = a.submatrix(&[0, 2]);
        assert_eq!(s.to_dense()[(1, 1)], 10.0);
        assert_eq!(s.get(0, 1), 0.0);
        let p = a.permuted(&[2, 0, 1]);
        assert_eq!(p.get(0, 2), 3.0);
        let k0 = condition_number(&a, None).unwrap();
        let k1 = condition_number(&p, None).unwrap();
        assert!(((k0 - k1) / k0).abs() < 1e-9);
    }
}
