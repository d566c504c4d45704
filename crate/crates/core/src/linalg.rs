//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition estimate above which a Gram matrix is rejected.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Counts of negative, zero and positive eigenvalues of a symmetric pencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

impl Inertia {
    /// Classify `values` with `|μ| <= tol` counted as zero.
    pub fn from_values(values: &[f64], tol: f64) -> Self {
        let mut out = Inertia { negative: 0, zero: 0, positive: 0 };
        for &v in values {
            if v < -tol {
                out.negative += 1;
            } else if v > tol {
                out.positive += 1;
            } else {
                out.zero += 1;
            }
        }
        out
    }
}

/// Eigenvalues and eigenvectors of a symmetric matrix, ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest relative asymmetry `max|a_ij - a_ji| / max(1, max|a_ij|)`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() / scale
}

/// Spectral norm of a symmetric matrix.
pub fn sym_op_norm(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Spectral norm of a general matrix.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Eigenvalues (ascending) of the symmetric-definite pencil `K x = μ M x`.
///
/// `M` is reduced by Cholesky; a condition estimate from the Cholesky
/// diagonal rejects nearly singular Gram matrices.
pub fn generalized_eigenvalues(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if k.nrows() != m.nrows() || k.ncols() != m.ncols() || k.nrows() != k.ncols() {
        return Err(Error::DimensionMismatch { expected: k.nrows(), found: m.nrows() });
    }
    if k.nrows() == 0 {
        return Ok(Vec::new());
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or(Error::IllConditioned { condition: f64::INFINITY })?;
    let l = chol.l();
    let (dmin, dmax) = l
        .diagonal()
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &d| (lo.min(d.abs()), hi.max(d.abs())));
    let condition = (dmax / dmin).powi(2);
    if !condition.is_finite() || condition > MAX_GRAM_CONDITION {
        return Err(Error::IllConditioned { condition });
    }
    // C = L⁻¹ K L⁻ᵀ; K symmetric gives C = L⁻¹ (L⁻¹ K)ᵀ
    let profile = RowProfile::new(&l);
    let mut x = k.clone();
    profile.forward_solve(&mut x);
    let mut c = x.transpose();
    profile.forward_solve(&mut c);
    Ok(sym_eigenvalues(&c))
}

/// Nonzero profile of a lower-triangular matrix, row by row. Gram
/// matrices of element discretizations are banded up to a few coupled
/// rows, so forward substitution over the profile is nearly linear.
struct RowProfile {
    start: Vec<usize>,
    rows: Vec<Vec<f64>>,
    diag: Vec<f64>,
}

impl RowProfile {
    fn new(l: &DMatrix<f64>) -> Self {
        let n = l.nrows();
        let mut start = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        let mut diag = Vec::with_capacity(n);
        for i in 0..n {
            let j0 = (0..i).find(|&j| l[(i, j)] != 0.0).unwrap_or(i);
            start.push(j0);
            rows.push((j0..i).map(|j| l[(i, j)]).collect());
            diag.push(l[(i, i)]);
        }
        Self { start, rows, diag }
    }

    /// Overwrites `b` with `L⁻¹ b`.
    fn forward_solve(&self, b: &mut DMatrix<f64>) {
        for mut col in b.column_iter_mut() {
            let col = col.as_mut_slice();
            for i in 0..col.len() {
                let j0 = self.start[i];
                let dot: f64 = self.rows[i].iter().zip(&col[j0..i]).map(|(a, x)| a * x).sum();
                col[i] = (col[i] - dot) / self.diag[i];
            }
        }
    }
}

/// Orthonormal basis for the span of the columns of `a` (rank cut at `tol`).
pub fn orthonormalize(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = a.nrows();
    if a.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let proj = a * a.transpose();
    let (values, vectors) = sym_eigen(&proj);
    let scale = values.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let keep: Vec<usize> = (0..n).filter(|&i| values[i] > tol * tol * scale).collect();
    let mut out = DMatrix::zeros(n, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        out.set_column(k, &vectors.column(i));
    }
    out
}

/// Orthonormal basis of the orthogonal complement of the columns of
/// `basis` (assumed orthonormal) in ℝⁿ.
pub fn orthonormal_complement(basis: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let proj = DMatrix::<f64>::identity(n, n) - basis * basis.transpose();
    let (values, vectors) = sym_eigen(&proj);
    let keep: Vec<usize> = (0..n).filter(|&i| values[i] > 0.5).collect();
    let mut out = DMatrix::zeros(n, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        out.set_column(k, &vectors.column(i));
    }
    out
}

/// `max |AᵀA − I|` for the columns of `a`.
pub fn orthonormality_defect(a: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 {
        return 0.0;
    }
    (a.transpose() * a - DMatrix::<f64>::identity(a.ncols(), a.ncols())).amax()
}

/// Standard symplectic matrix `[[0, I], [−I, 0]]` of size 2n.
pub fn symplectic_j(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

/// Singular values (descending) and right singular vectors (as columns,
/// matching the order of the singular values).
pub fn svd_right(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let ncols = a.ncols();
    if ncols == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    // Pad short matrices so every right singular vector is returned.
    let padded = if a.nrows() < ncols {
        let mut p = DMatrix::zeros(ncols, ncols);
        p.view_mut((0, 0), (a.nrows(), ncols)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = DMatrix::zeros(ncols, order.len());
    for (k, &i) in order.iter().enumerate() {
        v.set_column(k, &vt.row(i).transpose());
    }
    (values, v)
}

/// Singular values, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn max_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_of_axis_is_other_axis() {
        let v0 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let c = orthonormal_complement(&v0, 2);
        assert_eq!(c.ncols(), 1);
        assert!((c[(1, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generalized_eigs_diag() {
        let k = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 0.0, 2.0]));
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 4.0]));
        let e = generalized_eigenvalues(&k, &m).unwrap();
        assert!((e[0] + 0.5).abs() < 1e-14 && e[1].abs() < 1e-14 && (e[2] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn svd_right_pads_wide_matrices() {
        let a = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]);
        let (s, v) = svd_right(&a);
        assert_eq!(s.len(), 3);
        assert_eq!(v.ncols(), 3);
        assert!((s[0] - 1.0).abs() < 1e-14 && s[1].abs() < 1e-14);
    }
}
