//! Piecewise-linear finite elements for the second variation.
//!
//! Nodal values are parameterized through per-node maps `Y_j = G_j u_j`
//! so boundary constraints are built into the trial space: a product
//! class restricts the end nodes to `V₀`, `V₁`; the twist class ties the
//! last node to `E` times the first; the even-periodic class leaves both
//! ends of the half interval free and doubles the forms.

use nalgebra::DMatrix;

use super::{IndexReport, Method};
use crate::boundary::BoundaryCondition;
use crate::error::{Error, Result};
use crate::jacobi::CoefficientPath;
use crate::linalg;

/// Minimum number of elements accepted by [`assemble_forms`].
pub const MIN_ELEMENTS: usize = 32;

/// Inner product for the Gram matrix `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Gram {
    /// `∫ y·z + ẏ·ż`.
    #[default]
    Sobolev,
    /// `∫ y·z`.
    L2,
}

struct NodeMap {
    offset: usize,
    g: DMatrix<f64>,
}

fn node_maps(coeffs: &CoefficientPath, bc: &BoundaryCondition) -> Result<(Vec<NodeMap>, usize, f64)> {
    let n = coeffs.dim();
    let nel = coeffs.elements();
    bc.check_dim(n)?;
    if bc.is_half_interval() != coeffs.half_interval {
        return Err(Error::InvalidInput("even-periodic class needs a half-interval coefficient path".into()));
    }
    let eye = || DMatrix::identity(n, n);
    let mut maps = Vec::with_capacity(nel + 1);
    let (total, factor) = match bc {
        BoundaryCondition::ProductSubspaces { v0, v1, .. } => {
            let d0 = v0.ncols();
            maps.push(NodeMap { offset: 0, g: v0.clone() });
            for j in 1..nel {
                maps.push(NodeMap { offset: d0 + (j - 1) * n, g: eye() });
            }
            let last = d0 + (nel - 1) * n;
            maps.push(NodeMap { offset: last, g: v1.clone() });
            (last + v1.ncols(), 1.0)
        }
        BoundaryCondition::OrthogonalTwist { e } => {
            for j in 0..nel {
                maps.push(NodeMap { offset: j * n, g: eye() });
            }
            maps.push(NodeMap { offset: 0, g: e.clone() });
            (nel * n, 1.0)
        }
        BoundaryCondition::EvenPeriodic => {
            for j in 0..=nel {
                maps.push(NodeMap { offset: j * n, g: eye() });
            }
            ((nel + 1) * n, 2.0)
        }
    };
    Ok((maps, total, factor))
}

fn scatter(global: &mut DMatrix<f64>, a: &NodeMap, b: &NodeMap, block: &DMatrix<f64>) {
    let (da, db) = (a.g.ncols(), b.g.ncols());
    if da == 0 || db == 0 {
        return;
    }
    let local = a.g.transpose() * block * &b.g;
    let mut view = global.view_mut((a.offset, b.offset), (da, db));
    view += local;
}

/// Stiffness and Gram matrices on the admissible P1 space.
///
/// `P` and the `Q` cross terms use Simpson's rule on each element. The `R`
/// term uses the equal-weight three-point rule `h/3 (f_a + f_m + f_b)`,
/// which cancels the leading `O(h²)` eigenvalue error of the P1 pencil.
pub fn assemble_forms(coeffs: &CoefficientPath, bc: &BoundaryCondition) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    assemble_forms_with(coeffs, bc, Gram::Sobolev)
}

pub fn assemble_forms_with(
    coeffs: &CoefficientPath,
    bc: &BoundaryCondition,
    gram: Gram,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if coeffs.elements() < MIN_ELEMENTS {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_ELEMENTS} elements (got {})",
            coeffs.elements()
        )));
    }
    assemble(coeffs, bc, gram)
}

fn assemble(
    coeffs: &CoefficientPath,
    bc: &BoundaryCondition,
    gram: Gram,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = coeffs.dim();
    let (maps, total, factor) = node_maps(coeffs, bc)?;
    let mut k = DMatrix::zeros(total, total);
    let mut m = DMatrix::zeros(total, total);
    let eye = DMatrix::<f64>::identity(n, n);
    for e in 0..coeffs.elements() {
        let (ia, im, ib) = (2 * e, 2 * e + 1, 2 * e + 2);
        let h = coeffs.grid[ib] - coeffs.grid[ia];
        let s = (&coeffs.p[ia] + &coeffs.p[im] * 4.0 + &coeffs.p[ib]) / (6.0 * h);
        let ca = (&coeffs.q[ia] + &coeffs.q[im] * 2.0) / 6.0;
        let cb = (&coeffs.q[im] * 2.0 + &coeffs.q[ib]) / 6.0;
        let rm = &coeffs.r[im] * 0.25;
        let r_aa = (&coeffs.r[ia] + &rm) * (h / 3.0);
        let r_bb = (&rm + &coeffs.r[ib]) * (h / 3.0);
        let r_ab = &rm * (h / 3.0);

        // ∫ żᵀQy: rows are the z node, columns the y node
        let t_aa = -&ca;
        let t_ab = -&cb;
        let t_ba = ca.clone();
        let t_bb = cb.clone();

        let k_aa = &s + &t_aa + t_aa.transpose() + &r_aa;
        let k_ab = -&s + &t_ab + t_ba.transpose() + &r_ab;
        let k_ba = -&s + &t_ba + t_ab.transpose() + &r_ab;
        let k_bb = &s + &t_bb + t_bb.transpose() + &r_bb;

        let (m_diag, m_off) = match gram {
            Gram::Sobolev => (&eye * (h / 3.0 + 1.0 / h), &eye * (h / 6.0 - 1.0 / h)),
            Gram::L2 => (&eye * (h / 3.0), &eye * (h / 6.0)),
        };

        let (a, b) = (&maps[e], &maps[e + 1]);
        scatter(&mut k, a, a, &k_aa);
        scatter(&mut k, a, b, &k_ab);
        scatter(&mut k, b, a, &k_ba);
        scatter(&mut k, b, b, &k_bb);
        scatter(&mut m, a, a, &m_diag);
        scatter(&mut m, a, b, &m_off);
        scatter(&mut m, b, a, &m_off);
        scatter(&mut m, b, b, &m_diag);
    }
    k *= factor;
    m *= factor;
    Ok((linalg::symmetrize(&k), linalg::symmetrize(&m)))
}

/// Default nullity threshold `h²` for element length `h`.
pub fn nullity_tolerance(element_length: f64) -> f64 {
    NULLITY_SCALE * element_length * element_length
}

/// Constant `c` of the nullity threshold `c·h²`.
pub const NULLITY_SCALE: f64 = 1.0;

/// Inertia of the pencil `K x = μ M x` with a nullity band `|μ| ≤ tol`.
pub fn morse_index_fem(k: &DMatrix<f64>, m: &DMatrix<f64>, tol: f64) -> Result<IndexReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("nullity tolerance must be positive".into()));
    }
    let mu = linalg::generalized_eigenvalues(k, m)?;
    let inertia = linalg::Inertia::from_values(&mu, tol);
    let near_zero_eigs: Vec<f64> = mu.iter().copied().filter(|x| x.abs() <= tol).collect();
    let indeterminate = mu.iter().any(|x| x.abs() > tol && x.abs() <= GUARD_FACTOR * tol);
    Ok(IndexReport {
        m_minus: inertia.negative,
        m_null: inertia.zero,
        strict_negative: mu.iter().filter(|&&x| x < 0.0).count(),
        near_zero_eigs,
        method: Method::Fem,
        grid_size: 0,
        tolerance: tol,
        indeterminate,
    })
}

/// Eigenvalues in `(tol, GUARD_FACTOR·tol]` flag the report as
/// grid-sensitive.
pub const GUARD_FACTOR: f64 = 10.0;

/// Assembles and counts in one step; `tol = None` uses [`nullity_tolerance`].
pub fn fem_index(coeffs: &CoefficientPath, bc: &BoundaryCondition, tol: Option<f64>) -> Result<IndexReport> {
    fem_index_with(coeffs, bc, tol, Gram::Sobolev)
}

pub fn fem_index_with(
    coeffs: &CoefficientPath,
    bc: &BoundaryCondition,
    tol: Option<f64>,
    gram: Gram,
) -> Result<IndexReport> {
    let (k, m) = assemble_forms_with(coeffs, bc, gram)?;
    let tol = tol.unwrap_or_else(|| nullity_tolerance(coeffs.element_length()));
    let mut report = morse_index_fem(&k, &m, tol)?;
    report.grid_size = coeffs.elements();
    Ok(report)
}
