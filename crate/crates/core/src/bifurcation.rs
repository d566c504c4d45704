//! Index scans along a branch, location of index jumps and the
//! index-based bifurcation certificates.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::boundary::BoundaryCondition;
use crate::dynamics::{Branch, Trajectory};
use crate::error::{Error, Result};
use crate::index::{fem_index, IndexReport};
use crate::jacobi::{coefficients_along, KernelBasis};
use crate::lagrangian::{self, LagrangianFamily};
use crate::linalg;

/// Default number of λ samples in a scan.
pub const DEFAULT_LAMBDA_POINTS: usize = 101;
/// Default bisection width for [`locate_mu`].
pub const DEFAULT_LOCATE_TOL: f64 = 1e-8;

/// `k` equally spaced values on `[lo, hi]`.
pub fn lambda_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect(),
    }
}

/// Inserts the midpoint of every cell.
pub fn refine_grid(grid: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * grid.len());
    for w in grid.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    out.extend(grid.last());
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    /// Nullity threshold; `None` uses `h²` of the trajectory grid.
    pub nullity_tol: Option<f64>,
    /// Bisection width for candidate location.
    pub locate_tol: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { nullity_tol: None, locate_tol: DEFAULT_LOCATE_TOL }
    }
}

/// Flags attached to a candidate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub necessary_ok: bool,
    pub sufficient_ii3_ok: bool,
    /// The one-sided indices are `m⁻(μ)` and `m⁻(μ) + m⁰(μ)` with both
    /// sides nondegenerate.
    pub rabinowitz: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub mu: f64,
    pub left_lambda: f64,
    pub right_lambda: f64,
    pub left_index: usize,
    pub right_index: usize,
    pub left_null: usize,
    pub right_null: usize,
    pub index_at_mu: usize,
    pub nullity_at_mu: usize,
    pub necessary_ok: bool,
    pub sufficient_ii3_ok: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationReport {
    pub lambdas: Vec<f64>,
    /// `None` where the solve or index computation failed.
    pub m_minus: Vec<Option<usize>>,
    pub m_null: Vec<Option<usize>>,
    pub errors: Vec<(f64, Error)>,
    pub candidates: Vec<Candidate>,
}

/// FEM index of the second variation at `γ_λ`.
pub fn index_at(
    fam: &LagrangianFamily,
    branch: &dyn Branch,
    bc: &BoundaryCondition,
    lambda: f64,
    nullity_tol: Option<f64>,
) -> Result<IndexReport> {
    let traj = branch.trajectory(fam, lambda)?;
    if traj.half_interval != bc.is_half_interval() {
        return Err(Error::InvalidInput("branch interval does not match the boundary class".into()));
    }
    let coeffs = coefficients_along(fam, lambda, &traj)?;
    fem_index(&coeffs, bc, nullity_tol)
}

/// Bisects on the raw negative-eigenvalue count until the bracket is
/// narrower than `tol`; returns its midpoint.
pub fn locate_mu(
    fam: &LagrangianFamily,
    branch: &dyn Branch,
    bc: &BoundaryCondition,
    lambda_lo: f64,
    lambda_hi: f64,
    tol: f64,
) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("location tolerance must be positive".into()));
    }
    let count = |l: f64| index_at(fam, branch, bc, l, None).map(|r| r.strict_negative);
    let (mut lo, mut hi) = (lambda_lo, lambda_hi);
    let c_lo = count(lo)?;
    if count(hi)? == c_lo {
        return Err(Error::LostJump { lo, hi });
    }
    while (hi - lo).abs() > tol {
        let mid = 0.5 * (lo + hi);
        if count(mid)? == c_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Necessary and index-interval sufficient conditions from the flanking
/// reports and the report at `μ`.
pub fn certify(left: &IndexReport, right: &IndexReport, at_mu: &IndexReport) -> Certificate {
    let (l, r) = (left.interval(), right.interval());
    let disjoint = l.1 < r.0 || r.1 < l.0;
    let one_side_clean = left.m_null == 0 || right.m_null == 0;
    let necessary_ok = at_mu.m_null > 0;
    let sufficient_ii3_ok = disjoint && one_side_clean;
    let jump = {
        let mut sides = [left.m_minus, right.m_minus];
        sides.sort_unstable();
        sides == [at_mu.m_minus, at_mu.m_minus + at_mu.m_null]
    };
    let rabinowitz = sufficient_ii3_ok && left.m_null == 0 && right.m_null == 0 && jump;
    let mut note = if !disjoint {
        "index intervals overlap; no index-based certificate".to_string()
    } else if !one_side_clean {
        "index intervals disjoint but both sides degenerate; not certified".to_string()
    } else if rabinowitz {
        format!(
            "bifurcation certified; index jumps {} -> {} = m-(mu) + m0(mu); Rabinowitz alternatives apply",
            left.m_minus, right.m_minus
        )
    } else {
        "bifurcation certified by disjoint index intervals".to_string()
    };
    note.push_str("; critical-group criteria not evaluated");
    Certificate { necessary_ok, sufficient_ii3_ok, rabinowitz, note }
}

/// FEM indices over `lambdas` (evaluated in parallel, merged in order),
/// then every index jump between consecutive nondegenerate samples is
/// located and certified.
pub fn branch_scan(
    fam: &LagrangianFamily,
    branch: &dyn Branch,
    bc: &BoundaryCondition,
    lambdas: &[f64],
    opts: &ScanOptions,
) -> BifurcationReport {
    let reports: Vec<Result<IndexReport>> =
        lambdas.par_iter().map(|&l| index_at(fam, branch, bc, l, opts.nullity_tol)).collect();
    let mut report = BifurcationReport {
        lambdas: lambdas.to_vec(),
        m_minus: reports.iter().map(|r| r.as_ref().ok().map(|r| r.m_minus)).collect(),
        m_null: reports.iter().map(|r| r.as_ref().ok().map(|r| r.m_null)).collect(),
        errors: Vec::new(),
        candidates: Vec::new(),
    };
    for (l, r) in lambdas.iter().zip(&reports) {
        if let Err(e) = r {
            report.errors.push((*l, e.clone()));
        }
    }
    let clean: Vec<(f64, &IndexReport)> = lambdas
        .iter()
        .zip(&reports)
        .filter_map(|(l, r)| r.as_ref().ok().filter(|r| r.m_null == 0).map(|r| (*l, r)))
        .collect();
    for w in clean.windows(2) {
        let ((la, ra), (lb, rb)) = (w[0], w[1]);
        if ra.m_minus == rb.m_minus {
            continue;
        }
        let located = locate_mu(fam, branch, bc, la, lb, opts.locate_tol)
            .and_then(|mu| index_at(fam, branch, bc, mu, opts.nullity_tol).map(|at| (mu, at)));
        match located {
            Ok((mu, at)) => {
                let cert = certify(ra, rb, &at);
                report.candidates.push(Candidate {
                    mu,
                    left_lambda: la,
                    right_lambda: lb,
                    left_index: ra.m_minus,
                    right_index: rb.m_minus,
                    left_null: ra.m_null,
                    right_null: rb.m_null,
                    index_at_mu: at.m_minus,
                    nullity_at_mu: at.m_null,
                    necessary_ok: cert.necessary_ok,
                    sufficient_ii3_ok: cert.sufficient_ii3_ok,
                    note: cert.note,
                });
            }
            Err(e) => report.errors.push((0.5 * (la + lb), e)),
        }
    }
    report
}

pub type HessianFn<'a> = dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + 'a;

/// Relative size below which an eigenvalue of the restricted form counts
/// as zero.
pub const DEFINITE_TOL: f64 = 1e-9;

/// Eigenvalues of `∫ ξᵀ H ξ` on the kernel, relative to the `L²` Gram of
/// the kernel basis.
pub fn restricted_form(kernel: &KernelBasis, traj: &Trajectory, hessian: &HessianFn) -> Result<Vec<f64>> {
    let d = kernel.dim();
    if d == 0 {
        return Err(Error::InvalidInput("kernel is trivial".into()));
    }
    let nodes = kernel.fields[0].grid.len();
    if traj.grid.len() != 2 * (nodes - 1) + 1 {
        return Err(Error::DimensionMismatch { expected: 2 * (nodes - 1) + 1, found: traj.grid.len() });
    }
    let h_nodes: Vec<DMatrix<f64>> =
        (0..nodes).map(|k| hessian(traj.grid[2 * k], &traj.q[2 * k], &traj.v[2 * k])).collect();
    let mut g = DMatrix::zeros(d, d);
    let mut gram = DMatrix::zeros(d, d);
    let grid = &kernel.fields[0].grid;
    for k in 0..nodes {
        let w = trapezoid_weight(grid, k);
        for i in 0..d {
            let xi = &kernel.fields[i].y[k];
            let hxi = &h_nodes[k] * xi;
            for j in 0..d {
                let xj = &kernel.fields[j].y[k];
                g[(i, j)] += w * xj.dot(&hxi);
                gram[(i, j)] += w * xj.dot(xi);
            }
        }
    }
    linalg::generalized_eigenvalues(&linalg::symmetrize(&g), &linalg::symmetrize(&gram))
}

fn trapezoid_weight(grid: &[f64], k: usize) -> f64 {
    let last = grid.len() - 1;
    let left = if k > 0 { grid[k] - grid[k - 1] } else { 0.0 };
    let right = if k < last { grid[k + 1] - grid[k] } else { 0.0 };
    0.5 * (left + right)
}

/// Predicted `(m⁻ for λ > μ, m⁻ for λ < μ)` from the sign of the
/// λ-derivative of the Hessian restricted to the kernel at `μ`.
///
/// Positive definite gives `(m⁻, m⁻ + m⁰)`, negative definite the swap.
pub fn hessian_perturbation_predict(
    at_point: &IndexReport,
    kernel: &KernelBasis,
    traj: &Trajectory,
    hessian: &HessianFn,
) -> Result<(usize, usize)> {
    if kernel.dim() != at_point.m_null {
        return Err(Error::InvalidInput(format!(
            "kernel dimension {} differs from the reported nullity {}",
            kernel.dim(),
            at_point.m_null
        )));
    }
    let eig = restricted_form(kernel, traj, hessian)?;
    let scale = eig.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let cut = DEFINITE_TOL * scale.max(1.0);
    let (lo, hi) = (at_point.m_minus, at_point.m_minus + at_point.m_null);
    if eig.iter().all(|&x| x > cut) {
        Ok((lo, hi))
    } else if eig.iter().all(|&x| x < -cut) {
        Ok((hi, lo))
    } else {
        Err(Error::IndefiniteRestriction)
    }
}

/// `∂λ ∂qqL` at `μ` by central differences with step `delta`, along the
/// given `(t, q, v)`.
pub fn lambda_hessian(fam: &LagrangianFamily, mu: f64, delta: f64) -> impl Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + '_ {
    move |t, q, v| {
        let plus = lagrangian::partials(fam, mu + delta, t, q, v).map(|b| b.dqq);
        let minus = lagrangian::partials(fam, mu - delta, t, q, v).map(|b| b.dqq);
        match (plus, minus) {
            (Ok(a), Ok(b)) => (a - b) / (2.0 * delta),
            _ => DMatrix::from_element(q.len(), q.len(), f64::NAN),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ClosedFormBranch;
    use crate::index::Method;
    use crate::jacobi::{kernel_basis, KERNEL_TOL};
    use crate::lagrangian::{build_pendulum, harmonic, harmonic_family};
    use std::f64::consts::PI;

    fn rep(m_minus: usize, m_null: usize) -> IndexReport {
        IndexReport {
            m_minus,
            m_null,
            strict_negative: m_minus,
            near_zero_eigs: vec![],
            method: Method::Fem,
            grid_size: 0,
            tolerance: 1e-6,
            indeterminate: false,
        }
    }

    #[test]
    fn certificate_examples() {
        let c = certify(&rep(1, 0), &rep(3, 0), &rep(1, 2));
        assert!(c.necessary_ok && c.sufficient_ii3_ok && c.rabinowitz);
        assert!(c.note.contains("Rabinowitz"));

        let c = certify(&rep(0, 0), &rep(0, 0), &rep(0, 0));
        assert!(!c.necessary_ok && !c.sufficient_ii3_ok);

        let c = certify(&rep(1, 1), &rep(3, 1), &rep(1, 2));
        assert!(!c.sufficient_ii3_ok);
        assert!(c.note.contains("not certified"));
    }

    #[test]
    fn grids() {
        assert_eq!(lambda_grid(-1.0, 1.0, 3), vec![-1.0, 0.0, 1.0]);
        assert_eq!(refine_grid(&[0.0, 1.0, 2.0]), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(lambda_grid(0.0, 1.0, DEFAULT_LAMBDA_POINTS).len(), 101);
    }

    #[test]
    fn constant_family_has_no_candidates() {
        let fam = harmonic(1, 1.0);
        let branch = ClosedFormBranch::zero(1, 1.0, 128);
        let rep = branch_scan(
            &fam,
            &branch,
            &BoundaryCondition::dirichlet(1),
            &lambda_grid(-0.2, 0.2, 11),
            &ScanOptions::default(),
        );
        assert!(rep.candidates.is_empty());
        assert!(rep.m_minus.iter().all(|m| *m == Some(0)));
    }

    #[test]
    fn shifted_oscillator_jump() {
        let fam = harmonic_family(1, |l| 1.0 + l);
        let branch = ClosedFormBranch::zero(1, PI, 512);
        let bc = BoundaryCondition::dirichlet(1);
        let rep = branch_scan(&fam, &branch, &bc, &lambda_grid(-0.2, 0.2, 21), &ScanOptions::default());
        assert_eq!(rep.candidates.len(), 1, "{rep:?}");
        let c = &rep.candidates[0];
        assert!(c.mu.abs() < 1e-8, "{}", c.mu);
        assert_eq!((c.left_index, c.right_index, c.nullity_at_mu), (0, 1, 1));
        assert!(c.necessary_ok && c.sufficient_ii3_ok);
        let i = rep.lambdas.iter().position(|l| l.abs() < 1e-12).unwrap();
        assert_eq!((rep.m_minus[i], rep.m_null[i]), (Some(0), Some(1)));

        let fam = harmonic_family(1, |l| l);
        let mu = locate_mu(&fam, &branch, &bc, 0.5, 1.5, 1e-8).unwrap();
        assert!((mu - 1.0).abs() < 1e-7);
        assert!(matches!(locate_mu(&fam, &branch, &bc, 0.5, 0.6, 1e-8), Err(Error::LostJump { .. })));
    }

    #[test]
    fn pendulum_predictor() {
        let pend = build_pendulum(1.0, 1.0, None).unwrap();
        let branch = ClosedFormBranch::zero(1, 2.0 * PI, 512);
        let bc = BoundaryCondition::periodic(1);
        let traj = branch.trajectory(&pend, 0.0).unwrap();
        let coeffs = coefficients_along(&pend, 0.0, &traj).unwrap();
        let at = fem_index(&coeffs, &bc, None).unwrap();
        let kernel = kernel_basis(&coeffs, &bc, KERNEL_TOL).unwrap();
        let h = lambda_hessian(&pend, 0.0, 1e-4);
        assert_eq!(hessian_perturbation_predict(&at, &kernel, &traj, &h).unwrap(), (3, 1));

        let plus = |_: f64, q: &DVector<f64>, _: &DVector<f64>| DMatrix::identity(q.len(), q.len());
        assert_eq!(hessian_perturbation_predict(&at, &kernel, &traj, &plus).unwrap(), (1, 3));
        let zero = |_: f64, q: &DVector<f64>, _: &DVector<f64>| DMatrix::zeros(q.len(), q.len());
        assert!(matches!(
            hessian_perturbation_predict(&at, &kernel, &traj, &zero),
            Err(Error::IndefiniteRestriction)
        ));
    }
}
