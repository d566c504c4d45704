//! Second-variation coefficients along a trajectory, Jacobi fields and the
//! kernel of the Jacobi boundary problem.
//!
//! The linear system is written in Hamiltonian form with state
//! `(y, Pẏ + Qy)`; [`hamiltonian_matrix`] gives its generator.

use nalgebra::{DMatrix, DVector};

use crate::boundary::{self, BoundaryCondition};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::lagrangian::{self, LagrangianFamily};
use crate::linalg;

/// Relative symmetry tolerance for `R` samples.
pub const R_SYMMETRY_TOL: f64 = 1e-10;
/// Singular-value ratio below which a shooting direction is a kernel element.
pub const KERNEL_TOL: f64 = 1e-7;
/// Upper edge of the indeterminate band for kernel detection.
pub const KERNEL_WARN: f64 = 1e-5;

/// `A = [[−P⁻¹Q, P⁻¹], [R − QᵀP⁻¹Q, QᵀP⁻¹]]`.
pub fn hamiltonian_matrix(p: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let n = p.nrows();
    let chol = p.clone().cholesky().ok_or(Error::NonConvexPoint { t, min_eig: f64::NAN })?;
    let pinv = chol.inverse();
    let pinv_q = &pinv * q;
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&(-&pinv_q));
    a.view_mut((0, n), (n, n)).copy_from(&pinv);
    a.view_mut((n, 0), (n, n)).copy_from(&(r - q.transpose() * &pinv_q));
    a.view_mut((n, n), (n, n)).copy_from(&(q.transpose() * &pinv));
    Ok(a)
}

/// Samples of `P = ∂vvL`, `Q = ∂qvL`, `R = ∂qqL` on a uniform grid.
///
/// The grid has `2N + 1` samples for `N` elements: element `k` spans
/// samples `2k, 2k + 1, 2k + 2`, so every element carries its midpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPath {
    pub grid: Vec<f64>,
    pub p: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    /// The path covers `[0, τ/2]` of an even τ-periodic problem.
    pub half_interval: bool,
}

impl CoefficientPath {
    pub fn from_samples(
        grid: Vec<f64>,
        p: Vec<DMatrix<f64>>,
        q: Vec<DMatrix<f64>>,
        r: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let m = grid.len();
        if p.len() != m || q.len() != m || r.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: p.len().min(q.len()).min(r.len()) });
        }
        if m.is_multiple_of(2) || m < 3 {
            return Err(Error::InvalidInput(format!("need an odd number (>= 3) of samples (got {m})")));
        }
        let n = p[0].nrows();
        let span = grid[m - 1] - grid[0];
        if !(span > 0.0) || grid[0] != 0.0 {
            return Err(Error::InvalidInput("grid must start at 0 and increase".into()));
        }
        let h = span / (m - 1) as f64;
        for (i, t) in grid.iter().enumerate() {
            if (t - h * i as f64).abs() > 1e-9 * span {
                return Err(Error::InvalidInput("grid must be uniform".into()));
            }
        }
        for i in 0..m {
            for mat in [&p[i], &q[i], &r[i]] {
                if mat.nrows() != n || mat.ncols() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: mat.nrows() });
                }
            }
            let scale = r[i].amax().max(1.0);
            if linalg::asymmetry(&r[i]) > R_SYMMETRY_TOL * scale {
                return Err(Error::InvalidInput(format!("R is not symmetric at t = {}", grid[i])));
            }
            if linalg::asymmetry(&p[i]) > R_SYMMETRY_TOL * p[i].amax() || p[i].clone().cholesky().is_none() {
                let min_eig = linalg::sym_eigenvalues(&linalg::symmetrize(&p[i]))[0];
                return Err(Error::NonConvexPoint { t: grid[i], min_eig });
            }
        }
        Ok(Self { grid, p, q, r, half_interval: false })
    }

    /// Samples `f(t) = (P, Q, R)` on `[0, span]` with `elements` elements.
    pub fn from_fn<F>(span: f64, elements: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>),
    {
        let m = 2 * elements + 1;
        let grid: Vec<f64> = (0..m).map(|i| span * i as f64 / (m - 1) as f64).collect();
        let mut p = Vec::with_capacity(m);
        let mut q = Vec::with_capacity(m);
        let mut r = Vec::with_capacity(m);
        for &t in &grid {
            let (a, b, c) = f(t);
            p.push(a);
            q.push(b);
            r.push(c);
        }
        Self::from_samples(grid, p, q, r)
    }

    pub fn on_half_interval(mut self) -> Self {
        self.half_interval = true;
        self
    }

    pub fn dim(&self) -> usize {
        self.p[0].nrows()
    }

    pub fn elements(&self) -> usize {
        (self.grid.len() - 1) / 2
    }

    pub fn span(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    /// Element length.
    pub fn element_length(&self) -> f64 {
        self.span() / self.elements() as f64
    }

    /// Element endpoints `t_0 = 0, …, t_N`.
    pub fn node_times(&self) -> Vec<f64> {
        self.grid.iter().step_by(2).copied().collect()
    }

    /// Generator of the Hamiltonian Jacobi system at sample `i`.
    pub fn system_matrix(&self, i: usize) -> Result<DMatrix<f64>> {
        hamiltonian_matrix(&self.p[i], &self.q[i], &self.r[i], self.grid[i])
    }
}

/// Samples `(P, Q, R)` along a trajectory with an even number of steps.
pub fn coefficients_along(fam: &LagrangianFamily, lambda: f64, traj: &Trajectory) -> Result<CoefficientPath> {
    if !traj.steps().is_multiple_of(2) {
        return Err(Error::InvalidInput(format!("trajectory needs an even step count (got {})", traj.steps())));
    }
    let m = traj.grid.len();
    let mut p = Vec::with_capacity(m);
    let mut q = Vec::with_capacity(m);
    let mut r = Vec::with_capacity(m);
    for i in 0..m {
        let b = lagrangian::partials(fam, lambda, traj.grid[i], &traj.q[i], &traj.v[i])?;
        p.push(b.dvv);
        q.push(b.dqv);
        r.push(b.dqq);
    }
    let path = CoefficientPath::from_samples(traj.grid.clone(), p, q, r)?;
    Ok(if traj.half_interval { path.on_half_interval() } else { path })
}

/// Sampled solution (or candidate) of the Jacobi equation.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiField {
    pub grid: Vec<f64>,
    pub y: Vec<DVector<f64>>,
    pub ydot: Vec<DVector<f64>>,
    pub momentum: Vec<DVector<f64>>,
}

impl JacobiField {
    /// Builds the field from `y`, `ẏ` and the coefficients at the same
    /// samples (`stride` picks every `stride`-th coefficient sample).
    fn assemble(coeffs: &CoefficientPath, stride: usize, y: Vec<DVector<f64>>, ydot: Vec<DVector<f64>>) -> Self {
        let grid: Vec<f64> = coeffs.grid.iter().step_by(stride).copied().collect();
        let momentum = (0..y.len())
            .map(|k| &coeffs.p[k * stride] * &ydot[k] + &coeffs.q[k * stride] * &y[k])
            .collect();
        Self { grid, y, ydot, momentum }
    }

    /// Field with given `y`, `ẏ` on the full sample grid.
    pub fn from_samples(coeffs: &CoefficientPath, y: Vec<DVector<f64>>, ydot: Vec<DVector<f64>>) -> Result<Self> {
        if y.len() != coeffs.grid.len() || ydot.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: coeffs.grid.len(), found: y.len() });
        }
        Ok(Self::assemble(coeffs, 1, y, ydot))
    }
}

fn stride_of(coeffs: &CoefficientPath, field: &JacobiField) -> Option<usize> {
    let m = coeffs.grid.len();
    if field.grid.len() == m {
        Some(1)
    } else if field.grid.len() == coeffs.elements() + 1 {
        Some(2)
    } else {
        None
    }
}

/// Max norm of `d/dt(Pẏ + Qy) − (Qᵀẏ + Ry)` at interior samples, with the
/// derivative taken by central differences.
///
/// The field may live on the full sample grid or on the element nodes.
/// Returns `∞` when the grids do not match.
pub fn jacobi_residual(coeffs: &CoefficientPath, field: &JacobiField) -> f64 {
    let Some(stride) = stride_of(coeffs, field) else {
        return f64::INFINITY;
    };
    let k_max = field.grid.len();
    let mom: Vec<DVector<f64>> = (0..k_max)
        .map(|k| &coeffs.p[k * stride] * &field.ydot[k] + &coeffs.q[k * stride] * &field.y[k])
        .collect();
    let mut worst = 0.0_f64;
    for k in 1..k_max - 1 {
        let i = k * stride;
        let dm = (&mom[k + 1] - &mom[k - 1]) / (field.grid[k + 1] - field.grid[k - 1]);
        let rhs = coeffs.q[i].transpose() * &field.ydot[k] + &coeffs.r[i] * &field.y[k];
        worst = worst.max((dm - rhs).amax());
    }
    worst
}

/// Fourth-order Magnus step over element `k`:
/// `Ω = h/6 (A_a + 4A_m + A_b) + h²/12 [A_b − A_a, A_m]`.
///
/// `Ω` lies in the symplectic Lie algebra, so `exp(Ω)` is symplectic up to
/// rounding.
pub fn element_propagator(coeffs: &CoefficientPath, k: usize) -> Result<DMatrix<f64>> {
    let h = coeffs.grid[2 * k + 2] - coeffs.grid[2 * k];
    let a = coeffs.system_matrix(2 * k)?;
    let m = coeffs.system_matrix(2 * k + 1)?;
    let b = coeffs.system_matrix(2 * k + 2)?;
    let diff = &b - &a;
    let comm = &diff * &m - &m * &diff;
    let omega = (&a + &m * 4.0 + &b) * (h / 6.0) + comm * (h * h / 12.0);
    Ok(omega.exp())
}

/// `Φ(t_k)` at every element node, `Φ(0) = I`.
pub fn propagate(coeffs: &CoefficientPath) -> Result<Vec<DMatrix<f64>>> {
    let n = coeffs.dim();
    let mut out = Vec::with_capacity(coeffs.elements() + 1);
    let mut phi = DMatrix::identity(2 * n, 2 * n);
    out.push(phi.clone());
    for k in 0..coeffs.elements() {
        phi = element_propagator(coeffs, k)? * phi;
        out.push(phi.clone());
    }
    Ok(out)
}

/// Kernel of the Jacobi boundary problem.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBasis {
    /// Independent kernel fields on the element nodes, scaled to `max|y| = 1`.
    pub fields: Vec<JacobiField>,
    /// Singular values of the endpoint matrix relative to
    /// `max(σ_max, ‖Φ(τ)‖)`, ascending.
    pub ratios: Vec<f64>,
    /// Some ratio falls in `(tol, 1e-5]`: the nullity is grid-sensitive.
    pub indeterminate: bool,
}

impl KernelBasis {
    pub fn dim(&self) -> usize {
        self.fields.len()
    }
}

/// Shoots the Jacobi system from the admissible initial data of `bc` and
/// returns the fields that also satisfy the final conditions.
///
/// Product classes start from `y(0) ∈ V₀`, `p(0) ⊥ V₀` and require
/// `y(τ) ∈ V₁`, `p(τ) ⊥ V₁`. The twist class requires
/// `(y, p)(τ) = (Ey, Ep)(0)`. The even-periodic class works on the half
/// interval with `p = 0` at both ends.
pub fn kernel_basis(coeffs: &CoefficientPath, bc: &BoundaryCondition, tol: f64) -> Result<KernelBasis> {
    let n = coeffs.dim();
    bc.check_dim(n)?;
    if bc.is_half_interval() != coeffs.half_interval {
        return Err(Error::InvalidInput("even-periodic class needs a half-interval coefficient path".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("kernel tolerance must be positive".into()));
    }
    let phis = propagate(coeffs)?;
    let end = phis.last().unwrap();
    let (start, endpoint) = match bc {
        BoundaryCondition::ProductSubspaces { v0, v1, .. } => {
            let u = boundary::conormal_pair(bc)?.u_basis;
            let c1 = linalg::orthonormal_complement(v1, n);
            let mut rows = DMatrix::zeros(n, 2 * n);
            rows.view_mut((0, 0), (c1.ncols(), n)).copy_from(&c1.transpose());
            rows.view_mut((c1.ncols(), n), (v1.ncols(), n)).copy_from(&v1.transpose());
            debug_assert_eq!(v0.nrows(), n);
            let mat = rows * end * &u;
            (u, mat)
        }
        BoundaryCondition::OrthogonalTwist { e } => {
            let mut d = DMatrix::zeros(2 * n, 2 * n);
            d.view_mut((0, 0), (n, n)).copy_from(e);
            d.view_mut((n, n), (n, n)).copy_from(e);
            (DMatrix::identity(2 * n, 2 * n), end - d)
        }
        BoundaryCondition::EvenPeriodic => {
            let mut u = DMatrix::zeros(2 * n, n);
            u.view_mut((0, 0), (n, n)).fill_with_identity();
            let mat = end.view((n, 0), (n, 2 * n)) * &u;
            (u, mat)
        }
    };
    let (sv, vecs) = linalg::svd_right(&endpoint);
    // an endpoint matrix that vanishes identically (Φ(τ) = E) is all kernel,
    // so singular values are measured against ‖Φ(τ)‖ as well
    let top = sv.first().copied().unwrap_or(0.0).max(linalg::op_norm(end));
    let dim = start.ncols();
    let ratios: Vec<f64> = (0..dim)
        .rev()
        .map(|i| if top > 0.0 { sv.get(i).copied().unwrap_or(0.0) / top } else { 0.0 })
        .collect();
    let indeterminate = ratios.iter().any(|&r| r > tol && r <= KERNEL_WARN);
    let mut fields = Vec::new();
    for i in 0..dim {
        let s = sv.get(i).copied().unwrap_or(0.0);
        if top > 0.0 && s > tol * top {
            continue;
        }
        let z0 = &start * vecs.column(i);
        fields.push(field_from_initial(coeffs, &phis, &z0));
    }
    Ok(KernelBasis { fields, ratios, indeterminate })
}

fn field_from_initial(coeffs: &CoefficientPath, phis: &[DMatrix<f64>], z0: &DVector<f64>) -> JacobiField {
    let n = coeffs.dim();
    let mut y = Vec::with_capacity(phis.len());
    let mut ydot = Vec::with_capacity(phis.len());
    for (k, phi) in phis.iter().enumerate() {
        let z = phi * z0;
        let yk = z.rows(0, n).into_owned();
        let pk = z.rows(n, n).into_owned();
        let i = 2 * k;
        let chol = coeffs.p[i].clone().cholesky().expect("P checked SPD");
        ydot.push(chol.solve(&(pk - &coeffs.q[i] * &yk)));
        y.push(yk);
    }
    let scale = y.iter().map(|v| v.amax()).fold(0.0, f64::max);
    if scale > 0.0 {
        for v in y.iter_mut().chain(ydot.iter_mut()) {
            *v /= scale;
        }
    }
    JacobiField::assemble(coeffs, 2, y, ydot)
}
