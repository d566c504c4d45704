//! Euler–Lagrange dynamics: explicit acceleration, fixed-step RK4
//! integration, and damped-Newton shooting for the boundary value problem.
//!
//! The shooting Jacobian is propagated in the Hamiltonian (position,
//! momentum) form of the Jacobi equation, the same linear system the focal
//! engine integrates.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::boundary::{self, BoundaryCondition};
use crate::error::{Error, Result};
use crate::jacobi::hamiltonian_matrix;
use crate::lagrangian::{self, LagrangianFamily};
use crate::linalg;

/// Sampled solution of the Euler–Lagrange equation at a fixed `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub lambda: f64,
    pub grid: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    /// Max norm of `d/dt ∂vL − ∂qL` on the grid (second-order estimate).
    pub el_residual: f64,
    /// Max norm of the boundary residual (0 for initial value problems).
    pub bc_residual: f64,
    /// Samples cover `[0, τ/2]` of an even τ-periodic curve.
    pub half_interval: bool,
    /// Newton iterations used (0 when not produced by shooting).
    pub iterations: usize,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.q.first().map_or(0, |q| q.len())
    }

    /// Length of the sampled interval.
    pub fn span(&self) -> f64 {
        self.grid.last().copied().unwrap_or(0.0) - self.grid.first().copied().unwrap_or(0.0)
    }

    pub fn steps(&self) -> usize {
        self.grid.len().saturating_sub(1)
    }
}

fn time_step_for(scale: f64) -> f64 {
    1e-5 * scale.abs().max(1.0)
}

fn momentum_time_derivative(
    fam: &LagrangianFamily,
    lambda: f64,
    t: f64,
    q: &DVector<f64>,
    v: &DVector<f64>,
    ht: f64,
) -> Result<DVector<f64>> {
    let plus = lagrangian::momentum(fam, lambda, t + ht, q, v)?;
    let minus = lagrangian::momentum(fam, lambda, t - ht, q, v)?;
    Ok((plus - minus) / (2.0 * ht))
}

/// `ẍ = (∂vvL)⁻¹ [∂qL − ∂tvL − ∂qvL·v]` with `∂tvL` from central
/// differences of `∂vL` in `t` (step `1e-5`).
pub fn accel(fam: &LagrangianFamily, lambda: f64, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    accel_with_step(fam, lambda, t, q, v, time_step_for(1.0))
}

/// [`accel`] with an explicit time step for the `∂tvL` difference.
pub fn accel_with_step(
    fam: &LagrangianFamily,
    lambda: f64,
    t: f64,
    q: &DVector<f64>,
    v: &DVector<f64>,
    ht: f64,
) -> Result<DVector<f64>> {
    let p = lagrangian::partials(fam, lambda, t, q, v)?;
    let dtv = momentum_time_derivative(fam, lambda, t, q, v, ht)?;
    solve_spd(&p.dvv, &(p.dq - dtv - &p.dqv * v), t)
}

fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    a.clone()
        .cholesky()
        .map(|c| c.solve(b))
        .ok_or(Error::NonConvexPoint { t, min_eig: f64::NAN })
}

/// Energy `⟨∂vL, v⟩ − L`.
pub fn energy(fam: &LagrangianFamily, lambda: f64, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    Ok(lagrangian::momentum(fam, lambda, t, q, v)?.dot(v) - fam.eval(lambda, t, q, v))
}

/// Second-order estimate of `max_i |d/dt ∂vL − ∂qL|` along samples.
pub fn el_residual(
    fam: &LagrangianFamily,
    lambda: f64,
    grid: &[f64],
    q: &[DVector<f64>],
    v: &[DVector<f64>],
) -> Result<f64> {
    let m = grid.len();
    if m < 3 {
        return Err(Error::InvalidInput("need at least three samples".into()));
    }
    let mut p = Vec::with_capacity(m);
    let mut dq = Vec::with_capacity(m);
    for i in 0..m {
        let b = lagrangian::partials(fam, lambda, grid[i], &q[i], &v[i])?;
        p.push(b.dv);
        dq.push(b.dq);
    }
    let mut worst = 0.0_f64;
    for i in 0..m {
        let dp = if i == 0 {
            let h = grid[1] - grid[0];
            (&p[1] * 4.0 - &p[0] * 3.0 - &p[2]) / (2.0 * h)
        } else if i == m - 1 {
            let h = grid[m - 1] - grid[m - 2];
            (&p[m - 1] * 3.0 - &p[m - 2] * 4.0 + &p[m - 3]) / (2.0 * h)
        } else {
            (&p[i + 1] - &p[i - 1]) / (grid[i + 1] - grid[i - 1])
        };
        worst = worst.max((dp - &dq[i]).amax());
    }
    Ok(worst)
}

/// Default bound on `|q| + |v|` before an integration is declared blown up.
pub const DEFAULT_BLOWUP: f64 = 1e8;

/// Fixed-step RK4 integration of `(q̇, v̇) = (v, accel)` on `[0, τ]`.
pub fn integrate_ivp(
    fam: &LagrangianFamily,
    lambda: f64,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
    tau: f64,
    steps: usize,
) -> Result<Trajectory> {
    if steps < 16 {
        return Err(Error::InvalidInput(format!("need at least 16 steps (got {steps})")));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("interval length must be positive (got {tau})")));
    }
    let shot = shoot(fam, lambda, q0, v0, tau, steps, false, DEFAULT_BLOWUP)?;
    let el = el_residual(fam, lambda, &shot.grid, &shot.q, &shot.v)?;
    Ok(Trajectory {
        lambda,
        grid: shot.grid,
        q: shot.q,
        v: shot.v,
        el_residual: el,
        bc_residual: 0.0,
        half_interval: false,
        iterations: 0,
    })
}

struct Shot {
    grid: Vec<f64>,
    q: Vec<DVector<f64>>,
    v: Vec<DVector<f64>>,
    /// `∂(q_end, p_end) / ∂(q0, v0)`.
    sens: Option<DMatrix<f64>>,
}

struct Stage {
    acc: DVector<f64>,
    a: Option<DMatrix<f64>>,
}

#[allow(clippy::too_many_arguments)]
fn stage(
    fam: &LagrangianFamily,
    lambda: f64,
    t: f64,
    q: &DVector<f64>,
    v: &DVector<f64>,
    ht: f64,
    want_a: bool,
) -> Result<Stage> {
    let p = lagrangian::partials(fam, lambda, t, q, v)?;
    let dtv = momentum_time_derivative(fam, lambda, t, q, v, ht)?;
    let acc = solve_spd(&p.dvv, &(&p.dq - dtv - &p.dqv * v), t)?;
    let a = if want_a { Some(hamiltonian_matrix(&p.dvv, &p.dqv, &p.dqq, t)?) } else { None };
    Ok(Stage { acc, a })
}

#[allow(clippy::too_many_arguments)]
fn shoot(
    fam: &LagrangianFamily,
    lambda: f64,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
    t_end: f64,
    steps: usize,
    with_sens: bool,
    bound: f64,
) -> Result<Shot> {
    let n = fam.dim();
    if q0.len() != n || v0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: q0.len().max(v0.len()) });
    }
    let h = t_end / steps as f64;
    let ht = time_step_for(t_end);
    let mut grid = Vec::with_capacity(steps + 1);
    let mut qs = Vec::with_capacity(steps + 1);
    let mut vs = Vec::with_capacity(steps + 1);
    let (mut q, mut v) = (q0.clone(), v0.clone());
    let mut y = if with_sens {
        let p0 = lagrangian::partials(fam, lambda, 0.0, q0, v0)?;
        let mut y0 = DMatrix::zeros(2 * n, 2 * n);
        y0.view_mut((0, 0), (n, n)).fill_with_identity();
        y0.view_mut((n, 0), (n, n)).copy_from(&p0.dqv);
        y0.view_mut((n, n), (n, n)).copy_from(&p0.dvv);
        Some(y0)
    } else {
        None
    };
    grid.push(0.0);
    qs.push(q.clone());
    vs.push(v.clone());
    for k in 0..steps {
        let t = k as f64 * h;
        let s1 = stage(fam, lambda, t, &q, &v, ht, with_sens)?;
        let (q2, v2) = (&q + &v * (0.5 * h), &v + &s1.acc * (0.5 * h));
        let s2 = stage(fam, lambda, t + 0.5 * h, &q2, &v2, ht, with_sens)?;
        let (q3, v3) = (&q + &v2 * (0.5 * h), &v + &s2.acc * (0.5 * h));
        let s3 = stage(fam, lambda, t + 0.5 * h, &q3, &v3, ht, with_sens)?;
        let (q4, v4) = (&q + &v3 * h, &v + &s3.acc * h);
        let s4 = stage(fam, lambda, t + h, &q4, &v4, ht, with_sens)?;
        if let Some(ym) = y.as_mut() {
            let (a1, a2, a3, a4) = (s1.a.unwrap(), s2.a.unwrap(), s3.a.unwrap(), s4.a.unwrap());
            let k1 = &a1 * &*ym;
            let k2 = &a2 * (&*ym + &k1 * (0.5 * h));
            let k3 = &a3 * (&*ym + &k2 * (0.5 * h));
            let k4 = &a4 * (&*ym + &k3 * h);
            *ym += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        q += (&v + &v2 * 2.0 + &v3 * 2.0 + &v4) * (h / 6.0);
        v += (&s1.acc + &s2.acc * 2.0 + &s3.acc * 2.0 + &s4.acc) * (h / 6.0);
        let norm = q.norm() + v.norm();
        if !norm.is_finite() || norm > bound {
            return Err(Error::BlowUp { t: t + h, norm });
        }
        grid.push(if k + 1 == steps { t_end } else { t + h });
        qs.push(q.clone());
        vs.push(v.clone());
    }
    Ok(Shot { grid, q: qs, v: vs, sens: y })
}

/// Settings for [`solve_bvp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvpOptions {
    /// RK4 steps over the integration interval (must be even so the
    /// trajectory can feed the coefficient sampler).
    pub steps: usize,
    /// Boundary residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Bound on the a-posteriori Euler–Lagrange residual.
    pub el_tol: f64,
    pub blowup: f64,
}

impl Default for BvpOptions {
    fn default() -> Self {
        Self { steps: 512, tol: 1e-10, max_iter: 50, el_tol: 1e-3, blowup: DEFAULT_BLOWUP }
    }
}

/// Singular-value ratio below which the shooting Jacobian is singular.
pub const SHOOTING_RANK_TOL: f64 = 1e-8;
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 30;

struct Evaluated {
    shot: Shot,
    residual: DVector<f64>,
    jacobian: DMatrix<f64>,
}

fn evaluate(
    fam: &LagrangianFamily,
    lambda: f64,
    bc: &BoundaryCondition,
    z: &DVector<f64>,
    t_end: f64,
    opts: &BvpOptions,
) -> Result<Evaluated> {
    let n = fam.dim();
    let q0 = z.rows(0, n).into_owned();
    let v0 = z.rows(n, n).into_owned();
    let shot = shoot(fam, lambda, &q0, &v0, t_end, opts.steps, true, opts.blowup)?;
    let (qe, ve) = (shot.q.last().unwrap(), shot.v.last().unwrap());
    let start = lagrangian::partials(fam, lambda, 0.0, &q0, &v0)?;
    let end = lagrangian::partials(fam, lambda, t_end, qe, ve)?;

    let brake = bc.is_half_interval();
    let ess = boundary::essential_residual(bc, &q0, qe);
    let nat = if brake {
        boundary::natural_residual(bc, &v0, ve)
    } else {
        boundary::natural_residual(bc, &start.dv, &end.dv)
    };
    let residual = DVector::from_iterator(ess.len() + nat.len(), ess.iter().chain(nat.iter()).copied());
    if residual.len() != 2 * n {
        return Err(Error::DimensionMismatch { expected: 2 * n, found: residual.len() });
    }

    let sens = shot.sens.as_ref().expect("sensitivity requested");
    let end_chol = end.dvv.clone().cholesky().ok_or(Error::NonConvexPoint { t: t_end, min_eig: f64::NAN })?;
    let mut jacobian = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..2 * n {
        let mut dq0 = DVector::zeros(n);
        let mut dv0 = DVector::zeros(n);
        if k < n {
            dq0[k] = 1.0;
        } else {
            dv0[k - n] = 1.0;
        }
        let dqe: DVector<f64> = sens.view((0, k), (n, 1)).column(0).into_owned();
        let dpe: DVector<f64> = sens.view((n, k), (n, 1)).column(0).into_owned();
        let dess = boundary::linear_essential(bc, &dq0, &dqe);
        let dnat = if brake {
            let dve = end_chol.solve(&(&dpe - &end.dqv * &dqe));
            boundary::natural_residual(bc, &dv0, &dve)
        } else {
            let dp0 = &start.dqv * &dq0 + &start.dvv * &dv0;
            boundary::natural_residual(bc, &dp0, &dpe)
        };
        for (i, x) in dess.iter().chain(dnat.iter()).enumerate() {
            jacobian[(i, k)] = *x;
        }
    }
    Ok(Evaluated { shot, residual, jacobian })
}

/// Damped-Newton shooting for the Euler–Lagrange boundary value problem.
///
/// Unknowns are `(q(0), v(0))`. For the even-periodic class the
/// integration runs over `[0, τ/2]` and the trajectory is flagged as a
/// half interval.
pub fn solve_bvp(
    fam: &LagrangianFamily,
    lambda: f64,
    bc: &BoundaryCondition,
    guess: (&DVector<f64>, &DVector<f64>),
    tau: f64,
    opts: &BvpOptions,
) -> Result<Trajectory> {
    let n = fam.dim();
    bc.check_dim(n)?;
    if opts.steps < 16 || !opts.steps.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!("steps must be even and >= 16 (got {})", opts.steps)));
    }
    if !(tau > 0.0) || !(opts.tol > 0.0) {
        return Err(Error::InvalidInput("interval length and tolerance must be positive".into()));
    }
    let t_end = if bc.is_half_interval() { 0.5 * tau } else { tau };
    let mut z = DVector::from_iterator(2 * n, guess.0.iter().chain(guess.1.iter()).copied());
    let mut cur = evaluate(fam, lambda, bc, &z, t_end, opts)?;
    let mut iterations = 0;
    loop {
        let res_norm = cur.residual.amax();
        if res_norm <= opts.tol {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence { iterations, residual: res_norm });
        }
        let s = linalg::singular_values(&cur.jacobian);
        let ratio = s.last().copied().unwrap_or(0.0) / s.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
        if !(ratio > SHOOTING_RANK_TOL) {
            return Err(Error::SingularShooting { ratio });
        }
        let step = cur
            .jacobian
            .clone()
            .lu()
            .solve(&(-&cur.residual))
            .ok_or(Error::SingularShooting { ratio })?;
        let f0 = cur.residual.norm();
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = &z + &step * alpha;
            match evaluate(fam, lambda, bc, &trial, t_end, opts) {
                Ok(ev) if ev.residual.norm() <= (1.0 - ARMIJO_C * alpha) * f0 => {
                    accepted = Some((trial, ev));
                    break;
                }
                // a blown-up or non-convex trial is treated as a failed step
                Ok(_) | Err(Error::BlowUp { .. }) | Err(Error::NonConvexPoint { .. }) => alpha *= 0.5,
                Err(e) => return Err(e),
            }
        }
        iterations += 1;
        match accepted {
            Some((trial, ev)) => {
                z = trial;
                cur = ev;
            }
            None => return Err(Error::NoConvergence { iterations, residual: res_norm }),
        }
    }
    let shot = cur.shot;
    let el = el_residual(fam, lambda, &shot.grid, &shot.q, &shot.v)?;
    if el > opts.el_tol {
        return Err(Error::ResidualTooLarge { residual: el, tol: opts.el_tol });
    }
    Ok(Trajectory {
        lambda,
        grid: shot.grid,
        q: shot.q,
        v: shot.v,
        el_residual: el,
        bc_residual: cur.residual.amax(),
        half_interval: bc.is_half_interval(),
        iterations,
    })
}

/// Supplies the solution `γ_λ` of the branch at each parameter value.
pub trait Branch: Send + Sync {
    fn trajectory(&self, fam: &LagrangianFamily, lambda: f64) -> Result<Trajectory>;
}

pub type BranchFn = dyn Fn(f64, f64) -> (DVector<f64>, DVector<f64>) + Send + Sync;

/// Branch given in closed form `(λ, t) ↦ (γ_λ(t), γ̇_λ(t))`.
#[derive(Clone)]
pub struct ClosedFormBranch {
    span: f64,
    steps: usize,
    half_interval: bool,
    el_tol: f64,
    path: Arc<BranchFn>,
}

impl ClosedFormBranch {
    /// `span` is the sampled interval length (`τ/2` for brake orbits).
    pub fn new<F>(span: f64, steps: usize, path: F) -> Self
    where
        F: Fn(f64, f64) -> (DVector<f64>, DVector<f64>) + Send + Sync + 'static,
    {
        Self { span, steps, half_interval: false, el_tol: 1e-3, path: Arc::new(path) }
    }

    /// The trivial branch `γ_λ ≡ 0`.
    pub fn zero(n: usize, span: f64, steps: usize) -> Self {
        Self::new(span, steps, move |_, _| (DVector::zeros(n), DVector::zeros(n)))
    }

    pub fn on_half_interval(mut self) -> Self {
        self.half_interval = true;
        self
    }

    pub fn with_el_tol(mut self, tol: f64) -> Self {
        self.el_tol = tol;
        self
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

impl Branch for ClosedFormBranch {
    fn trajectory(&self, fam: &LagrangianFamily, lambda: f64) -> Result<Trajectory> {
        let m = self.steps;
        let grid: Vec<f64> = (0..=m).map(|i| self.span * i as f64 / m as f64).collect();
        let (q, v): (Vec<_>, Vec<_>) = grid.iter().map(|&t| (self.path)(lambda, t)).unzip();
        let el = el_residual(fam, lambda, &grid, &q, &v)?;
        if el > self.el_tol {
            return Err(Error::ResidualTooLarge { residual: el, tol: self.el_tol });
        }
        Ok(Trajectory {
            lambda,
            grid,
            q,
            v,
            el_residual: el,
            bc_residual: 0.0,
            half_interval: self.half_interval,
            iterations: 0,
        })
    }
}

/// Branch produced by shooting from a fixed seed guess at every `λ`.
#[derive(Debug, Clone)]
pub struct WarmStartBranch {
    pub bc: BoundaryCondition,
    pub tau: f64,
    pub seed: (DVector<f64>, DVector<f64>),
    pub opts: BvpOptions,
}

impl WarmStartBranch {
    /// Sequential continuation: each solve starts from the previous
    /// converged initial data.
    pub fn continuation(&self, fam: &LagrangianFamily, lambdas: &[f64]) -> Vec<Result<Trajectory>> {
        let mut guess = self.seed.clone();
        lambdas
            .iter()
            .map(|&l| {
                let out = solve_bvp(fam, l, &self.bc, (&guess.0, &guess.1), self.tau, &self.opts);
                if let Ok(tr) = &out {
                    guess = (tr.q[0].clone(), tr.v[0].clone());
                }
                out
            })
            .collect()
    }
}

impl Branch for WarmStartBranch {
    fn trajectory(&self, fam: &LagrangianFamily, lambda: f64) -> Result<Trajectory> {
        solve_bvp(fam, lambda, &self.bc, (&self.seed.0, &self.seed.1), self.tau, &self.opts)
    }
}
