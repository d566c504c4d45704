//! Parameterized Lagrangian families `L(λ, t, q, v)` on ℝ × [0, τ] × ℝⁿ × ℝⁿ.
//!
//! A family is an immutable bundle of pure evaluators. Partial derivatives
//! come from an analytic callable when the family supplies one and from
//! central finite differences otherwise. Every call to [`partials`] checks
//! that `∂vvL` is symmetric positive definite at the visited point; the
//! global convexity assumption is only ever sampled, never proved.
//!
//! Convention for the mixed block: `dqv[(i, j)] = ∂²L / ∂v_i ∂q_j`, so that
//! the linearized momentum is `P·ẏ + Q·y` with `P = dvv`, `Q = dqv`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative symmetry tolerance for `∂vvL`.
pub const DVV_SYMMETRY_TOL: f64 = 1e-10;

/// First and second partial derivatives of `L` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialBundle {
    pub dq: DVector<f64>,
    pub dv: DVector<f64>,
    pub dqq: DMatrix<f64>,
    /// `dqv[(i, j)] = ∂²L / ∂v_i ∂q_j`.
    pub dqv: DMatrix<f64>,
    pub dvv: DMatrix<f64>,
}

impl PartialBundle {
    pub fn zeros(n: usize) -> Self {
        Self {
            dq: DVector::zeros(n),
            dv: DVector::zeros(n),
            dqq: DMatrix::zeros(n, n),
            dqv: DMatrix::zeros(n, n),
            dvv: DMatrix::zeros(n, n),
        }
    }
}

pub type EvalFn = dyn Fn(f64, f64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync;
pub type PartialsFn = dyn Fn(f64, f64, &DVector<f64>, &DVector<f64>) -> PartialBundle + Send + Sync;

/// A parameterized Lagrangian family.
#[derive(Clone)]
pub struct LagrangianFamily {
    name: String,
    dim: usize,
    lambda_range: Option<(f64, f64)>,
    declared_smoothness: Option<u32>,
    time_reversible: bool,
    eval: Arc<EvalFn>,
    partials: Option<Arc<PartialsFn>>,
}

impl fmt::Debug for LagrangianFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LagrangianFamily")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("lambda_range", &self.lambda_range)
            .field("analytic_partials", &self.partials.is_some())
            .finish()
    }
}

impl LagrangianFamily {
    pub fn new<F>(name: impl Into<String>, dim: usize, eval: F) -> Self
    where
        F: Fn(f64, f64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            lambda_range: None,
            declared_smoothness: None,
            time_reversible: false,
            eval: Arc::new(eval),
            partials: None,
        }
    }

    pub fn with_partials<F>(mut self, partials: F) -> Self
    where
        F: Fn(f64, f64, &DVector<f64>, &DVector<f64>) -> PartialBundle + Send + Sync + 'static,
    {
        self.partials = Some(Arc::new(partials));
        self
    }

    pub fn with_lambda_range(mut self, lo: f64, hi: f64) -> Self {
        self.lambda_range = Some((lo.min(hi), lo.max(hi)));
        self
    }

    /// Record the user's smoothness claim (C^k). It is not verified.
    pub fn with_declared_smoothness(mut self, k: u32) -> Self {
        self.declared_smoothness = Some(k);
        self
    }

    /// Mark `L(λ, −t, q, −v) = L(λ, t, q, v)`; informational only.
    pub fn with_time_reversal(mut self) -> Self {
        self.time_reversible = true;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda_range(&self) -> Option<(f64, f64)> {
        self.lambda_range
    }

    pub fn declared_smoothness(&self) -> Option<u32> {
        self.declared_smoothness
    }

    pub fn is_time_reversible(&self) -> bool {
        self.time_reversible
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.partials.is_some()
    }

    pub fn eval(&self, lambda: f64, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (self.eval)(lambda, t, q, v)
    }

    fn check_domain(&self, lambda: f64, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> Result<()> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: q.len() });
        }
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: v.len() });
        }
        if !lambda.is_finite() || !t.is_finite() || q.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::DomainError(format!("non-finite argument at t = {t}")));
        }
        if let Some((lo, hi)) = self.lambda_range {
            if lambda < lo || lambda > hi {
                return Err(Error::DomainError(format!(
                    "lambda = {lambda} outside [{lo}, {hi}] for family `{}`",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Partial derivatives of `fam` at `(λ, t, q, v)`, analytic when available.
///
/// Fails with [`Error::NonConvexPoint`] when `∂vvL` is not symmetric
/// positive definite there.
pub fn partials(
    fam: &LagrangianFamily,
    lambda: f64,
    t: f64,
    q: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<PartialBundle> {
    fam.check_domain(lambda, t, q, v)?;
    let mut bundle = match &fam.partials {
        Some(p) => p(lambda, t, q, v),
        None => finite_difference_partials(fam, lambda, t, q, v),
    };
    check_convex(&bundle.dvv, t)?;
    bundle.dvv = linalg::symmetrize(&bundle.dvv);
    bundle.dqq = linalg::symmetrize(&bundle.dqq);
    Ok(bundle)
}

/// `∂vL` alone. Cheaper than [`partials`] for finite-difference families.
pub fn momentum(
    fam: &LagrangianFamily,
    lambda: f64,
    t: f64,
    q: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    fam.check_domain(lambda, t, q, v)?;
    if let Some(p) = &fam.partials {
        return Ok(p(lambda, t, q, v).dv);
    }
    let n = fam.dim;
    let h0 = f64::EPSILON.cbrt();
    let mut out = DVector::zeros(n);
    let mut vp = v.clone();
    for i in 0..n {
        let h = h0 * v[i].abs().max(1.0);
        vp[i] = v[i] + h;
        let fp = fam.eval(lambda, t, q, &vp);
        vp[i] = v[i] - h;
        let fm = fam.eval(lambda, t, q, &vp);
        vp[i] = v[i];
        out[i] = (fp - fm) / (2.0 * h);
    }
    Ok(out)
}

fn check_convex(dvv: &DMatrix<f64>, t: f64) -> Result<()> {
    let scale = dvv.amax().max(f64::MIN_POSITIVE);
    let asym = (dvv - dvv.transpose()).amax() / scale;
    if !(asym <= DVV_SYMMETRY_TOL) {
        return Err(Error::NonConvexPoint { t, min_eig: f64::NAN });
    }
    let sym = linalg::symmetrize(dvv);
    if sym.clone().cholesky().is_none() {
        let min_eig = linalg::sym_eigenvalues(&sym).first().copied().unwrap_or(f64::NAN);
        return Err(Error::NonConvexPoint { t, min_eig });
    }
    Ok(())
}

/// Central-difference partials of `L` in `(q, v)`.
///
/// First derivatives use the step `ε^{1/3}·max(1, |x_i|)`, second
/// derivatives `ε^{1/4}·max(1, |x_i|)`.
pub fn finite_difference_partials(
    fam: &LagrangianFamily,
    lambda: f64,
    t: f64,
    q: &DVector<f64>,
    v: &DVector<f64>,
) -> PartialBundle {
    let n = fam.dim;
    let mut x: Vec<f64> = q.iter().chain(v.iter()).copied().collect();
    let f = |x: &[f64]| {
        let q = DVector::from_column_slice(&x[..n]);
        let v = DVector::from_column_slice(&x[n..]);
        fam.eval(lambda, t, &q, &v)
    };
    let m = 2 * n;
    let h1 = f64::EPSILON.cbrt();
    let h2 = f64::EPSILON.sqrt().sqrt();
    let f0 = f(&x);

    let mut grad = vec![0.0; m];
    for i in 0..m {
        let xi = x[i];
        let h = h1 * xi.abs().max(1.0);
        x[i] = xi + h;
        let fp = f(&x);
        x[i] = xi - h;
        let fm = f(&x);
        x[i] = xi;
        grad[i] = (fp - fm) / (2.0 * h);
    }

    let steps: Vec<f64> = x.iter().map(|xi| h2 * xi.abs().max(1.0)).collect();
    let mut hess = DMatrix::zeros(m, m);
    for i in 0..m {
        let (xi, hi) = (x[i], steps[i]);
        x[i] = xi + hi;
        let fp = f(&x);
        x[i] = xi - hi;
        let fm = f(&x);
        x[i] = xi;
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in (i + 1)..m {
            let (xj, hj) = (x[j], steps[j]);
            let mut corner = |si: f64, sj: f64| {
                x[i] = xi + si * hi;
                x[j] = xj + sj * hj;
                let val = f(&x);
                x[i] = xi;
                x[j] = xj;
                val
            };
            let d = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * hi * hj);
            hess[(i, j)] = d;
            hess[(j, i)] = d;
        }
    }

    PartialBundle {
        dq: DVector::from_column_slice(&grad[..n]),
        dv: DVector::from_column_slice(&grad[n..]),
        dqq: hess.view((0, 0), (n, n)).into_owned(),
        // rows indexed by v, columns by q
        dqv: hess.view((n, 0), (n, n)).into_owned(),
        dvv: hess.view((n, n), (n, n)).into_owned(),
    }
}

// ---------------------------------------------------------------------------
// Built-in families
// ---------------------------------------------------------------------------

/// `L = ½|v|²` on ℝⁿ.
pub fn free_particle(n: usize) -> LagrangianFamily {
    LagrangianFamily::new("free", n, |_, _, _, v| 0.5 * v.norm_squared())
        .with_partials(move |_, _, _, v| PartialBundle {
            dq: DVector::zeros(n),
            dv: v.clone(),
            dqq: DMatrix::zeros(n, n),
            dqv: DMatrix::zeros(n, n),
            dvv: DMatrix::identity(n, n),
        })
        .with_declared_smoothness(3)
        .with_time_reversal()
}

/// Isotropic oscillator `L = ½|v|² − ½ω(λ)²|q|²`.
pub fn harmonic_family<W>(n: usize, omega: W) -> LagrangianFamily
where
    W: Fn(f64) -> f64 + Send + Sync + 'static,
{
    let omega = Arc::new(omega);
    let w_eval = Arc::clone(&omega);
    LagrangianFamily::new("harmonic", n, move |l, _, q, v| {
        let w = w_eval(l);
        0.5 * v.norm_squared() - 0.5 * w * w * q.norm_squared()
    })
    .with_partials(move |l, _, q, v| {
        let w2 = omega(l).powi(2);
        PartialBundle {
            dq: -w2 * q,
            dv: v.clone(),
            dqq: DMatrix::identity(n, n) * -w2,
            dqv: DMatrix::zeros(n, n),
            dvv: DMatrix::identity(n, n),
        }
    })
    .with_declared_smoothness(3)
    .with_time_reversal()
}

pub fn harmonic(n: usize, omega: f64) -> LagrangianFamily {
    harmonic_family(n, move |_| omega)
}

/// Scalar forcing term `W(λ, t, x)` added to the pendulum Lagrangian.
pub trait Forcing: Send + Sync {
    fn value(&self, lambda: f64, t: f64, x: f64) -> f64;

    fn dx(&self, lambda: f64, t: f64, x: f64) -> f64 {
        let h = f64::EPSILON.cbrt() * x.abs().max(1.0);
        (self.value(lambda, t, x + h) - self.value(lambda, t, x - h)) / (2.0 * h)
    }

    fn dxx(&self, lambda: f64, t: f64, x: f64) -> f64 {
        let h = f64::EPSILON.sqrt().sqrt() * x.abs().max(1.0);
        (self.value(lambda, t, x + h) - 2.0 * self.value(lambda, t, x) + self.value(lambda, t, x - h))
            / (h * h)
    }
}

/// `W(λ, t, x) = (1 + sin(2πt/T))·sin λ·cos x`.
#[derive(Debug, Clone, Copy)]
pub struct SinusoidalForcing {
    pub period: f64,
}

impl SinusoidalForcing {
    fn envelope(&self, lambda: f64, t: f64) -> f64 {
        (1.0 + (2.0 * PI * t / self.period).sin()) * lambda.sin()
    }
}

impl Forcing for SinusoidalForcing {
    fn value(&self, lambda: f64, t: f64, x: f64) -> f64 {
        self.envelope(lambda, t) * x.cos()
    }

    fn dx(&self, lambda: f64, t: f64, x: f64) -> f64 {
        -self.envelope(lambda, t) * x.sin()
    }

    fn dxx(&self, lambda: f64, t: f64, x: f64) -> f64 {
        -self.envelope(lambda, t) * x.cos()
    }
}

/// `W ≡ 0`.
#[derive(Debug, Clone, Copy)]
pub struct Unforced;

impl Forcing for Unforced {
    fn value(&self, _: f64, _: f64, _: f64) -> f64 {
        0.0
    }

    fn dx(&self, _: f64, _: f64, _: f64) -> f64 {
        0.0
    }

    fn dxx(&self, _: f64, _: f64, _: f64) -> f64 {
        0.0
    }
}

/// Small-oscillation period `2π√(l/g)` of the pendulum.
pub fn pendulum_period(l: f64, g: f64) -> f64 {
    2.0 * PI * (l / g).sqrt()
}

/// Planar pendulum `L = ½ l y² + g cos x + W(λ, t, x)`.
///
/// `forcing = None` selects [`SinusoidalForcing`] with the small-oscillation
/// period.
pub fn build_pendulum(l: f64, g: f64, forcing: Option<Arc<dyn Forcing>>) -> Result<LagrangianFamily> {
    if !(l > 0.0 && l.is_finite()) || !(g > 0.0 && g.is_finite()) {
        return Err(Error::InvalidInput(format!("pendulum needs l > 0 and g > 0 (got l = {l}, g = {g})")));
    }
    let w: Arc<dyn Forcing> =
        forcing.unwrap_or_else(|| Arc::new(SinusoidalForcing { period: pendulum_period(l, g) }));
    let w_eval = Arc::clone(&w);
    Ok(LagrangianFamily::new("pendulum", 1, move |lam, t, q, v| {
        0.5 * l * v[0] * v[0] + g * q[0].cos() + w_eval.value(lam, t, q[0])
    })
    .with_partials(move |lam, t, q, v| {
        let x = q[0];
        PartialBundle {
            dq: DVector::from_element(1, -g * x.sin() + w.dx(lam, t, x)),
            dv: DVector::from_element(1, l * v[0]),
            dqq: DMatrix::from_element(1, 1, -g * x.cos() + w.dxx(lam, t, x)),
            dqv: DMatrix::zeros(1, 1),
            dvv: DMatrix::from_element(1, 1, l),
        }
    })
    .with_declared_smoothness(3))
}

pub type MatrixField = dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync;
pub type VectorField = dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync;
pub type ScalarField = dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync;
pub type ContractedField = dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Field derivatives for the analytic route of [`build_physical`].
///
/// Only valid when the metric `P(t, q)` does not depend on `q`.
#[derive(Clone)]
pub struct PhysicalDerivatives {
    /// `[(i, j)] = ∂α_i/∂q_j`.
    pub alpha_jacobian: Arc<MatrixField>,
    /// `Σ_k v_k ∂²α_k/∂q_i∂q_j`.
    pub alpha_hessian_contracted: Arc<ContractedField>,
    pub potential_gradient: Arc<VectorField>,
    pub potential_hessian: Arc<MatrixField>,
}

/// Fields of `L = ½⟨P(t,q)v, v⟩ + ⟨α(t,q), v⟩ − V(t,q)`.
#[derive(Clone)]
pub struct PhysicalFields {
    pub metric: Arc<MatrixField>,
    pub vector_potential: Arc<VectorField>,
    pub potential: Arc<ScalarField>,
    pub derivatives: Option<PhysicalDerivatives>,
}

/// Mechanical Lagrangian with potential and electromagnetic terms.
pub fn build_physical(fields: PhysicalFields, dim: usize) -> Result<LagrangianFamily> {
    if dim == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    let probe = (fields.metric)(0.0, &DVector::zeros(dim));
    if probe.nrows() != dim || probe.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: probe.nrows() });
    }
    check_convex(&probe, 0.0)?;

    let f = fields.clone();
    let mut fam = LagrangianFamily::new("physical", dim, move |_, t, q, v| {
        let p = (f.metric)(t, q);
        0.5 * v.dot(&(p * v)) + (f.vector_potential)(t, q).dot(v) - (f.potential)(t, q)
    })
    .with_declared_smoothness(2);

    if let Some(d) = fields.derivatives.clone() {
        let f = fields;
        fam = fam.with_partials(move |_, t, q, v| {
            let p = (f.metric)(t, q);
            let jac = (d.alpha_jacobian)(t, q);
            PartialBundle {
                dq: jac.transpose() * v - (d.potential_gradient)(t, q),
                dv: &p * v + (f.vector_potential)(t, q),
                dqq: (d.alpha_hessian_contracted)(t, q, v) - (d.potential_hessian)(t, q),
                dqv: jac,
                dvv: p,
            }
        });
    }
    Ok(fam)
}

/// Charged particle in a constant magnetic field `b` with an isotropic
/// harmonic potential of frequency `omega`, n = 2.
pub fn magnetic(b: f64, omega: f64) -> LagrangianFamily {
    let w2 = omega * omega;
    let fields = PhysicalFields {
        metric: Arc::new(|_, _| DMatrix::identity(2, 2)),
        vector_potential: Arc::new(move |_, q| DVector::from_vec(vec![-0.5 * b * q[1], 0.5 * b * q[0]])),
        potential: Arc::new(move |_, q| 0.5 * w2 * q.norm_squared()),
        derivatives: Some(PhysicalDerivatives {
            alpha_jacobian: Arc::new(move |_, _| DMatrix::from_row_slice(2, 2, &[0.0, -0.5 * b, 0.5 * b, 0.0])),
            alpha_hessian_contracted: Arc::new(|_, _, _| DMatrix::zeros(2, 2)),
            potential_gradient: Arc::new(move |_, q| q * w2),
            potential_hessian: Arc::new(move |_, _| DMatrix::identity(2, 2) * w2),
        }),
    };
    let mut fam = build_physical(fields, 2).expect("identity metric is SPD");
    fam.name = "magnetic".into();
    fam
}

/// Named parameters for [`builtin`].
pub type ParamMap = BTreeMap<String, f64>;

/// Select a built-in family by name.
///
/// | name        | parameters (defaults)                                  |
/// |-------------|--------------------------------------------------------|
/// | `free`      | `n` (1)                                                |
/// | `harmonic`  | `n` (1), `omega` (1), `omega_slope` (0): ω = omega + omega_slope·λ |
/// | `pendulum`  | `l` (1), `g` (1), `forced` (1 = sinusoidal W, 0 = none) |
/// | `magnetic`  | `b` (1), `omega` (0)                                   |
pub fn builtin(name: &str, params: &ParamMap) -> Result<LagrangianFamily> {
    let allowed: &[&str] = match name {
        "free" => &["n"],
        "harmonic" => &["n", "omega", "omega_slope"],
        "pendulum" => &["l", "g", "forced"],
        "magnetic" => &["b", "omega"],
        other => return Err(Error::InvalidInput(format!("unknown family `{other}`"))),
    };
    if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::InvalidInput(format!("unknown parameter `{bad}` for family `{name}`")));
    }
    let get = |k: &str, default: f64| params.get(k).copied().unwrap_or(default);
    let dim = |v: f64| -> Result<usize> {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::InvalidInput(format!("dimension must be a positive integer (got {v})")))
        }
    };
    match name {
        "free" => Ok(free_particle(dim(get("n", 1.0))?)),
        "harmonic" => {
            let (w0, slope) = (get("omega", 1.0), get("omega_slope", 0.0));
            Ok(harmonic_family(dim(get("n", 1.0))?, move |l| w0 + slope * l))
        }
        "pendulum" => {
            let forcing: Option<Arc<dyn Forcing>> =
                if get("forced", 1.0) != 0.0 { None } else { Some(Arc::new(Unforced)) };
            build_pendulum(get("l", 1.0), get("g", 1.0), forcing)
        }
        "magnetic" => Ok(magnetic(get("b", 1.0), get("omega", 0.0))),
        _ => unreachable!(),
    }
}
