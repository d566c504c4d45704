//! Finite-dimensional harness for index jumps of a symmetric family
//! `B_t` through a degenerate `B₀`.
//!
//! With `q = m⁻(Q)` for `Q(x, y) = (x, Ḃ₀ y)` on `ker B₀`, `N = dim ker B₀`
//! and `i₀ = m⁻(B₀)`, the index is `q + i₀` for small `t > 0` and
//! `N − q + i₀` for small `t < 0` whenever `Q` is nondegenerate.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, Inertia};

pub type MatrixPath = dyn Fn(f64) -> DMatrix<f64> + Send + Sync;

/// `t ↦ B_t` with its derivative at `t = 0`.
#[derive(Clone)]
pub struct OperatorFamily {
    dim: usize,
    b: Arc<MatrixPath>,
    bdot0: DMatrix<f64>,
}

impl std::fmt::Debug for OperatorFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorFamily").field("dim", &self.dim).field("bdot0", &self.bdot0).finish()
    }
}

/// Symmetry tolerance for family samples.
pub const FAMILY_SYMMETRY_TOL: f64 = 1e-12;
const FD_STEP: f64 = 1e-6;

impl OperatorFamily {
    pub fn new<F>(dim: usize, b: F, bdot0: DMatrix<f64>) -> Result<Self>
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        if bdot0.nrows() != dim || bdot0.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: bdot0.nrows() });
        }
        let fam = Self { dim, b: Arc::new(b), bdot0: linalg::symmetrize(&bdot0) };
        for t in [-1e-2, 0.0, 1e-2] {
            let m = fam.at_raw(t);
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: m.nrows() });
            }
            if linalg::asymmetry(&m) > FAMILY_SYMMETRY_TOL * m.amax().max(1.0) {
                return Err(Error::InvalidInput(format!("B({t}) is not symmetric")));
            }
        }
        Ok(fam)
    }

    /// `Ḃ₀` by central differences.
    pub fn with_fd_derivative<F>(dim: usize, b: F) -> Result<Self>
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        let d = (b(FD_STEP) - b(-FD_STEP)) / (2.0 * FD_STEP);
        Self::new(dim, b, d)
    }

    fn at_raw(&self, t: f64) -> DMatrix<f64> {
        (self.b)(t)
    }

    pub fn at(&self, t: f64) -> DMatrix<f64> {
        linalg::symmetrize(&self.at_raw(t))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bdot0(&self) -> &DMatrix<f64> {
        &self.bdot0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationCheck {
    pub ker0_basis: DMatrix<f64>,
    pub qmat: DMatrix<f64>,
    pub mq_minus: usize,
    pub i0: usize,
    pub n0: usize,
    /// `(index for t > 0, index for t < 0)`.
    pub predicted: (usize, usize),
    pub observed: (usize, usize),
    pub t_probe: f64,
}

impl PerturbationCheck {
    pub fn agrees(&self) -> bool {
        self.predicted == self.observed
    }
}

/// Orthonormal eigenvectors of `B₀` with `|eigenvalue| ≤ tol·‖B₀‖`.
pub fn kernel_of(b0: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (values, vectors) = linalg::sym_eigen(&linalg::symmetrize(b0));
    let cut = tol * linalg::sym_op_norm(b0);
    let keep: Vec<usize> = (0..values.len()).filter(|&i| values[i].abs() <= cut).collect();
    let mut out = DMatrix::zeros(b0.nrows(), keep.len());
    for (k, &i) in keep.iter().enumerate() {
        out.set_column(k, &vectors.column(i));
    }
    out
}

const PROBE_START: f64 = 1e-2;
const MAX_HALVINGS: usize = 60;

/// Predicted and observed one-sided indices.
///
/// `t_probe` starts at `1e-2` and is halved until `‖B_t − B₀‖` is below
/// half the spectral gap of `B₀` and the second-order drift of the kernel
/// cluster is below half the smallest `|eig Q|`.
pub fn predict_jump(family: &OperatorFamily, tol: f64) -> Result<PerturbationCheck> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let b0 = family.at(0.0);
    let norm0 = linalg::sym_op_norm(&b0);
    let ker = kernel_of(&b0, tol);
    let n0 = ker.ncols();
    let eig0 = linalg::sym_eigenvalues(&b0);
    let cut = tol * norm0;
    let i0 = eig0.iter().filter(|&&x| x < -cut).count();
    let gap = eig0.iter().map(|x| x.abs()).filter(|&x| x > cut).fold(f64::INFINITY, f64::min);

    let qmat = linalg::symmetrize(&(ker.transpose() * family.bdot0() * &ker));
    let qeig = linalg::sym_eigenvalues(&qmat);
    let min_abs = qeig.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
    let bdot_norm = linalg::sym_op_norm(family.bdot0());
    if n0 > 0 && !(min_abs > tol * bdot_norm.max(1.0)) {
        return Err(Error::DegenerateQ { min_abs });
    }
    let mq_minus = qeig.iter().filter(|&&x| x < 0.0).count();
    let predicted = (mq_minus + i0, n0 - mq_minus + i0);

    let mut t = PROBE_START;
    for _ in 0..MAX_HALVINGS {
        if probe_ok(family, &b0, t, gap, min_abs, bdot_norm) {
            break;
        }
        t *= 0.5;
    }
    let count = |s: f64| linalg::sym_eigenvalues(&family.at(s)).iter().filter(|&&x| x < 0.0).count();
    Ok(PerturbationCheck {
        ker0_basis: ker,
        qmat,
        mq_minus,
        i0,
        n0,
        predicted,
        observed: (count(t), count(-t)),
        t_probe: t,
    })
}

fn probe_ok(family: &OperatorFamily, b0: &DMatrix<f64>, t: f64, gap: f64, min_q: f64, bdot_norm: f64) -> bool {
    [t, -t].iter().all(|&s| {
        let bt = family.at(s);
        let shift = linalg::sym_op_norm(&(&bt - b0));
        let r2 = linalg::sym_op_norm(&(&bt - b0 - family.bdot0() * s)) / (s * s);
        let drift = t * (r2 + if gap.is_finite() { bdot_norm * bdot_norm / gap } else { 0.0 });
        shift < 0.5 * gap && (!min_q.is_finite() || drift < 0.5 * min_q)
    })
}

/// `max(0, max_{t, i} |λ_i(B_t) − λ_i(B₀)| − ‖B_t − B₀‖)`.
pub fn weyl_check(family: &OperatorFamily, t_samples: &[f64]) -> f64 {
    let b0 = family.at(0.0);
    let e0 = linalg::sym_eigenvalues(&b0);
    t_samples
        .iter()
        .map(|&t| {
            let bt = family.at(t);
            let et = linalg::sym_eigenvalues(&bt);
            let bound = linalg::sym_op_norm(&(&bt - &b0));
            e0.iter().zip(&et).map(|(a, b)| (a - b).abs() - bound).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Inertia of `K x = μ M x` under two Gram matrices.
pub fn gram_swap_inertia(
    k: &DMatrix<f64>,
    m1: &DMatrix<f64>,
    m2: &DMatrix<f64>,
    tol: f64,
) -> Result<(Inertia, Inertia)> {
    let a = linalg::generalized_eigenvalues(k, m1)?;
    let b = linalg::generalized_eigenvalues(k, m2)?;
    Ok((Inertia::from_values(&a, tol), Inertia::from_values(&b, tol)))
}

/// Parameters of a random family `B_t = V diag(d + t e) Vᵀ + t² S`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomFamilySpec {
    pub v: DMatrix<f64>,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub s: DMatrix<f64>,
    pub kernel_dim: usize,
}

impl RandomFamilySpec {
    /// Draws a family of dimension `2..=max_dim` with a kernel of dimension
    /// `1..=3`. Nonzero entries of `d` and the kernel entries of `e` have
    /// magnitude in `[0.5, 2]`, so `Q` is nondegenerate.
    pub fn sample<R: Rng>(rng: &mut R, max_dim: usize) -> Self {
        let m = rng.random_range(2..=max_dim.max(2));
        let kernel_dim = rng.random_range(1..=m.min(3));
        let g = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = g.qr().q();
        let signed = |rng: &mut R| {
            let mag: f64 = rng.random_range(0.5..2.0);
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        };
        let d = (0..m).map(|i| if i < kernel_dim { 0.0 } else { signed(rng) }).collect();
        let e = (0..m).map(|i| if i < kernel_dim { signed(rng) } else { rng.sample(StandardNormal) }).collect();
        let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = (&a + a.transpose()) * 0.5;
        Self { v, d, e, s, kernel_dim }
    }

    pub fn family(&self) -> OperatorFamily {
        let m = self.d.len();
        let (v, d, e, s) = (self.v.clone(), self.d.clone(), self.e.clone(), self.s.clone());
        let bdot0 = &v * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.clone())) * v.transpose();
        OperatorFamily::new(
            m,
            move |t| {
                let diag = nalgebra::DVector::from_fn(m, |i, _| d[i] + t * e[i]);
                &v * DMatrix::from_diagonal(&diag) * v.transpose() + &s * (t * t)
            },
            bdot0,
        )
        .expect("generated family is symmetric")
    }

    /// `q`, the negative count of the kernel part of `e`.
    pub fn expected_q(&self) -> usize {
        self.e[..self.kernel_dim].iter().filter(|&&x| x < 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestRow {
    pub trial: usize,
    pub dim: usize,
    pub kernel_dim: usize,
    pub predicted: (usize, usize),
    pub observed: (usize, usize),
    pub t_probe: f64,
    pub weyl_defect: f64,
    pub gram_ok: bool,
    pub error: Option<Error>,
}

impl SelftestRow {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.predicted == self.observed && self.weyl_defect <= WEYL_TOL && self.gram_ok
    }
}

/// Largest acceptable Weyl defect.
pub const WEYL_TOL: f64 = 1e-10;
/// Kernel cutoff used by the self-test.
pub const SELFTEST_TOL: f64 = 1e-9;

/// Runs `trials` random families from `seed` (one ChaCha stream per trial).
pub fn selftest(trials: usize, seed: u64) -> Vec<SelftestRow> {
    (0..trials).into_par_iter().map(|i| selftest_trial(i, seed)).collect()
}

fn selftest_trial(trial: usize, seed: u64) -> SelftestRow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    let spec = RandomFamilySpec::sample(&mut rng, 8);
    let fam = spec.family();
    let m = fam.dim();
    let ts: Vec<f64> = (0..=40).map(|k| -1.0 + 0.05 * k as f64).collect();
    let weyl_defect = weyl_check(&fam, &ts);

    let k = fam.at(0.3);
    let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let m2 = &a * a.transpose() + DMatrix::identity(m, m) * 0.5;
    let gram_ok = matches!(
        gram_swap_inertia(&k, &DMatrix::identity(m, m), &m2, 1e-10),
        Ok((x, y)) if x == y
    );

    match predict_jump(&fam, SELFTEST_TOL) {
        Ok(check) => SelftestRow {
            trial,
            dim: m,
            kernel_dim: check.n0,
            predicted: check.predicted,
            observed: check.observed,
            t_probe: check.t_probe,
            weyl_defect,
            gram_ok,
            error: None,
        },
        Err(e) => SelftestRow {
            trial,
            dim: m,
            kernel_dim: spec.kernel_dim,
            predicted: (0, 0),
            observed: (0, 0),
            t_probe: f64::NAN,
            weyl_defect,
            gram_ok,
            error: Some(e),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert_eq, proptest, ProptestConfig};

    fn diag(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(xs))
    }

    fn rot(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(kernel_of(&diag(&[0.0, 1.0]), 1e-12).abs(), DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
        assert_eq!(kernel_of(&diag(&[0.0, 0.0, 2.0]), 1e-12).ncols(), 2);
        let r = rot(0.7);
        let k = kernel_of(&(r.transpose() * diag(&[0.0, 1.0]) * &r), 1e-12);
        let expected = r.transpose().column(0).into_owned();
        let col = k.column(0).into_owned();
        let aligned = if col.dot(&expected) < 0.0 { -col } else { col };
        assert!((aligned - expected).amax() < 1e-10);
    }

    #[test]
    fn jump_examples() {
        let f = OperatorFamily::new(2, |t| diag(&[t, 1.0]), diag(&[1.0, 0.0])).unwrap();
        let c = predict_jump(&f, 1e-10).unwrap();
        assert_eq!((c.mq_minus, c.i0, c.n0), (0, 0, 1));
        assert_eq!(c.predicted, (0, 1));
        assert!(c.agrees());

        let f = OperatorFamily::new(2, |t| diag(&[-t, -1.0]), diag(&[-1.0, 0.0])).unwrap();
        let c = predict_jump(&f, 1e-10).unwrap();
        assert_eq!((c.mq_minus, c.i0, c.n0), (1, 1, 1));
        assert_eq!(c.predicted, (2, 1));
        assert!(c.agrees());

        let r = rot(1.1);
        let rr = r.clone();
        let f = OperatorFamily::with_fd_derivative(2, move |t| rr.transpose() * diag(&[t, 1.0]) * &rr).unwrap();
        let c = predict_jump(&f, 1e-9).unwrap();
        assert_eq!(c.predicted, (0, 1));
        assert!(c.agrees());
    }

    #[test]
    fn degenerate_q_is_rejected() {
        let f = OperatorFamily::new(2, |t| diag(&[t * t, 1.0]), diag(&[0.0, 0.0])).unwrap();
        assert!(matches!(predict_jump(&f, 1e-10), Err(Error::DegenerateQ { .. })));
    }

    #[test]
    fn positive_q_matches_specialization() {
        // Q positive definite: index i₀ for t > 0 and i₀ + N for t < 0
        let f = OperatorFamily::new(4, |t| diag(&[t, 2.0 * t, -1.0, 3.0]), diag(&[1.0, 2.0, 0.0, 0.0])).unwrap();
        let c = predict_jump(&f, 1e-10).unwrap();
        assert_eq!(c.observed, (c.i0, c.i0 + c.n0));
        assert_eq!(c.observed, (1, 3));
    }

    #[test]
    fn weyl_examples() {
        let f = OperatorFamily::new(3, |t| diag(&[t, 1.0 - t, 2.0]), diag(&[1.0, -1.0, 0.0])).unwrap();
        assert!(weyl_check(&f, &[-1.0, -0.3, 0.5, 1.0]) <= 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(8, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
        let c = DMatrix::from_fn(8, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
        let (b0, c) = ((&a + a.transpose()) * 0.5, (&c + c.transpose()) * 0.5);
        let cc = c.clone();
        let f = OperatorFamily::new(8, move |t| &b0 + &cc * t, c).unwrap();
        let ts: Vec<f64> = (0..=20).map(|k| -1.0 + 0.1 * k as f64).collect();
        assert!(weyl_check(&f, &ts) <= 1e-10);

        let u = nalgebra::DVector::from_column_slice(&[1.0, 2.0, -1.0]).normalize();
        let bump = &u * u.transpose();
        let b = bump.clone();
        let f = OperatorFamily::new(3, move |t| diag(&[1.0, -2.0, 0.5]) + &b * (5.0 * t), bump * 5.0).unwrap();
        assert!(weyl_check(&f, &ts) <= 1e-10);
    }

    #[test]
    fn gram_swap_diagonal() {
        let (a, b) = gram_swap_inertia(&diag(&[-1.0, 0.0, 2.0]), &diag(&[1.0, 1.0, 1.0]), &diag(&[2.0, 3.0, 4.0]), 1e-12)
            .unwrap();
        assert_eq!(a, b);
        assert_eq!((a.negative, a.zero, a.positive), (1, 1, 1));
    }

    #[test]
    fn selftest_is_reproducible_and_passes() {
        let a = selftest(40, 7);
        let b = selftest(40, 7);
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.passed()), "{:?}", a.iter().find(|r| !r.passed()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn gram_swap_random(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(10, 10, |_, _| rng.sample::<f64, _>(StandardNormal));
            let k = (&a + a.transpose()) * 0.5;
            let g = DMatrix::from_fn(10, 10, |_, _| rng.sample::<f64, _>(StandardNormal));
            let m2 = &g * g.transpose() + DMatrix::identity(10, 10) * 0.5;
            let (x, y) = gram_swap_inertia(&k, &DMatrix::identity(10, 10), &m2, 1e-10).unwrap();
            prop_assert_eq!(x, y);
        }

        #[test]
        fn random_families_match(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = RandomFamilySpec::sample(&mut rng, 8);
            let c = predict_jump(&spec.family(), SELFTEST_TOL).unwrap();
            prop_assert_eq!(c.mq_minus, spec.expected_q());
            prop_assert_eq!(c.predicted, c.observed);
        }
    }
}
