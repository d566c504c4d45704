//! Fundamental matrix of the Hamiltonian Jacobi system and focal points
//! for product classes with a point target.

use nalgebra::DMatrix;

use crate::boundary::ConormalPair;
use crate::error::{Error, Result};
use crate::jacobi::{self, CoefficientPath};
use crate::linalg;

/// Default relative singular-value threshold for focal multiplicities.
pub const FOCAL_TOL: f64 = 1e-6;
const MAX_REFINE: usize = 60;

/// `Φ(0, t)` at the element nodes of a coefficient path.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalMatrixPath {
    pub grid: Vec<f64>,
    pub phi: Vec<DMatrix<f64>>,
    /// `A(t)` at the nodes, used for Hermite interpolation between them.
    pub generator: Vec<DMatrix<f64>>,
    /// `max_k ‖Φ_kᵀ J Φ_k − J‖_∞`.
    pub symplectic_defect: f64,
}

impl FundamentalMatrixPath {
    pub fn span(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn dim(&self) -> usize {
        self.phi[0].nrows() / 2
    }

    /// Cubic Hermite interpolant of `Φ` using `Φ' = AΦ` at the nodes.
    pub fn at(&self, s: f64) -> DMatrix<f64> {
        let last = self.grid.len() - 1;
        let h = self.grid[1] - self.grid[0];
        let k = ((s / h).floor().max(0.0) as usize).min(last - 1);
        let (t0, t1) = (self.grid[k], self.grid[k + 1]);
        let hk = t1 - t0;
        let th = ((s - t0) / hk).clamp(0.0, 1.0);
        let (th2, th3) = (th * th, th * th * th);
        let h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
        let h10 = th3 - 2.0 * th2 + th;
        let h01 = -2.0 * th3 + 3.0 * th2;
        let h11 = th3 - th2;
        let d0 = &self.generator[k] * &self.phi[k];
        let d1 = &self.generator[k + 1] * &self.phi[k + 1];
        &self.phi[k] * h00 + d0 * (h10 * hk) + &self.phi[k + 1] * h01 + d1 * (h11 * hk)
    }
}

/// Integrates `Φ̇ = AΦ`, `Φ(0) = I`, with a fourth-order Magnus step per
/// element.
pub fn fundamental_matrix(coeffs: &CoefficientPath) -> Result<FundamentalMatrixPath> {
    let n = coeffs.dim();
    let phi = jacobi::propagate(coeffs)?;
    let generator = (0..=coeffs.elements()).map(|k| coeffs.system_matrix(2 * k)).collect::<Result<Vec<_>>>()?;
    let j = linalg::symplectic_j(n);
    let symplectic_defect = phi.iter().map(|f| (f.transpose() * &j * f - &j).amax()).fold(0.0, f64::max);
    Ok(FundamentalMatrixPath { grid: coeffs.node_times(), phi, generator, symplectic_defect })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalInstant {
    pub s: f64,
    pub multiplicity: usize,
}

/// Focal instants in `(0, span]`, increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct FocalReport {
    pub instants: Vec<FocalInstant>,
    pub span: f64,
    pub tolerance: f64,
}

impl FocalReport {
    /// `Σ_{0 < s < λ}` multiplicities.
    pub fn cumulative(&self, lambda: f64) -> usize {
        self.instants.iter().filter(|i| i.s > 0.0 && i.s < lambda).map(|i| i.multiplicity).sum()
    }
}

struct Detector<'a> {
    path: &'a FundamentalMatrixPath,
    u: &'a DMatrix<f64>,
    n: usize,
}

impl Detector<'_> {
    fn matrix(&self, s: f64) -> DMatrix<f64> {
        self.reduce(&self.path.at(s)).0
    }

    /// `(Πₓ Φ U, ‖Πₓ Φ‖)`; the norm of the full row block is the scale for
    /// rank decisions, so a uniformly shrinking `Πₓ Φ U` still registers.
    fn reduce(&self, phi: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
        let rows = phi.view((0, 0), (self.n, 2 * self.n)).into_owned();
        let scale = linalg::op_norm(&rows);
        (rows * self.u, scale)
    }

    fn det(&self, s: f64) -> f64 {
        self.matrix(s).determinant()
    }

    fn ratio_at(&self, phi: &DMatrix<f64>) -> f64 {
        let (d, scale) = self.reduce(phi);
        let sv = linalg::singular_values(&d);
        if scale > 0.0 {
            sv[sv.len() - 1] / scale
        } else {
            0.0
        }
    }

    fn ratio(&self, s: f64) -> f64 {
        self.ratio_at(&self.path.at(s))
    }

    fn multiplicity(&self, s: f64, tol: f64) -> usize {
        let (d, scale) = self.reduce(&self.path.at(s));
        linalg::singular_values(&d).iter().filter(|&&x| x <= tol * scale).count()
    }

    fn bisect_det(&self, mut a: f64, mut b: f64) -> f64 {
        let mut fa = self.det(a);
        for _ in 0..MAX_REFINE {
            let m = 0.5 * (a + b);
            let fm = self.det(m);
            if fm == 0.0 {
                return m;
            }
            if (fm > 0.0) == (fa > 0.0) {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    fn golden_min(&self, mut a: f64, mut b: f64) -> f64 {
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (self.ratio(c), self.ratio(d));
        for _ in 0..MAX_REFINE {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = self.ratio(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = self.ratio(d);
            }
        }
        0.5 * (a + b)
    }
}

/// Instants `s` where `Πₓ Φ(0, s) U` drops rank, with multiplicity the
/// rank drop.
///
/// A sign change of the determinant between nodes is refined by
/// bisection; a local minimum of `σ_min/‖ΠₓΦ‖` (even multiplicities) by
/// golden-section search. Hits closer than one element are merged.
pub fn focal_points(path: &FundamentalMatrixPath, pair: &ConormalPair, tol: f64) -> Result<FocalReport> {
    let n = path.dim();
    if pair.u_basis.nrows() != 2 * n || pair.u_basis.ncols() != n {
        return Err(Error::DimensionMismatch { expected: 2 * n, found: pair.u_basis.nrows() });
    }
    if pair.v_basis.nrows() != 2 * n || pair.v_basis.rows(0, n).amax() > 0.0 || pair.v_basis.ncols() != n {
        return Err(Error::UnsupportedBoundary("focal points need the vertical target space"));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidInput("focal tolerance must lie in (0, 1)".into()));
    }
    let det = Detector { path, u: &pair.u_basis, n };
    let nodes = path.grid.len();
    let h = path.grid[1] - path.grid[0];
    let dets: Vec<f64> = (0..nodes).map(|k| det.reduce(&path.phi[k]).0.determinant()).collect();
    let ratios: Vec<f64> = (0..nodes).map(|k| det.ratio_at(&path.phi[k])).collect();

    let mut found: Vec<FocalInstant> = Vec::new();
    for k in 1..nodes - 1 {
        if dets[k] != 0.0 && dets[k + 1] != 0.0 && (dets[k] > 0.0) != (dets[k + 1] > 0.0) {
            let s = det.bisect_det(path.grid[k], path.grid[k + 1]);
            let m = det.multiplicity(s, tol).max(1);
            found.push(FocalInstant { s, multiplicity: m });
        }
    }
    for k in 1..nodes {
        let right = if k + 1 < nodes { ratios[k + 1] } else { f64::INFINITY };
        if ratios[k] <= ratios[k - 1] && ratios[k] < right {
            let hi = if k + 1 < nodes { path.grid[k + 1] } else { path.grid[k] };
            let s = det.golden_min(path.grid[k - 1], hi);
            let m = det.multiplicity(s, tol);
            if m > 0 {
                found.push(FocalInstant { s, multiplicity: m });
            }
        }
    }
    found.sort_by(|a, b| a.s.total_cmp(&b.s));
    let mut instants: Vec<FocalInstant> = Vec::new();
    for f in found {
        if f.s <= 0.5 * h {
            continue;
        }
        match instants.last_mut() {
            Some(prev) if f.s - prev.s < h => {
                // keep the higher multiplicity; a determinant root is the more
                // precise location for odd multiplicities
                if f.multiplicity > prev.multiplicity {
                    *prev = f;
                }
            }
            _ => instants.push(f),
        }
    }
    for i in &mut instants {
        i.multiplicity = i.multiplicity.min(n);
    }
    Ok(FocalReport { instants, span: path.span(), tolerance: tol })
}

/// Morse index on `[0, λ]` from the focal instants strictly inside `(0, λ)`.
pub fn index_via_focal(report: &FocalReport, lambda: f64) -> usize {
    report.cumulative(lambda)
}

/// Nullity on `[0, span]`: rank drop of `Πₓ Φ(0, span) U`.
///
/// Singular values are measured against `‖Πₓ Φ(0, span)‖`.
pub fn focal_nullity(path: &FundamentalMatrixPath, pair: &ConormalPair, tol: f64) -> usize {
    let n = path.dim();
    let last = path.phi.last().unwrap();
    let det = Detector { path, u: &pair.u_basis, n };
    let (d, scale) = det.reduce(last);
    linalg::singular_values(&d).iter().filter(|&&x| x <= tol * scale).count()
}
