//! Linear boundary classes for the endpoint pair `(x(0), x(τ))`.
//!
//! All classes are the linear (reduced) form: product subspaces `V₀ × V₁`
//! through optional anchor points, the graph of an orthogonal map `E`, and
//! even τ-periodic curves. The even-periodic class is always represented on
//! the half interval `[0, τ/2]`: an even τ-periodic curve is determined by
//! its restriction there, and its velocity vanishes at both ends.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance on orthonormality of subspace bases and of `E`.
pub const ORTHONORMAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryCondition {
    /// `x(0) ∈ a₀ + V₀`, `x(τ) ∈ a₁ + V₁`; bases have orthonormal columns.
    ProductSubspaces {
        v0: DMatrix<f64>,
        v1: DMatrix<f64>,
        anchor0: DVector<f64>,
        anchor1: DVector<f64>,
    },
    /// `x(τ) = E x(0)` with `E` orthogonal. `E = I` is the periodic class.
    OrthogonalTwist { e: DMatrix<f64> },
    /// Even τ-periodic curves (brake orbits), stored on `[0, τ/2]`.
    EvenPeriodic,
}

/// Endpoint data `R ⊂ ℝ²ⁿ` of a boundary class.
#[derive(Debug, Clone, PartialEq)]
pub enum EndpointSpace {
    /// Columns span `R` inside `ℝⁿ × ℝⁿ`.
    Basis(DMatrix<f64>),
    /// The even-periodic class has no endpoint subspace; it restricts the
    /// function class instead.
    EvenPeriodicClass,
}

impl EndpointSpace {
    pub fn dim(&self) -> Option<usize> {
        match self {
            EndpointSpace::Basis(b) => Some(b.ncols()),
            EndpointSpace::EvenPeriodicClass => None,
        }
    }
}

/// Phase-space data for the focal engine: `U = S₀ × S₀^⊥` and the
/// vertical space `V = {0} × ℝⁿ`, both as `2n`-row bases.
#[derive(Debug, Clone, PartialEq)]
pub struct ConormalPair {
    pub u_basis: DMatrix<f64>,
    pub v_basis: DMatrix<f64>,
}

fn check_orthonormal(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let defect = linalg::orthonormality_defect(m);
    if defect > ORTHONORMAL_TOL {
        return Err(Error::InvalidInput(format!("{what} is not orthonormal (defect {defect:e})")));
    }
    Ok(())
}

impl BoundaryCondition {
    /// Product class from orthonormal bases (n × d₀ and n × d₁).
    pub fn product(v0: DMatrix<f64>, v1: DMatrix<f64>) -> Result<Self> {
        if v0.nrows() != v1.nrows() {
            return Err(Error::DimensionMismatch { expected: v0.nrows(), found: v1.nrows() });
        }
        if v0.nrows() == 0 {
            return Err(Error::InvalidInput("configuration dimension must be positive".into()));
        }
        check_orthonormal(&v0, "V0 basis")?;
        check_orthonormal(&v1, "V1 basis")?;
        let n = v0.nrows();
        Ok(BoundaryCondition::ProductSubspaces {
            v0,
            v1,
            anchor0: DVector::zeros(n),
            anchor1: DVector::zeros(n),
        })
    }

    /// Product class from arbitrary spanning vectors (orthonormalized).
    pub fn product_from_spans(n: usize, span0: &[Vec<f64>], span1: &[Vec<f64>]) -> Result<Self> {
        let to_matrix = |span: &[Vec<f64>]| -> Result<DMatrix<f64>> {
            let mut m = DMatrix::zeros(n, span.len());
            for (j, col) in span.iter().enumerate() {
                if col.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: col.len() });
                }
                m.set_column(j, &DVector::from_column_slice(col));
            }
            Ok(linalg::orthonormalize(&m, 1e-10))
        };
        Self::product(to_matrix(span0)?, to_matrix(span1)?)
    }

    /// Both endpoints pinned at the origin.
    pub fn dirichlet(n: usize) -> Self {
        Self::product(DMatrix::zeros(n, 0), DMatrix::zeros(n, 0)).expect("empty bases are orthonormal")
    }

    /// `x(0) = a`, `x(τ) = b`.
    pub fn dirichlet_to(a: DVector<f64>, b: DVector<f64>) -> Result<Self> {
        Self::dirichlet(a.len()).with_anchors(a, b)
    }

    /// Free endpoints (`V₀ = V₁ = ℝⁿ`).
    pub fn neumann(n: usize) -> Self {
        Self::product(DMatrix::identity(n, n), DMatrix::identity(n, n)).expect("identity is orthonormal")
    }

    /// Shift a product class to pass through the points `a` and `b`.
    pub fn with_anchors(self, a: DVector<f64>, b: DVector<f64>) -> Result<Self> {
        match self {
            BoundaryCondition::ProductSubspaces { v0, v1, .. } => {
                let n = v0.nrows();
                for len in [a.len(), b.len()] {
                    if len != n {
                        return Err(Error::DimensionMismatch { expected: n, found: len });
                    }
                }
                Ok(BoundaryCondition::ProductSubspaces { v0, v1, anchor0: a, anchor1: b })
            }
            _ => Err(Error::UnsupportedBoundary("twist/brake (anchors)")),
        }
    }

    pub fn twist(e: DMatrix<f64>) -> Result<Self> {
        if e.nrows() != e.ncols() || e.nrows() == 0 {
            return Err(Error::DimensionMismatch { expected: e.nrows(), found: e.ncols() });
        }
        let defect = (e.transpose() * &e - DMatrix::<f64>::identity(e.nrows(), e.nrows())).amax();
        if defect > ORTHONORMAL_TOL {
            return Err(Error::InvalidInput(format!("E is not orthogonal (defect {defect:e})")));
        }
        Ok(BoundaryCondition::OrthogonalTwist { e })
    }

    pub fn periodic(n: usize) -> Self {
        BoundaryCondition::OrthogonalTwist { e: DMatrix::identity(n, n) }
    }

    /// Planar rotation by `theta` as a twist.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        BoundaryCondition::OrthogonalTwist { e: DMatrix::from_row_slice(2, 2, &[c, -s, s, c]) }
    }

    pub fn brake() -> Self {
        BoundaryCondition::EvenPeriodic
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BoundaryCondition::ProductSubspaces { .. } => "product",
            BoundaryCondition::OrthogonalTwist { .. } => "twist",
            BoundaryCondition::EvenPeriodic => "brake",
        }
    }

    /// Configuration dimension, when the class fixes it.
    pub fn dim(&self) -> Option<usize> {
        match self {
            BoundaryCondition::ProductSubspaces { v0, .. } => Some(v0.nrows()),
            BoundaryCondition::OrthogonalTwist { e } => Some(e.nrows()),
            BoundaryCondition::EvenPeriodic => None,
        }
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        match self.dim() {
            Some(d) if d != n => Err(Error::DimensionMismatch { expected: n, found: d }),
            _ => Ok(()),
        }
    }

    /// Whether the class lives on the half interval `[0, τ/2]`.
    pub fn is_half_interval(&self) -> bool {
        matches!(self, BoundaryCondition::EvenPeriodic)
    }

    /// True for product classes whose final endpoint is a single point
    /// (`V₁ = {0}`), the setting of the focal-point index theorem.
    pub fn is_point_target(&self) -> bool {
        matches!(self, BoundaryCondition::ProductSubspaces { v1, .. } if v1.ncols() == 0)
    }
}

/// Basis of the endpoint subspace `R ⊂ ℝ²ⁿ`.
pub fn endpoint_subspace(bc: &BoundaryCondition, n: usize) -> Result<EndpointSpace> {
    bc.check_dim(n)?;
    match bc {
        BoundaryCondition::ProductSubspaces { v0, v1, .. } => {
            let (d0, d1) = (v0.ncols(), v1.ncols());
            let mut r = DMatrix::zeros(2 * n, d0 + d1);
            r.view_mut((0, 0), (n, d0)).copy_from(v0);
            r.view_mut((n, d0), (n, d1)).copy_from(v1);
            Ok(EndpointSpace::Basis(r))
        }
        BoundaryCondition::OrthogonalTwist { e } => {
            let mut r = DMatrix::zeros(2 * n, n);
            r.view_mut((0, 0), (n, n)).fill_with_identity();
            r.view_mut((n, 0), (n, n)).copy_from(e);
            Ok(EndpointSpace::Basis(r))
        }
        BoundaryCondition::EvenPeriodic => Ok(EndpointSpace::EvenPeriodicClass),
    }
}

/// Natural (transversality) residual at the endpoints.
///
/// For product and twist classes `a`, `b` are the momenta `∂vL` at `t = 0`
/// and `t = τ`. For the even-periodic class they are the velocities at the
/// two turning times `0` and `τ/2`.
pub fn natural_residual(bc: &BoundaryCondition, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    match bc {
        BoundaryCondition::ProductSubspaces { v0, v1, .. } => {
            let r0 = v0.transpose() * a;
            let r1 = v1.transpose() * b;
            stack(&r0, &r1)
        }
        // (Eᵀ)⁻¹ = E for orthogonal E
        BoundaryCondition::OrthogonalTwist { e } => e * a - b,
        BoundaryCondition::EvenPeriodic => stack(a, b),
    }
}

/// Essential (position) residual; zero exactly when the endpoints are
/// admissible. Uses the anchors of a product class.
pub fn essential_residual(bc: &BoundaryCondition, x0: &DVector<f64>, x1: &DVector<f64>) -> DVector<f64> {
    match bc {
        BoundaryCondition::ProductSubspaces { anchor0, anchor1, .. } => {
            linear_essential(bc, &(x0 - anchor0), &(x1 - anchor1))
        }
        _ => linear_essential(bc, x0, x1),
    }
}

/// Essential residual of the linear (tangent) class, ignoring anchors.
pub fn linear_essential(bc: &BoundaryCondition, x0: &DVector<f64>, x1: &DVector<f64>) -> DVector<f64> {
    match bc {
        BoundaryCondition::ProductSubspaces { v0, v1, .. } => {
            let n = v0.nrows();
            let c0 = linalg::orthonormal_complement(v0, n);
            let c1 = linalg::orthonormal_complement(v1, n);
            stack(&(c0.transpose() * x0), &(c1.transpose() * x1))
        }
        BoundaryCondition::OrthogonalTwist { e } => x1 - e * x0,
        BoundaryCondition::EvenPeriodic => DVector::zeros(0),
    }
}

/// `U = S₀ × S₀^⊥` and `V = {0} × ℝⁿ` for a product class.
pub fn conormal_pair(bc: &BoundaryCondition) -> Result<ConormalPair> {
    let BoundaryCondition::ProductSubspaces { v0, .. } = bc else {
        return Err(Error::UnsupportedBoundary(bc.kind()));
    };
    let n = v0.nrows();
    let d0 = v0.ncols();
    let comp = linalg::orthonormal_complement(v0, n);
    let mut u = DMatrix::zeros(2 * n, n);
    u.view_mut((0, 0), (n, d0)).copy_from(v0);
    u.view_mut((n, d0), (n, n - d0)).copy_from(&comp);
    let mut v = DMatrix::zeros(2 * n, n);
    v.view_mut((n, 0), (n, n)).fill_with_identity();
    Ok(ConormalPair { u_basis: u, v_basis: v })
}

fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}
