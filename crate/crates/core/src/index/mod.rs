//! Morse index and nullity of the second variation, by finite elements and
//! by counting focal points.

pub mod fem;
pub mod focal;

pub use fem::{
    assemble_forms, assemble_forms_with, fem_index, fem_index_with, morse_index_fem, nullity_tolerance, Gram,
};
pub use focal::{
    focal_nullity, focal_points, fundamental_matrix, index_via_focal, FocalInstant, FocalReport,
    FundamentalMatrixPath, FOCAL_TOL,
};

use crate::boundary::{self, BoundaryCondition};
use crate::error::{Error, Result};
use crate::jacobi::CoefficientPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Fem,
    Focal,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Fem => "fem",
            Method::Focal => "focal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexReport {
    pub m_minus: usize,
    pub m_null: usize,
    /// Count of eigenvalues strictly below zero, ignoring the nullity band.
    pub strict_negative: usize,
    pub near_zero_eigs: Vec<f64>,
    pub method: Method,
    /// Number of elements.
    pub grid_size: usize,
    pub tolerance: f64,
    /// Some eigenvalue sits just outside the nullity band.
    pub indeterminate: bool,
}

impl IndexReport {
    /// `[m⁻, m⁻ + m⁰]`.
    pub fn interval(&self) -> (usize, usize) {
        (self.m_minus, self.m_minus + self.m_null)
    }
}

/// Index and nullity on the whole path from focal points. Only product
/// classes with a point target are supported.
pub fn focal_index(coeffs: &CoefficientPath, bc: &BoundaryCondition, tol: f64) -> Result<IndexReport> {
    if !bc.is_point_target() {
        return Err(Error::UnsupportedBoundary("focal route needs a product class with V₁ = {0}"));
    }
    let pair = boundary::conormal_pair(bc)?;
    let path = fundamental_matrix(coeffs)?;
    let report = focal_points(&path, &pair, tol)?;
    let span = coeffs.span();
    let h = coeffs.element_length();
    let m_null = focal_nullity(&path, &pair, tol);
    // when the end is degenerate, an instant within one element of it is
    // that same nullity
    let cutoff = if m_null > 0 { span - h } else { span };
    let m_minus = report.instants.iter().filter(|i| i.s < cutoff).map(|i| i.multiplicity).sum();
    Ok(IndexReport {
        m_minus,
        m_null,
        strict_negative: m_minus,
        near_zero_eigs: Vec::new(),
        method: Method::Focal,
        grid_size: coeffs.elements(),
        tolerance: tol,
        indeterminate: false,
    })
}
