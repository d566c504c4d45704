//! Morse index, nullity and bifurcation diagnostics for parameterized
//! Lagrangian boundary problems.

pub mod bifurcation;
pub mod boundary;
pub mod dynamics;
pub mod error;
pub mod index;
pub mod jacobi;
pub mod lagrangian;
pub mod linalg;
pub mod spectral_perturb;

pub use bifurcation::{BifurcationReport, Candidate, Certificate};
pub use boundary::{BoundaryCondition, ConormalPair, EndpointSpace};
pub use dynamics::{Branch, BvpOptions, ClosedFormBranch, Trajectory, WarmStartBranch};
pub use error::{Error, Result};
pub use index::{FocalReport, FundamentalMatrixPath, IndexReport};
pub use jacobi::{CoefficientPath, JacobiField, KernelBasis};
pub use lagrangian::{LagrangianFamily, PartialBundle};
pub use linalg::Inertia;
pub use spectral_perturb::{OperatorFamily, PerturbationCheck};
