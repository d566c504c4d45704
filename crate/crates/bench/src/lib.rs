//! Fixtures shared by the benchmarks.

use lagrindex::dynamics::Branch;
use lagrindex::jacobi::coefficients_along;
use lagrindex::lagrangian::{build_pendulum, pendulum_period};
use lagrindex::{BoundaryCondition, ClosedFormBranch, CoefficientPath, LagrangianFamily};
use nalgebra::DMatrix;

/// Forced pendulum on its trivial branch with the periodic class.
pub fn pendulum(elements: usize) -> (LagrangianFamily, ClosedFormBranch, BoundaryCondition) {
    let fam = build_pendulum(1.0, 1.0, None).expect("pendulum builds");
    let branch = ClosedFormBranch::zero(1, pendulum_period(1.0, 1.0), 2 * elements);
    (fam, branch, BoundaryCondition::periodic(1))
}

pub fn pendulum_coefficients(elements: usize, lambda: f64) -> CoefficientPath {
    let (fam, branch, _) = pendulum(elements);
    let traj = branch.trajectory(&fam, lambda).expect("trivial branch");
    coefficients_along(&fam, lambda, &traj).expect("coefficients")
}

/// `P = I`, `Q = 0`, `R = −ω²I` on `[0, span]`.
pub fn oscillator(n: usize, omega: f64, span: f64, elements: usize) -> CoefficientPath {
    CoefficientPath::from_fn(span, elements, move |_| {
        (DMatrix::identity(n, n), DMatrix::zeros(n, n), DMatrix::identity(n, n) * -(omega * omega))
    })
    .expect("valid coefficients")
}
