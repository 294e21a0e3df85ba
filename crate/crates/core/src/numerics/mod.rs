//! Numerical kernels shared by the rest of the crate: dual numbers, RK4,
//! Jacobi SVD and bounded Nelder–Mead. All are pure functions of their inputs.

mod dual;
mod ode;
mod optim;
pub mod rows;
mod scalar;
mod svd;

pub use dual::{gradient, jacobian, try_jacobian, Dual};
pub(crate) use dual::jacobian_from_duals;
pub use ode::{solve_ode, uniform_grid, OdeProblem, Rhs};
pub use optim::{minimize_box, BoxBounds, OptimOptions, OptimResult};
pub use scalar::{Real, Scalar};
pub use svd::{max_principal_angle, null_space, numerical_rank, svd, SvdFactors};
