//! Moment-matrix (NPA) relaxations of quantum correlations and a
//! primal-dual interior-point solver for the resulting LP+SDP problems.

pub mod catalog;
pub mod error;
pub mod ipm;
pub mod model;
pub mod npa;
pub mod symmat;

pub use error::{Error, Result};
pub use ipm::{solve, Iterate, SolverParams};
pub use model::{build_problem, Blocks, Constraint, MixedProblem, Objective, Sense, Solution, Status};
pub use symmat::SymMatrix;
