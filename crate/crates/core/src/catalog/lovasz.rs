//! Lovász theta of a graph as the smallest largest eigenvalue of a
//! matrix that is 1 on the diagonal and on non-adjacent pairs.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ipm::{solve, SolverParams};
use crate::model::{build_problem, Blocks, Constraint, Objective, Sense, Solution};
use crate::symmat::SymMatrix;

/// Solves `max -t  s.t.  tI − J − sum_e y_e E_e ⪰ 0`, with one free entry
/// `y_e` per edge. Returns θ and the raw solution.
pub fn lovasz_theta_solution(n: usize, edges: &[(usize, usize)], params: &SolverParams) -> Result<(f64, Solution)> {
    if n == 0 {
        return Err(Error::InvalidArgument("graph has no vertices".into()));
    }
    let mut adj = vec![false; n * n];
    for &(i, j) in edges {
        if i >= n || j >= n || i == j {
            return Err(Error::InvalidArgument(format!("bad edge ({i}, {j})")));
        }
        adj[i * n + j] = true;
        adj[j * n + i] = true;
    }
    let mut cons = vec![Constraint { sdp: (0..n).map(|i| (i, i, -1.0)).collect(), lin: Vec::new(), rhs: -1.0 }];
    for i in 0..n {
        for j in i + 1..n {
            if adj[i * n + j] {
                cons.push(Constraint { sdp: vec![(i, j, 1.0)], lin: Vec::new(), rhs: 0.0 });
            }
        }
    }
    let p = build_problem(
        Blocks { n_lin: 0, n },
        cons,
        Objective {
            c_sdp: SymMatrix::symmetrized(DMatrix::from_element(n, n, -1.0)),
            c_lin: Vec::new(),
            sense: Sense::MaximizeDual,
            offset: 0.0,
        },
    )?;
    let sol = solve(&p, params, None);
    if !sol.is_optimal() {
        return Err(Error::Numerical(format!("theta solve ended with status {}", sol.status.as_str())));
    }
    Ok((-sol.objective(), sol))
}

pub fn lovasz_theta(n: usize, edges: &[(usize, usize)], params: &SolverParams) -> Result<f64> {
    lovasz_theta_solution(n, edges, params).map(|(t, _)| t)
}
