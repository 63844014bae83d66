//! Mixed LP+SDP problems in the standard primal/dual pair
//!
//! ```text
//! primal: min  c_L.x_L + Tr(C X)   s.t. a_i.x_L + Tr(A_i X) = b_i,  x_L >= 0, X psd
//! dual:   max  b.y                 s.t. c_L - A_L y = z_L >= 0,  C - sum y_i A_i = Z psd
//! ```
//!
//! plus an additive `offset` carried into both reported objectives.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ipm::Iterate;
use crate::symmat::{dot, frobenius_norm, SymMatrix};

pub mod sdpa;

pub use sdpa::{sdpa_read, sdpa_read_str, sdpa_to_string, sdpa_write};

const INDEPENDENCE_TOL: f64 = 1e-9;

/// Symmetric sparse constraint matrix stored as its upper triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseConstraint {
    entries: Vec<(usize, usize, f64)>,
    binary: bool,
    nnz_full: usize,
    coo: Vec<u32>,
}

impl SparseConstraint {
    /// Entries with `row > col` are mirrored into the upper triangle; exact
    /// zeros are dropped. Indices are zero-based.
    pub fn new(n: usize, raw: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut entries = Vec::with_capacity(raw.len());
        for (i, j, v) in raw {
            if i >= n || j >= n {
                return Err(Error::Dimension(format!("entry ({i}, {j}) outside order {n}")));
            }
            if v != 0.0 {
                entries.push((i.min(j), i.max(j), v));
            }
        }
        entries.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        if entries.windows(2).any(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1) {
            return Err(Error::Structure("duplicate entry in constraint matrix".into()));
        }
        let nnz_full = entries.iter().map(|e| if e.0 == e.1 { 1 } else { 2 }).sum();
        let binary = !entries.is_empty() && entries.iter().all(|e| e.2 == -1.0);
        let mut coo = Vec::new();
        if binary {
            coo.reserve(2 * nnz_full);
            for &(i, j, _) in &entries {
                coo.push(i as u32);
                coo.push(j as u32);
                if i != j {
                    coo.push(j as u32);
                    coo.push(i as u32);
                }
            }
        }
        Ok(SparseConstraint { entries, binary, nnz_full, coo })
    }

    /// Upper-triangle entries `(row, col, value)`, `row <= col`, ordered by column.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn nnz_full(&self) -> usize {
        self.nnz_full
    }

    /// Alternating row/col coordinates of every nonzero, both triangles.
    /// Empty unless the constraint is binary.
    pub fn coo_layout(&self) -> &[u32] {
        &self.coo
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dot(&self, x: &SymMatrix) -> f64 {
        let mut s = 0.0;
        for &(i, j, v) in &self.entries {
            let w = if i == j { 1.0 } else { 2.0 };
            s += w * v * x.get(i, j);
        }
        s
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum()
    }

    /// Adds `s * A` into a dense matrix (both triangles).
    pub fn add_scaled_to(&self, m: &mut DMatrix<f64>, s: f64) {
        for &(i, j, v) in &self.entries {
            m[(i, j)] += s * v;
            if i != j {
                m[(j, i)] += s * v;
            }
        }
    }

    pub fn to_dense(&self, n: usize) -> SymMatrix {
        let mut m = DMatrix::zeros(n, n);
        self.add_scaled_to(&mut m, 1.0);
        SymMatrix::symmetrized(m)
    }

    /// Frobenius product of two sparse symmetric matrices.
    pub fn dot_sparse(&self, other: &SparseConstraint) -> f64 {
        let (mut p, mut q, mut s) = (0, 0, 0.0);
        let key = |e: &(usize, usize, f64)| (e.1, e.0);
        while p < self.entries.len() && q < other.entries.len() {
            let (a, b) = (&self.entries[p], &other.entries[q]);
            match key(a).cmp(&key(b)) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    s += if a.0 == a.1 { a.2 * b.2 } else { 2.0 * a.2 * b.2 };
                    p += 1;
                    q += 1;
                }
            }
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sense {
    /// The answer is the dual objective `b.y + offset` (NPA orientation).
    MaximizeDual,
    /// The answer is the primal objective `Tr(C X) + c_L.x_L + offset`.
    MinimizePrimal,
}

impl Sense {
    pub fn as_str(&self) -> &'static str {
        match self {
            Sense::MaximizeDual => "maximize-dual",
            Sense::MinimizePrimal => "minimize-primal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Blocks {
    pub n_lin: usize,
    pub n: usize,
}

/// One row of the constraint operator: SDP part, linear part and right-hand side.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Constraint {
    pub sdp: Vec<(usize, usize, f64)>,
    pub lin: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    pub c_sdp: SymMatrix,
    pub c_lin: Vec<f64>,
    pub sense: Sense,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixedProblem {
    n_lin: usize,
    n: usize,
    a_sdp: Vec<SparseConstraint>,
    a_lin: Vec<f64>,
    b: Vec<f64>,
    c_sdp: SymMatrix,
    c_lin: Vec<f64>,
    sense: Sense,
    offset: f64,
}

pub fn build_problem(
    blocks: Blocks,
    constraints: Vec<Constraint>,
    objective: Objective,
) -> Result<MixedProblem> {
    let Blocks { n_lin, n } = blocks;
    if n == 0 {
        return Err(Error::Dimension("SDP block order must be at least 1".into()));
    }
    if objective.c_sdp.n() != n || objective.c_lin.len() != n_lin {
        return Err(Error::Dimension("objective does not match block sizes".into()));
    }
    let m = constraints.len();
    if m > n_lin + n * (n + 1) / 2 {
        return Err(Error::LinearDependence { index: n_lin + n * (n + 1) / 2 });
    }
    let mut a_sdp = Vec::with_capacity(m);
    let mut a_lin = vec![0.0; m * n_lin];
    let mut b = Vec::with_capacity(m);
    for (i, c) in constraints.into_iter().enumerate() {
        a_sdp.push(SparseConstraint::new(n, c.sdp)?);
        for (k, v) in c.lin {
            if k >= n_lin {
                return Err(Error::Dimension(format!("linear index {k} outside block {n_lin}")));
            }
            a_lin[i * n_lin + k] += v;
        }
        b.push(c.rhs);
    }
    let p = MixedProblem {
        n_lin,
        n,
        a_sdp,
        a_lin,
        b,
        c_sdp: objective.c_sdp,
        c_lin: objective.c_lin,
        sense: objective.sense,
        offset: objective.offset,
    };
    p.check_independence()?;
    Ok(p)
}

impl MixedProblem {
    pub fn n_lin(&self) -> usize {
        self.n_lin
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn a_sdp(&self) -> &[SparseConstraint] {
        &self.a_sdp
    }

    /// Linear part of constraint `i`.
    pub fn a_lin_row(&self, i: usize) -> &[f64] {
        &self.a_lin[i * self.n_lin..(i + 1) * self.n_lin]
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c_sdp(&self) -> &SymMatrix {
        &self.c_sdp
    }

    pub fn c_lin(&self) -> &[f64] {
        &self.c_lin
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn all_binary(&self) -> bool {
        self.a_sdp.iter().all(|a| a.is_binary())
    }

    /// Applies the constraint operator: `(a_i.x_L + Tr(A_i X))_i`.
    pub fn apply(&self, x: &SymMatrix, x_lin: &[f64]) -> Vec<f64> {
        (0..self.m())
            .map(|i| self.a_sdp[i].dot(x) + dot(self.a_lin_row(i), x_lin))
            .collect()
    }

    /// Adjoint: `(sum y_i A_i, A_L y)`.
    pub fn adjoint(&self, y: &[f64]) -> (SymMatrix, Vec<f64>) {
        let mut m = DMatrix::zeros(self.n, self.n);
        let mut l = vec![0.0; self.n_lin];
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            self.a_sdp[i].add_scaled_to(&mut m, yi);
            for (lk, a) in l.iter_mut().zip(self.a_lin_row(i)) {
                *lk += yi * a;
            }
        }
        (SymMatrix::symmetrized(m), l)
    }

    /// Norm of the stacked constraint `(A_i, a_i)`.
    pub fn constraint_norm(&self, i: usize) -> f64 {
        let lin = self.a_lin_row(i);
        (self.a_sdp[i].frobenius_norm_sq() + dot(lin, lin)).sqrt()
    }

    pub fn objective_norm(&self) -> f64 {
        let c = frobenius_norm(&self.c_sdp);
        (c * c + dot(&self.c_lin, &self.c_lin)).sqrt()
    }

    fn check_independence(&self) -> Result<()> {
        let m = self.m();
        if m == 0 {
            return Ok(());
        }
        // Pairwise-disjoint nonempty SDP parts are independent on their own;
        // extra linear coordinates cannot reduce the rank.
        let mut owner = std::collections::HashMap::new();
        let mut disjoint = true;
        'outer: for (i, a) in self.a_sdp.iter().enumerate() {
            if a.is_empty() {
                disjoint = false;
                break;
            }
            for &(r, c, _) in a.entries() {
                if owner.insert((r, c), i).is_some() {
                    disjoint = false;
                    break 'outer;
                }
            }
        }
        if disjoint {
            return Ok(());
        }
        // Gram matrix of the stacked vectors, factored in constraint order:
        // a vanishing pivot marks a row spanned by the earlier ones.
        let mut g = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..=i {
                let v = self.a_sdp[i].dot_sparse(&self.a_sdp[j])
                    + dot(self.a_lin_row(i), self.a_lin_row(j));
                g[i * m + j] = v;
                g[j * m + i] = v;
            }
        }
        let mut l = vec![0.0; m * m];
        for i in 0..m {
            let gii = g[i * m + i];
            for j in 0..=i {
                let mut s = g[i * m + j];
                for k in 0..j {
                    s -= l[i * m + k] * l[j * m + k];
                }
                if i == j {
                    if gii <= 0.0 || s <= INDEPENDENCE_TOL * gii {
                        return Err(Error::LinearDependence { index: i });
                    }
                    l[i * m + i] = s.sqrt();
                } else {
                    l[i * m + j] = s / l[j * m + j];
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Failed,
    IterationExceeded,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Failed => "failed",
            Status::IterationExceeded => "iteration_exceeded",
        }
    }
}

/// Wall-clock seconds per solver stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub scaling: f64,
    pub lhs: f64,
    pub factor: f64,
    pub predictor: f64,
    pub corrector: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub status: Status,
    pub x: SymMatrix,
    pub x_lin: Vec<f64>,
    pub y: Vec<f64>,
    pub z: SymMatrix,
    pub z_lin: Vec<f64>,
    pub eps_p: f64,
    pub eps_d: f64,
    pub gap: f64,
    pub objective_primal: f64,
    pub objective_dual: f64,
    pub iterations: usize,
    pub stage_times: StageTimes,
    pub sense: Sense,
}

#[derive(Serialize)]
struct Report<'a> {
    status: &'a str,
    objective_primal: f64,
    objective_dual: f64,
    eps_p: f64,
    eps_d: f64,
    gap: f64,
    iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    stage_times: Option<StageTimes>,
}

impl Solution {
    /// The objective in the problem's own orientation.
    pub fn objective(&self) -> f64 {
        match self.sense {
            Sense::MaximizeDual => self.objective_dual,
            Sense::MinimizePrimal => self.objective_primal,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn to_json(&self, with_timings: bool) -> serde_json::Value {
        serde_json::to_value(Report {
            status: self.status.as_str(),
            objective_primal: self.objective_primal,
            objective_dual: self.objective_dual,
            eps_p: self.eps_p,
            eps_d: self.eps_d,
            gap: self.gap,
            iterations: self.iterations,
            stage_times: with_timings.then_some(self.stage_times),
        })
        .expect("report serializes")
    }
}

#[derive(Clone, Debug)]
pub struct Residuals {
    pub eps_p: f64,
    pub eps_d: f64,
    pub r_p: Vec<f64>,
    pub r_d: SymMatrix,
    pub r_d_lin: Vec<f64>,
}

pub fn residual_norms(p: &MixedProblem, it: &Iterate) -> Result<Residuals> {
    if it.x.n() != p.n()
        || it.z.n() != p.n()
        || it.y.len() != p.m()
        || it.x_lin.len() != p.n_lin()
        || it.z_lin.len() != p.n_lin()
    {
        return Err(Error::Dimension("iterate does not match problem".into()));
    }
    let ax = p.apply(&it.x, &it.x_lin);
    let r_p: Vec<f64> = p.b().iter().zip(&ax).map(|(b, a)| b - a).collect();
    let (ay, ay_lin) = p.adjoint(&it.y);
    let r_d = SymMatrix::symmetrized(p.c_sdp().as_matrix() - ay.as_matrix() - it.z.as_matrix());
    let r_d_lin: Vec<f64> = (0..p.n_lin())
        .map(|k| p.c_lin()[k] - ay_lin[k] - it.z_lin[k])
        .collect();
    let eps_p = dot(&r_p, &r_p).sqrt() / (1.0 + dot(p.b(), p.b()).sqrt());
    let rd = frobenius_norm(&r_d);
    let eps_d = (rd * rd + dot(&r_d_lin, &r_d_lin)).sqrt() / (1.0 + p.objective_norm());
    Ok(Residuals { eps_p, eps_d, r_p, r_d, r_d_lin })
}

pub fn duality_gap(it: &Iterate) -> f64 {
    dot(it.x.as_slice(), it.z.as_slice()).abs() + dot(&it.x_lin, &it.z_lin).abs()
}
