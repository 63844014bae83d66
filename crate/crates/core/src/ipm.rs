//! Infeasible primal-dual interior-point method with the Nesterov-Todd
//! direction and a Mehrotra predictor-corrector.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{duality_gap, residual_norms, MixedProblem, Residuals, Solution, StageTimes, Status};
use crate::symmat::{
    cholesky_lower, dot, max_boundary_step, svd_of_product, CholeskyFactor, FactorResult,
    SymMatrix,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverParams {
    /// Infeasibility threshold for both residual norms.
    pub t_p: f64,
    /// Gap threshold.
    pub t_g: f64,
    pub expon: f64,
    pub perturb_strategy: u8,
    pub max_iterations: usize,
    /// Fraction-to-boundary factor.
    pub tau: f64,
    /// Shift added to the warm-start dual slack.
    pub rank_shift: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            t_p: 1e-8,
            t_g: 1e-8,
            expon: 1.0,
            perturb_strategy: 1,
            max_iterations: 100,
            tau: 0.98,
            rank_shift: 1e-8,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_p > 0.0 && self.t_g > 0.0) {
            return Err(Error::InvalidArgument("thresholds must be positive".into()));
        }
        if self.perturb_strategy > 7 {
            return Err(Error::InvalidArgument("perturbation strategy must be in 0..=7".into()));
        }
        if !(self.expon >= 0.0) {
            return Err(Error::InvalidArgument("expon must be nonnegative".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidArgument("tau must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Iterate {
    pub x: SymMatrix,
    pub x_lin: Vec<f64>,
    pub y: Vec<f64>,
    pub z: SymMatrix,
    pub z_lin: Vec<f64>,
}

impl Iterate {
    pub fn mu(&self) -> f64 {
        let n = self.x.n() + self.x_lin.len();
        (dot(self.x.as_slice(), self.z.as_slice()) + dot(&self.x_lin, &self.z_lin)) / n as f64
    }

    fn is_finite(&self) -> bool {
        self.x.as_slice().iter().chain(self.z.as_slice()).all(|v| v.is_finite())
            && self.y.iter().chain(&self.x_lin).chain(&self.z_lin).all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug)]
pub struct ScalingState {
    pub w: SymMatrix,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub d: Vec<f64>,
    pub w_lin: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Direction {
    pub dx: SymMatrix,
    pub dx_lin: Vec<f64>,
    pub dy: Vec<f64>,
    pub dz: SymMatrix,
    pub dz_lin: Vec<f64>,
}

pub fn cold_start(p: &MixedProblem) -> Iterate {
    let n = p.n() as f64;
    let base = 10f64.max(n.sqrt());
    let ratio = (0..p.m())
        .map(|i| (1.0 + p.b()[i].abs()) / (1.0 + p.constraint_norm(i)))
        .fold(0.0, f64::max);
    let xi = base.max(n * ratio);
    let a_max = (0..p.m()).map(|i| p.constraint_norm(i)).fold(0.0, f64::max);
    let eta = base.max(p.objective_norm()).max(a_max);
    Iterate {
        x: SymMatrix::identity(p.n()).scale(xi),
        x_lin: vec![xi; p.n_lin()],
        y: vec![0.0; p.m()],
        z: SymMatrix::identity(p.n()).scale(eta),
        z_lin: vec![eta; p.n_lin()],
    }
}

pub fn nt_scaling(it: &Iterate) -> Result<ScalingState> {
    let l = cholesky_lower(&it.x)?;
    let r = cholesky_lower(&it.z)?;
    let FactorResult::Svd { u, d, v } = svd_of_product(&r.transpose(), &l)? else {
        unreachable!()
    };
    if d.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Numerical("singular scaling product".into()));
    }
    let n = d.len();
    let mut g = &l * &v;
    let mut g_inv = u.transpose() * r.transpose();
    for k in 0..n {
        let s = d[k].sqrt();
        g.column_mut(k).scale_mut(1.0 / s);
        g_inv.row_mut(k).scale_mut(1.0 / s);
    }
    let w = SymMatrix::symmetrized(&g * g.transpose());
    let w_lin = it.x_lin.iter().zip(&it.z_lin).map(|(x, z)| x / z).collect();
    Ok(ScalingState { w, g, g_inv, d, w_lin })
}

fn add_lin_schur(p: &MixedProblem, sc: &ScalingState, b: &mut [f64]) {
    let (m, nl) = (p.m(), p.n_lin());
    if nl == 0 {
        return;
    }
    let scaled: Vec<Vec<f64>> = (0..m)
        .map(|i| p.a_lin_row(i).iter().zip(&sc.w_lin).map(|(a, w)| a * w).collect())
        .collect();
    for i in 0..m {
        for j in i..m {
            let v = dot(&scaled[i], p.a_lin_row(j));
            b[i * m + j] += v;
            if i != j {
                b[j * m + i] += v;
            }
        }
    }
}

fn mirror_upper(rows: Vec<Vec<f64>>, m: usize) -> Vec<f64> {
    let mut b = vec![0.0; m * m];
    for (i, row) in rows.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            let j = i + k;
            b[i * m + j] = v;
            b[j * m + i] = v;
        }
    }
    b
}

/// `B_ij = Tr(W A_i W A_j)` plus the diagonal-scaled linear part.
pub fn schur_generic(p: &MixedProblem, sc: &ScalingState) -> SymMatrix {
    let (n, m) = (p.n(), p.m());
    let w = sc.w.as_matrix();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let a = &p.a_sdp()[i];
            // P = W A_i W, by outer products when A_i is sparse
            let pm = if a.nnz_full() <= n {
                let mut pm = DMatrix::<f64>::zeros(n, n);
                for &(r, c, v) in a.entries() {
                    pm.ger(v, &w.column(r), &w.column(c), 1.0);
                    if r != c {
                        pm.ger(v, &w.column(c), &w.column(r), 1.0);
                    }
                }
                pm
            } else {
                let mut wa = DMatrix::<f64>::zeros(n, n);
                for &(r, c, v) in a.entries() {
                    wa.column_mut(c).axpy(v, &w.column(r), 1.0);
                    if r != c {
                        wa.column_mut(r).axpy(v, &w.column(c), 1.0);
                    }
                }
                wa * w
            };
            (i..m)
                .map(|j| {
                    let mut s = 0.0;
                    for &(r, c, v) in p.a_sdp()[j].entries() {
                        s += if r == c { v * pm[(r, c)] } else { v * (pm[(r, c)] + pm[(c, r)]) };
                    }
                    s
                })
                .collect()
        })
        .collect();
    let mut b = mirror_upper(rows, m);
    add_lin_schur(p, sc, &mut b);
    SymMatrix::symmetrized(DMatrix::from_vec(m.max(1), m.max(1), pad(b, m)))
}

fn pad(b: Vec<f64>, m: usize) -> Vec<f64> {
    if m == 0 {
        vec![0.0]
    } else {
        b
    }
}

/// Schur matrix for constraint matrices whose entries are all `-1`.
///
/// `W` is read as a flat array, `W[i][j] = w[n*i + j]`; each term of `A_i`
/// with `a <= b` is visited once with weight 1 on the diagonal, 2 off it.
pub fn schur_npa(p: &MixedProblem, sc: &ScalingState) -> Result<SymMatrix> {
    if !p.all_binary() {
        return Err(Error::Structure("schur_npa needs binary constraint matrices".into()));
    }
    let (n, m) = (p.n(), p.m());
    let w = sc.w.as_slice();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; m - i];
            for &(a, b, _) in p.a_sdp()[i].entries() {
                let weight = if a == b { 1.0 } else { 2.0 };
                let wa = &w[n * a..n * a + n];
                let wb = &w[n * b..n * b + n];
                for (k, j) in (i..m).enumerate() {
                    let coo = p.a_sdp()[j].coo_layout();
                    let mut s = 0.0;
                    for cd in coo.chunks_exact(2) {
                        s += wa[cd[0] as usize] * wb[cd[1] as usize];
                    }
                    row[k] += weight * s;
                }
            }
            row
        })
        .collect();
    let mut b = mirror_upper(rows, m);
    add_lin_schur(p, sc, &mut b);
    Ok(SymMatrix::symmetrized(DMatrix::from_vec(m.max(1), m.max(1), pad(b, m))))
}

fn sandwich(w: &SymMatrix, m: &SymMatrix) -> SymMatrix {
    SymMatrix::symmetrized(w.as_matrix() * m.as_matrix() * w.as_matrix())
}

/// Back-substitution shared by predictor and corrector: `target` is
/// `G R_c G^T` and `target_lin` the linear analogue.
fn solve_direction(
    p: &MixedProblem,
    sc: &ScalingState,
    factor: &CholeskyFactor,
    res: &Residuals,
    target: SymMatrix,
    target_lin: Vec<f64>,
) -> Direction {
    let wrw = sandwich(&sc.w, &res.r_d);
    let mut lhs_mat = wrw.axpy(-1.0, &target);
    let lin: Vec<f64> = (0..p.n_lin())
        .map(|k| sc.w_lin[k] * res.r_d_lin[k] - target_lin[k])
        .collect();
    let rhs: Vec<f64> = {
        let a = p.apply(&lhs_mat, &lin);
        res.r_p.iter().zip(a).map(|(r, a)| r + a).collect()
    };
    let dy = if p.m() > 0 { factor.solve(&rhs) } else { vec![] };
    let (ady, ady_lin) = p.adjoint(&dy);
    let dz = res.r_d.axpy(-1.0, &ady);
    let dz_lin: Vec<f64> = (0..p.n_lin()).map(|k| res.r_d_lin[k] - ady_lin[k]).collect();
    lhs_mat = target.axpy(-1.0, &sandwich(&sc.w, &dz));
    let dx_lin = (0..p.n_lin()).map(|k| target_lin[k] - sc.w_lin[k] * dz_lin[k]).collect();
    Direction { dx: lhs_mat, dx_lin, dy, dz, dz_lin }
}

/// Right-hand side of the predictor Schur system, `r_p + A(W R_d W + X)`.
pub fn predictor_rhs(p: &MixedProblem, it: &Iterate, sc: &ScalingState, res: &Residuals) -> Vec<f64> {
    let m = sandwich(&sc.w, &res.r_d).axpy(1.0, &it.x);
    let lin: Vec<f64> = (0..p.n_lin())
        .map(|k| sc.w_lin[k] * res.r_d_lin[k] + it.x_lin[k])
        .collect();
    let a = p.apply(&m, &lin);
    res.r_p.iter().zip(a).map(|(r, a)| r + a).collect()
}

/// Affine-scaling direction: `R_c = -D`, so `G R_c G^T = -X`.
pub fn predictor_direction(
    p: &MixedProblem,
    it: &Iterate,
    sc: &ScalingState,
    factor: &CholeskyFactor,
    res: &Residuals,
) -> Direction {
    let target = it.x.scale(-1.0);
    let target_lin = it.x_lin.iter().map(|x| -x).collect();
    solve_direction(p, sc, factor, res, target, target_lin)
}

/// Second-order term in V-space: the Lyapunov-scaled `-H(dX~ dZ~)`,
/// where `dX~ = G^{-1} dX G^{-T}` and `dZ~ = G^T dZ G`.
pub fn mehrotra_term(sc: &ScalingState, pred: &Direction) -> SymMatrix {
    let xs = &sc.g_inv * pred.dx.as_matrix() * sc.g_inv.transpose();
    let zs = sc.g.transpose() * pred.dz.as_matrix() * &sc.g;
    let prod = xs * zs;
    let n = sc.d.len();
    let f = DMatrix::from_fn(n, n, |i, j| {
        -(prod[(i, j)] + prod[(j, i)]) / (sc.d[i] + sc.d[j])
    });
    SymMatrix::symmetrized(f)
}

pub fn expon_used(mu: f64, step_pred: f64, expon: f64) -> f64 {
    if mu > 1e-6 {
        if step_pred < 3f64.sqrt() / 3.0 {
            1.0
        } else {
            expon.max(3.0 * step_pred * step_pred)
        }
    } else {
        1f64.max(expon.min(3.0 * step_pred * step_pred))
    }
}

/// Centering parameter from the predicted complementarity.
pub fn sigma(it: &Iterate, pred: &Direction, steps: (f64, f64), expon: f64) -> f64 {
    let (a, b) = steps;
    let x = it.x.axpy(a, &pred.dx);
    let z = it.z.axpy(b, &pred.dz);
    let xl: Vec<f64> = it.x_lin.iter().zip(&pred.dx_lin).map(|(x, d)| x + a * d).collect();
    let zl: Vec<f64> = it.z_lin.iter().zip(&pred.dz_lin).map(|(z, d)| z + b * d).collect();
    let num = dot(x.as_slice(), z.as_slice()) + dot(&xl, &zl);
    let den = dot(it.x.as_slice(), it.z.as_slice()) + dot(&it.x_lin, &it.z_lin);
    (num / den).max(0.0).powf(expon_used(it.mu(), a.min(b), expon))
}

#[allow(clippy::too_many_arguments)]
pub fn corrector_direction(
    p: &MixedProblem,
    it: &Iterate,
    sc: &ScalingState,
    factor: &CholeskyFactor,
    res: &Residuals,
    pred: &Direction,
    pred_steps: (f64, f64),
    params: &SolverParams,
) -> Direction {
    let sm = sigma(it, pred, pred_steps, params.expon) * it.mu();
    let n = sc.d.len();
    let mut rc = mehrotra_term(sc, pred).into_matrix();
    for k in 0..n {
        rc[(k, k)] += sm / sc.d[k] - sc.d[k];
    }
    let target = SymMatrix::symmetrized(&sc.g * rc * sc.g.transpose());
    let target_lin = (0..p.n_lin())
        .map(|k| (sm - pred.dx_lin[k] * pred.dz_lin[k]) / it.z_lin[k] - it.x_lin[k])
        .collect();
    solve_direction(p, sc, factor, res, target, target_lin)
}

fn lin_step(x: &[f64], dx: &[f64], tau: f64) -> f64 {
    x.iter()
        .zip(dx)
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| tau * x / -d)
        .fold(1.0, f64::min)
}

pub fn step_lengths(it: &Iterate, dir: &Direction, tau: f64) -> Result<(f64, f64)> {
    let a = max_boundary_step(&it.x, &dir.dx, tau)?.min(lin_step(&it.x_lin, &dir.dx_lin, tau));
    let b = max_boundary_step(&it.z, &dir.dz, tau)?.min(lin_step(&it.z_lin, &dir.dz_lin, tau));
    Ok((a, b))
}

/// Iterations since the last primal/dual perturbation (strategy 2).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PerturbCounters {
    pub not_pert_primal: u32,
    pub not_pert_dual: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbInputs {
    pub eps_p: f64,
    pub eps_d: f64,
    pub gap: f64,
    pub alpha_c: f64,
    pub beta_c: f64,
    pub t_p: f64,
}

fn shift(m: &mut SymMatrix, lin: &mut [f64], s: f64) {
    m.add_identity(s);
    for v in lin {
        *v += s;
    }
}

/// Applies one of the perturbation strategies 0..=7. Returns the amounts
/// added to the primal and dual iterates.
pub fn perturb(it: &mut Iterate, q: PerturbInputs, strategy: u8, counters: &mut PerturbCounters) -> (f64, f64) {
    let PerturbInputs { eps_p, eps_d, gap, alpha_c, beta_c, t_p } = q;
    let (mut px, mut pz) = (0.0, 0.0);
    match strategy {
        1 => {
            if gap > 100.0 * eps_p {
                px = 0.01 * t_p;
            }
            if eps_p > 100.0 * eps_d {
                pz = 0.1 * t_p;
            }
        }
        2 => {
            if gap > 100.0 * eps_p && counters.not_pert_primal > 1 {
                px = 0.01 * t_p;
                counters.not_pert_primal = 0;
            } else {
                counters.not_pert_primal += 1;
            }
            if eps_p > 100.0 * eps_d && counters.not_pert_dual > 1 {
                pz = 0.1 * t_p;
                counters.not_pert_dual = 0;
            } else {
                counters.not_pert_dual += 1;
            }
        }
        3 => {
            if alpha_c > 0.9 {
                px = 0.01 * t_p;
            }
            if beta_c > 0.9 {
                pz = 0.1 * t_p;
            }
        }
        4 => {
            if alpha_c < 0.1 {
                px = eps_p;
            }
            if beta_c < 0.1 {
                pz = 10.0 * eps_d;
            }
        }
        5 => {
            if eps_p < 0.01 * t_p {
                px = 0.0002 * eps_p;
            }
            if eps_d < 0.01 * t_p {
                pz = 0.001 * eps_d;
            }
        }
        6 => {
            if eps_p > 100.0 * eps_d || gap > 100.0 * eps_d {
                pz = 1e-9;
            } else if eps_p > 0.1 && gap > 0.1 {
                px = 0.01;
            } else if gap > 1000.0 * eps_p {
                px = 1e-8;
            }
        }
        7 => {
            if eps_p > 0.1 && gap > 0.1 {
                px = 0.01;
            }
        }
        _ => {}
    }
    if px != 0.0 {
        shift(&mut it.x, &mut it.x_lin, px);
    }
    if pz != 0.0 {
        shift(&mut it.z, &mut it.z_lin, pz);
    }
    (px, pz)
}

/// Cholesky of the Schur matrix. Near the optimum rounding can make it
/// numerically indefinite; a diagonal shift relative to its largest
/// diagonal entry is then tried before giving up.
pub fn factor_schur(b: &SymMatrix) -> Result<CholeskyFactor> {
    let n = b.n();
    match CholeskyFactor::new(b.as_slice(), n) {
        Ok(f) => return Ok(f),
        Err(e) if n == 0 => return Err(e),
        Err(_) => {}
    }
    let dmax = (0..n).map(|i| b.get(i, i)).fold(0.0, f64::max);
    let mut last = None;
    for shift in [1e-14, 1e-12, 1e-10] {
        let mut s = b.clone();
        s.add_identity(shift * dmax);
        match CholeskyFactor::new(s.as_slice(), n) {
            Ok(f) => return Ok(f),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("tried at least once"))
}

/// Observer for per-iteration state; used by tests to check invariants.
pub trait IterationHook {
    fn on_iteration(&mut self, _p: &MixedProblem, _it: &Iterate, _sc: &ScalingState, _pred: &Direction, _corr: &Direction) {}
}

struct NoHook;
impl IterationHook for NoHook {}

pub fn solve(p: &MixedProblem, params: &SolverParams, start: Option<Iterate>) -> Solution {
    solve_with_hook(p, params, start, &mut NoHook)
}

pub fn solve_with_hook(
    p: &MixedProblem,
    params: &SolverParams,
    start: Option<Iterate>,
    hook: &mut dyn IterationHook,
) -> Solution {
    let t0 = Instant::now();
    let mut times = StageTimes::default();
    let mut it = start.unwrap_or_else(|| cold_start(p));
    let mut counters = PerturbCounters::default();
    let use_npa = p.all_binary();
    let converged = |r: &Residuals, gap: f64| r.eps_p < params.t_p && r.eps_d < params.t_p && gap < params.t_g;

    let mut status = Status::IterationExceeded;
    let mut iterations = 0;
    match residual_norms(p, &it) {
        Ok(r) if converged(&r, duality_gap(&it)) => status = Status::Optimal,
        Ok(_) => {}
        Err(_) => status = Status::Failed,
    }
    while status == Status::IterationExceeded && iterations < params.max_iterations {
        iterations += 1;
        let clock = Instant::now();
        let sc = match nt_scaling(&it) {
            Ok(sc) => sc,
            Err(_) => {
                status = Status::Failed;
                break;
            }
        };
        times.scaling += clock.elapsed().as_secs_f64();
        let res = residual_norms(p, &it).expect("dimensions checked");

        let clock = Instant::now();
        let b = if use_npa { schur_npa(p, &sc).expect("binary checked") } else { schur_generic(p, &sc) };
        times.lhs += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let factor = match factor_schur(&b) {
            Ok(f) => f,
            Err(_) => {
                status = Status::Failed;
                break;
            }
        };
        times.factor += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let pred = predictor_direction(p, &it, &sc, &factor, &res);
        let pred_steps = match step_lengths(&it, &pred, params.tau) {
            Ok(s) => s,
            Err(_) => {
                status = Status::Failed;
                break;
            }
        };
        times.predictor += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let corr = corrector_direction(p, &it, &sc, &factor, &res, &pred, pred_steps, params);
        let (alpha_c, beta_c) = match step_lengths(&it, &corr, params.tau) {
            Ok(s) => s,
            Err(_) => {
                status = Status::Failed;
                break;
            }
        };
        times.corrector += clock.elapsed().as_secs_f64();
        hook.on_iteration(p, &it, &sc, &pred, &corr);

        it.x = it.x.axpy(alpha_c, &corr.dx);
        it.z = it.z.axpy(beta_c, &corr.dz);
        for k in 0..p.n_lin() {
            it.x_lin[k] += alpha_c * corr.dx_lin[k];
            it.z_lin[k] += beta_c * corr.dz_lin[k];
        }
        for (y, d) in it.y.iter_mut().zip(&corr.dy) {
            *y += beta_c * d;
        }
        if !it.is_finite() {
            status = Status::Failed;
            break;
        }

        let res = residual_norms(p, &it).expect("dimensions checked");
        let gap = duality_gap(&it);
        if converged(&res, gap) {
            status = Status::Optimal;
            break;
        }
        let inputs = PerturbInputs { eps_p: res.eps_p, eps_d: res.eps_d, gap, alpha_c, beta_c, t_p: params.t_p };
        perturb(&mut it, inputs, params.perturb_strategy, &mut counters);
    }
    times.total = t0.elapsed().as_secs_f64();
    finish(p, it, status, iterations, times)
}

fn finish(p: &MixedProblem, it: Iterate, status: Status, iterations: usize, times: StageTimes) -> Solution {
    let (eps_p, eps_d) = match residual_norms(p, &it) {
        Ok(r) => (r.eps_p, r.eps_d),
        Err(_) => (f64::NAN, f64::NAN),
    };
    let gap = duality_gap(&it);
    let objective_primal =
        crate::symmat::dot(p.c_sdp().as_slice(), it.x.as_slice()) + dot(p.c_lin(), &it.x_lin) + p.offset();
    let objective_dual = dot(p.b(), &it.y) + p.offset();
    Solution {
        status,
        x: it.x,
        x_lin: it.x_lin,
        y: it.y,
        z: it.z,
        z_lin: it.z_lin,
        eps_p,
        eps_d,
        gap,
        objective_primal,
        objective_dual,
        iterations,
        stage_times: times,
        sense: p.sense(),
    }
}

/// Frobenius distance helper for invariant checks.
pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
