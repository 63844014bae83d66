//! Randomness certification, Hardy key rounds and Mermin amplification.

use rayon::prelude::*;
use serde::Serialize;

use super::{hardy_constraints, hardy_nu, mermin, NamedProblem};
use crate::error::{Error, Result};
use crate::ipm::{solve, SolverParams};
use crate::model::{build_problem, Blocks, Constraint, Objective, Sense};
use crate::npa::{
    assemble_problem, build_moment_structure, LevelSpec, LinearFunctional, MomentStructure, ProbSymbol,
    Relation, Scenario, SideConstraint,
};
use crate::symmat::SymMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Goal {
    Max,
    Min,
}

/// Largest value of `f` under `cons`, or the certification-infeasible
/// signal when the constraints admit no box.
pub(crate) fn maximize(
    ms: &MomentStructure,
    f: &LinearFunctional,
    cons: &[SideConstraint],
    params: &SolverParams,
) -> Result<f64> {
    match try_maximize(ms, f, cons, params)? {
        Some(v) => Ok(v),
        None => Err(diagnose(ms, cons, params)),
    }
}

fn try_maximize(
    ms: &MomentStructure,
    f: &LinearFunctional,
    cons: &[SideConstraint],
    params: &SolverParams,
) -> Result<Option<f64>> {
    let p = assemble_problem(ms, f, cons)?;
    for strategy in fallback_strategies(params.perturb_strategy) {
        let sol = solve(&p, &SolverParams { perturb_strategy: strategy, ..params.clone() }, None);
        if sol.is_optimal() {
            return Ok(Some(sol.objective()));
        }
    }
    // constraints on the boundary of the quantum set leave no interior point
    if params.t_g < BOUNDARY_GAP {
        let sol = solve(&p, &SolverParams { t_g: BOUNDARY_GAP, ..params.clone() }, None);
        if sol.is_optimal() {
            return Ok(Some(sol.objective()));
        }
    }
    Ok(None)
}

const BOUNDARY_GAP: f64 = 2e-5;

/// The requested perturbation strategy first, then 3 and 2, which recover
/// most of the certification problems where strategy 1 stalls near the optimum.
pub(crate) fn fallback_strategies(first: u8) -> Vec<u8> {
    let mut v = vec![first];
    for s in [3, 2] {
        if s != first {
            v.push(s);
        }
    }
    v
}

/// Explains a failed solve: infeasible when some constraint cannot be met
/// alone or together with the others, a numerical error otherwise.
fn diagnose(ms: &MomentStructure, cons: &[SideConstraint], params: &SolverParams) -> Error {
    if let Some(e) = diagnose_against(ms, cons, params, |_| Vec::new()) {
        return e;
    }
    if cons.len() > 1 {
        let rest = |i: usize| cons.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, c)| c.clone()).collect();
        if let Some(e) = diagnose_against(ms, cons, params, rest) {
            return e;
        }
    }
    Error::Numerical("solver did not reach the requested accuracy".into())
}

fn diagnose_against(
    ms: &MomentStructure,
    cons: &[SideConstraint],
    params: &SolverParams,
    others: impl Fn(usize) -> Vec<SideConstraint>,
) -> Option<Error> {
    for (i, c) in cons.iter().enumerate() {
        let others = others(i);
        let mut checks = Vec::new();
        if matches!(c.rel, Relation::Ge | Relation::Eq) {
            checks.push((c.f.clone(), c.bound));
        }
        if matches!(c.rel, Relation::Le | Relation::Eq) {
            checks.push((c.f.scaled(-1.0), -c.bound));
        }
        for (f, bound) in checks {
            match try_maximize(ms, &f, &others, params) {
                Ok(Some(best)) if best < bound - 1e-6 * bound.abs().max(1.0) => {
                    return Some(Error::CertificationInfeasible(format!(
                        "constraint {i} asks for {bound} but the relaxation reaches at most {best}"
                    )));
                }
                Ok(_) => {}
                Err(e) => return Some(e),
            }
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutcomeMax {
    pub outcomes: Vec<usize>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalMax {
    pub party: usize,
    pub outcome: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinEntropy {
    pub h_global: f64,
    pub h_local: f64,
    pub p_global: f64,
    pub p_local: f64,
    pub joint: Vec<OutcomeMax>,
    pub marginals: Vec<MarginalMax>,
}

fn min_entropy(p: f64) -> f64 {
    if p >= 1.0 {
        0.0
    } else {
        -p.max(f64::MIN_POSITIVE).log2()
    }
}

fn outcome_tuples(scenario: &Scenario) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for party in scenario.parties() {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..party.outcomes).map(move |a| {
                    let mut t = t.clone();
                    t.push(a);
                    t
                })
            })
            .collect();
    }
    out
}

/// Min-entropy of the outcomes at `guess` (defaults to the problem's
/// generation settings) certified by the problem's constraints. One solve
/// per joint outcome and per single-party outcome, run in parallel.
pub fn certify_min_entropy(
    problem: &NamedProblem,
    guess: Option<&[usize]>,
    level: Option<&LevelSpec>,
    params: &SolverParams,
) -> Result<MinEntropy> {
    let settings: Vec<usize> = match guess {
        Some(g) => g.to_vec(),
        None => problem.guess_settings()?.to_vec(),
    };
    let parties = problem.scenario.parties();
    if settings.len() != parties.len() || settings.iter().zip(parties).any(|(&x, p)| x >= p.settings) {
        return Err(Error::InvalidArgument("generation settings do not fit the scenario".into()));
    }
    let level = level.unwrap_or(&problem.level);
    let ms = build_moment_structure(&problem.scenario, level)?;
    let cons = problem.certification_constraints();

    let mut targets: Vec<(Option<Vec<usize>>, ProbSymbol)> = outcome_tuples(&problem.scenario)
        .into_iter()
        .map(|o| (Some(o.clone()), ProbSymbol::joint(&o, &settings)))
        .collect();
    for (k, party) in parties.iter().enumerate() {
        for a in 0..party.outcomes {
            targets.push((None, ProbSymbol::marginal(parties.len(), k, a, settings[k])));
        }
    }
    let values: Vec<Option<f64>> = targets
        .par_iter()
        .map(|(_, sym)| {
            let mut f = LinearFunctional::new();
            f.add(sym.clone(), 1.0);
            try_maximize(&ms, &f, &cons, params)
        })
        .collect::<Result<_>>()?;
    if values.iter().any(Option::is_none) {
        return Err(diagnose(&ms, &cons, params));
    }

    let mut joint = Vec::new();
    let mut marginals = Vec::new();
    for ((outcomes, sym), v) in targets.into_iter().zip(values) {
        let value = v.unwrap_or(0.0).clamp(0.0, 1.0);
        match outcomes {
            Some(outcomes) => joint.push(OutcomeMax { outcomes, value }),
            None => {
                let (party, part) = sym.parts.iter().enumerate().find(|(_, p)| p.is_some()).expect("one party");
                let (_, outcome) = part.expect("marginal part");
                marginals.push(MarginalMax { party, outcome, value });
            }
        }
    }
    let p_global = joint.iter().map(|o| o.value).fold(0.0, f64::max);
    let p_local = marginals.iter().map(|o| o.value).fold(0.0, f64::max);
    Ok(MinEntropy {
        h_global: min_entropy(p_global),
        h_local: min_entropy(p_local),
        p_global,
        p_local,
        joint,
        marginals,
    })
}

/// Extreme value of the Hardy key-round probability under the relaxed
/// Hardy conditions `h`.
pub fn hardy_nu_bound(
    h: [f64; 4],
    weights: (f64, f64),
    level: Option<&LevelSpec>,
    goal: Goal,
    params: &SolverParams,
) -> Result<f64> {
    if h.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument("Hardy bounds must lie in [0, 1]".into()));
    }
    let (pa, pb) = weights;
    if !(0.0..=1.0).contains(&pa) || !(0.0..=1.0).contains(&pb) {
        return Err(Error::InvalidArgument("setting weights must lie in [0, 1]".into()));
    }
    let default = LevelSpec::parse("1+AB")?;
    let ms = build_moment_structure(&Scenario::bipartite(2, 2, 2, 2)?, level.unwrap_or(&default))?;
    let nu = hardy_nu(weights);
    let cons = hardy_constraints(h);
    match goal {
        Goal::Max => maximize(&ms, &nu, &cons, params),
        Goal::Min => maximize(&ms, &nu.scaled(-1.0), &cons, params).map(|v| -v),
    }
}

/// The box reaching the largest Hardy success probability `P(0,0|0,0)` when
/// the three Hardy zeros are relaxed to `<= eps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HardyPoint {
    pub success: f64,
    /// `P(0,0|1,1)` at that box.
    pub p00_11: f64,
}

/// With `eps = 0` the only box meeting the Hardy conditions at maximal
/// success is the Hardy realization, so this reads off its probabilities.
pub fn hardy_maximizer(eps: f64, level: Option<&LevelSpec>, params: &SolverParams) -> Result<HardyPoint> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidArgument("eps must lie in [0, 1]".into()));
    }
    let default = LevelSpec::parse("1+AB")?;
    let ms = build_moment_structure(&Scenario::bipartite(2, 2, 2, 2)?, level.unwrap_or(&default))?;
    let cons: Vec<SideConstraint> = hardy_constraints([0.0, eps, eps, eps]).into_iter().skip(1).collect();
    let mut success = LinearFunctional::new();
    success.add_prob(&[0, 0], &[0, 0], 1.0);
    let mut target = LinearFunctional::new();
    target.add_prob(&[0, 0], &[1, 1], 1.0);
    let p = assemble_problem(&ms, &success, &cons)?;
    let mut attempts = vec![params.clone()];
    if params.t_g < BOUNDARY_GAP {
        attempts.push(SolverParams { t_g: BOUNDARY_GAP, ..params.clone() });
    }
    for attempt in attempts {
        let sol = solve(&p, &attempt, None);
        if sol.is_optimal() {
            return Ok(HardyPoint { success: sol.objective(), p00_11: target.evaluate(&ms, &sol.y)? });
        }
    }
    Err(Error::Numerical("Hardy maximization did not converge".into()))
}

/// A precomputed grid point: Hardy probabilities and the largest guessing
/// probabilities of a `0` and of a `1` there.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub h: [f64; 4],
    pub gamma0: f64,
    pub gamma1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GuessMode {
    Plain,
    /// Alice drops rounds to balance her key; `p0`, `p1` are the
    /// frequencies of her two settings among the key rounds.
    Dropping { p0: f64, p1: f64 },
}

/// Average guessing probability at `target` over convex mixtures of grid
/// points, solved as a linear program.
pub fn guessing_grid_lp(points: &[GridPoint], target: [f64; 4], mode: GuessMode, params: &SolverParams) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    let (w0, w1) = match mode {
        GuessMode::Plain => (1.0, 1.0),
        GuessMode::Dropping { p0, p1 } => {
            if !(p0 > 0.0 && p1 > 0.0) {
                return Err(Error::InvalidArgument("dropping weights must be positive".into()));
            }
            (0.5 / p0, 0.5 / p1)
        }
    };
    let k = points.len();
    let mut rows: Vec<(Vec<f64>, f64)> = (0..4)
        .map(|r| (points.iter().chain(points).map(|g| g.h[r]).collect(), target[r]))
        .collect();
    rows.push((vec![1.0; 2 * k], 1.0));
    let rows = independent_rows(rows)?;
    let constraints = rows
        .into_iter()
        .map(|(a, b)| Constraint {
            sdp: Vec::new(),
            lin: a.into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect(),
            rhs: b,
        })
        .collect();
    let mut c: Vec<f64> = points.iter().map(|g| -w0 * g.gamma0).collect();
    c.extend(points.iter().map(|g| -w1 * g.gamma1));
    // the 1x1 block carries no constraint; its cost drives it to zero
    let problem = build_problem(
        Blocks { n_lin: 2 * k, n: 1 },
        constraints,
        Objective { c_sdp: SymMatrix::identity(1), c_lin: c, sense: Sense::MinimizePrimal, offset: 0.0 },
    )?;
    let sol = solve(&problem, params, None);
    if !sol.is_optimal() {
        return Err(Error::CertificationInfeasible("target is not a mixture of grid points".into()));
    }
    Ok(-sol.objective())
}

/// Drops rows that are linear combinations of earlier ones, failing when
/// their right-hand sides disagree.
fn independent_rows(rows: Vec<(Vec<f64>, f64)>) -> Result<Vec<(Vec<f64>, f64)>> {
    let mut basis: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut kept = Vec::new();
    for (a, b) in rows {
        let scale = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (mut r, mut rb) = (a.clone(), b);
        for (q, qb) in &basis {
            let c: f64 = r.iter().zip(q).map(|(x, y)| x * y).sum();
            r.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            rb -= c * qb;
        }
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-10 * scale.max(1.0) {
            if rb.abs() > 1e-9 * b.abs().max(1.0) {
                return Err(Error::CertificationInfeasible("target lies outside the affine hull of the grid".into()));
            }
            continue;
        }
        basis.push((r.iter().map(|v| v / norm).collect(), rb / norm));
        kept.push((a, b));
    }
    Ok(kept)
}

/// Bias bound `g = P_max − ½` on the output of a Mermin device fed by a
/// Santha-Vazirani source of bias `eps` that wins with probability `p_s`.
pub fn mermin_amplification_bound(eps: f64, p_s: f64, level: Option<&LevelSpec>, params: &SolverParams) -> Result<f64> {
    if !(0.0..0.5).contains(&eps) || !(0.0..=1.0).contains(&p_s) {
        return Err(Error::InvalidArgument("need 0 <= eps < 1/2 and 0 <= p_s <= 1".into()));
    }
    let d = (0.5 - eps).powi(2);
    if d <= 1.0 - p_s {
        return Ok(0.5);
    }
    let unbiased = 1.0 - (1.0 - p_s) / d;
    let default = LevelSpec::parse("1+AB+AC+BC")?;
    let ms = build_moment_structure(&Scenario::uniform(3, 2, 2)?, level.unwrap_or(&default))?;
    let cons = [SideConstraint::new(mermin(), Relation::Ge, unbiased)];
    let targets: Vec<(usize, usize)> = (0..2).flat_map(|x| (0..2).map(move |i| (x, i))).collect();
    let values: Vec<f64> = targets
        .par_iter()
        .map(|&(x, i)| {
            let mut f = LinearFunctional::new();
            f.add(ProbSymbol::marginal(3, 0, i, x), 1.0);
            maximize(&ms, &f, &cons, params)
        })
        .collect::<Result<_>>()?;
    let p_max = values.into_iter().fold(0.5, f64::max);
    Ok((p_max - 0.5).clamp(0.0, 0.5))
}
