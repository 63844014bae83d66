//! Named Bell functionals and the protocols built on them.

use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

use crate::error::{Error, Result};
use crate::ipm::{solve, SolverParams};
use crate::model::{MixedProblem, Solution};
use crate::npa::{
    assemble_problem, build_moment_structure, LevelSpec, LinearFunctional, MomentStructure, ProbSymbol,
    Relation, Scenario, SideConstraint,
};

mod lovasz;
mod protocols;
mod witness;

pub use lovasz::{lovasz_theta, lovasz_theta_solution};
pub use protocols::{
    certify_min_entropy, guessing_grid_lp, hardy_maximizer, hardy_nu_bound, mermin_amplification_bound, GridPoint, GuessMode,
    Goal, HardyPoint, MarginalMax, MinEntropy, OutcomeMax,
};
pub use witness::{
    dw_certify, dw_to_bell_relaxation, reduce_symmetric_witness, zero_sum_certify, zero_sum_relaxation,
    WitnessSpec,
};

/// `(5√5 − 11)/2`, the largest Hardy probability.
pub fn hardy_q() -> f64 {
    (5.0 * 5f64.sqrt() - 11.0) / 2.0
}

/// `(√5 − 1)/2`.
pub fn golden_weight() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

/// Parameters shared by the catalog instances. Unused fields are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemParams {
    /// Purity of the observed box; bounds scale with it.
    pub p: f64,
    /// Size for the `bcn` and `tn` families.
    pub n: Option<usize>,
    /// Angle of the E0E1 family.
    pub phi: f64,
    /// Noiseless CHSH level demanded by T3C.
    pub c: f64,
    /// Slack of the Hardy constraints when `h` is not given.
    pub eps: f64,
    pub h: Option<[f64; 4]>,
    /// Setting weights `(p_A, p_B)` of the Hardy key rounds.
    pub weights: (f64, f64),
}

impl Default for ProblemParams {
    fn default() -> Self {
        ProblemParams {
            p: 1.0,
            n: None,
            phi: FRAC_PI_4,
            c: 2.3,
            eps: 1e-8,
            h: None,
            weights: (golden_weight(), golden_weight()),
        }
    }
}

impl ProblemParams {
    /// Sets one parameter from a `key=value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = || {
            value
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("parameter `{key}`: `{value}` is not a number")))
        };
        match key.trim() {
            "p" => self.p = num()?,
            "n" => {
                let v = num()?;
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(Error::InvalidArgument("n must be a positive integer".into()));
                }
                self.n = Some(v as usize);
            }
            "phi" => self.phi = num()?,
            "c" => self.c = num()?,
            "eps" => self.eps = num()?,
            "pa" => self.weights.0 = num()?,
            "pb" => self.weights.1 = num()?,
            k @ ("h1" | "h2" | "h3" | "h4") => {
                let i = (k.as_bytes()[1] - b'1') as usize;
                let mut h = self.hardy_h();
                h[i] = num()?;
                self.h = Some(h);
            }
            other => return Err(Error::InvalidArgument(format!("unknown parameter `{other}`"))),
        }
        Ok(())
    }

    pub fn hardy_h(&self) -> [f64; 4] {
        self.h.unwrap_or([hardy_q() - self.eps, self.eps, self.eps, self.eps])
    }
}

/// A relaxation instance: a functional to maximize, side constraints, and
/// the setting pair used when certifying randomness.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedProblem {
    pub name: String,
    pub scenario: Scenario,
    pub level: LevelSpec,
    /// Maximized by a plain solve.
    pub objective: LinearFunctional,
    pub constraints: Vec<SideConstraint>,
    /// Added to `constraints` when certifying randomness, e.g. the observed
    /// Bell value.
    pub certification: Vec<SideConstraint>,
    /// Settings of each party used for generation.
    pub guess: Option<Vec<usize>>,
    /// Maximum over the quantum set where known.
    pub reference: Option<f64>,
    pub classical: Option<f64>,
}

impl NamedProblem {
    fn new(name: &str, scenario: Scenario, objective: LinearFunctional) -> Self {
        NamedProblem {
            name: name.to_string(),
            scenario,
            level: LevelSpec::parse("1+AB").expect("valid level"),
            objective,
            constraints: Vec::new(),
            certification: Vec::new(),
            guess: None,
            reference: None,
            classical: None,
        }
    }

    pub fn with_level(mut self, level: LevelSpec) -> Self {
        self.level = level;
        self
    }

    pub fn moment_structure(&self) -> Result<MomentStructure> {
        build_moment_structure(&self.scenario, &self.level)
    }

    /// The plain problem: maximize the objective under `constraints`.
    pub fn assemble(&self) -> Result<(MomentStructure, MixedProblem)> {
        let ms = self.moment_structure()?;
        let p = assemble_problem(&ms, &self.objective, &self.constraints)?;
        Ok((ms, p))
    }

    /// All constraints in force during certification.
    pub fn certification_constraints(&self) -> Vec<SideConstraint> {
        self.constraints.iter().chain(&self.certification).cloned().collect()
    }

    /// Maximize `P(outcomes | guess)` under the certification constraints.
    pub fn guessing_problem(&self, ms: &MomentStructure, outcomes: &[usize]) -> Result<MixedProblem> {
        let guess = self.guess_settings()?;
        let mut f = LinearFunctional::new();
        f.add_prob(outcomes, guess, 1.0);
        assemble_problem(ms, &f, &self.certification_constraints())
    }

    pub fn guess_settings(&self) -> Result<&[usize]> {
        self.guess
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument(format!("`{}` has no generation settings", self.name)))
    }

    pub fn solve(&self, params: &SolverParams) -> Result<Solution> {
        let (_, p) = self.assemble()?;
        Ok(solve(&p, params, None))
    }
}

/// One row of the catalog listing.
#[derive(Clone, Debug, PartialEq)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub scenario: &'static str,
    pub params: &'static str,
    pub description: &'static str,
}

pub fn catalog_entries() -> Vec<CatalogEntry> {
    let e = |name, scenario, params, description| CatalogEntry { name, scenario, params, description };
    vec![
        e("chsh", "(2,2|2,2)", "p", "CHSH; certification bound p*2sqrt2"),
        e("i3322", "(2,2|3,3)", "", "I3322"),
        e("bcn", "(2,2|n,n)", "n, p", "Braunstein-Caves chained operator (also bc3, bc5, ...)"),
        e("modchsh", "(2,2|2,3)", "p", "modified CHSH"),
        e("tn", "(2,2|2^(n-1),n)", "n, p", "QRAC operator T_n (also t2, t3, ...)"),
        e("i1", "(2,2|4,3)", "p", "I_1"),
        e("i2", "(2,2|4,3)", "p", "I_2"),
        e("cglmp", "(3,3|2,2)", "", "CGLMP, local bound 3"),
        e("mermin", "(2,2,2|2,2,2)", "", "Mermin game unbiased success, classical 3/4"),
        e("e0e1", "(2,2|2,2)", "p, phi", "guessing P(0,0|1,0) with E0 >= 2p cos(phi), E1 >= 2p sin(phi)"),
        e("t3c", "(2,2|4,3)", "p, c", "guessing P(0,0|0,2) with T3 and two CHSH constraints"),
        e("hardy", "(2,2|2,2)", "h1..h4 | eps, pa, pb", "Hardy key-round probability under relaxed Hardy constraints"),
    ]
}

fn correlators(terms: &[(usize, usize, f64)]) -> LinearFunctional {
    let mut f = LinearFunctional::new();
    for &(x, y, c) in terms {
        f.add_correlator(x, y, c);
    }
    f
}

pub fn chsh() -> LinearFunctional {
    correlators(&[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, -1.0)])
}

pub fn i3322() -> LinearFunctional {
    let mut f = LinearFunctional::new();
    f.add(ProbSymbol::marginal(2, 0, 0, 0), -1.0);
    f.add(ProbSymbol::marginal(2, 1, 0, 0), -2.0);
    f.add(ProbSymbol::marginal(2, 1, 0, 1), -1.0);
    for (x, y, c) in [(0, 0, 1.0), (0, 1, 1.0), (0, 2, 1.0), (1, 0, 1.0), (1, 1, 1.0), (1, 2, -1.0), (2, 0, 1.0), (2, 1, -1.0)] {
        f.add_prob(&[0, 0], &[x, y], c);
    }
    f
}

/// Chained operator over `n` settings per party.
pub fn bcn(n: usize) -> Result<LinearFunctional> {
    if n < 2 {
        return Err(Error::InvalidArgument("bcn needs n >= 2".into()));
    }
    let mut terms: Vec<(usize, usize, f64)> = (0..n).map(|k| (k, k, 1.0)).collect();
    terms.extend((0..n - 1).map(|k| (k, k + 1, 1.0)));
    terms.push((n - 1, 0, -1.0));
    Ok(correlators(&terms))
}

pub fn modified_chsh() -> LinearFunctional {
    correlators(&[(0, 1, 1.0), (0, 2, 1.0), (1, 0, 1.0), (1, 1, 1.0), (1, 2, -1.0)])
}

/// `sum_{x,y} (-1)^{x_y} C(x,y)` with Alice's setting `x = (0, x_2..x_n)`
/// indexed by the binary number `x_2..x_n`.
pub fn tn(n: usize) -> Result<LinearFunctional> {
    if !(2..=12).contains(&n) {
        return Err(Error::InvalidArgument("tn needs 2 <= n <= 12".into()));
    }
    let mut terms = Vec::new();
    for a in 0..1usize << (n - 1) {
        for y in 0..n {
            let bit = if y == 0 { 0 } else { (a >> (n - 1 - y)) & 1 };
            terms.push((a, y, if bit == 0 { 1.0 } else { -1.0 }));
        }
    }
    Ok(correlators(&terms))
}

pub fn i1() -> LinearFunctional {
    correlators(&[(0, 1, 1.0), (0, 2, -1.0), (1, 0, -1.0), (1, 1, -1.0), (2, 0, 1.0), (2, 2, 1.0), (3, 0, 1.0)])
}

pub fn i2() -> LinearFunctional {
    correlators(&[
        (0, 1, -1.0),
        (0, 2, 1.0),
        (1, 0, 1.0),
        (1, 1, 1.0),
        (1, 2, 1.0),
        (2, 1, 1.0),
        (2, 2, -1.0),
        (3, 0, 1.0),
        (3, 1, 1.0),
        (3, 2, 1.0),
    ])
}

pub fn cglmp() -> LinearFunctional {
    #[rustfmt::skip]
    let terms: [(usize, usize, usize, usize, f64); 24] = [
        (0, 0, 0, 0, 1.0), (0, 2, 0, 0, -1.0), (0, 0, 0, 1, 1.0), (0, 2, 0, 1, -1.0),
        (1, 0, 0, 0, -1.0), (1, 1, 0, 0, 1.0), (1, 0, 0, 1, -1.0), (1, 1, 0, 1, 1.0),
        (2, 1, 0, 0, -1.0), (2, 2, 0, 0, 1.0), (2, 1, 0, 1, -1.0), (2, 2, 0, 1, 1.0),
        (0, 0, 1, 0, -1.0), (0, 1, 1, 0, 1.0), (0, 0, 1, 1, 1.0), (0, 2, 1, 1, -1.0),
        (1, 1, 1, 0, -1.0), (1, 2, 1, 0, 1.0), (1, 0, 1, 1, -1.0), (1, 1, 1, 1, 1.0),
        (2, 0, 1, 0, 1.0), (2, 2, 1, 0, -1.0), (2, 1, 1, 1, -1.0), (2, 2, 1, 1, 1.0),
    ];
    let mut f = LinearFunctional::new();
    for (a, b, x, y, c) in terms {
        f.add_prob(&[a, b], &[x, y], c);
    }
    f
}

/// Unbiased success of the Mermin game: `(1/4) sum_{x,y} P(a+b+c = xy mod 2 | x, y, x+y+1)`.
pub fn mermin() -> LinearFunctional {
    let mut f = LinearFunctional::new();
    for x in 0..2 {
        for y in 0..2 {
            let z = x ^ y ^ 1;
            for a in 0..2 {
                for b in 0..2 {
                    for c in 0..2 {
                        if a ^ b ^ c == x * y {
                            f.add_prob(&[a, b, c], &[x, y, z], 0.25);
                        }
                    }
                }
            }
        }
    }
    f
}

pub fn e0() -> LinearFunctional {
    correlators(&[(0, 0, 1.0), (0, 1, 1.0)])
}

pub fn e1() -> LinearFunctional {
    correlators(&[(1, 0, 1.0), (1, 1, -1.0)])
}

pub fn chsh1() -> LinearFunctional {
    correlators(&[(0, 0, 1.0), (2, 0, 1.0), (0, 1, 1.0), (2, 1, -1.0)])
}

pub fn chsh2() -> LinearFunctional {
    correlators(&[(1, 0, 1.0), (3, 0, 1.0), (1, 1, 1.0), (3, 1, -1.0)])
}

/// `(1 − p_A)(p_B P(0,0|1,0) + (1 − p_B) P(0,0|1,1))`.
pub fn hardy_nu(weights: (f64, f64)) -> LinearFunctional {
    let (pa, pb) = weights;
    let mut f = LinearFunctional::new();
    f.add_prob(&[0, 0], &[1, 0], (1.0 - pa) * pb);
    f.add_prob(&[0, 0], &[1, 1], (1.0 - pa) * (1.0 - pb));
    f
}

/// The relaxed Hardy conditions: `P(0,0|0,0) >= h1`, then `<=` bounds on
/// `P(0,0|1,0)`, `P(0,0|0,1)` and `P(1,1|1,1)`.
pub fn hardy_constraints(h: [f64; 4]) -> Vec<SideConstraint> {
    let prob = |a: usize, b: usize, x: usize, y: usize| {
        let mut f = LinearFunctional::new();
        f.add_prob(&[a, b], &[x, y], 1.0);
        f
    };
    vec![
        SideConstraint::new(prob(0, 0, 0, 0), Relation::Ge, h[0]),
        SideConstraint::new(prob(0, 0, 1, 0), Relation::Le, h[1]),
        SideConstraint::new(prob(0, 0, 0, 1), Relation::Le, h[2]),
        SideConstraint::new(prob(1, 1, 1, 1), Relation::Le, h[3]),
    ]
}

fn bell_bound(name: &str, scenario: Scenario, f: LinearFunctional, reference: f64, p: f64) -> NamedProblem {
    let mut np = NamedProblem::new(name, scenario, f.clone());
    np.reference = Some(reference);
    np.certification = vec![SideConstraint::new(f, Relation::Ge, p * reference)];
    np
}

/// Largest T3 value compatible with both CHSH sub-operators reaching `c`.
pub fn t3_max_given_chsh(c: f64, params: &SolverParams) -> Result<f64> {
    let t3_max = 4.0 * 3f64.sqrt();
    if !(0.0..=2.0 * SQRT_2).contains(&c) {
        return Err(Error::InvalidArgument("T3C needs 0 <= c <= 2sqrt2".into()));
    }
    // the T3-optimal box has both CHSH values at 4/sqrt3
    if c <= 4.0 / 3f64.sqrt() {
        return Ok(t3_max);
    }
    let mut np = NamedProblem::new("t3-given-chsh", Scenario::bipartite(4, 2, 3, 2)?, tn(3)?);
    np.constraints = vec![
        SideConstraint::new(chsh1(), Relation::Ge, c),
        SideConstraint::new(chsh2(), Relation::Ge, c),
    ];
    let sol = np.solve(params)?;
    if !sol.is_optimal() {
        return Err(Error::CertificationInfeasible(format!("no quantum box reaches CHSH {c} on both pairs")));
    }
    Ok(sol.objective())
}

fn parse_family(name: &str, prefix: &str) -> Option<usize> {
    name.strip_prefix(prefix).and_then(|s| s.parse().ok())
}

/// Builds a catalog instance by name.
pub fn catalog_problem(name: &str, params: &ProblemParams) -> Result<NamedProblem> {
    let p = params.p;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument("p must lie in [0, 1]".into()));
    }
    let key = name.to_ascii_lowercase();
    let bc_n = if key == "bcn" { Some(params.n.unwrap_or(3)) } else { parse_family(&key, "bc") };
    let t_n = if key == "tn" { Some(params.n.unwrap_or(3)) } else { parse_family(&key, "t") };
    let np = match key.as_str() {
        "chsh" => {
            let mut np = bell_bound("chsh", Scenario::bipartite(2, 2, 2, 2)?, chsh(), 2.0 * SQRT_2, p);
            np.guess = Some(vec![0, 0]);
            np.classical = Some(2.0);
            np
        }
        "i3322" => {
            let mut np = NamedProblem::new("i3322", Scenario::bipartite(3, 2, 3, 2)?, i3322());
            np.reference = Some(0.25089);
            np.classical = Some(0.0);
            np
        }
        "modchsh" => {
            let mut np = bell_bound("modchsh", Scenario::bipartite(2, 2, 3, 2)?, modified_chsh(), 1.0 + 2.0 * SQRT_2, p);
            np.guess = Some(vec![0, 0]);
            np
        }
        "i1" => {
            let r = 1.0 + 6.0 * (PI / 6.0).cos();
            let mut np = bell_bound("i1", Scenario::bipartite(4, 2, 3, 2)?, i1(), r, p);
            np.guess = Some(vec![0, 0]);
            np
        }
        "i2" => {
            let mut np = bell_bound("i2", Scenario::bipartite(4, 2, 3, 2)?, i2(), 2.0 + 4.0 * SQRT_2, p);
            np.guess = Some(vec![0, 0]);
            np
        }
        "cglmp" => {
            let mut np = NamedProblem::new("cglmp", Scenario::bipartite(2, 3, 2, 3)?, cglmp());
            np.classical = Some(3.0);
            np
        }
        "mermin" => {
            let mut np = NamedProblem::new("mermin", Scenario::uniform(3, 2, 2)?, mermin())
                .with_level(LevelSpec::parse("1+AB+AC+BC")?);
            np.reference = Some(1.0);
            np.classical = Some(0.75);
            np
        }
        "e0e1" => {
            let mut f = LinearFunctional::new();
            f.add_prob(&[0, 0], &[1, 0], 1.0);
            let mut np = NamedProblem::new("e0e1", Scenario::bipartite(2, 2, 2, 2)?, f);
            np.constraints = vec![
                SideConstraint::new(e0(), Relation::Ge, 2.0 * p * params.phi.cos()),
                SideConstraint::new(e1(), Relation::Ge, 2.0 * p * params.phi.sin()),
            ];
            np.guess = Some(vec![1, 0]);
            np
        }
        "t3c" => {
            let t3 = t3_max_given_chsh(params.c, &SolverParams::default())?;
            let mut f = LinearFunctional::new();
            f.add_prob(&[0, 0], &[0, 2], 1.0);
            let mut np = NamedProblem::new("t3c", Scenario::bipartite(4, 2, 3, 2)?, f);
            np.constraints = vec![
                SideConstraint::new(tn(3)?, Relation::Ge, p * t3),
                SideConstraint::new(chsh1(), Relation::Ge, p * params.c),
                SideConstraint::new(chsh2(), Relation::Ge, p * params.c),
            ];
            np.guess = Some(vec![0, 2]);
            np
        }
        "hardy" => {
            let h = params.hardy_h();
            if h.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidArgument("Hardy bounds must lie in [0, 1]".into()));
            }
            let mut np = NamedProblem::new("hardy", Scenario::bipartite(2, 2, 2, 2)?, hardy_nu(params.weights));
            np.constraints = hardy_constraints(h);
            np
        }
        _ if bc_n.is_some() => {
            let n = bc_n.unwrap_or(3);
            let r = 2.0 * n as f64 * (PI / (2.0 * n as f64)).cos();
            let mut np = bell_bound(&format!("bc{n}"), Scenario::bipartite(n, 2, n, 2)?, bcn(n)?, r, p);
            np.guess = Some(vec![0, ((n + 3) / 2 - 1).min(n - 1)]);
            np.classical = Some(2.0 * n as f64 - 2.0);
            np
        }
        _ if t_n.is_some() => {
            let n = t_n.unwrap_or(3);
            let f = tn(n)?;
            let r = (n as f64).sqrt() * (1u64 << (n - 1)) as f64;
            let mut np = bell_bound(&format!("t{n}"), Scenario::bipartite(1 << (n - 1), 2, n, 2)?, f, r, p);
            np.guess = Some(vec![0, 0]);
            np
        }
        _ => return Err(Error::UnknownProblem(name.to_string())),
    };
    Ok(np)
}

/// One of the eight solver test instances in final form, with the
/// thresholds it is run at.
#[derive(Clone, Debug)]
pub struct BenchmarkCase {
    pub name: String,
    pub problem: MixedProblem,
    pub params: SolverParams,
}

pub fn benchmark_cases() -> Result<Vec<BenchmarkCase>> {
    let defaults = ProblemParams::default();
    let mut out = Vec::new();
    for name in ["chsh", "i3322", "e0e1", "hardy", "bc3", "t3c", "bc5", "bc7"] {
        let problem = if name.starts_with("bc") {
            let np = catalog_problem(name, &ProblemParams { p: 0.99, ..defaults.clone() })?;
            let ms = np.moment_structure()?;
            np.guessing_problem(&ms, &[0, 0])?
        } else if name == "t3c" {
            catalog_problem(name, &ProblemParams { p: 0.99, ..defaults.clone() })?.assemble()?.1
        } else {
            catalog_problem(name, &defaults)?.assemble()?.1
        };
        // these two have no strictly feasible moment matrix and stall near 1e-5
        let params = if matches!(name, "e0e1" | "hardy") {
            SolverParams { t_g: 2e-5, ..SolverParams::default() }
        } else {
            SolverParams::default()
        };
        out.push(BenchmarkCase { name: name.to_string(), problem, params });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
