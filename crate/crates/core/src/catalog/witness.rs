//! Prepare-and-measure dimension witnesses and their Bell relaxations.

use super::protocols::maximize;
use super::NamedProblem;
use crate::error::{Error, Result};
use crate::ipm::SolverParams;
use crate::npa::{LinearFunctional, Relation, Scenario, SideConstraint};

/// `W = sum_{b,x,y} beta[b,x,y] P(b|x,y) + constant`, optionally with a
/// fixed-point-free pairing of Alice's settings.
#[derive(Clone, Debug, PartialEq)]
pub struct WitnessSpec {
    outcomes: usize,
    settings_x: usize,
    settings_y: usize,
    beta: Vec<f64>,
    pub constant: f64,
    pairing: Option<Vec<usize>>,
}

const TOL: f64 = 1e-12;

impl WitnessSpec {
    /// `beta` is indexed `(b * settings_x + x) * settings_y + y`.
    pub fn new(outcomes: usize, settings_x: usize, settings_y: usize, beta: Vec<f64>, constant: f64) -> Result<Self> {
        if outcomes < 2 || settings_x == 0 || settings_y == 0 {
            return Err(Error::Witness("need at least two outcomes and one setting per side".into()));
        }
        if beta.len() != outcomes * settings_x * settings_y {
            return Err(Error::Witness(format!(
                "expected {} coefficients, got {}",
                outcomes * settings_x * settings_y,
                beta.len()
            )));
        }
        Ok(WitnessSpec { outcomes, settings_x, settings_y, beta, constant, pairing: None })
    }

    /// Attaches a pairing and checks the symmetry it must induce.
    pub fn with_pairing(mut self, pairing: Vec<usize>) -> Result<Self> {
        let n = self.settings_x;
        if pairing.len() != n || n % 2 != 0 {
            return Err(Error::Witness("pairing needs an even number of settings".into()));
        }
        for (x, &px) in pairing.iter().enumerate() {
            if px >= n || px == x || pairing[px] != x {
                return Err(Error::Witness("pairing must be a fixed-point-free involution".into()));
            }
        }
        self.pairing = Some(pairing);
        if !self.is_symmetric() {
            return Err(Error::Witness("coefficients are not antisymmetric under the pairing".into()));
        }
        Ok(self)
    }

    /// The symmetric witness `sum c * omega(x,y)` over settings
    /// `{0,1} x X`, with `(a,x)` numbered `a * |X| + x`.
    pub fn symmetric_from_correlators(settings_x: usize, settings_y: usize, terms: &[(usize, usize, f64)]) -> Result<Self> {
        let sx = 2 * settings_x;
        let mut w = WitnessSpec::new(2, sx, settings_y, vec![0.0; 2 * sx * settings_y], 0.0)?;
        for &(x, y, c) in terms {
            check_term(x, y, settings_x, settings_y)?;
            let px = x + settings_x;
            *w.beta_mut(0, x, y) += 0.5 * c;
            *w.beta_mut(1, x, y) -= 0.5 * c;
            *w.beta_mut(0, px, y) -= 0.5 * c;
            *w.beta_mut(1, px, y) += 0.5 * c;
        }
        w.with_pairing((0..sx).map(|k| (k + settings_x) % sx).collect())
    }

    /// The reduced witness `sum c * D(x,y)` with `D = P(0|x,y) − P(1|x,y)`.
    pub fn reduced_from_correlators(settings_x: usize, settings_y: usize, terms: &[(usize, usize, f64)]) -> Result<Self> {
        let mut w = WitnessSpec::new(2, settings_x, settings_y, vec![0.0; 2 * settings_x * settings_y], 0.0)?;
        for &(x, y, c) in terms {
            check_term(x, y, settings_x, settings_y)?;
            *w.beta_mut(0, x, y) += c;
            *w.beta_mut(1, x, y) -= c;
        }
        Ok(w)
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn settings(&self) -> (usize, usize) {
        (self.settings_x, self.settings_y)
    }

    pub fn pairing(&self) -> Option<&[usize]> {
        self.pairing.as_deref()
    }

    fn idx(&self, b: usize, x: usize, y: usize) -> usize {
        (b * self.settings_x + x) * self.settings_y + y
    }

    pub fn beta(&self, b: usize, x: usize, y: usize) -> f64 {
        self.beta[self.idx(b, x, y)]
    }

    fn beta_mut(&mut self, b: usize, x: usize, y: usize) -> &mut f64 {
        let i = self.idx(b, x, y);
        &mut self.beta[i]
    }

    pub fn is_binary(&self) -> bool {
        self.outcomes == 2
    }

    pub fn is_zero_summing(&self) -> bool {
        (0..self.outcomes).all(|b| {
            (0..self.settings_y).all(|y| (0..self.settings_x).map(|x| self.beta(b, x, y)).sum::<f64>().abs() <= TOL)
        })
    }

    pub fn is_symmetric(&self) -> bool {
        let Some(phi) = &self.pairing else { return false };
        self.is_binary()
            && self.constant.abs() <= TOL
            && (0..self.settings_x).all(|x| {
                (0..self.settings_y).all(|y| {
                    (0..2).all(|b| {
                        let v = self.beta(b, x, y);
                        (v + self.beta(b, phi[x], y)).abs() <= TOL && (v + self.beta(1 - b, x, y)).abs() <= TOL
                    })
                })
            })
    }

    /// Value on a prepare-and-measure box `P(b|x,y)`.
    pub fn evaluate(&self, prob: impl Fn(usize, usize, usize) -> f64) -> f64 {
        let mut v = self.constant;
        for b in 0..self.outcomes {
            for x in 0..self.settings_x {
                for y in 0..self.settings_y {
                    v += self.beta(b, x, y) * prob(b, x, y);
                }
            }
        }
        v
    }
}

fn check_term(x: usize, y: usize, sx: usize, sy: usize) -> Result<()> {
    if x >= sx || y >= sy {
        return Err(Error::Witness(format!("term ({x}, {y}) outside {sx} x {sy} settings")));
    }
    Ok(())
}

/// Restricts a symmetric witness to the half `half`, turning each
/// `omega(x,y)` into `D(x,y)`. Settings are renumbered in the order given.
pub fn reduce_symmetric_witness(w: &WitnessSpec, half: &[usize]) -> Result<WitnessSpec> {
    if !w.is_symmetric() {
        return Err(Error::Witness("reduction needs a symmetric witness".into()));
    }
    let phi = w.pairing().expect("symmetric");
    let mut seen = vec![false; w.settings_x];
    for &x in half {
        if x >= w.settings_x || seen[x] || seen[phi[x]] {
            return Err(Error::Witness("not a half of the settings".into()));
        }
        seen[x] = true;
    }
    if 2 * half.len() != w.settings_x {
        return Err(Error::Witness("not a half of the settings".into()));
    }
    // beta_0 D(x) + beta_0(phi x) D(phi x) = 2 beta_0(x) omega(x)
    let mut out = WitnessSpec::new(2, half.len(), w.settings_y, vec![0.0; 2 * half.len() * w.settings_y], 0.0)?;
    for (k, &x) in half.iter().enumerate() {
        for y in 0..w.settings_y {
            let c = 2.0 * w.beta(0, x, y);
            *out.beta_mut(0, k, y) = c;
            *out.beta_mut(1, k, y) = -c;
        }
    }
    Ok(out)
}

/// Bell relaxation of a witness for communicated dimension `d`: Alice's
/// outcome 0 heralds the prepared state, so `P(b|x,y) = d P(0,b|x,y)` with
/// `P_A(0|x) = 1/d`.
pub fn dw_to_bell_relaxation(w: &WitnessSpec, d: usize) -> Result<NamedProblem> {
    if d < 2 {
        return Err(Error::InvalidArgument("dimension must be at least 2".into()));
    }
    let scenario = Scenario::bipartite(w.settings_x, 2, w.settings_y, w.outcomes)?;
    let mut f = LinearFunctional::constant(w.constant);
    for b in 0..w.outcomes {
        for x in 0..w.settings_x {
            for y in 0..w.settings_y {
                let c = w.beta(b, x, y);
                if c != 0.0 {
                    f.add_prob(&[0, b], &[x, y], d as f64 * c);
                }
            }
        }
    }
    let mut np = NamedProblem::new("dw-relaxation", scenario, f);
    for x in 0..w.settings_x {
        let mut pa = LinearFunctional::new();
        pa.add(crate::npa::ProbSymbol::marginal(2, 0, 0, x), 1.0);
        np.constraints.push(SideConstraint::new(pa, Relation::Eq, 1.0 / d as f64));
    }
    Ok(np)
}

/// `P(b|x,y) -> P(0,b|x,y) + P(1,!b|x,y)`.
fn recovered(b: usize, x: usize, y: usize, c: f64) -> LinearFunctional {
    let mut f = LinearFunctional::new();
    f.add_prob(&[0, b], &[x, y], c);
    f.add_prob(&[1, 1 - b], &[x, y], c);
    f
}

/// Bell relaxation of a binary zero-summing witness in dimension 2 under
/// the pure strategy, with coefficients at `y0` scaled by `delta`.
pub fn zero_sum_relaxation(w: &WitnessSpec, delta: f64, y0: usize) -> Result<NamedProblem> {
    if !w.is_binary() || !w.is_zero_summing() {
        return Err(Error::Witness("zero-sum relaxation needs a binary zero-summing witness".into()));
    }
    if !(0.0..=1.0).contains(&delta) || y0 >= w.settings_y {
        return Err(Error::InvalidArgument("need 0 <= delta <= 1 and y0 in range".into()));
    }
    let scenario = Scenario::bipartite(w.settings_x, 2, w.settings_y, 2)?;
    let mut f = LinearFunctional::constant(w.constant);
    for b in 0..2 {
        for x in 0..w.settings_x {
            for y in 0..w.settings_y {
                let c = w.beta(b, x, y) * if y == y0 { delta } else { 1.0 };
                if c != 0.0 {
                    f = f.plus(&recovered(b, x, y, c));
                }
            }
        }
    }
    let mut np = NamedProblem::new("zero-sum-relaxation", scenario, f);
    for x in 0..w.settings_x {
        for y in 0..w.settings_y {
            for (a, b) in [(0, 0), (0, 1)] {
                let mut g = LinearFunctional::new();
                g.add_prob(&[a, b], &[x, y], 1.0);
                g.add_prob(&[1 - a, 1 - b], &[x, y], -1.0);
                np.constraints.push(SideConstraint::new(g, Relation::Eq, 0.0));
            }
        }
    }
    Ok(np)
}

fn guess_under(np: &NamedProblem, s: f64, targets: Vec<LinearFunctional>, params: &SolverParams) -> Result<f64> {
    let ms = np.moment_structure()?;
    let mut cons = np.constraints.clone();
    cons.push(SideConstraint::new(np.objective.clone(), Relation::Ge, s));
    let mut best: f64 = 0.0;
    for t in targets {
        best = best.max(maximize(&ms, &t, &cons, params)?);
    }
    Ok(best.min(1.0))
}

/// Upper bound on the probability of guessing `b` at `(x0, y0)` for a
/// device of dimension `d` reaching witness value `s`.
pub fn dw_certify(w: &WitnessSpec, d: usize, s: f64, x0: usize, y0: usize, params: &SolverParams) -> Result<f64> {
    let np = dw_to_bell_relaxation(w, d)?;
    check_setting(w, x0, y0)?;
    let targets = (0..w.outcomes)
        .map(|b| {
            let mut t = LinearFunctional::new();
            t.add_prob(&[0, b], &[x0, y0], d as f64);
            t
        })
        .collect();
    guess_under(&np, s, targets, params)
}

/// Guessing bound `(1 − delta) + delta * P_guess` for the mixed strategy
/// that measures `y0` faithfully a fraction `delta` of the time.
pub fn zero_sum_certify(w: &WitnessSpec, delta: f64, s: f64, x0: usize, y0: usize, params: &SolverParams) -> Result<f64> {
    let np = zero_sum_relaxation(w, delta, y0)?;
    check_setting(w, x0, y0)?;
    if delta == 0.0 {
        return Ok(1.0);
    }
    let targets = (0..2).map(|b| recovered(b, x0, y0, 1.0)).collect();
    let pg = guess_under(&np, s, targets, params)?;
    Ok((1.0 - delta) + delta * pg)
}

fn check_setting(w: &WitnessSpec, x0: usize, y0: usize) -> Result<()> {
    if x0 >= w.settings_x || y0 >= w.settings_y {
        return Err(Error::InvalidArgument("generation settings out of range".into()));
    }
    Ok(())
}
