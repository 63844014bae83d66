//! NPA moment-matrix relaxations.
//!
//! Operators are projectors `E^a_x` per party with the last outcome of
//! every setting eliminated. A row/column of the moment matrix Γ is indexed
//! by a canonical operator sequence; cell `(i, j)` holds `<O_i^† O_j>`.
//! Settings and outcomes are zero-based throughout.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ipm::Iterate;
use crate::model::{build_problem, Blocks, Constraint, MixedProblem, Objective, Sense, SparseConstraint};
use crate::symmat::SymMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Party {
    pub settings: usize,
    pub outcomes: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    parties: Vec<Party>,
}

impl Scenario {
    pub fn new(parties: Vec<Party>) -> Result<Self> {
        if parties.is_empty() {
            return Err(Error::Scenario("at least one party required".into()));
        }
        if parties.iter().any(|p| p.settings < 1 || p.outcomes < 2) {
            return Err(Error::Scenario("each party needs a setting and two outcomes".into()));
        }
        Ok(Scenario { parties })
    }

    pub fn bipartite(settings_a: usize, outcomes_a: usize, settings_b: usize, outcomes_b: usize) -> Result<Self> {
        Self::new(vec![
            Party { settings: settings_a, outcomes: outcomes_a },
            Party { settings: settings_b, outcomes: outcomes_b },
        ])
    }

    pub fn uniform(parties: usize, settings: usize, outcomes: usize) -> Result<Self> {
        Self::new(vec![Party { settings, outcomes }; parties])
    }

    pub fn parties(&self) -> &[Party] {
        &self.parties
    }

    pub fn n_parties(&self) -> usize {
        self.parties.len()
    }

    fn max_outcomes(&self) -> usize {
        self.parties.iter().map(|p| p.outcomes).max().unwrap_or(2)
    }
}

/// Product of projectors, one word per party. Words of different parties
/// commute; within a party the order is kept.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpSeq {
    zero: bool,
    words: Vec<Vec<(u32, u32)>>,
}

impl OpSeq {
    pub fn identity(parties: usize) -> Self {
        OpSeq { zero: false, words: vec![Vec::new(); parties] }
    }

    fn zero(parties: usize) -> Self {
        OpSeq { zero: true, words: vec![Vec::new(); parties] }
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn is_identity(&self) -> bool {
        !self.zero && self.words.iter().all(|w| w.is_empty())
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-party `(setting, outcome)` labels.
    pub fn words(&self) -> &[Vec<(u32, u32)>] {
        &self.words
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.words.iter().map(|w| w.len()).collect()
    }

    pub fn adjoint(&self) -> Self {
        let words = self.words.iter().map(|w| w.iter().rev().copied().collect()).collect();
        OpSeq { zero: self.zero, words }
    }

    /// `a^† b` reduced.
    pub fn adjoint_product(a: &OpSeq, b: &OpSeq) -> Self {
        if a.zero || b.zero {
            return OpSeq::zero(a.words.len());
        }
        let mut words = Vec::with_capacity(a.words.len());
        for (wa, wb) in a.words.iter().zip(&b.words) {
            match reduce_word(wa.iter().rev().chain(wb.iter()).copied()) {
                Some(w) => words.push(w),
                None => return OpSeq::zero(a.words.len()),
            }
        }
        OpSeq { zero: false, words }
    }

    /// Representative of the class `{S, S^†}`.
    fn key(&self) -> Self {
        let adj = self.adjoint();
        if adj < *self {
            adj
        } else {
            self.clone()
        }
    }
}

/// Idempotence collapses equal neighbours; orthogonal neighbours give `None`.
fn reduce_word(labels: impl Iterator<Item = (u32, u32)>) -> Option<Vec<(u32, u32)>> {
    let mut out: Vec<(u32, u32)> = Vec::new();
    for (s, o) in labels {
        match out.last() {
            Some(&(ts, to)) if ts == s => {
                if to != o {
                    return None;
                }
            }
            _ => out.push((s, o)),
        }
    }
    Some(out)
}

/// Reduces a raw product of `(party, setting, outcome)` labels.
pub fn canonicalize_sequence(raw: &[(usize, usize, usize)], scenario: &Scenario) -> Result<OpSeq> {
    let np = scenario.n_parties();
    let mut per_party: Vec<Vec<(u32, u32)>> = vec![Vec::new(); np];
    for &(p, s, o) in raw {
        let party = scenario
            .parties
            .get(p)
            .ok_or_else(|| Error::Scenario(format!("party {p} out of range")))?;
        if s >= party.settings || o >= party.outcomes {
            return Err(Error::Scenario(format!("label ({p}, {s}, {o}) out of range")));
        }
        per_party[p].push((s as u32, o as u32));
    }
    let mut words = Vec::with_capacity(np);
    for w in per_party {
        match reduce_word(w.into_iter()) {
            Some(w) => words.push(w),
            None => return Ok(OpSeq::zero(np)),
        }
    }
    Ok(OpSeq { zero: false, words })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelSpec {
    /// All sequences of total length at most k.
    Total(usize),
    /// All sequences up to length `total` plus the listed per-party degree
    /// tuples; `1+AB` is `{ total: 1, tuples: [[1, 1]] }`.
    Tuples { total: usize, tuples: Vec<Vec<usize>> },
}

impl std::fmt::Display for LevelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LevelSpec::Total(k) => write!(f, "{k}"),
            LevelSpec::Tuples { total, tuples } => {
                let mut parts = Vec::new();
                if *total > 0 {
                    parts.push(total.to_string());
                }
                for t in tuples {
                    let word: String = t
                        .iter()
                        .enumerate()
                        .flat_map(|(p, &k)| std::iter::repeat_n((b'A' + p as u8) as char, k))
                        .collect();
                    parts.push(word);
                }
                write!(f, "{}", parts.join("+"))
            }
        }
    }
}

impl LevelSpec {
    /// Accepts `q2`, `2`, `1+AB`, `1+AB+AC+BC`, `AB+AAB`, ...
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        let bad = || Error::InvalidArgument(format!("cannot parse level `{text}`"));
        let lower = t.to_ascii_lowercase();
        if let Some(k) = lower.strip_prefix('q') {
            return k.parse().map(LevelSpec::Total).map_err(|_| bad());
        }
        if let Ok(k) = t.parse::<usize>() {
            return Ok(LevelSpec::Total(k));
        }
        let mut total = 0usize;
        let mut tuples = Vec::new();
        for part in t.split('+') {
            let part = part.trim();
            if part.is_empty() {
                return Err(bad());
            }
            if let Ok(k) = part.parse::<usize>() {
                total = total.max(k);
                continue;
            }
            let mut tuple = Vec::new();
            for ch in part.chars() {
                if !ch.is_ascii_uppercase() {
                    return Err(bad());
                }
                let p = (ch as u8 - b'A') as usize;
                if tuple.len() <= p {
                    tuple.resize(p + 1, 0);
                }
                tuple[p] += 1;
            }
            tuples.push(tuple);
        }
        if tuples.is_empty() {
            return Ok(LevelSpec::Total(total));
        }
        Ok(LevelSpec::Tuples { total, tuples })
    }

    /// Degree tuples for `parties` parties in enumeration order: total length
    /// first, then the tuple in descending lexicographic order.
    pub fn tuples(&self, parties: usize) -> Result<Vec<Vec<usize>>> {
        let mut set: Vec<Vec<usize>> = vec![vec![0; parties]];
        let add_total = |k: usize, set: &mut Vec<Vec<usize>>| {
            for len in 1..=k {
                compositions(len, parties, &mut Vec::new(), set);
            }
        };
        match self {
            LevelSpec::Total(k) => add_total(*k, &mut set),
            LevelSpec::Tuples { total, tuples } => {
                add_total(*total, &mut set);
                for t in tuples {
                    if t.len() > parties && t[parties..].iter().any(|&d| d > 0) {
                        return Err(Error::Scenario(format!("level refers to party {}", t.len() - 1)));
                    }
                    let mut full = t.clone();
                    full.resize(parties, 0);
                    set.push(full);
                }
            }
        }
        set.sort_by(|a, b| {
            let (la, lb): (usize, usize) = (a.iter().sum(), b.iter().sum());
            la.cmp(&lb).then_with(|| b.cmp(a))
        });
        set.dedup();
        Ok(set)
    }

    pub fn is_q1(&self) -> bool {
        matches!(self, LevelSpec::Total(1))
    }
}

fn compositions(len: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if prefix.len() + 1 == parts {
        let used: usize = prefix.iter().sum();
        let mut t = prefix.clone();
        t.push(len - used);
        out.push(t);
        return;
    }
    let used: usize = prefix.iter().sum();
    for d in 0..=len - used {
        prefix.push(d);
        compositions(len, parts, prefix, out);
        prefix.pop();
    }
}

/// Reduced words of length `len` for one party, lexicographic.
fn party_words(party: &Party, len: usize) -> Vec<Vec<(u32, u32)>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::new();
        for w in &out {
            for s in 0..party.settings as u32 {
                if w.last().is_some_and(|&(ls, _)| ls == s) {
                    continue;
                }
                for o in 0..party.outcomes as u32 - 1 {
                    let mut v: Vec<(u32, u32)> = w.clone();
                    v.push((s, o));
                    next.push(v);
                }
            }
        }
        out = next;
    }
    out
}

/// All canonical nonzero sequences of the level, identity first.
pub fn enumerate_level(scenario: &Scenario, level: &LevelSpec) -> Result<Vec<OpSeq>> {
    let np = scenario.n_parties();
    let mut seqs = Vec::new();
    for tuple in level.tuples(np)? {
        let per: Vec<Vec<Vec<(u32, u32)>>> =
            tuple.iter().zip(&scenario.parties).map(|(&d, p)| party_words(p, d)).collect();
        let mut acc: Vec<Vec<Vec<(u32, u32)>>> = vec![Vec::new()];
        for words in per {
            let mut next = Vec::with_capacity(acc.len() * words.len());
            for a in &acc {
                for w in &words {
                    let mut v = a.clone();
                    v.push(w.clone());
                    next.push(v);
                }
            }
            acc = next;
        }
        seqs.extend(acc.into_iter().map(|words| OpSeq { zero: false, words }));
    }
    Ok(seqs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Entry {
    One,
    Zero,
    Moment(usize),
}

/// Probability of one outcome per listed party; `None` marginalizes a party.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProbSymbol {
    /// `(setting, outcome)` per party.
    pub parts: Vec<Option<(usize, usize)>>,
}

impl ProbSymbol {
    pub fn joint(outcomes: &[usize], settings: &[usize]) -> Self {
        ProbSymbol { parts: outcomes.iter().zip(settings).map(|(&a, &x)| Some((x, a))).collect() }
    }

    pub fn marginal(parties: usize, party: usize, outcome: usize, setting: usize) -> Self {
        let mut parts = vec![None; parties];
        parts[party] = Some((setting, outcome));
        ProbSymbol { parts }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearFunctional {
    pub terms: Vec<(ProbSymbol, f64)>,
    pub constant: f64,
}

impl LinearFunctional {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        LinearFunctional { terms: Vec::new(), constant: c }
    }

    pub fn add(&mut self, sym: ProbSymbol, coeff: f64) -> &mut Self {
        self.terms.push((sym, coeff));
        self
    }

    pub fn add_prob(&mut self, outcomes: &[usize], settings: &[usize], coeff: f64) -> &mut Self {
        self.add(ProbSymbol::joint(outcomes, settings), coeff)
    }

    /// Adds `coeff * C(x, y)` for binary outcomes:
    /// `P(0,0) + P(1,1) - P(0,1) - P(1,0)`.
    pub fn add_correlator(&mut self, x: usize, y: usize, coeff: f64) -> &mut Self {
        for a in 0..2 {
            for b in 0..2 {
                let s = if a == b { 1.0 } else { -1.0 };
                self.add_prob(&[a, b], &[x, y], s * coeff);
            }
        }
        self
    }

    pub fn scaled(&self, k: f64) -> Self {
        LinearFunctional {
            terms: self.terms.iter().map(|(s, c)| (s.clone(), c * k)).collect(),
            constant: self.constant * k,
        }
    }

    pub fn plus(&self, other: &LinearFunctional) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        LinearFunctional { terms, constant: self.constant + other.constant }
    }

    /// Value on a moment vector.
    pub fn evaluate(&self, ms: &MomentStructure, y: &[f64]) -> Result<f64> {
        let e = ms.functional_expr(self)?;
        Ok(e.evaluate(y))
    }

    /// Value on an explicit probability table.
    pub fn evaluate_table(&self, t: &ProbTable) -> Result<f64> {
        let mut v = self.constant;
        for (sym, c) in &self.terms {
            v += c * t.symbol(sym)?;
        }
        Ok(v)
    }
}

/// `constant + sum coeff * y_k`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffineExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl AffineExpr {
    pub fn evaluate(&self, y: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(k, c)| c * y[k]).sum::<f64>()
    }

    fn merge(mut raw: Vec<(usize, f64)>, constant: f64) -> Self {
        raw.sort_by_key(|t| t.0);
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for (k, c) in raw {
            match terms.last_mut() {
                Some(last) if last.0 == k => last.1 += c,
                _ => terms.push((k, c)),
            }
        }
        terms.retain(|t| t.1 != 0.0);
        AffineExpr { constant, terms }
    }
}

#[derive(Clone, Debug)]
pub struct MomentStructure {
    scenario: Scenario,
    level: LevelSpec,
    sequences: Vec<OpSeq>,
    /// Row-major `n x n`.
    entries: Vec<Entry>,
    moments: Vec<OpSeq>,
    cells: Vec<Vec<(usize, usize)>>,
    index: HashMap<OpSeq, usize>,
    a: Vec<SparseConstraint>,
}

pub fn build_moment_structure(scenario: &Scenario, level: &LevelSpec) -> Result<MomentStructure> {
    let sequences = enumerate_level(scenario, level)?;
    let n = sequences.len();
    let mut entries = vec![Entry::Zero; n * n];
    let mut moments = Vec::new();
    let mut cells: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut index = HashMap::new();
    for j in 0..n {
        for i in 0..=j {
            let w = OpSeq::adjoint_product(&sequences[i], &sequences[j]);
            let e = if w.is_zero() {
                Entry::Zero
            } else if w.is_identity() {
                Entry::One
            } else {
                let key = w.key();
                let next = moments.len();
                let k = *index.entry(key.clone()).or_insert(next);
                if k == next {
                    moments.push(key);
                    cells.push(Vec::new());
                }
                cells[k].push((i, j));
                Entry::Moment(k)
            };
            entries[i * n + j] = e;
            entries[j * n + i] = e;
        }
    }
    let a = cells
        .iter()
        .map(|c| SparseConstraint::new(n, c.iter().map(|&(i, j)| (i, j, -1.0)).collect()))
        .collect::<Result<_>>()?;
    Ok(MomentStructure { scenario: scenario.clone(), level: level.clone(), sequences, entries, moments, cells, index, a })
}

impl MomentStructure {
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn level(&self) -> &LevelSpec {
        &self.level
    }

    pub fn sequences(&self) -> &[OpSeq] {
        &self.sequences
    }

    pub fn n(&self) -> usize {
        self.sequences.len()
    }

    pub fn m(&self) -> usize {
        self.moments.len()
    }

    /// Distinct nonzero entry classes of Γ: the moments plus the unit entry.
    pub fn entry_classes(&self) -> usize {
        self.moments.len() + 1
    }

    pub fn entry(&self, i: usize, j: usize) -> Entry {
        self.entries[i * self.n() + j]
    }

    pub fn moment(&self, k: usize) -> &OpSeq {
        &self.moments[k]
    }

    /// Upper-triangle cells of moment `k`, column-major.
    pub fn cells(&self, k: usize) -> &[(usize, usize)] {
        &self.cells[k]
    }

    pub fn constraints(&self) -> &[SparseConstraint] {
        &self.a
    }

    /// `C`: one at the identity cell.
    pub fn c_matrix(&self) -> SymMatrix {
        let mut c = SymMatrix::zeros(self.n());
        c.set(0, 0, 1.0);
        c
    }

    /// `Γ(y) = C - sum y_i A_i`.
    pub fn gamma(&self, y: &[f64]) -> SymMatrix {
        let n = self.n();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] = match self.entry(i, j) {
                    Entry::One => 1.0,
                    Entry::Zero => 0.0,
                    Entry::Moment(k) => y[k],
                };
            }
        }
        SymMatrix::new(g).expect("square")
    }

    /// Moment vector read back from a Γ-shaped matrix (first cell of each moment).
    pub fn read_moments(&self, g: &SymMatrix) -> Vec<f64> {
        self.cells.iter().map(|c| g.get(c[0].0, c[0].1)).collect()
    }

    pub fn lookup(&self, seq: &OpSeq) -> Result<Entry> {
        if seq.is_zero() {
            return Ok(Entry::Zero);
        }
        if seq.is_identity() {
            return Ok(Entry::One);
        }
        self.index
            .get(&seq.key())
            .map(|&k| Entry::Moment(k))
            .ok_or_else(|| Error::Scenario("product is not a moment of this relaxation".into()))
    }

    /// Probability as an affine function of the moments. Last outcomes
    /// expand as `I - sum` of the reduced projectors.
    pub fn prob_index(&self, sym: &ProbSymbol) -> Result<AffineExpr> {
        let np = self.scenario.n_parties();
        if sym.parts.len() != np {
            return Err(Error::Scenario(format!("symbol has {} parties, scenario {np}", sym.parts.len())));
        }
        // per party: list of (optional projector, sign)
        let mut factors: Vec<Vec<(Option<(u32, u32)>, f64)>> = Vec::with_capacity(np);
        for (p, part) in sym.parts.iter().enumerate() {
            let party = &self.scenario.parties[p];
            factors.push(match *part {
                None => vec![(None, 1.0)],
                Some((x, a)) => {
                    if x >= party.settings || a >= party.outcomes {
                        return Err(Error::Scenario(format!("party {p}: setting {x}, outcome {a} out of range")));
                    }
                    if a + 1 < party.outcomes {
                        vec![(Some((x as u32, a as u32)), 1.0)]
                    } else {
                        let mut v = vec![(None, 1.0)];
                        v.extend((0..party.outcomes - 1).map(|o| (Some((x as u32, o as u32)), -1.0)));
                        v
                    }
                }
            });
        }
        let mut constant = 0.0;
        let mut raw = Vec::new();
        let mut idx = vec![0usize; np];
        loop {
            let mut sign = 1.0;
            let mut words = Vec::with_capacity(np);
            for p in 0..np {
                let (op, s) = factors[p][idx[p]];
                sign *= s;
                words.push(op.into_iter().collect());
            }
            match self.lookup(&OpSeq { zero: false, words })? {
                Entry::One => constant += sign,
                Entry::Zero => {}
                Entry::Moment(k) => raw.push((k, sign)),
            }
            // odometer
            let mut p = np;
            loop {
                if p == 0 {
                    return Ok(AffineExpr::merge(raw, constant));
                }
                p -= 1;
                idx[p] += 1;
                if idx[p] < factors[p].len() {
                    break;
                }
                idx[p] = 0;
            }
        }
    }

    pub fn functional_expr(&self, f: &LinearFunctional) -> Result<AffineExpr> {
        let mut raw = Vec::new();
        let mut constant = f.constant;
        for (sym, c) in &f.terms {
            let e = self.prob_index(sym)?;
            constant += c * e.constant;
            raw.extend(e.terms.iter().map(|&(k, v)| (k, c * v)));
        }
        Ok(AffineExpr::merge(raw, constant))
    }
}

/// `M_F` with `Tr(Γ M_F) = f - constant`, `v_i = Tr(A_i M_F)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualFunctional {
    pub m_f: SymMatrix,
    pub v: Vec<f64>,
    pub constant: f64,
}

pub fn functional_to_dual(f: &LinearFunctional, ms: &MomentStructure) -> Result<DualFunctional> {
    let e = ms.functional_expr(f)?;
    let n = ms.n();
    let mut m = DMatrix::zeros(n, n);
    // identity contributions of the probability expansion live at (1,1)
    m[(0, 0)] = e.constant - f.constant;
    let mut v = vec![0.0; ms.m()];
    for &(k, c) in &e.terms {
        let (i, j) = ms.cells[k][0];
        if i == j {
            m[(i, i)] += c;
        } else {
            m[(i, j)] += c / 2.0;
            m[(j, i)] += c / 2.0;
        }
        v[k] = -c;
    }
    Ok(DualFunctional { m_f: SymMatrix::new(m)?, v, constant: f.constant })
}

/// Full joint distribution for every setting tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbTable {
    scenario: Scenario,
    data: Vec<f64>,
}

impl ProbTable {
    fn offset(&self, outcomes: &[usize], settings: &[usize]) -> usize {
        let mut k = 0;
        for (p, party) in self.scenario.parties.iter().enumerate() {
            k = k * party.settings + settings[p];
        }
        for (p, party) in self.scenario.parties.iter().enumerate() {
            k = k * party.outcomes + outcomes[p];
        }
        k
    }

    pub fn get(&self, outcomes: &[usize], settings: &[usize]) -> f64 {
        self.data[self.offset(outcomes, settings)]
    }

    /// Probability of a (possibly marginal) symbol, summing the joint table.
    pub fn symbol(&self, sym: &ProbSymbol) -> Result<f64> {
        let parties = &self.scenario.parties;
        if sym.parts.len() != parties.len() {
            return Err(Error::Scenario("symbol party count".into()));
        }
        let settings: Vec<usize> = sym.parts.iter().map(|p| p.map_or(0, |(x, _)| x)).collect();
        let mut outcomes = vec![0usize; parties.len()];
        let mut total = 0.0;
        loop {
            let matches = sym.parts.iter().zip(&outcomes).all(|(p, &a)| p.is_none_or(|(_, o)| o == a));
            if matches {
                total += self.get(&outcomes, &settings);
            }
            let mut p = parties.len();
            loop {
                if p == 0 {
                    return Ok(total);
                }
                p -= 1;
                outcomes[p] += 1;
                if outcomes[p] < parties[p].outcomes {
                    break;
                }
                outcomes[p] = 0;
            }
        }
    }

    /// Visits every `(outcomes, settings)` pair in table order.
    pub fn for_each(&self, mut f: impl FnMut(&[usize], &[usize], f64)) {
        for_each_tuple(&self.scenario, |o, s| f(o, s, self.get(o, s)));
    }
}

fn radix_iter(radices: &[usize], mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; radices.len()];
    loop {
        f(&idx);
        let mut p = radices.len();
        loop {
            if p == 0 {
                return;
            }
            p -= 1;
            idx[p] += 1;
            if idx[p] < radices[p] {
                break;
            }
            idx[p] = 0;
        }
    }
}

fn for_each_tuple(sc: &Scenario, mut f: impl FnMut(&[usize], &[usize])) {
    let srad: Vec<usize> = sc.parties.iter().map(|p| p.settings).collect();
    let orad: Vec<usize> = sc.parties.iter().map(|p| p.outcomes).collect();
    radix_iter(&srad, |s| radix_iter(&orad, |o| f(o, s)));
}

pub fn recover_probabilities(y: &[f64], ms: &MomentStructure) -> Result<ProbTable> {
    if y.len() != ms.m() {
        return Err(Error::Dimension(format!("expected {} moments, got {}", ms.m(), y.len())));
    }
    let mut data = Vec::new();
    let mut err = None;
    for_each_tuple(&ms.scenario, |o, s| match ms.prob_index(&ProbSymbol::joint(o, s)) {
        Ok(e) => data.push(e.evaluate(y)),
        Err(e) => {
            err.get_or_insert(e);
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(ProbTable { scenario: ms.scenario.clone(), data })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Ge,
    Le,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SideConstraint {
    pub f: LinearFunctional,
    pub rel: Relation,
    pub bound: f64,
}

impl SideConstraint {
    pub fn new(f: LinearFunctional, rel: Relation, bound: f64) -> Self {
        SideConstraint { f, rel, bound }
    }
}

/// Dual-form problem maximizing `objective` over the relaxation. Each
/// inequality adds one linear slack; equalities add two.
pub fn assemble_problem(
    ms: &MomentStructure,
    objective: &LinearFunctional,
    side: &[SideConstraint],
) -> Result<MixedProblem> {
    let obj = functional_to_dual(objective, ms)?;
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut push = |d: &DualFunctional, rel: Relation, bound: f64| {
        // f(y) = M11 + const - v.y
        let base = d.m_f.get(0, 0) + d.constant;
        if matches!(rel, Relation::Ge | Relation::Eq) {
            rows.push((d.v.clone(), base - bound));
        }
        if matches!(rel, Relation::Le | Relation::Eq) {
            rows.push((d.v.iter().map(|v| -v).collect(), bound - base));
        }
    };
    for s in side {
        push(&functional_to_dual(&s.f, ms)?, s.rel, s.bound);
    }
    if ms.level.is_q1() {
        let mut syms = Vec::new();
        for_each_tuple(&ms.scenario, |o, s| syms.push(ProbSymbol::joint(o, s)));
        for sym in syms {
            let mut f = LinearFunctional::new();
            f.add(sym, 1.0);
            push(&functional_to_dual(&f, ms)?, Relation::Ge, 0.0);
        }
    }
    let n_lin = rows.len();
    let constraints = (0..ms.m())
        .map(|i| Constraint {
            sdp: ms.cells[i].iter().map(|&(r, c)| (r, c, -1.0)).collect(),
            lin: rows.iter().enumerate().filter(|(_, r)| r.0[i] != 0.0).map(|(k, r)| (k, r.0[i])).collect(),
            rhs: -obj.v[i],
        })
        .collect();
    build_problem(
        Blocks { n_lin, n: ms.n() },
        constraints,
        Objective {
            c_sdp: ms.c_matrix(),
            c_lin: rows.iter().map(|r| r.1).collect(),
            sense: Sense::MaximizeDual,
            offset: obj.m_f.get(0, 0) + obj.constant,
        },
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct WarmStart {
    pub y: Vec<f64>,
    pub z: SymMatrix,
}

/// Rank-1 projectors of a random real orthonormal basis; the last outcome
/// takes the remaining subspace when there are fewer outcomes than `d`.
fn random_measurement(rng: &mut ChaCha8Rng, d: usize, outcomes: usize) -> Vec<DMatrix<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let mut projs: Vec<DMatrix<f64>> = Vec::with_capacity(outcomes);
    for o in 0..outcomes {
        let range = if o + 1 < outcomes { o..o + 1 } else { o..d };
        let mut p = DMatrix::zeros(d, d);
        for b in &basis[range] {
            let v = nalgebra::DVector::from_column_slice(b);
            p += &v * v.transpose();
        }
        projs.push(p);
    }
    projs
}

/// Moments of one random realization on the `d`-dimensional maximally
/// entangled (GHZ for more parties) state: `<O> = (1/d) sum_ij prod_p (O_p)_ij`.
fn trial_moments(ms: &MomentStructure, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = ms.scenario.max_outcomes();
    let meas: Vec<Vec<Vec<DMatrix<f64>>>> = ms
        .scenario
        .parties
        .iter()
        .map(|p| (0..p.settings).map(|_| random_measurement(rng, d, p.outcomes)).collect())
        .collect();
    let mut cache: HashMap<(usize, Vec<(u32, u32)>), DMatrix<f64>> = HashMap::new();
    let mut word_matrix = |p: usize, w: &[(u32, u32)]| -> DMatrix<f64> {
        cache
            .entry((p, w.to_vec()))
            .or_insert_with(|| {
                let mut m = DMatrix::identity(d, d);
                for &(s, o) in w {
                    m *= &meas[p][s as usize][o as usize];
                }
                m
            })
            .clone()
    };
    ms.moments
        .iter()
        .map(|mom| {
            let mats: Vec<DMatrix<f64>> = mom.words.iter().enumerate().map(|(p, w)| word_matrix(p, w)).collect();
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s += mats.iter().map(|m| m[(i, j)]).product::<f64>();
                }
            }
            s / d as f64
        })
        .collect()
}

/// Average moment vector of `count` random quantum realizations (default
/// `25 n`); each trial uses its own stream of the seeded generator.
pub fn warm_start_certificate(
    ms: &MomentStructure,
    count: Option<usize>,
    seed: u64,
    rank_shift: f64,
) -> Result<WarmStart> {
    if ms.scenario.n_parties() < 2 {
        return Err(Error::Scenario("warm start needs at least two parties".into()));
    }
    let count = count.unwrap_or(25 * ms.n()).max(1);
    let trials: Vec<Vec<f64>> = (0..count)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            trial_moments(ms, &mut rng)
        })
        .collect();
    let mut y = vec![0.0; ms.m()];
    for t in &trials {
        for (a, b) in y.iter_mut().zip(t) {
            *a += b;
        }
    }
    for v in &mut y {
        *v /= count as f64;
    }
    let mut z = ms.gamma(&y);
    z.add_identity(rank_shift);
    Ok(WarmStart { y, z })
}

/// Full starting iterate for a problem assembled from `ms`.
pub fn warm_start_iterate(p: &MixedProblem, ws: &WarmStart) -> Iterate {
    let xi = 10f64.max((p.n() as f64).sqrt());
    let (_, ay_lin) = p.adjoint(&ws.y);
    let z_lin = p
        .c_lin()
        .iter()
        .zip(&ay_lin)
        .map(|(c, a)| {
            let v = c - a;
            if v > 0.0 {
                v
            } else {
                1.0
            }
        })
        .collect();
    Iterate {
        x: SymMatrix::identity(p.n()).scale(xi),
        x_lin: vec![xi; p.n_lin()],
        y: ws.y.clone(),
        z: ws.z.clone(),
        z_lin,
    }
}
