//! Dense reference constructions shared by the solver oracle tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use pmsdp::ipm::{sigma, step_lengths, Direction, IterationHook, ScalingState};
use pmsdp::model::residual_norms;
use pmsdp::{build_problem, Blocks, Constraint, Iterate, MixedProblem, Objective, Sense, SolverParams, SymMatrix};

pub fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    SymMatrix::new(&a * a.transpose() + DMatrix::identity(n, n) * 0.5).unwrap()
}

/// Binary constraints over disjoint random groups of cells, plus a few
/// linear columns.
pub fn random_binary_problem(rng: &mut ChaCha8Rng, n: usize, n_lin: usize) -> MixedProblem {
    let m = rng.random_range(1..=n * (n + 1) / 2);
    let mut groups: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); m];
    for j in 0..n {
        for i in 0..=j {
            let g = rng.random_range(0..m + 1);
            if g < m {
                groups[g].push((i, j, -1.0));
            }
        }
    }
    let cons: Vec<Constraint> = groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|sdp| Constraint {
            sdp,
            lin: (0..n_lin).map(|k| (k, rng.random_range(-1.0..1.0))).collect(),
            rhs: rng.random_range(-1.0..1.0),
        })
        .collect();
    build_problem(
        Blocks { n_lin, n },
        cons,
        Objective { c_sdp: random_pd(rng, n), c_lin: vec![1.0; n_lin], sense: Sense::MaximizeDual, offset: 0.0 },
    )
    .unwrap()
}

pub fn random_iterate(rng: &mut ChaCha8Rng, p: &MixedProblem) -> Iterate {
    Iterate {
        x: random_pd(rng, p.n()),
        x_lin: (0..p.n_lin()).map(|_| rng.random_range(0.1..2.0)).collect(),
        y: (0..p.m()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        z: random_pd(rng, p.n()),
        z_lin: (0..p.n_lin()).map(|_| rng.random_range(0.1..2.0)).collect(),
    }
}

pub fn dense_vec_a(p: &MixedProblem) -> DMatrix<f64> {
    let n = p.n();
    let mut a = DMatrix::zeros(n * n, p.m());
    for (i, c) in p.a_sdp().iter().enumerate() {
        let d = c.to_dense(n);
        a.column_mut(i).copy_from(&DVector::from_column_slice(d.as_slice()));
    }
    a
}

/// `A^T (W kron W) A` plus the linear part, formed densely.
pub fn dense_schur(p: &MixedProblem, sc: &ScalingState) -> DMatrix<f64> {
    let a = dense_vec_a(p);
    let w = sc.w.as_matrix();
    let mut b = a.transpose() * w.kronecker(w) * &a;
    for i in 0..p.m() {
        for j in 0..p.m() {
            b[(i, j)] += (0..p.n_lin()).map(|k| p.a_lin_row(i)[k] * sc.w_lin[k] * p.a_lin_row(j)[k]).sum::<f64>();
        }
    }
    b
}

pub fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}

/// Symmetrized Kronecker product `A (x)_S B`, acting as `M -> (B M A^T + A M B^T) / 2`.
pub fn sym_kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    (a.kronecker(b) + b.kronecker(a)) * 0.5
}

pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Checks both directions against the Newton system built densely with
/// `E = P (x)_S P^-T Z`, `F = P X (x)_S P^-T` and `P = G^-1`.
pub struct NewtonCheck {
    pub params: SolverParams,
    pub worst: f64,
    pub checked: usize,
}

impl NewtonCheck {
    pub fn residual(&self, p: &MixedProblem, it: &Iterate, sc: &ScalingState, dir: &Direction, target: &DMatrix<f64>, target_lin: &[f64]) -> f64 {
        let res = residual_norms(p, it).unwrap();
        let mut worst: f64 = 0.0;
        // primal rows
        let a = p.apply(&dir.dx, &dir.dx_lin);
        for (l, r) in a.iter().zip(&res.r_p) {
            worst = worst.max((l - r).abs() / (1.0 + r.abs()));
        }
        // dual equation
        let (ady, ady_lin) = p.adjoint(&dir.dy);
        let d = ady.as_matrix() + dir.dz.as_matrix() - res.r_d.as_matrix();
        worst = worst.max(d.norm() / (1.0 + res.r_d.as_matrix().norm()));
        for k in 0..p.n_lin() {
            worst = worst.max((ady_lin[k] + dir.dz_lin[k] - res.r_d_lin[k]).abs());
        }
        // complementarity
        let pm = &sc.g_inv;
        let p_inv_t = sc.g.transpose();
        let x = it.x.as_matrix();
        let z = it.z.as_matrix();
        let e = sym_kron(pm, &(&p_inv_t * z));
        let f = sym_kron(&(pm * x), &p_inv_t);
        let lhs = e * vec_of(dir.dx.as_matrix()) + f * vec_of(dir.dz.as_matrix());
        let rhs = vec_of(target);
        worst = worst.max((lhs - &rhs).norm() / (1.0 + rhs.norm()));
        for k in 0..p.n_lin() {
            let l = it.z_lin[k] * dir.dx_lin[k] + it.x_lin[k] * dir.dz_lin[k];
            worst = worst.max((l - target_lin[k]).abs() / (1.0 + target_lin[k].abs()));
        }
        worst
    }
}

pub fn h_p(pm: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let inner = pm * m * pm.clone().try_inverse().unwrap();
    (&inner + inner.transpose()) * 0.5
}

impl IterationHook for NewtonCheck {
    fn on_iteration(&mut self, p: &MixedProblem, it: &Iterate, sc: &ScalingState, pred: &Direction, corr: &Direction) {
        let n = p.n();
        let x = it.x.as_matrix();
        let z = it.z.as_matrix();
        let hxz = h_p(&sc.g_inv, &(x * z));

        let pred_lin: Vec<f64> = (0..p.n_lin()).map(|k| -it.x_lin[k] * it.z_lin[k]).collect();
        let r = self.residual(p, it, sc, pred, &(-&hxz), &pred_lin);
        self.worst = self.worst.max(r);

        let steps = step_lengths(it, pred, self.params.tau).unwrap();
        let sm = sigma(it, pred, steps, self.params.expon) * it.mu();
        let second = h_p(&sc.g_inv, &(pred.dx.as_matrix() * pred.dz.as_matrix()));
        let target = DMatrix::identity(n, n) * sm - &hxz - second;
        let corr_lin: Vec<f64> = (0..p.n_lin())
            .map(|k| sm - it.x_lin[k] * it.z_lin[k] - pred.dx_lin[k] * pred.dz_lin[k])
            .collect();
        let r = self.residual(p, it, sc, corr, &target, &corr_lin);
        self.worst = self.worst.max(r);
        self.checked += 1;
    }
}
