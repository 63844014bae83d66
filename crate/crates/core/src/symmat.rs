//! Dense symmetric kernel: vectorization, Frobenius products, factorizations
//! and the fraction-to-boundary step.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Real symmetric matrix stored densely.
///
/// Construction averages the input with its transpose, so `get(i, j)` and
/// `get(j, i)` are bit-identical.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::Dimension("matrix order must be at least 1".into()));
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrizes a square matrix the caller knows to be non-empty.
    pub(crate) fn symmetrized(mut m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        for j in 0..n {
            for i in 0..j {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix { m }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("rows must all have length n".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "matrix order must be at least 1");
        SymMatrix { m: DMatrix::zeros(n, n) }
    }

    pub fn identity(n: usize) -> Self {
        assert!(n >= 1, "matrix order must be at least 1");
        SymMatrix { m: DMatrix::identity(n, n) }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut s = Self::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            s.m[(i, i)] = *v;
        }
        s
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.m[(i, j)] = v;
        self.m[(j, i)] = v;
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    /// Column-major (equivalently row-major) entries.
    pub fn as_slice(&self) -> &[f64] {
        self.m.as_slice()
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        SymMatrix { m: &self.m * s }
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &SymMatrix) -> Self {
        SymMatrix { m: &self.m + &other.m * s }
    }

    pub fn add_identity(&mut self, s: f64) {
        for i in 0..self.n() {
            self.m[(i, i)] += s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Column-wise vectorization.
pub fn vec_mat(m: &SymMatrix) -> Vec<f64> {
    m.as_slice().to_vec()
}

pub fn mat_vec(v: &[f64], n: usize) -> Result<SymMatrix> {
    if n == 0 || v.len() != n * n {
        return Err(Error::Dimension(format!(
            "vector of length {} cannot be reshaped to order {}",
            v.len(),
            n
        )));
    }
    SymMatrix::new(DMatrix::from_column_slice(n, n, v))
}

pub fn frobenius(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    if a.n() != b.n() {
        return Err(Error::Dimension(format!("orders {} and {}", a.n(), b.n())));
    }
    Ok(dot(a.as_slice(), b.as_slice()))
}

pub fn frobenius_norm(a: &SymMatrix) -> f64 {
    dot(a.as_slice(), a.as_slice()).sqrt()
}

/// Plain left-to-right dot product; the fixed order keeps results reproducible.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// Four-lane dot product used in the hot loops of the factorization.
#[inline]
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..n {
        s += a[k] * b[k];
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorKind {
    Cholesky,
    Eigen,
    Svd,
}

#[derive(Clone, Debug)]
pub enum FactorResult {
    /// Lower-triangular `l` with `l * l^T` equal to the input.
    Cholesky { l: DMatrix<f64> },
    /// Orthogonal `q` with eigenvalues sorted ascending.
    Eigen { q: DMatrix<f64>, values: Vec<f64> },
    /// `u * diag(d) * v^T`, with `d` nonnegative and sorted descending.
    Svd {
        u: DMatrix<f64>,
        d: Vec<f64>,
        v: DMatrix<f64>,
    },
}

impl FactorResult {
    pub fn kind(&self) -> FactorKind {
        match self {
            FactorResult::Cholesky { .. } => FactorKind::Cholesky,
            FactorResult::Eigen { .. } => FactorKind::Eigen,
            FactorResult::Svd { .. } => FactorKind::Svd,
        }
    }

    /// Multiplies the factors back together.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        match self {
            FactorResult::Cholesky { l } => l * l.transpose(),
            FactorResult::Eigen { q, values } => {
                let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values));
                q * d * q.transpose()
            }
            FactorResult::Svd { u, d, v } => {
                let dd = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d));
                u * dd * v.transpose()
            }
        }
    }

    pub fn lower(&self) -> Option<&DMatrix<f64>> {
        match self {
            FactorResult::Cholesky { l } => Some(l),
            _ => None,
        }
    }

    pub fn eigenvalues(&self) -> Option<&[f64]> {
        match self {
            FactorResult::Eigen { values, .. } => Some(values),
            _ => None,
        }
    }
}

const PANEL: usize = 64;

/// Unblocked factorization of the diagonal block `k0..k1` in place.
fn factor_diagonal_block(w: &mut DMatrix<f64>, k0: usize, k1: usize) -> Result<()> {
    for j in k0..k1 {
        let mut d = w[(j, j)];
        for k in k0..j {
            d -= w[(j, k)] * w[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let d = d.sqrt();
        w[(j, j)] = d;
        for i in j + 1..k1 {
            let mut s = w[(i, j)];
            for k in k0..j {
                s -= w[(i, k)] * w[(j, k)];
            }
            w[(i, j)] = s / d;
        }
    }
    Ok(())
}

/// Row-major lower Cholesky factor with triangular solves.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    n: usize,
    l: Vec<f64>,
}

impl CholeskyFactor {
    /// Factors a symmetric matrix given as a dense `n*n` slice (row- or
    /// column-major; only the lower triangle is read).
    pub fn new(a: &[f64], n: usize) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::Dimension(format!("expected {} entries, got {}", n * n, a.len())));
        }
        // column-major working copy; the strict upper triangle is never read
        let mut w = DMatrix::from_row_slice(n, n, a);
        for k0 in (0..n).step_by(PANEL) {
            let k1 = (k0 + PANEL).min(n);
            factor_diagonal_block(&mut w, k0, k1)?;
            if k1 == n {
                break;
            }
            // panel: A21 <- A21 L11^-T
            for c in k0..k1 {
                for k in k0..c {
                    let f = w[(c, k)];
                    let (left, mut right) = w.columns_range_pair_mut(k, c);
                    right.rows_mut(k1, n - k1).axpy(-f, &left.rows(k1, n - k1), 1.0);
                }
                let d = w[(c, c)];
                w.view_mut((k1, c), (n - k1, 1)).unscale_mut(d);
            }
            // trailing lower triangle: A22 -= A21 A21^T, one column block at a time
            let panel = w.view((k1, k0), (n - k1, k1 - k0)).clone_owned();
            for j0 in (k1..n).step_by(PANEL) {
                let j1 = (j0 + PANEL).min(n);
                let rows = panel.rows(j0 - k1, n - j0);
                let cols = panel.rows(j0 - k1, j1 - j0);
                let mut target = w.view_mut((j0, j0), (n - j0, j1 - j0));
                target.gemm(-1.0, &rows, &cols.transpose(), 1.0);
            }
        }
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                l[i * n + j] = w[(i, j)];
            }
        }
        Ok(CholeskyFactor { n, l })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.l)
    }

    /// Solves `L L^T x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let s = x[i] - dot4(&self.l[i * n..i * n + i], &x[..i]);
            x[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }
}

pub fn cholesky(m: &SymMatrix) -> Result<FactorResult> {
    let f = CholeskyFactor::new(m.as_slice(), m.n())?;
    Ok(FactorResult::Cholesky { l: f.to_matrix() })
}

pub(crate) fn cholesky_lower(m: &SymMatrix) -> Result<DMatrix<f64>> {
    Ok(CholeskyFactor::new(m.as_slice(), m.n())?.to_matrix())
}

pub fn sym_eig(m: &SymMatrix) -> Result<FactorResult> {
    let n = m.n();
    let eig = m
        .as_matrix()
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let q = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(FactorResult::Eigen { q, values })
}

pub fn min_eigenvalue(m: &SymMatrix) -> Result<f64> {
    match sym_eig(m)? {
        FactorResult::Eigen { values, .. } => Ok(values[0]),
        _ => unreachable!(),
    }
}

/// SVD of `r_t * l`, where `r_t` is the transposed Cholesky factor of `Z`
/// and `l` the Cholesky factor of `X`.
pub fn svd_of_product(r_t: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<FactorResult> {
    if r_t.ncols() != l.nrows() || r_t.nrows() != r_t.ncols() || l.nrows() != l.ncols() {
        return Err(Error::Dimension(format!(
            "factors {}x{} and {}x{}",
            r_t.nrows(),
            r_t.ncols(),
            l.nrows(),
            l.ncols()
        )));
    }
    let n = l.nrows();
    let p = r_t * l;
    let svd = p
        .try_svd(true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("svd did not converge".into()))?;
    let (u0, vt0) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Numerical("svd factors missing".into())),
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let d = order.iter().map(|&k| svd.singular_values[k]).collect();
    let u = DMatrix::from_fn(n, n, |i, j| u0[(i, order[j])]);
    let v = DMatrix::from_fn(n, n, |i, j| vt0[(order[j], i)]);
    Ok(FactorResult::Svd { u, d, v })
}

/// Largest step `alpha` in (0, 1] keeping `m + alpha * dm` inside the cone,
/// shortened by the fraction-to-boundary factor `tau`.
pub fn max_boundary_step(m: &SymMatrix, dm: &SymMatrix, tau: f64) -> Result<f64> {
    if m.n() != dm.n() {
        return Err(Error::Dimension(format!("orders {} and {}", m.n(), dm.n())));
    }
    let l = cholesky_lower(m)?;
    let lam = min_eigenvalue(&scaled_congruence(&l, dm))?;
    if lam < 0.0 {
        Ok((tau / -lam).min(1.0))
    } else {
        Ok(1.0)
    }
}

/// `L^{-1} M L^{-T}` for lower-triangular `L`.
pub(crate) fn scaled_congruence(l: &DMatrix<f64>, m: &SymMatrix) -> SymMatrix {
    let t = l
        .solve_lower_triangular(m.as_matrix())
        .expect("cholesky factor has a nonzero diagonal");
    let s = l
        .solve_lower_triangular(&t.transpose())
        .expect("cholesky factor has a nonzero diagonal");
    SymMatrix::symmetrized(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
        SymMatrix::new(DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))).unwrap()
    }

    fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        SymMatrix::new(b.transpose() * &b + DMatrix::identity(n, n)).unwrap()
    }

    #[test]
    fn vec_is_column_major() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 4.0]);
        let s = SymMatrix::new(m).unwrap();
        assert_eq!(vec_mat(&s), vec![1.0, 3.0, 3.0, 4.0]);
        assert_eq!(vec_mat(&SymMatrix::identity(2)), vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn construction_symmetrizes_by_averaging() {
        let s = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 1.0])).unwrap();
        assert_eq!(s.get(0, 1), 3.0);
        assert_eq!(s.get(1, 0), 3.0);
    }

    #[test]
    fn vec_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 0..100 {
            let n = 1 + k % 8;
            let m = random_sym(&mut rng, n);
            assert_eq!(mat_vec(&vec_mat(&m), n).unwrap(), m);
        }
    }

    #[test]
    fn mat_vec_rejects_bad_length() {
        assert!(matches!(mat_vec(&[1.0, 2.0, 3.0], 2), Err(Error::Dimension(_))));
    }

    #[test]
    fn empty_matrix_rejected() {
        assert!(SymMatrix::new(DMatrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn frobenius_of_identities() {
        let i = SymMatrix::identity(4);
        assert_eq!(frobenius(&i, &i).unwrap(), 4.0);
        assert_eq!(frobenius_norm(&i), 2.0);
    }

    #[test]
    fn symmetric_times_antisymmetric_vanishes() {
        let a = [[1.0, 2.0, 3.0], [2.0, 5.0, 6.0], [3.0, 6.0, 9.0]];
        let b = [[0.0, 1.0, -2.0], [-1.0, 0.0, 4.0], [2.0, -4.0, 0.0]];
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += a[i][j] * b[i][j];
            }
        }
        assert_eq!(s, 0.0);
    }

    #[test]
    fn frobenius_matches_elementwise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_sym(&mut rng, 5);
        let b = random_sym(&mut rng, 5);
        let mut s = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                s += a.get(i, j) * b.get(i, j);
            }
        }
        assert!((frobenius(&a, &b).unwrap() - s).abs() < 1e-14);
        assert!(frobenius(&a, &SymMatrix::identity(4)).is_err());
    }

    #[test]
    fn cholesky_small_cases() {
        let l = cholesky(&SymMatrix::identity(3)).unwrap();
        assert_eq!(l.lower().unwrap(), &DMatrix::<f64>::identity(3, 3));
        let d = SymMatrix::from_diagonal(&[4.0, 9.0]);
        let l = cholesky(&d).unwrap();
        assert_eq!(l.lower().unwrap(), &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
        assert_eq!(l.kind(), FactorKind::Cholesky);
    }

    #[test]
    fn cholesky_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 5, 13, 30, 64, 65, 150] {
            let m = random_pd(&mut rng, n);
            let f = cholesky(&m).unwrap();
            let err = (f.reconstruct() - m.as_matrix()).norm();
            assert!(err <= 1e-10 * frobenius_norm(&m), "n={n} err={err}");
        }
    }

    #[test]
    fn cholesky_reports_failing_pivot() {
        let m = SymMatrix::from_rows(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 2.0], &[0.0, 2.0, 1.0]]).unwrap();
        assert_eq!(cholesky(&m).unwrap_err(), Error::NotPositiveDefinite { pivot: 2 });
        // a defect past the first panel
        let mut d = vec![1.0; 140];
        d[100] = -1.0;
        let big = SymMatrix::from_diagonal(&d);
        assert_eq!(cholesky(&big).unwrap_err(), Error::NotPositiveDefinite { pivot: 100 });
    }

    #[test]
    fn cholesky_factor_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_pd(&mut rng, 9);
        let f = CholeskyFactor::new(m.as_slice(), 9).unwrap();
        let b: Vec<f64> = (0..9).map(|k| k as f64 - 3.0).collect();
        let x = f.solve(&b);
        let r = m.as_matrix() * nalgebra::DVector::from_vec(x);
        for k in 0..9 {
            assert!((r[k] - b[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn eigen_small_cases() {
        let f = sym_eig(&SymMatrix::from_diagonal(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(f.eigenvalues().unwrap(), &[1.0, 2.0, 3.0]);
        let ones = SymMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        assert!(min_eigenvalue(&ones).unwrap().abs() < 1e-15);
    }

    /// Real roots of the characteristic cubic via the trigonometric formula.
    fn cubic_roots(m: &SymMatrix) -> [f64; 3] {
        let a = |i, j| m.get(i, j);
        let tr = m.trace();
        let c2 = a(0, 0) * a(1, 1) + a(0, 0) * a(2, 2) + a(1, 1) * a(2, 2)
            - a(0, 1) * a(0, 1)
            - a(0, 2) * a(0, 2)
            - a(1, 2) * a(1, 2);
        let det = m.as_matrix().determinant();
        // x^3 - tr x^2 + c2 x - det = 0, shifted by tr/3
        let p = c2 - tr * tr / 3.0;
        let q = -2.0 * tr.powi(3) / 27.0 + tr * c2 / 3.0 - det;
        let r = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * r)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        let mut roots = [0.0; 3];
        for k in 0..3 {
            roots[k] = tr / 3.0 + r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos();
        }
        roots.sort_by(f64::total_cmp);
        roots
    }

    #[test]
    fn eigenvalues_match_cubic_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let m = random_sym(&mut rng, 3);
            let f = sym_eig(&m).unwrap();
            let roots = cubic_roots(&m);
            for (a, b) in f.eigenvalues().unwrap().iter().zip(roots) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
            let err = (f.reconstruct() - m.as_matrix()).norm();
            assert!(err <= 1e-10 * frobenius_norm(&m).max(1.0));
        }
    }

    #[test]
    fn svd_identity_case() {
        let i = DMatrix::<f64>::identity(3, 3);
        let f = svd_of_product(&i, &i).unwrap();
        if let FactorResult::Svd { u, d, v } = &f {
            assert_eq!(d, &vec![1.0, 1.0, 1.0]);
            for k in 0..3 {
                assert!((u[(k, k)].abs() - 1.0).abs() < 1e-12);
                assert!((v[(k, k)].abs() - 1.0).abs() < 1e-12);
            }
        } else {
            panic!("expected svd");
        }
    }

    #[test]
    fn svd_spectral_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in [2, 4, 7] {
            let x = random_pd(&mut rng, n);
            let z = random_pd(&mut rng, n);
            let l = cholesky_lower(&x).unwrap();
            let r = cholesky_lower(&z).unwrap();
            let f = svd_of_product(&r.transpose(), &l).unwrap();
            let FactorResult::Svd { u, d, v } = &f else { panic!() };
            assert!(d.windows(2).all(|w| w[0] >= w[1]) && d.iter().all(|&s| s >= 0.0));
            let id = DMatrix::<f64>::identity(n, n);
            assert!((u.transpose() * u - &id).norm() < 1e-10);
            assert!((v.transpose() * v - &id).norm() < 1e-10);
            let d2 = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, d.iter().map(|s| s * s)));
            let lhs = u * &d2 * u.transpose();
            let rhs = r.transpose() * x.as_matrix() * &r;
            assert!((lhs - &rhs).norm() < 1e-9 * rhs.norm());
            let lhs = v * &d2 * v.transpose();
            let rhs = l.transpose() * z.as_matrix() * &l;
            assert!((lhs - &rhs).norm() < 1e-9 * rhs.norm());
        }
    }

    #[test]
    fn boundary_step_trivial_cases() {
        let i = SymMatrix::identity(3);
        assert_eq!(max_boundary_step(&i, &SymMatrix::zeros(3), 0.98).unwrap(), 1.0);
        let step = max_boundary_step(&i, &i.scale(-2.0), 0.98).unwrap();
        assert!((step - 0.49).abs() < 1e-15);
        assert!(max_boundary_step(&i.scale(-1.0), &i, 0.98).is_err());
    }

    fn bisection_step(m: &SymMatrix, dm: &SymMatrix) -> f64 {
        let psd = |t: f64| min_eigenvalue(&m.axpy(t, dm)).unwrap() >= 0.0;
        if psd(1e6) {
            return f64::INFINITY;
        }
        let (mut lo, mut hi) = (0.0, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if psd(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    #[test]
    fn boundary_step_matches_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let m = random_pd(&mut rng, 4);
            let dm = random_sym(&mut rng, 4).scale(5.0);
            let tau = 0.98;
            let step = max_boundary_step(&m, &dm, tau).unwrap();
            let t_max = bisection_step(&m, &dm);
            let expected = (tau * t_max).min(1.0);
            assert!((step - expected).abs() < 1e-6, "{step} vs {expected}");
        }
    }
}
