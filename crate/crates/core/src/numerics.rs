//! Dense complex linear algebra kernel.
//!
//! Every numerically delicate primitive of the crate lives here: operator
//! norms, shifted solves with a singularity guard, the complex Schur form
//! (with eigenvalue reordering), eigenvectors, Hermitian spectra and the
//! triangular Sylvester solve used to build spectral projectors.
//!
//! Storage is `nalgebra::DMatrix<Complex64>`; all functions are pure.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{KreinError, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// `solve_shifted` refuses a shift when `sigma_min(M - mu) < SINGULAR_SHIFT_RTOL * ||M - mu||`.
pub const SINGULAR_SHIFT_RTOL: f64 = 1e-12;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn ensure_finite(m: &ComplexMatrix) -> Result<()> {
    if is_finite(m) {
        Ok(())
    } else {
        Err(KreinError::NonFinite)
    }
}

/// Builds a matrix from nested rows. Panics on ragged input; intended for
/// literals in tests and examples.
pub fn from_rows(rows: &[Vec<Complex64>]) -> ComplexMatrix {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
    ComplexMatrix::from_fn(r, c, |i, j| rows[i][j])
}

/// Real-valued literal helper: `real_matrix(&[&[1.0, 2.0], &[3.0, 4.0]])`.
pub fn real_matrix(rows: &[&[f64]]) -> ComplexMatrix {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    ComplexMatrix::from_fn(r, c, |i, j| c64(rows[i][j], 0.0))
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

/// Singular values in descending order.
///
/// Computed as the nonnegative eigenvalues of the Hermitian dilation
/// `[[0, M], [M*, 0]]`. nalgebra's complex SVD occasionally fails to converge
/// to full accuracy (reconstruction errors near 1e-4 on rank-deficient
/// projectors), whereas its Hermitian eigensolver is backward stable.
pub fn singular_values(m: &ComplexMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let (r, c) = m.shape();
    let mut h = ComplexMatrix::zeros(r + c, r + c);
    h.view_mut((0, r), (r, c)).copy_from(m);
    h.view_mut((r, 0), (c, r)).copy_from(&m.adjoint());
    let ev = hermitian_eigenvalues(&h);
    ev.iter().rev().take(r.min(c)).map(|&x| x.max(0.0)).collect()
}

/// Largest singular value without the finiteness check, from the smaller Gram
/// matrix.
pub(crate) fn norm2(m: &ComplexMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = if m.nrows() <= m.ncols() { m * m.adjoint() } else { m.adjoint() * m };
    hermitian_eigenvalues(&gram).last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

pub(crate) fn sigma_min(m: &ComplexMatrix) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Spectral norm (largest singular value).
pub fn operator_norm(m: &ComplexMatrix) -> Result<f64> {
    ensure_finite(m)?;
    Ok(norm2(m))
}

fn shifted(m: &ComplexMatrix, mu: Complex64) -> ComplexMatrix {
    let mut s = m.clone();
    for k in 0..s.nrows() {
        s[(k, k)] -= mu;
    }
    s
}

/// Solves `(M - mu I) X = B`.
///
/// The shift is rejected with [`KreinError::SingularShift`] when the smallest
/// singular value of `M - mu I` falls below `1e-12 * ||M - mu I||`.
pub fn solve_shifted(m: &ComplexMatrix, mu: Complex64, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !m.is_square() {
        return Err(KreinError::DimensionMismatch(format!(
            "solve_shifted needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if b.nrows() != m.nrows() {
        return Err(KreinError::DimensionMismatch(format!(
            "right-hand side has {} rows, matrix has {}",
            b.nrows(),
            m.nrows()
        )));
    }
    ensure_finite(m)?;
    ensure_finite(b)?;
    if !(mu.re.is_finite() && mu.im.is_finite()) {
        return Err(KreinError::NonFinite);
    }
    let s = shifted(m, mu);
    let sv = singular_values(&s);
    let (smax, smin) = (sv[0], sv[sv.len() - 1]);
    if smax == 0.0 || smin < SINGULAR_SHIFT_RTOL * smax {
        return Err(KreinError::SingularShift { mu, sigma_min: smin });
    }
    s.lu().solve(b).ok_or(KreinError::SingularShift { mu, sigma_min: smin })
}

/// `(lambda I - M)^{-1}` by LU, with no conditioning guard. Hot path of the
/// contour quadrature.
pub(crate) fn resolvent(m: &ComplexMatrix, lambda: Complex64) -> Option<ComplexMatrix> {
    let mut s = -m.clone();
    for k in 0..s.nrows() {
        s[(k, k)] += lambda;
    }
    s.lu().try_inverse()
}

/// Hermitian "imaginary part" `(M - M*) / (2i)`.
pub fn imaginary_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m - m.adjoint()) * c64(0.0, -0.5)
}

fn hermitize(h: &ComplexMatrix) -> ComplexMatrix {
    (h + h.adjoint()) * c64(0.5, 0.0)
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(h: &ComplexMatrix) -> Vec<f64> {
    if h.is_empty() {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(hermitize(h)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Ascending eigenvalues with the matching orthonormal eigenvectors as columns.
pub fn hermitian_eigen(h: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let eig = SymmetricEigen::new(hermitize(h));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_fn(h.nrows(), order.len(), |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

pub fn min_hermitian_eigenvalue(h: &ComplexMatrix) -> f64 {
    hermitian_eigenvalues(h).first().copied().unwrap_or(0.0)
}

/// Complex Schur form `M = U T U*` with `T` upper triangular.
#[derive(Debug, Clone)]
pub struct SchurForm {
    pub unitary: ComplexMatrix,
    pub upper: ComplexMatrix,
}

impl SchurForm {
    pub fn new(m: &ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(KreinError::DimensionMismatch("Schur form needs a square matrix".into()));
        }
        ensure_finite(m)?;
        let n = m.nrows();
        if n == 0 {
            return Ok(Self { unitary: m.clone(), upper: m.clone() });
        }
        let schur = Schur::try_new(m.clone(), f64::EPSILON, 1000 * n.max(10)).ok_or(KreinError::NoConvergence)?;
        let (unitary, mut upper) = schur.unpack();
        for j in 0..n {
            for i in j + 1..n {
                upper[(i, j)] = Complex64::new(0.0, 0.0);
            }
        }
        Ok(Self { unitary, upper })
    }

    pub fn dim(&self) -> usize {
        self.upper.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        (0..self.dim()).map(|k| self.upper[(k, k)]).collect()
    }

    /// Exchanges the adjacent diagonal entries `k` and `k + 1` by a unitary
    /// rotation, keeping `T` upper triangular.
    fn swap(&mut self, k: usize) {
        let n = self.dim();
        let t11 = self.upper[(k, k)];
        let t22 = self.upper[(k + 1, k + 1)];
        let t12 = self.upper[(k, k + 1)];
        let x0 = t12;
        let x1 = t22 - t11;
        let nx = (x0.norm_sqr() + x1.norm_sqr()).sqrt();
        if nx == 0.0 {
            return;
        }
        let (c, s) = (x0 / nx, x1 / nx);
        // Z = [[c, -s̄], [s, c̄]]; its first column spans the t22-eigenvector.
        for r in 0..n {
            let (a, b) = (self.upper[(r, k)], self.upper[(r, k + 1)]);
            self.upper[(r, k)] = a * c + b * s;
            self.upper[(r, k + 1)] = -a * s.conj() + b * c.conj();
            let (a, b) = (self.unitary[(r, k)], self.unitary[(r, k + 1)]);
            self.unitary[(r, k)] = a * c + b * s;
            self.unitary[(r, k + 1)] = -a * s.conj() + b * c.conj();
        }
        for col in 0..n {
            let (a, b) = (self.upper[(k, col)], self.upper[(k + 1, col)]);
            self.upper[(k, col)] = c.conj() * a + s.conj() * b;
            self.upper[(k + 1, col)] = -s * a + c * b;
        }
        self.upper[(k + 1, k)] = Complex64::new(0.0, 0.0);
        self.upper[(k, k)] = t22;
        self.upper[(k + 1, k + 1)] = t11;
    }

    /// Moves the selected diagonal entries to the leading block, preserving
    /// their relative order. Returns the size of the leading block.
    pub fn reorder(&mut self, select: &[bool]) -> usize {
        assert_eq!(select.len(), self.dim());
        let mut sel = select.to_vec();
        let mut leading = 0;
        for j in 0..sel.len() {
            if sel[j] {
                for i in (leading..j).rev() {
                    self.swap(i);
                    sel.swap(i, i + 1);
                }
                leading += 1;
            }
        }
        leading
    }

    /// First `k` Schur vectors: an orthonormal basis of the invariant
    /// subspace belonging to the leading `k` diagonal entries.
    pub fn leading_basis(&self, k: usize) -> ComplexMatrix {
        self.unitary.columns(0, k).into_owned()
    }

    /// Eigenvectors of `T` by back substitution, mapped back through `U`.
    pub fn eigenvectors(&self) -> ComplexMatrix {
        let n = self.dim();
        let t = &self.upper;
        let tmax = t.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let smin = (f64::EPSILON * tmax).max(f64::MIN_POSITIVE * 1e10);
        let mut vectors = ComplexMatrix::zeros(n, n);
        for k in 0..n {
            let lambda = t[(k, k)];
            let mut y = ComplexVector::zeros(n);
            y[k] = Complex64::new(1.0, 0.0);
            for i in (0..k).rev() {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in i + 1..=k {
                    acc += t[(i, j)] * y[j];
                }
                let mut d = t[(i, i)] - lambda;
                if d.norm() < smin {
                    d = Complex64::new(smin, 0.0);
                }
                y[i] = -acc / d;
                let big = y.iter().map(|z| z.norm()).fold(0.0, f64::max);
                if big > 1e100 {
                    y /= Complex64::new(big, 0.0);
                }
            }
            let mut v = &self.unitary * y;
            let nv = v.norm();
            v /= Complex64::new(nv, 0.0);
            vectors.set_column(k, &v);
        }
        vectors
    }
}

#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<Complex64>,
    pub vectors: ComplexMatrix,
}

/// Eigenvalues with multiplicity and unit eigenvectors (columns).
pub fn eigendecomposition(m: &ComplexMatrix) -> Result<Eigen> {
    let schur = SchurForm::new(m)?;
    Ok(Eigen { values: schur.eigenvalues(), vectors: schur.eigenvectors() })
}

pub fn eigenvalues(m: &ComplexMatrix) -> Result<Vec<Complex64>> {
    Ok(SchurForm::new(m)?.eigenvalues())
}

/// Solves `T11 Y - Y T22 = C` for upper triangular `T11`, `T22`.
/// Near-resonant denominators are clamped to `eps * scale` as in LAPACK's
/// `ztrsyl`.
pub fn sylvester_triangular(t11: &ComplexMatrix, t22: &ComplexMatrix, rhs: &ComplexMatrix) -> ComplexMatrix {
    let (k, l) = (t11.nrows(), t22.nrows());
    let scale = t11.iter().chain(t22.iter()).map(|z| z.norm()).fold(1.0, f64::max);
    let smin = f64::EPSILON * scale;
    let mut y = ComplexMatrix::zeros(k, l);
    for j in 0..l {
        let mut col: ComplexVector = rhs.column(j).into_owned();
        for i in 0..j {
            let coeff = t22[(i, j)];
            if coeff != Complex64::new(0.0, 0.0) {
                col += y.column(i) * coeff;
            }
        }
        let shift = t22[(j, j)];
        for r in (0..k).rev() {
            let mut acc = col[r];
            for q in r + 1..k {
                acc -= t11[(r, q)] * y[(q, j)];
            }
            let mut d = t11[(r, r)] - shift;
            if d.norm() < smin {
                d = Complex64::new(smin, 0.0);
            }
            y[(r, j)] = acc / d;
        }
    }
    y
}

/// Orthonormal basis of the column space of a full-column-rank matrix.
pub fn orthonormalize_columns(m: &ComplexMatrix) -> Option<ComplexMatrix> {
    let sv = singular_values(m);
    let (smax, smin) = (sv[0], sv[sv.len() - 1]);
    if m.ncols() > m.nrows() || smax == 0.0 || smin < 1e-10 * smax {
        return None;
    }
    let q = m.clone().qr().q();
    Some(q.columns(0, m.ncols()).into_owned())
}

/// Leading `rank` left singular vectors together with all singular values
/// (descending).
pub fn dominant_left_singular_vectors(m: &ComplexMatrix, rank: usize) -> (ComplexMatrix, Vec<f64>) {
    let values = singular_values(m);
    let (_, vectors) = hermitian_eigen(&(m * m.adjoint()));
    let n = m.nrows();
    let basis = ComplexMatrix::from_fn(n, rank, |i, j| vectors[(i, n - 1 - j)]);
    (basis, values)
}

/// `||(I - B B*) M B||` for an orthonormal basis `B`: how far `span B` is from
/// being `M`-invariant.
pub fn invariance_defect(m: &ComplexMatrix, basis: &ComplexMatrix) -> f64 {
    if basis.ncols() == 0 {
        return 0.0;
    }
    let mb = m * basis;
    let proj = basis * (basis.adjoint() * &mb);
    norm2(&(mb - proj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(r, c, |_, _| c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
        random(rng, n, n).qr().q()
    }

    #[test]
    fn norm_of_zero_identity_and_diagonal() {
        assert_eq!(operator_norm(&ComplexMatrix::zeros(3, 3)).unwrap(), 0.0);
        assert!((operator_norm(&identity(5)).unwrap() - 1.0).abs() < 1e-14);
        let d = real_matrix(&[&[3.0, 0.0], &[0.0, 4.0]]);
        assert!((operator_norm(&d).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn norm_rejects_nan() {
        let mut m = identity(2);
        m[(0, 1)] = c64(f64::NAN, 0.0);
        assert!(matches!(operator_norm(&m), Err(KreinError::NonFinite)));
    }

    #[test]
    fn norm_is_unitarily_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..8 {
            let m = random(&mut rng, n, n);
            let (u, v) = (random_unitary(&mut rng, n), random_unitary(&mut rng, n));
            let a = operator_norm(&m).unwrap();
            let b = operator_norm(&(&u * &m * &v)).unwrap();
            assert!((a - b).abs() < 1e-9 * a.max(1.0));
        }
    }

    #[test]
    fn solve_shifted_examples() {
        let x = solve_shifted(&ComplexMatrix::zeros(2, 2), c64(-1.0, 0.0), &identity(2)).unwrap();
        assert!((x - identity(2)).norm() < 1e-15);

        let m = real_matrix(&[&[2.0, 0.0], &[0.0, 3.0]]);
        let x = solve_shifted(&m, c64(1.0, 0.0), &identity(2)).unwrap();
        assert!((x - real_matrix(&[&[1.0, 0.0], &[0.0, 0.5]])).norm() < 1e-15);

        // [[0,1],[0,0]] - iI = [[-i,1],[0,-i]], inverse by the 2x2 formula:
        // [[d,-b],[-c,a]]/(ad-bc) with ad-bc = -1.
        let m = real_matrix(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let x = solve_shifted(&m, I, &identity(2)).unwrap();
        let oracle = from_rows(&[vec![c64(0.0, 1.0), c64(1.0, 0.0)], vec![c64(0.0, 0.0), c64(0.0, 1.0)]]);
        assert!((&x - oracle).norm() < 1e-14);
        let shifted = &m - identity(2) * I;
        assert!((shifted * x - identity(2)).norm() < 1e-14);
    }

    #[test]
    fn solve_shifted_detects_eigenvalue() {
        let m = real_matrix(&[&[2.0, 0.0], &[0.0, 3.0]]);
        assert!(matches!(
            solve_shifted(&m, c64(3.0, 0.0), &identity(2)),
            Err(KreinError::SingularShift { .. })
        ));
    }

    #[test]
    fn solve_shifted_residual_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..100 {
            let n = 1 + trial % 12;
            let m = random(&mut rng, n, n);
            let mu = c64(0.0, 2.0 + rng.random::<f64>());
            let b = random(&mut rng, n, 3);
            let x = solve_shifted(&m, mu, &b).unwrap();
            let res = (shifted(&m, mu) * &x - &b).norm();
            let bound = 1e-10 * (norm2(&m) + mu.norm()) * norm2(&x);
            assert!(res <= bound, "trial {trial}: {res:e} > {bound:e}");
        }
    }

    #[test]
    fn eigen_examples() {
        let d = from_rows(&[vec![I, c64(0.0, 0.0)], vec![c64(0.0, 0.0), -I]]);
        let mut ev = eigenvalues(&d).unwrap();
        ev.sort_by(|a, b| b.im.total_cmp(&a.im));
        assert!((ev[0] - I).norm() < 1e-14 && (ev[1] + I).norm() < 1e-14);

        let t = from_rows(&[vec![I, c64(1.0, 0.0)], vec![c64(0.0, 0.0), -I]]);
        let mut ev = eigenvalues(&t).unwrap();
        ev.sort_by(|a, b| b.im.total_cmp(&a.im));
        assert!((ev[0] - I).norm() < 1e-14 && (ev[1] + I).norm() < 1e-14);
    }

    #[test]
    fn eigenpairs_meet_residual_contract_and_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=30 {
            let m = random(&mut rng, n, n);
            let eig = eigendecomposition(&m).unwrap();
            let scale = norm2(&m);
            for (k, lambda) in eig.values.iter().enumerate() {
                let v = eig.vectors.column(k);
                let r = (&m * v - v * *lambda).norm();
                assert!(r <= 1e-8 * scale, "n={n} k={k} residual {r:e}");
            }
            let sum: Complex64 = eig.values.iter().sum();
            assert!((sum - m.trace()).norm() <= 1e-8 * scale * n as f64);
        }
    }

    #[test]
    fn reorder_keeps_similarity_and_moves_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random(&mut rng, 9, 9);
        let mut schur = SchurForm::new(&m).unwrap();
        let before = schur.eigenvalues();
        let select: Vec<bool> = before.iter().map(|z| z.im > 0.0).collect();
        let k = schur.reorder(&select);
        let after = schur.eigenvalues();
        assert_eq!(k, select.iter().filter(|&&s| s).count());
        assert!(after[..k].iter().all(|z| z.im > 0.0));
        assert!(after[k..].iter().all(|z| z.im <= 0.0));
        let rebuilt = &schur.unitary * &schur.upper * schur.unitary.adjoint();
        assert!((rebuilt - &m).norm() < 1e-12 * m.norm());
        assert!(invariance_defect(&m, &schur.leading_basis(k)) < 1e-12 * m.norm());
    }

    #[test]
    fn triangular_sylvester_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t11 = random(&mut rng, 4, 4);
        let mut t22 = random(&mut rng, 3, 3);
        for j in 0..4 {
            for i in j + 1..4 {
                t11[(i, j)] = c64(0.0, 0.0);
            }
            t11[(j, j)] += c64(0.0, 2.0);
        }
        for j in 0..3 {
            for i in j + 1..3 {
                t22[(i, j)] = c64(0.0, 0.0);
            }
            t22[(j, j)] -= c64(0.0, 2.0);
        }
        let rhs = random(&mut rng, 4, 3);
        let y = sylvester_triangular(&t11, &t22, &rhs);
        assert!((&t11 * &y - &y * &t22 - rhs).norm() < 1e-13);
    }

    #[test]
    fn oblique_projector_range() {
        // Q = V diag(1, 1, 1, 0, 0, 0) V^-1 with a non-normal V.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = identity(6) + random(&mut rng, 6, 6);
        let vinv = v.clone().try_inverse().unwrap();
        let mask = ComplexMatrix::from_fn(6, 6, |i, j| if i == j && i < 3 { c64(1.0, 0.0) } else { c64(0.0, 0.0) });
        let q = &v * mask * &vinv;
        let (basis, sv) = dominant_left_singular_vectors(&q, 3);
        assert!(sv[2] > 0.5 && sv[3] < 1e-12);
        assert!((basis.adjoint() * &basis - identity(3)).norm() < 1e-13);
        // The range of Q is spanned by the first three columns of V.
        let range = v.columns(0, 3).into_owned();
        let residual = &range - &basis * (basis.adjoint() * &range);
        assert!(residual.norm() < 1e-12 * range.norm());
    }

    #[test]
    fn singular_values_match_gram_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for (r, c) in [(5, 3), (3, 5), (20, 20)] {
            let m = random(&mut rng, r, c);
            let sv = singular_values(&m);
            let gram = hermitian_eigenvalues(&(m.adjoint() * &m));
            let mut expected: Vec<f64> = gram.iter().rev().take(r.min(c)).map(|x| x.max(0.0).sqrt()).collect();
            expected.truncate(sv.len());
            for (a, b) in sv.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12 * (1.0 + sv[0]));
            }
            assert!((norm2(&m) - sv[0]).abs() < 1e-13 * sv[0]);
        }
    }
}
