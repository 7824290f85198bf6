//! Indefinite-metric geometry on `C^{p+m}`.
//!
//! The space carries the Euclidean product `(x, y)` and the indefinite
//! product `[x, y] = (Jx, y)` with `J = diag(I_p, -I_m)`. Both products are
//! linear in the first slot and conjugate-linear in the second.
//!
//! A maximal nonnegative subspace is the graph `{(x+, K x+)}` of a
//! contraction `K: H+ -> H-` (its angle operator), and it is uniformly
//! positive exactly when `||K|| < 1`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{KreinError, Result};
use crate::numerics::{
    self, c64, hermitian_eigen, hermitian_eigenvalues, identity, ComplexMatrix, ComplexVector,
};

/// Slack on `||K|| <= 1` accepted for angle operators of nonnegative subspaces.
pub const ANGLE_NORM_SLACK: f64 = 1e-8;

/// Orthonormality tolerance for subspace bases.
const ORTHONORMAL_TOL: f64 = 1e-10;

/// Decomposition `H = H+ (+) H-` with `dim H+ = p`, `dim H- = m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KreinStructure {
    pub p: usize,
    pub m: usize,
}

impl KreinStructure {
    pub fn new(p: usize, m: usize) -> Result<Self> {
        if p == 0 || m == 0 {
            return Err(KreinError::InvalidArgument(format!("p and m must be positive (p={p}, m={m})")));
        }
        Ok(Self { p, m })
    }

    pub fn dim(&self) -> usize {
        self.p + self.m
    }

    /// The signature operator `J = diag(I_p, -I_m)`.
    pub fn signature(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            if i != j {
                c64(0.0, 0.0)
            } else if i < self.p {
                c64(1.0, 0.0)
            } else {
                c64(-1.0, 0.0)
            }
        })
    }

    /// `J x` for a matrix of column vectors.
    pub fn apply_j(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut y = x.clone();
        y.rows_mut(self.p, self.m).neg_mut();
        y
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(KreinError::DimensionMismatch(format!("vector of length {len} in a space of dimension {}", self.dim())));
        }
        Ok(())
    }
}

/// `[x, y] = (Jx, y)`.
pub fn indefinite_inner_product(s: &KreinStructure, x: &ComplexVector, y: &ComplexVector) -> Result<Complex64> {
    s.check_len(x.len())?;
    s.check_len(y.len())?;
    let mut acc = c64(0.0, 0.0);
    for i in 0..s.dim() {
        let term = x[i] * y[i].conj();
        if i < s.p {
            acc += term;
        } else {
            acc -= term;
        }
    }
    Ok(acc)
}

/// J-Gram matrix `B* J B` of a set of columns.
pub fn j_gram(s: &KreinStructure, basis: &ComplexMatrix) -> ComplexMatrix {
    basis.adjoint() * s.apply_j(basis)
}

/// A subspace given by an orthonormal basis (columns).
#[derive(Debug, Clone)]
pub struct Subspace {
    structure: KreinStructure,
    basis: ComplexMatrix,
}

impl Subspace {
    pub fn new(structure: KreinStructure, basis: ComplexMatrix) -> Result<Self> {
        if basis.nrows() != structure.dim() {
            return Err(KreinError::DimensionMismatch(format!(
                "basis has {} rows, space has dimension {}",
                basis.nrows(),
                structure.dim()
            )));
        }
        if basis.ncols() == 0 || basis.ncols() > structure.dim() {
            return Err(KreinError::InvalidArgument(format!("subspace dimension {} out of range", basis.ncols())));
        }
        numerics::ensure_finite(&basis)?;
        let defect = (basis.adjoint() * &basis - identity(basis.ncols())).norm();
        if defect > ORTHONORMAL_TOL {
            return Err(KreinError::InvalidArgument(format!("basis is not orthonormal (defect {defect:e})")));
        }
        Ok(Self { structure, basis })
    }

    /// Orthonormalizes an arbitrary full-column-rank spanning set.
    pub fn from_spanning(structure: KreinStructure, vectors: &ComplexMatrix) -> Result<Self> {
        let q = numerics::orthonormalize_columns(vectors)
            .ok_or_else(|| KreinError::InvalidArgument("spanning set is rank deficient".into()))?;
        Self::new(structure, q)
    }

    /// The zero subspace; only produced by projector extraction when nothing
    /// is enclosed.
    pub(crate) fn empty(structure: KreinStructure) -> Self {
        Self { structure, basis: ComplexMatrix::zeros(structure.dim(), 0) }
    }

    pub fn structure(&self) -> KreinStructure {
        self.structure
    }

    pub fn basis(&self) -> &ComplexMatrix {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.dim() == 0
    }

    /// Orthogonal projector onto the subspace.
    pub fn projector(&self) -> ComplexMatrix {
        &self.basis * self.basis.adjoint()
    }

    pub fn plus_block(&self) -> ComplexMatrix {
        self.basis.rows(0, self.structure.p).into_owned()
    }

    pub fn minus_block(&self) -> ComplexMatrix {
        self.basis.rows(self.structure.p, self.structure.m).into_owned()
    }

    /// `min [x,x] / (x,x)` over the subspace, i.e. `lambda_min(B* J B)`.
    pub fn min_rayleigh(&self) -> f64 {
        hermitian_eigenvalues(&j_gram(&self.structure, &self.basis)).first().copied().unwrap_or(0.0)
    }

    /// Largest principal angle (radians) to another subspace of equal dimension.
    pub fn max_principal_angle(&self, other: &Subspace) -> f64 {
        let overlap = self.basis.adjoint() * &other.basis;
        let smallest = numerics::singular_values(&overlap).last().copied().unwrap_or(0.0);
        smallest.clamp(0.0, 1.0).acos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classification {
    NegativeTouching,
    Nonnegative,
    UniformlyPositive { delta: f64 },
    Indefinite,
}

/// Default classification tolerance `1e-9 (1 + ||B||^2)`.
pub fn default_classification_tol(l: &Subspace) -> f64 {
    let nb = numerics::norm2(l.basis());
    1e-9 * (1.0 + nb * nb)
}

/// Classifies `L` through the spectrum of its J-Gram matrix. For an
/// orthonormal basis, `[x,x] >= delta (x,x)` on `L` iff
/// `lambda_min(B* J B) >= delta`. The band `[-tol, tol]` counts as
/// nonnegative.
pub fn classify_subspace(l: &Subspace, tol: f64) -> Classification {
    let ev = hermitian_eigenvalues(&j_gram(&l.structure, &l.basis));
    let (lo, hi) = match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Classification::Nonnegative,
    };
    if lo > tol {
        Classification::UniformlyPositive { delta: lo }
    } else if lo >= -tol {
        Classification::Nonnegative
    } else if hi > tol {
        Classification::Indefinite
    } else {
        Classification::NegativeTouching
    }
}

/// Angle operator `K: H+ -> H-` (an `m x p` matrix) of a maximal
/// nonnegative subspace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AngleOperator {
    pub structure: KreinStructure,
    #[serde(with = "crate::serde_complex::matrix")]
    k: ComplexMatrix,
}

impl AngleOperator {
    pub fn new(structure: KreinStructure, k: ComplexMatrix) -> Result<Self> {
        if k.nrows() != structure.m || k.ncols() != structure.p {
            return Err(KreinError::DimensionMismatch(format!(
                "angle operator must be {}x{}, got {}x{}",
                structure.m,
                structure.p,
                k.nrows(),
                k.ncols()
            )));
        }
        numerics::ensure_finite(&k)?;
        let norm = numerics::norm2(&k);
        if norm > 1.0 + ANGLE_NORM_SLACK {
            return Err(KreinError::NormExceeded { norm });
        }
        Ok(Self { structure, k })
    }

    pub fn zero(structure: KreinStructure) -> Self {
        Self { structure, k: ComplexMatrix::zeros(structure.m, structure.p) }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.k
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.k
    }

    pub fn norm(&self) -> f64 {
        numerics::norm2(&self.k)
    }

    /// Unnormalized graph basis `[I_p; K]`.
    pub fn graph_columns(&self) -> ComplexMatrix {
        let (p, m) = (self.structure.p, self.structure.m);
        let mut g = ComplexMatrix::zeros(p + m, p);
        g.view_mut((0, 0), (p, p)).copy_from(&identity(p));
        g.view_mut((p, 0), (m, p)).copy_from(&self.k);
        g
    }
}

/// Recovers `K = P- Q^{-1}` where `Q = P+|_L`.
///
/// Fails with [`KreinError::NotMaximal`] when `P+(L) != H+` and with
/// [`KreinError::NotNonnegative`] when `L` contains negative vectors beyond
/// [`ANGLE_NORM_SLACK`].
pub fn angle_operator_from_subspace(l: &Subspace) -> Result<AngleOperator> {
    let s = l.structure;
    let min_rayleigh = l.min_rayleigh();
    if l.dim() > s.p || min_rayleigh < -ANGLE_NORM_SLACK {
        return Err(KreinError::NotNonnegative { min_rayleigh });
    }
    let plus = l.plus_block();
    let sv = numerics::singular_values(&plus);
    let rank = sv.iter().filter(|&&x| x > 1e-10).count();
    if l.dim() < s.p || rank < s.p {
        return Err(KreinError::NotMaximal { rank, p: s.p });
    }
    let inv = plus.lu().try_inverse().ok_or(KreinError::NotMaximal { rank, p: s.p })?;
    let k = l.minus_block() * inv;
    numerics::ensure_finite(&k)?;
    Ok(AngleOperator { structure: s, k })
}

/// Orthonormalized column space of `[I_p; K]`.
pub fn subspace_from_angle_operator(k: &AngleOperator) -> Result<Subspace> {
    let norm = k.norm();
    if norm > 1.0 + ANGLE_NORM_SLACK {
        return Err(KreinError::NormExceeded { norm });
    }
    let q = k.graph_columns().qr().q();
    Subspace::new(k.structure, q)
}

/// A unit vector `y+ in H+` orthogonal to `L`, if one exists. For `y+ in H+`
/// the conditions `[x, y+] = 0` and `(x, y+) = 0` coincide, so this is the
/// Euclidean null space of `B+*`.
pub fn maximality_witness(l: &Subspace) -> Option<ComplexVector> {
    let s = l.structure;
    let plus = l.plus_block();
    let gram = &plus * plus.adjoint();
    let (values, vectors) = hermitian_eigen(&gram);
    if values[0] > 1e-10 {
        return None;
    }
    let mut y = ComplexVector::zeros(s.dim());
    y.rows_mut(0, s.p).copy_from(&vectors.column(0));
    let n = y.norm();
    Some(y / c64(n, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{from_rows, real_matrix, I};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s11() -> KreinStructure {
        KreinStructure::new(1, 1).unwrap()
    }

    fn vec2(a: Complex64, b: Complex64) -> ComplexVector {
        ComplexVector::from_vec(vec![a, b])
    }

    fn line(s: KreinStructure, v: &[Complex64]) -> Subspace {
        Subspace::from_spanning(s, &ComplexMatrix::from_column_slice(v.len(), 1, v)).unwrap()
    }

    fn random_k(rng: &mut ChaCha8Rng, m: usize, p: usize, norm: f64) -> ComplexMatrix {
        let k = ComplexMatrix::from_fn(m, p, |_, _| c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let n = numerics::norm2(&k);
        k * c64(norm / n, 0.0)
    }

    #[test]
    fn structure_rejects_empty_parts() {
        assert!(KreinStructure::new(0, 2).is_err());
        assert!(KreinStructure::new(2, 0).is_err());
        let j = KreinStructure::new(2, 3).unwrap().signature();
        assert!((j.adjoint() - &j).norm() == 0.0);
        assert!((&j * &j - identity(5)).norm() == 0.0);
    }

    #[test]
    fn inner_product_examples() {
        let s = s11();
        let one = c64(1.0, 0.0);
        let zero = c64(0.0, 0.0);
        assert_eq!(indefinite_inner_product(&s, &vec2(one, zero), &vec2(one, zero)).unwrap(), one);
        assert_eq!(indefinite_inner_product(&s, &vec2(zero, one), &vec2(zero, one)).unwrap(), -one);
        assert_eq!(indefinite_inner_product(&s, &vec2(one, one), &vec2(one, one)).unwrap(), zero);
        let short = ComplexVector::from_vec(vec![one]);
        assert!(indefinite_inner_product(&s, &short, &short).is_err());
    }

    #[test]
    fn inner_product_is_conjugate_linear_in_second_slot() {
        let s = s11();
        let x = vec2(c64(1.0, 2.0), c64(0.5, -1.0));
        let y = vec2(c64(-0.3, 0.7), c64(2.0, 0.1));
        let a = c64(0.3, -1.7);
        let lhs = indefinite_inner_product(&s, &x, &(&y * a)).unwrap();
        let rhs = indefinite_inner_product(&s, &x, &y).unwrap() * a.conj();
        assert!((lhs - rhs).norm() < 1e-14);
        assert!(indefinite_inner_product(&s, &x, &x).unwrap().im.abs() < 1e-15);
    }

    #[test]
    fn classification_examples() {
        let s = s11();
        let one = c64(1.0, 0.0);
        let zero = c64(0.0, 0.0);
        let e1 = line(s, &[one, zero]);
        let tol = default_classification_tol(&e1);
        assert_eq!(classify_subspace(&e1, tol), Classification::UniformlyPositive { delta: 1.0 });
        let neutral = line(s, &[one, one]);
        assert_eq!(classify_subspace(&neutral, tol), Classification::Nonnegative);
        let e2 = line(s, &[zero, one]);
        assert_eq!(classify_subspace(&e2, tol), Classification::NegativeTouching);
        let whole = Subspace::new(s, identity(2)).unwrap();
        assert_eq!(classify_subspace(&whole, tol), Classification::Indefinite);
    }

    #[test]
    fn angle_operator_examples() {
        let s = s11();
        let one = c64(1.0, 0.0);
        let k = angle_operator_from_subspace(&line(s, &[one, c64(0.0, 0.0)])).unwrap();
        assert!(k.matrix()[(0, 0)].norm() < 1e-15);

        // x- = K x+ on the basis vector (1, 1/2): K = 1/2.
        let k = angle_operator_from_subspace(&line(s, &[one, c64(0.5, 0.0)])).unwrap();
        assert!((k.matrix()[(0, 0)] - c64(0.5, 0.0)).norm() < 1e-14);

        let k = angle_operator_from_subspace(&line(s, &[one, one])).unwrap();
        assert!((k.matrix()[(0, 0)] - one).norm() < 1e-14);
        assert!((k.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn angle_operator_errors() {
        let s = KreinStructure::new(2, 1).unwrap();
        let e1 = line(s, &[c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)]);
        assert!(matches!(angle_operator_from_subspace(&e1), Err(KreinError::NotMaximal { .. })));
        let neg = Subspace::new(s11(), real_matrix(&[&[0.0], &[1.0]])).unwrap();
        assert!(matches!(angle_operator_from_subspace(&neg), Err(KreinError::NotNonnegative { .. })));
    }

    #[test]
    fn subspace_from_angle_operator_examples() {
        let s = KreinStructure::new(2, 3).unwrap();
        let h_plus = subspace_from_angle_operator(&AngleOperator::zero(s)).unwrap();
        assert!((h_plus.minus_block()).norm() < 1e-15);
        assert!(maximality_witness(&h_plus).is_none());

        let one = from_rows(&[vec![c64(1.0, 0.0)]]);
        let neutral = subspace_from_angle_operator(&AngleOperator::new(s11(), one).unwrap()).unwrap();
        let b = neutral.basis();
        assert!((b[(0, 0)].norm() - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((b[(1, 0)] - b[(0, 0)]).norm() < 1e-14);

        // Gram of (1, i/2)/norm: (1 - 1/4) / (1 + 1/4) = 3/5.
        let k = AngleOperator::new(s11(), from_rows(&[vec![I * 0.5]])).unwrap();
        let l = subspace_from_angle_operator(&k).unwrap();
        match classify_subspace(&l, default_classification_tol(&l)) {
            Classification::UniformlyPositive { delta } => assert!((delta - 0.6).abs() < 1e-14),
            other => panic!("unexpected {other:?}"),
        }

        let big = from_rows(&[vec![c64(1.1, 0.0)]]);
        assert!(matches!(AngleOperator::new(s11(), big), Err(KreinError::NormExceeded { .. })));
    }

    #[test]
    fn maximality_witness_examples() {
        let s = KreinStructure::new(2, 1).unwrap();
        let one = c64(1.0, 0.0);
        let zero = c64(0.0, 0.0);
        let w = maximality_witness(&line(s, &[one, zero, zero])).unwrap();
        assert!((w[1].norm() - 1.0).abs() < 1e-14 && w[0].norm() < 1e-14 && w[2].norm() == 0.0);

        let w = maximality_witness(&line(s, &[one, zero, one])).unwrap();
        assert!((w[1].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn round_trip_and_norm_dichotomy() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..200 {
            let p = 1 + trial % 5;
            let m = 1 + (trial / 5) % 4;
            let s = KreinStructure::new(p, m).unwrap();
            // Norms straddling 1, avoiding the tolerance band just below 1.
            let norm = if trial % 2 == 0 { 0.999 * rng.random::<f64>() } else { 1.0 };
            let k = AngleOperator::new(s, random_k(&mut rng, m, p, norm)).unwrap();
            let l = subspace_from_angle_operator(&k).unwrap();
            let back = angle_operator_from_subspace(&l).unwrap();
            let err = (back.matrix() - k.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(err < 1e-8, "trial {trial}: {err:e}");

            // lambda_min(B* J B) = (1 - s^2) / (1 + s^2) with s = ||K||.
            let expected = (1.0 - norm * norm) / (1.0 + norm * norm);
            assert!((l.min_rayleigh() - expected).abs() < 1e-12);
            let uniformly = matches!(
                classify_subspace(&l, default_classification_tol(&l)),
                Classification::UniformlyPositive { .. }
            );
            assert_eq!(uniformly, norm < 1.0 - 1e-8);
        }
    }

    #[test]
    fn plus_component_dominates_on_nonnegative_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = KreinStructure::new(3, 2).unwrap();
        let k = AngleOperator::new(s, random_k(&mut rng, 2, 3, 1.0)).unwrap();
        let l = subspace_from_angle_operator(&k).unwrap();
        for _ in 0..100 {
            let coeff = ComplexVector::from_fn(3, |_, _| c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let x = l.basis() * coeff;
            let plus = x.rows(0, 3).norm();
            let minus = x.rows(3, 2).norm();
            assert!(plus >= minus - 1e-12);
        }
    }

    #[test]
    fn uniform_positivity_versus_norm_gap() {
        // ||K|| <= 1 - delta implies [x,x] >= delta (x,x); conversely
        // [x,x] >= delta (x,x) implies ||K|| <= 1 - delta / 2.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = KreinStructure::new(3, 3).unwrap();
        for _ in 0..100 {
            let norm = rng.random::<f64>();
            let k = AngleOperator::new(s, random_k(&mut rng, 3, 3, norm)).unwrap();
            let l = subspace_from_angle_operator(&k).unwrap();
            let delta = 1.0 - norm;
            assert!(l.min_rayleigh() >= delta - 1e-12);
            let achieved = l.min_rayleigh();
            assert!(norm <= 1.0 - achieved / 2.0 + 1e-12);
        }
    }
}
