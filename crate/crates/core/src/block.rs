//! Operator matrices `A = [[A11, A12], [A21, A22]]` with respect to
//! `H = H+ (+) H-` and their transfer data
//!
//! ```text
//! G(mu) = A12 (A22 - mu)^{-1},  F(mu) = (A22 - mu)^{-1} A21,  S(mu) = A11 - A12 F(mu).
//! ```
//!
//! Besides the algebra this module hosts the finite-dimensional versions of
//! the hypotheses (i)-(iv) on `A22`, `F`, `G`, `S` and the quantitative
//! checks on `G` and on the resolvent asymptotics.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KreinError, Result};
use crate::krein::KreinStructure;
use crate::numerics::{self, c64, identity, imaginary_part, min_hermitian_eigenvalue, norm2, ComplexMatrix, ComplexVector, I};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockOperator {
    structure: KreinStructure,
    #[serde(rename = "A11", with = "crate::serde_complex::matrix")]
    a11: ComplexMatrix,
    #[serde(rename = "A12", with = "crate::serde_complex::matrix")]
    a12: ComplexMatrix,
    #[serde(rename = "A21", with = "crate::serde_complex::matrix")]
    a21: ComplexMatrix,
    #[serde(rename = "A22", with = "crate::serde_complex::matrix")]
    a22: ComplexMatrix,
}

impl BlockOperator {
    pub fn assemble(a11: ComplexMatrix, a12: ComplexMatrix, a21: ComplexMatrix, a22: ComplexMatrix) -> Result<Self> {
        let (p, m) = (a11.nrows(), a22.nrows());
        let ok = a11.ncols() == p
            && a22.ncols() == m
            && a12.shape() == (p, m)
            && a21.shape() == (m, p);
        if !ok {
            return Err(KreinError::DimensionMismatch(format!(
                "inconsistent block shapes: A11 {:?}, A12 {:?}, A21 {:?}, A22 {:?}",
                a11.shape(),
                a12.shape(),
                a21.shape(),
                a22.shape()
            )));
        }
        for block in [&a11, &a12, &a21, &a22] {
            numerics::ensure_finite(block)?;
        }
        let structure = KreinStructure::new(p, m)?;
        Ok(Self { structure, a11, a12, a21, a22 })
    }

    pub fn decompose(a: &ComplexMatrix, s: KreinStructure) -> Result<Self> {
        if a.nrows() != s.dim() || a.ncols() != s.dim() {
            return Err(KreinError::DimensionMismatch(format!(
                "matrix is {}x{}, structure has dimension {}",
                a.nrows(),
                a.ncols(),
                s.dim()
            )));
        }
        let (p, m) = (s.p, s.m);
        Self::assemble(
            a.view((0, 0), (p, p)).into_owned(),
            a.view((0, p), (p, m)).into_owned(),
            a.view((p, 0), (m, p)).into_owned(),
            a.view((p, p), (m, m)).into_owned(),
        )
    }

    pub fn to_matrix(&self) -> ComplexMatrix {
        let (p, m) = (self.structure.p, self.structure.m);
        let mut a = ComplexMatrix::zeros(p + m, p + m);
        a.view_mut((0, 0), (p, p)).copy_from(&self.a11);
        a.view_mut((0, p), (p, m)).copy_from(&self.a12);
        a.view_mut((p, 0), (m, p)).copy_from(&self.a21);
        a.view_mut((p, p), (m, m)).copy_from(&self.a22);
        a
    }

    pub fn structure(&self) -> KreinStructure {
        self.structure
    }

    pub fn a11(&self) -> &ComplexMatrix {
        &self.a11
    }

    pub fn a12(&self) -> &ComplexMatrix {
        &self.a12
    }

    pub fn a21(&self) -> &ComplexMatrix {
        &self.a21
    }

    pub fn a22(&self) -> &ComplexMatrix {
        &self.a22
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.to_matrix())
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            structure: self.structure,
            a11: &self.a11 * factor,
            a12: &self.a12 * factor,
            a21: &self.a21 * factor,
            a22: &self.a22 * factor,
        }
    }

    /// `W A W*` for a block-diagonal unitary `W = diag(u_plus, u_minus)`.
    pub fn conjugated(&self, u_plus: &ComplexMatrix, u_minus: &ComplexMatrix) -> Self {
        Self {
            structure: self.structure,
            a11: u_plus * &self.a11 * u_plus.adjoint(),
            a12: u_plus * &self.a12 * u_minus.adjoint(),
            a21: u_minus * &self.a21 * u_plus.adjoint(),
            a22: u_minus * &self.a22 * u_minus.adjoint(),
        }
    }

    /// `||A P+||`, the norm of the first block column.
    pub fn plus_column_norm(&self) -> f64 {
        let (p, m) = (self.structure.p, self.structure.m);
        let mut col = ComplexMatrix::zeros(p + m, p);
        col.view_mut((0, 0), (p, p)).copy_from(&self.a11);
        col.view_mut((p, 0), (m, p)).copy_from(&self.a21);
        norm2(&col)
    }
}

/// `lambda_min((JA - (JA)*) / 2i)`. Positive means uniformly dissipative in
/// `{H, J}` with that margin; nonnegative means dissipative.
pub fn dissipativity_margin(a: &BlockOperator) -> f64 {
    let ja = a.structure.apply_j(&a.to_matrix());
    min_hermitian_eigenvalue(&imaginary_part(&ja))
}

/// `lambda_min(Im(-A22))`: nonnegative iff `-A22` is dissipative in `H-`.
pub fn minus_block_margin(a: &BlockOperator) -> f64 {
    min_hermitian_eigenvalue(&imaginary_part(&(-a.a22.clone())))
}

/// Transfer data at a point `mu` of the upper half-plane.
#[derive(Debug, Clone, Serialize)]
pub struct SchurData {
    #[serde(with = "crate::serde_complex::scalar")]
    pub mu: Complex64,
    #[serde(rename = "S", with = "crate::serde_complex::matrix")]
    pub s: ComplexMatrix,
    #[serde(rename = "F", with = "crate::serde_complex::matrix")]
    pub f: ComplexMatrix,
    #[serde(rename = "G", with = "crate::serde_complex::matrix")]
    pub g: ComplexMatrix,
}

/// `(G, F, S)` at any `lambda` off `sigma(A22)`, without the half-plane
/// restriction of [`schur_data`].
pub fn transfer_at(a: &BlockOperator, lambda: Complex64) -> Result<SchurData> {
    let resolvent = numerics::solve_shifted(&a.a22, lambda, &identity(a.structure.m))?;
    let g = &a.a12 * &resolvent;
    let f = &resolvent * &a.a21;
    let s = &a.a11 - &a.a12 * &f;
    Ok(SchurData { mu: lambda, s, f, g })
}

pub fn transfer_g(a: &BlockOperator, lambda: Complex64) -> Result<ComplexMatrix> {
    let resolvent = numerics::solve_shifted(&a.a22, lambda, &identity(a.structure.m))?;
    Ok(&a.a12 * resolvent)
}

pub fn schur_data(a: &BlockOperator, mu: Complex64) -> Result<SchurData> {
    if mu.im <= 0.0 {
        return Err(KreinError::InvalidArgument(format!("transfer point must lie in the upper half-plane, got {mu}")));
    }
    transfer_at(a, mu)
}

/// Default transfer point `i (1 + ||A22||)`.
pub fn default_mu(a: &BlockOperator) -> Complex64 {
    I * (1.0 + norm2(&a.a22))
}

/// Relative defect of
/// `A = mu + [[1, G], [0, 1]] diag(S - mu, A22 - mu) [[1, 0], [F, 1]]`.
pub fn factorization_residual(a: &BlockOperator, mu: Complex64) -> Result<f64> {
    let data = transfer_at(a, mu)?;
    let (p, m) = (a.structure.p, a.structure.m);
    let n = p + m;
    let mut upper = identity(n);
    upper.view_mut((0, p), (p, m)).copy_from(&data.g);
    let mut lower = identity(n);
    lower.view_mut((p, 0), (m, p)).copy_from(&data.f);
    let mut diag = ComplexMatrix::zeros(n, n);
    diag.view_mut((0, 0), (p, p)).copy_from(&(&data.s - identity(p) * mu));
    diag.view_mut((p, p), (m, m)).copy_from(&(&a.a22 - identity(m) * mu));
    let rebuilt = identity(n) * mu + upper * diag * lower;
    let full = a.to_matrix();
    let scale = norm2(&full);
    let defect = norm2(&(full - rebuilt));
    Ok(if scale > 0.0 { defect / scale } else { defect })
}

fn relative_defect(lhs: &ComplexMatrix, rhs: &ComplexMatrix) -> f64 {
    let scale = norm2(lhs).max(norm2(rhs));
    let defect = norm2(&(lhs - rhs));
    if scale > 0.0 {
        defect / scale
    } else {
        defect
    }
}

/// Relative defect of `G(lambda) = G(mu) + (lambda - mu) G(mu) (A22 - lambda)^{-1}`.
pub fn g_resolvent_identity_defect(a: &BlockOperator, lambda: Complex64, mu: Complex64) -> Result<f64> {
    let g_mu = transfer_g(a, mu)?;
    let r_lambda = numerics::solve_shifted(&a.a22, lambda, &identity(a.structure.m))?;
    let lhs = transfer_g(a, lambda)?;
    let rhs = &g_mu + &g_mu * r_lambda * (lambda - mu);
    Ok(relative_defect(&lhs, &rhs))
}

/// Relative defects of the two perturbation identities in `eps`:
///
/// ```text
/// G(mu + i eps) = G(mu) + i eps G(mu) (A22 - i eps - mu)^{-1}
/// S(mu + i eps) = S(mu) - i eps G(mu + i eps) F(mu)
/// ```
///
/// The sign in the second line follows from the resolvent identity
/// `R(l) - R(m) = (l - m) R(l) R(m)`.
pub fn perturbation_identity_defects(a: &BlockOperator, mu: Complex64, eps: f64) -> Result<(f64, f64)> {
    let at_mu = transfer_at(a, mu)?;
    let shifted = mu + I * eps;
    let at_shift = transfer_at(a, shifted)?;
    let g_defect = g_resolvent_identity_defect(a, shifted, mu)?;
    let s_rhs = &at_mu.s - &at_shift.g * &at_mu.f * (I * eps);
    Ok((g_defect, relative_defect(&at_shift.s, &s_rhs)))
}

/// Caps and tolerances for [`check_theorem_conditions`]. All caps default to
/// report-only (`None`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionProfile {
    pub tol: f64,
    pub f_cap: Option<f64>,
    pub s_cap: Option<f64>,
    /// Relative singular-value level below which `G` counts as negligible.
    pub g_decay_threshold: f64,
    pub g_max_effective_rank: Option<usize>,
}

impl Default for ConditionProfile {
    fn default() -> Self {
        Self { tol: 1e-10, f_cap: None, s_cap: None, g_decay_threshold: 1e-8, g_max_effective_rank: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionItem {
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionsReport {
    #[serde(with = "crate::serde_complex::scalar")]
    pub mu: Complex64,
    /// `lambda_min(Im(-A22))`.
    pub condition_i: ConditionItem,
    /// `||F(mu)||`.
    pub condition_ii: ConditionItem,
    /// Effective rank of `G(mu)` at the decay threshold.
    pub condition_iii: ConditionItem,
    pub g_singular_values: Vec<f64>,
    /// `||S(mu)||`.
    pub condition_iv: ConditionItem,
}

impl ConditionsReport {
    pub fn all_pass(&self) -> bool {
        self.condition_i.pass && self.condition_ii.pass && self.condition_iii.pass && self.condition_iv.pass
    }
}

pub fn check_theorem_conditions(a: &BlockOperator, mu: Complex64, profile: &ConditionProfile) -> Result<ConditionsReport> {
    let data = schur_data(a, mu)?;
    let margin = minus_block_margin(a);
    let f_norm = norm2(&data.f);
    let s_norm = norm2(&data.s);
    let sv = numerics::singular_values(&data.g);
    let top = sv.first().copied().unwrap_or(0.0);
    let effective_rank = if top == 0.0 { 0 } else { sv.iter().filter(|&&x| x > profile.g_decay_threshold * top).count() };
    Ok(ConditionsReport {
        mu,
        condition_i: ConditionItem { value: margin, pass: margin >= -profile.tol },
        condition_ii: ConditionItem { value: f_norm, pass: profile.f_cap.is_none_or(|cap| f_norm <= cap) },
        condition_iii: ConditionItem {
            value: effective_rank as f64,
            pass: profile.g_max_effective_rank.is_none_or(|cap| effective_rank <= cap),
        },
        g_singular_values: sv,
        condition_iv: ConditionItem { value: s_norm, pass: profile.s_cap.is_none_or(|cap| s_norm <= cap) },
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GDecayOptions {
    /// Profile is taken along `base + i h`.
    #[serde(with = "crate::serde_complex::scalar")]
    pub base: Complex64,
    /// Heights beyond this must have `||G|| <= tol`.
    pub horizon: Option<f64>,
    pub tol: f64,
}

impl Default for GDecayOptions {
    fn default() -> Self {
        Self { base: c64(0.0, 0.0), horizon: None, tol: 1e-2 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GDecayProfile {
    /// `(height, ||G(base + i height)||)`.
    pub entries: Vec<(f64, f64)>,
    pub monotone_envelope: bool,
    pub horizon_ok: bool,
}

impl GDecayProfile {
    pub fn pass(&self) -> bool {
        self.monotone_envelope && self.horizon_ok
    }
}

/// Norms of `G` up the imaginary axis. Under condition (i)
/// `||(A22 - mu)^{-1}|| <= 1 / Im mu`, so the profile must decay to zero.
pub fn g_decay_profile(a: &BlockOperator, heights: &[f64], opts: &GDecayOptions) -> Result<GDecayProfile> {
    if heights.is_empty() || heights.iter().any(|&h| h <= 0.0) || heights.windows(2).any(|w| w[1] <= w[0]) {
        return Err(KreinError::InvalidArgument("heights must be positive and increasing".into()));
    }
    let entries = heights
        .iter()
        .map(|&h| Ok((h, norm2(&transfer_g(a, opts.base + I * h)?))))
        .collect::<Result<Vec<_>>>()?;
    let first = entries[0].1;
    let last = entries[entries.len() - 1].1;
    let monotone_envelope = last <= first * (1.0 + 1e-12);
    let horizon_ok = match opts.horizon {
        Some(hz) => entries.iter().filter(|(h, _)| *h > hz).all(|(_, g)| *g <= opts.tol),
        None => true,
    };
    Ok(GDecayProfile { entries, monotone_envelope, horizon_ok })
}

#[derive(Debug, Clone, Serialize)]
pub struct GBoundSample {
    #[serde(with = "crate::serde_complex::scalar")]
    pub lambda: Complex64,
    pub g_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GBoundReport {
    /// `a = 2 ||A P+|| (1 + 1e-6)`.
    pub a: f64,
    pub eps: f64,
    /// `2 + 2 a / eps`.
    pub bound: f64,
    pub samples: Vec<GBoundSample>,
    /// `max ||G(lambda)|| / bound`.
    pub max_ratio: f64,
    pub holds: bool,
}

/// Checks `||G(lambda)|| <= 2 + 2a/eps` on the closed upper half-plane for a
/// uniformly dissipative `A` with margin at least `eps`.
pub fn g_uniform_bound_check(a: &BlockOperator, eps: f64, lambdas: &[Complex64]) -> Result<GBoundReport> {
    let margin = dissipativity_margin(a);
    if eps <= 0.0 || margin < eps * (1.0 - 1e-9) {
        return Err(KreinError::NotUniformlyDissipative { margin });
    }
    if let Some(bad) = lambdas.iter().find(|z| z.im < 0.0) {
        return Err(KreinError::InvalidArgument(format!("sample {bad} is below the real axis")));
    }
    let a_const = 2.0 * a.plus_column_norm() * (1.0 + 1e-6);
    let bound = 2.0 + 2.0 * a_const / eps;
    let samples = lambdas
        .iter()
        .map(|&lambda| Ok(GBoundSample { lambda, g_norm: norm2(&transfer_g(a, lambda)?) }))
        .collect::<Result<Vec<_>>>()?;
    let max_ratio = samples.iter().map(|s| s.g_norm / bound).fold(0.0, f64::max);
    Ok(GBoundReport { a: a_const, eps, bound, samples, max_ratio, holds: max_ratio <= 1.0 })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticsOptions {
    /// Points per upper semicircle, endpoints on the real axis included.
    pub arc_samples: usize,
    /// Random probe vectors `z in H+` for the top-left resolvent identity.
    pub probes: usize,
    pub seed: u64,
    pub identity_tol: f64,
    pub stability_factor: f64,
}

impl Default for AsymptoticsOptions {
    fn default() -> Self {
        Self { arc_samples: 17, probes: 4, seed: 0x5eed, identity_tol: 1e-8, stability_factor: 4.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RadiusFit {
    pub radius: f64,
    /// `max |lambda|^2 ||(S(lambda) - lambda)^{-1} + lambda^{-1}||` on the arc.
    pub c_fit: f64,
    /// Largest `|((lambda - A)^{-1} z, z) - ((lambda - S(lambda))^{-1} z, z)|`.
    pub identity_defect: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticsReport {
    pub fits: Vec<RadiusFit>,
    /// `C(R_last) / C(R_prev)` over the two largest radii.
    pub c_ratio: f64,
    pub stable: bool,
    pub identity_holds: bool,
}

impl AsymptoticsReport {
    pub fn pass(&self) -> bool {
        self.stable && self.identity_holds
    }
}

/// Samples the upper semicircles `|lambda| = R` and fits the constant in
/// `(S(lambda) - lambda)^{-1} = -lambda^{-1} + O(lambda^{-2})`. Also checks
/// that the top-left block of `(lambda - A)^{-1}` is `(lambda - S(lambda))^{-1}`.
pub fn resolvent_asymptotics_check(a: &BlockOperator, radii: &[f64], opts: &AsymptoticsOptions) -> Result<AsymptoticsReport> {
    let margin = dissipativity_margin(a);
    if margin <= 0.0 {
        return Err(KreinError::NotUniformlyDissipative { margin });
    }
    if radii.len() < 2 || radii.iter().any(|&r| r <= 0.0) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(KreinError::InvalidArgument("need at least two increasing positive radii".into()));
    }
    let (p, n) = (a.structure.p, a.structure.dim());
    let full = a.to_matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let probes: Vec<ComplexVector> = (0..opts.probes)
        .map(|_| ComplexVector::from_fn(p, |_, _| c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)))
        .collect();
    let samples = opts.arc_samples.max(2);
    let mut fits = Vec::with_capacity(radii.len());
    for &radius in radii {
        let mut c_fit: f64 = 0.0;
        let mut identity_defect: f64 = 0.0;
        for j in 0..samples {
            let theta = std::f64::consts::PI * j as f64 / (samples - 1) as f64;
            let lambda = Complex64::from_polar(radius, theta);
            let s = transfer_at(a, lambda)?.s;
            let inv = numerics::solve_shifted(&s, lambda, &identity(p))?;
            let err = norm2(&(&inv + identity(p) / lambda));
            c_fit = c_fit.max(lambda.norm_sqr() * err);

            let top_left = numerics::solve_shifted(&full, lambda, &identity(n))?.view((0, 0), (p, p)).into_owned();
            // (lambda - A)^{-1} = -(A - lambda)^{-1}, likewise for S.
            for z in &probes {
                let lhs = -(z.adjoint() * &top_left * z)[(0, 0)];
                let rhs = -(z.adjoint() * &inv * z)[(0, 0)];
                identity_defect = identity_defect.max((lhs - rhs).norm());
            }
        }
        fits.push(RadiusFit { radius, c_fit, identity_defect });
    }
    let last = fits[fits.len() - 1].c_fit;
    let prev = fits[fits.len() - 2].c_fit;
    let c_ratio = if prev > 0.0 { last / prev } else if last == 0.0 { 1.0 } else { f64::INFINITY };
    let stable = c_ratio <= opts.stability_factor && c_ratio >= 1.0 / opts.stability_factor;
    let identity_holds = fits.iter().all(|f| f.identity_defect <= opts.identity_tol);
    Ok(AsymptoticsReport { fits, c_ratio, stable, identity_holds })
}
