//! Maximal nonnegative invariant subspaces of dissipative operators.
//!
//! A uniformly dissipative operator is handled directly: the Riesz projector
//! for the upper half-plane has a uniformly positive range whose angle
//! operator `K` solves
//!
//! ```text
//! L = K (S - mu + G L),   L = A21 + (A22 - mu) K.
//! ```
//!
//! A merely dissipative operator goes through the truncated and regularized
//! family `A_{n,eps} = P_n A P_n + i eps J` on `H_n+ (+) H-`, followed by the
//! limit `eps -> 0` at `n = p` and a final polish at `eps = 0`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::{self, BlockOperator};
use crate::error::{KreinError, Result};
use crate::krein::{self, AngleOperator, KreinStructure, Subspace};
use crate::numerics::{self, c64, identity, norm2, ComplexMatrix, ComplexVector, SchurForm, I};
use crate::projector::{self, Contour, QuadratureOptions, QuadratureRule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MuStrategy {
    /// Start at `i (1 + ||A22||)` and double `Im mu` until
    /// `||G(mu + i eps)|| < 1/2` over the schedule.
    #[default]
    Auto,
    Fixed {
        #[serde(with = "crate::serde_complex::scalar")]
        value: Complex64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ContourConfig {
    /// `None` picks `2 max(1, spectral radius)` per operator.
    pub radius: Option<f64>,
    pub nodes: usize,
    pub rule: QuadratureRule,
}

impl Default for ContourConfig {
    fn default() -> Self {
        Self { radius: None, nodes: 64, rule: QuadratureRule::GaussSegments }
    }
}

impl ContourConfig {
    pub fn contour_for(&self, a: &ComplexMatrix) -> Result<Contour> {
        match self.radius {
            Some(r) => Contour::new(r, self.nodes, self.rule),
            None => Contour::auto(a, self.nodes, self.rule),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Riccati residual, relative to `||S|| + |mu|`.
    pub riccati_tol: f64,
    /// Invariance residual, relative to `||A||`.
    pub invariance_tol: f64,
    pub norm_slack: f64,
    /// Allowed `-Im` of the restriction spectrum in the limit.
    pub spec_slack: f64,
    /// Largest tolerated `||K(eps_k) - K(eps_{k+1})||` over the tail.
    pub cauchy_tol: f64,
    pub rayleigh_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { riccati_tol: 1e-9, invariance_tol: 1e-7, norm_slack: 1e-8, spec_slack: 1e-6, cauchy_tol: 5e-2, rayleigh_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub mu_strategy: MuStrategy,
    pub eps_schedule: Vec<f64>,
    /// `None` gives `{ceil(p/4), ceil(p/2), p}`.
    pub galerkin_dims: Option<Vec<usize>>,
    pub contour: ContourConfig,
    pub quadrature: QuadratureOptions,
    pub tolerances: Tolerances,
    /// Steps of the `eps` tail ignored by the monotonicity diagnostic.
    pub burn_in: usize,
    /// Trailing steps that must be below `cauchy_tol`.
    pub tail_len: usize,
    pub rayleigh_samples: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mu_strategy: MuStrategy::Auto,
            eps_schedule: default_eps_schedule(),
            galerkin_dims: None,
            contour: ContourConfig::default(),
            quadrature: QuadratureOptions::default(),
            tolerances: Tolerances::default(),
            burn_in: 3,
            tail_len: 3,
            rayleigh_samples: 200,
            seed: 0,
        }
    }
}

/// `{1, 1/2, ..., 2^-14}`.
pub fn default_eps_schedule() -> Vec<f64> {
    (0..15).map(|k| 0.5f64.powi(k)).collect()
}

pub fn default_galerkin_dims(p: usize) -> Vec<usize> {
    let mut dims = vec![p.div_ceil(4), p.div_ceil(2), p];
    dims.dedup();
    dims
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.eps_schedule;
        if s.is_empty()
            || s.iter().any(|&e| !(e > 0.0 && e <= 1.0))
            || s.windows(2).any(|w| w[1] >= w[0])
            || s[s.len() - 1] > 1e-4
        {
            return Err(KreinError::InvalidArgument(
                "eps schedule must be strictly decreasing in (0, 1] and end at or below 1e-4".into(),
            ));
        }
        if let Some(dims) = &self.galerkin_dims {
            if dims.is_empty() || dims.contains(&0) || dims.windows(2).any(|w| w[1] <= w[0]) {
                return Err(KreinError::InvalidArgument("Galerkin dimensions must be positive and increasing".into()));
            }
        }
        if self.contour.nodes < 16 || !self.contour.nodes.is_multiple_of(2) {
            return Err(KreinError::InvalidArgument("contour node count must be even and at least 16".into()));
        }
        Ok(())
    }

    fn dims_for(&self, p: usize) -> Result<Vec<usize>> {
        let mut dims = self.galerkin_dims.clone().unwrap_or_else(|| default_galerkin_dims(p));
        if dims.iter().any(|&n| n > p) {
            return Err(KreinError::InvalidArgument(format!("Galerkin dimension exceeds p = {p}")));
        }
        if dims.last() != Some(&p) {
            dims.push(p);
        }
        Ok(dims)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Estimate10 {
    pub eps: f64,
    #[serde(rename = "A_plus_norm")]
    pub a_plus_norm: f64,
    /// `2 eps / (pi ||A+||)`.
    pub lower_bound: f64,
    /// `min [x,x] / ||x||^2` over `L`.
    pub min_rayleigh: f64,
    /// Same minimum over random samples from `L`.
    pub sampled_min_rayleigh: f64,
    pub holds: bool,
}

impl Estimate10 {
    pub fn slack(&self) -> f64 {
        self.min_rayleigh - self.lower_bound
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Estimate11 {
    /// `||G(mu)||`.
    pub gamma: f64,
    #[serde(rename = "S_norm")]
    pub s_norm: f64,
    #[serde(rename = "A_plus_norm")]
    pub a_plus_norm: f64,
    /// `2 (||S|| + gamma / (1 - gamma) (||S|| + |mu|))`, absent when `gamma >= 1`.
    pub bound: Option<f64>,
    pub holds: bool,
}

impl Estimate11 {
    pub fn slack(&self) -> Option<f64> {
        self.bound.map(|b| b - self.a_plus_norm)
    }
}

/// One `(n, eps)` cell of the pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntry {
    pub n: usize,
    pub eps: f64,
    #[serde(rename = "K_norm")]
    pub k_norm: f64,
    #[serde(rename = "L_norm")]
    pub l_norm: f64,
    /// `2 (c + |mu|)`.
    pub l_bound: f64,
    pub riccati_residual: f64,
    /// `||K(eps) - K(eps_prev)||` at the same `n` (lifted, `m x p`).
    pub k_step: Option<f64>,
    /// Spectrum of `T(eps) = i eps + S + G L`, all taken at `mu + i eps`.
    #[serde(with = "crate::serde_complex::vec")]
    pub t_spectrum: Vec<Complex64>,
    pub checks_pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CauchyTail {
    /// Steps along `eps` at `n = p`.
    pub steps: Vec<f64>,
    /// Smallest burn-in after which the steps never increase.
    pub monotone_after: Option<usize>,
    pub tail_max: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Riesz projector by contour quadrature.
    Quadrature,
    /// Schur selection matched to the limit of the regularized spectra.
    SpectralSelection,
    /// Last regularized solution, no polish possible.
    Extrapolated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub structure: KreinStructure,
    #[serde(with = "crate::serde_complex::scalar")]
    pub mu: Complex64,
    #[serde(rename = "K", with = "crate::serde_complex::matrix")]
    pub k: ComplexMatrix,
    #[serde(rename = "L_op", with = "crate::serde_complex::matrix")]
    pub l_op: ComplexMatrix,
    /// `S + G L`, the restriction of `A` to the graph in `H+` coordinates.
    #[serde(with = "crate::serde_complex::matrix")]
    pub restriction_matrix: ComplexMatrix,
    pub riccati_residual: f64,
    pub invariance_residual: f64,
    #[serde(with = "crate::serde_complex::vec")]
    pub restriction_spectrum: Vec<Complex64>,
    #[serde(rename = "K_norm")]
    pub k_norm: f64,
    pub estimate10: Estimate10,
    pub estimate11: Estimate11,
    pub convergence_trace: Vec<TraceEntry>,
    pub cauchy: Option<CauchyTail>,
    pub method: Method,
    pub contour: Option<Contour>,
    pub margin: f64,
    #[serde(rename = "A_norm")]
    pub a_norm: f64,
    /// `max ||iε + S(μ + iε)||` over the schedule.
    pub c: Option<f64>,
    /// No vector of `H+` is orthogonal to the subspace.
    pub maximal: bool,
}

impl SolveReport {
    pub fn angle_operator(&self) -> Result<AngleOperator> {
        AngleOperator::new(self.structure, self.k.clone())
    }

    pub fn min_im_restriction(&self) -> f64 {
        self.restriction_spectrum.iter().map(|z| z.im).fold(f64::INFINITY, f64::min)
    }

    /// `||K|| <= 1 + 1e-8`, invariance `<= 1e-7 ||A||`, spectrum `Im >= -1e-6`
    /// and maximality.
    pub fn acceptance_triple(&self) -> bool {
        self.k_norm <= 1.0 + 1e-8
            && self.invariance_residual <= 1e-7 * self.a_norm.max(f64::MIN_POSITIVE)
            && self.min_im_restriction() >= -1e-6
            && self.maximal
    }
}

/// `A + i eps J`: blocks `A11 + i eps`, `A12`, `A21`, `A22 - i eps`.
pub fn regularize(a: &BlockOperator, eps: f64) -> Result<BlockOperator> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(KreinError::InvalidArgument(format!("eps must be nonnegative, got {eps}")));
    }
    let s = a.structure();
    BlockOperator::assemble(
        a.a11() + identity(s.p) * (I * eps),
        a.a12().clone(),
        a.a21().clone(),
        a.a22() - identity(s.m) * (I * eps),
    )
}

/// Compression to `H_n+ (+) H-`, where `H_n+` is spanned by the first `n`
/// columns of `basis_plus` (orthonormalized here).
pub fn galerkin_truncate(a: &BlockOperator, n: usize, basis_plus: &ComplexMatrix) -> Result<BlockOperator> {
    let p = a.structure().p;
    if n == 0 || n > p || basis_plus.nrows() != p || basis_plus.ncols() < n {
        return Err(KreinError::DimensionMismatch(format!(
            "need n in 1..={p} and a {p}-row basis with at least n columns, got n = {n}, basis {:?}",
            basis_plus.shape()
        )));
    }
    let b = galerkin_embedding(basis_plus, n)?;
    compress(a, &b)
}

fn galerkin_embedding(basis_plus: &ComplexMatrix, n: usize) -> Result<ComplexMatrix> {
    numerics::orthonormalize_columns(&basis_plus.columns(0, n).into_owned()).ok_or(KreinError::RankDeficientBasis)
}

fn compress(a: &BlockOperator, b: &ComplexMatrix) -> Result<BlockOperator> {
    BlockOperator::assemble(b.adjoint() * a.a11() * b, b.adjoint() * a.a12(), a.a21() * b, a.a22().clone())
}

/// `(||L - K (S - mu + G L)||, L)` with `L = A21 + (A22 - mu) K`. Vanishes
/// exactly when the graph of `K` is `A`-invariant.
pub fn riccati_residual(a: &BlockOperator, k: &AngleOperator, mu: Complex64) -> Result<(f64, ComplexMatrix)> {
    check_angle_shape(a, k)?;
    let data = block::transfer_at(a, mu)?;
    let (residual, l_op) = riccati_with(a, &data, k.matrix());
    Ok((residual, l_op))
}

fn riccati_with(a: &BlockOperator, data: &block::SchurData, k: &ComplexMatrix) -> (f64, ComplexMatrix) {
    let p = a.structure().p;
    let m = a.structure().m;
    let l_op = a.a21() + (a.a22() - identity(m) * data.mu) * k;
    let rhs = k * (&data.s - identity(p) * data.mu + &data.g * &l_op);
    (norm2(&(&l_op - rhs)), l_op)
}

fn check_angle_shape(a: &BlockOperator, k: &AngleOperator) -> Result<()> {
    if k.structure != a.structure() {
        return Err(KreinError::DimensionMismatch("angle operator and block operator structures differ".into()));
    }
    Ok(())
}

/// `S + G L`. Since `S - mu + G L = A11 - mu + A12 K`, this is `A11 + A12 K`,
/// the matrix of `A` restricted to the graph in `H+` coordinates.
pub fn restriction_matrix(a: &BlockOperator, k: &AngleOperator, mu: Complex64) -> Result<ComplexMatrix> {
    check_angle_shape(a, k)?;
    let data = block::transfer_at(a, mu)?;
    let (_, l_op) = riccati_with(a, &data, k.matrix());
    Ok(&data.s + &data.g * l_op)
}

/// Transfer point with `||G(mu + i eps)|| < 1/2` for all `eps` in `extra`
/// and `eps = 0`.
pub fn select_mu(a: &BlockOperator, extra: &[f64]) -> Result<Complex64> {
    let ok = |mu: Complex64| -> Result<bool> {
        for &eps in std::iter::once(&0.0).chain(extra) {
            if norm2(&block::transfer_g(a, mu + I * eps)?) >= 0.5 {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let mut mu = block::default_mu(a);
    for _ in 0..200 {
        if ok(mu)? {
            return Ok(mu);
        }
        mu = c64(mu.re, 2.0 * mu.im);
    }
    Err(KreinError::InvalidArgument("no transfer point with ||G|| < 1/2 found".into()))
}

fn resolve_mu(a: &BlockOperator, cfg: &SolverConfig, eps: &[f64]) -> Result<Complex64> {
    match cfg.mu_strategy {
        MuStrategy::Auto => select_mu(a, eps),
        MuStrategy::Fixed { value } => {
            if value.im <= 0.0 {
                return Err(KreinError::InvalidArgument(format!("fixed mu must lie in the upper half-plane, got {value}")));
            }
            for &e in std::iter::once(&0.0).chain(eps) {
                let g = norm2(&block::transfer_g(a, value + I * e)?);
                if g >= 0.5 {
                    return Err(KreinError::InvalidArgument(format!("||G(mu + i{e})|| = {g} is not below 1/2")));
                }
            }
            Ok(value)
        }
    }
}

/// Fills every report field for a given graph.
fn assemble_report(
    a: &BlockOperator,
    k: ComplexMatrix,
    mu: Complex64,
    eps: f64,
    method: Method,
    contour: Option<Contour>,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    let s = a.structure();
    let angle = AngleOperator::new(s, k)?;
    let data = block::transfer_at(a, mu)?;
    let (riccati, l_op) = riccati_with(a, &data, angle.matrix());
    let restriction = &data.s + &data.g * &l_op;
    let mut spectrum = numerics::eigenvalues(&restriction)?;
    projector::sort_spectrum(&mut spectrum);

    let full = a.to_matrix();
    let subspace = krein::subspace_from_angle_operator(&angle)?;
    let basis = subspace.basis();
    let invariance = numerics::invariance_defect(&full, basis);
    let a_plus_norm = norm2(&(&full * basis));

    let min_rayleigh = subspace.min_rayleigh();
    let sampled = sampled_min_rayleigh(&subspace, cfg.rayleigh_samples, cfg.seed);
    let lower_bound = if eps == 0.0 {
        0.0
    } else if a_plus_norm > 0.0 {
        2.0 * eps / (std::f64::consts::PI * a_plus_norm)
    } else {
        f64::INFINITY
    };
    let estimate10 = Estimate10 {
        eps,
        a_plus_norm,
        lower_bound,
        min_rayleigh,
        sampled_min_rayleigh: sampled,
        holds: min_rayleigh >= lower_bound - cfg.tolerances.rayleigh_tol,
    };

    let gamma = norm2(&data.g);
    let s_norm = norm2(&data.s);
    let bound = (gamma < 1.0).then(|| 2.0 * (s_norm + gamma / (1.0 - gamma) * (s_norm + mu.norm())));
    let estimate11 =
        Estimate11 { gamma, s_norm, a_plus_norm, bound, holds: bound.is_none_or(|b| a_plus_norm <= b + 1e-8) };

    Ok(SolveReport {
        structure: s,
        mu,
        k_norm: angle.norm(),
        k: angle.into_matrix(),
        l_op,
        restriction_matrix: restriction,
        riccati_residual: riccati,
        invariance_residual: invariance,
        restriction_spectrum: spectrum,
        estimate10,
        estimate11,
        convergence_trace: Vec::new(),
        cauchy: None,
        method,
        contour,
        margin: block::dissipativity_margin(a),
        a_norm: norm2(&full),
        c: None,
        maximal: krein::maximality_witness(&subspace).is_none(),
    })
}

fn sampled_min_rayleigh(l: &Subspace, samples: usize, seed: u64) -> f64 {
    if l.is_empty() || samples == 0 {
        return f64::INFINITY;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = l.structure();
    let k = l.dim();
    (0..samples)
        .map(|_| {
            let coeff = ComplexVector::from_fn(k, |_, _| {
                c64(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
            });
            let x = l.basis() * coeff;
            let jx = s.apply_j(&ComplexMatrix::from_column_slice(x.len(), 1, x.as_slice()));
            let num = (x.adjoint() * jx)[(0, 0)].re;
            num / x.norm_squared()
        })
        .fold(f64::INFINITY, f64::min)
}

fn solve_ud_at(a: &BlockOperator, mu: Complex64, cfg: &SolverConfig, quadrature: &QuadratureOptions) -> Result<SolveReport> {
    let margin = block::dissipativity_margin(a);
    if margin <= 0.0 {
        return Err(KreinError::NotUniformlyDissipative { margin });
    }
    let full = a.to_matrix();
    let contour = cfg.contour.contour_for(&full)?;
    let q = projector::riesz_projector_quadrature(&full, &contour, quadrature)?;
    let l = projector::invariant_subspace_from_projector(&full, &q, a.structure())?;
    let angle = krein::angle_operator_from_subspace(&l)?;
    assemble_report(a, angle.into_matrix(), mu, margin, Method::Quadrature, q.contour, cfg)
}

/// Solves a uniformly dissipative operator through the Riesz projector of
/// the upper half-plane. The graph is uniformly positive, so `||K|| < 1`.
pub fn solve_uniformly_dissipative(a: &BlockOperator, cfg: &SolverConfig) -> Result<SolveReport> {
    let margin = block::dissipativity_margin(a);
    if margin <= 0.0 {
        return Err(KreinError::NotUniformlyDissipative { margin });
    }
    let mu = resolve_mu(a, cfg, &[])?;
    solve_ud_at(a, mu, cfg, &cfg.quadrature)
}

struct Cell {
    n: usize,
    eps: f64,
    k_lifted: ComplexMatrix,
    entry: TraceEntry,
}

fn solve_cell(a: &BlockOperator, b: &ComplexMatrix, eps: f64, mu: Complex64, l_bound: f64, cfg: &SolverConfig) -> Result<Cell> {
    let n = b.ncols();
    let cell_op = regularize(&compress(a, b)?, eps)?;
    // Cells are cross-checked by the Cauchy tail and the polish, so the
    // doubling check is reserved for the final solve.
    let quadrature = QuadratureOptions { check_doubling: false, ..cfg.quadrature.clone() };
    let report = solve_ud_at(&cell_op, mu, cfg, &quadrature)?;
    let l_norm = norm2(&report.l_op);
    let data = block::transfer_at(&cell_op, mu)?;
    let scale = norm2(&data.s) + mu.norm();
    // The restriction of the regularized operator at mu is
    // i eps + S(mu + i eps) + G(mu + i eps) L(mu + i eps).
    let mut t_spectrum = numerics::eigenvalues(&report.restriction_matrix)?;
    projector::sort_spectrum(&mut t_spectrum);
    let checks_pass = report.k_norm < 1.0
        && l_norm <= l_bound * (1.0 + 1e-9)
        && report.riccati_residual <= cfg.tolerances.riccati_tol * scale;
    let k_lifted = &report.k * b.adjoint();
    Ok(Cell {
        n,
        eps,
        k_lifted,
        entry: TraceEntry {
            n,
            eps,
            k_norm: report.k_norm,
            l_norm,
            l_bound,
            riccati_residual: report.riccati_residual,
            k_step: None,
            t_spectrum,
            checks_pass,
        },
    })
}

fn cauchy_tail(steps: Vec<f64>, cfg: &SolverConfig) -> CauchyTail {
    let monotone_from = |start: usize| steps[start.min(steps.len())..].windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-13);
    let monotone_after = (0..=steps.len()).find(|&b| monotone_from(b));
    let tail = &steps[steps.len().saturating_sub(cfg.tail_len)..];
    let tail_max = tail.iter().copied().fold(0.0, f64::max);
    CauchyTail { monotone_after, tail_max, converged: tail_max <= cfg.tolerances.cauchy_tol, steps }
}

/// Greedily matches each target to the nearest unused eigenvalue.
fn match_eigenvalues(values: &[Complex64], targets: &[Complex64]) -> Vec<bool> {
    let mut used = vec![false; values.len()];
    for t in targets {
        let best = (0..values.len())
            .filter(|&i| !used[i])
            .min_by(|&i, &j| (values[i] - t).norm().total_cmp(&(values[j] - t).norm()));
        if let Some(i) = best {
            used[i] = true;
        }
    }
    used
}

fn spectral_selection(a: &BlockOperator, targets: &[Complex64]) -> Result<ComplexMatrix> {
    let full = a.to_matrix();
    let mut schur = SchurForm::new(&full)?;
    let select = match_eigenvalues(&schur.eigenvalues(), targets);
    let k = schur.reorder(&select);
    let l = Subspace::new(a.structure(), schur.leading_basis(k))?;
    Ok(krein::angle_operator_from_subspace(&l)?.into_matrix())
}

/// The full pipeline for a dissipative operator.
///
/// Every cell `(n, eps)` solves the uniformly dissipative operator
/// `P_n A P_n + i eps J` at a common `mu` and lifts its angle operator to
/// `H+` by zero extension. The `n = p` column gives the `eps -> 0` tail,
/// which must settle below `cauchy_tol`. The limit is then polished at
/// `eps = 0`: by quadrature when `A` is itself uniformly dissipative, else by
/// selecting the Schur vectors matching the limit of the cell spectra. A
/// polish is accepted only if it lands near the extrapolated `K`.
pub fn solve_theorem(a: &BlockOperator, cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let margin = block::dissipativity_margin(a);
    if margin < -1e-10 {
        return Err(KreinError::NotDissipative { margin });
    }
    let minus_margin = block::minus_block_margin(a);
    if minus_margin < -1e-10 {
        return Err(KreinError::ConditionIFailed { margin: minus_margin });
    }
    let s = a.structure();
    let dims = cfg.dims_for(s.p)?;
    let schedule = &cfg.eps_schedule;
    let mu = resolve_mu(a, cfg, schedule)?;
    let mut c: f64 = 0.0;
    for &eps in std::iter::once(&0.0).chain(schedule) {
        let data = block::transfer_at(a, mu + I * eps)?;
        c = c.max(norm2(&(data.s + identity(s.p) * (I * eps))));
    }
    let l_bound = 2.0 * (c + mu.norm());

    let embeddings = dims.iter().map(|&n| galerkin_embedding(&identity(s.p), n)).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, f64)> = (0..dims.len()).flat_map(|d| schedule.iter().map(move |&e| (d, e))).collect();
    let cells = jobs
        .par_iter()
        .map(|&(d, eps)| solve_cell(a, &embeddings[d], eps, mu, l_bound, cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut trace = Vec::with_capacity(cells.len());
    let mut steps = Vec::new();
    for (i, cell) in cells.iter().enumerate() {
        let mut entry = cell.entry.clone();
        if i > 0 && cells[i - 1].n == cell.n {
            let step = norm2(&(&cell.k_lifted - &cells[i - 1].k_lifted));
            entry.k_step = Some(step);
            if cell.n == s.p {
                steps.push(step);
            }
        }
        trace.push(entry);
    }
    let tail = cauchy_tail(steps, cfg);
    let last = cells.last().expect("schedule is nonempty");
    let last_step = tail.steps.last().copied().unwrap_or(0.0);
    let eps_last = last.eps;

    let near = |k: &ComplexMatrix| norm2(&(k - &last.k_lifted)) <= 10.0 * last_step + 10.0 * eps_last + 1e-6;
    let mut polished = None;
    if margin > 0.0 {
        if let Ok(r) = solve_ud_at(a, mu, cfg, &cfg.quadrature) {
            if near(&r.k) {
                polished = Some((r.k, Method::Quadrature, r.contour));
            }
        }
    }
    if polished.is_none() {
        let targets = &last.entry.t_spectrum;
        if let Ok(k) = spectral_selection(a, targets) {
            if near(&k) && numerics::norm2(&k) <= 1.0 + cfg.tolerances.norm_slack {
                polished = Some((k, Method::SpectralSelection, None));
            }
        }
    }
    let (k, method, contour) = polished.unwrap_or_else(|| {
        let k = &last.k_lifted;
        let norm = norm2(k);
        let k = if norm > 1.0 { k / c64(norm, 0.0) } else { k.clone() };
        (k, Method::Extrapolated, None)
    });

    let mut report = assemble_report(a, k, mu, margin.max(0.0), method, contour, cfg)?;
    report.convergence_trace = trace;
    report.c = Some(c);
    let converged = tail.converged;
    let reason = format!("largest of the last {} steps is {:e}", cfg.tail_len, tail.tail_max);
    report.cauchy = Some(tail);
    if !converged {
        return Err(KreinError::NoCauchyConvergence { reason, report: Box::new(report) });
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct MaximalityReport {
    pub margin: f64,
    /// `(mu, sigma_min(JA - mu))` at sampled points of the lower half-plane.
    pub samples: Vec<([f64; 2], f64)>,
    /// Every sample satisfies `sigma_min(JA - mu) >= |Im mu|`.
    pub resolvent_bound_holds: bool,
    pub pass: bool,
}

/// In finite dimension `JA` is maximal dissipative iff it is dissipative.
/// Its spectrum then lies in the closed upper half-plane and
/// `sigma_min(JA - mu) >= |Im mu|` below the real axis.
pub fn maximal_dissipativity_check(a: &BlockOperator) -> MaximalityReport {
    let margin = block::dissipativity_margin(a);
    let ja = a.structure().apply_j(&a.to_matrix());
    let points = [c64(0.0, -0.5), c64(0.0, -1.0), c64(0.0, -4.0), c64(1.0, -1.0), c64(-1.0, -1.0), c64(3.0, -0.25), c64(-2.0, -2.0)];
    let samples: Vec<([f64; 2], f64)> = points
        .iter()
        .map(|&mu| {
            let shifted = &ja - identity(ja.nrows()) * mu;
            ([mu.re, mu.im], numerics::sigma_min(&shifted))
        })
        .collect();
    let resolvent_bound_holds = samples.iter().all(|(mu, sigma)| *sigma >= mu[1].abs() * (1.0 - 1e-12));
    MaximalityReport { margin, samples, resolvent_bound_holds, pass: margin >= -1e-10 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{from_rows, real_matrix};

    fn zero() -> Complex64 {
        c64(0.0, 0.0)
    }

    fn one() -> Complex64 {
        c64(1.0, 0.0)
    }

    fn scalar(z: Complex64) -> ComplexMatrix {
        from_rows(&[vec![z]])
    }

    fn i_j() -> BlockOperator {
        BlockOperator::assemble(scalar(I), scalar(zero()), scalar(zero()), scalar(-I)).unwrap()
    }

    fn triangular() -> BlockOperator {
        BlockOperator::assemble(scalar(I), scalar(one()), scalar(zero()), scalar(-I)).unwrap()
    }

    fn s11() -> KreinStructure {
        KreinStructure::new(1, 1).unwrap()
    }

    #[test]
    fn regularize_examples() {
        let a = triangular();
        assert_eq!(regularize(&a, 0.0).unwrap().to_matrix(), a.to_matrix());
        let z = BlockOperator::assemble(scalar(zero()), scalar(zero()), scalar(zero()), scalar(zero())).unwrap();
        let r = regularize(&z, 1.0).unwrap();
        assert_eq!(r.to_matrix(), i_j().to_matrix());
        assert!((block::dissipativity_margin(&r) - 1.0).abs() < 1e-15);
        let shift = block::dissipativity_margin(&regularize(&a, 0.3).unwrap()) - block::dissipativity_margin(&a);
        assert!((shift - 0.3).abs() < 1e-12);
        assert!(regularize(&a, -1.0).is_err());
    }

    #[test]
    fn galerkin_examples() {
        let a = triangular();
        let t = galerkin_truncate(&a, 1, &identity(1)).unwrap();
        assert_eq!(t.to_matrix(), a.to_matrix());

        let d = BlockOperator::assemble(
            real_matrix(&[&[1.0, 0.0], &[0.0, 2.0]]),
            ComplexMatrix::zeros(2, 1),
            ComplexMatrix::zeros(1, 2),
            scalar(-I),
        )
        .unwrap();
        let t = galerkin_truncate(&d, 1, &identity(2)).unwrap();
        assert_eq!(t.a11()[(0, 0)], one());
        assert_eq!(t.structure().p, 1);

        let dup = ComplexMatrix::from_element(2, 2, one());
        assert!(matches!(galerkin_truncate(&d, 2, &dup), Err(KreinError::RankDeficientBasis)));
    }

    #[test]
    fn riccati_examples() {
        let (r, l) = riccati_residual(&i_j(), &AngleOperator::zero(s11()), I).unwrap();
        assert_eq!(r, 0.0);
        assert_eq!(l[(0, 0)], zero());
        let (r, l) = riccati_residual(&triangular(), &AngleOperator::zero(s11()), I).unwrap();
        assert_eq!(r, 0.0);
        assert_eq!(l[(0, 0)], zero());
        let k = AngleOperator::new(s11(), scalar(c64(0.5, 0.0))).unwrap();
        assert!(riccati_residual(&triangular(), &k, I).unwrap().0 > 0.1);
    }

    #[test]
    fn restriction_examples() {
        let d = BlockOperator::assemble(scalar(I), scalar(zero()), scalar(zero()), scalar(-I)).unwrap();
        let r = restriction_matrix(&d, &AngleOperator::zero(s11()), I * 2.0).unwrap();
        assert!((r[(0, 0)] - I).norm() < 1e-15);
        let r = restriction_matrix(&triangular(), &AngleOperator::zero(s11()), I).unwrap();
        assert!((r[(0, 0)] - I).norm() < 1e-15);
    }

    #[test]
    fn uniformly_dissipative_examples() {
        let cfg = SolverConfig::default();
        let r = solve_uniformly_dissipative(&i_j(), &cfg).unwrap();
        assert!(r.k_norm < 1e-12);
        assert!((r.restriction_spectrum[0] - I).norm() < 1e-10);
        assert!((r.estimate10.min_rayleigh - 1.0).abs() < 1e-12);
        assert!((r.estimate10.lower_bound - 2.0 / std::f64::consts::PI).abs() < 1e-12);
        assert!(r.estimate10.holds && r.estimate11.holds);

        let r = solve_uniformly_dissipative(&triangular(), &cfg).unwrap();
        assert!(r.k_norm < 1e-10);
        assert!(r.riccati_residual < 1e-10);
        assert!((r.restriction_spectrum[0] - I).norm() < 1e-10);

        let bad = i_j().scaled(c64(-1.0, 0.0));
        assert!(matches!(solve_uniformly_dissipative(&bad, &cfg), Err(KreinError::NotUniformlyDissipative { .. })));
    }

    #[test]
    fn theorem_fixed_point_and_triangular() {
        let cfg = SolverConfig::default();
        let r = solve_theorem(&i_j(), &cfg).unwrap();
        assert!(r.k_norm < 1e-12);
        assert!(r.convergence_trace.iter().all(|t| t.k_norm < 1e-12));
        assert!((r.restriction_spectrum[0] - I).norm() < 1e-10);
        assert!(r.acceptance_triple());

        let r = solve_theorem(&triangular(), &cfg).unwrap();
        assert!(r.k_norm < 1e-10 && r.acceptance_triple());
    }

    #[test]
    fn theorem_neutral_jordan_block() {
        // J-selfadjoint nilpotent: the only invariant line is span(1, -1),
        // which is neutral, so K = -1.
        let a = BlockOperator::decompose(&real_matrix(&[&[1.0, 1.0], &[-1.0, -1.0]]), s11()).unwrap();
        assert!(block::dissipativity_margin(&a).abs() < 1e-14);
        let r = solve_theorem(&a, &SolverConfig::default()).unwrap();
        assert_eq!(r.method, Method::SpectralSelection);
        assert!((r.k[(0, 0)] + one()).norm() < 1e-6, "{:?}", r.k);
        assert!(r.acceptance_triple(), "{r:#?}");
        assert!(r.min_im_restriction().abs() < 1e-6);
    }

    #[test]
    fn theorem_rejects_non_dissipative() {
        let bad = i_j().scaled(c64(-1.0, 0.0));
        assert!(matches!(solve_theorem(&bad, &SolverConfig::default()), Err(KreinError::NotDissipative { .. })));
        let swap = BlockOperator::decompose(&real_matrix(&[&[0.0, 1.0], &[1.0, 0.0]]), s11()).unwrap();
        assert!(matches!(solve_theorem(&swap, &SolverConfig::default()), Err(KreinError::NotDissipative { .. })));
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig { eps_schedule: vec![1.0, 0.5], ..SolverConfig::default() };
        assert!(cfg.validate().is_err());
        cfg.eps_schedule = vec![0.5, 1.0, 1e-5];
        assert!(cfg.validate().is_err());
        let json = serde_json::to_string(&SolverConfig::default()).unwrap();
        let back: SolverConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.eps_schedule, default_eps_schedule());
        let partial: SolverConfig = serde_json::from_str(r#"{"seed": 9}"#).unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(default_galerkin_dims(5), vec![2, 3, 5]);
        assert_eq!(default_galerkin_dims(1), vec![1]);
    }

    #[test]
    fn maximal_dissipativity_examples() {
        let r = maximal_dissipativity_check(&i_j());
        assert!(r.pass && r.resolvent_bound_holds);
        let r = maximal_dissipativity_check(&i_j().scaled(c64(-1.0, 0.0)));
        assert!(!r.pass && !r.resolvent_bound_holds);
    }
}
