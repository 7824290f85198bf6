//! Random dissipative instances and the batch property suite.
//!
//! Instances are built as `A = J (R + iH)` with `R` Hermitian and
//! `H >= margin`, so that `Im(JA) = H` and the dissipativity margin is exactly
//! `margin`. Draws come from a ChaCha20 stream seeded by the instance seed.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::{self, AsymptoticsOptions, BlockOperator};
use crate::error::{KreinError, Result};
use crate::krein::KreinStructure;
use crate::numerics::{c64, identity, min_hermitian_eigenvalue, ComplexMatrix, I};
use crate::solver::{self, SolveReport, SolverConfig};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct InstanceSpec {
    pub p: usize,
    pub m: usize,
    /// Target dissipativity margin, `lambda_min(H)`.
    pub margin: f64,
    /// Adds `a22_decay (j + 1) / m` to the `j`-th diagonal entry of `H22`.
    pub a22_decay: f64,
    /// Scale of the off-diagonal blocks of `R` and `H`.
    pub coupling_scale: f64,
    /// Scale of the Hermitian part `R`.
    pub r_scale: f64,
    /// Scale of the random positive part of `H` before the shift.
    pub h_spread: f64,
    /// Use `A = J (R - iH)` instead, a negative control.
    pub anti_dissipative: bool,
    pub seed: u64,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self {
            p: 3,
            m: 3,
            margin: 0.5,
            a22_decay: 1.0,
            coupling_scale: 1.0,
            r_scale: 1.0,
            h_spread: 1.0,
            anti_dissipative: false,
            seed: 0,
        }
    }
}

impl InstanceSpec {
    pub fn validate(&self) -> Result<()> {
        KreinStructure::new(self.p, self.m)?;
        let finite = [self.margin, self.a22_decay, self.coupling_scale, self.r_scale, self.h_spread];
        if finite.iter().any(|x| !x.is_finite()) || self.margin < 0.0 || self.h_spread < 0.0 {
            return Err(KreinError::InvalidArgument("instance parameters must be finite, margin and h_spread nonnegative".into()));
        }
        Ok(())
    }
}

fn ginibre(rng: &mut ChaCha20Rng, n: usize) -> ComplexMatrix {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut g = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            g[(i, j)] = c64(re * scale, im * scale);
        }
    }
    g
}

fn scale_off_diagonal(h: &mut ComplexMatrix, p: usize, factor: f64) {
    let n = h.nrows();
    for i in 0..n {
        for j in 0..n {
            if (i < p) != (j < p) {
                h[(i, j)] *= factor;
            }
        }
    }
}

/// Deterministic dissipative instance with margin exactly `spec.margin`.
pub fn random_dissipative(spec: &InstanceSpec) -> Result<BlockOperator> {
    spec.validate()?;
    let (p, m) = (spec.p, spec.m);
    let n = p + m;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let root_n = (n as f64).sqrt();

    let g = ginibre(&mut rng, n);
    let mut r = (&g + g.adjoint()) * c64(0.5 * spec.r_scale / root_n, 0.0);
    let g = ginibre(&mut rng, n);
    let mut h = &g * g.adjoint() * c64(spec.h_spread / n as f64, 0.0);
    scale_off_diagonal(&mut r, p, spec.coupling_scale);
    scale_off_diagonal(&mut h, p, spec.coupling_scale);
    for j in 0..m {
        h[(p + j, p + j)] += spec.a22_decay * (j + 1) as f64 / m as f64;
    }
    // Exact Hermitian symmetry before the shift.
    let h = (&h + h.adjoint()) * c64(0.5, 0.0);
    let shift = spec.margin - min_hermitian_eigenvalue(&h);
    let h = h + identity(n) * c64(shift, 0.0);

    let sign = if spec.anti_dissipative { -1.0 } else { 1.0 };
    let ja = r + h * (I * sign);
    let s = KreinStructure::new(p, m)?;
    BlockOperator::decompose(&s.apply_j(&ja), s)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteOptions {
    /// Regularization levels for the uniform-positivity and norm estimates.
    pub estimate_eps: Vec<f64>,
    pub g_samples: usize,
    pub factorization_mus: usize,
    pub identity_trials: usize,
    pub run_asymptotics: bool,
    /// Tolerance for the algebraic identities.
    pub identity_tol: f64,
    pub keep_artifacts: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            estimate_eps: vec![1.0, 0.1, 0.01],
            g_samples: 50,
            factorization_mus: 10,
            identity_trials: 5,
            run_asymptotics: true,
            identity_tol: 1e-9,
            keep_artifacts: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Pass,
    Fail,
    NotDissipative,
    NoConvergence,
    Error,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// The worst value seen for this property.
    pub value: f64,
}

/// Per-instance margins, one CSV row each.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RowMetrics {
    #[serde(rename = "K_norm")]
    pub k_norm: f64,
    pub riccati_residual: f64,
    pub invariance_residual: f64,
    pub min_im_restriction: f64,
    /// `min [x,x]/||x||^2 - 2 eps / (pi ||A+||)` over the regularized solves.
    pub estimate10_slack: f64,
    /// `bound - ||A+||` over the regularized solves and the final solve.
    pub estimate11_slack: f64,
    /// `max ||G(lambda)|| / (2 + 2a/eps)`.
    pub g_bound_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteRow {
    pub spec: InstanceSpec,
    pub measured_margin: f64,
    pub status: RowStatus,
    pub error: Option<String>,
    pub checks: Vec<Check>,
    pub metrics: RowMetrics,
    /// Steps along `eps` settle into monotone decrease within the burn-in.
    pub monotone_tail: Option<bool>,
    pub method: Option<solver::Method>,
    /// The offending operator, for replay.
    pub artifact: Option<BlockOperator>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
    pub passed: usize,
    pub failed: usize,
    pub no_convergence: usize,
    /// Share of strictly dissipative rows with a monotone tail.
    pub monotone_rate: Option<f64>,
    /// Worst value per named check.
    pub worst: Vec<Check>,
    pub pass: bool,
}

fn check(name: &str, pass: bool, value: f64) -> Check {
    Check { name: name.into(), pass, value }
}

fn upper_samples(rng: &mut ChaCha8Rng, count: usize, scale: f64) -> Vec<Complex64> {
    (0..count)
        .map(|k| {
            let re = scale * (2.0 * rng.random::<f64>() - 1.0);
            // Every third sample sits on the real axis.
            let im = if k % 3 == 0 { 0.0 } else { scale * rng.random::<f64>() };
            c64(re, im)
        })
        .collect()
}

/// Properties that do not depend on the solve.
fn structural_checks(a: &BlockOperator, mu: Complex64, opts: &SuiteOptions, cfg: &SolverConfig, rng: &mut ChaCha8Rng) -> Result<(Vec<Check>, f64)> {
    let mut checks = Vec::new();
    let scale = 1.0 + a.norm();

    let mut worst: f64 = 0.0;
    for _ in 0..opts.factorization_mus {
        let z = c64(scale * (2.0 * rng.random::<f64>() - 1.0), 0.05 + scale * rng.random::<f64>());
        worst = worst.max(block::factorization_residual(a, z)?);
    }
    checks.push(check("factorization", worst <= opts.identity_tol, worst));

    let mut worst: f64 = 0.0;
    for _ in 0..opts.identity_trials {
        let eps = 1.0 - rng.random::<f64>();
        let (g, s) = block::perturbation_identity_defects(a, mu, eps)?;
        let lambda = c64(scale * (2.0 * rng.random::<f64>() - 1.0), 0.05 + scale * rng.random::<f64>());
        let nu = c64(scale * (2.0 * rng.random::<f64>() - 1.0), 0.05 + scale * rng.random::<f64>());
        let r = block::g_resolvent_identity_defect(a, lambda, nu)?;
        worst = worst.max(g).max(s).max(r);
    }
    checks.push(check("identities", worst <= opts.identity_tol, worst));

    // The bound on G and the asymptotics need a uniformly dissipative operator.
    let margin = block::dissipativity_margin(a);
    let ud = if margin > 1e-3 { a.clone() } else { solver::regularize(a, 0.1)? };
    let eps = block::dissipativity_margin(&ud);
    let lambdas = upper_samples(rng, opts.g_samples, scale);
    let g = block::g_uniform_bound_check(&ud, eps, &lambdas)?;
    checks.push(check("g_bound", g.holds, g.max_ratio));

    if opts.run_asymptotics {
        let r = 4.0 * (1.0 + ud.norm());
        let asym = block::resolvent_asymptotics_check(&ud, &[r, 2.0 * r], &AsymptoticsOptions { seed: cfg.seed, ..AsymptoticsOptions::default() })?;
        checks.push(check("asymptotics", asym.pass(), asym.c_ratio));
    }
    Ok((checks, g.max_ratio))
}

fn solve_checks(a: &BlockOperator, report: &SolveReport, opts: &SuiteOptions, cfg: &SolverConfig, metrics: &mut RowMetrics) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    metrics.k_norm = report.k_norm;
    metrics.riccati_residual = report.riccati_residual;
    metrics.invariance_residual = report.invariance_residual;
    metrics.min_im_restriction = report.min_im_restriction();
    checks.push(check("acceptance_triple", report.acceptance_triple(), report.invariance_residual / report.a_norm.max(f64::MIN_POSITIVE)));
    let cells_ok = report.convergence_trace.iter().all(|t| t.checks_pass);
    checks.push(check("cells", cells_ok, report.convergence_trace.iter().map(|t| t.k_norm).fold(0.0, f64::max)));

    let mut e10 = f64::INFINITY;
    let mut e11 = report.estimate11.slack().unwrap_or(f64::INFINITY);
    let mut e10_ok = true;
    let mut e11_ok = report.estimate11.holds;
    for &eps in &opts.estimate_eps {
        let reg = solver::regularize(a, eps)?;
        let r = solver::solve_uniformly_dissipative(&reg, cfg)?;
        e10 = e10.min(r.estimate10.slack());
        e10_ok &= r.estimate10.holds;
        e11 = e11.min(r.estimate11.slack().unwrap_or(f64::INFINITY));
        e11_ok &= r.estimate11.holds;
    }
    metrics.estimate10_slack = e10;
    metrics.estimate11_slack = e11;
    checks.push(check("estimate10", e10_ok, e10));
    checks.push(check("estimate11", e11_ok, e11));
    Ok(checks)
}

fn empty_row(spec: InstanceSpec) -> SuiteRow {
    SuiteRow {
        spec,
        measured_margin: f64::NAN,
        status: RowStatus::Error,
        error: None,
        checks: Vec::new(),
        metrics: RowMetrics::default(),
        monotone_tail: None,
        method: None,
        artifact: None,
    }
}

fn evaluate(a: &BlockOperator, spec: InstanceSpec, cfg: &SolverConfig, opts: &SuiteOptions) -> SuiteRow {
    let mut row = empty_row(spec);
    row.measured_margin = block::dissipativity_margin(a);
    let seed = row.spec.seed;
    let outcome = (|| -> Result<RowStatus> {
        let (report, converged) = match solver::solve_theorem(a, cfg) {
            Ok(r) => (r, true),
            Err(KreinError::NoCauchyConvergence { report, .. }) => (*report, false),
            Err(e) => return Err(e),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let (mut checks, g_ratio) = structural_checks(a, report.mu, opts, cfg, &mut rng)?;
        row.metrics.g_bound_ratio = g_ratio;
        checks.extend(solve_checks(a, &report, opts, cfg, &mut row.metrics)?);
        row.monotone_tail = report.cauchy.as_ref().map(|c| c.monotone_after.is_some_and(|b| b <= cfg.burn_in));
        row.method = Some(report.method);
        let all = checks.iter().all(|c| c.pass);
        row.checks = checks;
        Ok(match (converged, all) {
            (false, _) => RowStatus::NoConvergence,
            (true, true) => RowStatus::Pass,
            (true, false) => RowStatus::Fail,
        })
    })();
    row.status = match outcome {
        Ok(s) => s,
        Err(KreinError::NotDissipative { .. }) => RowStatus::NotDissipative,
        Err(e) => {
            row.error = Some(e.to_string());
            RowStatus::Error
        }
    };
    if row.status != RowStatus::Pass && opts.keep_artifacts {
        row.artifact = Some(a.clone());
    }
    row
}

/// Generates one instance and evaluates every property on it.
pub fn evaluate_instance(spec: &InstanceSpec, cfg: &SolverConfig, opts: &SuiteOptions) -> SuiteRow {
    match random_dissipative(spec) {
        Ok(a) => evaluate(&a, spec.clone(), cfg, opts),
        Err(e) => {
            let mut row = empty_row(spec.clone());
            row.error = Some(e.to_string());
            row
        }
    }
}

/// Evaluates a given operator with the same checks. `seed` drives the
/// random sample points.
pub fn evaluate_operator(a: &BlockOperator, seed: u64, cfg: &SolverConfig, opts: &SuiteOptions) -> SuiteRow {
    let s = a.structure();
    let spec = InstanceSpec { p: s.p, m: s.m, margin: block::dissipativity_margin(a).max(0.0), seed, ..InstanceSpec::default() };
    evaluate(a, spec, cfg, opts)
}

/// `count` instances with `p` and `m` drawn uniformly from `1..=max_dim` and
/// margins taken cyclically from `margins`. Instance seeds are `seed + k`.
pub fn mixed_specs(count: usize, max_dim: usize, margins: &[f64], seed: u64) -> Vec<InstanceSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| InstanceSpec {
            p: rng.random_range(1..=max_dim.max(1)),
            m: rng.random_range(1..=max_dim.max(1)),
            margin: margins.get(k % margins.len().max(1)).copied().unwrap_or(0.0),
            seed: seed.wrapping_add(k as u64),
            ..InstanceSpec::default()
        })
        .collect()
}

/// Evaluates all instances in parallel; rows come back in input order.
pub fn run_property_suite(specs: &[InstanceSpec], cfg: &SolverConfig, opts: &SuiteOptions) -> SuiteReport {
    let rows: Vec<SuiteRow> = specs.par_iter().map(|s| evaluate_instance(s, cfg, opts)).collect();
    summarize(rows)
}

fn summarize(rows: Vec<SuiteRow>) -> SuiteReport {
    let passed = rows.iter().filter(|r| r.status == RowStatus::Pass).count();
    let no_convergence = rows.iter().filter(|r| r.status == RowStatus::NoConvergence).count();
    let strict: Vec<&SuiteRow> = rows.iter().filter(|r| r.measured_margin > 1e-10 && r.monotone_tail.is_some()).collect();
    let monotone_rate = (!strict.is_empty())
        .then(|| strict.iter().filter(|r| r.monotone_tail == Some(true)).count() as f64 / strict.len() as f64);

    let mut worst: Vec<Check> = Vec::new();
    for row in &rows {
        for c in &row.checks {
            match worst.iter_mut().find(|w| w.name == c.name) {
                Some(w) => {
                    w.pass &= c.pass;
                    // Slack-type checks are worst when small, ratio-type when large.
                    w.value = if c.name.starts_with("estimate") { w.value.min(c.value) } else { w.value.max(c.value) };
                }
                None => worst.push(c.clone()),
            }
        }
    }
    let failed = rows.len() - passed;
    SuiteReport { pass: failed == 0, passed, failed, no_convergence, monotone_rate, worst, rows }
}

pub const CSV_HEADER: [&str; 11] = [
    "seed",
    "p",
    "m",
    "margin",
    "K_norm",
    "riccati_residual",
    "invariance_residual",
    "min_im_restriction",
    "estimate10_slack",
    "estimate11_slack",
    "g_bound_ratio",
];

pub fn write_csv<W: Write>(rows: &[SuiteRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            r.spec.seed.to_string(),
            r.spec.p.to_string(),
            r.spec.m.to_string(),
            r.measured_margin.to_string(),
            m.k_norm.to_string(),
            m.riccati_residual.to_string(),
            m.invariance_residual.to_string(),
            m.min_im_restriction.to_string(),
            m.estimate10_slack.to_string(),
            m.estimate11_slack.to_string(),
            m.g_bound_ratio.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Summary over rows built one by one.
pub fn suite_from_rows(rows: Vec<SuiteRow>) -> SuiteReport {
    summarize(rows)
}
