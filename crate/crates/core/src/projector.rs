//! Riesz projectors onto the spectral subspace of the upper half-plane.
//!
//! The quadrature path integrates `(lambda - A)^{-1}` over the closed
//! contour made of the segment `[-R, R]` and the upper half-circle of
//! radius `R`, with Gauss-Legendre panels. The exact path reorders a Schur
//! form and solves a triangular Sylvester equation. The two are independent
//! and cross-checked in the tests.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KreinError, Result};
use crate::krein::{KreinStructure, Subspace};
use crate::numerics::{self, c64, identity, norm2, ComplexMatrix, SchurForm, I};

/// Points per Gauss-Legendre panel.
pub const PANEL_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    /// Trapezoid rule on the arc, Gauss-Legendre panels on the segment.
    Trapezoid,
    #[default]
    GaussSegments,
}

/// Upper semicircle `[-R, R]` plus the half-circle `|lambda| = R`, positively
/// oriented.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub radius: f64,
    pub nodes: usize,
    pub rule: QuadratureRule,
}

impl Contour {
    pub fn new(radius: f64, nodes: usize, rule: QuadratureRule) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(KreinError::InvalidArgument(format!("contour radius must be positive, got {radius}")));
        }
        if nodes < 16 || !nodes.is_multiple_of(2) {
            return Err(KreinError::InvalidArgument(format!("node count must be even and at least 16, got {nodes}")));
        }
        Ok(Self { radius, nodes, rule })
    }

    /// `R = 2 max(1, spectral radius of A)`.
    pub fn auto(a: &ComplexMatrix, nodes: usize, rule: QuadratureRule) -> Result<Self> {
        let rho = numerics::eigenvalues(a)?.iter().map(|z| z.norm()).fold(0.0, f64::max);
        Self::new(2.0 * rho.max(1.0), nodes, rule)
    }

    /// Distance from `z` to the contour.
    pub fn distance(&self, z: Complex64) -> f64 {
        let r = self.radius;
        let seg = if z.re.abs() <= r { z.im.abs() } else { (z.re.abs() - r).hypot(z.im) };
        let arc = if z.im >= 0.0 { (z.norm() - r).abs() } else { (z - r).norm().min((z + r).norm()) };
        seg.min(arc)
    }

    /// Strictly enclosed: `Im z > 0` and `|z| < R`.
    pub fn encloses(&self, z: Complex64) -> bool {
        z.im > 0.0 && z.norm() < self.radius
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureOptions {
    /// Minimal admissible eigenvalue distance to the contour, relative to `R`.
    pub gap_min_rel: f64,
    /// Every pole must lie outside the Bernstein ellipse of this parameter
    /// around each panel.
    pub bernstein_rho: f64,
    /// Recompute with every panel bisected and compare.
    pub check_doubling: bool,
    pub doubling_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { gap_min_rel: 1e-6, bernstein_rho: 3.0, check_doubling: true, doubling_tol: 1e-8, max_panels: 1 << 14 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectorReport {
    #[serde(rename = "Q_plus", with = "crate::serde_complex::matrix")]
    pub q_plus: ComplexMatrix,
    /// `||Q^2 - Q||`.
    pub idempotency_defect: f64,
    /// `||AQ - QA||`.
    pub commutation_defect: f64,
    #[serde(with = "crate::serde_complex::vec")]
    pub enclosed_eigenvalues: Vec<Complex64>,
    #[serde(with = "crate::serde_complex::scalar")]
    pub trace: Complex64,
    /// Contour actually used; absent for the exact projector.
    pub contour: Option<Contour>,
    /// Resolvent evaluations in the returned rule.
    pub nodes_used: usize,
    /// `||Q_N - Q_2N||` when the doubling check ran.
    pub doubling_change: Option<f64>,
}

impl ProjectorReport {
    fn new(a: &ComplexMatrix, q_plus: ComplexMatrix, enclosed: Vec<Complex64>) -> Self {
        let idempotency_defect = norm2(&(&q_plus * &q_plus - &q_plus));
        let commutation_defect = norm2(&(a * &q_plus - &q_plus * a));
        let trace = q_plus.trace();
        Self {
            q_plus,
            idempotency_defect,
            commutation_defect,
            enclosed_eigenvalues: enclosed,
            trace,
            contour: None,
            nodes_used: 0,
            doubling_change: None,
        }
    }

    /// `|trace - round(trace)|`.
    pub fn trace_defect(&self) -> f64 {
        (self.trace.re - self.trace.re.round()).hypot(self.trace.im)
    }

    /// Idempotency `<= 1e-8`, commutation `<= 1e-8 ||A||`, and the trace
    /// within `1e-6` of the enclosed eigenvalue count.
    pub fn meets_contract(&self, a_norm: f64) -> bool {
        self.idempotency_defect <= 1e-8
            && self.commutation_defect <= 1e-8 * a_norm.max(f64::MIN_POSITIVE)
            && (self.trace - c64(self.enclosed_eigenvalues.len() as f64, 0.0)).norm() <= 1e-6
    }
}

/// Sort key for spectra: `Im` descending, then `Re` ascending.
pub fn sort_spectrum(values: &mut [Complex64]) {
    values.sort_by(|a, b| b.im.total_cmp(&a.im).then(a.re.total_cmp(&b.re)));
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Piece {
    /// `lambda = t`, `t in [-R, R]`.
    Segment,
    /// `lambda = R e^{i t}`, `t in [0, pi]`.
    Arc,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    piece: Piece,
    a: f64,
    b: f64,
}

fn bernstein_rho(w: Complex64) -> f64 {
    let root = (w * w - 1.0).sqrt();
    (w + root).norm().max((w - root).norm())
}

/// Image of a pole in the parameter of `piece`.
fn pole_parameter(piece: Piece, z: Complex64, radius: f64) -> Complex64 {
    match piece {
        Piece::Segment => z,
        Piece::Arc => {
            let mut arg = z.im.atan2(z.re);
            if arg < -PI / 2.0 {
                arg += 2.0 * PI;
            }
            c64(arg, -(z.norm() / radius).ln())
        }
    }
}

fn panel_ok(panel: &Panel, poles: &[Complex64], radius: f64, rho_min: f64) -> bool {
    let c = 0.5 * (panel.a + panel.b);
    let h = 0.5 * (panel.b - panel.a);
    poles.iter().all(|&z| {
        if panel.piece == Piece::Arc && z.norm() == 0.0 {
            return true;
        }
        bernstein_rho((pole_parameter(panel.piece, z, radius) - c) / h) >= rho_min
    })
}

fn uniform_panels(piece: Piece, a: f64, b: f64, count: usize) -> Vec<Panel> {
    let count = count.max(1);
    let h = (b - a) / count as f64;
    (0..count)
        .map(|k| Panel { piece, a: a + h * k as f64, b: if k + 1 == count { b } else { a + h * (k + 1) as f64 } })
        .collect()
}

/// Bisects panels until every pole is far enough in the Bernstein sense.
fn refine(panels: Vec<Panel>, poles: &[Complex64], radius: f64, opts: &QuadratureOptions) -> Result<Vec<Panel>> {
    let mut out = Vec::with_capacity(panels.len());
    let mut stack: Vec<Panel> = panels.into_iter().rev().collect();
    while let Some(p) = stack.pop() {
        if panel_ok(&p, poles, radius, opts.bernstein_rho) {
            out.push(p);
        } else {
            if out.len() + stack.len() + 2 > opts.max_panels {
                return Err(KreinError::QuadratureNotConverged { change: f64::INFINITY });
            }
            let mid = 0.5 * (p.a + p.b);
            stack.push(Panel { b: p.b, a: mid, ..p });
            stack.push(Panel { b: mid, ..p });
        }
    }
    Ok(out)
}

fn bisect_all(panels: &[Panel]) -> Vec<Panel> {
    panels
        .iter()
        .flat_map(|p| {
            let mid = 0.5 * (p.a + p.b);
            [Panel { b: mid, ..*p }, Panel { a: mid, ..*p }]
        })
        .collect()
}

/// `(lambda, weight * dlambda/dt)` for one panel.
fn panel_nodes(panel: &Panel, rule: &[(f64, f64)], radius: f64) -> Vec<(Complex64, Complex64)> {
    let c = 0.5 * (panel.a + panel.b);
    let h = 0.5 * (panel.b - panel.a);
    rule.iter()
        .map(|&(x, w)| {
            let t = c + h * x;
            match panel.piece {
                Piece::Segment => (c64(t, 0.0), c64(h * w, 0.0)),
                Piece::Arc => {
                    let lambda = Complex64::from_polar(radius, t);
                    (lambda, I * lambda * (h * w))
                }
            }
        })
        .collect()
}

fn trapezoid_arc_nodes(count: usize, radius: f64) -> Vec<(Complex64, Complex64)> {
    let count = count.max(1);
    let h = PI / count as f64;
    (0..=count)
        .map(|k| {
            let lambda = Complex64::from_polar(radius, h * k as f64);
            let w = if k == 0 || k == count { 0.5 * h } else { h };
            (lambda, I * lambda * w)
        })
        .collect()
}

struct Integrated {
    sum: ComplexMatrix,
    /// Upper bound for the smallest `sigma_min(lambda - A)` over the nodes.
    sigma_upper: f64,
    nodes: usize,
}

/// Sums `w (lambda - A)^{-1}` over node groups. Groups are evaluated in
/// parallel and reduced in their given order.
fn integrate(a: &ComplexMatrix, groups: &[Vec<(Complex64, Complex64)>]) -> Integrated {
    let n = a.nrows();
    let root_n = (n as f64).sqrt();
    let partial: Vec<(ComplexMatrix, f64)> = groups
        .par_iter()
        .map(|group| {
            let mut acc = ComplexMatrix::zeros(n, n);
            let mut sigma = f64::INFINITY;
            for &(lambda, w) in group {
                match numerics::resolvent(a, lambda) {
                    Some(r) => {
                        sigma = sigma.min(root_n / r.norm());
                        acc += r * w;
                    }
                    None => sigma = 0.0,
                }
            }
            (acc, sigma)
        })
        .collect();
    let mut sum = ComplexMatrix::zeros(n, n);
    let mut sigma_upper = f64::INFINITY;
    for (acc, sigma) in partial {
        sum += acc;
        sigma_upper = sigma_upper.min(sigma);
    }
    Integrated { sum: sum / (2.0 * PI * I), sigma_upper, nodes: groups.iter().map(Vec::len).sum() }
}

fn node_groups(panels: &[Panel], trapezoid_arc: Option<usize>, radius: f64, rule: &[(f64, f64)]) -> Vec<Vec<(Complex64, Complex64)>> {
    let mut groups: Vec<_> = panels.iter().map(|p| panel_nodes(p, rule, radius)).collect();
    if let Some(count) = trapezoid_arc {
        groups.extend(trapezoid_arc_nodes(count, radius).chunks(PANEL_ORDER).map(<[_]>::to_vec));
    }
    groups
}

/// `Q+ = (2 pi i)^{-1} closed-integral (lambda - A)^{-1} d lambda` over the
/// upper semicircle.
///
/// Panels start uniform, with the base node count split between segment and
/// arc in proportion to their lengths, and are bisected until every
/// eigenvalue of `A` lies outside the Bernstein ellipse of each panel. The
/// eigenvalues only shape the mesh; the projector itself comes from the
/// resolvent values.
pub fn riesz_projector_quadrature(a: &ComplexMatrix, contour: &Contour, opts: &QuadratureOptions) -> Result<ProjectorReport> {
    if !a.is_square() {
        return Err(KreinError::DimensionMismatch("projector needs a square matrix".into()));
    }
    numerics::ensure_finite(a)?;
    let contour = Contour::new(contour.radius, contour.nodes, contour.rule)?;
    let radius = contour.radius;
    let threshold = opts.gap_min_rel * radius;
    let poles = numerics::eigenvalues(a)?;
    if let Some(distance) = poles.iter().map(|&z| contour.distance(z)).reduce(f64::min) {
        if distance < threshold {
            return Err(KreinError::ContourTooClose { distance, threshold });
        }
    }

    let arc_nodes = ((contour.nodes as f64) * PI / (PI + 2.0)).round() as usize;
    let seg_nodes = contour.nodes - arc_nodes;
    let per_panel = |count: usize| count.div_ceil(PANEL_ORDER);
    let mut panels = uniform_panels(Piece::Segment, -radius, radius, per_panel(seg_nodes));
    let trapezoid_arc = match contour.rule {
        QuadratureRule::GaussSegments => {
            panels.extend(uniform_panels(Piece::Arc, 0.0, PI, per_panel(arc_nodes)));
            None
        }
        QuadratureRule::Trapezoid => Some(arc_nodes),
    };
    let panels = refine(panels, &poles, radius, opts)?;

    let gl = GaussLegendre::new(NonZeroUsize::new(PANEL_ORDER).expect("nonzero order"));
    let rule = gl.as_node_weight_pairs();

    let coarse = integrate(a, &node_groups(&panels, trapezoid_arc, radius, rule));
    let (result, change) = if opts.check_doubling {
        let fine = integrate(a, &node_groups(&bisect_all(&panels), trapezoid_arc.map(|c| 2 * c), radius, rule));
        let change = norm2(&(&fine.sum - &coarse.sum));
        (fine, Some(change))
    } else {
        (coarse, None)
    };
    if result.sigma_upper < threshold {
        return Err(KreinError::ContourTooClose { distance: result.sigma_upper, threshold });
    }
    if let Some(change) = change {
        if change.is_nan() || change > opts.doubling_tol {
            return Err(KreinError::QuadratureNotConverged { change });
        }
    }

    let mut enclosed: Vec<Complex64> = poles.into_iter().filter(|&z| contour.encloses(z)).collect();
    sort_spectrum(&mut enclosed);
    let mut report = ProjectorReport::new(a, result.sum, enclosed);
    report.contour = Some(contour);
    report.nodes_used = result.nodes;
    report.doubling_change = change;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// `Im lambda > 0`; eigenvalues with `|Im lambda| < tol` are rejected.
    UpperOpen { tol: f64 },
    /// `Im lambda >= -tol`.
    UpperClosed { tol: f64 },
}

/// Projector onto the generalized eigenspaces of `region`, along the
/// complementary ones, from a reordered Schur form.
pub fn riesz_projector_exact(a: &ComplexMatrix, region: Region) -> Result<ProjectorReport> {
    if !a.is_square() {
        return Err(KreinError::DimensionMismatch("projector needs a square matrix".into()));
    }
    let mut schur = SchurForm::new(a)?;
    let values = schur.eigenvalues();
    let select: Vec<bool> = match region {
        Region::UpperOpen { tol } => {
            if let Some(&z) = values.iter().find(|z| z.im.abs() < tol) {
                return Err(KreinError::BoundaryEigenvalue { eigenvalue: z, tol });
            }
            values.iter().map(|z| z.im > 0.0).collect()
        }
        Region::UpperClosed { tol } => values.iter().map(|z| z.im >= -tol).collect(),
    };
    let mut selected: Vec<Complex64> = values.iter().zip(&select).filter(|(_, &s)| s).map(|(z, _)| *z).collect();
    sort_spectrum(&mut selected);
    let q = projector_from_schur(&mut schur, &select);
    Ok(ProjectorReport::new(a, q, selected))
}

/// Spectral projector for the selected diagonal entries of a Schur form:
/// `U [[I, -Y], [0, 0]] U*` with `T11 Y - Y T22 = -T12`.
pub(crate) fn projector_from_schur(schur: &mut SchurForm, select: &[bool]) -> ComplexMatrix {
    let n = schur.dim();
    let k = schur.reorder(select);
    let t = &schur.upper;
    let t11 = t.view((0, 0), (k, k)).into_owned();
    let t12 = t.view((0, k), (k, n - k)).into_owned();
    let t22 = t.view((k, k), (n - k, n - k)).into_owned();
    let y = numerics::sylvester_triangular(&t11, &t22, &(-t12));
    let mut inner = ComplexMatrix::zeros(n, n);
    inner.view_mut((0, 0), (k, k)).copy_from(&identity(k));
    inner.view_mut((0, k), (k, n - k)).copy_from(&(-y));
    &schur.unitary * inner * schur.unitary.adjoint()
}

/// Orthonormal basis of `range Q+`.
///
/// The rank is `round(trace Q+)`; the singular values of `Q+` must show a
/// clear gap at that index. A zero projector gives the empty subspace.
pub fn invariant_subspace_from_projector(a: &ComplexMatrix, q: &ProjectorReport, s: KreinStructure) -> Result<Subspace> {
    let n = s.dim();
    if a.shape() != (n, n) || q.q_plus.shape() != (n, n) {
        return Err(KreinError::DimensionMismatch(format!("expected {n}x{n} operator and projector")));
    }
    let trace = q.trace.re;
    let rank = trace.round().max(0.0) as usize;
    let (basis, sv) = numerics::dominant_left_singular_vectors(&q.q_plus, rank.min(n));
    let above = if rank == 0 { f64::INFINITY } else { sv.get(rank - 1).copied().unwrap_or(0.0) };
    let below = sv.get(rank).copied().unwrap_or(0.0);
    let scale = sv.first().copied().unwrap_or(0.0).max(1.0);
    if rank > n || (trace - rank as f64).abs() > 0.25 || above < 0.5 || below > 1e-6 * scale {
        return Err(KreinError::RankAmbiguous { trace, above, below });
    }
    if rank == 0 {
        return Ok(Subspace::empty(s));
    }
    Subspace::new(s, basis)
}

/// Axis-parallel rectangle `[re_min, re_max] x [im_min, im_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rect {
    pub fn new(re: (f64, f64), im: (f64, f64)) -> Result<Self> {
        if !(re.0 < re.1 && im.0 < im.1) {
            return Err(KreinError::InvalidArgument("empty rectangle".into()));
        }
        Ok(Self { re_min: re.0, re_max: re.1, im_min: im.0, im_max: im.1 })
    }

    /// Open rectangle membership.
    pub fn contains(&self, z: Complex64) -> bool {
        z.re > self.re_min && z.re < self.re_max && z.im > self.im_min && z.im < self.im_max
    }

    /// Euclidean distance to the closed rectangle (0 inside).
    pub fn distance(&self, z: Complex64) -> f64 {
        let dx = (self.re_min - z.re).max(0.0).max(z.re - self.re_max);
        let dy = (self.im_min - z.im).max(0.0).max(z.im - self.im_max);
        dx.hypot(dy)
    }

    /// Distance to the boundary, positive both inside and outside.
    pub fn boundary_distance(&self, z: Complex64) -> f64 {
        if self.contains(z) {
            (z.re - self.re_min).min(self.re_max - z.re).min(z.im - self.im_min).min(self.im_max - z.im)
        } else {
            self.distance(z)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    /// `min dist(sigma(T_n), Omega)` per sequence element.
    pub sequence_distances: Vec<f64>,
    pub limit_distance: f64,
    /// `||T_n - T||` per element.
    pub approximation_errors: Vec<f64>,
    pub errors_decreasing: bool,
    pub limit_clear: bool,
}

/// If no `T_n` has spectrum in `Omega` and `T_n -> T`, then `T` has no
/// spectrum in `Omega` either. Checks the hypothesis on every element first.
pub fn spectral_stability_check(sequence: &[ComplexMatrix], limit: &ComplexMatrix, omega: &Rect) -> Result<StabilityReport> {
    let mut sequence_distances = Vec::with_capacity(sequence.len());
    let mut approximation_errors = Vec::with_capacity(sequence.len());
    for (index, t) in sequence.iter().enumerate() {
        if t.shape() != limit.shape() {
            return Err(KreinError::DimensionMismatch(format!("sequence element {index} has shape {:?}", t.shape())));
        }
        let values = numerics::eigenvalues(t)?;
        if let Some(&eigenvalue) = values.iter().find(|&&z| omega.contains(z)) {
            return Err(KreinError::HypothesisViolated { index, eigenvalue });
        }
        sequence_distances.push(values.iter().map(|&z| omega.distance(z)).fold(f64::INFINITY, f64::min));
        approximation_errors.push(norm2(&(t - limit)));
    }
    let limit_values = numerics::eigenvalues(limit)?;
    let limit_distance = limit_values.iter().map(|&z| omega.distance(z)).fold(f64::INFINITY, f64::min);
    let errors_decreasing = approximation_errors.windows(2).all(|w| w[1] <= w[0]);
    let limit_clear = !limit_values.iter().any(|&z| omega.contains(z));
    Ok(StabilityReport { sequence_distances, limit_distance, approximation_errors, errors_decreasing, limit_clear })
}
