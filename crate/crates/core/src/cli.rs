//! Command-line front end shared by the `krein` binary.
//!
//! Exit codes: 0 pass, 1 property or suite failure, 2 input error,
//! 3 not dissipative, 4 no convergence of the epsilon tail.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::block::{self, BlockOperator, GDecayOptions, GDecayProfile};
use crate::error::KreinError;
use crate::harness::{self, InstanceSpec, RowStatus, SuiteOptions, SuiteReport, SuiteRow};
use crate::krein::KreinStructure;
use crate::numerics::{self, ComplexMatrix};
use crate::projector::{self, Contour};
use crate::solver::{self, SolveReport, SolverConfig};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_DISSIPATIVE: i32 = 3;
pub const EXIT_NO_CONVERGENCE: i32 = 4;

pub const PROBLEM_VERSION: &str = "1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Blocks {
    #[serde(rename = "A11", with = "crate::serde_complex::matrix")]
    pub a11: ComplexMatrix,
    #[serde(rename = "A12", with = "crate::serde_complex::matrix")]
    pub a12: ComplexMatrix,
    #[serde(rename = "A21", with = "crate::serde_complex::matrix")]
    pub a21: ComplexMatrix,
    #[serde(rename = "A22", with = "crate::serde_complex::matrix")]
    pub a22: ComplexMatrix,
}

/// Problem file, schema version 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    pub version: String,
    pub structure: KreinStructure,
    pub blocks: Blocks,
    /// Partial solver configuration; missing fields take their defaults.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    /// How the instance was generated, if it was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<InstanceSpec>,
}

impl ProblemFile {
    pub fn from_operator(a: &BlockOperator) -> Self {
        Self {
            version: PROBLEM_VERSION.into(),
            structure: a.structure(),
            blocks: Blocks { a11: a.a11().clone(), a12: a.a12().clone(), a21: a.a21().clone(), a22: a.a22().clone() },
            solver: None,
            meta: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let file: Self = serde_json::from_str(text).map_err(|e| format!("cannot parse problem file: {e}"))?;
        if file.version != PROBLEM_VERSION {
            return Err(format!("unsupported problem version {:?}", file.version));
        }
        Ok(file)
    }

    /// Checks the declared structure against the block shapes.
    pub fn operator(&self) -> Result<BlockOperator, KreinError> {
        let s = KreinStructure::new(self.structure.p, self.structure.m)?;
        let b = &self.blocks;
        let a = BlockOperator::assemble(b.a11.clone(), b.a12.clone(), b.a21.clone(), b.a22.clone())?;
        if a.structure() != s {
            return Err(KreinError::DimensionMismatch(format!(
                "structure says p={}, m={} but the blocks have p={}, m={}",
                s.p,
                s.m,
                a.structure().p,
                a.structure().m
            )));
        }
        Ok(a)
    }

    pub fn config(&self) -> SolverConfig {
        self.solver.clone().unwrap_or_default()
    }
}

/// Exit code implied by a solve report alone, so a saved report can be
/// re-checked without re-solving.
pub fn report_exit_code(report: &SolveReport) -> i32 {
    if report.cauchy.as_ref().is_some_and(|c| !c.converged) {
        EXIT_NO_CONVERGENCE
    } else if report.acceptance_triple() {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

pub fn error_exit_code(e: &KreinError) -> i32 {
    match e {
        KreinError::NonFinite | KreinError::DimensionMismatch(_) | KreinError::InvalidArgument(_) => EXIT_INPUT,
        KreinError::NotDissipative { .. } | KreinError::ConditionIFailed { .. } => EXIT_NOT_DISSIPATIVE,
        KreinError::NoCauchyConvergence { .. } => EXIT_NO_CONVERGENCE,
        _ => EXIT_FAIL,
    }
}

/// Exit code of a suite report.
pub fn suite_exit_code(report: &SuiteReport) -> i32 {
    if report.pass {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

#[derive(Debug, Parser)]
#[command(name = "krein", version, about = "Invariant maximal nonnegative subspaces of dissipative block operators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a random dissipative problem file.
    Generate(GenerateArgs),
    /// Solve a problem file and print the JSON report.
    Solve(SolveArgs),
    /// Run the property checks on a problem file or a generated suite.
    Verify(VerifyArgs),
    /// Spectra of the operator and of its restriction to the invariant subspace.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0.5)]
    pub margin: f64,
    /// Scale of the off-diagonal blocks.
    #[arg(long, default_value_t = 1.0)]
    pub coupling: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Flip the sign of the dissipative part (negative control).
    #[arg(long)]
    pub anti_dissipative: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub problem: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Problem file; omit together with `--suite`.
    #[arg(required_unless_present = "suite", conflicts_with = "suite")]
    pub problem: Option<PathBuf>,
    #[arg(long)]
    pub suite: bool,
    /// Number of suite instances.
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    /// First instance seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fixed `p`; drawn from `1..=max-dim` when omitted.
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub max_dim: usize,
    /// Fixed margin; cycles through 0, 0.1, 1 when omitted.
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub coupling: f64,
    /// Append one anti-dissipative instance that must be flagged.
    #[arg(long)]
    pub negative_control: bool,
    /// Skip the resolvent asymptotics check.
    #[arg(long)]
    pub no_asymptotics: bool,
    /// Per-row CSV sidecar.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    pub problem: PathBuf,
    /// Heights `h` at which to report `||G(i h)||`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub profile: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct SpectrumOutput {
    #[serde(rename = "spectrum_A", with = "crate::serde_complex::vec")]
    pub spectrum_a: Vec<Complex64>,
    #[serde(with = "crate::serde_complex::opt_vec")]
    pub spectrum_restriction: Option<Vec<Complex64>>,
    pub contour_used: Option<Contour>,
    pub g_decay_profile: Option<GDecayProfile>,
    /// Why the restriction spectrum is missing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solve_error: Option<String>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Spectrum(a) => cmd_spectrum(&a),
    }
}

/// Honors `KREIN_THREADS` by sizing the global rayon pool.
fn configure_threads() {
    if let Some(n) = std::env::var("KREIN_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn fail(code: i32, msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    code
}

/// Writes `text` to `out` through a temporary file and rename, or to stdout.
fn emit(text: &str, out: Option<&Path>) -> std::io::Result<()> {
    match out {
        Some(path) => {
            let tmp = path.with_extension("tmp~");
            fs::write(&tmp, text)?;
            fs::rename(&tmp, path)
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()
        }
    }
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), i32> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| fail(EXIT_FAIL, e))?;
    text.push('\n');
    emit(&text, out).map_err(|e| fail(EXIT_INPUT, format!("cannot write output: {e}")))
}

fn load(path: &Path) -> Result<(ProblemFile, BlockOperator), i32> {
    let text = fs::read_to_string(path).map_err(|e| fail(EXIT_INPUT, format!("cannot read {}: {e}", path.display())))?;
    let file = ProblemFile::parse(&text).map_err(|e| fail(EXIT_INPUT, e))?;
    let a = file.operator().map_err(|e| fail(EXIT_INPUT, e))?;
    file.config().validate().map_err(|e| fail(EXIT_INPUT, e))?;
    Ok((file, a))
}

fn cmd_generate(args: &GenerateArgs) -> i32 {
    let spec = InstanceSpec {
        p: args.p,
        m: args.m,
        margin: args.margin,
        coupling_scale: args.coupling,
        anti_dissipative: args.anti_dissipative,
        seed: args.seed,
        ..InstanceSpec::default()
    };
    if let Err(e) = spec.validate() {
        return fail(EXIT_INPUT, e);
    }
    let a = match harness::random_dissipative(&spec) {
        Ok(a) => a,
        Err(e) => return fail(error_exit_code(&e), e),
    };
    let mut file = ProblemFile::from_operator(&a);
    file.meta = Some(spec);
    match emit_json(&file, args.out.as_deref()) {
        Ok(()) => EXIT_PASS,
        Err(code) => code,
    }
}

fn cmd_solve(args: &SolveArgs) -> i32 {
    let (file, a) = match load(&args.problem) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let report = match solver::solve_theorem(&a, &file.config()) {
        Ok(r) => r,
        Err(KreinError::NoCauchyConvergence { reason, report }) => {
            eprintln!("warning: epsilon tail did not stabilise: {reason}");
            *report
        }
        Err(e) => return fail(error_exit_code(&e), e),
    };
    if let Err(code) = emit_json(&report, args.out.as_deref()) {
        return code;
    }
    report_exit_code(&report)
}

fn summary(report: &SuiteReport) {
    eprintln!(
        "{} rows: {} passed, {} failed, {} without convergence",
        report.rows.len(),
        report.passed,
        report.failed,
        report.no_convergence
    );
    if let Some(rate) = report.monotone_rate {
        eprintln!("monotone Cauchy tail on {:.1}% of strictly dissipative rows", 100.0 * rate);
    }
    for c in &report.worst {
        eprintln!("  {:<18} {} worst {:e}", c.name, if c.pass { "ok  " } else { "FAIL" }, c.value);
    }
    for row in report.rows.iter().filter(|r| r.status != RowStatus::Pass) {
        eprintln!("  flagged seed={} p={} m={}: {:?} {}", row.spec.seed, row.spec.p, row.spec.m, row.status, row.error.as_deref().unwrap_or(""));
    }
}

fn write_csv_sidecar(rows: &[SuiteRow], path: &Path) -> Result<(), i32> {
    let mut buf = Vec::new();
    harness::write_csv(rows, &mut buf).map_err(|e| fail(EXIT_FAIL, e))?;
    let text = String::from_utf8(buf).map_err(|e| fail(EXIT_FAIL, e))?;
    emit(&text, Some(path)).map_err(|e| fail(EXIT_INPUT, format!("cannot write CSV: {e}")))
}

fn suite_specs(args: &VerifyArgs) -> Result<Vec<InstanceSpec>, KreinError> {
    let margins = args.margin.map(|m| vec![m]).unwrap_or_else(|| vec![0.0, 0.1, 1.0]);
    let mut specs = harness::mixed_specs(args.seeds, args.max_dim, &margins, args.seed);
    for s in &mut specs {
        s.p = args.p.unwrap_or(s.p);
        s.m = args.m.unwrap_or(s.m);
        s.coupling_scale = args.coupling;
        s.validate()?;
    }
    if args.negative_control {
        let last = specs.last().cloned().unwrap_or_default();
        specs.push(InstanceSpec { anti_dissipative: true, margin: last.margin.max(0.5), seed: args.seed.wrapping_add(args.seeds as u64), ..last });
    }
    Ok(specs)
}

fn cmd_verify(args: &VerifyArgs) -> i32 {
    let opts = SuiteOptions { run_asymptotics: !args.no_asymptotics, ..SuiteOptions::default() };
    let (report, code) = match &args.problem {
        Some(path) => {
            let (file, a) = match load(path) {
                Ok(x) => x,
                Err(code) => return code,
            };
            let seed = file.meta.as_ref().map_or(0, |m| m.seed);
            let row = harness::evaluate_operator(&a, seed, &file.config(), &opts);
            let code = match row.status {
                RowStatus::Pass => EXIT_PASS,
                RowStatus::NotDissipative => EXIT_NOT_DISSIPATIVE,
                RowStatus::NoConvergence => EXIT_NO_CONVERGENCE,
                RowStatus::Fail | RowStatus::Error => EXIT_FAIL,
            };
            (harness::suite_from_rows(vec![row]), code)
        }
        None => {
            let specs = match suite_specs(args) {
                Ok(s) => s,
                Err(e) => return fail(EXIT_INPUT, e),
            };
            let report = harness::run_property_suite(&specs, &SolverConfig::default(), &opts);
            let code = suite_exit_code(&report);
            (report, code)
        }
    };
    summary(&report);
    if let Some(path) = &args.csv {
        if let Err(code) = write_csv_sidecar(&report.rows, path) {
            return code;
        }
    }
    if let Err(code) = emit_json(&report, args.out.as_deref()) {
        return code;
    }
    code
}

fn cmd_spectrum(args: &SpectrumArgs) -> i32 {
    let (file, a) = match load(&args.problem) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let cfg = file.config();
    let full = a.to_matrix();
    let mut spectrum_a = match numerics::eigenvalues(&full) {
        Ok(v) => v,
        Err(e) => return fail(error_exit_code(&e), e),
    };
    projector::sort_spectrum(&mut spectrum_a);

    let (mut spectrum_restriction, mut contour_used, mut solve_error) = (None, None, None);
    match solver::solve_theorem(&a, &cfg) {
        Ok(r) => {
            let mut spec = r.restriction_spectrum;
            projector::sort_spectrum(&mut spec);
            spectrum_restriction = Some(spec);
            contour_used = r.contour;
        }
        Err(e) => solve_error = Some(e.to_string()),
    }
    if contour_used.is_none() {
        contour_used = cfg.contour.contour_for(&full).ok();
    }

    let g_decay_profile = match &args.profile {
        Some(heights) => match block::g_decay_profile(&a, heights, &GDecayOptions::default()) {
            Ok(p) => Some(p),
            Err(e) => return fail(EXIT_INPUT, e),
        },
        None => None,
    };
    let out = SpectrumOutput { spectrum_a, spectrum_restriction, contour_used, g_decay_profile, solve_error };
    match emit_json(&out, args.out.as_deref()) {
        Ok(()) => EXIT_PASS,
        Err(code) => code,
    }
}
