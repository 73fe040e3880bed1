//! Pipeline orchestration: configuration, staged execution, report and artifact
//! emission, and the command-line entry point.

use crate::cone::{build_colligation, rho_estimate, ConeDiscretization, ConeError, RhoProbe, SolverConfig, Values};
use crate::domain::{CircularDomain, DomainConfig, DomainError, FixedPointData};
use crate::fay::{CriticalPoints, EFit, FayError, FayPair, GramConfig};
use crate::harmonic::{BoundaryPoint, HarmonicBasis, HarmonicConfig, HarmonicError};
use crate::jacobian::{interior_samples, Jacobian, JacobianError, PeriodMatrix};
use crate::linalg::{m2_to_dyn, CMat};
use crate::matinner::{
    attempt_diagonalize, check_psi, pick_matrix, perturbation_scan, Diagonalization, MatInnerError, MatrixInner,
    PickReport, PsiReport, ScanReport, Team,
};
use crate::sdp::SdpStatus;
use crate::svg;
use crate::testfn::{select_off_axis, test_function, PiPoint, TestFnError};
use crate::C64;
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Exit code for invalid input or configuration.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for a numerical failure in any stage.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Domain,
    Harmonic,
    Testfn,
    Jacobian,
    Fay,
    Matinner,
    Cone,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("[domain] {0}")]
    Domain(#[from] DomainError),
    #[error("[harmonic] {0}")]
    Harmonic(#[from] HarmonicError),
    #[error("[testfn] {0}")]
    TestFn(#[from] TestFnError),
    #[error("[jacobian] {0}")]
    Jacobian(#[from] JacobianError),
    #[error("[fay] {0}")]
    Fay(#[from] FayError),
    #[error("[matinner] {0}")]
    MatInner(#[from] MatInnerError),
    #[error("[cone] {0}")]
    Cone(#[from] ConeError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Domain(_) => EXIT_VALIDATION,
            CliError::TestFn(TestFnError::WrongLength { .. } | TestFnError::NotOnCurve { .. }) => EXIT_VALIDATION,
            _ => EXIT_NUMERICAL,
        }
    }
}

/// Which function the cone stage bisects on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ConeTarget {
    /// `Ψ` with the perturbed team selected by the scan.
    #[value(name = "psi_t", alias = "psi-t")]
    PsiT,
    /// `Ψ` with the diagonal team.
    #[value(name = "psi_0", alias = "psi-0")]
    #[serde(rename = "psi_0")]
    Psi0,
    /// The scalar test function `ψ_p`.
    #[value(name = "psi_p", alias = "psi-p")]
    PsiP,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Boundary residual accepted from harmonic fits.
    pub harmonic: f64,
    /// Theta-series truncation tolerance.
    pub theta: f64,
    /// Cone feasibility threshold on the relative residual.
    pub feasible: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            harmonic: 1e-8,
            theta: 1e-12,
            feasible: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub domain: DomainConfig,
    pub harmonic_degree: usize,
    pub gram_degree: usize,
    pub gram_nodes: usize,
    /// Perturbation parameters, scanned in order.
    pub scan: Vec<f64>,
    /// Test-function grid points per hole.
    pub grid: usize,
    /// Interior nodes added to the zero set and `b`.
    pub extra_nodes: usize,
    pub tolerances: Tolerances,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            domain: DomainConfig::reference(),
            harmonic_degree: 32,
            gram_degree: 48,
            gram_nodes: 800,
            scan: crate::matinner::default_scan(),
            grid: 8,
            extra_nodes: 2,
            tolerances: Tolerances::default(),
            seed: 7,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let t = &self.tolerances;
        if [t.harmonic, t.theta, t.feasible].iter().any(|v| !(*v > 0.0)) {
            return Err(CliError::Config("tolerances must be positive".into()));
        }
        if self.harmonic_degree == 0 || self.gram_degree == 0 || self.gram_nodes < 8 {
            return Err(CliError::Config("degrees must be positive and gram_nodes ≥ 8".into()));
        }
        if self.grid == 0 {
            return Err(CliError::Config("grid must be positive".into()));
        }
        if self.scan.is_empty() || self.scan.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(CliError::Config("scan must be a non-empty list of positive values".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DomainStage {
    pub n: usize,
    pub fixed_points: FixedPointData,
}

#[derive(Debug, Clone, Serialize)]
pub struct HarmonicStage {
    pub degree: usize,
    pub condition_number: f64,
    /// `max |Σ_j h_j − 1|` at interior samples.
    pub partition_defect: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestFnStage {
    pub b: C64,
    /// `(curve, angle)` of each support point.
    pub p: Vec<(usize, f64)>,
    pub zeros: Vec<C64>,
    pub winding: i64,
    pub score: f64,
    pub mobius_residual: f64,
    /// `max ||ψ_p| − 1|` on boundary samples away from the support.
    pub boundary_defect: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FayStage {
    pub critical: CriticalPoints,
    pub efit: EFit,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatInnerStage {
    pub diagonal_team: PsiReport,
    pub diagonal_team_diagonalizes: bool,
    pub scan: ScanReport,
    pub perturbed: PsiReport,
    pub diagonalization: Diagonalization,
    pub pick: PickReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct RhoSummary {
    pub target: ConeTarget,
    pub rho_lower: f64,
    pub rho_upper: Option<f64>,
    pub s_star: f64,
    pub dual_bound: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    pub residual_trace: Vec<RhoProbe>,
    pub certificate_residual: f64,
    /// `|recomputed − reported|` for the emitted certificate.
    pub reverification_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ColligationSummary {
    pub aux: usize,
    pub unitarity: f64,
    pub interpolation: f64,
    pub identity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConeStage {
    pub grid: usize,
    pub nodes: Vec<C64>,
    pub members: usize,
    pub skipped: Vec<String>,
    pub estimates: Vec<RhoSummary>,
    pub colligation: Option<ColligationSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub szs: &'static str,
    pub eps: &'static str,
    pub diag: &'static str,
    pub rho_upper: Option<f64>,
    pub rho_upper_below_one: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub seed: u64,
    pub config: PipelineConfig,
    pub stages: Vec<Stage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainStage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub harmonic: Option<HarmonicStage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub testfn: Option<TestFnStage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jacobian: Option<PeriodMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fay: Option<FayStage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matinner: Option<MatInnerStage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cone: Option<ConeStage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

/// Plot and CSV payloads produced alongside the report.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
}

/// Runs the pipeline through `last` (inclusive). Cone estimates are computed for `targets`.
pub fn run_pipeline(cfg: &PipelineConfig, last: Stage, targets: &[ConeTarget]) -> Result<(Report, Artifacts), CliError> {
    cfg.validate()?;
    let mut art = Artifacts::default();
    let mut report = Report {
        seed: cfg.seed,
        config: cfg.clone(),
        stages: vec![],
        domain: None,
        harmonic: None,
        testfn: None,
        jacobian: None,
        fay: None,
        matinner: None,
        cone: None,
        verdict: None,
    };
    let domain = CircularDomain::build(&cfg.domain)?;
    report.stages.push(Stage::Domain);
    report.domain = Some(DomainStage {
        n: domain.n(),
        fixed_points: domain.fixed_points(),
    });
    if last == Stage::Domain {
        art.files.push(("domain.svg".into(), svg::domain_plot(&domain, &[])));
        return Ok((report, art));
    }

    let hcfg = HarmonicConfig {
        degree: cfg.harmonic_degree,
        colloc: None,
        tol: cfg.tolerances.harmonic,
    };
    let basis = HarmonicBasis::new(&domain, hcfg)?;
    let partition_defect = interior_samples(&domain, 200, 1e-3, cfg.seed)
        .iter()
        .map(|&z| {
            let s: f64 = (0..=domain.n()).map(|j| basis.h(j).map_or(f64::NAN, |h| h.value(z))).sum();
            (s - 1.0).abs()
        })
        .fold(0.0, f64::max);
    report.stages.push(Stage::Harmonic);
    report.harmonic = Some(HarmonicStage {
        degree: cfg.harmonic_degree,
        condition_number: basis.solver().condition_number(),
        partition_defect,
    });
    if last == Stage::Harmonic {
        return Ok((report, art));
    }

    let sel = select_off_axis(&basis)?;
    let support = sel.psi.support(&domain);
    let grid = domain.boundary_grid(96)?;
    let mut csv = String::from("curve,angle,modulus\n");
    let mut boundary_defect: f64 = 0.0;
    let mut trace = vec![];
    for (i, s) in grid.iter().enumerate() {
        let m = sel.psi.eval(s.point).norm();
        csv.push_str(&format!("{},{:.12},{:.12e}\n", s.curve, s.angle, m));
        trace.push((i as f64, m));
        if support.iter().all(|q| (q - s.point).norm() > 0.05) {
            boundary_defect = boundary_defect.max((m - 1.0).abs());
        }
    }
    art.files.push(("psi_boundary.csv".into(), csv));
    art.files.push((
        "psi_boundary.svg".into(),
        svg::line_plot("|psi_p| on the boundary", "sample", "|psi_p|", &[("|psi_p|", "#1f5fbf", trace)]),
    ));
    report.stages.push(Stage::Testfn);
    report.testfn = Some(TestFnStage {
        b: sel.b,
        p: sel.p.points.iter().map(|q| (q.curve, q.angle)).collect(),
        zeros: sel.psi.zero_points(),
        winding: sel.psi.winding,
        score: sel.score,
        mobius_residual: sel.mobius_residual,
        boundary_defect,
    });
    if last == Stage::Testfn {
        art.files.push(("domain.svg".into(), domain_svg(&domain, &sel.psi.zero_points(), &[], &support, sel.b)));
        return Ok((report, art));
    }

    let jac = Jacobian::new(&basis, cfg.tolerances.theta, cfg.seed)?;
    report.stages.push(Stage::Jacobian);
    report.jacobian = Some(jac.period.clone());
    if last == Stage::Jacobian {
        return Ok((report, art));
    }

    let gcfg = GramConfig {
        degree: cfg.gram_degree,
        nodes: cfg.gram_nodes,
    };
    let fay = FayPair::new(&basis, &jac, sel.b.re, gcfg, cfg.seed)?;
    report.stages.push(Stage::Fay);
    report.fay = Some(FayStage {
        critical: fay.crit.clone(),
        efit: fay.efit.clone(),
    });
    if last == Stage::Fay {
        return Ok((report, art));
    }

    let n = domain.n();
    let s0 = MatrixInner::build(&basis, &Team::trivial(n), &sel.p, sel.b)?;
    let diagonal_team = check_psi(&basis, &s0);
    let samples = interior_samples(&domain, 8, 0.1, cfg.seed);
    let s0_diag = attempt_diagonalize(&|z| s0.eval(z), &samples)?;
    let (scan, psi) = perturbation_scan(&basis, &sel.p, sel.b, &fay.theta, &fay.crit, &cfg.scan)?;
    let perturbed = check_psi(&basis, &psi);
    let diagonalization = attempt_diagonalize(&|z| psi.eval(z), &samples)?;
    let mut pick_nodes = scan.szs.a.clone();
    pick_nodes.push(sel.b);
    let (_, pick) = pick_matrix(&|z| psi.eval(z), &fay.gram, &pick_nodes);
    let crit: Vec<C64> = fay.crit.points.iter().map(|&x| C64::new(x, 0.0)).collect();
    art.files.push((
        "domain.svg".into(),
        domain_svg(&domain, &scan.szs.a, &crit, &support, sel.b),
    ));
    let verdict_diag = match &diagonalization {
        Diagonalization::Witness { .. } => "witness",
        Diagonalization::Success { .. } => "diagonalized",
        Diagonalization::Inconclusive { .. } => "inconclusive",
    };
    report.stages.push(Stage::Matinner);
    report.verdict = Some(Verdict {
        szs: if scan.szs.pass { "pass" } else { "fail" },
        eps: if scan.epsilon.holds { "pass" } else { "fail" },
        diag: verdict_diag,
        rho_upper: None,
        rho_upper_below_one: false,
    });
    report.matinner = Some(MatInnerStage {
        diagonal_team,
        diagonal_team_diagonalizes: s0_diag.is_success(),
        scan,
        perturbed,
        diagonalization,
        pick,
    });
    if last == Stage::Matinner {
        return Ok((report, art));
    }

    let szs_a = &report.matinner.as_ref().expect("set above").scan.szs.a;
    let disc = ConeDiscretization::build(&basis, sel.b, &sel.p, szs_a, cfg.grid, cfg.extra_nodes, cfg.seed)?;
    let scfg = SolverConfig {
        feasible_tol: cfg.tolerances.feasible,
        ..SolverConfig::default()
    };
    let mut estimates = vec![];
    let mut colligation = None;
    let mut bisection_csv = String::from("target,probe,rho,feasible,residual,floor\n");
    for &target in targets {
        let vals: Values = match target {
            ConeTarget::PsiT => disc.nodes.iter().map(|&z| m2_to_dyn(&psi.eval(z))).collect(),
            ConeTarget::Psi0 => disc.nodes.iter().map(|&z| m2_to_dyn(&s0.eval(z))).collect(),
            ConeTarget::PsiP => disc.nodes.iter().map(|&z| CMat::from_element(1, 1, sel.psi.eval(z))).collect(),
        };
        let est = rho_estimate(&disc, &vals, &scfg)?;
        let recomputed = crate::cone::verify(&disc, &vals, &est.certificate);
        for (i, p) in est.trace.iter().enumerate() {
            bisection_csv.push_str(&format!(
                "{},{},{:.12},{},{:.6e},{:.6e}\n",
                target_name(target),
                i,
                p.rho,
                p.feasible,
                p.residual,
                p.floor
            ));
        }
        if target == ConeTarget::PsiT {
            let probes: Vec<(f64, bool)> = est.trace.iter().map(|p| (p.rho, p.feasible)).collect();
            art.files.push(("bisection.svg".into(), svg::bisection_plot(&probes)));
        }
        if target == ConeTarget::Psi0 && est.rho_upper.is_none() {
            colligation = Some(colligation_summary(&disc, &vals, &est.certificate, &domain, cfg.seed)?);
        }
        estimates.push(RhoSummary {
            target,
            rho_lower: est.rho_lower,
            rho_upper: est.rho_upper,
            s_star: est.solve.s_star,
            dual_bound: est.solve.dual_bound,
            status: est.solve.status,
            iterations: est.solve.iterations,
            residual_trace: est.trace.clone(),
            certificate_residual: est.certificate.residual,
            reverification_gap: (recomputed - est.certificate.residual).abs(),
        });
    }
    art.files.push(("bisection.csv".into(), bisection_csv));
    if let (Some(v), Some(e)) = (
        report.verdict.as_mut(),
        estimates.iter().find(|e| e.target == ConeTarget::PsiT),
    ) {
        v.rho_upper = e.rho_upper;
        v.rho_upper_below_one = e.rho_upper.is_some_and(|u| u < 1.0);
    }
    report.stages.push(Stage::Cone);
    report.cone = Some(ConeStage {
        grid: cfg.grid,
        nodes: disc.nodes.clone(),
        members: disc.len(),
        skipped: disc.skipped.clone(),
        estimates,
        colligation,
    });
    Ok((report, art))
}

fn target_name(t: ConeTarget) -> &'static str {
    match t {
        ConeTarget::PsiT => "psi_t",
        ConeTarget::Psi0 => "psi_0",
        ConeTarget::PsiP => "psi_p",
    }
}

fn domain_svg(domain: &CircularDomain, zeros: &[C64], crit: &[C64], support: &[C64], b: C64) -> String {
    let bs = [b];
    svg::domain_plot(
        domain,
        &[
            svg::Marks {
                label: "zeros",
                color: "#c22",
                points: zeros,
            },
            svg::Marks {
                label: "critical points",
                color: "#e80",
                points: crit,
            },
            svg::Marks {
                label: "support of p",
                color: "#1f5fbf",
                points: support,
            },
            svg::Marks {
                label: "b",
                color: "#222",
                points: &bs,
            },
        ],
    )
}

fn colligation_summary(
    disc: &ConeDiscretization,
    vals: &Values,
    cert: &crate::cone::Certificate,
    domain: &CircularDomain,
    seed: u64,
) -> Result<ColligationSummary, CliError> {
    let col = build_colligation(disc, vals, cert)?;
    let mut interpolation: f64 = 0.0;
    for (i, &z) in disc.nodes.iter().enumerate() {
        interpolation = interpolation.max((col.transfer_eval(disc, z)? - &vals[i]).norm());
    }
    let pts = interior_samples(domain, 40, 0.05, seed.wrapping_add(1));
    let mut identity: f64 = 0.0;
    for pair in pts.chunks(2) {
        identity = identity.max(col.identity_residual(disc, pair[0], pair[1])?);
    }
    Ok(ColligationSummary {
        aux: col.aux,
        unitarity: col.unitarity(),
        interpolation,
        identity,
    })
}

#[derive(Debug, Parser)]
#[command(name = "mcdlab", version, about = "Matrix inner functions and Agler-cone feasibility on circular domains")]
pub struct Args {
    /// JSON pipeline configuration; defaults describe the reference domain.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// JSON domain description, overriding the one in the configuration.
    #[arg(long, global = true)]
    pub domain: Option<PathBuf>,
    /// Output directory for reports, CSV traces and SVG plots; `json` or absent prints to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cone feasibility threshold; for `jacobian` the theta truncation tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the domain and report its fixed-point data.
    Domain,
    /// Harmonic-measure basis; with an action, boundary traces as CSV.
    Harmonic {
        #[command(subcommand)]
        action: Option<HarmonicAction>,
    },
    /// Off-axis selection; `build` evaluates one test function.
    Testfn {
        #[command(subcommand)]
        action: Option<TestFnAction>,
    },
    /// Period matrix and theta-function checks.
    Jacobian {
        #[command(subcommand)]
        action: Option<JacobianAction>,
    },
    /// Critical points and the Fay kernel fit.
    Fay,
    /// Matrix inner functions, perturbation scan, diagonalization and Pick rank.
    Matinner,
    /// Cone feasibility estimates.
    Cone {
        #[command(subcommand)]
        action: ConeAction,
    },
    /// Full pipeline, optionally stopping after a stage.
    Pipeline {
        #[arg(long, value_enum)]
        stage: Option<Stage>,
    },
}

#[derive(Debug, Clone, clap::Args)]
pub struct BoundaryOpts {
    /// Series degree of the harmonic fit.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Samples per boundary curve.
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
}

#[derive(Debug, Subcommand)]
pub enum HarmonicAction {
    /// Boundary values of the fitted `h_j`.
    Solve {
        #[arg(long, default_value_t = 1)]
        index: usize,
        #[command(flatten)]
        opts: BoundaryOpts,
    },
    /// Poisson kernel `𝕡(b, ·)` on the boundary.
    Green {
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        re: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        im: f64,
        #[command(flatten)]
        opts: BoundaryOpts,
    },
    /// Normal derivative `Q_j` on the boundary.
    Qfuncs {
        #[arg(long, default_value_t = 1)]
        index: usize,
        #[command(flatten)]
        opts: BoundaryOpts,
    },
}

#[derive(Debug, Subcommand)]
pub enum TestFnAction {
    /// `ψ_p` for angles `p_0,…,p_n` (one per curve) and a real base point.
    Build {
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        p: Vec<f64>,
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
        b: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum JacobianAction {
    /// Period matrix with its verification data.
    Omega,
    /// Theta truncation and the odd half-period.
    Theta,
}

#[derive(Debug, Subcommand)]
pub enum ConeAction {
    /// Bisection for ρ̂ of one function.
    Rho {
        #[arg(long = "f", value_enum, default_value = "psi_t")]
        f: ConeTarget,
        #[arg(long)]
        grid: Option<usize>,
        /// `auto` for the zero set, `b` and the configured extras; a number sets the extras.
        #[arg(long, default_value = "auto")]
        nodes: String,
    },
}

/// Cone output in the shape `{rho_lower, rho_upper, residual_trace, seed, grid}`.
#[derive(Debug, Serialize)]
struct ConeRhoOutput<'a> {
    rho_lower: f64,
    rho_upper: Option<f64>,
    residual_trace: &'a [RhoProbe],
    seed: u64,
    grid: usize,
    estimate: &'a RhoSummary,
}

#[derive(Debug, Serialize)]
struct TestFnOutput<'a> {
    p: &'a [f64],
    b: f64,
    zeros: Vec<C64>,
    winding: i64,
    /// `max ||ψ_p| − 1|` on boundary samples away from the support.
    unimodularity: f64,
    kernel: &'a crate::testfn::KernelVector,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct ThetaOutput<'a> {
    context: &'a crate::jacobian::ThetaContext,
    odd: &'a crate::jacobian::OddHalfPeriod,
    seed: u64,
}

/// Parses arguments, runs, emits, and returns the process exit code.
pub fn run(args: Args) -> i32 {
    match execute(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn json<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Config(e.to_string()))
}

/// Writes `text` as `name` plus the artifacts into the output directory, or prints `text`.
fn emit(out: Option<&Path>, name: &str, text: String, art: &Artifacts) -> Result<(), CliError> {
    match out.filter(|p| *p != Path::new("json")) {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(name), text + "\n")?;
            for (file, body) in &art.files {
                std::fs::write(dir.join(file), body)?;
            }
        }
        None => {
            // a closed pipe on stdout is not an error of the run
            use std::io::Write;
            let _ = writeln!(std::io::stdout(), "{}", text.trim_end());
        }
    }
    Ok(())
}

fn basis_for(cfg: &PipelineConfig, degree: Option<usize>) -> Result<HarmonicBasis, CliError> {
    let domain = CircularDomain::build(&cfg.domain)?;
    let hcfg = HarmonicConfig {
        degree: degree.unwrap_or(cfg.harmonic_degree),
        colloc: None,
        tol: cfg.tolerances.harmonic,
    };
    if hcfg.degree == 0 {
        return Err(CliError::Config("--degree must be positive".into()));
    }
    Ok(HarmonicBasis::new(&domain, hcfg)?)
}

fn harmonic_csv(cfg: &PipelineConfig, action: &HarmonicAction) -> Result<String, CliError> {
    let opts = match action {
        HarmonicAction::Solve { opts, .. } | HarmonicAction::Green { opts, .. } | HarmonicAction::Qfuncs { opts, .. } => {
            opts
        }
    };
    if opts.grid == 0 {
        return Err(CliError::Config("--grid must be positive".into()));
    }
    let basis = basis_for(cfg, opts.degree)?;
    let grid = basis.domain().boundary_grid(opts.grid)?;
    let check_index = |j: usize| {
        if j > basis.n() {
            Err(CliError::Config(format!("--index {j} exceeds the number of holes {}", basis.n())))
        } else {
            Ok(j)
        }
    };
    let values: Vec<f64> = match action {
        HarmonicAction::Solve { index, .. } => {
            let h = basis.h(check_index(*index)?)?;
            grid.iter().map(|s| h.value(s.point)).collect()
        }
        HarmonicAction::Green { re, im, .. } => basis.poisson(C64::new(*re, *im), &grid)?.values,
        HarmonicAction::Qfuncs { index, .. } => {
            let j = check_index(*index)?;
            grid.iter().map(|s| basis.q(j, BoundaryPoint::new(s.curve, s.angle))).collect()
        }
    };
    let mut csv = String::from("curve,angle,value\n");
    for (s, v) in grid.iter().zip(values) {
        csv.push_str(&format!("{},{:.12},{:.12e}\n", s.curve, s.angle, v));
    }
    Ok(csv)
}

fn execute(args: Args) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(p) = &args.domain {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        cfg.domain = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let jacobian_tol = matches!(args.command, Command::Jacobian { action: Some(_) });
    if let Some(t) = args.tol {
        if jacobian_tol {
            cfg.tolerances.theta = t;
        } else {
            cfg.tolerances.feasible = t;
        }
    }
    cfg.validate()?;
    let out = args.out.as_deref();
    let none = Artifacts::default();
    let (stage, targets, name) = match &args.command {
        Command::Harmonic { action: Some(a) } => {
            let name = match a {
                HarmonicAction::Solve { .. } => "harmonic_solve.csv",
                HarmonicAction::Green { .. } => "harmonic_green.csv",
                HarmonicAction::Qfuncs { .. } => "harmonic_qfuncs.csv",
            };
            return emit(out, name, harmonic_csv(&cfg, a)?, &none);
        }
        Command::Testfn {
            action: Some(TestFnAction::Build { p, b }),
        } => {
            let basis = basis_for(&cfg, None)?;
            let pi = PiPoint::from_angles(p);
            let psi = test_function(&basis, &pi, C64::new(*b, 0.0))?;
            let support = psi.support(basis.domain());
            let unimodularity = basis
                .domain()
                .boundary_grid(96)?
                .iter()
                .filter(|s| support.iter().all(|q| (q - s.point).norm() > 0.05))
                .map(|s| (psi.eval(s.point).norm() - 1.0).abs())
                .fold(0.0, f64::max);
            let text = json(&TestFnOutput {
                p,
                b: *b,
                zeros: psi.zero_points(),
                winding: psi.winding,
                unimodularity,
                kernel: &psi.kernel,
                seed: cfg.seed,
            })?;
            return emit(out, "testfn_build.json", text, &none);
        }
        Command::Jacobian { action: Some(a) } => {
            let basis = basis_for(&cfg, None)?;
            let jac = Jacobian::new(&basis, cfg.tolerances.theta, cfg.seed)?;
            let (name, text) = match a {
                JacobianAction::Omega => ("jacobian_omega.json", json(&jac.period)?),
                JacobianAction::Theta => (
                    "jacobian_theta.json",
                    json(&ThetaOutput {
                        context: &jac.theta,
                        odd: &jac.odd,
                        seed: cfg.seed,
                    })?,
                ),
            };
            return emit(out, name, text, &none);
        }
        Command::Domain => (Stage::Domain, vec![], "domain.json"),
        Command::Harmonic { action: None } => (Stage::Harmonic, vec![], "harmonic.json"),
        Command::Testfn { action: None } => (Stage::Testfn, vec![], "testfn.json"),
        Command::Jacobian { action: None } => (Stage::Jacobian, vec![], "jacobian.json"),
        Command::Fay => (Stage::Fay, vec![], "fay.json"),
        Command::Matinner => (Stage::Matinner, vec![], "matinner.json"),
        Command::Cone {
            action: ConeAction::Rho { f, grid, nodes },
        } => {
            if let Some(g) = grid {
                cfg.grid = *g;
            }
            if nodes != "auto" {
                cfg.extra_nodes = nodes
                    .parse()
                    .map_err(|_| CliError::Config(format!("--nodes expects `auto` or a count, got {nodes}")))?;
            }
            (Stage::Cone, vec![*f], "cone.json")
        }
        Command::Pipeline { stage } => (
            stage.unwrap_or(Stage::Cone),
            vec![ConeTarget::PsiT, ConeTarget::Psi0, ConeTarget::PsiP],
            "summary.json",
        ),
    };
    let (report, art) = run_pipeline(&cfg, stage, &targets)?;
    let text = if matches!(args.command, Command::Cone { .. }) {
        let cone = report.cone.as_ref().expect("cone stage ran");
        let est = &cone.estimates[0];
        json(&ConeRhoOutput {
            rho_lower: est.rho_lower,
            rho_upper: est.rho_upper,
            residual_trace: &est.residual_trace,
            seed: cfg.seed,
            grid: cone.grid,
            estimate: est,
        })?
    } else {
        json(&report)?
    };
    emit(out, name, text, &art)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annulus_is_rejected_as_validation_failure() {
        let mut cfg = PipelineConfig::default();
        cfg.domain.holes.truncate(1);
        let e = run_pipeline(&cfg, Stage::Domain, &[]).unwrap_err();
        assert!(matches!(e, CliError::Domain(DomainError::TooFewHoles(1))));
        assert_eq!(e.exit_code(), EXIT_VALIDATION);
    }

    #[test]
    fn config_round_trips_and_validates() {
        let cfg = PipelineConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: PipelineConfig = serde_json::from_str(r#"{"grid": 4}"#).unwrap();
        assert_eq!(partial.grid, 4);
        let mut bad = cfg.clone();
        bad.tolerances.feasible = 0.0;
        assert_eq!(bad.validate().unwrap_err().exit_code(), EXIT_VALIDATION);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"gird": 4}"#).is_err());
    }

    #[test]
    fn harmonic_stage_is_partial_and_deterministic() {
        let cfg = PipelineConfig::default();
        let (a, _) = run_pipeline(&cfg, Stage::Harmonic, &[]).unwrap();
        let (b, _) = run_pipeline(&cfg, Stage::Harmonic, &[]).unwrap();
        assert_eq!(a.stages, vec![Stage::Domain, Stage::Harmonic]);
        assert!(a.testfn.is_none() && a.cone.is_none());
        assert!(a.harmonic.as_ref().unwrap().partition_defect < 1e-8);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
