use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use varifold_decay::example_generator::{build_example, ExampleConfig, ExampleVarifold};
use varifold_decay::isoperimetric_lab::{iso_lab, lebesgue_quotient, IsoLabConfig};
use varifold_decay::report::{write_report, Format, Provenance, Report, ReportBody, ScanSummary};
use varifold_decay::revolved_profile::PlaneNorm;
use varifold_decay::scaling_analysis::{
    default_epsilon, dichotomy_ratio, expected_dichotomy_verdict, scaling_report, scan_b, DichotomyMeasure,
    Membership, ProfileGeometry, QuantityKind,
};
use varifold_decay::varifold_core::{Canonical, DiscreteVarifold};
use varifold_decay::Error;

/// Environment variable selecting the worker thread count.
const THREADS_ENV: &str = "VARIFOLD_THREADS";

#[derive(Parser, Debug)]
#[command(name = "varifold-decay", version, about = "Multiscale varifold decay experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    i_min: Option<u32>,
    #[arg(long, global = true)]
    i_max: Option<u32>,
    /// Quantity profiled by `report-scaling`.
    #[arg(long, global = true, value_enum)]
    kind: Option<KindArg>,
    /// Slope tolerance override.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[arg(long, global = true, value_enum)]
    geometry: Option<GeometryArg>,
    /// Tilt norm override.
    #[arg(long, global = true, value_enum)]
    norm: Option<NormArg>,
    /// Exponent `q` of the dichotomy ratio.
    #[arg(long, global = true)]
    q: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Derive a, b and the level scales.
    Derive,
    /// Build the example and report per-level aggregates.
    Build,
    /// Dyadic profile and slope fit of one quantity.
    ReportScaling,
    /// Isoperimetric quotients, pillbox sweep and quadrature oracle check.
    ReportIso,
    /// Excess-set membership scan on the example and a flat control.
    ScanExcess,
    /// Density ratio trend against the critical exponent.
    Dichotomy,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Derive => "derive",
            Command::Build => "build",
            Command::ReportScaling => "report-scaling",
            Command::ReportIso => "report-iso",
            Command::ScanExcess => "scan-excess",
            Command::Dichotomy => "dichotomy",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum KindArg {
    Mass,
    Height,
    Tilt,
    Curvature,
    Weighted,
    WeightedPower,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum GeometryArg {
    Cube,
    Ball,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum NormArg {
    Frobenius,
    Operator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DichotomySettings {
    q: Option<f64>,
    measure: DichotomyMeasure,
    spread_limit: f64,
}

impl Default for DichotomySettings {
    fn default() -> Self {
        Self {
            q: None,
            measure: DichotomyMeasure::ComplementOfT,
            spread_limit: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ScanSettings {
    i_values: Vec<u32>,
    k_max: u32,
    /// Candidate isoperimetric constant; defaults to the flat-ball quotient.
    gamma: Option<f64>,
    epsilon: Option<f64>,
    /// Horizontal probe coordinates within `T` (length `n` each).
    probes: Option<Vec<Vec<f64>>>,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            i_values: vec![2, 3, 4, 8],
            k_max: 14,
            gamma: None,
            epsilon: None,
            probes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    example: ExampleConfig,
    seed: u64,
    i_min: u32,
    i_max: u32,
    kind: KindArg,
    tolerance: Option<f64>,
    geometry: ProfileGeometry,
    // Where and how to write do not enter the config hash.
    #[serde(skip_serializing)]
    out: Option<PathBuf>,
    #[serde(skip_serializing)]
    format: Option<Format>,
    dichotomy: DichotomySettings,
    scan: ScanSettings,
    iso: IsoLabConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            example: ExampleConfig::default(),
            seed: 0,
            i_min: 2,
            i_max: 8,
            kind: KindArg::Mass,
            tolerance: None,
            geometry: ProfileGeometry::Cube,
            out: None,
            format: None,
            dichotomy: DichotomySettings::default(),
            scan: ScanSettings::default(),
            iso: IsoLabConfig::default(),
        }
    }
}

/// Invalid input, reported with exit code 2.
#[derive(Debug)]
struct ConfigError(anyhow::Error);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(e: impl Into<anyhow::Error>) -> anyhow::Error {
    anyhow::Error::new(ConfigError(e.into()))
}

fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(config_error)?;
    serde_json::from_str(&text).map_err(|e| {
        config_error(anyhow!(
            "{}: line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

/// Command-line flags take precedence over the config file.
fn merge(cli: &Cli, mut cfg: RunConfig) -> RunConfig {
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(i) = cli.i_min {
        cfg.i_min = i;
    }
    if let Some(i) = cli.i_max {
        cfg.i_max = i;
    }
    if let Some(k) = cli.kind {
        cfg.kind = k;
    }
    if cli.tolerance.is_some() {
        cfg.tolerance = cli.tolerance;
    }
    if let Some(g) = cli.geometry {
        cfg.geometry = match g {
            GeometryArg::Cube => ProfileGeometry::Cube,
            GeometryArg::Ball => ProfileGeometry::Ball,
        };
    }
    if let Some(n) = cli.norm {
        cfg.example.norm = match n {
            NormArg::Frobenius => PlaneNorm::Frobenius,
            NormArg::Operator => PlaneNorm::Operator,
        };
    }
    if cli.q.is_some() {
        cfg.dichotomy.q = cli.q;
    }
    if let Some(f) = cli.format {
        cfg.format = Some(match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        });
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    cfg.iso.seed = cfg.seed;
    cfg
}

/// Library errors caused by the inputs rather than the computation.
fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Domain(_)
            | Error::Capacity(_)
            | Error::Ordering { .. }
            | Error::Threshold(_)
            | Error::Config(_)
            | Error::Dimension(_)
            | Error::Margin(_)
            | Error::Tail(_)
            | Error::Io { .. }
            | Error::Json(_)
    )
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(inner) if !is_config_error(inner) => 1,
        _ => 2,
    }
}

struct Outcome {
    report: Report,
    summary: Vec<String>,
    default_format: Format,
}

fn quantity(kind: KindArg, ex: &ExampleVarifold) -> anyhow::Result<QuantityKind> {
    let c = &ex.config;
    Ok(match kind {
        KindArg::Mass => QuantityKind::MassMinusPlane,
        KindArg::Height => QuantityKind::Height { q: c.q2 },
        KindArg::Tilt => QuantityKind::Tilt { q: c.q1, norm: c.norm },
        KindArg::Curvature => QuantityKind::CurvatureMass { p: c.p },
        KindArg::Weighted => QuantityKind::WeightedMass {
            s: c.s.ok_or_else(|| config_error(anyhow!("weighted mass needs `s` in the example config")))?,
        },
        KindArg::WeightedPower => QuantityKind::WeightedPowerMass {
            s: c.s.ok_or_else(|| config_error(anyhow!("weighted power needs `s` in the example config")))?,
            r: c.r.ok_or_else(|| config_error(anyhow!("weighted power needs `r` in the example config")))?,
        },
    })
}

fn derive_or_build(cmd: Command, cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let ex = build_example(&cfg.example)?;
    let manifest = ex.manifest()?;
    let d = &manifest.derived;
    let mut summary = vec![
        format!("a = {}", d.a),
        format!("b = {}", d.b),
        format!("kappa = {}", d.kappa),
        format!("lambda = {}", d.lambda),
        format!("mass level ratio = {:e}", manifest.mass_level_ratio),
        format!("curvature level ratio = {:e}", manifest.curvature_level_ratio),
    ];
    if cmd == Command::Build {
        let surfaces: f64 = manifest.level_mass.iter().sum();
        summary.push(format!("levels = {}", manifest.level_mass.len()));
        summary.push(format!("plane mass = {:e}", manifest.plane_mass));
        summary.push(format!("surface mass = {surfaces:e}"));
    }
    Ok(Outcome {
        report: Report {
            provenance: Provenance::new(cmd.name(), cfg, Some(cfg.seed))?.with_example(&ex)?,
            pass: true,
            body: ReportBody::Manifest(manifest),
        },
        summary,
        default_format: Format::Json,
    })
}

fn report_scaling(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let ex = build_example(&cfg.example)?;
    let kind = quantity(cfg.kind, &ex)?;
    let rep = scaling_report(&ex, kind, cfg.i_min, cfg.i_max, cfg.geometry, cfg.tolerance)?;
    let summary = vec![
        format!("quantity = {}", rep.label),
        format!("predicted slope = {}", rep.predicted),
        format!(
            "fitted slopes = [{:.6}, {:.6}] (tolerance {})",
            rep.fit.slope_lower, rep.fit.slope_upper, rep.tolerance
        ),
        format!("verdict = {}", if rep.pass { "PASS" } else { "FAIL" }),
    ];
    Ok(Outcome {
        report: Report {
            provenance: Provenance::new("report-scaling", cfg, Some(cfg.seed))?.with_example(&ex)?,
            pass: rep.pass,
            body: ReportBody::Scaling(rep),
        },
        summary,
        default_format: Format::Csv,
    })
}

fn report_iso(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let rep = iso_lab(&cfg.iso)?;
    let mut summary: Vec<String> = rep
        .canonical
        .iter()
        .map(|c| {
            format!(
                "{}: quotient {:.12} (closed form {:.12})",
                c.name, c.result.quotient, c.reference
            )
        })
        .collect();
    summary.extend(rep.oracle.iter().map(|o| {
        format!(
            "{}: quadrature {:.10e}, monte carlo {:.10e}, relative error {:.2e}",
            o.quantity, o.quadrature, o.monte_carlo, o.relative_error
        )
    }));
    summary.push(format!(
        "max swept quotient = {:.12} (flat ball {:.12}; observation only)",
        rep.sweep.max_quotient(),
        rep.sweep.lebesgue_quotient
    ));
    summary.push(format!("verdict = {}", if rep.pass { "PASS" } else { "FAIL" }));
    Ok(Outcome {
        report: Report {
            provenance: Provenance::new("report-iso", cfg, Some(cfg.seed))?,
            pass: rep.pass,
            body: ReportBody::Iso(rep),
        },
        summary,
        default_format: Format::Csv,
    })
}

fn scan_excess(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    // The scan measures the surfaces only; T itself is where the probes sit.
    let example = ExampleConfig {
        include_plane: false,
        ..cfg.example.clone()
    };
    let ex = build_example(&example)?;
    let n = ex.n();
    let horizontal = match &cfg.scan.probes {
        Some(p) => p.clone(),
        None => default_probes(&ex.window.center_f64(), cfg.i_min.max(1)),
    };
    let probes: Vec<Vec<f64>> = horizontal
        .iter()
        .map(|h| {
            if h.len() != n {
                return Err(config_error(anyhow!("probe {h:?} needs {n} coordinates")));
            }
            Ok(std::iter::once(0.0).chain(h.iter().copied()).collect())
        })
        .collect::<anyhow::Result<_>>()?;
    let gamma = cfg.scan.gamma.unwrap_or_else(|| lebesgue_quotient(n));
    let epsilon = cfg
        .scan
        .epsilon
        .unwrap_or_else(|| default_epsilon(gamma, n, example.p));
    let on_example = scan_b(&ex, &probes, &cfg.scan.i_values, epsilon, cfg.scan.k_max)?;
    // Control: a flat window centred on the same point.
    let control_surface = DiscreteVarifold::canonical(Canonical::PlaneWindow { n, radius: 1.0 }, example.p)?;
    let center: Vec<f64> = std::iter::once(0.0).chain(ex.window.center_f64()).collect();
    let control_probes: Vec<Vec<f64>> = probes
        .iter()
        .map(|p| p.iter().zip(&center).map(|(a, b)| a - b).collect())
        .collect();
    let control = scan_b(&control_surface, &control_probes, &cfg.scan.i_values, epsilon, cfg.scan.k_max)?;
    let all_members = on_example
        .iter()
        .all(|s| s.membership.iter().all(|(_, m)| matches!(m, Membership::Member { .. })));
    let no_members = control
        .iter()
        .all(|s| s.membership.iter().all(|(_, m)| !matches!(m, Membership::Member { .. })));
    let pass = all_members && no_members;
    let summary = vec![
        format!("epsilon = {epsilon:e} (gamma candidate {gamma})"),
        format!("example probes in every B_i: {all_members}"),
        format!("control probes outside every B_i: {no_members}"),
        format!("verdict = {}", if pass { "PASS" } else { "FAIL" }),
    ];
    Ok(Outcome {
        report: Report {
            provenance: Provenance::new("scan-excess", cfg, Some(cfg.seed))?.with_example(&ex)?,
            pass,
            body: ReportBody::Scan(ScanSummary {
                epsilon,
                k_max: cfg.scan.k_max,
                i_values: cfg.scan.i_values.clone(),
                example: on_example,
                control,
                pass,
            }),
        },
        summary,
        default_format: Format::Csv,
    })
}

/// The window center and points displaced along each horizontal axis, all
/// well inside the margin required for radius `1 / i_min`.
fn default_probes(center: &[f64], i_min: u32) -> Vec<Vec<f64>> {
    let step = 0.25 / i_min as f64;
    let mut out = vec![center.to_vec()];
    for axis in 0..center.len() {
        for sign in [-1.0, 1.0] {
            let mut p = center.to_vec();
            p[axis] += sign * step;
            out.push(p);
        }
    }
    out
}

fn dichotomy(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let ex = build_example(&cfg.example)?;
    let n = ex.n() as f64;
    let q = cfg.dichotomy.q.unwrap_or((n + ex.derived.kappa) / n);
    let rep = dichotomy_ratio(
        &ex,
        q,
        cfg.dichotomy.measure,
        cfg.i_min,
        cfg.i_max,
        cfg.dichotomy.spread_limit,
    )?;
    let expected = expected_dichotomy_verdict(&ex, q, cfg.dichotomy.measure);
    let pass = rep.verdict == expected;
    let summary = vec![
        format!("q = {q}, n q = {}", n * q),
        format!(
            "ratio bracket = [{:.6e}, {:.6e}], spread {:.4}",
            rep.bracket.lower,
            rep.bracket.upper,
            rep.bracket.upper / rep.bracket.lower
        ),
        format!("trend = ({:.4}, {:.4}) log2 per level", rep.trend.0, rep.trend.1),
        format!("observed {:?}, expected {:?}", rep.verdict, expected),
        format!("verdict = {}", if pass { "PASS" } else { "FAIL" }),
    ];
    Ok(Outcome {
        report: Report {
            provenance: Provenance::new("dichotomy", cfg, Some(cfg.seed))?.with_example(&ex)?,
            pass,
            body: ReportBody::Dichotomy(rep),
        },
        summary,
        default_format: Format::Csv,
    })
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads = value
        .parse::<usize>()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| config_error(anyhow!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(config_error)
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    configure_threads()?;
    let cfg = merge(cli, load_config(cli.config.as_deref())?);
    eprintln!("seed = {}", cfg.seed);
    let outcome = match cli.command {
        Command::Derive | Command::Build => derive_or_build(cli.command, &cfg),
        Command::ReportScaling => report_scaling(&cfg),
        Command::ReportIso => report_iso(&cfg),
        Command::ScanExcess => scan_excess(&cfg),
        Command::Dichotomy => dichotomy(&cfg),
    }?;
    let format = cfg.format.unwrap_or(outcome.default_format);
    match &cfg.out {
        Some(path) => write_report(&outcome.report, format, path)?,
        None => {
            let text = outcome.report.render(format)?;
            std::io::stdout().write_all(text.as_bytes()).context("writing stdout")?;
        }
    }
    for line in &outcome.summary {
        eprintln!("{line}");
    }
    Ok(outcome.report.pass)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
