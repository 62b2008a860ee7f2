//! Command-line front end: scenario files, trace CSVs, SVG figures.

pub mod config;
pub mod plots;
pub mod svg;
pub mod trace_io;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};

use vrmerge_core::sim::{self, scenarios, MetricsOptions, MetricsReport};
use vrmerge_core::stability::{self, EnergyMode, RegionGrid, StabilityReport};
use vrmerge_core::{
    build_topology, ControllerConfig, Lane, LaneVehicle, ScenarioConfig, SimulationTrace,
    WeightScheme,
};

pub use config::{parse_scenario, parse_scenario_str, ConfigError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_COLLISION: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "vrmerge", version, about = "Virtual-rotation on-ramp merging simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Equal,
    Geometric,
}

impl From<SchemeArg> for WeightScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Equal => WeightScheme::Equal,
            SchemeArg::Geometric => WeightScheme::Geometric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Regions,
    TwelveEqual,
    TwelveGeometric,
    Energy,
    ExtremeMerge,
    CurvedRamp,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write the trace, metrics and figures.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip SVG output.
        #[arg(long)]
        no_plots: bool,
    },
    /// String-stability report for a gain set.
    Analyze {
        /// Take gains from a scenario file; without `--predecessors`, every
        /// predecessor count in its initial topology is analysed.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        #[arg(long)]
        omega_e: Option<f64>,
        #[arg(long)]
        omega_v: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        predecessors: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Feasible (w_e, w_v) region for one or more predecessor counts.
    Region {
        #[arg(long, value_enum, default_value = "equal")]
        scheme: SchemeArg,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        /// Comma-separated predecessor counts.
        #[arg(long, default_value = "1,2,3,4,5,6", value_delimiter = ',')]
        predecessors: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the virtual sequence for per-lane positions.
    Sequence {
        #[arg(long, conflicts_with_all = ["mainline", "ramp"])]
        config: Option<PathBuf>,
        /// Comma-separated mainline positions, leader first.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        mainline: Vec<f64>,
        /// Comma-separated ramp positions, leader first.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        ramp: Vec<f64>,
    },
    /// Print predecessor sets for a lane pattern such as `MRMMR` or `10110`.
    Topology {
        #[arg(long)]
        flags: String,
    },
    /// Run one of the built-in experiments end to end.
    Replicate {
        #[arg(value_enum)]
        experiment: Experiment,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(ConfigError),
    Collision(String),
    Infeasible(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Runtime(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Collision(_) => EXIT_COLLISION,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Collision(m) => write!(f, "collision: {m}"),
            CliError::Infeasible(m) => write!(f, "not string stable: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<vrmerge_core::Error> for CliError {
    fn from(e: vrmerge_core::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args` and runs the command, returning the process exit code.
/// Report text goes to `out`.
pub fn run_cli<I, T>(args: I, out: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    eprint!("{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli.command) {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            EXIT_OK
        }
        Err(CliError::Collision(text)) | Err(CliError::Infeasible(text)) if text.contains('\n') => {
            // The report itself is still useful output.
            let _ = out.write_all(text.as_bytes());
            let code = if text.starts_with("collision") { EXIT_COLLISION } else { EXIT_INFEASIBLE };
            eprintln!("{}", text.lines().next().unwrap_or_default());
            code
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

pub fn execute(cmd: Command) -> CliResult<String> {
    match cmd {
        Command::Simulate { config, out, no_plots } => {
            let scenario = parse_scenario(&config)?;
            simulate(&scenario, &out, !no_plots)
        }
        Command::Analyze { config, scheme, omega_e, omega_v, tau, predecessors, out } => {
            let (mut cfg, counts) = match &config {
                Some(path) => {
                    let scenario = parse_scenario(path)?;
                    let seq = vrmerge_core::virtual_axis::sequence(&scenario.pool()?);
                    let topo = build_topology(&seq.lanes());
                    let counts: BTreeSet<usize> =
                        (1..topo.len()).map(|j| topo.predecessor_count(j)).collect::<Result<_, _>>()?;
                    (scenario.controller, counts)
                }
                None => (ControllerConfig::default(), BTreeSet::from([1])),
            };
            if let Some(s) = scheme {
                cfg.scheme = s.into();
            }
            cfg.omega_e = omega_e.unwrap_or(cfg.omega_e);
            cfg.omega_v = omega_v.unwrap_or(cfg.omega_v);
            cfg.tau = tau.unwrap_or(cfg.tau);
            let counts = match predecessors {
                Some(0) => return Err(CliError::Usage("--predecessors must be >= 1".into())),
                Some(n) => BTreeSet::from([n]),
                None if counts.is_empty() => BTreeSet::from([1]),
                None => counts,
            };
            cfg.validate().map_err(|e| {
                CliError::Config(ConfigError { origin: "arguments".into(), line: None, message: e.to_string() })
            })?;
            analyze(&cfg, &counts, out.as_deref())
        }
        Command::Region { scheme, tau, predecessors, out } => {
            if predecessors.contains(&0) {
                return Err(CliError::Usage("predecessor counts must be >= 1".into()));
            }
            if !(tau > 0.0) {
                return Err(CliError::Usage("--tau must be > 0".into()));
            }
            ensure_dir(&out)?;
            let mut text = String::new();
            for n in predecessors {
                let region = region_svg(scheme.into(), tau, n, &out)?;
                let _ = writeln!(text, "{} tau={tau} N={n}: slope {:.6}, area {:.4}", scheme_name(scheme.into()), region.0, region.1);
            }
            Ok(text)
        }
        Command::Sequence { config, mainline, ramp } => {
            let pool = match config {
                Some(path) => parse_scenario(&path)?.pool()?,
                None => {
                    if mainline.is_empty() && ramp.is_empty() {
                        return Err(CliError::Usage("give --config or --mainline/--ramp positions".into()));
                    }
                    let m = mainline.len() as u32;
                    vrmerge_core::virtual_axis::pool_union(
                        mainline.iter().enumerate().map(|(i, &p)| LaneVehicle::new(i as u32 + 1, p, 20.0)).collect(),
                        ramp.iter().enumerate().map(|(i, &p)| LaneVehicle::new(m + i as u32 + 1, p, 20.0)).collect(),
                    )
                    .map_err(|e| CliError::Config(ConfigError { origin: "arguments".into(), line: None, message: e.to_string() }))?
                }
            };
            let seq = vrmerge_core::virtual_axis::sequence(&pool);
            let mut text = String::new();
            let _ = writeln!(text, "seq  id  lane  position");
            for (i, e) in seq.entries().iter().enumerate() {
                let _ = writeln!(text, "{:>3} {:>3}  {:>4}  {}", i + 1, e.id, e.lane.letter(), e.position);
            }
            let _ = writeln!(text, "positions: {:?}", seq.positions());
            let _ = writeln!(text, "flags: {:?}", seq.flags());
            Ok(text)
        }
        Command::Topology { flags } => topology(&flags),
        Command::Replicate { experiment, out } => replicate(experiment, &out),
    }
}

fn scheme_name(s: WeightScheme) -> &'static str {
    s.name()
}

pub fn parse_flags(flags: &str) -> CliResult<Vec<Lane>> {
    let lanes: Option<Vec<Lane>> = flags
        .chars()
        .filter(|c| !matches!(c, ',' | ' '))
        .map(|c| match c {
            'M' | 'm' | '1' => Some(Lane::Main),
            'R' | 'r' | '0' => Some(Lane::Ramp),
            _ => None,
        })
        .collect();
    match lanes {
        Some(l) if !l.is_empty() => Ok(l),
        _ => Err(CliError::Usage(format!("bad lane pattern `{flags}`; use M/R or 1/0"))),
    }
}

fn topology(flags: &str) -> CliResult<String> {
    let lanes = parse_flags(flags)?;
    let topo = build_topology(&lanes);
    let mut text = String::new();
    let _ = writeln!(text, "vehicle lane  N  predecessors (nearest first)");
    for j in 0..lanes.len() {
        let preds: Vec<String> = topo.predecessors(j)?.iter().map(|p| (p + 1).to_string()).collect();
        let _ = writeln!(text, "{:>7} {:>4} {:>2}  [{}]", j + 1, lanes[j].letter(), preds.len(), preds.join(", "));
    }
    let _ = writeln!(text, "adjacency (row = sender, column = receiver):");
    for row in topo.adjacency_rows() {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(text, "  {}", cells.join(" "));
    }
    Ok(text)
}

fn format_report(cfg: &ControllerConfig, n: usize, r: &StabilityReport) -> String {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "scheme={} omega_e={} omega_v={} tau={} N={n}",
        cfg.scheme.name(),
        cfg.omega_e,
        cfg.omega_v,
        cfg.tau
    );
    let _ = writeln!(text, "  local stability: {:?}", r.local);
    for (k, h) in r.norms.iter().enumerate() {
        let _ = writeln!(text, "  ||Q_{}||inf = {:.6} at omega = {:.4} rad/s", k + 1, h.value, h.argmax_omega);
    }
    let _ = writeln!(text, "  every ||Q_k|| <= 1/N: {}", r.per_predecessor_holds);
    let _ = writeln!(text, "  sum of norms = {:.6} (<= 1: {})", r.sum.value, r.sum.holds);
    let _ = writeln!(text, "  closed-form margin = {:.6} (holds: {})", r.closed_form.margin, r.closed_form.holds);
    let _ = writeln!(text, "  string stable: {}", r.string_stable());
    text
}

fn analyze(cfg: &ControllerConfig, counts: &BTreeSet<usize>, out: Option<&Path>) -> CliResult<String> {
    let mut text = String::new();
    let mut unstable = Vec::new();
    for &n in counts {
        let report = stability::analyze(cfg.scheme, cfg.omega_e, cfg.omega_v, cfg.tau, n)?;
        text.push_str(&format_report(cfg, n, &report));
        if !report.string_stable() {
            unstable.push(n);
        }
    }
    if let Some(dir) = out {
        ensure_dir(dir)?;
        std::fs::write(dir.join("stability.txt"), &text).context("writing stability report")?;
        for &n in counts {
            let spec = stability::TransferSpec::with_scheme(cfg.omega_e, cfg.omega_v, cfg.tau, cfg.scheme, n)?;
            let mut plot = svg::LinePlot::new(format!("|Q_k(jw)|, N = {n}"), "log10 omega (rad/s)", "magnitude");
            for k in 1..=n {
                let pts: Vec<(f64, f64)> = (0..=400)
                    .map(|i| {
                        let lw = -3.0 + 6.0 * i as f64 / 400.0;
                        let mag = stability::q_eval(&spec, k, 10f64.powf(lw)).map(|q| q.norm()).unwrap_or(f64::NAN);
                        (lw, mag)
                    })
                    .collect();
                plot.push(svg::Series::new(format!("k = {k}"), k - 1, pts));
            }
            std::fs::write(dir.join(format!("magnitude_n{n}.svg")), plot.render()).context("writing magnitude plot")?;
        }
    }
    if unstable.is_empty() {
        Ok(text)
    } else {
        Err(CliError::Infeasible(format!("infeasible for N = {unstable:?}\n{text}")))
    }
}

fn region_svg(scheme: WeightScheme, tau: f64, n: usize, dir: &Path) -> CliResult<(f64, f64)> {
    let region = stability::feasible_region(scheme, tau, n, RegionGrid::default())?;
    let svg = svg::render_region(&region, &format!("{} weights, tau = {tau}, N = {n}", scheme.name()));
    let name = format!("region_{}_tau{}_n{n}.svg", scheme.name(), tau);
    std::fs::write(dir.join(name), svg).context("writing region figure")?;
    Ok((region.slope, region.area()))
}

fn metrics_text(trace: &SimulationTrace, m: &MetricsReport) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "scenario: {}", trace.name);
    let _ = writeln!(text, "status: {:?}, samples: {}", trace.status, trace.len());
    let _ = writeln!(text, "veh lane  p2p_speed  energy_abs   energy_dev  min_gap   mean|e|_tail  converged_at  energy_ok");
    for (i, v) in m.vehicles.iter().enumerate() {
        let verdict = m.energy.verdicts.iter().find(|x| x.vehicle == i);
        let _ = writeln!(
            text,
            "{:>3} {:>4}  {:>9.4}  {:>11.3}  {:>10.4}  {:>8}  {:>12.4}  {:>12}  {}",
            i + 1,
            trace.vehicles[i].lane.letter(),
            v.peak_to_peak_speed,
            v.energy_absolute,
            v.energy_deviation,
            v.min_gap.map_or("-".to_string(), |g| format!("{g:.3}")),
            v.mean_abs_error_tail,
            v.convergence_time.map_or("-".to_string(), |t| format!("{t:.2}")),
            verdict.map_or("-".to_string(), |x| x.holds.to_string()),
        );
    }
    let _ = writeln!(text, "void (t, sum max(0, gap - desired), sum |gap - desired|):");
    for ((t, v), (_, mm)) in m.void.iter().zip(&m.spacing_mismatch).filter(|((t, _), _)| (t.round() as i64) % 5 == 0) {
        let _ = writeln!(text, "  {t:>6.1}  {v:>10.4}  {mm:>10.4}");
    }
    text
}

/// Runs a scenario and writes trace.csv, metrics.txt and (optionally) figures.
pub fn simulate(scenario: &ScenarioConfig, out: &Path, plots_on: bool) -> CliResult<String> {
    ensure_dir(out)?;
    let trace = sim::run(scenario)?;
    trace_io::write_trace(&trace, Some(&config::to_toml(scenario)), &out.join("trace.csv"))?;
    let opts = MetricsOptions { transient: MetricsOptions::default().transient.min(0.5 * scenario.duration), ..Default::default() };
    let text = match sim::metrics(&trace, &scenario.controller, &opts) {
        Ok(m) => {
            let text = metrics_text(&trace, &m);
            if plots_on {
                plots::energy_chart(&m.energy, "speed energy per vehicle", out, "energy.svg")?;
            }
            text
        }
        Err(vrmerge_core::Error::TraceTooShort(_)) => format!("scenario: {}\ntrace too short for metrics\n", trace.name),
        Err(e) => return Err(e.into()),
    };
    std::fs::write(out.join("metrics.txt"), &text).context("writing metrics")?;
    if plots_on && !trace.is_empty() {
        plots::state_panels(&trace, out)?;
        plots::spacing_panels(&trace, out)?;
        if trace.vehicles.iter().any(|v| v.lateral.is_some()) {
            plots::lateral_panels(&trace, out)?;
        }
    }
    if trace.collided() {
        return Err(CliError::Collision(format!("collision at t = {:.3} s\n{text}", trace.times[trace.len() - 1])));
    }
    Ok(text)
}

fn replicate(experiment: Experiment, out: &Path) -> CliResult<String> {
    ensure_dir(out)?;
    match experiment {
        Experiment::Regions => {
            let mut text = String::new();
            for scheme in [WeightScheme::Equal, WeightScheme::Geometric] {
                for tau in [0.5, 1.0, 1.5] {
                    for n in 1..=6 {
                        let (slope, area) = region_svg(scheme, tau, n, out)?;
                        let _ = writeln!(text, "{} tau={tau} N={n}: slope {slope:.6}, area {area:.4}", scheme.name());
                    }
                }
            }
            std::fs::write(out.join("regions.txt"), &text).context("writing region summary")?;
            Ok(text)
        }
        Experiment::TwelveEqual => simulate(&scenarios::twelve_vehicle(WeightScheme::Equal), out, true),
        Experiment::TwelveGeometric => simulate(&scenarios::twelve_vehicle(WeightScheme::Geometric), out, true),
        Experiment::Energy => {
            let mut text = String::new();
            for scheme in [WeightScheme::Equal, WeightScheme::Geometric] {
                let scenario = scenarios::twelve_vehicle(scheme);
                let trace = sim::run(&scenario)?;
                for mode in [EnergyMode::Absolute, EnergyMode::Deviation] {
                    let report = stability::energy_report(&trace.speeds(), trace.sample_dt, &trace.topology, mode)?;
                    let tag = match mode {
                        EnergyMode::Absolute => "absolute",
                        EnergyMode::Deviation => "deviation",
                    };
                    plots::energy_chart(&report, &format!("{} weights, {tag} energy", scheme.name()), out, &format!("energy_{}_{tag}.svg", scheme.name()))?;
                    let _ = writeln!(
                        text,
                        "{} {tag}: all verdicts hold = {}",
                        scheme.name(),
                        report.all_hold()
                    );
                }
            }
            std::fs::write(out.join("energy.txt"), &text).context("writing energy summary")?;
            Ok(text)
        }
        Experiment::ExtremeMerge => simulate(&scenarios::four_vehicle_extreme(), out, true),
        Experiment::CurvedRamp => simulate(&scenarios::curved_ramp(), out, true),
    }
}

/// Convenience for tests: parse positions like `0,-30,-46`.
pub fn parse_positions(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<f64>().map_err(|e| anyhow!("bad position `{p}`: {e}")))
        .collect()
}
