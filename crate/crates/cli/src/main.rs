//! `aqc-tsp`: command-line front end for the adiabatic TSP simulator.

mod commands;
mod config;
mod report;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aqc_tsp::evolution::Stepper;
use aqc_tsp::schedule::Schedule;
use aqc_tsp::search::{ScheduleFamily, ThresholdOptions};
use aqc_tsp::tsp_model::{FilterFault, PenaltyVariant};

use config::{parse_schedule, ReportFormat, RunConfig, Theta};

/// Bad input: malformed files, inconsistent instances, unusable flags.
#[derive(Debug)]
pub struct ValidationError(pub String);

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ValidationError {}

/// A numerical or structural check failed at run time.
#[derive(Debug)]
pub struct InvariantFailure(pub String);

impl fmt::Display for InvariantFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvariantFailure {}

#[derive(Parser)]
#[command(name = "aqc-tsp", version, about = "Adiabatic quantum computation for the travelling salesman problem")]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace); RUST_LOG also works.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Shortest tour by exhaustive search.
    SolveClassical(RunArgs),
    /// Exhaustive check of the filtering operator on every vacuum configuration.
    VerifyFilter {
        /// Number of cities (defaults to the instance size, else 3).
        #[arg(long)]
        cities: Option<usize>,
        /// Corrupt the filter on purpose, to see the checks fail.
        #[arg(long, value_parser = parse_fault, default_value = "none")]
        inject_fault: FilterFault,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Lowest levels of the interpolated Hamiltonian along the schedule.
    Spectrum(RunArgs),
    /// Time evolution from the initial ground state.
    Evolve(RunArgs),
    /// Time-energy bounds for a TSP instance or an unstructured search.
    Bounds {
        /// Analyse a search over this many states instead of a TSP instance.
        #[arg(long)]
        search_m: Option<usize>,
        /// Marked state for --search-m.
        #[arg(long, default_value_t = 0)]
        marked: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Threshold durations of unstructured search against M.
    SearchBench {
        /// Comma-separated search sizes.
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32,64")]
        ms: Vec<usize>,
        /// Comma-separated schedule families.
        #[arg(long, value_delimiter = ',', value_parser = parse_family,
              default_value = "linear,scaled_sqrt_m,quadratic_boost_sqrt_m,exponential_boost")]
        families: Vec<ScheduleFamily>,
        /// Success probability defining the threshold duration.
        #[arg(long, default_value_t = 0.5)]
        target: f64,
        #[arg(long, default_value_t = 400)]
        steps_per_run: usize,
        #[command(flatten)]
        run: RunArgs,
    },
}

/// Run settings. Flags override values from `--config`.
#[derive(Args, Default)]
struct RunArgs {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Distance matrix file (TOML, or JSON by extension).
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Coherent-state parameter, or "auto".
    #[arg(long)]
    theta: Option<Theta>,
    #[arg(long)]
    per_mode_max: Option<u8>,
    #[arg(long)]
    link_total_max: Option<u32>,
    /// One mode per unordered city pair; requires a symmetric matrix.
    #[arg(long)]
    symmetric_links: bool,
    /// Slack factor in the penalty scale s.
    #[arg(long)]
    epsilon_s: Option<f64>,
    /// hermitian-square or squared-plus-hc.
    #[arg(long, value_parser = parse_penalty)]
    penalty: Option<PenaltyVariant>,
    /// linear, scaled=K, quadratic-boost=K or exponential-boost=M.
    #[arg(long, value_parser = parse_schedule)]
    schedule: Option<Schedule>,
    #[arg(long, short = 'T')]
    total_time: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// midpoint or magnus4.
    #[arg(long, value_parser = parse_stepper)]
    stepper: Option<Stepper>,
    /// Levels tracked by `spectrum`.
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    tau_samples: Option<usize>,
    #[arg(long)]
    sample_stride: Option<usize>,
    /// Write reports and tables here instead of printing to stdout.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<ReportFormat>,
}

impl RunArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path).map_err(|e| ValidationError(format!("{e:#}")))?,
            None => RunConfig::default(),
        };
        if self.instance.is_some() {
            c.instance.clone_from(&self.instance);
        }
        if self.output_dir.is_some() {
            c.output_dir.clone_from(&self.output_dir);
        }
        if self.link_total_max.is_some() {
            c.link_total_max = self.link_total_max;
        }
        c.symmetric_links |= self.symmetric_links;
        set(&mut c.theta, self.theta);
        set(&mut c.per_mode_max, self.per_mode_max);
        set(&mut c.epsilon_s, self.epsilon_s);
        set(&mut c.penalty, self.penalty);
        set(&mut c.schedule, self.schedule.clone());
        set(&mut c.total_time, self.total_time);
        set(&mut c.dt, self.dt);
        set(&mut c.stepper, self.stepper);
        set(&mut c.levels, self.levels);
        set(&mut c.tau_samples, self.tau_samples);
        set(&mut c.sample_stride, self.sample_stride);
        set(&mut c.format, self.format);
        check_config(&c)?;
        Ok(c)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn check_config(c: &RunConfig) -> anyhow::Result<()> {
    let bad = |msg: String| Err(ValidationError(msg).into());
    if !(c.total_time.is_finite() && c.total_time >= 0.0) {
        return bad(format!("total_time must be finite and >= 0, got {}", c.total_time));
    }
    if !(c.dt.is_finite() && c.dt > 0.0) {
        return bad(format!("dt must be positive, got {}", c.dt));
    }
    if !(c.epsilon_s.is_finite() && c.epsilon_s > 0.0) {
        return bad(format!("epsilon_s must be positive, got {}", c.epsilon_s));
    }
    if let Theta::Value(t) = c.theta {
        if !t.is_finite() {
            return bad(format!("theta must be finite, got {t}"));
        }
    }
    if c.sample_stride == 0 {
        return bad("sample_stride must be at least 1".into());
    }
    c.schedule.validate().map_err(|e| ValidationError(e.to_string()))?;
    Ok(())
}

fn parse_fault(s: &str) -> Result<FilterFault, String> {
    match s {
        "none" => Ok(FilterFault::None),
        "detached-hook" | "detached_hook" => Ok(FilterFault::DetachedHook),
        _ => Err(format!("unknown fault {s:?}; use none or detached-hook")),
    }
}

fn parse_penalty(s: &str) -> Result<PenaltyVariant, String> {
    match s.replace('_', "-").as_str() {
        "hermitian-square" => Ok(PenaltyVariant::HermitianSquare),
        "squared-plus-hc" => Ok(PenaltyVariant::SquaredPlusHc),
        _ => Err(format!("unknown penalty {s:?}; use hermitian-square or squared-plus-hc")),
    }
}

fn parse_stepper(s: &str) -> Result<Stepper, String> {
    match s {
        "midpoint" => Ok(Stepper::Midpoint),
        "magnus4" => Ok(Stepper::Magnus4),
        _ => Err(format!("unknown stepper {s:?}; use midpoint or magnus4")),
    }
}

fn parse_family(s: &str) -> Result<ScheduleFamily, String> {
    match s.trim().replace('-', "_").as_str() {
        "linear" => Ok(ScheduleFamily::Linear),
        "scaled_sqrt_m" => Ok(ScheduleFamily::ScaledSqrtM),
        "quadratic_boost_sqrt_m" => Ok(ScheduleFamily::QuadraticBoostSqrtM),
        "exponential_boost" => Ok(ScheduleFamily::ExponentialBoost),
        _ => Err(format!(
            "unknown family {s:?}; use linear, scaled_sqrt_m, quadratic_boost_sqrt_m or exponential_boost"
        )),
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::SolveClassical(run) => commands::solve_classical(&run.resolve()?),
        Command::VerifyFilter { cities, inject_fault, run } => {
            commands::verify_filter_cmd(&run.resolve()?, cities, inject_fault)
        }
        Command::Spectrum(run) => commands::spectrum(&run.resolve()?),
        Command::Evolve(run) => commands::evolve_cmd(&run.resolve()?),
        Command::Bounds { search_m, marked, run } => commands::bounds_cmd(&run.resolve()?, search_m, marked),
        Command::SearchBench { ms, families, target, steps_per_run, run } => {
            if !(target > 0.0 && target < 1.0) {
                return Err(ValidationError(format!("target must lie in (0, 1), got {target}")).into());
            }
            if steps_per_run == 0 {
                return Err(ValidationError("steps_per_run must be at least 1".into()).into());
            }
            let options = ThresholdOptions { target, steps_per_run, ..ThresholdOptions::default() };
            commands::search_bench(&run.resolve()?, &ms, &families, options)
        }
    }
}

/// Exit status and a remediation hint for a failed run.
fn classify(err: &anyhow::Error) -> (u8, Option<&'static str>) {
    use aqc_tsp::Error as E;
    if err.downcast_ref::<InvariantFailure>().is_some() {
        return (3, None);
    }
    match err.downcast_ref::<E>() {
        Some(E::Capacity { .. } | E::TooLarge(_)) => {
            (2, Some("lower --per-mode-max or --link-total-max, or use fewer cities"))
        }
        Some(E::UnitarityDrift { .. }) => (3, Some("reduce --dt or switch to --stepper magnus4")),
        Some(E::NoConvergence { .. }) => (3, Some("the solver did not converge; try a smaller problem or larger --total-time range")),
        Some(E::NotInvariant(_) | E::NotProjector(_)) => (3, None),
        Some(E::InvalidInstance(_)) => (1, Some("check the distance matrix, or drop --symmetric-links")),
        _ => (1, None),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log_level).parse_default_env().init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, hint) = classify(&e);
            eprintln!("error: {e:#}");
            if let Some(h) = hint {
                eprintln!("hint: {h}");
            }
            ExitCode::from(code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_file() {
        let dir = std::env::temp_dir().join(format!("aqc-tsp-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.toml");
        std::fs::write(&path, "total_time = 7.0\ndt = 0.1\n[schedule]\nkind = \"scaled\"\nk = 2.0\n").unwrap();
        let args = RunArgs { config: Some(path), dt: Some(0.02), ..RunArgs::default() };
        let c = args.resolve().unwrap();
        assert_eq!((c.total_time, c.dt), (7.0, 0.02));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn bad_settings_are_validation_errors() {
        let args = RunArgs { dt: Some(0.0), ..RunArgs::default() };
        let err = args.resolve().unwrap_err();
        assert_eq!(classify(&err).0, 1);
        assert!(err.downcast_ref::<ValidationError>().is_some());
    }

    #[test]
    fn capacity_maps_to_exit_two() {
        let err = anyhow::Error::from(aqc_tsp::Error::TooLarge("x".into()));
        assert_eq!(classify(&err).0, 2);
        let err = anyhow::Error::from(InvariantFailure("x".into()));
        assert_eq!(classify(&err).0, 3);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
