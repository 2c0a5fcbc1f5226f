use std::env;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use wavescatter::harness::{
    analytic_table, convergence_study, emit, run, sweep, OutputFormat, SweepError,
};
use wavescatter::{
    Error, ErrorCategory, RunConfig, Scenario, Scheme, SweepAxis, SweepSpec, Table, TableRow,
    UnitSystem,
};

/// Directory for outputs when `--out` is not given.
const OUT_DIR_VAR: &str = "WAVESCATTER_OUT_DIR";

#[derive(Parser)]
#[command(name = "wavescatter", version, about = "Wave-packet scattering from a potential step")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the stationary R and T over E/V0; no simulation.
    Analytic {
        #[arg(long, default_value_t = 5.0)]
        k0: f64,
        /// E/V0 values.
        #[arg(long, value_delimiter = ',', default_values_t = default_ratios())]
        ratios: Vec<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Simulate one scattering run (the headline scenario unless --config).
    Run {
        /// Run configuration (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        /// Packet width in incident wavelengths.
        #[arg(long)]
        width: Option<f64>,
        #[arg(long)]
        energy_ratio: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Measured vs analytic probabilities across E/V0.
    Sweep {
        /// Sweep specification (TOML) with an energy_ratio axis.
        #[arg(long)]
        config: Option<PathBuf>,
        /// E/V0 values [default: 0.5,1.5,2,4,8].
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
        /// Packet width in incident wavelengths [default: 200].
        #[arg(long)]
        width: Option<f64>,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// The same run at several packet widths.
    Converge {
        /// Sweep specification (TOML) with a packet_width axis.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Packet widths in incident wavelengths [default: 25,50,100,200].
        #[arg(long, value_delimiter = ',')]
        widths: Option<Vec<f64>>,
        /// [default: 2]
        #[arg(long)]
        energy_ratio: Option<f64>,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Re-emit a saved table (CSV or JSON) in another format.
    Emit {
        /// Table written by an earlier command.
        input: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn default_ratios() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0]
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; defaults to <command>.<ext> in $WAVESCATTER_OUT_DIR or
    /// the current directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Plot,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Cn,
    Split,
}

impl From<SchemeArg> for Scheme {
    fn from(arg: SchemeArg) -> Self {
        match arg {
            SchemeArg::Cn => Scheme::CrankNicolson,
            SchemeArg::Split => Scheme::SplitStepSpectral,
        }
    }
}

impl OutputArgs {
    fn format(&self) -> OutputFormat {
        match self.format {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Plot => OutputFormat::PlotScript,
        }
    }

    fn path(&self, command: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            let extension = match self.format {
                FormatArg::Csv => "csv",
                FormatArg::Json => "json",
                FormatArg::Plot => "gp",
            };
            let dir = env::var_os(OUT_DIR_VAR).map_or_else(|| PathBuf::from("."), PathBuf::from);
            dir.join(format!("{command}.{extension}"))
        })
    }

    fn write(&self, table: &Table, command: &str) -> wavescatter::Result<()> {
        for path in emit(table, self.format(), &self.path(command))? {
            println!("wrote {}", path.display());
        }
        Ok(())
    }
}

/// Warns about a flag that a configuration file overrides.
fn ignored_flag(flag: &str, given: bool, config: &Path) {
    if given {
        warn!("{flag} ignored: {} takes precedence", config.display());
    }
}

fn given_flags(flags: &[(&'static str, bool)]) -> Vec<&'static str> {
    flags.iter().filter(|(_, given)| *given).map(|(name, _)| *name).collect()
}

fn scheme_or_default(scheme: Option<SchemeArg>) -> Scheme {
    scheme.map_or(Scheme::CrankNicolson, Scheme::from)
}

fn base_config(energy_ratio: f64, width: f64, scheme: Option<SchemeArg>) -> wavescatter::Result<RunConfig> {
    Scenario::step(5.0, energy_ratio, width)
        .with_scheme(scheme_or_default(scheme))
        .to_config()
}

/// Flags a sweep can be built from when there is no sweep file.
struct SweepFlags<'a> {
    axis: SweepAxis,
    base: Box<dyn FnOnce() -> wavescatter::Result<RunConfig> + 'a>,
    /// Names of the axis and base flags the user actually gave.
    given: Vec<&'static str>,
    scheme: Option<SchemeArg>,
    jobs: Option<usize>,
}

/// Loads the sweep file, or builds the sweep from flags; file settings win.
fn sweep_spec(config: Option<&Path>, flags: SweepFlags) -> wavescatter::Result<SweepSpec> {
    let SweepFlags {
        axis,
        base,
        given,
        scheme,
        jobs,
    } = flags;
    match config {
        Some(path) => {
            let mut spec = SweepSpec::load(path)?;
            ignored_flag("--scheme", scheme.is_some(), path);
            for flag in given {
                ignored_flag(flag, true, path);
            }
            match (spec.jobs, jobs) {
                (Some(_), Some(_)) => ignored_flag("--jobs", true, path),
                (None, Some(n)) => spec.jobs = Some(n),
                _ => {}
            }
            Ok(spec)
        }
        None => {
            let mut spec = SweepSpec::new(base()?, axis);
            spec.jobs = jobs;
            spec.validate()?;
            Ok(spec)
        }
    }
}

/// Saves what a failed sweep finished, next to where the full table would
/// have gone.
fn persist_partial(failure: SweepError, output: &OutputArgs, command: &str) -> Error {
    let path = output.path(command);
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(command);
    let extension = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    let partial = path.with_file_name(format!("{stem}.partial.{extension}"));
    if failure.partial.rows.is_empty() {
        warn!("no rows finished before the failure");
    } else {
        match emit(&failure.partial, output.format(), &partial) {
            Ok(paths) => {
                for p in paths {
                    warn!("partial table ({} rows) saved to {}", failure.partial.rows.len(), p.display());
                }
            }
            Err(e) => warn!("could not save partial table: {e}"),
        }
    }
    failure.source
}

fn print_result(config: &RunConfig, row: &TableRow) {
    let show = |name: &str, value: Option<f64>| {
        if let Some(v) = value {
            println!("{name:>16} = {v:.6}");
        }
    };
    println!("config {}", config.fingerprint());
    show("E/V0", row.e_over_v0);
    show("w_I/lambda0", row.w_over_lambda);
    show("R analytic", row.r_analytic);
    show("P_left", row.p_left);
    show("T analytic", row.t_analytic);
    show("P_right", row.p_right);
    show("w_T/w_I", row.w_t_ratio);
    show("v_left", row.v_left);
    show("v_right", row.v_right);
    show("window measured", row.window_measured);
    show("window analytic", row.window_analytic);
}

fn execute(command: Command) -> wavescatter::Result<()> {
    match command {
        Command::Analytic { k0, ratios, output } => {
            let table = analytic_table(k0, &ratios, UnitSystem::default())?;
            output.write(&table, "analytic")
        }
        Command::Run {
            config,
            scheme,
            width,
            energy_ratio,
            output,
        } => {
            let config = match &config {
                Some(path) => {
                    ignored_flag("--scheme", scheme.is_some(), path);
                    ignored_flag("--width", width.is_some(), path);
                    ignored_flag("--energy-ratio", energy_ratio.is_some(), path);
                    RunConfig::load(path)?
                }
                None => base_config(energy_ratio.unwrap_or(2.0), width.unwrap_or(200.0), scheme)?,
            };
            info!("grid of {} points, dt = {}", config.grid.n_points, config.propagator.dt);
            let result = run(&config)?;
            let row = TableRow::from_result(&config, &result);
            print_result(&config, &row);
            output.write(&Table { rows: vec![row] }, "run")
        }
        Command::Sweep {
            config,
            ratios,
            width,
            scheme,
            jobs,
            output,
        } => {
            let given = given_flags(&[("--ratios", ratios.is_some()), ("--width", width.is_some())]);
            let flags = SweepFlags {
                axis: SweepAxis::EnergyRatio {
                    values: ratios.unwrap_or_else(|| vec![0.5, 1.5, 2.0, 4.0, 8.0]),
                },
                base: Box::new(move || base_config(2.0, width.unwrap_or(200.0), scheme)),
                given,
                scheme,
                jobs,
            };
            let spec = sweep_spec(config.as_deref(), flags)?;
            let table = sweep(&spec).map_err(|e| persist_partial(e, &output, "sweep"))?;
            output.write(&table, "sweep")
        }
        Command::Converge {
            config,
            widths,
            energy_ratio,
            scheme,
            jobs,
            output,
        } => {
            let given = given_flags(&[
                ("--widths", widths.is_some()),
                ("--energy-ratio", energy_ratio.is_some()),
            ]);
            let flags = SweepFlags {
                axis: SweepAxis::PacketWidth {
                    values: widths.unwrap_or_else(|| vec![25.0, 50.0, 100.0, 200.0]),
                },
                base: Box::new(move || base_config(energy_ratio.unwrap_or(2.0), 200.0, scheme)),
                given,
                scheme,
                jobs,
            };
            let spec = sweep_spec(config.as_deref(), flags)?;
            let study = convergence_study(&spec).map_err(|e| persist_partial(e, &output, "converge"))?;
            println!("{:>10} {:>12} {:>12} {:>10} {:>10}", "w/lambda0", "|P_L - R|", "|P_R - T|", "w_T/w_I", "window");
            for row in &study.rows {
                let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.5}"));
                println!(
                    "{:>10} {:>12.3e} {:>12.3e} {:>10} {:>10}",
                    row.w_over_lambda,
                    row.error_r,
                    row.error_t,
                    opt(row.w_t_ratio),
                    opt(row.window_ratio)
                );
            }
            if !study.is_converging() {
                warn!("errors do not decrease over the widest three packets");
            }
            output.write(&study.table(), "converge")
        }
        Command::Emit { input, output } => {
            let table = Table::load(&input)?;
            output.write(&table, "emit")
        }
    }
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Config => 3,
        ErrorCategory::Physics => 4,
        ErrorCategory::Io => 5,
    }
}

fn report(error: &impl Display) {
    eprintln!("error: {error}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(exit_code(e.category()))
        }
    }
}
