//! Command-line front end for `nhfloquet`.
//!
//! Every subcommand resolves a fully explicit configuration (config file,
//! then flags), echoes it as the first line of its output and writes CSV or
//! JSON. Errors are reported as one line, `error[kind]: message`, with a
//! distinct exit code per kind.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{parse_config, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Compute(String),
    #[error("{0}")]
    SelfTest(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Compute(_) => "compute",
            CliError::SelfTest(_) => "selftest",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Io(_) => 4,
            CliError::Compute(_) => 5,
            CliError::SelfTest(_) => 6,
        }
    }
}

impl From<nhfloquet::Error> for CliError {
    fn from(e: nhfloquet::Error) -> Self {
        use nhfloquet::Error::*;
        match e {
            StepUnderflow { .. } | TooManySteps { .. } | Eigensolver(_) | MarginalPower => CliError::Compute(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

const AFTER_HELP: &str = "\
Values: ranges are a:b:n (n points, both ends included); reals accept pi
expressions such as pi, 2pi, -pi/2; complex values look like 1.5, 0.5i, 1-2i.

Config files hold `key = value` lines with the flag names as keys (dashes or
underscores). An earlier output file is also a valid config: its header line
reproduces the run. Flags override file values.

Exit codes: 0 success, 2 usage, 3 configuration, 4 output I/O,
5 computation, 6 selftest failure.";

#[derive(Debug, Parser)]
#[command(name = "nhfloquet", version, about = "Floquet stability of driven non-Hermitian two-level systems and their mapped lattice bands", after_help = AFTER_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate U(t) and write the matrix, Pauli components or eigenvalues
    Propagate(PropagateArgs),
    /// Floquet operator U(T), its half-trace and stability class (JSON by default)
    Floquet(FloquetArgs),
    /// Spin populations over several periods
    Dynamics(DynamicsArgs),
    /// Fourier coefficients or samples of the mapped lattice potential
    Potential(PotentialArgs),
    /// Band structure of the mapped lattice potential
    Bands(BandsArgs),
    /// Floquet-side dispersion against the band curves of the mapped potential
    Dispersion(DispersionArgs),
    /// Stability classification over a (gamma, mu) grid
    PhaseDiagram(PhaseDiagramArgs),
    /// Stability over rational alpha = p/q and gamma^2 for H3/H4
    Butterfly(ButterflyArgs),
    /// Run the built-in invariant checks
    Selftest(SelftestArgs),
}

macro_rules! pairs {
    ($self:ident, $v:ident; $($field:ident => $key:literal),* $(,)?) => {
        $( if let Some(x) = &$self.$field { $v.push(($key, x.clone())); } )*
    };
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Config file (key = value, or an earlier output file)
    #[arg(long, short = 'c')]
    pub config: Option<String>,
    /// Driving preset: H1, H1b, H2, H3, H4
    #[arg(long, alias = "from-model")]
    pub preset: Option<String>,
    /// Rational frequency ratio p/q (H3, H4)
    #[arg(long)]
    pub alpha: Option<String>,
}

impl ModelArgs {
    fn pairs(&self, v: &mut Vec<(&'static str, String)>) {
        pairs!(self, v; preset => "preset", alpha => "alpha");
    }
}

#[derive(Debug, Clone, Args)]
pub struct AmplitudeArgs {
    /// Static amplitude gamma, real or purely imaginary
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<String>,
    /// Signed gamma^2 (negative selects imaginary gamma); excludes --gamma
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_sq: Option<String>,
    /// Drive strength
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<String>,
}

impl AmplitudeArgs {
    fn pairs(&self, v: &mut Vec<(&'static str, String)>) {
        pairs!(self, v; gamma => "gamma", gamma_sq => "gamma_sq", mu => "mu");
    }
}

#[derive(Debug, Clone, Args)]
pub struct IntegratorArgs {
    /// adaptive (Dormand-Prince 5(4)) or midpoint-exp (fixed step)
    #[arg(long)]
    pub method: Option<String>,
    /// Relative tolerance of the adaptive integrator
    #[arg(long)]
    pub rtol: Option<String>,
    /// Absolute tolerance of the adaptive integrator
    #[arg(long)]
    pub atol: Option<String>,
    /// Largest step (fixed step for midpoint-exp)
    #[arg(long)]
    pub max_step: Option<String>,
    /// Output samples per period
    #[arg(long)]
    pub samples: Option<String>,
}

impl IntegratorArgs {
    fn pairs(&self, v: &mut Vec<(&'static str, String)>) {
        pairs!(self, v; method => "method", rtol => "rtol", atol => "atol", max_step => "max_step", samples => "samples");
    }
}

#[derive(Debug, Clone, Args)]
pub struct ToleranceArgs {
    /// Largest |Im u0(T)| still counted as real
    #[arg(long)]
    pub tol_phase: Option<String>,
    /// Width of the marginal band around |u0(T)| = 1
    #[arg(long)]
    pub tol_edge: Option<String>,
}

impl ToleranceArgs {
    fn pairs(&self, v: &mut Vec<(&'static str, String)>) {
        pairs!(self, v; tol_phase => "tol_phase", tol_edge => "tol_edge");
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output file (stdout when absent); a file prefix for `dispersion`
    #[arg(long, short = 'o')]
    pub output: Option<String>,
    /// csv or json
    #[arg(long)]
    pub format: Option<String>,
    /// Worker threads for parallel scans
    #[arg(long, env = "NHFLOQUET_WORKERS")]
    pub workers: Option<usize>,
}

impl OutputArgs {
    fn pairs(&self, v: &mut Vec<(&'static str, String)>) {
        pairs!(self, v; format => "format");
    }
}

#[derive(Debug, Clone, Args)]
pub struct PropagateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub amplitude: AmplitudeArgs,
    #[command(flatten)]
    pub integrator: IntegratorArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// matrix, pauli or spectrum
    #[arg(long)]
    pub quantity: Option<String>,
    /// End time (default: one period)
    #[arg(long)]
    pub t_end: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct FloquetArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub amplitude: AmplitudeArgs,
    #[command(flatten)]
    pub integrator: IntegratorArgs,
    #[command(flatten)]
    pub tolerances: ToleranceArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DynamicsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub amplitude: AmplitudeArgs,
    #[command(flatten)]
    pub integrator: IntegratorArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Number of periods
    #[arg(long)]
    pub periods: Option<String>,
    /// Initial state: up or down
    #[arg(long)]
    pub initial: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct PotentialArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Drive strength
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
    /// plus (b^2 + b') or minus (b^2 - b')
    #[arg(long)]
    pub sign: Option<String>,
    /// Sample V on this x range instead of listing Fourier coefficients
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct BandsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Drive strength
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
    /// plus or minus
    #[arg(long)]
    pub sign: Option<String>,
    /// Bloch momenta a:b:n within the first zone (default 0:pi/L:101)
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<String>,
    /// Bands per k
    #[arg(long)]
    pub n_bands: Option<String>,
    /// Plane-wave cutoff M (2M+1 waves)
    #[arg(long)]
    pub truncation: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct DispersionArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Drive strength
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<String>,
    /// gamma^2 grid a:b:n
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_sq: Option<String>,
    #[command(flatten)]
    pub integrator: IntegratorArgs,
    #[command(flatten)]
    pub tolerances: ToleranceArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Band-curve samples over kL in [0, pi]
    #[arg(long)]
    pub k_points: Option<String>,
    /// Bands per k
    #[arg(long)]
    pub n_bands: Option<String>,
    /// Plane-wave cutoff M
    #[arg(long)]
    pub truncation: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct PhaseDiagramArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// gamma grid a:b:n
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<String>,
    /// gamma^2 grid a:b:n (excludes --gamma)
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_sq: Option<String>,
    /// mu grid a:b:n
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<String>,
    #[command(flatten)]
    pub integrator: IntegratorArgs,
    #[command(flatten)]
    pub tolerances: ToleranceArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ButterflyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Drive strength
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<String>,
    /// gamma^2 grid a:b:n
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_sq: Option<String>,
    /// Largest denominator q
    #[arg(long)]
    pub q_max: Option<String>,
    /// Lower (exclusive) end of the alpha range
    #[arg(long)]
    pub alpha_min: Option<String>,
    /// Upper (inclusive) end of the alpha range
    #[arg(long)]
    pub alpha_max: Option<String>,
    /// Check stable points against the band problem; summary on stderr
    #[arg(long)]
    pub cross_check: bool,
    #[command(flatten)]
    pub integrator: IntegratorArgs,
    #[command(flatten)]
    pub tolerances: ToleranceArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SelftestArgs {
    /// text or json
    #[arg(long)]
    pub format: Option<String>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Propagate(_) => "propagate",
            Command::Floquet(_) => "floquet",
            Command::Dynamics(_) => "dynamics",
            Command::Potential(_) => "potential",
            Command::Bands(_) => "bands",
            Command::Dispersion(_) => "dispersion",
            Command::PhaseDiagram(_) => "phase-diagram",
            Command::Butterfly(_) => "butterfly",
            Command::Selftest(_) => "selftest",
        }
    }

    /// Flag values as config keys.
    pub fn flag_pairs(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        match self {
            Command::Propagate(a) => {
                a.model.pairs(&mut v);
                a.amplitude.pairs(&mut v);
                a.integrator.pairs(&mut v);
                a.output.pairs(&mut v);
                pairs!(a, v; quantity => "quantity", t_end => "t_end");
            }
            Command::Floquet(a) => {
                a.model.pairs(&mut v);
                a.amplitude.pairs(&mut v);
                a.integrator.pairs(&mut v);
                a.tolerances.pairs(&mut v);
                a.output.pairs(&mut v);
            }
            Command::Dynamics(a) => {
                a.model.pairs(&mut v);
                a.amplitude.pairs(&mut v);
                a.integrator.pairs(&mut v);
                a.output.pairs(&mut v);
                pairs!(a, v; periods => "periods", initial => "initial");
            }
            Command::Potential(a) => {
                a.model.pairs(&mut v);
                a.output.pairs(&mut v);
                pairs!(a, v; mu => "mu", sign => "sign", x => "x");
            }
            Command::Bands(a) => {
                a.model.pairs(&mut v);
                a.output.pairs(&mut v);
                pairs!(a, v; mu => "mu", sign => "sign", k => "k", n_bands => "n_bands", truncation => "truncation");
            }
            Command::Dispersion(a) => {
                a.model.pairs(&mut v);
                a.integrator.pairs(&mut v);
                a.tolerances.pairs(&mut v);
                a.output.pairs(&mut v);
                pairs!(a, v; mu => "mu", gamma_sq => "gamma_sq", k_points => "k_points", n_bands => "n_bands", truncation => "truncation");
            }
            Command::PhaseDiagram(a) => {
                a.model.pairs(&mut v);
                a.integrator.pairs(&mut v);
                a.tolerances.pairs(&mut v);
                a.output.pairs(&mut v);
                pairs!(a, v; gamma => "gamma", gamma_sq => "gamma_sq", mu => "mu");
            }
            Command::Butterfly(a) => {
                a.model.pairs(&mut v);
                a.integrator.pairs(&mut v);
                a.tolerances.pairs(&mut v);
                a.output.pairs(&mut v);
                pairs!(a, v; mu => "mu", gamma_sq => "gamma_sq", q_max => "q_max", alpha_min => "alpha_min", alpha_max => "alpha_max");
            }
            Command::Selftest(_) => {}
        }
        v
    }

    fn model_args(&self) -> Option<&ModelArgs> {
        match self {
            Command::Propagate(a) => Some(&a.model),
            Command::Floquet(a) => Some(&a.model),
            Command::Dynamics(a) => Some(&a.model),
            Command::Potential(a) => Some(&a.model),
            Command::Bands(a) => Some(&a.model),
            Command::Dispersion(a) => Some(&a.model),
            Command::PhaseDiagram(a) => Some(&a.model),
            Command::Butterfly(a) => Some(&a.model),
            Command::Selftest(_) => None,
        }
    }

    fn output_args(&self) -> Option<&OutputArgs> {
        match self {
            Command::Propagate(a) => Some(&a.output),
            Command::Floquet(a) => Some(&a.output),
            Command::Dynamics(a) => Some(&a.output),
            Command::Potential(a) => Some(&a.output),
            Command::Bands(a) => Some(&a.output),
            Command::Dispersion(a) => Some(&a.output),
            Command::PhaseDiagram(a) => Some(&a.output),
            Command::Butterfly(a) => Some(&a.output),
            Command::Selftest(_) => None,
        }
    }
}

/// Runs the CLI with the process's stdout and stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                let _ = write!(err, "{e}");
                return 2;
            }
            let msg = e.to_string();
            let line = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            let _ = writeln!(err, "error[usage]: {line}");
            return 2;
        }
    };
    match dispatch(&cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(err, "error[{}]: {msg}", e.kind());
            e.exit_code()
        }
    }
}

fn dispatch(cmd: &Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    if let Command::Selftest(a) = cmd {
        return commands::selftest(a, out);
    }
    let file_text = match cmd.model_args().and_then(|m| m.config.as_deref()) {
        Some(path) => Some(
            std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read config {path}: {e}")))?,
        ),
        None => None,
    };
    let cfg = parse_config(cmd.name(), file_text.as_deref(), &cmd.flag_pairs())?;
    let output = cmd.output_args().cloned().expect("non-selftest commands have output args");
    let workers = output.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    let cross_check = matches!(cmd, Command::Butterfly(b) if b.cross_check);
    let name = cmd.name();
    let result = nhfloquet::scan::with_workers(workers, move || commands::execute(name, cfg, cross_check))
        .map_err(CliError::from)??;
    commands::emit(&result, output.output.as_deref(), out, err)
}
