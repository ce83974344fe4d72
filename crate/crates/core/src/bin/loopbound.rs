use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use loopbound::bounds::GammaMethod;
use loopbound::cli::{
    cmd_bound, cmd_integral, cmd_simulate, cmd_table, exit_code, parse_coefficients, BoundKind, BoundOptions,
    IntegralKind, IntegralOptions, RunRecord, SimulateOptions, TableId, TableOptions, DEFAULT_SEED, EXIT_OK,
    EXIT_UNRELIABLE,
};
use loopbound::rp_integrals::Beta;
use loopbound::{Error, Result};

#[derive(Parser)]
#[command(name = "loopbound", version, about = "Reflection-positivity bounds and Monte Carlo checks for random loop models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct Output {
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
    /// Add wall time to the record (makes output run-dependent).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    /// Refine every quadrature rule by a factor 2^PRECISION in node count.
    #[arg(long, default_value_t = 0)]
    precision: u32,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Reproduce table 1, 2, 3 or 4.
    Table {
        id: u32,
        /// Diff against the embedded published values.
        #[arg(long)]
        compare: bool,
        /// Dimension for table 2, which does not depend on it.
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate one integral: KIND then key=value pairs (c=1,-1 tail=-1 u=0.5 d=3 alpha=sup).
    Integral {
        kind: String,
        #[arg(value_name = "KEY=VALUE")]
        assignments: Vec<String>,
        /// A number in [0, 1] or `sup`.
        #[arg(long)]
        alpha: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a bound: nn, finite-range, long-range, beta-crit or gamma.
    Bound {
        kind: String,
        #[arg(long, default_value = "2")]
        theta: String,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 0.0)]
        u: f64,
        /// Inverse temperature or `inf`.
        #[arg(long, default_value = "inf")]
        beta: String,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, value_enum, default_value_t = Method::New)]
        method: Method,
        #[command(flatten)]
        common: Common,
    },
    /// Birth–death MCMC for the loop model.
    Simulate {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long = "L", alias = "side", default_value_t = 4)]
        side: usize,
        #[arg(long, default_value = "2")]
        theta: String,
        #[arg(long, default_value_t = 0.5)]
        u: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 1024)]
        sweeps: usize,
        #[arg(long, default_value_t = 1)]
        chains: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Report the Fourier transform of κ and its minimum.
        #[arg(long)]
        fourier_check: bool,
        /// Also run the importance-sampling oracle with this many samples.
        #[arg(long)]
        oracle_samples: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Ueltschi,
    New,
}

fn parse_theta(s: &str) -> Result<u32> {
    match s.trim().parse::<u32>() {
        Ok(t) if t >= 1 => Ok(t),
        _ => Err(Error::Parameter(format!("θ must be a positive integer, got '{s}'"))),
    }
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parameter(format!("bad value for {key}: '{s}'")))
}

fn parse_alpha(s: &str) -> Result<Option<f64>> {
    if s == "sup" {
        Ok(None)
    } else {
        parse_f64("alpha", s).map(Some)
    }
}

fn integral_options(kind: &str, assignments: &[String], alpha: Option<&str>, common: &Common) -> Result<IntegralOptions> {
    let mut opts = IntegralOptions {
        kind: kind.parse::<IntegralKind>()?,
        c: Vec::new(),
        tail: None,
        u: 0.0,
        d: 3,
        alpha: None,
        precision: common.precision,
        seed: common.seed,
    };
    for a in assignments {
        let (key, value) = a
            .split_once('=')
            .ok_or_else(|| Error::Parameter(format!("expected key=value, got '{a}'")))?;
        match key {
            "c" => opts.c = parse_coefficients(value)?,
            "tail" => opts.tail = Some(parse_f64(key, value)?),
            "u" => opts.u = parse_f64(key, value)?,
            "d" => opts.d = value.parse().map_err(|_| Error::Parameter(format!("bad dimension '{value}'")))?,
            "alpha" => opts.alpha = parse_alpha(value)?,
            _ => return Err(Error::Parameter(format!("unknown key '{key}'"))),
        }
    }
    if let Some(a) = alpha {
        opts.alpha = parse_alpha(a)?;
    }
    if opts.c.is_empty() {
        return Err(Error::Parameter("missing c=<coefficients>".into()));
    }
    Ok(opts)
}

fn run(command: &Command) -> Result<RunRecord> {
    match command {
        Command::Table { id, compare, d, common } => cmd_table(&TableOptions {
            table: TableId::from_number(*id)?,
            precision: common.precision,
            seed: common.seed,
            compare: *compare,
            d: *d,
        }),
        Command::Integral { kind, assignments, alpha, common } => {
            cmd_integral(&integral_options(kind, assignments, alpha.as_deref(), common)?)
        }
        Command::Bound { kind, theta, d, u, beta, m, method, common } => cmd_bound(&BoundOptions {
            kind: kind.parse::<BoundKind>()?,
            theta: parse_theta(theta)?,
            d: *d,
            u: *u,
            beta: beta.parse::<Beta>()?,
            m: *m,
            method: match method {
                Method::Ueltschi => GammaMethod::Ueltschi,
                Method::New => GammaMethod::New,
            },
            precision: common.precision,
            seed: common.seed,
        }),
        Command::Simulate { d, side, theta, u, beta, sweeps, chains, seed, fourier_check, oracle_samples } => {
            cmd_simulate(&SimulateOptions {
                d: *d,
                side: *side,
                theta: parse_theta(theta)?,
                u: *u,
                beta: *beta,
                sweeps: *sweeps,
                chains: *chains,
                seed: *seed,
                fourier_check: *fourier_check,
                oracle_samples: *oracle_samples,
            })
        }
    }
}

fn configure_threads() {
    #[cfg(feature = "parallel")]
    if let Some(n) = std::env::var("LOOPBOUND_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let start = Instant::now();
    match run(&cli.command) {
        Ok(mut record) => {
            let elapsed = start.elapsed().as_secs_f64();
            if cli.output.timing {
                record.wall_time_s = Some(elapsed);
            }
            match cli.output.format {
                Format::Json => println!("{}", record.to_json()),
                Format::Csv => print!("{}", record.to_csv()),
            }
            eprintln!("wall time: {elapsed:.3} s");
            for w in &record.warnings {
                eprintln!("warning: {w}");
            }
            let code = if record.warnings.is_empty() { EXIT_OK } else { EXIT_UNRELIABLE };
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
