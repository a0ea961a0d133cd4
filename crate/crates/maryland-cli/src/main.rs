mod artifact;
mod commands;
mod config;
mod error;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maryland::strategy::Strategies;

use artifact::Writer;
use commands::Outcome;
use config::{ExperimentConfig, PRECISION_ENV};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "maryland", version, about = "Numerical experiments on the Maryland model")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Partial quotients, convergents and ||q_n alpha||
    Cf,
    /// Per-scale resonance data: beta_n, delta_n, minimal sites, cosine tables
    Indices,
    /// Lyapunov exponent at each configured energy
    Lyapunov,
    /// Eigenvalues of the box operator
    Spectrum,
    /// Eigenvectors of the box operator (log magnitudes and signs)
    Eigfun,
    /// Uniformity exponent of resonant node sets
    Uniformity,
    /// Subharmonic averages of the regularized determinant
    Herman,
    /// Envelope checks of box eigenfunctions
    VerifyDecay,
    /// Quick invariant suite
    Selftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Cf => "cf",
            Command::Indices => "indices",
            Command::Lyapunov => "lyapunov",
            Command::Spectrum => "spectrum",
            Command::Eigfun => "eigfun",
            Command::Uniformity => "uniformity",
            Command::Herman => "herman",
            Command::VerifyDecay => "verify-decay",
            Command::Selftest => "selftest",
        }
    }
}

/// Flags override the config file, which overrides the defaults.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// JSON experiment config
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// `golden`, a decimal, or comma-separated partial quotients
    #[arg(long, global = true)]
    alpha: Option<String>,
    #[arg(long, global = true)]
    depth: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    theta: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    lambda: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    energies: Option<Vec<f64>>,
    /// Energy window LO,HI
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    window: Option<Vec<f64>>,
    /// Box X1,X2
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    box_sites: Option<Vec<i64>>,
    #[arg(long, global = true, help = format!("Working precision in bits [env: {PRECISION_ENV}]"))]
    precision_bits: Option<u32>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    scales: Option<Vec<usize>>,
    #[arg(long, global = true)]
    trim: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    iterations: Option<u64>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    herman_k: Option<Vec<u64>>,
    #[arg(long, global = true)]
    quad_points: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    ells: Option<Vec<i64>>,
    #[arg(long, global = true)]
    greens: Option<String>,
    #[arg(long, global = true)]
    lyapunov_method: Option<String>,
    #[arg(long, global = true)]
    delta_estimator: Option<String>,
    #[arg(long, global = true)]
    quadrature: Option<String>,
    #[arg(long, global = true)]
    envelope: Option<String>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
}

impl Overrides {
    fn apply(self, mut c: ExperimentConfig) -> Result<ExperimentConfig, CliError> {
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { c.$field = v; })* };
        }
        set!(alpha, depth, theta, lambda, energies, precision_bits, eps, scales, trim, seed, iterations, samples, herman_k, quad_points, ells, output_dir);
        if let Some(w) = self.window {
            c.window = Some(pair("window", &w)?);
        }
        if let Some(b) = self.box_sites {
            c.box_sites = pair("box_sites", &b)?;
        }
        if self.workers.is_some() {
            c.workers = self.workers;
        }
        let s = &mut c.strategies;
        for (slot, v) in [
            (&mut s.greens, self.greens),
            (&mut s.lyapunov_method, self.lyapunov_method),
            (&mut s.delta_estimator, self.delta_estimator),
            (&mut s.quadrature, self.quadrature),
            (&mut s.envelope, self.envelope),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
        Ok(c)
    }
}

fn pair<T: Copy>(field: &str, v: &[T]) -> Result<[T; 2], CliError> {
    match v {
        [a, b] => Ok([*a, *b]),
        _ => Err(CliError::Config { field: field.to_string(), reason: format!("expected two values, got {}", v.len()) }),
    }
}

fn check_strategies(c: &ExperimentConfig) -> Result<(), CliError> {
    let s = Strategies::default();
    let n = &c.strategies;
    let known = [
        ("greens", s.greens.get(&n.greens).is_ok(), s.greens.names()),
        ("lyapunov_method", s.lyapunov.get(&n.lyapunov_method).is_ok(), s.lyapunov.names()),
        ("delta_estimator", s.delta.get(&n.delta_estimator).is_ok(), s.delta.names()),
        ("quadrature", s.quadrature.get(&n.quadrature).is_ok(), s.quadrature.names()),
        ("envelope", s.envelope.get(&n.envelope).is_ok(), s.envelope.names()),
    ];
    for (field, ok, names) in known {
        if !ok {
            return Err(CliError::Config {
                field: format!("strategies.{field}"),
                reason: format!("unknown method (known: {})", names.join(", ")),
            });
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let base = match &cli.overrides.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let cfg = cli.overrides.apply(base)?;
    cfg.validate()?;
    check_strategies(&cfg)?;
    if let Some(n) = cfg.workers {
        // fails only when a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let name = cli.command.name();
    let mut out = Writer::new(&cfg, name);
    let outcome = match cli.command {
        Command::Cf => commands::cf(&cfg, &mut out),
        Command::Indices => commands::indices(&cfg, &mut out),
        Command::Lyapunov => commands::lyapunov(&cfg, &mut out),
        Command::Spectrum => commands::spectrum(&cfg, &mut out),
        Command::Eigfun => commands::eigfun(&cfg, &mut out),
        Command::Uniformity => commands::uniformity(&cfg, &mut out),
        Command::Herman => commands::herman(&cfg, &mut out),
        Command::VerifyDecay => commands::verify_decay(&cfg, &mut out),
        Command::Selftest => {
            let results = selftest::run(&cfg)?;
            for r in &results {
                println!("{} {}: {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            out.json("selftest.json", &results)?;
            let failed: Vec<&str> = results.iter().filter(|r| !r.pass).map(|r| r.name).collect();
            Ok(Outcome {
                summary: format!("{} of {} checks passed", results.len() - failed.len(), results.len()),
                failure: (!failed.is_empty()).then(|| format!("failed: {}", failed.join(", "))),
            })
        }
    }?;
    for p in &out.written {
        println!("wrote {}", p.display());
    }
    println!("{name}: {}", outcome.summary);
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code());
        }
    };
    match run(cli) {
        Ok(Outcome { failure: None, .. }) => ExitCode::SUCCESS,
        Ok(Outcome { failure: Some(msg), .. }) => {
            eprintln!("{}", CliError::Failed(msg).to_json());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
