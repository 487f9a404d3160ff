mod config;
mod error;
mod scenario;
mod sweep;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, CliResult};
use crate::scenario::{run_scenario, Context};
use crate::verify::{Fault, VerifyOptions};

#[derive(Parser)]
#[command(name = "smcf", version, about = "Spacelike mean curvature flow laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Directory for artifacts (overrides output_dir in the config).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// Seed for randomized identity-test sample points.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Treat warnings as failures.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Simulate { config: PathBuf },
    /// Run the closed-form identity suite.
    Verify(VerifyArgs),
    /// Run a scenario over the grid in its [sweep] section.
    Sweep { config: PathBuf },
}

#[derive(Args)]
struct VerifyArgs {
    /// Dimensions, comma separated.
    #[arg(long)]
    dims: Option<String>,
    /// Maximal-surface constants c, comma separated.
    #[arg(long)]
    c_values: Option<String>,
    /// Static-barrier inner radii, comma separated.
    #[arg(long)]
    r0_values: Option<String>,
    /// Translating-barrier parameters mu, comma separated.
    #[arg(long)]
    mu_values: Option<String>,
    /// Translating-barrier start times t0, comma separated.
    #[arg(long)]
    t0_values: Option<String>,
    /// Random points per parameter combination.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<Fault>,
}

fn parse_list<T: std::str::FromStr>(flag: &str, text: &Option<String>, default: Vec<T>) -> CliResult<Vec<T>> {
    let Some(text) = text else { return Ok(default) };
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| CliError::Config(format!("{flag}: cannot parse {s:?}"))))
        .collect()
}

fn output_dir(cli: &Cli, from_config: Option<&Path>, base: &Path) -> PathBuf {
    match (&cli.output_dir, from_config) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => base.join(d),
        (None, None) => PathBuf::from("output"),
    }
}

fn simulate(cli: &Cli, path: &Path, ctx: Context) -> CliResult<i32> {
    let cfg = config::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let out = output_dir(cli, cfg.output_dir.as_deref(), base);
    let outcome = run_scenario(&cfg, &out, ctx)?;
    for c in &outcome.checks {
        println!(
            "{:<24} {}  value {:.6e}  bound {:.6e}",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.value,
            c.bound
        );
    }
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(f) = &outcome.numeric_failure {
        eprintln!("numeric failure: {f}");
    }
    println!("artifacts in {}", out.display());
    Ok(outcome.exit_code(ctx.strict))
}

fn verify(cli: &Cli, args: &VerifyArgs, ctx: Context) -> CliResult<i32> {
    let d = VerifyOptions::default();
    let opts = VerifyOptions {
        dims: parse_list("--dims", &args.dims, d.dims)?,
        c_values: parse_list("--c-values", &args.c_values, d.c_values)?,
        r0_values: parse_list("--r0-values", &args.r0_values, d.r0_values)?,
        mu_values: parse_list("--mu-values", &args.mu_values, d.mu_values)?,
        t0_values: parse_list("--t0-values", &args.t0_values, d.t0_values)?,
        samples: args.samples.unwrap_or(d.samples),
        seed: ctx.seed,
        fault: args.inject_fault,
    };
    let rows = verify::run_suite(&opts)?;
    print!("{}", verify::render(&rows));
    if let Some(dir) = &cli.output_dir {
        std::fs::create_dir_all(dir)?;
        spacelike_flow::io::write_json(&dir.join("verify.json"), &rows)?;
    }
    let failed: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
    for r in &failed {
        eprintln!("failed identity: {} (worst deviation {:e}, tolerance {:e})", r.name, r.worst, r.tolerance);
    }
    Ok(if failed.is_empty() { 0 } else { 1 })
}

fn sweep(cli: &Cli, path: &Path, ctx: Context) -> CliResult<i32> {
    let raw = config::read_raw(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let from_config = raw.get("output_dir").and_then(|v| v.as_str()).map(PathBuf::from);
    let out = output_dir(cli, from_config.as_deref(), base);
    if cli.workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    let res = sweep::run_sweep(raw, base, &out, cli.workers, ctx)?;
    println!("{} runs, {} failed", res.summary.runs, res.summary.failed);
    for f in &res.summary.fits {
        println!(
            "fitted exponent of {} vs {}: {:.6} (r^2 = {:.6}){}",
            f.metric,
            f.parameter,
            f.exponent,
            f.r_squared,
            match f.target {
                Some([lo, hi]) => format!(" target [{lo}, {hi}] {}", if f.pass { "PASS" } else { "FAIL" }),
                None => String::new(),
            }
        );
    }
    println!("artifacts in {}", out.display());
    Ok(res.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Context { seed: cli.seed, strict: cli.strict };
    let result = match &cli.command {
        Command::Simulate { config } => simulate(&cli, config, ctx),
        Command::Verify(args) => verify(&cli, args, ctx),
        Command::Sweep { config } => sweep(&cli, config, ctx),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
