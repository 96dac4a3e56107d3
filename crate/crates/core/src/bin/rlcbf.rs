use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rlcbf::cli::{self, exit, Overrides, RunConfig};
use rlcbf::sim::MonitorAction;
use rlcbf::Error;

#[derive(Parser)]
#[command(name = "rlcbf", version, about = "Safe output-feedback ADP simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a configuration and write trajectory, summary and plot data.
    Run(RunArgs),
    /// Check the observer LMI for the configured gains.
    VerifyLmi(Source),
    /// Search for observer gains satisfying the LMI.
    Synthesize(Source),
    /// List presets, or print one as TOML.
    Presets {
        #[arg(long)]
        show: Option<String>,
    },
    /// Sample the domain to check Jacobian bounds and the Lipschitz constant of h.
    AuditBounds {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 61)]
        per_axis: usize,
    },
}

#[derive(Args)]
struct Source {
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, value_enum)]
    monitor: Option<Monitor>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Monitor {
    Warn,
    Abort,
}

fn load(source: &Source, overrides: Overrides) -> rlcbf::Result<RunConfig> {
    let mut cfg = match (&source.config, &source.preset) {
        (Some(path), None) => RunConfig::load(path)?,
        (None, Some(name)) => cli::preset(name)?,
        _ => return Err(Error::Config("exactly one of --config or --preset is required".into())),
    };
    cfg.apply(&Overrides { out: source.out.clone(), ..overrides });
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) -> rlcbf::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn dispatch(cli: Cli) -> rlcbf::Result<i32> {
    match cli.command {
        Command::Run(args) => {
            let overrides = Overrides {
                dt: args.dt,
                horizon: args.horizon,
                monitor: args.monitor.map(|m| match m {
                    Monitor::Warn => MonitorAction::Warn,
                    Monitor::Abort => MonitorAction::Abort,
                }),
                out: None,
            };
            let cfg = load(&args.source, overrides)?;
            let outcome = cli::cmd_run(&cfg)?;
            let s = &outcome.report.run;
            println!(
                "t = {:.3}  min h = {:.6}  breach = {}  |x(T)| = {:.3e}  |x~(T)| = {:.3e}  max |x~|/xi = {:.3}",
                s.t_final,
                s.safety.min_h,
                s.safety.breached,
                s.final_state_norm,
                s.final_error_norm,
                s.max_envelope_ratio
            );
            if let Some(a) = &outcome.report.abort {
                eprintln!("aborted at t = {}: {} ({})", a.t, a.reason, a.kind);
            }
            Ok(outcome.exit_code)
        }
        Command::VerifyLmi(source) => {
            let cfg = load(&source, Overrides::default())?;
            let report = cli::cmd_verify_lmi(&cfg)?;
            for c in [&report.theta_identity, &report.all_vertices] {
                let verdict = if c.feasible { "feasible" } else { "infeasible" };
                println!(
                    "{:?}: {verdict}, lambda_max = {:.6e}, |l1 C| = {:.6}, |l2 C| = {:.6}",
                    c.mode, c.max_eigenvalue, c.norm_l1c, c.norm_l2c
                );
                for r in &c.reasons {
                    println!("  {r}");
                }
            }
            Ok(exit::OK)
        }
        Command::Synthesize(source) => {
            let cfg = load(&source, Overrides::default())?;
            let art = cli::cmd_synthesize(&cfg)?;
            print_json(&art)?;
            Ok(exit::OK)
        }
        Command::Presets { show } => {
            match show {
                Some(name) => print!("{}", cli::preset(&name)?.to_toml()?),
                None => cli::cmd_presets().iter().for_each(|p| println!("{p}")),
            }
            Ok(exit::OK)
        }
        Command::AuditBounds { source, per_axis } => {
            let cfg = load(&source, Overrides::default())?;
            let report = cli::cmd_audit_bounds(&cfg, per_axis)?;
            print_json(&report)?;
            Ok(if report.bounds.passed() { exit::OK } else { exit::ABORTED })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let code = cli::exit_code(&e);
            eprintln!("error: {e}");
            println!("{}", serde_json::json!({ "error": e.to_string(), "exit_code": code }));
            ExitCode::from(code as u8)
        }
    }
}
