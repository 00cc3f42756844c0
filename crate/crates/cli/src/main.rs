//! `subharm`: subharmonic oscillation analysis for fixed-frequency DC-DC converters.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod output;

use commands::{Ctx, FindCriticalArgs, Method, SimulateArgs, SteadyChoice};
use config::{config_error, AxisSpec, ConfigError, RunConfig};
use output::Table;

#[derive(Parser)]
#[command(
    name = "subharm",
    version,
    about = "Predict and verify subharmonic oscillation in fixed-frequency DC-DC converters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// Converter description (JSON).
    #[arg(long, global = true, value_name = "FILE", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Use the configuration of a worked example instead of --config.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u8).range(1..=11))]
    preset: Option<u8>,
    /// Sweep axis, `name:min:max:points`.
    #[arg(long, global = true, value_name = "SPEC")]
    axis: Option<AxisSpec>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write to FILE instead of standard output.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    jobs: Option<u32>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Periodic orbit and duty ratio.
    Steady,
    /// Sampled-data Jacobian, its eigenvalues and the stability class.
    Stability,
    /// Exact and approximate critical source voltage over D, with the steady-state line.
    Boundary {
        #[arg(long, value_enum)]
        steady: Option<SteadyChoice>,
        /// Print only where the boundary meets the steady-state line.
        #[arg(long)]
        intersections: bool,
    },
    /// S plot over D.
    Splot,
    /// Harmonic-balance plot H(D) over D.
    Hbplot {
        #[arg(long, value_enum)]
        steady: Option<SteadyChoice>,
    },
    /// M plot over D.
    Mplot {
        #[arg(long, value_enum)]
        steady: Option<SteadyChoice>,
    },
    /// Evaluate a closed-form criterion by equation tag (`list` shows the tags for the scheme).
    ClosedForm {
        id: String,
        /// Duty ratio; defaults to the steady-state duty.
        #[arg(long)]
        duty: Option<f64>,
    },
    /// Exact switched simulation; writes t, x1..xN, y, h, stage.
    Simulate {
        #[arg(long, default_value_t = 20)]
        cycles: usize,
        /// Start from the zero state instead of the periodic orbit.
        #[arg(long)]
        from_rest: bool,
        /// Relative perturbation of the orbit start state.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        kick: f64,
        /// One row per cycle instead of dense samples.
        #[arg(long)]
        per_cycle: bool,
    },
    /// Locate the stability boundary in one parameter.
    FindCritical {
        param: String,
        #[arg(long, value_enum, default_value = "eigenvalue")]
        method: Method,
        /// Search interval `lo:hi`; by default it is bracketed around the configured value.
        #[arg(long, value_parser = parse_range)]
        range: Option<(f64, f64)>,
        #[arg(long, default_value_t = 1e-6)]
        rel_tol: f64,
        /// Cycles per simulation verdict.
        #[arg(long)]
        cycles: Option<usize>,
    },
    /// Reproduce a worked example and compare with its reference values.
    Example {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=11))]
        n: u8,
        /// ESR for example 1, ohms.
        #[arg(long)]
        rc: Option<f64>,
        /// Skip the long simulation checks.
        #[arg(long)]
        skip_simulation: bool,
    },
    /// Print the configuration of a worked example as JSON.
    Preset {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=11))]
        n: u8,
    },
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("range `{s}` must look like lo:hi"))?;
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| format!("`{t}` is not a number"))
    };
    let (lo, hi) = (num(lo)?, num(hi)?);
    if !(lo < hi) {
        return Err(format!("range must be ordered, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

enum Output {
    Table(Table),
    Report(subharm::presets::ExampleReport),
    Json(serde_json::Value),
}

fn render(output: &Output, format: Option<Format>) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    match (output, format) {
        (Output::Table(t), None | Some(Format::Csv)) => t.write_csv(&mut buf)?,
        (Output::Table(t), Some(Format::Json)) => json_to(&mut buf, &t.to_json())?,
        (Output::Table(_), Some(Format::Text)) => {
            return Err(config_error("tables are written as csv or json"))
        }
        (Output::Report(r), None | Some(Format::Text)) => {
            buf.extend(commands::report_text(r).into_bytes())
        }
        (Output::Report(r), Some(Format::Json)) => json_to(&mut buf, &serde_json::to_value(r)?)?,
        (Output::Report(r), Some(Format::Csv)) => commands::report_table(r).write_csv(&mut buf)?,
        (Output::Json(v), _) => json_to(&mut buf, v)?,
    }
    Ok(buf)
}

fn json_to(buf: &mut Vec<u8>, v: &serde_json::Value) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(&mut *buf, v)?;
    buf.push(b'\n');
    Ok(())
}

fn context(g: &Global) -> anyhow::Result<Ctx> {
    let cfg = match (&g.config, g.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(n)) => RunConfig::from_preset(n)?,
        (None, None) => {
            return Err(config_error(
                "a converter description is required: --config FILE or --preset N",
            ))
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(g.jobs.unwrap_or(0) as usize)
        .build()?;
    Ok(Ctx {
        cfg,
        axis: g.axis.clone(),
        pool,
    })
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let g = &cli.global;
    let output = match cli.command {
        Command::Example {
            n,
            rc,
            skip_simulation,
        } => Output::Report(commands::example(n, rc, skip_simulation)?),
        Command::Preset { n } => Output::Json(serde_json::to_value(RunConfig::from_preset(n)?)?),
        cmd => {
            let ctx = context(g)?;
            Output::Table(match cmd {
                Command::Steady => commands::steady(&ctx)?,
                Command::Stability => commands::stability(&ctx)?,
                Command::Boundary {
                    steady,
                    intersections,
                } => commands::boundary(&ctx, steady, intersections)?,
                Command::Splot => commands::splot(&ctx)?,
                Command::Hbplot { steady } => commands::hbplot(&ctx, steady)?,
                Command::Mplot { steady } => commands::mplot(&ctx, steady)?,
                Command::ClosedForm { id, duty } => commands::closed_form(&ctx, &id, duty)?,
                Command::Simulate {
                    cycles,
                    from_rest,
                    kick,
                    per_cycle,
                } => commands::simulate_cmd(
                    &ctx,
                    &SimulateArgs {
                        cycles,
                        from_rest,
                        kick,
                        per_cycle,
                    },
                )?,
                Command::FindCritical {
                    param,
                    method,
                    range,
                    rel_tol,
                    cycles,
                } => commands::find_critical(
                    &ctx,
                    &FindCriticalArgs {
                        param,
                        method,
                        range,
                        rel_tol,
                        cycles,
                    },
                )?,
                Command::Example { .. } | Command::Preset { .. } => unreachable!("handled above"),
            })
        }
    };
    let bytes = render(&output, g.format)?;
    match &g.out {
        Some(path) => std::fs::write(path, &bytes)
            .map_err(|e| config_error(format!("cannot write {}: {e}", path.display())))?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    let failed = matches!(&output, Output::Report(r) if !r.passed());
    Ok(if failed {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
