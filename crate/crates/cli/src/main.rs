use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ppdispatch::audit::{count_inference, count_inference_dup, Scheme};
use ppdispatch::experiments::{run_experiment, ExperimentKind, ExperimentSpec};
use ppdispatch::scenario::{bundled_scenario, load_scenario, Scenario};
use ppdispatch::Error;

#[derive(Parser)]
#[command(name = "ppdispatch", version, about = "Masked day-ahead dispatch of building load aggregators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Accuracy,
    Audit,
    CaseSweep,
    BandSweep,
    Ppdc,
    Timing,
}

impl From<Kind> for ExperimentKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Accuracy => Self::Accuracy,
            Kind::Audit => Self::Audit,
            Kind::CaseSweep => Self::CaseSweep,
            Kind::BandSweep => Self::BandSweep,
            Kind::Ppdc => Self::PpdcSweep,
            Kind::Timing => Self::Timing,
        }
    }
}

#[derive(clap::Args)]
struct ScenarioArgs {
    /// Scenario JSON; the bundled 33-bus day when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Relative MIP gap, overriding the scenario.
    #[arg(long, env = "PPDISPATCH_MIP_GAP")]
    mip_gap: Option<f64>,
    /// Solver time limit in seconds, overriding the scenario.
    #[arg(long, env = "PPDISPATCH_TIME_LIMIT")]
    time_limit: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its CSV bundle.
    Run {
        #[arg(value_enum)]
        kind: Kind,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Replaces every seed in the scenario.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Parse and validate a scenario, then print its digest.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Equation and unknown counts for an inference attempt.
    Count {
        #[arg(long)]
        t: u64,
        #[arg(long, default_value_t = 1)]
        m: u64,
        #[arg(long, default_value = "full")]
        scheme: String,
        /// Duplication factor for the full scheme.
        #[arg(long)]
        duplication: Option<u64>,
    },
}

fn load(a: &ScenarioArgs) -> Result<Scenario, Error> {
    let mut s = match &a.scenario {
        Some(p) => load_scenario(p)?,
        None => bundled_scenario(),
    };
    if let Some(g) = a.mip_gap {
        if !(g >= 0.0) {
            return Err(Error::InvalidArgument(format!("mip gap {g} must be non-negative")));
        }
        s.solver.mip_gap = g;
    }
    if let Some(t) = a.time_limit {
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!("time limit {t} must be positive")));
        }
        s.solver.time_limit = Some(t);
    }
    Ok(s)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_)
        | Error::Parse { .. }
        | Error::InvalidArgument(_)
        | Error::InvalidModel(_)
        | Error::InvalidWeights(_)
        | Error::InvalidPlacement(_)
        | Error::Json(_) => 2,
        Error::Solver(_) | Error::Unavailable(_) | Error::KeyGeneration(_) | Error::InvalidKey(_) => 3,
        _ => 1,
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            kind,
            scenario,
            seed,
            out,
        } => {
            let s = load(&scenario)?;
            let spec = ExperimentSpec {
                kind: kind.into(),
                seed,
            };
            match run_experiment(&s, &spec) {
                Ok(bundle) => {
                    bundle.write_to(&out)?;
                    for line in &bundle.summary {
                        println!("{line}");
                    }
                    log::info!("wrote {} files to {}", bundle.files.len(), out.display());
                    Ok(())
                }
                Err(f) => {
                    f.partial.write_to(&out)?;
                    for line in &f.partial.summary {
                        println!("{line}");
                    }
                    Err(f.error)
                }
            }
        }
        Command::Validate { scenario } => {
            let s = load(&scenario)?;
            println!(
                "{}: {} periods, {} buses, {} aggregators, digest {}",
                s.name,
                s.horizon,
                s.network.buses.len(),
                s.blas.len(),
                s.digest
            );
            Ok(())
        }
        Command::Count {
            t,
            m,
            scheme,
            duplication,
        } => {
            let scheme: Scheme = scheme.parse()?;
            let r = match (scheme, duplication) {
                (Scheme::Full, Some(q)) => count_inference_dup(t, m, q)?,
                (_, Some(_)) => {
                    return Err(Error::InvalidArgument("duplication applies to the full scheme only".into()))
                }
                (s, None) => count_inference(t, m, s)?,
            };
            println!(
                "{} T={} M={}: {} equations, {} unknowns, {:?}",
                r.scheme, r.t, r.m, r.equations, r.unknowns, r.verdict
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
