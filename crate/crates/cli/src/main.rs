use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use herdlab::analyze::run_analyze;
use herdlab::config::ExperimentConfig;
use herdlab::reproduce::{fig1_summary_csv, run_fig1, run_fig3, Fig1Settings, Fig3Settings};
use herdlab::simulate::run_simulate;
use herdlab::validate::{run_validate, Fault, Level};
use herdlab::CliError;

#[derive(Parser)]
#[command(
    name = "herdlab",
    version,
    about = "Herding-model simulations and analyses"
)]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "HERDLAB_JOBS", default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the ensemble size.
    #[arg(long)]
    ensemble: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an ensemble and write one trajectory file per member.
    Simulate(RunArgs),
    /// Compute PDFs, PSDs and exponent fits of trajectories.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        /// Trajectory files to analyse; the configured ensemble is
        /// simulated when none are given.
        inputs: Vec<PathBuf>,
    },
    /// Exponent sweep of the two-state y-equation.
    ReproduceFig1 {
        #[arg(long, default_value = "out/fig1")]
        out: PathBuf,
        /// Comma-separated eps2 values.
        #[arg(long, value_delimiter = ',')]
        eps2: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
        /// Seconds-long run for checking the pipeline.
        #[arg(long)]
        smoke: bool,
    },
    /// Fractured spectrum of the three-group market.
    ReproduceFig3 {
        #[arg(long, default_value = "out/fig3")]
        out: PathBuf,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        sample_dt: Option<f64>,
        /// Return window of the headline fit.
        #[arg(long)]
        window: Option<f64>,
        /// Comma-separated extra windows reported for sensitivity.
        #[arg(long, value_delimiter = ',')]
        extra_windows: Option<Vec<f64>>,
        #[arg(long)]
        segment_len: Option<usize>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        smoke: bool,
    },
    /// Run self-checks against exact and synthetic ground truth.
    Validate {
        #[arg(long, value_enum, default_value = "quick")]
        level: Level,
        #[arg(long, default_value = "out/validate")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// CHANNEL:FACTOR scales one jump rate in the simulated checks.
        #[arg(long, hide = true, value_parser = parse_fault)]
        inject_fault: Option<Fault>,
    },
}

fn parse_fault(s: &str) -> Result<Fault, String> {
    let (c, f) = s.split_once(':').ok_or("expected CHANNEL:FACTOR")?;
    Ok(Fault {
        channel: c.parse().map_err(|e| format!("channel: {e}"))?,
        factor: f.parse().map_err(|e| format!("factor: {e}"))?,
    })
}

fn load(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = args.ensemble {
        cfg.ensemble = e;
    }
    cfg.validate()?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn print_done(out: &Path) {
    println!("wrote {}", out.display());
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let (cfg, out) = load(&args)?;
            let m = run_simulate(&cfg, &out, cli.jobs)?;
            println!("{} runs", m.runs.len());
            print_done(&out);
        }
        Command::Analyze { run, inputs } => {
            let (cfg, out) = load(&run)?;
            run_analyze(&cfg, &inputs, &out, cli.jobs)?;
            print_done(&out);
        }
        Command::ReproduceFig1 {
            out,
            eps2,
            seed,
            smoke,
        } => {
            let mut s = if smoke {
                Fig1Settings::smoke()
            } else {
                Fig1Settings::default()
            };
            if let Some(e) = eps2 {
                s.eps2 = e;
            }
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let points = run_fig1(&s, &out, cli.jobs)?;
            print!("{}", fig1_summary_csv(&points));
            print_done(&out);
        }
        Command::ReproduceFig3 {
            out,
            t_end,
            sample_dt,
            window,
            extra_windows,
            segment_len,
            kappa,
            seed,
            smoke,
        } => {
            let mut s = if smoke {
                Fig3Settings::smoke()
            } else {
                Fig3Settings::default()
            };
            s.t_end = t_end.unwrap_or(s.t_end);
            s.sample_dt = sample_dt.unwrap_or(s.sample_dt);
            s.window_t = window.unwrap_or(s.window_t);
            s.extra_windows = extra_windows.unwrap_or(s.extra_windows);
            s.segment_len = segment_len.unwrap_or(s.segment_len);
            s.kappa = kappa.unwrap_or(s.kappa);
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let res = run_fig3(&s, &out)?;
            for w in &res.windows {
                println!(
                    "{} T = {}: lambda = {}, fracture = {}, improvement = {:?}",
                    w.series,
                    w.window_t,
                    w.lambda_fit
                        .as_ref()
                        .map_or("n/a".into(), |f| format!("{:.3}", f.exponent)),
                    w.fracture_summary
                        .as_ref()
                        .map_or("n/a".into(), |f| f.to_string()),
                    w.improvement
                );
            }
            print_done(&out);
        }
        Command::Validate {
            level,
            out,
            seed,
            inject_fault,
        } => {
            let result = run_validate(level, seed, inject_fault, &out);
            let report_path = out.join("report.json");
            if let Ok(text) = std::fs::read_to_string(&report_path) {
                if let Ok(report) = serde_json::from_str::<herdlab::validate::Report>(&text) {
                    for c in &report.checks {
                        println!("{}", c.line());
                    }
                }
            }
            result?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
