use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use zfmiso::harness::sweep::{DEFAULT_DELTA_R, DEFAULT_DMIN_FACTOR};
use zfmiso::harness::{
    compute_gaps, mean_gaps, read_records, run_sweep, run_trials, write_records, RunMethod, SweepParam, SweepSpec,
    Timing,
};
use zfmiso::{parse_config, Error, Execution, SystemConfig};

#[derive(Parser)]
#[command(name = "zfmiso", version, about = "ZF MISO-OFDMA resource allocation experiments")]
struct Cli {
    /// Run trials on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,
    /// Write elapsed_us = 0 so repeated runs give identical files.
    #[arg(long, global = true)]
    no_timing: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Independent trials of one method at the configured minimum rates.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep minimum rates, RT-user count or user count.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long)]
        start: f64,
        #[arg(long)]
        stop: f64,
        #[arg(long)]
        step: f64,
        /// Comma-separated list of alg1, alg2, maxthr, bound.
        #[arg(long, default_value = "alg1,alg2,maxthr,bound")]
        methods: String,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rate increment over r0 used by the K sweep.
        #[arg(long, default_value_t = DEFAULT_DELTA_R)]
        delta_r: f64,
        /// Minimum rate multiplier over r0 used by the D sweep.
        #[arg(long, default_value_t = DEFAULT_DMIN_FACTOR)]
        dmin_factor: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gap metrics of a dmin sweep CSV.
    Gaps {
        #[arg(long = "in")]
        input: PathBuf,
        /// Print one block per channel draw before the mean.
        #[arg(long)]
        per_seed: bool,
    },
}

fn load_config(path: &Path) -> anyhow::Result<SystemConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        key: "config".into(),
        reason: format!("cannot read {}: {e}", path.display()),
    })?;
    Ok(parse_config(&text)?)
}

fn write_csv(path: &Path, records: &[zfmiso::harness::RunRecord]) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_records(BufWriter::new(file), records)?;
    Ok(())
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    let timing = if cli.no_timing { Timing::Off } else { Timing::Wall };
    match cli.cmd {
        Cmd::Run { config, method, trials, seed, out } => {
            let cfg = load_config(&config)?;
            let method: RunMethod = method.parse()?;
            let records = run_trials(&cfg, method, trials, seed, timing, exec)?;
            write_csv(&out, &records)
        }
        Cmd::Sweep {
            config,
            param,
            start,
            stop,
            step,
            methods,
            trials,
            seed,
            delta_r,
            dmin_factor,
            out,
        } => {
            let cfg = load_config(&config)?;
            let methods = methods
                .split(',')
                .map(|m| m.trim().parse::<RunMethod>())
                .collect::<Result<Vec<_>, _>>()?;
            let mut spec = SweepSpec::new(param.parse::<SweepParam>()?, start, stop, step, methods);
            spec.trials = trials;
            spec.seed = seed;
            spec.delta_r = delta_r;
            spec.dmin_factor = dmin_factor;
            spec.timing = timing;
            let records = run_sweep(&cfg, &spec, exec)?;
            write_csv(&out, &records)
        }
        Cmd::Gaps { input, per_seed } => {
            let file = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let per = compute_gaps(&read_records(file)?);
            if per_seed {
                for (i, g) in per.iter().enumerate() {
                    println!("[draw {i}]\n{g}");
                }
            }
            println!("[mean over {} draws]\n{}", per.len(), mean_gaps(&per));
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config { .. } | Error::Sweep(_) | Error::IndexOutOfRange { .. }) => 2,
        Some(Error::EnumerationTooLarge(_)) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
