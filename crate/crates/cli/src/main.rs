use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eesampler::estimators::SUMMARY_HEADER;
use eesampler::experiment::{run_experiment, sweep, Emit, ExperimentConfig, SamplerKind, ScheduleKey};
use eesampler::ladder::MAX_TUNING_ROUNDS;
use eesampler::{tune_ladder, Error};

/// Equi-energy sampler benchmarks.
#[derive(Parser, Debug)]
#[command(name = "eebench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run independent replications and print the summary row(s).
    Run(Overrides),
    /// Pilot-tune the ladder of the configured experiment.
    Tune {
        #[command(flatten)]
        overrides: Overrides,
        /// Iterations per pilot run.
        #[arg(long, default_value_t = 20_000)]
        pilot: usize,
        /// Required EE acceptance rate of every chain.
        #[arg(long, default_value_t = 0.7)]
        target_rate: f64,
    },
}

/// Flags override keys of the config file.
#[derive(Args, Debug)]
struct Overrides {
    /// TOML config file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// ee, pt or mh.
    #[arg(long)]
    sampler: Option<String>,
    /// serial or interleaved (EE only).
    #[arg(long)]
    schedule: Option<String>,
    /// Top temperature; a comma-separated list runs a sweep.
    #[arg(long, value_delimiter = ',')]
    tk: Vec<f64>,
    /// Recorded iterations per chain.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Extra outputs: runs, trace, rings, scatter, counters.
    #[arg(long, value_delimiter = ',')]
    emit: Vec<String>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    threads: Option<usize>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = &self.preset {
            cfg.preset = p.clone();
        }
        if let Some(s) = &self.sampler {
            cfg.sampler = s.parse::<SamplerKind>()?;
        }
        if let Some(s) = &self.schedule {
            cfg.schedule = match s.as_str() {
                "serial" => ScheduleKey::Serial,
                "interleaved" => ScheduleKey::Interleaved,
                other => {
                    return Err(Error::Config {
                        key: "schedule".into(),
                        message: format!("unknown schedule `{other}` (serial, interleaved)"),
                    })
                }
            };
        }
        if let [t] = self.tk.as_slice() {
            cfg.t_top = *t;
        }
        if let Some(n) = self.iters {
            cfg.n_iters = n;
        }
        if let Some(n) = self.burnin {
            cfg.burn_in = Some(n);
        }
        if let Some(n) = self.runs {
            cfg.n_runs = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.out {
            cfg.out_dir = Some(d.clone());
        }
        for e in &self.emit {
            let e = e.parse::<Emit>()?;
            if !cfg.emit.contains(&e) {
                cfg.emit.push(e);
            }
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        cfg.resolve()?;
        Ok(cfg)
    }
}

fn run(overrides: &Overrides) -> Result<(), Error> {
    let cfg = overrides.resolve()?;
    println!("{SUMMARY_HEADER}");
    if overrides.tk.len() > 1 {
        for report in sweep(&cfg, &overrides.tk)? {
            println!("{}", report.csv_row());
        }
    } else {
        println!("{}", run_experiment(&cfg)?.csv_row());
    }
    Ok(())
}

fn tune(overrides: &Overrides, pilot: usize, target_rate: f64) -> Result<(), Error> {
    let cfg = overrides.resolve()?;
    let (model, scfg) = cfg.resolve()?;
    let mut rng = eesampler::experiment::run_rng(cfg.seed, 0);
    let out = tune_ladder(&model, &scfg, pilot, target_rate, &mut rng)?;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ");
    if !out.converged {
        log::warn!("target rate not reached within {MAX_TUNING_ROUNDS} rounds; reporting the best ladder");
    }
    println!("converged = {}", out.converged);
    println!("rounds = {}", out.rounds);
    println!("energy_levels = [{}]", fmt(out.ladder.energy_levels()));
    println!("temperatures = [{}]", fmt(out.ladder.temperatures()));
    println!("ee_rates = [{}]", fmt(&out.rates));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(o) => run(o),
        Command::Tune {
            overrides,
            pilot,
            target_rate,
        } => tune(overrides, *pilot, *target_rate),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config { .. }) => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
