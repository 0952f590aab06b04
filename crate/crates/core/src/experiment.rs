//! Benchmark experiments: configuration, independent replications, and CSV
//! output.
//!
//! A config file is TOML with flat top-level keys and optional
//! `[[component]]` blocks describing a custom Gaussian mixture:
//!
//! ```toml
//! sampler = "ee"          # ee | pt | mh
//! t_top = 30.0
//! n_iters = 200000
//! n_runs = 100
//! seed = 1
//!
//! [[component]]
//! weight = 0.5
//! mean = [0.0, 0.0]
//! variance = 1.0
//! ```
//!
//! Without components the `preset` (default `"needle"`) is used. Every key
//! defaults to the needle benchmark settings; see [`ExperimentConfig`].

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::engine::{run_ee_interleaved, run_ee_serial, run_mh, run_pt, Init, SamplerConfig, SamplerRun, Schedule};
use crate::error::{Error, Result};
use crate::estimators::{
    aggregate, count_mode_jumps, missed, visit_probability, AggregateSummary, RunSummary, SUMMARY_HEADER,
};
use crate::ladder::{coupled_ladder, geometric_energy_ladder, log_uniform_temperatures, Ladder};
use crate::rings::Capacity;
use crate::target::{make_needle_target, Component, GaussianMixture, TargetModel, NEEDLE_MIN_ENERGY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Ee,
    Pt,
    Mh,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Ee => "ee",
            SamplerKind::Pt => "pt",
            SamplerKind::Mh => "mh",
        }
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ee" => Ok(SamplerKind::Ee),
            "pt" => Ok(SamplerKind::Pt),
            "mh" => Ok(SamplerKind::Mh),
            other => Err(Error::config(
                "sampler",
                format!("unknown sampler `{other}` (ee, pt, mh)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LadderMode {
    /// Geometric energy levels with log-uniform temperatures.
    #[default]
    Geometric,
    /// Geometric energy levels, temperatures from `(H_{i+1} - H_i) / T_i = c`.
    Coupled,
    /// `energy_levels` and `temperatures` given verbatim.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKey {
    Serial,
    Interleaved,
}

/// Optional per-run outputs. The summary CSV is always written when an
/// output directory is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    Runs,
    Trace,
    Rings,
    Scatter,
    Counters,
}

impl std::str::FromStr for Emit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "runs" => Ok(Emit::Runs),
            "trace" => Ok(Emit::Trace),
            "rings" => Ok(Emit::Rings),
            "scatter" => Ok(Emit::Scatter),
            "counters" => Ok(Emit::Counters),
            other => Err(Error::config(
                "emit",
                format!("unknown output `{other}` (runs, trace, rings, scatter, counters)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: String,
    pub component: Vec<ComponentSpec>,
    pub sampler: SamplerKind,
    pub schedule: ScheduleKey,

    pub ladder_mode: LadderMode,
    /// Index of the hottest chain.
    pub k: usize,
    /// Defaults to the preset's minimum energy, or the lowest energy at a
    /// component mean.
    pub h_min: Option<f64>,
    pub h1: f64,
    /// Defaults to `h_min + 100`.
    pub h_top: Option<f64>,
    pub ratio: f64,
    pub t_top: f64,
    pub coupling: Option<f64>,
    pub energy_levels: Option<Vec<f64>>,
    pub temperatures: Option<Vec<f64>>,

    pub n_iters: usize,
    /// Defaults to a quarter of `n_iters`.
    pub burn_in: Option<usize>,
    pub n_runs: usize,
    pub seed: u64,
    pub p_ee: f64,
    pub p_ex: f64,
    pub tau0: f64,
    /// Proposal scale of every chain above 0.
    pub tau: f64,
    /// Records per ring; 0 means unbounded.
    pub ring_capacity: usize,
    pub cross_ring_rho: f64,
    pub init_spread: f64,

    pub visit_radius: f64,
    pub truth: f64,

    pub out_dir: Option<PathBuf>,
    pub emit: Vec<Emit>,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: "needle".into(),
            component: Vec::new(),
            sampler: SamplerKind::Ee,
            schedule: ScheduleKey::Serial,
            ladder_mode: LadderMode::Geometric,
            k: 3,
            h_min: None,
            h1: 3.13,
            h_top: None,
            ratio: 3.578,
            t_top: 30.0,
            coupling: None,
            energy_levels: None,
            temperatures: None,
            n_iters: 200_000,
            burn_in: None,
            n_runs: 100,
            seed: 2006,
            p_ee: 0.3,
            p_ex: 0.3,
            tau0: 0.05,
            tau: 1.0,
            ring_capacity: 0,
            cross_ring_rho: 0.0,
            init_spread: 10.0,
            visit_radius: 0.05,
            truth: 0.5,
            out_dir: None,
            emit: Vec::new(),
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let key = e
                .span()
                .and_then(|span| {
                    let line_start = text[..span.start].rfind('\n').map_or(0, |i| i + 1);
                    let line = text[line_start..].lines().next()?;
                    line.split_once('=').map(|(k, _)| k.trim().to_string())
                })
                .filter(|k| !k.is_empty())
                .unwrap_or_else(|| "<config>".into());
            Error::config(key, e.message().to_string())
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.n_iters / 4)
    }

    pub fn wants(&self, e: Emit) -> bool {
        self.emit.contains(&e)
    }

    /// Build the target model.
    pub fn target(&self) -> Result<TargetModel> {
        if !self.component.is_empty() {
            let comps = self
                .component
                .iter()
                .map(|c| Component {
                    weight: c.weight,
                    mean: c.mean.clone(),
                    variance: c.variance,
                })
                .collect();
            return GaussianMixture::new(comps)
                .map(TargetModel::from)
                .map_err(|e| Error::config("component", e.to_string()));
        }
        match self.preset.as_str() {
            "needle" => Ok(make_needle_target().into()),
            other => Err(Error::config("preset", format!("unknown preset `{other}`"))),
        }
    }

    fn resolved_h_min(&self, model: &TargetModel) -> f64 {
        if let Some(h) = self.h_min {
            return h;
        }
        if self.component.is_empty() && self.preset == "needle" {
            return NEEDLE_MIN_ENERGY;
        }
        match model {
            TargetModel::Mixture(m) => m.min_energy_at_means(),
            TargetModel::Grid(g) => g.energies().iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn ladder(&self, model: &TargetModel) -> Result<Ladder> {
        let h_min = self.resolved_h_min(model);
        if self.sampler == SamplerKind::Mh {
            return Ok(Ladder::single(h_min));
        }
        fn lad_err(key: &'static str) -> impl Fn(Error) -> Error {
            move |e| Error::config(key, e.to_string())
        }
        let geometric = || {
            if self.k == 0 {
                return Ok(vec![h_min]);
            }
            let h_top = self.h_top.unwrap_or(h_min + 100.0);
            geometric_energy_ladder(h_min, self.h1, h_top, self.k, self.ratio).map_err(lad_err("h1"))
        };
        match self.ladder_mode {
            LadderMode::Geometric => {
                let levels = geometric()?;
                let t_top = if self.k == 0 { 1.0 } else { self.t_top };
                let temps = log_uniform_temperatures(t_top, self.k).map_err(lad_err("t_top"))?;
                Ladder::new(levels, temps).map_err(lad_err("ladder_mode"))
            }
            LadderMode::Coupled => {
                let c = self
                    .coupling
                    .ok_or_else(|| Error::config("coupling", "coupled ladder needs `coupling`"))?;
                let levels = geometric()?;
                let temps = coupled_ladder(&levels, c).map_err(lad_err("coupling"))?;
                Ladder::new(levels, temps).map_err(lad_err("coupling"))
            }
            LadderMode::Explicit => {
                let levels = self
                    .energy_levels
                    .clone()
                    .ok_or_else(|| Error::config("energy_levels", "explicit ladder needs `energy_levels`"))?;
                let temps = self
                    .temperatures
                    .clone()
                    .ok_or_else(|| Error::config("temperatures", "explicit ladder needs `temperatures`"))?;
                Ladder::new(levels, temps).map_err(lad_err("energy_levels"))
            }
        }
    }

    /// Validate and resolve into a target and a sampler configuration.
    pub fn resolve(&self) -> Result<(TargetModel, SamplerConfig)> {
        if self.n_runs < 1 {
            return Err(Error::config("n_runs", "must be >= 1"));
        }
        if self.n_iters < 1 {
            return Err(Error::config("n_iters", "must be >= 1"));
        }
        if self.visit_radius.is_nan() || self.visit_radius <= 0.0 {
            return Err(Error::config("visit_radius", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.truth) {
            return Err(Error::config("truth", "must be in [0, 1]"));
        }
        let model = self.target()?;
        let ladder = self.ladder(&model)?;
        let n = ladder.n_chains();
        let mut tau = vec![self.tau; n];
        tau[0] = self.tau0;
        let cfg = SamplerConfig {
            ladder,
            n_iters: self.n_iters,
            burn_in: self.burn_in(),
            p_ee: self.p_ee,
            p_ex: self.p_ex,
            tau,
            schedule: match self.schedule {
                ScheduleKey::Serial => Schedule::Serial,
                ScheduleKey::Interleaved => Schedule::Interleaved,
            },
            seed: self.seed,
            ring_capacity: if self.ring_capacity == 0 {
                Capacity::Unbounded
            } else {
                Capacity::Bounded(self.ring_capacity)
            },
            cross_ring_rho: self.cross_ring_rho,
            init: Init::Spread(self.init_spread),
        };
        cfg.validate().map_err(|e| {
            let msg = e.to_string();
            let key = ["p_ee", "p_ex", "tau", "cross_ring_rho", "init"]
                .into_iter()
                .find(|k| msg.contains(k))
                .unwrap_or("sampler");
            let key = match key {
                "tau" => "tau0",
                "init" => "init_spread",
                k => k,
            };
            Error::config(key, msg)
        })?;
        Ok((model, cfg))
    }

    /// Top temperature as reported in summary rows.
    pub fn reported_t_top(&self, cfg: &SamplerConfig) -> f64 {
        cfg.ladder.temperature(cfg.ladder.k())
    }
}

/// RNG of replication `run` under `master_seed`: one ChaCha stream per run.
pub fn run_rng(master_seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run);
    rng
}

/// Run one sampler replication.
pub fn run_sampler(
    kind: SamplerKind,
    model: &TargetModel,
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SamplerRun> {
    match (kind, cfg.schedule) {
        (SamplerKind::Ee, Schedule::Serial) => run_ee_serial(model, cfg, rng),
        (SamplerKind::Ee, Schedule::Interleaved) => run_ee_interleaved(model, cfg, rng),
        (SamplerKind::Pt, _) => run_pt(model, cfg, rng),
        (SamplerKind::Mh, _) => run_mh(model, cfg, rng),
    }
}

pub fn summarize_run(run: &SamplerRun, model: &TargetModel, radius: f64) -> Result<RunSummary> {
    let origin = vec![0.0; model.dimension()];
    Ok(RunSummary {
        p_hat: visit_probability(&run.trace, radius)?,
        jumps: count_mode_jumps(&run.trace, model.modes()),
        miss: missed(&run.trace, &origin, radius),
        local_rates: run.counters.iter().map(|c| c.local_acceptance_rate()).collect(),
        ee_rates: run.counters.iter().map(|c| c.ee_acceptance_rate()).collect(),
        exchange_rates: run.counters.iter().map(|c| c.exchange_acceptance_rate()).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub sampler: SamplerKind,
    pub t_top: f64,
    pub n_iters: usize,
    pub summary: AggregateSummary,
    pub runs: Vec<RunSummary>,
    /// Replication whose jump count is closest to the mean.
    pub typical_run: usize,
}

impl ExperimentReport {
    pub fn csv_row(&self) -> String {
        self.summary.csv_row(self.sampler.name(), self.t_top, self.n_iters)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for l in lines {
            writeln!(w, "{l}")?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

fn write_run_files(dir: &Path, r: usize, run: &SamplerRun, cfg: &ExperimentConfig) -> Result<()> {
    if cfg.wants(Emit::Trace) {
        run.trace.write_csv(&dir.join(format!("trace_run{r:03}.csv")))?;
    }
    if cfg.wants(Emit::Counters) {
        run.write_counters_csv(&dir.join(format!("counters_run{r:03}.csv")))?;
    }
    if cfg.wants(Emit::Rings) {
        for (i, rings) in run.rings.iter().enumerate() {
            rings.write_csv(dir, &format!("rings_run{r:03}_chain{i}"))?;
        }
    }
    Ok(())
}

fn build_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))
}

/// Run `n_runs` independent replications and aggregate them. Replication
/// `r` uses [`run_rng`]`(seed, r)`, so results do not depend on the number
/// of worker threads or their scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let (model, scfg) = cfg.resolve()?;
    if let Some(dir) = &cfg.out_dir {
        create_dir(dir)?;
    }
    let pool = build_pool(cfg.threads)?;
    let per_run = |r: usize| -> Result<RunSummary> {
        let mut rng = run_rng(cfg.seed, r as u64);
        let run = run_sampler(cfg.sampler, &model, &scfg, &mut rng)?;
        if let Some(dir) = &cfg.out_dir {
            write_run_files(dir, r, &run, cfg)?;
        }
        summarize_run(&run, &model, cfg.visit_radius)
    };
    let runs: Vec<RunSummary> = pool.install(|| (0..cfg.n_runs).into_par_iter().map(per_run).collect::<Result<_>>())?;

    if cfg.n_runs == 1 {
        log::warn!("one replication: std, quantile spread and MSE reflect a single estimate");
    }
    let summary = aggregate(&runs, cfg.truth)?;
    let typical_run = runs
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let da = (a.1.jumps as f64 - summary.jump_mean).abs();
            let db = (b.1.jumps as f64 - summary.jump_mean).abs();
            da.total_cmp(&db)
        })
        .map_or(0, |(i, _)| i);
    let report = ExperimentReport {
        sampler: cfg.sampler,
        t_top: cfg.reported_t_top(&scfg),
        n_iters: cfg.n_iters,
        summary,
        runs,
        typical_run,
    };

    if let Some(dir) = &cfg.out_dir {
        write_lines(
            &dir.join("summary.csv"),
            &[SUMMARY_HEADER.to_string(), report.csv_row()],
        )?;
        if cfg.wants(Emit::Runs) {
            let mut lines = vec![RUNS_HEADER.to_string()];
            lines.extend(
                report
                    .runs
                    .iter()
                    .enumerate()
                    .map(|(r, s)| format!("{r},{:.6},{},{}", s.p_hat, s.jumps, u8::from(s.miss))),
            );
            write_lines(&dir.join("runs.csv"), &lines)?;
        }
        if cfg.wants(Emit::Scatter) {
            let mut rng = run_rng(cfg.seed, report.typical_run as u64);
            let run = run_sampler(cfg.sampler, &model, &scfg, &mut rng)?;
            write_scatter(dir, &run, cfg.visit_radius)?;
        }
    }
    Ok(report)
}

pub const RUNS_HEADER: &str = "run,p_hat,jumps,miss";

/// Scatter data of a chain-0 trace: every state, and the states within
/// `radius` of the origin.
fn write_scatter(dir: &Path, run: &SamplerRun, radius: f64) -> Result<()> {
    run.trace.write_csv(&dir.join("scatter_all.csv"))?;
    let r2 = radius * radius;
    let mut near = crate::engine::Trace::with_capacity(run.trace.dimension(), 0);
    for (x, e) in run.trace.iter() {
        if x.iter().map(|v| v * v).sum::<f64>() < r2 {
            near.push(x, e);
        }
    }
    near.write_csv(&dir.join("scatter_origin.csv"))
}

/// Run the experiment once per top temperature, sharing the master seed.
/// Per-temperature outputs go to `out_dir/t_top_<T>/`; the combined table
/// goes to `out_dir/sweep.csv`.
pub fn sweep(cfg: &ExperimentConfig, t_tops: &[f64]) -> Result<Vec<ExperimentReport>> {
    if t_tops.is_empty() {
        return Err(Error::config("t_top", "sweep needs at least one temperature"));
    }
    let mut reports = Vec::with_capacity(t_tops.len());
    for &t in t_tops {
        let mut c = cfg.clone();
        c.t_top = t;
        c.out_dir = cfg.out_dir.as_ref().map(|d| d.join(format!("t_top_{t}")));
        reports.push(run_experiment(&c)?);
    }
    if let Some(dir) = &cfg.out_dir {
        let mut lines = vec![SUMMARY_HEADER.to_string()];
        lines.extend(reports.iter().map(ExperimentReport::csv_row));
        write_lines(&dir.join("sweep.csv"), &lines)?;
    }
    Ok(reports)
}
