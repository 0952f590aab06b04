//! Energy and temperature ladders, plus pilot-run tuning.

use rand::Rng;

use crate::engine::{run_ee_serial, SamplerConfig};
use crate::error::{Error, Result};
use crate::target::TargetModel;

/// Paired energy levels `H_0 < H_1 < ... < H_K` and temperatures
/// `1 = T_0 <= T_1 <= ... <= T_K`.
///
/// Ring `D_j` is `[H_j, H_{j+1})` for `j < K` and `[H_K, inf)` for `j = K`.
/// Energies below `H_0` are clamped into ring 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Ladder {
    energy_levels: Vec<f64>,
    temperatures: Vec<f64>,
}

impl Ladder {
    pub fn new(energy_levels: Vec<f64>, temperatures: Vec<f64>) -> Result<Self> {
        if energy_levels.is_empty() {
            return Err(Error::InvalidLadder("ladder needs at least one level".into()));
        }
        if energy_levels.len() != temperatures.len() {
            return Err(Error::InvalidLadder(format!(
                "{} energy levels but {} temperatures",
                energy_levels.len(),
                temperatures.len()
            )));
        }
        if energy_levels.iter().chain(&temperatures).any(|v| !v.is_finite()) {
            return Err(Error::InvalidLadder("non-finite ladder entry".into()));
        }
        if let Some(w) = energy_levels.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidLadder(format!(
                "energy levels must increase strictly ({} >= {})",
                w[0], w[1]
            )));
        }
        if let Some(w) = temperatures.windows(2).find(|w| w[0] > w[1]) {
            return Err(Error::InvalidLadder(format!(
                "temperatures must be non-decreasing ({} > {})",
                w[0], w[1]
            )));
        }
        if (temperatures[0] - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidLadder(format!("T_0 must be 1, got {}", temperatures[0])));
        }
        Ok(Self {
            energy_levels,
            temperatures,
        })
    }

    /// Single-chain ladder: plain Metropolis-Hastings on the target.
    pub fn single(h_min: f64) -> Self {
        Self {
            energy_levels: vec![h_min],
            temperatures: vec![1.0],
        }
    }

    /// Index of the hottest chain.
    pub fn k(&self) -> usize {
        self.energy_levels.len() - 1
    }

    pub fn n_chains(&self) -> usize {
        self.energy_levels.len()
    }

    pub fn energy_levels(&self) -> &[f64] {
        &self.energy_levels
    }

    pub fn temperatures(&self) -> &[f64] {
        &self.temperatures
    }

    pub fn level(&self, i: usize) -> f64 {
        self.energy_levels[i]
    }

    pub fn temperature(&self, i: usize) -> f64 {
        self.temperatures[i]
    }

    pub fn ring_index(&self, e: f64) -> usize {
        ring_index(e, &self.energy_levels)
    }

    /// `max(e, H_i)`: chain `i` sees a flat landscape below its floor.
    #[inline]
    pub fn flattened_energy(&self, e: f64, i: usize) -> f64 {
        e.max(self.energy_levels[i])
    }

    /// Unnormalized log density of chain `i`: `-max(h, H_i) / T_i`.
    #[inline]
    pub fn log_density(&self, e: f64, i: usize) -> f64 {
        -self.flattened_energy(e, i) / self.temperatures[i]
    }

    /// Insert a chain between `i` and `i + 1`. The new temperature is the
    /// geometric mean of its neighbours; the new level is the geometric mean
    /// of the neighbours' heights above `H_0` (arithmetic midpoint when the
    /// lower neighbour is `H_0` itself).
    pub fn split(&self, i: usize) -> Result<Self> {
        if i >= self.k() {
            return Err(Error::InvalidLadder(format!("cannot split above chain {i}")));
        }
        let h0 = self.energy_levels[0];
        let (lo, hi) = (self.energy_levels[i], self.energy_levels[i + 1]);
        let h_new = if i == 0 {
            0.5 * (lo + hi)
        } else {
            h0 + ((lo - h0) * (hi - h0)).sqrt()
        };
        let t_new = (self.temperatures[i] * self.temperatures[i + 1]).sqrt();
        let mut levels = self.energy_levels.clone();
        let mut temps = self.temperatures.clone();
        levels.insert(i + 1, h_new);
        temps.insert(i + 1, t_new);
        Self::new(levels, temps)
    }
}

/// Largest `j` with `levels[j] <= e`, clamped to 0 below `levels[0]`.
#[inline]
pub fn ring_index(e: f64, levels: &[f64]) -> usize {
    levels.partition_point(|&h| h <= e).saturating_sub(1)
}

/// Energy levels `H_0 = h_min`, `H_1 = h1` and then geometric steps
/// `d_1, d_1 r, d_1 r^2, ...` scaled so that `k` steps from `h1` land on
/// `h_top`. Only the first `k - 1` steps become levels.
pub fn geometric_energy_ladder(h_min: f64, h1: f64, h_top: f64, k: usize, ratio: f64) -> Result<Vec<f64>> {
    if !(h_min < h1 && h1 < h_top) {
        return Err(Error::InvalidLadder(format!(
            "need h_min < h1 < h_top, got {h_min}, {h1}, {h_top}"
        )));
    }
    if k < 1 {
        return Err(Error::InvalidLadder("k must be >= 1".into()));
    }
    if ratio.is_nan() || ratio < 1.0 || !ratio.is_finite() {
        return Err(Error::InvalidLadder(format!("ratio must be >= 1, got {ratio}")));
    }
    let weight_sum: f64 = (0..k).map(|j| ratio.powi(j as i32)).sum();
    let d1 = (h_top - h1) / weight_sum;
    let mut levels = Vec::with_capacity(k + 1);
    levels.push(h_min);
    levels.push(h1);
    let mut h = h1;
    for j in 0..k - 1 {
        h += d1 * ratio.powi(j as i32);
        levels.push(h);
    }
    assert!(levels.windows(2).all(|w| w[0] < w[1]), "geometric ladder not monotone");
    Ok(levels)
}

/// `T_i = t_top^(i/k)`. A single-chain ladder (`k = 0`) requires `t_top = 1`.
pub fn log_uniform_temperatures(t_top: f64, k: usize) -> Result<Vec<f64>> {
    if t_top.is_nan() || t_top < 1.0 || !t_top.is_finite() {
        return Err(Error::InvalidLadder(format!("t_top must be >= 1, got {t_top}")));
    }
    if k == 0 {
        if t_top != 1.0 {
            return Err(Error::InvalidLadder("k = 0 requires t_top = 1".into()));
        }
        return Ok(vec![1.0]);
    }
    let log_top = t_top.ln();
    Ok((0..=k)
        .map(|i| {
            if i == k {
                t_top
            } else {
                (log_top * i as f64 / k as f64).exp()
            }
        })
        .collect())
}

/// Temperatures from `(H_{i+1} - H_i) / T_i = c`; the top temperature
/// continues the ratio of the last two. No rescaling to `T_0 = 1` is done.
pub fn coupled_ladder(levels: &[f64], c: f64) -> Result<Vec<f64>> {
    if c.is_nan() || c <= 0.0 {
        return Err(Error::InvalidLadder(format!("c must be positive, got {c}")));
    }
    if levels.len() < 2 {
        return Err(Error::InvalidLadder("coupled ladder needs >= 2 levels".into()));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidLadder("energy levels must increase strictly".into()));
    }
    let k = levels.len() - 1;
    let mut temps: Vec<f64> = levels.windows(2).map(|w| (w[1] - w[0]) / c).collect();
    let top = if k >= 2 {
        temps[k - 1] * (temps[k - 1] / temps[k - 2])
    } else {
        temps[0]
    };
    temps.push(top);
    if let Some(w) = temps.windows(2).find(|w| w[0] > w[1]) {
        return Err(Error::InvalidLadder(format!(
            "coupled temperatures not monotone ({} > {})",
            w[0], w[1]
        )));
    }
    Ok(temps)
}

/// Result of [`tune_ladder`].
#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub ladder: Ladder,
    /// Per-chain tau vector matching `ladder`.
    pub tau: Vec<f64>,
    /// Measured EE acceptance rate of chains `0..K` on the returned ladder.
    pub rates: Vec<f64>,
    /// Pilot rounds run (0 when no pilot was needed).
    pub rounds: usize,
    /// False when the round budget ran out before every rate reached target.
    pub converged: bool,
}

pub const MAX_TUNING_ROUNDS: usize = 5;

/// Pilot-run ladder tuning. While some chain's EE acceptance rate is below
/// `target_rate`, a chain is inserted above the worst one and the pilot is
/// repeated, up to [`MAX_TUNING_ROUNDS`] pilots.
pub fn tune_ladder<R: Rng + ?Sized>(
    model: &TargetModel,
    base: &SamplerConfig,
    pilot_iters: usize,
    target_rate: f64,
    rng: &mut R,
) -> Result<TuneOutcome> {
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::InvalidLadder(format!("target rate {target_rate} not in (0, 1)")));
    }
    if pilot_iters < 1000 {
        return Err(Error::InvalidLadder(format!("pilot_iters {pilot_iters} < 1000")));
    }
    base.validate()?;
    if base.ladder.k() == 0 {
        return Ok(TuneOutcome {
            ladder: base.ladder.clone(),
            tau: base.tau.clone(),
            rates: Vec::new(),
            rounds: 0,
            converged: true,
        });
    }

    let mut cfg = base.clone();
    cfg.n_iters = pilot_iters;
    cfg.burn_in = pilot_iters / 4;
    let mut best: Option<(f64, TuneOutcome)> = None;

    for round in 1..=MAX_TUNING_ROUNDS {
        let run = run_ee_serial(model, &cfg, rng)?;
        let k = cfg.ladder.k();
        if run.counters[..k].iter().all(|c| c.ee_attempts == 0) {
            return Err(Error::TuningInfeasible(
                "pilot run made no equi-energy jump attempts".into(),
            ));
        }
        let rates: Vec<f64> = run.counters[..k].iter().map(|c| c.ee_acceptance_rate()).collect();
        let (worst, worst_rate) = rates
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, r)| if r < acc.1 { (i, r) } else { acc });
        let outcome = TuneOutcome {
            ladder: cfg.ladder.clone(),
            tau: cfg.tau.clone(),
            rates,
            rounds: round,
            converged: worst_rate >= target_rate,
        };
        log::debug!("tuning round {round}: rates {:?}", outcome.rates);
        if outcome.converged {
            return Ok(outcome);
        }
        if best.as_ref().is_none_or(|(r, _)| worst_rate > *r) {
            best = Some((worst_rate, outcome));
        }
        if round < MAX_TUNING_ROUNDS {
            cfg.ladder = cfg.ladder.split(worst)?;
            cfg.tau.insert(worst + 1, cfg.tau[worst + 1]);
        }
    }
    Ok(best.expect("at least one round ran").1)
}
