//! Equi-energy sampler, parallel tempering and plain Metropolis-Hastings.
//!
//! Chain `i` of the EE sampler targets `pi_i(x) ∝ exp(-max(h(x), H_i) / T_i)`.
//! Every post-burn-in state of chain `i` is recorded into chain `i`'s ring
//! store, and chain `i - 1` draws its equi-energy proposals from that store.

mod proposal;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;

pub use proposal::{DefaultProposal, GaussianRandomWalk, GridNeighborWalk, LocalProposal};

use crate::error::{Error, Result};
use crate::ladder::Ladder;
use crate::rings::{coord_header, cross_ring_probabilities, cross_ring_proposal_index, Capacity, EnergyRings};
use crate::target::TargetModel;

/// How the EE chains are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// Chain `K` runs to completion, then `K - 1`, and so on down to 0.
    #[default]
    Serial,
    /// Chains advance in lockstep; chain `i` starts once chain `i + 1`
    /// has finished its burn-in.
    Interleaved,
}

/// Initial state policy.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Independent draw per chain, isotropic Gaussian around the origin
    /// with this standard deviation (uniform state for grid targets).
    Spread(f64),
    /// Every chain starts here.
    Fixed(Vec<f64>),
}

impl Default for Init {
    fn default() -> Self {
        Init::Spread(10.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub ladder: Ladder,
    /// Recorded iterations per chain (after burn-in).
    pub n_iters: usize,
    pub burn_in: usize,
    /// Probability that a step of an EE chain is an equi-energy jump.
    pub p_ee: f64,
    /// Probability that a PT iteration is a replica exchange.
    pub p_ex: f64,
    /// Per-chain proposal scale; the random-walk standard deviation of
    /// chain `i` is `tau[i] * sqrt(T_i)`.
    pub tau: Vec<f64>,
    pub schedule: Schedule,
    pub seed: u64,
    pub ring_capacity: Capacity,
    /// Cross-ring proposal decay; 0 keeps jumps inside the current ring.
    pub cross_ring_rho: f64,
    pub init: Init,
}

impl SamplerConfig {
    /// Defaults: `p_ee = p_ex = 0.3`, `tau = 1` for every chain, a quarter of
    /// `n_iters` as burn-in, serial schedule, unbounded rings.
    pub fn new(ladder: Ladder, n_iters: usize) -> Self {
        let n = ladder.n_chains();
        Self {
            ladder,
            n_iters,
            burn_in: n_iters / 4,
            p_ee: 0.3,
            p_ex: 0.3,
            tau: vec![1.0; n],
            schedule: Schedule::Serial,
            seed: 0,
            ring_capacity: Capacity::Unbounded,
            cross_ring_rho: 0.0,
            init: Init::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSampler(m));
        if !(0.0..1.0).contains(&self.p_ee) {
            return bad(format!("p_ee = {} not in [0, 1)", self.p_ee));
        }
        if !(0.0..1.0).contains(&self.p_ex) {
            return bad(format!("p_ex = {} not in [0, 1)", self.p_ex));
        }
        if self.n_iters < 1 {
            return bad("n_iters must be >= 1".into());
        }
        if self.tau.len() != self.ladder.n_chains() {
            return bad(format!(
                "tau has {} entries for {} chains",
                self.tau.len(),
                self.ladder.n_chains()
            ));
        }
        if self.tau.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return bad("every tau must be positive".into());
        }
        if !(0.0..1.0).contains(&self.cross_ring_rho) {
            return bad(format!("cross_ring_rho = {} not in [0, 1)", self.cross_ring_rho));
        }
        if let Capacity::Bounded(0) = self.ring_capacity {
            return bad("ring capacity must be positive".into());
        }
        match &self.init {
            Init::Spread(s) if !(*s > 0.0 && s.is_finite()) => bad(format!("init spread {s} must be positive")),
            _ => Ok(()),
        }
    }

    /// Random-walk standard deviation of chain `i`.
    pub fn step_scale(&self, i: usize) -> f64 {
        self.tau[i] * self.ladder.temperature(i).sqrt()
    }
}

/// Move counters of one chain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChainCounters {
    pub local_attempts: u64,
    pub local_accepts: u64,
    pub ee_attempts: u64,
    pub ee_accepts: u64,
    pub empty_ring_fallbacks: u64,
    /// PT: exchanges between this chain and the one above.
    pub exchange_attempts: u64,
    pub exchange_accepts: u64,
}

impl ChainCounters {
    pub fn ee_acceptance_rate(&self) -> f64 {
        ratio(self.ee_accepts, self.ee_attempts)
    }

    pub fn local_acceptance_rate(&self) -> f64 {
        ratio(self.local_accepts, self.local_attempts)
    }

    pub fn exchange_acceptance_rate(&self) -> f64 {
        ratio(self.exchange_accepts, self.exchange_attempts)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Current position of one chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub index: usize,
    pub x: Vec<f64>,
    pub energy: f64,
    pub counters: ChainCounters,
    scratch: Vec<f64>,
}

impl ChainState {
    pub fn new(index: usize, x: Vec<f64>, model: &TargetModel) -> Result<Self> {
        let energy = model.energy(&x)?;
        Ok(Self {
            index,
            scratch: Vec::with_capacity(x.len()),
            x,
            energy,
            counters: ChainCounters::default(),
        })
    }

    fn initial<R: Rng + ?Sized>(index: usize, model: &TargetModel, init: &Init, rng: &mut R) -> Result<Self> {
        let x = match init {
            Init::Spread(s) => model.initial_state(*s, rng),
            Init::Fixed(x) => x.clone(),
        };
        Self::new(index, x, model)
    }
}

/// Chain-0 samples (or any ordered collection of states with energies).
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    dim: usize,
    coords: Vec<f64>,
    energies: Vec<f64>,
}

impl Trace {
    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            dim,
            coords: Vec::with_capacity(dim * n),
            energies: Vec::with_capacity(n),
        }
    }

    pub fn from_states(states: &[Vec<f64>], energies: &[f64]) -> Self {
        let dim = states.first().map_or(1, Vec::len);
        let mut t = Self::with_capacity(dim, states.len());
        for (s, e) in states.iter().zip(energies) {
            t.push(s, *e);
        }
        t
    }

    pub fn push(&mut self, x: &[f64], e: f64) {
        debug_assert_eq!(x.len(), self.dim);
        self.coords.extend_from_slice(x);
        self.energies.push(e);
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.states().zip(self.energies.iter().copied())
    }

    /// CSV with columns `iter,coord_1..coord_d,energy`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let write = || -> std::io::Result<()> {
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "{}", coord_header(self.dim, true))?;
            for (i, (x, e)) in self.iter().enumerate() {
                write!(w, "{i}")?;
                for v in x {
                    write!(w, ",{v}")?;
                }
                writeln!(w, ",{e}")?;
            }
            w.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }
}

/// Output of one sampler run.
#[derive(Debug, Clone)]
pub struct SamplerRun {
    /// Post-burn-in chain-0 states, exactly `n_iters` of them.
    pub trace: Trace,
    /// Ring store of every chain (EE only; empty for PT and MH).
    pub rings: Vec<EnergyRings>,
    pub counters: Vec<ChainCounters>,
}

impl SamplerRun {
    /// All recorded samples as `(chain, state, energy)`.
    pub fn all_samples(&self) -> impl Iterator<Item = (usize, &[f64], f64)> + '_ {
        self.rings
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |rec| (i, rec.state, rec.energy)))
    }

    /// Per-chain CSV: `chain,local_attempts,local_accepts,ee_attempts,ee_accepts,empty_ring_fallbacks,exchange_attempts,exchange_accepts`.
    pub fn write_counters_csv(&self, path: &Path) -> Result<()> {
        let write = || -> std::io::Result<()> {
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "{COUNTER_HEADER}")?;
            for (i, c) in self.counters.iter().enumerate() {
                writeln!(
                    w,
                    "{i},{},{},{},{},{},{},{}",
                    c.local_attempts,
                    c.local_accepts,
                    c.ee_attempts,
                    c.ee_accepts,
                    c.empty_ring_fallbacks,
                    c.exchange_attempts,
                    c.exchange_accepts
                )?;
            }
            w.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }
}

pub const COUNTER_HEADER: &str =
    "chain,local_attempts,local_accepts,ee_attempts,ee_accepts,empty_ring_fallbacks,exchange_attempts,exchange_accepts";

/// `min(1, exp(log_a))`.
#[inline]
pub fn acceptance_probability(log_a: f64) -> f64 {
    if log_a >= 0.0 {
        1.0
    } else {
        log_a.exp()
    }
}

#[inline]
fn accept<R: Rng + ?Sized>(log_a: f64, rng: &mut R) -> bool {
    log_a >= 0.0 || rng.random::<f64>() < log_a.exp()
}

/// Log acceptance of a symmetric local move of chain `i` from energy `hx`
/// to `hy`. With `flatten` the chain sees `max(h, H_i)`, otherwise `h`.
#[inline]
pub fn local_log_acceptance(ladder: &Ladder, i: usize, hx: f64, hy: f64, flatten: bool) -> f64 {
    let (fx, fy) = if flatten {
        (ladder.flattened_energy(hx, i), ladder.flattened_energy(hy, i))
    } else {
        (hx, hy)
    };
    -(fy - fx) / ladder.temperature(i)
}

/// Log acceptance of an equi-energy jump of chain `i` from `hx` to a state
/// `hy` recorded by chain `i + 1`: `log pi_i(y)/pi_i(x) + log pi_{i+1}(x)/pi_{i+1}(y)`.
#[inline]
pub fn ee_log_acceptance(ladder: &Ladder, i: usize, hx: f64, hy: f64) -> f64 {
    (ladder.log_density(hy, i) - ladder.log_density(hx, i))
        + (ladder.log_density(hx, i + 1) - ladder.log_density(hy, i + 1))
}

/// Log acceptance of swapping the states of chains at temperatures `t_lo`
/// and `t_hi` holding energies `h_lo` and `h_hi`.
#[inline]
pub fn pt_log_acceptance(t_lo: f64, t_hi: f64, h_lo: f64, h_hi: f64) -> f64 {
    (1.0 / t_lo - 1.0 / t_hi) * (h_lo - h_hi)
}

/// One Metropolis-Hastings step of `chain` with the supplied proposal.
pub fn local_mh_step<P: LocalProposal, R: Rng + ?Sized>(
    chain: &mut ChainState,
    model: &TargetModel,
    cfg: &SamplerConfig,
    flatten: bool,
    proposal: &P,
    rng: &mut R,
) {
    let i = chain.index;
    proposal.propose(&chain.x, cfg.step_scale(i), rng, &mut chain.scratch);
    let hy = model.energy_unchecked(&chain.scratch);
    chain.counters.local_attempts += 1;
    if accept(local_log_acceptance(&cfg.ladder, i, chain.energy, hy, flatten), rng) {
        std::mem::swap(&mut chain.x, &mut chain.scratch);
        chain.energy = hy;
        chain.counters.local_accepts += 1;
    }
}

/// Equi-energy jump of chain `i` into the records of chain `i + 1`.
///
/// The candidate is drawn uniformly from the ring holding the current energy
/// (or from a ring picked by [`cross_ring_proposal_index`] when
/// `cross_ring_rho > 0`). An empty ring falls back to a local step.
pub fn ee_jump_step<P: LocalProposal, R: Rng + ?Sized>(
    chain: &mut ChainState,
    above: &EnergyRings,
    model: &TargetModel,
    cfg: &SamplerConfig,
    proposal: &P,
    rng: &mut R,
) {
    let i = chain.index;
    debug_assert!(i < cfg.ladder.k(), "the hottest chain has no rings above it");
    let j = above.ring_index(chain.energy);
    let rho = cfg.cross_ring_rho;
    let m = if rho > 0.0 {
        cross_ring_proposal_index(j, cfg.ladder.k(), rho, rng)
    } else {
        j
    };
    let Some(rec) = above.sample_uniform(m, rng) else {
        chain.counters.empty_ring_fallbacks += 1;
        local_mh_step(chain, model, cfg, true, proposal, rng);
        return;
    };
    chain.counters.ee_attempts += 1;
    let mut log_a = ee_log_acceptance(&cfg.ladder, i, chain.energy, rec.energy);
    if m != j {
        match cross_ring_log_correction(above, j, m, rho) {
            Some(c) => log_a += c,
            None => return,
        }
    }
    if accept(log_a, rng) {
        chain.x.clear();
        chain.x.extend_from_slice(rec.state);
        chain.energy = rec.energy;
        chain.counters.ee_accepts += 1;
    }
}

/// Hastings term for a jump from ring `j` into ring `m`:
/// `log [p(j | m) / p(m | j)] + log [Z_m / Z_j]`, with the ring masses `Z`
/// of the upper chain estimated by the rings' insert counts. `None` when the
/// reverse move is impossible (ring `j` has never been populated).
pub fn cross_ring_log_correction(above: &EnergyRings, j: usize, m: usize, rho: f64) -> Option<f64> {
    let occ = above.occupancy();
    let (zj, zm) = (occ[j].insert_count, occ[m].insert_count);
    if zj == 0 || zm == 0 {
        return None;
    }
    let k = above.n_rings() - 1;
    let fwd = cross_ring_probabilities(j, k, rho)[m];
    let rev = cross_ring_probabilities(m, k, rho)[j];
    Some((rev / fwd).ln() + (zm as f64 / zj as f64).ln())
}

/// Replica exchange between adjacent chains `lo` and `hi` (`hi` the hotter).
/// Counted on `lo`.
pub fn pt_exchange_step<R: Rng + ?Sized>(lo: &mut ChainState, hi: &mut ChainState, ladder: &Ladder, rng: &mut R) {
    debug_assert_eq!(lo.index + 1, hi.index);
    let log_a = pt_log_acceptance(
        ladder.temperature(lo.index),
        ladder.temperature(hi.index),
        lo.energy,
        hi.energy,
    );
    lo.counters.exchange_attempts += 1;
    if accept(log_a, rng) {
        std::mem::swap(&mut lo.x, &mut hi.x);
        std::mem::swap(&mut lo.energy, &mut hi.energy);
        lo.counters.exchange_accepts += 1;
    }
}

#[inline]
fn ee_step<P: LocalProposal, R: Rng + ?Sized>(
    chain: &mut ChainState,
    above: Option<&EnergyRings>,
    model: &TargetModel,
    cfg: &SamplerConfig,
    proposal: &P,
    rng: &mut R,
) {
    match above {
        Some(rings) if rng.random::<f64>() < cfg.p_ee => ee_jump_step(chain, rings, model, cfg, proposal, rng),
        _ => local_mh_step(chain, model, cfg, true, proposal, rng),
    }
}

fn new_stores(model: &TargetModel, cfg: &SamplerConfig) -> Vec<EnergyRings> {
    (0..cfg.ladder.n_chains())
        .map(|_| EnergyRings::new(model.dimension(), cfg.ladder.energy_levels(), cfg.ring_capacity))
        .collect()
}

pub fn run_ee_serial<R: Rng + ?Sized>(model: &TargetModel, cfg: &SamplerConfig, rng: &mut R) -> Result<SamplerRun> {
    run_ee_serial_with(model, cfg, &DefaultProposal::for_model(model), rng)
}

/// Serial EE: chains run to completion from the hottest down to chain 0.
pub fn run_ee_serial_with<P: LocalProposal, R: Rng + ?Sized>(
    model: &TargetModel,
    cfg: &SamplerConfig,
    proposal: &P,
    rng: &mut R,
) -> Result<SamplerRun> {
    cfg.validate()?;
    let k = cfg.ladder.k();
    let mut stores = new_stores(model, cfg);
    let mut counters = vec![ChainCounters::default(); k + 1];
    let mut trace = Trace::with_capacity(model.dimension(), cfg.n_iters);
    let total = cfg.burn_in + cfg.n_iters;

    for i in (0..=k).rev() {
        let (lower, upper) = stores.split_at_mut(i + 1);
        let own = &mut lower[i];
        let above = upper.first();
        let mut chain = ChainState::initial(i, model, &cfg.init, rng)?;
        for t in 0..total {
            ee_step(&mut chain, above, model, cfg, proposal, rng);
            if t >= cfg.burn_in {
                own.insert(&chain.x, chain.energy, rng);
                if i == 0 {
                    trace.push(&chain.x, chain.energy);
                }
            }
        }
        counters[i] = chain.counters;
    }
    Ok(SamplerRun {
        trace,
        rings: stores,
        counters,
    })
}

pub fn run_ee_interleaved<R: Rng + ?Sized>(
    model: &TargetModel,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<SamplerRun> {
    run_ee_interleaved_with(model, cfg, &DefaultProposal::for_model(model), rng)
}

/// Interleaved EE: one global iteration advances every active chain once,
/// hottest first. Chain `i` starts `burn_in` iterations after chain `i + 1`.
pub fn run_ee_interleaved_with<P: LocalProposal, R: Rng + ?Sized>(
    model: &TargetModel,
    cfg: &SamplerConfig,
    proposal: &P,
    rng: &mut R,
) -> Result<SamplerRun> {
    cfg.validate()?;
    let k = cfg.ladder.k();
    let mut stores = new_stores(model, cfg);
    let mut chains = (0..=k)
        .map(|i| ChainState::initial(i, model, &cfg.init, rng))
        .collect::<Result<Vec<_>>>()?;
    let mut trace = Trace::with_capacity(model.dimension(), cfg.n_iters);
    let per_chain = cfg.burn_in + cfg.n_iters;
    let start = |i: usize| (k - i) * cfg.burn_in;
    let horizon = start(0) + per_chain;

    for t in 0..horizon {
        for i in (0..=k).rev() {
            let s = start(i);
            if t < s || t >= s + per_chain {
                continue;
            }
            let (lower, upper) = stores.split_at_mut(i + 1);
            let chain = &mut chains[i];
            ee_step(chain, upper.first(), model, cfg, proposal, rng);
            if t - s >= cfg.burn_in {
                lower[i].insert(&chain.x, chain.energy, rng);
                if i == 0 {
                    trace.push(&chain.x, chain.energy);
                }
            }
        }
    }
    Ok(SamplerRun {
        trace,
        rings: stores,
        counters: chains.into_iter().map(|c| c.counters).collect(),
    })
}

/// Dispatch on `cfg.schedule`.
pub fn run_ee<R: Rng + ?Sized>(model: &TargetModel, cfg: &SamplerConfig, rng: &mut R) -> Result<SamplerRun> {
    match cfg.schedule {
        Schedule::Serial => run_ee_serial(model, cfg, rng),
        Schedule::Interleaved => run_ee_interleaved(model, cfg, rng),
    }
}

pub fn run_pt<R: Rng + ?Sized>(model: &TargetModel, cfg: &SamplerConfig, rng: &mut R) -> Result<SamplerRun> {
    run_pt_with(model, cfg, &DefaultProposal::for_model(model), rng)
}

/// Parallel tempering on the same ladder temperatures, unflattened energies.
/// Each iteration is, with probability `p_ex`, one exchange between a
/// uniformly chosen adjacent pair; otherwise every chain takes a local step.
pub fn run_pt_with<P: LocalProposal, R: Rng + ?Sized>(
    model: &TargetModel,
    cfg: &SamplerConfig,
    proposal: &P,
    rng: &mut R,
) -> Result<SamplerRun> {
    cfg.validate()?;
    let k = cfg.ladder.k();
    let mut chains = (0..=k)
        .map(|i| ChainState::initial(i, model, &cfg.init, rng))
        .collect::<Result<Vec<_>>>()?;
    let mut trace = Trace::with_capacity(model.dimension(), cfg.n_iters);

    for t in 0..cfg.burn_in + cfg.n_iters {
        if k > 0 && rng.random::<f64>() < cfg.p_ex {
            let pair = rng.random_range(0..k);
            let (lo, hi) = chains.split_at_mut(pair + 1);
            pt_exchange_step(&mut lo[pair], &mut hi[0], &cfg.ladder, rng);
        } else {
            for chain in chains.iter_mut() {
                local_mh_step(chain, model, cfg, false, proposal, rng);
            }
        }
        if t >= cfg.burn_in {
            trace.push(&chains[0].x, chains[0].energy);
        }
    }
    Ok(SamplerRun {
        trace,
        rings: Vec::new(),
        counters: chains.into_iter().map(|c| c.counters).collect(),
    })
}

pub fn run_mh<R: Rng + ?Sized>(model: &TargetModel, cfg: &SamplerConfig, rng: &mut R) -> Result<SamplerRun> {
    run_mh_with(model, cfg, &DefaultProposal::for_model(model), rng)
}

/// Random-walk Metropolis-Hastings on the target alone (chain 0 settings).
pub fn run_mh_with<P: LocalProposal, R: Rng + ?Sized>(
    model: &TargetModel,
    cfg: &SamplerConfig,
    proposal: &P,
    rng: &mut R,
) -> Result<SamplerRun> {
    cfg.validate()?;
    let mut chain = ChainState::initial(0, model, &cfg.init, rng)?;
    let mut trace = Trace::with_capacity(model.dimension(), cfg.n_iters);
    for t in 0..cfg.burn_in + cfg.n_iters {
        local_mh_step(&mut chain, model, cfg, false, proposal, rng);
        if t >= cfg.burn_in {
            trace.push(&chain.x, chain.energy);
        }
    }
    Ok(SamplerRun {
        trace,
        rings: Vec::new(),
        counters: vec![chain.counters],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::{make_needle_target, DiscreteGrid};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn needle_ladder() -> Ladder {
        Ladder::new(
            vec![-7.0, 3.13, 8.3, 26.8],
            crate::ladder::log_uniform_temperatures(30.0, 3).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn local_acceptance_examples() {
        let l = needle_ladder();
        assert_eq!(acceptance_probability(local_log_acceptance(&l, 1, 5.0, 5.0, true)), 1.0);
        // Both below the floor of chain 1: flat.
        assert_eq!(acceptance_probability(local_log_acceptance(&l, 1, 0.0, 3.0, true)), 1.0);
        let t = l.temperature(2);
        let a = acceptance_probability(local_log_acceptance(&l, 2, 10.0, 10.0 + t * 2f64.ln(), true));
        assert_abs_diff_eq!(a, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn needle_chain_zero_step_is_005() {
        let mut cfg = SamplerConfig::new(needle_ladder(), 10);
        cfg.tau = vec![0.05, 1.0, 1.0, 1.0];
        assert_abs_diff_eq!(cfg.step_scale(0), 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(cfg.step_scale(3), 30f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn ee_acceptance_examples() {
        let l = needle_ladder();
        assert_eq!(acceptance_probability(ee_log_acceptance(&l, 0, 4.0, 4.0)), 1.0);
        let a = acceptance_probability(ee_log_acceptance(&l, 0, 4.0, 6.0));
        assert_abs_diff_eq!(a, (-2.0 + 2.0 / 30f64.powf(1.0 / 3.0)).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(a, 0.258, epsilon = 1e-3);
    }

    #[test]
    fn pt_acceptance_examples() {
        assert_eq!(acceptance_probability(pt_log_acceptance(1.0, 3.107, 7.0, 7.0)), 1.0);
        let a = acceptance_probability(pt_log_acceptance(1.0, 3.107, 10.0, 12.0));
        assert_abs_diff_eq!(a, 0.258, epsilon = 1e-3);
        assert_eq!(acceptance_probability(pt_log_acceptance(2.0, 2.0, 10.0, 0.0)), 1.0);
    }

    #[test]
    fn empty_ring_falls_back_to_local() {
        let model: TargetModel = make_needle_target().into();
        let cfg = SamplerConfig::new(needle_ladder(), 10);
        let above = EnergyRings::new(2, cfg.ladder.energy_levels(), Capacity::Unbounded);
        let mut chain = ChainState::new(0, vec![5.0, 5.0], &model).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        ee_jump_step(&mut chain, &above, &model, &cfg, &GaussianRandomWalk, &mut rng);
        assert_eq!(chain.counters.empty_ring_fallbacks, 1);
        assert_eq!(chain.counters.ee_attempts, 0);
        assert_eq!(chain.counters.local_attempts, 1);
    }

    #[test]
    fn equal_energy_jump_always_accepted() {
        let model: TargetModel = DiscreteGrid::from_energies(vec![1.0, 1.0, 5.0]).unwrap().into();
        let ladder = Ladder::new(vec![0.0, 2.0], vec![1.0, 4.0]).unwrap();
        let cfg = SamplerConfig::new(ladder, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut above = EnergyRings::new(1, cfg.ladder.energy_levels(), Capacity::Unbounded);
        above.insert(&[1.0], 1.0, &mut rng);
        let mut chain = ChainState::new(0, vec![0.0], &model).unwrap();
        let p = GridNeighborWalk::new(match &model {
            TargetModel::Grid(g) => g,
            _ => unreachable!(),
        });
        for _ in 0..50 {
            ee_jump_step(&mut chain, &above, &model, &cfg, &p, &mut rng);
        }
        assert_eq!(chain.counters.ee_attempts, 50);
        assert_eq!(chain.counters.ee_accepts, 50);
        assert_eq!(chain.x, vec![1.0]);
    }

    fn small_needle_cfg(n: usize) -> SamplerConfig {
        let mut cfg = SamplerConfig::new(needle_ladder(), n);
        cfg.tau = vec![0.05, 1.0, 1.0, 1.0];
        cfg
    }

    #[test]
    fn serial_run_shape_and_counters() {
        let model: TargetModel = make_needle_target().into();
        let cfg = small_needle_cfg(2000);
        let run = run_ee_serial(&model, &cfg, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(run.trace.len(), 2000);
        assert_eq!(run.rings.len(), 4);
        let top = run.counters[3];
        assert_eq!(top.ee_attempts + top.empty_ring_fallbacks, 0);
        assert_eq!(top.local_attempts, 2500);
        for (i, c) in run.counters.iter().enumerate() {
            assert_eq!(c.local_attempts + c.ee_attempts, 2500, "chain {i}");
            assert_eq!(run.rings[i].total_len(), 2000);
        }
        for (x, e) in run.trace.iter() {
            assert!((model.energy(x).unwrap() - e).abs() < 1e-10);
        }
    }

    #[test]
    fn interleaved_run_shape() {
        let model: TargetModel = make_needle_target().into();
        let mut cfg = small_needle_cfg(1000);
        cfg.schedule = Schedule::Interleaved;
        let run = run_ee(&model, &cfg, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        assert_eq!(run.trace.len(), 1000);
        assert_eq!(run.counters[3].ee_attempts, 0);
        for c in &run.counters {
            assert_eq!(c.local_attempts + c.ee_attempts, 1250);
        }
    }

    #[test]
    fn single_chain_ee_is_mh() {
        let model: TargetModel = make_needle_target().into();
        let mut cfg = SamplerConfig::new(Ladder::single(-7.0), 500);
        cfg.tau = vec![0.5];
        let a = run_ee_serial(&model, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a.trace.len(), 500);
        assert_eq!(a.counters[0].ee_attempts, 0);
    }

    #[test]
    fn runs_are_reproducible() {
        let model: TargetModel = make_needle_target().into();
        let cfg = small_needle_cfg(3000);
        let mh_cfg = SamplerConfig {
            tau: vec![0.05],
            ladder: Ladder::single(-7.0),
            ..cfg.clone()
        };
        type Runner = fn(&TargetModel, &SamplerConfig, &mut ChaCha8Rng) -> Result<SamplerRun>;
        let runners: [(Runner, &SamplerConfig); 4] = [
            (run_ee_serial, &cfg),
            (run_ee_interleaved, &cfg),
            (run_pt, &cfg),
            (run_mh, &mh_cfg),
        ];
        for (f, c) in runners {
            let a = f(&model, c, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
            let b = f(&model, c, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
            assert_eq!(a.trace, b.trace);
            assert_eq!(a.counters, b.counters);
        }
    }

    #[test]
    fn pt_exchange_rate_matches_p_ex() {
        let model: TargetModel = make_needle_target().into();
        let cfg = small_needle_cfg(40_000);
        let run = run_pt(&model, &cfg, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let attempts: u64 = run.counters.iter().map(|c| c.exchange_attempts).sum();
        let total = (cfg.n_iters + cfg.burn_in) as f64;
        assert!((attempts as f64 / total - 0.3).abs() < 0.01);
        assert_eq!(run.counters[3].exchange_attempts, 0);
        assert_eq!(run.trace.len(), 40_000);
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = small_needle_cfg(10);
        let model: TargetModel = make_needle_target().into();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for bad in [
            SamplerConfig {
                p_ee: 1.0,
                ..base.clone()
            },
            SamplerConfig {
                p_ex: -0.1,
                ..base.clone()
            },
            SamplerConfig {
                n_iters: 0,
                ..base.clone()
            },
            SamplerConfig {
                tau: vec![1.0; 3],
                ..base.clone()
            },
            SamplerConfig {
                tau: vec![1.0, 0.0, 1.0, 1.0],
                ..base.clone()
            },
            SamplerConfig {
                cross_ring_rho: 1.0,
                ..base.clone()
            },
        ] {
            assert!(run_ee_serial(&model, &bad, &mut rng).is_err());
        }
    }
}
