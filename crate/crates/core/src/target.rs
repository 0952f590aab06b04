//! Target distributions, expressed through their energy `h(x) = -ln p̃(x)`.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Minimum energy of the needle target, reached at the origin.
pub const NEEDLE_MIN_ENERGY: f64 = -7.0;

/// Variance of the narrow component, chosen so that `0.5 / (2π σ²) = e^7`.
pub fn needle_variance() -> f64 {
    0.5 / (2.0 * PI * NEEDLE_MIN_ENERGY.abs().exp())
}

/// A diagnostic basin: states within `radius` of `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Mode {
    pub fn contains(&self, x: &[f64]) -> bool {
        squared_distance(x, &self.center) < self.radius * self.radius
    }
}

/// One isotropic Gaussian component of a mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: f64,
}

/// Isotropic Gaussian mixture. Per-component log normalizers are cached so
/// that the energy is a single log-sum-exp pass.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    dim: usize,
    components: Vec<Component>,
    log_coef: Vec<f64>,
    inv_two_var: Vec<f64>,
    modes: Vec<Mode>,
}

impl GaussianMixture {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidTarget("mixture needs at least one component".into()))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::InvalidTarget("dimension must be >= 1".into()));
        }
        let mut total = 0.0;
        for (k, c) in components.iter().enumerate() {
            if c.mean.len() != dim {
                return Err(Error::InvalidTarget(format!(
                    "component {k} has mean of length {}, expected {dim}",
                    c.mean.len()
                )));
            }
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(Error::InvalidTarget(format!(
                    "component {k} weight {} not in (0, 1]",
                    c.weight
                )));
            }
            if !(c.variance > 0.0 && c.variance.is_finite()) {
                return Err(Error::InvalidTarget(format!(
                    "component {k} variance {} must be positive",
                    c.variance
                )));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::InvalidTarget(format!("component {k} mean is not finite")));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidTarget(format!("weights sum to {total}, expected 1")));
        }

        let d = dim as f64;
        let log_coef = components
            .iter()
            .map(|c| c.weight.ln() - 0.5 * d * (2.0 * PI * c.variance).ln())
            .collect();
        let inv_two_var = components.iter().map(|c| 0.5 / c.variance).collect();
        let modes = components
            .iter()
            .map(|c| Mode {
                center: c.mean.clone(),
                radius: 3.0 * c.variance.sqrt(),
            })
            .collect();
        Ok(Self {
            dim,
            components,
            log_coef,
            inv_two_var,
            modes,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// Replace the diagnostic basins (defaults are 3σ around each mean).
    pub fn with_modes(mut self, modes: Vec<Mode>) -> Result<Self> {
        if modes.iter().any(|m| m.center.len() != self.dim) {
            return Err(Error::InvalidTarget("mode center length != dimension".into()));
        }
        self.modes = modes;
        Ok(self)
    }

    /// Energy without input validation; `x` must have length `dimension()`.
    #[inline]
    pub fn energy(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let n = self.components.len();
        if n == 1 {
            return -(self.log_coef[0] - self.inv_two_var[0] * squared_distance(x, &self.components[0].mean));
        }
        let mut max = f64::NEG_INFINITY;
        // Small mixtures dominate usage; keep the exponents on the stack.
        let mut buf = [0.0f64; 8];
        let mut heap;
        let terms: &mut [f64] = if n <= buf.len() {
            &mut buf[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        for (k, c) in self.components.iter().enumerate() {
            let t = self.log_coef[k] - self.inv_two_var[k] * squared_distance(x, &c.mean);
            terms[k] = t;
            if t > max {
                max = t;
            }
        }
        let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
        -(max + sum.ln())
    }

    /// Smallest energy over the component means; a lower bound estimate for `h_min`.
    pub fn min_energy_at_means(&self) -> f64 {
        self.components
            .iter()
            .map(|c| self.energy(&c.mean))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Finite state space with an explicit energy per state.
#[derive(Debug, Clone)]
pub struct DiscreteGrid {
    dim: usize,
    states: Vec<Vec<f64>>,
    energies: Vec<f64>,
    index: HashMap<Vec<u64>, usize>,
}

fn state_key(x: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 must hash alike.
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

impl DiscreteGrid {
    pub fn new(states: Vec<Vec<f64>>, energies: Vec<f64>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidTarget("grid needs at least one state".into()));
        }
        if states.len() != energies.len() {
            return Err(Error::InvalidTarget(format!(
                "{} states but {} energies",
                states.len(),
                energies.len()
            )));
        }
        let dim = states[0].len();
        if dim == 0 {
            return Err(Error::InvalidTarget("dimension must be >= 1".into()));
        }
        let mut index = HashMap::with_capacity(states.len());
        for (i, s) in states.iter().enumerate() {
            if s.len() != dim || s.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidTarget(format!("state {i} is malformed")));
            }
            if !energies[i].is_finite() {
                return Err(Error::InvalidTarget(format!("energy of state {i} is not finite")));
            }
            if index.insert(state_key(s), i).is_some() {
                return Err(Error::InvalidTarget(format!("state {i} is duplicated")));
            }
        }
        Ok(Self {
            dim,
            states,
            energies,
            index,
        })
    }

    /// One-dimensional grid with states `0, 1, ..., n-1`.
    pub fn from_energies(energies: Vec<f64>) -> Result<Self> {
        let states = (0..energies.len()).map(|i| vec![i as f64]).collect();
        Self::new(states, energies)
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i]
    }

    pub fn index_of(&self, x: &[f64]) -> Option<usize> {
        self.index.get(&state_key(x)).copied()
    }

    /// Exact Boltzmann probabilities `exp(-h/T) / Z` by enumeration.
    pub fn boltzmann(&self, temperature: f64) -> Vec<f64> {
        let min = self.energies.iter().copied().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = self.energies.iter().map(|e| (-(e - min) / temperature).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|v| v / z).collect()
    }
}

/// Continuous or finite state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    Continuous,
    Discrete,
}

/// Target model shared (immutably) by every sampler.
#[derive(Debug, Clone)]
pub enum TargetModel {
    Mixture(GaussianMixture),
    Grid(DiscreteGrid),
}

impl From<GaussianMixture> for TargetModel {
    fn from(m: GaussianMixture) -> Self {
        TargetModel::Mixture(m)
    }
}

impl From<DiscreteGrid> for TargetModel {
    fn from(g: DiscreteGrid) -> Self {
        TargetModel::Grid(g)
    }
}

impl TargetModel {
    pub fn dimension(&self) -> usize {
        match self {
            TargetModel::Mixture(m) => m.dimension(),
            TargetModel::Grid(g) => g.dimension(),
        }
    }

    pub fn support(&self) -> Support {
        match self {
            TargetModel::Mixture(_) => Support::Continuous,
            TargetModel::Grid(_) => Support::Discrete,
        }
    }

    pub fn modes(&self) -> &[Mode] {
        match self {
            TargetModel::Mixture(m) => m.modes(),
            TargetModel::Grid(_) => &[],
        }
    }

    /// Checked energy evaluation.
    pub fn energy(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension() {
            return Err(Error::InvalidState(format!(
                "state has length {}, expected {}",
                x.len(),
                self.dimension()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState("non-finite coordinate".into()));
        }
        match self {
            TargetModel::Mixture(m) => Ok(m.energy(x)),
            TargetModel::Grid(g) => g
                .index_of(x)
                .map(|i| g.energies[i])
                .ok_or_else(|| Error::InvalidState(format!("{x:?} is not a grid state"))),
        }
    }

    /// Unchecked energy for the sampler hot path. States produced by the
    /// samplers are always in the support.
    #[inline]
    pub(crate) fn energy_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            TargetModel::Mixture(m) => m.energy(x),
            TargetModel::Grid(g) => g.energies[g.index_of(x).expect("state outside grid support")],
        }
    }

    /// Draw an initial state: isotropic Gaussian with standard deviation
    /// `spread` around the origin for continuous targets, a uniform grid
    /// state for discrete ones.
    pub fn initial_state<R: Rng + ?Sized>(&self, spread: f64, rng: &mut R) -> Vec<f64> {
        match self {
            TargetModel::Mixture(m) => (0..m.dimension())
                .map(|_| spread * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            TargetModel::Grid(g) => g.states[rng.random_range(0..g.len())].clone(),
        }
    }
}

/// Two-component needle-in-the-haystack mixture in 2-D: a needle of
/// variance `needle_variance()` at the origin and a unit-variance haystack at
/// (5, 5), equal weights. The needle basin used for diagnostics has radius
/// 0.05, the visiting-probability radius.
pub fn make_needle_target() -> GaussianMixture {
    GaussianMixture::new(vec![
        Component {
            weight: 0.5,
            mean: vec![0.0, 0.0],
            variance: needle_variance(),
        },
        Component {
            weight: 0.5,
            mean: vec![5.0, 5.0],
            variance: 1.0,
        },
    ])
    .and_then(|m| {
        m.with_modes(vec![
            Mode {
                center: vec![0.0, 0.0],
                radius: 0.05,
            },
            Mode {
                center: vec![5.0, 5.0],
                radius: 3.0,
            },
        ])
    })
    .expect("needle preset is valid")
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
