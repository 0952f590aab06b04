//! Local move proposals. Any symmetric proposal can drive the local step;
//! the engine only ever asks for a candidate near the current state.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::target::{DiscreteGrid, TargetModel};

/// A symmetric local proposal: `q(x -> y) = q(y -> x)`.
///
/// `scale` is the chain's step size, `tau_i * sqrt(T_i)`; proposals that
/// have no notion of step size may ignore it.
pub trait LocalProposal {
    fn propose<R: Rng + ?Sized>(&self, x: &[f64], scale: f64, rng: &mut R, out: &mut Vec<f64>);
}

/// `y = x + scale * z`, `z ~ N(0, I)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianRandomWalk;

impl LocalProposal for GaussianRandomWalk {
    #[inline]
    fn propose<R: Rng + ?Sized>(&self, x: &[f64], scale: f64, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        out.extend(x.iter().map(|v| v + scale * rng.sample::<f64, _>(StandardNormal)));
    }
}

/// Moves to the previous or next state of a grid, cyclically, with equal
/// probability.
#[derive(Debug, Clone, Copy)]
pub struct GridNeighborWalk<'a> {
    grid: &'a DiscreteGrid,
}

impl<'a> GridNeighborWalk<'a> {
    pub fn new(grid: &'a DiscreteGrid) -> Self {
        Self { grid }
    }
}

impl LocalProposal for GridNeighborWalk<'_> {
    fn propose<R: Rng + ?Sized>(&self, x: &[f64], _scale: f64, rng: &mut R, out: &mut Vec<f64>) {
        let n = self.grid.len();
        let i = self.grid.index_of(x).expect("state outside grid support");
        let j = if rng.random::<bool>() {
            (i + 1) % n
        } else {
            (i + n - 1) % n
        };
        out.clear();
        out.extend_from_slice(self.grid.state(j));
    }
}

/// The proposal the engine uses when none is supplied.
#[derive(Debug, Clone, Copy)]
pub enum DefaultProposal<'a> {
    Gaussian(GaussianRandomWalk),
    Grid(GridNeighborWalk<'a>),
}

impl<'a> DefaultProposal<'a> {
    pub fn for_model(model: &'a TargetModel) -> Self {
        match model {
            TargetModel::Mixture(_) => DefaultProposal::Gaussian(GaussianRandomWalk),
            TargetModel::Grid(g) => DefaultProposal::Grid(GridNeighborWalk::new(g)),
        }
    }
}

impl LocalProposal for DefaultProposal<'_> {
    #[inline]
    fn propose<R: Rng + ?Sized>(&self, x: &[f64], scale: f64, rng: &mut R, out: &mut Vec<f64>) {
        match self {
            DefaultProposal::Gaussian(p) => p.propose(x, scale, rng, out),
            DefaultProposal::Grid(p) => p.propose(x, scale, rng, out),
        }
    }
}
