#![allow(dead_code)]

use eesampler::{DiscreteGrid, GaussianMixture, Trace};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// 1-D grid of `n` states with energies drawn from U(0, 3).
pub fn random_grid<R: Rng>(n: usize, rng: &mut R) -> DiscreteGrid {
    let energies = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
    DiscreteGrid::from_energies(energies).unwrap()
}

pub fn empirical(trace: &Trace, grid: &DiscreteGrid) -> Vec<f64> {
    let mut counts = vec![0.0; grid.len()];
    for x in trace.states() {
        counts[grid.index_of(x).unwrap()] += 1.0;
    }
    let n = trace.len() as f64;
    counts.iter().map(|c| c / n).collect()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Pearson chi-square p-value of `counts` against `expected` (same total).
pub fn chi_square_p_value(counts: &[u64], expected: &[f64]) -> f64 {
    let stat: f64 = counts
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// `P(h(X) >= threshold)` under a 2-D mixture, by polar quadrature around
/// `center` out to `r_max`.
pub fn tail_probability(model: &GaussianMixture, center: [f64; 2], threshold: f64, r_max: f64) -> f64 {
    let n_r = 24_000;
    let n_theta = 512;
    let dr = r_max / n_r as f64;
    let dtheta = std::f64::consts::TAU / n_theta as f64;
    let mut total = 0.0;
    for a in 0..n_theta {
        let (s, c) = ((a as f64 + 0.5) * dtheta).sin_cos();
        for b in 0..n_r {
            let r = (b as f64 + 0.5) * dr;
            let h = model.energy(&[center[0] + r * c, center[1] + r * s]);
            if h >= threshold {
                total += (-h).exp() * r;
            }
        }
    }
    total * dr * dtheta
}
