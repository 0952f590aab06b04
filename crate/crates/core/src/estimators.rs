//! Estimators over sampler output and the replication statistics reported
//! for the needle benchmark.

use crate::engine::Trace;
use crate::error::{Error, Result};
use crate::ladder::Ladder;
use crate::target::{squared_distance, Mode};

/// Fraction of trace states with `‖x‖ < radius`.
pub fn visit_probability(trace: &Trace, radius: f64) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::UndefinedEstimate("empty trace".into()));
    }
    let r2 = radius * radius;
    let hits = trace.states().filter(|x| norm_sq(x) < r2).count();
    Ok(hits as f64 / trace.len() as f64)
}

/// Chain-0-only estimate `(1/n) Σ_i Σ_j w_j 1(X_i ∈ A ∩ D_j)`.
pub fn chain0_ring_estimator<F>(trace: &Trace, ladder: &Ladder, event: F, weights: &[f64]) -> Result<f64>
where
    F: Fn(&[f64]) -> bool,
{
    if weights.len() != ladder.n_chains() {
        return Err(Error::UndefinedEstimate(format!(
            "{} weights for {} rings",
            weights.len(),
            ladder.n_chains()
        )));
    }
    if trace.is_empty() {
        return Err(Error::UndefinedEstimate("empty trace".into()));
    }
    let total: f64 = trace
        .iter()
        .filter(|(x, _)| event(x))
        .map(|(_, e)| weights[ladder.ring_index(e)])
        .sum();
    Ok(total / trace.len() as f64)
}

const MAX_NORMALIZER_ITERS: usize = 5000;
const NORMALIZER_TOL: f64 = 1e-10;

/// Importance estimate of `E_{pi_0}[g]` pooling the samples of every chain.
///
/// Each sample is `(chain, state, energy)`. Because every chain's law depends
/// on the state only through its energy, so does the weight of a sample:
///
/// ```text
/// w(x) = exp(-h(x)) / Σ_i n_i exp(-max(h(x), H_i) / T_i) / Z_i
/// ```
///
/// The chain normalizers `Z_i` are solved self-consistently from the pooled
/// samples (fixed point of `Z_k = Σ_x q_k(x) / Σ_i n_i q_i(x) / Z_i`), so
/// chains at different temperatures are put on a common scale. With one
/// chain this is the plain sample mean.
pub fn ee_ring_weighted_estimator<'a, I, G>(samples: I, ladder: &Ladder, g: G) -> Result<f64>
where
    I: IntoIterator<Item = (usize, &'a [f64], f64)>,
    G: Fn(&[f64]) -> f64,
{
    let n_chains = ladder.n_chains();
    let mut counts = vec![0usize; n_chains];
    let mut log_q: Vec<f64> = Vec::new();
    let mut log_target: Vec<f64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut own: Vec<usize> = Vec::new();
    for (chain, x, e) in samples {
        if chain >= n_chains {
            return Err(Error::UndefinedEstimate(format!("sample from unknown chain {chain}")));
        }
        counts[chain] += 1;
        log_q.extend((0..n_chains).map(|i| ladder.log_density(e, i)));
        log_target.push(-e / ladder.temperature(0));
        values.push(g(x));
        own.push(chain);
    }
    if counts[0] == 0 {
        return Err(Error::UndefinedEstimate("no chain-0 samples".into()));
    }
    let n = values.len();
    let present: Vec<usize> = (0..n_chains).filter(|&i| counts[i] > 0).collect();
    let log_counts: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();

    // Starting point: per-chain importance estimate of Z_i relative to the target.
    let mut log_z = vec![0.0; n_chains];
    for &i in &present {
        let terms = (0..n)
            .filter(|&s| own[s] == 0)
            .map(|s| log_q[s * n_chains + i] - log_q[s * n_chains]);
        log_z[i] = log_sum_exp(terms) - log_counts[0];
    }

    let mut log_denom = vec![0.0; n];
    let compute_denoms = |log_z: &[f64], out: &mut [f64]| {
        for (s, d) in out.iter_mut().enumerate() {
            let row = &log_q[s * n_chains..(s + 1) * n_chains];
            *d = log_sum_exp(present.iter().map(|&i| log_counts[i] + row[i] - log_z[i]));
        }
    };
    if present.len() > 1 {
        let mut converged = false;
        for _ in 0..MAX_NORMALIZER_ITERS {
            compute_denoms(&log_z, &mut log_denom);
            let mut next = vec![0.0; n_chains];
            for &k in &present {
                next[k] = log_sum_exp((0..n).map(|s| log_q[s * n_chains + k] - log_denom[s]));
            }
            let shift = next[0];
            let mut delta: f64 = 0.0;
            for &k in &present {
                next[k] -= shift;
                delta = delta.max((next[k] - log_z[k]).abs());
            }
            log_z = next;
            if delta < NORMALIZER_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            log::warn!("chain normalizers did not converge in {MAX_NORMALIZER_ITERS} iterations");
        }
    }
    compute_denoms(&log_z, &mut log_denom);

    let log_w: Vec<f64> = (0..n).map(|s| log_target[s] - log_denom[s]).collect();
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights { max_log_weight: max });
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (lw, v) in log_w.iter().zip(&values) {
        let w = (lw - max).exp();
        num += w * v;
        den += w;
    }
    if den.is_nan() || den <= 0.0 || !den.is_finite() {
        return Err(Error::DegenerateWeights { max_log_weight: max });
    }
    Ok(num / den)
}

/// Single-pass log-sum-exp.
fn log_sum_exp<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for t in terms {
        if t <= max {
            sum += (t - max).exp();
        } else if t.is_finite() {
            sum = sum * (max - t).exp() + 1.0;
            max = t;
        } else if t == f64::INFINITY {
            return t;
        }
    }
    if sum == 0.0 {
        f64::NEG_INFINITY
    } else {
        max + sum.ln()
    }
}

/// Number of changes of basin label along the trace. States outside every
/// basin are skipped; a state in several basins takes the first.
pub fn count_mode_jumps(trace: &Trace, modes: &[Mode]) -> usize {
    let mut last: Option<usize> = None;
    let mut jumps = 0;
    for x in trace.states() {
        let Some(label) = modes.iter().position(|m| m.contains(x)) else {
            continue;
        };
        if last.is_some_and(|l| l != label) {
            jumps += 1;
        }
        last = Some(label);
    }
    jumps
}

/// True when no trace state comes within `radius` of `center`.
pub fn missed(trace: &Trace, center: &[f64], radius: f64) -> bool {
    let r2 = radius * radius;
    !trace.states().any(|x| squared_distance(x, center) < r2)
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Per-replication result.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub p_hat: f64,
    pub jumps: usize,
    pub miss: bool,
    pub local_rates: Vec<f64>,
    /// EE jump acceptance per chain (EE only).
    pub ee_rates: Vec<f64>,
    /// Exchange acceptance per adjacent pair (PT only).
    pub exchange_rates: Vec<f64>,
}

/// Replication statistics: mean, sample std (`n - 1`), nearest-rank 5%/95%
/// quantiles, and MSE against the truth (`n` denominator).
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSummary {
    pub n_runs: usize,
    pub mean: f64,
    pub std: f64,
    pub q05: f64,
    pub q95: f64,
    pub mse: f64,
    pub jump_mean: f64,
    pub miss_count: usize,
}

pub const SUMMARY_HEADER: &str = "sampler,t_top,n_iters,mean,std,q05,q95,mse,jump_mean,miss_count";

impl AggregateSummary {
    pub fn csv_row(&self, sampler: &str, t_top: f64, n_iters: usize) -> String {
        format!(
            "{sampler},{t_top},{n_iters},{:.6},{:.6},{:.6},{:.6},{:.6},{:.2},{}",
            self.mean, self.std, self.q05, self.q95, self.mse, self.jump_mean, self.miss_count
        )
    }
}

/// Nearest-rank empirical quantile of sorted data.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = (p * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Table statistics over replications. With a single replication the
/// standard deviation is undefined and reported as 0.
pub fn aggregate(replicates: &[RunSummary], truth: f64) -> Result<AggregateSummary> {
    let p: Vec<f64> = replicates.iter().map(|r| r.p_hat).collect();
    let mut s = aggregate_values(&p, truth)?;
    s.jump_mean = replicates.iter().map(|r| r.jumps as f64).sum::<f64>() / p.len() as f64;
    s.miss_count = replicates.iter().filter(|r| r.miss).count();
    Ok(s)
}

/// [`aggregate`] over bare estimates (jump and miss columns left at 0).
pub fn aggregate_values(p: &[f64], truth: f64) -> Result<AggregateSummary> {
    let n = p.len();
    if n == 0 {
        return Err(Error::UndefinedEstimate("no replicates".into()));
    }
    let nf = n as f64;
    let mean = p.iter().sum::<f64>() / nf;
    let std = if n > 1 {
        (p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt()
    } else {
        log::warn!("single replicate: standard deviation undefined, reporting 0");
        0.0
    };
    let mse = p.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / nf;
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(AggregateSummary {
        n_runs: n,
        mean,
        std,
        q05: nearest_rank(&sorted, 0.05),
        q95: nearest_rank(&sorted, 0.95),
        mse,
        jump_mean: 0.0,
        miss_count: 0,
    })
}

/// MSE implied by a printed mean and sample std over `n` runs.
pub fn mse_from_moments(mean: f64, std: f64, n: usize, truth: f64) -> f64 {
    let nf = n as f64;
    (mean - truth).powi(2) + (nf - 1.0) / nf * std * std
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trace(states: &[[f64; 2]]) -> Trace {
        let v: Vec<Vec<f64>> = states.iter().map(|s| s.to_vec()).collect();
        Trace::from_states(&v, &vec![0.0; v.len()])
    }

    fn summary(p: f64) -> RunSummary {
        RunSummary {
            p_hat: p,
            jumps: 0,
            miss: false,
            local_rates: vec![],
            ee_rates: vec![],
            exchange_rates: vec![],
        }
    }

    #[test]
    fn visit_probability_examples() {
        assert_eq!(visit_probability(&trace(&[[0.0, 0.0]; 4]), 0.05).unwrap(), 1.0);
        let alt = trace(&[[0.0, 0.0], [5.0, 5.0], [0.0, 0.0], [5.0, 5.0]]);
        assert_eq!(visit_probability(&alt, 0.05).unwrap(), 0.5);
        assert!(visit_probability(&Trace::with_capacity(2, 0), 0.05).is_err());
    }

    #[test]
    fn chain0_ring_examples() {
        let single = Ladder::single(0.0);
        let t = Trace::from_states(&[vec![0.0], vec![1.0], vec![0.0], vec![1.0]], &[0.0, 1.0, 0.0, 1.0]);
        let hit = |x: &[f64]| x[0] == 0.0;
        assert_eq!(chain0_ring_estimator(&t, &single, hit, &[2.0]).unwrap(), 1.0);
        assert_eq!(chain0_ring_estimator(&t, &single, hit, &[1.0]).unwrap(), 0.5);
        let ladder = Ladder::new(vec![0.0, 0.5], vec![1.0, 2.0]).unwrap();
        assert_eq!(chain0_ring_estimator(&t, &ladder, |_| false, &[3.0, 7.0]).unwrap(), 0.0);
        assert!(chain0_ring_estimator(&t, &ladder, hit, &[1.0]).is_err());
    }

    #[test]
    fn jump_counting() {
        let modes = vec![
            Mode {
                center: vec![0.0, 0.0],
                radius: 0.05,
            },
            Mode {
                center: vec![5.0, 5.0],
                radius: 3.0,
            },
        ];
        let a = [0.0, 0.0];
        let b = [5.0, 5.0];
        let gap = [20.0, 20.0];
        assert_eq!(count_mode_jumps(&trace(&[a, a, b, b, a]), &modes), 2);
        assert_eq!(count_mode_jumps(&trace(&[a, gap, gap, b]), &modes), 1);
        let never = trace(&[gap, gap]);
        assert_eq!(count_mode_jumps(&never, &modes), 0);
        assert!(missed(&never, &[0.0, 0.0], 0.05));
        assert!(!missed(&trace(&[gap, a]), &[0.0, 0.0], 0.05));
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate(&[summary(0.5), summary(0.5), summary(0.5)], 0.5).unwrap();
        assert_eq!((s.std, s.mse), (0.0, 0.0));
        let s = aggregate(&[summary(0.4), summary(0.6)], 0.5).unwrap();
        assert_abs_diff_eq!(s.mean, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.std, 0.02f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.mse, 0.01, epsilon = 1e-15);
        assert_eq!((s.q05, s.q95), (0.4, 0.6));
        let one = aggregate(&[summary(0.3)], 0.5).unwrap();
        assert_eq!(one.std, 0.0);
        assert!(aggregate(&[], 0.5).is_err());
    }

    #[test]
    fn table_row_self_consistency() {
        assert_abs_diff_eq!(mse_from_moments(0.4567, 0.1973, 100, 0.5), 0.0404, epsilon = 5e-4);
    }

    #[test]
    fn nearest_rank_quantiles() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 0.05), 5.0);
        assert_eq!(nearest_rank(&v, 0.95), 95.0);
        assert_eq!(nearest_rank(&[3.0], 0.05), 3.0);
    }

    #[test]
    fn single_chain_weighted_is_sample_mean() {
        let ladder = Ladder::single(-1.0);
        let states: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 * 0.1]).collect();
        let samples: Vec<(usize, &[f64], f64)> = states.iter().map(|s| (0usize, s.as_slice(), s[0] * s[0])).collect();
        let est = ee_ring_weighted_estimator(samples.iter().copied(), &ladder, |x| x[0]).unwrap();
        let mean = states.iter().map(|s| s[0]).sum::<f64>() / 50.0;
        assert_abs_diff_eq!(est, mean, epsilon = 1e-12);
    }

    #[test]
    fn weighted_requires_chain_zero() {
        let ladder = Ladder::new(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        let x = [0.0];
        let r = ee_ring_weighted_estimator([(1usize, &x[..], 2.0)], &ladder, |_| 1.0);
        assert!(matches!(r, Err(Error::UndefinedEstimate(_))));
    }

    #[test]
    fn weighted_matches_enumeration_on_a_grid() {
        // i.i.d. draws from each chain's exact law on a 12-state grid.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let energies: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..6.0)).collect();
        let g_vals: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ladder = Ladder::new(vec![0.0, 2.0, 4.0], vec![1.0, 2.5, 6.0]).unwrap();
        let law = |i: usize| -> Vec<f64> {
            let w: Vec<f64> = energies.iter().map(|&e| ladder.log_density(e, i).exp()).collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|v| v / z).collect()
        };
        let truth: f64 = law(0).iter().zip(&g_vals).map(|(p, g)| p * g).sum();
        let n = 4000;
        let mut estimates = Vec::new();
        for _ in 0..40 {
            let mut samples: Vec<(usize, Vec<f64>, f64)> = Vec::new();
            for i in 0..3 {
                let p = law(i);
                for _ in 0..n {
                    let mut u: f64 = rng.random();
                    let mut s = 11;
                    for (k, pk) in p.iter().enumerate() {
                        if u < *pk {
                            s = k;
                            break;
                        }
                        u -= pk;
                    }
                    samples.push((i, vec![s as f64], energies[s]));
                }
            }
            let est =
                ee_ring_weighted_estimator(samples.iter().map(|(i, x, e)| (*i, x.as_slice(), *e)), &ladder, |x| {
                    g_vals[x[0] as usize]
                })
                .unwrap();
            estimates.push(est);
        }
        let m = estimates.iter().sum::<f64>() / 40.0;
        let sd = (estimates.iter().map(|e| (e - m).powi(2)).sum::<f64>() / 39.0).sqrt();
        let se = sd / 40f64.sqrt();
        assert!((m - truth).abs() < 3.0 * se + 1e-12, "mean {m} truth {truth} se {se}");
        // Each single estimate is also close.
        assert!((estimates[0] - truth).abs() < 4.0 * sd);
    }

    proptest! {
        #[test]
        fn chain0_unit_weights_equal_visit_probability(
            pts in prop::collection::vec((-0.1f64..0.1, -0.1f64..0.1, -7.0f64..40.0), 1..200)
        ) {
            let states: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.0, p.1]).collect();
            let energies: Vec<f64> = pts.iter().map(|p| p.2).collect();
            let t = Trace::from_states(&states, &energies);
            let ladder = Ladder::new(vec![-7.0, 3.13, 8.3, 26.8], vec![1.0, 3.1, 9.6, 30.0]).unwrap();
            let c0 = chain0_ring_estimator(&t, &ladder, |x| norm_sq(x) < 0.05 * 0.05, &[1.0; 4]).unwrap();
            prop_assert_eq!(c0, visit_probability(&t, 0.05).unwrap());
        }

        #[test]
        fn aggregate_mse_decomposition(
            p in prop::collection::vec(0.0f64..1.0, 2..200),
            truth in 0.0f64..1.0,
        ) {
            let s = aggregate_values(&p, truth).unwrap();
            let n = p.len() as f64;
            let rhs = (s.mean - truth).powi(2) + (n - 1.0) / n * s.std * s.std;
            prop_assert!((s.mse - rhs).abs() < 1e-12);
            prop_assert!(s.q05 <= s.q95 && s.std >= 0.0);
        }

        #[test]
        fn weighted_estimator_ignores_energy_offset(c in -50.0f64..50.0, seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let levels = [0.0, 1.5, 3.0];
            let temps = vec![1.0, 2.0, 5.0];
            let samples: Vec<(usize, Vec<f64>, f64)> = (0..300)
                .map(|s| {
                    let x: f64 = rng.random_range(-2.0..2.0);
                    (s % 3, vec![x], x * x + rng.random_range(0.0..2.0))
                })
                .collect();
            let base = Ladder::new(levels.to_vec(), temps.clone()).unwrap();
            let shifted = Ladder::new(levels.iter().map(|h| h + c).collect(), temps).unwrap();
            let g = |x: &[f64]| x[0].sin();
            let a = ee_ring_weighted_estimator(samples.iter().map(|(i, x, e)| (*i, x.as_slice(), *e)), &base, g).unwrap();
            let b = ee_ring_weighted_estimator(samples.iter().map(|(i, x, e)| (*i, x.as_slice(), *e + c)), &shifted, g).unwrap();
            prop_assert!((a - b).abs() < 1e-8, "{} vs {}", a, b);
        }
    }
}
