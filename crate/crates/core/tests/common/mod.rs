//! Helpers shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use aoii_aloha::markov::PhaseType;
use aoii_aloha::model::{Scenario, Strategy, StrategyClass};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Small scenario for exact-chain oracles.
pub fn tiny_scenario(num_devices: usize) -> Scenario {
    Scenario {
        num_devices,
        battery_capacity: 1,
        q01: 0.1,
        q10: 0.2,
        gamma0: 0.3,
        gamma1: 0.5,
        slot_channel_uses: 100,
        rate_bits: 0.8,
        noise_variance: 0.01,
    }
}

/// Hybrid strategy with a different probability per transition and level.
pub fn varied_strategy(battery_capacity: usize) -> Strategy {
    let mut s = Strategy::silent(StrategyClass::Hybrid, battery_capacity);
    for t in 0..4 {
        for b in 1..=battery_capacity {
            s.pi[t][b] = 0.15 + 0.1 * t as f64 + 0.05 * b as f64;
        }
    }
    s
}

/// Random substochastic phase-type law with `n` phases, mean exit mass at
/// least `min_exit` per row.
pub fn random_phase_type(rng: &mut ChaCha8Rng, n: usize, min_exit: f64) -> PhaseType {
    let mut tau = DVector::from_fn(n, |_, _| rng.random::<f64>());
    tau /= tau.sum();
    let mut t = DMatrix::zeros(n, n);
    let mut a = DVector::zeros(n);
    for r in 0..n {
        let weights: Vec<f64> = (0..=n).map(|_| rng.random::<f64>()).collect();
        let total: f64 = weights.iter().sum();
        let exit = min_exit + (1.0 - min_exit) * weights[n] / total;
        let scale = (1.0 - exit) / (total - weights[n]);
        for c in 0..n {
            t[(r, c)] = weights[c] * scale;
        }
        a[r] = 1.0 - t.row(r).sum();
    }
    PhaseType::new(tau, t, a).expect("valid phase-type")
}

/// Raw moments of orders `1..=3` by summing the PMF until the remaining
/// survival mass drops below `tail`.
pub fn pmf_moments(ph: &PhaseType, tail: f64) -> [f64; 3] {
    let mut row = ph.tau().transpose();
    let mut m = [0.0; 3];
    let mut w = 1.0_f64;
    while row.sum() > tail {
        let p = (&row * ph.exit())[(0, 0)];
        m[0] += w * p;
        m[1] += w * w * p;
        m[2] += w * w * w * p;
        row = &row * ph.transient();
        w += 1.0;
    }
    m
}

/// Mean and standard error of the mean over replications.
pub fn mean_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let m = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Per-replication occupancy frequencies of `(x, x_hat, b, l)` for device 0,
/// laid out as `estimate_state_index * |L| + profile index`.
pub fn simulated_joint_occupancy(
    scenario: &Scenario,
    strategy: &Strategy,
    model: &dyn aoii_aloha::channel::DecodingModel,
    profiles: &aoii_aloha::device_chain::ProfileChain,
    reps: u64,
    slots: u64,
    seed: u64,
) -> Vec<Vec<f64>> {
    use aoii_aloha::device_chain::estimate_state_index;
    use aoii_aloha::model::PenaltySpec;
    use aoii_aloha::simulator::{replication_seed, run, SimConfig};
    use rayon::prelude::*;
    let e = scenario.battery_capacity;
    let nl = profiles.len();
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let cfg = SimConfig {
                warmup_slots: 1000,
                joint_occupancy: true,
                tracked: Some(vec![0]),
                ..SimConfig::new(slots, replication_seed(seed, r))
            };
            let stats = run(scenario, strategy, model, &PenaltySpec::AOII, &cfg).expect("simulation");
            let mut freq = vec![0.0; 4 * (e + 1) * nl];
            for j in stats.joint_occupancy.expect("joint occupancy requested") {
                let l = profiles.index[&j.profile];
                freq[estimate_state_index(j.x, j.x_hat, j.b, e) * nl + l] += j.count as f64 / slots as f64;
            }
            freq
        })
        .collect()
}

/// Sums per-replication frequencies into coarser cells given by `cell`.
pub fn aggregate(samples: &[Vec<f64>], cells: usize, cell: impl Fn(usize) -> usize) -> Vec<Vec<f64>> {
    samples
        .iter()
        .map(|f| {
            let mut out = vec![0.0; cells];
            for (i, v) in f.iter().enumerate() {
                out[cell(i)] += v;
            }
            out
        })
        .collect()
}

/// Replication z-scores of `expected` for cells with expected mass above
/// `min_mass`.
pub fn z_scores(samples: &[Vec<f64>], expected: &[f64], min_mass: f64) -> Vec<f64> {
    (0..expected.len())
        .filter(|&i| expected[i] > min_mass)
        .map(|i| {
            let col: Vec<f64> = samples.iter().map(|s| s[i]).collect();
            let (m, se) = mean_se(&col);
            (m - expected[i]) / se.max(1e-15)
        })
        .collect()
}

/// Whether `sum z^2` is below the 0.999 quantile of a chi-square law with one
/// degree of freedom per cell, inflated for the t-distributed replication
/// z-scores.
pub fn chi_square_ok(z: &[f64], reps: usize) -> (bool, f64, f64) {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let stat: f64 = z.iter().map(|v| v * v).sum();
    let nu = (reps - 1) as f64;
    let inflate = nu / (nu - 2.0);
    let limit = ChiSquared::new(z.len() as f64).unwrap().inverse_cdf(0.999) * inflate;
    (stat <= limit, stat, limit)
}

/// Random scenario with a random hybrid strategy.
pub fn random_case(rng: &mut ChaCha8Rng) -> (Scenario, Strategy) {
    let e = rng.random_range(1..=5);
    let s = Scenario {
        num_devices: rng.random_range(1..=500),
        battery_capacity: e,
        q01: rng.random_range(1e-4..0.3),
        q10: rng.random_range(1e-4..0.3),
        gamma0: rng.random_range(0.01..0.9),
        gamma1: rng.random_range(0.01..0.9),
        slot_channel_uses: 100,
        rate_bits: 0.8,
        noise_variance: 10f64.powf(rng.random_range(-3.0..-1.5)),
    };
    let mut pi = Strategy::silent(StrategyClass::Hybrid, e);
    for row in pi.pi.iter_mut() {
        for p in row.iter_mut().skip(1) {
            *p = rng.random_range(0.0..1.0);
        }
    }
    (s, pi)
}
