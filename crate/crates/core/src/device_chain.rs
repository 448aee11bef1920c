//! Exact Markov models of one device and of the other `U - 1` devices.
//!
//! Process-battery categories `(x, b)` are indexed `x * (E+1) + b`. States of
//! the per-device estimate chain `(x, x_hat, b)` are indexed
//! `(2x + x_hat) * (E+1) + b`. The profile and full chains exist to validate
//! the reduced analysis at tiny scale and are guarded accordingly.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::channel::{omega_given_profile, DecodingModel};
use crate::error::{Error, Result};
use crate::markov::{stationary_distribution, StochasticMatrix};
use crate::model::{Scenario, Strategy};

/// Largest number of other devices accepted by the profile chain.
pub const MAX_OTHER_DEVICES: usize = 6;
/// Largest battery capacity accepted by the profile chain.
pub const MAX_PROFILE_BATTERY: usize = 2;
/// Largest dense full-chain dimension.
pub const MAX_FULL_CHAIN_STATES: usize = 2000;

#[inline]
pub fn category_index(x: usize, b: usize, battery_capacity: usize) -> usize {
    x * (battery_capacity + 1) + b
}

#[inline]
pub fn estimate_state_index(x: usize, x_hat: usize, b: usize, battery_capacity: usize) -> usize {
    (2 * x + x_hat) * (battery_capacity + 1) + b
}

/// Inverse of [`estimate_state_index`].
#[inline]
pub fn estimate_state(index: usize, battery_capacity: usize) -> (usize, usize, usize) {
    let pair = index / (battery_capacity + 1);
    (pair / 2, pair % 2, index % (battery_capacity + 1))
}

/// Battery after a transmission in a slot where the process is in `x`.
#[inline]
pub fn phi_trans(x: usize, b: usize, scenario: &Scenario) -> f64 {
    let g = scenario.gamma(x);
    match b {
        0 => 1.0 - g,
        1 => g,
        _ => 0.0,
    }
}

/// Battery move `b_prev -> b` without transmission; harvesting pauses at E.
#[inline]
pub fn phi_no_trans(x: usize, b_prev: usize, b: usize, scenario: &Scenario) -> f64 {
    let g = scenario.gamma(x);
    let full = b_prev == scenario.battery_capacity;
    if b == b_prev {
        if full {
            1.0
        } else {
            1.0 - g
        }
    } else if b == b_prev + 1 {
        g
    } else {
        0.0
    }
}

pub fn battery_kernels(x: usize, b_prev: usize, b: usize, transmitted: bool, scenario: &Scenario) -> f64 {
    if transmitted {
        phi_trans(x, b, scenario)
    } else {
        phi_no_trans(x, b_prev, b, scenario)
    }
}

/// `P[(x', b') -> (x, b)]` of the process-battery chain.
pub fn process_battery_transition(
    x_prev: usize,
    b_prev: usize,
    x: usize,
    b: usize,
    scenario: &Scenario,
    strategy: &Strategy,
) -> f64 {
    let pi = strategy.prob(x_prev, x, b_prev);
    scenario.q(x_prev, x)
        * (pi * phi_trans(x, b, scenario) + (1.0 - pi) * phi_no_trans(x, b_prev, b, scenario))
}

/// `P[(x', x_hat', b') -> (x, x_hat, b)]` given that an update sent with `b'`
/// units is decoded with probability `omega`.
///
/// An update carries the current state `x`; a failed or absent update leaves
/// the estimate unchanged.
#[allow(clippy::too_many_arguments)]
pub fn estimate_transition(
    (x_prev, xh_prev, b_prev): (usize, usize, usize),
    (x, xh, b): (usize, usize, usize),
    omega: f64,
    scenario: &Scenario,
    strategy: &Strategy,
) -> f64 {
    let q = scenario.q(x_prev, x);
    if q == 0.0 {
        return 0.0;
    }
    let pi = strategy.prob(x_prev, x, b_prev);
    let ft = phi_trans(x, b, scenario);
    let fnt = phi_no_trans(x, b_prev, b, scenario);
    let mut p = 0.0;
    if xh == x {
        p += pi * omega * ft;
    }
    if xh == xh_prev {
        p += pi * (1.0 - omega) * ft + (1.0 - pi) * fnt;
    }
    q * p
}

/// Process-battery chain of a single device and its stationary law.
#[derive(Debug, Clone)]
pub struct ProcessBatteryChain {
    pub matrix: StochasticMatrix,
    pub nu: Vec<f64>,
}

impl ProcessBatteryChain {
    pub fn build(scenario: &Scenario, strategy: &Strategy) -> Result<Self> {
        let matrix = process_battery_matrix(scenario, strategy)?;
        let nu = stationary_distribution(&matrix)?;
        Ok(Self { matrix, nu })
    }
}

pub fn process_battery_matrix(scenario: &Scenario, strategy: &Strategy) -> Result<StochasticMatrix> {
    let e = scenario.battery_capacity;
    let n = scenario.num_categories();
    StochasticMatrix::from_fn(n, |from, to| {
        let (xp, bp) = (from / (e + 1), from % (e + 1));
        let (x, b) = (to / (e + 1), to % (e + 1));
        process_battery_transition(xp, bp, x, b, scenario, strategy)
    })
}

fn check_profile_guard(scenario: &Scenario) -> Result<()> {
    let others = scenario.num_devices.saturating_sub(1);
    if others > MAX_OTHER_DEVICES || scenario.battery_capacity > MAX_PROFILE_BATTERY {
        return Err(Error::SizeGuard(format!(
            "profile chain supports at most {MAX_OTHER_DEVICES} other devices and battery \
             capacity {MAX_PROFILE_BATTERY}, got {others} and {}",
            scenario.battery_capacity
        )));
    }
    Ok(())
}

/// All vectors of `parts` nonnegative integers summing to `total`, in
/// lexicographically decreasing order of the first entries.
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(total: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=total).rev() {
            prefix.push(first);
            rec(total - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(total, parts, &mut Vec::with_capacity(parts), &mut out);
    out
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn multinomial_coefficient(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    (ln_factorial(n) - counts.iter().map(|&c| ln_factorial(c)).sum::<f64>())
        .exp()
        .round()
}

/// `Mul(n, K, p)` probability of `counts`.
pub fn multinomial_pmf(counts: &[usize], probs: &[f64]) -> f64 {
    let mut v = multinomial_coefficient(counts);
    for (&c, &p) in counts.iter().zip(probs) {
        if c > 0 {
            v *= p.powi(c as i32);
        }
    }
    v
}

/// `P[l' -> l]` by summing over every flow matrix with row sums `l'` and
/// column sums `l`.
pub fn profile_transition(
    from: &[usize],
    to: &[usize],
    scenario: &Scenario,
    strategy: &Strategy,
) -> Result<f64> {
    check_profile_guard(scenario)?;
    let k = scenario.num_categories();
    let others = scenario.num_devices - 1;
    if from.len() != k || to.len() != k || from.iter().sum::<usize>() != others || to.iter().sum::<usize>() != others
    {
        return Err(Error::Dimension(format!(
            "profiles must have {k} categories summing to {others}"
        )));
    }
    let kernel = process_battery_matrix(scenario, strategy)?;

    // Row j of the flow matrix is a composition of from[j] bounded by the
    // remaining column capacity.
    fn rec(
        j: usize,
        from: &[usize],
        remaining: &mut Vec<usize>,
        kernel: &StochasticMatrix,
        acc: f64,
        total: &mut f64,
    ) {
        let k = from.len();
        if j == k {
            if remaining.iter().all(|&r| r == 0) {
                *total += acc;
            }
            return;
        }
        for row in compositions(from[j], k) {
            if row.iter().zip(remaining.iter()).any(|(u, r)| u > r) {
                continue;
            }
            let mut w = acc * multinomial_coefficient(&row);
            for (dest, &u) in row.iter().enumerate() {
                if u > 0 {
                    w *= kernel.get(j, dest).powi(u as i32);
                }
            }
            if w == 0.0 {
                continue;
            }
            for (r, u) in remaining.iter_mut().zip(&row) {
                *r -= u;
            }
            rec(j + 1, from, remaining, kernel, w, total);
            for (r, u) in remaining.iter_mut().zip(&row) {
                *r += u;
            }
        }
    }

    let mut total = 0.0;
    rec(0, from, &mut to.to_vec(), &kernel, 1.0, &mut total);
    Ok(total)
}

/// Profile transition matrix when every device moves independently with the
/// (possibly sub-stochastic) per-category `kernel`, by forward expansion.
fn profile_matrix(
    profiles: &[Vec<usize>],
    index: &HashMap<Vec<usize>, usize>,
    kernel: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = profiles.len();
    let k = kernel.nrows();
    let mut m = DMatrix::zeros(n, n);
    for (row, from) in profiles.iter().enumerate() {
        let mut dist: HashMap<Vec<usize>, f64> = HashMap::from([(vec![0; k], 1.0)]);
        for (j, &count) in from.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let mut next: HashMap<Vec<usize>, f64> = HashMap::new();
            for flow in compositions(count, k) {
                let mut w = multinomial_coefficient(&flow);
                for (dest, &u) in flow.iter().enumerate() {
                    if u > 0 {
                        w *= kernel[(j, dest)].powi(u as i32);
                    }
                }
                if w == 0.0 {
                    continue;
                }
                for (partial, &pw) in &dist {
                    let mut key = partial.clone();
                    for (kk, &u) in key.iter_mut().zip(&flow) {
                        *kk += u;
                    }
                    *next.entry(key).or_insert(0.0) += pw * w;
                }
            }
            dist = next;
        }
        for (to, p) in dist {
            m[(row, index[&to])] += p;
        }
    }
    m
}

/// Per-category kernel restricted to slots without a transmission:
/// `q_(x'x) (1 - pi_b'^(x'x)) phi_no(b' -> b)`.
pub fn silent_kernel(scenario: &Scenario, strategy: &Strategy) -> DMatrix<f64> {
    let e = scenario.battery_capacity;
    let n = scenario.num_categories();
    DMatrix::from_fn(n, n, |from, to| {
        let (xp, bp) = (from / (e + 1), from % (e + 1));
        let (x, b) = (to / (e + 1), to % (e + 1));
        scenario.q(xp, x) * (1.0 - strategy.prob(xp, x, bp)) * phi_no_trans(x, bp, b, scenario)
    })
}

/// Markov chain of the category counts of the other `U - 1` devices.
#[derive(Debug, Clone)]
pub struct ProfileChain {
    pub profiles: Vec<Vec<usize>>,
    pub index: HashMap<Vec<usize>, usize>,
    pub matrix: StochasticMatrix,
}

impl ProfileChain {
    pub fn build(scenario: &Scenario, strategy: &Strategy) -> Result<Self> {
        check_profile_guard(scenario)?;
        let k = scenario.num_categories();
        let profiles = compositions(scenario.num_devices - 1, k);
        let index: HashMap<Vec<usize>, usize> =
            profiles.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
        let kernel = process_battery_matrix(scenario, strategy)?;
        let matrix = StochasticMatrix::new(profile_matrix(&profiles, &index, kernel.matrix()))?;
        Ok(Self {
            profiles,
            index,
            matrix,
        })
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }
}

/// Per-device chain `(x, x_hat, b, l)` with the product kernel
/// `P[l' -> l] * P[(x', x_hat', b') -> (x, x_hat, b) | l']`.
#[derive(Debug, Clone)]
pub struct FullChainG {
    pub profiles: ProfileChain,
    pub matrix: StochasticMatrix,
    battery_capacity: usize,
}

impl FullChainG {
    pub fn build(scenario: &Scenario, strategy: &Strategy, model: &dyn DecodingModel) -> Result<Self> {
        let profiles = ProfileChain::build(scenario, strategy)?;
        let e = scenario.battery_capacity;
        let nl = profiles.len();
        let nd = 4 * (e + 1);
        let n = nd * nl;
        if n > MAX_FULL_CHAIN_STATES {
            return Err(Error::SizeGuard(format!(
                "full chain would have {n} states, limit is {MAX_FULL_CHAIN_STATES}"
            )));
        }
        // omega[l'][b'] for b' >= 1.
        let mut omega = vec![vec![0.0; e + 1]; nl];
        for (li, prof) in profiles.profiles.iter().enumerate() {
            for b in 1..=e {
                omega[li][b] = omega_given_profile(b, prof, scenario, strategy, model)?;
            }
        }
        let mut m = DMatrix::zeros(n, n);
        for sp in 0..nd {
            let from = estimate_state(sp, e);
            for s in 0..nd {
                let to = estimate_state(s, e);
                for lp in 0..nl {
                    let dev = estimate_transition(from, to, omega[lp][from.2], scenario, strategy);
                    if dev == 0.0 {
                        continue;
                    }
                    for l in 0..nl {
                        let pl = profiles.matrix.get(lp, l);
                        if pl > 0.0 {
                            m[(sp * nl + lp, s * nl + l)] = dev * pl;
                        }
                    }
                }
            }
        }
        let matrix = StochasticMatrix::new(m)?;
        Ok(Self {
            profiles,
            matrix,
            battery_capacity: e,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// `(x, x_hat, b, profile index)` of a state.
    pub fn state(&self, index: usize) -> (usize, usize, usize, usize) {
        let nl = self.profiles.len();
        let (x, xh, b) = estimate_state(index / nl, self.battery_capacity);
        (x, xh, b, index % nl)
    }

    pub fn state_index(&self, x: usize, x_hat: usize, b: usize, profile: usize) -> usize {
        estimate_state_index(x, x_hat, b, self.battery_capacity) * self.profiles.len() + profile
    }
}

/// Exact per-device chain `(x, x_hat, b, l)`.
///
/// Unlike [`FullChainG`], the profile move is coupled to the decoding event:
/// a delivered update requires every other device to stay silent, which
/// also fixes their battery moves. Uses the same state layout as the full
/// chain and serves as the oracle for the slot simulator at tiny scale.
#[derive(Debug, Clone)]
pub struct ExactJointChain {
    pub profiles: ProfileChain,
    pub matrix: StochasticMatrix,
    battery_capacity: usize,
}

impl ExactJointChain {
    pub fn build(scenario: &Scenario, strategy: &Strategy, model: &dyn DecodingModel) -> Result<Self> {
        let profiles = ProfileChain::build(scenario, strategy)?;
        let e = scenario.battery_capacity;
        let nl = profiles.len();
        let nd = 4 * (e + 1);
        let n = nd * nl;
        if n > MAX_FULL_CHAIN_STATES {
            return Err(Error::SizeGuard(format!(
                "joint chain would have {n} states, limit is {MAX_FULL_CHAIN_STATES}"
            )));
        }
        let silent = profile_matrix(&profiles.profiles, &profiles.index, &silent_kernel(scenario, strategy));
        let mut success = vec![0.0; e + 1];
        for (b, s) in success.iter_mut().enumerate().skip(1) {
            *s = 1.0 - model.error_probability(b, scenario)?;
        }
        let mut m = DMatrix::zeros(n, n);
        for sp in 0..nd {
            let (xp, xhp, bp) = estimate_state(sp, e);
            for x in 0..2 {
                let q = scenario.q(xp, x);
                if q == 0.0 {
                    continue;
                }
                let pi = strategy.prob(xp, x, bp);
                for b in 0..=e {
                    let quiet = q * (1.0 - pi) * phi_no_trans(x, bp, b, scenario);
                    let sent = q * pi * phi_trans(x, b, scenario);
                    let keep = estimate_state_index(x, xhp, b, e);
                    let hit = estimate_state_index(x, x, b, e);
                    for lp in 0..nl {
                        let row = sp * nl + lp;
                        for l in 0..nl {
                            let pl = profiles.matrix.get(lp, l);
                            let delivered = success[bp] * silent[(lp, l)];
                            m[(row, keep * nl + l)] += quiet * pl + sent * (pl - delivered);
                            m[(row, hit * nl + l)] += sent * delivered;
                        }
                    }
                }
            }
        }
        let matrix = StochasticMatrix::new(m)?;
        Ok(Self {
            profiles,
            matrix,
            battery_capacity: e,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// `(x, x_hat, b, profile index)` of a state.
    pub fn state(&self, index: usize) -> (usize, usize, usize, usize) {
        let nl = self.profiles.len();
        let (x, xh, b) = estimate_state(index / nl, self.battery_capacity);
        (x, xh, b, index % nl)
    }

    pub fn state_index(&self, x: usize, x_hat: usize, b: usize, profile: usize) -> usize {
        estimate_state_index(x, x_hat, b, self.battery_capacity) * self.profiles.len() + profile
    }
}
