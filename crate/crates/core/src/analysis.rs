//! Closed-form analysis on the reduced `(x, x_hat, b)` chain, where the
//! profile of the other devices is redrawn independently every slot from
//! its stationary multinomial law.
//!
//! Wrong- and correct-estimate durations are phase-type absorption times of
//! the reduced chain restricted to the `x != x_hat` and `x == x_hat` states.
//! The average penalty follows from a renewal-reward argument over
//! alternating wrong/correct periods.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::{omega_bar_vector, DecodingModel};
use crate::device_chain::{estimate_state, estimate_state_index, estimate_transition, ProcessBatteryChain};
use crate::error::{Error, Result};
use crate::faulhaber::expected_power_sum;
use crate::markov::{absorption_split, fundamental_matrix, limiting_distribution, PhaseType, StochasticMatrix};
use crate::model::{PenaltySpec, Scenario, Strategy};

/// `(x, x_hat)` pairs in state-index order.
const PAIR_00: usize = 0;
const PAIR_01: usize = 1;
const PAIR_10: usize = 2;
const PAIR_11: usize = 3;

/// The `(x, x_hat, b)` chain with its stationary occupancy.
#[derive(Debug, Clone)]
pub struct ReducedChain {
    pub matrix: StochasticMatrix,
    /// Steady-state occupancy `p_(x, x_hat, b)`.
    pub p: Vec<f64>,
    /// Average decoding success per battery level, `omega_bar[0] = 0`.
    pub omega_bar: Vec<f64>,
    /// Stationary law of the process-battery chain.
    pub nu: Vec<f64>,
    battery_capacity: usize,
}

/// Initial law used when the chain has more than one closed class:
/// stationary process state, correct estimate, full battery.
pub fn canonical_initial(scenario: &Scenario) -> Vec<f64> {
    let e = scenario.battery_capacity;
    let px = scenario.process_stationary();
    let mut init = vec![0.0; 4 * (e + 1)];
    for x in 0..2 {
        init[estimate_state_index(x, x, e, e)] = px[x];
    }
    init
}

/// Builds the reduced chain: stationary process-battery law, averaged
/// decoding success, then the per-slot kernel of `(x, x_hat, b)`.
pub fn build_reduced_chain(
    scenario: &Scenario,
    strategy: &Strategy,
    model: &dyn DecodingModel,
) -> Result<ReducedChain> {
    let nu = ProcessBatteryChain::build(scenario, strategy)?.nu;
    let omega = omega_bar_vector(scenario, strategy, &nu, model)?;
    let mut chain = reduced_chain_with_omega(scenario, strategy, omega)?;
    chain.nu = nu;
    Ok(chain)
}

/// Reduced chain for a given decoding-success vector (indexed by battery).
pub fn reduced_chain_with_omega(
    scenario: &Scenario,
    strategy: &Strategy,
    omega_bar: Vec<f64>,
) -> Result<ReducedChain> {
    let e = scenario.battery_capacity;
    let n = 4 * (e + 1);
    let matrix = StochasticMatrix::from_fn(n, |from, to| {
        let from = estimate_state(from, e);
        estimate_transition(from, estimate_state(to, e), omega_bar[from.2], scenario, strategy)
    })?;
    let p = limiting_distribution(&matrix, &canonical_initial(scenario))?;
    Ok(ReducedChain {
        matrix,
        p,
        omega_bar,
        nu: Vec::new(),
        battery_capacity: e,
    })
}

impl ReducedChain {
    pub fn battery_capacity(&self) -> usize {
        self.battery_capacity
    }

    fn pair_states(&self, pair: usize) -> impl Iterator<Item = usize> {
        let w = self.battery_capacity + 1;
        pair * w..(pair + 1) * w
    }

    /// Probability per slot of entering `state` from outside `set`, weighted
    /// by the predecessor's occupancy.
    pub fn entry_flow(&self, state: usize, set: &[usize]) -> f64 {
        (0..self.matrix.dim())
            .filter(|s| !set.contains(s))
            .map(|s| self.p[s] * self.matrix.get(s, state))
            .sum()
    }

    /// Absorption-time law of the chain restricted to the states of `pairs`.
    fn period_phase_type(&self, pairs: [usize; 2]) -> Result<(PhaseType, Vec<usize>)> {
        let states: Vec<usize> = pairs.iter().flat_map(|&pr| self.pair_states(pr)).collect();
        let k = states.len();
        let flows: Vec<f64> = states.iter().map(|&s| self.entry_flow(s, &states)).collect();
        let total: f64 = flows.iter().sum();
        if total <= 0.0 {
            return Err(Error::Degenerate(format!(
                "no entry flow into estimate pairs {pairs:?}"
            )));
        }
        let tau = DVector::from_iterator(k, flows.iter().map(|f| f / total));
        let t = DMatrix::from_fn(k, k, |r, c| self.matrix.get(states[r], states[c]));
        let a = DVector::from_iterator(
            k,
            states.iter().map(|&s| {
                (0..self.matrix.dim())
                    .filter(|o| !states.contains(o))
                    .map(|o| self.matrix.get(s, o))
                    .sum::<f64>()
            }),
        );
        Ok((PhaseType::new(tau, t, a)?, states))
    }
}

/// Entry laws of wrong- and correct-estimate periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryDistribution {
    /// Over `(0,1,0..=E), (1,0,0..=E)`.
    pub tau_we: Vec<f64>,
    /// Over `(0,0,0..=E), (1,1,0..=E)`.
    pub tau_ce: Vec<f64>,
}

impl EntryDistribution {
    /// `P[X~ = x]`: probability that a wrong-estimate period has process state `x`.
    pub fn wrong_state_probability(&self, x: usize) -> f64 {
        let w = self.tau_we.len() / 2;
        self.tau_we[x * w..(x + 1) * w].iter().sum()
    }
}

/// Wrong-estimate duration law; phases ordered `(0,1,b)` then `(1,0,b)`.
pub fn wed_phasetype(chain: &ReducedChain) -> Result<PhaseType> {
    Ok(chain.period_phase_type([PAIR_01, PAIR_10])?.0)
}

/// Correct-estimate duration law; phases ordered `(0,0,b)` then `(1,1,b)`.
pub fn ced_phasetype(chain: &ReducedChain) -> Result<PhaseType> {
    Ok(chain.period_phase_type([PAIR_00, PAIR_11])?.0)
}

pub fn entry_distribution(wed: &PhaseType, ced: &PhaseType) -> EntryDistribution {
    EntryDistribution {
        tau_we: wed.tau().iter().copied().collect(),
        tau_ce: ced.tau().iter().copied().collect(),
    }
}

/// WED phases whose process state is `x`.
fn wed_phases(wed: &PhaseType, x: usize) -> Vec<usize> {
    let w = wed.phases() / 2;
    (x * w..(x + 1) * w).collect()
}

/// Conditional WED given the wrong-period process state `x`.
pub fn conditional_wed(wed: &PhaseType, x: usize) -> Result<PhaseType> {
    wed.restricted(&wed_phases(wed, x))
}

/// `Gamma = sum_x P[X~=x] E[sum_{j=1}^{W_x} j^alpha_x]` for integer exponents.
pub fn gamma_power(wed: &PhaseType, penalty: &PenaltySpec) -> Result<f64> {
    let mut gamma = 0.0;
    for x in 0..2 {
        let mass: f64 = wed_phases(wed, x).iter().map(|&s| wed.tau()[s]).sum();
        if mass <= 0.0 {
            continue;
        }
        let wx = conditional_wed(wed, x)?;
        gamma += mass * expected_power_sum(penalty.alpha(x), |m| wx.moment(m));
    }
    Ok(gamma)
}

/// `Gamma` for the linear penalty `f_x(j) = slope_x * j`.
pub fn gamma_linear(wed: &PhaseType, slopes: [f64; 2]) -> Result<f64> {
    if slopes.iter().any(|&s| s < 0.0 || !s.is_finite()) {
        return Err(Error::Validation(vec![crate::error::Violation::new(
            "slopes",
            "penalty slopes must be nonnegative",
        )]));
    }
    let fund = fundamental_matrix(wed.transient())?;
    let ones = DVector::from_element(wed.phases(), 1.0);
    let sq = &fund * (&fund * ones);
    let w = wed.phases() / 2;
    Ok((0..wed.phases())
        .map(|s| wed.tau()[s] * slopes[s / w] * sq[s])
        .sum())
}

/// Renewal-reward ratio `Gamma / (E[W] + E[Y])`.
pub fn average_penalty(gamma: f64, mean_wed: f64, mean_ced: f64) -> f64 {
    gamma / (mean_wed + mean_ced)
}

/// Average AoII: `Gamma = (E[W] + E[W^2]) / 2`.
pub fn average_aoii(wed: &PhaseType, mean_ced: f64) -> f64 {
    let m1 = wed.moment(1);
    let m2 = wed.moment(2);
    average_penalty(0.5 * (m1 + m2), m1, mean_ced)
}

/// Misdetection probability of a critical (state-1) period.
///
/// A period is missed when the `0 -> 1` change is not delivered in its own
/// slot and no update arrives before the process returns to 0.
pub fn misdetection_probability(chain: &ReducedChain) -> Result<f64> {
    Ok(misdetection_parts(chain)?.0)
}

/// `(P_ME, rho, kappa, absorption rows)`.
#[allow(clippy::type_complexity)]
fn misdetection_parts(chain: &ReducedChain) -> Result<(f64, Vec<f64>, Vec<f64>, DMatrix<f64>)> {
    let e = chain.battery_capacity;
    let w = e + 1;
    let idx = |x, xh, b| estimate_state_index(x, xh, b, e);
    let mass00: f64 = (0..w).map(|b| chain.p[idx(0, 0, b)]).sum();
    if mass00 <= 0.0 {
        return Err(Error::Degenerate(
            "no steady-state mass with process 0 correctly estimated".into(),
        ));
    }
    // rho_b = P[0 -> 1 unnotified, battery b | previous slot in (0,0,.), 0 -> 1].
    let mut rho = vec![0.0; w];
    let mut q01 = 0.0;
    for bp in 0..w {
        let from = idx(0, 0, bp);
        for b in 0..w {
            rho[b] += chain.p[from] * chain.matrix.get(from, idx(1, 0, b));
        }
        q01 += chain.p[from] * (0..w).map(|b| {
            chain.matrix.get(from, idx(1, 0, b)) + chain.matrix.get(from, idx(1, 1, b))
        }).sum::<f64>();
    }
    if q01 <= 0.0 {
        return Err(Error::Degenerate("process never leaves state 0".into()));
    }
    rho.iter_mut().for_each(|r| *r /= q01);

    let t = DMatrix::from_fn(w, w, |r, c| chain.matrix.get(idx(1, 0, r), idx(1, 0, c)));
    let a = DMatrix::from_fn(w, 2, |r, k| {
        let pair = if k == 0 { PAIR_00 } else { PAIR_11 };
        chain
            .pair_states(pair)
            .map(|s| chain.matrix.get(idx(1, 0, r), s))
            .sum()
    });
    let split = absorption_split(&t, &a)?;
    let kappa: Vec<f64> = (0..w).map(|r| split[(r, 0)]).collect();
    let pme = rho.iter().zip(&kappa).map(|(r, k)| r * k).sum::<f64>();
    Ok((pme.clamp(0.0, 1.0), rho, kappa, split))
}

/// Serializable copy of a phase-type law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTypeRecord {
    pub tau: Vec<f64>,
    pub transient: Vec<Vec<f64>>,
    pub exit: Vec<f64>,
}

impl From<&PhaseType> for PhaseTypeRecord {
    fn from(ph: &PhaseType) -> Self {
        let t = ph.transient();
        Self {
            tau: ph.tau().iter().copied().collect(),
            transient: (0..t.nrows()).map(|r| t.row(r).iter().copied().collect()).collect(),
            exit: ph.exit().iter().copied().collect(),
        }
    }
}

/// Every closed-form output for one scenario and strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub penalty: PenaltySpec,
    /// `E[W]`.
    pub mean_wed: f64,
    /// `E[W^2]`.
    pub second_moment_wed: f64,
    /// `E[W^m]` for `m = 1..=max(alpha)+1` (at least 2 orders).
    pub wed_moments: Vec<f64>,
    /// `E[Y]`.
    pub mean_ced: f64,
    /// `P[X~ = 0]`, `P[X~ = 1]`.
    pub wrong_state_probability: [f64; 2],
    pub gamma: f64,
    pub average_penalty: f64,
    pub average_aoii: f64,
    pub misdetection_probability: f64,
    pub omega_bar: Vec<f64>,
    pub entry: EntryDistribution,
    pub wed: PhaseTypeRecord,
    pub ced: PhaseTypeRecord,
}

/// Runs the full closed-form analysis.
pub fn analyze(
    scenario: &Scenario,
    strategy: &Strategy,
    penalty: &PenaltySpec,
    model: &dyn DecodingModel,
) -> Result<AnalysisReport> {
    crate::model::validate(scenario, strategy)?;
    let chain = build_reduced_chain(scenario, strategy, model)?;
    let wed = wed_phasetype(&chain)?;
    let ced = ced_phasetype(&chain)?;
    let entry = entry_distribution(&wed, &ced);
    let max_order = penalty.alpha0.max(penalty.alpha1).max(1) + 1;
    let wed_moments: Vec<f64> = (1..=max_order).map(|m| wed.moment(m)).collect();
    let mean_wed = wed_moments[0];
    let second = wed_moments[1];
    let mean_ced = ced.mean();
    let gamma = gamma_power(&wed, penalty)?;
    Ok(AnalysisReport {
        penalty: *penalty,
        mean_wed,
        second_moment_wed: second,
        wed_moments,
        mean_ced,
        wrong_state_probability: [entry.wrong_state_probability(0), entry.wrong_state_probability(1)],
        gamma,
        average_penalty: average_penalty(gamma, mean_wed, mean_ced),
        average_aoii: average_penalty(0.5 * (mean_wed + second), mean_wed, mean_ced),
        misdetection_probability: misdetection_probability(&chain)?,
        omega_bar: chain.omega_bar.clone(),
        entry,
        wed: PhaseTypeRecord::from(&wed),
        ced: PhaseTypeRecord::from(&ced),
    })
}

/// Which average the optimizer minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Aoii,
    Penalty(PenaltySpec),
}

impl Metric {
    pub fn penalty(&self) -> PenaltySpec {
        match self {
            Metric::Aoii => PenaltySpec::AOII,
            Metric::Penalty(p) => *p,
        }
    }
}

/// Objective value of `metric` without assembling a full report.
pub fn evaluate_metric(
    scenario: &Scenario,
    strategy: &Strategy,
    metric: Metric,
    model: &dyn DecodingModel,
) -> Result<f64> {
    let chain = build_reduced_chain(scenario, strategy, model)?;
    let wed = wed_phasetype(&chain)?;
    let mean_ced = ced_phasetype(&chain)?.mean();
    match metric {
        Metric::Aoii => Ok(average_aoii(&wed, mean_ced)),
        Metric::Penalty(p) => Ok(average_penalty(gamma_power(&wed, &p)?, wed.mean(), mean_ced)),
    }
}
