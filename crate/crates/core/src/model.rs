//! Scenario parameters, transmission strategies and penalty exponents.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// System parameters shared by every device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Number of devices U.
    pub num_devices: usize,
    /// Battery capacity E in energy units.
    pub battery_capacity: usize,
    pub q01: f64,
    pub q10: f64,
    /// Harvesting probability per slot while the process is in state 0.
    pub gamma0: f64,
    /// Harvesting probability per slot while the process is in state 1.
    pub gamma1: f64,
    /// Real channel uses per slot.
    pub slot_channel_uses: usize,
    /// Bits per channel use.
    pub rate_bits: f64,
    /// Noise variance, linear scale.
    pub noise_variance: f64,
}

impl Scenario {
    /// Transition probability of the monitored process from `from` to `to`.
    pub fn q(&self, from: usize, to: usize) -> f64 {
        match (from, to) {
            (0, 0) => 1.0 - self.q01,
            (0, 1) => self.q01,
            (1, 0) => self.q10,
            (1, 1) => 1.0 - self.q10,
            _ => panic!("process state out of range: ({from}, {to})"),
        }
    }

    pub fn gamma(&self, x: usize) -> f64 {
        if x == 0 {
            self.gamma0
        } else {
            self.gamma1
        }
    }

    /// Stationary law of the two-state process.
    pub fn process_stationary(&self) -> [f64; 2] {
        let s = self.q01 + self.q10;
        [self.q10 / s, self.q01 / s]
    }

    /// Average probability that the process changes state in a slot.
    pub fn mean_change_probability(&self) -> f64 {
        mean_change_probability(self.q01, self.q10)
    }

    /// Number of process-battery categories, 2(E+1).
    pub fn num_categories(&self) -> usize {
        2 * (self.battery_capacity + 1)
    }

    /// Scenario with `q01 = ratio * q10`, scaled so that `U * qbar = total_rate`.
    pub fn with_change_rate(&self, total_rate: f64, ratio: f64) -> Scenario {
        let qbar = total_rate / self.num_devices as f64;
        let q10 = qbar * (1.0 + ratio) / (2.0 * ratio);
        Scenario {
            q01: ratio * q10,
            q10,
            ..self.clone()
        }
    }

    /// Symmetric-process setting used for the AoII study: U=1000, E=8, N=100,
    /// R=0.8, noise -20 dB, harvesting 0.005 in both states.
    pub fn symmetric_reference(total_rate: f64) -> Scenario {
        Scenario {
            num_devices: 1000,
            battery_capacity: 8,
            q01: 0.0,
            q10: 0.0,
            gamma0: 0.005,
            gamma1: 0.005,
            slot_channel_uses: 100,
            rate_bits: 0.8,
            noise_variance: db_to_linear(-20.0),
        }
        .with_change_rate(total_rate, 1.0)
    }

    /// Asymmetric setting with a critical state 1: `q01/q10 = 0.01`,
    /// harvesting 0.005 in state 0 and 0.05 in state 1.
    pub fn asymmetric_reference(total_rate: f64) -> Scenario {
        Scenario {
            gamma1: 0.05,
            ..Scenario::symmetric_reference(1.0)
        }
        .with_change_rate(total_rate, 0.01)
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.num_devices == 0 {
            out.push(Violation::new("num_devices", "must be at least 1"));
        }
        if self.battery_capacity == 0 {
            out.push(Violation::new("battery_capacity", "must be at least 1"));
        }
        for (name, v) in [
            ("q01", self.q01),
            ("q10", self.q10),
            ("gamma0", self.gamma0),
            ("gamma1", self.gamma1),
        ] {
            if !(0.0..=1.0).contains(&v) {
                out.push(Violation::new(name, format!("probability {v} not in [0, 1]")));
            }
        }
        if self.q01 <= 0.0 || self.q10 <= 0.0 {
            let field = if self.q01 <= 0.0 { "q01" } else { "q10" };
            out.push(Violation::new(field, "process must be irreducible (q01 > 0 and q10 > 0)"));
        }
        if self.gamma0 <= 0.0 || self.gamma1 <= 0.0 {
            let field = if self.gamma0 <= 0.0 { "gamma0" } else { "gamma1" };
            out.push(Violation::new(field, "energy harvesting rate must be positive"));
        }
        if self.slot_channel_uses == 0 {
            out.push(Violation::new("slot_channel_uses", "must be at least 1"));
        }
        if !(self.rate_bits > 0.0 && self.rate_bits.is_finite()) {
            out.push(Violation::new("rate_bits", "must be a positive real"));
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            out.push(Violation::new("noise_variance", "must be a positive real"));
        }
        out
    }
}

/// `2 q01 q10 / (q01 + q10)`.
pub fn mean_change_probability(q01: f64, q10: f64) -> f64 {
    2.0 * q01 * q10 / (q01 + q10)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Strategy class, i.e. the tying rule on the transmission probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyClass {
    /// Transmit only when the process changes state.
    Reactive,
    /// Same probability for every state transition.
    Random,
    /// Free probability per transition and battery level.
    Hybrid,
}

impl StrategyClass {
    pub const ALL: [StrategyClass; 3] = [Self::Reactive, Self::Random, Self::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            Self::Reactive => "reactive",
            Self::Random => "random",
            Self::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for StrategyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reactive" => Ok(Self::Reactive),
            "random" => Ok(Self::Random),
            "hybrid" => Ok(Self::Hybrid),
            other => Err(Error::Validation(vec![Violation::new(
                "class",
                format!("unknown strategy class {other:?}"),
            )])),
        }
    }
}

/// Row index of transition `i -> j` in [`Strategy::pi`]: 00, 01, 10, 11.
pub const fn transition_index(i: usize, j: usize) -> usize {
    2 * i + j
}

pub const TRANSITION_LABELS: [&str; 4] = ["00", "01", "10", "11"];

/// Transmission probabilities `pi[transition][battery]`, battery in `0..=E`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Strategy {
    pub pi: Vec<Vec<f64>>,
    pub class: StrategyClass,
}

impl Strategy {
    /// Strategy that never transmits.
    pub fn silent(class: StrategyClass, battery_capacity: usize) -> Self {
        Self {
            pi: vec![vec![0.0; battery_capacity + 1]; 4],
            class,
        }
    }

    /// Every free parameter of `class` set to `value`.
    pub fn constant(class: StrategyClass, battery_capacity: usize, value: f64) -> Self {
        let map = ParamMap::new(class, battery_capacity);
        map.strategy(&vec![value; map.len()])
    }

    /// Probability of transmitting after the process moved `i -> j` with battery `b`.
    #[inline]
    pub fn prob(&self, i: usize, j: usize, b: usize) -> f64 {
        self.pi[transition_index(i, j)][b]
    }

    pub fn battery_capacity(&self) -> usize {
        self.pi.first().map_or(0, |r| r.len().saturating_sub(1))
    }

    pub fn validate(&self, battery_capacity: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.pi.len() != 4 {
            out.push(Violation::new(
                "pi",
                format!("expected 4 transition rows (00, 01, 10, 11), got {}", self.pi.len()),
            ));
            return out;
        }
        for (t, row) in self.pi.iter().enumerate() {
            let label = TRANSITION_LABELS[t];
            if row.len() != battery_capacity + 1 {
                out.push(Violation::new(
                    format!("pi[{label}]"),
                    format!("expected {} battery levels, got {}", battery_capacity + 1, row.len()),
                ));
                continue;
            }
            for (b, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    out.push(Violation::new(
                        format!("pi[{label}][{b}]"),
                        format!("probability {p} not in [0, 1]"),
                    ));
                }
            }
            if row[0] != 0.0 {
                out.push(Violation::new(
                    format!("pi[{label}][0]"),
                    "battery-0 transmission must be 0",
                ));
            }
        }
        if !out.is_empty() {
            return out;
        }
        match self.class {
            StrategyClass::Reactive => {
                for t in [0, 3] {
                    if self.pi[t].iter().any(|&p| p != 0.0) {
                        out.push(Violation::new(
                            format!("pi[{}]", TRANSITION_LABELS[t]),
                            "reactive strategy must not transmit without a state change",
                        ));
                    }
                }
            }
            StrategyClass::Random => {
                for t in 1..4 {
                    if self.pi[t] != self.pi[0] {
                        out.push(Violation::new(
                            format!("pi[{}]", TRANSITION_LABELS[t]),
                            "random strategy must use the same probabilities for every transition",
                        ));
                    }
                }
            }
            StrategyClass::Hybrid => {}
        }
        out
    }
}

/// Power-penalty exponents: `f_x(j) = j^alpha_x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySpec {
    pub alpha0: u32,
    pub alpha1: u32,
}

impl PenaltySpec {
    pub const AOII: PenaltySpec = PenaltySpec { alpha0: 1, alpha1: 1 };

    pub fn new(alpha0: u32, alpha1: u32) -> Self {
        Self { alpha0, alpha1 }
    }

    pub fn alpha(&self, x: usize) -> u32 {
        if x == 0 {
            self.alpha0
        } else {
            self.alpha1
        }
    }
}

/// Checks every invariant of both values and reports all violations at once.
pub fn validate(scenario: &Scenario, strategy: &Strategy) -> Result<()> {
    let mut v = scenario.validate();
    v.extend(strategy.validate(scenario.battery_capacity));
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(v))
    }
}

/// Tying of free optimizer parameters to cells of the strategy matrix.
///
/// Each free parameter owns a list of `(transition, battery)` cells that it
/// sets simultaneously. Battery level 0 is never free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamMap {
    class: StrategyClass,
    battery_capacity: usize,
    cells: Vec<Vec<(usize, usize)>>,
}

impl ParamMap {
    pub fn new(class: StrategyClass, battery_capacity: usize) -> Self {
        let e = battery_capacity;
        let cells = match class {
            StrategyClass::Reactive => [1, 2]
                .iter()
                .flat_map(|&t| (1..=e).map(move |b| vec![(t, b)]))
                .collect(),
            StrategyClass::Random => (1..=e).map(|b| (0..4).map(|t| (t, b)).collect()).collect(),
            StrategyClass::Hybrid => (0..4)
                .flat_map(|t| (1..=e).map(move |b| vec![(t, b)]))
                .collect(),
        };
        Self {
            class,
            battery_capacity,
            cells,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn class(&self) -> StrategyClass {
        self.class
    }

    pub fn cells(&self, param: usize) -> &[(usize, usize)] {
        &self.cells[param]
    }

    /// Builds the strategy whose free parameters equal `values`.
    pub fn strategy(&self, values: &[f64]) -> Strategy {
        assert_eq!(values.len(), self.len(), "free parameter count mismatch");
        let mut s = Strategy::silent(self.class, self.battery_capacity);
        for (cells, &v) in self.cells.iter().zip(values) {
            for &(t, b) in cells {
                s.pi[t][b] = v;
            }
        }
        s
    }

    /// Reads the free parameters back out of a strategy of the same class.
    pub fn values(&self, strategy: &Strategy) -> Vec<f64> {
        self.cells
            .iter()
            .map(|cells| {
                let (t, b) = cells[0];
                strategy.pi[t][b]
            })
            .collect()
    }
}

/// Number of free parameters of a strategy class.
pub fn strategy_free_parameters(class: StrategyClass, battery_capacity: usize) -> ParamMap {
    ParamMap::new(class, battery_capacity)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn change_probability() {
        assert!((mean_change_probability(0.001, 0.001) - 0.001).abs() < 1e-15);
        assert!((mean_change_probability(0.2, 0.3) - 0.24).abs() < 1e-15);
    }

    #[test]
    fn critical_sojourn_at_quarter_rate() {
        let s = Scenario::asymmetric_reference(0.25);
        assert!((s.q01 / s.q10 - 0.01).abs() < 1e-12);
        assert!((1000.0 * s.mean_change_probability() - 0.25).abs() < 1e-12);
        let sojourn = 1.0 / s.q10;
        assert!((sojourn - 79.21).abs() < 0.01, "{sojourn}");
    }

    #[test]
    fn free_parameter_counts() {
        assert_eq!(strategy_free_parameters(StrategyClass::Reactive, 8).len(), 16);
        assert_eq!(strategy_free_parameters(StrategyClass::Random, 8).len(), 8);
        assert_eq!(strategy_free_parameters(StrategyClass::Hybrid, 1).len(), 4);
    }

    #[test]
    fn reference_scenario_is_valid() {
        let s = Scenario::symmetric_reference(1.0);
        let pi = Strategy::constant(StrategyClass::Hybrid, 8, 0.3);
        assert!(validate(&s, &pi).is_ok());
        assert!((s.noise_variance - 0.01).abs() < 1e-15);
    }

    #[test]
    fn battery_zero_transmission_rejected() {
        let s = Scenario::symmetric_reference(1.0);
        let mut pi = Strategy::silent(StrategyClass::Hybrid, 8);
        pi.pi[1][0] = 0.5;
        let Err(Error::Validation(v)) = validate(&s, &pi) else {
            panic!("expected validation failure");
        };
        assert!(v.iter().any(|x| x.message.contains("battery-0 transmission must be 0")));
    }

    #[test]
    fn reducible_process_rejected() {
        let mut s = Scenario::symmetric_reference(1.0);
        s.q01 = 0.0;
        let v = s.validate();
        assert!(v.iter().any(|x| x.field == "q01" && x.message.contains("irreducible")));
    }

    #[test]
    fn all_violations_reported() {
        let mut s = Scenario::symmetric_reference(1.0);
        s.gamma0 = 0.0;
        s.q10 = 1.5;
        s.rate_bits = -1.0;
        let v = s.validate();
        assert!(v.len() >= 3, "{v:?}");
    }

    #[test]
    fn class_constraints() {
        let mut r = Strategy::constant(StrategyClass::Reactive, 3, 0.4);
        assert!(r.validate(3).is_empty());
        assert_eq!(r.pi[0], vec![0.0; 4]);
        r.pi[3][2] = 0.1;
        assert!(!r.validate(3).is_empty());

        let mut rnd = Strategy::constant(StrategyClass::Random, 3, 0.4);
        assert!(rnd.validate(3).is_empty());
        rnd.pi[2][1] = 0.2;
        assert!(!rnd.validate(3).is_empty());
    }

    #[test]
    fn param_map_roundtrip() {
        let map = ParamMap::new(StrategyClass::Hybrid, 2);
        let vals: Vec<f64> = (0..map.len()).map(|i| i as f64 / 10.0).collect();
        let s = map.strategy(&vals);
        assert_eq!(map.values(&s), vals);
        assert_eq!(s.prob(1, 0, 1), 0.4);
    }

    #[test]
    fn non_integer_exponent_rejected() {
        let r: std::result::Result<PenaltySpec, _> =
            serde_json::from_str(r#"{"alpha0": 1.5, "alpha1": 2}"#);
        assert!(r.is_err());
    }
}
