//! Per-packet decoding success: single-user finite-blocklength error over a
//! real AWGN slot, collisions, and the profile-averaged success probability.

use std::f64::consts::{LN_2, SQRT_2};

use statrs::function::erf::erfc;

use crate::error::{Error, Result, Violation};
use crate::model::{Scenario, Strategy};

/// Single-user decoding failure probability of a packet sent with `energy`
/// units. Implementations must be stateless and non-increasing in `energy`.
pub trait DecodingModel: Send + Sync {
    fn error_probability(&self, energy: usize, scenario: &Scenario) -> Result<f64>;
}

/// Normal approximation with the `log2(N)/2` third-order term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NormalApproximation;

/// Gaussian tail `Q(x) = P[Z > x]`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Capacity of the real AWGN channel in bits per channel use.
pub fn awgn_capacity(snr: f64) -> f64 {
    0.5 * (1.0 + snr).log2()
}

/// Dispersion of the real AWGN channel in bits^2 per channel use.
pub fn awgn_dispersion(snr: f64) -> f64 {
    let log2e = 1.0 / LN_2;
    snr * (snr + 2.0) / (2.0 * (1.0 + snr).powi(2)) * log2e * log2e
}

impl DecodingModel for NormalApproximation {
    fn error_probability(&self, energy: usize, scenario: &Scenario) -> Result<f64> {
        epsilon_normal_approx(energy, scenario)
    }
}

/// Packet error probability for energy `b` spread over `N` channel uses,
/// i.e. SNR `b / (N sigma^2)`.
pub fn epsilon_normal_approx(energy: usize, scenario: &Scenario) -> Result<f64> {
    if energy == 0 {
        return Err(Error::EmptyBattery);
    }
    let n = scenario.slot_channel_uses as f64;
    let snr = energy as f64 / (n * scenario.noise_variance);
    let c = awgn_capacity(snr);
    let v = awgn_dispersion(snr);
    let arg = (n * c - n * scenario.rate_bits + 0.5 * n.log2()) / (n * v).sqrt();
    Ok(q_function(arg).clamp(0.0, 1.0))
}

/// Every singleton packet is decoded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IdealDecoding;

impl DecodingModel for IdealDecoding {
    fn error_probability(&self, energy: usize, _scenario: &Scenario) -> Result<f64> {
        if energy == 0 {
            return Err(Error::EmptyBattery);
        }
        Ok(0.0)
    }
}

/// Tabulated error probabilities, `table[b - 1]` for `b >= 1`; the last entry
/// is reused beyond the table.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDecoding(pub Vec<f64>);

impl DecodingModel for TabulatedDecoding {
    fn error_probability(&self, energy: usize, _scenario: &Scenario) -> Result<f64> {
        if energy == 0 {
            return Err(Error::EmptyBattery);
        }
        let idx = (energy - 1).min(self.0.len().saturating_sub(1));
        Ok(self.0.get(idx).copied().unwrap_or(0.0))
    }
}

/// Per-category transmit probability of another device in the next slot,
/// marginalized over its own process transition. Indexed `x * (E+1) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitProfile {
    probs: Vec<f64>,
}

impl TransmitProfile {
    pub fn new(scenario: &Scenario, strategy: &Strategy) -> Self {
        let e = scenario.battery_capacity;
        let probs = (0..2)
            .flat_map(|x| {
                (0..=e).map(move |b| {
                    (0..2)
                        .map(|j| scenario.q(x, j) * strategy.prob(x, j, b))
                        .sum::<f64>()
                })
            })
            .collect();
        Self { probs }
    }

    #[inline]
    pub fn get(&self, category: usize) -> f64 {
        self.probs[category]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}

/// Decoding success given the exact categories of the other `U - 1` devices.
pub fn omega_given_profile(
    energy: usize,
    profile: &[usize],
    scenario: &Scenario,
    strategy: &Strategy,
    model: &dyn DecodingModel,
) -> Result<f64> {
    let cats = scenario.num_categories();
    let others: usize = profile.iter().sum();
    if profile.len() != cats || others + 1 != scenario.num_devices {
        return Err(Error::Validation(vec![Violation::new(
            "profile",
            format!(
                "expected {cats} categories summing to {}, got {} summing to {others}",
                scenario.num_devices - 1,
                profile.len()
            ),
        )]));
    }
    let tp = TransmitProfile::new(scenario, strategy);
    let silent: f64 = profile
        .iter()
        .enumerate()
        .map(|(c, &n)| (1.0 - tp.get(c)).powi(n as i32))
        .product();
    Ok((1.0 - model.error_probability(energy, scenario)?) * silent)
}

/// Probability that a given other device stays silent, averaged over `nu`.
pub fn silence_probability(nu: &[f64], profile: &TransmitProfile) -> f64 {
    nu.iter()
        .enumerate()
        .map(|(c, &w)| w * (1.0 - profile.get(c)))
        .sum()
}

/// Decoding success averaged over the stationary multinomial profile:
/// `(1 - eps(b)) * (sum_c nu_c (1 - t_c))^(U-1)`.
pub fn omega_bar(
    energy: usize,
    scenario: &Scenario,
    strategy: &Strategy,
    nu: &[f64],
    model: &dyn DecodingModel,
) -> Result<f64> {
    let tp = TransmitProfile::new(scenario, strategy);
    let silent = silence_probability(nu, &tp);
    Ok((1.0 - model.error_probability(energy, scenario)?) * silent.powi(scenario.num_devices as i32 - 1))
}

/// `omega_bar` for every battery level `0..=E`, with level 0 set to 0.
pub fn omega_bar_vector(
    scenario: &Scenario,
    strategy: &Strategy,
    nu: &[f64],
    model: &dyn DecodingModel,
) -> Result<Vec<f64>> {
    let tp = TransmitProfile::new(scenario, strategy);
    let collision_free = silence_probability(nu, &tp).powi(scenario.num_devices as i32 - 1);
    let mut out = vec![0.0; scenario.battery_capacity + 1];
    for (b, o) in out.iter_mut().enumerate().skip(1) {
        *o = (1.0 - model.error_probability(b, scenario)?) * collision_free;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StrategyClass;

    fn reference() -> Scenario {
        Scenario::symmetric_reference(1.0)
    }

    #[test]
    fn empty_battery_is_an_error() {
        assert!(matches!(epsilon_normal_approx(0, &reference()), Err(Error::EmptyBattery)));
    }

    #[test]
    fn non_increasing_in_energy() {
        let s = reference();
        for b in 1..8 {
            let lo = epsilon_normal_approx(b, &s).unwrap();
            let hi = epsilon_normal_approx(b + 1, &s).unwrap();
            assert!(hi <= lo, "eps({}) = {hi} > eps({b}) = {lo}", b + 1);
        }
    }

    #[test]
    fn below_half_when_capacity_exceeds_rate() {
        let mut s = reference();
        for n in [100, 200, 1000] {
            s.slot_channel_uses = n;
            for b in 1..=8 {
                let snr = b as f64 / (n as f64 * s.noise_variance);
                if awgn_capacity(snr) > s.rate_bits {
                    assert!(epsilon_normal_approx(b, &s).unwrap() < 0.5);
                }
            }
        }
    }

    #[test]
    fn lone_transmitter() {
        let s = Scenario {
            num_devices: 3,
            battery_capacity: 2,
            ..reference()
        };
        let pi = Strategy::constant(StrategyClass::Hybrid, 2, 0.7);
        // Both other devices at battery 0 cannot transmit.
        let profile = [2, 0, 0, 0, 0, 0];
        let w = omega_given_profile(2, &profile, &s, &pi, &NormalApproximation).unwrap();
        let eps = epsilon_normal_approx(2, &s).unwrap();
        assert!((w - (1.0 - eps)).abs() < 1e-15);
    }

    #[test]
    fn two_devices_one_competitor() {
        let s = Scenario {
            num_devices: 2,
            battery_capacity: 1,
            ..reference()
        };
        // t_(0,1) = q00 * pi00 + q01 * pi01 = 0.3 when all pi equal 0.3.
        let pi = Strategy::constant(StrategyClass::Random, 1, 0.3);
        let w = omega_given_profile(1, &[0, 1, 0, 0], &s, &pi, &IdealDecoding).unwrap();
        assert!((w - 0.7).abs() < 1e-15);
        let wb = omega_bar(1, &s, &pi, &[0.0, 1.0, 0.0, 0.0], &IdealDecoding).unwrap();
        assert!((wb - 0.7).abs() < 1e-15);
    }

    #[test]
    fn profile_size_checked() {
        let s = Scenario {
            num_devices: 3,
            battery_capacity: 1,
            ..reference()
        };
        let pi = Strategy::silent(StrategyClass::Hybrid, 1);
        assert!(omega_given_profile(1, &[1, 0, 0, 0], &s, &pi, &IdealDecoding).is_err());
        assert!(omega_given_profile(1, &[1, 1, 0], &s, &pi, &IdealDecoding).is_err());
    }

    #[test]
    fn single_device_has_no_collisions() {
        let s = Scenario {
            num_devices: 1,
            ..reference()
        };
        let pi = Strategy::constant(StrategyClass::Hybrid, 8, 1.0);
        let nu = vec![1.0 / 18.0; 18];
        for b in 1..=8 {
            let w = omega_bar(b, &s, &pi, &nu, &NormalApproximation).unwrap();
            assert_eq!(w, 1.0 - epsilon_normal_approx(b, &s).unwrap());
        }
    }

    #[test]
    fn silent_network_gives_single_user_success() {
        let s = reference();
        let pi = Strategy::silent(StrategyClass::Hybrid, 8);
        let nu = vec![1.0 / 18.0; 18];
        let w = omega_bar_vector(&s, &pi, &nu, &NormalApproximation).unwrap();
        assert_eq!(w[0], 0.0);
        for b in 1..=8 {
            assert!((w[b] - (1.0 - epsilon_normal_approx(b, &s).unwrap())).abs() < 1e-12);
        }
    }
}
