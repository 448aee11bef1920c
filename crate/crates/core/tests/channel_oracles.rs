mod common;

use aoii_aloha::channel::{
    epsilon_normal_approx, omega_bar, omega_given_profile, DecodingModel, IdealDecoding, NormalApproximation,
    TabulatedDecoding,
};
use aoii_aloha::device_chain::{category_index, ProcessBatteryChain};
use aoii_aloha::model::Scenario;
use aoii_aloha::Error;
use common::{rel_err, tiny_scenario, varied_strategy};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Error probabilities at N=100, R=0.8, noise -20 dB, evaluated in 40-digit
/// arithmetic.
const EPS_REFERENCE: [f64; 8] = [
    0.998_734_887_689_442_0,
    0.394_652_290_281_802_0,
    9.109_754_967_641_066e-3,
    4.011_818_827_924_258e-5,
    8.645_790_236_678_656e-8,
    1.413_954_665_131_670e-10,
    2.174_027_976_075_074e-13,
    3.507_296_169_529_094e-16,
];

#[test]
fn normal_approximation_matches_high_precision_values() {
    let s = Scenario::symmetric_reference(0.1);
    for (i, &want) in EPS_REFERENCE.iter().enumerate() {
        let got = epsilon_normal_approx(i + 1, &s).unwrap();
        let tol = if want > 1e-13 { 1e-9 } else { 1e-6 };
        assert!(rel_err(got, want) < tol, "b = {}: {got:e} vs {want:e}", i + 1);
    }
}

#[test]
fn decoding_error_is_monotone_and_rejects_empty_battery() {
    let s = Scenario::symmetric_reference(0.1);
    let eps: Vec<f64> = (1..=8).map(|b| NormalApproximation.error_probability(b, &s).unwrap()).collect();
    assert!(eps.windows(2).all(|w| w[1] <= w[0]));
    assert!(matches!(NormalApproximation.error_probability(0, &s), Err(Error::EmptyBattery)));
    assert!(matches!(IdealDecoding.error_probability(0, &s), Err(Error::EmptyBattery)));
    let tab = TabulatedDecoding(vec![0.5, 0.1]);
    assert_eq!(tab.error_probability(1, &s).unwrap(), 0.5);
    assert_eq!(tab.error_probability(5, &s).unwrap(), 0.1);
}

#[test]
fn omega_bar_equals_monte_carlo_over_multinomial_profiles() {
    let s = tiny_scenario(6);
    let pi = varied_strategy(1);
    let nu = ProcessBatteryChain::build(&s, &pi).unwrap().nu;
    let want = omega_bar(1, &s, &pi, &nu, &NormalApproximation).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let pick = WeightedIndex::new(&nu).unwrap();
    let draws = 200_000;
    let mut acc = 0.0;
    let mut acc_sq = 0.0;
    for _ in 0..draws {
        let mut profile = vec![0; s.num_categories()];
        for _ in 0..s.num_devices - 1 {
            profile[pick.sample(&mut rng)] += 1;
        }
        let w = omega_given_profile(1, &profile, &s, &pi, &NormalApproximation).unwrap();
        acc += w;
        acc_sq += w * w;
    }
    let mean = acc / draws as f64;
    let se = ((acc_sq / draws as f64 - mean * mean) / draws as f64).sqrt();
    assert!((mean - want).abs() < 4.0 * se, "mc {mean} vs {want} (se {se:e})");
}

#[test]
fn omega_given_profile_with_silent_others_is_single_user_success() {
    let s = tiny_scenario(3);
    let pi = varied_strategy(1);
    let mut profile = vec![0; 4];
    profile[category_index(0, 0, 1)] = 2;
    let w = omega_given_profile(1, &profile, &s, &pi, &NormalApproximation).unwrap();
    let eps = epsilon_normal_approx(1, &s).unwrap();
    assert!(rel_err(w, 1.0 - eps) < 1e-15);
    assert!(omega_given_profile(1, &[1, 0, 0, 0], &s, &pi, &NormalApproximation).is_err());
}
