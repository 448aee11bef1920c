// Finite-blocklength decoding error per battery level and the
// profile-averaged success probability.

use aoii_aloha::channel::{awgn_capacity, omega_bar_vector, DecodingModel, NormalApproximation};
use aoii_aloha::device_chain::ProcessBatteryChain;
use aoii_aloha::model::{Scenario, Strategy, StrategyClass};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let s = Scenario::symmetric_reference(0.1);
    let n = s.slot_channel_uses as f64;
    for b in 1..=s.battery_capacity {
        let snr = b as f64 / (n * s.noise_variance);
        let eps = NormalApproximation.error_probability(b, &s)?;
        println!("b={b}: snr {snr:.1}, capacity {:.3} bit, eps {eps:.3e}", awgn_capacity(snr));
    }
    let pi = Strategy::constant(StrategyClass::Random, s.battery_capacity, 0.05);
    let nu = ProcessBatteryChain::build(&s, &pi)?.nu;
    let omega = omega_bar_vector(&s, &pi, &nu, &NormalApproximation)?;
    println!("omega_bar: {:?}", omega.iter().map(|w| format!("{w:.4}")).collect::<Vec<_>>());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
