// Slot-level simulation of all devices against the closed-form averages.

use aoii_aloha::prelude::*;
use aoii_aloha::simulator::{empirical_mep, run_replications, SimConfig};

pub fn run_example() -> std::result::Result<(), Box<dyn std::error::Error>> {
    let mut s = Scenario::symmetric_reference(0.1);
    s.num_devices = 50;
    s.gamma0 = 0.1;
    s.gamma1 = 0.1;
    let s = s.with_change_rate(1.0, 1.0);
    let pi = Strategy::constant(StrategyClass::Hybrid, s.battery_capacity, 0.2);
    let pen = PenaltySpec::new(1, 2);
    let model = NormalApproximation;

    let exact = analyze(&s, &pi, &pen, &model)?;
    let mut cfg = SimConfig::new(100_000, 7);
    cfg.tracked = Some((0..5).collect());
    let sim = run_replications(&s, &pi, &model, &pen, &cfg, 2)?;
    let mep = empirical_mep(&sim)?;

    println!("metric        analysis    simulation (se)");
    println!("AoII        {:10.3}    {:10.3} ({:.3})", exact.average_aoii, sim.average_aoii(), sim.aoii_standard_error());
    println!("penalty     {:10.3}    {:10.3} ({:.3})", exact.average_penalty, sim.average_penalty(), sim.penalty_standard_error());
    println!("E[W]        {:10.3}    {:10.3}", exact.mean_wed, sim.wed_pooled().mean());
    println!("E[Y]        {:10.3}    {:10.3}", exact.mean_ced, sim.ced_pooled().mean());
    println!(
        "MEP         {:10.4}    {:10.4} [{:.4}, {:.4}]",
        exact.misdetection_probability, mep.probability, mep.lower, mep.upper
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> std::result::Result<(), Box<dyn std::error::Error>> {
    run_example()
}
