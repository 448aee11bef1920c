// Closed-form average AoII, penalty and misdetection probability of fixed
// strategies.

use aoii_aloha::prelude::*;

pub fn run_example() -> std::result::Result<(), Box<dyn std::error::Error>> {
    let s = Scenario::symmetric_reference(0.1);
    let e = s.battery_capacity;
    let mut hybrid = Strategy::silent(StrategyClass::Hybrid, e);
    for b in 1..=e {
        hybrid.pi[1][b] = 0.3;
        hybrid.pi[2][b] = 0.3;
        hybrid.pi[0][b] = if b == e { 0.02 } else { 0.0 };
        hybrid.pi[3][b] = hybrid.pi[0][b];
    }
    let candidates = [
        ("reactive 0.5", Strategy::constant(StrategyClass::Reactive, e, 0.5)),
        ("random 0.02", Strategy::constant(StrategyClass::Random, e, 0.02)),
        ("hybrid", hybrid),
    ];
    for (name, pi) in &candidates {
        let r = analyze(&s, pi, &PenaltySpec::new(1, 2), &NormalApproximation)?;
        println!(
            "{name:>12}: AoII {:8.2}  penalty(1,2) {:10.1}  E[W] {:7.2}  E[Y] {:8.2}  MEP {:.4}",
            r.average_aoii, r.average_penalty, r.mean_wed, r.mean_ced, r.misdetection_probability
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> std::result::Result<(), Box<dyn std::error::Error>> {
    run_example()
}
