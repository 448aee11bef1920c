// Multi-start Nelder-Mead search over one strategy class.

use aoii_aloha::optimizer::{optimize, Objective, OptimizeOptions};
use aoii_aloha::prelude::*;

pub fn run_example() -> std::result::Result<(), Box<dyn std::error::Error>> {
    let s = Scenario::symmetric_reference(0.1);
    let options = OptimizeOptions {
        starts: 4,
        ..OptimizeOptions::default()
    };
    for class in StrategyClass::ALL {
        let obj = Objective::new(s.clone(), Metric::Aoii, class);
        let res = optimize(&obj, &options);
        let report = analyze(&s, &res.best_strategy, &PenaltySpec::AOII, &NormalApproximation)?;
        println!(
            "{:>8}: {} parameters, AoII {:.3}, MEP {:.4}",
            class.name(),
            obj.dimension(),
            res.best_value,
            report.misdetection_probability
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> std::result::Result<(), Box<dyn std::error::Error>> {
    run_example()
}
