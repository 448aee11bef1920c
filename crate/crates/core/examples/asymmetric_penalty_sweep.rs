// Penalty-optimal strategies with alpha = (1, 2) for the asymmetric
// process, next to the penalty of the AoII-optimal ones.

use std::sync::Arc;

use aoii_aloha::optimizer::{evaluate_strategy_table, OptimizeOptions};
use aoii_aloha::prelude::{Metric, NormalApproximation, PenaltySpec, Scenario, StrategyClass};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut grid: Vec<f64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    if grid.is_empty() {
        grid = vec![0.0025, 0.05, 0.1, 1.0];
    }
    let pen = PenaltySpec::new(1, 2);
    let sweep = |metric| {
        evaluate_strategy_table(
            Scenario::asymmetric_reference,
            &grid,
            &StrategyClass::ALL,
            metric,
            pen,
            &OptimizeOptions::thorough(1),
            Arc::new(NormalApproximation),
        )
    };
    let by_penalty = sweep(Metric::Penalty(pen));
    let by_aoii = sweep(Metric::Aoii);
    println!("rate,class,penalty_opt,mep,penalty_of_aoii_opt");
    for (p, a) in by_penalty.iter().zip(&by_aoii) {
        println!(
            "{},{},{:.4},{:.4e},{:.4}",
            p.total_change_rate,
            p.class.name(),
            p.average_penalty,
            p.misdetection_probability,
            a.average_penalty
        );
    }
    Ok(())
}
