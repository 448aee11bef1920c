// AoII-optimal strategies of each class over the total change rate,
// symmetric process. Pass rates as arguments to override the grid.

use std::sync::Arc;

use aoii_aloha::optimizer::{evaluate_strategy_table, OptimizeOptions};
use aoii_aloha::prelude::{Metric, NormalApproximation, PenaltySpec, Scenario, StrategyClass};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut grid: Vec<f64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    if grid.is_empty() {
        grid = vec![1e-3, 1e-2, 1e-1, 1.0];
    }
    let rows = evaluate_strategy_table(
        Scenario::symmetric_reference,
        &grid,
        &StrategyClass::ALL,
        Metric::Aoii,
        PenaltySpec::AOII,
        &OptimizeOptions::thorough(1),
        Arc::new(NormalApproximation),
    );
    println!("rate,class,aoii,mep");
    for r in &rows {
        println!(
            "{},{},{:.4},{:.4e}",
            r.total_change_rate,
            r.class.name(),
            r.average_aoii,
            r.misdetection_probability
        );
    }
    Ok(())
}
