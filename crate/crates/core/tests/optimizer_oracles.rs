use std::sync::Arc;

use aoii_aloha::analysis::{evaluate_metric, Metric};
use aoii_aloha::channel::NormalApproximation;
use aoii_aloha::model::{ParamMap, PenaltySpec, Scenario, StrategyClass};
use aoii_aloha::optimizer::{evaluate_strategy_table, optimize, Objective, OptimizeOptions};

fn one_level_scenario() -> Scenario {
    Scenario {
        num_devices: 50,
        battery_capacity: 1,
        q01: 0.004,
        q10: 0.006,
        gamma0: 0.02,
        gamma1: 0.02,
        slot_channel_uses: 100,
        rate_bits: 0.8,
        noise_variance: 0.001,
    }
}

#[test]
fn one_dimensional_optimum_matches_grid_scan() {
    let s = one_level_scenario();
    let class = StrategyClass::Random;
    let params = ParamMap::new(class, 1);
    assert_eq!(params.len(), 1);
    let grid_best = (0..=1000)
        .map(|i| {
            let st = params.strategy(&[i as f64 / 1000.0]);
            evaluate_metric(&s, &st, Metric::Aoii, &NormalApproximation).unwrap_or(f64::INFINITY)
        })
        .fold(f64::INFINITY, f64::min);
    let res = optimize(&Objective::new(s, Metric::Aoii, class), &OptimizeOptions::default());
    assert!(res.best_value <= grid_best * (1.0 + 1e-3), "{} vs grid {grid_best}", res.best_value);
    assert!(res.best_value >= grid_best * (1.0 - 1e-3));
    assert!(res.best_so_far.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(res.best_so_far.len(), res.starts.len());
}

#[test]
fn optimizer_is_deterministic_for_a_seed() {
    let s = Scenario { battery_capacity: 2, ..one_level_scenario() };
    let obj = Objective::new(s, Metric::Penalty(PenaltySpec::new(1, 2)), StrategyClass::Hybrid);
    let opts = OptimizeOptions { starts: 4, seed: 9, ..OptimizeOptions::default() };
    let a = optimize(&obj, &opts);
    let b = optimize(&obj, &opts);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn hybrid_is_never_worse_than_nested_classes_in_a_sweep() {
    let base = Scenario { battery_capacity: 2, ..one_level_scenario() };
    let opts = OptimizeOptions { starts: 3, ..OptimizeOptions::default() };
    let rows = evaluate_strategy_table(
        |rate| base.with_change_rate(rate, 1.0),
        &[0.05, 0.5],
        &StrategyClass::ALL,
        Metric::Aoii,
        PenaltySpec::AOII,
        &opts,
        Arc::new(NormalApproximation),
    );
    assert_eq!(rows.len(), 6);
    for point in rows.chunks(3) {
        assert!(point.iter().all(|r| r.error.is_none()));
        let hybrid = point[2].objective;
        assert!(hybrid <= point[0].objective * (1.0 + 1e-9));
        assert!(hybrid <= point[1].objective * (1.0 + 1e-9));
    }
}

#[test]
fn invalid_cells_are_reported_without_aborting_the_sweep() {
    let base = one_level_scenario();
    let opts = OptimizeOptions { starts: 2, ..OptimizeOptions::default() };
    let rows = evaluate_strategy_table(
        |rate| base.with_change_rate(rate, 1.0),
        &[0.1, 500.0],
        &[StrategyClass::Random],
        Metric::Aoii,
        PenaltySpec::AOII,
        &opts,
        Arc::new(NormalApproximation),
    );
    assert!(rows[0].error.is_none());
    assert!(rows[1].error.is_some() && rows[1].best_strategy.is_none());
}
