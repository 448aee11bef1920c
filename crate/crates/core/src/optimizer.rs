//! Multi-start Nelder-Mead over the free transmission probabilities of a
//! strategy class.
//!
//! Probabilities are searched in logit space, `pi = 1 / (1 + exp(-z))` with
//! `|z| <= 20`, so the simplex method runs unconstrained.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze, evaluate_metric, Metric};
use crate::channel::{DecodingModel, NormalApproximation};
use crate::error::Result;
use crate::model::{ParamMap, PenaltySpec, Scenario, Strategy, StrategyClass};

/// Saturation of the logit coordinates.
pub const LOGIT_LIMIT: f64 = 20.0;

pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z.clamp(-LOGIT_LIMIT, LOGIT_LIMIT)).exp())
}

pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln().clamp(-LOGIT_LIMIT, LOGIT_LIMIT)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Stop when every vertex lies within this distance of the best one.
    pub tolerance: f64,
    pub max_evaluations: usize,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            tolerance: 1e-6,
            max_evaluations: 2000,
            initial_step: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0`. Non-finite objective values are treated as +inf.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    cfg: &NelderMeadConfig,
) -> NelderMeadResult {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    if n == 0 {
        let v = eval(x0, &mut evals);
        return NelderMeadResult {
            x: Vec::new(),
            value: v,
            evaluations: evals,
            iterations: 0,
            converged: true,
        };
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        let mut x = x0.to_vec();
        // Step towards the interior of the clamp box.
        x[i] += if x[i] > 0.0 { -cfg.initial_step } else { cfg.initial_step };
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| dist(x, &simplex[0].0))
            .fold(0.0, f64::max);
        if diameter < cfg.tolerance {
            converged = true;
            break;
        }
        if evals >= cfg.max_evaluations {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(cfg.reflection);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(cfg.reflection * cfg.expansion);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        // Outside contraction if the reflection helped at all, inside otherwise.
        let (xc, fc) = if fr < worst.1 {
            let xc = along(cfg.reflection * cfg.contraction);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-cfg.contraction);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < fr.min(worst.1) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for (x, v) in simplex.iter_mut().skip(1) {
            for (xi, bi) in x.iter_mut().zip(&best) {
                *xi = bi + cfg.shrink * (*xi - bi);
            }
            *v = eval(x, &mut evals);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        value,
        evaluations: evals,
        iterations,
        converged,
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Probabilities tried for each coordinate by [`coordinate_polish`].
const POLISH_GRID: [f64; 16] = [
    0.0, 1e-4, 1e-3, 0.01, 0.03, 0.1, 0.2, 0.3, 0.5, 0.7, 0.8, 0.9, 0.97, 0.99, 0.999, 1.0,
];

/// Cyclic coordinate search in logit space: each coordinate is scanned over
/// a fixed probability grid, then refined by golden-section search between
/// the neighbours of the best grid point. Stops after `sweeps` passes or
/// once a pass no longer improves.
pub fn coordinate_polish(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], sweeps: usize) -> NelderMeadResult {
    let grid: Vec<f64> = POLISH_GRID
        .iter()
        .map(|&p| if p == 0.0 { -LOGIT_LIMIT } else if p == 1.0 { LOGIT_LIMIT } else { logit(p) })
        .collect();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut x = x0.to_vec();
    let mut value = eval(&x, &mut evals);
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..sweeps {
        iterations += 1;
        let start_value = value;
        for i in 0..x.len() {
            let mut at = |z: f64, evals: &mut usize| {
                let mut y = x.clone();
                y[i] = z;
                eval(&y, evals)
            };
            let mut best = (x[i], value);
            let mut best_k = None;
            for (k, &z) in grid.iter().enumerate() {
                let v = at(z, &mut evals);
                if v < best.1 {
                    best = (z, v);
                    best_k = Some(k);
                }
            }
            let k = best_k.unwrap_or_else(|| grid.partition_point(|&g| g < best.0).min(grid.len() - 1));
            let (mut lo, mut hi) = (grid[k.saturating_sub(1)], grid[(k + 1).min(grid.len() - 1)]);
            let r = 0.5 * (5f64.sqrt() - 1.0);
            let mut a = hi - r * (hi - lo);
            let mut b = lo + r * (hi - lo);
            let mut fa = at(a, &mut evals);
            let mut fb = at(b, &mut evals);
            for _ in 0..20 {
                if fa < fb {
                    hi = b;
                    b = a;
                    fb = fa;
                    a = hi - r * (hi - lo);
                    fa = at(a, &mut evals);
                } else {
                    lo = a;
                    a = b;
                    fa = fb;
                    b = lo + r * (hi - lo);
                    fb = at(b, &mut evals);
                }
            }
            for (z, v) in [(a, fa), (b, fb)] {
                if v < best.1 {
                    best = (z, v);
                }
            }
            x[i] = best.0;
            value = best.1;
        }
        if !(value < start_value - 1e-12 * start_value.abs().max(1.0)) {
            converged = true;
            break;
        }
    }
    NelderMeadResult {
        x,
        value,
        evaluations: evals,
        iterations,
        converged,
    }
}

/// Average penalty (or AoII) of a strategy class in a fixed scenario.
#[derive(Clone)]
pub struct Objective {
    pub scenario: Scenario,
    pub metric: Metric,
    pub params: ParamMap,
    pub model: Arc<dyn DecodingModel>,
}

impl std::fmt::Debug for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Objective")
            .field("scenario", &self.scenario)
            .field("metric", &self.metric)
            .field("class", &self.params.class())
            .finish_non_exhaustive()
    }
}

impl Objective {
    pub fn new(scenario: Scenario, metric: Metric, class: StrategyClass) -> Self {
        let params = ParamMap::new(class, scenario.battery_capacity);
        Self {
            scenario,
            metric,
            params,
            model: Arc::new(NormalApproximation),
        }
    }

    pub fn with_model(mut self, model: Arc<dyn DecodingModel>) -> Self {
        self.model = model;
        self
    }

    pub fn class(&self) -> StrategyClass {
        self.params.class()
    }

    pub fn dimension(&self) -> usize {
        self.params.len()
    }

    /// Strategy for a point in logit space.
    pub fn strategy_at(&self, z: &[f64]) -> Strategy {
        let probs: Vec<f64> = z.iter().map(|&v| logistic(v)).collect();
        self.params.strategy(&probs)
    }

    /// Objective value of a strategy; failures of the analysis count as +inf.
    pub fn evaluate(&self, strategy: &Strategy) -> f64 {
        let violations = strategy.validate(self.scenario.battery_capacity);
        assert!(
            violations.is_empty() && strategy.class == self.class(),
            "candidate violates its class constraints: {violations:?}"
        );
        evaluate_metric(&self.scenario, strategy, self.metric, self.model.as_ref())
            .unwrap_or(f64::INFINITY)
    }

    pub fn evaluate_logit(&self, z: &[f64]) -> f64 {
        self.evaluate(&self.strategy_at(z))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartTrace {
    pub start: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub final_value: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub class: StrategyClass,
    pub best_strategy: Strategy,
    pub best_value: f64,
    /// Best value after each start completes, in start order.
    pub best_so_far: Vec<f64>,
    pub starts: Vec<StartTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    /// Seeded starts: the midpoint, then uniform points in logit space.
    pub starts: usize,
    pub seed: u64,
    pub nelder_mead: NelderMeadConfig,
    /// Extra Nelder-Mead runs from the incumbent of a start, stopping early
    /// once a run no longer improves it.
    pub restarts: usize,
    /// Additional starts given as free-parameter probabilities, run after
    /// the seeded ones.
    pub initial_points: Vec<Vec<f64>>,
    /// Passes of [`coordinate_polish`] after each Nelder-Mead run.
    #[serde(default)]
    pub coordinate_sweeps: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            starts: 10,
            seed: 1,
            nelder_mead: NelderMeadConfig::default(),
            restarts: 0,
            initial_points: Vec::new(),
            coordinate_sweeps: 0,
        }
    }
}

impl OptimizeOptions {
    /// Setting used for full-size sweeps.
    pub fn thorough(seed: u64) -> Self {
        Self {
            starts: 12,
            seed,
            nelder_mead: NelderMeadConfig {
                max_evaluations: 4000,
                ..NelderMeadConfig::default()
            },
            restarts: 3,
            initial_points: Vec::new(),
            coordinate_sweeps: 2,
        }
    }
}

/// Free parameters of `class` that reproduce `strategy`, which must belong
/// to a class nested in `class` (every class is nested in hybrid).
pub fn lift_strategy(strategy: &Strategy, class: StrategyClass) -> Vec<f64> {
    let mut s = strategy.clone();
    s.class = class;
    ParamMap::new(class, strategy.battery_capacity()).values(&s)
}

/// Logit-space starting point of start `index`: the midpoint for start 0,
/// uniform in `[-6, 6]^d` otherwise.
pub fn start_point(dimension: usize, seed: u64, index: usize) -> Vec<f64> {
    if index == 0 {
        return vec![0.0; dimension];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (0..dimension).map(|_| rng.random_range(-6.0..6.0)).collect()
}

fn run_start(objective: &Objective, x0: Vec<f64>, options: &OptimizeOptions) -> NelderMeadResult {
    let f = |z: &[f64]| objective.evaluate_logit(z);
    let mut best = nelder_mead(f, &x0, &options.nelder_mead);
    let mut round = 0;
    loop {
        let before = best.value;
        if options.coordinate_sweeps > 0 {
            let next = coordinate_polish(f, &best.x, options.coordinate_sweeps);
            best = absorb(best, next);
        }
        if round == options.restarts {
            break;
        }
        round += 1;
        let next = nelder_mead(f, &best.x, &options.nelder_mead);
        best = absorb(best, next);
        if !(best.value < before - 1e-12 * before.abs().max(1.0)) {
            break;
        }
    }
    best
}

/// Keeps the better of two consecutive runs, summing their effort.
fn absorb(prev: NelderMeadResult, next: NelderMeadResult) -> NelderMeadResult {
    let evaluations = prev.evaluations + next.evaluations;
    let iterations = prev.iterations + next.iterations;
    let better = if next.value < prev.value { next } else { prev };
    NelderMeadResult {
        evaluations,
        iterations,
        ..better
    }
}

/// Runs the seeded starts and the given initial points, keeping the best.
pub fn optimize(objective: &Objective, options: &OptimizeOptions) -> OptResult {
    let dim = objective.dimension();
    let mut points: Vec<Vec<f64>> = (0..options.starts).map(|i| start_point(dim, options.seed, i)).collect();
    for p in &options.initial_points {
        assert_eq!(p.len(), dim, "initial point has the wrong dimension");
        points.push(p.iter().map(|&v| logit(v)).collect());
    }
    assert!(!points.is_empty(), "at least one start required");
    let runs: Vec<NelderMeadResult> = points
        .into_par_iter()
        .map(|x0| run_start(objective, x0, options))
        .collect();

    let mut best_idx = 0;
    let mut best_so_far = Vec::with_capacity(runs.len());
    for (i, r) in runs.iter().enumerate() {
        if r.value < runs[best_idx].value {
            best_idx = i;
        }
        best_so_far.push(runs[best_idx].value);
    }
    let starts = runs
        .iter()
        .enumerate()
        .map(|(i, r)| StartTrace {
            start: i,
            iterations: r.iterations,
            evaluations: r.evaluations,
            final_value: r.value,
            converged: r.converged,
        })
        .collect();
    OptResult {
        class: objective.class(),
        best_strategy: objective.strategy_at(&runs[best_idx].x),
        best_value: runs[best_idx].value,
        best_so_far,
        starts,
    }
}

/// One cell of a strategy sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Expected number of state changes per slot across all devices, `U * qbar`.
    pub total_change_rate: f64,
    pub class: StrategyClass,
    pub objective: f64,
    pub average_aoii: f64,
    pub average_penalty: f64,
    pub misdetection_probability: f64,
    pub evaluations: usize,
    pub converged_starts: usize,
    pub best_strategy: Option<Strategy>,
    pub error: Option<String>,
}

/// Optimizes every `(rate, class)` cell; a failing cell is reported in its
/// row and the sweep continues. Rows follow the grid order, classes inner.
///
/// Within a grid point the hybrid class also starts from the optima found
/// for the reactive and random classes.
pub fn evaluate_strategy_table(
    scenario_at: impl Fn(f64) -> Scenario + Sync,
    grid: &[f64],
    classes: &[StrategyClass],
    metric: Metric,
    report_penalty: PenaltySpec,
    options: &OptimizeOptions,
    model: Arc<dyn DecodingModel>,
) -> Vec<SweepRow> {
    grid.par_iter()
        .flat_map_iter(|&rate| {
            let scenario = scenario_at(rate);
            let mut order: Vec<StrategyClass> = classes.to_vec();
            order.sort_by_key(|c| StrategyClass::ALL.iter().position(|a| a == c));
            let mut found: Vec<Strategy> = Vec::new();
            let mut rows: Vec<SweepRow> = Vec::new();
            for class in order {
                let mut opts = options.clone();
                if class == StrategyClass::Hybrid {
                    opts.initial_points
                        .extend(found.iter().map(|s| lift_strategy(s, class)));
                }
                let row = sweep_cell(&scenario, rate, class, metric, report_penalty, &opts, &model)
                    .unwrap_or_else(|e| SweepRow::failed(rate, class, e.to_string()));
                if let Some(s) = &row.best_strategy {
                    found.push(s.clone());
                }
                rows.push(row);
            }
            classes
                .iter()
                .map(|c| rows.iter().find(|r| r.class == *c).expect("row per class").clone())
                .collect::<Vec<_>>()
        })
        .collect()
}

fn sweep_cell(
    scenario: &Scenario,
    rate: f64,
    class: StrategyClass,
    metric: Metric,
    report_penalty: PenaltySpec,
    options: &OptimizeOptions,
    model: &Arc<dyn DecodingModel>,
) -> Result<SweepRow> {
    crate::model::validate(scenario, &Strategy::silent(class, scenario.battery_capacity))?;
    let obj = Objective::new(scenario.clone(), metric, class).with_model(model.clone());
    let res = optimize(&obj, options);
    let report = analyze(scenario, &res.best_strategy, &report_penalty, model.as_ref())?;
    Ok(SweepRow {
        total_change_rate: rate,
        class,
        objective: res.best_value,
        average_aoii: report.average_aoii,
        average_penalty: report.average_penalty,
        misdetection_probability: report.misdetection_probability,
        evaluations: res.starts.iter().map(|s| s.evaluations).sum(),
        converged_starts: res.starts.iter().filter(|s| s.converged).count(),
        best_strategy: Some(res.best_strategy),
        error: None,
    })
}

impl SweepRow {
    fn failed(rate: f64, class: StrategyClass, error: String) -> Self {
        Self {
            total_change_rate: rate,
            class,
            objective: f64::NAN,
            average_aoii: f64::NAN,
            average_penalty: f64::NAN,
            misdetection_probability: f64::NAN,
            evaluations: 0,
            converged_starts: 0,
            best_strategy: None,
            error: Some(error),
        }
    }
}
