//! Slot-level Monte Carlo of the protocol with all `U` devices.
//!
//! Every slot, each device draws its process transition, decides whether to
//! transmit from the strategy entry of the realized transition (spending its
//! whole battery), and harvests. The gateway decodes only if exactly one
//! device transmitted, with the single-user success probability of the spent
//! energy. Metrics are sampled after the estimate update.

use std::collections::BTreeMap;
use std::io::Write;

use rand::distr::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::channel::DecodingModel;
use crate::device_chain::{category_index, estimate_state_index};
use crate::error::{Error, Result, Violation};
use crate::model::{transition_index, PenaltySpec, Scenario, Strategy};

pub const DEFAULT_WARMUP_SLOTS: u64 = 10_000;
pub const DEFAULT_BATCHES: usize = 20;
pub const DEFAULT_MAX_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Slots accumulated after warmup.
    pub num_slots: u64,
    pub warmup_slots: u64,
    pub seed: u64,
    /// Devices whose metrics are accumulated; all devices when `None`.
    pub tracked: Option<Vec<usize>>,
    /// Number of batches for batch-means standard errors.
    pub batches: usize,
    /// Cap on stored per-period sample records.
    pub max_samples: usize,
    /// Record the joint occupancy of device 0 and the profile of the others.
    pub joint_occupancy: bool,
}

impl SimConfig {
    pub fn new(num_slots: u64, seed: u64) -> Self {
        Self {
            num_slots,
            warmup_slots: DEFAULT_WARMUP_SLOTS,
            seed,
            tracked: None,
            batches: DEFAULT_BATCHES,
            max_samples: DEFAULT_MAX_SAMPLES,
            joint_occupancy: false,
        }
    }

    pub fn validate(&self, num_devices: usize) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.num_slots == 0 {
            v.push(Violation::new("num_slots", "must be positive"));
        }
        if self.batches == 0 || self.batches as u64 > self.num_slots.max(1) {
            v.push(Violation::new("batches", "must be in 1..=num_slots"));
        }
        if let Some(t) = &self.tracked {
            if t.is_empty() {
                v.push(Violation::new("tracked", "must not be empty"));
            }
            if let Some(&d) = t.iter().find(|&&d| d >= num_devices) {
                v.push(Violation::new("tracked", format!("device {d} out of range 0..{num_devices}")));
            }
        }
        v
    }
}

/// One completed wrong- or correct-estimate period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodSample {
    pub device: usize,
    pub start_slot: u64,
    pub length: u64,
    /// Process state at the start of the period.
    pub state: usize,
    /// Battery at the end of the first slot of the period.
    pub entry_battery: usize,
}

/// Power sums of completed period lengths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DurationMoments {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
    pub sum_cube: f64,
}

impl DurationMoments {
    fn push(&mut self, w: u64) {
        let w = w as f64;
        self.count += 1;
        self.sum += w;
        self.sum_sq += w * w;
        self.sum_cube += w * w * w;
    }

    fn merge(&mut self, o: &Self) {
        self.count += o.count;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.sum_cube += o.sum_cube;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    pub fn second_moment(&self) -> f64 {
        self.sum_sq / self.count as f64
    }

    pub fn third_moment(&self) -> f64 {
        self.sum_cube / self.count as f64
    }

    /// Standard error of the sample mean.
    pub fn standard_error(&self) -> f64 {
        let n = self.count as f64;
        let var = (self.second_moment() - self.mean().powi(2)).max(0.0) * n / (n - 1.0).max(1.0);
        (var / n).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointCount {
    pub x: usize,
    pub x_hat: usize,
    pub b: usize,
    /// Counts of the other devices per `(x, b)` category.
    pub profile: Vec<usize>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub seed: u64,
    /// Seeds of the pooled replications, in replication order.
    pub replication_seeds: Vec<u64>,
    /// Post-warmup slots (summed over pooled replications).
    pub slots: u64,
    pub tracked_devices: usize,
    pub penalty: PenaltySpec,
    /// Sum of AoII over tracked device-slots.
    pub aoii_sum: u64,
    pub penalty_sum: f64,
    pub per_device_aoii_sum: Vec<u64>,
    pub per_device_penalty_sum: Vec<f64>,
    /// Per-batch `(device-slots, AoII sum, penalty sum)`.
    pub batches: Vec<(u64, u64, f64)>,
    /// Wrong-estimate durations by period state.
    pub wed: [DurationMoments; 2],
    /// Correct-estimate durations by period state.
    pub ced: [DurationMoments; 2],
    /// Entry counts over `(0,1,b)` then `(1,0,b)`.
    pub wed_entry_counts: Vec<u64>,
    /// Entry counts over `(0,0,b)` then `(1,1,b)`.
    pub ced_entry_counts: Vec<u64>,
    pub wed_samples: Vec<PeriodSample>,
    pub ced_samples: Vec<PeriodSample>,
    pub critical_periods: u64,
    pub critical_misses: u64,
    /// Tracked device-slots per `(x, x_hat, b)`.
    pub occupancy: Vec<u64>,
    pub transmissions: u64,
    pub decodes: u64,
    pub collision_slots: u64,
    pub joint_occupancy: Option<Vec<JointCount>>,
}

/// Misdetection estimate with a 95% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MepEstimate {
    pub probability: f64,
    pub lower: f64,
    pub upper: f64,
    pub periods: u64,
    pub misses: u64,
}

/// Wilson score interval for `k` successes in `n` trials at level `1 - alpha`.
pub fn wilson_interval(k: u64, n: u64, alpha: f64) -> (f64, f64) {
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let center = (p + z2 / (2.0 * n_f)) / (1.0 + z2 / n_f);
    let half = z / (1.0 + z2 / n_f) * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

impl SimStats {
    fn device_slots(&self) -> f64 {
        (self.slots * self.tracked_devices as u64) as f64
    }

    pub fn average_aoii(&self) -> f64 {
        self.aoii_sum as f64 / self.device_slots()
    }

    pub fn average_penalty(&self) -> f64 {
        self.penalty_sum / self.device_slots()
    }

    fn batch_se(&self, f: impl Fn(&(u64, u64, f64)) -> f64) -> f64 {
        let means: Vec<f64> = self
            .batches
            .iter()
            .filter(|b| b.0 > 0)
            .map(|b| f(b) / b.0 as f64)
            .collect();
        let k = means.len() as f64;
        if k < 2.0 {
            return f64::NAN;
        }
        let m = means.iter().sum::<f64>() / k;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    }

    /// Batch-means standard error of the average AoII.
    pub fn aoii_standard_error(&self) -> f64 {
        self.batch_se(|b| b.1 as f64)
    }

    /// Batch-means standard error of the average penalty.
    pub fn penalty_standard_error(&self) -> f64 {
        self.batch_se(|b| b.2)
    }

    /// Pooled wrong-estimate durations over both period states.
    pub fn wed_pooled(&self) -> DurationMoments {
        let mut m = self.wed[0];
        m.merge(&self.wed[1]);
        m
    }

    pub fn ced_pooled(&self) -> DurationMoments {
        let mut m = self.ced[0];
        m.merge(&self.ced[1]);
        m
    }

    /// Fraction of tracked device-slots per `(x, x_hat, b)`.
    pub fn occupancy_frequencies(&self) -> Vec<f64> {
        let total = self.device_slots();
        self.occupancy.iter().map(|&c| c as f64 / total).collect()
    }

    /// Pools another replication of the same scenario into `self`.
    pub fn merge(&mut self, o: &SimStats) -> Result<()> {
        if o.penalty != self.penalty
            || o.occupancy.len() != self.occupancy.len()
            || o.per_device_aoii_sum.len() != self.per_device_aoii_sum.len()
            || o.tracked_devices != self.tracked_devices
        {
            return Err(Error::Dimension("replications of different configurations".into()));
        }
        self.replication_seeds.extend_from_slice(&o.replication_seeds);
        self.slots += o.slots;
        self.aoii_sum += o.aoii_sum;
        self.penalty_sum += o.penalty_sum;
        add_into(&mut self.per_device_aoii_sum, &o.per_device_aoii_sum);
        for (a, b) in self.per_device_penalty_sum.iter_mut().zip(&o.per_device_penalty_sum) {
            *a += b;
        }
        self.batches.extend_from_slice(&o.batches);
        for x in 0..2 {
            self.wed[x].merge(&o.wed[x]);
            self.ced[x].merge(&o.ced[x]);
        }
        add_into(&mut self.wed_entry_counts, &o.wed_entry_counts);
        add_into(&mut self.ced_entry_counts, &o.ced_entry_counts);
        self.wed_samples.extend_from_slice(&o.wed_samples);
        self.ced_samples.extend_from_slice(&o.ced_samples);
        self.critical_periods += o.critical_periods;
        self.critical_misses += o.critical_misses;
        add_into(&mut self.occupancy, &o.occupancy);
        self.transmissions += o.transmissions;
        self.decodes += o.decodes;
        self.collision_slots += o.collision_slots;
        if let (Some(a), Some(b)) = (&mut self.joint_occupancy, &o.joint_occupancy) {
            let mut map: BTreeMap<(usize, usize, usize, Vec<usize>), u64> = BTreeMap::new();
            for j in a.iter().chain(b) {
                *map.entry((j.x, j.x_hat, j.b, j.profile.clone())).or_default() += j.count;
            }
            *a = joint_from_map(map);
        }
        Ok(())
    }
}

fn add_into(a: &mut [u64], b: &[u64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

fn joint_from_map(map: BTreeMap<(usize, usize, usize, Vec<usize>), u64>) -> Vec<JointCount> {
    map.into_iter()
        .map(|((x, x_hat, b, profile), count)| JointCount { x, x_hat, b, profile, count })
        .collect()
}

/// Fraction of critical periods without any delivered update.
pub fn empirical_mep(stats: &SimStats) -> Result<MepEstimate> {
    if stats.critical_periods == 0 {
        return Err(Error::NoCriticalPeriods);
    }
    let (lower, upper) = wilson_interval(stats.critical_misses, stats.critical_periods, 0.05);
    Ok(MepEstimate {
        probability: stats.critical_misses as f64 / stats.critical_periods as f64,
        lower,
        upper,
        periods: stats.critical_periods,
        misses: stats.critical_misses,
    })
}

/// Seed of replication `rep` under a master seed: the first word of ChaCha
/// stream `rep` keyed by the master seed.
pub fn replication_seed(seed: u64, rep: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng.random()
}

struct Device {
    x: usize,
    x_hat: usize,
    b: usize,
    lambda: u64,
    period_start: u64,
    period_state: usize,
    period_entry: usize,
    /// Open critical period: `Some(detected)`.
    critical: Option<bool>,
}

struct Samplers {
    change: [Bernoulli; 2],
    transmit: Vec<Vec<Bernoulli>>,
    harvest: [Bernoulli; 2],
    decode: Vec<Bernoulli>,
}

impl Samplers {
    fn new(scenario: &Scenario, strategy: &Strategy, model: &dyn DecodingModel) -> Result<Self> {
        let bern = |p: f64| {
            Bernoulli::new(p.clamp(0.0, 1.0)).map_err(|e| Error::Degenerate(format!("probability {p}: {e}")))
        };
        let e = scenario.battery_capacity;
        let mut decode = vec![bern(0.0)?];
        for b in 1..=e {
            decode.push(bern(1.0 - model.error_probability(b, scenario)?)?);
        }
        Ok(Self {
            change: [bern(scenario.q01)?, bern(scenario.q10)?],
            transmit: strategy
                .pi
                .iter()
                .map(|row| row.iter().map(|&p| bern(p)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?,
            harvest: [bern(scenario.gamma0)?, bern(scenario.gamma1)?],
            decode,
        })
    }
}

fn power(lambda: u64, alpha: u32) -> f64 {
    if lambda == 0 {
        0.0
    } else {
        (lambda as f64).powi(alpha as i32)
    }
}

/// Runs one replication with the RNG seeded from `config.seed`.
pub fn run(
    scenario: &Scenario,
    strategy: &Strategy,
    model: &dyn DecodingModel,
    penalty: &PenaltySpec,
    config: &SimConfig,
) -> Result<SimStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    run_with_rng(scenario, strategy, model, penalty, config, &mut rng, None)
}

/// Like [`run`], also writing one CSV row per device and post-warmup slot:
/// `slot,device,x,x_hat,b,transmitted,decoded,lambda`.
pub fn run_traced(
    scenario: &Scenario,
    strategy: &Strategy,
    model: &dyn DecodingModel,
    penalty: &PenaltySpec,
    config: &SimConfig,
    trace: &mut dyn Write,
) -> Result<SimStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    writeln!(trace, "slot,device,x,x_hat,b,transmitted,decoded,lambda")?;
    run_with_rng(scenario, strategy, model, penalty, config, &mut rng, Some(trace))
}

/// `reps` independent replications pooled into one set of statistics.
/// Replication `r` is [`run`] with seed `replication_seed(config.seed, r)`.
pub fn run_replications(
    scenario: &Scenario,
    strategy: &Strategy,
    model: &dyn DecodingModel,
    penalty: &PenaltySpec,
    config: &SimConfig,
    reps: u64,
) -> Result<SimStats> {
    use rayon::prelude::*;
    let runs: Vec<SimStats> = (0..reps.max(1))
        .into_par_iter()
        .map(|r| {
            let cfg = SimConfig {
                seed: replication_seed(config.seed, r),
                ..config.clone()
            };
            run(scenario, strategy, model, penalty, &cfg)
        })
        .collect::<Result<_>>()?;
    let mut iter = runs.into_iter();
    let mut pooled = iter.next().expect("at least one replication");
    for r in iter {
        pooled.merge(&r)?;
    }
    pooled.seed = config.seed;
    Ok(pooled)
}

#[allow(clippy::too_many_arguments)]
fn run_with_rng(
    scenario: &Scenario,
    strategy: &Strategy,
    model: &dyn DecodingModel,
    penalty: &PenaltySpec,
    config: &SimConfig,
    rng: &mut ChaCha8Rng,
    mut trace: Option<&mut dyn Write>,
) -> Result<SimStats> {
    crate::model::validate(scenario, strategy)?;
    let violations = config.validate(scenario.num_devices);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    let u = scenario.num_devices;
    let e = scenario.battery_capacity;
    let w = e + 1;
    let samplers = Samplers::new(scenario, strategy, model)?;
    let tracked: Vec<usize> = config.tracked.clone().unwrap_or_else(|| (0..u).collect());
    let mut is_tracked = vec![false; u];
    tracked.iter().for_each(|&d| is_tracked[d] = true);

    let px1 = scenario.process_stationary()[1];
    let mut devices: Vec<Device> = (0..u)
        .map(|_| {
            let x = usize::from(rng.random::<f64>() < px1);
            Device {
                x,
                x_hat: x,
                b: e,
                lambda: 0,
                period_start: 0,
                period_state: x,
                period_entry: e,
                critical: None,
            }
        })
        .collect();

    let mut stats = SimStats {
        seed: config.seed,
        replication_seeds: vec![config.seed],
        slots: config.num_slots,
        tracked_devices: tracked.len(),
        penalty: *penalty,
        aoii_sum: 0,
        penalty_sum: 0.0,
        per_device_aoii_sum: vec![0; tracked.len()],
        per_device_penalty_sum: vec![0.0; tracked.len()],
        batches: vec![(0, 0, 0.0); config.batches],
        wed: Default::default(),
        ced: Default::default(),
        wed_entry_counts: vec![0; 2 * w],
        ced_entry_counts: vec![0; 2 * w],
        wed_samples: Vec::new(),
        ced_samples: Vec::new(),
        critical_periods: 0,
        critical_misses: 0,
        occupancy: vec![0; 4 * w],
        transmissions: 0,
        decodes: 0,
        collision_slots: 0,
        joint_occupancy: None,
    };
    let mut tracked_slot = vec![usize::MAX; u];
    for (k, &d) in tracked.iter().enumerate() {
        tracked_slot[d] = k;
    }
    let mut joint: BTreeMap<(usize, usize, usize, Vec<usize>), u64> = BTreeMap::new();

    let total = config.warmup_slots + config.num_slots;
    let mut transmitters: Vec<(usize, usize)> = Vec::new();
    let mut transmitted = vec![false; u];
    for slot in 0..total {
        let measuring = slot >= config.warmup_slots;
        transmitters.clear();
        for (d, dev) in devices.iter_mut().enumerate() {
            let x_prev = dev.x;
            if samplers.change[x_prev].sample(rng) {
                dev.x = 1 - x_prev;
            }
            let t = transition_index(x_prev, dev.x);
            let sending = dev.b > 0 && samplers.transmit[t][dev.b].sample(rng);
            if sending {
                transmitters.push((d, dev.b));
                dev.b = 0;
            }
            if dev.b < e && samplers.harvest[dev.x].sample(rng) {
                dev.b += 1;
            }
            transmitted[d] = sending;
        }

        let mut decoded = None;
        if transmitters.len() == 1 {
            let (d, energy) = transmitters[0];
            if samplers.decode[energy].sample(rng) {
                devices[d].x_hat = devices[d].x;
                decoded = Some(d);
            }
        }
        if measuring {
            stats.transmissions += transmitters.len() as u64;
            stats.decodes += u64::from(decoded.is_some());
            stats.collision_slots += u64::from(transmitters.len() > 1);
        }

        let batch = if measuring {
            ((slot - config.warmup_slots) * config.batches as u64 / config.num_slots) as usize
        } else {
            0
        };
        for (d, dev) in devices.iter_mut().enumerate() {
            let was_wrong = dev.lambda > 0;
            let prev_pair_00 = !was_wrong && dev.period_state == 0 && dev.critical.is_none();
            let wrong = dev.x != dev.x_hat;
            dev.lambda = if wrong { dev.lambda + 1 } else { 0 };
            let track = measuring && is_tracked[d];

            if wrong != was_wrong || slot == 0 {
                if track && slot > 0 && dev.period_start >= config.warmup_slots {
                    let sample = PeriodSample {
                        device: d,
                        start_slot: dev.period_start,
                        length: slot - dev.period_start,
                        state: dev.period_state,
                        entry_battery: dev.period_entry,
                    };
                    let (moments, samples) = if was_wrong {
                        (&mut stats.wed[sample.state], &mut stats.wed_samples)
                    } else {
                        (&mut stats.ced[sample.state], &mut stats.ced_samples)
                    };
                    moments.push(sample.length);
                    if samples.len() < config.max_samples {
                        samples.push(sample);
                    }
                }
                dev.period_start = slot;
                dev.period_state = dev.x;
                dev.period_entry = dev.b;
                if track {
                    let phase = dev.x * w + dev.b;
                    if wrong {
                        stats.wed_entry_counts[phase] += 1;
                    } else {
                        stats.ced_entry_counts[phase] += 1;
                    }
                }
            } else if !wrong && dev.x != dev.period_state {
                // Correct period continues through a delivered state change.
                dev.period_state = dev.x;
            }

            // Critical periods: state-1 sojourns entered from (0, 0).
            if let Some(detected) = dev.critical {
                if dev.x == 0 {
                    if track {
                        stats.critical_periods += 1;
                        stats.critical_misses += u64::from(!detected);
                    }
                    dev.critical = None;
                } else if dev.x_hat == 1 {
                    dev.critical = Some(true);
                }
            } else if dev.x == 1 && prev_pair_00 && slot > 0 {
                dev.critical = Some(dev.x_hat == 1);
            }
            // Periods opened before measurement never count.
            if !measuring && dev.critical.is_some() && slot + 1 == config.warmup_slots {
                dev.critical = None;
            }

            if track {
                let k = tracked_slot[d];
                stats.aoii_sum += dev.lambda;
                stats.per_device_aoii_sum[k] += dev.lambda;
                let f = power(dev.lambda, penalty.alpha(dev.x));
                stats.penalty_sum += f;
                stats.per_device_penalty_sum[k] += f;
                let bt = &mut stats.batches[batch];
                bt.0 += 1;
                bt.1 += dev.lambda;
                bt.2 += f;
                stats.occupancy[estimate_state_index(dev.x, dev.x_hat, dev.b, e)] += 1;
            }
        }

        if measuring {
            if config.joint_occupancy {
                let mut profile = vec![0usize; 2 * w];
                for dev in &devices[1..] {
                    profile[category_index(dev.x, dev.b, e)] += 1;
                }
                let d0 = &devices[0];
                *joint.entry((d0.x, d0.x_hat, d0.b, profile)).or_default() += 1;
            }
            if let Some(out) = trace.as_deref_mut() {
                for (d, dev) in devices.iter().enumerate() {
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        slot - config.warmup_slots,
                        d,
                        dev.x,
                        dev.x_hat,
                        dev.b,
                        u8::from(transmitted[d]),
                        u8::from(decoded == Some(d)),
                        dev.lambda
                    )?;
                }
            }
        }
    }
    if config.joint_occupancy {
        stats.joint_occupancy = Some(joint_from_map(joint));
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{IdealDecoding, NormalApproximation};
    use crate::model::StrategyClass;

    fn small() -> Scenario {
        Scenario {
            num_devices: 4,
            battery_capacity: 2,
            q01: 0.05,
            q10: 0.08,
            gamma0: 0.2,
            gamma1: 0.3,
            slot_channel_uses: 100,
            rate_bits: 0.8,
            noise_variance: 0.01,
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let s = small();
        let pi = Strategy::constant(StrategyClass::Hybrid, 2, 0.3);
        let cfg = SimConfig { warmup_slots: 100, ..SimConfig::new(5_000, 42) };
        let a = run(&s, &pi, &NormalApproximation, &PenaltySpec::AOII, &cfg).unwrap();
        let b = run(&s, &pi, &NormalApproximation, &PenaltySpec::AOII, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = run(&s, &pi, &NormalApproximation, &PenaltySpec::AOII, &SimConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.aoii_sum, c.aoii_sum);
    }

    #[test]
    fn silent_devices_never_deliver() {
        let s = small();
        let pi = Strategy::silent(StrategyClass::Hybrid, 2);
        let cfg = SimConfig { warmup_slots: 0, ..SimConfig::new(20_000, 1) };
        let st = run(&s, &pi, &IdealDecoding, &PenaltySpec::AOII, &cfg).unwrap();
        assert_eq!(st.transmissions, 0);
        assert_eq!(st.decodes, 0);
        let mep = empirical_mep(&st).unwrap();
        assert_eq!(mep.probability, 1.0);
    }

    #[test]
    fn trace_rows_and_energy_bounds() {
        let s = small();
        let pi = Strategy::constant(StrategyClass::Random, 2, 0.5);
        let cfg = SimConfig { warmup_slots: 10, ..SimConfig::new(200, 3) };
        let mut buf = Vec::new();
        let st = run_traced(&s, &pi, &IdealDecoding, &PenaltySpec::AOII, &cfg, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<Vec<u64>> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 200 * 4);
        let mut decodes_per_slot = BTreeMap::new();
        for r in &rows {
            assert!(r[4] <= 2);
            if r[5] == 1 {
                assert!(r[4] <= 1, "transmitter ends the slot with at most one unit");
            }
            assert_eq!(r[7] > 0, r[2] != r[3]);
            *decodes_per_slot.entry(r[0]).or_insert(0) += r[6];
        }
        assert!(decodes_per_slot.values().all(|&n| n <= 1));
        assert_eq!(decodes_per_slot.values().sum::<u64>(), st.decodes);
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson_interval(30, 100, 0.05);
        assert!(lo < 0.3 && 0.3 < hi);
        let (lo, hi) = wilson_interval(100, 100, 0.05);
        assert!(lo > 0.95 && hi == 1.0);
    }

    #[test]
    fn merge_pools_counts() {
        let s = small();
        let pi = Strategy::constant(StrategyClass::Hybrid, 2, 0.3);
        let cfg = SimConfig { warmup_slots: 50, ..SimConfig::new(1_000, 5) };
        let pooled = run_replications(&s, &pi, &NormalApproximation, &PenaltySpec::AOII, &cfg, 3).unwrap();
        assert_eq!(pooled.slots, 3_000);
        assert_eq!(pooled.batches.len(), 3 * cfg.batches);
        assert_eq!(pooled.occupancy.iter().sum::<u64>(), 3_000 * 4);

        let mut manual: Option<SimStats> = None;
        for r in 0..3 {
            let c = SimConfig { seed: replication_seed(5, r), ..cfg.clone() };
            let st = run(&s, &pi, &NormalApproximation, &PenaltySpec::AOII, &c).unwrap();
            match &mut manual {
                None => manual = Some(st),
                Some(m) => m.merge(&st).unwrap(),
            }
        }
        let mut manual = manual.unwrap();
        manual.seed = 5;
        assert_eq!(manual, pooled);
    }
}
