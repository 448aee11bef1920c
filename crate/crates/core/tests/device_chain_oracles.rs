mod common;

use aoii_aloha::channel::IdealDecoding;
use aoii_aloha::channel::NormalApproximation;
use aoii_aloha::device_chain::{
    category_index, compositions, multinomial_pmf, ExactJointChain, FullChainG, ProcessBatteryChain, ProfileChain,
};
use aoii_aloha::markov::stationary_distribution;
use aoii_aloha::model::{Scenario, Strategy, StrategyClass};
use aoii_aloha::Error;
use common::{aggregate, chi_square_ok, simulated_joint_occupancy, tiny_scenario, varied_strategy, z_scores};

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

#[test]
fn profile_set_has_composition_count() {
    for others in 0..=4 {
        for e in 1..=2 {
            let k = 2 * e + 2;
            assert_eq!(compositions(others, k).len(), binomial(others + k - 1, k - 1));
        }
    }
}

#[test]
fn profile_chain_rows_sum_to_one_and_law_is_multinomial() {
    for e in 1..=2 {
        for u in 2..=4 {
            let s = Scenario { battery_capacity: e, ..tiny_scenario(u) };
            let pi = varied_strategy(e);
            let chain = ProfileChain::build(&s, &pi).unwrap();
            let m = chain.matrix.matrix();
            for r in 0..chain.len() {
                assert!((m.row(r).sum() - 1.0).abs() < 1e-12);
            }
            let nu = ProcessBatteryChain::build(&s, &pi).unwrap().nu;
            let stat = stationary_distribution(&chain.matrix).unwrap();
            for (i, prof) in chain.profiles.iter().enumerate() {
                assert!((stat[i] - multinomial_pmf(prof, &nu)).abs() < 1e-9, "E={e} U={u} {prof:?}");
            }
        }
    }
}

#[test]
fn full_chain_marginalizes_to_nu_and_multinomial() {
    for u in 2..=4 {
        let s = tiny_scenario(u);
        let pi = varied_strategy(1);
        let g = FullChainG::build(&s, &pi, &NormalApproximation).unwrap();
        let p = stationary_distribution(&g.matrix).unwrap();
        let nu = ProcessBatteryChain::build(&s, &pi).unwrap().nu;
        let mut xb = vec![0.0; 4];
        let mut xbl = vec![0.0; 4 * g.profiles.len()];
        for (i, &v) in p.iter().enumerate() {
            let (x, _, b, l) = g.state(i);
            xb[category_index(x, b, 1)] += v;
            xbl[category_index(x, b, 1) * g.profiles.len() + l] += v;
        }
        for c in 0..4 {
            assert!((xb[c] - nu[c]).abs() < 1e-9);
        }
        for c in 0..4 {
            for (l, prof) in g.profiles.profiles.iter().enumerate() {
                let want = nu[c] * multinomial_pmf(prof, &nu);
                assert!((xbl[c * g.profiles.len() + l] - want).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn exact_and_full_chain_share_the_process_battery_profile_marginal() {
    let s = tiny_scenario(3);
    let pi = varied_strategy(1);
    let g = FullChainG::build(&s, &pi, &NormalApproximation).unwrap();
    let x = ExactJointChain::build(&s, &pi, &NormalApproximation).unwrap();
    let pg = stationary_distribution(&g.matrix).unwrap();
    let px = stationary_distribution(&x.matrix).unwrap();
    let nl = g.profiles.len();
    let marg = |p: &[f64], state: &dyn Fn(usize) -> (usize, usize, usize, usize)| {
        let mut out = vec![0.0; 4 * nl];
        for (i, &v) in p.iter().enumerate() {
            let (x, _, b, l) = state(i);
            out[category_index(x, b, 1) * nl + l] += v;
        }
        out
    };
    let a = marg(&pg, &|i| g.state(i));
    let b = marg(&px, &|i| x.state(i));
    for i in 0..a.len() {
        assert!((a[i] - b[i]).abs() < 1e-9);
    }
}

#[test]
fn full_chain_guards_its_size() {
    let s = Scenario { battery_capacity: 2, ..tiny_scenario(8) };
    let pi = varied_strategy(2);
    assert!(matches!(FullChainG::build(&s, &pi, &IdealDecoding), Err(Error::SizeGuard(_))));
}

#[test]
fn simulated_process_battery_profile_occupancy_matches_full_chain() {
    let s = tiny_scenario(3);
    let pi = varied_strategy(1);
    let g = FullChainG::build(&s, &pi, &NormalApproximation).unwrap();
    let p = stationary_distribution(&g.matrix).unwrap();
    let nl = g.profiles.len();
    let reps = 20;
    let samples = simulated_joint_occupancy(&s, &pi, &NormalApproximation, &g.profiles, reps, 200_000, 7);
    let cell = |i: usize| {
        let (x, _, b, l) = g.state(i);
        category_index(x, b, 1) * nl + l
    };
    let sim = aggregate(&samples, 4 * nl, cell);
    let mut want = vec![0.0; 4 * nl];
    for (i, &v) in p.iter().enumerate() {
        want[cell(i)] += v;
    }
    let z = z_scores(&sim, &want, 1e-4);
    let (ok, stat, limit) = chi_square_ok(&z, reps as usize);
    assert!(ok, "chi-square {stat:.1} > {limit:.1}");
}

#[test]
fn simulated_joint_occupancy_matches_exact_chain() {
    let s = tiny_scenario(3);
    let pi = Strategy::constant(StrategyClass::Hybrid, 1, 0.6);
    let chain = ExactJointChain::build(&s, &pi, &IdealDecoding).unwrap();
    let p = stationary_distribution(&chain.matrix).unwrap();
    let reps = 20;
    let sim = simulated_joint_occupancy(&s, &pi, &IdealDecoding, &chain.profiles, reps, 200_000, 9);
    let z = z_scores(&sim, &p, 1e-4);
    let (ok, stat, limit) = chi_square_ok(&z, reps as usize);
    assert!(ok, "chi-square {stat:.1} > {limit:.1}");
}

#[test]
fn process_battery_chain_respects_label_symmetry() {
    let s = Scenario { q01: 0.15, q10: 0.15, gamma0: 0.4, gamma1: 0.4, ..tiny_scenario(2) };
    let mut pi = Strategy::silent(StrategyClass::Hybrid, 1);
    pi.pi = vec![vec![0.0, 0.3], vec![0.0, 0.7], vec![0.0, 0.7], vec![0.0, 0.3]];
    let nu = ProcessBatteryChain::build(&s, &pi).unwrap().nu;
    for b in 0..=1 {
        assert!((nu[category_index(0, b, 1)] - nu[category_index(1, b, 1)]).abs() < 1e-12);
    }
}
