// Exact chains at tiny scale: the profile chain, the full chain and the
// coupled joint chain, against the reduced-chain analysis.

use aoii_aloha::channel::NormalApproximation;
use aoii_aloha::device_chain::{estimate_state_index, ExactJointChain, FullChainG, ProfileChain};
use aoii_aloha::markov::stationary_distribution;
use aoii_aloha::model::{Scenario, Strategy, StrategyClass};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let s = Scenario {
        num_devices: 3,
        battery_capacity: 1,
        q01: 0.1,
        q10: 0.2,
        gamma0: 0.3,
        gamma1: 0.5,
        slot_channel_uses: 100,
        rate_bits: 0.8,
        noise_variance: 0.002,
    };
    let pi = Strategy::constant(StrategyClass::Hybrid, 1, 0.6);
    let profiles = ProfileChain::build(&s, &pi)?;
    println!("{} profiles of {} other devices", profiles.len(), s.num_devices - 1);

    let reduced = aoii_aloha::analysis::build_reduced_chain(&s, &pi, &NormalApproximation)?;
    let g = FullChainG::build(&s, &pi, &NormalApproximation)?;
    let x = ExactJointChain::build(&s, &pi, &NormalApproximation)?;
    let pg = stationary_distribution(&g.matrix)?;
    let px = stationary_distribution(&x.matrix)?;
    let marginal = |p: &[f64], state: &dyn Fn(usize) -> (usize, usize, usize, usize)| {
        let mut out = vec![0.0; 8];
        for (i, v) in p.iter().enumerate() {
            let (a, b, c, _) = state(i);
            out[estimate_state_index(a, b, c, 1)] += v;
        }
        out
    };
    let mg = marginal(&pg, &|i| g.state(i));
    let mx = marginal(&px, &|i| x.state(i));
    println!("(x,x_hat,b)   reduced   full G    exact");
    for i in 0..8 {
        let (a, b, c) = aoii_aloha::device_chain::estimate_state(i, 1);
        println!("({a},{b},{c})       {:.5}   {:.5}   {:.5}", reduced.p[i], mg[i], mx[i]);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
