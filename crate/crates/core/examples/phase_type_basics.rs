// Discrete phase-type laws: PMF, factorial and raw moments, conditioning.

use aoii_aloha::markov::PhaseType;
use nalgebra::{DMatrix, DVector};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let geo = PhaseType::geometric(0.5)?;
    println!("geometric(0.5): P[W=3] = {}, E[W] = {}", geo.pmf(3)?, geo.mean());

    let t = DMatrix::from_row_slice(2, 2, &[0.6, 0.2, 0.1, 0.7]);
    let a = DVector::from_vec(vec![0.2, 0.2]);
    let ph = PhaseType::new(DVector::from_vec(vec![0.3, 0.7]), t, a)?;
    for m in 1..=3 {
        println!("E[W^{m}] = {:.6}", ph.moment(m));
    }
    println!("E[W(W-1)] = {:.6}", ph.factorial_moment(2));
    let from_first = ph.conditional(0)?;
    println!("E[W | start in phase 0] = {:.6}", from_first.mean());
    let head: Vec<String> = (1..=5).map(|w| format!("{:.4}", ph.pmf(w).unwrap())).collect();
    println!("P[W = 1..5] = {}", head.join(" "));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
