//! Ballistic spreading of a single excitation and its Bessel profile.

use dephase_walk::coherent::{analytic_coherent_probability, run_coherent};

fn main() -> dephase_walk::Result<()> {
    let hopping = 1.0;
    let run = run_coherent(hopping, 0.5, 20.0)?;
    println!("{:>6} {:>14} {:>14}", "t", "<n²>", "2J²t²");
    for (t, m) in run.times.iter().zip(&run.moments).step_by(8) {
        println!("{t:>6.1} {:>14.6} {:>14.6}", m.second, 2.0 * hopping * hopping * t * t);
    }

    let p = run.final_field.probabilities();
    println!("\nprofile at t = 20 (outer peaks near |n| = 2Jt)");
    for n in [0, 10, 20, 38, 40, 42] {
        println!(
            "n = {n:>3}: P = {:.6e}  J_n(40)² = {:.6e}",
            p.get(n),
            analytic_coherent_probability(n, hopping, 20.0)
        );
    }
    Ok(())
}
