//! The classical master equation integrated with RK4 against its closed form.

use dephase_walk::master::{analytic_classical_probability, evolve_master, MasterConfig};

fn main() -> dephase_walk::Result<()> {
    let hop_rate = 0.5;
    let cfg = MasterConfig::new(hop_rate, 40.0)?;
    let mut rows = Vec::new();
    let (p, monitor) = evolve_master(&cfg, |t, p| {
        let jet = hop_rate * t;
        if (jet - jet.round()).abs() < 1e-9 && jet.round() as i64 % 4 == 0 {
            rows.push((t, p.second_moment(), p.total()));
        }
    });
    println!("{:>6} {:>12} {:>10} {:>18}", "t", "<n²>", "2J_e t", "total");
    for (t, n2, total) in rows {
        println!("{t:>6.1} {n2:>12.8} {:>10.4} {total:>18.15}", 2.0 * hop_rate * t);
    }
    let worst = p
        .sites()
        .map(|n| (p.get(n) - analytic_classical_probability(n, hop_rate, cfg.t_max)).abs())
        .fold(0.0, f64::max);
    println!("\nmax |P - I_n(2J_e t)e^(-2J_e t)| at t = {}: {worst:.2e}", cfg.t_max);
    println!("boundary flagged: {}", monitor.is_flagged());
    Ok(())
}
