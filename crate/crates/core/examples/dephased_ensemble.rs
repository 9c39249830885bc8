//! Monte Carlo of the walk under random phase kicks: <n²> diffuses while
//! the ensemble average of <n>² grows much more slowly.

use dephase_walk::dephasing::{DephasedWalk, KickSchedule};
use dephase_walk::ensemble::SeedPolicy;

fn main() -> dephase_walk::Result<()> {
    let n_traj = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let walk = DephasedWalk::new(1.0, KickSchedule::new(0.5, 50.0, 10)?)?;
    let j_e = walk.effective_hop_rate();
    let acc = walk.run_ensemble(n_traj, SeedPolicy::new(42), None)?;
    println!("J_e = {j_e}, {} trajectories, {} invalid", acc.total(), acc.invalid());
    println!("{:>6} {:>10} {:>10} {:>16} {:>12}", "t", "<n²>", "2J_e t", "<n>²", "<n>");
    let (n2, com2, com2e, com) = (acc.mean_n2(), acc.mean_com2(), acc.mean_com2_stderr(), acc.mean_com());
    for (i, t) in acc.times().iter().enumerate() {
        println!(
            "{t:>6.1} {:>10.3} {:>10.3} {:>9.4} ± {:<5.3} {:>+12.4}",
            n2[i],
            2.0 * j_e * t,
            com2[i],
            com2e[i],
            com[i]
        );
    }
    Ok(())
}
