//! Two coupled fiber loops: ballistic without phases, diffusive with
//! random phases, compared against the tight-binding mapping.

use dephase_walk::ensemble::SeedPolicy;
use dephase_walk::fiber::{Coupler, FiberLoop};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dephase_walk::Result<()> {
    let coupler = Coupler::from_fraction(0.8)?;
    let (j, j_e) = (coupler.equivalent_hopping(), coupler.effective_hop_rate());
    println!("β = {:.5}, J = {j:.5}, J_e = {j_e:.5}", coupler.beta());

    let coherent = FiberLoop::new(coupler, 400, false)?.run_trajectory(&mut ChaCha8Rng::seed_from_u64(0));
    let dephased = FiberLoop::new(coupler, 400, true)?.with_sample_stride(50)?;
    let acc = dephased.run_ensemble(1000, SeedPolicy::new(7), None)?;

    println!("\ncoherent: variance against 2J²m²");
    for i in (49..400).step_by(70) {
        let var = coherent.second_moment[i] - coherent.com[i].powi(2);
        println!("m = {:>4}: {var:>10.2} {:>10.2}", coherent.times[i], 2.0 * j * j * coherent.times[i].powi(2));
    }
    println!("\ndephased ({} trajectories): <n²> against 2J_e m", acc.total());
    for (i, m) in acc.times().iter().enumerate() {
        println!("m = {m:>4}: {:>8.3} {:>8.3}  <n>² = {:.4}", acc.mean_n2()[i], 2.0 * j_e * m, acc.mean_com2()[i]);
    }
    Ok(())
}
