//! Transition probabilities |U_{n,l}(Δt)|² of the exact kernel against their
//! second-order expansion, for successively halved kick intervals.

use dephase_walk::coherent::UnitaryKernel;

fn residual(dt: f64) -> dephase_walk::Result<f64> {
    let k = UnitaryKernel::with_default_tol(1.0, dt)?;
    Ok((0..=k.cutoff() as i64)
        .map(|l| {
            let form = match l {
                0 => 1.0 - 2.0 * dt * dt,
                1 => dt * dt,
                _ => 0.0,
            };
            (k.tap(l).norm_sqr() - form).abs()
        })
        .fold(0.0, f64::max))
}

fn main() -> dephase_walk::Result<()> {
    println!("{:>8} {:>14} {:>10}", "JΔt", "residual", "ratio");
    let mut dt = 0.8;
    let mut prev = residual(dt)?;
    println!("{dt:>8.4} {prev:>14.6e}");
    for _ in 0..6 {
        dt /= 2.0;
        let r = residual(dt)?;
        println!("{dt:>8.4} {r:>14.6e} {:>10.4}", prev / r);
        prev = r;
    }
    Ok(())
}
