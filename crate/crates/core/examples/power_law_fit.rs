//! Fits a power law to one column of a CSV written by the command-line tool.

use dephase_walk::analysis::fit_power_law;
use dephase_walk::cli::read_series;

fn main() -> dephase_walk::Result<()> {
    let mut args = std::env::args().skip(1);
    let (Some(path), Some(column)) = (args.next(), args.next()) else {
        eprintln!("usage: power_law_fit <csv> <column> [lo hi]");
        std::process::exit(1);
    };
    let series = read_series(path.as_ref(), &column)?;
    let lo = args.next().and_then(|s| s.parse().ok()).unwrap_or(series.range().0);
    let hi = args.next().and_then(|s| s.parse().ok()).unwrap_or(series.range().1);
    let fit = fit_power_law(&series, (lo, hi))?;
    println!("{}", serde_json::to_string_pretty(&fit).unwrap());
    Ok(())
}
