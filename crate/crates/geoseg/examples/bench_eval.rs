//! Repeated landmark runs on the disk fixture with the summary the bench
//! subcommand prints. Run count is the first argument.

use geoseg::cli::{bench, bench_csv, BenchProtocol};

fn main() -> geoseg::Result<()> {
    let runs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10usize);
    let (per_run, summary) = bench(&BenchProtocol { runs, ..Default::default() })?;
    for r in &per_run {
        println!("{r:?}");
    }
    print!("{}", bench_csv("disk", &summary));
    Ok(())
}
