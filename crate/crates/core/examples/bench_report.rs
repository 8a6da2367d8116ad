//! Per-stage timing and table memory, including the skip-reorder FFT.

use edge_nilm::bench::{run_bench, BenchReport, DEFAULT_REPS};
use edge_nilm::config::Config;

pub fn run_example(reps: usize) -> edge_nilm::Result<BenchReport> {
    let report = run_bench(&Config::default(), reps)?;
    let mut table = Vec::new();
    report.write_table(&mut table)?;
    print!("{}", String::from_utf8_lossy(&table));
    Ok(report)
}

fn main() -> edge_nilm::Result<()> {
    let reps = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(DEFAULT_REPS);
    run_example(reps).map(drop)
}
