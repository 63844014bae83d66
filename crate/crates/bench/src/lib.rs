//! Shared setup for the solver benchmarks.

use pmsdp::catalog::{benchmark_cases, BenchmarkCase};

/// Benchmark cases, optionally restricted by the `PMSDP_BENCH_CASES`
/// comma separated list.
pub fn selected_cases() -> Vec<BenchmarkCase> {
    let all = benchmark_cases().expect("benchmark cases build");
    match std::env::var("PMSDP_BENCH_CASES") {
        Ok(list) => {
            let names: Vec<&str> = list.split(',').map(str::trim).collect();
            all.into_iter().filter(|c| names.contains(&c.name.as_str())).collect()
        }
        Err(_) => all,
    }
}
