//! Write/read latency of DBNode against the single-copy baseline.
//!
//! `cargo run --release --example latency_experiment -- [stepped] [trials] [sizes_mb...]`

use dbnode::bench::{bench_latency, latency_result, BandwidthProfile, LatencyBench};

fn main() {
    let mut args: Vec<String> = std::env::args().skip(1).collect();
    let profile = if args.first().map(String::as_str) == Some("stepped") {
        args.remove(0);
        BandwidthProfile::Stepped
    } else {
        BandwidthProfile::Uniform
    };
    let mut bench = LatencyBench::new(profile);
    if !args.is_empty() {
        bench.trials = args.remove(0).parse().expect("trials");
    }
    if !args.is_empty() {
        bench.sizes_mb = args
            .iter()
            .map(|s| s.parse().expect("size in MB"))
            .collect();
    }
    let rows = bench_latency(&bench, bench.config()).expect("experiment runs");
    print!("{}", latency_result(&bench, &rows).to_csv());
}
