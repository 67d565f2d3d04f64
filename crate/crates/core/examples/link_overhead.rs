//! Links accumulated as random chunks are stored on three organizations of
//! two nodes.
//!
//! `cargo run --release --example link_overhead -- [max_chunks] [step] [seed]`

use dbnode::bench::{bench_links, links_result};
use dbnode::config::ClusterConfig;

fn main() {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("numeric argument"))
        .collect();
    let max = args.first().copied().unwrap_or(1000);
    let step = args.get(1).copied().unwrap_or(100);
    let mut config = ClusterConfig::three_by_two();
    config.seed = args.get(2).copied().unwrap_or(0) as u64;
    let rows = bench_links(config, max, step).expect("experiment runs");
    print!("{}", links_result(&rows, max, step).to_csv());
}
