//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use bytes::Bytes;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dbnode::bench::{
    bench_latency, bench_links, BandwidthProfile, LatencyBench, LatencyRow, DEFAULT_SIZES_MB,
};
use dbnode::cli;
use dbnode::cluster::{Cluster, ClusterError};
use dbnode::config::ClusterConfig;
use dbnode::erasure::{encode_stripe, CodeParams, Constraint, ReedSolomon};
use dbnode::hashslot::{apportion, Layer, SlotTable, SLOT_COUNT};
use dbnode::ledger::{AccessPolicy, LedgerError};
use dbnode::node::Fetch;
use dbnode::placement::LINK_RECORD_BYTES;
use dbnode::protocol::{encode_file, read_file, write_file, Client, ReadOptions, WriteOptions};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn random_bytes(rng: &mut ChaCha8Rng, len: usize) -> Bytes {
    let mut v = vec![0u8; len];
    rng.fill_bytes(&mut v);
    v.into()
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

fn erasure_correctness() -> Outcome {
    let start = Instant::now();
    let codec = ReedSolomon::new(6, 3).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sets = subsets(6, 3);
    ensure(sets.len() == 20, "expected 20 subsets")?;
    for s in 0..100 {
        let data: Vec<Bytes> = (0..3).map(|_| random_bytes(&mut rng, 16 * 1024)).collect();
        let stripe = encode_stripe(&codec, s, data.clone()).map_err(|e| e.to_string())?;
        for set in &sets {
            let picked = set
                .iter()
                .map(|&i| (i, stripe.chunks[i].data.clone()))
                .collect();
            let got = codec.decode(picked).map_err(|e| e.to_string())?;
            ensure(
                got == data,
                format!("stripe {s} subset {set:?} decoded wrongly"),
            )?;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 10.0, format!("took {elapsed:.1} s"))?;
    Ok(format!("100 stripes x 20 subsets exact in {elapsed:.2} s"))
}

fn constraint_validator() -> Outcome {
    let base = CodeParams::three_by_two();
    ensure(
        base.validate().map_err(|e| e.to_string())?.is_ok(),
        "(6,3) configuration on 3x2 rejected",
    )?;
    let cases: [(&str, CodeParams, Constraint); 5] = [
        (
            "n=7",
            CodeParams {
                total_chunks: 7,
                ..base
            },
            Constraint::Layout,
        ),
        ("l=4", CodeParams { groups: 4, ..base }, Constraint::Layout),
        (
            "x=4",
            CodeParams {
                node_failures: 4,
                ..base
            },
            Constraint::NodeTolerance,
        ),
        (
            "k=4",
            CodeParams {
                data_chunks: 4,
                ..base
            },
            Constraint::NodeTolerance,
        ),
        (
            "y=2",
            CodeParams {
                org_failures: 2,
                ..base
            },
            Constraint::OrgTolerance,
        ),
    ];
    let mut named = Vec::new();
    for (label, params, expected) in cases {
        let report = params.validate().map_err(|e| format!("{label}: {e}"))?;
        ensure(
            report.violations.len() == 1 && report.violates(expected),
            format!("{label}: got {report}"),
        )?;
        named.push(format!("{label} -> {}", report.violations[0].constraint));
    }
    Ok(named.join("; "))
}

fn failure_tolerance() -> Outcome {
    let start = Instant::now();
    let mut config = ClusterConfig::three_by_two();
    config.storage.chunk_size = 16 * 1024;
    let mut cluster = Cluster::new(config).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let writer = Client::new("alice", "org1");
    let mut files = Vec::new();
    for i in 0..10 {
        let len = if i == 0 { 0 } else { rng.gen_range(1..250_000) };
        let data = random_bytes(&mut rng, len);
        let r = write_file(
            &mut cluster,
            &writer,
            data.clone(),
            &WriteOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        files.push((r.fid, data));
    }
    let nodes: Vec<String> = cluster.nodes().map(|n| n.id().to_owned()).collect();
    let mut kill_sets: Vec<Vec<String>> = subsets(nodes.len(), 3)
        .into_iter()
        .map(|s| s.into_iter().map(|i| nodes[i].clone()).collect())
        .collect();
    ensure(kill_sets.len() == 20, "expected 20 three-node kill sets")?;
    for org in cluster.orgs().values() {
        kill_sets.push(org.nodes.clone());
    }
    let reader = Client::new("bob", "org2");
    for set in &kill_sets {
        for n in set {
            cluster.kill_node(n).map_err(|e| e.to_string())?;
        }
        for (fid, data) in &files {
            let out = read_file(&mut cluster, &reader, fid, &ReadOptions::default())
                .map_err(|e| format!("kill {set:?}: {e}"))?;
            ensure(out.data == *data, format!("kill {set:?}: content differs"))?;
        }
        cluster.revive_all();
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 120.0, format!("took {elapsed:.1} s"))?;
    Ok(format!(
        "{} kill sets x 10 files byte-identical in {elapsed:.1} s",
        kill_sets.len()
    ))
}

/// Link count of one stripe under a model where every chunk picks its
/// organization with probability proportional to slot share and its node
/// uniformly: each organization keeps at most `cap` chunks on distinct
/// designated nodes and every other chunk needs a link.
fn oracle_total_links(seed: u64, stripes: usize) -> usize {
    let org_slots = [5462u32, 5461, 5461];
    let (n, cap, per_org) = (6, 2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut links = 0;
    for _ in 0..stripes {
        let mut designated: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); 3];
        for _ in 0..n {
            let mut s = rng.gen_range(0..SLOT_COUNT as u32);
            let org = org_slots
                .iter()
                .position(|&c| {
                    if s < c {
                        true
                    } else {
                        s -= c;
                        false
                    }
                })
                .unwrap();
            designated[org].insert(rng.gen_range(0..per_org));
        }
        let kept: usize = designated.iter().map(|d| d.len().min(cap)).sum();
        links += n - kept;
    }
    links
}

fn link_overhead() -> Outcome {
    let rows = bench_links(ClusterConfig::three_by_two(), 1000, 100).map_err(|e| e.to_string())?;
    let last = *rows.last().ok_or("no rows")?;
    let half = rows.iter().find(|r| r.chunks >= 500).ok_or("no 500 row")?;
    ensure(last.chunks >= 1000, "fewer than 1000 chunks stored")?;
    ensure(
        (50..=150).contains(&last.max_links),
        format!("max links {} outside [50, 150]", last.max_links),
    )?;
    ensure(
        (150..=450).contains(&last.total_links),
        format!("total links {} outside [150, 450]", last.total_links),
    )?;
    let stripes = last.chunks / 6;
    let samples: Vec<f64> = (0..50)
        .map(|s| oracle_total_links(1000 + s, stripes) as f64)
        .collect();
    let mean = samples.iter().sum::<f64>() / 50.0;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 49.0).sqrt();
    let z = (last.total_links as f64 - mean) / sd;
    ensure(
        z.abs() < 4.0,
        format!("total {} vs oracle {mean:.1}±{sd:.1}", last.total_links),
    )?;
    let ratio =
        half.total_links as f64 / last.total_links as f64 * last.chunks as f64 / half.chunks as f64;
    ensure(
        (0.75..=1.25).contains(&ratio),
        format!("links not linear in chunks: normalized ratio {ratio:.2}"),
    )?;
    let data_bytes = (stripes * 3 * 1_000_000) as f64;
    let overhead = last.total_links as f64 * LINK_RECORD_BYTES as f64 / data_bytes;
    ensure(
        overhead <= 1e-4,
        format!("link overhead {:.4} per mille", overhead * 1e3),
    )?;
    Ok(format!(
        "{} chunks: max {} total {} (oracle {mean:.1}±{sd:.1}, z={z:.2}); {} at {}; overhead {:.3} per mille",
        last.chunks,
        last.max_links,
        last.total_links,
        half.total_links,
        half.chunks,
        overhead * 1e3
    ))
}

fn link_accounting() -> Outcome {
    let mut cluster = Cluster::new(ClusterConfig::three_by_two()).map_err(|e| e.to_string())?;
    let data = random_bytes(&mut ChaCha8Rng::seed_from_u64(5), 500_000_000);
    let r = write_file(
        &mut cluster,
        &Client::new("alice", "org1"),
        data,
        &WriteOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let records: Vec<u64> = cluster
        .nodes()
        .flat_map(|n| n.links().map(|l| l.size_bytes()))
        .collect();
    ensure(
        records.iter().all(|&b| b == 128),
        "a link is not metered at 128 bytes",
    )?;
    ensure(
        records.len() == r.links_created,
        "receipt and stored links disagree",
    )?;
    ensure(
        r.link_bytes == records.iter().sum::<u64>(),
        "link bytes not summed from records",
    )?;
    ensure(
        r.link_bytes <= 76_800,
        format!("{} link bytes", r.link_bytes),
    )?;
    Ok(format!(
        "{} links x 128 B = {} B for 500 MB ({:.4} per mille)",
        r.links_created,
        r.link_bytes,
        r.link_bytes as f64 / 5e8 * 1e3
    ))
}

fn latency(rows: &[LatencyRow], size: u64, system: &str, op: &str) -> f64 {
    rows.iter()
        .find(|r| r.size_mb == size && r.system == system && r.op == op)
        .map(|r| r.mean_latency)
        .expect("row present")
}

fn run_latency(profile: BandwidthProfile) -> Result<Vec<LatencyRow>, String> {
    let bench = LatencyBench::new(profile);
    bench_latency(&bench, bench.config()).map_err(|e| e.to_string())
}

fn stepped_robustness(uniform: &[LatencyRow], stepped: &[LatencyRow]) -> Outcome {
    let mut worst: f64 = 0.0;
    for size in DEFAULT_SIZES_MB {
        let (u, s) = (
            latency(uniform, size, "dbnode", "read"),
            latency(stepped, size, "dbnode", "read"),
        );
        let diff = (s - u).abs() / u;
        ensure(
            diff < 0.10,
            format!("{size} MB: dbnode read {u:.4} s vs {s:.4} s"),
        )?;
        worst = worst.max(diff);
    }
    let (u, s) = (
        latency(uniform, 300, "baseline", "read"),
        latency(stepped, 300, "baseline", "read"),
    );
    let degradation = s / u - 1.0;
    ensure(
        degradation > 0.20,
        format!("baseline degraded only {:.1}%", degradation * 100.0),
    )?;
    Ok(format!(
        "dbnode read within {:.1}% at every size; baseline 300 MB read +{:.1}%",
        worst * 100.0,
        degradation * 100.0
    ))
}

fn write_read_trend(uniform: &[LatencyRow]) -> Outcome {
    for size in DEFAULT_SIZES_MB {
        let (d, b) = (
            latency(uniform, size, "dbnode", "write"),
            latency(uniform, size, "baseline", "write"),
        );
        ensure(
            d > b,
            format!("{size} MB: dbnode write {d:.4} s <= baseline {b:.4} s"),
        )?;
    }
    let mut ratios = Vec::new();
    for size in [100, 200, 300] {
        let (d, b) = (
            latency(uniform, size, "dbnode", "read"),
            latency(uniform, size, "baseline", "read"),
        );
        ensure(
            d < b,
            format!("{size} MB: dbnode read {d:.4} s >= baseline {b:.4} s"),
        )?;
        ratios.push(format!("{size} MB {:.2}x", b / d));
    }
    Ok(format!(
        "writes slower at all sizes; read speedup {}",
        ratios.join(", ")
    ))
}

fn token_lifecycle() -> Outcome {
    let mut config = ClusterConfig::three_by_two();
    config.storage.chunk_size = 10_000;
    let mut cluster = Cluster::new(config).map_err(|e| e.to_string())?;
    let data = random_bytes(&mut ChaCha8Rng::seed_from_u64(8), 95_000);
    let opts = WriteOptions {
        policy: AccessPolicy::open().permit(["bob"]).with_tokens(3),
        ..Default::default()
    };
    let r = write_file(
        &mut cluster,
        &Client::new("alice", "org1"),
        data.clone(),
        &opts,
    )
    .map_err(|e| e.to_string())?;
    let bob = Client::new("bob", "org3");
    for i in 1..=3 {
        let out = read_file(&mut cluster, &bob, &r.fid, &ReadOptions::default())
            .map_err(|e| format!("read {i}: {e}"))?;
        ensure(out.data == data, format!("read {i} differs"))?;
    }
    match read_file(&mut cluster, &bob, &r.fid, &ReadOptions::default()) {
        Err(ClusterError::Ledger(LedgerError::NotFound)) => {}
        other => return Err(format!("fourth read: {:?}", other.map(|o| o.data.len()))),
    }
    let (stripes, _) = encode_file(&cluster, &data).map_err(|e| e.to_string())?;
    let mut fetches = 0;
    for chunk in stripes.iter().flat_map(|s| &s.chunks) {
        for node in cluster.nodes() {
            ensure(
                node.fetch_chunk(&chunk.hash) == Fetch::NotFound,
                format!("{} still serves a chunk", node.id()),
            )?;
            fetches += 1;
        }
    }
    Ok(format!(
        "3 reads, 4th not found, {fetches} chunk fetches all not found"
    ))
}

fn determinism() -> Outcome {
    let args = [
        "dbnode",
        "bench-latency",
        "--stepped",
        "--sizes",
        "10,30",
        "--trials",
        "4",
        "--seed",
        "9",
    ];
    let run = || {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = cli::run(args, &mut out, &mut err);
        (code, out)
    };
    let (c1, a) = run();
    let (c2, b) = run();
    ensure(c1 == 0 && c2 == 0, "bench-latency failed")?;
    ensure(a == b, "CSV differs between runs")?;
    Ok(format!("two runs produced identical {}-byte CSV", a.len()))
}

fn slot_apportionment() -> Outcome {
    let weights: BTreeMap<String, u64> = [("a", 400), ("b", 800), ("c", 1200), ("d", 1600)]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect();
    let table = SlotTable::allocate(Layer::Inter, &weights).map_err(|e| e.to_string())?;
    let counts: Vec<u16> = weights.keys().map(|k| table.slot_count(k)).collect();
    ensure(
        counts == [1638, 3277, 4915, 6554],
        format!("got {counts:?}"),
    )?;
    ensure(
        counts.iter().map(|&c| c as u32).sum::<u32>() == 16_384,
        "sum is not 16384",
    )?;
    let mut runner = TestRunner::new(PropConfig {
        cases: 1000,
        failure_persistence: None,
        ..PropConfig::default()
    });
    runner
        .run(&prop::collection::vec(1u64..=1_000_000_000, 1..64), |w| {
            let sum: u32 = apportion(&w).iter().map(|&c| c as u32).sum();
            prop_assert_eq!(sum, 16_384);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "{counts:?}; 1000 random weight vectors sum to 16384"
    ))
}

fn main() {
    let mut failed = 0;
    let mut report = |n: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {why}");
            }
        }
    };
    report(1, "erasure correctness", &mut erasure_correctness);
    report(2, "constraint validator", &mut constraint_validator);
    report(3, "failure tolerance", &mut failure_tolerance);
    report(4, "link overhead", &mut link_overhead);
    report(5, "link size accounting", &mut link_accounting);
    let uniform = run_latency(BandwidthProfile::Uniform);
    let stepped = run_latency(BandwidthProfile::Stepped);
    report(6, "stepped bandwidth robustness", &mut || {
        stepped_robustness(uniform.as_deref()?, stepped.as_deref()?)
    });
    report(7, "write/read trend", &mut || {
        write_read_trend(uniform.as_deref()?)
    });
    report(8, "token lifecycle", &mut token_lifecycle);
    report(9, "determinism", &mut determinism);
    report(10, "slot apportionment", &mut slot_apportionment);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
