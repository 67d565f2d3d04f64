//! Reads under node and organization failures, up to the point where a
//! stripe can no longer be decoded.

use dbnode::cluster::Cluster;
use dbnode::config::ClusterConfig;
use dbnode::protocol::{
    read_file, write_file, Client, Fault, FaultAction, ReadOptions, WriteOptions,
};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut config = ClusterConfig::three_by_two();
    config.storage.chunk_size = 50_000;
    let mut cluster = Cluster::new(config).unwrap();
    let mut data = vec![0u8; 600_000];
    ChaCha8Rng::seed_from_u64(1).fill_bytes(&mut data);
    let data = bytes::Bytes::from(data);
    let client = Client::new("alice", "org1");
    let fid = write_file(&mut cluster, &client, data, &WriteOptions::default())
        .unwrap()
        .fid;
    let read = |cluster: &mut Cluster, label: &str, faults: Vec<Fault>| {
        let opts = ReadOptions {
            faults,
            ..Default::default()
        };
        match read_file(cluster, &client, &fid, &opts) {
            Ok(out) => println!("{label:<28} ok in {:.2} ms", out.latency * 1e3),
            Err(e) => println!("{label:<28} {e}"),
        }
    };

    read(&mut cluster, "healthy", vec![]);
    cluster.kill_org("org3").unwrap();
    read(&mut cluster, "org3 down", vec![]);
    cluster.revive_all();
    let mid_read = ["org1-n1", "org2-n2", "org3-n1"]
        .map(|n| Fault {
            at: 0.002,
            node: n.into(),
            action: FaultAction::Kill,
        })
        .to_vec();
    read(&mut cluster, "three nodes die mid-read", mid_read);
    cluster.kill_node("org1-n2").unwrap();
    read(&mut cluster, "four nodes down", vec![]);
}
