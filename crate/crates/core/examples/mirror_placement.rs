//! Where the chunks of a few stripes land, and which need links.

use dbnode::cluster::Cluster;
use dbnode::config::ClusterConfig;
use dbnode::hash::Digest;
use dbnode::protocol::{encode_file, write_file, Client, WriteOptions};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut config = ClusterConfig::three_by_two();
    config.storage.chunk_size = 1024;
    let mut cluster = Cluster::new(config).unwrap();
    let client = Client::new("alice", "org1");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..4 {
        let mut data = vec![0u8; 3072];
        rng.fill_bytes(&mut data);
        let data = bytes::Bytes::from(data);
        write_file(
            &mut cluster,
            &client,
            data.clone(),
            &WriteOptions::default(),
        )
        .unwrap();
        let (stripes, _) = encode_file(&cluster, &data).unwrap();
        println!("stripe {i}:");
        for c in &stripes[0].chunks {
            let designated = cluster.tables().designate(&c.hash).node;
            let holder = cluster.resolve(&c.hash).unwrap();
            let note = if holder == designated {
                String::new()
            } else {
                format!("  (link, designated {designated})")
            };
            println!("  chunk {} {} -> {holder}{note}", c.index, short(&c.hash));
        }
    }
    println!(
        "links: total {}, max per node {}",
        cluster.total_links(),
        cluster.max_links_per_node()
    );
    for (org, book) in cluster.mirrors() {
        for n in &cluster.orgs()[org].nodes {
            let pending: Vec<&str> = book.pending_for(n).collect();
            if !pending.is_empty() {
                println!("{org}: {n} owes mirrors to {pending:?}");
            }
        }
    }
}

fn short(h: &Digest) -> String {
    h.to_hex()[..10].to_owned()
}
