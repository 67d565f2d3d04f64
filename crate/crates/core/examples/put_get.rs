//! Store a file on a consortium kept in a state directory and read it back
//! after reopening.

use dbnode::cluster::Cluster;
use dbnode::config::ClusterConfig;
use dbnode::protocol::{read_file, write_file, Client, ReadOptions, WriteOptions};

fn main() {
    let dir = std::env::temp_dir().join(format!("dbnode-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut config = ClusterConfig::four_by_three(|i| 400 * (i as u64 + 1));
    config.storage.chunk_size = 100_000;
    let data: bytes::Bytes = (0..2_500_000u32)
        .map(|i| (i % 253) as u8)
        .collect::<Vec<u8>>()
        .into();

    let fid = {
        let mut cluster = Cluster::create(config, &dir).unwrap();
        let r = write_file(
            &mut cluster,
            &Client::new("alice", "org1"),
            data.clone(),
            &WriteOptions::default(),
        )
        .unwrap();
        cluster.save().unwrap();
        println!(
            "wrote {} stripes, {} chunks, {} links ({} B) in {:.1} ms",
            r.stripes,
            r.chunks,
            r.links_created,
            r.link_bytes,
            r.latency * 1e3
        );
        r.fid
    };

    let mut cluster = Cluster::open(&dir).unwrap();
    let out = read_file(
        &mut cluster,
        &Client::new("bob", "org3"),
        &fid,
        &ReadOptions::default(),
    )
    .unwrap();
    assert_eq!(out.data, data);
    println!(
        "read {} bytes in {:.1} ms after reopening {}",
        out.data.len(),
        out.latency * 1e3,
        dir.display()
    );
    std::fs::remove_dir_all(&dir).unwrap();
}
