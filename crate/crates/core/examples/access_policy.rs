//! Permission, ban and token rules enforced when the file tree is fetched.

use dbnode::cluster::Cluster;
use dbnode::config::ClusterConfig;
use dbnode::ledger::AccessPolicy;
use dbnode::protocol::{read_file, write_file, Client, ReadOptions, WriteOptions};

fn main() {
    let mut config = ClusterConfig::three_by_two();
    config.storage.chunk_size = 4096;
    let mut cluster = Cluster::new(config).unwrap();
    let policy = AccessPolicy::open()
        .permit(["bob", "carol"])
        .ban(["carol"])
        .with_tokens(2);
    let opts = WriteOptions {
        policy,
        ..Default::default()
    };
    let receipt = write_file(
        &mut cluster,
        &Client::new("alice", "org1"),
        "quarterly report".into(),
        &opts,
    )
    .unwrap();
    println!("stored {}", receipt.fid);

    for who in ["dave", "carol", "bob", "bob", "bob", "alice"] {
        let result = read_file(
            &mut cluster,
            &Client::new(who, "org2"),
            &receipt.fid,
            &ReadOptions::default(),
        );
        match result {
            Ok(out) if out.deleted > 0 => println!(
                "{who}: read, last token used, {} chunks deleted",
                out.deleted
            ),
            Ok(_) => println!("{who}: read"),
            Err(e) => println!("{who}: {e}"),
        }
    }
    println!("chunks left in the cluster: {}", cluster.total_chunks());
}
