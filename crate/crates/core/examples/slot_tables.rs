//! Two-layer hash slot tables: organizations by master bandwidth, nodes by
//! capacity.

use std::collections::BTreeMap;

use dbnode::hash::Digest;
use dbnode::hashslot::{slot_of_digest, SlotTables};

fn main() {
    let bandwidth: BTreeMap<String, u64> =
        [("org1", 400), ("org2", 800), ("org3", 1200), ("org4", 1600)]
            .into_iter()
            .map(|(o, b)| (o.to_owned(), b))
            .collect();
    let capacity = bandwidth
        .keys()
        .map(|org| {
            let nodes = (1..=3)
                .map(|j| (format!("{org}-n{j}"), 1_000_000_000_000 * j))
                .collect();
            (org.clone(), nodes)
        })
        .collect();
    let tables = SlotTables::build(&bandwidth, &capacity).unwrap();
    print!("{}", tables.to_canonical());

    for name in ["alpha", "beta", "gamma"] {
        let hash = Digest::of(name.as_bytes());
        let d = tables.designate(&hash);
        println!(
            "{name}: slot {} -> {} / {}",
            slot_of_digest(&hash),
            d.org,
            d.node
        );
    }
}
