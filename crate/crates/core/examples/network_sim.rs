//! The fair-share network model on its own: two servers stream into one
//! client, then a server dies mid-transfer.

use dbnode::simnet::{EventKind, Rtt, Simulator};

fn main() {
    let mut sim = Simulator::new(Rtt {
        intra: 0.001,
        inter: 0.010,
    });
    let client = sim.add_endpoint("client", "org1", 1000.0).unwrap();
    let a = sim.add_endpoint("a", "org1", 1000.0).unwrap();
    let b = sim.add_endpoint("b", "org1", 1000.0).unwrap();
    sim.start_transfer(a, client, 1_000_000, 1);
    sim.start_transfer(b, client, 1_000_000, 2);
    sim.schedule_kill(0.030, b);
    sim.start_transfer(b, client, 10_000_000, 3);
    while let Some(ev) = sim.next_event() {
        match ev.kind {
            EventKind::Delivered(_) => {
                println!("{:>8.4} s  transfer {} delivered", ev.time, ev.tag)
            }
            EventKind::Failed(_) => println!("{:>8.4} s  transfer {} failed", ev.time, ev.tag),
            EventKind::Timer => {}
        }
    }
    print!("{}", sim.trace_csv());
}
