pub mod bench;
pub mod cli;
pub mod cluster;
pub mod config;
pub mod erasure;
pub mod hash;
pub mod hashslot;
pub mod ledger;
pub mod node;
pub mod placement;
pub mod protocol;
pub mod simnet;
