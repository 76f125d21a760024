#![cfg_attr(not(test), no_std)]
extern crate alloc;

pub mod adv;
pub mod codec;
pub mod conn;
pub mod dedup;
pub mod engine;
pub mod medium;
pub mod metrics;
pub mod net;
pub mod rng;
pub mod types;
