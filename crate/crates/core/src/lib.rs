//! Deterministic simulator of a Flush+Reload attack on T-table AES-128,
//! its time-fragmented variants, and a PMC-based detector watching the
//! victim's L3 misses per 1000 loads.

pub mod aes;
pub mod attack;
pub mod cache;
pub mod detector;
pub mod harness;
pub mod sim;
