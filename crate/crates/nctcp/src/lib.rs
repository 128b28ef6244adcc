//! Network-coded TCP at desk scale: an MDS erasure-coding layer that sits
//! between a simplified TCP and the network, plus the deterministic
//! discrete-event simulator and experiment harness used to evaluate it.
//!
//! The crate is organized bottom-up:
//!
//! * [`gf`] — arithmetic over GF(2^m) with log/antilog tables.
//! * [`codec`] — systematic Reed-Solomon style erasure coding of k segments
//!   into n, reconstruction from any k, and minimum-distance verification.
//! * [`segment`] — the simplified TCP segment model and its options.
//! * [`protocol`] — the coding layer itself: wire format, header
//!   strip/restore, transmitter and receiver state machines.
//! * [`tcp`] — Reno-style TCP source and sink endpoints.
//! * [`sim`] — deterministic event loop, links with rate/delay/queue/erasure.
//! * [`scenario`] — dumbbell topology wiring and the flat config format.
//! * [`experiments`] — throughput sweeps, fairness runs, CSV output.

pub mod codec;
pub mod experiments;
pub mod gf;
pub mod metrics;
pub mod protocol;
pub mod scenario;
pub mod segment;
pub mod sim;
pub mod tcp;
