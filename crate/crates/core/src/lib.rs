//! Performance modeling for message-passing parallel programs.
//!
//! A model couples a regular process topology, a message cost model and
//! one stereotyped activity flow per process role. From it the crate
//! validates communication structure, predicts execution timelines with a
//! deterministic discrete-event simulator, sweeps speedup/efficiency, and
//! renders topology (DOT), swimlane and timed sequence diagrams.

pub mod analyze;
pub mod cli;
pub mod export;
pub mod model;
pub mod paradigms;
pub mod parser;
pub mod simulate;
pub mod validate;
