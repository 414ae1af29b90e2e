//! Simulation, synthesis and verification of random peaked quantum circuits.
//!
//! Conventions used throughout:
//! - wire 0 is the most significant bit of every outcome string and basis index;
//! - a gate on wires `[a, b]` acts on the local index with `a` as the high bit;
//! - all randomness flows from explicit `u64` seeds, with child seeds derived per task.

pub mod bits;
pub mod bounds;
pub mod challenge;
pub mod circuit;
pub mod ensembles;
pub mod error;
pub mod exact;
pub mod linalg;
pub mod noise;
pub mod perturb;
pub mod rng;
pub mod sim;
pub mod stitch;
pub mod synth;

pub use bits::BitString;
pub use circuit::{Architecture, Circuit, Gate, GateKind};
pub use error::{Error, Result};
pub use sim::{SampleMeta, SampleSet, StateVector};
