//! Deterministic simulator of the dynamic massively parallel computation
//! model, with fully-dynamic matching, connectivity and MST algorithms that
//! run on it and brute-force oracles that check them.

#![allow(clippy::type_complexity)]

pub mod connectivity;
pub mod error;
pub mod harness;
pub mod matching;
pub mod mst;
pub mod oracle;
pub mod partition;
pub mod runtime;
pub mod seqsim;
pub mod threehalves;
pub mod types;

pub use error::{DmpcError, Result};
pub use runtime::{RoundMetrics, Runtime, SimConfig, UpdateMetrics};
pub use types::{Edge, Graph, MachineId, Update, Vertex, Weight, Word};
