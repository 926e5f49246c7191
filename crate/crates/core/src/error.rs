use crate::types::{MachineId, Vertex};
use thiserror::Error;

/// Faults raised by the simulator and the algorithms running on it.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DmpcError {
    #[error("machine {machine} holds {words} words, cap is {cap}")]
    MemoryCapExceeded { machine: MachineId, words: usize, cap: usize },
    #[error("machine {machine} {direction} {words} words in one round, cap is {cap}")]
    BandwidthExceeded {
        machine: MachineId,
        direction: Direction,
        words: usize,
        cap: usize,
    },
    #[error("message payload is empty")]
    EmptyPayload,
    #[error("no communication in window")]
    NoCommunication,
    #[error("empty window")]
    EmptyWindow,
    #[error("unknown vertex {0}")]
    UnknownVertex(Vertex),
    #[error("unknown edge ({0}, {1})")]
    UnknownEdge(Vertex, Vertex),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(Vertex, Vertex),
    #[error("self loop at {0}")]
    SelfLoop(Vertex),
    #[error("history overflow: entry {seq} not yet seen by machine {machine}")]
    HistoryOverflow { seq: u64, machine: MachineId },
    #[error("out of order history entry {got}, expected {expected}")]
    OutOfOrderSeq { got: u64, expected: u64 },
    #[error("heavy vertex {0} changed matched status")]
    HeavyStatusFlip(Vertex),
    #[error("heavy vertex {0} has no alive neighbor with a light mate")]
    CountingInvariant(Vertex),
    #[error("vertices {0} and {1} are in different components")]
    DifferentComponents(Vertex, Vertex),
    #[error("component of {0} is a singleton")]
    SingletonComponent(Vertex),
    #[error("non-positive weight")]
    NonPositiveWeight,
    #[error("non-positive epsilon")]
    NonPositiveEpsilon,
    #[error("unallocated address {0}")]
    UnallocatedAddress(u64),
    #[error("local scratch of {words} words exceeds cap {cap}")]
    ScratchExceeded { words: usize, cap: usize },
    #[error("instance too large for exhaustive search ({0} edges)")]
    TooLarge(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("all {0} machines are in use")]
    OutOfMachines(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::Sent => f.write_str("sent"),
            Direction::Received => f.write_str("received"),
        }
    }
}

pub type Result<T, E = DmpcError> = std::result::Result<T, E>;
