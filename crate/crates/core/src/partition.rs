//! Vertex-based placement for the matching algorithms: statistics records,
//! adjacency blocks grouped by vertex-ID range, per-vertex suspended-edge
//! stacks, and the coordinator's update history and directory.

use crate::error::{DmpcError, Result};
use crate::types::{Edge, MachineId, Vertex, Word};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

pub const NONE: Word = Word::MAX;

pub fn opt_word(v: Option<Vertex>) -> Word {
    v.map_or(NONE, |x| x as Word)
}

/// One stored copy of an edge at one endpoint: the neighbor, the neighbor's
/// mate as last seen, and the sequence number of the insertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeCopy {
    pub nbr: Vertex,
    pub mate: Option<Vertex>,
    pub stamp: u64,
}

impl EdgeCopy {
    pub const WORDS: usize = 3;

    pub fn encode(&self, out: &mut Vec<Word>) {
        out.extend([self.nbr as Word, opt_word(self.mate), self.stamp]);
    }
}

/// Per-vertex statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VertexRecord {
    pub degree: u32,
    pub mate: Option<Vertex>,
    pub suspended_top: Option<MachineId>,
    pub heavy: bool,
    pub free_neighbors: u32,
}

impl VertexRecord {
    pub const WORDS: usize = 5;

    pub fn encode(&self, v: Vertex, out: &mut Vec<Word>) {
        out.extend([
            v as Word,
            self.degree as Word,
            opt_word(self.mate),
            self.suspended_top.map_or(NONE, |m| m as Word),
            self.heavy as Word | ((self.free_neighbors as Word) << 1),
        ]);
    }
}

#[derive(Debug, Clone, Default)]
pub struct StatsShard {
    pub lo: Vertex,
    pub records: Vec<VertexRecord>,
}

/// Adjacency blocks of every vertex in `[lo, hi)`.
#[derive(Debug, Clone, Default)]
pub struct BlockShard {
    pub lo: Vertex,
    pub hi: Vertex,
    pub blocks: BTreeMap<Vertex, Vec<EdgeCopy>>,
    pub last_refresh: u64,
}

impl BlockShard {
    pub fn words(&self) -> usize {
        3 + self.blocks.values().map(|b| 1 + EdgeCopy::WORDS * b.len()).sum::<usize>()
    }
}

/// Overflow edges of one heavy vertex; one link of its stack.
#[derive(Debug, Clone, Default)]
pub struct SuspendedShard {
    pub owner: Vertex,
    pub copies: Vec<EdgeCopy>,
    pub below: Option<MachineId>,
    pub last_refresh: u64,
}

impl SuspendedShard {
    pub fn words(&self) -> usize {
        4 + EdgeCopy::WORDS * self.copies.len()
    }

    pub fn capacity(s: usize) -> usize {
        (s - 4) / EdgeCopy::WORDS
    }
}

#[derive(Debug, Clone, Default)]
pub enum Shard {
    #[default]
    Idle,
    Coordinator,
    Stats(StatsShard),
    Block(BlockShard),
    Suspended(SuspendedShard),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Insert,
    Delete,
}

/// A buffered update with the matching changes it triggered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryEntry {
    pub seq: u64,
    pub op: Op,
    pub edge: Edge,
    /// (edge, added) in the order they happened.
    pub triggered: Vec<(Edge, bool)>,
    pub acks: [bool; 2],
}

impl HistoryEntry {
    /// Sequence number with op and ack bits packed, both endpoints, and two
    /// words per triggered change with the add flag packed.
    pub fn words(&self) -> usize {
        3 + 2 * self.triggered.len()
    }
}

/// What a stale machine needs to catch up: deleted edges with their
/// sequence numbers and the latest mate of every vertex whose mate changed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Delta {
    pub deletions: Vec<(Edge, u64)>,
    pub mates: BTreeMap<Vertex, Option<Vertex>>,
    pub upto: u64,
}

impl Delta {
    pub fn words(&self) -> usize {
        1 + 3 * self.deletions.len() + 2 * self.mates.len()
    }

    pub fn encode(&self, out: &mut Vec<Word>) {
        out.push(self.upto);
        for (e, s) in &self.deletions {
            out.extend([e.u as Word, e.v as Word, *s]);
        }
        for (v, m) in &self.mates {
            out.extend([*v as Word, opt_word(*m)]);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.deletions.is_empty() && self.mates.is_empty()
    }

    /// Brings one adjacency list of `owner` up to date. Returns the number of
    /// dropped copies and whether a live copy of `watch` was dropped by the
    /// deletion with sequence number `watch_seq`.
    pub fn apply_watch(&self, owner: Vertex, copies: &mut Vec<EdgeCopy>, watch: Option<(Vertex, u64)>) -> (usize, bool) {
        let before = copies.len();
        let mut hit = false;
        if !self.deletions.is_empty() {
            copies.retain(|c| {
                let e = Edge::new(owner, c.nbr);
                let killers: Vec<u64> = self
                    .deletions
                    .iter()
                    .filter(|(d, s)| *d == e && c.stamp < *s)
                    .map(|&(_, s)| s)
                    .collect();
                if let Some((w, ws)) = watch {
                    if c.nbr == w && killers.contains(&ws) && killers.iter().all(|&k| k >= ws) {
                        hit = true;
                    }
                }
                killers.is_empty()
            });
        }
        for c in copies.iter_mut() {
            if let Some(m) = self.mates.get(&c.nbr) {
                c.mate = *m;
            }
        }
        (before - copies.len(), hit)
    }

    pub fn apply(&self, owner: Vertex, copies: &mut Vec<EdgeCopy>) -> usize {
        self.apply_watch(owner, copies, None).0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Idle,
    Coordinator,
    Stats,
    Block,
    Suspended(Vertex),
}

/// Coordinator knowledge of one machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirEntry {
    pub role: Role,
    pub used: usize,
    pub last_refresh: u64,
}

/// State held by the coordinator, machine 0.
#[derive(Debug, Clone)]
pub struct Coordinator {
    pub history: VecDeque<HistoryEntry>,
    pub h_max: usize,
    pub next_seq: u64,
    pub heavy: BTreeSet<Vertex>,
    /// Block-machine ranges by lower bound.
    pub ranges: BTreeMap<Vertex, MachineId>,
    pub dir: Vec<DirEntry>,
    pub pending: Option<HistoryEntry>,
}

impl Coordinator {
    pub fn words(&self) -> usize {
        let hist: usize = self.history.iter().map(|e| e.words()).sum();
        let pend = self.pending.as_ref().map_or(0, |e| e.words());
        let used = self.dir.iter().filter(|d| d.role != Role::Idle).count();
        4 + hist + pend + self.heavy.len() + 2 * self.ranges.len() + 3 * used + self.dir.len().div_ceil(64)
    }

    pub fn block_of(&self, v: Vertex) -> MachineId {
        *self.ranges.range(..=v).next_back().expect("ranges cover all vertices").1
    }

    /// Catch-up data for a machine refreshed up to `since`, including the
    /// update in flight.
    pub fn delta_since(&self, since: u64) -> Delta {
        self.delta_inner(since, true)
    }

    /// Catch-up data up to the last committed update.
    pub fn delta_committed(&self, since: u64) -> Delta {
        self.delta_inner(since, false)
    }

    fn delta_inner(&self, since: u64, with_pending: bool) -> Delta {
        let mut d = Delta { upto: since, ..Default::default() };
        let pending = self.pending.iter().filter(|_| with_pending);
        let entries = self.history.iter().filter(|e| e.seq > since).chain(pending);
        for e in entries {
            if e.op == Op::Delete {
                d.deletions.push((e.edge, e.seq));
            }
            for &(edge, added) in &e.triggered {
                if added {
                    d.mates.insert(edge.u, Some(edge.v));
                    d.mates.insert(edge.v, Some(edge.u));
                } else {
                    d.mates.insert(edge.u, None);
                    d.mates.insert(edge.v, None);
                }
            }
            d.upto = d.upto.max(e.seq);
        }
        d
    }

    /// Sequence number a machine reaches after applying the current delta.
    /// The update in flight is not counted until it is committed.
    pub fn committed_seq(&self) -> u64 {
        self.next_seq.saturating_sub(1)
    }

    /// Appends the finished pending entry, evicting the oldest if possible.
    pub fn record_update(&mut self, entry: HistoryEntry) -> Result<()> {
        let expected = self.history.back().map_or(entry.seq, |e| e.seq + 1);
        if entry.seq != expected {
            return Err(DmpcError::OutOfOrderSeq { got: entry.seq, expected });
        }
        self.history.push_back(entry);
        while self.history.len() > self.h_max {
            let oldest = self.history.front().unwrap().seq;
            if let Some((m, _)) = self
                .dir
                .iter()
                .enumerate()
                .find(|(_, d)| matches!(d.role, Role::Block | Role::Suspended(_)) && d.last_refresh < oldest)
            {
                return Err(DmpcError::HistoryOverflow { seq: oldest, machine: m });
            }
            self.history.pop_front();
        }
        Ok(())
    }

    /// Storage machines whose staleness would reach the history size next
    /// update, oldest first; always at least the single oldest one.
    pub fn refresh_due(&self, now: u64) -> Vec<MachineId> {
        let mut storage: Vec<(u64, MachineId)> = self
            .dir
            .iter()
            .enumerate()
            .filter(|(_, d)| matches!(d.role, Role::Block | Role::Suspended(_)))
            .map(|(m, d)| (d.last_refresh, m))
            .collect();
        storage.sort();
        let limit = now.saturating_sub(self.h_max as u64 - 1);
        let mut due: Vec<MachineId> = storage.iter().filter(|(r, _)| *r < limit).map(|&(_, m)| m).collect();
        if due.is_empty() {
            if let Some(&(r, m)) = storage.first() {
                if r < now {
                    due.push(m);
                }
            }
        }
        due
    }

    pub fn chain_machines(&self, owner: Vertex) -> Vec<MachineId> {
        self.dir
            .iter()
            .enumerate()
            .filter(|(_, d)| d.role == Role::Suspended(owner))
            .map(|(m, _)| m)
            .collect()
    }
}

/// Fixed statistics layout: machines `1..=k`, uniform vertex-ID ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatsLayout {
    pub first: MachineId,
    pub machines: usize,
    pub per_machine: usize,
}

impl StatsLayout {
    pub fn new(n: usize, sqrt_n: f64) -> Self {
        let machines = ((n as f64) / sqrt_n).ceil().max(1.0) as usize;
        let per_machine = n.div_ceil(machines).max(1);
        let machines = n.div_ceil(per_machine).max(1);
        StatsLayout { first: 1, machines, per_machine }
    }

    pub fn machine_of(&self, v: Vertex) -> MachineId {
        self.first + v as usize / self.per_machine
    }

    pub fn range(&self, m: MachineId) -> (Vertex, Vertex) {
        let i = m - self.first;
        ((i * self.per_machine) as Vertex, ((i + 1) * self.per_machine) as Vertex)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coord(h_max: usize) -> Coordinator {
        Coordinator {
            history: VecDeque::new(),
            h_max,
            next_seq: 1,
            heavy: BTreeSet::new(),
            ranges: [(0, 3)].into_iter().collect(),
            dir: vec![
                DirEntry { role: Role::Coordinator, used: 0, last_refresh: 0 },
                DirEntry { role: Role::Block, used: 0, last_refresh: 0 },
            ],
            pending: None,
        }
    }

    fn entry(seq: u64) -> HistoryEntry {
        HistoryEntry { seq, op: Op::Insert, edge: Edge::new(0, 1), triggered: vec![], acks: [true; 2] }
    }

    #[test]
    fn append_without_eviction() {
        let mut c = coord(3);
        c.record_update(entry(1)).unwrap();
        c.record_update(entry(2)).unwrap();
        assert_eq!(c.history.len(), 2);
    }

    #[test]
    fn eviction_after_refresh() {
        let mut c = coord(2);
        c.record_update(entry(1)).unwrap();
        c.record_update(entry(2)).unwrap();
        c.dir[1].last_refresh = 1;
        c.record_update(entry(3)).unwrap();
        assert_eq!(c.history.front().unwrap().seq, 2);
        assert!(matches!(c.record_update(entry(4)), Err(DmpcError::HistoryOverflow { seq: 2, machine: 1 })));
    }

    #[test]
    fn out_of_order_rejected() {
        let mut c = coord(4);
        c.record_update(entry(1)).unwrap();
        assert!(matches!(c.record_update(entry(3)), Err(DmpcError::OutOfOrderSeq { .. })));
    }

    #[test]
    fn delta_filters_stale_copies() {
        let mut c = coord(8);
        let mut del = entry(5);
        del.op = Op::Delete;
        del.edge = Edge::new(0, 2);
        c.history.push_back(del);
        let d = c.delta_since(0);
        let mut copies = vec![
            EdgeCopy { nbr: 1, mate: None, stamp: 1 },
            EdgeCopy { nbr: 2, mate: None, stamp: 2 },
            EdgeCopy { nbr: 3, mate: None, stamp: 3 },
            EdgeCopy { nbr: 2, mate: None, stamp: 7 },
        ];
        assert_eq!(d.apply(0, &mut copies), 1);
        assert_eq!(copies.len(), 3);
        assert_eq!(d.apply(0, &mut copies), 0);
    }

    #[test]
    fn delta_tracks_latest_mate() {
        let mut c = coord(8);
        let mut e = entry(1);
        e.triggered = vec![(Edge::new(1, 2), true), (Edge::new(1, 2), false), (Edge::new(2, 3), true)];
        c.history.push_back(e);
        let d = c.delta_since(0);
        assert_eq!(d.mates.get(&1), Some(&None));
        assert_eq!(d.mates.get(&2), Some(&Some(3)));
        assert_eq!(d.mates.get(&3), Some(&Some(2)));
    }

    #[test]
    fn stats_layout_covers_vertices() {
        let l = StatsLayout::new(100, 10.0);
        assert_eq!(l.machines, 10);
        assert_eq!(l.machine_of(0), 1);
        assert_eq!(l.machine_of(99), 10);
        assert_eq!(l.range(1), (0, 10));
    }
}
