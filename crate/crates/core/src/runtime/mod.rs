//! Synchronous round simulator with hard per-machine memory and bandwidth caps.
//!
//! Algorithms keep typed per-machine state of their own and register its word
//! count with [`Runtime::set_resident`]. Every cross-machine effect goes
//! through [`Runtime::send`], and [`Runtime::end_round`] validates caps,
//! delivers inboxes and records metrics.

mod multicast;
mod sort;

pub use multicast::Multicast;
pub use sort::distributed_sort;

use crate::error::{Direction, DmpcError, Result};
use crate::types::{MachineId, Word};
use std::collections::{BTreeMap, BTreeSet};

/// Sizing of the simulated cluster. One word holds one ID, index or weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub capacity_n: usize,
    pub machine_memory_s: usize,
    pub machine_count_mu: usize,
    pub rng_seed: u64,
}

impl SimConfig {
    /// S = ceil(c_s * sqrt(N)), mu = ceil(c_m * sqrt(N)), with S * mu >= N.
    pub fn sized(capacity_n: usize, c_s: f64, c_m: f64, rng_seed: u64) -> Result<Self> {
        if capacity_n == 0 {
            return Err(DmpcError::Config("capacity N must be positive".into()));
        }
        if c_s.is_nan() || c_m.is_nan() || c_s < 1.0 || c_m < 1.0 {
            return Err(DmpcError::Config("c_s and c_m must be at least 1".into()));
        }
        let root = (capacity_n as f64).sqrt();
        let s = (c_s * root).ceil() as usize;
        let mut mu = (c_m * root).ceil() as usize;
        while s * mu < capacity_n {
            mu += 1;
        }
        Ok(SimConfig {
            capacity_n,
            machine_memory_s: s,
            machine_count_mu: mu.max(2),
            rng_seed,
        })
    }

    pub fn sqrt_n(&self) -> f64 {
        (self.capacity_n as f64).sqrt()
    }
}

/// Discriminant carried by every message. Not counted as payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MsgKind {
    Data,
    PlacementQuery,
    PlacementReply,
    EdgeMove,
    RefreshDelta,
    Report,
    RecordRead,
    RecordReply,
    RecordWrite,
    Broadcast,
    Candidate,
    Sample,
    Splitter,
    Scatter,
    MemRead,
    MemReply,
    MemWrite,
    MemAck,
    Proposal,
    Accept,
    Counter,
    Contract,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageEnvelope {
    pub sender: MachineId,
    pub receiver: MachineId,
    pub kind: MsgKind,
    pub payload: Vec<Word>,
}

impl MessageEnvelope {
    /// Words charged to the network. Self-notes are free.
    pub fn words(&self) -> usize {
        if self.sender == self.receiver {
            0
        } else {
            self.payload.len()
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MachineState {
    pub id: MachineId,
    /// Word-addressable cells, one word each.
    pub store: BTreeMap<Word, Word>,
    /// Words held in typed algorithm state.
    pub resident: usize,
    /// Transient words held by runtime primitives such as the sort.
    pub scratch: usize,
    pub inbox: Vec<MessageEnvelope>,
}

impl MachineState {
    pub fn words(&self) -> usize {
        self.store.len() + self.resident + self.scratch
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoundMetrics {
    pub round_index: u64,
    pub active_machines: usize,
    pub messages: usize,
    pub comm_words: usize,
    pub per_pair_words: BTreeMap<(MachineId, MachineId), usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateMetrics {
    pub update_index: u64,
    pub rounds: usize,
    pub max_active_per_round: usize,
    pub max_comm_per_round: usize,
    pub total_comm: usize,
    pub machines_ever_used: usize,
}

impl UpdateMetrics {
    pub fn aggregate(update_index: u64, rounds: &[RoundMetrics], machines_ever_used: usize) -> Self {
        UpdateMetrics {
            update_index,
            rounds: rounds.len(),
            max_active_per_round: rounds.iter().map(|r| r.active_machines).max().unwrap_or(0),
            max_comm_per_round: rounds.iter().map(|r| r.comm_words).max().unwrap_or(0),
            total_comm: rounds.iter().map(|r| r.comm_words).sum(),
            machines_ever_used,
        }
    }
}

/// Largest per-machine figures observed over the whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PeakUsage {
    pub store: usize,
    pub sent: usize,
    pub received: usize,
}

pub struct Runtime {
    cfg: SimConfig,
    machines: Vec<MachineState>,
    pending: Vec<MessageEnvelope>,
    rounds_done: u64,
    current: Vec<RoundMetrics>,
    updates_done: u64,
    ever_used: Vec<bool>,
    ever_used_count: usize,
    pair_totals: BTreeMap<(MachineId, MachineId), u64>,
    peak: PeakUsage,
}

impl Runtime {
    pub fn new(cfg: SimConfig) -> Self {
        let machines = (0..cfg.machine_count_mu)
            .map(|id| MachineState { id, ..Default::default() })
            .collect();
        Runtime {
            cfg,
            machines,
            pending: Vec::new(),
            rounds_done: 0,
            current: Vec::new(),
            updates_done: 0,
            ever_used: vec![false; cfg.machine_count_mu],
            ever_used_count: 0,
            pair_totals: BTreeMap::new(),
            peak: PeakUsage::default(),
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Words per machine.
    pub fn s(&self) -> usize {
        self.cfg.machine_memory_s
    }

    pub fn machine_count(&self) -> usize {
        self.machines.len()
    }

    pub fn machine(&self, id: MachineId) -> &MachineState {
        &self.machines[id]
    }

    pub fn machine_mut(&mut self, id: MachineId) -> &mut MachineState {
        &mut self.machines[id]
    }

    /// Adds a fresh machine to the cluster.
    pub fn provision(&mut self) -> MachineId {
        let id = self.machines.len();
        self.machines.push(MachineState { id, ..Default::default() });
        self.ever_used.push(false);
        id
    }

    pub fn set_resident(&mut self, id: MachineId, words: usize) {
        self.machines[id].resident = words;
        if words > 0 {
            self.mark_used(id);
        }
    }

    pub fn set_scratch(&mut self, id: MachineId, words: usize) {
        self.machines[id].scratch = words;
        if words > 0 {
            self.mark_used(id);
        }
    }

    fn mark_used(&mut self, id: MachineId) {
        if !self.ever_used[id] {
            self.ever_used[id] = true;
            self.ever_used_count += 1;
        }
    }

    pub fn machines_ever_used(&self) -> usize {
        self.ever_used_count
    }

    pub fn rounds_done(&self) -> u64 {
        self.rounds_done
    }

    pub fn peak(&self) -> PeakUsage {
        self.peak
    }

    /// Queues a message for delivery at the end of the current round.
    pub fn send(&mut self, from: MachineId, to: MachineId, kind: MsgKind, payload: Vec<Word>) -> Result<()> {
        if payload.is_empty() {
            return Err(DmpcError::EmptyPayload);
        }
        debug_assert!(from < self.machines.len() && to < self.machines.len());
        self.pending.push(MessageEnvelope { sender: from, receiver: to, kind, payload });
        Ok(())
    }

    /// Queues `payload` from `source` to every other machine. Closing the
    /// round with [`end_round`](Self::end_round) completes the broadcast.
    pub fn broadcast(&mut self, source: MachineId, kind: MsgKind, payload: &[Word]) -> Result<()> {
        if payload.is_empty() {
            return Err(DmpcError::EmptyPayload);
        }
        let others = self.machines.len() - 1;
        let words = payload.len() * others;
        if words > self.s() {
            return Err(DmpcError::BandwidthExceeded {
                machine: source,
                direction: Direction::Sent,
                words,
                cap: self.s(),
            });
        }
        for to in 0..self.machines.len() {
            if to != source {
                self.pending.push(MessageEnvelope {
                    sender: source,
                    receiver: to,
                    kind,
                    payload: payload.to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Validates caps, delivers queued messages and records the round.
    pub fn end_round(&mut self) -> Result<RoundMetrics> {
        let msgs = std::mem::take(&mut self.pending);
        let count = self.machines.len();
        let s = self.s();
        let mut sent = vec![0usize; count];
        let mut recv = vec![0usize; count];
        let mut per_pair: BTreeMap<(MachineId, MachineId), usize> = BTreeMap::new();
        let mut active: BTreeSet<MachineId> = BTreeSet::new();
        let mut messages = 0;
        for m in &msgs {
            let w = m.words();
            if w == 0 {
                continue;
            }
            messages += 1;
            sent[m.sender] += w;
            recv[m.receiver] += w;
            *per_pair.entry((m.sender, m.receiver)).or_insert(0) += w;
            active.insert(m.sender);
            active.insert(m.receiver);
        }
        for (id, st) in self.machines.iter().enumerate() {
            let words = st.words();
            self.peak.store = self.peak.store.max(words);
            if words > s {
                return Err(DmpcError::MemoryCapExceeded { machine: id, words, cap: s });
            }
        }
        for id in 0..count {
            self.peak.sent = self.peak.sent.max(sent[id]);
            self.peak.received = self.peak.received.max(recv[id]);
            if sent[id] > s {
                return Err(DmpcError::BandwidthExceeded {
                    machine: id,
                    direction: Direction::Sent,
                    words: sent[id],
                    cap: s,
                });
            }
            if recv[id] > s {
                return Err(DmpcError::BandwidthExceeded {
                    machine: id,
                    direction: Direction::Received,
                    words: recv[id],
                    cap: s,
                });
            }
        }
        for &id in &active {
            self.mark_used(id);
        }
        for (&pair, &w) in &per_pair {
            *self.pair_totals.entry(pair).or_insert(0) += w as u64;
        }
        let mut msgs = msgs;
        // Stable sort keeps each sender's emission order.
        msgs.sort_by_key(|m| (m.receiver, m.sender));
        for m in msgs {
            self.machines[m.receiver].inbox.push(m);
        }
        let metrics = RoundMetrics {
            round_index: self.rounds_done,
            active_machines: active.len(),
            messages,
            comm_words: per_pair.values().sum(),
            per_pair_words: per_pair,
        };
        self.rounds_done += 1;
        self.current.push(metrics.clone());
        Ok(metrics)
    }

    pub fn take_inbox(&mut self, id: MachineId) -> Vec<MessageEnvelope> {
        std::mem::take(&mut self.machines[id].inbox)
    }

    /// Runs one round where every machine, in ascending ID order, executes
    /// `step` against its inbox and store.
    pub fn run_round<F>(&mut self, mut step: F) -> Result<RoundMetrics>
    where
        F: FnMut(&mut RoundCtx<'_>) -> Result<()>,
    {
        for id in 0..self.machines.len() {
            let inbox = std::mem::take(&mut self.machines[id].inbox);
            let st = &mut self.machines[id];
            let mut ctx = RoundCtx {
                id,
                inbox,
                store: &mut st.store,
                scratch: &mut st.scratch,
                out: &mut self.pending,
            };
            step(&mut ctx)?;
            debug_assert!(ctx.out.iter().all(|m| !m.payload.is_empty()));
        }
        self.end_round()
    }

    /// Rounds recorded since the last snapshot.
    pub fn current_rounds(&self) -> &[RoundMetrics] {
        &self.current
    }

    /// Aggregates the rounds of the update that just finished and resets
    /// the per-update accumulator.
    pub fn metrics_snapshot(&mut self) -> UpdateMetrics {
        let m = UpdateMetrics::aggregate(self.updates_done, &self.current, self.ever_used_count);
        self.updates_done += 1;
        self.current.clear();
        m
    }

    /// Discards rounds recorded since the last snapshot without counting an update.
    pub fn take_rounds(&mut self) -> Vec<RoundMetrics> {
        std::mem::take(&mut self.current)
    }

    /// Per-pair words accumulated over the whole run.
    pub fn pair_totals(&self) -> &BTreeMap<(MachineId, MachineId), u64> {
        &self.pair_totals
    }

    pub fn reset_pair_totals(&mut self) {
        self.pair_totals.clear();
    }
}

/// Per-machine view handed to [`Runtime::run_round`] steps.
pub struct RoundCtx<'a> {
    pub id: MachineId,
    pub inbox: Vec<MessageEnvelope>,
    pub store: &'a mut BTreeMap<Word, Word>,
    pub scratch: &'a mut usize,
    out: &'a mut Vec<MessageEnvelope>,
}

impl RoundCtx<'_> {
    pub fn send(&mut self, to: MachineId, kind: MsgKind, payload: Vec<Word>) -> Result<()> {
        if payload.is_empty() {
            return Err(DmpcError::EmptyPayload);
        }
        self.out.push(MessageEnvelope { sender: self.id, receiver: to, kind, payload });
        Ok(())
    }
}

/// Shannon entropy in bits of the per-pair communication summed over `window`.
pub fn comm_entropy(window: &[RoundMetrics]) -> Result<f64> {
    if window.is_empty() {
        return Err(DmpcError::EmptyWindow);
    }
    let mut totals: BTreeMap<(MachineId, MachineId), u64> = BTreeMap::new();
    for r in window {
        for (&pair, &w) in &r.per_pair_words {
            *totals.entry(pair).or_insert(0) += w as u64;
        }
    }
    entropy_of(totals.values().copied())
}

/// Entropy in bits of a vector of word counts after normalization.
pub fn entropy_of<I: IntoIterator<Item = u64>>(words: I) -> Result<f64> {
    let words: Vec<u64> = words.into_iter().filter(|&w| w > 0).collect();
    let total: u64 = words.iter().sum();
    if total == 0 {
        return Err(DmpcError::NoCommunication);
    }
    let total = total as f64;
    Ok(words
        .iter()
        .map(|&w| {
            let a = w as f64 / total;
            -a * a.log2()
        })
        .sum::<f64>()
        .max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rt(mu: usize, s: usize) -> Runtime {
        Runtime::new(SimConfig {
            capacity_n: mu * s,
            machine_memory_s: s,
            machine_count_mu: mu,
            rng_seed: 1,
        })
    }

    #[test]
    fn single_message_round() {
        let mut r = rt(4, 16);
        r.send(0, 1, MsgKind::Data, vec![1, 2, 3]).unwrap();
        let m = r.end_round().unwrap();
        assert_eq!((m.active_machines, m.messages, m.comm_words), (2, 1, 3));
        assert_eq!(r.take_inbox(1).len(), 1);
    }

    #[test]
    fn empty_round() {
        let mut r = rt(4, 16);
        let m = r.end_round().unwrap();
        assert_eq!((m.active_machines, m.messages, m.comm_words), (0, 0, 0));
    }

    #[test]
    fn broadcast_counts() {
        let mut r = rt(32, 1024);
        r.broadcast(3, MsgKind::Broadcast, &[1, 2, 3, 4, 5]).unwrap();
        let m = r.end_round().unwrap();
        assert_eq!(m.active_machines, 32);
        assert_eq!(m.comm_words, 5 * 31);

        let mut r = rt(64, 1024);
        r.broadcast(0, MsgKind::Broadcast, &[9; 6]).unwrap();
        assert_eq!(r.end_round().unwrap().comm_words, 378);
        assert_eq!(r.broadcast(0, MsgKind::Broadcast, &[]), Err(DmpcError::EmptyPayload));
        assert!(matches!(
            r.broadcast(0, MsgKind::Broadcast, &[9; 20]),
            Err(DmpcError::BandwidthExceeded { words: 1260, .. })
        ));
    }

    #[test]
    fn caps_are_enforced() {
        let mut r = rt(3, 4);
        r.send(0, 1, MsgKind::Data, vec![0; 3]).unwrap();
        r.send(0, 2, MsgKind::Data, vec![0; 3]).unwrap();
        assert!(matches!(
            r.end_round(),
            Err(DmpcError::BandwidthExceeded { machine: 0, direction: Direction::Sent, .. })
        ));
        let mut r = rt(3, 4);
        r.set_resident(2, 5);
        assert!(matches!(r.end_round(), Err(DmpcError::MemoryCapExceeded { machine: 2, .. })));
    }

    #[test]
    fn self_notes_are_free() {
        let mut r = rt(3, 4);
        r.send(1, 1, MsgKind::Data, vec![0; 10]).unwrap();
        let m = r.end_round().unwrap();
        assert_eq!((m.active_machines, m.comm_words), (0, 0));
        assert_eq!(r.take_inbox(1).len(), 1);
    }

    #[test]
    fn inbox_sorted_by_sender() {
        let mut r = rt(4, 16);
        r.send(3, 0, MsgKind::Data, vec![3]).unwrap();
        r.send(1, 0, MsgKind::Data, vec![1]).unwrap();
        r.send(2, 0, MsgKind::Data, vec![2]).unwrap();
        r.end_round().unwrap();
        let senders: Vec<_> = r.take_inbox(0).iter().map(|m| m.sender).collect();
        assert_eq!(senders, vec![1, 2, 3]);
    }

    #[test]
    fn snapshot_aggregates() {
        let mut r = rt(8, 64);
        for (active, words) in [(2usize, 10usize), (5, 40), (2, 10)] {
            // active machines: one sender plus (active - 1) receivers
            let per = words / (active - 1);
            for to in 1..active {
                r.send(0, to, MsgKind::Data, vec![0; per]).unwrap();
            }
            r.end_round().unwrap();
        }
        let u = r.metrics_snapshot();
        assert_eq!(u.rounds, 3);
        assert_eq!(u.max_active_per_round, 5);
        assert_eq!(u.total_comm, 60);
        assert_eq!(u.max_comm_per_round, 40);
        assert_eq!(r.metrics_snapshot().rounds, 0);
    }

    #[test]
    fn entropy_examples() {
        let round = |pairs: &[((usize, usize), usize)]| RoundMetrics {
            per_pair_words: pairs.iter().copied().collect(),
            ..Default::default()
        };
        assert_eq!(comm_entropy(&[round(&[((0, 1), 7)])]).unwrap(), 0.0);
        let four = round(&[((0, 1), 5), ((0, 2), 5), ((1, 2), 5), ((2, 3), 5)]);
        assert!((comm_entropy(&[four]).unwrap() - 2.0).abs() < 1e-12);
        let h = comm_entropy(&[round(&[((0, 1), 3)]), round(&[((1, 0), 1)])]).unwrap();
        assert!((h - 0.8113).abs() < 1e-4);
        assert_eq!(comm_entropy(&[round(&[])]), Err(DmpcError::NoCommunication));
        assert_eq!(comm_entropy(&[]), Err(DmpcError::EmptyWindow));
    }

    #[test]
    fn sizing_respects_invariants() {
        let c = SimConfig::sized(10_000, 8.0, 2.0, 0).unwrap();
        assert_eq!(c.machine_memory_s, 800);
        assert_eq!(c.machine_count_mu, 200);
        assert!(c.machine_memory_s * c.machine_count_mu >= c.capacity_n);
        assert!(SimConfig::sized(100, 0.5, 2.0, 0).is_err());
    }
}
