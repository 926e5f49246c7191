//! Fully-dynamic maximal matching on the simulated cluster.
//!
//! Machine 0 coordinates. Machines `1..=k` hold vertex statistics. The rest
//! hold adjacency blocks by vertex-ID range, or suspended edges of one heavy
//! vertex. Machines catch up lazily from the coordinator's update history.

use crate::error::{DmpcError, Result};
use crate::partition::{
    opt_word, BlockShard, Coordinator, Delta, DirEntry, EdgeCopy, HistoryEntry, Op, Role, Shard, StatsLayout,
    StatsShard, SuspendedShard, VertexRecord, NONE,
};
use crate::runtime::{MsgKind, Runtime, SimConfig, UpdateMetrics};
use crate::types::{ceil_sqrt, Edge, Graph, MachineId, Vertex, Word};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Maximal,
    ThreeHalves,
}

/// Counts of the less common code paths, for tests and reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PathCounts {
    pub steals: u64,
    pub augmentations: u64,
    pub fetches: u64,
    pub drains: u64,
    pub sheds: u64,
    pub splits: u64,
    pub merges: u64,
    pub suspended_pushes: u64,
    pub machine_refreshes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ReportKind {
    Free,
    All,
}

/// Pending change to one statistics record.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct RecordWrite {
    degree: Option<u32>,
    mate: Option<Option<Vertex>>,
    heavy: Option<bool>,
    top: Option<Option<MachineId>>,
    pub(crate) counter: i64,
}

impl RecordWrite {
    fn words(&self) -> usize {
        1 + self.degree.is_some() as usize
            + self.mate.is_some() as usize
            + self.heavy.is_some() as usize
            + self.top.is_some() as usize
            + (self.counter != 0) as usize
    }
}

/// What the coordinator learns and decides during one update.
#[derive(Debug)]
pub(crate) struct UpdateCtx {
    pub(crate) seq: u64,
    pub(crate) op: Op,
    pub(crate) x: Vertex,
    pub(crate) y: Vertex,
    pub(crate) recs: BTreeMap<Vertex, VertexRecord>,
    pub(crate) mate: BTreeMap<Vertex, Option<Vertex>>,
    pub(crate) start_matched: BTreeMap<Vertex, bool>,
    pub(crate) lists: BTreeMap<Vertex, Vec<EdgeCopy>>,
    pub(crate) writes: BTreeMap<Vertex, RecordWrite>,
    pub(crate) involved: BTreeSet<MachineId>,
    pub(crate) new_degree: BTreeMap<Vertex, u32>,
}

impl Default for UpdateCtx {
    fn default() -> Self {
        UpdateCtx {
            seq: 0,
            op: Op::Insert,
            x: 0,
            y: 0,
            recs: BTreeMap::new(),
            mate: BTreeMap::new(),
            start_matched: BTreeMap::new(),
            lists: BTreeMap::new(),
            writes: BTreeMap::new(),
            involved: BTreeSet::new(),
            new_degree: BTreeMap::new(),
        }
    }
}

impl UpdateCtx {
    fn words(&self) -> usize {
        2 * self.recs.len()
            + 2 * self.mate.len()
            + self.lists.values().map(|l| 1 + 2 * l.len()).sum::<usize>()
            + self.writes.values().map(|w| w.words()).sum::<usize>()
    }
}

pub struct MatchingEngine {
    pub(crate) rt: Runtime,
    pub(crate) mode: Mode,
    n: usize,
    tau: usize,
    pub(crate) coord: Coordinator,
    layout: StatsLayout,
    shards: Vec<Shard>,
    dirty: BTreeSet<MachineId>,
    fill: usize,
    pub(crate) ctx: UpdateCtx,
    pub(crate) counts: PathCounts,
    endpoints: Vec<Vertex>,
    bootstrap_rounds: usize,
}

impl MatchingEngine {
    /// Empty graph on `n` vertices with at most `m_max` edges at any time.
    pub fn new(n: usize, m_max: usize, c_s: f64, c_m: f64, seed: u64, mode: Mode) -> Result<Self> {
        if n < 2 {
            return Err(DmpcError::Config("need at least two vertices".into()));
        }
        let cap_n = n + m_max.max(1);
        let cfg = SimConfig::sized(cap_n, c_s, c_m, seed)?;
        Self::with_config(n, m_max, cfg, mode)
    }

    pub fn with_config(n: usize, m_max: usize, cfg: SimConfig, mode: Mode) -> Result<Self> {
        let mut rt = Runtime::new(cfg);
        let tau = ceil_sqrt(2 * m_max.max(1)).max(1);
        let layout = StatsLayout::new(n, cfg.sqrt_n());
        let h_max = ceil_sqrt(cfg.capacity_n).max(2);
        let s = cfg.machine_memory_s;
        if 1 + 3 * tau + 8 > s / 2 {
            return Err(DmpcError::Config("machine memory too small for one alive block".into()));
        }
        while rt.machine_count() < layout.first + layout.machines + 1 {
            rt.provision();
        }
        let count = rt.machine_count();
        let mut shards = vec![Shard::Idle; count];
        let mut dir = vec![DirEntry { role: Role::Idle, used: 0, last_refresh: 0 }; count];
        shards[0] = Shard::Coordinator;
        dir[0].role = Role::Coordinator;
        for i in 0..layout.machines {
            let m = layout.first + i;
            let (lo, hi) = layout.range(m);
            let hi = hi.min(n as Vertex);
            shards[m] = Shard::Stats(StatsShard {
                lo,
                records: vec![VertexRecord::default(); (hi - lo) as usize],
            });
            dir[m].role = Role::Stats;
        }
        let first_block = layout.first + layout.machines;
        shards[first_block] = Shard::Block(BlockShard { lo: 0, hi: n as Vertex, ..Default::default() });
        dir[first_block].role = Role::Block;
        let coord = Coordinator {
            history: VecDeque::new(),
            h_max,
            next_seq: 1,
            heavy: BTreeSet::new(),
            ranges: [(0, first_block)].into_iter().collect(),
            dir,
            pending: None,
        };
        let mut eng = MatchingEngine {
            rt,
            mode,
            n,
            tau,
            coord,
            layout,
            shards,
            dirty: (0..count).collect(),
            fill: s - 8,
            ctx: UpdateCtx::default(),
            counts: PathCounts::default(),
            endpoints: Vec::new(),
            bootstrap_rounds: 0,
        };
        eng.sync_words();
        Ok(eng)
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn runtime(&self) -> &Runtime {
        &self.rt
    }

    pub fn runtime_mut(&mut self) -> &mut Runtime {
        &mut self.rt
    }

    pub fn counts(&self) -> PathCounts {
        self.counts
    }

    pub fn bootstrap_rounds(&self) -> usize {
        self.bootstrap_rounds
    }

    pub fn history_len(&self) -> usize {
        self.coord.history.len()
    }

    pub fn h_max(&self) -> usize {
        self.coord.h_max
    }

    // ---- machine-side accessors -------------------------------------------

    fn stats_rec(&self, v: Vertex) -> &VertexRecord {
        match &self.shards[self.layout.machine_of(v)] {
            Shard::Stats(s) => &s.records[(v - s.lo) as usize],
            _ => unreachable!("stats machine"),
        }
    }

    fn stats_rec_mut(&mut self, v: Vertex) -> &mut VertexRecord {
        let m = self.layout.machine_of(v);
        self.dirty.insert(m);
        match &mut self.shards[m] {
            Shard::Stats(s) => &mut s.records[(v - s.lo) as usize],
            _ => unreachable!("stats machine"),
        }
    }

    fn block_mut(&mut self, m: MachineId) -> &mut BlockShard {
        self.dirty.insert(m);
        match &mut self.shards[m] {
            Shard::Block(b) => b,
            other => unreachable!("machine {m} is not a block machine: {other:?}"),
        }
    }

    pub(crate) fn susp_mut(&mut self, m: MachineId) -> &mut SuspendedShard {
        self.dirty.insert(m);
        match &mut self.shards[m] {
            Shard::Suspended(s) => s,
            other => unreachable!("machine {m} is not a suspended machine: {other:?}"),
        }
    }

    fn shard_words(&self, m: MachineId) -> usize {
        match &self.shards[m] {
            Shard::Idle => 0,
            Shard::Coordinator => self.coord.words(),
            Shard::Stats(s) => 1 + VertexRecord::WORDS * s.records.len(),
            Shard::Block(b) => b.words(),
            Shard::Suspended(s) => s.words(),
        }
    }

    fn sync_words(&mut self) {
        let dirty = std::mem::take(&mut self.dirty);
        for m in dirty {
            let w = self.shard_words(m);
            self.rt.set_resident(m, w);
        }
        let w = self.coord.words();
        self.rt.set_resident(0, w);
        self.rt.set_scratch(0, self.ctx.words());
    }

    pub(crate) fn end_round(&mut self) -> Result<()> {
        self.sync_words();
        self.rt.end_round()?;
        for m in 0..self.rt.machine_count() {
            if !self.rt.machine(m).inbox.is_empty() {
                self.rt.take_inbox(m);
            }
        }
        Ok(())
    }

    fn send(&mut self, from: MachineId, to: MachineId, kind: MsgKind, payload: Vec<Word>) -> Result<()> {
        self.rt.send(from, to, kind, payload)
    }

    /// Lowest idle machine.
    fn alloc(&mut self, role: Role) -> Result<MachineId> {
        let first_free = self.layout.first + self.layout.machines;
        let Some(m) = (first_free..self.coord.dir.len()).find(|&m| self.coord.dir[m].role == Role::Idle) else {
            return Err(DmpcError::OutOfMachines(self.coord.dir.len()));
        };
        self.coord.dir[m] = DirEntry {
            role,
            used: 0,
            last_refresh: self.coord.committed_seq(),
        };
        self.dirty.insert(m);
        Ok(m)
    }

    fn release(&mut self, m: MachineId) {
        self.coord.dir[m] = DirEntry { role: Role::Idle, used: 0, last_refresh: 0 };
        self.shards[m] = Shard::Idle;
        self.dirty.insert(m);
    }

    /// Delta for machine `m`, with deletions restricted to edges it can hold.
    pub(crate) fn delta_for(&self, m: MachineId) -> Delta {
        self.filtered_delta(m, self.coord.delta_since(self.coord.dir[m].last_refresh))
    }

    fn committed_delta_for(&self, m: MachineId) -> Delta {
        self.filtered_delta(m, self.coord.delta_committed(self.coord.dir[m].last_refresh))
    }

    fn filtered_delta(&self, m: MachineId, mut d: Delta) -> Delta {
        match &self.shards[m] {
            Shard::Block(b) => d.deletions.retain(|(e, _)| (b.lo..b.hi).contains(&e.u) || (b.lo..b.hi).contains(&e.v)),
            Shard::Suspended(s) => d.deletions.retain(|(e, _)| e.touches(s.owner)),
            _ => {}
        }
        d
    }

    // ---- coordinator knowledge -------------------------------------------

    pub(crate) fn is_heavy_now(&self, v: Vertex) -> bool {
        match self.ctx.new_degree.get(&v) {
            Some(&d) => d as usize > self.tau,
            None => self.coord.heavy.contains(&v),
        }
    }

    pub(crate) fn mate_known_now(&self, v: Vertex) -> Option<Vertex> {
        self.ctx.mate.get(&v).copied().flatten()
    }

    pub(crate) fn start_status(&self, v: Vertex) -> Option<bool> {
        self.ctx.start_matched.get(&v).copied()
    }

    pub(crate) fn mate_known(&self, v: Vertex, snapshot: Option<Vertex>) -> Option<Vertex> {
        match self.ctx.mate.get(&v) {
            Some(&m) => m,
            None => snapshot,
        }
    }

    fn note_start(&mut self, v: Vertex, current: Option<Vertex>) {
        self.ctx.start_matched.entry(v).or_insert(current.is_some());
        self.ctx.mate.entry(v).or_insert(current);
    }

    pub(crate) fn set_match(&mut self, a: Vertex, b: Vertex) {
        let (ma, mb) = (self.ctx.mate.get(&a).copied().flatten(), self.ctx.mate.get(&b).copied().flatten());
        debug_assert!(ma.is_none() && mb.is_none(), "matching matched vertex {a} {b}");
        self.ctx.start_matched.entry(a).or_insert(false);
        self.ctx.start_matched.entry(b).or_insert(false);
        self.ctx.mate.insert(a, Some(b));
        self.ctx.mate.insert(b, Some(a));
        self.coord.pending.as_mut().unwrap().triggered.push((Edge::new(a, b), true));
    }

    pub(crate) fn unmatch(&mut self, a: Vertex, b: Vertex) {
        self.ctx.start_matched.entry(a).or_insert(true);
        self.ctx.start_matched.entry(b).or_insert(true);
        self.ctx.mate.insert(a, None);
        self.ctx.mate.insert(b, None);
        self.coord.pending.as_mut().unwrap().triggered.push((Edge::new(a, b), false));
    }

    /// Copies of `v` as last reported, with mates corrected for this update.
    pub(crate) fn current_list(&self, v: Vertex) -> Vec<(Vertex, Option<Vertex>)> {
        self.ctx
            .lists
            .get(&v)
            .map(|l| l.iter().map(|c| (c.nbr, self.mate_known(c.nbr, c.mate))).collect())
            .unwrap_or_default()
    }

    fn first_free_neighbor(&self, v: Vertex, exclude: Option<Vertex>) -> Option<Vertex> {
        self.current_list(v)
            .into_iter()
            .filter(|&(w, m)| m.is_none() && Some(w) != exclude && w != v)
            .map(|(w, _)| w)
            .min()
    }

    // ---- rounds ------------------------------------------------------------

    /// Two rounds: record requests to the statistics machines and replies.
    pub(crate) fn read_records(&mut self, vs: &[Vertex]) -> Result<()> {
        let mut by_machine: BTreeMap<MachineId, Vec<Vertex>> = BTreeMap::new();
        for &v in vs {
            by_machine.entry(self.layout.machine_of(v)).or_default().push(v);
        }
        for (&m, list) in &by_machine {
            self.send(0, m, MsgKind::RecordRead, list.iter().map(|&v| v as Word).collect())?;
        }
        self.end_round()?;
        for (&m, list) in &by_machine {
            let mut payload = Vec::new();
            for &v in list {
                let rec = *self.stats_rec(v);
                rec.encode(v, &mut payload);
                self.ctx.recs.insert(v, rec);
                self.note_start(v, rec.mate);
            }
            self.send(m, 0, MsgKind::RecordReply, payload)?;
        }
        self.end_round()
    }

    /// Refreshes the block of `v` at its machine and returns its live copies.
    /// Machine-side step.
    pub(crate) fn refresh_block(&mut self, m: MachineId, v: Vertex, watch: Option<(Vertex, u64)>) -> (Vec<EdgeCopy>, bool) {
        let delta = self.delta_for(m);
        let b = self.block_mut(m);
        let list = b.blocks.entry(v).or_default();
        let (_, hit) = delta.apply_watch(v, list, watch);
        let copies = list.clone();
        if copies.is_empty() {
            b.blocks.remove(&v);
        }
        (copies, hit)
    }

    fn refresh_whole(&mut self, m: MachineId) {
        let delta = self.committed_delta_for(m);
        let committed = self.coord.committed_seq();
        match &mut self.shards[m] {
            Shard::Block(b) => {
                for (&v, list) in b.blocks.iter_mut() {
                    delta.apply(v, list);
                }
                b.blocks.retain(|_, l| !l.is_empty());
                b.last_refresh = committed;
            }
            Shard::Suspended(s) => {
                let owner = s.owner;
                delta.apply(owner, &mut s.copies);
                s.last_refresh = committed;
            }
            _ => {}
        }
        self.dirty.insert(m);
        self.coord.dir[m].last_refresh = committed;
        self.counts.machine_refreshes += 1;
    }

    fn report_words(kind: ReportKind, list: &[EdgeCopy]) -> Vec<Word> {
        let mut p = vec![list.len() as Word];
        for c in list {
            match kind {
                ReportKind::Free => {
                    if c.mate.is_none() {
                        p.push(c.nbr as Word);
                    }
                }
                ReportKind::All => c.encode(&mut p),
            }
        }
        p
    }

    fn kind_for(&self, v: Vertex) -> ReportKind {
        if self.mode == Mode::ThreeHalves || self.coord.heavy.contains(&v) || self.is_heavy_now(v) {
            ReportKind::All
        } else {
            ReportKind::Free
        }
    }

    /// Two rounds: ask the block machines of `vs` for their current lists.
    pub(crate) fn scan(&mut self, vs: &[Vertex]) -> Result<()> {
        let mut by_machine: BTreeMap<MachineId, Vec<Vertex>> = BTreeMap::new();
        for &v in vs {
            by_machine.entry(self.coord.block_of(v)).or_default().push(v);
        }
        for (&m, list) in &by_machine {
            let mut p = Vec::new();
            self.delta_for(m).encode(&mut p);
            p.extend(list.iter().map(|&v| v as Word));
            self.send(0, m, MsgKind::RefreshDelta, p)?;
            self.ctx.involved.insert(m);
        }
        self.end_round()?;
        for (&m, list) in &by_machine {
            let mut p = Vec::new();
            for &v in list {
                let (copies, _) = self.refresh_block(m, v, None);
                let kind = self.kind_for(v);
                p.extend(Self::report_words(kind, &copies));
                self.ctx.lists.insert(v, copies);
            }
            p.push(self.shard_words(m) as Word);
            self.coord.dir[m].used = self.shard_words(m);
            self.send(m, 0, MsgKind::Report, p)?;
        }
        self.end_round()
    }

    /// Round-robin refresh orders, sent with the record requests. A due
    /// block machine may also be merged with an adjacent range; the smaller
    /// side moves. Directory sizes are upper bounds since refreshes only
    /// drop copies.
    fn refresh_orders(&mut self) -> Result<Vec<(MachineId, Option<(MachineId, MachineId)>)>> {
        let due = self.coord.refresh_due(self.ctx.seq);
        let quarter = self.rt.s() / 4;
        let limit = self.rt.s() * 3 / 4;
        let mut taken: BTreeSet<MachineId> = due.iter().copied().collect();
        let mut orders = Vec::new();
        for &m in &due {
            let delta = self.committed_delta_for(m);
            let mut p = Vec::new();
            delta.encode(&mut p);
            let merge = self.merge_partner(m).filter(|a| !taken.contains(a)).and_then(|a| {
                let (um, ua) = (self.coord.dir[m].used, self.coord.dir[a].used);
                let mover = if um <= ua { m } else { a };
                (um + ua <= limit && um.min(ua) <= quarter).then_some((a, mover))
            });
            p.push(merge.map_or(NONE, |(a, _)| a as Word));
            self.rt.send(0, m, MsgKind::RefreshDelta, p)?;
            if let Some((a, mover)) = merge {
                taken.insert(a);
                if mover == a {
                    self.rt.send(0, a, MsgKind::EdgeMove, vec![m as Word])?;
                }
            }
            orders.push((m, merge));
        }
        Ok(orders)
    }

    /// Adjacent-range block machine with the fewest words.
    fn merge_partner(&self, m: MachineId) -> Option<MachineId> {
        let Shard::Block(b) = &self.shards[m] else { return None };
        let next = self.coord.ranges.range(b.hi..).next().map(|(_, &a)| a);
        let prev = if b.lo == 0 { None } else { Some(self.coord.block_of(b.lo - 1)) };
        [prev, next]
            .into_iter()
            .flatten()
            .filter(|&a| a != m)
            .min_by_key(|&a| self.coord.dir[a].used)
    }

    /// Machine side of a round-robin refresh followed by an optional merge.
    fn refresh_and_merge(&mut self, m: MachineId, merge: Option<(MachineId, MachineId)>) -> Result<()> {
        self.refresh_whole(m);
        let used = self.shard_words(m);
        self.coord.dir[m].used = used;
        let mut ack = vec![used as Word];
        if let Some((a, mover)) = merge {
            let target = if mover == m { a } else { m };
            let moved = match std::mem::take(&mut self.shards[mover]) {
                Shard::Block(b) => b,
                _ => unreachable!(),
            };
            let mut p = vec![moved.lo as Word, moved.hi as Word];
            for (&v, list) in &moved.blocks {
                p.push(v as Word);
                for c in list {
                    c.encode(&mut p);
                }
            }
            self.send(mover, target, MsgKind::EdgeMove, p)?;
            let dst = self.block_mut(target);
            dst.lo = dst.lo.min(moved.lo);
            dst.hi = dst.hi.max(moved.hi);
            dst.blocks.extend(moved.blocks);
            dst.last_refresh = dst.last_refresh.min(moved.last_refresh);
            let (lo, lr) = (dst.lo, dst.last_refresh);
            self.coord.ranges.retain(|_, &mut x| x != mover && x != target);
            self.coord.ranges.insert(lo, target);
            self.coord.dir[target].last_refresh = lr;
            self.coord.dir[target].used = self.shard_words(target);
            self.release(mover);
            self.counts.merges += 1;
            ack.push(target as Word);
        }
        if self.coord.dir[m].role != Role::Idle {
            self.send(m, 0, MsgKind::Report, ack)?;
        }
        Ok(())
    }

    /// Splits block machine `m`, moving its upper blocks, about a quarter of
    /// its memory, to a fresh machine. Machine-side step.
    fn split_block(&mut self, m: MachineId) -> Result<MachineId> {
        let fresh = self.alloc(Role::Block)?;
        let target = self.rt.s() / 4;
        let (keep_hi, moved) = {
            let b = self.block_mut(m);
            let total: usize = b.blocks.values().map(|l| 1 + 3 * l.len()).sum();
            let target = target.min(total / 2).max(1);
            let mut acc = 0;
            let mut mid = b.hi;
            for (&v, l) in b.blocks.iter().rev() {
                let w = 1 + 3 * l.len();
                if acc > 0 && acc + w > target {
                    break;
                }
                acc += w;
                mid = v;
            }
            if mid <= b.lo {
                mid = b.lo + (b.hi - b.lo) / 2;
            }
            let upper = b.blocks.split_off(&mid);
            let hi = b.hi;
            b.hi = mid;
            (mid, BlockShard { lo: mid, hi, blocks: upper, last_refresh: b.last_refresh })
        };
        let mut p = vec![keep_hi as Word];
        for (&v, list) in &moved.blocks {
            p.push(v as Word);
            for c in list {
                c.encode(&mut p);
            }
        }
        self.send(m, fresh, MsgKind::EdgeMove, p)?;
        let lr = moved.last_refresh;
        let lo = moved.lo;
        self.shards[fresh] = Shard::Block(moved);
        self.coord.ranges.insert(lo, fresh);
        self.coord.dir[fresh].last_refresh = lr;
        self.coord.dir[fresh].used = self.shard_words(fresh);
        self.coord.dir[m].used = self.shard_words(m);
        self.ctx.involved.insert(fresh);
        self.counts.splits += 1;
        Ok(fresh)
    }

    // ---- update driver -----------------------------------------------------

    pub fn insert(&mut self, x: Vertex, y: Vertex) -> Result<()> {
        self.update(Op::Insert, x, y)
    }

    pub fn delete(&mut self, x: Vertex, y: Vertex) -> Result<()> {
        self.update(Op::Delete, x, y)
    }

    /// Two rounds: a statistics lookup of mate(u) and mate(v).
    pub fn query(&mut self, u: Vertex, v: Vertex) -> Result<bool> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        self.ctx = UpdateCtx::default();
        self.read_records(&[u, v])?;
        let r = self.ctx.recs[&u].mate == Some(v);
        self.ctx = UpdateCtx::default();
        Ok(r)
    }

    fn check_vertex(&self, v: Vertex) -> Result<()> {
        if (v as usize) < self.n {
            Ok(())
        } else {
            Err(DmpcError::UnknownVertex(v))
        }
    }

    fn update(&mut self, op: Op, x: Vertex, y: Vertex) -> Result<()> {
        if x == y {
            return Err(DmpcError::SelfLoop(x));
        }
        self.check_vertex(x)?;
        self.check_vertex(y)?;
        let seq = self.coord.next_seq;
        self.coord.pending = Some(HistoryEntry { seq, op, edge: Edge::new(x, y), triggered: vec![], acks: [false; 2] });
        self.ctx = UpdateCtx { seq, op, x, y, ..Default::default() };
        match self.run_update(op, x, y) {
            Ok(()) => {
                let mut entry = self.coord.pending.take().unwrap();
                entry.acks = [true; 2];
                self.coord.next_seq += 1;
                self.coord.record_update(entry)?;
                self.endpoints = vec![x, y];
                self.ctx = UpdateCtx::default();
                self.sync_words();
                Ok(())
            }
            Err(e) => {
                self.coord.pending = None;
                self.ctx = UpdateCtx::default();
                self.sync_words();
                Err(e)
            }
        }
    }

    fn run_update(&mut self, op: Op, x: Vertex, y: Vertex) -> Result<()> {
        // Rounds 1-2: records of both endpoints; round-robin refresh rides along.
        let orders = self.refresh_orders()?;
        let mut by_machine: BTreeMap<MachineId, Vec<Vertex>> = BTreeMap::new();
        for v in [x, y] {
            by_machine.entry(self.layout.machine_of(v)).or_default().push(v);
        }
        for (&m, list) in &by_machine {
            self.send(0, m, MsgKind::RecordRead, list.iter().map(|&v| v as Word).collect())?;
        }
        self.end_round()?;
        for (m, partner) in orders {
            self.refresh_and_merge(m, partner)?;
        }
        for (&m, list) in &by_machine {
            let mut payload = Vec::new();
            for &v in list {
                let rec = *self.stats_rec(v);
                rec.encode(v, &mut payload);
                self.ctx.recs.insert(v, rec);
                self.note_start(v, rec.mate);
            }
            self.send(m, 0, MsgKind::RecordReply, payload)?;
        }
        self.end_round()?;

        let (rx, ry) = (self.ctx.recs[&x], self.ctx.recs[&y]);
        let step = |d: u32| if op == Op::Insert { d + 1 } else { d.saturating_sub(1) };
        self.ctx.new_degree.insert(x, step(rx.degree));
        self.ctx.new_degree.insert(y, step(ry.degree));

        // Rounds 3-4: refresh both endpoint blocks, check existence.
        let exists = self.refresh_endpoints(op, x, y)?;
        match (op, exists) {
            (Op::Insert, true) => return Err(DmpcError::DuplicateEdge(x, y)),
            (Op::Delete, false) => return Err(DmpcError::UnknownEdge(x, y)),
            _ => {}
        }

        // Alive windows of heavy endpoints.
        for (a, rec) in [(x, rx), (y, ry)] {
            if rec.heavy {
                self.fix_window(op, a, rec)?;
            }
        }

        match op {
            Op::Insert => self.decide_insert(x, y)?,
            Op::Delete => self.decide_delete(x, y)?,
        }
        if self.mode == Mode::ThreeHalves {
            self.counter_pass(op, x, y)?;
        }
        self.finish(op, x, y)
    }

    /// Rounds 3-4. Returns whether the edge was stored before this update.
    fn refresh_endpoints(&mut self, op: Op, x: Vertex, y: Vertex) -> Result<bool> {
        let seq = self.ctx.seq;
        let (rx, ry) = (self.ctx.recs[&x], self.ctx.recs[&y]);
        let mut needed: BTreeMap<MachineId, usize> = BTreeMap::new();
        for (a, rec) in [(x, rx), (y, ry)] {
            let m = self.coord.block_of(a);
            let extra = if op == Op::Insert { 3 } else { 0 } + if rec.heavy { 3 * self.tau } else { 0 };
            *needed.entry(m).or_insert(0) += extra;
        }
        let mut split: BTreeSet<MachineId> = BTreeSet::new();
        for (&m, &extra) in &needed {
            if self.coord.dir[m].used + extra > self.fill {
                split.insert(m);
            }
        }
        let mut orders: BTreeMap<MachineId, Vec<(Vertex, Vertex)>> = BTreeMap::new();
        for (a, b) in [(x, y), (y, x)] {
            let m = self.coord.block_of(a);
            orders.entry(m).or_default().push((a, b));
            self.ctx.involved.insert(m);
        }
        for (&m, list) in &orders {
            let mut p = Vec::new();
            self.delta_for(m).encode(&mut p);
            for &(a, b) in list {
                p.extend([a as Word, b as Word]);
            }
            p.push(split.contains(&m) as Word);
            self.send(0, m, MsgKind::RefreshDelta, p)?;
        }
        let probe: Vec<MachineId> = if rx.heavy && ry.heavy { self.coord.chain_machines(x) } else { vec![] };
        for &m in &probe {
            let mut p = Vec::new();
            self.delta_for(m).encode(&mut p);
            p.push(y as Word);
            self.send(0, m, MsgKind::PlacementQuery, p)?;
            self.ctx.involved.insert(m);
        }
        self.end_round()?;

        let mut had = false;
        for (&m, list) in &orders {
            let mut p = Vec::new();
            for &(a, b) in list {
                let watch = (op == Op::Delete).then_some((b, seq));
                let (copies, hit) = self.refresh_block(m, a, watch);
                let present = match op {
                    Op::Insert => copies.iter().any(|c| c.nbr == b),
                    Op::Delete => hit,
                };
                had |= present;
                let kind = self.kind_for(a);
                p.push(present as Word);
                p.extend(Self::report_words(kind, &copies));
                self.ctx.lists.insert(a, copies);
            }
            if split.contains(&m) {
                let fresh = self.split_block(m)?;
                p.push(fresh as Word);
            }
            self.coord.dir[m].used = self.shard_words(m);
            p.push(self.coord.dir[m].used as Word);
            self.send(m, 0, MsgKind::Report, p)?;
        }
        for &m in &probe {
            let delta = self.delta_for(m);
            let committed = self.coord.committed_seq();
            let s = self.susp_mut(m);
            let (_, hit) = delta.apply_watch(x, &mut s.copies, (op == Op::Delete).then_some((y, seq)));
            let present = match op {
                Op::Insert => s.copies.iter().any(|c| c.nbr == y),
                Op::Delete => hit,
            };
            s.last_refresh = committed;
            self.coord.dir[m].last_refresh = committed;
            had |= present;
            let used = self.shard_words(m);
            self.coord.dir[m].used = used;
            self.send(m, 0, MsgKind::PlacementReply, vec![present as Word, used as Word])?;
        }
        self.end_round()?;
        Ok(had)
    }

    /// Keeps a heavy vertex's alive block at exactly tau live copies, or
    /// drains its stack when it turns light.
    fn fix_window(&mut self, op: Op, a: Vertex, rec: VertexRecord) -> Result<()> {
        let new_deg = self.ctx.new_degree[&a] as usize;
        let ma = self.coord.block_of(a);
        if new_deg <= self.tau {
            // Turned light: the whole stack moves into the alive block.
            let chain = self.coord.chain_machines(a);
            for &m in &chain {
                let mut p = Vec::new();
                self.delta_for(m).encode(&mut p);
                p.push(ma as Word);
                self.send(0, m, MsgKind::PlacementQuery, p)?;
                self.ctx.involved.insert(m);
            }
            self.end_round()?;
            for &m in &chain {
                let delta = self.delta_for(m);
                let s = self.susp_mut(m);
                delta.apply(a, &mut s.copies);
                let copies = std::mem::take(&mut s.copies);
                let mut p = Vec::new();
                for c in &copies {
                    c.encode(&mut p);
                }
                if !p.is_empty() {
                    self.send(m, ma, MsgKind::EdgeMove, p.clone())?;
                    self.send(m, 0, MsgKind::Report, p)?;
                } else {
                    self.send(m, 0, MsgKind::Report, vec![0])?;
                }
                self.block_mut(ma).blocks.entry(a).or_default().extend(copies.iter().copied());
                self.ctx.lists.entry(a).or_default().extend(copies);
                self.release(m);
            }
            self.end_round()?;
            self.coord.dir[ma].used = self.shard_words(ma);
            let w = self.ctx.writes.entry(a).or_default();
            w.heavy = Some(false);
            w.top = Some(None);
            self.counts.drains += 1;
            let _ = op;
            return Ok(());
        }
        let alive = self.ctx.lists.get(&a).map_or(0, |l| l.len());
        let mut deficit = self.tau.saturating_sub(alive);
        let mut top = rec.suspended_top;
        let mut changed_top = false;
        while deficit > 0 {
            let Some(m) = top else { break };
            let mut p = Vec::new();
            self.delta_for(m).encode(&mut p);
            p.extend([deficit as Word, ma as Word]);
            self.send(0, m, MsgKind::PlacementQuery, p)?;
            self.ctx.involved.insert(m);
            self.end_round()?;
            let delta = self.delta_for(m);
            let committed = self.coord.committed_seq();
            let s = self.susp_mut(m);
            delta.apply(a, &mut s.copies);
            s.last_refresh = committed;
            // take the most recent copies from the top of the stack
            let take = deficit.min(s.copies.len());
            let split_at = s.copies.len() - take;
            let moved: Vec<EdgeCopy> = s.copies.split_off(split_at);
            let below = s.below;
            let empty = s.copies.is_empty();
            self.coord.dir[m].last_refresh = committed;
            let mut p = Vec::new();
            for c in &moved {
                c.encode(&mut p);
            }
            if !p.is_empty() {
                self.send(m, ma, MsgKind::EdgeMove, p.clone())?;
            }
            p.push(below.map_or(NONE, |b| b as Word));
            self.send(m, 0, MsgKind::Report, p)?;
            self.end_round()?;
            deficit -= moved.len();
            self.block_mut(ma).blocks.entry(a).or_default().extend(moved.iter().copied());
            self.ctx.lists.entry(a).or_default().extend(moved);
            self.coord.dir[ma].used = self.shard_words(ma);
            self.counts.fetches += 1;
            if empty {
                self.release(m);
                top = below;
                changed_top = true;
            } else {
                self.coord.dir[m].used = self.shard_words(m);
                break;
            }
        }
        if changed_top {
            self.ctx.writes.entry(a).or_default().top = Some(top);
            self.ctx.recs.get_mut(&a).unwrap().suspended_top = top;
        }
        Ok(())
    }

    fn decide_insert(&mut self, x: Vertex, y: Vertex) -> Result<()> {
        let mx = self.mate_known(x, None);
        let my = self.mate_known(y, None);
        match (mx, my) {
            (None, None) => self.set_match(x, y),
            (Some(_), Some(_)) => {}
            (None, Some(_)) => self.one_free(x, y)?,
            (Some(_), None) => self.one_free(y, x)?,
        }
        Ok(())
    }

    /// Insert of (free, matched).
    fn one_free(&mut self, free: Vertex, matched: Vertex) -> Result<()> {
        if self.mode == Mode::ThreeHalves && self.augment_through_mate(matched, free)? {
            return Ok(());
        }
        if self.is_heavy_now(free) {
            self.steal(free)?;
        }
        Ok(())
    }

    fn decide_delete(&mut self, x: Vertex, y: Vertex) -> Result<()> {
        if self.mate_known(x, None) != Some(y) {
            return Ok(());
        }
        self.unmatch(x, y);
        // direct rematches first so an augmentation cannot take the other endpoint's free neighbor
        for a in [x, y] {
            self.settle(a, false)?;
        }
        if self.mode == Mode::ThreeHalves {
            for a in [x, y] {
                self.settle(a, true)?;
            }
        }
        Ok(())
    }

    /// A vertex that just became free and whose list is current.
    /// With `augment`, only a length-3 augmentation is tried.
    pub(crate) fn settle(&mut self, a: Vertex, augment: bool) -> Result<()> {
        if self.mate_known(a, None).is_some() {
            return Ok(());
        }
        if augment {
            self.augment_from(a)?;
            return Ok(());
        }
        if self.is_heavy_now(a) {
            return self.steal(a);
        }
        if let Some(w) = self.first_free_neighbor(a, None) {
            self.set_match(a, w);
        }
        Ok(())
    }

    /// Heavy free vertex: take an alive neighbor whose mate is light and
    /// rematch that mate.
    fn steal(&mut self, x: Vertex) -> Result<()> {
        if let Some(w) = self.first_free_neighbor(x, None) {
            self.set_match(x, w);
            return Ok(());
        }
        let list = self.current_list(x);
        let pick = list
            .iter()
            .filter_map(|&(w, m)| m.map(|z| (w, z)))
            .filter(|&(_, z)| z != x && !self.is_heavy_now(z))
            .min();
        let Some((w, z)) = pick else {
            return Err(DmpcError::CountingInvariant(x));
        };
        self.note_start(w, Some(z));
        self.note_start(z, Some(w));
        self.unmatch(w, z);
        self.set_match(x, w);
        self.counts.steals += 1;
        self.scan(&[z])?;
        if let Some(q) = self.first_free_neighbor(z, None) {
            self.set_match(z, q);
        } else if self.mode == Mode::ThreeHalves {
            self.augment_from(z)?;
        }
        Ok(())
    }

    /// Final round: statistics writes, storage of an inserted edge.
    fn finish(&mut self, op: Op, x: Vertex, y: Vertex) -> Result<()> {
        // mates that changed
        let changed: Vec<(Vertex, Option<Vertex>)> = self
            .ctx
            .mate
            .iter()
            .filter(|(v, m)| self.ctx.start_matched.get(v).copied() != Some(m.is_some()) || self.mate_changed(**v, **m))
            .map(|(&v, &m)| (v, m))
            .collect();
        for (v, m) in changed {
            self.ctx.writes.entry(v).or_default().mate = Some(m);
        }
        for a in [x, y] {
            let d = self.ctx.new_degree[&a];
            let w = self.ctx.writes.entry(a).or_default();
            w.degree = Some(d);
        }
        if op == Op::Insert {
            for (a, b) in [(x, y), (y, x)] {
                self.store_copy(a, b)?;
            }
        }
        // statistics writes, one message per statistics machine
        let writes = std::mem::take(&mut self.ctx.writes);
        let mut by_machine: BTreeMap<MachineId, Vec<Word>> = BTreeMap::new();
        for (&v, w) in &writes {
            let p = by_machine.entry(self.layout.machine_of(v)).or_default();
            p.push(v as Word);
            if let Some(d) = w.degree {
                p.push(d as Word);
            }
            if let Some(m) = w.mate {
                p.push(opt_word(m));
            }
            if let Some(h) = w.heavy {
                p.push(h as Word);
            }
            if let Some(t) = w.top {
                p.push(t.map_or(NONE, |t| t as Word));
            }
            if w.counter != 0 {
                p.push(w.counter as Word);
            }
        }
        for (m, p) in by_machine {
            self.send(0, m, MsgKind::RecordWrite, p)?;
        }
        for (&v, w) in &writes {
            let tau = self.tau;
            let r = self.stats_rec_mut(v);
            if let Some(d) = w.degree {
                r.degree = d;
                r.heavy = d as usize > tau;
            }
            if let Some(m) = w.mate {
                r.mate = m;
            }
            if let Some(h) = w.heavy {
                r.heavy = h;
            }
            if let Some(t) = w.top {
                r.suspended_top = t;
            }
            r.free_neighbors = (r.free_neighbors as i64 + w.counter) as u32;
            if r.heavy {
                self.coord.heavy.insert(v);
            } else {
                self.coord.heavy.remove(&v);
            }
        }
        self.end_round()
    }

    fn mate_changed(&self, v: Vertex, m: Option<Vertex>) -> bool {
        match self.ctx.recs.get(&v) {
            Some(r) => r.mate != m,
            None => true,
        }
    }

    /// Storage of the copy of the new edge at endpoint `a`. Machine sides are
    /// applied as the order is sent; all orders share the final round.
    fn store_copy(&mut self, a: Vertex, b: Vertex) -> Result<()> {
        let seq = self.ctx.seq;
        let copy = EdgeCopy { nbr: b, mate: self.mate_known(b, self.ctx.recs[&b].mate), stamp: seq };
        let rec = self.ctx.recs[&a];
        let new_deg = self.ctx.new_degree[&a] as usize;
        let ma = self.coord.block_of(a);
        let mut p = Vec::new();
        copy.encode(&mut p);
        if !rec.heavy && new_deg <= self.tau {
            p.push(a as Word);
            self.send(0, ma, MsgKind::EdgeMove, p)?;
            self.block_mut(ma).blocks.entry(a).or_default().push(copy);
            self.coord.dir[ma].used = self.shard_words(ma);
            return Ok(());
        }
        if !rec.heavy {
            // Crossed the threshold: one non-matched copy leaves the alive block.
            let mate = self.mate_known(a, rec.mate);
            let mut list = self.ctx.lists.get(&a).cloned().unwrap_or_default();
            list.push(copy);
            let shed = list
                .iter()
                .filter(|c| Some(c.nbr) != mate)
                .max_by_key(|c| c.nbr)
                .copied()
                .expect("a crossing vertex has a non-matched copy");
            let fresh = self.alloc(Role::Suspended(a))?;
            self.shards[fresh] =
                Shard::Suspended(SuspendedShard { owner: a, copies: vec![shed], below: None, last_refresh: self.coord.committed_seq() });
            let mut q = Vec::new();
            shed.encode(&mut q);
            q.push(a as Word);
            self.send(0, fresh, MsgKind::EdgeMove, q)?;
            p.extend([a as Word, shed.nbr as Word, shed.stamp]);
            self.send(0, ma, MsgKind::EdgeMove, p)?;
            let blk = self.block_mut(ma).blocks.entry(a).or_default();
            blk.push(copy);
            blk.retain(|c| !(c.nbr == shed.nbr && c.stamp == shed.stamp));
            self.coord.dir[ma].used = self.shard_words(ma);
            self.coord.dir[fresh].used = self.shard_words(fresh);
            let w = self.ctx.writes.entry(a).or_default();
            w.heavy = Some(true);
            w.top = Some(Some(fresh));
            self.counts.sheds += 1;
            return Ok(());
        }
        // Heavy: push onto the suspended stack.
        let top = self.ctx.recs[&a].suspended_top;
        let cap = SuspendedShard::capacity(self.rt.s());
        match top {
            Some(t) if matches!(&self.shards[t], Shard::Suspended(s) if s.copies.len() < cap) => {
                self.send(0, t, MsgKind::EdgeMove, p)?;
                self.susp_mut(t).copies.push(copy);
                self.coord.dir[t].used = self.shard_words(t);
            }
            _ => {
                let fresh = self.alloc(Role::Suspended(a))?;
                self.shards[fresh] =
                    Shard::Suspended(SuspendedShard { owner: a, copies: vec![copy], below: top, last_refresh: self.coord.committed_seq() });
                p.push(top.map_or(NONE, |t| t as Word));
                self.send(0, fresh, MsgKind::EdgeMove, p)?;
                self.coord.dir[fresh].used = self.shard_words(fresh);
                self.ctx.writes.entry(a).or_default().top = Some(Some(fresh));
                self.counts.suspended_pushes += 1;
            }
        }
        Ok(())
    }

    // ---- loading and bootstrap -------------------------------------------

    /// Places `g` on the machines without charging rounds.
    pub fn load(&mut self, g: &Graph) -> Result<()> {
        assert_eq!(g.n(), self.n);
        let mut alive: BTreeMap<Vertex, Vec<EdgeCopy>> = BTreeMap::new();
        for v in 0..self.n as Vertex {
            let mut copies: Vec<EdgeCopy> = g.neighbors(v).iter().map(|&u| EdgeCopy { nbr: u, mate: None, stamp: 0 }).collect();
            let deg = copies.len();
            let heavy = deg > self.tau;
            let mut top = None;
            if heavy {
                let rest = copies.split_off(self.tau);
                let cap = SuspendedShard::capacity(self.rt.s());
                for chunk in rest.chunks(cap) {
                    let m = self.alloc(Role::Suspended(v))?;
                    self.shards[m] = Shard::Suspended(SuspendedShard { owner: v, copies: chunk.to_vec(), below: top, last_refresh: 0 });
                    self.coord.dir[m].used = self.shard_words(m);
                    top = Some(m);
                }
                self.coord.heavy.insert(v);
            }
            if !copies.is_empty() {
                alive.insert(v, copies);
            }
            let r = self.stats_rec_mut(v);
            *r = VertexRecord { degree: deg as u32, mate: None, suspended_top: top, heavy, free_neighbors: deg as u32 };
        }
        // pack blocks into ranges, filling machines to about half
        let target = self.rt.s() / 2;
        let first = *self.coord.ranges.values().next().unwrap();
        let mut current = first;
        self.block_mut(current).blocks.clear();
        let mut words = 3;
        let mut lo = 0;
        for (v, copies) in alive {
            let w = 1 + 3 * copies.len();
            if words + w > target && words > 3 {
                self.block_mut(current).hi = v;
                self.coord.dir[current].used = self.shard_words(current);
                current = self.alloc(Role::Block)?;
                self.shards[current] = Shard::Block(BlockShard { lo: v, hi: self.n as Vertex, blocks: BTreeMap::new(), last_refresh: 0 });
                self.coord.ranges.insert(v, current);
                words = 3;
                lo = v;
            }
            words += w;
            self.block_mut(current).blocks.insert(v, copies);
        }
        let _ = lo;
        self.block_mut(current).hi = self.n as Vertex;
        self.coord.dir[current].used = self.shard_words(current);
        for d in self.coord.dir.iter_mut() {
            d.last_refresh = 0;
        }
        self.sync_words();
        Ok(())
    }

    /// Randomized proposal rounds until no edge joins two free vertices.
    pub fn bootstrap(&mut self) -> Result<usize> {
        let seed = self.rt.config().rng_seed;
        let before = self.rt.rounds_done();
        let mut iteration = 0u64;
        loop {
            // machines holding copies, with the free-free edges they see
            let holders = self.copy_holders();
            let mut any = false;
            let mut proposals: BTreeMap<MachineId, Vec<(Vertex, Vertex, MachineId)>> = BTreeMap::new();
            let mut flags = Vec::new();
            for &(m, ref owned) in &holders {
                let mut has = false;
                for (v, copies) in owned {
                    if self.stats_rec(*v).mate.is_some() {
                        continue;
                    }
                    let free: Vec<Vertex> = copies.iter().filter(|c| c.mate.is_none()).map(|c| c.nbr).collect();
                    if free.is_empty() {
                        continue;
                    }
                    has = true;
                    if !coin(seed, iteration, *v) {
                        continue;
                    }
                    let tails: Vec<Vertex> = free.iter().copied().filter(|&u| !coin(seed, iteration, u)).collect();
                    if tails.is_empty() {
                        continue;
                    }
                    let pick = tails[(mix(seed ^ 0x5bd1, iteration, *v) % tails.len() as u64) as usize];
                    proposals.entry(self.home_of(pick)).or_default().push((*v, pick, m));
                }
                if has {
                    any = true;
                    flags.push(m);
                }
            }
            for &m in &flags {
                self.send(m, 0, MsgKind::Report, vec![1])?;
            }
            let mut sent: BTreeMap<(MachineId, MachineId), Vec<Word>> = BTreeMap::new();
            for (&to, list) in &proposals {
                for &(v, u, from) in list {
                    sent.entry((from, to)).or_default().extend([v as Word, u as Word]);
                }
            }
            for ((from, to), p) in sent {
                self.send(from, to, MsgKind::Proposal, p)?;
            }
            self.end_round()?;
            if !any {
                break;
            }
            // tails accept the smallest proposer
            let mut accepted: BTreeMap<Vertex, Vertex> = BTreeMap::new();
            let mut origin: BTreeMap<Vertex, MachineId> = BTreeMap::new();
            for list in proposals.values() {
                for &(v, u, from) in list {
                    let e = accepted.entry(u).or_insert(v);
                    if v <= *e {
                        *e = v;
                        origin.insert(v, from);
                    }
                }
            }
            let mut acc_msgs: BTreeMap<(MachineId, MachineId), Vec<Word>> = BTreeMap::new();
            for (&u, &v) in &accepted {
                acc_msgs.entry((self.home_of(u), origin[&v])).or_default().extend([u as Word, v as Word]);
            }
            for ((from, to), p) in acc_msgs {
                self.send(from, to, MsgKind::Accept, p)?;
            }
            self.end_round()?;
            // newly matched vertices notify every machine holding a copy of them
            let mut notes: BTreeMap<(MachineId, MachineId), Vec<Word>> = BTreeMap::new();
            let mut stats_writes: BTreeMap<(MachineId, MachineId), Vec<Word>> = BTreeMap::new();
            let mut new_mates: BTreeMap<Vertex, Vertex> = BTreeMap::new();
            for (&u, &v) in &accepted {
                new_mates.insert(u, v);
                new_mates.insert(v, u);
            }
            for &(m, ref owned) in &holders {
                for (v, copies) in owned {
                    for c in copies {
                        if let Some(&mate) = new_mates.get(&c.nbr) {
                            let src = self.home_of(c.nbr);
                            notes.entry((src, m)).or_default().extend([c.nbr as Word, mate as Word]);
                        }
                    }
                    let _ = v;
                }
            }
            for (&v, &mate) in &new_mates {
                stats_writes
                    .entry((self.home_of(v), self.layout.machine_of(v)))
                    .or_default()
                    .extend([v as Word, mate as Word]);
            }
            for ((from, to), mut p) in notes {
                p.dedup();
                self.send(from, to, MsgKind::Data, p)?;
            }
            for ((from, to), p) in stats_writes {
                self.send(from, to, MsgKind::RecordWrite, p)?;
            }
            for (&v, &mate) in &new_mates {
                self.stats_rec_mut(v).mate = Some(mate);
            }
            self.apply_mates_everywhere(&new_mates);
            self.end_round()?;
            iteration += 1;
        }
        // free-neighbor counters from the final snapshots, one write per machine
        let mut writes: BTreeMap<(MachineId, MachineId), Vec<Word>> = BTreeMap::new();
        let holders = self.copy_holders();
        let mut counts: BTreeMap<Vertex, u32> = BTreeMap::new();
        for (m, owned) in &holders {
            for (v, copies) in owned {
                let free = copies.iter().filter(|c| c.mate.is_none()).count() as u32;
                *counts.entry(*v).or_insert(0) += free;
                writes.entry((*m, self.layout.machine_of(*v))).or_default().extend([*v as Word, free as Word]);
            }
        }
        if self.mode == Mode::ThreeHalves {
            for ((from, to), p) in writes {
                self.send(from, to, MsgKind::Counter, p)?;
            }
            self.end_round()?;
        }
        for v in 0..self.n as Vertex {
            let c = counts.get(&v).copied().unwrap_or(0);
            self.stats_rec_mut(v).free_neighbors = c;
        }
        self.sync_words();
        self.bootstrap_rounds = (self.rt.rounds_done() - before) as usize;
        Ok(self.bootstrap_rounds)
    }

    /// Machine holding the statistics-facing copy of `v`: its block machine.
    fn home_of(&self, v: Vertex) -> MachineId {
        self.coord.block_of(v)
    }

    fn copy_holders(&self) -> Vec<(MachineId, Vec<(Vertex, Vec<EdgeCopy>)>)> {
        let mut out = Vec::new();
        for (m, s) in self.shards.iter().enumerate() {
            match s {
                Shard::Block(b) => out.push((m, b.blocks.iter().map(|(&v, l)| (v, l.clone())).collect())),
                Shard::Suspended(s) => out.push((m, vec![(s.owner, s.copies.clone())])),
                _ => {}
            }
        }
        out
    }

    fn apply_mates_everywhere(&mut self, mates: &BTreeMap<Vertex, Vertex>) {
        for m in 0..self.shards.len() {
            let mut touched = false;
            match &mut self.shards[m] {
                Shard::Block(b) => {
                    for l in b.blocks.values_mut() {
                        for c in l.iter_mut() {
                            if let Some(&x) = mates.get(&c.nbr) {
                                c.mate = Some(x);
                                touched = true;
                            }
                        }
                    }
                }
                Shard::Suspended(s) => {
                    for c in s.copies.iter_mut() {
                        if let Some(&x) = mates.get(&c.nbr) {
                            c.mate = Some(x);
                            touched = true;
                        }
                    }
                }
                _ => {}
            }
            if touched {
                self.dirty.insert(m);
            }
        }
    }

    // ---- inspection for oracles ---------------------------------------------

    /// Matched edges read from the statistics machines, sorted.
    pub fn matching(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for v in 0..self.n as Vertex {
            if let Some(m) = self.stats_rec(v).mate {
                if v < m {
                    out.push(Edge::new(v, m));
                }
            }
        }
        out
    }

    pub fn record(&self, v: Vertex) -> VertexRecord {
        *self.stats_rec(v)
    }

    pub fn heavy_vertices(&self) -> Vec<Vertex> {
        self.coord.heavy.iter().copied().collect()
    }

    pub fn free_counters(&self) -> Vec<u32> {
        (0..self.n as Vertex).map(|v| self.stats_rec(v).free_neighbors).collect()
    }

    /// Endpoints of the last successful update.
    pub fn last_endpoints(&self) -> &[Vertex] {
        &self.endpoints
    }

    pub fn metrics_snapshot(&mut self) -> UpdateMetrics {
        self.rt.metrics_snapshot()
    }

    /// Live copies per vertex after replaying history on every machine.
    fn live_copies(&self) -> BTreeMap<Vertex, (Vec<EdgeCopy>, Vec<EdgeCopy>)> {
        let mut out: BTreeMap<Vertex, (Vec<EdgeCopy>, Vec<EdgeCopy>)> = BTreeMap::new();
        for (m, s) in self.shards.iter().enumerate() {
            let delta = self.coord.delta_since(self.coord.dir[m].last_refresh);
            match s {
                Shard::Block(b) => {
                    for (&v, l) in &b.blocks {
                        let mut l = l.clone();
                        delta.apply(v, &mut l);
                        out.entry(v).or_default().0.extend(l);
                    }
                }
                Shard::Suspended(sh) => {
                    let mut l = sh.copies.clone();
                    delta.apply(sh.owner, &mut l);
                    out.entry(sh.owner).or_default().1.extend(l);
                }
                _ => {}
            }
        }
        out
    }

    /// Checks placement soundness, records, snapshots, history sufficiency
    /// and the machine-count bound against the plain graph.
    pub fn check_placement(&self, g: &Graph) -> std::result::Result<(), String> {
        let live = self.live_copies();
        let mate: Vec<Option<Vertex>> = (0..self.n as Vertex).map(|v| self.stats_rec(v).mate).collect();
        for v in 0..self.n as Vertex {
            let (alive, susp) = live.get(&v).cloned().unwrap_or_default();
            let mut nbrs: Vec<Vertex> = alive.iter().chain(susp.iter()).map(|c| c.nbr).collect();
            nbrs.sort_unstable();
            let expect: Vec<Vertex> = g.neighbors(v).iter().copied().collect();
            if nbrs != expect {
                return Err(format!("vertex {v}: stored neighbors {nbrs:?} differ from graph {expect:?}"));
            }
            let rec = self.stats_rec(v);
            if rec.degree as usize != expect.len() {
                return Err(format!("vertex {v}: degree {} vs {}", rec.degree, expect.len()));
            }
            let heavy = expect.len() > self.tau;
            if rec.heavy != heavy || self.coord.heavy.contains(&v) != heavy {
                return Err(format!("vertex {v}: heavy flag wrong"));
            }
            if !heavy && !susp.is_empty() {
                return Err(format!("light vertex {v} has suspended edges"));
            }
            if heavy && alive.len() > self.tau {
                return Err(format!("heavy vertex {v} has {} alive copies", alive.len()));
            }
            if heavy && self.endpoints.contains(&v) && alive.len() != self.tau {
                return Err(format!("heavy vertex {v} has {} live alive copies after refresh", alive.len()));
            }
            for c in alive.iter().chain(susp.iter()) {
                if c.mate != mate[c.nbr as usize] {
                    return Err(format!("copy {v}->{} has stale mate {:?}", c.nbr, c.mate));
                }
            }
        }
        let now = self.coord.committed_seq();
        for (m, d) in self.coord.dir.iter().enumerate() {
            if matches!(d.role, Role::Block | Role::Suspended(_)) && now - d.last_refresh > self.coord.h_max as u64 {
                return Err(format!("machine {m} is {} updates stale", now - d.last_refresh));
            }
        }
        let in_use = self.coord.dir.iter().filter(|d| d.role != Role::Idle).count();
        let stored: usize = (0..self.shards.len())
            .filter(|&m| matches!(self.shards[m], Shard::Block(_) | Shard::Suspended(_)))
            .map(|m| self.shard_words(m))
            .sum();
        let bound = 2 * stored.div_ceil(self.rt.s()) + 2 + self.layout.machines + self.coord.heavy.len();
        if in_use > bound {
            return Err(format!("{in_use} machines in use, bound {bound}"));
        }
        Ok(())
    }
}

pub(crate) fn mix(seed: u64, a: u64, b: Vertex) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (b as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fair coin per (iteration, vertex), identical on every machine.
fn coin(seed: u64, iteration: u64, v: Vertex) -> bool {
    mix(seed, iteration, v) & 1 == 1
}
