//! Fully-dynamic connected components over distributed Euler tours.
//!
//! Vertex-range block machines hold every vertex's adjacency. A tree-edge
//! copy stores the starts of its two traversals; a vertex's first and last
//! index are recomputed from its tree copies. A non-tree copy caches the far
//! endpoint's component and one of its indexes. Tour changes are broadcast
//! to every machine in use as a few words of pointwise arithmetic.

pub mod preprocess;
pub mod tour;

use crate::error::{DmpcError, Result};
use crate::oracle::Witness;
use crate::runtime::{MsgKind, Multicast, Runtime, SimConfig, UpdateMetrics};
use crate::types::{Edge, Graph, MachineId, Vertex, Weight, Word};
use std::collections::{BTreeMap, BTreeSet};
use tour::{after_cut, cut_index, link_index_x, link_index_y, link_traversals, reroot_index, splice_point, CutIndex};

/// Replacement choice after a tree-edge deletion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForestMode {
    /// Any straddling edge, smallest endpoint pair.
    Components,
    /// Lightest straddling edge; inserts swap out a heavier path edge.
    MinForest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestCopy {
    pub nbr: Vertex,
    pub weight: Weight,
    /// Starts of the traversal to `nbr` and of the one back.
    pub tree: Option<(u64, u64)>,
    pub far_comp: u64,
    /// Some index of `nbr`, 0 when it is a singleton.
    pub anchor: u64,
}

impl ForestCopy {
    pub const WORDS: usize = 6;
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VertexState {
    pub comp: u64,
    pub f: u64,
    pub l: u64,
    pub copies: Vec<ForestCopy>,
}

impl VertexState {
    pub fn words(&self) -> usize {
        4 + ForestCopy::WORDS * self.copies.len()
    }

    /// Indexes owned by this vertex: the start of each outgoing traversal
    /// and the end of each incoming one.
    pub fn indexes(&self) -> impl Iterator<Item = u64> + '_ {
        self.copies.iter().filter_map(|c| c.tree).flat_map(|(a, b)| [a, b + 1])
    }

    fn recompute(&mut self) {
        self.f = self.indexes().min().unwrap_or(0);
        self.l = self.indexes().max().unwrap_or(0);
    }
}

#[derive(Debug, Clone, Default)]
pub struct ForestBlock {
    pub lo: Vertex,
    pub hi: Vertex,
    pub verts: BTreeMap<Vertex, VertexState>,
}

impl ForestBlock {
    pub fn words(&self) -> usize {
        2 + self.verts.values().map(|s| s.words()).sum::<usize>()
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) enum FShard {
    #[default]
    Idle,
    Coordinator,
    /// Sizes of non-singleton components.
    Records(BTreeMap<u64, u64>),
    Block(ForestBlock),
}

/// Broadcast tour operations. Each machine applies them to all indexes it
/// holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TourOp {
    Link {
        cx: u64,
        cy: u64,
        x: Vertex,
        y: Vertex,
        l_y: u64,
        len_y: u64,
        p: u64,
        /// Weight of a new edge; `None` promotes an existing non-tree edge.
        new_edge: Option<Weight>,
        /// Size of y's side, for the record machines.
        size_y: u64,
    },
    Cut {
        c: u64,
        c2: u64,
        x: Vertex,
        y: Vertex,
        f_y: u64,
        l_y: u64,
        anchor_x: u64,
        anchor_y: u64,
        /// Keep (x, y) as a non-tree edge instead of deleting it.
        keep: bool,
    },
}

impl TourOp {
    fn encode(&self) -> Vec<Word> {
        match *self {
            TourOp::Link { cx, cy, x, y, l_y, len_y, p, new_edge, size_y } => {
                vec![1, cx, cy, x as Word, y as Word, l_y, len_y, p, new_edge.unwrap_or(Word::MAX), size_y]
            }
            TourOp::Cut { c, c2, x, y, f_y, l_y, anchor_x, anchor_y, keep } => {
                vec![2, c, c2, x as Word, y as Word, f_y, l_y, anchor_x, anchor_y, keep as Word]
            }
        }
    }
}

/// A straddling non-tree edge found after a cut, with the local endpoint's
/// post-cut values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Candidate {
    pub v: Vertex,
    pub w: Vertex,
    pub weight: Weight,
    pub comp_v: u64,
    pub f_v: u64,
    pub l_v: u64,
}

impl Candidate {
    fn key(&self, mode: ForestMode) -> (Weight, Vertex, Vertex) {
        let w = if mode == ForestMode::MinForest { self.weight } else { 0 };
        (w, self.v.min(self.w), self.v.max(self.w))
    }
}

/// Vertex values read from its block machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Header {
    pub comp: u64,
    pub f: u64,
    pub l: u64,
    /// The queried edge's copy at this vertex, if stored.
    pub edge: Option<ForestCopy>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ForestCounts {
    pub links: u64,
    pub cuts: u64,
    pub replacements: u64,
    pub swaps: u64,
    pub splits: u64,
}

pub struct ForestEngine {
    pub(crate) rt: Runtime,
    pub(crate) mode: ForestMode,
    n: usize,
    pub(crate) shards: Vec<FShard>,
    pub(crate) ranges: BTreeMap<Vertex, MachineId>,
    pub(crate) used: Vec<usize>,
    pub(crate) rec_first: MachineId,
    pub(crate) rec_count: usize,
    pub(crate) next_comp: u64,
    fill: usize,
    pub(crate) counts: ForestCounts,
}

impl ForestEngine {
    pub fn new(n: usize, m_max: usize, c_s: f64, c_m: f64, seed: u64, mode: ForestMode) -> Result<Self> {
        if n < 2 {
            return Err(DmpcError::Config("need at least two vertices".into()));
        }
        let cfg = SimConfig::sized(n + m_max.max(1), c_s, c_m, seed)?;
        Self::with_config(n, cfg, mode)
    }

    pub fn with_config(n: usize, cfg: SimConfig, mode: ForestMode) -> Result<Self> {
        let rt = Runtime::new(cfg);
        let s = cfg.machine_memory_s;
        let count = rt.machine_count();
        let rec_count = (32 * n).div_ceil(s).max(1);
        let rec_first = 1;
        if rec_first + rec_count >= count {
            return Err(DmpcError::OutOfMachines(count));
        }
        let mut shards = vec![FShard::Idle; count];
        shards[0] = FShard::Coordinator;
        for shard in &mut shards[rec_first..rec_first + rec_count] {
            *shard = FShard::Records(BTreeMap::new());
        }
        let mut eng = ForestEngine {
            rt,
            mode,
            n,
            shards,
            ranges: BTreeMap::new(),
            used: vec![0; count],
            rec_first,
            rec_count,
            next_comp: n as u64,
            fill: s * 3 / 4,
            counts: ForestCounts::default(),
        };
        // vertex headers packed to half a machine each
        let per = ((s / 2 - 2) / 4).max(1);
        let mut lo = 0usize;
        while lo < n {
            let hi = (lo + per).min(n);
            let m = eng.alloc()?;
            let verts = (lo..hi).map(|v| (v as Vertex, VertexState { comp: v as u64, ..Default::default() })).collect();
            eng.shards[m] = FShard::Block(ForestBlock { lo: lo as Vertex, hi: hi as Vertex, verts });
            eng.ranges.insert(lo as Vertex, m);
            eng.sync(m);
            lo = hi;
        }
        eng.sync_all();
        Ok(eng)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Places a graph on empty machines without charging rounds. Every edge
    /// starts as a non-tree edge between singleton components.
    pub fn load(&mut self, g: &Graph) -> Result<()> {
        assert_eq!(g.n(), self.n);
        for m in std::mem::take(&mut self.ranges).into_values() {
            self.shards[m] = FShard::Idle;
        }
        let target = self.rt.s() / 2;
        let mut block = ForestBlock::default();
        for v in 0..self.n as Vertex {
            let copies = g
                .neighbors(v)
                .iter()
                .map(|&u| ForestCopy { nbr: u, weight: g.weight(v, u).unwrap(), tree: None, far_comp: u as u64, anchor: 0 })
                .collect();
            let st = VertexState { comp: v as u64, f: 0, l: 0, copies };
            if st.words() + 2 > self.fill {
                return Err(DmpcError::Config(format!("adjacency of vertex {v} does not fit on one machine")));
            }
            if block.words() + st.words() > target && !block.verts.is_empty() {
                block.hi = v;
                self.place(std::mem::take(&mut block))?;
                block.lo = v;
            }
            block.verts.insert(v, st);
        }
        block.hi = self.n as Vertex;
        self.place(block)?;
        self.sync_all();
        Ok(())
    }

    fn place(&mut self, b: ForestBlock) -> Result<()> {
        let m = self.alloc()?;
        self.ranges.insert(b.lo, m);
        self.shards[m] = FShard::Block(b);
        Ok(())
    }

    pub fn runtime(&self) -> &Runtime {
        &self.rt
    }

    pub fn runtime_mut(&mut self) -> &mut Runtime {
        &mut self.rt
    }

    pub fn counts(&self) -> ForestCounts {
        self.counts
    }

    pub fn metrics_snapshot(&mut self) -> UpdateMetrics {
        self.rt.metrics_snapshot()
    }

    fn alloc(&mut self) -> Result<MachineId> {
        let first = self.rec_first + self.rec_count;
        let m = (first..self.shards.len())
            .find(|&m| matches!(self.shards[m], FShard::Idle))
            .ok_or(DmpcError::OutOfMachines(self.shards.len()))?;
        self.shards[m] = FShard::Block(ForestBlock::default());
        Ok(m)
    }

    fn shard_words(&self, m: MachineId) -> usize {
        match &self.shards[m] {
            FShard::Idle => 0,
            FShard::Coordinator => 4 + 3 * self.ranges.len() + self.used.len().div_ceil(64),
            FShard::Records(r) => 1 + 2 * r.len(),
            FShard::Block(b) => b.words(),
        }
    }

    fn sync(&mut self, m: MachineId) {
        let w = self.shard_words(m);
        self.used[m] = w;
        self.rt.set_resident(m, w);
    }

    pub(crate) fn sync_all(&mut self) {
        for m in 0..self.shards.len() {
            self.sync(m);
        }
    }

    pub(crate) fn end_round(&mut self) -> Result<()> {
        self.sync_all();
        self.rt.end_round()?;
        for m in 0..self.rt.machine_count() {
            if !self.rt.machine(m).inbox.is_empty() {
                self.rt.take_inbox(m);
            }
        }
        Ok(())
    }

    pub(crate) fn block_of(&self, v: Vertex) -> MachineId {
        *self.ranges.range(..=v).next_back().expect("ranges cover all vertices").1
    }

    pub(crate) fn rec_of(&self, comp: u64) -> MachineId {
        self.rec_first + (comp % self.rec_count as u64) as usize
    }

    /// Machines holding data, the targets of every broadcast.
    pub(crate) fn in_use(&self) -> Vec<MachineId> {
        (1..self.shards.len()).filter(|&m| !matches!(self.shards[m], FShard::Idle)).collect()
    }

    pub(crate) fn state(&self, v: Vertex) -> &VertexState {
        match &self.shards[self.block_of(v)] {
            FShard::Block(b) => &b.verts[&v],
            _ => unreachable!(),
        }
    }

    fn state_mut(&mut self, v: Vertex) -> &mut VertexState {
        let m = self.block_of(v);
        match &mut self.shards[m] {
            FShard::Block(b) => b.verts.get_mut(&v).unwrap(),
            _ => unreachable!(),
        }
    }

    fn check_pair(&self, x: Vertex, y: Vertex) -> Result<()> {
        for v in [x, y] {
            if v as usize >= self.n {
                return Err(DmpcError::UnknownVertex(v));
            }
        }
        if x == y {
            return Err(DmpcError::SelfLoop(x));
        }
        Ok(())
    }

    pub(crate) fn size_of(&self, comp: u64) -> u64 {
        match &self.shards[self.rec_of(comp)] {
            FShard::Records(r) => r.get(&comp).copied().unwrap_or(1),
            _ => unreachable!(),
        }
    }

    // ---- rounds ------------------------------------------------------------

    /// Two rounds: headers of x and y and their copies of (x, y). Block
    /// machines close to full split in the reply round. With `sizes`, the
    /// block machines also ask the record machines to send the component
    /// sizes, which arrive one round later.
    pub(crate) fn read_headers(&mut self, x: Vertex, y: Vertex, sizes: bool) -> Result<(Header, Header, Option<(u64, u64)>)> {
        let mx = self.block_of(x);
        let my = self.block_of(y);
        let split: BTreeSet<MachineId> = [mx, my].into_iter().filter(|&m| self.used[m] + 2 * ForestCopy::WORDS > self.fill).collect();
        if mx == my {
            self.rt.send(0, mx, MsgKind::RecordRead, vec![x as Word, y as Word, split.contains(&mx) as Word])?;
        } else {
            self.rt.send(0, mx, MsgKind::RecordRead, vec![x as Word, y as Word, split.contains(&mx) as Word])?;
            self.rt.send(0, my, MsgKind::RecordRead, vec![y as Word, x as Word, split.contains(&my) as Word])?;
        }
        self.end_round()?;
        let hx = self.header(x, y);
        let hy = self.header(y, x);
        for (v, h, m) in [(x, hx, mx), (y, hy, my)] {
            let mut p = vec![v as Word, h.comp, h.f, h.l, h.edge.is_some() as Word];
            if let Some(c) = h.edge {
                p.extend([c.weight, c.tree.map_or(0, |t| t.0), c.tree.map_or(0, |t| t.1)]);
            }
            self.rt.send(m, 0, MsgKind::RecordReply, p)?;
            if sizes {
                self.rt.send(m, self.rec_of(h.comp), MsgKind::RecordRead, vec![h.comp])?;
            }
        }
        for &m in &split {
            self.split_block(m)?;
        }
        self.end_round()?;
        let mut out = None;
        if sizes {
            let (sx, sy) = (self.size_of(hx.comp), self.size_of(hy.comp));
            let (rx, ry) = (self.rec_of(hx.comp), self.rec_of(hy.comp));
            if rx == ry {
                self.rt.send(rx, 0, MsgKind::RecordReply, vec![hx.comp, sx, hy.comp, sy])?;
            } else {
                self.rt.send(rx, 0, MsgKind::RecordReply, vec![hx.comp, sx])?;
                self.rt.send(ry, 0, MsgKind::RecordReply, vec![hy.comp, sy])?;
            }
            out = Some((sx, sy));
        }
        Ok((hx, hy, out))
    }

    fn header(&self, v: Vertex, other: Vertex) -> Header {
        let st = self.state(v);
        Header { comp: st.comp, f: st.f, l: st.l, edge: st.copies.iter().find(|c| c.nbr == other).copied() }
    }

    /// Machine-side split: the upper part of the range, about a quarter of
    /// the machine, moves to a fresh machine.
    fn split_block(&mut self, m: MachineId) -> Result<()> {
        let fresh = self.alloc()?;
        let target = self.rt.s() / 4;
        let moved = {
            let FShard::Block(b) = &mut self.shards[m] else { unreachable!() };
            let mut acc = 0;
            let mut mid = b.hi;
            for (&v, st) in b.verts.iter().rev() {
                let w = st.words();
                if acc > 0 && acc + w > target {
                    break;
                }
                acc += w;
                mid = v;
            }
            if mid <= b.lo {
                self.shards[fresh] = FShard::Idle;
                return Ok(());
            }
            let upper = b.verts.split_off(&mid);
            let hi = b.hi;
            b.hi = mid;
            ForestBlock { lo: mid, hi, verts: upper }
        };
        let payload: Vec<Word> = std::iter::once(moved.lo as Word)
            .chain(moved.verts.iter().flat_map(|(&v, st)| {
                let mut w = vec![v as Word, st.comp, st.f, st.l];
                for c in &st.copies {
                    w.extend([c.nbr as Word, c.weight, c.tree.map_or(0, |t| t.0), c.tree.map_or(0, |t| t.1), c.far_comp, c.anchor]);
                }
                w
            }))
            .collect();
        self.rt.send(m, fresh, MsgKind::EdgeMove, payload)?;
        self.ranges.insert(moved.lo, fresh);
        self.shards[fresh] = FShard::Block(moved);
        self.counts.splits += 1;
        Ok(())
    }

    /// One round: the operation to every machine in use, applied there.
    /// Coordinator to every machine in use. Relays through a multicast tree
    /// when one direct send per target exceeds the coordinator's cap.
    fn spread(&mut self, payload: &[Word]) -> Result<()> {
        let targets = self.in_use();
        let s = self.rt.s();
        if targets.iter().filter(|&&m| m != 0).count() * payload.len() <= s {
            for m in targets {
                self.rt.send(0, m, MsgKind::Broadcast, payload.to_vec())?;
            }
            return self.end_round();
        }
        let mut mc = Multicast::new(0, targets, payload.len());
        while !mc.done() {
            let sends = mc.step(s).ok_or_else(|| DmpcError::Config("broadcast payload does not fit one machine".into()))?;
            for (from, to, list) in sends {
                let mut p = payload.to_vec();
                p.extend(list.iter().map(|&m| m as Word));
                self.rt.send(from, to, MsgKind::Broadcast, p)?;
            }
            self.end_round()?;
        }
        Ok(())
    }

    pub(crate) fn broadcast(&mut self, ops: &[TourOp], search: Option<(u64, u64)>) -> Result<Vec<Candidate>> {
        let mut payload: Vec<Word> = ops.iter().flat_map(|o| o.encode()).collect();
        if let Some((c, c2)) = search {
            payload.extend([3, c, c2]);
        }
        self.spread(&payload)?;
        let (first, count) = (self.rec_first as u64, self.rec_count as u64);
        let mut out = Vec::new();
        for m in self.in_use() {
            let owns = |comp: u64| first + comp % count == m as u64;
            for op in ops {
                match &mut self.shards[m] {
                    FShard::Block(b) => apply_block(b, op),
                    FShard::Records(r) => apply_records(r, op, owns),
                    _ => {}
                }
            }
            if let (Some((c, c2)), FShard::Block(b)) = (search, &self.shards[m]) {
                let found = best_candidate(b, c, c2, self.mode);
                if !found.is_empty() {
                    let p: Vec<Word> = found
                        .iter()
                        .flat_map(|c| [c.v as Word, c.w as Word, c.weight, c.comp_v, c.f_v, c.l_v])
                        .collect();
                    self.rt.send(m, 0, MsgKind::Candidate, p)?;
                    out.extend(found);
                }
            }
        }
        Ok(out)
    }

    // ---- updates -------------------------------------------------------------

    pub fn insert(&mut self, x: Vertex, y: Vertex) -> Result<()> {
        self.insert_weighted(x, y, 1)
    }

    pub fn insert_weighted(&mut self, x: Vertex, y: Vertex, w: Weight) -> Result<()> {
        self.check_pair(x, y)?;
        if self.mode == ForestMode::MinForest && w == 0 {
            return Err(DmpcError::NonPositiveWeight);
        }
        let (hx, hy, sizes) = self.read_headers(x, y, true)?;
        if hx.edge.is_some() || hy.edge.is_some() {
            self.end_round()?;
            return Err(DmpcError::DuplicateEdge(x, y));
        }
        if hx.comp == hy.comp {
            // the size replies ride along with the next round
            if self.mode == ForestMode::MinForest {
                return self.min_forest_insert(x, y, w, hx, hy);
            }
            return self.store_non_tree(x, y, w, hx, hy);
        }
        let (_, sy) = sizes.expect("sizes requested");
        self.end_round()?;
        let op = link_op(x, y, hx, hy, sy, Some(w));
        self.broadcast(&[op], None)?;
        self.counts.links += 1;
        Ok(())
    }

    /// One round: non-tree copies at both endpoints.
    pub(crate) fn store_non_tree(&mut self, x: Vertex, y: Vertex, w: Weight, hx: Header, hy: Header) -> Result<()> {
        for (v, u, hu) in [(x, y, hy), (y, x, hx)] {
            let copy = ForestCopy { nbr: u, weight: w, tree: None, far_comp: hu.comp, anchor: hu.f };
            self.rt.send(0, self.block_of(v), MsgKind::EdgeMove, vec![v as Word, u as Word, w, hu.comp, hu.f])?;
            self.state_mut(v).copies.push(copy);
        }
        self.end_round()
    }

    pub fn delete(&mut self, x: Vertex, y: Vertex) -> Result<()> {
        self.check_pair(x, y)?;
        let (hx, hy, _) = self.read_headers(x, y, false)?;
        let Some(cx) = hx.edge else {
            self.end_round()?;
            return Err(DmpcError::UnknownEdge(x, y));
        };
        let Some((a, b)) = cx.tree else {
            for (v, u) in [(x, y), (y, x)] {
                self.rt.send(0, self.block_of(v), MsgKind::EdgeMove, vec![v as Word, u as Word])?;
                self.state_mut(v).copies.retain(|c| c.nbr != u);
            }
            return self.end_round();
        };
        // orient: parent first, child range from the parent's traversals
        let (px, cy, hp, hc) = if a < b { (x, y, hx, hy) } else { (y, x, hy, hx) };
        let (f_y, l_y) = if a < b { (a + 1, b) } else { (b + 1, a) };
        debug_assert_eq!((hc.f, hc.l), (f_y, l_y));
        let c2 = self.fresh_comp();
        let (anchor_x, _) = after_cut(hp.f, hp.l, true, false, f_y, l_y);
        let (anchor_y, _) = after_cut(hc.f, hc.l, false, true, f_y, l_y);
        let cut = TourOp::Cut { c: hp.comp, c2, x: px, y: cy, f_y, l_y, anchor_x, anchor_y, keep: false };
        let cands = self.broadcast(&[cut], Some((hp.comp, c2)))?;
        self.counts.cuts += 1;
        let pick = cands.iter().min_by_key(|c| c.key(self.mode)).copied();
        let Some(best) = pick else {
            return self.end_round();
        };
        // the chosen edge is the best at both endpoints' machines
        let (inner, outer) = {
            let other = cands
                .iter()
                .find(|c| c.v == best.w && c.w == best.v)
                .copied()
                .expect("both endpoints of the best straddling edge report it");
            if best.comp_v == c2 {
                (best, other)
            } else {
                (other, best)
            }
        };
        self.end_round()?;
        let len_y = tour::detached_len(f_y, l_y);
        let size_y = len_y / 4 + 1;
        let hx2 = Header { comp: outer.comp_v, f: outer.f_v, l: outer.l_v, edge: None };
        let hy2 = Header { comp: inner.comp_v, f: inner.f_v, l: inner.l_v, edge: None };
        let op = link_op(outer.v, inner.v, hx2, hy2, size_y, None);
        self.broadcast(&[op], None)?;
        self.end_round()?;
        self.counts.replacements += 1;
        self.counts.links += 1;
        Ok(())
    }

    pub(crate) fn fresh_comp(&mut self) -> u64 {
        let c = self.next_comp;
        self.next_comp += 1;
        c
    }

    /// Two rounds: component IDs of both vertices from their block machines.
    pub fn connected(&mut self, u: Vertex, v: Vertex) -> Result<bool> {
        for x in [u, v] {
            if x as usize >= self.n {
                return Err(DmpcError::UnknownVertex(x));
            }
        }
        let (mu, mv) = (self.block_of(u), self.block_of(v));
        self.rt.send(0, mu, MsgKind::RecordRead, vec![u as Word])?;
        if mv != mu {
            self.rt.send(0, mv, MsgKind::RecordRead, vec![v as Word])?;
        }
        self.end_round()?;
        let (cu, cv) = (self.state(u).comp, self.state(v).comp);
        if mv == mu {
            self.rt.send(mu, 0, MsgKind::RecordReply, vec![cu, cv])?;
        } else {
            self.rt.send(mu, 0, MsgKind::RecordReply, vec![cu])?;
            self.rt.send(mv, 0, MsgKind::RecordReply, vec![cv])?;
        }
        self.end_round()?;
        Ok(cu == cv)
    }

    // ---- inspection ----------------------------------------------------------

    /// Component ID per vertex.
    pub fn components(&self) -> Vec<u64> {
        (0..self.n as Vertex).map(|v| self.state(v).comp).collect()
    }

    /// Tree edges with weights, sorted.
    pub fn forest(&self) -> Vec<(Edge, Weight)> {
        let mut out = Vec::new();
        for v in 0..self.n as Vertex {
            for c in &self.state(v).copies {
                if c.tree.is_some() && v < c.nbr {
                    out.push((Edge::new(v, c.nbr), c.weight));
                }
            }
        }
        out
    }

    pub fn forest_weight(&self) -> Weight {
        self.forest().iter().map(|&(_, w)| w).sum()
    }

    /// Checks tour validity per component, header and cache coherence,
    /// recorded sizes, and that the tree edges span the current graph.
    pub fn check(&self, g: &Graph) -> std::result::Result<(), Witness> {
        let fail = |reason: &'static str, vertices: Vec<Vertex>| Err(Witness { reason, vertices });
        let mut by_comp: BTreeMap<u64, Vec<Vertex>> = BTreeMap::new();
        for v in 0..self.n as Vertex {
            let st = self.state(v);
            by_comp.entry(st.comp).or_default().push(v);
            let mut nbrs: Vec<Vertex> = st.copies.iter().map(|c| c.nbr).collect();
            nbrs.sort_unstable();
            if nbrs != g.neighbors(v).iter().copied().collect::<Vec<_>>() {
                return fail("stored adjacency differs from graph", vec![v]);
            }
            if st.f != st.indexes().min().unwrap_or(0) || st.l != st.indexes().max().unwrap_or(0) {
                return fail("first/last index stale", vec![v]);
            }
            for c in &st.copies {
                let far = self.state(c.nbr);
                if g.weight(v, c.nbr) != Some(c.weight) {
                    return fail("copy weight differs", vec![v, c.nbr]);
                }
                if c.far_comp != far.comp {
                    return fail("cached far component stale", vec![v, c.nbr]);
                }
                let ok = if far.f == 0 { c.anchor == 0 } else { far.indexes().any(|i| i == c.anchor) };
                if !ok {
                    return fail("cached far index stale", vec![v, c.nbr]);
                }
                let back = far.copies.iter().find(|d| d.nbr == v).expect("adjacency checked");
                match (c.tree, back.tree) {
                    (Some((a, b)), Some((a2, b2))) if a == b2 && b == a2 => {}
                    (None, None) => {}
                    _ => return fail("tree copies disagree", vec![v, c.nbr]),
                }
            }
        }
        let forest: Vec<Edge> = self.forest().into_iter().map(|(e, _)| e).collect();
        crate::oracle::check_spanning_forest(g, &forest)?;
        for (&comp, vs) in &by_comp {
            let size = vs.len() as u64;
            if size > 1 && self.size_of(comp) != size {
                return fail("recorded size differs", vs.clone());
            }
            let mut entries: BTreeMap<usize, Vertex> = BTreeMap::new();
            for &v in vs {
                for i in self.state(v).indexes() {
                    if entries.insert(i as usize, v).is_some() {
                        return fail("index owned twice", vec![v]);
                    }
                }
            }
            let set: BTreeSet<Vertex> = vs.iter().copied().collect();
            let tree: Vec<Edge> = forest.iter().copied().filter(|e| set.contains(&e.u)).collect();
            crate::oracle::check_tour(&entries, &tree, &set)?;
        }
        let singles: usize = by_comp.values().filter(|v| v.len() == 1).count();
        let recorded: usize = (self.rec_first..self.rec_first + self.rec_count)
            .map(|m| match &self.shards[m] {
                FShard::Records(r) => r.len(),
                _ => 0,
            })
            .sum();
        if recorded != by_comp.len() - singles {
            return fail("stale component records", vec![]);
        }
        Ok(())
    }
}

/// Link of x's tree with y's tree, rerooted at y.
pub(crate) fn link_op(x: Vertex, y: Vertex, hx: Header, hy: Header, size_y: u64, new_edge: Option<Weight>) -> TourOp {
    TourOp::Link {
        cx: hx.comp,
        cy: hy.comp,
        x,
        y,
        l_y: hy.l,
        len_y: tour::tour_len(size_y),
        p: splice_point(hx.f, hx.l),
        new_edge,
        size_y,
    }
}

fn apply_records(r: &mut BTreeMap<u64, u64>, op: &TourOp, owns: impl Fn(u64) -> bool) {
    let size = |r: &BTreeMap<u64, u64>, c: u64| r.get(&c).copied().unwrap_or(1);
    match *op {
        TourOp::Link { cx, cy, size_y, .. } => {
            if owns(cx) {
                let s = size(r, cx) + size_y;
                r.insert(cx, s);
            }
            if owns(cy) {
                r.remove(&cy);
            }
        }
        TourOp::Cut { c, c2, f_y, l_y, .. } => {
            let s2 = tour::detached_len(f_y, l_y) / 4 + 1;
            if owns(c) {
                let s = size(r, c) - s2;
                if s > 1 {
                    r.insert(c, s);
                } else {
                    r.remove(&c);
                }
            }
            if owns(c2) && s2 > 1 {
                r.insert(c2, s2);
            }
        }
    }
}

fn apply_block(b: &mut ForestBlock, op: &TourOp) {
    match *op {
        TourOp::Link { cx, cy, x, y, l_y, len_y, p, new_edge, .. } => {
            let ty = |i: u64| {
                let r = if len_y > 0 { reroot_index(i, l_y, len_y) } else { i };
                link_index_y(r, p)
            };
            let tx = |i: u64| link_index_x(i, p, len_y);
            let (down, up) = link_traversals(p, len_y);
            for (&v, st) in b.verts.iter_mut() {
                let own = st.comp;
                for c in st.copies.iter_mut() {
                    if let Some((a, bb)) = c.tree {
                        c.tree = Some(if own == cy { (ty(a), ty(bb)) } else if own == cx { (tx(a), tx(bb)) } else { (a, bb) });
                    }
                    if c.far_comp == cy {
                        if c.anchor != 0 {
                            c.anchor = ty(c.anchor);
                        }
                        c.far_comp = cx;
                    } else if c.far_comp == cx && c.anchor != 0 {
                        c.anchor = tx(c.anchor);
                    }
                    if c.anchor == 0 && c.nbr == x {
                        c.anchor = down;
                    }
                    if c.anchor == 0 && c.nbr == y {
                        c.anchor = down + 1;
                    }
                }
                if own == cy {
                    st.comp = cx;
                }
                for (me, other, tree) in [(x, y, (down, up)), (y, x, (up, down))] {
                    if v != me {
                        continue;
                    }
                    match st.copies.iter_mut().find(|c| c.nbr == other) {
                        Some(c) => c.tree = Some(tree),
                        None => st.copies.push(ForestCopy {
                            nbr: other,
                            weight: new_edge.expect("promoted edge exists"),
                            tree: Some(tree),
                            far_comp: cx,
                            anchor: if other == x { down } else { down + 1 },
                        }),
                    }
                }
                if st.comp == cx {
                    st.recompute();
                }
            }
        }
        TourOp::Cut { c, c2, x, y, f_y, l_y, anchor_x, anchor_y, keep, .. } => {
            let map = |i: u64| match cut_index(i, f_y, l_y) {
                CutIndex::Detached(j) | CutIndex::Kept(j) => j,
                CutIndex::Removed => unreachable!("removed entries belong to the cut edge"),
            };
            for (&v, st) in b.verts.iter_mut() {
                if st.comp == c {
                    let detached = v == y || (st.f > f_y && st.f < l_y);
                    for (me, other) in [(x, y), (y, x)] {
                        if v != me {
                            continue;
                        }
                        if keep {
                            let cp = st.copies.iter_mut().find(|d| d.nbr == other).unwrap();
                            cp.tree = None;
                        } else {
                            st.copies.retain(|d| d.nbr != other);
                        }
                    }
                    for cp in st.copies.iter_mut() {
                        if let Some((a, bb)) = cp.tree {
                            cp.tree = Some((map(a), map(bb)));
                        }
                    }
                    if detached {
                        st.comp = c2;
                    }
                }
                for cp in st.copies.iter_mut() {
                    if cp.far_comp != c {
                        continue;
                    }
                    if cp.nbr == x && cut_index(cp.anchor, f_y, l_y) == CutIndex::Removed {
                        cp.anchor = anchor_x;
                    } else if cp.nbr == y {
                        match cut_index(cp.anchor, f_y, l_y) {
                            CutIndex::Removed => cp.anchor = anchor_y,
                            CutIndex::Detached(j) => cp.anchor = j,
                            CutIndex::Kept(_) => unreachable!("y's indexes lie in its subtree"),
                        }
                        cp.far_comp = c2;
                    } else if cp.anchor != 0 {
                        match cut_index(cp.anchor, f_y, l_y) {
                            CutIndex::Detached(j) => {
                                cp.anchor = j;
                                cp.far_comp = c2;
                            }
                            CutIndex::Kept(j) => cp.anchor = j,
                            CutIndex::Removed => unreachable!("removed entries belong to the cut edge"),
                        }
                    }
                }
                if st.comp == c || st.comp == c2 {
                    st.recompute();
                }
            }
        }
    }
}

/// The machine's best straddling edge, once per local endpoint.
fn best_candidate(b: &ForestBlock, c: u64, c2: u64, mode: ForestMode) -> Vec<Candidate> {
    let mut best: Option<Candidate> = None;
    for (&v, st) in &b.verts {
        if st.comp != c && st.comp != c2 {
            continue;
        }
        for cp in &st.copies {
            if cp.tree.is_some() || (cp.far_comp != c && cp.far_comp != c2) || cp.far_comp == st.comp {
                continue;
            }
            let cand = Candidate { v, w: cp.nbr, weight: cp.weight, comp_v: st.comp, f_v: st.f, l_v: st.l };
            if best.is_none_or(|b| cand.key(mode) < b.key(mode)) {
                best = Some(cand);
            }
        }
    }
    let Some(best) = best else { return Vec::new() };
    let mut out = vec![best];
    if let Some(st) = b.verts.get(&best.w) {
        out.push(Candidate { v: best.w, w: best.v, weight: best.weight, comp_v: st.comp, f_v: st.f, l_v: st.l });
    }
    out
}
