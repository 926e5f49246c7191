//! Free-neighbor counters and length-3 augmenting-path removal on top of
//! the maximal matching engine. A matching with no augmenting path of length
//! one or three is a 3/2-approximation of maximum.

use crate::error::{DmpcError, Result};
use crate::matching::MatchingEngine;
use crate::partition::Op;
use crate::runtime::MsgKind;
use crate::types::{Vertex, Word};
use std::collections::{BTreeMap, BTreeSet};

impl MatchingEngine {
    /// Vertices whose free status differs from the start of the update.
    fn flipped(&self) -> Vec<Vertex> {
        self.ctx
            .mate
            .iter()
            .filter(|(v, m)| self.ctx.start_matched.get(v).copied() != Some(m.is_some()))
            .map(|(&v, _)| v)
            .collect()
    }

    /// Counter change of `v` implied by this update so far, from the lists
    /// known to the coordinator.
    fn pending_counter(&self, v: Vertex, op: Op, x: Vertex, y: Vertex) -> i64 {
        let mut d = 0i64;
        for f in self.flipped() {
            if self.ctx.lists.get(&f).is_some_and(|l| l.iter().any(|c| c.nbr == v)) {
                d += if self.mate_known_now(f).is_none() { 1 } else { -1 };
            }
        }
        let free_end = |a: Vertex| self.mate_known_now(a).is_none();
        let free_start = |a: Vertex| self.start_status(a) == Some(false);
        for (a, b) in [(x, y), (y, x)] {
            if a != v {
                continue;
            }
            match op {
                Op::Insert => d += free_end(b) as i64,
                Op::Delete => d -= free_start(b) as i64,
            }
        }
        d
    }

    fn effective_counter(&self, v: Vertex, op: Op, x: Vertex, y: Vertex) -> i64 {
        self.record(v).free_neighbors as i64 + self.pending_counter(v, op, x, y)
    }

    /// Two rounds: block scan of `v` plus free copies from its stack.
    fn scan_with_chain(&mut self, v: Vertex) -> Result<()> {
        let chain = self.coord.chain_machines(v);
        if chain.is_empty() {
            return self.scan(&[v]);
        }
        let block = self.coord.block_of(v);
        let mut p = Vec::new();
        self.delta_for(block).encode(&mut p);
        p.push(v as Word);
        self.rt.send(0, block, MsgKind::RefreshDelta, p)?;
        for &m in &chain {
            let mut p = Vec::new();
            self.delta_for(m).encode(&mut p);
            self.rt.send(0, m, MsgKind::RefreshDelta, p)?;
        }
        self.end_round()?;
        let (mut all, _) = self.refresh_block(block, v, None);
        let mut p = vec![all.len() as Word];
        for c in &all {
            c.encode(&mut p);
        }
        self.rt.send(block, 0, MsgKind::Report, p)?;
        for &m in &chain {
            let delta = self.delta_for(m);
            let committed = self.coord.committed_seq();
            let s = self.susp_mut(m);
            delta.apply(v, &mut s.copies);
            s.last_refresh = committed;
            let copies = s.copies.clone();
            self.coord.dir[m].last_refresh = committed;
            let mut p = Vec::new();
            for c in copies.iter().filter(|c| c.mate.is_none()) {
                c.encode(&mut p);
            }
            p.push(0);
            self.rt.send(m, 0, MsgKind::Report, p)?;
            all.extend(copies);
        }
        self.end_round()?;
        self.ctx.lists.insert(v, all);
        self.ctx.involved.insert(block);
        self.ctx.involved.extend(chain);
        Ok(())
    }

    /// Insert of (v free, u matched): augment along v, u, mate(u), w.
    pub(crate) fn augment_through_mate(&mut self, u: Vertex, v: Vertex) -> Result<bool> {
        let Some(up) = self.mate_known_now(u) else { return Ok(false) };
        let (x, y) = (self.ctx.x, self.ctx.y);
        self.read_records(&[up])?;
        if self.effective_counter(up, Op::Insert, x, y) < 1 {
            return Ok(false);
        }
        self.scan_with_chain(up)?;
        let pick = self
            .current_list(up)
            .into_iter()
            .filter(|&(w, m)| m.is_none() && w != v && w != u && w != up)
            .map(|(w, _)| w)
            .min();
        let Some(w) = pick else { return Ok(false) };
        self.unmatch(u, up);
        self.set_match(v, u);
        self.set_match(up, w);
        self.counts.augmentations += 1;
        Ok(true)
    }

    /// Free vertex `u` whose neighbors are all matched: augment along
    /// u, w, mate(w), z.
    pub(crate) fn augment_from(&mut self, u: Vertex) -> Result<bool> {
        let (x, y, op) = (self.ctx.x, self.ctx.y, self.ctx.op);
        let cands: Vec<(Vertex, Vertex)> = self
            .current_list(u)
            .into_iter()
            .filter_map(|(w, m)| m.map(|wp| (w, wp)))
            .filter(|&(_, wp)| wp != u)
            .collect();
        if cands.is_empty() {
            return Ok(false);
        }
        let mates: Vec<Vertex> = cands.iter().map(|&(_, wp)| wp).collect::<BTreeSet<_>>().into_iter().collect();
        self.read_records(&mates)?;
        let u_adj: BTreeSet<Vertex> = self.current_list(u).into_iter().map(|(w, _)| w).collect();
        for (w, wp) in cands {
            if self.mate_known(w, Some(wp)) != Some(wp) || self.mate_known_now(u).is_some() {
                continue;
            }
            let eff = self.effective_counter(wp, op, x, y) - u_adj.contains(&wp) as i64;
            if eff < 1 {
                continue;
            }
            self.scan_with_chain(wp)?;
            let pick = self
                .current_list(wp)
                .into_iter()
                .filter(|&(z, m)| m.is_none() && z != u && z != w && z != wp)
                .map(|(z, _)| z)
                .min();
            if let Some(z) = pick {
                self.unmatch(w, wp);
                self.set_match(u, w);
                self.set_match(wp, z);
                self.counts.augmentations += 1;
                return Ok(true);
            }
            if wp != x && wp != y {
                self.ctx.lists.remove(&wp);
            }
        }
        Ok(false)
    }

    /// Counter changes of every vertex adjacent to a status flip, queued for
    /// the final write round.
    pub(crate) fn counter_pass(&mut self, op: Op, x: Vertex, y: Vertex) -> Result<()> {
        let flipped = self.flipped();
        // a vertex that drops to light in this update has all its edges alive
        for &v in &flipped {
            if self.coord.heavy.contains(&v) && self.is_heavy_now(v) {
                return Err(DmpcError::HeavyStatusFlip(v));
            }
        }
        let missing: Vec<Vertex> = flipped.iter().copied().filter(|&v| !self.ctx.lists.contains_key(&v)).collect();
        if !missing.is_empty() {
            self.scan(&missing)?;
        }
        let mut delta: BTreeMap<Vertex, i64> = BTreeMap::new();
        for &f in &flipped {
            let d = if self.mate_known_now(f).is_none() { 1 } else { -1 };
            for (w, _) in self.current_list(f) {
                *delta.entry(w).or_insert(0) += d;
            }
        }
        for (a, b) in [(x, y), (y, x)] {
            let t = match op {
                Op::Insert => self.mate_known_now(b).is_none() as i64,
                Op::Delete => -((self.start_status(b) == Some(false)) as i64),
            };
            *delta.entry(a).or_insert(0) += t;
        }
        for (v, d) in delta {
            if d != 0 {
                self.ctx.writes.entry(v).or_default().counter += d;
            }
        }
        Ok(())
    }
}
