//! Spanning forest of a loaded graph by random contraction. Each iteration
//! every component flips a coin; a tail component with an edge to a head
//! component hooks to its smallest adjacent head, and all tails hooking to
//! one head are spliced into its tour at once. Per head, attachments are
//! ordered by splice point and tail ID; a head index j moves by the entries
//! inserted before it, and each tail's rerooted tour lands after its splice
//! point shifted by the attachments ahead of it.
//!
//! Three rounds per iteration: hook proposals and component registrations
//! to the record machines, tail records to head records with the tail's
//! member list, head records to the members of the head and of each tail.
//! The head's members get only splice points and shifts; the machine of the
//! head endpoint x holds a copy into the tail, so it learns the new edge from
//! the tail's notice. Deliveries that exceed a sender's cap fan out through
//! the targets and take extra rounds.

use super::tour::{link_traversals, reroot_index, splice_at, tour_len};
use super::{FShard, ForestBlock, ForestCopy, ForestEngine};
use crate::error::{Direction, DmpcError, Result};
use crate::matching::mix;
use crate::runtime::{MsgKind, Multicast};
use crate::types::{MachineId, Vertex, Weight, Word};
use std::collections::{BTreeMap, BTreeSet};

/// A tail's edge to a head: y in the tail, x in the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Hook {
    head: u64,
    y: Vertex,
    x: Vertex,
    l_y: u64,
    anchor_x: u64,
}

/// Placement of one tail inside its head's tour.
#[derive(Debug, Clone, Copy)]
struct Attach {
    head: u64,
    p: u64,
    /// Splice point after earlier attachments.
    p2: u64,
    len: u64,
    x: Vertex,
    y: Vertex,
    l_y: u64,
}

impl ForestEngine {
    /// Builds spanning trees with valid tours for the loaded graph. Returns
    /// the rounds used.
    pub fn preprocess(&mut self) -> Result<u64> {
        self.contract(|_| true)
    }

    /// Contraction over the edges whose weight passes `allowed`, on top of
    /// the current components.
    pub(crate) fn contract(&mut self, allowed: impl Fn(Weight) -> bool) -> Result<u64> {
        let start = self.rt.rounds_done();
        let seed = self.rt.config().rng_seed;
        let mut iteration = 0u64;
        loop {
            let is_head = |c: u64| mix(seed ^ c.rotate_left(32), iteration, (c as Vertex) ^ 0x5bd1_e995) & 1 == 1;
            let (hooks, members, live) = self.propose(&allowed, &is_head)?;
            if !live {
                break;
            }
            let chosen = self.choose(&hooks, &members)?;
            let tails = self.attach(&chosen, &members)?;
            let blocks: Vec<MachineId> = self.ranges.values().copied().collect();
            let heads = group_heads(&tails);
            for m in blocks {
                if let FShard::Block(b) = &mut self.shards[m] {
                    apply_merge(b, &heads, &tails);
                }
            }
            iteration += 1;
        }
        self.sync_all();
        Ok(self.rt.rounds_done() - start)
    }

    /// Round one. Returns every machine's best hook per tail, the machines
    /// touching each component, and whether any allowed edge still joins two
    /// components.
    fn propose(
        &mut self,
        allowed: &impl Fn(Weight) -> bool,
        is_head: &impl Fn(u64) -> bool,
    ) -> Result<(BTreeMap<u64, Vec<Hook>>, BTreeMap<u64, BTreeSet<MachineId>>, bool)> {
        let mut hooks: BTreeMap<u64, Vec<Hook>> = BTreeMap::new();
        let mut members: BTreeMap<u64, BTreeSet<MachineId>> = BTreeMap::new();
        let mut live = false;
        let blocks: Vec<MachineId> = self.ranges.values().copied().collect();
        for m in blocks {
            let FShard::Block(b) = &self.shards[m] else { unreachable!() };
            let mut local: BTreeMap<u64, Hook> = BTreeMap::new();
            let mut touched: BTreeSet<u64> = BTreeSet::new();
            let mut any = false;
            for (&v, st) in &b.verts {
                for cp in &st.copies {
                    if st.comp == cp.far_comp || !allowed(cp.weight) {
                        continue;
                    }
                    any = true;
                    touched.insert(st.comp);
                    touched.insert(cp.far_comp);
                    if !is_head(st.comp) && is_head(cp.far_comp) {
                        let h = Hook { head: cp.far_comp, y: v, x: cp.nbr, l_y: st.l, anchor_x: cp.anchor };
                        let e = local.entry(st.comp).or_insert(h);
                        if h < *e {
                            *e = h;
                        }
                    }
                }
            }
            // every machine holding a copy inside a merging component must
            // hear about it as well
            if any {
                for st in b.verts.values() {
                    touched.insert(st.comp);
                    touched.extend(st.copies.iter().map(|c| c.far_comp));
                }
            }
            let mut per_rec: BTreeMap<MachineId, Vec<Word>> = BTreeMap::new();
            for &c in &touched {
                per_rec.entry(self.rec_of(c)).or_default().push(c);
                members.entry(c).or_default().insert(m);
            }
            for (&c, h) in &local {
                per_rec.entry(self.rec_of(c)).or_default().extend([c, h.head, h.y as Word, h.x as Word, h.l_y, h.anchor_x]);
                hooks.entry(c).or_default().push(*h);
            }
            for (r, p) in per_rec {
                self.rt.send(m, r, MsgKind::Proposal, p)?;
            }
            if any {
                self.rt.send(m, 0, MsgKind::Report, vec![1])?;
                live = true;
            }
        }
        self.end_round()?;
        Ok((hooks, members, live))
    }

    /// Round two: each tail's record machine keeps the smallest hook,
    /// forwards it with the tail size and members to the head's record
    /// machine, and drops the tail record.
    fn choose(&mut self, hooks: &BTreeMap<u64, Vec<Hook>>, members: &BTreeMap<u64, BTreeSet<MachineId>>) -> Result<BTreeMap<u64, (Hook, u64)>> {
        let mut chosen = BTreeMap::new();
        for (&c, hs) in hooks {
            let h = *hs.iter().min().unwrap();
            let size = self.size_of(c);
            let rec = self.rec_of(c);
            let mut p = vec![h.head, c, size, h.y as Word, h.l_y, h.x as Word, h.anchor_x];
            p.extend(members[&c].iter().map(|&m| m as Word));
            self.rt.send(rec, self.rec_of(h.head), MsgKind::Accept, p)?;
            if let FShard::Records(r) = &mut self.shards[rec] {
                r.remove(&c);
            }
            chosen.insert(c, (h, size));
        }
        self.end_round()?;
        Ok(chosen)
    }

    /// Round three: each head's record machine orders its attachments,
    /// updates the head size, and sends the placements to the members of
    /// the head and of its tails.
    fn attach(&mut self, chosen: &BTreeMap<u64, (Hook, u64)>, members: &BTreeMap<u64, BTreeSet<MachineId>>) -> Result<BTreeMap<u64, Attach>> {
        let mut by_head: BTreeMap<u64, Vec<(u64, u64, Hook, u64)>> = BTreeMap::new();
        for (&c, &(h, size)) in chosen {
            let len_h = tour_len(self.size_of(h.head));
            by_head.entry(h.head).or_default().push((splice_at(h.anchor_x, len_h), c, h, size));
        }
        let mut tails = BTreeMap::new();
        let mut jobs = Vec::new();
        for (head, mut list) in by_head {
            list.sort_by_key(|&(p, c, _, _)| (p, c));
            let rec = self.rec_of(head);
            let mut shift = 0;
            let mut added = 0;
            let mut payload = vec![head, list.len() as Word];
            let targets: Vec<MachineId> = members.get(&head).into_iter().flatten().copied().collect();
            for (p, c, h, size) in list {
                let len = tour_len(size);
                let a = Attach { head, p, p2: p + shift, len, x: h.x, y: h.y, l_y: h.l_y };
                shift += len + 4;
                added += size;
                payload.extend([p, len + 4]);
                let notice = vec![c, head, a.l_y, a.len, a.p2, a.x as Word, a.y as Word];
                jobs.push((rec, members[&c].iter().copied().collect(), notice));
                tails.insert(c, a);
            }
            jobs.push((rec, targets, payload));
            let total = self.size_of(head) + added;
            if let FShard::Records(r) = &mut self.shards[rec] {
                r.insert(head, total);
            }
        }
        self.deliver(jobs)?;
        Ok(tails)
    }

    /// Sends each payload to its targets. A sender whose share of the cap
    /// cannot reach all targets in one round hands forwarding lists to the
    /// first targets, so such deliveries take a few extra rounds.
    fn deliver(&mut self, jobs: Vec<(MachineId, Vec<MachineId>, Vec<Word>)>) -> Result<()> {
        let s = self.rt.s();
        let mut casts: Vec<(Multicast, Vec<Word>)> = jobs
            .into_iter()
            .map(|(src, targets, p)| (Multicast::new(src, targets, p.len()), p))
            .collect();
        loop {
            // per holder, split the cap in proportion to each job's direct
            // cost; a job that cannot get a useful share waits a round
            let mut holding: BTreeMap<MachineId, Vec<usize>> = BTreeMap::new();
            for (j, (mc, _)) in casts.iter().enumerate() {
                for h in mc.active_holders() {
                    holding.entry(h).or_default().push(j);
                }
            }
            let mut caps: Vec<BTreeMap<MachineId, usize>> = vec![BTreeMap::new(); casts.len()];
            let mut blocked = vec![false; casts.len()];
            for (h, js) in &holding {
                let need = |j: usize| casts[j].0.pending_cost(*h);
                let total: usize = js.iter().map(|&j| need(j)).sum();
                let mut budget = s;
                for &j in js {
                    let want = if total <= s { need(j) } else { (s * need(j) / total).max(casts[j].0.min_step_cost(*h)) };
                    if want > budget {
                        blocked[j] = true;
                        continue;
                    }
                    budget -= want;
                    caps[j].insert(*h, want);
                }
            }
            for (j, (mc, p)) in casts.iter_mut().enumerate() {
                if blocked[j] || mc.done() {
                    continue;
                }
                let cap = &caps[j];
                let source = mc.active_holders().next().unwrap();
                let sends = mc.step_with(|h| cap[&h]).ok_or(DmpcError::BandwidthExceeded {
                    machine: source,
                    direction: Direction::Sent,
                    words: p.len(),
                    cap: cap[&source],
                })?;
                for (from, to, list) in sends {
                    let mut w = p.clone();
                    w.extend(list.iter().map(|&m| m as Word));
                    self.rt.send(from, to, MsgKind::Contract, w)?;
                }
            }
            self.end_round()?;
            if casts.iter().all(|(mc, _)| mc.done()) {
                return Ok(());
            }
        }
    }
}

fn group_heads(tails: &BTreeMap<u64, Attach>) -> BTreeMap<u64, Vec<Attach>> {
    let mut heads: BTreeMap<u64, Vec<Attach>> = BTreeMap::new();
    for a in tails.values() {
        heads.entry(a.head).or_default().push(*a);
    }
    for list in heads.values_mut() {
        list.sort_by_key(|a| a.p2);
    }
    heads
}

/// Index of an entry of component `comp` after the merge.
fn remap(comp: u64, i: u64, heads: &BTreeMap<u64, Vec<Attach>>, tails: &BTreeMap<u64, Attach>) -> u64 {
    if let Some(a) = tails.get(&comp) {
        let r = if a.len > 0 { reroot_index(i, a.l_y, a.len) } else { i };
        return r + a.p2 + 2;
    }
    if let Some(list) = heads.get(&comp) {
        return i + list.iter().filter(|a| a.p < i).map(|a| a.len + 4).sum::<u64>();
    }
    i
}

fn apply_merge(b: &mut ForestBlock, heads: &BTreeMap<u64, Vec<Attach>>, tails: &BTreeMap<u64, Attach>) {
    for (&v, st) in b.verts.iter_mut() {
        let own = st.comp;
        let changed = heads.contains_key(&own) || tails.contains_key(&own);
        for cp in st.copies.iter_mut() {
            if let Some((a, bb)) = cp.tree {
                cp.tree = Some((remap(own, a, heads, tails), remap(own, bb, heads, tails)));
            }
            let far = cp.far_comp;
            if cp.anchor != 0 {
                cp.anchor = remap(far, cp.anchor, heads, tails);
            } else if let Some(t) = tails.get(&far) {
                // y was a singleton tail
                cp.anchor = t.p2 + 2;
            } else if heads.contains_key(&far) {
                // a singleton head's first index
                cp.anchor = 1;
            }
            if let Some(t) = tails.get(&far) {
                cp.far_comp = t.head;
            }
        }
        if let Some(t) = tails.get(&own) {
            if t.y == v {
                let (down, up) = link_traversals(t.p2, t.len);
                let cp = find(&mut st.copies, t.x);
                cp.tree = Some((up, down));
                cp.anchor = down;
            }
            st.comp = t.head;
        }
        if heads.contains_key(&own) {
            for t in tails.values().filter(|t| t.x == v) {
                let (down, up) = link_traversals(t.p2, t.len);
                let cp = find(&mut st.copies, t.y);
                cp.tree = Some((down, up));
                cp.anchor = down + 1;
            }
        }
        if changed {
            st.recompute();
        }
    }
}

fn find(copies: &mut [ForestCopy], nbr: Vertex) -> &mut ForestCopy {
    copies.iter_mut().find(|c| c.nbr == nbr).expect("hook edge is stored at both endpoints")
}
