//! Delivery of one payload to many machines when a single sender's cap is
//! not enough. Each holder keeps part of its target list and hands the rest
//! to new holders, so coverage grows geometrically.

use crate::types::MachineId;

/// Multicast in progress. Messages carry the payload followed by the
/// forwarding list of the receiver.
#[derive(Debug, Clone)]
pub struct Multicast {
    payload_words: usize,
    holders: Vec<(MachineId, Vec<MachineId>)>,
}

impl Multicast {
    pub fn new(source: MachineId, mut targets: Vec<MachineId>, payload_words: usize) -> Self {
        targets.retain(|&t| t != source);
        targets.sort_unstable();
        targets.dedup();
        Multicast {
            payload_words,
            holders: vec![(source, targets)],
        }
    }

    /// Machines that still have targets to cover.
    pub fn active_holders(&self) -> impl Iterator<Item = MachineId> + '_ {
        self.holders.iter().filter(|(_, l)| !l.is_empty()).map(|&(h, _)| h)
    }

    /// Words `holder` sends to reach all its targets directly.
    pub fn pending_cost(&self, holder: MachineId) -> usize {
        self.list_len(holder) * self.payload_words
    }

    /// Smallest cap that lets `holder` hand its list on to one child.
    pub fn min_step_cost(&self, holder: MachineId) -> usize {
        let len = self.list_len(holder);
        if len == 0 {
            0
        } else {
            plan_cost(len, 1, self.payload_words)
        }
    }

    fn list_len(&self, holder: MachineId) -> usize {
        self.holders.iter().filter(|(h, _)| *h == holder).map(|(_, l)| l.len()).sum()
    }

    pub fn done(&self) -> bool {
        self.holders.iter().all(|(_, l)| l.is_empty())
    }

    /// Sends of the next round as (from, to, forwarding list). Returns
    /// `None` when even one child does not fit in `cap`.
    pub fn step(&mut self, cap: usize) -> Option<Vec<(MachineId, MachineId, Vec<MachineId>)>> {
        self.step_with(|_| cap)
    }

    /// As [`step`](Self::step) with a cap per holder.
    pub fn step_with(&mut self, cap_of: impl Fn(MachineId) -> usize) -> Option<Vec<(MachineId, MachineId, Vec<MachineId>)>> {
        let p = self.payload_words;
        let mut out = Vec::new();
        let mut fresh = Vec::new();
        for (h, list) in self.holders.iter_mut() {
            if list.is_empty() {
                continue;
            }
            let len = list.len();
            let cap = cap_of(*h);
            let mut k = (cap / p.max(1)).min(len);
            while k > 0 && plan_cost(len, k, p) > cap {
                k -= 1;
            }
            if k == 0 {
                return None;
            }
            let (share, chunk) = plan(len, k);
            let keep: Vec<MachineId> = list[..share].to_vec();
            for part in list[share..].chunks(chunk) {
                let child = part[0];
                let sub = part[1..].to_vec();
                out.push((*h, child, sub.clone()));
                fresh.push((child, sub));
            }
            *list = keep;
        }
        self.holders.extend(fresh);
        Some(out)
    }
}

/// Share kept by the holder and chunk size per child for `k` children.
fn plan(len: usize, k: usize) -> (usize, usize) {
    let share = if k >= len { 0 } else { len.div_ceil(k + 1) };
    let rest = len - share;
    (share, rest.div_ceil(k).max(1))
}

fn plan_cost(len: usize, k: usize, p: usize) -> usize {
    let (share, chunk) = plan(len, k);
    let rest = len - share;
    let kids = rest.div_ceil(chunk);
    kids * p + rest - kids
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn run(src: MachineId, targets: Vec<MachineId>, p: usize, cap: usize) -> (usize, BTreeSet<MachineId>) {
        let mut mc = Multicast::new(src, targets, p);
        let mut got = BTreeSet::new();
        let mut rounds = 0;
        while !mc.done() {
            let sends = mc.step(cap).expect("fits");
            let mut per_sender = std::collections::BTreeMap::new();
            for (from, to, list) in sends {
                *per_sender.entry(from).or_insert(0) += p + list.len();
                assert!(got.insert(to));
            }
            assert!(per_sender.values().all(|&w| w <= cap));
            rounds += 1;
        }
        (rounds, got)
    }

    #[test]
    fn small_payload_is_one_round() {
        let (rounds, got) = run(0, (1..10).collect(), 4, 100);
        assert_eq!(rounds, 1);
        assert_eq!(got, (1..10).collect());
    }

    #[test]
    fn large_payload_spreads_in_few_rounds() {
        let (rounds, got) = run(5, (0..40).collect(), 300, 810);
        assert_eq!(got.len(), 39);
        assert!(rounds <= 4, "{rounds}");
    }

    #[test]
    fn oversized_payload_fails() {
        let mut mc = Multicast::new(0, vec![1, 2], 50);
        assert!(mc.step(40).is_none());
    }
}
