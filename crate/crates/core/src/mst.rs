//! Minimum spanning forest on the Euler-tour engine. An insert inside one
//! component swaps out the heaviest edge on the tree path when the new edge
//! is strictly lighter; a tree deletion reconnects with the lightest
//! straddling edge.

use crate::connectivity::tour::{after_cut, detached_len, tour_len};
use crate::connectivity::{link_op, FShard, ForestEngine, Header, TourOp};
use crate::error::{DmpcError, Result};
use crate::runtime::MsgKind;
use crate::types::{Graph, Vertex, Weight, Word};

/// Heaviest tree edge on a path, seen from its parent copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PathMax {
    parent: Vertex,
    child: Vertex,
    weight: Weight,
    f_c: u64,
    l_c: u64,
    f_p: u64,
    l_p: u64,
}

impl PathMax {
    fn key(&self) -> (Weight, Vertex, Vertex) {
        (self.weight, self.parent.min(self.child), self.parent.max(self.child))
    }
}

impl ForestEngine {
    /// Rounds three to five of an insert whose endpoints share a component.
    pub(crate) fn min_forest_insert(&mut self, x: Vertex, y: Vertex, w: Weight, hx: Header, hy: Header) -> Result<()> {
        let query = [hx.comp, hx.f, hy.f];
        for m in self.in_use() {
            self.rt.send(0, m, MsgKind::Broadcast, query.to_vec())?;
        }
        self.end_round()?;
        let mut best: Option<PathMax> = None;
        for m in self.in_use() {
            let FShard::Block(b) = &self.shards[m] else { continue };
            let mut local: Option<PathMax> = None;
            for (&v, st) in &b.verts {
                if st.comp != hx.comp {
                    continue;
                }
                for c in &st.copies {
                    let Some((a, bb)) = c.tree else { continue };
                    if a > bb {
                        continue;
                    }
                    let inside = |f: u64| f > a && f <= bb;
                    if inside(hx.f) == inside(hy.f) {
                        continue;
                    }
                    let cand = PathMax { parent: v, child: c.nbr, weight: c.weight, f_c: a + 1, l_c: bb, f_p: st.f, l_p: st.l };
                    if local.is_none_or(|l| cand.key() > l.key()) {
                        local = Some(cand);
                    }
                }
            }
            if let Some(l) = local {
                let p = vec![l.parent as Word, l.child as Word, l.weight, l.f_c, l.l_c, l.f_p, l.l_p];
                self.rt.send(m, 0, MsgKind::Candidate, p)?;
                if best.is_none_or(|b| l.key() > b.key()) {
                    best = Some(l);
                }
            }
        }
        self.end_round()?;
        let top = best.expect("a path joins two vertices of one tree");
        if w >= top.weight {
            return self.store_non_tree(x, y, w, hx, hy);
        }
        let c2 = self.fresh_comp();
        let (f_c, l_c) = (top.f_c, top.l_c);
        let (anchor_x, _) = after_cut(top.f_p, top.l_p, true, false, f_c, l_c);
        let (anchor_y, _) = after_cut(f_c, l_c, false, true, f_c, l_c);
        let cut = TourOp::Cut { c: hx.comp, c2, x: top.parent, y: top.child, f_y: f_c, l_y: l_c, anchor_x, anchor_y, keep: true };
        // x-role on the side that keeps the component ID
        let x_below = hx.f >= f_c && hx.f <= l_c;
        let (outer, inner, ho, hi) = if x_below { (y, x, hy, hx) } else { (x, y, hx, hy) };
        let post = |v: Vertex, h: Header| {
            let (f, l) = after_cut(h.f, h.l, v == top.parent, v == top.child, f_c, l_c);
            (f, l)
        };
        let (fo, lo) = post(outer, ho);
        let (fi, li) = post(inner, hi);
        let size_y = detached_len(f_c, l_c) / 4 + 1;
        debug_assert_eq!(tour_len(size_y), detached_len(f_c, l_c));
        let ho2 = Header { comp: hx.comp, f: fo, l: lo, edge: None };
        let hi2 = Header { comp: c2, f: fi, l: li, edge: None };
        let link = link_op(outer, inner, ho2, hi2, size_y, Some(w));
        self.broadcast(&[cut, link], None)?;
        self.counts.swaps += 1;
        Ok(())
    }
}

/// Bucket of weight `w` for buckets [w_min (1+eps)^k, w_min (1+eps)^(k+1)).
pub fn bucket_of(w: Weight, w_min: Weight, eps: f64) -> u32 {
    let base = 1.0 + eps;
    let mut k = ((w as f64 / w_min as f64).ln() / base.ln()).floor().max(0.0) as u32;
    let lower = |k: u32| w_min as f64 * base.powi(k as i32);
    while k > 0 && lower(k) > w as f64 {
        k -= 1;
    }
    while lower(k + 1) <= w as f64 {
        k += 1;
    }
    k
}

impl ForestEngine {
    /// Loads `g` and builds a forest of weight at most (1 + eps) times the
    /// minimum by contracting over weight buckets in increasing order.
    /// Returns the rounds used.
    pub fn mst_preprocess(&mut self, g: &Graph, eps: f64) -> Result<u64> {
        if eps.is_nan() || eps <= 0.0 {
            return Err(DmpcError::NonPositiveEpsilon);
        }
        if g.edges().any(|(_, w)| w == 0) {
            return Err(DmpcError::NonPositiveWeight);
        }
        self.load(g)?;
        let Some(w_min) = g.edges().map(|(_, w)| w).min() else { return Ok(0) };
        let mut buckets: Vec<u32> = g.edges().map(|(_, w)| bucket_of(w, w_min, eps)).collect();
        buckets.sort_unstable();
        buckets.dedup();
        let mut rounds = 0;
        for k in buckets {
            rounds += self.contract(|w| bucket_of(w, w_min, eps) == k)?;
        }
        Ok(rounds)
    }
}
