//! Euler-tour index arithmetic. A tour of a tree with |T| vertices has
//! 4(|T|−1) entries; entries (2k−1, 2k) form one edge traversal and
//! consecutive traversals share their junction vertex. Every operation here
//! is a pointwise map on indexes, so machines apply it to whatever indexes
//! they hold without coordination.

/// Tour length of a tree with `size` vertices.
pub fn tour_len(size: u64) -> u64 {
    4 * size.saturating_sub(1)
}

/// Proper ancestry from first/last indexes.
pub fn is_ancestor(fx: u64, lx: u64, fy: u64, ly: u64) -> bool {
    fx < fy && lx > ly
}

/// Index after rerooting a tour of length `len` at the vertex whose last
/// index is `l_y`. The root's last index is `len`, which leaves the tour as is.
pub fn reroot_index(i: u64, l_y: u64, len: u64) -> u64 {
    if l_y == len {
        i
    } else {
        ((i + len - l_y) % len) + 1
    }
}

/// Position after which the rerooted tour of y is spliced into x's tour:
/// an even index ending a traversal into x, or 0 for a singleton.
pub fn splice_point(f_x: u64, l_x: u64) -> u64 {
    match f_x {
        0 => 0,
        1 => l_x,
        f => f,
    }
}

/// Splice point from any index of x in a tour of length `len`: an even
/// index ends a traversal into x, an odd one starts a traversal out of it.
pub fn splice_at(index: u64, len: u64) -> u64 {
    match index {
        0 => 0,
        1 => len,
        i if i % 2 == 0 => i,
        i => i - 1,
    }
}

/// Index of an entry of y's rerooted tour after the splice at `p`.
pub fn link_index_y(i: u64, p: u64) -> u64 {
    i + p + 2
}

/// Index of an entry of x's tour after inserting a tour of length `len_y`.
pub fn link_index_x(i: u64, p: u64, len_y: u64) -> u64 {
    if i > p {
        i + len_y + 4
    } else {
        i
    }
}

/// Traversal starts of the new tree edge: x to y, then y back to x.
pub fn link_traversals(p: u64, len_y: u64) -> (u64, u64) {
    (p + 1, p + len_y + 3)
}

/// Where an index goes when the tree edge above the subtree spanning
/// `[f_y, l_y]` is cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutIndex {
    /// One of the four entries of the cut edge's traversals.
    Removed,
    /// Inside the detached subtree, renumbered from 1.
    Detached(u64),
    /// In the remaining tour.
    Kept(u64),
}

pub fn cut_index(i: u64, f_y: u64, l_y: u64) -> CutIndex {
    if i == f_y - 1 || i == f_y || i == l_y || i == l_y + 1 {
        CutIndex::Removed
    } else if i > f_y && i < l_y {
        CutIndex::Detached(i - f_y)
    } else if i > l_y + 1 {
        CutIndex::Kept(i - (l_y - f_y + 1 + 2))
    } else {
        CutIndex::Kept(i)
    }
}

/// Tour length of the detached subtree.
pub fn detached_len(f_y: u64, l_y: u64) -> u64 {
    l_y - f_y - 1
}

/// First and last index of a vertex after a cut, from its values before.
/// `x` is the parent end of the cut edge and `y` the child end.
pub fn after_cut(f: u64, l: u64, is_x: bool, is_y: bool, f_y: u64, l_y: u64) -> (u64, u64) {
    if is_y {
        let len = detached_len(f_y, l_y);
        return if len == 0 { (0, 0) } else { (1, len) };
    }
    if is_x {
        if f == f_y - 1 && l == l_y + 1 {
            return (0, 0);
        }
        let nf = if f == f_y - 1 { f_y - 1 } else { f };
        let nl = if l == l_y + 1 {
            f_y - 2
        } else {
            match cut_index(l, f_y, l_y) {
                CutIndex::Kept(i) => i,
                _ => unreachable!("parent index inside the subtree"),
            }
        };
        return (nf, nl);
    }
    let map = |i: u64| match cut_index(i, f_y, l_y) {
        CutIndex::Detached(j) | CutIndex::Kept(j) => j,
        CutIndex::Removed => unreachable!("only the cut edge's ends own removed entries"),
    };
    (map(f), map(l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    type Tour = BTreeMap<u64, char>;

    fn tour(s: &str) -> Tour {
        s.chars().enumerate().map(|(i, c)| (i as u64 + 1, c)).collect()
    }

    fn text(t: &Tour) -> String {
        t.values().collect()
    }

    fn fl(t: &Tour, v: char) -> (u64, u64) {
        let idx: Vec<u64> = t.iter().filter(|(_, &c)| c == v).map(|(&i, _)| i).collect();
        (idx[0], *idx.last().unwrap())
    }

    #[test]
    fn ancestry_on_a_path() {
        let t = tour("abbccbba");
        let ((fb, lb), (fc, lc)) = (fl(&t, 'b'), fl(&t, 'c'));
        assert_eq!((fb, lb, fc, lc), (2, 7, 4, 5));
        assert!(is_ancestor(fb, lb, fc, lc));
        assert!(!is_ancestor(fc, lc, fb, lb));
        assert!(!is_ancestor(fb, lb, fb, lb));
    }

    #[test]
    fn reroot_single_edge() {
        let t = tour("abba");
        let (_, lb) = fl(&t, 'b');
        let r: Tour = t.iter().map(|(&i, &c)| (reroot_index(i, lb, 4), c)).collect();
        assert_eq!(reroot_index(1, lb, 4), 3);
        assert_eq!(reroot_index(4, lb, 4), 2);
        assert_eq!(reroot_index(2, lb, 4), 4);
        assert_eq!(reroot_index(3, lb, 4), 1);
        assert_eq!(text(&r), "baab");
    }

    #[test]
    fn reroot_at_root_keeps_root() {
        let t = tour("abbccbba");
        let (_, la) = fl(&t, 'a');
        let r: Tour = t.iter().map(|(&i, &c)| (reroot_index(i, la, 8), c)).collect();
        assert_eq!(r[&1], 'a');
        assert_eq!(r[&8], 'a');
    }

    #[test]
    fn link_two_edges_at_root() {
        let tx = tour("xwwx");
        let ty = tour("yzzy");
        let (fx, lx) = fl(&tx, 'x');
        let p = splice_point(fx, lx);
        assert_eq!(p, 4);
        let len_y = 4;
        let mut out: Tour = tx.iter().map(|(&i, &c)| (link_index_x(i, p, len_y), c)).collect();
        let (_, ly) = fl(&ty, 'y');
        for (&i, &c) in &ty {
            out.insert(link_index_y(reroot_index(i, ly, len_y), p), c);
        }
        let (down, up) = link_traversals(p, len_y);
        out.insert(down, 'x');
        out.insert(down + 1, 'y');
        out.insert(up, 'y');
        out.insert(up + 1, 'x');
        assert_eq!(text(&out), "xwwxxyyzzyyx");
        assert_eq!(out.len() as u64, tour_len(4));
    }

    #[test]
    fn splice_from_any_index_matches_first_index() {
        let t = tour("abbccbba");
        for v in ['a', 'b', 'c'] {
            let (f, l) = fl(&t, v);
            let want = splice_point(f, l);
            for (&i, &c) in &t {
                if c == v {
                    let p = splice_at(i, 8);
                    assert!(p == want || (p.is_multiple_of(2) && t[&p] == v && (p == 8 || t[&(p + 1)] == v)), "{v} {i} {p}");
                }
            }
        }
    }

    #[test]
    fn link_two_singletons() {
        let p = splice_point(0, 0);
        let (down, up) = link_traversals(p, 0);
        assert_eq!((down, down + 1, up, up + 1), (1, 2, 3, 4));
    }

    #[test]
    fn cut_leaf_edge_of_path() {
        let t = tour("abbccbba");
        let (fc, lc) = fl(&t, 'c');
        let mut rest = Tour::new();
        for (&i, &c) in &t {
            match cut_index(i, fc, lc) {
                CutIndex::Kept(j) => {
                    rest.insert(j, c);
                }
                CutIndex::Detached(_) => panic!("leaf has no detached entries"),
                CutIndex::Removed => {}
            }
        }
        assert_eq!(text(&rest), "abba");
        assert_eq!(after_cut(2, 7, true, false, fc, lc), (2, 3));
        assert_eq!(after_cut(fc, lc, false, true, fc, lc), (0, 0));
    }

    #[test]
    fn cut_only_edge() {
        let t = tour("abba");
        let (fb, lb) = fl(&t, 'b');
        assert!(t.keys().all(|&i| cut_index(i, fb, lb) == CutIndex::Removed));
        assert_eq!(after_cut(1, 4, true, false, fb, lb), (0, 0));
    }
}
