//! Brute-force ground truth computed from a plain copy of the graph.

use crate::error::{DmpcError, Result};
use crate::types::{Edge, Graph, Vertex, Weight};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::cmp::Reverse;

/// Why an oracle check failed, with the offending vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub reason: &'static str,
    pub vertices: Vec<Vertex>,
}

impl std::fmt::Display for Witness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {:?}", self.reason, self.vertices)
    }
}

fn fail<T>(reason: &'static str, vertices: Vec<Vertex>) -> std::result::Result<T, Witness> {
    Err(Witness { reason, vertices })
}

/// Mate array of a matching after checking it is a set of disjoint graph edges.
pub fn mates(g: &Graph, matching: &[Edge]) -> std::result::Result<Vec<Option<Vertex>>, Witness> {
    let mut mate = vec![None; g.n()];
    for e in matching {
        if !g.has_edge(e.u, e.v) {
            return fail("matched edge not in graph", vec![e.u, e.v]);
        }
        for (a, b) in [(e.u, e.v), (e.v, e.u)] {
            if mate[a as usize].is_some() {
                return fail("vertex matched twice", vec![a]);
            }
            mate[a as usize] = Some(b);
        }
    }
    Ok(mate)
}

/// Valid and maximal: disjoint graph edges, and no edge with two free endpoints.
pub fn check_maximal(g: &Graph, matching: &[Edge]) -> std::result::Result<(), Witness> {
    let mate = mates(g, matching)?;
    for (e, _) in g.edges() {
        if mate[e.u as usize].is_none() && mate[e.v as usize].is_none() {
            return fail("edge with two free endpoints", vec![e.u, e.v]);
        }
    }
    Ok(())
}

/// No augmenting path of length 1 or 3.
pub fn check_no_short_augmenting(g: &Graph, matching: &[Edge]) -> std::result::Result<(), Witness> {
    check_maximal(g, matching)?;
    let mate = mates(g, matching)?;
    for e in matching {
        for (a, b) in [(e.u, e.v), (e.v, e.u)] {
            // path x - a = b - y with x, y free and distinct
            let xs: Vec<Vertex> = g.neighbors(a).iter().copied().filter(|&x| mate[x as usize].is_none()).collect();
            if xs.is_empty() {
                continue;
            }
            for &y in g.neighbors(b).iter().filter(|&&y| mate[y as usize].is_none()) {
                if let Some(&x) = xs.iter().find(|&&x| x != y) {
                    return fail("augmenting path of length 3", vec![x, a, b, y]);
                }
            }
        }
    }
    Ok(())
}

/// Number of free neighbors of every vertex.
pub fn free_neighbor_counts(g: &Graph, matching: &[Edge]) -> Vec<usize> {
    let mut matched = vec![false; g.n()];
    for e in matching {
        matched[e.u as usize] = true;
        matched[e.v as usize] = true;
    }
    (0..g.n() as Vertex)
        .map(|v| g.neighbors(v).iter().filter(|&&u| !matched[u as usize]).count())
        .collect()
}

/// Exact maximum matching size by exhaustive branching, for |E| <= 24.
pub fn max_matching_exhaustive(g: &Graph) -> Result<usize> {
    let edges = g.edge_list();
    if edges.len() > 24 {
        return Err(DmpcError::TooLarge(edges.len()));
    }
    fn go(edges: &[Edge], i: usize, used: &mut Vec<bool>, size: usize, best: &mut usize) {
        if size + (edges.len() - i) <= *best {
            return;
        }
        if i == edges.len() {
            *best = size;
            return;
        }
        let e = edges[i];
        if !used[e.u as usize] && !used[e.v as usize] {
            used[e.u as usize] = true;
            used[e.v as usize] = true;
            go(edges, i + 1, used, size + 1, best);
            used[e.u as usize] = false;
            used[e.v as usize] = false;
        }
        go(edges, i + 1, used, size, best);
    }
    let mut best = 0;
    go(&edges, 0, &mut vec![false; g.n()], 0, &mut best);
    Ok(best)
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}

/// Component label per vertex: the smallest vertex ID in its component.
pub fn components_oracle(g: &Graph) -> Vec<Vertex> {
    let mut uf = UnionFind::new(g.n());
    for (e, _) in g.edges() {
        uf.union(e.u as usize, e.v as usize);
    }
    let mut label: BTreeMap<usize, Vertex> = BTreeMap::new();
    (0..g.n())
        .map(|v| {
            let r = uf.find(v);
            *label.entry(r).or_insert(v as Vertex)
        })
        .collect()
}

/// True when two labelings describe the same partition.
pub fn same_partition(a: &[u64], b: &[Vertex]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut ab: BTreeMap<u64, Vertex> = BTreeMap::new();
    let mut ba: BTreeMap<Vertex, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if *ab.entry(x).or_insert(y) != y || *ba.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

/// Minimum spanning forest weight by Kruskal.
pub fn mst_oracle(g: &Graph) -> Weight {
    let mut edges: Vec<(Weight, Edge)> = g.edges().map(|(e, w)| (w, e)).collect();
    edges.sort();
    let mut uf = UnionFind::new(g.n());
    edges
        .into_iter()
        .filter(|(_, e)| uf.union(e.u as usize, e.v as usize))
        .map(|(w, _)| w)
        .sum()
}

/// Minimum spanning forest weight by Prim, run from every unvisited vertex.
pub fn prim_weight(g: &Graph) -> Weight {
    let mut seen = vec![false; g.n()];
    let mut total = 0;
    for s in 0..g.n() {
        if seen[s] {
            continue;
        }
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((0, s as Vertex)));
        while let Some(Reverse((w, v))) = heap.pop() {
            if seen[v as usize] {
                continue;
            }
            seen[v as usize] = true;
            total += w;
            for &u in g.neighbors(v) {
                if !seen[u as usize] {
                    heap.push(Reverse((g.weight(v, u).unwrap(), u)));
                }
            }
        }
    }
    total
}

/// `forest` is acyclic, uses graph edges, and spans every component of `g`.
pub fn check_spanning_forest(g: &Graph, forest: &[Edge]) -> std::result::Result<(), Witness> {
    let mut uf = UnionFind::new(g.n());
    for e in forest {
        if !g.has_edge(e.u, e.v) {
            return fail("forest edge not in graph", vec![e.u, e.v]);
        }
        if !uf.union(e.u as usize, e.v as usize) {
            return fail("forest has a cycle", vec![e.u, e.v]);
        }
    }
    for (e, _) in g.edges() {
        if uf.find(e.u as usize) != uf.find(e.v as usize) {
            return fail("forest does not span a component", vec![e.u, e.v]);
        }
    }
    Ok(())
}

/// Edges on the tree path between `x` and `y` in `forest`, or None if disconnected.
pub fn tree_path(n: usize, forest: &[Edge], x: Vertex, y: Vertex) -> Option<BTreeSet<Edge>> {
    let mut adj: Vec<Vec<Vertex>> = vec![Vec::new(); n];
    for e in forest {
        adj[e.u as usize].push(e.v);
        adj[e.v as usize].push(e.u);
    }
    let mut parent: Vec<Option<Vertex>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut stack = vec![x];
    seen[x as usize] = true;
    while let Some(v) = stack.pop() {
        for &u in &adj[v as usize] {
            if !seen[u as usize] {
                seen[u as usize] = true;
                parent[u as usize] = Some(v);
                stack.push(u);
            }
        }
    }
    if !seen[y as usize] {
        return None;
    }
    let mut path = BTreeSet::new();
    let mut v = y;
    while v != x {
        let p = parent[v as usize].unwrap();
        path.insert(Edge::new(v, p));
        v = p;
    }
    Some(path)
}

/// Checks one component's Euler tour. `entries` maps index (1-based) to the
/// vertex stored there; `tree` lists the component's tree edges.
pub fn check_tour(entries: &BTreeMap<usize, Vertex>, tree: &[Edge], vertices: &BTreeSet<Vertex>) -> std::result::Result<(), Witness> {
    let len = 4 * (vertices.len().saturating_sub(1));
    if entries.len() != len {
        return fail("tour length differs from 4(|T|-1)", vertices.iter().copied().take(4).collect());
    }
    if len == 0 {
        return Ok(());
    }
    let seq: Vec<Vertex> = (1..=len)
        .map(|i| entries.get(&i).copied().ok_or(i))
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Witness { reason: "tour index missing", vertices: vec![] })?;
    let tree_set: BTreeSet<Edge> = tree.iter().copied().collect();
    if tree_set.len() + 1 != vertices.len() {
        return fail("tree edge count differs from |T|-1", vec![]);
    }
    if seq[0] != seq[len - 1] {
        return fail("tour does not return to the root", vec![seq[0], seq[len - 1]]);
    }
    let mut directed: BTreeSet<(Vertex, Vertex)> = BTreeSet::new();
    for k in 0..len / 2 {
        let (a, b) = (seq[2 * k], seq[2 * k + 1]);
        if !tree_set.contains(&Edge::new(a, b)) || a == b {
            return fail("traversal is not a tree edge", vec![a, b]);
        }
        if !directed.insert((a, b)) {
            return fail("tree edge traversed twice in one direction", vec![a, b]);
        }
        if 2 * k + 2 < len && seq[2 * k + 1] != seq[2 * k + 2] {
            return fail("consecutive traversals do not share a junction", vec![seq[2 * k + 1], seq[2 * k + 2]]);
        }
    }
    if directed.len() != 2 * tree_set.len() {
        return fail("tree edge not traversed in both directions", vec![]);
    }
    if seq.iter().any(|v| !vertices.contains(v)) {
        return fail("tour visits a vertex outside the component", vec![]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(a: Vertex, b: Vertex) -> Edge {
        Edge::new(a, b)
    }

    #[test]
    fn maximal_examples() {
        let tri = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]);
        assert!(check_maximal(&tri, &[e(0, 1)]).is_ok());
        let path = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]);
        assert!(check_maximal(&path, &[e(1, 2)]).is_ok());
        assert!(check_maximal(&path, &[]).is_err());
        assert_eq!(check_maximal(&path, &[e(0, 3)]).unwrap_err().reason, "matched edge not in graph");
    }

    #[test]
    fn augmenting_examples() {
        let path = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]);
        let w = check_no_short_augmenting(&path, &[e(1, 2)]).unwrap_err();
        assert_eq!(w.vertices, vec![0, 1, 2, 3]);
        let c4 = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        assert!(check_no_short_augmenting(&c4, &[e(0, 1), e(2, 3)]).is_ok());
    }

    #[test]
    fn exhaustive_examples() {
        assert_eq!(max_matching_exhaustive(&Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)])).unwrap(), 1);
        assert_eq!(max_matching_exhaustive(&Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)])).unwrap(), 2);
        let petersen = Graph::from_edges(
            10,
            &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 5), (1, 6), (2, 7), (3, 8), (4, 9), (5, 7), (7, 9), (9, 6), (6, 8), (8, 5)],
        );
        assert_eq!(max_matching_exhaustive(&petersen).unwrap(), 5);
        let big = Graph::from_edges(30, &(0..25).map(|i| (i, i + 1)).collect::<Vec<_>>());
        assert_eq!(max_matching_exhaustive(&big), Err(DmpcError::TooLarge(25)));
    }

    #[test]
    fn components_and_weights() {
        let g = Graph::new(3);
        assert_eq!(components_oracle(&g), vec![0, 1, 2]);
        assert_eq!(mst_oracle(&g), 0);
        let mut t = Graph::new(4);
        t.insert(0, 1, 3);
        t.insert(1, 2, 4);
        t.insert(1, 3, 5);
        assert_eq!(components_oracle(&t), vec![0, 0, 0, 0]);
        assert_eq!(mst_oracle(&t), 12);
        assert_eq!(prim_weight(&t), 12);
    }

    #[test]
    fn tour_checker_accepts_path_tour() {
        // path a-b-c rooted at a: [a,b,b,c,c,b,b,a]
        let seq = [0, 1, 1, 2, 2, 1, 1, 0];
        let entries: BTreeMap<usize, Vertex> = seq.iter().enumerate().map(|(i, &v)| (i + 1, v)).collect();
        let verts: BTreeSet<Vertex> = [0, 1, 2].into_iter().collect();
        assert!(check_tour(&entries, &[e(0, 1), e(1, 2)], &verts).is_ok());
        let mut bad = entries.clone();
        bad.insert(3, 2);
        assert!(check_tour(&bad, &[e(0, 1), e(1, 2)], &verts).is_err());
    }
}
