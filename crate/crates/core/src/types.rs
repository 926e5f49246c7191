//! Shared primitive types and the plain graph used by oracles and harnesses.

use std::collections::{BTreeMap, BTreeSet};

/// One machine word.
pub type Word = u64;
pub type MachineId = usize;
pub type Vertex = u32;
/// Fixed-point edge weight.
pub type Weight = u64;

/// Canonical undirected edge, `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub u: Vertex,
    pub v: Vertex,
}

impl Edge {
    pub fn new(a: Vertex, b: Vertex) -> Self {
        if a <= b {
            Edge { u: a, v: b }
        } else {
            Edge { u: b, v: a }
        }
    }

    pub fn other(&self, x: Vertex) -> Vertex {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }

    pub fn touches(&self, x: Vertex) -> bool {
        self.u == x || self.v == x
    }
}

/// A graph update as read from a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Update {
    Insert(Vertex, Vertex, Weight),
    Delete(Vertex, Vertex),
    Query(Vertex, Vertex),
}

impl Update {
    pub fn op_name(&self) -> &'static str {
        match self {
            Update::Insert(..) => "insert",
            Update::Delete(..) => "delete",
            Update::Query(..) => "query",
        }
    }
}

/// Plain adjacency-set graph. This is the shadow copy oracles run on.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adj: Vec<BTreeSet<Vertex>>,
    weights: BTreeMap<Edge, Weight>,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Graph {
            n,
            adj: vec![BTreeSet::new(); n],
            weights: BTreeMap::new(),
        }
    }

    pub fn from_edges(n: usize, edges: &[(Vertex, Vertex)]) -> Self {
        let mut g = Graph::new(n);
        for &(a, b) in edges {
            g.insert(a, b, 1);
        }
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.weights.len()
    }

    /// Returns false if the edge is a self loop, out of range, or present.
    pub fn insert(&mut self, a: Vertex, b: Vertex, w: Weight) -> bool {
        if a == b || a as usize >= self.n || b as usize >= self.n {
            return false;
        }
        let e = Edge::new(a, b);
        if self.weights.contains_key(&e) {
            return false;
        }
        self.weights.insert(e, w);
        self.adj[a as usize].insert(b);
        self.adj[b as usize].insert(a);
        true
    }

    pub fn remove(&mut self, a: Vertex, b: Vertex) -> bool {
        let e = Edge::new(a, b);
        if self.weights.remove(&e).is_none() {
            return false;
        }
        self.adj[a as usize].remove(&b);
        self.adj[b as usize].remove(&a);
        true
    }

    pub fn has_edge(&self, a: Vertex, b: Vertex) -> bool {
        self.weights.contains_key(&Edge::new(a, b))
    }

    pub fn weight(&self, a: Vertex, b: Vertex) -> Option<Weight> {
        self.weights.get(&Edge::new(a, b)).copied()
    }

    pub fn neighbors(&self, v: Vertex) -> &BTreeSet<Vertex> {
        &self.adj[v as usize]
    }

    pub fn degree(&self, v: Vertex) -> usize {
        self.adj[v as usize].len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Edge, Weight)> + '_ {
        self.weights.iter().map(|(e, w)| (*e, *w))
    }

    pub fn edge_list(&self) -> Vec<Edge> {
        self.weights.keys().copied().collect()
    }
}

/// Integer square root rounded up.
pub fn ceil_sqrt(x: usize) -> usize {
    if x == 0 {
        return 0;
    }
    let mut r = (x as f64).sqrt() as usize;
    while r * r < x {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= x {
        r -= 1;
    }
    r
}
