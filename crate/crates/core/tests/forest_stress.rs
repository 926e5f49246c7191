use dmpc::connectivity::{ForestCounts, ForestEngine, ForestMode};
use dmpc::oracle::{components_oracle, mst_oracle, same_partition};
use dmpc::{Edge, Graph, Vertex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random stream with a share of deletions aimed at tree edges, checked
/// against the plain graph after every step.
fn churn(mode: ForestMode, n: usize, m_max: usize, steps: usize, seed: u64, tree_bias: f64) -> ForestCounts {
    let mut eng = ForestEngine::new(n, m_max, 32.0, 4.0, seed, mode).unwrap();
    let mut g = Graph::new(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for step in 0..steps {
        let insert = g.m() < m_max && (g.m() == 0 || rng.gen_bool(0.55));
        if insert {
            let (u, v) = loop {
                let u = rng.gen_range(0..n as Vertex);
                let v = rng.gen_range(0..n as Vertex);
                if u != v && !g.has_edge(u, v) {
                    break (u, v);
                }
            };
            let w = if mode == ForestMode::MinForest { rng.gen_range(1..50) } else { 1 };
            eng.insert_weighted(u, v, w).unwrap_or_else(|e| panic!("step {step} insert {u} {v}: {e}"));
            g.insert(u, v, w);
        } else {
            let forest = eng.forest();
            let e: Edge = if !forest.is_empty() && rng.gen_bool(tree_bias) {
                forest[rng.gen_range(0..forest.len())].0
            } else {
                let edges = g.edge_list();
                edges[rng.gen_range(0..edges.len())]
            };
            eng.delete(e.u, e.v).unwrap_or_else(|err| panic!("step {step} delete {e:?}: {err}"));
            g.remove(e.u, e.v);
        }
        eng.check(&g).unwrap_or_else(|w| panic!("step {step}: {w}"));
        assert!(same_partition(&eng.components(), &components_oracle(&g)), "step {step}");
        if mode == ForestMode::MinForest {
            assert_eq!(eng.forest_weight(), mst_oracle(&g), "step {step}");
        }
    }
    eng.counts()
}

#[test]
fn components_sparse_churn() {
    let c = churn(ForestMode::Components, 40, 60, 1500, 1, 0.5);
    assert!(c.replacements > 0 && c.cuts > c.replacements);
}

#[test]
fn components_dense_churn() {
    let c = churn(ForestMode::Components, 30, 150, 1500, 2, 0.6);
    assert!(c.replacements > 0);
}

#[test]
fn min_forest_churn() {
    let c = churn(ForestMode::MinForest, 40, 100, 1500, 3, 0.5);
    assert!(c.swaps > 0 && c.replacements > 0);
}

#[test]
fn blocks_split_as_adjacency_grows() {
    let c = churn(ForestMode::Components, 120, 600, 1200, 4, 0.3);
    assert!(c.splits > 0);
}

#[test]
fn connected_query_matches_components() {
    let mut eng = ForestEngine::new(6, 10, 32.0, 4.0, 0, ForestMode::Components).unwrap();
    for (u, v) in [(0, 1), (1, 2), (3, 4)] {
        eng.insert(u, v).unwrap();
    }
    let before = eng.runtime().rounds_done();
    assert!(eng.connected(0, 2).unwrap());
    assert!(!eng.connected(2, 3).unwrap());
    assert_eq!(eng.runtime().rounds_done() - before, 4);
    eng.delete(1, 2).unwrap();
    assert!(!eng.connected(0, 2).unwrap());
}

fn random_graph(n: usize, p: f64, seed: u64, weights: bool) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new(n);
    for u in 0..n as Vertex {
        for v in u + 1..n as Vertex {
            if rng.gen_bool(p) {
                let w = if weights { rng.gen_range(1..1000) } else { 1 };
                g.insert(u, v, w);
            }
        }
    }
    g
}

#[test]
fn preprocess_builds_valid_tours() {
    for (n, p, seed) in [(2, 1.0, 0), (5, 0.5, 1), (64, 0.05, 2), (300, 3.0 / 300.0, 3)] {
        let g = random_graph(n, p, seed, false);
        let mut eng = ForestEngine::new(n, g.m() + 20, 32.0, 4.0, seed, ForestMode::Components).unwrap();
        eng.load(&g).unwrap();
        let rounds = eng.preprocess().unwrap();
        eng.check(&g).unwrap_or_else(|w| panic!("n={n}: {w}"));
        assert!(same_partition(&eng.components(), &components_oracle(&g)));
        eprintln!("n={n} m={} rounds={rounds}", g.m());
    }
}

#[test]
fn star_preprocess() {
    let g = Graph::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
    let mut eng = ForestEngine::new(5, 8, 32.0, 4.0, 9, ForestMode::Components).unwrap();
    eng.load(&g).unwrap();
    eng.preprocess().unwrap();
    eng.check(&g).unwrap();
    assert_eq!(eng.forest().len(), 4);
}

#[test]
fn updates_after_preprocess() {
    let n = 80;
    let mut g = random_graph(n, 0.04, 5, false);
    let mut eng = ForestEngine::new(n, 400, 32.0, 4.0, 5, ForestMode::Components).unwrap();
    eng.load(&g).unwrap();
    eng.preprocess().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for step in 0..600 {
        let forest = eng.forest();
        if rng.gen_bool(0.5) && !forest.is_empty() {
            let e = forest[rng.gen_range(0..forest.len())].0;
            eng.delete(e.u, e.v).unwrap();
            g.remove(e.u, e.v);
        } else {
            let (u, v) = (rng.gen_range(0..n as Vertex), rng.gen_range(0..n as Vertex));
            if u == v || g.has_edge(u, v) {
                continue;
            }
            eng.insert(u, v).unwrap();
            g.insert(u, v, 1);
        }
        eng.check(&g).unwrap_or_else(|w| panic!("step {step}: {w}"));
    }
}

#[test]
#[ignore]
fn preprocess_large_gnp() {
    let n = 1024;
    let g = random_graph(n, 3.0 / n as f64, 11, false);
    let mut eng = ForestEngine::new(n, g.m() + 64, 32.0, 4.0, 11, ForestMode::Components).unwrap();
    eng.load(&g).unwrap();
    let rounds = eng.preprocess().unwrap();
    eng.check(&g).unwrap();
    eprintln!("rounds={rounds} peak={:?}", eng.runtime().peak());
}

#[test]
fn mst_preprocess_within_factor() {
    for (n, seed, eps) in [(60, 1, 0.1), (120, 2, 0.5), (200, 3, 0.1)] {
        let g = random_graph(n, 0.06, seed, true);
        let mut eng = ForestEngine::new(n, g.m() + 10, 32.0, 4.0, seed, ForestMode::MinForest).unwrap();
        let rounds = eng.mst_preprocess(&g, eps).unwrap();
        eng.check(&g).unwrap();
        let (got, best) = (eng.forest_weight() as f64, mst_oracle(&g) as f64);
        assert!(got <= (1.0 + eps) * best, "n={n}: {got} vs {best}");
        eprintln!("n={n} eps={eps} ratio={:.4} rounds={rounds}", got / best);
    }
}

#[test]
fn mst_preprocess_rejects_bad_input() {
    let g = Graph::from_edges(3, &[(0, 1)]);
    let mut eng = ForestEngine::new(3, 4, 32.0, 4.0, 0, ForestMode::MinForest).unwrap();
    assert!(matches!(eng.mst_preprocess(&g, 0.0), Err(dmpc::DmpcError::NonPositiveEpsilon)));
    let mut z = Graph::new(3);
    z.insert(0, 1, 0);
    assert!(matches!(eng.mst_preprocess(&z, 0.1), Err(dmpc::DmpcError::NonPositiveWeight)));
}
