use dmpc::oracle::check_maximal;
use dmpc::seqsim::{simulate_update, AbstractMemory, Memory, PlainMemory, ScanMatching, SequentialAlgorithm};
use dmpc::{DmpcError, Graph, SimConfig, Update, Vertex};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn memory(n: usize) -> AbstractMemory {
    AbstractMemory::new(SimConfig::sized(n, 8.0, 8.0, 0).unwrap())
}

#[test]
fn write_then_read() {
    let mut mem = memory(256);
    let base = mem.alloc(100).unwrap();
    mem.write(base + 42, 7).unwrap();
    assert_eq!(mem.read(base + 42).unwrap(), 7);
    assert_eq!(mem.read(base + 41).unwrap(), 0);
}

#[test]
fn unallocated_read_fails() {
    let mut mem = memory(256);
    mem.alloc(10).unwrap();
    assert!(matches!(mem.read(10), Err(DmpcError::UnallocatedAddress(10))));
}

#[test]
fn single_access_costs() {
    let mut mem = memory(1024);
    let base = mem.alloc(600).unwrap();
    mem.runtime_mut().metrics_snapshot();
    mem.write(base + 550, 3).unwrap();
    let m = mem.runtime_mut().metrics_snapshot();
    assert_eq!(m.rounds, 2);
    assert!(m.max_active_per_round <= 3);
    assert!(m.max_comm_per_round <= 4);
}

#[test]
fn scratch_is_capped() {
    let mut mem = memory(256);
    let s = mem.runtime().s();
    assert!(mem.set_scratch(s / 2).is_ok());
    assert!(matches!(mem.set_scratch(s + 1), Err(DmpcError::ScratchExceeded { .. })));
}

/// Callback with a fixed number of accesses.
struct Touch(u64);

impl SequentialAlgorithm for Touch {
    type Delta = ();
    fn preprocess(&mut self, mem: &mut dyn Memory) -> dmpc::Result<()> {
        mem.alloc(64).map(|_| ())
    }
    fn update(&mut self, _: Update, mem: &mut dyn Memory) -> dmpc::Result<()> {
        for i in 0..self.0 {
            mem.write(i % 64, i)?;
        }
        Ok(())
    }
}

#[test]
fn rounds_follow_access_count() {
    for k in [0, 1, 10] {
        let mut mem = memory(256);
        let mut alg = Touch(k);
        alg.preprocess(&mut mem).unwrap();
        let (_, m, acc) = simulate_update(&mut alg, &mut mem, Update::Query(0, 0)).unwrap();
        assert_eq!(acc, k);
        assert_eq!(m.rounds as u64, 2 * k);
    }
}

fn stream(n: usize, steps: usize, seed: u64) -> Vec<Update> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new(n);
    let mut out = Vec::new();
    for _ in 0..steps {
        if g.m() == 0 || rng.gen_bool(0.6) {
            let (u, v) = (rng.gen_range(0..n as Vertex), rng.gen_range(0..n as Vertex));
            if u != v && !g.has_edge(u, v) {
                g.insert(u, v, 1);
                out.push(Update::Insert(u, v, 1));
            }
        } else {
            let edges = g.edge_list();
            let e = edges[rng.gen_range(0..edges.len())];
            g.remove(e.u, e.v);
            out.push(Update::Delete(e.u, e.v));
        }
    }
    out
}

#[test]
fn scan_matching_stays_maximal_and_matches_direct_run() {
    let (n, m_max) = (64, 1000);
    let mut mem = AbstractMemory::new(SimConfig::sized(n + m_max, 8.0, 8.0, 1).unwrap());
    let mut alg = ScanMatching::new(n, m_max);
    alg.preprocess(&mut mem).unwrap();
    let mut plain = PlainMemory::default();
    let mut direct = ScanMatching::new(n, m_max);
    direct.preprocess(&mut plain).unwrap();
    let mut g = Graph::new(n);
    for (i, op) in stream(n, 1000, 2).into_iter().enumerate() {
        let (delta, m, acc) = simulate_update(&mut alg, &mut mem, op).unwrap();
        let before = plain.accesses;
        assert_eq!(direct.update(op, &mut plain).unwrap(), delta, "update {i}");
        assert_eq!(plain.accesses - before, acc);
        assert!(m.rounds as u64 <= 2 * acc && m.rounds as u64 >= acc);
        assert!(m.max_active_per_round <= 3 && m.max_comm_per_round <= 4);
        match op {
            Update::Insert(u, v, w) => {
                g.insert(u, v, w);
            }
            Update::Delete(u, v) => {
                g.remove(u, v);
            }
            Update::Query(..) => {}
        }
        let matching = direct.matching(&mut plain).unwrap();
        check_maximal(&g, &matching).unwrap_or_else(|w| panic!("update {i}: {w}"));
    }
}

proptest! {
    #[test]
    fn any_access_sequence_costs_two_rounds_each(ops in prop::collection::vec((0u64..300, prop::option::of(0u64..1000)), 0..40)) {
        let mut mem = memory(400);
        mem.alloc(300).unwrap();
        mem.runtime_mut().metrics_snapshot();
        let mut model = vec![0u64; 300];
        for &(a, w) in &ops {
            match w {
                Some(v) => { mem.write(a, v).unwrap(); model[a as usize] = v; }
                None => prop_assert_eq!(mem.read(a).unwrap(), model[a as usize]),
            }
        }
        let m = mem.runtime_mut().metrics_snapshot();
        prop_assert_eq!(m.rounds, 2 * ops.len());
        prop_assert!(m.max_active_per_round <= 3);
    }
}
