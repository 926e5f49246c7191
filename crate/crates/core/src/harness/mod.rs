//! Batch runs of an update stream under the simulator: preprocessing, one
//! metrics row per update, oracle checks every k updates, final dump.

pub mod stream;

use crate::connectivity::{ForestEngine, ForestMode};
use crate::error::DmpcError;
use crate::matching::{MatchingEngine, Mode};
use crate::oracle::{check_maximal, check_no_short_augmenting, components_oracle, free_neighbor_counts, mst_oracle, same_partition};
use crate::runtime::{entropy_of, PeakUsage, UpdateMetrics};
use crate::seqsim::{AbstractMemory, ScanMatching, SequentialAlgorithm};
use crate::types::{Edge, Graph, Update};
use crate::SimConfig;
use std::fmt::Write as _;
use std::str::FromStr;
use stream::{format_weight, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    /// Maximal matching.
    Mm,
    /// 3/2-approximate matching.
    Mm32,
    /// Connected components.
    Cc,
    /// Minimum spanning forest.
    Mst,
    /// Scan matching run through the memory reduction.
    Seqsim,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Mm => "mm",
            Algo::Mm32 => "mm32",
            Algo::Cc => "cc",
            Algo::Mst => "mst",
            Algo::Seqsim => "seqsim",
        }
    }
}

impl FromStr for Algo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "mm" => Algo::Mm,
            "mm32" => Algo::Mm32,
            "cc" => Algo::Cc,
            "mst" => Algo::Mst,
            "seqsim" => Algo::Seqsim,
            _ => return Err(format!("unknown algorithm `{s}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub algo: Algo,
    pub seed: u64,
    pub epsilon: f64,
    /// Edge bound for sizing; the stream's own maximum when absent.
    pub m_max: Option<usize>,
    pub c_s: f64,
    pub c_m: f64,
    /// Run the oracles every k updates.
    pub verify_every: Option<usize>,
}

impl RunConfig {
    pub fn new(algo: Algo) -> Self {
        RunConfig { algo, seed: 0, epsilon: 0.1, m_max: None, c_s: 32.0, c_m: 2.0, verify_every: None }
    }

    /// Applies a flat `key = value` file. Keys: algo, seed, epsilon, m_max,
    /// cs, cm, verify_every. Blank lines and `#` comments are ignored.
    pub fn apply_file(&mut self, text: &str) -> Result<(), RunError> {
        for (i, raw) in text.lines().enumerate() {
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let bad = |msg: String| RunError::Config(format!("config line {}: {msg}", i + 1));
            let (k, v) = body.split_once('=').ok_or_else(|| bad("expected `key = value`".into()))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |what: &str| bad(format!("`{k}` expects {what}, got `{v}`"));
            match k {
                "algo" => self.algo = v.parse().map_err(bad)?,
                "seed" => self.seed = v.parse().map_err(|_| num("an integer"))?,
                "epsilon" => self.epsilon = v.parse().map_err(|_| num("a number"))?,
                "m_max" => self.m_max = Some(v.parse().map_err(|_| num("an integer"))?),
                "cs" => self.c_s = v.parse().map_err(|_| num("a number"))?,
                "cm" => self.c_m = v.parse().map_err(|_| num("a number"))?,
                "verify_every" => self.verify_every = Some(v.parse().map_err(|_| num("an integer"))?),
                _ => return Err(bad(format!("unknown key `{k}`"))),
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error("{stage} (stream line {line}): {source}")]
    Sim { stage: String, line: usize, source: DmpcError },
    #[error("verification failed after update {update}: {witness}")]
    Verify { update: u64, witness: String },
}

impl RunError {
    /// Process exit status: 2 input, 3 simulator fault, 4 verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Sim { .. } => 3,
            RunError::Verify { .. } => 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics_csv: String,
    pub dump: String,
    pub preprocess: UpdateMetrics,
    pub rows: Vec<UpdateMetrics>,
    /// Entropy of per-pair words over the updates, if any were sent.
    pub entropy: Option<f64>,
    pub peak: PeakUsage,
    pub s: usize,
    pub capacity_n: usize,
    /// Oracle passes performed.
    pub checks: usize,
}

pub const CSV_HEADER: &str = "update_idx,op,rounds,active_max,comm_max_round,comm_total,machines_used";

enum Engine {
    Matching(Box<MatchingEngine>),
    Forest(Box<ForestEngine>),
    Seq(Box<AbstractMemory>, ScanMatching),
}

impl Engine {
    fn snapshot(&mut self) -> UpdateMetrics {
        match self {
            Engine::Matching(e) => e.metrics_snapshot(),
            Engine::Forest(e) => e.metrics_snapshot(),
            Engine::Seq(m, _) => m.runtime_mut().metrics_snapshot(),
        }
    }

    fn runtime(&mut self) -> &mut crate::Runtime {
        match self {
            Engine::Matching(e) => e.runtime_mut(),
            Engine::Forest(e) => e.runtime_mut(),
            Engine::Seq(m, _) => m.runtime_mut(),
        }
    }
}

fn row(csv: &mut String, label: &str, op: &str, m: &UpdateMetrics) {
    let _ = writeln!(
        csv,
        "{label},{op},{},{},{},{},{}",
        m.rounds, m.max_active_per_round, m.max_comm_per_round, m.total_comm, m.machines_ever_used
    );
}

/// Runs `st` under `cfg`.
pub fn run(st: &Stream, cfg: &RunConfig) -> Result<RunOutput, RunError> {
    let n = st.n.max(2);
    let needed = st.max_edges();
    let m_max = cfg.m_max.unwrap_or(needed).max(1);
    if m_max < needed {
        return Err(RunError::Config(format!("stream reaches {needed} edges, above --m-max {m_max}")));
    }
    if cfg.algo == Algo::Mm32 && !st.preload.is_empty() {
        return Err(RunError::Config("mm32 requires an empty start; remove the preload section".into()));
    }
    let pre_err = |source: DmpcError| RunError::Sim { stage: "preprocessing".into(), line: 0, source };
    let mut g = st.initial_graph();
    let mut engine = match cfg.algo {
        Algo::Mm | Algo::Mm32 => {
            let mode = if cfg.algo == Algo::Mm { Mode::Maximal } else { Mode::ThreeHalves };
            let mut e = MatchingEngine::new(n, m_max, cfg.c_s, cfg.c_m, cfg.seed, mode).map_err(pre_err)?;
            if !st.preload.is_empty() {
                e.load(&g).map_err(pre_err)?;
                e.bootstrap().map_err(pre_err)?;
            }
            Engine::Matching(Box::new(e))
        }
        Algo::Cc | Algo::Mst => {
            let mode = if cfg.algo == Algo::Cc { ForestMode::Components } else { ForestMode::MinForest };
            let mut e = ForestEngine::new(n, m_max, cfg.c_s, cfg.c_m, cfg.seed, mode).map_err(pre_err)?;
            if !st.preload.is_empty() {
                if cfg.algo == Algo::Cc {
                    e.load(&g).map_err(pre_err)?;
                    e.preprocess().map_err(pre_err)?;
                } else {
                    e.mst_preprocess(&g, cfg.epsilon).map_err(pre_err)?;
                }
            }
            Engine::Forest(Box::new(e))
        }
        Algo::Seqsim => {
            let sim = SimConfig::sized(n + m_max, cfg.c_s, cfg.c_m, cfg.seed).map_err(pre_err)?;
            let mut mem = Box::new(AbstractMemory::new(sim));
            let mut alg = ScanMatching::new(n, m_max);
            alg.preprocess(mem.as_mut()).map_err(pre_err)?;
            for &(u, v, w) in &st.preload {
                alg.update(Update::Insert(u, v, w), mem.as_mut()).map_err(pre_err)?;
            }
            Engine::Seq(mem, alg)
        }
    };
    let preprocess = engine.snapshot();
    engine.runtime().reset_pair_totals();
    let mut csv = format!("{CSV_HEADER}\n");
    row(&mut csv, "pre", "preprocess", &preprocess);
    let mut rows = Vec::with_capacity(st.updates.len());
    let mut checks = 0;
    let approx_start = cfg.algo == Algo::Mst && !st.preload.is_empty();
    if let Some(k) = cfg.verify_every {
        if k > 0 {
            verify(&mut engine, &g, cfg, approx_start).map_err(|w| RunError::Verify { update: 0, witness: w })?;
            checks += 1;
        }
    }
    for (i, &(line, upd)) in st.updates.iter().enumerate() {
        let stage = format!("update {i} ({})", upd.op_name());
        let fault = |source: DmpcError| RunError::Sim { stage: stage.clone(), line, source };
        let mut answer = None;
        match (&mut engine, upd) {
            (Engine::Matching(e), Update::Insert(u, v, _)) => e.insert(u, v).map_err(fault)?,
            (Engine::Matching(e), Update::Delete(u, v)) => e.delete(u, v).map_err(fault)?,
            (Engine::Matching(e), Update::Query(u, v)) => answer = Some((e.query(u, v).map_err(fault)?, g.has_edge(u, v) && is_matched(e, u, v))),
            (Engine::Forest(e), Update::Insert(u, v, w)) => e.insert_weighted(u, v, w).map_err(fault)?,
            (Engine::Forest(e), Update::Delete(u, v)) => e.delete(u, v).map_err(fault)?,
            (Engine::Forest(e), Update::Query(u, v)) => {
                let want = components_oracle(&g);
                answer = Some((e.connected(u, v).map_err(fault)?, want[u as usize] == want[v as usize]));
            }
            (Engine::Seq(mem, alg), op @ (Update::Insert(..) | Update::Delete(..))) => {
                alg.update(op, mem.as_mut()).map_err(fault)?;
            }
            (Engine::Seq(..), Update::Query(..)) => {}
        }
        match upd {
            Update::Insert(u, v, w) => {
                g.insert(u, v, w);
            }
            Update::Delete(u, v) => {
                g.remove(u, v);
            }
            Update::Query(..) => {}
        }
        let m = engine.snapshot();
        row(&mut csv, &i.to_string(), upd.op_name(), &m);
        rows.push(m);
        if let Some(k) = cfg.verify_every.filter(|&k| k > 0) {
            if let Some((got, want)) = answer {
                if got != want {
                    return Err(RunError::Verify { update: i as u64, witness: format!("query answered {got}, oracle says {want}") });
                }
            }
            if (i + 1) % k == 0 {
                verify(&mut engine, &g, cfg, approx_start).map_err(|w| RunError::Verify { update: i as u64, witness: w })?;
                checks += 1;
            }
        }
    }
    let totals: Vec<u64> = engine.runtime().pair_totals().values().copied().collect();
    let entropy = entropy_of(totals).ok();
    let peak = engine.runtime().peak();
    let s = engine.runtime().s();
    let capacity_n = engine.runtime().config().capacity_n;
    Ok(RunOutput { metrics_csv: csv, dump: dump(&engine), preprocess, rows, entropy, peak, s, capacity_n, checks })
}

fn is_matched(e: &MatchingEngine, u: u32, v: u32) -> bool {
    e.matching().contains(&Edge::new(u, v))
}

fn verify(engine: &mut Engine, g: &Graph, cfg: &RunConfig, approx_start: bool) -> Result<(), String> {
    match engine {
        Engine::Matching(e) => {
            let m = e.matching();
            check_maximal(g, &m).map_err(|w| w.to_string())?;
            e.check_placement(g)?;
            if cfg.algo == Algo::Mm32 {
                check_no_short_augmenting(g, &m).map_err(|w| w.to_string())?;
                let want: Vec<u32> = free_neighbor_counts(g, &m).into_iter().map(|c| c as u32).collect();
                if e.free_counters() != want {
                    return Err("free-neighbor counters differ from recount".into());
                }
            }
        }
        Engine::Forest(e) => {
            e.check(g).map_err(|w| w.to_string())?;
            if !same_partition(&e.components(), &components_oracle(g)) {
                return Err("component partition differs from union-find".into());
            }
            if cfg.algo == Algo::Mst {
                let (got, best) = (e.forest_weight(), mst_oracle(g));
                let ok = if approx_start { got as f64 <= (1.0 + cfg.epsilon) * best as f64 } else { got == best };
                if !ok {
                    return Err(format!("forest weight {got} against minimum {best}"));
                }
            }
        }
        Engine::Seq(mem, alg) => {
            let m = alg.matching(&mut mem.inspect()).map_err(|e| e.to_string())?;
            check_maximal(g, &m).map_err(|w| w.to_string())?;
        }
    }
    Ok(())
}

fn dump(engine: &Engine) -> String {
    let mut out = String::new();
    match engine {
        Engine::Matching(e) => {
            for ed in e.matching() {
                let _ = writeln!(out, "{} {}", ed.u, ed.v);
            }
        }
        Engine::Forest(e) => {
            if e.mode == ForestMode::Components {
                for (v, c) in e.components().into_iter().enumerate() {
                    let _ = writeln!(out, "{v} {c}");
                }
            } else {
                for (ed, w) in e.forest() {
                    let _ = writeln!(out, "{} {} {}", ed.u, ed.v, format_weight(w));
                }
                let _ = writeln!(out, "weight {}", format_weight(e.forest_weight()));
            }
        }
        Engine::Seq(mem, alg) => {
            let mut m = alg.matching(&mut mem.inspect()).unwrap_or_default();
            m.sort();
            for ed in m {
                let _ = writeln!(out, "{} {}", ed.u, ed.v);
            }
        }
    }
    out
}
