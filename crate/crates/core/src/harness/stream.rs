//! Update stream text format.
//!
//! ```text
//! # comment
//! n 64
//! preload
//! + 0 1 2.5
//! end
//! + 1 2
//! - 0 1
//! ? 0 2
//! ```
//!
//! `n` fixes the vertex count, otherwise it is one more than the largest ID.
//! Lines between `preload` and `end` form the initial graph. Weights are
//! decimals with up to three fractional digits, stored as thousandths;
//! a missing weight is 1.

use crate::types::{Graph, Update, Vertex, Weight};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

/// Fixed-point scale of stream weights.
pub const WEIGHT_SCALE: Weight = 1000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stream {
    pub n: usize,
    pub preload: Vec<(Vertex, Vertex, Weight)>,
    /// Updates with their 1-based line numbers.
    pub updates: Vec<(usize, Update)>,
}

impl Stream {
    /// Largest edge count over the run, preload included.
    pub fn max_edges(&self) -> usize {
        let mut g = self.initial_graph();
        let mut best = g.m();
        for &(_, u) in &self.updates {
            match u {
                Update::Insert(a, b, w) => {
                    g.insert(a, b, w);
                }
                Update::Delete(a, b) => {
                    g.remove(a, b);
                }
                Update::Query(..) => {}
            }
            best = best.max(g.m());
        }
        best
    }

    pub fn initial_graph(&self) -> Graph {
        let mut g = Graph::new(self.n);
        for &(u, v, w) in &self.preload {
            g.insert(u, v, w);
        }
        g
    }
}

pub fn parse_weight(s: &str) -> Option<Weight> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() || frac.len() > 3 || !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let mut f = frac.to_string();
    while f.len() < 3 {
        f.push('0');
    }
    int.parse::<Weight>().ok()?.checked_mul(WEIGHT_SCALE)?.checked_add(f.parse().ok()?)
}

pub fn format_weight(w: Weight) -> String {
    let (i, f) = (w / WEIGHT_SCALE, w % WEIGHT_SCALE);
    if f == 0 {
        i.to_string()
    } else {
        format!("{i}.{f:03}").trim_end_matches('0').to_string()
    }
}

pub fn parse(text: &str) -> Result<Stream, ParseError> {
    let mut st = Stream::default();
    let mut declared_n = None;
    let mut in_preload = false;
    let mut max_id: Option<Vertex> = None;
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |msg: &str| ParseError { line, msg: msg.to_string() };
        let body = raw.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        match toks[0] {
            "n" => {
                let v = toks.get(1).and_then(|t| t.parse::<usize>().ok()).filter(|_| toks.len() == 2).ok_or_else(|| err("expected `n <count>`"))?;
                declared_n = Some(v);
            }
            "preload" => {
                if in_preload || !st.updates.is_empty() || !st.preload.is_empty() {
                    return Err(err("preload section must come first and appear once"));
                }
                in_preload = true;
            }
            "end" => {
                if !in_preload {
                    return Err(err("`end` outside a preload section"));
                }
                in_preload = false;
            }
            op @ ("+" | "-" | "?") => {
                let arity = if op == "+" { 3..=4 } else { 3..=3 };
                if !arity.contains(&toks.len()) {
                    return Err(err("wrong number of fields"));
                }
                let vid = |t: &str| t.parse::<Vertex>().map_err(|_| err("vertex IDs are non-negative integers"));
                let (u, v) = (vid(toks[1])?, vid(toks[2])?);
                if u == v {
                    return Err(err("self loop"));
                }
                max_id = max_id.max(Some(u.max(v)));
                let w = match toks.get(3) {
                    Some(t) => parse_weight(t).ok_or_else(|| err("weights are decimals with at most three fractional digits"))?,
                    None => WEIGHT_SCALE,
                };
                let upd = match op {
                    "+" => Update::Insert(u, v, w),
                    "-" => Update::Delete(u, v),
                    _ => Update::Query(u, v),
                };
                if in_preload {
                    let Update::Insert(u, v, w) = upd else { return Err(err("preload holds only `+` lines")) };
                    if !seen.insert((u.min(v), u.max(v))) {
                        return Err(err("preload repeats an edge"));
                    }
                    st.preload.push((u, v, w));
                } else {
                    st.updates.push((line, upd));
                }
            }
            _ => return Err(err("unknown line")),
        }
    }
    if in_preload {
        return Err(ParseError { line: text.lines().count(), msg: "unterminated preload section".into() });
    }
    let needed = max_id.map_or(0, |m| m as usize + 1);
    check_replay(&st, needed)?;
    st.n = match declared_n {
        Some(n) if n < needed => return Err(ParseError { line: 0, msg: format!("vertex {} exceeds n = {n}", needed - 1) }),
        Some(n) => n,
        None => needed,
    };
    Ok(st)
}

/// Rejects duplicate inserts and deletions of absent edges.
fn check_replay(st: &Stream, n: usize) -> Result<(), ParseError> {
    let mut g = Graph::new(n);
    for &(u, v, w) in &st.preload {
        g.insert(u, v, w);
    }
    for &(line, upd) in &st.updates {
        let msg = match upd {
            Update::Insert(u, v, w) if !g.insert(u, v, w) => format!("edge ({u}, {v}) is already present"),
            Update::Delete(u, v) if !g.remove(u, v) => format!("edge ({u}, {v}) is not present"),
            _ => continue,
        };
        return Err(ParseError { line, msg });
    }
    Ok(())
}

/// Parameters of a generated stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenParams {
    pub n: usize,
    pub updates: usize,
    pub insert_prob: f64,
    pub weighted: bool,
    pub seed: u64,
}

/// Random stream. Deletions pick a present edge uniformly; a deletion drawn
/// on an empty graph is skipped and counted in the header comment.
pub fn generate(p: GenParams) -> Result<String, String> {
    if p.n < 2 {
        return Err("n must be at least 2".into());
    }
    if !(p.insert_prob >= 0.0 && p.insert_prob <= 1.0) {
        return Err("insert probability must lie in [0, 1]".into());
    }
    let full = p.n * (p.n - 1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut g = Graph::new(p.n);
    let mut body = String::new();
    let mut skipped = 0;
    for _ in 0..p.updates {
        let insert = rng.gen_bool(p.insert_prob) && g.m() < full;
        if insert {
            let (u, v) = loop {
                let u = rng.gen_range(0..p.n as Vertex);
                let v = rng.gen_range(0..p.n as Vertex);
                if u != v && !g.has_edge(u, v) {
                    break (u, v);
                }
            };
            g.insert(u, v, 1);
            if p.weighted {
                let w: Weight = rng.gen_range(1..=100_000);
                let _ = writeln!(body, "+ {u} {v} {}", format_weight(w));
            } else {
                let _ = writeln!(body, "+ {u} {v}");
            }
        } else if g.m() == 0 {
            skipped += 1;
        } else {
            let edges = g.edge_list();
            let e = edges[rng.gen_range(0..edges.len())];
            g.remove(e.u, e.v);
            let _ = writeln!(body, "- {} {}", e.u, e.v);
        }
    }
    let mut out = format!("# seed {} insert_prob {}\n", p.seed, p.insert_prob);
    if skipped > 0 {
        let _ = writeln!(out, "# skipped {skipped} deletions on an empty graph");
    }
    let _ = writeln!(out, "n {}", p.n);
    out.push_str(&body);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_round_trip() {
        for (s, w) in [("1", 1000), ("2.5", 2500), ("0.001", 1), ("7.125", 7125)] {
            assert_eq!(parse_weight(s), Some(w));
            assert_eq!(format_weight(w), s);
        }
        assert_eq!(parse_weight("1.2345"), None);
        assert_eq!(parse_weight("-1"), None);
    }

    #[test]
    fn parses_sections() {
        let s = parse("# x\nn 5\npreload\n+ 0 1 2\nend\n+ 1 2\n- 0 1\n? 0 2\n").unwrap();
        assert_eq!(s.n, 5);
        assert_eq!(s.preload, vec![(0, 1, 2000)]);
        assert_eq!(s.updates.len(), 3);
        assert_eq!(s.updates[0], (6, Update::Insert(1, 2, 1000)));
    }

    #[test]
    fn reports_line_numbers() {
        assert_eq!(parse("+ 0 1\n+ 0 x\n").unwrap_err().line, 2);
        assert_eq!(parse("+ 0 1\npreload\n").unwrap_err().line, 2);
        assert_eq!(parse("+ 1 1\n").unwrap_err().line, 1);
        assert_eq!(parse("+ 0 1\n+ 1 0\n").unwrap_err().line, 2);
        assert_eq!(parse("+ 0 1\n- 1 2\n").unwrap_err().line, 2);
    }

    #[test]
    fn insert_only_stream() {
        let text = generate(GenParams { n: 4, updates: 3, insert_prob: 1.0, weighted: false, seed: 1 }).unwrap();
        let s = parse(&text).unwrap();
        assert_eq!(s.updates.len(), 3);
        assert!(s.updates.iter().all(|(_, u)| matches!(u, Update::Insert(..))));
        assert_eq!(s.max_edges(), 3);
    }

    #[test]
    fn deletions_on_empty_graph_are_skipped() {
        let text = generate(GenParams { n: 4, updates: 5, insert_prob: 0.0, weighted: false, seed: 1 }).unwrap();
        assert!(parse(&text).unwrap().updates.is_empty());
        assert!(text.contains("skipped 5"));
    }

    #[test]
    fn same_seed_same_bytes() {
        let p = GenParams { n: 30, updates: 200, insert_prob: 0.6, weighted: true, seed: 9 };
        assert_eq!(generate(p).unwrap(), generate(p).unwrap());
    }
}
