//! Running a sequential dynamic algorithm with the cluster as its memory.
//! One compute machine runs the algorithm and keeps the interval table;
//! every other machine stores one contiguous interval of the address space.
//! An access is one request round and one reply round with a single
//! storage machine.

use crate::error::{DmpcError, Result};
use crate::runtime::{MsgKind, Runtime, SimConfig, UpdateMetrics};
use crate::types::{Edge, MachineId, Update, Vertex, Word};

/// Word-addressed memory seen by a sequential algorithm.
pub trait Memory {
    /// Reserves `len` fresh zeroed words and returns the first address.
    fn alloc(&mut self, len: u64) -> Result<u64>;
    fn read(&mut self, addr: u64) -> Result<Word>;
    fn write(&mut self, addr: u64, value: Word) -> Result<()>;
}

/// Address space spread over storage machines.
pub struct AbstractMemory {
    rt: Runtime,
    /// Interval starts, one per storage machine in address order.
    intervals: Vec<(u64, MachineId)>,
    interval_len: u64,
    allocated: u64,
    accesses: u64,
    scratch: usize,
}

/// The machine running the algorithm, which also holds the interval table.
pub const COMPUTE: MachineId = 0;

impl AbstractMemory {
    pub fn new(cfg: SimConfig) -> Self {
        let interval_len = (cfg.machine_memory_s / 2).max(1) as u64;
        AbstractMemory { rt: Runtime::new(cfg), intervals: Vec::new(), interval_len, allocated: 0, accesses: 0, scratch: 0 }
    }

    pub fn runtime(&self) -> &Runtime {
        &self.rt
    }

    pub fn runtime_mut(&mut self) -> &mut Runtime {
        &mut self.rt
    }

    /// Accesses performed since construction.
    pub fn accesses(&self) -> u64 {
        self.accesses
    }

    pub fn allocated(&self) -> u64 {
        self.allocated
    }

    /// Storage machine of an allocated address.
    pub fn machine_of(&self, addr: u64) -> Result<MachineId> {
        if addr >= self.allocated {
            return Err(DmpcError::UnallocatedAddress(addr));
        }
        Ok(self.intervals[(addr / self.interval_len) as usize].1)
    }

    /// Declares the compute machine's local working set.
    pub fn set_scratch(&mut self, words: usize) -> Result<()> {
        let cap = self.rt.s().saturating_sub(self.table_words());
        if words > cap {
            return Err(DmpcError::ScratchExceeded { words, cap });
        }
        self.scratch = words;
        self.sync_compute();
        Ok(())
    }

    fn table_words(&self) -> usize {
        3 + 2 * self.intervals.len()
    }

    fn sync_compute(&mut self) {
        let w = self.table_words() + self.scratch;
        self.rt.set_resident(COMPUTE, w);
    }

    fn access(&mut self, addr: u64, write: Option<Word>) -> Result<Word> {
        let m = self.machine_of(addr)?;
        let req = match write {
            Some(v) => vec![addr, v],
            None => vec![addr],
        };
        let kind = if write.is_some() { MsgKind::MemWrite } else { MsgKind::MemRead };
        self.rt.send(COMPUTE, m, kind, req)?;
        self.rt.end_round()?;
        self.rt.take_inbox(m);
        let store = &mut self.rt.machine_mut(m).store;
        let value = match write {
            Some(v) => {
                store.insert(addr, v);
                self.rt.send(m, COMPUTE, MsgKind::MemAck, vec![1])?;
                v
            }
            None => {
                let v = store.get(&addr).copied().unwrap_or(0);
                self.rt.send(m, COMPUTE, MsgKind::MemReply, vec![v])?;
                v
            }
        };
        self.rt.end_round()?;
        self.rt.take_inbox(COMPUTE);
        self.accesses += 1;
        Ok(value)
    }
}

impl Memory for AbstractMemory {
    /// Extends the address space. Only the compute machine's table changes.
    fn alloc(&mut self, len: u64) -> Result<u64> {
        let base = self.allocated;
        let end = base + len;
        while (self.intervals.len() as u64) * self.interval_len < end {
            let m = self.intervals.len() + 1;
            if m >= self.rt.machine_count() {
                return Err(DmpcError::OutOfMachines(self.rt.machine_count()));
            }
            self.intervals.push((self.intervals.len() as u64 * self.interval_len, m));
        }
        self.allocated = end;
        self.sync_compute();
        Ok(base)
    }

    fn read(&mut self, addr: u64) -> Result<Word> {
        self.access(addr, None)
    }

    fn write(&mut self, addr: u64, value: Word) -> Result<()> {
        self.access(addr, Some(value)).map(|_| ())
    }
}

/// Uncharged read-only view of the cluster's cells, for inspection by a
/// harness.
pub struct Inspect<'a>(&'a AbstractMemory);

impl AbstractMemory {
    pub fn inspect(&self) -> Inspect<'_> {
        Inspect(self)
    }
}

impl Memory for Inspect<'_> {
    fn alloc(&mut self, _: u64) -> Result<u64> {
        Err(DmpcError::Config("inspection is read-only".into()))
    }

    fn read(&mut self, addr: u64) -> Result<Word> {
        let m = self.0.machine_of(addr)?;
        Ok(self.0.rt.machine(m).store.get(&addr).copied().unwrap_or(0))
    }

    fn write(&mut self, _: u64, _: Word) -> Result<()> {
        Err(DmpcError::Config("inspection is read-only".into()))
    }
}

/// The same memory in a plain vector, for running an algorithm directly.
#[derive(Debug, Clone, Default)]
pub struct PlainMemory {
    pub cells: Vec<Word>,
    pub accesses: u64,
}

impl Memory for PlainMemory {
    fn alloc(&mut self, len: u64) -> Result<u64> {
        let base = self.cells.len() as u64;
        self.cells.resize((base + len) as usize, 0);
        Ok(base)
    }

    fn read(&mut self, addr: u64) -> Result<Word> {
        self.accesses += 1;
        self.cells.get(addr as usize).copied().ok_or(DmpcError::UnallocatedAddress(addr))
    }

    fn write(&mut self, addr: u64, value: Word) -> Result<()> {
        self.accesses += 1;
        let c = self.cells.get_mut(addr as usize).ok_or(DmpcError::UnallocatedAddress(addr))?;
        *c = value;
        Ok(())
    }
}

/// A sequential dynamic algorithm that touches the world only through a
/// [`Memory`].
pub trait SequentialAlgorithm {
    type Delta;
    fn preprocess(&mut self, mem: &mut dyn Memory) -> Result<()>;
    fn update(&mut self, op: Update, mem: &mut dyn Memory) -> Result<Self::Delta>;
}

/// Runs one update on the cluster and returns its delta and costs.
pub fn simulate_update<A: SequentialAlgorithm>(alg: &mut A, mem: &mut AbstractMemory, op: Update) -> Result<(A::Delta, UpdateMetrics, u64)> {
    let before = mem.accesses();
    let delta = alg.update(op, mem)?;
    let metrics = mem.runtime_mut().metrics_snapshot();
    Ok((delta, metrics, mem.accesses() - before))
}

/// Change of matched status of one edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchChange {
    pub edge: Edge,
    pub matched: bool,
}

/// Maximal matching by scanning: a deleted matched edge frees both
/// endpoints, and each scans its adjacency list for a free neighbor.
///
/// Layout: `mate[v]` (0 for free, else mate + 1), `head[v]` (0 for empty,
/// else slot + 1), a free-slot list head and a slot high-water mark, then
/// slots of two words: neighbor and next slot + 1.
#[derive(Debug, Clone)]
pub struct ScanMatching {
    n: usize,
    slots: u64,
    mate: u64,
    head: u64,
    free: u64,
    high: u64,
    pool: u64,
}

impl ScanMatching {
    /// Room for `m_max` edges on `n` vertices.
    pub fn new(n: usize, m_max: usize) -> Self {
        ScanMatching { n, slots: 2 * m_max as u64, mate: 0, head: 0, free: 0, high: 0, pool: 0 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Reads every mate cell. Costs n accesses.
    pub fn matching(&self, mem: &mut dyn Memory) -> Result<Vec<Edge>> {
        let mut out = Vec::new();
        for v in 0..self.n as u64 {
            let m = mem.read(self.mate + v)?;
            if m != 0 && v < m - 1 {
                out.push(Edge::new(v as Vertex, (m - 1) as Vertex));
            }
        }
        Ok(out)
    }

    fn push(&self, mem: &mut dyn Memory, v: Vertex, u: Vertex) -> Result<()> {
        let f = mem.read(self.free)?;
        let slot = if f != 0 {
            let next = mem.read(self.pool + 2 * (f - 1) + 1)?;
            mem.write(self.free, next)?;
            f - 1
        } else {
            let h = mem.read(self.high)?;
            if h >= self.slots {
                return Err(DmpcError::Config("edge slots exhausted".into()));
            }
            mem.write(self.high, h + 1)?;
            h
        };
        let old = mem.read(self.head + v as u64)?;
        mem.write(self.pool + 2 * slot, u as Word)?;
        mem.write(self.pool + 2 * slot + 1, old)?;
        mem.write(self.head + v as u64, slot + 1)
    }

    fn unlink(&self, mem: &mut dyn Memory, v: Vertex, u: Vertex) -> Result<()> {
        let mut prev: Option<u64> = None;
        let mut cur = mem.read(self.head + v as u64)?;
        while cur != 0 {
            let slot = cur - 1;
            let nbr = mem.read(self.pool + 2 * slot)?;
            let next = mem.read(self.pool + 2 * slot + 1)?;
            if nbr == u as Word {
                match prev {
                    None => mem.write(self.head + v as u64, next)?,
                    Some(p) => mem.write(self.pool + 2 * p + 1, next)?,
                }
                let f = mem.read(self.free)?;
                mem.write(self.pool + 2 * slot + 1, f)?;
                return mem.write(self.free, slot + 1);
            }
            prev = Some(slot);
            cur = next;
        }
        Err(DmpcError::UnknownEdge(v, u))
    }

    /// First free neighbor of `v` in list order.
    fn scan_free(&self, mem: &mut dyn Memory, v: Vertex) -> Result<Option<Vertex>> {
        let mut cur = mem.read(self.head + v as u64)?;
        while cur != 0 {
            let slot = cur - 1;
            let nbr = mem.read(self.pool + 2 * slot)?;
            if mem.read(self.mate + nbr)? == 0 {
                return Ok(Some(nbr as Vertex));
            }
            cur = mem.read(self.pool + 2 * slot + 1)?;
        }
        Ok(None)
    }

    fn set_mates(&self, mem: &mut dyn Memory, u: Vertex, v: Vertex) -> Result<()> {
        mem.write(self.mate + u as u64, v as Word + 1)?;
        mem.write(self.mate + v as u64, u as Word + 1)
    }
}

impl SequentialAlgorithm for ScanMatching {
    type Delta = Vec<MatchChange>;

    /// Reserves the layout. Fresh memory is zero, so nothing is written.
    fn preprocess(&mut self, mem: &mut dyn Memory) -> Result<()> {
        let n = self.n as u64;
        self.mate = mem.alloc(n)?;
        self.head = mem.alloc(n)?;
        self.free = mem.alloc(1)?;
        self.high = mem.alloc(1)?;
        self.pool = mem.alloc(2 * self.slots)?;
        Ok(())
    }

    fn update(&mut self, op: Update, mem: &mut dyn Memory) -> Result<Vec<MatchChange>> {
        let mut out = Vec::new();
        match op {
            Update::Insert(u, v, _) => {
                self.push(mem, u, v)?;
                self.push(mem, v, u)?;
                if mem.read(self.mate + u as u64)? == 0 && mem.read(self.mate + v as u64)? == 0 {
                    self.set_mates(mem, u, v)?;
                    out.push(MatchChange { edge: Edge::new(u, v), matched: true });
                }
            }
            Update::Delete(u, v) => {
                self.unlink(mem, u, v)?;
                self.unlink(mem, v, u)?;
                if mem.read(self.mate + u as u64)? == v as Word + 1 {
                    mem.write(self.mate + u as u64, 0)?;
                    mem.write(self.mate + v as u64, 0)?;
                    out.push(MatchChange { edge: Edge::new(u, v), matched: false });
                    for x in [u, v] {
                        if mem.read(self.mate + x as u64)? != 0 {
                            continue;
                        }
                        if let Some(w) = self.scan_free(mem, x)? {
                            self.set_mates(mem, x, w)?;
                            out.push(MatchChange { edge: Edge::new(x, w), matched: true });
                        }
                    }
                }
            }
            Update::Query(..) => {}
        }
        Ok(out)
    }
}
