//! Sample sort in a fixed number of rounds: samples to a coordinator,
//! splitters spread down a fan-out tree, one scatter round.

use super::{MsgKind, Runtime};
use crate::error::{Direction, DmpcError, Result};
use crate::types::{MachineId, Word};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Sorts fixed-width keys. `input[i]` holds the keys resident on
/// `machines[i]`; the result holds, per machine and in machine order,
/// contiguous sorted blocks. `machines[0]` acts as the sampling coordinator.
pub fn distributed_sort(
    rt: &mut Runtime,
    machines: &[MachineId],
    input: Vec<Vec<Vec<Word>>>,
    width: usize,
) -> Result<Vec<Vec<Vec<Word>>>> {
    assert_eq!(machines.len(), input.len());
    assert!(width >= 1 && !machines.is_empty());
    assert!(input.iter().flatten().all(|k| k.len() == width));
    let q = machines.len();
    let s = rt.s();
    let coord = machines[0];
    let seed = rt.config().rng_seed;
    let total_words: usize = input.iter().map(|v| v.len() * width).sum();
    let buckets = (4 * total_words).div_ceil(s).clamp(1, q);

    let mut local = input;
    for (i, keys) in local.iter_mut().enumerate() {
        keys.sort();
        rt.set_scratch(machines[i], keys.len() * width);
    }

    // Round 1: random samples to the coordinator.
    let per_machine = (s / (q * width)).max(1);
    for (i, keys) in local.iter().enumerate() {
        if keys.is_empty() {
            continue;
        }
        let take = per_machine.min(keys.len());
        let mut payload = Vec::with_capacity(take * width);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (machines[i] as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for j in rand::seq::index::sample(&mut rng, keys.len(), take).into_vec() {
            payload.extend_from_slice(&keys[j]);
        }
        rt.send(machines[i], coord, MsgKind::Sample, payload)?;
    }
    rt.end_round()?;
    let mut samples: Vec<Vec<Word>> = rt
        .take_inbox(coord)
        .into_iter()
        .filter(|m| m.kind == MsgKind::Sample)
        .flat_map(|m| m.payload.chunks(width).map(|c| c.to_vec()).collect::<Vec<_>>())
        .collect();
    samples.sort();
    let splitters: Vec<Vec<Word>> = (1..buckets)
        .filter_map(|k| samples.get(k * samples.len() / buckets).cloned())
        .collect();

    // Splitter distribution: every holder forwards the table to as many new
    // machines as its send cap allows.
    let table: Vec<Word> = splitters.iter().flatten().copied().collect();
    if !table.is_empty() {
        let fan = s / table.len();
        if fan == 0 {
            return Err(DmpcError::BandwidthExceeded {
                machine: coord,
                direction: Direction::Sent,
                words: table.len(),
                cap: s,
            });
        }
        let mut holders = vec![0usize];
        let mut next = 1usize;
        while next < q {
            let mut fresh = Vec::new();
            for &h in &holders {
                for _ in 0..fan {
                    if next >= q {
                        break;
                    }
                    rt.send(machines[h], machines[next], MsgKind::Splitter, table.clone())?;
                    fresh.push(next);
                    next += 1;
                }
            }
            rt.end_round()?;
            for &f in &fresh {
                rt.take_inbox(machines[f]);
            }
            holders.extend(fresh);
        }
    }

    // Scatter: each key goes to the machine owning its bucket.
    let mut received: Vec<Vec<Vec<Word>>> = vec![Vec::new(); q];
    for (i, keys) in local.into_iter().enumerate() {
        let mut groups: Vec<Vec<Word>> = vec![Vec::new(); buckets];
        for k in keys {
            let b = splitters.partition_point(|sp| *sp <= k);
            groups[b].extend_from_slice(&k);
        }
        for (b, words) in groups.into_iter().enumerate() {
            if words.is_empty() {
                continue;
            }
            for chunk in words.chunks(width) {
                received[b].push(chunk.to_vec());
            }
            rt.send(machines[i], machines[b], MsgKind::Scatter, words)?;
        }
    }
    for (i, keys) in received.iter().enumerate() {
        rt.set_scratch(machines[i], keys.len() * width);
    }
    rt.end_round()?;
    for &m in machines {
        rt.take_inbox(m);
        rt.set_scratch(m, 0);
    }
    for keys in received.iter_mut() {
        keys.sort();
    }
    Ok(received)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::SimConfig;
    use rand::Rng;

    fn rt(mu: usize, s: usize) -> Runtime {
        Runtime::new(SimConfig {
            capacity_n: mu * s,
            machine_memory_s: s,
            machine_count_mu: mu,
            rng_seed: 0,
        })
    }

    #[test]
    fn four_keys_two_machines() {
        let mut r = rt(2, 4);
        let out = distributed_sort(&mut r, &[0, 1], vec![vec![vec![5], vec![1]], vec![vec![9], vec![3]]], 1).unwrap();
        assert_eq!(out, vec![vec![vec![1], vec![3]], vec![vec![5], vec![9]]]);
    }

    #[test]
    fn sorted_input_keeps_placement_and_round_count() {
        let mut r = rt(2, 4);
        let a = distributed_sort(&mut r, &[0, 1], vec![vec![vec![5], vec![1]], vec![vec![9], vec![3]]], 1).unwrap();
        let rounds_a = r.take_rounds().len();
        let b = distributed_sort(&mut r, &[0, 1], a.clone(), 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(r.take_rounds().len(), rounds_a);
    }

    #[test]
    fn many_keys_match_sequential_sort() {
        let mut r = rt(128, 1024);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut input = vec![Vec::new(); 128];
        let mut all = Vec::new();
        for i in 0..10_000 {
            let k = vec![rng.gen_range(0..1000u64), rng.gen::<u32>() as u64];
            all.push(k.clone());
            input[i % 128].push(k);
        }
        let machines: Vec<_> = (0..128).collect();
        let out = distributed_sort(&mut r, &machines, input, 2).unwrap();
        assert!(r.take_rounds().len() <= 6);
        all.sort();
        let flat: Vec<_> = out.into_iter().flatten().collect();
        assert_eq!(flat, all);
    }

    #[test]
    fn oversized_bucket_is_a_memory_fault() {
        let mut r = rt(2, 4);
        let input = vec![vec![vec![1], vec![1], vec![1]], vec![vec![1], vec![1], vec![1]]];
        assert!(matches!(
            distributed_sort(&mut r, &[0, 1], input, 1),
            Err(DmpcError::MemoryCapExceeded { .. })
        ));
    }
}
