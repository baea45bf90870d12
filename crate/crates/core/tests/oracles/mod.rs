//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;

/// Exhaustive search for an injective assignment k ↦ k + γ (mod n) of the
/// points of A into B with γ in `window`. Memoizes failed states keyed by the
/// used targets that later points could still reach.
pub fn cycle_subequivalence_exists(n: u32, a: &[u32], b: &[u32], window: &[i64]) -> bool {
    assert!(n <= 64);
    let b_mask: u64 = b.iter().fold(0, |m, &p| m | (1u64 << p));
    let nbrs: Vec<u64> = a
        .iter()
        .map(|&k| {
            window.iter().fold(0u64, |m, &g| {
                let t = (k as i64 + g).rem_euclid(n as i64) as u32;
                m | (1u64 << t)
            }) & b_mask
        })
        .collect();
    let mut reach = vec![0u64; a.len() + 1];
    for i in (0..a.len()).rev() {
        reach[i] = reach[i + 1] | nbrs[i];
    }
    let mut failed = HashSet::new();
    fn go(i: usize, used: u64, nbrs: &[u64], reach: &[u64], failed: &mut HashSet<(usize, u64)>) -> bool {
        if i == nbrs.len() {
            return true;
        }
        let key = (i, used & reach[i]);
        if failed.contains(&key) {
            return false;
        }
        let mut free = nbrs[i] & !used;
        while free != 0 {
            let t = free.trailing_zeros();
            free &= free - 1;
            if go(i + 1, used | (1u64 << t), nbrs, reach, failed) {
                return true;
            }
        }
        failed.insert(key);
        false
    }
    go(0, 0, &nbrs, &reach, &mut failed)
}

/// Integer value of an LSB-first binary digit word.
pub fn digits_value(w: &[u8]) -> u64 {
    w.iter().rev().fold(0, |v, &d| 2 * v + d as u64)
}

/// Checks a base-2 odometer witness by enumerating residues mod 2^len:
/// every residue in A lies in exactly one piece, lands in B, and no two
/// residues share an image.
pub fn odometer_witness_valid(
    len: u32,
    a: &[(u32, u64)],
    b: &[(u32, u64)],
    pieces: &[(Vec<(u32, u64)>, i64)],
) -> bool {
    let modulus = 1u64 << len;
    let in_set = |x: u64, set: &[(u32, u64)]| set.iter().any(|&(l, v)| x % (1u64 << l) == v);
    let mut images = HashSet::new();
    for x in 0..modulus {
        let owners: Vec<i64> = pieces.iter().filter(|(p, _)| in_set(x, p)).map(|(_, g)| *g).collect();
        if in_set(x, a) {
            if owners.len() != 1 {
                return false;
            }
            let y = (x as i64 + owners[0]).rem_euclid(modulus as i64) as u64;
            if !in_set(y, b) || !images.insert(y) {
                return false;
            }
        } else if !owners.is_empty() {
            return false;
        }
    }
    true
}

/// Interior of the interval [0, k) by [−m, m]: levels γ with γ ± m inside.
pub fn interval_interior_len(k: i64, m: i64) -> i64 {
    (k - 2 * m).max(0)
}
