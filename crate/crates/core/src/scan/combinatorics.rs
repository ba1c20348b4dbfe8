//! Lexicographic enumeration of strictly increasing index k-tuples, with
//! rank/unrank support so the search can be split into contiguous ranges
//! and handed to stateless workers.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CombinatoricsError {
    #[error("k = {k} exceeds the number of variables n = {n}")]
    KTooLarge { n: usize, k: usize },
    #[error("rank {rank} out of range for C({n}, {k})")]
    RankOutOfRange { rank: u64, n: usize, k: usize },
    #[error("C({n}, {k}) overflows a 64-bit counter")]
    Overflow { n: usize, k: usize },
}

/// Binomial coefficient C(n, k), `None` on u64 overflow.
pub fn binomial(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        // Multiplying i consecutive integers keeps the quotient integral.
        acc = acc * (n - k + i) as u128 / i as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// Advances `combo` to its lexicographic successor over `0..n`.
/// Returns `false` when `combo` was already the last combination.
pub fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// The combination holding the given lexicographic rank (inverse of
/// [`rank_of_combination`]).
pub fn combination_at_rank(rank: u64, n: usize, k: usize) -> Result<Vec<usize>, CombinatoricsError> {
    if k > n {
        return Err(CombinatoricsError::KTooLarge { n, k });
    }
    let total = binomial(n as u64, k as u64).ok_or(CombinatoricsError::Overflow { n, k })?;
    if rank >= total {
        return Err(CombinatoricsError::RankOutOfRange { rank, n, k });
    }
    let mut combo = Vec::with_capacity(k);
    let mut remaining = rank;
    let mut candidate = 0usize;
    for position in 0..k {
        loop {
            let below = binomial((n - candidate - 1) as u64, (k - position - 1) as u64)
                .expect("sub-binomial of a representable total");
            if below <= remaining {
                remaining -= below;
                candidate += 1;
            } else {
                combo.push(candidate);
                candidate += 1;
                break;
            }
        }
    }
    Ok(combo)
}

/// Lexicographic rank of a strictly increasing combination over `0..n`.
pub fn rank_of_combination(combo: &[usize], n: usize) -> Result<u64, CombinatoricsError> {
    let k = combo.len();
    if k > n {
        return Err(CombinatoricsError::KTooLarge { n, k });
    }
    let mut rank = 0u64;
    for (position, &c) in combo.iter().enumerate() {
        let start = if position == 0 { 0 } else { combo[position - 1] + 1 };
        for skipped in start..c {
            rank += binomial((n - skipped - 1) as u64, (k - position - 1) as u64)
                .ok_or(CombinatoricsError::Overflow { n, k })?;
        }
    }
    Ok(rank)
}

/// Iterator over all C(n, k) combinations in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Result<Combinations, CombinatoricsError> {
    if k > n {
        return Err(CombinatoricsError::KTooLarge { n, k });
    }
    Ok(Combinations {
        combo: (0..k).collect(),
        n,
        exhausted: false,
        started: false,
    })
}

pub struct Combinations {
    combo: Vec<usize>,
    n: usize,
    exhausted: bool,
    started: bool,
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.exhausted {
            return None;
        }
        if self.started && !next_combination(&mut self.combo, self.n) {
            self.exhausted = true;
            return None;
        }
        self.started = true;
        Some(self.combo.clone())
    }
}
