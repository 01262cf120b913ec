//! Follow-up designs: multisets of candidate run numbers.
//!
//! A design of size `n*` drawn with repetition from `c` candidates is a
//! nondecreasing tuple of 1-based run numbers. Designs are ordered
//! lexicographically; ranks index that order, which lets a search split the
//! space into contiguous chunks.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Binomial coefficient, `None` on u64 overflow.
pub fn binomial(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
        if acc > u128::from(u64::MAX) {
            return None;
        }
    }
    Some(acc as u64)
}

/// Number of size-`n_star` multisets over `c` candidates, `C(c+n*-1, n*)`.
pub fn multiset_count(c: u64, n_star: u64) -> Option<u64> {
    if c == 0 {
        return Some(u64::from(n_star == 0));
    }
    binomial(c.checked_add(n_star)? - 1, n_star)
}

/// Checked count for a search request.
pub fn design_count(c: usize, n_star: usize) -> Result<u64> {
    if c == 0 || n_star == 0 {
        return Err(Error::InvalidDesign(format!(
            "follow-up search needs at least one candidate and n* ≥ 1 (c = {c}, n* = {n_star})"
        )));
    }
    multiset_count(c as u64, n_star as u64).ok_or_else(|| {
        Error::DesignSpaceOverflow(format!(
            "C({c}+{n_star}-1, {n_star}) does not fit in 64 bits"
        ))
    })
}

/// Advances `runs` to its lexicographic successor; false after the last design.
pub fn next_design(runs: &mut [usize], c: usize) -> bool {
    let Some(pos) = runs.iter().rposition(|&r| r < c) else {
        return false;
    };
    let v = runs[pos] + 1;
    for r in &mut runs[pos..] {
        *r = v;
    }
    true
}

/// The design at lexicographic position `rank`.
pub fn unrank_design(mut rank: u64, c: usize, n_star: usize) -> Option<Vec<usize>> {
    let mut out = Vec::with_capacity(n_star);
    let mut lo = 1usize;
    for i in 0..n_star {
        let rest = (n_star - i - 1) as u64;
        let mut placed = None;
        for v in lo..=c {
            // completions of the remaining slots with values in v..=c
            let block = multiset_count((c - v + 1) as u64, rest)?;
            if rank < block {
                placed = Some(v);
                break;
            }
            rank -= block;
        }
        lo = placed?;
        out.push(lo);
    }
    (rank == 0).then_some(out)
}

/// Lexicographic rank of a nondecreasing design.
pub fn rank_design(runs: &[usize], c: usize) -> Option<u64> {
    let n_star = runs.len();
    let mut rank = 0u64;
    let mut lo = 1usize;
    for (i, &r) in runs.iter().enumerate() {
        if r < lo || r > c {
            return None;
        }
        let rest = (n_star - i - 1) as u64;
        for v in lo..r {
            rank = rank.checked_add(multiset_count((c - v + 1) as u64, rest)?)?;
        }
        lo = r;
    }
    Some(rank)
}

/// Iterator over designs with ranks in `start..end`.
#[derive(Debug, Clone)]
pub struct DesignIter {
    c: usize,
    current: Vec<usize>,
    remaining: u64,
}

impl DesignIter {
    pub fn range(c: usize, n_star: usize, start: u64, end: u64) -> Result<Self> {
        let total = design_count(c, n_star)?;
        let end = end.min(total);
        if start >= end {
            return Ok(Self {
                c,
                current: Vec::new(),
                remaining: 0,
            });
        }
        let current = unrank_design(start, c, n_star)
            .ok_or_else(|| Error::InvalidDesign(format!("rank {start} out of range")))?;
        Ok(Self {
            c,
            current,
            remaining: end - start,
        })
    }

    pub fn all(c: usize, n_star: usize) -> Result<Self> {
        Self::range(c, n_star, 0, u64::MAX)
    }

    /// Visits each design as a borrowed slice without allocating.
    pub fn for_each_design<F: FnMut(&[usize])>(mut self, mut f: F) {
        while self.remaining > 0 {
            f(&self.current);
            self.remaining -= 1;
            if self.remaining > 0 {
                next_design(&mut self.current, self.c);
            }
        }
    }
}

impl Iterator for DesignIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.remaining == 0 {
            return None;
        }
        let out = self.current.clone();
        self.remaining -= 1;
        if self.remaining > 0 {
            next_design(&mut self.current, self.c);
        }
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (n, usize::try_from(self.remaining).ok())
    }
}
