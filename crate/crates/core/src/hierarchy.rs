//! Multi-index sets of the truncated hierarchy.
//!
//! All `k in N^n` with `|k| = sum_j k_j <= k_max`, ordered by level and,
//! within a level, lexicographically with the first component descending.
//! Neighbour maps `k -> k +- e_j` are stored as flat tables.

use std::collections::HashMap;
use thiserror::Error;

/// Default cap on the number of hierarchy members.
pub const DEFAULT_MAX_STATES: usize = 5_000_000;

const NONE: u32 = u32::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum HierarchyError {
    #[error("hierarchy needs at least one exponential term")]
    NoTerms,
    #[error("hierarchy with {n_terms} terms and depth {k_max} has {count} members, above the budget of {budget}")]
    TooLarge {
        n_terms: usize,
        k_max: usize,
        count: u128,
        budget: usize,
    },
}

/// `C(n + k, n)`, saturating at `u128::MAX`.
pub fn hierarchy_size(n_terms: usize, k_max: usize) -> u128 {
    let mut c: u128 = 1;
    for i in 1..=n_terms.min(k_max) as u128 {
        let big = (n_terms.max(k_max)) as u128;
        c = match c.checked_mul(big + i) {
            Some(v) => v / i,
            None => return u128::MAX,
        };
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyIndexSet {
    n_terms: usize,
    k_max: usize,
    entries: Vec<u16>,
    levels: Vec<u16>,
    lower: Vec<u32>,
    raise: Vec<u32>,
}

/// Calls `f` for every composition of `total` into `parts` non-negative
/// parts, first component descending.
fn compositions(parts: usize, total: usize, buf: &mut Vec<u16>, f: &mut impl FnMut(&[u16])) {
    if parts == 1 {
        buf.push(total as u16);
        f(buf);
        buf.pop();
        return;
    }
    for first in (0..=total).rev() {
        buf.push(first as u16);
        compositions(parts - 1, total - first, buf, f);
        buf.pop();
    }
}

impl HierarchyIndexSet {
    pub fn build(n_terms: usize, k_max: usize) -> Result<Self, HierarchyError> {
        Self::build_with_budget(n_terms, k_max, DEFAULT_MAX_STATES)
    }

    pub fn build_with_budget(n_terms: usize, k_max: usize, budget: usize) -> Result<Self, HierarchyError> {
        if n_terms == 0 {
            return Err(HierarchyError::NoTerms);
        }
        let count = hierarchy_size(n_terms, k_max);
        if count > budget as u128 || k_max > u16::MAX as usize {
            return Err(HierarchyError::TooLarge {
                n_terms,
                k_max,
                count,
                budget,
            });
        }
        let count = count as usize;
        let mut entries = Vec::with_capacity(count * n_terms);
        let mut levels = Vec::with_capacity(count);
        let mut buf = Vec::with_capacity(n_terms);
        for level in 0..=k_max {
            compositions(n_terms, level, &mut buf, &mut |k| {
                entries.extend_from_slice(k);
                levels.push(level as u16);
            });
        }
        debug_assert_eq!(levels.len(), count);
        let position: HashMap<&[u16], u32> = entries
            .chunks_exact(n_terms)
            .enumerate()
            .map(|(i, k)| (k, i as u32))
            .collect();
        let mut lower = vec![NONE; count * n_terms];
        let mut raise = vec![NONE; count * n_terms];
        let mut probe = vec![0u16; n_terms];
        for (i, k) in entries.chunks_exact(n_terms).enumerate() {
            for j in 0..n_terms {
                probe.copy_from_slice(k);
                if k[j] > 0 {
                    probe[j] -= 1;
                    lower[i * n_terms + j] = position[probe.as_slice()];
                    probe[j] += 1;
                }
                if (levels[i] as usize) < k_max {
                    probe[j] += 1;
                    raise[i * n_terms + j] = position[probe.as_slice()];
                }
            }
        }
        drop(position);
        Ok(Self {
            n_terms,
            k_max,
            entries,
            levels,
            lower,
            raise,
        })
    }

    pub fn n_terms(&self) -> usize {
        self.n_terms
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Multi-index at position `i`.
    pub fn index(&self, i: usize) -> &[u16] {
        &self.entries[i * self.n_terms..(i + 1) * self.n_terms]
    }

    pub fn level(&self, i: usize) -> usize {
        self.levels[i] as usize
    }

    /// Position of `k - e_j`, if `k_j > 0`.
    #[inline]
    pub fn lower(&self, i: usize, j: usize) -> Option<usize> {
        let v = self.lower[i * self.n_terms + j];
        (v != NONE).then_some(v as usize)
    }

    /// Position of `k + e_j`, if inside the truncation.
    #[inline]
    pub fn raise(&self, i: usize, j: usize) -> Option<usize> {
        let v = self.raise[i * self.n_terms + j];
        (v != NONE).then_some(v as usize)
    }

    /// Raw neighbour rows for the hot loop (`u32::MAX` marks absence).
    pub(crate) fn lower_row(&self, i: usize) -> &[u32] {
        &self.lower[i * self.n_terms..(i + 1) * self.n_terms]
    }

    pub(crate) fn raise_row(&self, i: usize) -> &[u32] {
        &self.raise[i * self.n_terms..(i + 1) * self.n_terms]
    }

    /// Position of multi-index `k`; linear scan, intended for tests and tools.
    pub fn position(&self, k: &[u16]) -> Option<usize> {
        self.entries
            .chunks_exact(self.n_terms)
            .position(|e| e == k)
    }
}

pub(crate) const ABSENT: u32 = NONE;
