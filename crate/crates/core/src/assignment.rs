//! Exact assignment oracle: best and second-best system rewards, the gap,
//! and the full set of optimal matchings.
//!
//! The search is a dynamic program over the set of channels already taken.
//! Users are assigned in ID order, so a state is fully described by the
//! bitmask of used channels. Each state keeps its two best *distinct*
//! completion values, which is enough to recover both `J1` and `J2`: if a
//! completion below the second-best value of a sub-state were part of the
//! overall second-best matching, the two better sub-completions would yield
//! two distinct values above it. Optimal matchings are then read off by a
//! depth-first walk that only enters branches whose bound still reaches `J1`,
//! visiting channels in ascending order so the result is lexicographically
//! sorted.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::QuantizedMatrix;
use crate::error::{Error, Result};
use crate::matrix::MeanMatrix;

/// Two real-valued system rewards closer than this are treated as equal.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Largest channel count the mask-indexed search accepts.
pub const MAX_CHANNELS: usize = 20;

/// Upper bound on the number of optimal matchings materialized.
pub const MAX_OPTIMAL_SET: usize = 1 << 20;

/// Injective assignment of ID slots (rows) to channels. Entry `j` is the
/// 1-based channel of slot `j + 1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Matching(Vec<usize>);

impl Matching {
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        let mut seen = assignment.clone();
        seen.sort_unstable();
        if seen.first() == Some(&0) {
            return Err(Error::InvalidMatching("channels are 1-based".into()));
        }
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidMatching(format!(
                "channels are not distinct: {assignment:?}"
            )));
        }
        Ok(Self(assignment))
    }

    pub fn assignment(&self) -> &[usize] {
        &self.0
    }

    /// Channel (1-based) assigned to the 1-based slot.
    pub fn channel_of(&self, slot: usize) -> usize {
        self.0[slot - 1]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Matching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Best and second-best system rewards with the derived gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub j1: f64,
    pub j2: f64,
    pub delta: f64,
    pub optimal_set: Vec<Matching>,
}

/// Sum of `values[j][assignment[j] - 1]` in slot order.
pub fn system_reward(matrix: &MeanMatrix, matching: &Matching) -> f64 {
    matching
        .assignment()
        .iter()
        .enumerate()
        .map(|(j, &c)| matrix.get(j, c - 1))
        .sum()
}

trait Score: Copy + PartialOrd {
    const ZERO: Self;
    fn plus(self, other: Self) -> Self;
    /// `self` is strictly better than `other` beyond the tie tolerance.
    fn beats(self, other: Self) -> bool;
}

impl Score for f64 {
    const ZERO: Self = 0.0;
    fn plus(self, other: Self) -> Self {
        self + other
    }
    fn beats(self, other: Self) -> bool {
        self - other > TIE_TOLERANCE
    }
}

impl Score for u128 {
    const ZERO: Self = 0;
    fn plus(self, other: Self) -> Self {
        self + other
    }
    fn beats(self, other: Self) -> bool {
        self > other
    }
}

#[derive(Clone, Copy)]
struct Top2<S> {
    best: S,
    second: Option<S>,
}

impl<S: Score> Top2<S> {
    fn offer(slot: &mut Option<Self>, v: S) {
        match slot {
            None => {
                *slot = Some(Top2 {
                    best: v,
                    second: None,
                })
            }
            Some(t) => {
                if v.beats(t.best) {
                    t.second = Some(t.best);
                    t.best = v;
                } else if t.best.beats(v) {
                    if t.second.is_none_or(|s| v > s) {
                        t.second = Some(v);
                    }
                } else if v > t.best {
                    // within tolerance: keep the larger as the representative
                    t.best = v;
                }
            }
        }
    }
}

struct Search<'a, S> {
    k: usize,
    m: usize,
    weights: &'a [S],
    memo: Vec<Option<Top2<S>>>,
}

impl<'a, S: Score> Search<'a, S> {
    fn new(k: usize, m: usize, weights: &'a [S]) -> Result<Self> {
        if m > MAX_CHANNELS {
            return Err(Error::SizeLimit {
                k,
                m,
                cap: MAX_CHANNELS,
            });
        }
        Ok(Self {
            k,
            m,
            weights,
            memo: vec![None; 1 << m],
        })
    }

    /// Top-2 distinct completion values from a state with `mask` used.
    fn completion(&mut self, mask: usize) -> Top2<S> {
        if let Some(t) = self.memo[mask] {
            return t;
        }
        let user = mask.count_ones() as usize;
        let result = if user == self.k {
            Top2 {
                best: S::ZERO,
                second: None,
            }
        } else {
            let mut acc = None;
            for c in 0..self.m {
                if mask & (1 << c) != 0 {
                    continue;
                }
                let w = self.weights[user * self.m + c];
                let sub = self.completion(mask | (1 << c));
                Top2::offer(&mut acc, w.plus(sub.best));
                if let Some(s) = sub.second {
                    Top2::offer(&mut acc, w.plus(s));
                }
            }
            acc.expect("k <= m leaves a free channel")
        };
        self.memo[mask] = Some(result);
        result
    }

    fn optimal_set(&mut self) -> Result<Vec<Matching>> {
        let target = self.completion(0).best;
        let mut out = Vec::new();
        let mut path = Vec::with_capacity(self.k);
        self.collect(0, S::ZERO, target, &mut path, &mut out)?;
        Ok(out)
    }

    fn collect(
        &mut self,
        mask: usize,
        prefix: S,
        target: S,
        path: &mut Vec<usize>,
        out: &mut Vec<Matching>,
    ) -> Result<()> {
        let user = path.len();
        if user == self.k {
            if out.len() == MAX_OPTIMAL_SET {
                return Err(Error::OptimalSetTooLarge(MAX_OPTIMAL_SET));
            }
            out.push(Matching(path.clone()));
            return Ok(());
        }
        for c in 0..self.m {
            if mask & (1 << c) != 0 {
                continue;
            }
            let next = mask | (1 << c);
            let reach = prefix
                .plus(self.weights[user * self.m + c])
                .plus(self.completion(next).best);
            if target.beats(reach) {
                continue;
            }
            path.push(c + 1);
            self.collect(
                next,
                prefix.plus(self.weights[user * self.m + c]),
                target,
                path,
                out,
            )?;
            path.pop();
        }
        Ok(())
    }
}

/// Computes `J1`, `J2` (largest value strictly below `J1`), the gap
/// `(J1 - J2) / (2m)` and every matching that attains `J1`.
pub fn gap_oracle(matrix: &MeanMatrix) -> Result<GapResult> {
    let mut search = Search::new(matrix.k(), matrix.m(), matrix.values())?;
    let top = search.completion(0);
    let j2 = top.second.ok_or(Error::DegenerateMatrix)?;
    let optimal_set = search.optimal_set()?;
    // Report J1 as the slot-order sum of the canonical optimum so that
    // replaying that matching yields exactly zero regret.
    let j1 = system_reward(matrix, &optimal_set[0]);
    Ok(GapResult {
        j1,
        j2,
        delta: (j1 - j2) / (2.0 * matrix.m() as f64),
        optimal_set,
    })
}

/// Optimal matchings of the decoded estimates, computed on the exact
/// numerators so every agent derives the same set in the same order.
pub fn optimal_set_from_quantized(q: &QuantizedMatrix) -> Result<Vec<Matching>> {
    let weights = q.numerators();
    let mut search = Search::new(q.k(), q.m(), &weights)?;
    search.optimal_set()
}

/// Keeps the members assigning `channel` to `slot` (both 1-based).
pub fn filter_by_pin(set: &[Matching], slot: usize, channel: usize) -> Result<Vec<Matching>> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let kept: Vec<Matching> = set
        .iter()
        .filter(|mt| mt.0.get(slot.wrapping_sub(1)) == Some(&channel))
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyAfterFilter { slot, channel });
    }
    Ok(kept)
}

/// Lexicographically smallest member.
pub fn canonical_choice(set: &[Matching]) -> Result<Matching> {
    set.iter()
        .min_by(|a, b| a.cmp(b))
        .cloned()
        .ok_or(Error::EmptySet)
}

/// Orders two real rewards using the tie tolerance.
pub fn compare_rewards(a: f64, b: f64) -> Ordering {
    if a - b > TIE_TOLERANCE {
        Ordering::Greater
    } else if b - a > TIE_TOLERANCE {
        Ordering::Less
    } else {
        Ordering::Equal
    }
}
