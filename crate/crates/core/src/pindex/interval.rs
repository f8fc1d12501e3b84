use std::fmt;

use crate::error::{Error, Result};
use crate::storage::Value;

/// Number of key components an index key can hold.
pub const MAX_KEY_ARITY: usize = 3;

/// Composite key, compared lexicographically. Components beyond the index
/// arity are stored as zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct IndexKey(pub [Value; MAX_KEY_ARITY]);

impl IndexKey {
    pub const MIN: IndexKey = IndexKey([Value::MIN; MAX_KEY_ARITY]);
    pub const MAX: IndexKey = IndexKey([Value::MAX; MAX_KEY_ARITY]);

    /// Key with the given leading components and zeros after them.
    pub fn new(parts: &[Value]) -> Self {
        let mut k = [0; MAX_KEY_ARITY];
        k[..parts.len()].copy_from_slice(parts);
        IndexKey(k)
    }

    /// Next key in lexicographic order, `None` at the top of the key space.
    pub fn successor(&self) -> Option<IndexKey> {
        let mut k = self.0;
        for i in (0..MAX_KEY_ARITY).rev() {
            if k[i] < Value::MAX {
                k[i] += 1;
                return Some(IndexKey(k));
            }
            k[i] = Value::MIN;
        }
        None
    }
}

impl fmt::Display for IndexKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{}]", self.0[0], self.0[1], self.0[2])
    }
}

/// Closed key interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyRange {
    pub lo: IndexKey,
    pub hi: IndexKey,
}

impl KeyRange {
    pub fn new(lo: IndexKey, hi: IndexKey) -> Result<Self> {
        if lo > hi {
            return Err(Error::EmptyInterval);
        }
        Ok(KeyRange { lo, hi })
    }

    /// Interval over the first key component only.
    pub fn leading(lo: Value, hi: Value) -> Result<Self> {
        KeyRange::new(
            IndexKey([lo, Value::MIN, Value::MIN]),
            IndexKey([hi, Value::MAX, Value::MAX]),
        )
    }

    pub fn contains(&self, k: &IndexKey) -> bool {
        self.lo <= *k && *k <= self.hi
    }

    pub fn contains_range(&self, other: &KeyRange) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    fn touches(&self, other: &KeyRange) -> bool {
        let (a, b) = if self.lo <= other.lo { (self, other) } else { (other, self) };
        a.hi >= b.lo || a.hi.successor() == Some(b.lo)
    }
}

impl fmt::Display for KeyRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..={}", self.lo, self.hi)
    }
}

/// Sorted list of disjoint, non-adjacent closed intervals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntervalSet {
    ranges: Vec<KeyRange>,
}

impl IntervalSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Set holding the union of `ranges`.
    pub fn from_ranges(ranges: impl IntoIterator<Item = KeyRange>) -> Self {
        let mut s = IntervalSet::new();
        for r in ranges {
            s.insert(r);
        }
        s
    }

    pub fn ranges(&self) -> &[KeyRange] {
        &self.ranges
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Adds `r`, merging it with every interval it overlaps or abuts.
    pub fn insert(&mut self, r: KeyRange) {
        let mut merged = r;
        let mut out = Vec::with_capacity(self.ranges.len() + 1);
        let mut placed = false;
        for cur in self.ranges.drain(..) {
            if cur.touches(&merged) {
                merged = KeyRange { lo: merged.lo.min(cur.lo), hi: merged.hi.max(cur.hi) };
            } else if cur.hi < merged.lo {
                out.push(cur);
            } else {
                if !placed {
                    out.push(merged);
                    placed = true;
                }
                out.push(cur);
            }
        }
        if !placed {
            out.push(merged);
        }
        self.ranges = out;
    }

    pub fn contains_key(&self, k: &IndexKey) -> bool {
        let i = self.ranges.partition_point(|r| r.hi < *k);
        self.ranges.get(i).is_some_and(|r| r.contains(k))
    }

    /// Whether `r` lies inside a single stored interval. Because stored
    /// intervals never abut, that is the same as lying inside their union.
    pub fn covers(&self, r: &KeyRange) -> bool {
        let i = self.ranges.partition_point(|x| x.hi < r.lo);
        self.ranges.get(i).is_some_and(|x| x.contains_range(r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(lo: i64, hi: i64) -> KeyRange {
        KeyRange::leading(lo, hi).unwrap()
    }

    #[test]
    fn rejects_empty() {
        assert_eq!(KeyRange::leading(5, 4), Err(Error::EmptyInterval));
    }

    #[test]
    fn overlapping_and_adjacent_merge() {
        let mut s = IntervalSet::new();
        s.insert(r(10, 20));
        s.insert(r(15, 30));
        assert_eq!(s.ranges(), &[r(10, 30)]);
        s.insert(r(31, 40));
        assert_eq!(s.ranges(), &[r(10, 40)]);
        s.insert(r(50, 60));
        s.insert(r(0, 5));
        assert_eq!(s.len(), 3);
        assert!(s.covers(&r(12, 38)));
        assert!(!s.covers(&r(38, 52)));
        s.insert(r(41, 49));
        assert_eq!(s.ranges(), &[r(0, 5), r(10, 60)]);
    }

    #[test]
    fn successor_carries() {
        assert_eq!(IndexKey([1, 2, 3]).successor(), Some(IndexKey([1, 2, 4])));
        assert_eq!(IndexKey([1, i64::MAX, i64::MAX]).successor(), Some(IndexKey([2, i64::MIN, i64::MIN])));
        assert_eq!(IndexKey::MAX.successor(), None);
    }

    proptest! {
        #[test]
        fn set_matches_point_model(ivs in prop::collection::vec((0i64..60, 0i64..8), 0..12), probe in 0i64..70) {
            let mut s = IntervalSet::new();
            for (lo, w) in &ivs {
                s.insert(r(*lo, lo + w));
            }
            let inside = ivs.iter().any(|(lo, w)| *lo <= probe && probe <= lo + w);
            prop_assert_eq!(s.contains_key(&IndexKey([probe, 0, 0])), inside);
            for w in s.ranges().windows(2) {
                prop_assert!(w[0].hi < w[1].lo);
                prop_assert_ne!(w[0].hi.successor(), Some(w[1].lo));
            }
            let covered = (probe..probe + 3).all(|v| ivs.iter().any(|(lo, w)| *lo <= v && v <= lo + w));
            prop_assert_eq!(s.covers(&r(probe, probe + 2)), covered);
        }
    }
}
