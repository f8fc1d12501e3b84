//! Candidate enumeration from monitored predicates and join attributes.

use std::collections::{BTreeMap, BTreeSet};

use crate::monitor::QueryRecord;
use crate::pindex::{IndexKeySpec, MAX_KEY_ARITY};
use crate::storage::Schema;

/// Occurrences in the window an attribute set needs to become a candidate.
pub const DEFAULT_THETA: usize = 3;

/// Index specs worth evaluating for `records`, excluding `existing`.
///
/// Per table: every predicate or join attribute seen in at least `theta`
/// records, and every multi-attribute predicate set seen in at least
/// `theta` records, ordered by descending attribute frequency then
/// position and truncated to the maximum key arity.
pub fn enumerate_candidates<'a, 'r>(
    records: impl IntoIterator<Item = &'r QueryRecord>,
    schemas: impl IntoIterator<Item = &'a Schema>,
    existing: &BTreeSet<IndexKeySpec>,
    theta: usize,
) -> Vec<IndexKeySpec> {
    let schemas: BTreeMap<&str, &Schema> = schemas.into_iter().map(|s| (s.name(), s)).collect();
    let mut freq: BTreeMap<(&str, usize), usize> = BTreeMap::new();
    let mut sets: BTreeMap<(&str, Vec<usize>), usize> = BTreeMap::new();
    for r in records {
        for acc in &r.tables {
            let mut attrs = acc.predicate_attrs();
            for j in &acc.join {
                if !attrs.contains(j) {
                    attrs.push(*j);
                }
            }
            for a in &attrs {
                *freq.entry((acc.table.as_str(), *a)).or_default() += 1;
            }
            let mut pred = acc.predicate_attrs();
            if pred.len() >= 2 {
                pred.sort_unstable();
                *sets.entry((acc.table.as_str(), pred)).or_default() += 1;
            }
        }
    }
    let theta = theta.max(1);
    let mut out = BTreeSet::new();
    for (&(table, a), &n) in &freq {
        if n >= theta {
            if let Some(s) = schemas.get(table) {
                out.insert(IndexKeySpec::from_positions(s, &[a]));
            }
        }
    }
    for ((table, set), &n) in &sets {
        let Some(s) = schemas.get(table) else { continue };
        if n < theta {
            continue;
        }
        let mut ordered = set.clone();
        ordered.sort_by_key(|a| (std::cmp::Reverse(freq.get(&(*table, *a)).copied().unwrap_or(0)), *a));
        ordered.truncate(MAX_KEY_ARITY);
        out.insert(IndexKeySpec::from_positions(s, &ordered));
    }
    out.into_iter().filter(|s| !existing.contains(s)).collect()
}
