//! Ordered indexes that can be queried while they are still being built.
//!
//! Three build schemes are supported:
//!
//! * [`Scheme::Vap`] indexes whole pages in ascending order and publishes the
//!   watermark `ρ_i`, the last page whose versions are all indexed.
//! * [`Scheme::Full`] builds the same way but is only usable once complete.
//! * [`Scheme::Vbp`] indexes key sub-domains on demand and tracks the
//!   completed ones in an [`IntervalSet`].
//!
//! Entries cover every version in the indexed region, live or dead;
//! visibility is the scan operator's job.

mod interval;
mod registry;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Bound;
use std::str::FromStr;
use std::sync::atomic::{AtomicI64, AtomicUsize, Ordering};

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::storage::{Location, Predicate, RowRef, Schema, Table, Value};

pub use interval::{IndexKey, IntervalSet, KeyRange, MAX_KEY_ARITY};
pub use registry::IndexConfiguration;

/// Per-entry overhead used in footprint estimates, in bytes.
pub const NODE_OVERHEAD: usize = 48;
/// Width of a stored [`Location`], in bytes.
pub const LOCATION_WIDTH: usize = 8;
/// Default pages indexed per build step.
pub const DEFAULT_PAGES_PER_STEP: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scheme {
    Vap,
    Vbp,
    Full,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Vap => "VAP",
            Scheme::Vbp => "VBP",
            Scheme::Full => "FULL",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "VAP" => Ok(Scheme::Vap),
            "VBP" => Ok(Scheme::Vbp),
            "FULL" => Ok(Scheme::Full),
            _ => Err(Error::InvalidParameter(format!("unknown scheme `{s}`"))),
        }
    }
}

/// Table plus ordered attribute list. Displays as `table(a,b)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IndexKeySpec {
    pub table: String,
    pub attributes: Vec<String>,
}

impl IndexKeySpec {
    pub fn new<S: Into<String>>(table: impl Into<String>, attributes: impl IntoIterator<Item = S>) -> Self {
        IndexKeySpec { table: table.into(), attributes: attributes.into_iter().map(Into::into).collect() }
    }

    /// Spec over attribute positions of `schema`.
    pub fn from_positions(schema: &Schema, attrs: &[usize]) -> Self {
        IndexKeySpec::new(schema.name(), attrs.iter().map(|&a| schema.attributes()[a].name.clone()))
    }

    /// Attribute positions in `schema`, validating arity and uniqueness.
    pub fn resolve(&self, schema: &Schema) -> Result<Vec<usize>> {
        if self.table != schema.name() {
            return Err(Error::InvalidIndexSpec(format!("{self} is not on table `{}`", schema.name())));
        }
        if self.attributes.is_empty() || self.attributes.len() > MAX_KEY_ARITY {
            return Err(Error::InvalidIndexSpec(format!("{self} must have 1 to {MAX_KEY_ARITY} attributes")));
        }
        let mut out = Vec::with_capacity(self.attributes.len());
        for name in &self.attributes {
            let pos = schema
                .attr_index(name)
                .ok_or_else(|| Error::InvalidIndexSpec(format!("{self}: unknown attribute `{name}`")))?;
            if out.contains(&pos) {
                return Err(Error::InvalidIndexSpec(format!("{self}: repeated attribute `{name}`")));
            }
            out.push(pos);
        }
        Ok(out)
    }

    /// Whether `self` is a proper prefix of `other`.
    pub fn is_prefix_of(&self, other: &IndexKeySpec) -> bool {
        self.table == other.table
            && self.attributes.len() < other.attributes.len()
            && other.attributes.starts_with(&self.attributes)
    }
}

impl fmt::Display for IndexKeySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.table, self.attributes.join(","))
    }
}

impl FromStr for IndexKeySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidIndexSpec(format!("cannot parse `{s}`"));
        let (table, rest) = s.split_once('(').ok_or_else(bad)?;
        let inner = rest.strip_suffix(')').ok_or_else(bad)?;
        let attrs: Vec<&str> = inner.split(',').map(str::trim).collect();
        if table.trim().is_empty() || attrs.iter().any(|a| a.is_empty()) {
            return Err(bad());
        }
        Ok(IndexKeySpec::new(table.trim(), attrs))
    }
}

/// Work allowed per build call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildBudget {
    pub pages_per_step: usize,
    pub entries_per_step: usize,
}

impl BuildBudget {
    pub fn new(pages_per_step: usize, entries_per_step: usize) -> Result<Self> {
        if pages_per_step == 0 || entries_per_step == 0 {
            return Err(Error::InvalidParameter("build budgets must be positive".into()));
        }
        Ok(BuildBudget { pages_per_step, entries_per_step })
    }

    pub fn pages(pages_per_step: usize) -> Result<Self> {
        BuildBudget::new(pages_per_step, usize::MAX)
    }

    pub const fn unbounded() -> Self {
        BuildBudget { pages_per_step: usize::MAX, entries_per_step: usize::MAX }
    }
}

impl Default for BuildBudget {
    fn default() -> Self {
        BuildBudget {
            pages_per_step: DEFAULT_PAGES_PER_STEP,
            entries_per_step: DEFAULT_PAGES_PER_STEP * crate::storage::DEFAULT_PAGE_CAPACITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildProgress {
    pub pages_indexed: usize,
    pub entries_added: usize,
    pub watermark: i64,
    /// Every stored version is indexed.
    pub complete: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SubdomainProgress {
    pub entries_added: usize,
    pub pages_scanned: usize,
    pub complete: bool,
}

/// Entries in a key range plus the metadata hybrid scan needs, all read
/// under one lock acquisition.
#[derive(Debug, Clone, Default)]
pub struct ProbeResult {
    pub hits: Vec<(IndexKey, Location)>,
    /// Largest page among `hits`, `-1` when empty.
    pub max_page: i64,
    /// `ρ_i` at probe time.
    pub watermark: i64,
    /// Entries visited in the ordered structure.
    pub entries_read: u64,
}

/// Per-component bounds derived from a predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyBox {
    bounds: [(Value, Value); MAX_KEY_ARITY],
}

impl KeyBox {
    /// `None` when the leading key attribute is unconstrained. An
    /// unsatisfiable predicate yields a box whose range is empty.
    pub fn for_predicate(attrs: &[usize], predicate: &Predicate) -> Option<KeyBox> {
        predicate.bounds(*attrs.first()?)?;
        let mut bounds = [(Value::MIN, Value::MAX); MAX_KEY_ARITY];
        for (i, &a) in attrs.iter().enumerate() {
            if let Some(b) = predicate.bounds(a) {
                bounds[i] = b;
            }
        }
        Some(KeyBox { bounds })
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.iter().any(|(lo, hi)| lo > hi)
    }

    /// Smallest lexicographic range containing the box.
    pub fn range(&self) -> Option<KeyRange> {
        if self.is_empty() {
            return None;
        }
        let lo = IndexKey([self.bounds[0].0, self.bounds[1].0, self.bounds[2].0]);
        let hi = IndexKey([self.bounds[0].1, self.bounds[1].1, self.bounds[2].1]);
        KeyRange::new(lo, hi).ok()
    }

    #[inline]
    pub fn admits(&self, k: &IndexKey) -> bool {
        self.bounds.iter().zip(k.0.iter()).all(|((lo, hi), v)| lo <= v && v <= hi)
    }
}

#[derive(Debug)]
struct ActiveBuild {
    range: KeyRange,
    /// Next location to examine; everything before it has been indexed.
    next: Location,
}

#[derive(Debug)]
struct State {
    entries: BTreeSet<(IndexKey, Location)>,
    /// First location not yet indexed (VAP/FULL).
    cursor: Location,
    subdomains: IntervalSet,
    active: Vec<ActiveBuild>,
    demands: BTreeMap<KeyRange, u64>,
}

/// One ordered index with its build state.
pub struct PartialIndex {
    spec: IndexKeySpec,
    attrs: Vec<usize>,
    scheme: Scheme,
    key_width: usize,
    capacity: u32,
    state: RwLock<State>,
    watermark: AtomicI64,
    entry_count: AtomicUsize,
}

impl fmt::Debug for PartialIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PartialIndex")
            .field("spec", &self.spec.to_string())
            .field("scheme", &self.scheme)
            .field("watermark", &self.watermark())
            .field("entries", &self.entry_count())
            .finish()
    }
}

fn next_location(loc: Location, capacity: u32) -> Location {
    if loc.slot + 1 >= capacity {
        Location::new(loc.page + 1, 0)
    } else {
        Location::new(loc.page, loc.slot + 1)
    }
}

impl PartialIndex {
    /// Empty index for `spec` over `table`.
    pub fn new(spec: IndexKeySpec, scheme: Scheme, table: &Table) -> Result<Self> {
        let schema = table.schema();
        let attrs = spec.resolve(schema)?;
        let key_width = attrs.iter().map(|&a| schema.attributes()[a].kind.width()).sum();
        Ok(PartialIndex {
            spec,
            attrs,
            scheme,
            key_width,
            capacity: table.page_capacity() as u32,
            state: RwLock::new(State {
                entries: BTreeSet::new(),
                cursor: Location::new(0, 0),
                subdomains: IntervalSet::new(),
                active: Vec::new(),
                demands: BTreeMap::new(),
            }),
            watermark: AtomicI64::new(-1),
            entry_count: AtomicUsize::new(0),
        })
    }

    pub fn spec(&self) -> &IndexKeySpec {
        &self.spec
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Key attribute positions in the table schema.
    pub fn attrs(&self) -> &[usize] {
        &self.attrs
    }

    /// `ρ_i`: last fully indexed page, `-1` if none.
    pub fn watermark(&self) -> i64 {
        self.watermark.load(Ordering::Acquire)
    }

    pub fn entry_count(&self) -> usize {
        self.entry_count.load(Ordering::Acquire)
    }

    /// Estimated bytes per entry.
    pub fn entry_bytes(&self) -> usize {
        self.key_width + LOCATION_WIDTH + NODE_OVERHEAD
    }

    pub fn footprint(&self) -> u64 {
        (self.entry_count() * self.entry_bytes()) as u64
    }

    pub fn key_of(&self, row: &RowRef<'_>) -> IndexKey {
        let mut k = [0; MAX_KEY_ARITY];
        for (i, &a) in self.attrs.iter().enumerate() {
            k[i] = row.get(a);
        }
        IndexKey(k)
    }

    pub fn key_of_values(&self, values: &[Value]) -> IndexKey {
        let mut k = [0; MAX_KEY_ARITY];
        for (i, &a) in self.attrs.iter().enumerate() {
            k[i] = values[a];
        }
        IndexKey(k)
    }

    /// Whether every version currently stored in `table` is indexed.
    pub fn is_complete(&self, table: &Table) -> bool {
        match self.scheme {
            Scheme::Vap | Scheme::Full => self.state.read().cursor >= table.tail(),
            Scheme::Vbp => {
                let full = KeyRange { lo: IndexKey::MIN, hi: IndexKey::MAX };
                self.state.read().subdomains.covers(&full)
            }
        }
    }

    fn expect(&self, ok: bool, expected: &'static str) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::WrongScheme { expected, actual: self.scheme })
        }
    }

    /// Indexes up to `budget.pages_per_step` pages following `ρ_i`.
    pub fn build_step(&self, table: &Table, budget: BuildBudget) -> Result<BuildProgress> {
        self.expect(self.scheme != Scheme::Vbp, "VAP or FULL")?;
        Ok(self.advance(table, budget.pages_per_step, None))
    }

    /// Builds until every stored version is indexed.
    pub fn build_to_completion(&self, table: &Table) -> Result<BuildProgress> {
        self.expect(self.scheme != Scheme::Vbp, "VAP or FULL")?;
        Ok(self.advance(table, usize::MAX, None))
    }

    /// Indexes every slot strictly before `stop`, e.g. to reproduce a state
    /// where a page is only partly indexed.
    pub fn build_until(&self, table: &Table, stop: Location) -> Result<BuildProgress> {
        self.expect(self.scheme != Scheme::Vbp, "VAP or FULL")?;
        Ok(self.advance(table, usize::MAX, Some(stop)))
    }

    fn advance(&self, table: &Table, max_pages: usize, stop: Option<Location>) -> BuildProgress {
        let snap = table.snapshot();
        let mut progress = BuildProgress { watermark: self.watermark(), ..Default::default() };
        let mut batch = Vec::new();
        while progress.pages_indexed < max_pages {
            let cur = self.state.read().cursor;
            if stop.is_some_and(|s| cur >= s) || cur.page as usize >= snap.page_count() {
                break;
            }
            let page = cur.page as usize;
            let mut upto = snap.page_len(page);
            if let Some(s) = stop.filter(|s| s.page == cur.page) {
                upto = upto.min(s.slot as usize);
            }
            if cur.slot as usize >= upto {
                break;
            }
            batch.clear();
            snap.for_each_slot(page, cur.slot as usize, upto, |loc, row| batch.push((self.key_of(&row), loc)));
            let mut st = self.state.write();
            if st.cursor != cur {
                // a mutator appended and indexed behind us; re-read
                continue;
            }
            for e in batch.drain(..) {
                if st.entries.insert(e) {
                    progress.entries_added += 1;
                }
            }
            st.cursor = if upto as u32 >= self.capacity {
                Location::new(cur.page + 1, 0)
            } else {
                Location::new(cur.page, upto as u32)
            };
            self.publish(&st);
            progress.pages_indexed += 1;
        }
        progress.watermark = self.watermark();
        progress.complete = self.is_complete(table);
        progress
    }

    fn publish(&self, st: &State) {
        self.entry_count.store(st.entries.len(), Ordering::Release);
        self.watermark.store(st.cursor.page as i64 - 1, Ordering::Release);
    }

    /// Scans `table` for versions with keys in `range` and indexes them,
    /// stopping once the budget is spent. The interval is recorded as
    /// complete when the scan reaches the table tail.
    pub fn build_subdomain_step(
        &self,
        table: &Table,
        range: KeyRange,
        budget: BuildBudget,
    ) -> Result<SubdomainProgress> {
        self.expect(self.scheme == Scheme::Vbp, "VBP")?;
        let mut progress = SubdomainProgress::default();
        {
            let mut st = self.state.write();
            if st.subdomains.covers(&range) {
                st.demands.remove(&range);
                progress.complete = true;
                return Ok(progress);
            }
            if !st.active.iter().any(|a| a.range == range) {
                st.active.push(ActiveBuild { range, next: Location::new(0, 0) });
            }
        }
        let snap = table.snapshot();
        let mut batch = Vec::new();
        loop {
            let next = {
                let st = self.state.read();
                st.active.iter().find(|a| a.range == range).map(|a| a.next)
            };
            let Some(next) = next else {
                // finished concurrently
                progress.complete = true;
                break;
            };
            if next >= table.tail() {
                let mut st = self.state.write();
                if next >= table.tail() {
                    st.active.retain(|a| a.range != range);
                    st.subdomains.insert(range);
                    let subs = st.subdomains.clone();
                    st.demands.retain(|r, _| !subs.covers(r));
                    progress.complete = true;
                    break;
                }
                continue;
            }
            if progress.pages_scanned >= budget.pages_per_step || progress.entries_added >= budget.entries_per_step {
                break;
            }
            let page = next.page as usize;
            if page >= snap.page_count() {
                // a page appeared after our snapshot; pick it up next call
                break;
            }
            let len = snap.page_len(page);
            let room = budget.entries_per_step - progress.entries_added;
            batch.clear();
            let mut end_slot = len;
            for slot in next.slot as usize..len {
                if batch.len() == room {
                    end_slot = slot;
                    break;
                }
                let loc = Location::new(page as u32, slot as u32);
                let row = snap.row(loc).expect("slot below page length");
                let k = self.key_of(&row);
                if range.contains(&k) {
                    batch.push((k, loc));
                }
            }
            let mut st = self.state.write();
            let Some(active) = st.active.iter_mut().find(|a| a.range == range) else { continue };
            if active.next != next {
                continue;
            }
            active.next = if end_slot as u32 >= self.capacity {
                Location::new(page as u32 + 1, 0)
            } else {
                Location::new(page as u32, end_slot as u32)
            };
            for e in batch.drain(..) {
                if st.entries.insert(e) {
                    progress.entries_added += 1;
                }
            }
            self.entry_count.store(st.entries.len(), Ordering::Release);
            progress.pages_scanned += 1;
        }
        Ok(progress)
    }

    /// Completes `range` in one call.
    pub fn populate_subdomain(&self, table: &Table, range: KeyRange) -> Result<SubdomainProgress> {
        self.build_subdomain_step(table, range, BuildBudget::unbounded())
    }

    /// Whether `range` lies inside the completed sub-domains.
    pub fn covers(&self, range: &KeyRange) -> bool {
        self.state.read().subdomains.covers(range)
    }

    pub fn subdomains(&self) -> Vec<KeyRange> {
        self.state.read().subdomains.ranges().to_vec()
    }

    /// Registers that a query wanted `range` while it was not covered.
    pub fn note_demand(&self, range: KeyRange) {
        let mut st = self.state.write();
        if !st.subdomains.covers(&range) {
            *st.demands.entry(range).or_insert(0) += 1;
        }
    }

    /// The in-progress interval if any, else the most demanded uncovered one.
    pub fn next_subdomain(&self) -> Option<KeyRange> {
        let st = self.state.read();
        if let Some(a) = st.active.first() {
            return Some(a.range);
        }
        // max_by_key keeps the last maximum; iterate in reverse so ties go to the smaller range
        st.demands.iter().rev().max_by_key(|(_, n)| **n).map(|(r, _)| *r)
    }

    /// Index maintenance for a freshly appended version. Returns whether
    /// an entry was added.
    pub fn maintain(&self, loc: Location, values: &[Value]) -> bool {
        let key = self.key_of_values(values);
        let mut st = self.state.write();
        match self.scheme {
            Scheme::Vap | Scheme::Full => {
                if st.cursor != loc {
                    return false;
                }
                st.entries.insert((key, loc));
                st.cursor = next_location(loc, self.capacity);
                self.publish(&st);
                true
            }
            Scheme::Vbp => {
                let wanted = st.subdomains.contains_key(&key)
                    || st.active.iter().any(|a| a.range.contains(&key) && loc < a.next);
                if wanted && st.entries.insert((key, loc)) {
                    self.entry_count.store(st.entries.len(), Ordering::Release);
                    return true;
                }
                false
            }
        }
    }

    /// All entries with keys in `[lo, hi]`, in key order.
    pub fn probe_range(&self, lo: IndexKey, hi: IndexKey) -> ProbeResult {
        self.probe_filtered(lo, hi, |_| true)
    }

    pub(crate) fn probe_filtered<F>(&self, lo: IndexKey, hi: IndexKey, keep: F) -> ProbeResult
    where
        F: Fn(&IndexKey) -> bool,
    {
        let st = self.state.read();
        let mut out = ProbeResult { hits: Vec::new(), max_page: -1, watermark: st.cursor.page as i64 - 1, entries_read: 0 };
        if lo > hi {
            return out;
        }
        let from = Bound::Included((lo, Location::new(0, 0)));
        let to = Bound::Included((hi, Location::new(u32::MAX, u32::MAX)));
        for (k, l) in st.entries.range((from, to)) {
            out.entries_read += 1;
            if keep(k) {
                out.max_page = out.max_page.max(l.page as i64);
                out.hits.push((*k, *l));
            }
        }
        out
    }

    /// Copy of every entry, in key order.
    pub fn entries(&self) -> Vec<(IndexKey, Location)> {
        self.state.read().entries.iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::{Attribute, Epoch, Schema};
    use proptest::prelude::*;

    /// One salary column, 3 tuples per page.
    fn employees() -> Table {
        let t = Table::new(Schema::new("employee", vec![Attribute::int4("salary")]).unwrap(), 3).unwrap();
        for s in [1000, 1200, 900, 4000, 3100, 2500, 1500, 5000, 700] {
            t.insert(&[s]).unwrap();
        }
        t
    }

    fn pair_table(rows: &[(i64, i64)], cap: usize) -> Table {
        let s = Schema::new("t", vec![Attribute::int4("x"), Attribute::int4("y")]).unwrap();
        let t = Table::new(s, cap).unwrap();
        for (x, y) in rows {
            t.insert(&[*x, *y]).unwrap();
        }
        t
    }

    fn salary_spec() -> IndexKeySpec {
        IndexKeySpec::new("employee", ["salary"])
    }

    #[test]
    fn new_index_is_empty() {
        let t = employees();
        let i = PartialIndex::new(salary_spec(), Scheme::Vap, &t).unwrap();
        assert_eq!(i.watermark(), -1);
        assert_eq!(i.entry_count(), 0);
        assert!(i.subdomains().is_empty());
        let p = i.probe_range(IndexKey::MIN, IndexKey::MAX);
        assert!(p.hits.is_empty());
        assert_eq!(p.max_page, -1);
    }

    #[test]
    fn spec_validation() {
        let t = pair_table(&[], 3);
        assert!(PartialIndex::new(IndexKeySpec::new("t", ["x", "x"]), Scheme::Vap, &t).is_err());
        assert!(PartialIndex::new(IndexKeySpec::new("t", ["z"]), Scheme::Vap, &t).is_err());
        assert!(PartialIndex::new(IndexKeySpec::new("u", ["x"]), Scheme::Vap, &t).is_err());
        assert!(PartialIndex::new(IndexKeySpec::new("t", Vec::<String>::new()), Scheme::Vap, &t).is_err());
        assert!(PartialIndex::new(IndexKeySpec::new("t", ["x", "y"]), Scheme::Vap, &t).is_ok());
    }

    #[test]
    fn spec_text_roundtrip() {
        let s = IndexKeySpec::new("narrow", ["a1", "a2"]);
        assert_eq!(s.to_string(), "narrow(a1,a2)");
        assert_eq!("narrow(a1,a2)".parse::<IndexKeySpec>().unwrap(), s);
        assert!("narrow".parse::<IndexKeySpec>().is_err());
    }

    #[test]
    fn build_step_matches_two_page_state() {
        let t = employees();
        let i = PartialIndex::new(salary_spec(), Scheme::Vap, &t).unwrap();
        let p = i.build_step(&t, BuildBudget::pages(2).unwrap()).unwrap();
        assert_eq!(p.watermark, 1);
        assert_eq!(p.pages_indexed, 2);
        assert_eq!(p.entries_added, 6);
        assert!(!p.complete);
        let p = i.build_step(&t, BuildBudget::pages(2).unwrap()).unwrap();
        assert_eq!((p.watermark, p.pages_indexed, p.complete), (2, 1, true));
        let p = i.build_step(&t, BuildBudget::pages(2).unwrap()).unwrap();
        assert_eq!((p.pages_indexed, p.entries_added), (0, 0));
        assert_eq!(i.entry_count() as u64, t.version_count());
    }

    #[test]
    fn wrong_scheme_rejected() {
        let t = employees();
        let vbp = PartialIndex::new(salary_spec(), Scheme::Vbp, &t).unwrap();
        assert!(matches!(vbp.build_step(&t, BuildBudget::default()), Err(Error::WrongScheme { .. })));
        let vap = PartialIndex::new(salary_spec(), Scheme::Vap, &t).unwrap();
        let r = KeyRange::leading(0, 10).unwrap();
        assert!(vap.build_subdomain_step(&t, r, BuildBudget::default()).is_err());
    }

    #[test]
    fn partial_tail_page_is_rescanned() {
        let t = employees();
        t.insert(&[42]).unwrap();
        let i = PartialIndex::new(salary_spec(), Scheme::Vap, &t).unwrap();
        let p = i.build_to_completion(&t).unwrap();
        assert_eq!(p.watermark, 2, "tail page is not full");
        assert!(p.complete);
        t.insert(&[43]).unwrap();
        assert!(!i.is_complete(&t));
        let p = i.build_step(&t, BuildBudget::pages(1).unwrap()).unwrap();
        assert_eq!(p.entries_added, 1);
        assert!(p.complete);
        t.insert(&[44]).unwrap();
        i.build_step(&t, BuildBudget::pages(1).unwrap()).unwrap();
        assert_eq!(i.watermark(), 3);
    }

    #[test]
    fn overlapping_page_probe() {
        let t = employees();
        let i = PartialIndex::new(salary_spec(), Scheme::Vap, &t).unwrap();
        // pages 0-1 plus the first tuple of page 2
        i.build_until(&t, Location::new(2, 1)).unwrap();
        assert_eq!(i.watermark(), 1);
        let p = i.probe_range(IndexKey::new(&[1400]), IndexKey::new(&[1600]));
        assert_eq!(p.hits, vec![(IndexKey::new(&[1500]), Location::new(2, 0))]);
        assert_eq!(p.max_page, 2);
        assert!(p.max_page > p.watermark);
    }

    #[test]
    fn maintenance_only_when_caught_up() {
        let t = employees();
        let i = PartialIndex::new(salary_spec(), Scheme::Vap, &t).unwrap();
        i.build_step(&t, BuildBudget::pages(1).unwrap()).unwrap();
        let loc = t.insert_batch_with(&[vec![1]], |l, v| assert!(!i.maintain(l, v))).unwrap()[0];
        i.build_to_completion(&t).unwrap();
        assert!(i.entries().iter().any(|(_, l)| *l == loc));
        let loc = t.insert_batch_with(&[vec![2]], |l, v| assert!(i.maintain(l, v))).unwrap()[0];
        assert!(i.entries().iter().any(|(_, l)| *l == loc));
        assert_eq!(i.entry_count() as u64, t.version_count());
        assert!(i.is_complete(&t));
    }

    #[test]
    fn subdomain_population() {
        let rows: Vec<(i64, i64)> = (0..10_000).map(|v| (v, 0)).collect();
        let t = pair_table(&rows, 100);
        let i = PartialIndex::new(IndexKeySpec::new("t", ["x"]), Scheme::Vbp, &t).unwrap();
        let r = KeyRange::leading(2000, 2099).unwrap();
        let p = i.populate_subdomain(&t, r).unwrap();
        assert!(p.complete);
        assert_eq!(p.entries_added, 100);
        assert!(i.covers(&r));
        assert!(!i.covers(&KeyRange::leading(2000, 2100).unwrap()));
        i.populate_subdomain(&t, KeyRange::leading(2050, 2200).unwrap()).unwrap();
        assert_eq!(i.subdomains(), vec![KeyRange::leading(2000, 2200).unwrap()]);
        assert_eq!(i.entry_count(), 201);
    }

    #[test]
    fn budgeted_subdomain_steps() {
        let rows: Vec<(i64, i64)> = (0..1000).map(|v| (v % 10, v)).collect();
        let t = pair_table(&rows, 50);
        let i = PartialIndex::new(IndexKeySpec::new("t", ["x"]), Scheme::Vbp, &t).unwrap();
        let r = KeyRange::leading(3, 3).unwrap();
        let budget = BuildBudget::new(4, 15).unwrap();
        let mut steps = 0;
        loop {
            let p = i.build_subdomain_step(&t, r, budget).unwrap();
            assert!(p.entries_added <= 15 && p.pages_scanned <= 4);
            steps += 1;
            if p.complete {
                break;
            }
            assert!(!i.covers(&r));
        }
        assert!(steps > 5);
        assert_eq!(i.entry_count(), 100);
        // every entry lies in the interval
        assert!(i.entries().iter().all(|(k, _)| k.0[0] == 3));
    }

    #[test]
    fn subdomain_maintenance() {
        let rows: Vec<(i64, i64)> = (0..100).map(|v| (v, 0)).collect();
        let t = pair_table(&rows, 10);
        let i = PartialIndex::new(IndexKeySpec::new("t", ["x"]), Scheme::Vbp, &t).unwrap();
        i.populate_subdomain(&t, KeyRange::leading(10, 20).unwrap()).unwrap();
        t.insert_batch_with(&[vec![15, 1], vec![50, 1]], |l, v| {
            i.maintain(l, v);
        })
        .unwrap();
        assert_eq!(i.entry_count(), 12);
    }

    #[test]
    fn demand_tracking() {
        let t = employees();
        let i = PartialIndex::new(salary_spec(), Scheme::Vbp, &t).unwrap();
        let a = KeyRange::leading(1, 2).unwrap();
        let b = KeyRange::leading(5, 6).unwrap();
        i.note_demand(b);
        i.note_demand(a);
        assert_eq!(i.next_subdomain(), Some(a), "ties go to the smaller range");
        i.note_demand(b);
        assert_eq!(i.next_subdomain(), Some(b));
        i.populate_subdomain(&t, b).unwrap();
        assert_eq!(i.next_subdomain(), Some(a));
    }

    #[test]
    fn composite_keys_order_lexicographically() {
        let t = pair_table(&[(2, 1), (1, 9), (1, 3), (2, 0)], 10);
        let i = PartialIndex::new(IndexKeySpec::new("t", ["x", "y"]), Scheme::Vap, &t).unwrap();
        i.build_to_completion(&t).unwrap();
        let keys: Vec<_> = i.entries().iter().map(|(k, _)| (k.0[0], k.0[1])).collect();
        assert_eq!(keys, vec![(1, 3), (1, 9), (2, 0), (2, 1)]);
    }

    #[test]
    fn footprint_formula() {
        let t = employees();
        let i = PartialIndex::new(salary_spec(), Scheme::Full, &t).unwrap();
        i.build_to_completion(&t).unwrap();
        assert_eq!(i.footprint(), 9 * (4 + 8 + 48));
    }

    #[test]
    fn key_box_ranges() {
        let p = Predicate::new(vec![
            crate::storage::Conjunct::new(0, 5, 9),
            crate::storage::Conjunct::new(1, 1, 2),
        ]);
        let b = KeyBox::for_predicate(&[0, 1], &p).unwrap();
        let r = b.range().unwrap();
        assert_eq!(r.lo, IndexKey([5, 1, i64::MIN]));
        assert!(b.admits(&IndexKey([6, 2, 0])));
        assert!(!b.admits(&IndexKey([6, 3, 0])));
        assert!(KeyBox::for_predicate(&[1, 0], &Predicate::new(vec![crate::storage::Conjunct::new(0, 1, 1)])).is_none());
    }

    proptest! {
        #[test]
        fn watermark_soundness(
            rows in prop::collection::vec((0i64..50, 0i64..50), 0..80),
            cap in 1usize..6,
            steps in prop::collection::vec(1usize..4, 1..10),
            updates in prop::collection::vec(0usize..100, 0..10),
        ) {
            let t = pair_table(&rows, cap);
            let i = PartialIndex::new(IndexKeySpec::new("t", ["x", "y"]), Scheme::Vap, &t).unwrap();
            let mut last = -1;
            let mut last_fp = 0;
            for (n, s) in steps.iter().enumerate() {
                if let Some(u) = updates.get(n) {
                    let e = t.current_epoch();
                    let live: Vec<_> = t.scan_pages(0, e, &Predicate::all()).collect();
                    if !live.is_empty() {
                        let (l, v) = &live[u % live.len()];
                        t.update_with(&[*l], &[vec![v[0] + 1, v[1]]], |l, v| { i.maintain(l, v); }).unwrap();
                    }
                }
                let p = i.build_step(&t, BuildBudget::pages(*s).unwrap()).unwrap();
                prop_assert!(p.watermark >= last && p.watermark - last <= *s as i64);
                prop_assert!(i.footprint() >= last_fp);
                last = p.watermark;
                last_fp = i.footprint();
                // every version in pages <= ρ_i has exactly one entry
                let entries = i.entries();
                let snap = t.snapshot();
                for page in 0..=(p.watermark.max(-1)) {
                    if page < 0 { continue; }
                    for slot in 0..cap as u32 {
                        let loc = Location::new(page as u32, slot);
                        let n = entries.iter().filter(|(_, l)| *l == loc).count();
                        prop_assert_eq!(n, usize::from(snap.row(loc).is_some()));
                    }
                }
            }
        }

        #[test]
        fn probe_is_complete(rows in prop::collection::vec((0i64..30, 0i64..30), 1..60), lo in 0i64..30, w in 0i64..10) {
            let t = pair_table(&rows, 4);
            let i = PartialIndex::new(IndexKeySpec::new("t", ["x"]), Scheme::Vap, &t).unwrap();
            i.build_to_completion(&t).unwrap();
            let got: Vec<Location> = i.probe_range(IndexKey([lo, i64::MIN, i64::MIN]), IndexKey([lo + w, i64::MAX, i64::MAX]))
                .hits.iter().map(|(_, l)| *l).collect();
            let mut want: Vec<Location> = t
                .scan_pages(0, Epoch(u64::MAX - 1), &Predicate::new(vec![crate::storage::Conjunct::new(0, lo, lo + w)]))
                .map(|(l, _)| l)
                .collect();
            let mut got_sorted = got.clone();
            got_sorted.sort();
            want.sort();
            prop_assert_eq!(got_sorted, want);
        }

        #[test]
        fn vbp_subdomain_soundness(rows in prop::collection::vec(0i64..40, 1..80), ivs in prop::collection::vec((0i64..40, 0i64..6), 1..5)) {
            let data: Vec<(i64, i64)> = rows.iter().map(|v| (*v, 0)).collect();
            let t = pair_table(&data, 5);
            let i = PartialIndex::new(IndexKeySpec::new("t", ["x"]), Scheme::Vbp, &t).unwrap();
            for (lo, w) in &ivs {
                let r = KeyRange::leading(*lo, lo + w).unwrap();
                let mut guard = 0;
                while !i.build_subdomain_step(&t, r, BuildBudget::new(2, 3).unwrap()).unwrap().complete {
                    guard += 1;
                    prop_assert!(guard < 1000);
                }
            }
            let entries = i.entries();
            for (n, v) in rows.iter().enumerate() {
                let loc = Location::new((n / 5) as u32, (n % 5) as u32);
                let covered = ivs.iter().any(|(lo, w)| lo <= v && *v <= lo + w);
                prop_assert_eq!(entries.iter().any(|(_, l)| *l == loc), covered);
            }
        }
    }
}
