//! Epoch-versioned tables stored in fixed-capacity, append-only pages.
//!
//! Every mutation appends new tuple versions at the table tail and closes the
//! superseded ones by setting their end epoch. Slot contents never change
//! after publication, which is what lets a partially built index reason about
//! "everything in pages `0..=ρ`".

mod page;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use page::{Page, OPEN};

/// Attribute values are carried as `i64` regardless of their stored width.
pub type Value = i64;

/// Default number of tuples per page.
pub const DEFAULT_PAGE_CAPACITY: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttrKind {
    /// 4-byte signed integer.
    Int4,
    /// 8-byte timestamp.
    Timestamp,
}

impl AttrKind {
    /// Stored width in bytes.
    pub fn width(self) -> usize {
        match self {
            AttrKind::Int4 => 4,
            AttrKind::Timestamp => 8,
        }
    }

    fn words(self) -> usize {
        self.width() / 4
    }

    fn accepts(self, v: Value) -> bool {
        match self {
            AttrKind::Int4 => i32::try_from(v).is_ok(),
            AttrKind::Timestamp => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    pub name: String,
    pub kind: AttrKind,
}

impl Attribute {
    pub fn int4(name: impl Into<String>) -> Self {
        Attribute { name: name.into(), kind: AttrKind::Int4 }
    }

    pub fn timestamp(name: impl Into<String>) -> Self {
        Attribute { name: name.into(), kind: AttrKind::Timestamp }
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Table name plus an ordered attribute list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    name: String,
    attributes: Vec<Attribute>,
    offsets: Vec<usize>,
    row_words: usize,
}

impl Schema {
    pub fn new(name: impl Into<String>, attributes: Vec<Attribute>) -> Result<Self> {
        let name = name.into();
        if !is_identifier(&name) {
            return Err(Error::InvalidSchema(format!("`{name}` is not an identifier")));
        }
        if attributes.is_empty() {
            return Err(Error::InvalidSchema(format!("table `{name}` has no attributes")));
        }
        let mut seen = BTreeSet::new();
        for a in &attributes {
            if !is_identifier(&a.name) {
                return Err(Error::InvalidSchema(format!("`{}` is not an identifier", a.name)));
            }
            if !seen.insert(a.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate attribute `{}`", a.name)));
            }
        }
        let mut offsets = Vec::with_capacity(attributes.len());
        let mut row_words = 0;
        for a in &attributes {
            offsets.push(row_words);
            row_words += a.kind.words();
        }
        Ok(Schema { name, attributes, offsets, row_words })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn arity(&self) -> usize {
        self.attributes.len()
    }

    pub fn attribute(&self, idx: usize) -> Option<&Attribute> {
        self.attributes.get(idx)
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Checks arity and per-attribute value ranges.
    pub fn validate(&self, values: &[Value]) -> Result<()> {
        if values.len() != self.arity() {
            return Err(Error::ArityMismatch { expected: self.arity(), got: values.len() });
        }
        for (a, v) in self.attributes.iter().zip(values) {
            if !a.kind.accepts(*v) {
                return Err(Error::ValueOutOfRange { attr: a.name.clone(), value: *v });
            }
        }
        Ok(())
    }

    fn encode(&self, values: &[Value], out: &mut Vec<u32>) {
        out.clear();
        for (a, v) in self.attributes.iter().zip(values) {
            match a.kind {
                AttrKind::Int4 => out.push(*v as i32 as u32),
                AttrKind::Timestamp => {
                    let u = *v as u64;
                    out.push(u as u32);
                    out.push((u >> 32) as u32);
                }
            }
        }
    }

    #[inline]
    fn decode(&self, page: &Page, slot: usize, attr: usize) -> Value {
        let off = self.offsets[attr];
        match self.attributes[attr].kind {
            AttrKind::Int4 => page.word(slot, off) as i32 as Value,
            AttrKind::Timestamp => {
                let lo = page.word(slot, off) as u64;
                let hi = page.word(slot, off + 1) as u64;
                (lo | (hi << 32)) as Value
            }
        }
    }
}

/// Monotonic commit counter. Epoch 0 is the empty initial state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Epoch(pub u64);

impl fmt::Display for Epoch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Physical address of a tuple version.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Location {
    pub page: u32,
    pub slot: u32,
}

impl Location {
    pub const fn new(page: u32, slot: u32) -> Self {
        Location { page, slot }
    }

    pub(crate) fn pack(self) -> u64 {
        (u64::from(self.page) << 32) | u64::from(self.slot)
    }

    pub(crate) fn unpack(v: u64) -> Self {
        Location { page: (v >> 32) as u32, slot: v as u32 }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.page, self.slot)
    }
}

/// A materialized copy of one stored version.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TupleVersion {
    pub values: Vec<Value>,
    pub begin: Epoch,
    /// `None` while the version is still live.
    pub end: Option<Epoch>,
    /// Location of the first version of this logical tuple.
    pub origin: Location,
}

impl TupleVersion {
    pub fn is_visible(&self, epoch: Epoch) -> bool {
        self.begin <= epoch && self.end.map_or(true, |e| epoch < e)
    }
}

/// Closed interval condition `lo <= attr <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Conjunct {
    pub attr: usize,
    pub lo: Value,
    pub hi: Value,
}

impl Conjunct {
    pub fn new(attr: usize, lo: Value, hi: Value) -> Self {
        Conjunct { attr, lo, hi }
    }

    pub fn eq(attr: usize, v: Value) -> Self {
        Conjunct { attr, lo: v, hi: v }
    }

    #[inline]
    pub fn admits(&self, v: Value) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Conjunction of interval conditions. Empty means "all rows".
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Predicate {
    pub conjuncts: Vec<Conjunct>,
}

impl Predicate {
    pub fn all() -> Self {
        Predicate::default()
    }

    pub fn new(conjuncts: Vec<Conjunct>) -> Self {
        Predicate { conjuncts }
    }

    pub fn matches(&self, values: &[Value]) -> bool {
        self.conjuncts.iter().all(|c| values.get(c.attr).is_some_and(|v| c.admits(*v)))
    }

    /// Effective `[lo, hi]` bounds on `attr` after intersecting all conjuncts.
    pub fn bounds(&self, attr: usize) -> Option<(Value, Value)> {
        let mut out: Option<(Value, Value)> = None;
        for c in self.conjuncts.iter().filter(|c| c.attr == attr) {
            out = Some(match out {
                None => (c.lo, c.hi),
                Some((lo, hi)) => (lo.max(c.lo), hi.min(c.hi)),
            });
        }
        out
    }

    pub(crate) fn matches_row(&self, row: &RowRef<'_>) -> bool {
        self.conjuncts.iter().all(|c| c.attr < row.schema.arity() && c.admits(row.get(c.attr)))
    }
}

/// Borrowed view of one stored row.
#[derive(Clone, Copy)]
pub struct RowRef<'a> {
    page: &'a Page,
    slot: usize,
    schema: &'a Schema,
}

impl RowRef<'_> {
    #[inline]
    pub fn get(&self, attr: usize) -> Value {
        self.schema.decode(self.page, self.slot, attr)
    }

    pub fn to_vec(&self) -> Vec<Value> {
        (0..self.schema.arity()).map(|a| self.get(a)).collect()
    }
}

/// Handle to one table. Readers may share it freely across threads.
pub struct Table {
    schema: Arc<Schema>,
    capacity: usize,
    pages: RwLock<Vec<Arc<Page>>>,
    epoch: AtomicU64,
    versions: AtomicU64,
    writer: Mutex<()>,
}

impl fmt::Debug for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Table")
            .field("name", &self.schema.name())
            .field("pages", &self.page_count())
            .field("epoch", &self.current_epoch())
            .finish()
    }
}

impl Table {
    pub fn new(schema: Schema, page_capacity: usize) -> Result<Self> {
        if page_capacity == 0 || page_capacity > u32::MAX as usize {
            return Err(Error::InvalidSchema(format!("page capacity {page_capacity} out of range")));
        }
        Ok(Table {
            schema: Arc::new(schema),
            capacity: page_capacity,
            pages: RwLock::new(Vec::new()),
            epoch: AtomicU64::new(0),
            versions: AtomicU64::new(0),
            writer: Mutex::new(()),
        })
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn name(&self) -> &str {
        self.schema.name()
    }

    pub fn page_capacity(&self) -> usize {
        self.capacity
    }

    pub fn page_count(&self) -> usize {
        self.pages.read().len()
    }

    /// Number of stored versions, live or dead.
    pub fn version_count(&self) -> u64 {
        self.versions.load(Ordering::Acquire)
    }

    pub fn current_epoch(&self) -> Epoch {
        Epoch(self.epoch.load(Ordering::Acquire))
    }

    /// Location the next appended version will occupy.
    pub fn tail(&self) -> Location {
        let pages = self.pages.read();
        match pages.last() {
            None => Location::new(0, 0),
            Some(p) if p.is_full() => Location::new(pages.len() as u32, 0),
            Some(p) => Location::new(pages.len() as u32 - 1, p.len() as u32),
        }
    }

    pub fn insert(&self, values: &[Value]) -> Result<Location> {
        let locs = self.insert_batch(&[values.to_vec()])?;
        Ok(locs[0])
    }

    /// Appends all rows under a single new epoch.
    pub fn insert_batch(&self, rows: &[Vec<Value>]) -> Result<Vec<Location>> {
        self.insert_batch_with(rows, |_, _| {})
    }

    /// Like [`Table::insert_batch`], calling `hook` for each appended version
    /// before the new epoch becomes visible.
    pub fn insert_batch_with<F>(&self, rows: &[Vec<Value>], hook: F) -> Result<Vec<Location>>
    where
        F: FnMut(Location, &[Value]),
    {
        self.commit(rows, &[], hook)
    }

    /// Supersedes each location with a new version holding the paired row.
    /// Returns the new locations in input order.
    pub fn update(&self, locations: &[Location], new_values: &[Vec<Value>]) -> Result<Vec<Location>> {
        self.update_with(locations, new_values, |_, _| {})
    }

    pub fn update_with<F>(
        &self,
        locations: &[Location],
        new_values: &[Vec<Value>],
        hook: F,
    ) -> Result<Vec<Location>>
    where
        F: FnMut(Location, &[Value]),
    {
        if locations.len() != new_values.len() {
            return Err(Error::ArityMismatch { expected: locations.len(), got: new_values.len() });
        }
        self.commit(new_values, locations, hook)
    }

    fn commit<F>(&self, rows: &[Vec<Value>], supersede: &[Location], mut hook: F) -> Result<Vec<Location>>
    where
        F: FnMut(Location, &[Value]),
    {
        let _w = self.writer.lock();
        for r in rows {
            self.schema.validate(r)?;
        }
        let current = self.epoch.load(Ordering::Relaxed);
        let mut origins = Vec::with_capacity(supersede.len());
        {
            let pages = self.pages.read();
            let mut seen = BTreeSet::new();
            for &loc in supersede {
                let page = pages.get(loc.page as usize).ok_or(Error::InvalidLocation(loc))?;
                if loc.slot as usize >= page.len() {
                    return Err(Error::InvalidLocation(loc));
                }
                let slot = loc.slot as usize;
                if page.end(slot) != OPEN || page.begin(slot) > current || !seen.insert(loc) {
                    return Err(Error::StaleUpdate(loc));
                }
                origins.push(page.origin(slot));
            }
        }
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let next = current + 1;
        let mut encoded = Vec::with_capacity(self.schema.row_words);
        let mut out = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let page = self.writable_tail();
            let page_id = self.pages.read().len() as u32 - 1;
            self.schema.encode(row, &mut encoded);
            let slot = page.len() as u32;
            let loc = Location::new(page_id, slot);
            let origin = origins.get(i).copied().unwrap_or_else(|| loc.pack());
            page.push(&encoded, next, origin);
            hook(loc, row);
            out.push(loc);
        }
        {
            let pages = self.pages.read();
            for loc in supersede {
                pages[loc.page as usize].close(loc.slot as usize, next);
            }
        }
        self.versions.fetch_add(rows.len() as u64, Ordering::Release);
        self.epoch.store(next, Ordering::Release);
        Ok(out)
    }

    fn writable_tail(&self) -> Arc<Page> {
        {
            let pages = self.pages.read();
            if let Some(p) = pages.last() {
                if !p.is_full() {
                    return p.clone();
                }
            }
        }
        let page = Arc::new(Page::new(self.capacity, self.schema.row_words));
        self.pages.write().push(page.clone());
        page
    }

    /// Reads the version stored at `loc`, whatever its visibility.
    pub fn get(&self, loc: Location) -> Option<TupleVersion> {
        let snap = self.snapshot();
        let page = snap.pages.get(loc.page as usize)?;
        let slot = loc.slot as usize;
        if slot >= page.len() {
            return None;
        }
        let row = RowRef { page, slot, schema: &self.schema };
        let end = page.end(slot);
        Some(TupleVersion {
            values: row.to_vec(),
            begin: Epoch(page.begin(slot)),
            end: (end != OPEN).then_some(Epoch(end)),
            origin: Location::unpack(page.origin(slot)),
        })
    }

    /// Values at `loc` if that version is visible at `epoch`.
    pub fn read_visible(&self, loc: Location, epoch: Epoch) -> Option<Vec<Value>> {
        self.get(loc).filter(|v| v.is_visible(epoch)).map(|v| v.values)
    }

    /// Visible versions in pages `>= start_page` matching `predicate`, in
    /// location order.
    pub fn scan_pages(&self, start_page: usize, epoch: Epoch, predicate: &Predicate) -> PageScan {
        PageScan {
            snap: self.snapshot(),
            epoch,
            predicate: predicate.clone(),
            page: start_page,
            slot: 0,
        }
    }

    /// Point-in-time view of the page directory.
    pub fn snapshot(&self) -> TableSnapshot {
        TableSnapshot { pages: self.pages.read().clone(), schema: self.schema.clone() }
    }
}

/// Streaming result of [`Table::scan_pages`].
pub struct PageScan {
    snap: TableSnapshot,
    epoch: Epoch,
    predicate: Predicate,
    page: usize,
    slot: usize,
}

impl Iterator for PageScan {
    type Item = (Location, Vec<Value>);

    fn next(&mut self) -> Option<Self::Item> {
        while self.page < self.snap.pages.len() {
            let page = &self.snap.pages[self.page];
            let len = page.len();
            while self.slot < len {
                let slot = self.slot;
                self.slot += 1;
                if !page.visible(slot, self.epoch.0) {
                    continue;
                }
                let row = RowRef { page, slot, schema: &self.snap.schema };
                if self.predicate.matches_row(&row) {
                    return Some((Location::new(self.page as u32, slot as u32), row.to_vec()));
                }
            }
            self.page += 1;
            self.slot = 0;
        }
        None
    }
}

/// Pages of a table as of some instant. Later appends to existing pages are
/// still readable through it; pages allocated afterwards are not.
#[derive(Clone)]
pub struct TableSnapshot {
    pages: Vec<Arc<Page>>,
    schema: Arc<Schema>,
}

impl TableSnapshot {
    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub(crate) fn page_len(&self, page: usize) -> usize {
        self.pages[page].len()
    }

    /// Row at `loc`, if that slot has been written.
    pub fn row(&self, loc: Location) -> Option<RowRef<'_>> {
        let page = self.pages.get(loc.page as usize)?;
        let slot = loc.slot as usize;
        (slot < page.len()).then_some(RowRef { page, slot, schema: &self.schema })
    }

    pub(crate) fn visible(&self, loc: Location, epoch: Epoch) -> bool {
        self.pages[loc.page as usize].visible(loc.slot as usize, epoch.0)
    }

    /// Calls `f` for every row in `page` from `from_slot` on, visible or not.
    pub(crate) fn for_each_slot<F>(&self, page: usize, from_slot: usize, upto: usize, mut f: F)
    where
        F: FnMut(Location, RowRef<'_>),
    {
        let p = &self.pages[page];
        for slot in from_slot..upto.min(p.len()) {
            f(Location::new(page as u32, slot as u32), RowRef { page: p, slot, schema: &self.schema });
        }
    }

    /// Visits visible rows matching `predicate` in pages `>= start_page`,
    /// skipping the slots in `skip` on page `start_page`. Returns the number
    /// of versions examined.
    pub(crate) fn scan_from<F>(
        &self,
        start_page: usize,
        epoch: Epoch,
        predicate: &Predicate,
        skip: &[u32],
        mut f: F,
    ) -> u64
    where
        F: FnMut(Location, RowRef<'_>),
    {
        let e = epoch.0;
        let mut examined = 0u64;
        for (pid, page) in self.pages.iter().enumerate().skip(start_page) {
            let len = page.len();
            examined += len as u64;
            let skip_here = if pid == start_page { skip } else { &[] };
            for slot in 0..len {
                if !page.visible(slot, e) {
                    continue;
                }
                let row = RowRef { page, slot, schema: &self.schema };
                if !predicate.matches_row(&row) {
                    continue;
                }
                if !skip_here.is_empty() && skip_here.binary_search(&(slot as u32)).is_ok() {
                    continue;
                }
                f(Location::new(pid as u32, slot as u32), row);
            }
        }
        examined
    }
}
