//! Scan operators.

use crate::error::{Error, Result};
use crate::pindex::{KeyBox, PartialIndex, Scheme};
use crate::storage::{Epoch, Location, Predicate, RowRef, Table, TableSnapshot, Value};

/// What a VBP scan does with a range that is not yet indexed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VbpPopulation {
    /// Populate the range inside the query, before returning.
    Immediate,
    /// Record the demand; the tuner builds it later in budgeted steps.
    #[default]
    Incremental,
}

/// How the index and table phases of a hybrid scan split the work.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HybridTrace {
    /// `ρ_i` snapshot taken with the probe.
    pub watermark: i64,
    /// `ρ_m`, `-1` without hits.
    pub max_page: i64,
    pub start_page: usize,
    /// Slots skipped in the overlapping page.
    pub duplicates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScanCounters {
    /// Versions examined by table-scan phases.
    pub scanned: u64,
    /// Versions fetched through an index.
    pub via_index: u64,
    /// Entries visited in index structures.
    pub entries_read: u64,
    /// The index alone answered the scan.
    pub index_only: bool,
    pub hybrid: Option<HybridTrace>,
}

impl ScanCounters {
    pub(crate) fn absorb(&mut self, o: ScanCounters) {
        self.scanned += o.scanned;
        self.via_index += o.via_index;
        self.entries_read += o.entries_read;
    }
}

pub fn table_scan<F>(table: &Table, pred: &Predicate, epoch: Epoch, mut f: F) -> ScanCounters
where
    F: FnMut(Location, RowRef<'_>),
{
    let snap = table.snapshot();
    let scanned = snap.scan_from(0, epoch, pred, &[], &mut f);
    ScanCounters { scanned, ..Default::default() }
}

fn emit_hits<F>(snap: &TableSnapshot, hits: &[Location], pred: &Predicate, epoch: Epoch, f: &mut F) -> u64
where
    F: FnMut(Location, RowRef<'_>),
{
    let mut fetched = 0;
    for &loc in hits {
        let row = snap.row(loc).expect("indexed slot is stored");
        fetched += 1;
        if snap.visible(loc, epoch) && pred.matches_row(&row) {
            f(loc, row);
        }
    }
    fetched
}

/// Index phase over the indexed pages followed by a table scan from
/// `max(ρ_m, ρ_i + 1)`, skipping slots of the overlapping page that the
/// index phase already produced. Works on VAP and FULL indexes.
pub fn hybrid_scan<F>(table: &Table, index: &PartialIndex, pred: &Predicate, epoch: Epoch, mut f: F) -> Result<ScanCounters>
where
    F: FnMut(Location, RowRef<'_>),
{
    if index.scheme() == Scheme::Vbp {
        return Err(Error::WrongScheme { expected: "VAP or FULL", actual: index.scheme() });
    }
    let kb = KeyBox::for_predicate(index.attrs(), pred)
        .ok_or_else(|| Error::PlanMismatch(format!("predicate does not constrain the leading key of {}", index.spec())))?;
    let Some(range) = kb.range() else {
        return Ok(ScanCounters::default());
    };
    let probe = index.probe_filtered(range.lo, range.hi, |k| kb.admits(k));
    // taken after the probe so every indexed page is in it
    let snap = table.snapshot();
    let locs: Vec<Location> = probe.hits.iter().map(|(_, l)| *l).collect();
    let via_index = emit_hits(&snap, &locs, pred, epoch, &mut f);
    let (wm, pm) = (probe.watermark, probe.max_page);
    let start = if pm >= 0 { pm.max(wm + 1) } else { wm + 1 } as usize;
    let mut dup: Vec<u32> = Vec::new();
    if pm > wm {
        dup = locs.iter().filter(|l| l.page as i64 == pm).map(|l| l.slot).collect();
        dup.sort_unstable();
    }
    let scanned = if start < snap.page_count() { snap.scan_from(start, epoch, pred, &dup, &mut f) } else { 0 };
    Ok(ScanCounters {
        scanned,
        via_index,
        entries_read: probe.entries_read,
        index_only: scanned == 0,
        hybrid: Some(HybridTrace { watermark: wm, max_page: pm, start_page: start, duplicates: dup.len() }),
    })
}

/// Index-only scan when the queried range is covered by completed
/// sub-domains, otherwise a table scan followed by population or a demand
/// record, depending on `population`.
pub fn vbp_scan<F>(
    table: &Table,
    index: &PartialIndex,
    pred: &Predicate,
    epoch: Epoch,
    population: VbpPopulation,
    mut f: F,
) -> Result<ScanCounters>
where
    F: FnMut(Location, RowRef<'_>),
{
    if index.scheme() != Scheme::Vbp {
        return Err(Error::WrongScheme { expected: "VBP", actual: index.scheme() });
    }
    let kb = KeyBox::for_predicate(index.attrs(), pred)
        .ok_or_else(|| Error::PlanMismatch(format!("predicate does not constrain the leading key of {}", index.spec())))?;
    let Some(range) = kb.range() else {
        return Ok(ScanCounters::default());
    };
    if index.covers(&range) {
        let probe = index.probe_filtered(range.lo, range.hi, |k| kb.admits(k));
        let snap = table.snapshot();
        let locs: Vec<Location> = probe.hits.iter().map(|(_, l)| *l).collect();
        let via_index = emit_hits(&snap, &locs, pred, epoch, &mut f);
        return Ok(ScanCounters { via_index, entries_read: probe.entries_read, index_only: true, ..Default::default() });
    }
    let mut out = table_scan(table, pred, epoch, f);
    match population {
        VbpPopulation::Immediate => {
            let p = index.populate_subdomain(table, range)?;
            out.scanned += p.pages_scanned as u64 * table.page_capacity() as u64;
        }
        VbpPopulation::Incremental => index.note_demand(range),
    }
    Ok(out)
}

/// Collects a scan into `(Location, values)` pairs in location order.
pub fn collect_rows<S>(scan: S) -> Result<Vec<(Location, Vec<Value>)>>
where
    S: FnOnce(&mut dyn FnMut(Location, RowRef<'_>)) -> Result<ScanCounters>,
{
    let mut out = Vec::new();
    scan(&mut |l, r| out.push((l, r.to_vec())))?;
    out.sort_by_key(|(l, _)| *l);
    Ok(out)
}
