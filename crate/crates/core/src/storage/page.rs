//! Fixed-capacity page of row-major tuple versions.
//!
//! Only the owning table's writer appends or closes versions. Readers go
//! through atomics and never take a lock; a slot becomes readable once the
//! `len` store that covers it has been published.

use std::sync::atomic::{AtomicU32, AtomicU64, AtomicUsize, Ordering};

pub(crate) const OPEN: u64 = u64::MAX;

pub(crate) struct Page {
    capacity: usize,
    row_words: usize,
    len: AtomicUsize,
    words: Box<[AtomicU32]>,
    begin: Box<[AtomicU64]>,
    end: Box<[AtomicU64]>,
    origin: Box<[AtomicU64]>,
}

fn atomics32(n: usize) -> Box<[AtomicU32]> {
    (0..n).map(|_| AtomicU32::new(0)).collect()
}

fn atomics64(n: usize, v: u64) -> Box<[AtomicU64]> {
    (0..n).map(|_| AtomicU64::new(v)).collect()
}

impl Page {
    pub(crate) fn new(capacity: usize, row_words: usize) -> Self {
        Page {
            capacity,
            row_words,
            len: AtomicUsize::new(0),
            words: atomics32(capacity * row_words),
            begin: atomics64(capacity, OPEN),
            end: atomics64(capacity, OPEN),
            origin: atomics64(capacity, 0),
        }
    }

    #[inline]
    pub(crate) fn len(&self) -> usize {
        self.len.load(Ordering::Acquire)
    }

    pub(crate) fn is_full(&self) -> bool {
        self.len() == self.capacity
    }

    /// Writes a row into the next free slot and publishes it. Writer only.
    pub(crate) fn push(&self, encoded: &[u32], begin: u64, origin: u64) -> usize {
        let slot = self.len.load(Ordering::Relaxed);
        debug_assert!(slot < self.capacity);
        debug_assert_eq!(encoded.len(), self.row_words);
        let base = slot * self.row_words;
        for (i, w) in encoded.iter().enumerate() {
            self.words[base + i].store(*w, Ordering::Relaxed);
        }
        self.begin[slot].store(begin, Ordering::Relaxed);
        self.end[slot].store(OPEN, Ordering::Relaxed);
        self.origin[slot].store(origin, Ordering::Relaxed);
        self.len.store(slot + 1, Ordering::Release);
        slot
    }

    /// Closes a version. Writer only; the epoch store that follows publishes it.
    pub(crate) fn close(&self, slot: usize, end: u64) {
        self.end[slot].store(end, Ordering::Relaxed);
    }

    #[inline]
    pub(crate) fn word(&self, slot: usize, offset: usize) -> u32 {
        self.words[slot * self.row_words + offset].load(Ordering::Relaxed)
    }

    #[inline]
    pub(crate) fn begin(&self, slot: usize) -> u64 {
        self.begin[slot].load(Ordering::Relaxed)
    }

    #[inline]
    pub(crate) fn end(&self, slot: usize) -> u64 {
        self.end[slot].load(Ordering::Relaxed)
    }

    pub(crate) fn origin(&self, slot: usize) -> u64 {
        self.origin[slot].load(Ordering::Relaxed)
    }

    #[inline]
    pub(crate) fn visible(&self, slot: usize, epoch: u64) -> bool {
        self.begin(slot) <= epoch && epoch < self.end(slot)
    }
}
