use crate::storage::Value;

/// Number of buckets per attribute histogram.
pub const BUCKETS: usize = 100;

/// Equi-width histogram over one attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    min: Value,
    max: Value,
    counts: Vec<u64>,
    total: u64,
}

impl Histogram {
    /// Empty histogram over `[min, max]`.
    pub fn new(min: Value, max: Value) -> Self {
        let (min, max) = if min <= max { (min, max) } else { (max, min) };
        Histogram { min, max, counts: vec![0; BUCKETS], total: 0 }
    }

    pub fn from_values(values: &[Value]) -> Option<Self> {
        let min = *values.iter().min()?;
        let max = *values.iter().max()?;
        let mut h = Histogram::new(min, max);
        for v in values {
            h.add(*v);
        }
        Some(h)
    }

    fn width(&self) -> f64 {
        (self.max as f64 - self.min as f64 + 1.0) / BUCKETS as f64
    }

    fn bucket_of(&self, v: Value) -> usize {
        let b = ((v as f64 - self.min as f64) / self.width()) as usize;
        b.min(BUCKETS - 1)
    }

    /// Counts `v`, clamped into range.
    pub fn add(&mut self, v: Value) {
        let b = self.bucket_of(v.clamp(self.min, self.max));
        self.counts[b] += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Estimated fraction of values in `[lo, hi]`, assuming values are
    /// spread uniformly inside each bucket.
    pub fn selectivity(&self, lo: Value, hi: Value) -> f64 {
        if self.total == 0 || lo > hi || hi < self.min || lo > self.max {
            return 0.0;
        }
        let w = self.width();
        // integer interval [lo, hi] as the real interval [lo, hi + 1)
        let a = (lo.max(self.min) as f64 - self.min as f64) / w;
        let b = (hi.min(self.max) as f64 - self.min as f64 + 1.0) / w;
        let mut hits = 0.0;
        let first = a.floor() as usize;
        let last = (b.ceil() as usize).min(BUCKETS);
        for (i, c) in self.counts.iter().enumerate().take(last).skip(first) {
            let lo_b = i as f64;
            let overlap = (b.min(lo_b + 1.0) - a.max(lo_b)).clamp(0.0, 1.0);
            hits += overlap * *c as f64;
        }
        (hits / self.total as f64).clamp(0.0, 1.0)
    }

    /// Probability that two random values are equal, assuming uniform
    /// spread within each bucket.
    pub fn equality_selectivity(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let w = self.width().max(1.0);
        let t = self.total as f64;
        self.counts.iter().map(|c| (*c as f64 / t).powi(2) / w).sum::<f64>().min(1.0)
    }
}
