//! Per-index utility forecasting with multiplicative Holt-Winters.
//!
//! Each model keeps a level `l`, trend `b` and `m` seasonal multipliers.
//! The first `m` observations are a warm-up during which the forecast is
//! their running mean; after that the model is initialized from them and
//! every observation applies the level, trend and seasonal updates in that
//! order.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::pindex::IndexKeySpec;

/// Floor applied to observations and divisors.
pub const EPSILON: f64 = 1e-6;
/// Retained models before least-recently-used eviction.
pub const DEFAULT_CAPACITY: usize = 1024;
const SEASONAL_MIN: f64 = 0.1;
const SEASONAL_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HwParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Season length in cycles.
    pub m: usize,
}

impl Default for HwParams {
    fn default() -> Self {
        HwParams { alpha: 0.3, beta: 0.1, gamma: 0.2, m: 10 }
    }
}

impl HwParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(self.alpha) && unit(self.beta) && unit(self.gamma)) {
            return Err(Error::InvalidParameter("smoothing parameters must lie in [0, 1]".into()));
        }
        if self.m < 2 {
            return Err(Error::InvalidParameter("season length must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoltWinters {
    params: HwParams,
    level: f64,
    trend: f64,
    seasonal: Vec<f64>,
    n: u64,
    warmup: Vec<f64>,
}

impl HoltWinters {
    pub fn new(params: HwParams) -> Result<Self> {
        params.validate()?;
        Ok(HoltWinters {
            params,
            level: 0.0,
            trend: 0.0,
            seasonal: vec![1.0; params.m],
            n: 0,
            warmup: Vec::with_capacity(params.m),
        })
    }

    /// An already initialized model, as if `m` observations had been seen.
    pub fn with_state(params: HwParams, level: f64, trend: f64, seasonal: Vec<f64>) -> Result<Self> {
        params.validate()?;
        if seasonal.len() != params.m || seasonal.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidParameter("need m positive seasonal multipliers".into()));
        }
        Ok(HoltWinters { params, level, trend, seasonal, n: params.m as u64, warmup: Vec::new() })
    }

    pub fn params(&self) -> HwParams {
        self.params
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn trend(&self) -> f64 {
        self.trend
    }

    pub fn seasonal(&self) -> &[f64] {
        &self.seasonal
    }

    pub fn observations(&self) -> u64 {
        self.n
    }

    pub fn in_warmup(&self) -> bool {
        self.n < self.params.m as u64
    }

    pub fn observe(&mut self, y: f64) {
        let y = if y.is_finite() { y.max(EPSILON) } else { EPSILON };
        let m = self.params.m;
        if self.in_warmup() {
            self.warmup.push(y);
            self.n += 1;
            if !self.in_warmup() {
                let mean = self.warmup.iter().sum::<f64>() / m as f64;
                self.level = mean;
                self.trend = 0.0;
                for (s, v) in self.seasonal.iter_mut().zip(&self.warmup) {
                    *s = (v / mean).clamp(SEASONAL_MIN, SEASONAL_MAX);
                }
                self.warmup = Vec::new();
            }
            return;
        }
        let HwParams { alpha, beta, gamma, .. } = self.params;
        let i = (self.n % m as u64) as usize;
        let (l0, b0, s0) = (self.level, self.trend, self.seasonal[i]);
        let level = alpha * (y / s0.max(EPSILON)) + (1.0 - alpha) * (l0 + b0);
        let trend = beta * (level - l0) + (1.0 - beta) * b0;
        let season = gamma * (y / (l0 + b0).max(EPSILON)) + (1.0 - gamma) * s0;
        self.level = level;
        self.trend = trend;
        self.seasonal[i] = season.max(EPSILON);
        self.n += 1;
    }

    /// Forecast `h >= 1` cycles ahead, never negative.
    pub fn forecast(&self, h: usize) -> f64 {
        if self.in_warmup() {
            if self.warmup.is_empty() {
                return 0.0;
            }
            return self.warmup.iter().sum::<f64>() / self.warmup.len() as f64;
        }
        let h = h.max(1);
        let m = self.params.m as u64;
        let idx = ((self.n - 1 + h as u64) % m) as usize;
        ((self.level + h as f64 * self.trend) * self.seasonal[idx]).max(0.0)
    }
}

/// A model plus its registry bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedModel {
    pub model: HoltWinters,
    /// The index has been dropped; the model is kept for later forecasts.
    pub retired: bool,
    /// Last observation fed in.
    pub last_observation: f64,
    last_used: u64,
}

/// All utility models, keyed by index spec.
#[derive(Debug, Clone)]
pub struct Forecaster {
    params: HwParams,
    capacity: usize,
    clock: u64,
    models: BTreeMap<IndexKeySpec, TrackedModel>,
}

impl Default for Forecaster {
    fn default() -> Self {
        Forecaster::new(HwParams::default()).expect("default parameters are valid")
    }
}

impl Forecaster {
    pub fn new(params: HwParams) -> Result<Self> {
        Forecaster::with_capacity(params, DEFAULT_CAPACITY)
    }

    pub fn with_capacity(params: HwParams, capacity: usize) -> Result<Self> {
        params.validate()?;
        Ok(Forecaster { params, capacity: capacity.max(1), clock: 0, models: BTreeMap::new() })
    }

    pub fn params(&self) -> HwParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    fn touch(&mut self, spec: &IndexKeySpec) -> &mut TrackedModel {
        self.clock += 1;
        if !self.models.contains_key(spec) {
            if self.models.len() >= self.capacity {
                let victim = self
                    .models
                    .iter()
                    .min_by_key(|(_, t)| t.last_used)
                    .map(|(s, _)| s.clone())
                    .expect("capacity is at least one");
                self.models.remove(&victim);
            }
            let model = HoltWinters::new(self.params).expect("validated");
            self.models.insert(spec.clone(), TrackedModel { model, retired: false, last_observation: 0.0, last_used: 0 });
        }
        let t = self.models.get_mut(spec).expect("inserted above");
        t.last_used = self.clock;
        t
    }

    /// Starts tracking a newly created index with its current utility. An
    /// already tracked spec takes it as one more observation.
    pub fn bootstrap(&mut self, spec: &IndexKeySpec, utility: f64) {
        let t = self.touch(spec);
        t.retired = false;
        t.model.observe(utility);
        t.last_observation = utility;
    }

    pub fn observe(&mut self, spec: &IndexKeySpec, utility: f64) {
        let t = self.touch(spec);
        t.model.observe(utility);
        t.last_observation = utility;
    }

    pub fn forecast(&self, spec: &IndexKeySpec, h: usize) -> Option<f64> {
        self.models.get(spec).map(|t| t.model.forecast(h))
    }

    /// Marks the index dropped. The model stays.
    pub fn retire(&mut self, spec: &IndexKeySpec) {
        if let Some(t) = self.models.get_mut(spec) {
            t.retired = true;
        }
    }

    pub fn lookup(&self, spec: &IndexKeySpec) -> Option<&TrackedModel> {
        self.models.get(spec)
    }

    pub fn specs(&self) -> impl Iterator<Item = &IndexKeySpec> {
        self.models.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&IndexKeySpec, &TrackedModel)> {
        self.models.iter()
    }
}
