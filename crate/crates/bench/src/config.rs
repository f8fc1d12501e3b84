//! Benchmark configuration: defaults, TOML file and command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tidemark::exec::{Template, VbpPopulation};
use tidemark::forecaster::HwParams;
use tidemark::pindex::Scheme;
use tidemark::tuner::{DecisionLogic, Frequency, TunerConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: Box<toml::de::Error> },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Attributes per table besides the timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Width {
    Narrow,
    Wide,
}

impl Width {
    pub fn attributes(self) -> usize {
        match self {
            Width::Narrow => 20,
            Width::Wide => 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mixture {
    ReadOnly,
    ReadHeavy,
    Balanced,
    WriteHeavy,
}

impl Mixture {
    pub const ALL: [Mixture; 4] = [Mixture::ReadOnly, Mixture::ReadHeavy, Mixture::Balanced, Mixture::WriteHeavy];

    /// Share of queries that are updates.
    pub fn write_fraction(self) -> f64 {
        match self {
            Mixture::ReadOnly => 0.0,
            Mixture::ReadHeavy => 0.1,
            Mixture::Balanced => 0.5,
            Mixture::WriteHeavy => 0.9,
        }
    }
}

/// How phases pick their template from `templates`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseOrder {
    Random,
    Cyclic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Population {
    Immediate,
    Incremental,
}

impl From<Population> for VbpPopulation {
    fn from(p: Population) -> Self {
        match p {
            Population::Immediate => VbpPopulation::Immediate,
            Population::Incremental => VbpPopulation::Incremental,
        }
    }
}

/// Serde through `Display` and `FromStr`.
mod text {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        String::deserialize(d)?.parse().map_err(de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Tuples per table.
    pub scale: usize,
    pub width: Width,
    pub skew: f64,
    /// Workload length `t`.
    pub queries: usize,
    /// Phase length `l`; must divide `queries`.
    pub phase_length: usize,
    pub mixture: Mixture,
    /// Templates phases are drawn from.
    pub templates: Vec<Template>,
    pub phase_order: PhaseOrder,
    /// Number of attribute sets phases cycle through; 0 draws a fresh set
    /// for every phase.
    pub period: usize,
    pub selectivity: f64,
    pub update_selectivity: f64,
    pub projectivity: f64,
    pub insert_batch: usize,
    /// Sub-domains intervals are centered on; 0 places them anywhere.
    pub affinity: usize,
    /// Share of scans replaced by one on other attributes.
    pub noise: f64,
    pub scheme: Scheme,
    #[serde(with = "text")]
    pub dl: DecisionLogic,
    #[serde(with = "text")]
    pub frequency: Frequency,
    /// Index storage budget in bytes.
    pub budget: u64,
    pub pages_per_step: usize,
    pub page_capacity: usize,
    /// Monitor window in queries.
    pub window: usize,
    pub vbp_population: Population,
    pub drop_at_phase_end: bool,
    /// Query-free tuner cycles at each phase start (deterministic mode).
    pub idle_cycles: usize,
    /// Client pause at each phase start (wall-clock mode).
    pub idle_ms: u64,
    pub hw_alpha: f64,
    pub hw_beta: f64,
    pub hw_gamma: f64,
    /// Season length in cycles; 0 derives it from the phase structure.
    pub hw_season: usize,
    /// Base minimum utility; the tuner default when unset.
    pub u_min: Option<f64>,
    /// Candidate admission frequency.
    pub theta: usize,
    /// Runs to average.
    pub repeat: usize,
    pub seed: u64,
    /// Text form of a trained classifier tree.
    pub classifier_tree: Option<String>,
    /// Check every result against a table-scan execution.
    pub verify: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let hw = HwParams::default();
        BenchConfig {
            scale: 1_000_000,
            width: Width::Narrow,
            skew: 1.0,
            queries: 5000,
            phase_length: 500,
            mixture: Mixture::ReadOnly,
            templates: vec![Template::LowS, Template::ModS],
            phase_order: PhaseOrder::Random,
            period: 0,
            selectivity: 0.01,
            update_selectivity: 1e-4,
            projectivity: 0.1,
            insert_batch: 10,
            affinity: 0,
            noise: 0.0,
            scheme: Scheme::Vap,
            dl: DecisionLogic::Predictive,
            frequency: Frequency::default(),
            budget: 256 << 20,
            pages_per_step: 100,
            page_capacity: 1000,
            window: 100,
            vbp_population: Population::Incremental,
            drop_at_phase_end: false,
            idle_cycles: 0,
            idle_ms: 0,
            hw_alpha: hw.alpha,
            hw_beta: hw.beta,
            hw_gamma: hw.gamma,
            hw_season: 0,
            u_min: None,
            theta: tidemark::planner::DEFAULT_THETA,
            repeat: 1,
            seed: 42,
            classifier_tree: None,
            verify: false,
        }
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: BenchConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), source: Box::new(e) })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.to_path_buf(), source: e })?;
        BenchConfig::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if self.queries == 0 || self.scale == 0 {
            return bad("queries and scale must be positive");
        }
        if self.phase_length == 0 || self.queries % self.phase_length != 0 {
            return bad("phase_length must be positive and divide queries");
        }
        if !unit(self.selectivity) || !unit(self.update_selectivity) {
            return bad("selectivities must lie in (0, 1]");
        }
        if !unit(self.projectivity) {
            return bad("projectivity must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad("noise must lie in [0, 1)");
        }
        if !(self.skew >= 0.0) || !self.skew.is_finite() {
            return bad("skew must be a non-negative number");
        }
        if self.templates.is_empty() {
            return bad("templates must not be empty");
        }
        if self.insert_batch == 0 || self.page_capacity == 0 || self.window == 0 || self.repeat == 0 {
            return bad("insert_batch, page_capacity, window and repeat must be positive");
        }
        if self.theta == 0 {
            return bad("theta must be positive");
        }
        if self.hw_season == 1 {
            return bad("hw_season must be 0 or at least 2");
        }
        if let Some(t) = &self.classifier_tree {
            t.parse::<tidemark::classifier::TreeNode>().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        self.tuner_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Tuner cycles per phase in deterministic mode, idle cycles included.
    pub fn cycles_per_phase(&self) -> usize {
        let every = self.frequency.every_queries().unwrap_or(tidemark::tuner::DEFAULT_EVERY) as usize;
        self.phase_length.div_ceil(every.max(1)) + self.idle_cycles
    }

    pub fn hw_params(&self) -> HwParams {
        let m = match self.hw_season {
            0 if self.period >= 2 => self.cycles_per_phase() * self.period,
            0 => HwParams::default().m,
            m => m,
        };
        HwParams { alpha: self.hw_alpha, beta: self.hw_beta, gamma: self.hw_gamma, m: m.max(2) }
    }

    pub fn tuner_config(&self) -> TunerConfig {
        TunerConfig {
            frequency: self.frequency,
            budget: self.budget,
            logic: self.dl,
            scheme: self.scheme,
            pages_per_step: self.pages_per_step,
            theta: self.theta,
            base_u_min: self.u_min,
            hw: self.hw_params(),
            seed: self.seed,
            ..TunerConfig::default()
        }
    }

    /// Applies `key=value` with TOML value syntax, bare words taken as
    /// strings.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let mut table = toml::Table::try_from(&*self).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let parsed = value
            .parse::<toml::Value>()
            .or_else(|_| format!("v = {value}").parse::<toml::Table>().map(|mut t| t.remove("v").expect("key v")))
            .unwrap_or_else(|_| toml::Value::String(value.to_string()));
        table.insert(key.to_string(), parsed);
        *self = table.try_into().map_err(|e: toml::de::Error| ConfigError::Invalid(format!("{key}: {e}")))?;
        Ok(())
    }
}

impl fmt::Display for BenchConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_toml())
    }
}

/// Comma-separated template list, e.g. `LOW-S,MOD-S`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateList(pub Vec<Template>);

impl FromStr for TemplateList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',').map(|t| t.trim().parse::<Template>().map_err(|e| e.to_string())).collect::<Result<_, _>>().map(TemplateList)
    }
}

impl From<TemplateList> for Vec<Template> {
    fn from(t: TemplateList) -> Self {
        t.0
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    T::deserialize(toml::Value::String(s.to_string())).map_err(|e| e.to_string())
}

macro_rules! overrides {
    ($($field:ident: $ty:ty $(=> $parser:expr)?, $help:literal;)*) => {
        /// One optional flag per configuration field.
        #[derive(Debug, Clone, Default, clap::Args)]
        pub struct Overrides {
            $(
                #[arg(long, help = $help $(, value_parser = $parser)?)]
                pub $field: Option<$ty>,
            )*
        }

        impl Overrides {
            pub fn apply(&self, cfg: &mut BenchConfig) {
                $(
                    if let Some(v) = &self.$field {
                        cfg.$field = v.clone().into();
                    }
                )*
            }
        }
    };
}

overrides! {
    scale: usize, "tuples per table";
    width: Width => parse_enum::<Width>, "narrow (20 attributes) or wide (200)";
    skew: f64, "Zipf exponent of attribute values";
    queries: usize, "workload length";
    phase_length: usize, "queries per phase; must divide queries";
    mixture: Mixture => parse_enum::<Mixture>, "read-only, read-heavy, balanced or write-heavy";
    templates: TemplateList => TemplateList::from_str, "comma list of LOW-S, MOD-S, HIGH-S, LOW-U, HIGH-U, INS";
    phase_order: PhaseOrder => parse_enum::<PhaseOrder>, "random or cyclic template order";
    period: usize, "attribute sets phases cycle through; 0 draws fresh ones";
    selectivity: f64, "scan selectivity in (0, 1]";
    update_selectivity: f64, "update selectivity in (0, 1]";
    projectivity: f64, "share of attributes projected";
    insert_batch: usize, "rows per INS query";
    affinity: usize, "sub-domains intervals are centered on; 0 for none";
    noise: f64, "share of scans on unrelated attributes";
    scheme: Scheme => Scheme::from_str, "VAP, VBP or FULL";
    dl: DecisionLogic => DecisionLogic::from_str, "immediate, retrospective[:k], predictive or holistic";
    frequency: Frequency => Frequency::from_str, "FAST, MOD, SLOW, DIS or Q<n> (every n queries)";
    budget: u64, "index storage budget in bytes";
    pages_per_step: usize, "pages indexed per index per cycle";
    page_capacity: usize, "tuples per page";
    window: usize, "monitor window in queries";
    vbp_population: Population => parse_enum::<Population>, "immediate or incremental";
    drop_at_phase_end: bool, "drop every index when a phase ends";
    idle_cycles: usize, "query-free tuner cycles at each phase start";
    idle_ms: u64, "client pause at each phase start in wall-clock mode";
    hw_alpha: f64, "Holt-Winters level smoothing";
    hw_beta: f64, "Holt-Winters trend smoothing";
    hw_gamma: f64, "Holt-Winters seasonal smoothing";
    hw_season: usize, "season length in cycles; 0 derives it";
    u_min: f64, "base minimum utility for a full monitor window";
    theta: usize, "occurrences before a candidate is admitted";
    repeat: usize, "runs to average";
    seed: u64, "workload and data seed";
    classifier_tree: String, "text form of a trained classifier tree";
    verify: bool, "check every result against a table scan";
}

/// Defaults, then the file, then the flags; validated.
pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<BenchConfig, ConfigError> {
    let mut cfg = match file {
        Some(p) => BenchConfig::load(p)?,
        None => BenchConfig::default(),
    };
    flags.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = BenchConfig::default();
        c.validate().unwrap();
        let back = BenchConfig::from_toml(&c.to_toml(), Path::new("x")).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.hash().len(), 16);
    }

    #[test]
    fn file_keys_and_errors() {
        let c = BenchConfig::from_toml("scale = 10\nscheme = \"VBP\"\ndl = \"retrospective:50\"\nfrequency = \"DIS\"\ntemplates = [\"MOD-S\"]\nmixture = \"write-heavy\"", Path::new("x")).unwrap();
        assert_eq!(c.scale, 10);
        assert_eq!(c.scheme, Scheme::Vbp);
        assert_eq!(c.dl, DecisionLogic::Retrospective(50));
        assert_eq!(c.frequency, Frequency::Disabled);
        assert_eq!(c.mixture, Mixture::WriteHeavy);
        assert!(matches!(BenchConfig::from_toml("nope = 1", Path::new("x")), Err(ConfigError::Parse { .. })));
        assert!(matches!(BenchConfig::from_toml("dl = \"sometimes\"", Path::new("x")), Err(ConfigError::Parse { .. })));
        let bad = BenchConfig { queries: 10, phase_length: 3, ..BenchConfig::default() };
        assert!(matches!(bad.validate(), Err(ConfigError::Invalid(_))));
        assert!(BenchConfig { selectivity: 0.0, ..BenchConfig::default() }.validate().is_err());
    }

    #[test]
    fn set_by_key() {
        let mut c = BenchConfig::default();
        c.set("scheme", "FULL").unwrap();
        c.set("affinity", "5").unwrap();
        c.set("dl", "immediate").unwrap();
        c.set("templates", "[\"LOW-S\"]").unwrap();
        assert_eq!((c.scheme, c.affinity, c.dl), (Scheme::Full, 5, DecisionLogic::Immediate));
        assert_eq!(c.templates, vec![Template::LowS]);
        assert!(c.set("unknown", "1").is_err());
    }

    #[test]
    fn overrides_apply_over_file() {
        let o = Overrides { scale: Some(7), scheme: Some(Scheme::Full), ..Overrides::default() };
        let mut c = BenchConfig::default();
        o.apply(&mut c);
        assert_eq!((c.scale, c.scheme), (7, Scheme::Full));
    }

    #[test]
    fn season_follows_phase_structure() {
        let c = BenchConfig { period: 2, idle_cycles: 2, ..BenchConfig::default() };
        assert_eq!(c.cycles_per_phase(), 12);
        assert_eq!(c.hw_params().m, 24);
    }
}
