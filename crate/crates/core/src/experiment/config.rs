//! Sweep configuration and the built-in presets.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::algebra::Bipartition;
use crate::equilibration::{ConvergencePolicy, TimeGrid};
use crate::error::{BrotocError, Result};
use crate::models::{ModelSpec, SpectrumSource};

/// Default largest chain length accepted by a sweep.
pub const DEFAULT_MAX_L: u32 = 12;

/// A finite inverse temperature or the zero-temperature limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaValue {
    Finite(f64),
    Infinite,
}

impl BetaValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            BetaValue::Finite(b) => Some(b),
            BetaValue::Infinite => None,
        }
    }

    /// Sort key with the infinite value last.
    pub fn key(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for BetaValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BetaValue::Finite(b) => write!(f, "{b}"),
            BetaValue::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for BetaValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BetaValue::Finite(b) => s.serialize_f64(*b),
            BetaValue::Infinite => s.serialize_str("inf"),
        }
    }
}

struct BetaVisitor;

impl Visitor<'_> for BetaVisitor {
    type Value = BetaValue;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a nonnegative number or \"inf\"")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<BetaValue, E> {
        if v == f64::INFINITY {
            Ok(BetaValue::Infinite)
        } else if v.is_finite() && v >= 0.0 {
            Ok(BetaValue::Finite(v))
        } else {
            Err(E::custom(format!("inverse temperature {v} is not allowed")))
        }
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<BetaValue, E> {
        self.visit_f64(v as f64)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<BetaValue, E> {
        self.visit_f64(v as f64)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<BetaValue, E> {
        match v.trim() {
            "inf" | "infinity" | "Infinity" => Ok(BetaValue::Infinite),
            s => s.parse::<f64>().map_err(E::custom).and_then(|x| self.visit_f64(x)),
        }
    }
}

impl<'de> Deserialize<'de> for BetaValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        d.deserialize_any(BetaVisitor)
    }
}

/// Either an explicit list or a log-spaced grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum BetaSpec {
    List(Vec<BetaValue>),
    LogGrid { log_grid: LogGrid },
}

// Dispatch on the JSON shape so element errors are reported as written.
impl<'de> Deserialize<'de> for BetaSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Grid {
            log_grid: LogGrid,
        }
        let v = serde_json::Value::deserialize(d)?;
        if v.is_array() {
            serde_json::from_value(v).map(BetaSpec::List).map_err(de::Error::custom)
        } else if v.is_object() {
            serde_json::from_value::<Grid>(v).map(|g| BetaSpec::LogGrid { log_grid: g.log_grid }).map_err(de::Error::custom)
        } else {
            Err(de::Error::custom("betas must be a list or {\"log_grid\": {...}}"))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    /// Also include `β = 0` in front of the grid.
    #[serde(default)]
    pub with_zero: bool,
}

impl BetaSpec {
    pub fn values(&self) -> Result<Vec<BetaValue>> {
        match self {
            BetaSpec::List(v) => Ok(v.clone()),
            BetaSpec::LogGrid { log_grid: g } => {
                if !(g.min > 0.0 && g.max >= g.min && g.points >= 1) || !g.max.is_finite() {
                    return Err(BrotocError::Config(format!("invalid log grid {g:?}")));
                }
                let mut out = Vec::with_capacity(g.points + 1);
                if g.with_zero {
                    out.push(BetaValue::Finite(0.0));
                }
                let (a, b) = (g.min.log10(), g.max.log10());
                for k in 0..g.points {
                    let x = if g.points == 1 { a } else { a + (b - a) * k as f64 / (g.points - 1) as f64 };
                    out.push(BetaValue::Finite(10f64.powf(x)));
                }
                Ok(out)
            }
        }
    }
}

/// How many realizations to average for random models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Realizations {
    Count(usize),
    /// `⌊200/L⌋`.
    PerSize,
}

impl Realizations {
    pub fn for_size(self, l: u32) -> usize {
        match self {
            Realizations::Count(n) => n,
            Realizations::PerSize => (200 / l.max(1) as usize).max(1),
        }
    }
}

impl Serialize for Realizations {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Realizations::Count(n) => s.serialize_u64(*n as u64),
            Realizations::PerSize => s.serialize_str("per_size"),
        }
    }
}

impl<'de> Deserialize<'de> for Realizations {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(Realizations::Count(n as usize)),
            Raw::S(s) if s == "per_size" => Ok(Realizations::PerSize),
            Raw::S(s) => Err(de::Error::custom(format!("unknown realization rule {s:?}"))),
        }
    }
}

/// Hamiltonian family, instantiated once per chain length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelFamily {
    /// `g = 1, h = 0`.
    TfimIntegrable,
    /// `g = −1.05, h = 0.5`.
    TfimChaotic,
    Tfim { g: f64, h: f64 },
    Anderson {
        #[serde(default = "default_eta")]
        eta: f64,
    },
    Mbl {
        #[serde(default = "default_eta")]
        eta: f64,
        #[serde(default = "default_mbl_h")]
        h: f64,
    },
    Disordered { eta: f64, h: f64 },
    Gue {
        /// Fixed dimension instead of `2^L`.
        #[serde(default)]
        dim: Option<usize>,
    },
    NrcPs,
    MaxEnt,
    NonEntangling,
    Zero,
}

fn default_eta() -> f64 {
    10.0
}

fn default_mbl_h() -> f64 {
    0.1
}

impl ModelFamily {
    pub fn label(&self) -> &'static str {
        match self {
            ModelFamily::TfimIntegrable => "tfim_integrable",
            ModelFamily::TfimChaotic => "tfim_chaotic",
            ModelFamily::Tfim { .. } => "tfim",
            ModelFamily::Anderson { .. } => "anderson",
            ModelFamily::Mbl { .. } => "mbl",
            ModelFamily::Disordered { .. } => "disordered",
            ModelFamily::Gue { .. } => "gue",
            ModelFamily::NrcPs => "nrc_ps",
            ModelFamily::MaxEnt => "max_ent",
            ModelFamily::NonEntangling => "non_entangling",
            ModelFamily::Zero => "zero",
        }
    }

    /// Member of the family for a chain of `l` sites.
    pub fn spec(&self, l: u32) -> Result<ModelSpec> {
        if !(2..=30).contains(&l) {
            return Err(BrotocError::Config(format!("chain length {l} is out of range")));
        }
        let half = Bipartition::half_chain(l)?;
        let (d_a, d_b) = (half.dim_a(), half.dim_b());
        Ok(match *self {
            ModelFamily::TfimIntegrable => ModelSpec::Tfim { l, g: 1.0, h: 0.0 },
            ModelFamily::TfimChaotic => ModelSpec::Tfim { l, g: -1.05, h: 0.5 },
            ModelFamily::Tfim { g, h } => ModelSpec::Tfim { l, g, h },
            ModelFamily::Anderson { eta } => ModelSpec::Disordered { l, eta, h: 0.0 },
            ModelFamily::Mbl { eta, h } | ModelFamily::Disordered { eta, h } => ModelSpec::Disordered { l, eta, h },
            ModelFamily::Gue { dim } => ModelSpec::Gue { d: dim.unwrap_or(d_a * d_b) },
            ModelFamily::NrcPs => ModelSpec::NrcPs { d_a, d_b, spectrum: SpectrumSource::Gue },
            ModelFamily::MaxEnt => {
                if d_a != d_b {
                    return Err(BrotocError::Config(format!(
                        "maximally entangled model needs an even chain length, got {l}"
                    )));
                }
                ModelSpec::MaxEnt { d: d_a * d_b, spectrum: SpectrumSource::Gue }
            }
            ModelFamily::NonEntangling => ModelSpec::NonEntangling { d_a, d_b },
            ModelFamily::Zero => ModelSpec::Zero { d_a, d_b },
        })
    }

    /// Method chosen when the entry does not override it.
    pub fn default_method(&self) -> MethodChoice {
        match self {
            // Anderson spectra violate NRC; the scaling study still uses the NRC expression.
            ModelFamily::TfimChaotic
            | ModelFamily::Anderson { .. }
            | ModelFamily::Mbl { .. }
            | ModelFamily::Gue { .. } => MethodChoice::Nrc,
            ModelFamily::NrcPs | ModelFamily::MaxEnt => MethodChoice::ClosedForm,
            ModelFamily::TfimIntegrable | ModelFamily::NonEntangling | ModelFamily::Zero => MethodChoice::TimeGrid,
            ModelFamily::Tfim { .. } | ModelFamily::Disordered { .. } => MethodChoice::Auto,
        }
    }
}

/// Long-time averaging method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    /// NRC closed form when the spectrum passes the check, time grid otherwise.
    Auto,
    Nrc,
    TimeGrid,
    /// Analytic expressions of the product-state and maximally entangled models.
    ClosedForm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    #[serde(flatten)]
    pub family: ModelFamily,
    /// Label used in output; defaults to the family name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodChoice>,
}

impl ModelEntry {
    pub fn new(family: ModelFamily) -> Self {
        Self { family, name: None, method: None }
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or(self.family.label())
    }

    pub fn method(&self) -> MethodChoice {
        self.method.unwrap_or_else(|| self.family.default_method())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BipartitionRule {
    /// `⌊L/2⌋ : ⌈L/2⌉`.
    #[default]
    FloorHalf,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    #[serde(default = "default_k_last")]
    pub k_last: usize,
}

fn default_k_last() -> usize {
    5
}

impl Default for FitSpec {
    fn default() -> Self {
        Self { k_last: default_k_last() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub models: Vec<ModelEntry>,
    pub betas: BetaSpec,
    pub sizes: Vec<u32>,
    #[serde(default)]
    pub bipartition_rule: BipartitionRule,
    #[serde(default = "default_realizations")]
    pub realizations: Realizations,
    #[serde(default)]
    pub time_grid: TimeGrid,
    #[serde(default)]
    pub convergence: ConvergencePolicy,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub fit: FitSpec,
    #[serde(default = "default_max_l")]
    pub max_l: u32,
    /// Add GUE ensemble estimates next to GUE rows.
    #[serde(default)]
    pub gue_reference: bool,
    /// Keep only this many lowest levels in NRC averages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncate_keep: Option<usize>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_realizations() -> Realizations {
    Realizations::PerSize
}

fn default_max_l() -> u32 {
    DEFAULT_MAX_L
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| BrotocError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(BrotocError::Config("no models configured".into()));
        }
        if self.sizes.is_empty() {
            return Err(BrotocError::Config("no sizes configured".into()));
        }
        if self.betas.values()?.is_empty() {
            return Err(BrotocError::Config("no inverse temperatures configured".into()));
        }
        if let Some(l) = self.sizes.iter().find(|&&l| l < 2) {
            return Err(BrotocError::Config(format!("chain length {l} is below 2")));
        }
        if self.realizations == Realizations::Count(0) {
            return Err(BrotocError::Config("realizations must be at least 1".into()));
        }
        if self.truncate_keep == Some(0) {
            return Err(BrotocError::Config("truncation must keep at least one level".into()));
        }
        if self.fit.k_last < 2 {
            return Err(BrotocError::Config("fits need at least 2 points".into()));
        }
        self.time_grid.validate().map_err(|e| BrotocError::Config(e.to_string()))?;
        if !(self.convergence.rel_tol > 0.0) {
            return Err(BrotocError::Config("convergence tolerance must be positive".into()));
        }
        let mut names: Vec<&str> = self.models.iter().map(|m| m.name()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(BrotocError::Config(format!("model name {:?} is used twice", w[0])));
        }
        for m in &self.models {
            if m.method() == MethodChoice::ClosedForm && !matches!(m.family, ModelFamily::NrcPs | ModelFamily::MaxEnt) {
                return Err(BrotocError::Config(format!("model {:?} has no closed form", m.name())));
            }
            for &l in &self.sizes {
                m.family.spec(l)?;
            }
        }
        Ok(())
    }

    /// Look up a built-in preset by name.
    pub fn preset(name: &str) -> Result<Self> {
        let cfg = match name {
            "fig1-desk" => fig1(),
            "fig2-desk" => size_sweep(name, vec![BetaValue::Finite(0.0)], (4..=10).collect()),
            "fig3-desk" => beta_profile(),
            "fig4-desk" => size_sweep(name, vec![BetaValue::Infinite], (4..=10).collect()),
            "table1-desk" => size_sweep(
                name,
                vec![BetaValue::Finite(0.0), BetaValue::Finite(1.0), BetaValue::Infinite],
                (6..=10).collect(),
            ),
            _ => {
                return Err(BrotocError::Config(format!(
                    "unknown preset {name:?}; known presets: {}",
                    PRESETS.join(", ")
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub const PRESETS: [&str; 5] = ["fig1-desk", "fig2-desk", "fig3-desk", "fig4-desk", "table1-desk"];

/// Starting grid for desk runs; refinement stops once doubling moves the
/// mean by less than half a percent.
fn desk_grid() -> (TimeGrid, ConvergencePolicy) {
    (
        TimeGrid { t_min: 10.0, t_max: 1000.0, n_steps: 65 },
        ConvergencePolicy { rel_tol: 5e-3, max_doublings: 3 },
    )
}

fn base(name: &str, models: Vec<ModelEntry>, betas: BetaSpec, sizes: Vec<u32>) -> ExperimentConfig {
    let (time_grid, convergence) = desk_grid();
    ExperimentConfig {
        name: name.into(),
        models,
        betas,
        sizes,
        bipartition_rule: BipartitionRule::FloorHalf,
        realizations: Realizations::PerSize,
        time_grid,
        convergence,
        master_seed: 20_240_601,
        output: OutputSpec::default(),
        fit: FitSpec::default(),
        max_l: DEFAULT_MAX_L,
        gue_reference: false,
        truncate_keep: None,
    }
}

/// The six families of the scaling study.
pub fn scaling_models() -> Vec<ModelEntry> {
    vec![
        ModelEntry::new(ModelFamily::TfimIntegrable),
        ModelEntry::new(ModelFamily::NrcPs),
        ModelEntry::new(ModelFamily::Anderson { eta: 10.0 }),
        ModelEntry::new(ModelFamily::Mbl { eta: 10.0, h: 0.1 }),
        ModelEntry::new(ModelFamily::TfimChaotic),
        ModelEntry::new(ModelFamily::Gue { dim: None }),
    ]
}

fn size_sweep(name: &str, betas: Vec<BetaValue>, sizes: Vec<u32>) -> ExperimentConfig {
    base(name, scaling_models(), BetaSpec::List(betas), sizes)
}

fn fig1() -> ExperimentConfig {
    let mut cfg = base(
        "fig1-desk",
        vec![ModelEntry::new(ModelFamily::Gue { dim: Some(100) })],
        BetaSpec::LogGrid { log_grid: LogGrid { min: 1e-10, max: 1e-3, points: 8, with_zero: false } },
        vec![7],
    );
    cfg.gue_reference = true;
    cfg
}

fn beta_profile() -> ExperimentConfig {
    let mut models = scaling_models();
    models.push(ModelEntry::new(ModelFamily::MaxEnt));
    base(
        "fig3-desk",
        models,
        BetaSpec::LogGrid { log_grid: LogGrid { min: 1e-3, max: 1e2, points: 21, with_zero: false } },
        vec![6],
    )
}
