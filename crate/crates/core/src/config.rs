//! Experiment configuration files.
//!
//! Configs are TOML documents with `schema_version = 1`. Unknown keys are
//! errors everywhere, including in `--override key=value` edits, which are
//! applied to the parsed document before it is checked.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, DelayProfile, RewardSequenceSpec, TotalLaw};
use crate::learner::{LearnerConfig, Mode};
use crate::mdp::{random_dense, riverswim, two_state, MdpError, RawMdp, TabularMdp};
use crate::rng::{stream, StreamRole};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("bad override `{0}`: {1}")]
    Override(String, String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("model: {0}")]
    Model(#[from] MdpError),
    #[error("channel: {0}")]
    Channel(#[from] ChannelError),
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_fit_from() -> u64 {
    4096
}

fn default_certify_samples() -> usize {
    10_000
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub initial_state: usize,
    /// First checkpoint used by the regret slope fit.
    #[serde(default = "default_fit_from")]
    pub fit_from: u64,
    /// Sequences drawn by `certify-channel`.
    #[serde(default = "default_certify_samples")]
    pub certify_samples: usize,
    pub mdp: MdpSource,
    #[serde(default)]
    pub channel: ChannelConfig,
    pub learner: LearnerSection,
    #[serde(default)]
    pub probes: ProbeFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum MdpSource {
    /// A TOML file holding `num_states`, `num_actions`, `transition`, `reward`.
    /// Relative paths resolve against the config file's directory.
    File { path: PathBuf },
    Riverswim { n: usize },
    RandomDense { states: usize, actions: usize, alpha: f64, seed: u64 },
    TwoState,
    Inline(RawMdp),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    #[default]
    Immediate,
    FixedDelay,
    UniformWindow,
    Dyadic,
    TruncatedGeometric,
    /// Requires `negative_test = true` and `nominal_d`.
    UnboundedGeometric,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default)]
    pub kind: ChannelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_offset: Option<usize>,
    /// Geometric ratio for the geometric kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometric_p: Option<f64>,
    #[serde(default)]
    pub total_law: TotalLaw,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_pair_overrides: Vec<PairOverride>,
    #[serde(default)]
    pub negative_test: bool,
    /// Declared `d` for a channel without a certified bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairOverride {
    pub state: usize,
    pub action: usize,
    pub kind: ChannelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_offset: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometric_p: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DHatKeyword {
    /// Use the channel's declared spillover.
    Certified,
}

/// `d_hat = 2.5` or `d_hat = "certified"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DHatSetting {
    Value(f64),
    Keyword(DHatKeyword),
}

impl Default for DHatSetting {
    fn default() -> Self {
        Self::Keyword(DHatKeyword::Certified)
    }
}

fn default_delta() -> f64 {
    0.05
}

fn default_evi_cap() -> usize {
    crate::evi::DEFAULT_ITERATION_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSection {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub d_hat: DHatSetting,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_evi_cap")]
    pub evi_iteration_cap: usize,
    #[serde(default)]
    pub clip_optimistic_reward: bool,
}

impl Default for LearnerSection {
    fn default() -> Self {
        Self {
            delta: default_delta(),
            d_hat: DHatSetting::default(),
            mode: Mode::default(),
            evi_iteration_cap: default_evi_cap(),
            clip_optimistic_reward: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeFlags {
    #[serde(default = "yes")]
    pub ineq17: bool,
    #[serde(default = "yes")]
    pub spillover: bool,
    #[serde(default = "yes")]
    pub epoch_count: bool,
    #[serde(default = "yes")]
    pub prefix_domination: bool,
    /// Violations are expected (under-estimated `d_hat`, uncertified
    /// channel); the CLI then does not fail on them.
    #[serde(default)]
    pub expect_violation: bool,
}

impl Default for ProbeFlags {
    fn default() -> Self {
        Self { ineq17: true, spillover: true, epoch_count: true, prefix_domination: true, expect_violation: false }
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `a.b.c=value` to a parsed document. Missing intermediate tables
/// are created; the final check for unknown keys happens on deserialization.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(spec.into(), "expected key=value".into()))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(ConfigError::Override(spec.into(), "empty key segment".into()));
    }
    let mut table = doc;
    for key in &keys[..keys.len() - 1] {
        let entry = table.entry(key.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(ConfigError::Override(spec.into(), format!("`{key}` is not a table"))),
        };
    }
    table.insert(keys[keys.len() - 1].to_string(), parse_override_value(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    /// Parses a config document, applying overrides first.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let cfg: Self = if overrides.is_empty() {
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        } else {
            let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
            for o in overrides {
                apply_override(&mut doc, o)?;
            }
            toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and parses a config file. Relative MDP file paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut cfg = Self::parse(&text, overrides)?;
        if let MdpSource::File { path: mdp_path } = &mut cfg.mdp {
            if mdp_path.is_relative() {
                if let Some(dir) = path.parent() {
                    *mdp_path = dir.join(&*mdp_path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} unsupported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("duplicate seed {}", w[0]));
        }
        if !(self.learner.delta > 0.0 && self.learner.delta < 1.0) {
            return bad(format!("learner.delta = {} not in (0,1)", self.learner.delta));
        }
        if let DHatSetting::Value(d) = self.learner.d_hat {
            if !(d >= 0.0 && d.is_finite()) {
                return bad(format!("learner.d_hat = {d} must be finite and >= 0"));
            }
        }
        if self.learner.evi_iteration_cap == 0 {
            return bad("learner.evi_iteration_cap must be positive".into());
        }
        let c = &self.channel;
        let unbounded = c.kind == ChannelKind::UnboundedGeometric
            || c.per_pair_overrides.iter().any(|o| o.kind == ChannelKind::UnboundedGeometric);
        if unbounded && !c.negative_test {
            return bad("unbounded_geometric channels need channel.negative_test = true".into());
        }
        if unbounded && c.nominal_d.is_none() {
            return bad("unbounded_geometric channels need channel.nominal_d".into());
        }
        if let Some(d) = c.nominal_d {
            if !unbounded {
                return bad("channel.nominal_d only applies to unbounded channels".into());
            }
            if !(d > 0.0 && d.is_finite()) {
                return bad(format!("channel.nominal_d = {d} must be positive"));
            }
        }
        Ok(())
    }

    /// Builds the true model.
    pub fn build_mdp(&self) -> Result<TabularMdp, ConfigError> {
        match &self.mdp {
            MdpSource::File { path } => load_mdp_file(path),
            MdpSource::Riverswim { n } => {
                if *n < 2 {
                    return Err(ConfigError::Invalid(format!("riverswim needs n >= 2, got {n}")));
                }
                Ok(riverswim(*n))
            }
            MdpSource::RandomDense { states, actions, alpha, seed } => {
                if *states == 0 || *actions == 0 || !(*alpha > 0.0) {
                    return Err(ConfigError::Invalid("random_dense needs states, actions >= 1 and alpha > 0".into()));
                }
                let mut rng = stream(*seed, StreamRole::ModelGeneration);
                Ok(random_dense(*states, *actions, *alpha, &mut rng))
            }
            MdpSource::TwoState => Ok(two_state()),
            MdpSource::Inline(raw) => Ok(raw.clone().validate()?),
        }
    }

    /// Builds the reward channel for `mdp`.
    pub fn build_channel(&self, mdp: &TabularMdp) -> Result<RewardSequenceSpec, ConfigError> {
        let c = &self.channel;
        let profile = profile_of(c.kind, c.support_width, c.delay_offset, c.geometric_p)?;
        let mut spec = RewardSequenceSpec::new(mdp, profile, c.total_law)?;
        for o in &c.per_pair_overrides {
            let p = profile_of(o.kind, o.support_width, o.delay_offset, o.geometric_p)?;
            spec = spec.with_override(o.state, o.action, p)?;
        }
        if let Some(d) = c.nominal_d {
            spec = spec.with_nominal_spillover(d)?;
        }
        Ok(spec)
    }

    /// The learner's `d_hat`, given the channel's declared spillover.
    pub fn resolve_d_hat(&self, declared: f64) -> f64 {
        match self.learner.d_hat {
            DHatSetting::Value(d) => d,
            DHatSetting::Keyword(DHatKeyword::Certified) => declared,
        }
    }

    pub fn learner_config(&self, declared_spillover: f64) -> LearnerConfig {
        LearnerConfig {
            delta: self.learner.delta,
            d_hat: self.resolve_d_hat(declared_spillover),
            mode: self.learner.mode,
            evi_iteration_cap: self.learner.evi_iteration_cap,
            clip_optimistic_reward: self.learner.clip_optimistic_reward,
            record_presence_history: false,
        }
    }
}

pub fn load_mdp_file(path: &Path) -> Result<TabularMdp, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
    let raw: RawMdp = toml::from_str(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    Ok(raw.validate()?)
}

fn profile_of(
    kind: ChannelKind,
    width: Option<usize>,
    offset: Option<usize>,
    ratio: Option<f64>,
) -> Result<DelayProfile, ConfigError> {
    let need_width = || width.ok_or_else(|| ConfigError::Invalid(format!("{kind:?} channel needs support_width")));
    let need_ratio = || ratio.ok_or_else(|| ConfigError::Invalid(format!("{kind:?} channel needs geometric_p")));
    let profile = match kind {
        ChannelKind::Immediate => DelayProfile::Immediate,
        ChannelKind::FixedDelay => {
            let offset = offset.ok_or_else(|| ConfigError::Invalid("fixed_delay channel needs delay_offset".into()))?;
            DelayProfile::FixedDelay { offset, width: width.unwrap_or(offset + 1) }
        }
        ChannelKind::UniformWindow => DelayProfile::UniformWindow { width: need_width()? },
        ChannelKind::Dyadic => DelayProfile::Dyadic { width: need_width()? },
        ChannelKind::TruncatedGeometric => DelayProfile::TruncatedGeometric { width: need_width()?, ratio: need_ratio()? },
        ChannelKind::UnboundedGeometric => DelayProfile::UnboundedGeometric { ratio: need_ratio()? },
    };
    profile.validate()?;
    Ok(profile)
}
