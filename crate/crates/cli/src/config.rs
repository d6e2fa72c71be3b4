//! Per-stage settings, shared by the command line and `config.json`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use ment_core::changepoint::Order;
use ment_core::embedding::Flavor;
use ment_core::evaluation::BasisKind;
use ment_core::geometry::{Metric, PairSet};
use ment_core::model::preset_by_name;

use crate::{CliError, Result};

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Invalid(msg.into()))
}

#[derive(Parser)]
struct Defaults<T: Args> {
    #[command(flatten)]
    inner: T,
}

/// Defaults as the command line would fill them in.
fn clap_defaults<T: Args>() -> T {
    Defaults::<T>::parse_from(["ment"]).inner
}

macro_rules! clap_default {
    ($($t:ty),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                clap_defaults()
            }
        }
    )*};
}

clap_default!(
    SynthConfig,
    InputConfig,
    EmbedConfig,
    DistanceConfig,
    TrajectoryConfig,
    AttributeConfig,
    CpdConfig
);

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Synthetic preset: dataset1 or dataset2
    #[arg(long, default_value = "dataset1")]
    pub preset: String,
    /// Number of nodes
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    /// Sampling seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let model = preset_by_name(&self.preset)?;
        if self.n < model.dim().max(2) {
            return invalid(format!(
                "--n must be at least {} for {}",
                model.dim().max(2),
                self.preset
            ));
        }
        Ok(())
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    /// One file of `t u v` lines
    EdgeTriples,
    /// A directory with one `u v` edge list per snapshot, in file-name order
    PerSnapshot,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputConfig {
    /// Network input; defaults to the bundle's synth output
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Layout of --input
    #[arg(long, value_enum, default_value = "edge-triples")]
    pub format: InputFormat,
    /// Node manifest, one label per line; lists isolated nodes and fixes the node order
    #[arg(long)]
    pub nodes: Option<PathBuf>,
    /// Number of snapshots (default: largest t in an edge-triple file)
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    #[command(flatten)]
    pub source: InputConfig,
    /// Embedding dimension (required for --input; synthetic runs default to the preset's)
    #[arg(long)]
    pub d: Option<usize>,
    /// Embedding flavor: modified or original
    #[arg(long, default_value = "modified")]
    pub flavor: Flavor,
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        match self.d {
            Some(0) => invalid("--d must be at least 1"),
            None if self.source.input.is_some() => invalid("--d is required with --input"),
            _ => Ok(()),
        }?;
        if self.source.horizon == Some(0) {
            return invalid("--horizon must be at least 1");
        }
        if self.source.input.is_none()
            && (self.source.nodes.is_some() || self.source.horizon.is_some())
        {
            return invalid("--nodes and --horizon need --input");
        }
        Ok(())
    }
}

/// Time pairs used to aggregate the canonical mode basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairChoice {
    All,
    Adjacent,
    Window(usize),
}

impl PairChoice {
    pub fn pairs(self, horizon: usize) -> PairSet {
        match self {
            PairChoice::All => PairSet::all_pairs(horizon),
            PairChoice::Adjacent => PairSet::adjacent(horizon),
            PairChoice::Window(w) => PairSet::window(horizon, w),
        }
    }
}

impl fmt::Display for PairChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairChoice::All => f.write_str("all"),
            PairChoice::Adjacent => f.write_str("adjacent"),
            PairChoice::Window(w) => write!(f, "window:{w}"),
        }
    }
}

impl FromStr for PairChoice {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(PairChoice::All),
            "adjacent" => Ok(PairChoice::Adjacent),
            _ => match s.strip_prefix("window:").map(str::parse) {
                Some(Ok(w)) if w > 0 => Ok(PairChoice::Window(w)),
                _ => invalid(format!(
                    "unknown pair set `{s}` (expected all, adjacent or window:W)"
                )),
            },
        }
    }
}

impl Serialize for PairChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PairChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistanceConfig {
    /// Whole-space metrics (tv, mv); mode-wise distances are always computed
    #[arg(long = "metric", value_delimiter = ',', default_values = ["tv", "mv"])]
    pub metrics: Vec<Metric>,
    /// Mode directions: canonical or standard
    #[arg(long, default_value = "canonical")]
    pub basis: BasisKind,
    /// Pairs aggregated into the canonical basis: all, adjacent or window:W
    #[arg(long, default_value = "all")]
    pub pairs: PairChoice,
}

impl DistanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.metrics.iter().any(|m| matches!(m, Metric::Mode(_))) {
            return invalid("--metric takes tv or mv; every mode-wise distance is computed anyway");
        }
        let unique: BTreeSet<String> = self.metrics.iter().map(Metric::to_string).collect();
        if unique.len() != self.metrics.len() {
            return invalid("--metric lists a metric twice");
        }
        Ok(())
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryConfig {
    /// Trajectory dimension for tv and mv (mode trajectories are 1D)
    #[arg(long, default_value_t = 2)]
    pub c: usize,
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c == 0 {
            return invalid("--c must be at least 1");
        }
        Ok(())
    }
}

/// An ordered pair of 1-based times written `t:s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimePair(pub usize, pub usize);

impl fmt::Display for TimePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.0, self.1)
    }
}

impl FromStr for TimePair {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let parsed = s
            .split_once(':')
            .and_then(|(t, u)| Some((t.trim().parse().ok()?, u.trim().parse().ok()?)));
        match parsed {
            Some((t, u)) => Ok(TimePair(t, u)),
            None => invalid(format!("time pair `{s}` is not of the form t:s")),
        }
    }
}

impl Serialize for TimePair {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TimePair {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributeConfig {
    /// Time pair t:s to attribute (repeatable; default every adjacent pair)
    #[arg(id = "attr_pairs", long = "pair", value_name = "T:S")]
    pub pairs: Vec<TimePair>,
    /// Metrics to attribute: tv or mode-K (default tv and every mode)
    #[arg(
        id = "attr_metrics",
        long = "attr-metric",
        value_name = "METRIC",
        value_delimiter = ','
    )]
    pub metrics: Vec<Metric>,
    /// Size of the top and bottom node lists
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
}

impl AttributeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.metrics.contains(&Metric::Mv) {
            return invalid("mv has no per-node attribution; choose tv or mode-K");
        }
        for p in &self.pairs {
            if p.0 == 0 || p.1 == 0 || p.0 == p.1 {
                return invalid(format!("--pair {p} needs two distinct 1-based times"));
            }
        }
        if self.top_k == 0 {
            return invalid("--top-k must be at least 1");
        }
        Ok(())
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Level scores (jumps)
    Level,
    /// Slope scores (kinks)
    Slope,
}

impl From<Family> for Order {
    fn from(f: Family) -> Order {
        match f {
            Family::Level => Order::Level,
            Family::Slope => Order::Slope,
        }
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CpdConfig {
    /// Number of change points to report
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Minimum gap between reported change points
    #[arg(long, default_value_t = 2)]
    pub min_separation: usize,
    /// Matching tolerance against known change times
    #[arg(long, default_value_t = 2)]
    pub tolerance: usize,
    /// Score families to fuse
    #[arg(long = "family", value_enum, value_delimiter = ',', default_values = ["level", "slope"])]
    pub families: Vec<Family>,
}

impl CpdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return invalid("--k must be at least 1");
        }
        if self.min_separation == 0 {
            return invalid("--min-separation must be at least 1");
        }
        if self.families.is_empty() {
            return invalid("--family needs at least one of level, slope");
        }
        Ok(())
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    /// Distance and trajectory errors across network sizes
    Recovery,
    /// Change-point F1 and MAE across K
    Detection,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Study to run
    #[arg(long, value_enum)]
    pub kind: StudyKind,
    /// Synthetic preset: dataset1 or dataset2
    #[arg(long, default_value = "dataset1")]
    pub preset: String,
    /// Trials per network size
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Network sizes
    #[arg(long = "n", value_delimiter = ',', default_values_t = [100, 300, 500])]
    pub n_grid: Vec<usize>,
    /// Embedding flavor (recovery)
    #[arg(long, default_value = "modified")]
    pub flavor: Flavor,
    /// Mode directions (recovery)
    #[arg(long, default_value = "canonical")]
    pub basis: BasisKind,
    /// K values (detection)
    #[arg(long = "k", value_delimiter = ',', default_values_t = [3, 6, 9])]
    pub k_grid: Vec<usize>,
    /// Minimum gap between change points (detection)
    #[arg(long, default_value_t = 2)]
    pub min_separation: usize,
    /// Matching tolerance (detection)
    #[arg(long, default_value_t = 2)]
    pub tolerance: usize,
    /// Master seed; trial seeds derive from it
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let model = preset_by_name(&self.preset)?;
        if self.trials == 0 {
            return invalid("--trials must be at least 1");
        }
        if self.n_grid.is_empty() || self.n_grid.iter().any(|&n| n < model.dim().max(2)) {
            return invalid(format!(
                "--n needs sizes of at least {}",
                model.dim().max(2)
            ));
        }
        if self.kind == StudyKind::Detection && (self.k_grid.is_empty() || self.k_grid.contains(&0))
        {
            return invalid("--k needs positive values");
        }
        if self.min_separation == 0 {
            return invalid("--min-separation must be at least 1");
        }
        Ok(())
    }
}

/// Everything a bundle was produced with. Stages fill in their own section.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed: Option<EmbedConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<DistanceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<TrajectoryConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<AttributeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpd: Option<CpdConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyConfig>,
}

impl PipelineConfig {
    /// Full-pipeline settings: missing stage sections take their defaults and
    /// a synthetic run fills in `d`.
    pub fn resolve_for_pipeline(mut self) -> Result<Self> {
        let mut embed = self.embed.take().unwrap_or_default();
        if embed.source.input.is_none() {
            let synth = self.synth.get_or_insert_with(SynthConfig::default);
            if embed.d.is_none() {
                embed.d = Some(preset_by_name(&synth.preset)?.dim());
            }
        } else if self.synth.is_some() {
            return invalid("give either a synthetic preset or --input, not both");
        }
        self.embed = Some(embed);
        self.distances.get_or_insert_with(Default::default);
        self.trajectories.get_or_insert_with(Default::default);
        self.attribute.get_or_insert_with(Default::default);
        self.cpd.get_or_insert_with(Default::default);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        if let Some(s) = &self.embed {
            s.validate()?;
        }
        if let Some(s) = &self.distances {
            s.validate()?;
        }
        if let Some(s) = &self.trajectories {
            s.validate()?;
        }
        if let Some(s) = &self.attribute {
            s.validate()?;
        }
        if let Some(s) = &self.cpd {
            s.validate()?;
        }
        if let Some(s) = &self.study {
            s.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_command_line() {
        let cpd = CpdConfig::default();
        assert_eq!((cpd.k, cpd.min_separation, cpd.tolerance), (3, 2, 2));
        assert_eq!(cpd.families, vec![Family::Level, Family::Slope]);
        assert_eq!(
            DistanceConfig::default().metrics,
            vec![Metric::Tv, Metric::Mv]
        );
        assert_eq!(EmbedConfig::default().flavor, Flavor::Modified);
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = PipelineConfig::default().resolve_for_pipeline().unwrap();
        assert_eq!(cfg.embed.as_ref().unwrap().d, Some(3));
        let json = serde_json::to_string(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"cpd": {"k": 6}}"#).unwrap();
        let cpd = cfg.cpd.unwrap();
        assert_eq!(cpd.k, 6);
        assert_eq!(cpd.min_separation, 2);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"cdp": {}}"#).is_err());
    }

    #[test]
    fn pair_choice_and_time_pair_parse() {
        assert_eq!(
            "window:3".parse::<PairChoice>().unwrap(),
            PairChoice::Window(3)
        );
        assert!("window:0".parse::<PairChoice>().is_err());
        assert_eq!("2:5".parse::<TimePair>().unwrap(), TimePair(2, 5));
        assert!("2-5".parse::<TimePair>().is_err());
    }

    #[test]
    fn validation_rejects_bad_sections() {
        let mut a = AttributeConfig::default();
        a.metrics = vec![Metric::Mv];
        assert!(a.validate().is_err());
        let mut d = DistanceConfig::default();
        d.metrics.push(Metric::Mode(0));
        assert!(d.validate().is_err());
        let mut e = EmbedConfig::default();
        e.source.input = Some("x".into());
        assert!(e.validate().is_err());
        let synth = SynthConfig {
            preset: "dataset3".into(),
            ..Default::default()
        };
        assert!(synth.validate().is_err());
    }
}
