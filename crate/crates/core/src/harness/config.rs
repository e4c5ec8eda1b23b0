//! Experiment configuration: one TOML file per experiment, with `--set
//! section.key=value` overrides applied before deserialization.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::microsim::ShuffleOn;
use crate::model::{validate_model, IncrementTensor, ModelSpec, UpdateRule, MAX_STATES};

/// Environment variable naming the default output root.
pub const OUTPUT_DIR_ENV: &str = "REWIRE_OUTPUT_DIR";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub fluid: FluidConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RulePreset {
    Sis,
    Voter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub gamma: Vec<Vec<f64>>,
    /// Preset rule; sis when neither `rule` nor `update` is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<RulePreset>,
    /// Explicit `[m, l, m', l']` rows, 1-based.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub update: Option<Vec<[usize; 4]>>,
    /// Debug only: replaces the derived tensor, `increments[m][l][k]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub increments: Option<Vec<Vec<Vec<i32>>>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            k: 2,
            gamma: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            rule: None,
            update: None,
            increments: None,
        }
    }
}

/// A single `N` or a strictly increasing list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sizes {
    One(usize),
    Many(Vec<usize>),
}

impl Sizes {
    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            Sizes::One(n) => vec![*n],
            Sizes::Many(ns) => ns.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    #[serde(rename = "N")]
    pub n: Sizes,
    pub d: usize,
    pub graph_seed: u64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            n: Sizes::Many(vec![100, 1000, 4000]),
            d: 2,
            graph_seed: 0,
        }
    }
}

/// A number of seeds (indices `0..count`) or explicit seed indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn indices(&self) -> Vec<u64> {
        match self {
            Seeds::Count(c) => (0..*c).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Initial fraction per state; counts are rounded by largest remainder.
    pub initial: Vec<f64>,
    pub seeds: Seeds,
    pub base_seed: u64,
    pub shuffle_on: ShuffleOn,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_stride: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            initial: vec![0.1, 0.9],
            seeds: Seeds::Count(50),
            base_seed: 0,
            shuffle_on: ShuffleOn::EveryEvent,
            snapshot_stride: None,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluidConfig {
    /// RK4 step; defaults to `1e-3 · T`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// Limit degree; defaults to `graph.d`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonCase {
    #[serde(rename = "N")]
    pub n: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub epsilon: Vec<f64>,
    pub trials: u64,
    pub confidence: f64,
    /// 1-based state pair for gap tails; all pairs when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<[usize; 2]>,
    pub poisson: Vec<PoissonCase>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            epsilon: vec![0.05, 0.1],
            trials: 100_000,
            confidence: 0.99,
            pair: None,
            poisson: vec![
                PoissonCase { n: 100, alpha: 2.0 },
                PoissonCase { n: 1000, alpha: 1.5 },
                PoissonCase { n: 1_000_000, alpha: 1.5 },
            ],
        }
    }
}

impl ExperimentConfig {
    /// Parses, applies overrides and validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?;
        apply_overrides(&mut table, overrides)?;
        let config: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, overrides)
    }

    /// Defaults with overrides, for runs without a config file.
    pub fn with_overrides(overrides: &[String]) -> Result<Self> {
        Self::from_toml_str("", overrides)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Hex SHA-256 of the canonical TOML serialization.
    pub fn config_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml_string()?.as_bytes())))
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.graph.n.to_vec()
    }

    pub fn seed_indices(&self) -> Vec<u64> {
        self.run.seeds.indices()
    }

    pub fn fluid_step(&self) -> f64 {
        self.fluid.step.unwrap_or(1e-3 * self.run.horizon)
    }

    pub fn fluid_degree(&self) -> f64 {
        self.fluid.d.unwrap_or(self.graph.d as f64)
    }

    /// 0-based pair, if one is configured.
    pub fn pair(&self) -> Option<(usize, usize)> {
        self.diagnostics.pair.map(|[m, l]| (m - 1, l - 1))
    }

    /// Explicit path wins, then the config's `output_dir`, then
    /// `$REWIRE_OUTPUT_DIR`, then `./rewire-out`.
    pub fn resolve_output_dir(&self, explicit: Option<&Path>) -> PathBuf {
        explicit
            .map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("rewire-out"))
    }

    /// The model as configured, including any injected tensor, unchecked.
    pub fn model_spec_unchecked(&self) -> Result<ModelSpec> {
        let m = &self.model;
        let update = match (&m.rule, &m.update) {
            (Some(RulePreset::Sis) | None, None) => UpdateRule::sis(),
            (Some(RulePreset::Voter), None) => UpdateRule::voter(m.k)?,
            (None, Some(rows)) => UpdateRule::from_table(m.k, rows)?,
            _ => unreachable!("validated: exactly one of rule / update"),
        };
        let spec = ModelSpec::new(m.gamma.clone(), update)
            .map_err(|e| Error::config("model", e.to_string()))?;
        Ok(match &m.increments {
            Some(nested) => spec.with_increments_unchecked(
                IncrementTensor::from_nested(nested).map_err(|e| Error::config("model.increments", e.to_string()))?,
            ),
            None => spec,
        })
    }

    /// The model, rejected with the violated invariant named if it fails validation.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        let spec = self.model_spec_unchecked()?;
        validate_model(&spec)
            .into_result()
            .map_err(|e| Error::config("model.increments", e.to_string()))?;
        Ok(spec)
    }

    /// Field-level checks of every module precondition.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.k == 0 || m.k > MAX_STATES {
            return Err(Error::config("model.K", format!("must be in 1..={MAX_STATES}, got {}", m.k)));
        }
        if m.gamma.len() != m.k || m.gamma.iter().any(|r| r.len() != m.k) {
            return Err(Error::config("model.gamma", format!("must be a {0}x{0} array", m.k)));
        }
        for (i, row) in m.gamma.iter().enumerate() {
            for (j, &g) in row.iter().enumerate() {
                if !(g >= 0.0 && g.is_finite()) {
                    return Err(Error::config(
                        "model.gamma",
                        format!("gamma[{}][{}] = {g} must be a nonnegative finite rate", i + 1, j + 1),
                    ));
                }
            }
        }
        match (&m.rule, &m.update) {
            (Some(_), Some(_)) => return Err(Error::config("model.update", "give either `rule` or `update`, not both")),
            (Some(RulePreset::Sis) | None, None) if m.k != 2 => {
                return Err(Error::config("model.rule", format!("sis needs K = 2, got {}", m.k)))
            }
            (None, Some(rows)) => {
                UpdateRule::from_table(m.k, rows).map_err(|e| Error::config("model.update", e.to_string()))?;
            }
            _ => {}
        }
        if let Some(inc) = &m.increments {
            let ok = inc.len() == m.k && inc.iter().all(|r| r.len() == m.k && r.iter().all(|c| c.len() == m.k));
            if !ok {
                return Err(Error::config("model.increments", format!("must be a {0}x{0}x{0} array", m.k)));
            }
        }

        let g = &self.graph;
        let ns = self.sizes();
        if ns.is_empty() {
            return Err(Error::config("graph.N", "at least one N is required"));
        }
        if ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("graph.N", format!("list must be strictly increasing, got {ns:?}")));
        }
        for &n in &ns {
            if n == 0 || n % 2 != 0 {
                return Err(Error::config("graph.N", format!("N must be even and positive, got {n}")));
            }
            if g.d == 0 || g.d > n / 2 {
                return Err(Error::config("graph.d", format!("need 1 <= d <= N/2, got d = {} for N = {n}", g.d)));
            }
        }

        let r = &self.run;
        if !(r.horizon > 0.0 && r.horizon.is_finite()) {
            return Err(Error::config("run.T", format!("must be positive and finite, got {}", r.horizon)));
        }
        if r.initial.len() != m.k {
            return Err(Error::config("run.initial", format!("needs {} fractions, got {}", m.k, r.initial.len())));
        }
        if r.initial.iter().any(|&y| !(0.0..=1.0).contains(&y)) || (r.initial.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("run.initial", format!("{:?} is not a point of the simplex", r.initial)));
        }
        let seeds = self.seed_indices();
        if seeds.is_empty() {
            return Err(Error::config("run.seeds", "at least one seed is required"));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("run.seeds", "seed indices must be distinct"));
        }
        if r.snapshot_stride == Some(0) {
            return Err(Error::config("run.snapshot_stride", "must be positive"));
        }
        if r.workers == Some(0) {
            return Err(Error::config("run.workers", "must be positive"));
        }

        let step = self.fluid_step();
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::config("fluid.step", format!("must be positive, got {step}")));
        }
        let d = self.fluid_degree();
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::config("fluid.d", format!("must be positive, got {d}")));
        }

        let diag = &self.diagnostics;
        if let Some(&e) = diag.epsilon.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::config("diagnostics.epsilon", format!("thresholds must be positive, got {e}")));
        }
        if diag.trials == 0 {
            return Err(Error::config("diagnostics.trials", "must be positive"));
        }
        if !(diag.confidence > 0.0 && diag.confidence < 1.0) {
            return Err(Error::config("diagnostics.confidence", format!("must lie in (0, 1), got {}", diag.confidence)));
        }
        if let Some([a, b]) = diag.pair {
            if a == 0 || b == 0 || a > m.k || b > m.k {
                return Err(Error::config("diagnostics.pair", format!("states must lie in 1..={}", m.k)));
            }
        }
        for (i, case) in diag.poisson.iter().enumerate() {
            if !(case.alpha > 1.0) {
                return Err(Error::config(
                    format!("diagnostics.poisson[{i}].alpha"),
                    format!("alpha must exceed 1, got {}", case.alpha),
                ));
            }
            if case.n == 0 {
                return Err(Error::config(format!("diagnostics.poisson[{i}].N"), "must be positive"));
            }
        }
        Ok(())
    }
}

/// Applies `section.key=value` assignments to a parsed table. Values are read
/// as TOML (`2`, `0.5`, `[1, 2]`, `"x"`); anything that does not parse is a string.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (path, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::config(item.as_str(), "override must look like section.key=value"))?;
        let path = path.trim();
        let raw = raw.trim();
        let keys: Vec<&str> = path.split('.').collect();
        if keys.iter().any(|k| k.is_empty()) {
            return Err(Error::config(path, "empty key in override path"));
        }
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let (last, parents) = keys.split_last().expect("nonempty");
        let mut cursor = &mut *table;
        for key in parents {
            let entry = cursor
                .entry(key.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cursor = entry
                .as_table_mut()
                .ok_or_else(|| Error::config(path, format!("`{key}` is not a section")))?;
        }
        cursor.insert(last.to_string(), value);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::with_overrides(&[]).unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.sizes(), vec![100, 1000, 4000]);
        assert_eq!(c.seed_indices().len(), 50);
        assert_eq!(c.fluid_step(), 1e-2);
        assert_eq!(c.fluid_degree(), 2.0);
        assert_eq!(c.model_spec().unwrap(), ModelSpec::sis(1.0).unwrap());
    }

    #[test]
    fn round_trip() {
        let text = r#"
output_dir = "runs/a"

[model]
K = 3
gamma = [[0.0, 1.0, 0.5], [0.25, 0.0, 0.0], [0.0, 2.0, 0.0]]
update = [[1,1,1,1],[1,2,1,1],[1,3,1,3],[2,1,2,2],[2,2,2,2],[2,3,2,3],[3,1,3,1],[3,2,3,3],[3,3,3,3]]

[graph]
N = 64
d = 3
graph_seed = 11

[run]
T = 2.5
initial = [0.2, 0.3, 0.5]
seeds = [4, 9, 1]
base_seed = 77
shuffle_on = "state_change"
snapshot_stride = 3
workers = 2

[fluid]
step = 0.001
d = 3.0

[diagnostics]
epsilon = [0.1]
trials = 20000
confidence = 0.95
pair = [1, 2]

[[diagnostics.poisson]]
N = 50
alpha = 1.25
"#;
        let a = ExperimentConfig::from_toml_str(text, &[]).unwrap();
        let b = ExperimentConfig::from_toml_str(&a.to_toml_string().unwrap(), &[]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.config_hash().unwrap(), b.config_hash().unwrap());
        assert_eq!(a.sizes(), vec![64]);
        assert_eq!(a.seed_indices(), vec![4, 9, 1]);
        assert_eq!(a.pair(), Some((0, 1)));
        let d = ExperimentConfig::default();
        let e = ExperimentConfig::from_toml_str(&d.to_toml_string().unwrap(), &[]).unwrap();
        assert_eq!(d, e);
    }

    #[test]
    fn overrides() {
        let c = ExperimentConfig::with_overrides(&[
            "graph.N=[20, 40]".into(),
            "run.T=3".into(),
            "run.shuffle_on=state_change".into(),
            "output_dir=elsewhere".into(),
        ])
        .unwrap();
        assert_eq!(c.sizes(), vec![20, 40]);
        assert_eq!(c.run.horizon, 3.0);
        assert_eq!(c.run.shuffle_on, ShuffleOn::StateChange);
        assert_eq!(c.output_dir, Some(PathBuf::from("elsewhere")));
        assert!(ExperimentConfig::with_overrides(&["run.T".into()]).is_err());
        assert!(ExperimentConfig::with_overrides(&["run.T.x=1".into()]).is_err());
    }

    fn field_of(r: Result<ExperimentConfig>) -> String {
        match r {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn field_level_errors() {
        let f = |s: &str| field_of(ExperimentConfig::with_overrides(&[s.to_string()]));
        assert_eq!(f("graph.N=[100, 50]"), "graph.N");
        assert_eq!(f("graph.N=7"), "graph.N");
        assert_eq!(f("graph.d=60"), "graph.d");
        assert_eq!(f("run.T=0"), "run.T");
        assert_eq!(f("run.initial=[0.5, 0.6]"), "run.initial");
        assert_eq!(f("run.seeds=[1, 1]"), "run.seeds");
        assert_eq!(f("model.gamma=[[0.0, -1.0], [0.0, 0.0]]"), "model.gamma");
        assert_eq!(f("diagnostics.confidence=1.5"), "diagnostics.confidence");
        assert_eq!(f("diagnostics.poisson=[{N = 100, alpha = 1.0}]"), "diagnostics.poisson[0].alpha");
        assert_eq!(f("run.bogus=1"), "config");
    }

    #[test]
    fn injected_tensor_names_the_invariant() {
        let c = ExperimentConfig::with_overrides(&["model.increments=[[[1, -1], [1, -1]], [[0, 0], [0, 0]]]".into()])
            .unwrap();
        let err = c.model_spec().unwrap_err().to_string();
        assert!(err.contains("c_kk(k) <= 0"), "{err}");
        assert!(c.model_spec_unchecked().is_ok());
    }
}
