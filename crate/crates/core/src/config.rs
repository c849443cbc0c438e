//! Whole-pipeline configuration: one TOML file with a section per module.
//! Any value can be overridden with a dotted `section.key=value` assignment.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::expert::ExpertGains;
use crate::labeling::WeightNormalizer;
use crate::observe::SensorConfig;
use crate::policy::{PolicyConfig, TrainConfig};
use crate::sim::SimConfig;
use crate::tactile::ExtractionParams;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelingConfig {
    pub normalizer: WeightNormalizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Trials per preset.
    pub trials: usize,
    pub seed: u64,
    /// Step budget as a multiple of the expert's mean episode length.
    pub budget_factor: f64,
    /// Expert rollouts used to estimate that mean.
    pub expert_runs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            trials: 10,
            seed: 1,
            budget_factor: 4.0,
            expert_runs: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub sensors: SensorConfig,
    pub extraction: ExtractionParams,
    pub labeling: LabelingConfig,
    pub expert: ExpertGains,
    pub policy: PolicyConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    fn to_table(&self) -> Result<toml::Table> {
        toml::Table::try_from(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Applies `section.key=value` assignments; the key must already exist.
    pub fn with_overrides<S: AsRef<str>>(&self, assignments: &[S]) -> Result<Self> {
        let mut table = self.to_table()?;
        for a in assignments {
            let a = a.as_ref();
            let (key, raw) = a
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override '{a}' is not key=value")))?;
            let (key, raw) = (key.trim(), raw.trim());
            let parts: Vec<&str> = key.split('.').collect();
            let (last, path) = parts.split_last().expect("split yields at least one part");
            let mut node = &mut table;
            for p in path {
                node = node
                    .get_mut(*p)
                    .and_then(|v| v.as_table_mut())
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown config key '{key}'")))?;
            }
            let slot = node
                .get_mut(*last)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown config key '{key}'")))?;
            *slot = parse_value(raw);
        }
        let out: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.extraction.validate()?;
        self.expert.validate()?;
        self.policy.validate()?;
        self.train.validate()?;
        if self.policy.visual_resolution != self.sensors.visual_resolution
            || self.policy.tactile_height != self.sensors.tactile_height
            || self.policy.tactile_width != self.sensors.tactile_width
        {
            return Err(Error::InvalidConfig("policy input sizes must match the sensor config".into()));
        }
        if !(self.eval.budget_factor > 0.0) || self.eval.expert_runs == 0 {
            return Err(Error::InvalidConfig("eval budget factor and expert runs must be positive".into()));
        }
        Ok(())
    }

    /// Every dotted key with its default value, in file order.
    pub fn keys(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        flatten("", &self.to_table()?, &mut out);
        Ok(out)
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, String)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.to_string())),
        }
    }
}
