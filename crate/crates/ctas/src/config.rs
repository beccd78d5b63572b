//! TOML model and simulation files.
//!
//! ```toml
//! [model]
//! states = 2
//! period = 365.0
//! partition_length = 30.0
//! seasonal = true
//! # covariate = "sex"
//!
//! # Optional explicit links; all ordered pairs by default.
//! # [[model.links]]
//! # from = 1
//! # to = 2
//! # seasonal = true
//! # by_covariate = false
//!
//! [model.mortality]
//! per_state = false
//! covariate_effect = false
//!
//! # Natural-scale starting values by parameter name.
//! [init]
//! "q1_2.intercept" = -5.0
//! ```
//!
//! A simulation file adds a `[simulation]` table and a complete `[truth]`
//! table of natural-scale values.

use std::collections::BTreeMap;
use std::path::Path;

use ctas_core::model::{
    ModelConfig, ModelSpec, MortalityLink, ParamVector, TransitionLink, DEFAULT_PARTITION_LENGTH,
    DEFAULT_PERIOD,
};
use ctas_core::simulate::{EntryRule, SimConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub from: usize,
    pub to: usize,
    #[serde(default = "yes")]
    pub seasonal: bool,
    #[serde(default)]
    pub by_covariate: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MortalitySection {
    #[serde(default)]
    pub per_state: bool,
    #[serde(default)]
    pub covariate_effect: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub states: usize,
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default = "default_length")]
    pub partition_length: f64,
    /// Seasonal terms on the default all-pairs links.
    #[serde(default = "yes")]
    pub seasonal: bool,
    #[serde(default)]
    pub covariate: Option<String>,
    #[serde(default)]
    pub links: Option<Vec<LinkSection>>,
    #[serde(default)]
    pub mortality: MortalitySection,
}

fn yes() -> bool {
    true
}

fn default_period() -> f64 {
    DEFAULT_PERIOD
}

fn default_length() -> f64 {
    DEFAULT_PARTITION_LENGTH
}

impl ModelSection {
    pub fn config(&self, study_span: f64) -> ModelConfig {
        let base = if self.seasonal {
            ModelConfig::seasonal(self.states, study_span)
        } else {
            ModelConfig::homogeneous(self.states, study_span)
        };
        let links = match &self.links {
            Some(ls) => ls
                .iter()
                .map(|l| TransitionLink {
                    from: l.from,
                    to: l.to,
                    seasonal: l.seasonal,
                    by_covariate: l.by_covariate,
                })
                .collect(),
            None => base
                .links
                .iter()
                .map(|l| TransitionLink {
                    by_covariate: self.covariate.is_some(),
                    ..*l
                })
                .collect(),
        };
        ModelConfig {
            period: self.period,
            partition_length: self.partition_length,
            covariate: self.covariate.clone(),
            links,
            mortality: MortalityLink {
                per_state: self.mortality.per_state,
                covariate_effect: self.mortality.covariate_effect,
            },
            ..base
        }
    }

    pub fn spec(&self, study_span: f64) -> ctas_core::Result<ModelSpec> {
        ModelSpec::new(self.config(study_span))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub model: ModelSection,
    #[serde(default)]
    pub init: BTreeMap<String, f64>,
}

impl ModelFile {
    /// Default starting values overridden by the `[init]` table.
    pub fn init(&self, spec: &ModelSpec) -> ctas_core::Result<ParamVector> {
        spec.with_natural_values(
            &spec.default_init(),
            self.init.iter().map(|(k, v)| (k.as_str(), *v)),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Entry {
    #[default]
    AtStart,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub n: usize,
    pub span_days: f64,
    /// Mean day gap between occasions, one per area.
    pub occasion_means: Vec<f64>,
    #[serde(default)]
    pub entry: Entry,
    #[serde(default = "half")]
    pub level_one_share: f64,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimFile {
    pub simulation: SimulationSection,
    pub model: ModelSection,
    pub truth: BTreeMap<String, f64>,
}

impl SimFile {
    pub fn spec(&self) -> ctas_core::Result<ModelSpec> {
        self.model.spec(self.simulation.span_days)
    }

    /// Truth on the working scale; every parameter must be named exactly once.
    pub fn truth(&self, spec: &ModelSpec) -> ctas_core::Result<ParamVector> {
        let names = spec.param_names();
        let missing: Vec<&str> = names
            .iter()
            .copied()
            .filter(|n| !self.truth.contains_key(*n))
            .collect();
        if !missing.is_empty() {
            return Err(ctas_core::Error::InvalidInput(format!(
                "truth is missing {}",
                missing.join(", ")
            )));
        }
        if let Some(extra) = self.truth.keys().find(|k| !names.contains(&k.as_str())) {
            return Err(ctas_core::Error::InvalidInput(format!(
                "truth names unknown parameter `{extra}`"
            )));
        }
        let natural: Vec<f64> = names.iter().map(|n| self.truth[*n]).collect();
        spec.from_natural(&natural)
    }

    pub fn sim_config(&self, seed: u64) -> ctas_core::Result<SimConfig> {
        let spec = self.spec()?;
        let truth = self.truth(&spec)?;
        let s = &self.simulation;
        let config = SimConfig {
            n: s.n,
            span_days: s.span_days,
            spec,
            truth,
            occasion_means: s.occasion_means.clone(),
            seed,
            entry: match s.entry {
                Entry::AtStart => EntryRule::AtStart,
                Entry::Uniform => EntryRule::Uniform,
            },
            level_one_share: s.level_one_share,
        };
        config.validate()?;
        Ok(config)
    }
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config {
        path: path.into(),
        message: e.to_string(),
    })
}

pub fn read_model_file(path: &Path) -> Result<ModelFile> {
    read_toml(path)
}

pub fn read_sim_file(path: &Path) -> Result<SimFile> {
    read_toml(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIM: &str = r#"
[simulation]
n = 200
span_days = 3646
occasion_means = [10, 14]

[model]
states = 2

[truth]
"q1_2.intercept" = -6.5
"q1_2.sin" = -0.7
"q1_2.cos" = -0.2
"q2_1.intercept" = -7.0
"q2_1.sin" = 0.7
"q2_1.cos" = -0.4
"death.intercept" = -9.0
p1 = 0.4
p2 = 0.2
"#;

    #[test]
    fn seasonal_truth_file() {
        let f: SimFile = toml::from_str(SIM).unwrap();
        let c = f.sim_config(1).unwrap();
        assert_eq!(c.spec.n_params(), 9);
        assert_eq!(c.spec.partition().length(), 30.0);
        let natural: Vec<f64> = c
            .spec
            .natural_parameters(&c.truth)
            .iter()
            .map(|p| p.value)
            .collect();
        assert!((natural[7] - 0.4).abs() < 1e-15);
        assert_eq!(natural[6], -9.0);
    }

    #[test]
    fn validation_messages() {
        let mut f: SimFile = toml::from_str(SIM).unwrap();
        f.simulation.n = 0;
        assert!(f.sim_config(1).unwrap_err().to_string().contains("n must"));
        let mut f: SimFile = toml::from_str(SIM).unwrap();
        f.truth.remove("p2");
        assert!(f.sim_config(1).unwrap_err().to_string().contains("p2"));
        assert!(toml::from_str::<SimFile>(&SIM.replace("states", "stats")).is_err());
    }

    #[test]
    fn covariate_and_init() {
        let f: ModelFile = toml::from_str(
            "[model]\nstates = 2\nseasonal = false\ncovariate = \"sex\"\n[model.mortality]\ncovariate_effect = true\n[init]\np1 = 0.3\n",
        )
        .unwrap();
        let spec = f.model.spec(100.0).unwrap();
        assert_eq!(spec.n_levels(), 2);
        assert!(spec.index_of("death.sex").is_some());
        let init = f.init(&spec).unwrap();
        let p1 = spec.index_of("p1").unwrap();
        assert!((spec.natural_parameters(&init)[p1].value - 0.3).abs() < 1e-15);
        let bad: ModelFile = toml::from_str("[model]\nstates = 2\n[init]\nq9_9 = 1.0\n").unwrap();
        assert!(bad.init(&bad.model.spec(10.0).unwrap()).is_err());
    }
}
