//! Config documents. TOML by default, JSON when the file ends in `.json`.

use std::path::{Path, PathBuf};

use biharm_core::experiments::{FujitaConfig, LifespanConfig, OmegaConfig, PhaseConfig, DEFAULT_SEED};
use biharm_core::solver::ProblemSpec;
use biharm_core::BoundaryCondition;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub jobs: usize,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { jobs: std::thread::available_parallelism().map_or(1, |n| n.get()), seed: DEFAULT_SEED }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub run: RunSection,
    /// Keys laid over [`default_problem`].
    pub problem: Map<String, Value>,
    pub phase: PhaseConfig,
    pub omega: OmegaConfig,
    pub fujita: FujitaConfig,
    pub lifespan: LifespanConfig,
}

pub fn default_problem() -> ProblemSpec<f64> {
    ProblemSpec::new(3, 2.0, BoundaryCondition::Navier, 30.0, 232)
}

fn deserialize<T: serde::de::DeserializeOwned>(value: Value, prefix: &str) -> Result<T, String> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let key = match (prefix.is_empty(), path.as_str()) {
            (true, _) => path.clone(),
            (false, ".") => prefix.to_string(),
            (false, _) => format!("{prefix}.{path}"),
        };
        format!("config key `{key}`: {}", e.into_inner())
    })
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let value: Value = if path.extension().is_some_and(|x| x == "json") {
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        } else {
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        };
        deserialize(value, "")
    }

    pub fn load_or_default(path: Option<&PathBuf>) -> Result<Self, String> {
        path.map_or_else(|| Ok(Self::default()), |p| Self::load(p))
    }

    pub fn problem(&self) -> Result<ProblemSpec<f64>, String> {
        let mut base = serde_json::to_value(default_problem()).map_err(|e| e.to_string())?;
        let obj = base.as_object_mut().expect("spec serializes to an object");
        for (k, v) in &self.problem {
            obj.insert(k.clone(), v.clone());
        }
        deserialize(base, "problem")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config, String> {
        deserialize(toml::from_str::<Value>(text).unwrap(), "")
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let err = parse("[phase]\ndimm = 3\n").unwrap_err();
        assert!(err.contains("phase.dimm") || err.contains("`phase`"), "{err}");
        let cfg = parse("[problem]\nbogus = 1\n").unwrap();
        let err = cfg.problem().unwrap_err();
        assert!(err.contains("problem"), "{err}");
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn problem_overlay_keeps_defaults() {
        let cfg = parse("[problem]\ndim = 6\np = 4\n[problem.forcing]\nkind = \"bump\"\ncoeff = 1.0\ncenter = 2.0\nwidth = 1.0\n").unwrap();
        let spec = cfg.problem().unwrap();
        assert_eq!((spec.dim, spec.p, spec.cells), (6, 4.0, 232));
        assert!(!spec.forcing.is_zero());
    }
}
