//! TOML run configuration.
//!
//! ```toml
//! scenario = "born_measurement"
//! n = 10000
//! seed = 42
//! dt = 0.01            # optional
//! out = "runs/born"    # optional
//! plots = true
//!
//! [model]
//! collapse_comparator = true
//! coeff_convention = "bare"
//! weights = [0.2, 0.8]
//!
//! [grid.z]             # per-subsystem grid override (1-D subsystems)
//! n = 1024
//! min = -32.0
//! max = 32.0
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pilotwave::scenarios::{lookup, AxisSpec, ScenarioOptions, ScenarioSpec};
use serde::Deserialize;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<String>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub plots: bool,
    #[serde(default)]
    pub model: ScenarioOptions,
    #[serde(default)]
    pub grid: BTreeMap<String, AxisSpec>,
}

impl RunConfig {
    /// Parses a TOML document; errors name the offending field path.
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| anyhow::anyhow!("{e}"))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("at `{path}`: {}", e.into_inner().message().trim())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Builds the scenario with every override applied and checks it.
    pub fn spec(&self) -> Result<ScenarioSpec> {
        let Some(name) = &self.scenario else {
            bail!("no scenario given");
        };
        let mut spec = lookup(name, &self.model)?;
        if let Some(n) = self.n {
            spec.n = n;
        }
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(dt) = self.dt {
            spec.dt = dt;
        }
        for (sub, axis) in &self.grid {
            spec.override_grid(sub, vec![axis.clone()])?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_document_parses() {
        let c = RunConfig::parse(
            r#"
            # comment
            scenario = "born_measurement"
            n = 50
            seed = 9
            plots = true
            [model]
            coeff_convention = "bare"
            weights = [0.5, 0.5]
            [grid.z]
            n = 1024
            min = -32.0
            max = 32.0
            "#,
        )
        .unwrap();
        let spec = c.spec().unwrap();
        assert_eq!((spec.n, spec.seed), (50, 9));
        assert_eq!(spec.subsystem("z").unwrap().axes[0].n, 1024);
        assert_eq!(spec.branches[0].weight, 0.5);
    }

    #[test]
    fn wrong_type_names_the_field() {
        let e = RunConfig::parse("n = \"many\"").unwrap_err().to_string();
        assert!(e.contains("`n`"), "{e}");
        let e = RunConfig::parse("[grid.z]\nn = 16\nmin = \"low\"\nmax = 1.0").unwrap_err().to_string();
        assert!(e.contains("grid.z.min"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("scenery = \"x\"").is_err());
        assert!(RunConfig::parse("[model]\ncollapse = true").is_err());
    }

    #[test]
    fn overrides_are_checked_against_the_scenario() {
        let c = RunConfig::parse("scenario = \"born_measurement\"\n[grid.q]\nn = 8\nmin = 0.0\nmax = 1.0").unwrap();
        assert!(c.spec().is_err());
        let c = RunConfig::parse("scenario = \"born_measurement\"\ndt = -0.1").unwrap();
        assert!(c.spec().is_err());
        let c = RunConfig::parse("scenario = \"nope\"").unwrap();
        assert!(c.spec().is_err());
    }
}
