//! Run configuration file. Command-line flags override file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sfde_core::forward::{SimConfig, SourceSpec, SpatialDomain};
use sfde_core::inverse::BetaVariant;
use sfde_core::{Error, Result};

fn default_gamma() -> f64 {
    0.5
}

fn default_epsilon() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseSection {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Variance perturbation used by the instability table.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Modes used by the reconstruction; by default the modes whose
    /// variance is resolved above twice its standard error.
    #[serde(default)]
    pub k_cut: Option<usize>,
    #[serde(default)]
    pub beta_variant: BetaVariant,
}

impl Default for InverseSection {
    fn default() -> Self {
        InverseSection {
            gamma: default_gamma(),
            epsilon: default_epsilon(),
            k_cut: None,
            beta_variant: BetaVariant::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Output directory, relative to the working directory.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads; 0 or absent uses all cores.
    #[serde(default)]
    pub threads: Option<usize>,
    pub simulation: SimConfig,
    pub domain: SpatialDomain,
    pub source: SourceSpec,
    #[serde(default)]
    pub inverse: InverseSection,
}

/// Flag values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub gamma: Option<f64>,
    pub k_cut: Option<usize>,
    pub beta_variant: Option<BetaVariant>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path, ov: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.apply(ov);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(s) = ov.seed {
            self.simulation.seed = s;
        }
        if let Some(t) = ov.threads {
            self.threads = Some(t);
        }
        if let Some(d) = &ov.out_dir {
            self.out_dir = Some(d.clone());
        }
        if let Some(g) = ov.gamma {
            self.inverse.gamma = g;
        }
        if let Some(k) = ov.k_cut {
            self.inverse.k_cut = Some(k);
        }
        if let Some(v) = ov.beta_variant {
            self.inverse.beta_variant = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.simulation.validate()?;
        self.source.validate(self.simulation.t_end, self.simulation.modes)?;
        let g = self.inverse.gamma;
        if !(g > 0.0 && g < 1.0) {
            return Err(Error::Config(format!("gamma = {g} must lie in (0, 1)")));
        }
        if let Some(k) = self.inverse.k_cut {
            if k == 0 || k > self.simulation.modes {
                return Err(Error::Config(format!(
                    "k_cut = {k} must lie in 1..={}",
                    self.simulation.modes
                )));
            }
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// SHA-256 of everything that affects results; thread count and output
    /// location are excluded so they cannot change the bytes written.
    pub fn hash(&self) -> String {
        let view = serde_json::json!({
            "simulation": self.simulation,
            "domain": self.domain,
            "source": self.source,
            "inverse": self.inverse,
        });
        let digest = Sha256::digest(view.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// First line of every output file.
    pub fn header(&self) -> String {
        format!("seed={},config_hash={}", self.simulation.seed, self.hash())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[simulation]
alpha = 0.8
hurst = 0.6
t_end = 1.0
modes = 4
paths = 100
seed = 1

[domain]
kind = "interval"
length = 1.0

[source]
f = [1.0, 0.5]
g = [1.0, -0.5]
c_h = 1.0
h = { kind = "constant", value = 1.0 }
"#;

    #[test]
    fn parses_and_defaults() {
        let c = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.simulation.steps, 512);
        assert_eq!(c.inverse.gamma, 0.5);
        c.validate().unwrap();
    }

    #[test]
    fn hash_ignores_threads_and_out_dir() {
        let a = RunConfig::parse(SAMPLE).unwrap();
        let mut b = a.clone();
        b.apply(&Overrides {
            threads: Some(7),
            out_dir: Some("elsewhere".into()),
            ..Default::default()
        });
        assert_eq!(a.hash(), b.hash());
        b.apply(&Overrides {
            seed: Some(2),
            ..Default::default()
        });
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn missing_lower_bound_is_a_config_error() {
        let text = SAMPLE.replace("c_h = 1.0\n", "");
        assert!(matches!(RunConfig::parse(&text), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = SAMPLE.replace("seed = 1", "seed = 1\nsed = 2");
        assert!(RunConfig::parse(&text).is_err());
    }
}
