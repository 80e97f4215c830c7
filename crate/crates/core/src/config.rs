use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every tunable of training and filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// LCS match fraction for block verification and line matching.
    pub alpha: f64,
    /// Mode frequency fraction that makes an alignment column constant.
    pub beta: f64,
    /// Token shingle width.
    pub shingle_n: usize,
    pub num_permutations: usize,
    /// LSH Jaccard similarity threshold.
    pub jaccard_threshold: f64,
    /// Occurrences above which an unmatched pattern is suppressed.
    pub gamma: u64,
    /// Share of training lines the selected patterns must cover.
    pub coverage_fraction: f64,
    /// Share of training files that forces a pattern into the model.
    pub file_presence_fraction: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            alpha: 0.65,
            beta: 0.7,
            shingle_n: 2,
            num_permutations: 100,
            jaccard_threshold: 0.75,
            gamma: 250,
            coverage_fraction: 0.98,
            file_presence_fraction: 0.70,
            max_iterations: 10,
            seed: 0,
        }
    }
}

fn fraction(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be in (0, 1], got {v}")))
    }
}

fn count(name: &str, v: u64) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be at least 1")))
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        fraction("alpha", self.alpha)?;
        fraction("beta", self.beta)?;
        fraction("jaccard_threshold", self.jaccard_threshold)?;
        fraction("coverage_fraction", self.coverage_fraction)?;
        fraction("file_presence_fraction", self.file_presence_fraction)?;
        count("shingle_n", self.shingle_n as u64)?;
        count("num_permutations", self.num_permutations as u64)?;
        count("gamma", self.gamma)?;
        count("max_iterations", self.max_iterations as u64)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Config> {
        let cfg: Config =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
