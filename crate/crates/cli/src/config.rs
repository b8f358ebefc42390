//! Run configuration: one JSON file, overridden by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zgs::evaluate::PipelineConfig;
use zgs::io::read_json;
use zgs::synthzoo::SynthConfig;
use zgs::{Error, Real, Result};

/// Training-history ratios used by `ablate` when none are given.
pub const DEFAULT_RATIOS: [Real; 4] = [0.3, 0.5, 0.7, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Zoo registry directory.
    pub zoo: Option<PathBuf>,
    /// Artifact directory; defaults to the zoo directory.
    pub out: Option<PathBuf>,
    /// Pipeline used by every stage.
    pub pipeline: PipelineConfig,
    /// Additional pipelines compared by `evaluate`.
    pub compare: Vec<PipelineConfig>,
    pub ratios: Vec<Real>,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            zoo: None,
            out: None,
            pipeline: PipelineConfig::default(),
            compare: Vec::new(),
            ratios: DEFAULT_RATIOS.to_vec(),
            synth: SynthConfig::default(),
        }
    }
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub zoo: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub ratios: Vec<Real>,
}

impl RunConfig {
    /// Reads `path` (or starts from defaults), applies `o`, and validates.
    pub fn load(path: Option<&Path>, o: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => read_json::<RunConfig>(p).map_err(|e| match e {
                Error::Json(j) => Error::InvalidConfig(format!("{}: {j}", p.display())),
                other => other,
            })?,
            None => RunConfig::default(),
        };
        if o.zoo.is_some() {
            cfg.zoo.clone_from(&o.zoo);
        }
        if o.out.is_some() {
            cfg.out.clone_from(&o.out);
        }
        if let Some(seed) = o.seed {
            cfg.pipeline.seed = seed;
            cfg.compare.iter_mut().for_each(|c| c.seed = seed);
            cfg.synth.seed = seed;
        }
        if !o.ratios.is_empty() {
            cfg.ratios.clone_from(&o.ratios);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        for c in &self.compare {
            c.validate()?;
        }
        self.synth.validate()?;
        if self.ratios.is_empty() {
            return Err(Error::InvalidConfig("ratios must not be empty".into()));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::InvalidConfig(format!("ratio {r} outside (0,1]")));
        }
        Ok(())
    }

    pub fn zoo_dir(&self) -> Result<&Path> {
        self.zoo
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("no zoo directory (use --zoo)".into()))
    }

    pub fn out_dir(&self) -> Result<&Path> {
        match &self.out {
            Some(p) => Ok(p),
            None => self.zoo_dir(),
        }
    }

    /// The main pipeline followed by the `compare` list.
    pub fn all_pipelines(&self) -> Vec<PipelineConfig> {
        std::iter::once(self.pipeline.clone()).chain(self.compare.iter().cloned()).collect()
    }
}
