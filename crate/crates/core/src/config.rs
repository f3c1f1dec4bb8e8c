//! Run configuration: a sectioned TOML document validated against the schema
//! below. Unknown keys are rejected so typos fail loudly. The full config is
//! embedded in every checkpoint for reproducibility.

use crate::backbone::BackboneConfig;
use crate::dataio::ClassMapping;
use crate::error::{Error, Result};
use crate::grabcut::GrabCutConfig;
use crate::texture::TextureConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub momentum: f64,
    pub iterations: usize,
    pub alpha: f64,
    pub lambda_par: f64,
    pub way: usize,
    pub shot: usize,
    pub seed: u64,
    /// Checkpoint interval in iterations (a final checkpoint is always written).
    pub checkpoint_every: usize,
    /// Required when `backbone.pretrained` is set: initial weights.
    pub init_checkpoint: Option<PathBuf>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            iterations: 30_000,
            alpha: 20.0,
            lambda_par: 1.0,
            way: 1,
            shot: 1,
            seed: 42,
            checkpoint_every: 1000,
            init_checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub episodes: usize,
    pub seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            episodes: 1000,
            seed: 7,
        }
    }
}

/// Which ablation row of the method runs: support-to-query always, the
/// reverse direction and texture attention per flag.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub use_q2s: bool,
    pub ta_in_s2q: bool,
    pub ta_in_q2s: bool,
    pub use_grabcut: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        // The proposed configuration: texture attention in the forward
        // direction only, alignment regularization on, refined masks.
        Self {
            use_q2s: true,
            ta_in_s2q: true,
            ta_in_q2s: false,
            use_grabcut: true,
        }
    }
}

impl AblationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ta_in_q2s && !self.use_q2s {
            return Err(Error::Config(
                "ta_in_q2s requires use_q2s (no reverse direction to attend in)".into(),
            ));
        }
        Ok(())
    }

    /// Row label in the convention of the ablation tables.
    pub fn label(&self) -> String {
        let mut s = String::from("S2Q");
        if self.ta_in_s2q {
            s.push_str("-TA");
        }
        if self.use_q2s {
            s.push_str("+Q2S");
            if self.ta_in_q2s {
                s.push_str("-TA");
            }
        }
        if !self.use_grabcut {
            s.push_str(" (raw masks)");
        }
        s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MappingSection {
    pub name: String,
    /// Episode class names; index 0 must be Background.
    pub classes: Vec<String>,
    /// Source label -> episode class index (keys are decimal strings).
    pub entries: BTreeMap<String, u8>,
}

impl Default for MappingSection {
    fn default() -> Self {
        Self {
            name: "identity".into(),
            classes: vec!["Background".into(), "Forest".into()],
            entries: BTreeMap::from([("0".into(), 0), ("1".into(), 1)]),
        }
    }
}

impl MappingSection {
    pub fn to_mapping(&self) -> Result<ClassMapping> {
        let mut entries = Vec::new();
        for (k, v) in &self.entries {
            let source: u8 = k
                .parse()
                .map_err(|_| Error::Config(format!("mapping key {k:?} is not a label")))?;
            entries.push((source, *v));
        }
        ClassMapping::new(&self.name, entries, self.classes.clone())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub data_root: PathBuf,
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
    /// Side length tiles are resized to before entering the model.
    pub resize: usize,
    /// Tile side cut from source rasters during preparation.
    pub tile_size: usize,
    /// Color table CSV for color-coded masks (pre-remap datasets).
    pub color_table: Option<PathBuf>,
    /// Episode class that receives texture attention.
    pub texture_class: u8,
    /// Normalize the foreground prototype by the attention sum instead of
    /// the mask sum.
    pub normalize_by_attention: bool,
    pub mapping: MappingSection,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            data_root: PathBuf::from("."),
            train_manifest: PathBuf::from("train.csv"),
            test_manifest: PathBuf::from("test.csv"),
            resize: 128,
            tile_size: 612,
            color_table: None,
            texture_class: 1,
            normalize_by_attention: false,
            mapping: MappingSection::default(),
        }
    }
}

/// The complete run configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub train: TrainSection,
    pub eval: EvalSection,
    pub ablation: AblationConfig,
    pub backbone: BackboneConfig,
    pub texture: TextureConfig,
    pub grabcut: GrabCutConfig,
    pub data: DataSection,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.train.way == 0 || self.train.shot == 0 {
            return Err(Error::Config("way and shot must be >= 1".into()));
        }
        if self.train.alpha <= 0.0 {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if self.train.lambda_par < 0.0 {
            return Err(Error::Config("lambda_par must be >= 0".into()));
        }
        if self.train.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.train.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.data.resize == 0 || self.data.tile_size == 0 {
            return Err(Error::Config("resize and tile_size must be positive".into()));
        }
        if self.backbone.pretrained && self.train.init_checkpoint.is_none() {
            return Err(Error::Config(
                "backbone.pretrained requires train.init_checkpoint".into(),
            ));
        }
        self.ablation.validate()?;
        self.backbone.validate()?;
        self.texture.validate()?;
        let mapping = self.data.mapping.to_mapping()?;
        if mapping.way() != self.train.way {
            return Err(Error::Config(format!(
                "mapping declares {} foreground classes but way = {}",
                mapping.way(),
                self.train.way
            )));
        }
        if self.data.texture_class == 0 || self.data.texture_class as usize > self.train.way {
            return Err(Error::Config(format!(
                "texture_class {} is not a foreground class",
                self.data.texture_class
            )));
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
