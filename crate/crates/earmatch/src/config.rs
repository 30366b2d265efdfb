//! Flat `key = value` configuration with command-line overrides.
//!
//! Lines starting with `#` and blank lines are ignored. Every key is
//! optional; commands check the ones they need.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use earmatch_core::dataset::{AugmentConfig, FlipAxis};
use earmatch_core::matcher::Side;
use earmatch_core::mesh::{EarRegion, Vec3};
use earmatch_core::net::{
    canonical_specs, reduced_specs, LayerSpec, TrainConfig, CANONICAL_INPUT, REDUCED_INPUT,
};

use crate::corpus::LoadOptions;
use crate::fsutil::read_text;
use crate::render::RenderSettings;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Architecture {
    #[default]
    Canonical,
    Reduced,
}

impl Architecture {
    pub fn input(&self) -> [usize; 3] {
        match self {
            Architecture::Canonical => CANONICAL_INPUT,
            Architecture::Reduced => REDUCED_INPUT,
        }
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        match self {
            Architecture::Canonical => canonical_specs(),
            Architecture::Reduced => reduced_specs(),
        }
    }
}

/// Where conversion factors come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FactorSource {
    /// The built-in published table.
    Preset,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub corpus_images: Option<PathBuf>,
    pub corpus_landmarks: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub factors: Option<FactorSource>,
    pub database: Option<PathBuf>,
    pub mesh_dir: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub train: TrainConfig,
    pub architecture: Architecture,
    pub augment: bool,
    pub limit: Option<usize>,
    pub augmentation: AugmentConfig,
    pub load: LoadOptions,
    pub render: RenderSettings,
    pub side_filter: Option<Side>,
    pub top_k: usize,
    pub pck_px: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            corpus_images: None,
            corpus_landmarks: None,
            model: None,
            factors: None,
            database: None,
            mesh_dir: None,
            annotations: None,
            train: TrainConfig::default(),
            architecture: Architecture::default(),
            augment: false,
            limit: None,
            augmentation: AugmentConfig::default(),
            load: LoadOptions::default(),
            render: RenderSettings::default(),
            side_filter: None,
            top_k: 5,
            pck_px: 10.0,
        }
    }
}

/// Keys accepted by [`PipelineConfig::set`].
pub const KEYS: &[&str] = &[
    "corpus_images",
    "corpus_landmarks",
    "model",
    "factors",
    "database",
    "mesh_dir",
    "annotations",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "decay",
    "epochs",
    "batch_size",
    "shuffle",
    "seed",
    "refresh_batch_norm",
    "architecture",
    "augment",
    "limit",
    "augment_angle_deg",
    "flip_axis",
    "reframe_margin",
    "zoom",
    "fov_y_deg",
    "light_direction",
    "ear_region",
    "side_filter",
    "top_k",
    "pck_px",
];

fn bad(key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("{key} = {value:?}: expected {what}"))
}

fn num<T: FromStr>(key: &str, value: &str, what: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value, what))
}

fn finite(key: &str, value: &str) -> Result<f64> {
    num::<f64>(key, value, "a number").and_then(|v| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(bad(key, value, "a finite number"))
        }
    })
}

fn positive(key: &str, value: &str) -> Result<f64> {
    finite(key, value).and_then(|v| {
        if v > 0.0 {
            Ok(v)
        } else {
            Err(bad(key, value, "a positive number"))
        }
    })
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(bad(key, value, "true or false")),
    }
}

fn floats<const N: usize>(key: &str, value: &str) -> Result<[f64; N]> {
    let parts: Vec<f64> = value
        .split(',')
        .map(|s| finite(key, s.trim()))
        .collect::<Result<_>>()?;
    parts
        .try_into()
        .map_err(|_| bad(key, value, &format!("{N} comma-separated numbers")))
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "corpus_images" => self.corpus_images = optional_path(value),
            "corpus_landmarks" => self.corpus_landmarks = optional_path(value),
            "model" => self.model = optional_path(value),
            "factors" => {
                self.factors = match value {
                    "" => None,
                    "preset" => Some(FactorSource::Preset),
                    path => Some(FactorSource::File(path.into())),
                }
            }
            "database" => self.database = optional_path(value),
            "mesh_dir" => self.mesh_dir = optional_path(value),
            "annotations" => self.annotations = optional_path(value),
            "learning_rate" => self.train.learning_rate = finite(key, value)?,
            "beta1" => self.train.beta1 = finite(key, value)?,
            "beta2" => self.train.beta2 = finite(key, value)?,
            "epsilon" => self.train.epsilon = positive(key, value)?,
            "decay" => self.train.decay = finite(key, value)?,
            "epochs" => self.train.epochs = num(key, value, "a non-negative integer")?,
            "batch_size" => {
                self.train.batch_size = num(key, value, "a positive integer")?;
                if self.train.batch_size == 0 {
                    return Err(bad(key, value, "a positive integer"));
                }
            }
            "shuffle" => self.train.shuffle = boolean(key, value)?,
            "seed" => self.train.seed = num(key, value, "an unsigned integer")?,
            "refresh_batch_norm" => self.train.refresh_batch_norm = boolean(key, value)?,
            "architecture" => {
                self.architecture = match value {
                    "canonical" => Architecture::Canonical,
                    "reduced" => Architecture::Reduced,
                    _ => return Err(bad(key, value, "canonical or reduced")),
                }
            }
            "augment" => self.augment = boolean(key, value)?,
            "limit" => {
                self.limit = match value {
                    "" | "none" => None,
                    v => Some(num(key, v, "a non-negative integer")?),
                }
            }
            "augment_angle_deg" => self.augmentation.angle_deg = finite(key, value)?,
            "flip_axis" => {
                self.augmentation.flip_axis = match value {
                    "vertical" => FlipAxis::Vertical,
                    "horizontal" => FlipAxis::Horizontal,
                    _ => return Err(bad(key, value, "vertical or horizontal")),
                }
            }
            "reframe_margin" => {
                self.load.margin = finite(key, value)?;
                if self.load.margin < 0.0 {
                    return Err(bad(key, value, "a non-negative number"));
                }
            }
            "zoom" => self.render.zoom = positive(key, value)?,
            "fov_y_deg" => {
                self.render.fov_y_deg = positive(key, value)?;
                if self.render.fov_y_deg >= 180.0 {
                    return Err(bad(key, value, "an angle below 180"));
                }
            }
            "light_direction" => {
                let [x, y, z] = floats::<3>(key, value)?;
                self.render.light_direction = Vec3::new(x, y, z)
                    .normalized()
                    .ok_or_else(|| bad(key, value, "a non-zero vector"))?;
            }
            "ear_region" => {
                self.render.region = if value.is_empty() || value == "auto" {
                    None
                } else {
                    let [x0, y0, z0, x1, y1, z1] = floats::<6>(key, value)?;
                    if !(x0 < x1 && y0 < y1 && z0 < z1) {
                        return Err(bad(key, value, "min corner below max corner"));
                    }
                    Some(EarRegion {
                        min: Vec3::new(x0, y0, z0),
                        max: Vec3::new(x1, y1, z1),
                    })
                }
            }
            "side_filter" => {
                self.side_filter = match value {
                    "" | "none" | "all" => None,
                    v => Some(
                        v.parse()
                            .map_err(|_| bad(key, value, "left, right or none"))?,
                    ),
                }
            }
            "top_k" => self.top_k = num(key, value, "a non-negative integer")?,
            "pck_px" => self.pck_px = positive(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(key.trim(), value)
    }

    /// Parses config text. Relative paths are kept as written.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(key.trim(), value).map_err(|e| {
                Error::Config(format!(
                    "line {}: {}",
                    i + 1,
                    e.to_string().trim_start_matches("configuration: ")
                ))
            })?;
        }
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative(base);
        }
        Ok(cfg)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.corpus_images);
        fix(&mut self.corpus_landmarks);
        fix(&mut self.model);
        fix(&mut self.database);
        fix(&mut self.mesh_dir);
        fix(&mut self.annotations);
        if let Some(FactorSource::File(p)) = &mut self.factors {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// A required path setting, checked to exist.
    pub fn require_path(
        &self,
        key: &str,
        value: &Option<PathBuf>,
        want_dir: bool,
    ) -> Result<PathBuf> {
        let path = value
            .clone()
            .ok_or_else(|| Error::Config(format!("{key} is not set (use --set {key}=PATH)")))?;
        let ok = if want_dir {
            path.is_dir()
        } else {
            path.is_file()
        };
        if !ok {
            let kind = if want_dir { "directory" } else { "file" };
            return Err(Error::Config(format!(
                "{key}: {kind} {} does not exist",
                path.display()
            )));
        }
        Ok(path)
    }

    /// One line with the training hyperparameters, printed at the start of
    /// a run.
    pub fn train_header(&self) -> String {
        let t = &self.train;
        format!(
            "lr={} beta1={} beta2={} epsilon={} decay={} batch_size={} epochs={} shuffle={} seed={} architecture={:?} augment={}",
            t.learning_rate,
            t.beta1,
            t.beta2,
            t.epsilon,
            t.decay,
            t.batch_size,
            t.epochs,
            t.shuffle,
            t.seed,
            self.architecture,
            self.augment
        )
        .to_lowercase()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_key() {
        let text = "\
# comment
corpus_images = imgs
factors = preset
learning_rate = 0.01
epochs = 3
batch_size = 2
shuffle = no
seed = 9
architecture = reduced
augment = yes
limit = 8
augment_angle_deg = 10
flip_axis = horizontal
reframe_margin = 0.2
zoom = 1.5
fov_y_deg = 40
light_direction = 0, 0, 2
ear_region = -1,-1,-1,1,1,1
side_filter = left
top_k = 3
pck_px = 5
";
        let c = PipelineConfig::parse(text).unwrap();
        assert_eq!(c.corpus_images, Some(PathBuf::from("imgs")));
        assert_eq!(c.factors, Some(FactorSource::Preset));
        assert_eq!(
            (c.train.learning_rate, c.train.epochs, c.train.batch_size),
            (0.01, 3, 2)
        );
        assert!(!c.train.shuffle && c.augment);
        assert_eq!(c.architecture, Architecture::Reduced);
        assert_eq!(c.limit, Some(8));
        assert_eq!(c.augmentation.flip_axis, FlipAxis::Horizontal);
        assert_eq!(c.render.light_direction, Vec3::new(0.0, 0.0, 1.0));
        assert!(c.render.region.is_some());
        assert_eq!(c.side_filter, Some(Side::Left));
        assert_eq!(c.top_k, 3);
    }

    #[test]
    fn errors_are_config_errors_with_line_numbers() {
        let e = PipelineConfig::parse("epochs = 3\nbogus = 1\n").unwrap_err();
        assert!(e.is_config());
        assert!(e.to_string().contains("line 2"), "{e}");
        assert!(PipelineConfig::parse("epochs = many").is_err());
        assert!(PipelineConfig::parse("light_direction = 0,0,0").is_err());
        assert!(PipelineConfig::parse("batch_size = 0").is_err());
        assert!(PipelineConfig::parse("ear_region = 1,1,1,0,0,0").is_err());
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut c = PipelineConfig::parse("epochs = 3").unwrap();
        c.apply_override("epochs=7").unwrap();
        assert_eq!(c.train.epochs, 7);
        assert!(c.apply_override("epochs").is_err());
    }

    #[test]
    fn defaults_echo_the_training_recipe() {
        let h = PipelineConfig::default().train_header();
        assert!(h.starts_with("lr=0.001 beta1=0.9 beta2=0.999"), "{h}");
        assert!(h.contains("batch_size=64 epochs=300"));
    }

    #[test]
    fn every_listed_key_is_accepted() {
        let samples = [
            ("light_direction", "0,0,1"),
            ("ear_region", "auto"),
            ("architecture", "canonical"),
            ("flip_axis", "vertical"),
            ("side_filter", "none"),
            ("factors", "f.csv"),
            ("shuffle", "true"),
            ("refresh_batch_norm", "false"),
            ("augment", "false"),
            ("limit", "none"),
        ];
        for key in KEYS {
            let value = samples
                .iter()
                .find(|(k, _)| k == key)
                .map_or("1", |(_, v)| v);
            PipelineConfig::default()
                .set(key, value)
                .unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }

    #[test]
    fn relative_paths_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        std::fs::write(&p, "model = m.bin\nfactors = f.csv\n").unwrap();
        let c = PipelineConfig::load(&p).unwrap();
        assert_eq!(c.model, Some(dir.path().join("m.bin")));
        assert_eq!(
            c.factors,
            Some(FactorSource::File(dir.path().join("f.csv")))
        );
    }
}
