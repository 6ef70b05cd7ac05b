//! Flat experiment configuration.
//!
//! A config file is a TOML document of top-level `key = value` pairs; every
//! key is optional. `--set key=value` flags override file keys, which
//! override the defaults below. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::advtrain::{Schedule, TrainConfig, TrainMode};
use crate::degrade::{Family, PoolSpec};
use crate::error::{Error, Result};
use crate::synthkit::{short_hash, SceneSpec, SplitCounts};
use crate::tinyssd::{ArchConfig, DecodeConfig, Layer, LossConfig};

/// Environment variable that overrides the output root.
pub const OUTPUT_ROOT_ENV: &str = "GANDO_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub seed: u64,
    /// Output root; not part of the config hash.
    pub output_dir: String,

    pub image_size: usize,
    pub num_objects: usize,
    pub min_object_side: usize,
    pub max_object_side: usize,
    pub max_aspect: f64,
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    pub cache_images: bool,

    /// Distortion family used for finetune/gando training.
    pub family: Family,
    /// Pool levels for `family`; empty selects the standard pool.
    pub levels: Vec<f64>,

    pub channels: [usize; 4],
    pub aspect_ratios: Vec<f64>,
    pub anchor_scales: [f64; 2],

    pub lr: f64,
    pub lr_d: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub d_period: usize,
    pub baseline_epochs: usize,
    pub max_epochs: usize,
    /// 0 selects the mode default (4 detector-only, 10 adversarial).
    pub patience: usize,
    /// 0 uses every full batch.
    pub iters_per_epoch: usize,
    /// "plateau" or "two_phase".
    pub schedule: String,
    pub decay_epoch: usize,
    /// Layer name for partial retraining; empty trains every layer.
    pub freeze_after: String,
    pub match_iou: f64,

    pub suites: Vec<String>,
    pub eval_families: Vec<Family>,
    pub heavy_radii: Vec<f64>,
    pub gan_k_layers: Vec<String>,
    pub conf_threshold: f64,
    pub nms_iou: f64,
    pub max_dets: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let scene = SceneSpec::default();
        let arch = ArchConfig::default();
        Self {
            experiment_id: "default".into(),
            seed: 1,
            output_dir: "gando-out".into(),
            image_size: scene.image_size,
            num_objects: scene.num_objects,
            min_object_side: scene.min_object_side,
            max_object_side: scene.max_object_side,
            max_aspect: scene.max_aspect,
            train_count: 2000,
            val_count: 200,
            test_count: 300,
            cache_images: false,
            family: Family::Defocus,
            levels: Vec::new(),
            channels: arch.channels,
            aspect_ratios: arch.aspect_ratios,
            anchor_scales: arch.anchor_scales,
            lr: 1e-3,
            lr_d: 1e-4,
            lambda: 0.01,
            batch_size: 16,
            d_period: 2,
            baseline_epochs: 20,
            max_epochs: 10,
            patience: 0,
            iters_per_epoch: 0,
            schedule: "plateau".into(),
            decay_epoch: 0,
            freeze_after: String::new(),
            match_iou: 0.5,
            suites: vec!["table1".into(), "table3".into(), "table6".into(), "heavy".into()],
            eval_families: vec![Family::Defocus],
            heavy_radii: vec![8.0, 10.0, 12.0],
            gan_k_layers: vec!["block1".into(), "block2".into(), "block3".into(), "block4".into()],
            conf_threshold: 0.05,
            nms_iou: 0.45,
            max_dets: 100,
        }
    }
}

/// Parses the right-hand side of `--set key=value`: a TOML value when it
/// parses as one, a bare string otherwise.
fn parse_override_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{o}' is not key=value")))?;
            table.insert(k.trim().to_string(), parse_override_value(v.trim()));
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::MissingArtifact {
                    path: p.to_path_buf(),
                    hint: "pass an existing --config file or omit it to use defaults".into(),
                },
                _ => Error::Io(e),
            })?,
            None => String::new(),
        };
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene().validate()?;
        self.arch().validate()?;
        self.train_config(TrainMode::Gando)?.validate()?;
        if self.train_count == 0 || self.val_count == 0 || self.test_count == 0 {
            return Err(Error::Config("split counts must be positive".into()));
        }
        for s in &self.suites {
            if !SUITES.contains(&s.as_str()) {
                return Err(Error::Config(format!("unknown suite '{s}' (known: {})", SUITES.join(", "))));
            }
        }
        for k in &self.gan_k_layers {
            Layer::parse(k)?;
        }
        Ok(())
    }

    /// Short sha256 of the canonical (sorted-key) JSON form, excluding the
    /// output location.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("object").remove("output_dir");
        short_hash(v.to_string().as_bytes())
    }

    pub fn scene(&self) -> SceneSpec {
        SceneSpec {
            image_size: self.image_size,
            num_objects: self.num_objects,
            min_object_side: self.min_object_side,
            max_object_side: self.max_object_side,
            max_aspect: self.max_aspect,
            ..SceneSpec::default()
        }
    }

    pub fn counts(&self) -> SplitCounts {
        SplitCounts {
            train: self.train_count,
            val: self.val_count,
            test: self.test_count,
        }
    }

    pub fn arch(&self) -> ArchConfig {
        ArchConfig {
            image_size: self.image_size,
            channels: self.channels,
            aspect_ratios: self.aspect_ratios.clone(),
            anchor_scales: self.anchor_scales,
            ..ArchConfig::default()
        }
    }

    pub fn pool_spec(&self, family: Family) -> PoolSpec {
        PoolSpec {
            family,
            levels: (family == self.family && !self.levels.is_empty()).then(|| self.levels.clone()),
        }
    }

    pub fn decode(&self) -> DecodeConfig {
        DecodeConfig {
            conf_threshold: self.conf_threshold,
            nms_iou: self.nms_iou,
            max_dets: self.max_dets,
        }
    }

    pub fn freeze_layer(&self) -> Result<Option<Layer>> {
        if self.freeze_after.is_empty() {
            Ok(None)
        } else {
            Layer::parse(&self.freeze_after).map(Some)
        }
    }

    pub fn train_config(&self, mode: TrainMode) -> Result<TrainConfig> {
        let mut t = TrainConfig::for_mode(mode);
        t.lr = self.lr;
        t.lr_d = self.lr_d;
        t.lambda = self.lambda;
        t.batch_size = self.batch_size;
        t.d_period = self.d_period;
        t.max_epochs = if mode == TrainMode::Baseline {
            self.baseline_epochs
        } else {
            self.max_epochs
        };
        if self.patience > 0 {
            t.patience = self.patience;
        }
        t.iters_per_epoch = (self.iters_per_epoch > 0).then_some(self.iters_per_epoch);
        t.schedule = match self.schedule.as_str() {
            "plateau" => Schedule::Plateau,
            "two_phase" => Schedule::TwoPhase {
                decay_epoch: self.decay_epoch,
            },
            other => return Err(Error::Config(format!("unknown schedule '{other}' (plateau or two_phase)"))),
        };
        t.freeze_after = if mode == TrainMode::Baseline {
            None
        } else {
            self.freeze_layer()?
        };
        t.seed = self.seed;
        t.loss = LossConfig::default();
        t.match_iou = self.match_iou;
        Ok(t)
    }

    /// Output root: explicit flag, then the environment variable, then the
    /// config value.
    pub fn output_root(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(f) = flag {
            return f.to_path_buf();
        }
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => PathBuf::from(&self.output_dir),
        }
    }
}

pub const SUITES: [&str; 7] = ["table1", "table3", "table4", "table5", "table6", "heavy", "coco"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml_with_overrides("", &[]).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn hash_stable_under_key_order() {
        let a = ExperimentConfig::from_toml_with_overrides("seed = 5\nlr = 0.002\n", &[]).unwrap();
        let b = ExperimentConfig::from_toml_with_overrides("lr = 0.002\nseed = 5\n", &[]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), ExperimentConfig::default().hash());
    }

    #[test]
    fn override_beats_file() {
        let c = ExperimentConfig::from_toml_with_overrides(
            "seed = 5\nfamily = \"gaussian\"\n",
            &["seed=9".into(), "family=awgn".into(), "suites=[\"table6\"]".into()],
        )
        .unwrap();
        assert_eq!((c.seed, c.family), (9, Family::Awgn));
        assert_eq!(c.suites, vec!["table6".to_string()]);
    }

    #[test]
    fn output_dir_not_hashed() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            output_dir: "/elsewhere".into(),
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn bad_inputs_rejected() {
        for (text, sets) in [
            ("colour = 1", vec![]),
            ("", vec!["batch_size=7".to_string()]),
            ("", vec!["suites=[\"table9\"]".to_string()]),
            ("", vec!["nokey".to_string()]),
            ("", vec!["schedule=weekly".to_string()]),
        ] {
            assert!(
                matches!(ExperimentConfig::from_toml_with_overrides(text, &sets), Err(Error::Config(_)) | Err(Error::SceneSpec(_))),
                "{text} {sets:?}"
            );
        }
    }

    #[test]
    fn mode_specific_training_settings() {
        let c = ExperimentConfig::default();
        assert_eq!(c.train_config(TrainMode::Baseline).unwrap().max_epochs, c.baseline_epochs);
        let g = c.train_config(TrainMode::Gando).unwrap();
        assert_eq!((g.beta1, g.patience, g.lambda), (0.5, 10, c.lambda));
    }
}
