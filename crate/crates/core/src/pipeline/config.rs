use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::CodecParams;
use crate::model::{EncoderKind, ModelConfig};
use crate::synth::{CorpusSpec, TextureParams};
use crate::tensor::SgdConfig;
use crate::{Error, Result};

/// Every setting of the pipeline in one flat JSON object. Missing keys take
/// the defaults below; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,

    // codec
    pub block_size: usize,
    pub search_radius: usize,
    pub gop_pframes: usize,

    // model
    pub channels: usize,
    pub window: usize,
    pub label_alpha: f64,
    pub sample_pframes: usize,
    pub score_threshold: f64,
    pub nms_radius: usize,
    pub encoder: EncoderKind,

    // optimizer
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub epochs: usize,
    pub batch_size: usize,

    // synthetic corpus
    pub train_videos: usize,
    pub test_videos: usize,
    pub num_frames: usize,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub min_events: usize,
    pub max_events: usize,
    pub event_spacing: usize,
    pub max_speed: usize,

    // ablation runs
    pub ablate_seeds: Vec<u64>,
    pub ablate_windows: Vec<usize>,
    pub ablate_train_videos: usize,
    pub ablate_test_videos: usize,
    pub ablate_epochs: usize,
    pub ablate_decay_epochs: Vec<usize>,

    // gradient check
    pub gradcheck_instances: usize,
    pub gradcheck_entries: usize,
    pub gradcheck_tolerance: f64,

    // paths
    pub data_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub train_log: PathBuf,
    pub predictions: PathBuf,
    pub report: PathBuf,
    pub ablation_report: PathBuf,
    pub eval_split: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let sgd = SgdConfig::default();
        Self {
            seed: 0,
            block_size: 8,
            search_radius: 8,
            gop_pframes: 11,
            channels: 32,
            window: 8,
            label_alpha: 1.0,
            sample_pframes: 3,
            score_threshold: 0.5,
            nms_radius: 2,
            encoder: EncoderKind::Scce,
            learning_rate: sgd.learning_rate,
            momentum: sgd.momentum,
            weight_decay: sgd.weight_decay,
            decay_epochs: sgd.decay_epochs,
            decay_factor: sgd.decay_factor,
            epochs: sgd.epochs,
            batch_size: 4,
            train_videos: 200,
            test_videos: 50,
            num_frames: 48,
            fps: 12.0,
            width: 64,
            height: 64,
            min_events: 1,
            max_events: 3,
            event_spacing: 10,
            max_speed: 2,
            ablate_seeds: vec![0, 1, 2],
            ablate_windows: vec![0, 2, 8],
            ablate_train_videos: 100,
            ablate_test_videos: 50,
            ablate_epochs: 20,
            ablate_decay_epochs: vec![11, 16],
            gradcheck_instances: 5,
            gradcheck_entries: 6,
            gradcheck_tolerance: 1e-5,
            data_dir: PathBuf::from("data"),
            checkpoint: PathBuf::from("runs/model.ckpt"),
            train_log: PathBuf::from("runs/train_log.jsonl"),
            predictions: PathBuf::from("runs/predictions.jsonl"),
            report: PathBuf::from("runs/report.json"),
            ablation_report: PathBuf::from("runs/ablation.json"),
            eval_split: "test".into(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.codec().validate()?;
        self.sgd().validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.label_alpha > 0.0) {
            return Err(Error::Config("label_alpha must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::Config("score_threshold must lie in [0, 1]".into()));
        }
        if self.min_events > self.max_events {
            return Err(Error::Config("min_events exceeds max_events".into()));
        }
        if self.max_speed == 0 || self.max_speed > self.search_radius {
            return Err(Error::Config(format!(
                "max_speed must be in 1..={} (the search radius)",
                self.search_radius
            )));
        }
        if self.channels == 0 || self.channels % crate::model::GATE_REDUCTION != 0 {
            return Err(Error::Config(format!(
                "channels must be a positive multiple of {}",
                crate::model::GATE_REDUCTION
            )));
        }
        if self.width % 8 != 0 || self.height % 8 != 0 {
            return Err(Error::Config("frame width and height must be multiples of 8".into()));
        }
        Ok(())
    }

    pub fn codec(&self) -> CodecParams {
        CodecParams {
            block_size: self.block_size,
            search_radius: self.search_radius,
            gop_pframes: self.gop_pframes,
        }
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            decay_epochs: self.decay_epochs.clone(),
            decay_factor: self.decay_factor,
            epochs: self.epochs,
        }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            channels: self.channels,
            window: self.window,
            encoder: self.encoder,
        }
    }

    pub fn corpus(&self) -> CorpusSpec {
        CorpusSpec {
            num_frames: self.num_frames,
            fps: self.fps,
            width: self.width,
            height: self.height,
            events_per_video: (self.min_events, self.max_events),
            event_spacing: self.event_spacing,
            edge_margin: 4,
            texture: TextureParams {
                max_speed: self.max_speed,
                ..TextureParams::default()
            },
        }
    }

    pub fn split_dir(&self, split: &str) -> PathBuf {
        self.data_dir.join(split)
    }
}
