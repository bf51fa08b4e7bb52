//! Deterministic desk-scale trainer: an MLP on Gaussian blobs, trained with
//! SGD + momentum + weight decay at a constant learning rate, writing one
//! snapshot per epoch (plus the initial weights) and a run manifest.

mod data;
mod mlp;
mod rng;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use data::{make_blobs, Dataset, DatasetConfig};
pub use mlp::{evaluate, forward, loss_and_grads, sgd_step, Dense, Gradients, ModelState, OptimizerState, SgdConfig};
pub use rng::{DeskRng, Stream};

use crate::manifest::{save_manifest, Hyperparameters, ManifestError, RunManifest, MANIFEST_VERSION};
use crate::snapshot::{save_snapshot, FormatError};

pub const CHECKPOINT_PATTERN: &str = "epoch_{epoch}.lws";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid trainer config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("training diverged at epoch {epoch} (non-finite parameters); partial output removed")]
    DivergenceDetected { epoch: u64 },
    #[error("i/o failure on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub seed: u64,
    pub epochs: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub layer_widths: Vec<usize>,
    pub dataset: DatasetConfig,
}

impl Default for TrainerConfig {
    /// The pinned desk configuration.
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 60,
            batch_size: 32,
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            layer_widths: vec![2, 32, 32, 2],
            dataset: DatasetConfig::default(),
        }
    }
}

impl TrainerConfig {
    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let config: Self = serde_json::from_str(text).map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let invalid = |msg: &str| Err(TrainError::InvalidConfig(msg.to_owned()));
        if self.epochs < 1 {
            return invalid("epochs must be >= 1");
        }
        if self.batch_size < 1 {
            return invalid("batch_size must be >= 1");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return invalid("lr must be > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return invalid("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return invalid("weight_decay must be >= 0");
        }
        if self.layer_widths.len() < 3 {
            return invalid("layer_widths needs input, at least one hidden, and output widths");
        }
        if self.layer_widths.contains(&0) {
            return invalid("layer widths must be >= 1");
        }
        self.dataset.validate().map_err(TrainError::InvalidConfig)?;
        if self.layer_widths[0] != self.dataset.dims {
            return invalid("first layer width must equal dataset.dims");
        }
        if self.layer_widths[self.layer_widths.len() - 1] != self.dataset.classes {
            return invalid("last layer width must equal dataset.classes");
        }
        Ok(())
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }

    pub fn architecture(&self) -> String {
        let widths: Vec<String> = self.layer_widths.iter().map(ToString::to_string).collect();
        format!("mlp-{}", widths.join("x"))
    }

    pub fn run_id(&self) -> String {
        format!("desk-seed{}", self.seed)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Trains the desk model and writes `epoch_0.lws` … `epoch_{epochs}.lws` and
/// `manifest.json` into `output_directory`. Each snapshot's metadata records
/// the epoch and the full-dataset training loss and accuracy.
pub fn train(config: &TrainerConfig, output_directory: impl AsRef<Path>) -> Result<RunManifest, TrainError> {
    config.validate()?;
    let dir = output_directory.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let manifest = RunManifest {
        version: MANIFEST_VERSION,
        run_id: config.run_id(),
        seed: config.seed,
        epochs: config.epochs,
        includes_initial: true,
        checkpoint_pattern: CHECKPOINT_PATTERN.to_owned(),
        architecture: config.architecture(),
        hyperparameters: Hyperparameters {
            lr: config.lr,
            momentum: config.momentum,
            weight_decay: config.weight_decay,
        },
    };

    let dataset = make_blobs(&config.dataset, config.seed);
    let mut init_rng = DeskRng::new(config.seed, Stream::Init);
    let mut order_rng = DeskRng::new(config.seed, Stream::BatchOrder);
    let mut model = ModelState::he_normal(&config.layer_widths, &mut init_rng);
    let mut optimizer = OptimizerState::new(&model);
    let sgd = config.sgd();

    let mut written = Vec::with_capacity(config.epochs as usize + 1);
    let result = (|| {
        write_epoch(&model, &dataset, &manifest, dir, 0, &mut written)?;
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        for epoch in 1..=config.epochs {
            order_rng.shuffle(&mut order);
            for batch in order.chunks(config.batch_size) {
                let (features, labels) = dataset.gather(batch);
                let (_, grads) = loss_and_grads(&model, &features, dataset.dims, &labels)?;
                sgd_step(&mut model, &mut optimizer, &grads, sgd)?;
            }
            if !model.is_finite() {
                return Err(TrainError::DivergenceDetected { epoch });
            }
            write_epoch(&model, &dataset, &manifest, dir, epoch, &mut written)?;
        }
        save_manifest(&manifest, dir)?;
        Ok(())
    })();

    if let Err(e) = result {
        for path in &written {
            let _ = fs::remove_file(path);
        }
        return Err(e);
    }
    Ok(manifest)
}

fn write_epoch(
    model: &ModelState,
    dataset: &Dataset,
    manifest: &RunManifest,
    dir: &Path,
    epoch: u64,
    written: &mut Vec<PathBuf>,
) -> Result<(), TrainError> {
    let (loss, accuracy) = evaluate(model, &dataset.features, dataset.dims, &dataset.labels)?;
    let mut snapshot = model.to_snapshot();
    snapshot.set_metadata("epoch", epoch.to_string());
    snapshot.set_metadata("train_loss", format!("{loss:.17e}"));
    snapshot.set_metadata("train_accuracy", format!("{accuracy:.17e}"));
    let path = dir.join(manifest.snapshot_file_name(epoch));
    written.push(path.clone());
    save_snapshot(&snapshot, &path)?;
    Ok(())
}
