use serde::{Deserialize, Serialize};

use super::rng::{DeskRng, Stream};

/// Gaussian blobs: class `c` is centred on `separation * e_(c mod dims)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub classes: usize,
    pub per_class: usize,
    pub dims: usize,
    pub separation: f64,
    pub noise: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            classes: 2,
            per_class: 256,
            dims: 2,
            separation: 2.0,
            noise: 1.0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.classes < 2 {
            return Err("dataset.classes must be >= 2".into());
        }
        if self.per_class < 1 {
            return Err("dataset.per_class must be >= 1".into());
        }
        if self.dims < 1 {
            return Err("dataset.dims must be >= 1".into());
        }
        if !(self.separation.is_finite() && self.separation > 0.0) {
            return Err("dataset.separation must be > 0".into());
        }
        if !(self.noise.is_finite() && self.noise > 0.0) {
            return Err("dataset.noise must be > 0".into());
        }
        Ok(())
    }
}

/// Labeled samples, features row-major `len × dims`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub dims: usize,
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dims..(i + 1) * self.dims]
    }

    /// Copies the rows at `indices` into a contiguous batch.
    pub fn gather(&self, indices: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let mut features = Vec::with_capacity(indices.len() * self.dims);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        (features, labels)
    }
}

/// Draws the blobs class-major, then shuffles sample order with the same
/// generator. Deterministic in `(config, seed)`.
pub fn make_blobs(config: &DatasetConfig, seed: u64) -> Dataset {
    let mut rng = DeskRng::new(seed, Stream::Data);
    let total = config.classes * config.per_class;
    let mut features = Vec::with_capacity(total * config.dims);
    let mut labels = Vec::with_capacity(total);
    for class in 0..config.classes {
        let axis = class % config.dims;
        for _ in 0..config.per_class {
            for j in 0..config.dims {
                let centre = if j == axis { config.separation } else { 0.0 };
                features.push(rng.normal(centre, config.noise));
            }
            labels.push(class);
        }
    }

    let mut order: Vec<usize> = (0..total).collect();
    rng.shuffle(&mut order);
    let unshuffled = Dataset {
        features,
        labels,
        dims: config.dims,
        classes: config.classes,
    };
    let (features, labels) = unshuffled.gather(&order);
    Dataset {
        features,
        labels,
        ..unshuffled
    }
}
