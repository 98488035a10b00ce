//! A small from-scratch network engine covering exactly the two classifiers
//! of the pipeline: the Stage-I feature MLP and the Stage-II CSI CNN with
//! attention pooling.
//!
//! Parameters are held as `f64` for training and gradient checks but always
//! sit on the `f32` grid after construction and after training, so the
//! 32-bit weight file round-trips bit-exactly.

mod cnn;
mod layers;
mod metrics;
mod mlp;
mod train;
mod weights;

pub use cnn::{CnnModel, CnnTrace, ATTENTION_STEPS, CONV_FILTERS, CONV_STEPS, CONV_WIDTH};
pub use layers::Dense;
pub use metrics::{evaluate, Metrics};
pub use mlp::{MlpModel, NormParams, DEFAULT_CLASSES};
pub use train::{gradient_check, gradient_check_with, split_indices, train, EpochStats, TrainConfig, TrainHistory};
pub use weights::{decode, encode, load_cnn, load_mlp, save_weights, RawTensor, RawWeights};

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("corrupt weight file: {0}")]
    CorruptFile(String),
    #[error("weight file schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Forward-pass mode. Dropout draws its masks from the training RNG.
pub enum Mode<'a> {
    Infer,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Mlp = 1,
    Cnn = 2,
}

impl ModelKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(ModelKind::Mlp),
            2 => Some(ModelKind::Cnn),
            _ => None,
        }
    }
}

/// Named parameter block as stored in a weight file.
pub struct TensorView<'a> {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

/// Common surface of the two classifiers used by training, gradient checks
/// and serialization.
pub trait Network: Clone {
    type Input;

    fn kind(&self) -> ModelKind;

    fn n_classes(&self) -> usize;

    /// Every stored tensor, trainable or not, in file order.
    fn tensors(&self) -> Vec<TensorView<'_>>;

    /// Trainable parameter blocks, in a fixed order.
    fn trainable_mut(&mut self) -> Vec<&mut [f64]>;

    fn trainable(&self) -> Vec<&[f64]>;

    fn forward(&self, x: &Self::Input, mode: Mode<'_>) -> Result<Vec<f64>, NnError>;

    /// Cross-entropy loss of one example; gradients are added into `grads`
    /// (same block layout as [`Network::trainable`]).
    fn accumulate_gradients(
        &self,
        x: &Self::Input,
        label: usize,
        mode: Mode<'_>,
        grads: &mut [Vec<f64>],
    ) -> Result<(f64, Vec<f64>), NnError>;

    fn zero_gradients(&self) -> Vec<Vec<f64>> {
        self.trainable().iter().map(|t| vec![0.0; t.len()]).collect()
    }

    fn parameter_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// Rounds every stored value to the nearest `f32`.
    fn snap_to_f32(&mut self);
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
        )
        .0
}

const PROB_FLOOR: f64 = 1e-12;

/// `−ln(pred[label])` with the probability clamped away from zero.
pub fn cross_entropy(pred: &[f64], label: usize) -> Result<f64, NnError> {
    let p = pred.get(label).ok_or(NnError::LabelOutOfRange {
        label,
        classes: pred.len(),
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

pub(crate) fn snap(values: &mut [f64]) {
    for v in values {
        *v = *v as f32 as f64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_cases() {
        assert_eq!(cross_entropy(&[0.0, 1.0], 1).unwrap(), 0.0);
        let uniform = vec![1.0 / 11.0; 11];
        assert!((cross_entropy(&uniform, 3).unwrap() - 11f64.ln()).abs() < 1e-12);
        assert!((cross_entropy(&uniform, 3).unwrap() - 2.3979).abs() < 1e-4);
        let l = cross_entropy(&[1.0, 0.0], 1).unwrap();
        assert!((l - 27.631).abs() < 1e-3, "{l}");
        assert!(matches!(
            cross_entropy(&[0.5, 0.5], 2),
            Err(NnError::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn softmax_shift_keeps_argmax() {
        let z = [0.3, -1.2, 2.5, 2.4];
        let p = softmax(&z);
        let shifted: Vec<f64> = z.iter().map(|v| v + 100.0).collect();
        let q = softmax(&shifted);
        assert_eq!(argmax(&p), argmax(&q));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
