use super::{argmax, cross_entropy, Mode, Network, NnError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 32,
            epochs: 50,
            seed: 0,
            train_fraction: 0.7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidConfig(format!("learning_rate {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NnError::InvalidConfig(format!("momentum {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(NnError::InvalidConfig(format!(
                "train_fraction {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training cross-entropy over the epoch (dropout active).
    pub loss: f64,
    /// Training accuracy over the epoch's forward passes.
    pub accuracy: f64,
}

pub type TrainHistory = Vec<EpochStats>;

/// Mini-batch SGD with classical momentum on mean cross-entropy.
///
/// Shuffling, dropout masks and batch order all come from one RNG seeded by
/// `cfg.seed`, and gradients are accumulated in a fixed order, so two runs
/// with equal inputs produce bitwise-equal weights. The result is snapped to
/// the `f32` grid.
pub fn train<N: Network>(
    model: &N,
    data: &[(N::Input, usize)],
    cfg: &TrainConfig,
) -> Result<(N, TrainHistory), NnError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity = model.zero_gradients();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = model.zero_gradients();
            for &i in batch {
                let (x, label) = &data[i];
                let (loss, probs) = model.accumulate_gradients(x, *label, Mode::Train(&mut rng), &mut grads)?;
                total_loss += loss;
                correct += usize::from(argmax(&probs) == *label);
            }
            let scale = 1.0 / batch.len() as f64;
            for ((param, vel), grad) in model.trainable_mut().into_iter().zip(velocity.iter_mut()).zip(&grads) {
                for ((p, v), g) in param.iter_mut().zip(vel.iter_mut()).zip(grad) {
                    *v = cfg.momentum * *v - cfg.learning_rate * g * scale;
                    *p += *v;
                }
            }
        }
        history.push(EpochStats {
            epoch,
            loss: total_loss / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        });
    }
    model.snap_to_f32();
    Ok((model, history))
}

/// Deterministic stratified split: within each class a seeded shuffle sends
/// `round(fraction · n)` items to training. Returns `(train, test)` indices
/// in ascending order.
pub fn split_indices(labels: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        let k = (fraction * members.len() as f64).round() as usize;
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn loss_at<N: Network>(model: &N, x: &N::Input, label: usize) -> Result<f64, NnError> {
    cross_entropy(&model.forward(x, Mode::Infer)?, label)
}

/// [`gradient_check_with`] over 128 parameters sampled with seed 0.
pub fn gradient_check<N: Network>(model: &N, x: &N::Input, label: usize, epsilon: f64) -> Result<f64, NnError> {
    gradient_check_with(model, x, label, epsilon, 128, 0)
}

/// Largest relative error `|ga − gn| / max(|ga|, |gn|, 1e-8)` between the
/// backpropagated gradient and a central finite difference, over `samples`
/// randomly drawn trainable parameters. Dropout is disabled.
pub fn gradient_check_with<N: Network>(
    model: &N,
    x: &N::Input,
    label: usize,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<f64, NnError> {
    if !(1e-6..=1e-4).contains(&epsilon) {
        return Err(NnError::InvalidConfig(format!(
            "epsilon {epsilon} outside [1e-6, 1e-4]"
        )));
    }
    let mut grads = model.zero_gradients();
    model.accumulate_gradients(x, label, Mode::Infer, &mut grads)?;

    let sizes: Vec<usize> = grads.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let mut flat = rng.random_range(0..total);
        let mut block = 0;
        while flat >= sizes[block] {
            flat -= sizes[block];
            block += 1;
        }
        let original = probe.trainable()[block][flat];
        probe.trainable_mut()[block][flat] = original + epsilon;
        let up = loss_at(&probe, x, label)?;
        probe.trainable_mut()[block][flat] = original - epsilon;
        let down = loss_at(&probe, x, label)?;
        probe.trainable_mut()[block][flat] = original;

        let numeric = (up - down) / (2.0 * epsilon);
        let analytic = grads[block][flat];
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    Ok(worst)
}
