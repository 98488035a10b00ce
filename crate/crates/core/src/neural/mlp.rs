use super::layers::{dropout_mask, relu_in_place, Dense};
use super::{snap, softmax, Mode, ModelKind, Network, NnError, TensorView};
use crate::imu::{FeatureVector20, N_FEATURES};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Output width of the published MLP.
pub const DEFAULT_CLASSES: usize = 11;

const HIDDEN1: usize = 128;
const HIDDEN2: usize = 64;
const HIDDEN3: usize = 32;
const DROPOUT1: f64 = 0.10;
const DROPOUT2: f64 = 0.05;
const STD_FLOOR: f64 = 1e-12;

/// Per-feature z-score parameters fitted on the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    pub mean: [f64; N_FEATURES],
    pub std: [f64; N_FEATURES],
}

impl Default for NormParams {
    fn default() -> Self {
        Self {
            mean: [0.0; N_FEATURES],
            std: [1.0; N_FEATURES],
        }
    }
}

impl NormParams {
    pub fn fit<'a>(features: impl IntoIterator<Item = &'a FeatureVector20>) -> Self {
        let rows: Vec<&FeatureVector20> = features.into_iter().collect();
        let mut out = Self::default();
        if rows.is_empty() {
            return out;
        }
        let n = rows.len() as f64;
        for j in 0..N_FEATURES {
            let mean = rows.iter().map(|f| f.0[j]).sum::<f64>() / n;
            let var = rows.iter().map(|f| (f.0[j] - mean).powi(2)).sum::<f64>() / n;
            out.mean[j] = mean;
            out.std[j] = if var.sqrt() < STD_FLOOR { 1.0 } else { var.sqrt() };
        }
        snap(&mut out.mean);
        snap(&mut out.std);
        out
    }

    pub fn apply(&self, x: &FeatureVector20) -> [f64; N_FEATURES] {
        std::array::from_fn(|j| (x.0[j] - self.mean[j]) / self.std[j])
    }
}

/// Stage-I classifier: 20 → 128 → 64 → 32 → C with ReLU, dropout after the
/// first two hidden layers and a softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub dense1: Dense,
    pub dense2: Dense,
    pub dense3: Dense,
    pub out: Dense,
    pub norm: NormParams,
}

struct MlpCache {
    x: [f64; N_FEATURES],
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    mask1: Option<Vec<f64>>,
    mask2: Option<Vec<f64>>,
    z3: Vec<f64>,
    probs: Vec<f64>,
}

impl MlpModel {
    pub fn new(n_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Self {
            dense1: Dense::glorot(N_FEATURES, HIDDEN1, &mut rng),
            dense2: Dense::glorot(HIDDEN1, HIDDEN2, &mut rng),
            dense3: Dense::glorot(HIDDEN2, HIDDEN3, &mut rng),
            out: Dense::glorot(HIDDEN3, n_classes, &mut rng),
            norm: NormParams::default(),
        };
        model.snap_to_f32();
        model
    }

    pub fn zeros(n_classes: usize) -> Self {
        Self {
            dense1: Dense::zeros(N_FEATURES, HIDDEN1),
            dense2: Dense::zeros(HIDDEN1, HIDDEN2),
            dense3: Dense::zeros(HIDDEN2, HIDDEN3),
            out: Dense::zeros(HIDDEN3, n_classes),
            norm: NormParams::default(),
        }
    }

    /// Parameter counts of the four dense layers.
    pub fn layer_parameter_counts(&self) -> [usize; 4] {
        [
            self.dense1.parameter_count(),
            self.dense2.parameter_count(),
            self.dense3.parameter_count(),
            self.out.parameter_count(),
        ]
    }

    fn check_shapes(&self) -> Result<(), NnError> {
        let chain = [
            (&self.dense1, N_FEATURES, HIDDEN1),
            (&self.dense2, HIDDEN1, HIDDEN2),
            (&self.dense3, HIDDEN2, HIDDEN3),
        ];
        for (i, (layer, n_in, n_out)) in chain.iter().enumerate() {
            if layer.n_in != *n_in
                || layer.n_out != *n_out
                || layer.weight.len() != n_in * n_out
                || layer.bias.len() != *n_out
            {
                return Err(NnError::ShapeMismatch(format!(
                    "dense{} is not {}x{}",
                    i + 1,
                    n_out,
                    n_in
                )));
            }
        }
        if self.out.n_in != HIDDEN3 || self.out.weight.len() != HIDDEN3 * self.out.n_out {
            return Err(NnError::ShapeMismatch("output layer".into()));
        }
        Ok(())
    }

    fn run(&self, x: &FeatureVector20, mode: Mode<'_>) -> Result<MlpCache, NnError> {
        self.check_shapes()?;
        if x.0.iter().any(|v| !v.is_finite()) {
            return Err(NnError::ShapeMismatch("non-finite feature".into()));
        }
        let xn = self.norm.apply(x);
        let mut rng = match mode {
            Mode::Train(rng) => Some(rng),
            Mode::Infer => None,
        };

        let mut z1 = vec![0.0; HIDDEN1];
        self.dense1.forward(&xn, &mut z1);
        let mut a1 = z1.clone();
        relu_in_place(&mut a1);
        let mask1 = rng.as_deref_mut().map(|r| dropout_mask(HIDDEN1, DROPOUT1, r));
        if let Some(m) = &mask1 {
            a1.iter_mut().zip(m).for_each(|(a, k)| *a *= k);
        }

        let mut z2 = vec![0.0; HIDDEN2];
        self.dense2.forward(&a1, &mut z2);
        let mut a2 = z2.clone();
        relu_in_place(&mut a2);
        let mask2 = rng.map(|r| dropout_mask(HIDDEN2, DROPOUT2, r));
        if let Some(m) = &mask2 {
            a2.iter_mut().zip(m).for_each(|(a, k)| *a *= k);
        }

        let mut z3 = vec![0.0; HIDDEN3];
        self.dense3.forward(&a2, &mut z3);
        let mut a3 = z3.clone();
        relu_in_place(&mut a3);

        let mut logits = vec![0.0; self.out.n_out];
        self.out.forward(&a3, &mut logits);
        Ok(MlpCache {
            x: xn,
            z1,
            a1,
            z2,
            a2,
            mask1,
            mask2,
            z3,
            probs: softmax(&logits),
        })
    }
}

fn relu_grad(z: &[f64], grad: &mut [f64]) {
    for (g, &v) in grad.iter_mut().zip(z) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
}

impl Network for MlpModel {
    type Input = FeatureVector20;

    fn kind(&self) -> ModelKind {
        ModelKind::Mlp
    }

    fn n_classes(&self) -> usize {
        self.out.n_out
    }

    fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut v = Vec::new();
        for (w, b, layer) in [
            ("dense1.weight", "dense1.bias", &self.dense1),
            ("dense2.weight", "dense2.bias", &self.dense2),
            ("dense3.weight", "dense3.bias", &self.dense3),
            ("out.weight", "out.bias", &self.out),
        ] {
            v.push(TensorView {
                name: w,
                rows: layer.n_out,
                cols: layer.n_in,
                data: &layer.weight,
            });
            v.push(TensorView {
                name: b,
                rows: 1,
                cols: layer.n_out,
                data: &layer.bias,
            });
        }
        v.push(TensorView {
            name: "norm.mean",
            rows: 1,
            cols: N_FEATURES,
            data: &self.norm.mean,
        });
        v.push(TensorView {
            name: "norm.std",
            rows: 1,
            cols: N_FEATURES,
            data: &self.norm.std,
        });
        v
    }

    fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.dense1.weight,
            &mut self.dense1.bias,
            &mut self.dense2.weight,
            &mut self.dense2.bias,
            &mut self.dense3.weight,
            &mut self.dense3.bias,
            &mut self.out.weight,
            &mut self.out.bias,
        ]
    }

    fn trainable(&self) -> Vec<&[f64]> {
        vec![
            &self.dense1.weight,
            &self.dense1.bias,
            &self.dense2.weight,
            &self.dense2.bias,
            &self.dense3.weight,
            &self.dense3.bias,
            &self.out.weight,
            &self.out.bias,
        ]
    }

    fn forward(&self, x: &FeatureVector20, mode: Mode<'_>) -> Result<Vec<f64>, NnError> {
        Ok(self.run(x, mode)?.probs)
    }

    fn accumulate_gradients(
        &self,
        x: &FeatureVector20,
        label: usize,
        mode: Mode<'_>,
        grads: &mut [Vec<f64>],
    ) -> Result<(f64, Vec<f64>), NnError> {
        if label >= self.n_classes() {
            return Err(NnError::LabelOutOfRange {
                label,
                classes: self.n_classes(),
            });
        }
        let c = self.run(x, mode)?;
        let loss = super::cross_entropy(&c.probs, label)?;

        let mut d_logits = c.probs.clone();
        d_logits[label] -= 1.0;

        let [g1w, g1b, g2w, g2b, g3w, g3b, gow, gob] = grads else {
            return Err(NnError::ShapeMismatch("gradient block count".into()));
        };

        let mut a3 = c.z3.clone();
        relu_in_place(&mut a3);
        let mut d3 = vec![0.0; HIDDEN3];
        self.out.backward(&a3, &d_logits, gow, gob, Some(&mut d3));
        relu_grad(&c.z3, &mut d3);

        let mut d2 = vec![0.0; HIDDEN2];
        self.dense3.backward(&c.a2, &d3, g3w, g3b, Some(&mut d2));
        if let Some(m) = &c.mask2 {
            d2.iter_mut().zip(m).for_each(|(g, k)| *g *= k);
        }
        relu_grad(&c.z2, &mut d2);

        let mut d1 = vec![0.0; HIDDEN1];
        self.dense2.backward(&c.a1, &d2, g2w, g2b, Some(&mut d1));
        if let Some(m) = &c.mask1 {
            d1.iter_mut().zip(m).for_each(|(g, k)| *g *= k);
        }
        relu_grad(&c.z1, &mut d1);

        self.dense1.backward(&c.x, &d1, g1w, g1b, None);
        Ok((loss, c.probs))
    }

    fn snap_to_f32(&mut self) {
        for t in self.trainable_mut() {
            snap(t);
        }
        snap(&mut self.norm.mean);
        snap(&mut self.norm.std);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn probe(seed: u64) -> FeatureVector20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = [0.0; N_FEATURES];
        v.iter_mut().for_each(|x| *x = rng.random_range(-3.0..3.0));
        FeatureVector20(v)
    }

    #[test]
    fn parameter_counts_match_published_table() {
        let m = MlpModel::new(DEFAULT_CLASSES, 1);
        assert_eq!(m.layer_parameter_counts(), [2688, 8256, 2080, 363]);
        assert_eq!(m.parameter_count(), 2688 + 8256 + 2080 + 363);
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = MlpModel::zeros(11);
        let p = m.forward(&probe(1), Mode::Infer).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 11.0).abs() < 1e-15));
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = MlpModel::new(11, 4);
        for s in 0..20 {
            let p = m.forward(&probe(s), Mode::Infer).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn inference_is_repeatable_and_dropout_only_in_training() {
        let m = MlpModel::new(10, 9);
        let x = probe(2);
        let a = m.forward(&x, Mode::Infer).unwrap();
        let b = m.forward(&x, Mode::Infer).unwrap();
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let differs = (0..10).any(|_| m.forward(&x, Mode::Train(&mut rng)).unwrap() != a);
        assert!(differs);
    }

    #[test]
    fn bad_shapes_and_labels() {
        let mut m = MlpModel::new(10, 1);
        assert!(matches!(
            m.accumulate_gradients(&probe(0), 10, Mode::Infer, &mut m.zero_gradients()),
            Err(NnError::LabelOutOfRange { .. })
        ));
        m.dense2.weight.pop();
        assert!(matches!(
            m.forward(&probe(0), Mode::Infer),
            Err(NnError::ShapeMismatch(_))
        ));
    }
}
