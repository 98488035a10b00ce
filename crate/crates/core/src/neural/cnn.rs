use super::layers::{dropout_mask, glorot_fill, relu_in_place, Dense};
use super::{snap, softmax, Mode, ModelKind, Network, NnError, TensorView};
use crate::csi::{CsiTensor, TENSOR_STEPS};
use crate::sensor_model::N_CHANNELS;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const CONV_FILTERS: usize = 32;
pub const CONV_WIDTH: usize = 3;
/// Valid convolution output length.
pub const CONV_STEPS: usize = TENSOR_STEPS - CONV_WIDTH + 1;
/// Max-pool (width 2, stride 2) output length; the trailing odd step is dropped.
pub const ATTENTION_STEPS: usize = CONV_STEPS / 2;

const HIDDEN: usize = 64;
const CLASSES: usize = 2;
const DROPOUT: f64 = 0.20;
const CONV_FAN_IN: usize = CONV_WIDTH * N_CHANNELS;

/// Default input scaling: the static/motion rate-of-change boundary maps to 1.
pub const DEFAULT_INPUT_SCALE: f64 = 1.0 / 50.0;

/// Stage-II classifier: valid Conv1D(32, k=3) → MaxPool(2) → attention
/// pooling → dropout → Dense(64, ReLU) → Dense(2) → softmax.
///
/// `input_scale` is a fixed (non-trainable) multiplier applied to the
/// rate-of-change tensor before the convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    /// `CONV_FILTERS × (CONV_WIDTH · N_CHANNELS)`, indexed `[f][j·N_CHANNELS + c]`.
    pub conv_weight: Vec<f64>,
    pub conv_bias: Vec<f64>,
    /// Attention score vector.
    pub attention: Vec<f64>,
    pub dense1: Dense,
    pub out: Dense,
    pub input_scale: Vec<f64>,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct CnnTrace {
    /// `CONV_STEPS × CONV_FILTERS`
    pub conv: Vec<f64>,
    /// `ATTENTION_STEPS × CONV_FILTERS`
    pub pooled: Vec<f64>,
    pool_arg: Vec<usize>,
    /// Attention weights over the pooled steps.
    pub attention: Vec<f64>,
    pub context: Vec<f64>,
    dropped: Vec<f64>,
    mask: Option<Vec<f64>>,
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub probs: Vec<f64>,
}

impl CnnModel {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut conv_weight = vec![0.0; CONV_FILTERS * CONV_FAN_IN];
        glorot_fill(&mut conv_weight, CONV_FAN_IN, CONV_WIDTH * CONV_FILTERS, &mut rng);
        let mut attention = vec![0.0; CONV_FILTERS];
        glorot_fill(&mut attention, CONV_FILTERS, 1, &mut rng);
        let mut model = Self {
            conv_weight,
            conv_bias: vec![0.0; CONV_FILTERS],
            attention,
            dense1: Dense::glorot(CONV_FILTERS, HIDDEN, &mut rng),
            out: Dense::glorot(HIDDEN, CLASSES, &mut rng),
            input_scale: vec![DEFAULT_INPUT_SCALE],
        };
        model.snap_to_f32();
        model
    }

    pub fn zeros() -> Self {
        Self {
            conv_weight: vec![0.0; CONV_FILTERS * CONV_FAN_IN],
            conv_bias: vec![0.0; CONV_FILTERS],
            attention: vec![0.0; CONV_FILTERS],
            dense1: Dense::zeros(CONV_FILTERS, HIDDEN),
            out: Dense::zeros(HIDDEN, CLASSES),
            input_scale: vec![1.0],
        }
    }

    /// Conv, attention, dense, output parameter counts.
    pub fn layer_parameter_counts(&self) -> [usize; 4] {
        [
            self.conv_weight.len() + self.conv_bias.len(),
            self.attention.len(),
            self.dense1.parameter_count(),
            self.out.parameter_count(),
        ]
    }

    fn check_shapes(&self) -> Result<(), NnError> {
        let ok = self.conv_weight.len() == CONV_FILTERS * CONV_FAN_IN
            && self.conv_bias.len() == CONV_FILTERS
            && self.attention.len() == CONV_FILTERS
            && self.dense1.n_in == CONV_FILTERS
            && self.dense1.n_out == HIDDEN
            && self.dense1.weight.len() == CONV_FILTERS * HIDDEN
            && self.out.n_in == HIDDEN
            && self.out.n_out == CLASSES
            && self.out.weight.len() == HIDDEN * CLASSES
            && self.input_scale.len() == 1;
        if ok {
            Ok(())
        } else {
            Err(NnError::ShapeMismatch("CNN layer shapes".into()))
        }
    }

    /// Full forward pass keeping every intermediate activation.
    pub fn trace(&self, x: &CsiTensor, mode: Mode<'_>) -> Result<CnnTrace, NnError> {
        self.check_shapes()?;
        let scale = self.input_scale[0];
        let input = x.values();

        let mut conv = vec![0.0; CONV_STEPS * CONV_FILTERS];
        for t in 0..CONV_STEPS {
            // the receptive field of step t is contiguous in row-major storage
            let field = &input[t * N_CHANNELS..(t + CONV_WIDTH) * N_CHANNELS];
            for f in 0..CONV_FILTERS {
                let w = &self.conv_weight[f * CONV_FAN_IN..(f + 1) * CONV_FAN_IN];
                let s: f64 = w.iter().zip(field).map(|(a, b)| a * b).sum();
                conv[t * CONV_FILTERS + f] = self.conv_bias[f] + scale * s;
            }
        }

        let mut pooled = vec![0.0; ATTENTION_STEPS * CONV_FILTERS];
        let mut pool_arg = vec![0; ATTENTION_STEPS * CONV_FILTERS];
        for u in 0..ATTENTION_STEPS {
            for f in 0..CONV_FILTERS {
                let a = conv[2 * u * CONV_FILTERS + f];
                let b = conv[(2 * u + 1) * CONV_FILTERS + f];
                let (v, arg) = if b > a { (b, 2 * u + 1) } else { (a, 2 * u) };
                pooled[u * CONV_FILTERS + f] = v;
                pool_arg[u * CONV_FILTERS + f] = arg;
            }
        }

        let scores: Vec<f64> = pooled
            .chunks_exact(CONV_FILTERS)
            .map(|h| h.iter().zip(&self.attention).map(|(a, b)| a * b).sum())
            .collect();
        let attention = softmax(&scores);
        let mut context = vec![0.0; CONV_FILTERS];
        for (h, a) in pooled.chunks_exact(CONV_FILTERS).zip(&attention) {
            for (c, v) in context.iter_mut().zip(h) {
                *c += a * v;
            }
        }

        let mask = match mode {
            Mode::Train(rng) => Some(dropout_mask(CONV_FILTERS, DROPOUT, rng)),
            Mode::Infer => None,
        };
        let dropped: Vec<f64> = match &mask {
            Some(m) => context.iter().zip(m).map(|(c, k)| c * k).collect(),
            None => context.clone(),
        };

        let mut hidden_pre = vec![0.0; HIDDEN];
        self.dense1.forward(&dropped, &mut hidden_pre);
        let mut hidden = hidden_pre.clone();
        relu_in_place(&mut hidden);
        let mut logits = vec![0.0; CLASSES];
        self.out.forward(&hidden, &mut logits);

        Ok(CnnTrace {
            conv,
            pooled,
            pool_arg,
            attention,
            context,
            dropped,
            mask,
            hidden_pre,
            hidden,
            probs: softmax(&logits),
        })
    }
}

impl Network for CnnModel {
    type Input = CsiTensor;

    fn kind(&self) -> ModelKind {
        ModelKind::Cnn
    }

    fn n_classes(&self) -> usize {
        CLASSES
    }

    fn tensors(&self) -> Vec<TensorView<'_>> {
        vec![
            TensorView {
                name: "conv.weight",
                rows: CONV_FILTERS,
                cols: CONV_FAN_IN,
                data: &self.conv_weight,
            },
            TensorView {
                name: "conv.bias",
                rows: 1,
                cols: CONV_FILTERS,
                data: &self.conv_bias,
            },
            TensorView {
                name: "attention.weight",
                rows: 1,
                cols: CONV_FILTERS,
                data: &self.attention,
            },
            TensorView {
                name: "dense1.weight",
                rows: self.dense1.n_out,
                cols: self.dense1.n_in,
                data: &self.dense1.weight,
            },
            TensorView {
                name: "dense1.bias",
                rows: 1,
                cols: self.dense1.n_out,
                data: &self.dense1.bias,
            },
            TensorView {
                name: "out.weight",
                rows: self.out.n_out,
                cols: self.out.n_in,
                data: &self.out.weight,
            },
            TensorView {
                name: "out.bias",
                rows: 1,
                cols: self.out.n_out,
                data: &self.out.bias,
            },
            TensorView {
                name: "input.scale",
                rows: 1,
                cols: 1,
                data: &self.input_scale,
            },
        ]
    }

    fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.conv_weight,
            &mut self.conv_bias,
            &mut self.attention,
            &mut self.dense1.weight,
            &mut self.dense1.bias,
            &mut self.out.weight,
            &mut self.out.bias,
        ]
    }

    fn trainable(&self) -> Vec<&[f64]> {
        vec![
            &self.conv_weight,
            &self.conv_bias,
            &self.attention,
            &self.dense1.weight,
            &self.dense1.bias,
            &self.out.weight,
            &self.out.bias,
        ]
    }

    fn forward(&self, x: &CsiTensor, mode: Mode<'_>) -> Result<Vec<f64>, NnError> {
        Ok(self.trace(x, mode)?.probs)
    }

    fn accumulate_gradients(
        &self,
        x: &CsiTensor,
        label: usize,
        mode: Mode<'_>,
        grads: &mut [Vec<f64>],
    ) -> Result<(f64, Vec<f64>), NnError> {
        if label >= CLASSES {
            return Err(NnError::LabelOutOfRange {
                label,
                classes: CLASSES,
            });
        }
        let tr = self.trace(x, mode)?;
        let loss = super::cross_entropy(&tr.probs, label)?;

        let [g_cw, g_cb, g_att, g_d1w, g_d1b, g_ow, g_ob] = grads else {
            return Err(NnError::ShapeMismatch("gradient block count".into()));
        };

        let mut d_logits = tr.probs.clone();
        d_logits[label] -= 1.0;
        let mut d_hidden = vec![0.0; HIDDEN];
        self.out
            .backward(&tr.hidden, &d_logits, g_ow, g_ob, Some(&mut d_hidden));
        for (g, &z) in d_hidden.iter_mut().zip(&tr.hidden_pre) {
            if z <= 0.0 {
                *g = 0.0;
            }
        }
        let mut d_ctx = vec![0.0; CONV_FILTERS];
        self.dense1
            .backward(&tr.dropped, &d_hidden, g_d1w, g_d1b, Some(&mut d_ctx));
        if let Some(m) = &tr.mask {
            d_ctx.iter_mut().zip(m).for_each(|(g, k)| *g *= k);
        }

        // context = Σ_u a_u h_u, a = softmax(w · h_u)
        let mut d_pooled = vec![0.0; ATTENTION_STEPS * CONV_FILTERS];
        let d_a: Vec<f64> = tr
            .pooled
            .chunks_exact(CONV_FILTERS)
            .map(|h| h.iter().zip(&d_ctx).map(|(a, b)| a * b).sum())
            .collect();
        let mean_da: f64 = tr.attention.iter().zip(&d_a).map(|(a, d)| a * d).sum();
        for u in 0..ATTENTION_STEPS {
            let a = tr.attention[u];
            let d_score = a * (d_a[u] - mean_da);
            let h = &tr.pooled[u * CONV_FILTERS..(u + 1) * CONV_FILTERS];
            let dh = &mut d_pooled[u * CONV_FILTERS..(u + 1) * CONV_FILTERS];
            for f in 0..CONV_FILTERS {
                g_att[f] += d_score * h[f];
                dh[f] = a * d_ctx[f] + d_score * self.attention[f];
            }
        }

        let mut d_conv = vec![0.0; CONV_STEPS * CONV_FILTERS];
        for (i, &g) in d_pooled.iter().enumerate() {
            let f = i % CONV_FILTERS;
            d_conv[tr.pool_arg[i] * CONV_FILTERS + f] += g;
        }

        let scale = self.input_scale[0];
        let input = x.values();
        for t in 0..CONV_STEPS {
            let field = &input[t * N_CHANNELS..(t + CONV_WIDTH) * N_CHANNELS];
            for f in 0..CONV_FILTERS {
                let g = d_conv[t * CONV_FILTERS + f];
                if g == 0.0 {
                    continue;
                }
                g_cb[f] += g;
                let gs = g * scale;
                let gw = &mut g_cw[f * CONV_FAN_IN..(f + 1) * CONV_FAN_IN];
                for (w, v) in gw.iter_mut().zip(field) {
                    *w += gs * v;
                }
            }
        }
        Ok((loss, tr.probs))
    }

    fn snap_to_f32(&mut self) {
        for t in self.trainable_mut() {
            snap(t);
        }
        snap(&mut self.input_scale);
    }
}
