use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Fully connected layer; `weight` is `n_out × n_in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weight: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    /// Uniform `±√(6 / (fan_in + fan_out))` weights, zero bias.
    pub fn glorot(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut layer = Self::zeros(n_in, n_out);
        glorot_fill(&mut layer.weight, n_in, n_out, rng);
        layer
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_in);
        for (o, (row, b)) in out.iter_mut().zip(self.weight.chunks_exact(self.n_in).zip(&self.bias)) {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// Accumulates parameter gradients; writes the input gradient if asked.
    pub fn backward(
        &self,
        x: &[f64],
        grad_out: &[f64],
        grad_weight: &mut [f64],
        grad_bias: &mut [f64],
        grad_in: Option<&mut [f64]>,
    ) {
        for (o, &go) in grad_out.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            grad_bias[o] += go;
            let row = &mut grad_weight[o * self.n_in..(o + 1) * self.n_in];
            for (gw, &v) in row.iter_mut().zip(x) {
                *gw += go * v;
            }
        }
        if let Some(gi) = grad_in {
            gi.iter_mut().for_each(|g| *g = 0.0);
            for (o, &go) in grad_out.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                let row = &self.weight[o * self.n_in..(o + 1) * self.n_in];
                for (g, &w) in gi.iter_mut().zip(row) {
                    *g += go * w;
                }
            }
        }
    }
}

pub(crate) fn glorot_fill(values: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in values {
        *v = rng.random_range(-limit..limit);
    }
}

pub(crate) fn relu_in_place(values: &mut [f64]) {
    for v in values {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Inverted dropout mask: each entry is 0 or `1 / (1 − rate)`.
pub(crate) fn dropout_mask(len: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { 1.0 / keep })
        .collect()
}
