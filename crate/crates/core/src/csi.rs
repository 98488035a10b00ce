//! Stage-II CSI preprocessing: amplitude and phase extraction, per-subcarrier
//! wavelet denoising, the amplitude rate-of-change tensor, and Doppler
//! diagnostics.

use crate::sensor_model::{CsiFrame, CsiGeometry, N_CHANNELS, N_SUBCARRIERS};
use std::f64::consts::PI;
use thiserror::Error;

/// Frames per Stage-II window (3 s at 10 Hz).
pub const WINDOW_FRAMES: usize = 30;
/// Time steps in the rate-of-change tensor.
pub const TENSOR_STEPS: usize = WINDOW_FRAMES - 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CsiError {
    #[error("signal of length {len} is too short for {levels} decomposition levels")]
    SignalTooShort { len: usize, levels: usize },
    #[error("decomposition levels must be at least 1")]
    InvalidLevels,
    #[error("expected {expected} rows, got {got}")]
    WrongRowCount { got: usize, expected: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("tensor shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { got: usize, expected: usize },
}

/// Orthogonal wavelet families available to the denoiser.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wavelet {
    Haar,
    /// Daubechies with four vanishing moments (8 taps).
    Db4,
}

const HAAR: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];

// Reconstruction low-pass filter, from the exact spectral factorization
// (the usual 12-digit tables break orthogonality at the 1e-12 level).
const DB4: [f64; 8] = [
    0.2303778133088965,
    0.7148465705529157,
    0.6308807679298589,
    -0.027983769416859854,
    -0.18703481171909309,
    0.030841381835560764,
    0.0328830116668852,
    -0.010597401785069032,
];

impl Wavelet {
    pub fn scaling_filter(&self) -> &'static [f64] {
        match self {
            Wavelet::Haar => &HAAR,
            Wavelet::Db4 => &DB4,
        }
    }

    /// Quadrature mirror of the scaling filter.
    pub fn wavelet_filter(&self) -> Vec<f64> {
        let h = self.scaling_filter();
        let l = h.len();
        (0..l)
            .map(|n| if n % 2 == 0 { h[l - 1 - n] } else { -h[l - 1 - n] })
            .collect()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Wavelet::Haar => "haar",
            Wavelet::Db4 => "db4",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "haar" | "db1" => Some(Wavelet::Haar),
            "db4" => Some(Wavelet::Db4),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdRule {
    /// Soft thresholding at `σ·√(2 ln N)`, `σ = MAD(level-1 details) / 0.6745`.
    UniversalSoft,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwtConfig {
    pub wavelet: Wavelet,
    pub levels: usize,
    pub threshold_rule: ThresholdRule,
}

impl Default for DwtConfig {
    fn default() -> Self {
        Self {
            wavelet: Wavelet::Db4,
            levels: 2,
            threshold_rule: ThresholdRule::UniversalSoft,
        }
    }
}

/// Multi-level coefficients of a symmetrically extended signal.
///
/// `details[0]` is the finest level.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub approx: Vec<f64>,
    pub details: Vec<Vec<f64>>,
    wavelet: Wavelet,
    signal_len: usize,
}

fn fold_symmetric(j: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = j.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

fn analysis_step(x: &[f64], h: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = x.len();
    let half = m / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for k in 0..half {
        let (mut sa, mut sd) = (0.0, 0.0);
        for (n, (&hn, &gn)) in h.iter().zip(g).enumerate() {
            let v = x[(2 * k + n) % m];
            sa += hn * v;
            sd += gn * v;
        }
        a[k] = sa;
        d[k] = sd;
    }
    (a, d)
}

fn synthesis_step(a: &[f64], d: &[f64], h: &[f64], g: &[f64]) -> Vec<f64> {
    let m = 2 * a.len();
    let mut x = vec![0.0; m];
    for k in 0..a.len() {
        for (n, (&hn, &gn)) in h.iter().zip(g).enumerate() {
            x[(2 * k + n) % m] += hn * a[k] + gn * d[k];
        }
    }
    x
}

/// Forward DWT with symmetric boundary extension and a periodized filter
/// bank, so the transform of the extended signal is orthogonal.
pub fn dwt_decompose(signal: &[f64], wavelet: Wavelet, levels: usize) -> Result<Decomposition, CsiError> {
    if levels == 0 {
        return Err(CsiError::InvalidLevels);
    }
    let n = signal.len();
    if n < (1usize << levels) || n < 2 {
        return Err(CsiError::SignalTooShort { len: n, levels });
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(CsiError::NonFinite);
    }
    let h = wavelet.scaling_filter();
    let g = wavelet.wavelet_filter();
    // One full symmetric period [x, reverse(x)] is itself periodic, so the
    // periodized transform sees no wrap-around jump.
    let block = 1usize << levels;
    let ext_len = (2 * n).div_ceil(block) * block;
    let mut current: Vec<f64> = (0..ext_len).map(|i| signal[fold_symmetric(i as isize, n)]).collect();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (a, d) = analysis_step(&current, h, &g);
        details.push(d);
        current = a;
    }
    Ok(Decomposition {
        approx: current,
        details,
        wavelet,
        signal_len: n,
    })
}

/// Inverse of [`dwt_decompose`], cropped back to the original length.
pub fn dwt_reconstruct(dec: &Decomposition) -> Vec<f64> {
    let h = dec.wavelet.scaling_filter();
    let g = dec.wavelet.wavelet_filter();
    let mut current = dec.approx.clone();
    for d in dec.details.iter().rev() {
        current = synthesis_step(&current, d, h, &g);
    }
    current.truncate(dec.signal_len);
    current
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn soft_threshold(x: f64, lambda: f64) -> f64 {
    let m = x.abs() - lambda;
    if m > 0.0 {
        m.copysign(x)
    } else {
        0.0
    }
}

/// Noise threshold estimated from the finest detail level.
pub fn universal_threshold(finest_details: &[f64], signal_len: usize) -> f64 {
    let mut abs: Vec<f64> = finest_details.iter().map(|d| d.abs()).collect();
    let sigma = median(&mut abs) / 0.6745;
    sigma * (2.0 * (signal_len as f64).ln()).sqrt()
}

pub fn dwt_denoise(series: &[f64], cfg: &DwtConfig) -> Result<Vec<f64>, CsiError> {
    let mut dec = dwt_decompose(series, cfg.wavelet, cfg.levels)?;
    // A flat series has nothing to remove; returning it as-is keeps its
    // first differences exactly zero instead of rounding-noise small.
    if series.iter().all(|&v| v == series[0]) {
        return Ok(series.to_vec());
    }
    let lambda = match cfg.threshold_rule {
        ThresholdRule::UniversalSoft => universal_threshold(&dec.details[0], series.len()),
    };
    for level in dec.details.iter_mut() {
        for c in level.iter_mut() {
            *c = soft_threshold(*c, lambda);
        }
    }
    Ok(dwt_reconstruct(&dec))
}

/// Complex modulus per antenna and subcarrier, antenna-major.
pub fn amplitude(frame: &CsiFrame) -> [f64; N_CHANNELS] {
    let mut out = [0.0; N_CHANNELS];
    for (a, (re, im)) in frame.re.iter().zip(frame.im.iter()).enumerate() {
        for k in 0..N_SUBCARRIERS {
            out[a * N_SUBCARRIERS + k] = re[k].hypot(im[k]);
        }
    }
    out
}

/// Four-quadrant phase in (−π, π]; a zero entry maps to 0.
pub fn phase(frame: &CsiFrame) -> [f64; N_CHANNELS] {
    let mut out = [0.0; N_CHANNELS];
    for (a, (re, im)) in frame.re.iter().zip(frame.im.iter()).enumerate() {
        for k in 0..N_SUBCARRIERS {
            let (r, i) = (re[k], im[k]);
            out[a * N_SUBCARRIERS + k] = if r == 0.0 && i == 0.0 {
                0.0
            } else {
                let p = i.atan2(r);
                if p <= -PI {
                    PI
                } else {
                    p
                }
            };
        }
    }
    out
}

/// Amplitudes of one Stage-II window, rows in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeMatrix {
    rows: Vec<[f64; N_CHANNELS]>,
    pub t0: f64,
}

impl AmplitudeMatrix {
    pub fn from_rows(rows: Vec<[f64; N_CHANNELS]>, t0: f64) -> Result<Self, CsiError> {
        if rows.len() != WINDOW_FRAMES {
            return Err(CsiError::WrongRowCount {
                got: rows.len(),
                expected: WINDOW_FRAMES,
            });
        }
        if rows.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CsiError::NonFinite);
        }
        Ok(Self { rows, t0 })
    }

    pub fn from_frames(frames: &[CsiFrame]) -> Result<Self, CsiError> {
        let t0 = frames.first().map_or(0.0, |f| f.t);
        Self::from_rows(frames.iter().map(amplitude).collect(), t0)
    }

    pub fn rows(&self) -> &[[f64; N_CHANNELS]] {
        &self.rows
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[k]).collect()
    }
}

/// Denoised amplitude first differences, `TENSOR_STEPS × N_CHANNELS`,
/// stored row-major (time, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct CsiTensor {
    values: Vec<f64>,
}

impl CsiTensor {
    pub const LEN: usize = TENSOR_STEPS * N_CHANNELS;

    pub fn from_values(values: Vec<f64>) -> Result<Self, CsiError> {
        if values.len() != Self::LEN {
            return Err(CsiError::ShapeMismatch {
                got: values.len(),
                expected: Self::LEN,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CsiError::NonFinite);
        }
        Ok(Self { values })
    }

    pub fn zeros() -> Self {
        Self {
            values: vec![0.0; Self::LEN],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.values[t * N_CHANNELS + k]
    }

    /// Largest absolute entry; the static/motion diagnostic statistic.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Denoises each channel independently, then first-differences in time.
pub fn rate_of_change(amp: &AmplitudeMatrix, cfg: &DwtConfig) -> Result<CsiTensor, CsiError> {
    let mut values = vec![0.0; CsiTensor::LEN];
    for k in 0..N_CHANNELS {
        let denoised = dwt_denoise(&amp.column(k), cfg)?;
        for t in 0..TENSOR_STEPS {
            values[t * N_CHANNELS + k] = denoised[t + 1] - denoised[t];
        }
    }
    Ok(CsiTensor { values })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopplerParams {
    /// Relative speed in m/s.
    pub v: f64,
    /// Angle between motion and line of sight, radians.
    pub theta: f64,
    pub geometry: CsiGeometry,
}

/// `Δf = (v / c)·f₀·cos θ`.
pub fn doppler_shift(p: &DopplerParams) -> f64 {
    p.v / p.geometry.speed_of_light * p.geometry.carrier_frequency * p.theta.cos()
}

/// `Δφ = 2π·Δf·T_s / N`.
pub fn doppler_phase_shift(delta_f: f64, geometry: &CsiGeometry) -> f64 {
    2.0 * PI * delta_f * geometry.symbol_duration / geometry.n_subcarriers as f64
}
