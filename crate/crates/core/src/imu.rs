//! Stage-I inertial preprocessing.
//!
//! Raw accelerometer samples pass through a per-axis exponential gravity
//! filter; the residual (linear acceleration) and the raw angular rate are
//! reduced to orientation-free magnitudes, and each 3 s window is split into a
//! 2 s and a 1 s part from which five statistics per channel are taken.

use crate::sensor_model::{ImuSample, Trace};
use thiserror::Error;

/// Samples per Stage-I window (3 s at 10 Hz).
pub const WINDOW_LEN: usize = 30;
/// Samples in the first part of a window (offset < 2 s).
pub const PART1_LEN: usize = 20;
/// Samples in the second part of a window.
pub const PART2_LEN: usize = WINDOW_LEN - PART1_LEN;
/// Length of the Stage-I feature vector.
pub const N_FEATURES: usize = 20;

const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImuError {
    #[error("gravity state has not seen a sample yet")]
    UninitializedGravity,
    #[error("window has {got} samples, expected {expected}")]
    WrongWindowLength { got: usize, expected: usize },
    #[error("filter weight must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    /// Weight of the previous gravity estimate.
    pub alpha: f64,
}

impl FilterConfig {
    pub fn new(alpha: f64) -> Result<Self, ImuError> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self { alpha })
        } else {
            Err(ImuError::InvalidAlpha(alpha))
        }
    }
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { alpha: 0.85 }
    }
}

/// Per-axis gravity estimate carried across a stream.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GravityState {
    pub g: [f64; 3],
    pub initialized: bool,
}

impl GravityState {
    pub fn new() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearAccelSample {
    pub t: f64,
    pub lacc: [f64; 3],
}

/// Advances the gravity filter by one sample: `g = a·g + (1 − a)·acc` per
/// axis. The first sample seeds the estimate directly.
pub fn gravity_update(state: GravityState, sample: &ImuSample, cfg: &FilterConfig) -> GravityState {
    if !state.initialized {
        return GravityState {
            g: sample.acc,
            initialized: true,
        };
    }
    let a = cfg.alpha;
    let mut g = state.g;
    for (gi, &acc) in g.iter_mut().zip(sample.acc.iter()) {
        *gi = a * *gi + (1.0 - a) * acc;
    }
    GravityState { g, initialized: true }
}

pub fn linear_acceleration(sample: &ImuSample, state: &GravityState) -> Result<LinearAccelSample, ImuError> {
    if !state.initialized {
        return Err(ImuError::UninitializedGravity);
    }
    Ok(LinearAccelSample {
        t: sample.t,
        lacc: [
            sample.acc[0] - state.g[0],
            sample.acc[1] - state.g[1],
            sample.acc[2] - state.g[2],
        ],
    })
}

pub fn magnitude3(x: f64, y: f64, z: f64) -> f64 {
    (x * x + y * y + z * z).sqrt()
}

/// Magnitudes derived from one IMU sample after gravity removal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnitudeSample {
    pub t: f64,
    pub lacc: f64,
    pub gyr: f64,
}

/// Streaming gravity removal and magnitude synthesis for one IMU stream.
#[derive(Debug, Clone, Default)]
pub struct ImuStream {
    cfg: FilterConfig,
    state: GravityState,
}

impl ImuStream {
    pub fn new(cfg: FilterConfig) -> Self {
        Self {
            cfg,
            state: GravityState::new(),
        }
    }

    pub fn state(&self) -> &GravityState {
        &self.state
    }

    pub fn push(&mut self, sample: &ImuSample) -> MagnitudeSample {
        self.state = gravity_update(self.state, sample, &self.cfg);
        let lacc = linear_acceleration(sample, &self.state)
            .expect("gravity state is initialized after an update")
            .lacc;
        MagnitudeSample {
            t: sample.t,
            lacc: magnitude3(lacc[0], lacc[1], lacc[2]),
            gyr: magnitude3(sample.gyr[0], sample.gyr[1], sample.gyr[2]),
        }
    }
}

/// Runs the gravity filter over a whole trace.
pub fn linear_acceleration_trace(trace: &Trace<ImuSample>, cfg: &FilterConfig) -> Vec<LinearAccelSample> {
    let mut state = GravityState::new();
    trace
        .samples()
        .iter()
        .map(|s| {
            state = gravity_update(state, s, cfg);
            linear_acceleration(s, &state).expect("initialized")
        })
        .collect()
}

/// Linear-acceleration and angular-rate magnitudes for a whole trace.
pub fn magnitude_trace(trace: &Trace<ImuSample>, cfg: &FilterConfig) -> Vec<MagnitudeSample> {
    let mut stream = ImuStream::new(*cfg);
    trace.samples().iter().map(|s| stream.push(s)).collect()
}

/// Splits a 30-sample window into its 2 s head and 1 s tail.
pub fn split_window(window: &[f64]) -> Result<(&[f64], &[f64]), ImuError> {
    if window.len() != WINDOW_LEN {
        return Err(ImuError::WrongWindowLength {
            got: window.len(),
            expected: WINDOW_LEN,
        });
    }
    Ok(window.split_at(PART1_LEN))
}

/// Max, mean, median, excess kurtosis and population variance of one part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartStats {
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub kurtosis: f64,
    pub variance: f64,
}

impl PartStats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let k = sorted.len();
        let median = if k % 2 == 1 {
            sorted[k / 2]
        } else {
            0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
        };
        let (m2, m4) = values.iter().fold((0.0, 0.0), |(m2, m4), &v| {
            let d = v - mean;
            let d2 = d * d;
            (m2 + d2, m4 + d2 * d2)
        });
        let variance = m2 / n;
        let kurtosis = if variance < VARIANCE_FLOOR {
            0.0
        } else {
            (m4 / n) / (variance * variance) - 3.0
        };
        Self {
            max,
            mean,
            median,
            kurtosis,
            variance,
        }
    }

    fn as_array(&self) -> [f64; 5] {
        [self.max, self.mean, self.median, self.kurtosis, self.variance]
    }
}

/// Ordered Stage-I features:
/// `[acc part1, acc part2, gyr part1, gyr part2] × [max, mean, median, kurtosis, variance]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector20(pub [f64; N_FEATURES]);

impl FeatureVector20 {
    pub fn values(&self) -> &[f64; N_FEATURES] {
        &self.0
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|v| v.is_finite()) && (0..4).all(|block| self.0[block * 5 + 4] >= 0.0)
    }
}

pub fn extract_features(acc_mag: &[f64], gyr_mag: &[f64]) -> Result<FeatureVector20, ImuError> {
    let (a1, a2) = split_window(acc_mag)?;
    let (g1, g2) = split_window(gyr_mag)?;
    let mut out = [0.0; N_FEATURES];
    for (block, part) in [a1, a2, g1, g2].into_iter().enumerate() {
        out[block * 5..block * 5 + 5].copy_from_slice(&PartStats::of(part).as_array());
    }
    Ok(FeatureVector20(out))
}

/// Features for the window made of the last [`WINDOW_LEN`] magnitude samples.
pub fn window_features(window: &[MagnitudeSample]) -> Result<FeatureVector20, ImuError> {
    if window.len() != WINDOW_LEN {
        return Err(ImuError::WrongWindowLength {
            got: window.len(),
            expected: WINDOW_LEN,
        });
    }
    let mut acc = [0.0; WINDOW_LEN];
    let mut gyr = [0.0; WINDOW_LEN];
    for (i, m) in window.iter().enumerate() {
        acc[i] = m.lacc;
        gyr[i] = m.gyr;
    }
    extract_features(&acc, &gyr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(acc: [f64; 3]) -> ImuSample {
        ImuSample::new(0.0, acc, [0.0; 3])
    }

    #[test]
    fn one_step_update() {
        let s = GravityState {
            g: [0.0; 3],
            initialized: true,
        };
        let next = gravity_update(s, &sample([1.0, 0.0, 0.0]), &FilterConfig::default());
        assert!((next.g[0] - 0.15).abs() < 1e-15);
        assert_eq!(next.g[1], 0.0);
        assert_eq!(next.g[2], 0.0);
    }

    #[test]
    fn first_sample_seeds() {
        let s = gravity_update(GravityState::new(), &sample([1.0, 2.0, 9.0]), &FilterConfig::default());
        assert!(s.initialized);
        assert_eq!(s.g, [1.0, 2.0, 9.0]);
    }

    #[test]
    fn constant_input_converges() {
        let cfg = FilterConfig::default();
        let mut s = GravityState {
            g: [0.0; 3],
            initialized: true,
        };
        for _ in 0..100 {
            s = gravity_update(s, &sample([0.0, 0.0, 9.81]), &cfg);
        }
        assert!((s.g[2] - 9.81).abs() < 1e-6);
    }

    #[test]
    fn matches_scalar_recurrence() {
        let cfg = FilterConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let accs: Vec<[f64; 3]> = (0..50)
            .map(|_| {
                [
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                ]
            })
            .collect();
        let mut s = GravityState::new();
        let mut streamed = Vec::new();
        for a in &accs {
            s = gravity_update(s, &sample(*a), &cfg);
            streamed.push(s.g);
        }
        for axis in 0..3 {
            let mut g = accs[0][axis];
            assert_eq!(streamed[0][axis].to_bits(), g.to_bits());
            for k in 1..accs.len() {
                g = 0.85 * g + (1.0 - 0.85) * accs[k][axis];
                assert_eq!(streamed[k][axis].to_bits(), g.to_bits());
            }
        }
    }

    #[test]
    fn linear_acceleration_cases() {
        let g = GravityState {
            g: [0.0, 0.0, 9.81],
            initialized: true,
        };
        let l = linear_acceleration(&sample([0.0, 0.0, 9.81]), &g).unwrap();
        assert_eq!(l.lacc, [0.0; 3]);
        let g = GravityState {
            g: [0.5; 3],
            initialized: true,
        };
        let l = linear_acceleration(&sample([1.0, 2.0, 3.0]), &g).unwrap();
        assert_eq!(l.lacc, [0.5, 1.5, 2.5]);
        assert_eq!(
            linear_acceleration(&sample([1.0, 2.0, 3.0]), &GravityState::new()),
            Err(ImuError::UninitializedGravity)
        );
    }

    #[test]
    fn magnitude_cases() {
        assert_eq!(magnitude3(3.0, 4.0, 0.0), 5.0);
        assert_eq!(magnitude3(0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn split_indices() {
        let w: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let (a, b) = split_window(&w).unwrap();
        assert_eq!(a, &w[..20]);
        assert_eq!(b, &w[20..]);
        assert_eq!(
            split_window(&w[..29]),
            Err(ImuError::WrongWindowLength { got: 29, expected: 30 })
        );
        let c = [2.5; 30];
        let (a, b) = split_window(&c).unwrap();
        assert!(a.iter().chain(b).all(|&v| v == 2.5));
    }

    #[test]
    fn constant_windows_give_degenerate_features() {
        let f = extract_features(&[5.0; 30], &[5.0; 30]).unwrap();
        for block in 0..4 {
            assert_eq!(&f.0[block * 5..block * 5 + 5], &[5.0, 5.0, 5.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn single_spike_part() {
        let mut acc = [0.0; 30];
        acc[19] = 10.0;
        let f = extract_features(&acc, &[1.0; 30]).unwrap();
        assert_eq!(f.0[0], 10.0);
        assert!((f.0[1] - 0.5).abs() < 1e-12);
        assert_eq!(f.0[2], 0.0);
        assert!((f.0[4] - 4.75).abs() < 1e-12);
    }

    #[test]
    fn rejects_wrong_lengths() {
        assert!(extract_features(&[0.0; 29], &[0.0; 30]).is_err());
        assert!(extract_features(&[0.0; 30], &[0.0; 31]).is_err());
    }

    proptest! {
        #[test]
        fn ewma_contraction_bound(a in -20.0f64..20.0, g0 in -20.0f64..20.0, k in 1usize..60) {
            let cfg = FilterConfig::default();
            let mut s = GravityState { g: [g0; 3], initialized: true };
            for _ in 0..k {
                s = gravity_update(s, &sample([a; 3]), &cfg);
            }
            let bound = 0.85f64.powi(k as i32) * (g0 - a).abs();
            prop_assert!((s.g[0] - a).abs() <= bound + 1e-12);
        }

        #[test]
        fn features_ignore_order(v in proptest::collection::vec(0.0f64..30.0, 30), w in proptest::collection::vec(0.0f64..10.0, 30)) {
            // reversing swaps the parts, so compare each part reversed in place
            let mut vr = v.clone();
            vr[..20].reverse();
            vr[20..].reverse();
            let mut wr = w.clone();
            wr[..20].reverse();
            wr[20..].reverse();
            let f = extract_features(&v, &w).unwrap();
            let g = extract_features(&vr, &wr).unwrap();
            for (x, y) in f.0.iter().zip(g.0.iter()) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn part_ordering_bounds(v in proptest::collection::vec(0.0f64..30.0, 30)) {
            let (p1, p2) = split_window(&v).unwrap();
            for part in [p1, p2] {
                let s = PartStats::of(part);
                let min = part.iter().copied().fold(f64::INFINITY, f64::min);
                prop_assert!(s.max >= s.mean - 1e-12);
                prop_assert!(s.mean >= min - 1e-12);
                prop_assert!(s.variance >= 0.0);
            }
        }
    }
}
