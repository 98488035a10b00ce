//! Timestamped sensor records, trace containers and window slicing.
//!
//! Every stream in the engine is a [`Trace`]: an ordered, strictly increasing
//! sequence of timestamped samples with a nominal rate. Timestamps are stored
//! explicitly so that jittery captures and synthetic traces share one path.

use thiserror::Error;

/// Antennas reported per CSI frame.
pub const N_ANTENNAS: usize = 2;
/// Subcarriers reported per antenna.
pub const N_SUBCARRIERS: usize = 53;
/// Amplitude channels per frame (antenna-major).
pub const N_CHANNELS: usize = N_ANTENNAS * N_SUBCARRIERS;
/// Raw real/imaginary columns per frame.
pub const N_RAW_COLUMNS: usize = 2 * N_CHANNELS;

/// Default relative tolerance for [`check_rate`].
pub const DEFAULT_RATE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("trace is empty")]
    EmptyTrace,
    #[error("trace needs at least two samples to estimate its rate")]
    TooFewSamples,
    #[error("median interval {median_interval} s is outside tolerance of expected {expected_interval} s")]
    RateMismatch {
        median_interval: f64,
        expected_interval: f64,
    },
    #[error("no samples in window [{t0}, {t1})")]
    EmptyWindow { t0: f64, t1: f64 },
    #[error("timestamps must be strictly increasing (index {index})")]
    NonMonotonic { index: usize },
    #[error("non-finite or negative value in sample {index}")]
    InvalidSample { index: usize },
    #[error("nominal rate must be positive, got {0}")]
    InvalidRate(f64),
    #[error("invalid window: t0 = {t0}, duration = {duration}")]
    InvalidWindow { t0: f64, duration: f64 },
}

/// Anything carried in a [`Trace`].
pub trait Timestamped {
    fn t(&self) -> f64;

    /// Whether all channel values are finite and the timestamp is valid.
    fn is_valid(&self) -> bool;
}

/// One 6-axis inertial sample: gravity-inclusive acceleration (m/s²) and
/// angular rate (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub acc: [f64; 3],
    pub gyr: [f64; 3],
}

impl ImuSample {
    pub fn new(t: f64, acc: [f64; 3], gyr: [f64; 3]) -> Self {
        Self { t, acc, gyr }
    }
}

impl Timestamped for ImuSample {
    fn t(&self) -> f64 {
        self.t
    }

    fn is_valid(&self) -> bool {
        self.t.is_finite() && self.t >= 0.0 && self.acc.iter().chain(self.gyr.iter()).all(|v| v.is_finite())
    }
}

/// One CSI report: complex channel estimate per antenna and subcarrier.
///
/// Antenna index 0 is the first column block of each real/imaginary group in
/// the trace file layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiFrame {
    pub t: f64,
    pub re: [[f64; N_SUBCARRIERS]; N_ANTENNAS],
    pub im: [[f64; N_SUBCARRIERS]; N_ANTENNAS],
}

impl CsiFrame {
    pub fn zeros(t: f64) -> Self {
        Self {
            t,
            re: [[0.0; N_SUBCARRIERS]; N_ANTENNAS],
            im: [[0.0; N_SUBCARRIERS]; N_ANTENNAS],
        }
    }
}

impl Timestamped for CsiFrame {
    fn t(&self) -> f64 {
        self.t
    }

    fn is_valid(&self) -> bool {
        self.t.is_finite() && self.t >= 0.0 && self.re.iter().chain(self.im.iter()).flatten().all(|v| v.is_finite())
    }
}

/// A single scalar channel, e.g. a magnitude stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSample {
    pub t: f64,
    pub value: f64,
}

impl Timestamped for ScalarSample {
    fn t(&self) -> f64 {
        self.t
    }

    fn is_valid(&self) -> bool {
        self.t.is_finite() && self.t >= 0.0 && self.value.is_finite()
    }
}

/// Ordered stream of samples with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace<S> {
    samples: Vec<S>,
    nominal_rate: f64,
}

impl<S: Timestamped> Trace<S> {
    pub fn new(samples: Vec<S>, nominal_rate: f64) -> Result<Self, SensorError> {
        if !(nominal_rate.is_finite() && nominal_rate > 0.0) {
            return Err(SensorError::InvalidRate(nominal_rate));
        }
        for (index, s) in samples.iter().enumerate() {
            if !s.is_valid() {
                return Err(SensorError::InvalidSample { index });
            }
        }
        if let Some(index) = samples
            .windows(2)
            .position(|w| w[1].t().partial_cmp(&w[0].t()) != Some(std::cmp::Ordering::Greater))
        {
            return Err(SensorError::NonMonotonic { index: index + 1 });
        }
        Ok(Self { samples, nominal_rate })
    }

    pub fn samples(&self) -> &[S] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<S> {
        self.samples
    }

    pub fn nominal_rate(&self) -> f64 {
        self.nominal_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first_t(&self) -> Option<f64> {
        self.samples.first().map(Timestamped::t)
    }

    pub fn last_t(&self) -> Option<f64> {
        self.samples.last().map(Timestamped::t)
    }

    /// Index of the first sample with `t >= at`.
    pub fn lower_bound(&self, at: f64) -> usize {
        self.samples.partition_point(|s| s.t() < at)
    }
}

impl<S: Timestamped + Clone> Trace<S> {
    /// Concatenates two traces; `other` must start strictly after `self` ends.
    pub fn concat(&self, other: &Trace<S>) -> Result<Trace<S>, SensorError> {
        let mut samples = self.samples.clone();
        samples.extend_from_slice(&other.samples);
        Trace::new(samples, self.nominal_rate)
    }
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Validates that the median inter-sample interval is within `rel_tol` of
/// `1 / expected_hz`. The trace is returned untouched on success.
pub fn check_rate<S: Timestamped>(trace: Trace<S>, expected_hz: f64, rel_tol: f64) -> Result<Trace<S>, SensorError> {
    if trace.is_empty() {
        return Err(SensorError::EmptyTrace);
    }
    if trace.len() < 2 {
        return Err(SensorError::TooFewSamples);
    }
    let mut intervals: Vec<f64> = trace.samples.windows(2).map(|w| w[1].t() - w[0].t()).collect();
    let median_interval = median_of(&mut intervals);
    let expected_interval = 1.0 / expected_hz;
    if (median_interval - expected_interval).abs() <= rel_tol * expected_interval {
        Ok(trace)
    } else {
        Err(SensorError::RateMismatch {
            median_interval,
            expected_interval,
        })
    }
}

/// Returns the samples with `t0 <= t < t0 + duration`, order preserved.
pub fn slice_window<S: Timestamped + Clone>(trace: &Trace<S>, t0: f64, duration: f64) -> Result<Trace<S>, SensorError> {
    if !(t0.is_finite() && duration.is_finite() && duration > 0.0) {
        return Err(SensorError::InvalidWindow { t0, duration });
    }
    let t1 = t0 + duration;
    let start = trace.lower_bound(t0);
    let end = trace.lower_bound(t1);
    if start >= end {
        return Err(SensorError::EmptyWindow { t0, t1 });
    }
    Ok(Trace {
        samples: trace.samples[start..end].to_vec(),
        nominal_rate: trace.nominal_rate,
    })
}

/// Physical constants of the CSI capture used by the Doppler diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsiGeometry {
    pub n_antennas: usize,
    pub n_subcarriers: usize,
    /// OFDM symbol duration in seconds.
    pub symbol_duration: f64,
    /// Carrier frequency in Hz.
    pub carrier_frequency: f64,
    pub speed_of_light: f64,
}

impl Default for CsiGeometry {
    fn default() -> Self {
        Self {
            n_antennas: N_ANTENNAS,
            n_subcarriers: N_SUBCARRIERS,
            symbol_duration: 3.2e-6,
            carrier_frequency: 5.18e9,
            speed_of_light: 299_792_458.0,
        }
    }
}

impl CsiGeometry {
    pub fn is_valid(&self) -> bool {
        self.n_antennas > 0
            && self.n_subcarriers > 0
            && self.symbol_duration > 0.0
            && self.carrier_frequency > 0.0
            && self.speed_of_light > 0.0
    }

    pub fn raw_columns(&self) -> usize {
        self.n_antennas * self.n_subcarriers * 2
    }
}
