//! Seeded synthetic sensor data.
//!
//! IMU traces are built from per-class kinematic templates in a world frame
//! (raised-cosine pulses, sinusoidal gait), rotated into a fixed random phone
//! orientation and sampled at 10 Hz with additive noise. CSI frames come from
//! a multipath superposition with static paths plus, while the scene is
//! active, Doppler-drifting body reflections. Every generator is a pure
//! function of its parameters and seed.

use crate::csi::{
    amplitude, doppler_shift, rate_of_change, AmplitudeMatrix, CsiError, CsiTensor, DopplerParams, DwtConfig,
};
use crate::imu::{magnitude_trace, window_features, FeatureVector20, FilterConfig, WINDOW_LEN};
use crate::neural::split_indices;
use crate::sensor_model::{CsiFrame, CsiGeometry, ImuSample, Trace, N_ANTENNAS, N_SUBCARRIERS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;
use thiserror::Error;

pub const GRAVITY: f64 = 9.80665;
/// Sample rate of both synthetic streams.
pub const RATE: f64 = 10.0;
pub const SUBCARRIER_SPACING: f64 = 312.5e3;
/// Stillness before each dataset window so the gravity filter has settled.
pub const LEAD_IN: f64 = 2.0;

/// Dataset sizes per action, in [`ActionClass::ALL`] order.
pub const TABLE_I_COUNTS: [usize; 10] = [820, 748, 870, 876, 818, 896, 759, 832, 866, 820];
pub const CSI_STATIC_COUNT: usize = 820;
pub const CSI_MOTION_COUNT: usize = 800;
pub const CSI_STATIC_LABEL: usize = 0;
pub const CSI_MOTION_LABEL: usize = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid multipath model: {0}")]
    InvalidModel(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Csi(#[from] CsiError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionClass {
    Fall,
    Play,
    PickPut,
    Sit,
    Squat,
    Static,
    Walk,
    UpDown,
    TowardDown,
    Throwing,
}

impl ActionClass {
    pub const ALL: [ActionClass; 10] = [
        ActionClass::Fall,
        ActionClass::Play,
        ActionClass::PickPut,
        ActionClass::Sit,
        ActionClass::Squat,
        ActionClass::Static,
        ActionClass::Walk,
        ActionClass::UpDown,
        ActionClass::TowardDown,
        ActionClass::Throwing,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionClass::Fall => "fall",
            ActionClass::Play => "play",
            ActionClass::PickPut => "pickput",
            ActionClass::Sit => "sit",
            ActionClass::Squat => "squat",
            ActionClass::Static => "static",
            ActionClass::Walk => "walk",
            ActionClass::UpDown => "up_down",
            ActionClass::TowardDown => "toward_down",
            ActionClass::Throwing => "throwing",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn table_count(self) -> usize {
        TABLE_I_COUNTS[self.index()]
    }
}

impl fmt::Display for ActionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLevels {
    /// Accelerometer noise per axis, m/s².
    pub acc: f64,
    /// Gyroscope noise per axis, rad/s.
    pub gyr: f64,
    /// CSI noise per real and imaginary component.
    pub csi: f64,
}

impl Default for NoiseLevels {
    fn default() -> Self {
        Self {
            acc: 0.04,
            gyr: 0.01,
            csi: 0.5,
        }
    }
}

/// Mixes a base seed with a stream tag and an index into an independent
/// seed, so per-item generation does not depend on iteration order.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    for _ in 0..2 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

// ---------------------------------------------------------------- geometry

pub type Rotation = [[f64; 3]; 3];

/// Uniformly distributed rotation matrix.
pub fn random_rotation(rng: &mut impl Rng) -> Rotation {
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

pub fn rotate(r: &Rotation, v: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| r[i][0] * v[0] + r[i][1] * v[1] + r[i][2] * v[2])
}

pub fn transpose(r: &Rotation) -> Rotation {
    std::array::from_fn(|i| std::array::from_fn(|j| r[j][i]))
}

/// Applies one rotation to every accelerometer and gyroscope vector.
pub fn rotate_imu_trace(trace: &Trace<ImuSample>, r: &Rotation) -> Trace<ImuSample> {
    let samples = trace
        .samples()
        .iter()
        .map(|s| ImuSample::new(s.t, rotate(r, s.acc), rotate(r, s.gyr)))
        .collect();
    Trace::new(samples, trace.nominal_rate()).expect("rotation keeps timestamps valid")
}

fn add(a: [f64; 3], b: [f64; 3], k: f64) -> [f64; 3] {
    [a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2]]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

const UP: [f64; 3] = [0.0, 0.0, 1.0];

fn horizontal(rng: &mut impl Rng) -> [f64; 3] {
    let psi = rng.random_range(0.0..2.0 * PI);
    [psi.cos(), psi.sin(), 0.0]
}

fn random_axis(rng: &mut impl Rng) -> [f64; 3] {
    normalize(std::array::from_fn(|_| StandardNormal.sample(rng)))
}

// --------------------------------------------------------------- templates

/// Raised-cosine bump of unit height.
fn rc(t: f64, center: f64, width: f64) -> f64 {
    let x = (t - center) / width;
    if x.abs() < 0.5 {
        0.5 * (1.0 + (2.0 * PI * x).cos())
    } else {
        0.0
    }
}

/// Positive lobe followed by an equal negative lobe; integrates to zero.
fn biphasic(t: f64, center: f64, width: f64) -> f64 {
    rc(t, center - width / 2.0, width) - rc(t, center + width / 2.0, width)
}

/// World-frame linear acceleration and angular rate per sample.
struct Kinematics {
    lacc: Vec<[f64; 3]>,
    omega: Vec<[f64; 3]>,
    rate: f64,
}

impl Kinematics {
    fn new(n: usize, rate: f64) -> Self {
        Self {
            lacc: vec![[0.0; 3]; n],
            omega: vec![[0.0; 3]; n],
            rate,
        }
    }

    fn len(&self) -> usize {
        self.lacc.len()
    }

    fn time(&self, i: usize) -> f64 {
        i as f64 / self.rate
    }

    fn pulse(&mut self, dir: [f64; 3], amp: f64, shape: impl Fn(f64) -> f64) {
        for i in 0..self.len() {
            let s = shape(self.time(i));
            if s != 0.0 {
                self.lacc[i] = add(self.lacc[i], dir, amp * s);
            }
        }
    }

    fn spin(&mut self, axis: [f64; 3], amp: f64, shape: impl Fn(f64) -> f64) {
        for i in 0..self.len() {
            let s = shape(self.time(i));
            if s != 0.0 {
                self.omega[i] = add(self.omega[i], axis, amp * s);
            }
        }
    }

    fn walk(&mut self, span: Range<usize>, scale: f64, rng: &mut impl Rng) {
        let f = rng.random_range(1.7..2.3);
        let a_v = scale * rng.random_range(1.8..3.0);
        let a_h = scale * rng.random_range(0.8..1.5);
        let yaw = scale * rng.random_range(0.6..1.0);
        let (p1, p2) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
        let h = horizontal(rng);
        for i in span.start..span.end.min(self.len()) {
            let t = self.time(i);
            let w = 2.0 * PI * f * t;
            self.lacc[i] = add(
                add(self.lacc[i], UP, a_v * (w + p1).sin()),
                h,
                a_h * (0.5 * w + p2).sin(),
            );
            self.omega[i] = add(
                add(self.omega[i], UP, yaw * (0.5 * w + p2).sin()),
                h,
                0.3 * yaw * (w + p1).cos(),
            );
        }
    }

    fn play(&mut self, span: Range<usize>, rng: &mut impl Rng) {
        // (lacc axis, spin axis, lacc amplitude, spin amplitude, frequency, phase)
        type Component = ([f64; 3], [f64; 3], f64, f64, f64, f64);
        let comps: Vec<Component> = (0..3)
            .map(|_| {
                (
                    random_axis(rng),
                    random_axis(rng),
                    rng.random_range(0.2..0.6),
                    rng.random_range(0.6..1.5),
                    rng.random_range(0.3..1.5),
                    rng.random_range(0.0..2.0 * PI),
                )
            })
            .collect();
        for i in span.start..span.end.min(self.len()) {
            let t = self.time(i);
            for &(da, dg, a, g, f, p) in &comps {
                let s = (2.0 * PI * f * t + p).sin();
                self.lacc[i] = add(self.lacc[i], da, a * s);
                self.omega[i] = add(self.omega[i], dg, g * s);
            }
        }
    }

    /// Free-fall-like descent ending in an impact at `impact` seconds whose
    /// sampled area cancels the descent, then nothing.
    fn drop(&mut self, impact: f64, rng: &mut impl Rng) {
        let t_d = rng.random_range(0.4..0.6);
        let a_d = rng.random_range(7.0..9.5);
        let w = rng.random_range(0.2..0.3);
        let dir = normalize(add(UP, horizontal(rng), 0.3));
        let start = impact - t_d;
        let descent = move |t: f64| {
            if t > start && t < impact {
                -(PI * (t - start) / t_d).sin()
            } else {
                0.0
            }
        };
        let s_d: f64 = (0..self.len()).map(|i| -descent(self.time(i))).sum();
        let s_i: f64 = (0..self.len()).map(|i| rc(self.time(i), impact, w)).sum();
        self.pulse(dir, a_d, descent);
        if s_i > 0.0 {
            self.pulse(dir, a_d * s_d / s_i, |t| rc(t, impact, w));
        }
        let tumble = random_axis(rng);
        self.spin(tumble, rng.random_range(2.0..4.0), |t| {
            rc(t, impact - t_d / 2.0, t_d + 0.2)
        });
        let jolt = random_axis(rng);
        self.spin(jolt, rng.random_range(2.0..4.0), |t| rc(t, impact, 0.3));
    }

    /// Adds one action whose characteristic event sits at `event` seconds;
    /// periodic actions fill `span`.
    fn action(&mut self, class: ActionClass, span: Range<usize>, event: f64, rng: &mut impl Rng) {
        match class {
            ActionClass::Static => {}
            ActionClass::Walk => self.walk(span, 1.0, rng),
            ActionClass::Play => self.play(span, rng),
            ActionClass::Fall => self.drop(event, rng),
            ActionClass::PickPut => {
                let t2 = event + rng.random_range(1.0..1.6);
                let w = rng.random_range(0.5..0.7);
                let axis = horizontal(rng);
                for (t, sign) in [(event, 1.0), (t2, -1.0)] {
                    self.pulse(UP, sign * rng.random_range(2.5..4.0), |x| biphasic(x, t, w));
                    self.spin(axis, rng.random_range(1.2..2.0), |x| rc(x, t, 0.6));
                }
            }
            ActionClass::Sit => {
                let w = rng.random_range(0.6..0.9);
                self.pulse(UP, -rng.random_range(2.0..3.5), |x| biphasic(x, event, w));
                self.spin(horizontal(rng), rng.random_range(0.8..1.5), |x| rc(x, event, 1.0));
            }
            ActionClass::Squat => {
                let t2 = event + rng.random_range(1.2..1.6);
                let w = rng.random_range(0.5..0.7);
                let axis = horizontal(rng);
                for (t, sign) in [(event, -1.0), (t2, 1.0)] {
                    self.pulse(UP, sign * rng.random_range(1.5..2.5), |x| biphasic(x, t, w));
                    self.spin(axis, rng.random_range(0.2..0.5), |x| rc(x, t, 0.6));
                }
            }
            ActionClass::UpDown => {
                let t2 = event + rng.random_range(0.5..0.9);
                let w = rng.random_range(0.3..0.4);
                let axis = horizontal(rng);
                for (t, sign) in [(event, 1.0), (t2, -1.0)] {
                    self.pulse(UP, sign * rng.random_range(7.0..11.0), |x| biphasic(x, t, w));
                    self.spin(axis, rng.random_range(1.5..2.5), |x| rc(x, t, 0.4));
                }
            }
            ActionClass::TowardDown => {
                let dir = normalize(add(horizontal(rng), UP, -1.0));
                self.pulse(dir, rng.random_range(5.0..8.0), |x| biphasic(x, event, 0.3));
                let w = rng.random_range(0.4..0.5);
                self.spin(random_axis(rng), rng.random_range(4.0..7.0), |x| rc(x, event, w));
            }
            ActionClass::Throwing => {
                let w = rng.random_range(0.3..0.4);
                self.pulse(horizontal(rng), rng.random_range(12.0..20.0), |x| biphasic(x, event, w));
                let ws = rng.random_range(0.4..0.6);
                self.spin(random_axis(rng), rng.random_range(8.0..14.0), |x| rc(x, event, ws));
            }
        }
    }

    /// Phone-frame samples: `Rᵀ(g + a)` and `Rᵀω` plus noise, timestamps
    /// `t0 + i / rate`.
    fn to_trace(&self, r: &Rotation, noise: &NoiseLevels, t0: f64, rng: &mut impl Rng) -> Trace<ImuSample> {
        let rt = transpose(r);
        let acc_noise = Normal::new(0.0, noise.acc.max(0.0)).expect("finite noise");
        let gyr_noise = Normal::new(0.0, noise.gyr.max(0.0)).expect("finite noise");
        let samples = (0..self.len())
            .map(|i| {
                let world = add(self.lacc[i], UP, GRAVITY);
                let acc = rotate(&rt, world).map(|v| v + acc_noise.sample(rng));
                let gyr = rotate(&rt, self.omega[i]).map(|v| v + gyr_noise.sample(rng));
                ImuSample::new(t0 + self.time(i), acc, gyr)
            })
            .collect();
        Trace::new(samples, self.rate).expect("synthetic timestamps are increasing")
    }
}

/// Where a class's event lands within a 3 s window, in seconds.
fn event_time(class: ActionClass, rng: &mut impl Rng) -> f64 {
    match class {
        // Impact on the sample grid between samples 9 and 19.
        ActionClass::Fall => rng.random_range(9..=19) as f64 / RATE,
        ActionClass::PickPut | ActionClass::Squat => rng.random_range(0.3..0.9),
        ActionClass::UpDown => rng.random_range(0.5..1.2),
        ActionClass::Sit => rng.random_range(0.6..1.8),
        _ => rng.random_range(0.8..1.8),
    }
}

fn render_window(class: ActionClass, seed: u64, rate: f64, duration: f64, lead_in: f64) -> Trace<ImuSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = random_rotation(&mut rng);
    let lead = (lead_in * rate).round() as usize;
    let n = lead + (duration * rate).round().max(1.0) as usize;
    let mut kin = Kinematics::new(n, rate);
    let offset = lead as f64 / rate;
    let event = offset + event_time(class, &mut rng);
    match class {
        ActionClass::Walk | ActionClass::Play => kin.action(class, 0..n, event, &mut rng),
        ActionClass::Fall => {
            // Half the falls start from walking, half from standing.
            if rng.random_bool(0.5) {
                let stop = ((event - 0.8) * rate).max(0.0) as usize;
                let scale = rng.random_range(0.6..1.0);
                kin.walk(0..stop, scale, &mut rng);
            }
            kin.action(class, 0..n, event, &mut rng);
        }
        _ => kin.action(class, 0..n, event, &mut rng),
    }
    kin.to_trace(&r, &NoiseLevels::default(), 0.0, &mut rng)
}

/// One labelled IMU recording of `duration` seconds starting at t = 0.
pub fn gen_imu(class: ActionClass, seed: u64, rate: f64, duration: f64) -> (Trace<ImuSample>, ActionClass) {
    (render_window(class, seed, rate, duration, 0.0), class)
}

/// Stage-I features of one synthetic window, computed after a settled
/// gravity filter.
pub fn imu_window_features(class: ActionClass, seed: u64) -> FeatureVector20 {
    let trace = render_window(class, seed, RATE, 3.0, LEAD_IN);
    let mags = magnitude_trace(&trace, &FilterConfig::default());
    window_features(&mags[mags.len() - WINDOW_LEN..]).expect("window has 30 samples")
}

// --------------------------------------------------------------------- CSI

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub amplitude: f64,
    /// Phase at t = 0 on the carrier, radians.
    pub phase: f64,
    /// Propagation delay in seconds; sets the slope across subcarriers.
    pub delay: f64,
    /// Extra phase per antenna index.
    pub antenna_phase: f64,
    /// Doppler drift in Hz for a moving reflector.
    pub doppler: Option<f64>,
}

/// Sum of complex path contributions
/// `Σ Aᵢ·exp(j(φᵢ − 2π f_k τᵢ + a·ψᵢ + 2π f_D t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipathModel {
    paths: Vec<Path>,
    /// Carrier angular frequency, rad/s.
    pub omega: f64,
}

impl MultipathModel {
    pub fn new(paths: Vec<Path>, omega: f64) -> Result<Self, SynthError> {
        if paths.is_empty() {
            return Err(SynthError::InvalidModel("at least one path is required".into()));
        }
        if paths.iter().any(|p| !(p.amplitude >= 0.0 && p.amplitude.is_finite())) {
            return Err(SynthError::InvalidModel(
                "path amplitudes must be finite and non-negative".into(),
            ));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(SynthError::InvalidModel("carrier frequency must be positive".into()));
        }
        Ok(Self { paths, omega })
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    fn subcarrier_frequency(&self, k: usize) -> f64 {
        self.omega / (2.0 * PI) + (k as f64 - (N_SUBCARRIERS / 2) as f64) * SUBCARRIER_SPACING
    }

    /// Complex response at one antenna and subcarrier, each path amplitude
    /// multiplied by the matching `gains` entry (all ones when `None`).
    fn response_scaled(&self, t: f64, antenna: usize, k: usize, gains: Option<&[f64]>) -> (f64, f64) {
        let f = self.subcarrier_frequency(k);
        let mut re = 0.0;
        let mut im = 0.0;
        for (i, p) in self.paths.iter().enumerate() {
            let a = p.amplitude * gains.map_or(1.0, |g| g[i]);
            let theta = p.phase - 2.0 * PI * f * p.delay
                + antenna as f64 * p.antenna_phase
                + 2.0 * PI * p.doppler.unwrap_or(0.0) * t;
            re += a * theta.cos();
            im += a * theta.sin();
        }
        (re, im)
    }

    pub fn response(&self, t: f64, antenna: usize, subcarrier: usize) -> (f64, f64) {
        self.response_scaled(t, antenna, subcarrier, None)
    }

    pub fn frame(&self, t: f64) -> CsiFrame {
        let mut frame = CsiFrame::zeros(t);
        for a in 0..N_ANTENNAS {
            for k in 0..N_SUBCARRIERS {
                let (re, im) = self.response(t, a, k);
                frame.re[a][k] = re;
                frame.im[a][k] = im;
            }
        }
        frame
    }
}

/// A room: fixed reflections plus body reflections that appear while the
/// scene is active.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiScene {
    pub fixed: MultipathModel,
    pub body: MultipathModel,
    /// Per body path: (depth, Hz, phase) of the amplitude modulation from
    /// limb movement.
    pub modulation: Vec<(f64, f64, f64)>,
    pub noise: f64,
}

// Seconds for the body paths to fade fully in or out.
const ACTIVITY_RAMP: f64 = 0.3;

impl CsiScene {
    pub fn random(rng: &mut impl Rng, noise: f64) -> Self {
        let geometry = CsiGeometry::default();
        let omega = 2.0 * PI * geometry.carrier_frequency;
        let n_fixed = rng.random_range(3..=5);
        let fixed = (0..n_fixed)
            .map(|i| Path {
                amplitude: if i == 0 {
                    rng.random_range(200.0..400.0)
                } else {
                    rng.random_range(20.0..80.0)
                },
                phase: rng.random_range(-PI..PI),
                delay: rng.random_range(10e-9..60e-9),
                antenna_phase: rng.random_range(-PI..PI),
                doppler: None,
            })
            .collect();
        let n_body = rng.random_range(2..=3);
        let body: Vec<Path> = (0..n_body)
            .map(|_| {
                let v = rng.random_range(0.035..0.07);
                let theta = rng.random_range(0.0..PI / 4.0);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                Path {
                    amplitude: rng.random_range(200.0..300.0),
                    phase: rng.random_range(-PI..PI),
                    delay: rng.random_range(15e-9..70e-9),
                    antenna_phase: rng.random_range(-PI..PI),
                    doppler: Some(sign * doppler_shift(&DopplerParams { v, theta, geometry })),
                }
            })
            .collect();
        let modulation = (0..n_body)
            .map(|_| {
                (
                    rng.random_range(0.2..0.5),
                    rng.random_range(0.3..0.8),
                    rng.random_range(0.0..2.0 * PI),
                )
            })
            .collect();
        Self {
            fixed: MultipathModel::new(fixed, omega).expect("valid fixed paths"),
            body: MultipathModel::new(body, omega).expect("valid body paths"),
            modulation,
            noise,
        }
    }

    /// Frames at `t0 + i / rate`; `active[i]` says whether someone moves.
    pub fn render(&self, active: &[bool], t0: f64, rate: f64, rng: &mut impl Rng) -> Trace<CsiFrame> {
        let noise = Normal::new(0.0, self.noise.max(0.0)).expect("finite noise");
        let step = 1.0 / (rate * ACTIVITY_RAMP);
        let mut envelope = if active.first().copied().unwrap_or(false) {
            1.0
        } else {
            0.0
        };
        let mut frames = Vec::with_capacity(active.len());
        for (i, &on) in active.iter().enumerate() {
            if i > 0 {
                envelope = if on {
                    (envelope + step).min(1.0)
                } else {
                    (envelope - step).max(0.0)
                };
            }
            let t = t0 + i as f64 / rate;
            let gains: Vec<f64> = self
                .modulation
                .iter()
                .map(|&(depth, f, p)| envelope * (1.0 + depth * (2.0 * PI * f * t + p).sin()))
                .collect();
            let mut frame = CsiFrame::zeros(t);
            for a in 0..N_ANTENNAS {
                for k in 0..N_SUBCARRIERS {
                    let (sr, si) = self.fixed.response(t, a, k);
                    let (br, bi) = if envelope > 0.0 {
                        self.body.response_scaled(t, a, k, Some(&gains))
                    } else {
                        (0.0, 0.0)
                    };
                    frame.re[a][k] = sr + br + noise.sample(rng);
                    frame.im[a][k] = si + bi + noise.sample(rng);
                }
            }
            frames.push(frame);
        }
        Trace::new(frames, rate).expect("synthetic timestamps are increasing")
    }
}

/// `frames` CSI frames from a random room, empty or with someone moving.
/// `frames` below two is raised to two.
pub fn gen_csi(motion: bool, seed: u64, frames: usize) -> Trace<CsiFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = CsiScene::random(&mut rng, NoiseLevels::default().csi);
    scene.render(&vec![motion; frames.max(2)], 0.0, RATE, &mut rng)
}

/// Max absolute rate of change of a 30-frame window.
pub fn csi_motion_statistic(frames: &[CsiFrame], cfg: &DwtConfig) -> Result<f64, CsiError> {
    Ok(rate_of_change(&AmplitudeMatrix::from_frames(frames)?, cfg)?.max_abs())
}

// ----------------------------------------------------------------- dataset

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    /// Windows per action, in [`ActionClass::ALL`] order.
    pub imu_counts: [usize; 10],
    pub csi_static: usize,
    pub csi_motion: usize,
    pub train_fraction: f64,
}

impl DatasetSpec {
    pub fn table1() -> Self {
        Self {
            imu_counts: TABLE_I_COUNTS,
            csi_static: CSI_STATIC_COUNT,
            csi_motion: CSI_MOTION_COUNT,
            train_fraction: 0.7,
        }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            imu_counts: [n; 10],
            csi_static: n,
            csi_motion: n,
            train_fraction: 0.7,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.imu_counts.contains(&0) || self.csi_static == 0 || self.csi_motion == 0 {
            return Err(SynthError::InvalidSpec("every count must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(SynthError::InvalidSpec("train fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet<X> {
    pub inputs: Vec<X>,
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl<X: Clone> LabeledSet<X> {
    fn split(inputs: Vec<X>, labels: Vec<usize>, fraction: f64, seed: u64) -> Self {
        let (train, test) = split_indices(&labels, fraction, seed);
        Self {
            inputs,
            labels,
            train,
            test,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pairs(&self, indices: &[usize]) -> Vec<(X, usize)> {
        indices
            .iter()
            .map(|&i| (self.inputs[i].clone(), self.labels[i]))
            .collect()
    }

    pub fn train_pairs(&self) -> Vec<(X, usize)> {
        self.pairs(&self.train)
    }

    pub fn test_pairs(&self) -> Vec<(X, usize)> {
        self.pairs(&self.test)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub imu: LabeledSet<FeatureVector20>,
    pub csi: LabeledSet<CsiTensor>,
}

const STREAM_IMU: u64 = 1;
const STREAM_CSI: u64 = 2;
const STREAM_SPLIT: u64 = 3;
const STREAM_SCENARIO: u64 = 4;

/// One CSI training window; motion windows may start with up to 1.2 s of
/// stillness before the activity begins.
pub fn csi_window(motion: bool, seed: u64) -> Trace<CsiFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = CsiScene::random(&mut rng, NoiseLevels::default().csi);
    let onset = if motion { rng.random_range(0..=12) } else { WINDOW_LEN };
    let active: Vec<bool> = (0..WINDOW_LEN).map(|i| i >= onset).collect();
    scene.render(&active, 0.0, RATE, &mut rng)
}

pub fn gen_imu_dataset(spec: &DatasetSpec, seed: u64) -> Result<LabeledSet<FeatureVector20>, SynthError> {
    spec.validate()?;
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for class in ActionClass::ALL {
        for i in 0..spec.imu_counts[class.index()] {
            let s = derive_seed(seed, STREAM_IMU, ((class.index() as u64) << 32) | i as u64);
            inputs.push(imu_window_features(class, s));
            labels.push(class.index());
        }
    }
    Ok(LabeledSet::split(
        inputs,
        labels,
        spec.train_fraction,
        derive_seed(seed, STREAM_SPLIT, 0),
    ))
}

pub fn gen_csi_dataset(spec: &DatasetSpec, seed: u64) -> Result<LabeledSet<CsiTensor>, SynthError> {
    spec.validate()?;
    let cfg = DwtConfig::default();
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (label, count) in [(CSI_STATIC_LABEL, spec.csi_static), (CSI_MOTION_LABEL, spec.csi_motion)] {
        for i in 0..count {
            let s = derive_seed(seed, STREAM_CSI, ((label as u64) << 32) | i as u64);
            let trace = csi_window(label == CSI_MOTION_LABEL, s);
            let amp = AmplitudeMatrix::from_rows(trace.samples().iter().map(amplitude).collect(), 0.0)?;
            inputs.push(rate_of_change(&amp, &cfg)?);
            labels.push(label);
        }
    }
    Ok(LabeledSet::split(
        inputs,
        labels,
        spec.train_fraction,
        derive_seed(seed, STREAM_SPLIT, 1),
    ))
}

pub fn gen_dataset(spec: &DatasetSpec, seed: u64) -> Result<Dataset, SynthError> {
    Ok(Dataset {
        imu: gen_imu_dataset(spec, seed)?,
        csi: gen_csi_dataset(spec, seed)?,
    })
}

// --------------------------------------------------------------- scenarios

/// What the phone itself experiences during a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhoneMotion {
    /// On the person; renders the action's template.
    Carried,
    /// Lying somewhere, motionless.
    AtRest,
    /// In free flight, then landing and lying still.
    Tossed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub action: ActionClass,
    pub duration: f64,
    pub csi_active: bool,
    pub phone: PhoneMotion,
    /// Seconds from segment start to the action's event (impact, sit-down…).
    pub event_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    /// Fall, then lying still.
    FallStatic,
    /// Fall, then getting up and walking away.
    FallRecover,
    /// Phone tossed onto a sofa while the person keeps moving.
    Throw,
    /// Ordinary activity without falls.
    Daily,
    /// Nobody moves.
    AllStatic,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::FallStatic,
        ScenarioKind::FallRecover,
        ScenarioKind::Throw,
        ScenarioKind::Daily,
        ScenarioKind::AllStatic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::FallStatic => "fall-static",
            ScenarioKind::FallRecover => "fall-recover",
            ScenarioKind::Throw => "throw",
            ScenarioKind::Daily => "daily",
            ScenarioKind::AllStatic => "static",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub segments: Vec<Segment>,
    pub seed: u64,
    pub noise: NoiseLevels,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.segments.is_empty() {
            return Err(SynthError::InvalidScenario("timeline is empty".into()));
        }
        for s in &self.segments {
            if !(s.duration.is_finite() && s.duration > 0.0) {
                return Err(SynthError::InvalidScenario(format!(
                    "segment duration {} must be positive",
                    s.duration
                )));
            }
            if !(s.event_offset.is_finite() && s.event_offset >= 0.0) {
                return Err(SynthError::InvalidScenario("event offsets must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// A randomized timeline of the given kind.
    pub fn generate(kind: ScenarioKind, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SCENARIO, kind as u64));
        let seg = |action, duration: f64, csi_active, phone, event_offset| Segment {
            action,
            duration: (duration * RATE).round() / RATE,
            csi_active,
            phone,
            event_offset,
        };
        use ActionClass as A;
        use PhoneMotion as P;
        // Impact lands on the sample grid 0.5 to 0.7 s into the fall segment.
        let impact = |rng: &mut ChaCha8Rng| rng.random_range(5..=7) as f64 / RATE;
        let segments = match kind {
            ScenarioKind::FallStatic => vec![
                seg(A::Walk, rng.random_range(3.0..6.0), true, P::Carried, 0.0),
                seg(A::Fall, 0.8, true, P::Carried, impact(&mut rng)),
                seg(A::Static, rng.random_range(6.0..8.0), false, P::Carried, 0.0),
            ],
            ScenarioKind::FallRecover => {
                let hit = impact(&mut rng);
                let lie = rng.random_range(1.8..2.2);
                vec![
                    seg(A::Walk, rng.random_range(3.0..6.0), true, P::Carried, 0.0),
                    seg(A::Fall, 0.8, true, P::Carried, hit),
                    seg(A::Static, lie - (0.8 - hit), false, P::Carried, 0.0),
                    seg(A::Squat, 2.0, true, P::Carried, 0.3),
                    seg(A::Walk, rng.random_range(4.0..6.0), true, P::Carried, 0.0),
                ]
            }
            ScenarioKind::Throw => vec![
                seg(A::Walk, rng.random_range(3.0..6.0), true, P::Carried, 0.0),
                seg(A::Throwing, 0.8, true, P::Tossed, impact(&mut rng)),
                seg(A::Walk, rng.random_range(6.0..8.0), true, P::AtRest, 0.0),
            ],
            ScenarioKind::Daily => {
                let pool = [
                    A::Walk,
                    A::Static,
                    A::Sit,
                    A::Squat,
                    A::PickPut,
                    A::Play,
                    A::UpDown,
                    A::TowardDown,
                ];
                let n = rng.random_range(4..=6);
                let mut out = Vec::with_capacity(n);
                let mut prev = None;
                while out.len() < n {
                    let action = pool[rng.random_range(0..pool.len())];
                    if Some(action) == prev {
                        continue;
                    }
                    prev = Some(action);
                    let offset = rng.random_range(0.3..1.0);
                    out.push(seg(
                        action,
                        rng.random_range(3.0..6.0),
                        action != A::Static,
                        P::Carried,
                        offset,
                    ));
                }
                out
            }
            ScenarioKind::AllStatic => vec![seg(A::Static, rng.random_range(12.0..15.0), false, P::Carried, 0.0)],
        };
        Self {
            segments,
            seed,
            noise: NoiseLevels::default(),
        }
    }
}

/// A rendered scenario with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub imu: Trace<ImuSample>,
    pub csi: Trace<CsiFrame>,
    /// Times of fall-like impacts on the phone.
    pub impacts: Vec<f64>,
    /// Ground-truth action per IMU sample.
    pub labels: Vec<ActionClass>,
}

pub fn render_scenario(spec: &ScenarioSpec) -> Result<Scenario, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let r = random_rotation(&mut rng);
    let scene = CsiScene::random(&mut rng, spec.noise.csi);

    let bounds: Vec<usize> = std::iter::once(0)
        .chain(spec.segments.iter().scan(0.0, |acc, s| {
            *acc += s.duration;
            Some((*acc * RATE).round() as usize)
        }))
        .collect();
    let n = *bounds.last().expect("non-empty timeline");
    if n < 2 {
        return Err(SynthError::InvalidScenario(
            "timeline is shorter than two samples".into(),
        ));
    }
    let mut kin = Kinematics::new(n, RATE);
    let mut labels = Vec::with_capacity(n);
    let mut active = Vec::with_capacity(n);
    let mut impacts = Vec::new();
    for (i, seg) in spec.segments.iter().enumerate() {
        let span = bounds[i]..bounds[i + 1];
        let event = bounds[i] as f64 / RATE + seg.event_offset;
        match seg.phone {
            PhoneMotion::Carried => {
                kin.action(seg.action, span.clone(), event, &mut rng);
                if seg.action == ActionClass::Fall {
                    impacts.push(event);
                }
            }
            PhoneMotion::AtRest => {}
            PhoneMotion::Tossed => {
                kin.drop(event, &mut rng);
                impacts.push(event);
            }
        }
        // The fall segment's CSI follows the person until the impact.
        for j in span.clone() {
            let t = j as f64 / RATE;
            let still_after_impact =
                seg.action == ActionClass::Fall && !spec.segments.get(i + 1).is_some_and(|s| s.csi_active) && t > event;
            active.push(seg.csi_active && !still_after_impact);
        }
        labels.extend(std::iter::repeat_n(seg.action, span.len()));
    }
    let imu = kin.to_trace(&r, &spec.noise, 0.0, &mut rng);
    let csi = scene.render(&active, 0.0, RATE, &mut rng);
    Ok(Scenario {
        spec: spec.clone(),
        imu,
        csi,
        impacts,
        labels,
    })
}

pub fn gen_scenario(kind: ScenarioKind, seed: u64) -> Scenario {
    render_scenario(&ScenarioSpec::generate(kind, seed)).expect("generated timelines are valid")
}
