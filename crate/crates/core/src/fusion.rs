//! The real-time decision layer: per-tick Stage-I classification, the
//! sliding fall vote, the one-shot CSI check and the alert taxonomy.

use crate::csi::{rate_of_change, AmplitudeMatrix, CsiError, CsiTensor, DwtConfig, WINDOW_FRAMES};
use crate::imu::{window_features, FilterConfig, ImuError, ImuStream, MagnitudeSample, WINDOW_LEN};
use crate::neural::{argmax, CnnModel, MlpModel, Mode, Network, NnError};
use crate::sensor_model::{CsiFrame, ImuSample, Trace};
use std::collections::VecDeque;
use std::fmt;
use thiserror::Error;

/// Slots in the vote buffer.
pub const VOTE_CAPACITY: usize = 20;

// Timestamps within this distance of a tick count as on it.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
    #[error("IMU and CSI traces overlap for {overlap:.3} s, need at least {required:.3} s")]
    InsufficientOverlap { overlap: f64, required: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Csi(#[from] CsiError),
    #[error(transparent)]
    Imu(#[from] ImuError),
}

/// FIFO of the most recent Stage-I decisions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteBuffer {
    slots: VecDeque<bool>,
    capacity: usize,
    falls: usize,
}

impl Default for VoteBuffer {
    fn default() -> Self {
        Self::new(VOTE_CAPACITY)
    }
}

impl VoteBuffer {
    /// A zero capacity is bumped to one so the buffer can always hold the
    /// latest vote.
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self {
            slots: VecDeque::with_capacity(capacity),
            capacity,
            falls: 0,
        }
    }

    pub fn push(&mut self, is_fall: bool) {
        if self.slots.len() == self.capacity {
            if let Some(true) = self.slots.pop_front() {
                self.falls -= 1;
            }
        }
        self.slots.push_back(is_fall);
        self.falls += usize::from(is_fall);
    }

    pub fn fall_count(&self) -> usize {
        self.falls
    }

    pub fn fill(&self) -> usize {
        self.slots.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.slots.clear();
        self.falls = 0;
    }

    /// Oldest first.
    pub fn slots(&self) -> impl Iterator<Item = bool> + '_ {
        self.slots.iter().copied()
    }
}

pub fn push_vote(mut buffer: VoteBuffer, is_fall: bool) -> VoteBuffer {
    buffer.push(is_fall);
    buffer
}

pub fn vote_fired(buffer: &VoteBuffer, cfg: &FusionConfig) -> bool {
    buffer.fall_count() >= cfg.vote_threshold
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Seconds between ticks.
    pub step: f64,
    /// Stage-I window length in seconds.
    pub window: f64,
    pub vote_threshold: usize,
    pub vote_capacity: usize,
    /// Seconds of CSI (and IMU) examined by Stage II.
    pub stage2_window: f64,
    pub motion_class_index: usize,
    pub fall_class_index: usize,
    /// Post-event IMU peak (m/s²) below which the phone counts as motionless.
    pub imu_quiet_threshold: f64,
    pub filter: FilterConfig,
    pub dwt: DwtConfig,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            step: 0.1,
            window: 3.0,
            vote_threshold: 3,
            vote_capacity: VOTE_CAPACITY,
            stage2_window: 3.0,
            motion_class_index: 1,
            fall_class_index: 0,
            imu_quiet_threshold: 0.5,
            filter: FilterConfig::default(),
            dwt: DwtConfig::default(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |m: String| Err(FusionError::InvalidConfig(m));
        if !(self.step.is_finite() && self.step > 0.0 && self.step <= self.window) {
            return bad(format!("step {} must lie in (0, window]", self.step));
        }
        if !(self.window.is_finite() && self.stage2_window.is_finite() && self.stage2_window > 0.0) {
            return bad("window lengths must be finite and positive".into());
        }
        if self.vote_capacity == 0 || !(1..=self.vote_capacity).contains(&self.vote_threshold) {
            return bad(format!(
                "vote threshold {} must lie in 1..={}",
                self.vote_threshold, self.vote_capacity
            ));
        }
        if self.motion_class_index > 1 {
            return bad(format!(
                "motion class index {} exceeds the CNN output",
                self.motion_class_index
            ));
        }
        if !(self.imu_quiet_threshold.is_finite() && self.imu_quiet_threshold >= 0.0) {
            return bad("imu quiet threshold must be finite and non-negative".into());
        }
        FilterConfig::new(self.filter.alpha)?;
        if self.dwt.levels == 0 {
            return bad("dwt levels must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Alert {
    None,
    Reminder,
    Emergency,
    Misjudgment,
}

impl Alert {
    pub const ALL: [Alert; 4] = [Alert::None, Alert::Reminder, Alert::Emergency, Alert::Misjudgment];

    pub fn as_str(&self) -> &'static str {
        match self {
            Alert::None => "NONE",
            Alert::Reminder => "REMINDER",
            Alert::Emergency => "EMERGENCY",
            Alert::Misjudgment => "MISJUDGMENT",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for Alert {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionVerdict {
    pub t: f64,
    pub stage1_class: usize,
    pub stage1_probs: Vec<f64>,
    /// Fall votes in the buffer after this tick's vote.
    pub votes: usize,
    pub vote_fired: bool,
    /// Present exactly when the vote fired.
    pub stage2_motion: Option<bool>,
    pub alert: Alert,
}

/// Alert tallies over a verdict stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AlertCounts {
    pub none: usize,
    pub reminder: usize,
    pub emergency: usize,
    pub misjudgment: usize,
}

impl AlertCounts {
    pub fn from_verdicts(verdicts: &[DetectionVerdict]) -> Self {
        let mut c = Self::default();
        for v in verdicts {
            match v.alert {
                Alert::None => c.none += 1,
                Alert::Reminder => c.reminder += 1,
                Alert::Emergency => c.emergency += 1,
                Alert::Misjudgment => c.misjudgment += 1,
            }
        }
        c
    }

    pub fn get(&self, alert: Alert) -> usize {
        match alert {
            Alert::None => self.none,
            Alert::Reminder => self.reminder,
            Alert::Emergency => self.emergency,
            Alert::Misjudgment => self.misjudgment,
        }
    }

    /// Every alert other than `None`.
    pub fn raised(&self) -> usize {
        self.reminder + self.emergency + self.misjudgment
    }
}

/// Maps a CNN verdict and the post-event phone activity to an alert.
pub fn stage2_decide(
    tensor: &CsiTensor,
    cnn: &CnnModel,
    post_imu: &[f64],
    cfg: &FusionConfig,
) -> Result<(bool, Alert), FusionError> {
    if post_imu.len() != WINDOW_LEN {
        return Err(FusionError::ShapeMismatch(format!(
            "post-event IMU holds {} magnitudes, expected {WINDOW_LEN}",
            post_imu.len()
        )));
    }
    let probs = cnn.forward(tensor, Mode::Infer)?;
    let motion = argmax(&probs) == cfg.motion_class_index;
    let alert = if !motion {
        Alert::Emergency
    } else if post_imu.iter().copied().fold(f64::NEG_INFINITY, f64::max) < cfg.imu_quiet_threshold {
        Alert::Misjudgment
    } else {
        Alert::Reminder
    };
    Ok((motion, alert))
}

/// Outcome of one Stage-I tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickResult {
    pub class: usize,
    pub probs: Vec<f64>,
    pub votes: usize,
    pub fired: bool,
}

/// Streaming Stage I: gravity removal, the rolling 30-sample magnitude
/// window, MLP inference and the vote buffer.
#[derive(Debug, Clone)]
pub struct StageOne {
    stream: ImuStream,
    window: VecDeque<MagnitudeSample>,
    votes: VoteBuffer,
}

impl StageOne {
    pub fn new(cfg: &FusionConfig) -> Self {
        Self {
            stream: ImuStream::new(cfg.filter),
            window: VecDeque::with_capacity(WINDOW_LEN + 1),
            votes: VoteBuffer::new(cfg.vote_capacity),
        }
    }

    pub fn push_sample(&mut self, sample: &ImuSample) -> MagnitudeSample {
        let m = self.stream.push(sample);
        if self.window.len() == WINDOW_LEN {
            self.window.pop_front();
        }
        self.window.push_back(m);
        m
    }

    pub fn window_full(&self) -> bool {
        self.window.len() == WINDOW_LEN
    }

    pub fn votes(&self) -> &VoteBuffer {
        &self.votes
    }

    pub fn reset_votes(&mut self) {
        self.votes.clear();
    }

    /// Magnitudes the current filter state would give for `upcoming`
    /// samples, without advancing the stream.
    pub fn preview(&self, upcoming: &[ImuSample]) -> Vec<MagnitudeSample> {
        let mut stream = self.stream.clone();
        upcoming.iter().map(|s| stream.push(s)).collect()
    }

    /// Classifies the current window and records its vote. Returns `None`
    /// until a full window has been seen.
    pub fn tick(&mut self, mlp: &MlpModel, cfg: &FusionConfig) -> Result<Option<TickResult>, FusionError> {
        if !self.window_full() {
            return Ok(None);
        }
        let (a, b) = self.window.as_slices();
        let features = if b.is_empty() {
            window_features(a)?
        } else {
            window_features(&self.window.iter().copied().collect::<Vec<_>>())?
        };
        let probs = mlp.forward(&features, Mode::Infer)?;
        let class = argmax(&probs);
        self.votes.push(class == cfg.fall_class_index);
        Ok(Some(TickResult {
            class,
            votes: self.votes.fall_count(),
            fired: vote_fired(&self.votes, cfg),
            probs,
        }))
    }
}

/// Replays an IMU and a CSI trace through both stages.
///
/// Ticks fall at `imu.first_t + k·step`. Each tick with a full Stage-I
/// window yields one verdict. When the vote fires, Stage II examines the
/// CSI frames starting at that tick and the IMU that follows it, Stage I is
/// suspended for `stage2_window` seconds (those ticks emit nothing) and the
/// vote buffer is cleared. The session stops early if the traces cannot
/// supply a complete Stage-II window.
pub fn run_session(
    imu: &Trace<ImuSample>,
    csi: &Trace<CsiFrame>,
    mlp: &MlpModel,
    cnn: &CnnModel,
    cfg: &FusionConfig,
) -> Result<Vec<DetectionVerdict>, FusionError> {
    cfg.validate()?;
    if mlp.n_classes() <= cfg.fall_class_index {
        return Err(FusionError::InvalidConfig(format!(
            "fall class index {} exceeds the {} MLP classes",
            cfg.fall_class_index,
            mlp.n_classes()
        )));
    }
    let (Some(i0), Some(i1), Some(c0), Some(c1)) = (imu.first_t(), imu.last_t(), csi.first_t(), csi.last_t()) else {
        return Err(FusionError::InsufficientOverlap {
            overlap: 0.0,
            required: cfg.window,
        });
    };
    let overlap = i1.min(c1) - i0.max(c0);
    if overlap < cfg.window - TIME_EPS {
        return Err(FusionError::InsufficientOverlap {
            overlap: overlap.max(0.0),
            required: cfg.window,
        });
    }

    let samples = imu.samples();
    let frames = csi.samples();
    let mut stage1 = StageOne::new(cfg);
    let mut next_sample = 0usize;
    let mut resume_at = f64::NEG_INFINITY;
    let mut verdicts = Vec::new();

    for k in 0.. {
        let t = i0 + k as f64 * cfg.step;
        if t > i1 + TIME_EPS {
            break;
        }
        while next_sample < samples.len() && samples[next_sample].t <= t + TIME_EPS {
            stage1.push_sample(&samples[next_sample]);
            next_sample += 1;
        }
        if t < resume_at - TIME_EPS {
            continue;
        }
        let Some(tick) = stage1.tick(mlp, cfg)? else {
            continue;
        };
        let mut verdict = DetectionVerdict {
            t,
            stage1_class: tick.class,
            votes: tick.votes,
            stage1_probs: tick.probs,
            vote_fired: tick.fired,
            stage2_motion: None,
            alert: Alert::None,
        };
        if tick.fired {
            let start = csi.lower_bound(t - TIME_EPS);
            let upcoming = &samples[next_sample..];
            if start + WINDOW_FRAMES > frames.len() || upcoming.len() < WINDOW_LEN {
                break;
            }
            let amp = AmplitudeMatrix::from_frames(&frames[start..start + WINDOW_FRAMES])?;
            let tensor = rate_of_change(&amp, &cfg.dwt)?;
            let post: Vec<f64> = stage1.preview(&upcoming[..WINDOW_LEN]).iter().map(|m| m.lacc).collect();
            let (motion, alert) = stage2_decide(&tensor, cnn, &post, cfg)?;
            verdict.stage2_motion = Some(motion);
            verdict.alert = alert;
            stage1.reset_votes();
            resume_at = t + cfg.stage2_window;
        }
        verdicts.push(verdict);
    }
    Ok(verdicts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn push_vote_examples() {
        let mut b = VoteBuffer::default();
        for _ in 0..20 {
            b = push_vote(b, false);
        }
        b = push_vote(b, true);
        assert_eq!((b.fall_count(), b.fill()), (1, 20));

        let mut b = VoteBuffer::default();
        let pushes: Vec<bool> = (0..25).map(|i| i % 2 == 0).collect();
        for &p in &pushes {
            b.push(p);
        }
        assert_eq!(b.slots().collect::<Vec<_>>(), pushes[5..].to_vec());

        assert_eq!(VoteBuffer::default().fall_count(), 0);
    }

    #[test]
    fn vote_fired_examples() {
        let cfg = FusionConfig::default();
        let mut b = VoteBuffer::default();
        for i in 0..20 {
            b.push(i < 3);
        }
        assert!(vote_fired(&b, &cfg));
        let mut b = VoteBuffer::default();
        for i in 0..20 {
            b.push(i < 2);
        }
        assert!(!vote_fired(&b, &cfg));
        let one = FusionConfig {
            vote_threshold: 1,
            ..cfg
        };
        let mut b = VoteBuffer::default();
        b.push(true);
        assert!(vote_fired(&b, &one));
    }

    #[test]
    fn config_bounds() {
        assert!(FusionConfig::default().validate().is_ok());
        for cfg in [
            FusionConfig {
                step: 0.0,
                ..Default::default()
            },
            FusionConfig {
                step: 4.0,
                ..Default::default()
            },
            FusionConfig {
                vote_threshold: 0,
                ..Default::default()
            },
            FusionConfig {
                vote_threshold: 21,
                ..Default::default()
            },
        ] {
            assert!(matches!(cfg.validate(), Err(FusionError::InvalidConfig(_))));
        }
    }

    #[test]
    fn alert_names_round_trip() {
        for a in Alert::ALL {
            assert_eq!(Alert::from_name(a.as_str()), Some(a));
        }
    }

    #[test]
    fn post_imu_length_is_checked() {
        let r = stage2_decide(
            &CsiTensor::zeros(),
            &CnnModel::new(1),
            &[0.0; 5],
            &FusionConfig::default(),
        );
        assert!(matches!(r, Err(FusionError::ShapeMismatch(_))));
    }

    proptest! {
        #[test]
        fn buffer_matches_naive_list(pushes in prop::collection::vec(any::<bool>(), 0..200)) {
            let mut b = VoteBuffer::default();
            for (i, &p) in pushes.iter().enumerate() {
                b.push(p);
                let lo = (i + 1).saturating_sub(VOTE_CAPACITY);
                let naive = &pushes[lo..=i];
                prop_assert_eq!(b.slots().collect::<Vec<_>>(), naive.to_vec());
                prop_assert_eq!(b.fall_count(), naive.iter().filter(|&&v| v).count());
            }
        }
    }
}
