//! `key = value` configuration files and the effective run configuration.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored, and ` #` after a value starts a trailing comment. The same format is used for manifests and reports so every
//! artifact can be read back with [`KeyValues::parse`].

use std::path::{Path, PathBuf};

use fallsense::csi::Wavelet;
use fallsense::fusion::FusionConfig;
use fallsense::imu::FilterConfig;
use fallsense::neural::TrainConfig;
use log::LevelFilter;

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 7;
pub const SEED_ENV: &str = "FALLSENSE_SEED";

/// Ordered `key = value` pairs. Later duplicates win on lookup.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut kv = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(format!("line {}: expected `key = value`", i + 1));
            };
            let k = k.trim();
            if k.is_empty() {
                return Err(format!("line {}: empty key", i + 1));
            }
            let v = match v.find(" #").or_else(|| v.find("\t#")) {
                Some(i) => &v[..i],
                None => v,
            };
            kv.push(k, v.trim());
        }
        Ok(kv)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Typed lookup; a missing key is a data error.
    pub fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self
            .get(key)
            .ok_or_else(|| CliError::Data(format!("missing key `{key}`")))?;
        raw.parse()
            .map_err(|_| CliError::Data(format!("bad value `{raw}` for `{key}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub imu: Option<PathBuf>,
    pub csi: Option<PathBuf>,
    pub mlp: Option<PathBuf>,
    pub cnn: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Everything a command needs besides its positional choices.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Nominal rates assigned to traces read from disk.
    pub imu_rate: f64,
    pub csi_rate: f64,
    pub fusion: FusionConfig,
    pub train: TrainConfig,
    pub log_level: LevelFilter,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            imu_rate: 10.0,
            csi_rate: 10.0,
            fusion: FusionConfig::default(),
            train: TrainConfig::default(),
            log_level: LevelFilter::Warn,
            paths: Paths::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("bad value `{value}` for `{key}`")))
}

pub fn parse_wavelet(s: &str) -> Option<Wavelet> {
    match s {
        "db4" => Some(Wavelet::Db4),
        "haar" => Some(Wavelet::Haar),
        _ => None,
    }
}

pub fn wavelet_name(w: Wavelet) -> &'static str {
    match w {
        Wavelet::Db4 => "db4",
        Wavelet::Haar => "haar",
    }
}

/// Reads the seed override from the environment, if set.
pub fn seed_from_env() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Usage(format!("{SEED_ENV}: {e}"))),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let f = &mut self.fusion;
        let t = &mut self.train;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "imu.rate" => self.imu_rate = parse(key, value)?,
            "csi.rate" => self.csi_rate = parse(key, value)?,
            "log.level" => self.log_level = parse(key, value)?,
            "fusion.step" => f.step = parse(key, value)?,
            "fusion.window" => f.window = parse(key, value)?,
            "fusion.vote_threshold" => f.vote_threshold = parse(key, value)?,
            "fusion.vote_capacity" => f.vote_capacity = parse(key, value)?,
            "fusion.stage2_window" => f.stage2_window = parse(key, value)?,
            "fusion.motion_class_index" => f.motion_class_index = parse(key, value)?,
            "fusion.fall_class_index" => f.fall_class_index = parse(key, value)?,
            "fusion.imu_quiet_threshold" => f.imu_quiet_threshold = parse(key, value)?,
            "filter.alpha" => {
                f.filter = FilterConfig {
                    alpha: parse(key, value)?,
                }
            }
            "dwt.wavelet" => {
                f.dwt.wavelet =
                    parse_wavelet(value).ok_or_else(|| CliError::Usage(format!("unknown wavelet `{value}`")))?
            }
            "dwt.levels" => f.dwt.levels = parse(key, value)?,
            "train.learning_rate" => t.learning_rate = parse(key, value)?,
            "train.momentum" => t.momentum = parse(key, value)?,
            "train.batch_size" => t.batch_size = parse(key, value)?,
            "train.epochs" => t.epochs = parse(key, value)?,
            "train.train_fraction" => t.train_fraction = parse(key, value)?,
            "paths.imu" => self.paths.imu = Some(value.into()),
            "paths.csi" => self.paths.csi = Some(value.into()),
            "paths.mlp" => self.paths.mlp = Some(value.into()),
            "paths.cnn" => self.paths.cnn = Some(value.into()),
            "paths.out" => self.paths.out = Some(value.into()),
            _ => return Err(CliError::Usage(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn apply(&mut self, kv: &KeyValues) -> Result<(), CliError> {
        for (k, v) in kv.iter() {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Reads a config file; parse failures are usage errors since the file
    /// is part of the invocation.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let kv = KeyValues::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        self.apply(&kv)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        // every failure here is a setting the caller chose
        let usage = |e: &dyn std::fmt::Display| CliError::Usage(e.to_string());
        self.fusion.validate().map_err(|e| usage(&e))?;
        self.train.validate().map_err(|e| usage(&e))?;
        if !(self.imu_rate > 0.0 && self.imu_rate.is_finite() && self.csi_rate > 0.0 && self.csi_rate.is_finite()) {
            return Err(CliError::Usage("trace rates must be positive".into()));
        }
        Ok(())
    }

    /// The effective numeric parameters, for manifests and reports.
    pub fn to_key_values(&self) -> KeyValues {
        let f = &self.fusion;
        let t = &self.train;
        let mut kv = KeyValues::new();
        kv.push("seed", self.seed);
        kv.push("imu.rate", self.imu_rate);
        kv.push("csi.rate", self.csi_rate);
        kv.push("fusion.step", f.step);
        kv.push("fusion.window", f.window);
        kv.push("fusion.vote_threshold", f.vote_threshold);
        kv.push("fusion.vote_capacity", f.vote_capacity);
        kv.push("fusion.stage2_window", f.stage2_window);
        kv.push("fusion.motion_class_index", f.motion_class_index);
        kv.push("fusion.fall_class_index", f.fall_class_index);
        kv.push("fusion.imu_quiet_threshold", f.imu_quiet_threshold);
        kv.push("filter.alpha", f.filter.alpha);
        kv.push("dwt.wavelet", wavelet_name(f.dwt.wavelet));
        kv.push("dwt.levels", f.dwt.levels);
        kv.push("train.learning_rate", t.learning_rate);
        kv.push("train.momentum", t.momentum);
        kv.push("train.batch_size", t.batch_size);
        kv.push("train.epochs", t.epochs);
        kv.push("train.train_fraction", t.train_fraction);
        kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_spacing() {
        let kv = KeyValues::parse("# run\n\nseed=3\n  fusion.step = 0.2  # coarse\nseed = 4\n").unwrap();
        assert_eq!(kv.get("seed"), Some("4"));
        assert_eq!(kv.get("fusion.step"), Some("0.2"));
        assert_eq!(kv.get("missing"), None);
        assert!(KeyValues::parse("no equals sign").is_err());
        assert!(KeyValues::parse(" = 3").is_err());
    }

    #[test]
    fn effective_parameters_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.set("fusion.vote_threshold", "5").unwrap();
        cfg.set("dwt.wavelet", "haar").unwrap();
        cfg.set("train.learning_rate", "0.003").unwrap();
        let text = cfg.to_key_values().render();
        let mut back = RunConfig::default();
        back.apply(&KeyValues::parse(&text).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_settings_are_usage_errors() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.set("fusion.nope", "1").unwrap_err().exit_code(), 1);
        assert_eq!(cfg.set("fusion.step", "fast").unwrap_err().exit_code(), 1);
        cfg.set("fusion.vote_threshold", "21").unwrap();
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 1);
        let mut cfg = RunConfig::default();
        cfg.set("filter.alpha", "1.5").unwrap();
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 1);
    }
}
