//! The four commands behind the binary. Each takes an effective
//! [`RunConfig`] and returns what it wrote, so tests can drive them without
//! spawning processes.

use std::path::{Path, PathBuf};

use fallsense::csi::CsiTensor;
use fallsense::fusion::{run_session, Alert, AlertCounts, DetectionVerdict};
use fallsense::imu::{magnitude_trace, FeatureVector20};
use fallsense::neural::{
    evaluate, load_cnn, load_mlp, save_weights, train, CnnModel, Metrics, MlpModel, Network, NormParams,
};
use fallsense::synth::{
    gen_csi_dataset, gen_imu_dataset, gen_scenario, ActionClass, DatasetSpec, LabeledSet, ScenarioKind,
    CSI_MOTION_LABEL, CSI_STATIC_LABEL,
};
use log::{debug, info};

use crate::config::{KeyValues, RunConfig};
use crate::error::CliError;
use crate::formats;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const IMU_FILE: &str = "imu.csv";
pub const CSI_FILE: &str = "csi.csv";
pub const IMU_FEATURES_FILE: &str = "imu_features.csv";
pub const CSI_WINDOWS_FILE: &str = "csi_windows.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetSize {
    Table1,
    /// The same count for every IMU class and both CSI classes.
    Uniform(usize),
}

impl std::str::FromStr for DatasetSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "table1" {
            return Ok(DatasetSize::Table1);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(DatasetSize::Uniform(n)),
            _ => Err(format!("expected `table1` or a positive count, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generate {
    Dataset(DatasetSize),
    Scenario(ScenarioKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    Imu,
    Csi,
}

impl ModelChoice {
    pub fn name(self) -> &'static str {
        match self {
            ModelChoice::Imu => "imu",
            ModelChoice::Csi => "csi",
        }
    }
}

fn imu_feature_names() -> Vec<String> {
    let mut names = Vec::new();
    for sensor in ["acc", "gyr"] {
        for part in ["p1", "p2"] {
            for stat in ["max", "mean", "median", "kurtosis", "var"] {
                names.push(format!("{sensor}_{part}_{stat}"));
            }
        }
    }
    names
}

fn split_names(n: usize, train: &[usize]) -> Vec<&'static str> {
    let mut names = vec!["test"; n];
    for &i in train {
        names[i] = "train";
    }
    names
}

fn dataset_spec(size: DatasetSize, cfg: &RunConfig) -> DatasetSpec {
    let mut spec = match size {
        DatasetSize::Table1 => DatasetSpec::table1(),
        DatasetSize::Uniform(n) => DatasetSpec::uniform(n),
    };
    spec.train_fraction = cfg.train.train_fraction;
    spec
}

fn dataset_manifest(spec: &DatasetSpec, cfg: &RunConfig) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.push("kind", "dataset");
    for (k, v) in cfg.to_key_values().iter() {
        kv.push(k, v);
    }
    for class in ActionClass::ALL {
        kv.push(format!("count.{}", class.name()), spec.imu_counts[class.index()]);
    }
    kv.push("count.csi_static", spec.csi_static);
    kv.push("count.csi_motion", spec.csi_motion);
    kv.push("total.imu", spec.imu_counts.iter().sum::<usize>());
    kv.push("total.csi", spec.csi_static + spec.csi_motion);
    kv.push("file.imu_features", IMU_FEATURES_FILE);
    kv.push("file.csi_windows", CSI_WINDOWS_FILE);
    kv
}

/// Dataset seed and spec recorded in a dataset manifest.
pub fn read_dataset_manifest(dir: &Path) -> Result<(u64, DatasetSpec), CliError> {
    let path = dir.join(MANIFEST_FILE);
    let kv = KeyValues::read(&path)?;
    let context = |e: CliError| CliError::Data(format!("{}: {e}", path.display()));
    if kv.get("kind") != Some("dataset") {
        return Err(CliError::Data(format!("{} is not a dataset manifest", path.display())));
    }
    let mut spec = DatasetSpec::uniform(1);
    for class in ActionClass::ALL {
        spec.imu_counts[class.index()] = kv.require(&format!("count.{}", class.name())).map_err(context)?;
    }
    spec.csi_static = kv.require("count.csi_static").map_err(context)?;
    spec.csi_motion = kv.require("count.csi_motion").map_err(context)?;
    spec.train_fraction = kv.require("train.train_fraction").map_err(context)?;
    let seed = kv.require("seed").map_err(context)?;
    spec.validate()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok((seed, spec))
}

fn write_imu_features(path: &Path, set: &LabeledSet<FeatureVector20>) -> Result<(), CliError> {
    let splits = split_names(set.len(), &set.train);
    let mut text = format!("label,split,{}\n", imu_feature_names().join(","));
    for (i, x) in set.inputs.iter().enumerate() {
        let values: Vec<String> = x.0.iter().map(|v| v.to_string()).collect();
        text.push_str(&format!(
            "{},{},{}\n",
            formats::class_name(set.labels[i]),
            splits[i],
            values.join(",")
        ));
    }
    formats::save_text(path, &text)
}

fn csi_label_name(label: usize) -> &'static str {
    if label == CSI_MOTION_LABEL {
        "motion"
    } else {
        "static"
    }
}

fn write_csi_windows(path: &Path, set: &LabeledSet<CsiTensor>) -> Result<(), CliError> {
    let splits = split_names(set.len(), &set.train);
    let mut text = String::from("index,label,split,max_rate\n");
    for (i, x) in set.inputs.iter().enumerate() {
        text.push_str(&format!(
            "{i},{},{},{}\n",
            csi_label_name(set.labels[i]),
            splits[i],
            x.max_abs()
        ));
    }
    formats::save_text(path, &text)
}

/// Writes a labelled dataset or one scenario's trace pair into `out_dir`
/// and returns the manifest.
pub fn cmd_generate(what: Generate, out_dir: &Path, cfg: &RunConfig) -> Result<KeyValues, CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let manifest = match what {
        Generate::Dataset(size) => {
            let spec = dataset_spec(size, cfg);
            let imu = gen_imu_dataset(&spec, cfg.seed)?;
            let csi = gen_csi_dataset(&spec, cfg.seed)?;
            info!("generated {} imu windows and {} csi windows", imu.len(), csi.len());
            write_imu_features(&out_dir.join(IMU_FEATURES_FILE), &imu)?;
            write_csi_windows(&out_dir.join(CSI_WINDOWS_FILE), &csi)?;
            dataset_manifest(&spec, cfg)
        }
        Generate::Scenario(kind) => {
            let sc = gen_scenario(kind, cfg.seed);
            formats::save_imu(&out_dir.join(IMU_FILE), &sc.imu)?;
            formats::save_csi(&out_dir.join(CSI_FILE), &sc.csi)?;
            let mut kv = KeyValues::new();
            kv.push("kind", "scenario");
            kv.push("scenario", kind.name());
            for (k, v) in cfg.to_key_values().iter() {
                kv.push(k, v);
            }
            kv.push("duration", sc.spec.duration());
            kv.push("imu.samples", sc.imu.len());
            kv.push("csi.frames", sc.csi.len());
            let impacts: Vec<String> = sc.impacts.iter().map(|t| t.to_string()).collect();
            kv.push("impacts", impacts.join(","));
            let segments: Vec<String> = sc.spec.segments.iter().map(|s| s.action.name().to_string()).collect();
            kv.push("segments", segments.join(","));
            kv.push("file.imu", IMU_FILE);
            kv.push("file.csi", CSI_FILE);
            kv
        }
    };
    formats::save_text(&out_dir.join(MANIFEST_FILE), &manifest.render())?;
    Ok(manifest)
}

fn metrics_report(kv: &mut KeyValues, m: &Metrics, names: &[String]) {
    kv.push("accuracy", m.accuracy);
    for (c, name) in names.iter().enumerate() {
        kv.push(format!("precision.{name}"), m.precision[c]);
        kv.push(format!("recall.{name}"), m.recall[c]);
    }
    for (c, name) in names.iter().enumerate() {
        let row: Vec<String> = m.confusion[c].iter().map(|n| n.to_string()).collect();
        kv.push(format!("confusion.{name}"), row.join(","));
    }
}

fn class_names(choice: ModelChoice, n: usize) -> Vec<String> {
    match choice {
        ModelChoice::Imu => (0..n).map(formats::class_name).collect(),
        ModelChoice::Csi => [CSI_STATIC_LABEL, CSI_MOTION_LABEL]
            .iter()
            .map(|&l| csi_label_name(l).to_string())
            .collect(),
    }
}

/// Report path written next to a weight file.
pub fn report_path(weights: &Path) -> PathBuf {
    let mut s = weights.as_os_str().to_owned();
    s.push(".report.txt");
    PathBuf::from(s)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Metrics,
    pub report: KeyValues,
    pub crc32: u32,
}

/// CRC32 of everything before the file's own trailing checksum. Hashing
/// the whole file would always give the CRC residue constant.
fn file_crc(path: &Path) -> Result<u32, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let body = bytes
        .len()
        .checked_sub(4)
        .ok_or_else(|| CliError::io(path, "truncated weight file"))?;
    Ok(crc32fast::hash(&bytes[..body]))
}

/// Trains one model on a generated dataset, writes the weight file and a
/// report with test-split metrics next to it.
pub fn cmd_train(
    choice: ModelChoice,
    dataset: &Path,
    weights: &Path,
    cfg: &RunConfig,
) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    let (data_seed, spec) = read_dataset_manifest(dataset)?;
    let tc = fallsense::neural::TrainConfig {
        seed: cfg.seed,
        ..cfg.train
    };
    let (metrics, n_classes, last_loss, n_train, n_test) = match choice {
        ModelChoice::Imu => {
            let set = gen_imu_dataset(&spec, data_seed)?;
            let (tr, te) = (set.train_pairs(), set.test_pairs());
            let mut model = MlpModel::new(ActionClass::ALL.len(), cfg.seed);
            model.norm = NormParams::fit(tr.iter().map(|(x, _)| x));
            let (model, history) = train(&model, &tr, &tc)?;
            save_weights(&model, weights).map_err(|e| CliError::io(weights, e))?;
            (
                evaluate(&model, &te)?,
                model.n_classes(),
                history.last().map(|h| h.loss),
                tr.len(),
                te.len(),
            )
        }
        ModelChoice::Csi => {
            let set = gen_csi_dataset(&spec, data_seed)?;
            let (tr, te) = (set.train_pairs(), set.test_pairs());
            let (model, history) = train(&CnnModel::new(cfg.seed), &tr, &tc)?;
            save_weights(&model, weights).map_err(|e| CliError::io(weights, e))?;
            (
                evaluate(&model, &te)?,
                2,
                history.last().map(|h| h.loss),
                tr.len(),
                te.len(),
            )
        }
    };
    let crc32 = file_crc(weights)?;
    let mut report = KeyValues::new();
    report.push("kind", choice.name());
    report.push("dataset.seed", data_seed);
    for (k, v) in cfg
        .to_key_values()
        .iter()
        .filter(|(k, _)| *k == "seed" || k.starts_with("train."))
    {
        report.push(k, v);
    }
    report.push("samples.train", n_train);
    report.push("samples.test", n_test);
    if let Some(loss) = last_loss {
        report.push("final_loss", loss);
    }
    report.push("weights.crc32", format!("{crc32:08x}"));
    metrics_report(&mut report, &metrics, &class_names(choice, n_classes));
    formats::save_text(&report_path(weights), &report.render())?;
    info!("{} test accuracy {:.4}", choice.name(), metrics.accuracy);
    Ok(TrainOutcome { metrics, report, crc32 })
}

/// Scores saved weights on the test split of a generated dataset.
pub fn cmd_evaluate(
    choice: ModelChoice,
    dataset: &Path,
    weights: &Path,
    cfg: &RunConfig,
) -> Result<(Metrics, KeyValues), CliError> {
    cfg.validate()?;
    let (data_seed, spec) = read_dataset_manifest(dataset)?;
    let (metrics, n_classes) = match choice {
        ModelChoice::Imu => {
            let model = load_mlp(weights, None).map_err(|e| CliError::io(weights, e))?;
            let set = gen_imu_dataset(&spec, data_seed)?;
            (evaluate(&model, &set.test_pairs())?, model.n_classes())
        }
        ModelChoice::Csi => {
            let model = load_cnn(weights).map_err(|e| CliError::io(weights, e))?;
            let set = gen_csi_dataset(&spec, data_seed)?;
            (evaluate(&model, &set.test_pairs())?, 2)
        }
    };
    let mut report = KeyValues::new();
    report.push("kind", choice.name());
    report.push("dataset.seed", data_seed);
    metrics_report(&mut report, &metrics, &class_names(choice, n_classes));
    Ok((metrics, report))
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub verdicts: Vec<DetectionVerdict>,
    pub counts: AlertCounts,
}

/// `NONE=… REMINDER=… EMERGENCY=… MISJUDGMENT=…`
pub fn summary_line(counts: &AlertCounts) -> String {
    Alert::ALL
        .iter()
        .map(|&a| format!("{a}={}", counts.get(a)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Checks the guarantees the fusion engine makes about its verdict stream.
pub fn check_verdicts(verdicts: &[DetectionVerdict]) -> Result<(), CliError> {
    for (i, v) in verdicts.iter().enumerate() {
        if i > 0 && v.t <= verdicts[i - 1].t {
            return Err(CliError::Internal(format!("verdict {i} is out of order")));
        }
        if v.stage2_motion.is_some() != v.vote_fired || (v.alert != Alert::None) != v.vote_fired {
            return Err(CliError::Internal(format!(
                "verdict {i} at t={} mixes stage results",
                v.t
            )));
        }
        if (v.alert == Alert::Emergency) != (v.stage2_motion == Some(false)) {
            return Err(CliError::Internal(format!(
                "verdict {i} at t={} has an inconsistent alert",
                v.t
            )));
        }
    }
    Ok(())
}

pub struct ReplayPaths<'a> {
    pub imu: &'a Path,
    pub csi: &'a Path,
    pub mlp: &'a Path,
    pub cnn: &'a Path,
    pub log: &'a Path,
    pub series: Option<&'a Path>,
}

/// Streams two trace files through the detector and writes the verdict log.
pub fn cmd_replay(paths: &ReplayPaths<'_>, cfg: &RunConfig) -> Result<ReplayOutcome, CliError> {
    cfg.validate()?;
    let imu = formats::load_imu(paths.imu, cfg.imu_rate)?;
    let csi = formats::load_csi(paths.csi, cfg.csi_rate)?;
    let mlp = load_mlp(paths.mlp, None).map_err(|e| CliError::io(paths.mlp, e))?;
    let cnn = load_cnn(paths.cnn).map_err(|e| CliError::io(paths.cnn, e))?;
    debug!("replaying {} imu samples and {} csi frames", imu.len(), csi.len());
    let verdicts = run_session(&imu, &csi, &mlp, &cnn, &cfg.fusion)?;
    check_verdicts(&verdicts)?;
    formats::save_verdicts(paths.log, &verdicts, cfg.fusion.fall_class_index)?;
    if let Some(series) = paths.series {
        formats::save_series(series, &magnitude_trace(&imu, &cfg.fusion.filter))?;
    }
    let counts = AlertCounts::from_verdicts(&verdicts);
    info!("{} verdicts, {}", verdicts.len(), summary_line(&counts));
    Ok(ReplayOutcome { verdicts, counts })
}
