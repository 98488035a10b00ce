//! On-disk formats: IMU and CSI trace CSVs, the verdict log and the
//! plot-ready magnitude series.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! trace read back from disk is bit-identical to the one written.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use fallsense::fusion::DetectionVerdict;
use fallsense::imu::MagnitudeSample;
use fallsense::sensor_model::{CsiFrame, ImuSample, Trace, N_ANTENNAS, N_RAW_COLUMNS, N_SUBCARRIERS};
use fallsense::synth::ActionClass;

use crate::error::CliError;

pub const IMU_HEADER: [&str; 7] = ["t", "acc_x", "acc_y", "acc_z", "gyr_x", "gyr_y", "gyr_z"];
pub const VERDICT_HEADER: &str = "t,stage1_class,p_fall,votes,alert";
pub const SERIES_HEADER: &str = "t,lacc,gyr";

/// `t`, then every real part (antenna-major), then every imaginary part.
pub fn csi_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for part in ["re", "im"] {
        for a in 0..N_ANTENNAS {
            for k in 0..N_SUBCARRIERS {
                h.push(format!("a{a}_sc{k}_{part}"));
            }
        }
    }
    h
}

/// Display name of an MLP output index.
pub fn class_name(index: usize) -> String {
    match ActionClass::from_index(index) {
        Some(c) => c.name().to_string(),
        None => format!("class{index}"),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub fn write_imu<W: Write>(mut w: W, trace: &Trace<ImuSample>) -> std::io::Result<()> {
    writeln!(w, "{}", IMU_HEADER.join(","))?;
    for s in trace.samples() {
        writeln!(
            w,
            "{}",
            join([s.t, s.acc[0], s.acc[1], s.acc[2], s.gyr[0], s.gyr[1], s.gyr[2]])
        )?;
    }
    w.flush()
}

pub fn write_csi<W: Write>(mut w: W, trace: &Trace<CsiFrame>) -> std::io::Result<()> {
    writeln!(w, "{}", csi_header().join(","))?;
    for f in trace.samples() {
        let values = std::iter::once(f.t)
            .chain(f.re.iter().flatten().copied())
            .chain(f.im.iter().flatten().copied());
        writeln!(w, "{}", join(values))?;
    }
    w.flush()
}

/// Parses rows of a numeric CSV whose header must match `expected`.
fn read_rows<R: Read>(r: R, expected: &[String]) -> Result<Vec<Vec<f64>>, String> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = reader.headers().map_err(|e| e.to_string())?;
    if header.len() != expected.len() || header.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(format!(
            "unexpected header (expected {} columns starting `{}`)",
            expected.len(),
            expected[0]
        ));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        let row = record
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("row {}: {e}", i + 1))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn parse_imu<R: Read>(r: R, rate: f64) -> Result<Trace<ImuSample>, String> {
    let header: Vec<String> = IMU_HEADER.iter().map(|s| s.to_string()).collect();
    let samples = read_rows(r, &header)?
        .into_iter()
        .map(|v| ImuSample::new(v[0], [v[1], v[2], v[3]], [v[4], v[5], v[6]]))
        .collect();
    Trace::new(samples, rate).map_err(|e| e.to_string())
}

pub fn parse_csi<R: Read>(r: R, rate: f64) -> Result<Trace<CsiFrame>, String> {
    let half = N_RAW_COLUMNS / 2;
    let frames = read_rows(r, &csi_header())?
        .into_iter()
        .map(|v| {
            let mut f = CsiFrame::zeros(v[0]);
            for a in 0..N_ANTENNAS {
                for k in 0..N_SUBCARRIERS {
                    f.re[a][k] = v[1 + a * N_SUBCARRIERS + k];
                    f.im[a][k] = v[1 + half + a * N_SUBCARRIERS + k];
                }
            }
            f
        })
        .collect();
    Trace::new(frames, rate).map_err(|e| e.to_string())
}

pub fn save_imu(path: &Path, trace: &Trace<ImuSample>) -> Result<(), CliError> {
    write_imu(create(path)?, trace).map_err(|e| CliError::io(path, e))
}

pub fn save_csi(path: &Path, trace: &Trace<CsiFrame>) -> Result<(), CliError> {
    write_csi(create(path)?, trace).map_err(|e| CliError::io(path, e))
}

pub fn load_imu(path: &Path, rate: f64) -> Result<Trace<ImuSample>, CliError> {
    parse_imu(open(path)?, rate).map_err(|e| CliError::io(path, e))
}

pub fn load_csi(path: &Path, rate: f64) -> Result<Trace<CsiFrame>, CliError> {
    parse_csi(open(path)?, rate).map_err(|e| CliError::io(path, e))
}

pub fn verdict_line(v: &DetectionVerdict, fall_class_index: usize) -> String {
    let p_fall = v.stage1_probs.get(fall_class_index).copied().unwrap_or(0.0);
    format!(
        "{},{},{},{},{}",
        v.t,
        class_name(v.stage1_class),
        p_fall,
        v.votes,
        v.alert
    )
}

pub fn write_verdicts<W: Write>(
    mut w: W,
    verdicts: &[DetectionVerdict],
    fall_class_index: usize,
) -> std::io::Result<()> {
    writeln!(w, "{VERDICT_HEADER}")?;
    for v in verdicts {
        writeln!(w, "{}", verdict_line(v, fall_class_index))?;
    }
    w.flush()
}

pub fn save_verdicts(path: &Path, verdicts: &[DetectionVerdict], fall_class_index: usize) -> Result<(), CliError> {
    write_verdicts(create(path)?, verdicts, fall_class_index).map_err(|e| CliError::io(path, e))
}

pub fn save_series(path: &Path, series: &[MagnitudeSample]) -> Result<(), CliError> {
    let mut w = create(path)?;
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "{SERIES_HEADER}")?;
        for m in series {
            writeln!(w, "{},{},{}", m.t, m.lacc, m.gyr)?;
        }
        w.flush()
    };
    body().map_err(|e| CliError::io(path, e))
}

pub fn save_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}
