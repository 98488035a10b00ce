use fallsense::csi::CsiError;
use fallsense::fusion::FusionError;
use fallsense::imu::ImuError;
use fallsense::neural::NnError;
use fallsense::sensor_model::SensorError;
use fallsense::synth::SynthError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unknown config keys or out-of-range settings.
    #[error("usage: {0}")]
    Usage(String),
    /// Unreadable, unwritable or malformed input and output files.
    #[error("data: {0}")]
    Data(String),
    /// Something the engine guarantees did not hold.
    #[error("internal: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<SensorError> for CliError {
    fn from(e: SensorError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CsiError> for CliError {
    fn from(e: CsiError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ImuError> for CliError {
    fn from(e: ImuError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::InvalidConfig(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec(m) | SynthError::InvalidScenario(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        match e {
            FusionError::InvalidConfig(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}
