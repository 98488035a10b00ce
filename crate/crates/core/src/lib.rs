//! Two-stage fall detection from smartphone inertial data and WiFi channel
//! state information.
//!
//! Stage I classifies sliding 3 s IMU windows with a small MLP and collects
//! fall votes in a 20-slot buffer. When enough votes accumulate, Stage II
//! looks at the following 3 s of CSI amplitude dynamics with a 1-D CNN to
//! decide whether the person (or the room) is still moving, and the result is
//! mapped to an alert level.

pub mod csi;
pub mod fusion;
pub mod imu;
pub mod neural;
pub mod sensor_model;
pub mod synth;
