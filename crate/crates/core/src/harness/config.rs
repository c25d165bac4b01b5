//! TOML configuration. Every section and key is optional; missing keys take
//! the values printed by `tqnav --dump-defaults`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::earth::EarthParams;
use crate::ekf::{FilterConfig, InitStds, RightRetraction};
use crate::errmodel::{ErrorModelKind, GradientModel, ModelConfig, NoiseDensities};
use crate::mech::{Integrator, MechConfig};
use crate::sim::{ScenarioKind, SensorConfig, TrajectoryProfile, G0};
use crate::Error;

const DEG: f64 = std::f64::consts::PI / 180.0;

/// Attitude handed over by an external coarse aligner at `time`.
///
/// In simulation `attitude_deg` is the coarse attitude's (roll, pitch, yaw)
/// error relative to truth; in replay it is the absolute attitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoarseAttitude {
    /// s
    pub time: f64,
    pub attitude_deg: [f64; 3],
    /// 1σ attached to the handed-over attitude, deg.
    pub std_deg: f64,
}

impl Default for CoarseAttitude {
    fn default() -> Self {
        CoarseAttitude { time: 10.0, attitude_deg: [0.0, 0.0, 0.0], std_deg: 5.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub heading_errors_deg: Vec<f64>,
    pub roll_pitch_error_deg: f64,
    pub trials: usize,
    pub scenario: ScenarioKind,
    pub filters: Vec<ErrorModelKind>,
    /// s; static runs default to 150, in-motion runs to the profile length.
    pub duration: Option<f64>,
    pub seed: u64,
    pub convergence_threshold_deg: f64,
    /// Final window for per-run terminal yaw, s.
    pub terminal_window: f64,
    pub coarse_attitude: Option<CoarseAttitude>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            heading_errors_deg: (-36..=36).map(|k| 5.0 * k as f64).collect(),
            roll_pitch_error_deg: 5.0,
            trials: 1,
            scenario: ScenarioKind::Static,
            filters: vec![ErrorModelKind::LeftTrident, ErrorModelKind::RightTrident, ErrorModelKind::Traditional],
            duration: None,
            seed: 1,
            convergence_threshold_deg: 5.0,
            terminal_window: 20.0,
            coarse_attitude: None,
        }
    }
}

/// Filter settings in config units. Process noise comes from the sensor section.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub init: InitStds,
    /// m/s
    pub zero_velocity_sigma: f64,
    /// pulses/s, m/s, m/s
    pub odometer_sigma: [f64; 3],
    pub gate_sigma: Option<f64>,
    pub right_retraction: RightRetraction,
    pub gradient: GradientModel,
    pub integrator: Integrator,
    /// Bias random-walk density is bias/√T with this T, s.
    pub bias_correlation_time: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        let f = FilterConfig::default();
        FilterSection {
            init: f.init,
            zero_velocity_sigma: f.zero_velocity_sigma,
            odometer_sigma: f.odometer_sigma,
            gate_sigma: None,
            right_retraction: RightRetraction::Exact,
            gradient: GradientModel::Full,
            integrator: Integrator::SingleSample,
            bias_correlation_time: 3600.0,
        }
    }
}

/// Inputs for `replay` that a sensor log does not carry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    pub filter: ErrorModelKind,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub height: f64,
    /// Initial (roll, pitch, yaw) in the north-up-east frame, deg.
    pub attitude_deg: [f64; 3],
    /// Initial odometer scale guess, pulses/m.
    pub odo_scale: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            filter: ErrorModelKind::RightTrident,
            latitude_deg: 30.0,
            longitude_deg: 114.0,
            height: 20.0,
            attitude_deg: [0.0, 0.0, 0.0],
            odo_scale: 59.8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub sweep: SweepConfig,
    pub sensor: SensorConfig,
    pub filter: FilterSection,
    pub earth: EarthParams,
    pub profile: TrajectoryProfile,
    pub replay: ReplayConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Config::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), Error> {
        let s = &self.sweep;
        if s.heading_errors_deg.is_empty() || s.filters.is_empty() || s.trials == 0 {
            return Err(Error::Config("sweep lists must be nonempty and trials > 0".into()));
        }
        if s.duration.is_some_and(|d| !(d > 0.0)) {
            return Err(Error::Config("sweep.duration must be positive".into()));
        }
        if !(s.terminal_window >= 0.0) || !(s.convergence_threshold_deg > 0.0) {
            return Err(Error::Config("sweep thresholds out of range".into()));
        }
        if !(self.filter.bias_correlation_time > 0.0) {
            return Err(Error::Config("filter.bias_correlation_time must be positive".into()));
        }
        self.earth.validate()?;
        self.sensor.to_spec(0)?;
        self.filter_config().validate()?;
        if s.scenario == ScenarioKind::InMotion {
            self.profile.validate()?;
        }
        Ok(())
    }

    /// Run length for the configured scenario.
    pub fn duration(&self) -> f64 {
        match (self.sweep.duration, self.sweep.scenario) {
            (Some(d), _) => d,
            (None, ScenarioKind::Static) => 150.0,
            (None, ScenarioKind::InMotion) => self.profile.duration,
        }
    }

    /// Trajectory profile for the configured scenario.
    pub fn scenario_profile(&self) -> Result<TrajectoryProfile, Error> {
        let d = self.duration();
        match self.sweep.scenario {
            ScenarioKind::Static => {
                let mut p = TrajectoryProfile::stationary(d);
                p.start = self.profile.start;
                p.start.speed = 0.0;
                Ok(p)
            }
            ScenarioKind::InMotion => {
                if d > self.profile.duration + 1e-9 {
                    return Err(Error::Config(format!(
                        "sweep.duration {d} s exceeds profile.duration {} s",
                        self.profile.duration
                    )));
                }
                Ok(self.profile.clone())
            }
        }
    }

    /// Runtime filter settings, with process noise matched to the sensor section.
    pub fn filter_config(&self) -> FilterConfig {
        let s = &self.sensor;
        let f = &self.filter;
        let rt = f.bias_correlation_time.sqrt();
        let noise = NoiseDensities {
            gyro_arw: s.gyro_arw_deg_rt_h * DEG / 60.0,
            accel_vrw: s.accel_vrw_ug_rt_hz * 1e-6 * G0,
            gyro_bias_rw: s.gyro_bias_deg_h * DEG / 3600.0 / rt,
            accel_bias_rw: s.accel_bias_ug * 1e-6 * G0 / rt,
        };
        FilterConfig {
            init: f.init,
            zero_velocity_sigma: f.zero_velocity_sigma,
            odometer_sigma: f.odometer_sigma,
            gate_sigma: f.gate_sigma,
            right_retraction: f.right_retraction,
            model: ModelConfig { earth: self.earth, noise, gradient: f.gradient },
            mech: MechConfig { dt: 1.0 / s.imu_rate_hz, integrator: f.integrator },
        }
    }
}
