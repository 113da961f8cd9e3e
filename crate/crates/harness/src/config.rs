//! TOML experiment configuration. Every section and key is optional.

use std::path::{Path, PathBuf};

use magpend_core::control::LqrWeights;
use magpend_core::field::DipoleCoilArray;
use magpend_core::sysid::{FitOptions, MultisineConfig};
use magpend_core::{ActuationMatrix64, PlanarState64, PlantParams64};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::sim::SimConfig;
use crate::trajectory::TrajectoryKind;

/// Gradient-disturbance defaults: at 8° the torque reaches about 30% of the
/// nominal actuator restoring torque, a third of it from the linear term.
pub const DEFAULT_GRAD_C1: f64 = 3.15e-3;
pub const DEFAULT_GRAD_C2: f64 = 4.5e-2;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub plant: PlantParams64,
    pub sim: SimSection,
    pub control: ControlSection,
    pub field: FieldSection,
    pub trajectory: TrajectorySection,
    pub sysid: SysidSection,
    pub ilc: IlcSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// Control period (s).
    pub ts: f64,
    /// Integrator step (s); must divide `ts`.
    pub dt: f64,
    pub delay_steps: usize,
    /// Angle measurement noise standard deviation (rad).
    pub noise_std: f64,
    /// Measurement frame tilt (rad).
    pub xi: f64,
    /// Field calibration offset (rad).
    pub u_d: f64,
    /// Gradient torque `c1 a + c2 a²` on each actuator.
    pub grad_c1: f64,
    pub grad_c2: f64,
    pub duration: f64,
    pub compensation: bool,
    /// Initial actuator and pendulum angles per plane (rad).
    pub initial_alpha: f64,
    pub initial_phi: f64,
    pub initial_beta: f64,
    pub initial_theta: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            ts: 0.01,
            dt: 1e-4,
            delay_steps: 2,
            noise_std: 0.05f64.to_radians(),
            xi: 0.0,
            u_d: 0.0,
            grad_c1: DEFAULT_GRAD_C1,
            grad_c2: DEFAULT_GRAD_C2,
            duration: 20.0,
            compensation: false,
            initial_alpha: 0.0,
            initial_phi: 0.0,
            initial_beta: 0.0,
            initial_theta: 0.0,
        }
    }
}

/// The defaults trade bandwidth for margin: they keep the loop stable with up
/// to three control periods of input delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    /// Diagonal state weights for `(a, p, a_dot, p_dot)`.
    pub q: [f64; 4],
    pub r: f64,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self {
            q: [10.0, 10.0, 0.01, 0.01],
            r: 100.0,
        }
    }
}

impl ControlSection {
    pub fn weights(&self) -> LqrWeights<f64, 4> {
        LqrWeights::diagonal(self.q, self.r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSection {
    /// 8×8 actuation matrix CSV; when absent the synthetic coil array is used.
    pub matrix_file: Option<PathBuf>,
    pub coil_distance: f64,
    pub moment_per_amp: f64,
    pub coil_tilt: f64,
}

impl Default for FieldSection {
    fn default() -> Self {
        let d = DipoleCoilArray::<f64>::default();
        Self {
            matrix_file: None,
            coil_distance: d.distance,
            moment_per_amp: d.moment_per_amp,
            coil_tilt: d.tilt,
        }
    }
}

impl FieldSection {
    /// Relative matrix paths resolve against `base`.
    pub fn actuation_matrix(&self, base: Option<&Path>) -> Result<ActuationMatrix64> {
        match &self.matrix_file {
            Some(path) => {
                let full = match base {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                Ok(ActuationMatrix64::load_csv(&full)?)
            }
            None => {
                let synthetic = DipoleCoilArray {
                    distance: self.coil_distance,
                    moment_per_amp: self.moment_per_amp,
                    tilt: self.coil_tilt,
                }
                .actuation_matrix();
                Ok(ActuationMatrix64::full_rank(*synthetic.matrix())?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySection {
    pub kind: TrajectoryKind,
    /// Amplitude, or the held angle for a constant setpoint (rad).
    pub amplitude: f64,
    pub period: f64,
    /// Largest admissible amplitude (rad).
    pub bound: f64,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self {
            kind: TrajectoryKind::Constant,
            amplitude: 0.0,
            period: 10.0,
            bound: 8f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SysidSection {
    pub f_min: f64,
    pub f_max: f64,
    pub period_len: usize,
    pub realizations: usize,
    pub periods: usize,
    pub discard: usize,
    /// Excitation RMS (rad).
    pub rms: f64,
    pub max_delay_steps: usize,
    pub grid_per_step: usize,
    pub sk_passes: usize,
}

impl Default for SysidSection {
    fn default() -> Self {
        let m = MultisineConfig::<f64>::nominal();
        let f = FitOptions::<f64>::new(0.01);
        Self {
            f_min: m.f_min,
            f_max: m.f_max,
            period_len: m.period_len,
            realizations: m.realizations,
            periods: m.periods,
            discard: m.discard,
            rms: m.rms,
            max_delay_steps: f.max_delay_steps,
            grid_per_step: f.grid_per_step,
            sk_passes: f.sk_passes,
        }
    }
}

impl SysidSection {
    /// The excitation is sampled at the control rate.
    pub fn multisine(&self, ts: f64) -> MultisineConfig<f64> {
        MultisineConfig {
            f_min: self.f_min,
            f_max: self.f_max,
            fs: 1.0 / ts,
            period_len: self.period_len,
            realizations: self.realizations,
            periods: self.periods,
            discard: self.discard,
            rms: self.rms,
        }
    }

    pub fn fit_options(&self, ts: f64) -> FitOptions<f64> {
        FitOptions {
            max_delay_steps: self.max_delay_steps,
            grid_per_step: self.grid_per_step,
            sk_passes: self.sk_passes,
            ..FitOptions::new(ts)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IlcSection {
    pub w_e: f64,
    pub w_du: f64,
    /// Learning iterations after the uncorrected iteration 0.
    pub iterations: usize,
    /// Trajectory periods simulated per trial; only the last one is learned from.
    pub periods_per_trial: usize,
}

impl Default for IlcSection {
    fn default() -> Self {
        Self {
            w_e: 100.0,
            w_du: 10.0,
            iterations: 4,
            periods_per_trial: 2,
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn sim_config(&self, seed: u64, actuation: ActuationMatrix64) -> Result<SimConfig> {
        let s = &self.sim;
        let cfg = SimConfig {
            plant: self.plant,
            ts: s.ts,
            dt: s.dt,
            delay_steps: s.delay_steps,
            noise_std: s.noise_std,
            xi: s.xi,
            u_d: s.u_d,
            grad_c1: s.grad_c1,
            grad_c2: s.grad_c2,
            duration: s.duration,
            seed,
            initial: [
                PlanarState64::new(s.initial_alpha, s.initial_phi, 0.0, 0.0),
                PlanarState64::new(s.initial_beta, s.initial_theta, 0.0, 0.0),
            ],
            actuation,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
