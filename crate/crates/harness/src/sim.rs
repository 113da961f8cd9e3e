//! Closed-loop simulation of both planes: measurement, compensation, state
//! feedback, learning correction, calibration offset, input delay, field
//! allocation and RK4 integration of the nonlinear plant.

use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;

use magpend_core::compensation::{OffsetEstimator, DEFAULT_CUTOFF_HZ};
use magpend_core::control::RateEstimator;
use magpend_core::dynamics::rk4_step;
use magpend_core::field::{allocate_field, currents_from_field, field_angles, field_from_currents};
use magpend_core::{linearized_model, ActuationMatrix64, Controller64, LinearModel64, PlanarState64, PlantParams64};
use nalgebra::{DVector, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{HarnessError, Result};
use crate::trace::{Trace, TraceRow};
use crate::trajectory::{step_count, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub plant: PlantParams64,
    /// Control period (s).
    pub ts: f64,
    /// Integrator step (s).
    pub dt: f64,
    /// Input delay in control periods.
    pub delay_steps: usize,
    /// Angle noise standard deviation (rad).
    pub noise_std: f64,
    /// Measurement frame tilt added to every measured angle (rad).
    pub xi: f64,
    /// Calibration offset subtracted from the commanded field angle (rad).
    pub u_d: f64,
    pub grad_c1: f64,
    pub grad_c2: f64,
    pub duration: f64,
    pub seed: u64,
    /// Initial state of the `(alpha, phi)` and `(beta, theta)` planes.
    pub initial: [PlanarState64; 2],
    pub actuation: ActuationMatrix64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        if !(self.ts > 0.0 && self.dt > 0.0 && self.dt <= self.ts) {
            return Err(HarnessError::Config("need 0 < dt <= ts".into()));
        }
        let ratio = self.ts / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(HarnessError::Config(format!(
                "dt = {} does not divide ts = {}",
                self.dt, self.ts
            )));
        }
        if !(self.duration > 0.0) {
            return Err(HarnessError::Config("duration must be positive".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(HarnessError::Config("noise_std must be non-negative".into()));
        }
        Ok(())
    }

    pub fn substeps(&self) -> usize {
        (self.ts / self.dt).round() as usize
    }

    pub fn steps(&self) -> usize {
        step_count(self.duration, self.ts)
    }

    pub fn linear_model(&self) -> Result<LinearModel64> {
        Ok(linearized_model(&self.plant, self.ts)?)
    }

    /// Unmodelled gradient torque on an actuator at angle `a`.
    pub fn gradient_torque(&self, a: f64) -> f64 {
        self.grad_c1 * a + self.grad_c2 * a * a
    }
}

/// Zero-mean Gaussian angle noise, four samples per step in the order
/// `(alpha, phi, beta, theta)`.
pub fn gaussian_noise(seed: u64, std: f64) -> impl FnMut(usize) -> [f64; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std.max(0.0)).expect("standard deviation is finite");
    move |_| {
        if std == 0.0 {
            [0.0; 4]
        } else {
            std::array::from_fn(|_| normal.sample(&mut rng))
        }
    }
}

pub fn simulate_closed_loop(
    cfg: &SimConfig,
    ctrl: &[Controller64; 2],
    traj: &Trajectory,
    compensation: bool,
    ilc: Option<&[DVector<f64>; 2]>,
) -> Result<Trace> {
    let mut noise = gaussian_noise(cfg.seed, cfg.noise_std);
    simulate_closed_loop_with_noise(cfg, ctrl, traj, compensation, ilc, &mut noise)
}

fn out_of_range(s: &PlanarState64) -> bool {
    !(s.a.abs() <= FRAC_PI_2 && s.p.abs() <= FRAC_PI_2 && s.is_finite())
}

/// As [`simulate_closed_loop`] with the noise sequence supplied by the caller.
pub fn simulate_closed_loop_with_noise(
    cfg: &SimConfig,
    ctrl: &[Controller64; 2],
    traj: &Trajectory,
    compensation: bool,
    ilc: Option<&[DVector<f64>; 2]>,
    noise: &mut dyn FnMut(usize) -> [f64; 4],
) -> Result<Trace> {
    cfg.validate()?;
    let steps = cfg.steps();
    if traj.len() < steps {
        return Err(HarnessError::Config(format!(
            "trajectory has {} samples, the run needs {steps}",
            traj.len()
        )));
    }
    if let Some(corr) = ilc {
        if corr.iter().any(|c| c.is_empty()) {
            return Err(HarnessError::Config("learning correction must not be empty".into()));
        }
    }

    let make_estimator = |c: &Controller64| -> Result<OffsetEstimator<f64>> {
        let e = OffsetEstimator::with_cutoff(&c.model, &c.k, DEFAULT_CUTOFF_HZ)?;
        Ok(if compensation { e } else { e.disabled() })
    };
    let mut est = [make_estimator(&ctrl[0])?, make_estimator(&ctrl[1])?];

    let mut rates = [[RateEstimator::new(cfg.ts); 2]; 2];
    let mut delay: [VecDeque<f64>; 2] = [0, 1].map(|_| std::iter::repeat_n(0.0, cfg.delay_steps).collect());
    let mut state = cfg.initial;
    let substeps = cfg.substeps();
    let b_mag = cfg.plant.field_magnitude;
    let mut trace = Trace {
        rows: Vec::with_capacity(steps),
    };

    for k in 0..steps {
        let t = k as f64 * cfg.ts;
        if state.iter().any(out_of_range) {
            return Err(diverged(t, &state, trace));
        }
        let n = noise(k);
        let meas = [
            (state[0].a + cfg.xi + n[0], state[0].p + cfg.xi + n[1]),
            (state[1].a + cfg.xi + n[2], state[1].p + cfg.xi + n[3]),
        ];
        let sp = [(traj.alpha[k], traj.alpha_rate[k]), (traj.beta[k], traj.beta_rate[k])];

        let mut u_cmd = [0.0; 2];
        for j in 0..2 {
            let (a_m, p_m) = meas[j];
            est[j].observe_raw(p_m);
            let (a_c, p_c) = est[j].corrected_angles(a_m, p_m);
            let x = PlanarState64::new(a_c, p_c, rates[j][0].update(a_c), rates[j][1].update(p_c));
            let (r, r_rate) = sp[j];
            let x_expected = Vector4::new(r, 0.0, r_rate, 0.0);
            est[j].observe_corrected(&x.to_vector(), &x_expected)?;
            let x_sp = ctrl[j].setpoint_state(r, r_rate);
            let learned = ilc.map_or(0.0, |c| c[j][k % c[j].len()]);
            u_cmd[j] = est[j].corrected_input(ctrl[j].control(&x_sp, &x) + learned);
        }

        let applied = [0, 1].map(|j| {
            delay[j].push_back(u_cmd[j] - cfg.u_d);
            delay[j].pop_front().expect("delay line holds at least the new sample")
        });

        let b = allocate_field(applied[0], applied[1], b_mag);
        let currents = currents_from_field(&b, &cfg.actuation)?;
        let (b_real, _) = field_from_currents(&currents, &cfg.actuation);
        let (u_a, u_b, _) = field_angles(&b_real)?;

        trace.rows.push(TraceRow {
            t,
            alpha: state[0].a,
            phi: state[0].p,
            beta: state[1].a,
            theta: state[1].p,
            alpha_meas: meas[0].0,
            phi_meas: meas[0].1,
            beta_meas: meas[1].0,
            theta_meas: meas[1].1,
            alpha_sp: sp[0].0,
            beta_sp: sp[1].0,
            u_alpha: u_cmd[0],
            u_beta: u_cmd[1],
            field: [b.b.x, b.b.y, b.b.z],
            currents: currents.into(),
            phi_ss_hat: est[0].phi_ss,
            u_d_hat_a: est[0].u_d_hat,
            u_d_hat_b: est[1].u_d_hat,
        });

        let torque = |s: &PlanarState64| cfg.gradient_torque(s.a);
        for (s, u) in state.iter_mut().zip([u_a, u_b]) {
            for _ in 0..substeps {
                *s = rk4_step(s, u, &cfg.plant, cfg.dt, torque);
            }
        }
    }
    if state.iter().any(out_of_range) {
        return Err(diverged(steps as f64 * cfg.ts, &state, trace));
    }
    Ok(trace)
}

fn diverged(t: f64, state: &[PlanarState64; 2], trace: Trace) -> HarnessError {
    HarnessError::Diverged {
        t,
        detail: format!(
            "angles (alpha, phi, beta, theta) = ({:.4}, {:.4}, {:.4}, {:.4}) rad left [-pi/2, pi/2]",
            state[0].a, state[0].p, state[1].a, state[1].p
        ),
        trace: Box::new(trace),
    }
}
