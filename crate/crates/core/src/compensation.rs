//! Steady-state disturbance maps and online offset compensation.
//!
//! Two constant errors are handled:
//! - a tilt `xi` of the measurement frame, which adds `(xi, xi, 0, 0)` to the
//!   measured state;
//! - a field calibration offset `u_d`. The applied field angle is taken to be
//!   the commanded one minus `u_d`, so the closed loop settles at
//!   `x_ss = -Ā⁻¹ B u_d`.

use nalgebra::{RowVector4, Vector4};

use crate::control::closed_loop_steady_matrix;
use crate::dynamics::LinearModel;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `Ā⁻¹ B`, the steady-state response to a unit constant input.
pub fn steady_state_input_map<T: Real>(model: &LinearModel<T>, k: &RowVector4<T>) -> Result<Vector4<T>> {
    closed_loop_steady_matrix(&model.a, &model.b, k)
        .lu()
        .solve(&model.b)
        .ok_or(Error::Singular("I - A + B K"))
}

/// `x_ss = −Ā⁻¹ B K (xi, xi, 0, 0)ᵀ`.
pub fn steady_state_output_dist<T: Real>(model: &LinearModel<T>, k: &RowVector4<T>, xi: T) -> Result<Vector4<T>> {
    let d = Vector4::new(xi, xi, T::zero(), T::zero());
    let v = steady_state_input_map(model, k)?;
    Ok(-v * (k * d)[(0, 0)])
}

/// `x_ss = −Ā⁻¹ B u_d`.
pub fn steady_state_input_dist<T: Real>(model: &LinearModel<T>, k: &RowVector4<T>, u_d: T) -> Result<Vector4<T>> {
    Ok(-steady_state_input_map(model, k)? * u_d)
}

/// Least-squares estimate `û_d = −(Ā⁻¹B)⁺ x_ss`.
pub fn estimate_input_offset<T: Real>(model: &LinearModel<T>, k: &RowVector4<T>, x_ss: &Vector4<T>) -> Result<T> {
    let v = steady_state_input_map(model, k)?;
    offset_from_map(&v, x_ss)
}

fn offset_from_map<T: Real>(v: &Vector4<T>, x_ss: &Vector4<T>) -> Result<T> {
    let vv = v.norm_squared();
    if !(vv > T::zero()) {
        return Err(Error::Singular("steady-state input map is zero"));
    }
    Ok(-v.dot(x_ss) / vv)
}

/// Removes the learned frame tilt from both measured angles.
pub fn correct_angles<T: Real>(a: T, p: T, phi_ss: T) -> (T, T) {
    (a - phi_ss, p - phi_ss)
}

/// Adds the learned calibration offset back onto the commanded field angle,
/// cancelling the `−u_d` seen by the plant.
pub fn correct_input<T: Real>(u: T, u_d_hat: T) -> T {
    u + u_d_hat
}

/// First-order IIR coefficient for a cutoff frequency at sample time `ts`.
pub fn lowpass_coefficient<T: Real>(cutoff_hz: T, ts: T) -> T {
    T::one() - (-T::two_pi() * cutoff_hz * ts).exp()
}

/// Online estimator for the frame tilt and the field calibration offset of one plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetEstimator<T = f64> {
    /// Low-passed raw pendulum angle, the tilt estimate.
    pub phi_ss: T,
    /// Estimated calibration offset.
    pub u_d_hat: T,
    pub lp_alpha: T,
    pub enabled: bool,
    /// Low-passed corrected state.
    pub x_ss: Vector4<T>,
    /// Estimates only move while the filtered rates are below this norm (rad/s).
    pub rate_gate: T,
    input_map: Vector4<T>,
}

/// Default gating threshold on filtered rates (rad/s).
pub const DEFAULT_RATE_GATE: f64 = 0.05;
/// Default low-pass cutoff for all compensation filters (Hz).
pub const DEFAULT_CUTOFF_HZ: f64 = 0.05;

impl<T: Real> OffsetEstimator<T> {
    pub fn new(model: &LinearModel<T>, k: &RowVector4<T>, lp_alpha: T) -> Result<Self> {
        if !(lp_alpha > T::zero() && lp_alpha <= T::one()) {
            return Err(Error::InvalidConfig(format!(
                "low-pass coefficient {lp_alpha} outside (0, 1]"
            )));
        }
        Ok(Self {
            phi_ss: T::zero(),
            u_d_hat: T::zero(),
            lp_alpha,
            enabled: true,
            x_ss: Vector4::zeros(),
            rate_gate: T::lit(DEFAULT_RATE_GATE),
            input_map: steady_state_input_map(model, k)?,
        })
    }

    pub fn with_cutoff(model: &LinearModel<T>, k: &RowVector4<T>, cutoff_hz: T) -> Result<Self> {
        Self::new(model, k, lowpass_coefficient(cutoff_hz, model.ts))
    }

    pub fn disabled(mut self) -> Self {
        self.enabled = false;
        self
    }

    /// One IIR step of the tilt estimate.
    pub fn update_misalignment(mut self, phi_meas: T) -> Self {
        self.phi_ss = (T::one() - self.lp_alpha) * self.phi_ss + self.lp_alpha * phi_meas;
        self
    }

    /// Whether the filtered state is quiet enough to count as steady.
    pub fn is_steady(&self) -> bool {
        let (ra, rp) = (self.x_ss[2], self.x_ss[3]);
        (ra * ra + rp * rp).sqrt() < self.rate_gate
    }

    /// Tilt-corrects raw angles with the current estimate (identity when disabled).
    pub fn corrected_angles(&self, a_meas: T, p_meas: T) -> (T, T) {
        if self.enabled {
            correct_angles(a_meas, p_meas, self.phi_ss)
        } else {
            (a_meas, p_meas)
        }
    }

    /// Advances the tilt estimate with a raw pendulum measurement.
    pub fn observe_raw(&mut self, p_meas: T) {
        if self.enabled && self.is_steady() {
            *self = self.update_misalignment(p_meas);
        }
    }

    /// Advances the state filter and the offset estimate with the corrected
    /// state. `x_expected` is the steady state the loop should settle at
    /// without disturbances.
    pub fn observe_corrected(&mut self, x: &Vector4<T>, x_expected: &Vector4<T>) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        self.x_ss += (x - self.x_ss) * self.lp_alpha;
        if self.is_steady() {
            // The loop already carries `u_d_hat`; what remains in `x_ss` is the residual offset.
            let residual = offset_from_map(&self.input_map, &(self.x_ss - x_expected))?;
            self.u_d_hat += self.lp_alpha * residual;
        }
        Ok(())
    }

    /// Field angle command with the offset correction applied (identity when disabled).
    pub fn corrected_input(&self, u: T) -> T {
        if self.enabled {
            correct_input(u, self.u_d_hat)
        } else {
            u
        }
    }
}
