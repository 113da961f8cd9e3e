//! Periodic setpoint generators for the two actuator angles.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    /// `a_sp = A`, `b_sp = 0`.
    Constant,
    /// `(A cos wt, A sin wt)`.
    Circle,
    /// `(A sin wt, A sin 2wt)`.
    FigureEight,
}

/// Sampled setpoints and their exact time derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub amplitude: f64,
    pub period: f64,
    pub ts: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub alpha_rate: Vec<f64>,
    pub beta_rate: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Control steps per period, when the period is a whole number of steps.
    pub fn steps_per_period(&self) -> Option<usize> {
        let n = (self.period / self.ts).round();
        ((n * self.ts - self.period).abs() <= 1e-9 * self.period && n >= 1.0).then_some(n as usize)
    }
}

/// Number of control steps covering `duration`.
pub fn step_count(duration: f64, ts: f64) -> usize {
    (duration / ts - 1e-9).ceil().max(0.0) as usize
}

/// Samples at `t = k ts` for `k` in `0..step_count(duration, ts)`; `bound`
/// caps the amplitude.
pub fn generate_trajectory(
    kind: TrajectoryKind,
    amplitude: f64,
    period: f64,
    duration: f64,
    ts: f64,
    bound: f64,
) -> Result<Trajectory> {
    if !(period > 0.0) {
        return Err(HarnessError::Trajectory(format!(
            "period must be positive, got {period}"
        )));
    }
    if !(ts > 0.0) {
        return Err(HarnessError::Trajectory(format!(
            "sample time must be positive, got {ts}"
        )));
    }
    if !(amplitude.abs() <= bound) {
        return Err(HarnessError::Trajectory(format!(
            "amplitude {:.3}° exceeds the {:.3}° bound",
            amplitude.to_degrees(),
            bound.to_degrees()
        )));
    }
    let n = step_count(duration, ts);
    let w = TAU / period;
    let a = amplitude;
    let mut traj = Trajectory {
        kind,
        amplitude,
        period,
        ts,
        alpha: Vec::with_capacity(n),
        beta: Vec::with_capacity(n),
        alpha_rate: Vec::with_capacity(n),
        beta_rate: Vec::with_capacity(n),
    };
    for k in 0..n {
        let t = k as f64 * ts;
        let (al, be, dal, dbe) = match kind {
            TrajectoryKind::Constant => (a, 0.0, 0.0, 0.0),
            TrajectoryKind::Circle => {
                let (s, c) = (w * t).sin_cos();
                (a * c, a * s, -a * w * s, a * w * c)
            }
            TrajectoryKind::FigureEight => {
                let (s1, c1) = (w * t).sin_cos();
                let (s2, c2) = (2.0 * w * t).sin_cos();
                (a * s1, a * s2, a * w * c1, 2.0 * a * w * c2)
            }
        };
        traj.alpha.push(al);
        traj.beta.push(be);
        traj.alpha_rate.push(dal);
        traj.beta_rate.push(dbe);
    }
    Ok(traj)
}
