//! Experiment drivers: balancing runs, frequency-domain identification of the
//! detached actuator, trial-to-trial learning and the steady-state report.

use std::collections::VecDeque;

use magpend_core::compensation::{steady_state_input_dist, steady_state_output_dist};
use magpend_core::control::LqrWeights;
use magpend_core::dynamics::rk4_step;
use magpend_core::ilc::{build_lifted_general, LiftedSystem};
use magpend_core::sysid::{
    average_periods, design_multisine, estimate_bla, fit_sos_delay, physical_params_from_fit, FitOptions,
    MultisineConfig, PhysicalEstimate,
};
use magpend_core::{linearized_model, Controller64, FrfEstimate64, IlcSession64, PlanarState64, SosDelayFit64};
use nalgebra::{DMatrix, DVector, Matrix2, Vector2, Vector4};
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::config::IlcSection;
use crate::error::{HarnessError, Result};
use crate::sim::{simulate_closed_loop, SimConfig};
use crate::trace::{csv_string, Trace};
use crate::trajectory::Trajectory;

/// The same regulator for both planes, designed on the linearized plant.
pub fn build_controllers(cfg: &SimConfig, weights: &LqrWeights<f64, 4>) -> Result<[Controller64; 2]> {
    let model = cfg.linear_model()?;
    let ctrl = Controller64::synthesize(&model, weights)?;
    Ok([ctrl, ctrl])
}

/// Derives independent per-purpose seeds from the user seed.
pub fn sub_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_PHASES: u64 = 1;
const STREAM_SYSID_NOISE: u64 = 2;
const STREAM_ILC_NOISE: u64 = 3;

/// Input and output spectra of one realization at the excited bins.
type SpectrumPair = (Vec<Complex<f64>>, Vec<Complex<f64>>);

/// Which actuator model the identification excites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SysidPlant {
    /// Nonlinear detached actuator with gradient torque, started at rest.
    Nonlinear,
    /// Exact discretization of its linearization, started in periodic steady state.
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SysidResult {
    pub frf: FrfEstimate64,
    pub fit: SosDelayFit64,
    pub physical: PhysicalEstimate<f64>,
}

impl SysidResult {
    pub fn fit_csv(&self) -> String {
        let f = &self.fit;
        let p = &self.physical;
        csv_string(
            &[
                "b0",
                "a1",
                "a0",
                "delay",
                "cost",
                "damping",
                "dipole_moment",
                "stiffness_residual",
            ],
            [[
                f.b0,
                f.a1,
                f.a0,
                f.delay,
                f.cost,
                p.damping,
                p.dipole_moment,
                p.stiffness_residual,
            ]],
        )
    }
}

/// Open-loop response of the detached actuator to one periodic excitation.
/// Returns the recorded input and measured angle, `periods × N` samples each.
fn excite_actuator(
    cfg: &SimConfig,
    excitation: &[f64],
    periods: usize,
    kind: SysidPlant,
    noise_seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let plant = cfg.plant.detached();
    let n = excitation.len();
    let total = n * periods;
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let normal = Normal::new(0.0, cfg.noise_std).map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut measure = |a: f64| {
        let noise = if cfg.noise_std > 0.0 {
            normal.sample(&mut rng)
        } else {
            0.0
        };
        a + cfg.xi + noise
    };
    let mut u_rec = Vec::with_capacity(total);
    let mut y_rec = Vec::with_capacity(total);

    match kind {
        SysidPlant::Nonlinear => {
            let mut delay: VecDeque<f64> = std::iter::repeat_n(0.0, cfg.delay_steps).collect();
            let mut s = PlanarState64::zero();
            let torque = |st: &PlanarState64| cfg.gradient_torque(st.a);
            for k in 0..total {
                let u = excitation[k % n];
                u_rec.push(u);
                y_rec.push(measure(s.a));
                delay.push_back(u - cfg.u_d);
                let applied = delay.pop_front().expect("delay line is never empty after a push");
                for _ in 0..cfg.substeps() {
                    s = rk4_step(&s, applied, &plant, cfg.dt, torque);
                }
                if !(s.a.abs() <= std::f64::consts::FRAC_PI_2) {
                    return Err(HarnessError::Diverged {
                        t: (k + 1) as f64 * cfg.ts,
                        detail: format!("detached actuator reached {:.4} rad", s.a),
                        trace: Box::default(),
                    });
                }
            }
        }
        SysidPlant::Linear => {
            let model = linearized_model(&plant, cfg.ts)?;
            let a = Matrix2::new(model.a[(0, 0)], model.a[(0, 2)], model.a[(2, 0)], model.a[(2, 2)]);
            let b = Vector2::new(model.b[0], model.b[2]);
            let d = cfg.delay_steps;
            // Periodic input seen by the plant, offset and delay included.
            let applied: Vec<f64> = (0..n)
                .map(|k| excitation[(k + n * (d / n + 1) - d) % n] - cfg.u_d)
                .collect();
            let mut x = Vector2::zeros();
            for &u in &applied {
                x = a * x + b * u;
            }
            let mut a_n = Matrix2::identity();
            for _ in 0..n {
                a_n *= a;
            }
            x = (Matrix2::identity() - a_n)
                .lu()
                .solve(&x)
                .ok_or(HarnessError::Config("actuator has a pole on the unit circle".into()))?;
            for k in 0..total {
                u_rec.push(excitation[k % n]);
                y_rec.push(measure(x[0]));
                x = a * x + b * applied[k % n];
            }
        }
    }
    Ok((u_rec, y_rec))
}

/// Averaged input and output spectra at the excited bins for one realization.
fn realization_spectra(u: &[f64], y: &[f64], ms: &MultisineConfig<f64>, bins: &[usize]) -> Result<SpectrumPair> {
    let n = ms.period_len;
    let kept = |x: &[f64]| -> Vec<Vec<f64>> {
        (ms.discard..ms.periods)
            .map(|p| x[p * n..(p + 1) * n].to_vec())
            .collect()
    };
    let u_avg = average_periods(&kept(u))?;
    let y_avg = average_periods(&kept(y))?;
    Ok((
        bins.iter().map(|&k| u_avg[k]).collect(),
        bins.iter().map(|&k| y_avg[k]).collect(),
    ))
}

/// Multisine identification of the detached actuator followed by the
/// weighted delayed second-order fit and the physical parameter mapping.
pub fn run_sysid_experiment(
    cfg: &SimConfig,
    ms: &MultisineConfig<f64>,
    fit_opts: &FitOptions<f64>,
    kind: SysidPlant,
) -> Result<SysidResult> {
    cfg.validate()?;
    ms.validate()?;
    if (ms.fs * cfg.ts - 1.0).abs() > 1e-9 {
        return Err(HarnessError::Config(format!(
            "multisine rate {} Hz differs from the control rate {} Hz",
            ms.fs,
            1.0 / cfg.ts
        )));
    }
    let bins = ms.excited_bins();
    let freqs: Vec<f64> = bins.iter().map(|&k| ms.bin_frequency(k)).collect();

    let spectra: Vec<SpectrumPair> = (0..ms.realizations)
        .into_par_iter()
        .map(|r| {
            let excitation = design_multisine(ms, sub_seed(cfg.seed, STREAM_PHASES, r as u64))?;
            let (u, y) = excite_actuator(
                cfg,
                &excitation,
                ms.periods,
                kind,
                sub_seed(cfg.seed, STREAM_SYSID_NOISE, r as u64),
            )?;
            realization_spectra(&u, &y, ms, &bins)
        })
        .collect::<Result<_>>()?;
    let (u_spec, y_spec): (Vec<_>, Vec<_>) = spectra.into_iter().unzip();

    let frf = estimate_bla(&freqs, &u_spec, &y_spec)?.with_sigma_weights();
    let fit = fit_sos_delay(&frf, fit_opts)?;
    let physical = physical_params_from_fit(&fit, &cfg.plant)?;
    Ok(SysidResult { frf, fit, physical })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlcIteration {
    pub iteration: usize,
    /// Full trial, all periods.
    pub trace: Trace,
    /// Correction applied during this trial, per plane.
    pub correction: [DVector<f64>; 2],
    /// Stacked `(a_sp − a, −p)` errors from the last period, per plane.
    pub error: [DVector<f64>; 2],
    /// `sqrt(mean(e_alpha² + e_beta²))` over the last period (rad).
    pub rms_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlcReport {
    pub iterations: Vec<IlcIteration>,
}

impl IlcReport {
    pub fn rms_errors(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.rms_error).collect()
    }

    pub fn summary_csv(&self) -> String {
        csv_string(
            &["iteration", "rms_error"],
            self.iterations.iter().map(|it| [it.iteration as f64, it.rms_error]),
        )
    }

    /// Correction and error of every step of the learned period for one iteration.
    pub fn iteration_csv(&self, n: usize) -> String {
        let it = &self.iterations[n];
        let len = it.correction[0].len();
        csv_string(
            &[
                "k",
                "u_ilc_alpha",
                "u_ilc_beta",
                "e_alpha",
                "e_phi",
                "e_beta",
                "e_theta",
            ],
            (0..len).map(|k| {
                [
                    k as f64,
                    it.correction[0][k],
                    it.correction[1][k],
                    it.error[0][2 * k],
                    it.error[0][2 * k + 1],
                    it.error[1][2 * k],
                    it.error[1][2 * k + 1],
                ]
            }),
        )
    }
}

/// Lifted error of the last period of `trace`. Block `i` is the error one
/// step after correction sample `i`; the final block wraps to the start of
/// the period, which repeats in periodic steady state.
pub fn lifted_error(trace: &Trace, n: usize) -> Result<[DVector<f64>; 2]> {
    if n == 0 || trace.len() < n {
        return Err(HarnessError::Config(format!(
            "trace of {} steps holds no {n}-step period",
            trace.len()
        )));
    }
    let k0 = trace.len() - n;
    let mut e = [DVector::zeros(2 * n), DVector::zeros(2 * n)];
    for i in 0..n {
        let row = &trace.rows[k0 + (i + 1) % n];
        e[0][2 * i] = row.alpha_sp - row.alpha_meas;
        e[0][2 * i + 1] = -row.phi_meas;
        e[1][2 * i] = row.beta_sp - row.beta_meas;
        e[1][2 * i + 1] = -row.theta_meas;
    }
    Ok(e)
}

fn rms_tracking_error(trace: &Trace, n: usize) -> f64 {
    let rows = &trace.rows[trace.len() - n..];
    let ss: f64 = rows
        .iter()
        .map(|r| (r.alpha_sp - r.alpha_meas).powi(2) + (r.beta_sp - r.beta_meas).powi(2))
        .sum();
    (ss / n as f64).sqrt()
}

/// Lifted map of the loop as simulated: finite-difference rates and a
/// `delay_steps` input delay line around the discretized plant. The loop
/// state is `(x, a_prev, p_prev, u[k−1], …, u[k−d])`; the correction enters
/// with the commanded input.
pub fn delayed_loop_lifted(ctrl: &Controller64, delay_steps: usize, horizon: usize) -> Result<LiftedSystem<f64>> {
    let m = &ctrl.model;
    let k = &ctrl.k;
    let ts = m.ts;
    let d = delay_steps;
    let n = 6 + d;
    // u = −K (a, p, (a − a_prev)/ts, (p − p_prev)/ts) as a row over the loop state.
    let mut u_row = DVector::<f64>::zeros(n);
    u_row[0] = -(k[0] + k[2] / ts);
    u_row[1] = -(k[1] + k[3] / ts);
    u_row[4] = k[2] / ts;
    u_row[5] = k[3] / ts;

    let mut phi = DMatrix::<f64>::zeros(n, n);
    let mut gamma = DVector::<f64>::zeros(n);
    for i in 0..4 {
        for j in 0..4 {
            phi[(i, j)] = m.a[(i, j)];
        }
    }
    if d == 0 {
        for i in 0..4 {
            for j in 0..n {
                phi[(i, j)] += m.b[i] * u_row[j];
            }
            gamma[i] = m.b[i];
        }
    } else {
        for i in 0..4 {
            phi[(i, 6 + d - 1)] = m.b[i];
        }
        for j in 0..n {
            phi[(6, j)] = u_row[j];
        }
        for i in 1..d {
            phi[(6 + i, 6 + i - 1)] = 1.0;
        }
        gamma[6] = 1.0;
    }
    phi[(4, 0)] = 1.0;
    phi[(5, 1)] = 1.0;
    let mut c = DMatrix::<f64>::zeros(2, n);
    c[(0, 0)] = 1.0;
    c[(1, 1)] = 1.0;
    Ok(build_lifted_general(&phi, &gamma, &c, horizon)?)
}

/// Runs iteration 0 without correction and `settings.iterations` learning
/// trials after it. Each trial simulates `settings.periods_per_trial` periods
/// of `traj` from rest and learns from the last one.
pub fn run_ilc_session(
    cfg: &SimConfig,
    ctrl: &[Controller64; 2],
    traj: &Trajectory,
    settings: &IlcSection,
) -> Result<IlcReport> {
    let n = traj
        .steps_per_period()
        .ok_or_else(|| HarnessError::Config("trajectory period is not a whole number of control steps".into()))?;
    if settings.periods_per_trial == 0 {
        return Err(HarnessError::Config("periods_per_trial must be at least one".into()));
    }
    let trial_steps = n * settings.periods_per_trial;
    if traj.len() < trial_steps {
        return Err(HarnessError::Config(format!(
            "trajectory has {} samples, a trial needs {trial_steps}",
            traj.len()
        )));
    }
    let lifted = delayed_loop_lifted(&ctrl[0], cfg.delay_steps, n)?;
    let base = IlcSession64::from_lifted(lifted, settings.w_e, settings.w_du)?;
    let mut sessions = [base.clone(), base];

    let mut trial_cfg = cfg.clone();
    trial_cfg.duration = trial_steps as f64 * cfg.ts;
    let mut iterations = Vec::with_capacity(settings.iterations + 1);
    for it in 0..=settings.iterations {
        trial_cfg.seed = sub_seed(cfg.seed, STREAM_ILC_NOISE, it as u64);
        let correction = [sessions[0].correction.clone(), sessions[1].correction.clone()];
        let trace = simulate_closed_loop(&trial_cfg, ctrl, traj, false, Some(&correction))?;
        let error = lifted_error(&trace, n)?;
        let rms_error = rms_tracking_error(&trace, n);
        log::info!("ILC iteration {it}: RMS error {:.4}°", rms_error.to_degrees());
        if it < settings.iterations {
            for (s, e) in sessions.iter_mut().zip(&error) {
                s.advance(e.clone())?;
            }
        }
        iterations.push(IlcIteration {
            iteration: it,
            trace,
            correction,
            error,
            rms_error,
        });
    }
    Ok(IlcReport { iterations })
}

/// Predicted steady states of one plane under constant disturbances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateReport {
    pub controller: Controller64,
    pub xi: f64,
    pub u_d: f64,
    pub x_from_xi: Vector4<f64>,
    pub x_from_u_d: Vector4<f64>,
}

impl SteadyStateReport {
    pub fn to_csv_string(&self) -> String {
        let row = |xi: f64, ud: f64, x: &Vector4<f64>| [xi, ud, x[0], x[1], x[2], x[3]];
        csv_string(
            &["xi", "u_d", "alpha", "phi", "alpha_dot", "phi_dot"],
            [row(self.xi, 0.0, &self.x_from_xi), row(0.0, self.u_d, &self.x_from_u_d)],
        )
    }

    pub fn controller_csv(&self) -> String {
        let k = &self.controller.k;
        csv_string(
            &["k_alpha", "k_phi", "k_alpha_dot", "k_phi_dot", "f"],
            [[k[0], k[1], k[2], k[3], self.controller.f]],
        )
    }
}

pub fn steady_state_report(ctrl: &Controller64, xi: f64, u_d: f64) -> Result<SteadyStateReport> {
    Ok(SteadyStateReport {
        controller: *ctrl,
        xi,
        u_d,
        x_from_xi: steady_state_output_dist(&ctrl.model, &ctrl.k, xi)?,
        x_from_u_d: steady_state_input_dist(&ctrl.model, &ctrl.k, u_d)?,
    })
}
