use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use super::frf::{cabs, FrfEstimate};
use crate::dynamics::{lumped_params, PlantParams};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `G(s) = e^{−sT} b0 / (s² + a1 s + a0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SosDelayFit<T = f64> {
    pub b0: T,
    pub a1: T,
    pub a0: T,
    /// Input delay `T` (s).
    pub delay: T,
    /// Weighted squared error `Σ W² |G − Ĝ|²` at the optimum.
    pub cost: T,
    /// Weighted error after each linearized pass at the selected delay.
    pub pass_costs: Vec<T>,
}

impl<T: Real> SosDelayFit<T> {
    pub fn response(&self, freq_hz: T) -> Complex<T> {
        response(self.b0, self.a1, self.a0, self.delay, freq_hz)
    }

    /// Undamped natural frequency `sqrt(a0) / 2π` (Hz).
    pub fn natural_frequency_hz(&self) -> T {
        self.a0.max(T::zero()).sqrt() / T::two_pi()
    }
}

fn response<T: Real>(b0: T, a1: T, a0: T, delay: T, freq_hz: T) -> Complex<T> {
    let w = T::two_pi() * freq_hz;
    let den = Complex::new(a0 - w * w, a1 * w);
    let (s, c) = (w * delay).sin_cos();
    Complex::new(c, -s) * b0 / den
}

fn weighted_cost<T: Real>(frf: &FrfEstimate<T>, b0: T, a1: T, a0: T, delay: T) -> T {
    (0..frf.len()).fold(T::zero(), |acc, k| {
        let w = frf.weights[k];
        let r = response(b0, a1, a0, delay, frf.freqs[k]) - frf.g_bla[k];
        acc + w * w * r.norm_sqr()
    })
}

/// Search and iteration settings for [`fit_sos_delay`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions<T = f64> {
    /// Sample time of the recorded data (s).
    pub ts: T,
    /// Largest delay tried, in sample periods.
    pub max_delay_steps: usize,
    /// Delay grid points per sample period.
    pub grid_per_step: usize,
    /// Reweighting passes after the initial linearized solve.
    pub sk_passes: usize,
    /// Largest acceptable condition number of the scaled regression.
    pub max_condition: T,
}

impl<T: Real> FitOptions<T> {
    pub fn new(ts: T) -> Self {
        Self {
            ts,
            max_delay_steps: 5,
            grid_per_step: 10,
            sk_passes: 10,
            max_condition: T::lit(1e12),
        }
    }
}

/// Weighted linear least squares in `(b0, a1, a0)` for a delay-free response
/// `h`, with extra per-bin weights `gamma`.
fn linearized_solve<T: Real>(
    freqs: &[T],
    h: &[Complex<T>],
    weights: &[T],
    gamma: &[T],
    max_condition: T,
) -> Result<(T, T, T)> {
    let n = freqs.len();
    let mut a = DMatrix::<T>::zeros(2 * n, 3);
    let mut rhs = DVector::<T>::zeros(2 * n);
    for k in 0..n {
        let w = T::two_pi() * freqs[k];
        let s = weights[k] * gamma[k];
        let hk = h[k];
        a[(2 * k, 0)] = -s;
        a[(2 * k, 1)] = -w * hk.im * s;
        a[(2 * k, 2)] = hk.re * s;
        rhs[2 * k] = w * w * hk.re * s;
        a[(2 * k + 1, 1)] = w * hk.re * s;
        a[(2 * k + 1, 2)] = hk.im * s;
        rhs[2 * k + 1] = w * w * hk.im * s;
    }
    let scales: Vec<T> = (0..3)
        .map(|j| {
            let c = a.column(j).norm();
            if c > T::zero() {
                c
            } else {
                T::one()
            }
        })
        .collect();
    for (j, &c) in scales.iter().enumerate() {
        a.column_mut(j).scale_mut(T::one() / c);
    }
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let (s_max, s_min) = (sv.max(), sv.min());
    let cond = if s_min > T::zero() {
        s_max / s_min
    } else {
        T::max_value().unwrap_or(s_max)
    };
    if !(cond <= max_condition) {
        return Err(Error::IllConditioned { cond: cond.as_f64() });
    }
    let theta = svd
        .solve(&rhs, T::zero())
        .map_err(|_| Error::IllConditioned { cond: cond.as_f64() })?;
    Ok((theta[0] / scales[0], theta[1] / scales[1], theta[2] / scales[2]))
}

struct DelayFit<T> {
    coeffs: (T, T, T),
    cost: T,
    pass_costs: Vec<T>,
}

fn fit_at_delay<T: Real>(frf: &FrfEstimate<T>, delay: T, opts: &FitOptions<T>) -> Result<DelayFit<T>> {
    let h: Vec<Complex<T>> = frf
        .freqs
        .iter()
        .zip(&frf.g_bla)
        .map(|(&f, &g)| {
            let (s, c) = (T::two_pi() * f * delay).sin_cos();
            g * Complex::new(c, s)
        })
        .collect();
    let mut gamma = vec![T::one(); frf.len()];
    let mut pass_costs = Vec::with_capacity(opts.sk_passes + 1);
    let mut best: Option<((T, T, T), T)> = None;

    for pass in 0..=opts.sk_passes {
        let (b0, a1, a0) = linearized_solve(&frf.freqs, &h, &frf.weights, &gamma, opts.max_condition)?;
        let cost = weighted_cost(frf, b0, a1, a0, delay);
        pass_costs.push(cost);
        if best.as_ref().is_none_or(|(_, c)| cost < *c) {
            best = Some(((b0, a1, a0), cost));
        }
        if pass < opts.sk_passes {
            for (g, &f) in gamma.iter_mut().zip(&frf.freqs) {
                let w = T::two_pi() * f;
                let den = cabs(&Complex::new(a0 - w * w, a1 * w));
                *g = if den > T::zero() { T::one() / den } else { T::one() };
            }
        }
    }
    let (coeffs, cost) = best.expect("at least one pass");
    Ok(DelayFit {
        coeffs,
        cost,
        pass_costs,
    })
}

/// Fits the delayed second-order model by a grid search over the delay with
/// a Levy solve refined by Sanathanan–Koerner passes at every grid point.
pub fn fit_sos_delay<T: Real>(frf: &FrfEstimate<T>, opts: &FitOptions<T>) -> Result<SosDelayFit<T>> {
    if frf.len() < 4 {
        return Err(Error::InvalidConfig(format!(
            "need at least 4 bins to fit, got {}",
            frf.len()
        )));
    }
    if frf.weights.len() != frf.len() {
        return Err(Error::DimensionMismatch {
            expected: frf.len(),
            got: frf.weights.len(),
        });
    }
    if !(opts.ts > T::zero()) || opts.grid_per_step == 0 {
        return Err(Error::InvalidConfig(
            "delay grid needs a positive sample time and step".into(),
        ));
    }
    let step = opts.ts / T::from_count(opts.grid_per_step);
    let points = opts.max_delay_steps * opts.grid_per_step;

    let mut best: Option<SosDelayFit<T>> = None;
    for j in 0..=points {
        let delay = step * T::from_count(j);
        let fit = fit_at_delay(frf, delay, opts)?;
        if best.as_ref().is_none_or(|b| fit.cost < b.cost) {
            let (b0, a1, a0) = fit.coeffs;
            best = Some(SosDelayFit {
                b0,
                a1,
                a0,
                delay,
                cost: fit.cost,
                pass_costs: fit.pass_costs,
            });
        }
    }
    Ok(best.expect("grid is never empty"))
}

/// Damping and dipole moment recovered from a fit of the detached actuator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalEstimate<T = f64> {
    pub damping: T,
    pub dipole_moment: T,
    /// `|a0 − (b0 − eta g / J)|`, zero for a perfectly consistent fit.
    pub stiffness_residual: T,
}

/// Maps `J a'' + d a' + (|m||b| − eta g) a = |m||b| u` onto the fitted coefficients.
pub fn physical_params_from_fit<T: Real>(fit: &SosDelayFit<T>, plant: &PlantParams<T>) -> Result<PhysicalEstimate<T>> {
    let lp = lumped_params(plant);
    if !(fit.b0 > T::zero()) {
        return Err(Error::NonPhysicalFit(format!(
            "input gain b0 = {} is not positive",
            fit.b0
        )));
    }
    let dipole_moment = fit.b0 * lp.inertia / plant.field_magnitude;
    let damping = fit.a1 * lp.inertia;
    if damping < T::zero() {
        return Err(Error::NonPhysicalFit(format!("damping {damping} is negative")));
    }
    let stiffness_residual = (fit.a0 - (fit.b0 - lp.first_moment * plant.gravity / lp.inertia)).abs();
    Ok(PhysicalEstimate {
        damping,
        dipole_moment,
        stiffness_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(b0: f64, a1: f64, a0: f64, delay: f64) -> FrfEstimate<f64> {
        let freqs: Vec<f64> = (1..=100).map(|k| 0.1 * k as f64).collect();
        let g = freqs.iter().map(|&f| response(b0, a1, a0, delay, f)).collect();
        FrfEstimate {
            sigma_nl: vec![0.0; freqs.len()],
            weights: vec![1.0; freqs.len()],
            freqs,
            g_bla: g,
        }
    }

    #[test]
    fn recovers_delayed_second_order() {
        let frf = synthetic(370.0, 0.7, 289.0, 0.02);
        let fit = fit_sos_delay(&frf, &FitOptions::new(0.01)).unwrap();
        assert!((fit.b0 / 370.0 - 1.0).abs() < 5e-3, "{fit:?}");
        assert!((fit.a1 / 0.7 - 1.0).abs() < 5e-3, "{fit:?}");
        assert!((fit.a0 / 289.0 - 1.0).abs() < 5e-3, "{fit:?}");
        assert!((fit.delay - 0.02).abs() <= 0.001 + 1e-12);
    }

    #[test]
    fn zero_delay_selected() {
        let frf = synthetic(370.0, 0.7, 289.0, 0.0);
        let fit = fit_sos_delay(&frf, &FitOptions::new(0.01)).unwrap();
        assert_eq!(fit.delay, 0.0);
    }

    #[test]
    fn pass_costs_do_not_increase_on_exact_data() {
        let frf = synthetic(370.0, 0.7, 289.0, 0.013);
        let fit = fit_sos_delay(&frf, &FitOptions::new(0.01)).unwrap();
        for w in fit.pass_costs.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-24, "{:?}", fit.pass_costs);
        }
    }

    #[test]
    fn too_few_bins() {
        let mut frf = synthetic(1.0, 1.0, 1.0, 0.0);
        frf.freqs.truncate(3);
        frf.g_bla.truncate(3);
        frf.sigma_nl.truncate(3);
        frf.weights.truncate(3);
        assert!(fit_sos_delay(&frf, &FitOptions::new(0.01)).is_err());
    }

    #[test]
    fn degenerate_data_is_ill_conditioned() {
        let mut frf = synthetic(1.0, 1.0, 1.0, 0.0);
        frf.g_bla.iter_mut().for_each(|g| *g = Complex::new(0.0, 0.0));
        assert!(matches!(
            fit_sos_delay(&frf, &FitOptions::new(0.01)),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn physical_mapping() {
        let plant = PlantParams::<f64>::nominal();
        let fit = SosDelayFit {
            b0: 370.0,
            a1: 0.7,
            a0: 289.0,
            delay: 0.0,
            cost: 0.0,
            pass_costs: vec![],
        };
        let est = physical_params_from_fit(&fit, &plant).unwrap();
        assert!((est.dipole_moment - 1.5001).abs() < 1e-4);
        assert!((est.damping - 9.933e-5).abs() < 1e-8);
        let bad = SosDelayFit {
            b0: -1.0,
            ..fit.clone()
        };
        assert!(physical_params_from_fit(&bad, &plant).is_err());
        let bad = SosDelayFit { a1: -0.1, ..fit };
        assert!(physical_params_from_fit(&bad, &plant).is_err());
    }
}
