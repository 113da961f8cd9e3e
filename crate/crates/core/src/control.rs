//! Discrete-time state-feedback synthesis.

use nalgebra::{DMatrix, DVector, Matrix4, RowSVector, RowVector4, SMatrix, SVector, Vector4};

use crate::dynamics::{LinearModel, PlanarState};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Zero-order-hold discretization via the exponential of the augmented matrix
/// `[[A, B], [0, 0]] * ts`.
pub fn discretize_exact<T: Real, const N: usize, const M: usize>(
    a_c: &SMatrix<T, N, N>,
    b_c: &SMatrix<T, N, M>,
    ts: T,
) -> Result<(SMatrix<T, N, N>, SMatrix<T, N, M>)> {
    if !(ts > T::zero()) {
        return Err(Error::InvalidConfig(format!("sample time must be positive, got {ts}")));
    }
    let mut aug = DMatrix::<T>::zeros(N + M, N + M);
    aug.view_mut((0, 0), (N, N)).copy_from(&(a_c * ts));
    aug.view_mut((0, N), (N, M)).copy_from(&(b_c * ts));
    let e = aug.exp();
    let a = SMatrix::<T, N, N>::from_fn(|i, j| e[(i, j)]);
    let b = SMatrix::<T, N, M>::from_fn(|i, j| e[(i, N + j)]);
    Ok((a, b))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius<T: Real, const N: usize>(m: &SMatrix<T, N, N>) -> T {
    let d = DMatrix::from_iterator(N, N, m.iter().copied());
    d.complex_eigenvalues()
        .iter()
        .map(|c| (c.re * c.re + c.im * c.im).sqrt())
        .fold(T::zero(), |acc, x| if x > acc { x } else { acc })
}

/// Quadratic weights of the regulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrWeights<T, const N: usize> {
    pub q: SMatrix<T, N, N>,
    pub r: T,
}

impl<T: Real> LqrWeights<T, 4> {
    /// `diag(10, 100, 1, 1)` on `(a, p, a_dot, p_dot)` and unit input weight.
    pub fn nominal() -> Self {
        Self::diagonal([10.0, 100.0, 1.0, 1.0], 1.0)
    }

    pub fn diagonal(q: [f64; 4], r: f64) -> Self {
        Self {
            q: Matrix4::from_diagonal(&Vector4::new(T::lit(q[0]), T::lit(q[1]), T::lit(q[2]), T::lit(q[3]))),
            r: T::lit(r),
        }
    }
}

/// Stabilizing solution of the discrete algebraic Riccati equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DareSolution<T, const N: usize> {
    pub p: SMatrix<T, N, N>,
    pub k: RowSVector<T, N>,
    pub iterations: usize,
}

pub const DARE_MAX_ITERATIONS: usize = 200;

fn dare_tolerance<T: Real>() -> T {
    let floor = T::lit(1e-12);
    let machine = T::eps() * T::lit(64.0);
    if machine > floor {
        machine
    } else {
        floor
    }
}

/// Riccati residual `AᵀPA − P − AᵀPB(R + BᵀPB)⁻¹BᵀPA + Q`.
pub fn dare_residual<T: Real, const N: usize>(
    a: &SMatrix<T, N, N>,
    b: &SVector<T, N>,
    w: &LqrWeights<T, N>,
    p: &SMatrix<T, N, N>,
) -> SMatrix<T, N, N> {
    let pb = p * b;
    let denom = w.r + (b.transpose() * pb)[(0, 0)];
    let atpb = a.transpose() * pb;
    a.transpose() * p * a - p - atpb * atpb.transpose() / denom + w.q
}

/// Solves the DARE with the structure-preserving doubling algorithm and
/// returns the Riccati solution together with the optimal gain.
pub fn solve_dare<T: Real, const N: usize>(
    a: &SMatrix<T, N, N>,
    b: &SVector<T, N>,
    w: &LqrWeights<T, N>,
) -> Result<DareSolution<T, N>> {
    if !(w.r > T::zero()) {
        return Err(Error::InvalidConfig("input weight must be positive".into()));
    }
    let half = T::lit(0.5);
    let tol = dare_tolerance::<T>();
    let id = SMatrix::<T, N, N>::identity();

    let mut ak = *a;
    let mut gk = b * b.transpose() / w.r;
    let mut hk = (w.q + w.q.transpose()) * half;
    let mut change = T::zero();
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=DARE_MAX_ITERATIONS {
        iterations = it;
        let wk = (id + gk * hk)
            .try_inverse()
            .ok_or(Error::Singular("doubling step I + G H"))?;
        let a_next = ak * wk * ak;
        let g_next = gk + ak * wk * gk * ak.transpose();
        let h_next = hk + ak.transpose() * hk * wk * ak;
        let h_next = (h_next + h_next.transpose()) * half;
        let g_next = (g_next + g_next.transpose()) * half;

        if !h_next.iter().all(|x| x.is_finite()) {
            return Err(Error::NotStabilizable("Riccati iterate diverged".into()));
        }
        change = (h_next - hk).norm();
        let scale = h_next.norm();
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if change <= tol * scale || scale == T::zero() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            iterations,
            change: change.as_f64(),
        });
    }

    let p = hk;
    let pb = p * b;
    let denom = w.r + (b.transpose() * pb)[(0, 0)];
    let k = (pb.transpose() * a) / denom;

    let rho = spectral_radius(&(a - b * k));
    if !(rho < T::one()) {
        return Err(Error::NotStabilizable(format!(
            "closed-loop spectral radius {rho} is not below one"
        )));
    }
    Ok(DareSolution { p, k, iterations })
}

/// Prefilter for an arbitrary single-input system and output selector.
pub fn prefilter_gain_raw<T: Real, const N: usize>(
    a: &SMatrix<T, N, N>,
    b: &SVector<T, N>,
    k: &RowSVector<T, N>,
    c_tilde: &RowSVector<T, N>,
) -> Result<T> {
    let abar = closed_loop_steady_matrix(a, b, k);
    let abar = DMatrix::from_column_slice(N, N, abar.as_slice());
    let rhs = DVector::from_column_slice(b.as_slice());
    let abar_inv_b = abar.lu().solve(&rhs).ok_or(Error::Singular("I - A + B K"))?;
    let dc = (0..N).fold(T::zero(), |acc, i| acc + c_tilde[i] * abar_inv_b[i]) * (k * c_tilde.transpose())[(0, 0)];
    if !(dc.abs() > T::eps()) || !dc.is_finite() {
        return Err(Error::Singular("prefilter DC gain is zero"));
    }
    Ok(T::one() / dc)
}

/// `F = (C̃ Ā⁻¹ B K C̃ᵀ)⁻¹` with `Ā = I − A + B K`.
pub fn prefilter_gain<T: Real>(model: &LinearModel<T>, k: &RowVector4<T>) -> Result<T> {
    prefilter_gain_raw(&model.a, &model.b, k, &model.c_tilde)
}

/// `Ā = I − A + B K`.
pub fn closed_loop_steady_matrix<T: Real, const N: usize>(
    a: &SMatrix<T, N, N>,
    b: &SVector<T, N>,
    k: &RowSVector<T, N>,
) -> SMatrix<T, N, N> {
    SMatrix::<T, N, N>::identity() - a + b * k
}

/// State-feedback law `u = K (x_sp − x)`.
pub fn feedback<T: Real>(x_sp: &PlanarState<T>, x: &PlanarState<T>, k: &RowVector4<T>) -> T {
    (k * (x_sp.to_vector() - x.to_vector()))[(0, 0)]
}

pub fn finite_diff_velocity<T: Real>(prev: T, curr: T, ts: T) -> T {
    (curr - prev) / ts
}

/// Regulator, gain and prefilter for one plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controller<T = f64> {
    pub k: RowVector4<T>,
    pub f: T,
    pub p_dare: Matrix4<T>,
    pub model: LinearModel<T>,
}

impl<T: Real> Controller<T> {
    pub fn synthesize(model: &LinearModel<T>, weights: &LqrWeights<T, 4>) -> Result<Self> {
        let sol = solve_dare(&model.a, &model.b, weights)?;
        let f = prefilter_gain(model, &sol.k)?;
        Ok(Self {
            k: sol.k,
            f,
            p_dare: sol.p,
            model: *model,
        })
    }

    /// Setpoint state for a (prefiltered) actuator reference and its rate.
    pub fn setpoint_state(&self, a_sp: T, a_sp_rate: T) -> PlanarState<T> {
        PlanarState::new(self.f * a_sp, T::zero(), self.f * a_sp_rate, T::zero())
    }

    pub fn control(&self, x_sp: &PlanarState<T>, x: &PlanarState<T>) -> T {
        feedback(x_sp, x, &self.k)
    }

    pub fn closed_loop_matrix(&self) -> Matrix4<T> {
        self.model.a - self.model.b * self.k
    }
}

/// Backward-difference rate estimate from raw angle samples, with an
/// optional first-order smoothing stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimator<T = f64> {
    ts: T,
    smoothing: Option<T>,
    prev: Option<T>,
    rate: T,
}

impl<T: Real> RateEstimator<T> {
    pub fn new(ts: T) -> Self {
        Self {
            ts,
            smoothing: None,
            prev: None,
            rate: T::zero(),
        }
    }

    /// Enables smoothing with coefficient `alpha` in (0, 1].
    pub fn with_smoothing(mut self, alpha: T) -> Self {
        self.smoothing = Some(alpha);
        self
    }

    /// Feeds one angle sample and returns the current rate estimate.
    /// The first sample yields zero.
    pub fn update(&mut self, angle: T) -> T {
        let raw = match self.prev {
            Some(prev) => finite_diff_velocity(prev, angle, self.ts),
            None => T::zero(),
        };
        self.prev = Some(angle);
        self.rate = match self.smoothing {
            Some(alpha) => self.rate + alpha * (raw - self.rate),
            None => raw,
        };
        self.rate
    }

    pub fn rate(&self) -> T {
        self.rate
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{linearized_model, PlantParams};
    use approx::assert_relative_eq;
    use nalgebra::{Matrix1, Matrix2, RowVector1, Vector1, Vector2};

    #[test]
    fn integrator_discretization() {
        let (a, b) = discretize_exact(&Matrix1::new(0.0), &Vector1::new(1.0), 0.01).unwrap();
        assert_relative_eq!(a[(0, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(b[(0, 0)], 0.01, epsilon = 1e-15);
    }

    #[test]
    fn double_integrator_discretization() {
        let ts = 0.01;
        let (a, b) = discretize_exact(&Matrix2::new(0.0, 1.0, 0.0, 0.0), &Vector2::new(0.0, 1.0), ts).unwrap();
        assert!((a - Matrix2::new(1.0, ts, 0.0, 1.0)).norm() < 1e-15);
        assert!((b - Vector2::new(ts * ts / 2.0, ts)).norm() < 1e-15);
    }

    #[test]
    fn discretization_rejects_nonpositive_step() {
        assert!(discretize_exact(&Matrix1::new(0.0), &Vector1::new(1.0), 0.0).is_err());
    }

    #[test]
    fn scalar_dare_golden_ratio() {
        let w = LqrWeights {
            q: Matrix1::new(1.0),
            r: 1.0,
        };
        let sol = solve_dare(&Matrix1::new(1.0), &Vector1::new(1.0), &w).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((sol.p[(0, 0)] - phi).abs() < 1e-12);
        assert!((sol.k[(0, 0)] - (phi - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_cost_stable_system() {
        let a = Matrix2::new(0.5, 0.1, 0.0, 0.3);
        let w = LqrWeights {
            q: Matrix2::zeros(),
            r: 1.0,
        };
        let sol = solve_dare(&a, &Vector2::new(0.0, 1.0), &w).unwrap();
        assert_eq!(sol.p, Matrix2::zeros());
        assert_eq!(sol.k, nalgebra::RowVector2::zeros());
    }

    #[test]
    fn unstabilizable_pair_is_rejected() {
        let a = Matrix2::new(2.0, 0.0, 0.0, 0.5);
        let b = Vector2::new(0.0, 1.0);
        let w = LqrWeights {
            q: Matrix2::identity(),
            r: 1.0,
        };
        assert!(solve_dare(&a, &b, &w).is_err());
    }

    #[test]
    fn pendulum_dare_stabilizes() {
        let m = linearized_model(&PlantParams::nominal(), 0.01).unwrap();
        let w = LqrWeights::nominal();
        let sol = solve_dare(&m.a, &m.b, &w).unwrap();
        let res = dare_residual(&m.a, &m.b, &w, &sol.p);
        assert!(res.norm() <= 1e-10 * sol.p.norm(), "{}", res.norm());
        assert!(spectral_radius(&(m.a - m.b * sol.k)) < 1.0);
        assert!((sol.p - sol.p.transpose()).norm() < 1e-12 * sol.p.norm());
        assert!(sol
            .p
            .symmetric_eigenvalues()
            .iter()
            .all(|&e| e >= -1e-12 * sol.p.norm()));
    }

    #[test]
    fn prefilter_definition() {
        // A = 0, B = 1, K = -2: Ā = -1 and C̃ Ā⁻¹ B K C̃ᵀ = 2.
        let f = prefilter_gain_raw(
            &Matrix1::new(0.0),
            &Vector1::new(1.0),
            &RowVector1::new(-2.0),
            &RowVector1::new(1.0),
        )
        .unwrap();
        assert_relative_eq!(f, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn prefilter_zero_gain_errors() {
        let r = prefilter_gain_raw(
            &Matrix1::new(0.5),
            &Vector1::new(1.0),
            &RowVector1::new(0.0),
            &RowVector1::new(1.0),
        );
        assert!(r.is_err());
    }

    #[test]
    fn feedback_law() {
        let k = RowVector4::new(1.0, 0.0, 0.0, 0.0);
        let x = PlanarState::new(0.2, 0.1, -0.3, 0.0);
        assert_eq!(feedback(&x, &x, &k), 0.0);
        let sp = PlanarState::new(0.3, 0.1, -0.3, 0.0);
        assert_relative_eq!(feedback(&sp, &x, &k), 0.1, epsilon = 1e-15);
        let k = RowVector4::new(1.5, -2.0, 0.3, 0.7);
        let d = PlanarState::new(0.01, 0.02, 0.03, -0.04);
        let d2 = PlanarState::new(0.02, 0.04, 0.06, -0.08);
        let z = PlanarState::zero();
        assert_relative_eq!(feedback(&d2, &z, &k), 2.0 * feedback(&d, &z, &k), max_relative = 1e-15);
    }

    #[test]
    fn finite_differences() {
        assert_relative_eq!(finite_diff_velocity(0.0, 0.001, 0.01), 0.1, max_relative = 1e-12);
        assert_eq!(finite_diff_velocity(0.4, 0.4, 0.01), 0.0);
    }

    #[test]
    fn finite_difference_error_on_sine() {
        let (f, ts) = (1.0, 0.01);
        let w = 2.0 * std::f64::consts::PI * f;
        let bound = 2.0 * std::f64::consts::PI.powi(2) * f * f * ts;
        let mut worst: f64 = 0.0;
        for k in 1..200 {
            let t = k as f64 * ts;
            let est = finite_diff_velocity((w * (t - ts)).sin(), (w * t).sin(), ts);
            worst = worst.max((est - w * (w * t).cos()).abs());
        }
        assert!(worst <= bound, "{worst} > {bound}");
    }

    #[test]
    fn rate_estimator_smoothing() {
        let mut raw = RateEstimator::new(0.01);
        assert_eq!(raw.update(1.0), 0.0);
        assert_relative_eq!(raw.update(1.01), 1.0, max_relative = 1e-9);
        let mut smooth = RateEstimator::new(0.01).with_smoothing(0.5);
        smooth.update(1.0);
        assert_relative_eq!(smooth.update(1.01), 0.5, max_relative = 1e-9);
    }
}
