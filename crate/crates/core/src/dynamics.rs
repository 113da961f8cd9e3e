//! Planar actuator–pendulum model.
//!
//! The actuator rod carries the magnets and pivots at the base; the pendulum
//! rod is hinged at the actuator tip. Both angles are measured from the
//! inertial vertical, and the magnetic field angle `u` acts on the actuator
//! through the dipole potential `-|m||b| cos(u - a)`. Each of the two
//! orthogonal planes is modelled independently with this same structure.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, RowVector4, SMatrix, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::control::discretize_exact;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Physical constants of the actuator, pendulum and magnet assembly.
///
/// A pendulum mass of zero describes the actuator with the pendulum detached,
/// which is the configuration used for identification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct PlantParams<T = f64> {
    /// Pendulum mass (kg).
    pub pendulum_mass: T,
    /// Actuator rod mass (kg).
    pub actuator_mass: T,
    /// Mass of the joint at the actuator tip (kg).
    pub joint_mass: T,
    /// Magnet mass (kg).
    pub magnet_mass: T,
    /// Pendulum length (m).
    pub pendulum_length: T,
    /// Actuator length (m).
    pub actuator_length: T,
    /// Distance from the pivot to the magnets' centre of mass (m).
    pub magnet_offset: T,
    /// Viscous damping on the actuator joint (N·m·s/rad).
    pub damping: T,
    /// Dipole moment magnitude (A·m²).
    pub dipole_moment: T,
    /// Field magnitude (T).
    pub field_magnitude: T,
    /// Gravitational acceleration (m/s²).
    pub gravity: T,
}

impl<T: Real> Default for PlantParams<T> {
    fn default() -> Self {
        Self::nominal()
    }
}

impl<T: Real> PlantParams<T> {
    /// Bench geometry and masses at a 35 mT field.
    ///
    /// `damping` and `dipole_moment` are synthetic placeholders standing in
    /// for identified values.
    pub fn nominal() -> Self {
        Self {
            pendulum_mass: T::lit(4.4e-3),
            actuator_mass: T::lit(2.4e-3),
            joint_mass: T::lit(2.0e-3),
            magnet_mass: T::lit(12.7e-3),
            pendulum_length: T::lit(0.405),
            actuator_length: T::lit(0.218),
            magnet_offset: T::lit(0.038),
            damping: T::lit(1.0e-4),
            dipole_moment: T::lit(1.5),
            field_magnitude: T::lit(0.035),
            gravity: T::lit(9.81),
        }
    }

    /// Same assembly with the pendulum removed.
    pub fn detached(&self) -> Self {
        Self {
            pendulum_mass: T::zero(),
            ..*self
        }
    }

    /// Checks sign constraints on every constant.
    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        let checks: [(&str, bool); 11] = [
            ("pendulum_mass must be >= 0", self.pendulum_mass >= z),
            ("actuator_mass must be >= 0", self.actuator_mass >= z),
            ("joint_mass must be >= 0", self.joint_mass >= z),
            ("magnet_mass must be >= 0", self.magnet_mass >= z),
            ("pendulum_length must be > 0", self.pendulum_length > z),
            ("actuator_length must be > 0", self.actuator_length > z),
            ("magnet_offset must be > 0", self.magnet_offset > z),
            ("damping must be >= 0", self.damping >= z),
            ("dipole_moment must be > 0", self.dipole_moment > z),
            ("field_magnitude must be > 0", self.field_magnitude > z),
            ("gravity must be > 0", self.gravity > z),
        ];
        if let Some((msg, _)) = checks.iter().find(|(_, ok)| !ok) {
            return Err(Error::InvalidParams((*msg).to_string()));
        }
        let lumped = lumped_params(self);
        if !(lumped.inertia > z && lumped.first_moment > z) {
            return Err(Error::InvalidParams(
                "lumped inertia and first moment must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Linearized actuator stiffness `|m||b| - (eta + M l) g` (N·m/rad).
    pub fn actuator_stiffness(&self) -> T {
        let eta = lumped_params(self).first_moment;
        self.magnetic_torque_scale() - (eta + self.pendulum_mass * self.actuator_length) * self.gravity
    }

    /// The actuator can only be held upright when its linearized stiffness is positive.
    pub fn is_stabilizable(&self) -> bool {
        self.actuator_stiffness() > T::zero()
    }

    /// `|m||b|` (N·m).
    #[inline]
    pub fn magnetic_torque_scale(&self) -> T {
        self.dipole_moment * self.field_magnitude
    }
}

/// Lumped inertia and first moment of the actuator about its pivot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LumpedParams<T = f64> {
    /// `J` (kg·m²).
    pub inertia: T,
    /// `eta` (kg·m).
    pub first_moment: T,
}

pub fn lumped_params<T: Real>(p: &PlantParams<T>) -> LumpedParams<T> {
    let l = p.actuator_length;
    let half = T::lit(0.5);
    let quarter = T::lit(0.25);
    LumpedParams {
        inertia: p.magnet_mass * p.magnet_offset * p.magnet_offset
            + p.actuator_mass * l * l * quarter
            + p.joint_mass * l * l,
        first_moment: p.magnet_mass * p.magnet_offset + p.actuator_mass * l * half + p.joint_mass * l,
    }
}

/// State of one plane: actuator angle, pendulum angle and their rates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarState<T = f64> {
    pub a: T,
    pub p: T,
    pub a_dot: T,
    pub p_dot: T,
}

impl<T: Real> PlanarState<T> {
    pub fn new(a: T, p: T, a_dot: T, p_dot: T) -> Self {
        Self { a, p, a_dot, p_dot }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn to_vector(&self) -> Vector4<T> {
        Vector4::new(self.a, self.p, self.a_dot, self.p_dot)
    }

    pub fn from_vector(v: &Vector4<T>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }
}

pub fn magnetic_potential<T: Real>(u_a: T, a: T, p: &PlantParams<T>) -> T {
    -p.magnetic_torque_scale() * (u_a - a).cos()
}

/// Angular accelerations `(a_ddot, p_ddot)` of the nonlinear plane model.
pub fn nonlinear_accel<T: Real>(s: &PlanarState<T>, u_a: T, p: &PlantParams<T>) -> (T, T) {
    nonlinear_accel_with_torque(s, u_a, p, T::zero())
}

/// As [`nonlinear_accel`], with an additional external torque on the actuator.
pub fn nonlinear_accel_with_torque<T: Real>(
    s: &PlanarState<T>,
    u_a: T,
    p: &PlantParams<T>,
    actuator_torque: T,
) -> (T, T) {
    let lp = lumped_params(p);
    let (big_m, l, big_l, g) = (p.pendulum_mass, p.actuator_length, p.pendulum_length, p.gravity);
    let half = T::lit(0.5);

    let coupling = half * big_m * l * big_l;
    let (sin_rel, cos_rel) = (s.a - s.p).sin_cos();

    let rhs_a = -coupling * sin_rel * s.p_dot * s.p_dot
        + (lp.first_moment + big_m * l) * g * s.a.sin()
        + p.magnetic_torque_scale() * (u_a - s.a).sin()
        - p.damping * s.a_dot
        + actuator_torque;

    if big_m == T::zero() {
        // Detached pendulum: only the actuator equation remains.
        return (rhs_a / lp.inertia, T::zero());
    }

    let rhs_p = coupling * sin_rel * s.a_dot * s.a_dot + big_m * g * big_l * half * s.p.sin();

    let m11 = lp.inertia + big_m * l * l;
    let m12 = coupling * cos_rel;
    let m22 = T::lit(0.25) * big_m * big_l * big_l;
    let det = m11 * m22 - m12 * m12;
    assert!(det > T::zero(), "mass matrix must be positive definite");

    ((m22 * rhs_a - m12 * rhs_p) / det, (m11 * rhs_p - m12 * rhs_a) / det)
}

pub fn total_energy<T: Real>(s: &PlanarState<T>, u_a: T, p: &PlantParams<T>) -> T {
    let lp = lumped_params(p);
    let (big_m, l, big_l, g) = (p.pendulum_mass, p.actuator_length, p.pendulum_length, p.gravity);
    let half = T::lit(0.5);
    let kinetic = half * (lp.inertia + big_m * l * l) * s.a_dot * s.a_dot
        + T::lit(0.125) * big_m * big_l * big_l * s.p_dot * s.p_dot
        + half * big_m * l * big_l * s.a_dot * s.p_dot * (s.a - s.p).cos();
    let potential = (lp.first_moment + big_m * l) * g * s.a.cos()
        + big_m * g * big_l * half * s.p.cos()
        + magnetic_potential(u_a, s.a, p);
    kinetic + potential
}

/// Time derivative of the planar state.
pub fn state_derivative<T: Real>(s: &PlanarState<T>, u_a: T, p: &PlantParams<T>, actuator_torque: T) -> PlanarState<T> {
    let (a_dd, p_dd) = nonlinear_accel_with_torque(s, u_a, p, actuator_torque);
    PlanarState::new(s.a_dot, s.p_dot, a_dd, p_dd)
}

/// One classical Runge–Kutta step with the field angle held constant.
///
/// `torque` is evaluated at every stage and may depend on the state.
pub fn rk4_step<T: Real, F>(s: &PlanarState<T>, u_a: T, p: &PlantParams<T>, dt: T, torque: F) -> PlanarState<T>
where
    F: Fn(&PlanarState<T>) -> T,
{
    let x = s.to_vector();
    let f = |v: &Vector4<T>| {
        let st = PlanarState::from_vector(v);
        state_derivative(&st, u_a, p, torque(&st)).to_vector()
    };
    let half = T::lit(0.5);
    let k1 = f(&x);
    let k2 = f(&(x + k1 * (dt * half)));
    let k3 = f(&(x + k2 * (dt * half)));
    let k4 = f(&(x + k3 * dt));
    let next = x + (k1 + k2 * T::lit(2.0) + k3 * T::lit(2.0) + k4) * (dt / T::lit(6.0));
    PlanarState::from_vector(&next)
}

/// Second-order linearization `M q'' + D q' + K q = w u` about the upright equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderModel<T = f64> {
    pub mass: Matrix2<T>,
    pub damping: Matrix2<T>,
    pub stiffness: Matrix2<T>,
    pub input: Vector2<T>,
}

pub fn second_order_model<T: Real>(p: &PlantParams<T>) -> SecondOrderModel<T> {
    let lp = lumped_params(p);
    let (big_m, l, big_l, g) = (p.pendulum_mass, p.actuator_length, p.pendulum_length, p.gravity);
    let half = T::lit(0.5);
    let z = T::zero();
    let mb = p.magnetic_torque_scale();
    SecondOrderModel {
        mass: Matrix2::new(
            lp.inertia + big_m * l * l,
            half * big_m * l * big_l,
            half * big_m * l * big_l,
            T::lit(0.25) * big_m * big_l * big_l,
        ),
        damping: Matrix2::new(p.damping, z, z, z),
        stiffness: Matrix2::new(-(lp.first_moment + big_m * l) * g + mb, z, z, -big_m * g * big_l * half),
        input: Vector2::new(mb, z),
    }
}

/// Continuous and exactly discretized state-space model of one plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel<T = f64> {
    pub a_c: Matrix4<T>,
    pub b_c: Vector4<T>,
    pub a: Matrix4<T>,
    pub b: Vector4<T>,
    /// Measured outputs `(a, p)`.
    pub c: Matrix2x4<T>,
    /// Output-controllable selector (actuator angle).
    pub c_tilde: RowVector4<T>,
    pub ts: T,
}

pub fn linearized_model<T: Real>(p: &PlantParams<T>, ts: T) -> Result<LinearModel<T>> {
    if !p.is_stabilizable() {
        log::warn!(
            "actuator stiffness {} is not positive; the upright equilibrium cannot be held",
            p.actuator_stiffness()
        );
    }
    let sec = second_order_model(p);
    let z = T::zero();

    // With the pendulum detached the second row of M vanishes and the
    // pendulum coordinates are left as a free double integrator at rest.
    let mass_inv = if p.pendulum_mass == z {
        Matrix2::new(T::one() / sec.mass[(0, 0)], z, z, z)
    } else {
        sec.mass
            .try_inverse()
            .ok_or(Error::Singular("linearized mass matrix"))?
    };

    let mut a_c = Matrix4::zeros();
    a_c.fixed_view_mut::<2, 2>(0, 2).copy_from(&Matrix2::identity());
    a_c.fixed_view_mut::<2, 2>(2, 0).copy_from(&(-mass_inv * sec.stiffness));
    a_c.fixed_view_mut::<2, 2>(2, 2).copy_from(&(-mass_inv * sec.damping));
    let mut b_c = Vector4::zeros();
    b_c.fixed_rows_mut::<2>(2).copy_from(&(mass_inv * sec.input));

    let (a, b) = discretize_exact(&a_c, &b_c, ts)?;
    let o = T::one();
    Ok(LinearModel {
        a_c,
        b_c,
        a,
        b,
        c: Matrix2x4::new(o, z, z, z, z, o, z, z),
        c_tilde: RowVector4::new(o, z, z, z),
        ts,
    })
}

/// Assembles the decoupled two-plane model `(A, B)` from per-plane blocks.
pub fn block_diagonal<T: Real>(
    alpha: &Matrix4<T>,
    alpha_in: &Vector4<T>,
    beta: &Matrix4<T>,
    beta_in: &Vector4<T>,
) -> (SMatrix<T, 8, 8>, SMatrix<T, 8, 2>) {
    let mut a = SMatrix::<T, 8, 8>::zeros();
    let mut b = SMatrix::<T, 8, 2>::zeros();
    a.fixed_view_mut::<4, 4>(0, 0).copy_from(alpha);
    a.fixed_view_mut::<4, 4>(4, 4).copy_from(beta);
    b.fixed_view_mut::<4, 1>(0, 0).copy_from(alpha_in);
    b.fixed_view_mut::<4, 1>(4, 1).copy_from(beta_in);
    (a, b)
}
