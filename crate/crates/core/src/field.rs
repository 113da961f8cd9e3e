//! Field allocation: control angles to a field vector, and a field vector to
//! the eight coil currents of the electromagnetic navigation system.

use std::path::Path;

use nalgebra::{SMatrix, SVector, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const COILS: usize = 8;

/// Field at the workspace centre (T).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldVector<T = f64> {
    pub b: Vector3<T>,
}

/// Independent gradient terms `(∂bx/∂x, ∂bx/∂y, ∂bx/∂z, ∂by/∂y, ∂by/∂z)` (T/m).
///
/// The remaining four entries of the 3×3 gradient follow from the field being
/// curl- and divergence-free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientVector<T = f64> {
    pub g: SVector<T, 5>,
}

impl<T: Real> GradientVector<T> {
    pub fn from_full(grad: &SMatrix<T, 3, 3>) -> Self {
        Self {
            g: SVector::<T, 5>::from([grad[(0, 0)], grad[(0, 1)], grad[(0, 2)], grad[(1, 1)], grad[(1, 2)]]),
        }
    }

    /// Full gradient `G[i][j] = ∂b_i/∂x_j`.
    pub fn to_full(&self) -> SMatrix<T, 3, 3> {
        let g = &self.g;
        let gzz = -(g[0] + g[3]);
        SMatrix::<T, 3, 3>::new(g[0], g[1], g[2], g[1], g[3], g[4], g[2], g[4], gzz)
    }
}

/// `b = |b| (sin u_a cos u_b, sin u_b, cos u_a cos u_b)`.
pub fn allocate_field<T: Real>(u_a: T, u_b: T, b_mag: T) -> FieldVector<T> {
    let (sa, ca) = u_a.sin_cos();
    let (sb, cb) = u_b.sin_cos();
    FieldVector {
        b: Vector3::new(sa * cb, sb, ca * cb) * b_mag,
    }
}

/// Inverse of [`allocate_field`] for `u_b` strictly inside `(-π/2, π/2)`.
pub fn field_angles<T: Real>(field: &FieldVector<T>) -> Result<(T, T, T)> {
    let b = &field.b;
    let mag = b.norm();
    if !(mag > T::lit(f64::MIN_POSITIVE)) || !mag.is_finite() {
        return Err(Error::DegenerateField("field magnitude is zero"));
    }
    let horizontal = (b.x * b.x + b.z * b.z).sqrt();
    if horizontal <= T::lit(1e-12) * mag {
        return Err(Error::DegenerateField("field is aligned with the y axis (u_b = ±π/2)"));
    }
    let u_b = (b.y / mag).asin();
    let u_a = b.x.atan2(b.z);
    Ok((u_a, u_b, mag))
}

/// Linear map from coil currents to field and gradient at the workspace centre.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuationMatrix<T = f64> {
    matrix: SMatrix<T, 8, 8>,
    pinv: SMatrix<T, 8, 8>,
    rank: usize,
    cond: T,
}

impl<T: Real> ActuationMatrix<T> {
    /// Wraps a matrix and caches its pseudoinverse and condition number.
    ///
    /// Singular values below `1e-12 σ_max` are treated as zero.
    pub fn new(matrix: SMatrix<T, 8, 8>) -> Self {
        let svd = matrix.svd(true, true);
        let sigma = svd.singular_values;
        let s_max = sigma.max();
        let cutoff = T::lit(1e-12) * s_max;
        let rank = sigma.iter().filter(|&&s| s > cutoff).count();
        let s_min = sigma.min();
        let cond = if s_min > T::zero() {
            s_max / s_min
        } else {
            T::max_value().unwrap_or(s_max)
        };

        let u = svd.u.expect("requested U");
        let v_t = svd.v_t.expect("requested Vᵀ");
        let sigma_inv = sigma.map(|s| if s > cutoff { T::one() / s } else { T::zero() });
        let pinv = v_t.transpose() * SMatrix::<T, 8, 8>::from_diagonal(&sigma_inv) * u.transpose();

        Self {
            matrix,
            pinv,
            rank,
            cond,
        }
    }

    /// As [`ActuationMatrix::new`], rejecting rank-deficient matrices.
    pub fn full_rank(matrix: SMatrix<T, 8, 8>) -> Result<Self> {
        let m = Self::new(matrix);
        m.require_full_rank()?;
        Ok(m)
    }

    fn require_full_rank(&self) -> Result<()> {
        if self.rank < COILS {
            return Err(Error::RankDeficient {
                rank: self.rank,
                expected: COILS,
            });
        }
        Ok(())
    }

    pub fn matrix(&self) -> &SMatrix<T, 8, 8> {
        &self.matrix
    }

    pub fn pseudo_inverse(&self) -> &SMatrix<T, 8, 8> {
        &self.pinv
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn condition_number(&self) -> T {
        self.cond
    }

    /// Parses 8 comma-separated rows of 8 values each.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        if rows.len() != COILS {
            return Err(Error::Parse(format!("expected {COILS} rows, found {}", rows.len())));
        }
        let mut m = SMatrix::<T, 8, 8>::zeros();
        for (i, row) in rows.iter().enumerate() {
            let cells: Vec<&str> = row.split(',').map(str::trim).collect();
            if cells.len() != COILS {
                return Err(Error::Parse(format!(
                    "row {} has {} columns, expected {COILS}",
                    i + 1,
                    cells.len()
                )));
            }
            for (j, cell) in cells.iter().enumerate() {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {}, column {}: '{cell}' is not a number", i + 1, j + 1)))?;
                m[(i, j)] = T::lit(v);
            }
        }
        Self::full_rank(m)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_csv_str(&text)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for i in 0..COILS {
            let row: Vec<String> = (0..COILS)
                .map(|j| format!("{:.16e}", self.matrix[(i, j)].as_f64()))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Currents `i = A⁺ (b; 0)` producing `b` with zero gradient.
pub fn currents_from_field<T: Real>(field: &FieldVector<T>, act: &ActuationMatrix<T>) -> Result<SVector<T, 8>> {
    act.require_full_rank()?;
    let mut target = SVector::<T, 8>::zeros();
    target.fixed_rows_mut::<3>(0).copy_from(&field.b);
    Ok(act.pseudo_inverse() * target)
}

/// `(b; g) = A i`.
pub fn field_from_currents<T: Real>(
    currents: &SVector<T, 8>,
    act: &ActuationMatrix<T>,
) -> (FieldVector<T>, GradientVector<T>) {
    let out = act.matrix() * currents;
    (
        FieldVector {
            b: out.fixed_rows::<3>(0).into_owned(),
        },
        GradientVector {
            g: out.fixed_rows::<5>(3).into_owned(),
        },
    )
}

/// Point-dipole coil model used to generate a synthetic actuation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleCoilArray<T = f64> {
    /// Distance of every coil centre from the workspace centre (m).
    pub distance: T,
    /// Dipole moment per ampere of coil current (A·m²/A).
    pub moment_per_amp: T,
    /// Tilt of each coil axis away from the radial direction (rad).
    pub tilt: T,
}

impl<T: Real> Default for DipoleCoilArray<T> {
    fn default() -> Self {
        Self {
            distance: T::lit(0.12),
            moment_per_amp: T::lit(5.0),
            tilt: T::lit(0.35),
        }
    }
}

const MU0_OVER_4PI: f64 = 1e-7;

/// Field and full gradient at `point` of a dipole `moment` located at `source`.
pub fn dipole_field_and_gradient<T: Real>(
    source: &Vector3<T>,
    moment: &Vector3<T>,
    point: &Vector3<T>,
) -> (Vector3<T>, SMatrix<T, 3, 3>) {
    let k = T::lit(MU0_OVER_4PI);
    let r = point - source;
    let r2 = r.norm_squared();
    let rn = r2.sqrt();
    let r3 = r2 * rn;
    let r5 = r3 * r2;
    let three = T::lit(3.0);
    let m_dot_r = moment.dot(&r);
    let b = (r * (three * m_dot_r / r5) - moment / r3) * k;
    let grad = SMatrix::<T, 3, 3>::from_fn(|i, j| {
        let delta = if i == j { T::one() } else { T::zero() };
        k * (three * (moment[j] * r[i] + moment[i] * r[j] + m_dot_r * delta) / r5
            - T::lit(15.0) * m_dot_r * r[i] * r[j] / (r5 * r2))
    });
    (b, grad)
}

impl<T: Real> DipoleCoilArray<T> {
    /// Coil centres on the corners of a cube around the workspace centre.
    pub fn positions(&self) -> [Vector3<T>; COILS] {
        let s = self.distance / T::lit(3.0).sqrt();
        let mut out = [Vector3::zeros(); COILS];
        for (n, slot) in out.iter_mut().enumerate() {
            let sign = |bit: usize| if n & bit == 0 { T::one() } else { -T::one() };
            *slot = Vector3::new(sign(1), sign(2), sign(4)) * s;
        }
        out
    }

    /// Unit coil axes: pointing at the centre, tilted towards a tangent
    /// direction that turns by an eighth of a revolution from coil to coil.
    pub fn axes(&self) -> [Vector3<T>; COILS] {
        let pos = self.positions();
        let z = Vector3::z();
        let mut out = [Vector3::zeros(); COILS];
        for (n, (slot, p)) in out.iter_mut().zip(pos.iter()).enumerate() {
            let radial = p.normalize();
            let t1 = z.cross(&radial).normalize();
            let t2 = radial.cross(&t1);
            let (s, c) = (T::two_pi() * T::from_count(n) / T::from_count(COILS)).sin_cos();
            let tangent = t1 * c + t2 * s;
            *slot = (-radial + tangent * self.tilt.tan()).normalize();
        }
        out
    }

    pub fn actuation_matrix(&self) -> ActuationMatrix<T> {
        let origin = Vector3::zeros();
        let pos = self.positions();
        let axes = self.axes();
        let mut m = SMatrix::<T, 8, 8>::zeros();
        for c in 0..COILS {
            let (b, grad) = dipole_field_and_gradient(&pos[c], &(axes[c] * self.moment_per_amp), &origin);
            let g5 = GradientVector::from_full(&grad).g;
            m.fixed_view_mut::<3, 1>(0, c).copy_from(&b);
            m.fixed_view_mut::<5, 1>(3, c).copy_from(&g5);
        }
        ActuationMatrix::new(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn allocation_examples() {
        let b = allocate_field(0.0, 0.0, 0.035).b;
        assert_eq!(b, Vector3::new(0.0, 0.0, 0.035));
        let b = allocate_field(PI / 2.0, 0.0, 0.035).b;
        assert!((b - Vector3::new(0.035, 0.0, 0.0)).norm() < 1e-15);
        let b = allocate_field(PI / 6.0, PI / 4.0, 1.0).b;
        assert!(
            (b - Vector3::new(
                0.5 * (PI / 4.0).sin(),
                (PI / 4.0).cos(),
                (PI / 6.0).cos() * (PI / 4.0).sin()
            ))
            .norm()
                < 1e-6
        );
    }

    #[test]
    fn angle_inverse() {
        let (ua, ub, m) = field_angles(&FieldVector {
            b: Vector3::new(0.0, 0.0, 0.035),
        })
        .unwrap();
        assert_eq!((ua, ub), (0.0, 0.0));
        assert_relative_eq!(m, 0.035);
        let (ua, ub, m) = field_angles(&allocate_field(PI / 6.0, PI / 4.0, 1.0)).unwrap();
        assert!((ua - PI / 6.0).abs() < 1e-12 && (ub - PI / 4.0).abs() < 1e-12 && (m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn angle_inverse_errors() {
        assert!(field_angles(&FieldVector {
            b: Vector3::new(0.0, 1.0, 0.0)
        })
        .is_err());
        assert!(field_angles(&FieldVector {
            b: Vector3::<f64>::zeros()
        })
        .is_err());
    }

    #[test]
    fn identity_and_scaled_allocation() {
        let eye = ActuationMatrix::full_rank(SMatrix::<f64, 8, 8>::identity()).unwrap();
        let field = FieldVector {
            b: Vector3::new(0.01, 0.0, 0.0),
        };
        let i = currents_from_field(&field, &eye).unwrap();
        let mut expected = SVector::<f64, 8>::zeros();
        expected[0] = 0.01;
        assert!((i - expected).norm() < 1e-16);

        let two = ActuationMatrix::full_rank(SMatrix::<f64, 8, 8>::identity() * 2.0).unwrap();
        let field = FieldVector {
            b: Vector3::new(0.003, -0.02, 0.011),
        };
        let i = currents_from_field(&field, &two).unwrap();
        assert!((i.fixed_rows::<3>(0) - field.b / 2.0).norm() < 1e-16);
        assert!(i.fixed_rows::<5>(3).norm() == 0.0);
    }

    #[test]
    fn rank_deficient_matrix_is_reported() {
        let mut m = SMatrix::<f64, 8, 8>::identity();
        m[(7, 7)] = 0.0;
        let act = ActuationMatrix::new(m);
        assert_eq!(act.rank(), 7);
        let err = currents_from_field(
            &FieldVector {
                b: Vector3::new(0.0, 0.0, 0.01),
            },
            &act,
        )
        .unwrap_err();
        assert_eq!(err, Error::RankDeficient { rank: 7, expected: 8 });
        assert!(ActuationMatrix::full_rank(m).is_err());
    }

    #[test]
    fn superposition() {
        let act = DipoleCoilArray::<f64>::default().actuation_matrix();
        let i1 = SVector::<f64, 8>::from_fn(|k, _| k as f64 * 0.3 - 1.0);
        let i2 = SVector::<f64, 8>::from_fn(|k, _| (k as f64).sin());
        let (b1, g1) = field_from_currents(&i1, &act);
        let (b2, g2) = field_from_currents(&i2, &act);
        let (b12, g12) = field_from_currents(&(i1 + i2), &act);
        assert!((b12.b - b1.b - b2.b).norm() < 1e-15);
        assert!((g12.g - g1.g - g2.g).norm() < 1e-14);
        let (b0, g0) = field_from_currents(&SVector::zeros(), &act);
        assert_eq!(b0.b.norm() + g0.g.norm(), 0.0);
    }

    #[test]
    fn dipole_gradient_matches_finite_differences() {
        let src = Vector3::new(0.07, -0.05, 0.08);
        let m = Vector3::new(-0.3, 0.5, -0.8);
        let at = Vector3::new(0.001, 0.002, -0.001);
        let (_, grad) = dipole_field_and_gradient(&src, &m, &at);
        let h = 1e-6;
        for j in 0..3 {
            let mut dp = at;
            dp[j] += h;
            let mut dm = at;
            dm[j] -= h;
            let fd =
                (dipole_field_and_gradient(&src, &m, &dp).0 - dipole_field_and_gradient(&src, &m, &dm).0) / (2.0 * h);
            for i in 0..3 {
                assert_relative_eq!(grad[(i, j)], fd[i], max_relative = 1e-6, epsilon = 1e-12);
            }
        }
        // Maxwell: divergence and curl free.
        let tr: f64 = grad.trace();
        assert!(tr.abs() < 1e-12 * grad.norm());
        assert!((grad - grad.transpose()).norm() < 1e-12 * grad.norm());
        let g5 = GradientVector::from_full(&grad);
        assert!((g5.to_full() - grad).norm() < 1e-12 * grad.norm());
    }

    #[test]
    fn synthetic_matrix_is_well_conditioned() {
        let act = DipoleCoilArray::<f64>::default().actuation_matrix();
        assert_eq!(act.rank(), 8);
        assert!(act.condition_number() <= 1e6, "cond = {}", act.condition_number());
        let field = allocate_field(0.1, -0.05, 0.035);
        let i = currents_from_field(&field, &act).unwrap();
        let (b, g) = field_from_currents(&i, &act);
        assert!((b.b - field.b).norm() <= 1e-10);
        assert!(g.g.norm() <= 1e-10);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let act = DipoleCoilArray::<f64>::default().actuation_matrix();
        let back = ActuationMatrix::<f64>::from_csv_str(&act.to_csv_string()).unwrap();
        assert_eq!(back.matrix(), act.matrix());
        assert!(ActuationMatrix::<f64>::from_csv_str("1,2,3\n").is_err());
        let bad = "1,0,0,0,0,0,0,x\n".repeat(8);
        assert!(matches!(
            ActuationMatrix::<f64>::from_csv_str(&bad),
            Err(Error::Parse(_))
        ));
    }
}
