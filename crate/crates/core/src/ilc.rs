//! Norm-optimal iterative learning control on the lifted closed loop.
//!
//! One trial spans `N` control steps. The correction `u` is added to the
//! feedback output; the error `e` stacks `(a_sp − a, p_sp − p)` pairs. Column
//! `j` of the lifted map holds the closed-loop output response to a unit
//! correction at step `j`, starting one step later.

use nalgebra::{DMatrix, DVector, RowVector4};

use crate::dynamics::LinearModel;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Block-lower-triangular map from an `N`-step correction to `2N` outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSystem<T = f64> {
    pub p: DMatrix<T>,
    pub horizon: usize,
}

pub fn build_lifted<T: Real>(model: &LinearModel<T>, k: &RowVector4<T>, horizon: usize) -> Result<LiftedSystem<T>> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("ILC horizon must be at least one step".into()));
    }
    let closed = model.a - model.b * k;
    // Markov parameters C (A − BK)^m B.
    let mut markov = Vec::with_capacity(horizon);
    let mut v = model.b;
    for _ in 0..horizon {
        let y = model.c * v;
        markov.push([y[0], y[1]]);
        v = closed * v;
    }
    Ok(lifted_from_markov(&markov))
}

/// Lifted map of an arbitrary closed loop `z⁺ = Φ z + Γ u`, `y = C z` with two
/// outputs, for loops whose state carries more than the plant (delay lines,
/// estimator memory).
pub fn build_lifted_general<T: Real>(
    phi: &DMatrix<T>,
    gamma: &DVector<T>,
    c: &DMatrix<T>,
    horizon: usize,
) -> Result<LiftedSystem<T>> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("ILC horizon must be at least one step".into()));
    }
    let n = phi.nrows();
    if phi.ncols() != n || gamma.len() != n || c.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: gamma.len(),
        });
    }
    if c.nrows() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: c.nrows(),
        });
    }
    let mut markov = Vec::with_capacity(horizon);
    let mut v = gamma.clone();
    for _ in 0..horizon {
        let y = c * &v;
        markov.push([y[0], y[1]]);
        v = phi * v;
    }
    Ok(lifted_from_markov(&markov))
}

fn lifted_from_markov<T: Real>(markov: &[[T; 2]]) -> LiftedSystem<T> {
    let horizon = markov.len();
    let mut p = DMatrix::zeros(2 * horizon, horizon);
    for j in 0..horizon {
        for i in j..horizon {
            let blk = &markov[i - j];
            p[(2 * i, j)] = blk[0];
            p[(2 * i + 1, j)] = blk[1];
        }
    }
    LiftedSystem { p, horizon }
}

/// Forward-difference operator: −1 on the diagonal, +1 above it.
pub fn derivative_operator<T: Real>(n: usize) -> DMatrix<T> {
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            -T::one()
        } else if j == i + 1 {
            T::one()
        } else {
            T::zero()
        }
    })
}

/// Precomputed update matrices `Q` (N×N) and `L` (N×2N).
#[derive(Debug, Clone, PartialEq)]
pub struct IlcGains<T = f64> {
    pub q: DMatrix<T>,
    pub l: DMatrix<T>,
    pub w_e: T,
    pub w_du: T,
}

pub fn ilc_gains<T: Real>(p: &DMatrix<T>, d: &DMatrix<T>, w_e: T, w_du: T) -> Result<IlcGains<T>> {
    if !(w_e >= T::zero() && w_du >= T::zero()) {
        return Err(Error::InvalidConfig("ILC weights must be non-negative".into()));
    }
    let n = p.ncols();
    if d.nrows() != n || d.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: d.nrows(),
        });
    }
    let ptp = p.transpose() * p;
    let base = &ptp * w_e + DMatrix::identity(n, n);
    let hessian = &base + d.transpose() * d * w_du;
    let chol = hessian.cholesky().ok_or(Error::Singular("ILC normal matrix"))?;
    let q = if w_du == T::zero() {
        DMatrix::identity(n, n)
    } else {
        chol.solve(&base)
    };
    let l = chol.solve(&(p.transpose() * w_e));
    Ok(IlcGains { q, l, w_e, w_du })
}

/// Correction and measured error of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct IlcIterate<T = f64> {
    pub u: DVector<T>,
    pub e: DVector<T>,
    pub n: usize,
}

/// `u_next = Q u + L e`.
pub fn ilc_update<T: Real>(it: &IlcIterate<T>, gains: &IlcGains<T>) -> Result<DVector<T>> {
    let n = gains.q.nrows();
    if it.u.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: it.u.len(),
        });
    }
    if it.e.len() != gains.l.ncols() {
        return Err(Error::DimensionMismatch {
            expected: gains.l.ncols(),
            got: it.e.len(),
        });
    }
    Ok(&gains.q * &it.u + &gains.l * &it.e)
}

/// Next-trial objective `w_e |e'|² + |u' − u|² + w_du |D u'|²`, with the
/// predicted error `e' = e − P (u' − u)`.
pub fn ilc_objective<T: Real>(
    u_next: &DVector<T>,
    it: &IlcIterate<T>,
    p: &DMatrix<T>,
    d: &DMatrix<T>,
    w_e: T,
    w_du: T,
) -> T {
    let du = u_next - &it.u;
    let e_pred = &it.e - p * &du;
    let du_int = d * u_next;
    e_pred.norm_squared() * w_e + du.norm_squared() + du_int.norm_squared() * w_du
}

/// Gradient of [`ilc_objective`] with respect to `u_next`.
pub fn ilc_objective_gradient<T: Real>(
    u_next: &DVector<T>,
    it: &IlcIterate<T>,
    p: &DMatrix<T>,
    d: &DMatrix<T>,
    w_e: T,
    w_du: T,
) -> DVector<T> {
    let two = T::lit(2.0);
    let du = u_next - &it.u;
    let e_pred = &it.e - p * &du;
    (p.transpose() * e_pred * (-two * w_e)) + du * two + d.transpose() * (d * u_next) * (two * w_du)
}

/// Learning state for one plane.
#[derive(Debug, Clone)]
pub struct IlcSession<T = f64> {
    pub lifted: LiftedSystem<T>,
    pub derivative: DMatrix<T>,
    pub gains: IlcGains<T>,
    pub correction: DVector<T>,
    pub iteration: usize,
    pub error_norms: Vec<T>,
}

impl<T: Real> IlcSession<T> {
    pub fn new(model: &LinearModel<T>, k: &RowVector4<T>, horizon: usize, w_e: T, w_du: T) -> Result<Self> {
        Self::from_lifted(build_lifted(model, k, horizon)?, w_e, w_du)
    }

    pub fn from_lifted(lifted: LiftedSystem<T>, w_e: T, w_du: T) -> Result<Self> {
        let horizon = lifted.horizon;
        let derivative = derivative_operator(horizon);
        let gains = ilc_gains(&lifted.p, &derivative, w_e, w_du)?;
        Ok(Self {
            lifted,
            derivative,
            gains,
            correction: DVector::zeros(horizon),
            iteration: 0,
            error_norms: Vec::new(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.lifted.horizon
    }

    /// Consumes the error of the trial just run and returns the next correction.
    pub fn advance(&mut self, error: DVector<T>) -> Result<&DVector<T>> {
        self.error_norms.push(error.norm());
        let it = IlcIterate {
            u: self.correction.clone(),
            e: error,
            n: self.iteration,
        };
        self.correction = ilc_update(&it, &self.gains)?;
        self.iteration += 1;
        Ok(&self.correction)
    }
}
