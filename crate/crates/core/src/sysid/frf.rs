use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Nonparametric frequency response over the excited bins.
#[derive(Debug, Clone, PartialEq)]
pub struct FrfEstimate<T = f64> {
    /// Excited frequencies (Hz).
    pub freqs: Vec<T>,
    /// Best linear approximation per bin.
    pub g_bla: Vec<Complex<T>>,
    /// Sample standard deviation of the mean estimate per bin.
    pub sigma_nl: Vec<T>,
    /// Fit weights in (0, 1].
    pub weights: Vec<T>,
}

pub(crate) fn cabs<T: Real>(c: &Complex<T>) -> T {
    c.norm_sqr().sqrt()
}

impl<T: Real> FrfEstimate<T> {
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Replaces the weights with the ones derived from `sigma_nl`.
    pub fn with_sigma_weights(mut self) -> Self {
        self.weights = weights_from_sigma(&self.sigma_nl, &self.g_bla);
        self
    }

    pub fn with_weights(mut self, weights: Vec<T>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: weights.len(),
            });
        }
        self.weights = weights;
        Ok(self)
    }

    /// CSV with header `f_hz,re_g,im_g,sigma_nl,weight`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("f_hz,re_g,im_g,sigma_nl,weight\n");
        for i in 0..self.len() {
            let w = self.weights.get(i).copied().unwrap_or_else(T::one);
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.freqs[i].as_f64(),
                self.g_bla[i].re.as_f64(),
                self.g_bla[i].im.as_f64(),
                self.sigma_nl[i].as_f64(),
                w.as_f64()
            ));
        }
        out
    }
}

/// Bin-wise mean of the DFTs of equal-length periods.
pub fn average_periods<T: Real, P: AsRef<[T]>>(records: &[P]) -> Result<Vec<Complex<T>>> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidConfig("no periods to average".into()))?;
    let n = first.as_ref().len();
    if n == 0 {
        return Err(Error::InvalidConfig("empty period".into()));
    }
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut acc = vec![Complex::new(T::zero(), T::zero()); n];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    for rec in records {
        let rec = rec.as_ref();
        if rec.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rec.len(),
            });
        }
        for (b, &x) in buf.iter_mut().zip(rec) {
            *b = Complex::new(x, T::zero());
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += *b;
        }
    }
    let p = T::from_count(records.len());
    Ok(acc.into_iter().map(|c| c / p).collect())
}

/// Per-realization ETFE, its mean and the sample deviation of the mean.
///
/// `u_spectra[l][k]` and `y_spectra[l][k]` hold the averaged spectra of
/// realization `l` at excited bin `k` with frequency `freqs[k]`. Bins where
/// any realization has no input energy are dropped.
pub fn estimate_bla<T: Real>(
    freqs: &[T],
    u_spectra: &[Vec<Complex<T>>],
    y_spectra: &[Vec<Complex<T>>],
) -> Result<FrfEstimate<T>> {
    let r = u_spectra.len();
    if r < 2 {
        return Err(Error::InvalidConfig(format!("need at least two realizations, got {r}")));
    }
    if y_spectra.len() != r {
        return Err(Error::DimensionMismatch {
            expected: r,
            got: y_spectra.len(),
        });
    }
    let bins = freqs.len();
    for spec in u_spectra.iter().chain(y_spectra) {
        if spec.len() != bins {
            return Err(Error::DimensionMismatch {
                expected: bins,
                got: spec.len(),
            });
        }
    }

    let u_peak = u_spectra
        .iter()
        .flatten()
        .map(cabs)
        .fold(T::zero(), |a, b| if b > a { b } else { a });
    let floor = u_peak * T::eps() * T::lit(16.0);

    let rt = T::from_count(r);
    let mut est = FrfEstimate {
        freqs: Vec::with_capacity(bins),
        g_bla: Vec::with_capacity(bins),
        sigma_nl: Vec::with_capacity(bins),
        weights: Vec::with_capacity(bins),
    };
    for k in 0..bins {
        if u_spectra.iter().any(|u| !(cabs(&u[k]) > floor)) {
            log::warn!("dropping bin at {} Hz: zero input energy", freqs[k]);
            continue;
        }
        let etfe: Vec<Complex<T>> = (0..r).map(|l| y_spectra[l][k] / u_spectra[l][k]).collect();
        let mean = etfe.iter().fold(Complex::new(T::zero(), T::zero()), |a, g| a + g) / rt;
        let ss = etfe.iter().fold(T::zero(), |a, g| a + (g - mean).norm_sqr());
        est.freqs.push(freqs[k]);
        est.g_bla.push(mean);
        est.sigma_nl.push((ss / (rt * (rt - T::one()))).sqrt());
        est.weights.push(T::one());
    }
    Ok(est)
}

/// `W_k = 1 / (1 + (σ_k / |G_k|) / ρ)` with `ρ` the median relative deviation.
///
/// When more than half the bins are exactly certain, `ρ` is the median over the
/// bins with non-zero deviation, so uncertain bins still get a finite weight.
pub fn weights_from_sigma<T: Real>(sigma_nl: &[T], g_bla: &[Complex<T>]) -> Vec<T> {
    let rel: Vec<T> = sigma_nl
        .iter()
        .zip(g_bla)
        .map(|(s, g)| {
            let mag = cabs(g);
            if *s == T::zero() {
                T::zero()
            } else if mag > T::zero() {
                *s / mag
            } else {
                T::max_value().unwrap_or(*s)
            }
        })
        .collect();

    let mut rho = median(&rel);
    if rho == T::zero() {
        let positive: Vec<T> = rel.iter().copied().filter(|&x| x > T::zero()).collect();
        if positive.is_empty() {
            return vec![T::one(); rel.len()];
        }
        rho = median(&positive);
    }
    rel.iter().map(|&x| T::one() / (T::one() + x / rho)).collect()
}

fn median<T: Real>(values: &[T]) -> T {
    if values.is_empty() {
        return T::zero();
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) * T::lit(0.5)
    }
}
