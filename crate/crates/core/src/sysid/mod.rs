//! Frequency-domain identification of the actuator with random-phase multisines.
//!
//! The pipeline is: design `r` multisine realizations, record `p_total`
//! periods of each, drop the transient periods, average the spectra per
//! realization, form the best linear approximation with its sample
//! deviation, turn that deviation into fit weights, and fit a delayed
//! second-order model whose coefficients map back to damping and dipole
//! moment.

mod fit;
mod frf;
mod multisine;

pub use fit::{fit_sos_delay, physical_params_from_fit, FitOptions, PhysicalEstimate, SosDelayFit};
pub use frf::{average_periods, estimate_bla, weights_from_sigma, FrfEstimate};
pub use multisine::{design_multisine, MultisineConfig};
