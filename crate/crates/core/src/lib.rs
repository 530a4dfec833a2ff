//! Exact finite-sample and limiting risk of gradient flow (continuous-time
//! early stopping) and ridge regression for least squares.
//!
//! Everything downstream of the design matrix runs through
//! [`spectral::SpectralData`], the eigendecomposition of `XᵀX/n`. The two
//! estimators are spectral shrinkers of the data, so their risks, expected
//! norms and implicit regularizers are sums over eigenvalues.
//!
//! - [`spectral`]: decomposition and matrix functions of `XᵀX/n`.
//! - [`estimators`]: ridge, gradient flow and gradient descent paths.
//! - [`risk`]: closed-form estimation / in-sample / out-of-sample risks.
//! - [`bounds`]: numeric certificates for the flow-vs-ridge risk inequalities.
//! - [`asymptotics`]: Marchenko-Pastur limits for isotropic features.
//! - [`experiments`]: synthetic designs, Monte Carlo oracle, ratio summaries.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod bounds;
mod error;
pub mod estimators;
pub mod experiments;
pub mod optimize;
pub mod quadrature;
pub mod risk;
pub mod spectral;

#[cfg(feature = "cli")]
pub mod cli;
pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `n` points equally spaced on the log scale from `lo` to `hi`, inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// The default tuning grid: 200 log-spaced values from 2⁻¹⁰ to 2¹⁰.
pub fn default_grid() -> Vec<f64> {
    log_grid(2f64.powi(-10), 2f64.powi(10), 200)
}
