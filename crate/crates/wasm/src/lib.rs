//! Browser bindings for the demo page in `www/`.
//!
//! Every export returns a flat `Float64Array`; the layouts are documented
//! on the plain Rust functions, which are also what the host tests call.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use flowridge::asymptotics::{limiting_bayes_risk, mp_density, MpLaw};
use flowridge::estimators::{shrinkage_map, Estimator, Tuning};
use flowridge::experiments::{generate_design, Distribution, ExperimentConfig};
use flowridge::log_grid;
use flowridge::risk::{risk_curve, RiskKind};
use flowridge::spectral::decompose;
use wasm_bindgen::prelude::*;

fn check_grid(lo: f64, hi: f64, n: usize, what: &str) -> Result<Vec<f64>, String> {
    if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() || n == 0 || n > 2000 {
        return Err(format!(
            "{what} grid needs 0 < lo ≤ hi < ∞ and 1 ≤ points ≤ 2000"
        ));
    }
    Ok(log_grid(lo, hi, n))
}

/// Shrinkage of flow at time t and ridge at λ = 1/t on a log (t, s) grid.
///
/// Layout: `[s axis (s_n), t axis (t_n), flow (t_n × s_n, row per t), ridge (same)]`.
pub fn heatmap(
    s_lo: f64,
    s_hi: f64,
    s_n: usize,
    t_lo: f64,
    t_hi: f64,
    t_n: usize,
) -> Result<Vec<f64>, String> {
    let s = check_grid(s_lo, s_hi, s_n, "eigenvalue")?;
    let t = check_grid(t_lo, t_hi, t_n, "time")?;
    let mut out = Vec::with_capacity(s_n + t_n + 2 * s_n * t_n);
    out.extend(&s);
    out.extend(&t);
    for est in [Estimator::Flow, Estimator::Ridge] {
        for &ti in &t {
            let kappa = if est == Estimator::Flow { ti } else { 1.0 / ti };
            out.extend(s.iter().map(|&si| shrinkage_map(est, si, kappa)));
        }
    }
    Ok(out)
}

/// Bayes risk of flow at t and ridge at 1/t for a generated design.
///
/// Layout: `[t (k), flow (k), ridge (k), flow limit (k), ridge limit (k)]`.
/// The limits are NaN unless the design is isotropic (`rho == 0`).
#[allow(clippy::too_many_arguments)]
pub fn risk_curves(
    dist: &str,
    n: usize,
    p: usize,
    rho: f64,
    seed: u64,
    sigma2: f64,
    r2: f64,
    flavor: &str,
    grid_n: usize,
) -> Result<Vec<f64>, String> {
    let dist: Distribution = dist.parse().map_err(|e| format!("{e}"))?;
    if n.saturating_mul(p) > 250_000 {
        return Err("design too large for the demo (n·p ≤ 250000)".into());
    }
    let mut cfg = ExperimentConfig::new(dist, n, p, rho, seed);
    cfg.sigma2 = sigma2;
    cfg.r2 = r2;
    cfg.flavor = flavor.parse::<RiskKind>().map_err(|e| format!("{e}"))?;
    let t = check_grid(1.0 / 1024.0, 1024.0, grid_n, "time")?;
    let run = || -> flowridge::Result<Vec<f64>> {
        let sd = decompose(&generate_design(&cfg)?);
        let prior = cfg.prior()?;
        let risk_flavor = cfg.risk_flavor()?;
        let flow_grid: Vec<Tuning> = t.iter().map(|&x| Tuning::Time(x)).collect();
        let ridge_grid: Vec<Tuning> = t.iter().map(|&x| Tuning::Lambda(1.0 / x)).collect();
        let flow = risk_curve(&sd, &prior, Estimator::Flow, &flow_grid, &risk_flavor)?;
        let ridge = risk_curve(&sd, &prior, Estimator::Ridge, &ridge_grid, &risk_flavor)?;
        let mut out = t.clone();
        out.extend(flow.totals());
        out.extend(ridge.totals());
        if rho == 0.0 {
            let law = MpLaw::from_dims(n, p)?;
            for (est, grid) in [
                (Estimator::Flow, &flow_grid),
                (Estimator::Ridge, &ridge_grid),
            ] {
                for &tuning in grid {
                    out.push(
                        limiting_bayes_risk(&law, prior.alpha, sigma2, cfg.flavor, est, tuning)?
                            .total,
                    );
                }
            }
        } else {
            out.extend(std::iter::repeat_n(f64::NAN, 2 * t.len()));
        }
        Ok(out)
    };
    run().map_err(|e| e.to_string())
}

/// Marchenko-Pastur density on `points` equally spaced abscissae across
/// the support.
///
/// Layout: `[a, b, point mass at zero, s (points), density (points)]`.
pub fn mp_curve(gamma: f64, points: usize) -> Result<Vec<f64>, String> {
    if !(2..=10_000).contains(&points) {
        return Err("points must be between 2 and 10000".into());
    }
    let law = MpLaw::new(gamma).map_err(|e| e.to_string())?;
    let s: Vec<f64> = (0..points)
        .map(|i| law.a + (law.b - law.a) * i as f64 / (points - 1) as f64)
        .collect();
    let mut out = vec![law.a, law.b, law.point_mass_zero];
    out.extend(&s);
    out.extend(s.iter().map(|&x| mp_density(&law, x)));
    Ok(out)
}

#[wasm_bindgen(js_name = shrinkageHeatmap)]
pub fn shrinkage_heatmap_js(
    s_lo: f64,
    s_hi: f64,
    s_n: usize,
    t_lo: f64,
    t_hi: f64,
    t_n: usize,
) -> Result<Vec<f64>, JsError> {
    heatmap(s_lo, s_hi, s_n, t_lo, t_hi, t_n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = riskCurves)]
#[allow(clippy::too_many_arguments)]
pub fn risk_curves_js(
    dist: &str,
    n: usize,
    p: usize,
    rho: f64,
    seed: u32,
    sigma2: f64,
    r2: f64,
    flavor: &str,
    grid_n: usize,
) -> Result<Vec<f64>, JsError> {
    risk_curves(dist, n, p, rho, seed as u64, sigma2, r2, flavor, grid_n)
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = mpDensity)]
pub fn mp_density_js(gamma: f64, points: usize) -> Result<Vec<f64>, JsError> {
    mp_curve(gamma, points).map_err(|e| JsError::new(&e))
}
