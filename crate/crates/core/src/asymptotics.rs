//! Limits for isotropic features as `n, p → ∞` with `p/n → γ`.
//!
//! The empirical spectrum of `XᵀX/n` converges to the Marchenko-Pastur law
//! `F_γ`, so every finite-sample functional `(1/p)Σᵢ h(sᵢ)` becomes `∫h dF_γ`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::error::{input, Error, Result};
use crate::estimators::{Estimator, Tuning};
use crate::quadrature::{adaptive_simpson, CompositeRule};
use crate::risk::{bias_factor, variance_factor, RiskKind, RiskPoint};

/// Absolute tolerance of the inner adaptive Simpson integral.
pub const SIMPSON_TOL: f64 = 1e-8;

/// The Marchenko-Pastur law with aspect ratio `γ`, with its quadrature
/// nodes on the continuous part precomputed.
#[derive(Debug, Clone, Serialize)]
pub struct MpLaw {
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub point_mass_zero: f64,
    #[serde(skip)]
    nodes: Vec<(f64, f64)>,
}

impl MpLaw {
    /// The law on the standard 2048-node rule.
    pub fn new(gamma: f64) -> Result<Self> {
        Self::with_rule(gamma, &CompositeRule::standard())
    }

    pub fn with_rule(gamma: f64, rule: &CompositeRule) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return input(format!(
                "aspect ratio γ must be positive and finite, got {gamma}"
            ));
        }
        let r = gamma.sqrt();
        let a = (1.0 - r) * (1.0 - r);
        let b = (1.0 + r) * (1.0 + r);
        let width = b - a;
        // s = a + (b−a)sin²θ turns density·ds into a smooth function of θ.
        let mut nodes = Vec::with_capacity(rule.total_nodes());
        rule.for_each_node(0.0, FRAC_PI_2, |theta, w| {
            let (sin, cos) = theta.sin_cos();
            let s = a + width * sin * sin;
            let mass = width * width * sin * sin * cos * cos / (PI * gamma * s);
            nodes.push((s, w * mass));
        });
        Ok(Self {
            gamma,
            a,
            b,
            point_mass_zero: (1.0 - 1.0 / gamma).max(0.0),
            nodes,
        })
    }

    /// `γ = p/n`.
    pub fn from_dims(n: usize, p: usize) -> Result<Self> {
        if n == 0 || p == 0 {
            return input("dimensions must be positive");
        }
        Self::new(p as f64 / n as f64)
    }

    pub fn quadrature_nodes(&self) -> usize {
        self.nodes.len()
    }
}

/// Density of the continuous part; zero outside `(a, b)`.
pub fn mp_density(law: &MpLaw, s: f64) -> f64 {
    if s <= law.a || s >= law.b || s <= 0.0 {
        return 0.0;
    }
    ((law.b - s) * (s - law.a)).sqrt() / (2.0 * PI * law.gamma * s)
}

/// `∫h dF_γ`, the point mass at zero contributing `h(0)`.
pub fn mp_integrate(law: &MpLaw, h: impl Fn(f64) -> f64) -> Result<f64> {
    let mut total = 0.0;
    if law.point_mass_zero > 0.0 {
        let h0 = h(0.0);
        if !h0.is_finite() {
            return Err(Error::Numeric(format!(
                "integrand is {h0} at the point mass s = 0"
            )));
        }
        total += law.point_mass_zero * h0;
    }
    for &(s, w) in &law.nodes {
        let v = h(s);
        if !v.is_finite() {
            return Err(Error::Numeric(format!("integrand is {v} at s = {s}")));
        }
        total += w * v;
    }
    Ok(total)
}

/// Limiting Bayes risk for `Σ = I`, with `α₀ = lim r²n/(σ²p)`.
///
/// Estimation and out-of-sample risk coincide here; in-sample risk weights
/// each direction by its eigenvalue.
pub fn limiting_bayes_risk(
    law: &MpLaw,
    alpha0: f64,
    sigma2: f64,
    kind: RiskKind,
    estimator: Estimator,
    tuning: Tuning,
) -> Result<RiskPoint> {
    check_model(alpha0, sigma2)?;
    let kappa = tuning.for_estimator(estimator)?;
    let weight = |s: f64| if kind == RiskKind::InSample { s } else { 1.0 };
    let scale = sigma2 * law.gamma;
    let bias =
        scale * alpha0 * mp_integrate(law, |s| weight(s) * bias_factor(estimator, kappa, s))?;
    let variance = scale * mp_integrate(law, |s| weight(s) * variance_factor(estimator, kappa, s))?;
    Ok(RiskPoint {
        tuning,
        bias_sq: bias,
        variance,
        total: bias + variance,
    })
}

fn check_model(alpha0: f64, sigma2: f64) -> Result<()> {
    if !(alpha0 > 0.0) || !alpha0.is_finite() {
        return input(format!("α₀ must be positive, got {alpha0}"));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return input(format!("σ² must be positive, got {sigma2}"));
    }
    Ok(())
}

/// `m(−z) = ∫1/(u + z) dF_γ(u)` for real `z > 0`.
pub fn stieltjes_mp(law: &MpLaw, z: f64) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Input(format!(
            "Stieltjes transform needs z > 0, got {z}"
        )));
    }
    mp_integrate(law, |u| 1.0 / (u + z))
}

/// `L(t) = ∫e^{−ts} dF_γ(s)`, point mass included.
pub fn laplace_mp(law: &MpLaw, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return input(format!("time must be nonnegative, got {t}"));
    }
    mp_integrate(law, |s| (-t * s).exp())
}

/// Limiting out-of-sample Bayes risk of flow written through the Laplace
/// transform: `σ²γ[α₀L(2t) + 2∫₀ᵗ(L(u) − L(2u))du]`.
pub fn limiting_prediction_risk_flow(law: &MpLaw, alpha0: f64, sigma2: f64, t: f64) -> Result<f64> {
    check_model(alpha0, sigma2)?;
    if !(t >= 0.0) || !t.is_finite() {
        return input(format!("time must be finite and nonnegative, got {t}"));
    }
    let mut failure = None;
    let mut inner = |u: f64| match (laplace_mp(law, u), laplace_mp(law, 2.0 * u)) {
        (Ok(x), Ok(y)) => x - y,
        (Err(e), _) | (_, Err(e)) => {
            failure.get_or_insert(e);
            0.0
        }
    };
    let integral = adaptive_simpson(&mut inner, 0.0, t, SIMPSON_TOL);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(sigma2 * law.gamma * (alpha0 * laplace_mp(law, 2.0 * t)? + 2.0 * integral))
}

/// Limit of `E‖β̂‖²`: `σ²γ∫g(s)²(α₀ + 1/s) dF_γ` with `g` the shrinkage map.
pub fn limiting_l2_norm_sq(
    law: &MpLaw,
    alpha0: f64,
    sigma2: f64,
    estimator: Estimator,
    tuning: Tuning,
) -> Result<f64> {
    check_model(alpha0, sigma2)?;
    let kappa = tuning.for_estimator(estimator)?;
    let value = mp_integrate(law, |s| {
        if s == 0.0 {
            return 0.0;
        }
        // g²/s written as bias/variance factors stays finite as s → 0.
        let var = variance_factor(estimator, kappa, s);
        var * (alpha0 * s + 1.0)
    })?;
    Ok(sigma2 * law.gamma * value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(gamma: f64) -> MpLaw {
        MpLaw::new(gamma).unwrap()
    }

    /// Positive root of `γx m² + (1 − γ + x)m − 1 = 0`.
    fn stieltjes_oracle(gamma: f64, x: f64) -> f64 {
        let b = 1.0 - gamma + x;
        (-b + (b * b + 4.0 * gamma * x).sqrt()) / (2.0 * gamma * x)
    }

    #[test]
    fn law_shape() {
        let l = law(1.0);
        assert_eq!((l.a, l.b, l.point_mass_zero), (0.0, 4.0, 0.0));
        assert!((mp_density(&l, 1.0) - 3f64.sqrt() / (2.0 * PI)).abs() < 1e-15);
        assert!((mp_density(&l, 1.0) - 0.27566).abs() < 1e-5);
        assert_eq!(mp_density(&l, 4.5), 0.0);
        assert_eq!(mp_density(&l, -1.0), 0.0);
        let q = law(0.25);
        assert_eq!((q.a, q.b, q.point_mass_zero), (0.25, 2.25, 0.0));
        assert_eq!(law(2.0).point_mass_zero, 0.5);
        assert_eq!(law(1.0).quadrature_nodes(), 2048);
        assert!(MpLaw::new(0.0).is_err());
    }

    #[test]
    fn moments() {
        for gamma in [0.1, 0.25, 0.5, 1.0, 2.0, 5.0] {
            let l = law(gamma);
            assert!(
                (mp_integrate(&l, |_| 1.0).unwrap() - 1.0).abs() < 1e-8,
                "γ = {gamma}"
            );
            assert!((mp_integrate(&l, |s| s).unwrap() - 1.0).abs() < 1e-8);
            assert!((mp_integrate(&l, |s| s * s).unwrap() - (1.0 + gamma)).abs() < 1e-8);
        }
        assert!((mp_integrate(&law(1.0), |s| s * s).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn inverse_moment_below_unit_ratio() {
        for gamma in [0.1, 0.3, 0.5] {
            let v = mp_integrate(&law(gamma), |s| 1.0 / s).unwrap();
            assert!((v - 1.0 / (1.0 - gamma)).abs() < 1e-8);
        }
    }

    #[test]
    fn refinement_agrees() {
        let fine = CompositeRule::new(128, 32);
        for gamma in [0.2, 1.0, 2.0] {
            let coarse = law(gamma);
            let refined = MpLaw::with_rule(gamma, &fine).unwrap();
            for h in [
                |s: f64| (-1.3 * s).exp(),
                |s: f64| 1.0 / (s + 0.01),
                |s: f64| (1.0 - (-s * 50.0).exp()).powi(2) * s,
            ] {
                let c = mp_integrate(&coarse, h).unwrap();
                let f = mp_integrate(&refined, h).unwrap();
                assert!((c - f).abs() <= 1e-8 * f.abs(), "γ = {gamma}: {c} vs {f}");
            }
        }
    }

    #[test]
    fn non_finite_integrand_is_an_error() {
        assert!(matches!(
            mp_integrate(&law(2.0), |s| 1.0 / s),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn stieltjes_matches_quadratic_oracle() {
        for gamma in [0.3, 1.0, 2.0] {
            for z in [0.05, 0.5, 1.0, 4.0] {
                let m = stieltjes_mp(&law(gamma), z).unwrap();
                assert!(
                    (m - stieltjes_oracle(gamma, z)).abs() < 1e-8,
                    "γ={gamma} z={z}"
                );
            }
        }
        let l = law(1.5);
        assert!((1e8 * stieltjes_mp(&l, 1e8).unwrap() - 1.0).abs() < 1e-7);
        assert!(stieltjes_mp(&l, 0.0).is_err());
        let vals: Vec<f64> = crate::log_grid(1e-2, 1e2, 50)
            .iter()
            .map(|&z| stieltjes_mp(&l, z).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
    }

    #[test]
    fn laplace_basics_and_decomposition() {
        let l = law(2.0);
        assert!((laplace_mp(&l, 0.0).unwrap() - 1.0).abs() < 1e-8);
        let vals: Vec<f64> = (0..40)
            .map(|i| laplace_mp(&l, i as f64 * 0.25).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
        assert!(*vals.last().unwrap() > l.point_mass_zero);
        let (alpha0, sigma2) = (0.5, 1.0);
        let r = limiting_bayes_risk(
            &l,
            alpha0,
            sigma2,
            RiskKind::Estimation,
            Estimator::Flow,
            Tuning::Time(0.5),
        )
        .unwrap();
        let lt = laplace_mp(&l, 1.0).unwrap();
        assert!((lt - r.bias_sq / (sigma2 * l.gamma * alpha0)).abs() < 1e-12);
    }

    #[test]
    fn iterated_laplace_identity() {
        for gamma in [0.5, 2.0] {
            let l = law(gamma);
            for lambda in [0.5f64, 1.0, 3.0] {
                // L(t) ≤ 1, so the tail past T is at most e^{−λT}/λ < 1e-10.
                let horizon = (1e10 / lambda).ln() / lambda;
                let mut f = |t: f64| (-lambda * t).exp() * laplace_mp(&l, t).unwrap();
                let lhs = adaptive_simpson(&mut f, 0.0, horizon, 1e-10);
                let rhs = stieltjes_mp(&l, lambda).unwrap();
                assert!(
                    (lhs - rhs).abs() < 1e-6,
                    "γ={gamma} λ={lambda}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn endpoint_limits() {
        let l = law(2.0);
        let (alpha0, sigma2) = (0.5, 1.3);
        let null = sigma2 * l.gamma * alpha0;
        let f0 = limiting_bayes_risk(
            &l,
            alpha0,
            sigma2,
            RiskKind::Estimation,
            Estimator::Flow,
            Tuning::Time(0.0),
        )
        .unwrap();
        assert!((f0.total - null).abs() < 1e-8);
        let rinf = limiting_bayes_risk(
            &l,
            alpha0,
            sigma2,
            RiskKind::Estimation,
            Estimator::Ridge,
            Tuning::Lambda(f64::INFINITY),
        )
        .unwrap();
        assert!((rinf.total - null).abs() < 1e-8);
        assert!(
            (limiting_prediction_risk_flow(&l, alpha0, sigma2, 0.0).unwrap() - null).abs() < 1e-8
        );
        assert_eq!(
            limiting_l2_norm_sq(&l, alpha0, sigma2, Estimator::Flow, Tuning::Time(0.0)).unwrap(),
            0.0
        );
        assert_eq!(
            limiting_l2_norm_sq(
                &l,
                alpha0,
                sigma2,
                Estimator::Ridge,
                Tuning::Lambda(f64::INFINITY)
            )
            .unwrap(),
            0.0
        );
        let q = law(0.4);
        let lim = limiting_l2_norm_sq(
            &q,
            alpha0,
            sigma2,
            Estimator::Flow,
            Tuning::Time(f64::INFINITY),
        )
        .unwrap();
        assert!((lim - sigma2 * 0.4 * (alpha0 + 1.0 / 0.6)).abs() < 1e-8);
    }

    #[test]
    fn laplace_form_matches_direct_flow_risk() {
        let l = law(2.0);
        for t in crate::log_grid(1e-2, 50.0, 50) {
            let direct = limiting_bayes_risk(
                &l,
                0.5,
                1.0,
                RiskKind::OutOfSample,
                Estimator::Flow,
                Tuning::Time(t),
            )
            .unwrap();
            let via = limiting_prediction_risk_flow(&l, 0.5, 1.0, t).unwrap();
            assert!((direct.total - via).abs() < 1e-6, "t = {t}");
        }
    }

    #[test]
    fn ridge_rewrite_via_stieltjes() {
        for (gamma, alpha0) in [(2.0, 0.5), (0.5, 1.5)] {
            let l = law(gamma);
            for lambda in [0.1, 0.7, 2.0, 10.0] {
                let direct = limiting_bayes_risk(
                    &l,
                    alpha0,
                    1.0,
                    RiskKind::Estimation,
                    Estimator::Ridge,
                    Tuning::Lambda(lambda),
                )
                .unwrap()
                .total;
                let h = 1e-5 * lambda;
                // m′(−λ) = −d/dλ m(−λ).
                let dm = -(stieltjes_mp(&l, lambda + h).unwrap()
                    - stieltjes_mp(&l, lambda - h).unwrap())
                    / (2.0 * h);
                let m = stieltjes_mp(&l, lambda).unwrap();
                let rewrite = gamma * (m - lambda * (1.0 - alpha0 * lambda) * dm);
                assert!(
                    (direct - rewrite).abs() <= 1e-5 * direct,
                    "γ={gamma} λ={lambda}"
                );
            }
        }
    }

    #[test]
    fn curves_are_continuous_on_grid() {
        let l = law(2.0);
        let grid = crate::default_grid();
        for est in [Estimator::Flow, Estimator::Ridge] {
            let risks: Vec<f64> = grid
                .iter()
                .map(|&k| {
                    limiting_bayes_risk(&l, 0.5, 1.0, RiskKind::Estimation, est, est.tuning(k))
                        .unwrap()
                        .total
                })
                .collect();
            let norms: Vec<f64> = grid
                .iter()
                .map(|&k| limiting_l2_norm_sq(&l, 0.5, 1.0, est, est.tuning(k)).unwrap())
                .collect();
            assert!(risks
                .windows(2)
                .all(|w| (w[1] - w[0]).abs() < 0.1 * w[0].max(w[1])));
            // The norm grows like κ² near zero, so compare log-increments to the log spacing.
            let step = (grid[1] / grid[0]).ln();
            assert!(norms
                .windows(2)
                .all(|w| (w[1] / w[0]).ln().abs() <= 2.0 * step + 1e-9));
        }
    }

    #[test]
    fn in_sample_limit_weights_by_eigenvalue() {
        let l = law(0.5);
        let r = limiting_bayes_risk(
            &l,
            1.0,
            1.0,
            RiskKind::InSample,
            Estimator::Ridge,
            Tuning::Lambda(1.0),
        )
        .unwrap();
        let direct = 0.5 * mp_integrate(&l, |s| s * (1.0 + s) / (s + 1.0).powi(2)).unwrap();
        assert!((r.total - direct).abs() < 1e-14);
    }
}
