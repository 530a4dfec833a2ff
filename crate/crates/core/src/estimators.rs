//! Ridge, gradient flow and gradient descent estimators, their spectral
//! shrinkage maps, and the quadratic regularizers that reproduce the
//! descent/flow iterates as penalized least squares solutions.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::spectral::{check_time, exp_neg, DesignMatrix, SpectralData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Flow,
    Ridge,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Flow => "flow",
            Estimator::Ridge => "ridge",
        }
    }

    pub fn tuning(self, value: f64) -> Tuning {
        match self {
            Estimator::Flow => Tuning::Time(value),
            Estimator::Ridge => Tuning::Lambda(value),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flow" | "gf" | "gradient-flow" => Ok(Estimator::Flow),
            "ridge" => Ok(Estimator::Ridge),
            other => input(format!(
                "unknown estimator {other:?} (expected flow or ridge)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuningKind {
    RidgeLambda,
    FlowTime,
    DescentStepCount,
}

/// A tuning parameter value. `Time(∞)` is the min-norm least squares limit;
/// `Lambda(∞)` is the zero estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Tuning {
    Lambda(f64),
    Time(f64),
    Steps(u64),
}

impl Tuning {
    pub fn kind(&self) -> TuningKind {
        match self {
            Tuning::Lambda(_) => TuningKind::RidgeLambda,
            Tuning::Time(_) => TuningKind::FlowTime,
            Tuning::Steps(_) => TuningKind::DescentStepCount,
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Tuning::Lambda(v) | Tuning::Time(v) => v,
            Tuning::Steps(k) => k as f64,
        }
    }

    /// Checks the tuning kind against the estimator and returns the value.
    pub fn for_estimator(&self, estimator: Estimator) -> Result<f64> {
        let v = match (estimator, *self) {
            (Estimator::Flow, Tuning::Time(t)) => t,
            (Estimator::Ridge, Tuning::Lambda(l)) => l,
            (e, t) => {
                return input(format!(
                    "{e} estimator cannot take a {:?} tuning value",
                    t.kind()
                ))
            }
        };
        if v.is_nan() || v < 0.0 {
            return input(format!("tuning value must be ≥ 0, got {v}"));
        }
        Ok(v)
    }
}

/// `g(s, κ)`: `s/(s+λ)` for ridge, `1 − exp(−ts)` for flow.
pub fn shrinkage_map(kind: Estimator, s: f64, kappa: f64) -> f64 {
    match kind {
        Estimator::Ridge => ridge_gain(s, kappa),
        Estimator::Flow => flow_gain(kappa, s),
    }
}

pub(crate) fn ridge_gain(s: f64, lambda: f64) -> f64 {
    if s == 0.0 || lambda.is_infinite() {
        0.0
    } else {
        s / (s + lambda)
    }
}

pub(crate) fn flow_gain(t: f64, s: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        -(-t * s).exp_m1()
    }
}

fn check_lambda(sd: &SpectralData, lambda: f64) -> Result<()> {
    if lambda.is_nan() || lambda < 0.0 {
        return input(format!("ridge λ must be ≥ 0, got {lambda}"));
    }
    if lambda == 0.0 && sd.is_rank_deficient() {
        return Err(Error::Singular(format!(
            "ridge with λ = 0 needs full rank, design has rank {} < p = {}",
            sd.rank(),
            sd.p()
        )));
    }
    Ok(())
}

/// `(XᵀX + nλI)⁻¹Xᵀy`.
pub fn ridge_solution(sd: &SpectralData, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    check_lambda(sd, lambda)?;
    let sqrt_n = (sd.n() as f64).sqrt();
    let h: Vec<f64> = sd
        .positive_eigenvalues()
        .iter()
        .map(|&s| {
            if lambda.is_infinite() {
                0.0
            } else {
                s.sqrt() / (sqrt_n * (s + lambda))
            }
        })
        .collect();
    sd.spectral_estimate(&h, y)
}

/// `(XᵀX)⁺(I − exp(−tXᵀX/n))Xᵀy`; `t = ∞` returns the min-norm least
/// squares solution.
pub fn gradient_flow_solution(sd: &SpectralData, y: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    check_time(t)?;
    let sqrt_n = (sd.n() as f64).sqrt();
    let h: Vec<f64> = sd
        .positive_eigenvalues()
        .iter()
        .map(|&s| flow_gain(t, s) / (sqrt_n * s.sqrt()))
        .collect();
    sd.spectral_estimate(&h, y)
}

/// Gradient descent iterates on `(1/2n)‖y − Xβ‖²` from `β⁽⁰⁾ = 0`.
#[derive(Debug, Clone)]
pub struct DescentPath {
    pub step_size: f64,
    pub iterates: Vec<DVector<f64>>,
}

impl DescentPath {
    pub fn last(&self) -> &DVector<f64> {
        self.iterates.last().expect("path always holds β⁽⁰⁾")
    }
}

/// Runs `K` explicit steps `β ← β + (ε/n)Xᵀ(y − Xβ)`. Step sizes past
/// `2/s_max` diverge; that is allowed and observable.
pub fn gradient_descent_path(
    x: &DesignMatrix,
    y: &DVector<f64>,
    step_size: f64,
    steps: usize,
) -> Result<DescentPath> {
    if !(step_size > 0.0) || !step_size.is_finite() {
        return input(format!("step size must be positive, got {step_size}"));
    }
    if steps == 0 {
        return input("need at least one descent step");
    }
    let xm = x.matrix();
    if y.len() != x.n() {
        return input(format!(
            "response has length {}, expected n = {}",
            y.len(),
            x.n()
        ));
    }
    let scale = step_size / x.n() as f64;
    let mut iterates = Vec::with_capacity(steps + 1);
    let mut beta = DVector::zeros(x.p());
    iterates.push(beta.clone());
    for _ in 0..steps {
        let resid = y - xm * &beta;
        beta += xm.tr_mul(&resid) * scale;
        iterates.push(beta.clone());
    }
    Ok(DescentPath {
        step_size,
        iterates,
    })
}

/// Uniform bound `(ε‖Xᵀy‖/(2n))·(exp(Kεs_max) − 1)` on the distance between
/// the first `K` descent iterates and the flow at times `kε`.
pub fn discretization_bound(
    sd: &SpectralData,
    y: &DVector<f64>,
    step_size: f64,
    steps: usize,
) -> Result<f64> {
    if !(step_size > 0.0) {
        return input(format!("step size must be positive, got {step_size}"));
    }
    if step_size * sd.s_max() >= 1.0 {
        return Err(Error::Precondition(format!(
            "step size {step_size} must be below 1/s_max = {}",
            1.0 / sd.s_max()
        )));
    }
    let xty = sd.xty_norm(y)?;
    Ok(step_size * xty / (2.0 * sd.n() as f64) * (steps as f64 * step_size * sd.s_max()).exp_m1())
}

/// The iterate whose penalized least squares problem is being reproduced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    /// `Q_t = V S (exp(tS) − I)⁻¹ Vᵀ`.
    Flow { time: f64 },
    /// `Q_k = V S ((I − εS)⁻ᵏ − I)⁻¹ Vᵀ`.
    Descent { steps: u64, step_size: f64 },
}

/// Per-eigenvalue entries of the implicit regularizer; zero eigenvalues map
/// to zero.
pub fn implicit_regularizer_values(sd: &SpectralData, reg: Regularizer) -> Result<Vec<f64>> {
    match reg {
        Regularizer::Flow { time } => {
            check_time(time)?;
            if time == 0.0 {
                return input("flow time 0 has an unbounded regularizer");
            }
            Ok(sd
                .positive_eigenvalues()
                .iter()
                .map(|&s| {
                    let x = time * s;
                    // (e^x − 1)⁻¹, written to avoid overflow and cancellation.
                    let inv = if x > 1.0 {
                        (-x).exp() / -(-x).exp_m1()
                    } else {
                        1.0 / x.exp_m1()
                    };
                    s * inv
                })
                .collect())
        }
        Regularizer::Descent { steps, step_size } => {
            if steps == 0 {
                return input("descent step count 0 has an unbounded regularizer");
            }
            if !(step_size > 0.0) || step_size * sd.s_max() >= 1.0 {
                return Err(Error::Precondition(format!(
                    "step size {step_size} must lie in (0, 1/s_max = {})",
                    1.0 / sd.s_max()
                )));
            }
            Ok(sd
                .positive_eigenvalues()
                .iter()
                .map(|&s| {
                    // (1 − εs)^(−k) − 1 = expm1(−k·ln(1 − εs))
                    let growth = (-(steps as f64) * (-step_size * s).ln_1p()).exp_m1();
                    s / growth
                })
                .collect())
        }
    }
}

/// The implicit regularizer as a `p × p` PSD matrix.
pub fn implicit_regularizer(sd: &SpectralData, reg: Regularizer) -> Result<DMatrix<f64>> {
    let values = implicit_regularizer_values(sd, reg)?;
    Ok(sd.spectral_matrix(&values, 0.0))
}

/// Fitted values `Σᵢ g(sᵢ, κ) uᵢuᵢᵀ y` of a spectral shrinker.
pub fn fitted_values(
    sd: &SpectralData,
    y: &DVector<f64>,
    kind: Estimator,
    kappa: f64,
) -> Result<DVector<f64>> {
    let uy = sd.left_project(y)?;
    let coeffs = DVector::from_iterator(
        sd.rank(),
        uy.iter()
            .zip(sd.positive_eigenvalues())
            .map(|(u, &s)| u * shrinkage_map(kind, s, kappa)),
    );
    Ok(sd.left_vectors() * coeffs)
}

pub(crate) fn flow_bias_factor(t: f64, s: f64) -> f64 {
    let e = exp_neg(t, s);
    e * e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::decompose;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn instance(n: usize, p: usize, seed: u64) -> (DesignMatrix, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * p)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let y = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
        (DesignMatrix::from_row_slice(n, p, &data).unwrap(), y)
    }

    /// Classical RK4 on the gradient flow ODE using X directly.
    fn rk4_flow(x: &DesignMatrix, y: &DVector<f64>, t_end: f64, h: f64) -> DVector<f64> {
        let xm = x.matrix();
        let n = x.n() as f64;
        let rhs = |b: &DVector<f64>| xm.tr_mul(&(y - xm * b)) / n;
        let steps = (t_end / h).round() as usize;
        let mut b = DVector::zeros(x.p());
        for _ in 0..steps {
            let k1 = rhs(&b);
            let k2 = rhs(&(&b + &k1 * (h / 2.0)));
            let k3 = rhs(&(&b + &k2 * (h / 2.0)));
            let k4 = rhs(&(&b + &k3 * h));
            b += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        b
    }

    #[test]
    fn shrinkage_values() {
        assert_eq!(shrinkage_map(Estimator::Ridge, 1.0, 1.0), 0.5);
        assert_eq!(shrinkage_map(Estimator::Ridge, 0.0, 0.0), 0.0);
        for s in [0.0, 0.3, 5.0] {
            assert_eq!(shrinkage_map(Estimator::Flow, s, 0.0), 0.0);
        }
        assert_eq!(shrinkage_map(Estimator::Flow, 2.0, f64::INFINITY), 1.0);
        assert_eq!(shrinkage_map(Estimator::Ridge, 2.0, f64::INFINITY), 0.0);
    }

    #[test]
    fn flow_over_ridge_shrinkage_ratio_is_bounded() {
        // (1 − e^{−x})(1 + x)/x on a 1000-point grid over (0, 50].
        let max = (1..=1000)
            .map(|i| 50.0 * i as f64 / 1000.0)
            .map(|x| {
                shrinkage_map(Estimator::Flow, x, 1.0) / shrinkage_map(Estimator::Ridge, x, 1.0)
            })
            .fold(0.0f64, f64::max);
        assert!(max <= 1.2985, "{max}");
    }

    #[test]
    fn ridge_scalar_and_zero_cases() {
        let n = 4;
        let x = DesignMatrix::new(DMatrix::identity(n, n) * (n as f64).sqrt()).unwrap();
        let sd = decompose(&x);
        let y = DVector::from_vec(vec![2.0, -1.0, 0.5, 4.0]);
        let c = x.matrix().tr_mul(&y) / n as f64;
        let b = ridge_solution(&sd, &y, 0.5).unwrap();
        assert!((b - &c / 1.5).norm() < 1e-14);
        assert_eq!(
            ridge_solution(&sd, &DVector::zeros(n), 0.5).unwrap().norm(),
            0.0
        );
        let f = gradient_flow_solution(&sd, &y, 1.0).unwrap();
        assert!((f - c * (1.0 - (-1f64).exp())).norm() < 1e-14);
    }

    #[test]
    fn ridge_matches_dense_solve() {
        for (n, p, seed) in [(12, 5, 1), (6, 9, 2)] {
            let (x, y) = instance(n, p, seed);
            let sd = decompose(&x);
            let lambda = 0.37;
            let b = ridge_solution(&sd, &y, lambda).unwrap();
            let xm = x.matrix();
            let a = xm.tr_mul(xm) + DMatrix::identity(p, p) * (n as f64 * lambda);
            let dense = a.clone().lu().solve(&xm.tr_mul(&y)).unwrap();
            assert!((&b - dense).norm() < 1e-8);
            // Gradient of (1/n)‖y − Xβ‖² + λ‖β‖² vanishes.
            let grad = (xm.tr_mul(&(xm * &b - &y)) * 2.0) / n as f64 + &b * (2.0 * lambda);
            assert!(grad.norm() < 1e-8);
        }
    }

    #[test]
    fn ridge_zero_lambda_needs_full_rank() {
        let (x, y) = instance(3, 5, 3);
        let sd = decompose(&x);
        assert!(matches!(
            ridge_solution(&sd, &y, 0.0),
            Err(Error::Singular(_))
        ));
        let (x, y) = instance(8, 3, 3);
        assert!(ridge_solution(&decompose(&x), &y, 0.0).is_ok());
    }

    #[test]
    fn flow_matches_ode_integration() {
        let (x, y) = instance(10, 4, 5);
        let sd = decompose(&x);
        let exact = gradient_flow_solution(&sd, &y, 2.0).unwrap();
        let ode = rk4_flow(&x, &y, 2.0, 1e-4);
        assert!((exact - ode).norm() < 1e-6);
        assert_eq!(gradient_flow_solution(&sd, &y, 0.0).unwrap().norm(), 0.0);
        assert!(matches!(
            gradient_flow_solution(&sd, &y, -1.0),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn flow_limit_is_min_norm_least_squares() {
        let (x, y) = instance(4, 7, 6);
        let sd = decompose(&x);
        let limit = gradient_flow_solution(&sd, &y, f64::INFINITY).unwrap();
        let svd = x.matrix().clone().svd(true, true);
        let pinv = svd.pseudo_inverse(1e-12).unwrap();
        assert!((&limit - pinv * &y).norm() < 1e-10);
        let late = gradient_flow_solution(&sd, &y, 1e4).unwrap();
        assert!((late - limit).norm() < 1e-10);
    }

    #[test]
    fn descent_first_step_and_zero_response() {
        let (x, y) = instance(6, 3, 7);
        let path = gradient_descent_path(&x, &y, 0.1, 1).unwrap();
        let expect = x.matrix().tr_mul(&y) * (0.1 / 6.0);
        assert!((&path.iterates[1] - expect).norm() < 1e-15);
        assert_eq!(path.iterates[0].norm(), 0.0);
        let zero = gradient_descent_path(&x, &DVector::zeros(6), 0.1, 20).unwrap();
        assert!(zero.iterates.iter().all(|b| b.norm() == 0.0));
        assert!(gradient_descent_path(&x, &y, 0.0, 3).is_err());
        assert!(gradient_descent_path(&x, &y, 0.1, 0).is_err());
    }

    #[test]
    fn descent_stays_in_row_space() {
        let (x, y) = instance(5, 9, 8);
        let sd = decompose(&x);
        let path = gradient_descent_path(&x, &y, 0.05, 200).unwrap();
        for b in &path.iterates {
            assert!((b - sd.project_row_space(b)).norm() <= 1e-10);
        }
    }

    fn max_deviation(
        x: &DesignMatrix,
        sd: &SpectralData,
        y: &DVector<f64>,
        eps: f64,
        k: usize,
    ) -> f64 {
        let path = gradient_descent_path(x, y, eps, k).unwrap();
        path.iterates
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, b)| (b - gradient_flow_solution(sd, y, j as f64 * eps).unwrap()).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn descent_tracks_flow_within_bound() {
        let (x, y) = instance(20, 5, 9);
        let sd = decompose(&x);
        let (eps, k) = (0.01, 500);
        let dev = max_deviation(&x, &sd, &y, eps, k);
        let bound = discretization_bound(&sd, &y, eps, k).unwrap();
        assert!(dev <= bound, "{dev} > {bound}");
        let (eps, k) = (1e-3, 1000);
        assert!(
            max_deviation(&x, &sd, &y, eps, k) <= discretization_bound(&sd, &y, eps, k).unwrap()
        );
    }

    #[test]
    fn bound_edge_cases() {
        let (x, y) = instance(10, 3, 10);
        let sd = decompose(&x);
        assert_eq!(
            discretization_bound(&sd, &DVector::zeros(10), 1e-3, 100).unwrap(),
            0.0
        );
        let big = 1.0 / sd.s_max();
        assert!(matches!(
            discretization_bound(&sd, &y, big, 10),
            Err(Error::Precondition(_))
        ));
        // Fixed horizon Kε = 1: the bound is linear in ε.
        let b1 = discretization_bound(&sd, &y, 1e-3, 1000).unwrap();
        let b2 = discretization_bound(&sd, &y, 1e-4, 10_000).unwrap();
        assert!((b1 / b2 - 10.0).abs() < 1e-9);
    }

    #[test]
    fn implicit_regularizer_scalar_values() {
        let x = DesignMatrix::new(DMatrix::identity(2, 2) * 2f64.sqrt()).unwrap();
        let sd = decompose(&x);
        let q = implicit_regularizer_values(&sd, Regularizer::Flow { time: 2f64.ln() }).unwrap();
        assert!((q[0] - 1.0).abs() < 1e-14);
        assert!(implicit_regularizer(&sd, Regularizer::Flow { time: 0.0 }).is_err());
        assert!(implicit_regularizer(
            &sd,
            Regularizer::Descent {
                steps: 0,
                step_size: 0.1
            }
        )
        .is_err());
        // Large ts stays finite.
        let q = implicit_regularizer_values(&sd, Regularizer::Flow { time: 1e4 }).unwrap();
        assert!(q[0] >= 0.0 && q[0] < 1e-300);
    }

    #[test]
    fn descent_regularizer_converges_to_flow() {
        let (t, s, k) = (1.5, 0.8f64, 10_000u64);
        let x = DesignMatrix::new(DMatrix::identity(1, 1) * s.sqrt()).unwrap();
        let sd = decompose(&x);
        let qk = implicit_regularizer_values(
            &sd,
            Regularizer::Descent {
                steps: k,
                step_size: t / k as f64,
            },
        )
        .unwrap();
        let qt = implicit_regularizer_values(&sd, Regularizer::Flow { time: t }).unwrap();
        assert!((qk[0] - qt[0]).abs() < 1e-3);
        let scalar_k = 1.0 / ((1.0 - t * s / k as f64).powf(-(k as f64)) - 1.0);
        let scalar_t = 1.0 / ((t * s).exp() - 1.0);
        assert!((scalar_k - scalar_t).abs() < 1e-3);
    }

    #[test]
    fn regularized_solves_reproduce_iterates() {
        let (x, y) = instance(15, 6, 11);
        let sd = decompose(&x);
        let xm = x.matrix();
        let nf = 15.0;
        let solve = |q: DMatrix<f64>| {
            let a = xm.tr_mul(xm) + q * nf;
            a.lu().solve(&xm.tr_mul(&y)).unwrap()
        };
        let t = 0.8;
        let q = implicit_regularizer(&sd, Regularizer::Flow { time: t }).unwrap();
        assert!((solve(q) - gradient_flow_solution(&sd, &y, t).unwrap()).norm() < 1e-8);

        let eps = 0.5 / sd.s_max();
        let k = 7;
        let q = implicit_regularizer(
            &sd,
            Regularizer::Descent {
                steps: k,
                step_size: eps,
            },
        )
        .unwrap();
        let path = gradient_descent_path(&x, &y, eps, k as usize).unwrap();
        assert!((solve(q) - path.last()).norm() < 1e-8);
    }

    #[test]
    fn fitted_values_are_linear_smoothers() {
        let (x, y) = instance(9, 4, 12);
        let sd = decompose(&x);
        let fit = fitted_values(&sd, &y, Estimator::Ridge, 0.4).unwrap();
        assert!((fit - x.matrix() * ridge_solution(&sd, &y, 0.4).unwrap()).norm() < 1e-10);
        let fit = fitted_values(&sd, &y, Estimator::Flow, 1.7).unwrap();
        assert!((fit - x.matrix() * gradient_flow_solution(&sd, &y, 1.7).unwrap()).norm() < 1e-10);
    }

    #[test]
    fn tuning_kind_checks() {
        assert!(Tuning::Time(1.0).for_estimator(Estimator::Ridge).is_err());
        assert!(Tuning::Steps(3).for_estimator(Estimator::Flow).is_err());
        assert!(Tuning::Lambda(-1.0)
            .for_estimator(Estimator::Ridge)
            .is_err());
        assert_eq!(
            Tuning::Lambda(2.0).for_estimator(Estimator::Ridge).unwrap(),
            2.0
        );
    }
}
