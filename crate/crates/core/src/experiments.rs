//! Synthetic designs, the Monte Carlo risk oracle, ℓ2-norm calibration and
//! the ratio summaries of the flow-vs-ridge comparison.
//!
//! Randomness: every random stream is a [`ChaCha8Rng`] seeded from a 64-bit
//! master seed. Designs use stream 0, fixed `β₀` draws the last stream, and
//! Monte Carlo batch `k` uses stream `k + 1` of the Monte Carlo seed, so
//! results do not depend on how batches are scheduled.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::asymptotics::{limiting_bayes_risk, limiting_l2_norm_sq, MpLaw};
use crate::error::{input, Error, Result};
use crate::estimators::{Estimator, Tuning};
use crate::optimize::bisect_decreasing;
use crate::risk::{
    l2_norm_sq_unchecked, BayesRisk, Calibration, PriorModel, RiskCurve, RiskFlavor, RiskKind,
    RiskPoint, Signal,
};
use crate::spectral::{decompose, DesignMatrix, SpectralData};

/// Entry distribution of `Z`, each standardized to mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    Gaussian,
    /// Student t with 3 degrees of freedom, divided by √3.
    StudentT3,
    /// Fair ±1 signs.
    BernoulliHalf,
}

impl Distribution {
    pub const ALL: [Distribution; 3] = [
        Distribution::Gaussian,
        Distribution::StudentT3,
        Distribution::BernoulliHalf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Distribution::Gaussian => "gaussian",
            Distribution::StudentT3 => "student-t3",
            Distribution::BernoulliHalf => "bernoulli-half",
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "normal" => Ok(Distribution::Gaussian),
            "student-t3" | "t3" | "t" => Ok(Distribution::StudentT3),
            "bernoulli-half" | "bernoulli" => Ok(Distribution::BernoulliHalf),
            other => input(format!("unknown distribution {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dist: Distribution,
    pub n: usize,
    pub p: usize,
    /// Equicorrelation of the population covariance.
    pub rho: f64,
    pub sigma2: f64,
    pub r2: f64,
    pub grid: Vec<f64>,
    pub seed: u64,
    pub flavor: RiskKind,
}

impl ExperimentConfig {
    /// Defaults: unit noise and signal, the standard grid, estimation risk.
    pub fn new(dist: Distribution, n: usize, p: usize, rho: f64, seed: u64) -> Self {
        Self {
            dist,
            n,
            p,
            rho,
            sigma2: 1.0,
            r2: 1.0,
            grid: crate::default_grid(),
            seed,
            flavor: RiskKind::Estimation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return input("n and p must be positive");
        }
        let lower = if self.p > 1 {
            -1.0 / (self.p - 1) as f64
        } else {
            -1.0
        };
        if !(self.rho > lower && self.rho < 1.0) {
            return input(format!(
                "ρ = {} does not give a positive definite covariance",
                self.rho
            ));
        }
        PriorModel::new(self.sigma2, self.r2, self.n, self.p)?;
        if self.grid.is_empty() || self.grid.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return input("grid must be non-empty with positive finite values");
        }
        Ok(())
    }

    pub fn prior(&self) -> Result<PriorModel> {
        PriorModel::new(self.sigma2, self.r2, self.n, self.p)
    }

    pub fn risk_flavor(&self) -> Result<RiskFlavor> {
        match self.flavor {
            RiskKind::OutOfSample => RiskFlavor::out_of_sample(population_cov(self.p, self.rho)),
            k => RiskFlavor::from_kind(k, None),
        }
    }
}

/// Unit diagonal, off-diagonal `ρ`.
pub fn population_cov(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })
}

/// Coefficients `(c, d)` with `Σ^{1/2} = cI + d𝟙𝟙ᵀ` for the equicorrelation
/// matrix.
pub fn equicorrelation_sqrt(p: usize, rho: f64) -> (f64, f64) {
    let c = (1.0 - rho).sqrt();
    let top = (1.0 + (p as f64 - 1.0) * rho).sqrt();
    (c, (top - c) / p as f64)
}

fn draw_entry(dist: Distribution, t3: &StudentT<f64>, rng: &mut ChaCha8Rng) -> f64 {
    match dist {
        Distribution::Gaussian => StandardNormal.sample(rng),
        Distribution::StudentT3 => t3.sample(rng) / 3f64.sqrt(),
        Distribution::BernoulliHalf => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
    }
}

/// `X = ZΣ^{1/2}`: rows are i.i.d. with covariance `Σ`.
pub fn generate_design(config: &ExperimentConfig) -> Result<DesignMatrix> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let t3 = StudentT::new(3.0).expect("valid degrees of freedom");
    let (n, p) = (config.n, config.p);
    let mut z = DMatrix::<f64>::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = draw_entry(config.dist, &t3, &mut rng);
        }
    }
    if config.rho != 0.0 {
        let (c, d) = equicorrelation_sqrt(p, config.rho);
        for i in 0..n {
            let row_sum: f64 = z.row(i).iter().sum();
            for j in 0..p {
                z[(i, j)] = c * z[(i, j)] + d * row_sum;
            }
        }
    }
    DesignMatrix::new(z)
}

/// Monte Carlo settings; `r2` is only used for the prior signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub sigma2: f64,
    pub r2: f64,
    pub reps: usize,
    pub seed: u64,
}

pub const MC_BATCH: usize = 10_000;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub reps: usize,
}

impl Estimate {
    /// `|mean − value| ≤ k · std_error`.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    const EMPTY: Moments = Moments {
        count: 0.0,
        mean: 0.0,
        m2: 0.0,
    };

    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let d = x - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if other.count == 0.0 {
            return self;
        }
        let count = self.count + other.count;
        let d = other.mean - self.mean;
        Moments {
            count,
            mean: self.mean + d * other.count / count,
            m2: self.m2 + other.m2 + d * d * self.count * other.count / count,
        }
    }
}

/// The estimator as a linear map `β̂ = S y`, built without the spectral
/// layer: a dense solve for ridge and a matrix exponential plus SVD
/// pseudo-inverse for flow.
pub fn smoother_matrix(
    x: &DesignMatrix,
    estimator: Estimator,
    tuning: Tuning,
) -> Result<DMatrix<f64>> {
    let kappa = tuning.for_estimator(estimator)?;
    let xm = x.matrix();
    let n = x.n() as f64;
    let xtx = xm.transpose() * xm;
    let p = x.p();
    match estimator {
        Estimator::Ridge => {
            if kappa.is_infinite() {
                return Ok(DMatrix::zeros(p, x.n()));
            }
            let a = &xtx + DMatrix::identity(p, p) * (n * kappa);
            a.lu()
                .solve(&xm.transpose())
                .ok_or_else(|| Error::Singular("XᵀX + nλI is singular".into()))
        }
        Estimator::Flow => {
            let tol = 1e-12 * xtx.norm().max(1.0);
            let pinv = xtx
                .clone()
                .pseudo_inverse(tol)
                .map_err(|e| Error::Numeric(e.to_string()))?;
            if kappa.is_infinite() {
                return Ok(pinv * xm.transpose());
            }
            let e = (&xtx * (-kappa / n)).exp();
            Ok(pinv * (DMatrix::identity(p, p) - e) * xm.transpose())
        }
    }
}

fn symmetric_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

fn normal_vector(len: usize, scale: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(len, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

/// Monte Carlo estimate of a risk: Gaussian noise, Gaussian prior draws
/// for [`Signal::Prior`], and `x₀ ∼ N(0, Σ)` for out-of-sample risk.
pub fn monte_carlo_risk(
    x: &DesignMatrix,
    signal: &Signal,
    mc: &MonteCarlo,
    estimator: Estimator,
    tuning: Tuning,
    flavor: &RiskFlavor,
) -> Result<Estimate> {
    if mc.reps < 100 {
        return input(format!(
            "Monte Carlo needs at least 100 replicates, got {}",
            mc.reps
        ));
    }
    if !(mc.sigma2 >= 0.0) || !(mc.r2 >= 0.0) {
        return input("σ² and r² must be nonnegative");
    }
    let (n, p) = (x.n(), x.p());
    if let Signal::Fixed(b) = signal {
        if b.len() != p {
            return input(format!("β₀ has length {}, expected p = {p}", b.len()));
        }
    }
    let cov_sqrt = match flavor.kind {
        RiskKind::OutOfSample => {
            let cov = flavor.population_cov.as_ref().ok_or_else(|| {
                Error::Input("out-of-sample risk needs a population covariance".into())
            })?;
            if cov.nrows() != p {
                return input("population covariance does not match p");
            }
            Some(symmetric_sqrt(cov))
        }
        _ => None,
    };
    let s = smoother_matrix(x, estimator, tuning)?;
    // β̂ − β₀ = (SX − I)β₀ + Sε.
    let shrink = &s * x.matrix() - DMatrix::identity(p, p);
    let xm = x.matrix();
    let noise_sd = mc.sigma2.sqrt();
    let prior_sd = (mc.r2 / p as f64).sqrt();
    let batches = mc.reps.div_ceil(MC_BATCH);

    let run_batch = |k: usize| -> Moments {
        let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
        rng.set_stream(k as u64 + 1);
        let count = MC_BATCH.min(mc.reps - k * MC_BATCH);
        let mut m = Moments::EMPTY;
        for _ in 0..count {
            let beta0 = match signal {
                Signal::Fixed(b) => b.clone(),
                Signal::Prior => normal_vector(p, prior_sd, &mut rng),
            };
            let eps = normal_vector(n, noise_sd, &mut rng);
            let err = &shrink * &beta0 + &s * &eps;
            let loss = match flavor.kind {
                RiskKind::Estimation => err.norm_squared(),
                RiskKind::InSample => (xm * &err).norm_squared() / n as f64,
                RiskKind::OutOfSample => {
                    let z = normal_vector(p, 1.0, &mut rng);
                    let x0 = cov_sqrt.as_ref().expect("set above") * z;
                    x0.dot(&err).powi(2)
                }
            };
            m.push(loss);
        }
        m
    };

    #[cfg(feature = "parallel")]
    let parts: Vec<Moments> = {
        use rayon::prelude::*;
        (0..batches).into_par_iter().map(run_batch).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Moments> = (0..batches).map(run_batch).collect();

    let total = parts.into_iter().fold(Moments::EMPTY, Moments::merge);
    let var = if total.count > 1.0 {
        total.m2 / (total.count - 1.0)
    } else {
        0.0
    };
    Ok(Estimate {
        mean: total.mean,
        std_error: (var / total.count).sqrt(),
        reps: mc.reps,
    })
}

/// A flow time paired with the ridge penalty of equal expected ℓ2 norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedPair {
    pub time: f64,
    /// `None` when the flow norm is beyond what ridge attains.
    pub lambda: Option<f64>,
    /// Square root of the common expected squared norm.
    pub norm: f64,
    pub risk_flow: f64,
    pub risk_ridge: Option<f64>,
    pub ratio: Option<f64>,
}

impl CalibratedPair {
    pub fn matched(&self) -> bool {
        self.lambda.is_some()
    }
}

pub const CALIBRATION_REL_TOL: f64 = 1e-10;

/// Ridge penalty with `E‖β̂_ridge(λ)‖² = target`, if one exists.
fn match_lambda(sd: &SpectralData, prior: &PriorModel, target: f64) -> Option<f64> {
    if target == 0.0 {
        return Some(f64::INFINITY);
    }
    let norm = |u: f64| l2_norm_sq_unchecked(sd, prior, Estimator::Ridge, u.exp());
    // The supremum is approached as λ → 0.
    let sup = l2_norm_sq_unchecked(sd, prior, Estimator::Flow, f64::INFINITY);
    if target >= sup * (1.0 - 1e-12) {
        return None;
    }
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    while norm(lo) <= target {
        lo -= 5.0;
        if lo < -690.0 {
            return None;
        }
    }
    while norm(hi) >= target {
        hi += 5.0;
        if hi > 690.0 {
            return None;
        }
    }
    let u = bisect_decreasing(norm, target, lo, hi, CALIBRATION_REL_TOL);
    ((norm(u) - target).abs() <= CALIBRATION_REL_TOL * target).then(|| u.exp())
}

/// For each flow time on `flow`, the ridge penalty of equal expected norm
/// and the two Bayes risks there. The ridge risk is recomputed at the
/// matched penalty, so no ridge curve is needed.
pub fn calibrate_by_l2(
    flow: &RiskCurve,
    sd: &SpectralData,
    prior: &PriorModel,
    flavor: &RiskFlavor,
) -> Result<Vec<CalibratedPair>> {
    if flow.estimator != Estimator::Flow {
        return input("ℓ2 calibration expects a flow curve");
    }
    let bayes = BayesRisk::new(sd, *prior, flavor)?;
    flow.points
        .iter()
        .zip(&flow.l2_norm_sq)
        .map(|(pt, &target)| {
            let lambda = match_lambda(sd, prior, target);
            let risk_ridge = match lambda {
                Some(l) => Some(bayes.eval(Estimator::Ridge, Tuning::Lambda(l))?.total),
                None => None,
            };
            Ok(CalibratedPair {
                time: pt.tuning.value(),
                lambda,
                norm: target.sqrt(),
                risk_flow: pt.total,
                risk_ridge,
                ratio: risk_ridge.map(|r| pt.total / r),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    /// Largest `risk_flow(t)/risk_ridge(1/t)` over the grid.
    pub max_pathwise_ratio: f64,
    /// Grid minimum of flow risk over grid minimum of ridge risk.
    pub ratio_of_minima: f64,
    /// Largest ratio over ℓ2-matched pairs.
    pub max_l2calibrated_ratio: f64,
    pub unmatched: usize,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub summary: RatioSummary,
    /// Flow and ridge on the grid, uncalibrated.
    pub flow: RiskCurve,
    pub ridge: RiskCurve,
    /// Ridge at `λ = 1/t`, in flow grid order.
    pub ridge_inverse: RiskCurve,
    pub calibrated: Vec<CalibratedPair>,
    /// Large-sample flow and ridge curves, only for `ρ = 0`.
    pub limits: Option<(RiskCurve, RiskCurve)>,
}

impl ExperimentResult {
    /// Curves for one calibration, as written to that calibration's CSV.
    pub fn curves(&self, calibration: Calibration) -> Vec<RiskCurve> {
        let tag = |c: &RiskCurve| RiskCurve {
            calibration,
            ..c.clone()
        };
        let mut out = match calibration {
            Calibration::None => vec![self.flow.clone(), self.ridge.clone()],
            Calibration::Inverse => vec![tag(&self.flow), tag(&self.ridge_inverse)],
            Calibration::L2 => {
                let matched: Vec<&CalibratedPair> =
                    self.calibrated.iter().filter(|c| c.matched()).collect();
                let flow_pts = self
                    .flow
                    .points
                    .iter()
                    .zip(&self.flow.l2_norm_sq)
                    .zip(&self.calibrated);
                let (fp, fn_): (Vec<RiskPoint>, Vec<f64>) = flow_pts
                    .filter(|(_, c)| c.matched())
                    .map(|((p, n), _)| (*p, *n))
                    .unzip();
                let ridge_points = matched
                    .iter()
                    .map(|c| {
                        let r = c.risk_ridge.expect("matched");
                        RiskPoint {
                            tuning: Tuning::Lambda(c.lambda.expect("matched")),
                            bias_sq: f64::NAN,
                            variance: f64::NAN,
                            total: r,
                        }
                    })
                    .collect();
                let norms = matched.iter().map(|c| c.norm * c.norm).collect();
                vec![
                    RiskCurve {
                        points: fp,
                        l2_norm_sq: fn_,
                        ..tag(&self.flow)
                    },
                    RiskCurve {
                        points: ridge_points,
                        l2_norm_sq: norms,
                        ..tag(&self.ridge)
                    },
                ]
            }
        };
        if let Some((f, r)) = &self.limits {
            if calibration == Calibration::None {
                out.push(f.clone());
                out.push(r.clone());
            }
        }
        out
    }
}

fn curve(
    bayes: &BayesRisk<'_>,
    sd: &SpectralData,
    prior: &PriorModel,
    estimator: Estimator,
    kappas: &[f64],
    kind: RiskKind,
) -> Result<RiskCurve> {
    let mut points = Vec::with_capacity(kappas.len());
    let mut norms = Vec::with_capacity(kappas.len());
    for &k in kappas {
        points.push(bayes.eval(estimator, estimator.tuning(k))?);
        norms.push(l2_norm_sq_unchecked(sd, prior, estimator, k));
    }
    Ok(RiskCurve {
        estimator,
        flavor: kind,
        calibration: Calibration::None,
        points,
        l2_norm_sq: norms,
        limit: false,
    })
}

fn limit_curve(
    law: &MpLaw,
    config: &ExperimentConfig,
    prior: &PriorModel,
    estimator: Estimator,
) -> Result<RiskCurve> {
    let mut points = Vec::with_capacity(config.grid.len());
    let mut norms = Vec::with_capacity(config.grid.len());
    for &k in &config.grid {
        let tuning = estimator.tuning(k);
        points.push(limiting_bayes_risk(
            law,
            prior.alpha,
            prior.sigma2,
            config.flavor,
            estimator,
            tuning,
        )?);
        norms.push(limiting_l2_norm_sq(
            law,
            prior.alpha,
            prior.sigma2,
            estimator,
            tuning,
        )?);
    }
    Ok(RiskCurve {
        estimator,
        flavor: config.flavor,
        calibration: Calibration::None,
        points,
        l2_norm_sq: norms,
        limit: true,
    })
}

/// Draws the design and computes every Bayes risk curve of the comparison.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let x = generate_design(config)?;
    let sd = decompose(&x);
    run_on_spectrum(config, &sd)
}

/// [`run_experiment`] on an already decomposed design.
pub fn run_on_spectrum(config: &ExperimentConfig, sd: &SpectralData) -> Result<ExperimentResult> {
    config.validate()?;
    let prior = config.prior()?;
    let flavor = config.risk_flavor()?;
    let bayes = BayesRisk::new(sd, prior, &flavor)?;
    let flow = curve(
        &bayes,
        sd,
        &prior,
        Estimator::Flow,
        &config.grid,
        config.flavor,
    )?;
    let ridge = curve(
        &bayes,
        sd,
        &prior,
        Estimator::Ridge,
        &config.grid,
        config.flavor,
    )?;
    let inverse: Vec<f64> = config.grid.iter().map(|t| 1.0 / t).collect();
    let mut ridge_inverse = curve(
        &bayes,
        sd,
        &prior,
        Estimator::Ridge,
        &inverse,
        config.flavor,
    )?;
    ridge_inverse.calibration = Calibration::Inverse;
    let calibrated = calibrate_by_l2(&flow, sd, &prior, &flavor)?;

    let max_pathwise_ratio = flow
        .points
        .iter()
        .zip(&ridge_inverse.points)
        .map(|(f, r)| f.total / r.total)
        .fold(f64::NEG_INFINITY, f64::max);
    let ratio_of_minima = flow.min_total() / ridge.min_total();
    let max_l2calibrated_ratio = calibrated
        .iter()
        .filter_map(|c| c.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    let unmatched = calibrated.iter().filter(|c| !c.matched()).count();

    let limits = if config.rho == 0.0 {
        let law = MpLaw::from_dims(config.n, config.p)?;
        Some((
            limit_curve(&law, config, &prior, Estimator::Flow)?,
            limit_curve(&law, config, &prior, Estimator::Ridge)?,
        ))
    } else {
        None
    };
    Ok(ExperimentResult {
        summary: RatioSummary {
            max_pathwise_ratio,
            ratio_of_minima,
            max_l2calibrated_ratio,
            unmatched,
            config: config.clone(),
        },
        flow,
        ridge,
        ridge_inverse,
        calibrated,
        limits,
    })
}

/// The twelve comparison settings: three distributions, `ρ ∈ {0, 0.5}`,
/// and `(n, p) ∈ {(1000, 500), (500, 1000)}`.
pub fn standard_configs(seed: u64) -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for dist in Distribution::ALL {
        for rho in [0.0, 0.5] {
            for (n, p) in [(1000, 500), (500, 1000)] {
                out.push(ExperimentConfig::new(dist, n, p, rho, seed));
            }
        }
    }
    out
}

/// Instance `k` of the small-certificate sweep: `n, p ∈ {20, 50}`, all
/// three distributions, and `ρ = 0.5` on every other block of twelve.
pub fn small_instance(k: usize, seed: u64) -> ExperimentConfig {
    let shapes = [(20, 20), (20, 50), (50, 20), (50, 50)];
    let (n, p) = shapes[k % 4];
    let dist = Distribution::ALL[(k / 4) % 3];
    let rho = if (k / 12) % 2 == 1 { 0.5 } else { 0.0 };
    ExperimentConfig::new(dist, n, p, rho, seed.wrapping_add(k as u64))
}

/// A draw of `β₀ ∼ N(0, (r²/p)I)` from the last stream of `seed`.
pub fn draw_beta0(p: usize, r2: f64, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    normal_vector(p, (r2 / p as f64).sqrt(), &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dist: Distribution, rho: f64, seed: u64) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(dist, 40, 25, rho, seed);
        c.grid = crate::log_grid(1e-2, 1e2, 60);
        c
    }

    #[test]
    fn design_is_deterministic_and_isotropic_at_zero_rho() {
        for dist in Distribution::ALL {
            let c = small(dist, 0.0, 3);
            let a = generate_design(&c).unwrap();
            let b = generate_design(&c).unwrap();
            assert_eq!(a.matrix(), b.matrix());
            let other = generate_design(&small(dist, 0.0, 4)).unwrap();
            assert_ne!(a.matrix(), other.matrix());
        }
        let b = generate_design(&small(Distribution::BernoulliHalf, 0.0, 1)).unwrap();
        assert!(b.matrix().iter().all(|v| *v == 1.0 || *v == -1.0));
    }

    #[test]
    fn equicorrelation_root_squares_to_cov() {
        for (p, rho) in [(5, 0.5), (12, 0.3), (4, -0.2)] {
            let (c, d) = equicorrelation_sqrt(p, rho);
            let ones = DMatrix::from_element(p, p, 1.0);
            let root = DMatrix::identity(p, p) * c + ones * d;
            assert!((&root * &root - population_cov(p, rho)).norm() < 1e-12);
        }
    }

    #[test]
    fn sample_covariance_matches_population() {
        for dist in Distribution::ALL {
            let mut c = ExperimentConfig::new(dist, 100_000, 10, 0.5, 7);
            c.grid = vec![1.0];
            let x = generate_design(&c).unwrap();
            let m = x.matrix();
            let cov = m.transpose() * m / 100_000.0;
            let err = (cov - population_cov(10, 0.5)).abs().max();
            // t(3) has no fourth moment, so its sample covariance settles slowly.
            let tol = if dist == Distribution::StudentT3 {
                0.15
            } else {
                0.02
            };
            assert!(err < tol, "{dist}: {err}");
        }
    }

    #[test]
    fn config_validation() {
        let mut c = small(Distribution::Gaussian, 0.0, 0);
        c.rho = 1.0;
        assert!(c.validate().is_err());
        c.rho = 0.0;
        c.grid = vec![];
        assert!(c.validate().is_err());
        c.grid = vec![-1.0];
        assert!(generate_design(&c).is_err());
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut whole = Moments::EMPTY;
        xs.iter().for_each(|x| whole.push(*x));
        let mut parts = Moments::EMPTY;
        for chunk in xs.chunks(77) {
            let mut m = Moments::EMPTY;
            chunk.iter().for_each(|x| m.push(*x));
            parts = parts.merge(m);
        }
        assert!((whole.mean - parts.mean).abs() < 1e-12);
        assert!((whole.m2 - parts.m2).abs() < 1e-9 * whole.m2);
    }

    #[test]
    fn monte_carlo_noiseless_interpolation() {
        let x = DesignMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 2.0, -1.0, 1.0]).unwrap();
        let mc = MonteCarlo {
            sigma2: 0.0,
            r2: 1.0,
            reps: 100,
            seed: 1,
        };
        let beta0 = DVector::from_vec(vec![0.7, -0.2]);
        let est = monte_carlo_risk(
            &x,
            &Signal::Fixed(beta0),
            &mc,
            Estimator::Flow,
            Tuning::Time(f64::INFINITY),
            &RiskFlavor::estimation(),
        )
        .unwrap();
        assert!(est.mean < 1e-20, "{}", est.mean);
        assert!(monte_carlo_risk(
            &x,
            &Signal::Prior,
            &MonteCarlo { reps: 99, ..mc },
            Estimator::Flow,
            Tuning::Time(1.0),
            &RiskFlavor::estimation()
        )
        .is_err());
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let x = generate_design(&small(Distribution::Gaussian, 0.0, 2)).unwrap();
        let mc = MonteCarlo {
            sigma2: 1.0,
            r2: 1.0,
            reps: 25_000,
            seed: 9,
        };
        let f = || {
            monte_carlo_risk(
                &x,
                &Signal::Prior,
                &mc,
                Estimator::Ridge,
                Tuning::Lambda(0.5),
                &RiskFlavor::in_sample(),
            )
            .unwrap()
        };
        assert_eq!(f(), f());
    }

    #[test]
    fn smoothers_match_spectral_solutions() {
        let x = generate_design(&small(Distribution::StudentT3, 0.5, 5)).unwrap();
        let sd = decompose(&x);
        let y = DVector::from_fn(x.n(), |i, _| (i as f64 * 0.3).cos());
        let s = smoother_matrix(&x, Estimator::Ridge, Tuning::Lambda(0.3)).unwrap();
        let r = crate::estimators::ridge_solution(&sd, &y, 0.3).unwrap();
        assert!((s * &y - r).norm() < 1e-10);
        let s = smoother_matrix(&x, Estimator::Flow, Tuning::Time(2.0)).unwrap();
        let f = crate::estimators::gradient_flow_solution(&sd, &y, 2.0).unwrap();
        assert!((s * &y - f).norm() < 1e-9);
    }

    #[test]
    fn calibration_contract() {
        let c = small(Distribution::Gaussian, 0.0, 11);
        let res = run_experiment(&c).unwrap();
        let sd = decompose(&generate_design(&c).unwrap());
        let prior = c.prior().unwrap();
        for pair in &res.calibrated {
            if let Some(l) = pair.lambda {
                let n2 = l2_norm_sq_unchecked(&sd, &prior, Estimator::Ridge, l);
                assert!((n2 - pair.norm * pair.norm).abs() <= 1e-10 * n2);
            }
        }
        // t = 0 pairs with λ = ∞.
        let zero = RiskCurve {
            points: vec![RiskPoint {
                tuning: Tuning::Time(0.0),
                bias_sq: 1.0,
                variance: 0.0,
                total: 1.0,
            }],
            l2_norm_sq: vec![0.0],
            ..res.flow.clone()
        };
        let pair = calibrate_by_l2(&zero, &sd, &prior, &RiskFlavor::estimation()).unwrap()[0];
        assert_eq!(pair.lambda, Some(f64::INFINITY));
        assert!((pair.ratio.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unreachable_norm_is_unmatched() {
        let c = small(Distribution::Gaussian, 0.0, 12);
        let sd = decompose(&generate_design(&c).unwrap());
        let prior = c.prior().unwrap();
        let sup = l2_norm_sq_unchecked(&sd, &prior, Estimator::Flow, f64::INFINITY);
        assert_eq!(match_lambda(&sd, &prior, sup), None);
        assert_eq!(match_lambda(&sd, &prior, 2.0 * sup), None);
        assert!(match_lambda(&sd, &prior, 0.5 * sup).is_some());
    }

    #[test]
    fn summary_invariances() {
        let c = small(Distribution::BernoulliHalf, 0.5, 13);
        let base = run_experiment(&c).unwrap().summary;
        assert!(base.ratio_of_minima >= 1.0 - 1e-6);

        let mut rev = c.clone();
        rev.grid.reverse();
        let r = run_experiment(&rev).unwrap().summary;
        assert_eq!(
            (
                r.max_pathwise_ratio,
                r.ratio_of_minima,
                r.max_l2calibrated_ratio
            ),
            (
                base.max_pathwise_ratio,
                base.ratio_of_minima,
                base.max_l2calibrated_ratio
            )
        );

        // y → 2y, β₀ → 2β₀, σ → 2σ, r → 2r scales every risk by exactly 4.
        let mut scaled = c.clone();
        scaled.sigma2 *= 4.0;
        scaled.r2 *= 4.0;
        let s = run_experiment(&scaled).unwrap();
        assert_eq!(
            (
                s.summary.max_pathwise_ratio,
                s.summary.ratio_of_minima,
                s.summary.max_l2calibrated_ratio
            ),
            (
                base.max_pathwise_ratio,
                base.ratio_of_minima,
                base.max_l2calibrated_ratio
            )
        );
        let b = run_experiment(&c).unwrap();
        for (x, y) in s.flow.points.iter().zip(&b.flow.points) {
            assert_eq!(x.total, 4.0 * y.total);
        }
    }

    #[test]
    fn single_point_grid() {
        let mut c = small(Distribution::Gaussian, 0.0, 14);
        c.grid = vec![1.0];
        let res = run_experiment(&c).unwrap();
        let s = &res.summary;
        let ratio = res.flow.points[0].total / res.ridge.points[0].total;
        assert_eq!(s.max_pathwise_ratio, ratio);
        assert_eq!(s.ratio_of_minima, ratio);
        assert_eq!(s.max_l2calibrated_ratio, res.calibrated[0].ratio.unwrap());
    }

    #[test]
    fn limits_only_for_isotropic() {
        assert!(run_experiment(&small(Distribution::Gaussian, 0.0, 15))
            .unwrap()
            .limits
            .is_some());
        assert!(run_experiment(&small(Distribution::Gaussian, 0.5, 15))
            .unwrap()
            .limits
            .is_none());
        assert_eq!(standard_configs(0).len(), 12);
    }
}
