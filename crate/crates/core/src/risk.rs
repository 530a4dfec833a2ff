//! Closed-form risks of gradient flow and ridge regression.
//!
//! Every risk here is a weighted sum over the eigen-directions of `Σ̂`:
//! `Σᵢ wᵢ · (bias factor + variance factor)`. The flavor fixes the weights:
//! `wᵢ = 1` for estimation risk, `wᵢ = sᵢ` for in-sample prediction risk and
//! `wᵢ = vᵢᵀΣvᵢ` for out-of-sample prediction risk with population covariance
//! `Σ`. Zero eigenvalues follow the `(1 − e⁻ˣ)²/x = 0` convention.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::estimators::{flow_bias_factor, flow_gain, ridge_gain, Estimator, Tuning};
use crate::optimize::golden_section_min;
use crate::spectral::{exp_neg, SpectralData};

/// Noise level and signal strength of `y | β₀ ∼ (Xβ₀, σ²I)`,
/// `β₀ ∼ (0, (r²/p)I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorModel {
    pub sigma2: f64,
    pub r2: f64,
    /// `r²n/(σ²p)`.
    pub alpha: f64,
}

impl PriorModel {
    pub fn new(sigma2: f64, r2: f64, n: usize, p: usize) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return input(format!("σ² must be positive, got {sigma2}"));
        }
        if !(r2 > 0.0) || !r2.is_finite() {
            return input(format!("r² must be positive, got {r2}"));
        }
        Ok(Self {
            sigma2,
            r2,
            alpha: r2 * n as f64 / (sigma2 * p as f64),
        })
    }

    pub fn for_data(sd: &SpectralData, sigma2: f64, r2: f64) -> Result<Self> {
        Self::new(sigma2, r2, sd.n(), sd.p())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskKind {
    Estimation,
    InSample,
    OutOfSample,
}

impl RiskKind {
    pub fn name(self) -> &'static str {
        match self {
            RiskKind::Estimation => "estimation",
            RiskKind::InSample => "in-sample",
            RiskKind::OutOfSample => "out-of-sample",
        }
    }
}

impl fmt::Display for RiskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RiskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "estimation" => Ok(RiskKind::Estimation),
            "in-sample" | "in" => Ok(RiskKind::InSample),
            "out-of-sample" | "out" | "prediction" => Ok(RiskKind::OutOfSample),
            other => input(format!("unknown risk flavor {other:?}")),
        }
    }
}

/// Which risk to evaluate; out-of-sample risk carries the population
/// covariance of a fresh feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskFlavor {
    pub kind: RiskKind,
    pub population_cov: Option<DMatrix<f64>>,
}

impl RiskFlavor {
    pub fn estimation() -> Self {
        Self {
            kind: RiskKind::Estimation,
            population_cov: None,
        }
    }

    pub fn in_sample() -> Self {
        Self {
            kind: RiskKind::InSample,
            population_cov: None,
        }
    }

    /// Out-of-sample risk; `cov` must be symmetric PSD within 1e-10.
    pub fn out_of_sample(cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() {
            return input("population covariance must be square");
        }
        let scale = cov.norm().max(1.0);
        if (&cov - cov.transpose()).norm() > 1e-10 * scale {
            return input("population covariance is not symmetric");
        }
        let min_eig = SymmetricEigen::new(cov.clone()).eigenvalues.min();
        if min_eig < -1e-10 * scale {
            return input(format!(
                "population covariance is not PSD (eigenvalue {min_eig})"
            ));
        }
        Ok(Self {
            kind: RiskKind::OutOfSample,
            population_cov: Some(cov),
        })
    }

    pub fn from_kind(kind: RiskKind, cov: Option<DMatrix<f64>>) -> Result<Self> {
        match kind {
            RiskKind::Estimation => Ok(Self::estimation()),
            RiskKind::InSample => Ok(Self::in_sample()),
            RiskKind::OutOfSample => match cov {
                Some(c) => Self::out_of_sample(c),
                None => input("out-of-sample risk needs a population covariance"),
            },
        }
    }
}

/// Per-direction weights of a risk flavor on a given spectrum.
#[derive(Debug, Clone)]
pub struct DirectionWeights {
    /// One weight per positive eigenvalue.
    pub range: Vec<f64>,
    /// Total weight of the null space of `Σ̂`.
    pub null: f64,
}

impl DirectionWeights {
    pub fn new(sd: &SpectralData, flavor: &RiskFlavor) -> Result<Self> {
        let null_dim = (sd.p() - sd.rank()) as f64;
        match flavor.kind {
            RiskKind::Estimation => Ok(Self {
                range: vec![1.0; sd.rank()],
                null: null_dim,
            }),
            RiskKind::InSample => Ok(Self {
                range: sd.positive_eigenvalues().to_vec(),
                null: 0.0,
            }),
            RiskKind::OutOfSample => {
                let cov = flavor.population_cov.as_ref().ok_or_else(|| {
                    Error::Input("out-of-sample risk needs a population covariance".into())
                })?;
                if cov.nrows() != sd.p() {
                    return input(format!(
                        "population covariance is {}×{}, expected p = {}",
                        cov.nrows(),
                        cov.ncols(),
                        sd.p()
                    ));
                }
                let v = sd.right_vectors();
                let sv = cov * v;
                let range: Vec<f64> = (0..sd.rank())
                    .map(|i| v.column(i).dot(&sv.column(i)))
                    .collect();
                let null = if sd.is_rank_deficient() {
                    (cov.trace() - range.iter().sum::<f64>()).max(0.0)
                } else {
                    0.0
                };
                Ok(Self { range, null })
            }
        }
    }
}

/// Bias and variance at one tuning value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskPoint {
    pub tuning: Tuning,
    pub bias_sq: f64,
    pub variance: f64,
    pub total: f64,
}

impl RiskPoint {
    fn new(tuning: Tuning, bias_sq: f64, variance: f64) -> Self {
        Self {
            tuning,
            bias_sq,
            variance,
            total: bias_sq + variance,
        }
    }
}

/// Squared bias multiplier `‖E β̂ − β₀‖²` per unit signal along an
/// eigen-direction with eigenvalue `s`.
pub(crate) fn bias_factor(estimator: Estimator, kappa: f64, s: f64) -> f64 {
    match estimator {
        Estimator::Flow => flow_bias_factor(kappa, s),
        Estimator::Ridge => {
            let r = bias_operator(estimator, kappa, s);
            r * r
        }
    }
}

/// Variance multiplier `n/σ² · tr Cov` per eigen-direction.
pub(crate) fn variance_factor(estimator: Estimator, kappa: f64, s: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    match estimator {
        Estimator::Flow => {
            let g = flow_gain(kappa, s);
            g * g / s
        }
        Estimator::Ridge => {
            if kappa.is_infinite() {
                0.0
            } else {
                s / ((s + kappa) * (s + kappa))
            }
        }
    }
}

/// Shrinkage of `E β̂` relative to `β₀` along a direction: `exp(−ts)` or
/// `λ/(s+λ)`.
fn bias_operator(estimator: Estimator, kappa: f64, s: f64) -> f64 {
    match estimator {
        Estimator::Flow => exp_neg(kappa, s),
        Estimator::Ridge => {
            if s == 0.0 || kappa.is_infinite() {
                1.0
            } else {
                kappa / (s + kappa)
            }
        }
    }
}

fn gain(estimator: Estimator, kappa: f64, s: f64) -> f64 {
    match estimator {
        Estimator::Flow => flow_gain(kappa, s),
        Estimator::Ridge => ridge_gain(s, kappa),
    }
}

fn check_tuning(sd: &SpectralData, estimator: Estimator, tuning: &Tuning) -> Result<f64> {
    let kappa = tuning.for_estimator(estimator)?;
    if estimator == Estimator::Ridge && kappa == 0.0 && sd.is_rank_deficient() {
        return Err(Error::Singular(format!(
            "ridge risk at λ = 0 needs full rank, design has rank {} < p = {}",
            sd.rank(),
            sd.p()
        )));
    }
    Ok(kappa)
}

/// Bayes risk evaluator with the flavor weights computed once.
#[derive(Debug, Clone)]
pub struct BayesRisk<'a> {
    sd: &'a SpectralData,
    prior: PriorModel,
    weights: DirectionWeights,
}

impl<'a> BayesRisk<'a> {
    pub fn new(sd: &'a SpectralData, prior: PriorModel, flavor: &RiskFlavor) -> Result<Self> {
        Ok(Self {
            sd,
            prior,
            weights: DirectionWeights::new(sd, flavor)?,
        })
    }

    pub fn with_weights(
        sd: &'a SpectralData,
        prior: PriorModel,
        weights: DirectionWeights,
    ) -> Self {
        Self { sd, prior, weights }
    }

    pub fn weights(&self) -> &DirectionWeights {
        &self.weights
    }

    pub fn prior(&self) -> &PriorModel {
        &self.prior
    }

    pub fn eval(&self, estimator: Estimator, tuning: Tuning) -> Result<RiskPoint> {
        let kappa = check_tuning(self.sd, estimator, &tuning)?;
        let (bias, var) = self.termwise_sums(estimator, kappa);
        Ok(RiskPoint::new(tuning, bias, var))
    }

    /// Total Bayes risk without the tuning-kind checks; used by searches.
    pub(crate) fn total(&self, estimator: Estimator, kappa: f64) -> f64 {
        let (b, v) = self.termwise_sums(estimator, kappa);
        b + v
    }

    fn termwise_sums(&self, estimator: Estimator, kappa: f64) -> (f64, f64) {
        let scale = self.prior.sigma2 / self.sd.n() as f64;
        let alpha = self.prior.alpha;
        let mut bias = self.weights.null;
        let mut var = 0.0;
        for (&w, &s) in self
            .weights
            .range
            .iter()
            .zip(self.sd.positive_eigenvalues())
        {
            bias += w * bias_factor(estimator, kappa, s);
            var += w * variance_factor(estimator, kappa, s);
        }
        (scale * alpha * bias, scale * var)
    }

    /// The per-direction Bayes summands `wᵢ(σ²/n)(α bᵢ + vᵢ)`, with the null
    /// space as a final entry when present.
    pub fn summands(&self, estimator: Estimator, tuning: Tuning) -> Result<Vec<f64>> {
        let kappa = check_tuning(self.sd, estimator, &tuning)?;
        let scale = self.prior.sigma2 / self.sd.n() as f64;
        let alpha = self.prior.alpha;
        let mut out: Vec<f64> = self
            .weights
            .range
            .iter()
            .zip(self.sd.positive_eigenvalues())
            .map(|(&w, &s)| {
                scale
                    * w
                    * (alpha * bias_factor(estimator, kappa, s)
                        + variance_factor(estimator, kappa, s))
            })
            .collect();
        if self.sd.is_rank_deficient() {
            out.push(scale * alpha * self.weights.null);
        }
        Ok(out)
    }
}

/// Risk at a fixed coefficient vector `β₀`.
pub fn risk_fixed(
    sd: &SpectralData,
    beta0: &DVector<f64>,
    prior: &PriorModel,
    estimator: Estimator,
    tuning: Tuning,
    flavor: &RiskFlavor,
) -> Result<RiskPoint> {
    let kappa = check_tuning(sd, estimator, &tuning)?;
    if beta0.len() != sd.p() {
        return input(format!(
            "β₀ has length {}, expected p = {}",
            beta0.len(),
            sd.p()
        ));
    }
    let weights = DirectionWeights::new(sd, flavor)?;
    let scale = prior.sigma2 / sd.n() as f64;
    let s = sd.positive_eigenvalues();
    let variance = scale
        * weights
            .range
            .iter()
            .zip(s)
            .map(|(&w, &s)| w * variance_factor(estimator, kappa, s))
            .sum::<f64>();
    let bias_sq = match flavor.kind {
        RiskKind::Estimation | RiskKind::InSample => {
            let (coords, null_sq) = sd.rotate(beta0);
            let null_part = if flavor.kind == RiskKind::Estimation {
                null_sq
            } else {
                0.0
            };
            null_part
                + coords
                    .iter()
                    .zip(s)
                    .zip(&weights.range)
                    .map(|((c, &s), w)| w * c * c * bias_factor(estimator, kappa, s))
                    .sum::<f64>()
        }
        RiskKind::OutOfSample => {
            let cov = flavor
                .population_cov
                .as_ref()
                .expect("checked by DirectionWeights");
            let shrink: Vec<f64> = s
                .iter()
                .map(|&s| bias_operator(estimator, kappa, s))
                .collect();
            let d = sd.spectral_apply(&shrink, 1.0, beta0);
            d.dot(&(cov * &d))
        }
    };
    Ok(RiskPoint::new(tuning, bias_sq, variance))
}

/// Bayes risk under the spherical prior.
pub fn risk_bayes(
    sd: &SpectralData,
    prior: &PriorModel,
    estimator: Estimator,
    tuning: Tuning,
    flavor: &RiskFlavor,
) -> Result<RiskPoint> {
    BayesRisk::new(sd, *prior, flavor)?.eval(estimator, tuning)
}

/// The signal model a risk is averaged under.
#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    /// Spherical prior `β₀ ∼ (0, (r²/p)I)`.
    Prior,
    Fixed(DVector<f64>),
}

pub fn risk(
    sd: &SpectralData,
    signal: &Signal,
    prior: &PriorModel,
    estimator: Estimator,
    tuning: Tuning,
    flavor: &RiskFlavor,
) -> Result<RiskPoint> {
    match signal {
        Signal::Prior => risk_bayes(sd, prior, estimator, tuning, flavor),
        Signal::Fixed(b) => risk_fixed(sd, b, prior, estimator, tuning, flavor),
    }
}

/// `E‖β̂‖²` under the prior: `(σ²/n) Σᵢ g(sᵢ)² (α + 1/sᵢ)`.
pub fn expected_l2_norm_sq(
    sd: &SpectralData,
    prior: &PriorModel,
    estimator: Estimator,
    tuning: Tuning,
) -> Result<f64> {
    let kappa = check_tuning(sd, estimator, &tuning)?;
    Ok(l2_norm_sq_unchecked(sd, prior, estimator, kappa))
}

pub(crate) fn l2_norm_sq_unchecked(
    sd: &SpectralData,
    prior: &PriorModel,
    estimator: Estimator,
    kappa: f64,
) -> f64 {
    let scale = prior.sigma2 / sd.n() as f64;
    scale
        * sd.positive_eigenvalues()
            .iter()
            .map(|&s| {
                let g = gain(estimator, kappa, s);
                g * g * (prior.alpha + 1.0 / s)
            })
            .sum::<f64>()
}

/// `E‖β̂‖²` at a fixed `β₀`: `Σᵢ gᵢ²(vᵢᵀβ₀)² + (σ²/n)Σᵢ gᵢ²/sᵢ`.
pub fn expected_l2_norm_sq_fixed(
    sd: &SpectralData,
    beta0: &DVector<f64>,
    prior: &PriorModel,
    estimator: Estimator,
    tuning: Tuning,
) -> Result<f64> {
    let kappa = check_tuning(sd, estimator, &tuning)?;
    if beta0.len() != sd.p() {
        return input(format!(
            "β₀ has length {}, expected p = {}",
            beta0.len(),
            sd.p()
        ));
    }
    let (coords, _) = sd.rotate(beta0);
    let scale = prior.sigma2 / sd.n() as f64;
    Ok(coords
        .iter()
        .zip(sd.positive_eigenvalues())
        .map(|(c, &s)| {
            let g = gain(estimator, kappa, s);
            g * g * (c * c + scale / s)
        })
        .sum())
}

/// `λ* = 1/α`, the Bayes-optimal ridge penalty for every flavor.
pub fn ridge_optimal_lambda(prior: &PriorModel) -> Tuning {
    Tuning::Lambda(1.0 / prior.alpha)
}

pub const SEARCH_LO: f64 = 1.0 / 1024.0;
pub const SEARCH_HI: f64 = 1024.0;
pub const SEARCH_POINTS: usize = 200;
pub const SEARCH_REL_TOL: f64 = 1e-6;

/// Flow time minimizing the Bayes risk.
///
/// Unimodality in `t` is not known, so this scans the 200-point log grid on
/// `[2⁻¹⁰, 2¹⁰]`, refines around the grid argmin by golden-section search on
/// `log t`, and finally keeps `t = α` if that is better.
pub fn flow_optimal_t(
    sd: &SpectralData,
    prior: &PriorModel,
    flavor: &RiskFlavor,
) -> Result<Tuning> {
    let bayes = BayesRisk::new(sd, *prior, flavor)?;
    Ok(Tuning::Time(flow_optimal_t_with(&bayes)))
}

pub(crate) fn flow_optimal_t_with(bayes: &BayesRisk<'_>) -> f64 {
    let grid = crate::log_grid(SEARCH_LO, SEARCH_HI, SEARCH_POINTS);
    let risks: Vec<f64> = grid
        .iter()
        .map(|&t| bayes.total(Estimator::Flow, t))
        .collect();
    let best = risks
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let lo = grid[best.saturating_sub(1)].ln();
    let hi = grid[(best + 1).min(grid.len() - 1)].ln();
    let (u, fu) = golden_section_min(
        |u| bayes.total(Estimator::Flow, u.exp()),
        lo,
        hi,
        SEARCH_REL_TOL,
    );
    let mut candidates = [
        (u.exp(), fu),
        (grid[best], risks[best]),
        (bayes.prior().alpha, 0.0),
    ];
    candidates[2].1 = bayes.total(Estimator::Flow, candidates[2].0);
    candidates
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(t, _)| t)
        .expect("non-empty")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Calibration {
    /// Each estimator on its own grid.
    None,
    /// Ridge evaluated at `λ = 1/t` for each flow time `t`.
    Inverse,
    /// Ridge evaluated at the `λ` matching the flow's expected ℓ2 norm.
    L2,
}

impl Calibration {
    pub fn name(self) -> &'static str {
        match self {
            Calibration::None => "none",
            Calibration::Inverse => "inverse",
            Calibration::L2 => "l2",
        }
    }
}

impl FromStr for Calibration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Calibration::None),
            "inverse" => Ok(Calibration::Inverse),
            "l2" => Ok(Calibration::L2),
            other => input(format!("unknown calibration {other:?}")),
        }
    }
}

/// Risk points over a tuning grid, with expected squared ℓ2 norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurve {
    pub estimator: Estimator,
    pub flavor: RiskKind,
    pub calibration: Calibration,
    pub points: Vec<RiskPoint>,
    pub l2_norm_sq: Vec<f64>,
    /// Large-sample limit rather than a finite-sample curve.
    #[serde(default)]
    pub limit: bool,
}

impl RiskCurve {
    pub fn totals(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.total).collect()
    }

    /// The smallest total risk on the curve.
    pub fn min_total(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.total)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Bayes risk at every grid value, in grid order.
pub fn risk_curve(
    sd: &SpectralData,
    prior: &PriorModel,
    estimator: Estimator,
    grid: &[Tuning],
    flavor: &RiskFlavor,
) -> Result<RiskCurve> {
    if grid.is_empty() {
        return input("tuning grid is empty");
    }
    let bayes = BayesRisk::new(sd, *prior, flavor)?;
    let mut points = Vec::with_capacity(grid.len());
    let mut norms = Vec::with_capacity(grid.len());
    for &t in grid {
        points.push(bayes.eval(estimator, t)?);
        norms.push(expected_l2_norm_sq(sd, prior, estimator, t)?);
    }
    Ok(RiskCurve {
        estimator,
        flavor: flavor.kind,
        calibration: Calibration::None,
        points,
        l2_norm_sq: norms,
        limit: false,
    })
}

/// Risk at a fixed `β₀` at every grid value.
pub fn risk_curve_fixed(
    sd: &SpectralData,
    beta0: &DVector<f64>,
    prior: &PriorModel,
    estimator: Estimator,
    grid: &[Tuning],
    flavor: &RiskFlavor,
) -> Result<RiskCurve> {
    if grid.is_empty() {
        return input("tuning grid is empty");
    }
    let mut points = Vec::with_capacity(grid.len());
    let mut norms = Vec::with_capacity(grid.len());
    for &t in grid {
        points.push(risk_fixed(sd, beta0, prior, estimator, t, flavor)?);
        norms.push(expected_l2_norm_sq_fixed(sd, beta0, prior, estimator, t)?);
    }
    Ok(RiskCurve {
        estimator,
        flavor: flavor.kind,
        calibration: Calibration::None,
        points,
        l2_norm_sq: norms,
        limit: false,
    })
}

pub const CURVE_HEADER: [&str; 8] = [
    "estimator",
    "flavor",
    "calibration",
    "tuning",
    "bias_sq",
    "variance",
    "total",
    "l2_norm",
];

/// Writes curves as CSV; `l2_norm` is the square root of the expected
/// squared norm. `limit_column` appends each curve's `limit` flag.
pub fn write_curves_csv<W: Write>(
    writer: W,
    curves: &[RiskCurve],
    limit_column: bool,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = CURVE_HEADER.to_vec();
    if limit_column {
        header.push("limit");
    }
    w.write_record(&header)?;
    for curve in curves {
        for (pt, norm_sq) in curve.points.iter().zip(&curve.l2_norm_sq) {
            let mut rec = vec![
                curve.estimator.name().to_string(),
                curve.flavor.name().to_string(),
                curve.calibration.name().to_string(),
                pt.tuning.value().to_string(),
                pt.bias_sq.to_string(),
                pt.variance.to_string(),
                pt.total.to_string(),
                norm_sq.sqrt().to_string(),
            ];
            if limit_column {
                rec.push(curve.limit.to_string());
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads curves written by [`write_curves_csv`], grouping consecutive rows
/// with the same (estimator, flavor, calibration, limit).
pub fn read_curves_csv<R: Read>(reader: R) -> Result<Vec<RiskCurve>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    for (i, name) in CURVE_HEADER.iter().enumerate() {
        if headers.get(i) != Some(*name) {
            return input(format!("curve CSV column {i} should be {name:?}"));
        }
    }
    let has_limit = headers.get(CURVE_HEADER.len()) == Some("limit");
    let mut curves: Vec<RiskCurve> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| {
            rec.get(i)
                .ok_or_else(|| Error::Input(format!("row {row}: missing column {i}")))
        };
        let num = |i: usize| -> Result<f64> {
            let f = field(i)?;
            f.parse()
                .map_err(|_| Error::Input(format!("row {row}: cannot parse {f:?}")))
        };
        let estimator: Estimator = field(0)?.parse()?;
        let flavor: RiskKind = field(1)?.parse()?;
        let calibration: Calibration = field(2)?.parse()?;
        let tuning = estimator.tuning(num(3)?);
        let point = RiskPoint {
            tuning,
            bias_sq: num(4)?,
            variance: num(5)?,
            total: num(6)?,
        };
        let norm = num(7)?;
        let limit = if has_limit {
            match field(8)? {
                "true" => true,
                "false" => false,
                other => {
                    return input(format!(
                        "row {row}: limit must be true or false, got {other:?}"
                    ))
                }
            }
        } else {
            false
        };
        match curves.last_mut() {
            Some(c)
                if c.estimator == estimator
                    && c.flavor == flavor
                    && c.calibration == calibration
                    && c.limit == limit =>
            {
                c.points.push(point);
                c.l2_norm_sq.push(norm * norm);
            }
            _ => curves.push(RiskCurve {
                estimator,
                flavor,
                calibration,
                points: vec![point],
                l2_norm_sq: vec![norm * norm],
                limit,
            }),
        }
    }
    if curves.is_empty() {
        return input("curve CSV has no rows");
    }
    Ok(curves)
}
