//! Eigendecomposition of the sample covariance `XᵀX/n` and matrix functions
//! routed through it.
//!
//! The decomposition always works on the smaller Gram matrix (`XᵀX/n` when
//! `n ≥ p`, `XXᵀ/n` otherwise), and only the eigenvectors of strictly positive
//! eigenvalues are stored. The null space of `XᵀX` is carried implicitly:
//! for a scalar function `f`,
//!
//! ```text
//! f(Σ̂) = f(0)·(I − V_r V_rᵀ) + V_r diag(f(s)) V_rᵀ
//! ```
//!
//! which is exact and avoids building a basis for a `p − n` dimensional null
//! space in the high-dimensional case.

use std::io::Read;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{input, Error, Result};

/// An `n × p` design matrix, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    entries: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return input(format!(
                "design matrix must be non-empty, got {}×{}",
                entries.nrows(),
                entries.ncols()
            ));
        }
        if let Some((k, v)) = entries.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let n = entries.nrows();
            return input(format!(
                "design entry ({}, {}) is not finite: {v}",
                k % n,
                k / n
            ));
        }
        Ok(Self { entries })
    }

    /// Builds a design from row-major data.
    pub fn from_row_slice(n: usize, p: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * p {
            return input(format!(
                "expected {} entries for {n}×{p}, got {}",
                n * p,
                data.len()
            ));
        }
        Self::new(DMatrix::from_row_slice(n, p, data))
    }

    /// Reads a numeric CSV, one observation per row.
    pub fn read_csv<R: Read>(reader: R, has_header: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut data = Vec::new();
        let mut p = None;
        let mut n = 0;
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            match p {
                None => p = Some(record.len()),
                Some(width) if width != record.len() => {
                    return input(format!(
                        "row {row} has {} fields, expected {width}",
                        record.len()
                    ))
                }
                _ => {}
            }
            for (col, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Input(format!("row {row}, column {col}: cannot parse {field:?}"))
                })?;
                data.push(v);
            }
            n += 1;
        }
        match p {
            Some(p) if n > 0 => Self::from_row_slice(n, p, &data),
            _ => input("design CSV contains no data rows"),
        }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn p(&self) -> usize {
        self.entries.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }
}

/// Spectral data of `Σ̂ = XᵀX/n`, with `X = √n · U S^{1/2} Vᵀ`.
#[derive(Debug, Clone)]
pub struct SpectralData {
    /// All `p` eigenvalues, descending; entries past `rank` are exactly zero.
    eigenvalues: Vec<f64>,
    /// `p × rank`, orthonormal eigenvectors of the positive eigenvalues.
    right: DMatrix<f64>,
    /// `n × rank`, matching left singular vectors of `X`.
    left: DMatrix<f64>,
    n: usize,
    p: usize,
}

/// Eigenvalues below `p · ε_machine · s_max` are treated as exact zeros.
pub fn rank_threshold(p: usize, s_max: f64) -> f64 {
    p as f64 * f64::EPSILON * s_max
}

/// Eigen-pairs sorted descending (stable for ties) with clamped round-off.
fn sorted_eigen(gram: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// Flips column signs so the largest-magnitude entry of each column is positive.
fn canonical_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
}

/// Decomposes `XᵀX/n`.
pub fn decompose(x: &DesignMatrix) -> SpectralData {
    let (n, p) = (x.n(), x.p());
    let xm = x.matrix();
    let nf = n as f64;

    let (values, vectors) = if n >= p {
        sorted_eigen(xm.tr_mul(xm) / nf)
    } else {
        sorted_eigen(xm * xm.transpose() / nf)
    };
    let s_max = values.first().copied().unwrap_or(0.0).max(0.0);
    let threshold = rank_threshold(p, s_max);
    let rank = values
        .iter()
        .take_while(|&&s| s > threshold && s > 0.0)
        .count();

    let mut eigenvalues = vec![0.0; p];
    eigenvalues[..rank].copy_from_slice(&values[..rank]);

    let scale = DVector::from_iterator(rank, values[..rank].iter().map(|s| 1.0 / (nf * s).sqrt()));
    let mut right = if n >= p {
        vectors.columns(0, rank).into_owned()
    } else {
        let mut right = xm.tr_mul(&vectors.columns(0, rank));
        for (mut col, sc) in right.column_iter_mut().zip(scale.iter()) {
            col *= *sc;
        }
        right
    };
    canonical_signs(&mut right);
    // u_i = X v_i / √(n s_i)
    let mut left = xm * &right;
    for (mut col, sc) in left.column_iter_mut().zip(scale.iter()) {
        col *= *sc;
    }

    SpectralData {
        eigenvalues,
        right,
        left,
        n,
        p,
    }
}

impl SpectralData {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// All `p` eigenvalues, descending, zero-padded past the rank.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// The strictly positive eigenvalues.
    pub fn positive_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues[..self.rank()]
    }

    pub fn rank(&self) -> usize {
        self.right.ncols()
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.rank() < self.p
    }

    pub fn s_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Eigenvectors of the positive eigenvalues (`p × rank`).
    pub fn right_vectors(&self) -> &DMatrix<f64> {
        &self.right
    }

    /// Left singular vectors of `X` for the positive eigenvalues (`n × rank`).
    pub fn left_vectors(&self) -> &DMatrix<f64> {
        &self.left
    }

    /// A full `p × p` orthonormal eigenbasis, completing the stored range
    /// vectors with an orthonormal basis of the null space.
    pub fn full_right_vectors(&self) -> DMatrix<f64> {
        let r = self.rank();
        if r == self.p {
            return self.right.clone();
        }
        let mut basis = self.right.clone().resize_horizontally(self.p, 0.0);
        let mut filled = r;
        for e in 0..self.p {
            if filled == self.p {
                break;
            }
            let mut v = DVector::zeros(self.p);
            v[e] = 1.0;
            // Two passes of Gram-Schmidt keep the completion orthogonal to
            // working precision.
            for _ in 0..2 {
                for j in 0..filled {
                    let c = basis.column(j).dot(&v);
                    v.axpy(-c, &basis.column(j), 1.0);
                }
            }
            let norm = v.norm();
            if norm > 1e-8 {
                basis.set_column(filled, &(v / norm));
                filled += 1;
            }
        }
        basis
    }

    /// `Σ̂ = V diag(s) Vᵀ` rebuilt from the decomposition.
    pub fn sample_covariance(&self) -> DMatrix<f64> {
        self.spectral_matrix(self.positive_eigenvalues(), 0.0)
    }

    /// `V diag(range) Vᵀ + null · (I − V Vᵀ)`, where `range` holds one value
    /// per positive eigenvalue.
    pub(crate) fn spectral_matrix(&self, range: &[f64], null: f64) -> DMatrix<f64> {
        debug_assert_eq!(range.len(), self.rank());
        let shifted: Vec<f64> = if self.is_rank_deficient() {
            range.iter().map(|v| v - null).collect()
        } else {
            range.to_vec()
        };
        let mut scaled = self.right.clone();
        for (mut col, v) in scaled.column_iter_mut().zip(shifted.iter()) {
            col *= *v;
        }
        let mut out = scaled * self.right.transpose();
        if self.is_rank_deficient() && null != 0.0 {
            for i in 0..self.p {
                out[(i, i)] += null;
            }
        }
        // Symmetrize away round-off.
        let t = out.transpose();
        (out + t) * 0.5
    }

    /// `f(Σ̂) x` without forming `f(Σ̂)`.
    pub(crate) fn spectral_apply(
        &self,
        range: &[f64],
        null: f64,
        x: &DVector<f64>,
    ) -> DVector<f64> {
        let coords = self.right.tr_mul(x);
        let shifted = DVector::from_iterator(
            self.rank(),
            coords.iter().zip(range).map(|(c, v)| c * (v - null)),
        );
        let mut out = &self.right * shifted;
        if null != 0.0 {
            out.axpy(null, x, 1.0);
        }
        out
    }

    /// `Vᵀx` in the range, plus the squared norm of the null-space component.
    pub(crate) fn rotate(&self, x: &DVector<f64>) -> (DVector<f64>, f64) {
        let coords = self.right.tr_mul(x);
        let null_sq = (x.norm_squared() - coords.norm_squared()).max(0.0);
        (coords, null_sq)
    }

    /// `Uᵀy` for a response of length `n`.
    pub(crate) fn left_project(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.n {
            return input(format!(
                "response has length {}, expected n = {}",
                y.len(),
                self.n
            ));
        }
        Ok(self.left.tr_mul(y))
    }

    /// `V diag(h) Uᵀ y`, the shape shared by every spectral estimator.
    pub(crate) fn spectral_estimate(&self, h: &[f64], y: &DVector<f64>) -> Result<DVector<f64>> {
        let uy = self.left_project(y)?;
        let coeffs = DVector::from_iterator(self.rank(), uy.iter().zip(h).map(|(a, b)| a * b));
        Ok(&self.right * coeffs)
    }

    /// `‖Xᵀy‖₂`.
    pub fn xty_norm(&self, y: &DVector<f64>) -> Result<f64> {
        let uy = self.left_project(y)?;
        let nf = self.n as f64;
        Ok(uy
            .iter()
            .zip(self.positive_eigenvalues())
            .map(|(u, s)| nf * s * u * u)
            .sum::<f64>()
            .sqrt())
    }

    /// `V_r V_rᵀ x`, the projection onto the row space of `X`.
    pub fn project_row_space(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.right * self.right.tr_mul(x)
    }
}

/// `V diag(f(sᵢ)) Vᵀ` for a scalar function `f`.
pub fn apply_spectral(sd: &SpectralData, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    let mut range = Vec::with_capacity(sd.rank());
    for &s in sd.positive_eigenvalues() {
        let v = f(s);
        if !v.is_finite() {
            return Err(Error::Numeric(format!("f({s}) = {v} is not finite")));
        }
        range.push(v);
    }
    let null = if sd.is_rank_deficient() {
        let v = f(0.0);
        if !v.is_finite() {
            return Err(Error::Numeric(format!(
                "f(0) = {v} is not finite at the zero eigenvalue"
            )));
        }
        v
    } else {
        0.0
    };
    Ok(sd.spectral_matrix(&range, null))
}

/// `exp(−t s)` with `exp(−∞ · 0) = 1`.
pub(crate) fn exp_neg(t: f64, s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        (-t * s).exp()
    }
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return input(format!("flow time must be ≥ 0, got {t}"));
    }
    Ok(())
}

/// `exp(−tΣ̂)`. `t = ∞` gives the projection onto the null space of `Σ̂`.
pub fn matrix_exp_neg(sd: &SpectralData, t: f64) -> Result<DMatrix<f64>> {
    check_time(t)?;
    let range: Vec<f64> = sd
        .positive_eigenvalues()
        .iter()
        .map(|&s| exp_neg(t, s))
        .collect();
    Ok(sd.spectral_matrix(&range, 1.0))
}

/// Moore-Penrose pseudoinverse of `Σ̂`.
pub fn pseudoinverse(sd: &SpectralData) -> DMatrix<f64> {
    let range: Vec<f64> = sd.positive_eigenvalues().iter().map(|s| 1.0 / s).collect();
    sd.spectral_matrix(&range, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_design(n: usize, p: usize, seed: u64) -> DesignMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * p)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        DesignMatrix::from_row_slice(n, p, &data).unwrap()
    }

    fn sample_cov(x: &DesignMatrix) -> DMatrix<f64> {
        x.matrix().transpose() * x.matrix() / x.n() as f64
    }

    fn rel_frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    /// Truncated power series for `exp(−tA)`.
    fn exp_series(a: &DMatrix<f64>, t: f64, terms: usize) -> DMatrix<f64> {
        let p = a.nrows();
        let mut term = DMatrix::identity(p, p);
        let mut sum = term.clone();
        for k in 1..terms {
            term = &term * a * (-t / k as f64);
            sum += &term;
        }
        sum
    }

    #[test]
    fn identity_design() {
        let x = DesignMatrix::new(DMatrix::identity(2, 2) * 2f64.sqrt()).unwrap();
        let sd = decompose(&x);
        assert!((sd.eigenvalues()[0] - 1.0).abs() < 1e-14);
        assert!((sd.eigenvalues()[1] - 1.0).abs() < 1e-14);
        assert!(!sd.is_rank_deficient());
        let v = sd.right_vectors();
        assert!(rel_frob(&(v.transpose() * v), &DMatrix::identity(2, 2)) < 1e-12);
    }

    #[test]
    fn singular_design_is_flagged() {
        let x = DesignMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let sd = decompose(&x);
        assert_eq!(sd.eigenvalues(), &[0.5, 0.0]);
        assert!(sd.is_rank_deficient());
        assert_eq!(sd.rank(), 1);
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(matches!(
            DesignMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]),
            Err(Error::Input(_))
        ));
        assert!(DesignMatrix::new(DMatrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn reconstruction_both_shapes() {
        for (n, p, seed) in [(5, 3, 1), (3, 5, 2), (40, 40, 3), (20, 50, 4)] {
            let x = random_design(n, p, seed);
            let sd = decompose(&x);
            let cov = sample_cov(&x);
            assert!(rel_frob(&sd.sample_covariance(), &cov) < 1e-10, "{n}×{p}");
            let v = sd.full_right_vectors();
            assert!((v.transpose() * &v - DMatrix::identity(p, p)).norm() < 1e-10);
            let trace: f64 = sd.eigenvalues().iter().sum();
            assert!((trace - cov.trace()).abs() <= 1e-10 * cov.trace());
            assert!(sd.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
            // X = √n U S^{1/2} Vᵀ
            let mut us = sd.left_vectors().clone();
            for (mut c, s) in us.column_iter_mut().zip(sd.positive_eigenvalues()) {
                c *= (n as f64 * s).sqrt();
            }
            let rebuilt = us * sd.right_vectors().transpose();
            assert!(rel_frob(&rebuilt, x.matrix()) < 1e-10);
        }
    }

    #[test]
    fn apply_spectral_basics() {
        let x = random_design(6, 4, 7);
        let sd = decompose(&x);
        let id = apply_spectral(&sd, |_| 1.0).unwrap();
        assert!((id - DMatrix::identity(4, 4)).norm() < 1e-12);
        let cov = apply_spectral(&sd, |s| s).unwrap();
        assert!(rel_frob(&cov, &sample_cov(&x)) < 1e-12);
        let err = apply_spectral(&sd, |s| 1.0 / (s - sd.s_max())).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn exp_matches_power_series() {
        let x = random_design(2, 2, 11);
        let sd = decompose(&x);
        let cov = sample_cov(&x);
        for t in [1.0, 0.7] {
            let via_eig = apply_spectral(&sd, |s| (-t * s).exp()).unwrap();
            let series = exp_series(&cov, t, 20);
            assert!((&via_eig - &series).norm() < 1e-10);
            assert!((matrix_exp_neg(&sd, t).unwrap() - series).norm() < 1e-10);
        }
        let x = random_design(5, 3, 12);
        let sd = decompose(&x);
        let series = exp_series(&sample_cov(&x), 0.7, 30);
        assert!((matrix_exp_neg(&sd, 0.7).unwrap() - series).norm() < 1e-10);
    }

    #[test]
    fn exp_edge_cases() {
        let x = DesignMatrix::new(DMatrix::identity(2, 2) * 2f64.sqrt()).unwrap();
        let sd = decompose(&x);
        assert!((matrix_exp_neg(&sd, 0.0).unwrap() - DMatrix::identity(2, 2)).norm() < 1e-15);
        let e1 = matrix_exp_neg(&sd, 1.0).unwrap();
        assert!((e1 - DMatrix::identity(2, 2) * (-1f64).exp()).norm() < 1e-15);
        assert!(matches!(matrix_exp_neg(&sd, -0.1), Err(Error::Input(_))));
        // t = ∞ on a singular design leaves the null-space projector.
        let x = DesignMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let e = matrix_exp_neg(&decompose(&x), f64::INFINITY).unwrap();
        assert!((e - DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])).norm() < 1e-15);
    }

    #[test]
    fn pseudoinverse_cases() {
        let x = DesignMatrix::new(DMatrix::identity(3, 3) * 3f64.sqrt()).unwrap();
        assert!((pseudoinverse(&decompose(&x)) - DMatrix::identity(3, 3)).norm() < 1e-14);

        // Σ̂ = diag(2, 0) from X = √2 · diag(√2, 0).
        let x = DesignMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]).unwrap();
        let pinv = pseudoinverse(&decompose(&x));
        assert!((pinv - DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0])).norm() < 1e-14);

        // Rank-2 3×3 covariance from a 2×3 design.
        let x = random_design(2, 3, 5);
        let sd = decompose(&x);
        assert_eq!(sd.rank(), 2);
        let cov = sample_cov(&x);
        let pinv = pseudoinverse(&sd);
        assert!(rel_frob(&(&cov * &pinv * &cov), &cov) < 1e-10);
        assert!(rel_frob(&(&pinv * &cov * &pinv), &pinv) < 1e-10);
    }

    #[test]
    fn semigroup_and_product_rules() {
        for (n, p, seed) in [(8, 5, 21), (5, 8, 22)] {
            let sd = decompose(&random_design(n, p, seed));
            let a = matrix_exp_neg(&sd, 0.3).unwrap();
            let b = matrix_exp_neg(&sd, 1.1).unwrap();
            let ab = matrix_exp_neg(&sd, 1.4).unwrap();
            assert!((a * b - ab).norm() < 1e-10);

            let f = apply_spectral(&sd, |s| 1.0 + s * s).unwrap();
            let g = apply_spectral(&sd, |s| (-s).exp() + 0.5).unwrap();
            let fg = apply_spectral(&sd, |s| (1.0 + s * s) * ((-s).exp() + 0.5)).unwrap();
            assert!((f * g - fg).norm() < 1e-10);
        }
    }

    #[test]
    fn spectral_apply_matches_matrix() {
        let sd = decompose(&random_design(4, 7, 31));
        let x = DVector::from_iterator(7, (0..7).map(|i| i as f64 - 3.0));
        let range: Vec<f64> = sd
            .positive_eigenvalues()
            .iter()
            .map(|s| (-s).exp())
            .collect();
        let m = sd.spectral_matrix(&range, 1.0);
        assert!((m * &x - sd.spectral_apply(&range, 1.0, &x)).norm() < 1e-12);
    }

    #[test]
    fn reads_csv() {
        let text = "a,b\n1,2\n3,4\n5,6\n";
        let x = DesignMatrix::read_csv(text.as_bytes(), true).unwrap();
        assert_eq!((x.n(), x.p()), (3, 2));
        assert_eq!(x.matrix()[(2, 1)], 6.0);
        assert!(DesignMatrix::read_csv("a,b\n".as_bytes(), true).is_err());
        assert!(DesignMatrix::read_csv("1,2\n3\n".as_bytes(), false).is_err());
        assert!(DesignMatrix::read_csv("1,x\n".as_bytes(), false).is_err());
    }
}
