//! Gaussian Orthogonally Invariant (GOI) random matrices.
//!
//! A `GOI(c)` matrix is a symmetric Gaussian `d x d` matrix with entry
//! covariance `E[M_ij M_hk] = (d_ih d_jk + d_ik d_jh)/2 + c d_ij d_hk`,
//! nondegenerate when `1 + dc > 0`. The quantities needed downstream are
//! ordered-eigenvalue expectations of the form
//! `E[prod_j |lambda_j - s| 1{lambda_i < s < lambda_{i+1}}]`.
//!
//! Two independent estimators are provided. The production path rewrites the
//! expectation as a Gaussian one: for `Z ~ N(0, I + c 1 1^T)`,
//! `E_GOI[g] = (2 pi)^{d/2} / K_d * E[g(Z) Delta(Z) 1{Z ordered}]`, and since
//! the law of `Z` is exchangeable the ordered-region indicator is replaced by
//! sorting plus a `1/d!` factor. The oracle path samples the matrix itself
//! and calls a symmetric eigensolver.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::exec::{block_layout, block_len, block_rng, run_blocks, Domain, MomentSums};

/// Parameters of a GOI ensemble: matrix dimension and covariance parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoiParams {
    pub d: usize,
    pub c: f64,
}

impl GoiParams {
    pub fn new(d: usize, c: f64) -> Result<Self> {
        if d < 1 {
            return Err(Error::argument("GOI dimension must be >= 1"));
        }
        if 1.0 + d as f64 * c <= 0.0 {
            return Err(Error::parameter(format!(
                "GOI needs 1 + d c > 0, got d = {d}, c = {c}"
            )));
        }
        Ok(GoiParams { d, c })
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoiEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: u64,
}

impl GoiEstimate {
    fn from_sums(m: &MomentSums) -> Self {
        GoiEstimate {
            mean: m.mean(),
            stderr: m.stderr(),
            n_samples: m.n,
        }
    }

    /// Scale both the mean and the standard error by an exact constant.
    pub fn scaled(&self, factor: f64) -> GoiEstimate {
        GoiEstimate {
            mean: self.mean * factor,
            stderr: self.stderr * factor.abs(),
            n_samples: self.n_samples,
        }
    }
}

/// Selects the eigenvalue-index event `lambda_i < s < lambda_{i+1}` on the
/// sorted spectrum, with `lambda_0 = -inf` and `lambda_{d+1} = +inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexSelector {
    pub i: usize,
    pub shift: f64,
}

impl IndexSelector {
    pub fn new(i: usize, shift: f64) -> Self {
        IndexSelector { i, shift }
    }

    /// True when exactly `i` of the sorted values lie below the shift.
    fn selects(&self, sorted: &[f64]) -> bool {
        let d = sorted.len();
        let below_ok = self.i == 0 || sorted[self.i - 1] < self.shift;
        let above_ok = self.i == d || sorted[self.i] > self.shift;
        below_ok && above_ok
    }
}

/// Normalization constant `K_d = 2^{d/2} prod_{j=1}^d Gamma(j/2)`.
pub fn goi_normalization(d: usize) -> Result<f64> {
    if d < 1 {
        return Err(Error::argument("dimension must be >= 1"));
    }
    let mut prod = 1.0;
    for j in 1..=d {
        prod *= gamma(j as f64 / 2.0);
    }
    Ok(2f64.powf(d as f64 / 2.0) * prod)
}

/// Joint density of the ordered eigenvalues of a GOI(c) matrix. Returns 0
/// off the ordered region.
pub fn goi_density(lambda: &[f64], params: &GoiParams) -> Result<f64> {
    let d = params.d;
    if lambda.len() != d {
        return Err(Error::argument(format!(
            "eigenvalue vector has length {}, expected {d}",
            lambda.len()
        )));
    }
    let one_dc = 1.0 + d as f64 * params.c;
    if one_dc <= 0.0 {
        return Err(Error::parameter("GOI needs 1 + d c > 0"));
    }
    if lambda.windows(2).any(|w| w[0] > w[1]) {
        return Ok(0.0);
    }
    let k_d = goi_normalization(d)?;
    let norm_sq: f64 = lambda.iter().map(|x| x * x).sum();
    let total: f64 = lambda.iter().sum();
    let mut vandermonde = 1.0;
    for h in 0..d {
        for k in (h + 1)..d {
            vandermonde *= (lambda[h] - lambda[k]).abs();
        }
    }
    let expo = -0.5 * norm_sq + params.c * total * total / (2.0 * one_dc);
    Ok(vandermonde / (k_d * one_dc.sqrt()) * expo.exp())
}

/// Draw a GOI(c) matrix as `A + sqrt(c) xi I` with `A` of GOE-type
/// covariance (diagonal variance 1, off-diagonal 1/2). Requires `c >= 0`.
pub fn sample_goi_matrix<R: Rng + ?Sized>(params: &GoiParams, rng: &mut R) -> Result<DMatrix<f64>> {
    if params.c < 0.0 {
        return Err(Error::parameter(
            "matrix construction requires c >= 0 (density-based paths accept -1/d < c < 0)",
        ));
    }
    let d = params.d;
    let normal = StandardNormal;
    let mut m = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        let z: f64 = normal.sample(rng);
        m[(i, i)] = z;
        for j in (i + 1)..d {
            let z: f64 = normal.sample(rng);
            let v = z * std::f64::consts::FRAC_1_SQRT_2;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let xi: f64 = normal.sample(rng);
    let shift = params.c.sqrt() * xi;
    for i in 0..d {
        m[(i, i)] += shift;
    }
    Ok(m)
}

/// One draw of `Z ~ N(0, I + c 1 1^T)`, sorted in place into `buf`.
/// Valid for every nondegenerate `c` via `Z = X + alpha (sum X) 1` with
/// `alpha = (sqrt(1 + dc) - 1)/d`.
#[inline]
pub(crate) fn sample_sorted_gaussian<R: Rng + ?Sized>(
    d: usize,
    alpha: f64,
    rng: &mut R,
    buf: &mut [f64],
) {
    let mut total = 0.0;
    for b in buf.iter_mut().take(d) {
        let z: f64 = StandardNormal.sample(rng);
        *b = z;
        total += z;
    }
    let add = alpha * total;
    for b in buf.iter_mut().take(d) {
        *b += add;
    }
    buf[..d].sort_unstable_by(f64::total_cmp);
}

/// `Delta(x) = prod_{i<j} |x_i - x_j|`.
#[inline]
fn vandermonde_abs(x: &[f64]) -> f64 {
    let mut v = 1.0;
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            v *= (x[i] - x[j]).abs();
        }
    }
    v
}

/// Shared constants of the change-of-variables estimator.
pub(crate) struct GoiSampler {
    pub d: usize,
    pub alpha: f64,
    /// `(2 pi)^{d/2} / (K_d d!)`
    pub weight: f64,
}

impl GoiSampler {
    pub fn new(params: &GoiParams) -> Result<Self> {
        let d = params.d;
        let one_dc = 1.0 + d as f64 * params.c;
        if one_dc <= 0.0 {
            return Err(Error::parameter("GOI needs 1 + d c > 0"));
        }
        let alpha = (one_dc.sqrt() - 1.0) / d as f64;
        let mut fact = 1.0;
        for j in 1..=d {
            fact *= j as f64;
        }
        let weight =
            (2.0 * std::f64::consts::PI).powf(d as f64 / 2.0) / (goi_normalization(d)? * fact);
        Ok(GoiSampler { d, alpha, weight })
    }

    /// One sample of the integrand for
    /// `E[prod |lambda_j - s| 1{lambda_i < s < lambda_{i+1}}]`.
    #[inline]
    pub fn draw<R: Rng + ?Sized>(
        &self,
        sel: &IndexSelector,
        shift: f64,
        rng: &mut R,
        buf: &mut [f64],
    ) -> f64 {
        sample_sorted_gaussian(self.d, self.alpha, rng, buf);
        let z = &buf[..self.d];
        let shifted_ok = {
            let below_ok = sel.i == 0 || z[sel.i - 1] < shift;
            let above_ok = sel.i == self.d || z[sel.i] > shift;
            below_ok && above_ok
        };
        if !shifted_ok {
            return 0.0;
        }
        let mut prod = 1.0;
        for &v in z {
            prod *= (v - shift).abs();
        }
        self.weight * prod * vandermonde_abs(z)
    }
}

/// Estimate `E^d_GOI(c)[prod_j |lambda_j - s| 1{lambda_i < s < lambda_{i+1}}]`
/// through the Gaussian change of variables.
pub fn goi_expectation_mc(
    params: &GoiParams,
    sel: &IndexSelector,
    n: usize,
    seed: u64,
) -> Result<GoiEstimate> {
    if n < 1000 {
        return Err(Error::argument("need at least 1000 Monte Carlo samples"));
    }
    if sel.i > params.d {
        return Err(Error::argument(format!(
            "index {} out of range 0..={}",
            sel.i, params.d
        )));
    }
    let sampler = GoiSampler::new(params)?;
    let (n_blocks, last) = block_layout(n);
    let partials = run_blocks(n_blocks, |b| {
        let mut rng = block_rng(seed, Domain::GoiMc, b as u64);
        let mut buf = vec![0.0; params.d];
        let mut acc = MomentSums::default();
        for _ in 0..block_len(b, n_blocks, last) {
            acc.push(sampler.draw(sel, sel.shift, &mut rng, &mut buf));
        }
        acc
    });
    let mut total = MomentSums::default();
    partials.iter().for_each(|m| total.merge(m));
    Ok(GoiEstimate::from_sums(&total))
}

/// Independent verification path: estimate the same expectation by sampling
/// GOI matrices and solving the symmetric eigenproblem.
pub fn goi_expectation_oracle(
    params: &GoiParams,
    sel: &IndexSelector,
    n: usize,
    seed: u64,
) -> Result<GoiEstimate> {
    if n < 1000 {
        return Err(Error::argument("need at least 1000 Monte Carlo samples"));
    }
    if sel.i > params.d {
        return Err(Error::argument(format!(
            "index {} out of range 0..={}",
            sel.i, params.d
        )));
    }
    if params.c < 0.0 {
        return Err(Error::parameter("oracle requires c >= 0"));
    }
    GoiParams::new(params.d, params.c)?;
    let (n_blocks, last) = block_layout(n);
    let partials: Vec<std::result::Result<MomentSums, String>> = run_blocks(n_blocks, |b| {
        let mut rng = block_rng(seed, Domain::GoiOracle, b as u64);
        let mut acc = MomentSums::default();
        for _ in 0..block_len(b, n_blocks, last) {
            let m = sample_goi_matrix(params, &mut rng).map_err(|e| e.to_string())?;
            let mut eig: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
            if eig.iter().any(|v| !v.is_finite()) {
                return Err("eigensolver returned non-finite eigenvalues".to_string());
            }
            eig.sort_unstable_by(f64::total_cmp);
            let value = if sel.selects(&eig) {
                eig.iter().map(|&l| (l - sel.shift).abs()).product()
            } else {
                0.0
            };
            acc.push(value);
        }
        Ok(acc)
    });
    let mut total = MomentSums::default();
    for p in partials {
        total.merge(&p.map_err(Error::Numeric)?);
    }
    Ok(GoiEstimate::from_sums(&total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normalization_constants() {
        use std::f64::consts::PI;
        assert_abs_diff_eq!(goi_normalization(1).unwrap(), (2.0 * PI).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(goi_normalization(2).unwrap(), 2.0 * PI.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            goi_normalization(3).unwrap(),
            std::f64::consts::SQRT_2 * PI,
            epsilon = 1e-12
        );
        assert!(goi_normalization(0).is_err());
    }

    #[test]
    fn density_one_dimensional_cases() {
        use std::f64::consts::PI;
        let p = GoiParams::new(1, 0.0).unwrap();
        assert_abs_diff_eq!(
            goi_density(&[0.0], &p).unwrap(),
            1.0 / (2.0 * PI).sqrt(),
            epsilon = 1e-12
        );
        // c = 1/2 collapses to N(0, 3/2)
        let p = GoiParams::new(1, 0.5).unwrap();
        for x in [-1.0f64, 0.3, 2.0] {
            let expect = (-x * x / 3.0).exp() / (2.0 * PI * 1.5).sqrt();
            assert_abs_diff_eq!(goi_density(&[x], &p).unwrap(), expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn density_vanishes_off_ordered_region() {
        let p = GoiParams::new(3, 0.5).unwrap();
        assert_eq!(goi_density(&[1.0, 0.0, 2.0], &p).unwrap(), 0.0);
        assert!(goi_density(&[0.0, 1.0], &p).is_err());
        assert!(GoiParams::new(2, -0.6).is_err());
    }

    #[test]
    fn sampled_matrix_is_symmetric() {
        let p = GoiParams::new(4, 1.5).unwrap();
        let mut rng = block_rng(3, Domain::GoiOracle, 0);
        let m = sample_goi_matrix(&p, &mut rng).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m[(i, j)], m[(j, i)]);
            }
        }
        assert!(sample_goi_matrix(&GoiParams { d: 2, c: -0.1 }, &mut rng).is_err());
    }

    #[test]
    fn matrix_entry_covariances() {
        // 2x10^5 samples keeps this fast; acceptance reruns at 10^6.
        let n = 200_000;
        for c in [0.0, 0.5] {
            let p = GoiParams::new(2, c).unwrap();
            let mut rng = block_rng(11, Domain::GoiOracle, 7);
            let (mut v11, mut v12, mut c1122) = (0.0, 0.0, 0.0);
            for _ in 0..n {
                let m = sample_goi_matrix(&p, &mut rng).unwrap();
                v11 += m[(0, 0)] * m[(0, 0)];
                v12 += m[(0, 1)] * m[(0, 1)];
                c1122 += m[(0, 0)] * m[(1, 1)];
            }
            let nf = n as f64;
            assert_abs_diff_eq!(v11 / nf, 1.0 + c, epsilon = 0.03);
            assert_abs_diff_eq!(v12 / nf, 0.5, epsilon = 0.02);
            assert_abs_diff_eq!(c1122 / nf, c, epsilon = 0.03);
        }
    }

    #[test]
    fn one_dimensional_closed_form() {
        // E[|l| 1{l > 0}] under N(0, 1 + c) = sqrt((1+c)/(2 pi)), c = 1/2
        let expect = (1.5 / (2.0 * std::f64::consts::PI)).sqrt();
        let p = GoiParams::new(1, 0.5).unwrap();
        let sel = IndexSelector::new(0, 0.0);
        let mc = goi_expectation_mc(&p, &sel, 400_000, 42).unwrap();
        assert!((mc.mean - expect).abs() < 3.0 * mc.stderr, "{} vs {}", mc.mean, expect);
        let or = goi_expectation_oracle(&p, &sel, 200_000, 43).unwrap();
        assert!((or.mean - expect).abs() < 3.0 * or.stderr);
    }

    #[test]
    fn estimators_agree_cross_check() {
        let p = GoiParams::new(2, 0.75).unwrap();
        let sel = IndexSelector::new(1, 0.0);
        let a = goi_expectation_mc(&p, &sel, 300_000, 1).unwrap();
        let b = goi_expectation_oracle(&p, &sel, 150_000, 2).unwrap();
        let joint = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() <= 3.0 * joint, "{} vs {}", a.mean, b.mean);
    }

    #[test]
    fn index_duality_at_zero_shift() {
        let p = GoiParams::new(2, 0.5).unwrap();
        let a = goi_expectation_mc(&p, &IndexSelector::new(0, 0.0), 300_000, 5).unwrap();
        let b = goi_expectation_mc(&p, &IndexSelector::new(2, 0.0), 300_000, 6).unwrap();
        let joint = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() <= 3.0 * joint);
    }

    #[test]
    fn two_by_two_determinant_identity() {
        // E_GOI(c)[lambda_1 lambda_2] = c - 1/2, so the signed sum over the
        // index events recovers it exactly.
        let c = 0.8;
        let p = GoiParams::new(2, c).unwrap();
        let n = 400_000;
        let e0 = goi_expectation_mc(&p, &IndexSelector::new(0, 0.0), n, 9).unwrap();
        let e1 = goi_expectation_mc(&p, &IndexSelector::new(1, 0.0), n, 9).unwrap();
        let e2 = goi_expectation_mc(&p, &IndexSelector::new(2, 0.0), n, 9).unwrap();
        let det = e0.mean - e1.mean + e2.mean;
        let joint = (e0.stderr.powi(2) + e1.stderr.powi(2) + e2.stderr.powi(2)).sqrt();
        assert!((det - (c - 0.5)).abs() <= 3.0 * joint, "{} vs {}", det, c - 0.5);
    }

    #[test]
    fn determinism_same_seed_same_estimate() {
        let p = GoiParams::new(3, 0.5).unwrap();
        let sel = IndexSelector::new(1, 0.2);
        let a = goi_expectation_mc(&p, &sel, 50_000, 77).unwrap();
        let b = goi_expectation_mc(&p, &sel, 50_000, 77).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn precondition_errors() {
        let p = GoiParams::new(2, 0.5).unwrap();
        assert!(goi_expectation_mc(&p, &IndexSelector::new(0, 0.0), 10, 0).is_err());
        assert!(goi_expectation_mc(&p, &IndexSelector::new(3, 0.0), 2000, 0).is_err());
        assert!(goi_expectation_oracle(&p, &IndexSelector::new(3, 0.0), 2000, 0).is_err());
    }
}
