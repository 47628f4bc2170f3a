//! Expected critical-point counts of depth-`L` limit fields.
//!
//! For a centered unit-variance smooth isotropic field on the d-sphere the
//! expected number of critical points of index `i` is
//!
//! `E[C_i] = 2 sqrt(pi) / (Gamma((d+1)/2) eta_L^{d/2})
//!           * E^d_GOI((1+eta_L)/2)[ prod |lambda_j| 1{O_i} ]`
//!
//! with `eta_L = kappa_L'(1)/kappa_L''(1)`. Counts above a level `u` replace
//! the GOI parameter by `(1 + eta_L - xi_L)/2` with `xi_L =
//! kappa_L'(1)^2/kappa_L''(1)`, shift every eigenvalue by `k_L x / sqrt 2`
//! with `k_L = sqrt(xi_L)`, and integrate `x` against the standard normal
//! density over `[u, inf)`. The depth trichotomy collapses these into three
//! asymptotic formulas driven by `kappa'(1)` alone.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::exec::{block_layout, block_len, block_rng, run_blocks, Domain, MomentSums};
use crate::goi::{goi_expectation_mc, GoiEstimate, GoiParams, GoiSampler, IndexSelector};
use crate::kernel::{Cri, Kernel, RegimeTag};
use crate::quad::{std_normal_cdf, std_normal_quantile};

/// Threshold value standing in for `-inf`: beyond it `1 - Phi(u) = 1` to
/// double precision.
pub const NEG_INF_THRESHOLD: f64 = -12.0;

/// Depth-`L` spectral parameters of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthSpectralParams {
    pub depth: usize,
    /// `eta_L = kappa_L'(1) / kappa_L''(1)`
    pub eta: f64,
    /// `xi_L = kappa_L'(1)^2 / kappa_L''(1)`
    pub xi: f64,
    /// `gamma_L = (kappa_L'(1)^2 - kappa_L'(1)) / kappa_L''(1)`
    pub gamma: f64,
}

/// A Kac-Rice prediction for the expected count of index-`i` critical points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CritCountPrediction {
    pub value: f64,
    pub stderr: f64,
    pub index: usize,
    pub depth: usize,
    pub threshold: Option<f64>,
}

/// Volume of the d-sphere, `2 pi^{(d+1)/2} / Gamma((d+1)/2)`.
pub fn sphere_volume(d: usize) -> f64 {
    let df = d as f64;
    2.0 * std::f64::consts::PI.powf((df + 1.0) / 2.0) / gamma((df + 1.0) / 2.0)
}

/// Scalar prefactor of the Kac-Rice expectation.
fn crit_prefactor(d: usize, eta: f64) -> f64 {
    let df = d as f64;
    2.0 * std::f64::consts::PI.sqrt() / (gamma((df + 1.0) / 2.0) * eta.powf(df / 2.0))
}

/// Spectral parameters at depth `L`, with the nondegeneracy check
/// `gamma_L < (d+2)/2`.
pub fn spectral_params(kernel: &Kernel, depth: usize, d: usize) -> Result<DepthSpectralParams> {
    let (d1, d2) = kernel.depth_derivs(depth)?;
    if !(d2 > 0.0) {
        return Err(Error::UnsupportedKernel(format!(
            "kappa_L''(1) = {d2} must be positive for the Kac-Rice formula"
        )));
    }
    let eta = d1 / d2;
    let xi = d1 * d1 / d2;
    let gamma_l = (d1 * d1 - d1) / d2;
    let bound = (d as f64 + 2.0) / 2.0;
    if gamma_l >= bound {
        return Err(Error::Degeneracy {
            gamma: gamma_l,
            bound,
        });
    }
    Ok(DepthSpectralParams {
        depth,
        eta,
        xi,
        gamma: gamma_l,
    })
}

/// `gamma_L`, asserting the nondegeneracy inequality.
pub fn check_degeneracy(kernel: &Kernel, depth: usize, d: usize) -> Result<f64> {
    Ok(spectral_params(kernel, depth, d)?.gamma)
}

/// Expected number of index-`i` critical points of the depth-`L` limit field.
pub fn expected_crit_count(
    kernel: &Kernel,
    depth: usize,
    d: usize,
    i: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<CritCountPrediction> {
    check_index(d, i)?;
    let sp = spectral_params(kernel, depth, d)?;
    let params = GoiParams::new(d, (1.0 + sp.eta) / 2.0)?;
    let est = goi_expectation_mc(&params, &IndexSelector::new(i, 0.0), mc_samples, seed)?;
    let scaled = est.scaled(crit_prefactor(d, sp.eta));
    Ok(CritCountPrediction {
        value: scaled.mean,
        stderr: scaled.stderr,
        index: i,
        depth,
        threshold: None,
    })
}

/// Expected number of index-`i` critical points above the level `u`.
///
/// The outer integral over the field value is importance-sampled from the
/// standard normal truncated to `[u, inf)`, one draw per GOI sample, so the
/// estimate carries a single standard error.
pub fn expected_crit_count_above(
    kernel: &Kernel,
    depth: usize,
    d: usize,
    i: usize,
    u: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<CritCountPrediction> {
    check_index(d, i)?;
    if u == f64::INFINITY {
        return Ok(CritCountPrediction {
            value: 0.0,
            stderr: 0.0,
            index: i,
            depth,
            threshold: Some(u),
        });
    }
    let u_eff = u.max(NEG_INF_THRESHOLD);
    let sp = spectral_params(kernel, depth, d)?;
    let c_shifted = (1.0 + sp.eta - sp.xi) / 2.0;
    let params = GoiParams::new(d, c_shifted)?;
    let k_shift = sp.xi.sqrt();
    let est = threshold_goi_integral(&params, i, k_shift, u_eff, mc_samples, seed)?;
    let scaled = est.scaled(crit_prefactor(d, sp.eta));
    Ok(CritCountPrediction {
        value: scaled.mean,
        stderr: scaled.stderr,
        index: i,
        depth,
        threshold: Some(u),
    })
}

/// `int_u^inf phi(x) E^d_GOI(c)[prod |l_j - kx/sqrt2| 1{l_i < kx/sqrt2 < l_{i+1}}] dx`
fn threshold_goi_integral(
    params: &GoiParams,
    i: usize,
    k_shift: f64,
    u: f64,
    n: usize,
    seed: u64,
) -> Result<GoiEstimate> {
    if n < 1000 {
        return Err(Error::argument("need at least 1000 Monte Carlo samples"));
    }
    let sampler = GoiSampler::new(params)?;
    let sel = IndexSelector::new(i, 0.0);
    let phi_u = std_normal_cdf(u);
    let mass = 1.0 - phi_u;
    let (n_blocks, last) = block_layout(n);
    let partials = run_blocks(n_blocks, |b| {
        let mut rng = block_rng(seed, Domain::ThresholdMc, b as u64);
        let mut buf = vec![0.0; params.d];
        let mut acc = MomentSums::default();
        for _ in 0..block_len(b, n_blocks, last) {
            let t: f64 = rand::Rng::random(&mut rng);
            let x = std_normal_quantile(phi_u + t * mass);
            let shift = k_shift * x / std::f64::consts::SQRT_2;
            acc.push(sampler.draw(&sel, shift, &mut rng, &mut buf));
        }
        acc
    });
    let mut total = MomentSums::default();
    partials.iter().for_each(|m| total.merge(m));
    Ok(GoiEstimate {
        mean: total.mean() * mass,
        stderr: total.stderr() * mass,
        n_samples: total.n,
    })
}

/// The absolute constant `A_i` of the sparse and high-disorder asymptotics.
pub fn constant_ai(d: usize, i: usize, mc_samples: usize, seed: u64) -> Result<GoiEstimate> {
    check_index(d, i)?;
    let params = GoiParams::new(d, 0.5)?;
    let est = goi_expectation_mc(&params, &IndexSelector::new(i, 0.0), mc_samples, seed)?;
    let df = d as f64;
    Ok(est.scaled(2.0 * std::f64::consts::PI.sqrt() / gamma((df + 1.0) / 2.0)))
}

/// The low-disorder limit constant `B_i`: the depth limit of the finite-`L`
/// expectation, i.e. the Kac-Rice formula evaluated at
/// `eta_inf = eta_1 (1 - kappa'(1))`.
pub fn constant_bi(
    kernel: &Kernel,
    d: usize,
    i: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<GoiEstimate> {
    check_index(d, i)?;
    let (d1, dd) = kernel.derivs_at_one();
    let d2 = dd.finite().ok_or_else(|| {
        Error::UnsupportedKernel("B_i needs a finite kappa''(1)".into())
    })?;
    if d1 >= 1.0 {
        return Err(Error::Regime(format!(
            "B_i is defined for kappa'(1) < 1, got {d1}"
        )));
    }
    let eta_inf = (d1 / d2) * (1.0 - d1);
    let params = GoiParams::new(d, (1.0 + eta_inf) / 2.0)?;
    let est = goi_expectation_mc(&params, &IndexSelector::new(i, 0.0), mc_samples, seed)?;
    Ok(est.scaled(crit_prefactor(d, eta_inf)))
}

/// The high-disorder thresholded constant `D_i(u)`, computed as the
/// numerical limit of `E[C_i(T_L, u)] / kappa'(1)^{L d / 2}` at two large
/// depths, which must agree.
pub fn constant_di(
    kernel: &Kernel,
    d: usize,
    i: usize,
    u: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<GoiEstimate> {
    check_index(d, i)?;
    let (d1, _) = kernel.derivs_at_one();
    if d1 <= 1.0 {
        return Err(Error::Regime(format!(
            "D_i is defined for kappa'(1) > 1, got {d1}"
        )));
    }
    let (l1, l2) = (40usize, 60usize);
    let ratio_at = |depth: usize, seed: u64| -> Result<GoiEstimate> {
        let pred = expected_crit_count_above(kernel, depth, d, i, u, mc_samples, seed)?;
        let scale = d1.powf(depth as f64 * d as f64 / 2.0);
        Ok(GoiEstimate {
            mean: pred.value / scale,
            stderr: pred.stderr / scale,
            n_samples: mc_samples as u64,
        })
    };
    let r1 = ratio_at(l1, seed)?;
    let r2 = ratio_at(l2, seed ^ 0x9e3779b97f4a7c15)?;
    let joint = (r1.stderr.powi(2) + r2.stderr.powi(2)).sqrt();
    let tol = 3.0 * joint + 0.02 * r1.mean.abs().max(r2.mean.abs());
    if (r1.mean - r2.mean).abs() > tol {
        return Err(Error::Convergence(format!(
            "D_i depth pair did not stabilize: {} at L={l1} vs {} at L={l2}",
            r1.mean, r2.mean
        )));
    }
    Ok(r2)
}

/// The matching line of the depth trichotomy for `E[C_i(T_L)]`.
pub fn asymptotic_crit_count(
    kernel: &Kernel,
    depth: usize,
    d: usize,
    i: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<CritCountPrediction> {
    check_index(d, i)?;
    if !matches!(kernel.cri, Cri::GreaterThanTwo) {
        return Err(Error::UnsupportedKernel(
            "asymptotic formulas require a covariance regularity index above 2".into(),
        ));
    }
    let (d1, dd) = kernel.derivs_at_one();
    let d2 = dd.finite().ok_or_else(|| {
        Error::UnsupportedKernel("asymptotics need a finite kappa''(1)".into())
    })?;
    let regime = kernel.classify(crate::kernel::DEFAULT_SPARSE_TOL);
    let df = d as f64;
    let eta1 = d1 / d2;
    let (value, stderr) = match regime.tag {
        RegimeTag::LowDisorder => {
            let b = constant_bi(kernel, d, i, mc_samples, seed)?;
            (b.mean, b.stderr)
        }
        RegimeTag::Sparse => {
            let a = constant_ai(d, i, mc_samples, seed)?;
            let scale = (depth as f64 / eta1).powf(df / 2.0);
            (a.mean * scale, a.stderr * scale)
        }
        RegimeTag::HighDisorder => {
            let a = constant_ai(d, i, mc_samples, seed)?;
            let scale =
                d1.powf(depth as f64 * df / 2.0) / (eta1 * (d1 - 1.0)).powf(df / 2.0);
            (a.mean * scale, a.stderr * scale)
        }
    };
    Ok(CritCountPrediction {
        value,
        stderr,
        index: i,
        depth,
        threshold: None,
    })
}

fn check_index(d: usize, i: usize) -> Result<()> {
    if d < 1 {
        return Err(Error::argument("sphere dimension must be >= 1"));
    }
    if i > d {
        return Err(Error::argument(format!("index {i} out of range 0..={d}")));
    }
    Ok(())
}
