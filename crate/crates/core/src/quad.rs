//! Gaussian quadrature rules and orthogonal-polynomial utilities.
//!
//! Two rules are used throughout the crate: Gauss-Legendre on `[-1, 1]` for
//! the angular power spectrum, and Gauss-Hermite in probabilists' form for
//! expectations against the standard normal density. Nodes are found by
//! Newton iteration on the orthonormal three-term recurrences, which keeps
//! every intermediate value O(1) up to rules with several thousand nodes.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// A quadrature rule: paired nodes and weights.
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

static GL_CACHE: Lazy<Mutex<HashMap<usize, Arc<QuadRule>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));
static GH_CACHE: Lazy<Mutex<HashMap<usize, Arc<QuadRule>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

/// Gauss-Legendre rule on `[-1, 1]` with `n` nodes (cached).
pub fn gauss_legendre(n: usize) -> Result<Arc<QuadRule>> {
    if n == 0 {
        return Err(Error::argument("Gauss-Legendre rule needs n >= 1"));
    }
    if let Some(r) = GL_CACHE.lock().unwrap().get(&n) {
        return Ok(r.clone());
    }
    let rule = Arc::new(build_gauss_legendre(n)?);
    GL_CACHE.lock().unwrap().insert(n, rule.clone());
    Ok(rule)
}

fn build_gauss_legendre(n: usize) -> Result<QuadRule> {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        let mut converged = false;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence(format!(
                "Gauss-Legendre Newton iteration stalled at n = {n}"
            )));
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadRule { nodes, weights })
}

/// Gauss-Hermite rule in probabilists' normalization (cached):
/// `E[f(Z)] ~ sum_i w_i f(z_i)` for `Z ~ N(0,1)`, with `sum_i w_i = 1`.
pub fn gauss_hermite_prob(n: usize) -> Result<Arc<QuadRule>> {
    if n == 0 {
        return Err(Error::argument("Gauss-Hermite rule needs n >= 1"));
    }
    if let Some(r) = GH_CACHE.lock().unwrap().get(&n) {
        return Ok(r.clone());
    }
    let rule = Arc::new(build_gauss_hermite_prob(n)?);
    GH_CACHE.lock().unwrap().insert(n, rule.clone());
    Ok(rule)
}

fn build_gauss_hermite_prob(n: usize) -> Result<QuadRule> {
    // Golub-Welsch: nodes are the eigenvalues of the Jacobi matrix of the
    // orthonormal probabilists' Hermite recurrence (diag 0, off-diag sqrt j).
    let mut diag = vec![0.0; n];
    let mut off: Vec<f64> = (1..n).map(|j| (j as f64).sqrt()).chain([0.0]).collect();
    tql_eigenvalues(&mut diag, &mut off)
        .map_err(|e| Error::Convergence(format!("Gauss-Hermite rule at n = {n}: {e}")))?;
    diag.sort_unstable_by(f64::total_cmp);
    // Weights from the Christoffel function, w_i = 1 / sum_k he_k(x_i)^2,
    // evaluated through the scaled functions q_k = he_k exp(-x^2/4) that
    // stay O(1) across the node range.
    let weights: Vec<f64> = diag
        .iter()
        .map(|&x| {
            let q0 = (-x * x / 4.0).exp() / 1.0;
            if q0 == 0.0 {
                // the true weight underflows f64
                return 0.0;
            }
            let mut qm1 = 0.0;
            let mut q = q0;
            let mut sum_sq = q * q;
            for k in 0..n - 1 {
                let kf = k as f64;
                let next = (x * q - kf.sqrt() * qm1) / (kf + 1.0).sqrt();
                qm1 = q;
                q = next;
                sum_sq += q * q;
            }
            (-x * x / 2.0).exp() / sum_sq
        })
        .collect();
    Ok(QuadRule {
        nodes: diag,
        weights,
    })
}

/// Eigenvalues of a symmetric tridiagonal matrix by the implicit QL
/// algorithm (EISPACK tql1). `diag` is overwritten with the eigenvalues;
/// `off[i]` holds the subdiagonal entry coupling rows i and i+1.
fn tql_eigenvalues(diag: &mut [f64], off: &mut [f64]) -> std::result::Result<(), String> {
    let n = diag.len();
    if n == 0 {
        return Ok(());
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(format!("QL iteration failed to converge at row {l}"));
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}

/// Evaluate the orthonormal probabilists' Hermite functions
/// `he_q(z) = He_q(z)/sqrt(q!)` for `q = 0..=q_max`.
pub fn hermite_normalized(z: f64, q_max: usize, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if q_max == 0 {
        return;
    }
    out.push(z);
    for q in 1..q_max {
        let qf = q as f64;
        let next = (z * out[q] - qf.sqrt() * out[q - 1]) / (qf + 1.0).sqrt();
        out.push(next);
    }
}

/// Legendre polynomials `P_0(x) ..= P_lmax(x)` by upward recurrence.
pub fn legendre_all(x: f64, lmax: usize, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if lmax == 0 {
        return;
    }
    out.push(x);
    for l in 1..lmax {
        let lf = l as f64;
        let next = ((2.0 * lf + 1.0) * x * out[l] - lf * out[l - 1]) / (lf + 1.0);
        out.push(next);
    }
}

/// `sum_l coeffs[l] * P_l(x)`.
pub fn legendre_sum(coeffs: &[f64], x: f64) -> f64 {
    if coeffs.is_empty() {
        return 0.0;
    }
    let mut acc = coeffs[0];
    let mut pm1 = 1.0;
    if coeffs.len() == 1 {
        return acc;
    }
    let mut p = x;
    acc += coeffs[1] * p;
    for l in 1..coeffs.len() - 1 {
        let lf = l as f64;
        let next = ((2.0 * lf + 1.0) * x * p - lf * pm1) / (lf + 1.0);
        pm1 = p;
        p = next;
        acc += coeffs[l + 1] * p;
    }
    acc
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

static STD_NORMAL: Lazy<Normal> = Lazy::new(|| Normal::new(0.0, 1.0).unwrap());

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    STD_NORMAL.cdf(x)
}

/// Standard normal quantile function.
pub fn std_normal_quantile(p: f64) -> f64 {
    STD_NORMAL.inverse_cdf(p)
}

/// Density of N(0, sigma^2) at x, via statrs.
pub fn normal_pdf(x: f64, sigma: f64) -> f64 {
    Normal::new(0.0, sigma).unwrap().pdf(x)
}

/// `int_a^b f(x) phi(x) dx` by a mapped Gauss-Legendre rule.
pub fn gaussian_weighted_gl<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> Result<f64> {
    if !(a < b) {
        return Ok(0.0);
    }
    let rule = gauss_legendre(n)?;
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        let x = mid + half * t;
        acc += w * f(x) * std_normal_pdf(x);
    }
    Ok(acc * half)
}

/// Gaussian moments over a segment: `(int phi, int z phi, int z^2 phi)` on `[a, b]`.
/// Either bound may be infinite.
pub fn gaussian_segment_moments(a: f64, b: f64) -> (f64, f64, f64) {
    let (phi_a, cdf_a) = if a.is_finite() {
        (std_normal_pdf(a), std_normal_cdf(a))
    } else {
        (0.0, 0.0)
    };
    let (phi_b, cdf_b) = if b.is_finite() {
        (std_normal_pdf(b), std_normal_cdf(b))
    } else {
        (0.0, 1.0)
    };
    let i0 = cdf_b - cdf_a;
    let i1 = phi_a - phi_b;
    let a_phi_a = if a.is_finite() { a * phi_a } else { 0.0 };
    let b_phi_b = if b.is_finite() { b * phi_b } else { 0.0 };
    let i2 = i0 + a_phi_a - b_phi_b;
    (i0, i1, i2)
}
