//! Covariance kernels of random neural networks on the sphere.
//!
//! An [`Activation`] generates a [`Kernel`]: the covariance map
//! `kappa(u) = Lambda_W E[sigma(Z1) sigma(u Z1 + sqrt(1-u^2) Z2)] + Lambda_b`
//! of one output component of an infinite-width one-layer network, normalized
//! so that `kappa(1) = 1`. Depth-`L` networks have the `L`-fold composition
//! `kappa_L`. The kernel carries its Hermite expansion
//! `kappa(u) = sum_q b_q u^q` with `b_q >= 0, sum b_q = 1`, the derivatives
//! `kappa'(1)` and `kappa''(1)` that drive all critical-point asymptotics,
//! and a covariance-regularity annotation deciding whether the Kac-Rice
//! machinery applies at all.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{
    gauss_hermite_prob, gauss_legendre, gaussian_segment_moments, gaussian_weighted_gl,
    hermite_normalized, legendre_all,
};

const DEFAULT_Q: usize = 200;
const MAX_Q: usize = 6_400;
const TAIL_TOL: f64 = 1e-10;
const GAUSS_TAIL_CUT: f64 = 12.0;
pub const DEFAULT_SPARSE_TOL: f64 = 1e-9;

/// A tabulated activation: sorted sample points with linear interpolation
/// inside the table and linear extrapolation of the end segments outside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl NumericTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::argument("numeric table needs at least 2 points"));
        }
        let mut pts = points;
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pts.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::argument("numeric table has duplicate abscissas"));
        }
        if pts.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(Error::argument("numeric table has non-finite entries"));
        }
        let (xs, ys) = pts.into_iter().unzip();
        Ok(NumericTable { xs, ys })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        // index of segment used for interpolation/extrapolation
        let k = match self.xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        };
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Segment slopes and intercepts, extended to the two infinite tails.
    /// Returns breakpoints `[-inf, x_0, .., x_{n-1}, +inf]` and per-interval
    /// `(intercept, slope)`.
    fn segments(&self) -> (Vec<f64>, Vec<(f64, f64)>) {
        let n = self.xs.len();
        let mut bounds = Vec::with_capacity(n + 2);
        bounds.push(f64::NEG_INFINITY);
        bounds.extend_from_slice(&self.xs);
        bounds.push(f64::INFINITY);
        let mut lines = Vec::with_capacity(n + 1);
        let line = |k: usize| {
            let slope = (self.ys[k + 1] - self.ys[k]) / (self.xs[k + 1] - self.xs[k]);
            let intercept = self.ys[k] - slope * self.xs[k];
            (intercept, slope)
        };
        lines.push(line(0)); // left tail extends first segment
        for k in 0..n - 1 {
            lines.push(line(k));
        }
        lines.push(line(n - 2)); // right tail extends last segment
        (bounds, lines)
    }
}

/// Supported activation function families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActivationKind {
    /// `sigma_a(x) = exp(-a^2 x^2 / 2)`, `a > 0`.
    GaussianRbf { a: f64 },
    Relu,
    Tanh,
    NumericTable(NumericTable),
}

/// An activation function together with the bias variance `Lambda_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    pub kind: ActivationKind,
    pub lambda_b: f64,
}

impl Activation {
    pub fn gaussian_rbf(a: f64, lambda_b: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::argument("GaussianRbf parameter a must be > 0"));
        }
        Self::validated(ActivationKind::GaussianRbf { a }, lambda_b)
    }

    pub fn relu(lambda_b: f64) -> Result<Self> {
        Self::validated(ActivationKind::Relu, lambda_b)
    }

    pub fn tanh(lambda_b: f64) -> Result<Self> {
        Self::validated(ActivationKind::Tanh, lambda_b)
    }

    pub fn numeric_table(points: Vec<(f64, f64)>, lambda_b: f64) -> Result<Self> {
        let table = NumericTable::new(points)?;
        Self::validated(ActivationKind::NumericTable(table), lambda_b)
    }

    fn validated(kind: ActivationKind, lambda_b: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&lambda_b) {
            return Err(Error::argument(format!(
                "lambda_b must lie in [0, 1), got {lambda_b}"
            )));
        }
        let act = Activation { kind, lambda_b };
        act.check_square_integrable()?;
        Ok(act)
    }

    /// Pointwise evaluation of `sigma`.
    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            ActivationKind::GaussianRbf { a } => (-0.5 * a * a * x * x).exp(),
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::NumericTable(t) => t.eval(x),
        }
    }

    /// Kink locations of `sigma` (points where it is not differentiable),
    /// used to split quadrature domains.
    pub fn kinks(&self) -> Vec<f64> {
        match &self.kind {
            ActivationKind::Relu => vec![0.0],
            ActivationKind::NumericTable(t) => t.xs.clone(),
            _ => Vec::new(),
        }
    }

    /// `E[sigma(Z)^2]` for `Z ~ N(0,1)`.
    pub fn sigma_sq_mean(&self) -> Result<f64> {
        match &self.kind {
            ActivationKind::GaussianRbf { a } => Ok(1.0 / (1.0 + 2.0 * a * a).sqrt()),
            ActivationKind::Relu => Ok(0.5),
            ActivationKind::Tanh => {
                expectation_with_doubling(|z| {
                    let t = z.tanh();
                    t * t
                })
            }
            ActivationKind::NumericTable(t) => {
                let (bounds, lines) = t.segments();
                let mut acc = 0.0;
                for (k, &(c, m)) in lines.iter().enumerate() {
                    let (i0, i1, i2) = gaussian_segment_moments(bounds[k], bounds[k + 1]);
                    acc += c * c * i0 + 2.0 * c * m * i1 + m * m * i2;
                }
                Ok(acc)
            }
        }
    }

    /// Square-integrability check against the Gaussian weight. Closed-form
    /// families are integrable by construction; the quadrature families are
    /// checked by node doubling as a diagnostic.
    fn check_square_integrable(&self) -> Result<()> {
        match &self.kind {
            ActivationKind::Tanh => {
                expectation_with_doubling(|z| {
                    let t = z.tanh();
                    t * t
                })
                .map(|_| ())
            }
            ActivationKind::NumericTable(_) => {
                // Piecewise-linear with linear tails is always in L^2(gauss);
                // the exact segment integral just has to be finite.
                let v = self.sigma_sq_mean()?;
                if v.is_finite() && v > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Convergence(
                        "numeric table sigma^2 expectation is degenerate".into(),
                    ))
                }
            }
            _ => Ok(()),
        }
    }

    /// Normalized Hermite coefficients `j_q = E[sigma(Z) he_q(Z)]`, where
    /// `he_q = He_q / sqrt(q!)` are orthonormal probabilists' Hermite
    /// polynomials. `b_q = Lambda_W j_q^2 (+ Lambda_b at q = 0)`.
    fn hermite_j(&self, q_max: usize) -> Result<Vec<f64>> {
        match &self.kind {
            ActivationKind::GaussianRbf { a } => {
                let a2 = a * a;
                let x = a2 / (2.0 * (1.0 + a2));
                let mut j = vec![0.0; q_max + 1];
                // j_{2m} = (-1)^m sqrt((2m)!)/m! x^m / sqrt(1+a^2)
                let mut t = 1.0 / (1.0 + a2).sqrt();
                j[0] = t;
                let mut m = 1usize;
                while 2 * m <= q_max {
                    let mf = m as f64;
                    t *= -x * ((2.0 * mf - 1.0) * (2.0 * mf)).sqrt() / mf;
                    j[2 * m] = t;
                    m += 1;
                }
                Ok(j)
            }
            ActivationKind::Relu => {
                let mut j = vec![0.0; q_max + 1];
                let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
                j[0] = inv_sqrt_2pi;
                if q_max >= 1 {
                    j[1] = 0.5;
                }
                // j_{2m} = (-1)^{m-1} (2m-3)!! / sqrt((2m)!) / sqrt(2 pi)
                if q_max >= 2 {
                    let mut t = inv_sqrt_2pi / std::f64::consts::SQRT_2; // m = 1
                    j[2] = t;
                    let mut m = 2usize;
                    while 2 * m <= q_max {
                        let mf = m as f64;
                        t *= -(2.0 * mf - 3.0) / ((2.0 * mf - 1.0) * (2.0 * mf)).sqrt();
                        j[2 * m] = t;
                        m += 1;
                    }
                }
                Ok(j)
            }
            ActivationKind::Tanh => hermite_j_quadrature(|z| z.tanh(), q_max),
            ActivationKind::NumericTable(t) => Ok(hermite_j_table(t, q_max)),
        }
    }
}

/// `E[f(Z)]` by Gauss-Hermite with node doubling until the relative change
/// is below 1e-10.
fn expectation_with_doubling<F: Fn(f64) -> f64>(f: F) -> Result<f64> {
    let mut n = 200usize;
    let mut prev = gh_expectation(&f, n)?;
    while n <= 12_800 {
        n *= 2;
        let next = gh_expectation(&f, n)?;
        let scale = next.abs().max(1e-300);
        if ((next - prev) / scale).abs() < 1e-10 {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Convergence(
        "Gauss-Hermite expectation did not converge under node doubling".into(),
    ))
}

fn gh_expectation<F: Fn(f64) -> f64>(f: &F, n: usize) -> Result<f64> {
    let rule = gauss_hermite_prob(n)?;
    Ok(rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&z, &w)| w * f(z))
        .sum())
}

/// Hermite coefficients of a smooth activation by Gauss-Hermite quadrature,
/// doubling the rule until all coefficients are stable.
fn hermite_j_quadrature<F: Fn(f64) -> f64>(f: F, q_max: usize) -> Result<Vec<f64>> {
    let mut n = (2 * (q_max + 1)).max(400);
    let mut prev = hermite_j_quadrature_once(&f, q_max, n)?;
    while n <= 32_768 {
        n *= 2;
        let next = hermite_j_quadrature_once(&f, q_max, n)?;
        let ok = prev
            .iter()
            .zip(&next)
            .all(|(&a, &b)| (a - b).abs() <= 1e-12 + 1e-10 * b.abs());
        if ok {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Convergence(
        "Hermite coefficient quadrature did not converge under node doubling".into(),
    ))
}

fn hermite_j_quadrature_once<F: Fn(f64) -> f64>(
    f: &F,
    q_max: usize,
    n: usize,
) -> Result<Vec<f64>> {
    let rule = gauss_hermite_prob(n)?;
    let mut acc = vec![0.0; q_max + 1];
    let mut he = Vec::with_capacity(q_max + 1);
    for (&z, &w) in rule.nodes.iter().zip(&rule.weights) {
        hermite_normalized(z, q_max, &mut he);
        let fz = w * f(z);
        for (a, h) in acc.iter_mut().zip(&he) {
            *a += fz * h;
        }
    }
    Ok(acc)
}

/// Exact Hermite coefficients of a piecewise-linear activation, using the
/// closed-form Gaussian segment integrals
/// `int_a^b he_q phi = (phi(a) he_{q-1}(a) - phi(b) he_{q-1}(b)) / sqrt(q)`.
fn hermite_j_table(table: &NumericTable, q_max: usize) -> Vec<f64> {
    let (bounds, lines) = table.segments();
    let n_seg = lines.len();
    // he values and phi at the finite breakpoints, up to q_max + 1.
    let mut he_at = Vec::with_capacity(bounds.len());
    let mut phi_at = Vec::with_capacity(bounds.len());
    for &b in &bounds {
        if b.is_finite() {
            let mut he = Vec::new();
            hermite_normalized(b, q_max + 1, &mut he);
            he_at.push(he);
            phi_at.push(crate::quad::std_normal_pdf(b));
        } else {
            he_at.push(Vec::new());
            phi_at.push(0.0);
        }
    }
    // E_q over segment k, for q = 0 ..= q_max + 1
    let e_q = |q: usize, k: usize| -> f64 {
        let (a, b) = (bounds[k], bounds[k + 1]);
        if q == 0 {
            let (i0, _, _) = gaussian_segment_moments(a, b);
            return i0;
        }
        let va = if a.is_finite() {
            phi_at[k] * he_at[k][q - 1]
        } else {
            0.0
        };
        let vb = if b.is_finite() {
            phi_at[k + 1] * he_at[k + 1][q - 1]
        } else {
            0.0
        };
        (va - vb) / (q as f64).sqrt()
    };
    let mut j = vec![0.0; q_max + 1];
    for (q, jq) in j.iter_mut().enumerate() {
        let qf = q as f64;
        let mut acc = 0.0;
        for k in 0..n_seg {
            let (c, m) = lines[k];
            // int (c + m z) he_q phi = c E_q + m (sqrt(q+1) E_{q+1} + sqrt(q) E_{q-1})
            let mut v = c * e_q(q, k);
            let mut zterm = (qf + 1.0).sqrt() * e_q(q + 1, k);
            if q >= 1 {
                zterm += qf.sqrt() * e_q(q - 1, k);
            }
            v += m * zterm;
            acc += v;
        }
        *jq = acc;
    }
    j
}

/// Regime tag from the trichotomy in the first kernel derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeTag {
    LowDisorder,
    Sparse,
    HighDisorder,
}

/// Classification of a kernel by `kappa'(1)` against 1 within a tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub tag: RegimeTag,
    pub dkappa1: f64,
    pub tolerance: f64,
}

/// Second kernel derivative at 1; infinite for rough activations (ReLU).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DdKappa {
    Finite(f64),
    Infinite,
}

impl DdKappa {
    pub fn finite(&self) -> Option<f64> {
        match self {
            DdKappa::Finite(v) => Some(*v),
            DdKappa::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, DdKappa::Infinite)
    }
}

/// Covariance Regularity Index annotation. Only stored metadata: values are
/// known for the built-in families and unknown for tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cri {
    GreaterThanTwo,
    Known(f64),
    Unknown,
}

/// The covariance kernel of a unit-variance random network layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Kernel {
    pub activation: Activation,
    pub lambda_w: f64,
    /// Hermite-series coefficients `b_0 ..= b_Q`.
    pub coeffs: Vec<f64>,
    pub dkappa1: f64,
    pub ddkappa1: DdKappa,
    pub cri: Cri,
    #[serde(skip, default = "default_sparse_tol")]
    sparse_tol: f64,
}

fn default_sparse_tol() -> f64 {
    DEFAULT_SPARSE_TOL
}

impl Kernel {
    /// Build the kernel of `activation` with the default series truncation.
    pub fn new(activation: Activation) -> Result<Self> {
        Self::with_truncation(activation, DEFAULT_Q)
    }

    /// Build with an initial truncation order `q_init >= 2`. The series is
    /// extended automatically until the tail of `q (q-1) b_q` (the slowest
    /// converging sum in use) falls below 1e-10, except for ReLU whose
    /// second-derivative series diverges by design.
    pub fn with_truncation(activation: Activation, q_init: usize) -> Result<Self> {
        if q_init < 2 {
            return Err(Error::argument("truncation order must be >= 2"));
        }
        let lambda_b = activation.lambda_b;
        let sigma_sq = activation.sigma_sq_mean()?;
        if !(sigma_sq.is_finite() && sigma_sq > 0.0) {
            return Err(Error::Convergence(
                "E[sigma^2] is not finite and positive".into(),
            ));
        }
        let lambda_w = (1.0 - lambda_b) / sigma_sq;

        let relu = matches!(activation.kind, ActivationKind::Relu);
        let mut q_max = q_init;
        let coeffs = loop {
            let j = activation.hermite_j(q_max)?;
            let mut b: Vec<f64> = j.iter().map(|&jq| lambda_w * jq * jq).collect();
            b[0] += lambda_b;
            if relu {
                // kappa''(1) diverges; the series is kept only as a
                // representation, closed forms handle evaluation.
                break b;
            }
            let tail_ok = (q_max.saturating_sub(4)..=q_max)
                .all(|q| (q * q.saturating_sub(1)) as f64 * b[q] < TAIL_TOL);
            if tail_ok {
                break b;
            }
            if q_max >= MAX_Q {
                return Err(Error::Convergence(format!(
                    "Hermite tail q(q-1) b_q still above {TAIL_TOL:.0e} at Q = {q_max}"
                )));
            }
            q_max = (q_max * 2).min(MAX_Q);
        };

        let (dkappa1, ddkappa1) = match activation.kind {
            ActivationKind::Relu => (1.0 - lambda_b, DdKappa::Infinite),
            _ => {
                let d1: f64 = coeffs
                    .iter()
                    .enumerate()
                    .map(|(q, &b)| q as f64 * b)
                    .sum();
                let d2: f64 = coeffs
                    .iter()
                    .enumerate()
                    .map(|(q, &b)| (q * q.saturating_sub(1)) as f64 * b)
                    .sum();
                (d1, DdKappa::Finite(d2))
            }
        };

        if let DdKappa::Finite(d2) = ddkappa1 {
            // Jensen: kappa''(1) >= kappa'(1)(kappa'(1) - 1).
            let bound = dkappa1 * (dkappa1 - 1.0);
            if d2 < bound - 1e-9 * bound.abs().max(1.0) {
                return Err(Error::Numeric(format!(
                    "kernel violates the convexity bound: kappa''(1) = {d2} < {bound}"
                )));
            }
        }

        let cri = match activation.kind {
            ActivationKind::GaussianRbf { .. } | ActivationKind::Tanh => Cri::GreaterThanTwo,
            ActivationKind::Relu => Cri::Known(1.5),
            ActivationKind::NumericTable(_) => Cri::Unknown,
        };

        Ok(Kernel {
            activation,
            lambda_w,
            coeffs,
            dkappa1,
            ddkappa1,
            cri,
            sparse_tol: DEFAULT_SPARSE_TOL,
        })
    }

    /// `kappa(u)`. Closed forms for GaussianRbf and ReLU, truncated Hermite
    /// series otherwise.
    pub fn kappa(&self, u: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&u) {
            return Err(Error::argument(format!("kappa argument |u| <= 1, got {u}")));
        }
        Ok(self.kappa_unchecked(u))
    }

    fn kappa_unchecked(&self, u: f64) -> f64 {
        let lb = self.activation.lambda_b;
        match &self.activation.kind {
            ActivationKind::GaussianRbf { a } => {
                let a2 = a * a;
                let denom = (1.0 + a2) * (1.0 + a2) - a2 * a2 * u * u;
                self.lambda_w / denom.sqrt() + lb
            }
            ActivationKind::Relu => {
                let s = (1.0 - u * u).max(0.0).sqrt();
                (1.0 - lb) * (s + u * (std::f64::consts::PI - u.acos()))
                    / std::f64::consts::PI
                    + lb
            }
            _ => {
                // Horner evaluation of the truncated series.
                let mut acc = 0.0;
                for &b in self.coeffs.iter().rev() {
                    acc = acc * u + b;
                }
                acc
            }
        }
    }

    /// `kappa_L(u)`: the `L`-fold composition of `kappa`.
    pub fn kappa_depth(&self, depth: usize, u: f64) -> Result<f64> {
        if depth < 1 {
            return Err(Error::argument("depth must be >= 1"));
        }
        if !(-1.0..=1.0).contains(&u) {
            return Err(Error::argument(format!("kappa argument |u| <= 1, got {u}")));
        }
        let mut v = u;
        for _ in 0..depth {
            // clamp against roundoff so closed forms stay in-domain
            v = self.kappa_unchecked(v).clamp(-1.0, 1.0);
        }
        Ok(v)
    }

    /// `(kappa'(1), kappa''(1))`.
    pub fn derivs_at_one(&self) -> (f64, DdKappa) {
        (self.dkappa1, self.ddkappa1)
    }

    /// `(kappa_L'(1), kappa_L''(1))` from the composition identities
    /// `kappa_L'(1) = kappa'(1)^L` and the geometric-sum form of
    /// `kappa_L''(1)` (arithmetic in the sparse case).
    pub fn depth_derivs(&self, depth: usize) -> Result<(f64, f64)> {
        if depth < 1 {
            return Err(Error::argument("depth must be >= 1"));
        }
        let d2 = self.ddkappa1.finite().ok_or_else(|| {
            Error::UnsupportedKernel(
                "kappa''(1) is infinite; depth derivatives are undefined".into(),
            )
        })?;
        let d1 = self.dkappa1;
        let lf = depth as f64;
        let dl1 = d1.powi(depth as i32);
        let dl2 = if (d1 - 1.0).abs() <= self.sparse_tol {
            lf * d2
        } else {
            d2 * d1.powi(depth as i32 - 1) * (d1.powi(depth as i32) - 1.0) / (d1 - 1.0)
        };
        Ok((dl1, dl2))
    }

    /// Regime classification of `kappa'(1)` against 1.
    pub fn classify(&self, tolerance: f64) -> Regime {
        let d1 = self.dkappa1;
        let tag = if (d1 - 1.0).abs() <= tolerance {
            RegimeTag::Sparse
        } else if d1 < 1.0 {
            RegimeTag::LowDisorder
        } else {
            RegimeTag::HighDisorder
        };
        Regime {
            tag,
            dkappa1: d1,
            tolerance,
        }
    }

    /// Angular power spectrum of `kappa_L` on the 2-sphere:
    /// `chat_l = (2l+1)/2 int_{-1}^{1} kappa_L(t) P_l(t) dt`, so that
    /// `kappa_L(t) = sum_l chat_l P_l(t)` and the coefficients sum to the
    /// field variance. Convergence is verified by doubling the rule.
    pub fn angular_spectrum(
        &self,
        depth: usize,
        lmax: usize,
        quad_nodes: usize,
    ) -> Result<AngularSpectrum> {
        if quad_nodes < 2 * lmax.max(1) {
            return Err(Error::argument(format!(
                "need quad_nodes >= 2 lmax, got {quad_nodes} < {}",
                2 * lmax
            )));
        }
        let coarse = self.spectrum_once(depth, lmax, quad_nodes)?;
        let fine = self.spectrum_once(depth, lmax, quad_nodes * 2)?;
        let max_diff = coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if max_diff > 1e-7 {
            return Err(Error::Convergence(format!(
                "angular spectrum changed by {max_diff:.3e} when doubling quadrature nodes"
            )));
        }
        Ok(AngularSpectrum {
            lmax,
            chat: fine,
        })
    }

    fn spectrum_once(&self, depth: usize, lmax: usize, n: usize) -> Result<Vec<f64>> {
        let rule = gauss_legendre(n)?;
        let mut chat = vec![0.0; lmax + 1];
        let mut p = Vec::with_capacity(lmax + 1);
        for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
            let k = self.kappa_depth(depth, t)?;
            legendre_all(t, lmax, &mut p);
            let wk = w * k;
            for (l, c) in chat.iter_mut().enumerate() {
                *c += wk * p[l] * (2.0 * l as f64 + 1.0) / 2.0;
            }
        }
        Ok(chat)
    }
}

/// Angular power spectrum normalized so the coefficients sum to the variance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AngularSpectrum {
    pub lmax: usize,
    pub chat: Vec<f64>,
}

impl AngularSpectrum {
    /// Fraction of the unit field variance carried by multipoles `<= lcut`.
    pub fn variance_explained(&self, lcut: usize) -> Result<f64> {
        if lcut > self.lmax {
            return Err(Error::argument(format!(
                "lcut {lcut} exceeds lmax {}",
                self.lmax
            )));
        }
        Ok(self.chat[..=lcut].iter().sum())
    }
}

/// Hermite-series coefficients `b_0 ..= b_Q` of an activation's kernel.
pub fn hermite_coefficients(activation: &Activation, q: usize) -> Result<Vec<f64>> {
    if q < 2 {
        return Err(Error::argument("coefficient order Q must be >= 2"));
    }
    let sigma_sq = activation.sigma_sq_mean()?;
    let lambda_w = (1.0 - activation.lambda_b) / sigma_sq;
    let j = activation.hermite_j(q)?;
    let mut b: Vec<f64> = j.iter().map(|&jq| lambda_w * jq * jq).collect();
    b[0] += activation.lambda_b;
    Ok(b)
}

/// Regime classification (standalone form of [`Kernel::classify`]).
pub fn classify_regime(kernel: &Kernel, tolerance: f64) -> Regime {
    kernel.classify(tolerance)
}

/// Two-point quadrature of the defining expectation
/// `Lambda_W E[sigma(Z1) sigma(u Z1 + sqrt(1-u^2) Z2)] + Lambda_b`.
///
/// The plane is cut along the activation's kink lines so every piece is
/// smooth, then integrated by nested Gauss rules against the Gaussian
/// density; `n` is the node count per piece. Serves as the independent
/// oracle for the closed-form kernel evaluations.
pub fn kappa_quadrature(kernel: &Kernel, u: f64, n: usize) -> Result<f64> {
    if !(-1.0..=1.0).contains(&u) {
        return Err(Error::argument(format!("|u| <= 1 required, got {u}")));
    }
    let act = &kernel.activation;
    let kinks = act.kinks();
    let cut = GAUSS_TAIL_CUT;
    let v = (1.0 - u * u).max(0.0).sqrt();

    let expectation = if v == 0.0 {
        // z2 drops out: a 1-D integral of sigma(z) sigma(sign z)
        let f = |z: f64| act.eval(z) * act.eval(u * z);
        piecewise_gaussian_integral(&f, &kinks, -cut, cut, n)?
    } else {
        let outer_rule = gauss_legendre(n)?;
        let mut acc = 0.0;
        for w in subdivided_splits(&kinks, -cut, cut).windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (&t, &wt) in outer_rule.nodes.iter().zip(&outer_rule.weights) {
                let z1 = mid + half * t;
                let s1 = act.eval(z1);
                // inner kinks in z2 for sigma(u z1 + v z2)
                let inner_kinks: Vec<f64> = kinks.iter().map(|k| (k - u * z1) / v).collect();
                let g = |z2: f64| act.eval(u * z1 + v * z2);
                let inner = piecewise_gaussian_integral(&g, &inner_kinks, -cut, cut, n)?;
                acc += wt * half * crate::quad::std_normal_pdf(z1) * s1 * inner;
            }
        }
        acc
    };
    Ok(kernel.lambda_w * expectation + kernel.activation.lambda_b)
}

/// Split `[a, b]` at the kinks, then subdivide every piece to width <= 3 so
/// the Gaussian factor never strains the per-piece rule.
fn subdivided_splits(kinks: &[f64], a: f64, b: f64) -> Vec<f64> {
    const MAX_WIDTH: f64 = 3.0;
    let mut splits = vec![a];
    splits.extend(kinks.iter().copied().filter(|k| *k > a && *k < b));
    splits.push(b);
    splits.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(splits.len() * 2);
    out.push(a);
    for w in splits.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if !(lo < hi) {
            continue;
        }
        let parts = ((hi - lo) / MAX_WIDTH).ceil().max(1.0) as usize;
        let step = (hi - lo) / parts as f64;
        for p in 1..=parts {
            out.push(lo + p as f64 * step);
        }
    }
    out
}

/// `int_a^b f(x) phi(x) dx` with the domain split at the given kink points.
fn piecewise_gaussian_integral<F: Fn(f64) -> f64>(
    f: &F,
    kinks: &[f64],
    a: f64,
    b: f64,
    n: usize,
) -> Result<f64> {
    let mut acc = 0.0;
    for w in subdivided_splits(kinks, a, b).windows(2) {
        acc += gaussian_weighted_gl(f, w[0], w[1], n)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rbf(a2: f64, lambda_b: f64) -> Kernel {
        Kernel::new(Activation::gaussian_rbf(a2.sqrt(), lambda_b).unwrap()).unwrap()
    }

    #[test]
    fn rbf_coefficients_sum_to_one() {
        for (a2, lb) in [(1.0, 0.0), (1.0 + std::f64::consts::SQRT_2, 0.1), (9.0, 0.0)] {
            let k = rbf(a2, lb);
            let total: f64 = k.coeffs.iter().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
            assert!(k.coeffs.iter().all(|&b| b >= 0.0));
        }
    }

    #[test]
    fn relu_odd_coefficients_vanish() {
        let b = hermite_coefficients(&Activation::relu(0.0).unwrap(), 40).unwrap();
        for q in (3..=39).step_by(2) {
            assert_eq!(b[q], 0.0);
        }
        // b_0 = 1/pi, b_1 = 1/2, b_2 = 1/(2 pi), b_4 = 1/(24 pi), b_6 = 1/(80 pi)
        use std::f64::consts::PI;
        assert_abs_diff_eq!(b[0], 1.0 / PI, epsilon = 1e-14);
        assert_abs_diff_eq!(b[1], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(b[2], 1.0 / (2.0 * PI), epsilon = 1e-14);
        assert_abs_diff_eq!(b[4], 1.0 / (24.0 * PI), epsilon = 1e-14);
        assert_abs_diff_eq!(b[6], 1.0 / (80.0 * PI), epsilon = 1e-14);
    }

    #[test]
    fn rbf_first_derivative_closed_form() {
        // kappa'(1) = a^4 / (1 + 2 a^2) at lambda_b = 0
        for a2 in [1.0, 1.0 + std::f64::consts::SQRT_2, 9.0] {
            let k = rbf(a2, 0.0);
            let expect = a2 * a2 / (1.0 + 2.0 * a2);
            assert_abs_diff_eq!(k.dkappa1, expect, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(rbf(1.0, 0.0).dkappa1, 1.0 / 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rbf(9.0, 0.0).dkappa1, 81.0 / 19.0, epsilon = 1e-8);
        assert_abs_diff_eq!(
            rbf(1.0 + std::f64::consts::SQRT_2, 0.0).dkappa1,
            1.0,
            epsilon = 1e-8
        );
    }

    #[test]
    fn kappa_at_one_is_unit_variance() {
        let acts: Vec<Activation> = vec![
            Activation::gaussian_rbf(1.0, 0.0).unwrap(),
            Activation::gaussian_rbf(3.0, 0.1).unwrap(),
            Activation::relu(0.0).unwrap(),
            Activation::relu(0.1).unwrap(),
            Activation::tanh(0.0).unwrap(),
            Activation::tanh(0.1).unwrap(),
        ];
        for act in acts {
            let k = Kernel::new(act).unwrap();
            assert_abs_diff_eq!(k.kappa(1.0).unwrap(), 1.0, epsilon = 1e-9);
            for depth in [1, 3, 10] {
                assert_abs_diff_eq!(k.kappa_depth(depth, 1.0).unwrap(), 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn kappa_closed_form_values_at_zero() {
        let k = Kernel::new(Activation::relu(0.0).unwrap()).unwrap();
        assert_abs_diff_eq!(
            k.kappa(0.0).unwrap(),
            1.0 / std::f64::consts::PI,
            epsilon = 1e-12
        );
        let g = rbf(1.0, 0.0);
        assert_abs_diff_eq!(g.kappa(0.0).unwrap(), 3f64.sqrt() / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn kappa_depth_composes_closed_form() {
        let g = rbf(1.0, 0.0);
        let inner = g.kappa(0.0).unwrap();
        assert_abs_diff_eq!(
            g.kappa_depth(2, 0.0).unwrap(),
            g.kappa(inner).unwrap(),
            epsilon = 1e-12
        );
        // depth 1 is kappa itself
        for u in [-1.0, -0.4, 0.0, 0.7, 1.0] {
            assert_eq!(g.kappa_depth(1, u).unwrap(), g.kappa(u).unwrap());
        }
    }

    #[test]
    fn relu_derivatives_flagged_infinite() {
        let k = Kernel::new(Activation::relu(0.0).unwrap()).unwrap();
        let (d1, d2) = k.derivs_at_one();
        assert_abs_diff_eq!(d1, 1.0, epsilon = 1e-8);
        assert!(d2.is_infinite());
        assert!(matches!(k.depth_derivs(3), Err(Error::UnsupportedKernel(_))));
        assert!(matches!(k.cri, Cri::Known(v) if v == 1.5));
    }

    #[test]
    fn depth_derivs_match_paper_recursions() {
        let sparse = rbf(1.0 + std::f64::consts::SQRT_2, 0.0);
        let d2 = sparse.ddkappa1.finite().unwrap();
        let (dl1, dl2) = sparse.depth_derivs(7).unwrap();
        assert_abs_diff_eq!(dl1, 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(dl2, 7.0 * d2, epsilon = 1e-6);
        // sparse RBF has kappa''(1) = 4 analytically
        assert_abs_diff_eq!(d2, 4.0, epsilon = 1e-7);

        let high = rbf(9.0, 0.0);
        let (h1, h2) = high.depth_derivs(1).unwrap();
        assert_abs_diff_eq!(h1, high.dkappa1, epsilon = 1e-14);
        assert_abs_diff_eq!(h2, high.ddkappa1.finite().unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn regime_classification_matches_trichotomy() {
        assert_eq!(rbf(1.0, 0.0).classify(1e-9).tag, RegimeTag::LowDisorder);
        assert_eq!(
            rbf(1.0 + std::f64::consts::SQRT_2, 0.0).classify(1e-9).tag,
            RegimeTag::Sparse
        );
        assert_eq!(rbf(9.0, 0.0).classify(1e-9).tag, RegimeTag::HighDisorder);
    }

    #[test]
    fn jensen_bound_holds() {
        for (a2, lb) in [(1.0, 0.0), (1.0 + std::f64::consts::SQRT_2, 0.0), (9.0, 0.1)] {
            let k = rbf(a2, lb);
            let d2 = k.ddkappa1.finite().unwrap();
            assert!(d2 >= k.dkappa1 * (k.dkappa1 - 1.0) - 1e-9);
        }
        let t = Kernel::new(Activation::tanh(0.0).unwrap()).unwrap();
        let d2 = t.ddkappa1.finite().unwrap();
        assert!(d2 >= t.dkappa1 * (t.dkappa1 - 1.0) - 1e-9);
    }

    #[test]
    fn identity_table_gives_identity_kernel() {
        let act =
            Activation::numeric_table(vec![(-2.0, -2.0), (-0.5, -0.5), (1.0, 1.0), (3.0, 3.0)], 0.0)
                .unwrap();
        let k = Kernel::new(act).unwrap();
        assert_abs_diff_eq!(k.coeffs[1], 1.0, epsilon = 1e-12);
        let rest: f64 = k.coeffs.iter().enumerate().filter(|(q, _)| *q != 1).map(|(_, b)| b).sum();
        assert_abs_diff_eq!(rest, 0.0, epsilon = 1e-12);
        for u in [-0.9, -0.2, 0.3, 0.8] {
            assert_abs_diff_eq!(k.kappa(u).unwrap(), u, epsilon = 1e-12);
            assert_abs_diff_eq!(k.kappa_depth(5, u).unwrap(), u, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_spectrum_is_single_mode() {
        let act = Activation::numeric_table(vec![(-1.0, -1.0), (1.0, 1.0)], 0.0).unwrap();
        let k = Kernel::new(act).unwrap();
        let spec = k.angular_spectrum(4, 8, 64).unwrap();
        assert_abs_diff_eq!(spec.chat[1], 1.0, epsilon = 1e-10);
        for (l, &c) in spec.chat.iter().enumerate() {
            if l != 1 {
                assert_abs_diff_eq!(c, 0.0, epsilon = 1e-10);
            }
        }
        assert_abs_diff_eq!(spec.variance_explained(1).unwrap(), 1.0, epsilon = 1e-10);
        assert!(spec.variance_explained(9).is_err());
    }

    #[test]
    fn spectrum_sums_to_variance() {
        let k = rbf(1.0, 0.0);
        let spec = k.angular_spectrum(2, 48, 128).unwrap();
        let total = spec.variance_explained(48).unwrap();
        assert!(total > 0.0 && total <= 1.0 + 1e-8);
        assert!(total > 0.999, "low-depth RBF spectrum should be compact, got {total}");
        assert!(spec.chat.iter().all(|&c| c >= -1e-8));
    }

    #[test]
    fn argument_errors() {
        let k = rbf(1.0, 0.0);
        assert!(k.kappa(1.5).is_err());
        assert!(k.kappa_depth(0, 0.5).is_err());
        assert!(Activation::gaussian_rbf(0.0, 0.0).is_err());
        assert!(Activation::relu(1.0).is_err());
        assert!(Activation::relu(-0.1).is_err());
        assert!(hermite_coefficients(&Activation::relu(0.0).unwrap(), 1).is_err());
        assert!(k.angular_spectrum(1, 32, 16).is_err());
    }

    #[test]
    fn kernel_json_roundtrip() {
        let k = rbf(9.0, 0.1);
        let json = serde_json::to_string(&k).unwrap();
        let back: Kernel = serde_json::from_str(&json).unwrap();
        assert_eq!(back.coeffs, k.coeffs);
        assert_eq!(back.dkappa1, k.dkappa1);
        assert_eq!(back.ddkappa1, k.ddkappa1);
        let r = Kernel::new(Activation::relu(0.0).unwrap()).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("infinite"));
        let back: Kernel = serde_json::from_str(&json).unwrap();
        assert!(back.ddkappa1.is_infinite());
    }

    #[test]
    fn quadrature_oracle_matches_closed_forms() {
        // spot check here; the 41-point grids run in the integration suite
        let g = rbf(1.0, 0.0);
        for u in [-0.9, 0.0, 0.6] {
            let q = kappa_quadrature(&g, u, 60).unwrap();
            assert_abs_diff_eq!(q, g.kappa(u).unwrap(), epsilon = 1e-10);
        }
        let r = Kernel::new(Activation::relu(0.1).unwrap()).unwrap();
        for u in [-0.7, 0.0, 0.5, 0.95] {
            let q = kappa_quadrature(&r, u, 60).unwrap();
            assert_abs_diff_eq!(q, r.kappa(u).unwrap(), epsilon = 1e-9);
        }
    }

    #[test]
    fn table_activation_eval_and_extrapolation() {
        let t = NumericTable::new(vec![(0.0, 1.0), (1.0, 3.0), (2.0, 2.0)]).unwrap();
        assert_abs_diff_eq!(t.eval(0.5), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.eval(1.5), 2.5, epsilon = 1e-15);
        // linear extrapolation of end segments
        assert_abs_diff_eq!(t.eval(-1.0), -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.eval(3.0), 1.0, epsilon = 1e-15);
    }
}
