//! Empirical validation of the field/derivative covariance identities.
//!
//! For an isotropic unit-variance field with covariance `kappa_L`, the frame
//! derivatives at any point satisfy `E[T E_i T] = 0`,
//! `E[E_i T E_j T] = kappa_L'(1) delta_ij`. These are estimated from
//! spectral-synthesis replicas with central differences along two orthonormal
//! geodesic directions, evaluated at off-grid points; the finite-difference
//! step contributes a bias of order `h^2 kappa_L''(1)` which is reported
//! alongside.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{block_layout, block_len, block_rng, run_blocks, Domain, MomentSums};
use crate::kernel::AngularSpectrum;
use crate::sphere::{SphereGrid, SphericalSampler};

/// A mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moment {
    pub mean: f64,
    pub stderr: f64,
}

impl From<&MomentSums> for Moment {
    fn from(m: &MomentSums) -> Self {
        Moment {
            mean: m.mean(),
            stderr: m.stderr(),
        }
    }
}

/// Empirical covariances of the field and its two frame derivatives at one
/// pixel, with the spectral targets they should match.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameCovarianceReport {
    pub n_samples: usize,
    pub step: f64,
    pub var_t: Moment,
    pub cov_t_d: [Moment; 2],
    pub var_d: [Moment; 2],
    pub cov_d12: Moment,
    /// `sum_l chat_l` (variance of the truncated field)
    pub target_var_t: f64,
    /// `sum_l chat_l l(l+1)/2` (gradient variance of the truncated field)
    pub target_var_d: f64,
    /// `h^2 kappa''(1)` of the truncated field: the stated finite-difference bias scale
    pub fd_bias_bound: f64,
}

/// Estimate the frame covariances at `pixel` from `n_samples` spectral
/// replicas with geodesic step `h` (radians).
pub fn empirical_frame_covariances(
    spectrum: &AngularSpectrum,
    grid: &SphereGrid,
    pixel: usize,
    n_samples: usize,
    h: f64,
    seed: u64,
) -> Result<FrameCovarianceReport> {
    if n_samples < 1000 {
        return Err(Error::argument("need at least 1000 samples"));
    }
    if pixel >= grid.n_pixels() {
        return Err(Error::argument("pixel index out of range"));
    }
    if !(h > 0.0 && h < 0.5) {
        return Err(Error::argument("step must lie in (0, 0.5) radians"));
    }
    let sampler = SphericalSampler::new(spectrum)?;
    let p = grid.center(pixel);
    let (e1, e2) = tangent_frame(p);
    // geodesic offsets x(t) = cos(t) p + sin(t) e
    let offset = |e: [f64; 3], t: f64| {
        let (ct, st) = (t.cos(), t.sin());
        [
            ct * p[0] + st * e[0],
            ct * p[1] + st * e[1],
            ct * p[2] + st * e[2],
        ]
    };
    let points = [
        p,
        offset(e1, h),
        offset(e1, -h),
        offset(e2, h),
        offset(e2, -h),
    ];

    let (n_blocks, last) = block_layout(n_samples);
    let partials = run_blocks(n_blocks, |b| {
        let mut sums = [MomentSums::default(); 6];
        let lo = b * crate::exec::BLOCK_SAMPLES;
        for r in 0..block_len(b, n_blocks, last) {
            let replica = (lo + r) as u64;
            // one independent substream per replica
            let mut rng = block_rng(seed, Domain::FrameCovariance, replica);
            let sub_seed: u64 = rand::Rng::random(&mut rng);
            let draw = sampler.draw(sub_seed);
            let v: Vec<f64> = points.iter().map(|&x| sampler.eval(&draw, x)).collect();
            let t0 = v[0];
            let d1 = (v[1] - v[2]) / (2.0 * h);
            let d2 = (v[3] - v[4]) / (2.0 * h);
            sums[0].push(t0 * t0);
            sums[1].push(t0 * d1);
            sums[2].push(t0 * d2);
            sums[3].push(d1 * d1);
            sums[4].push(d2 * d2);
            sums[5].push(d1 * d2);
        }
        sums
    });
    let mut sums = [MomentSums::default(); 6];
    for part in &partials {
        for (a, b) in sums.iter_mut().zip(part) {
            a.merge(b);
        }
    }

    let target_var_t: f64 = spectrum.chat.iter().sum();
    let target_var_d: f64 = spectrum
        .chat
        .iter()
        .enumerate()
        .map(|(l, &c)| c * (l * (l + 1)) as f64 / 2.0)
        .sum();
    // P_l''(1) = (l-1) l (l+1) (l+2) / 8
    let ddkappa: f64 = spectrum
        .chat
        .iter()
        .enumerate()
        .map(|(l, &c)| {
            let lf = l as f64;
            c * (lf - 1.0) * lf * (lf + 1.0) * (lf + 2.0) / 8.0
        })
        .sum();

    Ok(FrameCovarianceReport {
        n_samples,
        step: h,
        var_t: (&sums[0]).into(),
        cov_t_d: [(&sums[1]).into(), (&sums[2]).into()],
        var_d: [(&sums[3]).into(), (&sums[4]).into()],
        cov_d12: (&sums[5]).into(),
        target_var_t,
        target_var_d,
        fd_bias_bound: h * h * ddkappa,
    })
}

/// Two orthonormal tangent vectors at `p`.
fn tangent_frame(p: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    // cross with the axis least aligned with p
    let axis = if p[2].abs() < 0.9 {
        [0.0, 0.0, 1.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let mut e1 = [
        axis[1] * p[2] - axis[2] * p[1],
        axis[2] * p[0] - axis[0] * p[2],
        axis[0] * p[1] - axis[1] * p[0],
    ];
    let n = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1 = [e1[0] / n, e1[1] / n, e1[2] / n];
    let e2 = [
        p[1] * e1[2] - p[2] * e1[1],
        p[2] * e1[0] - p[0] * e1[2],
        p[0] * e1[1] - p[1] * e1[0],
    ];
    (e1, e2)
}
