//! Exact spectral synthesis of isotropic Gaussian fields on the 2-sphere.
//!
//! Given an angular power spectrum `chat_l` (normalized so the coefficients
//! sum to the field variance), the field `T = sum_{l,m} a_{lm} Y_{lm}` with
//! independent real coefficients `a_{lm} ~ N(0, 4 pi chat_l / (2l+1))` has
//! two-point function `sum_l chat_l P_l(<x,y>)` exactly, by the addition
//! theorem. Synthesis on a grid exploits the iso-latitude ring structure to
//! share the associated-Legendre tables between pixels.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{block_rng, Domain};
use crate::kernel::AngularSpectrum;
use crate::sphere::{FieldSample, FieldSource, SphereGrid};

/// Number of `(l, m)` pairs with `m <= l <= lmax`.
fn pair_count(lmax: usize) -> usize {
    (lmax + 1) * (lmax + 2) / 2
}

/// Fully normalized associated Legendre functions in m-major packing:
/// entry `offset(m) + (l - m)` holds `Pbar_{l m}(cos theta)`, normalized so
/// that `sum_m Ybar_{lm}(x) Ybar_{lm}(y) = (2l+1)/(4 pi) P_l(<x,y>)` with
/// `Ybar_{l0} = Pbar_{l0}` and `Ybar_{lm} = sqrt2 Pbar_{lm} {cos,sin}(m phi)`.
fn legendre_normalized(cos_t: f64, sin_t: f64, lmax: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), pair_count(lmax));
    let mut idx = 0usize;
    let mut pmm = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
    for m in 0..=lmax {
        // l = m
        out[idx] = pmm;
        if m + 1 <= lmax {
            // l = m + 1
            let p1 = (2.0 * m as f64 + 3.0).sqrt() * cos_t * pmm;
            out[idx + 1] = p1;
            let mut pl2 = pmm;
            let mut pl1 = p1;
            for l in (m + 2)..=lmax {
                let lf = l as f64;
                let mf = m as f64;
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((2.0 * lf + 1.0) / (2.0 * lf - 3.0))
                    * (((lf - 1.0) * (lf - 1.0) - mf * mf) / (lf * lf - mf * mf)))
                    .sqrt();
                let p = a * cos_t * pl1 - b * pl2;
                out[idx + (l - m)] = p;
                pl2 = pl1;
                pl1 = p;
            }
        }
        idx += lmax - m + 1;
        // seed for next m
        let mf = m as f64;
        pmm *= sin_t * ((2.0 * mf + 3.0) / (2.0 * mf + 2.0)).sqrt();
    }
}

/// One realization of the harmonic coefficients.
#[derive(Debug, Clone)]
pub struct SpectralDraw {
    pub seed: u64,
    /// packed per l: `a_{l0}` then `(a^cos_{lm}, a^sin_{lm})` for m = 1..=l
    alm: Vec<f64>,
}

/// Samples fields with the prescribed angular power spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SphericalSampler {
    pub spectrum: AngularSpectrum,
    std_per_l: Vec<f64>,
}

impl SphericalSampler {
    pub fn new(spectrum: &AngularSpectrum) -> Result<Self> {
        if spectrum.chat.len() != spectrum.lmax + 1 {
            return Err(Error::argument("spectrum length must be lmax + 1"));
        }
        if spectrum.chat.iter().any(|&c| c < -1e-8 || !c.is_finite()) {
            return Err(Error::argument(
                "spectrum coefficients must be nonnegative up to quadrature error",
            ));
        }
        let total: f64 = spectrum.chat.iter().sum();
        if total < 0.99 {
            log::warn!(
                "spectrum carries only {total:.4} of the unit variance; \
                 synthesized fields will be visibly truncated"
            );
        }
        let std_per_l = spectrum
            .chat
            .iter()
            .enumerate()
            .map(|(l, &c)| (4.0 * std::f64::consts::PI * c.max(0.0) / (2.0 * l as f64 + 1.0)).sqrt())
            .collect();
        Ok(SphericalSampler {
            spectrum: spectrum.clone(),
            std_per_l,
        })
    }

    pub fn lmax(&self) -> usize {
        self.spectrum.lmax
    }

    /// Draw the harmonic coefficients for one replica.
    pub fn draw(&self, seed: u64) -> SpectralDraw {
        let lmax = self.lmax();
        let mut rng = block_rng(seed, Domain::SpectralCoeffs, 0);
        let normal = StandardNormal;
        let mut alm = Vec::with_capacity((lmax + 1) * (lmax + 1));
        for (l, &sd) in self.std_per_l.iter().enumerate() {
            for _ in 0..(2 * l + 1) {
                let z: f64 = normal.sample(&mut rng);
                alm.push(z * sd);
            }
        }
        SpectralDraw { seed, alm }
    }

    /// Evaluate the field of `draw` at one point on the sphere.
    pub fn eval(&self, draw: &SpectralDraw, point: [f64; 3]) -> f64 {
        let lmax = self.lmax();
        let cos_t = point[2].clamp(-1.0, 1.0);
        let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
        let phi = point[1].atan2(point[0]);
        let mut pbar = vec![0.0; pair_count(lmax)];
        legendre_normalized(cos_t, sin_t, lmax, &mut pbar);

        let base = |l: usize| l * l; // start of the l-block in alm
        let mut acc = 0.0;
        // m = 0
        for l in 0..=lmax {
            acc += draw.alm[base(l)] * pbar[l];
        }
        // m >= 1, sharing the angle recurrences
        let (sin_phi, cos_phi) = phi.sin_cos();
        let mut cos_m = cos_phi;
        let mut sin_m = sin_phi;
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut offset = lmax + 1;
        for m in 1..=lmax {
            let mut cm = 0.0;
            let mut sm = 0.0;
            for l in m..=lmax {
                let p = pbar[offset + (l - m)];
                let b = base(l) + 2 * m - 1;
                cm += draw.alm[b] * p;
                sm += draw.alm[b + 1] * p;
            }
            acc += sqrt2 * (cm * cos_m + sm * sin_m);
            offset += lmax - m + 1;
            let c_next = cos_m * cos_phi - sin_m * sin_phi;
            sin_m = sin_m * cos_phi + cos_m * sin_phi;
            cos_m = c_next;
        }
        acc
    }
}

/// Grid-specialized synthesizer: associated-Legendre tables are precomputed
/// once per iso-latitude ring and reused across replicas.
pub struct GridSynthesizer {
    sampler: SphericalSampler,
    ring_of_pixel: Vec<u32>,
    phi: Vec<f64>,
    ring_tables: Vec<Vec<f64>>,
}

impl GridSynthesizer {
    pub fn new(spectrum: &AngularSpectrum, grid: &SphereGrid) -> Result<Self> {
        let sampler = SphericalSampler::new(spectrum)?;
        let lmax = sampler.lmax();
        let n = grid.n_pixels();
        // group pixels into iso-latitude rings by their z coordinate
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| grid.center(a)[2].total_cmp(&grid.center(b)[2]));
        let mut ring_of_pixel = vec![0u32; n];
        let mut ring_z: Vec<f64> = Vec::new();
        for &p in &order {
            let z = grid.center(p)[2];
            if ring_z.last().map_or(true, |&last| (z - last).abs() > 1e-9) {
                ring_z.push(z);
            }
            ring_of_pixel[p] = (ring_z.len() - 1) as u32;
        }
        let mut ring_tables = Vec::with_capacity(ring_z.len());
        for &z in &ring_z {
            let cos_t = z.clamp(-1.0, 1.0);
            let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
            let mut t = vec![0.0; pair_count(lmax)];
            legendre_normalized(cos_t, sin_t, lmax, &mut t);
            ring_tables.push(t);
        }
        let phi = grid
            .centers()
            .iter()
            .map(|c| c[1].atan2(c[0]))
            .collect();
        Ok(GridSynthesizer {
            sampler,
            ring_of_pixel,
            phi,
            ring_tables,
        })
    }

    pub fn sampler(&self) -> &SphericalSampler {
        &self.sampler
    }

    /// Synthesize one field realization on the grid.
    pub fn synthesize(&self, seed: u64) -> FieldSample {
        let draw = self.sampler.draw(seed);
        let values = self.values_for(&draw);
        FieldSample {
            values,
            source: FieldSource::Spectral(self.sampler.spectrum.clone()),
            seed,
        }
    }

    fn values_for(&self, draw: &SpectralDraw) -> Vec<f64> {
        let lmax = self.sampler.lmax();
        let n_rings = self.ring_tables.len();
        let base = |l: usize| l * l;
        // per-ring harmonic sums C_m, S_m
        let mut ring_c = vec![0.0; n_rings * (lmax + 1)];
        let mut ring_s = vec![0.0; n_rings * (lmax + 1)];
        let sqrt2 = std::f64::consts::SQRT_2;
        for (r, table) in self.ring_tables.iter().enumerate() {
            let row_c = &mut ring_c[r * (lmax + 1)..(r + 1) * (lmax + 1)];
            let row_s = &mut ring_s[r * (lmax + 1)..(r + 1) * (lmax + 1)];
            let mut offset = 0usize;
            for m in 0..=lmax {
                let mut cm = 0.0;
                let mut sm = 0.0;
                if m == 0 {
                    for l in 0..=lmax {
                        cm += draw.alm[base(l)] * table[l];
                    }
                } else {
                    for l in m..=lmax {
                        let p = table[offset + (l - m)];
                        let b = base(l) + 2 * m - 1;
                        cm += draw.alm[b] * p;
                        sm += draw.alm[b + 1] * p;
                    }
                    cm *= sqrt2;
                    sm *= sqrt2;
                }
                row_c[m] = cm;
                row_s[m] = sm;
                offset += lmax - m + 1;
            }
        }
        // per-pixel angle sums with incremental cos/sin recurrences
        self.phi
            .iter()
            .zip(&self.ring_of_pixel)
            .map(|(&phi, &r)| {
                let row_c = &ring_c[r as usize * (lmax + 1)..(r as usize + 1) * (lmax + 1)];
                let row_s = &ring_s[r as usize * (lmax + 1)..(r as usize + 1) * (lmax + 1)];
                let (sin_phi, cos_phi) = phi.sin_cos();
                let mut acc = row_c[0];
                let mut cos_m = cos_phi;
                let mut sin_m = sin_phi;
                for m in 1..=lmax {
                    acc += row_c[m] * cos_m + row_s[m] * sin_m;
                    let c_next = cos_m * cos_phi - sin_m * sin_phi;
                    sin_m = sin_m * cos_phi + cos_m * sin_phi;
                    cos_m = c_next;
                }
                acc
            })
            .collect()
    }
}

/// Synthesize one Gaussian field realization with the given spectrum.
pub fn synthesize_gaussian_field(
    spectrum: &AngularSpectrum,
    grid: &SphereGrid,
    seed: u64,
) -> Result<FieldSample> {
    Ok(GridSynthesizer::new(spectrum, grid)?.synthesize(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::MomentSums;
    use crate::quad::{legendre_all, legendre_sum};
    use crate::sphere::{build_grid, count_extrema, GridScheme};
    use approx::assert_abs_diff_eq;

    fn unit(v: [f64; 3]) -> [f64; 3] {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    }

    #[test]
    fn addition_theorem_holds() {
        // sum_m Ybar_lm(x) Ybar_lm(y) = (2l+1)/(4pi) P_l(<x,y>)
        let lmax = 24;
        let x = unit([0.2, -0.6, 0.75]);
        let y = unit([-0.5, 0.1, 0.6]);
        let eval_all = |p: [f64; 3]| {
            let cos_t = p[2];
            let sin_t = (1.0 - cos_t * cos_t).sqrt();
            let mut pb = vec![0.0; pair_count(lmax)];
            legendre_normalized(cos_t, sin_t, lmax, &mut pb);
            (pb, p[1].atan2(p[0]))
        };
        let (px, phix) = eval_all(x);
        let (py, phiy) = eval_all(y);
        let dot = x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
        let mut pl = Vec::new();
        legendre_all(dot, lmax, &mut pl);
        for l in [0usize, 1, 5, 13, 24] {
            let mut total = 0.0;
            let mut offset = 0usize;
            for m in 0..=l.min(lmax) {
                let pxl = px[offset + (l - m)];
                let pyl = py[offset + (l - m)];
                if m == 0 {
                    total += pxl * pyl;
                } else {
                    let mf = m as f64;
                    total += 2.0
                        * pxl
                        * pyl
                        * ((mf * phix).cos() * (mf * phiy).cos()
                            + (mf * phix).sin() * (mf * phiy).sin());
                }
                offset += lmax - m + 1;
            }
            let want = (2.0 * l as f64 + 1.0) / (4.0 * std::f64::consts::PI) * pl[l];
            assert_abs_diff_eq!(total, want, epsilon = 1e-11);
        }
    }

    #[test]
    fn grid_synthesis_matches_pointwise_eval() {
        let spec = AngularSpectrum {
            lmax: 12,
            chat: (0..=12).map(|l| 1.0 / (1.0 + l as f64)).collect(),
        };
        let grid = build_grid(GridScheme::Healpix { nside: 4 }).unwrap();
        let synth = GridSynthesizer::new(&spec, &grid).unwrap();
        let field = synth.synthesize(5);
        let draw = synth.sampler().draw(5);
        for p in [0usize, 17, 101, grid.n_pixels() - 1] {
            let direct = synth.sampler().eval(&draw, grid.center(p));
            assert_abs_diff_eq!(field.values[p], direct, epsilon = 1e-9);
        }
    }

    #[test]
    fn linear_spectrum_field_is_a_height_function() {
        // chat_1 = 1: the field is a random linear functional, which has
        // exactly one maximum and one minimum on any reasonable grid
        let spec = AngularSpectrum {
            lmax: 1,
            chat: vec![0.0, 1.0],
        };
        let grid = build_grid(GridScheme::Healpix { nside: 4 }).unwrap();
        let synth = GridSynthesizer::new(&spec, &grid).unwrap();
        for seed in 0..200u64 {
            let field = synth.synthesize(seed);
            let c = count_extrema(&field, &grid).unwrap();
            assert_eq!((c.n_min, c.n_max), (1, 1), "seed {seed}");
        }
    }

    #[test]
    fn empirical_variance_matches_spectrum_sum() {
        let spec = AngularSpectrum {
            lmax: 8,
            chat: vec![0.1, 0.2, 0.3, 0.1, 0.1, 0.05, 0.05, 0.05, 0.05],
        };
        let grid = build_grid(GridScheme::Healpix { nside: 2 }).unwrap();
        let synth = GridSynthesizer::new(&spec, &grid).unwrap();
        let mut acc = MomentSums::default();
        for seed in 0..4000u64 {
            let f = synth.synthesize(seed);
            acc.push(f.values[11] * f.values[11]);
        }
        let want: f64 = spec.chat.iter().sum();
        assert!(
            (acc.mean() - want).abs() < 0.05,
            "Var = {}, expected {want}",
            acc.mean()
        );
    }

    #[test]
    fn two_point_function_matches_legendre_sum() {
        let spec = AngularSpectrum {
            lmax: 6,
            chat: vec![0.05, 0.15, 0.4, 0.2, 0.1, 0.05, 0.05],
        };
        let sampler = SphericalSampler::new(&spec).unwrap();
        let x = unit([0.8, 0.1, 0.59]);
        let y = unit([0.5, -0.5, 0.70]);
        let dot = x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
        let mut acc = MomentSums::default();
        for seed in 0..6000u64 {
            let d = sampler.draw(seed);
            acc.push(sampler.eval(&d, x) * sampler.eval(&d, y));
        }
        let want = legendre_sum(&spec.chat, dot);
        assert!(
            (acc.mean() - want).abs() < 0.05,
            "cov {} vs {}",
            acc.mean(),
            want
        );
    }

    #[test]
    fn rejects_bad_spectra() {
        assert!(SphericalSampler::new(&AngularSpectrum {
            lmax: 2,
            chat: vec![0.5, -0.5, 0.2],
        })
        .is_err());
        assert!(SphericalSampler::new(&AngularSpectrum {
            lmax: 2,
            chat: vec![0.5, 0.5],
        })
        .is_err());
    }
}
