//! Finite-width random network fields on the sphere.
//!
//! A depth-`L` network with widths `n_1..n_L` maps an input `x` on the
//! 2-sphere through `T_0 = W0 x + b1` and `T_s = W_s sigma(T_{s-1}) + b_{s+1}`,
//! with `W0 ~ N(0, 1 - Lb)`, hidden `W_s ~ N(0, Lw / n_s)`, biases
//! `N(0, Lb)` and a scalar output row. Under this scaling the field converges
//! to the Gaussian limit with covariance `kappa_L` as the widths grow.
//!
//! The forward pass runs in f32 over fixed pixel chunks: chunk boundaries do
//! not depend on the thread count, so a `(seed, config)` pair produces the
//! same field bit for bit on any machine. Several depths can be tapped from
//! one shared trunk: each tap attaches an independent output row, so every
//! tapped field has exactly the depth-`L` network law (taps are correlated
//! across depths, which is harmless for per-depth statistics and saves the
//! repeated forward passes).

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{block_rng, run_blocks, Domain};
use crate::kernel::Activation;
use crate::sphere::fastmath::apply_activation;
use crate::sphere::{FieldSample, FieldSource, SphereGrid};

const PIXEL_CHUNK: usize = 4096;

/// Architecture of a random network field on the d-sphere (input dim d+1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub depth: usize,
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub d: usize,
}

impl NetworkConfig {
    pub fn new(depth: usize, widths: Vec<usize>, activation: Activation, d: usize) -> Result<Self> {
        if depth < 1 {
            return Err(Error::argument("network depth must be >= 1"));
        }
        if widths.len() != depth {
            return Err(Error::argument(format!(
                "expected {depth} widths, got {}",
                widths.len()
            )));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::argument("hidden widths must be positive"));
        }
        if d < 1 {
            return Err(Error::argument("sphere dimension must be >= 1"));
        }
        Ok(NetworkConfig {
            depth,
            widths,
            activation,
            d,
        })
    }

    /// Uniform hidden width at every layer.
    pub fn uniform(depth: usize, width: usize, activation: Activation, d: usize) -> Result<Self> {
        Self::new(depth, vec![width; depth], activation, d)
    }
}

struct NetWeights {
    /// input layer, row-major `n_1 x (d+1)`
    w_in: Vec<f32>,
    b_in: Vec<f32>,
    /// hidden transitions, row-major `n_{s+1} x n_s`
    hidden: Vec<(Vec<f32>, Vec<f32>)>,
    /// one scalar output head per tap depth: (row of length n_s, bias)
    heads: Vec<(Vec<f32>, f32)>,
}

/// Draw all weights in a fixed order from a single substream.
fn draw_weights(cfg: &NetworkConfig, taps: &[usize], seed: u64) -> Result<NetWeights> {
    let lambda_b = cfg.activation.lambda_b;
    let lambda_w = (1.0 - lambda_b) / cfg.activation.sigma_sq_mean()?;
    let mut rng = block_rng(seed, Domain::NetworkWeights, 0);
    let normal = StandardNormal;
    let mut any: Vec<f32> = Vec::new();

    let fill = |n: usize, sd: f64, rng: &mut rand_chacha::ChaCha8Rng, out: &mut Vec<f32>| {
        out.clear();
        out.reserve(n);
        for _ in 0..n {
            let z: f64 = normal.sample(rng);
            out.push((z * sd) as f32);
        }
    };

    let in_dim = cfg.d + 1;
    let n1 = cfg.widths[0];
    let mut w_in = Vec::new();
    fill(n1 * in_dim, (1.0 - lambda_b).sqrt(), &mut rng, &mut w_in);
    let mut b_in = Vec::new();
    fill(n1, lambda_b.sqrt(), &mut rng, &mut b_in);

    let max_tap = *taps.last().unwrap();
    let mut hidden = Vec::with_capacity(max_tap - 1);
    let mut heads = Vec::with_capacity(taps.len());
    for s in 1..=max_tap {
        let n_s = cfg.widths[s - 1];
        let sd = (lambda_w / n_s as f64).sqrt();
        if taps.contains(&s) {
            fill(n_s, sd, &mut rng, &mut any);
            let row = any.clone();
            let zb: f64 = normal.sample(&mut rng);
            heads.push((row, (zb * lambda_b.sqrt()) as f32));
        }
        if s < max_tap {
            let n_next = cfg.widths[s];
            let mut w = Vec::new();
            fill(n_next * n_s, sd, &mut rng, &mut w);
            let mut b = Vec::new();
            fill(n_next, lambda_b.sqrt(), &mut rng, &mut b);
            hidden.push((w, b));
        }
    }
    Ok(NetWeights {
        w_in,
        b_in,
        hidden,
        heads,
    })
}

#[inline]
fn sgemm_rm(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[inline]
fn add_row_bias(h: &mut [f32], bias: &[f32], cols: usize) {
    for (r, &b) in bias.iter().enumerate() {
        for v in &mut h[r * cols..(r + 1) * cols] {
            *v += b;
        }
    }
}

/// Forward one chunk of points through the trunk, reading out every tap.
/// Returns per-tap output values for the chunk.
fn forward_chunk(
    cfg: &NetworkConfig,
    taps: &[usize],
    weights: &NetWeights,
    coords: &[[f64; 3]],
) -> Vec<Vec<f64>> {
    let cols = coords.len();
    let in_dim = cfg.d + 1;
    debug_assert_eq!(in_dim, 3, "grid simulation is specific to S^2");
    let mut x = vec![0.0f32; in_dim * cols];
    for (j, p) in coords.iter().enumerate() {
        x[j] = p[0] as f32;
        x[cols + j] = p[1] as f32;
        x[2 * cols + j] = p[2] as f32;
    }
    let max_width = *cfg.widths.iter().max().unwrap();
    let mut h = vec![0.0f32; max_width * cols];
    let mut h_next = vec![0.0f32; max_width * cols];

    let n1 = cfg.widths[0];
    sgemm_rm(n1, in_dim, cols, &weights.w_in, &x, &mut h[..n1 * cols]);
    add_row_bias(&mut h[..n1 * cols], &weights.b_in, cols);

    let max_tap = *taps.last().unwrap();
    let mut outputs: Vec<Vec<f64>> = vec![Vec::new(); taps.len()];
    let mut head_idx = 0usize;
    for s in 1..=max_tap {
        let n_s = cfg.widths[s - 1];
        let act = &mut h[..n_s * cols];
        apply_activation(&cfg.activation, act);
        if taps.contains(&s) {
            let (row, bias) = &weights.heads[head_idx];
            head_idx += 1;
            let mut out = vec![0.0f64; cols];
            for (r, &w) in row.iter().enumerate() {
                let wr = w;
                let seg = &act[r * cols..(r + 1) * cols];
                for (o, &v) in out.iter_mut().zip(seg) {
                    *o += (wr * v) as f64;
                }
            }
            for o in &mut out {
                *o += *bias as f64;
            }
            outputs[head_idx - 1] = out;
        }
        if s < max_tap {
            let n_next = cfg.widths[s];
            let (w, b) = &weights.hidden[s - 1];
            sgemm_rm(n_next, n_s, cols, w, act, &mut h_next[..n_next * cols]);
            add_row_bias(&mut h_next[..n_next * cols], b, cols);
            std::mem::swap(&mut h, &mut h_next);
        }
    }
    outputs
}

fn forward_taps(
    cfg: &NetworkConfig,
    taps: &[usize],
    coords: &[[f64; 3]],
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if taps.is_empty() {
        return Err(Error::argument("need at least one tap depth"));
    }
    if taps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::argument("tap depths must be strictly increasing"));
    }
    let max_tap = *taps.last().unwrap();
    if max_tap > cfg.depth || taps[0] < 1 {
        return Err(Error::argument(format!(
            "tap depths must lie in 1..={}",
            cfg.depth
        )));
    }
    if cfg.d != 2 {
        return Err(Error::argument("sphere simulation requires d = 2"));
    }
    let weights = draw_weights(cfg, taps, seed)?;
    let n = coords.len();
    let n_chunks = n.div_ceil(PIXEL_CHUNK);
    let chunk_outs = run_blocks(n_chunks, |c| {
        let lo = c * PIXEL_CHUNK;
        let hi = ((c + 1) * PIXEL_CHUNK).min(n);
        forward_chunk(cfg, taps, &weights, &coords[lo..hi])
    });
    let mut fields: Vec<Vec<f64>> = taps.iter().map(|_| Vec::with_capacity(n)).collect();
    for chunk in chunk_outs {
        for (t, vals) in chunk.into_iter().enumerate() {
            fields[t].extend_from_slice(&vals);
        }
    }
    Ok(fields)
}

/// Simulate one realization of the depth-`cfg.depth` network on the grid.
pub fn simulate_network_field(
    cfg: &NetworkConfig,
    grid: &SphereGrid,
    seed: u64,
) -> Result<FieldSample> {
    let mut fields = forward_taps(cfg, &[cfg.depth], grid.centers(), seed)?;
    Ok(FieldSample {
        values: fields.pop().unwrap(),
        source: FieldSource::FiniteWidth(cfg.clone()),
        seed,
    })
}

/// Simulate fields at several depths from one shared trunk (one weight
/// realization); `taps` must be strictly increasing with the last entry
/// equal to at most `cfg.depth`.
pub fn simulate_network_taps(
    cfg: &NetworkConfig,
    taps: &[usize],
    grid: &SphereGrid,
    seed: u64,
) -> Result<Vec<FieldSample>> {
    let fields = forward_taps(cfg, taps, grid.centers(), seed)?;
    Ok(fields
        .into_iter()
        .zip(taps)
        .map(|(values, &t)| {
            let mut c = cfg.clone();
            c.depth = t;
            c.widths.truncate(t);
            FieldSample {
                values,
                source: FieldSource::FiniteWidth(c),
                seed,
            }
        })
        .collect())
}

/// Evaluate one realization of the network at arbitrary points.
pub fn simulate_network_at_points(
    cfg: &NetworkConfig,
    points: &[[f64; 3]],
    seed: u64,
) -> Result<Vec<f64>> {
    let mut fields = forward_taps(cfg, &[cfg.depth], points, seed)?;
    Ok(fields.pop().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::MomentSums;
    use crate::kernel::Kernel;
    use crate::sphere::{build_grid, GridScheme};

    fn unit(v: [f64; 3]) -> [f64; 3] {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = NetworkConfig::uniform(2, 64, Activation::tanh(0.1).unwrap(), 2).unwrap();
        let grid = build_grid(GridScheme::Healpix { nside: 4 }).unwrap();
        let a = simulate_network_field(&cfg, &grid, 99).unwrap();
        let b = simulate_network_field(&cfg, &grid, 99).unwrap();
        assert!(a
            .values
            .iter()
            .zip(&b.values)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = simulate_network_field(&cfg, &grid, 100).unwrap();
        assert!(a.values.iter().zip(&c.values).any(|(x, y)| x != y));
    }

    #[test]
    fn unit_variance_at_identity_activation() {
        // identity-like table: T is exactly a linear functional plus bias,
        // with unit variance by the weight normalization
        let act = Activation::numeric_table(vec![(-1.0, -1.0), (1.0, 1.0)], 0.0).unwrap();
        let cfg = NetworkConfig::uniform(1, 128, act, 2).unwrap();
        let p = unit([0.3, -0.5, 0.81]);
        let mut acc = MomentSums::default();
        for rep in 0..10_000u64 {
            let v = simulate_network_at_points(&cfg, &[p], rep).unwrap();
            acc.push(v[0] * v[0]);
        }
        assert!(
            (acc.mean() - 1.0).abs() < 0.05,
            "Var(T) = {} should be 1",
            acc.mean()
        );
    }

    #[test]
    fn pair_correlation_approaches_kernel() {
        // width 1000, one layer: corr(T(x), T(y)) ~ kappa(<x,y>) within 0.05
        let act = Activation::gaussian_rbf(1.0, 0.0).unwrap();
        let kernel = Kernel::new(act.clone()).unwrap();
        let cfg = NetworkConfig::uniform(1, 1000, act, 2).unwrap();
        let pairs = [
            (unit([1.0, 0.0, 0.0]), unit([1.0, 0.2, 0.0])),
            (unit([0.0, 1.0, 0.0]), unit([0.3, 0.8, -0.4])),
            (unit([0.5, 0.5, 0.7]), unit([-0.5, 0.5, 0.7])),
        ];
        let n_rep = 4000u64;
        for (idx, (x, y)) in pairs.iter().enumerate() {
            let mut xy = MomentSums::default();
            let mut xx = MomentSums::default();
            let mut yy = MomentSums::default();
            for rep in 0..n_rep {
                let v = simulate_network_at_points(&cfg, &[*x, *y], rep * 31 + idx as u64)
                    .unwrap();
                xy.push(v[0] * v[1]);
                xx.push(v[0] * v[0]);
                yy.push(v[1] * v[1]);
            }
            let corr = xy.mean() / (xx.mean() * yy.mean()).sqrt();
            let dot = x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
            let want = kernel.kappa(dot.clamp(-1.0, 1.0)).unwrap();
            assert!(
                (corr - want).abs() < 0.05,
                "pair {idx}: corr {corr} vs kappa {want}"
            );
        }
    }

    #[test]
    fn taps_match_macroscopic_statistics() {
        // a tapped depth-1 field has the same law as a standalone depth-1 net
        let act = Activation::gaussian_rbf(1.0, 0.0).unwrap();
        let cfg = NetworkConfig::uniform(3, 64, act, 2).unwrap();
        let grid = build_grid(GridScheme::Healpix { nside: 2 }).unwrap();
        let mut var_tap = MomentSums::default();
        for rep in 0..4000u64 {
            let taps = simulate_network_taps(&cfg, &[1, 3], &grid, rep).unwrap();
            assert_eq!(taps.len(), 2);
            var_tap.push(taps[0].values[7] * taps[0].values[7]);
        }
        assert!((var_tap.mean() - 1.0).abs() < 0.06, "tap variance {}", var_tap.mean());
    }

    #[test]
    fn config_validation() {
        let act = Activation::relu(0.0).unwrap();
        assert!(NetworkConfig::new(0, vec![], act.clone(), 2).is_err());
        assert!(NetworkConfig::new(2, vec![4], act.clone(), 2).is_err());
        assert!(NetworkConfig::new(1, vec![0], act.clone(), 2).is_err());
        let cfg = NetworkConfig::uniform(2, 8, act, 2).unwrap();
        let grid = build_grid(GridScheme::Healpix { nside: 1 }).unwrap();
        assert!(simulate_network_taps(&cfg, &[2, 1], &grid, 0).is_err());
        assert!(simulate_network_taps(&cfg, &[], &grid, 0).is_err());
        assert!(simulate_network_taps(&cfg, &[3], &grid, 0).is_err());
    }
}
