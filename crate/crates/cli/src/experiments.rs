//! The batch experiments: each reproduces one figure or table as a seeded
//! CSV report plus a typed summary for programmatic checks.

use std::path::PathBuf;

use rand::Rng;

use spherecrit_core::exec::{block_rng, run_blocks, Domain, MomentSums};
use spherecrit_core::kacrice::{
    asymptotic_crit_count, constant_ai, expected_crit_count, expected_crit_count_above,
    CritCountPrediction,
};
use spherecrit_core::kernel::Activation;
use spherecrit_core::sphere::{
    build_grid, count_extrema, count_extrema_above, simulate_network_field,
    simulate_network_taps, GridScheme, GridSynthesizer, NetworkConfig,
};
use spherecrit_core::{Error, Result};

use crate::config::{ExperimentConfig, KernelSpec};
use crate::csvout::{fmt_f64, write_report};

/// A plain mean/stderr pair for simulated quantities.
#[derive(Debug, Clone, Copy)]
pub struct SimStat {
    pub mean: f64,
    pub stderr: f64,
}

impl From<&MomentSums> for SimStat {
    fn from(m: &MomentSums) -> Self {
        SimStat {
            mean: m.mean(),
            stderr: m.stderr(),
        }
    }
}

/// Deterministic sub-seed for the harness's independent consumers.
fn sub_seed(master: u64, tag: u64) -> u64 {
    block_rng(master, Domain::Harness, tag).random()
}

// ---------------------------------------------------------------- fig-critical

#[derive(Debug, Clone)]
pub struct DepthRow {
    pub depth: usize,
    pub sim_min: SimStat,
    pub sim_max: SimStat,
    pub theory_min: CritCountPrediction,
    pub theory_max: CritCountPrediction,
    pub asym_min: CritCountPrediction,
    pub asym_max: CritCountPrediction,
}

/// Simulated and predicted extrema counts of depth-L networks on a HEALPix
/// grid, one row per depth.
pub fn fig_critical(cfg: &ExperimentConfig) -> Result<(PathBuf, Vec<DepthRow>)> {
    cfg.validate()?;
    let mut depths = cfg.depths.clone();
    depths.sort_unstable();
    depths.dedup();
    if depths.is_empty() {
        return Err(Error::Argument("fig-critical needs at least one depth".into()));
    }
    let kernel = cfg.kernel.kernel()?;
    let act = cfg.kernel.activation()?;
    let r = cfg.resolutions.first().copied().unwrap_or(6);
    let grid = build_grid(GridScheme::Healpix { nside: 1 << r })?;
    let max_depth = *depths.last().unwrap();
    let net = NetworkConfig::uniform(max_depth, cfg.width, act, 2)?;

    // one shared-trunk forward per replica, tapped at every requested depth
    let per_replica = run_blocks(cfg.replicas, |rep| -> std::result::Result<Vec<(usize, usize)>, String> {
        let seed = sub_seed(cfg.seed, 1_000_000 + rep as u64);
        let taps = simulate_network_taps(&net, &depths, &grid, seed).map_err(|e| e.to_string())?;
        taps.iter()
            .map(|f| {
                let c = count_extrema(f, &grid).map_err(|e| e.to_string())?;
                Ok((c.n_min, c.n_max))
            })
            .collect()
    });
    let mut mins = vec![MomentSums::default(); depths.len()];
    let mut maxs = vec![MomentSums::default(); depths.len()];
    for rep in per_replica {
        let rep = rep.map_err(Error::Numeric)?;
        for (i, (n_min, n_max)) in rep.into_iter().enumerate() {
            mins[i].push(n_min as f64);
            maxs[i].push(n_max as f64);
        }
    }

    let mut rows = Vec::with_capacity(depths.len());
    for (i, &depth) in depths.iter().enumerate() {
        let t0 = expected_crit_count(&kernel, depth, 2, 0, cfg.mc_samples, sub_seed(cfg.seed, 2_000 + depth as u64))?;
        let t2 = expected_crit_count(&kernel, depth, 2, 2, cfg.mc_samples, sub_seed(cfg.seed, 3_000 + depth as u64))?;
        let a0 = asymptotic_crit_count(&kernel, depth, 2, 0, cfg.mc_samples, sub_seed(cfg.seed, 4_000))?;
        let a2 = asymptotic_crit_count(&kernel, depth, 2, 2, cfg.mc_samples, sub_seed(cfg.seed, 5_000))?;
        rows.push(DepthRow {
            depth,
            sim_min: (&mins[i]).into(),
            sim_max: (&maxs[i]).into(),
            theory_min: t0,
            theory_max: t2,
            asym_min: a0,
            asym_max: a2,
        });
    }

    let csv: Vec<Vec<String>> = rows
        .iter()
        .flat_map(|r| {
            let d = r.depth.to_string();
            [
                ("sim_min", r.sim_min.mean, r.sim_min.stderr),
                ("sim_max", r.sim_max.mean, r.sim_max.stderr),
                ("theory_min", r.theory_min.value, r.theory_min.stderr),
                ("theory_max", r.theory_max.value, r.theory_max.stderr),
                ("asym_min", r.asym_min.value, r.asym_min.stderr),
                ("asym_max", r.asym_max.value, r.asym_max.stderr),
            ]
            .map(|(q, v, s)| vec![cfg.kernel.id(), d.clone(), q.to_string(), fmt_f64(v), fmt_f64(s)])
        })
        .collect();
    let path = write_report(cfg, &["kernel", "depth", "quantity", "value", "stderr"], &csv)?;
    Ok((path, rows))
}

// ------------------------------------------------------------------ fig-monte

/// Running estimate of the constant `A_0` (d = 2) against the sample count.
/// The block-partitioned estimator is prefix-consistent in `n` at a fixed
/// seed, so the checkpoints trace one running mean.
pub fn fig_monte(cfg: &ExperimentConfig) -> Result<(PathBuf, Vec<(usize, f64, f64)>)> {
    cfg.validate()?;
    let total = cfg.mc_samples.max(10_000);
    let n_checkpoints = 24usize;
    let lo = (1000f64).ln();
    let hi = (total as f64).ln();
    let mut checkpoints: Vec<usize> = (0..n_checkpoints)
        .map(|k| (lo + (hi - lo) * k as f64 / (n_checkpoints - 1) as f64).exp().round() as usize)
        .collect();
    checkpoints.dedup();
    let seed = sub_seed(cfg.seed, 7);
    let mut traj = Vec::with_capacity(checkpoints.len());
    for &n in &checkpoints {
        let est = constant_ai(2, 0, n, seed)?;
        traj.push((n, est.mean, est.stderr));
    }
    let csv: Vec<Vec<String>> = traj
        .iter()
        .map(|&(n, v, s)| vec![n.to_string(), fmt_f64(v), fmt_f64(s)])
        .collect();
    let path = write_report(cfg, &["n_samples", "a0_estimate", "stderr"], &csv)?;
    Ok((path, traj))
}

// --------------------------------------------------------------- fig-variance

/// Variance captured by the first `lmax` multipoles of `kappa_L`, per depth.
pub fn fig_variance(cfg: &ExperimentConfig) -> Result<(PathBuf, Vec<(usize, f64)>)> {
    cfg.validate()?;
    let kernel = cfg.kernel.kernel()?;
    if cfg.quad_nodes < 2 * cfg.lmax {
        return Err(Error::Argument(
            "fig-variance needs quad_nodes >= 2 lmax".into(),
        ));
    }
    let mut out = Vec::with_capacity(cfg.depths.len());
    for &depth in &cfg.depths {
        let spec = kernel.angular_spectrum(depth, cfg.lmax, cfg.quad_nodes)?;
        out.push((depth, spec.variance_explained(cfg.lmax)?));
    }
    let csv: Vec<Vec<String>> = out
        .iter()
        .map(|&(l, v)| vec![l.to_string(), cfg.lmax.to_string(), fmt_f64(v)])
        .collect();
    let path = write_report(cfg, &["depth", "lmax", "variance_explained"], &csv)?;
    Ok((path, out))
}

// ----------------------------------------------------------------- table-relu

#[derive(Debug, Clone)]
pub struct TableRow {
    pub activation: String,
    pub resolution: u32,
    pub min_count: SimStat,
    pub max_count: SimStat,
}

/// Mean extrema counts of shallow (one hidden layer) networks per activation
/// and resolution, the Table-2 layout.
pub fn table_relu(cfg: &ExperimentConfig) -> Result<(PathBuf, Vec<TableRow>)> {
    cfg.validate()?;
    if cfg.resolutions.is_empty() {
        return Err(Error::Argument("table-relu needs resolutions".into()));
    }
    let activations = [
        KernelSpec::Gaussian {
            a2: 1.0 + std::f64::consts::SQRT_2,
            lambda_b: 0.0,
        },
        KernelSpec::Relu { lambda_b: 0.0 },
        KernelSpec::Tanh { lambda_b: 0.0 },
    ];
    let mut rows = Vec::new();
    for (ai, spec) in activations.iter().enumerate() {
        let act = spec.activation()?;
        for &r in &cfg.resolutions {
            let grid = build_grid(GridScheme::Healpix { nside: 1 << r })?;
            let net = NetworkConfig::uniform(1, cfg.width, act.clone(), 2)?;
            let counts = run_blocks(cfg.replicas, |rep| -> std::result::Result<(usize, usize), String> {
                let seed = sub_seed(cfg.seed, (ai as u64) << 40 | (r as u64) << 32 | rep as u64);
                let f = simulate_network_field(&net, &grid, seed).map_err(|e| e.to_string())?;
                let c = count_extrema(&f, &grid).map_err(|e| e.to_string())?;
                Ok((c.n_min, c.n_max))
            });
            let mut mins = MomentSums::default();
            let mut maxs = MomentSums::default();
            for c in counts {
                let (n_min, n_max) = c.map_err(Error::Numeric)?;
                mins.push(n_min as f64);
                maxs.push(n_max as f64);
            }
            rows.push(TableRow {
                activation: spec.id(),
                resolution: r,
                min_count: (&mins).into(),
                max_count: (&maxs).into(),
            });
        }
    }
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|t| {
            vec![
                t.activation.clone(),
                t.resolution.to_string(),
                fmt_f64(t.min_count.mean),
                fmt_f64(t.min_count.stderr),
                fmt_f64(t.max_count.mean),
                fmt_f64(t.max_count.stderr),
            ]
        })
        .collect();
    let path = write_report(
        cfg,
        &["activation", "resolution", "min_mean", "min_stderr", "max_mean", "max_stderr"],
        &csv,
    )?;
    Ok((path, rows))
}

// ------------------------------------------------------------ threshold-sweep

#[derive(Debug, Clone)]
pub struct ThresholdRow {
    pub u: f64,
    pub theory_min: CritCountPrediction,
    pub theory_max: CritCountPrediction,
    pub sim_min: SimStat,
    pub sim_max: SimStat,
}

/// Thresholded counts: Kac-Rice theory against extrema of synthesized limit
/// fields, over a grid of levels.
pub fn threshold_sweep(cfg: &ExperimentConfig) -> Result<(PathBuf, Vec<ThresholdRow>)> {
    cfg.validate()?;
    if cfg.thresholds.is_empty() {
        return Err(Error::Argument("threshold-sweep needs thresholds".into()));
    }
    let kernel = cfg.kernel.kernel()?;
    let depth = cfg.depths.first().copied().unwrap_or(5);
    let r = cfg.resolutions.first().copied().unwrap_or(5);
    let grid = build_grid(GridScheme::Healpix { nside: 1 << r })?;
    let spec = kernel.angular_spectrum(depth, cfg.lmax, cfg.quad_nodes.max(2 * cfg.lmax))?;
    let synth = GridSynthesizer::new(&spec, &grid)?;

    let thresholds = cfg.thresholds.clone();
    let per_replica = run_blocks(cfg.replicas, |rep| -> std::result::Result<Vec<(usize, usize)>, String> {
        let f = synth.synthesize(sub_seed(cfg.seed, 9_000_000 + rep as u64));
        thresholds
            .iter()
            .map(|&u| {
                let c = count_extrema_above(&f, &grid, u).map_err(|e| e.to_string())?;
                Ok((c.n_min, c.n_max))
            })
            .collect()
    });
    let mut mins = vec![MomentSums::default(); thresholds.len()];
    let mut maxs = vec![MomentSums::default(); thresholds.len()];
    for rep in per_replica {
        let rep = rep.map_err(Error::Numeric)?;
        for (i, (n_min, n_max)) in rep.into_iter().enumerate() {
            mins[i].push(n_min as f64);
            maxs[i].push(n_max as f64);
        }
    }

    let mut rows = Vec::with_capacity(thresholds.len());
    for (i, &u) in thresholds.iter().enumerate() {
        let t0 = expected_crit_count_above(&kernel, depth, 2, 0, u, cfg.mc_samples, sub_seed(cfg.seed, 11_000 + i as u64))?;
        let t2 = expected_crit_count_above(&kernel, depth, 2, 2, u, cfg.mc_samples, sub_seed(cfg.seed, 12_000 + i as u64))?;
        rows.push(ThresholdRow {
            u,
            theory_min: t0,
            theory_max: t2,
            sim_min: (&mins[i]).into(),
            sim_max: (&maxs[i]).into(),
        });
    }
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|t| {
            vec![
                fmt_f64(t.u),
                fmt_f64(t.theory_min.value),
                fmt_f64(t.theory_min.stderr),
                fmt_f64(t.theory_max.value),
                fmt_f64(t.theory_max.stderr),
                fmt_f64(t.sim_min.mean),
                fmt_f64(t.sim_min.stderr),
                fmt_f64(t.sim_max.mean),
                fmt_f64(t.sim_max.stderr),
            ]
        })
        .collect();
    let path = write_report(
        cfg,
        &[
            "u",
            "theory_min",
            "theory_min_stderr",
            "theory_max",
            "theory_max_stderr",
            "sim_min",
            "sim_min_stderr",
            "sim_max",
            "sim_max_stderr",
        ],
        &csv,
    )?;
    Ok((path, rows))
}

/// Kac-Rice prediction for the CLI `predict` subcommand.
pub fn predict(
    spec: &KernelSpec,
    depth: usize,
    d: usize,
    index: usize,
    threshold: Option<f64>,
    mc_samples: usize,
    seed: u64,
) -> Result<CritCountPrediction> {
    let kernel = spec.kernel()?;
    match threshold {
        Some(u) => expected_crit_count_above(&kernel, depth, d, index, u, mc_samples, seed),
        None => expected_crit_count(&kernel, depth, d, index, mc_samples, seed),
    }
}

/// Shallow helper reused by tests: one network activation from a KernelSpec.
pub fn activation_of(spec: &KernelSpec) -> Result<Activation> {
    spec.activation()
}
