//! Parallel vs sequential block execution on representative hot loops.
//!
//! Every Monte Carlo driver in the crate runs through `exec::run_blocks`
//! (rayon under the default `parallel` feature) with `exec::run_blocks_seq`
//! as the always-available fallback; both produce bit-identical results, so
//! the comparison here is purely about throughput.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use spherecrit_core::exec::{block_rng, run_blocks, run_blocks_seq, Domain, MomentSums};
use spherecrit_core::goi::{sample_goi_matrix, GoiParams};
use spherecrit_core::kernel::{Activation, Kernel};
use spherecrit_core::sphere::{build_grid, count_extrema, GridScheme, GridSynthesizer};

fn goi_block(block: usize) -> MomentSums {
    let params = GoiParams::new(2, 0.5).unwrap();
    let mut rng = block_rng(7, Domain::GoiOracle, block as u64);
    let mut acc = MomentSums::default();
    for _ in 0..2000 {
        let m = sample_goi_matrix(&params, &mut rng).unwrap();
        acc.push((m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).abs());
    }
    acc
}

fn bench_goi_blocks(c: &mut Criterion) {
    let mut group = c.benchmark_group("goi_matrix_blocks");
    let n_blocks = 16;
    group.bench_with_input(BenchmarkId::new("parallel", n_blocks), &n_blocks, |b, &n| {
        b.iter(|| run_blocks(n, goi_block))
    });
    group.bench_with_input(BenchmarkId::new("sequential", n_blocks), &n_blocks, |b, &n| {
        b.iter(|| run_blocks_seq(n, goi_block))
    });
    group.finish();
}

fn bench_synthesis_replicas(c: &mut Criterion) {
    let kernel =
        Kernel::new(Activation::gaussian_rbf((1f64 + std::f64::consts::SQRT_2).sqrt(), 0.0).unwrap())
            .unwrap();
    let spec = kernel.angular_spectrum(3, 48, 128).unwrap();
    let grid = build_grid(GridScheme::Healpix { nside: 8 }).unwrap();
    let synth = GridSynthesizer::new(&spec, &grid).unwrap();
    let replicas = 16usize;
    let work = |r: usize| {
        let field = synth.synthesize(r as u64);
        count_extrema(&field, &grid).unwrap().n_max
    };
    let mut group = c.benchmark_group("spectral_synthesis_replicas");
    group.bench_with_input(BenchmarkId::new("parallel", replicas), &replicas, |b, &n| {
        b.iter(|| run_blocks(n, work))
    });
    group.bench_with_input(
        BenchmarkId::new("sequential", replicas),
        &replicas,
        |b, &n| b.iter(|| run_blocks_seq(n, work)),
    );
    group.finish();
}

criterion_group!(benches, bench_goi_blocks, bench_synthesis_replicas);
criterion_main!(benches);
