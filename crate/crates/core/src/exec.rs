//! Deterministic block execution and RNG substreams.
//!
//! Monte Carlo loops in this crate are organized as a fixed partition of the
//! sample budget into blocks. Each block owns an RNG substream derived from
//! `(master seed, domain, block index)` and produces a partial result; the
//! partials are collected in block order and reduced sequentially. The result
//! is therefore bit-identical whether blocks run on one thread or many, and
//! identical with the `parallel` feature disabled.
//!
//! With the default `parallel` feature the blocks are distributed with rayon;
//! without it they run on the calling thread. [`run_blocks_seq`] is always
//! available so benchmarks can compare the two paths directly.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of Monte Carlo samples evaluated per block.
pub const BLOCK_SAMPLES: usize = 16_384;

/// RNG stream domains. Each independent consumer of randomness derived from
/// one master seed uses its own domain so streams never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    GoiMc = 1,
    GoiOracle = 2,
    ThresholdMc = 3,
    NetworkWeights = 4,
    SpectralCoeffs = 5,
    Replica = 6,
    FrameCovariance = 7,
    Harness = 8,
}

/// RNG for one block of work: ChaCha8 keyed by the master seed, with the
/// stream id encoding `(domain, block)`.
pub fn block_rng(master_seed: u64, domain: Domain, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((domain as u64) << 48) ^ block);
    rng
}

/// Map `f` over `0..n_blocks`, preserving block order in the output.
#[cfg(feature = "parallel")]
pub fn run_blocks<T, F>(n_blocks: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n_blocks).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n_blocks`, preserving block order in the output.
#[cfg(not(feature = "parallel"))]
pub fn run_blocks<T, F>(n_blocks: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    run_blocks_seq(n_blocks, f)
}

/// Sequential fallback, kept callable unconditionally for benchmarking.
pub fn run_blocks_seq<T, F>(n_blocks: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n_blocks).map(f).collect()
}

/// Split a sample budget into `(n_blocks, last_block_len)` given BLOCK_SAMPLES.
pub fn block_layout(n_samples: usize) -> (usize, usize) {
    if n_samples == 0 {
        return (0, 0);
    }
    let n_blocks = n_samples.div_ceil(BLOCK_SAMPLES);
    let last = n_samples - (n_blocks - 1) * BLOCK_SAMPLES;
    (n_blocks, last)
}

/// Number of samples in block `b` out of `n_blocks` with `last` in the final one.
pub fn block_len(b: usize, n_blocks: usize, last: usize) -> usize {
    if b + 1 == n_blocks {
        last
    } else {
        BLOCK_SAMPLES
    }
}

/// Streaming mean/variance accumulator over block partials.
#[derive(Debug, Clone, Copy, Default)]
pub struct MomentSums {
    pub sum: f64,
    pub sum_sq: f64,
    pub n: u64,
}

impl MomentSums {
    pub fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum_sq += x * x;
        self.n += 1;
    }

    pub fn merge(&mut self, other: &MomentSums) {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.n += other.n;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Standard error of the mean (sample standard deviation / sqrt n).
    pub fn stderr(&self) -> f64 {
        let n = self.n as f64;
        let var = (self.sum_sq - self.sum * self.sum / n) / (n - 1.0);
        (var.max(0.0) / n).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn block_layout_covers_budget() {
        for n in [1, 10, BLOCK_SAMPLES, BLOCK_SAMPLES + 1, 10 * BLOCK_SAMPLES + 7] {
            let (nb, last) = block_layout(n);
            let total: usize = (0..nb).map(|b| block_len(b, nb, last)).sum();
            assert_eq!(total, n);
        }
    }

    #[test]
    fn parallel_and_sequential_blocks_agree_bitwise() {
        let work = |b: usize| {
            let mut rng = block_rng(7, Domain::GoiMc, b as u64);
            let mut acc = MomentSums::default();
            for _ in 0..1000 {
                acc.push(rng.random::<f64>());
            }
            acc
        };
        let par = run_blocks(32, work);
        let seq = run_blocks_seq(32, work);
        let mut a = MomentSums::default();
        let mut b = MomentSums::default();
        par.iter().for_each(|m| a.merge(m));
        seq.iter().for_each(|m| b.merge(m));
        assert_eq!(a.sum.to_bits(), b.sum.to_bits());
        assert_eq!(a.sum_sq.to_bits(), b.sum_sq.to_bits());
    }

    #[test]
    fn streams_differ_across_domains_and_blocks() {
        let mut a = block_rng(1, Domain::GoiMc, 0);
        let mut b = block_rng(1, Domain::GoiMc, 1);
        let mut c = block_rng(1, Domain::GoiOracle, 0);
        let (x, y, z): (u64, u64, u64) = (a.random(), b.random(), c.random());
        assert_ne!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn moment_sums_match_direct_formulas() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let mut m = MomentSums::default();
        xs.iter().for_each(|&x| m.push(x));
        assert!((m.mean() - 3.0).abs() < 1e-15);
        // sample std of 1..5 is sqrt(2.5)
        assert!((m.stderr() - (2.5f64 / 5.0).sqrt()).abs() < 1e-15);
    }
}
