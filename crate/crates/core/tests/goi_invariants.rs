//! Cross-checks of the GOI machinery that go beyond single-module tests:
//! estimator equivalence, probability-space partitions, density mass, and
//! continuity in the covariance parameter.

use spherecrit_core::exec::{block_rng, Domain, MomentSums};
use spherecrit_core::goi::{
    goi_density, goi_expectation_mc, goi_expectation_oracle, sample_goi_matrix, GoiParams,
    IndexSelector,
};
use spherecrit_core::quad::gauss_legendre;

#[test]
fn estimators_agree_on_parameter_grid() {
    // reduced-scale version of the acceptance matrix
    let n = 60_000;
    let mut seed = 0u64;
    for d in [1usize, 2, 3] {
        for c in [0.5, 1.5] {
            for s in [0.0, 0.5] {
                for i in 0..=d {
                    seed += 1;
                    let params = GoiParams::new(d, c).unwrap();
                    let sel = IndexSelector::new(i, s);
                    let a = goi_expectation_mc(&params, &sel, n, seed).unwrap();
                    let b = goi_expectation_oracle(&params, &sel, n / 2, seed + 1000).unwrap();
                    let joint = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
                    assert!(
                        (a.mean - b.mean).abs() <= 4.0 * joint,
                        "d={d} c={c} i={i} s={s}: {} vs {} (4sigma = {})",
                        a.mean,
                        b.mean,
                        4.0 * joint
                    );
                }
            }
        }
    }
}

#[test]
fn index_events_partition_the_absolute_determinant() {
    // sum_i E[Pi 1_i] equals E[prod |lambda_j - s|] over the GOI law
    let n = 150_000;
    for (d, c, s) in [(2usize, 0.5, 0.0), (3usize, 0.75, 0.4)] {
        let params = GoiParams::new(d, c).unwrap();
        let mut total = 0.0;
        let mut var = 0.0;
        for i in 0..=d {
            let e = goi_expectation_mc(&params, &IndexSelector::new(i, s), n, 17 + i as u64)
                .unwrap();
            total += e.mean;
            var += e.stderr * e.stderr;
        }
        // direct estimate of E[prod |l_j - s|] by matrix sampling
        let mut rng = block_rng(555, Domain::GoiOracle, 0);
        let mut acc = MomentSums::default();
        for _ in 0..n {
            let m = sample_goi_matrix(&params, &mut rng).unwrap();
            let eig = m.symmetric_eigenvalues();
            acc.push(eig.iter().map(|&l| (l - s).abs()).product());
        }
        let joint = (var + acc.stderr() * acc.stderr()).sqrt();
        assert!(
            (total - acc.mean()).abs() <= 3.0 * joint,
            "d={d}: partition {total} vs direct {}",
            acc.mean()
        );
    }
}

#[test]
fn density_has_unit_mass_d1() {
    let params = GoiParams::new(1, 0.5).unwrap();
    let rule = gauss_legendre(400).unwrap();
    let (a, b) = (-16.0f64, 16.0f64);
    let (half, mid) = (0.5 * (b - a), 0.5 * (a + b));
    let mass: f64 = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&t, &w)| w * half * goi_density(&[mid + half * t], &params).unwrap())
        .sum();
    assert!((mass - 1.0).abs() < 1e-6, "d=1 mass {mass}");
}

#[test]
fn density_has_unit_mass_d2() {
    // integrate over the ordered region l1 <= l2 in rotated coordinates
    // (u, v) with l1 = (u - v)/sqrt2, l2 = (u + v)/sqrt2, v >= 0
    for c in [0.0, 0.5, 1.5] {
        let params = GoiParams::new(2, c).unwrap();
        let rule = gauss_legendre(220).unwrap();
        let (ua, ub) = (-22.0f64, 22.0);
        let (va, vb) = (0.0f64, 22.0);
        let (uh, um) = (0.5 * (ub - ua), 0.5 * (ua + ub));
        let (vh, vm) = (0.5 * (vb - va), 0.5 * (va + vb));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut mass = 0.0;
        for (&tu, &wu) in rule.nodes.iter().zip(&rule.weights) {
            let u = um + uh * tu;
            for (&tv, &wv) in rule.nodes.iter().zip(&rule.weights) {
                let v = vm + vh * tv;
                let l1 = s * (u - v);
                let l2 = s * (u + v);
                mass += wu * wv * uh * vh * goi_density(&[l1, l2], &params).unwrap();
            }
        }
        assert!((mass - 1.0).abs() < 1e-4, "d=2 c={c} mass {mass}");
    }
}

#[test]
fn expectation_is_continuous_in_c() {
    // matched seeds: the estimator is smooth in c sample by sample
    let n = 100_000;
    let sel = IndexSelector::new(1, 0.0);
    let base = goi_expectation_mc(&GoiParams::new(2, 0.75).unwrap(), &sel, n, 33).unwrap();
    for dc in [-1e-3, 1e-3] {
        let pert =
            goi_expectation_mc(&GoiParams::new(2, 0.75 + dc).unwrap(), &sel, n, 33).unwrap();
        let joint = (base.stderr.powi(2) + pert.stderr.powi(2)).sqrt();
        assert!(
            (pert.mean - base.mean).abs() <= 5.0 * joint,
            "c-perturbation moved the estimate too far: {} vs {}",
            pert.mean,
            base.mean
        );
    }
}
