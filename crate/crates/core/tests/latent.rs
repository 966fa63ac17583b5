mod common;

use common::oracles::{bivariate_box_moments, truncated_moments_quadrature};
use epinet::data::{CutPointTable, GenotypeMatrix};
use epinet::latent::{
    approx_expected_covariance, ghk_log_likelihood, truncated_normal_moments, GibbsConfig,
    GibbsSampler,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn bound() -> impl Strategy<Value = (f64, f64)> {
    (
        prop_oneof![1 => Just(f64::NEG_INFINITY), 9 => -5.0..5.0f64],
        prop_oneof![1 => Just(f64::INFINITY), 9 => 0.05..5.0f64],
    )
        .prop_map(|(a, w)| {
            if a.is_infinite() {
                (a, if w.is_infinite() { w } else { w - 2.5 })
            } else {
                (a, a + w)
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn moments_match_quadrature(
        mu in -2.0..2.0f64,
        sigma in 0.3..2.5f64,
        (t1, t2) in bound(),
    ) {
        let (m1, m2) = truncated_normal_moments(mu, sigma, t1, t2).unwrap();
        let (q1, q2) = truncated_moments_quadrature(mu, sigma, t1, t2);
        prop_assert!((m1 - q1).abs() <= 1e-8, "m1 {} vs {}", m1, q1);
        prop_assert!((m2 - q2).abs() <= 1e-8, "m2 {} vs {}", m2, q2);
    }
}

fn two_marker_matrix(rows: &[(u8, u8)], k: usize) -> GenotypeMatrix {
    let rows: Vec<Vec<Option<u8>>> = rows.iter().map(|&(a, b)| vec![Some(a), Some(b)]).collect();
    GenotypeMatrix::from_rows(vec!["a".into(), "b".into()], &rows)
        .unwrap()
        .with_states(vec![k, k])
        .unwrap()
}

fn corr_precision(rho: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]).try_inverse().unwrap()
}

/// Gibbs second moments on every cell of a 3x3 discretised bivariate normal
/// against the quadrature oracle: per replicate deviation within three
/// replicate standard deviations for at least 95% of entries, and the
/// replicate mean within four standard errors.
#[test]
fn gibbs_matches_bivariate_quadrature() {
    let cells: Vec<(u8, u8)> = (0..3).flat_map(|a| (0..3).map(move |b| (a, b))).collect();
    let instances = [
        (0.5, vec![-0.4, 0.6], vec![-0.8, 0.3]),
        (-0.7, vec![-1.0, 0.2], vec![-0.2, 0.9]),
        (0.85, vec![-0.3, 0.3], vec![-0.5, 0.5]),
    ];
    let reps = 24;
    let mut within = 0;
    let mut total = 0;
    for (rho, c1, c2) in instances {
        let g = two_marker_matrix(&cells, 3);
        let cuts = CutPointTable::from_interior(vec![c1, c2]).unwrap();
        let mut oracle = [0.0; 3];
        for &(a, b) in &cells {
            let (lo1, hi1) = cuts.interval(0, Some(a));
            let (lo2, hi2) = cuts.interval(1, Some(b));
            let (_, m11, m12, m22) = bivariate_box_moments(rho, lo1, hi1, lo2, hi2);
            oracle[0] += m11 / 9.0;
            oracle[1] += m12 / 9.0;
            oracle[2] += m22 / 9.0;
        }
        let theta = corr_precision(rho);
        let draws: Vec<[f64; 3]> = (0..reps)
            .map(|r| {
                let cfg = GibbsConfig {
                    sweeps: 2000,
                    burn_in: 200,
                    seed: 1000 + r,
                    ..GibbsConfig::default()
                };
                let m = GibbsSampler::new(&g, &cuts, cfg).unwrap().estep(&theta).unwrap().rbar;
                [m[(0, 0)], m[(0, 1)], m[(1, 1)]]
            })
            .collect();
        for e in 0..3 {
            let mean = draws.iter().map(|d| d[e]).sum::<f64>() / reps as f64;
            let sd = (draws.iter().map(|d| (d[e] - mean).powi(2)).sum::<f64>()
                / (reps - 1) as f64)
                .sqrt();
            assert!(
                (mean - oracle[e]).abs() <= 4.0 * sd / (reps as f64).sqrt(),
                "rho {rho} entry {e}: mean {mean} oracle {}",
                oracle[e]
            );
            for d in &draws {
                total += 1;
                within += usize::from((d[e] - oracle[e]).abs() <= 3.0 * sd);
            }
        }
    }
    assert!(within as f64 >= 0.95 * total as f64, "{within}/{total}");
}

fn random_correlation(p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(p, p + 3, |_, _| rng.random::<f64>() - 0.5);
    let s = &a * a.transpose();
    let d: Vec<f64> = (0..p).map(|i| s[(i, i)].sqrt()).collect();
    DMatrix::from_fn(p, p, |i, j| s[(i, j)] / (d[i] * d[j]))
}

#[test]
fn fully_missing_data_returns_the_model_covariance() {
    let p = 4;
    let n = 40;
    let sigma = random_correlation(p, 9);
    let theta = sigma.clone().try_inverse().unwrap();
    let names = (0..p).map(|j| format!("m{j}")).collect();
    let g = GenotypeMatrix::new(names, n, vec![None; n * p])
        .unwrap()
        .with_states(vec![3; p])
        .unwrap();
    let cuts = CutPointTable::from_interior(vec![vec![-0.5, 0.5]; p]).unwrap();

    let approx = approx_expected_covariance(&g, &cuts, &theta).unwrap();
    assert!((&approx.rbar - &sigma).amax() < 1e-12);

    let cfg = GibbsConfig {
        sweeps: 500,
        burn_in: 100,
        seed: 3,
        ..GibbsConfig::default()
    };
    let gibbs = GibbsSampler::new(&g, &cuts, cfg).unwrap().estep(&theta).unwrap();
    // each entry averages n * sweeps autocorrelated draws
    let se = (2.0f64 / (n * 500) as f64).sqrt() * 3.0;
    assert!((&gibbs.rbar - &sigma).amax() < 4.0 * se, "{}", (&gibbs.rbar - &sigma).amax());
}

#[test]
fn approx_and_gibbs_agree_for_weak_dependence() {
    let p = 5;
    let n = 200;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let values: Vec<Option<u8>> = (0..n * p).map(|_| Some(rng.random_range(0..3u8))).collect();
    let g = GenotypeMatrix::new((0..p).map(|j| format!("m{j}")).collect(), n, values).unwrap();
    let cuts = epinet::data::estimate_cutpoints(&g).unwrap();
    let mut theta = DMatrix::identity(p, p);
    for j in 0..p - 1 {
        theta[(j, j + 1)] = -0.1;
        theta[(j + 1, j)] = -0.1;
    }
    let a = approx_expected_covariance(&g, &cuts, &theta).unwrap().rbar;
    let cfg = GibbsConfig {
        sweeps: 400,
        burn_in: 100,
        seed: 5,
        ..GibbsConfig::default()
    };
    let b = GibbsSampler::new(&g, &cuts, cfg).unwrap().estep(&theta).unwrap().rbar;
    assert!((&a - &b).amax() < 0.05, "{}", (&a - &b).amax());
}

#[test]
fn gibbs_likelihood_tracks_ghk() {
    // l_y = Q - H from the Gibbs E-step against the simulated cell
    // probabilities at the same precision
    let rho: f64 = 0.6;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let rows: Vec<(u8, u8)> = (0..300)
        .map(|_| {
            let z1: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            let e: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            let z2 = rho * z1 + (1.0 - rho * rho).sqrt() * e;
            (u8::from(z1 > -0.3) + u8::from(z1 > 0.6), u8::from(z2 > 0.0) + u8::from(z2 > 0.8))
        })
        .collect();
    let g = two_marker_matrix(&rows, 3);
    let cuts = epinet::data::estimate_cutpoints(&g).unwrap();
    let theta = corr_precision(rho);
    let cfg = GibbsConfig {
        sweeps: 2000,
        burn_in: 200,
        seed: 8,
        ..GibbsConfig::default()
    };
    let m = GibbsSampler::new(&g, &cuts, cfg).unwrap().estep(&theta).unwrap();
    let n = g.n() as f64;
    let q = 0.5
        * n
        * (theta.determinant().ln()
            - m.rbar.component_mul(&theta).sum()
            - 2.0 * (2.0 * std::f64::consts::PI).ln());
    let ly = q + m.entropy;
    let exact: f64 = (0..g.n())
        .map(|i| {
            let (a1, b1) = cuts.interval(0, g.get(i, 0));
            let (a2, b2) = cuts.interval(1, g.get(i, 1));
            bivariate_box_moments(rho, a1, b1, a2, b2).0.ln()
        })
        .sum();
    let ghk = ghk_log_likelihood(&g, &cuts, &theta.clone().try_inverse().unwrap(), 2000, 1).unwrap();
    assert!((ghk - exact).abs() < 1e-2 * exact.abs(), "ghk {ghk} exact {exact}");
    // the pseudo-entropy is a lower bound on the entropy in expectation
    assert!(ly <= exact + 0.02 * exact.abs(), "Q - H {ly} exact {exact}");
    assert!((ly - exact).abs() < 0.05 * exact.abs(), "Q - H {ly} exact {exact}");
}
