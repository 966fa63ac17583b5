//! Acceptance criteria. Each test prints one `ACCEPTANCE <id> PASS|FAIL`
//! line to stderr (bypassing output capture). Mechanical criteria (7-9 and
//! the exact parts of 6) panic on failure; the statistical reproduction
//! criteria only report unless `EPINET_ACCEPTANCE_STRICT=1` is set.

#[path = "../../core/tests/common/oracles.rs"]
mod oracles;

use epinet::data::{estimate_cutpoints, CutPointTable, GenotypeMatrix};
use epinet::em::{ebic_select, fit_path, EMConfig, DEFAULT_FLOOR, DEFAULT_GRID};
use epinet::evaluation::{
    baseline_path, confusion_metrics, npn_ns, npn_tau, oracle_f1, path_adjacencies, path_roc, roc_curve,
    BaselinePath,
};
use epinet::glasso::{glasso_fit, kkt_check, GlassoOptions};
use epinet::latent::{
    approx_expected_covariance, heidelberger_welch, truncated_normal_moments, EStepMethod, GibbsConfig,
    GibbsSampler,
};
use epinet::rng::{derive_seed, rng_for};
use epinet::simulate::{simulate_genotypes, simulate_network, Latent, SimulationSpec, TrueNetwork};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

const SEEDS: u64 = 20;
const P: usize = 90;
const N: usize = 360;

fn strict() -> bool {
    std::env::var("EPINET_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1")
}

fn report(id: &str, pass: bool, hard: bool, detail: &str) {
    let line = format!("ACCEPTANCE {id} {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    if !pass && (hard || strict()) {
        panic!("criterion {id} failed: {detail}");
    }
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn gibbs_cfg() -> EMConfig {
    EMConfig {
        e_step: EStepMethod::Gibbs,
        em_max_iter: 10,
        gibbs: GibbsConfig {
            sweeps: 25,
            burn_in: 100,
            warm_burn_in: 10,
            ..GibbsConfig::default()
        },
        ..EMConfig::default()
    }
}

fn approx_cfg() -> EMConfig {
    EMConfig {
        e_step: EStepMethod::Approx,
        ..EMConfig::default()
    }
}

fn scenario(spec: &SimulationSpec) -> (TrueNetwork, GenotypeMatrix, CutPointTable) {
    let net = simulate_network(spec).unwrap();
    let (mut g, _) = simulate_genotypes(&net, spec).unwrap();
    g.collapse_empty_categories();
    let cuts = estimate_cutpoints(&g).unwrap();
    (net, g, cuts)
}

fn spec(p: usize, n: usize, groups: usize, latent: Latent, seed: u64) -> SimulationSpec {
    SimulationSpec::new(p, n, 3, groups, latent, seed)
}

#[derive(Clone, Debug)]
struct Run {
    f1: f64,
    spe: f64,
    oracle_f1: f64,
    auc: f64,
    deviance_df_ok: bool,
    p_value: f64,
    saturated_error: f64,
}

fn log_det(m: &DMatrix<f64>) -> f64 {
    let l = m.clone().cholesky().expect("positive definite").l();
    2.0 * (0..m.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

fn run_em(s: &SimulationSpec, cfg: &EMConfig) -> Run {
    let (net, g, cuts) = scenario(s);
    let mut cfg = cfg.clone();
    cfg.gibbs.seed = derive_seed(s.seed, &[0xacce]);
    let path = fit_path(&g, &cuts, None, &cfg).unwrap();
    let k = ebic_select(&path, 0.5).unwrap();
    let fit = path.fit(k).unwrap();
    let m = confusion_metrics(&fit.solution.adjacency(), &net.adjacency).unwrap();
    let d = &fit.diagnostics;
    let (n, p) = (g.n() as f64, g.p() as f64);
    let saturated = -0.5 * n * log_det(&fit.moments.rbar) - 0.5 * n * p;
    Run {
        f1: m.f1,
        spe: m.spe,
        oracle_f1: oracle_f1(&path_adjacencies(&path), &net.adjacency).unwrap(),
        auc: path_roc(&path, &net.adjacency).unwrap().auc,
        deviance_df_ok: d.deviance_df == g.p() * (g.p() - 1) / 2 - fit.solution.df(),
        p_value: d.p_value,
        saturated_error: (d.loglik_saturated - saturated).abs() / saturated.abs(),
    }
}

fn runs(cell: &'static OnceLock<Vec<Run>>, latent: Latent, cfg: fn() -> EMConfig) -> &'static [Run] {
    cell.get_or_init(|| (1..=SEEDS).map(|seed| run_em(&spec(P, N, 5, latent, seed), &cfg())).collect())
}

static GIBBS: OnceLock<Vec<Run>> = OnceLock::new();
static APPROX: OnceLock<Vec<Run>> = OnceLock::new();
static T3: OnceLock<Vec<Run>> = OnceLock::new();

fn gibbs_runs() -> &'static [Run] {
    runs(&GIBBS, Latent::Normal, gibbs_cfg)
}

fn approx_runs() -> &'static [Run] {
    runs(&APPROX, Latent::Normal, approx_cfg)
}

fn baseline(g: &GenotypeMatrix, tau: bool) -> BaselinePath {
    let r = if tau { npn_tau(g).unwrap() } else { npn_ns(g).unwrap() };
    let grid = epinet::em::default_lambdas(&r, DEFAULT_GRID, DEFAULT_FLOOR);
    baseline_path(&r, g.n(), &grid, &GlassoOptions::default()).unwrap()
}

#[test]
fn criterion_1_gibbs_table_reproduction() {
    let t = Instant::now();
    let r = gibbs_runs();
    let f1 = mean(r.iter().map(|x| x.f1));
    let oracle = mean(r.iter().map(|x| x.oracle_f1));
    let spe = mean(r.iter().map(|x| x.spe));
    let pass = (0.66..=0.86).contains(&f1) && (0.73..=0.93).contains(&oracle) && spe >= 0.94;
    report(
        "1",
        pass,
        false,
        &format!(
            "Gibbs+eBIC(0.5) p=90 n=360 over {SEEDS} seeds: F1 {f1:.3} (want [0.66,0.86]), oracle F1 {oracle:.3} (want [0.73,0.93]), SPE {spe:.3} (want >= 0.94); {:.0} s",
            t.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_2_approx_table_reproduction() {
    let t = Instant::now();
    let a = approx_runs();
    let g = gibbs_runs();
    let f1 = mean(a.iter().map(|x| x.f1));
    let gap = mean(a.iter().zip(g).map(|(x, y)| x.f1 - y.f1));
    let pass = (0.60..=0.80).contains(&f1) && gap <= 0.05;
    report(
        "2",
        pass,
        false,
        &format!(
            "approx+eBIC(0.5): F1 {f1:.3} (want [0.60,0.80]), mean matched-seed approx-Gibbs F1 gap {gap:+.3} (want <= 0.05); {:.0} s",
            t.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_3_baseline_auc_ordering() {
    let t = Instant::now();
    let g = gibbs_runs();
    let a = approx_runs();
    let mut tau = Vec::new();
    let mut ns = Vec::new();
    for seed in 1..=SEEDS {
        let (net, geno, _) = scenario(&spec(P, N, 5, Latent::Normal, seed));
        for (is_tau, out) in [(true, &mut tau), (false, &mut ns)] {
            let bp = baseline(&geno, is_tau);
            out.push(roc_curve(&bp.adjacencies(), &net.adjacency).unwrap().auc);
        }
    }
    let (ag, aa) = (mean(g.iter().map(|x| x.auc)), mean(a.iter().map(|x| x.auc)));
    let (at, an) = (mean(tau.iter().copied()), mean(ns.iter().copied()));
    let pass = ag - aa >= -0.02 && aa - at.max(an) >= -0.02;
    let beats = g.iter().zip(&tau).filter(|(x, t)| x.auc >= **t).count();
    report(
        "3",
        pass,
        false,
        &format!(
            "mean AUC Gibbs {ag:.3} >= approx {aa:.3} >= max(NPN-tau {at:.3}, NPN-ns {an:.3}) up to -0.02; Gibbs >= NPN-tau on {beats}/{SEEDS} seeds; {:.0} s",
            t.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_4_t3_robustness() {
    let t = Instant::now();
    let r = runs(&T3, Latent::T3, gibbs_cfg);
    let f1 = mean(r.iter().map(|x| x.f1));
    let oracle = mean(r.iter().map(|x| x.oracle_f1));
    report(
        "4",
        (0.65..=0.85).contains(&f1),
        false,
        &format!(
            "t(3) latent, Gibbs+eBIC(0.5): F1 {f1:.3} (want [0.65,0.85]; oracle F1 {oracle:.3}); {:.0} s",
            t.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_5_high_dimensional_smoke() {
    let s = spec(300, 200, 10, Latent::Normal, 1);
    let (net, g, cuts) = scenario(&s);
    let t = Instant::now();
    let path = fit_path(&g, &cuts, None, &approx_cfg()).unwrap();
    let k = ebic_select(&path, 0.5).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let m = confusion_metrics(&path.fit(k).unwrap().solution.adjacency(), &net.adjacency).unwrap();
    let mut npn = Vec::new();
    for is_tau in [true, false] {
        let bp = baseline(&g, is_tau);
        let kb = bp.ebic_select(0.5).unwrap();
        let a = bp.solutions[kb].as_ref().unwrap().adjacency();
        npn.push(confusion_metrics(&a, &net.adjacency).unwrap().sen);
    }
    let pass = secs < 3600.0 && m.spe >= 0.98 && m.sen > 0.0 && npn.iter().all(|&x| x <= 0.1);
    report(
        "5",
        pass,
        false,
        &format!(
            "p=300 n=200 approx: {secs:.0} s (want < 3600), SPE {:.4} (want >= 0.98), SEN {:.3} (want > 0); NPN-tau SEN {:.3}, NPN-ns SEN {:.3} (want <= 0.1)",
            m.spe, m.sen, npn[0], npn[1]
        ),
    );
}

#[test]
fn criterion_6_deviance_mechanics() {
    let r = gibbs_runs();
    let df_ok = r.iter().all(|x| x.deviance_df_ok);
    let above = r.iter().filter(|x| x.p_value > 0.05).count();
    let sat = r.iter().map(|x| x.saturated_error).fold(0.0, f64::max);
    let exact = df_ok && sat <= 1e-12;
    let pass = exact && above as f64 >= 0.9 * r.len() as f64;
    // the p-value share depends on which model eBIC selects; the rest is exact
    report(
        "6",
        pass,
        !exact,
        &format!(
            "df = 4005 - edges on all seeds: {df_ok}; p-value > 0.05 on {above}/{} seeds (want >= 90%); saturated formula max relative error {sat:.1e}",
            r.len()
        ),
    );
}

fn random_bound<R: Rng>(rng: &mut R) -> (f64, f64) {
    let lower_inf = rng.random::<f64>() < 0.1;
    let upper_inf = rng.random::<f64>() < 0.1;
    let w = rng.random_range(0.05..5.0);
    match (lower_inf, upper_inf) {
        (true, true) => (f64::NEG_INFINITY, f64::INFINITY),
        (true, false) => (f64::NEG_INFINITY, w - 2.5),
        (false, true) => (rng.random_range(-5.0..5.0), f64::INFINITY),
        (false, false) => {
            let a = rng.random_range(-5.0..5.0);
            (a, a + w)
        }
    }
}

fn sample_cov<R: Rng>(p: usize, n: usize, rng: &mut R) -> DMatrix<f64> {
    let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() - 0.5);
    x.tr_mul(&x) / n as f64
}

fn gibbs_quadrature_fraction() -> f64 {
    let cells: Vec<Vec<Option<u8>>> =
        (0..3).flat_map(|a| (0..3).map(move |b| vec![Some(a), Some(b)])).collect();
    let g = GenotypeMatrix::from_rows(vec!["a".into(), "b".into()], &cells)
        .unwrap()
        .with_states(vec![3, 3])
        .unwrap();
    let instances = [
        (0.5, vec![-0.4, 0.6], vec![-0.8, 0.3]),
        (-0.7, vec![-1.0, 0.2], vec![-0.2, 0.9]),
        (0.85, vec![-0.3, 0.3], vec![-0.5, 0.5]),
    ];
    let reps = 24;
    let (mut within, mut total) = (0, 0);
    for (rho, c1, c2) in instances {
        let cuts = CutPointTable::from_interior(vec![c1, c2]).unwrap();
        let mut oracle = [0.0; 3];
        for row in &cells {
            let (lo1, hi1) = cuts.interval(0, row[0]);
            let (lo2, hi2) = cuts.interval(1, row[1]);
            let (_, m11, m12, m22) = oracles::bivariate_box_moments(rho, lo1, hi1, lo2, hi2);
            oracle[0] += m11 / 9.0;
            oracle[1] += m12 / 9.0;
            oracle[2] += m22 / 9.0;
        }
        let theta = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]).try_inverse().unwrap();
        let draws: Vec<[f64; 3]> = (0..reps)
            .map(|r| {
                let cfg = GibbsConfig {
                    sweeps: 2000,
                    burn_in: 200,
                    seed: 5000 + r,
                    ..GibbsConfig::default()
                };
                let m = GibbsSampler::new(&g, &cuts, cfg).unwrap().estep(&theta).unwrap().rbar;
                [m[(0, 0)], m[(0, 1)], m[(1, 1)]]
            })
            .collect();
        for e in 0..3 {
            let mu = draws.iter().map(|d| d[e]).sum::<f64>() / reps as f64;
            let sd = (draws.iter().map(|d| (d[e] - mu).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
            for d in &draws {
                total += 1;
                within += usize::from((d[e] - oracle[e]).abs() <= 3.0 * sd);
            }
        }
    }
    within as f64 / total as f64
}

fn full_missing_errors() -> (f64, f64, f64) {
    let (p, n) = (4, 40);
    let mut rng = rng_for(9, &[1]);
    let a = DMatrix::from_fn(p, p + 3, |_, _| rng.random::<f64>() - 0.5);
    let s = &a * a.transpose();
    let d: Vec<f64> = (0..p).map(|i| s[(i, i)].sqrt()).collect();
    let sigma = DMatrix::from_fn(p, p, |i, j| s[(i, j)] / (d[i] * d[j]));
    let theta = sigma.clone().try_inverse().unwrap();
    let g = GenotypeMatrix::new((0..p).map(|j| format!("m{j}")).collect(), n, vec![None; n * p])
        .unwrap()
        .with_states(vec![3; p])
        .unwrap();
    let cuts = CutPointTable::from_interior(vec![vec![-0.5, 0.5]; p]).unwrap();
    let approx = approx_expected_covariance(&g, &cuts, &theta).unwrap().rbar;
    let cfg = GibbsConfig {
        sweeps: 500,
        burn_in: 100,
        seed: 3,
        ..GibbsConfig::default()
    };
    let gibbs = GibbsSampler::new(&g, &cuts, cfg).unwrap().estep(&theta).unwrap().rbar;
    let se = 3.0 * (2.0f64 / (n * 500) as f64).sqrt();
    ((&approx - &sigma).amax(), (&gibbs - &sigma).amax(), 4.0 * se)
}

#[test]
fn criterion_7_oracle_equivalence() {
    let mut rng = rng_for(7, &[0]);
    let mut moment_err: f64 = 0.0;
    for _ in 0..1000 {
        let mu = rng.random_range(-2.0..2.0);
        let sigma = rng.random_range(0.3..2.5);
        let (t1, t2) = random_bound(&mut rng);
        let (m1, m2) = truncated_normal_moments(mu, sigma, t1, t2).unwrap();
        let (q1, q2) = oracles::truncated_moments_quadrature(mu, sigma, t1, t2);
        moment_err = moment_err.max((m1 - q1).abs()).max((m2 - q2).abs());
    }

    let tight = GlassoOptions {
        tol: Some(1e-7),
        ..GlassoOptions::default()
    };
    let mut kkt: f64 = 0.0;
    let mut inv_err: f64 = 0.0;
    for _ in 0..200 {
        let p = rng.random_range(2..=20);
        let s = sample_cov(p, p + rng.random_range(1..30), &mut rng);
        let lmax = (0..p)
            .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| s[(i, j)].abs())
            .fold(0.0, f64::max);
        let lambda = rng.random_range(0.0..1.2) * lmax;
        let sol = glasso_fit(&s, lambda, &tight, None).unwrap();
        kkt = kkt.max(kkt_check(&sol, &s));
        let s0 = sample_cov(p, 3 * p + 10, &mut rng);
        let sol0 = glasso_fit(&s0, 0.0, &tight, None).unwrap();
        let inv = s0.clone().try_inverse().unwrap();
        inv_err = inv_err.max((&sol0.theta - &inv).amax() / inv.amax());
    }

    let frac = gibbs_quadrature_fraction();
    let (approx_err, gibbs_err, gibbs_tol) = full_missing_errors();
    let pass = moment_err <= 1e-8
        && kkt <= 1e-5
        && inv_err <= 1e-6
        && frac >= 0.95
        && approx_err <= 1e-12
        && gibbs_err <= gibbs_tol;
    report(
        "7",
        pass,
        true,
        &format!(
            "moments max |d| {moment_err:.1e} (<= 1e-8); glasso KKT max {kkt:.1e} (<= 1e-5, tol 1e-7), lambda=0 vs inverse rel {inv_err:.1e} (<= 1e-6); Gibbs within 3 MC SE {:.1}% (>= 95%); full-missing approx {approx_err:.1e}, Gibbs {gibbs_err:.3} (<= {gibbs_tol:.3})",
            100.0 * frac
        ),
    );
}

fn epinet(args: &[&str]) {
    let o = Command::new(env!("CARGO_BIN_EXE_epinet"))
        .args(args)
        .env_remove("EPINET_THREADS")
        .output()
        .unwrap();
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn output_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && !p.to_str().unwrap().ends_with(".manifest.json"))
        .map(|p| (p.file_name().unwrap().to_str().unwrap().to_string(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn criterion_8_determinism_across_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let mut trees = Vec::new();
    for (tag, threads) in [("a", "1"), ("b", "4"), ("c", "1"), ("d", "3")] {
        let base = root.join(tag);
        let d = |x: &str| base.join(x).to_str().unwrap().to_string();
        let t = ["--seed", "11", "--threads", threads];
        epinet(&[&["simulate", "--p", "24", "--n", "120", "--groups", "3", "--out", &d("sim")][..], &t].concat());
        let geno = d("sim/genotypes.csv");
        let map = d("sim/map.tsv");
        let gibbs = [
            "--estep", "gibbs", "--sweeps", "20", "--burn-in", "30", "--warm-burn-in", "5", "--em-max-iter", "4",
        ];
        epinet(&[&["fit", "--in", &geno, "--map", &map, "--grid", "8", "--trace", "2", "--out", &d("fit")][..], &gibbs, &t].concat());
        epinet(&[&["fit", "--in", &geno, "--method", "npn-ns", "--out", &d("npn")][..], &t].concat());
        epinet(
            &[&["fit", "--in", &geno, "--estep", "approx", "--select", "stars", "--subsamples", "4", "--grid", "6", "--out", &d("stars")][..], &t]
                .concat(),
        );
        epinet(&[&["bootstrap", "--in", &geno, "--estep", "approx", "--replicates", "4", "--out", &d("boot")][..], &t].concat());
        epinet(
            &[&["evaluate", "--est", &d("fit/edges.tsv"), "--true", &d("sim/truth.tsv"), "--path", &d("fit/path_edges.tsv"), "--out", &d("eval")][..], &t]
                .concat(),
        );
        epinet(&[&["roc", "--path", &d("fit/path_edges.tsv"), "--true", &d("sim/truth.tsv"), "--out", &d("roc")][..], &t].concat());
        let files: Vec<(String, Vec<(String, Vec<u8>)>)> = ["sim", "fit", "npn", "stars", "boot", "eval", "roc"]
            .iter()
            .map(|s| (s.to_string(), output_files(&base.join(s))))
            .collect();
        trees.push(files);
    }
    let count: usize = trees[0].iter().map(|(_, f)| f.len()).sum();
    let identical = trees.iter().all(|t| t == &trees[0]);
    report(
        "8",
        identical && count > 0,
        true,
        &format!("{count} output files from 7 CLI runs byte-identical across threads 1/4/1/3: {identical}"),
    );
}

/// Kolmogorov distribution tail `P(K > x)`.
fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        s += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * x * x).exp();
    }
    s.clamp(0.0, 1.0)
}

#[test]
fn criterion_9_heidelberger_welch_sanity() {
    let chains = 500;
    let mut passed_at_start = 0;
    let mut pv = Vec::with_capacity(chains);
    for c in 0..chains {
        let mut rng = rng_for(2024, &[c as u64]);
        let chain: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = heidelberger_welch(&chain).unwrap();
        passed_at_start += usize::from(r.passed && r.start == 0);
        pv.push(r.initial_p_value);
    }
    pv.sort_by(f64::total_cmp);
    let n = pv.len() as f64;
    let d = pv
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max);
    let ks_p = kolmogorov_sf((n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d);
    let rate = passed_at_start as f64 / n;
    report(
        "9",
        rate >= 0.9 && ks_p >= 0.01,
        true,
        &format!("500 iid chains: pass rate at start 0 {:.1}% (>= 90%), KS uniformity D {d:.4} p {ks_p:.3} (>= 0.01)", 100.0 * rate),
    );
}
