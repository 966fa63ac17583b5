use crate::config::{Method, RunConfig};
use crate::formats;
use crate::manifest::Recorder;
use crate::Failure;
use epinet::data::{
    estimate_cutpoints, load_genotypes, load_map, prepare, write_genotypes, write_map, DataConfig, Delimiter,
    GenotypeMatrix, MarkerMap,
};
use epinet::em::{
    default_lambdas, ebic_values, fit_path_with, initial_theta, select_index, EStep, PrecisionPath, Selection,
};
use epinet::evaluation::{
    baseline_path, bootstrap_network, confusion_metrics, npn_ns, npn_tau, oracle_f1, roc_curve, BootstrapConfig,
};
use epinet::latent::{heidelberger_welch, write_stationarity_tsv, EStepMethod};
use epinet::rng::derive_seed;
use epinet::simulate::{simulate_genotypes, simulate_network, SimulationSpec};
use nalgebra::DMatrix;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const FIT_TAG: u64 = 1;
const SELECT_TAG: u64 = 2;
const BOOTSTRAP_TAG: u64 = 3;

pub struct Context {
    pub out: PathBuf,
    pub config_file: Option<PathBuf>,
    pub cfg: RunConfig,
    pub threads: usize,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn recorder(&self, command: &str) -> Result<Recorder, Failure> {
        let mut rec = Recorder::new(command);
        if let Some(c) = &self.config_file {
            rec.input(c)?;
        }
        rec.seeds.insert("master".into(), self.cfg.seed());
        Ok(rec)
    }

    fn finish(&self, rec: Recorder) -> Result<(), Failure> {
        rec.finish(&self.out, &self.cfg, self.threads)?;
        Ok(())
    }
}

fn require(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("input file {} not found", path.display())))
    }
}

fn read_text(path: &Path, rec: &mut Recorder) -> Result<String, Failure> {
    require(path)?;
    rec.input(path)?;
    Ok(std::fs::read_to_string(path)?)
}

fn load_input(
    ctx: &Context,
    rec: &mut Recorder,
    input: &Path,
    map: Option<&Path>,
) -> Result<(GenotypeMatrix, MarkerMap), Failure> {
    require(input)?;
    rec.input(input)?;
    if let Some(m) = map {
        require(m)?;
        rec.input(m)?;
    }
    let (g, map) = load_genotypes(input, Delimiter::from_path(input), map, ctx.cfg.data.states)?;
    let prep = prepare(
        &g,
        &map,
        &DataConfig {
            missing_cap: ctx.cfg.data.missing_cap,
        },
    )?;
    let dropped: Vec<&str> = prep.report.dropped.iter().map(|&j| g.names()[j].as_str()).collect();
    rec.result("dropped_markers", dropped);
    Ok((prep.geno, prep.map))
}

pub fn simulate(ctx: &Context) -> Result<(), Failure> {
    let mut rec = ctx.recorder("simulate")?;
    let s = &ctx.cfg.simulate;
    let spec = SimulationSpec {
        p: s.p,
        n: s.n,
        k: s.k,
        groups: s.groups,
        alpha: s.alpha,
        beta: s.beta,
        latent: s.latent,
        seed: ctx.cfg.seed(),
        cut_quantiles: s.cut_quantiles.clone(),
    };
    spec.check().map_err(|e| Failure::Usage(e.to_string()))?;
    let net = simulate_network(&spec)?;
    let (g, _) = simulate_genotypes(&net, &spec)?;
    let map = net.marker_map();
    let names = g.names().to_vec();

    let geno = ctx.path("genotypes.csv");
    write_genotypes(&geno, &g, Delimiter::Csv)?;
    rec.record(geno);
    let map_path = ctx.path("map.tsv");
    write_map(&map_path, &map)?;
    rec.record(map_path);
    rec.write(ctx.path("truth.tsv"), &formats::edge_list(&names, &net.theta))?;
    rec.write(ctx.path("truth_precision.tsv"), &formats::dense(&names, &net.theta))?;
    rec.result("edges", net.edge_count());
    rec.result("spec", &spec);
    ctx.finish(rec)
}

struct FitOutcome {
    theta: DMatrix<f64>,
    table: String,
    triplets: String,
}

fn grid_for(ctx: &Context, base: &DMatrix<f64>) -> Result<Vec<f64>, Failure> {
    let path = &ctx.cfg.path;
    if let Some(l) = &path.lambdas {
        return Ok(l.clone());
    }
    if path.grid == 0 || !(path.floor > 0.0 && path.floor <= 1.0) {
        return Err(Failure::Usage("grid must be positive and floor in (0, 1]".into()));
    }
    Ok(default_lambdas(base, path.grid, path.floor))
}

fn ebic_gamma(sel: &Selection) -> f64 {
    match *sel {
        Selection::Ebic { gamma } => gamma,
        Selection::Stars { .. } => 0.5,
    }
}

fn fit_copula(ctx: &Context, rec: &mut Recorder, g: &GenotypeMatrix) -> Result<FitOutcome, Failure> {
    let seed = ctx.cfg.seed();
    let cuts = estimate_cutpoints(g)?;
    let em = ctx.cfg.em.clone();
    em.check().map_err(|e| Failure::Usage(e.to_string()))?;
    rec.seeds.insert("gibbs".into(), em.gibbs.seed);
    let mut estep = EStep::new(g, &cuts, &em)?;
    let grid = match &ctx.cfg.path.lambdas {
        Some(l) => l.clone(),
        None => {
            // same chain sequence as a path fitted on its default grid
            let (m, _) = estep.run(&initial_theta(g, em.init))?;
            grid_for(ctx, &m.rbar)?
        }
    };
    let path = fit_path_with(&mut estep, g, Some(&grid), &em)?;
    let select_seed = derive_seed(seed, &[SELECT_TAG]);
    rec.seeds.insert("select".into(), select_seed);
    let k = select_index(&path, g, &cuts, &em, &ctx.cfg.select, select_seed)?;
    let fit = path.fit(k).expect("selected entry has a fit");

    if em.e_step == EStepMethod::Gibbs && em.gibbs.trace > 0 {
        let mut reports = Vec::new();
        for chain in &fit.moments.traces {
            match heidelberger_welch(chain) {
                Ok(r) => reports.push(r),
                Err(e) => log::warn!("stationarity diagnostic skipped: {e}"),
            }
        }
        let mut buf = Vec::new();
        write_stationarity_tsv(&reports, &mut buf)?;
        rec.write(ctx.path("stationarity.tsv"), &String::from_utf8_lossy(&buf))?;
    }

    let table = path_table(&path, ebic_gamma(&ctx.cfg.select), k);
    let names = g.names();
    let thetas: Vec<(usize, f64, &DMatrix<f64>)> = path
        .entries
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.fit.as_ref().map(|f| (i, e.lambda, &f.solution.theta)))
        .collect();
    rec.result("lambdas", path.lambdas());
    rec.result("selected_index", k);
    rec.result("selected_lambda", path.entries[k].lambda);
    rec.result("edges", fit.solution.df());
    rec.result("diagnostics", &fit.diagnostics);
    rec.result("em_iterations", fit.iterations);
    rec.result("em_converged", fit.converged);
    rec.result(
        "path_errors",
        path.entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.error.as_ref().map(|m| (i, m.clone())))
            .collect::<Vec<_>>(),
    );
    Ok(FitOutcome {
        theta: fit.solution.theta.clone(),
        table,
        triplets: formats::path_edges(names, &thetas),
    })
}

fn path_table(path: &PrecisionPath, gamma: f64, selected: usize) -> String {
    let fits: Vec<Option<(f64, usize)>> = path
        .entries
        .iter()
        .map(|e| e.fit.as_ref().map(|f| (f.diagnostics.loglik, f.solution.df())))
        .collect();
    let scores = ebic_values(&fits, path.n, path.p, gamma);
    let mut out = String::from(
        "index\tlambda\tdf\tloglik\tebic\tdeviance\tdeviance_df\tp_value\titerations\tconverged\tselected\n",
    );
    for (k, (e, score)) in path.entries.iter().zip(&scores).enumerate() {
        match &e.fit {
            Some(f) => {
                let d = &f.diagnostics;
                writeln!(
                    out,
                    "{k}\t{:?}\t{}\t{:?}\t{}\t{:?}\t{}\t{:?}\t{}\t{}\t{}",
                    e.lambda,
                    f.solution.df(),
                    d.loglik,
                    formats::optional(*score),
                    d.deviance,
                    d.deviance_df,
                    d.p_value,
                    f.iterations,
                    f.converged,
                    k == selected
                )
                .unwrap();
            }
            None => {
                writeln!(out, "{k}\t{:?}\tNA\tNA\tNA\tNA\tNA\tNA\tNA\tfalse\tfalse", e.lambda).unwrap();
            }
        }
    }
    out
}

fn fit_baseline(
    ctx: &Context,
    rec: &mut Recorder,
    g: &GenotypeMatrix,
    method: Method,
) -> Result<FitOutcome, Failure> {
    let gamma = match ctx.cfg.select {
        Selection::Ebic { gamma } => gamma,
        Selection::Stars { .. } => {
            return Err(Failure::Usage("rank-based baselines support eBIC selection only".into()))
        }
    };
    let r = match method {
        Method::NpnTau => npn_tau(g)?,
        _ => npn_ns(g)?,
    };
    let grid = grid_for(ctx, &r)?;
    let bp = baseline_path(&r, g.n(), &grid, &ctx.cfg.em.glasso)?;
    let scores = bp.ebic_scores(gamma);
    let k = bp.ebic_select(gamma)?;
    let sol = bp.solutions[k].as_ref().expect("selected entry has a fit");

    let mut table = String::from("index\tlambda\tdf\tloglik\tebic\tselected\n");
    let mut thetas = Vec::new();
    for (i, s) in bp.solutions.iter().enumerate() {
        writeln!(
            table,
            "{i}\t{:?}\t{}\t{}\t{}\t{}",
            bp.lambdas[i],
            s.as_ref().map_or_else(|| "NA".into(), |s| s.df().to_string()),
            formats::optional(bp.logliks[i]),
            formats::optional(scores[i]),
            i == k
        )
        .unwrap();
        if let Some(s) = s {
            thetas.push((i, bp.lambdas[i], &s.theta));
        }
    }
    rec.result("lambdas", &bp.lambdas);
    rec.result("selected_index", k);
    rec.result("selected_lambda", bp.lambdas[k]);
    rec.result("edges", sol.df());
    Ok(FitOutcome {
        theta: sol.theta.clone(),
        table,
        triplets: formats::path_edges(g.names(), &thetas),
    })
}

fn write_network(
    ctx: &Context,
    rec: &mut Recorder,
    names: &[String],
    map: &MarkerMap,
    theta: &DMatrix<f64>,
) -> Result<(), Failure> {
    rec.write(ctx.path("edges.tsv"), &formats::edge_list(names, theta))?;
    rec.write(ctx.path("precision.tsv"), &formats::dense(names, theta))?;
    rec.write(ctx.path("network.graphml"), &formats::graphml(map, theta))?;
    rec.write(ctx.path("network.dot"), &formats::dot(map, theta))?;
    Ok(())
}

pub fn fit(ctx: &Context, input: &Path, map: Option<&Path>) -> Result<(), Failure> {
    let mut rec = ctx.recorder("fit")?;
    let (g, map) = load_input(ctx, &mut rec, input, map)?;
    let method = ctx.cfg.fit.method;
    let outcome = match method {
        Method::Copula => fit_copula(ctx, &mut rec, &g)?,
        m => fit_baseline(ctx, &mut rec, &g, m)?,
    };
    rec.result("method", method.label());
    write_network(ctx, &mut rec, g.names(), &map, &outcome.theta)?;
    rec.write(ctx.path("path.tsv"), &outcome.table)?;
    rec.write(ctx.path("path_edges.tsv"), &outcome.triplets)?;
    ctx.finish(rec)
}

pub fn bootstrap(ctx: &Context, input: &Path, map: Option<&Path>) -> Result<(), Failure> {
    let mut rec = ctx.recorder("bootstrap")?;
    let (g, map) = load_input(ctx, &mut rec, input, map)?;
    let b = &ctx.cfg.bootstrap;
    let seed = derive_seed(ctx.cfg.seed(), &[BOOTSTRAP_TAG]);
    rec.seeds.insert("bootstrap".into(), seed);
    let mut em = ctx.cfg.em.clone();
    em.gibbs.trace = 0;
    let cfg = BootstrapConfig {
        replicates: b.replicates,
        em,
        selection: ctx.cfg.select.clone(),
        seed,
        resample: b.resample,
    };
    if cfg.replicates == 0 {
        return Err(Failure::Usage("at least one replicate is required".into()));
    }
    let s = bootstrap_network(&g, &cfg)?;
    let names = g.names();
    let mut tsv = String::from("marker_i\tmarker_j\ttheta_ij\tfrequency\tpositive\tnegative\n");
    for &(i, j) in &s.tracked {
        writeln!(
            tsv,
            "{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}",
            names[i],
            names[j],
            s.theta[(i, j)],
            s.frequency[(i, j)],
            s.positive[(i, j)],
            s.negative[(i, j)]
        )
        .unwrap();
    }
    write_network(ctx, &mut rec, names, &map, &s.theta)?;
    rec.write(ctx.path("bootstrap_edges.tsv"), &tsv)?;
    rec.write(ctx.path("frequency.tsv"), &formats::dense(names, &s.frequency))?;
    rec.result("replicates", s.replicates);
    rec.result("succeeded", s.succeeded);
    rec.result("failures", &s.failures);
    ctx.finish(rec)
}

fn runtime<T>(r: Result<T, String>, what: &Path) -> Result<T, Failure> {
    r.map_err(|e| Failure::Runtime(format!("{}: {e}", what.display())))
}

pub fn evaluate(
    ctx: &Context,
    est: &Path,
    truth: &Path,
    path: Option<&Path>,
    method: &str,
) -> Result<(), Failure> {
    let mut rec = ctx.recorder("evaluate")?;
    let t = runtime(formats::read_edge_list(&read_text(truth, &mut rec)?), truth)?;
    let e = runtime(formats::read_edge_list(&read_text(est, &mut rec)?), est)?;
    let universe = &t.names;
    let truth_adj = runtime(t.adjacency_on(universe), truth)?;
    let est_adj = runtime(e.adjacency_on(universe), est)?;
    let m = confusion_metrics(&est_adj, &truth_adj)?;
    let auc = match path {
        Some(p) => {
            let entries = runtime(formats::read_path_edges(&read_text(p, &mut rec)?), p)?;
            let adjs = entries
                .iter()
                .map(|(_, _, g)| g.adjacency_on(universe))
                .collect::<Result<Vec<_>, _>>();
            let adjs = runtime(adjs, p)?;
            rec.result("oracle_f1", oracle_f1(&adjs, &truth_adj)?);
            Some(roc_curve(&adjs, &truth_adj)?.auc)
        }
        None => None,
    };
    let text = format!(
        "{}{}",
        formats::metrics_header(),
        formats::metrics_row(method, ctx.cfg.seed(), &m, auc)
    );
    rec.write(ctx.path("metrics.tsv"), &text)?;
    rec.result("metrics", m);
    rec.result("auc", auc);
    ctx.finish(rec)
}

pub fn roc(ctx: &Context, path: &Path, truth: &Path) -> Result<(), Failure> {
    let mut rec = ctx.recorder("roc")?;
    let t = runtime(formats::read_edge_list(&read_text(truth, &mut rec)?), truth)?;
    let truth_adj = runtime(t.adjacency_on(&t.names), truth)?;
    let entries = runtime(formats::read_path_edges(&read_text(path, &mut rec)?), path)?;
    let adjs = entries
        .iter()
        .map(|(_, _, g)| g.adjacency_on(&t.names))
        .collect::<Result<Vec<_>, _>>();
    let adjs = runtime(adjs, path)?;
    let curve = roc_curve(&adjs, &truth_adj)?;
    let mut out = String::from("lambda\tfpr\ttpr\n");
    let last = curve.points.len() - 1;
    for (k, &(x, y)) in curve.points.iter().enumerate() {
        let lambda = if k == 0 || k == last { None } else { Some(entries[k - 1].1) };
        writeln!(out, "{}\t{x:?}\t{y:?}", formats::optional(lambda)).unwrap();
    }
    rec.write(ctx.path("roc.tsv"), &out)?;
    rec.result("auc", curve.auc);
    println!("AUC\t{:?}", curve.auc);
    ctx.finish(rec)
}

pub fn convert(ctx: &Context, input: &Path, to: &Path, map: Option<&Path>) -> Result<(), Failure> {
    let mut rec = ctx.recorder("convert")?;
    let ext = to
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "graphml" | "dot" => {
            let g = runtime(formats::read_edge_list(&read_text(input, &mut rec)?), input)?;
            let markers = match map {
                Some(m) => {
                    require(m)?;
                    rec.input(m)?;
                    let full = load_map(m)?;
                    let cols = g
                        .names
                        .iter()
                        .map(|n| {
                            full.markers
                                .iter()
                                .position(|x| &x.name == n)
                                .ok_or_else(|| Failure::Runtime(format!("marker `{n}` missing from the map")))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    full.select(&cols)
                }
                None => MarkerMap::single_chromosome(&g.names),
            };
            let theta = g.theta();
            let text = if ext == "dot" {
                formats::dot(&markers, &theta)
            } else {
                formats::graphml(&markers, &theta)
            };
            rec.write(to.to_path_buf(), &text)?;
        }
        "csv" | "tsv" | "txt" => {
            require(input)?;
            rec.input(input)?;
            let (g, _) = load_genotypes(input, Delimiter::from_path(input), None, ctx.cfg.data.states)?;
            write_genotypes(to, &g, Delimiter::from_path(to))?;
            rec.record(to.to_path_buf());
        }
        _ => {
            return Err(Failure::Usage(format!(
                "cannot infer the output format of {} (graphml, dot, csv, tsv)",
                to.display()
            )))
        }
    }
    ctx.finish(rec)
}
