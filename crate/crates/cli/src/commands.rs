//! Subcommand bodies. Each returns the process exit code on success.

use lagrindex::bifurcation::{branch_scan, index_at, lambda_grid, refine_grid, ScanOptions};
use lagrindex::boundary::conormal_pair;
use lagrindex::dynamics::solve_bvp;
use lagrindex::index::{fem_index, focal_index, focal_points, fundamental_matrix};
use lagrindex::jacobi::{coefficients_along, kernel_basis};
use lagrindex::spectral_perturb::selftest;
use lagrindex::{BifurcationReport, BoundaryCondition, Branch, CoefficientPath, IndexReport, LagrangianFamily};
use serde::Serialize;

use crate::config::{config_error, RunConfig};
use crate::output::{step_svg, Csv, Sink};

pub const OK: u8 = 0;
pub const FAILED_CHECK: u8 = 3;

/// Overrides taken from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<String>,
    pub grid: Option<usize>,
    pub lambda_grid: Option<usize>,
    pub tol: Option<f64>,
    pub refine: bool,
    pub svg: bool,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(n) = self.grid {
            cfg.grid.elements = n;
        }
        if let Some(k) = self.lambda_grid {
            cfg.grid.lambda_points = k;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.out.is_some() {
            cfg.output.dir = self.out.clone();
        }
        cfg.output.svg |= self.svg;
    }
}

/// Everything a subcommand needs about the problem.
struct Problem {
    cfg: RunConfig,
    fam: LagrangianFamily,
    bc: BoundaryCondition,
    branch: Box<dyn Branch>,
    sink: Sink,
}

impl Problem {
    fn new(cfg: RunConfig) -> anyhow::Result<Self> {
        cfg.validate()?;
        let fam = cfg.family()?;
        let bc = cfg.boundary(fam.dim())?;
        let branch = cfg.branch(fam.dim(), &bc)?;
        let sink = Sink::new(cfg.output.dir.as_deref(), cfg.output.svg)?;
        Ok(Self { cfg, fam, bc, branch, sink })
    }

    fn header(&self, command: &str) -> Vec<(&'static str, String)> {
        let c = &self.cfg;
        let t = &c.tolerances;
        vec![
            ("lagrindex", command.to_string()),
            ("config_sha256", c.hash()),
            ("family", c.family.name.clone()),
            ("boundary", self.bc.kind().to_string()),
            ("tau", fmt(c.tau().unwrap_or(f64::NAN))),
            ("elements", c.grid.elements.to_string()),
            (
                "tolerances",
                format!(
                    "nullity={} focal={} kernel={} bvp={} el={} locate={}",
                    t.nullity.map_or("h^2".to_string(), fmt),
                    fmt(t.focal),
                    fmt(t.kernel),
                    fmt(t.bvp),
                    fmt(t.el),
                    fmt(t.locate)
                ),
            ),
        ]
    }

    fn coefficients(&self, lambda: f64) -> anyhow::Result<CoefficientPath> {
        let traj = self.branch.trajectory(&self.fam, lambda)?;
        Ok(coefficients_along(&self.fam, lambda, &traj)?)
    }
}

/// Shortest round-trip form, so output is stable across runs.
fn fmt(x: f64) -> String {
    format!("{x:e}")
}

fn columns(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn el_solve(mut cfg: RunConfig, ov: &Overrides) -> anyhow::Result<u8> {
    ov.apply(&mut cfg);
    if let Some(t) = ov.tol {
        cfg.tolerances.bvp = t;
    }
    let p = Problem::new(cfg)?;
    let n = p.fam.dim();
    let guess = p.cfg.shooting_guess(n)?;
    let tau = p.cfg.tau()?;
    let traj = solve_bvp(&p.fam, p.cfg.lambda, &p.bc, (&guess.0, &guess.1), tau, &p.cfg.bvp_options())?;
    let mut header = p.header("el-solve");
    header.push(("lambda", fmt(p.cfg.lambda)));
    header.push(("el_residual", fmt(traj.el_residual)));
    header.push(("bc_residual", fmt(traj.bc_residual)));
    header.push(("newton_iterations", traj.iterations.to_string()));
    header.push(("half_interval", traj.half_interval.to_string()));
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("q{i}")));
    cols.extend((1..=n).map(|i| format!("v{i}")));
    let mut csv = Csv::new(&header, &cols);
    for k in 0..traj.grid.len() {
        csv.row(std::iter::once(fmt(traj.grid[k])).chain(traj.q[k].iter().map(|x| fmt(*x))).chain(traj.v[k].iter().map(|x| fmt(*x))));
    }
    println!(
        "el-solve: converged in {} iterations, EL residual {:.3e}, boundary residual {:.3e}",
        traj.iterations, traj.el_residual, traj.bc_residual
    );
    p.sink.csv("trajectory.csv", &csv.finish())?;
    Ok(OK)
}

fn describe(r: &IndexReport) -> String {
    format!(
        "m- = {}, m0 = {} (N = {}, threshold {:.3e}{})",
        r.m_minus,
        r.m_null,
        r.grid_size,
        r.tolerance,
        if r.indeterminate { ", indeterminate" } else { "" }
    )
}

pub fn index(mut cfg: RunConfig, ov: &Overrides) -> anyhow::Result<u8> {
    ov.apply(&mut cfg);
    if ov.tol.is_some() {
        cfg.tolerances.nullity = ov.tol;
    }
    let mut p = Problem::new(cfg)?;
    let lambda = p.cfg.lambda;
    let mut fem = fem_index(&p.coefficients(lambda)?, &p.bc, p.cfg.tolerances.nullity)?;
    if ov.refine {
        // double until (m⁻, m⁰) repeats
        for _ in 0..4 {
            p.cfg.grid.elements *= 2;
            p.branch = p.cfg.branch(p.fam.dim(), &p.bc)?;
            let finer = fem_index(&p.coefficients(lambda)?, &p.bc, p.cfg.tolerances.nullity)?;
            let stable = (finer.m_minus, finer.m_null) == (fem.m_minus, fem.m_null);
            fem = finer;
            if stable {
                break;
            }
        }
    }
    let coeffs = p.coefficients(lambda)?;
    let focal = if p.bc.is_point_target() { Some(focal_index(&coeffs, &p.bc, p.cfg.tolerances.focal)?) } else { None };
    let kernel = kernel_basis(&coeffs, &p.bc, p.cfg.tolerances.kernel)?;

    println!("index at lambda = {lambda}");
    println!("  fem:    {}", describe(&fem));
    match &focal {
        Some(f) => println!("  focal:  m- = {}, m0 = {}", f.m_minus, f.m_null),
        None => println!("  focal:  not applicable to the {} class", p.bc.kind()),
    }
    println!("  kernel: {} Jacobi fields{}", kernel.dim(), if kernel.indeterminate { " (indeterminate)" } else { "" });
    if let Some(f) = &focal {
        if (f.m_minus, f.m_null) != (fem.m_minus, fem.m_null) {
            println!("  warning: methods disagree");
        }
    }

    let mut header = p.header("index");
    header.push(("lambda", fmt(lambda)));
    let mut csv = Csv::new(&header, &columns(&["method", "m_minus", "m_null", "elements", "tolerance", "indeterminate"]));
    for r in std::iter::once(&fem).chain(focal.as_ref()) {
        csv.row([
            r.method.tag().to_string(),
            r.m_minus.to_string(),
            r.m_null.to_string(),
            r.grid_size.to_string(),
            fmt(r.tolerance),
            r.indeterminate.to_string(),
        ]);
    }
    p.sink.csv("index.csv", &csv.finish())?;
    Ok(OK)
}

pub fn focal(mut cfg: RunConfig, ov: &Overrides) -> anyhow::Result<u8> {
    ov.apply(&mut cfg);
    if let Some(t) = ov.tol {
        cfg.tolerances.focal = t;
    }
    let p = Problem::new(cfg)?;
    let coeffs = p.coefficients(p.cfg.lambda)?;
    let pair = conormal_pair(&p.bc)?;
    let path = fundamental_matrix(&coeffs)?;
    let rep = focal_points(&path, &pair, p.cfg.tolerances.focal)?;
    println!(
        "{} focal instants on [0, {}] (symplectic defect {:.2e})",
        rep.instants.len(),
        fmt(rep.span),
        path.symplectic_defect
    );
    for i in &rep.instants {
        println!("  s = {:.10}  multiplicity {}", i.s, i.multiplicity);
    }
    let mut header = p.header("focal");
    header.push(("lambda", fmt(p.cfg.lambda)));
    header.push(("symplectic_defect", fmt(path.symplectic_defect)));
    let mut csv = Csv::new(&header, &columns(&["s", "multiplicity"]));
    for i in &rep.instants {
        csv.row([fmt(i.s), i.multiplicity.to_string()]);
    }
    p.sink.csv("focal.csv", &csv.finish())?;
    p.sink.svg("focal.svg", || {
        let mut xs = vec![0.0];
        let mut ys = vec![Some(0)];
        let mut total = 0;
        for i in &rep.instants {
            total += i.multiplicity;
            xs.push(i.s);
            ys.push(Some(total));
        }
        step_svg("cumulative focal index", "s", "index", &xs, &ys, rep.span)
    })?;
    Ok(OK)
}

pub fn kernel(mut cfg: RunConfig, ov: &Overrides) -> anyhow::Result<u8> {
    ov.apply(&mut cfg);
    if let Some(t) = ov.tol {
        cfg.tolerances.kernel = t;
    }
    let p = Problem::new(cfg)?;
    let coeffs = p.coefficients(p.cfg.lambda)?;
    let basis = kernel_basis(&coeffs, &p.bc, p.cfg.tolerances.kernel)?;
    let n = coeffs.dim();
    println!(
        "kernel dimension {} at lambda = {}{}",
        basis.dim(),
        p.cfg.lambda,
        if basis.indeterminate { " (indeterminate: a ratio sits just above the threshold)" } else { "" }
    );
    let mut header = p.header("kernel");
    header.push(("lambda", fmt(p.cfg.lambda)));
    header.push(("singular_ratios", basis.ratios.iter().map(|r| fmt(*r)).collect::<Vec<_>>().join(" ")));
    let mut cols = vec!["t".to_string()];
    for k in 1..=basis.dim() {
        cols.extend((1..=n).map(|i| format!("y{k}_{i}")));
    }
    let mut csv = Csv::new(&header, &cols);
    let grid = basis.fields.first().map_or_else(|| coeffs.node_times(), |f| f.grid.clone());
    for (j, t) in grid.iter().enumerate() {
        csv.row(std::iter::once(fmt(*t)).chain(basis.fields.iter().flat_map(|f| f.y[j].iter().map(|x| fmt(*x)))));
    }
    p.sink.csv("kernel.csv", &csv.finish())?;
    Ok(OK)
}

#[derive(Serialize)]
struct CandidateBlock {
    candidate: Vec<CandidateEntry>,
}

#[derive(Serialize)]
struct CandidateEntry {
    mu: f64,
    bracket: [f64; 2],
    index_left: usize,
    index_right: usize,
    index_at_mu: usize,
    nullity_at_mu: usize,
    necessary: bool,
    sufficient: bool,
    note: String,
}

fn candidate_block(scan: &BifurcationReport) -> String {
    let block = CandidateBlock {
        candidate: scan
            .candidates
            .iter()
            .map(|c| CandidateEntry {
                mu: c.mu,
                bracket: [c.left_lambda, c.right_lambda],
                index_left: c.left_index,
                index_right: c.right_index,
                index_at_mu: c.index_at_mu,
                nullity_at_mu: c.nullity_at_mu,
                necessary: c.necessary_ok,
                sufficient: c.sufficient_ii3_ok,
                note: c.note.clone(),
            })
            .collect(),
    };
    toml::to_string(&block).expect("candidates serialize")
}

fn run_scan(p: &Problem, refine: bool) -> BifurcationReport {
    let g = &p.cfg.grid;
    let mut lambdas = lambda_grid(g.lambda_min, g.lambda_max, g.lambda_points);
    if refine {
        lambdas = refine_grid(&lambdas);
    }
    let opts = ScanOptions { nullity_tol: p.cfg.tolerances.nullity, locate_tol: p.cfg.tolerances.locate };
    branch_scan(&p.fam, p.branch.as_ref(), &p.bc, &lambdas, &opts)
}

fn emit_scan(p: &Problem, scan: &BifurcationReport, command: &str) -> anyhow::Result<()> {
    let mut header = p.header(command);
    header.push(("lambda_points", scan.lambdas.len().to_string()));
    let mut csv = Csv::new(&header, &columns(&["lambda", "m_minus", "m_null"]));
    let na = |v: Option<usize>| v.map_or("NA".to_string(), |x| x.to_string());
    for ((l, m), z) in scan.lambdas.iter().zip(&scan.m_minus).zip(&scan.m_null) {
        csv.row([fmt(*l), na(*m), na(*z)]);
    }
    p.sink.csv("scan.csv", &csv.finish())?;
    let block = candidate_block(scan);
    p.sink.text("candidates.toml", &block)?;
    p.sink.svg("scan.svg", || {
        let end = scan.lambdas.last().copied().unwrap_or(0.0);
        step_svg("Morse index along the branch", "lambda", "m-", &scan.lambdas, &scan.m_minus, end)
    })?;
    println!("{} candidate(s)", scan.candidates.len());
    if !block.is_empty() {
        println!("{}", block.trim_end());
    }
    for (l, e) in &scan.errors {
        eprintln!("warning: lambda = {l}: {e}");
    }
    Ok(())
}

pub fn scan(mut cfg: RunConfig, ov: &Overrides) -> anyhow::Result<u8> {
    ov.apply(&mut cfg);
    if ov.tol.is_some() {
        cfg.tolerances.nullity = ov.tol;
    }
    let p = Problem::new(cfg)?;
    let scan = run_scan(&p, ov.refine);
    if scan.m_minus.iter().all(Option::is_none) {
        let (l, e) = scan.errors.first().cloned().expect("a failed scan records errors");
        return Err(anyhow::Error::new(e).context(format!("every scan point failed (first at lambda = {l})")));
    }
    emit_scan(&p, &scan, "scan")?;
    Ok(if scan.candidates.iter().all(|c| c.necessary_ok) { OK } else { FAILED_CHECK })
}

pub fn perturb(selftest_flag: bool, trials: usize, seed: u64, ov: &Overrides) -> anyhow::Result<u8> {
    if !selftest_flag {
        return Err(config_error("perturb runs the randomized family check; pass --selftest"));
    }
    if trials == 0 {
        return Err(config_error("--trials must be positive"));
    }
    let sink = Sink::new(ov.out.as_deref(), false)?;
    let rows = selftest(trials, seed);
    println!("{:>5} {:>3} {:>6} {:>9} {:>9} {:>10} {:>10} {:>4}  result", "trial", "dim", "kernel", "predicted", "observed", "t_probe", "weyl", "gram");
    let mut failures = 0;
    for r in &rows {
        let ok = r.passed();
        failures += usize::from(!ok);
        println!(
            "{:>5} {:>3} {:>6} {:>9} {:>9} {:>10.3e} {:>10.1e} {:>4}  {}{}",
            r.trial,
            r.dim,
            r.kernel_dim,
            format!("{:?}", r.predicted),
            format!("{:?}", r.observed),
            r.t_probe,
            r.weyl_defect,
            if r.gram_ok { "ok" } else { "bad" },
            if ok { "PASS" } else { "FAIL" },
            r.error.as_ref().map(|e| format!(" ({e})")).unwrap_or_default()
        );
    }
    println!("{} of {} trials passed", rows.len() - failures, rows.len());
    let header = [
        ("lagrindex", "perturb --selftest".to_string()),
        ("config_sha256", crate::config::hash_text(&format!("selftest trials={trials} seed={seed}"))),
        ("trials", trials.to_string()),
        ("seed", seed.to_string()),
        ("tolerances", format!("kernel={} weyl={}", fmt(lagrindex::spectral_perturb::SELFTEST_TOL), fmt(lagrindex::spectral_perturb::WEYL_TOL))),
    ];
    let mut csv = Csv::new(
        &header,
        &columns(&[
            "trial", "dim", "kernel_dim", "pred_pos", "pred_neg", "obs_pos", "obs_neg", "t_probe", "weyl_excess", "gram_ok", "pass",
        ]),
    );
    for r in &rows {
        csv.row([
            r.trial.to_string(),
            r.dim.to_string(),
            r.kernel_dim.to_string(),
            r.predicted.0.to_string(),
            r.predicted.1.to_string(),
            r.observed.0.to_string(),
            r.observed.1.to_string(),
            fmt(r.t_probe),
            fmt(r.weyl_defect),
            r.gram_ok.to_string(),
            r.passed().to_string(),
        ]);
    }
    if ov.out.is_some() {
        sink.csv("selftest.csv", &csv.finish())?;
    }
    Ok(if failures == 0 { OK } else { FAILED_CHECK })
}

pub fn demo_pendulum(ov: &Overrides) -> anyhow::Result<u8> {
    let mut cfg = RunConfig::pendulum_demo();
    ov.apply(&mut cfg);
    if ov.tol.is_some() {
        cfg.tolerances.nullity = ov.tol;
    }
    let p = Problem::new(cfg)?;
    println!("pendulum l = g = 1, periodic class, trivial branch, tau = {:.6}", p.cfg.tau()?);
    let at0 = index_at(&p.fam, p.branch.as_ref(), &p.bc, 0.0, p.cfg.tolerances.nullity)?;
    let kernel = kernel_basis(&p.coefficients(0.0)?, &p.bc, p.cfg.tolerances.kernel)?;
    println!("lambda = 0: (m-, m0) = ({}, {}), shooting kernel dimension {}", at0.m_minus, at0.m_null, kernel.dim());
    let scan = run_scan(&p, ov.refine);
    let jump = scan.candidates.iter().find(|c| c.mu.abs() < 1e-3);
    match jump {
        Some(c) => println!(
            "scan: index jumps {} -> {} across mu = {:.3e} (necessary {}, sufficient {})",
            c.left_index, c.right_index, c.mu, c.necessary_ok, c.sufficient_ii3_ok
        ),
        None => println!("scan: no index jump located near 0"),
    }
    emit_scan(&p, &scan, "demo pendulum")?;
    let ok = (at0.m_minus, at0.m_null) == (1, 2)
        && kernel.dim() == 2
        && jump.is_some_and(|c| (c.left_index, c.right_index) == (1, 3) && c.necessary_ok && c.sufficient_ii3_ok);
    if !ok {
        println!("demo: expected (m-, m0) = (1, 2) and a certified jump 1 -> 3");
    }
    Ok(if ok { OK } else { FAILED_CHECK })
}
