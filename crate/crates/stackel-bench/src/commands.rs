//! The subcommands, as library functions returning structured reports.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stackel_core::game::{residual_gne, residual_ve, GameSpec, GneSampling};
use stackel_core::implicit::{leader_total_gradient, reduced_gradient};
use stackel_core::kkt::{detect_active_set, recover_multipliers, EPS_ACT};
use stackel_core::linalg::Vector;
use stackel_core::pigd::{solve_pigd, PIGDConfig};
use stackel_core::problems::{
    check_existence_conditions, generate_charging_instances, generate_dispatch_instances, write_instance,
    ConditionsReport, Instance,
};
use stackel_core::projection::DEFAULT_TOL;
use stackel_core::proximal::{solve_proximal, ProximalConfig};
use stackel_core::trace::{SolveAbort, SolveTrace};
use stackel_core::ve::{solve_ve, VEConfig};

use crate::manifest::{resolve_instance, Overrides, RunManifest, SolverKind, CHARGING_CAPACITY_FACTOR};
use crate::output::{write_table, write_timing, write_trace, MANIFEST_FILE, SUMMARY_FILE, TIMING_FILE, TRACE_FILE};

/// How a solve that did not error ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    IterationLimit,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Converged => 0,
            Status::IterationLimit => 2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::IterationLimit => "t_max",
        }
    }
}

/// Final iterate and trace of one solver run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub y: Vector,
    pub x: Vector,
    pub trace: SolveTrace,
}

impl RunOutput {
    pub fn status(&self) -> Status {
        if self.trace.converged {
            Status::Converged
        } else {
            Status::IterationLimit
        }
    }

    /// Leader objective at the final iterate, in the problem's own convention.
    pub fn leader_objective(&self, spec: &GameSpec) -> f64 {
        spec.native_sign() * spec.leader().value(&self.y, &self.x)
    }
}

pub fn run_pigd(spec: &GameSpec, inst: &Instance, cfg: &PIGDConfig) -> std::result::Result<RunOutput, SolveAbort> {
    let r = solve_pigd(spec, &inst.initial_point(), cfg)?;
    Ok(RunOutput { y: r.y, x: r.w.x, trace: r.trace })
}

pub fn run_proximal(
    spec: &GameSpec,
    inst: &Instance,
    cfg: &ProximalConfig,
) -> std::result::Result<RunOutput, SolveAbort> {
    let r = solve_proximal(spec, &inst.initial_point(), &inst.initial_profile(), cfg)?;
    Ok(RunOutput { y: r.y, x: r.x, trace: r.trace })
}

pub fn run_solver(
    solver: SolverKind,
    spec: &GameSpec,
    inst: &Instance,
    o: &Overrides,
) -> std::result::Result<RunOutput, SolveAbort> {
    match solver {
        SolverKind::Pigd => run_pigd(spec, inst, &o.pigd_config()),
        SolverKind::Proximal => run_proximal(spec, inst, &o.proximal_config()),
    }
}

fn summary_header(n_leader: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "solver",
        "instance",
        "status",
        "iterations",
        "converged",
        "leader_objective",
        "mean_follower_objective",
        "ve_residual",
    ]
    .map(String::from)
    .to_vec();
    h.extend((0..n_leader).map(|k| format!("y{k}")));
    h
}

// ---- solve -----------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub status: Status,
    pub dir: PathBuf,
    pub output: RunOutput,
    pub leader_objective: f64,
}

/// Runs one solver and writes `manifest.toml`, `trace.csv`, `timing.csv` and
/// `summary.csv` into `m.out`. Nothing is written if the instance cannot be
/// resolved; an aborted solve still leaves its partial trace behind.
pub fn cmd_solve(m: &RunManifest) -> Result<SolveReport> {
    m.validate()?;
    let inst = resolve_instance(&m.instance, m.seed)?;
    let spec = inst.build().context("building the game")?;
    let result = run_solver(m.solver, &spec, &inst, &m.overrides);
    std::fs::create_dir_all(&m.out).with_context(|| format!("creating {}", m.out.display()))?;
    std::fs::write(m.out.join(MANIFEST_FILE), m.to_toml())?;
    let nl = spec.n_leader();
    let out = match result {
        Ok(out) => out,
        Err(abort) => {
            write_trace(&m.out.join(TRACE_FILE), nl, &abort.trace)?;
            write_timing(&m.out.join(TIMING_FILE), &abort.trace)?;
            return Err(abort.into());
        }
    };
    write_trace(&m.out.join(TRACE_FILE), nl, &out.trace)?;
    write_timing(&m.out.join(TIMING_FILE), &out.trace)?;

    let status = out.status();
    let leader_objective = out.leader_objective(&spec);
    let fv = spec.follower_values(&out.y, &out.x);
    let mean_f = fv.iter().sum::<f64>() / fv.len().max(1) as f64;
    let ve = residual_ve(&spec, &out.y, &out.x).unwrap_or(f64::NAN);
    let mut row = vec![
        m.solver.name().to_string(),
        m.instance.clone(),
        status.name().to_string(),
        out.trace.iterations.to_string(),
        out.trace.converged.to_string(),
        leader_objective.to_string(),
        mean_f.to_string(),
        ve.to_string(),
    ];
    row.extend(out.y.iter().map(|v| v.to_string()));
    let header = summary_header(nl);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(&m.out.join(SUMMARY_FILE), &header, &[row])?;
    Ok(SolveReport { status, dir: m.out.clone(), output: out, leader_objective })
}

// ---- table1 ----------------------------------------------------------------

/// Parses `MxN[,MxN...]` into `(M, N)` pairs.
pub fn parse_combos(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .map(|c| {
            let (m, n) = c.trim().split_once('x').with_context(|| format!("combo `{c}` is not of the form MxN"))?;
            let (m, n): (usize, usize) = (m.parse()?, n.parse()?);
            if m == 0 || n == 0 {
                bail!("combo `{c}` has a zero size");
            }
            Ok((m, n))
        })
        .collect()
}

pub const TABLE1_COMBOS: [(usize, usize); 4] = [(5, 25), (5, 50), (10, 50), (20, 50)];

#[derive(Clone, Debug)]
pub struct Table1Config {
    pub seed: u64,
    /// `(M, N)` pairs.
    pub combos: Vec<(usize, usize)>,
    pub count: usize,
    pub pigd: PIGDConfig,
    pub proximal: ProximalConfig,
}

impl Table1Config {
    /// Settings sized for a desktop run: a larger leader step than the solve
    /// default, a fixed outer budget, and VI certificates only at recorded
    /// iterations.
    pub fn desk(seed: u64, combos: Vec<(usize, usize)>, count: usize) -> Self {
        let pigd = PIGDConfig {
            leader_step: 0.1,
            t_max: 200,
            trace_every: 50,
            certify_every_iteration: false,
            ..PIGDConfig::default()
        };
        let proximal = ProximalConfig { t_max: 1_000, trace_every: 50, ..ProximalConfig::default() };
        Self { seed, combos, count, pigd, proximal }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.rho {
            self.pigd.leader_step = v;
        }
        if let Some(v) = o.eps {
            self.pigd.stop_eps = v;
            self.proximal.stop_eps = v;
        }
        if let Some(v) = o.t_max {
            self.pigd.t_max = v;
            self.proximal.t_max = v;
        }
        if let Some(v) = o.trace_every {
            self.pigd.trace_every = v;
            self.proximal.trace_every = v;
        }
        if let Some(r) = o.route {
            self.pigd.route = r.into();
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Table1Manifest {
    seed: u64,
    combos: Vec<[usize; 2]>,
    count: usize,
    rho: f64,
    eps: f64,
    pigd_t_max: usize,
    proximal_t_max: usize,
}

#[derive(Clone, Debug)]
pub struct Table1Instance {
    pub m: usize,
    pub n: usize,
    pub index: usize,
    /// Final leader objective, or the error message.
    pub pigd: std::result::Result<f64, String>,
    pub proximal: std::result::Result<f64, String>,
    pub pigd_iterations: usize,
    pub proximal_iterations: usize,
}

impl Table1Instance {
    pub fn failed(&self) -> bool {
        self.pigd.is_err() || self.proximal.is_err()
    }
}

#[derive(Clone, Debug)]
pub struct Table1Combo {
    pub m: usize,
    pub n: usize,
    pub count: usize,
    pub failures: usize,
    /// Means over the instances where both solvers finished.
    pub pigd_mean: f64,
    pub proximal_mean: f64,
    /// Instances with a strictly lower PIGD objective.
    pub pigd_wins: usize,
}

#[derive(Clone, Debug)]
pub struct Table1Report {
    pub instances: Vec<Table1Instance>,
    pub combos: Vec<Table1Combo>,
}

impl Table1Report {
    pub fn failure_fraction(&self) -> f64 {
        let f = self.instances.iter().filter(|i| i.failed()).count();
        f as f64 / self.instances.len().max(1) as f64
    }
}

fn table1_instance(cfg: &Table1Config, m: usize, n: usize, index: usize, inst: Instance) -> Table1Instance {
    let mut row = Table1Instance {
        m,
        n,
        index,
        pigd: Err(String::new()),
        proximal: Err(String::new()),
        pigd_iterations: 0,
        proximal_iterations: 0,
    };
    let spec = match inst.build() {
        Ok(s) => s,
        Err(e) => {
            row.pigd = Err(e.to_string());
            row.proximal = Err(e.to_string());
            return row;
        }
    };
    match run_pigd(&spec, &inst, &cfg.pigd) {
        Ok(o) => {
            row.pigd = Ok(o.leader_objective(&spec));
            row.pigd_iterations = o.trace.iterations;
        }
        Err(a) => row.pigd = Err(a.to_string()),
    }
    match run_proximal(&spec, &inst, &cfg.proximal) {
        Ok(o) => {
            row.proximal = Ok(o.leader_objective(&spec));
            row.proximal_iterations = o.trace.iterations;
        }
        Err(a) => row.proximal = Err(a.to_string()),
    }
    row
}

/// Solves every generated instance with both algorithms, in parallel across
/// instances. Failures are recorded per instance.
pub fn run_table1(cfg: &Table1Config) -> Table1Report {
    let jobs: Vec<(usize, usize, usize, Instance)> = cfg
        .combos
        .iter()
        .flat_map(|&(m, n)| {
            generate_dispatch_instances(cfg.seed, n, m, cfg.count)
                .into_iter()
                .enumerate()
                .map(move |(k, d)| (m, n, k, Instance::Dispatch(d)))
        })
        .collect();
    let instances: Vec<Table1Instance> =
        jobs.into_par_iter().map(|(m, n, k, inst)| table1_instance(cfg, m, n, k, inst)).collect();
    let combos = cfg
        .combos
        .iter()
        .map(|&(m, n)| {
            let rows: Vec<&Table1Instance> = instances.iter().filter(|r| r.m == m && r.n == n).collect();
            let ok: Vec<(f64, f64)> = rows
                .iter()
                .filter_map(|r| match (&r.pigd, &r.proximal) {
                    (Ok(a), Ok(b)) => Some((*a, *b)),
                    _ => None,
                })
                .collect();
            let k = ok.len().max(1) as f64;
            Table1Combo {
                m,
                n,
                count: rows.len(),
                failures: rows.len() - ok.len(),
                pigd_mean: if ok.is_empty() { f64::NAN } else { ok.iter().map(|p| p.0).sum::<f64>() / k },
                proximal_mean: if ok.is_empty() { f64::NAN } else { ok.iter().map(|p| p.1).sum::<f64>() / k },
                pigd_wins: ok.iter().filter(|p| p.0 < p.1).count(),
            }
        })
        .collect();
    Table1Report { instances, combos }
}

/// Runs [`run_table1`] and writes `manifest.toml`, `instances.csv` and
/// `table1.csv` into `out`.
pub fn cmd_table1(cfg: &Table1Config, out: &Path) -> Result<Table1Report> {
    if cfg.count == 0 || cfg.combos.is_empty() {
        bail!("table1 needs count >= 1 and at least one combo");
    }
    cfg.pigd.validate()?;
    cfg.proximal.validate()?;
    let report = run_table1(cfg);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let manifest = Table1Manifest {
        seed: cfg.seed,
        combos: cfg.combos.iter().map(|&(m, n)| [m, n]).collect(),
        count: cfg.count,
        rho: cfg.pigd.leader_step,
        eps: cfg.pigd.stop_eps,
        pigd_t_max: cfg.pigd.t_max,
        proximal_t_max: cfg.proximal.t_max,
    };
    std::fs::write(out.join(MANIFEST_FILE), toml::to_string(&manifest)?)?;
    let cell = |r: &std::result::Result<f64, String>| match r {
        Ok(v) => (v.to_string(), String::new()),
        Err(e) => (String::new(), e.clone()),
    };
    let rows: Vec<Vec<String>> = report
        .instances
        .iter()
        .map(|r| {
            let (p, pe) = cell(&r.pigd);
            let (q, qe) = cell(&r.proximal);
            vec![
                r.m.to_string(),
                r.n.to_string(),
                r.index.to_string(),
                p,
                r.pigd_iterations.to_string(),
                q,
                r.proximal_iterations.to_string(),
                pe,
                qe,
            ]
        })
        .collect();
    write_table(
        &out.join("instances.csv"),
        &[
            "m",
            "n",
            "index",
            "pigd",
            "pigd_iterations",
            "proximal",
            "proximal_iterations",
            "pigd_error",
            "proximal_error",
        ],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = report
        .combos
        .iter()
        .map(|c| {
            vec![
                c.m.to_string(),
                c.n.to_string(),
                c.count.to_string(),
                c.failures.to_string(),
                c.pigd_mean.to_string(),
                c.proximal_mean.to_string(),
                c.pigd_wins.to_string(),
            ]
        })
        .collect();
    write_table(
        &out.join("table1.csv"),
        &["m", "n", "count", "failures", "pigd_mean", "proximal_mean", "pigd_wins"],
        &rows,
    )?;
    Ok(report)
}

// ---- scaling ---------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ScalingConfig {
    pub seed: u64,
    pub m: usize,
    pub n_list: Vec<usize>,
    /// Outer iterations per run; the first one is excluded from the timing.
    pub iterations: usize,
    /// Runs per `N`; the fastest is kept.
    pub repeats: usize,
}

impl ScalingConfig {
    pub fn new(seed: u64, m: usize, n_list: Vec<usize>) -> Self {
        Self { seed, m, n_list, iterations: 11, repeats: 3 }
    }
}

#[derive(Clone, Debug)]
pub struct ScalingReport {
    /// `(N, milliseconds per PIGD iteration)`.
    pub rows: Vec<(usize, f64)>,
    /// Least-squares slope of `log t` against `log N`; `None` for fewer than
    /// two distinct sizes.
    pub slope: Option<f64>,
}

pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if pts.len() < 2 || !(sxx > 0.0) {
        return None;
    }
    Some(sxy / sxx).filter(|s| s.is_finite())
}

pub fn run_scaling(cfg: &ScalingConfig) -> Result<ScalingReport> {
    if cfg.n_list.is_empty() || cfg.n_list.windows(2).any(|w| w[0] >= w[1]) {
        bail!("N list must be non-empty and strictly ascending");
    }
    if cfg.iterations < 2 || cfg.repeats == 0 {
        bail!("scaling needs at least two iterations and one repeat");
    }
    let pigd = PIGDConfig {
        stop_eps: f64::MIN_POSITIVE,
        t_max: cfg.iterations,
        trace_every: cfg.iterations,
        certify_every_iteration: false,
        ..PIGDConfig::default()
    };
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        let inst = Instance::Dispatch(generate_dispatch_instances(cfg.seed, n, cfg.m, 1).remove(0));
        let spec = inst.build()?;
        let mut best = f64::INFINITY;
        for _ in 0..cfg.repeats {
            let out = run_pigd(&spec, &inst, &pigd)?;
            let (first, last) = (&out.trace.records[0], out.trace.last().expect("recorded"));
            if last.t == first.t {
                bail!("PIGD stopped after one iteration at N = {n}");
            }
            best = best.min((last.wall_ms - first.wall_ms) / (last.t - first.t) as f64);
        }
        rows.push((n, best));
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|&(n, t)| (n as f64, t)).collect();
    Ok(ScalingReport { slope: loglog_slope(&pts), rows })
}

/// Runs [`run_scaling`] and writes `scaling.csv` and `slope.csv` into `out`.
pub fn cmd_scaling(cfg: &ScalingConfig, out: &Path) -> Result<ScalingReport> {
    let report = run_scaling(cfg)?;
    std::fs::create_dir_all(out)?;
    let rows: Vec<Vec<String>> =
        report.rows.iter().map(|&(n, t)| vec![n.to_string(), cfg.m.to_string(), t.to_string()]).collect();
    write_table(&out.join("scaling.csv"), &["n", "m", "ms_per_iteration"], &rows)?;
    let slope = report.slope.map(|s| s.to_string()).unwrap_or_else(|| "undefined".into());
    write_table(&out.join("slope.csv"), &["slope"], &[vec![slope]])?;
    Ok(report)
}

// ---- verify ----------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub y: Vector,
    pub status: Status,
    pub ve_residual: f64,
    pub gne_residual: f64,
    /// `‖proj(y + ∇F(y)) − y‖` for the leader's reduced objective `F`.
    pub leader_stationarity: f64,
    pub conditions: ConditionsReport,
}

impl VerifyReport {
    pub fn rows(&self) -> Vec<(&'static str, String)> {
        let c = &self.conditions;
        vec![
            ("status", self.status.name().to_string()),
            ("ve_residual", self.ve_residual.to_string()),
            ("gne_residual", self.gne_residual.to_string()),
            ("leader_stationarity", self.leader_stationarity.to_string()),
            ("conditions_samples", c.samples.to_string()),
            ("monotonicity", c.monotonicity.to_string()),
            ("monotone", c.monotone.to_string()),
            ("max_own_hessian_eig", c.max_own_hessian_eig.to_string()),
            ("concave", c.concave.to_string()),
            ("segment_violation", c.segment_violation.to_string()),
            ("jointly_convex", c.jointly_convex.to_string()),
            ("leader_set_bounded", c.leader_set_bounded.to_string()),
        ]
    }
}

/// Projected-gradient norm of the leader's reduced objective at `y`, with a
/// fresh lower-level solve.
pub fn leader_stationarity(spec: &GameSpec, y: &Vector) -> Result<f64> {
    let ve = solve_ve(spec, y, &VEConfig::default())?;
    let w = recover_multipliers(spec, y, &ve.x_star, &ve.x_star)?;
    let act = detect_active_set(spec, y, &w, EPS_ACT);
    let g = leader_total_gradient(spec, y, &w, &reduced_gradient(spec, y, &w, &act));
    let p = spec.leader_set().project(&(y + g), DEFAULT_TOL)?;
    Ok((p - y).norm())
}

pub const CONDITION_SAMPLES: usize = 50;

/// Outer stopping tolerance for `verify` unless overridden. The projected
/// gradient at the stopping point is about `stop_eps / ρ`, so the solve
/// default would leave it near `1e-4`.
pub const VERIFY_EPS: f64 = 1e-9;

/// Runs PIGD and reports residuals at its final point. `perturb` shifts the
/// final leader point by `δ` in every coordinate and the follower profile by
/// `±δ` in alternating coordinates, both projected back to feasibility.
pub fn run_verify(inst: &Instance, seed: u64, o: &Overrides, perturb: Option<f64>) -> Result<VerifyReport> {
    let spec = inst.build()?;
    let o = Overrides { eps: o.eps.or(Some(VERIFY_EPS)), ..o.clone() };
    let out = run_pigd(&spec, inst, &o.pigd_config())?;
    let status = out.status();
    let (mut y, mut x) = (out.y, out.x);
    if let Some(d) = perturb {
        y = spec.leader_set().project(&y.add_scalar(d), DEFAULT_TOL)?;
        let shift = Vector::from_fn(x.len(), |k, _| if k % 2 == 0 { d } else { -d });
        x = spec.follower_polytope(&y)?.project(&(x + shift), DEFAULT_TOL)?;
    }
    Ok(VerifyReport {
        ve_residual: residual_ve(&spec, &y, &x)?,
        gne_residual: residual_gne(&spec, &y, &x, &GneSampling { seed, ..GneSampling::default() })?,
        leader_stationarity: leader_stationarity(&spec, &y)?,
        conditions: check_existence_conditions(&spec, CONDITION_SAMPLES, seed),
        y,
        status,
    })
}

pub fn cmd_verify(inst: &Instance, seed: u64, o: &Overrides, perturb: Option<f64>, out: &Path) -> Result<VerifyReport> {
    let report = run_verify(inst, seed, o, perturb)?;
    std::fs::create_dir_all(out)?;
    let rows: Vec<Vec<String>> = report.rows().into_iter().map(|(k, v)| vec![k.to_string(), v]).collect();
    write_table(&out.join("verify.csv"), &["quantity", "value"], &rows)?;
    Ok(report)
}

// ---- gen -------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Kind {
    Charging,
    Dispatch,
}

/// Writes `count` generated instances into `out` and returns their paths.
pub fn cmd_gen(kind: Kind, n: usize, m: usize, seed: u64, count: usize, out: &Path) -> Result<Vec<PathBuf>> {
    if n == 0 || m == 0 || count == 0 {
        bail!("sizes and count must be positive");
    }
    let instances: Vec<Instance> = match kind {
        Kind::Charging => generate_charging_instances(seed, n, count, CHARGING_CAPACITY_FACTOR)
            .into_iter()
            .map(Instance::Charging)
            .collect(),
        Kind::Dispatch => generate_dispatch_instances(seed, n, m, count).into_iter().map(Instance::Dispatch).collect(),
    };
    std::fs::create_dir_all(out)?;
    let mut paths = Vec::new();
    for (k, inst) in instances.iter().enumerate() {
        let name = match kind {
            Kind::Charging => format!("charging_n{n}_s{seed}_{k}.toml"),
            Kind::Dispatch => format!("dispatch_n{n}_m{m}_s{seed}_{k}.toml"),
        };
        let path = out.join(name);
        write_instance(&path, inst)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combos_parse() {
        assert_eq!(parse_combos("5x25, 20x50").unwrap(), vec![(5, 25), (20, 50)]);
        assert!(parse_combos("5-25").is_err());
        assert!(parse_combos("0x3").is_err());
    }

    #[test]
    fn slope_of_a_power_law() {
        let pts: Vec<(f64, f64)> = [10.0, 20.0, 40.0].iter().map(|&n: &f64| (n, 3.0 * n.powf(2.5))).collect();
        assert!((loglog_slope(&pts).unwrap() - 2.5).abs() < 1e-12);
        assert_eq!(loglog_slope(&pts[..1]), None);
    }

    #[test]
    fn solve_charging_writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            solver: SolverKind::Pigd,
            instance: "charging".into(),
            seed: 0,
            out: dir.path().join("run"),
            overrides: Overrides::default(),
        };
        let r = cmd_solve(&m).unwrap();
        assert_eq!(r.status, Status::Converged);
        assert!((r.output.y[0] - 5.0).abs() <= 1e-3);
        for f in [MANIFEST_FILE, TRACE_FILE, TIMING_FILE, SUMMARY_FILE] {
            assert!(r.dir.join(f).is_file(), "{f}");
        }
        let copied = std::fs::read_to_string(r.dir.join(MANIFEST_FILE)).unwrap();
        assert_eq!(RunManifest::from_toml(&copied).unwrap(), m);
    }

    #[test]
    fn missing_instance_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let m = RunManifest {
            solver: SolverKind::Pigd,
            instance: dir.path().join("missing.toml").display().to_string(),
            seed: 0,
            out: out.clone(),
            overrides: Overrides::default(),
        };
        assert!(cmd_solve(&m).is_err());
        assert!(!out.exists());
    }

    #[test]
    fn iteration_limit_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            solver: SolverKind::Proximal,
            instance: "charging".into(),
            seed: 0,
            out: dir.path().join("run"),
            overrides: Overrides { t_max: Some(3), ..Default::default() },
        };
        assert_eq!(cmd_solve(&m).unwrap().status.exit_code(), 2);
    }

    #[test]
    fn verify_charging_default() {
        let inst = resolve_instance("charging", 0).unwrap();
        let r = run_verify(&inst, 0, &Overrides::default(), None).unwrap();
        assert!(r.ve_residual <= 1e-5 && r.gne_residual <= 1e-5 && r.leader_stationarity <= 1e-5, "{r:?}");
        assert!((r.conditions.monotonicity - 1.0).abs() < 1e-9);
        let p = run_verify(&inst, 0, &Overrides::default(), Some(0.5)).unwrap();
        assert!(p.ve_residual > 1e-3 && p.gne_residual > 1e-3 && p.leader_stationarity > 1e-3, "{p:?}");
    }

    #[test]
    fn gen_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let paths = cmd_gen(Kind::Dispatch, 4, 2, 7, 2, dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        let back = stackel_core::problems::parse_instance(&paths[1]).unwrap();
        assert_eq!(back, Instance::Dispatch(generate_dispatch_instances(7, 4, 2, 2).remove(1)));
    }

    #[test]
    fn table1_single_instance_is_deterministic() {
        let mut cfg = Table1Config::desk(3, vec![(2, 4)], 1);
        cfg.pigd.t_max = 20;
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        let r = cmd_table1(&cfg, &a).unwrap();
        cmd_table1(&cfg, &b).unwrap();
        assert_eq!(r.failure_fraction(), 0.0);
        for f in ["table1.csv", "instances.csv", MANIFEST_FILE] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
        }
    }
}
