use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use stackel_bench::commands::{
    cmd_gen, cmd_scaling, cmd_solve, cmd_table1, cmd_verify, parse_combos, Kind, ScalingConfig, Table1Config,
    TABLE1_COMBOS,
};
use stackel_bench::manifest::{default_output_root, resolve_instance, Overrides, Route, RunManifest, SolverKind};
use stackel_bench::OUT_ENV;

#[derive(Parser)]
#[command(name = "stackel", about = "Generalized Stackelberg equilibrium solvers and experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Tuning {
    /// Leader step size.
    #[arg(long)]
    rho: Option<f64>,
    /// Stopping tolerance on the outer step.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "t-max")]
    t_max: Option<usize>,
    /// Record every k-th iteration.
    #[arg(long)]
    trace_every: Option<usize>,
    /// How PIGD differentiates the lower level.
    #[arg(long, value_enum)]
    route: Option<Route>,
}

impl Tuning {
    fn overrides(&self) -> Overrides {
        Overrides { rho: self.rho, eps: self.eps, t_max: self.t_max, trace_every: self.trace_every, route: self.route }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one solver on one instance.
    Solve {
        #[arg(long, value_enum, default_value = "pigd")]
        solver: SolverKind,
        /// Instance file, `charging`, `dispatch`, `charging:N` or `dispatch:N:M`.
        #[arg(long, default_value = "charging")]
        instance: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run directory; defaults to a fresh directory under the output root.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Compare PIGD and the proximal baseline on generated dispatch instances.
    Table1 {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated `MxN` pairs.
        #[arg(long)]
        combos: Option<String>,
        #[arg(long, default_value_t = 30)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Time PIGD iterations against the number of followers.
    Scaling {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated, strictly ascending follower counts.
        #[arg(long, value_delimiter = ',', default_values_t = [10usize, 20, 40, 80])]
        n: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        m: usize,
        #[arg(long, default_value_t = 11)]
        iterations: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run PIGD and report equilibrium residuals and the conditions check.
    Verify {
        #[arg(long, default_value = "charging")]
        instance: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Shift the final point by this amount before measuring.
        #[arg(long)]
        perturb: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Write generated instance files.
    Gen {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        n: usize,
        /// Stations (dispatch only).
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn slug(s: &str) -> String {
    let name = std::path::Path::new(s).file_stem().and_then(|f| f.to_str()).unwrap_or(s);
    name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '-' }).collect()
}

fn run(cli: Cli) -> Result<u8> {
    let root = default_output_root();
    match cli.cmd {
        Cmd::Solve { solver, instance, seed, out, tuning } => {
            let out = out.unwrap_or_else(|| root.join(format!("solve-{}-{}-s{seed}", solver.name(), slug(&instance))));
            let m = RunManifest { solver, instance, seed, out, overrides: tuning.overrides() };
            let r = cmd_solve(&m)?;
            let y: Vec<String> = r.output.y.iter().map(|v| format!("{v:.6}")).collect();
            println!(
                "{}: {} after {} iterations, leader objective {:.6}, y = [{}]",
                solver.name(),
                if r.status.exit_code() == 0 { "converged" } else { "iteration limit" },
                r.output.trace.iterations,
                r.leader_objective,
                y.join(", ")
            );
            println!("wrote {}", r.dir.display());
            Ok(r.status.exit_code() as u8)
        }
        Cmd::Table1 { seed, combos, count, out, tuning } => {
            let combos = match combos {
                Some(c) => parse_combos(&c)?,
                None => TABLE1_COMBOS.to_vec(),
            };
            let mut cfg = Table1Config::desk(seed, combos, count);
            cfg.apply(&tuning.overrides());
            let out = out.unwrap_or_else(|| root.join(format!("table1-s{seed}-c{count}")));
            let r = cmd_table1(&cfg, &out)?;
            println!("{:>4} {:>4} {:>12} {:>12} {:>6} {:>8}", "M", "N", "PIGD", "proximal", "wins", "failed");
            for c in &r.combos {
                println!(
                    "{:>4} {:>4} {:>12.4} {:>12.4} {:>6} {:>8}",
                    c.m, c.n, c.pigd_mean, c.proximal_mean, c.pigd_wins, c.failures
                );
            }
            println!("wrote {}", out.display());
            if r.failure_fraction() >= 0.2 {
                bail!("{:.0}% of instances failed", 100.0 * r.failure_fraction());
            }
            Ok(0)
        }
        Cmd::Scaling { seed, n, m, iterations, out } => {
            let cfg = ScalingConfig { iterations, ..ScalingConfig::new(seed, m, n) };
            let out = out.unwrap_or_else(|| root.join(format!("scaling-s{seed}-m{m}")));
            let r = cmd_scaling(&cfg, &out)?;
            for (n, t) in &r.rows {
                println!("N = {n:>4}: {t:.3} ms per iteration");
            }
            match r.slope {
                Some(s) => println!("log-log slope: {s:.3}"),
                None => println!("log-log slope: undefined (needs at least two sizes)"),
            }
            println!("wrote {}", out.display());
            Ok(0)
        }
        Cmd::Verify { instance, seed, perturb, out, tuning } => {
            let inst = resolve_instance(&instance, seed)?;
            let out = out.unwrap_or_else(|| root.join(format!("verify-{}-s{seed}", slug(&instance))));
            let r = cmd_verify(&inst, seed, &tuning.overrides(), perturb, &out)?;
            for (k, v) in r.rows() {
                println!("{k:<22} {v}");
            }
            println!("wrote {}", out.display());
            Ok(0)
        }
        Cmd::Gen { kind, n, m, seed, count, out } => {
            let out = out.unwrap_or_else(|| root.join("instances"));
            for p in cmd_gen(kind, n, m, seed, count, &out)? {
                println!("{}", p.display());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            eprintln!("(output root: ${OUT_ENV} or ./runs)");
            ExitCode::from(1)
        }
    }
}
