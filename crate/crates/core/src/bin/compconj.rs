use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info};
use serde_json::json;

use compconj::conjugate::{self, Method, TransformConfig};
use compconj::harness::{self, RunOptions, RunReport, Scenario};
use compconj::{kconv, qual, sample, Error, FunctionExpr, Grid};

#[derive(Parser)]
#[command(name = "compconj", version, about = "Grid-based conjugate calculus for composite functions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a built-in worked example.
    Example {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dump_grids: Option<PathBuf>,
        /// Write the example as a scenario file and exit.
        #[arg(long)]
        emit_scenario: Option<PathBuf>,
    },
    /// Run a scenario file.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        tol_scale: f64,
        /// Replace a grid, e.g. `x=-2:2:41` or `y=-4:4:81,-4:4:81`.
        #[arg(long, allow_hyphen_values = true)]
        grid_override: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dump_grids: Option<PathBuf>,
    },
    /// Conjugate of an expression on a grid, printed as CSV.
    Conjugate {
        expr: String,
        #[arg(long, allow_hyphen_values = true)]
        grid: Grid,
        #[arg(long, allow_hyphen_values = true)]
        dual_grid: Grid,
        #[arg(long, value_enum, default_value_t = MethodArg::Llt)]
        method: MethodArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cone estimates and K-convexity diagnostics for a scenario.
    Kconv { scenario: PathBuf },
    /// Qualification-condition battery for a scenario.
    Qual { scenario: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Brute,
    Llt,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Brute => Method::BruteForce,
            MethodArg::Llt => Method::FastLLT,
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("COMPCONJ_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            error!("could not size the thread pool: {e}");
        }
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> compconj::Result<()> {
    match out {
        Some(p) => Ok(std::fs::write(p, text)?),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn finish(report: &RunReport, out: Option<&Path>, dump: Option<&Path>) -> compconj::Result<ExitCode> {
    if let Some(d) = dump {
        report.dump_grids(d)?;
    }
    write_or_print(out, &report.to_json())?;
    for c in report.failed() {
        eprintln!("FAIL {}: computed {} expected {}", c.check_id, c.computed, c.expected);
    }
    eprintln!(
        "{}: {}/{} checks passed in {} ms",
        report.scenario,
        report.checks.iter().filter(|c| c.pass).count(),
        report.checks.len(),
        report.timing_ms
    );
    Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

/// One row per dual node: coordinates, value, truncation flag.
fn conjugate_table(c: &conjugate::FlaggedConjugate) -> String {
    let g = &c.fun.grid;
    let mut head: Vec<String> = (1..=g.dim()).map(|k| format!("y{k}")).collect();
    head.extend(["value".into(), "suspect".into()]);
    let mut rows = vec![head.join(",")];
    for (j, v) in c.fun.values.iter().enumerate() {
        let mut r: Vec<String> = g.node(j).iter().map(|t| format!("{}", t + 0.0)).collect();
        r.push(format!("{v}"));
        r.push(c.truncation_suspect[j].to_string());
        rows.push(r.join(","));
    }
    rows.join("\n")
}

fn override_grids(s: &mut Scenario, overrides: &[String]) -> compconj::Result<()> {
    for o in overrides {
        let (name, spec) =
            o.split_once('=').ok_or_else(|| Error::Scenario(format!("grid override '{o}' is not name=axes")))?;
        let g: Grid = spec.parse()?;
        let slot = match name.trim() {
            "x" => &mut s.grids.x,
            "u" => &mut s.grids.u,
            "w" => &mut s.grids.w,
            "v" => &mut s.grids.v,
            "y" => &mut s.grids.y,
            other => return Err(Error::Scenario(format!("unknown grid '{other}'"))),
        };
        *slot = g;
    }
    Ok(())
}

fn run(cli: Cli) -> compconj::Result<ExitCode> {
    match cli.cmd {
        Cmd::Example { name, out, dump_grids, emit_scenario } => {
            let s = harness::example(&name)?;
            if let Some(path) = emit_scenario {
                std::fs::write(path, s.to_json())?;
                return Ok(ExitCode::SUCCESS);
            }
            let report = harness::run_scenario(&s)?;
            finish(&report, out.as_deref(), dump_grids.as_deref())
        }
        Cmd::Run { scenario, tol_scale, grid_override, out, dump_grids } => {
            let mut s = Scenario::load(&scenario)?;
            override_grids(&mut s, &grid_override)?;
            info!("running {}", s.name);
            let report = harness::run_scenario_with(&s, &RunOptions { tol_scale })?;
            finish(&report, out.as_deref(), dump_grids.as_deref())
        }
        Cmd::Conjugate { expr, grid, dual_grid, method, out } => {
            let f = FunctionExpr::parse(&expr)?;
            let h = sample(&f, &grid)?;
            let cfg = TransformConfig::for_fn(&h, method.into(), dual_grid);
            let c = conjugate::conjugate_flagged(&h, &cfg)?;
            write_or_print(out.as_deref(), &conjugate_table(&c))?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Kconv { scenario } => {
            let s = Scenario::load(&scenario)?;
            let p = s.problem()?;
            let est = kconv::cone_estimates(&p.map, &p.grids.x, p.g_sampled(), kconv::default_ray_samples(p.m()))?;
            let mut out = json!({"scenario": s.name, "estimates": est});
            if let Some(k) = s.cone()? {
                let (convex, cert) = kconv::is_k_convex(&p.map, &k, &p.grids.x)?;
                let reg = kconv::monotone_regularize(p.g_sampled(), &k)?;
                out["K"] = json!(k);
                out["F_is_K_convex"] = json!(convex);
                out["tested_directions"] = json!(cert.tested_directions);
                out["g_is_K_increasing"] = json!(kconv::is_k_increasing(p.g_sampled(), &k, None)?);
                out["g_K_improper"] = json!(reg.improper);
                out["g_K_minus_inf_nodes"] = json!(reg.minus_inf_nodes.len());
            }
            println!("{}", serde_json::to_string_pretty(&out).expect("value serializes"));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Qual { scenario } => {
            let s = Scenario::load(&scenario)?;
            let p = s.problem()?;
            let pwlq = match s.pwlq_decl() {
                Some(d) => {
                    let f = p.perturbation();
                    Some(qual::is_pwlq(&d, |z| f.joint(z), &f.joint_axes(), 0)?)
                }
                None => None,
            };
            let r = qual::qualification_battery(&p, s.cone()?.as_ref(), pwlq.as_ref(), qual::BatteryMode::Auto)?;
            println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Parse { .. }
                | Error::Io(_)
                | Error::UnknownExample(_)
                | Error::Scenario(_)
                | Error::InvariantViolation(_)
                | Error::MalformedExpr(_)
                | Error::InvalidGrid(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
