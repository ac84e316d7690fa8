//! Command-line front end: barrier tables, p-Laplace solves, bound
//! verification, inequality scans, the classical three-circles check
//! and grid-refinement studies.
//!
//! Every run is determined by (config, seed). Exit codes: 0 when all
//! verdicts pass, 1 on a verdict failure, 2 on invalid configuration
//! (with a machine-readable error JSON on stderr).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::Value;

use trisphere::barrier::BarrierSpec;
use trisphere::geometry::{build_grid, central_gradient, KAnnulus};
use trisphere::hadamard::{hadamard_classical_check, LaurentSeries};
use trisphere::inequality::{i_p_bounds, i_p_quadrature, verify_sample};
use trisphere::io::{read_field, write_field, FieldMeta};
use trisphere::solver::{
    solve_on_grid, solve_radial_ode, BoundaryData, PLaplaceProblem, SolveReport,
};
use trisphere::verify::{
    condition_star4, condition_star4b, three_spheres_check, ComparisonPair, WeightProfile,
};

#[derive(Parser)]
#[command(name = "trisphere", version, about = "p-harmonic three-spheres verification toolkit")]
struct Cli {
    /// JSON config file; explicitly passed flags win over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cap worker threads (results are identical for any cap).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; the TRISPHERE_OUT_DIR environment variable
    /// overrides the default, an explicit flag wins over both.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit a (t, u0) table of the radial comparison profile as CSV.
    Barrier(BarrierArgs),
    /// Solve a Dirichlet problem and write the field + report.
    Solve(SolveArgs),
    /// Check the three-spheres bound and growth diagnostics on a solved field.
    Verify(VerifyArgs),
    /// Scan the elementary inequalities with seeded random samples.
    InequalityScan(ScanArgs),
    /// Check the classical three-circles inequality for a Laurent series.
    Hadamard(HadamardArgs),
    /// Grid-refinement convergence study against the radial oracle.
    Study(StudyArgs),
}

#[derive(Args)]
struct BarrierArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long = "R")]
    big_r: Option<f64>,
    /// Number of table rows from r to R inclusive.
    #[arg(long)]
    samples: Option<usize>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    slab_halfwidth: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    cells: Option<usize>,
    /// Boundary data selector: "barrier" | "constant:c" |
    /// "perturbed-barrier:amplitude,mode".
    #[arg(long)]
    boundary: Option<String>,
    /// Barrier radii for the selector (default: annulus radii).
    #[arg(long)]
    barrier_r: Option<f64>,
    #[arg(long = "barrier-R")]
    barrier_big_r: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Solved field binary (sidecar defaults to the same path with a
    /// .json extension).
    #[arg(long)]
    field: PathBuf,
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Number of check radii strictly between r and R.
    #[arg(long)]
    radii: Option<usize>,
    #[arg(long)]
    density: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    p_min: Option<f64>,
    #[arg(long)]
    p_max: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HadamardArgs {
    /// Inline coefficients "re,im;re,im;..." for ascending powers 0,1,...
    #[arg(long)]
    coeffs: Option<String>,
    /// CSV file with rows "power,re,im".
    #[arg(long)]
    coeffs_csv: Option<PathBuf>,
    #[arg(long)]
    r1: Option<f64>,
    #[arg(long)]
    r2: Option<f64>,
    #[arg(long)]
    r3: Option<f64>,
    #[arg(long)]
    density: Option<usize>,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long = "R")]
    big_r: Option<f64>,
    /// Comma-separated cell counts.
    #[arg(long)]
    cells: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Wrapper marking configuration errors (exit code 2).
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ConfigError(msg.into()))
}

/// Flag value wins, then the config file, then the default.
fn pick<T: serde::de::DeserializeOwned>(
    cfg: &Option<Value>,
    key: &str,
    flag: Option<T>,
    default: Option<T>,
) -> anyhow::Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    if let Some(obj) = cfg {
        if let Some(raw) = obj.get(key) {
            return serde_json::from_value(raw.clone())
                .map_err(|e| config_err(format!("config key '{key}': {e}")));
        }
    }
    default.ok_or_else(|| config_err(format!("missing required parameter '{key}'")))
}

fn load_config(path: &Option<PathBuf>) -> anyhow::Result<Option<Value>> {
    match path {
        None => Ok(None),
        Some(p) => {
            let raw = fs::read_to_string(p)
                .map_err(|e| config_err(format!("cannot read config {}: {e}", p.display())))?;
            let v: Value = serde_json::from_str(&raw)
                .map_err(|e| config_err(format!("config {} is not valid JSON: {e}", p.display())))?;
            Ok(Some(v))
        }
    }
}

fn out_dir(flag: &Option<PathBuf>) -> PathBuf {
    if let Some(d) = flag {
        return d.clone();
    }
    if let Ok(d) = std::env::var("TRISPHERE_OUT_DIR") {
        if !d.is_empty() {
            return PathBuf::from(d);
        }
    }
    PathBuf::from(".")
}

fn write_or_print(out: &Option<PathBuf>, dir: &Path, content: &str) -> anyhow::Result<()> {
    match out {
        Some(name) => {
            let path = if name.is_absolute() { name.clone() } else { dir.join(name) };
            fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            emit_error("thread cap must be positive", "config");
            std::process::exit(2);
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match run(&cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            let kind = if e.downcast_ref::<ConfigError>().is_some()
                || matches!(
                    e.downcast_ref::<trisphere::Error>(),
                    Some(trisphere::Error::Config(_)) | Some(trisphere::Error::Domain(_))
                ) {
                "config"
            } else {
                "runtime"
            };
            emit_error(&format!("{e:#}"), kind);
            std::process::exit(2);
        }
    }
}

fn emit_error(message: &str, kind: &str) {
    let payload = serde_json::json!({ "error": message, "kind": kind });
    eprintln!("{payload}");
}

fn run(cli: &Cli) -> anyhow::Result<i32> {
    let cfg = load_config(&cli.config)?;
    let dir = out_dir(&cli.out_dir);
    match &cli.command {
        Command::Barrier(a) => run_barrier(&cfg, &dir, a),
        Command::Solve(a) => run_solve(&cfg, &dir, a),
        Command::Verify(a) => run_verify(&cfg, &dir, a),
        Command::InequalityScan(a) => run_scan(&cfg, &dir, a),
        Command::Hadamard(a) => run_hadamard(&cfg, a),
        Command::Study(a) => run_study(&cfg, &dir, a),
    }
}

fn run_barrier(cfg: &Option<Value>, dir: &Path, a: &BarrierArgs) -> anyhow::Result<i32> {
    let n = pick(cfg, "n", a.n, Some(2))?;
    let k = pick(cfg, "k", a.k, Some(n))?;
    let p = pick(cfg, "p", a.p, Some(2.0))?;
    let r = pick(cfg, "r", a.r, Some(1.0))?;
    let big_r = pick(cfg, "R", a.big_r, Some(2.0))?;
    let samples = pick(cfg, "samples", a.samples, Some(101))?;
    if samples < 2 {
        bail!(config_err("need at least 2 samples"));
    }
    let spec = BarrierSpec::new(r, big_r, k, n, p)?;
    let mut csv = String::from("t,u0\n");
    for i in 0..samples {
        let t = r + (big_r - r) * i as f64 / (samples - 1) as f64;
        csv.push_str(&format!("{},{}\n", t, spec.u0(t)?));
    }
    write_or_print(&a.out, dir, &csv)?;
    Ok(0)
}

fn parse_boundary(selector: &str, spec: BarrierSpec) -> anyhow::Result<BoundaryData> {
    if selector == "barrier" {
        return Ok(BoundaryData::Barrier(spec));
    }
    if let Some(c) = selector.strip_prefix("constant:") {
        let v: f64 = c.parse().map_err(|_| config_err(format!("bad constant '{c}'")))?;
        return Ok(BoundaryData::Constant(v));
    }
    if let Some(rest) = selector.strip_prefix("perturbed-barrier:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 2 {
            bail!(config_err("perturbed-barrier wants 'amplitude,mode'"));
        }
        let amplitude: f64 =
            parts[0].parse().map_err(|_| config_err(format!("bad amplitude '{}'", parts[0])))?;
        let mode: u32 =
            parts[1].parse().map_err(|_| config_err(format!("bad mode '{}'", parts[1])))?;
        if !(0.0..1.0).contains(&amplitude) {
            bail!(config_err("amplitude must lie in [0, 1)"));
        }
        return Ok(BoundaryData::PerturbedBarrier { spec, amplitude, mode });
    }
    bail!(config_err(format!("unknown boundary selector '{selector}'")))
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    converged: bool,
    report: &'a SolveReport,
}

fn run_solve(cfg: &Option<Value>, dir: &Path, a: &SolveArgs) -> anyhow::Result<i32> {
    // the annulus block may come nested from the problem JSON
    let nested = cfg.as_ref().and_then(|c| c.get("annulus")).cloned();
    let pick_ann = |key: &str, flag: Option<f64>, default: Option<f64>| -> anyhow::Result<f64> {
        if let Some(v) = flag {
            return Ok(v);
        }
        if let Some(Value::Object(map)) = &nested {
            if let Some(raw) = map.get(key) {
                return serde_json::from_value(raw.clone())
                    .map_err(|e| config_err(format!("annulus.{key}: {e}")));
            }
        }
        pick(cfg, key, None, default)
    };
    let n = if let Some(v) = a.n {
        v
    } else if let Some(Value::Object(map)) = &nested {
        map.get("n").and_then(Value::as_u64).map(|v| v as usize).unwrap_or(2)
    } else {
        pick(cfg, "n", None, Some(2))?
    };
    let k = if let Some(v) = a.k {
        v
    } else if let Some(Value::Object(map)) = &nested {
        map.get("k").and_then(Value::as_u64).map(|v| v as usize).unwrap_or(n)
    } else {
        pick(cfg, "k", None, Some(n))?
    };
    let alpha = pick_ann("alpha", a.alpha, Some(1.0))?;
    let beta = pick_ann("beta", a.beta, Some(2.0))?;
    let slab = pick_ann("slab_halfwidth", a.slab_halfwidth, Some(4.0 * beta))?;
    let p = pick(cfg, "p", a.p, Some(2.0))?;
    let cells = pick(cfg, "cells", a.cells, Some(64))?;
    let selector = pick(cfg, "boundary", a.boundary.clone(), Some("barrier".to_string()))?;
    let barrier_r = pick(cfg, "barrier_r", a.barrier_r, Some(alpha.max(1e-9)))?;
    let barrier_big_r = pick(cfg, "barrier_R", a.barrier_big_r, Some(beta))?;

    let annulus = KAnnulus::with_slab(n, k, alpha, beta, slab)?;
    let barrier = BarrierSpec::new(barrier_r, barrier_big_r, k, n, p)?;
    let boundary = parse_boundary(&selector, barrier)?;
    let mut problem = PLaplaceProblem::new(annulus, p, boundary, cells);
    if let Some(v) = cfg.as_ref().and_then(|c| c.get("epsilon_schedule")) {
        problem.epsilon_schedule = serde_json::from_value(v.clone())
            .map_err(|e| config_err(format!("epsilon_schedule: {e}")))?;
    }
    problem.tolerance = pick(cfg, "tolerance", a.tolerance, Some(problem.tolerance))?;
    problem.max_iterations = pick(cfg, "max_iterations", a.max_iterations, Some(problem.max_iterations))?;

    fs::create_dir_all(dir)?;
    let meta = FieldMeta { annulus, p, boundary: selector.clone(), barrier: Some(barrier) };
    let grid = build_grid(&annulus, cells)?;
    match solve_on_grid(&problem, grid) {
        Ok((field, report)) => {
            write_field(&dir.join("field.bin"), &dir.join("field.json"), &field, &meta)?;
            let summary = SolveSummary { converged: true, report: &report };
            fs::write(dir.join("report.json"), serde_json::to_vec_pretty(&summary)?)?;
            println!(
                "solved: {} iterations, gradient {:.3e}, energy {:.12e}",
                report.iterations, report.grad_norm, report.final_energy
            );
            Ok(0)
        }
        Err(trisphere::Error::NonConvergence { best, .. }) => {
            write_field(&dir.join("field.bin"), &dir.join("field.json"), &best.field, &meta)?;
            let summary = SolveSummary { converged: false, report: &best.report };
            fs::write(dir.join("report.json"), serde_json::to_vec_pretty(&summary)?)?;
            println!(
                "did not converge: {} iterations, gradient {:.3e} (best iterate written)",
                best.report.iterations, best.report.grad_norm
            );
            Ok(1)
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct VerifyOutput {
    bound: trisphere::verify::BoundReport,
    divergence: trisphere::verify::DivergenceDiagnostic,
    limit: trisphere::verify::LimitDiagnostic,
}

fn run_verify(cfg: &Option<Value>, dir: &Path, a: &VerifyArgs) -> anyhow::Result<i32> {
    let sidecar = a.sidecar.clone().unwrap_or_else(|| a.field.with_extension("json"));
    let (field, meta) = read_field(&a.field, &sidecar)?;
    let barrier = meta
        .barrier
        .ok_or_else(|| config_err("sidecar carries no barrier parameters to verify against"))?;
    let radii = pick(cfg, "radii", a.radii, Some(20))?;
    let density = pick(cfg, "density", a.density, Some(512))?;
    let tolerance = pick(cfg, "tolerance", a.tolerance, Some(1e-6))?;
    if radii < 1 {
        bail!(config_err("need at least one check radius"));
    }

    let annulus = meta.annulus;
    let (r, big_r) = (barrier.r, barrier.big_r);
    let ts: Vec<f64> =
        (1..=radii).map(|i| r + (big_r - r) * i as f64 / (radii + 1) as f64).collect();
    let bound = three_spheres_check(&field, &annulus, &barrier, &ts, density, tolerance)?;

    // growth diagnostics on the normalized field
    let v_norm = trisphere::verify::normalize(&field, bound.m_r, bound.m_big_r)?;
    let bf = trisphere::barrier::barrier_field(&barrier, field.grid.clone())?;
    let grad = central_gradient(&v_norm);
    let pair = ComparisonPair { v: &v_norm, v_grad: &grad, barrier: &bf };
    let pad = (annulus.beta - r) / 50.0;
    let h_ts: Vec<f64> = (0..40)
        .map(|i| (r + pad) + (annulus.beta - r - 2.0 * pad) * i as f64 / 39.0)
        .collect();
    let h = WeightProfile::sample(&pair, &annulus, meta.p, &h_ts, density)?;
    let divergence = condition_star4(&h)?;
    let limit = condition_star4b(&pair, &annulus, meta.p, &h_ts, &h)?;

    fs::create_dir_all(dir)?;
    let mut csv = String::from("t,max,bound,margin\n");
    for e in &bound.entries {
        csv.push_str(&format!("{},{},{},{}\n", e.t, e.max_value, e.bound, e.margin));
    }
    fs::write(dir.join("bound_report.csv"), &csv)?;
    let pass = bound.pass;
    let output = VerifyOutput { bound, divergence, limit };
    fs::write(dir.join("bound_report.json"), serde_json::to_vec_pretty(&output)?)?;
    println!(
        "verify: worst margin {:.3e}, verdict {}, growth {:?}",
        output.bound.worst_margin(),
        if pass { "pass" } else { "FAIL" },
        output.divergence.verdict,
    );
    Ok(if pass { 0 } else { 1 })
}

fn run_scan(cfg: &Option<Value>, dir: &Path, a: &ScanArgs) -> anyhow::Result<i32> {
    use rand::{Rng, SeedableRng};
    let samples = pick(cfg, "samples", a.samples, Some(100_000))?;
    let p_min = pick(cfg, "p_min", a.p_min, Some(1.01))?;
    let p_max = pick(cfg, "p_max", a.p_max, Some(10.0))?;
    let seed = pick(cfg, "seed", a.seed, Some(0))?;
    if !(1.0 < p_min && p_min < p_max && p_max <= 10.0) {
        bail!(config_err("exponent range must satisfy 1 < p_min < p_max <= 10"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let names = ["ratio_lower", "ratio_upper", "quotient_lower", "quotient_upper", "envelope_lower", "envelope_upper"];
    let mut worst = [f64::INFINITY; 6];
    let mut at = [(0.0f64, 0.0f64, 0.0f64); 6];
    let mut violations = 0usize;
    for i in 0..samples {
        let x = 10f64.powf(rng.gen_range(-3.0..3.0));
        let y = 10f64.powf(rng.gen_range(-3.0..3.0));
        if x == y {
            continue;
        }
        let p = rng.gen_range(p_min..p_max);
        let v = verify_sample(x, y, p)?;
        let rel = [
            v.ratio_margins.0 / v.ratio_scale,
            v.ratio_margins.1 / v.ratio_scale,
            v.quotient_margins.0 / v.quotient_scale,
            v.quotient_margins.1 / v.quotient_scale,
        ];
        for (j, &m) in rel.iter().enumerate() {
            if m < worst[j] {
                worst[j] = m;
                at[j] = (x, y, p);
            }
        }
        if !v.pass {
            violations += 1;
        }
        // envelope margins on a subsample (quadrature is the slow part)
        if i % 10 == 0 {
            let i_num = i_p_quadrature(x, y, p, false)?;
            let (lo, hi) = i_p_bounds(x, y, p)?;
            let scale = i_num.abs().max(hi);
            let lo_m = (i_num - lo) / scale;
            let hi_m = (hi - i_num) / scale;
            if lo_m < worst[4] {
                worst[4] = lo_m;
                at[4] = (x, y, p);
            }
            if hi_m < worst[5] {
                worst[5] = hi_m;
                at[5] = (x, y, p);
            }
            if lo_m < -1e-8 || hi_m < -1e-8 {
                violations += 1;
            }
        }
    }
    let mut csv = String::from("inequality,worst_relative_margin,a,b,p\n");
    for j in 0..6 {
        csv.push_str(&format!("{},{},{},{},{}\n", names[j], worst[j], at[j].0, at[j].1, at[j].2));
    }
    write_or_print(&a.out, dir, &csv)?;
    if violations > 0 {
        println!("{violations} violations");
    }
    Ok(if violations == 0 { 0 } else { 1 })
}

fn parse_coeffs(a: &HadamardArgs) -> anyhow::Result<LaurentSeries> {
    if let Some(inline) = &a.coeffs {
        let mut coeffs = Vec::new();
        for part in inline.split(';') {
            let nums: Vec<&str> = part.split(',').collect();
            if nums.len() != 2 {
                bail!(config_err(format!("bad coefficient '{part}', want 're,im'")));
            }
            let re: f64 = nums[0].trim().parse().map_err(|_| config_err("bad real part"))?;
            let im: f64 = nums[1].trim().parse().map_err(|_| config_err("bad imaginary part"))?;
            coeffs.push(Complex64::new(re, im));
        }
        return Ok(LaurentSeries::polynomial(&coeffs));
    }
    if let Some(path) = &a.coeffs_csv {
        let raw = fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut terms = Vec::new();
        for (lineno, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("power") {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                bail!(config_err(format!("line {}: want 'power,re,im'", lineno + 1)));
            }
            let m: i32 = cols[0].trim().parse().map_err(|_| config_err("bad power"))?;
            let re: f64 = cols[1].trim().parse().map_err(|_| config_err("bad real part"))?;
            let im: f64 = cols[2].trim().parse().map_err(|_| config_err("bad imaginary part"))?;
            terms.push((m, Complex64::new(re, im)));
        }
        return Ok(LaurentSeries::new(terms));
    }
    bail!(config_err("provide --coeffs or --coeffs-csv"))
}

fn run_hadamard(cfg: &Option<Value>, a: &HadamardArgs) -> anyhow::Result<i32> {
    let f = parse_coeffs(a)?;
    let r1 = pick(cfg, "r1", a.r1, Some(0.5))?;
    let r2 = pick(cfg, "r2", a.r2, Some(1.0))?;
    let r3 = pick(cfg, "r3", a.r3, Some(2.0))?;
    let density = pick(cfg, "density", a.density, Some(4096))?;
    let chk = hadamard_classical_check(&f, r1, r2, r3, density)?;
    println!("{}", serde_json::to_string_pretty(&chk)?);
    Ok(if chk.pass { 0 } else { 1 })
}

fn run_study(cfg: &Option<Value>, dir: &Path, a: &StudyArgs) -> anyhow::Result<i32> {
    let n = pick(cfg, "n", a.n, Some(2))?;
    let k = pick(cfg, "k", a.k, Some(n))?;
    let p = pick(cfg, "p", a.p, Some(2.0))?;
    let r = pick(cfg, "r", a.r, Some(1.0))?;
    let big_r = pick(cfg, "R", a.big_r, Some(2.0))?;
    let cells_raw = pick(cfg, "cells", a.cells.clone(), Some("32,64,128,256".to_string()))?;
    let mut cells = Vec::new();
    for part in cells_raw.split(',') {
        cells.push(
            part.trim()
                .parse::<usize>()
                .map_err(|_| config_err(format!("bad cell count '{part}'")))?,
        );
    }
    let annulus = KAnnulus::new(n, k, r, big_r)?;
    let spec = BarrierSpec::new(r, big_r, k, n, p)?;
    let oracle = solve_radial_ode(r, big_r, k, p, 0.0, 1.0)?;

    let mut csv = String::from("cells,h,max_error,order\n");
    let mut errors: Vec<f64> = Vec::new();
    for &c in &cells {
        let grid = build_grid(&annulus, c)?;
        let problem = PLaplaceProblem::new(annulus, p, BoundaryData::Barrier(spec), c);
        let (field, _) = solve_on_grid(&problem, grid.clone())?;
        let mut err = 0.0f64;
        for &idx in &grid.interior {
            let pos = grid.spec.position(idx);
            let d = trisphere::geometry::d_k(&pos[..n], k)?;
            err = err.max((field.values[idx] - oracle.eval(d)).abs());
        }
        let order = errors.last().map(|prev| (prev / err).log2());
        csv.push_str(&format!(
            "{},{},{},{}\n",
            c,
            grid.spec.spacing[0],
            err,
            order.map(|o| o.to_string()).unwrap_or_default()
        ));
        errors.push(err);
    }
    write_or_print(&a.out, dir, &csv)?;
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    if !decreasing {
        println!("error column is not strictly decreasing");
    }
    Ok(if decreasing { 0 } else { 1 })
}
