//! Batch front end: run the hypothesis checks, the value estimators, or a
//! candidate-vs-estimate comparison on a gallery problem, and write reports
//! and plot-ready data.
//!
//! Exit codes: 0 pass, 2 a hypothesis or comparison failed, 1 execution
//! error, 64 usage error (unknown problem, bad flags), 65 search-size guard,
//! 74 unwritable output.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use hjb_core::config::{Defaults, FileConfig};
use hjb_core::gallery::{self, DpKind, GalleryEntry};
use hjb_core::grid::{Axis, GridSpec};
use hjb_core::report::TheoremMode;
use hjb_core::value::{
    brute_force_value, dp_value_grid, value_from_synthesis, value_iteration_grid,
    BruteForceOptions, DpOptions, SynthesisOptions, ValueIterationOptions,
};
use hjb_core::verify::{
    check_hypotheses_with_residuals, check_infinite_horizon_with_residuals, corollary_eps_bound,
    divergence_probe, write_residual_csv, EpsMode,
};
use hjb_core::HjbError;

const EXIT_FAIL: u8 = 2;
const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 64;
const EXIT_GUARD: u8 = 65;
const EXIT_IO: u8 = 74;

#[derive(Parser)]
#[command(name = "hjb", disable_version_flag = true)]
struct Cli {
    /// Print the table of numeric defaults and exit.
    #[arg(long, global = true)]
    print_defaults: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Audit the verification hypotheses for a problem's candidate.
    Verify(VerifyArgs),
    /// Estimate the true value at a start point.
    Value(ValueArgs),
    /// Compare the candidate against independent value estimates.
    Compare(CompareArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    #[arg(long)]
    problem: Option<String>,
    /// TOML file mirroring these flags; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for reports and CSV artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// teo1 | teo2 | eps
    #[arg(long)]
    theorem: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    /// L1 norm of the relaxation weight g (eps mode).
    #[arg(long = "g-l1")]
    g_l1: Option<f64>,
    /// Window bounds: t_min t_max x1_min x1_max ...
    #[arg(long, num_args = 2.., allow_negative_numbers = true)]
    grid: Option<Vec<f64>>,
    #[arg(long)]
    mesh: Option<f64>,
    #[arg(long = "tol-hjb")]
    tol_hjb: Option<f64>,
    #[arg(long = "tol-target")]
    tol_target: Option<f64>,
}

#[derive(Args, Clone)]
struct ValueArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// brute | dp | synthesis
    #[arg(long)]
    method: String,
    /// Start point: either x components (t0 = 0) or t0 followed by x.
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    start: Vec<f64>,
    #[arg(long)]
    pieces: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Search span past the start time (brute force).
    #[arg(long)]
    horizon: Option<f64>,
    /// Grid mesh for the dp method.
    #[arg(long)]
    resolution: Option<f64>,
}

#[derive(Args, Clone)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 20)]
    points: usize,
    #[arg(long)]
    resolution: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    if cli.print_defaults {
        print!("{}", Defaults::default().table());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("missing subcommand; try --help");
        return ExitCode::from(EXIT_USAGE);
    };
    let code = match command {
        Command::Verify(a) => run_verify(a),
        Command::Value(a) => run_value(a),
        Command::Compare(a) => run_compare(a),
    };
    match code {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                HjbError::UnknownProblem(_) => EXIT_USAGE,
                HjbError::SearchTooLarge { .. } => EXIT_GUARD,
                HjbError::Io(_) => EXIT_IO,
                _ => EXIT_ERROR,
            })
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<FileConfig, HjbError> {
    match &common.config {
        Some(p) => FileConfig::load(p),
        None => Ok(FileConfig::default()),
    }
}

fn resolve_entry(common: &CommonArgs, cfg: &FileConfig) -> Result<GalleryEntry, HjbError> {
    let name = common
        .problem
        .clone()
        .or_else(|| cfg.problem.clone())
        .ok_or_else(|| HjbError::UnknownProblem("<none given>".into()))?;
    gallery::by_name(&name).ok_or(HjbError::UnknownProblem(name))
}

fn ensure_out_dir(out: &Option<PathBuf>) -> Result<PathBuf, HjbError> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    // fail early with the IO exit code when the directory is not writable
    let probe = dir.join(".hjb_write_probe");
    std::fs::write(&probe, b"ok")?;
    let _ = std::fs::remove_file(&probe);
    Ok(dir)
}

fn write_file(path: &Path, content: &[u8]) -> Result<(), HjbError> {
    std::fs::write(path, content)?;
    Ok(())
}

fn run_verify(args: VerifyArgs) -> Result<u8, HjbError> {
    let cfg = load_config(&args.common)?;
    let mut entry = resolve_entry(&args.common, &cfg)?;
    let seed = args
        .common
        .seed
        .or(cfg.seed)
        .unwrap_or(Defaults::default().seed);
    let out = ensure_out_dir(&args.common.out.clone().or(cfg.out.clone().map(PathBuf::from)))?;

    // window, mesh and tolerance overrides (flags win over the config file)
    let mesh = args.mesh.or(cfg.mesh);
    let window = args.grid.clone().or(cfg.grid.clone());
    if let Some(w) = &window {
        if w.len() < 4 || w.len() % 2 != 0 {
            return Err(HjbError::Config(
                "--grid needs t_min t_max followed by per-axis min max pairs".into(),
            ));
        }
        let m = mesh.unwrap_or(entry.default_check.grid.space_mesh());
        let t = Axis::from_range(w[0], w[1], entry.default_check.grid.t.step.min(w[1] - w[0]));
        let space = w[2..]
            .chunks(2)
            .map(|c| Axis::from_range(c[0], c[1], m))
            .collect();
        entry.default_check.grid = GridSpec { t, space };
    } else if let Some(m) = mesh {
        let g = &entry.default_check.grid;
        entry.default_check.grid = GridSpec {
            t: g.t,
            space: g
                .space
                .iter()
                .map(|a| Axis::from_range(a.min, a.max(), m))
                .collect(),
        };
    }
    if mesh.is_some() {
        let m = entry.default_check.grid.space_mesh();
        entry.default_check.tolerances.exclusion_radius = 2.0 * m;
        entry.default_check.budgets.refine_level = entry
            .candidate
            .exceptional_set
            .level_for_mesh(entry.default_check.tolerances.exclusion_radius / 4.0);
    }
    if let Some(v) = args.tol_hjb.or(cfg.tol_hjb) {
        entry.default_check.tolerances.hjb_tol = v;
    }
    if let Some(v) = args.tol_target.or(cfg.tol_target) {
        entry.default_check.tolerances.target_tol = v;
    }
    if let Some(h) = cfg.h_grad {
        entry.candidate.h_grad = h;
    }

    let theorem = match args.theorem.clone().or(cfg.theorem.clone()) {
        Some(s) => TheoremMode::parse(&s)
            .ok_or_else(|| HjbError::Config(format!("unknown theorem mode '{s}'")))?,
        None => entry.expected_verdict.theorem,
    };

    let (report, residuals) = match theorem {
        TheoremMode::Teo2 => {
            entry.default_check.theorem = TheoremMode::Teo2;
            check_infinite_horizon_with_residuals(
                &entry.candidate,
                &entry.problem,
                &entry.default_check,
                &entry.horizons,
                &entry.probes,
                entry.default_step,
                seed,
                entry.name,
            )?
        }
        TheoremMode::Teo1 => {
            entry.default_check.theorem = TheoremMode::Teo1;
            entry.default_check.eps_mode = None;
            check_hypotheses_with_residuals(
                &entry.candidate,
                &entry.problem,
                &entry.default_check,
                seed,
                entry.name,
            )?
        }
        TheoremMode::Eps => {
            let eps = args.eps.or(cfg.eps).unwrap_or(0.0);
            let g_l1 = args.g_l1.or(cfg.g_l1).unwrap_or(1.0);
            entry.default_check.theorem = TheoremMode::Eps;
            entry.default_check.eps_mode = Some(EpsMode::constant_g(eps, g_l1));
            let (report, residuals) = check_hypotheses_with_residuals(
                &entry.candidate,
                &entry.problem,
                &entry.default_check,
                seed,
                entry.name,
            )?;
            let cert = corollary_eps_bound(&report, eps, g_l1)?;
            write_file(&out.join("certificate.txt"), cert.text.as_bytes())?;
            (report, residuals)
        }
    };

    write_file(&out.join("report.json"), report.to_json().as_bytes())?;
    let mut csv = Vec::new();
    write_residual_csv(&residuals, &mut csv)?;
    write_file(&out.join("residuals.csv"), &csv)?;

    println!(
        "{}",
        serde_json::json!({
            "problem": entry.name,
            "theorem": report.theorem.as_str(),
            "conclusion": if report.passed() { "pass" } else { "fail" },
        })
    );
    Ok(if report.passed() { 0 } else { EXIT_FAIL })
}

fn parse_start(entry: &GalleryEntry, start: &[f64]) -> Result<(f64, Vec<f64>), HjbError> {
    let n = entry.problem.dim;
    if start.len() == n {
        Ok((0.0, start.to_vec()))
    } else if start.len() == n + 1 {
        Ok((start[0], start[1..].to_vec()))
    } else {
        Err(HjbError::Config(format!(
            "--start needs {n} values (state, t0 = 0) or {} (t0 then state)",
            n + 1
        )))
    }
}

fn run_value(args: ValueArgs) -> Result<u8, HjbError> {
    let cfg = load_config(&args.common)?;
    let entry = resolve_entry(&args.common, &cfg)?;
    let seed = args
        .common
        .seed
        .or(cfg.seed)
        .unwrap_or(Defaults::default().seed);
    let (t0, x0) = parse_start(&entry, &args.start)?;

    let value = match args.method.as_str() {
        "brute" => {
            let opts = BruteForceOptions::new(
                args.pieces.unwrap_or(entry.compare.brute_pieces),
                t0 + args.horizon.unwrap_or(entry.compare.brute_span),
                args.samples.unwrap_or(entry.compare.brute_samples),
                entry.default_step,
            )
            .with_hit_radius(entry.compare.hit_radius);
            brute_force_value(&entry.problem, t0, &x0, &opts)?.value
        }
        "dp" => {
            let out = ensure_out_dir(&args.common.out.clone().or(cfg.out.clone().map(PathBuf::from)))?;
            let mesh = args
                .resolution
                .unwrap_or(entry.default_check.grid.space_mesh());
            let grid = dp_grid_for(&entry, mesh)?;
            let mut csv = Vec::new();
            grid.write_csv(&mut csv)?;
            write_file(&out.join("value_grid.csv"), &csv)?;
            let mut bin = Vec::new();
            grid.write_binary(&mut bin)?;
            write_file(&out.join("value_grid.vgrd"), &bin)?;
            grid.interp(t0, &x0)
        }
        "synthesis" => {
            let fb = entry.synthesis.clone().ok_or_else(|| {
                HjbError::UnknownProblem(format!("{} carries no synthesis", entry.name))
            })?;
            let mut opts = SynthesisOptions::new(
                entry.default_step,
                Defaults::default().synthesis_cutoff,
            );
            opts.seed = seed;
            value_from_synthesis(&entry.problem, &fb, t0, &x0, &opts).value
        }
        other => {
            return Err(HjbError::Config(format!(
                "unknown method '{other}' (brute | dp | synthesis)"
            )))
        }
    };

    println!(
        "{}",
        serde_json::json!({"problem": entry.name, "method": args.method, "t0": t0, "x0": x0, "value": value})
    );
    Ok(0)
}

fn dp_grid_for(entry: &GalleryEntry, mesh: f64) -> Result<hjb_core::ValueGrid, HjbError> {
    match entry.compare.dp {
        DpKind::TimeGrid => {
            let g = &entry.default_check.grid;
            let spec = GridSpec {
                t: Axis::from_range(g.t.min, g.t.max(), mesh),
                space: g
                    .space
                    .iter()
                    .map(|a| Axis::from_range(a.min, a.max(), mesh))
                    .collect(),
            };
            dp_value_grid(&entry.problem, spec, &DpOptions::new(3))
        }
        DpKind::Stationary => {
            let g = &entry.default_check.grid;
            let space: Vec<Axis> = g
                .space
                .iter()
                .map(|a| Axis::from_range(a.min, a.max(), mesh))
                .collect();
            let opts = ValueIterationOptions::new(mesh, 2);
            value_iteration_grid(&entry.problem, space, &opts).map(|(g, _)| g)
        }
        DpKind::None => Err(HjbError::Config(format!(
            "no dp estimator configured for {}",
            entry.name
        ))),
    }
}

fn run_compare(args: CompareArgs) -> Result<u8, HjbError> {
    use rand::{Rng, SeedableRng};
    let cfg = load_config(&args.common)?;
    let entry = resolve_entry(&args.common, &cfg)?;
    let seed = args
        .common
        .seed
        .or(cfg.seed)
        .unwrap_or(Defaults::default().seed);
    let out = ensure_out_dir(&args.common.out.clone().or(cfg.out.clone().map(PathBuf::from)))?;

    // entries with a divergence plan get the loiter table instead of a
    // certificate-style comparison: their value has no lower bound
    if let Some(plan) = &entry.loiter {
        let dwells = [0.0, 10.0, 25.0, 50.0, 100.0];
        let rows = divergence_probe(&entry.problem, plan, &dwells, entry.default_step, 1e-6)?;
        let mut csv = String::from("dwell,cost\n");
        for (d, c) in &rows {
            csv.push_str(&format!("{d},{c}\n"));
        }
        write_file(&out.join("compare.csv"), csv.as_bytes())?;
        let w0 = entry.candidate.eval(plan.t0, &plan.x0);
        println!(
            "{}",
            serde_json::json!({
                "problem": entry.name,
                "mode": "divergence",
                "candidate": w0,
                "costs": rows.iter().map(|r| r.1).collect::<Vec<_>>(),
                "certificate": serde_json::Value::Null,
            })
        );
        // the estimate dives below the candidate without bound: no pass
        return Ok(EXIT_FAIL);
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let g = &entry.default_check.grid;
    let dp = match entry.compare.dp {
        DpKind::None => None,
        _ => Some(dp_grid_for(
            &entry,
            args.resolution.unwrap_or(g.space_mesh().max(1.0 / 64.0)),
        )?),
    };

    let mut worst = f64::NEG_INFINITY;
    let mut csv = String::from("t");
    for i in 1..=entry.problem.dim {
        csv.push_str(&format!(",x{i}"));
    }
    csv.push_str(",W,V_brute,V_dp,gap\n");
    let mut sampled = 0usize;
    let mut guard = 0usize;
    while sampled < args.points && guard < 200 * args.points {
        guard += 1;
        let t = g.t.min + rng.gen::<f64>() * (g.t.max() - g.t.min);
        let x: Vec<f64> = g
            .space
            .iter()
            .map(|a| a.min + rng.gen::<f64>() * (a.max() - a.min))
            .collect();
        if !entry.problem.verification_domain.contains(t, &x) {
            continue;
        }
        let near_exceptional = entry.candidate.exceptional_set.within(
            t,
            &x,
            entry.default_check.tolerances.exclusion_radius,
            entry.default_check.budgets.refine_level,
        );
        if near_exceptional {
            continue;
        }
        let w = entry.candidate.eval(t, &x);
        if w.is_infinite() {
            continue;
        }
        sampled += 1;
        let opts = BruteForceOptions::new(
            entry.compare.brute_pieces,
            t + entry.compare.brute_span,
            entry.compare.brute_samples,
            entry.default_step,
        )
        .with_hit_radius(entry.compare.hit_radius);
        let vb = brute_force_value(&entry.problem, t, &x, &opts)?.value;
        let vd = dp.as_ref().map(|grid| grid.interp(t, &x));
        let vbest = vb.min(vd.unwrap_or(f64::INFINITY));
        let gap = if vbest.is_finite() { w - vbest } else { f64::NEG_INFINITY };
        if gap > worst {
            worst = gap;
        }
        csv.push_str(&format!("{t}"));
        for c in &x {
            csv.push_str(&format!(",{c}"));
        }
        csv.push_str(&format!(
            "{}",
            format_args!(
                ",{w},{vb},{},{gap}\n",
                vd.map_or(String::from(""), |v| v.to_string())
            )
        ));
    }
    write_file(&out.join("compare.csv"), csv.as_bytes())?;

    let pass = worst <= entry.compare_slack;
    println!(
        "{}",
        serde_json::json!({
            "problem": entry.name,
            "points": sampled,
            "max_gap": if worst.is_finite() { worst } else { 0.0 },
            "slack": entry.compare_slack,
            "conclusion": if pass { "pass" } else { "fail" },
        })
    );
    Ok(if pass { 0 } else { EXIT_FAIL })
}

// keep the unused-helper lint honest: first_target_hit is exercised through
// the library; re-exported here for the doc reference in the README
#[allow(unused_imports)]
use first_target_hit as _first_target_hit_for_docs;
