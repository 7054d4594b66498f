//! The four subcommands. Each writes its artifacts into `--out` and
//! finishes with a `manifest.toml`; the returned code is the process exit
//! status.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use patchdyn_core::export;
use patchdyn_core::{
    compare_limits, extract_diracs, init_state, landscape, load_config, pressures,
    run_to_steady, solve_general, solve_symmetric, verify_solution, AsymptoticSolution,
    CompareTol, DensityState, Error, GridSpec, ParsedConfig, PatchModel, PressureVector,
    Result, SimOpts, SolveStatus, SolverOpts, TimeSeries,
};
use toml::Value;

use crate::output::{self, Manifest};
use crate::Mode;

pub const EXIT_OK: u8 = 0;
pub const EXIT_TOLERANCE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICS: u8 = 3;
pub const EXIT_NONCONV: u8 = 4;

/// Tolerance for the internal consistency report of a converged solution.
/// The solvers stop at residual 1e-10; constraints are held two orders
/// looser so finite-difference noise in the report never flips a verdict.
const CONSTRAINT_TOL: f64 = 1e-8;

pub struct Ctx {
    pub config: PathBuf,
    pub out: PathBuf,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::NonConvergence { .. } | Error::Infeasible { .. } | Error::InvalidSupportPoint { .. } => EXIT_NONCONV,
        Error::BlowUp { .. } | Error::StabilityBudget { .. } | Error::Positivity | Error::DegenerateSupport { .. } => EXIT_NUMERICS,
        _ => EXIT_CONFIG,
    }
}

/// Shared command scaffolding: output directory, wall clock, error-to-exit
/// mapping, manifest write. The manifest is written even when the body
/// fails, so a consumer always learns how the run ended.
fn execute(ctx: &Ctx, name: &'static str, body: impl FnOnce(&Ctx, &mut Manifest) -> Result<u8>) -> u8 {
    if let Err(e) = std::fs::create_dir_all(&ctx.out) {
        eprintln!("error: cannot create output directory {}: {e}", ctx.out.display());
        return EXIT_CONFIG;
    }
    let started = Instant::now();
    let mut man = Manifest::new(name);
    let code = match body(ctx, &mut man) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    };
    man.finish(code, started.elapsed());
    if let Err(e) = man.write(&ctx.out) {
        eprintln!("warning: manifest not written: {e}");
    }
    code
}

fn load(ctx: &Ctx) -> Result<ParsedConfig> {
    let cfg = load_config(&ctx.config)?;
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn write_snapshot(out: &Path, cfg: &ParsedConfig, man: &mut Manifest) -> Result<()> {
    let text = output::resolved_config(&cfg.model, &cfg.sim, &cfg.init);
    output::atomic_write(&out.join("config.resolved.toml"), &text)?;
    man.record("config.resolved.toml");
    man.set_config("config.resolved.toml");
    Ok(())
}

// ---------------------------------------------------------------- simulate

pub fn simulate(ctx: &Ctx, checkpoints: Option<&str>) -> u8 {
    execute(ctx, "simulate", |ctx, man| {
        let cfg = load(ctx)?;
        write_snapshot(&ctx.out, &cfg, man)?;
        let marks = parse_checkpoints(checkpoints, cfg.sim.tau_end)?;
        let run = run_segments(&cfg, &marks, &ctx.out, man)?;
        finish_pde_outputs(&cfg, &run, &ctx.out, man)?;
        let p = pressures(&cfg.model, &run.state)?;
        let verdict = if run.steady { "steady" } else { "tau_end reached, not steady" };
        println!(
            "simulate: {verdict} at tau = {}, I = {:?}",
            run.state.tau(),
            p.as_slice()
        );
        Ok(EXIT_OK)
    })
}

struct RunSummary {
    state: DensityState,
    series: TimeSeries,
    steady: bool,
    steps: u64,
    clamp_events: u64,
}

/// Integrates to `tau_end`, pausing at each checkpoint to write an
/// intermediate profile. Segments resume from the reached state, so the
/// composite trajectory is identical to an unsegmented run with the same
/// step size.
fn run_segments(cfg: &ParsedConfig, marks: &[f64], out: &Path, man: &mut Manifest) -> Result<RunSummary> {
    let grid = GridSpec::new(cfg.sim.grid_points, cfg.model.half_width())?;
    let mut state = init_state(&cfg.model, &grid, &cfg.init)?;
    let mut series = TimeSeries::default();
    let mut steady = false;
    let mut steps = 0u64;
    let mut clamp_events = 0u64;

    let mut targets = marks.to_vec();
    targets.push(cfg.sim.tau_end);
    for (seg, &target) in targets.iter().enumerate() {
        let opts = SimOpts { tau_end: target, ..cfg.sim };
        let res = run_to_steady(&cfg.model, state, &opts)?;
        append_series(&mut series, res.series);
        state = res.state;
        steady = res.steady;
        steps += res.steps;
        clamp_events += res.clamp_events;
        let at_checkpoint = seg + 1 < targets.len();
        if steady {
            if at_checkpoint {
                man.note(format!(
                    "steady at tau = {} before checkpoint {target}; later checkpoints skipped",
                    state.tau()
                ));
            }
            break;
        }
        if at_checkpoint {
            let name = format!("profile_tau_{target}.csv");
            export::write_profiles(&out.join(&name), &state)?;
            man.record(name);
        }
    }
    Ok(RunSummary { state, series, steady, steps, clamp_events })
}

/// Appends a segment's samples, dropping the leading one when it repeats
/// the previous segment's final time.
fn append_series(dst: &mut TimeSeries, src: TimeSeries) {
    let skip = match (dst.tau.last(), src.tau.first()) {
        (Some(&a), Some(&b)) if a == b => 1,
        _ => 0,
    };
    dst.tau.extend(src.tau.into_iter().skip(skip));
    dst.pressures.extend(src.pressures.into_iter().skip(skip));
}

fn finish_pde_outputs(cfg: &ParsedConfig, run: &RunSummary, out: &Path, man: &mut Manifest) -> Result<()> {
    export::write_timeseries(&out.join("timeseries.csv"), &run.series)?;
    man.record("timeseries.csv");
    export::write_profiles(&out.join("profile_final.csv"), &run.state)?;
    man.record("profile_final.csv");
    let p = pressures(&cfg.model, &run.state)?;
    man.detail("steady", Value::Boolean(run.steady));
    man.detail("steps", Value::Integer(run.steps as i64));
    man.detail("clamp_events", Value::Integer(run.clamp_events as i64));
    man.detail_f64("tau_final", run.state.tau());
    man.detail_floats("pressures", p.as_slice());
    if !run.steady {
        man.note("tau_end reached before the steady criterion");
    }
    Ok(())
}

// --------------------------------------------------------------- asymptotic

pub fn asymptotic(ctx: &Ctx, mode: Mode, bracket: Option<&str>, i0: Option<&str>) -> u8 {
    execute(ctx, "asymptotic", |ctx, man| {
        let cfg = load(ctx)?;
        write_snapshot(&ctx.out, &cfg, man)?;
        let bracket = parse_bracket(bracket)?;
        let i0 = parse_i0(i0, cfg.model.patches())?;
        let opts = SolverOpts::default();
        let sol = run_solver(&cfg.model, mode, bracket, i0, None, &opts)?;
        record_solution(&sol, &ctx.out, man)?;
        if sol.status != SolveStatus::Converged {
            eprintln!(
                "solver stopped with status {:?} after {} iterations; best iterate written",
                sol.status, sol.iterations
            );
            return Ok(EXIT_NONCONV);
        }
        let report = verify_solution(&cfg.model, &sol, opts.grid_points, CONSTRAINT_TOL)?;
        export::write_constraints(&ctx.out.join("constraints.csv"), &report)?;
        man.record("constraints.csv");
        println!(
            "asymptotic: {} atom(s) at {:?}, I = {:?} ({} iterations)",
            sol.points.len(),
            sol.points,
            sol.pressures.as_slice(),
            sol.iterations
        );
        if report.all_pass() {
            Ok(EXIT_OK)
        } else {
            for c in report.failures() {
                eprintln!("constraint failed: {} ({})", c.id, c.detail);
            }
            Ok(EXIT_TOLERANCE)
        }
    })
}

fn record_solution(sol: &AsymptoticSolution, out: &Path, man: &mut Manifest) -> Result<()> {
    export::write_solution(&out.join("solution.csv"), sol)?;
    man.record("solution.csv");
    man.detail("solver_status", Value::String(format!("{:?}", sol.status)));
    man.detail("iterations", Value::Integer(sol.iterations as i64));
    man.detail_floats("limit_pressures", sol.pressures.as_slice());
    man.detail_floats("support", &sol.points);
    Ok(())
}

/// Dispatches to the requested solver. `auto` tries the mirror-symmetric
/// root solve on two-patch models and falls back to the general solver when
/// the structure check rejects it; an explicit `--i0` forces the general
/// path. `seed` carries measured pressures (the verify command passes the
/// PDE steady state) and beats the uniform-level default.
fn run_solver(
    model: &PatchModel,
    mode: Mode,
    bracket: Option<(f64, f64)>,
    i0: Option<Vec<f64>>,
    seed: Option<&[f64]>,
    opts: &SolverOpts,
) -> Result<AsymptoticSolution> {
    let symmetric = |m: &PatchModel| -> Result<AsymptoticSolution> {
        solve_symmetric(m, bracket.unwrap_or_else(|| default_bracket(m)), opts)
    };
    let general = |m: &PatchModel, start_hint: Option<Vec<f64>>| -> Result<AsymptoticSolution> {
        let start = match (start_hint, seed) {
            (Some(v), _) => v,
            (None, Some(p)) => p.to_vec(),
            (None, None) => vec![uniform_seed(m, opts)?; m.patches()],
        };
        solve_general(m, &start, opts)
    };
    match mode {
        Mode::Symmetric => symmetric(model),
        Mode::General => general(model, i0),
        Mode::Auto => {
            if model.patches() == 2 && i0.is_none() {
                match symmetric(model) {
                    Err(Error::Symmetry(why)) => {
                        eprintln!("note: mirror solve rejected ({why}); using the general solver");
                        general(model, None)
                    }
                    other => other,
                }
            } else {
                general(model, i0)
            }
        }
    }
}

/// Pressure bracket that always straddles the root of the symmetric level
/// map. The Perron root is bounded by the largest column sum of the fitness
/// matrix, so pushing every column negative guarantees a sign change:
/// `hi > (sup base + net inflow surplus) / d` per patch.
fn default_bracket(model: &PatchModel) -> (f64, f64) {
    let k = model.patches();
    let mig = model.migration();
    let mut hi = 1.0f64;
    for j in 0..k {
        let d = model.growth_spec(j).pressure_sensitivity();
        if d <= 0.0 {
            continue;
        }
        let (_, top) = model.growth_spec(j).base_range(model.half_width());
        let emigration: f64 = (0..k).filter(|&i| i != j).map(|i| mig.rate(i, j)).sum();
        let slack = (emigration - mig.outflow(j)).max(0.0);
        hi = hi.max((top + slack) / d + 1.0);
    }
    (1e-6, hi)
}

/// Uniform pressure level at which the fitness landscape peaks at zero,
/// found by bisection. A good general-mode start for models without a
/// measured pressure: for symmetric problems it already sits on the
/// solution manifold.
fn uniform_seed(model: &PatchModel, opts: &SolverOpts) -> Result<f64> {
    let g = |c: f64| -> Result<f64> {
        let pv = PressureVector::uniform(model.patches(), c)?;
        Ok(landscape(model, &pv, opts.grid_points)?.global_max().h)
    };
    let (mut lo, mut hi) = default_bracket(model);
    let f_lo = g(lo)?;
    if f_lo <= 0.0 {
        // no growth anywhere even at near-zero pressure: start tiny and let
        // the solver report what it finds
        return Ok(lo);
    }
    let mut f_hi = g(hi)?;
    let mut doublings = 0;
    while f_hi > 0.0 {
        hi *= 2.0;
        f_hi = g(hi)?;
        doublings += 1;
        if doublings > 40 {
            return Err(Error::Bracket { lo, hi, f_lo, f_hi });
        }
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ------------------------------------------------------------------ verify

pub fn verify(
    ctx: &Ctx,
    mode: Mode,
    tol_pos: f64,
    tol_mass: f64,
    tol_pressure: f64,
    threshold: f64,
) -> u8 {
    execute(ctx, "verify", |ctx, man| {
        let cfg = load(ctx)?;
        write_snapshot(&ctx.out, &cfg, man)?;

        let run = run_segments(&cfg, &[], &ctx.out, man)?;
        finish_pde_outputs(&cfg, &run, &ctx.out, man)?;
        if !run.steady {
            eprintln!("note: the run hit tau_end before the steady criterion; comparing anyway");
        }
        let measured = pressures(&cfg.model, &run.state)?;
        let atoms = extract_diracs(&run.state, threshold)?;

        let opts = SolverOpts::default();
        let sol = run_solver(&cfg.model, mode, None, None, Some(measured.as_slice()), &opts)?;
        record_solution(&sol, &ctx.out, man)?;
        if sol.status != SolveStatus::Converged {
            eprintln!(
                "solver stopped with status {:?} after {} iterations; no comparison made",
                sol.status, sol.iterations
            );
            return Ok(EXIT_NONCONV);
        }
        let report = verify_solution(&cfg.model, &sol, opts.grid_points, CONSTRAINT_TOL)?;
        export::write_constraints(&ctx.out.join("constraints.csv"), &report)?;
        man.record("constraints.csv");

        let tol = CompareTol { position: tol_pos, mass: tol_mass, pressure: tol_pressure };
        let cmp = compare_limits(&atoms, &measured, &sol, &tol)?;
        export::write_comparison(&ctx.out.join("comparison.csv"), &cmp)?;
        man.record("comparison.csv");
        man.detail("comparison_pass", Value::Boolean(cmp.pass));
        man.detail_f64("worst_position", cmp.worst_position);
        man.detail_f64("worst_mass", cmp.worst_mass);
        man.detail_f64("worst_pressure", cmp.worst_pressure);

        for line in &cmp.details {
            println!("{line}");
        }
        let verdict = if cmp.pass { "agree" } else { "disagree" };
        println!(
            "verify: the two limits {verdict} (worst position {:.3e}, mass {:.3e}, pressure {:.3e})",
            cmp.worst_position, cmp.worst_mass, cmp.worst_pressure
        );
        if !report.all_pass() {
            for c in report.failures() {
                eprintln!("constraint failed: {} ({})", c.id, c.detail);
            }
            return Ok(EXIT_TOLERANCE);
        }
        Ok(if cmp.pass { EXIT_OK } else { EXIT_TOLERANCE })
    })
}

// ------------------------------------------------------------------- sweep

pub fn sweep(ctx: &Ctx, values: &str, workers: Option<usize>, bracket: Option<&str>) -> u8 {
    execute(ctx, "sweep", |ctx, man| {
        let cfg = load(ctx)?;
        write_snapshot(&ctx.out, &cfg, man)?;
        let vals = parse_sweep_values(values)?;
        let bracket = parse_bracket(bracket)?;
        let workers = resolve_workers(workers)?.min(vals.len());
        let opts = SolverOpts::default();

        // Work-stealing by index into a result slot per value: the output
        // is ordered by input position, so the worker count cannot change
        // a byte of it.
        let results: Mutex<Vec<Option<SweepOutcome>>> = Mutex::new(vec![None; vals.len()]);
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, Ordering::Relaxed);
                    if idx >= vals.len() {
                        break;
                    }
                    let outcome = sweep_one(&cfg.model, vals[idx], bracket, &opts);
                    results.lock().expect("no panics hold this lock")[idx] = Some(outcome);
                });
            }
        });
        let rows = results.into_inner().expect("scope joined all workers");

        let mut text = String::from("nu,n_atoms,I,x_left,x_right\n");
        let mut failures = 0usize;
        for (v, row) in vals.iter().zip(&rows) {
            match row.as_ref().expect("every index was visited") {
                Ok(r) => {
                    text.push_str(&format!(
                        "{v},{},{},{},{}\n",
                        r.n_atoms, r.pressure, r.x_left, r.x_right
                    ));
                }
                Err(msg) => {
                    failures += 1;
                    text.push_str(&format!("# nu={v} failed: {msg}\n"));
                }
            }
        }
        output::atomic_write(&ctx.out.join("sweep.csv"), &text)?;
        man.record("sweep.csv");
        man.detail_floats("values", &vals);
        man.detail("workers", Value::Integer(workers as i64));
        man.detail("failures", Value::Integer(failures as i64));
        println!("sweep: {} value(s), {failures} failure(s), {workers} worker(s)", vals.len());
        Ok(if failures == 0 { EXIT_OK } else { EXIT_NONCONV })
    })
}

type SweepOutcome = std::result::Result<SweepRow, String>;

#[derive(Clone)]
struct SweepRow {
    n_atoms: usize,
    pressure: f64,
    x_left: f64,
    x_right: f64,
}

fn sweep_one(
    model: &PatchModel,
    nu: f64,
    bracket: Option<(f64, f64)>,
    opts: &SolverOpts,
) -> SweepOutcome {
    let run = || -> Result<SweepRow> {
        let scaled = model.with_migration_scale(nu)?;
        let bracket = bracket.unwrap_or_else(|| default_bracket(&scaled));
        let sol = solve_symmetric(&scaled, bracket, opts)?;
        if sol.status != SolveStatus::Converged {
            return Err(Error::NonConvergence {
                iterations: sol.iterations as usize,
                residual: sol.residuals.normalization,
            });
        }
        let x_left = *sol.points.first().ok_or(Error::DegenerateSupport { count: 0 })?;
        let x_right = *sol.points.last().expect("nonempty support");
        Ok(SweepRow { n_atoms: sol.points.len(), pressure: sol.pressures[0], x_left, x_right })
    };
    run().map_err(|e| e.to_string())
}

// ------------------------------------------------------------ flag parsing

fn parse_list(s: &str, flag: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let t = part.trim();
        if t.is_empty() {
            return Err(Error::Invalid(format!("--{flag}: empty entry in {s:?}")));
        }
        let v: f64 = t
            .parse()
            .map_err(|_| Error::Invalid(format!("--{flag}: {t:?} is not a number")))?;
        if !v.is_finite() {
            return Err(Error::Invalid(format!("--{flag}: entries must be finite, got {v}")));
        }
        out.push(v);
    }
    Ok(out)
}

fn parse_checkpoints(s: Option<&str>, tau_end: f64) -> Result<Vec<f64>> {
    let Some(s) = s else { return Ok(Vec::new()) };
    let mut marks = parse_list(s, "checkpoints")?;
    marks.sort_by(f64::total_cmp);
    marks.dedup();
    for &t in &marks {
        if t <= 0.0 || t >= tau_end {
            return Err(Error::Invalid(format!(
                "--checkpoints: {t} is outside (0, tau_end = {tau_end})"
            )));
        }
    }
    Ok(marks)
}

fn parse_bracket(s: Option<&str>) -> Result<Option<(f64, f64)>> {
    let Some(s) = s else { return Ok(None) };
    let v = parse_list(s, "bracket")?;
    let [lo, hi] = v.as_slice() else {
        return Err(Error::Invalid(format!(
            "--bracket: expected two values lo,hi, got {}",
            v.len()
        )));
    };
    if *lo < 0.0 || lo >= hi {
        return Err(Error::Invalid(format!(
            "--bracket: need 0 <= lo < hi, got {lo},{hi}"
        )));
    }
    Ok(Some((*lo, *hi)))
}

fn parse_i0(s: Option<&str>, patches: usize) -> Result<Option<Vec<f64>>> {
    let Some(s) = s else { return Ok(None) };
    let v = parse_list(s, "i0")?;
    if v.len() != patches {
        return Err(Error::Invalid(format!(
            "--i0: expected {patches} starting pressures, got {}",
            v.len()
        )));
    }
    if let Some(bad) = v.iter().find(|&&x| x < 0.0) {
        return Err(Error::Invalid(format!("--i0: pressures are nonnegative, got {bad}")));
    }
    Ok(Some(v))
}

fn parse_sweep_values(s: &str) -> Result<Vec<f64>> {
    let vals = parse_list(s, "values")?;
    if let Some(bad) = vals.iter().find(|&&v| v <= 0.0) {
        return Err(Error::Invalid(format!(
            "--values: migration scales must be positive, got {bad}"
        )));
    }
    Ok(vals)
}

fn resolve_workers(flag: Option<usize>) -> Result<usize> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var("PATCHDYN_WORKERS") {
            Ok(s) => s.trim().parse().map_err(|_| {
                Error::Invalid(format!("PATCHDYN_WORKERS: {s:?} is not a worker count"))
            })?,
            Err(_) => 1,
        },
    };
    if n == 0 {
        return Err(Error::Invalid("worker count must be at least 1".into()));
    }
    Ok(n.min(64))
}
