//! Subcommand implementations. Each writes into its own run directory and
//! returns a console summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;

use bubbletower::flow::{
    comparison_monitor, evolve, lambda_sweep, FlowConfig, FlowResult, FlowStatus, FlowStepper,
    Integrator,
};
use bubbletower::mesh::{
    apply_radial_laplacian, critical_exponent, Grading, ProblemParams, RadialField, RadialGrid,
};
use bubbletower::profile::Bubble;
use bubbletower::spectral::{
    bubble_source_overlap, first_eigenpair, limit_extrapolation, scaled_eigenvalue_diagnostic,
    sign_condition, EigenPair, LinearizedOperator, EIGEN_RESIDUAL_TOL,
};
use bubbletower::stationary::{
    find_nodal_solution, shoot, ShootOptions, StationaryConfig, StationarySolution,
};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::output::{fmt17, fmt6, sha256_hex, unix_now, Csv, ManifestCore, ARTIFACT_VERSION};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver failure: {0}")]
    Solver(#[from] bubbletower::Error),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Failed(String),
}

impl CommandError {
    /// 1 for usage and configuration errors, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type CmdResult = Result<String, CommandError>;

/// Effective configuration minus `out_dir`, which must not change the run hash.
fn hashed_config(cfg: &RunConfig) -> Value {
    let mut effective = cfg.effective.clone();
    effective.remove("out_dir");
    json!(effective)
}

/// Manifest core shared by all problem-level commands.
fn core(
    op: &str,
    cfg: &RunConfig,
    config_file: Option<&Path>,
) -> Result<ManifestCore, CommandError> {
    let mut m = ManifestCore::new(op);
    m.insert("config", hashed_config(cfg));
    m.insert(
        "params",
        json!({
            "N": cfg.params.dim(),
            "k": cfg.params.towers(),
            "eps": cfg.params.eps(),
            "p_s": cfg.params.p_s(),
            "alpha_n": cfg.params.alpha_n(),
        }),
    );
    m.insert(
        "grid",
        json!({
            "inner": cfg.params.eps(),
            "outer": 1.0,
            "intervals": cfg.stationary.intervals,
            "grading": cfg.stationary.grading.label(),
        }),
    );
    m.insert(
        "tolerances",
        json!({
            "shooting_rtol": cfg.stationary.rtol,
            "residual_tol": cfg.stationary.residual_tol,
            "eigen_residual_tol": EIGEN_RESIDUAL_TOL,
            "stationary_tol": cfg.flow.stationary_tol,
            "decay_tol": cfg.flow.decay_tol,
        }),
    );
    let mut inputs = BTreeMap::new();
    if let Some(path) = config_file {
        let bytes = fs::read(path)?;
        inputs.insert("config_file", sha256_hex(&bytes));
    }
    m.insert("input_hashes", json!(inputs));
    Ok(m)
}

fn prepare(m: &ManifestCore, cfg: &RunConfig) -> Result<PathBuf, CommandError> {
    let dir = m.run_dir(&cfg.out_dir);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn field_csv(columns: &[&str], fields: &[&RadialField]) -> Csv {
    let mut csv = Csv::new(columns);
    let nodes = fields[0].grid().nodes();
    for (j, r) in nodes.iter().enumerate() {
        let mut row = vec![fmt17(*r)];
        row.extend(fields.iter().map(|f| fmt17(f.values()[j])));
        csv.push(row);
    }
    csv
}

fn numbers(xs: &[f64]) -> Value {
    json!(xs)
}

fn solve_tower(
    params: &ProblemParams,
    cfg: &StationaryConfig,
) -> Result<(StationarySolution, EigenPair), CommandError> {
    let sol = find_nodal_solution(params, cfg)?;
    let op = LinearizedOperator::at(&sol.field, params.p_s())?;
    let pair = first_eigenpair(&op)?;
    Ok((sol, pair))
}

fn tower_json(sol: &StationarySolution) -> Value {
    json!({
        "shooting_slope": sol.shooting_slope,
        "scan_bracket": [sol.scan_bracket.0, sol.scan_bracket.1],
        "nodal_radii": numbers(&sol.nodal_radii),
        "deltas_measured": numbers(&sol.deltas_measured),
        "residual_norm": sol.residual_norm,
        "newton_history": numbers(&sol.newton_history),
        "shooting_gap": sol.shooting_gap,
        "truncation_estimate": sol.truncation_estimate,
        "tie_break": "smallest |s| in the nodal class",
    })
}

pub fn tower(cfg: &RunConfig, config_file: Option<&Path>) -> CmdResult {
    let started = unix_now();
    let m = core("tower", cfg, config_file)?;
    let sol = find_nodal_solution(&cfg.params, &cfg.stationary)?;
    let dir = prepare(&m, cfg)?;
    field_csv(&["r", "u"], &[&sol.field]).write(&dir.join("solution.csv"))?;
    let sidecar = tower_json(&sol);
    crate::output::write_json(&dir.join("tower.json"), &sidecar)?;
    m.write(&dir, started, sidecar)?;
    Ok(format!(
        "tower N={} k={} eps={}: s* = {}, residual {}, deltas {:?}\n{}",
        cfg.params.dim(),
        cfg.params.towers(),
        cfg.params.eps(),
        fmt6(sol.shooting_slope),
        fmt6(sol.residual_norm),
        sol.deltas_measured
            .iter()
            .map(|&d| fmt6(d))
            .collect::<Vec<_>>(),
        dir.display()
    ))
}

pub fn eig(cfg: &RunConfig, config_file: Option<&Path>) -> CmdResult {
    let started = unix_now();
    let mut m = core("eig", cfg, config_file)?;
    m.insert(
        "limit",
        json!({ "N": cfg.params.dim(), "radii": cfg.radii, "spacing": cfg.spacing }),
    );
    let (sol, pair) = solve_tower(&cfg.params, &cfg.stationary)?;
    let sc = sign_condition(&sol, &pair)?;
    let limit = limit_extrapolation(cfg.params.dim(), &cfg.radii, cfg.spacing)?;
    let scaled = scaled_eigenvalue_diagnostic(&sol, &pair, limit.lambda_star)?;
    let dir = prepare(&m, cfg)?;
    field_csv(&["r", "phi1"], &[&pair.phi]).write(&dir.join("eigenfunction.csv"))?;
    field_csv(&["r", "u"], &[&sol.field]).write(&dir.join("solution.csv"))?;
    let outcome = json!({
        "lambda": pair.lambda,
        "residual": pair.residual,
        "rayleigh": pair.rayleigh,
        "normalization": pair.normalization,
        "inner_product": sc.inner_product,
        "source_overlap": sc.source_overlap,
        "identity_rhs": sc.identity_rhs,
        "identity_residual": sc.identity_residual,
        "identity_residual_nodal": sc.identity_residual_nodal,
        "scaled_overlap": sc.scaled_overlap,
        "lambda_tilde": scaled.lambda_tilde,
        "lambda_star": limit.lambda_star,
        "gap_to_limit": scaled.gap_to_limit,
        "tower": tower_json(&sol),
    });
    crate::output::write_json(&dir.join("eig.json"), &outcome)?;
    m.write(&dir, started, outcome)?;
    Ok(format!(
        "eig N={} k={} eps={}: lambda = {}, <phi, phi1> = {}, identity residual {}, lambda~ = {} (lambda* = {})\n{}",
        cfg.params.dim(),
        cfg.params.towers(),
        cfg.params.eps(),
        fmt6(pair.lambda),
        fmt6(sc.inner_product),
        fmt6(sc.identity_residual),
        fmt6(scaled.lambda_tilde),
        fmt6(limit.lambda_star),
        dir.display()
    ))
}

pub fn limit(cfg: &RunConfig, config_file: Option<&Path>) -> CmdResult {
    let started = unix_now();
    let mut m = ManifestCore::new("limit");
    m.insert("config", hashed_config(cfg));
    m.insert(
        "limit",
        json!({ "N": cfg.params.dim(), "radii": cfg.radii, "spacing": cfg.spacing }),
    );
    let mut inputs = BTreeMap::new();
    if let Some(path) = config_file {
        inputs.insert("config_file", sha256_hex(&fs::read(path)?));
    }
    m.insert("input_hashes", json!(inputs));
    let est = limit_extrapolation(cfg.params.dim(), &cfg.radii, cfg.spacing)?;
    let overlap = bubble_source_overlap(&est.phi_star.phi)?;
    let dir = prepare(&m, cfg)?;
    let mut table = Csv::new(&["radius", "lambda_fine", "lambda_coarse"]);
    for ((r, f), c) in est.radii.iter().zip(&est.lambdas).zip(&est.lambdas_coarse) {
        table.push_numbers(&[*r, *f, *c]);
    }
    table.write(&dir.join("limit.csv"))?;
    field_csv(&["r", "phi_star"], &[&est.phi_star.phi]).write(&dir.join("phi_star.csv"))?;
    let outcome = json!({
        "lambda_star": est.lambda_star,
        "radius_change": est.radius_change,
        "spacing_error": est.spacing_error,
        "bubble_source_overlap": overlap,
    });
    crate::output::write_json(&dir.join("limit.json"), &outcome)?;
    m.write(&dir, started, outcome)?;
    Ok(format!(
        "limit N={}: lambda* = {} (radius change {}, spacing error {}), int f(U) phi* = {}\n{}",
        cfg.params.dim(),
        fmt6(est.lambda_star),
        fmt6(est.radius_change),
        fmt6(est.spacing_error),
        fmt6(overlap),
        dir.display()
    ))
}

fn status_json(status: &FlowStatus) -> Value {
    match status {
        FlowStatus::Stationary => json!({ "label": status.label() }),
        FlowStatus::GlobalBounded { t_final, decayed } => {
            json!({ "label": status.label(), "t_final": t_final, "decayed": decayed })
        }
        FlowStatus::BlowUp {
            t_estimate,
            t_bracket,
        } => {
            json!({ "label": status.label(), "t_estimate": t_estimate, "t_bracket": [t_bracket.0, t_bracket.1] })
        }
        FlowStatus::Undetermined { t_final } => {
            json!({ "label": status.label(), "t_final": t_final })
        }
    }
}

/// Horizon: `stationary_horizon / |λ_ε|` for `λ = 1`, `t_end` otherwise.
fn flow_config(cfg: &RunConfig, lambda: f64, lambda_eps: f64) -> FlowConfig {
    let mut flow = cfg.flow.clone();
    if lambda == 1.0 {
        flow.t_end = cfg.stationary_horizon / lambda_eps.abs();
    }
    flow
}

fn run_flow(
    sol: &StationarySolution,
    lambda: f64,
    flow: &FlowConfig,
) -> Result<FlowResult, CommandError> {
    Ok(evolve(&sol.field.scaled(lambda).with_zero_trace(), flow)?)
}

pub fn flow(cfg: &RunConfig, config_file: Option<&Path>) -> CmdResult {
    let started = unix_now();
    let m = core("flow", cfg, config_file)?;
    let (sol, pair) = solve_tower(&cfg.params, &cfg.stationary)?;
    let flow = flow_config(cfg, cfg.lambda, pair.lambda);
    let result = run_flow(&sol, cfg.lambda, &flow)?;
    let dir = prepare(&m, cfg)?;
    let mut series = Csv::new(&["t", "sup_norm", "energy", "dt"]);
    for s in &result.series {
        series.push_numbers(&[s.t, s.sup_norm, s.energy, s.dt]);
    }
    series.write(&dir.join("series.csv"))?;
    field_csv(&["r", "v"], &[&result.final_field]).write(&dir.join("final.csv"))?;
    let outcome = json!({
        "lambda": cfg.lambda,
        "lambda_eps": pair.lambda,
        "t_end": flow.t_end,
        "status": status_json(&result.status),
        "steps": result.steps,
        "max_drift": result.max_drift,
        "max_energy_increase": result.max_energy_increase,
        "final_sup_norm": result.final_field.sup_norm(),
    });
    crate::output::write_json(&dir.join("flow.json"), &outcome)?;
    m.write(&dir, started, outcome)?;
    Ok(format!(
        "flow lambda={} on N={} k={} eps={}: {} after {} steps (drift {})\n{}",
        cfg.lambda,
        cfg.params.dim(),
        cfg.params.towers(),
        cfg.params.eps(),
        result.status.label(),
        result.steps,
        fmt6(result.max_drift),
        dir.display()
    ))
}

struct SweepRow {
    k: usize,
    eps: f64,
    lambda: f64,
    outcome: Result<(FlowResult, f64), String>,
}

/// Fans out one worker per `(k, eps)` pair; rows are merged in list order,
/// so the table does not depend on thread scheduling.
pub fn sweep(cfg: &RunConfig, config_file: Option<&Path>) -> CmdResult {
    let started = unix_now();
    let mut m = core("sweep", cfg, config_file)?;
    m.insert(
        "sweep",
        json!({ "k_list": cfg.k_list, "eps_list": cfg.eps_list, "lambda_list": cfg.lambda_list }),
    );
    let cases: Vec<(usize, f64)> = cfg
        .k_list
        .iter()
        .flat_map(|&k| cfg.eps_list.iter().map(move |&eps| (k, eps)))
        .collect();
    let per_case: Vec<Vec<SweepRow>> = thread::scope(|scope| {
        let handles: Vec<_> = cases
            .iter()
            .map(|&(k, eps)| scope.spawn(move || sweep_one(cfg, k, eps)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    let dir = prepare(&m, cfg)?;
    let mut table = Csv::new(&[
        "k",
        "eps",
        "lambda",
        "status",
        "t_estimate",
        "t_final",
        "steps",
        "max_drift",
        "final_sup_norm",
        "lambda_eps",
        "error",
    ]);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for row in per_case.into_iter().flatten() {
        let mut cells = vec![row.k.to_string(), fmt17(row.eps), fmt17(row.lambda)];
        let label = match &row.outcome {
            Ok((r, lambda_eps)) => {
                let t_est = match r.status {
                    FlowStatus::BlowUp { t_estimate, .. } => fmt17(t_estimate),
                    _ => String::new(),
                };
                cells.extend([
                    r.status.label().into(),
                    t_est,
                    fmt17(r.final_time()),
                    r.steps.to_string(),
                    fmt17(r.max_drift),
                    fmt17(r.final_field.sup_norm()),
                    fmt17(*lambda_eps),
                    String::new(),
                ]);
                r.status.label().to_string()
            }
            Err(e) => {
                cells.push("failed".into());
                cells.extend(std::iter::repeat_n(String::new(), 6));
                cells.push(e.replace([',', '\n'], ";"));
                "failed".to_string()
            }
        };
        table.push(cells);
        *counts.entry(label).or_default() += 1;
    }
    table.write(&dir.join("classification.csv"))?;
    let outcome = json!({ "rows": table.len(), "status_counts": counts });
    m.write(&dir, started, outcome)?;
    let failed = counts.get("failed").copied().unwrap_or(0);
    let summary = format!(
        "sweep: {} runs, status counts {:?}\n{}",
        table.len(),
        counts,
        dir.display()
    );
    if failed > 0 {
        return Err(CommandError::Failed(format!(
            "{summary}\n{failed} runs failed (partial table written)"
        )));
    }
    Ok(summary)
}

fn sweep_one(cfg: &RunConfig, k: usize, eps: f64) -> Vec<SweepRow> {
    let row = |lambda: f64, outcome| SweepRow {
        k,
        eps,
        lambda,
        outcome,
    };
    let failed = |msg: String| {
        cfg.lambda_list
            .iter()
            .map(|&lambda| row(lambda, Err(msg.clone())))
            .collect::<Vec<_>>()
    };
    let params = match cfg.params.with_towers(k).and_then(|p| p.with_eps(eps)) {
        Ok(p) => p,
        Err(e) => return failed(e.to_string()),
    };
    let (sol, pair) = match solve_tower(&params, &cfg.stationary) {
        Ok(x) => x,
        Err(e) => return failed(e.to_string()),
    };
    let others: Vec<f64> = cfg
        .lambda_list
        .iter()
        .copied()
        .filter(|&l| l != 1.0)
        .collect();
    let mut results: BTreeMap<usize, Result<FlowResult, String>> = BTreeMap::new();
    for (lambda, r) in lambda_sweep(&sol, &others, &cfg.flow) {
        let idx = cfg
            .lambda_list
            .iter()
            .position(|&l| l == lambda)
            .expect("lambda from the list");
        results.insert(idx, r.map_err(|e| e.to_string()));
    }
    if let Some(idx) = cfg.lambda_list.iter().position(|&l| l == 1.0) {
        let flow = flow_config(cfg, 1.0, pair.lambda);
        results.insert(idx, run_flow(&sol, 1.0, &flow).map_err(|e| e.to_string()));
    }
    cfg.lambda_list
        .iter()
        .enumerate()
        .map(|(idx, &lambda)| {
            let outcome = match results.remove(&idx) {
                Some(Ok(r)) => Ok((r, pair.lambda)),
                Some(Err(e)) => Err(e),
                // repeated lambda values are reported once
                None => Err("duplicate lambda".into()),
            };
            row(lambda, outcome)
        })
        .collect()
}

trait FinalTime {
    fn final_time(&self) -> f64;
}

impl FinalTime for FlowResult {
    fn final_time(&self) -> f64 {
        self.series.last().map_or(0.0, |s| s.t)
    }
}

/// One invariant check of the `verify` suite.
struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
    pass: bool,
}

fn check_le(name: &'static str, value: f64, tolerance: f64) -> Check {
    Check {
        name,
        value,
        tolerance,
        pass: value <= tolerance,
    }
}

fn verify_checks() -> Result<Vec<Check>, CommandError> {
    let mut checks = Vec::new();

    // second-order bubble residual on a log grid
    let mut worst_order_gap: f64 = 0.0;
    for dim in [3usize, 4] {
        let p = critical_exponent(dim);
        let b = Bubble::new(0.1, dim)?;
        let res = |m: usize| -> Result<f64, CommandError> {
            let g = Arc::new(RadialGrid::new(dim, 1e-2, 1.0, m, Grading::LogUniform)?);
            let u = RadialField::from_fn(g, |r| b.eval(r));
            let lap = apply_radial_laplacian(&u)?;
            Ok(u.grid()
                .unknowns()
                .map(|j| (lap.values()[j] + u.values()[j].powf(p)).abs())
                .fold(0.0, f64::max))
        };
        let order = (res(256)? / res(512)?).log2();
        worst_order_gap = worst_order_gap.max((order - 2.0).abs());
    }
    checks.push(check_le(
        "bubble residual order |q - 2|",
        worst_order_gap,
        0.2,
    ));

    // closed-form annulus eigenvalue and constant shift
    let g = Arc::new(RadialGrid::new(3, 0.5, 1.0, 1024, Grading::Uniform)?);
    let zero = first_eigenpair(&LinearizedOperator::new(RadialField::zeros(Arc::clone(
        &g,
    )))?)?;
    let exact = 4.0 * std::f64::consts::PI.powi(2);
    checks.push(check_le(
        "annulus eigenvalue vs 4 pi^2 (M=1024)",
        (zero.lambda / exact - 1.0).abs(),
        1e-5,
    ));
    let shifted = first_eigenpair(&LinearizedOperator::new(RadialField::from_fn(
        Arc::clone(&g),
        |_| 3.0,
    ))?)?;
    checks.push(check_le(
        "constant potential shift",
        (shifted.lambda - (zero.lambda - 3.0)).abs() / zero.lambda,
        1e-10,
    ));

    // odd symmetry of shooting
    let params = ProblemParams::new(4, 2, 1e-2)?;
    let up = shoot(&params, 50.0, &ShootOptions::default())?;
    let down = shoot(&params, -50.0, &ShootOptions::default())?;
    checks.push(check_le(
        "shooting odd symmetry",
        (up.terminal_value + down.terminal_value).abs(),
        0.0,
    ));

    // small tower: structure, spectrum, sign condition
    let cfg = StationaryConfig {
        intervals: 1024,
        ..Default::default()
    };
    let (sol, pair) = solve_tower(&params, &cfg)?;
    let sc = sign_condition(&sol, &pair)?;
    checks.push(check_le(
        "tower interior zeros - (k-1)",
        (sol.field.sign_changes() as f64 - 1.0).abs(),
        0.0,
    ));
    checks.push(check_le("tower relative residual", sol.residual_norm, 1e-8));
    checks.push(check_le(
        "first eigenvalue sign (lambda < 0)",
        pair.lambda,
        -f64::MIN_POSITIVE,
    ));
    checks.push(check_le(
        "eigen residual",
        pair.residual,
        EIGEN_RESIDUAL_TOL,
    ));
    checks.push(check_le(
        "eigenvector normalization",
        (pair.normalization - 1.0).abs(),
        1e-10,
    ));
    checks.push(check_le(
        "eigenvector negative entries",
        pair.phi.values().iter().filter(|&&v| v < 0.0).count() as f64,
        0.0,
    ));
    checks.push(check_le(
        "sign condition -(phi . phi1)",
        -sc.inner_product,
        -f64::MIN_POSITIVE,
    ));
    checks.push(check_le("identity residual", sc.identity_residual, 1e-6));

    // limit problem sign and monotonicity
    let est = limit_extrapolation(4, &[20.0, 40.0], 0.05)?;
    checks.push(check_le(
        "limit eigenvalue lambda*_20",
        est.lambdas[0],
        -f64::MIN_POSITIVE,
    ));
    checks.push(check_le(
        "limit monotonicity lambda*_40 - lambda*_20",
        est.lambdas[1] - est.lambdas[0],
        0.0,
    ));

    // reaction-only blow-up time
    let g = Arc::new(RadialGrid::new(3, 0.5, 1.0, 16, Grading::Uniform)?);
    let v0 = RadialField::from_fn(Arc::clone(&g), |_| 1.0).with_zero_trace();
    let reaction = FlowConfig {
        integrator: Integrator::ReactionOnly,
        t_end: 10.0,
        dt_max: 1e-2,
        ..Default::default()
    };
    let t_err = match evolve(&v0, &reaction)?.status {
        FlowStatus::BlowUp { t_estimate, .. } => (t_estimate / 0.25 - 1.0).abs(),
        _ => f64::INFINITY,
    };
    checks.push(check_le(
        "reaction-only blow-up time (p=5 a=1)",
        t_err,
        0.01,
    ));

    // comparison and dissipation on the tower grid
    let grid = sol.field.grid();
    let bump =
        RadialField::from_fn(Arc::clone(grid), |r| 1e-2 * (1.0 - r) * (r - 1e-2)).with_zero_trace();
    let above = sol.field.axpy(1.0, &bump)?;
    let short = FlowConfig {
        t_end: 1e-3,
        ..Default::default()
    };
    let rep = comparison_monitor(&sol.field, &above, &short)?;
    checks.push(check_le(
        "comparison ordering violation",
        rep.ordering_violation,
        1e-8,
    ));
    let mut stepper =
        FlowStepper::new(&sol.field.scaled(0.5).with_zero_trace(), Integrator::ImexBe)?;
    let mut j = bubbletower::flow::energy(&stepper.field());
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let dt = short.dt_max.min(stepper.reaction_step(short.safety));
        stepper.step(dt)?;
        let next = bubbletower::flow::energy(&stepper.field());
        worst = worst.max((next - j) / (1.0 + j.abs()));
        j = next;
    }
    checks.push(check_le("energy increase per step", worst, 1e-8));

    let zero_run = evolve(&RadialField::zeros(Arc::clone(grid)), &short)?;
    checks.push(check_le(
        "zero data stays zero",
        zero_run.final_field.sup_norm(),
        0.0,
    ));
    Ok(checks)
}

pub fn verify(cfg: &RunConfig) -> CmdResult {
    let started = unix_now();
    let m = ManifestCore::new("verify");
    let checks = verify_checks()?;
    let dir = m.run_dir(&cfg.out_dir);
    fs::create_dir_all(&dir)?;
    let mut table = Csv::new(&["check", "pass", "value", "tolerance"]);
    let mut lines = Vec::new();
    for c in &checks {
        table.push(vec![
            c.name.into(),
            c.pass.to_string(),
            fmt17(c.value),
            fmt17(c.tolerance),
        ]);
        lines.push(format!(
            "{} {:<48} {} (tol {})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            fmt6(c.value),
            fmt6(c.tolerance)
        ));
    }
    table.write(&dir.join("verify.csv"))?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    m.write(
        &dir,
        started,
        json!({ "checks": checks.len(), "failed": failed }),
    )?;
    let summary = format!(
        "{}\n{} checks, {failed} failed\n{}",
        lines.join("\n"),
        checks.len(),
        dir.display()
    );
    if failed > 0 {
        Err(CommandError::Failed(summary))
    } else {
        Ok(summary)
    }
}

/// Collates the numeric outcomes of every run under `root` into
/// `root/report.csv` (long format, one row per scalar).
pub fn report(root: &Path) -> CmdResult {
    let mut runs = Vec::new();
    for entry in fs::read_dir(root)? {
        let path = entry?.path();
        let manifest = path.join("manifest.json");
        if manifest.is_file() {
            let text = fs::read_to_string(&manifest)?;
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| CommandError::Failed(format!("{}: {e}", manifest.display())))?;
            runs.push((path, value));
        }
    }
    if runs.is_empty() {
        return Err(CommandError::Failed(format!(
            "no run manifests under {}",
            root.display()
        )));
    }
    runs.sort_by(|a, b| a.0.cmp(&b.0));
    let mut versions: Vec<&str> = runs
        .iter()
        .map(|(_, v)| v["artifact_version"].as_str().unwrap_or("unknown"))
        .collect();
    versions.sort_unstable();
    versions.dedup();
    if versions.len() > 1 {
        return Err(CommandError::Failed(format!(
            "refusing to collate mixed artifact versions {versions:?}"
        )));
    }
    if versions[0] != ARTIFACT_VERSION {
        return Err(CommandError::Failed(format!(
            "runs were produced by version {}, this is {ARTIFACT_VERSION}",
            versions[0]
        )));
    }
    let mut table = Csv::new(&["run", "operation", "artifact_version", "key", "value"]);
    for (path, manifest) in &runs {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let op = manifest["operation"].as_str().unwrap_or("").to_string();
        let mut scalars = Vec::new();
        flatten("", &manifest["outcome"], &mut scalars);
        for (key, value) in scalars {
            table.push(vec![
                name.clone(),
                op.clone(),
                versions[0].into(),
                key,
                value,
            ]);
        }
    }
    let out = root.join("report.csv");
    table.write(&out)?;
    Ok(format!(
        "report: {} runs, {} rows\n{}",
        runs.len(),
        table.len(),
        out.display()
    ))
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&join(k), v, out);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&join(&i.to_string()), v, out);
            }
        }
        Value::Number(n) => {
            if let Some(x) = n.as_f64() {
                let text = if n.is_f64() { fmt17(x) } else { n.to_string() };
                out.push((prefix.to_string(), text));
            }
        }
        Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
        Value::String(s) => out.push((prefix.to_string(), s.replace(',', ";"))),
        Value::Null => {}
    }
}
