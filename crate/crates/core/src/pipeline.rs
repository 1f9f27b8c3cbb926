//! The command pipeline: each command builds what it needs from a
//! [`RunConfig`], writes its artifacts to the output directory and reports
//! whether its checks passed.

use std::fs;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{RunConfig, Theta};
use crate::dynamics::{
    build_metastable_structure, check_lyapunov_drift, find_fixed_points, DeterministicMapModel,
    DriftReport, FixedPointSet, MetastableStructure,
};
use crate::error::{Error, Result};
use crate::kernel::{killed_kernel, trace_kernel, Grid, GridPartition, KernelCache, KernelMatrix};
use crate::montecarlo::{
    empirical_diluted_trace, estimate_committor, estimate_ex, ex_start_points, simulate_chain,
    write_estimates_csv,
};
use crate::quasipotential::{
    build_action_graph, compute_h_matrix, h_hat, h_theta, QuasipotentialTable,
};
use crate::reduction::{
    default_theta, reduce, reduced_chain_marginals, theorem_residual, ReducedChainModel,
};
use crate::spectral::{
    check_uniform_positivity, default_positivity_cap, eigendecompose, killing_probabilities,
    solve_killed, verify_spectral_gap, write_qsd_csv, GapReport, PositivityReport,
};
use crate::stats::linear_fit;

const FIXED_POINT_SEEDS: usize = 16;
const VALIDATION_NODES: usize = 101;
const VALIDATION_SAMPLES: usize = 1000;
const DRIFT_SAMPLES: usize = 2000;
const KILLING_LAW_STEPS: usize = 10;
const KILLING_LAW_TOLERANCE: f64 = 1e-8;

/// Configuration plus the resolved cache and output locations.
#[derive(Clone, Debug)]
pub struct Context {
    pub config: RunConfig,
    pub cache: KernelCache,
    pub out: PathBuf,
}

impl Context {
    pub fn new(config: RunConfig) -> Self {
        let cache = KernelCache::new(config.cache_dir.clone());
        let out = config.output_dir.clone();
        Self { config, cache, out }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)?;
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    fn create(&self, name: &str) -> Result<(PathBuf, fs::File)> {
        fs::create_dir_all(&self.out)?;
        let path = self.path(name);
        let file = fs::File::create(&path)?;
        Ok((path, file))
    }
}

/// What a command produced.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outcome {
    pub command: String,
    pub passed: bool,
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

/// Model, fixed points, balls and grid partition at one σ.
#[derive(Clone, Debug)]
pub struct Setup {
    pub sigma: f64,
    pub model: DeterministicMapModel,
    pub fixed_points: FixedPointSet,
    pub structure: MetastableStructure,
    pub grid: Grid,
    pub partition: GridPartition,
}

pub fn setup(cfg: &RunConfig, sigma: f64) -> Result<Setup> {
    setup_with_nodes(cfg, sigma, cfg.nodes_per_axis)
}

fn setup_with_nodes(cfg: &RunConfig, sigma: f64, nodes: usize) -> Result<Setup> {
    let model = cfg.model(sigma)?;
    model.validate(VALIDATION_NODES, VALIDATION_SAMPLES, cfg.seed)?;
    let fixed_points = find_fixed_points(&model, FIXED_POINT_SEEDS)?;
    let structure = build_metastable_structure(&model, &fixed_points, cfg.delta)?;
    let grid = Grid::uniform(model.bounds(), nodes)?;
    let partition = GridPartition::new(&grid, &structure)?;
    Ok(Setup {
        sigma,
        model,
        fixed_points,
        structure,
        grid,
        partition,
    })
}

fn kernel(ctx: &Context, s: &Setup) -> Result<(KernelMatrix, bool)> {
    ctx.cache.get_or_build(&s.model, &s.grid)
}

fn quasipotential_table(cfg: &RunConfig, s: &Setup) -> Result<QuasipotentialTable> {
    let graph = build_action_graph(&s.model, &s.grid, cfg.r_hop)?;
    compute_h_matrix(&s.model, &s.grid, &s.partition, &graph)
}

fn resolve_theta(cfg: &RunConfig, h0: f64, sigma: f64) -> f64 {
    match cfg.theta {
        Theta::Auto => default_theta(h0, sigma),
        Theta::Value(t) => t,
    }
}

fn sigma_tag(sigma: f64) -> String {
    format!("sigma{sigma}")
}

#[derive(Serialize)]
struct AnalysisReport<'a> {
    sigma: f64,
    config_hash: String,
    fixed_points: &'a FixedPointSet,
    structure: &'a MetastableStructure,
    grid_nodes: usize,
    metastable_nodes: usize,
    drift: Option<DriftReport>,
    drift_error: Option<String>,
}

/// Fixed points, stability, balls and the Lyapunov drift check.
pub fn cmd_analyze(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.config;
    let s = setup(cfg, cfg.primary_sigma())?;
    let (drift, drift_error) = match check_lyapunov_drift(&s.model, DRIFT_SAMPLES) {
        Ok(r) => (Some(r), None),
        Err(e @ Error::DriftViolated { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let passed = drift.is_some();
    let report = AnalysisReport {
        sigma: s.sigma,
        config_hash: cfg.hash(),
        fixed_points: &s.fixed_points,
        structure: &s.structure,
        grid_nodes: s.grid.len(),
        metastable_nodes: s.partition.metastable.len(),
        drift,
        drift_error,
    };
    let file = ctx.write_json("analysis.json", &report)?;
    Ok(Outcome {
        command: "analyze".into(),
        passed,
        files: vec![file],
        summary: json!({
            "fixed_points": s.fixed_points.records.len(),
            "stable": s.fixed_points.n_stable(),
            "balls": s.structure.n_balls(),
            "drift_ok": passed,
        }),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumRow {
    pub sigma: f64,
    pub gap: GapReport,
    /// Leading eigenvalues as [re, im].
    pub leading: Vec<[f64; 2]>,
}

/// Spectrum CSV per σ and the spectral-gap report.
pub fn cmd_spectrum(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.config;
    let mut rows = Vec::new();
    let mut files = Vec::new();
    for sigma in cfg.sigmas() {
        let s = setup(cfg, sigma)?;
        let (k, cache_hit) = kernel(ctx, &s)?;
        log::info!(
            "sigma = {sigma}: kernel cache {}",
            if cache_hit { "hit" } else { "miss" }
        );
        let n = s.structure.n_balls();
        let decomp = eigendecompose(&k, (n + 1).min(k.dim()))?;
        let (path, file) = ctx.create(&format!("spectrum_{}.csv", sigma_tag(sigma)))?;
        decomp.write_csv(file)?;
        files.push(path);
        rows.push(SpectrumRow {
            sigma,
            gap: verify_spectral_gap(&decomp, n, cfg.checks.gap_threshold),
            leading: decomp
                .eigenvalues()
                .iter()
                .take(n + 2)
                .map(|l| [l.re, l.im])
                .collect(),
        });
    }
    let passed = rows.iter().all(|r| r.gap.passed);
    files.push(ctx.write_json("spectrum.json", &rows)?);
    Ok(Outcome {
        command: "spectrum".into(),
        passed,
        files,
        summary: json!({
            "sigmas": rows.iter().map(|r| r.sigma).collect::<Vec<_>>(),
            "count_above_threshold": rows.iter().map(|r| r.gap.count_above_threshold).collect::<Vec<_>>(),
            "passed": passed,
        }),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct QsdRow {
    pub ball: usize,
    pub eigenvalue: f64,
    pub gap_ratio: f64,
    pub mean_killing_time: f64,
    /// max_n |P[τ = n] / (λⁿ⁻¹(1 − λ)) − 1| for n ≤ 10.
    pub killing_law_error: f64,
    pub positivity: PositivityReport,
}

/// Per-ball QSDs, the geometric killing law and uniform positivity.
pub fn cmd_qsd(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.config;
    let s = setup(cfg, cfg.primary_sigma())?;
    if s.structure.n_balls() < 2 {
        let file = ctx.write_json(
            "qsd.json",
            &json!({"note": "single well: nothing is killed", "balls": []}),
        )?;
        return Ok(Outcome {
            command: "qsd".into(),
            passed: true,
            files: vec![file],
            summary: json!({"note": "single well"}),
        });
    }
    let (k, _) = kernel(ctx, &s)?;
    let trace = trace_kernel(&k, &s.partition.metastable)?;
    let mut rows = Vec::new();
    let mut files = Vec::new();
    for (i, ball) in s.partition.balls.iter().enumerate() {
        let killed = killed_kernel(&trace, ball)?;
        let sol = solve_killed(&killed, i)?;
        let law = killing_probabilities(&killed, &sol.qsd, KILLING_LAW_STEPS);
        let lambda = sol.eigenvalue;
        let killing_law_error = law
            .iter()
            .enumerate()
            .map(|(n, p)| (p / (lambda.powi(n as i32) * (1.0 - lambda)) - 1.0).abs())
            .fold(0.0, f64::max);
        let positivity = check_uniform_positivity(
            &killed,
            cfg.checks.l_target,
            default_positivity_cap(s.sigma),
        )?;
        let (path, file) = ctx.create(&format!("qsd_ball{i}.csv"))?;
        write_qsd_csv(file, &s.grid, &sol)?;
        files.push(path);
        rows.push(QsdRow {
            ball: i,
            eigenvalue: lambda,
            gap_ratio: sol.gap_ratio,
            mean_killing_time: sol.mean_killing_time,
            killing_law_error,
            positivity,
        });
    }
    let passed = rows
        .iter()
        .all(|r| r.killing_law_error <= KILLING_LAW_TOLERANCE && r.positivity.achieved);
    files.push(ctx.write_json("qsd.json", &rows)?);
    Ok(Outcome {
        command: "qsd".into(),
        passed,
        files,
        summary: json!({
            "eigenvalues": rows.iter().map(|r| r.eigenvalue).collect::<Vec<_>>(),
            "n0": rows.iter().map(|r| r.positivity.n0).collect::<Vec<_>>(),
            "passed": passed,
        }),
    })
}

/// V surfaces and the H table.
pub fn cmd_quasipotential(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.config;
    let s = setup(cfg, cfg.primary_sigma())?;
    let table = quasipotential_table(cfg, &s)?;
    let (path, file) = ctx.create("quasipotential.csv")?;
    table.write_v_csv(file, &s.grid)?;
    let mut report = serde_json::to_value(&table).map_err(|e| Error::Io(e.to_string()))?;
    if table.n() == 1 {
        report["note"] = json!("single well: H has no off-diagonal entries");
    }
    let json_path = ctx.write_json("h.json", &report)?;
    Ok(Outcome {
        command: "quasipotential".into(),
        passed: true,
        files: vec![path, json_path],
        summary: json!({"h": table.h, "h0": table.h0, "h0_hat": table.h0_hat}),
    })
}

/// The reduced chain at the primary σ.
pub fn cmd_reduce(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.config;
    let s = setup(cfg, cfg.primary_sigma())?;
    let (model, _) = reduced_model(ctx, &s)?.0;
    let file = ctx.write_json("reduced.json", &model)?;
    Ok(Outcome {
        command: "reduce".into(),
        passed: true,
        files: vec![file],
        summary: json!({"m": model.m, "theta": model.theta, "p": model.p}),
    })
}

type Reduced = (
    (ReducedChainModel, crate::reduction::Projectors),
    KernelMatrix,
    QuasipotentialTable,
);

fn reduced_model(ctx: &Context, s: &Setup) -> Result<Reduced> {
    let cfg = &ctx.config;
    let table = quasipotential_table(cfg, s)?;
    let (k, _) = kernel(ctx, s)?;
    let trace = trace_kernel(&k, &s.partition.metastable)?;
    let theta = resolve_theta(cfg, table.h0, s.sigma);
    let r = reduce(&trace, &s.partition, s.sigma, theta, table.h0)?;
    Ok((r, trace, table))
}

/// One trajectory with its event log and, when runs are budgeted,
/// committor estimates between every pair of balls.
pub fn cmd_simulate(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.config;
    let s = setup(cfg, cfg.primary_sigma())?;
    let x0 = s.structure.balls[0].center_point();
    let trace = simulate_chain(&s.model, &s.structure, &x0, cfg.monte_carlo.steps, cfg.seed)?;
    let (events_path, file) = ctx.create("events.ndjson")?;
    trace.write_events_ndjson(std::io::BufWriter::new(file))?;
    let mut estimates = Vec::new();
    if cfg.monte_carlo.runs > 0 {
        for i in 0..s.structure.n_balls() {
            for j in 0..s.structure.n_balls() {
                if i != j {
                    estimates.push(estimate_committor(
                        &s.model,
                        &s.structure,
                        i,
                        j,
                        cfg.monte_carlo.runs,
                        cfg.seed,
                        cfg.workers,
                    )?);
                }
            }
        }
    }
    let mut files = vec![events_path];
    if !estimates.is_empty() {
        let (csv, file) = ctx.create("montecarlo.csv")?;
        write_estimates_csv(file, &estimates)?;
        files.push(csv);
    }
    let summary = json!({
        "seed": trace.seed,
        "sigma": trace.sigma,
        "workers": cfg.workers,
        "n_steps": trace.n_steps,
        "events": trace.events.len(),
        "entries": trace.entries,
        "occupation": trace.occupation,
        "outside_box": trace.outside_box,
        "committors": estimates,
    });
    files.push(ctx.write_json("simulate.json", &summary)?);
    Ok(Outcome {
        command: "simulate".into(),
        passed: true,
        files,
        summary,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Warn,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub status: Status,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub detail: String,
}

impl CheckRow {
    fn at_most(
        name: impl Into<String>,
        value: f64,
        tolerance: f64,
        detail: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            status: if value <= tolerance {
                Status::Pass
            } else {
                Status::Fail
            },
            value: Some(value),
            tolerance: Some(tolerance),
            detail: detail.into(),
        }
    }

    fn flag(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            value: None,
            tolerance: None,
            detail: detail.into(),
        }
    }

    fn skipped(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: Status::Skipped,
            value: None,
            tolerance: None,
            detail: detail.into(),
        }
    }
}

/// Exact-matrix checks at the primary σ, then Monte Carlo comparisons when
/// runs are budgeted.
pub fn cmd_validate(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.config;
    let sigma = cfg.primary_sigma();
    let s = setup(cfg, sigma)?;
    let n = s.structure.n_balls();
    let mut rows = Vec::new();

    let ((model, _), trace, table) = reduced_model(ctx, &s)?;
    let (k, _) = kernel(ctx, &s)?;
    let decomp = eigendecompose(&k, (n + 1).min(k.dim()))?;
    let gap = verify_spectral_gap(&decomp, n, cfg.checks.gap_threshold);
    rows.push(CheckRow::flag(
        "spectral_gap",
        gap.passed,
        format!(
            "{} eigenvalues above {}",
            gap.count_above_threshold, gap.rho_threshold
        ),
    ));

    if n >= 2 {
        for (i, ball) in s.partition.balls.iter().enumerate() {
            let killed = killed_kernel(&trace, ball)?;
            let sol = solve_killed(&killed, i)?;
            let law = killing_probabilities(&killed, &sol.qsd, KILLING_LAW_STEPS);
            let l = sol.eigenvalue;
            let err = law
                .iter()
                .enumerate()
                .map(|(t, p)| (p / (l.powi(t as i32) * (1.0 - l)) - 1.0).abs())
                .fold(0.0, f64::max);
            rows.push(CheckRow::at_most(
                format!("qsd_killing_law_ball{i}"),
                err,
                KILLING_LAW_TOLERANCE,
                "relative error of P[tau = n] against the geometric law, n <= 10",
            ));
            let pos = check_uniform_positivity(
                &killed,
                cfg.checks.l_target,
                default_positivity_cap(sigma),
            )?;
            rows.push(CheckRow {
                name: format!("uniform_positivity_ball{i}"),
                status: if pos.achieved {
                    Status::Pass
                } else {
                    Status::Fail
                },
                value: Some(pos.achieved_l),
                tolerance: Some(pos.l_target),
                detail: format!("n0 = {} (cap {})", pos.n0, pos.n_cap),
            });
        }
    }

    let b = &model.basis;
    rows.push(CheckRow::at_most(
        "basis_mu_psi",
        b.mu_psi,
        1e-8,
        "max |<mu_i, psi_j> - delta_ij|",
    ));
    rows.push(CheckRow::at_most(
        "basis_mu_indicator",
        b.mu_indicator,
        1e-8,
        "max |<mu_i, 1_Bj> - delta_ij|",
    ));
    rows.push(CheckRow::at_most(
        "basis_psi_sum",
        b.psi_sum,
        1e-8,
        "sup |sum_j psi_j - 1|",
    ));
    rows.push(CheckRow::at_most(
        "basis_completeness",
        b.completeness,
        1e-6,
        "kernel norm of sum_i psi_i (x) mu_i - Pi0",
    ));
    let eps_max = model
        .eps
        .iter()
        .flatten()
        .fold(0.0f64, |m, e| m.max(e.abs()));
    rows.push(CheckRow::at_most(
        "eps_small",
        eps_max,
        1e-3,
        "max |eps_ij|",
    ));
    let ks = &model.k_star;
    rows.push(CheckRow::at_most(
        "k_star_identities",
        ks.pi_star_fixes_k_star.max(ks.hat_powers),
        1e-8,
        "Pi* K* = K* and (K^*)^n = (K*)^n Pi*",
    ));
    rows.push(CheckRow::at_most(
        "k_star_matrix_elements",
        ks.matrix_elements,
        1e-10,
        "<QSD_i, K^* 1_Bj> = <QSD_i, K0 1_Bj>",
    ));

    let eta = cfg.checks.eta_fraction * table.h0;
    let mut uniform_bound = 0.0;
    if n >= 2 {
        let ht = h_theta(&table, model.theta)?;
        let h_hat_min = h_hat(&ht).into_iter().fold(f64::INFINITY, f64::min);
        let report = theorem_residual(
            &trace,
            &s.partition,
            &model.p,
            model.m,
            cfg.checks.n_max,
            sigma,
            model.rho,
            h_hat_min,
            eta,
        )?;
        uniform_bound = report.max_residual;
        rows.push(CheckRow::at_most(
            "reduction_exact",
            report.max_residual,
            1e-2,
            format!("max over n <= {} and j; m = {}", report.n_max, report.m),
        ));
        rows.push(CheckRow::at_most(
            "reduction_fitted_constant",
            report.fitted_c,
            10.0,
            "fitted C of the error bound",
        ));
    }

    let coarse_nodes = cfg.nodes_per_axis;
    let fine_nodes = 2 * coarse_nodes - 1;
    if n >= 2 && s.model.dim() == 1 {
        let fine = setup_with_nodes(cfg, sigma, fine_nodes)?;
        let fine_table = quasipotential_table(cfg, &fine)?;
        let r = crate::quasipotential::refinement_report(
            &table,
            &fine_table,
            cfg.checks.refinement_tolerance,
        );
        rows.push(CheckRow {
            name: "refinement_stability".into(),
            status: if r.passed { Status::Pass } else { Status::Warn },
            value: Some(r.max_relative_difference),
            tolerance: Some(r.tolerance),
            detail: format!("H at {coarse_nodes} vs {fine_nodes} nodes per axis"),
        });
    } else {
        rows.push(CheckRow::skipped(
            "refinement_stability",
            "runs for two or more wells in one dimension",
        ));
    }

    let mc = &cfg.monte_carlo;
    if mc.runs == 0 || n < 2 {
        for name in ["committor_ldp", "diluted_trace", "ex_scaling"] {
            rows.push(CheckRow::skipped(
                name,
                "no Monte Carlo budget or a single well",
            ));
        }
    } else {
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let e = estimate_committor(
                    &s.model,
                    &s.structure,
                    i,
                    j,
                    mc.runs,
                    cfg.seed,
                    cfg.workers,
                )?;
                let dev = e
                    .log_scale
                    .map_or(f64::INFINITY, |l| (l + table.h[i][j]).abs());
                rows.push(CheckRow::at_most(
                    format!("committor_ldp_{i}_{j}"),
                    dev,
                    eta,
                    format!("p = {:.4e} +/- {:.1e}", e.estimate, e.stderr),
                ));
            }
        }
        if mc.trace_runs > 0 {
            let mut worst: f64 = 0.0;
            for i in 0..n {
                let d = empirical_diluted_trace(
                    &s.model,
                    &s.structure,
                    i,
                    model.m,
                    mc.blocks,
                    mc.trace_runs,
                    cfg.seed,
                    cfg.workers,
                )?;
                let y = reduced_chain_marginals(&model.p, i, mc.blocks);
                for (t, row) in d.frequencies.iter().enumerate() {
                    for (j, f) in row.iter().enumerate() {
                        let excess = (f - y[t][j]).abs() - 3.0 * d.stderr[t][j] - uniform_bound;
                        worst = worst.max(excess);
                    }
                }
            }
            rows.push(CheckRow::at_most(
                "diluted_trace",
                worst,
                0.0,
                "max of |f_j(n) - P^i[Y_n = j]| - 3 SE - exact residual",
            ));
        } else {
            rows.push(CheckRow::skipped(
                "diluted_trace",
                "no diluted-trace budget",
            ));
        }
        rows.push(ex_scaling_row(cfg)?);
    }

    let passed = rows.iter().all(|r| r.status != Status::Fail);
    let report = json!({
        "sigma": sigma,
        "config_hash": cfg.hash(),
        "passed": passed,
        "rows": rows,
    });
    let file = ctx.write_json("validation.json", &report)?;
    Ok(Outcome {
        command: "validate".into(),
        passed,
        files: vec![file],
        summary: report,
    })
}

/// Fit of the worst-start mean return time against log(1/σ) over the sweep.
fn ex_scaling_row(cfg: &RunConfig) -> Result<CheckRow> {
    let sigmas = cfg.sigmas();
    let mc = &cfg.monte_carlo;
    if sigmas.len() < 3 || mc.ex_runs == 0 {
        return Ok(CheckRow::skipped(
            "ex_scaling",
            "needs a sweep of at least 3 sigmas",
        ));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for sigma in &sigmas {
        let model = cfg.model(*sigma)?;
        let fp = find_fixed_points(&model, FIXED_POINT_SEEDS)?;
        let structure = build_metastable_structure(&model, &fp, cfg.delta)?;
        let starts = ex_start_points(&model, &fp, mc.ex_lattice);
        let e = estimate_ex(
            &model,
            &structure,
            &starts,
            mc.ex_runs,
            cfg.seed,
            cfg.workers,
        )?;
        xs.push((1.0 / sigma).ln());
        ys.push(e.estimate.estimate);
    }
    let fit = linear_fit(&xs, &ys)?;
    Ok(CheckRow {
        name: "ex_scaling".into(),
        status: if fit.slope > 0.0 && fit.r_squared >= 0.9 {
            Status::Pass
        } else {
            Status::Fail
        },
        value: Some(fit.r_squared),
        tolerance: Some(0.9),
        detail: format!("slope {:.4}, intercept {:.4}", fit.slope, fit.intercept),
    })
}

/// Runs a command by name.
pub fn run_command(name: &str, ctx: &Context) -> Result<Outcome> {
    match name {
        "analyze" => cmd_analyze(ctx),
        "spectrum" => cmd_spectrum(ctx),
        "qsd" => cmd_qsd(ctx),
        "quasipotential" => cmd_quasipotential(ctx),
        "reduce" => cmd_reduce(ctx),
        "simulate" => cmd_simulate(ctx),
        "validate" => cmd_validate(ctx),
        other => Err(Error::Config(format!("unknown command {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn context(dir: &std::path::Path, extra: &str) -> Context {
        let text = format!(
            r#"{{
                "schema_version": 1,
                "map": {{"kind": "tanh", "beta": 2.0}},
                "dim": 1,
                "covariance": [[1.0]],
                "sigma": 0.35,
                "bounds": [[-2.0, 2.0]],
                "nodes_per_axis": 201,
                "delta": 0.2,
                "r_hop": 1.0,
                "monte_carlo": {{"runs": 0, "steps": 2000}},
                "output_dir": "{out}",
                "cache_dir": "{cache}"{extra}
            }}"#,
            out = dir.join("out").display(),
            cache = dir.join("cache").display(),
        );
        Context::new(RunConfig::from_json(&text).unwrap())
    }

    #[test]
    fn analyze_reports_three_fixed_points() {
        let dir = tempfile::tempdir().unwrap();
        let o = cmd_analyze(&context(dir.path(), "")).unwrap();
        assert!(o.passed);
        assert_eq!(o.summary["fixed_points"], 3);
        assert_eq!(o.summary["balls"], 2);
    }

    #[test]
    fn validate_without_budget_skips_monte_carlo() {
        let dir = tempfile::tempdir().unwrap();
        let o = cmd_validate(&context(dir.path(), "")).unwrap();
        let rows = o.summary["rows"].as_array().unwrap();
        let status = |name: &str| {
            rows.iter()
                .find(|r| r["name"] == name)
                .map(|r| r["status"].as_str().unwrap().to_string())
                .unwrap()
        };
        assert_eq!(status("spectral_gap"), "pass");
        assert_eq!(status("reduction_exact"), "pass");
        assert_eq!(status("basis_mu_psi"), "pass");
        assert_eq!(status("committor_ldp"), "skipped");
        assert_eq!(status("diluted_trace"), "skipped");
    }

    #[test]
    fn commands_are_byte_identical_on_rerun() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = context(dir.path(), "");
        for cmd in ["spectrum", "reduce", "simulate"] {
            let first = run_command(cmd, &ctx).unwrap();
            let bytes: Vec<Vec<u8>> = first.files.iter().map(|f| fs::read(f).unwrap()).collect();
            let second = run_command(cmd, &ctx).unwrap();
            let again: Vec<Vec<u8>> = second.files.iter().map(|f| fs::read(f).unwrap()).collect();
            assert_eq!(bytes, again, "{cmd}");
        }
    }

    #[test]
    fn theta_above_h0_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = context(dir.path(), r#", "theta": 5.0"#);
        assert!(matches!(cmd_reduce(&ctx), Err(Error::ThetaTooLarge { .. })));
    }

    #[test]
    fn unknown_command_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            run_command("plot", &context(dir.path(), "")),
            Err(Error::Config(_))
        ));
    }
}
