//! Command-line front end: configuration, subcommand dispatch and report files.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use rbm_core::bounds::{
    bc_bound, bc_cascade, bound_report, constant_cascade, contraction_coefficient, coupling_bound, default_a_used,
    default_n_cap, optimal_v, rank_bound, t_min, theta_functionals, wasserstein_bound, BcConstants,
};
use rbm_core::catalog::{bc_class_check, rank_stats, stability_b, stationary_gap_law, DEFAULT_BC_CHECK_N};
use rbm_core::experiments::{
    coupled_suite, decay_fit, estimate_w1, lyapunov_check, marginal_stationary_test, rbmdrift_mc, small_set_mc,
    terminal_states, McEstimate,
};
use rbm_core::io::{load_model, trajectory_csv, write_text, write_trajectory_bin, write_trajectory_meta, LoadedModel};
use rbm_core::model::{admissible, derive, validate_params};
use rbm_core::reflect::{simulate_normal_rbm, simulate_rbm, SimConfig};
use rbm_core::{RbmError, StationaryLaw};

pub const REPORT_SCHEMA: &str = "rbm.report.v1";
pub const CSV_HEADER: &str = "t,mean,std_err,bound";

#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "rbm", version, about = "Reflected Brownian motion: validation, bounds and Monte Carlo checks")]
pub struct RunConfig {
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimArgs {
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 1000)]
    pub paths: usize,
    #[arg(long, global = true, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, global = true, default_value_t = 10.0)]
    pub horizon: f64,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "RBM_THREADS")]
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Omit the timestamp so identical runs give identical bytes.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[arg(long, global = true, default_value = "rbm-out")]
    #[serde(skip)]
    pub out: PathBuf,
}

impl SimArgs {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig::new(self.dt, self.horizon, self.paths, self.seed)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArg {
    /// `atlas:<n>`, inline JSON, or a JSON file with a model or rank-based spec.
    #[arg(long)]
    pub model: String,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "snake_case", tag = "name")]
pub enum Command {
    /// Check the standing assumptions and print derived quantities.
    Validate {
        #[command(flatten)]
        #[serde(flatten)]
        model: ModelArg,
    },
    /// Rate functionals, constants and bound values.
    Bounds {
        #[command(flatten)]
        #[serde(flatten)]
        model: ModelArg,
        /// Start state; a single value is repeated in every coordinate.
        #[arg(long, default_value = "0")]
        x: String,
        /// Comma-separated evaluation times.
        #[arg(long, default_value = "1e6")]
        t: String,
        /// Lyapunov level; defaults to D2 b(Theta).
        #[arg(long)]
        a_used: Option<f64>,
        /// `kappa,beta,delta,sigma` for the dimension-free class bound.
        #[arg(long)]
        bc: Option<String>,
    },
    /// One stored path plus terminal-state statistics over all paths.
    Simulate {
        #[command(flatten)]
        #[serde(flatten)]
        model: ModelArg,
        #[arg(long, default_value = "0")]
        x0: String,
        /// Simulate the normally reflected process with drift `-v` instead.
        #[arg(long)]
        v: Option<String>,
        #[arg(long, default_value_t = 0)]
        path_index: u64,
    },
    /// Synchronous coupling with the origin: contraction and domination checks.
    Couple {
        #[command(flatten)]
        #[serde(flatten)]
        model: ModelArg,
        #[arg(long, default_value = "1")]
        x0: String,
        /// Bounding drift; defaults to the optimal one.
        #[arg(long)]
        v: Option<String>,
    },
    /// Terminal-state marginals against the product-form law, and W1 estimates.
    Stationary {
        #[command(flatten)]
        #[serde(flatten)]
        model: ModelArg,
        #[arg(long, default_value = "0")]
        x0: String,
        /// Comma-separated W1 evaluation times; defaults to a grid on the horizon.
        #[arg(long)]
        t: Option<String>,
        /// Allowed relative error of marginal means.
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
    /// Full inequality suite.
    Verify {
        #[command(flatten)]
        #[serde(flatten)]
        model: ModelArg,
        #[arg(long, default_value = "1")]
        x0: String,
        #[arg(long, default_value_t = 68.0)]
        a_used: f64,
        #[arg(long, default_value_t = 1000)]
        lyapunov_points: usize,
        #[arg(long, default_value_t = 0.02)]
        small_set_dt: f64,
        #[arg(long, default_value_t = 400)]
        small_set_paths: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            status: if pass { Status::Pass } else { Status::Fail },
            detail,
        }
    }

    fn skipped(name: &str, detail: String) -> Self {
        Self {
            name: name.into(),
            status: Status::Skipped,
            detail,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CsvRow {
    pub t: f64,
    pub mean: f64,
    pub std_err: f64,
    pub bound: Option<f64>,
}

/// Everything a subcommand produces, before it touches the disk.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub results: Value,
    pub checks: Vec<Check>,
    pub csv: Option<Vec<CsvRow>>,
    pub files: Vec<(String, FileBody)>,
}

#[derive(Debug, Clone)]
pub enum FileBody {
    Text(String),
    Trajectory(Box<rbm_core::Trajectory>),
    TrajectoryMeta(Box<rbm_core::Trajectory>),
}

#[derive(Debug, Serialize)]
pub struct Report<'a> {
    pub schema: &'static str,
    pub tool_version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp_unix: Option<u64>,
    pub config: &'a RunConfig,
    pub pass: bool,
    pub checks: &'a [Check],
    pub results: &'a Value,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) => 1,
            _ => 2,
        }
    }
}

impl From<RbmError> for CliError {
    fn from(e: RbmError) -> Self {
        match e {
            RbmError::Input(_)
            | RbmError::Dimension { .. }
            | RbmError::Config(_)
            | RbmError::Json(_)
            | RbmError::Io { .. }
            | RbmError::Precondition(_)
            | RbmError::Capability(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Parses `"a,b,c"`; a single value is repeated `d` times when `d` is given.
pub fn parse_vector(s: &str, d: Option<usize>) -> Result<Vec<f64>, CliError> {
    let vals = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Config(format!("'{t}' is not a finite number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    match d {
        Some(d) if vals.len() == 1 && d > 1 => Ok(vec![vals[0]; d]),
        Some(d) if vals.len() != d => Err(CliError::Config(format!(
            "expected {d} values or one, got {}",
            vals.len()
        ))),
        _ => Ok(vals),
    }
}

fn model_of(cmd: &Command) -> &str {
    match cmd {
        Command::Validate { model }
        | Command::Bounds { model, .. }
        | Command::Simulate { model, .. }
        | Command::Couple { model, .. }
        | Command::Stationary { model, .. }
        | Command::Verify { model, .. } => &model.model,
    }
}

pub fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Validate { .. } => "validate",
        Command::Bounds { .. } => "bounds",
        Command::Simulate { .. } => "simulate",
        Command::Couple { .. } => "couple",
        Command::Stationary { .. } => "stationary",
        Command::Verify { .. } => "verify",
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn product_law(m: &LoadedModel) -> Option<StationaryLaw> {
    m.rank_spec.as_ref().and_then(|s| stationary_gap_law(s).ok())
}

fn validate_cmd(m: &LoadedModel) -> Result<Outcome, CliError> {
    let rep = validate_params(&m.params);
    let mut results = json!({ "validation": rep, "d": m.params.d });
    if rep.admissible() {
        let dm = derive(&m.params)?;
        results["b"] = to_value(&dm.b);
        results["sigma"] = to_value(&dm.sigma);
    }
    if let Some(spec) = &m.rank_spec {
        let st = stability_b(spec)?;
        results["rank_based"] = json!({
            "spec": spec,
            "b_atlas": st.b_atlas,
            "b_sde": st.b_sde,
            "stable": st.stable,
            "convention": "b_sde = -R^-1 mu = 2 b_atlas; stationary rates use b_sde",
            "stationary_law": stationary_gap_law(spec).ok(),
        });
    }
    let checks = vec![
        Check::new("A1_substochastic", rep.a1_substochastic, String::new()),
        Check::new("A1_transient", rep.a1_transient, format!("spectral radius {}", rep.spectral_radius)),
        Check::new("A2_stable", rep.a2_stable, String::new()),
        Check::new("A3_positive_definite", rep.a3_pd, String::new()),
    ];
    Ok(Outcome {
        results,
        checks,
        ..Default::default()
    })
}

fn parse_bc(s: &str) -> Result<BcConstants, CliError> {
    let v = parse_vector(s, None)?;
    if v.len() != 4 {
        return Err(CliError::Config("--bc needs kappa,beta,delta,sigma".into()));
    }
    Ok(BcConstants {
        kappa: v[0],
        beta: v[1],
        delta: v[2],
        sigma_bc: v[3],
    })
}

fn bounds_cmd(m: &LoadedModel, x: &str, t: &str, a_used: Option<f64>, bc: Option<&str>) -> Result<Outcome, CliError> {
    let dm = admissible(&m.params)?;
    let x = parse_vector(x, Some(dm.d))?;
    let ts = parse_vector(t, None)?;
    let report = bound_report(&dm, &x, a_used)?;
    let tf = report.functionals;
    let cas = report.cascade;
    let mut evals = Vec::new();
    let mut rows = Vec::new();
    for &t in &ts {
        let w = wasserstein_bound(&dm, &tf, &cas, &x, t)?;
        rows.push(CsvRow {
            t,
            mean: f64::NAN,
            std_err: f64::NAN,
            bound: Some(w.value),
        });
        evals.push(json!({ "t": t, "wasserstein": w }));
    }
    let mut results = json!({ "bound_report": report, "evaluations": evals });
    if let Some(spec) = &m.rank_spec {
        if let Ok(stats) = rank_stats(spec) {
            let fixed = constant_cascade(rbm_core::bounds::A0)?;
            let rb: Vec<Value> = ts
                .iter()
                .map(|t| rank_bound(&dm, &stats, &fixed, &x, *t).map(|r| json!({ "t": t, "rank_bound": r })))
                .collect::<Result<_, _>>()?;
            results["rank_based"] = json!({ "stats": stats, "cascade": fixed, "evaluations": rb });
        }
    }
    if let Some(bc) = bc {
        let bc = parse_bc(bc)?;
        let check = bc_class_check(&m.params, &bc, DEFAULT_BC_CHECK_N)?;
        let cas = bc_cascade(&bc)?;
        let ev: Vec<Value> = ts
            .iter()
            .map(|t| bc_bound(&dm, &bc, &cas, &x, *t).map(|r| json!({ "t": t, "bc_bound": r })))
            .collect::<Result<_, _>>()?;
        results["bc_class"] = json!({ "constants": bc, "check": check, "cascade": cas, "evaluations": ev });
    }
    Ok(Outcome {
        results,
        csv: Some(rows),
        ..Default::default()
    })
}

fn simulate_cmd(m: &LoadedModel, cfg: &SimConfig, x0: &str, v: Option<&str>, path_index: u64) -> Result<Outcome, CliError> {
    let p = &m.params;
    let x0 = parse_vector(x0, Some(p.d))?;
    let traj = match v {
        Some(v) => simulate_normal_rbm(&parse_vector(v, Some(p.d))?, p, &x0, cfg, path_index)?,
        None => simulate_rbm(p, &x0, cfg, path_index)?,
    };
    let terminal = if v.is_none() {
        let finals = terminal_states(p, &x0, cfg)?;
        Some(finals.iter().map(|s| McEstimate::from_samples(s)).collect::<Vec<_>>())
    } else {
        None
    };
    let results = json!({
        "path_index": path_index,
        "n_steps": traj.n_steps(),
        "final_state": traj.state(traj.n_steps()),
        "warnings": traj.warnings,
        "terminal_mean": terminal,
    });
    Ok(Outcome {
        results,
        files: vec![
            ("trajectory.bin".into(), FileBody::Trajectory(Box::new(traj.clone()))),
            ("trajectory.json".into(), FileBody::TrajectoryMeta(Box::new(traj.clone()))),
            ("trajectory.csv".into(), FileBody::Text(trajectory_csv(&traj))),
        ],
        ..Default::default()
    })
}

fn couple_cmd(m: &LoadedModel, cfg: &SimConfig, x0: &str, v: Option<&str>) -> Result<Outcome, CliError> {
    let p = &m.params;
    let dm = admissible(p)?;
    let x0 = parse_vector(x0, Some(p.d))?;
    let v = match v {
        Some(v) => Some(parse_vector(v, Some(p.d))?),
        None => None,
    };
    let s = coupled_suite(p, &x0, v.as_deref(), cfg)?;
    let tf = theta_functionals(&dm)?;
    let cas = constant_cascade(default_a_used(&tf).max(rbm_core::bounds::A0))?;
    let mut rows = Vec::new();
    for (t, e) in s.profile_t.iter().zip(&s.profile) {
        let b = coupling_bound(&dm, &s.v, s.n_r, &cas, &x0, *t)?;
        rows.push(CsvRow {
            t: *t,
            mean: e.mean,
            std_err: e.std_err,
            bound: b.valid.then_some(b.value),
        });
    }
    let checks = vec![
        Check::new(
            "contraction",
            s.contraction_pass == s.n_paths && s.contraction_power_pass == s.n_paths,
            format!("{}/{} paths", s.contraction_pass.min(s.contraction_power_pass), s.n_paths),
        ),
        Check::new("domination", s.domination_pass == s.n_paths, format!("{}/{} paths", s.domination_pass, s.n_paths)),
    ];
    Ok(Outcome {
        results: json!({ "coupled": s }),
        checks,
        csv: Some(rows),
        ..Default::default()
    })
}

fn default_grid(horizon: f64) -> Vec<f64> {
    (0..=10).map(|k| horizon * k as f64 / 10.0).collect()
}

fn w1_rows(
    dm: &rbm_core::DerivedModel,
    x0: &[f64],
    est: &rbm_core::experiments::W1Estimate,
) -> Result<(Vec<CsvRow>, Vec<Check>, Value), CliError> {
    let tf = theta_functionals(dm)?;
    let cas = constant_cascade(default_a_used(&tf))?;
    let mut rows = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    let mut valid_points = 0;
    let mut evals = Vec::new();
    for (t, e) in est.t_eval.iter().zip(&est.estimates) {
        let w = wasserstein_bound(dm, &tf, &cas, x0, *t)?;
        if w.valid {
            valid_points += 1;
            worst = worst.max(e.mean - w.value - 3.0 * e.std_err);
        }
        rows.push(CsvRow {
            t: *t,
            mean: e.mean,
            std_err: e.std_err,
            bound: Some(w.value),
        });
        evals.push(json!({ "t": t, "estimate": e, "bound": w }));
    }
    let check = if valid_points == 0 {
        Check::skipped("w1_below_bound", "no evaluation time at or beyond t_min".into())
    } else {
        Check::new(
            "w1_below_bound",
            worst <= 0.0,
            format!("{valid_points} valid times; worst mean - bound - 3 se = {worst:e}"),
        )
    };
    Ok((rows, vec![check], json!({ "t_min": t_min(dm, &tf, &cas), "evaluations": evals })))
}

fn stationary_cmd(m: &LoadedModel, cfg: &SimConfig, x0: &str, t: Option<&str>, tol: f64) -> Result<Outcome, CliError> {
    let p = &m.params;
    let dm = admissible(p)?;
    let x0 = parse_vector(x0, Some(p.d))?;
    let law = product_law(m);
    let mut checks = Vec::new();
    let mut results = json!({});
    if let Some(law) = &law {
        let finals = terminal_states(p, &x0, cfg)?;
        let tests = marginal_stationary_test(&finals, law)?;
        for (k, r) in tests.iter().enumerate() {
            checks.push(Check::new(
                &format!("marginal_mean_{k}"),
                r.mean_rel_err <= tol,
                format!("mean {} vs {} (rel err {:.4})", r.mean, r.target_mean, r.mean_rel_err),
            ));
        }
        results["law"] = to_value(law);
        results["marginals"] = to_value(&tests);
    } else {
        checks.push(Check::skipped("marginals", "no product-form stationary law for this model".into()));
    }
    let ts = match t {
        Some(t) => parse_vector(t, None)?,
        None => default_grid(cfg.horizon),
    };
    let est = estimate_w1(p, &x0, &ts, cfg, law.as_ref())?;
    let (rows, mut c, ev) = w1_rows(&dm, &x0, &est)?;
    checks.append(&mut c);
    results["w1"] = json!({ "estimate": est, "vs_bound": ev });
    Ok(Outcome {
        results,
        checks,
        csv: Some(rows),
        ..Default::default()
    })
}

#[allow(clippy::too_many_arguments)]
fn verify_cmd(
    m: &LoadedModel,
    cfg: &SimConfig,
    x0: &str,
    a_used: f64,
    lyapunov_points: usize,
    small_set_dt: f64,
    small_set_paths: usize,
) -> Result<Outcome, CliError> {
    let p = &m.params;
    let dm = admissible(p)?;
    let x0 = parse_vector(x0, Some(p.d))?;
    let tf = theta_functionals(&dm)?;
    let ov = optimal_v(&dm, &tf)?;
    let v = ov.v_tilde.clone();
    let mut checks = Vec::new();
    let mut results = json!({});

    let s = coupled_suite(p, &x0, Some(&v), cfg)?;
    checks.push(Check::new(
        "contraction",
        s.contraction_pass == s.n_paths && s.contraction_power_pass == s.n_paths,
        format!("{}/{} paths", s.contraction_pass.min(s.contraction_power_pass), s.n_paths),
    ));
    checks.push(Check::new("domination", s.domination_pass == s.n_paths, format!("{}/{} paths", s.domination_pass, s.n_paths)));
    results["coupled"] = to_value(&s);

    let ly = lyapunov_check(&dm, &v, a_used, lyapunov_points, cfg.seed)?;
    checks.push(Check::new(
        "lyapunov_drift",
        ly.drift_violations == 0,
        format!("{} violations in {} points, worst ratio {}", ly.drift_violations, ly.points, ly.worst_drift_ratio),
    ));
    checks.push(Check::new("lyapunov_gradient", ly.max_grad_rel_err < 1e-5, format!("max rel err {:e}", ly.max_grad_rel_err)));
    results["lyapunov"] = to_value(&ly);

    let level = a_used * ov.functionals.phi.ln();
    let far: Vec<f64> = (0..p.d).map(|i| 2.0 * level * dm.sigma[i].powi(2) / v[i]).collect();
    let cas = constant_cascade(a_used)?;
    let window = cas.c2z * ov.functionals.t;
    let ss_cfg = SimConfig::new(small_set_dt, cfg.horizon.max(window * (1.0 + 1e-9)), small_set_paths, cfg.seed);
    let ss = small_set_mc(p, &v, a_used, &far, &ss_cfg)?;
    let tm = ss.tau_moment;
    checks.push(Check::new(
        "small_set_entry_moment",
        ss.tau_censored == 0 && tm.mean <= ss.tau_bound + 3.0 * tm.std_err,
        format!("{} <= {} ({} censored)", tm.mean, ss.tau_bound, ss.tau_censored),
    ));
    let zh = ss.zerohit_prob;
    checks.push(Check::new(
        "zero_hit_probability",
        zh.mean >= 0.5 - 3.0 * zh.std_err,
        format!("{} >= 0.5 - 3 se", zh.mean),
    ));
    results["small_set"] = to_value(&ss);

    let dr = rbmdrift_mc(1.0, 1.0, 10.0, 10.0, 5.0, cfg)?;
    checks.push(Check::new(
        "reflected_sup",
        dr.empirical.mean <= dr.bound + 3.0 * dr.empirical.std_err,
        format!("{} <= {}", dr.empirical.mean, dr.bound),
    ));
    results["reflected_sup"] = to_value(&dr);

    let cas_default = constant_cascade(default_a_used(&tf))?;
    let tm_ = t_min(&dm, &tf, &cas_default);
    let mut ts = default_grid(cfg.horizon);
    ts.extend([tm_, 2.0 * tm_]);
    let law = product_law(m);
    let est = estimate_w1(p, &x0, &ts, cfg, law.as_ref())?;
    let (rows, mut c, ev) = w1_rows(&dm, &x0, &est)?;
    checks.append(&mut c);
    let guaranteed = (cas_default.d1 / tf.r1).min(1.0 / (16.0 * cas_default.d2 * tf.r2));
    let n_fit = est.t_eval.len() - 2;
    match decay_fit(&est.t_eval[1..n_fit], &est.estimates[1..n_fit]) {
        Ok(f) => {
            checks.push(Check::new(
                "decay_rate",
                f.rate >= guaranteed,
                format!("fitted {} >= guaranteed {guaranteed:e}", f.rate),
            ));
            results["decay_fit"] = to_value(&f);
        }
        Err(e) => checks.push(Check::skipped("decay_rate", e.to_string())),
    }
    results["w1"] = json!({ "estimate": est, "vs_bound": ev, "guaranteed_rate": guaranteed });

    let n_r = contraction_coefficient(&dm, default_n_cap(dm.d))?;
    results["n_r"] = json!(n_r);
    Ok(Outcome {
        results,
        checks,
        csv: Some(rows),
        ..Default::default()
    })
}

/// Runs the subcommand without writing anything.
pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.sim.sim_config().validate()?;
    let m = load_model(model_of(&cfg.command))?;
    let sim = cfg.sim.sim_config();
    match &cfg.command {
        Command::Validate { .. } => validate_cmd(&m),
        Command::Bounds { x, t, a_used, bc, .. } => bounds_cmd(&m, x, t, *a_used, bc.as_deref()),
        Command::Simulate { x0, v, path_index, .. } => simulate_cmd(&m, &sim, x0, v.as_deref(), *path_index),
        Command::Couple { x0, v, .. } => couple_cmd(&m, &sim, x0, v.as_deref()),
        Command::Stationary { x0, t, tolerance, .. } => stationary_cmd(&m, &sim, x0, t.as_deref(), *tolerance),
        Command::Verify {
            x0,
            a_used,
            lyapunov_points,
            small_set_dt,
            small_set_paths,
            ..
        } => verify_cmd(&m, &sim, x0, *a_used, *lyapunov_points, *small_set_dt, *small_set_paths),
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

pub fn csv_text(rows: &[CsvRow]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            fmt_num(r.t),
            fmt_num(r.mean),
            fmt_num(r.std_err),
            r.bound.map(fmt_num).unwrap_or_default()
        ));
    }
    s
}

pub fn report_json(cfg: &RunConfig, outcome: &Outcome) -> String {
    let timestamp_unix = (!cfg.sim.deterministic).then(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    let report = Report {
        schema: REPORT_SCHEMA,
        tool_version: env!("CARGO_PKG_VERSION"),
        timestamp_unix,
        config: cfg,
        pass: outcome.checks.iter().all(|c| c.status != Status::Fail),
        checks: &outcome.checks,
        results: &outcome.results,
    };
    serde_json::to_string_pretty(&report).expect("serializable") + "\n"
}

/// Writes `<command>.json`, `<command>.csv` and any extra files into `out`.
pub fn emit_report(cfg: &RunConfig, outcome: &Outcome, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Config(format!("{}: {e}", out.display())))?;
    let name = command_name(&cfg.command);
    let mut written = Vec::new();
    let report = out.join(format!("{name}.json"));
    write_text(&report, &report_json(cfg, outcome))?;
    written.push(report);
    if let Some(rows) = &outcome.csv {
        let f = out.join(format!("{name}.csv"));
        write_text(&f, &csv_text(rows))?;
        written.push(f);
    }
    for (fname, body) in &outcome.files {
        let f = out.join(fname);
        match body {
            FileBody::Text(t) => write_text(&f, t)?,
            FileBody::Trajectory(t) => write_trajectory_bin(t, &f)?,
            FileBody::TrajectoryMeta(t) => write_trajectory_meta(t, &f)?,
        }
        written.push(f);
    }
    Ok(written)
}

/// Executes inside a pool of `--threads` workers, writes the reports, and
/// turns failed checks into an error naming them.
pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.sim.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let outcome = pool.install(|| execute(cfg))?;
    let written = emit_report(cfg, &outcome, &cfg.sim.out)?;
    let failed: Vec<&str> = outcome
        .checks
        .iter()
        .filter(|c| c.status == Status::Fail)
        .map(|c| c.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(written)
    } else {
        Err(CliError::CheckFailed(failed.join(", ")))
    }
}
