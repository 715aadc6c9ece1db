//! Monte Carlo estimators and pathwise verifiers.
//!
//! Paths run concurrently on independent substreams; every reduction walks the
//! per-path results in ascending path index, so output does not depend on the
//! thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{constant_cascade, contraction_coefficient, default_n_cap, lambda_phi, optimal_v, rbm_sup_bound, theta_functionals, A0};
use crate::catalog::StationaryLaw;
use crate::error::{check_len, RbmError, Result};
use crate::linalg::{l1_dist, norm_l1};
use crate::model::{admissible, norm_inf_v, DerivedModel, ModelParams};
use crate::reflect::{bounding_drift_admissible, grid_steps, simulate_coupled, CoupledRun, NormalStepper, RbmStepper, SimConfig, Trajectory};
use crate::rng::PathRng;

/// Most grid steps a single burn-in may take.
pub const MAX_BURN_IN_STEPS: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n_paths: usize,
    pub ci95: (f64, f64),
}

impl McEstimate {
    /// Sample mean and standard error, summed in slice order.
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std_err: f64::NAN,
                n_paths: 0,
                ci95: (f64::NAN, f64::NAN),
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_err = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std_err,
            n_paths: n,
            ci95: (mean - 1.96 * std_err, mean + 1.96 * std_err),
        }
    }
}

/// Runs `f` for path indices `0..n` in parallel; results come back in index order.
pub fn map_paths<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Incremental replay of the round times: round `k` opens at `eta^{k-1} + 1`
/// and closes when every coordinate has touched zero since it opened.
#[derive(Debug, Clone)]
pub struct EtaTracker {
    round_start: f64,
    done: Vec<bool>,
    remaining: usize,
    pub eta_times: Vec<f64>,
}

impl EtaTracker {
    pub fn new(d: usize) -> Self {
        Self {
            round_start: 1.0,
            done: vec![false; d],
            remaining: d,
            eta_times: Vec::new(),
        }
    }

    /// Feeds the local-time increment arriving at grid time `t`. Returns true
    /// when this completes a round.
    pub fn observe(&mut self, t: f64, dl: &[f64]) -> bool {
        if t < self.round_start - 1e-9 * self.round_start.max(1.0) {
            return false;
        }
        for (i, inc) in dl.iter().enumerate() {
            if *inc > 0.0 && !self.done[i] {
                self.done[i] = true;
                self.remaining -= 1;
            }
        }
        if self.remaining == 0 {
            self.eta_times.push(t);
            self.round_start = t + 1.0;
            self.done.iter_mut().for_each(|v| *v = false);
            self.remaining = self.done.len();
            true
        } else {
            false
        }
    }

    pub fn count(&self) -> usize {
        self.eta_times.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaCounter {
    pub eta_times: Vec<f64>,
    pub horizon: f64,
}

impl EtaCounter {
    /// `N(t)`: number of completed rounds by time `t`.
    pub fn count_at(&self, t: f64) -> usize {
        self.eta_times.partition_point(|e| *e <= t + 1e-12 * t.abs().max(1.0))
    }
}

pub fn count_eta(traj: &Trajectory) -> EtaCounter {
    let mut tr = EtaTracker::new(traj.d);
    for n in 1..=traj.n_steps() {
        tr.observe(traj.times[n], traj.dl_at(n));
    }
    EtaCounter {
        eta_times: tr.eta_times,
        horizon: traj.times.last().copied().unwrap_or(0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridViolation {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub coordinate: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCheck {
    pub pass: bool,
    pub points: usize,
    pub violations: usize,
    pub first_violation: Option<GridViolation>,
    /// Largest `lhs - rhs` seen (negative when every point has room).
    pub worst_excess: f64,
}

impl PathCheck {
    fn new() -> Self {
        Self {
            pass: true,
            points: 0,
            violations: 0,
            first_violation: None,
            worst_excess: f64::NEG_INFINITY,
        }
    }

    fn record(&mut self, t: f64, lhs: f64, rhs: f64, slack: f64, coordinate: Option<usize>) {
        self.points += 1;
        self.worst_excess = self.worst_excess.max(lhs - rhs);
        if lhs > rhs + slack {
            self.violations += 1;
            self.pass = false;
            if self.first_violation.is_none() {
                self.first_violation = Some(GridViolation { t, lhs, rhs, coordinate });
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractionMode {
    /// `2 ||x||_1 2^{-N/n(R)}`
    Coefficient,
    /// `||P^N 1||_inf ||x||_1`
    MatrixPower,
}

fn check_origin_partner(run: &CoupledRun) -> Result<()> {
    if run.traj_y.state(0).iter().any(|v| *v != 0.0) {
        return Err(RbmError::Precondition(
            "contraction check needs the partner path started at the origin".into(),
        ));
    }
    Ok(())
}

/// Pathwise contraction of the coupled distance against round counts of the
/// path started at `x`.
pub fn contraction_check(run: &CoupledRun, n_r: usize) -> Result<PathCheck> {
    check_origin_partner(run)?;
    if n_r == 0 {
        return Err(RbmError::Input("n(R) must be positive".into()));
    }
    let x1 = norm_l1(run.traj_x.state(0));
    let counter = count_eta(&run.traj_x);
    let mut out = PathCheck::new();
    for (n, gap) in run.l1_gap.iter().enumerate() {
        let t = run.traj_x.times[n];
        let rounds = counter.count_at(t) as f64;
        let rhs = 2.0 * x1 * (-(rounds / n_r as f64) * std::f64::consts::LN_2).exp();
        out.record(t, *gap, rhs, 1e-9 * x1, None);
    }
    Ok(out)
}

/// Same check with the sharper `||P^N 1||_inf` envelope.
pub fn contraction_check_power(run: &CoupledRun, dm: &DerivedModel) -> Result<PathCheck> {
    check_origin_partner(run)?;
    let x1 = norm_l1(run.traj_x.state(0));
    let counter = count_eta(&run.traj_x);
    let mut norms = vec![1.0];
    let mut w = vec![1.0; dm.d];
    let mut next = vec![0.0; dm.d];
    for _ in 0..counter.eta_times.len() {
        dm.p_mat.matvec_into(&w, &mut next);
        std::mem::swap(&mut w, &mut next);
        norms.push(w.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    let mut out = PathCheck::new();
    for (n, gap) in run.l1_gap.iter().enumerate() {
        let t = run.traj_x.times[n];
        out.record(t, *gap, norms[counter.count_at(t)] * x1, 1e-9 * x1, None);
    }
    Ok(out)
}

/// `R^{-1} X <= R^{-1} X^+` at every grid point.
pub fn domination_check(run: &CoupledRun, dm: &DerivedModel) -> Result<PathCheck> {
    let plus = run
        .traj_plus
        .as_ref()
        .ok_or_else(|| RbmError::Precondition("coupled run has no bounding path".into()))?;
    let d = dm.d;
    let mut rx = vec![0.0; d];
    let mut rp = vec![0.0; d];
    let mut out = PathCheck::new();
    for n in 0..=run.traj_x.n_steps() {
        let (x, xp) = (run.traj_x.state(n), plus.state(n));
        dm.r_inv.matvec_into(x, &mut rx);
        dm.r_inv.matvec_into(xp, &mut rp);
        let scale = x.iter().chain(xp).fold(0.0f64, |m, v| m.max(v.abs()));
        let slack = 1e-9 * (1.0 + scale);
        let t = run.traj_x.times[n];
        let (i, excess) = (0..d)
            .map(|i| (i, rx[i] - rp[i]))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        out.record(t, rx[i], rx[i] - excess, slack, Some(i));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledSuiteSummary {
    pub n_paths: usize,
    pub n_r: usize,
    pub v: Vec<f64>,
    pub contraction_pass: usize,
    pub contraction_power_pass: usize,
    pub domination_pass: usize,
    pub worst_contraction_excess: f64,
    pub worst_domination_excess: f64,
    pub first_failure: Option<String>,
    /// Grid times of the mean-distance profile.
    pub profile_t: Vec<f64>,
    /// Mean of `||X(t;x0) - X(t;0)||_1` over paths.
    pub profile: Vec<McEstimate>,
}

pub const PROFILE_POINTS: usize = 21;

impl CoupledSuiteSummary {
    pub fn all_pass(&self) -> bool {
        self.contraction_pass == self.n_paths
            && self.contraction_power_pass == self.n_paths
            && self.domination_pass == self.n_paths
    }
}

/// Couples `x0` with the origin and a bounding process with drift `v` (the
/// optimal one by default) on `cfg.n_paths` paths and runs both pathwise checks.
pub fn coupled_suite(p: &ModelParams, x0: &[f64], v: Option<&[f64]>, cfg: &SimConfig) -> Result<CoupledSuiteSummary> {
    let dm = admissible(p)?;
    let n_r = contraction_coefficient(&dm, default_n_cap(dm.d))?;
    let v = match v {
        Some(v) => v.to_vec(),
        None => optimal_v(&dm, &theta_functionals(&dm)?)?.v_tilde,
    };
    let zero = vec![0.0; p.d];
    let n_steps = cfg.n_steps();
    let idx: Vec<usize> = (0..PROFILE_POINTS).map(|j| j * n_steps / (PROFILE_POINTS - 1)).collect();
    let per_path = map_paths(cfg.n_paths, |k| {
        let run = simulate_coupled(p, x0, &zero, Some(&v), cfg, k)?;
        let gaps: Vec<f64> = idx.iter().map(|i| run.l1_gap[*i]).collect();
        Ok((
            contraction_check(&run, n_r)?,
            contraction_check_power(&run, &dm)?,
            domination_check(&run, &dm)?,
            gaps,
        ))
    })?;
    let mut s = CoupledSuiteSummary {
        n_paths: cfg.n_paths,
        n_r,
        v,
        contraction_pass: 0,
        contraction_power_pass: 0,
        domination_pass: 0,
        worst_contraction_excess: f64::NEG_INFINITY,
        worst_domination_excess: f64::NEG_INFINITY,
        first_failure: None,
        profile_t: idx.iter().map(|i| *i as f64 * cfg.dt).collect(),
        profile: (0..idx.len())
            .map(|j| McEstimate::from_samples(&per_path.iter().map(|r| r.3[j]).collect::<Vec<_>>()))
            .collect(),
    };
    for (k, (c, cp, dom, _)) in per_path.iter().enumerate() {
        s.contraction_pass += c.pass as usize;
        s.contraction_power_pass += cp.pass as usize;
        s.domination_pass += dom.pass as usize;
        s.worst_contraction_excess = s.worst_contraction_excess.max(c.worst_excess).max(cp.worst_excess);
        s.worst_domination_excess = s.worst_domination_excess.max(dom.worst_excess);
        if s.first_failure.is_none() {
            for (name, chk) in [("contraction", c), ("contraction_power", cp), ("domination", dom)] {
                if let Some(v) = chk.first_violation {
                    s.first_failure = Some(format!("{name} on path {k} at t = {}: {} > {}", v.t, v.lhs, v.rhs));
                    break;
                }
            }
        }
    }
    Ok(s)
}

/// `X(horizon; x0)` for each path, without storing trajectories. Returned as
/// one sample vector per coordinate.
pub fn terminal_states(p: &ModelParams, x0: &[f64], cfg: &SimConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    check_len("x0", p.d, x0.len())?;
    let dm = crate::reflect::simulation_model(p)?;
    let n = cfg.n_steps();
    let (tol, it) = (cfg.lcp_tol, cfg.max_iter(p.d));
    let finals = map_paths(cfg.n_paths, |k| {
        let mut rng = PathRng::new(cfg.seed, k);
        let mut st = RbmStepper::new(p, &dm, x0, cfg.dt, tol, it);
        let mut xi = vec![0.0; p.d];
        for _ in 0..n {
            rng.fill_normal(&mut xi);
            st.step(&xi)?;
        }
        Ok(st.x)
    })?;
    Ok((0..p.d).map(|i| finals.iter().map(|x| x[i]).collect()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCheck {
    pub points: usize,
    /// Points outside the small set where the drift exceeds `-Lambda/(2A)`.
    pub drift_violations: usize,
    /// Largest `drift / (Lambda/(2A))`; at most `-1` when the drift condition holds.
    pub worst_drift_ratio: f64,
    /// Largest relative gap between the analytic gradient and central differences.
    pub max_grad_rel_err: f64,
}

/// Evaluates the Lyapunov drift at `n_points` random points with
/// `||y||_{inf,v} > A log phi(v)` and compares the analytic gradient with
/// central differences.
pub fn lyapunov_check(dm: &DerivedModel, v: &[f64], a_used: f64, n_points: usize, seed: u64) -> Result<LyapunovCheck> {
    let vf = lambda_phi(v, dm)?;
    let d = dm.d;
    let level = a_used * vf.phi.ln();
    let target = vf.lambda / (2.0 * a_used);
    let scale: Vec<f64> = (0..d).map(|i| dm.sigma[i].powi(2) / v[i]).collect();
    let per_point = map_paths(n_points, |k| {
        let mut rng = PathRng::auxiliary(seed, k);
        let mut y: Vec<f64> = scale.iter().map(|s| 3.0 * level * s * rng.uniform()).collect();
        let i = ((rng.uniform() * d as f64) as usize).min(d - 1);
        y[i] = level * (1.0 + 2.0 * rng.uniform() + 1e-9) * scale[i];
        let e = crate::bounds::lyapunov(&y, v, dm, a_used)?;
        let mut err = 0.0f64;
        let gmax = e.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        // second point spread over the glue region of g
        let z: Vec<f64> = scale.iter().map(|s| 0.5 * a_used * s * rng.uniform()).collect();
        let ez = crate::bounds::lyapunov(&z, v, dm, a_used)?;
        let zmax = ez.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for (pt, ev, gm) in [(&y, &e, gmax), (&z, &ez, zmax)] {
            for j in 0..d {
                let h = 1e-5 * pt[j].abs().max(scale[j] * a_used * 1e-3);
                let mut up = pt.clone();
                let mut dn = pt.clone();
                up[j] += h;
                dn[j] = (dn[j] - h).max(0.0);
                let width = up[j] - dn[j];
                let fd = (crate::bounds::lyapunov(&up, v, dm, a_used)?.value
                    - crate::bounds::lyapunov(&dn, v, dm, a_used)?.value)
                    / width;
                err = err.max((fd - ev.gradient[j]).abs() / gm.max(1e-300));
            }
        }
        Ok((e.drift / target, err))
    })?;
    Ok(LyapunovCheck {
        points: n_points,
        drift_violations: per_point.iter().filter(|p| p.0 > -1.0).count(),
        worst_drift_ratio: per_point.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
        max_grad_rel_err: per_point.iter().map(|p| p.1).fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct W1Estimate {
    pub t_eval: Vec<f64>,
    pub estimates: Vec<McEstimate>,
    /// Evaluation times past the simulated horizon; their estimate is the
    /// coupled distance at the horizon, an upper estimate since the distance
    /// is pathwise nonincreasing.
    pub extrapolated: Vec<bool>,
    pub sim_horizon: f64,
    pub start: String,
    pub burn_in: Option<f64>,
    /// Paths whose two copies merged exactly before the horizon.
    pub coalesced: usize,
}

/// `E||x - Y||_1` for `Y` with independent `Exp(rate_k)` coordinates.
pub fn product_exp_l1_mean(x: &[f64], law: &StationaryLaw) -> f64 {
    x.iter()
        .zip(&law.rates)
        .map(|(x, r)| x - 1.0 / r + 2.0 * (-r * x).exp() / r)
        .sum()
}

/// Coupling estimate of `E||X(t;x0) - X(t;Y)||_1` with `Y` stationary.
pub fn estimate_w1(
    p: &ModelParams,
    x0: &[f64],
    t_eval: &[f64],
    cfg: &SimConfig,
    stationary: Option<&StationaryLaw>,
) -> Result<W1Estimate> {
    cfg.validate()?;
    check_len("x0", p.d, x0.len())?;
    if t_eval.is_empty() || t_eval.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(RbmError::Input("t_eval must be nonempty, finite and nonnegative".into()));
    }
    let dm = admissible(p)?;
    if let Some(law) = stationary {
        check_len("stationary rates", p.d, law.rates.len())?;
    }
    let t_max = t_eval.iter().cloned().fold(0.0, f64::max);
    let sim_horizon = t_max.min(cfg.horizon);
    let n_sim = grid_steps(sim_horizon, cfg.dt);
    let burn_in = match stationary {
        Some(_) => None,
        None => {
            let tf = theta_functionals(&dm)?;
            let t_scale = optimal_v(&dm, &tf)?.functionals.t;
            let b = (10.0 * t_scale).max(2.0 * sim_horizon);
            if grid_steps(b, cfg.dt) > MAX_BURN_IN_STEPS {
                return Err(RbmError::Capability(format!(
                    "burn-in of {b} time units needs more than {MAX_BURN_IN_STEPS} steps at dt = {}; supply a stationary law",
                    cfg.dt
                )));
            }
            Some(b)
        }
    };
    let steps: Vec<usize> = t_eval
        .iter()
        .map(|t| ((t / cfg.dt).round() as usize).min(n_sim))
        .collect();
    let (tol, it) = (cfg.lcp_tol, cfg.max_iter(p.d));
    let per_path = map_paths(cfg.n_paths, |k| {
        let mut aux = PathRng::auxiliary(cfg.seed, k);
        let y0 = match (stationary, burn_in) {
            (Some(law), _) => law.sample(&mut aux),
            (None, Some(b)) => {
                let mut st = RbmStepper::new(p, &dm, &vec![0.0; p.d], cfg.dt, tol, it);
                let mut xi = vec![0.0; p.d];
                for _ in 0..grid_steps(b, cfg.dt) {
                    aux.fill_normal(&mut xi);
                    st.step(&xi)?;
                }
                st.x
            }
            _ => unreachable!(),
        };
        let mut rng = PathRng::new(cfg.seed, k);
        let mut sx = RbmStepper::new(p, &dm, x0, cfg.dt, tol, it);
        let mut sy = RbmStepper::new(p, &dm, &y0, cfg.dt, tol, it);
        let mut gaps = vec![0.0; steps.len()];
        let mut xi = vec![0.0; p.d];
        let mut merged = false;
        let mut n = 0usize;
        loop {
            let gap = l1_dist(&sx.x, &sy.x);
            for (g, s) in gaps.iter_mut().zip(&steps) {
                if *s == n || (merged && *s > n) {
                    *g = gap;
                }
            }
            if merged || n == n_sim {
                break;
            }
            rng.fill_normal(&mut xi);
            sx.step(&xi)?;
            sy.step(&xi)?;
            n += 1;
            merged = sx.x == sy.x;
        }
        Ok((gaps, merged))
    })?;
    let estimates = (0..t_eval.len())
        .map(|j| McEstimate::from_samples(&per_path.iter().map(|(g, _)| g[j]).collect::<Vec<_>>()))
        .collect();
    Ok(W1Estimate {
        t_eval: t_eval.to_vec(),
        estimates,
        extrapolated: t_eval.iter().map(|t| *t > sim_horizon).collect(),
        sim_horizon,
        start: if stationary.is_some() { "product-form" } else { "burn-in" }.into(),
        burn_in,
        coalesced: per_path.iter().filter(|(_, m)| *m).count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalTest {
    pub n: usize,
    pub mean: f64,
    pub target_mean: f64,
    pub mean_rel_err: f64,
    pub ks_stat: f64,
}

pub const MIN_MARGINAL_SAMPLES: usize = 1000;

/// Per-coordinate mean error and Kolmogorov–Smirnov distance to `Exp(rate_k)`.
pub fn marginal_stationary_test(samples: &[Vec<f64>], law: &StationaryLaw) -> Result<Vec<MarginalTest>> {
    check_len("sample coordinates", law.rates.len(), samples.len())?;
    samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            if s.len() < MIN_MARGINAL_SAMPLES {
                return Err(RbmError::Input(format!(
                    "coordinate {k} has {} samples, need {MIN_MARGINAL_SAMPLES}",
                    s.len()
                )));
            }
            let n = s.len() as f64;
            let mean = s.iter().sum::<f64>() / n;
            let target_mean = 1.0 / law.rates[k];
            let mut sorted = s.clone();
            sorted.sort_by(f64::total_cmp);
            let ks_stat = sorted
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let f = law.cdf(k, *x);
                    (f - i as f64 / n).max((i + 1) as f64 / n - f)
                })
                .fold(0.0, f64::max);
            Ok(MarginalTest {
                n: s.len(),
                mean,
                target_mean,
                mean_rel_err: (mean - target_mean).abs() / target_mean,
                ks_stat,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub rate: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Weighted least squares of `log mean` on `t`, weights `(mean/std_err)^2`.
/// Points with `mean <= 3 std_err` are dropped.
pub fn decay_fit(t_values: &[f64], estimates: &[McEstimate]) -> Result<ExpFit> {
    check_len("estimates", t_values.len(), estimates.len())?;
    let pts: Vec<(f64, f64, f64)> = t_values
        .iter()
        .zip(estimates)
        .filter(|(_, e)| e.mean > 0.0 && e.mean > 3.0 * e.std_err)
        .map(|(t, e)| {
            let rel = (e.std_err / e.mean).max(1e-12);
            (*t, e.mean.ln(), 1.0 / (rel * rel))
        })
        .collect();
    if pts.len() < 4 {
        return Err(RbmError::FitDegenerate(format!(
            "{} usable points, need 4 with mean > 3 std_err",
            pts.len()
        )));
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mt = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mt).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(RbmError::FitDegenerate("all usable points share one time".into()));
    }
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mt) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(ExpFit {
        rate: -slope,
        intercept: my - slope * mt,
        points: pts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftMc {
    pub empirical: McEstimate,
    pub bound: f64,
    pub x0: f64,
}

/// Exceedance frequency of level `a_level` by a 1D reflected walk with drift
/// `-mu_p` over `[0, horizon]`, monitored on the grid.
pub fn rbmdrift_mc(mu_p: f64, sigma_p: f64, a_level: f64, horizon: f64, x0: f64, cfg: &SimConfig) -> Result<DriftMc> {
    let bound = rbm_sup_bound(mu_p, sigma_p, a_level, horizon)?.value;
    if !(0.0..=a_level / 2.0).contains(&x0) {
        return Err(RbmError::Input(format!("start {x0} outside [0, {}]", a_level / 2.0)));
    }
    let sim = SimConfig { horizon, ..cfg.clone() };
    sim.validate()?;
    let n = sim.n_steps();
    let drift = -mu_p * sim.dt;
    let vol = sigma_p * sim.dt.sqrt();
    let hits = map_paths(sim.n_paths, |k| {
        let mut rng = PathRng::new(sim.seed, k);
        let mut x = x0;
        for _ in 0..n {
            x = (x + drift + vol * rng.normal()).max(0.0);
            if x >= a_level {
                return Ok(1.0);
            }
        }
        Ok(0.0)
    })?;
    Ok(DriftMc {
        empirical: McEstimate::from_samples(&hits),
        bound,
        x0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallSetMc {
    /// Estimate of `E exp(Lambda tau / (2A))` for the entry time into `K_A`.
    pub tau_moment: McEstimate,
    /// `exp(3 ||x0||_{inf,v} / A)`
    pub tau_bound: f64,
    /// Paths that had not entered `K_A` by the horizon; their term uses the
    /// horizon and makes `tau_moment` a lower estimate.
    pub tau_censored: usize,
    pub zerohit_prob: McEstimate,
    /// Start of the zero-hit experiment, inside `{||x||_{inf,v} <= A M(v)}`.
    pub zerohit_start: Vec<f64>,
    pub window: f64,
    pub lambda: f64,
    pub phi: f64,
    pub m: f64,
    pub t: f64,
    pub small_set_level: f64,
    pub sup_level: f64,
}

/// Entry-time moment for the small set and the probability that every
/// coordinate hits zero within `C'' T(v)` while the bounding process stays
/// below `C' M(v)`.
pub fn small_set_mc(p: &ModelParams, v: &[f64], a_used: f64, x0: &[f64], cfg: &SimConfig) -> Result<SmallSetMc> {
    cfg.validate()?;
    check_len("x0", p.d, x0.len())?;
    let dm = admissible(p)?;
    if !(a_used >= A0) {
        return Err(RbmError::Precondition(format!("A = {a_used} below {A0}")));
    }
    let vf = lambda_phi(v, &dm)?;
    if !bounding_drift_admissible(v, &dm) {
        return Err(RbmError::Precondition("bounding drift violates R^-1 v <= b".into()));
    }
    let cas = constant_cascade(a_used)?;
    let window = cas.c2z * vf.t;
    if cfg.horizon < window {
        return Err(RbmError::Config(format!(
            "horizon {} shorter than the zero-hit window C'' T(v) = {window}",
            cfg.horizon
        )));
    }
    let small_set_level = a_used * vf.phi.ln();
    let sup_level = cas.c1z * vf.m;
    let start_norm = norm_inf_v(x0, v, &dm.sigma);
    let cap = a_used * vf.m;
    let zerohit_start: Vec<f64> = if start_norm > cap {
        x0.iter().map(|x| x * cap / start_norm).collect()
    } else {
        x0.to_vec()
    };
    let n_tau = cfg.n_steps();
    let n_window = grid_steps(window, cfg.dt);
    let (tol, it) = (cfg.lcp_tol, cfg.max_iter(p.d));
    let theta = vf.lambda / (2.0 * a_used);
    let per_path = map_paths(cfg.n_paths, |k| {
        let mut xi = vec![0.0; p.d];
        // entry time of the bounding process into K_A
        let mut rng = PathRng::new(cfg.seed, k);
        let mut plus = NormalStepper::new(p, v, x0, cfg.dt);
        let mut steps = 0usize;
        while norm_inf_v(&plus.x, v, &dm.sigma) > small_set_level && steps < n_tau {
            rng.fill_normal(&mut xi);
            plus.step(&xi);
            steps += 1;
        }
        let censored = norm_inf_v(&plus.x, v, &dm.sigma) > small_set_level;
        let moment = (theta * steps as f64 * cfg.dt).exp();

        let mut aux = PathRng::auxiliary(cfg.seed, k);
        let mut x = RbmStepper::new(p, &dm, &zerohit_start, cfg.dt, tol, it);
        let mut bp = NormalStepper::new(p, v, &zerohit_start, cfg.dt);
        let mut eta = EtaTracker::new(p.d);
        let mut stayed = norm_inf_v(&zerohit_start, v, &dm.sigma) <= sup_level;
        let mut hit = false;
        for n in 1..=n_window {
            if !stayed {
                break;
            }
            aux.fill_normal(&mut xi);
            bp.step(&xi);
            stayed = norm_inf_v(&bp.x, v, &dm.sigma) <= sup_level;
            if !hit {
                x.step(&xi)?;
                hit = eta.observe(n as f64 * cfg.dt, &x.dl);
            }
        }
        Ok((moment, censored, if stayed && hit { 1.0 } else { 0.0 }))
    })?;
    let moments: Vec<f64> = per_path.iter().map(|r| r.0).collect();
    let events: Vec<f64> = per_path.iter().map(|r| r.2).collect();
    Ok(SmallSetMc {
        tau_moment: McEstimate::from_samples(&moments),
        tau_bound: (3.0 * start_norm / a_used).exp(),
        tau_censored: per_path.iter().filter(|r| r.1).count(),
        zerohit_prob: McEstimate::from_samples(&events),
        zerohit_start,
        window,
        lambda: vf.lambda,
        phi: vf.phi,
        m: vf.m,
        t: vf.t,
        small_set_level,
        sup_level,
    })
}
