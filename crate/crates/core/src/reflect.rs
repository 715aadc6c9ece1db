//! Discretized Skorokhod problem in the orthant.
//!
//! Each grid step adds an exact Gaussian increment of the free process and
//! then projects back onto the orthant by solving the linear complementarity
//! problem `x = z + R l`, `x >= 0`, `l >= 0`, `x_i l_i = 0`. Active coordinates
//! come out as exact zeros, so a coordinate touches the boundary at a step
//! iff its local-time increment is positive.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, RbmError, Result};
use crate::linalg::{l1_dist, norm_inf, Mat};
use crate::model::{admissible, DerivedModel, ModelParams};
use crate::rng::PathRng;

pub const DEFAULT_LCP_TOL: f64 = 1e-12;
pub const MAX_GRID_STEPS: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "default_lcp_tol")]
    pub lcp_tol: f64,
    /// Defaults to `10 d + 1000` when absent.
    #[serde(default)]
    pub lcp_max_iter: Option<usize>,
}

fn default_lcp_tol() -> f64 {
    DEFAULT_LCP_TOL
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            dt,
            horizon,
            n_paths,
            seed,
            lcp_tol: DEFAULT_LCP_TOL,
            lcp_max_iter: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(RbmError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(RbmError::Config(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.horizon / self.dt > MAX_GRID_STEPS {
            return Err(RbmError::Config(format!(
                "horizon/dt = {:e} exceeds the step cap {MAX_GRID_STEPS:e}",
                self.horizon / self.dt
            )));
        }
        if !(self.lcp_tol > 0.0) {
            return Err(RbmError::Config("lcp_tol must be positive".into()));
        }
        Ok(())
    }

    /// `floor(horizon / dt)`, robust to representation error in the ratio.
    pub fn n_steps(&self) -> usize {
        grid_steps(self.horizon, self.dt)
    }

    pub fn max_iter(&self, d: usize) -> usize {
        self.lcp_max_iter.unwrap_or(10 * d + 1000)
    }
}

pub(crate) fn grid_steps(horizon: f64, dt: f64) -> usize {
    (horizon / dt * (1.0 + 1e-12)).floor() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcpSolution {
    pub x: Vec<f64>,
    pub l: Vec<f64>,
    pub iterations: usize,
    /// `max_i |x_i - (z + R l)_i|`
    pub residual: f64,
}

/// Complementarity solver for one reflection matrix, holding `P^T` in sparse
/// row form.
#[derive(Debug, Clone)]
pub struct LcpSolver {
    d: usize,
    rows: Vec<Vec<(usize, f64)>>,
    /// `0.5 / max(1, ||P^T||_inf)`: scales the stopping threshold on the
    /// iterate change so the final defect stays below the tolerance.
    defect_scale: f64,
    tol: f64,
    max_iter: usize,
    prev: Vec<f64>,
}

impl LcpSolver {
    pub fn new(dm: &DerivedModel, tol: f64, max_iter: usize) -> Self {
        let d = dm.d;
        let rows: Vec<Vec<(usize, f64)>> = (0..d)
            .map(|i| {
                dm.pt_mat
                    .row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        let pt_norm = rows
            .iter()
            .map(|r| r.iter().map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Self {
            d,
            rows,
            defect_scale: 0.5 / pt_norm.max(1.0),
            tol,
            max_iter,
            prev: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    fn pt_dot(&self, i: usize, l: &[f64]) -> f64 {
        self.rows[i].iter().map(|&(j, v)| v * l[j]).sum()
    }

    /// Solves in place: on return `x` is the reflected point and `l` the
    /// pushing increment. Returns the iteration count.
    pub fn solve_into(&mut self, z: &[f64], x: &mut [f64], l: &mut [f64]) -> Result<usize> {
        let d = self.d;
        if z.iter().all(|&v| v >= 0.0) {
            x.copy_from_slice(z);
            l.iter_mut().for_each(|v| *v = 0.0);
            return Ok(0);
        }
        let scale = norm_inf(z).max(1.0);
        let thresh = (self.tol * scale * self.defect_scale).max(16.0 * f64::EPSILON * scale);
        for (li, &zi) in l.iter_mut().zip(z) {
            *li = (-zi).max(0.0);
        }
        let mut iterations = 1;
        loop {
            if iterations > self.max_iter {
                let residual = self.defect(z, l);
                return Err(RbmError::LcpConvergence {
                    iterations: self.max_iter,
                    residual,
                });
            }
            self.prev.copy_from_slice(l);
            let mut change: f64 = 0.0;
            for i in 0..d {
                let next = (self.pt_dot(i, &self.prev) - z[i]).max(0.0);
                change = change.max((next - self.prev[i]).abs());
                l[i] = next;
            }
            iterations += 1;
            if change <= thresh {
                break;
            }
        }
        for i in 0..d {
            x[i] = if l[i] > 0.0 {
                0.0
            } else {
                (z[i] - self.pt_dot(i, l)).max(0.0)
            };
        }
        Ok(iterations)
    }

    fn defect(&self, z: &[f64], l: &[f64]) -> f64 {
        (0..self.d)
            .map(|i| {
                let free = z[i] + l[i] - self.pt_dot(i, l);
                if l[i] > 0.0 {
                    free.abs()
                } else {
                    (-free).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    /// `max_i |x_i - (z + R l)_i|` with `R = I - P^T`.
    pub fn residual(&self, z: &[f64], x: &[f64], l: &[f64]) -> f64 {
        (0..self.d)
            .map(|i| (x[i] - (z[i] + l[i] - self.pt_dot(i, l))).abs())
            .fold(0.0, f64::max)
    }
}

/// Single-step orthant reflection of `z`.
pub fn skorokhod_step(
    z: &[f64],
    dm: &DerivedModel,
    tol: f64,
    max_iter: usize,
) -> Result<LcpSolution> {
    check_len("z", dm.d, z.len())?;
    let mut solver = LcpSolver::new(dm, tol, max_iter);
    let mut x = vec![0.0; dm.d];
    let mut l = vec![0.0; dm.d];
    let iterations = solver.solve_into(z, &mut x, &mut l)?;
    let residual = solver.residual(z, &x, &l);
    Ok(LcpSolution {
        x,
        l,
        iterations,
        residual,
    })
}

/// A discretized path on the grid `t_n = n dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub d: usize,
    pub dt: f64,
    pub times: Vec<f64>,
    /// Row-major `(n_steps + 1) x d`.
    pub states: Vec<f64>,
    /// Row-major `n_steps x d`; row `n - 1` is the increment over `(t_{n-1}, t_n]`.
    pub dl: Vec<f64>,
    pub path_index: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Trajectory {
    fn with_capacity(d: usize, dt: f64, n_steps: usize, seed: u64, path_index: u64) -> Self {
        Self {
            d,
            dt,
            times: Vec::with_capacity(n_steps + 1),
            states: Vec::with_capacity((n_steps + 1) * d),
            dl: Vec::with_capacity(n_steps * d),
            path_index,
            seed,
            warnings: Vec::new(),
        }
    }

    pub fn n_steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn state(&self, n: usize) -> &[f64] {
        &self.states[n * self.d..(n + 1) * self.d]
    }

    /// Local-time increment arriving at grid point `n >= 1`.
    pub fn dl_at(&self, n: usize) -> &[f64] {
        &self.dl[(n - 1) * self.d..n * self.d]
    }

    fn push(&mut self, t: f64, x: &[f64], dl: Option<&[f64]>) {
        self.times.push(t);
        self.states.extend_from_slice(x);
        if let Some(dl) = dl {
            self.dl.extend_from_slice(dl);
        }
    }
}

/// Advances an `RBM(mu, Sigma, R)` state one grid step at a time.
#[derive(Debug, Clone)]
pub struct RbmStepper {
    drift_dt: Vec<f64>,
    diff_sqrt_dt: Mat,
    solver: LcpSolver,
    pub x: Vec<f64>,
    pub dl: Vec<f64>,
    z: Vec<f64>,
    pub lcp_iterations: usize,
}

impl RbmStepper {
    pub fn new(p: &ModelParams, dm: &DerivedModel, x0: &[f64], dt: f64, tol: f64, max_iter: usize) -> Self {
        let d = p.d;
        let sq = dt.sqrt();
        let diff_sqrt_dt = Mat::from_row_major(
            d,
            d,
            p.diff.as_slice().iter().map(|v| v * sq).collect(),
        )
        .expect("square");
        Self {
            drift_dt: p.mu.iter().map(|m| m * dt).collect(),
            diff_sqrt_dt,
            solver: LcpSolver::new(dm, tol, max_iter),
            x: x0.to_vec(),
            dl: vec![0.0; d],
            z: vec![0.0; d],
            lcp_iterations: 0,
        }
    }

    /// Steps with standard normal vector `xi`.
    #[inline]
    pub fn step(&mut self, xi: &[f64]) -> Result<()> {
        let d = self.x.len();
        for i in 0..d {
            let noise: f64 = self.diff_sqrt_dt.row(i).iter().zip(xi).map(|(a, b)| a * b).sum();
            self.z[i] = self.x[i] + self.drift_dt[i] + noise;
        }
        self.lcp_iterations += self.solver.solve_into(&self.z, &mut self.x, &mut self.dl)?;
        Ok(())
    }
}

/// Normally reflected process `x + D B(t) - v t + L^+(t)`: each coordinate is
/// clamped at zero independently, which on the grid is the running-minimum
/// reflection of the discrete free path.
#[derive(Debug, Clone)]
pub struct NormalStepper {
    drift_dt: Vec<f64>,
    diff_sqrt_dt: Mat,
    pub x: Vec<f64>,
    pub dl: Vec<f64>,
}

impl NormalStepper {
    pub fn new(p: &ModelParams, v: &[f64], x0: &[f64], dt: f64) -> Self {
        let sq = dt.sqrt();
        Self {
            drift_dt: v.iter().map(|vi| -vi * dt).collect(),
            diff_sqrt_dt: Mat::from_row_major(
                p.d,
                p.d,
                p.diff.as_slice().iter().map(|v| v * sq).collect(),
            )
            .expect("square"),
            x: x0.to_vec(),
            dl: vec![0.0; p.d],
        }
    }

    #[inline]
    pub fn step(&mut self, xi: &[f64]) {
        for i in 0..self.x.len() {
            let noise: f64 = self.diff_sqrt_dt.row(i).iter().zip(xi).map(|(a, b)| a * b).sum();
            let z = self.x[i] + self.drift_dt[i] + noise;
            if z < 0.0 {
                self.x[i] = 0.0;
                self.dl[i] = -z;
            } else {
                self.x[i] = z;
                self.dl[i] = 0.0;
            }
        }
    }
}

fn check_start(what: &'static str, x0: &[f64], d: usize) -> Result<()> {
    check_len(what, d, x0.len())?;
    if x0.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(RbmError::Input(format!("{what} must be finite and nonnegative")));
    }
    Ok(())
}

/// Requires (A1) and (A3); stability is not needed to simulate.
pub(crate) fn simulation_model(p: &ModelParams) -> Result<DerivedModel> {
    let rep = crate::model::validate_params(p);
    if !(rep.a1_substochastic && rep.a1_transient) {
        return Err(RbmError::Precondition(format!(
            "reflection matrix fails (A1): {}",
            rep.messages.join("; ")
        )));
    }
    crate::model::derive(p)
}

/// Simulates one path of `RBM(mu, Sigma, R)` from `x0`.
pub fn simulate_rbm(p: &ModelParams, x0: &[f64], cfg: &SimConfig, path_index: u64) -> Result<Trajectory> {
    cfg.validate()?;
    check_start("x0", x0, p.d)?;
    let dm = simulation_model(p)?;
    let n = cfg.n_steps();
    let mut rng = PathRng::new(cfg.seed, path_index);
    let mut st = RbmStepper::new(p, &dm, x0, cfg.dt, cfg.lcp_tol, cfg.max_iter(p.d));
    let mut traj = Trajectory::with_capacity(p.d, cfg.dt, n, cfg.seed, path_index);
    traj.push(0.0, x0, None);
    let mut xi = vec![0.0; p.d];
    for k in 1..=n {
        rng.fill_normal(&mut xi);
        st.step(&xi)?;
        traj.push(k as f64 * cfg.dt, &st.x, Some(&st.dl));
    }
    Ok(traj)
}

/// `R^{-1} v <= b` within `1e-9`, the condition under which the normally
/// reflected process dominates the RBM.
pub fn bounding_drift_admissible(v: &[f64], dm: &DerivedModel) -> bool {
    dm.r_inv
        .matvec(v)
        .iter()
        .zip(&dm.b)
        .all(|(rv, b)| *rv <= b + 1e-9)
}

/// Simulates the bounding process with drift `-v` and identity reflection,
/// driven by the same increment stream as [`simulate_rbm`].
pub fn simulate_normal_rbm(
    v: &[f64],
    p: &ModelParams,
    x0: &[f64],
    cfg: &SimConfig,
    path_index: u64,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_start("x0", x0, p.d)?;
    check_len("v", p.d, v.len())?;
    if v.iter().any(|vi| !(*vi > 0.0)) {
        return Err(RbmError::Input("v must be positive".into()));
    }
    let n = cfg.n_steps();
    let mut traj = Trajectory::with_capacity(p.d, cfg.dt, n, cfg.seed, path_index);
    if let Ok(dm) = crate::model::derive(p) {
        if !bounding_drift_admissible(v, &dm) {
            traj.warnings
                .push("R^-1 v <= b violated: process does not dominate the RBM".into());
        }
    }
    let mut rng = PathRng::new(cfg.seed, path_index);
    let mut st = NormalStepper::new(p, v, x0, cfg.dt);
    traj.push(0.0, x0, None);
    let mut xi = vec![0.0; p.d];
    for k in 1..=n {
        rng.fill_normal(&mut xi);
        st.step(&xi);
        traj.push(k as f64 * cfg.dt, &st.x, Some(&st.dl));
    }
    Ok(traj)
}

/// Synchronously coupled trajectories sharing one Brownian driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledRun {
    pub traj_x: Trajectory,
    pub traj_y: Trajectory,
    pub traj_plus: Option<Trajectory>,
    /// Bounding drift used for `traj_plus`.
    pub v: Option<Vec<f64>>,
    pub seed: u64,
    pub path_index: u64,
    /// `||X(t_n; x) - X(t_n; y)||_1` per grid point.
    pub l1_gap: Vec<f64>,
}

pub fn simulate_coupled(
    p: &ModelParams,
    x0: &[f64],
    y0: &[f64],
    v_opt: Option<&[f64]>,
    cfg: &SimConfig,
    path_index: u64,
) -> Result<CoupledRun> {
    cfg.validate()?;
    check_start("x0", x0, p.d)?;
    check_start("y0", y0, p.d)?;
    let dm = simulation_model(p)?;
    let n = cfg.n_steps();
    let d = p.d;
    let (tol, it) = (cfg.lcp_tol, cfg.max_iter(d));
    let mut rng = PathRng::new(cfg.seed, path_index);
    let mut sx = RbmStepper::new(p, &dm, x0, cfg.dt, tol, it);
    let mut sy = RbmStepper::new(p, &dm, y0, cfg.dt, tol, it);
    let mut splus = match v_opt {
        Some(v) => {
            check_len("v", d, v.len())?;
            Some(NormalStepper::new(p, v, x0, cfg.dt))
        }
        None => None,
    };
    let mut tx = Trajectory::with_capacity(d, cfg.dt, n, cfg.seed, path_index);
    let mut ty = Trajectory::with_capacity(d, cfg.dt, n, cfg.seed, path_index);
    let mut tp = splus
        .as_ref()
        .map(|_| Trajectory::with_capacity(d, cfg.dt, n, cfg.seed, path_index));
    if let (Some(t), Some(v)) = (tp.as_mut(), v_opt) {
        if !bounding_drift_admissible(v, &dm) {
            t.warnings
                .push("R^-1 v <= b violated: process does not dominate the RBM".into());
        }
    }
    tx.push(0.0, x0, None);
    ty.push(0.0, y0, None);
    if let Some(t) = tp.as_mut() {
        t.push(0.0, x0, None);
    }
    let mut gap = Vec::with_capacity(n + 1);
    gap.push(l1_dist(x0, y0));
    let mut xi = vec![0.0; d];
    for k in 1..=n {
        rng.fill_normal(&mut xi);
        let t = k as f64 * cfg.dt;
        sx.step(&xi)?;
        sy.step(&xi)?;
        tx.push(t, &sx.x, Some(&sx.dl));
        ty.push(t, &sy.x, Some(&sy.dl));
        if let (Some(s), Some(tr)) = (splus.as_mut(), tp.as_mut()) {
            s.step(&xi);
            tr.push(t, &s.x, Some(&s.dl));
        }
        gap.push(l1_dist(&sx.x, &sy.x));
    }
    Ok(CoupledRun {
        traj_x: tx,
        traj_y: ty,
        traj_plus: tp,
        v: v_opt.map(<[f64]>::to_vec),
        seed: cfg.seed,
        path_index,
        l1_gap: gap,
    })
}

/// Derives the model once for repeated simulation; fails unless (A1)-(A3) hold.
pub fn prepare(p: &ModelParams) -> Result<DerivedModel> {
    admissible(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive;

    fn rank2() -> ModelParams {
        let sigma = Mat::from_rows(&[vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        ModelParams::new(
            vec![-1.0, 0.0],
            sigma.sym_sqrt(),
            Mat::from_rows(&[vec![1.0, -0.5], vec![-0.5, 1.0]]).unwrap(),
        )
        .unwrap()
    }

    fn identity2() -> ModelParams {
        ModelParams::new(vec![-1.0, -1.0], Mat::identity(2), Mat::identity(2)).unwrap()
    }

    #[test]
    fn identity_reflection_clamps() {
        let dm = derive(&identity2()).unwrap();
        let s = skorokhod_step(&[-1.0, 2.0], &dm, 1e-12, 100).unwrap();
        assert_eq!(s.x, vec![0.0, 2.0]);
        assert_eq!(s.l, vec![1.0, 0.0]);
    }

    #[test]
    fn rank_based_hand_solve() {
        let dm = derive(&rank2()).unwrap();
        let s = skorokhod_step(&[-1.0, 0.0], &dm, 1e-12, 1000).unwrap();
        assert_eq!(s.x, vec![0.0, 0.0]);
        assert!((s.l[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((s.l[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn interior_point_untouched() {
        let dm = derive(&rank2()).unwrap();
        let s = skorokhod_step(&[0.3, 0.0], &dm, 1e-12, 1000).unwrap();
        assert_eq!(s.x, vec![0.3, 0.0]);
        assert_eq!(s.l, vec![0.0, 0.0]);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let dm = derive(&rank2()).unwrap();
        let e = skorokhod_step(&[-1.0, -1.0], &dm, 1e-12, 2).unwrap_err();
        assert!(matches!(e, RbmError::LcpConvergence { .. }));
    }

    #[test]
    fn degenerate_path_is_constant() {
        let p = ModelParams::new(vec![0.0, 0.0], Mat::zeros(2, 2), Mat::identity(2)).unwrap();
        let cfg = SimConfig::new(0.1, 2.0, 1, 5);
        let tr = simulate_rbm(&p, &[0.7, 1.5], &cfg, 0).unwrap();
        assert_eq!(tr.n_steps(), 20);
        for n in 0..=tr.n_steps() {
            assert_eq!(tr.state(n), &[0.7, 1.5]);
        }
        assert!(tr.dl.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn one_dim_matches_running_minimum() {
        let p = ModelParams::new(vec![-0.3], Mat::diag(&[1.2]), Mat::identity(1)).unwrap();
        let cfg = SimConfig::new(1e-2, 20.0, 1, 11);
        let x0 = 0.4;
        let tr = simulate_rbm(&p, &[x0], &cfg, 3).unwrap();
        // regenerate the free path from the same substream
        let mut rng = PathRng::new(11, 3);
        let mut w = x0;
        let mut running_min = x0.min(0.0);
        for n in 1..=tr.n_steps() {
            w += -0.3 * 1e-2 + 1.2 * (1e-2f64).sqrt() * rng.normal();
            running_min = running_min.min(w);
            let closed = w - running_min.min(0.0);
            assert!((tr.state(n)[0] - closed).abs() < 1e-12, "step {n}");
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let cfg = SimConfig::new(1e-2, 5.0, 1, 99);
        let a = simulate_rbm(&rank2(), &[0.1, 0.2], &cfg, 7).unwrap();
        let b = simulate_rbm(&rank2(), &[0.1, 0.2], &cfg, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn normal_rbm_equals_identity_rbm() {
        let v = [0.8, 1.3];
        let diff = Mat::from_rows(&[vec![1.0, 0.2], vec![0.0, 0.7]]).unwrap();
        let base = ModelParams::new(vec![-1.0, -1.0], diff.clone(), rank2().refl).unwrap();
        let ident = ModelParams::new(vec![-0.8, -1.3], diff, Mat::identity(2)).unwrap();
        let cfg = SimConfig::new(1e-2, 10.0, 1, 4);
        let a = simulate_normal_rbm(&v, &base, &[0.5, 0.0], &cfg, 2).unwrap();
        let b = simulate_rbm(&ident, &[0.5, 0.0], &cfg, 2).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn strong_drift_pins_to_zero() {
        let p = ModelParams::new(vec![-1.0], Mat::identity(1), Mat::identity(1)).unwrap();
        let v = 1e4;
        let cfg = SimConfig::new(1e-3, 1.0, 1, 1);
        let tr = simulate_normal_rbm(&[v], &p, &[0.0], &cfg, 0).unwrap();
        // one step can climb at most the noise; drift removes v dt = 10 per step
        let sup = tr.states.iter().cloned().fold(0.0, f64::max);
        assert!(sup <= 6.0 * (1e-3f64).sqrt(), "sup {sup}");
    }

    #[test]
    fn coupled_identical_starts_agree() {
        let cfg = SimConfig::new(1e-2, 5.0, 1, 3);
        let run = simulate_coupled(&rank2(), &[0.4, 0.1], &[0.4, 0.1], None, &cfg, 0).unwrap();
        assert_eq!(run.traj_x.states, run.traj_y.states);
        assert!(run.l1_gap.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = SimConfig::new(1e-10, 1e3, 1, 0);
        assert!(matches!(cfg.validate(), Err(RbmError::Config(_))));
        assert!(SimConfig::new(0.0, 1.0, 1, 0).validate().is_err());
    }

    #[test]
    fn grid_count_is_robust() {
        assert_eq!(SimConfig::new(1e-3, 20.0, 1, 0).n_steps(), 20_000);
        assert_eq!(SimConfig::new(0.1, 0.3, 1, 0).n_steps(), 3);
    }
}
