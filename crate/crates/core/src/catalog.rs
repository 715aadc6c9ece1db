//! Model families: rank-based gap processes (Atlas and friends) and a
//! dimension-free Blanchet–Chen style family, plus product-form stationary laws.

use serde::{Deserialize, Serialize};

use crate::bounds::{BcConstants, RankStats};
use crate::error::{RbmError, Result};
use crate::linalg::Mat;
use crate::model::{derive, ModelParams};
use crate::rng::PathRng;

/// Per-rank drifts and diffusion coefficients of `d+1` particles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankBasedSpec {
    pub deltas: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl RankBasedSpec {
    pub fn new(deltas: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        let s = Self { deltas, sigmas };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.deltas.len() != self.sigmas.len() {
            return Err(RbmError::Input(format!(
                "deltas has {} entries, sigmas has {}",
                self.deltas.len(),
                self.sigmas.len()
            )));
        }
        if self.deltas.len() < 2 {
            return Err(RbmError::Input("need at least two particles".into()));
        }
        if self.deltas.iter().any(|v| !v.is_finite()) {
            return Err(RbmError::Input("deltas must be finite".into()));
        }
        if self.sigmas.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(RbmError::Input("sigmas must be finite and positive".into()));
        }
        Ok(())
    }

    /// Gap dimension `d = particles - 1`.
    pub fn dim(&self) -> usize {
        self.deltas.len() - 1
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Unit drift on the lowest-ranked particle, unit diffusions.
pub fn atlas_spec(n_particles: usize) -> Result<RankBasedSpec> {
    if n_particles < 2 {
        return Err(RbmError::Input(format!(
            "Atlas model needs at least 2 particles, got {n_particles}"
        )));
    }
    let mut deltas = vec![0.0; n_particles];
    deltas[0] = 1.0;
    RankBasedSpec::new(deltas, vec![1.0; n_particles])
}

/// Parses `atlas:<n>`; returns `None` for anything else.
pub fn parse_atlas_shorthand(s: &str) -> Option<Result<RankBasedSpec>> {
    let rest = s.strip_prefix("atlas:")?;
    Some(
        rest.trim()
            .parse::<usize>()
            .map_err(|_| RbmError::Input(format!("bad particle count in '{s}'")))
            .and_then(atlas_spec),
    )
}

/// Gap-process reflection matrix `R = I - P^T`, `P` tridiagonal with halves.
pub fn rank_reflection(d: usize) -> Mat {
    let mut r = Mat::identity(d);
    for i in 0..d.saturating_sub(1) {
        r[(i, i + 1)] = -0.5;
        r[(i + 1, i)] = -0.5;
    }
    r
}

/// Closed-form inverse of [`rank_reflection`].
pub fn rank_reflection_inverse(d: usize) -> Mat {
    let mut m = Mat::zeros(d, d);
    let n = (d + 1) as f64;
    for i in 0..d {
        for j in 0..d {
            let (lo, hi) = if j <= i { (j, i) } else { (i, j) };
            m[(i, j)] = 2.0 * (lo + 1) as f64 * (n - (hi + 1) as f64) / n;
        }
    }
    m
}

pub fn gap_covariance(spec: &RankBasedSpec) -> Mat {
    let d = spec.dim();
    let s2: Vec<f64> = spec.sigmas.iter().map(|s| s * s).collect();
    let mut sig = Mat::zeros(d, d);
    for i in 0..d {
        sig[(i, i)] = s2[i] + s2[i + 1];
        if i + 1 < d {
            sig[(i, i + 1)] = -s2[i + 1];
            sig[(i + 1, i)] = -s2[i + 1];
        }
    }
    sig
}

/// Gap-process RBM of a rank-based system.
pub fn rank_based_params(spec: &RankBasedSpec) -> Result<ModelParams> {
    spec.validate()?;
    let d = spec.dim();
    let mu: Vec<f64> = (0..d).map(|i| spec.deltas[i + 1] - spec.deltas[i]).collect();
    ModelParams::new(mu, gap_covariance(spec).sym_sqrt(), rank_reflection(d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Partial sums of centered rank drifts.
    pub b_atlas: Vec<f64>,
    /// `-R^{-1} mu` of the gap process; equals `2 b_atlas`.
    pub b_sde: Vec<f64>,
    pub stable: bool,
}

pub fn stability_b(spec: &RankBasedSpec) -> Result<StabilityReport> {
    spec.validate()?;
    let d = spec.dim();
    let mean = spec.deltas.iter().sum::<f64>() / spec.deltas.len() as f64;
    let mut acc = 0.0;
    let b_atlas: Vec<f64> = spec.deltas[..d]
        .iter()
        .map(|x| {
            acc += x - mean;
            acc
        })
        .collect();
    let mu: Vec<f64> = (0..d).map(|i| spec.deltas[i + 1] - spec.deltas[i]).collect();
    let b_sde: Vec<f64> = rank_reflection_inverse(d).matvec(&mu).iter().map(|v| -v).collect();
    let scale = 1.0 + spec.deltas.iter().fold(0.0f64, |m, v| m.max(v.abs())) * (d * d) as f64;
    for (k, (s, a)) in b_sde.iter().zip(&b_atlas).enumerate() {
        if (s - 2.0 * a).abs() > 1e-10 * scale {
            return Err(RbmError::Consistency(format!(
                "b_sde[{k}] = {s} differs from 2 b_atlas[{k}] = {}",
                2.0 * a
            )));
        }
    }
    let stable = b_atlas.iter().all(|v| *v > 0.0);
    Ok(StabilityReport {
        b_atlas,
        b_sde,
        stable,
    })
}

/// `a*` and the diffusion cap used by the rank-based bound.
pub fn rank_stats(spec: &RankBasedSpec) -> Result<RankStats> {
    let st = stability_b(spec)?;
    if let Some(i) = st.b_atlas.iter().position(|v| !(*v > 0.0)) {
        return Err(RbmError::Unstable {
            index: i,
            value: st.b_atlas[i],
        });
    }
    let d = spec.dim();
    let a_star = st
        .b_atlas
        .iter()
        .enumerate()
        .map(|(k, b)| ((k + 1) * (d - k)) as f64 / b)
        .fold(f64::MIN, f64::max);
    let sigma_cap = spec
        .sigmas
        .iter()
        .fold(0.0f64, |m, s| m.max(*s).max(1.0 / s));
    Ok(RankStats { a_star, sigma_cap })
}

/// Product of exponentials for the gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryLaw {
    pub rates: Vec<f64>,
    pub skew_ok: bool,
    pub b_atlas: Vec<f64>,
    pub b_sde: Vec<f64>,
}

impl StationaryLaw {
    pub fn means(&self) -> Vec<f64> {
        self.rates.iter().map(|r| 1.0 / r).collect()
    }

    pub fn sample_into(&self, rng: &mut PathRng, out: &mut [f64]) {
        for (o, r) in out.iter_mut().zip(&self.rates) {
            *o = rng.exponential(*r);
        }
    }

    pub fn sample(&self, rng: &mut PathRng) -> Vec<f64> {
        let mut out = vec![0.0; self.rates.len()];
        self.sample_into(rng, &mut out);
        out
    }

    /// Marginal CDF of coordinate `k`.
    pub fn cdf(&self, k: usize, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            1.0 - (-self.rates[k] * x).exp()
        }
    }
}

/// Squared diffusions in arithmetic progression.
pub fn skew_condition(spec: &RankBasedSpec) -> bool {
    let s2: Vec<f64> = spec.sigmas.iter().map(|s| s * s).collect();
    let step = s2[1] - s2[0];
    let scale = s2.iter().fold(1.0f64, |m, v| m.max(*v));
    s2.windows(2).all(|w| ((w[1] - w[0]) - step).abs() <= 1e-12 * scale)
}

/// Rates `2 b_sde,k / (s_k^2 + s_{k+1}^2)` with `b_sde = -R^{-1} mu`.
pub fn stationary_gap_law(spec: &RankBasedSpec) -> Result<StationaryLaw> {
    let st = stability_b(spec)?;
    if !skew_condition(spec) {
        return Err(RbmError::NoProductForm(
            "no product-form stationary law available: squared diffusions are not in arithmetic progression".into(),
        ));
    }
    if !st.stable {
        let i = st.b_atlas.iter().position(|v| !(*v > 0.0)).unwrap_or(0);
        return Err(RbmError::Unstable {
            index: i,
            value: st.b_atlas[i],
        });
    }
    let rates = (0..spec.dim())
        .map(|k| {
            2.0 * st.b_sde[k] / (spec.sigmas[k].powi(2) + spec.sigmas[k + 1].powi(2))
        })
        .collect();
    Ok(StationaryLaw {
        rates,
        skew_ok: true,
        b_atlas: st.b_atlas,
        b_sde: st.b_sde,
    })
}

pub const DEFAULT_BC_CHECK_N: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcCheckReport {
    pub bc1_pass: bool,
    /// First `n` with `||1^T P^n||_inf > kappa (1-beta)^n`.
    pub bc1_first_violation: Option<usize>,
    pub bc2_pass: bool,
    /// First coordinate with `(R^{-1} mu)_i >= -delta`.
    pub bc2_first_violation: Option<usize>,
    pub bc3_pass: bool,
    pub bc3_first_violation: Option<usize>,
    /// `||1^T P^n||_inf` for `n = 0..=n_check`.
    pub column_norms: Vec<f64>,
    /// Tightest geometric envelope `(kappa, beta)` fitted to the column norms.
    pub fitted: Option<(f64, f64)>,
}

impl BcCheckReport {
    pub fn passes(&self) -> bool {
        self.bc1_pass && self.bc2_pass && self.bc3_pass
    }
}

fn geometric_envelope(norms: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = norms
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, v)| **v > 1e-300)
        .map(|(n, v)| (n as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    if slope >= 0.0 {
        return None;
    }
    let ratio = slope.exp();
    let kappa = norms
        .iter()
        .enumerate()
        .map(|(n, v)| v / ratio.powi(n as i32))
        .fold(0.0f64, f64::max);
    Some((kappa, 1.0 - ratio))
}

/// Checks class membership; the column-norm condition only up to `n_check`.
pub fn bc_class_check(p: &ModelParams, bc: &BcConstants, n_check: usize) -> Result<BcCheckReport> {
    if n_check < 1 {
        return Err(RbmError::Input("n_check must be at least 1".into()));
    }
    let d = p.d;
    let pm = p.p_mat();
    let pt = pm.transpose();
    // ||1^T P^n||_inf = ||(P^T)^n 1||_inf
    let mut w = vec![1.0; d];
    let mut next = vec![0.0; d];
    let mut column_norms = vec![1.0];
    let mut bc1_first_violation = (1.0 > bc.kappa).then_some(0);
    for n in 1..=n_check {
        pt.matvec_into(&w, &mut next);
        std::mem::swap(&mut w, &mut next);
        let norm = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        column_norms.push(norm);
        if bc1_first_violation.is_none() && norm > bc.kappa * (1.0 - bc.beta).powi(n as i32) * (1.0 + 1e-12) {
            bc1_first_violation = Some(n);
        }
    }
    let r_inv = p
        .refl
        .inverse()
        .ok_or(RbmError::Singular { name: "R", cond: f64::INFINITY })?;
    let drift = r_inv.matvec(&p.mu);
    let bc2_first_violation = drift.iter().position(|v| !(*v < -bc.delta));
    let sigma = p.sigma_mat();
    let bc3_first_violation = (0..d).position(|i| {
        let s = sigma[(i, i)].sqrt();
        !(s >= 1.0 / bc.sigma_bc && s <= bc.sigma_bc)
    });
    Ok(BcCheckReport {
        bc1_pass: bc1_first_violation.is_none(),
        bc1_first_violation,
        bc2_pass: bc2_first_violation.is_none(),
        bc2_first_violation,
        bc3_pass: bc3_first_violation.is_none(),
        bc3_first_violation,
        fitted: geometric_envelope(&column_norms),
        column_norms,
    })
}

/// Tandem-style class member in any dimension: each coordinate reflects half
/// into the next, `R^{-1} mu = -1`, `D = I`. Constants `(1, 1/2, 1/2, 1)`.
pub fn bc_example(d: usize) -> Result<(ModelParams, BcConstants)> {
    if d == 0 {
        return Err(RbmError::Input("dimension must be positive".into()));
    }
    let mut r = Mat::identity(d);
    for i in 0..d - 1 {
        r[(i + 1, i)] = -0.5;
    }
    let mu: Vec<f64> = r.matvec(&vec![1.0; d]).iter().map(|v| -v).collect();
    let p = ModelParams::new(mu, Mat::identity(d), r)?;
    Ok((
        p,
        BcConstants {
            kappa: 1.0,
            beta: 0.5,
            delta: 0.5,
            sigma_bc: 1.0,
        },
    ))
}

/// Random model satisfying the standing assumptions: nonnegative `P` with row
/// sums in `[0.2, 0.9]`, `b` in `[0.5, 1.5]`, lower-triangular `D` with a
/// dominant diagonal.
pub fn random_admissible(d: usize, seed: u64) -> Result<ModelParams> {
    if d == 0 {
        return Err(RbmError::Input("dimension must be positive".into()));
    }
    let mut rng = PathRng::auxiliary(seed, d as u64);
    let mut pm = Mat::zeros(d, d);
    for i in 0..d {
        if d == 1 {
            pm[(0, 0)] = 0.5 * rng.uniform();
            continue;
        }
        let raw: Vec<f64> = (0..d).map(|j| if j == i { 0.0 } else { rng.uniform() }).collect();
        let total: f64 = raw.iter().sum();
        let target = 0.2 + 0.7 * rng.uniform();
        for j in 0..d {
            pm[(i, j)] = raw[j] / total * target;
        }
    }
    let refl = Mat::identity(d).sub(&pm.transpose());
    let b: Vec<f64> = (0..d).map(|_| 0.5 + rng.uniform()).collect();
    let mu: Vec<f64> = refl.matvec(&b).iter().map(|v| -v).collect();
    let mut diff = Mat::zeros(d, d);
    for i in 0..d {
        diff[(i, i)] = 0.5 + rng.uniform();
        for j in 0..i {
            diff[(i, j)] = 0.3 * (rng.uniform() - 0.5) / d as f64;
        }
    }
    let p = ModelParams::new(mu, diff, refl)?;
    derive(&p)?;
    Ok(p)
}
