//! Closed-form convergence-rate functionals and the Wasserstein /
//! relaxation-time bounds built from them.
//!
//! The universal constants come from a deterministic cascade
//! `A -> C' -> C'' -> delta' -> (D1, t0)` seeded by the Lyapunov level `A`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, RbmError, Result};
use crate::linalg::{norm_inf, norm_l1};
use crate::model::DerivedModel;

/// Smallest Lyapunov level `A` for which the drift inequality holds.
pub const A0: f64 = 68.0;
/// `max{A0, 9}`
pub const D2: f64 = 68.0;

pub fn default_n_cap(d: usize) -> usize {
    10 * d * d + 100
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaFunctionals {
    #[serde(rename = "aTheta")]
    pub a_theta: f64,
    #[serde(rename = "bTheta")]
    pub b_theta: f64,
    #[serde(rename = "nR")]
    pub n_r: usize,
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeConstants {
    #[serde(rename = "A0")]
    pub a0: f64,
    #[serde(rename = "D2")]
    pub d2: f64,
    #[serde(rename = "Aused")]
    pub a_used: f64,
    #[serde(rename = "C1z")]
    pub c1z: f64,
    #[serde(rename = "C2z")]
    pub c2z: f64,
    #[serde(rename = "deltaP")]
    pub delta_p: f64,
    #[serde(rename = "D1")]
    pub d1: f64,
    pub t0: f64,
}

/// `sum_j (R^{-1})_{ij} sigma_j` for each row `i`.
fn weighted_row_sums(dm: &DerivedModel) -> Vec<f64> {
    (0..dm.d)
        .map(|i| dm.r_inv.row(i).iter().zip(&dm.sigma).map(|(r, s)| r * s).sum())
        .collect()
}

/// `||P^n 1||_inf` for `n = 0..=n_max`.
fn power_norms(dm: &DerivedModel, n_max: usize) -> Vec<f64> {
    let mut w = vec![1.0; dm.d];
    let mut next = vec![0.0; dm.d];
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(1.0);
    for _ in 0..n_max {
        dm.p_mat.matvec_into(&w, &mut next);
        std::mem::swap(&mut w, &mut next);
        out.push(norm_inf(&w));
    }
    out
}

/// Least `n >= 1` with `||P^n 1||_inf <= 1/2`.
pub fn contraction_coefficient(dm: &DerivedModel, n_cap: usize) -> Result<usize> {
    let mut w = vec![1.0; dm.d];
    let mut next = vec![0.0; dm.d];
    let mut tail = Vec::new();
    for n in 1..=n_cap {
        dm.p_mat.matvec_into(&w, &mut next);
        std::mem::swap(&mut w, &mut next);
        let norm = norm_inf(&w);
        if norm <= 0.5 {
            return Ok(n);
        }
        tail.push(norm);
        if tail.len() > 16 {
            tail.remove(0);
        }
    }
    Err(RbmError::ContractionNotFound { cap: n_cap, tail })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Prefactor `C` in `||P^n 1|| ~ C 2^{-n/n'}`.
    pub c: f64,
    pub n_prime: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    pub norms: Vec<f64>,
    pub fit: Option<DecayFit>,
    /// The sequence reached exactly zero (nilpotent `P`).
    pub exact_decay: bool,
}

/// `||P^n 1||_inf` for `n = 0..=n_max` and a log2-linear fit of its tail.
pub fn decay_profile(dm: &DerivedModel, n_max: usize) -> DecayProfile {
    let norms = power_norms(dm, n_max);
    let exact_decay = norms.iter().skip(1).any(|v| *v == 0.0);
    let pts: Vec<(f64, f64)> = norms
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 1e-12 && **v < 1.0)
        .map(|(n, v)| (n as f64, v.log2()))
        .collect();
    let fit = if pts.len() >= 2 {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        (slope < 0.0).then(|| DecayFit {
            c: (my - slope * mx).exp2(),
            n_prime: -1.0 / slope,
            points: pts.len(),
        })
    } else {
        None
    };
    DecayProfile {
        norms,
        fit,
        exact_decay,
    }
}

pub fn theta_functionals(dm: &DerivedModel) -> Result<ThetaFunctionals> {
    if let Some(i) = dm.b.iter().position(|b| !(*b > 0.0)) {
        return Err(RbmError::Unstable {
            index: i,
            value: dm.b[i],
        });
    }
    let rs = weighted_row_sums(dm);
    let a_theta = rs.iter().zip(&dm.b).map(|(r, b)| r / b).fold(f64::MIN, f64::max);
    let b_theta = rs.iter().zip(&dm.sigma).map(|(r, s)| r / s).fold(f64::MIN, f64::max);
    let n_r = contraction_coefficient(dm, default_n_cap(dm.d))?;
    let log2d = (2.0 * dm.d as f64).ln();
    Ok(ThetaFunctionals {
        a_theta,
        b_theta,
        n_r,
        r1: n_r as f64 * (1.0 + a_theta * a_theta * log2d),
        r2: a_theta * a_theta * b_theta,
    })
}

/// `Lambda(v)`, `phi(v)`, `M(v)` and `T(v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VFunctionals {
    pub lambda: f64,
    pub phi: f64,
    pub m: f64,
    pub t: f64,
}

pub fn lambda_phi(v: &[f64], dm: &DerivedModel) -> Result<VFunctionals> {
    check_len("v", dm.d, v.len())?;
    if v.iter().any(|x| !(*x > 0.0)) {
        return Err(RbmError::Input("v must be positive".into()));
    }
    let ratios: Vec<f64> = v.iter().zip(&dm.sigma).map(|(vi, s)| (vi / s).powi(2)).collect();
    let lambda = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let phi = 2.0 * ratios.iter().sum::<f64>() / lambda;
    let m = lambda + phi.ln();
    Ok(VFunctionals {
        lambda,
        phi,
        m,
        t: m / lambda,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalV {
    pub v_tilde: Vec<f64>,
    pub functionals: VFunctionals,
    /// `b - R^{-1} v_tilde`, nonnegative up to rounding.
    pub slack: Vec<f64>,
}

/// The bounding drift `v_i = sigma_i / a(Theta)` that maximizes both decay
/// rates simultaneously.
pub fn optimal_v(dm: &DerivedModel, tf: &ThetaFunctionals) -> Result<OptimalV> {
    let a = tf.a_theta;
    let v_tilde: Vec<f64> = dm.sigma.iter().map(|s| s / a).collect();
    let rv = dm.r_inv.matvec(&v_tilde);
    let slack: Vec<f64> = dm.b.iter().zip(&rv).map(|(b, r)| b - r).collect();
    if let Some(i) = slack.iter().position(|s| *s < -1e-9) {
        return Err(RbmError::Consistency(format!(
            "R^-1 v_tilde exceeds b at {i} by {}",
            -slack[i]
        )));
    }
    // v_tilde / sigma is the constant 1/a, so phi is exactly 2d
    let lambda = 1.0 / (a * a);
    let phi = 2.0 * dm.d as f64;
    let m = lambda + phi.ln();
    Ok(OptimalV {
        v_tilde,
        functionals: VFunctionals {
            lambda,
            phi,
            m,
            t: m / lambda,
        },
        slack,
    })
}

/// Cascade with `C' = max{2A, 8} + 1` and the largest admissible `delta'`.
pub fn constant_cascade(a_used: f64) -> Result<CascadeConstants> {
    if !(a_used >= A0) {
        return Err(RbmError::Precondition(format!(
            "Lyapunov level A = {a_used} is below A0 = {A0}"
        )));
    }
    let c1z = (2.0 * a_used).max(8.0) + 1.0;
    let c2z = 2.0 + (2.0 * c1z).max(33.0);
    let delta_p = (1.0 / (2.0 * c2z)).min(1.0 / (64.0 * c1z));
    Ok(CascadeConstants {
        a0: A0,
        d2: D2,
        a_used,
        c1z,
        c2z,
        delta_p,
        d1: delta_p / 128.0,
        t0: 4.0 / delta_p,
    })
}

/// `A = D2 b(Theta)`.
pub fn default_a_used(tf: &ThetaFunctionals) -> f64 {
    D2 * tf.b_theta
}

fn check_state(x: &[f64], d: usize) -> Result<()> {
    check_len("x", d, x.len())?;
    if x.iter().any(|v| !(*v >= 0.0)) {
        return Err(RbmError::Input("x must be nonnegative".into()));
    }
    Ok(())
}

/// `C1(x, Theta) = 2||x||_1 + a(Theta) sum_ij (R^-1)_ij sigma_j`.
pub fn c1x(dm: &DerivedModel, tf: &ThetaFunctionals, x: &[f64]) -> f64 {
    2.0 * norm_l1(x) + tf.a_theta * weighted_row_sums(dm).iter().sum::<f64>()
}

/// `C2(x, Theta, kappa)`.
pub fn c2x(dm: &DerivedModel, tf: &ThetaFunctionals, x: &[f64], kappa: f64) -> f64 {
    let d = dm.d as f64;
    let star = x.iter().zip(&dm.sigma).map(|(xi, s)| xi / s).fold(0.0, f64::max);
    let rinv_sq: f64 = dm.r_inv.as_slice().iter().map(|v| v * v).sum();
    let sig_sq: f64 = dm.sigma.iter().map(|s| s * s).sum();
    2.0 * norm_l1(x) * (3.0 * star / (kappa * tf.a_theta * tf.b_theta)).exp()
        + tf.a_theta * (2.0 * d * (1.0 + d) * rinv_sq * sig_sq).sqrt()
}

/// `t0 (1 + a(Theta)^2 log 2d)`.
pub fn t_min(dm: &DerivedModel, tf: &ThetaFunctionals, cascade: &CascadeConstants) -> f64 {
    cascade.t0 * (1.0 + tf.a_theta.powi(2) * (2.0 * dm.d as f64).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WassersteinBound {
    pub value: f64,
    pub valid: bool,
    /// `[2 C1 e^{-D1 t/R1}, C1 e^{-t/(16 A a^2)}, C2 e^{-t/(8 A a^2)}]`
    pub terms: [f64; 3],
}

/// Coupling bound on `E||X(t;x) - X(t;X(inf))||_1`.
///
/// Exponents are written with the cascade's `A`; at the default
/// `A = D2 b(Theta)` they equal `t/(16 D2 R2)` and `t/(8 D2 R2)`. The
/// stationary-moment step needs `A / b(Theta) >= 9`, which `valid` also checks.
pub fn wasserstein_bound(
    dm: &DerivedModel,
    tf: &ThetaFunctionals,
    cascade: &CascadeConstants,
    x: &[f64],
    t: f64,
) -> Result<WassersteinBound> {
    check_state(x, dm.d)?;
    let kappa = cascade.a_used / tf.b_theta;
    let c1 = c1x(dm, tf, x);
    let c2 = c2x(dm, tf, x, kappa);
    let a2 = tf.a_theta * tf.a_theta;
    let terms = [
        2.0 * c1 * (-cascade.d1 * t / tf.r1).exp(),
        c1 * (-t / (16.0 * cascade.a_used * a2)).exp(),
        c2 * (-t / (8.0 * cascade.a_used * a2)).exp(),
    ];
    Ok(WassersteinBound {
        value: terms.iter().sum(),
        valid: t >= t_min(dm, tf, cascade) && kappa >= 9.0,
        terms,
    })
}

/// Same bound with `n(R)` replaced by `n'` and the `C1` prefactor scaled by
/// `C(R,d)/2`, for models with `||P^n 1|| <= C(R,d) 2^{-n/n'}`.
pub fn wasserstein_bound_refined(
    dm: &DerivedModel,
    tf: &ThetaFunctionals,
    cascade: &CascadeConstants,
    x: &[f64],
    t: f64,
    c_rd: f64,
    n_prime: f64,
) -> Result<WassersteinBound> {
    check_state(x, dm.d)?;
    let kappa = cascade.a_used / tf.b_theta;
    let c1 = 2.0 * norm_l1(x) + 0.5 * tf.a_theta * c_rd * weighted_row_sums(dm).iter().sum::<f64>();
    let c2 = c2x(dm, tf, x, kappa);
    let a2 = tf.a_theta * tf.a_theta;
    let r1p = n_prime * (1.0 + a2 * (2.0 * dm.d as f64).ln());
    let terms = [
        2.0 * c1 * (-cascade.d1 * t / r1p).exp(),
        c1 * (-t / (16.0 * cascade.a_used * a2)).exp(),
        c2 * (-t / (8.0 * cascade.a_used * a2)).exp(),
    ];
    Ok(WassersteinBound {
        value: terms.iter().sum(),
        valid: t >= t_min(dm, tf, cascade) && kappa >= 9.0,
        terms,
    })
}

/// Bound on `E||X(t;x) - X(t;0)||_1` for a bounding drift `v`, valid for
/// `t >= t0 T(v)`.
pub fn coupling_bound(
    dm: &DerivedModel,
    v: &[f64],
    n_r: usize,
    cascade: &CascadeConstants,
    x: &[f64],
    t: f64,
) -> Result<WassersteinBound> {
    check_state(x, dm.d)?;
    let vf = lambda_phi(v, dm)?;
    let a = cascade.a_used;
    let x1 = norm_l1(x);
    let xv = crate::model::norm_inf_v(x, v, &dm.sigma);
    let terms = [
        4.0 * x1 * (-cascade.d1 * t / (n_r as f64 * vf.t)).exp(),
        2.0 * x1 * (-vf.lambda * t / (16.0 * a)).exp(),
        2.0 * x1 * (3.0 * xv / a).exp() * (-vf.lambda * t / (8.0 * a)).exp(),
    ];
    Ok(WassersteinBound {
        value: terms.iter().sum(),
        valid: t >= cascade.t0 * vf.t,
        terms,
    })
}

/// Upper bound on the time for `W1` to reach `1/2`.
pub fn relaxation_time_bound(
    dm: &DerivedModel,
    tf: &ThetaFunctionals,
    cascade: &CascadeConstants,
    x: &[f64],
) -> Result<f64> {
    check_state(x, dm.d)?;
    let kappa = cascade.a_used / tf.b_theta;
    let c1 = c1x(dm, tf, x);
    let c2 = c2x(dm, tf, x, kappa);
    let a2 = tf.a_theta * tf.a_theta;
    let first = tf.r1 / cascade.d1 * (8.0 * c1).ln()
        + 16.0 * cascade.a_used * a2 * (4.0 * (c1 + c2)).ln();
    Ok(first.max(t_min(dm, tf, cascade)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    #[serde(flatten)]
    pub functionals: ThetaFunctionals,
    #[serde(flatten)]
    pub cascade: CascadeConstants,
    #[serde(rename = "vTilde")]
    pub v_tilde: Vec<f64>,
    #[serde(rename = "lambdaV")]
    pub lambda_v: f64,
    #[serde(rename = "phiV")]
    pub phi_v: f64,
    #[serde(rename = "TV")]
    pub t_v: f64,
    #[serde(rename = "MV")]
    pub m_v: f64,
    #[serde(rename = "C1x")]
    pub c1x: f64,
    #[serde(rename = "C2x")]
    pub c2x: f64,
    #[serde(rename = "tMin")]
    pub t_min: f64,
    #[serde(rename = "tRelBound")]
    pub t_rel_bound: f64,
    pub notes: Vec<String>,
}

/// Every rate quantity for start `x`, with `A` defaulting to `D2 b(Theta)`.
pub fn bound_report(dm: &DerivedModel, x: &[f64], a_override: Option<f64>) -> Result<BoundReport> {
    let tf = theta_functionals(dm)?;
    let ov = optimal_v(dm, &tf)?;
    let a_used = a_override.unwrap_or_else(|| default_a_used(&tf));
    let cascade = constant_cascade(a_used)?;
    let kappa = a_used / tf.b_theta;
    let mut notes = vec![format!(
        "t0 and D1 follow the cascade at A = {a_used}; they are not dimension-free when A = D2 b(Theta) grows with the model"
    )];
    if kappa < 9.0 {
        notes.push(format!("A / b(Theta) = {kappa} < 9: bound flagged invalid"));
    }
    Ok(BoundReport {
        functionals: tf,
        cascade,
        v_tilde: ov.v_tilde,
        lambda_v: ov.functionals.lambda,
        phi_v: ov.functionals.phi,
        t_v: ov.functionals.t,
        m_v: ov.functionals.m,
        c1x: c1x(dm, &tf, x),
        c2x: c2x(dm, &tf, x, kappa),
        t_min: t_min(dm, &tf, &cascade),
        t_rel_bound: relaxation_time_bound(dm, &tf, &cascade, x)?,
        notes,
    })
}

/// Constants of the dimension-free class: `||1^T P^n||_inf <= kappa (1-beta)^n`,
/// `R^{-1} mu < -delta 1`, `1/sigma <= sigma_i <= sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcConstants {
    pub kappa: f64,
    pub beta: f64,
    pub delta: f64,
    pub sigma_bc: f64,
}

impl BcConstants {
    fn check(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(RbmError::Input(format!("beta = {} not in (0,1)", self.beta)));
        }
        if !(self.kappa > 0.0 && self.delta > 0.0 && self.sigma_bc > 0.0) {
            return Err(RbmError::Input("kappa, delta, sigma must be positive".into()));
        }
        Ok(())
    }

    /// `n' = log 2 / log (1-beta)^{-1} + 1`
    pub fn n_prime(&self) -> f64 {
        std::f64::consts::LN_2 / (1.0 / (1.0 - self.beta)).ln() + 1.0
    }

    /// Dimension-free bound on `b(Theta)`: `kappa sigma^2 / beta`.
    pub fn b_theta_cap(&self) -> f64 {
        self.kappa * self.sigma_bc.powi(2) / self.beta
    }
}

/// Cascade for the class at `A = D2 max{1, kappa sigma^2 / beta}`, an upper
/// bound on `D2 b(Theta)` that does not depend on `d`.
pub fn bc_cascade(bc: &BcConstants) -> Result<CascadeConstants> {
    bc.check()?;
    constant_cascade(D2 * bc.b_theta_cap().max(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcBound {
    pub value: f64,
    pub valid: bool,
    /// `[E1, E2, E3, E4]`
    pub e_consts: [f64; 4],
    pub t1: f64,
    pub n_prime: f64,
    /// `C(R, d) = kappa d`
    pub c_rd: f64,
    /// `[2(2||x|| + E1 d^2) e^{-E2 t/log 2d}, (4||x|| + E1 d^2) e^{-E4 t/2}, E3 d^2 e^{-E4 t}]`
    pub terms: [f64; 3],
    pub t_rel: f64,
}

pub fn bc_bound(
    dm: &DerivedModel,
    bc: &BcConstants,
    cascade: &CascadeConstants,
    x: &[f64],
    t: f64,
) -> Result<BcBound> {
    bc.check()?;
    check_state(x, dm.d)?;
    let BcConstants {
        kappa: k,
        beta: be,
        delta: de,
        sigma_bc: s,
    } = *bc;
    let d = dm.d as f64;
    let log2d = (2.0 * d).ln();
    let n_prime = bc.n_prime();
    let ratio = k * k * s * s / (be * be * de * de);
    let e1 = k.powi(3) * s * s / (2.0 * be * be * de);
    let e2 = cascade.d1 / (n_prime * (2.0 + ratio));
    let e3 = 2.0 * k * k * s * s / (be * be * de);
    let e4 = be.powi(3) * de * de / (8.0 * cascade.d2 * k.powi(3) * s.powi(4));
    let t1 = (cascade.t0 * (1.0 + ratio)).max(48.0 * k * s * s / (be * de));
    let x1 = norm_l1(x);
    let xinf = norm_inf(x);
    let terms = [
        2.0 * (2.0 * x1 + e1 * d * d) * (-e2 * t / log2d).exp(),
        (4.0 * x1 + e1 * d * d) * (-e4 * t / 2.0).exp(),
        e3 * d * d * (-e4 * t).exp(),
    ];
    let t_rel = (((8.0 * (2.0 * x1 + e1 * d * d)).ln() * log2d) / e2
        + (2.0 * (8.0 * (4.0 * x1 + e1 * d * d)).ln() + (8.0 * e3 * d * d).ln()) / e4)
        .max(t1 * xinf.max(log2d));
    Ok(BcBound {
        value: terms.iter().sum(),
        valid: t >= t1 * xinf.max(log2d),
        e_consts: [e1, e2, e3, e4],
        t1,
        n_prime,
        c_rd: k * d,
        terms,
        t_rel,
    })
}

/// Rank-based summary statistics: `a* = sup i(d+1-i)/b_i` (with `b` the
/// partial sums of centered rank drifts) and `sigma = max(sup s_i, sup 1/s_i)`
/// over the particle diffusion coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankStats {
    pub a_star: f64,
    pub sigma_cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankBound {
    pub value: f64,
    pub valid: bool,
    /// `[F1, F2, F3, F4]`
    pub f_consts: [f64; 4],
    pub t2: f64,
    pub terms: [f64; 3],
    pub t_rel: f64,
    /// `sigma a*`, the closed-form cap on `a(Theta)`.
    pub a_theta_cap: f64,
}

/// True when `R = I - P^T` with `P` the tridiagonal half-half matrix of a gap
/// process.
pub fn is_rank_based(dm: &DerivedModel) -> bool {
    let d = dm.d;
    (0..d).all(|i| {
        (0..d).all(|j| {
            let want = if i.abs_diff(j) == 1 { 0.5 } else { 0.0 };
            (dm.p_mat[(i, j)] - want).abs() < 1e-12
        })
    })
}

pub fn rank_bound(
    dm: &DerivedModel,
    stats: &RankStats,
    cascade: &CascadeConstants,
    y: &[f64],
    t: f64,
) -> Result<RankBound> {
    if !is_rank_based(dm) {
        return Err(RbmError::Input("reflection matrix is not of rank-based form".into()));
    }
    check_state(y, dm.d)?;
    let RankStats {
        a_star: a,
        sigma_cap: s,
    } = *stats;
    if !(a > 0.0 && s > 0.0) {
        return Err(RbmError::Input("a* and sigma must be positive".into()));
    }
    let d = dm.d as f64;
    let log2d = (2.0 * d).ln();
    let (f1, f2, f3, f4) = (1.0, cascade.d1 / 2.0, 4.0, 1.0 / (2.0 * cascade.d2));
    let t2 = cascade.t0.max(48.0);
    let y1 = norm_l1(y);
    let yinf = norm_inf(y);
    let s2 = s * s;
    let rate_scale = d * d * (1.0 + s2 * a * a * log2d);
    let slow = s2 * s2 * a * a * (d + 1.0).powi(2);
    let pref = f1 * s2 * a * d.powi(3);
    let terms = [
        2.0 * (2.0 * y1 + pref) * (-f2 * t / rate_scale).exp(),
        (4.0 * y1 + pref) * (-f4 * t / (2.0 * slow)).exp(),
        f3 * s2 * a * d.powf(3.5) * (-f4 * t / slow).exp(),
    ];
    let threshold = t2 * (s2 * a * yinf).max(1.0 + s2 * a * a * log2d);
    let t_rel = (rate_scale / f2 * (8.0 * (2.0 * y1 + pref)).ln()
        + slow / f4 * (2.0 * (8.0 * (4.0 * y1 + pref)).ln() + (8.0 * f3 * s2 * a * d.powf(3.5)).ln()))
    .max(threshold);
    Ok(RankBound {
        value: terms.iter().sum(),
        valid: t >= threshold,
        f_consts: [f1, f2, f3, f4],
        t2,
        terms,
        t_rel,
        a_theta_cap: s * a,
    })
}

/// `h(u) = u^4 - 3u^3 + 3u^2` glued to the identity at `log 2`.
pub fn g(u: f64) -> f64 {
    let l = std::f64::consts::LN_2;
    if u <= l {
        let s = u / l;
        l * s * s * (s * s - 3.0 * s + 3.0)
    } else {
        u
    }
}

pub fn g_prime(u: f64) -> f64 {
    let l = std::f64::consts::LN_2;
    if u <= l {
        let s = u / l;
        s * (4.0 * s * s - 9.0 * s + 6.0)
    } else {
        1.0
    }
}

pub fn g_second(u: f64) -> f64 {
    let l = std::f64::consts::LN_2;
    if u <= l {
        let s = u / l;
        (12.0 * s * s - 18.0 * s + 6.0) / l
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Row-major `d x d`.
    pub hessian: Vec<f64>,
    /// `-v.grad V + Tr(Sigma hess V)/2 + grad V^T Sigma grad V / 2`
    pub drift: f64,
}

/// `V(y) = log sum_i exp(g(2 v_i y_i / (A sigma_i^2)))` with its analytic
/// derivatives and generator drift for the bounding process.
pub fn lyapunov(y: &[f64], v: &[f64], dm: &DerivedModel, a_used: f64) -> Result<LyapunovEval> {
    let d = dm.d;
    check_len("y", d, y.len())?;
    check_len("v", d, v.len())?;
    if !(a_used >= A0) {
        return Err(RbmError::Precondition(format!("A = {a_used} below A0 = {A0}")));
    }
    let c: Vec<f64> = (0..d)
        .map(|i| 2.0 * v[i] / (a_used * dm.sigma[i] * dm.sigma[i]))
        .collect();
    let u: Vec<f64> = y.iter().zip(&c).map(|(yi, ci)| ci * yi).collect();
    let gu: Vec<f64> = u.iter().map(|&x| g(x)).collect();
    let top = gu.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = gu.iter().map(|x| (x - top).exp()).collect();
    let total: f64 = e.iter().sum();
    let w: Vec<f64> = e.iter().map(|x| x / total).collect();
    let value = top + total.ln();
    let gp: Vec<f64> = u.iter().map(|&x| g_prime(x)).collect();
    let gradient: Vec<f64> = (0..d).map(|i| w[i] * gp[i] * c[i]).collect();
    let mut hessian = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            hessian[i * d + j] = -gradient[i] * gradient[j];
        }
        hessian[i * d + i] += w[i] * (g_second(u[i]) + gp[i] * gp[i]) * c[i] * c[i];
    }
    let s = &dm.sigma_mat;
    let mut trace = 0.0;
    let mut quad = 0.0;
    for i in 0..d {
        for j in 0..d {
            trace += s[(i, j)] * hessian[j * d + i];
            quad += gradient[i] * s[(i, j)] * gradient[j];
        }
    }
    let vgrad: f64 = v.iter().zip(&gradient).map(|(a, b)| a * b).sum();
    Ok(LyapunovEval {
        value,
        gradient,
        hessian,
        drift: -vgrad + 0.5 * trace + 0.5 * quad,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupBound {
    pub value: f64,
    /// The bound covers starts in `[0, A/2]`.
    pub start_range: (f64, f64),
}

/// Bound on `P(sup_{t <= T} X_t >= A)` for a 1D reflected Brownian motion with
/// drift `-mu'` and volatility `sigma'`.
pub fn rbm_sup_bound(mu_p: f64, sigma_p: f64, a_level: f64, horizon: f64) -> Result<SupBound> {
    if !(mu_p > 0.0 && sigma_p > 0.0 && a_level > 0.0 && horizon > 0.0) {
        return Err(RbmError::Input("all parameters must be positive".into()));
    }
    let s2 = sigma_p * sigma_p;
    let value = (-mu_p * mu_p * horizon / (2.0 * s2)).exp()
        + (4.0 * mu_p * horizon / a_level + 2.0) * (-a_level * mu_p / s2).exp();
    Ok(SupBound {
        value,
        start_range: (0.0, a_level / 2.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::model::{derive, ModelParams};

    fn rank_model(d: usize) -> DerivedModel {
        let mut r = Mat::identity(d);
        for i in 0..d.saturating_sub(1) {
            r[(i, i + 1)] = -0.5;
            r[(i + 1, i)] = -0.5;
        }
        let mut mu = vec![0.0; d];
        mu[0] = -1.0;
        let mut s = Mat::zeros(d, d);
        for i in 0..d {
            s[(i, i)] = 2.0;
            if i + 1 < d {
                s[(i, i + 1)] = -1.0;
                s[(i + 1, i)] = -1.0;
            }
        }
        derive(&ModelParams::new(mu, s.sym_sqrt(), r).unwrap()).unwrap()
    }

    fn scalar() -> DerivedModel {
        derive(&ModelParams::new(vec![-1.0], Mat::identity(1), Mat::identity(1)).unwrap()).unwrap()
    }

    #[test]
    fn contraction_small_cases() {
        assert_eq!(contraction_coefficient(&scalar(), 10).unwrap(), 1);
        assert_eq!(contraction_coefficient(&rank_model(2), 10).unwrap(), 1);
        assert_eq!(contraction_coefficient(&rank_model(3), 10).unwrap(), 2);
        assert!(matches!(
            contraction_coefficient(&rank_model(30), 3),
            Err(RbmError::ContractionNotFound { cap: 3, .. })
        ));
    }

    #[test]
    fn decay_profile_cases() {
        let z = decay_profile(&scalar(), 5);
        assert_eq!(z.norms[..2], [1.0, 0.0]);
        assert!(z.exact_decay && z.fit.is_none());
        let r3 = decay_profile(&rank_model(3), 6);
        assert_eq!(r3.norms[..3], [1.0, 1.0, 0.5]);
        // rank-2: column sums 1/2 -> n' = 1 <= 2
        let r2 = decay_profile(&rank_model(2), 20);
        let fit = r2.fit.unwrap();
        assert!((fit.n_prime - 1.0).abs() < 1e-9 && fit.n_prime <= 2.0);
    }

    #[test]
    fn functionals_scalar() {
        let tf = theta_functionals(&scalar()).unwrap();
        assert_eq!(tf.a_theta, 1.0);
        assert_eq!(tf.b_theta, 1.0);
        assert_eq!(tf.n_r, 1);
        assert!((tf.r1 - (1.0 + 2f64.ln())).abs() < 1e-15);
        assert_eq!(tf.r2, 1.0);
    }

    #[test]
    fn functionals_rank2() {
        let dm = rank_model(2);
        let tf = theta_functionals(&dm).unwrap();
        assert!((tf.a_theta - 3.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((tf.b_theta - 2.0).abs() < 1e-12);
        // a* bound with sigma = 1: d(d+1) = 6
        assert!(tf.a_theta <= 6.0);
        assert!((tf.r1 - tf.n_r as f64 * (1.0 + tf.a_theta.powi(2) * 4f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn unstable_model_rejected() {
        let dm = derive(&ModelParams::new(vec![1.0], Mat::identity(1), Mat::identity(1)).unwrap()).unwrap();
        assert!(matches!(theta_functionals(&dm), Err(RbmError::Unstable { .. })));
    }

    #[test]
    fn optimal_v_cases() {
        let dm = scalar();
        let ov = optimal_v(&dm, &theta_functionals(&dm).unwrap()).unwrap();
        assert_eq!(ov.v_tilde, vec![1.0]);
        assert_eq!(ov.functionals.lambda, 1.0);
        assert_eq!(ov.functionals.phi, 2.0);
        assert!((ov.functionals.t - (1.0 + 2f64.ln())).abs() < 1e-15);

        let dm = rank_model(2);
        let ov = optimal_v(&dm, &theta_functionals(&dm).unwrap()).unwrap();
        for v in &ov.v_tilde {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!((ov.functionals.lambda - 1.0 / 18.0).abs() < 1e-12);
        assert_eq!(ov.functionals.phi, 4.0);
        assert!((ov.functionals.t - (1.0 + 18.0 * 4f64.ln())).abs() < 1e-10);
        let lp = lambda_phi(&ov.v_tilde, &dm).unwrap();
        assert!((lp.phi - 4.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_phi_hand_case() {
        let dm = derive(&ModelParams::new(vec![-1.0, -1.0], Mat::identity(2), Mat::identity(2)).unwrap()).unwrap();
        let f = lambda_phi(&[1.0, 2.0], &dm).unwrap();
        assert_eq!(f.lambda, 1.0);
        assert_eq!(f.phi, 10.0);
        assert!((f.m - (1.0 + 10f64.ln())).abs() < 1e-15);
        let eq = lambda_phi(&[1.0, 1.0], &dm).unwrap();
        assert_eq!(eq.phi, 4.0);
    }

    #[test]
    fn cascade_values() {
        let c = constant_cascade(68.0).unwrap();
        assert_eq!((c.c1z, c.c2z), (137.0, 276.0));
        assert_eq!(c.delta_p, 1.0 / 8768.0);
        assert_eq!(c.d1, 1.0 / 1_122_304.0);
        assert_eq!(c.t0, 35072.0);
        let c = constant_cascade(136.0).unwrap();
        assert_eq!((c.c1z, c.c2z), (273.0, 548.0));
        assert_eq!(c.delta_p, 1.0 / 17472.0);
        assert!(matches!(constant_cascade(67.9), Err(RbmError::Precondition(_))));
    }

    #[test]
    fn cascade_invariants() {
        for a in [68.0, 100.0, 1e3, 1e6] {
            let c = constant_cascade(a).unwrap();
            assert!(c.c1z > (2.0 * a).max(8.0));
            assert_eq!(c.c2z, 2.0 + (2.0 * c.c1z).max(33.0));
            assert!(c.delta_p <= (1.0 / (2.0 * c.c2z)).min(1.0 / (64.0 * c.c1z)));
        }
    }

    #[test]
    fn c1_at_origin_rank2() {
        let dm = rank_model(2);
        let tf = theta_functionals(&dm).unwrap();
        assert!((c1x(&dm, &tf, &[0.0, 0.0]) - 24.0).abs() < 1e-12);
    }

    #[test]
    fn bound_flags_and_monotonicity() {
        let dm = rank_model(2);
        let tf = theta_functionals(&dm).unwrap();
        let cas = constant_cascade(default_a_used(&tf)).unwrap();
        let tm = t_min(&dm, &tf, &cas);
        let below = wasserstein_bound(&dm, &tf, &cas, &[1.0, 0.5], tm / 2.0).unwrap();
        assert!(!below.valid && below.value.is_finite());
        let at = wasserstein_bound(&dm, &tf, &cas, &[1.0, 0.5], tm).unwrap();
        let later = wasserstein_bound(&dm, &tf, &cas, &[1.0, 0.5], 2.0 * tm).unwrap();
        assert!(at.valid && later.valid);
        assert!(later.value <= at.value);
        let tr = relaxation_time_bound(&dm, &tf, &cas, &[0.0, 0.0]).unwrap();
        assert!(tr >= tm && tr.is_finite());
    }

    #[test]
    fn bc_constants_example() {
        let dm = rank_model(2);
        let bc = BcConstants {
            kappa: 1.0,
            beta: 0.5,
            delta: 1.0,
            sigma_bc: 1.0,
        };
        let cas = constant_cascade(68.0).unwrap();
        let r = bc_bound(&dm, &bc, &cas, &[0.0, 0.0], 1e9).unwrap();
        assert!((r.n_prime - 2.0).abs() < 1e-15);
        assert_eq!(r.e_consts[0], 2.0);
        assert_eq!(r.e_consts[2], 8.0);
        assert!((r.e_consts[3] - 1.0 / 4352.0).abs() < 1e-18);
        assert_eq!(r.c_rd, 2.0);
        let bad = BcConstants { beta: 1.0, ..bc };
        assert!(bc_bound(&dm, &bad, &cas, &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn rank_bound_constants_and_rejection() {
        let dm = rank_model(2);
        let cas = constant_cascade(68.0).unwrap();
        let stats = RankStats {
            a_star: 6.0,
            sigma_cap: 1.0,
        };
        let r = rank_bound(&dm, &stats, &cas, &[0.0, 0.0], 1e8).unwrap();
        assert_eq!(r.f_consts[1], cas.d1 / 2.0);
        assert_eq!(r.f_consts[3], 1.0 / (2.0 * D2));
        assert_eq!(r.t2, cas.t0);
        let other = derive(
            &ModelParams::new(vec![-1.0, -1.0], Mat::identity(2), Mat::identity(2)).unwrap(),
        )
        .unwrap();
        assert!(rank_bound(&other, &stats, &cas, &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn g_is_c2_at_glue_point() {
        let l = std::f64::consts::LN_2;
        let (lo, hi) = (l * (1.0 - 1e-12), l * (1.0 + 1e-12));
        assert!((g(l) - l).abs() < 1e-15);
        assert!((g(lo) - g(hi)).abs() < 1e-10);
        assert!((g_prime(lo) - g_prime(hi)).abs() < 1e-10);
        assert!((g_second(lo) - g_second(hi)).abs() < 1e-10);
        assert_eq!(g(0.0), 0.0);
        assert_eq!(g_prime(0.0), 0.0);
    }

    #[test]
    fn lyapunov_at_origin() {
        let dm = rank_model(3);
        let e = lyapunov(&[0.0; 3], &[0.1, 0.2, 0.3], &dm, 68.0).unwrap();
        assert!((e.value - 3f64.ln()).abs() < 1e-15);
        assert!(lyapunov(&[0.0; 3], &[0.1, 0.2, 0.3], &dm, 10.0).is_err());
    }

    #[test]
    fn sup_bound_example() {
        let b = rbm_sup_bound(1.0, 1.0, 10.0, 10.0).unwrap();
        let expect = (-5f64).exp() + 6.0 * (-10f64).exp();
        assert!((b.value - expect).abs() < 1e-15);
        assert!((b.value - 0.0070098).abs() < 1e-6);
        assert_eq!(b.start_range, (0.0, 5.0));
        assert!(rbm_sup_bound(1.0, 1.0, 0.1, 10.0).unwrap().value > 1.0);
        assert!(rbm_sup_bound(1.0, 1.0, 200.0, 10.0).unwrap().value < 1e-2);
    }
}
