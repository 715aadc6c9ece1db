//! Model parameters `(mu, D, R)`, admissibility checks and derived quantities.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, RbmError, Result};
use crate::linalg::Mat;

/// Pivot threshold for the positive-definiteness factorization of `Sigma`.
pub const PD_PIVOT_TOL: f64 = 1e-12;
/// Reflection matrices with a larger condition estimate are rejected.
pub const MAX_CONDITION: f64 = 1e14;
pub const POWER_ITER_CAP: usize = 10_000;
pub const POWER_ITER_TOL: f64 = 1e-12;

/// Drift `mu`, diffusion factor `D` and reflection matrix `R` of an RBM in
/// the nonnegative orthant of dimension `d`.
///
/// Serialized as `{"d": .., "mu": [..], "D": [[..]..], "R": [[..]..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelJson", into = "ModelJson")]
pub struct ModelParams {
    pub d: usize,
    pub mu: Vec<f64>,
    pub diff: Mat,
    pub refl: Mat,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelJson {
    d: usize,
    mu: Vec<f64>,
    #[serde(rename = "D")]
    diff: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    refl: Vec<Vec<f64>>,
}

impl TryFrom<ModelJson> for ModelParams {
    type Error = RbmError;
    fn try_from(m: ModelJson) -> Result<Self> {
        ModelParams::new(m.mu, Mat::from_rows(&m.diff)?, Mat::from_rows(&m.refl)?)
            .and_then(|p| {
                check_len("d", p.d, m.d)?;
                Ok(p)
            })
    }
}

impl From<ModelParams> for ModelJson {
    fn from(p: ModelParams) -> Self {
        ModelJson {
            d: p.d,
            mu: p.mu,
            diff: p.diff.to_rows(),
            refl: p.refl.to_rows(),
        }
    }
}

impl ModelParams {
    /// Checks shapes and finiteness; admissibility is [`validate_params`]'s job.
    pub fn new(mu: Vec<f64>, diff: Mat, refl: Mat) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(RbmError::Input("dimension must be at least 1".into()));
        }
        if !diff.is_square() || diff.rows() != d {
            return Err(RbmError::Dimension {
                what: "D side",
                expected: d,
                got: diff.rows().max(diff.cols()),
            });
        }
        if !refl.is_square() || refl.rows() != d {
            return Err(RbmError::Dimension {
                what: "R side",
                expected: d,
                got: refl.rows().max(refl.cols()),
            });
        }
        if !mu.iter().all(|v| v.is_finite()) || !diff.all_finite() || !refl.all_finite() {
            return Err(RbmError::Input("model entries must be finite".into()));
        }
        Ok(Self { d, mu, diff, refl })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    /// `Sigma = D D^T`.
    pub fn sigma_mat(&self) -> Mat {
        self.diff.matmul(&self.diff.transpose())
    }

    /// `P = I - R^T`.
    pub fn p_mat(&self) -> Mat {
        Mat::identity(self.d).sub(&self.refl.transpose())
    }
}

/// Cached quantities derived from a [`ModelParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedModel {
    pub d: usize,
    /// `Sigma = D D^T`
    pub sigma_mat: Mat,
    /// `P = I - R^T`
    pub p_mat: Mat,
    /// `P^T = I - R`, kept for the complementarity iteration.
    pub pt_mat: Mat,
    pub r_inv: Mat,
    /// `b = -R^{-1} mu`
    pub b: Vec<f64>,
    /// `sigma_i = sqrt(Sigma_ii)`
    pub sigma: Vec<f64>,
    /// Spectral radius of `|P|` (Collatz-Wielandt upper estimate).
    pub spectral_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub a1_substochastic: bool,
    pub a1_transient: bool,
    pub a2_stable: bool,
    pub a3_pd: bool,
    pub spectral_radius: f64,
    pub messages: Vec<String>,
}

impl ValidationReport {
    pub fn admissible(&self) -> bool {
        self.a1_substochastic && self.a1_transient && self.a2_stable && self.a3_pd
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub radius: f64,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Spectral radius of a nonnegative matrix by power iteration.
///
/// Iterates on `(I + |P|)/2`, which has the same Perron vector as `|P|` but no
/// peripheral eigenvalues other than the dominant one, so the bipartite
/// structure of e.g. rank-based `P` does not stall the iteration. The
/// Collatz-Wielandt ratios bracket the radius at every step.
pub fn spectral_radius(p: &Mat, tol: f64, cap: usize) -> SpectralEstimate {
    let n = p.rows();
    let abs = Mat::from_row_major(n, n, p.as_slice().iter().map(|v| v.abs()).collect())
        .expect("square");
    let mut x = vec![1.0; n];
    let mut y = vec![0.0; n];
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    for it in 1..=cap {
        abs.matvec_into(&x, &mut y);
        lo = f64::INFINITY;
        hi = 0.0;
        for i in 0..n {
            y[i] = 0.5 * (x[i] + y[i]);
            let r = y[i] / x[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let m = y.iter().cloned().fold(0.0, f64::max);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / m;
        }
        if hi - lo < tol {
            let (l, u) = (2.0 * lo - 1.0, 2.0 * hi - 1.0);
            return SpectralEstimate {
                radius: u.max(0.0),
                lower: l.max(0.0),
                upper: u.max(0.0),
                iterations: it,
                converged: true,
            };
        }
    }
    let (l, u) = (2.0 * lo - 1.0, 2.0 * hi - 1.0);
    SpectralEstimate {
        radius: u.max(0.0),
        lower: l.max(0.0),
        upper: u.max(0.0),
        iterations: cap,
        converged: false,
    }
}

fn invert_checked(r: &Mat) -> Result<Mat> {
    let inv = r.inverse().ok_or(RbmError::Singular {
        name: "R",
        cond: f64::INFINITY,
    })?;
    let cond = r.norm_1() * inv.norm_1();
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(RbmError::Singular { name: "R", cond });
    }
    Ok(inv)
}

/// Checks assumptions (A1)-(A3). Never aborts on a failed assumption; the
/// findings are collected in the report.
pub fn validate_params(p: &ModelParams) -> ValidationReport {
    let mut messages = Vec::new();
    let d = p.d;
    let pm = p.p_mat();
    const SLACK: f64 = 1e-12;

    let mut a1_substochastic = true;
    for i in 0..d {
        let row = pm.row(i);
        if let Some(j) = row.iter().position(|&v| v < -SLACK) {
            a1_substochastic = false;
            messages.push(format!("P[{i}][{j}] = {} is negative", row[j]));
        }
        let s: f64 = row.iter().sum();
        if s > 1.0 + SLACK {
            a1_substochastic = false;
            messages.push(format!("row sum {i} of P is {s} > 1"));
        }
    }

    let spec = spectral_radius(&pm, POWER_ITER_TOL, POWER_ITER_CAP);
    if !spec.converged {
        messages.push(format!(
            "power iteration did not reach tolerance in {} iterations; radius in [{}, {}]",
            spec.iterations, spec.lower, spec.upper
        ));
    }
    let a1_transient = spec.radius < 1.0;
    if !a1_transient {
        messages.push(format!("spectral radius of P is {} (not < 1)", spec.radius));
    }

    let a2_stable = match invert_checked(&p.refl) {
        Ok(inv) => {
            let b: Vec<f64> = inv.matvec(&p.mu).iter().map(|v| -v).collect();
            match b.iter().position(|&v| !(v > 0.0)) {
                Some(i) => {
                    messages.push(format!("b[{i}] = {} is not positive", b[i]));
                    false
                }
                None => true,
            }
        }
        Err(e) => {
            messages.push(format!("{e}; stability cannot hold"));
            false
        }
    };

    let a3_pd = p.sigma_mat().cholesky(PD_PIVOT_TOL).is_some();
    if !a3_pd {
        messages.push("Sigma = D D^T is not positive definite".into());
    }

    ValidationReport {
        a1_substochastic,
        a1_transient,
        a2_stable,
        a3_pd,
        spectral_radius: spec.radius,
        messages,
    }
}

/// Computes `Sigma`, `P`, `R^{-1}`, `b` and `sigma_i`.
pub fn derive(p: &ModelParams) -> Result<DerivedModel> {
    let r_inv = invert_checked(&p.refl)?;
    let sigma_mat = p.sigma_mat();
    let p_mat = p.p_mat();
    let b = r_inv.matvec(&p.mu).into_iter().map(|v| -v).collect();
    let sigma = (0..p.d).map(|i| sigma_mat[(i, i)].max(0.0).sqrt()).collect();
    let spectral_radius = spectral_radius(&p_mat, POWER_ITER_TOL, POWER_ITER_CAP).radius;
    Ok(DerivedModel {
        d: p.d,
        pt_mat: p_mat.transpose(),
        sigma_mat,
        p_mat,
        r_inv,
        b,
        sigma,
        spectral_radius,
    })
}

/// Validates then derives; fails if any assumption is violated.
pub fn admissible(p: &ModelParams) -> Result<DerivedModel> {
    let report = validate_params(p);
    if !report.admissible() {
        return Err(RbmError::Precondition(format!(
            "model is not admissible: {}",
            report.messages.join("; ")
        )));
    }
    derive(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorms {
    /// `max_i v_i sigma_i^{-2} x_i`
    pub norm_inf_v: f64,
    /// `max_i sigma_i^{-1} x_i`
    pub norm_inf_star: f64,
    pub norm_l1: f64,
}

pub fn weighted_norms(x: &[f64], v: &[f64], dm: &DerivedModel) -> Result<WeightedNorms> {
    check_len("x", dm.d, x.len())?;
    check_len("v", dm.d, v.len())?;
    Ok(WeightedNorms {
        norm_inf_v: norm_inf_v(x, v, &dm.sigma),
        norm_inf_star: x
            .iter()
            .zip(&dm.sigma)
            .map(|(xi, s)| xi / s)
            .fold(0.0, f64::max),
        norm_l1: crate::linalg::norm_l1(x),
    })
}

pub(crate) fn norm_inf_v(x: &[f64], v: &[f64], sigma: &[f64]) -> f64 {
    x.iter()
        .zip(v)
        .zip(sigma)
        .map(|((xi, vi), s)| vi * xi / (s * s))
        .fold(0.0, f64::max)
}
