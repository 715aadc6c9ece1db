//! File formats: binary trajectory dumps with a JSON sidecar, CSV export, and
//! model-source loading.
//!
//! Binary layout, all little-endian: `d: u64`, `n_steps: u64`, `dt: f64`,
//! `seed: u64`, `path_index: u64`, then `(n_steps + 1) * d` states row-major,
//! then `n_steps * d` local-time increments row-major.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{parse_atlas_shorthand, rank_based_params, RankBasedSpec};
use crate::error::{RbmError, Result};
use crate::model::ModelParams;
use crate::reflect::Trajectory;
use crate::rng::SAMPLER_ID;

pub const TRAJECTORY_SCHEMA: &str = "rbm.trajectory.v1";
const HEADER_BYTES: usize = 40;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RbmError + '_ {
    move |source| RbmError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_trajectory_bin(traj: &Trajectory, path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    let mut buf = Vec::with_capacity(HEADER_BYTES + 8 * (traj.states.len() + traj.dl.len()));
    buf.extend_from_slice(&(traj.d as u64).to_le_bytes());
    buf.extend_from_slice(&(traj.n_steps() as u64).to_le_bytes());
    buf.extend_from_slice(&traj.dt.to_le_bytes());
    buf.extend_from_slice(&traj.seed.to_le_bytes());
    buf.extend_from_slice(&traj.path_index.to_le_bytes());
    for v in traj.states.iter().chain(&traj.dl) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_trajectory_bin(path: &Path) -> Result<Trajectory> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    let bad = |msg: String| RbmError::Input(format!("{}: {msg}", path.display()));
    if bytes.len() < HEADER_BYTES {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    let word = |i: usize| <[u8; 8]>::try_from(&bytes[8 * i..8 * i + 8]).expect("8 bytes");
    let d = u64::from_le_bytes(word(0)) as usize;
    let n = u64::from_le_bytes(word(1)) as usize;
    let dt = f64::from_le_bytes(word(2));
    let seed = u64::from_le_bytes(word(3));
    let path_index = u64::from_le_bytes(word(4));
    let n_states = (n + 1).checked_mul(d).ok_or_else(|| bad("size overflow".into()))?;
    let n_dl = n * d;
    let want = HEADER_BYTES + 8 * (n_states + n_dl);
    if bytes.len() != want {
        return Err(bad(format!("expected {want} bytes for d = {d}, n_steps = {n}, found {}", bytes.len())));
    }
    let floats: Vec<f64> = bytes[HEADER_BYTES..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let (states, dl) = floats.split_at(n_states);
    Ok(Trajectory {
        d,
        dt,
        times: (0..=n).map(|k| k as f64 * dt).collect(),
        states: states.to_vec(),
        dl: dl.to_vec(),
        path_index,
        seed,
        warnings: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub schema: String,
    pub d: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub path_index: u64,
    pub sampler: String,
    pub warnings: Vec<String>,
}

impl TrajectoryMeta {
    pub fn of(traj: &Trajectory) -> Self {
        Self {
            schema: TRAJECTORY_SCHEMA.into(),
            d: traj.d,
            n_steps: traj.n_steps(),
            dt: traj.dt,
            seed: traj.seed,
            path_index: traj.path_index,
            sampler: SAMPLER_ID.into(),
            warnings: traj.warnings.clone(),
        }
    }
}

pub fn write_trajectory_meta(traj: &Trajectory, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&TrajectoryMeta::of(traj))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Columns `t, x1..xd, dl1..dld`; the first row has zero increments.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let d = traj.d;
    let mut out = String::from("t");
    for i in 1..=d {
        out.push_str(&format!(",x{i}"));
    }
    for i in 1..=d {
        out.push_str(&format!(",dl{i}"));
    }
    out.push('\n');
    let zeros = vec![0.0; d];
    for n in 0..=traj.n_steps() {
        out.push_str(&traj.times[n].to_string());
        for v in traj.state(n) {
            out.push_str(&format!(",{v}"));
        }
        let dl = if n == 0 { &zeros[..] } else { traj.dl_at(n) };
        for v in dl {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

/// A model plus the rank-based spec it came from, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub params: ModelParams,
    pub rank_spec: Option<RankBasedSpec>,
    pub source: String,
}

fn from_json_text(text: &str, source: &str) -> Result<LoadedModel> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let is_rank = value.get("deltas").is_some() || value.get("sigmas").is_some();
    if is_rank {
        let spec: RankBasedSpec = serde_json::from_value(value)?;
        spec.validate()?;
        Ok(LoadedModel {
            params: rank_based_params(&spec)?,
            rank_spec: Some(spec),
            source: source.into(),
        })
    } else {
        Ok(LoadedModel {
            params: serde_json::from_value(value)?,
            rank_spec: None,
            source: source.into(),
        })
    }
}

/// Accepts `atlas:<n>`, inline JSON (starting with `{`) or a path to a JSON
/// file holding either a model (`d, mu, D, R`) or a rank-based spec
/// (`deltas, sigmas`).
pub fn load_model(source: &str) -> Result<LoadedModel> {
    if let Some(spec) = parse_atlas_shorthand(source) {
        let spec = spec?;
        return Ok(LoadedModel {
            params: rank_based_params(&spec)?,
            rank_spec: Some(spec),
            source: source.into(),
        });
    }
    if source.trim_start().starts_with('{') {
        return from_json_text(source, "inline");
    }
    let path = Path::new(source);
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    from_json_text(&text, source)
}
