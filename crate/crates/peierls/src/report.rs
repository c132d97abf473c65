//! File outputs: CSV tables, JSON metadata, flat binary snapshots, run
//! manifests.
//!
//! Every float is written with 17 significant digits (`{:.16e}`), which
//! round-trips `f64` exactly, uses `.` as the decimal separator, and keeps
//! repeated runs byte-identical. Timing information is confined to the run
//! manifest so the data files stay deterministic.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::analysis::ConvergenceReport;
use crate::particles::TrajectoryRecord;
use crate::phasefield::{Grid, PhaseFieldState, Snapshot, TransitionTrack};
use crate::profiles::{CorrectorProfile, LayerProfile};
use crate::{Error, Result};

/// 17-significant-digit decimal form; round-trips every finite `f64`.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(contents)?;
    Ok(())
}

/// Header metadata accompanying a profile CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileHeader {
    pub potential: String,
    pub alpha: f64,
    pub c0: f64,
    pub layer_tail: crate::halflap::FarFieldModel,
    pub layer_residual: f64,
    pub fitted_coeff1_left: f64,
    pub fitted_coeff1_right: f64,
    pub k1: f64,
    pub corrector: Option<CorrectorHeader>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectorHeader {
    pub k2: f64,
    pub k3: f64,
    pub residual: f64,
    pub multiplier: f64,
}

/// Write `<base>.csv` (node, u, u', psi) and `<base>.json` (tail
/// coefficients, alpha, c0, potential identifier).
pub fn write_profiles(
    base: &Path,
    layer: &LayerProfile,
    corrector: Option<&CorrectorProfile>,
) -> Result<Vec<PathBuf>> {
    let mut csv = String::from("node,u,u_prime,psi\n");
    for (i, &x) in layer.grid.iter().enumerate() {
        let psi = corrector.map(|c| fmt_g17(c.psi[i])).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            fmt_g17(x),
            fmt_g17(layer.u[i]),
            fmt_g17(layer.u_prime[i]),
            psi
        );
    }
    let header = ProfileHeader {
        potential: layer.potential_id.clone(),
        alpha: layer.alpha,
        c0: layer.c0,
        layer_tail: layer.tail.clone(),
        layer_residual: layer.residual,
        fitted_coeff1_left: layer.fitted_tail.left_coeff1,
        fitted_coeff1_right: layer.fitted_tail.right_coeff1,
        k1: layer.fitted_tail.sup_constant,
        corrector: corrector.map(|c| CorrectorHeader {
            k2: c.k2,
            k3: c.k3,
            residual: c.residual,
            multiplier: c.multiplier,
        }),
    };
    let csv_path = base.with_extension("csv");
    let json_path = base.with_extension("json");
    write_file(&csv_path, csv.as_bytes())?;
    write_file(&json_path, serde_json::to_string_pretty(&header)?.as_bytes())?;
    Ok(vec![csv_path, json_path])
}

/// Profile data read back from disk.
#[derive(Debug, Clone)]
pub struct ProfileTable {
    pub nodes: Vec<f64>,
    pub u: Vec<f64>,
    pub u_prime: Vec<f64>,
    pub psi: Vec<Option<f64>>,
    pub header: ProfileHeader,
}

pub fn read_profiles(base: &Path) -> Result<ProfileTable> {
    let csv = fs::read_to_string(base.with_extension("csv"))?;
    let header: ProfileHeader =
        serde_json::from_str(&fs::read_to_string(base.with_extension("json"))?)?;
    let mut nodes = Vec::new();
    let mut u = Vec::new();
    let mut u_prime = Vec::new();
    let mut psi = Vec::new();
    for (ln, line) in csv.lines().enumerate() {
        if ln == 0 {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::InvalidInput(format!("bad profile row at line {}", ln + 1)));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad float {s:?}: {e}")))
        };
        nodes.push(parse(cols[0])?);
        u.push(parse(cols[1])?);
        u_prime.push(parse(cols[2])?);
        psi.push(if cols[3].is_empty() { None } else { Some(parse(cols[3])?) });
    }
    Ok(ProfileTable { nodes, u, u_prime, psi, header })
}

/// Trajectory CSV: time, then one position column per original index,
/// blank once annihilated.
pub fn trajectory_csv(record: &TrajectoryRecord) -> String {
    let n = record.n();
    let mut out = String::from("time");
    for i in 0..n {
        let _ = write!(out, ",x{}", i + 1);
    }
    out.push('\n');
    for (k, &t) in record.sample_times.iter().enumerate() {
        let _ = write!(out, "{}", fmt_g17(t));
        for i in 0..n {
            match record.samples[k][i] {
                Some(x) => {
                    let _ = write!(out, ",{}", fmt_g17(x));
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Event log JSON: `{time, location, cluster, removed, survivor}` per event.
pub fn events_json(record: &TrajectoryRecord) -> Result<String> {
    Ok(serde_json::to_string_pretty(&record.events)?)
}

/// Snapshot CSV `(x, v)` for one sample time.
pub fn snapshot_csv(grid: &Grid, values: &[f64]) -> String {
    let mut out = String::from("x,v\n");
    for (j, &v) in values.iter().enumerate() {
        let _ = writeln!(out, "{},{}", fmt_g17(grid.node(j)), fmt_g17(v));
    }
    out
}

/// Flat binary snapshot: header (node count, X, eps, time) as little-endian
/// f64, then the values.
pub fn snapshot_binary(state: &PhaseFieldState, snapshot: &Snapshot) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * (4 + snapshot.values.len()));
    for h in [
        state.grid.n as f64,
        state.grid.half_width,
        state.epsilon,
        snapshot.time,
    ] {
        out.extend_from_slice(&h.to_le_bytes());
    }
    for v in &snapshot.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parse a flat binary snapshot back into `(n, X, eps, time, values)`.
pub fn parse_snapshot_binary(bytes: &[u8]) -> Result<(usize, f64, f64, f64, Vec<f64>)> {
    if bytes.len() < 32 || bytes.len() % 8 != 0 {
        return Err(Error::InvalidInput("truncated binary snapshot".into()));
    }
    let read = |k: usize| f64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
    let n = read(0) as usize;
    if bytes.len() != 8 * (4 + n) {
        return Err(Error::InvalidInput("binary snapshot length mismatch".into()));
    }
    let values = (0..n).map(|j| read(4 + j)).collect();
    Ok((n, read(1), read(2), read(3), values))
}

/// Transition-track CSV `(t, layer id, position, level)`.
pub fn track_csv(track: &TransitionTrack) -> String {
    let mut out = String::from("t,layer,position,level\n");
    for (s, &t) in track.times.iter().enumerate() {
        for l in &track.layers {
            if let Some(p) = l.position_at_sample(s) {
                let _ = writeln!(out, "{},{},{},{}", fmt_g17(t), l.id, fmt_g17(p), fmt_g17(l.level));
            }
        }
    }
    out
}

/// Write the sweep outputs: `sweep.csv` (one row per eps), `scenario.json`,
/// and one `eps_<k>_track.csv` of tracking errors per member. Runtimes are
/// deliberately not written here; they belong to the manifest.
pub fn emit_report(report: &ConvergenceReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();

    let mut csv = String::from(
        "epsilon,max_tracking_error,first_collision_estimate,plateau_error,final_crossings,grid_points\n",
    );
    for m in &report.per_epsilon {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            fmt_g17(m.epsilon),
            fmt_g17(m.max_tracking_error),
            m.collision_time_estimates.first().map(|&t| fmt_g17(t)).unwrap_or_default(),
            m.plateau_error.map(fmt_g17).unwrap_or_default(),
            m.final_crossings.len(),
            m.grid_points,
        );
    }
    let p = out_dir.join("sweep.csv");
    write_file(&p, csv.as_bytes())?;
    files.push(p);

    #[derive(Serialize)]
    struct ScenarioMeta<'a> {
        scenario: &'a crate::analysis::SweepScenario,
        effective_mobility: f64,
        reference_collision_times: &'a [f64],
        grids: Vec<usize>,
    }
    let meta = ScenarioMeta {
        scenario: &report.scenario,
        effective_mobility: report.effective_mobility,
        reference_collision_times: &report.reference_collision_times,
        grids: report.per_epsilon.iter().map(|m| m.grid_points).collect(),
    };
    let p = out_dir.join("scenario.json");
    write_file(&p, serde_json::to_string_pretty(&meta)?.as_bytes())?;
    files.push(p);

    for (k, m) in report.per_epsilon.iter().enumerate() {
        let mut csv = String::from("t,tracking_error\n");
        for &(t, e) in &m.tracking_errors {
            let _ = writeln!(csv, "{},{}", fmt_g17(t), fmt_g17(e));
        }
        let p = out_dir.join(format!("eps_{k}_track.csv"));
        write_file(&p, csv.as_bytes())?;
        files.push(p);
    }
    Ok(files)
}

/// Run manifest: the fully resolved configuration plus versions and wall
/// time. The only output file allowed to differ between identical runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub package_version: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_seconds: f64,
    pub runtimes: Option<Vec<(f64, f64)>>,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    write_file(path, serde_json::to_string_pretty(manifest)?.as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
