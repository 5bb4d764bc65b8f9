//! Output files: trajectory and curve CSVs, manifests, reports. Column
//! layouts are stable; floats print in shortest round-trip form so reruns are
//! byte-identical.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use massflow::estimators::CurveEstimate;
use massflow::sim::Trajectory;
use serde::Serialize;

use crate::config::{config_hash, Manifest};

pub fn ensure_dir(dir: &Path) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create output dir '{}': {e}", dir.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| format!("serialization failed: {e}"))?;
    fs::write(path, text + "\n").map_err(|e| format!("cannot write '{}': {e}", path.display()))
}

pub fn write_manifest<T: Serialize>(
    dir: &Path,
    command: &str,
    seed: u64,
    replicates: u64,
    config: &T,
) -> Result<PathBuf, String> {
    let canonical =
        serde_json::to_string(config).map_err(|e| format!("serialization failed: {e}"))?;
    let manifest = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        replicates,
        config_hash: config_hash(&canonical),
        config,
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Columns: replicate,t,cluster_idx,position,mass,index_lo,index_hi
/// (index columns are 0-based inclusive piece ranges).
pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<(), String> {
    let file =
        fs::File::create(path).map_err(|e| format!("cannot write '{}': {e}", path.display()))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| format!("write failed on '{}': {e}", path.display());
    writeln!(w, "replicate,t,cluster_idx,position,mass,index_lo,index_hi").map_err(io)?;
    for (rep, traj) in trajectories.iter().enumerate() {
        for snap in &traj.snapshots {
            for c in 0..snap.positions.len() {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    rep,
                    snap.time,
                    c,
                    snap.positions[c],
                    snap.masses[c],
                    snap.index_lo[c],
                    snap.index_hi[c]
                )
                .map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

/// Columns: observable,t,n,mean,se,ci_lo,ci_hi
pub fn write_curves(path: &Path, curves: &[CurveEstimate]) -> Result<(), String> {
    let file =
        fs::File::create(path).map_err(|e| format!("cannot write '{}': {e}", path.display()))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| format!("write failed on '{}': {e}", path.display());
    writeln!(w, "observable,t,n,mean,se,ci_lo,ci_hi").map_err(io)?;
    for curve in curves {
        for p in &curve.points {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                curve.observable, p.t, p.n, p.mean, p.se, p.ci_lo, p.ci_hi
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}
