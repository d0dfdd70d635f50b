use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ReplicaTrajectory, Snapshot};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotStats {
    pub t: f64,
    pub mean_n: f64,
    pub std_n: f64,
}

/// Metadata written next to the per-replica snapshot files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub box_len: f64,
    pub dim: usize,
    pub seed: u64,
    pub t_max: f64,
    pub replicas: usize,
    pub snapshot_times: Vec<f64>,
    pub files: Vec<String>,
    pub events: Vec<u64>,
    pub stats: Vec<SnapshotStats>,
}

fn replica_file(r: usize) -> String {
    format!("replica_{r:05}.csv")
}

/// Writes one CSV per replica (`t,replica,particle_index,x0[,x1]`) and
/// `summary.json` into `dir`.
pub fn write_run(
    dir: &Path,
    trajectories: &[ReplicaTrajectory],
    box_len: f64,
    dim: usize,
    seed: u64,
    t_max: f64,
) -> Result<RunSummary> {
    fs::create_dir_all(dir)?;
    let header = if dim == 1 {
        "t,replica,particle_index,x0\n"
    } else {
        "t,replica,particle_index,x0,x1\n"
    };
    let mut files = Vec::with_capacity(trajectories.len());
    for tr in trajectories {
        let mut out = String::from(header);
        for snap in &tr.snapshots {
            for (i, p) in snap.points.iter().enumerate() {
                write!(out, "{:.16e},{},{},{:.16e}", snap.t, tr.replica, i, p[0]).unwrap();
                if dim == 2 {
                    write!(out, ",{:.16e}", p[1]).unwrap();
                }
                out.push('\n');
            }
        }
        let name = replica_file(tr.replica);
        fs::write(dir.join(&name), out)?;
        files.push(name);
    }
    let snapshot_times: Vec<f64> = trajectories
        .first()
        .map(|tr| tr.snapshots.iter().map(|s| s.t).collect())
        .unwrap_or_default();
    let stats = snapshot_times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let counts: Vec<f64> = trajectories.iter().map(|tr| tr.snapshots[k].points.len() as f64).collect();
            let n = counts.len() as f64;
            let mean = counts.iter().sum::<f64>() / n;
            let var = if counts.len() > 1 {
                counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            SnapshotStats {
                t,
                mean_n: mean,
                std_n: var.sqrt(),
            }
        })
        .collect();
    let summary = RunSummary {
        box_len,
        dim,
        seed,
        t_max,
        replicas: trajectories.len(),
        snapshot_times,
        files,
        events: trajectories.iter().map(|t| t.events).collect(),
        stats,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join("summary.json"), json)?;
    Ok(summary)
}

/// Reads a directory written by [`write_run`].
pub fn read_run(dir: &Path) -> Result<(RunSummary, Vec<ReplicaTrajectory>)> {
    let text = fs::read_to_string(dir.join("summary.json"))?;
    let summary: RunSummary =
        serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("summary.json: {e}")))?;
    let mut out = Vec::with_capacity(summary.files.len());
    for (r, name) in summary.files.iter().enumerate() {
        let path = dir.join(name);
        let text = fs::read_to_string(&path)?;
        let mut snapshots: Vec<Snapshot> = summary
            .snapshot_times
            .iter()
            .map(|&t| Snapshot { t, points: Vec::new() })
            .collect();
        let mut replica = r;
        for (lineno, line) in text.lines().enumerate().skip(1) {
            let bad = || Error::InvalidInput(format!("{}:{}: malformed row", path.display(), lineno + 1));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 + summary.dim {
                return Err(bad());
            }
            let t: f64 = cols[0].parse().map_err(|_| bad())?;
            replica = cols[1].parse().map_err(|_| bad())?;
            let mut p = [0.0; 2];
            for k in 0..summary.dim {
                p[k] = cols[3 + k].parse().map_err(|_| bad())?;
            }
            let slot = summary
                .snapshot_times
                .iter()
                .position(|&s| s == t)
                .ok_or_else(bad)?;
            snapshots[slot].points.push(p);
        }
        out.push(ReplicaTrajectory {
            replica,
            snapshots,
            events: summary.events.get(r).copied().unwrap_or(0),
        });
    }
    Ok((summary, out))
}
