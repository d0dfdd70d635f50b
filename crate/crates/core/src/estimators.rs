//! Ensemble estimators of the first two correlation functions and of the
//! clustering and exponential-moment diagnostics.
//!
//! Every estimator takes one snapshot per replica at a common time.
//! Standard errors are always computed across replicas.

use std::f64::consts::PI;

use serde::Serialize;

use crate::configspace::torus_distance;
use crate::error::{Error, Result};
use crate::kernels::Vector;
use crate::simulator::Snapshot;

/// The periodic observation box `[0, L)^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Geometry {
    pub box_len: f64,
    pub dim: usize,
}

impl Geometry {
    pub fn volume(&self) -> f64 {
        self.box_len.powi(self.dim as i32)
    }

    fn shell(&self, lo: f64, hi: f64) -> f64 {
        if self.dim == 1 {
            2.0 * (hi - lo)
        } else {
            PI * (hi * hi - lo * lo)
        }
    }
}

/// Mean with its standard error; `stderr` is `None` for a single sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: Option<f64>,
    pub samples: usize,
}

fn mean_and_stderr(xs: &[f64]) -> Estimate {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let stderr = (n > 1).then(|| {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    });
    Estimate {
        value: mean,
        stderr,
        samples: n,
    }
}

/// `k⁽¹⁾` as the mean of `N / L^d`.
pub fn estimate_k1(snaps: &[Snapshot], geom: Geometry) -> Result<Estimate> {
    if snaps.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let xs: Vec<f64> = snaps.iter().map(|s| s.points.len() as f64 / geom.volume()).collect();
    Ok(mean_and_stderr(&xs))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationEstimate {
    pub geometry: Geometry,
    pub k1: Estimate,
    pub edges: Vec<f64>,
    pub k2: Vec<f64>,
    pub k2_stderr: Vec<Option<f64>>,
    /// Per replica: `N / L^d` and the pair counts per bin.
    #[serde(skip)]
    per_replica: Vec<(f64, Vec<f64>)>,
}

fn check_edges(edges: &[f64], geom: Geometry) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::InvalidBins("need at least two bin edges".into()));
    }
    if edges[0] < 0.0 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidBins("edges must be >= 0 and strictly increasing".into()));
    }
    let last = *edges.last().unwrap();
    if last > geom.box_len / 2.0 * (1.0 + 1e-12) {
        return Err(Error::InvalidBins(format!(
            "last edge {last} exceeds L/2 = {}",
            geom.box_len / 2.0
        )));
    }
    Ok(())
}

/// Ordered pairs with torus distance in each bin `[r_lo, r_hi)`.
fn pair_counts(points: &[Vector], edges: &[f64], geom: Geometry) -> Vec<f64> {
    let mut counts = vec![0.0; edges.len() - 1];
    let r_max = *edges.last().unwrap();
    for (i, x) in points.iter().enumerate() {
        for y in &points[i + 1..] {
            let r = torus_distance(x, y, geom.box_len, geom.dim);
            if r < edges[0] || r >= r_max {
                continue;
            }
            let b = edges.partition_point(|&e| e <= r) - 1;
            counts[b] += 2.0;
        }
    }
    counts
}

/// Radial `k⁽²⁾`: ordered pair counts per bin divided by `L^d` times the shell
/// measure, averaged over replicas.
pub fn estimate_k2_radial(snaps: &[Snapshot], edges: &[f64], geom: Geometry) -> Result<CorrelationEstimate> {
    check_edges(edges, geom)?;
    let k1 = estimate_k1(snaps, geom)?;
    let shells: Vec<f64> = edges.windows(2).map(|w| geom.shell(w[0], w[1])).collect();
    let per_replica: Vec<(f64, Vec<f64>)> = snaps
        .iter()
        .map(|s| (s.points.len() as f64 / geom.volume(), pair_counts(&s.points, edges, geom)))
        .collect();
    let nb = shells.len();
    let mut k2 = Vec::with_capacity(nb);
    let mut k2_stderr = Vec::with_capacity(nb);
    for b in 0..nb {
        let xs: Vec<f64> = per_replica
            .iter()
            .map(|(_, c)| c[b] / (geom.volume() * shells[b]))
            .collect();
        let e = mean_and_stderr(&xs);
        k2.push(e.value);
        k2_stderr.push(e.stderr);
    }
    Ok(CorrelationEstimate {
        geometry: geom,
        k1,
        edges: edges.to_vec(),
        k2,
        k2_stderr,
        per_replica,
    })
}

/// Short-range `k⁽²⁾` over `k⁽¹⁾²`; `value` is `None` when `k⁽¹⁾ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterIndex {
    pub value: Option<f64>,
    /// Jackknife standard error over replicas.
    pub stderr: Option<f64>,
}

/// Mean of `k̂⁽²⁾` over the bins below `r0` (weighted by shell measure),
/// divided by `k̂⁽¹⁾²`. `r0` must coincide with a bin edge.
pub fn cluster_index(est: &CorrelationEstimate, r0: f64) -> Result<ClusterIndex> {
    let edges = &est.edges;
    if edges[0] != 0.0 {
        return Err(Error::InvalidBins("bins must start at r = 0".into()));
    }
    let nb = edges
        .iter()
        .position(|&e| (e - r0).abs() <= 1e-9 * r0.max(1.0))
        .filter(|&k| k > 0)
        .ok_or_else(|| Error::InvalidBins(format!("r0 = {r0} is not a bin edge")))?;
    let geom = est.geometry;
    let measure = geom.volume() * geom.shell(0.0, edges[nb]);
    let ratio = |pairs: f64, k1: f64| (k1 > 0.0).then(|| pairs / measure / (k1 * k1));

    let reps = &est.per_replica;
    let n = reps.len();
    let pairs: Vec<f64> = reps.iter().map(|(_, c)| c[..nb].iter().sum()).collect();
    let total_pairs: f64 = pairs.iter().sum();
    let total_k1: f64 = reps.iter().map(|(k, _)| k).sum();
    let value = ratio(total_pairs / n as f64, total_k1 / n as f64);
    let stderr = if n > 1 && value.is_some() {
        let loo: Option<Vec<f64>> = (0..n)
            .map(|i| {
                let m = (n - 1) as f64;
                ratio((total_pairs - pairs[i]) / m, (total_k1 - reps[i].0) / m)
            })
            .collect();
        loo.map(|loo| {
            let mean = loo.iter().sum::<f64>() / n as f64;
            let ss: f64 = loo.iter().map(|x| (x - mean).powi(2)).sum();
            ((n - 1) as f64 / n as f64 * ss).sqrt()
        })
    } else {
        None
    };
    Ok(ClusterIndex { value, stderr })
}

/// Axis-aligned sub-window `[lo, hi)` of the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubWindow {
    pub lo: Vector,
    pub hi: Vector,
}

impl SubWindow {
    fn contains(&self, x: &Vector, dim: usize) -> bool {
        (0..dim).all(|k| x[k] >= self.lo[k] && x[k] < self.hi[k])
    }

    pub fn measure(&self, dim: usize) -> f64 {
        (0..dim).map(|k| self.hi[k] - self.lo[k]).product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentialMoment {
    pub mean: f64,
    pub log_mean: f64,
}

/// Empirical `E exp(α |γ ∩ W|)`, accumulated in log space.
pub fn dobrushin_moment(snaps: &[Snapshot], alpha: f64, window: &SubWindow, geom: Geometry) -> Result<ExponentialMoment> {
    if snaps.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidInput(format!("α = {alpha} must be finite and >= 0")));
    }
    for k in 0..geom.dim {
        if !(window.lo[k] >= 0.0 && window.hi[k] <= geom.box_len && window.lo[k] < window.hi[k]) {
            return Err(Error::InvalidInput("sub-window must be a nonempty part of the box".into()));
        }
    }
    let logs: Vec<f64> = snaps
        .iter()
        .map(|s| alpha * s.points.iter().filter(|p| window.contains(p, geom.dim)).count() as f64)
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logs.iter().map(|l| (l - top).exp()).sum();
    let log_mean = top + (sum / logs.len() as f64).ln();
    Ok(ExponentialMoment {
        mean: log_mean.exp(),
        log_mean,
    })
}
