//! Nonlocal logistic equation `∂ρ/∂t = −mρ + a⁺⋆ρ − ρ (a⁻⋆ρ)` on a periodic
//! grid, with the homogeneous closed form and front-speed measurement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Kernel, ModelParams};

/// Periodic grid with `per_side` cells of side `L / per_side` per axis.
/// Cell `i` sits at `x = i·h`; in 2-D the index is `ix + per_side·iy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub box_len: f64,
    pub dim: usize,
    pub per_side: usize,
}

impl FieldGrid {
    pub fn new(box_len: f64, dim: usize, per_side: usize) -> Result<Self> {
        if !(box_len > 0.0 && box_len.is_finite()) || per_side == 0 || !(dim == 1 || dim == 2) {
            return Err(Error::InvalidInput(format!(
                "bad field grid L = {box_len}, d = {dim}, cells per side = {per_side}"
            )));
        }
        Ok(FieldGrid {
            box_len,
            dim,
            per_side,
        })
    }

    /// Spacing at most `r_cut / 8` of the narrower nonzero kernel.
    pub fn for_params(p: &ModelParams) -> Self {
        let rc = [&p.a_plus, &p.a_minus]
            .iter()
            .filter(|k| !k.is_zero())
            .map(|k| k.r_cut())
            .fold(f64::INFINITY, f64::min);
        let per_side = if rc.is_finite() {
            (p.box_len / (rc / 8.0) - 1e-9).ceil() as usize
        } else {
            1
        };
        FieldGrid {
            box_len: p.box_len,
            dim: p.dim,
            per_side: per_side.max(1),
        }
    }

    pub fn spacing(&self) -> f64 {
        self.box_len / self.per_side as f64
    }

    pub fn cells(&self) -> usize {
        self.per_side.pow(self.dim as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Position of cell `i` (first coordinate only in 1-D).
    pub fn position(&self, i: usize) -> [f64; 2] {
        let h = self.spacing();
        if self.dim == 1 {
            [i as f64 * h, 0.0]
        } else {
            [(i % self.per_side) as f64 * h, (i / self.per_side) as f64 * h]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub t: f64,
    pub grid: FieldGrid,
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn uniform(grid: FieldGrid, c: f64) -> Self {
        DensityField {
            t: 0.0,
            grid,
            values: vec![c; grid.cells()],
        }
    }

    pub fn from_fn(grid: FieldGrid, f: impl Fn([f64; 2]) -> f64) -> Self {
        DensityField {
            t: 0.0,
            grid,
            values: (0..grid.cells()).map(|i| f(grid.position(i))).collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Offsets and weights of a truncated kernel on the grid. Each weight is the
/// integral of the kernel over the cell around the offset (midpoint rule on
/// a sub-grid, so a jump at the cutoff is split between cells), rescaled so
/// the weights sum to `⟨a⟩` exactly.
#[derive(Debug, Clone)]
struct ConvStencil {
    taps: Vec<(isize, isize, f64)>,
}

impl ConvStencil {
    fn new(kernel: &Kernel, grid: &FieldGrid) -> Self {
        if kernel.is_zero() {
            return ConvStencil { taps: Vec::new() };
        }
        let h = grid.spacing();
        let reach = ((kernel.r_cut() / h + 0.5).ceil() as isize).min(grid.per_side as isize / 2);
        let ys = if grid.dim == 1 { 0..=0 } else { -reach..=reach };
        let sub: Vec<f64> = (0..SUBCELLS).map(|k| ((k as f64 + 0.5) / SUBCELLS as f64 - 0.5) * h).collect();
        let cell_mean = |cx: f64, cy: f64| -> f64 {
            if grid.dim == 1 {
                sub.iter().map(|dx| kernel.eval_radial((cx + dx).abs())).sum::<f64>() / SUBCELLS as f64
            } else {
                let mut acc = 0.0;
                for dy in &sub {
                    for dx in &sub {
                        acc += kernel.eval_radial((cx + dx).hypot(cy + dy));
                    }
                }
                acc / (SUBCELLS * SUBCELLS) as f64
            }
        };
        let mut taps = Vec::new();
        for jy in ys {
            for jx in -reach..=reach {
                let a = cell_mean(jx as f64 * h, jy as f64 * h);
                if a != 0.0 {
                    taps.push((jx, jy, a * grid.cell_volume()));
                }
            }
        }
        let total: f64 = taps.iter().map(|t| t.2).sum();
        if total > 0.0 {
            let scale = kernel.total_mass() / total;
            for t in &mut taps {
                t.2 *= scale;
            }
        }
        ConvStencil { taps }
    }

    fn apply(&self, grid: &FieldGrid, rho: &[f64], i: usize) -> f64 {
        let n = grid.per_side as isize;
        if grid.dim == 1 {
            let i = i as isize;
            self.taps
                .iter()
                .map(|&(jx, _, w)| w * rho[(i - jx).rem_euclid(n) as usize])
                .sum()
        } else {
            let (ix, iy) = ((i as isize) % n, (i as isize) / n);
            self.taps
                .iter()
                .map(|&(jx, jy, w)| {
                    w * rho[((ix - jx).rem_euclid(n) + n * (iy - jy).rem_euclid(n)) as usize]
                })
                .sum()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KineticTrajectory {
    pub states: Vec<DensityField>,
    /// Number of negative cell values reset to zero.
    pub clipped: usize,
}

#[derive(Debug, Clone)]
pub struct KineticSolver {
    grid: FieldGrid,
    m: f64,
    plus: ConvStencil,
    minus: ConvStencil,
}

const PARALLEL_CELLS: usize = 8192;
const SUBCELLS: usize = 16;
const BLOW_UP: f64 = 1e12;

impl KineticSolver {
    /// Requires grid spacing at most `r_cut / 8` for each nonzero kernel.
    pub fn new(p: &ModelParams, grid: FieldGrid) -> Result<Self> {
        if grid.dim != p.dim || (grid.box_len - p.box_len).abs() > 1e-12 * p.box_len {
            return Err(Error::InvalidInput("field grid does not match the model box".into()));
        }
        for (k, name) in [(&p.a_plus, "a_plus"), (&p.a_minus, "a_minus")] {
            if !k.is_zero() && grid.spacing() > k.r_cut() / 8.0 * (1.0 + 1e-9) {
                return Err(Error::InvalidInput(format!(
                    "grid spacing {} does not resolve {name} (cutoff {}); need at most r_cut/8",
                    grid.spacing(),
                    k.r_cut()
                )));
            }
        }
        Ok(KineticSolver {
            grid,
            m: p.m,
            plus: ConvStencil::new(&p.a_plus, &grid),
            minus: ConvStencil::new(&p.a_minus, &grid),
        })
    }

    pub fn grid(&self) -> &FieldGrid {
        &self.grid
    }

    pub fn rhs(&self, rho: &[f64]) -> Vec<f64> {
        let cell = |i: usize| {
            -self.m * rho[i] + self.plus.apply(&self.grid, rho, i)
                - rho[i] * self.minus.apply(&self.grid, rho, i)
        };
        if rho.len() >= PARALLEL_CELLS {
            (0..rho.len()).into_par_iter().map(cell).collect()
        } else {
            (0..rho.len()).map(cell).collect()
        }
    }

    /// Classical RK4, recording every `stride` steps plus the final state.
    pub fn integrate(&self, rho0: &DensityField, dt: f64, t_max: f64, stride: usize) -> Result<KineticTrajectory> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("time step dt = {dt} must be > 0")));
        }
        if rho0.grid != self.grid {
            return Err(Error::InvalidInput("initial field is on a different grid".into()));
        }
        if t_max < rho0.t {
            return Err(Error::NegativeTime(t_max - rho0.t));
        }
        let stride = stride.max(1);
        let mut s = rho0.clone();
        let mut states = vec![s.clone()];
        let mut clipped = 0;
        let steps = ((t_max - rho0.t) / dt - 1e-9).ceil().max(0.0) as usize;
        let axpy = |x: &[f64], h: f64, k: &[f64]| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + h * b).collect() };
        for step in 1..=steps {
            let h = dt.min(t_max - s.t);
            let k1 = self.rhs(&s.values);
            let k2 = self.rhs(&axpy(&s.values, h / 2.0, &k1));
            let k3 = self.rhs(&axpy(&s.values, h / 2.0, &k2));
            let k4 = self.rhs(&axpy(&s.values, h, &k3));
            for i in 0..s.values.len() {
                s.values[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            s.t = if step == steps { t_max } else { s.t + h };
            let big = s.values.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if !(big <= BLOW_UP) {
                return Err(Error::Divergence { t: s.t, value: big });
            }
            for v in &mut s.values {
                if *v < 0.0 {
                    *v = 0.0;
                    clipped += 1;
                }
            }
            if step % stride == 0 || step == steps {
                states.push(s.clone());
            }
        }
        Ok(KineticTrajectory { states, clipped })
    }
}

/// Solution of `ρ' = (⟨a⁺⟩ − m)ρ − ⟨a⁻⟩ρ²` from `ρ0`.
pub fn logistic_closed_form(rho0: f64, m: f64, mass_plus: f64, mass_minus: f64, t: f64) -> f64 {
    let g = mass_plus - m;
    if mass_minus == 0.0 {
        rho0 * (g * t).exp()
    } else if g == 0.0 {
        rho0 / (1.0 + mass_minus * rho0 * t)
    } else {
        let e = (g * t).exp();
        rho0 * g * e / (g + mass_minus * rho0 * (e - 1.0))
    }
}

/// Uniform equilibrium `(⟨a⁺⟩ − m)/⟨a⁻⟩`, if positive.
pub fn equilibrium(p: &ModelParams) -> Option<f64> {
    let g = p.a_plus.total_mass() - p.m;
    let c = p.a_minus.total_mass();
    (g > 0.0 && c > 0.0).then(|| g / c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontStatus {
    Propagating,
    /// The front reached the end of the domain; only earlier times were fitted.
    Truncated,
    /// No cell stays above the level.
    Decayed,
    /// Every cell is above the level, so there is no front.
    Saturated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontSpeed {
    pub speed: f64,
    pub fit_residual: f64,
    pub window: (f64, f64),
    pub status: FrontStatus,
    pub positions: Vec<(f64, f64)>,
}

/// Rightmost `x` where the 1-D profile crosses `level` downwards, by linear
/// interpolation. `None` if no cell is at or above the level or all are.
fn front_position(rho: &DensityField, level: f64) -> Option<f64> {
    let v = &rho.values;
    let n = v.len();
    let i = (0..n.saturating_sub(1)).rev().find(|&i| v[i] >= level && v[i + 1] < level)?;
    let h = rho.grid.spacing();
    let frac = (v[i] - level) / (v[i] - v[i + 1]);
    Some((i as f64 + frac) * h)
}

/// Least-squares slope of the front position over the second half of the
/// time window, with the RMS residual of the fit.
pub fn front_speed(traj: &KineticTrajectory, level: f64) -> Result<FrontSpeed> {
    let states = &traj.states;
    let first = states.first().ok_or(Error::EmptyEnsemble)?;
    if first.grid.dim != 1 {
        return Err(Error::InvalidInput("front speed is defined for d = 1".into()));
    }
    if !(level > 0.0) {
        return Err(Error::InvalidInput(format!("level {level} must be > 0")));
    }
    let last = states.last().unwrap();
    let t_end = last.t;
    let empty = |status| FrontSpeed {
        speed: 0.0,
        fit_residual: 0.0,
        window: (first.t, t_end),
        status,
        positions: Vec::new(),
    };
    if last.values.iter().all(|&v| v < level) {
        return Ok(empty(FrontStatus::Decayed));
    }
    if last.values.iter().all(|&v| v >= level) && states.iter().all(|s| front_position(s, level).is_none()) {
        return Ok(empty(FrontStatus::Saturated));
    }
    let n = first.values.len();
    let mut status = FrontStatus::Propagating;
    let mut positions = Vec::new();
    for s in states {
        if s.values[n - 1] >= level {
            status = FrontStatus::Truncated;
            break;
        }
        if let Some(x) = front_position(s, level) {
            positions.push((s.t, x));
        }
    }
    let t_last = positions.last().map(|p| p.0).unwrap_or(first.t);
    let t_mid = first.t + (t_last - first.t) / 2.0;
    let fit: Vec<(f64, f64)> = positions.iter().copied().filter(|p| p.0 >= t_mid).collect();
    if fit.len() < 2 {
        return Err(Error::InvalidInput(
            "too few recorded front positions to fit a speed".into(),
        ));
    }
    let k = fit.len() as f64;
    let (mt, mx) = (
        fit.iter().map(|p| p.0).sum::<f64>() / k,
        fit.iter().map(|p| p.1).sum::<f64>() / k,
    );
    let stt: f64 = fit.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let stx: f64 = fit.iter().map(|p| (p.0 - mt) * (p.1 - mx)).sum();
    let speed = stx / stt;
    let rss: f64 = fit.iter().map(|p| (p.1 - mx - speed * (p.0 - mt)).powi(2)).sum();
    Ok(FrontSpeed {
        speed,
        fit_residual: (rss / k).sqrt(),
        window: (fit[0].0, fit[fit.len() - 1].0),
        status,
        positions,
    })
}

/// Linear spreading speed `inf_{λ>0} (∫ψ(x)e^{λx}dx − m)/λ` of a 1-D kernel,
/// by golden-section search on a bracket found by doubling.
pub fn linear_spreading_speed(kernel: &Kernel, m: f64) -> Result<f64> {
    if kernel.dim() != 1 || kernel.is_zero() {
        return Err(Error::InvalidInput("spreading speed needs a nonzero 1-D kernel".into()));
    }
    if kernel.total_mass() <= m {
        return Err(Error::InvalidInput("no spreading when ⟨a⁺⟩ <= m".into()));
    }
    let rc = kernel.r_cut();
    let cells = 4096;
    let h = 2.0 * rc / cells as f64;
    // Simpson on [−r_cut, r_cut]; kernels with a jump at r_cut use the
    // left limit there
    let mgf = |lam: f64| -> f64 {
        let mut s = 0.0;
        for i in 0..=cells {
            let x = -rc + i as f64 * h;
            let r = x.abs().min(rc * (1.0 - 1e-12));
            let c = if i == 0 || i == cells { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += c * kernel.eval_radial(r) * (lam * x).exp();
        }
        s * h / 3.0
    };
    let f = |lam: f64| (mgf(lam) - m) / lam;
    let (mut lo, mut hi) = (1e-3 / rc, 1.0 / rc);
    while f(2.0 * hi) < f(hi) {
        hi *= 2.0;
        if hi > 1e3 / rc {
            return Err(Error::InvalidInput("spreading-speed minimisation did not bracket".into()));
        }
    }
    hi *= 2.0;
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    Ok(f((lo + hi) / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tophat_params(m: f64, l: f64, dim: usize) -> ModelParams {
        let h = if dim == 1 { 0.5 } else { 1.0 / std::f64::consts::PI };
        ModelParams::new(
            m,
            Kernel::tophat(h, 1.0, dim).unwrap(),
            Kernel::tophat(h, 1.0, dim).unwrap(),
            l,
        )
        .unwrap()
    }

    #[test]
    fn closed_form_example() {
        let v = logistic_closed_form(0.1, 0.1, 1.0, 1.0, 1.0);
        assert!((v - 0.9 / (1.0 + 8.0 * (-0.9f64).exp())).abs() < 1e-15);
        assert!((v - 0.211637).abs() < 1e-6);
        assert!((logistic_closed_form(0.3, 0.5, 0.5, 1.0, 2.0) - 0.3 / 1.6).abs() < 1e-15);
    }

    #[test]
    fn uniform_fields() {
        for dim in [1, 2] {
            let p = tophat_params(0.1, 8.0, dim);
            let grid = FieldGrid::for_params(&p);
            let s = KineticSolver::new(&p, grid).unwrap();
            let eq = equilibrium(&p).unwrap();
            let r = s.rhs(&DensityField::uniform(grid, eq).values);
            assert!(r.iter().all(|v| v.abs() <= 1e-10));
            assert!(s.rhs(&vec![0.0; grid.cells()]).iter().all(|&v| v == 0.0));
            let c = 0.37;
            let (mp, mm) = (p.a_plus.total_mass(), p.a_minus.total_mass());
            let expect = (mp - 0.1) * c - mm * c * c;
            for v in s.rhs(&DensityField::uniform(grid, c).values) {
                assert!((v - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn homogeneous_logistic() {
        let p = tophat_params(0.1, 4.0, 1);
        let s = KineticSolver::new(&p, FieldGrid::for_params(&p)).unwrap();
        let traj = s.integrate(&DensityField::uniform(*s.grid(), 0.1), 1e-3, 1.0, 100).unwrap();
        for st in &traj.states {
            let exact = logistic_closed_form(0.1, 0.1, 1.0, 1.0, st.t);
            assert!(st.values.iter().all(|v| (v - exact).abs() < 1e-10));
        }
        assert!((traj.states.last().unwrap().values[0] - 0.211637).abs() < 1e-6);
    }

    #[test]
    fn rk4_order() {
        let p = tophat_params(0.1, 8.0, 1);
        let grid = FieldGrid::for_params(&p);
        let s = KineticSolver::new(&p, grid).unwrap();
        let rho0 = DensityField::from_fn(grid, |x| 0.2 + 0.1 * (2.0 * std::f64::consts::PI * x[0] / 8.0).sin());
        let end = |dt: f64| s.integrate(&rho0, dt, 2.0, usize::MAX).unwrap().states.pop().unwrap().values;
        let reference = end(0.5 / 4.0);
        let err = |v: Vec<f64>| v.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let ratio = err(end(0.5)) / err(end(0.25));
        assert!((13.0..20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn shift_equivariance_is_exact() {
        let p = tophat_params(0.1, 8.0, 1);
        let grid = FieldGrid::for_params(&p);
        let s = KineticSolver::new(&p, grid).unwrap();
        let rho0 = DensityField::from_fn(grid, |x| if x[0] < 2.0 { 0.5 } else { 0.01 * x[0] });
        let n = grid.cells();
        let mut shifted = rho0.clone();
        for i in 0..n {
            shifted.values[(i + 1) % n] = rho0.values[i];
        }
        let a = s.integrate(&rho0, 0.05, 1.0, usize::MAX).unwrap().states.pop().unwrap();
        let b = s.integrate(&shifted, 0.05, 1.0, usize::MAX).unwrap().states.pop().unwrap();
        for i in 0..n {
            assert_eq!(b.values[(i + 1) % n], a.values[i]);
        }
    }

    #[test]
    fn perturbations_of_equilibrium_decay() {
        let p = tophat_params(0.1, 8.0, 1);
        let grid = FieldGrid::for_params(&p);
        let s = KineticSolver::new(&p, grid).unwrap();
        let eq = equilibrium(&p).unwrap();
        let rho0 = DensityField::from_fn(grid, |x| eq + 0.05 * (2.0 * std::f64::consts::PI * x[0] / 8.0).cos());
        let traj = s.integrate(&rho0, 0.05, 5.0, 1).unwrap();
        let dev: Vec<f64> = traj
            .states
            .iter()
            .map(|st| st.values.iter().map(|v| (v - eq).abs()).fold(0.0, f64::max))
            .collect();
        assert!(dev.windows(2).all(|w| w[1] <= w[0]));
        assert!(dev.last().unwrap() < &0.02);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let p = tophat_params(0.1, 8.0, 1);
        assert!(KineticSolver::new(&p, FieldGrid::new(8.0, 1, 16).unwrap()).is_err());
    }

    #[test]
    fn front_speed_degenerate_cases() {
        let p = tophat_params(0.1, 8.0, 1);
        let grid = FieldGrid::for_params(&p);
        let s = KineticSolver::new(&p, grid).unwrap();
        let eq = equilibrium(&p).unwrap();
        let traj = s.integrate(&DensityField::uniform(grid, eq), 0.1, 2.0, 1).unwrap();
        let f = front_speed(&traj, eq / 2.0).unwrap();
        assert_eq!((f.speed, f.status), (0.0, FrontStatus::Saturated));

        let sub = tophat_params(1.5, 8.0, 1);
        let s = KineticSolver::new(&sub, grid).unwrap();
        let block = DensityField::from_fn(grid, |x| if (3.0..5.0).contains(&x[0]) { 0.5 } else { 0.0 });
        let traj = s.integrate(&block, 0.1, 5.0, 1).unwrap();
        assert_eq!(front_speed(&traj, 0.2).unwrap().status, FrontStatus::Decayed);
    }

    #[test]
    fn spreading_speed_of_tophat() {
        let k = Kernel::tophat(0.5, 1.0, 1).unwrap();
        let c = linear_spreading_speed(&k, 0.1).unwrap();
        // closed-form generating function sinh(λ)/λ, scanned on a fine grid
        let scan = (1..200000)
            .map(|i| {
                let l = i as f64 * 1e-4;
                (l.sinh() / l - 0.1) / l
            })
            .fold(f64::INFINITY, f64::min);
        assert!((c - scan).abs() < 1e-6, "{c} {scan}");
    }
}
