//! Translation-invariant correlation hierarchy truncated at order two.
//!
//! The state is the density `u = k⁽¹⁾` and the radial pair function
//! `w(r) = k⁽²⁾(0, r·e₁)`. Third-order correlations enter through a closure.
//! Beyond the grid `w` is taken to be uncorrelated, `w = u²`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Kernel, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Closure {
    /// `k⁽³⁾ = u³`
    Poisson,
    /// `k⁽³⁾(x,y,z) = w(|x−y|) w(|y−z|) w(|x−z|) / u³`
    #[default]
    Kirkwood,
    Zero,
}

/// `Full` keeps every term of the order-two equation. `Mesoscopic` drops the
/// two local terms `−2a⁻(r)w(r)` and `2a⁺(r)u`, which vanish under the
/// long-range kernel scaling; with the Poisson closure it then carries
/// `w = u²` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    #[default]
    Full,
    Mesoscopic,
}

/// Uniform radial grid `r_i = i·dr`, `i = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub dr: f64,
    pub n: usize,
}

impl RadialGrid {
    pub fn new(dr: f64, r_max: f64) -> Result<Self> {
        if !(dr > 0.0 && r_max >= dr && r_max.is_finite()) {
            return Err(Error::InvalidInput(format!("bad radial grid dr = {dr}, r_max = {r_max}")));
        }
        let n = (r_max / dr).round() as usize + 1;
        Ok(RadialGrid { dr, n })
    }

    /// `dr = r_cut / 64` and `r_max = 4 r_cut`, with `r_cut` the larger
    /// kernel cutoff.
    pub fn for_params(p: &ModelParams) -> Self {
        let rc = cutoff(p);
        RadialGrid {
            dr: rc / 64.0,
            n: 257,
        }
    }

    pub fn r(&self, i: usize) -> f64 {
        i as f64 * self.dr
    }

    pub fn r_max(&self) -> f64 {
        self.r(self.n - 1)
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.r(i)).collect()
    }
}

fn cutoff(p: &ModelParams) -> f64 {
    let rc = p.a_plus.r_cut().max(p.a_minus.r_cut());
    if rc > 0.0 {
        rc
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyState {
    pub t: f64,
    pub u: f64,
    pub w: Vec<f64>,
}

impl HierarchyState {
    /// Poisson initial condition of intensity `u`: `w ≡ u²`.
    pub fn poisson(u: f64, grid: &RadialGrid) -> Self {
        HierarchyState {
            t: 0.0,
            u,
            w: vec![u * u; grid.n],
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    /// Grid index of `|z|`.
    s: usize,
    /// Interpolation of `w` at `|r·e₁ − z|`; `lo == usize::MAX` means far field.
    lo: usize,
    frac: f64,
    weight: f64,
}

/// Quadrature for `∫ a(|z|) f(|z|, |r_i e₁ − z|) dz` at every grid radius,
/// with weights scaled so that they sum to `⟨a⟩`.
#[derive(Debug, Clone)]
struct Stencil {
    radial: Vec<(usize, f64)>,
    nodes: Vec<Vec<Node>>,
}

const ANGLES: usize = 64;

impl Stencil {
    fn new(kernel: &Kernel, grid: &RadialGrid) -> Self {
        let n = grid.n;
        if kernel.is_zero() {
            return Stencil {
                radial: Vec::new(),
                nodes: vec![Vec::new(); n],
            };
        }
        let jmax = ((kernel.r_cut() / grid.dr).ceil() as usize).min(n - 1);
        let trap = |j: usize| if j == jmax { 0.5 } else { 1.0 } * grid.dr;
        let locate = |d: f64| -> (usize, f64) {
            if d > grid.r_max() * (1.0 + 1e-12) {
                return (usize::MAX, 0.0);
            }
            let x = d / grid.dr;
            let lo = (x.floor() as usize).min(n - 2);
            (lo, (x - lo as f64).clamp(0.0, 1.0))
        };
        // (s index, weight, displacement of z along e₁ and across)
        let mut base: Vec<(usize, f64, f64, f64)> = Vec::new();
        if kernel.dim() == 1 {
            for j in 0..=jmax {
                let s = grid.r(j);
                let a = kernel.eval_radial(s);
                if j == 0 {
                    base.push((0, grid.dr * a, 0.0, 0.0));
                } else {
                    base.push((j, trap(j) * a, s, 0.0));
                    base.push((j, trap(j) * a, -s, 0.0));
                }
            }
        } else {
            // angles in [0, π] by symmetry, endpoints once and the rest twice
            let dphi = 2.0 * PI / ANGLES as f64;
            for j in 1..=jmax {
                let s = grid.r(j);
                let a = kernel.eval_radial(s);
                for k in 0..=ANGLES / 2 {
                    let mult = if k == 0 || k == ANGLES / 2 { 1.0 } else { 2.0 };
                    let phi = k as f64 * dphi;
                    base.push((j, trap(j) * s * a * dphi * mult, s * phi.cos(), s * phi.sin()));
                }
            }
        }
        let total: f64 = base.iter().map(|b| b.1).sum();
        let scale = if total > 0.0 { kernel.total_mass() / total } else { 0.0 };
        let mut radial = vec![0.0; jmax + 1];
        for b in &base {
            radial[b.0] += b.1 * scale;
        }
        let nodes = (0..n)
            .map(|i| {
                let r = grid.r(i);
                base.iter()
                    .filter(|b| b.1 != 0.0)
                    .map(|&(s, wgt, zx, zy)| {
                        let (lo, frac) = locate(((r - zx).powi(2) + zy * zy).sqrt());
                        Node {
                            s,
                            lo,
                            frac,
                            weight: wgt * scale,
                        }
                    })
                    .collect()
            })
            .collect();
        Stencil {
            radial: radial.into_iter().enumerate().filter(|r| r.1 != 0.0).collect(),
            nodes,
        }
    }

    /// `∫ a(|z|) w(|z|) dz`
    fn moment(&self, w: &[f64]) -> f64 {
        self.radial.iter().map(|&(j, q)| q * w[j]).sum()
    }

    fn at(w: &[f64], far: f64, nd: &Node) -> f64 {
        if nd.lo == usize::MAX {
            far
        } else {
            w[nd.lo] * (1.0 - nd.frac) + w[nd.lo + 1] * nd.frac
        }
    }

    /// `(a ⋆ w)(r_i)`
    fn convolve(&self, i: usize, w: &[f64], far: f64) -> f64 {
        self.nodes[i].iter().map(|nd| nd.weight * Self::at(w, far, nd)).sum()
    }

    /// `∫ a(|z|) w(|z|) w(|r_i e₁ − z|) dz`
    fn triple(&self, i: usize, w: &[f64], far: f64) -> f64 {
        self.nodes[i]
            .iter()
            .map(|nd| nd.weight * w[nd.s] * Self::at(w, far, nd))
            .sum()
    }
}

/// The order-two hierarchy for one parameter set, with precomputed
/// quadratures.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    grid: RadialGrid,
    closure: Closure,
    scaling: Scaling,
    m: f64,
    mass_plus: f64,
    mass_minus: f64,
    a_plus_r: Vec<f64>,
    a_minus_r: Vec<f64>,
    plus: Stencil,
    minus: Stencil,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyTrajectory {
    pub states: Vec<HierarchyState>,
    /// Number of negative values reset to zero.
    pub clipped: usize,
}

const BLOW_UP: f64 = 1e12;

impl Hierarchy {
    pub fn new(p: &ModelParams, grid: RadialGrid, closure: Closure, scaling: Scaling) -> Result<Self> {
        let rc = p.a_plus.r_cut().max(p.a_minus.r_cut());
        if grid.n < 2 || grid.r_max() < rc * (1.0 - 1e-12) {
            return Err(Error::InvalidInput(format!(
                "radial grid r_max = {} must cover the kernel cutoff {rc}",
                grid.r_max()
            )));
        }
        let radii = grid.radii();
        Ok(Hierarchy {
            grid,
            closure,
            scaling,
            m: p.m,
            mass_plus: p.a_plus.total_mass(),
            mass_minus: p.a_minus.total_mass(),
            a_plus_r: radii.iter().map(|&r| p.a_plus.eval_radial(r)).collect(),
            a_minus_r: radii.iter().map(|&r| p.a_minus.eval_radial(r)).collect(),
            plus: Stencil::new(&p.a_plus, &grid),
            minus: Stencil::new(&p.a_minus, &grid),
        })
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn closure(&self) -> Closure {
        self.closure
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    /// Time derivatives `(du/dt, dw/dt)`.
    pub fn rhs(&self, u: f64, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        if w.len() != self.grid.n {
            return Err(Error::InvalidInput(format!(
                "w has {} values, grid has {}",
                w.len(),
                self.grid.n
            )));
        }
        let far = u * u;
        let du = (self.mass_plus - self.m) * u - self.minus.moment(w);
        let kirkwood = self.closure == Closure::Kirkwood;
        if kirkwood && u < 1e-12 {
            return Err(Error::ClosureSingularity(u));
        }
        let u3 = u * u * u;
        let dw = (0..self.grid.n)
            .map(|i| {
                let third = match self.closure {
                    Closure::Poisson => self.mass_minus * u3,
                    Closure::Zero => 0.0,
                    Closure::Kirkwood => w[i] / u3 * self.minus.triple(i, w, far),
                };
                let mut d = -2.0 * self.m * w[i] + 2.0 * self.plus.convolve(i, w, far) - 2.0 * third;
                if self.scaling == Scaling::Full {
                    d += -2.0 * self.a_minus_r[i] * w[i] + 2.0 * self.a_plus_r[i] * u;
                }
                d
            })
            .collect();
        Ok((du, dw))
    }

    /// Classical RK4 from `s0` to `t_max`, recording every `stride` steps plus
    /// the final state. Negative values are reset to zero and counted.
    pub fn integrate(&self, s0: &HierarchyState, dt: f64, t_max: f64, stride: usize) -> Result<HierarchyTrajectory> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("time step dt = {dt} must be > 0")));
        }
        if t_max < s0.t {
            return Err(Error::NegativeTime(t_max - s0.t));
        }
        let stride = stride.max(1);
        let mut s = s0.clone();
        let mut states = vec![s.clone()];
        let mut clipped = 0;
        let steps = ((t_max - s0.t) / dt - 1e-9).ceil().max(0.0) as usize;
        let add = |u: f64, w: &[f64], h: f64, du: f64, dw: &[f64]| -> (f64, Vec<f64>) {
            (u + h * du, w.iter().zip(dw).map(|(a, b)| a + h * b).collect())
        };
        for step in 1..=steps {
            let h = dt.min(t_max - s.t);
            let (k1u, k1w) = self.rhs(s.u, &s.w)?;
            let (u2, w2) = add(s.u, &s.w, h / 2.0, k1u, &k1w);
            let (k2u, k2w) = self.rhs(u2, &w2)?;
            let (u3, w3) = add(s.u, &s.w, h / 2.0, k2u, &k2w);
            let (k3u, k3w) = self.rhs(u3, &w3)?;
            let (u4, w4) = add(s.u, &s.w, h, k3u, &k3w);
            let (k4u, k4w) = self.rhs(u4, &w4)?;
            s.u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
            for i in 0..s.w.len() {
                s.w[i] += h / 6.0 * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i]);
            }
            s.t = if step == steps { t_max } else { s.t + h };
            let big = s.w.iter().fold(s.u.abs(), |a, b| a.max(b.abs()));
            if !(big <= BLOW_UP) {
                return Err(Error::Divergence { t: s.t, value: big });
            }
            for v in std::iter::once(&mut s.u).chain(s.w.iter_mut()) {
                if *v < 0.0 {
                    *v = 0.0;
                    clipped += 1;
                }
            }
            if step % stride == 0 || step == steps {
                states.push(s.clone());
            }
        }
        Ok(HierarchyTrajectory { states, clipped })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(m: f64, plus: Kernel, minus: Kernel, l: f64) -> ModelParams {
        ModelParams::new(m, plus, minus, l).unwrap()
    }

    fn logistic(u0: f64, growth: f64, c: f64, t: f64) -> f64 {
        let eq = growth / c;
        eq / (1.0 + (eq / u0 - 1.0) * (-growth * t).exp())
    }

    #[test]
    fn mean_field_rhs_is_logistic() {
        let p = params(
            0.1,
            Kernel::tophat(0.5, 1.0, 1).unwrap(),
            Kernel::gaussian(0.5, 0.8, 1).unwrap(),
            20.0,
        );
        let grid = RadialGrid::for_params(&p);
        let h = Hierarchy::new(&p, grid, Closure::Poisson, Scaling::Full).unwrap();
        let u = 0.37;
        let (du, _) = h.rhs(u, &vec![u * u; grid.n]).unwrap();
        let (mp, mm) = (p.a_plus.total_mass(), p.a_minus.total_mass());
        assert!((mm - 0.8).abs() < 1e-7);
        assert!((du - ((mp - 0.1) * u - mm * u * u)).abs() < 1e-13);
    }

    #[test]
    fn pure_growth_without_competition() {
        let p = params(0.3, Kernel::tophat(0.5, 1.0, 2).unwrap(), Kernel::zero(2), 10.0);
        let grid = RadialGrid::new(0.05, 2.0).unwrap();
        let h = Hierarchy::new(&p, grid, Closure::Kirkwood, Scaling::Full).unwrap();
        let w: Vec<f64> = grid.radii().iter().map(|r| 1.0 + (-r).exp()).collect();
        let (du, _) = h.rhs(1.5, &w).unwrap();
        assert!((du - (PI * 0.5 - 0.3) * 1.5).abs() < 1e-12);
    }

    #[test]
    fn mesoscopic_embedding() {
        for dim in [1, 2] {
            let p = params(
                0.1,
                Kernel::gaussian(0.6, 1.0, dim).unwrap(),
                Kernel::tophat(if dim == 1 { 0.5 } else { 1.0 / PI }, 1.0, dim).unwrap(),
                12.0,
            );
            let grid = RadialGrid::new(0.1, 4.0).unwrap();
            let h = Hierarchy::new(&p, grid, Closure::Poisson, Scaling::Mesoscopic).unwrap();
            let traj = h.integrate(&HierarchyState::poisson(0.1, &grid), 1e-3, 2.0, 500).unwrap();
            for s in &traj.states {
                let exact = logistic(0.1, 0.9, 1.0, s.t);
                assert!((s.u - exact).abs() < 1e-6, "d={dim} t={} {} {}", s.t, s.u, exact);
                for w in &s.w {
                    assert!((w - s.u * s.u).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn fixed_point_is_stationary() {
        let p = params(
            0.2,
            Kernel::tophat(0.5, 1.0, 1).unwrap(),
            Kernel::tophat(0.25, 2.0, 1).unwrap(),
            20.0,
        );
        let grid = RadialGrid::for_params(&p);
        let h = Hierarchy::new(&p, grid, Closure::Poisson, Scaling::Mesoscopic).unwrap();
        let u = (1.0 - 0.2) / 1.0;
        let traj = h.integrate(&HierarchyState::poisson(u, &grid), 0.01, 10.0, 1000).unwrap();
        let last = traj.states.last().unwrap();
        assert_eq!(last.t, 10.0);
        assert!((last.u - u).abs() < 1e-8);
        assert!(last.w.iter().all(|w| (w - u * u).abs() < 1e-8));
    }

    #[test]
    fn zero_state_stays_zero() {
        let p = params(
            0.2,
            Kernel::tophat(0.5, 1.0, 1).unwrap(),
            Kernel::tophat(0.25, 2.0, 1).unwrap(),
            20.0,
        );
        let grid = RadialGrid::for_params(&p);
        let h = Hierarchy::new(&p, grid, Closure::Poisson, Scaling::Full).unwrap();
        let traj = h.integrate(&HierarchyState::poisson(0.0, &grid), 0.01, 1.0, 10).unwrap();
        for s in traj.states {
            assert_eq!(s.u, 0.0);
            assert!(s.w.iter().all(|&w| w == 0.0));
        }
        let hk = Hierarchy::new(&p, grid, Closure::Kirkwood, Scaling::Full).unwrap();
        assert!(matches!(hk.rhs(0.0, &vec![0.0; grid.n]), Err(Error::ClosureSingularity(_))));
    }

    #[test]
    fn rk4_is_fourth_order() {
        let p = params(
            0.2,
            Kernel::gaussian(0.5, 1.0, 1).unwrap(),
            Kernel::gaussian(0.7, 0.5, 1).unwrap(),
            20.0,
        );
        let grid = RadialGrid::new(0.05, 5.0).unwrap();
        let h = Hierarchy::new(&p, grid, Closure::Kirkwood, Scaling::Full).unwrap();
        let s0 = HierarchyState::poisson(0.5, &grid);
        let end = |dt: f64| h.integrate(&s0, dt, 2.0, usize::MAX).unwrap().states.pop().unwrap();
        let reference = end(0.25 / 4.0);
        let err = |s: &HierarchyState| {
            s.w.iter()
                .zip(&reference.w)
                .map(|(a, b)| (a - b).abs())
                .fold((s.u - reference.u).abs(), f64::max)
        };
        let ratio = err(&end(0.25)) / err(&end(0.125));
        assert!((13.0..20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn blow_up_is_reported() {
        let p = params(0.0, Kernel::tophat(50.0, 1.0, 1).unwrap(), Kernel::zero(1), 20.0);
        let grid = RadialGrid::new(0.1, 2.0).unwrap();
        let h = Hierarchy::new(&p, grid, Closure::Zero, Scaling::Full).unwrap();
        let e = h.integrate(&HierarchyState::poisson(1.0, &grid), 0.01, 10.0, 1).unwrap_err();
        assert!(matches!(e, Error::Divergence { .. }));
    }

    #[test]
    fn grid_must_cover_kernels() {
        let p = params(0.1, Kernel::tophat(0.5, 1.0, 1).unwrap(), Kernel::zero(1), 20.0);
        assert!(Hierarchy::new(&p, RadialGrid::new(0.1, 0.5).unwrap(), Closure::Zero, Scaling::Full).is_err());
    }
}
