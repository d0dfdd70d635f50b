//! Dispersal and competition kernels.
//!
//! A [`Kernel`] is a radial, even, nonnegative function `a(x) = a(|x|)` with a
//! hard cutoff `r_cut`. Every derived quantity (mass, sup norm, sampling law)
//! refers to the *truncated* kernel, so the simulator, the lattice operators,
//! the hierarchy and the kinetic solver all describe the same model.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative level below which a kernel with unbounded support is cut off.
pub const AUTO_CUTOFF_LEVEL: f64 = 1e-8;

/// Displacement or position in up to two dimensions; unused coordinates are zero.
pub type Vector = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum KernelShape {
    /// `a ≡ 0`: pure death (as `a⁺`) or the contact model (as `a⁻`).
    Zero,
    /// `mass · (2πσ²)^{-d/2} exp(-r²/2σ²)`.
    Gaussian {
        sigma: f64,
        #[serde(default = "one")]
        mass: f64,
    },
    /// `height · 1{r ≤ radius}`.
    Tophat { height: f64, radius: f64 },
    /// `amplitude · exp(-rate · r)`.
    Exponential {
        rate: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Piecewise-linear radial profile, zero beyond the last radius.
    Tabulated { radii: Vec<f64>, values: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

/// Where a kernel's cutoff came from. Only automatic cutoffs may be shrunk to
/// fit a periodic box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutoffKind {
    Natural,
    Auto,
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    shape: KernelShape,
    dim: usize,
    r_cut: f64,
    cutoff_kind: CutoffKind,
    mass: f64,
    sup: f64,
    /// Cumulative radial mass at each table radius (tabulated shapes only).
    table_cumulative: Vec<f64>,
}

impl Kernel {
    pub fn new(shape: KernelShape, dim: usize) -> Result<Self> {
        Self::build(shape, dim, None)
    }

    pub fn with_cutoff(shape: KernelShape, dim: usize, r_cut: f64) -> Result<Self> {
        Self::build(shape, dim, Some(r_cut))
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(KernelShape::Zero, dim).expect("zero kernel is always valid")
    }

    pub fn gaussian(sigma: f64, mass: f64, dim: usize) -> Result<Self> {
        Self::new(KernelShape::Gaussian { sigma, mass }, dim)
    }

    pub fn tophat(height: f64, radius: f64, dim: usize) -> Result<Self> {
        Self::new(KernelShape::Tophat { height, radius }, dim)
    }

    pub fn exponential(rate: f64, amplitude: f64, dim: usize) -> Result<Self> {
        Self::new(KernelShape::Exponential { rate, amplitude }, dim)
    }

    pub fn tabulated(radii: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        Self::new(KernelShape::Tabulated { radii, values }, dim)
    }

    /// Loads a two-column `r,value` CSV (optional header) with strictly
    /// increasing radii starting at 0.
    pub fn load_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidKernel(format!("{}: {e}", path.display())))?;
        let mut radii = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (Some(r), Some(v), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::InvalidKernel(format!(
                    "{}:{}: expected two columns",
                    path.display(),
                    lineno + 1
                )));
            };
            match (r.parse::<f64>(), v.parse::<f64>()) {
                (Ok(r), Ok(v)) => {
                    radii.push(r);
                    values.push(v);
                }
                _ if lineno == 0 && radii.is_empty() => continue, // header
                _ => {
                    return Err(Error::InvalidKernel(format!(
                        "{}:{}: cannot parse '{line}'",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        Ok((radii, values))
    }

    fn build(shape: KernelShape, dim: usize, r_cut: Option<f64>) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidKernel(format!("dimension {dim} not in {{1, 2}}")));
        }
        validate_shape(&shape)?;
        let (natural, kind) = natural_cutoff(&shape);
        let (r_cut, cutoff_kind) = match r_cut {
            Some(r) if !(r >= 0.0 && r.is_finite()) => {
                return Err(Error::InvalidKernel(format!("r_cut = {r} must be finite and >= 0")))
            }
            Some(r) => (r.min(natural), CutoffKind::Explicit),
            None => (natural, kind),
        };
        let mut kernel = Kernel {
            shape,
            dim,
            r_cut,
            cutoff_kind,
            mass: 0.0,
            sup: 0.0,
            table_cumulative: Vec::new(),
        };
        kernel.refresh();
        Ok(kernel)
    }

    fn refresh(&mut self) {
        if let KernelShape::Tabulated { radii, .. } = &self.shape {
            self.table_cumulative = radii.iter().map(|&r| self.radial_integral(r)).collect();
        }
        self.mass = self.radial_integral(self.r_cut);
        self.sup = match &self.shape {
            KernelShape::Zero => 0.0,
            KernelShape::Gaussian { sigma, mass } => {
                mass * (2.0 * PI * sigma * sigma).powf(-(self.dim as f64) / 2.0)
            }
            KernelShape::Tophat { height, .. } => *height,
            KernelShape::Exponential { amplitude, .. } => *amplitude,
            KernelShape::Tabulated { radii, values } => radii
                .iter()
                .zip(values)
                .filter(|(r, _)| **r <= self.r_cut)
                .map(|(_, v)| *v)
                .fold(0.0, f64::max),
        };
        if self.r_cut == 0.0 {
            self.sup = 0.0;
        }
    }

    /// Shrinks an automatic cutoff to `half_box`; natural or explicit cutoffs
    /// beyond `half_box` are a minimum-image violation.
    pub fn fit_to_box(&self, half_box: f64, what: &str) -> Result<Kernel> {
        if self.r_cut <= half_box * (1.0 + 1e-12) || self.is_zero() {
            return Ok(self.clone());
        }
        match self.cutoff_kind {
            CutoffKind::Auto => {
                let mut k = self.clone();
                k.r_cut = half_box;
                k.refresh();
                Ok(k)
            }
            _ => Err(Error::MinimumImage {
                what: what.to_string(),
                r_cut: self.r_cut,
                half_box,
            }),
        }
    }

    pub fn shape(&self) -> &KernelShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn r_cut(&self) -> f64 {
        self.r_cut
    }

    pub fn cutoff_kind(&self) -> CutoffKind {
        self.cutoff_kind
    }

    pub fn is_zero(&self) -> bool {
        self.sup == 0.0
    }

    /// Radial profile `a(r)`, zero beyond the cutoff.
    pub fn eval_radial(&self, r: f64) -> f64 {
        let r = r.abs();
        if r > self.r_cut {
            return 0.0;
        }
        match &self.shape {
            KernelShape::Zero => 0.0,
            KernelShape::Gaussian { sigma, mass } => {
                mass * (2.0 * PI * sigma * sigma).powf(-(self.dim as f64) / 2.0)
                    * (-r * r / (2.0 * sigma * sigma)).exp()
            }
            KernelShape::Tophat { height, radius } => {
                if r <= *radius {
                    *height
                } else {
                    0.0
                }
            }
            KernelShape::Exponential { rate, amplitude } => amplitude * (-rate * r).exp(),
            KernelShape::Tabulated { radii, values } => interpolate(radii, values, r),
        }
    }

    /// `a(x)` for a displacement vector; only the first `dim` coordinates count.
    pub fn eval(&self, x: &Vector) -> f64 {
        self.eval_radial(norm(x, self.dim))
    }

    /// `⟨a⟩`, the integral of the truncated kernel.
    pub fn total_mass(&self) -> f64 {
        self.mass
    }

    /// `‖a‖`, the supremum of the truncated kernel.
    pub fn sup_norm(&self) -> f64 {
        self.sup
    }

    /// Integral of the kernel over the ball of radius `r` (capped at `r_cut`).
    pub fn mass_within(&self, r: f64) -> f64 {
        self.radial_integral(r.min(self.r_cut))
    }

    fn radial_integral(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        let d = self.dim;
        match &self.shape {
            KernelShape::Zero => 0.0,
            KernelShape::Gaussian { sigma, mass } => {
                let s = r / (sigma * std::f64::consts::SQRT_2);
                if d == 1 {
                    mass * statrs::function::erf::erf(s)
                } else {
                    mass * (-(s * s)).exp_m1().abs()
                }
            }
            KernelShape::Tophat { height, radius } => {
                let r = r.min(*radius);
                if d == 1 {
                    2.0 * height * r
                } else {
                    PI * height * r * r
                }
            }
            KernelShape::Exponential { rate, amplitude } => {
                let br = rate * r;
                if d == 1 {
                    2.0 * amplitude * (-(-br).exp_m1()) / rate
                } else {
                    2.0 * PI * amplitude * (1.0 - (-br).exp() * (1.0 + br)) / (rate * rate)
                }
            }
            KernelShape::Tabulated { radii, values } => {
                let mut acc = 0.0;
                for i in 0..radii.len() - 1 {
                    let (r0, r1) = (radii[i], radii[i + 1]);
                    if r0 >= r {
                        break;
                    }
                    let hi = r1.min(r);
                    acc += segment_integral(r0, r1, values[i], values[i + 1], r0, hi, d);
                }
                let shell = if d == 1 { 2.0 } else { 2.0 * PI };
                shell * acc
            }
        }
    }

    /// Draws a displacement with density `a(x) / ⟨a⟩` on the truncated support.
    pub fn sample_displacement<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vector> {
        if self.is_zero() || self.mass <= 0.0 {
            return Err(Error::InvalidKernel("cannot sample from a zero kernel".into()));
        }
        let d = self.dim;
        let radius = match &self.shape {
            KernelShape::Gaussian { sigma, .. } => {
                let normal = Normal::new(0.0, *sigma).expect("sigma validated");
                loop {
                    let mut v = [0.0; 2];
                    for c in v.iter_mut().take(d) {
                        *c = normal.sample(rng);
                    }
                    if norm(&v, d) <= self.r_cut {
                        return Ok(v);
                    }
                }
            }
            KernelShape::Tophat { radius, .. } => {
                let rmax = radius.min(self.r_cut);
                let u: f64 = rng.random();
                if d == 1 {
                    rmax * u
                } else {
                    rmax * u.sqrt()
                }
            }
            KernelShape::Exponential { rate, .. } => {
                if d == 1 {
                    let u: f64 = rng.random();
                    let tail = (-rate * self.r_cut).exp_m1();
                    -(u * tail).ln_1p() / rate
                } else {
                    // Radial law Gamma(2, rate) restricted to [0, r_cut].
                    loop {
                        let e1: f64 = -(1.0 - rng.random::<f64>()).ln();
                        let e2: f64 = -(1.0 - rng.random::<f64>()).ln();
                        let r = (e1 + e2) / rate;
                        if r <= self.r_cut {
                            break r;
                        }
                    }
                }
            }
            KernelShape::Tabulated { radii, values } => {
                let target = rng.random::<f64>() * self.mass;
                self.invert_table(radii, values, target)
            }
            KernelShape::Zero => unreachable!(),
        };
        Ok(random_direction(radius, d, rng))
    }

    fn invert_table(&self, radii: &[f64], values: &[f64], target: f64) -> f64 {
        let cum = &self.table_cumulative;
        let seg = cum.partition_point(|&c| c < target).clamp(1, radii.len() - 1) - 1;
        let (mut lo, mut hi) = (radii[seg], radii[seg + 1].min(self.r_cut));
        if lo >= hi {
            return lo;
        }
        let shell = if self.dim == 1 { 2.0 } else { 2.0 * PI };
        let base = cum[seg];
        let (r0, r1, v0, v1) = (radii[seg], radii[seg + 1], values[seg], values[seg + 1]);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let c = base + shell * segment_integral(r0, r1, v0, v1, r0, mid, self.dim);
            if c < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

fn validate_shape(shape: &KernelShape) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidKernel(msg));
    let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
    match shape {
        KernelShape::Zero => Ok(()),
        KernelShape::Gaussian { sigma, mass } => {
            if !(*sigma > 0.0 && sigma.is_finite()) {
                bad(format!("gaussian sigma = {sigma} must be > 0"))
            } else if !finite_nonneg(*mass) {
                bad(format!("gaussian mass = {mass} must be >= 0"))
            } else {
                Ok(())
            }
        }
        KernelShape::Tophat { height, radius } => {
            if !(*radius > 0.0 && radius.is_finite()) {
                bad(format!("tophat radius = {radius} must be > 0"))
            } else if !finite_nonneg(*height) {
                bad(format!("tophat height = {height} must be >= 0"))
            } else {
                Ok(())
            }
        }
        KernelShape::Exponential { rate, amplitude } => {
            if !(*rate > 0.0 && rate.is_finite()) {
                bad(format!("exponential rate = {rate} must be > 0"))
            } else if !finite_nonneg(*amplitude) {
                bad(format!("exponential amplitude = {amplitude} must be >= 0"))
            } else {
                Ok(())
            }
        }
        KernelShape::Tabulated { radii, values } => {
            if radii.len() < 2 || radii.len() != values.len() {
                return bad("table needs at least two rows of (r, value)".into());
            }
            if radii[0] != 0.0 {
                return bad(format!("table must start at r = 0, got {}", radii[0]));
            }
            if radii.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
                return bad("table radii must be strictly increasing".into());
            }
            if values.iter().any(|v| !finite_nonneg(*v)) {
                return bad("table values must be finite and >= 0".into());
            }
            Ok(())
        }
    }
}

fn natural_cutoff(shape: &KernelShape) -> (f64, CutoffKind) {
    let level = (1.0 / AUTO_CUTOFF_LEVEL).ln();
    match shape {
        KernelShape::Zero => (0.0, CutoffKind::Natural),
        KernelShape::Gaussian { sigma, .. } => (sigma * (2.0 * level).sqrt(), CutoffKind::Auto),
        KernelShape::Tophat { radius, .. } => (*radius, CutoffKind::Natural),
        KernelShape::Exponential { rate, .. } => (level / rate, CutoffKind::Auto),
        KernelShape::Tabulated { radii, .. } => (*radii.last().unwrap(), CutoffKind::Natural),
    }
}

fn interpolate(radii: &[f64], values: &[f64], r: f64) -> f64 {
    let last = radii.len() - 1;
    if r > radii[last] {
        return 0.0;
    }
    let i = radii.partition_point(|&x| x <= r).clamp(1, last) - 1;
    let (r0, r1) = (radii[i], radii[i + 1]);
    let w = (r - r0) / (r1 - r0);
    values[i] + w * (values[i + 1] - values[i])
}

/// `∫_lo^hi a(r) r^{d-1} dr` for the linear segment through `(r0,v0)`, `(r1,v1)`.
fn segment_integral(r0: f64, r1: f64, v0: f64, v1: f64, lo: f64, hi: f64, dim: usize) -> f64 {
    let slope = (v1 - v0) / (r1 - r0);
    let c = v0 - slope * r0;
    if dim == 1 {
        c * (hi - lo) + 0.5 * slope * (hi * hi - lo * lo)
    } else {
        0.5 * c * (hi * hi - lo * lo) + slope * (hi.powi(3) - lo.powi(3)) / 3.0
    }
}

fn random_direction<R: Rng + ?Sized>(radius: f64, dim: usize, rng: &mut R) -> Vector {
    if dim == 1 {
        if rng.random::<bool>() {
            [radius, 0.0]
        } else {
            [-radius, 0.0]
        }
    } else {
        let phi = 2.0 * PI * rng.random::<f64>();
        [radius * phi.cos(), radius * phi.sin()]
    }
}

pub(crate) fn norm(x: &Vector, dim: usize) -> f64 {
    if dim == 1 {
        x[0].abs()
    } else {
        x[0].hypot(x[1])
    }
}

/// Outcome of the pointwise comparison `a⁺ ≤ θ a⁻`.
#[derive(Debug, Clone, PartialEq)]
pub enum Domination {
    Theta(f64),
    NoFiniteTheta(String),
}

impl Domination {
    pub fn theta(&self) -> Option<f64> {
        match self {
            Domination::Theta(t) => Some(*t),
            Domination::NoFiniteTheta(_) => None,
        }
    }
}

const THETA_GRID: usize = 4096;

/// Least `θ` with `a⁺(x) ≤ θ a⁻(x)` everywhere.
pub fn domination_theta(a_plus: &Kernel, a_minus: &Kernel) -> Result<Domination> {
    if a_plus.dim != a_minus.dim {
        return Err(Error::InvalidKernel(format!(
            "kernel dimensions differ: {} vs {}",
            a_plus.dim, a_minus.dim
        )));
    }
    if a_plus.is_zero() {
        return Ok(Domination::Theta(0.0));
    }
    if a_minus.is_zero() {
        return Ok(Domination::NoFiniteTheta("a⁻ vanishes identically".into()));
    }
    if a_plus.r_cut > a_minus.r_cut * (1.0 + 1e-12) {
        return Ok(Domination::NoFiniteTheta(format!(
            "a⁺ is supported up to r = {} but a⁻ vanishes beyond r = {}",
            a_plus.r_cut, a_minus.r_cut
        )));
    }
    match (&a_plus.shape, &a_minus.shape) {
        (
            KernelShape::Tophat { height: hp, radius: rp },
            KernelShape::Tophat { height: hm, radius: rm },
        ) => {
            return Ok(if rp.min(a_plus.r_cut) <= rm.min(a_minus.r_cut) {
                Domination::Theta(hp / hm)
            } else {
                Domination::NoFiniteTheta("tophat a⁺ is wider than tophat a⁻".into())
            });
        }
        (
            KernelShape::Gaussian { sigma: sp, mass: mp },
            KernelShape::Gaussian { sigma: sm, mass: mm },
        ) if sp == sm => return Ok(Domination::Theta(mp / mm)),
        (
            KernelShape::Exponential { rate: bp, amplitude: cp },
            KernelShape::Exponential { rate: bm, amplitude: cm },
        ) if bp == bm => return Ok(Domination::Theta(cp / cm)),
        _ => {}
    }

    let mut grid: Vec<f64> = (0..=THETA_GRID)
        .map(|i| a_plus.r_cut * i as f64 / THETA_GRID as f64)
        .collect();
    for k in [a_plus, a_minus] {
        match &k.shape {
            KernelShape::Tabulated { radii, .. } => grid.extend(radii.iter().copied()),
            KernelShape::Tophat { radius, .. } => grid.push(*radius),
            _ => {}
        }
    }
    grid.retain(|r| *r <= a_plus.r_cut);
    grid.sort_by(f64::total_cmp);

    let mut ratios = Vec::with_capacity(grid.len());
    for &r in &grid {
        let p = a_plus.eval_radial(r);
        let q = a_minus.eval_radial(r);
        if p > 0.0 && q <= 0.0 {
            return Ok(Domination::NoFiniteTheta(format!(
                "a⁺({r}) = {p} > 0 where a⁻ vanishes"
            )));
        }
        ratios.push(if p > 0.0 { p / q } else { 0.0 });
    }
    let (imax, theta) = ratios
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, x)| if x > acc.1 { (i, x) } else { acc });
    // A maximum pinned at the cutoff that is still growing fast signals a
    // ratio that only the truncation keeps finite.
    let mid = ratios[ratios.len() / 2];
    if imax + 1 == ratios.len() && theta > 2.0 * mid && ratios.len() > 2 {
        return Ok(Domination::NoFiniteTheta(format!(
            "ratio a⁺/a⁻ grows without bound toward the cutoff (reaches {theta:.3e})"
        )));
    }
    Ok(Domination::Theta(theta))
}

/// `e^{α*} θ < 1`.
pub fn check_theta_condition(theta: f64, alpha_star: f64) -> bool {
    alpha_star.exp() * theta < 1.0
}

/// Model parameters: mortality, the two kernels, and the periodic box.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub m: f64,
    pub a_plus: Kernel,
    pub a_minus: Kernel,
    pub box_len: f64,
    pub dim: usize,
}

impl ModelParams {
    pub fn new(m: f64, a_plus: Kernel, a_minus: Kernel, box_len: f64) -> Result<Self> {
        if !(m >= 0.0 && m.is_finite()) {
            return Err(Error::InvalidParams(format!("m = {m} must be finite and >= 0")));
        }
        if !(box_len > 0.0 && box_len.is_finite()) {
            return Err(Error::InvalidParams(format!("box side L = {box_len} must be > 0")));
        }
        let dim = a_plus.dim;
        if a_minus.dim != dim {
            return Err(Error::InvalidParams("a⁺ and a⁻ have different dimensions".into()));
        }
        let half = box_len / 2.0;
        let a_plus = a_plus.fit_to_box(half, "a_plus")?;
        let a_minus = a_minus.fit_to_box(half, "a_minus")?;
        Ok(ModelParams {
            m,
            a_plus,
            a_minus,
            box_len,
            dim,
        })
    }

    /// Box volume `L^d`.
    pub fn volume(&self) -> f64 {
        self.box_len.powi(self.dim as i32)
    }
}
