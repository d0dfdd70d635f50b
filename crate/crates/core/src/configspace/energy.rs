use super::lattice::torus_distance;
use crate::error::{Error, Result};
use crate::kernels::{Kernel, ModelParams, Vector};

/// A finite set of distinct points in the periodic box `[0, L)^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    points: Vec<Vector>,
}

impl Configuration {
    pub fn empty() -> Self {
        Configuration { points: Vec::new() }
    }

    pub fn new(points: Vec<Vector>, box_len: f64, dim: usize) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            for (k, &c) in p.iter().enumerate() {
                let inside = if k < dim { (0.0..box_len).contains(&c) } else { c == 0.0 };
                if !inside {
                    return Err(Error::InvalidConfiguration(format!(
                        "point {i} = {:?} lies outside [0, {box_len})^{dim}",
                        &p[..dim]
                    )));
                }
            }
        }
        let mut sorted = points.clone();
        sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfiguration("duplicate points".into()));
        }
        Ok(Configuration { points })
    }

    pub fn points(&self) -> &[Vector] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn energy(kernel: &Kernel, x: &Vector, eta: &[Vector], p: &ModelParams) -> f64 {
    eta.iter()
        .map(|y| kernel.eval_radial(torus_distance(x, y, p.box_len, p.dim)))
        .sum()
}

/// `E⁻(x, η) = Σ_{y∈η} a⁻(x − y)` with minimum-image distances.
pub fn energy_minus(x: &Vector, eta: &[Vector], p: &ModelParams) -> f64 {
    energy(&p.a_minus, x, eta, p)
}

/// `E⁺(x, η) = Σ_{y∈η} a⁺(x − y)`.
pub fn energy_plus(x: &Vector, eta: &[Vector], p: &ModelParams) -> f64 {
    energy(&p.a_plus, x, eta, p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energies {
    /// `E⁻(η) = Σ_{x∈η} E⁻(x, η∖x)`.
    pub e_minus: f64,
    /// `E(η) = m|η| + E⁻(η)`: the total death rate.
    pub e: f64,
    /// `Ξ(η) = E(η) + ⟨a⁺⟩|η|`: the total jump rate.
    pub xi: f64,
}

pub fn energy_total(eta: &[Vector], p: &ModelParams) -> Energies {
    let mut pairs = 0.0;
    for (i, x) in eta.iter().enumerate() {
        for y in &eta[i + 1..] {
            pairs += p.a_minus.eval_radial(torus_distance(x, y, p.box_len, p.dim));
        }
    }
    let n = eta.len() as f64;
    let e_minus = 2.0 * pairs;
    let e = p.m * n + e_minus;
    Energies {
        e_minus,
        e,
        xi: e + p.a_plus.total_mass() * n,
    }
}
