use serde_json::Value;

use super::lattice::SiteLattice;
use super::subsets::{mask_of, sites_of, SubsetSpace};
use crate::error::{Error, Result};

/// A real function on the subsets `η` with `|η| ≤ N`; `values[i]` belongs to
/// `space.mask(i)`. Quasi-observables `G`, correlation functions `k` and
/// local densities `R` all use this representation.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedFunction {
    space: SubsetSpace,
    values: Vec<f64>,
}

impl TruncatedFunction {
    pub fn zeros(space: &SubsetSpace) -> Self {
        TruncatedFunction {
            space: space.clone(),
            values: vec![0.0; space.len()],
        }
    }

    pub fn from_fn(space: &SubsetSpace, mut f: impl FnMut(u32) -> f64) -> Self {
        TruncatedFunction {
            space: space.clone(),
            values: space.masks().iter().map(|&m| f(m)).collect(),
        }
    }

    pub fn from_values(space: &SubsetSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} values, got {}",
                space.len(),
                values.len()
            )));
        }
        Ok(TruncatedFunction {
            space: space.clone(),
            values,
        })
    }

    /// `1{η = ∅}`.
    pub fn indicator_empty(space: &SubsetSpace) -> Self {
        Self::from_fn(space, |m| if m == 0 { 1.0 } else { 0.0 })
    }

    pub fn indicator(space: &SubsetSpace, mask: u32) -> Self {
        Self::from_fn(space, |m| if m == mask { 1.0 } else { 0.0 })
    }

    pub fn space(&self) -> &SubsetSpace {
        &self.space
    }

    pub fn cap(&self) -> usize {
        self.space.cap()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at `mask`; subsets beyond the cap read as zero.
    pub fn get(&self, mask: u32) -> f64 {
        self.space.index_of(mask).map_or(0.0, |i| self.values[i])
    }

    pub fn set(&mut self, mask: u32, value: f64) -> Result<()> {
        let i = self.space.index_of(mask).ok_or_else(|| {
            Error::InvalidInput(format!(
                "subset {:?} is outside the truncated space",
                sites_of(mask).collect::<Vec<_>>()
            ))
        })?;
        self.values[i] = value;
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        TruncatedFunction {
            space: self.space.clone(),
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// JSON form `{"sites": M, "cap": N, "entries": [[[i, j, …], value], …]}`;
    /// zero entries are omitted.
    pub fn to_json(&self) -> Value {
        let entries: Vec<Value> = self
            .space
            .masks()
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| **v != 0.0)
            .map(|(&m, &v)| serde_json::json!([sites_of(m).collect::<Vec<_>>(), v]))
            .collect();
        serde_json::json!({
            "sites": self.space.sites(),
            "cap": self.space.cap(),
            "entries": entries,
        })
    }

    /// Parses either the object form of [`to_json`](Self::to_json) or a bare
    /// entry array, which is then placed on `default_space`.
    pub fn from_json(value: &Value, default_space: Option<&SubsetSpace>) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidInput(format!("truncated function: {msg}"));
        let (space, entries) = match value {
            Value::Array(entries) => (
                default_space
                    .cloned()
                    .ok_or_else(|| bad("bare entry list needs a known space"))?,
                entries,
            ),
            Value::Object(obj) => {
                let get = |k: &str| {
                    obj.get(k)
                        .and_then(Value::as_u64)
                        .map(|x| x as usize)
                        .ok_or_else(|| bad(&format!("missing integer field '{k}'")))
                };
                let space = SubsetSpace::new(get("sites")?, get("cap")?)?;
                let entries = obj
                    .get("entries")
                    .and_then(Value::as_array)
                    .ok_or_else(|| bad("missing array field 'entries'"))?;
                (space, entries)
            }
            _ => return Err(bad("expected an object or an array")),
        };
        let mut f = TruncatedFunction::zeros(&space);
        for e in entries {
            let pair = e.as_array().filter(|p| p.len() == 2).ok_or_else(|| bad("entry must be [sites, value]"))?;
            let sites = pair[0].as_array().ok_or_else(|| bad("entry sites must be an array"))?;
            let mut idx = Vec::with_capacity(sites.len());
            for s in sites {
                let s = s.as_u64().ok_or_else(|| bad("site index must be a nonnegative integer"))? as usize;
                if s >= space.sites() {
                    return Err(bad(&format!("site {s} out of range")));
                }
                idx.push(s);
            }
            let mask = mask_of(&idx);
            if mask.count_ones() as usize != idx.len() {
                return Err(bad("duplicate site in entry"));
            }
            let v = pair[1].as_f64().ok_or_else(|| bad("entry value must be a number"))?;
            f.set(mask, v)?;
        }
        Ok(f)
    }
}

fn powers(v: f64, n: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(n + 1);
    let mut x = 1.0;
    for _ in 0..=n {
        p.push(x);
        x *= v;
    }
    p
}

fn check_lattice(space: &SubsetSpace, lat: &SiteLattice) {
    assert_eq!(
        space.sites(),
        lat.sites(),
        "function and lattice disagree on the number of sites"
    );
}

/// Discrete Lebesgue–Poisson integral `Σ_η F(η) v^{|η|}`.
pub fn lp_integral(f: &TruncatedFunction, lat: &SiteLattice) -> f64 {
    check_lattice(f.space(), lat);
    let vp = powers(lat.cell_volume(), f.cap());
    f.space()
        .masks()
        .iter()
        .zip(f.values())
        .map(|(&m, &x)| x * vp[m.count_ones() as usize])
        .sum()
}

/// `⟨⟨G, k⟩⟩ = Σ_η G(η) k(η) v^{|η|}`.
pub fn pairing(g: &TruncatedFunction, k: &TruncatedFunction, lat: &SiteLattice) -> f64 {
    assert!(g.space() == k.space(), "pairing needs a common space");
    check_lattice(g.space(), lat);
    let vp = powers(lat.cell_volume(), g.cap());
    g.space()
        .masks()
        .iter()
        .enumerate()
        .map(|(i, &m)| g.values()[i] * k.values()[i] * vp[m.count_ones() as usize])
        .sum()
}

/// `‖G‖_α = Σ_η |G(η)| e^{-α|η|} v^{|η|}`.
pub fn norm_g(g: &TruncatedFunction, lat: &SiteLattice, alpha: f64) -> f64 {
    check_lattice(g.space(), lat);
    let w = powers(lat.cell_volume() * (-alpha).exp(), g.cap());
    g.space()
        .masks()
        .iter()
        .zip(g.values())
        .map(|(&m, &x)| x.abs() * w[m.count_ones() as usize])
        .sum()
}

/// `‖k‖_α = max_η |k(η)| e^{α|η|}`.
pub fn norm_k(k: &TruncatedFunction, alpha: f64) -> f64 {
    let w = powers(alpha.exp(), k.cap());
    k.space()
        .masks()
        .iter()
        .zip(k.values())
        .map(|(&m, &x)| x.abs() * w[m.count_ones() as usize])
        .fold(0.0, f64::max)
}

fn dense(f: &TruncatedFunction) -> Vec<f64> {
    let mut d = vec![0.0; 1usize << f.space().sites()];
    for (&m, &x) in f.space().masks().iter().zip(f.values()) {
        d[m as usize] = x;
    }
    d
}

fn restrict(space: &SubsetSpace, d: &[f64]) -> TruncatedFunction {
    TruncatedFunction::from_fn(space, |m| d[m as usize])
}

/// `(KG)(γ) = Σ_{η⊆γ} G(η)`.
pub fn k_transform(g: &TruncatedFunction) -> TruncatedFunction {
    let mut d = dense(g);
    for bit in 0..g.space().sites() {
        let b = 1usize << bit;
        for m in 0..d.len() {
            if m & b != 0 {
                d[m] += d[m ^ b];
            }
        }
    }
    restrict(g.space(), &d)
}

/// `(K⁻¹F)(η) = Σ_{ξ⊆η} (-1)^{|η∖ξ|} F(ξ)`.
pub fn k_inverse(f: &TruncatedFunction) -> TruncatedFunction {
    let mut d = dense(f);
    for bit in 0..f.space().sites() {
        let b = 1usize << bit;
        for m in 0..d.len() {
            if m & b != 0 {
                d[m] -= d[m ^ b];
            }
        }
    }
    restrict(f.space(), &d)
}

/// Superset sum `q(η) = Σ_{ζ⊇η} R(ζ) v^{|ζ|-|η|}`: the correlation function of
/// a local density `R` on the lattice.
pub fn correlation_of_density(r: &TruncatedFunction, lat: &SiteLattice) -> TruncatedFunction {
    check_lattice(r.space(), lat);
    let v = lat.cell_volume();
    let mut d = dense(r);
    for bit in 0..r.space().sites() {
        let b = 1usize << bit;
        for m in 0..d.len() {
            if m & b == 0 {
                d[m] += v * d[m | b];
            }
        }
    }
    restrict(r.space(), &d)
}

/// Inverse of [`correlation_of_density`]:
/// `R(η) = Σ_{ζ⊇η} (-1)^{|ζ∖η|} q(ζ) v^{|ζ|-|η|}`.
pub fn density_of_correlation(q: &TruncatedFunction, lat: &SiteLattice) -> TruncatedFunction {
    check_lattice(q.space(), lat);
    let v = lat.cell_volume();
    let mut d = dense(q);
    for bit in 0..q.space().sites() {
        let b = 1usize << bit;
        for m in 0..d.len() {
            if m & b == 0 {
                d[m] -= v * d[m | b];
            }
        }
    }
    restrict(q.space(), &d)
}
