//! Finite realizations of the generator and its conjugates on the lattice
//! configuration space, plus the verification battery built on them.
//!
//! On the lattice a configuration occupies each cell at most once, and the
//! generator of the birth–death chain is
//!
//! ```text
//! (LF)(γ) = Σ_{x∈γ} (m + E⁻(x, γ∖x)) [F(γ∖x) − F(γ)]
//!         + Σ_{y∉γ} v E⁺(y, γ) [F(γ∪y) − F(γ)].
//! ```
//!
//! Its symbol `L̂ = K⁻¹ L K` is `A + B` with
//!
//! ```text
//! (A G)(η) = −E(η) G(η) − v E⁺(η) G(η) + v Σ_{y∉η} E⁺(y, η) G(η∪y)
//! (B G)(η) = −Σ_{x∈η} (E⁻(x, η∖x) + v E⁺(x, η∖x)) G(η∖x)
//!            + v Σ_{x∈η} Σ_{y∉η} a⁺(x − y) G(η∖x∪y)
//! ```
//!
//! where `E⁺(η) = Σ_{x∈η} E⁺(x, η∖x)`. The terms carrying an extra factor of
//! `v E⁺` come from single occupancy: a birth aimed at an occupied cell is
//! lost. They vanish as `v → 0` and recover the continuum symbol.
//!
//! Truncation at `|η| ≤ N` keeps the principal submatrix of every operator.

mod build;
mod checks;
mod semigroup;

pub use build::{build_l, build_ldagger, build_ldelta, build_lhat, LdeltaParts, LhatParts};
pub use checks::{
    dual_pairing_check, duality_residuals, local_density_check, operator_norm_g,
    operator_norm_k, sampled_norm_g, stochasticity_check, verify_bounds, BoundsOptions, Check,
    DualityResiduals, LocalDensityReport, StochasticityReport,
};
pub use semigroup::{
    existence_time, existence_time_from_masses, picard_iterate, picard_iterates_raw,
    semigroup_apply, OvcyannikovSchedule, PicardOptions,
};

use nalgebra::{DMatrix, DVector};

use crate::configspace::{SiteLattice, SubsetSpace, TruncatedFunction};
use crate::error::{Error, Result};
use crate::kernels::{Kernel, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorRole {
    A1,
    A2,
    A3,
    A,
    B1,
    B2,
    B3,
    B,
    Lhat,
    Adelta,
    Bdelta,
    Ldelta,
    L,
    Ldagger,
}

/// A dense matrix acting on functions of the truncated subset space.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedOperator {
    role: OperatorRole,
    space: SubsetSpace,
    matrix: DMatrix<f64>,
}

impl TruncatedOperator {
    pub fn new(role: OperatorRole, space: &SubsetSpace, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != space.len() || matrix.ncols() != space.len() {
            return Err(Error::InvalidInput(format!(
                "matrix is {}x{} but the space has {} subsets",
                matrix.nrows(),
                matrix.ncols(),
                space.len()
            )));
        }
        Ok(TruncatedOperator {
            role,
            space: space.clone(),
            matrix,
        })
    }

    pub fn role(&self) -> OperatorRole {
        self.role
    }

    pub fn space(&self) -> &SubsetSpace {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Entry `[η, ξ]` addressed by masks; zero outside the space.
    pub fn entry(&self, row: u32, col: u32) -> f64 {
        match (self.space.index_of(row), self.space.index_of(col)) {
            (Some(i), Some(j)) => self.matrix[(i, j)],
            _ => 0.0,
        }
    }

    pub fn apply(&self, f: &TruncatedFunction) -> TruncatedFunction {
        assert!(f.space() == &self.space, "operator and function live on different spaces");
        let x = DVector::from_column_slice(f.values());
        let y = &self.matrix * x;
        TruncatedFunction::from_values(&self.space, y.as_slice().to_vec())
            .expect("dimension preserved")
    }

    pub fn sum(&self, other: &TruncatedOperator, role: OperatorRole) -> TruncatedOperator {
        assert!(self.space == other.space);
        TruncatedOperator {
            role,
            space: self.space.clone(),
            matrix: &self.matrix + &other.matrix,
        }
    }

    /// The λ-weighted transpose: `Op^Δ[ξ, η] = Op[η, ξ] v^{|η|−|ξ|}`, so that
    /// `⟨⟨Op G, k⟩⟩ = ⟨⟨G, Op^Δ k⟩⟩`.
    pub fn lambda_transpose(&self, lat: &SiteLattice, role: OperatorRole) -> TruncatedOperator {
        let v = lat.cell_volume();
        let n = self.space.len();
        let sizes: Vec<i32> = (0..n).map(|i| self.space.size_of(i) as i32).collect();
        let matrix = DMatrix::from_fn(n, n, |xi, eta| {
            self.matrix[(eta, xi)] * v.powi(sizes[eta] - sizes[xi])
        });
        TruncatedOperator {
            role,
            space: self.space.clone(),
            matrix,
        }
    }
}

/// Lattice, model and truncation bundled with the pair-interaction tables.
#[derive(Debug, Clone)]
pub struct LatticeModel {
    lat: SiteLattice,
    params: ModelParams,
    space: SubsetSpace,
    a_plus: Vec<f64>,
    a_minus: Vec<f64>,
}

impl LatticeModel {
    pub fn new(lat: &SiteLattice, params: &ModelParams, cap: usize) -> Result<Self> {
        if params.dim != lat.dim() || (params.box_len - lat.box_len()).abs() > 1e-12 * lat.box_len() {
            return Err(Error::InvalidParams(format!(
                "lattice box ({}, d={}) does not match the model box ({}, d={})",
                lat.box_len(),
                lat.dim(),
                params.box_len,
                params.dim
            )));
        }
        let space = SubsetSpace::new(lat.sites(), cap)?;
        let m = lat.sites();
        let table = |k: &crate::kernels::Kernel| {
            let mut t = vec![0.0; m * m];
            for i in 0..m {
                for j in 0..m {
                    if i != j {
                        t[i * m + j] = k.eval_radial(lat.distance(i, j));
                    }
                }
            }
            t
        };
        Ok(LatticeModel {
            a_plus: table(&params.a_plus),
            a_minus: table(&params.a_minus),
            lat: lat.clone(),
            params: params.clone(),
            space,
        })
    }

    pub fn lattice(&self) -> &SiteLattice {
        &self.lat
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn space(&self) -> &SubsetSpace {
        &self.space
    }

    pub fn cell_volume(&self) -> f64 {
        self.lat.cell_volume()
    }

    /// `a⁺(x − y)` between distinct sites (zero on the diagonal).
    pub fn a_plus(&self, x: usize, y: usize) -> f64 {
        self.a_plus[x * self.lat.sites() + y]
    }

    pub fn a_minus(&self, x: usize, y: usize) -> f64 {
        self.a_minus[x * self.lat.sites() + y]
    }

    fn field(table: &[f64], m: usize, x: usize, mask: u32) -> f64 {
        crate::configspace::sites_of(mask)
            .filter(|&y| y != x)
            .map(|y| table[x * m + y])
            .sum()
    }

    /// `E⁺(x, η∖x)`.
    pub fn e_plus(&self, x: usize, mask: u32) -> f64 {
        Self::field(&self.a_plus, self.lat.sites(), x, mask)
    }

    /// `E⁻(x, η∖x)`.
    pub fn e_minus(&self, x: usize, mask: u32) -> f64 {
        Self::field(&self.a_minus, self.lat.sites(), x, mask)
    }

    /// `E(η) = m|η| + Σ_{x∈η} E⁻(x, η∖x)`.
    pub fn e_total(&self, mask: u32) -> f64 {
        crate::configspace::sites_of(mask)
            .map(|x| self.params.m + self.e_minus(x, mask))
            .sum()
    }

    /// `Σ_{x∈η} E⁺(x, η∖x)`.
    pub fn e_plus_total(&self, mask: u32) -> f64 {
        crate::configspace::sites_of(mask).map(|x| self.e_plus(x, mask)).sum()
    }

    /// `v Σ_{y∉η} E⁺(y, η)`: total birth rate of `η` on the lattice.
    pub fn birth_rate(&self, mask: u32) -> f64 {
        let v = self.cell_volume();
        (0..self.lat.sites())
            .filter(|y| mask & (1 << y) == 0)
            .map(|y| v * self.e_plus(y, mask))
            .sum()
    }

    /// `Ξ_disc(η) = E(η) + v Σ_{y∉η} E⁺(y, η)`.
    pub fn xi(&self, mask: u32) -> f64 {
        self.e_total(mask) + self.birth_rate(mask)
    }

    /// Lattice kernel masses `v Σ_{y≠x} a±(x − y)`.
    pub fn lattice_masses(&self) -> (f64, f64) {
        let v = self.cell_volume();
        let m = self.lat.sites();
        let sum = |t: &[f64]| v * t[..m].iter().sum::<f64>();
        (sum(&self.a_plus), sum(&self.a_minus))
    }

    /// Masses entering the lattice norm bounds. Exclusion acts on the lowering
    /// part of `B` like extra competition of strength `v a⁺`.
    pub fn bound_masses(&self) -> (f64, f64) {
        let (p, q) = self.lattice_masses();
        (p, q + self.cell_volume() * p)
    }
}

/// The small reference problem used by the verification battery: `d = 1`,
/// `L = 2`, `M = N = 4`, tophat kernels of radius 0.8 with `a⁺ = a⁻/2`
/// (so `θ = 0.5`) and `m = 0.5`.
pub fn default_fixture() -> Result<LatticeModel> {
    let p = ModelParams::new(
        0.5,
        Kernel::tophat(0.3, 0.8, 1)?,
        Kernel::tophat(0.6, 0.8, 1)?,
        2.0,
    )?;
    LatticeModel::new(&SiteLattice::new(2.0, 1, 4)?, &p, 4)
}
