//! Finite configurations, the discretized configuration space of a periodic
//! window, and the combinatorial transforms acting on functions of it.
//!
//! The window is cut into `M` cells of volume `v`; a discrete configuration
//! occupies each cell at most once and is stored as a bitmask. The
//! Lebesgue–Poisson measure gives a subset `η` the weight `v^{|η|}`.

mod energy;
mod function;
mod lattice;
mod subsets;

pub use energy::{energy_minus, energy_plus, energy_total, Configuration, Energies};
pub use function::{
    correlation_of_density, density_of_correlation, k_inverse, k_transform, lp_integral, norm_g,
    norm_k, pairing, TruncatedFunction,
};
pub use lattice::{torus_displacement, torus_distance, wrap, SiteLattice};
pub use subsets::{fixed_size_subsets, mask_of, sites_of, SubsetSpace, MAX_SITES};
