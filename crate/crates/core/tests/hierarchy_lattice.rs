//! The radial hierarchy against the lattice correlation generator applied to
//! the same translation-invariant correlation functions.

use spatial_logistic::configspace::{sites_of, SiteLattice, TruncatedFunction};
use spatial_logistic::hierarchy::{Closure, Hierarchy, RadialGrid, Scaling};
use spatial_logistic::kernels::{Kernel, ModelParams};
use spatial_logistic::operators::LatticeModel;

const L: f64 = 6.0;
const U: f64 = 0.8;

fn w_of(r: f64) -> f64 {
    U * U * (1.0 + 0.5 * (-r * r / 0.5).exp())
}

fn params() -> ModelParams {
    ModelParams::new(
        0.3,
        Kernel::gaussian(0.4, 1.0, 1).unwrap(),
        Kernel::gaussian(0.5, 0.6, 1).unwrap(),
        L,
    )
    .unwrap()
}

/// First-order budget for row size `n`: the lattice carries the exclusion
/// terms vE⁺(η)k(η) and v²ΣE⁺(x,η)k(η∪x), and its sums skip the sites of η,
/// each missing term being at most v·sup a·max k.
fn budget(n: f64, v: f64, p: &ModelParams, k_max: f64) -> f64 {
    let (sp, sm) = (p.a_plus.sup_norm(), p.a_minus.sup_norm());
    v * (n * (n - 1.0) * sp * k_max + n * p.a_plus.total_mass() * k_max + n * n * (sp + sm) * k_max)
}

/// Per-row discrepancies `(size, |lattice − hierarchy|, budget)` on rows of
/// size one and two.
fn discrepancies(sites: usize) -> Vec<(usize, f64, f64)> {
    let p = params();
    let lat = SiteLattice::new(L, 1, sites).unwrap();
    let model = LatticeModel::new(&lat, &p, 3).unwrap();
    let v = lat.cell_volume();
    let k = TruncatedFunction::from_fn(model.space(), |mask| {
        let s: Vec<usize> = sites_of(mask).collect();
        let d = |a: usize, b: usize| lat.distance(s[a], s[b]);
        match s.len() {
            0 => 1.0,
            1 => U,
            2 => w_of(d(0, 1)),
            _ => w_of(d(0, 1)) * w_of(d(1, 2)) * w_of(d(0, 2)) / U.powi(3),
        }
    });
    let k_max = k.values().iter().copied().fold(0.0, f64::max);
    let lk = model.ldelta_parts().ldelta().apply(&k);

    let grid = RadialGrid::new(v / 8.0, 12.0).unwrap();
    let h = Hierarchy::new(&p, grid, Closure::Kirkwood, Scaling::Full).unwrap();
    let w: Vec<f64> = grid.radii().iter().map(|&r| w_of(r)).collect();
    let (du, dw) = h.rhs(U, &w).unwrap();

    let mut out = vec![(1, (lk.get(1) - du).abs(), budget(1.0, v, &p, k_max))];
    for j in 1..sites {
        let r = lat.distance(0, j);
        if r > 2.0 {
            continue;
        }
        let i = (r / grid.dr).round() as usize;
        out.push((2, (lk.get(1 | (1 << j)) - dw[i]).abs(), budget(2.0, v, &p, k_max)));
    }
    out
}

fn worst(rows: &[(usize, f64, f64)], n: usize) -> f64 {
    rows.iter().filter(|r| r.0 == n).map(|r| r.1).fold(0.0, f64::max)
}

#[test]
fn hierarchy_matches_lattice_generator_within_first_order_budget() {
    let coarse = discrepancies(12);
    let fine = discrepancies(24);
    for n in [1, 2] {
        println!(
            "order {n}: v = 0.5 -> {:.3e}, v = 0.25 -> {:.3e}",
            worst(&coarse, n),
            worst(&fine, n)
        );
        assert!(worst(&fine, n) < worst(&coarse, n));
    }
    for (n, err, bound) in coarse.iter().chain(&fine) {
        assert!(err <= bound, "order {n}: {err} > {bound}");
    }
}
