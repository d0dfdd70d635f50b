use nalgebra::{DMatrix, DVector};

use super::{LatticeModel, TruncatedOperator};
use crate::configspace::TruncatedFunction;
use crate::error::{Error, Result};
use crate::kernels::ModelParams;
use crate::linalg::expm;

/// `e^{t Op} x`.
pub fn semigroup_apply(op: &TruncatedOperator, t: f64, x: &TruncatedFunction) -> Result<TruncatedFunction> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    if t == 0.0 {
        return Ok(x.clone());
    }
    let e = expm(&(op.matrix() * t));
    let y = e * DVector::from_column_slice(x.values());
    TruncatedFunction::from_values(op.space(), y.as_slice().to_vec())
}

/// `T* = (α* − α_*) / (⟨a⁺⟩ + ⟨a⁻⟩ e^{−α_*})`; `+∞` when both masses vanish.
pub fn existence_time(alpha_low: f64, alpha_high: f64, p: &ModelParams) -> Result<f64> {
    existence_time_from_masses(alpha_low, alpha_high, p.a_plus.total_mass(), p.a_minus.total_mass())
}

pub fn existence_time_from_masses(alpha_low: f64, alpha_high: f64, mass_plus: f64, mass_minus: f64) -> Result<f64> {
    if !(alpha_low < alpha_high) || !alpha_low.is_finite() || !alpha_high.is_finite() {
        return Err(Error::InvalidParams(format!(
            "need finite α_* < α*, got α_* = {alpha_low}, α* = {alpha_high}"
        )));
    }
    let rate = mass_plus + mass_minus * (-alpha_low).exp();
    if rate == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((alpha_high - alpha_low) / rate)
}

/// The scale `α_* < α ≤ α*`, the uniform ladder between `α_*` and `α`, and the
/// guaranteed horizon `T = T* (α − α_*) / (α* − α_*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OvcyannikovSchedule {
    pub alpha_low: f64,
    pub alpha_high: f64,
    pub alpha: f64,
    pub depth: usize,
    pub t_star: f64,
    pub horizon: f64,
}

impl OvcyannikovSchedule {
    pub fn new(alpha_low: f64, alpha_high: f64, alpha: f64, depth: usize, mass_plus: f64, mass_minus: f64) -> Result<Self> {
        let t_star = existence_time_from_masses(alpha_low, alpha_high, mass_plus, mass_minus)?;
        if !(alpha > alpha_low && alpha <= alpha_high) {
            return Err(Error::InvalidParams(format!(
                "target α = {alpha} must lie in (α_*, α*] = ({alpha_low}, {alpha_high}]"
            )));
        }
        if depth == 0 {
            return Err(Error::InvalidParams("ladder depth must be at least 1".into()));
        }
        Ok(OvcyannikovSchedule {
            alpha_low,
            alpha_high,
            alpha,
            depth,
            t_star,
            horizon: t_star * (alpha - alpha_low) / (alpha_high - alpha_low),
        })
    }

    /// Schedule for a lattice model, with the lattice bound masses in `T*`.
    pub fn for_model(model: &LatticeModel, alpha_low: f64, alpha_high: f64, alpha: f64, depth: usize) -> Result<Self> {
        let (p, q) = model.bound_masses();
        Self::new(alpha_low, alpha_high, alpha, depth, p, q)
    }

    /// `α_l = α_* + l (α − α_*) / n` for `l = 0..=n`.
    pub fn ladder(&self) -> Vec<f64> {
        (0..=self.depth)
            .map(|l| self.alpha_low + l as f64 * (self.alpha - self.alpha_low) / self.depth as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    /// Simpson panels on `[0, t]`; must be even.
    pub panels: usize,
    /// Number of iterates beyond `G⁽⁰⁾`.
    pub depth: usize,
    /// Run even when `t` lies outside the guaranteed interval `[0, T)`.
    pub allow_outside: bool,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            panels: 64,
            depth: 5,
            allow_outside: false,
        }
    }
}

/// Picard iterates `G⁽⁰⁾_t, …, G⁽ⁿ⁾_t` for `d/dt G = A G + B G`:
/// `G⁽⁰⁾_t = S(t) G₀`, `G⁽ˡ⁾_t = S(t) G₀ + ∫₀ᵗ S(t − s) B G⁽ˡ⁻¹⁾_s ds`, with
/// `S(t) = e^{tA}` and the integral by composite Simpson on `opts.panels`.
pub fn picard_iterate(
    a: &TruncatedOperator,
    b: &TruncatedOperator,
    g0: &TruncatedFunction,
    sched: &OvcyannikovSchedule,
    t: f64,
    opts: PicardOptions,
) -> Result<Vec<TruncatedFunction>> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    if t >= sched.horizon && !opts.allow_outside {
        return Err(Error::OutsideExistenceInterval { t, limit: sched.horizon });
    }
    picard_iterates_raw(a, b, g0, t, opts.panels, opts.depth)
}

/// Picard iterates without any schedule check; see [`picard_iterate`].
pub fn picard_iterates_raw(
    a: &TruncatedOperator,
    b: &TruncatedOperator,
    g0: &TruncatedFunction,
    t: f64,
    panels: usize,
    depth: usize,
) -> Result<Vec<TruncatedFunction>> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    if panels < 2 || !panels.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!("Simpson needs an even panel count, got {panels}")));
    }
    let space = g0.space();
    let wrap = |v: &DVector<f64>| TruncatedFunction::from_values(space, v.as_slice().to_vec());
    let x0 = DVector::from_column_slice(g0.values());
    if t == 0.0 {
        return (0..=depth).map(|_| wrap(&x0)).collect();
    }

    let p = panels;
    let h = t / p as f64;
    let step = expm(&(a.matrix() * h));
    let back = expm(&(a.matrix() * -h));
    let mut powers: Vec<DMatrix<f64>> = Vec::with_capacity(p + 1);
    powers.push(DMatrix::identity(space.len(), space.len()));
    for k in 1..=p {
        powers.push(&powers[k - 1] * &step);
    }
    let propagate = |k: isize, y: &DVector<f64>| -> DVector<f64> {
        if k >= 0 {
            &powers[k as usize] * y
        } else {
            &back * y
        }
    };

    let free: Vec<DVector<f64>> = powers.iter().map(|s| s * &x0).collect();
    let weights: Vec<Vec<(usize, f64)>> = (0..=p).map(|j| quadrature_weights(j, h)).collect();

    let mut current = free.clone();
    let mut out = vec![wrap(&current[p])?];
    for _ in 0..depth {
        let forced: Vec<DVector<f64>> = current.iter().map(|g| b.matrix() * g).collect();
        let next: Vec<DVector<f64>> = (0..=p)
            .map(|j| {
                let mut acc = free[j].clone();
                for &(i, w) in &weights[j] {
                    acc += propagate(j as isize - i as isize, &forced[i]) * w;
                }
                acc
            })
            .collect();
        current = next;
        out.push(wrap(&current[p])?);
    }
    Ok(out)
}

/// Weights `(node, w)` for `∫₀^{jh} f` from samples at `0, h, 2h, …`: Simpson
/// for even `j`, Simpson plus a closing 3/8 rule for odd `j ≥ 3`, and the
/// quadratic through nodes 0, 1, 2 for `j = 1`.
fn quadrature_weights(j: usize, h: f64) -> Vec<(usize, f64)> {
    let mut w = vec![0.0; j.max(2) + 1];
    match j {
        0 => return Vec::new(),
        1 => {
            w[0] = 5.0 / 12.0;
            w[1] = 8.0 / 12.0;
            w[2] = -1.0 / 12.0;
        }
        _ => {
            let simpson_end = if j.is_multiple_of(2) { j } else { j - 3 };
            for k in (0..simpson_end).step_by(2) {
                w[k] += 1.0 / 3.0;
                w[k + 1] += 4.0 / 3.0;
                w[k + 2] += 1.0 / 3.0;
            }
            if j % 2 == 1 {
                let s = simpson_end;
                for (k, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
                    w[s + k] += 3.0 / 8.0 * c;
                }
            }
        }
    }
    w.into_iter().enumerate().map(|(i, x)| (i, x * h)).filter(|(_, x)| *x != 0.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::SiteLattice;
    use crate::kernels::Kernel;
    use crate::operators::OperatorRole;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadrature_is_exact_for_cubics() {
        let h = 0.1;
        for j in 1..12 {
            let w = quadrature_weights(j, h);
            let x = j as f64 * h;
            let f = |s: f64| 1.0 + 2.0 * s - s * s + 0.5 * s * s * s;
            let exact = x + x * x - x.powi(3) / 3.0 + 0.125 * x.powi(4);
            let approx: f64 = w.iter().map(|&(i, wi)| wi * f(i as f64 * h)).sum();
            // j = 1 is only quadratic-exact
            let tol = if j == 1 { 2e-5 } else { 1e-13 };
            assert_abs_diff_eq!(approx, exact, epsilon = tol);
        }
    }

    #[test]
    fn existence_time_examples() {
        assert_abs_diff_eq!(
            existence_time_from_masses(-1.0, 0.0, 1.0, 1.0).unwrap(),
            1.0 / (1.0 + std::f64::consts::E),
            epsilon = 1e-15
        );
        assert_eq!(existence_time_from_masses(0.0, 1.0, 2.0, 0.0).unwrap(), 0.5);
        assert_eq!(existence_time_from_masses(0.0, 1.0, 0.0, 0.0).unwrap(), f64::INFINITY);
        let a = existence_time_from_masses(-0.5, 0.5, 1.0, 2.0).unwrap();
        let b = existence_time_from_masses(-0.5, 1.5, 1.0, 2.0).unwrap();
        assert_abs_diff_eq!(b, 2.0 * a, epsilon = 1e-15);
        assert!(existence_time_from_masses(0.0, 0.0, 1.0, 1.0).is_err());
    }

    fn small_system(seed: u64) -> (TruncatedOperator, TruncatedOperator, TruncatedFunction) {
        let lat = SiteLattice::new(2.0, 1, 4).unwrap();
        let p = ModelParams::new(
            0.5,
            Kernel::tophat(0.3, 0.8, 1).unwrap(),
            Kernel::tophat(0.6, 0.8, 1).unwrap(),
            2.0,
        )
        .unwrap();
        let model = LatticeModel::new(&lat, &p, 4).unwrap();
        let parts = model.lhat_parts();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g0 = TruncatedFunction::from_fn(model.space(), |_| rng.random_range(-1.0..1.0));
        (parts.a(), parts.b(), g0)
    }

    #[test]
    fn picard_converges_to_full_exponential() {
        let (a, b, g0) = small_system(1);
        let t = 0.4;
        let iters = picard_iterates_raw(&a, &b, &g0, t, 64, 12).unwrap();
        let full = semigroup_apply(&a.sum(&b, OperatorRole::Lhat), t, &g0).unwrap();
        assert!(iters[12].max_abs_diff(&full) < 1e-6);
    }

    #[test]
    fn picard_special_cases() {
        let (a, b, g0) = small_system(2);
        let zero_b = TruncatedOperator::new(OperatorRole::B, b.space(), DMatrix::zeros(b.space().len(), b.space().len())).unwrap();
        let it = picard_iterates_raw(&a, &zero_b, &g0, 0.3, 64, 3).unwrap();
        let s = semigroup_apply(&a, 0.3, &g0).unwrap();
        for g in &it {
            assert!(g.max_abs_diff(&s) < 1e-13);
        }
        let zero_a = TruncatedOperator::new(OperatorRole::A, a.space(), DMatrix::zeros(a.space().len(), a.space().len())).unwrap();
        let it = picard_iterates_raw(&zero_a, &b, &g0, 0.3, 64, 1).unwrap();
        let bg = b.apply(&g0);
        for (i, x) in it[1].values().iter().enumerate() {
            assert_abs_diff_eq!(*x, g0.values()[i] + 0.3 * bg.values()[i], epsilon = 1e-13);
        }
    }

    #[test]
    fn picard_refuses_beyond_horizon() {
        let (a, b, g0) = small_system(3);
        let sched = OvcyannikovSchedule::new(-0.5, 0.0, 0.0, 3, 1.0, 1.0).unwrap();
        let res = picard_iterate(&a, &b, &g0, &sched, sched.horizon, PicardOptions::default());
        assert!(matches!(res, Err(Error::OutsideExistenceInterval { .. })));
        let opts = PicardOptions { allow_outside: true, ..Default::default() };
        assert!(picard_iterate(&a, &b, &g0, &sched, sched.horizon, opts).is_ok());
    }

    #[test]
    fn semigroup_examples() {
        let lat = SiteLattice::new(2.0, 1, 3).unwrap();
        let p = ModelParams::new(0.8, Kernel::zero(1), Kernel::zero(1), 2.0).unwrap();
        let model = LatticeModel::new(&lat, &p, 3).unwrap();
        let a = model.lhat_parts().a();
        let g = TruncatedFunction::indicator(model.space(), 0b011);
        let out = semigroup_apply(&a, 1.3, &g).unwrap();
        assert_abs_diff_eq!(out.get(0b011), (-0.8f64 * 2.0 * 1.3).exp(), epsilon = 1e-15);
        assert_eq!(semigroup_apply(&a, 0.0, &g).unwrap(), g);
        assert!(matches!(semigroup_apply(&a, -1.0, &g), Err(Error::NegativeTime(_))));
    }

    #[test]
    fn schedule_ladder() {
        let s = OvcyannikovSchedule::new(-1.0, 0.0, -0.5, 4, 1.0, 1.0).unwrap();
        assert_eq!(s.ladder(), vec![-1.0, -0.875, -0.75, -0.625, -0.5]);
        assert_abs_diff_eq!(s.horizon, 0.5 * s.t_star, epsilon = 1e-15);
        assert!(OvcyannikovSchedule::new(-1.0, 0.0, 0.5, 4, 1.0, 1.0).is_err());
    }
}
