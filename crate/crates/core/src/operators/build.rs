use nalgebra::DMatrix;

use super::{LatticeModel, OperatorRole, TruncatedOperator};
use crate::configspace::{sites_of, SiteLattice};
use crate::error::Result;
use crate::kernels::ModelParams;

/// The six pieces of `L̂`; `A = A1 + A2 + A3`, `B = B1 + B2 + B3`.
#[derive(Debug, Clone)]
pub struct LhatParts {
    pub a1: TruncatedOperator,
    pub a2: TruncatedOperator,
    pub a3: TruncatedOperator,
    pub b1: TruncatedOperator,
    pub b2: TruncatedOperator,
    pub b3: TruncatedOperator,
}

impl LhatParts {
    pub fn a(&self) -> TruncatedOperator {
        self.a1.sum(&self.a2, OperatorRole::A).sum(&self.a3, OperatorRole::A)
    }

    pub fn b(&self) -> TruncatedOperator {
        self.b1.sum(&self.b2, OperatorRole::B).sum(&self.b3, OperatorRole::B)
    }

    pub fn lhat(&self) -> TruncatedOperator {
        self.a().sum(&self.b(), OperatorRole::Lhat)
    }
}

/// The pieces of `L^Δ`, each built from its own formula.
#[derive(Debug, Clone)]
pub struct LdeltaParts {
    pub a1: TruncatedOperator,
    pub a2: TruncatedOperator,
    pub a3: TruncatedOperator,
    pub b1: TruncatedOperator,
    pub b2: TruncatedOperator,
    pub b3: TruncatedOperator,
}

impl LdeltaParts {
    pub fn a(&self) -> TruncatedOperator {
        self.a1.sum(&self.a2, OperatorRole::Adelta).sum(&self.a3, OperatorRole::Adelta)
    }

    pub fn b(&self) -> TruncatedOperator {
        self.b1.sum(&self.b2, OperatorRole::Bdelta).sum(&self.b3, OperatorRole::Bdelta)
    }

    pub fn ldelta(&self) -> TruncatedOperator {
        self.a().sum(&self.b(), OperatorRole::Ldelta)
    }
}

struct Builder<'a> {
    model: &'a LatticeModel,
    matrix: DMatrix<f64>,
}

impl<'a> Builder<'a> {
    fn new(model: &'a LatticeModel) -> Self {
        let n = model.space().len();
        Builder {
            model,
            matrix: DMatrix::zeros(n, n),
        }
    }

    /// Adds `value` at `[row, col]` if `col` lies inside the truncated space.
    fn add(&mut self, row: usize, col: u32, value: f64) {
        if let Some(j) = self.model.space().index_of(col) {
            self.matrix[(row, j)] += value;
        }
    }

    fn finish(self, role: OperatorRole) -> TruncatedOperator {
        TruncatedOperator::new(role, self.model.space(), self.matrix).expect("square by construction")
    }
}

fn absent(model: &LatticeModel, mask: u32) -> impl Iterator<Item = usize> {
    (0..model.lattice().sites()).filter(move |y| mask & (1 << y) == 0)
}

impl LatticeModel {
    pub fn lhat_parts(&self) -> LhatParts {
        let v = self.cell_volume();
        let (mut a1, mut a2, mut a3) = (Builder::new(self), Builder::new(self), Builder::new(self));
        let (mut b1, mut b2, mut b3) = (Builder::new(self), Builder::new(self), Builder::new(self));
        for (i, &eta) in self.space().masks().iter().enumerate() {
            a1.add(i, eta, -self.e_total(eta));
            a3.add(i, eta, -v * self.e_plus_total(eta));
            for y in absent(self, eta) {
                a2.add(i, eta | (1 << y), v * self.e_plus(y, eta));
            }
            for x in sites_of(eta) {
                let rest = eta & !(1 << x);
                b1.add(i, rest, -self.e_minus(x, eta));
                b3.add(i, rest, -v * self.e_plus(x, eta));
                for y in absent(self, eta) {
                    b2.add(i, rest | (1 << y), v * self.a_plus(x, y));
                }
            }
        }
        LhatParts {
            a1: a1.finish(OperatorRole::A1),
            a2: a2.finish(OperatorRole::A2),
            a3: a3.finish(OperatorRole::A3),
            b1: b1.finish(OperatorRole::B1),
            b2: b2.finish(OperatorRole::B2),
            b3: b3.finish(OperatorRole::B3),
        }
    }

    pub fn ldelta_parts(&self) -> LdeltaParts {
        let v = self.cell_volume();
        let (mut a1, mut a2, mut a3) = (Builder::new(self), Builder::new(self), Builder::new(self));
        let (mut b1, mut b2, mut b3) = (Builder::new(self), Builder::new(self), Builder::new(self));
        for (i, &eta) in self.space().masks().iter().enumerate() {
            a1.add(i, eta, -self.e_total(eta));
            a3.add(i, eta, -v * self.e_plus_total(eta));
            for x in sites_of(eta) {
                a2.add(i, eta & !(1 << x), self.e_plus(x, eta));
            }
            for x in absent(self, eta) {
                let grown = eta | (1 << x);
                b1.add(i, grown, -v * self.e_minus(x, eta));
                b3.add(i, grown, -v * v * self.e_plus(x, eta));
            }
            for y in sites_of(eta) {
                for x in absent(self, eta) {
                    b2.add(i, (eta & !(1 << y)) | (1 << x), v * self.a_plus(x, y));
                }
            }
        }
        LdeltaParts {
            a1: a1.finish(OperatorRole::A1),
            a2: a2.finish(OperatorRole::A2),
            a3: a3.finish(OperatorRole::A3),
            b1: b1.finish(OperatorRole::B1),
            b2: b2.finish(OperatorRole::B2),
            b3: b3.finish(OperatorRole::B3),
        }
    }

    /// The generator `L` acting on observables `F`.
    pub fn l(&self) -> TruncatedOperator {
        let v = self.cell_volume();
        let mut b = Builder::new(self);
        for (i, &gamma) in self.space().masks().iter().enumerate() {
            for x in sites_of(gamma) {
                let rate = self.params().m + self.e_minus(x, gamma);
                b.add(i, gamma & !(1 << x), rate);
                b.add(i, gamma, -rate);
            }
            for y in absent(self, gamma) {
                let rate = v * self.e_plus(y, gamma);
                b.add(i, gamma | (1 << y), rate);
                b.add(i, gamma, -rate);
            }
        }
        b.finish(OperatorRole::L)
    }

    /// The forward generator `L†` acting on local densities `R`.
    pub fn ldagger(&self) -> TruncatedOperator {
        let v = self.cell_volume();
        let mut b = Builder::new(self);
        for (i, &eta) in self.space().masks().iter().enumerate() {
            b.add(i, eta, -self.xi(eta));
            for y in absent(self, eta) {
                b.add(i, eta | (1 << y), v * (self.params().m + self.e_minus(y, eta)));
            }
            for x in sites_of(eta) {
                b.add(i, eta & !(1 << x), self.e_plus(x, eta));
            }
        }
        b.finish(OperatorRole::Ldagger)
    }
}

/// `(A, B)` with `L̂ = A + B` on subsets of size at most `cap`.
pub fn build_lhat(
    lat: &SiteLattice,
    p: &ModelParams,
    cap: usize,
) -> Result<(TruncatedOperator, TruncatedOperator)> {
    let parts = LatticeModel::new(lat, p, cap)?.lhat_parts();
    Ok((parts.a(), parts.b()))
}

pub fn build_ldelta(lat: &SiteLattice, p: &ModelParams, cap: usize) -> Result<TruncatedOperator> {
    Ok(LatticeModel::new(lat, p, cap)?.ldelta_parts().ldelta())
}

pub fn build_l(lat: &SiteLattice, p: &ModelParams, cap: usize) -> Result<TruncatedOperator> {
    Ok(LatticeModel::new(lat, p, cap)?.l())
}

pub fn build_ldagger(lat: &SiteLattice, p: &ModelParams, cap: usize) -> Result<TruncatedOperator> {
    Ok(LatticeModel::new(lat, p, cap)?.ldagger())
}
