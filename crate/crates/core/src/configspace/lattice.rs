use crate::error::{Error, Result};
use crate::kernels::Vector;

/// Minimum-image displacement `x - y` on the torus `[0, L)^d`.
pub fn torus_displacement(x: &Vector, y: &Vector, box_len: f64, dim: usize) -> Vector {
    let mut d = [0.0; 2];
    for k in 0..dim {
        let mut dx = x[k] - y[k];
        dx -= box_len * (dx / box_len).round();
        d[k] = dx;
    }
    d
}

pub fn torus_distance(x: &Vector, y: &Vector, box_len: f64, dim: usize) -> f64 {
    crate::kernels::norm(&torus_displacement(x, y, box_len, dim), dim)
}

/// Wraps a point back into `[0, L)^d`.
pub fn wrap(x: &Vector, box_len: f64, dim: usize) -> Vector {
    let mut w = [0.0; 2];
    for k in 0..dim {
        let mut c = x[k].rem_euclid(box_len);
        // rem_euclid can round up to exactly L for tiny negative inputs
        if c >= box_len {
            c = 0.0;
        }
        w[k] = c;
    }
    w
}

/// Uniform partition of the torus `[0, L)^d` into `M = n^d` cells of volume `v`.
/// Each cell is a site located at its center.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteLattice {
    box_len: f64,
    dim: usize,
    per_side: usize,
    volume: f64,
    positions: Vec<Vector>,
}

impl SiteLattice {
    pub fn new(box_len: f64, dim: usize, per_side: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidInput(format!("dimension {dim} not in {{1, 2}}")));
        }
        if !(box_len > 0.0 && box_len.is_finite()) || per_side == 0 {
            return Err(Error::InvalidInput(format!(
                "lattice needs L > 0 and at least one cell per side (L = {box_len}, n = {per_side})"
            )));
        }
        let h = box_len / per_side as f64;
        let positions = if dim == 1 {
            (0..per_side).map(|i| [(i as f64 + 0.5) * h, 0.0]).collect()
        } else {
            (0..per_side * per_side)
                .map(|i| {
                    let (ix, iy) = (i % per_side, i / per_side);
                    [(ix as f64 + 0.5) * h, (iy as f64 + 0.5) * h]
                })
                .collect()
        };
        Ok(SiteLattice {
            box_len,
            dim,
            per_side,
            volume: h.powi(dim as i32),
            positions,
        })
    }

    pub fn sites(&self) -> usize {
        self.positions.len()
    }

    /// Cell volume `v`.
    pub fn cell_volume(&self) -> f64 {
        self.volume
    }

    pub fn box_len(&self) -> f64 {
        self.box_len
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn per_side(&self) -> usize {
        self.per_side
    }

    pub fn position(&self, i: usize) -> &Vector {
        &self.positions[i]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        torus_distance(&self.positions[i], &self.positions[j], self.box_len, self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_geometry() {
        let l = SiteLattice::new(2.0, 2, 4).unwrap();
        assert_eq!(l.sites(), 16);
        assert_eq!(l.cell_volume(), 0.25);
        assert_eq!(l.distance(0, 3), 0.5); // wraps around
    }

    #[test]
    fn minimum_image() {
        assert_eq!(torus_distance(&[0.0, 0.0], &[3.0, 0.0], 4.0, 1), 1.0);
        assert_eq!(wrap(&[-0.5, 4.5], 4.0, 2), [3.5, 0.5]);
        assert!(wrap(&[-1e-18, 0.0], 4.0, 1)[0] < 4.0);
    }
}
