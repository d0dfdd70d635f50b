use crate::kernels::Vector;

/// Uniform cell grid on the torus with cells at least `min_side` wide, so
/// that every interacting pair lies in adjacent cells.
#[derive(Debug, Clone)]
pub(crate) struct CellGrid {
    dim: usize,
    per_side: usize,
    side: f64,
    /// Neighbour cells (including itself) of each cell, deduplicated.
    neighbours: Vec<Vec<u32>>,
}

impl CellGrid {
    pub fn new(box_len: f64, dim: usize, min_side: f64, max_per_side: usize) -> Self {
        let per_side = if min_side > 0.0 {
            ((box_len / min_side).floor() as usize).clamp(1, max_per_side)
        } else {
            max_per_side
        };
        let side = box_len / per_side as f64;
        let n = per_side as isize;
        let wrap = |i: isize| i.rem_euclid(n) as usize;
        let count = per_side.pow(dim as u32);
        let neighbours = (0..count)
            .map(|c| {
                let mut out: Vec<u32> = if dim == 1 {
                    (-1..=1).map(|d| wrap(c as isize + d) as u32).collect()
                } else {
                    let (cx, cy) = ((c % per_side) as isize, (c / per_side) as isize);
                    let mut v = Vec::with_capacity(9);
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            v.push((wrap(cx + dx) + per_side * wrap(cy + dy)) as u32);
                        }
                    }
                    v
                };
                out.sort_unstable();
                out.dedup();
                out
            })
            .collect();
        CellGrid {
            dim,
            per_side,
            side,
            neighbours,
        }
    }

    pub fn count(&self) -> usize {
        self.neighbours.len()
    }

    pub fn cell_of(&self, x: &Vector) -> usize {
        let idx = |c: f64| ((c / self.side) as usize).min(self.per_side - 1);
        if self.dim == 1 {
            idx(x[0])
        } else {
            idx(x[0]) + self.per_side * idx(x[1])
        }
    }

    pub fn neighbours(&self, cell: usize) -> &[u32] {
        &self.neighbours[cell]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grids_deduplicate_neighbours() {
        let g = CellGrid::new(2.0, 1, 1.0, 1024);
        assert_eq!(g.count(), 2);
        assert_eq!(g.neighbours(0), &[0, 1]);
        let g = CellGrid::new(10.0, 2, 1.0, 64);
        assert_eq!(g.count(), 100);
        assert_eq!(g.neighbours(0).len(), 9);
        assert!(g.neighbours(0).contains(&99));
    }

    #[test]
    fn cells_cover_the_box() {
        let g = CellGrid::new(10.0, 2, 3.0, 64);
        assert_eq!(g.cell_of(&[9.999999, 9.999999]), g.count() - 1);
        assert_eq!(g.cell_of(&[0.0, 0.0]), 0);
    }
}
