//! Exact event-driven simulation of the birth–death process on a torus.
//!
//! A particle at `x` dies at rate `m + E⁻(x, γ∖x)`; each particle gives birth
//! at rate `⟨a⁺⟩`, placing the offspring at a displacement drawn from
//! `a⁺ / ⟨a⁺⟩`. Death rates are maintained incrementally with a cell list.

mod cells;
mod io;

pub use io::{read_run, write_run, RunSummary, SnapshotStats};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::configspace::{torus_distance, wrap, Configuration};
use crate::error::{Error, Result};
use crate::kernels::{ModelParams, Vector};
use cells::CellGrid;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Poisson point process of the given intensity.
    Poisson { density: f64 },
    Points(Vec<Vector>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub params: ModelParams,
    pub t_max: f64,
    pub initial: InitialCondition,
    /// Sorted times in `[0, t_max]` at which the state is recorded.
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
    pub replicas: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidInput(format!("t_max = {} must be finite and >= 0", self.t_max)));
        }
        if self.snapshot_times.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::InvalidInput("snapshot times must be sorted".into()));
        }
        if self.snapshot_times.iter().any(|&s| !(0.0..=self.t_max).contains(&s)) {
            return Err(Error::InvalidInput("snapshot times must lie in [0, t_max]".into()));
        }
        if let InitialCondition::Poisson { density } = self.initial {
            if !(density >= 0.0 && density.is_finite()) {
                return Err(Error::InvalidInput(format!("initial density {density} must be >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Birth,
    Death,
    /// Every rate vanishes (for instance after extinction): the state is
    /// absorbing and time no longer advances.
    Absorbed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub points: Vec<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaTrajectory {
    pub replica: usize,
    pub snapshots: Vec<Snapshot>,
    pub events: u64,
}

#[derive(Debug, Clone)]
pub struct SimState {
    params: ModelParams,
    grid: CellGrid,
    pos: Vec<Vector>,
    rate: Vec<f64>,
    cell_of: Vec<u32>,
    slot_of: Vec<u32>,
    cells: Vec<Vec<u32>>,
    cell_rate: Vec<f64>,
    total_death: f64,
    t: f64,
    events: u64,
    rng: ChaCha8Rng,
}

const MAX_CELLS_1D: usize = 1024;
const MAX_CELLS_2D: usize = 64;

impl SimState {
    /// Empty state with the random stream `(seed, replica)`.
    pub fn empty(params: &ModelParams, seed: u64, replica: usize) -> Self {
        let max = if params.dim == 1 { MAX_CELLS_1D } else { MAX_CELLS_2D };
        let r_cut = if params.a_minus.is_zero() { 0.0 } else { params.a_minus.r_cut() };
        let grid = CellGrid::new(params.box_len, params.dim, r_cut, max);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replica as u64);
        SimState {
            params: params.clone(),
            cells: vec![Vec::new(); grid.count()],
            cell_rate: vec![0.0; grid.count()],
            grid,
            pos: Vec::new(),
            rate: Vec::new(),
            cell_of: Vec::new(),
            slot_of: Vec::new(),
            total_death: 0.0,
            t: 0.0,
            events: 0,
            rng,
        }
    }

    pub fn init(sc: &SimConfig, replica: usize) -> Result<Self> {
        sc.validate()?;
        let p = &sc.params;
        let mut s = Self::empty(p, sc.seed, replica);
        match &sc.initial {
            InitialCondition::Poisson { density } => {
                let mean = density * p.volume();
                let n = if mean > 0.0 {
                    Poisson::new(mean)
                        .map_err(|e| Error::InvalidInput(e.to_string()))?
                        .sample(&mut s.rng) as usize
                } else {
                    0
                };
                for _ in 0..n {
                    let mut x = [0.0; 2];
                    for c in x.iter_mut().take(p.dim) {
                        *c = s.rng.random::<f64>() * p.box_len;
                    }
                    s.insert(x);
                }
            }
            InitialCondition::Points(points) => {
                let cfg = Configuration::new(points.clone(), p.box_len, p.dim)?;
                for x in cfg.points() {
                    s.insert(*x);
                }
            }
        }
        Ok(s)
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn points(&self) -> &[Vector] {
        &self.pos
    }

    pub fn death_rates(&self) -> &[f64] {
        &self.rate
    }

    /// Incrementally maintained `D = Σ_i (m + E⁻(x_i, γ∖x_i))`.
    pub fn total_death_rate(&self) -> f64 {
        self.total_death
    }

    /// `|γ| ⟨a⁺⟩`.
    pub fn total_birth_rate(&self) -> f64 {
        self.pos.len() as f64 * self.params.a_plus.total_mass()
    }

    fn pair_rate(&self, x: &Vector, y: &Vector) -> f64 {
        self.params
            .a_minus
            .eval_radial(torus_distance(x, y, self.params.box_len, self.params.dim))
    }

    /// Death rates recomputed from scratch by direct pair summation.
    pub fn scratch_death_rates(&self) -> Vec<f64> {
        let m = self.params.m;
        (0..self.pos.len())
            .map(|i| {
                m + (0..self.pos.len())
                    .filter(|&j| j != i)
                    .map(|j| self.pair_rate(&self.pos[i], &self.pos[j]))
                    .sum::<f64>()
            })
            .collect()
    }

    /// Replaces all incremental sums with values recomputed from the
    /// cell list.
    pub fn recompute_rates(&mut self) {
        for i in 0..self.pos.len() {
            let x = self.pos[i];
            let c = self.cell_of[i] as usize;
            let mut r = self.params.m;
            for &nc in self.grid.neighbours(c) {
                for &j in &self.cells[nc as usize] {
                    if j as usize != i {
                        r += self.pair_rate(&x, &self.pos[j as usize]);
                    }
                }
            }
            self.rate[i] = r;
        }
        for (c, members) in self.cells.iter().enumerate() {
            self.cell_rate[c] = members.iter().map(|&j| self.rate[j as usize]).sum();
        }
        self.total_death = self.cell_rate.iter().sum();
    }

    /// Adds a particle at `x` (wrapped into the box) and returns its index.
    pub fn insert(&mut self, x: Vector) -> usize {
        let x = wrap(&x, self.params.box_len, self.params.dim);
        let c = self.grid.cell_of(&x);
        let idx = self.pos.len();
        let mut own = self.params.m;
        if !self.params.a_minus.is_zero() {
            for &nc in self.grid.neighbours(c) {
                for &j in &self.cells[nc as usize] {
                    let a = self.pair_rate(&x, &self.pos[j as usize]);
                    if a != 0.0 {
                        self.rate[j as usize] += a;
                        self.cell_rate[nc as usize] += a;
                        self.total_death += a;
                        own += a;
                    }
                }
            }
        }
        self.pos.push(x);
        self.rate.push(own);
        self.cell_of.push(c as u32);
        self.slot_of.push(self.cells[c].len() as u32);
        self.cells[c].push(idx as u32);
        self.cell_rate[c] += own;
        self.total_death += own;
        idx
    }

    /// Removes particle `idx`; the last particle takes over its index.
    pub fn remove(&mut self, idx: usize) {
        let x = self.pos[idx];
        let c = self.cell_of[idx] as usize;
        let slot = self.slot_of[idx] as usize;
        self.cells[c].swap_remove(slot);
        if let Some(&moved) = self.cells[c].get(slot) {
            self.slot_of[moved as usize] = slot as u32;
        }
        let own = self.rate[idx];
        self.cell_rate[c] -= own;
        self.total_death -= own;
        if !self.params.a_minus.is_zero() {
            for &nc in self.grid.neighbours(c) {
                for &j in &self.cells[nc as usize] {
                    let a = self.pair_rate(&x, &self.pos[j as usize]);
                    if a != 0.0 {
                        self.rate[j as usize] -= a;
                        self.cell_rate[nc as usize] -= a;
                        self.total_death -= a;
                    }
                }
            }
        }
        let last = self.pos.len() - 1;
        self.pos.swap_remove(idx);
        self.rate.swap_remove(idx);
        self.cell_of.swap_remove(idx);
        self.slot_of.swap_remove(idx);
        if idx != last {
            let lc = self.cell_of[idx] as usize;
            let ls = self.slot_of[idx] as usize;
            self.cells[lc][ls] = idx as u32;
        }
        if self.pos.len() <= 1 {
            // clear rounding residue: a lone particle dies at exactly rate m
            self.recompute_rates();
        }
    }

    fn pick_death(&mut self) -> usize {
        let target = self.rng.random::<f64>() * self.total_death;
        let mut acc = 0.0;
        let mut cell = None;
        for (c, &r) in self.cell_rate.iter().enumerate() {
            if self.cells[c].is_empty() {
                continue;
            }
            cell = Some(c);
            acc += r;
            if acc > target {
                break;
            }
        }
        let c = cell.expect("death requested in an empty state");
        let local = target - (acc - self.cell_rate[c]);
        let members = &self.cells[c];
        let mut acc = 0.0;
        for &j in members {
            acc += self.rate[j as usize];
            if acc > local {
                return j as usize;
            }
        }
        *members.last().unwrap() as usize
    }

    /// Waiting time until the next event, or `None` when extinct.
    fn draw_waiting_time(&mut self) -> Option<f64> {
        let total = self.total_death + self.total_birth_rate();
        if self.pos.is_empty() || total <= 0.0 {
            return None;
        }
        let u: f64 = self.rng.random();
        Some(-(1.0 - u).ln() / total)
    }

    fn apply_event(&mut self) -> EventKind {
        let birth = self.total_birth_rate();
        let total = self.total_death + birth;
        if self.rng.random::<f64>() * total < self.total_death {
            let i = self.pick_death();
            self.remove(i);
            EventKind::Death
        } else {
            let parent = self.rng.random_range(0..self.pos.len());
            let d = self
                .params
                .a_plus
                .sample_displacement(&mut self.rng)
                .expect("birth rate is positive only for a nonzero kernel");
            let x = self.pos[parent];
            self.insert([x[0] + d[0], x[1] + d[1]]);
            EventKind::Birth
        }
    }

    /// Performs one event.
    pub fn step(&mut self) -> Event {
        match self.draw_waiting_time() {
            None => Event {
                t: self.t,
                kind: EventKind::Absorbed,
            },
            Some(dt) => {
                self.t += dt;
                self.events += 1;
                let kind = self.apply_event();
                Event { t: self.t, kind }
            }
        }
    }

    /// Advances to `t_max`, recording the configuration at each of `times`.
    pub fn run_until(&mut self, t_max: f64, times: &[f64]) -> Vec<Snapshot> {
        let mut snaps = Vec::with_capacity(times.len());
        let mut next = 0;
        loop {
            let next_event = self.draw_waiting_time().map(|dt| self.t + dt);
            let horizon = next_event.unwrap_or(f64::INFINITY);
            while next < times.len() && times[next] < horizon {
                snaps.push(Snapshot {
                    t: times[next],
                    points: self.pos.clone(),
                });
                next += 1;
            }
            match next_event {
                Some(te) if te <= t_max => {
                    self.t = te;
                    self.events += 1;
                    self.apply_event();
                }
                _ => {
                    self.t = t_max.max(self.t);
                    break;
                }
            }
        }
        while next < times.len() {
            snaps.push(Snapshot {
                t: times[next],
                points: self.pos.clone(),
            });
            next += 1;
        }
        snaps
    }
}

/// Runs one replica; deterministic in `(sc.seed, replica)`.
pub fn run_replica(sc: &SimConfig, replica: usize) -> Result<ReplicaTrajectory> {
    let mut s = SimState::init(sc, replica)?;
    let snapshots = s.run_until(sc.t_max, &sc.snapshot_times);
    Ok(ReplicaTrajectory {
        replica,
        snapshots,
        events: s.events(),
    })
}

/// Runs all replicas in parallel.
pub fn run(sc: &SimConfig) -> Result<Vec<ReplicaTrajectory>> {
    sc.validate()?;
    (0..sc.replicas).into_par_iter().map(|r| run_replica(sc, r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;

    fn params(m: f64, plus: Kernel, minus: Kernel, box_len: f64) -> ModelParams {
        ModelParams::new(m, plus, minus, box_len).unwrap()
    }

    fn config(p: ModelParams, initial: InitialCondition, t_max: f64, times: Vec<f64>) -> SimConfig {
        SimConfig {
            params: p,
            t_max,
            initial,
            snapshot_times: times,
            seed: 11,
            replicas: 1,
        }
    }

    #[test]
    fn init_examples() {
        let p = params(0.0, Kernel::zero(1), Kernel::tophat(1.0, 1.0, 1).unwrap(), 10.0);
        let sc = config(p.clone(), InitialCondition::Poisson { density: 0.0 }, 1.0, vec![]);
        let s = SimState::init(&sc, 0).unwrap();
        assert!(s.is_empty());
        assert_eq!((s.total_death_rate(), s.total_birth_rate()), (0.0, 0.0));

        let sc = config(p.clone(), InitialCondition::Points(vec![[0.0, 0.0], [0.5, 0.0]]), 1.0, vec![]);
        let s = SimState::init(&sc, 0).unwrap();
        assert_eq!(s.death_rates(), &[1.0, 1.0]);
        let sc = config(p, InitialCondition::Points(vec![[10.5, 0.0]]), 1.0, vec![]);
        assert!(SimState::init(&sc, 0).is_err());
    }

    #[test]
    fn incremental_rates_match_scratch() {
        let p = params(
            0.2,
            Kernel::gaussian(0.7, 0.9, 2).unwrap(),
            Kernel::tophat(0.3, 1.1, 2).unwrap(),
            12.0,
        );
        let sc = config(p, InitialCondition::Poisson { density: 1.5 }, 1e9, vec![]);
        let mut s = SimState::init(&sc, 3).unwrap();
        for k in 0..20_000 {
            s.step();
            if k % 1000 == 0 {
                let scratch = s.scratch_death_rates();
                let total: f64 = scratch.iter().sum();
                assert!((total - s.total_death_rate()).abs() <= 1e-8 * total.max(1e-300));
                for (a, b) in scratch.iter().zip(s.death_rates()) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn insert_then_remove_restores_rates() {
        let p = params(0.1, Kernel::zero(1), Kernel::exponential(1.0, 0.5, 1).unwrap(), 30.0);
        let sc = config(p, InitialCondition::Poisson { density: 2.0 }, 1.0, vec![]);
        let mut s = SimState::init(&sc, 0).unwrap();
        let before = s.death_rates().to_vec();
        let d0 = s.total_death_rate();
        let i = s.insert([7.3, 0.0]);
        s.remove(i);
        for (a, b) in before.iter().zip(s.death_rates()) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!((d0 - s.total_death_rate()).abs() <= 1e-12 * d0.max(1.0));
    }

    #[test]
    fn translation_leaves_rates_unchanged() {
        let p = params(0.1, Kernel::zero(2), Kernel::gaussian(0.8, 1.0, 2).unwrap(), 8.0);
        let sc = config(p.clone(), InitialCondition::Poisson { density: 1.0 }, 1.0, vec![]);
        let s = SimState::init(&sc, 1).unwrap();
        let shifted: Vec<Vector> = s
            .points()
            .iter()
            .map(|x| wrap(&[x[0] + 3.7, x[1] - 5.1], 8.0, 2))
            .collect();
        let sc2 = config(p, InitialCondition::Points(shifted), 1.0, vec![]);
        let s2 = SimState::init(&sc2, 1).unwrap();
        for (a, b) in s.death_rates().iter().zip(s2.death_rates()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn determinism_and_zero_horizon() {
        let p = params(0.3, Kernel::tophat(0.2, 1.0, 1).unwrap(), Kernel::tophat(0.2, 1.0, 1).unwrap(), 20.0);
        let mut sc = config(p, InitialCondition::Poisson { density: 1.0 }, 5.0, vec![0.0, 2.5, 5.0]);
        sc.replicas = 3;
        let a = run(&sc).unwrap();
        let b = run(&sc).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].snapshots, a[1].snapshots);

        sc.t_max = 0.0;
        sc.snapshot_times = vec![0.0];
        let z = run_replica(&sc, 0).unwrap();
        let init = SimState::init(&sc, 0).unwrap();
        assert_eq!(z.snapshots[0].points, init.points());
    }

    #[test]
    fn pure_competition_stops_at_one() {
        let p = params(0.0, Kernel::zero(1), Kernel::tophat(0.5, 5.0, 1).unwrap(), 10.0);
        let sc = config(p, InitialCondition::Poisson { density: 3.0 }, 1e6, vec![]);
        let mut s = SimState::init(&sc, 0).unwrap();
        let mut last = s.len();
        loop {
            let e = s.step();
            if e.kind == EventKind::Absorbed {
                break;
            }
            assert_eq!(e.kind, EventKind::Death);
            assert!(s.len() < last);
            last = s.len();
            if s.len() == 1 {
                assert_eq!(s.step().kind, EventKind::Absorbed);
                break;
            }
        }
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn extinct_runs_keep_emitting_empty_snapshots() {
        let p = params(5.0, Kernel::zero(1), Kernel::zero(1), 10.0);
        let sc = config(p, InitialCondition::Points(vec![[1.0, 0.0]]), 100.0, vec![0.0, 50.0, 100.0]);
        let r = run_replica(&sc, 0).unwrap();
        assert_eq!(r.snapshots.len(), 3);
        assert_eq!(r.snapshots[0].points.len(), 1);
        assert!(r.snapshots[2].points.is_empty());
    }
}
