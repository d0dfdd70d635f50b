use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use spatial_logistic::configspace::{
    correlation_of_density, k_inverse, k_transform, lp_integral, SiteLattice, SubsetSpace, TruncatedFunction,
};
use spatial_logistic::estimators::{
    cluster_index, dobrushin_moment, estimate_k1, estimate_k2_radial, Geometry, SubWindow,
};
use spatial_logistic::hierarchy::{Hierarchy, HierarchyState, RadialGrid};
use spatial_logistic::kinetic::{
    equilibrium, front_speed, linear_spreading_speed, logistic_closed_form, DensityField, FieldGrid,
    KineticSolver,
};
use spatial_logistic::operators::{
    default_fixture, duality_residuals, local_density_check, stochasticity_check, verify_bounds, BoundsOptions,
    Check, LatticeModel, OvcyannikovSchedule,
};
use spatial_logistic::simulator::{self, read_run, write_run, InitialCondition, SimConfig, Snapshot};
use spatial_logistic::Error as CoreError;
use thiserror::Error;

use crate::config::{ConfigError, Fixture, KinInitial, RunConfig, SimInitial};
use crate::output::{csv, RunDir};
use crate::plot::{line_plot, Series};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    Config(Vec<ConfigError>),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 2,
            CliError::Core(CoreError::Divergence { .. } | CoreError::ClosureSingularity(_)) => 3,
            _ => 1,
        }
    }

    pub fn status(&self) -> &'static str {
        match self.exit_code() {
            2 => "verification_failed",
            3 => "divergence",
            _ => "error",
        }
    }
}

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub dir: &'a mut RunDir,
    pub plots: bool,
}

impl Ctx<'_> {
    fn plot(&mut self, name: &str, title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> std::io::Result<()> {
        if self.plots {
            self.dir.write(name, line_plot(title, xlabel, ylabel, series))?;
        }
        Ok(())
    }
}

pub fn simulate(ctx: &mut Ctx) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let model = cfg.model.as_ref().expect("validated");
    let sim = cfg.sim.as_ref().expect("validated");
    let p = model.params().clone();
    let initial = match &sim.initial {
        SimInitial::Poisson { density } => InitialCondition::Poisson { density: *density },
        SimInitial::Points { points } => InitialCondition::Points(
            points
                .iter()
                .map(|x| [x[0], x.get(1).copied().unwrap_or(0.0)])
                .collect(),
        ),
    };
    let sc = SimConfig {
        params: p,
        t_max: sim.t_max,
        initial,
        snapshot_times: sim.times.clone(),
        seed: cfg.seed,
        replicas: cfg.replicas,
    };
    let trajs = simulator::run(&sc)?;
    let summary = write_run(&ctx.dir.path, &trajs, model.box_len, model.dim, cfg.seed, sim.t_max)?;
    ctx.dir.record(summary.files.iter().cloned());
    ctx.dir.record(["summary.json".to_string()]);
    let vol = model.box_len.powi(model.dim as i32);
    let density = Series {
        name: "mean N / L^d",
        points: summary.stats.iter().map(|s| (s.t, s.mean_n / vol)).collect(),
    };
    ctx.plot("density.svg", "Particle density", "t", "density", &[density])?;
    Ok(())
}

#[derive(Serialize)]
struct TimeEstimates {
    t: f64,
    k1: spatial_logistic::estimators::Estimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    cluster_index: Option<spatial_logistic::estimators::ClusterIndex>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dobrushin: Option<spatial_logistic::estimators::ExponentialMoment>,
}

pub fn estimate(ctx: &mut Ctx) -> Result<(), CliError> {
    let est = ctx.cfg.est.as_ref().expect("validated");
    let (summary, trajs) = read_run(&est.run)?;
    let geom = Geometry {
        box_len: summary.box_len,
        dim: summary.dim,
    };
    let window = est.dobrushin.as_ref().map(|d| {
        let mut w = SubWindow {
            lo: [0.0; 2],
            hi: [0.0; 2],
        };
        w.lo[..d.lo.len()].copy_from_slice(&d.lo);
        w.hi[..d.hi.len()].copy_from_slice(&d.hi);
        (d.alpha, w)
    });
    let mut k1_rows = Vec::new();
    let mut k2_rows = Vec::new();
    let mut per_time = Vec::new();
    let mut last_k2 = Vec::new();
    for (k, &t) in summary.snapshot_times.iter().enumerate() {
        let snaps: Vec<Snapshot> = trajs.iter().map(|tr| tr.snapshots[k].clone()).collect();
        let k1 = estimate_k1(&snaps, geom)?;
        let k2 = estimate_k2_radial(&snaps, &est.edges, geom)?;
        k1_rows.push(vec![t, k1.value, k1.stderr.unwrap_or(f64::NAN)]);
        last_k2.clear();
        for b in 0..k2.k2.len() {
            let (lo, hi) = (est.edges[b], est.edges[b + 1]);
            k2_rows.push(vec![t, lo, hi, k2.k2[b], k2.k2_stderr[b].unwrap_or(f64::NAN)]);
            last_k2.push((0.5 * (lo + hi), k2.k2[b]));
        }
        let cluster_index = est.r0.map(|r0| cluster_index(&k2, r0)).transpose()?;
        let dobrushin = window
            .as_ref()
            .map(|(alpha, w)| dobrushin_moment(&snaps, *alpha, w, geom))
            .transpose()?;
        per_time.push(TimeEstimates {
            t,
            k1,
            cluster_index,
            dobrushin,
        });
    }
    ctx.dir.write("k1.csv", csv("t,k1,stderr", k1_rows))?;
    ctx.dir.write("k2.csv", csv("t,r_lo,r_hi,k2,stderr", k2_rows))?;
    ctx.dir.write_json(
        "estimates.json",
        &json!({
            "geometry": geom,
            "replicas": trajs.len(),
            "edges": est.edges,
            "times": per_time,
        }),
    )?;
    let t_last = summary.snapshot_times.last().copied().unwrap_or(0.0);
    let k1_series = Series {
        name: "k1",
        points: per_time.iter().map(|e| (e.t, e.k1.value)).collect(),
    };
    ctx.plot("k1.svg", "Density estimate", "t", "k1", &[k1_series])?;
    let name = format!("k2 at t = {t_last}");
    ctx.plot("k2.svg", "Pair correlation", "r", "k2", &[Series { name: &name, points: last_k2 }])?;
    Ok(())
}

pub fn hierarchy(ctx: &mut Ctx) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let model = cfg.model.as_ref().expect("validated");
    let h = cfg.hier.as_ref().expect("validated");
    let grid = RadialGrid::new(h.dr, h.r_max)?;
    let solver = Hierarchy::new(model.params(), grid, h.closure, h.scaling)?;
    let traj = solver.integrate(&HierarchyState::poisson(h.u0, &grid), h.dt, h.t_max, h.stride)?;
    let radii = grid.radii();
    ctx.dir.write("u.csv", csv("t,u", traj.states.iter().map(|s| vec![s.t, s.u])))?;
    let w_rows = traj
        .states
        .iter()
        .flat_map(|s| radii.iter().zip(&s.w).map(move |(&r, &w)| vec![s.t, r, w]));
    ctx.dir.write("w.csv", csv("t,r,w", w_rows))?;
    let last = traj.states.last().expect("initial state is always recorded");
    ctx.dir.write_json(
        "hierarchy.json",
        &json!({
            "closure": h.closure,
            "scaling": h.scaling,
            "grid": grid,
            "clipped": traj.clipped,
            "final": {
                "t": last.t,
                "u": last.u,
                "w0": last.w[0],
                "w0_over_u2": (last.u > 0.0).then(|| last.w[0] / (last.u * last.u)),
            },
        }),
    )?;
    let u = Series {
        name: "u",
        points: traj.states.iter().map(|s| (s.t, s.u)).collect(),
    };
    ctx.plot("u.svg", "Density from the hierarchy", "t", "u", &[u])?;
    if last.u > 0.0 {
        let g = Series {
            name: "w / u^2",
            points: radii.iter().zip(&last.w).map(|(&r, &w)| (r, w / (last.u * last.u))).collect(),
        };
        ctx.plot("w.svg", "Normalized pair correlation at t_max", "r", "w / u^2", &[g])?;
    }
    Ok(())
}

pub fn kinetic(ctx: &mut Ctx) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let model = cfg.model.as_ref().expect("validated");
    let p = model.params();
    let k = cfg.kin.as_ref().expect("validated");
    let grid = FieldGrid::new(model.box_len, model.dim, k.per_side)?;
    let solver = KineticSolver::new(p, grid)?;
    let rho0 = match k.initial {
        KinInitial::Uniform { density } => DensityField::uniform(grid, density),
        KinInitial::Block {
            lo,
            hi,
            density,
            background,
        } => DensityField::from_fn(grid, |x| if x[0] >= lo && x[0] < hi { density } else { background }),
    };
    let traj = solver.integrate(&rho0, k.dt, k.t_max, k.stride)?;

    let header = if model.dim == 1 { "t,x0,rho" } else { "t,x0,x1,rho" };
    let rows = traj.states.iter().flat_map(|s| {
        s.values.iter().enumerate().map(move |(i, &v)| {
            let x = grid.position(i);
            let mut row = vec![s.t, x[0]];
            if model.dim == 2 {
                row.push(x[1]);
            }
            row.push(v);
            row
        })
    });
    ctx.dir.write("rho.csv", csv(header, rows))?;

    let (mass_plus, mass_minus) = (p.a_plus.total_mass(), p.a_minus.total_mass());
    let last = traj.states.last().expect("initial state is always recorded");
    let mut summary = json!({
        "grid": grid,
        "dt": k.dt,
        "clipped": traj.clipped,
        "equilibrium": equilibrium(p),
        "final": {"t": last.t, "mean": last.mean(), "max": last.max()},
    });
    if let KinInitial::Uniform { density } = k.initial {
        let max_abs_error = traj
            .states
            .iter()
            .flat_map(|s| {
                let exact = logistic_closed_form(density, p.m, mass_plus, mass_minus, s.t);
                s.values.iter().map(move |v| (v - exact).abs())
            })
            .fold(0.0, f64::max);
        summary["homogeneous"] = json!({
            "max_abs_error": max_abs_error,
            "closed_form_final": logistic_closed_form(density, p.m, mass_plus, mass_minus, last.t),
        });
    }
    if let Some(level) = k.front_level {
        let front = front_speed(&traj, level)?;
        ctx.dir.write("front.csv", csv("t,position", front.positions.iter().map(|&(t, x)| vec![t, x])))?;
        summary["front"] = json!({
            "level": level,
            "speed": front.speed,
            "fit_residual": front.fit_residual,
            "window": front.window,
            "status": front.status,
            "linear_spreading_speed": linear_spreading_speed(&p.a_plus, p.m).ok(),
        });
        let pos = Series {
            name: "front",
            points: front.positions.clone(),
        };
        ctx.plot("front.svg", "Front position", "t", "x", &[pos])?;
    }
    ctx.dir.write_json("summary.json", &summary)?;
    let mean = Series {
        name: "mean",
        points: traj.states.iter().map(|s| (s.t, s.mean())).collect(),
    };
    let max = Series {
        name: "max",
        points: traj.states.iter().map(|s| (s.t, s.max())).collect(),
    };
    ctx.plot("density.svg", "Kinetic density", "t", "rho", &[mean, max])?;
    Ok(())
}

fn at_time(name: &str, t: f64) -> String {
    format!("{name}[t={t}]")
}

fn fixture_model(ctx: &Ctx) -> Result<LatticeModel, CliError> {
    let v = ctx.cfg.verify.as_ref().expect("validated");
    match v.fixture {
        Fixture::Default => Ok(default_fixture()?),
        Fixture::Model => {
            let model = ctx.cfg.model.as_ref().expect("validated");
            let lat = SiteLattice::new(model.box_len, model.dim, v.per_side.expect("validated"))?;
            Ok(LatticeModel::new(&lat, model.params(), v.cap.expect("validated"))?)
        }
    }
}

fn initial_correlation(path: Option<&Path>, model: &LatticeModel, rng: &mut ChaCha8Rng) -> Result<TruncatedFunction, CliError> {
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
            CliError::Config(vec![ConfigError {
                path: "verify.k0".into(),
                message: format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()),
            }])
        })?;
        let k0 = TruncatedFunction::from_json(&value, Some(model.space()))?;
        if k0.space() != model.space() {
            return Err(CliError::Config(vec![ConfigError {
                path: "verify.k0".into(),
                message: "function lives on a different subset space than the fixture".into(),
            }]));
        }
        return Ok(k0);
    }
    // a random probability density on the finite configurations, so that k0
    // is the correlation function of a genuine state
    let lat = model.lattice();
    let r0 = TruncatedFunction::from_fn(model.space(), |_| rng.random::<f64>());
    let mass = lp_integral(&r0, lat);
    Ok(correlation_of_density(&r0.map(|x| x / mass), lat))
}

pub fn verify(ctx: &mut Ctx) -> Result<(), CliError> {
    let v = ctx.cfg.verify.as_ref().expect("validated");
    let seed = ctx.cfg.seed;
    let model = fixture_model(ctx)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks: Vec<Check> = Vec::new();

    let dual = duality_residuals(&model, v.draws, seed);
    checks.push(Check::at_most("duality.symbol", dual.symbol, 1e-10));
    checks.push(Check::at_most("duality.generator", dual.generator, 1e-10));

    let st = stochasticity_check(&model, &v.times);
    checks.push(Check::at_most("stochasticity.lambda_integral", st.max_lp_integral, 1e-12));
    for &(t, min_entry, defect) in &st.semigroup {
        checks.push(Check::at_most(at_time("stochasticity.negativity", t), (-min_entry).max(0.0), 1e-12));
        checks.push(Check::at_most(at_time("stochasticity.mass_defect", t), defect, 1e-10));
    }

    let space = SubsetSpace::full(v.k_transform_sites)?;
    let (mut inv, mut neg) = (0.0f64, 0.0f64);
    for _ in 0..v.k_transform_draws {
        let g = TruncatedFunction::from_fn(&space, |_| rng.random::<f64>());
        let kg = k_transform(&g);
        inv = inv.max(k_inverse(&kg).max_abs_diff(&g));
        neg = kg.values().iter().fold(neg, |a, &x| a.max(-x));
    }
    checks.push(Check::at_most("k_transform.inverse", inv, 1e-12));
    checks.push(Check::at_most("k_transform.negativity", neg, 0.0));

    let k0 = initial_correlation(v.k0.as_deref(), &model, &mut rng)?;
    ctx.dir.write_json("k0.json", &k0.to_json())?;
    for &t in &v.density_times {
        let rep = local_density_check(&k0, &model, t)?;
        checks.push(Check::at_most(at_time("local_density", t), rep.residual, 1e-8));
    }

    let sched = OvcyannikovSchedule::for_model(&model, v.alpha_low, v.alpha_high, v.alpha, v.depth)?;
    let opts = BoundsOptions {
        t: v.t_fraction * sched.horizon,
        panels: v.panels,
        g0: None,
        k0: None,
        k_alpha: v.k_alpha,
        k_delta: v.k_delta,
        tol: v.tol,
        samples: v.samples,
        seed,
    };
    checks.extend(verify_bounds(&model, &sched, &opts)?);

    let (mass_plus, mass_minus) = model.bound_masses();
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    let all_pass = failed.is_empty();
    ctx.dir.write_json(
        "report.json",
        &json!({
            "fixture": {
                "sites": model.lattice().sites(),
                "cap": model.space().cap(),
                "box_len": model.lattice().box_len(),
                "dim": model.lattice().dim(),
                "bound_masses": [mass_plus, mass_minus],
            },
            "schedule": {
                "alpha_low": sched.alpha_low,
                "alpha_high": sched.alpha_high,
                "alpha": sched.alpha,
                "depth": sched.depth,
                "t_star": sched.t_star,
                "horizon": sched.horizon,
                "picard_time": opts.t,
            },
            "all_pass": all_pass,
            "checks": checks,
        }),
    )?;
    for c in &checks {
        println!(
            "{} {:<48} {:.3e} <= {:.3e}",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            c.value,
            c.bound
        );
    }
    if all_pass {
        Ok(())
    } else {
        Err(CliError::Verification(format!("{} of {} checks failed: {}", failed.len(), checks.len(), failed.join(", "))))
    }
}
