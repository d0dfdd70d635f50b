//! Run configuration: a JSON document, patched by command-line overrides,
//! then validated in one pass that reports every problem it finds.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use spatial_logistic::hierarchy::{Closure, RadialGrid, Scaling};
use spatial_logistic::kernels::{Kernel, KernelShape, ModelParams};
use spatial_logistic::kinetic::{equilibrium, FieldGrid};
use spatial_logistic::simulator::RunSummary;
use spatial_logistic::Error as CoreError;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dot path of the offending field; empty for the document itself.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Simulate,
    Estimate,
    Hierarchy,
    Kinetic,
    Verify,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::Estimate => "estimate",
            Subcommand::Hierarchy => "hierarchy",
            Subcommand::Kinetic => "kinetic",
            Subcommand::Verify => "verify",
        }
    }
}

/// Reads a config file. Syntax errors carry the line and column.
pub fn load(path: &Path) -> Result<Value, Vec<ConfigError>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![ConfigError {
            path: String::new(),
            message: format!("cannot read {}: {e}", path.display()),
        }]
    })?;
    serde_json::from_str(&text).map_err(|e| {
        vec![ConfigError {
            path: String::new(),
            message: format!("{}: {e}", path.display()),
        }]
    })
}

/// Applies `a.b.c=value`. The value is read as JSON when it parses and as a
/// plain string otherwise, so `model.m=0.3` and `label=run1` both work.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), ConfigError> {
    let bad = |message: String| ConfigError {
        path: String::new(),
        message,
    };
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| bad(format!("override '{spec}' is not of the form key=value")))?;
    let keys: Vec<&str> = key.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(bad(format!("override key '{key}' has an empty component")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    set_path(root, &keys, value).map_err(|prefix| ConfigError {
        path: prefix,
        message: format!("cannot apply override '{spec}': not an object"),
    })
}

pub fn set_path(root: &mut Value, keys: &[&str], value: Value) -> Result<(), String> {
    let mut node = root;
    for (i, k) in keys.iter().enumerate() {
        let map = node.as_object_mut().ok_or_else(|| keys[..i].join("."))?;
        if i + 1 == keys.len() {
            map.insert(k.to_string(), value);
            return Ok(());
        }
        node = map.entry(k.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub shape: KernelShape,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_cut: Option<f64>,
    /// Source of a tabulated profile; the table itself is echoed inline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl KernelSpec {
    fn zero() -> Self {
        KernelSpec {
            shape: KernelShape::Zero,
            r_cut: None,
            file: None,
        }
    }

    pub fn build(&self, dim: usize) -> Result<Kernel, CoreError> {
        match self.r_cut {
            Some(rc) => Kernel::with_cutoff(self.shape.clone(), dim, rc),
            None => Kernel::new(self.shape.clone(), dim),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSpec {
    pub dim: usize,
    pub box_len: f64,
    pub m: f64,
    pub a_plus: KernelSpec,
    pub a_minus: KernelSpec,
    #[serde(skip)]
    pub params: Option<ModelParams>,
}

impl ModelSpec {
    pub fn params(&self) -> &ModelParams {
        self.params.as_ref().expect("validated model")
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SimInitial {
    Poisson { density: f64 },
    Points { points: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize)]
pub struct SimSpec {
    pub t_max: f64,
    pub times: Vec<f64>,
    pub initial: SimInitial,
}

#[derive(Debug, Clone, Serialize)]
pub struct DobrushinSpec {
    pub alpha: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstSpec {
    pub run: PathBuf,
    pub edges: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dobrushin: Option<DobrushinSpec>,
    #[serde(skip)]
    pub summary: Option<RunSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HierSpec {
    pub u0: f64,
    pub closure: Closure,
    pub scaling: Scaling,
    pub dr: f64,
    pub r_max: f64,
    pub dt: f64,
    pub t_max: f64,
    pub stride: usize,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KinInitial {
    Uniform { density: f64 },
    /// `density` on `lo ≤ x₀ < hi`, `background` elsewhere.
    Block {
        lo: f64,
        hi: f64,
        density: f64,
        background: f64,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct KinSpec {
    pub per_side: usize,
    pub dt: f64,
    pub t_max: f64,
    pub stride: usize,
    pub initial: KinInitial,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub front_level: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Fixture {
    Default,
    /// The `model` block on a lattice of `per_side` sites per axis.
    Model,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifySpec {
    pub fixture: Fixture,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_side: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    pub draws: usize,
    pub times: Vec<f64>,
    pub density_times: Vec<f64>,
    pub k_transform_sites: usize,
    pub k_transform_draws: usize,
    pub depth: usize,
    pub alpha_low: f64,
    pub alpha_high: f64,
    pub alpha: f64,
    pub k_alpha: f64,
    pub k_delta: f64,
    pub t_fraction: f64,
    pub panels: usize,
    pub samples: usize,
    pub tol: f64,
    /// Initial correlation function for the local-density check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k0: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub replicas: usize,
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub est: Option<EstSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hier: Option<HierSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kin: Option<KinSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySpec>,
}

#[derive(Clone, Copy)]
enum Range {
    Any,
    NonNegative,
    Positive,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// Collects errors while walking the document.
#[derive(Default)]
struct Walker {
    errors: Vec<ConfigError>,
    /// Directory that relative file references are resolved against.
    base: PathBuf,
}

impl Walker {
    fn err(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(ConfigError {
            path: path.to_string(),
            message: message.into(),
        });
    }

    fn object<'v>(&mut self, v: &'v Value, path: &str, allowed: &[&str]) -> Option<&'v Map<String, Value>> {
        let Value::Object(map) = v else {
            self.err(path, "expected an object");
            return None;
        };
        for k in map.keys() {
            if !allowed.contains(&k.as_str()) {
                self.err(&join(path, k), format!("unknown field (expected one of: {})", allowed.join(", ")));
            }
        }
        Some(map)
    }

    fn number(&mut self, map: &Map<String, Value>, path: &str, key: &str, default: Option<f64>, range: Range) -> Option<f64> {
        let p = join(path, key);
        let Some(v) = map.get(key) else {
            if default.is_none() {
                self.err(&p, "missing required field");
            }
            return default;
        };
        let Some(x) = v.as_f64().filter(|x| x.is_finite()) else {
            self.err(&p, format!("expected a finite number, got {v}"));
            return None;
        };
        match range {
            Range::NonNegative if x < 0.0 => self.err(&p, format!("must be >= 0, got {x}")),
            Range::Positive if x <= 0.0 => self.err(&p, format!("must be > 0, got {x}")),
            _ => return Some(x),
        }
        None
    }

    fn opt_number(&mut self, map: &Map<String, Value>, path: &str, key: &str, range: Range) -> Option<Option<f64>> {
        if map.contains_key(key) {
            self.number(map, path, key, None, range).map(Some)
        } else {
            Some(None)
        }
    }

    fn integer(&mut self, map: &Map<String, Value>, path: &str, key: &str, default: Option<u64>, min: u64) -> Option<u64> {
        let p = join(path, key);
        let Some(v) = map.get(key) else {
            if default.is_none() {
                self.err(&p, "missing required field");
            }
            return default;
        };
        match v.as_u64() {
            Some(n) if n >= min => Some(n),
            Some(n) => {
                self.err(&p, format!("must be >= {min}, got {n}"));
                None
            }
            None => {
                self.err(&p, format!("expected a nonnegative integer, got {v}"));
                None
            }
        }
    }

    fn string<'v>(&mut self, map: &'v Map<String, Value>, path: &str, key: &str) -> Option<Option<&'v str>> {
        match map.get(key) {
            None => Some(None),
            Some(Value::String(s)) => Some(Some(s)),
            Some(v) => {
                self.err(&join(path, key), format!("expected a string, got {v}"));
                None
            }
        }
    }

    fn numbers(&mut self, v: &Value, path: &str) -> Option<Vec<f64>> {
        let Some(items) = v.as_array() else {
            self.err(path, "expected an array of numbers");
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        for (i, x) in items.iter().enumerate() {
            match x.as_f64().filter(|x| x.is_finite()) {
                Some(x) => out.push(x),
                None => {
                    self.err(&format!("{path}[{i}]"), format!("expected a finite number, got {x}"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn opt_numbers(&mut self, map: &Map<String, Value>, path: &str, key: &str) -> Option<Option<Vec<f64>>> {
        match map.get(key) {
            None => Some(None),
            Some(v) => self.numbers(v, &join(path, key)).map(Some),
        }
    }

    fn file(&mut self, raw: &str, path: &str) -> Option<PathBuf> {
        let p = self.base.join(raw);
        if p.exists() {
            Some(p)
        } else {
            self.err(path, format!("referenced path {} does not exist", p.display()));
            None
        }
    }

    fn kernel(&mut self, v: &Value, path: &str, dim: usize) -> Option<KernelSpec> {
        let Some(shape) = v.get("shape").and_then(Value::as_str) else {
            self.err(&join(path, "shape"), "missing or non-string kernel shape");
            return None;
        };
        let fields: &[&str] = match shape {
            "zero" => &["shape"],
            "gaussian" => &["shape", "sigma", "mass", "r_cut"],
            "tophat" => &["shape", "height", "radius", "r_cut"],
            "exponential" => &["shape", "rate", "amplitude", "r_cut"],
            "tabulated" => &["shape", "radii", "values", "file", "r_cut"],
            other => {
                self.err(
                    &join(path, "shape"),
                    format!("unknown shape '{other}' (expected zero, gaussian, tophat, exponential or tabulated)"),
                );
                return None;
            }
        };
        let map = self.object(v, path, fields)?;
        let r_cut = self.opt_number(map, path, "r_cut", Range::Positive)?;
        let mut file = None;
        let shape = match shape {
            "zero" => KernelShape::Zero,
            "gaussian" => {
                let sigma = self.number(map, path, "sigma", None, Range::Positive);
                let mass = self.number(map, path, "mass", Some(1.0), Range::NonNegative);
                KernelShape::Gaussian { sigma: sigma?, mass: mass? }
            }
            "tophat" => {
                let height = self.number(map, path, "height", None, Range::NonNegative);
                let radius = self.number(map, path, "radius", None, Range::Positive);
                KernelShape::Tophat { height: height?, radius: radius? }
            }
            "exponential" => {
                let rate = self.number(map, path, "rate", None, Range::Positive);
                let amplitude = self.number(map, path, "amplitude", Some(1.0), Range::NonNegative);
                KernelShape::Exponential { rate: rate?, amplitude: amplitude? }
            }
            _ => {
                let name = self.string(map, path, "file")?;
                let (radii, values) = match (name, map.get("radii"), map.get("values")) {
                    (Some(name), None, None) => {
                        let p = self.file(name, &join(path, "file"))?;
                        let table = Kernel::load_table(&p);
                        file = Some(p);
                        match table {
                            Ok(t) => t,
                            Err(e) => {
                                self.err(&join(path, "file"), e.to_string());
                                return None;
                            }
                        }
                    }
                    (None, Some(r), Some(v)) => {
                        let r = self.numbers(r, &join(path, "radii"));
                        let v = self.numbers(v, &join(path, "values"));
                        (r?, v?)
                    }
                    _ => {
                        self.err(path, "tabulated kernel needs either 'file' or both 'radii' and 'values'");
                        return None;
                    }
                };
                KernelShape::Tabulated { radii, values }
            }
        };
        let spec = KernelSpec { shape, r_cut, file };
        if let Err(e) = spec.build(dim) {
            self.err(path, e.to_string());
            return None;
        }
        Some(spec)
    }

    fn model(&mut self, v: &Value) -> Option<ModelSpec> {
        let path = "model";
        let map = self.object(v, path, &["dim", "box_len", "m", "a_plus", "a_minus"])?;
        let dim = self.integer(map, path, "dim", Some(1), 1);
        let dim = match dim {
            Some(d @ (1 | 2)) => d as usize,
            Some(d) => {
                self.err("model.dim", format!("must be 1 or 2, got {d}"));
                return None;
            }
            None => return None,
        };
        let box_len = self.number(map, path, "box_len", None, Range::Positive);
        let m = self.number(map, path, "m", None, Range::NonNegative);
        let a_plus = match map.get("a_plus") {
            Some(k) => self.kernel(k, "model.a_plus", dim),
            None => {
                self.err("model.a_plus", "missing required field");
                None
            }
        };
        let a_minus = match map.get("a_minus") {
            Some(k) => self.kernel(k, "model.a_minus", dim),
            None => Some(KernelSpec::zero()),
        };
        // kernels are checked against the box on their own so that a bad `m`
        // does not hide a minimum-image violation
        let mut fits = true;
        if let Some(l) = box_len {
            for (name, spec) in [("a_plus", &a_plus), ("a_minus", &a_minus)] {
                let Some(spec) = spec else { continue };
                let Ok(k) = spec.build(dim) else { continue };
                if let Err(CoreError::MinimumImage { r_cut, half_box, .. }) = k.fit_to_box(l / 2.0, name) {
                    self.err(
                        &format!("model.{name}"),
                        format!("minimum-image violation: cutoff {r_cut} exceeds L/2 = {half_box}"),
                    );
                    fits = false;
                }
            }
        }
        let (box_len, m, a_plus, a_minus) = (box_len?, m?, a_plus?, a_minus?);
        if !fits {
            return None;
        }
        let built = ModelParams::new(
            m,
            a_plus.build(dim).ok()?,
            a_minus.build(dim).ok()?,
            box_len,
        );
        match built {
            Ok(p) => Some(ModelSpec {
                dim,
                box_len,
                m,
                a_plus,
                a_minus,
                params: Some(p),
            }),
            Err(e) => {
                self.err(path, e.to_string());
                None
            }
        }
    }

    fn sim(&mut self, v: Option<&Value>, model: Option<&ModelSpec>) -> Option<SimSpec> {
        let path = "sim";
        let Some(v) = v else {
            self.err(path, "missing required block");
            return None;
        };
        let map = self.object(v, path, &["t_max", "times", "snapshots", "initial"])?;
        let t_max = self.number(map, path, "t_max", None, Range::NonNegative)?;
        let times = match (self.opt_numbers(map, path, "times")?, map.contains_key("snapshots")) {
            (Some(_), true) => {
                self.err(path, "give either 'times' or 'snapshots', not both");
                return None;
            }
            (Some(ts), false) => {
                if ts.windows(2).any(|w| w[0] > w[1]) || ts.iter().any(|&t| t < 0.0 || t > t_max) {
                    self.err("sim.times", "must be sorted and lie in [0, t_max]");
                    return None;
                }
                ts
            }
            (None, _) => {
                let n = self.integer(map, path, "snapshots", Some(11), 1)? as usize;
                if n == 1 {
                    vec![t_max]
                } else {
                    (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect()
                }
            }
        };
        let initial = match map.get("initial") {
            None => SimInitial::Poisson { density: 1.0 },
            Some(iv) => self.sim_initial(iv, model)?,
        };
        Some(SimSpec { t_max, times, initial })
    }

    fn sim_initial(&mut self, v: &Value, model: Option<&ModelSpec>) -> Option<SimInitial> {
        let path = "sim.initial";
        match v.get("kind").and_then(Value::as_str) {
            Some("poisson") => {
                let map = self.object(v, path, &["kind", "density"])?;
                let density = self.number(map, path, "density", None, Range::NonNegative)?;
                Some(SimInitial::Poisson { density })
            }
            Some("points") => {
                let map = self.object(v, path, &["kind", "points"])?;
                let Some(items) = map.get("points").and_then(Value::as_array) else {
                    self.err("sim.initial.points", "expected an array of coordinate arrays");
                    return None;
                };
                let dim = model.map(|m| m.dim);
                let mut points = Vec::with_capacity(items.len());
                for (i, item) in items.iter().enumerate() {
                    let p = format!("sim.initial.points[{i}]");
                    let x = self.numbers(item, &p)?;
                    if let Some(d) = dim.filter(|&d| d != x.len()) {
                        self.err(&p, format!("expected {d} coordinates"));
                        return None;
                    }
                    points.push(x);
                }
                Some(SimInitial::Points { points })
            }
            _ => {
                self.err("sim.initial.kind", "expected 'poisson' or 'points'");
                None
            }
        }
    }

    fn est(&mut self, v: Option<&Value>) -> Option<EstSpec> {
        let path = "est";
        let Some(v) = v else {
            self.err(path, "missing required block");
            return None;
        };
        let map = self.object(v, path, &["run", "edges", "r_max", "bin_width", "r0", "dobrushin"])?;
        let run = match self.string(map, path, "run")? {
            Some(r) => self.file(r, "est.run")?,
            None => {
                self.err("est.run", "missing required field");
                return None;
            }
        };
        let summary: RunSummary = match std::fs::read_to_string(run.join("summary.json"))
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
        {
            Ok(s) => s,
            Err(e) => {
                self.err("est.run", format!("not a simulate output directory: {e}"));
                return None;
            }
        };
        let half = summary.box_len / 2.0;
        let edges = match self.opt_numbers(map, path, "edges")? {
            Some(e) => {
                if map.contains_key("r_max") || map.contains_key("bin_width") {
                    self.err(path, "give either 'edges' or 'r_max'/'bin_width', not both");
                    return None;
                }
                e
            }
            None => {
                let r_max = self.number(map, path, "r_max", Some(summary.box_len / 4.0), Range::Positive)?;
                let width = self.number(map, path, "bin_width", Some(r_max / 20.0), Range::Positive)?;
                let n = (r_max / width - 1e-9).ceil().max(1.0) as usize;
                (0..=n).map(|i| (i as f64 * width).min(r_max)).collect()
            }
        };
        if edges.len() < 2 || edges[0] < 0.0 || edges.windows(2).any(|w| w[0] >= w[1]) || *edges.last().unwrap() > half {
            self.err("est.edges", format!("bin edges must increase from >= 0 and end at most at L/2 = {half}"));
            return None;
        }
        let r0 = self.opt_number(map, path, "r0", Range::Positive)?;
        if let Some(r0) = r0 {
            if edges[0] != 0.0 || !edges.iter().any(|&e| (e - r0).abs() <= 1e-9 * r0.max(1.0)) {
                self.err("est.r0", "must be a bin edge, and bins must start at 0");
                return None;
            }
        }
        let dobrushin = match map.get("dobrushin") {
            None => None,
            Some(dv) => {
                let p = "est.dobrushin";
                let dm = self.object(dv, p, &["alpha", "lo", "hi"])?;
                let alpha = self.number(dm, p, "alpha", None, Range::NonNegative)?;
                let dim = summary.dim;
                let lo = self.opt_numbers(dm, p, "lo")?.unwrap_or(vec![0.0; dim]);
                let hi = self.opt_numbers(dm, p, "hi")?.unwrap_or(vec![summary.box_len; dim]);
                if lo.len() != dim || hi.len() != dim {
                    self.err(p, format!("window corners need {dim} coordinates"));
                    return None;
                }
                Some(DobrushinSpec { alpha, lo, hi })
            }
        };
        Some(EstSpec {
            run,
            edges,
            r0,
            dobrushin,
            summary: Some(summary),
        })
    }

    /// Without a valid model the block is still checked; the model-derived
    /// defaults are then placeholders, never returned because the model
    /// itself has already produced an error.
    fn hier(&mut self, v: Option<&Value>, model: Option<&ModelSpec>) -> Option<HierSpec> {
        let path = "hier";
        let Some(v) = v else {
            self.err(path, "missing required block");
            return None;
        };
        let map = self.object(
            v,
            path,
            &["u0", "closure", "scaling", "dr", "r_max", "dt", "t_max", "stride"],
        )?;
        let (grid, eq) = match model {
            Some(m) => (RadialGrid::for_params(m.params()), equilibrium(m.params())),
            None => (RadialGrid { dr: 1.0, n: 2 }, Some(0.0)),
        };
        let u0 = self.number(map, path, "u0", eq, Range::NonNegative);
        let closure = match self.string(map, path, "closure")? {
            None | Some("kirkwood") => Some(Closure::Kirkwood),
            Some("poisson") => Some(Closure::Poisson),
            Some("zero") => Some(Closure::Zero),
            Some(other) => {
                self.err("hier.closure", format!("unknown closure '{other}' (expected kirkwood, poisson or zero)"));
                None
            }
        };
        let scaling = match self.string(map, path, "scaling")? {
            None | Some("full") => Some(Scaling::Full),
            Some("mesoscopic") => Some(Scaling::Mesoscopic),
            Some(other) => {
                self.err("hier.scaling", format!("unknown scaling '{other}' (expected full or mesoscopic)"));
                None
            }
        };
        let dr = self.number(map, path, "dr", Some(grid.dr), Range::Positive);
        let r_max = self.number(map, path, "r_max", Some(grid.r_max()), Range::Positive);
        let dt = self.number(map, path, "dt", Some(0.01), Range::Positive);
        let t_max = self.number(map, path, "t_max", None, Range::NonNegative);
        let (dt, t_max) = (dt?, t_max?);
        let steps = (t_max / dt).ceil() as u64;
        let stride = self.integer(map, path, "stride", Some((steps / 200).max(1)), 1);
        Some(HierSpec {
            u0: u0?,
            closure: closure?,
            scaling: scaling?,
            dr: dr?,
            r_max: r_max?,
            dt,
            t_max,
            stride: stride? as usize,
        })
    }

    fn kin(&mut self, v: Option<&Value>, model: Option<&ModelSpec>) -> Option<KinSpec> {
        let path = "kin";
        let Some(v) = v else {
            self.err(path, "missing required block");
            return None;
        };
        let map = self.object(v, path, &["per_side", "dt", "t_max", "stride", "initial", "front_level"])?;
        let (per_side, box_len, dim, eq) = match model {
            Some(m) => (
                FieldGrid::for_params(m.params()).per_side,
                m.box_len,
                m.dim,
                equilibrium(m.params()),
            ),
            None => (1, f64::INFINITY, 1, None),
        };
        let per_side = self.integer(map, path, "per_side", Some(per_side as u64), 1);
        let dt = self.number(map, path, "dt", Some(0.01), Range::Positive);
        let t_max = self.number(map, path, "t_max", None, Range::NonNegative);
        let front_level = self.opt_number(map, path, "front_level", Range::Positive);
        let initial = match map.get("initial") {
            None => Some(KinInitial::Uniform { density: 1.0 }),
            Some(iv) => self.kin_initial(iv, box_len),
        };
        let (dt, t_max) = (dt?, t_max?);
        let steps = (t_max / dt).ceil() as u64;
        let stride = self.integer(map, path, "stride", Some((steps / 50).max(1)), 1);
        let mut front_level = front_level?;
        let initial = initial?;
        if front_level.is_none() && dim == 1 {
            if let (KinInitial::Block { .. }, Some(eq)) = (&initial, eq) {
                front_level = Some(eq / 2.0);
            }
        }
        if front_level.is_some() && dim != 1 {
            self.err("kin.front_level", "front tracking is only defined for dim = 1");
            return None;
        }
        Some(KinSpec {
            per_side: per_side? as usize,
            dt,
            t_max,
            stride: stride? as usize,
            initial,
            front_level,
        })
    }

    fn kin_initial(&mut self, v: &Value, box_len: f64) -> Option<KinInitial> {
        let path = "kin.initial";
        match v.get("kind").and_then(Value::as_str) {
            Some("uniform") => {
                let map = self.object(v, path, &["kind", "density"])?;
                let density = self.number(map, path, "density", None, Range::NonNegative)?;
                Some(KinInitial::Uniform { density })
            }
            Some("block") => {
                let map = self.object(v, path, &["kind", "lo", "hi", "density", "background"])?;
                let lo = self.number(map, path, "lo", None, Range::NonNegative);
                let hi = self.number(map, path, "hi", None, Range::Positive);
                let density = self.number(map, path, "density", None, Range::NonNegative);
                let background = self.number(map, path, "background", Some(0.0), Range::NonNegative);
                let (lo, hi) = (lo?, hi?);
                if !(lo < hi && hi <= box_len) {
                    self.err(path, format!("need lo < hi <= L = {box_len}"));
                    return None;
                }
                Some(KinInitial::Block {
                    lo,
                    hi,
                    density: density?,
                    background: background?,
                })
            }
            _ => {
                self.err("kin.initial.kind", "expected 'uniform' or 'block'");
                None
            }
        }
    }

    fn verify(&mut self, v: Option<&Value>, model: Option<&ModelSpec>) -> Option<VerifySpec> {
        let path = "verify";
        let empty = Value::Object(Map::new());
        let v = v.unwrap_or(&empty);
        let map = self.object(
            v,
            path,
            &[
                "fixture",
                "per_side",
                "cap",
                "draws",
                "times",
                "density_times",
                "k_transform_sites",
                "k_transform_draws",
                "depth",
                "alpha_low",
                "alpha_high",
                "alpha",
                "k_alpha",
                "k_delta",
                "t_fraction",
                "panels",
                "samples",
                "tol",
                "k0",
            ],
        )?;
        let fixture = match self.string(map, path, "fixture")? {
            None | Some("default") => Fixture::Default,
            Some("model") => Fixture::Model,
            Some(other) => {
                self.err("verify.fixture", format!("unknown fixture '{other}' (expected default or model)"));
                return None;
            }
        };
        let (per_side, cap) = match fixture {
            Fixture::Default => {
                for k in ["per_side", "cap"] {
                    if map.contains_key(k) {
                        self.err(&join(path, k), "only meaningful with fixture = model");
                    }
                }
                (None, None)
            }
            Fixture::Model => {
                if model.is_none() {
                    self.err("verify.fixture", "fixture = model needs a model block");
                }
                let per_side = self.integer(map, path, "per_side", None, 1);
                let cap = match per_side {
                    Some(n) => self.integer(map, path, "cap", Some(n), 1),
                    None => None,
                };
                (per_side.map(|n| n as usize), cap.map(|n| n as usize))
            }
        };
        let draws = self.integer(map, path, "draws", Some(100), 1);
        let times = self.opt_numbers(map, path, "times");
        let density_times = self.opt_numbers(map, path, "density_times");
        let k_transform_sites = self.integer(map, path, "k_transform_sites", Some(5), 1);
        let k_transform_draws = self.integer(map, path, "k_transform_draws", Some(1000), 1);
        let depth = self.integer(map, path, "depth", Some(5), 1);
        let alpha_low = self.number(map, path, "alpha_low", Some(-0.5), Range::Any);
        let alpha_high = self.number(map, path, "alpha_high", Some(0.0), Range::Any);
        let (alpha_low, alpha_high) = (alpha_low?, alpha_high?);
        if alpha_low >= alpha_high {
            self.err(path, "need alpha_low < alpha_high");
        }
        let alpha = self.number(map, path, "alpha", Some(alpha_high), Range::Any);
        let k_alpha = self.number(map, path, "k_alpha", Some(alpha_low), Range::Any);
        let k_delta = self.number(map, path, "k_delta", Some(0.125), Range::Positive);
        let t_fraction = self.number(map, path, "t_fraction", Some(0.5), Range::Positive);
        if t_fraction.is_some_and(|f| f >= 1.0) {
            self.err("verify.t_fraction", "must be < 1 so the Picard time lies inside the horizon");
        }
        let panels = self.integer(map, path, "panels", Some(64), 2);
        if panels.is_some_and(|n| n % 2 == 1) {
            self.err("verify.panels", "must be even");
        }
        let samples = self.integer(map, path, "samples", Some(200), 1);
        let tol = self.number(map, path, "tol", Some(1e-6), Range::NonNegative);
        let k0 = match self.string(map, path, "k0")? {
            Some(f) => Some(self.file(f, "verify.k0")?),
            None => None,
        };
        Some(VerifySpec {
            fixture,
            per_side,
            cap,
            draws: draws? as usize,
            times: times?.unwrap_or(vec![0.1, 1.0]),
            density_times: density_times?.unwrap_or(vec![0.25, 0.5, 1.0]),
            k_transform_sites: k_transform_sites? as usize,
            k_transform_draws: k_transform_draws? as usize,
            depth: depth? as usize,
            alpha_low,
            alpha_high,
            alpha: alpha?,
            k_alpha: k_alpha?,
            k_delta: k_delta?,
            t_fraction: t_fraction?,
            panels: panels? as usize,
            samples: samples? as usize,
            tol: tol?,
            k0,
        })
    }
}

/// Validates `root` for `cmd`. Blocks that `cmd` does not use are still
/// checked when present.
pub fn validate(root: &Value, cmd: Subcommand, base: &Path) -> Result<RunConfig, Vec<ConfigError>> {
    let mut w = Walker {
        errors: Vec::new(),
        base: base.to_path_buf(),
    };
    let top = ["seed", "replicas", "out", "label", "model", "sim", "est", "hier", "kin", "verify"];
    let Some(map) = w.object(root, "", &top) else {
        return Err(w.errors);
    };
    let seed = w.integer(map, "", "seed", Some(0), 0);
    let replicas = w.integer(map, "", "replicas", Some(1), 1);
    let out = w.string(map, "", "out").map(|o| PathBuf::from(o.unwrap_or("runs")));
    let label = w.string(map, "", "label").map(|l| l.map(str::to_string));
    if let Some(Some(l)) = &label {
        if l.is_empty() || l.contains(['/', '\\']) || l == "." || l == ".." {
            w.err("label", "must be a nonempty single path component");
        }
    }

    let needs_model = matches!(cmd, Subcommand::Simulate | Subcommand::Hierarchy | Subcommand::Kinetic);
    let model = match map.get("model") {
        Some(v) => w.model(v),
        None => {
            if needs_model {
                w.err("model", "missing required block");
            }
            None
        }
    };
    let wants = |c: Subcommand, key: &str| cmd == c || map.contains_key(key);
    let sim = if wants(Subcommand::Simulate, "sim") {
        w.sim(map.get("sim"), model.as_ref())
    } else {
        None
    };
    let est = if wants(Subcommand::Estimate, "est") {
        w.est(map.get("est"))
    } else {
        None
    };
    let hier = if wants(Subcommand::Hierarchy, "hier") {
        w.hier(map.get("hier"), model.as_ref())
    } else {
        None
    };
    let kin = if wants(Subcommand::Kinetic, "kin") {
        w.kin(map.get("kin"), model.as_ref())
    } else {
        None
    };
    let verify = if wants(Subcommand::Verify, "verify") {
        w.verify(map.get("verify"), model.as_ref())
    } else {
        None
    };
    if !w.errors.is_empty() {
        return Err(w.errors);
    }
    Ok(RunConfig {
        seed: seed.unwrap(),
        replicas: replicas.unwrap() as usize,
        out: out.unwrap(),
        label: label.unwrap(),
        model,
        sim,
        est,
        hier,
        kin,
        verify,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base_model() -> Value {
        json!({
            "box_len": 10.0,
            "m": 0.2,
            "a_plus": {"shape": "tophat", "height": 0.5, "radius": 1.0},
            "a_minus": {"shape": "gaussian", "sigma": 0.5, "mass": 0.4},
        })
    }

    fn paths(errs: &[ConfigError]) -> Vec<&str> {
        errs.iter().map(|e| e.path.as_str()).collect()
    }

    #[test]
    fn override_sets_nested_values() {
        let mut v = json!({"model": {"m": 0.1}});
        apply_override(&mut v, "model.m=0.3").unwrap();
        apply_override(&mut v, "hier.closure=zero").unwrap();
        assert_eq!(v["model"]["m"], json!(0.3));
        assert_eq!(v["hier"]["closure"], json!("zero"));
        assert!(apply_override(&mut v, "model.m.x=1").is_err());
        assert!(apply_override(&mut v, "nothing").is_err());
    }

    #[test]
    fn all_errors_are_collected() {
        let mut model = base_model();
        model["m"] = json!(-1.0);
        model["a_plus"]["radius"] = json!(-2.0);
        let v = json!({"model": model, "bogus": 1, "hier": {"t_max": "soon"}});
        let errs = validate(&v, Subcommand::Hierarchy, Path::new(".")).unwrap_err();
        let p = paths(&errs);
        assert!(p.contains(&"model.m"), "{p:?}");
        assert!(p.contains(&"model.a_plus.radius"), "{p:?}");
        assert!(p.contains(&"bogus"), "{p:?}");
    }

    #[test]
    fn defaults_are_filled() {
        let v = json!({"model": base_model(), "hier": {"t_max": 1.0}});
        let cfg = validate(&v, Subcommand::Hierarchy, Path::new(".")).unwrap();
        let h = cfg.hier.unwrap();
        assert_eq!(h.closure, Closure::Kirkwood);
        assert_eq!(h.dt, 0.01);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.replicas, 1);
        assert!(cfg.model.unwrap().a_minus.r_cut.is_none());
    }

    #[test]
    fn minimum_image_violation_names_kernel() {
        let mut model = base_model();
        model["a_plus"]["radius"] = json!(6.0);
        let v = json!({"model": model, "sim": {"t_max": 1.0}});
        let errs = validate(&v, Subcommand::Simulate, Path::new(".")).unwrap_err();
        assert_eq!(paths(&errs), ["model.a_plus"]);
        assert!(errs[0].message.contains("minimum-image"));
    }
}
