//! Scenario files: TOML sections of `key = value` lines, read with strict key
//! accounting so that misspelled keys are reported instead of ignored.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use toml::{Table, Value};

use crate::causal::EventSet;
use crate::error::{Error, Result};
use crate::grid::presets::{perturbed_flat, Embedding, Perturbation, PhiProfile};
use crate::grid::{build_grid, FieldSet, GridConfig, ParameterGrid};
use crate::optimizer::{FreeFields, PenaltyConfig};

pub const SCHEMA_VERSION: i64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    GeometryCheck,
    EnergyEval,
    Minimize,
    Causal,
}

impl Kind {
    pub fn name(&self) -> &'static str {
        match self {
            Kind::GeometryCheck => "geometry_check",
            Kind::EnergyEval => "energy_eval",
            Kind::Minimize => "minimize",
            Kind::Causal => "causal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldsSpec {
    Preset { embedding: Embedding, phi: PhiProfile },
    PerturbedFlat(Perturbation),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SheetSpec {
    pub grid: GridConfig,
    pub fields: FieldsSpec,
    pub ambient: usize,
}

impl SheetSpec {
    pub fn build(&self, grid: &ParameterGrid) -> Result<FieldSet> {
        match &self.fields {
            FieldsSpec::Preset { embedding, phi } => embedding.fields(grid, self.ambient, *phi),
            FieldsSpec::PerturbedFlat(p) => perturbed_flat(grid, self.ambient, p),
        }
    }

    pub fn grid(&self) -> Result<ParameterGrid> {
        build_grid(&self.grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysConstants {
    pub c: f64,
    /// Enables the multiplier-form evaluation in `energy_eval` when set.
    pub mass: Option<f64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryOpts {
    pub levels: usize,
    pub margin: usize,
    /// Accepted range of the observed order between consecutive levels.
    pub order_band: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOpts {
    pub config: PenaltyConfig,
    /// Accepted range of the fitted log-log residual slopes; `None` skips
    /// the check.
    pub slope_band: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Query {
    ChronologicalFuture,
    CausalFuture,
    ChronologicalPast,
    CausalPast,
    FutureBoundary,
    FutureDependence,
    PastDependence,
    Achronal,
    Cauchy,
    Intercept,
    NullCheck,
}

impl Query {
    pub const ALL: [Query; 11] = [
        Query::ChronologicalFuture,
        Query::CausalFuture,
        Query::ChronologicalPast,
        Query::CausalPast,
        Query::FutureBoundary,
        Query::FutureDependence,
        Query::PastDependence,
        Query::Achronal,
        Query::Cauchy,
        Query::Intercept,
        Query::NullCheck,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Query::ChronologicalFuture => "chronological_future",
            Query::CausalFuture => "causal_future",
            Query::ChronologicalPast => "chronological_past",
            Query::CausalPast => "causal_past",
            Query::FutureBoundary => "future_boundary",
            Query::FutureDependence => "future_dependence",
            Query::PastDependence => "past_dependence",
            Query::Achronal => "is_achronal",
            Query::Cauchy => "is_cauchy_surface",
            Query::Intercept => "intercept_check",
            Query::NullCheck => "null_boundary_check",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|q| q.name() == s)
    }
}

#[derive(Debug, Clone)]
pub struct CausalSpec {
    pub events_path: PathBuf,
    pub events: EventSet,
    pub radius: f64,
    pub queries: Vec<Query>,
    pub set: Vec<usize>,
    pub path: Vec<usize>,
    pub samples: usize,
    /// Enumerate every maximal path when at most this many exist.
    pub exhaustive_limit: usize,
    pub seed: u64,
    pub null_tol: f64,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: Kind,
    pub sheet: Option<SheetSpec>,
    pub constants: PhysConstants,
    pub geometry: GeometryOpts,
    pub energy_k: f64,
    pub minimize: MinimizeOpts,
    pub causal: Option<CausalSpec>,
}

/// Reads keys from one table and remembers which ones were consumed.
struct Section<'a> {
    name: String,
    table: Option<&'a Table>,
    used: RefCell<BTreeSet<String>>,
}

impl<'a> Section<'a> {
    fn new(name: &str, table: Option<&'a Table>) -> Self {
        Self {
            name: name.to_string(),
            table,
            used: RefCell::new(BTreeSet::new()),
        }
    }

    fn qualified(&self, key: &str) -> String {
        if self.name.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.name)
        }
    }

    fn raw(&self, key: &str) -> Option<&'a Value> {
        self.used.borrow_mut().insert(key.to_string());
        self.table.and_then(|t| t.get(key))
    }

    fn bad(&self, key: &str, want: &str, got: &Value) -> Error {
        Error::Config(format!("{} must be {want}, got {got}", self.qualified(key)))
    }

    fn missing(&self, key: &str) -> Error {
        Error::Config(format!("missing key {}", self.qualified(key)))
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => as_f64(v).map(Some).ok_or_else(|| self.bad(key, "a number", v)),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn f64_req(&self, key: &str) -> Result<f64> {
        self.f64_opt(key)?.ok_or_else(|| self.missing(key))
    }

    fn usize_opt(&self, key: &str) -> Result<Option<usize>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => as_usize(v).map(Some).ok_or_else(|| self.bad(key, "a non-negative integer", v)),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.usize_opt(key)?.unwrap_or(default))
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(v) => Err(self.bad(key, "true or false", v)),
        }
    }

    fn str_opt(&self, key: &str) -> Result<Option<&'a str>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(self.bad(key, "a string", v)),
        }
    }

    fn str_req(&self, key: &str) -> Result<&'a str> {
        self.str_opt(key)?.ok_or_else(|| self.missing(key))
    }

    fn array_opt(&self, key: &str) -> Result<Option<&'a [Value]>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Array(a)) => Ok(Some(a)),
            Some(v) => Err(self.bad(key, "an array", v)),
        }
    }

    fn f64s_opt(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(a) = self.array_opt(key)? else { return Ok(None) };
        a.iter()
            .map(|v| as_f64(v).ok_or_else(|| self.bad(key, "an array of numbers", v)))
            .collect::<Result<_>>()
            .map(Some)
    }

    fn usizes_or_empty(&self, key: &str) -> Result<Vec<usize>> {
        let Some(a) = self.array_opt(key)? else { return Ok(Vec::new()) };
        a.iter()
            .map(|v| as_usize(v).ok_or_else(|| self.bad(key, "an array of indices", v)))
            .collect()
    }

    fn band_opt(&self, key: &str) -> Result<Option<(f64, f64)>> {
        match self.f64s_opt(key)? {
            None => Ok(None),
            Some(v) if v.len() == 2 && v[0] <= v[1] => Ok(Some((v[0], v[1]))),
            Some(_) => Err(Error::Config(format!("{} must be [lo, hi] with lo <= hi", self.qualified(key)))),
        }
    }

    fn unknown(&self, out: &mut Vec<String>) {
        let used = self.used.borrow();
        if let Some(t) = self.table {
            out.extend(t.keys().filter(|k| !used.contains(*k)).map(|k| self.qualified(k)));
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn as_usize(v: &Value) -> Option<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Some(*i as usize),
        _ => None,
    }
}

/// Applies `section.key=value` overrides. Values are read as TOML when they
/// parse as such and as bare strings otherwise.
pub fn apply_overrides(table: &mut Table, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
        let value = match format!("v = {raw}").parse::<Table>() {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => Value::String(raw.to_string()),
        };
        let parts: Vec<&str> = key.trim().split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::Config(format!("override key {key:?} is malformed")));
        }
        let mut cur = &mut *table;
        for p in &parts[..parts.len() - 1] {
            let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
            cur = match entry {
                Value::Table(t) => t,
                _ => return Err(Error::Config(format!("override {key:?}: {p} is not a section"))),
            };
        }
        cur.insert(parts[parts.len() - 1].to_string(), value);
    }
    Ok(())
}

fn table<'a>(root: &'a Table, name: &str) -> Result<Option<&'a Table>> {
    match root.get(name) {
        None => Ok(None),
        Some(Value::Table(t)) => Ok(Some(t)),
        Some(_) => Err(Error::Config(format!("{name} must be a section"))),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

impl Scenario {
    /// Reads, overrides and validates a scenario file. Relative paths inside
    /// it resolve against the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("{}: {}", path.display(), e.message())))?;
        apply_overrides(&mut root, overrides)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_table(&root, &dir)
    }

    pub fn from_table(root: &Table, dir: &Path) -> Result<Self> {
        const SECTIONS: [&str; 7] = ["grid", "fields", "constants", "geometry", "energy", "optimizer", "causal"];
        let top = Section::new("", Some(root));
        match top.raw("schema").and_then(|v| v.as_integer()) {
            Some(SCHEMA_VERSION) => {}
            Some(v) => return Err(Error::Config(format!("unsupported schema {v}, expected {SCHEMA_VERSION}"))),
            None => return Err(Error::Config(format!("missing integer key schema (= {SCHEMA_VERSION})"))),
        }
        let kind = match top.str_req("kind")? {
            "geometry_check" => Kind::GeometryCheck,
            "energy_eval" => Kind::EnergyEval,
            "minimize" => Kind::Minimize,
            "causal" => Kind::Causal,
            other => {
                return Err(Error::Config(format!(
                    "unknown kind {other:?}; expected geometry_check, energy_eval, minimize or causal"
                )))
            }
        };
        let sec: Vec<Section> = SECTIONS
            .iter()
            .map(|n| Ok(Section::new(n, table(root, n)?)))
            .collect::<Result<_>>()?;
        for s in SECTIONS {
            top.raw(s);
        }
        let [grid_s, fields_s, const_s, geo_s, energy_s, opt_s, causal_s] = &sec[..] else { unreachable!() };

        let constants = PhysConstants {
            c: const_s.f64_or("c", 1.0)?,
            mass: const_s.f64_opt("mass")?,
            epsilon: const_s.f64_or("epsilon", PenaltyConfig::default().epsilon)?,
        };
        if !(constants.c > 0.0 && constants.c.is_finite()) {
            return Err(Error::Config(format!("constants.c = {} must be positive", constants.c)));
        }

        let sheet = if kind == Kind::Causal {
            None
        } else {
            Some(read_sheet(grid_s, fields_s)?)
        };

        let geometry = GeometryOpts {
            levels: geo_s.usize_or("levels", 1)?,
            margin: geo_s.usize_or("margin", 0)?,
            order_band: geo_s.band_opt("order_band")?,
        };
        if geometry.levels == 0 {
            return Err(Error::Config("geometry.levels must be at least 1".into()));
        }
        let energy_k = energy_s.f64_or("k", 0.0)?;

        let minimize = read_optimizer(opt_s, constants.epsilon)?;
        let causal = if kind == Kind::Causal {
            Some(read_causal(causal_s, dir, constants.c)?)
        } else {
            None
        };

        let mut unknown = Vec::new();
        top.unknown(&mut unknown);
        for s in &sec {
            s.unknown(&mut unknown);
        }
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
        }

        let sc = Scenario {
            kind,
            sheet,
            constants,
            geometry,
            energy_k,
            minimize,
            causal,
        };
        sc.validate()?;
        Ok(sc)
    }

    /// Checks that need the built objects: grid shape, preset dimensions and
    /// the optimizer settings.
    fn validate(&self) -> Result<()> {
        if let Some(sheet) = &self.sheet {
            let g = sheet.grid()?;
            sheet.build(&g)?;
        }
        if self.kind == Kind::Minimize {
            self.minimize.config.validate()?;
        }
        if self.energy_k < 0.0 {
            return Err(Error::Config(format!("energy.k = {} must be non-negative", self.energy_k)));
        }
        Ok(())
    }
}

fn read_sheet(grid_s: &Section, fields_s: &Section) -> Result<SheetSpec> {
    let ext = grid_s.array_opt("extents")?.ok_or_else(|| grid_s.missing("extents"))?;
    let extents = ext
        .iter()
        .map(|v| match v.as_array().map(|a| a.iter().map(as_f64).collect::<Option<Vec<_>>>()) {
            Some(Some(p)) if p.len() == 2 => Ok((p[0], p[1])),
            _ => Err(grid_s.bad("extents", "an array of [lo, hi] pairs", v)),
        })
        .collect::<Result<Vec<_>>>()?;
    let counts = grid_s.usizes_or_empty("counts")?;
    let grid = GridConfig { extents, counts };

    let dims = grid.extents.len();
    let phi = match fields_s.str_opt("phi")?.unwrap_or("normalized") {
        "normalized" => PhiProfile::Normalized,
        "constant" => {
            let v = fields_s.f64s_opt("phi0")?.ok_or_else(|| fields_s.missing("phi0"))?;
            match v[..] {
                [re] => PhiProfile::Constant(Complex64::new(re, 0.0)),
                [re, im] => PhiProfile::Constant(Complex64::new(re, im)),
                _ => return Err(Error::Config("fields.phi0 must be [re] or [re, im]".into())),
            }
        }
        "plane_wave" => PhiProfile::PlaneWave {
            k: fields_s.f64_req("wave_number")?,
        },
        other => {
            return Err(Error::Config(format!(
                "unknown fields.phi {other:?}; expected normalized, constant or plane_wave"
            )))
        }
    };
    let radius = || fields_s.f64_req("radius");
    let fields = match fields_s.str_req("embedding")? {
        "flat" => FieldsSpec::Preset {
            embedding: Embedding::Flat,
            phi,
        },
        "cylinder" => FieldsSpec::Preset {
            embedding: Embedding::Cylinder { radius: radius()? },
            phi,
        },
        "sphere_product" => FieldsSpec::Preset {
            embedding: Embedding::SphereProduct { radius: radius()? },
            phi,
        },
        "perturbed_flat" => {
            let d = Perturbation::default();
            FieldsSpec::PerturbedFlat(Perturbation {
                r_bump: fields_s.f64_or("r_bump", d.r_bump)?,
                n_scale: fields_s.f64_or("n_scale", d.n_scale)?,
                phi_noise: fields_s.f64_or("phi_noise", d.phi_noise)?,
                seed: fields_s.usize_or("seed", d.seed as usize)? as u64,
            })
        }
        other => {
            return Err(Error::Config(format!(
                "unknown fields.embedding {other:?}; expected flat, cylinder, sphere_product or perturbed_flat"
            )))
        }
    };
    let default_ambient = match &fields {
        FieldsSpec::Preset { embedding, .. } => embedding.ambient(dims),
        FieldsSpec::PerturbedFlat(_) => dims + 1,
    };
    let ambient = fields_s.usize_or("ambient", default_ambient)?;
    Ok(SheetSpec { grid, fields, ambient })
}

fn read_optimizer(s: &Section, epsilon: f64) -> Result<MinimizeOpts> {
    let d = PenaltyConfig::default();
    let config = PenaltyConfig {
        k_schedule: s.f64s_opt("k_schedule")?.unwrap_or(d.k_schedule),
        step_init: s.f64_or("step_init", d.step_init)?,
        armijo_c: s.f64_or("armijo_c", d.armijo_c)?,
        backtrack: s.f64_or("backtrack", d.backtrack)?,
        grad_tol: s.f64_or("grad_tol", d.grad_tol)?,
        max_iters: s.usize_or("max_iters", d.max_iters)?,
        fd_step: s.f64_or("fd_step", d.fd_step)?,
        epsilon,
        singular_tol: s.f64_or("singular_tol", d.singular_tol)?,
        free: FreeFields {
            r: s.bool_or("free_r", d.free.r)?,
            n: s.bool_or("free_n", d.free.n)?,
            phi: s.bool_or("free_phi", d.free.phi)?,
        },
    };
    let slope_band = if s.bool_or("check_slopes", false)? {
        Some(s.band_opt("slope_band")?.unwrap_or((-1.3, -0.7)))
    } else {
        s.band_opt("slope_band")?;
        None
    };
    Ok(MinimizeOpts { config, slope_band })
}

fn read_causal(s: &Section, dir: &Path, c: f64) -> Result<CausalSpec> {
    let rel = s.str_req("events")?;
    let events_path = dir.join(rel);
    let text = std::fs::read_to_string(&events_path).map_err(|e| io_err(&events_path, e))?;
    let events = EventSet::parse(&text, c)?;
    let radius = s.f64_req("radius")?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Config(format!("causal.radius = {radius} must be positive")));
    }
    let names = s.array_opt("queries")?.ok_or_else(|| s.missing("queries"))?;
    let queries = names
        .iter()
        .map(|v| {
            v.as_str().and_then(Query::parse).ok_or_else(|| {
                let all: Vec<&str> = Query::ALL.iter().map(Query::name).collect();
                Error::Config(format!("unknown causal query {v}; expected one of {}", all.join(", ")))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let set = s.usizes_or_empty("set")?;
    let path = s.usizes_or_empty("path")?;
    if let Some(bad) = set.iter().chain(&path).find(|&&i| i >= events.len()) {
        return Err(Error::Config(format!("event index {bad} out of range ({} events)", events.len())));
    }
    if queries.contains(&Query::NullCheck) && path.len() < 2 {
        return Err(Error::Config("null_boundary_check needs causal.path with at least two events".into()));
    }
    Ok(CausalSpec {
        events_path,
        events,
        radius,
        queries,
        set,
        path,
        samples: s.usize_or("samples", 200)?,
        exhaustive_limit: s.usize_or("exhaustive_limit", 0)?,
        seed: s.usize_or("seed", 0)? as u64,
        null_tol: s.f64_or("null_tol", 1e-10)?,
    })
}
