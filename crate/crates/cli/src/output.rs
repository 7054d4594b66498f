//! Non-CSV run artifacts: the resolved config snapshot and the run
//! manifest. Both go through [`atomic_write`] so an interrupted run never
//! leaves a truncated file behind.

use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use patchdyn_core::{GrowthSpec, InitSpec, PatchModel, SimOpts, WeightFn};
use toml::value::{Table, Value};

pub fn atomic_write(path: &Path, contents: &str) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

fn float_array(vs: &[f64]) -> Value {
    Value::Array(vs.iter().map(|&v| Value::Float(v)).collect())
}

fn string_array(vs: &[String]) -> Value {
    Value::Array(vs.iter().map(|v| Value::String(v.clone())).collect())
}

/// Serializes a parsed model back into the config schema. Re-parsing the
/// result reconstructs the identical model: the migration matrix carries
/// `explicit_diagonal = true` so the conservation default never has to be
/// re-derived, and every simulation and init field is pinned, defaults
/// included.
pub fn resolved_config(model: &PatchModel, sim: &SimOpts, init: &[InitSpec]) -> String {
    let k = model.patches();
    let mut root = Table::new();

    let mut m = Table::new();
    m.insert("K".into(), Value::Integer(k as i64));
    m.insert("L".into(), Value::Float(model.half_width()));
    m.insert("epsilon".into(), Value::Float(model.epsilon()));
    root.insert("model".into(), Value::Table(m));

    let mut patches = Table::new();
    for i in 0..k {
        let mut p = Table::new();
        match model.growth_spec(i) {
            GrowthSpec::Quadratic { a, b, c, d } => {
                let mut g = Table::new();
                g.insert("kind".into(), Value::String("quadratic".into()));
                p.insert("growth".into(), Value::Table(g));
                p.insert("a".into(), Value::Float(*a));
                p.insert("b".into(), Value::Float(*b));
                p.insert("c".into(), Value::Float(*c));
                p.insert("d".into(), Value::Float(*d));
            }
            GrowthSpec::Tabulated { x, values, d } => {
                let mut g = Table::new();
                g.insert("kind".into(), Value::String("tabulated".into()));
                g.insert("x".into(), float_array(x));
                g.insert("values".into(), float_array(values));
                p.insert("growth".into(), Value::Table(g));
                p.insert("d".into(), Value::Float(*d));
            }
        }
        match model.psi_spec(i) {
            WeightFn::Constant(v) => {
                p.insert("psi".into(), Value::Float(*v));
            }
            WeightFn::Tabulated { x, values } => {
                let mut t = Table::new();
                t.insert("x".into(), float_array(x));
                t.insert("values".into(), float_array(values));
                p.insert("psi".into(), Value::Table(t));
            }
        }
        patches.insert((i + 1).to_string(), Value::Table(p));
    }
    root.insert("patch".into(), Value::Table(patches));

    let mig = model.migration();
    let mut rows = Vec::with_capacity(k);
    for i in 0..k {
        let row: Vec<f64> = (0..k)
            .map(|j| if i == j { mig.outflow(i) } else { mig.rate(i, j) })
            .collect();
        rows.push(float_array(&row));
    }
    let mut mt = Table::new();
    mt.insert("matrix".into(), Value::Array(rows));
    mt.insert("explicit_diagonal".into(), Value::Boolean(true));
    root.insert("migration".into(), Value::Table(mt));

    let mut s = Table::new();
    s.insert("grid_points".into(), Value::Integer(sim.grid_points as i64));
    s.insert("dt".into(), Value::Float(sim.dt));
    s.insert("tau_end".into(), Value::Float(sim.tau_end));
    s.insert("steady_tol".into(), Value::Float(sim.steady_tol));
    s.insert("sample_stride".into(), Value::Integer(sim.sample_stride as i64));
    root.insert("sim".into(), Value::Table(s));

    let mut inits = Table::new();
    for (i, spec) in init.iter().enumerate() {
        let mut t = Table::new();
        t.insert("center".into(), Value::Float(spec.center));
        t.insert("mass".into(), Value::Float(spec.mass));
        t.insert("width".into(), Value::Float(spec.width));
        inits.insert((i + 1).to_string(), Value::Table(t));
    }
    root.insert("init".into(), Value::Table(inits));

    toml::to_string_pretty(&Value::Table(root)).expect("a plain value table serializes")
}

/// What a run did, written as `manifest.toml` when the command returns.
/// `outputs` lists every file the run produced (relative to the output
/// directory), so a caller can consume the directory without globbing.
pub struct Manifest {
    command: &'static str,
    status: &'static str,
    exit_code: u8,
    wall_seconds: f64,
    config: Option<String>,
    outputs: Vec<String>,
    notes: Vec<String>,
    details: Table,
}

impl Manifest {
    pub fn new(command: &'static str) -> Self {
        Manifest {
            command,
            status: "aborted",
            exit_code: 0,
            wall_seconds: 0.0,
            config: None,
            outputs: Vec::new(),
            notes: Vec::new(),
            details: Table::new(),
        }
    }

    /// Registers a produced file by name.
    pub fn record(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    pub fn set_config(&mut self, name: impl Into<String>) {
        self.config = Some(name.into());
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        self.notes.push(msg.into());
    }

    pub fn detail(&mut self, key: &str, value: Value) {
        self.details.insert(key.into(), value);
    }

    pub fn detail_f64(&mut self, key: &str, value: f64) {
        self.detail(key, Value::Float(value));
    }

    pub fn detail_floats(&mut self, key: &str, values: &[f64]) {
        self.detail(key, float_array(values));
    }

    pub fn finish(&mut self, exit_code: u8, wall: Duration) {
        self.exit_code = exit_code;
        self.status = status_label(exit_code);
        self.wall_seconds = wall.as_secs_f64();
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let mut root = Table::new();
        root.insert("command".into(), Value::String(self.command.into()));
        root.insert("status".into(), Value::String(self.status.into()));
        root.insert("exit_code".into(), Value::Integer(self.exit_code as i64));
        root.insert("wall_seconds".into(), Value::Float(self.wall_seconds));
        if let Some(cfg) = &self.config {
            root.insert("config".into(), Value::String(cfg.clone()));
        }
        root.insert("outputs".into(), string_array(&self.outputs));
        if !self.notes.is_empty() {
            root.insert("notes".into(), string_array(&self.notes));
        }
        if !self.details.is_empty() {
            root.insert("details".into(), Value::Table(self.details.clone()));
        }
        let mut versions = Table::new();
        versions.insert("cli".into(), Value::String(env!("CARGO_PKG_VERSION").into()));
        versions.insert("core".into(), Value::String(patchdyn_core::VERSION.into()));
        root.insert("versions".into(), Value::Table(versions));

        let text = toml::to_string_pretty(&Value::Table(root))
            .expect("a plain value table serializes");
        atomic_write(&dir.join("manifest.toml"), &text)
    }
}

pub fn status_label(exit_code: u8) -> &'static str {
    match exit_code {
        0 => "ok",
        1 => "tolerance-failed",
        3 => "numerical-abort",
        4 => "non-convergence",
        _ => "config-error",
    }
}
