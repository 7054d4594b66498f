//! Config documents: TOML with sections `model`, `patch.<i>`, `migration`,
//! `sim`, `init.<i>`. Patch and init sections are 1-based to match the
//! superscripts people write on paper.
//!
//! Parsing is strict about types ("parse error naming the key") and lenient
//! about extras: unknown keys are collected as warnings, never errors, so a
//! config written for a newer tool still loads.
//!
//! ```toml
//! [model]
//! K = 2
//! L = 2.0
//! epsilon = 0.001
//!
//! [patch.1]
//! growth.kind = "quadratic"
//! a = -1.0
//! b = -2.0
//! c = 2.0
//! d = 1.0
//! psi = 1.0
//!
//! [migration]
//! matrix = [[0.0, 1.0], [1.0, 0.0]]   # diagonal defaults to column sums
//!
//! [sim]
//! grid_points = 801
//! dt = 0.001
//! tau_end = 5000.0
//! steady_tol = 1e-8
//!
//! [init.1]
//! center = -0.3
//! mass = 1.0
//! width = 0.05
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use toml::value::{Table, Value};

use crate::error::{Error, Result};
use crate::model::{GrowthSpec, Migration, PatchModel, WeightFn};
use crate::pde::{InitSpec, SimOpts};

#[derive(Clone, Debug)]
pub struct ParsedConfig {
    pub model: PatchModel,
    pub sim: SimOpts,
    pub init: Vec<InitSpec>,
    pub warnings: Vec<String>,
}

pub fn load_config(path: &Path) -> Result<ParsedConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ParsedConfig> {
    let root: Value = text
        .parse()
        .map_err(|e| Error::config("<document>", format!("not valid TOML: {e}")))?;
    let root = match root {
        Value::Table(t) => t,
        _ => return Err(Error::config("<document>", "top level must be a table")),
    };
    let mut warnings = Vec::new();

    let model_tbl = require_table(&root, "model")?;
    let mut model_keys = KeySet::new("model");
    let k = model_keys.usize(model_tbl, "K")?;
    if k == 0 {
        return Err(Error::config("model.K", "patch count must be at least 1"));
    }
    let l = model_keys.f64(model_tbl, "L")?;
    let epsilon = model_keys.f64(model_tbl, "epsilon")?;
    model_keys.sweep(model_tbl, &mut warnings);

    let patch_tbl = require_table(&root, "patch")?;
    let mut growth = Vec::with_capacity(k);
    let mut psi = Vec::with_capacity(k);
    for i in 1..=k {
        let section = format!("patch.{i}");
        let tbl = match patch_tbl.get(&i.to_string()) {
            Some(Value::Table(t)) => t,
            Some(_) => return Err(Error::config(&section, "must be a table")),
            None => return Err(Error::config(&section, "missing patch section")),
        };
        let (g, w) = parse_patch(tbl, &section, &mut warnings)?;
        growth.push(g);
        psi.push(w);
    }
    for key in patch_tbl.keys() {
        let ok = key.parse::<usize>().map(|i| i >= 1 && i <= k).unwrap_or(false);
        if !ok {
            warnings.push(format!("unknown config key 'patch.{key}' (ignored; model.K = {k})"));
        }
    }

    let mig_tbl = require_table(&root, "migration")?;
    let mut mig_keys = KeySet::new("migration");
    let rows = mig_keys.matrix(mig_tbl, "matrix", k)?;
    let explicit = mig_keys.bool_opt(mig_tbl, "explicit_diagonal")?.unwrap_or(false);
    mig_keys.sweep(mig_tbl, &mut warnings);
    let migration = if explicit {
        Migration::explicit(&rows)?
    } else {
        Migration::with_conservation(&rows)?
    };

    let mut sim = SimOpts::default();
    if let Some(Value::Table(tbl)) = root.get("sim") {
        let mut keys = KeySet::new("sim");
        if let Some(v) = keys.usize_opt(tbl, "grid_points")? {
            sim.grid_points = v;
        }
        if let Some(v) = keys.f64_opt(tbl, "dt")? {
            sim.dt = v;
        }
        if let Some(v) = keys.f64_opt(tbl, "tau_end")? {
            sim.tau_end = v;
        }
        if let Some(v) = keys.f64_opt(tbl, "steady_tol")? {
            sim.steady_tol = v;
        }
        if let Some(v) = keys.usize_opt(tbl, "sample_stride")? {
            sim.sample_stride = v;
        }
        keys.sweep(tbl, &mut warnings);
    } else if let Some(other) = root.get("sim") {
        let _ = other;
        return Err(Error::config("sim", "must be a table"));
    }

    let mut init = vec![InitSpec::default(); k];
    if let Some(Value::Table(tbl)) = root.get("init") {
        for i in 1..=k {
            if let Some(v) = tbl.get(&i.to_string()) {
                let section = format!("init.{i}");
                let t = match v {
                    Value::Table(t) => t,
                    _ => return Err(Error::config(&section, "must be a table")),
                };
                let mut keys = KeySet::new(&section);
                let mut spec = InitSpec::default();
                if let Some(c) = keys.f64_opt(t, "center")? {
                    spec.center = c;
                }
                if let Some(m) = keys.f64_opt(t, "mass")? {
                    spec.mass = m;
                }
                if let Some(w) = keys.f64_opt(t, "width")? {
                    spec.width = w;
                }
                keys.sweep(t, &mut warnings);
                init[i - 1] = spec;
            }
        }
        for key in tbl.keys() {
            let ok = key.parse::<usize>().map(|i| i >= 1 && i <= k).unwrap_or(false);
            if !ok {
                warnings.push(format!("unknown config key 'init.{key}' (ignored; model.K = {k})"));
            }
        }
    } else if root.get("init").is_some() {
        return Err(Error::config("init", "must be a table"));
    }

    for key in root.keys() {
        if !matches!(key.as_str(), "model" | "patch" | "migration" | "sim" | "init") {
            warnings.push(format!("unknown config section '{key}' (ignored)"));
        }
    }

    let model = PatchModel::new(growth, psi, migration, l, epsilon)?;
    Ok(ParsedConfig { model, sim, init, warnings })
}

fn parse_patch(
    tbl: &Table,
    section: &str,
    warnings: &mut Vec<String>,
) -> Result<(GrowthSpec, WeightFn)> {
    let mut keys = KeySet::new(section);

    let growth_tbl = match tbl.get("growth") {
        Some(Value::Table(t)) => t,
        Some(_) => return Err(Error::config(format!("{section}.growth"), "must be a table")),
        None => return Err(Error::config(format!("{section}.growth"), "missing growth table")),
    };
    keys.mark("growth");
    let growth_section = format!("{section}.growth");
    let mut gkeys = KeySet::new(&growth_section);
    let kind = gkeys.string(growth_tbl, "kind")?;
    let growth = match kind.as_str() {
        "quadratic" => {
            let a = keys.f64(tbl, "a")?;
            let b = keys.f64(tbl, "b")?;
            let c = keys.f64(tbl, "c")?;
            let d = keys.f64(tbl, "d")?;
            GrowthSpec::quadratic(a, b, c, d)?
        }
        "tabulated" => {
            let xs = gkeys.f64_array(growth_tbl, "x")?;
            let values = gkeys.f64_array(growth_tbl, "values")?;
            let d = keys.f64(tbl, "d")?;
            GrowthSpec::tabulated(xs, values, d)?
        }
        other => {
            return Err(Error::config(
                format!("{growth_section}.kind"),
                format!("unknown growth kind '{other}' (expected 'quadratic' or 'tabulated')"),
            ))
        }
    };
    gkeys.sweep(growth_tbl, warnings);

    let psi = match tbl.get("psi") {
        None => return Err(Error::config(format!("{section}.psi"), "missing key")),
        Some(Value::Float(v)) => WeightFn::constant(*v)?,
        Some(Value::Integer(v)) => WeightFn::constant(*v as f64)?,
        Some(Value::Table(t)) => {
            let psi_section = format!("{section}.psi");
            let mut pkeys = KeySet::new(&psi_section);
            let xs = pkeys.f64_array(t, "x")?;
            let values = pkeys.f64_array(t, "values")?;
            pkeys.sweep(t, warnings);
            WeightFn::tabulated(xs, values)?
        }
        Some(_) => {
            return Err(Error::config(
                format!("{section}.psi"),
                "expected a number or a table with x/values arrays",
            ))
        }
    };
    keys.mark("psi");
    keys.sweep(tbl, warnings);
    Ok((growth, psi))
}

fn require_table<'a>(root: &'a Table, name: &str) -> Result<&'a Table> {
    match root.get(name) {
        Some(Value::Table(t)) => Ok(t),
        Some(_) => Err(Error::config(name, "must be a table")),
        None => Err(Error::config(name, "missing section")),
    }
}

/// Tracks which keys of one table were consumed, for the unknown-key sweep.
struct KeySet {
    path: String,
    seen: BTreeSet<String>,
}

impl KeySet {
    fn new(path: &str) -> Self {
        KeySet { path: path.to_string(), seen: BTreeSet::new() }
    }

    fn mark(&mut self, key: &str) {
        self.seen.insert(key.to_string());
    }

    fn get<'a>(&mut self, tbl: &'a Table, key: &str) -> Option<&'a Value> {
        self.mark(key);
        tbl.get(key)
    }

    fn f64(&mut self, tbl: &Table, key: &str) -> Result<f64> {
        self.f64_opt(tbl, key)?
            .ok_or_else(|| Error::config(format!("{}.{key}", self.path), "missing key"))
    }

    fn f64_opt(&mut self, tbl: &Table, key: &str) -> Result<Option<f64>> {
        match self.get(tbl, key) {
            None => Ok(None),
            Some(v) => as_f64(v)
                .map(Some)
                .ok_or_else(|| Error::config(format!("{}.{key}", self.path), "expected a number")),
        }
    }

    fn usize(&mut self, tbl: &Table, key: &str) -> Result<usize> {
        self.usize_opt(tbl, key)?
            .ok_or_else(|| Error::config(format!("{}.{key}", self.path), "missing key"))
    }

    fn usize_opt(&mut self, tbl: &Table, key: &str) -> Result<Option<usize>> {
        match self.get(tbl, key) {
            None => Ok(None),
            Some(Value::Integer(v)) if *v >= 0 => Ok(Some(*v as usize)),
            Some(_) => Err(Error::config(
                format!("{}.{key}", self.path),
                "expected a nonnegative integer",
            )),
        }
    }

    fn bool_opt(&mut self, tbl: &Table, key: &str) -> Result<Option<bool>> {
        match self.get(tbl, key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(Error::config(format!("{}.{key}", self.path), "expected a boolean")),
        }
    }

    fn string(&mut self, tbl: &Table, key: &str) -> Result<String> {
        match self.get(tbl, key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(Error::config(format!("{}.{key}", self.path), "expected a string")),
            None => Err(Error::config(format!("{}.{key}", self.path), "missing key")),
        }
    }

    fn f64_array(&mut self, tbl: &Table, key: &str) -> Result<Vec<f64>> {
        match self.get(tbl, key) {
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| as_f64(v).ok_or_else(|| {
                    Error::config(format!("{}.{key}", self.path), "expected an array of numbers")
                }))
                .collect(),
            Some(_) => Err(Error::config(format!("{}.{key}", self.path), "expected an array")),
            None => Err(Error::config(format!("{}.{key}", self.path), "missing key")),
        }
    }

    fn matrix(&mut self, tbl: &Table, key: &str, k: usize) -> Result<Vec<Vec<f64>>> {
        let path = format!("{}.{key}", self.path);
        let rows = match self.get(tbl, key) {
            Some(Value::Array(rows)) => rows,
            Some(_) => return Err(Error::config(&path, "expected an array of rows")),
            None => return Err(Error::config(&path, "missing key")),
        };
        if rows.len() != k {
            return Err(Error::config(
                &path,
                format!("expected {k} rows (model.K = {k}), got {}", rows.len()),
            ));
        }
        let mut out = Vec::with_capacity(k);
        for (i, row) in rows.iter().enumerate() {
            let items = match row {
                Value::Array(items) => items,
                _ => return Err(Error::config(&path, format!("row {} must be an array", i + 1))),
            };
            if items.len() != k {
                return Err(Error::config(
                    &path,
                    format!("row {} has {} entries, expected {k}", i + 1, items.len()),
                ));
            }
            let mut r = Vec::with_capacity(k);
            for (j, v) in items.iter().enumerate() {
                r.push(as_f64(v).ok_or_else(|| {
                    Error::config(&path, format!("entry ({}, {}) is not a number", i + 1, j + 1))
                })?);
            }
            out.push(r);
        }
        Ok(out)
    }

    /// Emits a warning for every table key never consumed.
    fn sweep(&self, tbl: &Table, warnings: &mut Vec<String>) {
        for key in tbl.keys() {
            if !self.seen.contains(key) {
                warnings.push(format!("unknown config key '{}.{key}' (ignored)", self.path));
            }
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE: &str = r#"
        [model]
        K = 2
        L = 2.0
        epsilon = 0.001

        [patch.1]
        growth.kind = "quadratic"
        a = -1.0
        b = -2.0
        c = 2.0
        d = 1.0
        psi = 1.0

        [patch.2]
        growth.kind = "quadratic"
        a = -1.0
        b = 2.0
        c = 2.0
        d = 1.0
        psi = 1.0

        [migration]
        matrix = [[0.0, 1.0], [1.0, 0.0]]

        [sim]
        grid_points = 801
        dt = 0.001
        tau_end = 5000.0
        steady_tol = 1e-8

        [init.1]
        center = -0.3
        mass = 1.0
        width = 0.05

        [init.2]
        center = 0.3
        mass = 1.0
        width = 0.05
    "#;

    #[test]
    fn parses_the_reference_document() {
        let cfg = parse_config(REFERENCE).unwrap();
        assert!(cfg.warnings.is_empty(), "{:?}", cfg.warnings);
        assert_eq!(cfg.model.patches(), 2);
        assert_eq!(cfg.model.half_width(), 2.0);
        assert_eq!(cfg.model.epsilon(), 1e-3);
        // R^1(x, I) = 3 - (x+1)^2 - I
        assert!((cfg.model.growth_rate(0, -1.0, 0.0).unwrap() - 3.0).abs() < 1e-15);
        assert!((cfg.model.growth_rate(1, 1.0, 0.0).unwrap() - 3.0).abs() < 1e-15);
        // conservation default fills the diagonal
        assert_eq!(cfg.model.migration().outflow(0), 1.0);
        assert_eq!(cfg.model.migration().outflow(1), 1.0);
        assert_eq!(cfg.sim.grid_points, 801);
        assert_eq!(cfg.sim.dt, 1e-3);
        assert_eq!(cfg.sim.tau_end, 5000.0);
        assert_eq!(cfg.sim.steady_tol, 1e-8);
        assert_eq!(cfg.init[0].center, -0.3);
        assert_eq!(cfg.init[1].center, 0.3);
    }

    #[test]
    fn sim_and_init_sections_are_optional() {
        let minimal = r#"
            [model]
            K = 1
            L = 2.0
            epsilon = 0.01

            [patch.1]
            growth.kind = "quadratic"
            a = -1.0
            b = 0.0
            c = 3.0
            d = 1.0
            psi = 1.0

            [migration]
            matrix = [[0.0]]
        "#;
        let cfg = parse_config(minimal).unwrap();
        assert_eq!(cfg.sim, SimOpts::default());
        assert_eq!(cfg.init.len(), 1);
        assert_eq!(cfg.init[0].mass, 1.0);
    }

    #[test]
    fn unknown_keys_warn_but_do_not_fail() {
        // the injected keys land in the tables preceding/holding them
        let text = REFERENCE.replace("[sim]", "typo_key = 3\n\n        [sim]\nextra = 1.0");
        let cfg = parse_config(&text).unwrap();
        assert!(
            cfg.warnings.iter().any(|w| w.contains("migration.typo_key")),
            "{:?}",
            cfg.warnings
        );
        assert!(cfg.warnings.iter().any(|w| w.contains("sim.extra")));

        let text = REFERENCE.replace("[model]", "[junk]\nvalue = 1\n\n        [model]");
        let cfg = parse_config(&text).unwrap();
        assert!(cfg.warnings.iter().any(|w| w.contains("section 'junk'")), "{:?}", cfg.warnings);
    }

    #[test]
    fn errors_name_the_offending_key() {
        let text = REFERENCE.replace("epsilon = 0.001", "epsilon = \"tiny\"");
        match parse_config(&text) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "model.epsilon"),
            other => panic!("expected config error, got {other:?}"),
        }

        let text = REFERENCE.replace("matrix = [[0.0, 1.0], [1.0, 0.0]]", "matrix = [[0.0, 1.0]]");
        match parse_config(&text) {
            Err(Error::Config { key, message }) => {
                assert_eq!(key, "migration.matrix");
                assert!(message.contains("expected 2 rows"));
            }
            other => panic!("expected config error, got {other:?}"),
        }

        let text = REFERENCE.replace("[patch.2]", "[patch.9]");
        match parse_config(&text) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "patch.2"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn explicit_diagonal_is_honored() {
        let text = REFERENCE.replace(
            "matrix = [[0.0, 1.0], [1.0, 0.0]]",
            "matrix = [[4.0, 1.0], [1.0, 4.0]]\nexplicit_diagonal = true",
        );
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.model.migration().outflow(0), 4.0);
        assert!(!cfg.model.migration().conserves_mass());
    }

    #[test]
    fn tabulated_growth_and_psi_parse() {
        let text = r#"
            [model]
            K = 1
            L = 1.0
            epsilon = 0.01

            [patch.1]
            growth.kind = "tabulated"
            growth.x = [-1.0, 0.0, 1.0]
            growth.values = [0.0, 2.0, 0.0]
            d = 1.5
            psi = { x = [-1.0, 1.0], values = [2.0, 2.0] }

            [migration]
            matrix = [[0.0]]
        "#;
        let cfg = parse_config(text).unwrap();
        assert!((cfg.model.growth_rate(0, 0.5, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((cfg.model.growth_rate(0, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(cfg.model.psi(0, 0.3), 2.0);
        assert!(cfg.warnings.is_empty(), "{:?}", cfg.warnings);
    }

    #[test]
    fn growth_kind_is_validated() {
        let text = REFERENCE.replace("growth.kind = \"quadratic\"", "growth.kind = \"cubic\"");
        match parse_config(&text) {
            Err(Error::Config { key, message }) => {
                assert!(key.ends_with("growth.kind"));
                assert!(message.contains("cubic"));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
