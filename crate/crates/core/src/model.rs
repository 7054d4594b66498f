//! Problem definition: per-patch growth rates, pressure weights, the
//! migration matrix, and the sampled assumption checks.
//!
//! Conventions used throughout the crate:
//!
//! * `K` patches indexed `0..K` (config files use 1-based section names);
//! * the trait lives on `[-L, L]`, `L = half_width`;
//! * `migration.rate(i, j)` for `i != j` is the inflow rate into patch `i`
//!   from patch `j`; `migration.outflow(i)` is the diagonal entry, the total
//!   rate at which patch `i` loses individuals.

use crate::error::{Error, Result};

/// Growth rate of a patch as a function of trait `x` and that patch's
/// pressure `I`. Both kinds are linear in `I` with slope `-d`.
#[derive(Clone, Debug, PartialEq)]
pub enum GrowthSpec {
    /// `R(x, I) = a x^2 + b x + c - d I` with `a < 0` (strictly concave)
    /// and `d > 0` (pressure actually regulates).
    Quadratic { a: f64, b: f64, c: f64, d: f64 },
    /// `R(x, I) = interp(x) - d I`, piecewise-linear through `(x, values)`.
    /// No sign constraints: this is the escape hatch for black-box rates,
    /// so the sampled assumption checks are the only guard rail.
    Tabulated {
        x: Vec<f64>,
        values: Vec<f64>,
        d: f64,
    },
}

impl GrowthSpec {
    pub fn quadratic(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b), ("c", c), ("d", d)] {
            if !v.is_finite() {
                return Err(Error::Assumption(format!(
                    "quadratic growth coefficient {name} = {v} is not finite"
                )));
            }
        }
        if a >= 0.0 {
            return Err(Error::Assumption(format!(
                "quadratic growth needs a < 0 (strict concavity), got a = {a}"
            )));
        }
        if d <= 0.0 {
            return Err(Error::Assumption(format!(
                "quadratic growth needs d > 0 (pressure regulation), got d = {d}"
            )));
        }
        Ok(GrowthSpec::Quadratic { a, b, c, d })
    }

    pub fn tabulated(x: Vec<f64>, values: Vec<f64>, d: f64) -> Result<Self> {
        if x.len() < 2 || x.len() != values.len() {
            return Err(Error::Invalid(format!(
                "tabulated growth needs matching x/value tables with at least 2 entries, \
                 got {} and {}",
                x.len(),
                values.len()
            )));
        }
        if !x.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Invalid(
                "tabulated growth abscissae must be strictly increasing".into(),
            ));
        }
        if x.iter().chain(values.iter()).any(|v| !v.is_finite()) || !d.is_finite() {
            return Err(Error::Invalid("tabulated growth entries must be finite".into()));
        }
        Ok(GrowthSpec::Tabulated { x, values, d })
    }

    /// Growth rate at trait `x` under pressure `pressure`.
    pub fn rate(&self, x: f64, pressure: f64) -> f64 {
        self.base(x) - self.pressure_sensitivity() * pressure
    }

    /// Rate at zero pressure.
    pub fn base(&self, x: f64) -> f64 {
        match self {
            GrowthSpec::Quadratic { a, b, c, .. } => (a * x + b) * x + c,
            GrowthSpec::Tabulated { x: xs, values, .. } => interp_clamped(xs, values, x),
        }
    }

    /// `-dR/dI`, exact for both kinds (linear pressure dependence).
    pub fn pressure_sensitivity(&self) -> f64 {
        match self {
            GrowthSpec::Quadratic { d, .. } | GrowthSpec::Tabulated { d, .. } => *d,
        }
    }

    /// Exact (min, max) of the zero-pressure rate over `[-l, l]`.
    /// Quadratics attain extremes at the vertex or the endpoints; linear
    /// interpolants at table nodes.
    pub fn base_range(&self, l: f64) -> (f64, f64) {
        match self {
            GrowthSpec::Quadratic { a, b, .. } => {
                let mut lo = self.base(-l).min(self.base(l));
                let mut hi = self.base(-l).max(self.base(l));
                let vertex = -b / (2.0 * a);
                if vertex.abs() <= l {
                    let v = self.base(vertex);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            }
            GrowthSpec::Tabulated { x, values, .. } => {
                let mut lo = self.base(-l).min(self.base(l));
                let mut hi = lo;
                for (&xk, &vk) in x.iter().zip(values) {
                    if xk.abs() <= l {
                        lo = lo.min(vk);
                        hi = hi.max(vk);
                    }
                }
                (lo, hi.max(self.base(-l)).max(self.base(l)))
            }
        }
    }
}

fn interp_clamped(xs: &[f64], values: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return values[0];
    }
    if x >= xs[xs.len() - 1] {
        return values[values.len() - 1];
    }
    // partition_point: first index with xs[idx] > x, so the cell is idx-1.
    let idx = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[idx - 1], xs[idx]);
    let t = (x - x0) / (x1 - x0);
    values[idx - 1] + t * (values[idx] - values[idx - 1])
}

/// Pressure weight `psi` of a patch. The reference configurations use
/// constants; tabulated weights are accepted and checked by sampling.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightFn {
    Constant(f64),
    Tabulated { x: Vec<f64>, values: Vec<f64> },
}

impl WeightFn {
    pub fn constant(v: f64) -> Result<Self> {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::Assumption(format!(
                "psi must be a positive finite constant, got {v}"
            )));
        }
        Ok(WeightFn::Constant(v))
    }

    pub fn tabulated(x: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if x.len() < 2 || x.len() != values.len() {
            return Err(Error::Invalid(
                "tabulated psi needs matching tables with at least 2 entries".into(),
            ));
        }
        if !x.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Invalid("tabulated psi abscissae must be strictly increasing".into()));
        }
        if values.iter().any(|&v| !v.is_finite() || v <= 0.0) {
            return Err(Error::Assumption(
                "tabulated psi values must be positive and finite".into(),
            ));
        }
        Ok(WeightFn::Tabulated { x, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            WeightFn::Constant(v) => *v,
            WeightFn::Tabulated { x: xs, values } => interp_clamped(xs, values, x),
        }
    }
}

/// K x K migration rates, row-major. Off-diagonal `(i, j)`: inflow into `i`
/// from `j`. Diagonal: total outflow. With the conservation default the
/// diagonal equals the column sums of the off-diagonal part, so migration
/// moves individuals without creating or destroying them.
#[derive(Clone, Debug, PartialEq)]
pub struct Migration {
    n: usize,
    rates: Vec<f64>,
}

impl Migration {
    /// Builds from a full row-major matrix, replacing the diagonal with the
    /// conservation default (column sums of the off-diagonal part).
    pub fn with_conservation(rows: &[Vec<f64>]) -> Result<Self> {
        let mut m = Self::from_rows(rows)?;
        for i in 0..m.n {
            let outflow: f64 = (0..m.n).filter(|&j| j != i).map(|j| m.rates[j * m.n + i]).sum();
            m.rates[i * m.n + i] = outflow;
        }
        Ok(m)
    }

    /// Builds from a full row-major matrix, keeping the diagonal as given.
    pub fn explicit(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_rows(rows)
    }

    fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Invalid("migration matrix is empty".into()));
        }
        let mut rates = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Assumption(format!(
                        "migration rate ({}, {}) must be finite and nonnegative, got {v}",
                        i + 1,
                        j + 1
                    )));
                }
                rates.push(v);
            }
        }
        Ok(Migration { n, rates })
    }

    pub fn patches(&self) -> usize {
        self.n
    }

    /// Inflow rate into `i` from `j` (off-diagonal entry).
    #[inline]
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[i * self.n + j]
    }

    /// Total outflow rate of patch `i` (diagonal entry).
    #[inline]
    pub fn outflow(&self, i: usize) -> f64 {
        self.rates[i * self.n + i]
    }

    /// True when every diagonal entry equals the column sum of the
    /// off-diagonal part (pointwise mass-neutral migration).
    pub fn conserves_mass(&self) -> bool {
        (0..self.n).all(|i| {
            let col: f64 = (0..self.n).filter(|&j| j != i).map(|j| self.rates[j * self.n + i]).sum();
            (col - self.outflow(i)).abs() <= 1e-12 * (1.0 + col.abs())
        })
    }

    /// Strong connectivity of the directed graph with an arc j -> i whenever
    /// rate(i, j) > 0. Required for the Perron positivity claims.
    pub fn is_strongly_connected(&self) -> bool {
        if self.n == 1 {
            return true;
        }
        let forward = |i: usize, j: usize| self.rates[i * self.n + j] > 0.0;
        let backward = |i: usize, j: usize| self.rates[j * self.n + i] > 0.0;
        self.reaches_all(&forward) && self.reaches_all(&backward)
    }

    fn reaches_all(&self, has_arc_into: &dyn Fn(usize, usize) -> bool) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(j) = stack.pop() {
            for i in 0..self.n {
                if !seen[i] && has_arc_into(i, j) {
                    seen[i] = true;
                    stack.push(i);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Uniformly rescaled copy (both diagonal and off-diagonal), preserving
    /// the conservation relation when it holds.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !factor.is_finite() || factor < 0.0 {
            return Err(Error::Invalid(format!("migration scale must be >= 0, got {factor}")));
        }
        Ok(Migration {
            n: self.n,
            rates: self.rates.iter().map(|v| v * factor).collect(),
        })
    }

    /// Largest off-diagonal rate.
    pub fn max_offdiag(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    m = m.max(self.rates[i * self.n + j]);
                }
            }
        }
        m
    }
}

/// Per-patch pressures `I^i >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PressureVector(Vec<f64>);

impl PressureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("pressure vector is empty".into()));
        }
        for &v in &values {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Invalid(format!(
                    "pressures must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(PressureVector(values))
    }

    pub fn uniform(patches: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; patches])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }
}

impl std::ops::Index<usize> for PressureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// The full problem: K patches on `[-L, L]` with mutation scale `epsilon`.
#[derive(Clone, Debug)]
pub struct PatchModel {
    growth: Vec<GrowthSpec>,
    psi: Vec<WeightFn>,
    migration: Migration,
    half_width: f64,
    epsilon: f64,
}

impl PatchModel {
    pub fn new(
        growth: Vec<GrowthSpec>,
        psi: Vec<WeightFn>,
        migration: Migration,
        half_width: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let k = growth.len();
        if k == 0 {
            return Err(Error::Invalid("model needs at least one patch".into()));
        }
        if psi.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: psi.len() });
        }
        if migration.patches() != k {
            return Err(Error::DimensionMismatch { expected: k, got: migration.patches() });
        }
        if !half_width.is_finite() || half_width <= 0.0 {
            return Err(Error::Invalid(format!("half-width L must be positive, got {half_width}")));
        }
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::Invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        for g in &growth {
            if let GrowthSpec::Tabulated { x, .. } = g {
                if x[0] > -half_width || x[x.len() - 1] < half_width {
                    return Err(Error::Invalid(format!(
                        "tabulated growth covers [{}, {}] but the domain is [{}, {}]",
                        x[0],
                        x[x.len() - 1],
                        -half_width,
                        half_width
                    )));
                }
            }
        }
        Ok(PatchModel { growth, psi, migration, half_width, epsilon })
    }

    pub fn patches(&self) -> usize {
        self.growth.len()
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn migration(&self) -> &Migration {
        &self.migration
    }

    pub fn growth_spec(&self, patch: usize) -> &GrowthSpec {
        &self.growth[patch]
    }

    /// Growth rate `R^i(x, I)`; the only checked-index entry point.
    pub fn growth_rate(&self, patch: usize, x: f64, pressure: f64) -> Result<f64> {
        self.growth
            .get(patch)
            .map(|g| g.rate(x, pressure))
            .ok_or(Error::PatchIndex { index: patch, patches: self.patches() })
    }

    #[inline]
    pub(crate) fn growth_unchecked(&self, patch: usize, x: f64, pressure: f64) -> f64 {
        self.growth[patch].rate(x, pressure)
    }

    pub fn psi(&self, patch: usize, x: f64) -> f64 {
        self.psi[patch].eval(x)
    }

    pub fn psi_spec(&self, patch: usize) -> &WeightFn {
        &self.psi[patch]
    }

    /// Copy with a different mutation scale (for epsilon sweeps).
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        PatchModel::new(
            self.growth.clone(),
            self.psi.clone(),
            self.migration.clone(),
            self.half_width,
            epsilon,
        )
    }

    /// Copy with the migration matrix uniformly rescaled so its largest
    /// off-diagonal rate equals `nu`. This is the knob the sweep command
    /// turns: the coupling pattern is kept, only its strength moves.
    pub fn with_migration_scale(&self, nu: f64) -> Result<Self> {
        let current = self.migration.max_offdiag();
        if current <= 0.0 {
            return Err(Error::Invalid(
                "cannot rescale migration: all off-diagonal rates are zero".into(),
            ));
        }
        PatchModel::new(
            self.growth.clone(),
            self.psi.clone(),
            self.migration.scaled(nu / current)?,
            self.half_width,
            self.epsilon,
        )
    }

    pub fn validate_assumptions(
        &self,
        pressure_lo: f64,
        pressure_hi: f64,
        samples: usize,
    ) -> Result<ValidationReport> {
        validate_assumptions(self, pressure_lo, pressure_hi, samples)
    }
}

/// One sampled assumption check: an identifier, whether the sampled
/// condition held everywhere, and the worst witness seen.
#[derive(Clone, Debug)]
pub struct ValidationCheck {
    pub id: &'static str,
    pub pass: bool,
    pub witness_x: Option<f64>,
    pub value: f64,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, id: &str) -> Option<&ValidationCheck> {
        self.checks.iter().find(|c| c.id == id)
    }
}

/// Samples the standing hypotheses on a uniform trait grid and reports a
/// pass/fail verdict with witnesses. These are sufficient conditions from
/// the underlying theory; reference models can fail the lower sign check
/// near the domain edge and still concentrate perfectly well, so failures
/// here are advisory, not fatal.
///
/// Checks, in report order:
/// * `sign-lower`: `R^i(x, r I_lo) > 0` for all x and the outflow ratios r;
/// * `sign-upper`: `R^i(x, r I_hi) < 0` likewise;
/// * `pressure-monotonicity`: every patch has `dR/dI = -d` with `d > 0`;
/// * `curvature-bound`: sampled second derivative of the base rate is
///   bounded below (value reported is the sampled minimum);
/// * `growth-bounded`: `|R|` finite over the sampled window;
/// * `psi-bounds`: `0 < min psi <= max psi < inf` on the sample;
/// * `psi-neumann`: endpoint slope of tabulated psi vanishes (one-sided
///   difference), trivial for constants.
pub fn validate_assumptions(
    model: &PatchModel,
    pressure_lo: f64,
    pressure_hi: f64,
    samples: usize,
) -> Result<ValidationReport> {
    if !(pressure_lo.is_finite() && pressure_hi.is_finite()) || pressure_lo <= 0.0 {
        return Err(Error::Invalid(format!(
            "pressure window must be finite with positive lower end, got [{pressure_lo}, {pressure_hi}]"
        )));
    }
    if pressure_hi <= pressure_lo {
        return Err(Error::Invalid(format!(
            "pressure window must satisfy lo < hi, got [{pressure_lo}, {pressure_hi}]"
        )));
    }
    if samples < 2 {
        return Err(Error::Invalid("assumption sampling needs at least 2 points".into()));
    }

    let k = model.patches();
    let l = model.half_width();
    let h = 2.0 * l / (samples - 1) as f64;
    let xs: Vec<f64> = (0..samples).map(|m| -l + h * m as f64).collect();
    let mut checks = Vec::new();

    // Outflow ratios nu^jj / nu^ii scale the pressure window in the sign
    // conditions; a decoupled patch (zero outflow) contributes only r = 1.
    let ratios_for = |i: usize| -> Vec<f64> {
        let mut rs = vec![1.0];
        let base = model.migration().outflow(i);
        if base > 0.0 {
            for j in 0..k {
                if j != i {
                    let r = model.migration().outflow(j) / base;
                    if r.is_finite() && r > 0.0 {
                        rs.push(r);
                    }
                }
            }
        }
        rs
    };

    // The x-extremum of R(., I) does not move with I, so for quadratic
    // growth the vertex pins the sign checks exactly; the sampled grid
    // alone could straddle it.
    let probe_xs = |i: usize| -> Vec<f64> {
        let mut ps = xs.clone();
        if let GrowthSpec::Quadratic { a, b, .. } = model.growth_spec(i) {
            let v = -b / (2.0 * a);
            if v.abs() < l {
                ps.push(v);
            }
        }
        ps
    };

    // sign-lower / sign-upper
    let mut lower_min = f64::INFINITY;
    let mut lower_witness = (0usize, 0.0f64);
    let mut upper_max = f64::NEG_INFINITY;
    let mut upper_witness = (0usize, 0.0f64);
    for i in 0..k {
        let ps = probe_xs(i);
        for r in ratios_for(i) {
            for &x in &ps {
                let lo = model.growth_unchecked(i, x, r * pressure_lo);
                if lo < lower_min {
                    lower_min = lo;
                    lower_witness = (i, x);
                }
                let hi = model.growth_unchecked(i, x, r * pressure_hi);
                if hi > upper_max {
                    upper_max = hi;
                    upper_witness = (i, x);
                }
            }
        }
    }
    checks.push(ValidationCheck {
        id: "sign-lower",
        pass: lower_min > 0.0,
        witness_x: Some(lower_witness.1),
        value: lower_min,
        detail: format!(
            "min R over scaled low-pressure window is {lower_min:.6} (patch {}, x = {})",
            lower_witness.0 + 1,
            lower_witness.1
        ),
    });
    checks.push(ValidationCheck {
        id: "sign-upper",
        pass: upper_max < 0.0,
        witness_x: Some(upper_witness.1),
        value: upper_max,
        detail: format!(
            "max R over scaled high-pressure window is {upper_max:.6} (patch {}, x = {})",
            upper_witness.0 + 1,
            upper_witness.1
        ),
    });

    // pressure-monotonicity: slope in I is exactly -d for both growth kinds.
    let d_min = (0..k)
        .map(|i| model.growth_spec(i).pressure_sensitivity())
        .fold(f64::INFINITY, f64::min);
    checks.push(ValidationCheck {
        id: "pressure-monotonicity",
        pass: d_min > 0.0 && d_min.is_finite(),
        witness_x: None,
        value: d_min,
        detail: format!("min pressure sensitivity d across patches is {d_min}"),
    });

    // curvature-bound: centered second differences of the base rate.
    let mut curv_min = f64::INFINITY;
    let mut curv_witness = (0usize, 0.0f64);
    for i in 0..k {
        for w in xs.windows(3) {
            let second = (model.growth_spec(i).base(w[2]) - 2.0 * model.growth_spec(i).base(w[1])
                + model.growth_spec(i).base(w[0]))
                / (h * h);
            if second < curv_min {
                curv_min = second;
                curv_witness = (i, w[1]);
            }
        }
    }
    checks.push(ValidationCheck {
        id: "curvature-bound",
        pass: curv_min.is_finite(),
        witness_x: Some(curv_witness.1),
        value: curv_min,
        detail: format!(
            "sampled min d2R/dx2 is {curv_min:.6} (patch {}, x = {})",
            curv_witness.0 + 1,
            curv_witness.1
        ),
    });

    // growth-bounded over the sampled window.
    let mut r_abs = 0.0f64;
    for i in 0..k {
        for &x in &xs {
            r_abs = r_abs
                .max(model.growth_unchecked(i, x, pressure_lo).abs())
                .max(model.growth_unchecked(i, x, pressure_hi).abs());
        }
    }
    checks.push(ValidationCheck {
        id: "growth-bounded",
        pass: r_abs.is_finite(),
        witness_x: None,
        value: r_abs,
        detail: format!("max |R| over the sampled window is {r_abs:.6}"),
    });

    // psi-bounds
    let mut psi_min = f64::INFINITY;
    let mut psi_max = f64::NEG_INFINITY;
    let mut psi_witness = (0usize, 0.0f64);
    for i in 0..k {
        for &x in &xs {
            let p = model.psi(i, x);
            if p < psi_min {
                psi_min = p;
                psi_witness = (i, x);
            }
            psi_max = psi_max.max(p);
        }
    }
    checks.push(ValidationCheck {
        id: "psi-bounds",
        pass: psi_min > 0.0 && psi_max.is_finite(),
        witness_x: Some(psi_witness.1),
        value: psi_min,
        detail: format!(
            "psi ranges over [{psi_min:.6}, {psi_max:.6}] (min at patch {}, x = {})",
            psi_witness.0 + 1,
            psi_witness.1
        ),
    });

    // psi-neumann: one-sided endpoint slopes for tabulated weights.
    let mut slope_max = 0.0f64;
    for i in 0..k {
        if matches!(model.psi_spec(i), WeightFn::Tabulated { .. }) {
            let dl = (model.psi(i, -l + h) - model.psi(i, -l)) / h;
            let dr = (model.psi(i, l) - model.psi(i, l - h)) / h;
            slope_max = slope_max.max(dl.abs()).max(dr.abs());
        }
    }
    checks.push(ValidationCheck {
        id: "psi-neumann",
        pass: slope_max <= 1e-6 * psi_max.max(1.0),
        witness_x: None,
        value: slope_max,
        detail: format!("max |endpoint slope| of tabulated psi is {slope_max:.3e}"),
    });

    Ok(ValidationReport { checks })
}
