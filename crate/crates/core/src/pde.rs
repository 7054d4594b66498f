//! Time integration of the rescaled patch system
//!
//! ```text
//! d n^i / d tau = eps^2 Lap n^i + n^i R^i(x, I^i) + sum_{j != i} nu^{ij} n^j - nu^{ii} n^i
//! ```
//!
//! on `[-L, L]` with no-flux boundaries, `I^i = int psi^i n^i dx`. The time
//! variable is `tau = t / eps`, which leaves the equilibria of the original
//! system untouched while keeping every coefficient O(1) except the tiny
//! mutation diffusion `eps^2`.
//!
//! Scheme: IMEX Euler. Reaction and migration are explicit (they are
//! pointwise and cheap to bound), diffusion is implicit (a constant
//! tridiagonal solve, unconditionally stable), pressures are lagged one
//! step. Neumann boundaries use mirror ghost nodes, which makes the
//! discrete Laplacian exactly mass-neutral under trapezoidal quadrature;
//! the implicit matrix is an M-matrix, so negative densities can only come
//! from rounding and are clamped (and counted).
//!
//! Stability budget for the explicit part: `dt * (sup |R| + max outflow)
//! <= 1/2`, checked every step against the current pressures; violations
//! are refused with the admissible bound.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::{PatchModel, PressureVector};

/// Uniform trait grid: `n >= 3` nodes spanning `[-L, L]` inclusive.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    n: usize,
    half_width: f64,
}

impl GridSpec {
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::Invalid(format!("grid needs at least 3 nodes, got {n}")));
        }
        if !half_width.is_finite() || half_width <= 0.0 {
            return Err(Error::Invalid(format!("grid half-width must be positive, got {half_width}")));
        }
        Ok(GridSpec { n, half_width })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        -self.half_width + self.spacing() * k as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.node(k)).collect()
    }

    /// Trapezoidal integral of nodal values.
    pub fn trapz(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n);
        let interior: f64 = values[1..self.n - 1].iter().sum();
        self.spacing() * (interior + 0.5 * (values[0] + values[self.n - 1]))
    }
}

/// Per-patch densities on a shared grid at simulated time `tau`.
#[derive(Clone, Debug)]
pub struct DensityState {
    grid: GridSpec,
    densities: Vec<Vec<f64>>,
    tau: f64,
}

impl DensityState {
    pub fn new(grid: GridSpec, densities: Vec<Vec<f64>>, tau: f64) -> Result<Self> {
        if densities.is_empty() {
            return Err(Error::Invalid("density state needs at least one patch".into()));
        }
        for (i, d) in densities.iter().enumerate() {
            if d.len() != grid.len() {
                return Err(Error::DimensionMismatch { expected: grid.len(), got: d.len() });
            }
            if d.iter().any(|&v| !v.is_finite() || v < 0.0) {
                return Err(Error::Invalid(format!(
                    "patch {} density must be finite and nonnegative",
                    i + 1
                )));
            }
        }
        Ok(DensityState { grid, densities, tau })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn patches(&self) -> usize {
        self.densities.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn density(&self, patch: usize) -> &[f64] {
        &self.densities[patch]
    }

    pub fn densities(&self) -> &[Vec<f64>] {
        &self.densities
    }

    /// Trapezoidal mass of one patch.
    pub fn mass(&self, patch: usize) -> f64 {
        self.grid.trapz(&self.densities[patch])
    }
}

/// Truncated Gaussian initial bump for one patch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitSpec {
    pub center: f64,
    pub mass: f64,
    pub width: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec { center: 0.0, mass: 1.0, width: 0.05 }
    }
}

/// Builds the initial state: per patch, a Gaussian bump truncated to the
/// domain and renormalized so its trapezoidal mass is exactly `mass`.
pub fn init_state(model: &PatchModel, grid: &GridSpec, specs: &[InitSpec]) -> Result<DensityState> {
    if specs.len() != model.patches() {
        return Err(Error::DimensionMismatch { expected: model.patches(), got: specs.len() });
    }
    if (grid.half_width() - model.half_width()).abs() > 1e-12 {
        return Err(Error::Invalid(format!(
            "grid spans [-{}, {}] but the model domain is [-{}, {}]",
            grid.half_width(),
            grid.half_width(),
            model.half_width(),
            model.half_width()
        )));
    }
    let mut densities = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        if !(spec.mass.is_finite() && spec.mass > 0.0) {
            return Err(Error::Invalid(format!("init.{}: mass must be positive", i + 1)));
        }
        if !(spec.width.is_finite() && spec.width > 0.0) {
            return Err(Error::Invalid(format!("init.{}: width must be positive", i + 1)));
        }
        if spec.center.abs() >= model.half_width() {
            return Err(Error::Invalid(format!(
                "init.{}: center {} lies outside (-{}, {})",
                i + 1,
                spec.center,
                model.half_width(),
                model.half_width()
            )));
        }
        let raw: Vec<f64> = (0..grid.len())
            .map(|k| {
                let z = (grid.node(k) - spec.center) / spec.width;
                (-0.5 * z * z).exp()
            })
            .collect();
        let raw_mass = grid.trapz(&raw);
        densities.push(raw.into_iter().map(|v| v * spec.mass / raw_mass).collect());
    }
    DensityState::new(grid.clone(), densities, 0.0)
}

/// Resource pressures `I^i = int psi^i n^i dx`, trapezoidal.
pub fn pressures(model: &PatchModel, state: &DensityState) -> Result<PressureVector> {
    if state.patches() != model.patches() {
        return Err(Error::DimensionMismatch { expected: model.patches(), got: state.patches() });
    }
    let grid = state.grid();
    let values: Vec<f64> = (0..model.patches())
        .map(|i| {
            let weighted: Vec<f64> = state
                .density(i)
                .iter()
                .enumerate()
                .map(|(k, &n)| n * model.psi(i, grid.node(k)))
                .collect();
            grid.trapz(&weighted).max(0.0)
        })
        .collect();
    PressureVector::new(values)
}

/// Simulation options. Defaults are the reference settings used throughout
/// the acceptance runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOpts {
    pub grid_points: usize,
    pub dt: f64,
    pub tau_end: f64,
    pub steady_tol: f64,
    /// Time-series sampling stride, in steps.
    pub sample_stride: usize,
}

impl Default for SimOpts {
    fn default() -> Self {
        SimOpts {
            grid_points: 801,
            dt: 1e-3,
            tau_end: 5000.0,
            steady_tol: 1e-8,
            sample_stride: 100,
        }
    }
}

/// Sampled pressure history.
#[derive(Clone, Debug, Default)]
pub struct TimeSeries {
    pub tau: Vec<f64>,
    pub pressures: Vec<Vec<f64>>,
}

#[derive(Debug)]
pub struct SimulationResult {
    pub state: DensityState,
    pub series: TimeSeries,
    /// True when the relative L1 rate dropped below `steady_tol` before
    /// `tau_end`.
    pub steady: bool,
    pub steps: u64,
    /// Nodes clamped from (rounding-level) negative values back to zero.
    pub clamp_events: u64,
    pub wall_time: std::time::Duration,
}

/// Reusable IMEX stepper: owns the precomputed reaction table, the
/// tridiagonal factorization, and the staging buffers, so one step costs a
/// handful of passes over the grid and nothing else.
pub struct Stepper<'m> {
    model: &'m PatchModel,
    grid: GridSpec,
    dt: f64,
    /// `1 + dt * (base_i(x_k) - outflow_i)`, per patch.
    explicit_base: Vec<Vec<f64>>,
    /// Trapezoid weight times `psi_i(x_k)`, per patch: pressures in one dot.
    psi_weights: Vec<Vec<f64>>,
    /// Exact base-rate ranges for the per-step stability budget.
    base_ranges: Vec<(f64, f64)>,
    max_outflow: f64,
    /// Thomas factorization of `Id - r * Lap_h` (constant in time).
    sub: Vec<f64>,
    cp: Vec<f64>,
    minv: Vec<f64>,
    /// Staging buffers.
    half: Vec<Vec<f64>>,
    dp: Vec<f64>,
    pub clamp_events: u64,
}

impl<'m> Stepper<'m> {
    pub fn new(model: &'m PatchModel, grid: GridSpec, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Invalid(format!("dt must be positive, got {dt}")));
        }
        let k = model.patches();
        let n = grid.len();
        let h = grid.spacing();
        let r = dt * model.epsilon() * model.epsilon() / (h * h);

        let mut explicit_base = Vec::with_capacity(k);
        let mut psi_weights = Vec::with_capacity(k);
        let mut base_ranges = Vec::with_capacity(k);
        for i in 0..k {
            let spec = model.growth_spec(i);
            let outflow = model.migration().outflow(i);
            explicit_base.push(
                (0..n).map(|m| 1.0 + dt * (spec.base(grid.node(m)) - outflow)).collect(),
            );
            psi_weights.push(
                (0..n)
                    .map(|m| {
                        let w = if m == 0 || m == n - 1 { 0.5 * h } else { h };
                        w * model.psi(i, grid.node(m))
                    })
                    .collect(),
            );
            base_ranges.push(spec.base_range(grid.half_width()));
        }
        let max_outflow =
            (0..k).map(|i| model.migration().outflow(i)).fold(0.0f64, f64::max);

        // Mirror-ghost Neumann rows: the first and last rows couple to the
        // interior with weight 2r, everything else is the classic
        // (-r, 1 + 2r, -r) stencil.
        let diag = 1.0 + 2.0 * r;
        let mut sub = vec![-r; n];
        sub[0] = 0.0;
        sub[n - 1] = -2.0 * r;
        let mut sup = vec![-r; n];
        sup[0] = -2.0 * r;
        let mut cp = vec![0.0; n];
        let mut minv = vec![0.0; n];
        minv[0] = 1.0 / diag;
        cp[0] = sup[0] * minv[0];
        for m in 1..n {
            let den = diag - sub[m] * cp[m - 1];
            minv[m] = 1.0 / den;
            if m < n - 1 {
                cp[m] = sup[m] * minv[m];
            }
        }

        Ok(Stepper {
            model,
            grid,
            dt,
            explicit_base,
            psi_weights,
            base_ranges,
            max_outflow,
            sub,
            cp,
            minv,
            half: vec![vec![0.0; n]; k],
            dp: vec![0.0; n],
            clamp_events: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Pressures of `state` using the precomputed weights.
    pub fn pressures(&self, state: &DensityState) -> Vec<f64> {
        (0..state.patches())
            .map(|i| {
                self.psi_weights[i]
                    .iter()
                    .zip(state.density(i))
                    .map(|(w, n)| w * n)
                    .sum::<f64>()
                    .max(0.0)
            })
            .collect()
    }

    /// One IMEX step in place. Returns the pressures the step used (the
    /// state's pressures *before* the update; they lag by one step).
    pub fn step(&mut self, state: &mut DensityState) -> Result<Vec<f64>> {
        let k = self.model.patches();
        if state.patches() != k {
            return Err(Error::DimensionMismatch { expected: k, got: state.patches() });
        }
        if state.grid() != &self.grid {
            return Err(Error::Invalid("state grid does not match the stepper grid".into()));
        }
        let n = self.grid.len();
        let dt = self.dt;
        let pressures = self.pressures(state);

        // Stability budget against the current pressures.
        let mut sup_r = 0.0f64;
        for i in 0..k {
            let d = self.model.growth_spec(i).pressure_sensitivity();
            let (lo, hi) = self.base_ranges[i];
            sup_r = sup_r.max((hi - d * pressures[i]).abs()).max((lo - d * pressures[i]).abs());
        }
        let budget = sup_r + self.max_outflow;
        if dt * budget > 0.5 {
            return Err(Error::StabilityBudget { dt, max_dt: 0.5 / budget });
        }

        // Explicit reaction + outflow...
        for i in 0..k {
            let shift = dt * self.model.growth_spec(i).pressure_sensitivity() * pressures[i];
            let base = &self.explicit_base[i];
            let src = state.density(i);
            let dst = &mut self.half[i];
            for ((d, &b), &v) in dst.iter_mut().zip(base).zip(src) {
                *d = v * (b - shift);
            }
        }
        // ...then inflows, patch pair by patch pair.
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                let w = dt * self.model.migration().rate(i, j);
                if w == 0.0 {
                    continue;
                }
                let src = state.density(j);
                let dst = &mut self.half[i];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d += w * v;
                }
            }
        }

        // Implicit diffusion: precomputed Thomas sweep, then clamp rounding
        // negatives (the matrix inverse is nonnegative, so anything below
        // zero is a float artifact).
        for i in 0..k {
            let rhs = &self.half[i];
            let dp = &mut self.dp;
            dp[0] = rhs[0] * self.minv[0];
            for m in 1..n {
                dp[m] = (rhs[m] - self.sub[m] * dp[m - 1]) * self.minv[m];
            }
            let out = &mut state.densities[i];
            out[n - 1] = dp[n - 1];
            for m in (0..n - 1).rev() {
                out[m] = dp[m] - self.cp[m] * out[m + 1];
            }
            for v in out.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                    self.clamp_events += 1;
                }
            }
        }

        state.tau += dt;
        Ok(pressures)
    }
}

/// One-shot step on a copy of the state. Convenience wrapper over
/// [`Stepper`] for tests and small experiments; long runs should hold a
/// stepper (or use [`run_to_steady`]) to reuse the factorization.
pub fn step(model: &PatchModel, state: &DensityState, dt: f64) -> Result<DensityState> {
    let mut stepper = Stepper::new(model, state.grid().clone(), dt)?;
    let mut next = state.clone();
    stepper.step(&mut next)?;
    Ok(next)
}

/// Integrates until the relative L1 rate over a 100-step window falls below
/// `steady_tol`, or `tau_end` is reached. A blow-up guard aborts when any
/// pressure exceeds a thousand times the model's own pressure scale.
pub fn run_to_steady(
    model: &PatchModel,
    mut state: DensityState,
    opts: &SimOpts,
) -> Result<SimulationResult> {
    if !(opts.tau_end.is_finite() && opts.tau_end > state.tau()) {
        return Err(Error::Invalid(format!(
            "tau_end = {} must exceed the state clock {}",
            opts.tau_end,
            state.tau()
        )));
    }
    if !(opts.steady_tol.is_finite() && opts.steady_tol > 0.0) {
        return Err(Error::Invalid(format!("steady_tol must be positive, got {}", opts.steady_tol)));
    }
    if opts.sample_stride == 0 {
        return Err(Error::Invalid("sample_stride must be at least 1".into()));
    }
    let started = Instant::now();
    let mut stepper = Stepper::new(model, state.grid().clone(), opts.dt)?;
    let k = model.patches();

    // Pressure scale of the model itself: the largest zero-pressure growth
    // over the regulating slope. Any healthy trajectory stays well under it.
    let mut scale = 1.0f64;
    for i in 0..k {
        let d = model.growth_spec(i).pressure_sensitivity();
        if d > 0.0 {
            let (_, hi) = model.growth_spec(i).base_range(model.half_width());
            scale = scale.max(hi.max(0.0) / d);
        }
    }
    let guard = 1e3 * scale;

    let mut series = TimeSeries::default();
    let record = |series: &mut TimeSeries, stepper: &Stepper, state: &DensityState| {
        series.tau.push(state.tau());
        series.pressures.push(stepper.pressures(state));
    };
    record(&mut series, &stepper, &state);

    let check_stride = 100u64;
    let window = check_stride as f64 * opts.dt;
    let mut snapshot = state.densities.clone();
    let mut steady = false;
    let mut steps = 0u64;
    let total_steps = ((opts.tau_end - state.tau()) / opts.dt).ceil() as u64;

    while steps < total_steps {
        let used = stepper.step(&mut state)?;
        steps += 1;
        for (i, &p) in used.iter().enumerate() {
            if !p.is_finite() || p > guard {
                return Err(Error::BlowUp { patch: i + 1, value: p, guard, tau: state.tau() });
            }
        }
        if steps % opts.sample_stride as u64 == 0 {
            record(&mut series, &stepper, &state);
        }
        if steps % check_stride == 0 {
            let mut rate = 0.0f64;
            for i in 0..k {
                let diff: Vec<f64> = state.densities[i]
                    .iter()
                    .zip(&snapshot[i])
                    .map(|(a, b)| (a - b).abs())
                    .collect();
                let norm = state.grid.trapz(&state.densities[i]).max(1.0);
                rate = rate.max(state.grid.trapz(&diff) / (window * norm));
            }
            if rate < opts.steady_tol {
                steady = true;
                break;
            }
            for i in 0..k {
                snapshot[i].copy_from_slice(&state.densities[i]);
            }
        }
    }
    if series.tau.last() != Some(&state.tau()) {
        record(&mut series, &stepper, &state);
    }

    Ok(SimulationResult {
        state,
        series,
        steady,
        steps,
        clamp_events: stepper.clamp_events,
        wall_time: started.elapsed(),
    })
}

/// L1 norm, per patch, of the stationary residual
/// `eps^2 Lap_h n + n R + migration` at the state's own pressures. Small at
/// a genuine steady state (comparable to `steady_tol` times the mass).
pub fn equilibrium_residual(model: &PatchModel, state: &DensityState) -> Result<Vec<f64>> {
    let k = model.patches();
    if state.patches() != k {
        return Err(Error::DimensionMismatch { expected: k, got: state.patches() });
    }
    let grid = state.grid();
    let n = grid.len();
    let h = grid.spacing();
    let eps2 = model.epsilon() * model.epsilon();
    let p = pressures(model, state)?;
    let mut norms = Vec::with_capacity(k);
    for i in 0..k {
        let ni = state.density(i);
        let mut res = vec![0.0; n];
        for m in 0..n {
            let second = if m == 0 {
                2.0 * (ni[1] - ni[0])
            } else if m == n - 1 {
                2.0 * (ni[n - 2] - ni[n - 1])
            } else {
                ni[m - 1] - 2.0 * ni[m] + ni[m + 1]
            };
            let lap = second / (h * h);
            let x = grid.node(m);
            let mut v = eps2 * lap + ni[m] * model.growth_unchecked(i, x, p[i])
                - model.migration().outflow(i) * ni[m];
            for j in 0..k {
                if j != i {
                    v += model.migration().rate(i, j) * state.density(j)[m];
                }
            }
            res[m] = v.abs();
        }
        norms.push(grid.trapz(&res));
    }
    Ok(norms)
}
