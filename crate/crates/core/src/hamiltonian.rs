//! Effective-Hamiltonian machinery.
//!
//! At a trait value `x` under pressures `I`, the patch fitness matrix `A`
//! has diagonal entries `R^i(x, I^i) - nu^{ii}` and off-diagonal entries
//! `nu^{ij}` (a Metzler matrix). Its largest eigenvalue, the Perron root,
//! is the effective Hamiltonian `H(x, I)`: the exponential growth rate of
//! the patch-coupled population concentrated at `x`. In the small-mutation
//! limit the population can only persist where `H = 0`, at maxima of
//! `H(., I)`, which is what [`landscape`] hunts for.
//!
//! For two patches the Perron root is the closed-form root of the
//! characteristic quadratic: with `F = trace` and `G = det`,
//! `lambda = F/2 + sqrt(F^2 - 4G)/2`, and the discriminant rearranges to
//! `(a11 - a22)^2 + 4 a12 a21 >= 0`, which is the cancellation-free way to
//! evaluate it. For `K >= 3` a power iteration on the nonnegative shift
//! `A + sigma Id`, `sigma = 1 + max_i |a_ii|`, does the job.

use crate::error::{Error, Result};
use crate::linalg::inf_norm;
use crate::model::{PatchModel, PressureVector};

/// Patch fitness matrix at one trait value: growth minus outflow on the
/// diagonal, inflow rates off it.
#[derive(Clone, Debug)]
pub struct FitnessMatrix {
    k: usize,
    entries: Vec<f64>,
    x: f64,
}

impl FitnessMatrix {
    pub fn new(model: &PatchModel, x: f64, pressures: &PressureVector) -> Result<Self> {
        if pressures.len() != model.patches() {
            return Err(Error::DimensionMismatch {
                expected: model.patches(),
                got: pressures.len(),
            });
        }
        if !x.is_finite() {
            return Err(Error::Invalid(format!("trait value must be finite, got {x}")));
        }
        let k = model.patches();
        let mig = model.migration();
        let mut entries = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                entries[i * k + j] = if i == j {
                    model.growth_unchecked(i, x, pressures[i]) - mig.outflow(i)
                } else {
                    mig.rate(i, j)
                };
            }
        }
        Ok(FitnessMatrix { k, entries, x })
    }

    /// Raw constructor for matrices that do not come from a model (random
    /// Metzler matrices in tests, mostly). Off-diagonal entries must be
    /// nonnegative, everything finite.
    pub fn from_entries(k: usize, entries: Vec<f64>) -> Result<Self> {
        if k == 0 || entries.len() != k * k {
            return Err(Error::DimensionMismatch { expected: k * k, got: entries.len() });
        }
        for i in 0..k {
            for j in 0..k {
                let v = entries[i * k + j];
                if !v.is_finite() {
                    return Err(Error::Invalid(format!("matrix entry ({i}, {j}) is not finite")));
                }
                if i != j && v < 0.0 {
                    return Err(Error::Invalid(format!(
                        "off-diagonal entry ({i}, {j}) = {v} must be nonnegative"
                    )));
                }
            }
        }
        Ok(FitnessMatrix { k, entries, x: f64::NAN })
    }

    pub fn patches(&self) -> usize {
        self.k
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.k).map(|i| self.entry(i, i)).sum()
    }

    pub fn inf_norm(&self) -> f64 {
        (0..self.k)
            .map(|i| (0..self.k).map(|j| self.entry(i, j).abs()).sum())
            .fold(0.0f64, f64::max)
    }

    /// `A v` for the residual checks.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for i in 0..self.k {
            let row = &self.entries[i * self.k..(i + 1) * self.k];
            out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        out
    }
}

/// Perron root and its eigenvector, normalized to unit component sum.
#[derive(Clone, Debug)]
pub struct PerronPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Closed-form Perron root of a 2x2 Metzler matrix. The discriminant is
/// written as a sum of squares, so it never goes negative from rounding.
#[inline]
pub(crate) fn perron_value_2x2(a11: f64, a12: f64, a21: f64, a22: f64) -> f64 {
    let half_gap = 0.5 * (a11 - a22);
    0.5 * (a11 + a22) + (half_gap * half_gap + a12 * a21).sqrt()
}

/// Largest eigenvalue with a strictly positive eigenvector.
///
/// Dispatch: `K = 1` trivial, `K = 2` closed form, `K >= 3` power iteration
/// on the shifted matrix (successive eigenvalue estimates within 1e-13, at
/// most 1e5 iterations). A zero or negative eigenvector component means the
/// migration graph is not strongly connected and comes back as
/// [`Error::Positivity`].
pub fn perron_pair(matrix: &FitnessMatrix) -> Result<PerronPair> {
    let k = matrix.patches();
    match k {
        1 => Ok(PerronPair {
            value: matrix.entry(0, 0),
            vector: vec![1.0],
            iterations: 0,
            residual: 0.0,
        }),
        2 => perron_2x2(matrix),
        _ => perron_power(matrix),
    }
}

fn perron_2x2(m: &FitnessMatrix) -> Result<PerronPair> {
    let (a11, a12, a21, a22) = (m.entry(0, 0), m.entry(0, 1), m.entry(1, 0), m.entry(1, 1));
    let value = perron_value_2x2(a11, a12, a21, a22);
    // (A - lambda I) v = 0: row one gives v = (a12, lambda - a11), row two
    // gives v = (lambda - a22, a21). Either works when its off-diagonal
    // entry is positive; a diagonal matrix has no positive eigenvector.
    let raw = if a12 > 0.0 {
        [a12, value - a11]
    } else if a21 > 0.0 {
        [value - a22, a21]
    } else {
        return Err(Error::Positivity);
    };
    if raw[0] <= 0.0 || raw[1] <= 0.0 {
        return Err(Error::Positivity);
    }
    let sum = raw[0] + raw[1];
    let vector = vec![raw[0] / sum, raw[1] / sum];
    let av = m.apply(&vector);
    let residual = inf_norm(&[av[0] - value * vector[0], av[1] - value * vector[1]]);
    Ok(PerronPair { value, vector, iterations: 0, residual })
}

fn perron_power(m: &FitnessMatrix) -> Result<PerronPair> {
    let k = m.patches();
    let sigma = 1.0 + (0..k).map(|i| m.entry(i, i).abs()).fold(0.0f64, f64::max);
    let mut v = vec![1.0 / k as f64; k];
    let mut w = vec![0.0; k];
    let mut estimate = f64::INFINITY;
    let max_iter = 100_000;
    for iter in 1..=max_iter {
        for i in 0..k {
            let mut s = sigma * v[i];
            for j in 0..k {
                s += m.entry(i, j) * v[j];
            }
            w[i] = s;
        }
        // v has unit component sum, so the sum of w estimates lambda + sigma
        let sum: f64 = w.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(Error::Positivity);
        }
        for i in 0..k {
            v[i] = w[i] / sum;
        }
        let next = sum - sigma;
        if (next - estimate).abs() < 1e-13 {
            let av = m.apply(&v);
            let residual =
                inf_norm(&av.iter().zip(&v).map(|(a, x)| a - next * x).collect::<Vec<_>>());
            if v.iter().any(|&c| c <= 0.0) {
                return Err(Error::Positivity);
            }
            return Ok(PerronPair { value: next, vector: v, iterations: iter, residual });
        }
        estimate = next;
    }
    let av = m.apply(&v);
    let residual =
        inf_norm(&av.iter().zip(&v).map(|(a, x)| a - estimate * x).collect::<Vec<_>>());
    Err(Error::NonConvergence { iterations: max_iter, residual })
}

/// `H(x, I)`: the Perron root of the fitness matrix at `x`.
pub fn effective_hamiltonian(model: &PatchModel, x: f64, pressures: &PressureVector) -> Result<f64> {
    let k = model.patches();
    if pressures.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: pressures.len() });
    }
    match k {
        1 => Ok(model.growth_rate(0, x, pressures[0])? - model.migration().outflow(0)),
        2 => Ok(hamiltonian_2x2(model, x, pressures)),
        _ => Ok(perron_pair(&FitnessMatrix::new(model, x, pressures)?)?.value),
    }
}

#[inline]
fn hamiltonian_2x2(model: &PatchModel, x: f64, pressures: &PressureVector) -> f64 {
    let mig = model.migration();
    perron_value_2x2(
        model.growth_unchecked(0, x, pressures[0]) - mig.outflow(0),
        mig.rate(0, 1),
        mig.rate(1, 0),
        model.growth_unchecked(1, x, pressures[1]) - mig.outflow(1),
    )
}

/// Determinant `G` of the two-patch fitness matrix, the quartic (in `x`,
/// for quadratic growth) whose zero set carries the zero-level maxima of
/// `H`: on the singular locus `H = 0` is equivalent to `G = 0` with
/// nonpositive trace.
pub fn fitness_determinant(model: &PatchModel, x: f64, pressures: &PressureVector) -> Result<f64> {
    if model.patches() != 2 {
        return Err(Error::TwoPatchOnly(model.patches()));
    }
    if pressures.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: pressures.len() });
    }
    let mig = model.migration();
    let a11 = model.growth_unchecked(0, x, pressures[0]) - mig.outflow(0);
    let a22 = model.growth_unchecked(1, x, pressures[1]) - mig.outflow(1);
    Ok(a11 * a22 - mig.rate(0, 1) * mig.rate(1, 0))
}

/// One refined local maximum of the landscape.
#[derive(Clone, Copy, Debug)]
pub struct LocalMax {
    pub x: f64,
    pub h: f64,
}

/// `H(., I)` sampled on a uniform grid, with every grid-local maximum
/// refined by golden-section search (trait tolerance 1e-8). For two patches
/// the trace `F` and determinant `G` come along for the ride.
#[derive(Clone, Debug)]
pub struct FitnessLandscape {
    xs: Vec<f64>,
    h: Vec<f64>,
    trace: Option<Vec<f64>>,
    det: Option<Vec<f64>>,
    maxima: Vec<LocalMax>,
    global: LocalMax,
}

/// Trait tolerance of the golden-section refinement.
const REFINE_TOL: f64 = 1e-8;
/// Maxima this close to the global maximum are argmax candidates.
const ARGMAX_ATOL: f64 = 1e-6;
/// Candidates closer than this in the trait merge to one point.
const CLUSTER_GAP: f64 = 1e-4;

impl FitnessLandscape {
    pub fn grid(&self) -> &[f64] {
        &self.xs
    }

    pub fn h_values(&self) -> &[f64] {
        &self.h
    }

    /// Trace samples (two patches only).
    pub fn trace_values(&self) -> Option<&[f64]> {
        self.trace.as_deref()
    }

    /// Determinant samples (two patches only).
    pub fn det_values(&self) -> Option<&[f64]> {
        self.det.as_deref()
    }

    /// All refined local maxima, sorted by trait value.
    pub fn maxima(&self) -> &[LocalMax] {
        &self.maxima
    }

    /// Refined global maximum.
    pub fn global_max(&self) -> LocalMax {
        self.global
    }

    /// Argmax candidates: refined maxima within `atol` of the global
    /// maximum, clustered so that near-duplicates (closer than 1e-4 in the
    /// trait) merge to their H-weighted centroid.
    pub fn argmax_candidates(&self, atol: f64) -> Vec<f64> {
        let cutoff = self.global.h - atol;
        let near: Vec<&LocalMax> = self.maxima.iter().filter(|m| m.h >= cutoff).collect();
        let mut points = Vec::new();
        let mut cluster: Vec<&LocalMax> = Vec::new();
        for m in near {
            if let Some(last) = cluster.last() {
                if m.x - last.x >= CLUSTER_GAP {
                    points.push(centroid(&cluster));
                    cluster.clear();
                }
            }
            cluster.push(m);
        }
        if !cluster.is_empty() {
            points.push(centroid(&cluster));
        }
        points
    }

    /// Candidates at the default tolerance.
    pub fn argmax(&self) -> Vec<f64> {
        self.argmax_candidates(ARGMAX_ATOL)
    }
}

/// H-weighted centroid of a cluster. Members are within `ARGMAX_ATOL` of
/// each other in H, so the weights are shifted to the cluster minimum to
/// keep them positive; an exactly flat cluster degenerates to the mean.
fn centroid(cluster: &[&LocalMax]) -> f64 {
    let shift = cluster.iter().map(|m| m.h).fold(f64::INFINITY, f64::min);
    let mut wsum = 0.0;
    let mut xsum = 0.0;
    for m in cluster {
        let w = (m.h - shift) + 1e-30;
        wsum += w;
        xsum += w * m.x;
    }
    xsum / wsum
}

/// Samples `H(., I)` on `grid_points` uniform nodes over `[-L, L]` and
/// refines every local maximum.
pub fn landscape(
    model: &PatchModel,
    pressures: &PressureVector,
    grid_points: usize,
) -> Result<FitnessLandscape> {
    if grid_points < 3 {
        return Err(Error::Invalid(format!(
            "landscape needs at least 3 grid points, got {grid_points}"
        )));
    }
    if pressures.len() != model.patches() {
        return Err(Error::DimensionMismatch {
            expected: model.patches(),
            got: pressures.len(),
        });
    }
    let k = model.patches();
    let l = model.half_width();
    let n = grid_points;
    let step = 2.0 * l / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|m| -l + step * m as f64).collect();

    let eval: Box<dyn Fn(f64) -> Result<f64>> = match k {
        2 => Box::new(move |x| Ok(hamiltonian_2x2(model, x, pressures))),
        _ => Box::new(move |x| effective_hamiltonian(model, x, pressures)),
    };

    let mut h = Vec::with_capacity(n);
    for &x in &xs {
        h.push(eval(x)?);
    }

    let (trace, det) = if k == 2 {
        let mig = model.migration();
        let mut tr = Vec::with_capacity(n);
        let mut dt = Vec::with_capacity(n);
        for &x in &xs {
            let a11 = model.growth_unchecked(0, x, pressures[0]) - mig.outflow(0);
            let a22 = model.growth_unchecked(1, x, pressures[1]) - mig.outflow(1);
            tr.push(a11 + a22);
            dt.push(a11 * a22 - mig.rate(0, 1) * mig.rate(1, 0));
        }
        (Some(tr), Some(dt))
    } else {
        (None, None)
    };

    // Grid-local maxima; the plateau guard takes the first node of a flat
    // run so a constant stretch yields one candidate, not a hundred.
    let mut maxima = Vec::new();
    let f = |x: f64| eval(x).unwrap_or(f64::NEG_INFINITY);
    for m in 0..n {
        let left_ok = m == 0 || h[m] > h[m - 1];
        let right_ok = m == n - 1 || h[m] >= h[m + 1];
        if left_ok && right_ok {
            let lo = xs[m.saturating_sub(1)];
            let hi = xs[(m + 1).min(n - 1)];
            let (mut x, mut hx) = golden_max(&f, lo, hi, REFINE_TOL);
            if let Some(xp) = derivative_polish(&f, x, lo, hi) {
                let hp = f(xp);
                // a polished point may read an ulp below the golden value
                // even when it is closer to the true maximum
                if hp.is_finite() && hp >= hx - 1e-13 * hx.abs().max(1.0) {
                    x = xp;
                    hx = hp.max(hx);
                }
            }
            // keep the better of the node and the refined point; the
            // refinement cannot be trusted blindly at domain corners
            if hx >= h[m] {
                maxima.push(LocalMax { x, h: hx });
            } else {
                maxima.push(LocalMax { x: xs[m], h: h[m] });
            }
        }
    }
    maxima.sort_by(|a, b| a.x.total_cmp(&b.x));
    let global = maxima
        .iter()
        .copied()
        .max_by(|a, b| a.h.total_cmp(&b.h))
        .expect("a sampled landscape always has at least one local maximum");

    Ok(FitnessLandscape { xs, h, trace, det, maxima, global })
}

/// Newton polish of a golden-section maximum, iterating on the centered
/// difference quotient of `f`. Value comparisons go blind once the function
/// flattens into rounding noise, which caps golden-section positions near
/// 1e-7; the difference quotient stays well-conditioned a few orders
/// further down. Returns `None` when the top is flat, the curvature probe
/// is unreliable, or the iteration tries to leave its trust window; the
/// caller then keeps the unpolished point.
fn derivative_polish(f: &dyn Fn(f64) -> f64, x0: f64, lo: f64, hi: f64) -> Option<f64> {
    let d = 1e-5 * x0.abs().max(1.0);
    if x0 - 2.0 * d < lo || x0 + 2.0 * d > hi {
        return None;
    }
    let curv = (f(x0 + d) - 2.0 * f(x0) + f(x0 - d)) / (d * d);
    if !curv.is_finite() || curv >= 0.0 {
        return None;
    }
    let mut x = x0;
    for _ in 0..4 {
        let g = (f(x + d) - f(x - d)) / (2.0 * d);
        if !g.is_finite() {
            return None;
        }
        let step = g / curv;
        let next = x - step;
        if (next - x0).abs() > 2.0 * d || next < lo || next > hi {
            return None;
        }
        x = next;
        if step.abs() < 1e-12 * x.abs().max(1.0) {
            break;
        }
    }
    Some(x)
}

/// Golden-section search for a maximum of `f` on `[a, b]`, to trait
/// tolerance `tol`. Unimodal on the bracket in exact arithmetic; on a noisy
/// plateau it settles anywhere inside, which is all the callers need.
fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d);
        }
    }
    let xm = 0.5 * (a + b);
    (xm, f(xm))
}
