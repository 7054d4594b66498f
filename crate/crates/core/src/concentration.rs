//! Concentration diagnostics: from a simulated density to an empirical set
//! of atoms, and from there to a verdict against the algebraic limit.
//!
//! The Hopf-Cole transform `u = eps ln n` is the natural magnifier: as the
//! mutation variance shrinks, `u` stays O(1) while `n` degenerates, the
//! constraint `max_x u = 0` marks saturation, and the spread of `u` across
//! patches measures how tightly migration couples them.

use crate::asymptotic::AsymptoticSolution;
use crate::error::{Error, Result};
use crate::model::PressureVector;
use crate::pde::{DensityState, GridSpec};

/// `u^i = eps ln n^i` on the simulation grid.
///
/// Densities are floored at `1e-300 * max(1, sup n)` before taking the
/// logarithm, so exact zeros map to a large negative plateau instead of
/// minus infinity.
#[derive(Clone, Debug)]
pub struct HopfColeProfile {
    grid: GridSpec,
    u: Vec<Vec<f64>>,
    epsilon: f64,
}

/// Summary numbers of one profile.
#[derive(Clone, Debug)]
pub struct ProfileDiagnostics {
    /// `max_x u^i` per patch. Zero (to O(eps)) at a saturated steady state.
    pub max_u: Vec<f64>,
    /// Worst `sup_x |u^i - u^j|` over patch pairs, within the requested
    /// window.
    pub coupling_gap: f64,
    /// Smallest centered second difference of `u^i`, per patch. Bounded
    /// below uniformly in eps when the profile stays semiconvex.
    pub min_curvature: Vec<f64>,
}

impl HopfColeProfile {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn patches(&self) -> usize {
        self.u.len()
    }

    pub fn u(&self, patch: usize) -> &[f64] {
        &self.u[patch]
    }

    /// Diagnostics, with the coupling gap restricted to `window` when given.
    pub fn diagnostics(&self, window: Option<(f64, f64)>) -> ProfileDiagnostics {
        let max_u = self
            .u
            .iter()
            .map(|u| u.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        ProfileDiagnostics {
            max_u,
            coupling_gap: patch_coupling_gap(self, window),
            min_curvature: semiconvexity_deficit(self),
        }
    }
}

/// Hopf-Cole transform of a density state.
pub fn hopf_cole(state: &DensityState, epsilon: f64) -> Result<HopfColeProfile> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let u = state
        .densities()
        .iter()
        .map(|n| {
            let sup = n.iter().copied().fold(0.0f64, f64::max);
            let floor = 1e-300 * sup.max(1.0);
            n.iter().map(|&v| epsilon * v.max(floor).ln()).collect()
        })
        .collect();
    Ok(HopfColeProfile { grid: state.grid().clone(), u, epsilon })
}

/// Worst `sup_x |u^i - u^j|` over patch pairs. With `window = (a, b)` only
/// nodes inside `[a, b]` count, which keeps floored far tails out of the
/// comparison.
pub fn patch_coupling_gap(profile: &HopfColeProfile, window: Option<(f64, f64)>) -> f64 {
    let k = profile.u.len();
    let grid = &profile.grid;
    let mut worst = 0.0f64;
    for i in 0..k {
        for j in i + 1..k {
            for m in 0..grid.len() {
                let x = grid.node(m);
                if let Some((a, b)) = window {
                    if x < a || x > b {
                        continue;
                    }
                }
                worst = worst.max((profile.u[i][m] - profile.u[j][m]).abs());
            }
        }
    }
    worst
}

/// Smallest centered second difference `(u_{m-1} - 2 u_m + u_{m+1}) / h^2`
/// per patch: the discrete check that `u` does not develop downward kinks.
pub fn semiconvexity_deficit(profile: &HopfColeProfile) -> Vec<f64> {
    let h = profile.grid.spacing();
    profile
        .u
        .iter()
        .map(|u| {
            let mut min_d2 = f64::INFINITY;
            for m in 1..u.len() - 1 {
                let d2 = (u[m - 1] - 2.0 * u[m] + u[m + 1]) / (h * h);
                min_d2 = min_d2.min(d2);
            }
            min_d2
        })
        .collect()
}

/// One empirical atom: basin-integrated mass around a density peak.
#[derive(Clone, Copy, Debug)]
pub struct Atom {
    pub x: f64,
    pub mass: f64,
    /// The peak was too flat for parabolic refinement; `x` is the raw node.
    pub flat: bool,
}

#[derive(Clone, Debug, Default)]
pub struct PatchAtoms {
    /// Ascending in `x`.
    pub atoms: Vec<Atom>,
}

#[derive(Clone, Debug)]
pub struct EmpiricalAtoms {
    pub patches: Vec<PatchAtoms>,
    /// The relative peak threshold that was applied.
    pub threshold: f64,
}

/// Finds the atoms of a (near-)steady density: local maxima above
/// `rel_threshold * sup n`, each credited with the trapezoidal mass of its
/// basin (watershed at the minima between neighboring peaks, so the basin
/// masses of one patch sum to its total mass). Peak positions are refined
/// by the vertex of the log-density parabola through the three nodes
/// around the maximum.
pub fn extract_diracs(state: &DensityState, rel_threshold: f64) -> Result<EmpiricalAtoms> {
    if !(rel_threshold.is_finite() && rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(Error::Invalid(format!(
            "relative peak threshold must lie in (0, 1), got {rel_threshold}"
        )));
    }
    let grid = state.grid();
    let n = grid.len();
    let h = grid.spacing();
    let mut patches = Vec::with_capacity(state.patches());
    for p in 0..state.patches() {
        let d = state.density(p);
        let sup = d.iter().copied().fold(0.0f64, f64::max);
        let mut atoms = Vec::new();
        if sup > 0.0 {
            let cut = rel_threshold * sup;
            // local maxima, with plateaus credited once (to their left edge)
            let peaks: Vec<usize> = (0..n)
                .filter(|&m| {
                    d[m] >= cut
                        && (m == 0 || d[m] > d[m - 1])
                        && (m == n - 1 || d[m] >= d[m + 1])
                })
                .collect();
            // watershed: each basin boundary is the minimum between
            // consecutive peaks; every node belongs to exactly one basin
            let mut boundaries = Vec::with_capacity(peaks.len() + 1);
            boundaries.push(0usize);
            for w in peaks.windows(2) {
                let valley = (w[0]..=w[1])
                    .min_by(|&a, &b| d[a].total_cmp(&d[b]))
                    .unwrap_or(w[0]);
                boundaries.push(valley);
            }
            boundaries.push(n - 1);
            for (idx, &m) in peaks.iter().enumerate() {
                let (a, b) = (boundaries[idx], boundaries[idx + 1]);
                // trapezoid weights of the full domain, restricted to the
                // basin; interior boundary nodes are shared half-and-half
                let mut mass = 0.0;
                for k in a..=b {
                    let mut w = if k == 0 || k == n - 1 { 0.5 * h } else { h };
                    if k == a && k != 0 {
                        w *= 0.5;
                    }
                    if k == b && k != n - 1 {
                        w *= 0.5;
                    }
                    mass += w * d[k];
                }
                let (x, flat) = refine_peak(grid, d, m);
                atoms.push(Atom { x, mass, flat });
            }
        }
        patches.push(PatchAtoms { atoms });
    }
    Ok(EmpiricalAtoms { patches, threshold: rel_threshold })
}

/// Vertex of the parabola through the log-densities at `m - 1, m, m + 1`.
/// Near-Gaussian peaks make the log exactly quadratic, so this lands on the
/// true mode even on a coarse grid.
fn refine_peak(grid: &GridSpec, d: &[f64], m: usize) -> (f64, bool) {
    let n = d.len();
    if m == 0 || m == n - 1 || d[m - 1] <= 0.0 || d[m] <= 0.0 || d[m + 1] <= 0.0 {
        return (grid.node(m), true);
    }
    let (l, c, r) = (d[m - 1].ln(), d[m].ln(), d[m + 1].ln());
    let denom = l - 2.0 * c + r;
    if denom >= -1e-12 * c.abs().max(1.0) {
        return (grid.node(m), true);
    }
    let delta = 0.5 * (l - r) / denom;
    // the true vertex of a sampled concave parabola lies within half a cell
    if delta.abs() > 0.5 {
        return (grid.node(m), true);
    }
    (grid.node(m) + delta * grid.spacing(), false)
}

/// Absolute tolerances for the simulation-versus-limit comparison.
#[derive(Clone, Copy, Debug)]
pub struct CompareTol {
    pub position: f64,
    pub mass: f64,
    pub pressure: f64,
}

impl Default for CompareTol {
    fn default() -> Self {
        CompareTol { position: 0.02, mass: 0.05, pressure: 0.05 }
    }
}

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    /// Atom counts agree in every patch.
    pub count_match: bool,
    pub worst_position: f64,
    pub worst_mass: f64,
    pub worst_pressure: f64,
    pub pass: bool,
    /// Human-readable per-atom and per-patch lines.
    pub details: Vec<String>,
}

/// Matches the empirical atoms of each patch against the algebraic
/// prediction (greedy nearest-position pairing) and compares pressures.
/// All tolerances are absolute. Predicted atoms with essentially zero mass
/// in a patch are not expected to show up there.
pub fn compare_limits(
    empirical: &EmpiricalAtoms,
    pressures: &PressureVector,
    solution: &AsymptoticSolution,
    tol: &CompareTol,
) -> Result<ComparisonReport> {
    let k = empirical.patches.len();
    if solution.weights.len() != k || pressures.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: solution.weights.len().min(pressures.len()),
        });
    }
    let mut count_match = true;
    let mut worst_position = 0.0f64;
    let mut worst_mass = 0.0f64;
    let mut worst_pressure = 0.0f64;
    let mut details = Vec::new();

    for i in 0..k {
        let predicted: Vec<(f64, f64)> = solution
            .points
            .iter()
            .zip(&solution.weights[i])
            .map(|(&x, &m)| (x, m))
            .filter(|&(_, m)| m > 1e-12)
            .collect();
        let empirical_atoms = &empirical.patches[i].atoms;
        if empirical_atoms.len() != predicted.len() {
            count_match = false;
            details.push(format!(
                "patch {}: {} empirical atoms vs {} predicted",
                i + 1,
                empirical_atoms.len(),
                predicted.len()
            ));
        }

        let mut free_e: Vec<usize> = (0..empirical_atoms.len()).collect();
        let mut free_p: Vec<usize> = (0..predicted.len()).collect();
        while !free_e.is_empty() && !free_p.is_empty() {
            let (mut best, mut be, mut bp) = (f64::INFINITY, 0, 0);
            for (ei, &e) in free_e.iter().enumerate() {
                for (pi, &p) in free_p.iter().enumerate() {
                    let dist = (empirical_atoms[e].x - predicted[p].0).abs();
                    if dist < best {
                        best = dist;
                        be = ei;
                        bp = pi;
                    }
                }
            }
            let e = free_e.remove(be);
            let p = free_p.remove(bp);
            let dx = (empirical_atoms[e].x - predicted[p].0).abs();
            let dm = (empirical_atoms[e].mass - predicted[p].1).abs();
            worst_position = worst_position.max(dx);
            worst_mass = worst_mass.max(dm);
            details.push(format!(
                "patch {}: atom {} (mass {}) vs predicted {} (mass {}): dx = {:.3e}, dm = {:.3e}",
                i + 1,
                empirical_atoms[e].x,
                empirical_atoms[e].mass,
                predicted[p].0,
                predicted[p].1,
                dx,
                dm
            ));
        }
        for &e in &free_e {
            details.push(format!(
                "patch {}: unmatched empirical atom at {} (mass {})",
                i + 1,
                empirical_atoms[e].x,
                empirical_atoms[e].mass
            ));
        }
        for &p in &free_p {
            details.push(format!(
                "patch {}: missing predicted atom at {} (mass {})",
                i + 1,
                predicted[p].0,
                predicted[p].1
            ));
        }

        let dp = (pressures[i] - solution.pressures[i]).abs();
        worst_pressure = worst_pressure.max(dp);
        details.push(format!(
            "patch {}: pressure {} vs predicted {}: dI = {:.3e}",
            i + 1,
            pressures[i],
            solution.pressures[i],
            dp
        ));
    }

    let pass = count_match
        && worst_position <= tol.position
        && worst_mass <= tol.mass
        && worst_pressure <= tol.pressure;
    Ok(ComparisonReport {
        count_match,
        worst_position,
        worst_mass,
        worst_pressure,
        pass,
        details,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotic::{Residuals, SolveStatus};
    use crate::pde::GridSpec;

    fn gaussian(grid: &GridSpec, center: f64, mass: f64, sigma: f64) -> Vec<f64> {
        let raw: Vec<f64> = (0..grid.len())
            .map(|m| {
                let z = (grid.node(m) - center) / sigma;
                (-0.5 * z * z).exp()
            })
            .collect();
        let total = grid.trapz(&raw);
        raw.into_iter().map(|v| v * mass / total).collect()
    }

    #[test]
    fn hopf_cole_round_trips_and_floors_zeros() {
        let grid = GridSpec::new(401, 2.0).unwrap();
        let eps = 0.01;
        let mut n = gaussian(&grid, 0.3, 1.5, 0.1);
        n[0] = 0.0;
        let state = DensityState::new(grid.clone(), vec![n.clone()], 0.0).unwrap();
        let profile = hopf_cole(&state, eps).unwrap();
        let u = profile.u(0);
        assert!(u.iter().all(|v| v.is_finite()));
        for m in 0..grid.len() {
            if n[m] > 1e-250 {
                let back = (u[m] / eps).exp();
                assert!(
                    (back - n[m]).abs() <= 1e-12 * n[m],
                    "round trip at node {m}: {back} vs {}",
                    n[m]
                );
            }
        }
        // the flooring keeps the zero node deep but finite
        assert!(u[0] < -5.0 && u[0].is_finite());
    }

    #[test]
    fn diagnostics_read_off_gaussian_parameters() {
        let grid = GridSpec::new(801, 2.0).unwrap();
        let eps = 0.05;
        let sigma = 0.2f64;
        let n1 = gaussian(&grid, 0.0, 1.0, sigma);
        // patch 2 is the same shape scaled by exp(delta / eps): u2 = u1 + delta
        let delta = 0.03f64;
        let n2: Vec<f64> = n1.iter().map(|v| v * (delta / eps).exp()).collect();
        let state = DensityState::new(grid.clone(), vec![n1, n2], 0.0).unwrap();
        let profile = hopf_cole(&state, eps).unwrap();
        let diag = profile.diagnostics(Some((-1.0, 1.0)));
        // gap equals the vertical shift everywhere
        assert!((diag.coupling_gap - delta).abs() < 1e-10);
        // curvature of eps * ln(gaussian) is -eps / sigma^2
        let expected = -eps / (sigma * sigma);
        assert!(
            (diag.min_curvature[0] - expected).abs() < 0.01 * expected.abs(),
            "curvature {} vs {expected}",
            diag.min_curvature[0]
        );
        // max of u sits at the mode: peak density ~ mass / (sigma sqrt(2 pi))
        let peak = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        assert!((diag.max_u[0] - eps * peak.ln()).abs() < 1e-6);
    }

    #[test]
    fn window_excludes_floored_tails_from_the_gap() {
        let grid = GridSpec::new(401, 2.0).unwrap();
        let eps = 0.01;
        let n1 = gaussian(&grid, -0.5, 1.0, 0.05);
        let mut n2 = n1.clone();
        // patch 2 carries a vanishing tail population near x = 1.8; patch 1
        // underflows to zero there, so the floors separate the logs
        for m in 375..=385 {
            n2[m] += 1e-100;
        }
        let state = DensityState::new(grid, vec![n1, n2], 0.0).unwrap();
        let profile = hopf_cole(&state, eps).unwrap();
        let full = patch_coupling_gap(&profile, None);
        let windowed = patch_coupling_gap(&profile, Some((-1.0, 0.0)));
        assert!(full > 1.0, "floor mismatch should dominate the unwindowed gap, got {full}");
        assert!(windowed < 1e-12, "windowed gap {windowed}");
    }

    #[test]
    fn extract_diracs_recovers_a_two_atom_mixture() {
        let grid = GridSpec::new(801, 2.0).unwrap();
        let n1: Vec<f64> = gaussian(&grid, -0.8660254, 1.7745, 0.04)
            .iter()
            .zip(gaussian(&grid, 0.8660254, 0.4755, 0.04))
            .map(|(a, b)| a + b)
            .collect();
        let state = DensityState::new(grid.clone(), vec![n1], 0.0).unwrap();
        let atoms = extract_diracs(&state, 0.01).unwrap();
        let got = &atoms.patches[0].atoms;
        assert_eq!(got.len(), 2);
        assert!((got[0].x + 0.8660254).abs() < 1e-4, "position {}", got[0].x);
        assert!((got[1].x - 0.8660254).abs() < 1e-4, "position {}", got[1].x);
        assert!((got[0].mass - 1.7745).abs() < 1e-3);
        assert!((got[1].mass - 0.4755).abs() < 1e-3);
        assert!(!got[0].flat && !got[1].flat);
        // basin masses partition the total
        let total: f64 = got.iter().map(|a| a.mass).sum();
        assert!((total - state.mass(0)).abs() < 1e-12);
    }

    #[test]
    fn extract_diracs_applies_the_relative_threshold() {
        let grid = GridSpec::new(801, 2.0).unwrap();
        let n: Vec<f64> = gaussian(&grid, 0.0, 1.0, 0.05)
            .iter()
            .zip(gaussian(&grid, 1.0, 0.001, 0.05))
            .map(|(a, b)| a + b)
            .collect();
        let state = DensityState::new(grid, vec![n], 0.0).unwrap();
        let atoms = extract_diracs(&state, 0.01).unwrap();
        assert_eq!(atoms.patches[0].atoms.len(), 1);
        let atoms = extract_diracs(&state, 1e-5).unwrap();
        assert_eq!(atoms.patches[0].atoms.len(), 2);
    }

    fn fake_solution() -> AsymptoticSolution {
        AsymptoticSolution {
            pressures: PressureVector::new(vec![2.25, 2.25]).unwrap(),
            points: vec![-0.8660254037844386, 0.8660254037844386],
            scales: vec![2.25, 2.25],
            weights: vec![
                vec![1.774519052838329, 0.47548094716167105],
                vec![0.47548094716167105, 1.774519052838329],
            ],
            residuals: Residuals { max_h: 0.0, normalization: 0.0, rho_consistency: 0.0 },
            status: SolveStatus::Converged,
            iterations: 0,
        }
    }

    fn empirical_from(offsets: (f64, f64), mass_shift: f64) -> EmpiricalAtoms {
        let near = 1.774519052838329 + mass_shift;
        let far = 0.47548094716167105;
        EmpiricalAtoms {
            patches: vec![
                PatchAtoms {
                    atoms: vec![
                        Atom { x: -0.8660254037844386 + offsets.0, mass: near, flat: false },
                        Atom { x: 0.8660254037844386 + offsets.1, mass: far, flat: false },
                    ],
                },
                PatchAtoms {
                    atoms: vec![
                        Atom { x: -0.8660254037844386 + offsets.0, mass: far, flat: false },
                        Atom { x: 0.8660254037844386 + offsets.1, mass: near, flat: false },
                    ],
                },
            ],
            threshold: 0.01,
        }
    }

    #[test]
    fn comparison_passes_within_tolerance_and_fails_beyond() {
        let sol = fake_solution();
        let p = PressureVector::new(vec![2.26, 2.24]).unwrap();
        let good = empirical_from((0.005, -0.003), 0.01);
        let report = compare_limits(&good, &p, &sol, &CompareTol::default()).unwrap();
        assert!(report.pass, "details: {:#?}", report.details);
        assert!(report.count_match);
        assert!((report.worst_position - 0.005).abs() < 1e-12);
        assert!((report.worst_pressure - 0.01).abs() < 1e-12);

        let shifted = empirical_from((0.1, 0.0), 0.0);
        let report = compare_limits(&shifted, &p, &sol, &CompareTol::default()).unwrap();
        assert!(!report.pass);
        assert!(report.worst_position > 0.05);

        let heavy = empirical_from((0.0, 0.0), 0.2);
        let report = compare_limits(&heavy, &p, &sol, &CompareTol::default()).unwrap();
        assert!(!report.pass);
        assert!(report.worst_mass > 0.1);
    }

    #[test]
    fn comparison_reports_count_mismatches() {
        let sol = fake_solution();
        let p = PressureVector::new(vec![2.25, 2.25]).unwrap();
        let mut emp = empirical_from((0.0, 0.0), 0.0);
        emp.patches[1].atoms.pop();
        let report = compare_limits(&emp, &p, &sol, &CompareTol::default()).unwrap();
        assert!(!report.count_match);
        assert!(!report.pass);
        assert!(report.details.iter().any(|l| l.contains("missing predicted atom")));
    }
}
