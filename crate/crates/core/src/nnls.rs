//! Nonnegative least squares.
//!
//! Lawson-Hanson active-set iteration: keep a passive set of columns, solve
//! the unconstrained problem restricted to it via normal equations, and move
//! columns in or out until the Karush-Kuhn-Tucker conditions hold. The
//! systems here are tiny (a handful of patches by a handful of atoms), so
//! normal equations plus a pivoted dense solve are accurate and cheap.

use crate::error::{Error, Result};
use crate::linalg::solve_dense;

/// Minimizes `|a x - b|_2` over `x >= 0`. `a` is row-major, `rows x cols`.
///
/// The result satisfies the KKT conditions for this problem: the gradient of
/// the squared residual is nonnegative on the active (zero) coordinates and
/// zero on the rest, up to rounding.
pub fn nnls(a: &[f64], rows: usize, cols: usize, b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != rows * cols {
        return Err(Error::DimensionMismatch { expected: rows * cols, got: a.len() });
    }
    if b.len() != rows {
        return Err(Error::DimensionMismatch { expected: rows, got: b.len() });
    }
    if cols == 0 {
        return Ok(Vec::new());
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        * b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let tol = 1e-12 * scale.max(1.0) * rows as f64;

    let mut x = vec![0.0f64; cols];
    let mut passive = vec![false; cols];
    // gradient of -0.5 |ax - b|^2: w = a^T (b - a x)
    let gradient = |x: &[f64]| -> Vec<f64> {
        let mut residual = b.to_vec();
        for (r, row) in residual.iter_mut().zip(a.chunks(cols)) {
            *r -= row.iter().zip(x).map(|(m, v)| m * v).sum::<f64>();
        }
        (0..cols)
            .map(|c| (0..rows).map(|r| a[r * cols + c] * residual[r]).sum())
            .collect()
    };

    // Outer loop adds at most one column per pass; the inner loop only
    // removes columns. `cols` passes suffice in exact arithmetic; the cap
    // guards against cycling from rounding.
    let max_outer = 3 * cols.max(1) + 10;
    for _ in 0..max_outer {
        let w = gradient(&x);
        let candidate = (0..cols)
            .filter(|&c| !passive[c])
            .max_by(|&p, &q| w[p].total_cmp(&w[q]));
        let t = match candidate {
            Some(t) if w[t] > tol => t,
            _ => return Ok(x),
        };
        passive[t] = true;

        loop {
            let members: Vec<usize> = (0..cols).filter(|&c| passive[c]).collect();
            let m = members.len();
            // normal equations on the passive columns
            let mut gram = vec![0.0f64; m * m];
            let mut rhs = vec![0.0f64; m];
            for (pi, &ci) in members.iter().enumerate() {
                for (pj, &cj) in members.iter().enumerate() {
                    gram[pi * m + pj] =
                        (0..rows).map(|r| a[r * cols + ci] * a[r * cols + cj]).sum();
                }
                rhs[pi] = (0..rows).map(|r| a[r * cols + ci] * b[r]).sum();
            }
            let z = solve_dense(&mut gram, &mut rhs, m).ok_or(Error::NonConvergence {
                iterations: 0,
                residual: f64::NAN,
            })?;

            if z.iter().all(|&v| v > 0.0) {
                for (pi, &c) in members.iter().enumerate() {
                    x[c] = z[pi];
                }
                break;
            }
            // step as far toward z as nonnegativity allows, then drop the
            // coordinates that hit zero
            let mut alpha = 1.0f64;
            for (pi, &c) in members.iter().enumerate() {
                if z[pi] <= 0.0 {
                    let denom = x[c] - z[pi];
                    if denom > 0.0 {
                        alpha = alpha.min(x[c] / denom);
                    }
                }
            }
            for (pi, &c) in members.iter().enumerate() {
                x[c] += alpha * (z[pi] - x[c]);
                if z[pi] <= 0.0 && x[c] <= tol.max(1e-300) {
                    x[c] = 0.0;
                    passive[c] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    let w = gradient(&x);
    let worst = (0..cols)
        .filter(|&c| !passive[c])
        .map(|c| w[c])
        .fold(0.0f64, f64::max);
    Err(Error::NonConvergence { iterations: max_outer, residual: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn residual(a: &[f64], rows: usize, cols: usize, x: &[f64], b: &[f64]) -> Vec<f64> {
        (0..rows)
            .map(|r| (0..cols).map(|c| a[r * cols + c] * x[c]).sum::<f64>() - b[r])
            .collect()
    }

    fn assert_kkt(a: &[f64], rows: usize, cols: usize, x: &[f64], b: &[f64], tol: f64) {
        let res = residual(a, rows, cols, x, b);
        for c in 0..cols {
            let g: f64 = (0..rows).map(|r| a[r * cols + c] * res[r]).sum();
            assert!(x[c] >= 0.0, "x[{c}] = {} negative", x[c]);
            // gradient must push out of the feasible set on active bounds
            assert!(g >= -tol, "active gradient {g} at column {c}");
            assert!(g.abs() * x[c] <= tol, "complementarity {g} * {} at {c}", x[c]);
        }
    }

    #[test]
    fn identity_clips_the_negative_coordinate() {
        let a = [1.0, 0.0, 0.0, 1.0];
        let x = nnls(&a, 2, 2, &[3.0, -1.0]).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-14);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn interior_solution_matches_the_unconstrained_one() {
        // [[1, 1], [1, 2]] x = (2, 3) has solution (1, 1), strictly positive
        let a = [1.0, 1.0, 1.0, 2.0];
        let x = nnls(&a, 2, 2, &[2.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn active_set_beats_sign_flipped_least_squares() {
        // unconstrained minimizer of |a x - b| is (-0.5, 1.5); the
        // constrained one clips the first coordinate
        let a = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let b = [-0.5, 1.5, 1.0];
        let x = nnls(&a, 3, 2, &b).unwrap();
        assert_eq!(x[0], 0.0);
        assert_kkt(&a, 3, 2, &x, &b, 1e-12);
    }

    #[test]
    fn recovers_consistent_nonnegative_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..200 {
            let rows = rng.gen_range(2..=6);
            let cols = rng.gen_range(1..=rows);
            let a: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(0.0..1.0)).collect();
            let x_true: Vec<f64> = (0..cols)
                .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.1..2.0) })
                .collect();
            let b: Vec<f64> = (0..rows)
                .map(|r| (0..cols).map(|c| a[r * cols + c] * x_true[c]).sum())
                .collect();
            let x = nnls(&a, rows, cols, &b).unwrap();
            let res = residual(&a, rows, cols, &x, &b);
            let norm: f64 = res.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm < 1e-8, "residual {norm} on a consistent system");
            assert_kkt(&a, rows, cols, &x, &b, 1e-8);
        }
    }

    #[test]
    fn kkt_holds_on_inconsistent_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let rows = rng.gen_range(2..=6);
            let cols = rng.gen_range(1..=6);
            let a: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..rows).map(|_| rng.gen_range(-2.0..2.0)).collect();
            match nnls(&a, rows, cols, &b) {
                Ok(x) => assert_kkt(&a, rows, cols, &x, &b, 1e-7),
                // random singular passive sets may legitimately refuse
                Err(Error::NonConvergence { .. }) => {}
                Err(other) => panic!("unexpected error {other:?}"),
            }
        }
    }

    #[test]
    fn rejects_shape_mismatches() {
        assert!(nnls(&[1.0, 2.0], 2, 2, &[1.0, 1.0]).is_err());
        assert!(nnls(&[1.0, 2.0, 3.0, 4.0], 2, 2, &[1.0]).is_err());
        assert_eq!(nnls(&[], 2, 0, &[1.0, 1.0]).unwrap(), Vec::<f64>::new());
    }
}
