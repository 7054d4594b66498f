//! CSV writers.
//!
//! Floats are written with the default shortest-roundtrip formatting, so a
//! written file parses back to the exact same bits and identical inputs
//! produce byte-identical files. Free-text fields are double-quoted.
//! Summary metadata rides along as `#`-prefixed comment lines.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::asymptotic::{AsymptoticSolution, ConstraintReport, SolveStatus};
use crate::concentration::ComparisonReport;
use crate::error::Result;
use crate::hamiltonian::FitnessLandscape;
use crate::pde::{DensityState, TimeSeries};

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// `x,H` rows, plus trace and determinant columns when the landscape
/// carries them (two patches).
pub fn write_landscape(path: &Path, ls: &FitnessLandscape) -> Result<()> {
    let mut out = String::new();
    match (ls.trace_values(), ls.det_values()) {
        (Some(tr), Some(det)) => {
            out.push_str("x,H,F,G\n");
            for (((x, h), f), g) in ls.grid().iter().zip(ls.h_values()).zip(tr).zip(det) {
                writeln!(out, "{x},{h},{f},{g}").unwrap();
            }
        }
        _ => {
            out.push_str("x,H\n");
            for (x, h) in ls.grid().iter().zip(ls.h_values()) {
                writeln!(out, "{x},{h}").unwrap();
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// `tau,I_1,...,I_K` rows.
pub fn write_timeseries(path: &Path, series: &TimeSeries) -> Result<()> {
    let k = series.pressures.first().map_or(0, |row| row.len());
    let mut out = String::from("tau");
    for i in 1..=k {
        write!(out, ",I_{i}").unwrap();
    }
    out.push('\n');
    for (tau, row) in series.tau.iter().zip(&series.pressures) {
        write!(out, "{tau}").unwrap();
        for v in row {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// `x,n_1,...,n_K` rows on the simulation grid.
pub fn write_profiles(path: &Path, state: &DensityState) -> Result<()> {
    let k = state.patches();
    let mut out = String::from("x");
    for i in 1..=k {
        write!(out, ",n_{i}").unwrap();
    }
    out.push('\n');
    for m in 0..state.grid().len() {
        write!(out, "{}", state.grid().node(m)).unwrap();
        for i in 0..k {
            write!(out, ",{}", state.density(i)[m]).unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn status_str(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Converged => "converged",
        SolveStatus::Degenerate => "degenerate",
        SolveStatus::MaxIterations => "max-iterations",
    }
}

/// Atom table `atom,x,scale,rho_1,...,rho_K`, preceded by a comment block
/// with status, pressures, and residuals.
pub fn write_solution(path: &Path, sol: &AsymptoticSolution) -> Result<()> {
    let k = sol.weights.len();
    let mut out = String::new();
    writeln!(out, "# status: {}", status_str(sol.status)).unwrap();
    writeln!(out, "# iterations: {}", sol.iterations).unwrap();
    write!(out, "# pressures:").unwrap();
    for v in sol.pressures.iter() {
        write!(out, " {v}").unwrap();
    }
    out.push('\n');
    writeln!(
        out,
        "# residuals: max_h={} normalization={} rho_consistency={}",
        sol.residuals.max_h, sol.residuals.normalization, sol.residuals.rho_consistency
    )
    .unwrap();
    out.push_str("atom,x,scale");
    for i in 1..=k {
        write!(out, ",rho_{i}").unwrap();
    }
    out.push('\n');
    for (j, (x, s)) in sol.points.iter().zip(&sol.scales).enumerate() {
        write!(out, "{},{x},{s}", j + 1).unwrap();
        for i in 0..k {
            write!(out, ",{}", sol.weights[i][j]).unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// `id,pass,value,threshold,detail` rows.
pub fn write_constraints(path: &Path, report: &ConstraintReport) -> Result<()> {
    let mut out = String::from("id,pass,value,threshold,detail\n");
    for c in &report.checks {
        writeln!(out, "{},{},{},{},{}", c.id, c.pass, c.value, c.threshold, quote(&c.detail))
            .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

/// One row of verdict numbers, then the per-atom detail lines as comments.
pub fn write_comparison(path: &Path, report: &ComparisonReport) -> Result<()> {
    let mut out = String::from("pass,count_match,worst_position,worst_mass,worst_pressure\n");
    writeln!(
        out,
        "{},{},{},{},{}",
        report.pass,
        report.count_match,
        report.worst_position,
        report.worst_mass,
        report.worst_pressure
    )
    .unwrap();
    for line in &report.details {
        writeln!(out, "# {line}").unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}
