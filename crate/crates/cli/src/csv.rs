//! CSV writers for run artifacts and diagnostic reports. All files use LF
//! line endings and the shortest round-trip decimal form of every float,
//! so identical inputs produce byte-identical files.

use paroc_core::diagnostics::{AmplitudeStudy, ConvergenceReport, GradientCheckReport};
use paroc_core::grid::{BoundaryField, Field, Grid};
use paroc_core::msa::IterationRecord;
use std::fs::File;
use std::io::{BufWriter, Result, Write};
use std::path::Path;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_history(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "iter,J,dJ,du_norm_sq,dv_norm_sq,max_state,max_adjoint")?;
    for r in history {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.index, r.cost, r.delta_cost, r.du_norm_sq, r.dv_norm_sq, r.max_state, r.max_adjoint
        )?;
    }
    w.flush()
}

/// One spatial slice of a field: `x,y,value` rows, `y` fastest.
pub fn write_state_slice(path: &Path, field: &Field, level: usize, g: &Grid) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "x,y,value")?;
    let slice = field.level(level);
    for i in 0..=g.nx() {
        for j in 0..=g.ny() {
            writeln!(w, "{},{},{}", g.x(i), g.y(j), slice[i * (g.ny() + 1) + j])?;
        }
    }
    w.flush()
}

/// A full space-time field: `x,y,t,value` rows, time outermost.
pub fn write_space_time(path: &Path, field: &Field, g: &Grid) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "x,y,t,value")?;
    for n in 0..g.n_levels() {
        let t = g.t(n);
        let slice = field.level(n);
        for i in 0..=g.nx() {
            for j in 0..=g.ny() {
                writeln!(
                    w,
                    "{},{},{},{}",
                    g.x(i),
                    g.y(j),
                    t,
                    slice[i * (g.ny() + 1) + j]
                )?;
            }
        }
    }
    w.flush()
}

/// A boundary field over time: `s,t,value` rows with `s` the arclength
/// coordinate along the boundary traversal, time outermost.
pub fn write_boundary(path: &Path, field: &BoundaryField, g: &Grid) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "s,t,value")?;
    for n in 0..g.n_levels() {
        let t = g.t(n);
        let slice = field.level(n);
        for (k, val) in slice.iter().enumerate() {
            writeln!(w, "{},{},{}", g.boundary_arclength(k), t, val)?;
        }
    }
    w.flush()
}

pub struct SweepRow {
    pub rho: f64,
    pub terminated_by: &'static str,
    pub iterations: usize,
    pub final_j: f64,
    pub fraction_of_descent_steps: f64,
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(
        w,
        "rho,terminated_by,iterations,final_J,fraction_of_descent_steps"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.rho, r.terminated_by, r.iterations, r.final_j, r.fraction_of_descent_steps
        )?;
    }
    w.flush()
}

pub fn write_gradient(path: &Path, report: &GradientCheckReport) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "direction,adjoint_side,fd_side,rel_error")?;
    for (k, c) in report.directions.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{}",
            k + 1,
            c.adjoint_side,
            c.fd_side,
            c.rel_error
        )?;
    }
    w.flush()
}

pub fn write_amplitude(path: &Path, study: &AmplitudeStudy) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "amplitude,max_ratio,median_ratio")?;
    for row in &study.rows {
        writeln!(
            w,
            "{},{},{}",
            row.amplitude, row.max_ratio, row.median_ratio
        )?;
    }
    w.flush()
}

pub fn write_convergence(
    path: &Path,
    spatial: &ConvergenceReport,
    temporal: &ConvergenceReport,
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "axis,nx,nt,step,rel_error,observed_order")?;
    for (name, report) in [("spatial", spatial), ("temporal", temporal)] {
        for (k, level) in report.levels.iter().enumerate() {
            let order = if k == 0 {
                String::new()
            } else {
                format!("{}", report.observed_orders[k - 1])
            };
            writeln!(
                w,
                "{},{},{},{},{},{}",
                name, level.nx, level.nt, level.step, level.rel_error, order
            )?;
        }
    }
    w.flush()
}
