//! CSV and JSON artifacts. Every file is written whole, never appended.
//!
//! Schemas:
//! - timeseries.csv: t, l2_u, l2_v, max_u, max_v
//! - snapshots.csv: t, x, u, v
//! - regions.csv: d1, d2, region, H2, H3, H5, H6
//! - eigen.csv: x, phi
//!
//! Floats carry 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::bifurcation::RegionReport;
use crate::error::Result;
use crate::grid::Field;
use crate::simulator::SimulationResult;

pub const TIMESERIES_HEADER: &str = "t,l2_u,l2_v,max_u,max_v";
pub const SNAPSHOTS_HEADER: &str = "t,x,u,v";
pub const REGIONS_HEADER: &str = "d1,d2,region,H2,H3,H5,H6";
pub const EIGEN_HEADER: &str = "x,phi";

/// Scientific notation with 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn row(out: &mut impl Write, cells: &[String]) -> std::io::Result<()> {
    writeln!(out, "{}", cells.join(","))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_timeseries(out: &mut impl Write, r: &SimulationResult) -> Result<()> {
    writeln!(out, "{TIMESERIES_HEADER}")?;
    for k in 0..r.times.len() {
        row(
            out,
            &[num(r.times[k]), num(r.l2_u[k]), num(r.l2_v[k]), num(r.max_u[k]), num(r.max_v[k])],
        )?;
    }
    Ok(())
}

pub fn write_snapshots(out: &mut impl Write, r: &SimulationResult) -> Result<()> {
    writeln!(out, "{SNAPSHOTS_HEADER}")?;
    for s in &r.snapshots {
        for (j, &x) in r.x.iter().enumerate() {
            row(out, &[num(s.t), num(x), num(s.u[j]), num(s.v[j])])?;
        }
    }
    Ok(())
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

/// Points on a boundary line get the label `boundary`.
pub fn write_regions(out: &mut impl Write, reports: &[RegionReport]) -> Result<()> {
    writeln!(out, "{REGIONS_HEADER}")?;
    for r in reports {
        let label = r.region.map_or("boundary", |g| g.label());
        row(
            out,
            &[
                num(r.d1),
                num(r.d2),
                label.to_string(),
                flag(r.flags.h2),
                flag(r.flags.h3),
                flag(r.flags.h5),
                flag(r.flags.h6),
            ],
        )?;
    }
    Ok(())
}

pub fn write_eigen(out: &mut impl Write, phi: &Field) -> Result<()> {
    writeln!(out, "{EIGEN_HEADER}")?;
    let g = phi.grid();
    for (j, &p) in phi.values().iter().enumerate() {
        row(out, &[num(g.x(j + 1)), num(p)])?;
    }
    Ok(())
}

pub fn save_timeseries(path: &Path, r: &SimulationResult) -> Result<()> {
    let mut f = create(path)?;
    write_timeseries(&mut f, r)?;
    Ok(f.flush()?)
}

pub fn save_snapshots(path: &Path, r: &SimulationResult) -> Result<()> {
    let mut f = create(path)?;
    write_snapshots(&mut f, r)?;
    Ok(f.flush()?)
}

pub fn save_regions(path: &Path, reports: &[RegionReport]) -> Result<()> {
    let mut f = create(path)?;
    write_regions(&mut f, reports)?;
    Ok(f.flush()?)
}

pub fn save_eigen(path: &Path, phi: &Field) -> Result<()> {
    let mut f = create(path)?;
    write_eigen(&mut f, phi)?;
    Ok(f.flush()?)
}

pub fn save_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(f.flush()?)
}
