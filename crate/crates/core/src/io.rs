//! File formats: binary field dumps and the CSV/JSON plotting handoff.
//!
//! Field dump layout: ASCII header of `key=value` lines starting with
//! `confocal-field v1` and ending with `end_header`, followed by the samples as
//! little-endian f64 pairs `(re, im)` in x-fastest order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::analysis::{DefocusCurve, NaSweepTable, SampleObject, ShiftPower};
use crate::debye::FieldGrid;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, Lattice};
use crate::otf::OtfStack;
use crate::regions::RegionMask;

const FIELD_MAGIC: &str = "confocal-field v1";
const END_HEADER: &str = "end_header";

pub fn write_field<W: Write>(field: &FieldGrid, mut out: W) -> Result<()> {
    let s = &field.spec;
    let [nx, ny, nz] = field.lattice().dims;
    writeln!(out, "{FIELD_MAGIC}")?;
    for (k, v) in [
        ("extent_x", s.extent_x),
        ("extent_y", s.extent_y),
        ("extent_z", s.extent_z),
        ("step_x", s.step_x),
        ("step_y", s.step_y),
        ("step_z", s.step_z),
    ] {
        writeln!(out, "{k}={v:?}")?;
    }
    writeln!(out, "nx={nx}\nny={ny}\nnz={nz}\n{END_HEADER}")?;
    let mut buf = Vec::with_capacity(field.samples().len() * 16);
    for u in field.samples() {
        buf.extend_from_slice(&u.re.to_le_bytes());
        buf.extend_from_slice(&u.im.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_field<R: Read>(input: R) -> Result<FieldGrid> {
    let mut reader = BufReader::new(input);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim_end() != FIELD_MAGIC {
        return Err(Error::Format("not a field dump".into()));
    }
    let mut keys = std::collections::HashMap::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(Error::Format("missing end_header".into()));
        }
        let l = line.trim_end();
        if l == END_HEADER {
            break;
        }
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header line {l:?}")))?;
        keys.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| -> Result<f64> {
        keys.get(k)
            .ok_or_else(|| Error::Format(format!("missing header key {k}")))?
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("{k}: {e}")))
    };
    let spec = GridSpec {
        extent_x: get("extent_x")?,
        extent_y: get("extent_y")?,
        extent_z: get("extent_z")?,
        step_x: get("step_x")?,
        step_y: get("step_y")?,
        step_z: get("step_z")?,
    };
    spec.validate()?;
    let dims = spec.dims();
    for (k, d) in ["nx", "ny", "nz"].iter().zip(dims) {
        if get(k)? as usize != d {
            return Err(Error::Format(format!("{k} disagrees with the grid spec")));
        }
    }
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != spec.node_count() * 16 {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            spec.node_count() * 16,
            bytes.len()
        )));
    }
    let samples = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    FieldGrid::from_parts(spec, samples)
}

pub fn save_field(field: &FieldGrid, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_field(field, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_field(path: &Path) -> Result<FieldGrid> {
    read_field(File::open(path)?)
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

/// Writes a CSV table with a one-line header.
pub fn write_table<W: Write>(mut out: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| fmt(v)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Writes a matrix as CSV without a header; `None` cells are left empty.
pub fn write_matrix<W: Write>(mut out: W, rows: &[Vec<Option<f64>>]) -> Result<()> {
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.map(fmt).unwrap_or_default()).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn write_section<W: Write>(out: W, section: &[Vec<f64>]) -> Result<()> {
    let rows: Vec<Vec<Option<f64>>> = section.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect();
    write_matrix(out, &rows)
}

pub fn write_power_vs_shift<W: Write>(out: W, rows: &[ShiftPower]) -> Result<()> {
    let data: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| vec![r.shift.x, r.shift.y, r.focal_power, r.oof_power])
        .collect();
    write_table(
        out,
        &["shift_x_wavelengths", "shift_y_wavelengths", "focal_power", "out_of_focus_power"],
        &data,
    )
}

pub fn write_defocus_curve<W: Write>(out: W, curve: &DefocusCurve) -> Result<()> {
    let data: Vec<Vec<f64>> = (0..curve.depths.len())
        .map(|i| {
            vec![
                curve.depths[i],
                curve.conventional[i],
                curve.computational[i],
                curve.ratio[i].unwrap_or(f64::NAN),
            ]
        })
        .collect();
    write_table(
        out,
        &["z_wavelengths", "conventional_sum", "computational_abs_sum", "normalized_ratio"],
        &data,
    )
}

pub fn write_na_sweep<W: Write>(mut out: W, table: &NaSweepTable) -> Result<()> {
    let mut header = vec!["half_angle_degrees".to_string(), "numerical_aperture".to_string()];
    header.extend(table.policies.iter().map(|p| format!("improvement_{}", p.label())));
    writeln!(out, "{}", header.join(","))?;
    for (a, row) in table.half_angles_deg.iter().zip(&table.improvement) {
        let mut cells = vec![fmt(*a), fmt(a.to_radians().sin())];
        cells.extend(row.iter().map(|&v| fmt(v)));
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// One row per node: x, y, z and a value.
pub fn write_node_values<W: Write>(out: W, lattice: &Lattice, value_name: &str, values: &[f64]) -> Result<()> {
    let rows: Vec<Vec<f64>> = (0..lattice.len())
        .map(|i| {
            let [x, y, z] = lattice.position(i);
            vec![x, y, z, values[i]]
        })
        .collect();
    write_table(out, &["x_wavelengths", "y_wavelengths", "z_wavelengths", value_name], &rows)
}

pub fn write_mask<W: Write>(out: W, mask: &RegionMask) -> Result<()> {
    write_node_values(out, &mask.lattice, "focal", &mask.f())
}

#[derive(Serialize)]
struct StackSidecar<'a> {
    dims: [usize; 3],
    step_wavelengths: [f64; 3],
    channels: &'a [crate::otf::Channel],
    files: Vec<String>,
}

/// Writes one CSV per channel plus a JSON sidecar listing channels in
/// column order. Returns the paths written.
pub fn export_stack(stack: &OtfStack, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut names = Vec::new();
    for n in 0..stack.channel_count() {
        let name = format!("channel_{n:04}.csv");
        let path = dir.join(&name);
        let mut w = BufWriter::new(File::create(&path)?);
        write_node_values(&mut w, &stack.lattice, "otf", stack.column(n))?;
        w.flush()?;
        names.push(name);
        written.push(path);
    }
    let sidecar = StackSidecar {
        dims: stack.lattice.dims,
        step_wavelengths: stack.lattice.step,
        channels: &stack.channels,
        files: names,
    };
    let path = dir.join("stack.json");
    std::fs::write(&path, serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Format(e.to_string()))?)?;
    written.push(path);
    Ok(written)
}

/// Reads an object as `x,y,z,intensity` rows (header optional). Listed
/// positions must be grid nodes; unlisted nodes are zero.
pub fn read_object<R: Read>(input: R, lattice: Lattice) -> Result<SampleObject> {
    let mut intensity = vec![0.0; lattice.len()];
    for (ln, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = cells.iter().map(|c| c.parse::<f64>()).collect();
        let Ok(v) = parsed else {
            if ln == 0 {
                continue;
            }
            return Err(Error::Format(format!("line {}: not numeric", ln + 1)));
        };
        if v.len() != 4 {
            return Err(Error::Format(format!("line {}: expected 4 columns", ln + 1)));
        }
        let mut idx = [0usize; 3];
        for axis in 0..3 {
            let steps = if lattice.dims[axis] == 1 && v[axis] == 0.0 {
                0
            } else {
                lattice.steps_for(axis, v[axis])?
            };
            let i = steps + (lattice.dims[axis] / 2) as isize;
            if i < 0 || i >= lattice.dims[axis] as isize {
                return Err(Error::Format(format!("line {}: position off the grid", ln + 1)));
            }
            idx[axis] = i as usize;
        }
        intensity[lattice.index(idx[0], idx[1], idx[2])] += v[3];
    }
    SampleObject::new(lattice, intensity)
}
