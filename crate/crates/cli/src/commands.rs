//! Stage implementations behind each subcommand.

use std::io::Write;

use confocal_core::analysis::{
    apply_cotf_to_object, coefficient_grid, defocus_curve, na_sweep, power_vs_shift, two_plane_contrast,
    xz_section, SampleObject,
};
use confocal_core::debye::radial_profile;
use confocal_core::io::{
    export_stack, read_object, write_defocus_curve, write_matrix, write_na_sweep, write_power_vs_shift,
    write_section, write_table,
};
use confocal_core::optimizer::CombinationResult;
use confocal_core::otf::{line_otf, point_otf, OtfStack, ScanKind, Shift};
use confocal_core::pipeline::Prepared;
use serde::Serialize;

use crate::config::ObjectKind;
use crate::error::CliError;
use crate::session::Session;

/// Loose "does not change much with aperture" bound, reported but not enforced.
const NA_SPREAD_BOUND: f64 = 0.5;

fn prepare(session: &mut Session) -> Result<Prepared, CliError> {
    let pipeline = session.config.pipeline();
    let field = session.field()?;
    Ok(pipeline.prepare(field)?)
}

fn solve(session: &mut Session) -> Result<(Prepared, Vec<CombinationResult>), CliError> {
    let prepared = prepare(session)?;
    let results = prepared.solve_all(&session.config.policies())?;
    Ok((prepared, results))
}

/// Shifts `0, step, 2·step, …` up to `max` along x.
fn shifts_along_x(step: f64, max: f64) -> Vec<f64> {
    let n = (max / step + 1e-9).floor() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

fn peak_normalized(values: &[f64]) -> Vec<f64> {
    let peak = values.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        values.iter().map(|v| v / peak).collect()
    } else {
        values.to_vec()
    }
}

pub fn field(session: &mut Session) -> Result<(), CliError> {
    session.begin("field");
    let path = session.emit_field()?;
    let profile = radial_profile(session.field()?, 0.0)?;
    let rows: Vec<Vec<f64>> = profile.iter().map(|&(r, i)| vec![r, i]).collect();
    session.emit("radial_profile_z0.csv", |w| {
        write_table(w, &["radius_wavelengths", "mean_intensity"], &rows)
    })?;
    println!("field: {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct StackSummary<'a> {
    kind: ScanKind,
    nodes: usize,
    channels: usize,
    mask_radii_wavelengths: confocal_core::regions::LobeRadii,
    mask_target_depth_wavelengths: f64,
    focal_nodes: usize,
    column_sums: Vec<f64>,
    channel_list: &'a [confocal_core::otf::Channel],
}

pub fn otfs(session: &mut Session) -> Result<(), CliError> {
    session.begin("otfs");
    let prepared = prepare(session)?;
    let stack = &prepared.stack;
    let summary = StackSummary {
        kind: session.config.scan_geometry().kind,
        nodes: stack.node_count(),
        channels: stack.channel_count(),
        mask_radii_wavelengths: prepared.mask.radii,
        mask_target_depth_wavelengths: prepared.mask.target_depth,
        focal_nodes: prepared.mask.focal_count(),
        column_sums: stack.column_sums(),
        channel_list: &stack.channels,
    };
    session.emit("stack.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &summary)
            .map_err(|e| confocal_core::Error::Format(e.to_string()))?;
        Ok(writeln!(w)?)
    })?;

    let is_line = session.config.scan_geometry().is_line();
    for dx in session.config.analysis.section_shifts_wavelengths.clone() {
        let field = session.field()?;
        let otf = if is_line { line_otf(field, dx)? } else { point_otf(field, Shift::along_x(dx))? };
        let section = xz_section(&otf.lattice, &peak_normalized(&otf.values));
        session.emit(&format!("otf_xz_dx{dx}.csv"), |w| write_section(w, &section))?;
    }
    let mask_section = xz_section(&prepared.mask.lattice, &prepared.mask.f());
    session.emit("mask_xz.csv", |w| write_section(w, &mask_section))?;

    if session.config.output.export_stack_csv {
        let written = export_stack(stack, &session.out_dir().join("stack"))?;
        session.record(written);
    }
    println!("otfs: {} channels over {} nodes", stack.channel_count(), stack.node_count());
    Ok(())
}

fn write_coefficients(session: &mut Session, stack: &OtfStack, r: &CombinationResult) -> Result<(), CliError> {
    let name = format!("coefficients_{}.csv", r.policy.label());
    match session.config.scan_geometry().kind {
        ScanKind::PointArray => {
            let grid = coefficient_grid(r, &stack.channels);
            session.emit(&name, |w| write_matrix(w, &grid))?;
        }
        ScanKind::LineArray | ScanKind::LineCrossShift => {
            let mut rows: Vec<Vec<f64>> = stack
                .channels
                .iter()
                .zip(&r.coefficients)
                .map(|(c, &v)| vec![c.illumination.x, c.detector.x, v])
                .collect();
            rows.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
            session.emit(&name, |w| {
                write_table(w, &["illumination_x_wavelengths", "detector_x_wavelengths", "coefficient"], &rows)
            })?;
        }
    }
    Ok(())
}

pub fn optimize(session: &mut Session) -> Result<(), CliError> {
    session.begin("optimize");
    let (prepared, results) = solve(session)?;
    let stack = &prepared.stack;
    let lattice = stack.lattice;

    let conventional = xz_section(&lattice, &peak_normalized(stack.column(0)));
    session.emit("conventional_xz.csv", |w| write_section(w, &conventional))?;

    let mut sweep = String::from("policy,threshold_db,rank_used,objective,conventional_objective,improvement_factor\n");
    for r in &results {
        let label = r.policy.label();
        let json = serde_json::to_string_pretty(r).map_err(|e| CliError::Config(e.to_string()))?;
        session.emit(&format!("result_{label}.json"), |w| Ok(writeln!(w, "{json}")?))?;
        write_coefficients(session, stack, r)?;
        let peak = r.cotf.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scaled: Vec<f64> = r.cotf.iter().map(|v| if peak > 0.0 { v / peak } else { 0.0 }).collect();
        let section = xz_section(&lattice, &scaled);
        session.emit(&format!("cotf_xz_{label}.csv"), |w| write_section(w, &section))?;
        sweep.push_str(&format!(
            "{label},{},{},{:?},{:?},{:?}\n",
            r.policy.threshold_db.map(|t| format!("{t:?}")).unwrap_or_default(),
            r.rank_used,
            r.objective,
            r.conventional_objective,
            r.improvement_factor
        ));
        let note = if r.below_conventional { " (below conventional)" } else { "" };
        println!("optimize {label}: improvement {:.4} rank {}{note}", r.improvement_factor, r.rank_used);
    }
    session.emit("truncation_sweep.csv", |w| Ok(w.write_all(sweep.as_bytes())?))?;
    Ok(())
}

fn builtin_object(kind: ObjectKind, session: &Session, lattice: confocal_core::grid::Lattice) -> Result<SampleObject, CliError> {
    Ok(match kind {
        ObjectKind::Point => SampleObject::point(lattice),
        ObjectKind::Uniform => SampleObject::uniform(lattice),
        ObjectKind::TwoPlane => {
            SampleObject::two_plane(lattice, session.config.analysis.two_plane_separation_wavelengths)?
        }
    })
}

pub fn analyze(session: &mut Session) -> Result<(), CliError> {
    session.begin("analyze");
    let (prepared, results) = solve(session)?;
    let stack = &prepared.stack;
    let lattice = stack.lattice;
    let cfg = session.config.analysis.clone();
    let geometry = session.config.scan_geometry();

    if geometry.kind == ScanKind::PointArray {
        let shifts: Vec<Shift> = shifts_along_x(lattice.step[0], cfg.max_shift_wavelengths.min(lattice.half_width(0)))
            .into_iter()
            .map(Shift::along_x)
            .collect();
        let rows = power_vs_shift(session.field()?, &prepared.mask, &shifts)?;
        session.emit("power_vs_shift.csv", |w| write_power_vs_shift(w, &rows))?;
    }

    let reference = stack.conventional();
    for r in &results {
        let curve = defocus_curve(&reference, &r.cotf)?;
        session.emit(&format!("defocus_{}.csv", r.policy.label()), |w| write_defocus_curve(w, &curve))?;
    }

    // Object images: the conventional channel followed by each policy.
    let mut xs: Vec<f64> = shifts_along_x(lattice.step[0], cfg.scan_extent_wavelengths.min(lattice.half_width(0)))
        .into_iter()
        .flat_map(|x| if x > 0.0 { vec![-x, x] } else { vec![x] })
        .collect();
    xs.sort_by(f64::total_cmp);
    let scan: Vec<Shift> = xs.into_iter().map(Shift::along_x).collect();
    let mut estimates: Vec<(String, &[f64])> = vec![("conventional".to_string(), stack.column(0))];
    estimates.extend(results.iter().map(|r| (r.policy.label(), r.cotf.as_slice())));
    let header: Vec<String> = std::iter::once("scan_x_wavelengths".to_string())
        .chain(estimates.iter().map(|(l, _)| l.clone()))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();

    let mut objects: Vec<(String, SampleObject)> = Vec::new();
    for &kind in &cfg.objects {
        let name = serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        objects.push((name, builtin_object(kind, session, lattice)?));
    }
    if let Some(path) = &cfg.object_csv {
        let file = std::fs::File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let object = read_object(file, lattice).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        objects.push(("custom".to_string(), object));
    }
    for (name, object) in &objects {
        let mut columns = Vec::with_capacity(estimates.len());
        for (_, cotf) in &estimates {
            columns.push(apply_cotf_to_object(object, cotf, &scan)?);
        }
        let rows: Vec<Vec<f64>> = scan
            .iter()
            .enumerate()
            .map(|(i, s)| std::iter::once(s.x).chain(columns.iter().map(|c| c[i])).collect())
            .collect();
        session.emit(&format!("image_{name}.csv"), |w| write_table(w, &header, &rows))?;
    }

    let mut contrast = String::from("estimate,focal_plane_fraction\n");
    for (label, cotf) in &estimates {
        let c = two_plane_contrast(lattice, cotf, cfg.two_plane_separation_wavelengths)?;
        contrast.push_str(&format!("{label},{c:?}\n"));
    }
    session.emit("two_plane_contrast.csv", |w| Ok(w.write_all(contrast.as_bytes())?))?;
    println!("analyze: {} policies, {} objects", results.len(), objects.len());
    Ok(())
}

pub fn sweep(session: &mut Session) -> Result<(), CliError> {
    session.begin("sweep");
    let angles = session.config.sweep.half_angles_degrees.clone();
    if angles.is_empty() {
        return Err(CliError::Config("sweep.half_angles_degrees: must not be empty".into()));
    }
    let policies = session.config.policies();
    let table = na_sweep(&angles, &session.config.pipeline(), &policies)?;
    session.emit("na_sweep.csv", |w| write_na_sweep(w, &table))?;
    let mut spread = String::from("policy,relative_spread,loose_bound,within_loose_bound\n");
    for (i, p) in policies.iter().enumerate() {
        let s = table.relative_spread(i);
        spread.push_str(&format!("{},{s:?},{NA_SPREAD_BOUND:?},{}\n", p.label(), s < NA_SPREAD_BOUND));
        println!("sweep {}: relative spread {s:.3} (loose bound {NA_SPREAD_BOUND})", p.label());
    }
    session.emit("na_sweep_spread.csv", |w| Ok(w.write_all(spread.as_bytes())?))?;
    Ok(())
}
