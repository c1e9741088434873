//! Derived quantities: power partition versus detector shift, defocus
//! curves, numerical-aperture sweeps and image formation on sample objects.

use serde::Serialize;

use crate::debye::{ApertureSpec, FieldGrid};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::Lattice;
use crate::optimizer::{CombinationResult, TruncationPolicy};
use crate::otf::{point_otf_from_intensity, OtfGrid, Shift};
use crate::pipeline::Pipeline;
use crate::regions::RegionMask;

/// Linear focal and out-of-focus power of one shifted-pinhole OTF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftPower {
    pub shift: Shift,
    pub focal_power: f64,
    pub oof_power: f64,
}

/// Partitions the raw detected power of each shifted pinhole into focal and
/// out-of-focus parts: `Σ f·OTF_Δ` and `Σ g·OTF_Δ`.
pub fn power_vs_shift(field: &FieldGrid, mask: &RegionMask, shifts: &[Shift]) -> Result<Vec<ShiftPower>> {
    if *field.lattice() != mask.lattice {
        return Err(Error::GridMismatch("field and mask lattices differ".into()));
    }
    let intensity = field.intensity();
    let rows = Execution::default().map(shifts.len(), |i| {
        let otf = point_otf_from_intensity(field.lattice(), &intensity, shifts[i])?;
        let mut focal = 0.0;
        let mut oof = 0.0;
        for (&v, &is_focal) in otf.values.iter().zip(mask.focal()) {
            if is_focal {
                focal += v;
            } else {
                oof += v;
            }
        }
        Ok(ShiftPower { shift: shifts[i], focal_power: focal, oof_power: oof })
    });
    rows.into_iter().collect()
}

/// Light per z plane for the conventional OTF and a computational OTF.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefocusCurve {
    pub depths: Vec<f64>,
    /// Σ OTF over each plane.
    pub conventional: Vec<f64>,
    /// Σ |COTF| over each plane.
    pub computational: Vec<f64>,
    /// Conventional over computational, each normalized to its focal-plane
    /// value. `None` where the computational sum vanishes.
    pub ratio: Vec<Option<f64>>,
}

fn plane_sums(lattice: &Lattice, values: impl Iterator<Item = f64>) -> Vec<f64> {
    let plane = lattice.dims[0] * lattice.dims[1];
    let mut sums = vec![0.0; lattice.dims[2]];
    for (i, v) in values.enumerate() {
        sums[i / plane] += v;
    }
    sums
}

pub fn defocus_curve(conventional: &OtfGrid, cotf: &[f64]) -> Result<DefocusCurve> {
    let lat = &conventional.lattice;
    if cotf.len() != lat.len() {
        return Err(Error::GridMismatch(format!(
            "COTF has {} samples, grid has {}",
            cotf.len(),
            lat.len()
        )));
    }
    let conv = plane_sums(lat, conventional.values.iter().copied());
    let comp = plane_sums(lat, cotf.iter().map(|v| v.abs()));
    let focal = lat.center()[2];
    let (conv0, comp0) = (conv[focal], comp[focal]);
    let ratio = conv
        .iter()
        .zip(&comp)
        .map(|(&a, &b)| (b > 0.0 && conv0 > 0.0).then(|| (a / conv0) / (b / comp0)))
        .collect();
    Ok(DefocusCurve {
        depths: (0..lat.dims[2]).map(|iz| lat.coord(2, iz)).collect(),
        conventional: conv,
        computational: comp,
        ratio,
    })
}

/// Improvement factors for every (half-angle, policy) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NaSweepTable {
    /// Half-angles in degrees.
    pub half_angles_deg: Vec<f64>,
    pub policies: Vec<TruncationPolicy>,
    /// `improvement[a][p]` for angle `a` and policy `p`.
    pub improvement: Vec<Vec<f64>>,
}

impl NaSweepTable {
    /// (max − min) / mean of one policy's column.
    pub fn relative_spread(&self, policy: usize) -> f64 {
        let col: Vec<f64> = self.improvement.iter().map(|row| row[policy]).collect();
        let max = col.iter().cloned().fold(f64::MIN, f64::max);
        let min = col.iter().cloned().fold(f64::MAX, f64::min);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        (max - min) / mean
    }
}

/// Runs `template` once per half-angle (in degrees), solving every policy.
pub fn na_sweep(
    half_angles_deg: &[f64],
    template: &Pipeline,
    policies: &[TruncationPolicy],
) -> Result<NaSweepTable> {
    let rows = template.execution.map(half_angles_deg.len(), |i| {
        let mut p = template.clone();
        p.aperture = ApertureSpec { half_angle: half_angles_deg[i].to_radians(), ..template.aperture };
        let prepared = p.run()?;
        Ok(prepared
            .solve_all(policies)?
            .iter()
            .map(|r| r.improvement_factor)
            .collect::<Vec<f64>>())
    });
    Ok(NaSweepTable {
        half_angles_deg: half_angles_deg.to_vec(),
        policies: policies.to_vec(),
        improvement: rows.into_iter().collect::<Result<_>>()?,
    })
}

/// Incoherent object intensity `|f(r)|²` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleObject {
    pub lattice: Lattice,
    pub intensity: Vec<f64>,
}

impl SampleObject {
    pub fn new(lattice: Lattice, intensity: Vec<f64>) -> Result<Self> {
        if intensity.len() != lattice.len() {
            return Err(Error::GridMismatch("object size does not match grid".into()));
        }
        if intensity.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Format("object intensity must be finite and non-negative".into()));
        }
        Ok(SampleObject { lattice, intensity })
    }

    /// Unit point scatterer at the origin.
    pub fn point(lattice: Lattice) -> Self {
        let mut intensity = vec![0.0; lattice.len()];
        intensity[lattice.origin_index()] = 1.0;
        SampleObject { lattice, intensity }
    }

    pub fn uniform(lattice: Lattice) -> Self {
        SampleObject { lattice, intensity: vec![1.0; lattice.len()] }
    }

    /// Two uniform planes of equal intensity, at z = 0 and at the grid plane
    /// nearest `separation`.
    pub fn two_plane(lattice: Lattice, separation: f64) -> Result<Self> {
        let planes = [lattice.z_plane(0.0)?, lattice.z_plane(separation)?];
        Ok(Self::planes(lattice, &planes))
    }

    /// Uniform unit planes at the given z indices.
    pub fn planes(lattice: Lattice, z_indices: &[usize]) -> Self {
        let intensity = (0..lattice.len())
            .map(|i| if z_indices.contains(&lattice.unravel(i)[2]) { 1.0 } else { 0.0 })
            .collect();
        SampleObject { lattice, intensity }
    }

    /// Node-wise sum of two objects on the same grid.
    pub fn sum(&self, other: &SampleObject) -> Result<SampleObject> {
        if self.lattice != other.lattice {
            return Err(Error::GridMismatch("objects on different grids".into()));
        }
        let intensity = self.intensity.iter().zip(&other.intensity).map(|(a, b)| a + b).collect();
        Ok(SampleObject { lattice: self.lattice, intensity })
    }
}

/// Scanned image `image(Δ) = Σ_r COTF(r) · |f(r − Δ)|²`, with the object
/// zero outside the grid.
pub fn apply_cotf_to_object(object: &SampleObject, cotf: &[f64], scan_positions: &[Shift]) -> Result<Vec<f64>> {
    let lat = &object.lattice;
    if cotf.len() != lat.len() {
        return Err(Error::GridMismatch("COTF and object grids differ".into()));
    }
    let mut offsets = Vec::with_capacity(scan_positions.len());
    for s in scan_positions {
        let ox = checked_scan_steps(lat, 0, s.x)?;
        let oy = if lat.is_planar() {
            if s.y != 0.0 {
                return Err(Error::ShiftOutOfRange { shift: s.y, extent: 0.0 });
            }
            0
        } else {
            checked_scan_steps(lat, 1, s.y)?
        };
        offsets.push((ox, oy));
    }
    let [nx, ny, nz] = lat.dims;
    Ok(Execution::default().map(offsets.len(), |k| {
        let (ox, oy) = offsets[k];
        let mut acc = 0.0;
        for iz in 0..nz {
            for iy in 0..ny {
                let Some(jy) = lat.offset(1, iy, -oy) else { continue };
                for ix in 0..nx {
                    let Some(jx) = lat.offset(0, ix, -ox) else { continue };
                    acc += cotf[lat.index(ix, iy, iz)] * object.intensity[lat.index(jx, jy, iz)];
                }
            }
        }
        acc
    }))
}

fn checked_scan_steps(lat: &Lattice, axis: usize, shift: f64) -> Result<isize> {
    let extent = lat.half_width(axis);
    if shift.abs() > extent + 1e-9 {
        return Err(Error::ShiftOutOfRange { shift, extent });
    }
    lat.steps_for(axis, shift)
}

/// Fraction of the on-axis response that comes from the focal plane when
/// imaging two planes: `image(focal plane only) / image(both planes)` at Δ = 0.
pub fn two_plane_contrast(lattice: Lattice, cotf: &[f64], separation: f64) -> Result<f64> {
    let focal = SampleObject::planes(lattice, &[lattice.z_plane(0.0)?]);
    let both = SampleObject::two_plane(lattice, separation)?;
    let a = apply_cotf_to_object(&focal, cotf, &[Shift::ZERO])?[0];
    let b = apply_cotf_to_object(&both, cotf, &[Shift::ZERO])?[0];
    Ok(a / b)
}

/// x–z cross-section through y = 0: rows are z planes, columns are x.
pub fn xz_section(lattice: &Lattice, values: &[f64]) -> Vec<Vec<f64>> {
    let cy = lattice.center()[1];
    (0..lattice.dims[2])
        .map(|iz| (0..lattice.dims[0]).map(|ix| values[lattice.index(ix, cy, iz)]).collect())
        .collect()
}

/// Coefficients of a point-array result laid out on the pixel grid, rows in
/// y, columns in x. Cells without a channel are `None`.
pub fn coefficient_grid(result: &CombinationResult, channels: &[crate::otf::Channel]) -> Vec<Vec<Option<f64>>> {
    let mut xs: Vec<f64> = channels.iter().map(|c| c.detector.x).collect();
    let mut ys: Vec<f64> = channels.iter().map(|c| c.detector.y).collect();
    for v in [&mut xs, &mut ys] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    let mut grid = vec![vec![None; xs.len()]; ys.len()];
    for (c, &w) in channels.iter().zip(&result.coefficients) {
        let ix = xs.iter().position(|&x| x == c.detector.x).unwrap_or(0);
        let iy = ys.iter().position(|&y| y == c.detector.y).unwrap_or(0);
        grid[iy][ix] = Some(w);
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::debye::simulate_field;
    use crate::grid::GridSpec;
    use crate::otf::point_otf;
    use crate::regions::mainlobe_mask;

    fn setup() -> (FieldGrid, RegionMask) {
        let f = simulate_field(&ApertureSpec::default(), &GridSpec::new(2.0, 2.0, 4.0, 0.125)).unwrap();
        let m = mainlobe_mask(&point_otf(&f, Shift::ZERO).unwrap()).unwrap();
        (f, m)
    }

    #[test]
    fn power_partition_and_symmetry() {
        let (f, m) = setup();
        let shifts = [Shift::ZERO, Shift::along_x(0.5), Shift::along_x(-0.5), Shift::new(0.0, 1.0)];
        let rows = power_vs_shift(&f, &m, &shifts).unwrap();
        assert!(rows[0].focal_power > rows[0].oof_power);
        assert!((rows[1].focal_power - rows[2].focal_power).abs() <= 1e-9 * rows[1].focal_power);
        assert!((rows[1].oof_power - rows[2].oof_power).abs() <= 1e-9 * rows[1].oof_power);
        for (r, s) in rows.iter().zip(shifts) {
            let total: f64 = point_otf(&f, s).unwrap().values.iter().sum();
            assert!((r.focal_power + r.oof_power - total).abs() <= 1e-12 * total);
        }
    }

    #[test]
    fn defocus_ratio_is_one_against_itself() {
        let (f, _) = setup();
        let otf = point_otf(&f, Shift::ZERO).unwrap();
        let curve = defocus_curve(&otf, &otf.values).unwrap();
        assert!(curve.ratio.iter().all(|r| (r.unwrap() - 1.0).abs() < 1e-12));
        assert!(defocus_curve(&otf, &otf.values[1..]).is_err());
    }

    #[test]
    fn point_object_samples_the_cotf() {
        let (f, _) = setup();
        let lat = *f.lattice();
        let cotf: Vec<f64> = point_otf(&f, Shift::along_x(0.25)).unwrap().values;
        let scan: Vec<Shift> = (-8..=8).map(|i| Shift::along_x(i as f64 * 0.125)).collect();
        let image = apply_cotf_to_object(&SampleObject::point(lat), &cotf, &scan).unwrap();
        let c = lat.center();
        for (k, v) in image.iter().enumerate() {
            let ix = (c[0] as isize + k as isize - 8) as usize;
            assert_eq!(*v, cotf[lat.index(ix, c[1], c[2])]);
        }
    }

    #[test]
    fn uniform_object_gives_total() {
        let (f, _) = setup();
        let lat = *f.lattice();
        let cotf = point_otf(&f, Shift::ZERO).unwrap().values;
        let total: f64 = cotf.iter().sum();
        let image = apply_cotf_to_object(&SampleObject::uniform(lat), &cotf, &[Shift::ZERO]).unwrap();
        assert!((image[0] - total).abs() <= 1e-12 * total);
    }

    #[test]
    fn scan_range_is_checked() {
        let (f, _) = setup();
        let lat = *f.lattice();
        let cotf = vec![0.0; lat.len()];
        let obj = SampleObject::point(lat);
        assert!(apply_cotf_to_object(&obj, &cotf, &[Shift::along_x(5.0)]).is_err());
        assert!(apply_cotf_to_object(&obj, &cotf, &[Shift::along_x(0.3)]).is_err());
    }

    #[test]
    fn image_is_linear_in_object() {
        let (f, _) = setup();
        let lat = *f.lattice();
        let cotf = point_otf(&f, Shift::new(0.25, -0.25)).unwrap().values;
        let a = SampleObject::two_plane(lat, 1.0).unwrap();
        let b = SampleObject::point(lat);
        let ab = a.sum(&b).unwrap();
        let scan = [Shift::ZERO, Shift::new(0.5, 0.125)];
        let ia = apply_cotf_to_object(&a, &cotf, &scan).unwrap();
        let ib = apply_cotf_to_object(&b, &cotf, &scan).unwrap();
        let iab = apply_cotf_to_object(&ab, &cotf, &scan).unwrap();
        for k in 0..scan.len() {
            assert!((iab[k] - ia[k] - ib[k]).abs() <= 1e-12 * iab[k].abs());
        }
    }

    #[test]
    fn sample_object_validation() {
        let lat = GridSpec::new(1.0, 1.0, 1.0, 0.5).lattice();
        assert!(SampleObject::new(lat, vec![1.0; 3]).is_err());
        let mut v = vec![0.0; lat.len()];
        v[0] = -1.0;
        assert!(SampleObject::new(lat, v).is_err());
    }
}
