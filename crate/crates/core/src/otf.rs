//! Per-channel transfer functions and the measurement matrix.
//!
//! A channel pairs an illumination focus with a detection focus. Its OTF is
//! `|T_i(r + δ_i) · T_d(r + δ_d)|²` with both transfer functions given by the
//! same focal field. Point scanning fixes δ_i = 0 and moves δ_d over a 2D
//! pixel grid; line scanning uses the coherent line-focus field and shifts
//! along x only.
//!
//! Shifts must be integer multiples of the grid step so the shifted field is
//! an index offset; samples shifted off the grid count as zero.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::debye::FieldGrid;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::Lattice;

/// Transverse shift in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Shift {
    pub x: f64,
    pub y: f64,
}

impl Shift {
    pub const ZERO: Shift = Shift { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Shift { x, y }
    }

    pub fn along_x(x: f64) -> Self {
        Shift { x, y: 0.0 }
    }

    pub fn is_zero(&self) -> bool {
        self.x == 0.0 && self.y == 0.0
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// The (illumination, detection) focus pair that produced an OTF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Channel {
    pub illumination: Shift,
    pub detector: Shift,
}

impl Channel {
    pub fn is_conventional(&self) -> bool {
        self.illumination.is_zero() && self.detector.is_zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanKind {
    PointArray,
    LineArray,
    LineCrossShift,
}

/// Layout of the measurement channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGeometry {
    pub kind: ScanKind,
    pub detector_shifts: Vec<Shift>,
    /// Illumination shifts along x; only used by `LineCrossShift`.
    pub illumination_shifts: Vec<f64>,
    /// Collapse cross-shift channels that are translations or swaps of one another.
    pub dedup: bool,
}

fn centered(count: usize, pitch: f64) -> Vec<f64> {
    let half = (count / 2) as isize;
    (0..count as isize).map(|i| (i - half) as f64 * pitch).collect()
}

impl ScanGeometry {
    /// Square `count × count` pixel array at the given pitch, row-major in y then x.
    pub fn point_array(count: usize, pitch: f64) -> Self {
        let axis = centered(count, pitch);
        let detector_shifts = axis
            .iter()
            .flat_map(|&y| axis.iter().map(move |&x| Shift::new(x, y)))
            .collect();
        ScanGeometry {
            kind: ScanKind::PointArray,
            detector_shifts,
            illumination_shifts: Vec::new(),
            dedup: false,
        }
    }

    /// The conventional pinhole alone.
    pub fn pinhole() -> Self {
        ScanGeometry::point_array(1, 1.0)
    }

    pub fn line_array(count: usize, pitch: f64) -> Self {
        ScanGeometry {
            kind: ScanKind::LineArray,
            detector_shifts: centered(count, pitch).into_iter().map(Shift::along_x).collect(),
            illumination_shifts: Vec::new(),
            dedup: false,
        }
    }

    pub fn line_cross_shift(
        illumination_count: usize,
        illumination_pitch: f64,
        detector_count: usize,
        detector_pitch: f64,
    ) -> Self {
        ScanGeometry {
            kind: ScanKind::LineCrossShift,
            detector_shifts: centered(detector_count, detector_pitch)
                .into_iter()
                .map(Shift::along_x)
                .collect(),
            illumination_shifts: centered(illumination_count, illumination_pitch),
            dedup: false,
        }
    }

    /// 13 × 13 pixels at λ/4 pitch (3λ across).
    pub fn default_point() -> Self {
        ScanGeometry::point_array(13, 0.25)
    }

    /// 25 lines at λ/8 pitch (3λ across).
    pub fn default_line() -> Self {
        ScanGeometry::line_array(25, 0.125)
    }

    /// 9 illumination shifts at λ/4 × 25 detector lines at λ/8.
    pub fn default_cross_shift() -> Self {
        ScanGeometry::line_cross_shift(9, 0.25, 25, 0.125)
    }

    pub fn is_line(&self) -> bool {
        self.kind != ScanKind::PointArray
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidGeometry(m.to_string()));
        if self.detector_shifts.is_empty() {
            return bad("detector_shifts is empty");
        }
        let zeros = self.detector_shifts.iter().filter(|s| s.is_zero()).count();
        if zeros != 1 {
            return bad("detector_shifts must contain the zero shift exactly once");
        }
        if !all_unique(self.detector_shifts.iter().map(|s| (s.x, s.y))) {
            return bad("detector_shifts are not unique");
        }
        if self.is_line() && self.detector_shifts.iter().any(|s| s.y != 0.0) {
            return bad("line detectors shift along x only");
        }
        match self.kind {
            ScanKind::LineCrossShift => {
                if self.illumination_shifts.iter().filter(|&&d| d == 0.0).count() != 1 {
                    return bad("illumination_shifts must contain zero exactly once");
                }
                if !all_unique(self.illumination_shifts.iter().map(|&d| (d, 0.0))) {
                    return bad("illumination_shifts are not unique");
                }
            }
            _ => {
                if !self.illumination_shifts.is_empty() {
                    return bad("illumination_shifts are only valid for LineCrossShift");
                }
            }
        }
        Ok(())
    }

    /// Channels in column order: the conventional channel first, then the
    /// remaining channels in enumeration order (illumination-major).
    pub fn channels(&self) -> Vec<Channel> {
        let all: Vec<Channel> = match self.kind {
            ScanKind::PointArray | ScanKind::LineArray => self
                .detector_shifts
                .iter()
                .map(|&d| Channel { illumination: Shift::ZERO, detector: d })
                .collect(),
            ScanKind::LineCrossShift => self
                .illumination_shifts
                .iter()
                .flat_map(|&i| {
                    self.detector_shifts.iter().map(move |&d| Channel {
                        illumination: Shift::along_x(i),
                        detector: d,
                    })
                })
                .collect(),
        };
        let mut out: Vec<Channel> = all.iter().copied().filter(Channel::is_conventional).collect();
        out.extend(all.into_iter().filter(|c| !c.is_conventional()));
        if self.dedup && self.kind == ScanKind::LineCrossShift {
            let mut seen: Vec<f64> = Vec::new();
            out.retain(|c| {
                let separation = (c.detector.x - c.illumination.x).abs();
                if seen.iter().any(|&s| (s - separation).abs() < 1e-12) {
                    false
                } else {
                    seen.push(separation);
                    true
                }
            });
        }
        out
    }
}

fn all_unique(items: impl Iterator<Item = (f64, f64)>) -> bool {
    let v: Vec<(f64, f64)> = items.collect();
    v.iter().enumerate().all(|(i, a)| v[..i].iter().all(|b| a != b))
}

/// Non-negative OTF for one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct OtfGrid {
    pub lattice: Lattice,
    pub values: Vec<f64>,
    pub channel: Channel,
}

impl OtfGrid {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Converts a shift along `axis` into an index offset, checking range.
fn shift_steps(lat: &Lattice, axis: usize, shift: f64) -> Result<isize> {
    let extent = lat.half_width(axis);
    if shift.abs() > extent + 1e-9 {
        return Err(Error::ShiftOutOfRange { shift, extent });
    }
    lat.steps_for(axis, shift)
}

/// `|U(r)|² · |U(r + Δ)|²` for an off-focus pinhole at transverse shift Δ.
pub fn point_otf(field: &FieldGrid, delta: Shift) -> Result<OtfGrid> {
    let intensity = field.intensity();
    point_otf_from_intensity(field.lattice(), &intensity, delta)
}

pub(crate) fn point_otf_from_intensity(lat: &Lattice, intensity: &[f64], delta: Shift) -> Result<OtfGrid> {
    let sx = shift_steps(lat, 0, delta.x)?;
    let sy = shift_steps(lat, 1, delta.y)?;
    let [nx, ny, nz] = lat.dims;
    let mut values = vec![0.0; lat.len()];
    for iz in 0..nz {
        for iy in 0..ny {
            let Some(jy) = lat.offset(1, iy, sy) else { continue };
            for ix in 0..nx {
                let Some(jx) = lat.offset(0, ix, sx) else { continue };
                let i = lat.index(ix, iy, iz);
                values[i] = intensity[i] * intensity[lat.index(jx, jy, iz)];
            }
        }
    }
    Ok(OtfGrid {
        lattice: *lat,
        values,
        channel: Channel { illumination: Shift::ZERO, detector: delta },
    })
}

/// Coherent line-focus field `L(x, z) = Σ_y U(x, y, z) · step_y` on the
/// (x, z) plane.
#[derive(Debug, Clone, PartialEq)]
pub struct LineField {
    pub lattice: Lattice,
    pub samples: Vec<Complex64>,
}

impl LineField {
    pub fn from_field(field: &FieldGrid) -> Self {
        let lat = *field.lattice();
        let plane = lat.collapse_y();
        let step_y = lat.step[1];
        let mut samples = vec![Complex64::new(0.0, 0.0); plane.len()];
        for iz in 0..lat.dims[2] {
            for ix in 0..lat.dims[0] {
                let mut sum = Complex64::new(0.0, 0.0);
                for iy in 0..lat.dims[1] {
                    sum += field.at(ix, iy, iz);
                }
                samples[plane.index(ix, 0, iz)] = sum * step_y;
            }
        }
        LineField { lattice: plane, samples }
    }

    /// `|L(x + δ_i, z)|² · |L(x + δ_d, z)|²`.
    pub fn cross_shift_otf(&self, delta_illum: f64, delta_det: f64) -> Result<OtfGrid> {
        let lat = &self.lattice;
        let si = shift_steps(lat, 0, delta_illum)?;
        let sd = shift_steps(lat, 0, delta_det)?;
        let [nx, _, nz] = lat.dims;
        let mut values = vec![0.0; lat.len()];
        for iz in 0..nz {
            for ix in 0..nx {
                let (Some(ji), Some(jd)) = (lat.offset(0, ix, si), lat.offset(0, ix, sd)) else {
                    continue;
                };
                let a = self.samples[lat.index(ji, 0, iz)].norm_sqr();
                let b = self.samples[lat.index(jd, 0, iz)].norm_sqr();
                values[lat.index(ix, 0, iz)] = a * b;
            }
        }
        Ok(OtfGrid {
            lattice: *lat,
            values,
            channel: Channel {
                illumination: Shift::along_x(delta_illum),
                detector: Shift::along_x(delta_det),
            },
        })
    }
}

/// OTF of an infinitesimally narrow line detector at offset `delta_x`.
pub fn line_otf(field: &FieldGrid, delta_x: f64) -> Result<OtfGrid> {
    LineField::from_field(field).cross_shift_otf(0.0, delta_x)
}

pub fn cross_shift_otf(field: &FieldGrid, delta_illum: f64, delta_det: f64) -> Result<OtfGrid> {
    LineField::from_field(field).cross_shift_otf(delta_illum, delta_det)
}

/// Measurement matrix `T`: one column per channel, column 0 the conventional
/// channel. Stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct OtfStack {
    pub lattice: Lattice,
    pub columns: DMatrix<f64>,
    pub channels: Vec<Channel>,
}

impl OtfStack {
    /// Assembles a stack from precomputed OTFs. The first OTF must be the
    /// conventional channel and all must share a lattice.
    pub fn from_otfs(otfs: &[OtfGrid]) -> Result<Self> {
        let first = otfs
            .first()
            .ok_or_else(|| Error::InvalidGeometry("no channels".into()))?;
        if !first.channel.is_conventional() {
            return Err(Error::InvalidGeometry("column 0 must be the conventional channel".into()));
        }
        let lattice = first.lattice;
        if otfs.iter().any(|o| o.lattice != lattice) {
            return Err(Error::GridMismatch("OTFs on different lattices".into()));
        }
        let k = lattice.len();
        let mut data = Vec::with_capacity(k * otfs.len());
        for o in otfs {
            data.extend_from_slice(&o.values);
        }
        Ok(OtfStack {
            lattice,
            columns: DMatrix::from_vec(k, otfs.len(), data),
            channels: otfs.iter().map(|o| o.channel).collect(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.columns.nrows()
    }

    pub fn channel_count(&self) -> usize {
        self.columns.ncols()
    }

    pub fn column(&self, n: usize) -> &[f64] {
        let k = self.node_count();
        &self.columns.as_slice()[n * k..(n + 1) * k]
    }

    /// The conventional (zero-shift) OTF.
    pub fn conventional(&self) -> OtfGrid {
        OtfGrid {
            lattice: self.lattice,
            values: self.column(0).to_vec(),
            channel: self.channels[0],
        }
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.channel_count()).map(|n| self.column(n).iter().sum()).collect()
    }

    /// Copy with every column divided by its own peak value.
    pub fn peak_normalized(&self) -> OtfStack {
        let mut out = self.clone();
        for mut col in out.columns.column_iter_mut() {
            let peak = col.max();
            if peak > 0.0 {
                col /= peak;
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> OtfStack {
        let mut out = self.clone();
        out.columns *= s;
        out
    }

    /// `T c` over all nodes.
    pub fn combine(&self, coefficients: &[f64]) -> Vec<f64> {
        assert_eq!(coefficients.len(), self.channel_count());
        let mut out = vec![0.0; self.node_count()];
        for (n, &c) in coefficients.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (o, &t) in out.iter_mut().zip(self.column(n)) {
                *o += c * t;
            }
        }
        out
    }
}

pub fn build_stack(field: &FieldGrid, geometry: &ScanGeometry) -> Result<OtfStack> {
    build_stack_with(field, geometry, Execution::default())
}

pub fn build_stack_with(
    field: &FieldGrid,
    geometry: &ScanGeometry,
    exec: Execution,
) -> Result<OtfStack> {
    geometry.validate()?;
    let channels = geometry.channels();
    let otfs: Vec<Result<OtfGrid>> = match geometry.kind {
        ScanKind::PointArray => {
            let intensity = field.intensity();
            exec.map(channels.len(), |n| {
                point_otf_from_intensity(field.lattice(), &intensity, channels[n].detector)
            })
        }
        ScanKind::LineArray | ScanKind::LineCrossShift => {
            let line = LineField::from_field(field);
            exec.map(channels.len(), |n| {
                let c = channels[n];
                line.cross_shift_otf(c.illumination.x, c.detector.x)
            })
        }
    };
    let otfs = otfs.into_iter().collect::<Result<Vec<_>>>()?;
    OtfStack::from_otfs(&otfs)
}
