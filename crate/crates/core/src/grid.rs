//! Sampling grids. All lengths are in wavelengths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a length is an integer number of steps.
const STEP_TOL: f64 = 1e-9;

/// User-facing description of a symmetric 3D sampling grid.
///
/// Each axis spans `±extent` with spacing `step`. The number of samples per
/// axis is `2·floor(extent/step) + 1`, so the origin is always a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub extent_x: f64,
    pub extent_y: f64,
    pub extent_z: f64,
    pub step_x: f64,
    pub step_y: f64,
    pub step_z: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::new(3.0, 3.0, 6.0, 0.125)
    }
}

impl GridSpec {
    /// Grid with a common step on all axes.
    pub fn new(extent_x: f64, extent_y: f64, extent_z: f64, step: f64) -> Self {
        GridSpec {
            extent_x,
            extent_y,
            extent_z,
            step_x: step,
            step_y: step,
            step_z: step,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let axes = [
            ('x', self.extent_x, self.step_x),
            ('y', self.extent_y, self.step_y),
            ('z', self.extent_z, self.step_z),
        ];
        for (axis, extent, step) in axes {
            if !(extent.is_finite() && extent > 0.0) {
                return Err(Error::InvalidGrid(format!("extent_{axis} must be > 0, got {extent}")));
            }
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::InvalidGrid(format!("step_{axis} must be > 0, got {step}")));
            }
            if step > extent {
                return Err(Error::InvalidGrid(format!(
                    "step_{axis} ({step}) must not exceed extent_{axis} ({extent})"
                )));
            }
        }
        Ok(())
    }

    fn half_count(extent: f64, step: f64) -> usize {
        (extent / step + STEP_TOL).floor() as usize
    }

    /// Samples per axis (always odd).
    pub fn dims(&self) -> [usize; 3] {
        [
            2 * Self::half_count(self.extent_x, self.step_x) + 1,
            2 * Self::half_count(self.extent_y, self.step_y) + 1,
            2 * Self::half_count(self.extent_z, self.step_z) + 1,
        ]
    }

    pub fn node_count(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn lattice(&self) -> Lattice {
        Lattice {
            dims: self.dims(),
            step: [self.step_x, self.step_y, self.step_z],
        }
    }
}

/// Concrete node layout shared by fields, OTFs, masks and stacks.
///
/// Nodes are stored x-fastest: `index = ix + nx·(iy + ny·iz)`. Every axis
/// has an odd sample count and is centered on the origin. Line-scan data
/// lives on a lattice with `ny = 1` (the y axis collapsed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub dims: [usize; 3],
    pub step: [f64; 3],
}

impl Lattice {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when the y axis has been collapsed (line-scan data).
    pub fn is_planar(&self) -> bool {
        self.dims[1] == 1
    }

    /// The same lattice with the y axis collapsed to a single node.
    pub fn collapse_y(&self) -> Lattice {
        Lattice {
            dims: [self.dims[0], 1, self.dims[2]],
            step: self.step,
        }
    }

    pub fn center(&self) -> [usize; 3] {
        [self.dims[0] / 2, self.dims[1] / 2, self.dims[2] / 2]
    }

    /// Largest coordinate reached along `axis`.
    pub fn half_width(&self, axis: usize) -> f64 {
        (self.dims[axis] / 2) as f64 * self.step[axis]
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.dims[0] * (iy + self.dims[1] * iz)
    }

    #[inline]
    pub fn unravel(&self, index: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub fn origin_index(&self) -> usize {
        let [cx, cy, cz] = self.center();
        self.index(cx, cy, cz)
    }

    /// Coordinate of sample `i` along `axis`.
    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        (i as f64 - (self.dims[axis] / 2) as f64) * self.step[axis]
    }

    pub fn position(&self, index: usize) -> [f64; 3] {
        let [ix, iy, iz] = self.unravel(index);
        [self.coord(0, ix), self.coord(1, iy), self.coord(2, iz)]
    }

    /// Converts a length along `axis` into a whole number of steps.
    pub fn steps_for(&self, axis: usize, length: f64) -> Result<isize> {
        let step = self.step[axis];
        let ratio = length / step;
        let rounded = ratio.round();
        if !ratio.is_finite() || (ratio - rounded).abs() > 1e-6 {
            return Err(Error::ShiftNotOnGrid { shift: length, step });
        }
        Ok(rounded as isize)
    }

    /// Index of the z plane nearest to `z`, or an error when `z` is off the grid.
    pub fn z_plane(&self, z: f64) -> Result<usize> {
        let extent = self.half_width(2);
        if !z.is_finite() || z.abs() > extent + 0.5 * self.step[2] {
            return Err(Error::DepthOutOfRange { z, extent });
        }
        let i = (z / self.step[2]).round() as isize + (self.dims[2] / 2) as isize;
        Ok(i.clamp(0, self.dims[2] as isize - 1) as usize)
    }

    /// Offsets index `i` along `axis` by `offset`, returning `None` off the grid.
    #[inline]
    pub fn offset(&self, axis: usize, i: usize, offset: isize) -> Option<usize> {
        let j = i as isize + offset;
        (j >= 0 && (j as usize) < self.dims[axis]).then_some(j as usize)
    }
}
