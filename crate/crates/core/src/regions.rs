//! Focal and out-of-focus region masks.
//!
//! The focal region is the mainlobe of the conventional OTF, modelled as an
//! axis-aligned ellipsoid whose semi-axes are the first nulls of the OTF
//! along x, y and z. On planar (line-scan) lattices it is an ellipse in (x, z).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Lattice;
use crate::otf::OtfGrid;

/// Semi-axes of the mainlobe ellipsoid, in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LobeRadii {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl LobeRadii {
    pub fn scaled(&self, s: f64) -> LobeRadii {
        LobeRadii { x: self.x * s, y: self.y * s, z: self.z * s }
    }
}

/// Partition of the grid into focal (`f = 1`) and out-of-focus (`g = 1`) nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub lattice: Lattice,
    focal: Vec<bool>,
    pub radii: LobeRadii,
    /// 0 for the standard mainlobe, otherwise the ±depth of the target lobes.
    pub target_depth: f64,
}

impl RegionMask {
    pub fn is_focal(&self, i: usize) -> bool {
        self.focal[i]
    }

    pub fn focal(&self) -> &[bool] {
        &self.focal
    }

    /// The indicator vector f.
    pub fn f(&self) -> Vec<f64> {
        self.focal.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// The indicator vector g = 1 − f.
    pub fn g(&self) -> Vec<f64> {
        self.focal.iter().map(|&b| if b { 0.0 } else { 1.0 }).collect()
    }

    pub fn focal_count(&self) -> usize {
        self.focal.iter().filter(|&&b| b).count()
    }

    /// Mask from an explicit focal indicator.
    pub fn from_focal(lattice: Lattice, focal: Vec<bool>) -> Result<Self> {
        if focal.len() != lattice.len() {
            return Err(Error::GridMismatch("mask size does not match grid".into()));
        }
        if !focal.iter().any(|&b| b) {
            return Err(Error::DegenerateMask("focal region is empty".into()));
        }
        let radii = LobeRadii { x: 0.0, y: 0.0, z: 0.0 };
        Ok(RegionMask { lattice, focal, radii, target_depth: 0.0 })
    }

    /// Builds a mask from ellipsoids of the given radii centred on the axis at
    /// each depth in `centers`.
    pub fn from_ellipsoids(
        lattice: Lattice,
        radii: LobeRadii,
        centers: &[f64],
        target_depth: f64,
    ) -> Result<Self> {
        let planar = lattice.is_planar();
        let focal: Vec<bool> = (0..lattice.len())
            .map(|i| {
                let [x, y, z] = lattice.position(i);
                centers.iter().any(|&zc| {
                    let mut q = (x / radii.x).powi(2) + ((z - zc) / radii.z).powi(2);
                    if !planar {
                        q += (y / radii.y).powi(2);
                    }
                    q <= 1.0 + 1e-12
                })
            })
            .collect();
        let mask = RegionMask { lattice, focal, radii, target_depth };
        if mask.focal_count() == 0 {
            return Err(Error::DegenerateMask("focal region is empty".into()));
        }
        Ok(mask)
    }
}

/// Distance from the origin to the first local minimum of the profile along
/// `axis`. Ties go to the smaller radius.
fn first_null(otf: &OtfGrid, axis: usize) -> Result<f64> {
    let lat = &otf.lattice;
    let center = lat.center();
    let name = ['x', 'y', 'z'][axis];
    let n = lat.dims[axis];
    let value = |k: usize| {
        let mut idx = center;
        idx[axis] = k;
        otf.values[lat.index(idx[0], idx[1], idx[2])]
    };
    for k in center[axis]..n.saturating_sub(1) {
        if value(k + 1) >= value(k) {
            if k == center[axis] {
                break;
            }
            return Ok((k - center[axis]) as f64 * lat.step[axis]);
        }
    }
    Err(Error::NoNullFound { axis: name })
}

/// First-null radii of a reference (conventional) OTF.
pub fn lobe_radii(reference: &OtfGrid) -> Result<LobeRadii> {
    let x = first_null(reference, 0)?;
    let z = first_null(reference, 2)?;
    let y = if reference.lattice.is_planar() { x } else { first_null(reference, 1)? };
    Ok(LobeRadii { x, y, z })
}

/// Focal region = mainlobe of the conventional OTF.
pub fn mainlobe_mask(reference: &OtfGrid) -> Result<RegionMask> {
    let radii = lobe_radii(reference)?;
    RegionMask::from_ellipsoids(reference.lattice, radii, &[0.0], 0.0)
}

/// Focal region = two mainlobe-sized ellipsoids centred at z = ±depth.
pub fn depth_target_mask(reference: &OtfGrid, depth: f64) -> Result<RegionMask> {
    let radii = lobe_radii(reference)?;
    let extent = reference.lattice.half_width(2);
    if !depth.is_finite() || depth.abs() + radii.z > extent + 1e-9 {
        return Err(Error::DepthOutOfRange { z: depth, extent });
    }
    let d = depth.abs();
    RegionMask::from_ellipsoids(reference.lattice, radii, &[d, -d], d)
}
