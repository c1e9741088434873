//! Scalar Debye focal field of a high-NA objective.
//!
//! The field is a superposition of plane waves over the aperture cone,
//! weighted by the sine-condition apodization `√cos θ`. Units are
//! wavelength-normalized: λ = 1 and k = 2π.
//!
//! Quadrature is a tensor-product midpoint rule in (θ, φ) with solid-angle
//! weight `sin θ Δθ Δφ`. The exponent factorizes as
//! `e^{-ik s·r} = e^{-ik z cos θ} · e^{-ik sin θ (x cos φ + y sin φ)}`, so the
//! azimuthal sum is evaluated once per (θ, x, y) and reused for every z.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::{GridSpec, Lattice};

/// Wavenumber in wavelength units.
pub const K: f64 = 2.0 * PI;

/// Default upper bound on the number of grid nodes a field may have.
pub const DEFAULT_NODE_BUDGET: usize = 16_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Apodization {
    /// Aplanatic objective: amplitude `√cos θ` per plane wave.
    #[default]
    SineCondition,
}

impl Apodization {
    fn weight(self, cos_theta: f64) -> f64 {
        match self {
            Apodization::SineCondition => cos_theta.sqrt(),
        }
    }
}

/// Aperture cone and quadrature density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApertureSpec {
    /// Half-angle of the aperture cone in radians (NA = sin of this, in air).
    pub half_angle: f64,
    pub apodization: Apodization,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for ApertureSpec {
    fn default() -> Self {
        ApertureSpec::from_degrees(60.0)
    }
}

impl ApertureSpec {
    pub fn from_degrees(half_angle_deg: f64) -> Self {
        ApertureSpec {
            half_angle: half_angle_deg.to_radians(),
            apodization: Apodization::SineCondition,
            n_theta: 256,
            n_phi: 128,
        }
    }

    pub fn numerical_aperture(&self) -> f64 {
        self.half_angle.sin()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_angle > 0.0 && self.half_angle < PI / 2.0) {
            return Err(Error::InvalidAperture(format!(
                "half_angle must lie in (0, π/2), got {}",
                self.half_angle
            )));
        }
        if self.n_theta < 2 {
            return Err(Error::InvalidAperture(format!("n_theta must be ≥ 2, got {}", self.n_theta)));
        }
        if self.n_phi < 4 {
            return Err(Error::InvalidAperture(format!("n_phi must be ≥ 4, got {}", self.n_phi)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FieldOptions {
    pub node_budget: usize,
    pub execution: Execution,
}

impl Default for FieldOptions {
    fn default() -> Self {
        FieldOptions {
            node_budget: DEFAULT_NODE_BUDGET,
            execution: Execution::default(),
        }
    }
}

/// Sign of the imaginary unit in the plane-wave exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PhaseSign {
    Negative,
    #[cfg_attr(not(test), allow(dead_code))]
    Positive,
}

/// Complex focal field sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub spec: GridSpec,
    lattice: Lattice,
    samples: Vec<Complex64>,
}

impl FieldGrid {
    pub(crate) fn from_parts(spec: GridSpec, samples: Vec<Complex64>) -> Result<Self> {
        let lattice = spec.lattice();
        if samples.len() != lattice.len() {
            return Err(Error::Format(format!(
                "expected {} samples, found {}",
                lattice.len(),
                samples.len()
            )));
        }
        if samples.iter().any(|u| !u.re.is_finite() || !u.im.is_finite()) {
            return Err(Error::Format("non-finite field sample".into()));
        }
        Ok(FieldGrid { spec, lattice, samples })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn at(&self, ix: usize, iy: usize, iz: usize) -> Complex64 {
        self.samples[self.lattice.index(ix, iy, iz)]
    }

    /// |U|² per node.
    pub fn intensity(&self) -> Vec<f64> {
        self.samples.iter().map(|u| u.norm_sqr()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().map(|u| u.norm()).fold(0.0, f64::max)
    }
}

/// Computes the focal field with default options.
pub fn simulate_field(aperture: &ApertureSpec, grid: &GridSpec) -> Result<FieldGrid> {
    simulate_field_with(aperture, grid, &FieldOptions::default())
}

pub fn simulate_field_with(
    aperture: &ApertureSpec,
    grid: &GridSpec,
    options: &FieldOptions,
) -> Result<FieldGrid> {
    simulate(aperture, grid, options, PhaseSign::Negative)
}

pub(crate) fn simulate(
    aperture: &ApertureSpec,
    grid: &GridSpec,
    options: &FieldOptions,
    sign: PhaseSign,
) -> Result<FieldGrid> {
    aperture.validate()?;
    grid.validate()?;
    let nodes = grid.node_count();
    if nodes > options.node_budget {
        return Err(Error::GridTooLarge { nodes, budget: options.node_budget });
    }

    let lattice = grid.lattice();
    let [nx, ny, nz] = lattice.dims;
    let xs: Vec<f64> = (0..nx).map(|i| lattice.coord(0, i)).collect();
    let ys: Vec<f64> = (0..ny).map(|i| lattice.coord(1, i)).collect();
    let sigma = match sign {
        PhaseSign::Negative => -1.0,
        PhaseSign::Positive => 1.0,
    };

    let d_theta = aperture.half_angle / aperture.n_theta as f64;
    let d_phi = 2.0 * PI / aperture.n_phi as f64;
    let exec = options.execution;

    // Azimuthal partial sums Φ_θ(x, y) with the polar weight folded in.
    let rings: Vec<(f64, Vec<Complex64>)> = exec.map(aperture.n_theta, |j| {
        let theta = (j as f64 + 0.5) * d_theta;
        let (sin_t, cos_t) = theta.sin_cos();
        let weight = aperture.apodization.weight(cos_t) * sin_t * d_theta * d_phi;
        let mut plane = vec![Complex64::new(0.0, 0.0); nx * ny];
        let mut ex = vec![Complex64::new(0.0, 0.0); nx];
        let mut ey = vec![Complex64::new(0.0, 0.0); ny];
        for m in 0..aperture.n_phi {
            let phi = (m as f64 + 0.5) * d_phi;
            let (sin_p, cos_p) = phi.sin_cos();
            let kx = sigma * K * sin_t * cos_p;
            let ky = sigma * K * sin_t * sin_p;
            for (e, &x) in ex.iter_mut().zip(&xs) {
                *e = Complex64::from_polar(1.0, kx * x);
            }
            for (e, &y) in ey.iter_mut().zip(&ys) {
                *e = Complex64::from_polar(1.0, ky * y);
            }
            for (row, &eyv) in plane.chunks_exact_mut(nx).zip(&ey) {
                for (p, &exv) in row.iter_mut().zip(&ex) {
                    *p += exv * eyv;
                }
            }
        }
        for p in plane.iter_mut() {
            *p *= weight;
        }
        (cos_t, plane)
    });

    // Prefactor i/λ with λ = 1.
    let prefactor = Complex64::new(0.0, 1.0);
    let mut samples = vec![Complex64::new(0.0, 0.0); nodes];
    exec.for_each_chunk(&mut samples, nx * ny, |iz, plane| {
        let z = lattice.coord(2, iz);
        for (cos_t, ring) in &rings {
            let axial = prefactor * Complex64::from_polar(1.0, sigma * K * z * cos_t);
            for (u, &r) in plane.iter_mut().zip(ring) {
                *u += axial * r;
            }
        }
    });
    debug_assert_eq!(samples.len(), nx * ny * nz);

    FieldGrid::from_parts(*grid, samples)
}

/// Azimuthally averaged intensity `|U|²` versus transverse radius in the
/// z plane nearest to `z`. Radii are binned at the finer transverse step and
/// limited to the largest circle that fits inside the grid.
pub fn radial_profile(field: &FieldGrid, z: f64) -> Result<Vec<(f64, f64)>> {
    let lat = field.lattice();
    let iz = lat.z_plane(z)?;
    let width = lat.step[0].min(lat.step[1]);
    let max_radius = lat.half_width(0).min(lat.half_width(1));
    let bins = (max_radius / width + 1e-9).floor() as usize + 1;
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for iy in 0..lat.dims[1] {
        let y = lat.coord(1, iy);
        for ix in 0..lat.dims[0] {
            let x = lat.coord(0, ix);
            let rho = x.hypot(y);
            let bin = (rho / width).round() as usize;
            if bin < bins {
                sums[bin] += field.at(ix, iy, iz).norm_sqr();
                counts[bin] += 1;
            }
        }
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .enumerate()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(b, (s, n))| (b as f64 * width, s / n as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> GridSpec {
        GridSpec::new(1.5, 1.5, 2.0, 0.125)
    }

    #[test]
    fn rejects_invalid_aperture() {
        let g = small_grid();
        let mut a = ApertureSpec { half_angle: 0.0, ..Default::default() };
        assert!(matches!(simulate_field(&a, &g), Err(Error::InvalidAperture(_))));
        a.half_angle = PI / 2.0;
        assert!(simulate_field(&a, &g).is_err());
        let mut a = ApertureSpec { n_phi: 3, ..Default::default() };
        assert!(simulate_field(&a, &g).is_err());
        a.n_phi = 8;
        a.n_theta = 1;
        assert!(simulate_field(&a, &g).is_err());
    }

    #[test]
    fn enforces_node_budget() {
        let opts = FieldOptions { node_budget: 100, ..Default::default() };
        let err = simulate_field_with(&ApertureSpec::default(), &small_grid(), &opts).unwrap_err();
        assert!(matches!(err, Error::GridTooLarge { budget: 100, .. }));
    }

    #[test]
    fn peak_at_origin() {
        let f = simulate_field(&ApertureSpec::default(), &small_grid()).unwrap();
        let origin = f.samples()[f.lattice().origin_index()].norm();
        assert_eq!(origin, f.max_abs());
    }

    #[test]
    fn on_axis_focus_value_matches_closed_form() {
        // U(0) = i·2π ∫ √cosθ sinθ dθ = i·2π·(2/3)(1 − cos^{3/2}α), up to midpoint error.
        let a = ApertureSpec::default();
        let f = simulate_field(&a, &GridSpec::new(0.5, 0.5, 0.5, 0.5)).unwrap();
        let u0 = f.samples()[f.lattice().origin_index()];
        let exact = 2.0 * PI * (2.0 / 3.0) * (1.0 - a.half_angle.cos().powf(1.5));
        assert!(u0.re.abs() < 1e-12);
        assert!((u0.im - exact).abs() / exact < 1e-4);
    }

    #[test]
    fn axial_mirror_symmetry() {
        let f = simulate_field(&ApertureSpec::default(), &small_grid()).unwrap();
        let lat = *f.lattice();
        let max = f.max_abs();
        let nz = lat.dims[2];
        for iz in 0..nz {
            for iy in 0..lat.dims[1] {
                for ix in 0..lat.dims[0] {
                    let a = f.at(ix, iy, iz).norm();
                    let b = f.at(ix, iy, nz - 1 - iz).norm();
                    assert!((a - b).abs() <= 1e-8 * max);
                }
            }
        }
    }

    #[test]
    fn transverse_rotational_symmetry() {
        // (x, y) = (0.75, 0) and (0, 0.75) and (-0.75, 0) lie on the same ring.
        let f = simulate_field(&ApertureSpec::default(), &small_grid()).unwrap();
        let lat = *f.lattice();
        let max = f.max_abs();
        let c = lat.center();
        for iz in 0..lat.dims[2] {
            let a = f.at(c[0] + 6, c[1], iz).norm();
            let b = f.at(c[0], c[1] + 6, iz).norm();
            let d = f.at(c[0] - 6, c[1], iz).norm();
            assert!((a - b).abs() <= 1e-5 * max);
            assert!((a - d).abs() <= 1e-5 * max);
        }
    }

    #[test]
    fn sequential_and_parallel_are_bit_identical() {
        let a = ApertureSpec { n_theta: 16, n_phi: 32, ..Default::default() };
        let g = GridSpec::new(1.0, 1.0, 1.0, 0.25);
        let seq = simulate_field_with(
            &a,
            &g,
            &FieldOptions { execution: Execution::Sequential, ..Default::default() },
        )
        .unwrap();
        let par = simulate_field_with(
            &a,
            &g,
            &FieldOptions { execution: Execution::Parallel, ..Default::default() },
        )
        .unwrap();
        assert_eq!(seq, par);
        assert_eq!(simulate_field(&a, &g).unwrap(), par);
    }

    #[test]
    fn radial_profile_peaks_at_center() {
        let f = simulate_field(&ApertureSpec::default(), &small_grid()).unwrap();
        let prof = radial_profile(&f, 0.0).unwrap();
        assert_eq!(prof[0].0, 0.0);
        assert!(prof.iter().all(|&(_, v)| v <= prof[0].1));
        assert!(matches!(radial_profile(&f, 5.0), Err(Error::DepthOutOfRange { .. })));
    }

    #[test]
    fn radial_profile_is_continuous_in_depth() {
        let f = simulate_field(&ApertureSpec::default(), &small_grid()).unwrap();
        let p0 = radial_profile(&f, 0.0).unwrap();
        let p1 = radial_profile(&f, 0.125).unwrap();
        let peak = p0[0].1;
        for ((r0, v0), (r1, v1)) in p0.iter().zip(&p1) {
            assert_eq!(r0, r1);
            assert!((v0 - v1).abs() < 0.1 * peak);
        }
    }

    // |U| on the focal plane from a single fine θ integral, with the azimuthal
    // integral done analytically through J0(x) = (1/π)∫₀^π cos(x sin t) dt.
    fn focal_plane_oracle(alpha: f64, rho: f64) -> f64 {
        let simpson = |n: usize, a: f64, b: f64, f: &dyn Fn(f64) -> f64| {
            let h = (b - a) / n as f64;
            let mut s = f(a) + f(b);
            for i in 1..n {
                s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        let j0 = |x: f64| simpson(400, 0.0, PI, &|t: f64| (x * t.sin()).cos()) / PI;
        2.0 * PI * simpson(800, 0.0, alpha, &|th: f64| th.cos().sqrt() * j0(K * rho * th.sin()) * th.sin()).abs()
    }

    #[test]
    fn quadrature_converges_under_doubling() {
        let a = ApertureSpec::default();
        let fine = ApertureSpec { n_theta: 2 * a.n_theta, n_phi: 2 * a.n_phi, ..a };
        let g = GridSpec::new(1.0, 1.0, 2.0, 0.125);
        let coarse_field = simulate_field(&a, &g).unwrap();
        let fine_field = simulate_field(&fine, &g).unwrap();
        let lat = *coarse_field.lattice();
        let probes = [
            [0.0, 0.0, 0.0],
            [0.125, 0.0, 0.0],
            [0.25, 0.0, 0.0],
            [0.0, 0.375, 0.0],
            [0.25, 0.25, 0.0],
            [0.0, 0.0, 0.5],
            [0.0, 0.0, -1.0],
            [0.125, 0.25, 0.75],
            [0.375, 0.0, -0.5],
            [0.25, -0.125, 1.5],
        ];
        for p in probes {
            let idx: Vec<usize> = (0..3)
                .map(|ax| (lat.steps_for(ax, p[ax]).unwrap() + (lat.dims[ax] / 2) as isize) as usize)
                .collect();
            let c = coarse_field.at(idx[0], idx[1], idx[2]).norm();
            let f = fine_field.at(idx[0], idx[1], idx[2]).norm();
            assert!((c - f).abs() / f < 1e-4, "probe {p:?}: {c} vs {f}");
        }
    }

    #[test]
    fn first_null_matches_fine_oracle() {
        let a = ApertureSpec::default();
        let f = simulate_field(&a, &GridSpec::new(1.5, 1.5, 0.5, 0.125)).unwrap();
        let profile = radial_profile(&f, 0.0).unwrap();
        let k = (1..profile.len() - 1)
            .find(|&k| profile[k].1 <= profile[k - 1].1 && profile[k].1 <= profile[k + 1].1)
            .unwrap();
        let grid_null = profile[k].0;

        let oracle_null = (1..2000)
            .map(|i| i as f64 * 0.001)
            .find(|&r| focal_plane_oracle(a.half_angle, r + 0.001) > focal_plane_oracle(a.half_angle, r))
            .unwrap();
        let airy = 0.61 / a.numerical_aperture();
        assert!((oracle_null - airy).abs() / airy < 0.15, "oracle null {oracle_null}");
        assert!((grid_null - oracle_null).abs() <= 0.125, "{grid_null} vs {oracle_null}");
        // The discretized field agrees with the oracle along the x axis.
        let lat = *f.lattice();
        let c = lat.center();
        for ix in c[0]..lat.dims[0] {
            let rho = lat.coord(0, ix);
            let u = f.at(ix, c[1], c[2]).norm();
            assert!((u - focal_plane_oracle(a.half_angle, rho)).abs() < 1e-4 * f.max_abs());
        }
    }
}
