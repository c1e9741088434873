//! Run configuration. Every length is in wavelengths and every angle in
//! degrees; the unit is part of the key name.

use std::path::{Path, PathBuf};

use confocal_core::debye::{ApertureSpec, DEFAULT_NODE_BUDGET};
use confocal_core::grid::GridSpec;
use confocal_core::optimizer::{DbConvention, TruncationPolicy};
use confocal_core::otf::ScanGeometry;
use confocal_core::pipeline::{MaskKind, Pipeline};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub aperture: ApertureConfig,
    pub grid: GridConfig,
    pub geometry: GeometryConfig,
    pub mask: MaskConfig,
    pub optimize: OptimizeConfig,
    pub analysis: AnalysisConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApertureConfig {
    pub half_angle_degrees: f64,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for ApertureConfig {
    fn default() -> Self {
        let a = ApertureSpec::default();
        ApertureConfig { half_angle_degrees: 60.0, n_theta: a.n_theta, n_phi: a.n_phi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub extent_x_wavelengths: f64,
    pub extent_y_wavelengths: f64,
    pub extent_z_wavelengths: f64,
    pub step_x_wavelengths: f64,
    pub step_y_wavelengths: f64,
    pub step_z_wavelengths: f64,
    pub node_budget: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = GridSpec::default();
        GridConfig {
            extent_x_wavelengths: g.extent_x,
            extent_y_wavelengths: g.extent_y,
            extent_z_wavelengths: g.extent_z,
            step_x_wavelengths: g.step_x,
            step_y_wavelengths: g.step_y,
            step_z_wavelengths: g.step_z,
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Pinhole,
    PointArray,
    LineArray,
    LineCrossShift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub kind: GeometryKind,
    /// Pixels per side for `point_array`, lines for the line geometries.
    pub detector_count: usize,
    pub detector_pitch_wavelengths: f64,
    /// `line_cross_shift` only.
    pub illumination_count: usize,
    pub illumination_pitch_wavelengths: f64,
    pub dedup: bool,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            kind: GeometryKind::PointArray,
            detector_count: 13,
            detector_pitch_wavelengths: 0.25,
            illumination_count: 9,
            illumination_pitch_wavelengths: 0.25,
            dedup: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskKindConfig {
    #[default]
    Mainlobe,
    DepthTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    pub kind: MaskKindConfig,
    pub depth_wavelengths: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    /// Truncation thresholds. The untruncated solution is always included.
    pub thresholds_db: Vec<f64>,
    pub db_convention: DbConvention,
    pub normalize_columns: bool,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            thresholds_db: vec![30.0, 20.0, 10.0],
            db_convention: DbConvention::Amplitude,
            normalize_columns: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Point,
    Uniform,
    TwoPlane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Largest shift for the power-versus-shift table, capped at the grid
    /// half-width. The step is the grid x step.
    pub max_shift_wavelengths: f64,
    /// Shifts whose OTF cross-sections are written by `otfs`.
    pub section_shifts_wavelengths: Vec<f64>,
    pub objects: Vec<ObjectKind>,
    /// CSV of `x,y,z,intensity` rows imaged alongside the built-in objects.
    pub object_csv: Option<PathBuf>,
    pub two_plane_separation_wavelengths: f64,
    /// Scan range along x for object images.
    pub scan_extent_wavelengths: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            max_shift_wavelengths: 3.0,
            section_shifts_wavelengths: vec![0.0],
            objects: vec![ObjectKind::Point, ObjectKind::Uniform, ObjectKind::TwoPlane],
            object_csv: None,
            two_plane_separation_wavelengths: 2.0,
            scan_extent_wavelengths: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub half_angles_degrees: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { half_angles_degrees: vec![45.0, 50.0, 55.0, 60.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub cache: bool,
    /// Write one CSV per OTF column from `otfs`.
    pub export_stack_csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), cache: true, export_stack_csv: false }
    }
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must be a positive number, got {v}")))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let a = &self.aperture;
        if !(a.half_angle_degrees > 0.0 && a.half_angle_degrees < 90.0) {
            return Err(invalid(
                "aperture.half_angle_degrees",
                format!("must lie in (0, 90), got {}", a.half_angle_degrees),
            ));
        }
        self.aperture_spec().validate().map_err(|e| invalid("aperture", e))?;

        let g = &self.grid;
        for (key, v) in [
            ("grid.extent_x_wavelengths", g.extent_x_wavelengths),
            ("grid.extent_y_wavelengths", g.extent_y_wavelengths),
            ("grid.extent_z_wavelengths", g.extent_z_wavelengths),
            ("grid.step_x_wavelengths", g.step_x_wavelengths),
            ("grid.step_y_wavelengths", g.step_y_wavelengths),
            ("grid.step_z_wavelengths", g.step_z_wavelengths),
        ] {
            positive(key, v)?;
        }
        self.grid_spec().validate().map_err(|e| invalid("grid", e))?;
        if g.node_budget == 0 {
            return Err(invalid("grid.node_budget", "must be at least 1"));
        }

        let geo = &self.geometry;
        if geo.kind != GeometryKind::Pinhole {
            if geo.detector_count == 0 {
                return Err(invalid("geometry.detector_count", "must be at least 1"));
            }
            positive("geometry.detector_pitch_wavelengths", geo.detector_pitch_wavelengths)?;
        }
        if geo.kind == GeometryKind::LineCrossShift {
            if geo.illumination_count == 0 {
                return Err(invalid("geometry.illumination_count", "must be at least 1"));
            }
            positive("geometry.illumination_pitch_wavelengths", geo.illumination_pitch_wavelengths)?;
        }
        self.scan_geometry().validate().map_err(|e| invalid("geometry", e))?;

        if self.mask.kind == MaskKindConfig::DepthTarget && !self.mask.depth_wavelengths.is_finite() {
            return Err(invalid("mask.depth_wavelengths", "must be finite"));
        }
        for p in self.policies() {
            p.validate().map_err(|e| invalid("optimize.thresholds_db", e))?;
        }

        let an = &self.analysis;
        if !(an.max_shift_wavelengths.is_finite() && an.max_shift_wavelengths >= 0.0) {
            return Err(invalid("analysis.max_shift_wavelengths", "must be ≥ 0"));
        }
        if !(an.scan_extent_wavelengths.is_finite() && an.scan_extent_wavelengths >= 0.0) {
            return Err(invalid("analysis.scan_extent_wavelengths", "must be ≥ 0"));
        }
        positive("analysis.two_plane_separation_wavelengths", an.two_plane_separation_wavelengths)?;
        for &a in &self.sweep.half_angles_degrees {
            if !(a > 0.0 && a < 90.0) {
                return Err(invalid("sweep.half_angles_degrees", format!("{a} is outside (0, 90)")));
            }
        }
        Ok(())
    }

    pub fn aperture_spec(&self) -> ApertureSpec {
        ApertureSpec {
            n_theta: self.aperture.n_theta,
            n_phi: self.aperture.n_phi,
            ..ApertureSpec::from_degrees(self.aperture.half_angle_degrees)
        }
    }

    pub fn grid_spec(&self) -> GridSpec {
        let g = &self.grid;
        GridSpec {
            extent_x: g.extent_x_wavelengths,
            extent_y: g.extent_y_wavelengths,
            extent_z: g.extent_z_wavelengths,
            step_x: g.step_x_wavelengths,
            step_y: g.step_y_wavelengths,
            step_z: g.step_z_wavelengths,
        }
    }

    pub fn scan_geometry(&self) -> ScanGeometry {
        let g = &self.geometry;
        let mut geometry = match g.kind {
            GeometryKind::Pinhole => ScanGeometry::pinhole(),
            GeometryKind::PointArray => ScanGeometry::point_array(g.detector_count, g.detector_pitch_wavelengths),
            GeometryKind::LineArray => ScanGeometry::line_array(g.detector_count, g.detector_pitch_wavelengths),
            GeometryKind::LineCrossShift => ScanGeometry::line_cross_shift(
                g.illumination_count,
                g.illumination_pitch_wavelengths,
                g.detector_count,
                g.detector_pitch_wavelengths,
            ),
        };
        geometry.dedup = g.dedup;
        geometry
    }

    pub fn mask_kind(&self) -> MaskKind {
        match self.mask.kind {
            MaskKindConfig::Mainlobe => MaskKind::Mainlobe,
            MaskKindConfig::DepthTarget => MaskKind::DepthTarget(self.mask.depth_wavelengths),
        }
    }

    /// Untruncated first, then the configured thresholds in order.
    pub fn policies(&self) -> Vec<TruncationPolicy> {
        let convention = self.optimize.db_convention;
        std::iter::once(TruncationPolicy::none())
            .chain(self.optimize.thresholds_db.iter().map(|&t| TruncationPolicy::db(t)))
            .map(|p| p.with_convention(convention))
            .collect()
    }

    pub fn pipeline(&self) -> Pipeline {
        let mut p = Pipeline::new(self.aperture_spec(), self.grid_spec(), self.scan_geometry());
        p.mask = self.mask_kind();
        p.normalize_columns = self.optimize.normalize_columns;
        p
    }

    /// Hash of everything the focal field depends on.
    pub fn field_key(&self) -> String {
        let subtree = serde_json::json!({ "aperture": self.aperture, "grid": self.grid });
        hex::encode(Sha256::digest(subtree.to_string().as_bytes()))
    }

    /// Hash of the whole configuration, excluding output locations.
    pub fn run_key(&self) -> String {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        hex::encode(Sha256::digest(serde_json::to_string(&c).unwrap_or_default().as_bytes()))
    }
}
