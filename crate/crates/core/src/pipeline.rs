//! End-to-end wiring: field → stack → mask → optimal combinations.

use serde::{Deserialize, Serialize};

use crate::debye::{simulate_field_with, ApertureSpec, FieldGrid, FieldOptions};
use crate::error::Result;
use crate::exec::Execution;
use crate::grid::GridSpec;
use crate::optimizer::{CombinationResult, RayleighProblem, TruncationPolicy};
use crate::otf::{build_stack_with, OtfStack, ScanGeometry};
use crate::regions::{depth_target_mask, mainlobe_mask, RegionMask};

/// Which focal region to optimize for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum MaskKind {
    #[default]
    Mainlobe,
    /// Two mainlobe-sized lobes at ±depth wavelengths.
    DepthTarget(f64),
}

impl MaskKind {
    pub fn build(&self, stack: &OtfStack) -> Result<RegionMask> {
        let reference = stack.conventional();
        match *self {
            MaskKind::Mainlobe => mainlobe_mask(&reference),
            MaskKind::DepthTarget(depth) => depth_target_mask(&reference, depth),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub aperture: ApertureSpec,
    pub grid: GridSpec,
    pub geometry: ScanGeometry,
    pub mask: MaskKind,
    /// Divide each OTF column by its peak before optimizing.
    pub normalize_columns: bool,
    pub execution: Execution,
}

impl Pipeline {
    pub fn new(aperture: ApertureSpec, grid: GridSpec, geometry: ScanGeometry) -> Self {
        Pipeline {
            aperture,
            grid,
            geometry,
            mask: MaskKind::Mainlobe,
            normalize_columns: false,
            execution: Execution::default(),
        }
    }

    /// α = 60°, default grid, 13 × 13 detector pixels.
    pub fn default_point() -> Self {
        Pipeline::new(ApertureSpec::default(), GridSpec::default(), ScanGeometry::default_point())
    }

    pub fn default_line() -> Self {
        Pipeline::new(ApertureSpec::default(), GridSpec::default(), ScanGeometry::default_line())
    }

    pub fn default_cross_shift() -> Self {
        Pipeline::new(ApertureSpec::default(), GridSpec::default(), ScanGeometry::default_cross_shift())
    }

    pub fn with_geometry(mut self, geometry: ScanGeometry) -> Self {
        self.geometry = geometry;
        self
    }

    pub fn with_mask(mut self, mask: MaskKind) -> Self {
        self.mask = mask;
        self
    }

    pub fn field(&self) -> Result<FieldGrid> {
        simulate_field_with(
            &self.aperture,
            &self.grid,
            &FieldOptions { execution: self.execution, ..Default::default() },
        )
    }

    /// Builds the stack and mask from an existing field.
    pub fn prepare(&self, field: &FieldGrid) -> Result<Prepared> {
        let mut stack = build_stack_with(field, &self.geometry, self.execution)?;
        // The mask always comes from the raw conventional OTF.
        let mask = self.mask.build(&stack)?;
        if self.normalize_columns {
            stack = stack.peak_normalized();
        }
        Ok(Prepared { stack, mask, execution: self.execution })
    }

    /// Field, stack and mask in one call.
    pub fn run(&self) -> Result<Prepared> {
        self.prepare(&self.field()?)
    }
}

/// A stack and mask ready to be optimized.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub stack: OtfStack,
    pub mask: RegionMask,
    execution: Execution,
}

impl Prepared {
    pub fn problem(&self) -> Result<RayleighProblem<'_>> {
        RayleighProblem::with_execution(&self.stack, &self.mask, self.execution)
    }

    /// One result per policy, sharing a single factorization.
    pub fn solve_all(&self, policies: &[TruncationPolicy]) -> Result<Vec<CombinationResult>> {
        let problem = self.problem()?;
        policies.iter().map(|p| problem.solve(p)).collect()
    }
}
