//! Optimal linear combination of measurement channels.
//!
//! Maximizes the ratio of squared in-focus to squared out-of-focus samples of
//! the combined transfer function `Tc`:
//!
//! ```text
//!   max_c  cᵀAc / cᵀBc,   A = Tᵀ diag(f) T,   B = Tᵀ diag(g) T
//! ```
//!
//! Regularization restricts `c` to the leading right singular vectors of `T`
//! whose singular values lie within a decibel threshold of the largest. The
//! restricted problem `Ãy = λB̃y` is reduced to a standard symmetric
//! eigenproblem through the Cholesky factor of `B̃`.
//!
//! The singular values and right singular vectors are taken from the
//! eigendecomposition of the Gram matrix `TᵀT = A + B`, which is N × N and
//! avoids materializing `U` for the K × N stack.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::otf::OtfStack;
use crate::regions::RegionMask;

/// Rows per block when accumulating the Gram matrices. Fixed so the
/// reduction order does not depend on the thread count.
const GRAM_BLOCK_ROWS: usize = 4096;

/// Relative size of the diagonal jitter added to a near-singular `B̃`.
const JITTER: f64 = 1e-12;

/// How a decibel threshold maps to a singular-value ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DbConvention {
    /// σ / σ_max ≥ 10^(−dB/20).
    #[default]
    Amplitude,
    /// σ / σ_max ≥ 10^(−dB/10).
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct TruncationPolicy {
    /// `None` keeps every singular direction.
    pub threshold_db: Option<f64>,
    pub convention: DbConvention,
}

impl TruncationPolicy {
    pub fn none() -> Self {
        TruncationPolicy::default()
    }

    pub fn db(threshold_db: f64) -> Self {
        TruncationPolicy { threshold_db: Some(threshold_db), convention: DbConvention::Amplitude }
    }

    pub fn with_convention(mut self, convention: DbConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.threshold_db {
            Some(db) if !(db.is_finite() && db > 0.0) => {
                Err(Error::InvalidPolicy(format!("threshold must be a positive number of dB, got {db}")))
            }
            _ => Ok(()),
        }
    }

    /// Smallest retained σ / σ_max, or `None` when untruncated.
    pub fn cutoff_ratio(&self) -> Option<f64> {
        self.threshold_db.map(|db| match self.convention {
            DbConvention::Amplitude => 10f64.powf(-db / 20.0),
            DbConvention::Power => 10f64.powf(-db / 10.0),
        })
    }

    /// Short label used in file names and tables.
    pub fn label(&self) -> String {
        match self.threshold_db {
            None => "none".to_string(),
            Some(db) => format!("{db}dB"),
        }
    }
}

/// Optimal coefficients and the resulting computational OTF.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinationResult {
    /// Unit-norm coefficients in stack channel order.
    pub coefficients: Vec<f64>,
    /// Achieved focal / out-of-focus ratio of squared samples.
    pub objective: f64,
    /// The same ratio for the conventional pinhole channel alone.
    pub conventional_objective: f64,
    pub improvement_factor: f64,
    pub rank_used: usize,
    pub policy: TruncationPolicy,
    /// Set when the optimum is worse than the conventional channel, which can
    /// happen only if truncation removed the pinhole direction.
    pub below_conventional: bool,
    /// `Tc` over every grid node.
    #[serde(skip)]
    pub cotf: Vec<f64>,
}

/// Ratio of squared focal to squared out-of-focus samples of `values`.
fn squared_ratio(values: &[f64], mask: &RegionMask) -> (f64, f64) {
    let mut focal = 0.0;
    let mut oof = 0.0;
    for (&v, &is_focal) in values.iter().zip(mask.focal()) {
        if is_focal {
            focal += v * v;
        } else {
            oof += v * v;
        }
    }
    (focal, oof)
}

fn check_compatible(stack: &OtfStack, mask: &RegionMask) -> Result<()> {
    if stack.lattice != mask.lattice {
        return Err(Error::GridMismatch("stack and mask lattices differ".into()));
    }
    if stack.channel_count() == 0 {
        return Err(Error::InvalidGeometry("stack has no channels".into()));
    }
    if mask.focal_count() == mask.lattice.len() {
        return Err(Error::DegenerateMask("mask has no out-of-focus nodes".into()));
    }
    Ok(())
}

/// Focal / out-of-focus ratio of the conventional channel (c = e₀).
pub fn conventional_objective(stack: &OtfStack, mask: &RegionMask) -> Result<f64> {
    check_compatible(stack, mask)?;
    let (focal, oof) = squared_ratio(stack.column(0), mask);
    if oof == 0.0 {
        return Err(Error::DegenerateMask("conventional OTF has no out-of-focus energy".into()));
    }
    if focal == 0.0 {
        return Err(Error::DegenerateMask("conventional OTF has no focal energy".into()));
    }
    Ok(focal / oof)
}

/// Accumulates `Tᵀ diag(f) T` and `Tᵀ diag(g) T` over fixed row blocks.
pub fn gram_matrices(
    stack: &OtfStack,
    mask: &RegionMask,
    exec: Execution,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_compatible(stack, mask)?;
    let k = stack.node_count();
    let n = stack.channel_count();
    let blocks = k.div_ceil(GRAM_BLOCK_ROWS);
    let partials = exec.map(blocks, |b| {
        let start = b * GRAM_BLOCK_ROWS;
        let end = (start + GRAM_BLOCK_ROWS).min(k);
        let focal_rows: Vec<usize> = (start..end).filter(|&i| mask.is_focal(i)).collect();
        let oof_rows: Vec<usize> = (start..end).filter(|&i| !mask.is_focal(i)).collect();
        (block_gram(stack, &focal_rows, n), block_gram(stack, &oof_rows, n))
    });
    let mut a = DMatrix::zeros(n, n);
    let mut bm = DMatrix::zeros(n, n);
    for (pa, pb) in partials {
        a += pa;
        bm += pb;
    }
    Ok((symmetrize(a), symmetrize(bm)))
}

fn block_gram(stack: &OtfStack, rows: &[usize], n: usize) -> DMatrix<f64> {
    if rows.is_empty() {
        return DMatrix::zeros(n, n);
    }
    let mut data = Vec::with_capacity(rows.len() * n);
    for c in 0..n {
        let col = stack.column(c);
        data.extend(rows.iter().map(|&r| col[r]));
    }
    let block = DMatrix::from_vec(rows.len(), n, data);
    block.transpose() * &block
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// The generalized Rayleigh-quotient problem for one stack and mask.
///
/// Building it accumulates the Gram matrices and the singular basis once;
/// [`RayleighProblem::solve`] can then be called for any number of
/// truncation policies.
pub struct RayleighProblem<'a> {
    stack: &'a OtfStack,
    mask: &'a RegionMask,
    focal_gram: DMatrix<f64>,
    oof_gram: DMatrix<f64>,
    /// Singular values of T, descending.
    singular_values: Vec<f64>,
    /// Right singular vectors of T, columns in the order of `singular_values`.
    basis: DMatrix<f64>,
    conventional: f64,
}

impl<'a> RayleighProblem<'a> {
    pub fn new(stack: &'a OtfStack, mask: &'a RegionMask) -> Result<Self> {
        Self::with_execution(stack, mask, Execution::default())
    }

    pub fn with_execution(stack: &'a OtfStack, mask: &'a RegionMask, exec: Execution) -> Result<Self> {
        let conventional = conventional_objective(stack, mask)?;
        let (focal_gram, oof_gram) = gram_matrices(stack, mask, exec)?;
        let gram = &focal_gram + &oof_gram;
        let eig = SymmetricEigen::new(gram);
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
        let singular_values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
        let basis = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(RayleighProblem {
            stack,
            mask,
            focal_gram,
            oof_gram,
            singular_values,
            basis,
            conventional,
        })
    }

    /// `A = Tᵀ diag(f) T`.
    pub fn focal_gram(&self) -> &DMatrix<f64> {
        &self.focal_gram
    }

    /// `B = Tᵀ diag(g) T`.
    pub fn out_of_focus_gram(&self) -> &DMatrix<f64> {
        &self.oof_gram
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn conventional_objective(&self) -> f64 {
        self.conventional
    }

    /// Number of singular directions a policy keeps.
    pub fn retained_rank(&self, policy: &TruncationPolicy) -> usize {
        match policy.cutoff_ratio() {
            None => self.singular_values.len(),
            Some(ratio) => {
                let cutoff = self.singular_values[0] * ratio;
                self.singular_values.iter().take_while(|&&s| s >= cutoff && s > 0.0).count()
            }
        }
    }

    /// Orthonormal basis `V_r` of the retained coefficient subspace.
    pub fn retained_basis(&self, policy: &TruncationPolicy) -> DMatrix<f64> {
        let r = self.retained_rank(policy);
        self.basis.columns(0, r).into_owned()
    }

    /// `cᵀAc / cᵀBc` evaluated through the Gram matrices.
    pub fn rayleigh(&self, c: &DVector<f64>) -> f64 {
        c.dot(&(&self.focal_gram * c)) / c.dot(&(&self.oof_gram * c))
    }

    pub fn solve(&self, policy: &TruncationPolicy) -> Result<CombinationResult> {
        policy.validate()?;
        let r = self.retained_rank(policy);
        if r == 0 {
            return Err(Error::EmptySubspace);
        }
        let v = self.basis.columns(0, r);
        let a_red = symmetrize(v.transpose() * &self.focal_gram * v);
        let mut b_red = symmetrize(v.transpose() * &self.oof_gram * v);

        let b_eig = SymmetricEigen::new(b_red.clone());
        let smallest = b_eig.eigenvalues.min();
        let jitter = JITTER * b_red.trace() / r as f64;
        if smallest < jitter {
            for i in 0..r {
                b_red[(i, i)] += jitter;
            }
        }
        let chol = b_red.clone().cholesky().ok_or_else(|| Error::SingularOutOfFocus {
            smallest_pivot: SymmetricEigen::new(b_red.clone()).eigenvalues.min(),
        })?;
        let l = chol.l();
        // C = L⁻¹ Ã L⁻ᵀ
        let w = l
            .solve_lower_triangular(&a_red)
            .ok_or(Error::SingularOutOfFocus { smallest_pivot: 0.0 })?;
        let c_mat = l
            .solve_lower_triangular(&w.transpose())
            .ok_or(Error::SingularOutOfFocus { smallest_pivot: 0.0 })?;
        let eig = SymmetricEigen::new(symmetrize(c_mat));
        let best = eig.eigenvalues.imax();
        let z = eig.eigenvectors.column(best).into_owned();
        let y = l
            .tr_solve_lower_triangular(&z)
            .ok_or(Error::SingularOutOfFocus { smallest_pivot: 0.0 })?;
        let c = v * y;
        Ok(self.finish(c, r, *policy))
    }

    fn finish(&self, c: DVector<f64>, rank: usize, policy: TruncationPolicy) -> CombinationResult {
        let mut c = c.normalize();
        let mut cotf = self.stack.combine(c.as_slice());
        let origin = self.stack.lattice.origin_index();
        let flip = if cotf[origin] != 0.0 {
            cotf[origin] < 0.0
        } else {
            c[c.iamax()] < 0.0
        };
        if flip {
            c.neg_mut();
            cotf.iter_mut().for_each(|v| *v = -*v);
        }
        let (focal, oof) = squared_ratio(&cotf, self.mask);
        let objective = focal / oof;
        let improvement_factor = objective / self.conventional;
        CombinationResult {
            coefficients: c.as_slice().to_vec(),
            objective,
            conventional_objective: self.conventional,
            improvement_factor,
            rank_used: rank,
            policy,
            below_conventional: improvement_factor < 1.0,
            cotf,
        }
    }
}

pub fn solve(stack: &OtfStack, mask: &RegionMask, policy: &TruncationPolicy) -> Result<CombinationResult> {
    RayleighProblem::new(stack, mask)?.solve(policy)
}

/// Untruncated result followed by one result per threshold, in input order.
/// Thresholds must be distinct and strictly monotone.
pub fn truncation_sweep(
    stack: &OtfStack,
    mask: &RegionMask,
    thresholds_db: &[f64],
    convention: DbConvention,
) -> Result<Vec<CombinationResult>> {
    let increasing = thresholds_db.windows(2).all(|w| w[0] < w[1]);
    let decreasing = thresholds_db.windows(2).all(|w| w[0] > w[1]);
    if !(increasing || decreasing) {
        return Err(Error::InvalidPolicy("thresholds must be strictly monotone".into()));
    }
    let problem = RayleighProblem::new(stack, mask)?;
    std::iter::once(TruncationPolicy::none())
        .chain(thresholds_db.iter().map(|&db| TruncationPolicy::db(db).with_convention(convention)))
        .map(|p| problem.solve(&p))
        .collect()
}
