use alloc::vec::Vec;

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::math::ln_factorial;
use crate::table::{ContingencyTable, IntensityMatrix};

/// Unnormalized log mass of Fisher's non-central multivariate
/// hypergeometric law on the fiber fixed by the table's margins:
///
/// `sum ln T_i+! + sum ln T_+j! - ln T_++! - sum ln T_ij! + sum T_ij ln w_ij`
///
/// with odds ratios `w_ij = Lambda_ij Lambda_++ / (Lambda_i+ Lambda_+j)`.
pub fn fisher_log_pmf(
    table: &ContingencyTable,
    lam: &IntensityMatrix,
    constraints: &ConstraintSet,
) -> Result<f64> {
    if (table.rows(), table.cols()) != (lam.rows(), lam.cols()) {
        return Err(Error::ShapeMismatch {
            expected_rows: lam.rows(),
            expected_cols: lam.cols(),
            rows: table.rows(),
            cols: table.cols(),
        });
    }
    if !constraints.is_admissible(table)? {
        return Err(Error::Inadmissible);
    }
    let target = FisherTarget::new(lam);
    let margins: f64 = table.row_sums().iter().map(|&r| ln_factorial(r)).sum::<f64>()
        + table.col_sums().iter().map(|&c| ln_factorial(c)).sum::<f64>()
        - ln_factorial(table.total());
    Ok(margins + target.log_kernel(table))
}

/// Log odds ratios of an intensity, the only part of the intensity the
/// fiber-restricted law depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherTarget {
    rows: usize,
    cols: usize,
    log_omega: Vec<f64>,
}

impl FisherTarget {
    pub fn new(lam: &IntensityMatrix) -> Self {
        Self {
            rows: lam.rows(),
            cols: lam.cols(),
            log_omega: lam.log_odds_ratios(),
        }
    }

    /// Central target (all odds ratios one).
    pub fn central(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            log_omega: alloc::vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn log_omega(&self) -> &[f64] {
        &self.log_omega
    }

    /// `sum_ij (T_ij ln w_ij - ln T_ij!)`, the cell-dependent part of the log mass.
    pub fn log_kernel(&self, table: &ContingencyTable) -> f64 {
        table
            .cells()
            .iter()
            .zip(&self.log_omega)
            .map(|(&n, &w)| n as f64 * w - ln_factorial(n))
            .sum()
    }

}

/// A law on the fiber that factorizes over cells, `mu(T) ∝ prod g_c(T_c)`.
/// Only such targets are needed by the Gibbs step, which looks at the
/// cells touched by one move.
pub trait LineTarget {
    /// `ln g_idx(n)`.
    fn cell_term(&self, idx: usize, n: u64) -> f64;
}

impl LineTarget for FisherTarget {
    #[inline]
    fn cell_term(&self, idx: usize, n: u64) -> f64 {
        n as f64 * self.log_omega[idx] - ln_factorial(n)
    }
}

/// Counting measure: every admissible table equally likely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UniformTarget;

impl LineTarget for UniformTarget {
    #[inline]
    fn cell_term(&self, _idx: usize, _n: u64) -> f64 {
        0.0
    }
}
