//! Tables, intensities, costs and observed data.
//!
//! All matrices are stored row-major with 0-based indices. File formats and
//! CLI output use 1-based indices; that translation happens in the engine.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Row sums, column sums and grand total of an integer table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryStatistics {
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub total: u64,
}

/// An `I x J` table of non-negative trip counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContingencyTable {
    rows: usize,
    cols: usize,
    cells: Vec<u64>,
}

impl ContingencyTable {
    pub fn new(rows: usize, cols: usize, cells: Vec<u64>) -> Result<Self> {
        check_dims(rows, cols)?;
        if cells.len() != rows * cols {
            return Err(Error::LengthMismatch {
                what: "table cells",
                expected: rows * cols,
                got: cells.len(),
            });
        }
        Ok(Self { rows, cols, cells })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            cells: vec![0; rows * cols],
        }
    }

    /// Builds a table from nested rows; all rows must have the same length.
    pub fn from_rows<R: AsRef<[u64]>>(rows: &[R]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut cells = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(Error::LengthMismatch {
                    what: "table row",
                    expected: n_cols,
                    got: r.len(),
                });
            }
            cells.extend_from_slice(r);
        }
        Self::new(n_rows, n_cols, cells)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.cells[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: u64) {
        self.cells[i * self.cols + j] = value;
    }

    /// Cells in row-major order.
    #[inline]
    pub fn cells(&self) -> &[u64] {
        &self.cells
    }

    #[inline]
    pub(crate) fn cells_mut(&mut self) -> &mut [u64] {
        &mut self.cells
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.cells[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.cells
            .chunks_exact(self.cols)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.cols];
        for r in self.cells.chunks_exact(self.cols) {
            for (acc, v) in out.iter_mut().zip(r) {
                *acc += v;
            }
        }
        out
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().sum()
    }

    pub fn summary_statistics(&self) -> SummaryStatistics {
        SummaryStatistics {
            row_sums: self.row_sums(),
            col_sums: self.col_sums(),
            total: self.total(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (i + 1..self.cols).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.cells.iter().map(|&v| v as f64).collect()
    }
}

/// Free function form of [`ContingencyTable::summary_statistics`].
pub fn summary_statistics(table: &ContingencyTable) -> SummaryStatistics {
    table.summary_statistics()
}

/// Strictly positive expected trip counts.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl IntensityMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(rows, cols)?;
        if values.len() != rows * cols {
            return Err(Error::LengthMismatch {
                what: "intensity values",
                expected: rows * cols,
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidArgument(alloc::format!(
                "intensity entries must be finite and positive, found {v}"
            )));
        }
        Ok(Self { rows, cols, values })
    }

    /// Builds an intensity, raising entries that underflowed to zero to
    /// `f64::MIN_POSITIVE`.
    pub(crate) fn from_clamped(rows: usize, cols: usize, mut values: Vec<f64>) -> Self {
        for v in &mut values {
            if *v < f64::MIN_POSITIVE {
                *v = f64::MIN_POSITIVE;
            }
        }
        Self { rows, cols, values }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.values
            .chunks_exact(self.cols)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in self.values.chunks_exact(self.cols) {
            for (acc, v) in out.iter_mut().zip(r) {
                *acc += v;
            }
        }
        out
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Odds ratios `Lambda_ij Lambda_++ / (Lambda_i+ Lambda_+j)` in log space.
    pub fn log_odds_ratios(&self) -> Vec<f64> {
        let rows = self.row_sums();
        let cols = self.col_sums();
        let ln_total = math::ln(rows.iter().sum::<f64>());
        let ln_rows: Vec<f64> = rows.iter().map(|&r| math::ln(r)).collect();
        let ln_cols: Vec<f64> = cols.iter().map(|&c| math::ln(c)).collect();
        let mut out = Vec::with_capacity(self.values.len());
        for (i, r) in self.values.chunks_exact(self.cols).enumerate() {
            for (j, &v) in r.iter().enumerate() {
                out.push(math::ln(v) + ln_total - ln_rows[i] - ln_cols[j]);
            }
        }
        out
    }
}

/// Non-negative travel impedances.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(rows, cols)?;
        if values.len() != rows * cols {
            return Err(Error::LengthMismatch {
                what: "cost values",
                expected: rows * cols,
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(alloc::format!(
                "costs must be finite and non-negative, found {v}"
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

/// Fully observed data available to the calibration loss.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservedData {
    /// Observed log-destination attraction, length `J`.
    pub log_attraction: Option<Vec<f64>>,
    /// Total distance travelled from each origin, length `I`.
    pub origin_distance: Option<Vec<f64>>,
    pub ground_truth: Option<ContingencyTable>,
}

impl ObservedData {
    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if let Some(y) = &self.log_attraction {
            if y.len() != cols {
                return Err(Error::LengthMismatch {
                    what: "log attraction",
                    expected: cols,
                    got: y.len(),
                });
            }
        }
        if let Some(d) = &self.origin_distance {
            if d.len() != rows {
                return Err(Error::LengthMismatch {
                    what: "origin distance",
                    expected: rows,
                    got: d.len(),
                });
            }
        }
        if let Some(t) = &self.ground_truth {
            if t.rows() != rows || t.cols() != cols {
                return Err(Error::ShapeMismatch {
                    expected_rows: rows,
                    expected_cols: cols,
                    rows: t.rows(),
                    cols: t.cols(),
                });
            }
        }
        Ok(())
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(alloc::format!(
            "matrix dimensions must be positive, got {rows}x{cols}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn summary_of_small_table() {
        let t = ContingencyTable::from_rows(&[[1, 2], [3, 4]]).unwrap();
        let s = t.summary_statistics();
        assert_eq!(s.row_sums, [3, 7]);
        assert_eq!(s.col_sums, [4, 6]);
        assert_eq!(s.total, 10);
    }

    #[test]
    fn summary_of_zero_and_identity() {
        let z = ContingencyTable::zeros(2, 2).summary_statistics();
        assert_eq!((z.row_sums, z.col_sums, z.total), (vec![0, 0], vec![0, 0], 0));

        let id = ContingencyTable::from_rows(&[[1, 0, 0], [0, 1, 0], [0, 0, 1]]).unwrap();
        let s = id.summary_statistics();
        assert_eq!((s.row_sums, s.col_sums, s.total), (vec![1; 3], vec![1; 3], 3));
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(ContingencyTable::new(0, 2, vec![]).is_err());
        assert!(ContingencyTable::new(2, 2, vec![1, 2, 3]).is_err());
        assert!(ContingencyTable::from_rows(&[vec![1, 2], vec![3]]).is_err());
        assert!(IntensityMatrix::new(1, 2, vec![1.0, 0.0]).is_err());
        assert!(IntensityMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(CostMatrix::new(1, 2, vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn large_totals_do_not_overflow() {
        let big = (1u64 << 62) - 1;
        let t = ContingencyTable::from_rows(&[[big, 1]]).unwrap();
        assert_eq!(t.total(), big + 1);
    }

    #[test]
    fn observed_data_lengths_are_checked() {
        let d = ObservedData {
            log_attraction: Some(vec![0.0; 3]),
            ..Default::default()
        };
        assert!(d.validate(2, 3).is_ok());
        assert!(d.validate(2, 2).is_err());
    }

    proptest! {
        #[test]
        fn margins_are_consistent(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let cells: Vec<u64> = (0..rows * cols)
                .map(|k| (seed.wrapping_mul(k as u64 + 1) >> 40) % 50)
                .collect();
            let t = ContingencyTable::new(rows, cols, cells).unwrap();
            let s = t.summary_statistics();
            prop_assert_eq!(s.row_sums.iter().sum::<u64>(), s.total);
            prop_assert_eq!(s.col_sums.iter().sum::<u64>(), s.total);
            prop_assert_eq!(t.summary_statistics(), s);
        }

        #[test]
        fn intensity_margins_agree(values in proptest::collection::vec(0.01f64..100.0, 12)) {
            let m = IntensityMatrix::new(3, 4, values).unwrap();
            let total = m.total();
            let r: f64 = m.row_sums().iter().sum();
            let c: f64 = m.col_sums().iter().sum();
            prop_assert!((r - total).abs() <= 1e-10 * total);
            prop_assert!((c - total).abs() <= 1e-10 * total);
        }
    }
}
