//! Summary-statistic constraints on tables and admissibility.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::table::ContingencyTable;

/// A cell whose value is known exactly (0-based indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FixedCell {
    pub row: usize,
    pub col: usize,
    pub value: u64,
}

impl FixedCell {
    pub fn new(row: usize, col: usize, value: u64) -> Self {
        Self { row, col, value }
    }
}

/// Whether the target table law can be sampled directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tractability {
    /// At most one margin family plus an optional total and fixed cells:
    /// Poisson or (products of) multinomials.
    Tractable,
    /// Both margins (or symmetry): Fisher's non-central hypergeometric on
    /// the fiber, sampled by Markov-basis MCMC.
    Intractable,
}

/// Declarative set of fixed summary statistics. An empty set means the
/// unconstrained (independent Poisson) case.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    pub total: Option<u64>,
    pub row_sums: Option<Vec<u64>>,
    pub col_sums: Option<Vec<u64>>,
    pub fixed_cells: Vec<FixedCell>,
    pub symmetric: bool,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_total(mut self, total: u64) -> Self {
        self.total = Some(total);
        self
    }

    pub fn with_row_sums(mut self, rows: Vec<u64>) -> Self {
        self.row_sums = Some(rows);
        self
    }

    pub fn with_col_sums(mut self, cols: Vec<u64>) -> Self {
        self.col_sums = Some(cols);
        self
    }

    pub fn with_fixed_cells(mut self, cells: Vec<FixedCell>) -> Self {
        self.fixed_cells = cells;
        self
    }

    pub fn with_symmetry(mut self) -> Self {
        self.symmetric = true;
        self
    }

    /// Both margins, read off a table.
    pub fn margins_of(table: &ContingencyTable) -> Self {
        let s = table.summary_statistics();
        Self {
            total: Some(s.total),
            row_sums: Some(s.row_sums),
            col_sums: Some(s.col_sums),
            ..Self::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_none()
            && self.row_sums.is_none()
            && self.col_sums.is_none()
            && self.fixed_cells.is_empty()
            && !self.symmetric
    }

    /// Row sums, falling back to column sums under symmetry.
    pub fn effective_row_sums(&self) -> Option<&[u64]> {
        match (&self.row_sums, self.symmetric) {
            (Some(r), _) => Some(r),
            (None, true) => self.col_sums.as_deref(),
            (None, false) => None,
        }
    }

    /// Column sums, falling back to row sums under symmetry.
    pub fn effective_col_sums(&self) -> Option<&[u64]> {
        match (&self.col_sums, self.symmetric) {
            (Some(c), _) => Some(c),
            (None, true) => self.row_sums.as_deref(),
            (None, false) => None,
        }
    }

    /// The table total implied by any of total / row sums / column sums.
    pub fn total_mass(&self) -> Option<u64> {
        self.total
            .or_else(|| self.row_sums.as_ref().map(|r| r.iter().sum()))
            .or_else(|| self.col_sums.as_ref().map(|c| c.iter().sum()))
    }

    /// Fixed cells including mirrored copies when the set is symmetric.
    pub fn effective_fixed_cells(&self) -> Vec<FixedCell> {
        let mut map: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for c in &self.fixed_cells {
            map.insert((c.row, c.col), c.value);
            if self.symmetric {
                map.insert((c.col, c.row), c.value);
            }
        }
        map.into_iter()
            .map(|((row, col), value)| FixedCell { row, col, value })
            .collect()
    }

    /// Row-major mask of fixed cells (mirrors included under symmetry).
    pub fn fixed_mask(&self, rows: usize, cols: usize) -> Vec<bool> {
        let mut mask = vec![false; rows * cols];
        for c in self.effective_fixed_cells() {
            if c.row < rows && c.col < cols {
                mask[c.row * cols + c.col] = true;
            }
        }
        mask
    }

    /// Checks internal consistency against an `rows x cols` table and
    /// classifies the set.
    pub fn validate(&self, rows: usize, cols: usize) -> Result<Tractability> {
        let bad = |msg: alloc::string::String| Err(Error::InconsistentConstraints(msg));

        if let Some(r) = &self.row_sums {
            if r.len() != rows {
                return Err(Error::LengthMismatch {
                    what: "row sums",
                    expected: rows,
                    got: r.len(),
                });
            }
        }
        if let Some(c) = &self.col_sums {
            if c.len() != cols {
                return Err(Error::LengthMismatch {
                    what: "column sums",
                    expected: cols,
                    got: c.len(),
                });
            }
        }
        let row_total = self.row_sums.as_ref().map(|r| r.iter().sum::<u64>());
        let col_total = self.col_sums.as_ref().map(|c| c.iter().sum::<u64>());
        if let (Some(a), Some(b)) = (row_total, col_total) {
            if a != b {
                return bad(format!("row sums total {a} but column sums total {b}"));
            }
        }
        if let Some(t) = self.total {
            for (name, s) in [("row", row_total), ("column", col_total)] {
                if let Some(s) = s {
                    if s != t {
                        return bad(format!("{name} sums total {s} but the table total is {t}"));
                    }
                }
            }
        }

        if self.symmetric {
            if rows != cols {
                return bad(format!("symmetric constraints need a square table, got {rows}x{cols}"));
            }
            match (&self.row_sums, &self.col_sums) {
                (None, None) => {
                    return bad("symmetric constraints need row or column sums".into());
                }
                (Some(r), Some(c)) if r != c => {
                    return bad("symmetric constraints need equal row and column sums".into());
                }
                _ => {}
            }
        }

        let mut seen: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for c in &self.fixed_cells {
            if c.row >= rows || c.col >= cols {
                return bad(format!(
                    "fixed cell ({}, {}) lies outside a {rows}x{cols} table",
                    c.row + 1,
                    c.col + 1
                ));
            }
            if seen.insert((c.row, c.col), c.value).is_some() {
                return bad(format!("fixed cell ({}, {}) listed twice", c.row + 1, c.col + 1));
            }
        }
        if self.symmetric {
            for (&(i, j), &v) in &seen {
                if let Some(&w) = seen.get(&(j, i)) {
                    if v != w {
                        return bad(format!(
                            "fixed cells ({}, {}) and ({}, {}) break symmetry",
                            i + 1,
                            j + 1,
                            j + 1,
                            i + 1
                        ));
                    }
                }
            }
        }

        let fixed = self.effective_fixed_cells();
        let mut fixed_row = vec![0u64; rows];
        let mut fixed_row_n = vec![0usize; rows];
        let mut fixed_col = vec![0u64; cols];
        let mut fixed_col_n = vec![0usize; cols];
        for c in &fixed {
            fixed_row[c.row] += c.value;
            fixed_row_n[c.row] += 1;
            fixed_col[c.col] += c.value;
            fixed_col_n[c.col] += 1;
        }
        if let Some(r) = self.effective_row_sums() {
            for i in 0..rows {
                if fixed_row[i] > r[i] || (fixed_row_n[i] == cols && fixed_row[i] != r[i]) {
                    return bad(format!(
                        "fixed cells in row {} sum to {} against a row sum of {}",
                        i + 1,
                        fixed_row[i],
                        r[i]
                    ));
                }
            }
        }
        if let Some(c) = self.effective_col_sums() {
            for j in 0..cols {
                if fixed_col[j] > c[j] || (fixed_col_n[j] == rows && fixed_col[j] != c[j]) {
                    return bad(format!(
                        "fixed cells in column {} sum to {} against a column sum of {}",
                        j + 1,
                        fixed_col[j],
                        c[j]
                    ));
                }
            }
        }
        if let Some(t) = self.total {
            let s: u64 = fixed.iter().map(|c| c.value).sum();
            if s > t || (fixed.len() == rows * cols && s != t) {
                return bad(format!("fixed cells sum to {s} against a total of {t}"));
            }
        }

        Ok(self.classify())
    }

    /// Classification without consistency checks.
    pub fn classify(&self) -> Tractability {
        let both = self.row_sums.is_some() && self.col_sums.is_some();
        if both || self.symmetric {
            Tractability::Intractable
        } else {
            Tractability::Tractable
        }
    }

    /// True iff every declared statistic of `table` matches exactly.
    pub fn is_admissible(&self, table: &ContingencyTable) -> Result<bool> {
        let (rows, cols) = (table.rows(), table.cols());
        if let Some(r) = &self.row_sums {
            if r.len() != rows {
                return Err(shape_err(self, table));
            }
        }
        if let Some(c) = &self.col_sums {
            if c.len() != cols {
                return Err(shape_err(self, table));
            }
        }
        if let Some(c) = self.fixed_cells.iter().find(|c| c.row >= rows || c.col >= cols) {
            return Err(Error::InvalidArgument(format!(
                "fixed cell ({}, {}) lies outside a {rows}x{cols} table",
                c.row + 1,
                c.col + 1
            )));
        }

        if let Some(t) = self.total {
            if table.total() != t {
                return Ok(false);
            }
        }
        if let Some(r) = self.effective_row_sums() {
            if table.row_sums() != r {
                return Ok(false);
            }
        }
        if let Some(c) = self.effective_col_sums() {
            if table.col_sums() != c {
                return Ok(false);
            }
        }
        if self.effective_fixed_cells().iter().any(|c| table.get(c.row, c.col) != c.value) {
            return Ok(false);
        }
        if self.symmetric && !table.is_symmetric() {
            return Ok(false);
        }
        Ok(true)
    }
}

fn shape_err(c: &ConstraintSet, t: &ContingencyTable) -> Error {
    Error::ShapeMismatch {
        expected_rows: c.row_sums.as_ref().map_or(t.rows(), |r| r.len()),
        expected_cols: c.col_sums.as_ref().map_or(t.cols(), |r| r.len()),
        rows: t.rows(),
        cols: t.cols(),
    }
}

/// Free function form of [`ConstraintSet::is_admissible`].
pub fn is_admissible(table: &ContingencyTable, constraints: &ConstraintSet) -> Result<bool> {
    constraints.is_admissible(table)
}

/// Free function form of [`ConstraintSet::validate`].
pub fn validate_constraints(
    constraints: &ConstraintSet,
    rows: usize,
    cols: usize,
) -> Result<Tractability> {
    constraints.validate(rows, cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(rows: &[[u64; 2]]) -> ContingencyTable {
        ContingencyTable::from_rows(rows).unwrap()
    }

    #[test]
    fn permutation_matrix_is_admissible() {
        let c = ConstraintSet::new().with_row_sums(vec![1, 1]).with_col_sums(vec![1, 1]);
        assert!(c.is_admissible(&t(&[[1, 0], [0, 1]])).unwrap());
    }

    #[test]
    fn contradicted_margin_is_rejected() {
        let c = ConstraintSet::new().with_row_sums(vec![1, 1]).with_col_sums(vec![2, 0]);
        assert!(!c.is_admissible(&t(&[[1, 0], [0, 1]])).unwrap());
    }

    #[test]
    fn total_and_fixed_cell() {
        // (1,1) in 1-based notation is (0,0) here.
        let c = ConstraintSet::new()
            .with_total(2)
            .with_fixed_cells(vec![FixedCell::new(0, 0, 0)]);
        assert!(c.is_admissible(&t(&[[0, 1], [1, 0]])).unwrap());
        assert!(!c.is_admissible(&t(&[[1, 0], [0, 1]])).unwrap());
    }

    #[test]
    fn admissibility_shape_mismatch_errors() {
        let c = ConstraintSet::new().with_row_sums(vec![1, 1, 1]);
        assert!(c.is_admissible(&t(&[[1, 0], [0, 1]])).is_err());
    }

    #[test]
    fn classification() {
        let total = ConstraintSet::new().with_total(5);
        assert_eq!(total.validate(2, 2).unwrap(), Tractability::Tractable);
        let rows = ConstraintSet::new()
            .with_row_sums(vec![2, 3])
            .with_fixed_cells(vec![FixedCell::new(0, 1, 1)]);
        assert_eq!(rows.validate(2, 2).unwrap(), Tractability::Tractable);
        let both = ConstraintSet::new().with_row_sums(vec![2, 3]).with_col_sums(vec![1, 4]);
        assert_eq!(both.validate(2, 2).unwrap(), Tractability::Intractable);
        assert_eq!(ConstraintSet::new().validate(3, 3).unwrap(), Tractability::Tractable);
    }

    #[test]
    fn conservation_violation_is_an_error() {
        let c = ConstraintSet::new().with_row_sums(vec![1, 2]).with_col_sums(vec![2, 2]);
        assert!(matches!(c.validate(2, 2), Err(Error::InconsistentConstraints(_))));
        let c = ConstraintSet::new().with_total(4).with_row_sums(vec![1, 2]);
        assert!(c.validate(2, 2).is_err());
    }

    #[test]
    fn fixed_cell_errors() {
        let out = ConstraintSet::new().with_fixed_cells(vec![FixedCell::new(2, 0, 1)]);
        assert!(out.validate(2, 2).is_err());
        let dup = ConstraintSet::new()
            .with_fixed_cells(vec![FixedCell::new(0, 0, 1), FixedCell::new(0, 0, 2)]);
        assert!(dup.validate(2, 2).is_err());
        let too_big = ConstraintSet::new()
            .with_row_sums(vec![1, 1])
            .with_fixed_cells(vec![FixedCell::new(0, 0, 2)]);
        assert!(too_big.validate(2, 2).is_err());
        let full_row = ConstraintSet::new()
            .with_row_sums(vec![3, 1])
            .with_fixed_cells(vec![FixedCell::new(0, 0, 1), FixedCell::new(0, 1, 1)]);
        assert!(full_row.validate(2, 2).is_err());
    }

    #[test]
    fn symmetric_rules() {
        let ok = ConstraintSet::new().with_row_sums(vec![2, 2]).with_symmetry();
        assert_eq!(ok.validate(2, 2).unwrap(), Tractability::Intractable);
        assert_eq!(ok.effective_col_sums(), Some(&[2u64, 2][..]));
        let not_square = ConstraintSet::new().with_row_sums(vec![2, 2]).with_symmetry();
        assert!(not_square.validate(2, 3).is_err());
        let no_margin = ConstraintSet::new().with_symmetry();
        assert!(no_margin.validate(2, 2).is_err());
        let asym = ConstraintSet::new()
            .with_row_sums(vec![2, 2])
            .with_col_sums(vec![1, 3])
            .with_symmetry();
        assert!(asym.validate(2, 2).is_err());
        assert!(ok.is_admissible(&t(&[[0, 2], [2, 0]])).unwrap());
        assert!(ok.is_admissible(&t(&[[1, 1], [1, 1]])).unwrap());

        let cyclic =
            ContingencyTable::from_rows(&[[0u64, 1, 0], [0, 0, 1], [1, 0, 0]]).unwrap();
        let sym3 = ConstraintSet::new().with_row_sums(vec![1, 1, 1]).with_symmetry();
        assert!(!sym3.is_admissible(&cyclic).unwrap());
        assert!(ConstraintSet::margins_of(&cyclic).is_admissible(&cyclic).unwrap());
    }

    proptest! {
        #[test]
        fn own_margins_are_admissible(cells in proptest::collection::vec(0u64..20, 12)) {
            let table = ContingencyTable::new(3, 4, cells).unwrap();
            let c = ConstraintSet::margins_of(&table);
            prop_assert_eq!(c.validate(3, 4).unwrap(), Tractability::Intractable);
            prop_assert!(c.is_admissible(&table).unwrap());
        }

        #[test]
        fn single_margin_sets_are_tractable(
            rows in proptest::collection::vec(0u64..20, 3),
            with_total in any::<bool>(),
            n_fixed in 0usize..3,
        ) {
            let total: u64 = rows.iter().sum();
            let mut c = ConstraintSet::new().with_row_sums(rows.clone());
            if with_total {
                c = c.with_total(total);
            }
            let cells: Vec<FixedCell> = (0..n_fixed)
                .filter(|&i| rows[i] > 0)
                .map(|i| FixedCell::new(i, 0, rows[i] / 2))
                .collect();
            c = c.with_fixed_cells(cells);
            prop_assert_eq!(c.validate(3, 3).unwrap(), Tractability::Tractable);
        }
    }
}
