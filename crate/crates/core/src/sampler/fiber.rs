use alloc::vec;
use alloc::vec::Vec;

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::table::ContingencyTable;

pub const DEFAULT_FIBER_LIMIT: usize = 100_000;

struct Search<'a> {
    rows: usize,
    cols: usize,
    constraints: &'a ConstraintSet,
    fixed: Vec<Option<u64>>,
    row_rem: Option<Vec<u64>>,
    col_rem: Option<Vec<u64>>,
    total_rem: Option<u64>,
    cells: Vec<u64>,
    out: Vec<ContingencyTable>,
    limit: usize,
}

/// Every table admissible for `constraints`, in lexicographic order of the
/// row-major cells. Fails once more than `max_size` tables are found.
pub fn enumerate_fiber(
    constraints: &ConstraintSet,
    rows: usize,
    cols: usize,
    max_size: usize,
) -> Result<Vec<ContingencyTable>> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("table dimensions must be positive".into()));
    }
    constraints.validate(rows, cols)?;
    let row_rem = constraints.effective_row_sums().map(<[u64]>::to_vec);
    let col_rem = constraints.effective_col_sums().map(<[u64]>::to_vec);
    let total_rem = constraints.total_mass();
    let mut fixed = vec![None; rows * cols];
    for c in constraints.effective_fixed_cells() {
        fixed[c.row * cols + c.col] = Some(c.value);
    }
    let unbounded = (0..rows * cols).any(|k| fixed[k].is_none())
        && row_rem.is_none()
        && col_rem.is_none()
        && total_rem.is_none();
    if unbounded {
        return Err(Error::InvalidArgument(
            "the fiber is infinite without a margin or total".into(),
        ));
    }
    let mut s = Search {
        rows,
        cols,
        constraints,
        fixed,
        row_rem,
        col_rem,
        total_rem,
        cells: vec![0; rows * cols],
        out: Vec::new(),
        limit: max_size,
    };
    s.visit(0)?;
    Ok(s.out)
}

impl Search<'_> {
    fn visit(&mut self, k: usize) -> Result<()> {
        if k == self.rows * self.cols {
            return self.emit();
        }
        let (i, j) = (k / self.cols, k % self.cols);
        let mut hi = u64::MAX;
        if let Some(r) = &self.row_rem {
            hi = hi.min(r[i]);
        }
        if let Some(c) = &self.col_rem {
            hi = hi.min(c[j]);
        }
        if let Some(t) = self.total_rem {
            hi = hi.min(t);
        }
        let mut lo = 0;
        let mut forced = self.fixed[k];
        if self.constraints.symmetric && i > j {
            forced = Some(self.cells[j * self.cols + i]);
        }
        if j + 1 == self.cols {
            if let Some(r) = &self.row_rem {
                forced = forced.map_or(Some(r[i]), |f| (f == r[i]).then_some(f));
                if forced.is_none() {
                    return Ok(());
                }
            }
        }
        if i + 1 == self.rows {
            if let Some(c) = &self.col_rem {
                forced = match forced {
                    None => Some(c[j]),
                    Some(f) if f == c[j] => Some(f),
                    Some(_) => return Ok(()),
                };
            }
        }
        if k + 1 == self.rows * self.cols {
            if let Some(t) = self.total_rem {
                forced = match forced {
                    None => Some(t),
                    Some(f) if f == t => Some(f),
                    Some(_) => return Ok(()),
                };
            }
        }
        if let Some(f) = forced {
            if f > hi {
                return Ok(());
            }
            lo = f;
            hi = f;
        }
        for v in lo..=hi {
            self.set(k, i, j, v, true);
            let r = self.visit(k + 1);
            self.set(k, i, j, v, false);
            r?;
        }
        Ok(())
    }

    fn set(&mut self, k: usize, i: usize, j: usize, v: u64, take: bool) {
        let apply = |x: &mut u64| {
            if take {
                *x -= v
            } else {
                *x += v
            }
        };
        if let Some(r) = &mut self.row_rem {
            apply(&mut r[i]);
        }
        if let Some(c) = &mut self.col_rem {
            apply(&mut c[j]);
        }
        if let Some(t) = &mut self.total_rem {
            apply(t);
        }
        self.cells[k] = if take { v } else { 0 };
    }

    fn emit(&mut self) -> Result<()> {
        let t = ContingencyTable::new(self.rows, self.cols, self.cells.clone())?;
        if self.constraints.is_admissible(&t)? {
            if self.out.len() == self.limit {
                return Err(Error::FiberTooLarge { limit: self.limit });
            }
            self.out.push(t);
        }
        Ok(())
    }
}
