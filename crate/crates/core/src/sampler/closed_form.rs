use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use crate::constraints::{ConstraintSet, Tractability};
use crate::error::{Error, Result};
use crate::table::{ContingencyTable, IntensityMatrix};

/// Independent Poisson draw per cell, row-major.
pub fn sample_unconstrained<R: Rng + ?Sized>(
    lam: &IntensityMatrix,
    rng: &mut R,
) -> Result<ContingencyTable> {
    let cells = lam
        .values()
        .iter()
        .map(|&l| poisson(l, rng))
        .collect::<Result<Vec<u64>>>()?;
    ContingencyTable::new(lam.rows(), lam.cols(), cells)
}

fn poisson<R: Rng + ?Sized>(l: f64, rng: &mut R) -> Result<u64> {
    let d = Poisson::new(l)
        .map_err(|e| Error::InvalidArgument(format!("Poisson rate {l}: {e}")))?;
    Ok(d.sample(rng) as u64)
}

/// Multinomial draw of `n` units over `weights` by conditional binomials,
/// written into `out`. Zero weights receive nothing.
pub fn multinomial<R: Rng + ?Sized>(
    n: u64,
    weights: &[f64],
    rng: &mut R,
    out: &mut [u64],
) -> Result<()> {
    if out.len() != weights.len() {
        return Err(Error::LengthMismatch {
            what: "multinomial output",
            expected: weights.len(),
            got: out.len(),
        });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument("multinomial weights must be finite and >= 0".into()));
    }
    out.iter_mut().for_each(|o| *o = 0);
    let mut rest: f64 = weights.iter().sum();
    if n > 0 && rest <= 0.0 {
        return Err(Error::Infeasible(format!("{n} units but no cell can receive them")));
    }
    let last = weights.iter().rposition(|w| *w > 0.0);
    let mut left = n;
    for (k, (&w, o)) in weights.iter().zip(out.iter_mut()).enumerate() {
        if left == 0 {
            break;
        }
        if w <= 0.0 {
            continue;
        }
        if Some(k) == last {
            *o = left;
            break;
        }
        let p = (w / rest).clamp(0.0, 1.0);
        let draw = Binomial::new(left, p)
            .map_err(|e| Error::InvalidArgument(format!("binomial({left}, {p}): {e}")))?
            .sample(rng);
        *o = draw;
        left -= draw;
        rest -= w;
    }
    Ok(())
}

/// Closed-form draw under a tractable constraint set.
///
/// * no margin and no total: Poisson per free cell;
/// * total: one multinomial over the free cells;
/// * row sums: one multinomial per row, rows in order;
/// * column sums: one multinomial per column, columns in order.
///
/// Fixed cells are planted and their mass is removed from the constraint
/// before allocating the rest over the free cells.
pub fn sample_closed_form<R: Rng + ?Sized>(
    lam: &IntensityMatrix,
    constraints: &ConstraintSet,
    rng: &mut R,
) -> Result<ContingencyTable> {
    let (rows, cols) = (lam.rows(), lam.cols());
    if constraints.validate(rows, cols)? != Tractability::Tractable {
        return Err(Error::InvalidArgument(
            "closed-form sampling needs at most one margin family".into(),
        ));
    }
    let mask = constraints.fixed_mask(rows, cols);
    let mut table = ContingencyTable::zeros(rows, cols);
    for c in constraints.effective_fixed_cells() {
        table.set(c.row, c.col, c.value);
    }
    let free_weight = |k: usize| if mask[k] { 0.0 } else { lam.values()[k] };

    if let Some(r) = &constraints.row_sums {
        let fixed = table.row_sums();
        let mut buf = vec![0u64; cols];
        for i in 0..rows {
            let w: Vec<f64> = (0..cols).map(|j| free_weight(i * cols + j)).collect();
            multinomial(r[i] - fixed[i], &w, rng, &mut buf)?;
            add_into(&mut table, (0..cols).map(|j| i * cols + j), &buf);
        }
    } else if let Some(c) = &constraints.col_sums {
        let fixed = table.col_sums();
        let mut buf = vec![0u64; rows];
        for j in 0..cols {
            let w: Vec<f64> = (0..rows).map(|i| free_weight(i * cols + j)).collect();
            multinomial(c[j] - fixed[j], &w, rng, &mut buf)?;
            add_into(&mut table, (0..rows).map(|i| i * cols + j), &buf);
        }
    } else if let Some(t) = constraints.total {
        let w: Vec<f64> = (0..rows * cols).map(free_weight).collect();
        let mut buf = vec![0u64; rows * cols];
        multinomial(t - table.total(), &w, rng, &mut buf)?;
        add_into(&mut table, 0..rows * cols, &buf);
    } else {
        for k in 0..rows * cols {
            if !mask[k] {
                table.cells_mut()[k] = poisson(lam.values()[k], rng)?;
            }
        }
    }
    Ok(table)
}

fn add_into(table: &mut ContingencyTable, idx: impl Iterator<Item = usize>, vals: &[u64]) {
    let cells = table.cells_mut();
    for (k, v) in idx.zip(vals) {
        cells[k] += v;
    }
}
