use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::intensity::ipf_balance;
use crate::math;
use crate::table::{ContingencyTable, IntensityMatrix};

const IPF_TOL: f64 = 1e-10;
const IPF_MAX_ITER: usize = 1000;

/// Deterministic admissible starting table.
///
/// Fixed cells are planted first. With both margins the free cells are
/// fitted to the remaining margins by IPF on `Lambda`, floored, and the
/// integer deficits are repaired: first greedily by largest fractional part,
/// then along augmenting paths. A single margin or a bare total is
/// apportioned by largest remainder. Without any margin only the fixed
/// cells are set.
pub fn init_table(constraints: &ConstraintSet, lam: &IntensityMatrix) -> Result<ContingencyTable> {
    let (rows, cols) = (lam.rows(), lam.cols());
    constraints.validate(rows, cols)?;
    let mask = constraints.fixed_mask(rows, cols);
    let mut table = ContingencyTable::zeros(rows, cols);
    for c in constraints.effective_fixed_cells() {
        table.set(c.row, c.col, c.value);
    }
    let weight = |k: usize| if mask[k] { 0.0 } else { lam.values()[k] };

    let row_t = constraints.effective_row_sums().map(|r| remaining(r, &table.row_sums()));
    let col_t = constraints.effective_col_sums().map(|c| remaining(c, &table.col_sums()));
    match (row_t, col_t) {
        (Some(r), Some(c)) if constraints.symmetric => {
            fill_symmetric(&mut table, &mask, lam, &r)?;
            let _ = c;
        }
        (Some(r), Some(c)) => fill_both(&mut table, &mask, lam, &r, &c)?,
        (Some(r), None) => {
            for (i, &n) in r.iter().enumerate() {
                let idx: Vec<usize> = (0..cols).map(|j| i * cols + j).collect();
                apportion(&mut table, &idx, &idx.iter().map(|&k| weight(k)).collect::<Vec<_>>(), n)?;
            }
        }
        (None, Some(c)) => {
            for (j, &n) in c.iter().enumerate() {
                let idx: Vec<usize> = (0..rows).map(|i| i * cols + j).collect();
                apportion(&mut table, &idx, &idx.iter().map(|&k| weight(k)).collect::<Vec<_>>(), n)?;
            }
        }
        (None, None) => {
            if let Some(t) = constraints.total {
                let n = t - table.total();
                let idx: Vec<usize> = (0..rows * cols).collect();
                apportion(&mut table, &idx, &idx.iter().map(|&k| weight(k)).collect::<Vec<_>>(), n)?;
            }
        }
    }
    if !constraints.is_admissible(&table)? {
        return Err(Error::Invariant("initial table is not admissible"));
    }
    Ok(table)
}

fn remaining(target: &[u64], fixed: &[u64]) -> Vec<u64> {
    target.iter().zip(fixed).map(|(t, f)| t - f).collect()
}

/// Largest-remainder split of `n` units over `idx` proportionally to `w`.
fn apportion(table: &mut ContingencyTable, idx: &[usize], w: &[f64], n: u64) -> Result<()> {
    if n == 0 {
        return Ok(());
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::Infeasible(format!("{n} units but no free cell to hold them")));
    }
    let quota: Vec<f64> = w.iter().map(|x| n as f64 * x / total).collect();
    let mut given: Vec<u64> = quota.iter().map(|q| math::floor(*q) as u64).collect();
    let mut left = n.saturating_sub(given.iter().sum());
    let mut order: Vec<usize> = (0..w.len()).filter(|&k| w[k] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let fa = quota[a] - math::floor(quota[a]);
        let fb = quota[b] - math::floor(quota[b]);
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut k = 0;
    while left > 0 {
        given[order[k % order.len()]] += 1;
        left -= 1;
        k += 1;
    }
    let cells = table.cells_mut();
    for (&c, g) in idx.iter().zip(given) {
        cells[c] += g;
    }
    Ok(())
}

fn fill_both(
    table: &mut ContingencyTable,
    mask: &[bool],
    lam: &IntensityMatrix,
    rows_t: &[u64],
    cols_t: &[u64],
) -> Result<()> {
    let (rows, cols) = (table.rows(), table.cols());
    let mut m: Vec<f64> = (0..rows * cols)
        .map(|k| if mask[k] { 0.0 } else { lam.values()[k] })
        .collect();
    let rf: Vec<f64> = rows_t.iter().map(|&v| v as f64).collect();
    let cf: Vec<f64> = cols_t.iter().map(|&v| v as f64).collect();
    ipf_balance(&mut m, rows, cols, &rf, &cf, IPF_TOL, IPF_MAX_ITER);

    let mut add = vec![0u64; rows * cols];
    for (a, v) in add.iter_mut().zip(&m) {
        *a = math::floor(v.max(0.0)) as u64;
    }
    // Unconverged IPF can overshoot a row; trim the largest cells.
    for i in 0..rows {
        let row = &mut add[i * cols..(i + 1) * cols];
        let mut over = row.iter().sum::<u64>().saturating_sub(rows_t[i]);
        while over > 0 {
            let j = (0..cols).max_by_key(|&j| (row[j], core::cmp::Reverse(j))).unwrap();
            let d = over.min(row[j]);
            row[j] -= d;
            over -= d;
        }
    }
    for j in 0..cols {
        let mut over = (0..rows).map(|i| add[i * cols + j]).sum::<u64>().saturating_sub(cols_t[j]);
        while over > 0 {
            let i = (0..rows).max_by_key(|&i| (add[i * cols + j], core::cmp::Reverse(i))).unwrap();
            let d = over.min(add[i * cols + j]);
            add[i * cols + j] -= d;
            over -= d;
        }
    }

    let mut dr: Vec<u64> = (0..rows)
        .map(|i| rows_t[i] - add[i * cols..(i + 1) * cols].iter().sum::<u64>())
        .collect();
    let mut dc: Vec<u64> = (0..cols)
        .map(|j| cols_t[j] - (0..rows).map(|i| add[i * cols + j]).sum::<u64>())
        .collect();

    let mut order: Vec<usize> = (0..rows * cols).filter(|&k| !mask[k]).collect();
    order.sort_by(|&a, &b| {
        let fa = m[a] - math::floor(m[a]);
        let fb = m[b] - math::floor(m[b]);
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in &order {
        let (i, j) = (k / cols, k % cols);
        if dr[i] > 0 && dc[j] > 0 {
            add[k] += 1;
            dr[i] -= 1;
            dc[j] -= 1;
        }
    }
    // Bulk fill for large residual deficits before path search.
    for &k in &order {
        let (i, j) = (k / cols, k % cols);
        let d = dr[i].min(dc[j]);
        if d > 0 {
            add[k] += d;
            dr[i] -= d;
            dc[j] -= d;
        }
    }
    while let Some(i0) = dr.iter().position(|&d| d > 0) {
        augment(&mut add, mask, rows, cols, i0, &mut dr, &mut dc)?;
    }
    let cells = table.cells_mut();
    for (c, a) in cells.iter_mut().zip(add) {
        *c += a;
    }
    Ok(())
}

/// Moves one unit from deficit row `i0` to some deficit column along an
/// alternating path `+(i0, j1) -(i1, j1) +(i1, j2) ...` over free cells.
fn augment(
    add: &mut [u64],
    mask: &[bool],
    rows: usize,
    cols: usize,
    i0: usize,
    dr: &mut [u64],
    dc: &mut [u64],
) -> Result<()> {
    // parent of column j: the row reached from; parent of row i: the column.
    let mut col_from = vec![usize::MAX; cols];
    let mut row_from = vec![usize::MAX; rows];
    let mut seen_row = vec![false; rows];
    seen_row[i0] = true;
    let mut queue = VecDeque::from([i0]);
    let mut end = None;
    'bfs: while let Some(i) = queue.pop_front() {
        for j in 0..cols {
            if mask[i * cols + j] || col_from[j] != usize::MAX {
                continue;
            }
            col_from[j] = i;
            if dc[j] > 0 {
                end = Some(j);
                break 'bfs;
            }
            for i2 in 0..rows {
                if !seen_row[i2] && !mask[i2 * cols + j] && add[i2 * cols + j] > 0 {
                    seen_row[i2] = true;
                    row_from[i2] = j;
                    queue.push_back(i2);
                }
            }
        }
    }
    let Some(mut j) = end else {
        return Err(Error::Infeasible(format!(
            "no admissible table: row {} cannot be completed",
            i0 + 1
        )));
    };
    dc[j] -= 1;
    dr[i0] -= 1;
    loop {
        let i = col_from[j];
        add[i * cols + j] += 1;
        if i == i0 {
            break;
        }
        let jp = row_from[i];
        add[i * cols + jp] -= 1;
        j = jp;
    }
    Ok(())
}

fn fill_symmetric(
    table: &mut ContingencyTable,
    mask: &[bool],
    lam: &IntensityMatrix,
    target: &[u64],
) -> Result<()> {
    let n = table.rows();
    let mut m: Vec<f64> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            if mask[k] {
                0.0
            } else {
                0.5 * (lam.values()[i * n + j] + lam.values()[j * n + i])
            }
        })
        .collect();
    let tf: Vec<f64> = target.iter().map(|&v| v as f64).collect();
    ipf_balance(&mut m, n, n, &tf, &tf, IPF_TOL, IPF_MAX_ITER);
    let mut add = vec![0u64; n * n];
    for i in 0..n {
        for j in i..n {
            let v = 0.5 * (m[i * n + j] + m[j * n + i]);
            let f = math::floor(v.max(0.0)) as u64;
            add[i * n + j] = f;
            add[j * n + i] = f;
        }
    }
    let row_sum = |add: &[u64], i: usize| add[i * n..(i + 1) * n].iter().sum::<u64>();
    // Trim overshoot, diagonal first, then symmetric pairs.
    for i in 0..n {
        while row_sum(&add, i) > target[i] {
            if add[i * n + i] > 0 {
                add[i * n + i] -= 1;
                continue;
            }
            let j = (0..n).max_by_key(|&j| (add[i * n + j], core::cmp::Reverse(j))).unwrap();
            add[i * n + j] -= 1;
            add[j * n + i] -= 1;
        }
    }
    let mut d: Vec<u64> = (0..n).map(|i| target[i] - row_sum(&add, i)).collect();
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| !mask[i * n + j])
        .collect();
    pairs.sort_by(|&(a, b), &(c, e)| {
        let fa = m[a * n + b] - math::floor(m[a * n + b]);
        let fb = m[c * n + e] - math::floor(m[c * n + e]);
        fb.total_cmp(&fa).then((a, b).cmp(&(c, e)))
    });
    for &(i, j) in &pairs {
        let k = d[i].min(d[j]);
        if k > 0 {
            add[i * n + j] += k;
            add[j * n + i] += k;
            d[i] -= k;
            d[j] -= k;
        }
    }
    for i in 0..n {
        if d[i] > 0 {
            if mask[i * n + i] {
                return Err(Error::Infeasible(format!(
                    "symmetric table: row {} cannot be completed",
                    i + 1
                )));
            }
            add[i * n + i] += d[i];
            d[i] = 0;
        }
    }
    let cells = table.cells_mut();
    for (c, a) in cells.iter_mut().zip(add) {
        *c += a;
    }
    Ok(())
}
