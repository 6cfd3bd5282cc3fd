use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::table::ContingencyTable;

/// Largest basis [`MarkovBasis::new`] stores explicitly.
pub const EXPLICIT_BASIS_LIMIT: usize = 1 << 16;
/// Hard cap for [`build_markov_basis`].
const BUILD_LIMIT: usize = 1 << 24;

/// A margin-preserving integer move over at most eight cells.
///
/// Entries are `(row-major cell index, coefficient)`, sorted by index, with
/// the first coefficient positive. A move is applied as `T + eta f` for an
/// integer `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MarkovBasisMove {
    len: u8,
    entries: [(usize, i64); 8],
}

impl MarkovBasisMove {
    fn from_accumulated(mut acc: [(usize, i64); 8], n: usize) -> Self {
        let mut len = 0;
        for k in 0..n {
            if acc[k].1 != 0 {
                acc[len] = acc[k];
                len += 1;
            }
        }
        for e in acc.iter_mut().skip(len) {
            *e = (0, 0);
        }
        acc[..len].sort_unstable();
        let g = acc[..len].iter().fold(0, |g, e| gcd(g, e.1.unsigned_abs()));
        let sign = if len > 0 && acc[0].1 < 0 { -1 } else { 1 };
        if g > 1 || sign < 0 {
            for e in acc[..len].iter_mut() {
                e.1 = sign * e.1 / g as i64;
            }
        }
        Self {
            len: len as u8,
            entries: acc,
        }
    }

    /// The basic move `+1` at `(i1, j1)` and `(i2, j2)`, `-1` at `(i1, j2)`
    /// and `(i2, j1)`.
    pub fn corners(i1: usize, j1: usize, i2: usize, j2: usize, cols: usize) -> Self {
        let mut acc = [(0usize, 0i64); 8];
        acc[0] = (i1 * cols + j1, 1);
        acc[1] = (i2 * cols + j2, 1);
        acc[2] = (i1 * cols + j2, -1);
        acc[3] = (i2 * cols + j1, -1);
        Self::from_accumulated(acc, 4)
    }

    /// The basic move plus its transpose, divided by the gcd of its
    /// coefficients. Keeps a symmetric table symmetric.
    pub fn symmetric(i1: usize, j1: usize, i2: usize, j2: usize, cols: usize) -> Self {
        let raw = [
            (i1, j1, 1),
            (i2, j2, 1),
            (i1, j2, -1),
            (i2, j1, -1),
            (j1, i1, 1),
            (j2, i2, 1),
            (j2, i1, -1),
            (j1, i2, -1),
        ];
        let mut acc = [(0usize, 0i64); 8];
        let mut n = 0;
        for (r, c, v) in raw {
            let idx = r * cols + c;
            match acc[..n].iter_mut().find(|e| e.0 == idx) {
                Some(e) => e.1 += v,
                None => {
                    acc[n] = (idx, v);
                    n += 1;
                }
            }
        }
        Self::from_accumulated(acc, n)
    }

    pub fn entries(&self) -> &[(usize, i64)] {
        &self.entries[..self.len as usize]
    }

    /// The feasible interval `[lo, hi]` of `eta` with `T + eta f >= 0`.
    pub fn support(&self, cells: &[u64]) -> (i64, i64) {
        let mut lo = i64::MIN;
        let mut hi = i64::MAX;
        for &(idx, s) in self.entries() {
            let t = cells[idx] as i64;
            if s > 0 {
                lo = lo.max(-(t / s));
            } else {
                hi = hi.min(t / -s);
            }
        }
        (lo, hi)
    }

    /// `T + eta f`; the caller guarantees `eta` lies in the support.
    pub fn apply(&self, table: &mut ContingencyTable, eta: i64) {
        let cells = table.cells_mut();
        for &(idx, s) in self.entries() {
            cells[idx] = (cells[idx] as i64 + eta * s) as u64;
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn check_shape(rows: usize, cols: usize, constraints: &ConstraintSet) -> Result<Vec<bool>> {
    constraints.validate(rows, cols)?;
    Ok(constraints.fixed_mask(rows, cols))
}

fn touches_fixed(mask: &[bool], cols: usize, i1: usize, j1: usize, i2: usize, j2: usize) -> bool {
    mask[i1 * cols + j1] || mask[i2 * cols + j2] || mask[i1 * cols + j2] || mask[i2 * cols + j1]
}

/// All `I(I-1)J(J-1)/4` basic moves not touching a fixed cell, in
/// lexicographic order of `(i1, i2, j1, j2)`. Under symmetry the mirrored
/// moves are returned instead, deduplicated and sorted.
pub fn build_markov_basis(
    rows: usize,
    cols: usize,
    constraints: &ConstraintSet,
) -> Result<Vec<MarkovBasisMove>> {
    let mask = check_shape(rows, cols, constraints)?;
    let count = basic_move_count(rows, cols);
    if count > BUILD_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "{count} basis moves are too many to list; use the implicit basis"
        )));
    }
    Ok(list_moves(rows, cols, &mask, constraints.symmetric))
}

fn basic_move_count(rows: usize, cols: usize) -> usize {
    let pairs = |n: usize| n * n.saturating_sub(1) / 2;
    pairs(rows).saturating_mul(pairs(cols))
}

fn list_moves(rows: usize, cols: usize, mask: &[bool], symmetric: bool) -> Vec<MarkovBasisMove> {
    let mut out = Vec::new();
    let mut set = BTreeSet::new();
    for i1 in 0..rows {
        for i2 in i1 + 1..rows {
            for j1 in 0..cols {
                for j2 in j1 + 1..cols {
                    if touches_fixed(mask, cols, i1, j1, i2, j2) {
                        continue;
                    }
                    if symmetric {
                        set.insert(MarkovBasisMove::symmetric(i1, j1, i2, j2, cols));
                    } else {
                        out.push(MarkovBasisMove::corners(i1, j1, i2, j2, cols));
                    }
                }
            }
        }
    }
    if symmetric {
        out.extend(set);
    }
    out
}

/// Source of moves for the Gibbs chain.
///
/// Small problems hold the full list and pick uniformly from it. Large
/// problems draw `i1 < i2`, `j1 < j2` uniformly and reject draws touching a
/// fixed cell, which is uniform over the same basic moves without storing
/// them. Under symmetry the implicit variant weighs a mirrored move by the
/// number of basic moves generating it; any fixed move weights leave the
/// Gibbs kernel reversible.
#[derive(Debug, Clone, PartialEq)]
pub enum MarkovBasis {
    Explicit(Vec<MarkovBasisMove>),
    Implicit {
        rows: usize,
        cols: usize,
        mask: Vec<bool>,
        symmetric: bool,
        non_empty: bool,
    },
}

impl MarkovBasis {
    pub fn new(rows: usize, cols: usize, constraints: &ConstraintSet) -> Result<Self> {
        if basic_move_count(rows, cols) <= EXPLICIT_BASIS_LIMIT {
            Self::explicit(rows, cols, constraints)
        } else {
            Self::implicit(rows, cols, constraints)
        }
    }

    pub fn explicit(rows: usize, cols: usize, constraints: &ConstraintSet) -> Result<Self> {
        build_markov_basis(rows, cols, constraints).map(MarkovBasis::Explicit)
    }

    pub fn implicit(rows: usize, cols: usize, constraints: &ConstraintSet) -> Result<Self> {
        let mask = check_shape(rows, cols, constraints)?;
        let non_empty = any_free_rectangle(rows, cols, &mask);
        Ok(MarkovBasis::Implicit {
            rows,
            cols,
            mask,
            symmetric: constraints.symmetric,
            non_empty,
        })
    }

    pub fn is_empty(&self) -> bool {
        match self {
            MarkovBasis::Explicit(m) => m.is_empty(),
            MarkovBasis::Implicit { non_empty, .. } => !non_empty,
        }
    }

    /// Draws one move. Panics on an empty basis; check [`Self::is_empty`].
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> MarkovBasisMove {
        match self {
            MarkovBasis::Explicit(m) => m[rng.random_range(0..m.len())],
            MarkovBasis::Implicit {
                rows,
                cols,
                mask,
                symmetric,
                non_empty,
            } => {
                assert!(*non_empty, "sampling from an empty basis");
                loop {
                    let (i1, i2) = pair(rng, *rows);
                    let (j1, j2) = pair(rng, *cols);
                    if touches_fixed(mask, *cols, i1, j1, i2, j2) {
                        continue;
                    }
                    return if *symmetric {
                        MarkovBasisMove::symmetric(i1, j1, i2, j2, *cols)
                    } else {
                        MarkovBasisMove::corners(i1, j1, i2, j2, *cols)
                    };
                }
            }
        }
    }
}

fn pair<R: Rng + ?Sized>(rng: &mut R, n: usize) -> (usize, usize) {
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (a.min(b), a.max(b))
}

/// Whether two rows share at least two free columns.
fn any_free_rectangle(rows: usize, cols: usize, mask: &[bool]) -> bool {
    if rows < 2 || cols < 2 {
        return false;
    }
    let words = cols.div_ceil(64);
    let mut bits = alloc::vec![0u64; rows * words];
    for i in 0..rows {
        for j in 0..cols {
            if !mask[i * cols + j] {
                bits[i * words + j / 64] |= 1 << (j % 64);
            }
        }
    }
    for i1 in 0..rows {
        for i2 in i1 + 1..rows {
            let shared: u32 = (0..words)
                .map(|w| (bits[i1 * words + w] & bits[i2 * words + w]).count_ones())
                .sum();
            if shared >= 2 {
                return true;
            }
        }
    }
    false
}
