use alloc::vec::Vec;

use rand::Rng;

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::math;
use crate::sampler::basis::{MarkovBasis, MarkovBasisMove};
use crate::sampler::fisher::LineTarget;
use crate::table::ContingencyTable;

/// Gibbs sampler over a Markov basis.
///
/// Each step picks a move `f`, finds the feasible interval of `eta` with
/// `T + eta f >= 0`, and draws `eta` from the target restricted to that
/// line. Every step is accepted; steps whose interval is `{0}` are counted
/// as degenerate.
#[derive(Debug, Clone)]
pub struct GibbsChain {
    table: ContingencyTable,
    basis: MarkovBasis,
    steps: u64,
    degenerate: u64,
    log_w: Vec<f64>,
}

impl GibbsChain {
    /// Starts a chain at an admissible table with the basis for `constraints`.
    pub fn new(initial: ContingencyTable, constraints: &ConstraintSet) -> Result<Self> {
        if !constraints.is_admissible(&initial)? {
            return Err(Error::Inadmissible);
        }
        let basis = MarkovBasis::new(initial.rows(), initial.cols(), constraints)?;
        Self::with_basis(initial, basis)
    }

    pub fn with_basis(initial: ContingencyTable, basis: MarkovBasis) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::EmptyBasis);
        }
        Ok(Self {
            table: initial,
            basis,
            steps: 0,
            degenerate: 0,
            log_w: Vec::new(),
        })
    }

    pub fn table(&self) -> &ContingencyTable {
        &self.table
    }

    pub fn into_table(self) -> ContingencyTable {
        self.table
    }

    pub fn basis(&self) -> &MarkovBasis {
        &self.basis
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn degenerate_steps(&self) -> u64 {
        self.degenerate
    }

    /// One Gibbs move; returns the applied `eta`.
    pub fn step<T, R>(&mut self, target: &T, rng: &mut R) -> Result<i64>
    where
        T: LineTarget + ?Sized,
        R: Rng + ?Sized,
    {
        let mv = self.basis.sample(rng);
        let eta = self.draw_eta(&mv, target, rng)?;
        if eta != 0 {
            mv.apply(&mut self.table, eta);
        }
        self.steps += 1;
        Ok(eta)
    }

    fn draw_eta<T, R>(&mut self, mv: &MarkovBasisMove, target: &T, rng: &mut R) -> Result<i64>
    where
        T: LineTarget + ?Sized,
        R: Rng + ?Sized,
    {
        let cells = self.table.cells();
        let (lo, hi) = mv.support(cells);
        if lo > hi || lo > 0 || hi < 0 {
            return Err(Error::Invariant("empty move support"));
        }
        if lo == hi {
            self.degenerate += 1;
            return Ok(0);
        }
        self.log_w.clear();
        for eta in lo..=hi {
            let w: f64 = mv
                .entries()
                .iter()
                .map(|&(idx, s)| target.cell_term(idx, (cells[idx] as i64 + eta * s) as u64))
                .sum();
            self.log_w.push(w);
        }
        let max = self.log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Invariant("non-finite conditional weights"));
        }
        let mut total = 0.0;
        for w in self.log_w.iter_mut() {
            *w = math::exp(*w - max);
            total += *w;
        }
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for (k, w) in self.log_w.iter().enumerate() {
            acc += w;
            if u < acc {
                return Ok(lo + k as i64);
            }
        }
        Ok(hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::FixedCell;
    use crate::intensity::{intensity_total, SimParams};
    use crate::sampler::{enumerate_fiber, fisher_log_pmf, init_table, FisherTarget, UniformTarget};
    use crate::table::{CostMatrix, IntensityMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::collections::BTreeMap;

    fn margins(rows: &[u64], cols: &[u64]) -> ConstraintSet {
        ConstraintSet::new()
            .with_row_sums(rows.to_vec())
            .with_col_sums(cols.to_vec())
    }

    fn tv_against<T: LineTarget>(
        c: &ConstraintSet,
        rows: usize,
        cols: usize,
        target: &T,
        exact: &BTreeMap<Vec<u64>, f64>,
        steps: usize,
        seed: u64,
    ) -> f64 {
        let lam = IntensityMatrix::new(rows, cols, alloc::vec![1.0; rows * cols]).unwrap();
        let init = init_table(c, &lam).unwrap();
        let mut chain = GibbsChain::new(init, c).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut counts: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
        for _ in 0..steps {
            chain.step(target, &mut rng).unwrap();
            assert!(c.is_admissible(chain.table()).unwrap());
            *counts.entry(chain.table().cells().to_vec()).or_default() += 1;
        }
        let mut tv = 0.0;
        for (k, p) in exact {
            let q = *counts.get(k).unwrap_or(&0) as f64 / steps as f64;
            tv += (p - q).abs();
        }
        assert!(counts.keys().all(|k| exact.contains_key(k)));
        tv / 2.0
    }

    #[test]
    fn forced_move_leaves_table_unchanged() {
        let c = margins(&[1, 0], &[1, 0]);
        let t = ContingencyTable::from_rows(&[[1u64, 0], [0, 0]]).unwrap();
        let mut chain = GibbsChain::new(t.clone(), &c).unwrap();
        let eta = chain.step(&UniformTarget, &mut ChaCha20Rng::seed_from_u64(0)).unwrap();
        assert_eq!(eta, 0);
        assert_eq!(chain.table(), &t);
        assert_eq!(chain.degenerate_steps(), 1);
    }

    #[test]
    fn two_table_fiber_is_uniform_under_unit_odds() {
        let c = margins(&[1, 1], &[1, 1]);
        let exact: BTreeMap<Vec<u64>, f64> = enumerate_fiber(&c, 2, 2, 10)
            .unwrap()
            .into_iter()
            .map(|t| (t.cells().to_vec(), 0.5))
            .collect();
        assert_eq!(exact.len(), 2);
        let tv = tv_against(&c, 2, 2, &FisherTarget::central(2, 2), &exact, 20_000, 1);
        assert!(tv < 0.02, "tv={tv}");
    }

    #[test]
    fn matches_fisher_law_on_small_fiber() {
        let c = margins(&[2, 2], &[2, 2]);
        let cost = CostMatrix::new(2, 2, alloc::vec![0.0, 2.0, 1.5, 0.3]).unwrap();
        let lam = intensity_total(&[0.2, -0.1], &SimParams::new(1.0, 0.8), &cost, 4.0).unwrap();
        let fiber = enumerate_fiber(&c, 2, 2, 100).unwrap();
        let logs: Vec<f64> = fiber.iter().map(|t| fisher_log_pmf(t, &lam, &c).unwrap()).collect();
        let z = math::log_sum_exp(&logs);
        let exact: BTreeMap<Vec<u64>, f64> = fiber
            .iter()
            .zip(&logs)
            .map(|(t, l)| (t.cells().to_vec(), math::exp(l - z)))
            .collect();
        let tv = tv_against(&c, 2, 2, &FisherTarget::new(&lam), &exact, 100_000, 2);
        assert!(tv < 0.02, "tv={tv}");
    }

    #[test]
    fn symmetric_chain_matches_uniform_on_symmetric_fiber() {
        let c = ConstraintSet::new().with_row_sums(alloc::vec![2, 1, 2, 1]).with_symmetry();
        let fiber = enumerate_fiber(&c, 4, 4, 10_000).unwrap();
        assert!(fiber.len() > 3);
        let p = 1.0 / fiber.len() as f64;
        let exact: BTreeMap<Vec<u64>, f64> =
            fiber.iter().map(|t| (t.cells().to_vec(), p)).collect();
        let tv = tv_against(&c, 4, 4, &UniformTarget, &exact, 200_000, 5);
        assert!(tv < 0.02, "tv={tv}");
    }

    #[test]
    fn fixed_cells_never_move() {
        let c = margins(&[4, 3, 5], &[3, 6, 3]).with_fixed_cells(alloc::vec![FixedCell::new(1, 1, 2)]);
        let lam = IntensityMatrix::new(3, 3, alloc::vec![1.0; 9]).unwrap();
        let mut chain = GibbsChain::new(init_table(&c, &lam).unwrap(), &c).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for _ in 0..2_000 {
            chain.step(&FisherTarget::central(3, 3), &mut rng).unwrap();
            assert!(c.is_admissible(chain.table()).unwrap());
        }
    }

    #[test]
    fn empty_basis_is_an_error() {
        let c = margins(&[1, 1], &[1, 1]).with_fixed_cells(alloc::vec![FixedCell::new(0, 0, 1)]);
        let t = ContingencyTable::from_rows(&[[1u64, 0], [0, 1]]).unwrap();
        assert_eq!(GibbsChain::new(t, &c).unwrap_err(), Error::EmptyBasis);
    }
}
