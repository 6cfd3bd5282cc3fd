//! One ensemble member of the joint calibration and sampling loop.
//!
//! Each iteration has two halves that are timed separately by callers:
//!
//! * [`Member::learn_intensity`]: network forward pass, Harris-Wilson solve,
//!   intensity, loss, gradient and one Adam update;
//! * [`Member::sample_table`]: a closed-form draw when the constraints are
//!   tractable, otherwise `k` Gibbs moves on the persistent chain.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::constraints::{ConstraintSet, Tractability};
use crate::error::{Error, Result};
use crate::harris_wilson::NoisePath;
use crate::intensity::{compute_kappa, IntensityModel};
use crate::loss::{CalibrationProblem, LossTerms, Scheme};
use crate::nn::{AdamConfig, AdamState, NetworkWeights, Theta};
use crate::sampler::{init_table, sample_closed_form, FisherTarget, GibbsChain};
use crate::table::{ContingencyTable, IntensityMatrix};

/// Settings shared by every member of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub problem: CalibrationProblem,
    pub constraints: ConstraintSet,
    pub hidden: usize,
    pub adam: AdamConfig,
    /// Solver steps per iteration.
    pub tau: usize,
    /// Gibbs moves per iteration under intractable constraints.
    pub gibbs_moves: usize,
}

impl PipelineConfig {
    pub fn rows(&self) -> usize {
        self.problem.cost.rows()
    }

    pub fn cols(&self) -> usize {
        self.problem.cost.cols()
    }

    pub fn validate(&self) -> Result<Tractability> {
        let (rows, cols) = (self.rows(), self.cols());
        let tract = self.constraints.validate(rows, cols)?;
        self.problem.hw.validate()?;
        self.problem.loss.validate(cols)?;
        self.problem.data.validate(rows, cols)?;
        let y = self.problem.y()?;
        if y.len() != cols {
            return Err(Error::LengthMismatch {
                what: "log attraction",
                expected: cols,
                got: y.len(),
            });
        }
        if self.hidden == 0 {
            return Err(Error::InvalidArgument("hidden width must be at least 1".into()));
        }
        if self.tau == 0 || self.gibbs_moves == 0 {
            return Err(Error::InvalidArgument("tau and gibbs_moves must be at least 1".into()));
        }
        if !(self.problem.dt > 0.0 && self.problem.dt <= 1.0) {
            return Err(Error::InvalidArgument("dt must lie in (0, 1]".into()));
        }
        if let Some(total) = self.constraints.total_mass() {
            let mass = self.problem.model.total_mass();
            if (mass - total as f64).abs() > 1e-9 * mass.max(1.0) {
                return Err(Error::InconsistentConstraints(alloc::format!(
                    "intensity mass {mass} differs from the table total {total}"
                )));
            }
        }
        Ok(tract)
    }
}

/// `kappa` for a model whose mass is fixed, evaluated at the observed `y`.
pub fn kappa_for(model: &IntensityModel, delta: f64, y: &[f64]) -> f64 {
    compute_kappa(model.total_mass(), delta, y)
}

/// Output of the intensity-learning half of an iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnStep {
    pub theta: Theta,
    pub x: Vec<f64>,
    pub intensity: IntensityMatrix,
    pub loss: LossTerms,
}

/// Everything one iteration produces.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutput {
    pub iteration: usize,
    pub theta: Theta,
    pub x: Vec<f64>,
    pub intensity: IntensityMatrix,
    pub table: ContingencyTable,
    pub loss: LossTerms,
}

#[derive(Debug, Clone)]
enum TableState {
    ClosedForm(ContingencyTable),
    Chain(GibbsChain),
    /// No basis move avoids the fixed cells, so the chain cannot leave `T^0`.
    Frozen(ContingencyTable),
}

/// Mutable state of one member: weights, optimizer, current table and its
/// random stream.
#[derive(Debug, Clone)]
pub struct Member<R> {
    weights: NetworkWeights,
    adam: AdamState,
    table: TableState,
    rng: R,
    iteration: usize,
}

impl<R: Rng> Member<R> {
    /// Draws the initial weights from `rng` and builds `T^0` by
    /// [`init_table`] on a flat intensity, i.e. the maximum-entropy table
    /// under the constraints. The initial weights are arbitrary, so the
    /// intensity they give carries no information about the table.
    pub fn new(cfg: &PipelineConfig, mut rng: R) -> Result<Self> {
        let tract = cfg.validate()?;
        let weights = NetworkWeights::init(&mut rng, cfg.cols(), cfg.hidden)?;
        let cells = cfg.rows() * cfg.cols();
        let level = cfg.problem.model.total_mass() / cells as f64;
        let flat = IntensityMatrix::new(cfg.rows(), cfg.cols(), vec![level; cells])?;
        let t0 = init_table(&cfg.constraints, &flat)?;
        let table = match tract {
            Tractability::Tractable => TableState::ClosedForm(t0),
            Tractability::Intractable => match GibbsChain::new(t0.clone(), &cfg.constraints) {
                Ok(chain) => TableState::Chain(chain),
                Err(Error::EmptyBasis) => TableState::Frozen(t0),
                Err(e) => return Err(e),
            },
        };
        Ok(Self {
            adam: AdamState::new(cfg.adam, weights.parameter_count()),
            weights,
            table,
            rng,
            iteration: 0,
        })
    }

    pub fn weights(&self) -> &NetworkWeights {
        &self.weights
    }

    pub fn table(&self) -> &ContingencyTable {
        match &self.table {
            TableState::ClosedForm(t) | TableState::Frozen(t) => t,
            TableState::Chain(c) => c.table(),
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Gibbs steps that could not move, if a chain is used.
    pub fn degenerate_steps(&self) -> Option<u64> {
        match &self.table {
            TableState::Chain(c) => Some(c.degenerate_steps()),
            TableState::ClosedForm(_) | TableState::Frozen(_) => None,
        }
    }

    /// Evaluates the loss at the current weights and takes one Adam step.
    /// JOINT uses the table of the previous iteration.
    pub fn learn_intensity(&mut self, cfg: &PipelineConfig) -> Result<LearnStep> {
        let noise = NoisePath::draw(&mut self.rng, cfg.tau, cfg.cols());
        let table = match cfg.problem.loss.scheme {
            Scheme::Joint => Some(self.table()),
            Scheme::Disjoint => None,
        };
        let eval = cfg.problem.evaluate(&self.weights, table, &noise)?;
        self.adam.update(&mut self.weights, &eval.grad)?;
        Ok(LearnStep {
            theta: eval.theta,
            x: eval.x,
            intensity: eval.intensity.intensity,
            loss: eval.loss,
        })
    }

    /// Replaces the current table with a draw targeting `lam`.
    pub fn sample_table(&mut self, cfg: &PipelineConfig, lam: &IntensityMatrix) -> Result<&ContingencyTable> {
        match &mut self.table {
            TableState::ClosedForm(t) => {
                *t = sample_closed_form(lam, &cfg.constraints, &mut self.rng)?;
            }
            TableState::Chain(chain) => {
                let target = FisherTarget::new(lam);
                for _ in 0..cfg.gibbs_moves {
                    chain.step(&target, &mut self.rng)?;
                }
            }
            TableState::Frozen(_) => {}
        }
        Ok(self.table())
    }

    pub fn iterate(&mut self, cfg: &PipelineConfig) -> Result<IterationOutput> {
        let learn = self.learn_intensity(cfg)?;
        let table = self.sample_table(cfg, &learn.intensity)?.clone();
        self.iteration += 1;
        Ok(IterationOutput {
            iteration: self.iteration,
            theta: learn.theta,
            x: learn.x,
            intensity: learn.intensity,
            table,
            loss: learn.loss,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harris_wilson::HwParams;
    use crate::loss::LossConfig;
    use crate::seed::member_rng;
    use crate::table::{CostMatrix, ObservedData};
    use alloc::vec;

    fn config(scheme: Scheme, constraints: ConstraintSet) -> PipelineConfig {
        let cost = CostMatrix::new(2, 3, vec![0.1, 0.5, 0.9, 0.7, 0.2, 0.4]).unwrap();
        let y = vec![-0.2, 0.1, 0.3];
        let model = IntensityModel::Total { total: 12.0 };
        let kappa = kappa_for(&model, 0.0, &y);
        PipelineConfig {
            problem: CalibrationProblem {
                cost,
                model,
                hw: HwParams {
                    epsilon: 1.0,
                    kappa,
                    delta: 0.0,
                    sigma: 0.014,
                },
                dt: 0.001,
                data: ObservedData {
                    log_attraction: Some(y),
                    ..ObservedData::default()
                },
                loss: LossConfig::new(scheme),
                theta_max: None,
            },
            constraints,
            hidden: 4,
            adam: AdamConfig::default(),
            tau: 1,
            gibbs_moves: 2,
        }
    }

    fn run(cfg: &PipelineConfig, seed: u64, n: usize) -> Vec<IterationOutput> {
        let mut m = Member::new(cfg, member_rng(seed, 0)).unwrap();
        (0..n).map(|_| m.iterate(cfg).unwrap()).collect()
    }

    #[test]
    fn tables_respect_constraints_every_iteration() {
        let both = ConstraintSet::new().with_row_sums(vec![5, 7]).with_col_sums(vec![3, 4, 5]);
        for c in [ConstraintSet::new().with_total(12), both] {
            for scheme in [Scheme::Joint, Scheme::Disjoint] {
                let cfg = config(scheme, c.clone());
                for out in run(&cfg, 3, 50) {
                    assert!(c.is_admissible(&out.table).unwrap());
                    assert!((out.intensity.total() - 12.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let cfg = config(Scheme::Joint, ConstraintSet::new().with_total(12));
        assert_eq!(run(&cfg, 9, 20), run(&cfg, 9, 20));
        assert_ne!(run(&cfg, 9, 20), run(&cfg, 10, 20));
    }

    #[test]
    fn mismatched_total_is_rejected() {
        let cfg = config(Scheme::Disjoint, ConstraintSet::new().with_total(11));
        assert!(matches!(cfg.validate(), Err(Error::InconsistentConstraints(_))));
    }

    #[test]
    fn disjoint_loss_has_no_table_term() {
        let cfg = config(Scheme::Disjoint, ConstraintSet::new().with_total(12));
        assert!(run(&cfg, 1, 5).iter().all(|o| o.loss.table == 0.0));
    }
}
