//! Synthetic ground truth.

use std::path::Path;

use odm_core::harris_wilson::hw_relax;
use odm_core::intensity::intensity_total;
use odm_core::sampler::multinomial;
use odm_core::seed::member_rng;
use odm_core::{ConstraintSet, ContingencyTable, CostMatrix, HwParams, IntensityMatrix, SimParams};
use rand::Rng;

use crate::error::{EngineError, Result};
use crate::io;

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub intensity: IntensityMatrix,
    pub table: ContingencyTable,
}

fn draw_table<R: Rng>(lam: &IntensityMatrix, total: u64, rng: &mut R) -> Result<ContingencyTable> {
    let mut cells = vec![0; lam.values().len()];
    multinomial(total, lam.values(), rng, &mut cells)?;
    Ok(ContingencyTable::new(lam.rows(), lam.cols(), cells)?)
}

/// `Lambda_ij` i.i.d. uniform on `(0, 1]` rescaled to sum to `total`, then
/// one multinomial table with that total.
pub fn generate_synthetic(rows: usize, cols: usize, total: u64, seed: u64) -> Result<Synthetic> {
    if rows == 0 || cols == 0 || total == 0 {
        return Err(EngineError::Config("rows, cols and total must be at least 1".into()));
    }
    let mut rng = member_rng(seed, 0);
    let raw: Vec<f64> = (0..rows * cols).map(|_| 1.0 - rng.random::<f64>()).collect();
    let sum: f64 = raw.iter().sum();
    let intensity = IntensityMatrix::new(rows, cols, raw.iter().map(|v| v * total as f64 / sum).collect())?;
    let table = draw_table(&intensity, total, &mut rng)?;
    Ok(Synthetic { intensity, table })
}

/// A calibration problem whose data come from known parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProblem {
    pub cost: CostMatrix,
    /// Equilibrium log attraction under the true parameters; serves as `y`.
    pub log_attraction: Vec<f64>,
    pub intensity: IntensityMatrix,
    pub table: ContingencyTable,
    /// `(T* . C)_i+`.
    pub origin_distance: Vec<f64>,
}

/// Costs i.i.d. uniform on `(0, 1]`; `x*` is the noise-free Harris-Wilson
/// equilibrium of the totally constrained model with `theta*`, `kappa = 1`,
/// `epsilon = 1` and the given `delta`; `T*` is one multinomial draw from
/// `Lambda(x*; theta*)`. With `alpha >= 1` attraction concentrates and no
/// interior equilibrium exists, so `alpha < 1` is expected.
pub fn generate_from_theta(
    rows: usize,
    cols: usize,
    total: u64,
    alpha: f64,
    beta: f64,
    delta: f64,
    seed: u64,
) -> Result<SyntheticProblem> {
    if rows == 0 || cols == 0 || total == 0 {
        return Err(EngineError::Config("rows, cols and total must be at least 1".into()));
    }
    let mut rng = member_rng(seed, 0);
    let cost = CostMatrix::new(rows, cols, (0..rows * cols).map(|_| 1.0 - rng.random::<f64>()).collect())?;
    let params = SimParams::new(alpha, beta);
    let a = total as f64;
    let hw = HwParams {
        epsilon: 1.0,
        kappa: 1.0,
        delta,
        sigma: 0.0,
    };
    let x0 = vec![((a + delta * cols as f64) / cols as f64).ln(); cols];
    let scale = a / cols as f64;
    let eq = hw_relax(
        &x0,
        &hw,
        |x: &[f64]| intensity_total(x, &params, &cost, a),
        0.2 / scale.max(1.0),
        1e-10 * scale.max(1.0),
        2_000_000,
    )?;
    if !eq.converged {
        return Err(EngineError::Config(format!(
            "attraction dynamics did not settle for alpha={alpha}, beta={beta} (residual {})",
            eq.drift_norm
        )));
    }
    let intensity = intensity_total(&eq.x, &params, &cost, a)?;
    let table = draw_table(&intensity, total, &mut rng)?;
    let origin_distance = table
        .cells()
        .chunks_exact(cols)
        .zip(cost.values().chunks_exact(cols))
        .map(|(t, c)| t.iter().zip(c).map(|(&n, &c)| n as f64 * c).sum())
        .collect();
    Ok(SyntheticProblem {
        cost,
        log_attraction: eq.x,
        intensity,
        table,
        origin_distance,
    })
}

/// Writes `intensity.csv` and `table.csv`.
pub fn write_synthetic(dir: &Path, s: &Synthetic) -> Result<()> {
    io::write_matrix(&dir.join("intensity.csv"), s.intensity.cols(), s.intensity.values())?;
    io::write_matrix(&dir.join("table.csv"), s.table.cols(), s.table.cells())
}

/// Writes every input of a run plus `constraints.toml` fixing both margins
/// of `T*` and a ready-to-run `config.toml`.
pub fn write_problem(dir: &Path, p: &SyntheticProblem, seed: u64) -> Result<()> {
    let cols = p.table.cols();
    io::write_matrix(&dir.join("cost.csv"), cols, p.cost.values())?;
    io::write_matrix(&dir.join("log_attraction.csv"), 1, &p.log_attraction)?;
    io::write_matrix(&dir.join("origin_distance.csv"), 1, &p.origin_distance)?;
    io::write_matrix(&dir.join("intensity.csv"), cols, p.intensity.values())?;
    io::write_matrix(&dir.join("table.csv"), cols, p.table.cells())?;
    let margins = ConstraintSet::margins_of(&p.table);
    io::write_constraints(&dir.join("constraints.toml"), &margins)?;
    let config = format!(
        "iterations = 1000\nensemble = 1\nscheme = \"joint\"\nseed = {seed}\noutput = \"run\"\n\n\
         [inputs]\ncost = \"cost.csv\"\nlog_attraction = \"log_attraction.csv\"\n\
         origin_distance = \"origin_distance.csv\"\nground_truth = \"table.csv\"\n\
         constraints = \"constraints.toml\"\n"
    );
    io::write_text(&dir.join("config.toml"), &config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_is_exact_and_seeded() {
        let a = generate_synthetic(4, 3, 1000, 5).unwrap();
        assert_eq!(a.table.total(), 1000);
        assert!((a.intensity.total() - 1000.0).abs() < 1e-9);
        assert_eq!(a, generate_synthetic(4, 3, 1000, 5).unwrap());
        assert_ne!(a.table, generate_synthetic(4, 3, 1000, 6).unwrap().table);
    }

    #[test]
    fn single_cell_is_forced() {
        let s = generate_synthetic(1, 1, 42, 0).unwrap();
        assert_eq!(s.table.cells(), &[42]);
    }

    #[test]
    fn unit_alpha_has_no_interior_equilibrium() {
        assert!(matches!(generate_from_theta(3, 3, 100, 1.0, 2.0, 0.0, 1), Err(EngineError::Config(_))));
    }

    #[test]
    fn theta_problem_sits_at_equilibrium() {
        let p = generate_from_theta(5, 4, 2000, 0.5, 2.0, 0.0, 3).unwrap();
        let cols = p.intensity.col_sums();
        for (l, x) in cols.iter().zip(&p.log_attraction) {
            assert!((l - x.exp()).abs() < 1e-6 * l);
        }
        assert_eq!(p.table.total(), 2000);
        let d: f64 = p.origin_distance.iter().sum();
        let direct: f64 = p.table.cells().iter().zip(p.cost.values()).map(|(&n, c)| n as f64 * c).sum();
        assert!((d - direct).abs() < 1e-9 * direct);
    }
}
