//! Harris-Wilson attraction dynamics integrated in log space.
//!
//! With `x_j = ln z_j` the Stratonovich system becomes
//! `dx_j = eps (Lambda_+j - kappa e^{x_j} + delta) dt + sigma dB_j`
//! and is stepped with Euler-Maruyama.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::intensity::{IntensityModel, SimParams};
use crate::math;
use crate::table::{CostMatrix, IntensityMatrix};

/// Parameters of the attraction dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HwParams {
    /// Responsiveness.
    pub epsilon: f64,
    /// Job competition.
    pub kappa: f64,
    /// Minimum job floor.
    pub delta: f64,
    /// Noise standard deviation.
    pub sigma: f64,
}

impl HwParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epsilon.is_finite()
            && self.epsilon > 0.0
            && self.kappa.is_finite()
            && self.kappa > 0.0
            && self.delta.is_finite()
            && self.delta >= 0.0
            && self.sigma.is_finite()
            && self.sigma >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid dynamics parameters {self:?}")))
        }
    }
}

pub const DEFAULT_DT: f64 = 0.001;

/// Step size, number of steps and seed of one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub tau: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            tau: 1,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return Err(Error::InvalidArgument(format!("dt must lie in (0, 1], got {}", self.dt)));
        }
        if self.tau == 0 {
            return Err(Error::InvalidArgument("tau must be at least 1".into()));
        }
        Ok(())
    }
}

/// Standard normal increments for `tau` steps, `J` per step in destination
/// order. Held fixed while differentiating a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    dim: usize,
    values: Vec<f64>,
}

impl NoisePath {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, tau: usize, dim: usize) -> Self {
        let values = (0..tau * dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        Self { dim, values }
    }

    pub fn zeros(tau: usize, dim: usize) -> Self {
        Self {
            dim,
            values: vec![0.0; tau * dim],
        }
    }

    pub fn steps(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.values.len() / self.dim
        }
    }

    pub fn step(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }
}

/// Drift `eps (Lambda_+j - kappa e^{x_j} + delta)` per destination.
pub fn hw_drift(x: &[f64], col_margins: &[f64], hw: &HwParams) -> Vec<f64> {
    x.iter()
        .zip(col_margins)
        .map(|(&xj, &lam)| hw.epsilon * (lam - hw.kappa * math::exp(xj) + hw.delta))
        .collect()
}

/// Runs `cfg.tau` Euler-Maruyama steps from `x0`, drawing the noise from `rng`.
/// Normals are drawn even when `sigma = 0` so the stream position does not
/// depend on the noise level.
pub fn hw_solve<F, R>(
    x0: &[f64],
    hw: &HwParams,
    intensity_fn: F,
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<IntensityMatrix>,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let noise = NoisePath::draw(rng, cfg.tau, x0.len());
    hw_solve_with_noise(x0, hw, intensity_fn, cfg.dt, &noise)
}

/// Same as [`hw_solve`] with a pre-drawn noise path.
pub fn hw_solve_with_noise<F>(
    x0: &[f64],
    hw: &HwParams,
    mut intensity_fn: F,
    dt: f64,
    noise: &NoisePath,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<IntensityMatrix>,
{
    hw.validate()?;
    check_start(x0, noise)?;
    let mut x = x0.to_vec();
    let scale = hw.sigma * math::sqrt(dt);
    for t in 0..noise.steps() {
        let lam = intensity_fn(&x)?;
        let drift = hw_drift(&x, &lam.col_sums(), hw);
        for ((xj, d), xi) in x.iter_mut().zip(&drift).zip(noise.step(t)) {
            *xj += dt * d + scale * xi;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: t + 1 });
        }
    }
    Ok(x)
}

fn check_start(x0: &[f64], noise: &NoisePath) -> Result<()> {
    if noise.dim != x0.len() {
        return Err(Error::LengthMismatch {
            what: "noise path width",
            expected: x0.len(),
            got: noise.dim,
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite initial state".into()));
    }
    Ok(())
}

/// Final state of a solve together with its forward tangents with respect
/// to `alpha` and `beta` (initial state held fixed).
#[derive(Debug, Clone, PartialEq)]
pub struct TangentSolve {
    pub x: Vec<f64>,
    pub dx_dalpha: Vec<f64>,
    pub dx_dbeta: Vec<f64>,
}

/// Solve with a closed-form intensity model, propagating tangents.
///
/// `kappa` is treated as a constant of the run.
pub fn hw_solve_tangent(
    x0: &[f64],
    hw: &HwParams,
    model: &IntensityModel,
    params: &SimParams,
    cost: &CostMatrix,
    dt: f64,
    noise: &NoisePath,
) -> Result<TangentSolve> {
    hw.validate()?;
    check_start(x0, noise)?;
    let cols = x0.len();
    let mut x = x0.to_vec();
    let mut tangents = [vec![0.0; cols], vec![0.0; cols]];
    let scale = hw.sigma * math::sqrt(dt);
    for t in 0..noise.steps() {
        let eval = model.evaluate(&x, params, cost)?;
        let lam = eval.intensity.values();
        let col = eval.intensity.col_sums();
        let mut next = [vec![0.0; cols], vec![0.0; cols]];
        for (k, (d_alpha, d_beta)) in [(1.0, 0.0), (0.0, 1.0)].into_iter().enumerate() {
            let dlog = model.log_tangent(&x, params, cost, &eval, d_alpha, d_beta, &tangents[k]);
            let mut dcol = vec![0.0; cols];
            for (row_l, row_d) in lam.chunks_exact(cols).zip(dlog.chunks_exact(cols)) {
                for ((acc, l), d) in dcol.iter_mut().zip(row_l).zip(row_d) {
                    *acc += l * d;
                }
            }
            for j in 0..cols {
                let ez = hw.kappa * math::exp(x[j]);
                next[k][j] = tangents[k][j] + dt * hw.epsilon * (dcol[j] - ez * tangents[k][j]);
            }
        }
        let drift = hw_drift(&x, &col, hw);
        for ((xj, d), xi) in x.iter_mut().zip(&drift).zip(noise.step(t)) {
            *xj += dt * d + scale * xi;
        }
        if x.iter().chain(&next[0]).chain(&next[1]).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: t + 1 });
        }
        tangents = next;
    }
    let [dx_dalpha, dx_dbeta] = tangents;
    Ok(TangentSolve {
        x,
        dx_dalpha,
        dx_dbeta,
    })
}

/// Outcome of a deterministic relaxation towards equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub x: Vec<f64>,
    pub steps: usize,
    pub drift_norm: f64,
    pub converged: bool,
}

/// Repeats noise-free single steps of size `dt` until `max |drift| < tol`.
pub fn hw_relax<F>(
    x0: &[f64],
    hw: &HwParams,
    mut intensity_fn: F,
    dt: f64,
    tol: f64,
    max_steps: usize,
) -> Result<Equilibrium>
where
    F: FnMut(&[f64]) -> Result<IntensityMatrix>,
{
    let quiet = HwParams { sigma: 0.0, ..*hw };
    let noise = NoisePath::zeros(1, x0.len());
    let mut x = x0.to_vec();
    let mut drift_norm = f64::INFINITY;
    for steps in 0..=max_steps {
        let lam = intensity_fn(&x)?;
        drift_norm = hw_drift(&x, &lam.col_sums(), &quiet)
            .iter()
            .fold(0.0, |m: f64, d| m.max(d.abs()));
        if drift_norm < tol {
            return Ok(Equilibrium {
                x,
                steps,
                drift_norm,
                converged: true,
            });
        }
        if steps == max_steps {
            break;
        }
        x = hw_solve_with_noise(&x, &quiet, &mut intensity_fn, dt, &noise)?;
    }
    Ok(Equilibrium {
        x,
        steps: max_steps,
        drift_norm,
        converged: false,
    })
}
