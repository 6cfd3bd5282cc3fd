//! Calibration losses and the gradient of the loss with respect to the
//! network weights.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::harris_wilson::{hw_solve_tangent, HwParams, NoisePath};
use crate::intensity::{IntensityEval, IntensityModel, SimParams};
use crate::math;
use crate::nn::{NetworkWeights, Theta};
use crate::table::{ContingencyTable, CostMatrix, IntensityMatrix, ObservedData};

/// Whether sampled tables enter the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Joint,
    Disjoint,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Joint => "JOINT",
            Scheme::Disjoint => "DISJOINT",
        }
    }
}

pub const SIGMA_D_RELATIVE: f64 = 0.03;
pub const DEFAULT_SIGMA_T: f64 = 0.07;
pub const DEFAULT_SIGMA_L: f64 = 0.07;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub scheme: Scheme,
    /// Attraction noise scale; `None` means `0.03 ln J` (plain `0.03` when `J = 1`).
    pub sigma_d: Option<f64>,
    pub sigma_t: f64,
    pub sigma_l: f64,
    pub use_distance_term: bool,
}

impl LossConfig {
    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            sigma_d: None,
            sigma_t: DEFAULT_SIGMA_T,
            sigma_l: DEFAULT_SIGMA_L,
            use_distance_term: false,
        }
    }

    pub fn sigma_d_for(&self, cols: usize) -> f64 {
        self.sigma_d.unwrap_or_else(|| {
            let l = math::ln(cols as f64);
            if l > 0.0 {
                SIGMA_D_RELATIVE * l
            } else {
                SIGMA_D_RELATIVE
            }
        })
    }

    pub fn validate(&self, cols: usize) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.sigma_d_for(cols)) && ok(self.sigma_t) && ok(self.sigma_l) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("loss scales must be positive".into()))
        }
    }
}

/// The three additive loss components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub attraction: f64,
    pub table: f64,
    pub distance: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.attraction + self.table + self.distance
    }
}

struct Inputs<'a> {
    y: &'a [f64],
    table: Option<&'a ContingencyTable>,
    intensity: Option<&'a IntensityMatrix>,
    distance: Option<(&'a [f64], &'a CostMatrix)>,
}

fn gather<'a>(
    cfg: &LossConfig,
    x: &[f64],
    table: Option<&'a ContingencyTable>,
    intensity: Option<&'a IntensityMatrix>,
    data: &'a ObservedData,
    cost: Option<&'a CostMatrix>,
) -> Result<Inputs<'a>> {
    let scheme = cfg.scheme.name();
    let missing = |what| Error::MissingInput {
        scheme,
        missing: what,
    };
    let y = data.log_attraction.as_deref().ok_or(missing("observed log attraction"))?;
    if y.len() != x.len() {
        return Err(Error::LengthMismatch {
            what: "log attraction",
            expected: y.len(),
            got: x.len(),
        });
    }
    cfg.validate(x.len())?;
    let (table, intensity) = match cfg.scheme {
        Scheme::Joint => {
            let t = table.ok_or(missing("a table"))?;
            let l = intensity.ok_or(missing("an intensity"))?;
            check_shape(t.rows(), t.cols(), l.rows(), l.cols())?;
            (Some(t), Some(l))
        }
        Scheme::Disjoint => (None, intensity),
    };
    let distance = if cfg.use_distance_term {
        let l = intensity.ok_or(missing("an intensity"))?;
        let c = cost.ok_or(missing("a cost matrix"))?;
        let d = data.origin_distance.as_deref().ok_or(missing("origin distances"))?;
        check_shape(c.rows(), c.cols(), l.rows(), l.cols())?;
        if d.len() != l.rows() {
            return Err(Error::LengthMismatch {
                what: "origin distances",
                expected: l.rows(),
                got: d.len(),
            });
        }
        Some((d, c))
    } else {
        None
    };
    Ok(Inputs {
        y,
        table,
        intensity,
        distance,
    })
}

fn check_shape(r: usize, c: usize, er: usize, ec: usize) -> Result<()> {
    if (r, c) == (er, ec) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            expected_rows: er,
            expected_cols: ec,
            rows: r,
            cols: c,
        })
    }
}

fn distance_residuals(lam: &IntensityMatrix, d: &[f64], cost: &CostMatrix) -> Vec<f64> {
    lam.values()
        .chunks_exact(lam.cols())
        .zip(cost.values().chunks_exact(cost.cols()))
        .zip(d)
        .map(|((l, c), di)| l.iter().zip(c).map(|(a, b)| a * b).sum::<f64>() - di)
        .collect()
}

/// Evaluates the loss terms.
///
/// * attraction: `sum_j (x_j - y_j)^2 / (2 sigma_d^2)`
/// * table (JOINT): `-sum_ij (T_ij ln Lambda_ij - Lambda_ij) / sigma_T`
/// * distance (optional): `sum_i ((Lambda . C)_i+ - D_i+)^2 / (2 sigma_L^2)`
pub fn loss_eval(
    cfg: &LossConfig,
    x: &[f64],
    table: Option<&ContingencyTable>,
    intensity: Option<&IntensityMatrix>,
    data: &ObservedData,
    cost: Option<&CostMatrix>,
) -> Result<LossTerms> {
    let inp = gather(cfg, x, table, intensity, data, cost)?;
    let sd = cfg.sigma_d_for(x.len());
    let attraction =
        x.iter().zip(inp.y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (2.0 * sd * sd);
    let table = match (inp.table, inp.intensity) {
        (Some(t), Some(l)) if cfg.scheme == Scheme::Joint => {
            -t.cells()
                .iter()
                .zip(l.values())
                .map(|(&n, &lam)| n as f64 * math::ln(lam) - lam)
                .sum::<f64>()
                / cfg.sigma_t
        }
        _ => 0.0,
    };
    let distance = match (inp.distance, inp.intensity) {
        (Some((d, c)), Some(l)) => {
            distance_residuals(l, d, c).iter().map(|r| r * r).sum::<f64>()
                / (2.0 * cfg.sigma_l * cfg.sigma_l)
        }
        _ => 0.0,
    };
    Ok(LossTerms {
        attraction,
        table,
        distance,
    })
}

/// `d loss / d ln Lambda_ij`, which stays finite where `Lambda` underflows.
pub fn log_intensity_adjoint(
    cfg: &LossConfig,
    x: &[f64],
    table: Option<&ContingencyTable>,
    intensity: &IntensityMatrix,
    data: &ObservedData,
    cost: Option<&CostMatrix>,
) -> Result<Vec<f64>> {
    let inp = gather(cfg, x, table, Some(intensity), data, cost)?;
    let mut adj = vec![0.0; intensity.values().len()];
    if let (Scheme::Joint, Some(t)) = (cfg.scheme, inp.table) {
        for ((a, &n), &lam) in adj.iter_mut().zip(t.cells()).zip(intensity.values()) {
            *a -= (n as f64 - lam) / cfg.sigma_t;
        }
    }
    if let Some((d, c)) = inp.distance {
        let res = distance_residuals(intensity, d, c);
        let s2 = cfg.sigma_l * cfg.sigma_l;
        let cols = intensity.cols();
        for (i, r) in res.iter().enumerate() {
            for j in 0..cols {
                let k = i * cols + j;
                adj[k] += r * c.values()[k] * intensity.values()[k] / s2;
            }
        }
    }
    Ok(adj)
}

/// Everything needed to map network weights to a loss value.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationProblem {
    pub cost: CostMatrix,
    pub model: IntensityModel,
    pub hw: HwParams,
    pub dt: f64,
    pub data: ObservedData,
    pub loss: LossConfig,
    pub theta_max: Option<f64>,
}

/// Result of one forward/backward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub theta: Theta,
    pub x: Vec<f64>,
    pub intensity: IntensityEval,
    pub loss: LossTerms,
    pub grad: NetworkWeights,
}

impl CalibrationProblem {
    pub fn y(&self) -> Result<&[f64]> {
        self.data.log_attraction.as_deref().ok_or(Error::MissingInput {
            scheme: self.loss.scheme.name(),
            missing: "observed log attraction",
        })
    }

    /// Weights to theta, then the solve from `x0 = y` under the fixed noise
    /// path, then the intensity at the final state and the loss. The gradient
    /// combines forward tangents through the solve with reverse mode through
    /// the network.
    pub fn evaluate(
        &self,
        weights: &NetworkWeights,
        table: Option<&ContingencyTable>,
        noise: &NoisePath,
    ) -> Result<Evaluation> {
        let y = self.y()?;
        let pass = weights.forward_pass(y, self.theta_max)?;
        let params = SimParams::new(pass.theta.alpha, pass.theta.beta);
        let solve = hw_solve_tangent(y, &self.hw, &self.model, &params, &self.cost, self.dt, noise)?;
        let eval = self.model.evaluate(&solve.x, &params, &self.cost)?;
        let loss = loss_eval(
            &self.loss,
            &solve.x,
            table,
            Some(&eval.intensity),
            &self.data,
            Some(&self.cost),
        )?;
        let adj = log_intensity_adjoint(
            &self.loss,
            &solve.x,
            table,
            &eval.intensity,
            &self.data,
            Some(&self.cost),
        )?;
        let sd = self.loss.sigma_d_for(y.len());
        let x_adj: Vec<f64> = solve.x.iter().zip(y).map(|(a, b)| (a - b) / (sd * sd)).collect();
        let needs_intensity = adj.iter().any(|a| *a != 0.0);
        let mut d_theta = [0.0; 2];
        for (k, dx) in [&solve.dx_dalpha, &solve.dx_dbeta].into_iter().enumerate() {
            let mut g: f64 = x_adj.iter().zip(dx.iter()).map(|(a, b)| a * b).sum();
            if needs_intensity {
                let (da, db) = if k == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
                let dlog = self.model.log_tangent(&solve.x, &params, &self.cost, &eval, da, db, dx);
                g += adj.iter().zip(&dlog).map(|(a, b)| a * b).sum::<f64>();
            }
            d_theta[k] = g;
        }
        let grad = weights.backward(y, &pass, d_theta);
        if grad.flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        Ok(Evaluation {
            theta: pass.theta,
            x: solve.x,
            intensity: eval,
            loss,
            grad,
        })
    }
}
