//! Spatial interaction intensities.
//!
//! The totally constrained model spreads a fixed total over all cells with
//! weights `exp(o_i + alpha x_j - beta c_ij)`; the singly constrained model
//! does the same row by row against fixed origin totals. Both are evaluated
//! in log space with max subtraction. The doubly constrained model is only
//! available as an iterative proportional fitting (IPF) map.
//!
//! Forward-mode tangents of `ln Lambda` with respect to `(alpha, beta)` and
//! the log-attraction `x` are provided for gradient computation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::table::{CostMatrix, IntensityMatrix};

/// Utility parameters `theta = (alpha, beta)` plus optional origin offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    /// Attractiveness exponent.
    pub alpha: f64,
    /// Deterrence coefficient.
    pub beta: f64,
    /// Per-origin utility offsets `o_i` (totally constrained model only).
    pub origin_offsets: Option<Vec<f64>>,
}

impl SimParams {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            origin_offsets: None,
        }
    }

    pub fn with_origin_offsets(mut self, offsets: Vec<f64>) -> Self {
        self.origin_offsets = Some(offsets);
        self
    }

    fn check(&self, rows: usize) -> Result<()> {
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite parameters alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if let Some(o) = &self.origin_offsets {
            if o.len() != rows {
                return Err(Error::LengthMismatch {
                    what: "origin offsets",
                    expected: rows,
                    got: o.len(),
                });
            }
            if o.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite origin offset".into()));
            }
        }
        Ok(())
    }
}

/// Which constraints the intensity satisfies.
#[derive(Debug, Clone, PartialEq)]
pub enum IntensityModel {
    /// `Lambda_++` fixed.
    Total { total: f64 },
    /// `Lambda_i+` fixed for every origin.
    Singly { row_totals: Vec<f64> },
}

/// An evaluated intensity together with `ln Lambda` (which stays finite even
/// where `Lambda` underflows).
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityEval {
    pub intensity: IntensityMatrix,
    pub log_values: Vec<f64>,
}

impl IntensityModel {
    pub fn total_mass(&self) -> f64 {
        match self {
            IntensityModel::Total { total } => *total,
            IntensityModel::Singly { row_totals } => row_totals.iter().sum(),
        }
    }

    fn check(&self, rows: usize) -> Result<()> {
        match self {
            IntensityModel::Total { total } => {
                if !(total.is_finite() && *total > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "intensity total must be positive, got {total}"
                    )));
                }
            }
            IntensityModel::Singly { row_totals } => {
                if row_totals.len() != rows {
                    return Err(Error::LengthMismatch {
                        what: "row totals",
                        expected: rows,
                        got: row_totals.len(),
                    });
                }
                if let Some(r) = row_totals.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
                    return Err(Error::InvalidArgument(format!(
                        "row totals must be positive, got {r}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Evaluates `Lambda(x; theta)`.
    pub fn evaluate(&self, x: &[f64], params: &SimParams, cost: &CostMatrix) -> Result<IntensityEval> {
        let (rows, cols) = (cost.rows(), cost.cols());
        if x.len() != cols {
            return Err(Error::LengthMismatch {
                what: "log attraction",
                expected: cols,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite log attraction".into()));
        }
        self.check(rows)?;
        params.check(rows)?;
        if matches!(self, IntensityModel::Singly { .. }) && params.origin_offsets.is_some() {
            return Err(Error::InvalidArgument(
                "origin offsets are only supported by the totally constrained model".into(),
            ));
        }

        let mut util = utilities(x, params, cost);
        match self {
            IntensityModel::Total { total } => {
                let lse = math::log_sum_exp(&util);
                let ln_total = math::ln(*total);
                for u in &mut util {
                    *u += ln_total - lse;
                }
            }
            IntensityModel::Singly { row_totals } => {
                for (row, &r) in util.chunks_exact_mut(cols).zip(row_totals) {
                    let lse = math::log_sum_exp(row);
                    let ln_r = math::ln(r);
                    for u in row {
                        *u += ln_r - lse;
                    }
                }
            }
        }
        let values = util.iter().map(|&l| math::exp(l)).collect();
        Ok(IntensityEval {
            intensity: IntensityMatrix::from_clamped(rows, cols, values),
            log_values: util,
        })
    }

    /// Tangent of `ln Lambda` along a direction `(d_alpha, d_beta, dx)`.
    ///
    /// With `u_ij = o_i + alpha x_j - beta c_ij` and `p` the normalized
    /// weights inside each normalization group (whole table or one row),
    /// `d ln Lambda_ij = du_ij - sum_group p du`, where
    /// `du_ij = d_alpha x_j - d_beta c_ij + alpha dx_j`.
    pub fn log_tangent(
        &self,
        x: &[f64],
        params: &SimParams,
        cost: &CostMatrix,
        eval: &IntensityEval,
        d_alpha: f64,
        d_beta: f64,
        dx: &[f64],
    ) -> Vec<f64> {
        let cols = cost.cols();
        let mut du: Vec<f64> = cost
            .values()
            .chunks_exact(cols)
            .flat_map(|c_row| {
                c_row
                    .iter()
                    .zip(x.iter().zip(dx))
                    .map(|(&c, (&xj, &dxj))| d_alpha * xj - d_beta * c + params.alpha * dxj)
            })
            .collect();
        match self {
            IntensityModel::Total { total } => {
                let mean: f64 = eval
                    .intensity
                    .values()
                    .iter()
                    .zip(&du)
                    .map(|(l, d)| l * d)
                    .sum::<f64>()
                    / total;
                for d in &mut du {
                    *d -= mean;
                }
            }
            IntensityModel::Singly { row_totals } => {
                for ((row, lam), &r) in du
                    .chunks_exact_mut(cols)
                    .zip(eval.intensity.values().chunks_exact(cols))
                    .zip(row_totals)
                {
                    let mean: f64 = lam.iter().zip(row.iter()).map(|(l, d)| l * d).sum::<f64>() / r;
                    for d in row {
                        *d -= mean;
                    }
                }
            }
        }
        du
    }
}

fn utilities(x: &[f64], params: &SimParams, cost: &CostMatrix) -> Vec<f64> {
    let cols = cost.cols();
    let mut out = Vec::with_capacity(cost.values().len());
    for (i, c_row) in cost.values().chunks_exact(cols).enumerate() {
        let o = params.origin_offsets.as_ref().map_or(0.0, |o| o[i]);
        out.extend(
            c_row
                .iter()
                .zip(x)
                .map(|(&c, &xj)| o + params.alpha * xj - params.beta * c),
        );
    }
    out
}

/// Totally constrained intensity with `sum Lambda = lambda_total`.
pub fn intensity_total(
    x: &[f64],
    params: &SimParams,
    cost: &CostMatrix,
    lambda_total: f64,
) -> Result<IntensityMatrix> {
    IntensityModel::Total {
        total: lambda_total,
    }
    .evaluate(x, params, cost)
    .map(|e| e.intensity)
}

/// Singly (production) constrained intensity with fixed origin totals.
pub fn intensity_singly(
    x: &[f64],
    params: &SimParams,
    cost: &CostMatrix,
    row_totals: &[f64],
) -> Result<IntensityMatrix> {
    IntensityModel::Singly {
        row_totals: row_totals.to_vec(),
    }
    .evaluate(x, params, cost)
    .map(|e| e.intensity)
}

/// Result of an IPF fit. Non-convergence is reported, not raised.
#[derive(Debug, Clone, PartialEq)]
pub struct IpfOutcome {
    pub intensity: IntensityMatrix,
    pub converged: bool,
    pub iterations: usize,
    /// Largest relative margin deviation at exit.
    pub residual: f64,
}

pub const IPF_DEFAULT_TOL: f64 = 1e-8;
pub const IPF_DEFAULT_MAX_ITER: usize = 1000;

/// Doubly constrained intensity: IPF of the seed `exp(alpha x_j - beta c_ij)`
/// onto both margins.
pub fn intensity_doubly_ipf(
    x: &[f64],
    params: &SimParams,
    cost: &CostMatrix,
    row_totals: &[f64],
    col_totals: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<IpfOutcome> {
    let (rows, cols) = (cost.rows(), cost.cols());
    if x.len() != cols {
        return Err(Error::LengthMismatch {
            what: "log attraction",
            expected: cols,
            got: x.len(),
        });
    }
    params.check(rows)?;
    if row_totals.len() != rows || col_totals.len() != cols {
        return Err(Error::LengthMismatch {
            what: "margin totals",
            expected: rows + cols,
            got: row_totals.len() + col_totals.len(),
        });
    }
    if row_totals.iter().chain(col_totals).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidArgument("IPF margins must be positive".into()));
    }
    let rs: f64 = row_totals.iter().sum();
    let cs: f64 = col_totals.iter().sum();
    if (rs - cs).abs() > 1e-9 * rs.max(cs) {
        return Err(Error::InconsistentConstraints(format!(
            "row totals sum to {rs} but column totals sum to {cs}"
        )));
    }
    let mut seed = utilities(x, params, cost);
    let max = seed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for s in &mut seed {
        *s = math::exp(*s - max);
    }
    let fit = ipf_balance(&mut seed, rows, cols, row_totals, col_totals, tol, max_iter);
    Ok(IpfOutcome {
        intensity: IntensityMatrix::from_clamped(rows, cols, seed),
        converged: fit.converged,
        iterations: fit.iterations,
        residual: fit.residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct IpfFit {
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

/// In-place alternating row/column scaling of a non-negative matrix.
///
/// Rows or columns whose target is zero are zeroed. The residual is the
/// largest deviation `|sum - target| / max(target, 1e-300)` over both margins,
/// checked after each full sweep.
pub(crate) fn ipf_balance(
    m: &mut [f64],
    rows: usize,
    cols: usize,
    row_targets: &[f64],
    col_targets: &[f64],
    tol: f64,
    max_iter: usize,
) -> IpfFit {
    let mut col_sums = vec![0.0; cols];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter.max(1) {
        for (row, &target) in m.chunks_exact_mut(cols).zip(row_targets) {
            let s: f64 = row.iter().sum();
            let f = if s > 0.0 { target / s } else { 0.0 };
            for v in row {
                *v *= f;
            }
        }
        col_sums.iter_mut().for_each(|c| *c = 0.0);
        for row in m.chunks_exact(cols) {
            for (c, v) in col_sums.iter_mut().zip(row) {
                *c += v;
            }
        }
        let factors: Vec<f64> = col_sums
            .iter()
            .zip(col_targets)
            .map(|(&s, &t)| if s > 0.0 { t / s } else { 0.0 })
            .collect();
        for row in m.chunks_exact_mut(cols) {
            for (v, f) in row.iter_mut().zip(&factors) {
                *v *= f;
            }
        }
        residual = margin_residual(m, rows, cols, row_targets, col_targets);
        if residual <= tol {
            return IpfFit {
                converged: true,
                iterations: it,
                residual,
            };
        }
    }
    IpfFit {
        converged: false,
        iterations: max_iter.max(1),
        residual,
    }
}

fn margin_residual(m: &[f64], rows: usize, cols: usize, row_t: &[f64], col_t: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    let mut cs = vec![0.0; cols];
    for (row, &t) in m.chunks_exact(cols).zip(row_t).take(rows) {
        let s: f64 = row.iter().sum();
        worst = worst.max((s - t).abs() / t.max(1e-300));
        for (c, v) in cs.iter_mut().zip(row) {
            *c += v;
        }
    }
    for (s, &t) in cs.iter().zip(col_t) {
        worst = worst.max((s - t).abs() / t.max(1e-300));
    }
    worst
}

/// Job competition parameter `(Lambda_++ + delta J) / sum_j exp(x_j)`.
pub fn compute_kappa(lambda_total: f64, delta: f64, x: &[f64]) -> f64 {
    let denom: f64 = x.iter().map(|&v| math::exp(v)).sum();
    (lambda_total + delta * x.len() as f64) / denom
}
