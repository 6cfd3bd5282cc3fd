//! One-hidden-layer network mapping log attraction to `(alpha, beta)`, and Adam.
//!
//! `h = W1^T y + b1` (identity activation), `theta = |W2^T h + b2|`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 20;
pub const INIT_UPPER: f64 = 4.0;

/// Network output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta {
    pub alpha: f64,
    pub beta: f64,
}

/// Weights stored row-major: `w1[j * H + h]`, `w2[h * 2 + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    inputs: usize,
    hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: [f64; 2],
}

/// Intermediate values kept for back-propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub hidden: Vec<f64>,
    pub pre_output: [f64; 2],
    pub theta: Theta,
    clipped: [bool; 2],
}

impl NetworkWeights {
    pub fn zeros(inputs: usize, hidden: usize) -> Result<Self> {
        if inputs == 0 || hidden == 0 {
            return Err(Error::InvalidArgument(format!(
                "network dimensions must be positive, got J={inputs} H={hidden}"
            )));
        }
        Ok(Self {
            inputs,
            hidden,
            w1: vec![0.0; inputs * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * 2],
            b2: [0.0; 2],
        })
    }

    /// Every entry i.i.d. uniform on `[0, 4)`, drawn in flat order.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, inputs: usize, hidden: usize) -> Result<Self> {
        let mut w = Self::zeros(inputs, hidden)?;
        let flat: Vec<f64> = (0..w.parameter_count())
            .map(|_| INIT_UPPER * rng.random::<f64>())
            .collect();
        w.set_flat(&flat)?;
        Ok(w)
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// `(J + 1) H + (H + 1) 2`.
    pub fn parameter_count(&self) -> usize {
        (self.inputs + 1) * self.hidden + (self.hidden + 1) * 2
    }

    /// Flattened as `w1, b1, w2, b2`.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.extend_from_slice(&self.b2);
        out
    }

    pub fn from_flat(inputs: usize, hidden: usize, flat: &[f64]) -> Result<Self> {
        let mut w = Self::zeros(inputs, hidden)?;
        w.set_flat(flat)?;
        Ok(w)
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::LengthMismatch {
                what: "network parameters",
                expected: self.parameter_count(),
                got: flat.len(),
            });
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite network weight".into()));
        }
        let (w1, rest) = flat.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, b2) = rest.split_at(self.hidden * 2);
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2.copy_from_slice(b2);
        Ok(())
    }

    pub fn forward(&self, y: &[f64]) -> Result<Theta> {
        self.forward_pass(y, None).map(|p| p.theta)
    }

    /// Forward pass with optional clipping of each output to `[0, theta_max]`.
    pub fn forward_pass(&self, y: &[f64], theta_max: Option<f64>) -> Result<ForwardPass> {
        if y.len() != self.inputs {
            return Err(Error::LengthMismatch {
                what: "network input",
                expected: self.inputs,
                got: y.len(),
            });
        }
        let h_dim = self.hidden;
        let mut hidden = self.b1.clone();
        for (yj, row) in y.iter().zip(self.w1.chunks_exact(h_dim)) {
            for (hh, w) in hidden.iter_mut().zip(row) {
                *hh += yj * w;
            }
        }
        let mut pre = self.b2;
        for (hh, row) in hidden.iter().zip(self.w2.chunks_exact(2)) {
            pre[0] += hh * row[0];
            pre[1] += hh * row[1];
        }
        let mut out = [pre[0].abs(), pre[1].abs()];
        let mut clipped = [false; 2];
        if let Some(max) = theta_max {
            for k in 0..2 {
                if out[k] > max {
                    out[k] = max;
                    clipped[k] = true;
                }
            }
        }
        Ok(ForwardPass {
            hidden,
            pre_output: pre,
            theta: Theta {
                alpha: out[0],
                beta: out[1],
            },
            clipped,
        })
    }

    /// Gradient of a scalar with respect to every weight, given its
    /// gradient `d_theta` with respect to the (possibly clipped) output.
    /// The derivative of `|u|` at zero is taken as zero.
    pub fn backward(&self, y: &[f64], pass: &ForwardPass, d_theta: [f64; 2]) -> NetworkWeights {
        let mut grad = NetworkWeights::zeros(self.inputs, self.hidden)
            .expect("dimensions already validated");
        let mut du = [0.0; 2];
        for k in 0..2 {
            let sign = if pass.pre_output[k] > 0.0 {
                1.0
            } else if pass.pre_output[k] < 0.0 {
                -1.0
            } else {
                0.0
            };
            du[k] = if pass.clipped[k] { 0.0 } else { d_theta[k] * sign };
        }
        grad.b2 = du;
        let mut dh = vec![0.0; self.hidden];
        for ((g, w), (hh, d)) in grad
            .w2
            .chunks_exact_mut(2)
            .zip(self.w2.chunks_exact(2))
            .zip(pass.hidden.iter().zip(dh.iter_mut()))
        {
            g[0] = hh * du[0];
            g[1] = hh * du[1];
            *d = w[0] * du[0] + w[1] * du[1];
        }
        for (yj, row) in y.iter().zip(grad.w1.chunks_exact_mut(self.hidden)) {
            for (g, d) in row.iter_mut().zip(&dh) {
                *g = yj * d;
            }
        }
        grad.b1 = dh;
        grad
    }
}

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates over the flattened weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, parameter_count: usize) -> Self {
        Self {
            config,
            m: vec![0.0; parameter_count],
            v: vec![0.0; parameter_count],
            step: 0,
        }
    }

    /// One bias-corrected Adam update of `weights` in place.
    pub fn update(&mut self, weights: &mut NetworkWeights, grad: &NetworkWeights) -> Result<()> {
        let g = grad.flat();
        let mut w = weights.flat();
        if g.len() != w.len() || g.len() != self.m.len() {
            return Err(Error::LengthMismatch {
                what: "optimizer state",
                expected: self.m.len(),
                got: g.len(),
            });
        }
        let c = self.config;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(c.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, t as f64);
        for (((wi, gi), mi), vi) in w.iter_mut().zip(&g).zip(&mut self.m).zip(&mut self.v) {
            *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
            *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *wi -= c.learning_rate * m_hat / (libm::sqrt(v_hat) + c.eps);
        }
        weights.set_flat(&w)
    }
}
