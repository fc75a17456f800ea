use super::model::{ConvMfModel, Gradients};
use super::{ConvMfError, OptimizerKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

const ADAGRAD_EPS: f64 = 1e-10;

/// Bias-corrected Adam update of one tensor. `t` is the 1-based step index.
pub fn adam_step(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    cfg: &AdamConfig,
) {
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// Optimizer moments, one buffer per model tensor.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Adam {
        cfg: AdamConfig,
        m: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
        t: u64,
    },
    Sgd,
    Adagrad {
        sum_sq: Vec<Vec<f64>>,
    },
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, model: &ConvMfModel) -> Self {
        let zeros = || -> Vec<Vec<f64>> {
            model.tensor_values().iter().map(|t| vec![0.0; t.len()]).collect()
        };
        match kind {
            OptimizerKind::Adam => Self::Adam {
                cfg: AdamConfig::default(),
                m: zeros(),
                v: zeros(),
                t: 0,
            },
            OptimizerKind::Sgd => Self::Sgd,
            OptimizerKind::Adagrad => Self::Adagrad { sum_sq: zeros() },
        }
    }

    /// Applies one update; refuses non-finite gradients before touching any
    /// parameter.
    pub fn step(&mut self, model: &mut ConvMfModel, grads: &Gradients, lr: f64) -> Result<(), ConvMfError> {
        if let Some(t) = grads.tensors.iter().position(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(ConvMfError::NonFiniteGradient {
                tensor: model.tensor_names()[t].clone(),
            });
        }
        let params = model.tensor_values_mut();
        match self {
            Self::Adam { cfg, m, v, t } => {
                *t += 1;
                for (k, p) in params.into_iter().enumerate() {
                    adam_step(p, &grads.tensors[k], &mut m[k], &mut v[k], *t, lr, cfg);
                }
            }
            Self::Sgd => {
                for (p, g) in params.into_iter().zip(&grads.tensors) {
                    for (pi, gi) in p.iter_mut().zip(g) {
                        *pi -= lr * gi;
                    }
                }
            }
            Self::Adagrad { sum_sq } => {
                for ((p, g), s) in params.into_iter().zip(&grads.tensors).zip(sum_sq) {
                    for i in 0..p.len() {
                        s[i] += g[i] * g[i];
                        p[i] -= lr * g[i] / (s[i].sqrt() + ADAGRAD_EPS);
                    }
                }
            }
        }
        Ok(())
    }
}
