use serde::{Deserialize, Serialize};

use super::tensor::Params;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state: first and second moments per parameter tensor.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Optimizer {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step<P: Params>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let gs = grads.params();
        for (name, g) in &gs {
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        let mut ps = params.params_mut();
        if ps.len() != gs.len() {
            return Err(Error::Shape("parameter and gradient structures differ".into()));
        }
        for ((_, p), (name, g)) in ps.iter().zip(&gs) {
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!("gradient shape mismatch for {name}")));
            }
        }
        self.step += 1;
        match self.config {
            OptimizerConfig::Sgd { lr } => {
                for ((_, p), (_, g)) in ps.iter_mut().zip(&gs) {
                    p.data_mut().iter_mut().zip(g.data()).for_each(|(x, d)| *x -= lr * d);
                }
            }
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                if self.m.is_empty() {
                    self.m = gs.iter().map(|(_, g)| vec![0.0; g.len()]).collect();
                    self.v = self.m.clone();
                }
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (k, ((_, p), (_, g))) in ps.iter_mut().zip(&gs).enumerate() {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for (q, (x, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[q] = beta1 * m[q] + (1.0 - beta1) * d;
                        v[q] = beta2 * v[q] + (1.0 - beta2) * d * d;
                        *x -= lr * (m[q] / c1) / ((v[q] / c2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
