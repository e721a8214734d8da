//! First-order optimizers operating on graph parameters.

use crate::autodiff::{Graph, NodeId};
use crate::error::Result;

pub trait Optimizer {
    /// Applies one update to every listed parameter from its current gradient.
    fn step(&mut self, graph: &mut Graph, params: &[NodeId]) -> Result<()>;
}

#[derive(Clone, Debug)]
pub struct Sgd {
    pub learning_rate: f64,
}

impl Sgd {
    pub fn new(learning_rate: f64) -> Self {
        Self { learning_rate }
    }
}

impl Optimizer for Sgd {
    fn step(&mut self, graph: &mut Graph, params: &[NodeId]) -> Result<()> {
        for &p in params {
            let (value, grad) = graph.param_and_grad_mut(p)?;
            if grad.data().len() != value.data().len() {
                continue;
            }
            crate::autodiff::axpy(-self.learning_rate, grad.data(), value.data_mut());
        }
        Ok(())
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }
}

impl Optimizer for Adam {
    fn step(&mut self, graph: &mut Graph, params: &[NodeId]) -> Result<()> {
        if self.m.len() != params.len() {
            self.m = params.iter().map(|&p| vec![0.0; graph.value(p).data().len()]).collect();
            self.v = self.m.clone();
            self.t = 0;
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (k, &p) in params.iter().enumerate() {
            let (value, grad) = graph.param_and_grad_mut(p)?;
            if grad.data().len() != value.data().len() {
                continue;
            }
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (((w, &g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w -= self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
