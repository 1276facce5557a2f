//! Projected optimizers.
//!
//! Hidden-layer gradients go through [`project_gradient`]; classifier heads
//! are always updated without projection.
//!
//! For Adam the place where the projection happens matters. Adam-GP keeps its
//! moments on the raw gradient and projects the final Adam direction, so the
//! applied update never leaves the allowed subspace. Projecting first and
//! feeding the result to Adam ([`adam_preprojected_step`]) lets the
//! per-coordinate normalisation rotate the step back into protected
//! directions; it is kept as a diagnostic baseline.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gpm::{project_gradient, BasisMemory};
use crate::linalg::Matrix;
use crate::math;
use crate::net::{Gradients, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    AdamGp,
    /// Projection before Adam's moment update (breaks the projection).
    AdamPreprojected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    m: Matrix,
    v: Matrix,
}

impl Moments {
    fn zeros(shape: (usize, usize)) -> Self {
        Self {
            m: Matrix::zeros(shape.0, shape.1),
            v: Matrix::zeros(shape.0, shape.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub adam: AdamParams,
    t: u64,
    layers: Vec<Moments>,
    heads: Vec<Option<Moments>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64, adam: AdamParams) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::Config(alloc::format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&adam.beta1) || !(0.0..1.0).contains(&adam.beta2) || !(adam.eps > 0.0) {
            return Err(Error::Config("Adam needs beta1, beta2 in [0, 1) and eps > 0".into()));
        }
        Ok(Self {
            kind,
            lr,
            adam,
            t: 0,
            layers: Vec::new(),
            heads: Vec::new(),
        })
    }

    pub fn sgd(lr: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, lr, AdamParams::default())
    }

    /// Timestep of the last Adam update.
    pub fn timestep(&self) -> u64 {
        self.t
    }

    /// Clears moments and the timestep (done at the start of every task).
    pub fn reset(&mut self) {
        self.t = 0;
        self.layers.clear();
        self.heads.clear();
    }

    /// One update with whichever rule `kind` selects.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients, mem: &BasisMemory) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd => sgd_step(net, grads, mem, self),
            OptimizerKind::AdamGp => adam_gp_step(net, grads, mem, self),
            OptimizerKind::AdamPreprojected => adam_preprojected_step(net, grads, mem, self),
        }
    }

    fn ensure_moments(&mut self, net: &Network, task: usize) {
        if self.layers.is_empty() {
            self.layers = net.layers().iter().map(|l| Moments::zeros(l.weight.shape())).collect();
        }
        if self.heads.len() <= task {
            self.heads.resize(task + 1, None);
        }
        if self.heads[task].is_none() {
            self.heads[task] = Some(Moments::zeros(net.heads()[task].shape()));
        }
    }

    /// Advances the moments with `g` and returns `m̂ / (sqrt(v̂) + eps)`.
    fn adam_direction(params: &AdamParams, t: u64, moments: &mut Moments, g: &Matrix) -> Matrix {
        let AdamParams { beta1, beta2, eps } = *params;
        let bias1 = 1.0 - math::powi(beta1, t as i32);
        let bias2 = 1.0 - math::powi(beta2, t as i32);
        let mut out = Matrix::zeros(g.rows(), g.cols());
        let m = moments.m.as_mut_slice();
        let v = moments.v.as_mut_slice();
        for (i, (o, gi)) in out.as_mut_slice().iter_mut().zip(g.as_slice()).enumerate() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            *o = m_hat / (math::sqrt(v_hat) + eps);
        }
        out
    }
}

fn check(net: &Network, grads: &Gradients, mem: &BasisMemory) -> Result<()> {
    if grads.layers.len() != net.layers().len() || mem.layers.len() != net.layers().len() {
        return Err(Error::Dimension {
            op: "optimizer step",
            lhs: (grads.layers.len(), mem.layers.len()),
            rhs: (net.layers().len(), net.layers().len()),
        });
    }
    let head = net.heads().get(grads.task).ok_or(Error::MissingHead(grads.task))?;
    if head.shape() != grads.head.shape() {
        return Err(Error::Dimension {
            op: "head gradient",
            lhs: grads.head.shape(),
            rhs: head.shape(),
        });
    }
    Ok(())
}

/// `W ← W − η · project(∇W)` for hidden layers, plain SGD for the head.
pub fn sgd_step(net: &mut Network, grads: &Gradients, mem: &BasisMemory, state: &mut OptimizerState) -> Result<()> {
    check(net, grads, mem)?;
    let lr = state.lr;
    for ((layer, g), lm) in net.layers_mut().iter_mut().zip(&grads.layers).zip(&mem.layers) {
        let projected = project_gradient(g, lm)?;
        layer.weight.axpy(-lr, &projected)?;
    }
    net.heads_mut()[grads.task].axpy(-lr, &grads.head)
}

/// Adam on the raw gradient, projection applied to Adam's output.
pub fn adam_gp_step(net: &mut Network, grads: &Gradients, mem: &BasisMemory, state: &mut OptimizerState) -> Result<()> {
    check(net, grads, mem)?;
    state.ensure_moments(net, grads.task);
    state.t += 1;
    let (lr, t, params) = (state.lr, state.t, state.adam);
    for (l, layer) in net.layers_mut().iter_mut().enumerate() {
        let direction = OptimizerState::adam_direction(&params, t, &mut state.layers[l], &grads.layers[l]);
        let projected = project_gradient(&direction, &mem.layers[l])?;
        layer.weight.axpy(-lr, &projected)?;
    }
    adam_head(net, grads, state)
}

/// Projection first, then standard Adam. Does not keep updates out of the
/// protected subspace once the bases are not axis aligned.
pub fn adam_preprojected_step(
    net: &mut Network,
    grads: &Gradients,
    mem: &BasisMemory,
    state: &mut OptimizerState,
) -> Result<()> {
    check(net, grads, mem)?;
    state.ensure_moments(net, grads.task);
    state.t += 1;
    let (lr, t, params) = (state.lr, state.t, state.adam);
    for (l, layer) in net.layers_mut().iter_mut().enumerate() {
        let projected = project_gradient(&grads.layers[l], &mem.layers[l])?;
        let direction = OptimizerState::adam_direction(&params, t, &mut state.layers[l], &projected);
        layer.weight.axpy(-lr, &direction)?;
    }
    adam_head(net, grads, state)
}

fn adam_head(net: &mut Network, grads: &Gradients, state: &mut OptimizerState) -> Result<()> {
    let (lr, t, params) = (state.lr, state.t, state.adam);
    let moments = state.heads[grads.task].as_mut().expect("ensured");
    let direction = OptimizerState::adam_direction(&params, t, moments, &grads.head);
    net.heads_mut()[grads.task].axpy(-lr, &direction)
}
