//! Learnable autoregressive trajectory refiner.
//!
//! The refined estimate at step `t` is an exponentially discounted,
//! elementwise-gated sum of all raw per-step position estimates so far:
//!
//! ```text
//! p_hat_t = sum_{k=1..t} sigmoid(gamma)^(t-k+1) * z .* p_tilde_k
//! ```
//!
//! which is evaluated with the rolling recurrence
//! `S_t = sigmoid(gamma) * (S_{t-1} + z .* p_tilde_t)`, `S_0 = 0`.
//! `gamma` (scalar) and `z` (per-axis gate) are trained by SGD against the
//! ground-truth trajectory.

use crate::autograd::{sgd_step, NodeId, Tape, Tensor};
use crate::dma::ChannelEstimate;
use crate::error::{Error, Result};
use crate::mmhsa::{self, MmhsaConfig, MmhsaParams};

/// Refiner weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ArParams {
    pub gamma: f64,
    pub z: [f64; 2],
}

impl Default for ArParams {
    fn default() -> Self {
        Self { gamma: 2.0, z: [0.15, 0.15] }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Refined position after consuming the whole raw-estimate history, via the
/// rolling recurrence. Errors on an empty history.
pub fn ar_predict(params: &ArParams, history: &[[f64; 2]]) -> Result<[f64; 2]> {
    if history.is_empty() {
        return Err(Error::Domain("autoregressive prediction needs at least one raw estimate".into()));
    }
    let sig = sigmoid(params.gamma);
    let mut state = [0.0; 2];
    for p in history {
        state[0] = sig * (state[0] + params.z[0] * p[0]);
        state[1] = sig * (state[1] + params.z[1] * p[1]);
    }
    Ok(state)
}

/// Build the AR loss graph for one parameter binding: the mean Euclidean
/// distance between the refined estimate and the truth over every step of
/// every trajectory.
fn ar_loss_on_tape(
    tape: &mut Tape,
    gamma: NodeId,
    z: NodeId,
    raw: &[Vec<[f64; 2]>],
    truth: &[Vec<[f64; 2]>],
) -> Result<NodeId> {
    let sig = tape.sigmoid(gamma);
    let mut total: Option<NodeId> = None;
    let mut count = 0usize;
    for (traj, target) in raw.iter().zip(truth) {
        let mut state = tape.leaf_from(vec![1, 2], vec![0.0, 0.0])?;
        for (p, t) in traj.iter().zip(target) {
            let p_node = tape.leaf_from(vec![1, 2], p.to_vec())?;
            let gated = tape.mul(z, p_node)?;
            let summed = tape.add(state, gated)?;
            state = tape.scale_by(summed, sig)?;
            let loss = mmhsa::sample_loss(tape, state, *t)?;
            total = Some(match total {
                Some(acc) => tape.add(acc, loss)?,
                None => loss,
            });
            count += 1;
        }
    }
    let total = total.ok_or_else(|| Error::Domain("refiner training needs at least one step".into()))?;
    Ok(tape.scale(total, 1.0 / count as f64))
}

/// Train `gamma` and `z` by full-batch SGD. `raw` holds the per-trajectory
/// raw position estimates, `truth` the matching ground-truth positions.
/// Returns the trained parameters and the per-epoch loss (evaluated before
/// each step, plus a final post-training entry).
pub fn ar_train(
    raw: &[Vec<[f64; 2]>],
    truth: &[Vec<[f64; 2]>],
    init: &ArParams,
    learning_rate: f64,
    epochs: usize,
) -> Result<(ArParams, Vec<f64>)> {
    if raw.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} raw trajectories but {} truth trajectories",
            raw.len(),
            truth.len()
        )));
    }
    for (i, (a, b)) in raw.iter().zip(truth).enumerate() {
        if a.len() != b.len() {
            return Err(Error::Dimension(format!(
                "trajectory {i}: {} raw steps but {} truth steps",
                a.len(),
                b.len()
            )));
        }
    }
    let mut gamma = Tensor::param(vec![1], vec![init.gamma])?;
    let mut z = Tensor::param(vec![1, 2], init.z.to_vec())?;
    let mut history = Vec::with_capacity(epochs + 1);
    for epoch in 0..=epochs {
        let mut tape = Tape::new();
        let g_node = tape.leaf(&gamma);
        let z_node = tape.leaf(&z);
        let loss = ar_loss_on_tape(&mut tape, g_node, z_node, raw, truth)?;
        let loss_value = tape.value(loss)[0];
        if !loss_value.is_finite() {
            return Err(Error::State(format!(
                "refiner training diverged: non-finite loss {loss_value} at epoch {epoch}"
            )));
        }
        history.push(loss_value);
        if epoch == epochs {
            break;
        }
        tape.backward(loss)?;
        if learning_rate != 0.0 {
            gamma.accumulate_grad(tape.grad(g_node))?;
            z.accumulate_grad(tape.grad(z_node))?;
            sgd_step([&mut gamma, &mut z], learning_rate)?;
        }
    }
    Ok((ArParams { gamma: gamma.data[0], z: [z.data[0], z.data[1]] }, history))
}

/// Causal tracking over one trajectory: each step runs the attention
/// network on that step's channel estimate and folds the raw estimate into
/// the rolling refiner state. Returns (raw, refined) per step.
pub fn track(
    estimates: &[ChannelEstimate],
    mmhsa_params: &MmhsaParams,
    mmhsa_config: &MmhsaConfig,
    ar: &ArParams,
) -> Result<Vec<([f64; 2], [f64; 2])>> {
    let sig = sigmoid(ar.gamma);
    let mut state = [0.0; 2];
    let mut out = Vec::with_capacity(estimates.len());
    for estimate in estimates {
        let raw = mmhsa::forward(estimate, mmhsa_params, mmhsa_config)?;
        state[0] = sig * (state[0] + ar.z[0] * raw[0]);
        state[1] = sig * (state[1] + ar.z[1] * raw[1]);
        out.push((raw, state));
    }
    Ok(out)
}
