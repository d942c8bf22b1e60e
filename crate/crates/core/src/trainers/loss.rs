use ndarray::{Array2, ArrayView2};

use super::batch::Batch;
use super::learner::{masked_argmax, AgentLearner};
use super::{Algo, Mode, TrainerConfig};
use crate::error::{Error, Result};
use crate::nn::{argmax, huber, huber_grad, softmax_xent, Gradients, Trace};

/// `logsumexp(q_row) - q_row[data_action]`.
pub fn cql_penalty(q_row: &[f64], data_action: usize) -> Result<f64> {
    Ok(softmax_xent(q_row, data_action)?.0)
}

/// Per-agent bootstrap values `max_a Q_target(o', a)` (restricted to the
/// behaviour-supported set under BCQ) and the actions that attain them.
#[derive(Clone, Debug, PartialEq)]
pub struct Bootstrap {
    pub values: Vec<Vec<f64>>,
    pub actions: Vec<Vec<usize>>,
    /// Samples whose BCQ mask came out empty and fell back to the data action.
    pub fallback: Vec<Vec<bool>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// `y[i][b]`, one target per agent.
    PerAgent(Vec<Vec<f64>>),
    /// One team target per sample against `Q_tot`.
    Team(Vec<f64>),
}

fn check_agents(batch: &Batch, learners: &[AgentLearner]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    if learners.len() != batch.num_agents() {
        return Err(Error::contract(format!(
            "{} learners for a batch of {} agents",
            learners.len(),
            batch.num_agents()
        )));
    }
    Ok(())
}

pub fn bootstrap_values(
    batch: &Batch,
    learners: &[AgentLearner],
    config: &TrainerConfig,
) -> Result<Bootstrap> {
    check_agents(batch, learners)?;
    let mut out = Bootstrap {
        values: Vec::with_capacity(learners.len()),
        actions: Vec::with_capacity(learners.len()),
        fallback: Vec::with_capacity(learners.len()),
    };
    for (i, learner) in learners.iter().enumerate() {
        let next_q = learner.target_net.forward(batch.next_obs[i].view())?;
        let logits = match (config.algo, &learner.behavior) {
            (Algo::Bcq, Some(b)) => Some(b.net.forward(batch.next_obs[i].view())?),
            (Algo::Bcq, None) => {
                return Err(Error::contract("bcq learner has no behaviour network"))
            }
            _ => None,
        };
        let mut values = Vec::with_capacity(batch.len());
        let mut actions = Vec::with_capacity(batch.len());
        let mut fallback = Vec::with_capacity(batch.len());
        for (r, row) in next_q.outer_iter().enumerate() {
            let row = row.as_slice().expect("standard layout");
            let (a, fell_back) = match &logits {
                None => (argmax(row), false),
                Some(l) => {
                    let l = l.row(r);
                    match masked_argmax(row, l.as_slice().expect("standard layout"), config.bcq_tau) {
                        Some(a) => (a, false),
                        None => (batch.actions[i][r], true),
                    }
                }
            };
            values.push(row[a]);
            actions.push(a);
            fallback.push(fell_back);
        }
        out.values.push(values);
        out.actions.push(actions);
        out.fallback.push(fallback);
    }
    Ok(out)
}

fn targets_from(batch: &Batch, boot: &Bootstrap, mode: Mode, gamma: f64) -> Targets {
    let cont = |r: usize| if batch.dones[r] { 0.0 } else { gamma };
    match mode {
        Mode::Independent => Targets::PerAgent(
            boot.values
                .iter()
                .map(|v| {
                    v.iter()
                        .enumerate()
                        .map(|(r, &q)| batch.rewards[r] + cont(r) * q)
                        .collect()
                })
                .collect(),
        ),
        Mode::Ctde => Targets::Team(
            (0..batch.len())
                .map(|r| {
                    let sum: f64 = boot.values.iter().map(|v| v[r]).sum();
                    batch.rewards[r] + cont(r) * sum
                })
                .collect(),
        ),
    }
}

pub fn td_targets(
    batch: &Batch,
    learners: &[AgentLearner],
    config: &TrainerConfig,
) -> Result<Targets> {
    let boot = bootstrap_values(batch, learners, config)?;
    Ok(targets_from(batch, &boot, config.mode, config.gamma))
}

/// `Q_tot(o, a) = sum_i Q_i(o_i, a_i)` per sample.
pub fn q_total(batch: &Batch, learners: &[AgentLearner]) -> Result<Vec<f64>> {
    check_agents(batch, learners)?;
    let mut total = vec![0.0; batch.len()];
    for (i, l) in learners.iter().enumerate() {
        let q = l.q_net.forward(batch.obs[i].view())?;
        for (r, t) in total.iter_mut().enumerate() {
            *t += q[[r, batch.actions[i][r]]];
        }
    }
    Ok(total)
}

#[derive(Clone, Debug)]
pub struct AgentLoss {
    /// This agent's objective: its TD (or imitation) term plus `alpha`
    /// times its own penalty. Under CTDE the TD term is the shared one.
    pub loss: f64,
    pub td_loss: f64,
    /// Mean CQL penalty over the batch (0 unless the algorithm is CQL).
    pub penalty: f64,
    pub grads: Gradients,
    pub behavior_loss: Option<f64>,
    pub behavior_grads: Option<Gradients>,
}

#[derive(Clone, Debug)]
pub struct BatchLoss {
    pub agents: Vec<AgentLoss>,
    /// Objective whose gradient each agent receives.
    pub total: f64,
}

impl BatchLoss {
    pub fn mean_penalty(&self) -> f64 {
        self.agents.iter().map(|a| a.penalty).sum::<f64>() / self.agents.len() as f64
    }
}

fn row_slice(m: &Array2<f64>, r: usize) -> &[f64] {
    let start = r * m.ncols();
    &m.as_slice().expect("standard layout")[start..start + m.ncols()]
}

pub fn loss_and_grads(
    batch: &Batch,
    learners: &[AgentLearner],
    config: &TrainerConfig,
) -> Result<BatchLoss> {
    check_agents(batch, learners)?;
    let n = learners.len();
    let inv_b = 1.0 / batch.len() as f64;
    let traces: Vec<Trace> = learners
        .iter()
        .zip(&batch.obs)
        .map(|(l, o)| l.q_net.forward_traced(o.view()))
        .collect::<Result<_>>()?;
    let mut upstream: Vec<Array2<f64>> = traces
        .iter()
        .map(|t| Array2::zeros(t.output.dim()))
        .collect();
    let mut td = vec![0.0; n];
    let mut shared_td = None;

    if config.algo == Algo::Bc {
        for i in 0..n {
            for r in 0..batch.len() {
                let (loss, g) = softmax_xent(row_slice(&traces[i].output, r), batch.actions[i][r])?;
                td[i] += loss * inv_b;
                for (u, gv) in upstream[i].row_mut(r).iter_mut().zip(g) {
                    *u += gv * inv_b;
                }
            }
        }
    } else {
        let boot = bootstrap_values(batch, learners, config)?;
        let delta_h = config.huber_delta;
        match targets_from(batch, &boot, config.mode, config.gamma) {
            Targets::PerAgent(y) => {
                for i in 0..n {
                    for r in 0..batch.len() {
                        let a = batch.actions[i][r];
                        let resid = traces[i].output[[r, a]] - y[i][r];
                        td[i] += huber(resid, delta_h) * inv_b;
                        upstream[i][[r, a]] += huber_grad(resid, delta_h) * inv_b;
                    }
                }
            }
            Targets::Team(y) => {
                let mut shared = 0.0;
                for r in 0..batch.len() {
                    let q_tot: f64 = (0..n).map(|i| traces[i].output[[r, batch.actions[i][r]]]).sum();
                    let resid = q_tot - y[r];
                    shared += huber(resid, delta_h) * inv_b;
                    let g = huber_grad(resid, delta_h) * inv_b;
                    for i in 0..n {
                        upstream[i][[r, batch.actions[i][r]]] += g;
                    }
                }
                td = vec![shared; n];
                shared_td = Some(shared);
            }
        }
    }

    let alpha = config.cql_alpha;
    let mut penalties = vec![0.0; n];
    if config.algo == Algo::Cql {
        for i in 0..n {
            for r in 0..batch.len() {
                let (pen, g) = softmax_xent(row_slice(&traces[i].output, r), batch.actions[i][r])?;
                penalties[i] += pen * inv_b;
                if alpha != 0.0 {
                    for (u, gv) in upstream[i].row_mut(r).iter_mut().zip(g) {
                        *u += alpha * gv * inv_b;
                    }
                }
            }
        }
    }

    let mut agents = Vec::with_capacity(n);
    for i in 0..n {
        let grads = learners[i]
            .q_net
            .backward(&traces[i], upstream[i].view())?;
        let (behavior_loss, behavior_grads) = match (&learners[i].behavior, config.algo) {
            (Some(b), Algo::Bcq) => {
                let (l, g) = imitation_loss_and_grads(&b.net, batch.obs[i].view(), &batch.actions[i])?;
                (Some(l), Some(g))
            }
            _ => (None, None),
        };
        let loss = if config.algo == Algo::Cql {
            td[i] + alpha * penalties[i]
        } else {
            td[i]
        };
        agents.push(AgentLoss {
            loss,
            td_loss: td[i],
            penalty: penalties[i],
            grads,
            behavior_loss,
            behavior_grads,
        });
    }
    let total = match shared_td {
        Some(shared) if config.algo == Algo::Cql => shared + alpha * penalties.iter().sum::<f64>(),
        Some(shared) => shared,
        None => agents.iter().map(|a| a.loss).sum(),
    };
    Ok(BatchLoss { agents, total })
}

/// Mean softmax cross-entropy of `actions` under `net`'s logits, with exact
/// gradients.
pub(crate) fn imitation_loss_and_grads(
    net: &crate::nn::Mlp,
    obs: ArrayView2<f64>,
    actions: &[usize],
) -> Result<(f64, Gradients)> {
    let trace = net.forward_traced(obs)?;
    let inv_b = 1.0 / actions.len() as f64;
    let mut upstream = Array2::zeros(trace.output.dim());
    let mut loss = 0.0;
    for (r, &a) in actions.iter().enumerate() {
        let (l, g) = softmax_xent(row_slice(&trace.output, r), a)?;
        loss += l * inv_b;
        for (u, gv) in upstream.row_mut(r).iter_mut().zip(g) {
            *u = gv * inv_b;
        }
    }
    let grads = net.backward(&trace, upstream.view())?;
    Ok((loss, grads))
}
