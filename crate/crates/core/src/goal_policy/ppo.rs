//! Rollout storage, discounted returns with generalized advantage
//! estimates, and the clipped-surrogate update.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gaussian_entropy, gaussian_log_prob, PolicyInput, PolicyNet, PolicyParams};
use crate::error::{NavError, Result};
use crate::nn::Adam;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub input: PolicyInput,
    /// Pre-clamp goal draw.
    pub raw: [f64; 2],
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    /// Episode ended after this transition.
    pub done: bool,
}

/// Fixed-horizon window, env-major: transition `t` of env `e` lives at
/// `e * horizon + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub horizon: usize,
    pub transitions: Vec<Transition>,
    /// Value estimate of each env's state after the window.
    pub bootstrap: Vec<f64>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize, horizon: usize, transitions: Vec<Transition>, bootstrap: Vec<f64>) -> Result<Self> {
        if transitions.len() != n_envs * horizon || bootstrap.len() != n_envs {
            return Err(NavError::InvalidInput(format!(
                "buffer expects {n_envs}x{horizon} transitions and {n_envs} bootstrap values"
            )));
        }
        Ok(RolloutBuffer { n_envs, horizon, transitions, bootstrap, returns: Vec::new(), advantages: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn mean_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum::<f64>() / self.len().max(1) as f64
    }
}

/// Returns are discounted reward sums (bootstrapped at the window end);
/// advantages are GAE(λ), normalized to zero mean and unit variance.
/// Raw advantages are also returned for inspection.
pub fn compute_returns_and_advantages(buf: &mut RolloutBuffer, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = buf.len();
    let mut returns = vec![0.0; n];
    let mut adv = vec![0.0; n];
    for e in 0..buf.n_envs {
        let mut next_value = buf.bootstrap[e];
        let mut next_return = buf.bootstrap[e];
        let mut next_adv = 0.0;
        for t in (0..buf.horizon).rev() {
            let i = e * buf.horizon + t;
            let tr = &buf.transitions[i];
            let cont = if tr.done { 0.0 } else { 1.0 };
            returns[i] = tr.reward + gamma * cont * next_return;
            let delta = tr.reward + gamma * cont * next_value - tr.value;
            adv[i] = delta + gamma * lambda * cont * next_adv;
            next_value = tr.value;
            next_return = returns[i];
            next_adv = adv[i];
        }
    }
    let raw = adv.clone();
    let mean = adv.iter().sum::<f64>() / n.max(1) as f64;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n.max(1) as f64;
    let std = var.sqrt();
    for a in &mut adv {
        *a = if std > 1e-12 { (*a - mean) / std } else { *a - mean };
    }
    buf.returns = returns;
    buf.advantages = adv;
    raw
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub lr: f64,
    pub adam_eps: f64,
    /// Global gradient-norm cap per minibatch; `0` disables it.
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.01,
            epochs: 4,
            minibatches: 4,
            lr: 3e-4,
            adam_eps: 1e-6,
            max_grad_norm: 0.5,
        }
    }
}

/// Rescales `grad` in place so its L2 norm is at most `max_norm`.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let k = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= k);
    }
    norm
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// One sample of the PPO objective.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub transition: &'a Transition,
    pub advantage: f64,
    pub ret: f64,
}

/// Mean loss over `batch` (policy + c_v·value − c_e·entropy) and its
/// gradient, accumulated into `grad`.
pub fn ppo_loss_and_grad(
    net: &PolicyNet,
    theta: &[f64],
    batch: &[Sample],
    cfg: &PpoConfig,
    grad: &mut [f64],
) -> Result<(f64, LossStats)> {
    let n = batch.len() as f64;
    let mut stats = LossStats::default();
    let mut total = 0.0;
    for s in batch {
        let (out, cache) = net.forward(theta, &s.transition.input)?;
        let x = s.transition.raw;
        let logp = gaussian_log_prob(x, out.mean, out.log_var);
        let ratio = (logp - s.transition.log_prob).exp();
        let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
        let (unclipped_obj, clipped_obj) = (ratio * s.advantage, clipped * s.advantage);
        let policy_loss = -unclipped_obj.min(clipped_obj);
        let value_err = out.value - s.ret;
        let entropy = gaussian_entropy(out.log_var);
        let loss = policy_loss + cfg.value_coef * value_err * value_err - cfg.entropy_coef * entropy;
        if !loss.is_finite() {
            return Err(NavError::Numerical(format!("non-finite PPO loss ({loss})")));
        }
        total += loss / n;
        stats.policy_loss += policy_loss / n;
        stats.value_loss += value_err * value_err / n;
        stats.entropy += entropy / n;
        if unclipped_obj > clipped_obj {
            stats.clip_fraction += 1.0 / n;
        }

        // d(policy_loss)/d(logp) is -A·ratio on the unclipped branch, else 0.
        let d_logp = if unclipped_obj <= clipped_obj { -s.advantage * ratio } else { 0.0 };
        let mut d_mean = [0.0; 2];
        let mut d_log_var = [0.0; 2];
        for i in 0..2 {
            let v = out.var[i];
            let diff = x[i] - out.mean[i];
            d_mean[i] = d_logp * diff / v / n;
            d_log_var[i] = (d_logp * 0.5 * (diff * diff / v - 1.0) - cfg.entropy_coef * 0.5) / n;
        }
        let d_value = 2.0 * cfg.value_coef * value_err / n;
        net.backward(theta, &out, &cache, d_mean, d_log_var, d_value, grad);
    }
    Ok((total, stats))
}

/// Runs `epochs` passes of shuffled minibatch Adam steps over the buffer
/// (whose returns and advantages must already be computed).
pub fn ppo_update<R: Rng>(
    params: &mut PolicyParams,
    buf: &RolloutBuffer,
    opt: &mut Adam,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<LossStats> {
    if buf.returns.len() != buf.len() || buf.advantages.len() != buf.len() || buf.is_empty() {
        return Err(NavError::InvalidInput("buffer returns/advantages not computed".into()));
    }
    let net = params.net();
    let mut order: Vec<usize> = (0..buf.len()).collect();
    let n_mb = cfg.minibatches.clamp(1, buf.len());
    let mut acc = LossStats::default();
    let mut count = 0.0;
    let mut trial = params.theta.clone();
    let mut trial_opt = opt.clone();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for mb in 0..n_mb {
            let lo = mb * buf.len() / n_mb;
            let hi = (mb + 1) * buf.len() / n_mb;
            let batch: Vec<Sample> = order[lo..hi]
                .iter()
                .map(|&i| Sample { transition: &buf.transitions[i], advantage: buf.advantages[i], ret: buf.returns[i] })
                .collect();
            let mut grad = vec![0.0; trial.len()];
            let (_, stats) = ppo_loss_and_grad(&net, &trial, &batch, cfg, &mut grad)?;
            if !grad.iter().all(|g| g.is_finite()) {
                return Err(NavError::Numerical("non-finite PPO gradient".into()));
            }
            clip_grad_norm(&mut grad, cfg.max_grad_norm);
            trial_opt.step(&mut trial, &grad);
            acc.policy_loss += stats.policy_loss;
            acc.value_loss += stats.value_loss;
            acc.entropy += stats.entropy;
            acc.clip_fraction += stats.clip_fraction;
            count += 1.0;
        }
    }
    params.theta = trial;
    *opt = trial_opt;
    Ok(LossStats {
        policy_loss: acc.policy_loss / count,
        value_loss: acc.value_loss / count,
        entropy: acc.entropy / count,
        clip_fraction: acc.clip_fraction / count,
    })
}
