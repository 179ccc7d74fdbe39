//! Long-term goal policy: a shared-weight panorama pair encoder fused with a
//! convolutional map encoder, feeding Gaussian goal and value heads.

pub mod ppo;
pub mod reward;
pub mod train;

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::grid::Cell;
use crate::gridworld::{Panorama, PanoramaConfig};
use crate::mapping::ChannelMap;
use crate::nn::{check_finite, relu, relu_backward, sigmoid, Conv2d, Dense, Layout, PairCache, PairEncoder};

pub const LOG_VAR_MIN: f64 = -5.0;
pub const LOG_VAR_MAX: f64 = 1.0;

/// Flattened network inputs: panorama features for (current, goal) and the
/// pooled channel stack, channel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyInput {
    pub current: Vec<f64>,
    pub goal: Vec<f64>,
    pub map: Vec<f64>,
}

impl PolicyInput {
    pub fn new(current: &Panorama, goal: &Panorama, channels: &ChannelMap, pano: &PanoramaConfig, grid: usize) -> Result<Self> {
        if current.len() != goal.len() {
            return Err(NavError::InvalidInput(format!(
                "panorama lengths differ: {} vs {}",
                current.len(),
                goal.len()
            )));
        }
        Ok(PolicyInput {
            current: current.features(pano.max_range_m),
            goal: goal.features(pano.max_range_m),
            map: channels.downsample(grid),
        })
    }
}

/// Normalized map coordinates in `[0,1]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongTermGoal {
    pub gx: f64,
    pub gy: f64,
}

impl LongTermGoal {
    /// Grid cell containing the goal on a `width`×`height` map.
    pub fn cell(&self, width: usize, height: usize) -> Cell {
        let col = ((self.gx * width as f64).floor() as usize).min(width - 1);
        let row = ((self.gy * height as f64).floor() as usize).min(height - 1);
        Cell::new(row, col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyArch {
    pub pano_len: usize,
    pub hidden: usize,
    pub fused: usize,
    pub map_grid: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub map_embed: usize,
    pub trunk: usize,
}

impl Default for PolicyArch {
    fn default() -> Self {
        PolicyArch { pano_len: 144, hidden: 64, fused: 64, map_grid: 32, conv1: 8, conv2: 16, map_embed: 64, trunk: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyNet {
    pub arch: PolicyArch,
    pub pair: PairEncoder,
    conv1: Conv2d,
    conv2: Conv2d,
    map_fc: Dense,
    trunk1: Dense,
    trunk2: Dense,
    mean: Dense,
    log_var: Dense,
    value: Dense,
    n_params: usize,
}

pub const MAP_CHANNELS: usize = 4;

impl PolicyNet {
    pub fn new(arch: PolicyArch) -> Self {
        let mut l = Layout::new();
        let pair = PairEncoder::new(&mut l, arch.pano_len, arch.hidden, arch.fused);
        let conv1 = Conv2d::new(&mut l, MAP_CHANNELS, arch.conv1, arch.map_grid);
        let conv2 = Conv2d::new(&mut l, arch.conv1, arch.conv2, conv1.out_size);
        let map_fc = Dense::new(&mut l, conv2.out_len(), arch.map_embed);
        let trunk1 = Dense::new(&mut l, arch.fused + arch.map_embed, arch.trunk);
        let trunk2 = Dense::new(&mut l, arch.trunk, arch.trunk);
        let mean = Dense::new(&mut l, arch.trunk, 2);
        let log_var = Dense::new(&mut l, arch.trunk, 2);
        let value = Dense::new(&mut l, arch.trunk, 1);
        PolicyNet { arch, pair, conv1, conv2, map_fc, trunk1, trunk2, mean, log_var, value, n_params: l.len() }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn map_len(&self) -> usize {
        MAP_CHANNELS * self.arch.map_grid * self.arch.map_grid
    }

    /// Random initial parameters; the log-variance head starts as the
    /// constant `init_log_var`.
    pub fn init(&self, seed: u64, init_log_var: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = vec![0.0; self.n_params];
        self.pair.init(&mut theta, &mut rng);
        self.conv1.init(&mut theta, &mut rng);
        self.conv2.init(&mut theta, &mut rng);
        self.map_fc.init(&mut theta, 1.0, &mut rng);
        self.trunk1.init(&mut theta, 1.0, &mut rng);
        self.trunk2.init(&mut theta, 1.0, &mut rng);
        self.mean.init(&mut theta, 0.01, &mut rng);
        self.log_var.init(&mut theta, 0.0, &mut rng);
        self.log_var.bias_mut(&mut theta).fill(init_log_var.clamp(LOG_VAR_MIN, LOG_VAR_MAX));
        self.value.init(&mut theta, 0.1, &mut rng);
        theta
    }

    pub fn forward(&self, theta: &[f64], input: &PolicyInput) -> Result<(PolicyOutput, PolicyCache)> {
        if input.current.len() != self.arch.pano_len || input.goal.len() != self.arch.pano_len {
            return Err(NavError::InvalidInput(format!(
                "panorama features must have length {}",
                self.arch.pano_len
            )));
        }
        if input.map.len() != self.map_len() {
            return Err(NavError::InvalidInput(format!("map input must have length {}", self.map_len())));
        }
        let pair = self.pair.forward(theta, &input.current, &input.goal);
        let c1 = relu(self.conv1.forward(theta, &input.map));
        let c2 = relu(self.conv2.forward(theta, &c1));
        let map_emb = relu(self.map_fc.forward(theta, &c2));
        let cat: Vec<f64> = pair.fused.iter().chain(&map_emb).copied().collect();
        let t1 = relu(self.trunk1.forward(theta, &cat));
        let t2 = relu(self.trunk2.forward(theta, &t1));
        let z_mean = self.mean.forward(theta, &t2);
        let raw_lv = self.log_var.forward(theta, &t2);
        let value = self.value.forward(theta, &t2)[0];
        check_finite(&t2, "policy trunk")?;
        check_finite(&z_mean, "policy mean head")?;
        check_finite(&raw_lv, "policy log-variance head")?;
        if !value.is_finite() {
            return Err(NavError::Numerical("non-finite value estimate".into()));
        }
        let mean = [sigmoid(z_mean[0]), sigmoid(z_mean[1])];
        let log_var = [raw_lv[0].clamp(LOG_VAR_MIN, LOG_VAR_MAX), raw_lv[1].clamp(LOG_VAR_MIN, LOG_VAR_MAX)];
        let out = PolicyOutput { mean, log_var, var: [log_var[0].exp(), log_var[1].exp()], value };
        let cache = PolicyCache { map: input.map.clone(), pair, c1, c2, map_emb, cat, t1, t2, raw_lv: [raw_lv[0], raw_lv[1]] };
        Ok((out, cache))
    }

    /// Backpropagates gradients given w.r.t. the (post-sigmoid) mean, the
    /// (post-clamp) log-variance and the value.
    pub fn backward(
        &self,
        theta: &[f64],
        out: &PolicyOutput,
        cache: &PolicyCache,
        d_mean: [f64; 2],
        d_log_var: [f64; 2],
        d_value: f64,
        grad: &mut [f64],
    ) {
        let dz_mean: Vec<f64> = (0..2).map(|i| d_mean[i] * out.mean[i] * (1.0 - out.mean[i])).collect();
        let d_raw_lv: Vec<f64> = (0..2)
            .map(|i| {
                let r = cache.raw_lv[i];
                if (LOG_VAR_MIN..=LOG_VAR_MAX).contains(&r) {
                    d_log_var[i]
                } else {
                    0.0
                }
            })
            .collect();
        let mut d_t2 = self.mean.backward(theta, &cache.t2, &dz_mean, grad);
        for (a, b) in d_t2.iter_mut().zip(self.log_var.backward(theta, &cache.t2, &d_raw_lv, grad)) {
            *a += b;
        }
        for (a, b) in d_t2.iter_mut().zip(self.value.backward(theta, &cache.t2, &[d_value], grad)) {
            *a += b;
        }
        let d_t1 = self.trunk2.backward(theta, &cache.t1, &relu_backward(&cache.t2, &d_t2), grad);
        let d_cat = self.trunk1.backward(theta, &cache.cat, &relu_backward(&cache.t1, &d_t1), grad);
        let f = self.arch.fused;
        self.pair.backward(theta, &cache.pair, &d_cat[..f], grad);
        let d_c2 = self.map_fc.backward(theta, &cache.c2, &relu_backward(&cache.map_emb, &d_cat[f..]), grad);
        let d_c1 = self.conv2.backward(theta, &cache.c1, &relu_backward(&cache.c2, &d_c2), grad);
        self.conv1.backward(theta, &cache.map, &relu_backward(&cache.c1, &d_c1), grad);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput {
    pub mean: [f64; 2],
    pub log_var: [f64; 2],
    pub var: [f64; 2],
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct PolicyCache {
    map: Vec<f64>,
    pub pair: PairCache,
    c1: Vec<f64>,
    c2: Vec<f64>,
    map_emb: Vec<f64>,
    cat: Vec<f64>,
    t1: Vec<f64>,
    t2: Vec<f64>,
    raw_lv: [f64; 2],
}

/// Network weights together with the architecture that interprets them.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub arch: PolicyArch,
    pub theta: Vec<f64>,
}

impl PolicyParams {
    pub fn new(arch: PolicyArch, seed: u64, init_log_var: f64) -> Self {
        let theta = PolicyNet::new(arch).init(seed, init_log_var);
        PolicyParams { arch, theta }
    }

    pub fn zeros(arch: PolicyArch) -> Self {
        PolicyParams { arch, theta: vec![0.0; PolicyNet::new(arch).n_params()] }
    }

    pub fn net(&self) -> PolicyNet {
        PolicyNet::new(self.arch)
    }
}

/// Forward pass returning mean, variance and value.
pub fn encode(input: &PolicyInput, params: &PolicyParams) -> Result<PolicyOutput> {
    if !params.theta.iter().all(|x| x.is_finite()) {
        return Err(NavError::Numerical("policy parameters are not finite".into()));
    }
    Ok(params.net().forward(&params.theta, input)?.0)
}

/// Diagonal Gaussian log-density of `x`.
pub fn gaussian_log_prob(x: [f64; 2], mean: [f64; 2], log_var: [f64; 2]) -> f64 {
    (0..2)
        .map(|i| -0.5 * ((x[i] - mean[i]).powi(2) / log_var[i].exp() + log_var[i] + (2.0 * PI).ln()))
        .sum()
}

pub fn gaussian_entropy(log_var: [f64; 2]) -> f64 {
    log_var.iter().map(|lv| 0.5 * ((2.0 * PI * std::f64::consts::E).ln() + lv)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalSample {
    pub goal: LongTermGoal,
    /// Pre-clamp draw; the log-probability refers to this point.
    pub raw: [f64; 2],
    pub log_prob: f64,
    pub clamped: bool,
}

/// Draws from the diagonal Gaussian, then clamps into `[0,1]²`.
pub fn sample_goal<R: Rng>(mean: [f64; 2], var: [f64; 2], rng: &mut R) -> Result<GoalSample> {
    if var.iter().any(|v| !(*v > 0.0)) {
        return Err(NavError::InvalidInput(format!("variance must be positive, got {var:?}")));
    }
    let raw: [f64; 2] = std::array::from_fn(|i| {
        let z: f64 = StandardNormal.sample(rng);
        mean[i] + var[i].sqrt() * z
    });
    let log_prob = gaussian_log_prob(raw, mean, [var[0].ln(), var[1].ln()]);
    let goal = LongTermGoal { gx: raw[0].clamp(0.0, 1.0), gy: raw[1].clamp(0.0, 1.0) };
    let clamped = goal.gx != raw[0] || goal.gy != raw[1];
    Ok(GoalSample { goal, raw, log_prob, clamped })
}

/// Deterministic goal at the Gaussian mean.
pub fn greedy_goal(mean: [f64; 2], log_var: [f64; 2]) -> GoalSample {
    let goal = LongTermGoal { gx: mean[0].clamp(0.0, 1.0), gy: mean[1].clamp(0.0, 1.0) };
    GoalSample { goal, raw: mean, log_prob: gaussian_log_prob(mean, mean, log_var), clamped: false }
}
