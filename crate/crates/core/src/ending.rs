//! Ending predictor: a siamese classifier deciding whether the current
//! panorama was taken within 1 m of the goal panorama.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::SimConfig;
use crate::error::{NavError, Result};
use crate::fmm::Planner;
use crate::gridworld::{jittered_point, render_panorama, step, Action, Panorama, Pose, World};
use crate::mapping::OccupancyMap;
use crate::nn::{check_finite, sigmoid, Adam, Dense, Layout, PairCache, PairEncoder};
use crate::parallel::{derive_seed, map_range};

/// Pairs at most this far apart (meters) are positives.
pub const POSITIVE_DISTANCE_M: f64 = 1.0;

pub fn label_pair(d_ij: f64) -> Result<u8> {
    if d_ij.is_nan() || d_ij < 0.0 {
        return Err(NavError::InvalidInput(format!("pair distance must be non-negative, got {d_ij}")));
    }
    Ok((d_ij <= POSITIVE_DISTANCE_M) as u8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationPair {
    pub o_i: Panorama,
    pub o_j: Panorama,
    pub d_ij: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub panoramas: Vec<Panorama>,
    pub poses: Vec<Pose>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    fn pair(&self, i: usize, j: usize) -> Result<ObservationPair> {
        let d = self.poses[i].distance(&self.poses[j]);
        Ok(ObservationPair { o_i: self.panoramas[i].clone(), o_j: self.panoramas[j].clone(), d_ij: d, label: label_pair(d)? })
    }
}

/// Attempts per missing minority pair before giving up.
const RESAMPLE_ATTEMPTS: usize = 200;
/// Index offsets tried when looking for positives.
const NEAR_OFFSET: usize = 4;

/// `n` pairs drawn uniformly over (trajectory, i, j) triples. When a class
/// falls below `n/4`, pairs of the other class are replaced, in order, by
/// pairs drawn with small (positives) or large (negatives) index offsets.
/// Too few negatives is tolerated; too few positives is an error.
pub fn sample_pairs<R: Rng>(trajectories: &[Trajectory], n: usize, rng: &mut R) -> Result<Vec<ObservationPair>> {
    let weights: Vec<f64> = trajectories.iter().map(|t| (t.len() * t.len()) as f64).collect();
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return Err(NavError::DatasetDegenerate("no trajectory steps to pair".into()));
    }
    for t in trajectories {
        if t.panoramas.len() != t.poses.len() {
            return Err(NavError::InvalidInput("trajectory panoramas and poses differ in length".into()));
        }
    }
    let pick_traj = |rng: &mut R| {
        let mut u = rng.random_range(0.0..total);
        for (k, w) in weights.iter().enumerate() {
            if u < *w {
                return k;
            }
            u -= w;
        }
        weights.iter().rposition(|w| *w > 0.0).expect("some trajectory has steps")
    };
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let t = &trajectories[pick_traj(rng)];
        let (i, j) = (rng.random_range(0..t.len()), rng.random_range(0..t.len()));
        pairs.push(t.pair(i, j)?);
    }
    let quota = n.div_ceil(4);
    let positives = pairs.iter().filter(|p| p.label == 1).count();
    if positives < quota {
        let mut need = quota - positives;
        let slots: Vec<usize> = (0..n).filter(|&k| pairs[k].label == 0).collect();
        for k in slots {
            if need == 0 {
                break;
            }
            let mut found = None;
            for _ in 0..RESAMPLE_ATTEMPTS {
                let t = &trajectories[pick_traj(rng)];
                let i = rng.random_range(0..t.len());
                let j = (i + rng.random_range(0..=NEAR_OFFSET)).min(t.len() - 1);
                let p = t.pair(i, j)?;
                if p.label == 1 {
                    found = Some(p);
                    break;
                }
            }
            match found {
                Some(p) => {
                    pairs[k] = p;
                    need -= 1;
                }
                None => return Err(NavError::DatasetDegenerate(format!("could not find {need} more positive pairs"))),
            }
        }
    }
    let negatives = pairs.iter().filter(|p| p.label == 0).count();
    if negatives < quota {
        let mut need = quota - negatives;
        let slots: Vec<usize> = (0..n).filter(|&k| pairs[k].label == 1).collect();
        for k in slots {
            if need == 0 {
                break;
            }
            for _ in 0..RESAMPLE_ATTEMPTS {
                let t = &trajectories[pick_traj(rng)];
                if t.len() <= NEAR_OFFSET + 1 {
                    continue;
                }
                let i = rng.random_range(0..t.len());
                let j = rng.random_range(0..t.len());
                if i.abs_diff(j) <= NEAR_OFFSET {
                    continue;
                }
                let p = t.pair(i, j)?;
                if p.label == 0 {
                    pairs[k] = p;
                    need -= 1;
                    break;
                }
            }
        }
    }
    Ok(pairs)
}

/// Replaces `fraction` of the negatives, in order, with negatives drawn at
/// index offsets in `(NEAR_OFFSET, window]` along one trajectory. Uniform
/// pairs are mostly far apart; these sit just past the label boundary,
/// where a stop decision is actually made. Returns how many were replaced.
pub fn mine_near_negatives<R: Rng>(
    pairs: &mut [ObservationPair],
    trajectories: &[Trajectory],
    fraction: f64,
    window: usize,
    rng: &mut R,
) -> Result<usize> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(NavError::InvalidInput(format!("near-negative fraction must be in [0, 1], got {fraction}")));
    }
    if window <= NEAR_OFFSET {
        return Err(NavError::InvalidInput(format!("near-negative window must exceed {NEAR_OFFSET}")));
    }
    let slots: Vec<usize> = (0..pairs.len()).filter(|&k| pairs[k].label == 0).collect();
    let want = (slots.len() as f64 * fraction).round() as usize;
    let usable: Vec<&Trajectory> = trajectories.iter().filter(|t| t.len() > NEAR_OFFSET + 1).collect();
    let mut done = 0;
    if usable.is_empty() {
        return Ok(0);
    }
    for &k in slots.iter().take(want) {
        for _ in 0..RESAMPLE_ATTEMPTS {
            let t = usable[rng.random_range(0..usable.len())];
            let i = rng.random_range(0..t.len());
            let j = (i + rng.random_range(NEAR_OFFSET + 1..=window)).min(t.len() - 1);
            let p = t.pair(i, j)?;
            if p.label == 0 {
                pairs[k] = p;
                done += 1;
                break;
            }
        }
    }
    Ok(done)
}

/// The full pair dataset for one config: uniform balanced draw, then
/// near-negative mining.
pub fn build_pair_dataset<R: Rng>(trajectories: &[Trajectory], cfg: &NepmTrainConfig, rng: &mut R) -> Result<Vec<ObservationPair>> {
    let mut pairs = sample_pairs(trajectories, cfg.pairs, rng)?;
    mine_near_negatives(&mut pairs, trajectories, cfg.near_negative_fraction, cfg.near_window, rng)?;
    Ok(pairs)
}

pub fn write_pairs_jsonl(pairs: &[ObservationPair], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for p in pairs {
        serde_json::to_writer(&mut f, p).map_err(|e| NavError::Parse(e.to_string()))?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_pairs_jsonl(path: &Path) -> Result<Vec<ObservationPair>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| NavError::Parse(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NepmArch {
    pub pano_len: usize,
    pub hidden: usize,
    pub fused: usize,
}

impl Default for NepmArch {
    fn default() -> Self {
        NepmArch { pano_len: 144, hidden: 64, fused: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NepmNet {
    pub arch: NepmArch,
    pub pair: PairEncoder,
    out: Dense,
    n_params: usize,
}

impl NepmNet {
    pub fn new(arch: NepmArch) -> Self {
        let mut l = Layout::new();
        let pair = PairEncoder::new(&mut l, arch.pano_len, arch.hidden, arch.fused);
        let out = Dense::new(&mut l, arch.fused, 1);
        NepmNet { arch, pair, out, n_params: l.len() }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = vec![0.0; self.n_params];
        self.pair.init(&mut theta, &mut rng);
        self.out.init(&mut theta, 0.1, &mut rng);
        theta
    }

    /// Logit for the pair (current, goal).
    pub fn logit(&self, theta: &[f64], current: &[f64], goal: &[f64]) -> Result<(f64, PairCache)> {
        if current.len() != self.arch.pano_len || goal.len() != self.arch.pano_len {
            return Err(NavError::InvalidInput(format!("panorama features must have length {}", self.arch.pano_len)));
        }
        let cache = self.pair.forward(theta, current, goal);
        let z = self.out.forward(theta, &cache.fused)[0];
        check_finite(&[z], "ending logit")?;
        Ok((z, cache))
    }

    pub fn backward(&self, theta: &[f64], cache: &PairCache, dz: f64, grad: &mut [f64]) {
        let d_fused = self.out.backward(theta, &cache.fused, &[dz], grad);
        self.pair.backward(theta, cache, &d_fused, grad);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NepmParams {
    pub arch: NepmArch,
    pub theta: Vec<f64>,
    /// Range normalization used to turn panoramas into features.
    pub max_range_m: f64,
}

impl NepmParams {
    pub fn new(arch: NepmArch, max_range_m: f64, seed: u64) -> Self {
        NepmParams { arch, theta: NepmNet::new(arch).init(seed), max_range_m }
    }

    pub fn zeros(arch: NepmArch, max_range_m: f64) -> Self {
        NepmParams { arch, theta: vec![0.0; NepmNet::new(arch).n_params()], max_range_m }
    }

    pub fn net(&self) -> NepmNet {
        NepmNet::new(self.arch)
    }
}

/// Probability that `o_i` (current) was taken within 1 m of `o_j` (goal).
pub fn nepm_forward(o_i: &Panorama, o_j: &Panorama, params: &NepmParams) -> Result<f64> {
    if o_i.len() != o_j.len() {
        return Err(NavError::InvalidInput("panoramas differ in length".into()));
    }
    let net = params.net();
    let (z, _) = net.logit(&params.theta, &o_i.features(params.max_range_m), &o_j.features(params.max_range_m))?;
    Ok(sigmoid(z))
}

pub fn should_stop(current: &Panorama, goal: &Panorama, params: &NepmParams, threshold: f64) -> Result<bool> {
    Ok(nepm_forward(current, goal, params)? >= threshold)
}

/// Numerically stable binary cross-entropy on a logit.
pub fn bce_with_logit(z: f64, label: f64) -> f64 {
    z.max(0.0) - z * label + (-z.abs()).exp().ln_1p()
}

/// Mean BCE over `(current, goal, label)` triples and its gradient.
pub fn bce_loss_and_grad(net: &NepmNet, theta: &[f64], batch: &[(&[f64], &[f64], f64)], grad: &mut [f64]) -> Result<f64> {
    let n = batch.len() as f64;
    let mut loss = 0.0;
    for (a, b, y) in batch {
        let (z, cache) = net.logit(theta, a, b)?;
        loss += bce_with_logit(z, *y) / n;
        net.backward(theta, &cache, (sigmoid(z) - y) / n, grad);
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NepmTrainConfig {
    pub arch: NepmArch,
    pub batch_size: usize,
    pub iterations: usize,
    pub lr: f64,
    pub adam_eps: f64,
    pub holdout_fraction: f64,
    pub threshold: f64,
    /// Rollouts and pairs used by `train-ending`.
    pub trajectories: usize,
    pub trajectory_steps: usize,
    pub pairs: usize,
    /// Share of negatives redrawn near the label boundary, and the largest
    /// step offset used for them.
    pub near_negative_fraction: f64,
    pub near_window: usize,
}

impl Default for NepmTrainConfig {
    fn default() -> Self {
        NepmTrainConfig {
            arch: NepmArch::default(),
            batch_size: 128,
            iterations: 8000,
            lr: 1e-3,
            adam_eps: 1e-5,
            holdout_fraction: 0.2,
            threshold: 0.5,
            trajectories: 72,
            trajectory_steps: 300,
            pairs: 40_000,
            near_negative_fraction: 0.75,
            near_window: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NepmReport {
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub first_loss: f64,
    pub final_loss: f64,
    /// Mean |f(a,b) − f(b,a)| over the held-out pairs.
    pub asymmetry: f64,
}

struct Featurized {
    a: Vec<f64>,
    b: Vec<f64>,
    y: f64,
}

/// Balanced minibatch BCE training with Adam; the held-out split is
/// balanced by truncating the larger class.
pub fn train_nepm<R: Rng>(
    pairs: &[ObservationPair],
    params: &mut NepmParams,
    cfg: &NepmTrainConfig,
    rng: &mut R,
) -> Result<NepmReport> {
    let net = params.net();
    let feat = |p: &ObservationPair| Featurized {
        a: p.o_i.features(params.max_range_m),
        b: p.o_j.features(params.max_range_m),
        y: p.label as f64,
    };
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(rng);
    let n_test = ((pairs.len() as f64) * cfg.holdout_fraction).round() as usize;
    let (test_idx, train_idx) = order.split_at(n_test.min(pairs.len()));
    let pos: Vec<Featurized> = train_idx.iter().filter(|&&i| pairs[i].label == 1).map(|&i| feat(&pairs[i])).collect();
    let neg: Vec<Featurized> = train_idx.iter().filter(|&&i| pairs[i].label == 0).map(|&i| feat(&pairs[i])).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(NavError::DatasetDegenerate(format!(
            "training split has {} positives and {} negatives",
            pos.len(),
            neg.len()
        )));
    }
    let half = (cfg.batch_size / 2).max(1);
    let mut opt = Adam::new(net.n_params(), cfg.lr, cfg.adam_eps);
    let mut first_loss = f64::NAN;
    let mut final_loss = f64::NAN;
    for it in 0..cfg.iterations {
        let mut batch: Vec<(&[f64], &[f64], f64)> = Vec::with_capacity(2 * half);
        for _ in 0..half {
            let p = &pos[rng.random_range(0..pos.len())];
            batch.push((&p.a, &p.b, p.y));
        }
        for _ in 0..half {
            let p = &neg[rng.random_range(0..neg.len())];
            batch.push((&p.a, &p.b, p.y));
        }
        let mut grad = vec![0.0; net.n_params()];
        let loss = bce_loss_and_grad(&net, &params.theta, &batch, &mut grad)?;
        if !loss.is_finite() {
            return Err(NavError::Numerical("non-finite ending loss".into()));
        }
        if it == 0 {
            first_loss = loss;
        }
        final_loss = loss;
        opt.step(&mut params.theta, &grad);
    }

    let test_pos: Vec<usize> = test_idx.iter().copied().filter(|&i| pairs[i].label == 1).collect();
    let test_neg: Vec<usize> = test_idx.iter().copied().filter(|&i| pairs[i].label == 0).collect();
    let m = test_pos.len().min(test_neg.len());
    let test: Vec<usize> = test_pos[..m].iter().chain(&test_neg[..m]).copied().collect();
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    let mut asym = 0.0;
    for &i in &test {
        let p = &pairs[i];
        let prob = nepm_forward(&p.o_i, &p.o_j, params)?;
        let swapped = nepm_forward(&p.o_j, &p.o_i, params)?;
        asym += (prob - swapped).abs();
        match (prob >= cfg.threshold, p.label == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let n = test.len().max(1) as f64;
    Ok(NepmReport {
        n_train: train_idx.len(),
        n_test: test.len(),
        accuracy: (tp + tn) as f64 / n,
        precision: if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 },
        recall: if tp + fneg > 0 { tp as f64 / (tp + fneg) as f64 } else { 0.0 },
        first_loss,
        final_loss,
        asymmetry: asym / n,
    })
}

/// Planner rollouts toward uniformly drawn free cells on `worlds`, logging
/// the panorama and pose at every step.
pub fn collect_trajectories(
    worlds: &[World],
    sim: &SimConfig,
    n: usize,
    steps: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<Trajectory>> {
    map_range(n, workers, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64));
        let world = &worlds[k % worlds.len()];
        let comp = world.free_component();
        let start = comp[rng.random_range(0..comp.len())];
        let (x, y) = jittered_point(start, world.cell_size(), &mut rng);
        let mut pose = Pose::new(x, y, rng.random_range(0..4) as f64 * std::f64::consts::FRAC_PI_2);
        let mut map = OccupancyMap::for_world(world);
        let mut planner = Planner::new(sim.planner, sim.motion);
        let mut traj = Trajectory::default();
        let mut goal = comp[rng.random_range(0..comp.len())];
        for t in 0..steps {
            let pano = render_panorama(world, &pose, &sim.panorama);
            map.integrate_scan(&pose, &pano, &sim.panorama)?;
            traj.panoramas.push(pano);
            traj.poses.push(pose);
            if t % sim.k_steps == 0 || map.cell_of(&pose) == Some(goal) {
                goal = comp[rng.random_range(0..comp.len())];
            }
            let a = planner.next(&map, &pose, goal)?;
            debug_assert_ne!(a, Action::Stop);
            pose = step(world, &pose, a, &sim.motion)?.0;
        }
        Ok(traj)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_difference_error;

    fn pano(v: f64) -> Panorama {
        Panorama { ranges: vec![v; 4], landmark_hits: vec![[0.0; 3]; 4] }
    }

    #[test]
    fn labels() {
        assert_eq!(label_pair(0.5).unwrap(), 1);
        assert_eq!(label_pair(1.0).unwrap(), 1);
        assert_eq!(label_pair(3.2).unwrap(), 0);
        assert!(label_pair(-0.1).is_err());
    }

    #[test]
    fn repeated_pose_gives_all_positive_pairs() {
        let t = Trajectory { panoramas: vec![pano(1.0); 10], poses: vec![Pose::new(1.0, 1.0, 0.0); 10] };
        let pairs = sample_pairs(&[t], 50, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(pairs.iter().all(|p| p.label == 1));
    }

    #[test]
    fn far_poses_only_give_negative_cross_pairs_and_fail_balance() {
        let t = Trajectory { panoramas: vec![pano(1.0), pano(2.0)], poses: vec![Pose::new(1.0, 1.0, 0.0), Pose::new(6.0, 1.0, 0.0)] };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = t.pair(0, 1).unwrap();
        assert_eq!((p.d_ij, p.label), (5.0, 0));
        // Positives exist (i == j) so balancing succeeds.
        let pairs = sample_pairs(std::slice::from_ref(&t), 40, &mut rng).unwrap();
        assert!(pairs.iter().filter(|p| p.label == 1).count() >= 10);
    }

    #[test]
    fn near_negatives_replace_only_negatives() {
        let poses: Vec<Pose> = (0..40).map(|i| Pose::new(1.0 + 0.25 * i as f64, 1.0, 0.0)).collect();
        let t = Trajectory { panoramas: (0..40).map(|i| pano(i as f64)).collect(), poses };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut pairs = sample_pairs(std::slice::from_ref(&t), 200, &mut rng).unwrap();
        let labels: Vec<u8> = pairs.iter().map(|p| p.label).collect();
        let n_neg = labels.iter().filter(|&&l| l == 0).count();
        let done = mine_near_negatives(&mut pairs, std::slice::from_ref(&t), 0.5, 12, &mut rng).unwrap();
        assert_eq!(done, (n_neg as f64 * 0.5).round() as usize);
        assert_eq!(pairs.iter().map(|p| p.label).collect::<Vec<_>>(), labels);
        // Offsets 5..=12 on a straight 0.25 m line give 1.25..=3.0 m.
        let near = pairs.iter().filter(|p| p.label == 0 && p.d_ij <= 3.0 + 1e-9).count();
        assert!(near >= done);
        assert!(mine_near_negatives(&mut pairs, &[t], 1.5, 12, &mut rng).is_err());
    }

    #[test]
    fn zero_network_is_one_half_and_ln2() {
        let params = NepmParams::zeros(NepmArch { pano_len: 16, hidden: 4, fused: 3 }, 5.0);
        assert_eq!(nepm_forward(&pano(1.0), &pano(2.0), &params).unwrap(), 0.5);
        let net = params.net();
        let a = [0.3; 16];
        let batch: Vec<(&[f64], &[f64], f64)> = (0..128).map(|i| (&a[..], &a[..], (i % 2) as f64)).collect();
        let mut g = vec![0.0; net.n_params()];
        let loss = bce_loss_and_grad(&net, &params.theta, &batch, &mut g).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let arch = NepmArch { pano_len: 6, hidden: 4, fused: 3 };
        let net = NepmNet::new(arch);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut theta = net.init(3);
        for t in &mut theta {
            *t += rng.random_range(-0.2..0.2);
        }
        let data: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..6)
            .map(|i| {
                let a: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
                let b: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
                (a, b, (i % 2) as f64)
            })
            .collect();
        let batch: Vec<(&[f64], &[f64], f64)> = data.iter().map(|(a, b, y)| (&a[..], &b[..], *y)).collect();
        let mut grad = vec![0.0; net.n_params()];
        bce_loss_and_grad(&net, &theta, &batch, &mut grad).unwrap();
        let idx: Vec<usize> = (0..net.n_params()).collect();
        let err = finite_difference_error(&theta, &grad, &idx, 1e-5, |p| {
            let mut g = vec![0.0; p.len()];
            bce_loss_and_grad(&net, p, &batch, &mut g).unwrap()
        });
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn threshold_semantics() {
        let params = NepmParams::zeros(NepmArch { pano_len: 16, hidden: 4, fused: 3 }, 5.0);
        assert!(should_stop(&pano(1.0), &pano(1.0), &params, 0.5).unwrap());
        assert!(!should_stop(&pano(1.0), &pano(1.0), &params, 1.0 + 1e-9).unwrap());
    }
}
