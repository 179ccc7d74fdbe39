//! Property tests for invariants that hold across random inputs.

use goalnav::checkpoint::Checkpoint;
use goalnav::ending::label_pair;
use goalnav::fmm::{eikonal_update, solve_eikonal, source_seeds};
use goalnav::goal_policy::ppo::{compute_returns_and_advantages, RolloutBuffer, Transition};
use goalnav::goal_policy::reward::{explore_reward, RewardBreakdown};
use goalnav::goal_policy::{sample_goal, PolicyArch, PolicyInput, PolicyParams};
use goalnav::grid::{Cell, Grid};
use goalnav::gridworld::{Action, Difficulty, NavTask, Panorama, Pose, World, WorldGenConfig};
use goalnav::harness::{compute_metrics, EpisodeRecord};
use goalnav::mapping::OccupancyMap;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid_strategy(n: usize) -> impl Strategy<Value = Grid<bool>> {
    prop::collection::vec(prop::bool::weighted(0.25), n * n).prop_map(move |v| Grid::from_vec(n, n, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Every accepted cell outside the exactly seeded source patch satisfies
    /// the upwind update from the neighbors accepted before it.
    #[test]
    fn fmm_field_is_self_consistent(mut g in grid_strategy(14), sr in 0usize..14, sc in 0usize..14) {
        let source = Cell::new(sr, sc);
        g.set(source, false);
        let h = 0.1;
        let field = solve_eikonal(&g, source, h).unwrap();
        let seeds: Vec<Cell> = source_seeds(&g, source, h).into_iter().map(|s| s.0).collect();
        for c in g.cells() {
            let v = field.value_at(c);
            if *g.get(c) {
                prop_assert!(v.is_infinite());
                continue;
            }
            if !v.is_finite() || c == source || seeds.contains(&c) {
                continue;
            }
            let before = |n: Option<Cell>| n.map(|n| field.value_at(n)).filter(|&x| x < v).unwrap_or(f64::INFINITY);
            let (r, col) = (c.row as isize, c.col as isize);
            let a = before(g.cell_at(r - 1, col)).min(before(g.cell_at(r + 1, col)));
            let b = before(g.cell_at(r, col - 1)).min(before(g.cell_at(r, col + 1)));
            let expect = eikonal_update(a.min(b), a.max(b), h);
            prop_assert!((v - expect).abs() <= 1e-9 * expect.max(1.0), "cell {:?}: {} vs {}", c, v, expect);
        }
    }

    #[test]
    fn fmm_never_undercuts_the_straight_line(sr in 0usize..20, sc in 0usize..20) {
        let g = Grid::filled(20, 20, false);
        let source = Cell::new(sr, sc);
        let field = solve_eikonal(&g, source, 0.1).unwrap();
        for c in g.cells() {
            prop_assert!(field.value_at(c) >= c.metric_distance(source, 0.1) - 1e-12);
        }
    }

    #[test]
    fn label_rule_is_total(d in 0.0f64..10.0) {
        prop_assert_eq!(label_pair(d).unwrap(), (d <= 1.0) as u8);
    }

    #[test]
    fn spl_never_exceeds_sr(eps in prop::collection::vec((any::<bool>(), 0.1f64..10.0, 0.0f64..20.0, 0usize..3), 1..40)) {
        let recs: Vec<EpisodeRecord> = eps.iter().map(|&(s, l, p, c)| record(s, l, p, c)).collect();
        let m = compute_metrics(&recs).unwrap();
        prop_assert!(m.spl <= m.sr);
        prop_assert!((0.0..=1.0).contains(&m.cr));
        let collided = eps.iter().filter(|e| e.3 > 0).count() as f64 / eps.len() as f64;
        prop_assert_eq!(m.cr, collided);
    }

    #[test]
    fn reward_total_is_the_term_sum(g in prop::sample::select(vec![0.0, 20.0]), c in prop::sample::select(vec![0.0, -5.0]), e in -50.0f64..50.0) {
        prop_assert_eq!(RewardBreakdown::new(g, c, e).total, g + c + e);
    }

    /// Explore-reward sign follows whether the goal cell was already seen.
    #[test]
    fn explore_sign_property(
        first in prop::collection::vec(any::<bool>(), 64),
        extra in prop::collection::vec(any::<bool>(), 64),
        goal in 0usize..64,
    ) {
        let obstacle = Grid::filled(8, 8, false);
        let e1 = Grid::from_vec(8, 8, first.clone());
        let e2 = Grid::from_vec(8, 8, first.iter().zip(&extra).map(|(a, b)| *a || *b).collect());
        let m1 = OccupancyMap::from_parts(obstacle.clone(), e1.clone(), 0.1, None).unwrap();
        let m2 = OccupancyMap::from_parts(obstacle, e2, 0.1, None).unwrap();
        let gc = e1.cell_of_index(goal);
        let r = explore_reward(&m1, &m2, gc, false).unwrap();
        if *e1.get(gc) {
            prop_assert!(r <= 0.0);
        } else {
            prop_assert!(r >= 0.0);
        }
        prop_assert_eq!(explore_reward(&m1, &m2, gc, true).unwrap(), 0.0);
    }

    /// With λ = 1 and zero values, returns equal a brute-force discounted sum.
    #[test]
    fn returns_match_brute_force(
        rewards in prop::collection::vec(-10.0f64..10.0, 12),
        dones in prop::collection::vec(prop::bool::weighted(0.2), 12),
        boot in prop::collection::vec(-5.0f64..5.0, 2),
        gamma in 0.0f64..1.0,
    ) {
        let (n_envs, horizon) = (2, 6);
        let ts: Vec<Transition> = (0..12).map(|i| Transition {
            input: PolicyInput { current: vec![], goal: vec![], map: vec![] },
            raw: [0.5, 0.5], log_prob: 0.0, value: 0.0, reward: rewards[i], done: dones[i],
        }).collect();
        let mut buf = RolloutBuffer::new(n_envs, horizon, ts, boot.clone()).unwrap();
        let raw = compute_returns_and_advantages(&mut buf, gamma, 1.0);
        for e in 0..n_envs {
            for t in 0..horizon {
                let mut expect = 0.0;
                let mut discount = 1.0;
                let mut ended = false;
                for k in t..horizon {
                    let i = e * horizon + k;
                    expect += discount * rewards[i];
                    discount *= gamma;
                    if dones[i] { ended = true; break; }
                }
                if !ended { expect += discount * boot[e]; }
                let i = e * horizon + t;
                prop_assert!((buf.returns[i] - expect).abs() < 1e-9);
                prop_assert!((raw[i] - expect).abs() < 1e-9);
            }
        }
        let mean = buf.advantages.iter().sum::<f64>() / 12.0;
        prop_assert!(mean.abs() < 1e-9);
    }

    #[test]
    fn sampled_goals_stay_in_the_unit_square(mx in -0.5f64..1.5, my in -0.5f64..1.5, lv in -5.0f64..1.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = sample_goal([mx, my], [lv.exp(), lv.exp()], &mut rng).unwrap();
        prop_assert!((0.0..=1.0).contains(&s.goal.gx) && (0.0..=1.0).contains(&s.goal.gy));
        prop_assert!(s.log_prob.is_finite());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(vals in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 0..50)) {
        let arch = PolicyArch { pano_len: 2, hidden: 2, fused: 2, map_grid: 4, conv1: 1, conv2: 1, map_embed: 2, trunk: 2 };
        let mut p = PolicyParams::zeros(arch);
        for (t, v) in p.theta.iter_mut().zip(&vals) {
            *t = *v;
        }
        let back: PolicyParams = Checkpoint::from_text(&Checkpoint::from(&p).to_text()).unwrap().try_into().unwrap();
        let same = back.theta.iter().zip(&p.theta).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn generated_worlds_round_trip_through_ascii(seed in 0u64..1000) {
        let w = World::generate(&WorldGenConfig::default(), seed).unwrap();
        let back: World = w.to_ascii().parse().unwrap();
        prop_assert_eq!(back, w);
    }
}

fn record(success: bool, shortest: f64, path: f64, collisions: usize) -> EpisodeRecord {
    let p = Pose::new(1.0, 1.0, 0.0);
    let pano = Panorama { ranges: vec![], landmark_hits: vec![] };
    EpisodeRecord {
        task: NavTask { start_pose: p, goal_pose: p, goal_panorama: pano, difficulty: Difficulty::Easy, shortest_path_m: shortest },
        poses: vec![p],
        actions: vec![Action::Stop],
        collisions,
        stopped: true,
        steps: 1,
        success,
        path_length_m: path,
        long_term_goals: vec![],
    }
}
