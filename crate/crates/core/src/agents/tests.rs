use proptest::prelude::*;

use super::*;
use crate::disentangle::{binarize_continuous_codes, score_disentanglement};
use crate::env::{build_trap_tube_task, Mdp, Pomdp};
use crate::planning::{policy_evaluation, value_iteration_oracle};
use crate::replay::{SourceTag, Trajectory, Transition};
use crate::rng;
use crate::space::ProductSpace;

fn flat(n: usize) -> ProductSpace {
    ProductSpace::flat(n).unwrap()
}

/// Deterministic two-state MDP starting in state 0: action 0 stays, action 1
/// switches. With horizon 3 it has exactly 8 trajectories.
fn switch_mdp() -> Mdp {
    #[rustfmt::skip]
    let transition = vec![
        1.0, 0.0,   0.0, 1.0,
        0.0, 1.0,   1.0, 0.0,
    ];
    Mdp::new(flat(2), 2, transition, vec![0.0, 1.0, 2.0, 0.0], 0.9, vec![1.0, 0.0]).unwrap()
}

/// Stochastic two-state MDP with a mixed start.
fn noisy_mdp() -> Mdp {
    #[rustfmt::skip]
    let transition = vec![
        0.8, 0.2,   0.3, 0.7,
        0.6, 0.4,   0.1, 0.9,
    ];
    Mdp::new(flat(2), 2, transition, vec![1.0, 0.0, 0.0, 2.0], 0.9, vec![0.7, 0.3]).unwrap()
}

/// Every trajectory of length ≤ `horizon` with its probability under `policy`.
fn enumerate(mdp: &Mdp, policy: &SoftmaxPolicy, horizon: usize) -> Vec<(f64, Vec<Transition>)> {
    fn walk(
        mdp: &Mdp,
        policy: &SoftmaxPolicy,
        left: usize,
        s: usize,
        p: f64,
        prefix: &mut Vec<Transition>,
        out: &mut Vec<(f64, Vec<Transition>)>,
    ) {
        if left == 0 || mdp.is_terminal(s) {
            out.push((p, prefix.clone()));
            return;
        }
        for a in 0..mdp.n_actions() {
            let pa = policy.prob(s, a);
            for (next, &pt) in mdp.transition_row(s, a).iter().enumerate() {
                if pt == 0.0 {
                    continue;
                }
                prefix.push(Transition::acted(s, a, mdp.reward(s, a), next, Some(pa)));
                walk(mdp, policy, left - 1, next, p * pa * pt, prefix, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    for (s, &p0) in mdp.initial().iter().enumerate() {
        if p0 > 0.0 {
            walk(mdp, policy, horizon, s, p0, &mut Vec::new(), &mut out);
        }
    }
    out
}

fn ret(mdp: &Mdp, steps: &[Transition]) -> f64 {
    steps.iter().rev().fold(0.0, |acc, t| t.reward.unwrap() + mdp.discount() * acc)
}

fn exact_j(mdp: &Mdp, policy: &SoftmaxPolicy, horizon: usize) -> f64 {
    enumerate(mdp, policy, horizon).iter().map(|(p, steps)| p * ret(mdp, steps)).sum()
}

/// `Σ_τ P(τ) G_0(τ) Σ_t ∇ log π(a_t|s_t)` with the score written out by hand.
fn exact_gradient(mdp: &Mdp, policy: &SoftmaxPolicy, horizon: usize) -> Vec<f64> {
    let na = policy.n_actions();
    let mut g = vec![0.0; policy.logits().len()];
    for (p, steps) in enumerate(mdp, policy, horizon) {
        let big_g = ret(mdp, &steps);
        for t in &steps {
            let (s, a) = (t.state, t.action.unwrap());
            let probs = policy.probabilities(s);
            for b in 0..na {
                let indicator = if b == a { 1.0 } else { 0.0 };
                g[s * na + b] += p * big_g * (indicator - probs[b]);
            }
        }
    }
    g
}

fn trajectory(steps: Vec<Transition>) -> Trajectory {
    Trajectory::new(steps, SourceTag::Egocentric, "test").unwrap()
}

fn close_rel(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs()
}

/// Relative error with a magnitude floor so components that are zero up to
/// rounding do not blow up the ratio.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

// ---- softmax and returns ----

proptest! {
    #[test]
    fn softmax_rows_normalize(logits in prop::collection::vec(-50.0f64..50.0, 12)) {
        let p = SoftmaxPolicy::from_logits(4, 3, logits).unwrap();
        for s in 0..4 {
            let probs = p.probabilities(s);
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(probs.iter().all(|&x| x > 0.0 || x == 0.0 && probs.iter().any(|&y| y > 0.99)));
        }
    }

    #[test]
    fn baseline_shift_leaves_expected_gradient(
        logits in prop::collection::vec(-2.0f64..2.0, 4),
        base in prop::collection::vec(-3.0f64..3.0, 2),
        shift in -10.0f64..10.0,
    ) {
        let mdp = switch_mdp();
        let policy = SoftmaxPolicy::from_logits(2, 2, logits).unwrap();
        let expected = |b: &ValueTable| -> Vec<f64> {
            let mut g = vec![0.0; 4];
            for (p, steps) in enumerate(&mdp, &policy, 3) {
                let pg = policy_gradient(&[trajectory(steps)], &policy, b, mdp.discount()).unwrap();
                for (gi, x) in g.iter_mut().zip(pg.as_slice()) {
                    *gi += p * x;
                }
            }
            g
        };
        let a = expected(&ValueTable::from_values(base.clone()));
        let b = expected(&ValueTable::from_values(base.iter().map(|v| v + shift).collect()));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn enumerated_gradient_is_exact(logits in prop::collection::vec(-2.0f64..2.0, 4)) {
        let mdp = switch_mdp();
        let policy = SoftmaxPolicy::from_logits(2, 2, logits).unwrap();
        let paths = enumerate(&mdp, &policy, 3);
        prop_assert_eq!(paths.len(), 8);
        let mut mean = vec![0.0; 4];
        for (p, steps) in paths {
            let pg = policy_gradient(&[trajectory(steps)], &policy, &ValueTable::zeros(2), mdp.discount()).unwrap();
            for (m, x) in mean.iter_mut().zip(pg.as_slice()) {
                *m += p * x;
            }
        }
        let exact = exact_gradient(&mdp, &policy, 3);
        for (m, e) in mean.iter().zip(&exact) {
            prop_assert!((m - e).abs() < 1e-9, "{m} vs {e}");
        }
    }
}

#[test]
fn discounted_return_examples() {
    assert_eq!(discounted_return(&[1.0, 1.0, 1.0], 0.0, 0).unwrap(), 1.0);
    assert_eq!(discounted_return(&[0.0, 0.0, 1.0], 0.5, 0).unwrap(), 0.25);
    assert_eq!(discounted_return(&[3.0, 2.0, 7.0], 0.9, 2).unwrap(), 7.0);
    assert!(matches!(discounted_return(&[1.0], 0.9, 1), Err(AgentError::OutOfRange(_))));
}

#[test]
fn policy_rejects_bad_shapes() {
    assert!(SoftmaxPolicy::from_logits(2, 2, vec![0.0; 3]).is_err());
    assert!(SoftmaxPolicy::from_logits(1, 2, vec![0.0, f64::NAN]).is_err());
    let mut p = SoftmaxPolicy::uniform(2, 2);
    assert!(p.ascend(&GradientVector::zeros(3), 1.0).is_err());
}

#[test]
fn exact_gradient_oracle_agrees_with_finite_differences() {
    let mdp = noisy_mdp();
    let logits = vec![0.3, -0.2, -0.5, 0.4];
    let policy = SoftmaxPolicy::from_logits(2, 2, logits.clone()).unwrap();
    let exact = exact_gradient(&mdp, &policy, 2);
    let h = 1e-5;
    for i in 0..4 {
        let mut up = logits.clone();
        up[i] += h;
        let mut down = logits.clone();
        down[i] -= h;
        let fd = (exact_j(&mdp, &SoftmaxPolicy::from_logits(2, 2, up).unwrap(), 2)
            - exact_j(&mdp, &SoftmaxPolicy::from_logits(2, 2, down).unwrap(), 2))
            / (2.0 * h);
        assert!((fd - exact[i]).abs() < 1e-8, "{fd} vs {}", exact[i]);
    }
}

// ---- value estimation ----

#[test]
fn single_trajectory_values_are_tail_returns() {
    let steps = vec![
        Transition::acted(0, 1, 1.0, 1, None),
        Transition::acted(1, 0, 0.0, 2, None),
        Transition::acted(2, 1, 4.0, 3, None),
    ];
    let (v, q) = estimate_values(&[trajectory(steps)], 0.5, 4, 2).unwrap();
    assert_eq!(v.values, vec![2.0, 2.0, 4.0, 0.0]);
    assert_eq!(v.visited, vec![true, true, true, false]);
    assert_eq!(q.get(0, 1), 2.0);
    assert!(!q.visited[0]);
    assert_eq!(estimate_values(&[], 0.5, 4, 2), Err(AgentError::Empty));
}

#[test]
fn first_visit_ignores_revisits() {
    let steps = vec![Transition::acted(0, 0, 1.0, 0, None), Transition::acted(0, 0, 1.0, 0, None)];
    let (v, _) = estimate_values(&[trajectory(steps)], 1.0, 1, 1).unwrap();
    assert_eq!(v.values, vec![2.0]);
}

#[test]
fn monte_carlo_values_match_policy_evaluation() {
    // two-state chain with an absorbing end so episodes are finite
    #[rustfmt::skip]
    let transition = vec![
        0.5, 0.5, 0.0,   0.2, 0.8, 0.0,
        0.0, 0.6, 0.4,   0.3, 0.3, 0.4,
        0.0, 0.0, 1.0,   0.0, 0.0, 1.0,
    ];
    let reward = vec![1.0, 0.0, 0.5, 2.0, 0.0, 0.0];
    let mdp = Mdp::new(flat(3), 2, transition, reward, 0.9, vec![1.0, 0.0, 0.0])
        .unwrap()
        .with_terminal(vec![false, false, true])
        .unwrap();
    let policy = SoftmaxPolicy::from_logits(3, 2, vec![0.2, -0.3, 0.5, 0.0, 0.0, 0.0]).unwrap();
    let pi: Vec<f64> = (0..3).flat_map(|s| policy.probabilities(s)).collect();
    let exact = policy_evaluation(&mdp, &pi, 1e-12);
    let mut r = rng::seeded(5);
    let trajs: Vec<Trajectory> = (0..10_000).map(|_| rollout(&mdp, &policy, 500, &mut r).unwrap()).collect();
    let (v, q) = estimate_values(&trajs, 0.9, 3, 2).unwrap();
    for s in 0..2 {
        assert!((v.get(s) - exact[s]).abs() < 0.05, "V({s}) {} vs {}", v.get(s), exact[s]);
    }
    // Q − V against r + γ E V(s') − V(s)
    for s in 0..2 {
        let mut mean_adv = 0.0;
        for a in 0..2 {
            let next: f64 = mdp.transition_row(s, a).iter().zip(&exact).map(|(p, v)| p * v).sum();
            let adv = mdp.reward(s, a) + 0.9 * next - exact[s];
            let est = q.get(s, a) - v.get(s);
            assert!((est - adv).abs() < 0.1, "A({s},{a}) {est} vs {adv}");
            mean_adv += pi[s * 2 + a] * adv;
        }
        assert!(mean_adv.abs() < 1e-9);
    }
}

// ---- policy gradient ----

#[test]
fn exact_baseline_zeroes_gradient() {
    let mdp = switch_mdp();
    let steps = vec![Transition::acted(0, 1, 1.0, 1, Some(0.5)), Transition::acted(1, 0, 2.0, 1, Some(0.5))];
    let g1 = 2.0;
    let g0 = 1.0 + 0.9 * g1;
    let baseline = ValueTable::from_values(vec![g0, g1]);
    let g = policy_gradient(&[trajectory(steps)], &SoftmaxPolicy::uniform(2, 2), &baseline, mdp.discount()).unwrap();
    assert!(g.as_slice().iter().all(|&x| x == 0.0), "{g:?}");
}

#[test]
fn bandit_gradient_favours_rewarded_action() {
    let mdp = Mdp::new(flat(1), 2, vec![1.0, 1.0], vec![1.0, 0.0], 0.0, vec![1.0]).unwrap();
    let policy = SoftmaxPolicy::from_logits(1, 2, vec![-0.4, 0.7]).unwrap();
    let mut expected = [0.0; 2];
    for (p, steps) in enumerate(&mdp, &policy, 1) {
        let g = policy_gradient(&[trajectory(steps)], &policy, &ValueTable::zeros(1), 0.0).unwrap();
        expected[0] += p * g.0[0];
        expected[1] += p * g.0[1];
    }
    let p0 = policy.prob(0, 0);
    assert!(expected[0] > 0.0 && expected[1] < 0.0);
    assert!((expected[0] - p0 * (1.0 - p0)).abs() < 1e-12);
}

#[test]
fn sampled_gradient_matches_enumeration() {
    let mdp = noisy_mdp();
    let policy = SoftmaxPolicy::from_logits(2, 2, vec![0.3, -0.2, -0.5, 0.4]).unwrap();
    let exact = exact_gradient(&mdp, &policy, 2);
    let mut r = rng::seeded(17);
    let trajs: Vec<Trajectory> = (0..100_000).map(|_| rollout(&mdp, &policy, 2, &mut r).unwrap()).collect();
    let g = policy_gradient(&trajs, &policy, &ValueTable::zeros(2), mdp.discount()).unwrap();
    for (x, e) in g.as_slice().iter().zip(&exact) {
        assert!(close_rel(*x, *e, 0.02), "{x} vs {e}");
    }
}

#[test]
fn score_term_matches_finite_differences() {
    // surrogate L(θ) = Σ_t γ^t log π_θ(a_t|s_t) (G_t − V(s_t)), coefficients fixed
    let mut r = rng::seeded(23);
    for _ in 0..20 {
        let (ns, na) = (3, 3);
        let logits: Vec<f64> = (0..ns * na).map(|_| 2.0 * rng::standard_normal(&mut r)).collect();
        let policy = SoftmaxPolicy::from_logits(ns, na, logits.clone()).unwrap();
        let len = 1 + rng::below(&mut r, 5);
        let mut s = rng::below(&mut r, ns);
        let mut steps = Vec::new();
        for _ in 0..len {
            let next = rng::below(&mut r, ns);
            let a = rng::below(&mut r, na);
            steps.push(Transition::acted(s, a, rng::standard_normal(&mut r), next, None));
            s = next;
        }
        let baseline = ValueTable::from_values((0..ns).map(|_| rng::standard_normal(&mut r)).collect());
        let gamma = 0.8;
        let traj = trajectory(steps);
        let grad = policy_gradient(std::slice::from_ref(&traj), &policy, &baseline, gamma).unwrap();

        let rewards = traj.rewards().unwrap();
        let surrogate = |l: &[f64]| -> f64 {
            let p = SoftmaxPolicy::from_logits(ns, na, l.to_vec()).unwrap();
            traj.transitions()
                .iter()
                .enumerate()
                .map(|(t, tr)| {
                    let g = discounted_return(&rewards, gamma, t).unwrap();
                    gamma.powi(t as i32) * p.prob(tr.state, tr.action.unwrap()).ln() * (g - baseline.get(tr.state))
                })
                .sum()
        };
        let h = 1e-5;
        for i in 0..logits.len() {
            let mut up = logits.clone();
            up[i] += h;
            let mut down = logits.clone();
            down[i] -= h;
            let fd = (surrogate(&up) - surrogate(&down)) / (2.0 * h);
            assert!(rel_err(grad.0[i], fd) < 1e-4, "component {i}: {} vs {fd}", grad.0[i]);
        }
    }
}

#[test]
fn off_policy_with_current_behavior_equals_on_policy() {
    let mdp = noisy_mdp();
    let policy = SoftmaxPolicy::from_logits(2, 2, vec![0.3, -0.2, -0.5, 0.4]).unwrap();
    let mut r = rng::seeded(3);
    let trajs: Vec<Trajectory> = (0..50).map(|_| rollout(&mdp, &policy, 3, &mut r).unwrap()).collect();
    let base = ValueTable::from_values(vec![0.5, 1.0]);
    let on = policy_gradient(&trajs, &policy, &base, 0.9).unwrap();
    let off = off_policy_gradient(&trajs, &policy, &base, 0.9).unwrap();
    for (a, b) in on.as_slice().iter().zip(off.as_slice()) {
        assert!((a - b).abs() < 1e-12);
    }
}

// ---- training loop ----

#[test]
fn train_config_validation() {
    let env = Pomdp::fully_observed(build_trap_tube_task(5, true).unwrap());
    let bad = TrainConfig { batch_size: 0, ..TrainConfig::default() };
    assert!(matches!(train_actor_critic(&env, &Representation::Raw, &bad, 0), Err(AgentError::Config(_))));
    let bad = TrainConfig { step_size: -1.0, ..TrainConfig::default() };
    assert!(matches!(train_actor_critic(&env, &Representation::Raw, &bad, 0), Err(AgentError::Config(_))));
    let bad = TrainConfig { is_clip: Some(0.5), ..TrainConfig::default() };
    assert!(matches!(train_actor_critic(&env, &Representation::Raw, &bad, 0), Err(AgentError::Config(_))));
}

#[test]
fn training_is_seed_deterministic() {
    let env = Pomdp::fully_observed(build_trap_tube_task(5, true).unwrap());
    let config = TrainConfig { episodes: 300, ..TrainConfig::default() };
    let a = train_actor_critic(&env, &Representation::Raw, &config, 9).unwrap();
    let b = train_actor_critic(&env, &Representation::Raw, &config, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.curve.len(), 3);
    assert_eq!(a.source_counts, [300 * config.batch_size, 0, 0]);
}

#[test]
fn trap_tube_reaches_near_optimal_return() {
    let mdp = build_trap_tube_task(5, true).unwrap();
    let optimal = value_iteration_oracle(&mdp, 1e-12).initial_value(&mdp);
    let env = Pomdp::fully_observed(mdp);
    let config = TrainConfig::default();
    let hits = (0..5u64)
        .filter(|&seed| {
            let out = train_actor_critic(&env, &Representation::Raw, &config, seed).unwrap();
            out.final_return >= 0.95 * optimal
        })
        .count();
    assert!(hits >= 4, "{hits} of 5 seeds reached 0.95 of {optimal}");
}

#[test]
fn zero_discount_bandit_concentrates_on_best_arm() {
    let mdp = Mdp::new(flat(1), 3, vec![1.0; 3], vec![0.2, 1.0, 0.5], 0.0, vec![1.0]).unwrap();
    let env = Pomdp::fully_observed(mdp);
    let config = TrainConfig { episodes: 2000, horizon: 1, ..TrainConfig::default() };
    let out = train_actor_critic(&env, &Representation::Raw, &config, 4).unwrap();
    assert!(out.policy.prob(0, 1) >= 0.9, "{:?}", out.policy.probabilities(0));
}

// ---- VAE ----

#[test]
fn kl_examples() {
    let zero = GaussianVae::new(3, 2, 1.0).unwrap();
    let (_, kl) = elbo_terms(&zero, &[1.0, -2.0, 0.5], 4, 0).unwrap();
    assert_eq!(kl, 0.0);

    // 1-D: μ = 1 through the encoder bias, log σ² = 0
    let mut vae = GaussianVae::new(1, 1, 1.0).unwrap();
    // order: Wμ, bμ, Wv, bv, Wd, bd
    vae.set_params(&[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let (ll, kl) = elbo_terms(&vae, &[0.3], 8, 1).unwrap();
    assert!((kl - 0.5).abs() < 1e-15);
    assert_eq!(elbo(&vae, &[0.3], 8, 1).unwrap(), ll - kl);

    let beta4 = vae.clone().with_beta(4.0).unwrap();
    assert_eq!(elbo(&beta4, &[0.3], 8, 1).unwrap(), ll - 4.0 * kl);
}

#[test]
fn vae_rejects_bad_shapes() {
    assert!(GaussianVae::new(3, 0, 1.0).is_err());
    assert!(GaussianVae::new(3, 2, 0.5).is_err());
    let vae = GaussianVae::new(3, 2, 1.0).unwrap();
    assert!(matches!(elbo(&vae, &[1.0], 1, 0), Err(AgentError::ShapeMismatch(_))));
    assert!(elbo(&vae, &[1.0, 2.0, 3.0], 0, 0).is_err());
    assert!(vae_gradient(&vae, &[], 1, 0).is_err());
}

proptest! {
    #[test]
    fn kl_is_nonnegative(seed in any::<u64>(), x in prop::collection::vec(-5.0f64..5.0, 3)) {
        let vae = GaussianVae::random(3, 2, 1.0, 2.0, seed).unwrap();
        let (_, kl) = elbo_terms(&vae, &x, 1, seed).unwrap();
        prop_assert!(kl >= -1e-12);
    }
}

#[test]
fn vae_gradient_matches_finite_differences() {
    let h = 1e-5;
    for i in 0..20u64 {
        let d = 2 + (i as usize % 3);
        let l = 1 + (i as usize % 2);
        let vae = GaussianVae::random(d, l, 1.0 + (i % 4) as f64, 0.5, 100 + i).unwrap();
        let mut r = rng::seeded(200 + i);
        let batch: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng::standard_normal(&mut r)).collect()).collect();
        let seed = 300 + i;
        let grad = vae_gradient(&vae, &batch, 2, seed).unwrap();
        let params = vae.params().to_vec();
        for k in 0..params.len() {
            let mut up = vae.clone();
            let mut p = params.clone();
            p[k] += h;
            up.set_params(&p).unwrap();
            let mut down = vae.clone();
            p[k] -= 2.0 * h;
            down.set_params(&p).unwrap();
            let fd = (batch_elbo(&up, &batch, 2, seed).unwrap() - batch_elbo(&down, &batch, 2, seed).unwrap()) / (2.0 * h);
            assert!(rel_err(grad.0[k], fd) < 1e-4, "instance {i} param {k}: {} vs {fd}", grad.0[k]);
        }
    }
}

#[test]
fn decoder_bias_gradient_is_mean_residual() {
    let vae = GaussianVae::new(2, 1, 1.0).unwrap();
    let zeros = vec![vec![0.0, 0.0]; 3];
    let g = vae_gradient(&vae, &zeros, 1, 0).unwrap();
    assert!(g.as_slice().iter().all(|&x| x == 0.0));

    let batch = vec![vec![1.0, -2.0], vec![3.0, 0.5]];
    let g = vae_gradient(&vae, &batch, 1, 0).unwrap();
    let n = g.len();
    // zero weights: reconstruction is the zero bias, so ∂/∂b_d = mean x
    assert!((g.0[n - 2] - 2.0).abs() < 1e-15);
    assert!((g.0[n - 1] + 0.75).abs() < 1e-15);
}

fn two_factor_dataset(scale: f64, copies: usize) -> (ProductSpace, Vec<Vec<usize>>, Vec<Vec<f64>>) {
    let space = ProductSpace::new(vec![2, 2]).unwrap();
    let mut factors = Vec::new();
    let mut xs = Vec::new();
    for _ in 0..copies {
        for o in 0..space.size() {
            factors.push(space.decode(o));
            xs.push(observation_vector(&space, o, scale));
        }
    }
    (space, factors, xs)
}

#[test]
fn elbo_rises_under_gradient_ascent() {
    let (_, _, xs) = two_factor_dataset(1.0, 4);
    let config = VaeConfig { latent_dim: 2, beta: 1.0, steps: 0, step_size: 0.01, seed: 7, ..VaeConfig::default() };
    let (start, e0) = train_encoder(&xs, &config).unwrap();
    let (trained, e500) = train_encoder(&xs, &VaeConfig { steps: 500, ..config }).unwrap();
    assert_ne!(start.params(), trained.params());
    assert!(e500 > e0, "{e0} -> {e500}");
}

/// Observation scale for one-hot data fed to the unit-variance decoder.
const ONE_HOT_SCALE: f64 = 4.0;

fn trained_codes(beta: f64) -> (GaussianVae, Vec<Vec<usize>>, Vec<Vec<f64>>) {
    let (_, factors, xs) = two_factor_dataset(ONE_HOT_SCALE, 16);
    let config = VaeConfig { latent_dim: 4, beta, steps: 3000, step_size: 0.002, seed: 1, ..VaeConfig::default() };
    let (vae, _) = train_encoder(&xs, &config).unwrap();
    (vae, factors, xs)
}

#[test]
fn trained_encoder_codes_are_informative() {
    let (vae, factors, xs) = trained_codes(4.0);
    let samples: Vec<(Vec<usize>, Vec<f64>)> =
        factors.into_iter().zip(xs.iter().map(|x| vae.encode(x).unwrap().0)).collect();
    let joint = binarize_continuous_codes(&samples, 4).unwrap();
    let report = score_disentanglement(&joint).unwrap();
    assert!(report.informativeness_score >= 0.8, "{report:?}");
}

#[test]
fn higher_beta_shrinks_kl() {
    let kl_of = |beta: f64| {
        let (vae, _, xs) = trained_codes(beta);
        xs.iter().map(|x| elbo_terms(&vae, x, 1, 0).unwrap().1).sum::<f64>() / xs.len() as f64
    };
    let (k1, k4) = (kl_of(1.0), kl_of(4.0));
    assert!(k4 <= k1, "beta 4 KL {k4} above beta 1 KL {k1}");
}

#[test]
fn train_encoder_rejects_zero_latent() {
    let (_, _, xs) = two_factor_dataset(1.0, 1);
    let config = VaeConfig { latent_dim: 0, ..VaeConfig::default() };
    assert!(train_encoder(&xs, &config).is_err());
    assert_eq!(train_encoder(&[], &VaeConfig::default()).unwrap_err(), AgentError::Empty);
}

#[test]
fn code_encoder_thresholds_at_median() {
    let mut vae = GaussianVae::new(1, 1, 1.0).unwrap();
    vae.set_params(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let vectors: Vec<Vec<f64>> = [0.0, 1.0, 2.0, 3.0].iter().map(|&v| vec![v]).collect();
    let enc = CodeEncoder::from_vae(&vae, &vectors).unwrap();
    assert_eq!(enc.n_codes(), 2);
    assert_eq!((0..4).map(|o| enc.code(o)).collect::<Vec<_>>(), vec![0, 0, 1, 1]);
}

#[test]
fn learned_code_encoder_must_cover_observations() {
    let env = Pomdp::fully_observed(build_trap_tube_task(5, true).unwrap());
    let enc = CodeEncoder::new(vec![0, 1], 2).unwrap();
    let config = TrainConfig { episodes: 10, ..TrainConfig::default() };
    assert!(matches!(
        train_actor_critic(&env, &Representation::LearnedCodes(enc), &config, 0),
        Err(AgentError::Config(_))
    ));
}
