//! Properties of the multiple-model update: agreement with closed-form
//! Bayes on the linear bench, symmetry under hypothesis relabeling,
//! degenerate-set behavior, and the reward decomposition around it.

mod common;

use common::{filtered_trace, lg_observations, mm_posteriors, stepwise_median, MmKalman};
use nalgebra::DMatrix;
use rand::Rng;

use mdhp_core::mdh::MdhProblem;
use mdhp_core::problems::linear_gaussian::{rotation_damping, LinearGaussian};
use mdhp_core::problems::vdp::{VdpParams, VdpProblem};
use mdhp_core::rng::derive_rng;
use mdhp_core::{
    CategoricalBelief, HypothesisRewardKind, HypothesisSet, ResolutionSpec, UpdaterConfig,
};

fn spec(deadline: usize) -> ResolutionSpec {
    ResolutionSpec {
        epsilon: 0.2,
        deadline,
    }
}

#[test]
fn mm_update_matches_closed_form_kalman_bayes() {
    let (base, set, _) = MmKalman::for_bench();
    for seed in [3u64, 11, 42] {
        for truth in 0..set.len() {
            let obs = lg_observations(&base, &set.models()[truth], 0, 20, seed);
            let problem = MdhProblem::construct(
                &base,
                &set,
                UpdaterConfig::unscented(),
                spec(20),
                HypothesisRewardKind::None,
                0.0,
            )
            .unwrap();
            let got = mm_posteriors(&problem, 0, &obs, seed);
            let (_, _, mut oracle) = MmKalman::for_bench();
            for (t, o) in obs.iter().enumerate() {
                oracle.step(0, o);
                for i in 0..set.len() {
                    let err = (got[t][i] - oracle.b[i]).abs();
                    assert!(
                        err < 1e-6,
                        "seed {seed} truth {truth} step {t} hyp {i}: \
                         {} vs oracle {} (err {err:.2e})",
                        got[t][i],
                        oracle.b[i]
                    );
                }
            }
        }
    }
}

#[test]
fn bayes_reweighting_matches_hand_example() {
    // prior [0.5, 0.5], likelihoods [0.45, 0.15]
    let post = CategoricalBelief::from_unnormalized(&[0.5 * 0.45, 0.5 * 0.15]).unwrap();
    assert!((post.probabilities()[0] - 0.75).abs() < 1e-15);
    assert!((post.probabilities()[1] - 0.25).abs() < 1e-15);
}

#[test]
fn relabeling_hypotheses_relabels_the_posterior() {
    let (base, set) = LinearGaussian::bench();
    // position j of the permuted set holds original hypothesis perm[j]
    let perm = [2usize, 0, 1];
    let permuted = HypothesisSet::new(
        perm.iter().map(|&j| set.models()[j].clone()).collect(),
        perm.iter().map(|&j| set.labels()[j].clone()).collect(),
    )
    .unwrap();

    let obs = lg_observations(&base, &set.models()[1], 0, 15, 17);
    let make = |s: &HypothesisSet<DMatrix<f64>>| {
        MdhProblem::construct(
            &base,
            s,
            UpdaterConfig::unscented(),
            spec(15),
            HypothesisRewardKind::None,
            0.0,
        )
        .unwrap()
    };
    let b_orig = mm_posteriors(&make(&set), 0, &obs, 5);
    let b_perm = mm_posteriors(&make(&permuted), 0, &obs, 5);
    for t in 0..obs.len() {
        for j in 0..3 {
            assert!(
                (b_perm[t][j] - b_orig[t][perm[j]]).abs() < 1e-13,
                "step {t}: permuted[{j}] = {} vs original[{}] = {}",
                b_perm[t][j],
                perm[j],
                b_orig[t][perm[j]]
            );
        }
    }
}

#[test]
fn duplicate_hypotheses_stay_exactly_uniform_under_gaussian_updates() {
    let (base, _) = LinearGaussian::bench();
    let dup = HypothesisSet::new(
        vec![rotation_damping(0.98, 0.10); 3],
        vec!["a".into(), "b".into(), "c".into()],
    )
    .unwrap();
    let problem = MdhProblem::construct(
        &base,
        &dup,
        UpdaterConfig::unscented(),
        spec(20),
        HypothesisRewardKind::None,
        0.0,
    )
    .unwrap();
    let obs = lg_observations(&base, &dup.models()[0], 0, 20, 23);
    for row in mm_posteriors(&problem, 0, &obs, 23) {
        for p in row {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }
}

#[test]
fn duplicate_hypotheses_stay_near_uniform_under_particle_updates() {
    let (base, _) = LinearGaussian::bench();
    let dup = HypothesisSet::new(
        vec![rotation_damping(0.98, 0.10); 3],
        vec!["a".into(), "b".into(), "c".into()],
    )
    .unwrap();
    let problem = MdhProblem::construct(
        &base,
        &dup,
        UpdaterConfig::default(),
        spec(20),
        HypothesisRewardKind::None,
        0.0,
    )
    .unwrap();
    // Independent particle clouds make the posterior wander; the median
    // over runs must stay close to uniform at every step.
    let traces: Vec<Vec<Vec<f64>>> = (0..50)
        .map(|seed| filtered_trace(&problem, 0, 0, 20, 100 + seed))
        .collect();
    for comp in 0..3 {
        for (t, m) in stepwise_median(&traces, comp).iter().enumerate() {
            assert!(
                (m - 1.0 / 3.0).abs() < 0.15,
                "component {comp} step {t}: median {m}"
            );
        }
    }
}

#[test]
fn true_hypothesis_posterior_rises_monotonically_in_the_median() {
    let (base, set) = LinearGaussian::bench();
    let problem = MdhProblem::construct(
        &base,
        &set,
        UpdaterConfig::unscented(),
        spec(20),
        HypothesisRewardKind::None,
        0.0,
    )
    .unwrap();
    let truth = 1; // fast-turn
    let traces: Vec<Vec<Vec<f64>>> = (0..50)
        .map(|seed| filtered_trace(&problem, truth, 0, 20, 500 + seed))
        .collect();
    let med = stepwise_median(&traces, truth);
    for t in 1..med.len() {
        assert!(
            med[t] >= med[t - 1] - 1e-12,
            "median dipped at step {t}: {} -> {}",
            med[t - 1],
            med[t]
        );
    }
    assert!(*med.last().unwrap() > 0.9);
}

#[test]
fn composite_reward_is_affine_in_the_weight() {
    let base = VdpProblem::new(VdpParams::default()).unwrap();
    let set = base.hypothesis_set();
    let make = |w: f64| {
        MdhProblem::construct(
            &base,
            &set,
            UpdaterConfig::default(),
            spec(30),
            HypothesisRewardKind::Entropy,
            w,
        )
        .unwrap()
    };
    let (p0, p3, p11) = (make(0.0), make(3.0), make(11.0));
    let mut rng = derive_rng(9, &[2]);
    let b0 = p3.initial_belief(&mut rng).unwrap();
    let (b1, _, _) = p3.generate_belief(&b0, 2, &mut rng).unwrap();

    let state_part = p3.expected_state_reward(&b0, 2);
    let hyp_part = p3.hypothesis_reward(b0.resolved, &b1);
    assert!(hyp_part < 0.0); // entropy bonus is strictly negative off a vertex
    let r0 = p0.composite_reward(&b0, 2, &b1);
    let r3 = p3.composite_reward(&b0, 2, &b1);
    let r11 = p11.composite_reward(&b0, 2, &b1);
    assert!((r0 - state_part).abs() < 1e-12);
    assert!((r3 - (state_part + 3.0 * hyp_part)).abs() < 1e-12);
    assert!((r11 - r3 - 8.0 * hyp_part).abs() < 1e-12);
}

#[test]
fn single_hypothesis_collapses_to_the_base_problem() {
    let base = VdpProblem::new(VdpParams::default()).unwrap();
    let problem = MdhProblem::single_model(
        &base,
        1.4,
        UpdaterConfig::default(),
        spec(30),
        HypothesisRewardKind::Entropy,
        7.0,
    )
    .unwrap();
    let mut rng = derive_rng(31, &[2]);
    let mut belief = problem.initial_belief(&mut rng).unwrap();
    for step in 0..15 {
        let action = step % 3;
        let expected = problem.expected_state_reward(&belief, action);
        let (next, obs, reward) = problem.generate_belief(&belief, action, &mut rng).unwrap();
        assert_eq!(next.hypothesis_belief.probabilities(), &[1.0]);
        // entropy of a point mass is zero, so the composite reward is the
        // base expectation no matter the weight
        assert!((reward - expected).abs() < 1e-12);
        assert_eq!(obs.len(), 8);
        belief = next;
    }
}

#[test]
fn generated_beliefs_always_stay_valid() {
    let (base, set) = LinearGaussian::bench();
    let problem = MdhProblem::construct(
        &base,
        &set,
        UpdaterConfig::unscented(),
        spec(12),
        HypothesisRewardKind::ResolutionTime,
        4.0,
    )
    .unwrap()
    .with_updaters(vec![
        UpdaterConfig {
            particle_count: 60,
            ..UpdaterConfig::default()
        },
        UpdaterConfig::unscented(),
        UpdaterConfig {
            particle_count: 60,
            ..UpdaterConfig::default()
        },
    ])
    .unwrap();

    let mut rng = derive_rng(77, &[3]);
    let episodes = 4_000;
    let steps = 25;
    let mut resolutions = 0usize;
    for _ in 0..episodes {
        let mut belief = problem.initial_belief(&mut rng).unwrap();
        let mut was_resolved = false;
        for _ in 0..steps {
            let action = rng.random_range(0..2);
            let (next, obs, reward) = problem.generate_belief(&belief, action, &mut rng).unwrap();
            let probs = next.hypothesis_belief.probabilities();
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(probs.iter().all(|p| p.is_finite() && *p >= 0.0));
            assert!(reward.is_finite());
            assert!(obs.iter().all(|o| o.is_finite()));
            assert_eq!(next.time_step, belief.time_step + 1);
            // the resolution latch never releases
            assert!(!was_resolved || next.resolved);
            was_resolved = next.resolved;
            belief = next;
        }
        if was_resolved {
            resolutions += 1;
        }
    }
    // the latch check above is vacuous unless a decent share resolve
    assert!(resolutions > episodes / 10, "only {resolutions} resolved");
}
