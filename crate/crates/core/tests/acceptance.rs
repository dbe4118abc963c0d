//! Release gate. Eleven numbered checks; each prints one
//! `criterion N: PASS/FAIL ...` line with the measured numbers before
//! asserting, so a full run always shows the whole scorecard. The two
//! closed-loop campaigns are expensive and shared across checks through
//! `OnceLock`; every cell of a campaign reuses one seed base, so cells
//! differ only in the reward they plan against, not in the worlds they
//! face.

mod common;

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use mdhp_core::belief::{GaussianBelief, ParticleBelief};
use mdhp_core::estimators::{pf_correct, pf_predict};
use mdhp_core::harness::{print_line, sweep_weights, CampaignConfig, EpisodeRecord, SweepCell};
use mdhp_core::mdh::resolution_time_reward;
use mdhp_core::problems::linear_gaussian::LinearGaussian;
use mdhp_core::problems::sda::{SdaParams, SdaProblem};
use mdhp_core::problems::toy::TwoStateToy;
use mdhp_core::problems::vdp::{propagate_object, VdpParams, VdpProblem};
use mdhp_core::rng::{derive_rng, STREAM_FILTER, STREAM_PLANNER};
use mdhp_core::solver::plan_with_tree;
use mdhp_core::{
    CategoricalBelief, HypothesisRewardKind, HypothesisSet, MdhProblem, Pomdp, ResolutionSpec,
    SolverConfig, UpdaterConfig,
};

use common::{lg_observations, mm_posteriors, toy_q_values, MmKalman};

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn mean_sem(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    assert!(n > 1);
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Cumulative base reward without the discount, the scale the reference
/// table reports.
fn raw_base(r: &EpisodeRecord) -> f64 {
    r.steps.iter().map(|s| s.base_reward).sum()
}

struct Cell {
    cell: SweepCell,
    wall: Duration,
}

struct Campaigns {
    baseline: Cell,
    restime: Cell,
    entropy: Cell,
}

#[allow(clippy::too_many_arguments)]
fn run_cell<P: Pomdp>(
    base: &P,
    set: &HypothesisSet<P::Dynamics>,
    updater: UpdaterConfig,
    resolution: ResolutionSpec,
    kind: HypothesisRewardKind,
    weight: f64,
    horizon: usize,
    solver: &SolverConfig,
    runs: usize,
    seed_base: u64,
) -> Cell {
    let campaign = CampaignConfig {
        weight_list: vec![weight],
        runs_per_cell: runs,
        seed_base,
        workers: 1,
    };
    let start = Instant::now();
    let mut cells = sweep_weights(
        base, set, updater, resolution, kind, horizon, solver, &campaign,
    )
    .unwrap();
    Cell {
        cell: cells.remove(0),
        wall: start.elapsed(),
    }
}

fn vdp_campaigns() -> &'static Campaigns {
    static VDP: OnceLock<Campaigns> = OnceLock::new();
    VDP.get_or_init(|| {
        let problem = VdpProblem::new(VdpParams::default()).unwrap();
        let set = problem.hypothesis_set();
        let resolution = ResolutionSpec {
            epsilon: 0.2,
            deadline: 30,
        };
        let solver = SolverConfig {
            iterations: 200,
            max_depth: 5,
            rollout_depth: 2,
            exploration_constant: 100.0,
            ..SolverConfig::default()
        };
        let run = |kind, weight| {
            run_cell(
                &problem,
                &set,
                UpdaterConfig::default(),
                resolution,
                kind,
                weight,
                30,
                &solver,
                50,
                11,
            )
        };
        Campaigns {
            baseline: run(HypothesisRewardKind::None, 0.0),
            restime: run(HypothesisRewardKind::ResolutionTime, 50.0),
            entropy: run(HypothesisRewardKind::Entropy, 50.0),
        }
    })
}

fn sda_campaigns() -> &'static Campaigns {
    static SDA: OnceLock<Campaigns> = OnceLock::new();
    SDA.get_or_init(|| {
        let params = SdaParams::default();
        let horizon = params.horizon_steps();
        let resolution = ResolutionSpec {
            epsilon: 0.2,
            deadline: params.deadline_steps(),
        };
        let problem = SdaProblem::new(params).unwrap();
        let set = problem.hypothesis_set();
        let solver = SolverConfig {
            iterations: 80,
            max_depth: 6,
            rollout_depth: 3,
            exploration_constant: 150.0,
            ..SolverConfig::default()
        };
        let run = |kind, weight| {
            run_cell(
                &problem,
                &set,
                UpdaterConfig::unscented(),
                resolution,
                kind,
                weight,
                horizon,
                &solver,
                40,
                13,
            )
        };
        Campaigns {
            baseline: run(HypothesisRewardKind::None, 0.0),
            restime: run(HypothesisRewardKind::ResolutionTime, 150.0),
            entropy: run(HypothesisRewardKind::Entropy, 150.0),
        }
    })
}

#[test]
fn criterion_01_hypothesis_posterior_matches_closed_form_kalman() {
    let start = Instant::now();
    let (base, set, _) = MmKalman::for_bench();
    let resolution = ResolutionSpec {
        epsilon: 0.2,
        deadline: 30,
    };
    let problem = MdhProblem::construct(
        &base,
        &set,
        UpdaterConfig::unscented(),
        resolution,
        HypothesisRewardKind::None,
        0.0,
    )
    .unwrap();
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let truth = &set.models()[(seed % 3) as usize];
        let action = (seed % 2) as usize;
        let obs = lg_observations(&base, truth, action, 20, 1000 + seed);
        let post = mm_posteriors(&problem, action, &obs, 1000 + seed);
        let (_, _, mut oracle) = MmKalman::for_bench();
        for (t, o) in obs.iter().enumerate() {
            oracle.step(action, o);
            for i in 0..set.len() {
                worst = worst.max((post[t][i] - oracle.b[i]).abs());
            }
        }
    }
    let wall = start.elapsed();
    let pass = worst < 1e-6 && wall < Duration::from_secs(10);
    print_line(&format!(
        "criterion 1: {} hypothesis-posterior max-abs error {:.3e} (< 1e-6) over 20 steps x 20 seeds, wall {:.2} s (< 10)",
        verdict(pass),
        worst,
        wall.as_secs_f64(),
    ));
    assert!(pass);
}

#[test]
fn criterion_02_particle_posterior_error_shrinks_like_root_n() {
    let start = Instant::now();
    let (base, set) = LinearGaussian::bench();
    let truth = set.models()[0].clone();
    let model = base.with_dynamics(&truth);
    let counts = [100usize, 1000, 10000];
    let mut errors = Vec::with_capacity(counts.len());
    for &n in &counts {
        let mut total = 0.0;
        let mut measured = 0usize;
        for seed in 0..30u64 {
            let obs = lg_observations(&base, &truth, 0, 20, 3000 + seed);
            let mut oracle = MmKalman::new(
                vec![truth.clone()],
                DMatrix::identity(2, 2) * 1e-4,
                vec![0.1, 1.0],
                DVector::from_vec(vec![1.0, 0.0]),
                DMatrix::identity(2, 2) * 0.25,
            );
            let prior = GaussianBelief::new(
                DVector::from_vec(vec![1.0, 0.0]),
                DMatrix::identity(2, 2) * 0.25,
            )
            .unwrap();
            let mut rng = derive_rng(3000 + seed, &[STREAM_FILTER, n as u64]);
            let mut pf =
                ParticleBelief::uniform((0..n).map(|_| prior.sample(&mut rng)).collect()).unwrap();
            for o in &obs {
                let predicted =
                    pf_predict(&pf, 0, |s, a, r| model.sample_transition(s, a, r), &mut rng);
                let (corrected, _) = pf_correct(
                    &predicted,
                    0,
                    o,
                    |x, a, ob| model.observation_density(ob, x, a),
                    0.5,
                    &mut rng,
                );
                oracle.step(0, o);
                total += (corrected.mean() - &oracle.means[0]).norm();
                measured += 1;
                pf = corrected;
            }
        }
        errors.push(total / measured as f64);
    }
    let xs: Vec<f64> = counts.iter().map(|n| (*n as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let xm = xs.iter().sum::<f64>() / xs.len() as f64;
    let ym = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xm) * (y - ym))
        .sum::<f64>()
        / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
    let wall = start.elapsed();
    let pass = (-0.65..=-0.35).contains(&slope) && wall < Duration::from_secs(60);
    print_line(&format!(
        "criterion 2: {} posterior-mean errors [{:.4}, {:.4}, {:.4}] at N = [100, 1000, 10000], log-log slope {:.3} (in [-0.65, -0.35]), wall {:.1} s (< 60)",
        verdict(pass),
        errors[0],
        errors[1],
        errors[2],
        slope,
        wall.as_secs_f64(),
    ));
    assert!(pass);
}

#[test]
fn criterion_03_resolution_reward_pays_exactly_once_or_never() {
    let start = Instant::now();
    let spec = ResolutionSpec {
        epsilon: 0.2,
        deadline: 10,
    };
    let mut rng = derive_rng(42, &[7]);
    let mut paid = 0usize;
    let mut unpaid = 0usize;
    for _ in 0..10_000 {
        // Two separated above-threshold bursts force at least two upward
        // crossings per trajectory; the first may land on either side of
        // the deadline.
        let t1 = 1 + rng.random_range(0..16usize);
        let dur1 = 1 + rng.random_range(0..2usize);
        let gap = 1 + rng.random_range(0..2usize);
        let t2 = t1 + dur1 + gap;
        let dur2 = 1 + rng.random_range(0..2usize);
        let mut resolved = false;
        let mut total = 0.0;
        for t in 1..=20usize {
            let above = (t >= t1 && t < t1 + dur1) || (t >= t2 && t < t2 + dur2);
            let top: f64 = if above {
                0.8 + 0.19 * rng.random::<f64>()
            } else {
                0.34 + 0.45 * rng.random::<f64>()
            };
            let winner = rng.random_range(0..3usize);
            let mut mass = [(1.0 - top) / 2.0; 3];
            mass[winner] = top;
            let b = CategoricalBelief::from_unnormalized(&mass).unwrap();
            let (r, latch) = resolution_time_reward(&b, t, resolved, &spec);
            total += r;
            resolved = latch;
        }
        assert!(
            total == 0.0 || total == 1.0,
            "trajectory paid {total}, expected exactly 0 or 1"
        );
        let expected = if t1 <= spec.deadline { 1.0 } else { 0.0 };
        assert_eq!(total, expected, "first crossing at {t1} vs deadline 10");
        if total == 1.0 {
            paid += 1;
        } else {
            unpaid += 1;
        }
    }
    let wall = start.elapsed();
    let pass = wall < Duration::from_secs(5) && paid > 0 && unpaid > 0;
    print_line(&format!(
        "criterion 3: {} 10000 multi-crossing trajectories all paid 0 or 1 ({} paid, {} unpaid), wall {:.2} s (< 5)",
        verdict(pass),
        paid,
        unpaid,
        wall.as_secs_f64(),
    ));
    assert!(pass);
}

#[test]
fn criterion_04_reward_decomposition_holds_on_every_record() {
    let mut worst_cum = 0.0f64;
    let mut worst_step = 0.0f64;
    let mut records = 0usize;
    for campaigns in [vdp_campaigns(), sda_campaigns()] {
        for cell in [&campaigns.baseline, &campaigns.restime, &campaigns.entropy] {
            let w = cell.cell.weight;
            for r in &cell.cell.records {
                records += 1;
                let recon = r.cumulative_base_reward + w * r.cumulative_hyp_reward;
                worst_cum = worst_cum.max((r.cumulative_total_reward - recon).abs());
                for s in &r.steps {
                    worst_step =
                        worst_step.max((s.reward - (s.base_reward + w * s.hyp_reward)).abs());
                }
            }
        }
    }
    let pass = worst_cum <= 1e-9 && worst_step <= 1e-9 && records == 270;
    print_line(&format!(
        "criterion 4: {} total = base + w * hypothesis on all {} records; worst cumulative gap {:.2e}, worst per-step gap {:.2e} (<= 1e-9)",
        verdict(pass),
        records,
        worst_cum,
        worst_step,
    ));
    assert!(pass);
}

#[test]
fn criterion_05_search_matches_exact_expectimax_on_the_toy() {
    let start = Instant::now();
    let toy = TwoStateToy::new(0.8, 0.95);
    let p0 = 0.35;
    let depth = 3;
    let oracle = toy_q_values(&toy, p0, depth);
    let best = usize::from(oracle[1] > oracle[0]);
    let cfg = SolverConfig {
        iterations: 50_000,
        max_depth: depth,
        rollout_depth: 0,
        exploration_constant: 2.0,
        ..SolverConfig::default()
    };
    let mut matches = 0usize;
    let mut worst_q = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = derive_rng(6000 + seed, &[STREAM_PLANNER]);
        let (action, tree) = plan_with_tree(&toy, &p0, &cfg, &mut rng).unwrap();
        if action == best {
            matches += 1;
        }
        worst_q = worst_q.max((tree.root_q()[action].1 - oracle[action]).abs());
    }
    let wall = start.elapsed();
    let pass = matches >= 95 && worst_q < 0.05 && wall < Duration::from_secs(300);
    print_line(&format!(
        "criterion 5: {} root action matched exact expectimax in {}/100 searches (>= 95), worst chosen-action Q error {:.4} (< 0.05), wall {:.1} s (< 300)",
        verdict(pass),
        matches,
        worst_q,
        wall.as_secs_f64(),
    ));
    assert!(pass);
}

#[test]
fn criterion_06_epoch_propagation_matches_fine_reference() {
    let p = VdpParams::default();
    let half = p.init_side / 2.0;
    let starts = [
        (p.init_center[0], p.init_center[1]),
        (p.init_center[0] - half, p.init_center[1] - half),
        (p.init_center[0] + half, p.init_center[1] - half),
        (p.init_center[0] - half, p.init_center[1] + half),
        (p.init_center[0] + half, p.init_center[1] + half),
    ];
    let mus = [0.6, 2.0, 1.4, 3.0, 0.75];
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for (mi, &mu) in mus.iter().enumerate() {
        // The population the benchmark visits: the initial box, the
        // transient out of it, the limit cycle, and noise-jittered copies
        // of all of them.
        let mut states: Vec<(f64, f64)> = Vec::new();
        let mut rng = derive_rng(99, &[mi as u64]);
        for &(sx, sy) in &starts {
            let (mut x, mut y) = (sx, sy);
            states.push((x, y));
            for k in 0..200 {
                (x, y) = propagate_object(x, y, mu, p.dt, p.substeps);
                if k % 3 == 0 {
                    states.push((x, y));
                    states.push((
                        x + p.process_sigma * rng.sample::<f64, _>(StandardNormal),
                        y + p.process_sigma * rng.sample::<f64, _>(StandardNormal),
                    ));
                }
            }
        }
        for &(sx, sy) in &states {
            let coarse = propagate_object(sx, sy, mu, p.dt, p.substeps);
            let fine = propagate_object(sx, sy, mu, p.dt, 2000);
            worst = worst.max((coarse.0 - fine.0).hypot(coarse.1 - fine.1));
            checked += 1;
        }
    }
    let pass = worst < 1e-5;
    print_line(&format!(
        "criterion 6: {} one-epoch propagation error {:.3e} (< 1e-5) over {} states x {} stiffness values",
        verdict(pass),
        worst,
        checked / mus.len(),
        mus.len(),
    ));
    assert!(pass);
}

#[test]
fn criterion_07_resolution_reward_drives_fast_in_time_decisions() {
    let c = vdp_campaigns();
    let s = &c.restime.cell.score;
    let steps = s.steps_mean.unwrap_or(f64::INFINITY);
    let pass = s.in_time_rate >= 0.65
        && steps <= 20.0
        && s.n_failed == 0
        && c.restime.wall < Duration::from_secs(1800);
    print_line(&format!(
        "criterion 7: {} in-time correct-decision rate {:.2} (>= 0.65), steps-to-decide {:.1}+-{:.1} (<= 20), {} failures, wall {:.0} s (< 1800)",
        verdict(pass),
        s.in_time_rate,
        steps,
        s.steps_sem.unwrap_or(f64::NAN),
        s.n_failed,
        c.restime.wall.as_secs_f64(),
    ));
    assert!(pass);
}

#[test]
fn criterion_08_baseline_resolves_rarely_and_clearly_less_often() {
    let c = vdp_campaigns();
    let b = &c.baseline.cell.score;
    let r = &c.restime.cell.score;
    let gap = r.in_time_rate - b.in_time_rate;
    let pass = b.in_time_rate <= 0.50 && gap >= 0.15 && b.n_failed == 0;
    print_line(&format!(
        "criterion 8: {} baseline in-time rate {:.2} (<= 0.50), resolution-time lead {:.2} (>= 0.15), {} failures",
        verdict(pass),
        b.in_time_rate,
        gap,
        b.n_failed,
    ));
    assert!(pass);
}

#[test]
fn criterion_09_resolution_time_keeps_more_base_reward_than_entropy() {
    let c = vdp_campaigns();
    let collect = |cell: &Cell| -> Vec<f64> {
        cell.cell
            .records
            .iter()
            .filter(|r| !r.failed)
            .map(raw_base)
            .collect()
    };
    let (rt_mean, rt_sem) = mean_sem(&collect(&c.restime));
    let (en_mean, en_sem) = mean_sem(&collect(&c.entropy));
    let rs = &c.restime.cell.score;
    let es = &c.entropy.cell.score;
    let step_diff = rs.steps_mean.unwrap_or(f64::NAN) - es.steps_mean.unwrap_or(f64::NAN);
    let step_sem = (rs.steps_sem.unwrap_or(f64::NAN).powi(2)
        + es.steps_sem.unwrap_or(f64::NAN).powi(2))
    .sqrt();
    let pass = rt_mean >= en_mean;
    print_line(&format!(
        "criterion 9: {} base reward {:.1}+-{:.1} (resolution-time) >= {:.1}+-{:.1} (entropy); steps-to-decide difference {:.1}+-{:.1}",
        verdict(pass),
        rt_mean,
        rt_sem,
        en_mean,
        en_sem,
        step_diff,
        step_sem,
    ));
    assert!(pass);
}

#[test]
fn criterion_10_sensor_tasking_resolves_in_time_with_few_deviations() {
    let c = sda_campaigns();
    let r = &c.restime.cell.score;
    let b = &c.baseline.cell.score;
    let e = &c.entropy.cell.score;
    let wall = c.restime.wall + c.baseline.wall + c.entropy.wall;
    let pass = r.in_time_rate >= 0.70
        && b.in_time_rate == 0.0
        && r.deviations_mean < e.deviations_mean
        && r.n_failed + b.n_failed + e.n_failed == 0
        && wall < Duration::from_secs(1800);
    print_line(&format!(
        "criterion 10: {} in-time rate {:.2} (>= 0.70); baseline success {:.2} (= 0, {} crossings, {:.1} deviations); deviations {:.1} (resolution-time) < {:.1} (entropy); wall {:.0} s (< 1800)",
        verdict(pass),
        r.in_time_rate,
        b.in_time_rate,
        b.crossed_count,
        b.deviations_mean,
        r.deviations_mean,
        e.deviations_mean,
        wall.as_secs_f64(),
    ));
    assert!(pass);
}

#[test]
fn criterion_11_resolution_reward_stops_probing_after_the_decision() {
    let c = sda_campaigns();
    // Per decided run: the decided hypothesis's belief from the decision
    // step onward. Flat means the planner stopped feeding it.
    let stats = |cell: &Cell| -> (usize, usize, f64) {
        let mut decided = 0usize;
        let mut flat = 0usize;
        let mut var_sum = 0.0;
        for r in cell.cell.records.iter().filter(|r| !r.failed) {
            let (Some(step), Some(hyp)) = (r.decision_step, r.decision_hypothesis) else {
                continue;
            };
            let tail: Vec<f64> = r
                .steps
                .iter()
                .filter(|s| s.step >= step)
                .map(|s| s.b_h[hyp])
                .collect();
            if tail.is_empty() {
                continue;
            }
            decided += 1;
            let anchor = tail[0];
            if tail.iter().all(|b| (b - anchor).abs() <= 0.02) {
                flat += 1;
            }
            let m = tail.iter().sum::<f64>() / tail.len() as f64;
            var_sum += tail.iter().map(|b| (b - m) * (b - m)).sum::<f64>() / tail.len() as f64;
        }
        (decided, flat, var_sum / decided.max(1) as f64)
    };
    let (r_decided, r_flat, r_var) = stats(&c.restime);
    let (e_decided, _, e_var) = stats(&c.entropy);
    let flat_frac = r_flat as f64 / r_decided.max(1) as f64;
    let pass = r_decided > 0 && e_decided > 0 && flat_frac >= 0.70 && e_var > r_var;
    print_line(&format!(
        "criterion 11: {} post-decision belief flat within 0.02 in {}/{} decided runs ({:.0}% >= 70%); post-decision variance {:.2e} (resolution-time) < {:.2e} (entropy, {} decided)",
        verdict(pass),
        r_flat,
        r_decided,
        flat_frac * 100.0,
        r_var,
        e_var,
        e_decided,
    ));
    assert!(pass);
}

#[test]
fn baseline_tracking_reward_lands_in_the_reference_band() {
    let c = vdp_campaigns();
    let vals: Vec<f64> = c
        .baseline
        .cell
        .records
        .iter()
        .filter(|r| !r.failed)
        .map(raw_base)
        .collect();
    let (mean, sem) = mean_sem(&vals);
    let pass = (35.0..=70.0).contains(&mean);
    print_line(&format!(
        "reference band: {} baseline cumulative tracking reward {:.1}+-{:.1} (in [35, 70])",
        verdict(pass),
        mean,
        sem,
    ));
    assert!(pass);
}
