//! Campaign machinery: runs seeded closed-loop episodes, scores them the way
//! the summary table wants, sweeps the hypothesis-reward weight, and writes
//! everything as CSV. All randomness flows from an episode seed through
//! fixed stream tags, so a campaign is a pure function of (config, seeds).

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{mm_update, UpdaterConfig};
use crate::mdh::{HypothesisRewardKind, MdhError, MdhProblem, ResolutionSpec};
use crate::problem::Pomdp;
use crate::rng::{derive_rng, derive_seed, STREAM_FILTER, STREAM_PLANNER, STREAM_WORLD};
use crate::solver::{plan, SolverConfig};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Mdh(#[from] MdhError),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub weight_list: Vec<f64>,
    /// Episodes per weight cell; the true hypothesis rotates round-robin
    /// within the cell.
    pub runs_per_cell: usize,
    pub seed_base: u64,
    pub workers: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            weight_list: vec![0.0],
            runs_per_cell: 1,
            seed_base: 1,
            workers: 1,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.weight_list.is_empty() {
            return Err("campaign.weight_list: must not be empty".into());
        }
        if self.weight_list.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err("campaign.weight_list: weights must be finite and nonnegative".into());
        }
        if self.runs_per_cell == 0 {
            return Err("campaign.runs_per_cell: must be at least 1".into());
        }
        if self.workers == 0 {
            return Err("campaign.workers: must be at least 1".into());
        }
        Ok(())
    }
}

/// One closed-loop step as recorded in a trace. `step` counts completed
/// epochs (1-based); `b_h` is the post-update hypothesis belief.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub b_h: Vec<f64>,
    pub action: usize,
    /// Raw observation vector (small in both benchmarks).
    pub observation: Vec<f64>,
    pub reward: f64,
    pub base_reward: f64,
    pub hyp_reward: f64,
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub true_hypothesis: usize,
    pub weight: f64,
    pub steps: Vec<StepRecord>,
    /// First step at which the belief crossed the decision threshold.
    pub decision_step: Option<usize>,
    pub decision_hypothesis: Option<usize>,
    pub final_argmax: usize,
    pub crossed: bool,
    /// Steps where the action left the nominal plan, when one exists.
    pub deviation_count: usize,
    pub cumulative_base_reward: f64,
    pub cumulative_hyp_reward: f64,
    pub cumulative_total_reward: f64,
    pub failed: bool,
    pub failure: Option<String>,
}

/// Closed loop: plan, act, evolve the truth, observe, update, record.
/// The planner sees only the belief; ground truth evolves under
/// `true_hypothesis`. Any step error yields a partial record marked failed.
pub fn run_episode<P: Pomdp>(
    problem: &MdhProblem<P>,
    true_hypothesis: usize,
    horizon: usize,
    solver: &SolverConfig,
    seed: u64,
) -> EpisodeRecord {
    assert!(true_hypothesis < problem.num_hypotheses());
    let mut world = derive_rng(seed, &[STREAM_WORLD]);
    let mut planner_rng = derive_rng(seed, &[STREAM_PLANNER]);
    let mut filter_rng = derive_rng(seed, &[STREAM_FILTER]);

    let mut record = EpisodeRecord {
        seed,
        true_hypothesis,
        weight: problem.weight(),
        steps: Vec::with_capacity(horizon),
        decision_step: None,
        decision_hypothesis: None,
        final_argmax: 0,
        crossed: false,
        deviation_count: 0,
        cumulative_base_reward: 0.0,
        cumulative_hyp_reward: 0.0,
        cumulative_total_reward: 0.0,
        failed: false,
        failure: None,
    };

    let true_model = &problem.conditioned()[true_hypothesis];
    let mut belief = match problem.initial_belief(&mut filter_rng) {
        Ok(b) => b,
        Err(e) => {
            record.failed = true;
            record.failure = Some(e.to_string());
            return record;
        }
    };
    let mut state = true_model.initial_state(&mut world);
    let fail = |record: &mut EpisodeRecord, belief: &crate::belief::HybridBelief, msg: String| {
        record.failed = true;
        record.failure = Some(msg);
        record.final_argmax = belief.hypothesis_belief.argmax().0;
        record.crossed = belief.resolved;
    };

    for t in 0..horizon {
        let mut cfg = solver.clone();
        cfg.max_depth = solver.max_depth.min(horizon - t);
        let action = match plan(problem, &belief, &cfg, &mut planner_rng) {
            Ok(a) => a,
            Err(e) => {
                fail(&mut record, &belief, format!("planner: {e}"));
                return record;
            }
        };
        let next_state = true_model.sample_transition(&state, action, &mut world);
        if let Err(detail) = true_model.validate_state(&next_state) {
            fail(&mut record, &belief, detail);
            return record;
        }
        let (obs, base_r) =
            true_model.sample_obs_and_reward(t, &state, action, &next_state, &mut world);
        let next_belief = match mm_update(problem, &belief, action, &obs, &mut filter_rng) {
            Ok(b) => b,
            Err(e) => {
                fail(&mut record, &belief, format!("filter: {e}"));
                return record;
            }
        };
        let probs = next_belief.hypothesis_belief.probabilities();
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let hyp_r = problem.hypothesis_reward(belief.resolved, &next_belief);
        let disc = problem.discount().powi(t as i32);
        record.cumulative_base_reward += disc * base_r;
        record.cumulative_hyp_reward += disc * hyp_r;
        record.cumulative_total_reward += disc * (base_r + problem.weight() * hyp_r);
        if let Some(nominal) = true_model.nominal_action(t) {
            if nominal != action {
                record.deviation_count += 1;
            }
        }
        if next_belief.resolved && !belief.resolved {
            record.decision_step = Some(next_belief.time_step);
            record.decision_hypothesis = Some(next_belief.hypothesis_belief.argmax().0);
        }
        record.steps.push(StepRecord {
            step: next_belief.time_step,
            b_h: probs.to_vec(),
            action,
            observation: obs.iter().copied().collect(),
            reward: base_r + problem.weight() * hyp_r,
            base_reward: base_r,
            hyp_reward: hyp_r,
            resolved: next_belief.resolved,
        });
        state = next_state;
        belief = next_belief;
    }
    record.final_argmax = belief.hypothesis_belief.argmax().0;
    record.crossed = belief.resolved;
    record
}

/// Table-row statistics for one (weight, reward-kind) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellScore {
    pub n: usize,
    pub n_failed: usize,
    pub base_mean: f64,
    pub base_sem: f64,
    /// Over deciding runs only; None when nothing crossed.
    pub steps_mean: Option<f64>,
    pub steps_sem: Option<f64>,
    pub in_time_rate: f64,
    pub late_rate: f64,
    pub deviations_mean: f64,
    pub deviations_sem: f64,
    pub decided_count: usize,
    pub crossed_count: usize,
}

fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn score_campaign(records: &[EpisodeRecord], spec: &ResolutionSpec) -> CellScore {
    assert!(!records.is_empty(), "cannot score an empty campaign");
    let ok: Vec<&EpisodeRecord> = records.iter().filter(|r| !r.failed).collect();
    let n_failed = records.len() - ok.len();
    if ok.is_empty() {
        return CellScore {
            n: records.len(),
            n_failed,
            base_mean: f64::NAN,
            base_sem: f64::NAN,
            steps_mean: None,
            steps_sem: None,
            in_time_rate: 0.0,
            late_rate: 0.0,
            deviations_mean: f64::NAN,
            deviations_sem: f64::NAN,
            decided_count: 0,
            crossed_count: 0,
        };
    }
    let base: Vec<f64> = ok.iter().map(|r| r.cumulative_base_reward).collect();
    let (base_mean, base_sem) = mean_sem(&base);
    let devs: Vec<f64> = ok.iter().map(|r| r.deviation_count as f64).collect();
    let (deviations_mean, deviations_sem) = mean_sem(&devs);

    let steps: Vec<f64> = ok
        .iter()
        .filter_map(|r| r.decision_step.map(|s| s as f64))
        .collect();
    let (steps_mean, steps_sem) = if steps.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_sem(&steps);
        (Some(m), Some(s))
    };

    let in_time = ok
        .iter()
        .filter(|r| {
            r.decision_step.is_some_and(|s| s <= spec.deadline)
                && r.decision_hypothesis == Some(r.true_hypothesis)
        })
        .count();
    let crossers: Vec<&&EpisodeRecord> = ok.iter().filter(|r| r.crossed).collect();
    let late = crossers
        .iter()
        .filter(|r| r.final_argmax == r.true_hypothesis)
        .count();
    let in_time_rate = in_time as f64 / ok.len() as f64;
    let late_rate = if crossers.is_empty() {
        0.0
    } else {
        late as f64 / crossers.len() as f64
    };
    // In-time deciders are eventual deciders; correctness drift strong
    // enough to invert the rates would be a modeling defect worth a crash.
    assert!(
        in_time_rate <= late_rate + 1e-12 || crossers.is_empty(),
        "in-time rate {in_time_rate} exceeds late rate {late_rate}"
    );
    CellScore {
        n: records.len(),
        n_failed,
        base_mean,
        base_sem,
        steps_mean,
        steps_sem,
        in_time_rate,
        late_rate,
        deviations_mean,
        deviations_sem,
        decided_count: steps.len(),
        crossed_count: crossers.len(),
    }
}

#[derive(Debug)]
pub struct SweepCell {
    pub weight: f64,
    pub reward_kind: HypothesisRewardKind,
    pub records: Vec<EpisodeRecord>,
    pub score: CellScore,
}

/// Runs `runs_per_cell` episodes for every weight in the list. Seeds derive
/// from (seed_base, weight index, run index); the true hypothesis is
/// `run % n_H`.
#[allow(clippy::too_many_arguments)]
pub fn sweep_weights<P: Pomdp>(
    base: &P,
    hypotheses: &crate::mdh::HypothesisSet<P::Dynamics>,
    updater: UpdaterConfig,
    resolution: ResolutionSpec,
    reward_kind: HypothesisRewardKind,
    horizon: usize,
    solver: &SolverConfig,
    campaign: &CampaignConfig,
) -> Result<Vec<SweepCell>, HarnessError> {
    campaign.validate().map_err(MdhError::Updater)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(campaign.workers)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let n_h = hypotheses.len();
    let mut cells = Vec::with_capacity(campaign.weight_list.len());
    for (wi, w) in campaign.weight_list.iter().enumerate() {
        let problem = MdhProblem::construct(
            base,
            hypotheses,
            updater.clone(),
            resolution,
            reward_kind,
            *w,
        )?;
        let records: Vec<EpisodeRecord> = pool.install(|| {
            (0..campaign.runs_per_cell)
                .into_par_iter()
                .map(|run| {
                    let seed = derive_seed(campaign.seed_base, &[wi as u64, run as u64]);
                    run_episode(&problem, run % n_h, horizon, solver, seed)
                })
                .collect()
        });
        let score = score_campaign(&records, &resolution);
        cells.push(SweepCell {
            weight: *w,
            reward_kind,
            records,
            score,
        });
    }
    Ok(cells)
}

/// 9 significant digits, period decimal separator, locale-independent.
pub fn fmt9(x: f64) -> String {
    if x.is_nan() {
        "NA".to_string()
    } else {
        format!("{x:.8e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), fmt9)
}

pub fn kind_str(kind: HypothesisRewardKind) -> &'static str {
    match kind {
        HypothesisRewardKind::None => "none",
        HypothesisRewardKind::Entropy => "entropy",
        HypothesisRewardKind::ResolutionTime => "resolution_time",
    }
}

pub const CAMPAIGN_HEADER: &str = "weight,reward_kind,true_hypothesis,seed,failed,decision_step,decision_hypothesis,final_argmax,crossed,deviation_count,cumulative_base_reward,cumulative_hyp_reward,cumulative_total_reward";

pub fn write_campaign_csv(cells: &[SweepCell], path: &Path) -> Result<(), HarnessError> {
    let mut out = String::new();
    out.push_str(CAMPAIGN_HEADER);
    out.push('\n');
    for cell in cells {
        for r in &cell.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                fmt9(cell.weight),
                kind_str(cell.reward_kind),
                r.true_hypothesis,
                r.seed,
                r.failed,
                r.decision_step.map_or("NA".into(), |s| s.to_string()),
                r.decision_hypothesis.map_or("NA".into(), |s| s.to_string()),
                r.final_argmax,
                r.crossed,
                r.deviation_count,
                fmt9(r.cumulative_base_reward),
                fmt9(r.cumulative_hyp_reward),
                fmt9(r.cumulative_total_reward),
            ));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// One file per episode: step, b_H columns, action, reward, resolved.
pub fn write_traces(cells: &[SweepCell], dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    for cell in cells {
        for r in &cell.records {
            let n_h = r.steps.first().map_or(0, |s| s.b_h.len());
            let mut out = String::from("step");
            for i in 1..=n_h {
                out.push_str(&format!(",b_H[{i}]"));
            }
            out.push_str(",action,reward,resolved\n");
            for s in &r.steps {
                out.push_str(&s.step.to_string());
                for p in &s.b_h {
                    out.push(',');
                    out.push_str(&fmt9(*p));
                }
                out.push_str(&format!(",{},{},{}\n", s.action, fmt9(s.reward), s.resolved));
            }
            fs::write(dir.join(format!("{}.csv", r.seed)), out)?;
        }
    }
    Ok(())
}

pub const SUMMARY_HEADER: &str = "weight,reward_kind,n,n_failed,base_reward_mean,base_reward_sem,steps_to_decide_mean,steps_to_decide_sem,in_time_success_rate,late_success_rate,deviations_mean,deviations_sem,decided_count,crossed_count";

pub fn summary_rows(cells: &[SweepCell]) -> String {
    let mut out = String::new();
    for cell in cells {
        let s = &cell.score;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt9(cell.weight),
            kind_str(cell.reward_kind),
            s.n,
            s.n_failed,
            fmt9(s.base_mean),
            fmt9(s.base_sem),
            fmt_opt(s.steps_mean),
            fmt_opt(s.steps_sem),
            fmt9(s.in_time_rate),
            fmt9(s.late_rate),
            fmt9(s.deviations_mean),
            fmt9(s.deviations_sem),
            s.decided_count,
            s.crossed_count,
        ));
    }
    out
}

pub fn write_summary_csv(cells: &[SweepCell], path: &Path) -> Result<(), HarnessError> {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    out.push_str(&summary_rows(cells));
    fs::write(path, out)?;
    Ok(())
}

/// Decision-time scatter: one row per deciding episode.
pub fn write_decision_stats(cells: &[SweepCell], path: &Path) -> Result<(), HarnessError> {
    let mut out =
        String::from("weight,reward_kind,seed,true_hypothesis,decision_step,decision_hypothesis,b_decided_at_decision\n");
    for cell in cells {
        for r in &cell.records {
            let (Some(step), Some(hyp)) = (r.decision_step, r.decision_hypothesis) else {
                continue;
            };
            let b = r
                .steps
                .iter()
                .find(|s| s.step == step)
                .map(|s| s.b_h[hyp])
                .unwrap_or(f64::NAN);
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt9(cell.weight),
                kind_str(cell.reward_kind),
                r.seed,
                r.true_hypothesis,
                step,
                hyp,
                fmt9(b),
            ));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Mean probability-of-truth trajectory per cell, step by step.
pub fn write_mean_traces(cells: &[SweepCell], path: &Path) -> Result<(), HarnessError> {
    let mut out = String::from("weight,reward_kind,step,mean_b_true,mean_b_max\n");
    for cell in cells {
        let ok: Vec<&EpisodeRecord> = cell.records.iter().filter(|r| !r.failed).collect();
        let horizon = ok.iter().map(|r| r.steps.len()).max().unwrap_or(0);
        for t in 0..horizon {
            let mut b_true = 0.0;
            let mut b_max = 0.0;
            let mut count = 0usize;
            for r in &ok {
                if let Some(s) = r.steps.get(t) {
                    b_true += s.b_h[r.true_hypothesis];
                    b_max += s.b_h.iter().cloned().fold(f64::MIN, f64::max);
                    count += 1;
                }
            }
            if count == 0 {
                continue;
            }
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt9(cell.weight),
                kind_str(cell.reward_kind),
                t + 1,
                fmt9(b_true / count as f64),
                fmt9(b_max / count as f64),
            ));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes the full artifact set for one campaign into `dir`.
pub fn write_campaign_outputs(cells: &[SweepCell], dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    write_campaign_csv(cells, &dir.join("campaign.csv"))?;
    write_traces(cells, &dir.join("traces"))?;
    write_summary_csv(cells, &dir.join("summary.csv"))?;
    write_decision_stats(cells, &dir.join("decision_stats.csv"))?;
    write_mean_traces(cells, &dir.join("mean_traces.csv"))?;
    Ok(())
}

/// Console rendering of the summary table.
pub fn render_summary_table(cells: &[SweepCell]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>10}  {:>15}  {:>6}  {:>18}  {:>14}  {:>8}  {:>8}  {:>10}\n",
        "weight", "reward", "n", "base (mean+-sem)", "steps", "in-time", "late", "deviations"
    ));
    for cell in cells {
        let s = &cell.score;
        let steps = match (s.steps_mean, s.steps_sem) {
            (Some(m), Some(e)) => format!("{m:.2}+-{e:.2}"),
            _ => "NA".to_string(),
        };
        out.push_str(&format!(
            "{:>10.3} {:>16} {:>7} {:>11.2}+-{:<6.2} {:>14} {:>7.0}% {:>7.0}% {:>10.2}\n",
            cell.weight,
            kind_str(cell.reward_kind),
            s.n,
            s.base_mean,
            s.base_sem,
            steps,
            s.in_time_rate * 100.0,
            s.late_rate * 100.0,
            s.deviations_mean,
        ));
    }
    out
}

/// Stream-separated writer used by the CLI for line-buffered console output.
pub fn print_line(line: &str) {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let _ = writeln!(lock, "{line}");
}
