//! Rebuilds summary tables from a stored campaign directory. The inputs are
//! the campaign's own artifacts: campaign.csv for episode outcomes,
//! traces/{seed}.csv for per-step beliefs, effective_config.toml for the
//! decision deadline. Nothing is re-simulated.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use mdhp_core::config::load_config;
use mdhp_core::harness::{
    print_line, render_summary_table, score_campaign, write_campaign_outputs, EpisodeRecord,
    StepRecord, SweepCell,
};
use mdhp_core::HypothesisRewardKind;

use crate::CliError;

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

fn parse_field<T: FromStr>(raw: &str, name: &str, path: &Path) -> Result<T, CliError> {
    raw.parse().map_err(|_| {
        usage(format!(
            "{}: cannot parse {name} from `{raw}`",
            path.display()
        ))
    })
}

/// "NA" means absent for integral columns, NaN for reals.
fn parse_opt<T: FromStr>(raw: &str, name: &str, path: &Path) -> Result<Option<T>, CliError> {
    if raw == "NA" {
        Ok(None)
    } else {
        parse_field(raw, name, path).map(Some)
    }
}

fn parse_real(raw: &str, name: &str, path: &Path) -> Result<f64, CliError> {
    if raw == "NA" {
        Ok(f64::NAN)
    } else {
        parse_field(raw, name, path)
    }
}

fn parse_kind(raw: &str, path: &Path) -> Result<HypothesisRewardKind, CliError> {
    match raw {
        "none" => Ok(HypothesisRewardKind::None),
        "entropy" => Ok(HypothesisRewardKind::Entropy),
        "resolution_time" => Ok(HypothesisRewardKind::ResolutionTime),
        other => Err(usage(format!(
            "{}: unknown reward_kind `{other}`",
            path.display()
        ))),
    }
}

fn open_csv(path: &Path, expect_header: &[&str]) -> Result<csv::Reader<std::fs::File>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expect_header {
        return Err(usage(format!(
            "{}: unexpected header `{}`",
            path.display(),
            got.join(",")
        )));
    }
    Ok(reader)
}

/// Loads one stored trace. Belief columns are b_H[1..=n]; the count is taken
/// from the header. Rewards in a trace are totals, so the base/hyp split is
/// not recoverable here and is stored as zero.
fn read_trace(path: &Path) -> Result<Vec<StepRecord>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let well_formed = cols.len() >= 4
        && cols[0] == "step"
        && cols[cols.len() - 3..] == ["action", "reward", "resolved"]
        && cols[1..cols.len() - 3]
            .iter()
            .enumerate()
            .all(|(i, c)| *c == format!("b_H[{}]", i + 1));
    if !well_formed {
        return Err(usage(format!(
            "{}: unexpected header `{}`",
            path.display(),
            cols.join(",")
        )));
    }
    let n_h = cols.len() - 4;
    let mut steps = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| usage(format!("{}: {e}", path.display())))?;
        if row.len() != cols.len() {
            return Err(usage(format!("{}: ragged row", path.display())));
        }
        let mut b_h = Vec::with_capacity(n_h);
        for i in 0..n_h {
            b_h.push(parse_field(&row[1 + i], "b_H", path)?);
        }
        let reward = parse_real(&row[n_h + 2], "reward", path)?;
        steps.push(StepRecord {
            step: parse_field(&row[0], "step", path)?,
            b_h,
            action: parse_field(&row[n_h + 1], "action", path)?,
            observation: Vec::new(),
            reward,
            base_reward: 0.0,
            hyp_reward: 0.0,
            resolved: parse_field(&row[n_h + 3], "resolved", path)?,
        });
    }
    Ok(steps)
}

const CAMPAIGN_COLS: [&str; 13] = [
    "weight",
    "reward_kind",
    "true_hypothesis",
    "seed",
    "failed",
    "decision_step",
    "decision_hypothesis",
    "final_argmax",
    "crossed",
    "deviation_count",
    "cumulative_base_reward",
    "cumulative_hyp_reward",
    "cumulative_total_reward",
];

pub fn cmd_report(campaign_dir: &Path, output: Option<&Path>) -> Result<(), CliError> {
    let cfg = load_config(&campaign_dir.join("effective_config.toml"), &[])?;
    let resolution = cfg.resolved_resolution();

    let campaign_path = campaign_dir.join("campaign.csv");
    let traces_dir = campaign_dir.join("traces");
    let mut reader = open_csv(&campaign_path, &CAMPAIGN_COLS)?;

    // Consecutive rows with the same (weight, reward_kind) form one cell.
    // The grouping key stays textual so exotic weights cannot split a cell
    // through parse-format drift.
    let mut cells: Vec<SweepCell> = Vec::new();
    let mut key: Option<(String, String)> = None;
    let mut records: Vec<EpisodeRecord> = Vec::new();
    let mut flush =
        |key: &Option<(String, String)>, records: &mut Vec<EpisodeRecord>| -> Result<(), CliError> {
            let Some((w, k)) = key else { return Ok(()) };
            let taken = std::mem::take(records);
            cells.push(SweepCell {
                weight: parse_field(w, "weight", &campaign_path)?,
                reward_kind: parse_kind(k, &campaign_path)?,
                score: score_campaign(&taken, &resolution),
                records: taken,
            });
            Ok(())
        };

    for row in reader.records() {
        let row = row.map_err(|e| usage(format!("{}: {e}", campaign_path.display())))?;
        if row.len() != CAMPAIGN_COLS.len() {
            return Err(usage(format!("{}: ragged row", campaign_path.display())));
        }
        let row_key = (row[0].to_string(), row[1].to_string());
        if key.as_ref() != Some(&row_key) {
            flush(&key, &mut records)?;
            key = Some(row_key);
        }
        let seed: u64 = parse_field(&row[3], "seed", &campaign_path)?;
        let trace_path = traces_dir.join(format!("{seed}.csv"));
        let steps = if trace_path.is_file() {
            read_trace(&trace_path)?
        } else {
            Vec::new()
        };
        records.push(EpisodeRecord {
            seed,
            true_hypothesis: parse_field(&row[2], "true_hypothesis", &campaign_path)?,
            weight: parse_field(&row[0], "weight", &campaign_path)?,
            steps,
            decision_step: parse_opt(&row[5], "decision_step", &campaign_path)?,
            decision_hypothesis: parse_opt(&row[6], "decision_hypothesis", &campaign_path)?,
            final_argmax: parse_field(&row[7], "final_argmax", &campaign_path)?,
            crossed: parse_field(&row[8], "crossed", &campaign_path)?,
            deviation_count: parse_field(&row[9], "deviation_count", &campaign_path)?,
            cumulative_base_reward: parse_real(&row[10], "cumulative_base_reward", &campaign_path)?,
            cumulative_hyp_reward: parse_real(&row[11], "cumulative_hyp_reward", &campaign_path)?,
            cumulative_total_reward: parse_real(
                &row[12],
                "cumulative_total_reward",
                &campaign_path,
            )?,
            failed: parse_field(&row[4], "failed", &campaign_path)?,
            failure: None,
        });
    }
    flush(&key, &mut records)?;
    if cells.is_empty() {
        return Err(usage(format!(
            "{}: no episode rows",
            campaign_path.display()
        )));
    }

    let report_dir: PathBuf = output.map_or_else(|| campaign_dir.join("report"), Path::to_path_buf);
    write_campaign_outputs(&cells, &report_dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    print_line(&render_summary_table(&cells));
    print_line(&format!("wrote {}", report_dir.display()));
    Ok(())
}
