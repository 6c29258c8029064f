//! Per-trial records and report emission. One JSON line per trial, plus a
//! CSV of mean/min/max per metric; both byte-stable for a given report so
//! replays can be compared with a plain diff.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Everything measured in one trial. Counters only — ratios are left to
/// the summary so records stay exact and trivially comparable.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    /// Fatal error for this trial, if any; all other fields are zero then.
    pub error: Option<String>,
    pub nodes: u64,
    pub edges: u64,
    pub component: u64,
    pub shared_links: u64,
    pub path_links: u64,
    pub group_keys: u64,
    pub clusters: u64,
    pub dissolved: u64,
    pub uncovered: u64,
    pub covered: u64,
    pub formation_violations: u64,
    pub rounds_ok: u64,
    pub rounds_rejected_seeds: u64,
    pub rounds_rejected_shares: u64,
    pub rounds_aborted: u64,
    pub rounds_skipped_keys: u64,
    pub rounds_skipped_magnitude: u64,
    pub efficient_rounds: u64,
    pub retries: u64,
    pub hello_messages: u64,
    pub join_messages: u64,
    pub seed_broadcasts: u64,
    pub share_unicasts: u64,
    pub blinded_broadcasts: u64,
    pub convergecast_messages: u64,
    pub multiplications: u64,
    pub divisions: u64,
    pub server_total: i128,
    pub covered_sum: i128,
    pub exact: bool,
    pub attacked_rounds: u64,
    pub attack_targets: u64,
    pub attack_successes: u64,
    pub attack_rejected: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub master_seed: u64,
    pub trials: Vec<TrialRecord>,
}

impl ExperimentReport {
    /// A batch misbehaved if any trial errored out or any completed trial
    /// failed the exactness invariant.
    pub fn has_violations(&self) -> bool {
        self.trials.iter().any(|t| {
            t.error.is_some() || !t.exact || t.formation_violations > 0
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub metric: &'static str,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

type Extract = fn(&TrialRecord) -> f64;

const METRICS: &[(&str, Extract)] = &[
    ("nodes", |t| t.nodes as f64),
    ("edges", |t| t.edges as f64),
    ("component", |t| t.component as f64),
    ("shared_links", |t| t.shared_links as f64),
    ("path_links", |t| t.path_links as f64),
    ("group_keys", |t| t.group_keys as f64),
    ("clusters", |t| t.clusters as f64),
    ("dissolved", |t| t.dissolved as f64),
    ("uncovered", |t| t.uncovered as f64),
    ("covered", |t| t.covered as f64),
    ("formation_violations", |t| t.formation_violations as f64),
    ("rounds_ok", |t| t.rounds_ok as f64),
    ("rounds_rejected_seeds", |t| t.rounds_rejected_seeds as f64),
    ("rounds_rejected_shares", |t| t.rounds_rejected_shares as f64),
    ("rounds_aborted", |t| t.rounds_aborted as f64),
    ("rounds_skipped_keys", |t| t.rounds_skipped_keys as f64),
    ("rounds_skipped_magnitude", |t| t.rounds_skipped_magnitude as f64),
    ("efficient_rounds", |t| t.efficient_rounds as f64),
    ("retries", |t| t.retries as f64),
    ("hello_messages", |t| t.hello_messages as f64),
    ("join_messages", |t| t.join_messages as f64),
    ("seed_broadcasts", |t| t.seed_broadcasts as f64),
    ("share_unicasts", |t| t.share_unicasts as f64),
    ("blinded_broadcasts", |t| t.blinded_broadcasts as f64),
    ("convergecast_messages", |t| t.convergecast_messages as f64),
    ("multiplications", |t| t.multiplications as f64),
    ("divisions", |t| t.divisions as f64),
    ("server_total", |t| t.server_total as f64),
    ("covered_sum", |t| t.covered_sum as f64),
    ("exact", |t| if t.exact { 1.0 } else { 0.0 }),
    ("attacked_rounds", |t| t.attacked_rounds as f64),
    ("attack_targets", |t| t.attack_targets as f64),
    ("attack_successes", |t| t.attack_successes as f64),
    ("attack_rejected", |t| t.attack_rejected as f64),
];

/// Mean/min/max of every metric over the non-errored trials.
pub fn summarize(report: &ExperimentReport) -> Vec<SummaryRow> {
    let usable: Vec<&TrialRecord> =
        report.trials.iter().filter(|t| t.error.is_none()).collect();
    METRICS
        .iter()
        .map(|&(metric, extract)| {
            let values: Vec<f64> = usable.iter().map(|t| extract(t)).collect();
            let (mean, min, max) = if values.is_empty() {
                (0.0, 0.0, 0.0)
            } else {
                let sum: f64 = values.iter().sum();
                let min = values.iter().copied().fold(f64::INFINITY, f64::min);
                let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (sum / values.len() as f64, min, max)
            };
            SummaryRow { metric, mean, min, max }
        })
        .collect()
}

pub fn render_jsonl(report: &ExperimentReport) -> String {
    let mut out = String::new();
    for trial in &report.trials {
        out.push_str(&serde_json::to_string(trial).expect("plain-data record serializes"));
        out.push('\n');
    }
    out
}

pub fn render_summary_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("metric,mean,min,max\n");
    for row in summarize(report) {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            row.metric, row.mean, row.min, row.max
        ));
    }
    out
}

/// Write both report files under `directory`, creating it if needed.
/// Returns the two paths (trials file, summary file).
pub fn write_reports(
    report: &ExperimentReport,
    directory: &Path,
    trials_file: &str,
    summary_file: &str,
) -> std::io::Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(directory)?;
    let trials_path = directory.join(trials_file);
    let summary_path = directory.join(summary_file);
    let mut f = fs::File::create(&trials_path)?;
    f.write_all(render_jsonl(report).as_bytes())?;
    let mut f = fs::File::create(&summary_path)?;
    f.write_all(render_summary_csv(report).as_bytes())?;
    Ok((trials_path, summary_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(trial: u64, exact: bool) -> TrialRecord {
        TrialRecord {
            trial,
            clusters: 4 + trial,
            server_total: 100 + trial as i128,
            covered_sum: if exact { 100 + trial as i128 } else { 0 },
            exact,
            ..TrialRecord::default()
        }
    }

    #[test]
    fn jsonl_has_one_line_per_trial() {
        let report = ExperimentReport {
            master_seed: 5,
            trials: vec![record(0, true), record(1, true), record(2, true)],
        };
        let text = render_jsonl(&report);
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().starts_with("{\"trial\":0,"));
    }

    #[test]
    fn empty_report_is_headers_only() {
        let report = ExperimentReport { master_seed: 5, trials: vec![] };
        assert_eq!(render_jsonl(&report), "");
        let csv = render_summary_csv(&report);
        assert!(csv.starts_with("metric,mean,min,max\n"));
        assert_eq!(csv.lines().count(), 1 + METRICS.len());
    }

    #[test]
    fn summary_matches_hand_computation() {
        let report = ExperimentReport {
            master_seed: 5,
            trials: vec![record(0, true), record(2, true)],
        };
        let rows = summarize(&report);
        let clusters = rows.iter().find(|r| r.metric == "clusters").unwrap();
        assert_eq!((clusters.mean, clusters.min, clusters.max), (5.0, 4.0, 6.0));
        let exact = rows.iter().find(|r| r.metric == "exact").unwrap();
        assert_eq!(exact.mean, 1.0);
    }

    #[test]
    fn rendering_is_byte_stable() {
        let report = ExperimentReport {
            master_seed: 9,
            trials: vec![record(0, true), record(1, false)],
        };
        assert_eq!(render_jsonl(&report), render_jsonl(&report));
        assert_eq!(render_summary_csv(&report), render_summary_csv(&report));
        assert!(report.has_violations());
    }

    #[test]
    fn errored_trials_are_excluded_from_summaries() {
        let mut bad = TrialRecord::default();
        bad.trial = 1;
        bad.error = Some("boom".into());
        let report = ExperimentReport { master_seed: 1, trials: vec![record(0, true), bad] };
        let rows = summarize(&report);
        let clusters = rows.iter().find(|r| r.metric == "clusters").unwrap();
        assert_eq!(clusters.mean, 4.0);
        assert!(report.has_violations());
    }
}
