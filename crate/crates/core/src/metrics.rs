//! Success ratios, Max | Mean step statistics and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::builder::RoundKind;
use crate::memory::MemoryStrategy;
use crate::runner::{RoundResult, SingleStepRun, StepRecord, Terminal};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("no rounds to aggregate")]
    Empty,
    #[error("cannot write report {path}: {message}")]
    Write { path: String, message: String },
    #[error("cannot read report {path}: {message}")]
    Read { path: String, message: String },
}

/// Which decision a success ratio counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Association,
    Deduction,
}

/// `T+ / T` over the records whose scheduled concept is `concept`. Deduction
/// only counts records where a deduction was made. `None` when `T = 0`.
pub fn success_ratio(records: &[StepRecord], concept: &str, decision: Decision) -> Option<f64> {
    let (t, plus) = tally(records.iter().filter(|r| r.concept == concept), decision);
    (t > 0).then(|| plus as f64 / t as f64)
}

fn tally<'a>(records: impl Iterator<Item = &'a StepRecord>, decision: Decision) -> (usize, usize) {
    records.fold((0, 0), |(t, plus), r| match decision {
        Decision::Association => (t + 1, plus + usize::from(r.association_correct)),
        Decision::Deduction if r.deduction_performed => (t + 1, plus + usize::from(r.deduction_correct)),
        Decision::Deduction => (t, plus),
    })
}

/// Max and arithmetic mean of the final step counts, ignoring rounds that
/// ended on a transport failure.
pub fn step_stats(rounds: &[&RoundResult]) -> Result<(usize, f64), MetricsError> {
    let counts: Vec<usize> = rounds
        .iter()
        .filter(|r| r.terminal != Terminal::Transport)
        .map(|r| r.final_step_count)
        .collect();
    step_stats_of(&counts)
}

pub fn step_stats_of(counts: &[usize]) -> Result<(usize, f64), MetricsError> {
    let max = *counts.iter().max().ok_or(MetricsError::Empty)?;
    let sum: usize = counts.iter().sum();
    Ok((max, sum as f64 / counts.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptStats {
    pub kind: RoundKind,
    /// Concept, or `a-b` for an asynchronous concept pool.
    pub cell: String,
    pub backend: String,
    pub strategy: MemoryStrategy,
    pub trials: usize,
    pub successes: usize,
    pub success_ratio: Option<f64>,
    pub deduction_trials: usize,
    pub deduction_successes: usize,
    pub deduction_ratio: Option<f64>,
    pub rounds: usize,
    pub max_step: Option<usize>,
    pub mean_step: Option<f64>,
    pub transport_failures: usize,
    pub exhausted: usize,
}

/// Equal-weight average over the cells of one (kind, backend, strategy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub kind: RoundKind,
    pub backend: String,
    pub strategy: MemoryStrategy,
    pub cells: usize,
    pub success_ratio: Option<f64>,
    pub deduction_ratio: Option<f64>,
    pub max_step: Option<f64>,
    pub mean_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportMeta {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub meta: ReportMeta,
    pub weighting: String,
    pub cells: Vec<ConceptStats>,
    pub summaries: Vec<SummaryRow>,
}

type CellKey = (RoundKind, String, String, MemoryStrategy);

/// Aggregates chain rounds and single-step runs into per-cell statistics.
/// Input order does not matter: rounds are grouped and sorted by round id.
pub fn aggregate(rounds: &[RoundResult], singles: &[SingleStepRun], meta: ReportMeta) -> Report {
    let mut chain_cells: BTreeMap<CellKey, Vec<&RoundResult>> = BTreeMap::new();
    for r in rounds {
        let key = (r.plan.kind, r.plan.cell_label(), r.backend.clone(), r.strategy);
        chain_cells.entry(key).or_default().push(r);
    }
    let mut single_cells: BTreeMap<CellKey, Vec<&SingleStepRun>> = BTreeMap::new();
    for s in singles {
        let key = (RoundKind::SingleStep, s.concept.clone(), s.backend.clone(), s.strategy);
        single_cells.entry(key).or_default().push(s);
    }

    let mut cells = Vec::new();
    for ((kind, cell, backend, strategy), mut rs) in chain_cells {
        rs.sort_by_key(|r| r.round_id);
        let scored: Vec<&RoundResult> = rs.iter().copied().filter(|r| r.terminal != Terminal::Transport).collect();
        let steps = scored.iter().flat_map(|r| r.steps.iter());
        let (trials, successes) = tally(steps.clone(), Decision::Association);
        let (deduction_trials, deduction_successes) = tally(steps, Decision::Deduction);
        let stats = step_stats(&scored).ok();
        cells.push(ConceptStats {
            kind,
            cell,
            backend,
            strategy,
            trials,
            successes,
            success_ratio: ratio(successes, trials),
            deduction_trials,
            deduction_successes,
            deduction_ratio: ratio(deduction_successes, deduction_trials),
            rounds: scored.len(),
            max_step: stats.map(|s| s.0),
            mean_step: stats.map(|s| s.1),
            transport_failures: rs.len() - scored.len(),
            exhausted: scored.iter().filter(|r| r.terminal == Terminal::Exhausted).count(),
        });
    }
    for ((kind, cell, backend, strategy), runs) in single_cells {
        let records = runs.iter().flat_map(|s| s.records.iter());
        let (trials, successes) = tally(records.clone(), Decision::Association);
        let (deduction_trials, deduction_successes) = tally(records, Decision::Deduction);
        cells.push(ConceptStats {
            kind,
            cell,
            backend,
            strategy,
            trials,
            successes,
            success_ratio: ratio(successes, trials),
            deduction_trials,
            deduction_successes,
            deduction_ratio: ratio(deduction_successes, deduction_trials),
            rounds: 0,
            max_step: None,
            mean_step: None,
            transport_failures: runs.iter().map(|s| s.transport_failures).sum(),
            exhausted: runs.iter().map(|s| s.exhausted).sum(),
        });
    }
    cells.sort_by(|a, b| {
        (kind_rank(a.kind), &a.backend, a.strategy, &a.cell).cmp(&(kind_rank(b.kind), &b.backend, b.strategy, &b.cell))
    });
    Report::from_cells(meta, cells)
}

fn kind_rank(k: RoundKind) -> u8 {
    match k {
        RoundKind::SingleStep => 0,
        RoundKind::Synchronous => 1,
        RoundKind::Asynchronous => 2,
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, sum) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| sum / n as f64)
}

impl Report {
    /// Builds a report from cells, deriving the summary rows.
    pub fn from_cells(meta: ReportMeta, cells: Vec<ConceptStats>) -> Report {
        let mut groups: BTreeMap<(u8, RoundKind, String, MemoryStrategy), Vec<&ConceptStats>> = BTreeMap::new();
        for c in &cells {
            groups
                .entry((kind_rank(c.kind), c.kind, c.backend.clone(), c.strategy))
                .or_default()
                .push(c);
        }
        let summaries = groups
            .into_iter()
            .map(|((_, kind, backend, strategy), cs)| SummaryRow {
                kind,
                backend,
                strategy,
                cells: cs.len(),
                success_ratio: mean(cs.iter().filter_map(|c| c.success_ratio)),
                deduction_ratio: mean(cs.iter().filter_map(|c| c.deduction_ratio)),
                max_step: mean(cs.iter().filter_map(|c| c.max_step.map(|m| m as f64))),
                mean_step: mean(cs.iter().filter_map(|c| c.mean_step)),
            })
            .collect();
        Report {
            meta,
            weighting: "equal-category".into(),
            cells,
            summaries,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Report, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// One row per cell; summaries are recomputed on read.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.cells.is_empty() {
            w.write_record(CSV_HEADER).expect("in-memory write");
        }
        for c in &self.cells {
            w.serialize(CsvRow::new(&self.meta, c)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn from_csv(text: &str) -> Result<Report, csv::Error> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut meta = ReportMeta::default();
        let mut cells = Vec::new();
        for row in r.deserialize::<CsvRow>() {
            let (m, stats) = row?.split();
            meta = m;
            cells.push(stats);
        }
        Ok(Report::from_cells(meta, cells))
    }

    /// Wide tables: chain cells as `Max | Mean` column pairs per
    /// backend/strategy, single-step cells as success ratios.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# Association report\n");
        let _ = writeln!(
            out,
            "config `{}`, seed {}, summaries use {} weighting\n",
            self.meta.config_hash, self.meta.seed, self.weighting
        );
        for kind in [RoundKind::SingleStep, RoundKind::Synchronous, RoundKind::Asynchronous] {
            let cells: Vec<&ConceptStats> = self.cells.iter().filter(|c| c.kind == kind).collect();
            if cells.is_empty() {
                continue;
            }
            let mut columns: Vec<(String, MemoryStrategy)> =
                cells.iter().map(|c| (c.backend.clone(), c.strategy)).collect();
            columns.sort();
            columns.dedup();
            let mut rows: Vec<&str> = cells.iter().map(|c| c.cell.as_str()).collect();
            rows.sort();
            rows.dedup();
            let find = |row: &str, col: &(String, MemoryStrategy)| {
                cells.iter().find(|c| c.cell == row && c.backend == col.0 && c.strategy == col.1)
            };
            let summary = |col: &(String, MemoryStrategy)| {
                self.summaries.iter().find(|s| s.kind == kind && s.backend == col.0 && s.strategy == col.1)
            };
            match kind {
                RoundKind::SingleStep => {
                    let _ = writeln!(out, "## Single-step success ratio (association / deduction)\n");
                    let mut head = String::from("| Concept |");
                    let mut rule = String::from("|---|");
                    for (b, s) in &columns {
                        let _ = write!(head, " {b}/{s} Assoc | {b}/{s} Deduct |");
                        rule.push_str("---:|---:|");
                    }
                    let _ = writeln!(out, "{head}\n{rule}");
                    for row in &rows {
                        let mut line = format!("| {row} |");
                        for col in &columns {
                            match find(row, col) {
                                Some(c) => {
                                    let _ = write!(line, " {} | {} |", fmt_ratio(c.success_ratio), fmt_ratio(c.deduction_ratio));
                                }
                                None => line.push_str(" - | - |"),
                            }
                        }
                        let _ = writeln!(out, "{line}");
                    }
                    let mut line = String::from("| **Mean** |");
                    for col in &columns {
                        let s = summary(col);
                        let _ = write!(
                            line,
                            " {} | {} |",
                            fmt_ratio(s.and_then(|s| s.success_ratio)),
                            fmt_ratio(s.and_then(|s| s.deduction_ratio))
                        );
                    }
                    let _ = writeln!(out, "{line}\n");
                }
                _ => {
                    let title = if kind == RoundKind::Synchronous { "Synchronous" } else { "Asynchronous" };
                    let _ = writeln!(out, "## {title} association (Max | Mean step)\n");
                    let mut head = String::from("| Concept |");
                    let mut rule = String::from("|---|");
                    for (b, s) in &columns {
                        let _ = write!(head, " {b}/{s} Max | {b}/{s} Mean |");
                        rule.push_str("---:|---:|");
                    }
                    let _ = writeln!(out, "{head}\n{rule}");
                    for row in &rows {
                        let mut line = format!("| {row} |");
                        for col in &columns {
                            match find(row, col).filter(|c| c.max_step.is_some()) {
                                Some(c) => {
                                    let _ = write!(line, " {} |", step_cell(c.max_step.unwrap_or(0), c.mean_step.unwrap_or(0.0)));
                                }
                                None => line.push_str(" - | - |"),
                            }
                        }
                        let _ = writeln!(out, "{line}");
                    }
                    let mut line = String::from("| **Mean** |");
                    for col in &columns {
                        match summary(col) {
                            Some(SummaryRow { max_step: Some(m), mean_step: Some(a), .. }) => {
                                let _ = write!(line, " {m:.2} | {a:.2} |");
                            }
                            _ => line.push_str(" - | - |"),
                        }
                    }
                    let _ = writeln!(out, "{line}\n");
                }
            }
        }
        out
    }

    pub fn write(&self, path: &Path, format: ReportFormat) -> Result<(), MetricsError> {
        let text = match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Markdown => self.to_markdown(),
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| MetricsError::Write {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        }
        std::fs::write(path, text).map_err(|e| MetricsError::Write {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Report, MetricsError> {
        let err = |message: String| MetricsError::Read { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        if path.extension().is_some_and(|e| e == "csv") {
            Report::from_csv(&text).map_err(|e| err(e.to_string()))
        } else {
            Report::from_json(&text).map_err(|e| err(e.to_string()))
        }
    }
}

/// The `Max | Mean` table cell, mean to two decimals.
pub fn step_cell(max: usize, mean: f64) -> String {
    format!("{max} | {mean:.2}")
}

fn fmt_ratio(r: Option<f64>) -> String {
    r.map_or_else(|| "-".to_string(), |r| format!("{r:.3}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format '{other}'")),
        }
    }
}

const CSV_HEADER: [&str; 17] = [
    "config_hash", "seed", "kind", "cell", "backend", "strategy", "trials", "successes",
    "success_ratio", "deduction_trials", "deduction_successes", "deduction_ratio", "rounds",
    "max_step", "mean_step", "transport_failures", "exhausted",
];

#[derive(Serialize, Deserialize)]
struct CsvRow {
    config_hash: String,
    seed: u64,
    kind: RoundKind,
    cell: String,
    backend: String,
    strategy: MemoryStrategy,
    trials: usize,
    successes: usize,
    success_ratio: Option<f64>,
    deduction_trials: usize,
    deduction_successes: usize,
    deduction_ratio: Option<f64>,
    rounds: usize,
    max_step: Option<usize>,
    mean_step: Option<f64>,
    transport_failures: usize,
    exhausted: usize,
}

impl CsvRow {
    fn new(meta: &ReportMeta, c: &ConceptStats) -> Self {
        CsvRow {
            config_hash: meta.config_hash.clone(),
            seed: meta.seed,
            kind: c.kind,
            cell: c.cell.clone(),
            backend: c.backend.clone(),
            strategy: c.strategy,
            trials: c.trials,
            successes: c.successes,
            success_ratio: c.success_ratio,
            deduction_trials: c.deduction_trials,
            deduction_successes: c.deduction_successes,
            deduction_ratio: c.deduction_ratio,
            rounds: c.rounds,
            max_step: c.max_step,
            mean_step: c.mean_step,
            transport_failures: c.transport_failures,
            exhausted: c.exhausted,
        }
    }

    fn split(self) -> (ReportMeta, ConceptStats) {
        (
            ReportMeta { config_hash: self.config_hash, seed: self.seed },
            ConceptStats {
                kind: self.kind,
                cell: self.cell,
                backend: self.backend,
                strategy: self.strategy,
                trials: self.trials,
                successes: self.successes,
                success_ratio: self.success_ratio,
                deduction_trials: self.deduction_trials,
                deduction_successes: self.deduction_successes,
                deduction_ratio: self.deduction_ratio,
                rounds: self.rounds,
                max_step: self.max_step,
                mean_step: self.mean_step,
                transport_failures: self.transport_failures,
                exhausted: self.exhausted,
            },
        )
    }
}

impl Default for ConceptStats {
    fn default() -> Self {
        ConceptStats {
            kind: RoundKind::Synchronous,
            cell: String::new(),
            backend: String::new(),
            strategy: MemoryStrategy::NoM,
            trials: 0,
            successes: 0,
            success_ratio: None,
            deduction_trials: 0,
            deduction_successes: 0,
            deduction_ratio: None,
            rounds: 0,
            max_step: None,
            mean_step: None,
            transport_failures: 0,
            exhausted: 0,
        }
    }
}

/// One line of a `--compare` diff.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellDiff {
    pub kind: RoundKind,
    pub cell: String,
    pub backend: String,
    pub strategy: MemoryStrategy,
    pub mean_step: (Option<f64>, Option<f64>),
    pub max_step: (Option<usize>, Option<usize>),
    pub success_ratio: (Option<f64>, Option<f64>),
}

pub fn compare(a: &Report, b: &Report) -> Vec<CellDiff> {
    let key = |c: &ConceptStats| (kind_rank(c.kind), c.cell.clone(), c.backend.clone(), c.strategy);
    let mut all: BTreeMap<_, (Option<&ConceptStats>, Option<&ConceptStats>)> = BTreeMap::new();
    for c in &a.cells {
        all.entry(key(c)).or_default().0 = Some(c);
    }
    for c in &b.cells {
        all.entry(key(c)).or_default().1 = Some(c);
    }
    all.into_values()
        .map(|(x, y)| {
            let any = x.or(y).expect("one side present");
            CellDiff {
                kind: any.kind,
                cell: any.cell.clone(),
                backend: any.backend.clone(),
                strategy: any.strategy,
                mean_step: (x.and_then(|c| c.mean_step), y.and_then(|c| c.mean_step)),
                max_step: (x.and_then(|c| c.max_step), y.and_then(|c| c.max_step)),
                success_ratio: (x.and_then(|c| c.success_ratio), y.and_then(|c| c.success_ratio)),
            }
        })
        .collect()
}

pub fn render_compare(diffs: &[CellDiff]) -> String {
    let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
    let d = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) => format!("{:+.2}", b - a),
        _ => "-".to_string(),
    };
    let mut out = String::from("| Kind | Cell | Backend/Strategy | Mean A | Mean B | Δ Mean | Ratio A | Ratio B | Δ Ratio |\n|---|---|---|---:|---:|---:|---:|---:|---:|\n");
    for x in diffs {
        let _ = writeln!(
            out,
            "| {:?} | {} | {}/{} | {} | {} | {} | {} | {} | {} |",
            x.kind,
            x.cell,
            x.backend,
            x.strategy,
            f(x.mean_step.0),
            f(x.mean_step.1),
            d(x.mean_step.0, x.mean_step.1),
            f(x.success_ratio.0),
            f(x.success_ratio.1),
            d(x.success_ratio.0, x.success_ratio.1),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::OptionSlot;
    use crate::corpus::SampleId;
    use std::collections::BTreeSet;

    fn record(concept: &str, ok: bool, deduced: Option<bool>) -> StepRecord {
        StepRecord {
            t: 0,
            concept: concept.into(),
            query: SampleId::from("q"),
            option1: SampleId::from("a"),
            option2: SampleId::from("b"),
            correct_option: OptionSlot::Option1,
            chosen_option: Some(if ok { OptionSlot::Option1 } else { OptionSlot::Option2 }),
            association_correct: ok,
            deduction_performed: deduced.is_some(),
            deduced: BTreeSet::new(),
            deduction_correct: deduced.unwrap_or(false),
            prompt_memory: String::new(),
            raw_association: vec![],
            raw_deduction: None,
            votes: None,
            evidence_text: None,
            latency_ms: 0,
        }
    }

    #[test]
    fn success_ratio_examples() {
        let rs = vec![
            record("metal", true, Some(true)),
            record("metal", true, Some(false)),
            record("metal", true, Some(true)),
            record("metal", false, None),
            record("furry", false, None),
        ];
        assert_eq!(success_ratio(&rs, "metal", Decision::Association), Some(0.75));
        assert_eq!(success_ratio(&rs[..3], "metal", Decision::Association), Some(1.0));
        assert_eq!(success_ratio(&rs, "ripe", Decision::Association), None);
        assert_eq!(success_ratio(&rs, "metal", Decision::Deduction), Some(2.0 / 3.0));
    }

    #[test]
    fn step_stats_examples() {
        assert_eq!(step_stats_of(&[3, 5, 7]).unwrap(), (7, 5.0));
        assert_eq!(step_stats_of(&[500, 500]).unwrap(), (500, 500.0));
        assert_eq!(step_stats_of(&[0]).unwrap(), (0, 0.0));
        assert!(step_stats_of(&[]).is_err());
        assert_eq!(step_cell(7, 5.0), "7 | 5.00");
    }

    fn cell(name: &str, mean: Option<f64>) -> ConceptStats {
        ConceptStats {
            cell: name.into(),
            backend: "oracle".into(),
            trials: 4,
            successes: 3,
            success_ratio: Some(0.75),
            rounds: 3,
            max_step: mean.map(|m| m as usize + 2),
            mean_step: mean,
            ..ConceptStats::default()
        }
    }

    #[test]
    fn json_csv_json_round_trip() {
        let report = Report::from_cells(
            ReportMeta { config_hash: "abc".into(), seed: 3 },
            vec![cell("metal", Some(5.0)), cell("furry", Some(1.0 / 3.0)), cell("ripe", None)],
        );
        let json = report.to_json();
        let back = Report::from_csv(&Report::from_json(&json).unwrap().to_csv()).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.to_json(), json);
    }

    #[test]
    fn empty_report_is_valid() {
        let r = Report::from_cells(ReportMeta::default(), vec![]);
        assert_eq!(Report::from_json(&r.to_json()).unwrap(), r);
        assert_eq!(Report::from_csv(&r.to_csv()).unwrap(), r);
        assert!(r.to_markdown().starts_with("# Association report"));
    }

    #[test]
    fn markdown_uses_max_mean_cells() {
        let mut c = cell("metal", Some(5.0));
        c.max_step = Some(7);
        let md = Report::from_cells(ReportMeta::default(), vec![c]).to_markdown();
        assert!(md.contains("| metal | 7 | 5.00 |"), "{md}");
    }

    #[test]
    fn compare_pairs_cells() {
        let a = Report::from_cells(ReportMeta::default(), vec![cell("metal", Some(2.0))]);
        let b = Report::from_cells(ReportMeta::default(), vec![cell("metal", Some(3.5)), cell("furry", Some(1.0))]);
        let d = compare(&a, &b);
        assert_eq!(d.len(), 2);
        let metal = d.iter().find(|x| x.cell == "metal").unwrap();
        assert_eq!(metal.mean_step, (Some(2.0), Some(3.5)));
        assert!(render_compare(&d).contains("+1.50"));
    }
}
