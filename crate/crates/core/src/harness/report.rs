use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ReportFormat;
use super::metrics::AttackBlock;
use crate::data::SymmetryElement;
use crate::error::Result;

/// Metrics for one classifier of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    /// `default`, `zk-single`, `zk-two`, `pk-group`, or
    /// `zk-single/no-inversion`.
    pub classifier: String,
    pub default_accuracy: f64,
    pub agree: Option<usize>,
    pub disagree: Option<usize>,
    pub split_count: usize,
    /// Group vote only: accuracy of each variant's own label, in vote order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant_accuracy: Option<[f64; 4]>,
    /// Group vote only: correct and backed by at least two variants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreed_accuracy: Option<f64>,
    pub attacks: Vec<AttackBlock>,
}

impl ClassifierReport {
    pub fn new(classifier: impl Into<String>, default_accuracy: f64, split_count: usize) -> Self {
        Self {
            classifier: classifier.into(),
            default_accuracy,
            agree: None,
            disagree: None,
            split_count,
            variant_accuracy: None,
            agreed_accuracy: None,
            attacks: Vec::new(),
        }
    }

    pub fn with_invariance(mut self, (agree, disagree): (usize, usize)) -> Self {
        self.agree = Some(agree);
        self.disagree = Some(disagree);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub mode: String,
    pub seed: u64,
    pub n_eval_samples: usize,
    pub classifiers: Vec<ClassifierReport>,
    /// Seconds per stage.
    pub wall_time: BTreeMap<String, f64>,
}

impl ExperimentReport {
    pub fn classifier(&self, name: &str) -> Option<&ClassifierReport> {
        self.classifiers.iter().find(|c| c.classifier == name)
    }
}

pub const CSV_COLUMNS: [&str; 13] = [
    "dataset",
    "classifier",
    "attack",
    "default_acc",
    "adv_acc",
    "mean_l2",
    "mean_linf",
    "n_eval",
    "n_success",
    "n_invalid",
    "agree",
    "disagree",
    "split_count",
];

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// `attack:norm`, with `@start` for attacks not started from the original.
pub fn attack_label(b: &AttackBlock) -> String {
    let mut s = format!("{}:{}", b.attack, b.norm);
    if b.start != SymmetryElement::Id {
        s.push('@');
        s.push_str(b.start.name());
    }
    s
}

/// One row per (classifier, attack); a classifier without attacks gets a
/// single row with an empty attack cell. Undefined values are empty cells.
pub fn csv_rows(report: &ExperimentReport) -> Vec<[String; 13]> {
    let mut rows = Vec::new();
    for c in &report.classifiers {
        let base = |attack: String, b: Option<&AttackBlock>| -> [String; 13] {
            [
                report.dataset.clone(),
                c.classifier.clone(),
                attack,
                c.default_accuracy.to_string(),
                cell(b.and_then(|b| b.adversarial_accuracy)),
                cell(b.and_then(|b| b.mean_l2)),
                cell(b.and_then(|b| b.mean_linf)),
                cell(b.map(|b| b.n_attacked)),
                cell(b.map(|b| b.n_success)),
                cell(b.map(|b| b.n_invalid)),
                cell(c.agree),
                cell(c.disagree),
                c.split_count.to_string(),
            ]
        };
        if c.attacks.is_empty() {
            rows.push(base(String::new(), None));
        }
        for b in &c.attacks {
            rows.push(base(attack_label(b), Some(b)));
        }
    }
    rows
}

pub fn write_csv<W: Write>(report: &ExperimentReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_COLUMNS)?;
    for row in csv_rows(report) {
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(report: &ExperimentReport, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, report)?;
    writeln!(w)?;
    Ok(())
}

pub fn report_to_string(report: &ExperimentReport, format: ReportFormat) -> Result<String> {
    let mut buf = Vec::new();
    match format {
        ReportFormat::Csv => write_csv(report, &mut buf)?,
        ReportFormat::Json => write_json(report, &mut buf)?,
    }
    Ok(String::from_utf8(buf).expect("reports are UTF-8"))
}

/// Writes the report to `path`.
pub fn emit_report(report: &ExperimentReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    match format {
        ReportFormat::Csv => write_csv(report, file),
        ReportFormat::Json => write_json(report, file),
    }
}

pub fn read_report_json(path: impl AsRef<Path>) -> Result<ExperimentReport> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}
