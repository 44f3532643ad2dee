//! CSV outputs. Every file starts with comment lines naming the resolved
//! configuration hash and the dataset fingerprint; the body is plain CSV.

use std::fs;
use std::io;
use std::path::Path;

use ctrsmf_core::evaluate::{LeakRow, SweepCell};
use serde::{Deserialize, Serialize};
use ctrsmf_core::{Fingerprint, ObjectiveTerms, RecallReport, TrainTrace, Variant};

/// Comment lines written above the CSV header.
#[derive(Clone, Debug, PartialEq)]
pub struct Preamble {
    pub config_hash: String,
    pub dataset: Fingerprint,
    /// Extra `key=value` facts, one comment line each.
    pub notes: Vec<(String, String)>,
}

impl Preamble {
    pub fn new(config_hash: impl Into<String>, dataset: Fingerprint) -> Self {
        Preamble { config_hash: config_hash.into(), dataset, notes: Vec::new() }
    }

    pub fn note(mut self, key: &str, value: impl ToString) -> Self {
        self.notes.push((key.into(), value.to_string()));
        self
    }

    fn render(&self) -> String {
        let mut s = format!("# config_hash={} dataset={}\n", self.config_hash, self.dataset);
        for (k, v) in &self.notes {
            s.push_str(&format!("# {k}={v}\n"));
        }
        s
    }
}

fn write_csv<R>(path: &Path, preamble: &Preamble, header: &[&str], rows: R) -> io::Result<()>
where
    R: IntoIterator<Item = Vec<String>>,
{
    let mut out = preamble.render().into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    fs::write(path, out)
}

pub const TRACE_COLUMNS: [&str; 9] = [
    "sweep",
    "objective",
    "user_prior",
    "item_prior",
    "words",
    "ratings",
    "social",
    "social_prior",
    "seconds",
];

pub fn write_trace(path: &Path, preamble: &Preamble, trace: &TrainTrace) -> io::Result<()> {
    assert_eq!(&TRACE_COLUMNS[2..8], &ObjectiveTerms::NAMES);
    let rows = trace.records.iter().map(|r| {
        let mut row = vec![r.sweep.to_string(), r.objective.to_string()];
        row.extend(r.terms.as_array().iter().map(f64::to_string));
        row.push(r.seconds.to_string());
        row
    });
    write_csv(path, preamble, &TRACE_COLUMNS, rows)
}

pub const RECALL_COLUMNS: [&str; 6] = ["variant", "lambda_v", "lambda_q", "M", "mean_recall", "n_users"];

/// One recall curve: a model's report under its hyperparameters.
pub struct RecallCurve<'a> {
    pub variant: Variant,
    pub lambda_v: f64,
    pub lambda_q: f64,
    pub report: &'a RecallReport,
}

pub fn write_recall(path: &Path, preamble: &Preamble, curves: &[RecallCurve<'_>]) -> io::Result<()> {
    let rows = curves.iter().flat_map(|c| {
        c.report.ms.iter().zip(&c.report.mean_recall).map(move |(m, r)| {
            vec![
                c.variant.to_string(),
                c.lambda_v.to_string(),
                c.lambda_q.to_string(),
                m.to_string(),
                r.to_string(),
                c.report.n_users.to_string(),
            ]
        })
    });
    write_csv(path, preamble, &RECALL_COLUMNS, rows)
}

pub const SWEEP_COLUMNS: [&str; 8] = [
    "variant",
    "lambda_v",
    "lambda_q",
    "equivalent_to",
    "M",
    "mean_recall",
    "n_users",
    "status",
];

/// One sweep cell as reported; failures keep only their message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub variant: Variant,
    pub lambda_v: f64,
    pub lambda_q: f64,
    pub equivalent: Option<Variant>,
    pub outcome: Result<RecallReport, String>,
}

impl From<SweepCell> for SweepOutcome {
    fn from(c: SweepCell) -> Self {
        SweepOutcome {
            variant: c.variant,
            lambda_v: c.lambda_v,
            lambda_q: c.lambda_q,
            equivalent: c.equivalent,
            outcome: c.outcome.map_err(|e| e.to_string()),
        }
    }
}

/// Long format: one row per cell and `M`. A failed cell gets one row per
/// `M` with empty recall columns and the error as its status.
pub fn write_sweep(path: &Path, preamble: &Preamble, cells: &[SweepOutcome], ms: &[usize]) -> io::Result<()> {
    let rows = cells.iter().flat_map(|c| {
        let lead = vec![
            c.variant.to_string(),
            c.lambda_v.to_string(),
            c.lambda_q.to_string(),
            c.equivalent.map_or(String::new(), |v| v.to_string()),
        ];
        ms.iter()
            .map(|&m| {
                let mut row = lead.clone();
                row.push(m.to_string());
                match &c.outcome {
                    Ok(r) => {
                        let recall = r.recall_at(m).map_or(String::new(), |x| x.to_string());
                        row.extend([recall, r.n_users.to_string(), "ok".into()]);
                    }
                    Err(e) => row.extend([String::new(), String::new(), format!("failed: {e}")]),
                }
                row
            })
            .collect::<Vec<_>>()
    });
    write_csv(path, preamble, &SWEEP_COLUMNS, rows)
}

pub const LEAK_COLUMNS: [&str; 5] = ["cutoff", "mode", "M", "recall", "gap"];

pub fn write_leak(path: &Path, preamble: &Preamble, rows: &[LeakRow]) -> io::Result<()> {
    let rows = rows.iter().map(|r| {
        vec![
            r.cutoff.to_string(),
            r.mode.to_string(),
            r.m.to_string(),
            r.recall.to_string(),
            r.gap.to_string(),
        ]
    });
    write_csv(path, preamble, &LEAK_COLUMNS, rows)
}
