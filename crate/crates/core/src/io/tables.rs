//! CSV tables: feature rows, sample index, predictions, and the report
//! layouts. Floats are written with 9 significant digits.

use std::path::Path;

use super::{fmt9, open_file, write_atomic};
use crate::domain::Label;
use crate::error::{Error, Result};
use crate::evalkit::{AblationRow, BaselineComparison, ClsReport, SensitivityRow, SweepRow};
use crate::features::{FeatureVector, FEATURE_DIM, FEATURE_NAMES};
use crate::svm::Prediction;

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).map_err(csv_error)?;
    for r in rows {
        w.write_record(&r).map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::parse(line, format!("{other:?}")),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    write_atomic(path, &csv_bytes(header, rows)?)
}

/// Records after checking the header; yields (line, record).
fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(open_file(path)?);
    let found = r.headers().map_err(csv_error)?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::schema(1, "header", format!("expected {}", header.join(","))));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(csv_error)?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            Ok((line, rec))
        })
        .collect()
}

fn parse_field<T: std::str::FromStr>(line: usize, field: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::schema(line, field, format!("cannot parse `{s}`")))
}

fn parse_label(line: usize, field: &str, s: &str) -> Result<Label> {
    Label::parse(s).ok_or_else(|| Error::schema(line, field, format!("unknown label `{s}`")))
}

/// Header is exactly the feature names; rows without features are empty.
pub fn write_features(path: &Path, rows: &[Option<FeatureVector>]) -> Result<()> {
    let rows = rows.iter().map(|r| match r {
        Some(f) => f.0.iter().map(|&x| fmt9(x)).collect(),
        None => vec![String::new(); FEATURE_DIM],
    });
    write_csv(path, &FEATURE_NAMES, rows)
}

pub fn read_features(path: &Path) -> Result<Vec<Option<FeatureVector>>> {
    read_csv(path, &FEATURE_NAMES)?
        .into_iter()
        .map(|(line, rec)| {
            if rec.iter().all(str::is_empty) {
                return Ok(None);
            }
            let mut v = [0.0; FEATURE_DIM];
            for (i, (s, name)) in rec.iter().zip(FEATURE_NAMES).enumerate() {
                v[i] = parse_field(line, name, s)?;
            }
            Ok(Some(FeatureVector(v)))
        })
        .collect()
}

/// One feature row's identity: which pair, when, and its label if known.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub clip_id: String,
    pub node_a: String,
    pub node_b: String,
    pub start_frame: u64,
    pub end_frame: u64,
    pub label: Option<Label>,
}

const SAMPLE_HEADER: [&str; 6] = ["clip_id", "node_a", "node_b", "start_frame", "end_frame", "label"];

pub fn write_samples(path: &Path, rows: &[SampleRow]) -> Result<()> {
    let rows = rows.iter().map(|r| {
        vec![
            r.clip_id.clone(),
            r.node_a.clone(),
            r.node_b.clone(),
            r.start_frame.to_string(),
            r.end_frame.to_string(),
            r.label.map_or(String::new(), |l| l.as_str().to_string()),
        ]
    });
    write_csv(path, &SAMPLE_HEADER, rows)
}

pub fn read_samples(path: &Path) -> Result<Vec<SampleRow>> {
    read_csv(path, &SAMPLE_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            Ok(SampleRow {
                clip_id: r[0].to_string(),
                node_a: r[1].to_string(),
                node_b: r[2].to_string(),
                start_frame: parse_field(line, "start_frame", &r[3])?,
                end_frame: parse_field(line, "end_frame", &r[4])?,
                label: match &r[5] {
                    "" => None,
                    s => Some(parse_label(line, "label", s)?),
                },
            })
        })
        .collect()
}

pub fn write_predictions(path: &Path, rows: &[(SampleRow, Option<Prediction>)]) -> Result<()> {
    let header = ["clip_id", "node_a", "node_b", "start_frame", "end_frame", "label", "confidence"];
    let rows = rows.iter().map(|(s, p)| {
        vec![
            s.clip_id.clone(),
            s.node_a.clone(),
            s.node_b.clone(),
            s.start_frame.to_string(),
            s.end_frame.to_string(),
            p.as_ref().map_or(Label::NoInteraction, |p| p.label).as_str().to_string(),
            p.as_ref().map_or(String::new(), |p| fmt9(p.confidence)),
        ]
    });
    write_csv(path, &header, rows)
}

fn improvement(a: f64, b: f64) -> String {
    fmt9(a - b)
}

/// Metric rows comparing the classifier with the proximity baseline; the
/// improvement column is the absolute difference.
pub fn write_baseline(path: &Path, cmp: &BaselineComparison) -> Result<()> {
    let header = ["metric", "keypoint_trajectory", "proximity_baseline", "improvement"];
    let mut rows = vec![("overall_accuracy".to_string(), cmp.svm.accuracy, cmp.majority.accuracy)];
    for label in Label::CLASSES {
        let get = |r: &ClsReport, f: fn(&crate::evalkit::ClassMetrics) -> f64| r.class(label).map_or(0.0, f);
        rows.push((
            format!("{label}_precision"),
            get(&cmp.svm, |m| m.precision),
            get(&cmp.majority, |m| m.precision),
        ));
        rows.push((
            format!("{label}_recall"),
            get(&cmp.svm, |m| m.recall),
            get(&cmp.majority, |m| m.recall),
        ));
    }
    rows.push(("f1_macro".into(), cmp.svm.macro_f1, cmp.majority.macro_f1));
    rows.push((
        "distractor_false_positive_rate".into(),
        cmp.svm_fp_rate,
        cmp.occurrence_fp_rate,
    ));
    write_csv(
        path,
        &header,
        rows.into_iter().map(|(m, a, b)| vec![m, fmt9(a), fmt9(b), improvement(a, b)]),
    )
}

/// Per-class rows plus a macro-average row over classes with support.
pub fn write_classification(path: &Path, report: &ClsReport) -> Result<()> {
    let header = ["interaction_type", "precision", "recall", "f1", "support"];
    let supported: Vec<_> = report.per_class.iter().filter(|c| c.support > 0).collect();
    let n = supported.len().max(1) as f64;
    let mut rows: Vec<Vec<String>> = report
        .per_class
        .iter()
        .map(|c| {
            vec![
                c.label.as_str().to_string(),
                fmt9(c.precision),
                fmt9(c.recall),
                fmt9(c.f1),
                c.support.to_string(),
            ]
        })
        .collect();
    rows.push(vec![
        "macro_average".into(),
        fmt9(supported.iter().map(|c| c.precision).sum::<f64>() / n),
        fmt9(supported.iter().map(|c| c.recall).sum::<f64>() / n),
        fmt9(report.macro_f1),
        supported.iter().map(|c| c.support).sum::<usize>().to_string(),
    ]);
    write_csv(path, &header, rows)
}

pub fn write_ablation(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let header = ["feature_set", "accuracy", "f1_macro"];
    let rows = rows
        .iter()
        .map(|r| vec![r.feature_set.as_str().to_string(), fmt9(r.accuracy), fmt9(r.macro_f1)]);
    write_csv(path, &header, rows)
}

/// Undefined cells carry 0 with `defined` false.
pub fn write_sensitivity(path: &Path, rows: &[SensitivityRow]) -> Result<()> {
    let header = ["alpha", "dwell_s", "macro_f1", "accuracy", "candidates", "defined"];
    let rows = rows.iter().map(|r| {
        vec![
            fmt9(r.alpha),
            fmt9(r.dwell_s),
            fmt9(r.macro_f1.unwrap_or(0.0)),
            fmt9(r.accuracy.unwrap_or(0.0)),
            r.candidates.to_string(),
            r.macro_f1.is_some().to_string(),
        ]
    });
    write_csv(path, &header, rows)
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let header = [
        "match_threshold",
        "tracking_accuracy",
        "total_tracks",
        "tracked_frames",
        "mota",
        "idf1",
        "id_switches",
    ];
    let rows = rows.iter().map(|r| {
        vec![
            fmt9(r.match_threshold),
            fmt9(r.tracking_accuracy),
            r.total_tracks.to_string(),
            r.tracked_frames.to_string(),
            fmt9(r.mota),
            fmt9(r.idf1),
            r.id_switches.to_string(),
        ]
    });
    write_csv(path, &header, rows)
}
