//! Participant-level data for a multi-study analysis.
//!
//! A dataset is a flat list of records, each tagged with the index of the
//! study it belongs to. Exposures are binary and may be missing: `x` is the
//! gold-standard measurement and `x_star` the error-prone surrogate.
//! Outcomes and covariates are never missing in a valid dataset.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub study: usize,
    pub y: Option<bool>,
    pub x: Option<bool>,
    pub x_star: Option<bool>,
    pub z: Vec<f64>,
}

impl ParticipantRecord {
    pub fn new(study: usize, y: bool, x: Option<bool>, x_star: Option<bool>, z: Vec<f64>) -> Self {
        Self { study, y: Some(y), x, x_star, z }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpdDataset {
    pub records: Vec<ParticipantRecord>,
    /// Study labels in index order.
    pub study_labels: Vec<String>,
    pub covariate_names: Vec<String>,
}

impl IpdDataset {
    /// Builds a dataset with studies labelled `1..=J` and covariates `z1..zK`.
    pub fn new(records: Vec<ParticipantRecord>, study_count: usize, covariate_count: usize) -> Self {
        Self {
            records,
            study_labels: (1..=study_count).map(|j| j.to_string()).collect(),
            covariate_names: (1..=covariate_count).map(|k| format!("z{k}")).collect(),
        }
    }

    pub fn study_count(&self) -> usize {
        self.study_labels.len()
    }

    pub fn covariate_count(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record indices grouped by study.
    pub fn study_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.study_count()];
        for (i, rec) in self.records.iter().enumerate() {
            if let Some(m) = members.get_mut(rec.study) {
                m.push(i);
            }
        }
        members
    }

    /// Dataset restricted to one study, reindexed to a single study.
    pub fn study_subset(&self, study: usize) -> IpdDataset {
        let records = self
            .records
            .iter()
            .filter(|r| r.study == study)
            .map(|r| ParticipantRecord { study: 0, ..r.clone() })
            .collect();
        IpdDataset {
            records,
            study_labels: vec![self.study_labels[study].clone()],
            covariate_names: self.covariate_names.clone(),
        }
    }

    /// Reads the `study,y,x,x_star,z1..zK` CSV layout. Empty cells are missing.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let fixed = ["study", "y", "x", "x_star"];
        if headers.len() < fixed.len() || headers.iter().zip(fixed).any(|(h, f)| h.trim() != f) {
            return Err(Error::Config(format!(
                "dataset header must start with study,y,x,x_star (got {:?})",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let covariate_names: Vec<String> =
            headers.iter().skip(fixed.len()).map(|h| h.trim().to_string()).collect();

        let mut labels: Vec<String> = Vec::new();
        let mut label_index: HashMap<String, usize> = HashMap::new();
        let mut records = Vec::new();
        for (row, result) in rdr.records().enumerate() {
            let line = row + 2;
            let rec = result?;
            let label = rec.get(0).unwrap_or("").trim().to_string();
            if label.is_empty() {
                return Err(Error::Config(format!("line {line}: empty study label")));
            }
            let study = *label_index.entry(label.clone()).or_insert_with(|| {
                labels.push(label);
                labels.len() - 1
            });
            let y = parse_binary(rec.get(1), line, "y")?;
            let x = parse_binary(rec.get(2), line, "x")?;
            let x_star = parse_binary(rec.get(3), line, "x_star")?;
            let mut z = Vec::with_capacity(covariate_names.len());
            for (k, name) in covariate_names.iter().enumerate() {
                let cell = rec.get(fixed.len() + k).unwrap_or("").trim();
                // Missing covariates are carried as NaN so validation can report them.
                let v = if cell.is_empty() {
                    f64::NAN
                } else {
                    cell.parse::<f64>().map_err(|_| {
                        Error::Config(format!("line {line}: column {name}: not a number: {cell:?}"))
                    })?
                };
                z.push(v);
            }
            records.push(ParticipantRecord { study, y, x, x_star, z });
        }
        Ok(Self { records, study_labels: labels, covariate_names })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["study".to_string(), "y".into(), "x".into(), "x_star".into()];
        header.extend(self.covariate_names.iter().cloned());
        wtr.write_record(&header)?;
        for rec in &self.records {
            let mut row = Vec::with_capacity(header.len());
            row.push(self.study_labels.get(rec.study).cloned().unwrap_or_else(|| rec.study.to_string()));
            row.push(fmt_binary(rec.y));
            row.push(fmt_binary(rec.x));
            row.push(fmt_binary(rec.x_star));
            row.extend(rec.z.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.to_csv_writer(std::io::BufWriter::new(file))
    }
}

fn parse_binary(cell: Option<&str>, line: usize, column: &str) -> Result<Option<bool>> {
    match cell.map(str::trim).unwrap_or("") {
        "" | "NA" => Ok(None),
        "0" => Ok(Some(false)),
        "1" => Ok(Some(true)),
        other => Err(Error::Config(format!(
            "line {line}: column {column}: expected 0, 1 or empty, got {other:?}"
        ))),
    }
}

fn fmt_binary(v: Option<bool>) -> String {
    match v {
        None => String::new(),
        Some(true) => "1".into(),
        Some(false) => "0".into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    StudyOutOfRange,
    EmptyStudy,
    MissingOutcome,
    MissingCovariate,
    CovariateCount,
    NoExposure,
    NoCalibrationOverlap,
    IncompleteExposure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub label: String,
    pub n: usize,
    pub prop_x_observed: f64,
    pub prop_x_star_observed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
    pub studies: Vec<StudySummary>,
}

impl ValidationReport {
    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    pub fn into_result(self) -> Result<()> {
        if self.passed {
            Ok(())
        } else {
            let msgs: Vec<&str> = self.violations.iter().map(|v| v.message.as_str()).collect();
            Err(Error::Validation(msgs.join("; ")))
        }
    }
}

/// What a model needs from the data beyond the basic record invariants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataRequirements {
    /// At least one record must carry both `x` and `x_star`.
    pub calibration_overlap: bool,
    /// Every record must carry `x`.
    pub complete_exposure: bool,
}

impl Default for DataRequirements {
    fn default() -> Self {
        Self { calibration_overlap: true, complete_exposure: false }
    }
}

/// Checks the record invariants required by the misclassification models.
pub fn validate_dataset(d: &IpdDataset) -> ValidationReport {
    validate_with(d, DataRequirements::default())
}

pub fn validate_with(d: &IpdDataset, req: DataRequirements) -> ValidationReport {
    let mut violations = Vec::new();
    let j = d.study_count();
    let k = d.covariate_count();
    let mut counts = vec![(0usize, 0usize, 0usize); j];
    let mut overlap = false;

    let mut push = |kind, message: String| violations.push(Violation { kind, message });

    for (i, rec) in d.records.iter().enumerate() {
        if rec.study >= j {
            push(ViolationKind::StudyOutOfRange, format!("record {i}: study index {} out of range", rec.study));
        } else {
            let c = &mut counts[rec.study];
            c.0 += 1;
            c.1 += rec.x.is_some() as usize;
            c.2 += rec.x_star.is_some() as usize;
        }
        if rec.y.is_none() {
            push(ViolationKind::MissingOutcome, format!("record {i}: missing outcome"));
        }
        if rec.z.len() != k {
            push(ViolationKind::CovariateCount, format!("record {i}: expected {k} covariates, found {}", rec.z.len()));
        } else if rec.z.iter().any(|v| !v.is_finite()) {
            push(ViolationKind::MissingCovariate, format!("record {i}: missing or non-finite covariate"));
        }
        if rec.x.is_none() && rec.x_star.is_none() {
            push(ViolationKind::NoExposure, format!("record {i}: neither x nor x_star observed"));
        }
        if req.complete_exposure && rec.x.is_none() {
            push(ViolationKind::IncompleteExposure, format!("record {i}: x missing"));
        }
        overlap |= rec.x.is_some() && rec.x_star.is_some();
    }
    for (s, c) in counts.iter().enumerate() {
        if c.0 == 0 {
            push(ViolationKind::EmptyStudy, format!("study {} has no records", d.study_labels[s]));
        }
    }
    if req.calibration_overlap && !overlap {
        push(
            ViolationKind::NoCalibrationOverlap,
            "no calibration overlap: no record has both x and x_star".to_string(),
        );
    }

    let studies = counts
        .iter()
        .zip(&d.study_labels)
        .map(|(&(n, nx, nxs), label)| StudySummary {
            label: label.clone(),
            n,
            prop_x_observed: if n > 0 { nx as f64 / n as f64 } else { 0.0 },
            prop_x_star_observed: if n > 0 { nxs as f64 / n as f64 } else { 0.0 },
        })
        .collect();

    ValidationReport { passed: violations.is_empty(), violations, studies }
}
