//! Dataset model: JSON Lines records, a synthetic generator with hidden
//! fraud-onset times, stratified splitting, batching and standardization.

mod batch;
mod generate;
mod normalize;
mod split;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::survival::CensorLabel;
use crate::{Error, Result};

pub use batch::{make_batches, Batch};
pub use generate::{generate_constant_hazard, generate_synthetic, GeneratorConfig};
pub use normalize::Normalizer;
pub use split::{split_dataset, DatasetSplit};

/// One subject: covariate sequence, censor indicator and label time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserRecord {
    pub user_id: String,
    pub covariates: Vec<Vec<f64>>,
    /// 1 = suspended (event observed), 0 = censored.
    pub c: u8,
    pub t_label: usize,
    /// Onset of the hidden behaviour change; synthetic data only and never
    /// read by training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_fraud_time: Option<usize>,
}

impl UserRecord {
    pub fn is_event(&self) -> bool {
        self.c == 1
    }

    pub fn label(&self) -> CensorLabel {
        CensorLabel::new(self.is_event(), self.t_label)
    }

    pub fn len(&self) -> usize {
        self.covariates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariates.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.covariates.first().map(Vec::len)
    }

    /// Checks every per-record invariant.
    pub fn validate(&self) -> Result<()> {
        let id = &self.user_id;
        if self.covariates.is_empty() {
            return Err(Error::Data(format!("user `{id}` has no covariates")));
        }
        if self.c > 1 {
            return Err(Error::Data(format!("user `{id}`: c must be 0 or 1, got {}", self.c)));
        }
        if self.t_label == 0 || self.t_label > self.covariates.len() {
            return Err(Error::Data(format!(
                "user `{id}`: t_label {} exceeds sequence length {}",
                self.t_label,
                self.covariates.len()
            )));
        }
        let dim = self.covariates[0].len();
        if dim == 0 {
            return Err(Error::Data(format!("user `{id}` has zero-dimensional covariates")));
        }
        for (t, row) in self.covariates.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Data(format!(
                    "user `{id}`: step {} has dimension {}, step 1 has {dim}",
                    t + 1,
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("user `{id}`: non-finite covariate at step {}", t + 1)));
            }
        }
        match (self.c, self.ground_truth_fraud_time) {
            (0, Some(_)) => Err(Error::Data(format!(
                "user `{id}`: censored record carries a ground-truth fraud time"
            ))),
            (_, Some(g)) if g == 0 || g > self.t_label => Err(Error::Data(format!(
                "user `{id}`: ground_truth_fraud_time {g} not in 1..={}",
                self.t_label
            ))),
            _ => Ok(()),
        }
    }
}

/// Reads a JSON Lines dataset. Blank lines are skipped.
pub fn parse_records(path: impl AsRef<Path>) -> Result<Vec<UserRecord>> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut out: Vec<UserRecord> = Vec::new();
    let mut dim: Option<(usize, usize)> = None; // (dimension, line it was set on)
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: UserRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: shown.clone(),
            line: lineno,
            detail: e.to_string(),
        })?;
        rec.validate().map_err(|e| Error::Parse {
            path: shown.clone(),
            line: lineno,
            detail: e.to_string(),
        })?;
        let d = rec.covariates[0].len();
        match dim {
            None => dim = Some((d, lineno)),
            Some((want, first)) if want != d => {
                return Err(Error::Parse {
                    path: shown,
                    line: lineno,
                    detail: format!(
                        "user `{}` has covariate dimension {d}, but line {first} has dimension {want}",
                        rec.user_id
                    ),
                })
            }
            _ => {}
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records(path: impl AsRef<Path>, records: &[UserRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Covariate dimension shared by all records, or an error naming the first
/// disagreement.
pub fn common_dim(records: &[UserRecord]) -> Result<Option<usize>> {
    let mut dim = None;
    for r in records {
        let d = r.dim().unwrap_or(0);
        match dim {
            None => dim = Some(d),
            Some(want) if want != d => {
                return Err(Error::Data(format!(
                    "user `{}` has covariate dimension {d}, expected {want}",
                    r.user_id
                )))
            }
            _ => {}
        }
    }
    Ok(dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn empty_file_is_empty_list() {
        let f = write_lines(&[]);
        assert!(parse_records(f.path()).unwrap().is_empty());
    }

    #[test]
    fn one_valid_line() {
        let f = write_lines(&[
            r#"{"user_id":"a","covariates":[[1.0,2.0],[0.5,-1.25]],"c":1,"t_label":2,"ground_truth_fraud_time":1}"#,
        ]);
        let recs = parse_records(f.path()).unwrap();
        assert_eq!(
            recs,
            vec![UserRecord {
                user_id: "a".into(),
                covariates: vec![vec![1.0, 2.0], vec![0.5, -1.25]],
                c: 1,
                t_label: 2,
                ground_truth_fraud_time: Some(1),
            }]
        );
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_lines(&[
            r#"{"user_id":"a","covariates":[[1.0]],"c":0,"t_label":1}"#,
            r#"{"user_id":"b","covariates":[[1.0]],"c":0"#,
        ]);
        let err = parse_records(f.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn inconsistent_dimension_names_both() {
        let f = write_lines(&[
            r#"{"user_id":"a","covariates":[[1.0,2.0]],"c":0,"t_label":1}"#,
            r#"{"user_id":"b","covariates":[[1.0,2.0,3.0]],"c":0,"t_label":1}"#,
        ]);
        let msg = parse_records(f.path()).unwrap_err().to_string();
        assert!(msg.contains("dimension 3") && msg.contains("dimension 2"), "{msg}");
    }

    #[test]
    fn t_label_beyond_length_names_user() {
        let f = write_lines(&[r#"{"user_id":"zed","covariates":[[1.0]],"c":1,"t_label":4}"#]);
        let msg = parse_records(f.path()).unwrap_err().to_string();
        assert!(msg.contains("zed"), "{msg}");
    }

    #[test]
    fn unknown_fields_and_bad_censor_rejected() {
        let f = write_lines(&[r#"{"user_id":"a","covariates":[[1.0]],"c":0,"t_label":1,"extra":3}"#]);
        assert!(parse_records(f.path()).is_err());
        let f = write_lines(&[r#"{"user_id":"a","covariates":[[1.0]],"c":2,"t_label":1}"#]);
        assert!(parse_records(f.path()).is_err());
        let f = write_lines(&[r#"{"user_id":"a","covariates":[[1.0]],"c":0,"t_label":1,"ground_truth_fraud_time":1}"#]);
        assert!(parse_records(f.path()).is_err());
    }
}
