use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::predictor::RegressionData;

use super::{preprocess_context, EvalContext};

/// Logged round `(x_t, a_t, r_t)`.
///
/// `raw` keeps the per-arm features as they were read or sampled; `features`
/// holds their preprocessed form.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub raw: Vec<Vec<f64>>,
    pub features: Vec<Vec<f64>>,
    pub action: usize,
    pub reward: f64,
    pub group: Option<u32>,
    /// Correct arm for classification-style data.
    pub label: Option<usize>,
}

impl Record {
    /// Preprocessed feature of the logged action.
    pub fn logged_feature(&self) -> &[f64] {
        &self.features[self.action]
    }
}

/// Ordered logged records with dimensions `(n, K, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    records: Vec<Record>,
    arms: usize,
    raw_dim: usize,
}

const CHECK_TOL: f64 = 1e-12;

impl OfflineDataset {
    pub fn new(records: Vec<Record>, arms: usize, raw_dim: usize) -> Result<Self> {
        let d = 2 * raw_dim;
        for (t, r) in records.iter().enumerate() {
            if r.features.len() != arms || r.raw.len() != arms {
                return Err(Error::Shape(format!(
                    "record {t} has {} arm blocks, expected {arms}",
                    r.features.len()
                )));
            }
            if r.action >= arms {
                return Err(Error::Input(format!("record {t}: action {} >= K = {arms}", r.action)));
            }
            if !r.reward.is_finite() {
                return Err(Error::Input(format!("record {t}: non-finite reward")));
            }
            for u in &r.features {
                if u.len() != d {
                    return Err(Error::Shape(format!(
                        "record {t}: feature dimension {} != {d}",
                        u.len()
                    )));
                }
                let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                let dup = (0..raw_dim).all(|j| (u[j] - u[j + raw_dim]).abs() <= CHECK_TOL);
                if norm > 1.0 + CHECK_TOL || !dup {
                    return Err(Error::Input(format!("record {t}: feature is not preprocessed")));
                }
            }
        }
        Ok(Self {
            records,
            arms,
            raw_dim,
        })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn raw_dim(&self) -> usize {
        self.raw_dim
    }

    pub fn dim(&self) -> usize {
        2 * self.raw_dim
    }

    /// `(n, K, d)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.len(), self.arms, self.dim())
    }

    /// First `n` records.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            records: self.records[..n.min(self.len())].to_vec(),
            arms: self.arms,
            raw_dim: self.raw_dim,
        }
    }

    /// Regression view `(x_{t,a_t}, r_t)`.
    pub fn logged_regression(&self) -> RegressionData {
        RegressionData {
            inputs: self.records.iter().map(|r| r.logged_feature().to_vec()).collect(),
            targets: self.records.iter().map(|r| r.reward).collect(),
        }
    }

    /// Evaluation contexts from labeled records: arm value is 1 for the
    /// label and 0 otherwise.
    pub fn labeled_eval(&self) -> Result<Vec<EvalContext>> {
        self.records
            .iter()
            .enumerate()
            .map(|(t, r)| {
                let label = r
                    .label
                    .ok_or_else(|| Error::Input(format!("record {t} has no label")))?;
                Ok(EvalContext {
                    features: r.features.clone(),
                    values: (0..self.arms).map(|a| (a == label) as u8 as f64).collect(),
                    group: r.group,
                })
            })
            .collect()
    }
}

/// Column layout of a dataset CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    /// Raw feature columns per arm, arm-major.
    pub features: Vec<Vec<String>>,
    pub action: String,
    /// Reward column; when absent, rewards are `1[action == label]`.
    pub reward: Option<String>,
    pub label: Option<String>,
    pub group: Option<String>,
}

impl CsvSchema {
    /// `a{k}_f{j}` feature columns plus `action` and `reward`.
    pub fn standard(arms: usize, raw_dim: usize) -> Self {
        Self {
            features: (0..arms)
                .map(|a| (0..raw_dim).map(|j| format!("a{a}_f{j}")).collect())
                .collect(),
            action: "action".into(),
            reward: Some("reward".into()),
            label: None,
            group: None,
        }
    }

    pub fn with_group(mut self, column: &str) -> Self {
        self.group = Some(column.into());
        self
    }

    pub fn with_label(mut self, column: &str) -> Self {
        self.label = Some(column.into());
        self
    }

    /// Classification layout: reward derived from the label column.
    pub fn classification(arms: usize, raw_dim: usize, label: &str) -> Self {
        Self {
            reward: None,
            ..Self::standard(arms, raw_dim).with_label(label)
        }
    }

    pub fn arms(&self) -> usize {
        self.features.len()
    }

    pub fn raw_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }
}

/// Writes `data` with the standard layout, adding `group`/`label` columns
/// when any record carries them. Floats use the shortest round-trip
/// representation.
pub fn write_csv<W: Write>(out: W, data: &OfflineDataset) -> Result<()> {
    let schema = CsvSchema::standard(data.arms, data.raw_dim);
    let has_group = data.records.iter().any(|r| r.group.is_some());
    let has_label = data.records.iter().any(|r| r.label.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = schema.features.iter().flatten().cloned().collect();
    header.push("action".into());
    header.push("reward".into());
    if has_group {
        header.push("group".into());
    }
    if has_label {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for r in &data.records {
        let mut row: Vec<String> = r.raw.iter().flatten().map(|v| v.to_string()).collect();
        row.push(r.action.to_string());
        row.push(r.reward.to_string());
        if has_group {
            row.push(r.group.map(|g| g.to_string()).unwrap_or_default());
        }
        if has_label {
            row.push(r.label.map(|l| l.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty()
        || c.eq_ignore_ascii_case("nan")
        || c.eq_ignore_ascii_case("na")
        || c.eq_ignore_ascii_case("null")
}

struct Cell<'a> {
    row: usize,
    column: &'a str,
    text: &'a str,
}

impl Cell<'_> {
    fn parse<T: std::str::FromStr>(&self) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        if is_missing(self.text) {
            return Err(Error::MissingValue {
                row: self.row,
                column: self.column.into(),
            });
        }
        self.text.trim().parse::<T>().map_err(|e| Error::Parse {
            row: self.row,
            column: self.column.into(),
            message: format!("{e}: `{}`", self.text),
        })
    }
}

/// Parses a dataset CSV. Row numbers in errors count data rows from 1.
pub fn read_csv<R: Read>(input: R, schema: &CsvSchema) -> Result<OfflineDataset> {
    let arms = schema.arms();
    let raw_dim = schema.raw_dim();
    if arms < 2 || raw_dim == 0 {
        return Err(Error::Config("schema needs >= 2 arms and >= 1 feature".into()));
    }
    if schema.features.iter().any(|f| f.len() != raw_dim) {
        return Err(Error::Config("every arm needs the same number of features".into()));
    }
    if schema.reward.is_none() && schema.label.is_none() {
        return Err(Error::Config("schema needs a reward or a label column".into()));
    }
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.into()))
    };
    let feature_idx: Vec<Vec<usize>> = schema
        .features
        .iter()
        .map(|cols| cols.iter().map(|c| find(c)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let action_idx = find(&schema.action)?;
    let reward_idx = schema.reward.as_deref().map(find).transpose()?;
    let label_idx = schema.label.as_deref().map(find).transpose()?;
    let group_idx = schema.group.as_deref().map(find).transpose()?;

    let mut records = Vec::new();
    for (t, row) in reader.records().enumerate() {
        let row = row?;
        let rownum = t + 1;
        let cell = |idx: usize| Cell {
            row: rownum,
            column: &headers[idx],
            text: row.get(idx).unwrap_or(""),
        };
        let mut raw = Vec::with_capacity(arms);
        for cols in &feature_idx {
            let mut x = Vec::with_capacity(raw_dim);
            for &c in cols {
                let v: f64 = cell(c).parse()?;
                if !v.is_finite() {
                    return Err(Error::MissingValue {
                        row: rownum,
                        column: headers[c].into(),
                    });
                }
                x.push(v);
            }
            raw.push(x);
        }
        let action: usize = cell(action_idx).parse()?;
        if action >= arms {
            return Err(Error::Parse {
                row: rownum,
                column: headers[action_idx].into(),
                message: format!("action {action} outside [0, {arms})"),
            });
        }
        let label = match label_idx {
            Some(i) => {
                let l: usize = cell(i).parse()?;
                if l >= arms {
                    return Err(Error::Parse {
                        row: rownum,
                        column: headers[i].into(),
                        message: format!("label {l} outside [0, {arms})"),
                    });
                }
                Some(l)
            }
            None => None,
        };
        let reward = match (reward_idx, label) {
            (Some(i), _) => {
                let r: f64 = cell(i).parse()?;
                if !r.is_finite() {
                    return Err(Error::MissingValue {
                        row: rownum,
                        column: headers[i].into(),
                    });
                }
                r
            }
            (None, Some(l)) => (action == l) as u8 as f64,
            (None, None) => unreachable!("schema validated"),
        };
        let group = group_idx.map(|i| cell(i).parse::<u32>()).transpose()?;
        let features = raw
            .iter()
            .map(|x| preprocess_context(x))
            .collect::<Result<Vec<_>>>()?;
        records.push(Record {
            raw,
            features,
            action,
            reward,
            group,
            label,
        });
    }
    OfflineDataset::new(records, arms, raw_dim)
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<OfflineDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    read_csv(std::io::BufReader::new(file), schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_ROWS: &str = "a0_f0,a0_f1,a1_f0,a1_f1,action,reward\n\
                            0.1,0.2,0.3,0.4,1,0.5\n\
                            1.0,0.0,0.0,2.0,0,1\n";

    #[test]
    fn parses_two_rows() {
        let d = read_csv(TWO_ROWS.as_bytes(), &CsvSchema::standard(2, 2)).unwrap();
        assert_eq!(d.dims(), (2, 2, 4));
        assert_eq!(d.records()[1].features[1], vec![0.0, 0.5, 0.0, 0.5]);
        assert_eq!(d.records()[0].action, 1);
    }

    #[test]
    fn nan_cell_names_row_and_column() {
        let text = "a0_f0,a0_f1,a1_f0,a1_f1,action,reward\n\
                    0.1,0.2,0.3,0.4,1,0.5\n\
                    0.1,NaN,0.3,0.4,1,0.5\n";
        let err = read_csv(text.as_bytes(), &CsvSchema::standard(2, 2)).unwrap_err();
        match &err {
            Error::MissingValue { row, column } => {
                assert_eq!(*row, 2);
                assert_eq!(column, "a0_f1");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("imputation out of scope"));
    }

    #[test]
    fn missing_column_and_bad_number() {
        let err = read_csv(TWO_ROWS.as_bytes(), &CsvSchema::standard(2, 2).with_group("septic"))
            .unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "septic"));
        let text = "a0_f0,a1_f0,action,reward\n0.1,abc,0,1\n";
        let err = read_csv(text.as_bytes(), &CsvSchema::standard(2, 1)).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, ref column, .. } if column == "a1_f0"));
    }

    #[test]
    fn classification_rewards_from_label() {
        let text = "a0_f0,a1_f0,action,y,septic\n0.1,0.2,1,1,1\n0.3,0.4,0,1,0\n";
        let schema = CsvSchema::classification(2, 1, "y").with_group("septic");
        let d = read_csv(text.as_bytes(), &schema).unwrap();
        assert_eq!(d.records()[0].reward, 1.0);
        assert_eq!(d.records()[1].reward, 0.0);
        assert_eq!(d.records()[0].group, Some(1));
        let eval = d.labeled_eval().unwrap();
        assert_eq!(eval[1].values, vec![0.0, 1.0]);
    }
}
