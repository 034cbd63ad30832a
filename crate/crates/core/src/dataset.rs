//! Tabular ingestion: CSV loading, one-hot encoding, standardization and
//! group bookkeeping for the protected attribute.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    Label,
    Protected,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
}

/// Column roles plus the few dataset-level choices preprocessing needs.
///
/// On disk this is a TOML file:
///
/// ```toml
/// positive_label = ">50K"
/// protected_group = "Female"
/// missing = ["?"]
///
/// [columns]
/// age = "continuous"
/// sex = "protected"
/// income = "label"
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub columns: Vec<ColumnSchema>,
    /// Label value mapped to 1. Defaults to the second distinct value seen.
    pub positive_label: Option<String>,
    /// Protected value treated as the disadvantaged group by the audit.
    pub protected_group: Option<String>,
    /// Cell values treated as missing. Empty cells are always missing.
    pub missing: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    positive_label: Option<String>,
    protected_group: Option<String>,
    #[serde(default)]
    missing: Vec<String>,
    columns: BTreeMap<String, ColumnKind>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSchema>) -> Result<Self> {
        let schema = Schema {
            columns,
            positive_label: None,
            protected_group: None,
            missing: Vec::new(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SchemaFile =
            toml::from_str(text).map_err(|e| Error::Schema(e.message().to_string()))?;
        let schema = Schema {
            columns: file
                .columns
                .into_iter()
                .map(|(name, kind)| ColumnSchema { name, kind })
                .collect(),
            positive_label: file.positive_label,
            protected_group: file.protected_group,
            missing: file.missing,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn validate(&self) -> Result<()> {
        let count = |kind| self.columns.iter().filter(|c| c.kind == kind).count();
        if count(ColumnKind::Label) != 1 {
            return Err(Error::Schema("exactly one label column is required".into()));
        }
        if count(ColumnKind::Protected) != 1 {
            return Err(Error::Schema("exactly one protected column is required".into()));
        }
        let mut seen = HashMap::new();
        for c in &self.columns {
            if seen.insert(c.name.as_str(), ()).is_some() {
                return Err(Error::Schema(format!("duplicate column '{}'", c.name)));
            }
        }
        Ok(())
    }

    pub fn kind_of(&self, name: &str) -> Option<ColumnKind> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.kind)
    }

    fn is_missing(&self, cell: &str) -> bool {
        cell.is_empty() || self.missing.iter().any(|m| m == cell)
    }
}

/// Row-major raw cells, header order preserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Reads a headed CSV and checks it against the schema.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<RawTable> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema).map_err(|e| match e {
        Error::Csv { source, .. } => Error::Csv {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Same as [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(reader: R, schema: &Schema) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let csv_err = |source| Error::Csv {
        path: "<reader>".into(),
        source,
    };
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();

    for name in &header {
        if schema.kind_of(name).is_none() {
            return Err(Error::HeaderMismatch(format!(
                "column '{name}' is not in the schema"
            )));
        }
    }
    for c in &schema.columns {
        if !header.contains(&c.name) {
            return Err(Error::HeaderMismatch(format!(
                "schema column '{}' is missing from the file",
                c.name
            )));
        }
    }
    if header.len() != schema.columns.len() {
        return Err(Error::HeaderMismatch("duplicate header names".into()));
    }

    let continuous: Vec<bool> = header
        .iter()
        .map(|h| schema.kind_of(h) == Some(ColumnKind::Continuous))
        .collect();

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(csv_err)?;
        if record.len() != header.len() {
            return Err(Error::Row {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let row: Vec<String> = record.iter().map(str::to_string).collect();
        for (j, cell) in row.iter().enumerate() {
            if continuous[j] && !schema.is_missing(cell) && cell.parse::<f64>().is_err() {
                return Err(Error::Row {
                    line,
                    message: format!("non-numeric value '{cell}' in continuous column '{}'", header[j]),
                });
            }
        }
        rows.push(row);
    }
    Ok(RawTable { header, rows })
}

/// Per-column standardization parameters (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub column: String,
    pub mean: f64,
    /// Stored as 1.0 for zero-variance columns, which are only centered.
    pub std: f64,
}

/// What preprocessing did besides producing the matrix.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PreprocessReport {
    pub dropped_rows: usize,
    pub zero_variance_columns: Vec<String>,
}

/// A fully numeric dataset: features, binary labels and protected classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<u8>,
    pub p: Vec<usize>,
    pub feature_names: Vec<String>,
    pub standardization: Vec<Standardization>,
    /// Display names of protected classes, indexed by class id.
    pub group_names: Vec<String>,
    /// Raw label values for 0 and 1.
    pub label_names: [String; 2],
    pub protected_attribute: String,
    /// Feature columns that encode the protected attribute; empty once dropped.
    pub protected_columns: Vec<usize>,
    /// Class id the audit treats as the disadvantaged group.
    pub protected_group: Option<usize>,
}

/// Sample indices per protected class, ascending within each class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    pub groups: Vec<Vec<usize>>,
}

impl GroupPartition {
    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Every index not in class `class`, ascending.
    pub fn complement(&self, class: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .groups
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != class)
            .flat_map(|(_, g)| g.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

/// Encodes a schema-conforming table into a [`Dataset`].
pub fn preprocess(raw: &RawTable, schema: &Schema) -> Result<(Dataset, PreprocessReport)> {
    let kinds: Vec<ColumnKind> = raw
        .header
        .iter()
        .map(|h| {
            schema
                .kind_of(h)
                .ok_or_else(|| Error::HeaderMismatch(format!("column '{h}' is not in the schema")))
        })
        .collect::<Result<_>>()?;

    let rows: Vec<&Vec<String>> = raw
        .rows
        .iter()
        .filter(|r| !r.iter().any(|c| schema.is_missing(c)))
        .collect();
    let mut report = PreprocessReport {
        dropped_rows: raw.rows.len() - rows.len(),
        ..Default::default()
    };
    let n = rows.len();
    if n == 0 {
        return Err(Error::Degenerate("no complete rows".into()));
    }

    let label_col = kinds.iter().position(|k| *k == ColumnKind::Label).unwrap();
    let prot_col = kinds.iter().position(|k| *k == ColumnKind::Protected).unwrap();

    let label_levels = levels(rows.iter().map(|r| r[label_col].as_str()));
    if label_levels.len() > 2 {
        return Err(Error::Degenerate(format!(
            "label column '{}' has {} distinct values; binary labels required",
            raw.header[label_col],
            label_levels.len()
        )));
    }
    let positive = match &schema.positive_label {
        Some(v) => {
            if !label_levels.contains(v) {
                return Err(Error::Schema(format!(
                    "positive label '{v}' does not occur in column '{}'",
                    raw.header[label_col]
                )));
            }
            v.clone()
        }
        None => label_levels.last().unwrap().clone(),
    };
    let negative = label_levels
        .iter()
        .find(|v| **v != positive)
        .cloned()
        .unwrap_or_default();
    let y: Vec<u8> = rows
        .iter()
        .map(|r| u8::from(r[label_col] == positive))
        .collect();

    let group_names = levels(rows.iter().map(|r| r[prot_col].as_str()));
    if group_names.len() < 2 {
        return Err(Error::Degenerate(format!(
            "protected column '{}' has fewer than two classes",
            raw.header[prot_col]
        )));
    }
    let p: Vec<usize> = rows
        .iter()
        .map(|r| group_names.iter().position(|g| *g == r[prot_col]).unwrap())
        .collect();
    let protected_group = match &schema.protected_group {
        Some(g) => Some(group_names.iter().position(|v| v == g).ok_or_else(|| {
            Error::Schema(format!("protected group '{g}' does not occur in the data"))
        })?),
        None => None,
    };

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut feature_names = Vec::new();
    let mut standardization = Vec::new();
    let mut protected_columns = Vec::new();

    for (j, kind) in kinds.iter().enumerate() {
        let name = &raw.header[j];
        match kind {
            ColumnKind::Label => {}
            ColumnKind::Continuous => {
                let vals: Vec<f64> = rows.iter().map(|r| r[j].parse::<f64>().unwrap()).collect();
                let mean = vals.iter().sum::<f64>() / n as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                let mut std = var.sqrt();
                if std == 0.0 {
                    report.zero_variance_columns.push(name.clone());
                    std = 1.0;
                }
                columns.push(vals.iter().map(|v| (v - mean) / std).collect());
                feature_names.push(name.clone());
                standardization.push(Standardization {
                    column: name.clone(),
                    mean,
                    std,
                });
            }
            ColumnKind::Categorical => {
                for level in levels(rows.iter().map(|r| r[j].as_str())) {
                    columns.push(rows.iter().map(|r| f64::from(u8::from(r[j] == level))).collect());
                    feature_names.push(format!("{name}={level}"));
                }
            }
            ColumnKind::Protected => {
                // A binary attribute is a single indicator of class 1.
                let encoded: Vec<usize> = if group_names.len() == 2 {
                    vec![1]
                } else {
                    (0..group_names.len()).collect()
                };
                for class in encoded {
                    protected_columns.push(columns.len());
                    columns.push(p.iter().map(|&c| f64::from(u8::from(c == class))).collect());
                    feature_names.push(format!("{name}={}", group_names[class]));
                }
            }
        }
    }

    let m = columns.len();
    let mut x = Array2::zeros((n, m));
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            x[[i, j]] = *v;
        }
    }

    Ok((
        Dataset {
            x,
            y,
            p,
            feature_names,
            standardization,
            group_names,
            label_names: [negative, positive],
            protected_attribute: raw.header[prot_col].clone(),
            protected_columns,
            protected_group,
        },
        report,
    ))
}

/// Distinct values in first-appearance order.
fn levels<'a>(cells: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in cells {
        if !out.iter().any(|v| v == c) {
            out.push(c.to_string());
        }
    }
    out
}

impl Dataset {
    /// Builds a dataset directly from numeric parts. Protected columns are not
    /// tracked; use [`preprocess`] for data that encodes the attribute in `x`.
    pub fn from_parts(x: Array2<f64>, y: Vec<u8>, p: Vec<usize>) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n || p.len() != n {
            return Err(Error::Dimension(format!(
                "x has {n} rows, y has {}, p has {}",
                y.len(),
                p.len()
            )));
        }
        if y.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        let n_groups = p.iter().max().map_or(0, |m| m + 1);
        if n_groups < 2 {
            return Err(Error::Degenerate("need at least two protected classes".into()));
        }
        for c in 0..n_groups {
            if !p.contains(&c) {
                return Err(Error::EmptyGroup(format!("protected class {c} has no samples")));
            }
        }
        let m = x.ncols();
        Ok(Dataset {
            x,
            y,
            p,
            feature_names: (0..m).map(|j| format!("x{j}")).collect(),
            standardization: Vec::new(),
            group_names: (0..n_groups).map(|c| c.to_string()).collect(),
            label_names: ["0".into(), "1".into()],
            protected_attribute: "p".into(),
            protected_columns: Vec::new(),
            protected_group: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn partition(&self) -> GroupPartition {
        let mut groups = vec![Vec::new(); self.n_groups()];
        for (i, &c) in self.p.iter().enumerate() {
            groups[c].push(i);
        }
        GroupPartition { groups }
    }

    /// Rows `indices`, in that order, with all metadata carried over.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            p: indices.iter().map(|&i| self.p[i]).collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Dataset {
        Dataset {
            x: Array2::zeros((0, self.m())),
            y: Vec::new(),
            p: Vec::new(),
            feature_names: self.feature_names.clone(),
            standardization: self.standardization.clone(),
            group_names: self.group_names.clone(),
            label_names: self.label_names.clone(),
            protected_attribute: self.protected_attribute.clone(),
            protected_columns: self.protected_columns.clone(),
            protected_group: self.protected_group,
        }
    }

    /// Uniform random split without replacement, deterministic per seed.
    /// Both halves keep ascending row order.
    pub fn split_indices(&self, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train fraction {train_fraction} outside (0, 1)"
            )));
        }
        let n = self.n();
        if n < 2 {
            return Err(Error::InvalidArgument("cannot split fewer than two rows".into()));
        }
        let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut train = idx[..n_train].to_vec();
        let mut test = idx[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok((train, test))
    }

    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        let (train, test) = self.split_indices(train_fraction, seed)?;
        Ok((self.subset(&train), self.subset(&test)))
    }

    /// Removes the protected attribute's feature columns; `p` is kept.
    pub fn drop_protected(&self) -> Result<Dataset> {
        if self.protected_columns.is_empty() {
            return Err(Error::InvalidArgument(
                "protected attribute columns are not present in the feature matrix".into(),
            ));
        }
        let keep: Vec<usize> = (0..self.m())
            .filter(|j| !self.protected_columns.contains(j))
            .collect();
        let mut out = self.clone_meta();
        out.x = self.x.select(Axis(1), &keep);
        out.y = self.y.clone();
        out.p = self.p.clone();
        out.feature_names = keep.iter().map(|&j| self.feature_names[j].clone()).collect();
        out.protected_columns.clear();
        Ok(out)
    }

    /// Feature matrix with the protected columns removed, whether or not
    /// they are still present.
    pub fn features_without_protected(&self) -> Array2<f64> {
        if self.protected_columns.is_empty() {
            return self.x.clone();
        }
        let keep: Vec<usize> = (0..self.m())
            .filter(|j| !self.protected_columns.contains(j))
            .collect();
        self.x.select(Axis(1), &keep)
    }

    /// Positive-label rate.
    pub fn positive_rate(&self) -> f64 {
        self.y.iter().map(|&v| f64::from(v)).sum::<f64>() / self.n() as f64
    }

    pub fn group_frequencies(&self) -> Vec<f64> {
        let part = self.partition();
        part.groups
            .iter()
            .map(|g| g.len() as f64 / self.n() as f64)
            .collect()
    }

    /// Writes `<stem>.csv` (features, `label`, `protected`) and the
    /// `<stem>.meta.toml` sidecar.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let mut out = String::new();
        let mut header: Vec<String> = self.feature_names.iter().map(|s| quote(s)).collect();
        header.push("label".into());
        header.push("protected".into());
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.n() {
            for v in self.x.row(i) {
                write!(out, "{v},").unwrap();
            }
            writeln!(out, "{},{}", self.y[i], self.p[i]).unwrap();
        }
        fs::write(&csv_path, out).map_err(|e| Error::io(&csv_path, e))?;

        let meta = DatasetMeta {
            protected_attribute: self.protected_attribute.clone(),
            group_names: self.group_names.clone(),
            label_names: self.label_names.to_vec(),
            protected_columns: self.protected_columns.clone(),
            protected_group: self.protected_group,
            standardization: self.standardization.clone(),
        };
        let meta_path = dir.join(format!("{stem}.meta.toml"));
        let text = toml::to_string(&meta).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))
    }

    /// Inverse of [`Dataset::save`].
    pub fn load(dir: impl AsRef<Path>, stem: &str) -> Result<Dataset> {
        let dir = dir.as_ref();
        let meta_path = dir.join(format!("{stem}.meta.toml"));
        let meta_text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: DatasetMeta =
            toml::from_str(&meta_text).map_err(|e| Error::Parse(format!("{}: {e}", meta_path.display())))?;

        let csv_path = dir.join(format!("{stem}.csv"));
        let file = fs::File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let csv_err = |source| Error::Csv {
            path: csv_path.clone(),
            source,
        };
        let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        if header.len() < 2 || header[header.len() - 2] != "label" || header[header.len() - 1] != "protected" {
            return Err(Error::HeaderMismatch(format!(
                "{}: expected trailing 'label,protected' columns",
                csv_path.display()
            )));
        }
        let m = header.len() - 2;
        let mut data = Vec::new();
        let mut y = Vec::new();
        let mut p = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let line = i + 2;
            let bad = |what: &str| Error::Row {
                line,
                message: format!("{}: {what}", csv_path.display()),
            };
            for j in 0..m {
                data.push(rec[j].parse::<f64>().map_err(|_| bad("non-numeric feature"))?);
            }
            y.push(rec[m].parse::<u8>().map_err(|_| bad("bad label"))?);
            p.push(rec[m + 1].parse::<usize>().map_err(|_| bad("bad protected class"))?);
        }
        let n = y.len();
        let x = Array2::from_shape_vec((n, m), data).map_err(|e| Error::Dimension(e.to_string()))?;
        let label_names: [String; 2] = meta
            .label_names
            .try_into()
            .map_err(|_| Error::Parse("label_names must have two entries".into()))?;
        Ok(Dataset {
            x,
            y,
            p,
            feature_names: header[..m].to_vec(),
            standardization: meta.standardization,
            group_names: meta.group_names,
            label_names,
            protected_attribute: meta.protected_attribute,
            protected_columns: meta.protected_columns,
            protected_group: meta.protected_group,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    protected_attribute: String,
    group_names: Vec<String>,
    label_names: Vec<String>,
    protected_columns: Vec<usize>,
    protected_group: Option<usize>,
    standardization: Vec<Standardization>,
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::from_toml_str(
            r#"
            positive_label = "yes"
            missing = ["?"]
            [columns]
            age = "continuous"
            color = "categorical"
            sex = "protected"
            outcome = "label"
            "#,
        )
        .unwrap()
    }

    const CSV: &str = "age,color,sex,outcome\n1,red,m,no\n2,blue,f,yes\n3,green,m,yes\n";

    #[test]
    fn reads_matching_csv() {
        let raw = read_csv(CSV.as_bytes(), &schema()).unwrap();
        assert_eq!(raw.rows.len(), 3);
        assert_eq!(raw.header, ["age", "color", "sex", "outcome"]);
    }

    #[test]
    fn quoted_fields_are_accepted() {
        let csv = "age,color,sex,outcome\n1,\"dark, red\",m,no\n2,blue,f,yes\n";
        let raw = read_csv(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(raw.rows[0][1], "dark, red");
    }

    #[test]
    fn extra_column_is_rejected() {
        let csv = "age,color,sex,outcome,extra\n1,red,m,no,0\n";
        let err = read_csv(csv.as_bytes(), &schema()).unwrap_err();
        assert_eq!(err.code(), "header_mismatch");
    }

    #[test]
    fn missing_column_is_rejected() {
        let csv = "age,color,outcome\n1,red,no\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), &schema()),
            Err(Error::HeaderMismatch(_))
        ));
    }

    #[test]
    fn non_numeric_continuous_names_the_line() {
        let csv = "age,color,sex,outcome\n1,red,m,no\nold,blue,f,yes\n";
        match read_csv(csv.as_bytes(), &schema()) {
            Err(Error::Row { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_row_is_rejected() {
        let csv = "age,color,sex,outcome\n1,red,m\n";
        assert!(matches!(read_csv(csv.as_bytes(), &schema()), Err(Error::Row { line: 2, .. })));
    }

    #[test]
    fn schema_requires_single_label_and_protected() {
        let err = Schema::from_toml_str("[columns]\na = \"label\"\nb = \"label\"\nc = \"protected\"\n");
        assert!(matches!(err, Err(Error::Schema(_))));
        let err = Schema::from_toml_str("[columns]\na = \"label\"\n");
        assert!(matches!(err, Err(Error::Schema(_))));
    }

    #[test]
    fn standardizes_continuous_columns() {
        let raw = read_csv(CSV.as_bytes(), &schema()).unwrap();
        let (ds, report) = preprocess(&raw, &schema()).unwrap();
        assert_eq!(report.dropped_rows, 0);
        let age: Vec<f64> = ds.x.column(0).to_vec();
        let expected = [-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589];
        for (a, e) in age.iter().zip(expected) {
            assert!((a - e).abs() < 1e-12);
        }
        assert!(age.iter().sum::<f64>().abs() < 1e-12);
        let st = &ds.standardization[0];
        assert_eq!((st.mean, st.column.as_str()), (2.0, "age"));
    }

    #[test]
    fn one_hot_rows_sum_to_one() {
        let raw = read_csv(CSV.as_bytes(), &schema()).unwrap();
        let (ds, _) = preprocess(&raw, &schema()).unwrap();
        let color: Vec<usize> = ds
            .feature_names
            .iter()
            .enumerate()
            .filter(|(_, n)| n.starts_with("color="))
            .map(|(j, _)| j)
            .collect();
        assert_eq!(color.len(), 3);
        for i in 0..ds.n() {
            let s: f64 = color.iter().map(|&j| ds.x[[i, j]]).sum();
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn labels_and_groups_are_mapped() {
        let raw = read_csv(CSV.as_bytes(), &schema()).unwrap();
        let (ds, _) = preprocess(&raw, &schema()).unwrap();
        assert_eq!(ds.y, vec![0, 1, 1]);
        assert_eq!(ds.p, vec![0, 1, 0]);
        assert_eq!(ds.group_names, ["m", "f"]);
        assert_eq!(ds.protected_columns.len(), 1);
        assert_eq!(ds.feature_names[ds.protected_columns[0]], "sex=f");
    }

    #[test]
    fn missing_rows_are_dropped_and_counted() {
        let csv = "age,color,sex,outcome\n1,red,m,no\n?,blue,f,yes\n3,,f,yes\n4,red,f,yes\n";
        let raw = read_csv(csv.as_bytes(), &schema()).unwrap();
        let (ds, report) = preprocess(&raw, &schema()).unwrap();
        assert_eq!(report.dropped_rows, 2);
        assert_eq!(ds.n(), 2);
    }

    #[test]
    fn zero_variance_column_is_centered_and_reported() {
        let csv = "age,color,sex,outcome\n5,red,m,no\n5,blue,f,yes\n";
        let raw = read_csv(csv.as_bytes(), &schema()).unwrap();
        let (ds, report) = preprocess(&raw, &schema()).unwrap();
        assert_eq!(report.zero_variance_columns, ["age"]);
        assert!(ds.x.column(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn three_label_values_is_an_error() {
        let csv = "age,color,sex,outcome\n1,red,m,no\n2,red,f,yes\n3,red,f,maybe\n";
        let raw = read_csv(csv.as_bytes(), &schema()).unwrap();
        assert!(matches!(preprocess(&raw, &schema()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn single_protected_class_is_an_error() {
        let csv = "age,color,sex,outcome\n1,red,m,no\n2,red,m,yes\n";
        let raw = read_csv(csv.as_bytes(), &schema()).unwrap();
        assert!(preprocess(&raw, &schema()).is_err());
    }

    #[test]
    fn partition_of_small_vector() {
        let ds = Dataset::from_parts(Array2::zeros((3, 1)), vec![0, 1, 0], vec![0, 1, 0]).unwrap();
        let part = ds.partition();
        assert_eq!(part.groups, vec![vec![0, 2], vec![1]]);
        assert_eq!(part.complement(1), vec![0, 2]);
    }

    #[test]
    fn from_parts_rejects_missing_class() {
        let err = Dataset::from_parts(Array2::zeros((2, 1)), vec![0, 1], vec![0, 2]);
        assert!(matches!(err, Err(Error::EmptyGroup(_))));
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let x = Array2::from_shape_fn((10, 1), |(i, _)| i as f64);
        let ds = Dataset::from_parts(x, vec![0; 10], (0..10).map(|i| i % 2).collect()).unwrap();
        let (a, b) = ds.split_indices(0.7, 42).unwrap();
        assert_eq!((a.len(), b.len()), (7, 3));
        assert_eq!(ds.split_indices(0.7, 42).unwrap(), (a.clone(), b.clone()));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn split_depends_on_seed() {
        let n = 1000;
        let ds = Dataset::from_parts(
            Array2::zeros((n, 1)),
            vec![0; n],
            (0..n).map(|i| i % 2).collect(),
        )
        .unwrap();
        let (a, _) = ds.split_indices(0.7, 1).unwrap();
        let (b, _) = ds.split_indices(0.7, 2).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let ds = Dataset::from_parts(Array2::zeros((4, 1)), vec![0; 4], vec![0, 1, 0, 1]).unwrap();
        assert!(ds.split(0.0, 1).is_err());
        assert!(ds.split(1.0, 1).is_err());
    }

    #[test]
    fn drop_protected_twice_fails() {
        let raw = read_csv(CSV.as_bytes(), &schema()).unwrap();
        let (ds, _) = preprocess(&raw, &schema()).unwrap();
        let dropped = ds.drop_protected().unwrap();
        assert_eq!(dropped.m(), ds.m() - 1);
        assert_eq!(dropped.p, ds.p);
        assert!(dropped.drop_protected().is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let raw = read_csv(CSV.as_bytes(), &schema()).unwrap();
        let (ds, _) = preprocess(&raw, &schema()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path(), "prepared").unwrap();
        let back = Dataset::load(dir.path(), "prepared").unwrap();
        assert_eq!(back, ds);
    }
}
