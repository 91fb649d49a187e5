//! Mixed numerical/categorical tables: schema, one-hot encoding of the
//! categorical block, column standardisation, CSV I/O and seeded splits.

mod uci;

pub use uci::{fetch_uci, load_uci, CacheMeta, UciDataset};

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::TruthLabels;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("unknown level {level:?} for column {column}")]
    UnknownLevel { column: String, level: String },
    #[error("dataset has {0} rows after filtering, need at least 2")]
    EmptyDataset(usize),
    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    ParseError {
        row: usize,
        column: String,
        value: String,
    },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("split leaves an empty side: n={n}, train_fraction={fraction}")]
    DegenerateSplit { n: usize, fraction: f64 },
    #[error("network error: {0}")]
    Network(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Column {
    Numerical { name: String },
    Categorical { name: String, levels: Vec<String> },
}

impl Column {
    pub fn name(&self) -> &str {
        match self {
            Column::Numerical { name } | Column::Categorical { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixedSchema {
    pub columns: Vec<Column>,
}

impl MixedSchema {
    pub fn new(columns: Vec<Column>) -> Result<Self, DatasetError> {
        let schema = Self { columns };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.columns.is_empty() {
            return Err(DatasetError::InvalidSchema("no columns".into()));
        }
        let mut names = HashSet::new();
        for col in &self.columns {
            if !names.insert(col.name()) {
                return Err(DatasetError::InvalidSchema(format!(
                    "duplicate column {}",
                    col.name()
                )));
            }
            if let Column::Categorical { name, levels } = col {
                if levels.is_empty() {
                    return Err(DatasetError::InvalidSchema(format!("{name} has no levels")));
                }
                let unique: HashSet<_> = levels.iter().collect();
                if unique.len() != levels.len() {
                    return Err(DatasetError::InvalidSchema(format!(
                        "{name} repeats a level"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of numerical columns.
    pub fn p1(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| matches!(c, Column::Numerical { .. }))
            .count()
    }

    /// Total dummy width, `Σ_j m_j`.
    pub fn p2(&self) -> usize {
        self.category_blocks().iter().sum()
    }

    /// `m_j` for each categorical column in order.
    pub fn category_blocks(&self) -> Vec<usize> {
        self.columns
            .iter()
            .filter_map(|c| match c {
                Column::Categorical { levels, .. } => Some(levels.len()),
                Column::Numerical { .. } => None,
            })
            .collect()
    }

    fn categorical(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.columns.iter().filter_map(|c| match c {
            Column::Categorical { name, levels } => Some((name.as_str(), levels.as_slice())),
            Column::Numerical { .. } => None,
        })
    }
}

/// One-hot encode one value per categorical column, in schema order.
pub fn dummy_encode(raw_levels: &[&str], schema: &MixedSchema) -> Result<Vec<f64>, DatasetError> {
    let cats: Vec<_> = schema.categorical().collect();
    if raw_levels.len() != cats.len() {
        return Err(DatasetError::SchemaMismatch(format!(
            "{} categorical values for {} categorical columns",
            raw_levels.len(),
            cats.len()
        )));
    }
    let mut out = Vec::with_capacity(schema.p2());
    for (&value, (name, levels)) in raw_levels.iter().zip(cats) {
        let hit =
            levels
                .iter()
                .position(|l| l == value)
                .ok_or_else(|| DatasetError::UnknownLevel {
                    column: name.to_string(),
                    level: value.to_string(),
                })?;
        out.extend((0..levels.len()).map(|i| if i == hit { 1.0 } else { 0.0 }));
    }
    Ok(out)
}

/// Standardise each column in place to zero mean and unit population
/// variance. Columns with `sd < 1e-12` become all zeros.
pub fn standardize_columns(m: &mut Array2<f64>) {
    let n = m.nrows() as f64;
    for mut col in m.columns_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd < 1e-12 {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|v| (v - mean) / sd);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    DropRow,
    Error,
}

/// Values treated as missing in any column.
fn is_missing(value: &str) -> bool {
    value.is_empty() || value == "?"
}

/// An encoded table. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedDataset {
    schema: MixedSchema,
    numerical: Array2<f64>,
    categorical: Array2<f64>,
    row_ids: Vec<String>,
    truth: Option<TruthLabels>,
}

impl MixedDataset {
    /// Encode string records whose fields follow `schema.columns` order.
    /// Numerical columns are standardised after row filtering.
    pub fn from_records(
        schema: MixedSchema,
        records: &[Vec<String>],
        labels: Option<&[String]>,
        row_ids: Option<Vec<String>>,
        policy: MissingPolicy,
    ) -> Result<Self, DatasetError> {
        schema.validate()?;
        let p1 = schema.p1();
        let mut num_rows: Vec<f64> = Vec::new();
        let mut cat_rows: Vec<f64> = Vec::new();
        let mut kept = Vec::new();
        'rows: for (r, rec) in records.iter().enumerate() {
            if rec.len() != schema.columns.len() {
                return Err(DatasetError::SchemaMismatch(format!(
                    "row {r} has {} fields, schema has {}",
                    rec.len(),
                    schema.columns.len()
                )));
            }
            let mut nums = Vec::with_capacity(p1);
            let mut cats = Vec::new();
            for (col, value) in schema.columns.iter().zip(rec) {
                let value = value.trim();
                let bad = match col {
                    Column::Numerical { name } => {
                        if is_missing(value) {
                            Some(DatasetError::SchemaMismatch(format!(
                                "row {r}: missing value in {name}"
                            )))
                        } else {
                            match value.parse::<f64>() {
                                Ok(v) if v.is_finite() => {
                                    nums.push(v);
                                    None
                                }
                                _ => {
                                    return Err(DatasetError::ParseError {
                                        row: r,
                                        column: name.clone(),
                                        value: value.to_string(),
                                    })
                                }
                            }
                        }
                    }
                    Column::Categorical { name, levels } => {
                        if levels.iter().any(|l| l == value) {
                            cats.push(value);
                            None
                        } else {
                            Some(DatasetError::UnknownLevel {
                                column: name.clone(),
                                level: value.to_string(),
                            })
                        }
                    }
                };
                if let Some(err) = bad {
                    match policy {
                        MissingPolicy::DropRow => continue 'rows,
                        MissingPolicy::Error => return Err(err),
                    }
                }
            }
            num_rows.extend(nums);
            cat_rows.extend(dummy_encode(&cats, &schema)?);
            kept.push(r);
        }
        let n = kept.len();
        if n < 2 {
            return Err(DatasetError::EmptyDataset(n));
        }
        let mut numerical = Array2::from_shape_vec((n, p1), num_rows).expect("row widths checked");
        standardize_columns(&mut numerical);
        let categorical =
            Array2::from_shape_vec((n, schema.p2()), cat_rows).expect("row widths checked");
        let row_ids = match row_ids {
            Some(ids) => kept.iter().map(|&r| ids[r].clone()).collect(),
            None => kept.iter().map(|r| r.to_string()).collect(),
        };
        let truth = labels.map(|labels| {
            truth_from_strings(&kept.iter().map(|&r| labels[r].as_str()).collect::<Vec<_>>())
        });
        Ok(Self {
            schema,
            numerical,
            categorical,
            row_ids,
            truth,
        })
    }

    pub fn schema(&self) -> &MixedSchema {
        &self.schema
    }

    pub fn n(&self) -> usize {
        self.row_ids.len()
    }

    /// `n × p1`, standardised.
    pub fn numerical(&self) -> &Array2<f64> {
        &self.numerical
    }

    /// `n × p2`, one-hot per category block.
    pub fn categorical(&self) -> &Array2<f64> {
        &self.categorical
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    /// Ground truth for scoring only; its ids are readable solely by the
    /// metrics module.
    pub fn truth_labels(&self) -> Option<&TruthLabels> {
        self.truth.as_ref()
    }

    /// `[numerical | categorical]`, the rows the kernel is evaluated on.
    pub fn encoded_rows(&self) -> Array2<f64> {
        concatenate(Axis(1), &[self.numerical.view(), self.categorical.view()])
            .expect("same row count")
    }

    /// Rows in the given order, without re-standardising.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            numerical: self.numerical.select(Axis(0), rows),
            categorical: self.categorical.select(Axis(0), rows),
            row_ids: rows.iter().map(|&r| self.row_ids[r].clone()).collect(),
            truth: self.truth.as_ref().map(|t| t.select(rows)),
        }
    }

    /// Write with a header row; categorical values as level names, the
    /// optional label column last as `class`.
    pub fn write_csv(&self, path: &Path) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.schema.columns.iter().map(Column::name).collect();
        if self.truth.is_some() {
            header.push(LABEL_COLUMN);
        }
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = Vec::with_capacity(header.len());
            let (mut ni, mut ci) = (0, 0);
            for col in &self.schema.columns {
                match col {
                    Column::Numerical { .. } => {
                        rec.push(format!("{:?}", self.numerical[[i, ni]]));
                        ni += 1;
                    }
                    Column::Categorical { levels, .. } => {
                        let block = self.categorical.row(i);
                        let hit = (0..levels.len())
                            .find(|&l| block[ci + l] == 1.0)
                            .expect("one-hot row");
                        rec.push(levels[hit].clone());
                        ci += levels.len();
                    }
                }
            }
            if let Some(t) = &self.truth {
                rec.push(t.class_name_of(i).to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Header name of the optional ground-truth column in CSV files.
pub const LABEL_COLUMN: &str = "class";

/// Class ids in order of sorted class name.
fn truth_from_strings(labels: &[&str]) -> TruthLabels {
    let mut names: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
    names.sort();
    names.dedup();
    let ids = labels
        .iter()
        .map(|l| {
            names
                .binary_search_by(|n| n.as_str().cmp(l))
                .expect("present")
        })
        .collect();
    TruthLabels::new(ids, names)
}

/// Read a headered CSV whose columns are the schema's columns in any order,
/// plus an optional `class` column with ground-truth labels.
pub fn load_csv(
    path: &Path,
    schema: &MixedSchema,
    policy: MissingPolicy,
) -> Result<MixedDataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    let mut positions = Vec::with_capacity(schema.columns.len());
    for col in &schema.columns {
        let pos = header.iter().position(|h| h == col.name()).ok_or_else(|| {
            DatasetError::SchemaMismatch(format!(
                "column {} missing from {}",
                col.name(),
                path.display()
            ))
        })?;
        positions.push(pos);
    }
    let label_pos = header.iter().position(|h| h == LABEL_COLUMN);
    let expected = positions.len() + usize::from(label_pos.is_some());
    if header.len() != expected {
        let unknown: Vec<_> = header
            .iter()
            .filter(|h| *h != LABEL_COLUMN && !schema.columns.iter().any(|c| c.name() == *h))
            .collect();
        return Err(DatasetError::SchemaMismatch(format!(
            "unknown columns {unknown:?}"
        )));
    }
    let mut records = Vec::new();
    let mut labels = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        records.push(positions.iter().map(|&p| rec[p].to_string()).collect());
        if let Some(lp) = label_pos {
            labels.push(rec[lp].to_string());
        }
    }
    MixedDataset::from_records(
        schema.clone(),
        &records,
        label_pos.map(|_| labels.as_slice()),
        None,
        policy,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Shuffled row indices: the first `floor(n·f)` train, the rest validate.
pub fn split_indices(n: usize, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    let f = spec.train_fraction;
    let n_train = if f > 0.0 && f < 1.0 {
        (n as f64 * f).floor() as usize
    } else {
        0
    };
    if n_train < 1 || n_train >= n {
        return Err(DatasetError::DegenerateSplit { n, fraction: f });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let validation = order.split_off(n_train);
    Ok((order, validation))
}

pub fn split(
    dataset: &MixedDataset,
    spec: SplitSpec,
) -> Result<(MixedDataset, MixedDataset), DatasetError> {
    let (train, validation) = split_indices(dataset.n(), spec)?;
    Ok((dataset.subset(&train), dataset.subset(&validation)))
}

/// Per-dataset cache directory `<cache>/<name>`.
pub(crate) fn cache_entry(cache_dir: &Path, name: &str) -> PathBuf {
    cache_dir.join(name)
}
