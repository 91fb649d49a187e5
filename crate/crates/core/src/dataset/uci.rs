//! The four UCI benchmark tables: download, normalise into a cached
//! `raw.csv`, and load with per-dataset cleaning.
//!
//! Cleaning rules: heart and credit keep every row, replacing a missing
//! numerical value by the column mean of the observed values and a missing
//! categorical value by the level `missing`. Adult drops every row with a
//! missing value, which leaves 45222 rows across the train and test files.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    cache_entry, Column, DatasetError, MissingPolicy, MixedDataset, MixedSchema, LABEL_COLUMN,
};

const UCI_BASE: &str = "https://archive.ics.uci.edu/ml/machine-learning-databases";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UciDataset {
    Heart,
    Credit,
    German,
    Adult,
}

impl UciDataset {
    pub const ALL: [UciDataset; 4] = [Self::Heart, Self::Credit, Self::German, Self::Adult];

    pub fn name(self) -> &'static str {
        match self {
            Self::Heart => "heart",
            Self::Credit => "credit",
            Self::German => "german",
            Self::Adult => "adult",
        }
    }

    pub fn expected_rows(self) -> usize {
        match self {
            Self::Heart => 303,
            Self::Credit => 690,
            Self::German => 1000,
            Self::Adult => 45222,
        }
    }

    /// `(file name, URL)` for each source file.
    pub fn sources(self) -> Vec<(&'static str, String)> {
        let f = |dir: &str, file: &'static str| (file, format!("{UCI_BASE}/{dir}/{file}"));
        match self {
            Self::Heart => vec![f("heart-disease", "processed.cleveland.data")],
            Self::Credit => vec![f("credit-screening", "crx.data")],
            Self::German => vec![f("statlog/german", "german.data")],
            Self::Adult => vec![f("adult", "adult.data"), f("adult", "adult.test")],
        }
    }

    /// Column names, `true` for numerical.
    fn columns(self) -> &'static [(&'static str, bool)] {
        match self {
            Self::Heart => &[
                ("age", true),
                ("sex", false),
                ("cp", false),
                ("trestbps", true),
                ("chol", true),
                ("fbs", false),
                ("restecg", false),
                ("thalach", true),
                ("exang", false),
                ("oldpeak", true),
                ("slope", false),
                ("ca", true),
                ("thal", false),
            ],
            Self::Credit => &[
                ("a1", false),
                ("a2", true),
                ("a3", true),
                ("a4", false),
                ("a5", false),
                ("a6", false),
                ("a7", false),
                ("a8", true),
                ("a9", false),
                ("a10", false),
                ("a11", true),
                ("a12", false),
                ("a13", false),
                ("a14", true),
                ("a15", true),
            ],
            Self::German => &[
                ("checking", false),
                ("duration", true),
                ("history", false),
                ("purpose", false),
                ("amount", true),
                ("savings", false),
                ("employment", false),
                ("installment_rate", true),
                ("personal_status", false),
                ("debtors", false),
                ("residence", true),
                ("property", false),
                ("age", true),
                ("installment_plans", false),
                ("housing", false),
                ("existing_credits", true),
                ("job", false),
                ("liable", true),
                ("telephone", false),
                ("foreign", false),
            ],
            Self::Adult => &[
                ("age", true),
                ("workclass", false),
                ("fnlwgt", true),
                ("education", false),
                ("education_num", true),
                ("marital_status", false),
                ("occupation", false),
                ("relationship", false),
                ("race", false),
                ("sex", false),
                ("capital_gain", true),
                ("capital_loss", true),
                ("hours_per_week", true),
                ("native_country", false),
            ],
        }
    }

    /// Split a source line into trimmed fields; `None` skips the line.
    fn fields(self, line: &str) -> Option<Vec<String>> {
        let line = line.trim();
        if line.is_empty() || line.starts_with('|') {
            return None;
        }
        let parts: Vec<String> = match self {
            Self::German => line.split_whitespace().map(str::to_string).collect(),
            _ => line.split(',').map(|s| s.trim().to_string()).collect(),
        };
        Some(parts)
    }

    /// Normalise one parsed source row to `features + [label]`, or drop it.
    fn normalise(self, mut row: Vec<String>) -> Result<Option<Vec<String>>, DatasetError> {
        let width = self.columns().len() + 1;
        if row.len() != width {
            return Err(DatasetError::Integrity(format!(
                "{}: expected {width} fields, found {}",
                self.name(),
                row.len()
            )));
        }
        match self {
            Self::Heart => {
                // Categorical codes appear as "1.0"; store them as "1".
                for (value, &(_, numerical)) in row.iter_mut().zip(self.columns()) {
                    if !numerical {
                        if let Ok(v) = value.parse::<f64>() {
                            *value = format!("{}", v as i64);
                        }
                    }
                }
                let label = row.last_mut().expect("width checked");
                let diseased = label.parse::<f64>().map_err(|_| {
                    DatasetError::Integrity(format!("heart: bad class value {label:?}"))
                })? > 0.0;
                *label = if diseased { "1" } else { "0" }.to_string();
            }
            Self::Adult => {
                if row.iter().any(|v| v == "?") {
                    return Ok(None);
                }
                let label = row.last_mut().expect("width checked");
                *label = label.trim_end_matches('.').to_string();
            }
            Self::Credit | Self::German => {}
        }
        Ok(Some(row))
    }

    fn schema_header(self) -> Vec<&'static str> {
        self.columns()
            .iter()
            .map(|c| c.0)
            .chain([LABEL_COLUMN])
            .collect()
    }
}

impl fmt::Display for UciDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UciDataset {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s.to_ascii_lowercase())
            .ok_or_else(|| DatasetError::SchemaMismatch(format!("unknown dataset {s:?}")))
    }
}

/// Contents of `<cache>/<name>/meta`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheMeta {
    pub source: Vec<String>,
    pub rows: usize,
}

fn read_source(path: &Path) -> Result<String, DatasetError> {
    let bytes = fs::read(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut text = String::new();
        flate2::read::GzDecoder::new(bytes.as_slice()).read_to_string(&mut text)?;
        Ok(text)
    } else {
        String::from_utf8(bytes).map_err(|e| DatasetError::Integrity(e.to_string()))
    }
}

/// Find `file` (or `file.gz`) under `from`, a directory or a single file.
fn local_source(from: &Path, file: &str, single: bool) -> Option<PathBuf> {
    if from.is_file() {
        return single.then(|| from.to_path_buf());
    }
    [from.join(file), from.join(format!("{file}.gz"))]
        .into_iter()
        .find(|p| p.is_file())
}

fn download(url: &str) -> Result<String, DatasetError> {
    let resp = ureq::get(url)
        .timeout(std::time::Duration::from_secs(60))
        .call()
        .map_err(|e| DatasetError::Network(format!("{url}: {e}")))?;
    let mut text = String::new();
    resp.into_reader()
        .read_to_string(&mut text)
        .map_err(|e| DatasetError::Network(format!("{url}: {e}")))?;
    Ok(text)
}

fn read_meta(path: &Path) -> Option<CacheMeta> {
    toml::from_str(&fs::read_to_string(path).ok()?).ok()
}

/// Ensure `<cache>/<name>/raw.csv` exists and holds the expected number of
/// rows, returning its path. A warm cache is returned without touching the
/// network. Sources come from `from` when given, otherwise from UCI.
pub fn fetch_uci(
    dataset: UciDataset,
    cache_dir: &Path,
    from: Option<&Path>,
) -> Result<PathBuf, DatasetError> {
    let entry = cache_entry(cache_dir, dataset.name());
    fs::create_dir_all(&entry)?;
    let lock = File::create(entry.join(".lock"))?;
    lock.lock()?;
    let raw = entry.join("raw.csv");
    let meta_path = entry.join("meta");
    if raw.is_file() {
        if let Some(meta) = read_meta(&meta_path) {
            if meta.rows == dataset.expected_rows() {
                return Ok(raw);
            }
        }
    }

    let sources = dataset.sources();
    let single = sources.len() == 1;
    let mut rows = Vec::new();
    let mut origin = Vec::new();
    for (file, url) in &sources {
        let text = match from {
            Some(dir) => {
                let path = local_source(dir, file, single).ok_or_else(|| {
                    DatasetError::Network(format!("{file} not found under {}", dir.display()))
                })?;
                origin.push(path.display().to_string());
                read_source(&path)?
            }
            None => {
                origin.push(url.clone());
                download(url)?
            }
        };
        for line in text.lines() {
            if let Some(fields) = dataset.fields(line) {
                if let Some(row) = dataset.normalise(fields)? {
                    rows.push(row);
                }
            }
        }
    }
    if rows.len() != dataset.expected_rows() {
        return Err(DatasetError::Integrity(format!(
            "{}: expected {} rows, found {}",
            dataset.name(),
            dataset.expected_rows(),
            rows.len()
        )));
    }

    let tmp = entry.join("raw.csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        w.write_record(dataset.schema_header())?;
        for row in &rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, &raw)?;
    let meta = CacheMeta {
        source: origin,
        rows: rows.len(),
    };
    fs::write(&meta_path, toml::to_string(&meta).expect("plain struct"))?;
    Ok(raw)
}

/// Load a cached dataset, applying the per-dataset cleaning rules. The
/// categorical levels are the sorted distinct values observed.
pub fn load_uci(dataset: UciDataset, cache_dir: &Path) -> Result<MixedDataset, DatasetError> {
    let raw = cache_entry(cache_dir, dataset.name()).join("raw.csv");
    let mut reader = csv::Reader::from_path(&raw)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != dataset.schema_header() {
        return Err(DatasetError::SchemaMismatch(format!(
            "{} has header {header:?}",
            raw.display()
        )));
    }
    let cols = dataset.columns();
    let mut records: Vec<Vec<String>> = Vec::new();
    let mut labels = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let mut fields: Vec<String> = rec.iter().map(str::to_string).collect();
        labels.push(fields.pop().expect("header checked"));
        records.push(fields);
    }

    let mut columns = Vec::with_capacity(cols.len());
    for (j, &(name, numerical)) in cols.iter().enumerate() {
        if numerical {
            let observed: Vec<f64> = records
                .iter()
                .filter(|r| r[j] != "?")
                .map(|r| {
                    r[j].parse::<f64>().map_err(|_| DatasetError::ParseError {
                        row: 0,
                        column: name.to_string(),
                        value: r[j].clone(),
                    })
                })
                .collect::<Result<_, _>>()?;
            if observed.len() < records.len() {
                let mean = observed.iter().sum::<f64>() / observed.len().max(1) as f64;
                for r in &mut records {
                    if r[j] == "?" {
                        r[j] = format!("{mean:?}");
                    }
                }
            }
            columns.push(Column::Numerical {
                name: name.to_string(),
            });
        } else {
            for r in &mut records {
                if r[j] == "?" {
                    r[j] = "missing".to_string();
                }
            }
            let levels: BTreeSet<&str> = records.iter().map(|r| r[j].as_str()).collect();
            columns.push(Column::Categorical {
                name: name.to_string(),
                levels: levels.into_iter().map(str::to_string).collect(),
            });
        }
    }
    let schema = MixedSchema::new(columns)?;
    let ds =
        MixedDataset::from_records(schema, &records, Some(&labels), None, MissingPolicy::Error)?;
    if ds.n() != dataset.expected_rows() {
        return Err(DatasetError::Integrity(format!(
            "{}: loaded {} rows, expected {}",
            dataset.name(),
            ds.n(),
            dataset.expected_rows()
        )));
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adult_quirks_are_normalised() {
        let d = UciDataset::Adult;
        assert!(d.fields("|1x3 Cross validator").is_none());
        assert!(d.fields("   ").is_none());
        let line = "25, Private, 226802, 11th, 7, Never-married, Machine-op-inspct, Own-child, Black, Male, 0, 0, 40, United-States, <=50K.";
        let row = d.normalise(d.fields(line).unwrap()).unwrap().unwrap();
        assert_eq!(row.last().unwrap(), "<=50K");
        let missing = line.replace("Private", "?");
        assert!(d.normalise(d.fields(&missing).unwrap()).unwrap().is_none());
    }

    #[test]
    fn heart_codes_and_class() {
        let d = UciDataset::Heart;
        let row = d
            .normalise(
                d.fields("63.0,1.0,1.0,145.0,233.0,1.0,2.0,150.0,0.0,2.3,3.0,?,6.0,2")
                    .unwrap(),
            )
            .unwrap()
            .unwrap();
        assert_eq!(row[1], "1");
        assert_eq!(row[0], "63.0");
        assert_eq!(row[11], "?");
        assert_eq!(row[12], "6");
        assert_eq!(row[13], "1");
        assert!(d.normalise(vec!["1".into()]).is_err());
    }

    #[test]
    fn names_round_trip() {
        for d in UciDataset::ALL {
            assert_eq!(d.name().parse::<UciDataset>().unwrap(), d);
        }
        assert!("iris".parse::<UciDataset>().is_err());
    }
}
