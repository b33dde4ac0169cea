use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetMatrix, Task};
use crate::error::{Error, Result};

/// How to read a raw CSV file into a [`DatasetMatrix`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub label_column: String,
    /// Columns whose string values are label-encoded (sorted distinct values -> 0, 1, ...).
    pub categorical: Vec<String>,
    pub drop_columns: Vec<String>,
    pub delimiter: char,
    pub has_header: bool,
    /// Column names for header-less files.
    pub column_names: Option<Vec<String>>,
    /// Lines discarded before the header (or the first data row).
    pub skip_rows: usize,
    pub drop_duplicates: bool,
    /// Explicit label encoding; position in this list is the class id.
    pub label_order: Option<Vec<String>>,
    /// Task to assume instead of inferring it from the distinct label count.
    pub task: Option<Task>,
    pub missing_tokens: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            label_column: "label".to_string(),
            categorical: Vec::new(),
            drop_columns: Vec::new(),
            delimiter: ',',
            has_header: true,
            column_names: None,
            skip_rows: 0,
            drop_duplicates: false,
            label_order: None,
            task: None,
            missing_tokens: ["", "?", "NA", "NaN", "nan"].map(String::from).to_vec(),
        }
    }
}

impl CsvSchema {
    pub fn with_label(label_column: &str) -> Self {
        Self {
            label_column: label_column.to_string(),
            ..Self::default()
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<DatasetMatrix> {
    let path = path.as_ref();
    let load_err = |message: String| Error::Load {
        path: path.to_path_buf(),
        message,
    };
    if !schema.delimiter.is_ascii() {
        return Err(load_err(format!(
            "delimiter {:?} is not ASCII",
            schema.delimiter
        )));
    }
    let mut reader = ::csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .has_headers(false)
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_path(path)
        .map_err(|e| load_err(e.to_string()))?;

    let mut records = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: i + 1,
            message: e.to_string(),
        })?;
        if i >= schema.skip_rows {
            records.push((i + 1, record));
        }
    }

    let header: Vec<String> = if schema.has_header {
        if records.is_empty() {
            return Err(load_err("missing header row".into()));
        }
        let (_, h) = records.remove(0);
        h.iter().map(|s| s.trim_matches('"').to_string()).collect()
    } else {
        schema
            .column_names
            .clone()
            .ok_or_else(|| load_err("header-less file needs column_names".into()))?
    };

    let find = |name: &str| header.iter().position(|h| h == name);
    let label_idx = find(&schema.label_column)
        .ok_or_else(|| load_err(format!("label column `{}` not found", schema.label_column)))?;
    for name in schema.categorical.iter().chain(&schema.drop_columns) {
        if find(name).is_none() {
            return Err(load_err(format!("column `{name}` not found")));
        }
    }
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&j| j != label_idx && !schema.drop_columns.contains(&header[j]))
        .collect();
    let categorical: BTreeSet<usize> = schema.categorical.iter().filter_map(|c| find(c)).collect();
    let is_missing = |s: &str| schema.missing_tokens.iter().any(|t| t == s);

    for (line, record) in &records {
        if record.len() != header.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: *line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
    }

    // Categorical encodings from the sorted distinct values of each column.
    let mut encodings: BTreeMap<usize, BTreeMap<String, f64>> = BTreeMap::new();
    for &j in &categorical {
        let distinct: BTreeSet<&str> = records
            .iter()
            .map(|(_, r)| &r[j])
            .filter(|s| !is_missing(s))
            .collect();
        let map = distinct
            .into_iter()
            .enumerate()
            .map(|(code, s)| (s.to_string(), code as f64))
            .collect();
        encodings.insert(j, map);
    }

    let label_codes = encode_labels(&records, label_idx, schema, path)?;
    let mut labels = Vec::with_capacity(records.len());
    let mut features = Vec::with_capacity(records.len() * feature_cols.len());
    for (line, record) in &records {
        let raw = &record[label_idx];
        let code = label_codes.get(raw).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            row: *line,
            message: format!("unknown or missing label {raw:?}"),
        })?;
        labels.push(*code);
        for &j in &feature_cols {
            let field = &record[j];
            let value = if is_missing(field) {
                f64::NAN
            } else if let Some(map) = encodings.get(&j) {
                map[field]
            } else {
                field.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    row: *line,
                    message: format!("column `{}`: cannot parse {field:?} as a number", header[j]),
                })?
            };
            features.push(value);
        }
    }

    let m = feature_cols.len();
    if !records.is_empty() {
        for (k, &j) in feature_cols.iter().enumerate() {
            if (0..records.len()).all(|i| features[i * m + k].is_nan()) {
                return Err(load_err(format!(
                    "column `{}` is entirely missing",
                    header[j]
                )));
            }
        }
    }

    let distinct = label_codes.values().collect::<BTreeSet<_>>().len();
    let task = schema
        .task
        .unwrap_or_else(|| Task::from_class_count(distinct));
    let names = feature_cols.iter().map(|&j| header[j].clone()).collect();
    let data = DatasetMatrix::new(features, m, labels, names, task)
        .map_err(|e| load_err(e.to_string()))?;
    Ok(if schema.drop_duplicates {
        data.dedup_rows()
    } else {
        data
    })
}

fn encode_labels(
    records: &[(usize, ::csv::StringRecord)],
    label_idx: usize,
    schema: &CsvSchema,
    path: &Path,
) -> Result<BTreeMap<String, u32>> {
    if let Some(order) = &schema.label_order {
        return Ok(order
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect());
    }
    let distinct: BTreeSet<&str> = records.iter().map(|(_, r)| &r[label_idx]).collect();
    let numeric: Option<Vec<(f64, &str)>> = distinct
        .iter()
        .map(|s| s.parse::<f64>().ok().map(|v| (v, *s)))
        .collect();
    let ordered: Vec<&str> = match numeric {
        Some(mut pairs) => {
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            pairs.into_iter().map(|(_, s)| s).collect()
        }
        None => distinct.into_iter().collect(),
    };
    if let Some(task) = schema.task {
        if ordered.len() > task.num_classes() {
            return Err(Error::Load {
                path: path.to_path_buf(),
                message: format!("{} distinct labels for a {task:?} task", ordered.len()),
            });
        }
        // Prepared files carry class ids directly.
        if let Some(pairs) = ordered
            .iter()
            .map(|s| s.parse::<u32>().ok().map(|v| (s.to_string(), v)))
            .collect::<Option<Vec<_>>>()
        {
            return Ok(pairs.into_iter().collect());
        }
    }
    Ok(ordered
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s.to_string(), i as u32))
        .collect())
}

/// Writes a fully numeric CSV with a `label` column last. Missing values are empty fields.
pub fn write_csv(path: impl AsRef<Path>, data: &DatasetMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut writer = ::csv::Writer::from_path(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let to_err = |e: ::csv::Error| Error::Load {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut header: Vec<&str> = data.feature_names().iter().map(String::as_str).collect();
    header.push("label");
    writer.write_record(&header).map_err(to_err)?;
    for i in 0..data.num_rows() {
        let mut fields: Vec<String> = data
            .row(i)
            .iter()
            .map(|v| {
                if v.is_nan() {
                    String::new()
                } else {
                    v.to_string()
                }
            })
            .collect();
        fields.push(data.labels()[i].to_string());
        writer.write_record(&fields).map_err(to_err)?;
    }
    writer.flush()?;
    Ok(())
}
