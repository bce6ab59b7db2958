//! CSV files exchanged between the tools: feature tables, scores, content
//! keys and extraction manifests.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, VqaError};
use crate::features::{ManifestRow, VariantConfig};

/// Formats a float with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| VqaError::io(path, e))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| VqaError::io(path, e))
}

fn parse_f64(field: &str, what: &str, line: u64) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| VqaError::Validation(format!("line {line}: bad {what} {field:?}")))
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Feature rows keyed by id, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub variant: VariantConfig,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl FeatureTable {
    pub fn new(variant: VariantConfig) -> Self {
        FeatureTable {
            variant,
            rows: Vec::new(),
        }
    }

    pub fn labels(&self) -> Vec<String> {
        self.variant.labels()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|(id, _)| id.as_str())
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["id".to_string()];
        header.extend(self.labels());
        w.write_record(&header)?;
        for (id, values) in &self.rows {
            let mut record = vec![id.clone()];
            record.extend(values.iter().map(|&v| format_f64(v)));
            w.write_record(&record)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(create(path.as_ref())?)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        if headers.get(0) != Some("id") {
            return Err(VqaError::Validation(
                "feature table must start with an id column".into(),
            ));
        }
        let labels: Vec<&str> = headers.iter().skip(1).collect();
        let variant = VariantConfig::from_labels(&labels)
            .ok_or_else(|| VqaError::Validation("feature header does not match any model variant".into()))?;
        let mut table = FeatureTable::new(variant);
        for record in r.records() {
            let record = record?;
            let line = line_of(&record);
            let id = record[0].to_string();
            let values = record
                .iter()
                .skip(1)
                .map(|f| parse_f64(f, "feature", line))
                .collect::<Result<Vec<_>>>()?;
            table.rows.push((id, values));
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(open(path.as_ref())?)
    }
}

/// Reads a two-column `id,<value>` CSV with a header row.
fn read_keyed<R: Read>(input: R, what: &str) -> Result<Vec<(String, String)>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for record in r.records() {
        let record = record?;
        if record.len() < 2 {
            return Err(VqaError::Validation(format!(
                "line {}: expected id,{what}",
                line_of(&record)
            )));
        }
        let id = record[0].trim().to_string();
        if seen.insert(id.clone(), ()).is_some() {
            return Err(VqaError::Validation(format!("duplicate id {id:?} in {what} file")));
        }
        out.push((id, record[1].trim().to_string()));
    }
    Ok(out)
}

/// `id,score` rows.
pub fn read_scores<R: Read>(input: R) -> Result<Vec<(String, f64)>> {
    read_keyed(input, "score")?
        .into_iter()
        .enumerate()
        .map(|(i, (id, s))| {
            let v = parse_f64(&s, "score", i as u64 + 2)?;
            Ok((id, v))
        })
        .collect()
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    read_scores(open(path.as_ref())?)
}

/// `id,content` rows.
pub fn read_contents<R: Read>(input: R) -> Result<Vec<(String, String)>> {
    read_keyed(input, "content")
}

pub fn load_contents(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    read_contents(open(path.as_ref())?)
}

/// `id,ref_path,cmp_path` rows. Relative paths resolve against `base`.
pub fn read_manifest<R: Read>(input: R, base: Option<&Path>) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        if record.len() < 3 {
            return Err(VqaError::Validation(format!(
                "line {}: expected id,ref_path,cmp_path",
                line_of(&record)
            )));
        }
        let resolve = |p: &str| {
            let p = Path::new(p.trim());
            match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p.to_path_buf(),
            }
        };
        rows.push(ManifestRow {
            id: record[0].trim().to_string(),
            ref_path: resolve(&record[1]),
            cmp_path: resolve(&record[2]),
        });
    }
    Ok(rows)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    read_manifest(open(path)?, path.parent())
}

/// Looks up a value for every id of a table, failing on the first missing one.
pub fn align<'a, T: Clone>(ids: impl Iterator<Item = &'a str>, values: &[(String, T)], what: &str) -> Result<Vec<T>> {
    let index: HashMap<&str, &T> = values.iter().map(|(k, v)| (k.as_str(), v)).collect();
    ids.map(|id| {
        index
            .get(id)
            .map(|&v| v.clone())
            .ok_or_else(|| VqaError::Validation(format!("no {what} for id {id:?}")))
    })
    .collect()
}
