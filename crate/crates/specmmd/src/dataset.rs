//! CSV ingestion of real two-group data (microarray-style feature matrices)
//! into a [`TwoSample`].
//!
//! Labels come either from a designated column of the data file (excluded
//! from the features) or from a separate one-column file aligned row-for-row
//! with the data. Rows labeled `group_a` become X, rows labeled `group_b`
//! become Y, original order preserved within groups; all other labels are
//! ignored.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::TwoSample;

/// Where the group labels live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelSource {
    /// Column of the data file, by header name or 0-based index.
    Column(String),
    /// Separate one-column file (optionally with a header when `has_header`).
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub data_path: PathBuf,
    pub labels: LabelSource,
    pub group_a: String,
    pub group_b: String,
    pub delimiter: u8,
    pub has_header: bool,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.group_a == self.group_b {
            return Err(Error::Parameter(format!(
                "group labels must differ, both are {:?}",
                self.group_a
            )));
        }
        Ok(())
    }
}

fn open_reader(path: &Path, delimiter: u8, has_header: bool) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(has_header)
        .flexible(false)
        .from_reader(file))
}

fn read_label_file(path: &Path, delimiter: u8, has_header: bool) -> Result<Vec<String>> {
    let mut reader = open_reader(path, delimiter, has_header)?;
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        match record.get(0) {
            Some(v) if record.len() == 1 => labels.push(v.trim().to_string()),
            _ => {
                return Err(Error::Data(format!(
                    "label file {} must have exactly one column (row {} has {})",
                    path.display(),
                    labels.len() + 1,
                    record.len()
                )))
            }
        }
    }
    Ok(labels)
}

/// Load the data file and split rows into X/Y by group label.
pub fn load_two_sample(manifest: &DatasetManifest) -> Result<TwoSample> {
    manifest.validate()?;
    let mut reader = open_reader(&manifest.data_path, manifest.delimiter, manifest.has_header)?;

    // Resolve the label column if the labels live inside the data file.
    let label_col: Option<usize> = match &manifest.labels {
        LabelSource::File(_) => None,
        LabelSource::Column(name) => {
            if let Ok(idx) = name.parse::<usize>() {
                Some(idx)
            } else if manifest.has_header {
                let headers = reader.headers()?.clone();
                let idx = headers.iter().position(|h| h == name).ok_or_else(|| {
                    Error::Data(format!("label column {name:?} not found in header"))
                })?;
                Some(idx)
            } else {
                return Err(Error::Parameter(format!(
                    "label column {name:?} needs a header row (or use a 0-based index)"
                )));
            }
        }
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut width: Option<usize> = None;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if let Some(col) = label_col {
            if col >= record.len() {
                return Err(Error::Data(format!(
                    "row {}: label column index {col} out of range ({} fields)",
                    row_idx + 1,
                    record.len()
                )));
            }
        }
        let mut row = Vec::with_capacity(record.len().saturating_sub(label_col.is_some() as usize));
        for (col_idx, field) in record.iter().enumerate() {
            if Some(col_idx) == label_col {
                labels.push(field.trim().to_string());
                continue;
            }
            let value: f64 = field.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "row {}, column {} of {}: {field:?} is not numeric",
                    row_idx + 1,
                    col_idx + 1,
                    manifest.data_path.display()
                ))
            })?;
            if !value.is_finite() {
                return Err(Error::Data(format!(
                    "row {}, column {} of {}: non-finite value {field:?}",
                    row_idx + 1,
                    col_idx + 1,
                    manifest.data_path.display()
                )));
            }
            row.push(value);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Data(format!(
                    "row {}: expected {w} features, found {}",
                    row_idx + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        rows.push(row);
    }

    if let LabelSource::File(path) = &manifest.labels {
        labels = read_label_file(path, manifest.delimiter, manifest.has_header)?;
    }
    if labels.len() != rows.len() {
        return Err(Error::Alignment(format!(
            "{} labels for {} data rows",
            labels.len(),
            rows.len()
        )));
    }

    let d = width.unwrap_or(0);
    if rows.is_empty() || d == 0 {
        return Err(Error::Data(format!(
            "{} contains no usable data",
            manifest.data_path.display()
        )));
    }

    let mut x_rows: Vec<&Vec<f64>> = Vec::new();
    let mut y_rows: Vec<&Vec<f64>> = Vec::new();
    for (row, label) in rows.iter().zip(&labels) {
        if *label == manifest.group_a {
            x_rows.push(row);
        } else if *label == manifest.group_b {
            y_rows.push(row);
        }
    }
    if x_rows.len() < 2 || y_rows.len() < 2 {
        return Err(Error::Design(format!(
            "groups need at least 2 rows each: {:?} has {}, {:?} has {}",
            manifest.group_a,
            x_rows.len(),
            manifest.group_b,
            y_rows.len()
        )));
    }

    let build = |selected: &[&Vec<f64>]| {
        let mut out = Array2::zeros((selected.len(), d));
        for (i, row) in selected.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                out[[i, j]] = *v;
            }
        }
        out
    };
    TwoSample::new(build(&x_rows), build(&y_rows))
}

/// Write a sample back out as `label,feature...` rows with a header; the
/// float rendering round-trips bitwise.
pub fn write_two_sample_csv(
    sample: &TwoSample,
    path: &Path,
    group_a: &str,
    group_b: &str,
) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().from_path(path)?;
    let mut header = vec!["group".to_string()];
    header.extend((0..sample.dim()).map(|j| format!("f{j}")));
    writer.write_record(&header)?;
    let mut record = Vec::with_capacity(sample.dim() + 1);
    for (i, row) in sample.pooled().rows().into_iter().enumerate() {
        record.clear();
        record.push(if i < sample.m() {
            group_a.to_string()
        } else {
            group_b.to_string()
        });
        record.extend(row.iter().map(|v| format!("{v}")));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Shape and per-group feature moment ranges.
#[derive(Debug, Clone, Serialize)]
pub struct SampleSummary {
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub x_mean_range: (f64, f64),
    pub y_mean_range: (f64, f64),
    pub x_variance_range: (f64, f64),
    pub y_variance_range: (f64, f64),
}

impl SampleSummary {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "m = {}, n = {}, d = {}", self.m, self.n, self.d);
        let _ = writeln!(
            out,
            "X feature means in [{:.6}, {:.6}], variances in [{:.6}, {:.6}]",
            self.x_mean_range.0,
            self.x_mean_range.1,
            self.x_variance_range.0,
            self.x_variance_range.1
        );
        let _ = writeln!(
            out,
            "Y feature means in [{:.6}, {:.6}], variances in [{:.6}, {:.6}]",
            self.y_mean_range.0,
            self.y_mean_range.1,
            self.y_variance_range.0,
            self.y_variance_range.1
        );
        out
    }
}

pub fn summarize(sample: &TwoSample) -> SampleSummary {
    let ranges = |block: ndarray::ArrayView2<f64>| {
        let rows = block.nrows() as f64;
        let mut mean_lo = f64::INFINITY;
        let mut mean_hi = f64::NEG_INFINITY;
        let mut var_lo = f64::INFINITY;
        let mut var_hi = f64::NEG_INFINITY;
        for col in block.columns() {
            let mean = col.sum() / rows;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (rows - 1.0);
            mean_lo = mean_lo.min(mean);
            mean_hi = mean_hi.max(mean);
            var_lo = var_lo.min(var);
            var_hi = var_hi.max(var);
        }
        ((mean_lo, mean_hi), (var_lo, var_hi))
    };
    let (x_mean_range, x_variance_range) = ranges(sample.x());
    let (y_mean_range, y_variance_range) = ranges(sample.y());
    SampleSummary {
        m: sample.m(),
        n: sample.n(),
        d: sample.dim(),
        x_mean_range,
        y_mean_range,
        x_variance_range,
        y_variance_range,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn manifest(dir: &Path, labels: LabelSource) -> DatasetManifest {
        DatasetManifest {
            data_path: dir.join("data.csv"),
            labels,
            group_a: "a".into(),
            group_b: "b".into(),
            delimiter: b',',
            has_header: true,
        }
    }

    fn write_file(path: &Path, contents: &str) {
        let mut f = std::fs::File::create(path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
    }

    #[test]
    fn label_column_filtering() {
        let dir = tempfile::tempdir().unwrap();
        write_file(
            &dir.path().join("data.csv"),
            "grp,f0,f1\na,1,2\na,3,4\nb,5,6\nb,7,8\na,9,10\n",
        );
        let sample =
            load_two_sample(&manifest(dir.path(), LabelSource::Column("grp".into()))).unwrap();
        assert_eq!(sample.m(), 3);
        assert_eq!(sample.n(), 2);
        assert_eq!(sample.dim(), 2);
        // Original row order preserved within groups.
        assert_eq!(sample.x()[[0, 0]], 1.0);
        assert_eq!(sample.x()[[2, 0]], 9.0);
        assert_eq!(sample.y()[[0, 0]], 5.0);
    }

    #[test]
    fn separate_label_file() {
        let dir = tempfile::tempdir().unwrap();
        write_file(&dir.path().join("data.csv"), "f0\n1\n2\n3\n4\n");
        write_file(&dir.path().join("labels.csv"), "grp\na\nb\na\nb\n");
        let sample = load_two_sample(&manifest(
            dir.path(),
            LabelSource::File(dir.path().join("labels.csv")),
        ))
        .unwrap();
        assert_eq!(sample.m(), 2);
        assert_eq!(sample.n(), 2);
    }

    #[test]
    fn nan_cell_named_in_error() {
        let dir = tempfile::tempdir().unwrap();
        write_file(
            &dir.path().join("data.csv"),
            "grp,f0\na,1\na,NaN\nb,3\nb,4\n",
        );
        let err =
            load_two_sample(&manifest(dir.path(), LabelSource::Column("grp".into()))).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2"), "{msg}");
        assert!(msg.contains("column 2"), "{msg}");
    }

    #[test]
    fn misaligned_labels_error() {
        let dir = tempfile::tempdir().unwrap();
        write_file(&dir.path().join("data.csv"), "f0\n1\n2\n3\n4\n");
        write_file(&dir.path().join("labels.csv"), "grp\na\nb\na\n");
        let err = load_two_sample(&manifest(
            dir.path(),
            LabelSource::File(dir.path().join("labels.csv")),
        ))
        .unwrap_err();
        assert!(matches!(err, Error::Alignment(_)));
    }

    #[test]
    fn small_group_is_design_error() {
        let dir = tempfile::tempdir().unwrap();
        write_file(&dir.path().join("data.csv"), "grp,f0\na,1\na,2\nb,3\n");
        let err =
            load_two_sample(&manifest(dir.path(), LabelSource::Column("grp".into()))).unwrap_err();
        assert!(matches!(err, Error::Design(_)));
    }

    #[test]
    fn identical_group_labels_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_file(&dir.path().join("data.csv"), "grp,f0\na,1\n");
        let mut m = manifest(dir.path(), LabelSource::Column("grp".into()));
        m.group_b = "a".into();
        assert!(matches!(load_two_sample(&m), Err(Error::Parameter(_))));
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let x = crate::stream::sample_matrix(
            &crate::stream::StreamKey::new(5),
            &crate::stream::DistSpec::StdNormal,
            4,
            3,
        )
        .unwrap();
        let y = crate::stream::sample_matrix(
            &crate::stream::StreamKey::new(6),
            &crate::stream::DistSpec::StdNormal,
            3,
            3,
        )
        .unwrap();
        let sample = TwoSample::new(x, y).unwrap();
        let path = dir.path().join("out.csv");
        write_two_sample_csv(&sample, &path, "a", "b").unwrap();
        let mut m = manifest(dir.path(), LabelSource::Column("group".into()));
        m.data_path = path;
        let reloaded = load_two_sample(&m).unwrap();
        assert_eq!(reloaded.m(), sample.m());
        assert!(sample
            .pooled()
            .iter()
            .zip(reloaded.pooled().iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));

        // Swapping the groups swaps the blocks exactly.
        let mut swapped = m.clone();
        swapped.group_a = "b".into();
        swapped.group_b = "a".into();
        let sw = load_two_sample(&swapped).unwrap();
        assert_eq!(sw.m(), sample.n());
        assert!(sw
            .x()
            .iter()
            .zip(sample.y().iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn summary_of_identical_groups_matches() {
        let x = ndarray::array![[1.0, 2.0], [3.0, 4.0]];
        let sample = TwoSample::new(x.clone(), x).unwrap();
        let s = summarize(&sample);
        assert_eq!(s.m, 2);
        assert_eq!(s.x_mean_range, s.y_mean_range);
        assert_eq!(s.x_variance_range, s.y_variance_range);
        assert!(s.render_text().contains("m = 2, n = 2, d = 2"));
    }

    #[test]
    fn missing_file_names_path() {
        let m = DatasetManifest {
            data_path: PathBuf::from("/nonexistent/thing.csv"),
            labels: LabelSource::Column("grp".into()),
            group_a: "a".into(),
            group_b: "b".into(),
            delimiter: b',',
            has_header: true,
        };
        let err = load_two_sample(&m).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/thing.csv"));
    }
}
