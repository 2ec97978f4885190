use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::FeatureMatrix;
use crate::ensemble::GaussianPrediction;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    DevIn,
    DevOut,
    EvalIn,
    EvalOut,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::DevIn => "dev_in",
            SplitTag::DevOut => "dev_out",
            SplitTag::EvalIn => "eval_in",
            SplitTag::EvalOut => "eval_out",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: FeatureMatrix,
    pub target: Option<Vec<f64>>,
    pub target_name: Option<String>,
    pub tag: SplitTag,
}

impl Dataset {
    pub fn rows(&self) -> usize {
        self.features.rows()
    }

    /// The target, failing when it is absent or has missing cells.
    pub fn require_target(&self) -> Result<&[f64]> {
        let y = self
            .target
            .as_deref()
            .ok_or_else(|| Error::contract(format!("{} split has no target column", self.tag.as_str())))?;
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "{} split: target missing in data row {}",
                self.tag.as_str(),
                i + 1
            )));
        }
        Ok(y)
    }
}

fn parse_cell(raw: &str) -> std::result::Result<f64, String> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(format!("infinite value '{s}'")),
        Err(_) => Err(format!("cannot parse '{s}' as a number")),
    }
}

/// Loads a numeric CSV with a header row. Empty cells and `nan` are
/// missing. Columns listed in `exclude` are dropped; `target` is split off
/// when given.
pub fn load_csv(path: &Path, target: Option<&str>, exclude: &[String], tag: SplitTag) -> Result<Dataset> {
    let shown = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let parse_err = |row: usize, column: &str, message: String| Error::Parse {
        path: shown.clone(),
        row,
        column: column.to_string(),
        message,
    };
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, "", e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(parse_err(1, "", "missing header row".into()));
    }
    for name in exclude {
        if !header.contains(name) {
            return Err(Error::Config(format!("excluded column '{name}' not in {shown}")));
        }
    }
    let target_col = match target {
        Some(t) => Some(
            header
                .iter()
                .position(|h| h == t)
                .ok_or_else(|| Error::contract(format!("target column '{t}' not found in {shown}")))?,
        ),
        None => None,
    };
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| Some(c) != target_col && !exclude.contains(&header[c]))
        .collect();

    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(line, "", e.to_string()))?;
        if record.len() != header.len() {
            return Err(parse_err(
                line,
                "",
                format!("{} fields, header has {}", record.len(), header.len()),
            ));
        }
        for &c in &feature_cols {
            data.push(parse_cell(&record[c]).map_err(|m| parse_err(line, &header[c], m))?);
        }
        if let Some(c) = target_col {
            y.push(parse_cell(&record[c]).map_err(|m| parse_err(line, &header[c], m))?);
        }
        rows += 1;
    }
    let names = feature_cols.iter().map(|&c| header[c].clone()).collect();
    Ok(Dataset {
        features: FeatureMatrix::new(names, rows, data)?,
        target: target_col.map(|_| y),
        target_name: target.map(str::to_string),
        tag,
    })
}

fn format_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Writes features followed by the target column, if any. Values use the
/// shortest representation that parses back to the same bits.
pub fn write_csv(path: &Path, data: &Dataset) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = create(path)?;
    let mut header = data.features.names().to_vec();
    if let (Some(_), Some(name)) = (&data.target, &data.target_name) {
        header.push(name.clone());
    }
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for r in 0..data.rows() {
        let mut cells: Vec<String> = data.features.row(r).iter().map(|&v| format_cell(v)).collect();
        if let (Some(y), Some(_)) = (&data.target, &data.target_name) {
            cells.push(format_cell(y[r]));
        }
        writeln!(w, "{}", cells.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Prediction table with columns `mu,sigma,uncertainty`.
pub fn write_predictions(path: &Path, preds: &[GaussianPrediction]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = create(path)?;
    writeln!(w, "mu,sigma,uncertainty").map_err(io)?;
    for p in preds {
        writeln!(w, "{},{},{}", p.mu, p.sigma, p.uncertainty).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn empty_and_nan_cells_are_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b\n1,\n2,NaN\n3,4.5\n");
        let d = load_csv(&p, None, &[], SplitTag::Train).unwrap();
        assert_eq!(d.features.rows(), 3);
        assert_eq!(d.features.missing_count(), 2);
        assert_eq!(d.features.get(2, 1), 4.5);
        assert!(d.target.is_none());
    }

    #[test]
    fn target_and_excluded_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "id,x,t,z\n7,1,10,2\n8,3,20,4\n");
        let d = load_csv(&p, Some("t"), &["id".to_string()], SplitTag::DevIn).unwrap();
        assert_eq!(d.features.names(), ["x", "z"]);
        assert_eq!(d.target.as_deref(), Some(&[10.0, 20.0][..]));
        assert!(matches!(load_csv(&p, Some("temp"), &[], SplitTag::Train), Err(Error::Contract(_))));
        assert!(load_csv(&p, None, &["nope".to_string()], SplitTag::Train).is_err());
    }

    #[test]
    fn parse_error_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b\n1,2\n3,abc\n");
        match load_csv(&p, None, &[], SplitTag::Train) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
        let p = write(&dir, "b.csv", "a\ninf\n");
        assert!(matches!(load_csv(&p, None, &[], SplitTag::Train), Err(Error::Parse { .. })));
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (rows, cols) = (50, 4);
        let data: Vec<f64> = (0..rows * cols)
            .map(|i| if i % 17 == 0 { f64::NAN } else { rng.random_range(-1e6..1e6) * rng.random::<f64>().powi(9) })
            .collect();
        let d = Dataset {
            features: FeatureMatrix::unnamed(rows, cols, data).unwrap(),
            target: Some((0..rows).map(|_| rng.random()).collect()),
            target_name: Some("y".into()),
            tag: SplitTag::Train,
        };
        let p = dir.path().join("rt.csv");
        write_csv(&p, &d).unwrap();
        let back = load_csv(&p, Some("y"), &[], SplitTag::Train).unwrap();
        let bits = |f: &FeatureMatrix| f.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.features), bits(&d.features));
        assert_eq!(back.target, d.target);
    }

    #[test]
    fn require_target_rejects_gaps() {
        let d = Dataset {
            features: FeatureMatrix::unnamed(2, 1, vec![0.0, 1.0]).unwrap(),
            target: Some(vec![1.0, f64::NAN]),
            target_name: Some("y".into()),
            tag: SplitTag::DevOut,
        };
        assert!(d.require_target().is_err());
        assert!(Dataset { target: None, ..d }.require_target().is_err());
    }
}
