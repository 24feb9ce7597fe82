use std::io::{Read, Write};
use std::path::Path;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::{HydroError, LeakEvent};
use crate::network::JunctionIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub config_hash: String,
    pub timestep_s: f64,
    #[serde(default)]
    pub leak_events: Vec<LeakEvent>,
}

/// Junction pressure heads (m) over time; row `t` holds every junction at `timestamps[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureDataset {
    pub timestamps: Vec<f64>,
    pub pressures: Array2<f64>,
    pub labels: JunctionIndex,
    pub metadata: DatasetMetadata,
}

impl PressureDataset {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_junctions(&self) -> usize {
        self.pressures.ncols()
    }

    /// Rows `[start, end)` as a new dataset with the same labels and metadata.
    pub fn slice_rows(&self, start: usize, end: usize) -> PressureDataset {
        PressureDataset {
            timestamps: self.timestamps[start..end].to_vec(),
            pressures: self.pressures.slice(s![start..end, ..]).to_owned(),
            labels: self.labels.clone(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), HydroError> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["time_s".to_string()];
        header.extend(self.labels.labels().iter().cloned());
        wr.write_record(&header)?;
        let mut rec = Vec::with_capacity(header.len());
        for (t, row) in self.timestamps.iter().zip(self.pressures.rows()) {
            rec.clear();
            rec.push(t.to_string());
            rec.extend(row.iter().map(|p| p.to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Writes `<stem>.csv` and the `<stem>.meta.json` sidecar.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), HydroError> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join(format!("{stem}.csv")))?)?;
        let meta = serde_json::to_string_pretty(&self.metadata)?;
        std::fs::write(dir.join(format!("{stem}.meta.json")), meta + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str, expected: &JunctionIndex) -> Result<PressureDataset, HydroError> {
        let meta: DatasetMetadata =
            serde_json::from_slice(&std::fs::read(dir.join(format!("{stem}.meta.json")))?)?;
        let mut ds = import_csv(std::fs::File::open(dir.join(format!("{stem}.csv")))?, expected)?;
        ds.metadata = meta;
        Ok(ds)
    }
}

/// Reads a `time_s,<labels>` CSV whose label columns must equal `expected` in order.
///
/// Row and column numbers in errors are 1-based data rows and 0-based columns.
pub fn import_csv<R: Read>(r: R, expected: &JunctionIndex) -> Result<PressureDataset, HydroError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rd.headers()?.clone();
    let labels: Vec<&str> = header.iter().skip(1).collect();
    if header.get(0).map(str::trim) != Some("time_s") {
        return Err(HydroError::Schema("first column must be time_s".into()));
    }
    if labels.len() != expected.len() || labels.iter().zip(expected.labels()).any(|(a, b)| a.trim() != b) {
        return Err(HydroError::LabelMismatch(format!(
            "expected [{}], found [{}]",
            expected.labels().join(","),
            labels.join(",")
        )));
    }
    let n = expected.len();
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (r, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        if rec.len() != n + 1 {
            return Err(HydroError::Value {
                row,
                col: rec.len(),
                reason: format!("expected {} fields, found {}", n + 1, rec.len()),
            });
        }
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| HydroError::Value {
                row,
                col,
                reason: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(HydroError::Value {
                    row,
                    col,
                    reason: format!("non-finite value {v}"),
                });
            }
            if col == 0 {
                timestamps.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let rows = timestamps.len();
    let pressures = Array2::from_shape_vec((rows, n), values).expect("row lengths checked");
    let timestep_s = if rows > 1 { timestamps[1] - timestamps[0] } else { 0.0 };
    Ok(PressureDataset {
        timestamps,
        pressures,
        labels: expected.clone(),
        metadata: DatasetMetadata {
            config_hash: String::new(),
            timestep_s,
            leak_events: Vec::new(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn index() -> JunctionIndex {
        JunctionIndex::new(vec!["a".into(), "b".into()]).unwrap()
    }

    fn sample() -> PressureDataset {
        PressureDataset {
            timestamps: vec![0.0, 60.0, 120.0],
            pressures: array![[1.0, 0.1 + 0.2], [3.0, 1e-17], [-2.5, 123456.789012345]],
            labels: index(),
            metadata: DatasetMetadata {
                config_hash: "x".into(),
                timestep_s: 60.0,
                leak_events: vec![],
            },
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = sample();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = import_csv(buf.as_slice(), &index()).unwrap();
        assert_eq!(back.pressures, ds.pressures);
        assert_eq!(back.timestamps, ds.timestamps);
        assert_eq!(back.metadata.timestep_s, 60.0);
    }

    #[test]
    fn save_and_load_keep_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample();
        ds.save(dir.path(), "healthy").unwrap();
        let back = PressureDataset::load(dir.path(), "healthy", &index()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn label_mismatch() {
        let csv = "time_s,b,a\n0,1,2\n";
        let err = import_csv(csv.as_bytes(), &index()).unwrap_err();
        assert!(matches!(err, HydroError::LabelMismatch(_)));
    }

    #[test]
    fn non_finite_cell_reports_position() {
        let csv = "time_s,a,b\n0,1,2\n60,NaN,2\n";
        match import_csv(csv.as_bytes(), &index()).unwrap_err() {
            HydroError::Value { row, col, .. } => assert_eq!((row, col), (2, 1)),
            e => panic!("unexpected {e}"),
        }
        let csv = "time_s,a,b\n0,1,x\n";
        match import_csv(csv.as_bytes(), &index()).unwrap_err() {
            HydroError::Value { row, col, .. } => assert_eq!((row, col), (1, 2)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn slice_rows_keeps_labels() {
        let ds = sample().slice_rows(1, 3);
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.pressures[[0, 0]], 3.0);
    }
}
