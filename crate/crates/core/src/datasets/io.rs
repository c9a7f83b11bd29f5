//! Unified CSV schema and a compact binary columnar format.
//!
//! CSV: header `timestamp,<features...>[,label]`, one row per timestamp.
//!
//! Columnar (`LTSC`): magic, u32 version, u64 rows, u64 features, the feature
//! names as u32-length-prefixed UTF-8, the role byte, i64 timestamps, f64
//! values column by column, then a u8 label flag followed by u8 labels. All
//! integers little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::preprocessing::{Role, TimeSeriesDataset};

const MAGIC: &[u8; 4] = b"LTSC";
const VERSION: u32 = 1;

pub fn write_csv(ds: &TimeSeriesDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["timestamp".to_string()];
    header.extend(ds.feature_names.iter().cloned());
    if ds.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for t in 0..ds.len() {
        let mut row = vec![ds.timestamps[t].to_string()];
        row.extend(ds.values.row(t).iter().map(|v| v.to_string()));
        if let Some(l) = &ds.labels {
            row.push(l[t].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path, role: Role) -> Result<TimeSeriesDataset> {
    if !path.exists() {
        return Err(Error::MissingInput {
            path: path.into(),
            hint: "CSV with header timestamp,<features...>[,label]".into(),
        });
    }
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.get(0).map(str::trim) != Some("timestamp") {
        return Err(Error::Malformed {
            path: path.into(),
            row: 1,
            msg: "first column must be `timestamp`".into(),
        });
    }
    let has_label = header.iter().last() == Some("label");
    let d = header.len() - 1 - usize::from(has_label);
    let names: Vec<String> = header.iter().skip(1).take(d).map(String::from).collect();
    let mut ts = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let bad = |msg: String| Error::Malformed {
            path: path.into(),
            row,
            msg,
        };
        ts.push(rec[0].trim().parse::<i64>().map_err(|_| bad(format!("bad timestamp `{}`", &rec[0])))?);
        for j in 1..=d {
            let f = rec[j].trim();
            values.push(if f.is_empty() { f64::NAN } else { f.parse().unwrap_or(f64::NAN) });
        }
        if has_label {
            let l = rec[d + 1].trim();
            labels.push(match l {
                "0" => 0,
                "1" => 1,
                _ => return Err(bad(format!("label `{l}` is not 0 or 1"))),
            });
        }
    }
    let ds = TimeSeriesDataset {
        values: Array2::from_shape_vec((ts.len(), d), values).map_err(|e| Error::shape(e.to_string()))?,
        timestamps: ts,
        labels: has_label.then_some(labels),
        role,
        feature_names: names,
    };
    ds.validate(true)?;
    Ok(ds)
}

fn role_byte(r: Role) -> u8 {
    match r {
        Role::Train => 0,
        Role::Validation => 1,
        Role::Test => 2,
    }
}

pub fn write_columnar(ds: &TimeSeriesDataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u64::<LE>(ds.len() as u64)?;
    w.write_u64::<LE>(ds.num_features() as u64)?;
    for name in &ds.feature_names {
        w.write_u32::<LE>(name.len() as u32)?;
        w.write_all(name.as_bytes())?;
    }
    w.write_u8(role_byte(ds.role))?;
    for &t in &ds.timestamps {
        w.write_i64::<LE>(t)?;
    }
    for col in ds.values.columns() {
        for &v in col {
            w.write_f64::<LE>(v)?;
        }
    }
    match &ds.labels {
        Some(l) => {
            w.write_u8(1)?;
            w.write_all(l)?;
        }
        None => w.write_u8(0)?,
    }
    w.flush()?;
    Ok(())
}

pub fn read_columnar(path: &Path) -> Result<TimeSeriesDataset> {
    let mut r = BufReader::new(File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput {
            path: path.into(),
            hint: "run `preprocess` first".into(),
        },
        _ => e.into(),
    })?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("{}: not a columnar dataset", path.display())));
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported columnar version {version}")));
    }
    let t = r.read_u64::<LE>()? as usize;
    let d = r.read_u64::<LE>()? as usize;
    let mut names = Vec::with_capacity(d);
    for _ in 0..d {
        let n = r.read_u32::<LE>()? as usize;
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf)?;
        names.push(String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))?);
    }
    let role = match r.read_u8()? {
        0 => Role::Train,
        1 => Role::Validation,
        2 => Role::Test,
        b => return Err(Error::Format(format!("bad role byte {b}"))),
    };
    let mut timestamps = vec![0i64; t];
    r.read_i64_into::<LE>(&mut timestamps)?;
    let mut flat = vec![0f64; t * d];
    r.read_f64_into::<LE>(&mut flat)?;
    // stored column-major
    let values = Array2::from_shape_vec((d, t), flat)
        .map_err(|e| Error::shape(e.to_string()))?
        .reversed_axes()
        .as_standard_layout()
        .to_owned();
    let labels = match r.read_u8()? {
        0 => None,
        1 => {
            let mut l = vec![0u8; t];
            r.read_exact(&mut l)?;
            Some(l)
        }
        b => return Err(Error::Format(format!("bad label flag {b}"))),
    };
    Ok(TimeSeriesDataset {
        values,
        timestamps,
        labels,
        role,
        feature_names: names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TimeSeriesDataset {
        let mut ds = TimeSeriesDataset::from_values(
            Array2::from_shape_fn((7, 3), |(t, j)| t as f64 * 0.5 - j as f64 / 3.0),
            Some(vec![0, 0, 1, 1, 0, 0, 1]),
            Role::Test,
        );
        ds.timestamps = (100..107).collect();
        ds
    }

    #[test]
    fn columnar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ltsc");
        let ds = sample();
        write_columnar(&ds, &p).unwrap();
        assert_eq!(read_columnar(&p).unwrap(), ds);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let ds = sample();
        write_csv(&ds, &p).unwrap();
        assert_eq!(read_csv(&p, Role::Test).unwrap(), ds);
    }
}
