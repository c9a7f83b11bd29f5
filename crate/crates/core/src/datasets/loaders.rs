use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, StringRecord};
use ndarray::{concatenate, Array2, Axis};

use crate::error::{Error, Result};
use crate::preprocessing::{Role, TimeSeriesDataset};

pub const DEFAULT_SMD_MACHINE: &str = "machine-1-1";

const SWAT_TRAIN: &str = "SWaT_Dataset_Normal_v1.csv";
const SWAT_TEST: &str = "SWaT_Dataset_Attack_v0.csv";
const WADI_TRAIN: &str = "WADI_14days_new.csv";
const WADI_TEST: &str = "WADI_attackdataLABLE.csv";
const WADI_LABEL: &str = "Attack LABLE (1:No Attack, -1:Attack)";

fn require(path: PathBuf, layout: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingInput {
            path,
            hint: format!("expected layout: {layout}"),
        })
    }
}

fn parse_value(field: &str) -> f64 {
    field.trim().parse().unwrap_or(f64::NAN)
}

/// Which columns of a CSV table hold features and labels.
struct Columns {
    features: Vec<usize>,
    label: Option<(usize, fn(&str) -> Option<u8>)>,
}

struct Table {
    values: Vec<f64>,
    labels: Vec<u8>,
    rows: usize,
}

/// Opens a CSV file and returns the reader positioned after the header, which
/// is the first record whose first field satisfies `is_header`.
fn open_with_header(
    path: &Path,
    is_header: impl Fn(&str) -> bool,
) -> Result<(csv::Reader<File>, StringRecord, u64)> {
    let mut rdr = ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut rec = StringRecord::new();
    while rdr.read_record(&mut rec)? {
        if rec.get(0).is_some_and(|f| is_header(f.trim())) {
            let line = rec.position().map_or(0, |p| p.line());
            return Ok((rdr, rec.clone(), line));
        }
    }
    Err(Error::Malformed {
        path: path.into(),
        row: 0,
        msg: "header row not found".into(),
    })
}

fn read_rows(path: &Path, rdr: &mut csv::Reader<File>, width: usize, cols: &Columns) -> Result<Table> {
    let mut table = Table {
        values: Vec::new(),
        labels: Vec::new(),
        rows: 0,
    };
    let mut rec = StringRecord::new();
    while rdr.read_record(&mut rec)? {
        let row = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if rec.len() < width {
            return Err(Error::Malformed {
                path: path.into(),
                row,
                msg: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        table.values.extend(cols.features.iter().map(|&j| parse_value(&rec[j])));
        if let Some((j, parse)) = cols.label {
            let label = parse(&rec[j]).ok_or_else(|| Error::Malformed {
                path: path.into(),
                row,
                msg: format!("unrecognized label `{}`", rec[j].trim()),
            })?;
            table.labels.push(label);
        }
        table.rows += 1;
    }
    Ok(table)
}

fn to_dataset(table: Table, d: usize, names: Vec<String>, role: Role, labeled: bool) -> Result<TimeSeriesDataset> {
    let values = Array2::from_shape_vec((table.rows, d), table.values)
        .map_err(|e| Error::shape(e.to_string()))?;
    Ok(TimeSeriesDataset {
        values,
        timestamps: (0..table.rows as i64).collect(),
        labels: labeled.then_some(table.labels),
        role,
        feature_names: names,
    })
}

fn swat_label(s: &str) -> Option<u8> {
    let key: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
    match key.as_str() {
        "normal" => Some(0),
        "attack" => Some(1),
        _ => None,
    }
}

fn load_swat_file(path: &Path, role: Role) -> Result<TimeSeriesDataset> {
    let (mut rdr, header, _) = open_with_header(path, |f| f.eq_ignore_ascii_case("timestamp"))?;
    let names: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    let label = names
        .iter()
        .position(|n| n.eq_ignore_ascii_case("Normal/Attack"))
        .ok_or_else(|| Error::Malformed {
            path: path.into(),
            row: 1,
            msg: "missing `Normal/Attack` column".into(),
        })?;
    let features: Vec<usize> = (1..names.len()).filter(|&j| j != label).collect();
    let feature_names = features.iter().map(|&j| names[j].clone()).collect();
    let d = features.len();
    let cols = Columns {
        features,
        label: Some((label, swat_label)),
    };
    let table = read_rows(path, &mut rdr, names.len(), &cols)?;
    to_dataset(table, d, feature_names, role, role == Role::Test)
}

/// SWaT: the normal-operation and attack CSV exports with a `Timestamp`
/// column, the sensor columns and a `Normal/Attack` label column.
pub fn load_swat(root: &Path) -> Result<(TimeSeriesDataset, TimeSeriesDataset)> {
    let layout = format!("{SWAT_TRAIN} and {SWAT_TEST}");
    let train = load_swat_file(&require(root.join(SWAT_TRAIN), &layout)?, Role::Train)?;
    let test = load_swat_file(&require(root.join(SWAT_TEST), &layout)?, Role::Test)?;
    if train.feature_names != test.feature_names {
        return Err(Error::Format("SWaT train and test columns differ".into()));
    }
    Ok((train, test))
}

fn wadi_label(s: &str) -> Option<u8> {
    match s.trim() {
        "1" => Some(0),
        "-1" => Some(1),
        _ => None,
    }
}

/// Column name without the historian path prefix.
fn wadi_name(raw: &str) -> String {
    raw.trim().rsplit('\\').next().unwrap_or("").to_string()
}

fn load_wadi_file(path: &Path, role: Role) -> Result<TimeSeriesDataset> {
    let (mut rdr, header, _) = open_with_header(path, |f| f.starts_with("Row"))?;
    let raw: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    let label = raw.iter().position(|n| n == WADI_LABEL);
    if role == Role::Test && label.is_none() {
        return Err(Error::Malformed {
            path: path.into(),
            row: 1,
            msg: format!("missing `{WADI_LABEL}` column"),
        });
    }
    let features: Vec<usize> = (0..raw.len())
        .filter(|&j| Some(j) != label && !matches!(raw[j].as_str(), "Row" | "Date" | "Time" | ""))
        .collect();
    let names = features.iter().map(|&j| wadi_name(&raw[j])).collect();
    let d = features.len();
    let cols = Columns {
        features,
        label: label.map(|j| (j, wadi_label as fn(&str) -> Option<u8>)),
    };
    let table = read_rows(path, &mut rdr, raw.len().min(cols_width(&cols)), &cols)?;
    to_dataset(table, d, names, role, label.is_some())
}

fn cols_width(cols: &Columns) -> usize {
    let f = cols.features.iter().max().copied().unwrap_or(0);
    let l = cols.label.map_or(0, |(j, _)| j);
    f.max(l) + 1
}

fn select_columns(ds: &TimeSeriesDataset, keep: &[usize]) -> TimeSeriesDataset {
    TimeSeriesDataset {
        values: ds.values.select(Axis(1), keep),
        feature_names: keep.iter().map(|&j| ds.feature_names[j].clone()).collect(),
        ..ds.clone()
    }
}

/// WADI: the 14-day normal export and the labeled attack export. Both start
/// with free-text lines before the `Row,Date,Time,...` header. Columns with
/// no readings in either split are dropped.
pub fn load_wadi(root: &Path) -> Result<(TimeSeriesDataset, TimeSeriesDataset, BTreeMap<String, String>)> {
    let layout = format!("{WADI_TRAIN} and {WADI_TEST}");
    let train = load_wadi_file(&require(root.join(WADI_TRAIN), &layout)?, Role::Train)?;
    let test = load_wadi_file(&require(root.join(WADI_TEST), &layout)?, Role::Test)?;

    let mut test_index = Vec::with_capacity(train.num_features());
    for name in &train.feature_names {
        let j = test
            .feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Format(format!("WADI test split lacks column `{name}`")))?;
        test_index.push(j);
    }
    let test = select_columns(&test, &test_index);

    let empty = |ds: &TimeSeriesDataset, j: usize| ds.values.column(j).iter().all(|v| !v.is_finite());
    let keep: Vec<usize> = (0..train.num_features())
        .filter(|&j| !empty(&train, j) && !empty(&test, j))
        .collect();
    let dropped: Vec<String> = (0..train.num_features())
        .filter(|j| !keep.contains(j))
        .map(|j| train.feature_names[j].clone())
        .collect();
    let mut meta = BTreeMap::new();
    if !dropped.is_empty() {
        log::warn!("WADI: dropping empty columns {dropped:?}");
        meta.insert("dropped_columns".into(), dropped.join(","));
    }
    Ok((select_columns(&train, &keep), select_columns(&test, &keep), meta))
}

fn read_npy_f64(path: &Path) -> Result<Array2<f64>> {
    let f64_err = match ndarray_npy::read_npy::<_, Array2<f64>>(path) {
        Ok(a) => return Ok(a),
        Err(e) => e,
    };
    match ndarray_npy::read_npy::<_, Array2<f32>>(path) {
        Ok(a) => Ok(a.mapv(f64::from)),
        Err(_) => Err(Error::Format(format!("{}: {f64_err}", path.display()))),
    }
}

/// Parses `[[a, b], [c, d]]` into inclusive index pairs.
fn parse_sequences(s: &str) -> Option<Vec<(usize, usize)>> {
    let nums: Vec<usize> = s
        .split(|c: char| !c.is_ascii_digit())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().ok())
        .collect::<Option<_>>()?;
    if nums.len() % 2 != 0 {
        return None;
    }
    Some(nums.chunks(2).map(|p| (p[0], p[1])).collect())
}

/// MSL or SMAP: `train/<chan>.npy`, `test/<chan>.npy` and
/// `labeled_anomalies.csv`. Channels of the spacecraft are concatenated in
/// lexicographic order of their ids.
pub fn load_msl_smap(
    root: &Path,
    spacecraft: &str,
) -> Result<(TimeSeriesDataset, TimeSeriesDataset, BTreeMap<String, String>)> {
    let layout = "labeled_anomalies.csv, train/<chan>.npy, test/<chan>.npy";
    let table = require(root.join("labeled_anomalies.csv"), layout)?;
    let mut rdr = ReaderBuilder::new().from_path(&table)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Malformed {
                path: table.clone(),
                row: 1,
                msg: format!("missing `{name}` column"),
            })
    };
    let (c_chan, c_craft, c_seq) = (col("chan_id")?, col("spacecraft")?, col("anomaly_sequences")?);

    let mut channels: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec[c_craft].trim() != spacecraft {
            continue;
        }
        let seqs = parse_sequences(&rec[c_seq]).ok_or_else(|| Error::Malformed {
            path: table.clone(),
            row: i + 2,
            msg: format!("bad anomaly_sequences `{}`", &rec[c_seq]),
        })?;
        channels.entry(rec[c_chan].trim().to_string()).or_default().extend(seqs);
    }
    if channels.is_empty() {
        return Err(Error::Format(format!("no {spacecraft} channels in {}", table.display())));
    }

    let mut trains = Vec::new();
    let mut tests = Vec::new();
    let mut labels = Vec::new();
    for (chan, seqs) in &channels {
        let tr = read_npy_f64(&require(root.join("train").join(format!("{chan}.npy")), layout)?)?;
        let te = read_npy_f64(&require(root.join("test").join(format!("{chan}.npy")), layout)?)?;
        let mut l = vec![0u8; te.nrows()];
        for &(a, b) in seqs {
            if a > b || b >= te.nrows() {
                return Err(Error::Format(format!(
                    "{chan}: anomaly sequence [{a}, {b}] outside test length {}",
                    te.nrows()
                )));
            }
            l[a..=b].fill(1);
        }
        labels.extend(l);
        trains.push(tr);
        tests.push(te);
    }
    let d = trains[0].ncols();
    if trains.iter().chain(&tests).any(|a| a.ncols() != d) {
        return Err(Error::Format(format!("{spacecraft} channels differ in width")));
    }
    let stack = |parts: &[Array2<f64>]| {
        let views: Vec<_> = parts.iter().map(|a| a.view()).collect();
        concatenate(Axis(0), &views).map_err(|e| Error::shape(e.to_string()))
    };
    let train = TimeSeriesDataset::from_values(stack(&trains)?, None, Role::Train);
    let test = TimeSeriesDataset::from_values(stack(&tests)?, Some(labels), Role::Test);
    let mut meta = BTreeMap::new();
    meta.insert(
        "channel_order".into(),
        channels.keys().cloned().collect::<Vec<_>>().join(","),
    );
    Ok((train, test, meta))
}

fn read_matrix_txt(path: &Path) -> Result<Array2<f64>> {
    let mut rdr = ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Malformed {
            path: path.into(),
            row: i + 1,
            msg: e.to_string(),
        })?;
        for f in rec.iter() {
            values.push(f.trim().parse::<f64>().map_err(|_| Error::Malformed {
                path: path.into(),
                row: i + 1,
                msg: format!("not a number: `{f}`"),
            })?);
        }
        if *width.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::Malformed {
                path: path.into(),
                row: i + 1,
                msg: "row width differs from the first row".into(),
            });
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, width.unwrap_or(0)), values).map_err(|e| Error::shape(e.to_string()))
}

/// SMD: comma-separated matrices `train/<m>.txt`, `test/<m>.txt` and one label
/// per line in `test_label/<m>.txt`.
pub fn load_smd(root: &Path, machine: &str) -> Result<(TimeSeriesDataset, TimeSeriesDataset)> {
    let layout = "train/<machine>.txt, test/<machine>.txt, test_label/<machine>.txt";
    let file = format!("{machine}.txt");
    let train = read_matrix_txt(&require(root.join("train").join(&file), layout)?)?;
    let test = read_matrix_txt(&require(root.join("test").join(&file), layout)?)?;
    let label_path = require(root.join("test_label").join(&file), layout)?;
    let lab = read_matrix_txt(&label_path)?;
    if lab.ncols() != 1 || lab.nrows() != test.nrows() {
        return Err(Error::Format(format!(
            "{}: expected {} single-column labels",
            label_path.display(),
            test.nrows()
        )));
    }
    let labels = lab
        .iter()
        .enumerate()
        .map(|(i, &v)| match v {
            0.0 => Ok(0),
            1.0 => Ok(1),
            _ => Err(Error::Malformed {
                path: label_path.clone(),
                row: i + 1,
                msg: format!("label {v} is not 0 or 1"),
            }),
        })
        .collect::<Result<Vec<u8>>>()?;
    if train.ncols() != test.ncols() {
        return Err(Error::Format("SMD train and test widths differ".into()));
    }
    Ok((
        TimeSeriesDataset::from_values(train, None, Role::Train),
        TimeSeriesDataset::from_values(test, Some(labels), Role::Test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequences() {
        assert_eq!(
            parse_sequences("[[2149, 2349], [4536, 4844]]"),
            Some(vec![(2149, 2349), (4536, 4844)])
        );
        assert_eq!(parse_sequences("[[1]]"), None);
    }

    #[test]
    fn labels() {
        assert_eq!(swat_label("A ttack"), Some(1));
        assert_eq!(swat_label(" Normal"), Some(0));
        assert_eq!(wadi_label("-1"), Some(1));
        assert_eq!(wadi_name("\\\\WIN\\LOG_DATA\\1_AIT_001_PV"), "1_AIT_001_PV");
    }

    #[test]
    fn missing_layout_is_named() {
        match load_smd(Path::new("/nonexistent"), DEFAULT_SMD_MACHINE) {
            Err(Error::MissingInput { path, .. }) => assert!(path.ends_with("train/machine-1-1.txt")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
