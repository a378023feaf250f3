//! Synthetic datasets and CSV ingestion/serialization.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{DataMatrix, Embedding};
use crate::error::{Error, Result};
use crate::Scalar;

const ROLL_T_START: f64 = 1.5 * std::f64::consts::PI;
const ROLL_T_SPAN: f64 = 3.0 * std::f64::consts::PI;
const ROLL_HEIGHT: f64 = 21.0;

/// Swiss roll `(t cos t, h, t sin t)` with `t ~ U[1.5pi, 4.5pi]`,
/// `h ~ U[0, 21]` and isotropic Gaussian noise of standard deviation `noise`.
///
/// Labels split the `t` range into four equal-width bands (0..=3), which
/// follow the arclength of the roll.
pub fn make_swissroll<T: Scalar>(n: usize, noise: f64, seed: u64) -> DataMatrix<T> {
    let (data, _) = swissroll_with_params(n, noise, seed);
    data
}

/// As [`make_swissroll`], also returning the generating `t` of each point.
pub fn swissroll_with_params<T: Scalar>(
    n: usize,
    noise: f64,
    seed: u64,
) -> (DataMatrix<T>, Vec<f64>) {
    assert!(n >= 2, "swiss roll needs at least 2 points");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n * 3);
    let mut labels = Vec::with_capacity(n);
    let mut ts = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let t = ROLL_T_START + ROLL_T_SPAN * u;
        let h = ROLL_HEIGHT * rng.random::<f64>();
        let mut point = [t * t.cos(), h, t * t.sin()];
        if noise > 0.0 {
            for c in &mut point {
                let z: f64 = StandardNormal.sample(&mut rng);
                *c += noise * z;
            }
        }
        values.extend(point.iter().map(|&v| T::c(v)));
        labels.push(((u * 4.0) as i64).min(3));
        ts.push(t);
    }
    let data = DataMatrix::new(n, 3, values, Some(labels)).expect("finite swiss roll");
    (data, ts)
}

/// `n_classes` unit-variance isotropic Gaussian clusters in `dim` dimensions
/// whose means are at least `separation` apart.
///
/// Means sit on the scaled axes `e_c * separation / sqrt(2)` (pairwise
/// distance exactly `separation`) when `n_classes <= dim`; otherwise they are
/// random directions rescaled so the closest pair is `separation` apart.
/// Samples are ordered class by class.
pub fn make_gaussian_mixture<T: Scalar>(
    n_per_class: usize,
    n_classes: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> DataMatrix<T> {
    assert!(
        n_per_class > 0 && n_classes > 0 && dim > 0 && n_per_class * n_classes >= 2,
        "mixture needs positive counts and at least 2 samples"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = mixture_means(n_classes, dim, separation, &mut rng);
    let mut values = Vec::with_capacity(n_per_class * n_classes * dim);
    let mut labels = Vec::with_capacity(n_per_class * n_classes);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..n_per_class {
            for &m in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                values.push(T::c(m + z));
            }
            labels.push(c as i64);
        }
    }
    DataMatrix::new(n_per_class * n_classes, dim, values, Some(labels)).expect("finite mixture")
}

fn mixture_means(
    n_classes: usize,
    dim: usize,
    separation: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    if n_classes <= dim {
        let r = separation / 2f64.sqrt();
        return (0..n_classes)
            .map(|c| (0..dim).map(|k| if k == c { r } else { 0.0 }).collect())
            .collect();
    }
    let raw: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect())
        .collect();
    let mut closest = f64::INFINITY;
    for a in 0..n_classes {
        for b in (a + 1)..n_classes {
            let d: f64 = raw[a]
                .iter()
                .zip(&raw[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            closest = closest.min(d.sqrt());
        }
    }
    let scale = if closest > 0.0 {
        separation / closest
    } else {
        1.0
    };
    raw.into_iter()
        .map(|m| m.into_iter().map(|v| v * scale).collect())
        .collect()
}

/// Description of a CSV dataset on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFile {
    pub path: PathBuf,
    pub has_header: bool,
    /// Column holding integer labels; removed from the features.
    pub label_column: Option<usize>,
}

impl DatasetFile {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            has_header: false,
            label_column: None,
        }
    }

    /// Sets `has_header` by checking whether the first row holds any
    /// non-numeric cell.
    pub fn detect_header(mut self) -> Result<Self> {
        let mut reader = csv_reader(&self.path, false)?;
        let mut first = csv::StringRecord::new();
        let got = reader
            .read_record(&mut first)
            .map_err(|e| csv_error(&self.path, e))?;
        self.has_header = got && first.iter().any(|c| c.trim().parse::<f64>().is_err());
        Ok(self)
    }
}

fn csv_reader(path: &Path, has_header: bool) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            column: None,
            message: format!("{other:?}"),
        },
    }
}

/// Reads a numeric CSV. Errors name the offending line (1-based, counting the
/// header) and column.
pub fn load_csv<T: Scalar>(file: &DatasetFile) -> Result<DataMatrix<T>> {
    let path = &file.path;
    let mut reader = csv_reader(path, file.has_header)?;
    let mut values = Vec::new();
    let mut labels = file.label_column.map(|_| Vec::new());
    let mut arity = None;
    let mut n = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(n + 1, |p| p.line() as usize);
        let parse_err = |column: Option<usize>, message: String| Error::Parse {
            path: path.clone(),
            line,
            column,
            message,
        };
        match arity {
            None => arity = Some(record.len()),
            Some(a) if a != record.len() => {
                return Err(parse_err(
                    None,
                    format!("row has {} fields, expected {a}", record.len()),
                ))
            }
            _ => {}
        }
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == file.label_column {
                let label = cell.parse::<i64>().map_err(|_| {
                    parse_err(Some(c + 1), format!("label {cell:?} is not an integer"))
                })?;
                labels.as_mut().expect("label column set").push(label);
            } else {
                let v = cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        parse_err(Some(c + 1), format!("{cell:?} is not a finite number"))
                    })?;
                values.push(T::c(v));
            }
        }
        n += 1;
    }
    let arity = arity.ok_or_else(|| Error::Parse {
        path: path.clone(),
        line: 1,
        column: None,
        message: "no data rows".into(),
    })?;
    if let Some(lc) = file.label_column {
        if lc >= arity {
            return Err(Error::invalid(format!(
                "label column {lc} but rows have {arity} fields"
            )));
        }
    }
    let dim = arity - usize::from(file.label_column.is_some());
    DataMatrix::new(n, dim, values, labels)
}

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn format_value<T: Scalar>(v: T) -> String {
    format!("{:.16e}", v.f64())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn write_rows<'a, T: Scalar>(
    path: &Path,
    header: &str,
    rows: impl Iterator<Item = (&'a [T], Option<i64>)>,
) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = create(path)?;
    writeln!(out, "{header}").map_err(io)?;
    for (row, label) in rows {
        let mut line = row
            .iter()
            .map(|&v| format_value(v))
            .collect::<Vec<_>>()
            .join(",");
        if let Some(l) = label {
            line.push_str(&format!(",{l}"));
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

fn header(prefix: &str, dim: usize, labelled: bool) -> String {
    let mut cols: Vec<String> = (1..=dim).map(|k| format!("{prefix}{k}")).collect();
    if labelled {
        cols.push("label".into());
    }
    cols.join(",")
}

/// Writes `x1..xD[,label]` with a header row; labels go in the last column.
pub fn save_csv<T: Scalar>(matrix: &DataMatrix<T>, path: &Path) -> Result<()> {
    let labels = matrix.labels();
    write_rows(
        path,
        &header("x", matrix.dim(), labels.is_some()),
        (0..matrix.n_samples()).map(|i| (matrix.row(i), labels.map(|l| l[i]))),
    )
}

/// Writes `y1..yd[,label]` with a header row.
pub fn save_embedding<T: Scalar>(
    embedding: &Embedding<T>,
    labels: Option<&[i64]>,
    path: &Path,
) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != embedding.n_points() {
            return Err(Error::invalid("label count differs from embedding size"));
        }
    }
    write_rows(
        path,
        &header("y", embedding.dim(), labels.is_some()),
        (0..embedding.n_points()).map(|i| (embedding.row(i), labels.map(|l| l[i]))),
    )
}

/// Reads a file written by [`save_embedding`] (a trailing `label` column is optional).
pub fn load_embedding<T: Scalar>(path: &Path) -> Result<(Embedding<T>, Option<Vec<i64>>)> {
    let mut reader = csv_reader(path, true)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let label_column = headers.iter().position(|h| h == "label");
    let file = DatasetFile {
        path: path.to_path_buf(),
        has_header: true,
        label_column,
    };
    let m = load_csv::<T>(&file)?;
    let labels = m.labels().map(<[_]>::to_vec);
    Ok((
        Embedding::new(m.n_samples(), m.dim(), m.values().to_vec())?,
        labels,
    ))
}
