//! Result rows, the versioned CSV format and log-log slope fits.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_VERSION_LINE: &str = "#memlab-csv-v1";
pub const CSV_COLUMNS: [&str; 10] = ["experiment", "eps", "delta", "n", "d", "trials", "metric", "value", "stderr", "seed"];

/// One metric at one configuration point. Aggregate rows such as fitted
/// slopes leave `eps`, `n` and `d` empty.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub eps: Option<f64>,
    pub delta: f64,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub trials: usize,
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
    pub seed: u64,
}

fn real(x: f64) -> String {
    format!("{x:?}")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl ResultRow {
    fn record(&self) -> [String; 10] {
        [
            self.experiment.clone(),
            self.eps.map(real).unwrap_or_default(),
            real(self.delta),
            opt(self.n),
            opt(self.d),
            self.trials.to_string(),
            self.metric.clone(),
            real(self.value),
            real(self.stderr),
            self.seed.to_string(),
        ]
    }
}

pub fn write_csv<W: Write>(rows: &[ResultRow], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_VERSION_LINE}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(rows: &[ResultRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_csv<R: BufRead>(mut input: R) -> Result<Vec<ResultRow>> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    if first.trim_end() != CSV_VERSION_LINE {
        return Err(Error::Config(format!("missing `{CSV_VERSION_LINE}` header line")));
    }
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_COLUMNS) {
        return Err(Error::Config("unexpected CSV columns".into()));
    }
    let bad = |what: &str, v: &str| Error::Config(format!("bad {what} `{v}` in CSV"));
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> { rec[i].parse().map_err(|_| bad(CSV_COLUMNS[i], &rec[i])) };
        let u = |i: usize| -> Result<Option<usize>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                rec[i].parse().map(Some).map_err(|_| bad(CSV_COLUMNS[i], &rec[i]))
            }
        };
        rows.push(ResultRow {
            experiment: rec[0].to_string(),
            eps: if rec[1].is_empty() { None } else { Some(f(1)?) },
            delta: f(2)?,
            n: u(3)?,
            d: u(4)?,
            trials: u(5)?.ok_or_else(|| bad("trials", ""))?,
            metric: rec[6].to_string(),
            value: f(7)?,
            stderr: f(8)?,
            seed: rec[9].parse().map_err(|_| bad("seed", &rec[9]))?,
        });
    }
    Ok(rows)
}

pub fn read_csv_file(path: &Path) -> Result<Vec<ResultRow>> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file))
}

/// Least-squares fit of `log(value)` against `log(1/ε)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

pub fn fit_log_slope(eps: &[f64], values: &[f64]) -> Result<SlopeFit> {
    if eps.len() != values.len() {
        return Err(Error::DimensionMismatch { left: eps.len(), right: values.len() });
    }
    let k = eps.len();
    if k < 3 {
        return Err(Error::DegenerateGrid(format!("{k} points, need at least 3")));
    }
    if let Some(v) = values.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::DegenerateGrid(format!("non-positive metric value {v}")));
    }
    if let Some(e) = eps.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::DegenerateGrid(format!("bad epsilon {e}")));
    }
    let x: Vec<f64> = eps.iter().map(|e| -e.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let kf = k as f64;
    let mx = x.iter().sum::<f64>() / kf;
    let my = y.iter().sum::<f64>() / kf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx <= 1e-12 * (1.0 + mx * mx) {
        return Err(Error::DegenerateGrid("all epsilons equal".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let stderr = (rss / (kf - 2.0) / sxx).sqrt();
    Ok(SlopeFit { slope, stderr, intercept, points: k })
}
