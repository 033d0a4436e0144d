//! CSV and JSON formats.
//!
//! Square arrays (kernels, operators) and vectors start with a `m,<m>`
//! record; γ blocks with `m,<m>,n,<n>`. Values are written as `{:.16e}`,
//! which round-trips every `f64`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path as FsPath;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gamma::LevelDistribution;
use crate::gaussian::Path;
use crate::hilbert::{Grid, HVector, Kernel2};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(w: impl Write) -> csv::Writer<impl Write> {
    csv::WriterBuilder::new().flexible(true).has_headers(false).from_writer(w)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line: 0,
            msg: format!("{other:?}"),
        },
    }
}

/// Records of a CSV stream with their 1-based line numbers.
fn records(r: impl Read) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Parse {
                line,
                msg: e.to_string(),
            }
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(out)
}

fn parse_f64(line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("not a number: {s:?}"),
    })
}

fn parse_usize(line: usize, s: &str) -> Result<usize> {
    s.parse::<usize>().map_err(|_| Error::Parse {
        line,
        msg: format!("not a size: {s:?}"),
    })
}

/// Parses a `key,<value>[,key,<value>…]` header.
fn header(rec: &(usize, Vec<String>), keys: &[&str]) -> Result<Vec<usize>> {
    let (line, fields) = rec;
    if fields.len() != 2 * keys.len() {
        return Err(Error::Parse {
            line: *line,
            msg: format!("expected header {}", keys.iter().map(|k| format!("{k},<{k}>")).collect::<Vec<_>>().join(",")),
        });
    }
    keys.iter()
        .enumerate()
        .map(|(i, k)| {
            if fields[2 * i] != *k {
                return Err(Error::Parse {
                    line: *line,
                    msg: format!("expected key {k:?}, found {:?}", fields[2 * i]),
                });
            }
            parse_usize(*line, &fields[2 * i + 1])
        })
        .collect()
}

fn row(rec: &(usize, Vec<String>), width: usize) -> Result<Vec<f64>> {
    let (line, fields) = rec;
    if fields.len() != width {
        return Err(Error::Parse {
            line: *line,
            msg: format!("expected {width} values, found {}", fields.len()),
        });
    }
    fields.iter().map(|f| parse_f64(*line, f)).collect()
}

fn missing(needed: usize, found: usize) -> Error {
    Error::Parse {
        line: found + 1,
        msg: format!("expected {needed} data rows, found {found}"),
    }
}

pub fn write_square(w: impl Write, a: &DMatrix<f64>) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["m".to_string(), a.nrows().to_string()]).map_err(csv_err)?;
    for r in 0..a.nrows() {
        wr.write_record(a.row(r).iter().map(|v| fmt_f64(*v))).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_square(r: impl Read) -> Result<DMatrix<f64>> {
    let recs = records(r)?;
    let first = recs.first().ok_or(Error::Parse {
        line: 1,
        msg: "empty input".into(),
    })?;
    let m = header(first, &["m"])?[0];
    let data = &recs[1..];
    if data.len() != m {
        return Err(missing(m, data.len()));
    }
    let rows: Vec<Vec<f64>> = data.iter().map(|rec| row(rec, m)).collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

/// Kernel values `k(t_i, t_j)` as a square array.
pub fn write_kernel(w: impl Write, k: &Kernel2) -> Result<()> {
    write_square(w, k.values())
}

pub fn read_kernel(r: impl Read) -> Result<Kernel2> {
    let a = read_square(r)?;
    Kernel2::new(Grid::new(a.nrows())?, a)
}

/// Density values `h'(t_i)`, one per row.
pub fn write_vector(w: impl Write, h: &HVector) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["m".to_string(), h.grid().m().to_string()]).map_err(csv_err)?;
    for v in h.density() {
        wr.write_record([fmt_f64(*v)]).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_vector(r: impl Read) -> Result<HVector> {
    let recs = records(r)?;
    let first = recs.first().ok_or(Error::Parse {
        line: 1,
        msg: "empty input".into(),
    })?;
    let m = header(first, &["m"])?[0];
    let data = &recs[1..];
    if data.len() != m {
        return Err(missing(m, data.len()));
    }
    let d: Vec<f64> = data.iter().map(|rec| row(rec, 1).map(|v| v[0])).collect::<Result<_>>()?;
    HVector::from_density(Grid::new(m)?, d)
}

/// Rows `t,w(t)` for `t = 0, dt, …, 1`.
pub fn write_path(w: impl Write, p: &Path) -> Result<()> {
    let g = p.grid();
    let mut wr = writer(w);
    wr.write_record(["m".to_string(), g.m().to_string()]).map_err(csv_err)?;
    for (i, v) in p.values().iter().enumerate() {
        wr.write_record([fmt_f64(g.t(i)), fmt_f64(*v)]).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_path(r: impl Read, stream: u64) -> Result<Path> {
    let recs = records(r)?;
    let first = recs.first().ok_or(Error::Parse {
        line: 1,
        msg: "empty input".into(),
    })?;
    let m = header(first, &["m"])?[0];
    let data = &recs[1..];
    if data.len() != m + 1 {
        return Err(missing(m + 1, data.len()));
    }
    let vals: Vec<f64> = data.iter().map(|rec| row(rec, 2).map(|v| v[1])).collect::<Result<_>>()?;
    if vals[0] != 0.0 {
        return Err(Error::Parse {
            line: data[0].0,
            msg: "path must start at 0".into(),
        });
    }
    let inc = vals.windows(2).map(|w| w[1] - w[0]).collect();
    Path::from_increments(Grid::new(m)?, inc, stream)
}

/// `m` stacked `n×n` blocks, block `i` holding `γ(t_i)`.
pub fn write_gamma_blocks(w: impl Write, blocks: &[DMatrix<f64>]) -> Result<()> {
    let n = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let mut wr = writer(w);
    wr.write_record(["m".to_string(), blocks.len().to_string(), "n".to_string(), n.to_string()])
        .map_err(csv_err)?;
    for b in blocks {
        for r in 0..n {
            wr.write_record(b.row(r).iter().map(|v| fmt_f64(*v))).map_err(csv_err)?;
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn read_gamma_blocks(r: impl Read) -> Result<(Grid, Vec<DMatrix<f64>>)> {
    let recs = records(r)?;
    let first = recs.first().ok_or(Error::Parse {
        line: 1,
        msg: "empty input".into(),
    })?;
    let h = header(first, &["m", "n"])?;
    let (m, n) = (h[0], h[1]);
    let data = &recs[1..];
    if data.len() != m * n {
        return Err(missing(m * n, data.len()));
    }
    let rows: Vec<Vec<f64>> = data.iter().map(|rec| row(rec, n)).collect::<Result<_>>()?;
    let blocks = (0..m)
        .map(|i| DMatrix::from_fn(n, n, |r, c| rows[i * n + r][c]))
        .collect();
    Ok((Grid::new(m)?, blocks))
}

/// Header `theta,F`, then one row per θ grid point.
pub fn write_level_distribution(w: impl Write, ld: &LevelDistribution) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["theta", "F"]).map_err(csv_err)?;
    for (t, f) in ld.thetas.iter().zip(&ld.f) {
        wr.write_record([fmt_f64(*t), fmt_f64(*f)]).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json_file<T: Serialize>(path: &FsPath, v: &T) -> Result<()> {
    std::fs::write(path, to_json(v)?)?;
    Ok(())
}

pub fn create(path: &FsPath) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn open(path: &FsPath) -> Result<File> {
    Ok(File::open(path)?)
}
