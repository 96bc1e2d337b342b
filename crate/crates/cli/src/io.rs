//! CSV ingestion and output, atomic file writes, fingerprints and JSON formatting.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use sha2::{Digest, Sha256};
use spatcens::SpatialDataset;

use crate::error::CliError;

const DATA_COLUMNS: [&str; 6] = ["x", "y", "value", "cens", "lower", "upper"];

/// A file's bytes together with their SHA-256 digest.
pub struct Loaded<T> {
    pub value: T,
    pub fingerprint: String,
}

pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn parse_f64(s: &str, what: &str, row: usize) -> Result<f64, CliError> {
    s.trim().parse::<f64>().map_err(|_| {
        CliError::Input(format!(
            "row {}: column `{what}` is not a number: `{s}`",
            row + 1
        ))
    })
}

fn parse_bound(s: &str, what: &str, row: usize, empty: f64) -> Result<f64, CliError> {
    if s.trim().is_empty() {
        Ok(empty)
    } else {
        parse_f64(s, what, row)
    }
}

struct Table {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn parse(bytes: &[u8], path: &Path) -> Result<Self, CliError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(bytes);
        let bad = |e: csv::Error| CliError::Input(format!("{}: {e}", path.display()));
        let headers = rdr
            .headers()
            .map_err(bad)?
            .iter()
            .map(str::to_owned)
            .collect();
        let rows = rdr.records().collect::<Result<Vec<_>, _>>().map_err(bad)?;
        if rows.is_empty() {
            return Err(CliError::Input(format!("{}: no data rows", path.display())));
        }
        Ok(Self { headers, rows })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn require(&self, name: &str, path: &Path) -> Result<usize, CliError> {
        self.column(name)
            .ok_or_else(|| CliError::Input(format!("{}: missing column `{name}`", path.display())))
    }

    /// Columns outside `reserved`, in file order.
    fn extra(&self, reserved: &[&str]) -> Vec<usize> {
        (0..self.headers.len())
            .filter(|&j| !reserved.contains(&self.headers[j].as_str()))
            .collect()
    }

    fn covariates(&self, cols: &[usize]) -> Result<Option<DMatrix<f64>>, CliError> {
        if cols.is_empty() {
            return Ok(None);
        }
        let mut m = DMatrix::zeros(self.rows.len(), cols.len());
        for (i, r) in self.rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                m[(i, j)] = parse_f64(&r[c], &self.headers[c], i)?;
            }
        }
        Ok(Some(m))
    }

    fn coords(&self, path: &Path) -> Result<Vec<[f64; 2]>, CliError> {
        let (cx, cy) = (self.require("x", path)?, self.require("y", path)?);
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| Ok([parse_f64(&r[cx], "x", i)?, parse_f64(&r[cy], "y", i)?]))
            .collect()
    }
}

/// Reads `x,y,value,cens,lower,upper[,cov…]`. Empty bounds mean ∓∞; an empty value on a
/// censored row defaults to its finite bound.
pub fn read_dataset(path: &Path) -> Result<Loaded<SpatialDataset>, CliError> {
    let bytes = read_bytes(path)?;
    let t = Table::parse(&bytes, path)?;
    let cols: Vec<usize> = DATA_COLUMNS
        .iter()
        .map(|c| t.require(c, path))
        .collect::<Result<_, _>>()?;
    let coords = t.coords(path)?;
    let n = t.rows.len();
    let mut value = DVector::zeros(n);
    let mut cens = vec![false; n];
    let mut lower = DVector::from_element(n, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(n, f64::INFINITY);
    for (i, r) in t.rows.iter().enumerate() {
        cens[i] = match r[cols[3]].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(CliError::Input(format!(
                    "row {}: `cens` must be 0 or 1, got `{other}`",
                    i + 1
                )))
            }
        };
        if cens[i] {
            lower[i] = parse_bound(&r[cols[4]], "lower", i, f64::NEG_INFINITY)?;
            upper[i] = parse_bound(&r[cols[5]], "upper", i, f64::INFINITY)?;
            value[i] = if r[cols[2]].trim().is_empty() {
                if upper[i].is_finite() {
                    upper[i]
                } else {
                    lower[i]
                }
            } else {
                parse_f64(&r[cols[2]], "value", i)?
            };
        } else {
            value[i] = parse_f64(&r[cols[2]], "value", i)?;
        }
    }
    let covariates = t.covariates(&t.extra(&DATA_COLUMNS))?;
    let data = SpatialDataset::new(coords, value, cens, lower, upper, covariates)?;
    Ok(Loaded {
        value: data,
        fingerprint: fingerprint(&bytes),
    })
}

/// Prediction targets `x,y[,cov…]`, with an optional `value` column holding the truth.
pub struct SiteTable {
    pub coords: Vec<[f64; 2]>,
    pub covariates: Option<DMatrix<f64>>,
    pub truth: Option<DVector<f64>>,
}

pub fn read_sites(path: &Path) -> Result<Loaded<SiteTable>, CliError> {
    let bytes = read_bytes(path)?;
    let t = Table::parse(&bytes, path)?;
    let coords = t.coords(path)?;
    let truth = match t.column("value") {
        Some(c) => Some(DVector::from_vec(
            t.rows
                .iter()
                .enumerate()
                .map(|(i, r)| parse_f64(&r[c], "value", i))
                .collect::<Result<Vec<_>, _>>()?,
        )),
        None => None,
    };
    let covariates = t.covariates(&t.extra(&DATA_COLUMNS))?;
    Ok(Loaded {
        value: SiteTable {
            coords,
            covariates,
            truth,
        },
        fingerprint: fingerprint(&bytes),
    })
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn csv_bytes(
    headers: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(headers)
        .map_err(|e| CliError::Output(e.to_string()))?;
    for r in rows {
        w.write_record(&r)
            .map_err(|e| CliError::Output(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Output(e.to_string()))
}

fn cov_headers(q: usize) -> Vec<String> {
    (1..=q).map(|j| format!("cov{j}")).collect()
}

pub fn dataset_csv(d: &SpatialDataset) -> Result<Vec<u8>, CliError> {
    let q = d.covariates.as_ref().map_or(0, |c| c.ncols());
    let mut headers: Vec<String> = DATA_COLUMNS.iter().map(|s| s.to_string()).collect();
    headers.extend(cov_headers(q));
    let rows = (0..d.n()).map(|i| {
        let mut r = vec![
            fmt_num(d.coords[i][0]),
            fmt_num(d.coords[i][1]),
            fmt_num(d.value[i]),
        ];
        r.push(if d.cens[i] { "1" } else { "0" }.to_owned());
        if d.cens[i] {
            r.push(fmt_num(d.lower[i]));
            r.push(fmt_num(d.upper[i]));
        } else {
            r.extend([String::new(), String::new()]);
        }
        if let Some(c) = &d.covariates {
            r.extend(c.row(i).iter().map(|&v| fmt_num(v)));
        }
        r
    });
    csv_bytes(&headers, rows)
}

/// `x,y,value[,cov…]` for held-out sites.
pub fn sites_csv(
    coords: &[[f64; 2]],
    value: &DVector<f64>,
    covariates: Option<&DMatrix<f64>>,
) -> Result<Vec<u8>, CliError> {
    let q = covariates.map_or(0, |c| c.ncols());
    let mut headers = vec!["x".to_owned(), "y".to_owned(), "value".to_owned()];
    headers.extend(cov_headers(q));
    let rows = (0..coords.len()).map(|i| {
        let mut r = vec![
            fmt_num(coords[i][0]),
            fmt_num(coords[i][1]),
            fmt_num(value[i]),
        ];
        if let Some(c) = covariates {
            r.extend(c.row(i).iter().map(|&v| fmt_num(v)));
        }
        r
    });
    csv_bytes(&headers, rows)
}

/// Generic numeric table; non-finite cells are left empty.
pub fn table_csv(
    headers: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<Vec<u8>, CliError> {
    let h: Vec<String> = headers.iter().map(|s| s.to_string()).collect();
    csv_bytes(&h, rows)
}

pub fn cell(v: f64) -> String {
    fmt_num(v)
}

/// Writes through a temporary file in the target directory, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let fail =
        |e: std::io::Error| CliError::Output(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

/// Pretty JSON with every float printed to 17 significant digits and non-finite values as `null`.
pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17::default());
    value
        .serialize(&mut ser)
        .map_err(|e| CliError::Output(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Default)]
struct Sig17(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W: ?Sized + std::io::Write>(
        &mut self,
        w: &mut W,
        value: f64,
    ) -> std::io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + std::io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + std::io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Human summaries use six significant digits.
pub fn sig6(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-4..=9).contains(&mag) {
        return format!("{v:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}
