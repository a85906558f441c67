//! Origin-destination ingestion, matrix and degree files, and result tables.
//!
//! Matrix files hold `n` on the first line followed by `n` rows of
//! whitespace-separated values. Values are written with the shortest decimal
//! form that parses back to the same `f64`, so a save/load round trip is exact.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DegreeSequence, FlowMatrix};
use crate::heuristics::GapReport;

/// Relative tolerance of the symmetry check in [`load_matrix`].
pub const SYMMETRY_TOL_REL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub origin: String,
    pub destination: String,
    pub flow: String,
    pub delimiter: u8,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        Self {
            origin: "origin".into(),
            destination: "destination".into(),
            flow: "flow".into(),
            delimiter: b',',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdRecord {
    pub origin: String,
    pub destination: String,
    pub flow: f64,
}

/// Symmetrized flows with the id of each dense index.
#[derive(Debug, Clone)]
pub struct OdMatrix {
    pub flows: FlowMatrix,
    /// `ids[i]` is the source id of vertex `i`, in first-appearance order.
    pub ids: Vec<String>,
    pub self_flows_dropped: usize,
}

/// Parses OD rows; line numbers in errors count the header as line 1.
pub fn read_od_records<R: Read>(reader: R, spec: &ColumnSpec) -> Result<Vec<OdRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(spec.delimiter)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                line: 1,
                msg: format!("missing column {name:?}"),
            })
    };
    let (oi, di, fi) = (
        column(&spec.origin)?,
        column(&spec.destination)?,
        column(&spec.flow)?,
    );
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |k: usize| {
            rec.get(k)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("missing field {k}"),
                })
        };
        let raw = field(fi)?;
        let flow: f64 = raw.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("flow {raw:?} is not a number"),
        })?;
        if !flow.is_finite() {
            return Err(Error::Parse {
                line,
                msg: format!("flow {raw:?} is not finite"),
            });
        }
        if flow < 0.0 {
            return Err(Error::NegativeFlow { line, flow });
        }
        out.push(OdRecord {
            origin: field(oi)?.to_string(),
            destination: field(di)?.to_string(),
            flow,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

/// Sums duplicate pairs, then sets `c_ij = (f_ij + f_ji) / 2` and drops self-flows.
pub fn od_matrix(records: &[OdRecord]) -> Result<OdMatrix> {
    fn id_of<'r>(s: &'r str, index: &mut HashMap<&'r str, usize>, ids: &mut Vec<String>) -> usize {
        let next = index.len();
        *index.entry(s).or_insert_with(|| {
            ids.push(s.to_string());
            next
        })
    }
    let mut index = HashMap::new();
    let mut ids = Vec::new();
    let mut pairs = Vec::with_capacity(records.len());
    for r in records {
        let o = id_of(&r.origin, &mut index, &mut ids);
        let d = id_of(&r.destination, &mut index, &mut ids);
        pairs.push((o, d, r.flow));
    }
    let n = ids.len();
    let mut f = DMatrix::zeros(n, n);
    let mut dropped = 0;
    for (o, d, w) in pairs {
        if o == d {
            dropped += 1;
        } else {
            f[(o, d)] += w;
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} self-flow rows");
    }
    let c = (&f + f.transpose()) * 0.5;
    Ok(OdMatrix {
        flows: FlowMatrix::new(c)?,
        ids,
        self_flows_dropped: dropped,
    })
}

pub fn load_od_csv(path: impl AsRef<Path>, spec: &ColumnSpec) -> Result<OdMatrix> {
    let file = fs::File::open(path)?;
    od_matrix(&read_od_records(file, spec)?)
}

/// One id per line, line `i + 1` naming vertex `i`.
pub fn write_ids(path: impl AsRef<Path>, ids: &[String]) -> Result<()> {
    let mut text = ids.join("\n");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn matrix_to_string(a: &FlowMatrix) -> String {
    let n = a.n();
    let mut out = format!("{n}\n");
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| format!("{}", a.get(i, j))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<FlowMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (first, header) = lines.next().ok_or(Error::EmptyInput)?;
    let n: usize = header.trim().parse().map_err(|_| Error::Parse {
        line: first + 1,
        msg: format!("expected the dimension, found {:?}", header.trim()),
    })?;
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut rows = 0;
    for (ln, line) in lines {
        if rows == n {
            return Err(Error::Parse {
                line: ln + 1,
                msg: format!("more than {n} rows"),
            });
        }
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != n {
            return Err(Error::Parse {
                line: ln + 1,
                msg: format!("expected {n} values, found {}", vals.len()),
            });
        }
        for (j, v) in vals.iter().enumerate() {
            m[(rows, j)] = v.parse().map_err(|_| Error::Parse {
                line: ln + 1,
                msg: format!("value {v:?} in column {} is not a number", j + 1),
            })?;
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse {
            line: text.lines().count(),
            msg: format!("expected {n} rows, found {rows}"),
        });
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b): (f64, f64) = (m[(i, j)], m[(j, i)]);
            if (a - b).abs() > SYMMETRY_TOL_REL * a.abs().max(b.abs()) {
                return Err(Error::Symmetry { i, j });
            }
        }
    }
    FlowMatrix::new(m)
}

pub fn save_matrix(path: impl AsRef<Path>, a: &FlowMatrix) -> Result<()> {
    fs::write(path, matrix_to_string(a))?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<FlowMatrix> {
    parse_matrix(&fs::read_to_string(path)?)
}

/// Degrees on one line, separated by spaces.
pub fn save_degrees(path: impl AsRef<Path>, d: &DegreeSequence) -> Result<()> {
    let text: Vec<String> = d.as_slice().iter().map(|x| x.to_string()).collect();
    fs::write(path, text.join(" ") + "\n")?;
    Ok(())
}

pub fn load_degrees(path: impl AsRef<Path>) -> Result<DegreeSequence> {
    let text = fs::read_to_string(path)?;
    let degrees = text
        .split_whitespace()
        .enumerate()
        .map(|(k, s)| {
            s.parse().map_err(|_| Error::Parse {
                line: 1 + text[..text.find(s).unwrap_or(0)].matches('\n').count(),
                msg: format!("degree {} ({s:?}) is not a natural number", k + 1),
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    if degrees.is_empty() {
        return Err(Error::EmptyInput);
    }
    DegreeSequence::new(degrees)
}

/// `n^2 ln n`, the size factor used to compare costs across `n`.
pub fn size_factor(n: usize) -> f64 {
    let n = n as f64;
    n * n * n.ln()
}

/// One line of a results table. Costs are raw unless `normalized`, in which
/// case each equals the raw cost divided by [`size_factor`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub n: usize,
    pub delta_lb: f64,
    pub delta_bfs: f64,
    pub delta_avg: f64,
    pub lb: f64,
    pub heur1: f64,
    pub heur2: f64,
    pub bfs: f64,
    pub c_avg: f64,
    pub normalized: bool,
}

impl ResultRow {
    pub fn from_report(dataset: impl Into<String>, report: &GapReport) -> Self {
        let c = &report.costs;
        Self {
            dataset: dataset.into(),
            n: report.certificate.n,
            delta_lb: report.delta_lb,
            delta_bfs: report.delta_bfs,
            delta_avg: report.delta_avg,
            lb: c.lb,
            heur1: c.heuristic1,
            heur2: c.heuristic2,
            bfs: c.bfs,
            c_avg: c.c_avg,
            normalized: false,
        }
    }

    /// Costs divided by `n^2 ln n`; ratios are unchanged. Idempotent.
    pub fn normalized(&self) -> Self {
        if self.normalized {
            return self.clone();
        }
        let f = size_factor(self.n);
        Self {
            lb: self.lb / f,
            heur1: self.heur1 / f,
            heur2: self.heur2 / f,
            bfs: self.bfs / f,
            c_avg: self.c_avg / f,
            normalized: true,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ResultFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Parse {
                line: 0,
                msg: format!("unknown format {other:?}; expected csv or json"),
            }),
        }
    }
}

const RESULT_COLUMNS: [&str; 11] = [
    "dataset",
    "n",
    "delta_lb",
    "delta_bfs",
    "delta_avg",
    "lb",
    "heur1",
    "heur2",
    "bfs",
    "c_avg",
    "normalized",
];

pub fn results_to_writer<W: Write>(rows: &[ResultRow], w: W, format: ResultFormat) -> Result<()> {
    match format {
        ResultFormat::Csv => {
            let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
            // written by hand so an empty table still has its header
            wtr.write_record(RESULT_COLUMNS)?;
            for r in rows {
                wtr.serialize(r)?;
            }
            wtr.flush()?;
        }
        ResultFormat::Json => {
            let mut w = w;
            serde_json::to_writer_pretty(&mut w, rows)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn write_results(
    rows: &[ResultRow],
    path: impl AsRef<Path>,
    format: ResultFormat,
) -> Result<()> {
    let file = fs::File::create(path)?;
    results_to_writer(rows, std::io::BufWriter::new(file), format)
}

pub fn read_results(path: impl AsRef<Path>, format: ResultFormat) -> Result<Vec<ResultRow>> {
    let file = fs::File::open(path)?;
    match format {
        ResultFormat::Csv => {
            let mut rdr = csv::Reader::from_reader(file);
            rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
        }
        ResultFormat::Json => Ok(serde_json::from_reader(file)?),
    }
}
