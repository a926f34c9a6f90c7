use std::fs;
use std::io::Write;
use std::path::Path;

use contratensor::cumulants::DataMatrix;
use contratensor::{Error, Result};
use nalgebra::DMatrix;

/// Which column of a CSV holds sample labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    /// 1-based position.
    Index(usize),
    Name(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) if i > 0 => LabelColumn::Index(i),
            _ => LabelColumn::Name(s.to_string()),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub data: DataMatrix,
    pub labels: Option<Vec<String>>,
    /// Header name of the label column, if there is a header.
    pub label_name: Option<String>,
}

fn parse_cell(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

/// Reads rows of numbers. A first row with any non-numeric cell (outside
/// the label column) is taken as a header.
pub fn read_table(path: &Path, label: Option<&LabelColumn>) -> Result<Table> {
    let text = fs::read_to_string(path)?;
    parse_table(&text, label).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_table(text: &str, label: Option<&LabelColumn>) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        records.push((line, rec));
    }
    let Some((_, first)) = records.first() else {
        return Err(Error::Parse("no rows".into()));
    };

    let index_hint = match label {
        Some(LabelColumn::Index(i)) => Some(i - 1),
        _ => None,
    };
    let is_header = matches!(label, Some(LabelColumn::Name(_)))
        || first
            .iter()
            .enumerate()
            .any(|(c, cell)| Some(c) != index_hint && parse_cell(cell).is_none());
    let header: Option<Vec<String>> = is_header.then(|| first.iter().map(str::to_string).collect());
    if is_header {
        log::info!("treating the first row as a header");
    }
    let label_idx = match label {
        None => None,
        Some(LabelColumn::Index(i)) => Some(i - 1),
        Some(LabelColumn::Name(n)) => Some(
            header
                .as_ref()
                .and_then(|h| h.iter().position(|c| c == n))
                .ok_or_else(|| Error::Parse(format!("no column named {n:?} in the header")))?,
        ),
    };

    let body = &records[usize::from(is_header)..];
    if body.is_empty() {
        return Err(Error::Parse("no rows".into()));
    }
    let width = header.as_ref().map_or(body[0].1.len(), Vec::len);
    if let Some(li) = label_idx {
        if li >= width {
            return Err(Error::Parse(format!("label column {} is beyond the {width} columns", li + 1)));
        }
    }
    let p = width - usize::from(label_idx.is_some());
    if p == 0 {
        return Err(Error::Parse("no numeric columns".into()));
    }
    let mut values = Vec::with_capacity(body.len() * p);
    let mut labels = label_idx.map(|_| Vec::with_capacity(body.len()));
    for (line, rec) in body {
        if rec.len() != width {
            return Err(Error::Parse(format!(
                "line {line}: expected {width} fields, found {}",
                rec.len()
            )));
        }
        for (c, cell) in rec.iter().enumerate() {
            if Some(c) == label_idx {
                labels.as_mut().unwrap().push(cell.to_string());
                continue;
            }
            let v = parse_cell(cell).ok_or_else(|| {
                Error::Parse(format!("line {line}, column {}: non-numeric value {cell:?}", c + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("line {line}, column {}: non-finite value", c + 1)));
            }
            values.push(v);
        }
    }
    let label_name = header.zip(label_idx).map(|(mut h, li)| h.swap_remove(li));
    Ok(Table {
        data: DataMatrix::new(DMatrix::from_row_slice(body.len(), p, &values))?,
        labels,
        label_name,
    })
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// CSV text for a matrix, optionally with a header row.
pub fn matrix_csv(m: &DMatrix<f64>, header: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
