//! CSV readers for matrices, restriction files and long-format panels.

use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};

use gmls_core::{Matrix, Vector};

/// An I/O or parse failure, located by file and line where possible.
#[derive(Debug, Clone, PartialEq)]
pub struct InputError {
    pub path: PathBuf,
    pub line: Option<u64>,
    pub message: String,
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.path.display(), line, self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl std::error::Error for InputError {}

fn fail(path: &Path, line: Option<u64>, message: impl Into<String>) -> InputError {
    InputError { path: path.to_path_buf(), line, message: message.into() }
}

struct Row {
    line: u64,
    fields: Vec<String>,
}

fn read_rows(path: &Path) -> Result<Vec<Row>, InputError> {
    let file = File::open(path).map_err(|e| fail(path, None, e.to_string()))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line());
            fail(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        rows.push(Row { line, fields: record.iter().map(str::to_owned).collect() });
    }
    Ok(rows)
}

fn parse_number(path: &Path, line: u64, field: &str) -> Result<f64, InputError> {
    let v: f64 = field
        .parse()
        .map_err(|_| fail(path, Some(line), format!("'{field}' is not a decimal number")))?;
    if !v.is_finite() {
        return Err(fail(path, Some(line), format!("'{field}' is not finite")));
    }
    Ok(v)
}

fn numeric_rows(path: &Path, rows: &[Row]) -> Result<Matrix, InputError> {
    let Some(first) = rows.first() else {
        return Err(fail(path, None, "file contains no rows"));
    };
    let cols = first.fields.len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for row in rows {
        if row.fields.len() != cols {
            return Err(fail(
                path,
                Some(row.line),
                format!("expected {cols} fields, found {}", row.fields.len()),
            ));
        }
        for field in &row.fields {
            data.push(parse_number(path, row.line, field)?);
        }
    }
    Ok(Matrix::from_row_slice(rows.len(), cols, &data))
}

/// Headerless CSV, one matrix row per line.
pub fn read_matrix(path: &Path) -> Result<Matrix, InputError> {
    numeric_rows(path, &read_rows(path)?)
}

/// A single column or a single row of numbers.
pub fn read_vector(path: &Path) -> Result<Vector, InputError> {
    let m = read_matrix(path)?;
    match m.shape() {
        (_, 1) => Ok(m.column(0).into_owned()),
        (1, _) => Ok(m.row(0).transpose()),
        (r, c) => Err(fail(path, None, format!("expected a vector, found a {r}x{c} matrix"))),
    }
}

/// `K` coefficient columns followed by the right-hand side, with an optional
/// header row whose last field is `rhs`.
pub fn read_restrictions(path: &Path) -> Result<(Matrix, Vector), InputError> {
    let mut rows = read_rows(path)?;
    if let Some(first) = rows.first() {
        let looks_numeric = first.fields.iter().all(|f| f.parse::<f64>().is_ok());
        if !looks_numeric {
            if first.fields.last().map(String::as_str) != Some("rhs") {
                return Err(fail(path, Some(first.line), "header must end with an 'rhs' column"));
            }
            rows.remove(0);
        }
    }
    if rows.is_empty() {
        return Err(fail(path, None, "no restriction rows"));
    }
    let m = numeric_rows(path, &rows)?;
    if m.ncols() < 2 {
        return Err(fail(path, None, "need at least one coefficient column and an rhs column"));
    }
    let k = m.ncols() - 1;
    Ok((m.columns(0, k).into_owned(), m.column(k).into_owned()))
}

/// Long-format panel: `equation,period,response,x1,…,xK` with one based
/// equation and period indices, every pair present exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    pub designs: Vec<Matrix>,
    pub responses: Vec<Vector>,
}

pub fn read_panel(path: &Path) -> Result<PanelData, InputError> {
    let rows = read_rows(path)?;
    let Some(header) = rows.first() else {
        return Err(fail(path, None, "file contains no rows"));
    };
    let expected = ["equation", "period", "response"];
    if header.fields.len() < 4 || header.fields[..3] != expected {
        return Err(fail(path, Some(header.line), "header must be equation,period,response,x1,...,xK"));
    }
    let k = header.fields.len() - 3;
    let body = &rows[1..];
    if body.is_empty() {
        return Err(fail(path, None, "no observations"));
    }
    let mut obs = Vec::with_capacity(body.len());
    for row in body {
        if row.fields.len() != k + 3 {
            return Err(fail(path, Some(row.line), format!("expected {} fields, found {}", k + 3, row.fields.len())));
        }
        let index = |j: usize| -> Result<usize, InputError> {
            let v: usize = row.fields[j]
                .parse()
                .map_err(|_| fail(path, Some(row.line), format!("'{}' is not a positive integer", row.fields[j])))?;
            if v == 0 {
                return Err(fail(path, Some(row.line), "indices are one based"));
            }
            Ok(v - 1)
        };
        let (i, t) = (index(0)?, index(1)?);
        let values = row.fields[2..]
            .iter()
            .map(|f| parse_number(path, row.line, f))
            .collect::<Result<Vec<f64>, _>>()?;
        obs.push((row.line, i, t, values));
    }
    let n = obs.iter().map(|o| o.1).max().unwrap_or(0) + 1;
    let m = obs.iter().map(|o| o.2).max().unwrap_or(0) + 1;
    if obs.len() != n * m {
        return Err(fail(path, None, format!("expected {} observations for {n} equations and {m} periods, found {}", n * m, obs.len())));
    }
    let mut designs = vec![Matrix::zeros(m, k); n];
    let mut responses = vec![Vector::zeros(m); n];
    let mut seen = vec![false; n * m];
    for (line, i, t, values) in obs {
        if std::mem::replace(&mut seen[i * m + t], true) {
            return Err(fail(path, Some(line), format!("duplicate observation for equation {} period {}", i + 1, t + 1)));
        }
        responses[i][t] = values[0];
        for j in 0..k {
            designs[i][(t, j)] = values[j + 1];
        }
    }
    Ok(PanelData { designs, responses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn matrix_and_vector() {
        let f = temp("1, 2\n3,4\n\n");
        assert_eq!(read_matrix(f.path()).unwrap(), Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let f = temp("1\n2\n3\n");
        assert_eq!(read_vector(f.path()).unwrap(), Vector::from_vec(vec![1.0, 2.0, 3.0]));
    }

    #[test]
    fn malformed_csv_reports_line() {
        let f = temp("1,2\n3,x\n");
        let e = read_matrix(f.path()).unwrap_err();
        assert_eq!(e.line, Some(2));
        let f = temp("1,2\n3\n");
        assert_eq!(read_matrix(f.path()).unwrap_err().line, Some(2));
    }

    #[test]
    fn restrictions_with_and_without_header() {
        let f = temp("b1,b2,rhs\n1,1,1\n");
        let (r, rhs) = read_restrictions(f.path()).unwrap();
        assert_eq!(r, Matrix::from_row_slice(1, 2, &[1.0, 1.0]));
        assert_eq!(rhs, Vector::from_vec(vec![1.0]));
        let f = temp("1,-1,0\n");
        assert_eq!(read_restrictions(f.path()).unwrap().0.ncols(), 2);
        let f = temp("b1,b2,c\n1,1,1\n");
        assert!(read_restrictions(f.path()).is_err());
    }

    #[test]
    fn panel_long_format() {
        let f = temp("equation,period,response,x1\n1,1,1.0,0.5\n1,2,2.0,1.5\n2,2,4.0,3.0\n2,1,3.0,2.0\n");
        let p = read_panel(f.path()).unwrap();
        assert_eq!(p.responses[1], Vector::from_vec(vec![3.0, 4.0]));
        assert_eq!(p.designs[1], Matrix::from_row_slice(2, 1, &[2.0, 3.0]));
        let f = temp("equation,period,response,x1\n1,1,1.0,0.5\n1,1,2.0,1.5\n");
        assert!(read_panel(f.path()).is_err());
    }
}
