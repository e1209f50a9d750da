//! Header-less numeric CSV for matrices and problems.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::problem::LSProblem;

/// Where the right-hand side comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BColumn {
    /// `b` is the last column of the file.
    Last,
    /// `b` is a separate single-column file.
    File(PathBuf),
}

fn csv_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses a rectangular numeric CSV. Errors name the offending line.
pub fn parse_matrix_csv<R: Read>(reader: R, path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            csv_error(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(csv_error(
                    path,
                    line,
                    format!("ragged row: expected {w} fields, found {}", record.len()),
                ))
            }
            _ => {}
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                csv_error(path, line, format!("field {} is not numeric: `{field}`", col + 1))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let cols = width.ok_or_else(|| csv_error(path, 0, "file is empty"))?;
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix_csv(File::open(path)?, path)
}

pub fn load_csv(path: &Path, b_column: &BColumn) -> Result<LSProblem> {
    let data = read_matrix_csv(path)?;
    let (a, b) = match b_column {
        BColumn::Last => {
            if data.ncols() < 2 {
                return Err(csv_error(path, 1, "need at least two columns when b is the last column"));
            }
            let n = data.ncols() - 1;
            (data.columns(0, n).into_owned(), data.column(n).into_owned())
        }
        BColumn::File(b_path) => {
            let b = read_matrix_csv(b_path)?;
            if b.ncols() != 1 {
                return Err(csv_error(b_path, 1, "b file must have exactly one column"));
            }
            if b.nrows() != data.nrows() {
                return Err(csv_error(
                    b_path,
                    b.nrows() as u64,
                    format!("b has {} rows but A has {}", b.nrows(), data.nrows()),
                ));
            }
            (data, b.column(0).into_owned())
        }
    };
    if a.ncols() >= a.nrows() {
        return Err(Error::Dimension(format!(
            "{}: need more rows than columns, got {}x{}",
            path.display(),
            a.nrows(),
            a.ncols()
        )));
    }
    LSProblem::new(a, b)
}

pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:e}")))
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `[A | b]`, the layout read back by `load_csv(.., &BColumn::Last)`.
pub fn write_problem_csv(problem: &LSProblem, path: &Path) -> Result<()> {
    let (rows, cols) = (problem.rows(), problem.cols());
    let mut ab = DMatrix::zeros(rows, cols + 1);
    ab.columns_mut(0, cols).copy_from(problem.a());
    ab.column_mut(cols).copy_from(problem.b());
    write_matrix_csv(&ab, BufWriter::new(File::create(path)?))
}

/// Disjoint random train/test row subsets, sampled without replacement.
pub fn train_test_split(problem: &LSProblem, train: usize, test: usize, seed: u64) -> Result<(LSProblem, LSProblem)> {
    if train + test > problem.rows() {
        return Err(Error::InvalidInput(format!(
            "cannot draw {train} + {test} rows from {}",
            problem.rows()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, problem.rows(), train + test).into_vec();
    let take = |idx: &[usize]| -> Result<LSProblem> {
        let a = DMatrix::from_fn(idx.len(), problem.cols(), |i, j| problem.a()[(idx[i], j)]);
        let b = DVector::from_fn(idx.len(), |i, _| problem.b()[idx[i]]);
        LSProblem::new(a, b)
    };
    Ok((take(&picked[..train])?, take(&picked[train..])?))
}
