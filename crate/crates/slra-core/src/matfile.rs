//! Matrix ingestion: row-major dense CSV and Matrix Market coordinate files.
//!
//! Parse errors carry the origin and 1-based line number. Duplicate
//! coordinates in Matrix Market input are summed, matching the format's
//! convention for assembled matrices.

use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linop::{LinOpError, LinearOperator};

#[derive(Debug, Error)]
pub enum MatFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}:{line}: {msg}")]
    Parse {
        origin: String,
        line: usize,
        msg: String,
    },
    #[error("{origin}: no matrix data")]
    Empty { origin: String },
    #[error(transparent)]
    LinOp(#[from] LinOpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    MatrixMarket,
    DenseCsv,
}

impl MatrixFormat {
    /// Picks a format from the content when unambiguous, else the extension.
    pub fn detect(path: &Path, contents: &str) -> MatrixFormat {
        if contents.trim_start().starts_with("%%MatrixMarket") {
            return MatrixFormat::MatrixMarket;
        }
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("mtx") || ext.eq_ignore_ascii_case("mm") => {
                MatrixFormat::MatrixMarket
            }
            _ => MatrixFormat::DenseCsv,
        }
    }
}

/// Reads a matrix file into a counted operator with a zeroed ledger.
pub fn read_matrix(path: &Path, format: MatrixFormat) -> Result<LinearOperator, MatFileError> {
    let contents = std::fs::read_to_string(path).map_err(|source| MatFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let origin = path.display().to_string();
    match format {
        MatrixFormat::DenseCsv => parse_dense_csv(&contents, &origin),
        MatrixFormat::MatrixMarket => parse_matrix_market(&contents, &origin),
    }
}

/// Reads a matrix file, detecting the format from content and extension.
pub fn read_matrix_auto(path: &Path) -> Result<LinearOperator, MatFileError> {
    let contents = std::fs::read_to_string(path).map_err(|source| MatFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let origin = path.display().to_string();
    match MatrixFormat::detect(path, &contents) {
        MatrixFormat::DenseCsv => parse_dense_csv(&contents, &origin),
        MatrixFormat::MatrixMarket => parse_matrix_market(&contents, &origin),
    }
}

/// Row-major comma-separated values; every non-blank line is one row.
pub fn parse_dense_csv(text: &str, origin: &str) -> Result<LinearOperator, MatFileError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut row = Vec::new();
        for field in line.split(',') {
            let field = field.trim();
            let value: f64 = field.parse().map_err(|_| MatFileError::Parse {
                origin: origin.to_string(),
                line: lineno,
                msg: format!("expected a number, got {field:?}"),
            })?;
            if !value.is_finite() {
                return Err(MatFileError::Parse {
                    origin: origin.to_string(),
                    line: lineno,
                    msg: format!("non-finite value {value}"),
                });
            }
            row.push(value);
        }
        if rows.is_empty() {
            width = row.len();
        } else if row.len() != width {
            return Err(MatFileError::Parse {
                origin: origin.to_string(),
                line: lineno,
                msg: format!("row has {} entries, expected {width}", row.len()),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() || width == 0 {
        return Err(MatFileError::Empty {
            origin: origin.to_string(),
        });
    }
    let matrix = DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]);
    Ok(LinearOperator::dense(matrix)?)
}

/// Coordinate-format Matrix Market: `%%MatrixMarket matrix coordinate real
/// general` header, `%` comments, a `rows cols nnz` size line, then
/// 1-indexed `i j value` entries.
pub fn parse_matrix_market(text: &str, origin: &str) -> Result<LinearOperator, MatFileError> {
    let parse_err = |line: usize, msg: String| MatFileError::Parse {
        origin: origin.to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let (first_idx, first) = loop {
        match lines.next() {
            Some((idx, raw)) if raw.trim().is_empty() => {
                let _ = idx;
                continue;
            }
            Some((idx, raw)) => break (idx, raw.trim()),
            None => {
                return Err(MatFileError::Empty {
                    origin: origin.to_string(),
                })
            }
        }
    };
    let header: Vec<String> = first.split_whitespace().map(|t| t.to_lowercase()).collect();
    let expected = ["%%matrixmarket", "matrix", "coordinate", "real", "general"];
    if header.len() != expected.len() || header.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(parse_err(
            first_idx + 1,
            format!("unsupported header {first:?}; expected \"%%MatrixMarket matrix coordinate real general\""),
        ));
    }
    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (idx, raw) in lines {
        let line = raw.trim();
        let lineno = idx + 1;
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(
                        lineno,
                        format!("size line needs \"rows cols nnz\", got {line:?}"),
                    ));
                }
                let nums: Result<Vec<usize>, _> = fields.iter().map(|f| f.parse()).collect();
                let nums = nums.map_err(|_| {
                    parse_err(lineno, format!("size line needs three integers, got {line:?}"))
                })?;
                if nums[0] == 0 || nums[1] == 0 {
                    return Err(parse_err(lineno, "matrix dimensions must be positive".into()));
                }
                size = Some((nums[0], nums[1], nums[2]));
                triplets.reserve(nums[2]);
            }
            Some((rows, cols, nnz)) => {
                if triplets.len() == nnz {
                    return Err(parse_err(
                        lineno,
                        format!("more than the {nnz} entries announced in the header"),
                    ));
                }
                if fields.len() != 3 {
                    return Err(parse_err(
                        lineno,
                        format!("entry needs \"i j value\", got {line:?}"),
                    ));
                }
                let i: usize = fields[0]
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad row index {:?}", fields[0])))?;
                let j: usize = fields[1]
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad column index {:?}", fields[1])))?;
                let v: f64 = fields[2]
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad value {:?}", fields[2])))?;
                if !v.is_finite() {
                    return Err(parse_err(lineno, format!("non-finite value {v}")));
                }
                if i == 0 || i > rows || j == 0 || j > cols {
                    return Err(parse_err(
                        lineno,
                        format!("entry ({i}, {j}) outside the {rows}x{cols} header"),
                    ));
                }
                triplets.push((i - 1, j - 1, v));
            }
        }
    }
    let Some((rows, cols, nnz)) = size else {
        return Err(MatFileError::Empty {
            origin: origin.to_string(),
        });
    };
    if triplets.len() != nnz {
        return Err(parse_err(
            text.lines().count(),
            format!("header announced {nnz} entries, found {}", triplets.len()),
        ));
    }
    Ok(LinearOperator::sparse(rows, cols, triplets)?)
}
