//! Dataset container, CSV ingestion, and synthetic data generation.
//!
//! A [`Dataset`] holds a numeric response vector and an n×p covariate matrix
//! (column names included, intercept column tracked explicitly). Data-space
//! vectors z = (y, x) put the response first, matching the layout the model
//! derivatives and cluster moments use.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// In-memory numeric dataset: response `y` plus covariate matrix `x`.
#[derive(Clone, Debug)]
pub struct Dataset {
    y: Vec<f64>,
    x: Array2<f64>,
    response_name: String,
    covariate_names: Vec<String>,
    /// Index of the all-ones intercept column in `x`, if present.
    intercept_col: Option<usize>,
}

impl Dataset {
    pub fn new(
        y: Vec<f64>,
        x: Array2<f64>,
        response_name: impl Into<String>,
        covariate_names: Vec<String>,
        intercept_col: Option<usize>,
    ) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                context: "Dataset response vs covariate rows".to_string(),
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if covariate_names.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                context: "Dataset covariate names".to_string(),
                expected: x.ncols(),
                got: covariate_names.len(),
            });
        }
        if let Some(c) = intercept_col {
            if c >= x.ncols() {
                return Err(Error::InvalidValue {
                    name: "intercept_col".to_string(),
                    reason: format!("index {c} out of range for {} columns", x.ncols()),
                });
            }
        }
        Ok(Dataset {
            y,
            x,
            response_name: response_name.into(),
            covariate_names,
            intercept_col,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn x_row(&self, k: usize) -> ArrayView1<'_, f64> {
        self.x.row(k)
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn intercept_col(&self) -> Option<usize> {
        self.intercept_col
    }

    /// Stacked data-space row z_k = (y_k, x_k), length p+1.
    pub fn z_row(&self, k: usize) -> Array1<f64> {
        let mut z = Array1::<f64>::zeros(self.p() + 1);
        z[0] = self.y[k];
        for j in 0..self.p() {
            z[j + 1] = self.x[[k, j]];
        }
        z
    }

    /// The full n × (p+1) data-space matrix with the response in column 0;
    /// this is the coordinate space whole-row clustering operates on.
    pub fn z_matrix(&self) -> Array2<f64> {
        let mut z = Array2::<f64>::zeros((self.n(), self.p() + 1));
        for k in 0..self.n() {
            z[[k, 0]] = self.y[k];
            for j in 0..self.p() {
                z[[k, j + 1]] = self.x[[k, j]];
            }
        }
        z
    }

    /// Check that every response is exactly 0 or 1.
    pub fn check_binary_response(&self) -> Result<()> {
        for (k, &v) in self.y.iter().enumerate() {
            if v != 0.0 && v != 1.0 {
                return Err(Error::InvalidValue {
                    name: self.response_name.clone(),
                    reason: format!("row {k}: binary response required, got {v}"),
                });
            }
        }
        Ok(())
    }

    /// Replace the covariate matrix, keeping everything else: the standard
    /// way to move a dataset into standardized coordinates before clustering
    /// or sampling. The new matrix must have the same shape.
    pub fn with_x(&self, x: Array2<f64>) -> Result<Self> {
        if x.dim() != self.x.dim() {
            return Err(Error::DimensionMismatch {
                context: "Dataset::with_x".to_string(),
                expected: self.x.ncols(),
                got: x.ncols(),
            });
        }
        Ok(Dataset {
            y: self.y.clone(),
            x,
            response_name: self.response_name.clone(),
            covariate_names: self.covariate_names.clone(),
            intercept_col: self.intercept_col,
        })
    }
}

/// Read a dataset from a comma-separated file with a header row.
///
/// All cells must parse as finite numbers; failures are reported with their
/// 1-based row and column. When `add_intercept` is set, a leading all-ones
/// column named `const` is prepended to the covariates — unless the file
/// already contains an all-ones column, which is adopted as the intercept
/// instead so a written dataset can be re-ingested without doubling it.
pub fn ingest_csv(path: &Path, response_column: &str, add_intercept: bool) -> Result<Dataset> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::InvalidInput {
            path: display.clone(),
            reason: e.to_string(),
        })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::InvalidInput {
            path: display.clone(),
            reason: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.iter().all(|h| h.parse::<f64>().is_ok()) {
        return Err(Error::InvalidInput {
            path: display.clone(),
            reason: "first row is entirely numeric; a header row is required".to_string(),
        });
    }
    let resp_idx = headers
        .iter()
        .position(|h| h == response_column)
        .ok_or_else(|| Error::InvalidInput {
            path: display.clone(),
            reason: format!("response column '{response_column}' not found in header"),
        })?;

    let ncols = headers.len();
    let mut y = Vec::new();
    let mut flat = Vec::new();
    for (ridx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::InvalidInput {
            path: display.clone(),
            reason: format!("row {}: {e}", ridx + 2),
        })?;
        if record.len() != ncols {
            return Err(Error::InvalidInput {
                path: display.clone(),
                reason: format!(
                    "row {}: expected {ncols} fields, got {}",
                    ridx + 2,
                    record.len()
                ),
            });
        }
        for (cidx, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::InvalidInput {
                path: display.clone(),
                reason: format!(
                    "row {}, column {} ({}): cannot parse '{}' as a number",
                    ridx + 2,
                    cidx + 1,
                    headers[cidx],
                    cell
                ),
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidInput {
                    path: display.clone(),
                    reason: format!(
                        "row {}, column {} ({}): non-finite value",
                        ridx + 2,
                        cidx + 1,
                        headers[cidx]
                    ),
                });
            }
            if cidx == resp_idx {
                y.push(v);
            } else {
                flat.push(v);
            }
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(Error::InvalidInput {
            path: display.clone(),
            reason: "no data rows".to_string(),
        });
    }

    let mut covariate_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != resp_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let p_raw = covariate_names.len();
    let raw = Array2::from_shape_vec((n, p_raw), flat).expect("shape checked above");

    // a column that is already all ones serves as the intercept whether or
    // not one was requested; standardization must know to skip it either way
    let existing = (0..p_raw).find(|&j| raw.column(j).iter().all(|&v| v == 1.0));
    let (x, intercept_col) = if add_intercept && existing.is_none() {
        let mut x = Array2::<f64>::ones((n, p_raw + 1));
        x.slice_mut(ndarray::s![.., 1..]).assign(&raw);
        covariate_names.insert(0, "const".to_string());
        (x, Some(0))
    } else {
        (raw, existing)
    };

    Dataset::new(y, x, response_column, covariate_names, intercept_col)
}

/// Write a dataset back to CSV (response first, then covariates).
///
/// Floats are written with Rust's shortest round-trip formatting, so a
/// write → ingest cycle reproduces the values exactly.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let display = path.display().to_string();
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(&display, e))?,
    );
    let mut header = vec![dataset.response_name().to_string()];
    header.extend(dataset.covariate_names().iter().cloned());
    writeln!(out, "{}", header.join(",")).map_err(|e| Error::io(&display, e))?;
    for k in 0..dataset.n() {
        let mut fields = Vec::with_capacity(dataset.p() + 1);
        fields.push(format_float(dataset.y()[k]));
        for j in 0..dataset.p() {
            fields.push(format_float(dataset.x()[[k, j]]));
        }
        writeln!(out, "{}", fields.join(",")).map_err(|e| Error::io(&display, e))?;
    }
    out.flush().map_err(|e| Error::io(&display, e))?;
    Ok(())
}

/// Shortest round-trip decimal representation of a float.
pub(crate) fn format_float(v: f64) -> String {
    let mut s = format!("{v}");
    // `{}` prints integral floats without a decimal point; keep them
    // unambiguous as floats in the CSV
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

/// Generate a synthetic logistic-regression dataset.
///
/// Covariates are iid standard normal with a leading all-ones intercept
/// column; responses are drawn with success probability
/// P(y = 1 | x) = 1/(1 + exp(xᵀβ)). `beta_true` must have length p
/// (including the intercept coefficient).
pub fn synth_logistic(n: usize, beta_true: &[f64], seed: u64) -> Result<Dataset> {
    let p = beta_true.len();
    if n == 0 || p == 0 {
        return Err(Error::InvalidValue {
            name: "synth_logistic".to_string(),
            reason: "need n ≥ 1 and at least one coefficient".to_string(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::<f64>::ones((n, p));
    for k in 0..n {
        for j in 1..p {
            x[[k, j]] = StandardNormal.sample(&mut rng);
        }
    }
    let mut y = Vec::with_capacity(n);
    for k in 0..n {
        let eta: f64 = (0..p).map(|j| x[[k, j]] * beta_true[j]).sum();
        let p1 = 1.0 / (1.0 + eta.exp());
        let u: f64 = rng.random();
        y.push(if u < p1 { 1.0 } else { 0.0 });
    }
    let mut names = vec!["const".to_string()];
    names.extend((1..p).map(|j| format!("x{j}")));
    Dataset::new(y, x, "y", names, Some(0))
}

/// Comparison operators usable in a stratum predicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Le,
    Ge,
    Lt,
    Gt,
}

/// A row predicate of the form `column OP value`, e.g. `y == 1`.
///
/// Rows matching the predicate form the *exact* stratum: their log-density
/// terms are always evaluated exactly rather than estimated.
#[derive(Clone, Debug)]
pub struct StratumPredicate {
    pub column: String,
    pub op: CmpOp,
    pub value: f64,
}

impl StratumPredicate {
    /// Parse expressions like `y == 1`, `x3 <= 0.5`.
    pub fn parse(expr: &str) -> Result<Self> {
        let ops = [
            ("==", CmpOp::Eq),
            ("!=", CmpOp::Ne),
            ("<=", CmpOp::Le),
            (">=", CmpOp::Ge),
            ("<", CmpOp::Lt),
            (">", CmpOp::Gt),
        ];
        for (tok, op) in ops {
            if let Some(pos) = expr.find(tok) {
                let column = expr[..pos].trim().to_string();
                let value_str = expr[pos + tok.len()..].trim();
                if column.is_empty() || value_str.is_empty() {
                    break;
                }
                let value = value_str.parse::<f64>().map_err(|_| Error::InvalidValue {
                    name: "stratum predicate".to_string(),
                    reason: format!("cannot parse '{value_str}' as a number"),
                })?;
                return Ok(StratumPredicate { column, op, value });
            }
        }
        Err(Error::InvalidValue {
            name: "stratum predicate".to_string(),
            reason: format!("expected '<column> <op> <value>', got '{expr}'"),
        })
    }

    fn matches(&self, v: f64) -> bool {
        match self.op {
            CmpOp::Eq => v == self.value,
            CmpOp::Ne => v != self.value,
            CmpOp::Le => v <= self.value,
            CmpOp::Ge => v >= self.value,
            CmpOp::Lt => v < self.value,
            CmpOp::Gt => v > self.value,
        }
    }

    /// Indices of rows satisfying the predicate, in row order.
    pub fn select(&self, dataset: &Dataset) -> Result<Vec<usize>> {
        let get: Box<dyn Fn(usize) -> f64> = if self.column == dataset.response_name() {
            Box::new(|k| dataset.y()[k])
        } else {
            let j = dataset
                .covariate_names()
                .iter()
                .position(|n| *n == self.column)
                .ok_or_else(|| Error::InvalidValue {
                    name: "stratum predicate".to_string(),
                    reason: format!("unknown column '{}'", self.column),
                })?;
            Box::new(move |k| dataset.x()[[k, j]])
        };
        Ok((0..dataset.n()).filter(|&k| self.matches(get(k))).collect())
    }
}
