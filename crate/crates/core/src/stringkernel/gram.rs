use std::io::{BufRead, Write};

use super::{kernel_engines, KernelEngine, KernelParams, DEFAULT_ENGINE};
use crate::error::{Result, TskError};
use crate::seqdata::{Alphabet, Sequence};

pub(crate) fn normalize_value(raw: f64, self_x: f64, self_y: f64, x: &Sequence, y: &Sequence) -> Result<f64> {
    if self_x <= 0.0 {
        return Err(TskError::DegenerateSequence(x.id().to_string()));
    }
    if self_y <= 0.0 {
        return Err(TskError::DegenerateSequence(y.id().to_string()));
    }
    Ok(raw / (self_x * self_y).sqrt())
}

fn default_engine() -> std::sync::Arc<dyn KernelEngine> {
    kernel_engines().get(DEFAULT_ENGINE).expect("default engine is registered")
}

/// Symmetric matrix of pairwise kernel values over one sequence list.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    n: usize,
    values: Vec<f64>,
    params: KernelParams,
    ids: Vec<String>,
}

impl GramMatrix {
    /// Wraps a row-major square matrix. Fails unless it is exactly symmetric.
    pub fn from_rows(rows: Vec<Vec<f64>>, params: KernelParams, ids: Vec<String>) -> Result<Self> {
        let n = rows.len();
        if ids.len() != n {
            return Err(TskError::DimensionMismatch(format!("{} ids for {n} rows", ids.len())));
        }
        let mut values = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(TskError::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            values.extend(row);
        }
        let g = GramMatrix {
            n,
            values,
            params,
            ids,
        };
        g.check_symmetric()?;
        Ok(g)
    }

    fn check_symmetric(&self) -> Result<()> {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.get(i, j) != self.get(j, i) {
                    return Err(TskError::DimensionMismatch(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// Principal submatrix on `keep` (in that order).
    pub fn select(&self, keep: &[usize]) -> GramMatrix {
        let rows = keep
            .iter()
            .map(|&i| keep.iter().map(|&j| self.get(i, j)).collect())
            .collect();
        let ids = keep.iter().map(|&i| self.ids[i].clone()).collect();
        GramMatrix::from_rows(rows, self.params, ids).expect("principal submatrix is symmetric")
    }

    /// Writes `n k m normalized` followed by `n` rows of 17-significant-digit values.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "{} {} {} {}",
            self.n, self.params.k, self.params.m, self.params.normalize
        )?;
        for i in 0..self.n {
            write_row(&mut w, self.row(i))?;
        }
        Ok(())
    }

    /// Reads the format written by [`GramMatrix::write_text`]. Row ids are
    /// not part of the format and come back as `0..n`.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let (header, rows) = read_header_rows(r)?;
        let (n, params) = header;
        if rows.len() != n {
            return Err(TskError::Format {
                line: rows.len() + 2,
                message: format!("expected {n} rows, found {}", rows.len()),
            });
        }
        GramMatrix::from_rows(rows, params, (0..n).map(|i| i.to_string()).collect())
    }
}

fn write_row<W: Write>(w: &mut W, values: &[f64]) -> std::io::Result<()> {
    let line: Vec<String> = values.iter().map(|v| format!("{v:.16e}")).collect();
    writeln!(w, "{}", line.join(" "))
}

fn read_header_rows<R: BufRead>(r: R) -> Result<((usize, KernelParams), Vec<Vec<f64>>)> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines.next().ok_or(TskError::Format {
        line: 1,
        message: "missing header".into(),
    })?;
    let header = header.map_err(|e| TskError::io("<kernel text>", e))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let bad_header = || TskError::Format {
        line: 1,
        message: format!("expected header 'n k m normalized', got '{header}'"),
    };
    if fields.len() != 4 {
        return Err(bad_header());
    }
    let n: usize = fields[0].parse().map_err(|_| bad_header())?;
    let k: usize = fields[1].parse().map_err(|_| bad_header())?;
    let m: usize = fields[2].parse().map_err(|_| bad_header())?;
    let normalize: bool = fields[3].parse().map_err(|_| bad_header())?;
    let params = KernelParams::new(k, m, normalize)?;
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| TskError::io("<kernel text>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        rows.push(row.map_err(|_| TskError::Format {
            line: idx + 1,
            message: "non-numeric value".into(),
        })?);
    }
    Ok(((n, params), rows))
}

/// Kernel values between two sequence lists (rows × cols).
#[derive(Clone, Debug, PartialEq)]
pub struct CrossKernel {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    params: KernelParams,
}

impl CrossKernel {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Column `j` as a vector over rows.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }
}

/// κ_i = (n_sd / n_td) Σ_j K(x_i^sd, x_j^td).
#[derive(Clone, Debug, PartialEq)]
pub struct KappaVector {
    values: Vec<f64>,
    params: KernelParams,
    n_target: Option<usize>,
}

impl KappaVector {
    pub fn new(values: Vec<f64>, params: KernelParams, n_target: Option<usize>) -> Self {
        KappaVector {
            values,
            params,
            n_target,
        }
    }

    /// Builds κ from a source × target kernel block.
    pub fn from_cross(cross: &CrossKernel) -> Result<Self> {
        if cross.cols() == 0 {
            return Err(TskError::Empty("target set".into()));
        }
        if cross.rows() == 0 {
            return Err(TskError::Empty("source set".into()));
        }
        let scale = cross.rows() as f64 / cross.cols() as f64;
        let values = (0..cross.rows())
            .map(|i| scale * cross.row(i).iter().sum::<f64>())
            .collect();
        Ok(KappaVector::new(values, cross.params, Some(cross.cols())))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_source(&self) -> usize {
        self.values.len()
    }

    /// Target sample count; unknown for vectors read back from text.
    pub fn n_target(&self) -> Option<usize> {
        self.n_target
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "{} {} {} {}",
            self.values.len(),
            self.params.k,
            self.params.m,
            self.params.normalize
        )?;
        for v in &self.values {
            writeln!(w, "{v:.16e}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let ((n, params), rows) = read_header_rows(r)?;
        if rows.len() != n || rows.iter().any(|r| r.len() != 1) {
            return Err(TskError::Format {
                line: 2,
                message: format!("expected {n} single-value rows"),
            });
        }
        Ok(KappaVector::new(rows.into_iter().map(|r| r[0]).collect(), params, None))
    }
}

pub fn gram_matrix(data: &[Sequence], params: &KernelParams, alphabet: &Alphabet) -> Result<GramMatrix> {
    gram_matrix_with(default_engine().as_ref(), data, params, alphabet)
}

pub fn gram_matrix_with(
    engine: &dyn KernelEngine,
    data: &[Sequence],
    params: &KernelParams,
    alphabet: &Alphabet,
) -> Result<GramMatrix> {
    engine.supports(params)?;
    let n = data.len();
    let raw = engine.raw_symmetric(data, params, alphabet)?;
    let mut values: Vec<f64> = raw.iter().map(|&v| v as f64).collect();
    if params.normalize {
        let diag: Vec<f64> = (0..n).map(|i| values[i * n + i]).collect();
        for i in 0..n {
            if diag[i] <= 0.0 {
                return Err(TskError::DegenerateSequence(data[i].id().to_string()));
            }
        }
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = if i == j {
                    1.0
                } else {
                    values[i * n + j] / (diag[i] * diag[j]).sqrt()
                };
            }
        }
    }
    Ok(GramMatrix {
        n,
        values,
        params: *params,
        ids: data.iter().map(|s| s.id().to_string()).collect(),
    })
}

pub fn cross_kernel(
    rows: &[Sequence],
    cols: &[Sequence],
    params: &KernelParams,
    alphabet: &Alphabet,
) -> Result<CrossKernel> {
    cross_kernel_with(default_engine().as_ref(), rows, cols, params, alphabet)
}

/// Normalized entries use each sequence's own self-kernel.
pub fn cross_kernel_with(
    engine: &dyn KernelEngine,
    rows: &[Sequence],
    cols: &[Sequence],
    params: &KernelParams,
    alphabet: &Alphabet,
) -> Result<CrossKernel> {
    engine.supports(params)?;
    let raw = engine.raw_block(rows, cols, params, alphabet)?;
    let mut values: Vec<f64> = raw.iter().map(|&v| v as f64).collect();
    if params.normalize {
        let sr: Vec<f64> = engine
            .self_values(rows, params, alphabet)?
            .into_iter()
            .map(|v| v as f64)
            .collect();
        let sc: Vec<f64> = engine
            .self_values(cols, params, alphabet)?
            .into_iter()
            .map(|v| v as f64)
            .collect();
        let nc = cols.len();
        for (i, x) in rows.iter().enumerate() {
            for (j, y) in cols.iter().enumerate() {
                values[i * nc + j] = normalize_value(values[i * nc + j], sr[i], sc[j], x, y)?;
            }
        }
    }
    Ok(CrossKernel {
        rows: rows.len(),
        cols: cols.len(),
        values,
        params: *params,
    })
}

pub fn kappa_vector(
    source: &[Sequence],
    target: &[Sequence],
    params: &KernelParams,
    alphabet: &Alphabet,
) -> Result<KappaVector> {
    kappa_vector_with(default_engine().as_ref(), source, target, params, alphabet)
}

pub fn kappa_vector_with(
    engine: &dyn KernelEngine,
    source: &[Sequence],
    target: &[Sequence],
    params: &KernelParams,
    alphabet: &Alphabet,
) -> Result<KappaVector> {
    if target.is_empty() {
        return Err(TskError::Empty("target set".into()));
    }
    if source.is_empty() {
        return Err(TskError::Empty("source set".into()));
    }
    KappaVector::from_cross(&cross_kernel_with(engine, source, target, params, alphabet)?)
}
