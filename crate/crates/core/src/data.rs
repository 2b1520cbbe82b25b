//! Datasets: synthetic generators and CSV ingestion into `[0, R)^d`.
//!
//! CSV files hold one point per line with `d` comma-separated decimal values,
//! `.` as the decimal separator and no header unless requested. Coordinates
//! must be non-negative; [`CsvOptions::shift_to_domain`] subtracts the
//! per-coordinate minimum instead and records the shift.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_domain, Error, Result};
use crate::noise::RngSeed;

/// Environment variable naming the default directory for relative data paths.
pub const DATA_DIR_ENV: &str = "DP_KDE_DATA_DIR";

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Uniform {
        seed: u64,
    },
    GaussianClipped {
        mean: f64,
        sigma: f64,
        seed: u64,
    },
    Csv {
        path: PathBuf,
        shift: Option<Vec<f64>>,
    },
    InMemory,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Uniform { seed } => write!(f, "uniform(seed={seed})"),
            Provenance::GaussianClipped { mean, sigma, seed } => {
                write!(f, "gaussian(mean={mean},sigma={sigma},seed={seed})")
            }
            Provenance::Csv { path, shift: None } => write!(f, "csv({})", path.display()),
            Provenance::Csv {
                path,
                shift: Some(s),
            } => write!(f, "csv({},shift={s:?})", path.display()),
            Provenance::InMemory => f.write_str("in-memory"),
        }
    }
}

/// `n` points in `[0, R)^d`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    dim: usize,
    bound: f64,
    provenance: Provenance,
}

impl Dataset {
    /// Wraps row-major `values`, checking shape and domain.
    pub fn new(values: Vec<f64>, dim: usize, bound: f64, provenance: Provenance) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "dimension must be at least 1".into(),
            ));
        }
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "value bound R must be positive and finite, got {bound}"
            )));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: values.len() % dim,
            });
        }
        for &v in &values {
            check_domain(v, bound)?;
        }
        Ok(Self {
            values,
            dim,
            bound,
            provenance,
        })
    }

    pub fn from_rows<P: AsRef<[f64]>>(rows: &[P], dim: usize, bound: f64) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(values, dim, bound, Provenance::InMemory)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> Vec<&[f64]> {
        self.values.chunks_exact(self.dim).collect()
    }

    /// Coordinate `i` of every point.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(i)
            .step_by(self.dim)
            .copied()
            .collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Writes the points as CSV with shortest round-trip decimal output.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        for row in self.values.chunks_exact(self.dim) {
            let line: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn below(x: f64) -> f64 {
    f64::from_bits(x.to_bits() - 1)
}

/// `n` i.i.d. uniform points on `[0, R)^d`.
pub fn gen_uniform(n: usize, dim: usize, bound: f64, seed: RngSeed) -> Result<Dataset> {
    let mut stream = seed.derive("uniform", 0).stream();
    let top = below(bound);
    let values = (0..n * dim)
        .map(|_| (stream.rng().random::<f64>() * bound).min(top))
        .collect();
    Dataset::new(values, dim, bound, Provenance::Uniform { seed: seed.0 })
}

/// `n` normal points, each coordinate clamped into `[0, R * (1 - 1e-9)]`.
pub fn gen_gaussian_clipped(
    n: usize,
    dim: usize,
    mean: f64,
    sigma: f64,
    bound: f64,
    seed: RngSeed,
) -> Result<Dataset> {
    let normal = Normal::new(mean, sigma)
        .map_err(|e| Error::InvalidParameter(format!("gaussian generator: {e}")))?;
    let mut stream = seed.derive("gaussian", 0).stream();
    let top = bound * (1.0 - 1e-9);
    let values = (0..n * dim)
        .map(|_| normal.sample(stream.rng()).clamp(0.0, top))
        .collect();
    Dataset::new(
        values,
        dim,
        bound,
        Provenance::GaussianClipped {
            mean,
            sigma,
            seed: seed.0,
        },
    )
}

/// CSV ingestion settings.
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    /// Exclusive value bound; inferred as `(1 + 1e-9) * max` when absent.
    pub bound: Option<f64>,
    /// Skip the first line.
    pub header: bool,
    /// Subtract the per-coordinate minimum instead of rejecting negatives.
    pub shift_to_domain: bool,
}

/// Resolves a relative path against [`DATA_DIR_ENV`] when it does not exist
/// as given.
pub fn resolve_data_path(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<Dataset> {
    let path = resolve_data_path(path);
    let text = fs::read_to_string(&path)?;
    parse_csv(&text, &path, options)
}

/// Parses CSV text; `path` is used for diagnostics and provenance only.
pub fn parse_csv(text: &str, path: &Path, options: &CsvOptions) -> Result<Dataset> {
    let diag = |row: usize, column: usize, message: String| Error::Csv {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };
    let mut values = Vec::new();
    let mut dim = None;
    let skip = usize::from(options.header);
    for (i, line) in text.lines().enumerate().skip(skip) {
        let row = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut width = 0;
        for (c, cell) in line.split(',').enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| diag(row, c + 1, format!("`{}` is not a number", cell.trim())))?;
            if !v.is_finite() {
                return Err(diag(row, c + 1, format!("non-finite value {v}")));
            }
            if v < 0.0 && !options.shift_to_domain {
                return Err(diag(
                    row,
                    c + 1,
                    format!("negative value {v}; coordinates must lie in [0, R) (see --shift-to-domain)"),
                ));
            }
            values.push(v);
            width += 1;
        }
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(diag(
                    row,
                    width.min(d) + 1,
                    format!("expected {d} columns, found {width}"),
                ));
            }
            Some(_) => {}
        }
    }

    let Some(dim) = dim else {
        let bound = options.bound.ok_or_else(|| {
            Error::InvalidParameter(format!(
                "{}: empty dataset needs an explicit value bound R",
                path.display()
            ))
        })?;
        return Dataset::new(
            Vec::new(),
            1,
            bound,
            Provenance::Csv {
                path: path.to_path_buf(),
                shift: None,
            },
        );
    };

    let shift = options.shift_to_domain.then(|| {
        let mut mins = vec![f64::INFINITY; dim];
        for row in values.chunks_exact(dim) {
            for (m, &v) in mins.iter_mut().zip(row) {
                *m = m.min(v);
            }
        }
        let shift: Vec<f64> = mins.iter().map(|m| -m).collect();
        for row in values.chunks_exact_mut(dim) {
            for (v, s) in row.iter_mut().zip(&shift) {
                *v += s;
            }
        }
        shift
    });

    let max = values.iter().copied().fold(0.0, f64::max);
    let bound = match options.bound {
        Some(b) => b,
        None if max > 0.0 => (1.0 + 1e-9) * max,
        None => 1.0,
    };
    for (i, &v) in values.iter().enumerate() {
        if v >= bound {
            return Err(diag(
                i / dim + 1 + skip,
                i % dim + 1,
                format!("value {v} is not below the bound R = {bound}"),
            ));
        }
    }
    Dataset::new(
        values,
        dim,
        bound,
        Provenance::Csv {
            path: path.to_path_buf(),
            shift,
        },
    )
}
