//! JSON and CSV file formats.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use possr_core::{Atom, AtomicMeasure, GroundNorm, ImageObservation, Point, Window};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Context, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomFile {
    pub t: f64,
    pub s: f64,
    pub w: f64,
}

/// `{"atoms": [{"t": .., "s": .., "w": ..}, ...]}`
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureFile {
    pub atoms: Vec<AtomFile>,
}

impl MeasureFile {
    pub fn to_measure(&self) -> Result<AtomicMeasure> {
        AtomicMeasure::new(self.atoms.iter().map(|a| Atom {
            loc: Point::new(a.t, a.s),
            weight: a.w,
        }))
        .context("measure")
    }
}

impl From<&AtomicMeasure> for MeasureFile {
    fn from(x: &AtomicMeasure) -> Self {
        MeasureFile {
            atoms: x
                .atoms()
                .iter()
                .map(|a| AtomFile {
                    t: a.loc.t,
                    s: a.loc.s,
                    w: a.weight,
                })
                .collect(),
        }
    }
}

/// Window configuration, tagged by `kind`. A Gaussian window takes either
/// explicit `centers` or `m` equispaced centers including both endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum WindowSpec {
    Gaussian {
        sigma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        centers: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<usize>,
    },
    Monomial {
        m: usize,
    },
    Tabulated {
        nodes: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

impl WindowSpec {
    pub fn gaussian_uniform(sigma: f64, m: usize) -> Self {
        WindowSpec::Gaussian {
            sigma,
            centers: None,
            m: Some(m),
        }
    }

    pub fn build(&self) -> Result<Window> {
        match self {
            WindowSpec::Gaussian { sigma, centers, m } => match (centers, m) {
                (Some(c), None) => Window::gaussian(*sigma, c.clone()),
                (None, Some(m)) => Window::gaussian_uniform(*sigma, *m),
                (Some(c), Some(m)) if c.len() == *m => Window::gaussian(*sigma, c.clone()),
                _ => {
                    return Err(AppError::Config(
                        "gaussian window needs `centers` or `m` (and they must agree)".into(),
                    ))
                }
            },
            WindowSpec::Monomial { m } => Window::monomial(*m),
            WindowSpec::Tabulated { nodes, values } => Window::tabulated(nodes.clone(), values.clone()),
        }
        .context("window")
    }

    /// Number of functions M.
    pub fn size(&self) -> Option<usize> {
        match self {
            WindowSpec::Gaussian { centers, m, .. } => m.or(centers.as_ref().map(Vec::len)),
            WindowSpec::Monomial { m } => Some(*m),
            WindowSpec::Tabulated { values, .. } => Some(values.len()),
        }
    }

    /// The same family with `m` functions; Gaussian centers become
    /// equispaced.
    pub fn with_len(&self, m: usize) -> Result<Self> {
        match self {
            WindowSpec::Gaussian { sigma, .. } => Ok(WindowSpec::gaussian_uniform(*sigma, m)),
            WindowSpec::Monomial { .. } => Ok(WindowSpec::Monomial { m }),
            WindowSpec::Tabulated { .. } => Err(AppError::Config("cannot resize a tabulated window".into())),
        }
    }
}

impl From<&Window> for WindowSpec {
    fn from(w: &Window) -> Self {
        match w {
            Window::Gaussian { sigma, centers } => WindowSpec::Gaussian {
                sigma: *sigma,
                centers: Some(centers.clone()),
                m: None,
            },
            Window::Monomial { m } => WindowSpec::Monomial { m: *m },
            Window::Tabulated { nodes, values } => WindowSpec::Tabulated {
                nodes: nodes.clone(),
                values: values.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormName {
    #[default]
    L2,
    Linf,
    L1,
}

impl From<NormName> for GroundNorm {
    fn from(n: NormName) -> Self {
        match n {
            NormName::L2 => GroundNorm::L2,
            NormName::Linf => GroundNorm::Linf,
            NormName::L1 => GroundNorm::L1,
        }
    }
}

/// `{"delta": ..}` next to an observation CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationMeta {
    pub delta: f64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
    move |source| AppError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, msg: impl ToString) -> AppError {
    AppError::Parse {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e))
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable value");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, to_json_string(v)).map_err(io_err(path))
}

pub fn read_measure(path: &Path) -> Result<AtomicMeasure> {
    read_json::<MeasureFile>(path)?.to_measure()
}

pub fn write_measure(path: &Path, x: &AtomicMeasure) -> Result<()> {
    write_json(path, &MeasureFile::from(x))
}

pub fn read_window(path: &Path) -> Result<Window> {
    read_json::<WindowSpec>(path)?.build()
}

/// Headerless CSV, one matrix row per line.
pub fn write_matrix_csv(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| parse_err(path, e))?;
    for i in 0..a.nrows() {
        w.write_record(a.row(i).iter().map(|v| v.to_string()))
            .map_err(|e| parse_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| parse_err(path, e))?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(path, format!("{f:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(parse_err(path, "rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// `y.csv` pairs with `y.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_observation(csv_path: &Path, obs: &ImageObservation) -> Result<()> {
    write_matrix_csv(csv_path, &obs.y)?;
    write_json(&sidecar_path(csv_path), &ObservationMeta { delta: obs.delta })
}

/// Reads the matrix and its sidecar; a missing sidecar means δ = 0.
pub fn read_observation(csv_path: &Path) -> Result<ImageObservation> {
    let y = read_matrix_csv(csv_path)?;
    if y.nrows() != y.ncols() || y.nrows() == 0 {
        return Err(parse_err(csv_path, "observation must be a nonempty square matrix"));
    }
    let meta = sidecar_path(csv_path);
    let delta = if meta.exists() {
        read_json::<ObservationMeta>(&meta)?.delta
    } else {
        0.0
    };
    ImageObservation::new(y, delta).context("observation")
}
