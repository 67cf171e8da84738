//! Multi-view datasets and their on-disk interchange format.
//!
//! A dataset is a JSON manifest pointing at one CSV per view. Each view CSV
//! holds a `d_v × n` matrix: one feature per line, one sample per column.
//! Lines starting with `#` are comments and are skipped on load.
//!
//! ```json
//! {
//!   "views": [{"name": "view_0", "csv": "view_0.csv"}],
//!   "labels_csv": "labels.csv"
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Per-view feature-by-sample matrices sharing one sample axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    views: Vec<Mat>,
    view_names: Vec<String>,
    labels: Option<Vec<usize>>,
    feature_names: Option<Vec<Vec<String>>>,
}

impl MultiViewDataset {
    /// Build and validate a dataset. Views are `d_v × n`.
    pub fn new(views: Vec<Mat>, labels: Option<Vec<usize>>) -> Result<Self> {
        let names = (0..views.len()).map(|v| format!("view_{v}")).collect();
        Self::with_names(views, names, labels, None)
    }

    pub fn with_names(
        views: Vec<Mat>,
        view_names: Vec<String>,
        labels: Option<Vec<usize>>,
        feature_names: Option<Vec<Vec<String>>>,
    ) -> Result<Self> {
        let ds = Self {
            views,
            view_names,
            labels,
            feature_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(Error::InvalidDataset("at least one view is required".into()));
        }
        if self.view_names.len() != self.views.len() {
            return Err(Error::InvalidDataset("one name per view is required".into()));
        }
        let n = self.views[0].ncols();
        for (v, x) in self.views.iter().enumerate() {
            if x.nrows() == 0 || x.ncols() == 0 {
                return Err(Error::EmptyView(self.view_names[v].clone()));
            }
            if x.ncols() != n {
                return Err(Error::ShapeMismatch(format!(
                    "view {} has {} samples, view {} has {}",
                    self.view_names[0],
                    n,
                    self.view_names[v],
                    x.ncols()
                )));
            }
            if x.nrows() < 2 {
                return Err(Error::InvalidDataset(format!(
                    "view {} has {} feature(s); at least 2 are required",
                    self.view_names[v],
                    x.nrows()
                )));
            }
            if let Some(pos) = x.iter().position(|a| !a.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "view {} has a non-finite entry at feature {}, sample {}",
                    self.view_names[v],
                    pos % x.nrows(),
                    pos / x.nrows()
                )));
            }
        }
        if n < 2 {
            return Err(Error::InvalidDataset("at least 2 samples are required".into()));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels for {} samples",
                    labels.len(),
                    n
                )));
            }
            if distinct(labels) < 2 {
                return Err(Error::InvalidDataset(
                    "labels must contain at least 2 classes".into(),
                ));
            }
        }
        if let Some(names) = &self.feature_names {
            if names.len() != self.views.len()
                || names.iter().zip(&self.views).any(|(nm, x)| nm.len() != x.nrows())
            {
                return Err(Error::ShapeMismatch(
                    "feature names do not match view dimensions".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn views(&self) -> &[Mat] {
        &self.views
    }

    pub fn view(&self, v: usize) -> &Mat {
        &self.views[v]
    }

    pub fn view_names(&self) -> &[String] {
        &self.view_names
    }

    pub fn n_samples(&self) -> usize {
        self.views[0].ncols()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    /// Feature count of every view.
    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(|x| x.nrows()).collect()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| distinct(l))
    }

    pub fn feature_names(&self) -> Option<&[Vec<String>]> {
        self.feature_names.as_deref()
    }

    /// Sample-wise concatenation of the selected feature rows of every view.
    pub fn select_features(&self, indices: &[Vec<usize>]) -> Mat {
        let total: usize = indices.iter().map(Vec::len).sum();
        let n = self.n_samples();
        let mut out = Mat::zeros(total, n);
        let mut row = 0;
        for (x, idx) in self.views.iter().zip(indices) {
            for &i in idx {
                out.row_mut(row).copy_from(&x.row(i));
                row += 1;
            }
        }
        out
    }
}

fn distinct(labels: &[usize]) -> usize {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Outcome of [`standardize`]: the zero-variance features of each view.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StandardizeReport {
    pub zero_variance: Vec<Vec<usize>>,
}

/// Z-score every feature row (population variance). Constant rows become
/// all-zero and are listed in the report; they keep their index.
pub fn standardize(ds: &MultiViewDataset) -> (MultiViewDataset, StandardizeReport) {
    let mut report = StandardizeReport::default();
    let mut views = Vec::with_capacity(ds.n_views());
    for x in ds.views() {
        let mut z = x.clone();
        let mut flagged = Vec::new();
        let n = x.ncols() as f64;
        for i in 0..x.nrows() {
            let row = x.row(i);
            let mean = row.sum() / n;
            let var = row.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
            let scale = row.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            if var <= (1e-12 * scale).powi(2) || var == 0.0 {
                z.row_mut(i).fill(0.0);
                flagged.push(i);
            } else {
                let sd = var.sqrt();
                for (dst, a) in z.row_mut(i).iter_mut().zip(row.iter()) {
                    *dst = (a - mean) / sd;
                }
            }
        }
        views.push(z);
        report.zero_variance.push(flagged);
    }
    let out = MultiViewDataset {
        views,
        view_names: ds.view_names.clone(),
        labels: ds.labels.clone(),
        feature_names: ds.feature_names.clone(),
    };
    (out, report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub name: String,
    pub csv: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_names: Option<Vec<String>>,
}

/// JSON manifest describing a dataset on disk. Paths are relative to the
/// manifest's directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub views: Vec<ViewEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_csv: Option<PathBuf>,
}

pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<MultiViewDataset> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: manifest_path.to_path_buf(),
        message: e.to_string(),
    })?;
    if manifest.views.is_empty() {
        return Err(Error::Manifest {
            path: manifest_path.to_path_buf(),
            message: "no views listed".into(),
        });
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

    let mut views = Vec::with_capacity(manifest.views.len());
    let mut names = Vec::with_capacity(manifest.views.len());
    let mut feature_names = Vec::new();
    let mut any_names = false;
    for entry in &manifest.views {
        let path = resolve(&entry.csv);
        let x = read_matrix_csv(&path)?;
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::EmptyView(entry.name.clone()));
        }
        any_names |= entry.feature_names.is_some();
        feature_names.push(entry.feature_names.clone().unwrap_or_else(|| {
            (0..x.nrows()).map(|i| format!("{}:{i}", entry.name)).collect()
        }));
        views.push(x);
        names.push(entry.name.clone());
    }
    let labels = match &manifest.labels_csv {
        Some(p) => Some(read_labels_csv(&resolve(p))?),
        None => None,
    };
    MultiViewDataset::with_names(views, names, labels, any_names.then_some(feature_names))
}

/// Write the dataset as `manifest.json` plus one CSV per view (and labels when
/// present) into `dir`. `header` lines are emitted as `#` comments.
pub fn save_dataset(ds: &MultiViewDataset, dir: impl AsRef<Path>, header: &[String]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for (v, x) in ds.views().iter().enumerate() {
        let file = format!("{}.csv", sanitize(&ds.view_names[v]));
        write_matrix_csv(&dir.join(&file), x, header)?;
        entries.push(ViewEntry {
            name: ds.view_names[v].clone(),
            csv: PathBuf::from(file),
            feature_names: ds.feature_names.as_ref().map(|f| f[v].clone()),
        });
    }
    let labels_csv = match ds.labels() {
        Some(labels) => {
            let file = "labels.csv";
            let mut text = comment_block(header);
            for l in labels {
                text.push_str(&format!("{l}\n"));
            }
            write_atomic(&dir.join(file), text.as_bytes())?;
            Some(PathBuf::from(file))
        }
        None => None,
    };
    let manifest = Manifest {
        views: entries,
        labels_csv,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)?;
    write_atomic(&path, format!("{json}\n").as_bytes())?;
    Ok(path)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

pub(crate) fn comment_block(header: &[String]) -> String {
    header.iter().map(|h| format!("# {h}\n")).collect()
}

/// Write bytes to a temporary sibling and rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Write a matrix with one row per line. Values use the shortest
/// representation that parses back to the identical `f64`.
pub fn write_matrix_csv(path: &Path, m: &Mat, header: &[String]) -> Result<()> {
    let mut text = comment_block(header);
    for i in 0..m.nrows() {
        let line: Vec<String> = m.row(i).iter().map(|x| format!("{x:?}")).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

pub fn read_matrix_csv(path: &Path) -> Result<Mat> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for (col, cell) in trimmed.split(',').enumerate() {
            let cell = cell.trim();
            let value: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                path: path.to_path_buf(),
                row: lineno + 1,
                col: col + 1,
                value: cell.to_string(),
            })?;
            row.push(value);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{}: line {} has {} columns, expected {}",
                    path.display(),
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Read a single integer column; 1-based labels are shifted to 0-based.
pub fn read_labels_csv(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut raw = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let cell = line.trim();
        if cell.is_empty() || cell.starts_with('#') {
            continue;
        }
        let value: i64 = cell.parse().map_err(|_| Error::NonNumericCell {
            path: path.to_path_buf(),
            row: lineno + 1,
            col: 1,
            value: cell.to_string(),
        })?;
        raw.push(value);
    }
    let min = raw.iter().copied().min().unwrap_or(0);
    if min < 0 {
        return Err(Error::InvalidDataset(format!(
            "{}: negative label {min}",
            path.display()
        )));
    }
    let shift = if min >= 1 { 1 } else { 0 };
    Ok(raw.into_iter().map(|l| (l - shift) as usize).collect())
}
