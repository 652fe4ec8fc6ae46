//! Datasets: CSV ingestion, constant-column removal, PCA and synthetic
//! mixture data.

use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gmm::GmmParams;
use crate::samplers::split_rng;

/// `n` observations in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    values: Vec<f64>,
    provenance: Vec<String>,
}

impl Dataset {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Data(format!("dataset must be non-empty, got {n}x{d}")));
        }
        if values.len() != n * d {
            return Err(Error::Data(format!(
                "{} values for a {n}x{d} dataset",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, column {}",
                pos / d + 1,
                pos % d + 1
            )));
        }
        Ok(Dataset {
            n,
            d,
            values,
            provenance: Vec::new(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Data("rows have different lengths".into()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Notes on where the data came from and what was applied to it.
    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.provenance.push(note.into());
        self
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.d];
        for row in self.rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= self.n as f64);
        means
    }

    /// Covariance matrix; `unbiased` divides by `n - 1` (by `n` when `n = 1`).
    pub fn covariance(&self, unbiased: bool) -> DMatrix<f64> {
        let means = self.column_means();
        let mut cov = DMatrix::zeros(self.d, self.d);
        let mut centered = vec![0.0; self.d];
        for row in self.rows() {
            for (c, (v, m)) in centered.iter_mut().zip(row.iter().zip(&means)) {
                *c = v - m;
            }
            for a in 0..self.d {
                for b in a..self.d {
                    cov[(a, b)] += centered[a] * centered[b];
                }
            }
        }
        let denom = if unbiased && self.n > 1 { self.n - 1 } else { self.n } as f64;
        for a in 0..self.d {
            for b in a..self.d {
                let v = cov[(a, b)] / denom;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        cov
    }
}

/// Parses a rectangular numeric CSV body; `label` names the source in errors.
/// Rows are 1-based file lines, columns 1-based fields.
pub fn parse_csv<R: Read>(reader: R, has_header: bool, label: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(None)
        .from_reader(reader);
    let parse_err = |row: usize, column: usize, message: String| Error::Parse {
        path: label.to_string(),
        row,
        column,
        message,
    };
    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    let mut n = 0;
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let row = e.position().map_or(0, |p| p.line() as usize);
                return Err(parse_err(row, 0, e.to_string()));
            }
        }
        let line = record.position().map_or(n + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(parse_err(
                    line,
                    record.len().min(w) + 1,
                    format!("ragged row: expected {w} fields, found {}", record.len()),
                ));
            }
            _ => {}
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, c + 1, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(line, c + 1, format!("non-finite value: {field:?}")));
            }
            values.push(v);
        }
        n += 1;
    }
    let d = match width {
        Some(d) if n > 0 && d > 0 => d,
        _ => return Err(parse_err(0, 0, "empty file".into())),
    };
    Ok(Dataset::new(n, d, values)?.with_note(format!("loaded from {label}")))
}

/// Loads a dataset from a CSV file, one example per row.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file, has_header, &path.display().to_string())
}

/// Formats a dataset as CSV using the shortest round-trip float
/// representation.
pub fn to_csv_string(data: &Dataset, header: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for row in data.rows() {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(path: impl AsRef<Path>, data: &Dataset, header: Option<&[String]>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_csv_string(data, header)).map_err(|e| Error::io(path, e))
}

fn select_columns(data: &Dataset, keep: &[usize]) -> Result<Dataset> {
    let mut values = Vec::with_capacity(data.len() * keep.len());
    for row in data.rows() {
        values.extend(keep.iter().map(|&c| row[c]));
    }
    let mut out = Dataset::new(data.len(), keep.len(), values)?;
    out.provenance = data.provenance.clone();
    Ok(out)
}

/// Removes columns that are exactly constant or whose sample variance is at
/// most `tol`. Returns the reduced data and the removed (0-based) indices.
pub fn drop_constant_columns(data: &Dataset, tol: f64) -> Result<(Dataset, Vec<usize>)> {
    let means = data.column_means();
    let denom = (data.len().max(2) - 1) as f64;
    let mut removed = Vec::new();
    let mut keep = Vec::new();
    for c in 0..data.dim() {
        let first = data.row(0)[c];
        let constant = data.rows().all(|r| r[c] == first);
        let var = data.rows().map(|r| (r[c] - means[c]).powi(2)).sum::<f64>() / denom;
        if constant || var <= tol {
            removed.push(c);
        } else {
            keep.push(c);
        }
    }
    if keep.is_empty() {
        return Err(Error::Data("every column is constant; nothing left".into()));
    }
    let out = select_columns(data, &keep)?;
    let note = format!("dropped {} constant columns", removed.len());
    Ok((out.with_note(note), removed))
}

/// Affine map learned by PCA: center, project on the leading eigenvectors,
/// optionally rescale each component to unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRecord {
    pub means: Vec<f64>,
    /// Kept eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// `d x k` matrix whose columns are the kept eigenvectors.
    pub eigenvectors: DMatrix<f64>,
    pub whiten: bool,
}

impl ProjectionRecord {
    pub fn input_dim(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.eigenvectors.ncols()
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        let d = self.input_dim();
        let k = self.output_dim();
        if data.dim() != d {
            return Err(Error::Data(format!(
                "projection expects {d} columns, data has {}",
                data.dim()
            )));
        }
        let mut values = Vec::with_capacity(data.len() * k);
        let mut centered = vec![0.0; d];
        for row in data.rows() {
            for (c, (v, m)) in centered.iter_mut().zip(row.iter().zip(&self.means)) {
                *c = v - m;
            }
            for j in 0..k {
                let mut acc = 0.0;
                for a in 0..d {
                    acc += centered[a] * self.eigenvectors[(a, j)];
                }
                if self.whiten {
                    acc /= self.eigenvalues[j].sqrt();
                }
                values.push(acc);
            }
        }
        let mut out = Dataset::new(data.len(), k, values)?;
        out.provenance = data.provenance.clone();
        Ok(out.with_note(format!(
            "projected on {k} principal components{}",
            if self.whiten { " (whitened)" } else { "" }
        )))
    }
}

/// Projects centered data on the `target_dim` leading eigenvectors of the
/// sample covariance (descending eigenvalues). Each eigenvector is signed so
/// that its largest-magnitude entry is positive.
pub fn pca_project(data: &Dataset, target_dim: usize, whiten: bool) -> Result<(Dataset, ProjectionRecord)> {
    let d = data.dim();
    if target_dim == 0 || target_dim > d {
        return Err(Error::Data(format!(
            "PCA target dimension {target_dim} must be in 1..={d}"
        )));
    }
    let cov = data.covariance(true);
    let eig = SymmetricEigen::try_new(cov, f64::EPSILON, 0)
        .ok_or_else(|| Error::Data("covariance eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut vectors = DMatrix::zeros(d, target_dim);
    let mut values = Vec::with_capacity(target_dim);
    for (j, &src) in order.iter().take(target_dim).enumerate() {
        let col = eig.eigenvectors.column(src);
        let lead = (0..d)
            .max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()).then(b.cmp(&a)))
            .unwrap_or(0);
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for a in 0..d {
            vectors[(a, j)] = sign * col[a];
        }
        values.push(eig.eigenvalues[src]);
    }
    if whiten {
        if let Some(v) = values.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Data(format!("cannot whiten a component with variance {v}")));
        }
    }
    let record = ProjectionRecord {
        means: data.column_means(),
        eigenvalues: values,
        eigenvectors: vectors,
        whiten,
    };
    let projected = record.apply(data)?;
    Ok((projected, record))
}

/// Full preprocessing record: constant-column removal then an optional PCA.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRecord {
    pub input_dim: usize,
    pub removed_columns: Vec<usize>,
    pub projection: Option<ProjectionRecord>,
}

pub const MANIFEST_FORMAT: &str = "spider-em-projection/1";

impl PipelineRecord {
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.input_dim {
            return Err(Error::Data(format!(
                "pipeline expects {} columns, data has {}",
                self.input_dim,
                data.dim()
            )));
        }
        let keep: Vec<usize> = (0..self.input_dim)
            .filter(|c| !self.removed_columns.contains(c))
            .collect();
        let reduced = select_columns(data, &keep)?;
        match &self.projection {
            Some(p) => p.apply(&reduced),
            None => Ok(reduced),
        }
    }

    /// The `manifest.txt` of a bundle: `key = value` lines.
    pub fn manifest(&self) -> String {
        let removed: Vec<String> = self.removed_columns.iter().map(|c| c.to_string()).collect();
        let mut out = format!(
            "format = {MANIFEST_FORMAT}\ninput_dim = {}\nremoved_columns = {}\n",
            self.input_dim,
            removed.join(",")
        );
        match &self.projection {
            Some(p) => {
                writeln!(out, "pca = true").unwrap();
                writeln!(out, "output_dim = {}", p.output_dim()).unwrap();
                writeln!(out, "whiten = {}", p.whiten).unwrap();
                out.push_str("means = means.csv\neigenvalues = eigenvalues.csv\neigenvectors = eigenvectors.csv\n");
            }
            None => out.push_str("pca = false\n"),
        }
        out
    }

    /// Writes the bundle directory: manifest plus CSV files for the means,
    /// eigenvalues and eigenvector matrix (one row per input feature).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, body: String| {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(p, e))
        };
        write("manifest.txt", self.manifest())?;
        if let Some(p) = &self.projection {
            write("means.csv", join_line(&p.means))?;
            write("eigenvalues.csv", join_line(&p.eigenvalues))?;
            let mut body = String::new();
            for a in 0..p.input_dim() {
                let row: Vec<f64> = p.eigenvectors.row(a).iter().copied().collect();
                body.push_str(&join_line(&row));
            }
            write("eigenvectors.csv", body)?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| Error::io(p, e))
        };
        let manifest = parse_manifest(&read("manifest.txt")?)?;
        let projection = match manifest.pca {
            None => None,
            Some((k, whiten)) => {
                let d = manifest.input_dim - manifest.removed_columns.len();
                let means = parse_csv(read("means.csv")?.as_bytes(), false, "means.csv")?;
                let eigenvalues = parse_csv(read("eigenvalues.csv")?.as_bytes(), false, "eigenvalues.csv")?;
                let vectors = parse_csv(read("eigenvectors.csv")?.as_bytes(), false, "eigenvectors.csv")?;
                if means.len() != 1 || means.dim() != d || eigenvalues.len() != 1 || eigenvalues.dim() != k
                    || vectors.len() != d || vectors.dim() != k
                {
                    return Err(Error::Data("projection bundle files disagree with the manifest".into()));
                }
                Some(ProjectionRecord {
                    means: means.values().to_vec(),
                    eigenvalues: eigenvalues.values().to_vec(),
                    eigenvectors: DMatrix::from_row_slice(d, k, vectors.values()),
                    whiten,
                })
            }
        };
        Ok(PipelineRecord {
            input_dim: manifest.input_dim,
            removed_columns: manifest.removed_columns,
            projection,
        })
    }
}

fn join_line(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    parts.join(",") + "\n"
}

/// Parsed content of a bundle manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub input_dim: usize,
    pub removed_columns: Vec<usize>,
    /// `(output_dim, whiten)` when a projection is present.
    pub pca: Option<(usize, bool)>,
}

/// Parses and validates a bundle manifest.
pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let mut format = None;
    let mut input_dim = None;
    let mut removed = Vec::new();
    let mut pca = None;
    let mut output_dim = None;
    let mut whiten = false;
    let bad = |line: usize, msg: String| Error::Parse {
        path: "manifest.txt".into(),
        row: line,
        column: 0,
        message: msg,
    };
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(ln + 1, format!("expected key = value, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let uint = |v: &str| v.parse::<usize>().map_err(|_| bad(ln + 1, format!("{key}: not an integer: {v:?}")));
        let boolean = |v: &str| v.parse::<bool>().map_err(|_| bad(ln + 1, format!("{key}: not a boolean: {v:?}")));
        match key {
            "format" => format = Some(value.to_string()),
            "input_dim" => input_dim = Some(uint(value)?),
            "removed_columns" => {
                removed = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(uint)
                    .collect::<Result<_>>()?
            }
            "pca" => pca = Some(boolean(value)?),
            "output_dim" => output_dim = Some(uint(value)?),
            "whiten" => whiten = boolean(value)?,
            "means" | "eigenvalues" | "eigenvectors" => {}
            other => return Err(bad(ln + 1, format!("unknown key {other:?}"))),
        }
    }
    if format.as_deref() != Some(MANIFEST_FORMAT) {
        return Err(bad(0, format!("missing or unsupported format, expected {MANIFEST_FORMAT}")));
    }
    let input_dim = input_dim.ok_or_else(|| bad(0, "missing input_dim".into()))?;
    let mut sorted = removed.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != removed.len() || removed.iter().any(|&c| c >= input_dim) || removed.len() >= input_dim {
        return Err(bad(0, "removed_columns must be distinct, in range, and leave a column".into()));
    }
    let pca = pca.ok_or_else(|| bad(0, "missing pca".into()))?;
    let pca = match (pca, output_dim) {
        (false, _) => None,
        (true, Some(k)) if k >= 1 && k <= input_dim - removed.len() => Some((k, whiten)),
        (true, _) => return Err(bad(0, "pca = true needs output_dim within the reduced dimension".into())),
    };
    Ok(Manifest {
        input_dim,
        removed_columns: removed,
        pca,
    })
}

/// Synthetic mixture data with well-separated means.
///
/// The shared covariance is a random rotation of a diagonal with entries in
/// `[0.5, 1.5]`. Means are pairwise at least `separation * sqrt(λ_max)`
/// apart: scaled basis vectors when `g <= d`, otherwise random points on a
/// sphere whose radius grows until the separation holds.
pub fn synth_gmm(g: usize, d: usize, n: usize, separation: f64, seed: u64) -> Result<(Dataset, GmmParams)> {
    if g == 0 || d == 0 || n == 0 || !(separation > 0.0) {
        return Err(Error::config("synthetic data needs g, d, n >= 1 and separation > 0"));
    }
    let mut rng = split_rng(seed, 0x5eed);
    let spectrum: Vec<f64> = (0..d).map(|_| 0.5 + rng.random::<f64>()).collect();
    let lambda_max = spectrum.iter().copied().fold(0.0, f64::max);
    let gauss = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = gauss.qr().q();
    let cov = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(spectrum)) * q.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    let min_gap = separation * lambda_max.sqrt();

    let means: Vec<Vec<f64>> = if g <= d {
        let scale = min_gap / 2f64.sqrt();
        (0..g)
            .map(|j| (0..d).map(|a| if a == j { scale } else { 0.0 }).collect())
            .collect()
    } else {
        let mut radius = min_gap;
        loop {
            let pts: Vec<Vec<f64>> = (0..g)
                .map(|_| {
                    let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                    v.iter().map(|x| radius * x / norm).collect()
                })
                .collect();
            let ok = (0..g).all(|a| {
                (a + 1..g).all(|b| {
                    pts[a].iter().zip(&pts[b]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() >= min_gap
                })
            });
            if ok {
                break pts;
            }
            radius *= 1.05;
        }
    };
    let truth = GmmParams::new(vec![1.0 / g as f64; g], means.clone(), cov.clone())?;
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::InvalidParams("synthetic covariance not positive definite".into()))?
        .l();
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n {
        let z = rng.random_range(0..g);
        let eps: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for a in 0..d {
            let mut v = means[z][a];
            for b in 0..=a {
                v += chol[(a, b)] * eps[b];
            }
            values.push(v);
        }
    }
    let data = Dataset::new(n, d, values)?.with_note(format!(
        "synthetic mixture g={g} d={d} n={n} separation={separation} seed={seed}"
    ));
    Ok((data, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_small_file() {
        let d = parse_csv("1,2\n3,4".as_bytes(), false, "t").unwrap();
        assert_eq!((d.len(), d.dim()), (2, 2));
        assert_eq!(d.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn ragged_row_is_named() {
        let err = parse_csv("1,2\n3,4\n5\n".as_bytes(), false, "t").unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_cell_is_located() {
        let err = parse_csv("a,b\n1,2\n3,x\n".as_bytes(), true, "t").unwrap_err();
        match err {
            Error::Parse { row, column, .. } => assert_eq!((row, column), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_rejected() {
        assert!(parse_csv("".as_bytes(), false, "t").is_err());
        assert!(parse_csv("a,b\n".as_bytes(), true, "t").is_err());
    }

    #[test]
    fn drops_constant_column() {
        let d = Dataset::from_rows(&[vec![1.0, 5.0, 2.0], vec![2.0, 5.0, 3.0], vec![4.0, 5.0, 0.0]]).unwrap();
        let (out, removed) = drop_constant_columns(&d, 0.0).unwrap();
        assert_eq!(out.dim(), 2);
        assert_eq!(removed, vec![1]);
        let (same, removed) = drop_constant_columns(&out, 0.0).unwrap();
        assert!(removed.is_empty());
        assert_eq!(same.values(), out.values());
    }

    #[test]
    fn all_constant_rejected() {
        let d = Dataset::from_rows(&[vec![1.0, 5.0], vec![1.0, 5.0]]).unwrap();
        assert!(drop_constant_columns(&d, 0.0).is_err());
    }

    #[test]
    fn pca_target_too_large() {
        let d = Dataset::from_rows(&[vec![1.0, 5.0], vec![2.0, 3.0]]).unwrap();
        assert!(pca_project(&d, 3, false).is_err());
        assert!(pca_project(&d, 0, false).is_err());
    }

    #[test]
    fn manifest_roundtrip_and_rejections() {
        let rec = PipelineRecord {
            input_dim: 5,
            removed_columns: vec![0, 3],
            projection: None,
        };
        let m = parse_manifest(&rec.manifest()).unwrap();
        assert_eq!(m.removed_columns, vec![0, 3]);
        assert_eq!(m.pca, None);
        assert!(parse_manifest("format = nope\ninput_dim = 2\n").is_err());
        assert!(parse_manifest(&format!("format = {MANIFEST_FORMAT}\ninput_dim = 2\nremoved_columns = 0,1\n")).is_err());
        assert!(parse_manifest(&format!("format = {MANIFEST_FORMAT}\ninput_dim = 2\npca = true\noutput_dim = 3\n")).is_err());
        assert!(parse_manifest(&format!("format = {MANIFEST_FORMAT}\ninput_dim = 2\nbogus\n")).is_err());
    }

    #[test]
    fn synth_is_deterministic() {
        let (a, _) = synth_gmm(3, 4, 50, 3.0, 9).unwrap();
        let (b, _) = synth_gmm(3, 4, 50, 3.0, 9).unwrap();
        let (c, _) = synth_gmm(3, 4, 50, 3.0, 10).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn synth_separation_holds_on_sphere() {
        let (_, truth) = synth_gmm(6, 2, 10, 4.0, 1).unwrap();
        let lmax = SymmetricEigen::new(truth.covariance().clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(0.0, f64::max);
        for a in 0..6 {
            for b in a + 1..6 {
                let dist: f64 = truth.mean(a).iter().zip(truth.mean(b)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                assert!(dist >= 4.0 * lmax.sqrt() - 1e-9);
            }
        }
    }
}
