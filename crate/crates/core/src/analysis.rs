//! Latent-feature PCA of the parameter net and zero-shot evaluation on
//! refined time grids.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, Axis};

use crate::datagen::Dataset;
use crate::diffcore::Matrix;
use crate::dynamics::{simulate_duffing, DuffingParams};
use crate::error::{Error, Result};
use crate::forward::{nrmse, prepare};
use crate::models::{Architecture, ForwardModel};

/// Principal components of a feature set (one sample per row).
#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    /// Explained-variance ratio of every component, nonincreasing.
    pub explained_ratio: Vec<f64>,
    /// First principal direction; its first nonzero entry is positive.
    pub loading: Vec<f64>,
    /// Projection of each centered row onto `loading`.
    pub scores: Vec<f64>,
}

pub fn pca(features: &Matrix) -> Result<Pca> {
    let (n, p) = features.dim();
    if n < 2 || p == 0 {
        return Err(Error::InvalidArgument("PCA needs at least two samples and one feature".into()));
    }
    let mean = features.mean_axis(Axis(0)).expect("non-empty");
    let centered = features - &mean.insert_axis(Axis(0));
    let cov = centered.t().dot(&centered) / (n - 1) as f64;
    let eig = SymmetricEigen::new(DMatrix::from_fn(p, p, |i, j| cov[[i, j]]));

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    let scale = values.first().copied().unwrap_or(0.0);
    if total <= 0.0 || scale <= f64::EPSILON * cov.iter().fold(0.0f64, |m, v| m.max(v.abs())) {
        return Ok(Pca {
            explained_ratio: vec![0.0; p],
            loading: vec![0.0; p],
            scores: vec![0.0; n],
        });
    }
    let explained_ratio = values.iter().map(|v| v / total).collect();
    let mut loading: Vec<f64> = eig.eigenvectors.column(order[0]).iter().copied().collect();
    let biggest = loading.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(first) = loading.iter().find(|v| v.abs() > 1e-12 * biggest) {
        if *first < 0.0 {
            loading.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let dir = ndarray::Array1::from(loading.clone());
    let scores = centered.dot(&dir).to_vec();
    Ok(Pca {
        explained_ratio,
        loading,
        scores,
    })
}

/// First-principal-component map of parameter-net features over a uniform
/// parameter grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaMap {
    /// Physical parameter values, one row per grid point.
    pub points: Matrix,
    pub scores: Vec<f64>,
    pub explained_ratio: Vec<f64>,
}

/// Evaluates the parameter net on a `grid_n^d` lattice spanning the
/// normalization bounds and runs [`pca`] on the features.
pub fn latent_pca(model: &ForwardModel, bounds: &[(f64, f64)], grid_n: usize) -> Result<PcaMap> {
    let d = model.spec().param_dim;
    if grid_n < 2 {
        return Err(Error::InvalidArgument("latent PCA needs grid_n >= 2".into()));
    }
    if bounds.len() != d {
        return Err(Error::DimensionMismatch {
            context: "PCA bounds".into(),
            expected: d,
            actual: bounds.len(),
        });
    }
    let total = grid_n.checked_pow(d as u32).filter(|&t| t <= 1 << 20).ok_or_else(|| {
        Error::InvalidArgument(format!("a {grid_n}^{d} grid is too large for latent PCA"))
    })?;
    let step = 1.0 / (grid_n - 1) as f64;
    let mut unit = Array2::zeros((total, d));
    for (i, mut row) in unit.rows_mut().into_iter().enumerate() {
        let mut idx = i;
        for j in 0..d {
            row[j] = (idx % grid_n) as f64 * step;
            idx /= grid_n;
        }
    }
    let features = model.param_features(unit.view())?;
    let result = pca(&features)?;
    let points = Array2::from_shape_fn((total, d), |(i, j)| bounds[j].0 + unit[[i, j]] * (bounds[j].1 - bounds[j].0));
    Ok(PcaMap {
        points,
        scores: result.scores,
        explained_ratio: result.explained_ratio,
    })
}

impl PcaMap {
    /// `mu1,...,mud,pc1_score` per grid point.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let d = self.points.ncols();
        let header: Vec<String> = (1..=d).map(|j| format!("mu{j}")).chain(["pc1_score".to_string()]).collect();
        let mut out = header.join(",") + "\n";
        for (row, score) in self.points.rows().into_iter().zip(&self.scores) {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).chain([score.to_string()]).collect();
            out.push_str(&(vals.join(",") + "\n"));
        }
        write_text(path, &out)
    }

    pub fn write_variance_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("component,explained_ratio\n");
        for (i, r) in self.explained_ratio.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, r));
        }
        write_text(path, &out)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Predictions and re-simulated truth on the dataset grid refined by
/// `factor`, in normalized response units. The branch input stays the
/// stored training-resolution force.
pub fn superres_predictions(model: &ForwardModel, ds: &Dataset, factor: usize) -> Result<(Matrix, Matrix)> {
    if model.arch() == Architecture::ParametricNd {
        return Err(Error::Unsupported(
            "the nonlinear decoder consumes a fixed-length vector and cannot be queried on a refined grid".into(),
        ));
    }
    if !model.resolution_invariant() {
        return Err(Error::Unsupported(format!("{} has a fixed output resolution", model.arch())));
    }
    if ds.meta.c != 1 || ds.meta.param_dim != 2 {
        return Err(Error::Unsupported("super-resolution truth is only simulated for Duffing datasets".into()));
    }
    let grid = ds.meta.grid.refined(factor)?;
    let times = grid.times();
    let prep = prepare(ds);
    let pred = model.predict_at(prep.forces.view(), prep.params.view(), &times)?;
    let norm = &ds.meta.normalization;
    let mut truth = Array2::zeros((ds.len(), times.len()));
    for (i, s) in ds.samples.iter().enumerate() {
        let p = DuffingParams::new(s.params[0], s.params[1], ds.meta.cubic)?;
        let sim = simulate_duffing(&p, &ds.meta.sweep, &grid)?;
        let scaled = norm.normalize_response(&sim.acceleration);
        truth.row_mut(i).assign(&ndarray::ArrayView1::from(&scaled));
    }
    Ok((pred, truth))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuperResRow {
    pub factor: usize,
    pub resolution: usize,
    pub nrmse: f64,
}

pub fn superres_eval(model: &ForwardModel, ds: &Dataset, factors: &[usize]) -> Result<Vec<SuperResRow>> {
    factors
        .iter()
        .map(|&factor| {
            let (pred, truth) = superres_predictions(model, ds, factor)?;
            Ok(SuperResRow {
                factor,
                resolution: truth.ncols(),
                nrmse: nrmse(pred.view(), truth.view())?,
            })
        })
        .collect()
}

pub fn write_superres_csv(path: &Path, rows: &[SuperResRow]) -> Result<()> {
    let mut out = String::from("factor,resolution,nrmse\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.factor, r.resolution, r.nrmse));
    }
    write_text(path, &out)
}
