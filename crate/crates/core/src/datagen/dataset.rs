use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::domain::{case_domain, CaseId, Role, DAMPING_RANGE, STIFFNESS_RANGE};
use super::lhs::lhs_sample;
use crate::binio;
use crate::dynamics::{simulate_duffing, DuffingParams, SimGrid, SweepSpec};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "data.bin";
const FORMAT_VERSION: u32 = 1;

/// Cubic stiffness used in every Duffing case.
pub const DUFFING_CUBIC: f64 = 1e4;

/// One `(f, μ, y)` record. `response` holds `c·r` values, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTriple {
    pub force: Vec<f64>,
    pub params: Vec<f64>,
    pub response: Vec<f64>,
}

/// Affine map of each parameter onto `[0, 1]` plus per-channel response
/// scales (`y_normalized = y / scale`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mu_min: Vec<f64>,
    pub mu_max: Vec<f64>,
    pub response_scale: Vec<f64>,
}

impl Normalization {
    pub fn new(bounds: &[(f64, f64)], response_scale: Vec<f64>) -> Result<Self> {
        if bounds.iter().any(|&(lo, hi)| lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less)) || response_scale.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument("normalization must be invertible".into()));
        }
        Ok(Self {
            mu_min: bounds.iter().map(|b| b.0).collect(),
            mu_max: bounds.iter().map(|b| b.1).collect(),
            response_scale,
        })
    }

    pub fn param_dim(&self) -> usize {
        self.mu_min.len()
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.mu_min.iter().copied().zip(self.mu_max.iter().copied()).collect()
    }

    pub fn normalize_params(&self, mu: &[f64]) -> Vec<f64> {
        mu.iter()
            .zip(self.mu_min.iter().zip(&self.mu_max))
            .map(|(&x, (&lo, &hi))| (x - lo) / (hi - lo))
            .collect()
    }

    pub fn denormalize_params(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mu_min.iter().zip(&self.mu_max))
            .map(|(&u, (&lo, &hi))| lo + u * (hi - lo))
            .collect()
    }

    /// `response` is channel-major with `response.len() / c` points per channel.
    pub fn normalize_response(&self, response: &[f64]) -> Vec<f64> {
        let per = response.len() / self.response_scale.len();
        response
            .iter()
            .enumerate()
            .map(|(i, &y)| y / self.response_scale[i / per])
            .collect()
    }

    pub fn denormalize_response(&self, response: &[f64]) -> Vec<f64> {
        let per = response.len() / self.response_scale.len();
        response
            .iter()
            .enumerate()
            .map(|(i, &y)| y * self.response_scale[i / per])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub case_id: CaseId,
    pub role: Role,
    pub n: usize,
    pub r: usize,
    pub c: usize,
    pub param_dim: usize,
    pub seed: u64,
    pub sweep: SweepSpec,
    pub grid: SimGrid,
    pub cubic: f64,
    pub normalization: Normalization,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub samples: Vec<SampleTriple>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    #[serde(flatten)]
    meta: DatasetMeta,
    crc64: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn resolution(&self) -> usize {
        self.meta.r
    }

    pub fn channels(&self) -> usize {
        self.meta.c
    }

    /// `n x r` excitation forces.
    pub fn forces(&self) -> Array2<f64> {
        self.stack(|s| &s.force, self.meta.r)
    }

    /// `n x c·r` responses.
    pub fn responses(&self) -> Array2<f64> {
        self.stack(|s| &s.response, self.meta.r * self.meta.c)
    }

    /// `n x d` physical parameters.
    pub fn params(&self) -> Array2<f64> {
        self.stack(|s| &s.params, self.meta.param_dim)
    }

    /// `n x d` parameters mapped to `[0, 1]`.
    pub fn params_normalized(&self) -> Array2<f64> {
        let norm = &self.meta.normalization;
        let mut out = Array2::zeros((self.len(), self.meta.param_dim));
        for (i, s) in self.samples.iter().enumerate() {
            for (j, v) in norm.normalize_params(&s.params).into_iter().enumerate() {
                out[[i, j]] = v;
            }
        }
        out
    }

    fn stack(&self, pick: impl Fn(&SampleTriple) -> &Vec<f64>, width: usize) -> Array2<f64> {
        let mut out = Array2::zeros((self.len(), width));
        for (i, s) in self.samples.iter().enumerate() {
            out.row_mut(i).assign(&ndarray::ArrayView1::from(pick(s).as_slice()));
        }
        out
    }

    /// Copy holding only the listed samples.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let samples: Vec<SampleTriple> = indices.iter().map(|&i| self.samples[i].clone()).collect();
        let mut meta = self.meta.clone();
        meta.n = samples.len();
        Dataset { meta, samples }
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.meta;
        if m.n != self.samples.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset sample count".into(),
                expected: m.n,
                actual: self.samples.len(),
            });
        }
        if m.normalization.param_dim() != m.param_dim || m.normalization.response_scale.len() != m.c {
            return Err(Error::InvalidArgument("normalization does not match dataset shape".into()));
        }
        let bounds = m.normalization.bounds();
        for (i, s) in self.samples.iter().enumerate() {
            if s.force.len() != m.r || s.params.len() != m.param_dim || s.response.len() != m.c * m.r {
                return Err(Error::InvalidArgument(format!("sample {i} has inconsistent lengths")));
            }
            let finite = s.force.iter().chain(&s.params).chain(&s.response).all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidArgument(format!("sample {i} holds non-finite values")));
            }
            let inside = s.params.iter().zip(&bounds).all(|(&x, &(lo, hi))| (lo..=hi).contains(&x));
            if !inside {
                return Err(Error::InvalidArgument(format!("sample {i} parameters {:?} leave the global bounds", s.params)));
            }
        }
        Ok(())
    }
}

/// Duffing normalization: parameters over the full case bounds, unscaled
/// response.
pub fn duffing_normalization() -> Normalization {
    Normalization::new(&[STIFFNESS_RANGE, DAMPING_RANGE], vec![1.0]).expect("constant bounds are valid")
}

/// Simulates `n` Duffing samples with (stiffness, damping) drawn by Latin
/// hypercube sampling over the case's train or test region.
pub fn generate_dataset(
    case: CaseId,
    role: Role,
    n: usize,
    sweep: &SweepSpec,
    grid: &SimGrid,
    cubic: f64,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("dataset needs n >= 1 samples".into()));
    }
    sweep.validate()?;
    grid.check_sweep(sweep)?;
    let domain = case_domain(case, role)?;
    let points = lhs_sample(n, &domain, seed)?;
    let force: Vec<f64> = grid.times().iter().map(|&t| sweep_at(sweep, t)).collect();

    let mut samples = Vec::with_capacity(n);
    for mu in points {
        let p = DuffingParams::new(mu[0], mu[1], cubic)?;
        let response = simulate_duffing(&p, sweep, grid).map_err(|e| match e {
            Error::SimulationDiverged { time, detail } => Error::SimulationDiverged {
                time,
                detail: format!("{detail}; parameters {mu:?}"),
            },
            other => other,
        })?;
        samples.push(SampleTriple {
            force: force.clone(),
            params: mu,
            response: response.acceleration,
        });
    }
    let meta = DatasetMeta {
        case_id: case,
        role,
        n,
        r: grid.samples,
        c: 1,
        param_dim: domain.dim(),
        seed,
        sweep: *sweep,
        grid: *grid,
        cubic,
        normalization: duffing_normalization(),
    };
    let ds = Dataset { meta, samples };
    ds.validate()?;
    Ok(ds)
}

fn sweep_at(sweep: &SweepSpec, t: f64) -> f64 {
    crate::dynamics::sweep_force(sweep, t).expect("grid instants lie inside the sweep window")
}

/// Writes `manifest.json` and `data.bin` into `dir`.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    binio::ensure_dir(dir)?;
    let mut flat = Vec::with_capacity(ds.len() * (ds.meta.r * (1 + ds.meta.c) + ds.meta.param_dim));
    for s in &ds.samples {
        flat.extend_from_slice(&s.force);
        flat.extend_from_slice(&s.params);
        flat.extend_from_slice(&s.response);
    }
    let bytes = binio::encode_f64s(&flat);
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        meta: ds.meta.clone(),
        crc64: binio::crc64(&bytes),
    };
    binio::write_file(&dir.join(DATA_FILE), &bytes)?;
    binio::write_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = binio::read_json(&path)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::MalformedManifest {
            path,
            reason: format!("unsupported format version {}", manifest.format_version),
        });
    }
    let m = manifest.meta;
    let per_sample = m.r + m.param_dim + m.c * m.r;
    let flat = binio::read_checked(&dir.join(DATA_FILE), m.n * per_sample, manifest.crc64)?;
    let samples = flat
        .chunks_exact(per_sample)
        .map(|chunk| SampleTriple {
            force: chunk[..m.r].to_vec(),
            params: chunk[m.r..m.r + m.param_dim].to_vec(),
            response: chunk[m.r + m.param_dim..].to_vec(),
        })
        .collect();
    let ds = Dataset { meta: m, samples };
    ds.validate().map_err(|e| Error::MalformedManifest {
        path,
        reason: e.to_string(),
    })?;
    Ok(ds)
}
