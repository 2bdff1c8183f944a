//! Parameter estimation on a frozen surrogate: multi-start gradient descent
//! over the parameter input, then a learned additive correction.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Normalization;
use crate::diffcore::checkpoint::{self, take_network};
use crate::diffcore::{Activation, DenseNetwork, Matrix, OptimizerKind, OptimizerState, Tape, Var};
use crate::error::{Error, Result};
use crate::forward::{nrmse, record_row_nrmse};
use crate::models::{select_rows, FrozenSurrogate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub epochs: usize,
    pub restarts: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            epochs: 5000,
            restarts: 5,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.restarts == 0 {
            return Err(Error::InvalidConfig("epochs and restarts must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!("invalid learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Final state of one restart, in normalized coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct RestartOutcome {
    pub mu: Vec<f64>,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleInit {
    /// `None` for restarts discarded after a non-finite loss.
    pub restarts: Vec<Option<RestartOutcome>>,
    pub best: usize,
}

impl SampleInit {
    pub fn best(&self) -> &RestartOutcome {
        self.restarts[self.best].as_ref().expect("best restart is finite")
    }

    pub fn finite(&self) -> impl Iterator<Item = &RestartOutcome> {
        self.restarts.iter().flatten()
    }
}

/// Per-row forward loss and its gradient with respect to `mu`
/// (normalized coordinates). Rows are independent.
pub fn loss_gradients(surrogate: &FrozenSurrogate<'_>, rows: &[usize], mu: &Matrix, targets: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let mut tape = Tape::new();
    let m = tape.variable(mu.clone());
    let pred = surrogate.record(&mut tape, rows, m);
    let per_row = record_row_nrmse(&mut tape, pred, &select_rows(targets, rows))?;
    let losses = tape.value(per_row).column(0).to_vec();
    let total = tape.sum(per_row);
    let grads = tape.backward(total)?.wrt(m);
    Ok((losses, grads))
}

/// Multi-start projected Adam on the surrogate's forward loss. `targets`
/// holds one normalized response per surrogate row; initial guesses are
/// uniform over the normalized box `[0, 1]^d`.
pub fn gradient_init(surrogate: &FrozenSurrogate<'_>, targets: &Matrix, cfg: &InitConfig) -> Result<Vec<SampleInit>> {
    cfg.validate()?;
    let d = surrogate.model().spec().param_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts = Array2::from_shape_fn((surrogate.len() * cfg.restarts, d), |_| rng.random::<f64>());
    gradient_init_from(surrogate, targets, starts, cfg)
}

/// As [`gradient_init`] with explicit starting points: row `i·K + k` is
/// restart `k` of sample `i` for `K = cfg.restarts`.
pub fn gradient_init_from(surrogate: &FrozenSurrogate<'_>, targets: &Matrix, starts: Matrix, cfg: &InitConfig) -> Result<Vec<SampleInit>> {
    cfg.validate()?;
    let (n, k) = (surrogate.len(), cfg.restarts);
    let d = surrogate.model().spec().param_dim;
    if targets.nrows() != n || starts.dim() != (n * k, d) {
        return Err(Error::DimensionMismatch {
            context: "gradient initialization inputs".into(),
            expected: n * k * d,
            actual: starts.len(),
        });
    }
    let rows: Vec<usize> = (0..n * k).map(|r| r / k).collect();
    let mut mu = starts.mapv(|v| v.clamp(0.0, 1.0));
    let mut best_loss = vec![f64::INFINITY; n * k];
    let mut best_mu = mu.clone();
    let mut alive = vec![true; n * k];
    let mut opt = OptimizerState::new(OptimizerKind::adam(), cfg.learning_rate, n * k * d)?;

    for epoch in 0..=cfg.epochs {
        let (losses, mut grads) = loss_gradients(surrogate, &rows, &mu, targets)?;
        for (r, &loss) in losses.iter().enumerate() {
            let finite = loss.is_finite() && grads.row(r).iter().all(|g| g.is_finite());
            if !finite {
                alive[r] = false;
            }
            if !alive[r] {
                grads.row_mut(r).fill(0.0);
                continue;
            }
            if loss < best_loss[r] {
                best_loss[r] = loss;
                best_mu.row_mut(r).assign(&mu.row(r));
            }
        }
        if epoch == cfg.epochs {
            break;
        }
        let flat = mu.as_slice_mut().expect("owned standard layout");
        opt.step(flat, grads.as_slice().expect("owned standard layout"))?;
        mu.mapv_inplace(|v| v.clamp(0.0, 1.0));
    }

    (0..n)
        .map(|i| {
            let restarts: Vec<Option<RestartOutcome>> = (0..k)
                .map(|j| {
                    let r = i * k + j;
                    (alive[r] && best_loss[r].is_finite()).then(|| RestartOutcome {
                        mu: best_mu.row(r).to_vec(),
                        loss: best_loss[r],
                    })
                })
                .collect();
            let best = restarts
                .iter()
                .enumerate()
                .filter_map(|(j, o)| o.as_ref().map(|o| (j, o.loss)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(j, _)| j)
                .ok_or(Error::AllRestartsFailed { sample: i })?;
            Ok(SampleInit { restarts, best })
        })
        .collect()
}

/// Exhaustive search over a `grid_n^d` lattice of the normalized box
/// (spacing `1 / (grid_n − 1)`); returns the lattice point with the lowest
/// forward loss for surrogate row `row`.
pub fn grid_search(surrogate: &FrozenSurrogate<'_>, row: usize, target: &[f64], grid_n: usize) -> Result<(Vec<f64>, f64)> {
    let d = surrogate.model().spec().param_dim;
    if grid_n < 2 {
        return Err(Error::InvalidArgument("grid search needs at least 2 points per dimension".into()));
    }
    let total = grid_n.checked_pow(d as u32).ok_or_else(|| Error::InvalidArgument("grid too large".into()))?;
    let truth = Array2::from_shape_vec((1, target.len()), target.to_vec()).expect("row");
    let step = 1.0 / (grid_n - 1) as f64;
    let mut best = (Vec::new(), f64::INFINITY);
    const CHUNK: usize = 2048;
    for start in (0..total).step_by(CHUNK) {
        let len = CHUNK.min(total - start);
        let mut mu = Array2::zeros((len, d));
        for (i, mut row_mu) in mu.rows_mut().into_iter().enumerate() {
            let mut idx = start + i;
            for j in 0..d {
                row_mu[j] = (idx % grid_n) as f64 * step;
                idx /= grid_n;
            }
        }
        let pred = surrogate.predict(&vec![row; len], mu.view())?;
        for (i, p) in pred.axis_iter(Axis(0)).enumerate() {
            let loss = nrmse(p.insert_axis(Axis(0)), truth.view())?;
            if loss < best.1 {
                best = (mu.row(i).to_vec(), loss);
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Number of refinement iterations `J`.
    pub iterations: usize,
    pub hidden: Vec<usize>,
    /// Rescale the loss gradient fed to the network to at most unit norm.
    pub clip_gradient: bool,
    pub seed: u64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 64,
            learning_rate: 1e-3,
            iterations: 1,
            hidden: vec![64, 64],
            clip_gradient: true,
            seed: 0,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.iterations == 0 {
            return Err(Error::InvalidConfig("epochs, batch_size and iterations must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!("invalid learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Network mapping `(μ, ∇_μ L)` to an additive update of `μ`.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinementNet {
    pub net: DenseNetwork,
    pub iterations: usize,
    pub clip_gradient: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RefineMeta {
    iterations: usize,
    clip_gradient: bool,
    normalization: Normalization,
}

impl RefinementNet {
    /// Standard initialization with a zeroed output layer, so the untrained
    /// network leaves every estimate where it is.
    pub fn new(param_dim: usize, cfg: &RefineConfig) -> Result<Self> {
        let dims: Vec<usize> = std::iter::once(2 * param_dim)
            .chain(cfg.hidden.iter().copied())
            .chain(std::iter::once(param_dim))
            .collect();
        let mut net = DenseNetwork::init(&dims, Activation::Relu, cfg.seed)?;
        net.zero_output_layer();
        Ok(Self {
            net,
            iterations: cfg.iterations,
            clip_gradient: cfg.clip_gradient,
        })
    }

    pub fn param_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn save(&self, dir: &Path, normalization: &Normalization) -> Result<()> {
        let meta = RefineMeta {
            iterations: self.iterations,
            clip_gradient: self.clip_gradient,
            normalization: normalization.clone(),
        };
        checkpoint::save(dir, &meta, &[("refine", &self.net)])
    }

    pub fn load(dir: &Path) -> Result<(Self, Normalization)> {
        let (meta, mut nets): (RefineMeta, _) = checkpoint::load(dir)?;
        let net = take_network(&mut nets, "refine")?;
        let d = net.output_dim();
        if net.input_dim() != 2 * d || meta.iterations == 0 {
            return Err(Error::InvalidConfig("refinement network must map 2·d inputs to d outputs".into()));
        }
        Ok((
            Self {
                net,
                iterations: meta.iterations,
                clip_gradient: meta.clip_gradient,
            },
            meta.normalization,
        ))
    }

    fn network_gradient_input(&self, mut grads: Matrix) -> Matrix {
        if self.clip_gradient {
            for mut row in grads.rows_mut() {
                let norm = row.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > 1.0 {
                    row.mapv_inplace(|g| g / norm);
                }
            }
        }
        grads
    }

    /// Records `J` refinement iterations starting from the constant `start`.
    /// The loss gradient is recomputed at each iterate and enters the
    /// network as a constant.
    fn record(
        &self,
        tape: &mut Tape,
        bound: &crate::diffcore::BoundNetwork,
        surrogate: &FrozenSurrogate<'_>,
        rows: &[usize],
        start: &Matrix,
        targets: &Matrix,
    ) -> Result<Var> {
        let mut mu = tape.constant(start.clone());
        for _ in 0..self.iterations {
            let (_, g) = loss_gradients(surrogate, rows, tape.value(mu), targets)?;
            let g = tape.constant(self.network_gradient_input(g));
            let input = tape.concat_cols(mu, g);
            let delta = bound.forward(tape, input);
            let moved = tape.add(mu, delta);
            mu = tape.clamp(moved, 0.0, 1.0);
        }
        Ok(mu)
    }

    /// Refined normalized estimates for `starts` (one row per surrogate row
    /// in `rows`).
    pub fn refine(&self, surrogate: &FrozenSurrogate<'_>, rows: &[usize], starts: &Matrix, targets: &Matrix) -> Result<Matrix> {
        let mut mu = starts.clone();
        for _ in 0..self.iterations {
            let (_, g) = loss_gradients(surrogate, rows, &mu, targets)?;
            let input = ndarray::concatenate(Axis(1), &[mu.view(), self.network_gradient_input(g).view()])
                .expect("matching rows");
            let delta = self.net.forward_batch(input.view())?;
            mu = (mu + delta).mapv(|v| v.clamp(0.0, 1.0));
        }
        Ok(mu)
    }
}

/// Training examples for the refinement network: surrogate row, starting
/// estimate (normalized) and true parameters (physical).
pub struct RefineExamples {
    pub rows: Vec<usize>,
    pub starts: Matrix,
    pub truth: Matrix,
}

impl RefineExamples {
    /// One example per sample, starting from its best restart. This is
    /// what the refinement net is trained on.
    pub fn from_best(inits: &[SampleInit], truth_physical: &Matrix) -> Self {
        Self::collect(inits, truth_physical, |s| vec![s.best()])
    }

    /// One example per finite restart of every sample.
    pub fn every_restart(inits: &[SampleInit], truth_physical: &Matrix) -> Self {
        Self::collect(inits, truth_physical, |s| s.finite().collect())
    }

    fn collect(
        inits: &[SampleInit],
        truth_physical: &Matrix,
        pick: impl Fn(&SampleInit) -> Vec<&RestartOutcome>,
    ) -> Self {
        let d = truth_physical.ncols();
        let mut rows = Vec::new();
        let mut starts = Vec::new();
        let mut truth = Vec::new();
        for (i, s) in inits.iter().enumerate() {
            for o in pick(s) {
                rows.push(i);
                starts.extend_from_slice(&o.mu);
                truth.extend(truth_physical.row(i).iter());
            }
        }
        let n = rows.len();
        Self {
            rows,
            starts: Array2::from_shape_vec((n, d), starts).expect("d values per example"),
            truth: Array2::from_shape_vec((n, d), truth).expect("d values per example"),
        }
    }
}

/// Records `mean_d NRMSE(μ̂_{·d}, μ_{·d})` in physical units plus the mean
/// per-row forward NRMSE at `mu`.
fn record_combined_loss(
    tape: &mut Tape,
    surrogate: &FrozenSurrogate<'_>,
    rows: &[usize],
    mu: Var,
    truth: &Matrix,
    targets: &Matrix,
    norm: &Normalization,
) -> Result<Var> {
    let d = truth.ncols();
    let span: Vec<f64> = norm.mu_max.iter().zip(&norm.mu_min).map(|(hi, lo)| hi - lo).collect();
    // Physical-unit residual: (μ̂_norm − μ_norm) ⊙ span.
    let truth_norm = Array2::from_shape_fn(truth.dim(), |(i, j)| (truth[[i, j]] - norm.mu_min[j]) / span[j]);
    let t = tape.constant(truth_norm);
    let diff = tape.sub(mu, t);
    let span_row = tape.constant(Array2::from_shape_vec((1, d), span.clone()).expect("row"));
    let scaled = tape.mul_row(diff, span_row);
    let sq = tape.square(scaled);
    let col = tape.col_sum(sq);
    let inv_den: Vec<f64> = (0..d).map(|j| 1.0 / truth.column(j).iter().map(|v| v * v).sum::<f64>()).collect();
    let inv = tape.constant(Array2::from_shape_vec((1, d), inv_den).expect("row"));
    let ratio = tape.mul_row(col, inv);
    let per_dim = tape.sqrt(ratio);
    let inverse = tape.mean(per_dim);

    let pred = surrogate.record(tape, rows, mu);
    let fwd_rows = record_row_nrmse(tape, pred, &select_rows(targets, rows))?;
    let forward = tape.mean(fwd_rows);
    Ok(tape.add(inverse, forward))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineHistory {
    /// Combined loss of the starting estimates (no update).
    pub baseline_loss: f64,
    pub epoch_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_loss: f64,
}

/// Combined loss of `net` over all examples.
pub fn refinement_loss(
    net: &RefinementNet,
    surrogate: &FrozenSurrogate<'_>,
    ex: &RefineExamples,
    targets: &Matrix,
    norm: &Normalization,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = net.net.bind(&mut tape, false);
    let mu = net.record(&mut tape, &bound, surrogate, &ex.rows, &ex.starts, targets)?;
    let loss = record_combined_loss(&mut tape, surrogate, &ex.rows, mu, &ex.truth, targets, norm)?;
    Ok(tape.scalar(loss))
}

/// Trains `net` in place and leaves the weights with the lowest combined
/// loss over all examples.
pub fn train_refinement(
    net: &mut RefinementNet,
    surrogate: &FrozenSurrogate<'_>,
    ex: &RefineExamples,
    targets: &Matrix,
    norm: &Normalization,
    cfg: &RefineConfig,
) -> Result<RefineHistory> {
    cfg.validate()?;
    if ex.rows.is_empty() {
        return Err(Error::InvalidArgument("no refinement examples".into()));
    }
    let weights_before = surrogate.model().clone();
    let mut opt = OptimizerState::new(OptimizerKind::adam(), cfg.learning_rate, net.net.param_count())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..ex.rows.len()).collect();
    let baseline_loss = refinement_loss(net, surrogate, ex, targets, norm)?;
    let mut best = (0usize, baseline_loss, net.net.clone());
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let rows: Vec<usize> = idx.iter().map(|&i| ex.rows[i]).collect();
            let starts = select_rows(&ex.starts, idx);
            let truth = select_rows(&ex.truth, idx);
            let mut tape = Tape::new();
            let bound = net.net.bind(&mut tape, true);
            let mu = net.record(&mut tape, &bound, surrogate, &rows, &starts, targets)?;
            let loss = record_combined_loss(&mut tape, surrogate, &rows, mu, &truth, targets, norm)?;
            if !tape.scalar(loss).is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            let grads = tape.backward(loss)?;
            opt.step(net.net.weights_mut(), &bound.gradient(&grads))?;
        }
        let loss = refinement_loss(net, surrogate, ex, targets, norm)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        epoch_losses.push(loss);
        if loss < best.1 {
            best = (epoch, loss, net.net.clone());
        }
    }
    debug_assert_eq!(&weights_before, surrogate.model());
    let (best_epoch, best_loss, weights) = best;
    net.net = weights;
    Ok(RefineHistory {
        baseline_loss,
        epoch_losses,
        best_epoch,
        best_loss,
    })
}

/// Estimates for one sample in physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimationResult {
    pub sample: usize,
    pub truth: Option<Vec<f64>>,
    /// Best-restart gradient-initialization estimate.
    pub initial: Vec<f64>,
    /// Refined best restart; the final estimate.
    pub refined: Vec<f64>,
    pub initial_restarts: Vec<Vec<f64>>,
    pub refined_restarts: Vec<Vec<f64>>,
    pub initial_mean: Vec<f64>,
    pub initial_std: Vec<f64>,
    pub refined_mean: Vec<f64>,
    pub refined_std: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

fn mean_std(points: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = points[0].len();
    let n = points.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect();
    let std = (0..d)
        .map(|j| (points.iter().map(|p| (p[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    (mean, std)
}

/// Refines every finite restart of each sample with `net`.
pub fn estimate_from_init(
    surrogate: &FrozenSurrogate<'_>,
    targets: &Matrix,
    inits: &[SampleInit],
    net: &RefinementNet,
    norm: &Normalization,
    truth: Option<&Matrix>,
) -> Result<Vec<EstimationResult>> {
    let placeholder = Array2::zeros((inits.len(), surrogate.model().spec().param_dim));
    let ex = RefineExamples::every_restart(inits, truth.unwrap_or(&placeholder));
    let refined = net.refine(surrogate, &ex.rows, &ex.starts, targets)?;
    let (final_losses, _) = loss_gradients(surrogate, &ex.rows, &refined, targets)?;

    let mut cursor = 0;
    let mut out = Vec::with_capacity(inits.len());
    for (i, s) in inits.iter().enumerate() {
        let mut initial_restarts = Vec::new();
        let mut refined_restarts = Vec::new();
        let mut best_refined = (Vec::new(), f64::NAN);
        for (j, o) in s.restarts.iter().enumerate() {
            let Some(o) = o else { continue };
            initial_restarts.push(norm.denormalize_params(&o.mu));
            let r = norm.denormalize_params(refined.row(cursor).as_slice().expect("contiguous"));
            if j == s.best {
                best_refined = (r.clone(), final_losses[cursor]);
            }
            refined_restarts.push(r);
            cursor += 1;
        }
        let (initial_mean, initial_std) = mean_std(&initial_restarts);
        let (refined_mean, refined_std) = mean_std(&refined_restarts);
        out.push(EstimationResult {
            sample: i,
            truth: truth.map(|t| t.row(i).to_vec()),
            initial: norm.denormalize_params(&s.best().mu),
            refined: best_refined.0,
            initial_restarts,
            refined_restarts,
            initial_mean,
            initial_std,
            refined_mean,
            refined_std,
            initial_loss: s.best().loss,
            final_loss: best_refined.1,
        });
    }
    Ok(out)
}

/// Gradient initialization followed by refinement of every restart.
pub fn estimate(
    surrogate: &FrozenSurrogate<'_>,
    targets: &Matrix,
    net: &RefinementNet,
    norm: &Normalization,
    cfg: &InitConfig,
    truth: Option<&Matrix>,
) -> Result<Vec<EstimationResult>> {
    let inits = gradient_init(surrogate, targets, cfg)?;
    estimate_from_init(surrogate, targets, &inits, net, norm, truth)
}

/// Pooled NRMSE of each parameter dimension across samples.
pub fn parameter_nrmse(estimates: &Matrix, truth: &Matrix) -> Result<Vec<f64>> {
    if estimates.dim() != truth.dim() {
        return Err(Error::DimensionMismatch {
            context: "parameter estimates".into(),
            expected: truth.len(),
            actual: estimates.len(),
        });
    }
    (0..truth.ncols())
        .map(|j| {
            let e = estimates.column(j).to_owned().insert_axis(Axis(0));
            let t = truth.column(j).to_owned().insert_axis(Axis(0));
            nrmse(e.view(), t.view())
        })
        .collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Estimation report, one line per sample.
pub fn write_estimates_csv(path: &Path, results: &[EstimationResult]) -> Result<()> {
    let d = results.first().map_or(0, |r| r.initial.len());
    let cols = |prefix: &str| (1..=d).map(|j| format!("{prefix}{j}")).collect::<Vec<_>>().join(",");
    let mut out = format!(
        "sample_id,{},{},{},{},{},{},{},initial_loss,final_loss\n",
        cols("true_mu"),
        cols("init_best_mu"),
        cols("init_mean_mu"),
        cols("init_std_mu"),
        cols("refined_mu"),
        cols("refined_mean_mu"),
        cols("refined_std_mu"),
    );
    for r in results {
        let truth = r.truth.as_deref().map(join).unwrap_or_else(|| vec![""; d].join(","));
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.sample,
            truth,
            join(&r.initial),
            join(&r.initial_mean),
            join(&r.initial_std),
            join(&r.refined),
            join(&r.refined_mean),
            join(&r.refined_std),
            r.initial_loss,
            r.final_loss
        ));
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Every restart of a gradient initialization, one line each. Normalized
/// coordinates are written at full precision so [`read_init_csv`] restores
/// them exactly; physical values are for reading.
pub fn write_init_csv(path: &Path, inits: &[SampleInit], norm: &Normalization) -> Result<()> {
    let d = norm.param_dim();
    let cols = |prefix: &str| (1..=d).map(|j| format!("{prefix}{j}")).collect::<Vec<_>>().join(",");
    let mut out = format!("sample_id,restart,best,{},{},loss\n", cols("z"), cols("mu"));
    for (i, s) in inits.iter().enumerate() {
        for (k, o) in s.restarts.iter().enumerate() {
            let best = u8::from(k == s.best);
            match o {
                Some(o) => out.push_str(&format!(
                    "{i},{k},{best},{},{},{}\n",
                    join(&o.mu),
                    join(&norm.denormalize_params(&o.mu)),
                    o.loss
                )),
                None => out.push_str(&format!("{i},{k},{best},{},{},NaN\n", vec!["NaN"; d].join(","), vec!["NaN"; d].join(","))),
            }
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_init_csv(path: &Path) -> Result<Vec<SampleInit>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, why: &str| Error::InvalidArgument(format!("{}:{}: {why}", path.display(), line + 1));
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(0, "empty file"))?;
    let d = header.split(',').filter(|c| c.starts_with('z')).count();
    if d == 0 || header.split(',').count() != 4 + 2 * d {
        return Err(bad(0, "unexpected header"));
    }
    let mut out: Vec<SampleInit> = Vec::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 + 2 * d {
            return Err(bad(n, "wrong number of fields"));
        }
        let int = |f: &str| f.parse::<usize>().map_err(|_| bad(n, "expected an integer"));
        let (sample, restart, best) = (int(fields[0])?, int(fields[1])?, int(fields[2])? == 1);
        let num = |f: &str| f.parse::<f64>().map_err(|_| bad(n, "expected a number"));
        let mu = fields[3..3 + d].iter().map(|f| num(f)).collect::<Result<Vec<_>>>()?;
        let loss = num(fields[3 + 2 * d])?;
        if sample == out.len() {
            out.push(SampleInit { restarts: Vec::new(), best: usize::MAX });
        }
        let s = out.get_mut(sample).filter(|s| s.restarts.len() == restart).ok_or_else(|| bad(n, "rows out of order"))?;
        let finite = loss.is_finite() && mu.iter().all(|v| v.is_finite());
        s.restarts.push(finite.then_some(RestartOutcome { mu, loss }));
        if best {
            if !finite {
                return Err(bad(n, "best restart is not finite"));
            }
            s.best = restart;
        }
    }
    for (i, s) in out.iter().enumerate() {
        if s.best == usize::MAX {
            return Err(bad(0, &format!("sample {i} has no best restart")));
        }
    }
    Ok(out)
}
