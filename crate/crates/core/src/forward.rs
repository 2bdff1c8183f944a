//! Supervised surrogate training and NRMSE evaluation.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::diffcore::{Matrix, OptimizerKind, OptimizerState, Tape, Var};
use crate::error::{Error, Result};
use crate::models::{select_rows, ForwardModel};

/// `sqrt(Σ‖ŷ − y‖² / Σ‖y‖²)` pooled over every entry.
pub fn nrmse(pred: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>) -> Result<f64> {
    if pred.dim() != truth.dim() {
        return Err(Error::DimensionMismatch {
            context: format!("nrmse operands {:?} vs {:?}", pred.dim(), truth.dim()),
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    let den: f64 = truth.iter().map(|y| y * y).sum();
    if den == 0.0 {
        return Err(Error::InvalidArgument("nrmse is undefined for an all-zero reference".into()));
    }
    let num: f64 = pred.iter().zip(truth.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((num / den).sqrt())
}

/// NRMSE of each row on its own.
pub fn nrmse_rows(pred: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    if pred.dim() != truth.dim() {
        return Err(Error::DimensionMismatch {
            context: "row-wise nrmse operands".into(),
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    pred.axis_iter(Axis(0))
        .zip(truth.axis_iter(Axis(0)))
        .map(|(p, t)| nrmse(p.insert_axis(Axis(0)), t.insert_axis(Axis(0))))
        .collect()
}

/// Records the mean over rows of per-row NRMSE between `pred` and the
/// constant `truth`.
pub fn record_mean_row_nrmse(tape: &mut Tape, pred: Var, truth: &Matrix) -> Result<Var> {
    let per_row = record_row_nrmse(tape, pred, truth)?;
    Ok(tape.mean(per_row))
}

/// Records the per-row NRMSE column (`B x 1`).
pub fn record_row_nrmse(tape: &mut Tape, pred: Var, truth: &Matrix) -> Result<Var> {
    let inv_den = truth
        .axis_iter(Axis(0))
        .enumerate()
        .map(|(i, row)| {
            let s: f64 = row.iter().map(|v| v * v).sum();
            if s == 0.0 {
                Err(Error::InvalidArgument(format!("reference row {i} is identically zero")))
            } else {
                Ok(1.0 / s)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let inv_den = tape.constant(Array2::from_shape_vec((inv_den.len(), 1), inv_den).expect("column"));
    let y = tape.constant(truth.clone());
    let diff = tape.sub(pred, y);
    let sq = tape.square(diff);
    let num = tape.row_sum(sq);
    let ratio = tape.mul_col(num, inv_den);
    Ok(tape.sqrt(ratio))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Test-set evaluation cadence in epochs; 0 disables it.
    pub eval_every: usize,
    /// Stop once the train loss has not improved for this many epochs.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10_000,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::adam(),
            seed: 0,
            eval_every: 100,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!("invalid learning rate {}", self.learning_rate)));
        }
        if self.patience == Some(0) {
            return Err(Error::InvalidConfig("patience must be >= 1 when set".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample NRMSE over the whole training set after the epoch.
    pub train_loss: f64,
    pub test_nrmse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory {
    pub initial_loss: f64,
    pub records: Vec<EpochRecord>,
    /// Epoch whose weights were kept (0 means the initial weights).
    pub best_epoch: usize,
    pub best_loss: f64,
}

impl TrainHistory {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,train_loss,test_nrmse\n");
        for r in &self.records {
            let test = r.test_nrmse.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, test));
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn check_compatible(model: &ForwardModel, ds: &Dataset) -> Result<()> {
    let s = model.spec();
    let m = &ds.meta;
    if (s.resolution, s.channels, s.param_dim) != (m.r, m.c, m.param_dim) {
        return Err(Error::InvalidArgument(format!(
            "model expects r={}, c={}, dim(μ)={} but the dataset has r={}, c={}, dim(μ)={}",
            s.resolution, s.channels, s.param_dim, m.r, m.c, m.param_dim
        )));
    }
    if ds.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    Ok(())
}

/// Network inputs and normalized targets of a dataset.
pub struct Prepared {
    pub forces: Matrix,
    pub params: Matrix,
    pub targets: Matrix,
}

pub fn prepare(ds: &Dataset) -> Prepared {
    let norm = &ds.meta.normalization;
    let mut targets = ds.responses();
    for mut row in targets.rows_mut() {
        let scaled = norm.normalize_response(row.as_slice().expect("contiguous row"));
        row.assign(&ndarray::ArrayView1::from(&scaled));
    }
    Prepared {
        forces: ds.forces(),
        params: ds.params_normalized(),
        targets,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Pooled NRMSE over every sample, channel and time point.
    pub aggregate: f64,
    /// Mean of per-sample NRMSE (the training loss reduction).
    pub mean_per_sample: f64,
    pub per_sample: Vec<f64>,
}

/// Predictions on the dataset's grid in normalized response units.
pub fn predict_dataset(model: &ForwardModel, ds: &Dataset) -> Result<Matrix> {
    check_compatible(model, ds)?;
    let p = prepare(ds);
    model.predict(p.forces.view(), p.params.view())
}

pub fn evaluate(model: &ForwardModel, ds: &Dataset) -> Result<Evaluation> {
    check_compatible(model, ds)?;
    evaluate_prepared(model, &prepare(ds))
}

fn evaluate_prepared(model: &ForwardModel, p: &Prepared) -> Result<Evaluation> {
    let pred = model.predict(p.forces.view(), p.params.view())?;
    let per_sample = nrmse_rows(pred.view(), p.targets.view())?;
    Ok(Evaluation {
        aggregate: nrmse(pred.view(), p.targets.view())?,
        mean_per_sample: per_sample.iter().sum::<f64>() / per_sample.len() as f64,
        per_sample,
    })
}

/// Gradient of the mean per-sample NRMSE over `rows`, one flat vector per
/// sub-network, plus the loss value.
pub fn loss_and_gradients(model: &ForwardModel, p: &Prepared, rows: &[usize]) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true);
    let f = tape.constant(select_rows(&p.forces, rows));
    let mu = tape.constant(select_rows(&p.params, rows));
    let t = model.trunk_input(&model.training_times()).map(|m| tape.constant(m));
    let pred = bound.forward(&mut tape, f, mu, t);
    let loss = record_mean_row_nrmse(&mut tape, pred, &select_rows(&p.targets, rows))?;
    let value = tape.scalar(loss);
    let grads = tape.backward(loss)?;
    Ok((value, bound.gradients(&grads)))
}

/// Mini-batch training on the mean per-sample NRMSE. The weights with the
/// lowest end-of-epoch training loss are left in `model`. `observer` sees
/// each epoch's record and the current (not necessarily best) weights.
pub fn train_forward(
    model: &mut ForwardModel,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord, &ForwardModel),
) -> Result<TrainHistory> {
    cfg.validate()?;
    check_compatible(model, train)?;
    if let Some(t) = test {
        check_compatible(model, t)?;
    }
    let prep = prepare(train);
    let test_prep = test.map(prepare);

    let mut optimizers = model
        .networks()
        .iter()
        .map(|(_, n)| OptimizerState::new(cfg.optimizer, cfg.learning_rate, n.param_count()))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let initial_loss = evaluate_prepared(model, &prep)?.mean_per_sample;
    let mut best = (0usize, initial_loss, model.clone());
    let mut records = Vec::new();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for (batch, rows) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, grads) = loss_and_gradients(model, &prep, rows)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            for ((net, opt), g) in model.networks_mut().into_iter().zip(&mut optimizers).zip(&grads) {
                opt.step(net.weights_mut(), g)?;
            }
        }
        let train_loss = evaluate_prepared(model, &prep)?.mean_per_sample;
        if !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        let test_nrmse = match &test_prep {
            Some(tp) if cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) => {
                Some(evaluate_prepared(model, tp)?.aggregate)
            }
            _ => None,
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            test_nrmse,
        };
        observer(&record, model);
        records.push(record);
        if train_loss < best.1 {
            best = (epoch, train_loss, model.clone());
        }
        if let Some(p) = cfg.patience {
            if epoch - best.0 >= p {
                break;
            }
        }
    }
    let (best_epoch, best_loss, best_model) = best;
    *model = best_model;
    Ok(TrainHistory {
        initial_loss,
        records,
        best_epoch,
        best_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, CaseId, Role, DUFFING_CUBIC};
    use crate::dynamics::{SimGrid, SweepSpec};
    use crate::models::{Architecture, NetworkSpec};
    use ndarray::array;
    use proptest::prelude::*;

    fn small_ds(n: usize, seed: u64) -> Dataset {
        generate_dataset(
            CaseId::C1a,
            Role::Train,
            n,
            &SweepSpec::duffing_default(),
            &SimGrid::duffing_default(),
            DUFFING_CUBIC,
            seed,
        )
        .unwrap()
    }

    fn small_spec(arch: Architecture) -> NetworkSpec {
        NetworkSpec {
            arch,
            resolution: 200,
            channels: 1,
            param_dim: 2,
            dt: 0.01,
            branch_dims: vec![200, 16, 8],
            param_dims: vec![2, 16, 8],
            trunk_dims: vec![8, 16, 8],
            decoder_dims: if arch == Architecture::ParametricNd { vec![200, 32, 200] } else { vec![] },
            mlp_dims: vec![],
            pe_order: Some(4),
        }
    }

    #[test]
    fn nrmse_identities() {
        let y = array![[1.0, -2.0], [0.5, 3.0]];
        assert_eq!(nrmse(y.view(), y.view()).unwrap(), 0.0);
        assert_eq!(nrmse(Array2::zeros((2, 2)).view(), y.view()).unwrap(), 1.0);
        assert!((nrmse((&y * 2.0).view(), y.view()).unwrap() - 1.0).abs() < 1e-15);
        assert!(nrmse(y.view(), Array2::zeros((2, 2)).view()).is_err());
    }

    proptest! {
        #[test]
        fn nrmse_scale_invariant(vals in proptest::collection::vec(-10.0f64..10.0, 8), noise in proptest::collection::vec(-1.0f64..1.0, 8), a in 0.1f64..10.0) {
            prop_assume!(vals.iter().any(|v| v.abs() > 1e-3));
            let y = Array2::from_shape_vec((2, 4), vals).unwrap();
            let p = &y + &Array2::from_shape_vec((2, 4), noise).unwrap();
            let base = nrmse(p.view(), y.view()).unwrap();
            let scaled = nrmse((&p * a).view(), (&y * a).view()).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-12 * (1.0 + base));
            prop_assert!(base >= 0.0);
        }
    }

    #[test]
    fn taped_loss_matches_row_nrmse() {
        let truth = array![[1.0, 2.0, 0.0], [0.0, -1.0, 4.0]];
        let pred = array![[1.5, 2.0, 0.1], [0.3, -1.0, 3.0]];
        let mut tape = Tape::new();
        let p = tape.variable(pred.clone());
        let l = record_mean_row_nrmse(&mut tape, p, &truth).unwrap();
        let rows = nrmse_rows(pred.view(), truth.view()).unwrap();
        assert!((tape.scalar(l) - (rows[0] + rows[1]) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let ds = small_ds(1, 1);
        let mut model = ForwardModel::build(&small_spec(Architecture::ParametricLd), 2).unwrap();
        let before = model.clone();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 4,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let h = train_forward(&mut model, &ds, None, &cfg, |_, _| {}).unwrap();
        assert_eq!(model, before);
        assert_eq!(h.records.len(), 1);
    }

    #[test]
    fn training_reduces_loss() {
        let ds = small_ds(1, 3);
        let mut model = ForwardModel::build(&small_spec(Architecture::ParametricLd), 4).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let h = train_forward(&mut model, &ds, None, &cfg, |_, _| {}).unwrap();
        assert!(h.best_loss < h.initial_loss, "{} vs {}", h.best_loss, h.initial_loss);
        assert!(h.records.last().unwrap().train_loss < h.initial_loss);
    }

    #[test]
    fn best_checkpoint_reproduces_recorded_loss() {
        let ds = small_ds(6, 5);
        let mut model = ForwardModel::build(&small_spec(Architecture::ParametricNd), 6).unwrap();
        let cfg = TrainConfig {
            epochs: 15,
            batch_size: 4,
            learning_rate: 3e-3,
            ..TrainConfig::default()
        };
        let h = train_forward(&mut model, &ds, Some(&ds), &cfg, |_, _| {}).unwrap();
        let min = h.records.iter().map(|r| r.train_loss).fold(h.initial_loss, f64::min);
        assert_eq!(h.best_loss, min);
        let e = evaluate(&model, &ds).unwrap();
        assert!((e.mean_per_sample - h.best_loss).abs() < 1e-12);
    }

    #[test]
    fn equal_seeds_give_identical_histories() {
        let ds = small_ds(5, 7);
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 2,
            seed: 9,
            ..TrainConfig::default()
        };
        let run = || {
            let mut m = ForwardModel::build(&small_spec(Architecture::ParametricLd), 8).unwrap();
            let h = train_forward(&mut m, &ds, None, &cfg, |_, _| {}).unwrap();
            (h, m)
        };
        let (h1, m1) = run();
        let (h2, m2) = run();
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn full_batch_gradient_is_mean_of_sample_gradients() {
        let ds = small_ds(4, 10);
        let model = ForwardModel::build(&small_spec(Architecture::ParametricNd), 11).unwrap();
        let p = prepare(&ds);
        let (_, full) = loss_and_gradients(&model, &p, &[0, 1, 2, 3]).unwrap();
        let singles: Vec<Vec<Vec<f64>>> = (0..4).map(|i| loss_and_gradients(&model, &p, &[i]).unwrap().1).collect();
        for (n, net) in full.iter().enumerate() {
            for (j, g) in net.iter().enumerate() {
                let mean = singles.iter().map(|s| s[n][j]).sum::<f64>() / 4.0;
                assert!((g - mean).abs() <= 1e-10 * (1.0 + mean.abs()), "{g} vs {mean}");
            }
        }
    }

    #[test]
    fn aggregate_matches_recomputation() {
        let ds = small_ds(5, 12);
        let model = ForwardModel::build(&small_spec(Architecture::ParametricLd), 13).unwrap();
        let e = evaluate(&model, &ds).unwrap();
        let pred = predict_dataset(&model, &ds).unwrap();
        let truth = ds.responses();
        let num: f64 = pred.iter().zip(truth.iter()).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = truth.iter().map(|b| b * b).sum();
        assert!((e.aggregate - (num / den).sqrt()).abs() < 1e-12);
        assert_eq!(e.per_sample.len(), 5);
    }

    #[test]
    fn mismatched_dataset_rejected() {
        let ds = small_ds(2, 14);
        let mut spec = small_spec(Architecture::ParametricLd);
        spec.resolution = 100;
        spec.branch_dims[0] = 100;
        let model = ForwardModel::build(&spec, 15).unwrap();
        assert!(evaluate(&model, &ds).is_err());
    }
}
