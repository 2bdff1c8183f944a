use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use pdon::analysis::{latent_pca, superres_eval, write_superres_csv};
use pdon::datagen::{generate_dataset, load_dataset, save_dataset, Dataset, Normalization, DUFFING_CUBIC};
use pdon::dynamics::{SimGrid, SweepSpec};
use pdon::forward::{evaluate, prepare, train_forward};
use pdon::inverse::{
    estimate_from_init, gradient_init, parameter_nrmse, read_init_csv, train_refinement, write_estimates_csv,
    write_init_csv, RefineExamples, RefinementNet, SampleInit,
};
use pdon::models::{default_config, load_model, save_model, Architecture, CaseFamily, ForwardModel, FrozenSurrogate};

use crate::config::{output_dir, require, RunConfig};
use crate::{Command, Common};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData { case, role, n, common } => {
            let (cfg, out) = setup(&common, "gen-data")?;
            let ds = generate_dataset(
                case,
                role,
                n,
                &SweepSpec::duffing_default(),
                &SimGrid::duffing_default(),
                DUFFING_CUBIC,
                cfg.seed.unwrap_or(0),
            )?;
            save_dataset(&ds, &out)?;
            eprintln!("wrote {n} {role} samples of case {case} to {}", out.display());
        }
        Command::TrainForward { train, test, arch, epochs, common } => {
            let (mut cfg, out) = setup(&common, "train-forward")?;
            let train = dataset(require(train, &cfg.paths.train, "train")?)?;
            let test = test.or(cfg.paths.test.clone()).map(dataset).transpose()?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let spec = match (&cfg.network, arch.or(cfg.arch)) {
                (Some(spec), None) => spec.clone(),
                (Some(spec), Some(a)) if spec.arch == a => spec.clone(),
                (Some(spec), Some(a)) => bail!("--arch {a} conflicts with network.arch = {} in the config", spec.arch),
                (None, a) => {
                    let family = if train.meta.c == 1 { CaseFamily::Sdof } else { CaseFamily::Mdof };
                    default_config(a.unwrap_or(Architecture::ParametricNd), family)?
                }
            };
            let mut model = ForwardModel::build(&spec, cfg.seed.unwrap_or(0))?;
            eprintln!("training {} ({} parameters) for {} epochs", spec.arch, model.param_count(), cfg.train.epochs);
            let history = train_forward(&mut model, &train, test.as_ref(), &cfg.train, |r, _| {
                if let Some(t) = r.test_nrmse {
                    eprintln!("epoch {:6}  train {:.5}  test {:.5}", r.epoch, r.train_loss, t);
                }
            })?;
            save_model(&out, &model, &train.meta.normalization)?;
            history.write_csv(&out.join("history.csv"))?;
            eprintln!("best epoch {} (train loss {:.5}); checkpoint in {}", history.best_epoch, history.best_loss, out.display());
        }
        Command::EvalForward { model, data, common } => {
            let (cfg, out) = setup(&common, "eval-forward")?;
            let (model, _) = surrogate(require(model, &cfg.paths.model, "model")?)?;
            let ds = dataset(require(data, &cfg.paths.data, "data")?)?;
            let e = evaluate(&model, &ds)?;
            let mut summary = String::from("arch,n,aggregate_nrmse,mean_sample_nrmse\n");
            writeln!(summary, "{},{},{},{}", model.arch(), ds.len(), e.aggregate, e.mean_per_sample)?;
            write(&out.join("eval_summary.csv"), &summary)?;
            let d = ds.meta.param_dim;
            let mut rows = format!("sample_id,{},nrmse\n", columns("mu", d));
            for (i, (s, v)) in ds.samples.iter().zip(&e.per_sample).enumerate() {
                writeln!(rows, "{i},{},{v}", join(&s.params))?;
            }
            write(&out.join("eval_samples.csv"), &rows)?;
            println!("aggregate NRMSE {:.6}", e.aggregate);
        }
        Command::InvertInit { model, data, restarts, epochs, common } => {
            let (mut cfg, out) = setup(&common, "invert-init")?;
            let (model, norm) = surrogate(require(model, &cfg.paths.model, "model")?)?;
            let ds = dataset(require(data, &cfg.paths.data, "data")?)?;
            check_normalization(&norm, &ds)?;
            cfg.init.restarts = restarts.unwrap_or(cfg.init.restarts);
            cfg.init.epochs = epochs.unwrap_or(cfg.init.epochs);
            let p = prepare(&ds);
            let frozen = FrozenSurrogate::new(&model, p.forces)?;
            let inits = gradient_init(&frozen, &p.targets, &cfg.init)?;
            write_init_csv(&out.join("init.csv"), &inits, &norm)?;
            eprintln!("initialized {} samples x {} restarts", inits.len(), cfg.init.restarts);
        }
        Command::TrainRefine { model, data, init, epochs, iterations, common } => {
            let (mut cfg, out) = setup(&common, "train-refine")?;
            let (model, norm) = surrogate(require(model, &cfg.paths.model, "model")?)?;
            let ds = dataset(require(data, &cfg.paths.data, "data")?)?;
            check_normalization(&norm, &ds)?;
            cfg.refine.epochs = epochs.unwrap_or(cfg.refine.epochs);
            cfg.refine.iterations = iterations.unwrap_or(cfg.refine.iterations);
            let p = prepare(&ds);
            let frozen = FrozenSurrogate::new(&model, p.forces)?;
            let inits = initialization(init.or(cfg.paths.init.clone()), &frozen, &p.targets, &cfg, ds.len())?;
            let ex = RefineExamples::from_best(&inits, &ds.params());
            let mut net = RefinementNet::new(ds.meta.param_dim, &cfg.refine)?;
            let h = train_refinement(&mut net, &frozen, &ex, &p.targets, &norm, &cfg.refine)?;
            net.save(&out, &norm)?;
            let mut csv = String::from("epoch,loss\n");
            writeln!(csv, "0,{}", h.baseline_loss)?;
            for (i, l) in h.epoch_losses.iter().enumerate() {
                writeln!(csv, "{},{l}", i + 1)?;
            }
            write(&out.join("refine_history.csv"), &csv)?;
            eprintln!("refinement loss {:.5} -> {:.5} (epoch {})", h.baseline_loss, h.best_loss, h.best_epoch);
        }
        Command::Estimate { model, refine, data, init, common } => {
            let (cfg, out) = setup(&common, "estimate")?;
            let (model, norm) = surrogate(require(model, &cfg.paths.model, "model")?)?;
            let refine_dir = require(refine, &cfg.paths.refine, "refine")?;
            let (net, refine_norm) =
                RefinementNet::load(&refine_dir).with_context(|| format!("loading refinement net {}", refine_dir.display()))?;
            if refine_norm != norm {
                bail!("refinement net and surrogate were trained with different normalizations");
            }
            let ds = dataset(require(data, &cfg.paths.data, "data")?)?;
            check_normalization(&norm, &ds)?;
            let p = prepare(&ds);
            let frozen = FrozenSurrogate::new(&model, p.forces)?;
            let inits = initialization(init.or(cfg.paths.init.clone()), &frozen, &p.targets, &cfg, ds.len())?;
            let truth = ds.params();
            let results = estimate_from_init(&frozen, &p.targets, &inits, &net, &norm, Some(&truth))?;
            write_estimates_csv(&out.join("estimates.csv"), &results)?;

            let stack = |pick: fn(&pdon::inverse::EstimationResult) -> &Vec<f64>| {
                let flat: Vec<f64> = results.iter().flat_map(|r| pick(r).iter().copied()).collect();
                pdon::diffcore::Matrix::from_shape_vec(truth.dim(), flat).expect("one estimate per sample")
            };
            let d = ds.meta.param_dim;
            let mut summary = format!("stage,{}\n", columns("nrmse_mu", d));
            for (stage, est) in [("initial", stack(|r| &r.initial)), ("refined", stack(|r| &r.refined))] {
                let e = parameter_nrmse(&est, &truth)?;
                writeln!(summary, "{stage},{}", join(&e))?;
                println!("{stage:8} parameter NRMSE {}", e.iter().map(|v| format!("{v:.5}")).collect::<Vec<_>>().join("  "));
            }
            write(&out.join("estimate_summary.csv"), &summary)?;
        }
        Command::Superres { model, data, factors, common } => {
            let (cfg, out) = setup(&common, "superres")?;
            let (model, norm) = surrogate(require(model, &cfg.paths.model, "model")?)?;
            let ds = dataset(require(data, &cfg.paths.data, "data")?)?;
            check_normalization(&norm, &ds)?;
            let rows = superres_eval(&model, &ds, &factors)?;
            write_superres_csv(&out.join("superres.csv"), &rows)?;
            for r in &rows {
                println!("factor {} (r = {}): NRMSE {:.6}", r.factor, r.resolution, r.nrmse);
            }
        }
        Command::LatentPca { model, grid_n, common } => {
            let (cfg, out) = setup(&common, "latent-pca")?;
            let (model, norm) = surrogate(require(model, &cfg.paths.model, "model")?)?;
            if !model.arch().is_parametric() {
                bail!("latent PCA needs a parametric model with a parameter net, got {}", model.arch());
            }
            let map = latent_pca(&model, &norm.bounds(), grid_n)?;
            map.write_csv(&out.join("pca_scores.csv"))?;
            map.write_variance_csv(&out.join("pca_variance.csv"))?;
            println!("PC1 explains {:.4} of the feature variance", map.explained_ratio[0]);
        }
    }
    Ok(())
}

fn setup(common: &Common, stage: &str) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    cfg.apply_seed(common.seed);
    let out = output_dir(common.out.clone(), &cfg, stage);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok((cfg, out))
}

fn dataset(dir: PathBuf) -> Result<Dataset> {
    load_dataset(&dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn surrogate(dir: PathBuf) -> Result<(ForwardModel, Normalization)> {
    let (model, meta) = load_model(&dir).with_context(|| format!("loading model {}", dir.display()))?;
    Ok((model, meta.normalization))
}

fn check_normalization(norm: &Normalization, ds: &Dataset) -> Result<()> {
    if *norm != ds.meta.normalization {
        bail!("dataset normalization differs from the one the model was trained with");
    }
    Ok(())
}

fn initialization(
    path: Option<PathBuf>,
    frozen: &FrozenSurrogate<'_>,
    targets: &pdon::diffcore::Matrix,
    cfg: &RunConfig,
    n: usize,
) -> Result<Vec<SampleInit>> {
    let inits = match path {
        Some(p) => read_init_csv(&p).with_context(|| format!("reading {}", p.display()))?,
        None => gradient_init(frozen, targets, &cfg.init)?,
    };
    if inits.len() != n {
        bail!("initialization covers {} samples but the dataset has {n}", inits.len());
    }
    Ok(inits)
}

fn columns(prefix: &str, d: usize) -> String {
    (1..=d).map(|j| format!("{prefix}{j}")).collect::<Vec<_>>().join(",")
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
