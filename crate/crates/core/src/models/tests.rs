use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::datagen::Normalization;
use crate::diffcore::parameter_count;

fn tiny(arch: Architecture, channels: usize) -> NetworkSpec {
    let r = 8;
    let mut spec = NetworkSpec {
        arch,
        resolution: r,
        channels,
        param_dim: 2,
        dt: 0.25,
        branch_dims: vec![],
        param_dims: vec![],
        trunk_dims: vec![],
        decoder_dims: vec![],
        mlp_dims: vec![],
        pe_order: Some(3),
    };
    match arch {
        Architecture::ParametricLd | Architecture::ParametricNd => {
            spec.branch_dims = vec![r, 6, 5];
            spec.param_dims = vec![2, 6, 5];
            spec.trunk_dims = vec![6, 6, 5];
            if arch == Architecture::ParametricNd {
                spec.decoder_dims = vec![r, 7, r];
            }
        }
        Architecture::Vanilla => {
            spec.branch_dims = vec![r + 2, 6, 5];
            spec.trunk_dims = vec![6, 6, 5];
        }
        Architecture::Mlp => {
            spec.mlp_dims = vec![r + 2, 9, channels * r];
            spec.pe_order = None;
        }
    }
    spec
}

fn inputs(batch: usize, r: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = Array2::from_shape_fn((batch, r), |_| rng.random_range(-5.0..5.0));
    let mu = Array2::from_shape_fn((batch, 2), |_| rng.random_range(0.0..1.0));
    (f, mu)
}

fn parametric(model: &mut ForwardModel) -> &mut ParametricDeepONet {
    match model.body_mut() {
        Body::Parametric(p) => p,
        _ => unreachable!(),
    }
}

/// Sets the output layer to `W = 0`, `b = value`.
fn constant_output(net: &mut DenseNetwork, value: f64) {
    net.zero_output_layer();
    let out = net.output_dim();
    let n = net.weights().len();
    for w in &mut net.weights_mut()[n - out..] {
        *w = value;
    }
}

#[test]
fn zero_trunk_gives_zero_response() {
    let mut m = ForwardModel::build(&tiny(Architecture::ParametricLd, 1), 1).unwrap();
    parametric(&mut m).trunk.zero_output_layer();
    let (f, mu) = inputs(3, 8, 2);
    assert!(m.predict(f.view(), mu.view()).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn unit_param_features_reduce_to_branch_trunk_dot() {
    let mut m = ForwardModel::build(&tiny(Architecture::ParametricLd, 1), 3).unwrap();
    constant_output(&mut parametric(&mut m).param_net, 1.0);
    let (f, mu) = inputs(2, 8, 4);
    let got = m.predict(f.view(), mu.view()).unwrap();
    let p = parametric(&mut m).clone();
    let b = p.branch.forward_batch(f.view()).unwrap();
    let tau = p.trunk.forward_batch(m.trunk_input(&m.training_times()).unwrap().view()).unwrap();
    for i in 0..2 {
        for j in 0..8 {
            let dot: f64 = (0..5).map(|k| b[[i, k]] * tau[[j, k]]).sum();
            assert!((got[[i, j]] - dot).abs() < 1e-12);
        }
    }
}

#[test]
fn linear_decoder_is_trilinear() {
    let base = ForwardModel::build(&tiny(Architecture::ParametricLd, 1), 5).unwrap();
    let (f, mu) = inputs(3, 8, 6);
    let y = base.predict(f.view(), mu.view()).unwrap();
    for slot in 0..3 {
        let mut m = base.clone();
        let p = parametric(&mut m);
        let net = [&mut p.branch, &mut p.param_net, &mut p.trunk][slot].clone();
        // Scale the last layer (weights and bias) so the sub-net output scales.
        let mut scaled = net.clone();
        let last = scaled.layer_dims()[scaled.layer_dims().len() - 2] * scaled.output_dim() + scaled.output_dim();
        let n = scaled.weights().len();
        for w in &mut scaled.weights_mut()[n - last..] {
            *w *= -2.5;
        }
        *[&mut p.branch, &mut p.param_net, &mut p.trunk][slot] = scaled;
        let ys = m.predict(f.view(), mu.view()).unwrap();
        for (a, b) in ys.iter().zip(y.iter()) {
            assert!((a + 2.5 * b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn grid_evaluation_matches_pointwise() {
    for arch in [Architecture::ParametricLd, Architecture::Vanilla] {
        let m = ForwardModel::build(&tiny(arch, 1), 7).unwrap();
        let (f, mu) = inputs(1, 8, 8);
        let times: Vec<f64> = (0..13).map(|i| i as f64 * 0.17).collect();
        let full = m.predict_single(f.row(0).as_slice().unwrap(), mu.row(0).as_slice().unwrap(), &times).unwrap();
        for (j, &t) in times.iter().enumerate() {
            let one = m.predict_single(f.row(0).as_slice().unwrap(), mu.row(0).as_slice().unwrap(), &[t]).unwrap();
            assert_eq!(one[[0, 0]].to_bits(), full[[0, j]].to_bits(), "{arch} at t={t}");
        }
    }
}

#[test]
fn refined_grid_reproduces_coincident_points() {
    let m = ForwardModel::build(&tiny(Architecture::ParametricLd, 1), 9).unwrap();
    let (f, mu) = inputs(4, 8, 10);
    let coarse = m.predict(f.view(), mu.view()).unwrap();
    for factor in [2usize, 4] {
        let dt = 0.25 / factor as f64;
        let times: Vec<f64> = (0..8 * factor).map(|i| i as f64 * dt).collect();
        let fine = m.predict_at(f.view(), mu.view(), &times).unwrap();
        for i in 0..4 {
            for j in 0..8 {
                assert_eq!(fine[[i, j * factor]].to_bits(), coarse[[i, j]].to_bits());
            }
        }
    }
}

#[test]
fn nonlinear_decoder_needs_training_resolution() {
    let m = ForwardModel::build(&tiny(Architecture::ParametricNd, 1), 11).unwrap();
    let (f, mu) = inputs(1, 8, 12);
    let times: Vec<f64> = (0..16).map(|i| i as f64 * 0.125).collect();
    assert!(matches!(m.predict_at(f.view(), mu.view(), &times), Err(Error::Unsupported(_))));
    assert_eq!(m.predict(f.view(), mu.view()).unwrap().dim(), (1, 8));
}

#[test]
fn wrong_force_length_rejected() {
    let m = ForwardModel::build(&tiny(Architecture::ParametricLd, 1), 13).unwrap();
    let (f, mu) = inputs(2, 7, 14);
    assert!(matches!(m.predict(f.view(), mu.view()), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn vanilla_zero_branch_and_rank_one() {
    let mut spec = tiny(Architecture::Vanilla, 1);
    let mut m = ForwardModel::build(&spec, 15).unwrap();
    let (f, mu) = inputs(2, 8, 16);
    if let Body::Vanilla(v) = m.body_mut() {
        v.branch.zero_output_layer();
    }
    assert!(m.predict(f.view(), mu.view()).unwrap().iter().all(|&v| v == 0.0));

    spec.branch_dims = vec![10, 4, 1];
    spec.trunk_dims = vec![6, 4, 1];
    let m = ForwardModel::build(&spec, 17).unwrap();
    let y = m.predict(f.view(), mu.view()).unwrap();
    let Body::Vanilla(v) = m.body() else { unreachable!() };
    let input = ndarray::concatenate(ndarray::Axis(1), &[f.view(), mu.view()]).unwrap();
    let b = v.branch.forward_batch(input.view()).unwrap();
    let tau = v.trunk.forward_batch(m.trunk_input(&m.training_times()).unwrap().view()).unwrap();
    for i in 0..2 {
        for j in 0..8 {
            assert_eq!(y[[i, j]], b[[i, 0]] * tau[[j, 0]]);
        }
    }
}

#[test]
fn vanilla_hand_set_two_features() {
    // Branch: single layer, f = [1, 2], μ = [0.5]; trunk: single layer on raw t.
    let spec = NetworkSpec {
        arch: Architecture::Vanilla,
        resolution: 2,
        channels: 1,
        param_dim: 1,
        dt: 1.0,
        branch_dims: vec![3, 2],
        param_dims: vec![],
        trunk_dims: vec![1, 2],
        decoder_dims: vec![],
        mlp_dims: vec![],
        pe_order: None,
    };
    // W row-major (in x out) then bias.
    let branch = DenseNetwork::from_weights(&[3, 2], Activation::Relu, vec![1.0, 0.0, 0.0, 1.0, 2.0, 2.0, 0.5, -1.0], 0).unwrap();
    let trunk = DenseNetwork::from_weights(&[1, 2], Activation::Relu, vec![3.0, -1.0, 1.0, 1.0], 0).unwrap();
    let m = ForwardModel::from_parts(spec, Body::Vanilla(VanillaDeepONet { branch, trunk, encoder: None })).unwrap();
    // b = [1 + 1 + 0.5, 2 + 1 - 1] = [2.5, 2]; τ(0) = [1, 1]; τ(1) = [4, 0].
    let y = m.predict(array![[1.0, 2.0]].view(), array![[0.5]].view()).unwrap();
    assert_eq!(y, array![[4.5, 10.0]]);
}

#[test]
fn mlp_zero_and_hand_set() {
    let mut m = ForwardModel::build(&tiny(Architecture::Mlp, 1), 19).unwrap();
    if let Body::Mlp(b) = m.body_mut() {
        b.net.zero_output_layer();
    }
    let (f, mu) = inputs(2, 8, 20);
    assert!(m.predict(f.view(), mu.view()).unwrap().iter().all(|&v| v == 0.0));

    let spec = NetworkSpec {
        arch: Architecture::Mlp,
        resolution: 1,
        channels: 1,
        param_dim: 1,
        dt: 1.0,
        branch_dims: vec![],
        param_dims: vec![],
        trunk_dims: vec![],
        decoder_dims: vec![],
        mlp_dims: vec![2, 2, 1],
        pe_order: None,
    };
    // hidden = relu([f - μ, f + μ] + [0, -10]); out = 2·h0 + 3·h1 + 1
    let net = DenseNetwork::from_weights(&[2, 2, 1], Activation::Relu, vec![1.0, 1.0, -1.0, 1.0, 0.0, -10.0, 2.0, 3.0, 1.0], 0).unwrap();
    let m = ForwardModel::from_parts(spec, Body::Mlp(MlpBaseline { net })).unwrap();
    let y = m.predict(array![[4.0]].view(), array![[1.0]].view()).unwrap();
    assert_eq!(y[[0, 0]], 2.0 * 3.0 + 1.0);
}

#[test]
fn default_mlp_shape() {
    let m = ForwardModel::build(&default_config(Architecture::Mlp, CaseFamily::Sdof).unwrap(), 21).unwrap();
    let (f, mu) = inputs(3, 200, 22);
    assert_eq!(m.predict(f.view(), mu.view()).unwrap().dim(), (3, 200));
    assert_eq!(m.param_count(), parameter_count(&[202, 400, 400, 200]));
}

#[test]
fn default_parameter_counts() {
    let count = |arch| {
        let spec = default_config(arch, CaseFamily::Sdof).unwrap();
        ForwardModel::build(&spec, 0).unwrap().param_count()
    };
    let dense = |dims: &[usize]| dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>();
    assert_eq!(
        count(Architecture::ParametricNd),
        dense(&[200, 300, 300]) + dense(&[2, 300, 300]) + dense(&[20, 300, 300]) + dense(&[200, 200, 200])
    );
    assert_eq!(
        count(Architecture::ParametricLd),
        dense(&[200, 200, 200, 200, 200, 200]) + dense(&[2, 200, 200, 200, 200]) + dense(&[20, 200, 200, 200, 200])
    );
    assert_eq!(count(Architecture::Vanilla), dense(&[202, 300, 300, 300, 200]) + dense(&[1, 300, 300, 300, 200]));
    assert_eq!(count(Architecture::Mlp), 321_800);
}

#[test]
fn multi_channel_output_is_channel_major() {
    let m = ForwardModel::build(&tiny(Architecture::ParametricLd, 3), 23).unwrap();
    assert_eq!(m.encoder().unwrap().period(), 3.0 * 8.0 * 0.25);
    let coords = m.coordinates(&m.training_times());
    assert_eq!(coords.len(), 24);
    assert_eq!(coords[8], 2.0);
    assert_eq!(coords[23], 5.75);
    let (f, mu) = inputs(2, 8, 24);
    let flat = m.predict(f.view(), mu.view()).unwrap();
    let one = m
        .predict_single(f.row(1).as_slice().unwrap(), mu.row(1).as_slice().unwrap(), &m.training_times())
        .unwrap();
    assert_eq!(one.dim(), (3, 8));
    for ch in 0..3 {
        for j in 0..8 {
            assert_eq!(one[[ch, j]], flat[[1, ch * 8 + j]]);
        }
    }
}

#[test]
fn taped_forward_matches_direct() {
    for arch in Architecture::ALL {
        let m = ForwardModel::build(&tiny(arch, 1), 25).unwrap();
        let (f, mu) = inputs(4, 8, 26);
        let direct = m.predict(f.view(), mu.view()).unwrap();
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape, true);
        let (fv, mv) = (tape.constant(f.clone()), tape.constant(mu.clone()));
        let tv = m.trunk_input(&m.training_times()).map(|t| tape.constant(t));
        let out = bound.forward(&mut tape, fv, mv, tv);
        let taped = tape.value(out);
        for (a, b) in taped.iter().zip(direct.iter()) {
            assert!((a - b).abs() <= 1e-13 * (1.0 + b.abs()), "{arch}");
        }
    }
}

#[test]
fn parameter_gradient_matches_finite_differences() {
    let m = ForwardModel::build(&tiny(Architecture::ParametricLd, 1), 27).unwrap();
    let (f, mu) = inputs(1, 8, 28);
    // Scalar probe: weighted sum of the response.
    let weights: Vec<f64> = (0..8).map(|j| (j as f64 * 0.7).cos()).collect();
    let probe = |mu: &Array2<f64>| -> f64 {
        let y = m.predict(f.view(), mu.view()).unwrap();
        y.iter().zip(&weights).map(|(a, w)| a * w).sum()
    };
    let mut tape = Tape::new();
    let bound = m.bind(&mut tape, false);
    let fv = tape.constant(f.clone());
    let mv = tape.variable(mu.clone());
    let tv = m.trunk_input(&m.training_times()).map(|t| tape.constant(t));
    let y = bound.forward(&mut tape, fv, mv, tv);
    let w = tape.constant(Array2::from_shape_vec((1, 8), weights.clone()).unwrap());
    let prod = tape.mul(y, w);
    let loss = tape.sum(prod);
    let g = tape.backward(loss).unwrap().wrt(mv);
    for d in 0..2 {
        let h = 1e-6;
        let (mut up, mut dn) = (mu.clone(), mu.clone());
        up[[0, d]] += h;
        dn[[0, d]] -= h;
        let fd = (probe(&up) - probe(&dn)) / (2.0 * h);
        let rel = (g[[0, d]] - fd).abs() / fd.abs().max(1e-8);
        assert!(rel < 1e-4, "dim {d}: {} vs {fd}", g[[0, d]]);
    }
}

#[test]
fn frozen_surrogate_agrees_with_model() {
    for arch in Architecture::ALL {
        let m = ForwardModel::build(&tiny(arch, 1), 29).unwrap();
        let (f, mu) = inputs(3, 8, 30);
        let frozen = FrozenSurrogate::new(&m, f.clone()).unwrap();
        let rows = [2, 0, 2];
        let mu_rows = select_rows(&mu, &[0, 1, 2]);
        let direct = m.predict(select_rows(&f, &rows).view(), mu_rows.view()).unwrap();
        let cached = frozen.predict(&rows, mu_rows.view()).unwrap();
        let mut tape = Tape::new();
        let mv = tape.variable(mu_rows.clone());
        let out = frozen.record(&mut tape, &rows, mv);
        for ((a, b), c) in direct.iter().zip(cached.iter()).zip(tape.value(out).iter()) {
            assert!((a - b).abs() <= 1e-13 * (1.0 + a.abs()) && (a - c).abs() <= 1e-13 * (1.0 + a.abs()), "{arch}");
        }
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let norm = Normalization::new(&[(10.0, 100.0), (1.0, 10.0)], vec![1.0]).unwrap();
    for arch in Architecture::ALL {
        let m = ForwardModel::build(&tiny(arch, 1), 31).unwrap();
        let sub = dir.path().join(arch.name());
        save_model(&sub, &m, &norm).unwrap();
        let (back, meta) = load_model(&sub).unwrap();
        assert_eq!(back, m);
        assert_eq!(meta.normalization, norm);
        assert_eq!(meta.encoder, m.encoder().copied());
    }
}
