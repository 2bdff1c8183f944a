#![allow(dead_code)]

use pdon::dynamics::{simulate_duffing, DuffingParams, SimGrid, SweepSpec};

/// Closed-form response of `x'' + c x' + k x = a sin(w t)` from rest,
/// returned as (x, v, acceleration) at time `t`. Underdamped only.
pub fn damped_sine_response(k: f64, c: f64, a: f64, w: f64, t: f64) -> (f64, f64, f64) {
    let d = (k - w * w).powi(2) + (c * w).powi(2);
    let (p, q) = (a * (k - w * w) / d, -a * c * w / d);
    // particular: p sin wt + q cos wt
    let xp = p * (w * t).sin() + q * (w * t).cos();
    let vp = p * w * (w * t).cos() - q * w * (w * t).sin();
    let sigma = c / 2.0;
    let wd = (k - sigma * sigma).sqrt();
    let c1 = -q;
    let c2 = (sigma * c1 - p * w) / wd;
    let e = (-sigma * t).exp();
    let (s, co) = (wd * t).sin_cos();
    let xh = e * (c1 * co + c2 * s);
    let vh = e * (-sigma * (c1 * co + c2 * s) + wd * (-c1 * s + c2 * co));
    let (x, v) = (xp + xh, vp + vh);
    (x, v, a * (w * t).sin() - c * v - k * x)
}

pub fn relative_rms(pred: &[f64], truth: &[f64]) -> f64 {
    let num: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    let den: f64 = truth.iter().map(|t| t * t).sum();
    (num / den).sqrt()
}

/// Relative RMS acceleration error of the integrator (cubic term off)
/// against the closed form, for a constant-frequency sweep.
pub fn linear_sdof_error(substeps: usize) -> f64 {
    let (k, c, amp, freq) = (100.0, 2.0, 5.0, 3.0);
    let sweep = SweepSpec::new(amp, freq, freq, 2.0).unwrap();
    let grid = SimGrid::new(0.01, 200, substeps).unwrap();
    let p = DuffingParams::new(k, c, 0.0).unwrap();
    let sim = simulate_duffing(&p, &sweep, &grid).unwrap();
    let w = 2.0 * std::f64::consts::PI * freq;
    let truth: Vec<f64> = sim.time.iter().map(|&t| damped_sine_response(k, c, amp, w, t).2).collect();
    relative_rms(&sim.acceleration, &truth)
}

/// Random small network with a quadratic-plus-linear readout. Returns the
/// largest deviation between taped and central-difference gradients
/// (weights and inputs), relative to the largest gradient magnitude.
pub fn autodiff_relative_error(seed: u64) -> f64 {
    use ndarray::Array2;
    use pdon::diffcore::{Activation, DenseNetwork, Matrix, Tape};
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.random_range(1..=3);
    let dims: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=5)).collect();
    let activation = match rng.random_range(0..3) {
        0 => Activation::Relu,
        1 => Activation::leaky_relu(),
        _ => Activation::Identity,
    };
    let mut net = DenseNetwork::init(&dims, activation, rng.random()).unwrap();
    for w in net.weights_mut() {
        *w += rng.random_range(-0.5..0.5);
    }
    let batch = rng.random_range(1..=4);
    let x: Matrix = Array2::from_shape_fn((batch, dims[0]), |_| rng.random_range(-2.0..2.0));
    let readout: Matrix = Array2::from_shape_fn((batch, dims[depth]), |_| rng.random_range(-1.0..1.0));

    let loss = |net: &DenseNetwork, x: &Matrix| {
        let out = net.forward_batch(x.view()).unwrap();
        out.iter().zip(&readout).map(|(o, r)| 0.5 * o * o + r * o).sum::<f64>()
    };
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape, true);
    let xv = tape.variable(x.clone());
    let out = bound.forward(&mut tape, xv);
    let sq = tape.square(out);
    let half = tape.scale(sq, 0.5);
    let r = tape.constant(readout.clone());
    let lin = tape.mul(out, r);
    let total = tape.add(half, lin);
    let l = tape.sum(total);
    let grads = tape.backward(l).unwrap();

    let h = 1e-6;
    let mut pairs = Vec::new();
    let weight_grad = bound.gradient(&grads);
    for (i, &g) in weight_grad.iter().enumerate() {
        let mut p = net.clone();
        p.weights_mut()[i] += h;
        let up = loss(&p, &x);
        p.weights_mut()[i] -= 2.0 * h;
        let dn = loss(&p, &x);
        pairs.push((g, (up - dn) / (2.0 * h)));
    }
    let input_grad = grads.wrt(xv);
    for idx in ndarray::indices(x.dim()) {
        let mut xp = x.clone();
        xp[idx] += h;
        let up = loss(&net, &xp);
        xp[idx] -= 2.0 * h;
        let dn = loss(&net, &xp);
        pairs.push((input_grad[idx], (up - dn) / (2.0 * h)));
    }
    let scale = pairs.iter().fold(0.0f64, |m, &(g, f)| m.max(g.abs()).max(f.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    pairs.iter().fold(0.0f64, |m, &(g, f)| m.max((g - f).abs())) / scale
}
