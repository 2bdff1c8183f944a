use ndarray::{Array2, ArrayView2};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Gradients, Matrix, Tape, Var};
use crate::error::{Error, Result};

/// Slope used for leaky ReLU hidden activations.
pub const LEAKY_RELU_SLOPE: f64 = 0.01;

/// Hidden-layer activation. The output layer is always affine.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
    Identity,
}

impl Activation {
    pub fn leaky_relu() -> Self {
        Activation::LeakyRelu {
            slope: LEAKY_RELU_SLOPE,
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Identity => x,
        }
    }

    fn record(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::LeakyRelu { slope } => tape.leaky_relu(x, slope),
            Activation::Identity => x,
        }
    }
}

/// Fully connected network stored as one flat parameter vector.
///
/// Layer `l` contributes a `dims[l] x dims[l+1]` weight matrix in row-major
/// order followed by its `dims[l+1]` biases, so a batch of row inputs `X`
/// maps to `X·W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNetwork {
    layer_dims: Vec<usize>,
    activation: Activation,
    weights: Vec<f64>,
    seed: u64,
}

/// Closed-form parameter count for a layer list.
pub fn parameter_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a network needs at least an input and an output layer, got {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "layer widths must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

impl DenseNetwork {
    /// Fan-in scaled uniform weights `U(-1/√fan_in, 1/√fan_in)` and zero
    /// biases, reproducible from `seed`.
    pub fn init(dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        validate_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(parameter_count(dims));
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("bound is finite");
            weights.extend((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)));
            weights.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self {
            layer_dims: dims.to_vec(),
            activation,
            weights,
            seed,
        })
    }

    pub fn zeros(dims: &[usize], activation: Activation) -> Result<Self> {
        validate_dims(dims)?;
        Ok(Self {
            layer_dims: dims.to_vec(),
            activation,
            weights: vec![0.0; parameter_count(dims)],
            seed: 0,
        })
    }

    pub fn from_weights(
        dims: &[usize],
        activation: Activation,
        weights: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        validate_dims(dims)?;
        let expected = parameter_count(dims);
        if weights.len() != expected {
            return Err(Error::DimensionMismatch {
                context: format!("weights for layers {dims:?}"),
                expected,
                actual: weights.len(),
            });
        }
        Ok(Self {
            layer_dims: dims.to_vec(),
            activation,
            weights,
            seed,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated non-empty")
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Zeroes the final layer so the network outputs exactly zero.
    pub fn zero_output_layer(&mut self) {
        let n = self.layer_dims.len();
        let last = parameter_count(&self.layer_dims[n - 2..]);
        let len = self.weights.len();
        self.weights[len - last..].fill(0.0);
    }

    fn layers(&self) -> impl Iterator<Item = (ArrayView2<'_, f64>, ArrayView2<'_, f64>)> + '_ {
        let mut offset = 0;
        self.layer_dims.windows(2).map(move |w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let wlen = fan_in * fan_out;
            let weight = ArrayView2::from_shape((fan_in, fan_out), &self.weights[offset..offset + wlen])
                .expect("layout matches parameter count");
            let bias = ArrayView2::from_shape((1, fan_out), &self.weights[offset + wlen..offset + wlen + fan_out])
                .expect("layout matches parameter count");
            offset += wlen + fan_out;
            (weight, bias)
        })
    }

    /// Single-vector evaluation.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("1 x n view");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Evaluates every row of `input`.
    pub fn forward_batch(&self, input: ArrayView2<'_, f64>) -> Result<Matrix> {
        if input.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: format!("network input (layers {:?})", self.layer_dims),
                expected: self.input_dim(),
                actual: input.ncols(),
            });
        }
        let n_layers = self.layer_dims.len() - 1;
        let mut h: Matrix = input.to_owned();
        for (l, (w, b)) in self.layers().enumerate() {
            let mut z = h.dot(&w);
            z += &b;
            if l + 1 < n_layers {
                let act = self.activation;
                z.mapv_inplace(|x| act.apply(x));
            }
            h = z;
        }
        Ok(h)
    }

    /// Records this network's parameters on `tape`; `trainable` decides
    /// whether they are variables or constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundNetwork {
        let mut layers = Vec::with_capacity(self.layer_dims.len() - 1);
        for (w, b) in self.layers() {
            let (w, b) = (w.to_owned(), b.to_owned());
            let pair = if trainable {
                (tape.variable(w), tape.variable(b))
            } else {
                (tape.constant(w), tape.constant(b))
            };
            layers.push(pair);
        }
        BoundNetwork {
            layers,
            activation: self.activation,
            input_dim: self.input_dim(),
        }
    }
}

/// A network whose parameters live on a tape.
#[derive(Clone, Debug)]
pub struct BoundNetwork {
    layers: Vec<(Var, Var)>,
    activation: Activation,
    input_dim: usize,
}

impl BoundNetwork {
    pub fn forward(&self, tape: &mut Tape, input: Var) -> Var {
        assert_eq!(
            tape.value(input).ncols(),
            self.input_dim,
            "bound network input width"
        );
        let mut h = input;
        let n = self.layers.len();
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            let z = tape.matmul(h, w);
            let z = tape.add_row(z, b);
            h = if l + 1 < n {
                self.activation.record(tape, z)
            } else {
                z
            };
        }
        h
    }

    /// Flattens parameter gradients in declared parameter order.
    pub fn gradient(&self, grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::new();
        for &(w, b) in &self.layers {
            out.extend(grads.wrt(w).iter());
            out.extend(grads.wrt(b).iter());
        }
        out
    }
}

/// Row-stacks `rows` into an `n x d` matrix.
pub fn stack_rows(rows: &[&[f64]]) -> Result<Array2<f64>> {
    let d = rows.first().map_or(0, |r| r.len());
    let mut out = Array2::zeros((rows.len(), d));
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(Error::DimensionMismatch {
                context: "row stacking".into(),
                expected: d,
                actual: r.len(),
            });
        }
        out.row_mut(i).assign(&ndarray::ArrayView1::from(*r));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_formula() {
        let net = DenseNetwork::init(&[2, 4, 1], Activation::Relu, 0).unwrap();
        assert_eq!(net.param_count(), 17);
        assert_eq!(parameter_count(&[200, 300, 300]), 150_600);
    }

    #[test]
    fn empty_or_degenerate_layers_rejected() {
        assert!(DenseNetwork::init(&[], Activation::Relu, 0).is_err());
        assert!(DenseNetwork::init(&[3], Activation::Relu, 0).is_err());
        assert!(DenseNetwork::init(&[3, 0, 1], Activation::Relu, 0).is_err());
    }

    #[test]
    fn same_seed_same_weights() {
        let a = DenseNetwork::init(&[5, 7, 3], Activation::Relu, 42).unwrap();
        let b = DenseNetwork::init(&[5, 7, 3], Activation::Relu, 42).unwrap();
        let c = DenseNetwork::init(&[5, 7, 3], Activation::Relu, 43).unwrap();
        let bits = |n: &DenseNetwork| n.weights().iter().map(|w| w.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn init_variance_matches_fan_in_scaling() {
        let net = DenseNetwork::init(&[100, 100], Activation::Identity, 9).unwrap();
        let w = &net.weights()[..10_000];
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let expected = 1.0 / (3.0 * 100.0);
        assert!((var - expected).abs() / expected < 0.2, "var {var}");
        assert!(net.weights()[10_000..].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = DenseNetwork::zeros(&[3, 5, 2], Activation::Relu).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer() {
        let net = DenseNetwork::from_weights(&[1, 1], Activation::Relu, vec![1.0, 0.0], 0).unwrap();
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn hand_computed_two_layer_net() {
        // W1 = [[1, -1, 0.5], [2, 0, -1]], b1 = [0.5, 1, 0]
        // W2 = [[1], [2], [-3]], b2 = [0.25]
        // x = [1, 2]: z1 = [5.5, 0, -1.5] -> relu [5.5, 0, 0] -> 5.5 + 0.25
        let weights = vec![1.0, -1.0, 0.5, 2.0, 0.0, -1.0, 0.5, 1.0, 0.0, 1.0, 2.0, -3.0, 0.25];
        let net = DenseNetwork::from_weights(&[2, 3, 1], Activation::Relu, weights, 0).unwrap();
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![5.75]);
    }

    #[test]
    fn dimension_mismatch_is_descriptive() {
        let net = DenseNetwork::init(&[3, 2], Activation::Relu, 1).unwrap();
        let err = net.forward(&[1.0, 2.0]).unwrap_err();
        assert!(err.to_string().contains("expected 3, got 2"), "{err}");
    }

    #[test]
    fn zeroed_output_layer_gives_zero_output() {
        let mut net = DenseNetwork::init(&[4, 8, 2], Activation::Relu, 3).unwrap();
        net.zero_output_layer();
        assert_eq!(net.forward(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.0, 0.0]);
        assert!(net.weights()[..4 * 8].iter().any(|&w| w != 0.0));
    }

    #[test]
    fn taped_forward_matches_direct_forward() {
        let net = DenseNetwork::init(&[3, 6, 6, 2], Activation::leaky_relu(), 11).unwrap();
        let x = ndarray::array![[0.3, -1.2, 2.0], [1.0, 0.5, -0.5]];
        let direct = net.forward_batch(x.view()).unwrap();
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape, false);
        let input = tape.constant(x);
        let out = bound.forward(&mut tape, input);
        assert_eq!(tape.value(out), &direct);
    }
}
