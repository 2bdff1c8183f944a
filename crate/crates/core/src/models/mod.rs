//! Operator surrogates: Parametric DeepONet with linear or nonlinear
//! decoder, vanilla DeepONet with concatenated inputs, and a plain MLP.

mod encoder;
mod frozen;
mod persist;
mod spec;

use ndarray::{s, Array2, ArrayView2};

pub use encoder::PositionalEncoder;
pub use frozen::FrozenSurrogate;
pub use persist::{load_model, save_model, ModelMeta};
pub use spec::{default_config, Architecture, CaseFamily, NetworkSpec};

use crate::diffcore::{Activation, BoundNetwork, DenseNetwork, Gradients, Matrix, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Decoder {
    /// Triple dot product, no trainable weights.
    Linear,
    /// Dense network applied to the full linear-decoder output vector.
    Nonlinear(DenseNetwork),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParametricDeepONet {
    pub branch: DenseNetwork,
    pub param_net: DenseNetwork,
    pub trunk: DenseNetwork,
    pub decoder: Decoder,
    pub encoder: PositionalEncoder,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VanillaDeepONet {
    pub branch: DenseNetwork,
    pub trunk: DenseNetwork,
    pub encoder: Option<PositionalEncoder>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpBaseline {
    pub net: DenseNetwork,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Body {
    Parametric(ParametricDeepONet),
    Vanilla(VanillaDeepONet),
    Mlp(MlpBaseline),
}

/// A surrogate mapping (force, normalized parameters) to a response on a
/// time grid. Responses are laid out channel-major: `c` blocks of `|t|`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardModel {
    spec: NetworkSpec,
    body: Body,
}

fn sub_seed(seed: u64, slot: u64) -> u64 {
    seed.wrapping_add(slot.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn relu_net(dims: &[usize], seed: u64) -> Result<DenseNetwork> {
    DenseNetwork::init(dims, Activation::Relu, seed)
}

impl ForwardModel {
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let encoder = spec
            .pe_order
            .map(|k| PositionalEncoder::new(k, spec.coordinate_period()))
            .transpose()?;
        let body = match spec.arch {
            Architecture::ParametricLd | Architecture::ParametricNd => {
                let decoder = if spec.arch == Architecture::ParametricNd {
                    Decoder::Nonlinear(relu_net(&spec.decoder_dims, sub_seed(seed, 3))?)
                } else {
                    Decoder::Linear
                };
                Body::Parametric(ParametricDeepONet {
                    branch: relu_net(&spec.branch_dims, sub_seed(seed, 0))?,
                    param_net: relu_net(&spec.param_dims, sub_seed(seed, 1))?,
                    trunk: relu_net(&spec.trunk_dims, sub_seed(seed, 2))?,
                    decoder,
                    encoder: encoder.ok_or_else(|| {
                        Error::InvalidConfig("parametric models need a positional-encoding order".into())
                    })?,
                })
            }
            Architecture::Vanilla => Body::Vanilla(VanillaDeepONet {
                branch: relu_net(&spec.branch_dims, sub_seed(seed, 0))?,
                trunk: relu_net(&spec.trunk_dims, sub_seed(seed, 2))?,
                encoder,
            }),
            Architecture::Mlp => Body::Mlp(MlpBaseline {
                net: relu_net(&spec.mlp_dims, sub_seed(seed, 4))?,
            }),
        };
        Ok(Self { spec: spec.clone(), body })
    }

    /// Reassembles a model from stored networks, checking them against `spec`.
    pub fn from_parts(spec: NetworkSpec, body: Body) -> Result<Self> {
        spec.validate()?;
        let model = Self { spec, body };
        let expected: Vec<(&str, &[usize])> = model.expected_dims();
        let actual = model.networks();
        let same = expected.len() == actual.len()
            && expected.iter().zip(&actual).all(|((n1, d1), (n2, net))| n1 == n2 && *d1 == net.layer_dims());
        if !same {
            return Err(Error::InvalidConfig("stored networks do not match the model spec".into()));
        }
        Ok(model)
    }

    fn expected_dims(&self) -> Vec<(&'static str, &[usize])> {
        let s = &self.spec;
        match s.arch {
            Architecture::ParametricLd => vec![("branch", &s.branch_dims), ("param", &s.param_dims), ("trunk", &s.trunk_dims)],
            Architecture::ParametricNd => vec![
                ("branch", &s.branch_dims),
                ("param", &s.param_dims),
                ("trunk", &s.trunk_dims),
                ("decoder", &s.decoder_dims),
            ],
            Architecture::Vanilla => vec![("branch", &s.branch_dims), ("trunk", &s.trunk_dims)],
            Architecture::Mlp => vec![("mlp", &s.mlp_dims)],
        }
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn arch(&self) -> Architecture {
        self.spec.arch
    }

    pub fn body(&self) -> &Body {
        &self.body
    }

    pub fn body_mut(&mut self) -> &mut Body {
        &mut self.body
    }

    pub fn encoder(&self) -> Option<&PositionalEncoder> {
        match &self.body {
            Body::Parametric(p) => Some(&p.encoder),
            Body::Vanilla(v) => v.encoder.as_ref(),
            Body::Mlp(_) => None,
        }
    }

    /// Named sub-networks in a fixed order.
    pub fn networks(&self) -> Vec<(&'static str, &DenseNetwork)> {
        match &self.body {
            Body::Parametric(p) => {
                let mut v = vec![("branch", &p.branch), ("param", &p.param_net), ("trunk", &p.trunk)];
                if let Decoder::Nonlinear(d) = &p.decoder {
                    v.push(("decoder", d));
                }
                v
            }
            Body::Vanilla(v) => vec![("branch", &v.branch), ("trunk", &v.trunk)],
            Body::Mlp(m) => vec![("mlp", &m.net)],
        }
    }

    pub fn networks_mut(&mut self) -> Vec<&mut DenseNetwork> {
        match &mut self.body {
            Body::Parametric(p) => {
                let mut v = vec![&mut p.branch, &mut p.param_net, &mut p.trunk];
                if let Decoder::Nonlinear(d) = &mut p.decoder {
                    v.push(d);
                }
                v
            }
            Body::Vanilla(v) => vec![&mut v.branch, &mut v.trunk],
            Body::Mlp(m) => vec![&mut m.net],
        }
    }

    pub fn param_count(&self) -> usize {
        self.networks().iter().map(|(_, n)| n.param_count()).sum()
    }

    /// Training-grid sample instants `i·Δt`, `i < r`.
    pub fn training_times(&self) -> Vec<f64> {
        (0..self.spec.resolution).map(|i| i as f64 * self.spec.dt).collect()
    }

    /// Whether the model can be queried on an arbitrary time grid.
    pub fn resolution_invariant(&self) -> bool {
        matches!(self.spec.arch, Architecture::ParametricLd | Architecture::Vanilla)
    }

    fn check_times(&self, times: &[f64]) -> Result<()> {
        if times.is_empty() {
            return Err(Error::InvalidArgument("time grid must not be empty".into()));
        }
        if !self.resolution_invariant() && times.len() != self.spec.resolution {
            return Err(Error::Unsupported(format!(
                "{} requires the training resolution {}, got {} points",
                self.spec.arch,
                self.spec.resolution,
                times.len()
            )));
        }
        Ok(())
    }

    /// Trunk coordinates: the time grid repeated once per channel, each copy
    /// shifted by one training-window length.
    pub fn coordinates(&self, times: &[f64]) -> Vec<f64> {
        let window = self.spec.resolution as f64 * self.spec.dt;
        (0..self.spec.channels)
            .flat_map(|ch| times.iter().map(move |&t| ch as f64 * window + t))
            .collect()
    }

    /// Trunk input rows for `times` (`c·|t|` rows); `None` for the MLP.
    pub fn trunk_input(&self, times: &[f64]) -> Option<Matrix> {
        if let Body::Mlp(_) = self.body {
            return None;
        }
        let coords = self.coordinates(times);
        Some(match self.encoder() {
            Some(enc) => enc.encode_all(&coords),
            None => Array2::from_shape_vec((coords.len(), 1), coords).expect("column of coordinates"),
        })
    }

    fn check_inputs(&self, forces: &ArrayView2<'_, f64>, mu: &ArrayView2<'_, f64>) -> Result<()> {
        let dim = |context: &str, expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    context: context.into(),
                    expected,
                    actual,
                })
            }
        };
        dim("force length", self.spec.resolution, forces.ncols())?;
        dim("parameter dimension", self.spec.param_dim, mu.ncols())?;
        dim("batch rows", forces.nrows(), mu.nrows())
    }

    /// Batched prediction on the training grid: `B x c·r`.
    pub fn predict(&self, forces: ArrayView2<'_, f64>, mu: ArrayView2<'_, f64>) -> Result<Matrix> {
        self.predict_at(forces, mu, &self.training_times())
    }

    /// Batched prediction on an arbitrary grid: `B x c·|t|`.
    pub fn predict_at(&self, forces: ArrayView2<'_, f64>, mu: ArrayView2<'_, f64>, times: &[f64]) -> Result<Matrix> {
        self.check_inputs(&forces, &mu)?;
        self.check_times(times)?;
        match &self.body {
            Body::Parametric(p) => {
                let trunk_in = self.trunk_input(times).expect("parametric models have a trunk");
                let tau = p.trunk.forward_batch(trunk_in.view())?;
                let coef = p.branch.forward_batch(forces)? * p.param_net.forward_batch(mu)?;
                let ld = coef.dot(&tau.t());
                match &p.decoder {
                    Decoder::Linear => Ok(ld),
                    Decoder::Nonlinear(d) => d.forward_batch(ld.view()),
                }
            }
            Body::Vanilla(v) => {
                let trunk_in = self.trunk_input(times).expect("vanilla models have a trunk");
                let tau = v.trunk.forward_batch(trunk_in.view())?;
                let input = ndarray::concatenate(ndarray::Axis(1), &[forces.view(), mu.view()]).expect("row counts checked");
                Ok(v.branch.forward_batch(input.view())?.dot(&tau.t()))
            }
            Body::Mlp(m) => {
                let input = ndarray::concatenate(ndarray::Axis(1), &[forces.view(), mu.view()]).expect("row counts checked");
                m.net.forward_batch(input.view())
            }
        }
    }

    /// Single-sample prediction reshaped to `[c, |t|]`.
    pub fn predict_single(&self, force: &[f64], mu: &[f64], times: &[f64]) -> Result<Matrix> {
        let f = ArrayView2::from_shape((1, force.len()), force).expect("row view");
        let m = ArrayView2::from_shape((1, mu.len()), mu).expect("row view");
        let flat = self.predict_at(f, m, times)?;
        Ok(flat
            .into_shape_with_order((self.spec.channels, times.len()))
            .expect("channel-major output"))
    }

    /// Parameter-net features for a batch of normalized parameters.
    pub fn param_features(&self, mu: ArrayView2<'_, f64>) -> Result<Matrix> {
        match &self.body {
            Body::Parametric(p) => p.param_net.forward_batch(mu),
            _ => Err(Error::Unsupported(format!("{} has no parameter net", self.spec.arch))),
        }
    }

    /// Places every sub-network on `tape`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundModel {
        let nets = self.networks().into_iter().map(|(_, n)| n.bind(tape, trainable)).collect();
        BoundModel {
            arch: self.spec.arch,
            nets,
        }
    }
}

/// A model whose networks live on a tape, in [`ForwardModel::networks`]
/// order.
#[derive(Clone, Debug)]
pub struct BoundModel {
    arch: Architecture,
    nets: Vec<BoundNetwork>,
}

impl BoundModel {
    /// `forces`: `B x r`, `mu`: `B x d`, `trunk_in`: the matrix from
    /// [`ForwardModel::trunk_input`] (ignored by the MLP). Returns `B x c·|t|`.
    pub fn forward(&self, tape: &mut Tape, forces: Var, mu: Var, trunk_in: Option<Var>) -> Var {
        match self.arch {
            Architecture::ParametricLd | Architecture::ParametricNd => {
                let b = self.nets[0].forward(tape, forces);
                let p = self.nets[1].forward(tape, mu);
                let tau = self.nets[2].forward(tape, trunk_in.expect("parametric forward needs trunk input"));
                let coef = tape.mul(b, p);
                let ld = tape.matmul_t(coef, tau);
                match self.nets.get(3) {
                    Some(decoder) => decoder.forward(tape, ld),
                    None => ld,
                }
            }
            Architecture::Vanilla => {
                let input = tape.concat_cols(forces, mu);
                let b = self.nets[0].forward(tape, input);
                let tau = self.nets[1].forward(tape, trunk_in.expect("vanilla forward needs trunk input"));
                tape.matmul_t(b, tau)
            }
            Architecture::Mlp => {
                let input = tape.concat_cols(forces, mu);
                self.nets[0].forward(tape, input)
            }
        }
    }

    /// Flat weight gradients, one vector per sub-network.
    pub fn gradients(&self, grads: &Gradients) -> Vec<Vec<f64>> {
        self.nets.iter().map(|n| n.gradient(grads)).collect()
    }
}

/// Row slice helper shared by training and inversion.
pub fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    let mut out = Array2::zeros((rows.len(), m.ncols()));
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&m.slice(s![r, ..]));
    }
    out
}

#[cfg(test)]
mod tests;
