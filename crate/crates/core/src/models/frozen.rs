use ndarray::ArrayView2;

use super::{select_rows, Body, Decoder, ForwardModel};
use crate::diffcore::{Matrix, Tape, Var};
use crate::error::{Error, Result};

/// Read-only view of a trained model for optimizing over its parameter
/// input. Everything that does not depend on `μ` (branch features of each
/// force and the trunk features of the training grid) is computed once.
pub struct FrozenSurrogate<'a> {
    model: &'a ForwardModel,
    forces: Matrix,
    trunk_in: Option<Matrix>,
    cached: Option<(Matrix, Matrix)>,
}

impl<'a> FrozenSurrogate<'a> {
    /// `forces` holds one excitation per row.
    pub fn new(model: &'a ForwardModel, forces: Matrix) -> Result<Self> {
        if forces.ncols() != model.spec().resolution {
            return Err(Error::DimensionMismatch {
                context: "force length".into(),
                expected: model.spec().resolution,
                actual: forces.ncols(),
            });
        }
        let trunk_in = model.trunk_input(&model.training_times());
        let cached = match model.body() {
            Body::Parametric(p) => {
                let branch = p.branch.forward_batch(forces.view())?;
                let tau = p.trunk.forward_batch(trunk_in.as_ref().expect("parametric trunk").view())?;
                Some((branch, tau))
            }
            _ => None,
        };
        Ok(Self {
            model,
            forces,
            trunk_in,
            cached,
        })
    }

    pub fn model(&self) -> &ForwardModel {
        self.model
    }

    pub fn len(&self) -> usize {
        self.forces.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.forces.nrows() == 0
    }

    /// Records the prediction for excitations `rows` at the normalized
    /// parameters held by `mu` (`|rows| x d`). Model weights enter as
    /// constants, so only `mu` can receive a gradient.
    pub fn record(&self, tape: &mut Tape, rows: &[usize], mu: Var) -> Var {
        match (self.model.body(), &self.cached) {
            (Body::Parametric(p), Some((branch, tau))) => {
                let b = tape.constant(select_rows(branch, rows));
                let tau = tape.constant(tau.clone());
                let pn = p.param_net.bind(tape, false);
                let feat = pn.forward(tape, mu);
                let coef = tape.mul(b, feat);
                let ld = tape.matmul_t(coef, tau);
                match &p.decoder {
                    Decoder::Linear => ld,
                    Decoder::Nonlinear(d) => d.bind(tape, false).forward(tape, ld),
                }
            }
            _ => {
                let bound = self.model.bind(tape, false);
                let f = tape.constant(select_rows(&self.forces, rows));
                let t = self.trunk_in.as_ref().map(|m| tape.constant(m.clone()));
                bound.forward(tape, f, mu, t)
            }
        }
    }

    /// Direct evaluation matching [`FrozenSurrogate::record`].
    pub fn predict(&self, rows: &[usize], mu: ArrayView2<'_, f64>) -> Result<Matrix> {
        if mu.nrows() != rows.len() || mu.ncols() != self.model.spec().param_dim {
            return Err(Error::DimensionMismatch {
                context: "parameter batch".into(),
                expected: rows.len() * self.model.spec().param_dim,
                actual: mu.len(),
            });
        }
        match (self.model.body(), &self.cached) {
            (Body::Parametric(p), Some((branch, tau))) => {
                let coef = select_rows(branch, rows) * p.param_net.forward_batch(mu)?;
                let ld = coef.dot(&tau.t());
                match &p.decoder {
                    Decoder::Linear => Ok(ld),
                    Decoder::Nonlinear(d) => d.forward_batch(ld.view()),
                }
            }
            _ => self.model.predict(select_rows(&self.forces, rows).view(), mu),
        }
    }
}
