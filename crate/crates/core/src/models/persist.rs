use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Body, Decoder, ForwardModel, MlpBaseline, NetworkSpec, ParametricDeepONet, PositionalEncoder, VanillaDeepONet};
use crate::datagen::Normalization;
use crate::diffcore::checkpoint::{self, take_network};
use crate::error::{Error, Result};

/// Model section of a checkpoint descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub spec: NetworkSpec,
    pub encoder: Option<PositionalEncoder>,
    pub normalization: Normalization,
}

pub fn save_model(dir: &Path, model: &ForwardModel, normalization: &Normalization) -> Result<()> {
    let meta = ModelMeta {
        spec: model.spec().clone(),
        encoder: model.encoder().copied(),
        normalization: normalization.clone(),
    };
    checkpoint::save(dir, &meta, &model.networks())
}

pub fn load_model(dir: &Path) -> Result<(ForwardModel, ModelMeta)> {
    let (meta, mut nets): (ModelMeta, _) = checkpoint::load(dir)?;
    let spec = meta.spec.clone();
    spec.validate()?;
    let expected_encoder = spec
        .pe_order
        .map(|k| PositionalEncoder::new(k, spec.coordinate_period()))
        .transpose()?;
    if expected_encoder != meta.encoder {
        return Err(Error::MalformedManifest {
            path: dir.join(checkpoint::DESCRIPTOR_FILE),
            reason: "encoder settings disagree with the network spec".into(),
        });
    }
    let body = if spec.arch.is_parametric() {
        let branch = take_network(&mut nets, "branch")?;
        let param_net = take_network(&mut nets, "param")?;
        let trunk = take_network(&mut nets, "trunk")?;
        let decoder = if spec.decoder_dims.is_empty() {
            Decoder::Linear
        } else {
            Decoder::Nonlinear(take_network(&mut nets, "decoder")?)
        };
        Body::Parametric(ParametricDeepONet {
            branch,
            param_net,
            trunk,
            decoder,
            encoder: expected_encoder.expect("validated parametric spec has an encoder"),
        })
    } else if spec.arch == super::Architecture::Vanilla {
        Body::Vanilla(VanillaDeepONet {
            branch: take_network(&mut nets, "branch")?,
            trunk: take_network(&mut nets, "trunk")?,
            encoder: expected_encoder,
        })
    } else {
        Body::Mlp(MlpBaseline {
            net: take_network(&mut nets, "mlp")?,
        })
    };
    let model = ForwardModel::from_parts(spec, body)?;
    Ok((model, meta))
}
