//! Network checkpoints: a JSON descriptor plus a sidecar of little-endian
//! f64 parameters, networks concatenated in descriptor order.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::network::{Activation, DenseNetwork};
use crate::binio;
use crate::error::{Error, Result};

pub const DESCRIPTOR_FILE: &str = "checkpoint.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkDescriptor {
    pub name: String,
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
    pub param_count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Descriptor<M> {
    format_version: u32,
    meta: M,
    networks: Vec<NetworkDescriptor>,
    total_params: usize,
    crc64: u64,
}

/// Writes `networks` and a caller-defined metadata section under `dir`.
pub fn save<M: Serialize>(dir: &Path, meta: &M, networks: &[(&str, &DenseNetwork)]) -> Result<()> {
    binio::ensure_dir(dir)?;
    let mut flat = Vec::new();
    let mut descriptors = Vec::with_capacity(networks.len());
    for (name, net) in networks {
        flat.extend_from_slice(net.weights());
        descriptors.push(NetworkDescriptor {
            name: (*name).to_string(),
            layer_dims: net.layer_dims().to_vec(),
            activation: net.activation(),
            seed: net.seed(),
            param_count: net.param_count(),
        });
    }
    let bytes = binio::encode_f64s(&flat);
    let descriptor = Descriptor {
        format_version: FORMAT_VERSION,
        meta,
        networks: descriptors,
        total_params: flat.len(),
        crc64: binio::crc64(&bytes),
    };
    binio::write_file(&dir.join(WEIGHTS_FILE), &bytes)?;
    binio::write_json(&dir.join(DESCRIPTOR_FILE), &descriptor)
}

/// Loads a checkpoint written by [`save`], returning networks by name.
pub fn load<M: DeserializeOwned>(dir: &Path) -> Result<(M, Vec<(String, DenseNetwork)>)> {
    let path = dir.join(DESCRIPTOR_FILE);
    let descriptor: Descriptor<M> = binio::read_json(&path)?;
    let malformed = |reason: String| Error::MalformedManifest {
        path: path.clone(),
        reason,
    };
    if descriptor.format_version != FORMAT_VERSION {
        return Err(malformed(format!(
            "unsupported format version {}",
            descriptor.format_version
        )));
    }
    let counted: usize = descriptor.networks.iter().map(|n| n.param_count).sum();
    if counted != descriptor.total_params {
        return Err(malformed(format!(
            "network counts sum to {counted}, total_params says {}",
            descriptor.total_params
        )));
    }
    let flat = binio::read_checked(&dir.join(WEIGHTS_FILE), descriptor.total_params, descriptor.crc64)?;
    let mut offset = 0;
    let mut networks = Vec::with_capacity(descriptor.networks.len());
    for d in &descriptor.networks {
        let weights = flat[offset..offset + d.param_count].to_vec();
        offset += d.param_count;
        let net = DenseNetwork::from_weights(&d.layer_dims, d.activation, weights, d.seed)
            .map_err(|e| malformed(format!("network {}: {e}", d.name)))?;
        networks.push((d.name.clone(), net));
    }
    Ok((descriptor.meta, networks))
}

/// Removes the network called `name` from a loaded list.
pub fn take_network(networks: &mut Vec<(String, DenseNetwork)>, name: &str) -> Result<DenseNetwork> {
    let pos = networks
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| Error::InvalidArgument(format!("checkpoint has no network named {name:?}")))?;
    Ok(networks.remove(pos).1)
}
