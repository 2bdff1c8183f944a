use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "parametric-ld")]
    ParametricLd,
    #[serde(rename = "parametric-nd")]
    ParametricNd,
    #[serde(rename = "vanilla")]
    Vanilla,
    #[serde(rename = "mlp")]
    Mlp,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [Self::ParametricLd, Self::ParametricNd, Self::Vanilla, Self::Mlp];

    pub fn name(self) -> &'static str {
        match self {
            Self::ParametricLd => "parametric-ld",
            Self::ParametricNd => "parametric-nd",
            Self::Vanilla => "vanilla",
            Self::Mlp => "mlp",
        }
    }

    pub fn is_parametric(self) -> bool {
        matches!(self, Self::ParametricLd | Self::ParametricNd)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown architecture '{s}' (expected parametric-ld, parametric-nd, vanilla or mlp)")))
    }
}

/// Which family of systems a configuration targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseFamily {
    /// Single-degree-of-freedom Duffing data: `r = 200`, `dim(μ) = 2`.
    Sdof,
    /// Multi-channel configuration: `r = 200`, `c = 4`, `dim(μ) = 6`.
    Mdof,
}

impl FromStr for CaseFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sdof" => Ok(Self::Sdof),
            "mdof" => Ok(Self::Mdof),
            _ => Err(Error::InvalidArgument(format!("unknown case family '{s}' (expected sdof or mdof)"))),
        }
    }
}

/// Layer dimensions and encoding settings for one surrogate.
///
/// Unused sub-networks have empty dimension lists: `param_dims` and
/// `decoder_dims` for non-parametric models, everything but `mlp_dims` for
/// the MLP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub arch: Architecture,
    pub resolution: usize,
    pub channels: usize,
    pub param_dim: usize,
    /// Sample spacing of the training grid; sets the encoder period `L`.
    pub dt: f64,
    #[serde(default)]
    pub branch_dims: Vec<usize>,
    #[serde(default)]
    pub param_dims: Vec<usize>,
    #[serde(default)]
    pub trunk_dims: Vec<usize>,
    #[serde(default)]
    pub decoder_dims: Vec<usize>,
    #[serde(default)]
    pub mlp_dims: Vec<usize>,
    /// Positional-encoding order; `None` feeds raw time to the trunk.
    #[serde(default)]
    pub pe_order: Option<usize>,
}

impl NetworkSpec {
    /// Span of the (channel-extended) trunk coordinate domain.
    pub fn coordinate_period(&self) -> f64 {
        (self.channels * self.resolution) as f64 * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.resolution == 0 || self.channels == 0 || self.param_dim == 0 {
            return bad("resolution, channels and param_dim must be positive".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        let nets: [(&str, &Vec<usize>); 5] = [
            ("branch", &self.branch_dims),
            ("param", &self.param_dims),
            ("trunk", &self.trunk_dims),
            ("decoder", &self.decoder_dims),
            ("mlp", &self.mlp_dims),
        ];
        for (name, dims) in nets {
            if !dims.is_empty() && (dims.len() < 2 || dims.contains(&0)) {
                return bad(format!("{name} dims {dims:?} need at least two positive entries"));
            }
        }
        let last = |d: &Vec<usize>| d.last().copied().unwrap_or(0);
        let first = |d: &Vec<usize>| d.first().copied().unwrap_or(0);
        let trunk_in = self.pe_order.map_or(1, |k| 2 * k);
        let (r, c, d) = (self.resolution, self.channels, self.param_dim);
        match self.arch {
            Architecture::ParametricLd | Architecture::ParametricNd => {
                if first(&self.branch_dims) != r || first(&self.param_dims) != d || first(&self.trunk_dims) != trunk_in {
                    return bad(format!(
                        "parametric inputs must be branch {r}, param {d}, trunk {trunk_in}; got {:?} / {:?} / {:?}",
                        self.branch_dims, self.param_dims, self.trunk_dims
                    ));
                }
                let n = last(&self.branch_dims);
                if last(&self.param_dims) != n || last(&self.trunk_dims) != n {
                    return bad("branch, parameter and trunk nets must share their output width".into());
                }
                let nd = self.arch == Architecture::ParametricNd;
                if nd && c != 1 {
                    return Err(Error::Unsupported("the nonlinear decoder is only available for single-channel data".into()));
                }
                if nd != !self.decoder_dims.is_empty() {
                    return bad("decoder dims are required for parametric-nd and forbidden otherwise".into());
                }
                if nd && (first(&self.decoder_dims) != r || last(&self.decoder_dims) != r) {
                    return bad(format!("decoder must map length {r} to length {r}, got {:?}", self.decoder_dims));
                }
            }
            Architecture::Vanilla => {
                if first(&self.branch_dims) != r + d || first(&self.trunk_dims) != trunk_in {
                    return bad(format!("vanilla inputs must be branch {}, trunk {trunk_in}", r + d));
                }
                if last(&self.branch_dims) != last(&self.trunk_dims) {
                    return bad("branch and trunk nets must share their output width".into());
                }
            }
            Architecture::Mlp => {
                if first(&self.mlp_dims) != r + d || last(&self.mlp_dims) != c * r {
                    return bad(format!("mlp must map {} inputs to {} outputs, got {:?}", r + d, c * r, self.mlp_dims));
                }
            }
        }
        Ok(())
    }
}

fn widths(input: usize, width: usize, layers_after_input: usize) -> Vec<usize> {
    std::iter::once(input).chain(std::iter::repeat_n(width, layers_after_input)).collect()
}

/// Tuned layer sizes for each architecture and system family.
pub fn default_config(arch: Architecture, family: CaseFamily) -> Result<NetworkSpec> {
    let mut spec = NetworkSpec {
        arch,
        resolution: 200,
        channels: 1,
        param_dim: 2,
        dt: 0.01,
        branch_dims: vec![],
        param_dims: vec![],
        trunk_dims: vec![],
        decoder_dims: vec![],
        mlp_dims: vec![],
        pe_order: None,
    };
    match family {
        CaseFamily::Sdof => match arch {
            Architecture::ParametricLd => {
                spec.branch_dims = widths(200, 200, 5);
                spec.param_dims = widths(2, 200, 4);
                spec.trunk_dims = widths(20, 200, 4);
                spec.pe_order = Some(10);
            }
            Architecture::ParametricNd => {
                spec.branch_dims = vec![200, 300, 300];
                spec.param_dims = vec![2, 300, 300];
                spec.trunk_dims = vec![20, 300, 300];
                spec.decoder_dims = vec![200, 200, 200];
                spec.pe_order = Some(10);
            }
            Architecture::Vanilla => {
                spec.branch_dims = vec![202, 300, 300, 300, 200];
                // Raw time input; the output width follows the branch net.
                spec.trunk_dims = vec![1, 300, 300, 300, 200];
            }
            Architecture::Mlp => spec.mlp_dims = vec![202, 400, 400, 200],
        },
        CaseFamily::Mdof => {
            spec.channels = 4;
            spec.param_dim = 6;
            match arch {
                Architecture::ParametricLd => {
                    spec.branch_dims = widths(200, 300, 4);
                    spec.param_dims = widths(6, 300, 4);
                    spec.trunk_dims = widths(100, 300, 4);
                    spec.pe_order = Some(50);
                }
                Architecture::ParametricNd => {
                    return Err(Error::Unsupported(
                        "no nonlinear decoder is defined for the multi-channel family".into(),
                    ))
                }
                Architecture::Vanilla => {
                    spec.branch_dims = vec![206, 300, 300, 300, 200];
                    spec.trunk_dims = vec![100, 300, 300, 300, 200];
                    spec.pe_order = Some(50);
                }
                Architecture::Mlp => spec.mlp_dims = vec![206, 500, 500, 500, 500, 500, 500, 800],
            }
        }
    }
    spec.validate()?;
    Ok(spec)
}
