//! Parameter sampling, Duffing case regions and dataset persistence.

mod dataset;
mod domain;
mod lhs;

pub use dataset::{
    duffing_normalization, generate_dataset, load_dataset, save_dataset, Dataset, DatasetMeta, Normalization,
    SampleTriple, DATA_FILE, DUFFING_CUBIC, MANIFEST_FILE,
};
pub use domain::{case_domain, CaseId, IntervalUnion, ParameterDomain, Region, Role, DAMPING_RANGE, STIFFNESS_RANGE};
pub use lhs::lhs_sample;
