//! Generative model: dictionaries, support and value laws, semirandom batches.

mod batch;
mod dictionary;
mod marginals;
mod nonident;
mod support;
mod value;

pub use batch::{sample_batch, BatchSource, ModelSource, Provenance, SampleBatch, SemirandomSource, SemirandomSpec, SparseCode};
pub use dictionary::{
    binomial, dictionary_quality, gen_dictionary, subset_isometry_delta, Dictionary, DictionaryKind,
    DictionaryQuality, RIP_EXACT_LIMIT,
};
pub use marginals::{marginal_estimates, Marginals};
pub use nonident::{gen_nonidentifiable_pair, NonIdentifiablePair, HADAMARD};
pub use support::{max_conditional_inclusion, ResolvedSupport, SupportKind, SupportModel};
pub use value::ValueModel;
