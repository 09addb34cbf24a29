//! Annotation and feature file formats, graph files, and a synthetic
//! dataset generator with its exact Bayes posteriors.

mod formats;
mod oracle;
mod synth;

pub use formats::{
    load_graph, load_take, load_take_dir, save_graph, save_take, take_blocks, write_atomic, AnnotationDoc,
    FeatureBlock, FeatureModality, ViewEntry, ANNOTATION_FILE, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use oracle::{bayes_ceilings, bayes_oracle, log_likelihoods, Observations, OraclePosteriors};
pub use synth::{generate_synthetic, GenerativeParams, SyntheticConfig, SyntheticDataset};
