//! Character-level cross-lingual alignment workbench.
//!
//! Trains small transformer encoders from scratch with character-level
//! masked language modeling on interleaved bilingual character corpora, then
//! measures how character embeddings align across alphabets through
//! cosine-similarity matrices and max-alignment accuracy. Includes synthetic
//! fake-language corpus generation, a skip-gram static-embedding baseline,
//! and heatmap/report exporters, all reproducible from three named seeds.

pub mod analysis;
pub mod baseline;
pub mod corpus;
pub mod model;
pub mod pipeline;
pub mod samples;
pub mod study;
pub mod tensor;
pub mod trainer;
pub mod vocab;
