//! Weakly supervised sequence labeling: dictionary-based distant
//! supervision, a BiLSTM Partial-CRF tagger that tolerates incomplete
//! annotations, and a REINFORCE-based denoiser that removes false-positive
//! sentences from distantly labeled data.

pub mod corpus;
pub mod crf;
pub mod encoder;
pub mod lexicon;
pub mod pipeline;
pub mod policy;
pub mod synthetic;

pub use corpus::{
    AllowedLattice, Annotation, Dataset, LabelSet, Provenance, Record, Scheme, Sentence, Span,
    TagSequence,
};
pub use crf::{EmissionMatrix, PathScore, TransitionMatrix};
pub use encoder::{EmbeddingTable, EncoderParams, HiddenStates};
pub use pipeline::{Metrics, Model, TrainConfig};
pub use policy::{EpochRecord, PolicyParams, PolicyState};
