//! Character-based Chinese word segmentation with a stacked bidirectional
//! LSTM tagger over character unigram and bigram embeddings.
//!
//! The crate covers the whole workflow: corpus loading and BIES encoding
//! ([`corpus`]), a small dense-tensor and optimizer layer ([`numerics`]),
//! the tagger with explicit backpropagation through time ([`model`]),
//! training, grid search and checkpoints ([`training`]), scoring and
//! significance testing ([`evaluation`]) and corpus audits ([`analysis`]).

pub mod analysis;
pub mod corpus;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod training;
