//! Trains a small bidirectional-LSTM next-word predictor on a tokenized
//! corpus, probes its layerwise hidden representations, and quantifies how
//! strongly those representations cluster by the word class of the word
//! being predicted.
//!
//! The pipeline stages map onto the modules below:
//!
//! * [`corpus`]: text cleaning, vocabularies, CoNLL-U ingestion, and
//!   sliding-window sample construction
//! * [`synth`]: probabilistic-grammar corpus generation with ground-truth
//!   word classes
//! * [`embeddings`]: skip-gram word vectors (trainable in-repo, or loaded
//!   from word2vec text files)
//! * [`seqmodel`]: the BiLSTM stack + dense head, trained with Adam on MSE
//! * [`probe`]: layerwise activation capture as labelled point clouds
//! * [`geometry`]: distance matrices, classical MDS, and the GDV cluster
//!   separability value
//! * [`report`]: deterministic SVG scatter/curve rendering
//! * [`pipeline`]: end-to-end experiment orchestration with run manifests

pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod geometry;
pub mod pipeline;
pub mod probe;
pub mod report;
pub mod seqmodel;
pub mod synth;
pub mod tags;

pub use error::{LexError, Result};
