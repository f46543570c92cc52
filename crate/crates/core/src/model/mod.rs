//! The translation model: parameters, encoder/decoder, training, decoding
//! and checkpoints.

pub mod beam;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod network;
pub mod params;
pub mod synthetic;
pub mod train;
pub mod vocab;

pub use beam::{beam_search, greedy_decode, Hypothesis};
pub use checkpoint::{Checkpoint, Vocabs};
pub use config::{AttentionName, ModelConfig};
pub use data::{Example, TextCorpus};
pub use network::{decode_step, encode, sentence_loss, Encoded, StepOutput};
pub use params::{GruWeights, ModelParams, ModelWeights};
pub use train::{token_accuracy, train, EpochRecord, TrainOptions, TrainOutcome};
pub use vocab::{Vocab, BOS, EOS, NUM_SPECIAL, PAD, UNK};
