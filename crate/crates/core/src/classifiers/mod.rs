//! Flat and hierarchical document classifiers over a shared embedding
//! table, with class-weighted cross-entropy and early-stopped training.
//!
//! Architectures: averaged-embedding MLP (`ft-mlp`), multi-kernel CNN
//! (`mf-cnn`), bidirectional GRU with attention (`bi-gru-att`) and the
//! two-level hierarchical attention network (`han`).

mod arch;
mod embed;
mod loss;
mod train;

use serde::{Deserialize, Serialize};

pub use arch::{
    ArchConfig, Architecture, ClassifierModel, DocumentCache, EncodedDoc, Encoder, EncoderCache, ForwardPass,
    HanEncoder, SentenceCache,
};
pub use embed::{EmbeddingTable, OOV_ID};
pub use loss::{class_weights, label_counts, weighted_ce_logit_grad, weighted_ce_loss, CeLoss, PROB_FLOOR};
pub use train::{evaluate_f1, train_classifier, TrainConfig, TrainHistory};

pub(crate) use train::{train_loop, Interleave};

/// A tokenised document (or tweet) with its language and class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub sentences: Vec<Vec<String>>,
    pub language: String,
    pub label: usize,
}

impl LabeledExample {
    pub fn new(sentences: Vec<Vec<String>>, language: impl Into<String>, label: usize) -> Self {
        LabeledExample {
            sentences,
            language: language.into(),
            label,
        }
    }

    pub fn tokens(&self) -> impl Iterator<Item = &String> {
        self.sentences.iter().flatten()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }
}
