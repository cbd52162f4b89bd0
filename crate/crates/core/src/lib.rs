//! A morphosyntactic tagging toolkit for fine-grained mnemonic tagsets.
//!
//! Three BiLSTM tagging models over a from-scratch trainable neural core:
//!
//! * a baseline using word embeddings plus a character-BiLSTM word
//!   summary,
//! * the same model extended with n-hot features from a morphological
//!   lexicon, and
//! * a stepwise model whose first pass predicts the coarse lexical
//!   category and feeds it, one-hot encoded, into the fine-grained
//!   second pass.
//!
//! The crate also covers corpus and lexicon ingestion, k-fold
//! cross-validation, model serialization, and error analysis
//! (known/unknown accuracy, error reduction, confusion-pair ranking).

pub mod corpus;
pub mod error;
pub mod eval;
pub mod lexicon;
pub mod neural;
pub mod tagger;
pub mod tagset;

pub use corpus::{load_corpus, FoldSource, Sentence, TaggedCorpus, Token, Vocabulary};
pub use error::{Error, Result};
pub use eval::{
    cross_validate, error_reduction, evaluate, top_confusions, CrossValidation, EvalReport,
};
pub use lexicon::{coverage, LabelInventory, MorphLexicon};
pub use tagger::{
    train, train_stepwise, Mode, ModelConfig, TaggerModel, TaggerParams, TrainTrace,
};
pub use tagset::{coarse_of, CoarseInventory, MnemonicTag, TagInventory};
