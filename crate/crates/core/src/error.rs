//! Crate-wide error type.

use thiserror::Error;

/// Maximum number of characters in a mnemonic tag (lexical category plus
/// up to six feature characters).
pub const MAX_TAG_LEN: usize = 7;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // tagset
    #[error("empty tag")]
    EmptyTag,
    #[error("tag `{tag}` exceeds {MAX_TAG_LEN} characters")]
    TagTooLong { tag: String },
    #[error("tagset contains no tags")]
    EmptyTagset,

    // corpus
    #[error("{path}:{line}: expected `form<TAB>tag`, got `{content}`")]
    MalformedLine {
        path: String,
        line: usize,
        content: String,
    },
    #[error("corpus `{path}` contains no sentences")]
    EmptyCorpus { path: String },
    #[error("{path}:{line}: tag `{tag}` not in inventory")]
    UnknownTag {
        path: String,
        line: usize,
        tag: String,
    },
    #[error("fold id {fold} out of range for {n_folds} folds")]
    BadFoldId { fold: usize, n_folds: usize },
    #[error("fold assignment: {0}")]
    FoldAssignment(String),
    #[error("tag `{tag}` not covered by the shared inventory")]
    InventoryMismatch { tag: String },

    // lexicon
    #[error("{path}:{line}: unknown lexicon label `{label}`")]
    UnknownLabel {
        path: String,
        line: usize,
        label: String,
    },
    #[error("{path}:{line}: expected `form<TAB>label;label;...`, got `{content}`")]
    MalformedLexiconLine {
        path: String,
        line: usize,
        content: String,
    },

    // neural
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFiniteValue(String),
    #[error("empty input sequence")]
    EmptySequence,
    #[error("class index {index} out of range for {classes} classes")]
    BadClassIndex { index: usize, classes: usize },
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("non-finite loss at epoch {epoch}, sentence {sentence}")]
    NonFiniteLoss { epoch: usize, sentence: usize },

    // tagger
    #[error("model mode requires a coarse hint but none was supplied")]
    MissingCoarseHint,
    #[error("coarse hint supplied but model mode does not use one")]
    UnexpectedCoarseHint,
    #[error("empty sentence")]
    EmptySentence,
    #[error("model mode requires a lexicon but none was supplied")]
    MissingLexicon,

    // eval
    #[error("sentence {sentence}: {detail}")]
    AlignmentError { sentence: usize, detail: String },
    #[error("baseline accuracy of 100% leaves no errors to reduce")]
    DegenerateBaseline,

    // io / serialization
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("model file: {0}")]
    ModelFormat(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
