//! Morphological-lexicon loading and n-hot feature encoding.
//!
//! The lexicon maps word forms to sets of feature labels drawn from a
//! closed label inventory. A form's features are encoded as an n-hot
//! vector over that inventory; forms absent from the lexicon encode as
//! the all-zero vector.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::corpus::{TaggedCorpus, Vocabulary};
use crate::error::{Error, Result};

/// The closed set of lexicon feature labels. File order defines indices.
#[derive(Debug, Clone)]
pub struct LabelInventory {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelInventory {
    pub fn build<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let labels: Vec<String> = labels
            .into_iter()
            .map(|s| s.as_ref().to_string())
            .collect();
        if labels.is_empty() {
            return Err(Error::EmptyTagset);
        }
        let mut index = HashMap::new();
        for (i, label) in labels.iter().enumerate() {
            if index.insert(label.clone(), i).is_some() {
                return Err(Error::FoldAssignment(format!(
                    "duplicate lexicon label `{label}`"
                )));
            }
        }
        Ok(LabelInventory { labels, index })
    }

    /// Loads a labels file: one label per line, order defines indices.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::build(text.lines().map(|l| l.trim_end()).filter(|l| !l.is_empty()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn get(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(|s| s.as_str())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Word form → set of label indices. A form appearing in several
/// paradigms holds the union of all its labels.
#[derive(Debug, Clone)]
pub struct MorphLexicon {
    n_labels: usize,
    entries: HashMap<String, BTreeSet<usize>>,
    case_fallback: bool,
}

impl MorphLexicon {
    pub fn new(labels: &LabelInventory) -> Self {
        MorphLexicon {
            n_labels: labels.len(),
            entries: HashMap::new(),
            case_fallback: true,
        }
    }

    /// Loads lexicon lines of the form `form<TAB>label;label;...`,
    /// merging repeated forms by set union.
    pub fn load(path: impl AsRef<Path>, labels: &LabelInventory) -> Result<Self> {
        let mut lexicon = MorphLexicon::new(labels);
        lexicon.merge_file(path, labels)?;
        Ok(lexicon)
    }

    /// Merges another lexicon file into this one. Loading the same file
    /// twice changes nothing.
    pub fn merge_file(&mut self, path: impl AsRef<Path>, labels: &LabelInventory) -> Result<()> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|e| Error::io(&display, e))?;
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (form, label_str) = match (parts.next(), parts.next(), parts.next()) {
                (Some(form), Some(labels), None) if !form.is_empty() && !labels.is_empty() => {
                    (form, labels)
                }
                _ => {
                    return Err(Error::MalformedLexiconLine {
                        path: display,
                        line: lineno + 1,
                        content: line.to_string(),
                    })
                }
            };
            let entry = self.entries.entry(form.to_string()).or_default();
            for label in label_str.split(';').map(|l| l.trim()) {
                if label.is_empty() {
                    continue;
                }
                match labels.index_of(label) {
                    Some(i) => {
                        entry.insert(i);
                    }
                    None => {
                        return Err(Error::UnknownLabel {
                            path: display,
                            line: lineno + 1,
                            label: label.to_string(),
                        })
                    }
                }
            }
        }
        Ok(())
    }

    /// Whether lookups fall back to the lowercased form when the exact
    /// form is absent. On by default so sentence-initial capitalization
    /// does not zero out lexicon features.
    pub fn set_case_fallback(&mut self, enabled: bool) {
        self.case_fallback = enabled;
    }

    pub fn case_fallback(&self) -> bool {
        self.case_fallback
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn n_forms(&self) -> usize {
        self.entries.len()
    }

    /// Label-index set for a form, honoring the case fallback.
    pub fn labels_for(&self, form: &str) -> Option<&BTreeSet<usize>> {
        if let Some(set) = self.entries.get(form) {
            return Some(set);
        }
        if self.case_fallback {
            let lower = form.to_lowercase();
            if lower != form {
                return self.entries.get(&lower);
            }
        }
        None
    }

    pub fn contains(&self, form: &str) -> bool {
        self.labels_for(form).is_some()
    }

    /// Encodes a form as an n-hot vector over the label inventory.
    /// Out-of-lexicon forms encode as all zeros.
    pub fn encode_nhot(&self, form: &str) -> Vec<f64> {
        let mut vector = vec![0.0; self.n_labels];
        if let Some(set) = self.labels_for(form) {
            for &i in set {
                vector[i] = 1.0;
            }
        }
        vector
    }

    #[cfg(test)]
    pub(crate) fn insert_for_tests(&mut self, form: &str, label_indices: &[usize]) {
        self.entries
            .entry(form.to_string())
            .or_default()
            .extend(label_indices.iter().copied());
    }
}

/// Token-level coverage of a corpus by a training vocabulary and a
/// lexicon. The three fractions partition the tokens and sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub total_tokens: usize,
    pub in_vocab: usize,
    pub lexicon_only: usize,
    pub unknown: usize,
}

impl CoverageReport {
    pub fn in_vocab_fraction(&self) -> f64 {
        self.in_vocab as f64 / self.total_tokens as f64
    }

    pub fn lexicon_only_fraction(&self) -> f64 {
        self.lexicon_only as f64 / self.total_tokens as f64
    }

    pub fn unknown_fraction(&self) -> f64 {
        self.unknown as f64 / self.total_tokens as f64
    }
}

/// Classifies each token of `corpus` as in-vocabulary, lexicon-only, or
/// unknown (in neither).
pub fn coverage(
    lexicon: &MorphLexicon,
    corpus: &TaggedCorpus,
    vocab: &Vocabulary,
) -> CoverageReport {
    let mut report = CoverageReport {
        total_tokens: 0,
        in_vocab: 0,
        lexicon_only: 0,
        unknown: 0,
    };
    for token in corpus.tokens() {
        report.total_tokens += 1;
        if vocab.contains_word(&token.form) {
            report.in_vocab += 1;
        } else if lexicon.contains(&token.form) {
            report.lexicon_only += 1;
        } else {
            report.unknown += 1;
        }
    }
    report
}
