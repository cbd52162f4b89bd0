//! Tagged-corpus ingestion, fold management, and vocabulary construction.
//!
//! Corpus files are UTF-8 with one `form<TAB>tag` pair per line and a blank
//! line between sentences; the final sentence may omit its trailing blank
//! line. Fold ids come either from a fold file (one integer per sentence,
//! corpus order) or from round-robin assignment.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tagset::{MnemonicTag, TagInventory};

/// One token: a surface form and its gold tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub form: String,
    pub tag: MnemonicTag,
}

/// A non-empty sequence of tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn forms(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.form.as_str()).collect()
    }
}

/// Where fold ids come from when loading a corpus.
#[derive(Debug, Clone)]
pub enum FoldSource {
    /// Single fold 0 for every sentence; for plain training runs where
    /// cross-validation is not in play.
    None,
    /// `fold_of[i] = i % k`.
    RoundRobin(usize),
    /// Explicit fold file, one integer per sentence in corpus order.
    File(std::path::PathBuf),
}

/// Sentences with per-sentence fold assignments. A fold of `None` marks a
/// sentence that never enters a test fold (used for training-set
/// augmentation).
#[derive(Debug, Clone)]
pub struct TaggedCorpus {
    pub sentences: Vec<Sentence>,
    folds: Vec<Option<usize>>,
    n_folds: usize,
}

impl TaggedCorpus {
    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn n_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn n_tokens(&self) -> usize {
        self.sentences.iter().map(|s| s.len()).sum()
    }

    /// Fold id of sentence `i`; `None` for never-test sentences.
    pub fn fold_of(&self, i: usize) -> Option<usize> {
        self.folds[i]
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }

    /// Builds a corpus directly from sentences with round-robin folds.
    /// Intended for tests and synthetic data.
    pub fn from_sentences(sentences: Vec<Sentence>, n_folds: usize) -> Result<Self> {
        let n = sentences.len();
        if n_folds == 0 || n_folds > n.max(1) {
            return Err(Error::FoldAssignment(format!(
                "cannot assign {n} sentences round-robin to {n_folds} folds"
            )));
        }
        let folds = (0..n).map(|i| Some(i % n_folds)).collect();
        Ok(TaggedCorpus {
            sentences,
            folds,
            n_folds,
        })
    }

    /// Splits off fold `test_fold`: the second corpus holds exactly the
    /// sentences assigned to that fold, the first everything else.
    pub fn folds_split(&self, test_fold: usize) -> Result<(TaggedCorpus, TaggedCorpus)> {
        if test_fold >= self.n_folds {
            return Err(Error::BadFoldId {
                fold: test_fold,
                n_folds: self.n_folds,
            });
        }
        let mut train = TaggedCorpus {
            sentences: Vec::new(),
            folds: Vec::new(),
            n_folds: self.n_folds,
        };
        let mut test = TaggedCorpus {
            sentences: Vec::new(),
            folds: Vec::new(),
            n_folds: self.n_folds,
        };
        for (sentence, &fold) in self.sentences.iter().zip(&self.folds) {
            let target = if fold == Some(test_fold) {
                &mut test
            } else {
                &mut train
            };
            target.sentences.push(sentence.clone());
            target.folds.push(fold);
        }
        Ok((train, test))
    }

    /// A copy with every tag rewritten, folds preserved. Used to project
    /// a fine-tagged corpus onto the coarse category tagset.
    pub fn map_tags(&self, f: impl Fn(&MnemonicTag) -> MnemonicTag) -> TaggedCorpus {
        let sentences = self
            .sentences
            .iter()
            .map(|s| Sentence {
                tokens: s
                    .tokens
                    .iter()
                    .map(|t| Token {
                        form: t.form.clone(),
                        tag: f(&t.tag),
                    })
                    .collect(),
            })
            .collect();
        TaggedCorpus {
            sentences,
            folds: self.folds.clone(),
            n_folds: self.n_folds,
        }
    }

    /// Appends `extra` to `self` for training-set augmentation. Every tag
    /// of `extra` must be covered by `inventory`; the appended sentences
    /// are marked never-test so they cannot leak into evaluation folds.
    pub fn augment_training(&self, extra: &TaggedCorpus, inventory: &TagInventory) -> Result<Self> {
        for token in extra.tokens() {
            if !inventory.contains(token.tag.as_str()) {
                return Err(Error::InventoryMismatch {
                    tag: token.tag.as_str().to_string(),
                });
            }
        }
        let mut sentences = self.sentences.clone();
        let mut folds = self.folds.clone();
        sentences.extend(extra.sentences.iter().cloned());
        folds.extend(std::iter::repeat(None).take(extra.sentences.len()));
        Ok(TaggedCorpus {
            sentences,
            folds,
            n_folds: self.n_folds,
        })
    }
}

/// Loads a corpus file, assigning folds from `folds`. When `inventory` is
/// given, every tag must already be in it (the closed-tagset training
/// contract).
pub fn load_corpus(
    path: impl AsRef<Path>,
    folds: &FoldSource,
    inventory: Option<&TagInventory>,
) -> Result<TaggedCorpus> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::io(&display, e))?;

    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim_end_matches('\r');
        if line.is_empty() {
            if !tokens.is_empty() {
                sentences.push(Sentence {
                    tokens: std::mem::take(&mut tokens),
                });
            }
            continue;
        }
        let mut parts = line.split('\t');
        let (form, tag) = match (parts.next(), parts.next(), parts.next()) {
            (Some(form), Some(tag), None) if !form.is_empty() => (form, tag.trim_end()),
            _ => {
                return Err(Error::MalformedLine {
                    path: display,
                    line: lineno + 1,
                    content: line.to_string(),
                })
            }
        };
        let tag = MnemonicTag::parse(tag)?;
        if let Some(inv) = inventory {
            if !inv.contains(tag.as_str()) {
                return Err(Error::UnknownTag {
                    path: display,
                    line: lineno + 1,
                    tag: tag.as_str().to_string(),
                });
            }
        }
        tokens.push(Token {
            form: form.to_string(),
            tag,
        });
    }
    if !tokens.is_empty() {
        sentences.push(Sentence { tokens });
    }
    if sentences.is_empty() {
        return Err(Error::EmptyCorpus { path: display });
    }

    let n = sentences.len();
    let (fold_ids, n_folds) = match folds {
        FoldSource::None => (vec![Some(0); n], 1),
        FoldSource::RoundRobin(k) => {
            if *k == 0 || *k > n {
                return Err(Error::FoldAssignment(format!(
                    "cannot assign {n} sentences round-robin to {k} folds"
                )));
            }
            ((0..n).map(|i| Some(i % k)).collect(), *k)
        }
        FoldSource::File(fold_path) => {
            let ids = load_fold_file(fold_path, n)?;
            let k = ids.iter().copied().max().unwrap() + 1;
            let mut seen = vec![false; k];
            for &id in &ids {
                seen[id] = true;
            }
            if let Some(missing) = seen.iter().position(|s| !s) {
                return Err(Error::FoldAssignment(format!(
                    "fold ids do not cover [0, {k}): fold {missing} is empty"
                )));
            }
            (ids.into_iter().map(Some).collect(), k)
        }
    };

    Ok(TaggedCorpus {
        sentences,
        folds: fold_ids,
        n_folds,
    })
}

fn load_fold_file(path: &Path, n_sentences: usize) -> Result<Vec<usize>> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::io(&display, e))?;
    let mut ids = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let id: usize = line.parse().map_err(|_| {
            Error::FoldAssignment(format!("{display}:{}: bad fold id `{line}`", lineno + 1))
        })?;
        ids.push(id);
    }
    if ids.len() != n_sentences {
        return Err(Error::FoldAssignment(format!(
            "{display}: {} fold ids for {n_sentences} sentences",
            ids.len()
        )));
    }
    Ok(ids)
}

/// Reserved vocabulary slot for unseen word forms.
pub const UNK_WORD: usize = 0;
/// Reserved character slots: unseen character, word-initial marker,
/// word-final marker.
pub const UNK_CHAR: usize = 0;
pub const WORD_START: usize = 1;
pub const WORD_END: usize = 2;

/// Word and character index maps built from a training corpus. Reserved
/// ids are allocated first; observed items follow in sorted order so the
/// mapping is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    chars: Vec<char>,
    word_index: HashMap<String, usize>,
    char_index: HashMap<char, usize>,
}

impl Vocabulary {
    pub fn build(train: &TaggedCorpus) -> Self {
        let mut word_set = BTreeSet::new();
        let mut char_set = BTreeSet::new();
        for token in train.tokens() {
            word_set.insert(token.form.clone());
            char_set.extend(token.form.chars());
        }
        Self::from_sets(word_set, char_set)
    }

    fn from_sets(word_set: BTreeSet<String>, char_set: BTreeSet<char>) -> Self {
        let words: Vec<String> = word_set.into_iter().collect();
        let chars: Vec<char> = char_set.into_iter().collect();
        let word_index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i + 1))
            .collect();
        let char_index = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i + 3))
            .collect();
        Vocabulary {
            words,
            chars,
            word_index,
            char_index,
        }
    }

    /// Rebuilds from the observed item lists, e.g. after deserialization.
    pub(crate) fn from_parts(words: Vec<String>, chars: Vec<char>) -> Self {
        Self::from_sets(words.into_iter().collect(), chars.into_iter().collect())
    }

    /// Total word slots including the reserved unknown id.
    pub fn n_words(&self) -> usize {
        self.words.len() + 1
    }

    /// Total character slots including the three reserved ids.
    pub fn n_chars(&self) -> usize {
        self.chars.len() + 3
    }

    pub fn word_id(&self, form: &str) -> usize {
        self.word_index.get(form).copied().unwrap_or(UNK_WORD)
    }

    pub fn contains_word(&self, form: &str) -> bool {
        self.word_index.contains_key(form)
    }

    pub fn char_id(&self, c: char) -> usize {
        self.char_index.get(&c).copied().unwrap_or(UNK_CHAR)
    }

    /// Character-id sequence for a form, framed by the word-initial and
    /// word-final markers.
    pub fn char_ids(&self, form: &str) -> Vec<usize> {
        let mut ids = Vec::with_capacity(form.chars().count() + 2);
        ids.push(WORD_START);
        ids.extend(form.chars().map(|c| self.char_id(c)));
        ids.push(WORD_END);
        ids
    }

    /// Observed words in index order (reserved slot excluded).
    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Observed characters in index order (reserved slots excluded).
    pub fn chars(&self) -> &[char] {
        &self.chars
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(pairs: &[(&str, &str)]) -> Sentence {
        Sentence {
            tokens: pairs
                .iter()
                .map(|(form, tag)| Token {
                    form: form.to_string(),
                    tag: MnemonicTag::parse(tag).unwrap(),
                })
                .collect(),
        }
    }

    fn write_tmp(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.tsv");
        std::fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn loads_two_sentences() {
        let (_dir, path) = write_tmp("maður\tnken\nfer\tsfg3en\n\nhún\tfpven\nsá\tsfg3eþ\nhann\tfpkeo\n");
        let corpus = load_corpus(&path, &FoldSource::None, None).unwrap();
        assert_eq!(corpus.n_sentences(), 2);
        assert_eq!(corpus.n_tokens(), 5);
        assert_eq!(corpus.sentences[0].tokens[0].form, "maður");
        assert_eq!(corpus.sentences[1].tokens[2].tag.as_str(), "fpkeo");
    }

    #[test]
    fn missing_tag_column_is_malformed() {
        let (_dir, path) = write_tmp("maður\n");
        match load_corpus(&path, &FoldSource::None, None) {
            Err(Error::MalformedLine { line, content, .. }) => {
                assert_eq!(line, 1);
                assert_eq!(content, "maður");
            }
            other => panic!("expected MalformedLine, got {other:?}"),
        }
    }

    #[test]
    fn extra_column_is_malformed() {
        let (_dir, path) = write_tmp("maður\tnken\textra\n");
        assert!(matches!(
            load_corpus(&path, &FoldSource::None, None),
            Err(Error::MalformedLine { .. })
        ));
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let (_dir, path) = write_tmp("");
        assert!(matches!(
            load_corpus(&path, &FoldSource::None, None),
            Err(Error::EmptyCorpus { .. })
        ));
    }

    #[test]
    fn unknown_tag_rejected_when_inventory_given() {
        let (_dir, path) = write_tmp("maður\tnken\n");
        let inv = TagInventory::build(["c"]).unwrap();
        match load_corpus(&path, &FoldSource::None, Some(&inv)) {
            Err(Error::UnknownTag { tag, line, .. }) => {
                assert_eq!(tag, "nken");
                assert_eq!(line, 1);
            }
            other => panic!("expected UnknownTag, got {other:?}"),
        }
    }

    #[test]
    fn final_sentence_may_omit_blank_line() {
        let (_dir, path) = write_tmp("a\tx\n\nb\ty");
        let corpus = load_corpus(&path, &FoldSource::None, None).unwrap();
        assert_eq!(corpus.n_sentences(), 2);
    }

    #[test]
    fn round_robin_balances_sentence_counts() {
        let sentences: Vec<Sentence> = (0..100).map(|i| sent(&[(&format!("w{i}"), "x")])).collect();
        let corpus = TaggedCorpus::from_sentences(sentences, 10).unwrap();
        for fold in 0..10 {
            let (train, test) = corpus.folds_split(fold).unwrap();
            assert_eq!(test.n_sentences(), 10);
            assert_eq!(train.n_sentences(), 90);
        }
    }

    #[test]
    fn bad_fold_id_rejected() {
        let corpus = TaggedCorpus::from_sentences(vec![sent(&[("a", "x")]); 20], 10).unwrap();
        assert!(matches!(
            corpus.folds_split(11),
            Err(Error::BadFoldId { fold: 11, .. })
        ));
    }

    #[test]
    fn folds_partition_the_corpus() {
        let sentences: Vec<Sentence> = (0..37)
            .map(|i| sent(&[(&format!("w{i}"), "x"), (&format!("v{i}"), "y")]))
            .collect();
        let corpus = TaggedCorpus::from_sentences(sentences.clone(), 5).unwrap();
        let mut seen = vec![0usize; corpus.n_sentences()];
        for fold in 0..5 {
            let (train, test) = corpus.folds_split(fold).unwrap();
            assert_eq!(train.n_sentences() + test.n_sentences(), corpus.n_sentences());
            for s in &test.sentences {
                let idx = sentences.iter().position(|orig| orig == s).unwrap();
                seen[idx] += 1;
            }
        }
        // Union of all test folds covers the corpus exactly once.
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn fold_file_assigns_ids() {
        let dir = tempfile::tempdir().unwrap();
        let corpus_path = dir.path().join("c.tsv");
        std::fs::write(&corpus_path, "a\tx\n\nb\ty\n\nc\tz\n").unwrap();
        let fold_path = dir.path().join("folds.txt");
        std::fs::write(&fold_path, "1\n0\n1\n").unwrap();
        let corpus = load_corpus(&corpus_path, &FoldSource::File(fold_path), None).unwrap();
        assert_eq!(corpus.n_folds(), 2);
        assert_eq!(corpus.fold_of(0), Some(1));
        assert_eq!(corpus.fold_of(1), Some(0));
    }

    #[test]
    fn fold_file_with_gap_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let corpus_path = dir.path().join("c.tsv");
        std::fs::write(&corpus_path, "a\tx\n\nb\ty\n").unwrap();
        let fold_path = dir.path().join("folds.txt");
        std::fs::write(&fold_path, "0\n2\n").unwrap();
        assert!(matches!(
            load_corpus(&corpus_path, &FoldSource::File(fold_path), None),
            Err(Error::FoldAssignment(_))
        ));
    }

    #[test]
    fn augment_marks_extra_never_test() {
        let base = TaggedCorpus::from_sentences(
            (0..9).map(|i| sent(&[(&format!("b{i}"), "x")])).collect(),
            3,
        )
        .unwrap();
        let extra = TaggedCorpus::from_sentences(
            (0..5).map(|i| sent(&[(&format!("e{i}"), "x")])).collect(),
            1,
        )
        .unwrap();
        let inv = TagInventory::build(["x"]).unwrap();
        let combined = base.augment_training(&extra, &inv).unwrap();
        assert_eq!(combined.n_sentences(), 14);
        for fold in 0..3 {
            let (train, test) = combined.folds_split(fold).unwrap();
            assert_eq!(test.n_sentences(), 3);
            assert_eq!(train.n_sentences(), 11);
            assert!(test.sentences.iter().all(|s| s.tokens[0].form.starts_with('b')));
        }
    }

    #[test]
    fn augment_rejects_foreign_tags() {
        let base = TaggedCorpus::from_sentences(vec![sent(&[("a", "x")])], 1).unwrap();
        let extra = TaggedCorpus::from_sentences(vec![sent(&[("b", "q")])], 1).unwrap();
        let inv = TagInventory::build(["x"]).unwrap();
        assert!(matches!(
            base.augment_training(&extra, &inv),
            Err(Error::InventoryMismatch { tag }) if tag == "q"
        ));
    }

    #[test]
    fn augment_grows_vocabulary_monotonically() {
        let base = TaggedCorpus::from_sentences(vec![sent(&[("ab", "x"), ("ba", "y")])], 1).unwrap();
        let extra = TaggedCorpus::from_sentences(vec![sent(&[("cd", "x")])], 1).unwrap();
        let inv = TagInventory::build(["x", "y"]).unwrap();
        let combined = base.augment_training(&extra, &inv).unwrap();
        assert!(Vocabulary::build(&combined).n_words() >= Vocabulary::build(&base).n_words());
    }

    #[test]
    fn vocabulary_reserved_ids_and_lookup() {
        let corpus = TaggedCorpus::from_sentences(vec![sent(&[("ab", "x"), ("ba", "y")])], 1).unwrap();
        let vocab = Vocabulary::build(&corpus);
        assert_eq!(vocab.n_words(), 3); // UNK + ab + ba
        assert_eq!(vocab.n_chars(), 5); // UNK + START + END + a + b
        assert_eq!(vocab.word_id("ab"), 1);
        assert_eq!(vocab.word_id("ba"), 2);
        assert_eq!(vocab.word_id("unseen"), UNK_WORD);
        assert!(vocab.char_id('a') >= 3);
        assert_eq!(vocab.char_id('z'), UNK_CHAR);
        assert_eq!(vocab.char_ids("ab")[0], WORD_START);
        assert_eq!(*vocab.char_ids("ab").last().unwrap(), WORD_END);
    }

    #[test]
    fn vocabulary_is_deterministic() {
        let corpus = TaggedCorpus::from_sentences(
            (0..30).map(|i| sent(&[(&format!("w{}", 29 - i), "x")])).collect(),
            2,
        )
        .unwrap();
        let a = Vocabulary::build(&corpus);
        let b = Vocabulary::build(&corpus);
        assert_eq!(a, b);
    }
}
