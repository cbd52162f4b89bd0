//! The three tagging models: a word+character BiLSTM baseline, the same
//! model with n-hot morphological-lexicon features, and the stepwise
//! coarse→fine model that feeds a first-pass lexical-category prediction
//! into the fine-grained tagger.
//!
//! Per token the input vector is the concatenation, in fixed order, of
//! the word embedding, the character-BiLSTM summary (final hidden state
//! of each direction over WORD-START, c₁…cₙ, WORD-END), the n-hot
//! lexicon vector when enabled, and the one-hot coarse-category hint
//! when enabled. A sentence BiLSTM, a feed-forward layer, and a softmax
//! output layer sit on top.

mod io;
mod train;

pub use train::{train, train_stepwise, EpochStats, StepwiseTrace, TrainTrace};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::lexicon::{LabelInventory, MorphLexicon};
use crate::neural::{argmax, BiEncoderParams, BiRun, Affine, Tensor};
use crate::tagset::{CoarseInventory, MnemonicTag, TagInventory};

/// Which input blocks the model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Word and character embeddings only.
    Baseline,
    /// Adds the n-hot morphological-lexicon vector.
    WithLexicon,
    /// Adds the one-hot coarse-category hint from a first-pass model.
    WithLexiconAndCoarse,
}

impl Mode {
    pub fn uses_lexicon(self) -> bool {
        !matches!(self, Mode::Baseline)
    }

    pub fn uses_coarse(self) -> bool {
        matches!(self, Mode::WithLexiconAndCoarse)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::WithLexicon => "dmii",
            Mode::WithLexiconAndCoarse => "lc",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "dmii" => Ok(Mode::WithLexicon),
            "lc" => Ok(Mode::WithLexiconAndCoarse),
            other => Err(format!(
                "unknown mode `{other}` (expected baseline, dmii, or lc)"
            )),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Model hyperparameters. Defaults follow the reference setup: 128/20
/// dimensional word/character embeddings, 61 lexicon and 10 coarse
/// dimensions, a 32-unit hidden layer, SGD at 0.13 with 5% per-epoch
/// decay for 30 epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub mode: Mode,
    pub word_dim: usize,
    pub char_dim: usize,
    /// Character-BiLSTM hidden size per direction.
    pub char_hidden: usize,
    /// Sentence-BiLSTM hidden size per direction.
    pub sent_hidden: usize,
    /// Feed-forward layer between the sentence BiLSTM and the output.
    pub ff_hidden: usize,
    /// Width of the lexicon block; set from the label inventory when a
    /// model is built.
    pub lexicon_dim: usize,
    /// Width of the coarse block; set from the coarse inventory when a
    /// model is built.
    pub coarse_dim: usize,
    pub epochs: usize,
    pub base_rate: f64,
    pub decay: f64,
    pub seed: u64,
    /// Use gold coarse tags instead of first-pass predictions while
    /// training the fine model.
    pub gold_coarse_hints: bool,
    /// Pass the coarse hint through a learned embedding table instead of
    /// the raw one-hot vector.
    pub embed_coarse: bool,
    /// Elementwise gradient clamp; off by default.
    pub grad_clip: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mode: Mode::Baseline,
            word_dim: 128,
            char_dim: 20,
            char_hidden: 20,
            sent_hidden: 32,
            ff_hidden: 32,
            lexicon_dim: 61,
            coarse_dim: 10,
            epochs: 30,
            base_rate: 0.13,
            decay: 0.05,
            seed: 1,
            gold_coarse_hints: false,
            embed_coarse: false,
            grad_clip: None,
        }
    }
}

impl ModelConfig {
    pub fn with_mode(mode: Mode) -> Self {
        ModelConfig {
            mode,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("word_dim", self.word_dim),
            ("char_dim", self.char_dim),
            ("char_hidden", self.char_hidden),
            ("sent_hidden", self.sent_hidden),
            ("ff_hidden", self.ff_hidden),
        ];
        for (name, value) in dims {
            if value == 0 {
                return Err(Error::DimensionMismatch(format!("{name} must be positive")));
            }
        }
        if self.mode.uses_lexicon() && self.lexicon_dim == 0 {
            return Err(Error::DimensionMismatch(
                "lexicon_dim must be positive in lexicon modes".into(),
            ));
        }
        if self.mode.uses_coarse() && self.coarse_dim == 0 {
            return Err(Error::DimensionMismatch(
                "coarse_dim must be positive in stepwise mode".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(Error::DimensionMismatch("epochs must be positive".into()));
        }
        if !(self.base_rate > 0.0) || !(0.0..1.0).contains(&self.decay) {
            return Err(Error::DimensionMismatch(format!(
                "bad optimizer settings: base_rate {}, decay {}",
                self.base_rate, self.decay
            )));
        }
        Ok(())
    }

    /// Width of the per-token input vector under this configuration.
    pub fn input_width(&self) -> usize {
        let mut width = self.word_dim + 2 * self.char_hidden;
        if self.mode.uses_lexicon() {
            width += self.lexicon_dim;
        }
        if self.mode.uses_coarse() {
            width += self.coarse_dim;
        }
        width
    }
}

/// All trainable tensors of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerParams {
    pub word_emb: Tensor,
    pub char_emb: Tensor,
    pub char_encoder: BiEncoderParams,
    pub sent_encoder: BiEncoderParams,
    pub hidden: Affine,
    pub output: Affine,
    pub coarse_emb: Option<Tensor>,
}

impl TaggerParams {
    fn init(
        config: &ModelConfig,
        n_words: usize,
        n_chars: usize,
        n_tags: usize,
        n_coarse: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        TaggerParams {
            word_emb: Tensor::xavier(n_words, config.word_dim, rng),
            char_emb: Tensor::xavier(n_chars, config.char_dim, rng),
            char_encoder: BiEncoderParams::init(config.char_dim, config.char_hidden, rng),
            sent_encoder: BiEncoderParams::init(config.input_width(), config.sent_hidden, rng),
            hidden: Affine::init(2 * config.sent_hidden, config.ff_hidden, rng),
            output: Affine::init(config.ff_hidden, n_tags, rng),
            coarse_emb: config
                .embed_coarse
                .then(|| Tensor::xavier(n_coarse, config.coarse_dim, rng)),
        }
    }

    pub(crate) fn zeros_like(&self) -> Self {
        let mut zeroed = self.clone();
        zeroed.visit_mut(&mut |_, t| t.fill(0.0));
        zeroed
    }

    /// Visits every parameter tensor with a stable canonical name, in a
    /// fixed order shared by serialization, gradient checks, and updates.
    pub fn visit(&self, f: &mut dyn FnMut(String, &Tensor)) {
        f("word_emb".into(), &self.word_emb);
        f("char_emb".into(), &self.char_emb);
        self.char_encoder.visit("char_enc", f);
        self.sent_encoder.visit("sent_enc", f);
        self.hidden.visit("hidden", f);
        self.output.visit("output", f);
        if let Some(ce) = &self.coarse_emb {
            f("coarse_emb".into(), ce);
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor)) {
        f("word_emb".into(), &mut self.word_emb);
        f("char_emb".into(), &mut self.char_emb);
        self.char_encoder.visit_mut("char_enc", f);
        self.sent_encoder.visit_mut("sent_enc", f);
        self.hidden.visit_mut("hidden", f);
        self.output.visit_mut("output", f);
        if let Some(ce) = &mut self.coarse_emb {
            f("coarse_emb".into(), ce);
        }
    }

    pub(crate) fn for_each_pair(&mut self, other: &Self, f: &mut dyn FnMut(&mut Tensor, &Tensor)) {
        f(&mut self.word_emb, &other.word_emb);
        f(&mut self.char_emb, &other.char_emb);
        self.char_encoder.for_each_pair(&other.char_encoder, f);
        self.sent_encoder.for_each_pair(&other.sent_encoder, f);
        self.hidden.for_each_pair(&other.hidden, f);
        self.output.for_each_pair(&other.output, f);
        if let (Some(a), Some(b)) = (&mut self.coarse_emb, &other.coarse_emb) {
            f(a, b);
        }
    }

    pub fn n_parameters(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        let mut bad = None;
        self.visit(&mut |name, t| {
            if bad.is_none() && !t.is_finite() {
                bad = Some(name);
            }
        });
        match bad {
            Some(name) => Err(Error::NonFiniteGradient(name)),
            None => Ok(()),
        }
    }
}

/// A tagging model: configuration, vocabulary, inventories, parameters,
/// and (for the stepwise mode) the embedded first-pass coarse model.
#[derive(Debug, Clone)]
pub struct TaggerModel {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    /// Output inventory. For a first-pass coarse model these are the
    /// single-character category tags.
    pub tags: TagInventory,
    /// Hint space for the stepwise mode.
    pub coarse: CoarseInventory,
    pub labels: Option<LabelInventory>,
    pub params: TaggerParams,
    pub coarse_model: Option<Box<TaggerModel>>,
}

impl TaggerModel {
    /// Builds a freshly initialized model. `lexicon_dim` and `coarse_dim`
    /// are pinned to the supplied inventories.
    pub fn new(
        mut config: ModelConfig,
        vocab: Vocabulary,
        tags: TagInventory,
        labels: Option<LabelInventory>,
    ) -> Result<Self> {
        let coarse = CoarseInventory::from_fine(&tags);
        if config.mode.uses_lexicon() {
            match &labels {
                Some(l) => config.lexicon_dim = l.len(),
                None => return Err(Error::MissingLexicon),
            }
        }
        if config.mode.uses_coarse() && !config.embed_coarse {
            config.coarse_dim = coarse.len();
        }
        config.validate()?;

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = TaggerParams::init(
            &config,
            vocab.n_words(),
            vocab.n_chars(),
            tags.len(),
            coarse.len(),
            &mut rng,
        );
        Ok(TaggerModel {
            config,
            vocab,
            tags,
            coarse,
            labels,
            params,
            coarse_model: None,
        })
    }

    /// Character-BiLSTM summary of a form: final forward and backward
    /// hidden states over WORD-START, c₁…cₙ, WORD-END.
    fn char_summary(&self, form: &str) -> Vec<f64> {
        let char_inputs: Vec<Vec<f64>> = self
            .vocab
            .char_ids(form)
            .into_iter()
            .map(|id| self.params.char_emb.row(id).to_vec())
            .collect();
        let run = self.params.char_encoder.run(&char_inputs);
        self.params.char_encoder.final_summary(&run)
    }

    fn check_lexicon<'a>(
        &self,
        lexicon: Option<&'a MorphLexicon>,
    ) -> Result<Option<&'a MorphLexicon>> {
        if !self.config.mode.uses_lexicon() {
            return Ok(None);
        }
        let lexicon = lexicon.ok_or(Error::MissingLexicon)?;
        if lexicon.n_labels() != self.config.lexicon_dim {
            return Err(Error::DimensionMismatch(format!(
                "lexicon has {} labels but model expects {}",
                lexicon.n_labels(),
                self.config.lexicon_dim
            )));
        }
        Ok(Some(lexicon))
    }

    /// Builds the per-token input vector: word embedding, character
    /// summary, then the n-hot lexicon block and the coarse-hint block
    /// when the mode calls for them.
    pub fn encode_token(
        &self,
        lexicon: Option<&MorphLexicon>,
        form: &str,
        coarse_hint: Option<usize>,
    ) -> Result<Vec<f64>> {
        match (self.config.mode.uses_coarse(), coarse_hint) {
            (true, None) => return Err(Error::MissingCoarseHint),
            (false, Some(_)) => return Err(Error::UnexpectedCoarseHint),
            _ => {}
        }
        let lexicon = self.check_lexicon(lexicon)?;

        let mut input = Vec::with_capacity(self.config.input_width());
        input.extend_from_slice(self.params.word_emb.row(self.vocab.word_id(form)));
        input.extend_from_slice(&self.char_summary(form));
        if let Some(lexicon) = lexicon {
            input.extend_from_slice(&lexicon.encode_nhot(form));
        }
        if let Some(hint) = coarse_hint {
            match &self.params.coarse_emb {
                Some(table) => input.extend_from_slice(table.row(hint)),
                None => {
                    let mut one_hot = vec![0.0; self.config.coarse_dim];
                    one_hot[hint] = 1.0;
                    input.extend_from_slice(&one_hot);
                }
            }
        }
        debug_assert_eq!(input.len(), self.config.input_width());
        Ok(input)
    }

    /// Coarse hints for a sentence, produced by the embedded first-pass
    /// model's own predictions.
    pub(crate) fn predict_hints(
        &self,
        lexicon: Option<&MorphLexicon>,
        forms: &[&str],
    ) -> Result<Vec<usize>> {
        let coarse_model = self.coarse_model.as_ref().ok_or(Error::MissingCoarseHint)?;
        let coarse_tags = coarse_model.tag_sentence(lexicon, forms)?;
        coarse_tags
            .iter()
            .map(|t| {
                self.coarse
                    .index_of(t.category())
                    .ok_or_else(|| Error::InventoryMismatch {
                        tag: t.as_str().to_string(),
                    })
            })
            .collect()
    }

    /// Per-token logits for a sentence, with hints supplied explicitly
    /// (stepwise mode only).
    pub(crate) fn sentence_logits(
        &self,
        lexicon: Option<&MorphLexicon>,
        forms: &[&str],
        hints: Option<&[usize]>,
    ) -> Result<Vec<Vec<f64>>> {
        if forms.is_empty() {
            return Err(Error::EmptySentence);
        }
        let inputs: Vec<Vec<f64>> = forms
            .iter()
            .enumerate()
            .map(|(t, form)| self.encode_token(lexicon, form, hints.map(|h| h[t])))
            .collect::<Result<_>>()?;
        let run: BiRun = self.params.sent_encoder.run(&inputs);
        let outputs = self.params.sent_encoder.outputs(&run, inputs.len());
        Ok(outputs
            .iter()
            .map(|o| {
                let act: Vec<f64> = self.params.hidden.forward(o).iter().map(|z| z.tanh()).collect();
                self.params.output.forward(&act)
            })
            .collect())
    }

    /// Tags a sentence by per-token argmax (lowest index wins ties). In
    /// stepwise mode the embedded coarse model is run first and its
    /// predictions feed the fine pass.
    pub fn tag_sentence(
        &self,
        lexicon: Option<&MorphLexicon>,
        forms: &[&str],
    ) -> Result<Vec<MnemonicTag>> {
        Ok(self.tag_sentence_detailed(lexicon, forms)?.tags)
    }

    /// Like [`tag_sentence`](Self::tag_sentence) but also reports the
    /// coarse hints consumed by the fine pass.
    pub fn tag_sentence_detailed(
        &self,
        lexicon: Option<&MorphLexicon>,
        forms: &[&str],
    ) -> Result<TaggedSentence> {
        if forms.is_empty() {
            return Err(Error::EmptySentence);
        }
        let hints = if self.config.mode.uses_coarse() {
            Some(self.predict_hints(lexicon, forms)?)
        } else {
            None
        };
        let logits = self.sentence_logits(lexicon, forms, hints.as_deref())?;
        let tags = logits
            .iter()
            .map(|l| self.tags.get(argmax(l)).expect("argmax in range").clone())
            .collect();
        Ok(TaggedSentence { tags, hints })
    }

    /// Metadata summary used by the `inspect` command.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        out.push_str(&format!("mode\t{}\n", c.mode));
        out.push_str(&format!(
            "dims\tword={} char={} char_hidden={} sent_hidden={} ff={}\n",
            c.word_dim, c.char_dim, c.char_hidden, c.sent_hidden, c.ff_hidden
        ));
        if c.mode.uses_lexicon() {
            out.push_str(&format!("lexicon_dim\t{}\n", c.lexicon_dim));
        }
        if c.mode.uses_coarse() {
            out.push_str(&format!("coarse_dim\t{}\n", c.coarse_dim));
        }
        out.push_str(&format!("input_width\t{}\n", c.input_width()));
        out.push_str(&format!("tags\t{}\n", self.tags.len()));
        out.push_str(&format!("coarse_categories\t{}\n", self.coarse.len()));
        if let Some(labels) = &self.labels {
            out.push_str(&format!("labels\t{}\n", labels.len()));
        }
        out.push_str(&format!(
            "vocab\twords={} chars={}\n",
            self.vocab.n_words(),
            self.vocab.n_chars()
        ));
        out.push_str(&format!("parameters\t{}\n", self.params.n_parameters()));
        out.push_str(&format!("seed\t{}\n", c.seed));
        out.push_str(&format!(
            "coarse_submodel\t{}\n",
            if self.coarse_model.is_some() { "yes" } else { "no" }
        ));
        out
    }
}

/// Tagging output with the coarse hints the fine pass consumed (stepwise
/// mode only).
#[derive(Debug, Clone)]
pub struct TaggedSentence {
    pub tags: Vec<MnemonicTag>,
    pub hints: Option<Vec<usize>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Sentence, TaggedCorpus, Token};

    pub(crate) fn tiny_corpus(pairs: &[&[(&str, &str)]]) -> TaggedCorpus {
        let sentences = pairs
            .iter()
            .map(|s| Sentence {
                tokens: s
                    .iter()
                    .map(|(form, tag)| Token {
                        form: form.to_string(),
                        tag: MnemonicTag::parse(tag).unwrap(),
                    })
                    .collect(),
            })
            .collect();
        TaggedCorpus::from_sentences(sentences, 1).unwrap()
    }

    fn paper_default_model(mode: Mode) -> TaggerModel {
        let corpus = tiny_corpus(&[&[("orð", "nken"), ("fer", "sfg3en")]]);
        let vocab = Vocabulary::build(&corpus);
        // Tagset with 10 distinct first characters, 61-label inventory.
        let tags = TagInventory::build(
            (0..10).flat_map(|c| {
                let cat = (b'a' + c as u8) as char;
                (0..3).map(move |i| format!("{cat}x{i}"))
            }),
        )
        .unwrap();
        let labels =
            LabelInventory::build((0..61).map(|i| format!("l{i}")).collect::<Vec<_>>()).unwrap();
        TaggerModel::new(ModelConfig::with_mode(mode), vocab, tags, Some(labels)).unwrap()
    }

    #[test]
    fn encode_widths_match_paper_dimensions() {
        let labels =
            LabelInventory::build((0..61).map(|i| format!("l{i}")).collect::<Vec<_>>()).unwrap();

        let model = paper_default_model(Mode::Baseline);
        let v = model.encode_token(None, "orð", None).unwrap();
        assert_eq!(v.len(), 168);

        let model = paper_default_model(Mode::WithLexicon);
        let lexicon = MorphLexicon::new(&labels);
        let v = model.encode_token(Some(&lexicon), "orð", None).unwrap();
        assert_eq!(v.len(), 229);

        let model = paper_default_model(Mode::WithLexiconAndCoarse);
        let v = model.encode_token(Some(&lexicon), "orð", Some(3)).unwrap();
        assert_eq!(v.len(), 239);

        // Unknown words take the same path and the same width.
        let v = model
            .encode_token(Some(&lexicon), "allsendisóþekkt", Some(0))
            .unwrap();
        assert_eq!(v.len(), 239);
    }

    #[test]
    fn hint_presence_must_match_mode() {
        let labels =
            LabelInventory::build((0..61).map(|i| format!("l{i}")).collect::<Vec<_>>()).unwrap();
        let lexicon = MorphLexicon::new(&labels);

        let model = paper_default_model(Mode::Baseline);
        assert!(matches!(
            model.encode_token(None, "orð", Some(1)),
            Err(Error::UnexpectedCoarseHint)
        ));

        let model = paper_default_model(Mode::WithLexiconAndCoarse);
        assert!(matches!(
            model.encode_token(Some(&lexicon), "orð", None),
            Err(Error::MissingCoarseHint)
        ));
    }

    #[test]
    fn lexicon_modes_require_a_lexicon() {
        let model = paper_default_model(Mode::WithLexicon);
        assert!(matches!(
            model.encode_token(None, "orð", None),
            Err(Error::MissingLexicon)
        ));
    }

    #[test]
    fn zeroed_output_layer_predicts_index_zero() {
        let corpus = tiny_corpus(&[&[("a", "t0"), ("b", "t1")]]);
        let vocab = Vocabulary::build(&corpus);
        let tags = TagInventory::build(["t0", "t1", "t2"]).unwrap();
        let mut model = TaggerModel::new(
            ModelConfig {
                word_dim: 4,
                char_dim: 3,
                char_hidden: 3,
                sent_hidden: 4,
                ff_hidden: 3,
                ..ModelConfig::with_mode(Mode::Baseline)
            },
            vocab,
            tags,
            None,
        )
        .unwrap();
        model.params.output.w.fill(0.0);
        model.params.output.b.fill(0.0);
        let tags = model.tag_sentence(None, &["a", "b", "zzz"]).unwrap();
        assert!(tags.iter().all(|t| t.as_str() == "t0"));
    }

    #[test]
    fn empty_sentence_rejected() {
        let model = paper_default_model(Mode::Baseline);
        assert!(matches!(
            model.tag_sentence(None, &[]),
            Err(Error::EmptySentence)
        ));
    }

    #[test]
    fn unknown_word_sentence_tags_without_error() {
        let model = paper_default_model(Mode::Baseline);
        let tags = model
            .tag_sentence(None, &["víðáttumikill", "því", "úlfaldi"])
            .unwrap();
        assert_eq!(tags.len(), 3);
    }

    #[test]
    fn identical_seeds_give_identical_parameters() {
        let a = paper_default_model(Mode::Baseline);
        let b = paper_default_model(Mode::Baseline);
        assert_eq!(a.params, b.params);

        let corpus = tiny_corpus(&[&[("orð", "nken"), ("fer", "sfg3en")]]);
        let vocab = Vocabulary::build(&corpus);
        let tags = TagInventory::build(["nken", "sfg3en"]).unwrap();
        let c = TaggerModel::new(
            ModelConfig {
                seed: 2,
                ..ModelConfig::default()
            },
            vocab,
            tags,
            None,
        )
        .unwrap();
        assert_ne!(a.params.word_emb, c.params.word_emb);
    }
}
