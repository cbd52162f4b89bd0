//! Training: cached forward passes, reverse-mode backward passes, and
//! the per-sentence SGD loop with seeded shuffling and per-epoch decay.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Sentence, TaggedCorpus, Vocabulary};
use crate::error::{Error, Result};
use crate::lexicon::{LabelInventory, MorphLexicon};
use crate::neural::{add_assign, argmax, softmax_xent, BiRun, Sgd};
use crate::tagger::{Mode, ModelConfig, TaggerModel, TaggerParams};
use crate::tagset::{CoarseInventory, MnemonicTag, TagInventory};

/// Everything one forward pass computes, kept for backpropagation.
pub(crate) struct SentenceForward {
    word_ids: Vec<usize>,
    char_ids: Vec<Vec<usize>>,
    char_inputs: Vec<Vec<Vec<f64>>>,
    char_runs: Vec<BiRun>,
    inputs: Vec<Vec<f64>>,
    sent_run: BiRun,
    sent_outputs: Vec<Vec<f64>>,
    ff_acts: Vec<Vec<f64>>,
    pub logits: Vec<Vec<f64>>,
    hints: Option<Vec<usize>>,
}

impl TaggerModel {
    pub(crate) fn forward_cached(
        &self,
        lexicon: Option<&MorphLexicon>,
        forms: &[&str],
        hints: Option<Vec<usize>>,
    ) -> Result<SentenceForward> {
        if forms.is_empty() {
            return Err(Error::EmptySentence);
        }
        let lexicon = self.check_lexicon(lexicon)?;
        match (self.config.mode.uses_coarse(), &hints) {
            (true, None) => return Err(Error::MissingCoarseHint),
            (false, Some(_)) => return Err(Error::UnexpectedCoarseHint),
            _ => {}
        }

        let n = forms.len();
        let mut word_ids = Vec::with_capacity(n);
        let mut char_ids = Vec::with_capacity(n);
        let mut char_inputs = Vec::with_capacity(n);
        let mut char_runs = Vec::with_capacity(n);
        let mut inputs = Vec::with_capacity(n);

        for (t, form) in forms.iter().enumerate() {
            let word_id = self.vocab.word_id(form);
            let ids = self.vocab.char_ids(form);
            let embeds: Vec<Vec<f64>> = ids
                .iter()
                .map(|&id| self.params.char_emb.row(id).to_vec())
                .collect();
            let run = self.params.char_encoder.run(&embeds);
            let summary = self.params.char_encoder.final_summary(&run);

            let mut input = Vec::with_capacity(self.config.input_width());
            input.extend_from_slice(self.params.word_emb.row(word_id));
            input.extend_from_slice(&summary);
            if let Some(lexicon) = lexicon {
                input.extend_from_slice(&lexicon.encode_nhot(form));
            }
            if let Some(hints) = &hints {
                match &self.params.coarse_emb {
                    Some(table) => input.extend_from_slice(table.row(hints[t])),
                    None => {
                        let mut one_hot = vec![0.0; self.config.coarse_dim];
                        one_hot[hints[t]] = 1.0;
                        input.extend_from_slice(&one_hot);
                    }
                }
            }

            word_ids.push(word_id);
            char_ids.push(ids);
            char_inputs.push(embeds);
            char_runs.push(run);
            inputs.push(input);
        }

        let sent_run = self.params.sent_encoder.run(&inputs);
        let sent_outputs = self.params.sent_encoder.outputs(&sent_run, n);
        let ff_acts: Vec<Vec<f64>> = sent_outputs
            .iter()
            .map(|o| self.params.hidden.forward(o).iter().map(|z| z.tanh()).collect())
            .collect();
        let logits: Vec<Vec<f64>> = ff_acts.iter().map(|a| self.params.output.forward(a)).collect();

        Ok(SentenceForward {
            word_ids,
            char_ids,
            char_inputs,
            char_runs,
            inputs,
            sent_run,
            sent_outputs,
            ff_acts,
            logits,
            hints,
        })
    }

    /// Backpropagates the summed token cross-entropy into `grads`,
    /// scaled by `loss_scale`. Returns (loss, correct tokens).
    pub(crate) fn backward_into(
        &self,
        fwd: &SentenceForward,
        golds: &[usize],
        grads: &mut TaggerParams,
        loss_scale: f64,
    ) -> Result<(f64, usize)> {
        let n = fwd.inputs.len();
        debug_assert_eq!(golds.len(), n);
        let config = &self.config;

        let mut loss_sum = 0.0;
        let mut correct = 0;
        let mut d_outputs = vec![vec![0.0; 2 * config.sent_hidden]; n];
        for t in 0..n {
            let (loss, probs) = softmax_xent(&fwd.logits[t], golds[t])?;
            loss_sum += loss;
            if argmax(&fwd.logits[t]) == golds[t] {
                correct += 1;
            }
            let mut d_logits = probs;
            d_logits[golds[t]] -= 1.0;
            if loss_scale != 1.0 {
                d_logits.iter_mut().for_each(|v| *v *= loss_scale);
            }

            let mut d_act = vec![0.0; config.ff_hidden];
            self.params
                .output
                .backward(&fwd.ff_acts[t], &d_logits, &mut grads.output, &mut d_act);
            // tanh'
            for (d, a) in d_act.iter_mut().zip(&fwd.ff_acts[t]) {
                *d *= 1.0 - a * a;
            }
            self.params
                .hidden
                .backward(&fwd.sent_outputs[t], &d_act, &mut grads.hidden, &mut d_outputs[t]);
        }

        let mut d_inputs = vec![vec![0.0; config.input_width()]; n];
        self.params.sent_encoder.backward_run(
            &fwd.inputs,
            &fwd.sent_run,
            &d_outputs,
            &mut grads.sent_encoder,
            &mut d_inputs,
        );

        let word_dim = config.word_dim;
        let summary_end = word_dim + 2 * config.char_hidden;
        for t in 0..n {
            let d_input = &d_inputs[t];
            add_assign(
                grads.word_emb.row_mut(fwd.word_ids[t]),
                &d_input[..word_dim],
            );

            let mut d_chars = vec![vec![0.0; config.char_dim]; fwd.char_ids[t].len()];
            self.params.char_encoder.backward_final(
                &fwd.char_inputs[t],
                &fwd.char_runs[t],
                &d_input[word_dim..summary_end],
                &mut grads.char_encoder,
                &mut d_chars,
            );
            for (pos, &char_id) in fwd.char_ids[t].iter().enumerate() {
                add_assign(grads.char_emb.row_mut(char_id), &d_chars[pos]);
            }

            // The n-hot lexicon block is a constant input. The coarse
            // block only carries gradient when it is a learned embedding.
            if let (Some(table), Some(hints)) = (&mut grads.coarse_emb, &fwd.hints) {
                let offset = config.input_width() - config.coarse_dim;
                add_assign(table.row_mut(hints[t]), &d_input[offset..]);
            }
        }

        Ok((loss_sum, correct))
    }

    fn gold_indices(&self, sentence: &Sentence) -> Result<Vec<usize>> {
        sentence
            .tokens
            .iter()
            .map(|tok| {
                self.tags
                    .index_of(tok.tag.as_str())
                    .ok_or_else(|| Error::InventoryMismatch {
                        tag: tok.tag.as_str().to_string(),
                    })
            })
            .collect()
    }

    /// Coarse hints for one training sentence: gold categories under
    /// teacher forcing, otherwise the embedded first-pass model's
    /// predictions.
    fn training_hints(
        &self,
        lexicon: Option<&MorphLexicon>,
        sentence: &Sentence,
    ) -> Result<Option<Vec<usize>>> {
        if !self.config.mode.uses_coarse() {
            return Ok(None);
        }
        if self.config.gold_coarse_hints {
            let hints = sentence
                .tokens
                .iter()
                .map(|tok| {
                    self.coarse.index_of(tok.tag.category()).ok_or_else(|| {
                        Error::InventoryMismatch {
                            tag: tok.tag.as_str().to_string(),
                        }
                    })
                })
                .collect::<Result<Vec<usize>>>()?;
            return Ok(Some(hints));
        }
        let forms = sentence.forms();
        Ok(Some(self.predict_hints(lexicon, &forms)?))
    }

    /// Summed token cross-entropy of one sentence under the current
    /// parameters.
    pub fn sentence_loss(
        &self,
        lexicon: Option<&MorphLexicon>,
        sentence: &Sentence,
    ) -> Result<f64> {
        let golds = self.gold_indices(sentence)?;
        let hints = self.training_hints(lexicon, sentence)?;
        let fwd = self.forward_cached(lexicon, &sentence.forms(), hints)?;
        let mut loss = 0.0;
        for (logits, &gold) in fwd.logits.iter().zip(&golds) {
            loss += softmax_xent(logits, gold)?.0;
        }
        Ok(loss)
    }

    /// Reverse-mode gradients of [`sentence_loss`](Self::sentence_loss)
    /// for every parameter tensor of this model.
    pub fn sentence_gradients(
        &self,
        lexicon: Option<&MorphLexicon>,
        sentence: &Sentence,
    ) -> Result<(f64, TaggerParams)> {
        let golds = self.gold_indices(sentence)?;
        let hints = self.training_hints(lexicon, sentence)?;
        let fwd = self.forward_cached(lexicon, &sentence.forms(), hints)?;
        let mut grads = self.params.zeros_like();
        let (loss, _) = self.backward_into(&fwd, &golds, &mut grads, 1.0)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteValue("sentence loss".into()));
        }
        grads.check_finite()?;
        Ok((loss, grads))
    }
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub rate: f64,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

/// Loss/accuracy trace of one training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub epochs: Vec<EpochStats>,
}

impl TrainTrace {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\trate\tmean_loss\ttrain_acc\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.epoch, e.rate, e.mean_loss, e.train_accuracy
            ));
        }
        out
    }

    pub fn write_tsv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Traces of a stepwise run: the coarse first pass and the fine pass.
#[derive(Debug, Clone)]
pub struct StepwiseTrace {
    pub coarse: TrainTrace,
    pub fine: TrainTrace,
}

/// Trains `model` in place: one SGD step per sentence on the summed
/// token cross-entropy, sentence order reshuffled each epoch with the
/// run seed, learning rate decayed at each epoch boundary.
pub fn train(
    model: &mut TaggerModel,
    corpus: &TaggedCorpus,
    lexicon: Option<&MorphLexicon>,
) -> Result<TrainTrace> {
    for token in corpus.tokens() {
        if !model.tags.contains(token.tag.as_str()) {
            return Err(Error::InventoryMismatch {
                tag: token.tag.as_str().to_string(),
            });
        }
    }

    // Hints are inputs, not trained quantities; fix them before the
    // epoch loop so the first pass is not re-run every epoch.
    let mut golds = Vec::with_capacity(corpus.n_sentences());
    let mut hints = Vec::with_capacity(corpus.n_sentences());
    for sentence in &corpus.sentences {
        golds.push(model.gold_indices(sentence)?);
        hints.push(model.training_hints(lexicon, sentence)?);
    }

    let mut opt = Sgd::new(model.config.base_rate, model.config.decay)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(model.config.seed.wrapping_add(1));
    let mut grads = model.params.zeros_like();
    let mut order: Vec<usize> = (0..corpus.n_sentences()).collect();
    let mut trace = TrainTrace::default();

    for epoch in 0..model.config.epochs {
        let rate = opt.rate();
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut tokens = 0usize;
        for &si in &order {
            let sentence = &corpus.sentences[si];
            let fwd =
                model.forward_cached(lexicon, &sentence.forms(), hints[si].clone())?;
            grads.visit_mut(&mut |_, t| t.fill(0.0));
            let (loss, n_correct) = model.backward_into(&fwd, &golds[si], &mut grads, 1.0)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    sentence: si,
                });
            }
            grads.check_finite()?;
            if let Some(limit) = model.config.grad_clip {
                grads.visit_mut(&mut |_, t| t.clamp(limit));
            }
            model
                .params
                .for_each_pair(&grads, &mut |p, g| p.axpy(-rate, g));

            loss_sum += loss;
            correct += n_correct;
            tokens += sentence.len();
        }

        trace.epochs.push(EpochStats {
            epoch,
            rate,
            mean_loss: loss_sum / tokens as f64,
            train_accuracy: correct as f64 / tokens as f64,
        });
        opt.advance_epoch();
    }
    Ok(trace)
}

/// Trains the stepwise model: first a coarse-pass tagger (lexicon mode,
/// output = the single-character category tagset, gold labels projected
/// from the fine tags), then the fine model with each token's coarse
/// hint taken from the first pass. Returns the composite model with the
/// coarse model embedded.
pub fn train_stepwise(
    config: &ModelConfig,
    corpus: &TaggedCorpus,
    lexicon: &MorphLexicon,
    tags: TagInventory,
    labels: LabelInventory,
) -> Result<(TaggerModel, StepwiseTrace)> {
    let vocab = Vocabulary::build(corpus);
    let coarse = CoarseInventory::from_fine(&tags);

    let coarse_tags = TagInventory::build(coarse.iter().map(String::from))?;
    let coarse_corpus = corpus.map_tags(|tag| {
        MnemonicTag::parse(&tag.category().to_string()).expect("category is one char")
    });
    let coarse_config = ModelConfig {
        mode: Mode::WithLexicon,
        seed: config.seed.wrapping_add(101),
        ..config.clone()
    };
    let mut coarse_model =
        TaggerModel::new(coarse_config, vocab.clone(), coarse_tags, Some(labels.clone()))?;
    let coarse_trace = train(&mut coarse_model, &coarse_corpus, Some(lexicon))?;

    let fine_config = ModelConfig {
        mode: Mode::WithLexiconAndCoarse,
        ..config.clone()
    };
    let mut fine_model = TaggerModel::new(fine_config, vocab, tags, Some(labels))?;
    fine_model.coarse_model = Some(Box::new(coarse_model));
    let fine_trace = train(&mut fine_model, corpus, Some(lexicon))?;

    Ok((
        fine_model,
        StepwiseTrace {
            coarse: coarse_trace,
            fine: fine_trace,
        },
    ))
}
