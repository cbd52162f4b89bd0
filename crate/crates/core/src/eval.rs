//! Scoring: overall/known/unknown accuracy, confusion-pair ranking,
//! error-reduction arithmetic, and the cross-validation harness.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::corpus::{TaggedCorpus, Vocabulary};
use crate::error::{Error, Result};
use crate::lexicon::{LabelInventory, MorphLexicon};
use crate::tagger::{self, Mode, ModelConfig, TaggerModel};
use crate::tagset::{MnemonicTag, TagInventory};

/// Token-level scores for one prediction/gold comparison. A token is
/// "known" when its form is in the training vocabulary or, when a
/// lexicon is supplied, in the lexicon. The confusion map counts
/// mispredictions by (predicted, gold) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalReport {
    pub total_tokens: usize,
    pub correct_tokens: usize,
    pub known_total: usize,
    pub known_correct: usize,
    pub unknown_total: usize,
    pub unknown_correct: usize,
    /// Tokens whose predicted lexical category matches gold.
    pub coarse_correct: usize,
    pub confusion: BTreeMap<(String, String), usize>,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        self.correct_tokens as f64 / self.total_tokens as f64
    }

    /// `None` when the known partition is empty.
    pub fn known_accuracy(&self) -> Option<f64> {
        (self.known_total > 0).then(|| self.known_correct as f64 / self.known_total as f64)
    }

    /// `None` when the unknown partition is empty (reported as absent,
    /// not as 0 or 100).
    pub fn unknown_accuracy(&self) -> Option<f64> {
        (self.unknown_total > 0).then(|| self.unknown_correct as f64 / self.unknown_total as f64)
    }

    pub fn unknown_count(&self) -> usize {
        self.unknown_total
    }

    /// Accuracy of the coarse (first-character) projection of the
    /// predictions.
    pub fn coarse_accuracy(&self) -> f64 {
        self.coarse_correct as f64 / self.total_tokens as f64
    }

    pub fn errors(&self) -> usize {
        self.total_tokens - self.correct_tokens
    }
}

/// Scores predictions against gold by exact fine-tag match.
pub fn evaluate(
    pred: &[Vec<MnemonicTag>],
    gold: &TaggedCorpus,
    vocab: &Vocabulary,
    lexicon: Option<&MorphLexicon>,
) -> Result<EvalReport> {
    if pred.len() != gold.n_sentences() {
        return Err(Error::AlignmentError {
            sentence: pred.len().min(gold.n_sentences()),
            detail: format!(
                "{} predicted sentences for {} gold sentences",
                pred.len(),
                gold.n_sentences()
            ),
        });
    }
    let mut report = EvalReport {
        total_tokens: 0,
        correct_tokens: 0,
        known_total: 0,
        known_correct: 0,
        unknown_total: 0,
        unknown_correct: 0,
        coarse_correct: 0,
        confusion: BTreeMap::new(),
    };
    for (si, (pred_tags, sentence)) in pred.iter().zip(&gold.sentences).enumerate() {
        if pred_tags.len() != sentence.len() {
            return Err(Error::AlignmentError {
                sentence: si,
                detail: format!(
                    "{} predicted tokens for {} gold tokens",
                    pred_tags.len(),
                    sentence.len()
                ),
            });
        }
        for (p, token) in pred_tags.iter().zip(&sentence.tokens) {
            report.total_tokens += 1;
            let known = vocab.contains_word(&token.form)
                || lexicon.is_some_and(|lex| lex.contains(&token.form));
            let correct = p.as_str() == token.tag.as_str();
            if correct {
                report.correct_tokens += 1;
            } else {
                *report
                    .confusion
                    .entry((p.as_str().to_string(), token.tag.as_str().to_string()))
                    .or_insert(0) += 1;
            }
            if p.category() == token.tag.category() {
                report.coarse_correct += 1;
            }
            if known {
                report.known_total += 1;
                report.known_correct += correct as usize;
            } else {
                report.unknown_total += 1;
                report.unknown_correct += correct as usize;
            }
        }
    }
    Ok(report)
}

/// Relative error reduction between two accuracies on the percent scale:
/// `(new − baseline) / (100 − baseline) × 100`.
pub fn error_reduction(baseline_acc: f64, new_acc: f64) -> Result<f64> {
    assert!(
        (0.0..=100.0).contains(&baseline_acc) && (0.0..=100.0).contains(&new_acc),
        "accuracies are percentages in [0, 100]"
    );
    if baseline_acc >= 100.0 {
        return Err(Error::DegenerateBaseline);
    }
    Ok((new_acc - baseline_acc) / (100.0 - baseline_acc) * 100.0)
}

/// The `k` most frequent confusion pairs as `("pred>gold", share)` where
/// share is the pair's percentage of all errors. Ties break
/// lexicographically on the pair string.
pub fn top_confusions(report: &EvalReport, k: usize) -> Vec<(String, f64)> {
    let errors = report.errors();
    if errors == 0 {
        return Vec::new();
    }
    let mut pairs: Vec<(String, usize)> = report
        .confusion
        .iter()
        .map(|((p, g), &count)| (format!("{p}>{g}"), count))
        .collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    pairs
        .into_iter()
        .take(k)
        .map(|(pair, count)| (pair, count as f64 / errors as f64 * 100.0))
        .collect()
}

/// One fold's trained-and-tested outcome.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: usize,
    pub seed: u64,
    pub test_tokens: usize,
    pub report: EvalReport,
}

/// All folds plus aggregate accessors.
#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub folds: Vec<FoldOutcome>,
}

impl CrossValidation {
    /// Token-weighted mean accuracy: total correct over total tokens,
    /// identical to pooling all fold predictions.
    pub fn token_weighted_accuracy(&self) -> f64 {
        let correct: usize = self.folds.iter().map(|f| f.report.correct_tokens).sum();
        let total: usize = self.folds.iter().map(|f| f.report.total_tokens).sum();
        correct as f64 / total as f64
    }

    pub fn mean_fold_accuracy(&self) -> f64 {
        let sum: f64 = self.folds.iter().map(|f| f.report.accuracy()).sum();
        sum / self.folds.len() as f64
    }

    /// Sample standard deviation of the per-fold accuracies.
    pub fn stddev_fold_accuracy(&self) -> f64 {
        let n = self.folds.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean_fold_accuracy();
        let var: f64 = self
            .folds
            .iter()
            .map(|f| (f.report.accuracy() - mean).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        var.sqrt()
    }
}

fn train_fold_model(
    config: &ModelConfig,
    train_corpus: &TaggedCorpus,
    lexicon: Option<&MorphLexicon>,
    tags: &TagInventory,
    labels: Option<&LabelInventory>,
) -> Result<TaggerModel> {
    match config.mode {
        Mode::WithLexiconAndCoarse => {
            let lexicon = lexicon.ok_or(Error::MissingLexicon)?;
            let labels = labels.ok_or(Error::MissingLexicon)?;
            let (model, _) = tagger::train_stepwise(
                config,
                train_corpus,
                lexicon,
                tags.clone(),
                labels.clone(),
            )?;
            Ok(model)
        }
        _ => {
            let vocab = Vocabulary::build(train_corpus);
            let mut model =
                TaggerModel::new(config.clone(), vocab, tags.clone(), labels.cloned())?;
            tagger::train(&mut model, train_corpus, lexicon)?;
            Ok(model)
        }
    }
}

fn run_fold(
    fold: usize,
    corpus: &TaggedCorpus,
    config: &ModelConfig,
    lexicon: Option<&MorphLexicon>,
    tags: &TagInventory,
    labels: Option<&LabelInventory>,
) -> Result<FoldOutcome> {
    let (train_corpus, test_corpus) = corpus.folds_split(fold)?;
    if test_corpus.n_sentences() == 0 || train_corpus.n_sentences() == 0 {
        return Err(Error::FoldAssignment(format!(
            "fold {fold} leaves an empty train or test set"
        )));
    }
    let seed = config.seed.wrapping_add(fold as u64);
    let fold_config = ModelConfig {
        seed,
        ..config.clone()
    };
    let model = train_fold_model(&fold_config, &train_corpus, lexicon, tags, labels)?;
    let mut predictions = Vec::with_capacity(test_corpus.n_sentences());
    for sentence in &test_corpus.sentences {
        predictions.push(model.tag_sentence(lexicon, &sentence.forms())?);
    }
    let report = evaluate(&predictions, &test_corpus, &model.vocab, lexicon)?;
    Ok(FoldOutcome {
        fold,
        seed,
        test_tokens: test_corpus.n_tokens(),
        report,
    })
}

/// Trains one independent model per fold (seed = run seed + fold id) and
/// scores it on the held-out fold. Folds run on up to `jobs` threads.
pub fn cross_validate(
    corpus: &TaggedCorpus,
    config: &ModelConfig,
    lexicon: Option<&MorphLexicon>,
    tags: &TagInventory,
    labels: Option<&LabelInventory>,
    jobs: usize,
) -> Result<CrossValidation> {
    let k = corpus.n_folds();
    if k < 2 {
        return Err(Error::FoldAssignment(format!(
            "cross-validation requires at least 2 folds, corpus has {k}"
        )));
    }
    let jobs = jobs.max(1).min(k);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<FoldOutcome>>>> = Mutex::new((0..k).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let fold = next.fetch_add(1, Ordering::SeqCst);
                if fold >= k {
                    break;
                }
                let outcome = run_fold(fold, corpus, config, lexicon, tags, labels);
                slots.lock().expect("fold slot lock")[fold] = Some(outcome);
            });
        }
    });

    let mut folds = Vec::with_capacity(k);
    for (fold, slot) in slots.into_inner().expect("fold slots").into_iter().enumerate() {
        match slot {
            Some(Ok(outcome)) => folds.push(outcome),
            Some(Err(e)) => return Err(e),
            None => {
                return Err(Error::FoldAssignment(format!(
                    "fold {fold} produced no result"
                )))
            }
        }
    }
    Ok(CrossValidation { folds })
}

/// Human-readable report table.
pub fn format_report(report: &EvalReport, baseline_acc: Option<f64>) -> String {
    let mut out = String::new();
    out.push_str(&format!("tokens          {}\n", report.total_tokens));
    out.push_str(&format!("correct         {}\n", report.correct_tokens));
    out.push_str(&format!("accuracy        {:.2}%\n", report.accuracy() * 100.0));
    match report.known_accuracy() {
        Some(acc) => out.push_str(&format!("known accuracy  {:.2}%\n", acc * 100.0)),
        None => out.push_str("known accuracy  n/a (no known tokens)\n"),
    }
    match report.unknown_accuracy() {
        Some(acc) => out.push_str(&format!("unknown accuracy {:.2}%\n", acc * 100.0)),
        None => out.push_str("unknown accuracy n/a (no unknown tokens)\n"),
    }
    out.push_str(&format!("unknown tokens  {}\n", report.unknown_count()));
    out.push_str(&format!(
        "coarse accuracy {:.2}%\n",
        report.coarse_accuracy() * 100.0
    ));
    if let Some(baseline) = baseline_acc {
        match error_reduction(baseline, report.accuracy() * 100.0) {
            Ok(reduction) => {
                out.push_str(&format!("error reduction {reduction:.1}% (vs {baseline}%)\n"))
            }
            Err(_) => out.push_str("error reduction n/a (baseline at 100%)\n"),
        }
    }
    let top = top_confusions(report, 10);
    if !top.is_empty() {
        out.push_str("\ntop confusions (pred>gold, share of errors)\n");
        for (i, (pair, share)) in top.iter().enumerate() {
            out.push_str(&format!("{:2}. {pair}  {share:.2}%\n", i + 1));
        }
    }
    out
}

/// Machine-readable flat key-value report. Accuracies are percentages.
pub fn format_report_kv(report: &EvalReport, baseline_acc: Option<f64>) -> String {
    let mut out = String::new();
    out.push_str(&format!("total_tokens={}\n", report.total_tokens));
    out.push_str(&format!("correct_tokens={}\n", report.correct_tokens));
    out.push_str(&format!("accuracy={}\n", report.accuracy() * 100.0));
    if let Some(acc) = report.known_accuracy() {
        out.push_str(&format!("known_acc={}\n", acc * 100.0));
    }
    if let Some(acc) = report.unknown_accuracy() {
        out.push_str(&format!("unknown_acc={}\n", acc * 100.0));
    }
    out.push_str(&format!("unknown_count={}\n", report.unknown_count()));
    out.push_str(&format!("coarse_acc={}\n", report.coarse_accuracy() * 100.0));
    if let Some(baseline) = baseline_acc {
        if let Ok(reduction) = error_reduction(baseline, report.accuracy() * 100.0) {
            out.push_str(&format!("error_reduction={reduction}\n"));
        }
    }
    for ((p, g), count) in &report.confusion {
        out.push_str(&format!("confusion.{p}.{g}={count}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Sentence, Token};

    fn corpus_from(tags: &[&[&str]]) -> TaggedCorpus {
        let sentences = tags
            .iter()
            .enumerate()
            .map(|(si, sent)| Sentence {
                tokens: sent
                    .iter()
                    .enumerate()
                    .map(|(ti, tag)| Token {
                        form: format!("w{si}_{ti}"),
                        tag: MnemonicTag::parse(tag).unwrap(),
                    })
                    .collect(),
            })
            .collect();
        TaggedCorpus::from_sentences(sentences, 1).unwrap()
    }

    fn tags_of(raw: &[&[&str]]) -> Vec<Vec<MnemonicTag>> {
        raw.iter()
            .map(|s| s.iter().map(|t| MnemonicTag::parse(t).unwrap()).collect())
            .collect()
    }

    #[test]
    fn three_of_four_is_75_percent() {
        let gold = corpus_from(&[&["a", "b"], &["c", "d"]]);
        let vocab = Vocabulary::build(&gold);
        let pred = tags_of(&[&["a", "b"], &["c", "x"]]);
        let report = evaluate(&pred, &gold, &vocab, None).unwrap();
        assert_eq!(report.total_tokens, 4);
        assert_eq!(report.correct_tokens, 3);
        assert!((report.accuracy() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn empty_unknown_partition_reports_absent() {
        let gold = corpus_from(&[&["a", "b"]]);
        let vocab = Vocabulary::build(&gold); // every test form is in vocab
        let pred = tags_of(&[&["a", "b"]]);
        let report = evaluate(&pred, &gold, &vocab, None).unwrap();
        assert_eq!(report.unknown_count(), 0);
        assert_eq!(report.unknown_accuracy(), None);
        assert_eq!(report.known_accuracy(), Some(1.0));
    }

    #[test]
    fn lexicon_extends_known_set() {
        let train = corpus_from(&[&["a"]]); // form w0_0
        let vocab = Vocabulary::build(&train);
        let labels = LabelInventory::build(["l"]).unwrap();
        let mut lexicon = MorphLexicon::new(&labels);
        lexicon.insert_for_tests("w0_1", &[0]);

        // Gold forms: w0_0 (in vocab), w0_1 (lexicon only), w0_2 (neither).
        let gold = corpus_from(&[&["a", "b", "c"]]);
        let pred = tags_of(&[&["a", "b", "c"]]);
        let report = evaluate(&pred, &gold, &vocab, Some(&lexicon)).unwrap();
        assert_eq!(report.known_total, 2);
        assert_eq!(report.unknown_total, 1);
    }

    #[test]
    fn alignment_errors_name_the_sentence() {
        let gold = corpus_from(&[&["a", "b"], &["c"]]);
        let vocab = Vocabulary::build(&gold);
        let pred = tags_of(&[&["a", "b"], &["c", "d"]]);
        match evaluate(&pred, &gold, &vocab, None) {
            Err(Error::AlignmentError { sentence, .. }) => assert_eq!(sentence, 1),
            other => panic!("expected AlignmentError, got {other:?}"),
        }
    }

    #[test]
    fn error_reduction_matches_reference_values() {
        let r = error_reduction(93.84, 95.15).unwrap();
        assert!((r - 21.3).abs() < 0.05, "got {r}");
        assert_eq!(error_reduction(90.0, 90.0).unwrap(), 0.0);
        assert_eq!(error_reduction(50.0, 100.0).unwrap(), 100.0);
        assert!(matches!(
            error_reduction(100.0, 100.0),
            Err(Error::DegenerateBaseline)
        ));
    }

    #[test]
    fn error_reduction_is_monotone_in_new_accuracy() {
        let mut last = f64::NEG_INFINITY;
        for new_acc in [80.0, 85.0, 90.0, 95.0, 99.0] {
            let r = error_reduction(80.0, new_acc).unwrap();
            assert!(r > last || (new_acc == 80.0 && r == last));
            last = r;
        }
    }

    #[test]
    fn top_confusions_ranks_and_shares() {
        let gold = corpus_from(&[&["b", "b", "b", "d"]]);
        let vocab = Vocabulary::build(&gold);
        let pred = tags_of(&[&["a", "a", "a", "c"]]);
        let report = evaluate(&pred, &gold, &vocab, None).unwrap();
        let top = top_confusions(&report, 10);
        assert_eq!(top.len(), 2);
        assert_eq!(top[0].0, "a>b");
        assert!((top[0].1 - 75.0).abs() < 1e-12);
        assert_eq!(top[1].0, "c>d");
        assert!((top[1].1 - 25.0).abs() < 1e-12);
        let share_sum: f64 = top.iter().map(|(_, s)| s).sum();
        assert!((share_sum - 100.0).abs() < 1e-9);
    }

    #[test]
    fn top_confusions_breaks_ties_lexicographically() {
        let gold = corpus_from(&[&["b", "z", "q"]]);
        let vocab = Vocabulary::build(&gold);
        let pred = tags_of(&[&["a", "a", "q"]]);
        let report = evaluate(&pred, &gold, &vocab, None).unwrap();
        let top = top_confusions(&report, 10);
        assert_eq!(top[0].0, "a>b");
        assert_eq!(top[1].0, "a>z");
    }

    #[test]
    fn perfect_predictions_have_no_confusions() {
        let gold = corpus_from(&[&["a", "b"]]);
        let vocab = Vocabulary::build(&gold);
        let pred = tags_of(&[&["a", "b"]]);
        let report = evaluate(&pred, &gold, &vocab, None).unwrap();
        assert!(top_confusions(&report, 10).is_empty());
    }

    #[test]
    fn evaluate_is_pure() {
        let gold = corpus_from(&[&["a", "b"], &["c"]]);
        let vocab = Vocabulary::build(&gold);
        let pred = tags_of(&[&["a", "x"], &["c"]]);
        let r1 = evaluate(&pred, &gold, &vocab, None).unwrap();
        let r2 = evaluate(&pred, &gold, &vocab, None).unwrap();
        assert_eq!(r1, r2);
    }
}
