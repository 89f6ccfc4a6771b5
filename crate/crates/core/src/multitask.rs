//! Joint document classification and sentence alignment.
//!
//! Both tasks read sentences through one embedding table, one word-level
//! bi-GRU and one word-level attention layer (context vector included).
//! Classification adds a sentence-level bi-GRU, attention and a softmax
//! head. Training alternates one classification batch with one alignment
//! batch, each task driving its own Adam optimiser.
//!
//! The alignment objective for a batch of `N` pairs is
//! `(1/N)·Σᵢ (1 − cos(Sᵢ, Tᵢ)) + (β/2)·‖W‖²` where `W` covers every
//! trainable weight the alignment branch touches (embeddings and the shared
//! word-level stack, not the classification layers).

use ndarray::{Array1, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifiers::{
    train_loop, ArchConfig, Architecture, ClassifierModel, EmbeddingTable, EncodedDoc, Encoder, HanEncoder,
    Interleave, LabeledExample, SentenceCache, TrainConfig, TrainHistory,
};
use crate::error::{Error, Result};
use crate::nn::{join, Adam, Module, Parameter};
use crate::sent_align::{AlignmentCorpus, SentencePair};

/// Cosine denominators below this count as zero.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultitaskConfig {
    /// Hierarchical classifier settings; `learning_rate` drives the
    /// classification optimiser.
    pub model: ArchConfig,
    pub align_learning_rate: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for MultitaskConfig {
    fn default() -> Self {
        MultitaskConfig {
            model: ArchConfig::for_arch(Architecture::Han),
            align_learning_rate: 1e-2,
            beta: 1e-10,
            batch_size: 15,
            max_epochs: 100,
            patience: 20,
            shuffle: true,
            seed: 0,
        }
    }
}

impl MultitaskConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            shuffle: self.shuffle,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.arch != Architecture::Han {
            return Err(Error::InvalidConfig(format!(
                "multitask model must be hierarchical, got `{}`",
                self.model.arch
            )));
        }
        self.model.validate()?;
        self.train_config().validate()?;
        if !(self.align_learning_rate > 0.0) || !(self.beta >= 0.0) {
            return Err(Error::InvalidConfig("alignment learning rate must be positive and beta non-negative".into()));
        }
        Ok(())
    }
}

/// A hierarchical classifier whose word-level stack doubles as the
/// alignment sentence encoder.
#[derive(Debug, Clone)]
pub struct MultitaskModel {
    pub classifier: ClassifierModel,
    pub beta: f64,
}

impl MultitaskModel {
    pub fn new<R: Rng + ?Sized>(config: &MultitaskConfig, embeddings: EmbeddingTable, classes: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        Ok(MultitaskModel {
            classifier: ClassifierModel::new(config.model.clone(), embeddings, classes, rng)?,
            beta: config.beta,
        })
    }

    pub fn embeddings(&self) -> &EmbeddingTable {
        &self.classifier.embeddings
    }

    fn han(&self) -> &HanEncoder {
        han_of(&self.classifier)
    }

    /// Word vectors → shared bi-GRU → shared attention.
    pub fn encode_sentence(&self, lang: &str, tokens: &[String]) -> Result<Array1<f64>> {
        if tokens.is_empty() {
            return Err(Error::Precondition("empty sentence".into()));
        }
        let ids = self.embeddings().ids(lang, tokens);
        Ok(self.han().encode_sentence(self.embeddings(), &ids)?.0)
    }

    /// Sentence vectors → sentence-level bi-GRU → sentence-level attention.
    pub fn encode_document(&self, example: &LabeledExample) -> Result<Array1<f64>> {
        let doc = self.classifier.encode_example(example)?;
        Ok(self.han().encode_document(self.embeddings(), &doc.sentences)?.0)
    }

    /// Visits the parameters the alignment objective depends on.
    pub fn visit_alignment_branch(&mut self, f: &mut dyn FnMut(&str, &mut Parameter)) {
        visit_branch(&mut self.classifier, f);
    }
}

impl Module for MultitaskModel {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        self.classifier.visit(prefix, f);
    }
}

fn han_of(c: &ClassifierModel) -> &HanEncoder {
    match &c.encoder {
        Encoder::Han(h) => h,
        _ => unreachable!("multitask model is always hierarchical"),
    }
}

fn visit_branch(c: &mut ClassifierModel, f: &mut dyn FnMut(&str, &mut Parameter)) {
    c.embeddings.visit("embeddings", f);
    match &mut c.encoder {
        Encoder::Han(h) => h.visit_word_level("encoder", f),
        _ => unreachable!("multitask model is always hierarchical"),
    }
}

struct AlignmentBranch<'a>(&'a mut ClassifierModel);

impl Module for AlignmentBranch<'_> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        visit_branch(self.0, &mut |name, p| f(&join(prefix, name), p));
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignLoss {
    pub value: f64,
    /// Pairs whose cosine denominator fell below [`NORM_FLOOR`].
    pub flagged: usize,
}

/// `cos(a, b)` and its gradients; zero-norm inputs give cosine 0 and no
/// gradient.
fn cosine_with_grad(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> (f64, Array1<f64>, Array1<f64>, bool) {
    let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
    if na * nb < NORM_FLOOR {
        return (0.0, Array1::zeros(a.len()), Array1::zeros(b.len()), true);
    }
    let cos = a.dot(&b) / (na * nb);
    let da = &b / (na * nb) - &a * (cos / (na * na));
    let db = &a / (na * nb) - &b * (cos / (nb * nb));
    (cos, da, db, false)
}

type Encoded = (Vec<usize>, Array1<f64>, SentenceCache);

fn encode_pair(c: &ClassifierModel, target_lang: &str, pair: &SentencePair) -> Result<(Encoded, Encoded)> {
    if pair.source.is_empty() || pair.target.is_empty() {
        return Err(Error::Precondition("empty sentence in parallel pair".into()));
    }
    let table = &c.embeddings;
    let s_ids = table.ids(&pair.source_lang, &pair.source);
    let t_ids = table.ids(target_lang, &pair.target);
    let (s, sc) = han_of(c).encode_sentence(table, &s_ids)?;
    let (t, tc) = han_of(c).encode_sentence(table, &t_ids)?;
    Ok(((s_ids, s, sc), (t_ids, t, tc)))
}

/// Mean of `1 − cos(Sᵢ, Tᵢ)` over `pairs` plus `(β/2)‖W‖²`.
pub fn alignment_task_loss(model: &mut MultitaskModel, target_lang: &str, pairs: &[SentencePair]) -> Result<AlignLoss> {
    if pairs.is_empty() {
        return Err(Error::Precondition("empty alignment batch".into()));
    }
    let mut sum = 0.0;
    let mut flagged = 0;
    for pair in pairs {
        let ((_, s, _), (_, t, _)) = encode_pair(&model.classifier, target_lang, pair)?;
        let (cos, _, _, zero) = cosine_with_grad(s.view(), t.view());
        flagged += zero as usize;
        sum += 1.0 - cos;
    }
    let mut sq = 0.0;
    model.visit_alignment_branch(&mut |_, p| {
        if p.trainable {
            sq += p.sq_norm();
        }
    });
    Ok(AlignLoss {
        value: sum / pairs.len() as f64 + 0.5 * model.beta * sq,
        flagged,
    })
}

/// Same value as [`alignment_task_loss`]; also accumulates its gradient
/// into the alignment branch.
pub fn alignment_task_gradients(model: &mut MultitaskModel, target_lang: &str, pairs: &[SentencePair]) -> Result<AlignLoss> {
    branch_gradients(&mut model.classifier, model.beta, target_lang, pairs)
}

fn branch_gradients(c: &mut ClassifierModel, beta: f64, target_lang: &str, pairs: &[SentencePair]) -> Result<AlignLoss> {
    if pairs.is_empty() {
        return Err(Error::Precondition("empty alignment batch".into()));
    }
    let n = pairs.len() as f64;
    let mut sum = 0.0;
    let mut flagged = 0;
    for pair in pairs {
        let ((s_ids, s, sc), (t_ids, t, tc)) = encode_pair(c, target_lang, pair)?;
        let (cos, ds, dt, zero) = cosine_with_grad(s.view(), t.view());
        flagged += zero as usize;
        sum += 1.0 - cos;
        let Encoder::Han(han) = &mut c.encoder else {
            unreachable!("multitask model is always hierarchical")
        };
        han.sentence_backward(&mut c.embeddings, &s_ids, &sc, (&ds * (-1.0 / n)).view());
        han.sentence_backward(&mut c.embeddings, &t_ids, &tc, (&dt * (-1.0 / n)).view());
    }
    let mut sq = 0.0;
    visit_branch(c, &mut |_, p| {
        if p.trainable {
            sq += p.sq_norm();
            if beta != 0.0 {
                p.grad.scaled_add(beta, &p.value);
            }
        }
    });
    Ok(AlignLoss {
        value: sum / n + 0.5 * beta * sq,
        flagged,
    })
}

fn alignment_step(c: &mut ClassifierModel, beta: f64, opt: &mut Adam, target_lang: &str, batch: &[SentencePair]) -> Result<f64> {
    crate::nn::zero_grad(&mut AlignmentBranch(c));
    let loss = branch_gradients(c, beta, target_lang, batch)?;
    if !loss.value.is_finite() {
        return Err(Error::Divergence {
            stage: "alignment".into(),
            detail: format!("non-finite batch loss {}", loss.value),
        });
    }
    if loss.flagged > 0 {
        log::warn!("{} alignment pairs had a zero-norm sentence vector", loss.flagged);
    }
    opt.step(&mut AlignmentBranch(c));
    Ok(loss.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultitaskHistory {
    /// Absent when no documents were given.
    pub classification: Option<TrainHistory>,
    /// Pair-weighted mean alignment loss per epoch; empty without pairs.
    pub alignment_losses: Vec<f64>,
}

struct AlignmentSchedule<'a> {
    pairs: &'a [SentencePair],
    target_lang: &'a str,
    order: Vec<usize>,
    rng: ChaCha8Rng,
    opt: Adam,
    batch_size: usize,
    shuffle: bool,
    beta: f64,
    cursor: usize,
    epoch_sum: f64,
    losses: Vec<f64>,
}

impl AlignmentSchedule<'_> {
    fn run_batch(&mut self, clf: &mut ClassifierModel) -> Result<()> {
        if self.cursor >= self.order.len() {
            return Ok(());
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch: Vec<SentencePair> = self.order[self.cursor..end].iter().map(|&i| self.pairs[i].clone()).collect();
        self.cursor = end;
        let loss = alignment_step(clf, self.beta, &mut self.opt, self.target_lang, &batch)?;
        self.epoch_sum += loss * batch.len() as f64;
        Ok(())
    }
}

impl Interleave for AlignmentSchedule<'_> {
    fn start_epoch(&mut self, _epoch: usize) -> Result<()> {
        if self.shuffle {
            self.order.shuffle(&mut self.rng);
        }
        self.cursor = 0;
        self.epoch_sum = 0.0;
        Ok(())
    }

    fn after_batch(&mut self, model: &mut ClassifierModel, _batch: usize) -> Result<()> {
        self.run_batch(model)
    }

    fn finish_epoch(&mut self, model: &mut ClassifierModel, _batches: usize) -> Result<()> {
        while self.cursor < self.order.len() {
            self.run_batch(model)?;
        }
        if !self.pairs.is_empty() {
            self.losses.push(self.epoch_sum / self.pairs.len() as f64);
        }
        Ok(())
    }
}

/// Alternates classification and alignment batches 1:1. Classification
/// drives early stopping on validation macro-F1; with no documents the
/// alignment task runs alone for `max_epochs`.
pub fn alternate_train(
    model: MultitaskModel,
    train: &[LabeledExample],
    valid: &[LabeledExample],
    corpus: &AlignmentCorpus,
    config: &MultitaskConfig,
) -> Result<(MultitaskModel, MultitaskHistory)> {
    config.validate()?;
    if train.is_empty() && corpus.is_empty() {
        return Err(Error::Precondition("both task datasets are empty".into()));
    }
    let beta = model.beta;
    let mut schedule = AlignmentSchedule {
        pairs: &corpus.pairs,
        target_lang: &corpus.target_lang,
        order: (0..corpus.len()).collect(),
        rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9E37_79B9_7F4A_7C15)),
        opt: Adam::new(config.align_learning_rate),
        batch_size: config.batch_size,
        shuffle: config.shuffle,
        beta,
        cursor: 0,
        epoch_sum: 0.0,
        losses: Vec::new(),
    };
    if train.is_empty() {
        let mut clf = model.classifier;
        for epoch in 1..=config.max_epochs {
            schedule.start_epoch(epoch)?;
            schedule.finish_epoch(&mut clf, 0)?;
        }
        let history = MultitaskHistory {
            classification: None,
            alignment_losses: schedule.losses,
        };
        return Ok((MultitaskModel { classifier: clf, beta }, history));
    }
    let train_docs: Vec<EncodedDoc> = model.classifier.encode_examples(train)?;
    let valid_docs: Vec<EncodedDoc> = model.classifier.encode_examples(valid)?;
    let (best, history) = train_loop(model.classifier, &train_docs, &valid_docs, &config.train_config(), &mut schedule)?;
    Ok((
        MultitaskModel { classifier: best, beta },
        MultitaskHistory {
            classification: Some(history),
            alignment_losses: schedule.losses,
        },
    ))
}
