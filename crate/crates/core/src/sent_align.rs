//! Embedding training from parallel sentences.
//!
//! Source-language rows are stacked into `P` (initialized from, and
//! regularized toward, `P₀`) and target-language rows into `Q`. A sentence is
//! represented by the mean of its token rows. Each mini-batch of `N` pairs
//! minimizes
//!
//! ```text
//! ½‖P − P₀‖²_F + (μ/N)·Σᵢ ‖rep(P, sᵢ) − rep(Q, tᵢ)‖₁ + (μ_S/2)‖P‖²_F + (μ_T/2)‖Q‖²_F
//! ```
//!
//! with steps of fixed length `η` along the normalized gradient:
//! `P ← P − η/(ε + ‖δP‖_F)·δP`, likewise for `Q`.
//!
//! Several source languages are handled by concatenating their pairs; the
//! objective is a sum over pairs, so this equals the sum of the bilingual
//! objectives.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingSpace, MultilingualSpace};
use crate::error::{Error, Result};

/// One translation pair: source tokens in `source_lang`, target tokens in
/// the corpus target language.
#[derive(Debug, Clone, PartialEq)]
pub struct SentencePair {
    pub source_lang: String,
    pub source: Vec<String>,
    pub target: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentCorpus {
    pub target_lang: String,
    pub pairs: Vec<SentencePair>,
}

impl AlignmentCorpus {
    pub fn new(target_lang: &str, pairs: Vec<SentencePair>) -> Result<Self> {
        for (i, p) in pairs.iter().enumerate() {
            if p.source.is_empty() || p.target.is_empty() {
                return Err(Error::Precondition(format!("pair {i} has an empty sentence")));
            }
            if p.source_lang == target_lang {
                return Err(Error::Precondition(format!(
                    "pair {i} uses the target language `{target_lang}` as its source"
                )));
            }
        }
        Ok(AlignmentCorpus {
            target_lang: target_lang.to_string(),
            pairs,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Source languages in first-seen order.
    pub fn source_languages(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in &self.pairs {
            if !out.contains(&p.source_lang) {
                out.push(p.source_lang.clone());
            }
        }
        out
    }

    /// Pairs of one source language, in corpus order.
    pub fn for_language(&self, lang: &str) -> AlignmentCorpus {
        AlignmentCorpus {
            target_lang: self.target_lang.clone(),
            pairs: self.pairs.iter().filter(|p| p.source_lang == lang).cloned().collect(),
        }
    }

    /// Concatenates corpora sharing a target language.
    pub fn concat(parts: &[AlignmentCorpus]) -> Result<AlignmentCorpus> {
        let target = parts
            .first()
            .map(|c| c.target_lang.clone())
            .ok_or_else(|| Error::Precondition("nothing to concatenate".into()))?;
        let mut pairs = Vec::new();
        for c in parts {
            if c.target_lang != target {
                return Err(Error::Precondition("corpora disagree on target language".into()));
            }
            pairs.extend(c.pairs.iter().cloned());
        }
        Ok(AlignmentCorpus { target_lang: target, pairs })
    }
}

/// Reads `<lang>\t<source sentence>\t<target sentence>` lines.
pub fn load_parallel_corpus(path: impl AsRef<Path>, target_lang: &str) -> Result<AlignmentCorpus> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(&name, i + 1, format!("expected 3 tab-separated columns, found {}", cols.len())));
        }
        let source: Vec<String> = cols[1].split_whitespace().map(str::to_string).collect();
        let target: Vec<String> = cols[2].split_whitespace().map(str::to_string).collect();
        if source.is_empty() || target.is_empty() || cols[0].is_empty() {
            return Err(Error::parse(&name, i + 1, "empty language or sentence"));
        }
        pairs.push(SentencePair {
            source_lang: cols[0].to_string(),
            source,
            target,
        });
    }
    AlignmentCorpus::new(target_lang, pairs)
}

pub fn save_parallel_corpus(corpus: &AlignmentCorpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in &corpus.pairs {
        writeln!(w, "{}\t{}\t{}", p.source_lang, p.source.join(" "), p.target.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SentAlignParams {
    pub mu: f64,
    pub mu_source: f64,
    pub mu_target: f64,
    pub eta: f64,
    pub epsilon: f64,
}

impl Default for SentAlignParams {
    fn default() -> Self {
        SentAlignParams {
            mu: 1e-9,
            mu_source: 1e-11,
            mu_target: 1e-11,
            eta: 1.0,
            epsilon: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SentAlignConfig {
    pub params: SentAlignParams,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for SentAlignConfig {
    fn default() -> Self {
        SentAlignConfig {
            params: SentAlignParams::default(),
            epochs: 50,
            batch_size: 64,
            shuffle: true,
            seed: 0,
        }
    }
}

/// Token rows of a pair, resolved against the model. `None` marks OOV tokens,
/// which count toward the sentence length but contribute a zero row.
#[derive(Debug, Clone)]
pub(crate) struct EncodedPair {
    source: Vec<Option<usize>>,
    target: Vec<Option<usize>>,
}

#[derive(Debug, Clone)]
pub struct AlignmentModel {
    source_keys: Vec<(String, String)>,
    source_index: HashMap<(String, String), usize>,
    source_langs: Vec<(String, std::ops::Range<usize>)>,
    target: EmbeddingSpace,
    pub p: Array2<f64>,
    pub q: Array2<f64>,
    pub p0: Array2<f64>,
    pub params: SentAlignParams,
    pub epoch: usize,
}

impl AlignmentModel {
    /// Stacks the spaces of `source_langs` into `P` (and `P₀`) and takes the
    /// `target_lang` space as `Q`.
    pub fn from_space(init: &MultilingualSpace, source_langs: &[String], target_lang: &str, params: SentAlignParams) -> Result<Self> {
        let target = init
            .space(target_lang)
            .ok_or_else(|| Error::Precondition(format!("initial space lacks target language `{target_lang}`")))?
            .clone();
        let dim = target.dim();
        let mut keys = Vec::new();
        let mut langs = Vec::new();
        for lang in source_langs {
            let s = init
                .space(lang)
                .ok_or_else(|| Error::Precondition(format!("initial space lacks source language `{lang}`")))?;
            let start = keys.len();
            keys.extend(s.vocab().words().iter().map(|w| (lang.clone(), w.clone())));
            langs.push((lang.clone(), start..keys.len()));
        }
        let mut p = Array2::zeros((keys.len(), dim));
        for (lang, range) in &langs {
            let s = init.space(lang).expect("checked above");
            p.slice_mut(ndarray::s![range.clone(), ..]).assign(s.matrix());
        }
        let index = keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        Ok(AlignmentModel {
            source_keys: keys,
            source_index: index,
            source_langs: langs,
            q: target.matrix().clone(),
            target,
            p0: p.clone(),
            p,
            params,
            epoch: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.q.ncols()
    }

    pub(crate) fn encode(&self, pair: &SentencePair) -> EncodedPair {
        EncodedPair {
            source: pair
                .source
                .iter()
                .map(|w| self.source_index.get(&(pair.source_lang.clone(), w.clone())).copied())
                .collect(),
            target: pair.target.iter().map(|w| self.target.vocab().get(w)).collect(),
        }
    }

    pub(crate) fn encode_all(&self, pairs: &[SentencePair]) -> Vec<EncodedPair> {
        pairs.iter().map(|p| self.encode(p)).collect()
    }

    /// The trained spaces, one per language.
    pub fn to_space(&self) -> Result<MultilingualSpace> {
        let mut out = MultilingualSpace::new();
        for (lang, range) in &self.source_langs {
            let words = self.source_keys[range.clone()].iter().map(|(_, w)| w.clone()).collect();
            let m = self.p.slice(ndarray::s![range.clone(), ..]).to_owned();
            out.insert(EmbeddingSpace::from_rows(lang, words, m)?)?;
        }
        out.insert(self.target.with_matrix(self.q.clone())?)?;
        Ok(out)
    }

    pub fn source_representation(&self, pair: &SentencePair) -> Array1<f64> {
        rep(&self.p, &self.encode(pair).source)
    }

    pub fn target_representation(&self, pair: &SentencePair) -> Array1<f64> {
        rep(&self.q, &self.encode(pair).target)
    }
}

/// Mean of the token rows of `sentence` in `space`; out-of-vocabulary tokens
/// contribute zero rows to the mean.
pub fn sentence_vector(space: &EmbeddingSpace, sentence: &[String]) -> Result<Array1<f64>> {
    if sentence.is_empty() {
        return Err(Error::Precondition("empty sentence".into()));
    }
    let rows: Vec<Option<usize>> = sentence.iter().map(|w| space.vocab().get(w)).collect();
    if rows.iter().all(Option::is_none) {
        log::warn!("sentence has no in-vocabulary tokens: {}", sentence.join(" "));
    }
    Ok(rep(space.matrix(), &rows))
}

fn rep(matrix: &Array2<f64>, rows: &[Option<usize>]) -> Array1<f64> {
    let mut v = Array1::zeros(matrix.ncols());
    for r in rows.iter().flatten() {
        v += &matrix.row(*r);
    }
    v / rows.len() as f64
}

fn sq_norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

fn l1(v: ArrayView1<'_, f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub(crate) fn loss_encoded(model: &AlignmentModel, batch: &[EncodedPair]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Precondition("empty batch".into()));
    }
    let pr = &model.params;
    let n = batch.len() as f64;
    let drift = 0.5 * sq_norm(&(&model.p - &model.p0));
    let dist: f64 = batch
        .iter()
        .map(|e| l1((rep(&model.p, &e.source) - rep(&model.q, &e.target)).view()))
        .sum();
    let loss = drift + pr.mu / n * dist + 0.5 * pr.mu_source * sq_norm(&model.p) + 0.5 * pr.mu_target * sq_norm(&model.q);
    if !loss.is_finite() {
        return Err(Error::Divergence {
            stage: "sentence alignment".into(),
            detail: format!("loss is {loss}"),
        });
    }
    Ok(loss)
}

/// Exact (sub)gradients of the batch loss with respect to `P` and `Q`. The
/// L1 term uses `sign(·)` with `sign(0) = 0`.
pub(crate) fn gradients_encoded(model: &AlignmentModel, batch: &[EncodedPair]) -> (Array2<f64>, Array2<f64>) {
    let pr = &model.params;
    let n = batch.len() as f64;
    let mut gp = &model.p - &model.p0 + &model.p * pr.mu_source;
    let mut gq = &model.q * pr.mu_target;
    for e in batch {
        let residual = rep(&model.p, &e.source) - rep(&model.q, &e.target);
        let sign = residual.mapv(|r| if r > 0.0 { 1.0 } else if r < 0.0 { -1.0 } else { 0.0 });
        let ws = pr.mu / n / e.source.len() as f64;
        for r in e.source.iter().flatten() {
            gp.row_mut(*r).scaled_add(ws, &sign);
        }
        let wt = pr.mu / n / e.target.len() as f64;
        for r in e.target.iter().flatten() {
            gq.row_mut(*r).scaled_add(-wt, &sign);
        }
    }
    (gp, gq)
}

/// Batch loss for raw token pairs.
pub fn sent_align_loss(model: &AlignmentModel, batch: &[SentencePair]) -> Result<f64> {
    loss_encoded(model, &model.encode_all(batch))
}

/// Gradients `(δP, δQ)` for raw token pairs.
pub fn sent_align_gradients(model: &AlignmentModel, batch: &[SentencePair]) -> (Array2<f64>, Array2<f64>) {
    gradients_encoded(model, &model.encode_all(batch))
}

pub(crate) fn step_encoded(model: &mut AlignmentModel, batch: &[EncodedPair]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Precondition("empty batch".into()));
    }
    let (gp, gq) = gradients_encoded(model, batch);
    let np = sq_norm(&gp).sqrt();
    let nq = sq_norm(&gq).sqrt();
    if !np.is_finite() || !nq.is_finite() {
        return Err(Error::Divergence {
            stage: "sentence alignment".into(),
            detail: "non-finite gradient".into(),
        });
    }
    let pr = model.params;
    if np > 0.0 {
        model.p.scaled_add(-pr.eta / (pr.epsilon + np), &gp);
    }
    if nq > 0.0 {
        model.q.scaled_add(-pr.eta / (pr.epsilon + nq), &gq);
    }
    Ok(())
}

/// One normalized-gradient step on `batch`.
pub fn sent_align_step(model: &mut AlignmentModel, batch: &[SentencePair]) -> Result<()> {
    let enc = model.encode_all(batch);
    step_encoded(model, &enc)
}

/// Mean cosine between source and target representations over `pairs`.
pub fn mean_pair_cosine(model: &AlignmentModel, pairs: &[SentencePair]) -> f64 {
    let enc = model.encode_all(pairs);
    let total: f64 = enc
        .iter()
        .map(|e| {
            let a = rep(&model.p, &e.source);
            let b = rep(&model.q, &e.target);
            let d = (a.dot(&a) * b.dot(&b)).sqrt();
            if d == 0.0 {
                0.0
            } else {
                a.dot(&b) / d
            }
        })
        .sum();
    total / enc.len().max(1) as f64
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SentAlignHistory {
    /// Full-corpus loss before any step.
    pub initial_loss: f64,
    /// Mean of the pre-step batch losses of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains until `config.epochs`, aborting if the epoch-mean loss rises five
/// epochs in a row.
pub fn train_sent_align(
    corpus: &AlignmentCorpus,
    init: &MultilingualSpace,
    config: &SentAlignConfig,
) -> Result<(AlignmentModel, SentAlignHistory)> {
    if corpus.is_empty() {
        return Err(Error::Precondition("empty parallel corpus".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    let mut model = AlignmentModel::from_space(init, &corpus.source_languages(), &corpus.target_lang, config.params)?;
    let encoded = model.encode_all(&corpus.pairs);
    let mut history = SentAlignHistory {
        initial_loss: loss_encoded(&model, &encoded)?,
        epoch_losses: Vec::with_capacity(config.epochs),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut rising = 0;
    for _ in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<EncodedPair> = chunk.iter().map(|&i| encoded[i].clone()).collect();
            sum += loss_encoded(&model, &batch)?;
            batches += 1;
            step_encoded(&mut model, &batch)?;
        }
        model.epoch += 1;
        let mean = sum / batches as f64;
        if let Some(&prev) = history.epoch_losses.last() {
            if mean > prev + 1e-6 {
                rising += 1;
            } else {
                rising = 0;
            }
        }
        history.epoch_losses.push(mean);
        log::debug!("sent-align epoch {}: loss {mean:.6e}", model.epoch);
        if rising >= 5 {
            return Err(Error::Divergence {
                stage: "sentence alignment".into(),
                detail: format!("epoch loss rose 5 epochs in a row: {:?}", &history.epoch_losses[history.epoch_losses.len() - 6..]),
            });
        }
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn pair(lang: &str, s: &str, t: &str) -> SentencePair {
        SentencePair {
            source_lang: lang.into(),
            source: toks(s),
            target: toks(t),
        }
    }

    fn space(lang: &str, words: &[&str], m: Array2<f64>) -> EmbeddingSpace {
        EmbeddingSpace::from_rows(lang, words.iter().map(|s| s.to_string()).collect(), m).unwrap()
    }

    fn random_setup(seed: u64, params: SentAlignParams) -> (AlignmentModel, Vec<SentencePair>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.random_range(1..5);
        let vs = rng.random_range(2..7);
        let vt = rng.random_range(2..7);
        let src_words: Vec<String> = (0..vs).map(|i| format!("s{i}")).collect();
        let tgt_words: Vec<String> = (0..vt).map(|i| format!("t{i}")).collect();
        let ps = Array2::from_shape_fn((vs, dim), |_| StandardNormal.sample(&mut rng));
        let pt = Array2::from_shape_fn((vt, dim), |_| StandardNormal.sample(&mut rng));
        let init = MultilingualSpace::from_spaces([
            EmbeddingSpace::from_rows("de", src_words.clone(), ps).unwrap(),
            EmbeddingSpace::from_rows("en", tgt_words.clone(), pt).unwrap(),
        ])
        .unwrap();
        let mut model = AlignmentModel::from_space(&init, &["de".to_string()], "en", params).unwrap();
        // move P away from P₀ so the drift term has a gradient
        let jitter = Array2::from_shape_fn(model.p.dim(), |_| { let z: f64 = StandardNormal.sample(&mut rng); 0.3 * z });
        model.p += &jitter;
        let n = rng.random_range(1..5);
        let pairs = (0..n)
            .map(|_| {
                let ls = rng.random_range(1..4);
                let lt = rng.random_range(1..4);
                SentencePair {
                    source_lang: "de".into(),
                    source: (0..ls).map(|_| src_words[rng.random_range(0..vs)].clone()).collect(),
                    target: (0..lt).map(|_| tgt_words[rng.random_range(0..vt)].clone()).collect(),
                }
            })
            .collect();
        (model, pairs)
    }

    #[test]
    fn sentence_vector_means() {
        let s = space("en", &["a", "b", "w"], array![[1.0, 0.0], [0.0, 1.0], [2.0, 3.0]]);
        assert_eq!(sentence_vector(&s, &toks("w")).unwrap(), array![2.0, 3.0]);
        assert_eq!(sentence_vector(&s, &toks("a b")).unwrap(), array![0.5, 0.5]);
        assert_eq!(sentence_vector(&s, &toks("w w w")).unwrap(), array![2.0, 3.0]);
        assert_eq!(sentence_vector(&s, &toks("a zz")).unwrap(), array![0.5, 0.0]);
        assert_eq!(sentence_vector(&s, &toks("zz")).unwrap(), array![0.0, 0.0]);
    }

    fn mirrored() -> (MultilingualSpace, Vec<SentencePair>) {
        let m = array![[1.0, 2.0], [-1.0, 0.5], [0.3, 0.3]];
        let init = MultilingualSpace::from_spaces([
            space("de", &["a", "b", "c"], m.clone()),
            space("en", &["a", "b", "c"], m),
        ])
        .unwrap();
        let pairs = vec![pair("de", "a b", "a b"), pair("de", "c", "c"), pair("de", "a c a", "a c a")];
        (init, pairs)
    }

    #[test]
    fn loss_with_aligned_pairs_is_regularizer_only() {
        let (init, pairs) = mirrored();
        let params = SentAlignParams {
            mu: 0.7,
            mu_source: 0.1,
            mu_target: 0.2,
            ..SentAlignParams::default()
        };
        let model = AlignmentModel::from_space(&init, &["de".into()], "en", params).unwrap();
        let expected = 0.05 * sq_norm(&model.p) + 0.1 * sq_norm(&model.q);
        assert!((sent_align_loss(&model, &pairs).unwrap() - expected).abs() < 1e-12);

        let zero = SentAlignParams {
            mu: 0.0,
            mu_source: 0.0,
            mu_target: 0.0,
            ..SentAlignParams::default()
        };
        let model = AlignmentModel::from_space(&init, &["de".into()], "en", zero).unwrap();
        assert_eq!(sent_align_loss(&model, &pairs).unwrap(), 0.0);
    }

    #[test]
    fn scalar_toy_matches_hand_evaluation() {
        // P, Q are 1x1 / 2x1; one pair "x" -> "y z"
        let init = MultilingualSpace::from_spaces([
            space("de", &["x"], array![[1.5]]),
            space("en", &["y", "z"], array![[0.5], [-2.0]]),
        ])
        .unwrap();
        let params = SentAlignParams {
            mu: 3.0,
            mu_source: 0.2,
            mu_target: 0.4,
            ..SentAlignParams::default()
        };
        let mut model = AlignmentModel::from_space(&init, &["de".into()], "en", params).unwrap();
        model.p[[0, 0]] = 2.0;
        let p = 2.0_f64;
        let p0 = 1.5_f64;
        let (qy, qz) = (0.5_f64, -2.0_f64);
        let hand = 0.5 * (p - p0).powi(2)
            + 3.0 / 1.0 * (p - (qy + qz) / 2.0).abs()
            + 0.1 * p * p
            + 0.2 * (qy * qy + qz * qz);
        let got = sent_align_loss(&model, &[pair("de", "x", "y z")]).unwrap();
        assert!((got - hand).abs() < 1e-12, "{got} vs {hand}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let params = SentAlignParams {
            mu: 0.8,
            mu_source: 0.05,
            mu_target: 0.07,
            ..SentAlignParams::default()
        };
        for seed in 0..100 {
            let (model, pairs) = random_setup(seed, params);
            let (gp, gq) = sent_align_gradients(&model, &pairs);
            let h = 1e-5;
            for which in 0..2 {
                let shape = if which == 0 { model.p.dim() } else { model.q.dim() };
                for i in 0..shape.0 {
                    for j in 0..shape.1 {
                        let mut plus = model.clone();
                        let mut minus = model.clone();
                        if which == 0 {
                            plus.p[[i, j]] += h;
                            minus.p[[i, j]] -= h;
                        } else {
                            plus.q[[i, j]] += h;
                            minus.q[[i, j]] -= h;
                        }
                        let fd = (sent_align_loss(&plus, &pairs).unwrap() - sent_align_loss(&minus, &pairs).unwrap()) / (2.0 * h);
                        let an = if which == 0 { gp[[i, j]] } else { gq[[i, j]] };
                        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                        assert!(rel < 1e-4, "seed {seed} param {which} [{i},{j}]: fd {fd} analytic {an}");
                    }
                }
            }
        }
    }

    #[test]
    fn zero_gradient_leaves_model_unchanged() {
        let (init, pairs) = mirrored();
        let params = SentAlignParams {
            mu: 1.0,
            mu_source: 0.0,
            mu_target: 0.0,
            ..SentAlignParams::default()
        };
        let mut model = AlignmentModel::from_space(&init, &["de".into()], "en", params).unwrap();
        let before = (model.p.clone(), model.q.clone());
        sent_align_step(&mut model, &pairs).unwrap();
        assert_eq!(model.p, before.0);
        assert_eq!(model.q, before.1);
    }

    #[test]
    fn full_batch_step_decreases_loss() {
        let params = SentAlignParams {
            mu: 1.0,
            mu_source: 0.01,
            mu_target: 0.01,
            eta: 0.01,
            epsilon: 1e-12,
        };
        for seed in 0..20 {
            let (mut model, pairs) = random_setup(seed, params);
            let before = sent_align_loss(&model, &pairs).unwrap();
            sent_align_step(&mut model, &pairs).unwrap();
            let after = sent_align_loss(&model, &pairs).unwrap();
            assert!(after < before, "seed {seed}: {before} -> {after}");
        }
    }

    #[test]
    fn identical_pairs_start_at_regularizer() {
        let (init, pairs) = mirrored();
        let corpus = AlignmentCorpus::new("en", pairs).unwrap();
        let config = SentAlignConfig {
            epochs: 1,
            ..SentAlignConfig::default()
        };
        let (model, hist) = train_sent_align(&corpus, &init, &config).unwrap();
        let p0 = model.p0.clone();
        let q0 = init.space("en").unwrap().matrix().clone();
        let reg = 0.5 * config.params.mu_source * sq_norm(&p0) + 0.5 * config.params.mu_target * sq_norm(&q0);
        assert!((hist.initial_loss - reg).abs() < 1e-18);
    }

    #[test]
    fn empty_corpus_rejected() {
        let (init, _) = mirrored();
        let corpus = AlignmentCorpus::new("en", vec![]).unwrap();
        assert!(matches!(
            train_sent_align(&corpus, &init, &SentAlignConfig::default()),
            Err(Error::Precondition(_))
        ));
        assert!(AlignmentCorpus::new("en", vec![pair("de", "", "a")]).is_err());
    }

    #[test]
    fn languages_are_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let words: Vec<String> = (0..6).map(|i| format!("w{i}")).collect();
        let mk = |rng: &mut ChaCha8Rng, lang: &str| {
            EmbeddingSpace::from_rows(lang, words.clone(), Array2::from_shape_fn((6, 3), |_| StandardNormal.sample(rng))).unwrap()
        };
        let init = MultilingualSpace::from_spaces([mk(&mut rng, "de"), mk(&mut rng, "fr"), mk(&mut rng, "en")]).unwrap();
        let mut pairs = Vec::new();
        for lang in ["de", "fr"] {
            for _ in 0..40 {
                let len = rng.random_range(1..5);
                let idx: Vec<usize> = (0..len).map(|_| rng.random_range(0..6)).collect();
                let s = idx.iter().map(|&i| words[i].clone()).collect::<Vec<_>>();
                pairs.push(SentencePair {
                    source_lang: lang.into(),
                    source: s.clone(),
                    target: s,
                });
            }
        }
        let corpus = AlignmentCorpus::new("en", pairs).unwrap();
        let parts: Vec<_> = corpus.source_languages().iter().map(|l| corpus.for_language(l)).collect();
        let joined = AlignmentCorpus::concat(&parts).unwrap();
        let config = SentAlignConfig {
            epochs: 3,
            batch_size: 16,
            shuffle: false,
            ..SentAlignConfig::default()
        };
        let (a, _) = train_sent_align(&corpus, &init, &config).unwrap();
        let (b, _) = train_sent_align(&joined, &init, &config).unwrap();
        assert_eq!(a.p, b.p);
        assert_eq!(a.q, b.q);
    }

    #[test]
    fn corpus_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pc.tsv");
        let corpus = AlignmentCorpus::new("en", vec![pair("de", "der hund", "the dog"), pair("fr", "le chat", "the cat")]).unwrap();
        save_parallel_corpus(&corpus, &path).unwrap();
        assert_eq!(load_parallel_corpus(&path, "en").unwrap(), corpus);
        std::fs::write(&path, "de\tonly two\n").unwrap();
        assert!(matches!(load_parallel_corpus(&path, "en"), Err(Error::Parse { line: 1, .. })));
    }
}
