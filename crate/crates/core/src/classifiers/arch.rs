use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::embed::EmbeddingTable;
use super::LabeledExample;
use crate::error::{Error, Result};
use crate::nn::{
    dropout, join, max_over_time, max_over_time_backward, softmax, Activation, Attention, AttentionCache, BiGru,
    BiGruCache, Conv1d, ConvCache, Dense, MaxPool, Module, Parameter,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    FtMlp,
    MfCnn,
    BiGruAtt,
    Han,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [Architecture::FtMlp, Architecture::MfCnn, Architecture::BiGruAtt, Architecture::Han];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::FtMlp => "ft-mlp",
            Architecture::MfCnn => "mf-cnn",
            Architecture::BiGruAtt => "bi-gru-att",
            Architecture::Han => "han",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown architecture `{s}`")))
    }
}

/// Layer sizes and optimisation settings for one architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub arch: Architecture,
    /// MLP hidden units, or GRU units per direction.
    pub hidden: usize,
    pub kernels: Vec<usize>,
    pub filters: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    /// Documents are truncated to this many tokens.
    pub max_tokens: usize,
    pub train_embeddings: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig::for_arch(Architecture::FtMlp)
    }
}

impl ArchConfig {
    pub fn for_arch(arch: Architecture) -> Self {
        let base = ArchConfig {
            arch,
            hidden: 0,
            kernels: Vec::new(),
            filters: 0,
            dropout: 0.0,
            learning_rate: 1e-3,
            max_tokens: 400,
            train_embeddings: false,
        };
        match arch {
            Architecture::FtMlp => ArchConfig {
                hidden: 512,
                dropout: 0.7,
                learning_rate: 1e-2,
                ..base
            },
            Architecture::MfCnn => ArchConfig {
                kernels: vec![3, 4, 5],
                filters: 200,
                dropout: 0.3,
                ..base
            },
            Architecture::BiGruAtt => ArchConfig {
                hidden: 150,
                dropout: 0.3,
                ..base
            },
            Architecture::Han => ArchConfig {
                hidden: 50,
                dropout: 0.5,
                train_embeddings: true,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {}", self.learning_rate)));
        }
        if self.max_tokens == 0 {
            return Err(Error::InvalidConfig("max_tokens must be positive".into()));
        }
        match self.arch {
            Architecture::MfCnn if self.kernels.is_empty() || self.kernels.contains(&0) || self.filters == 0 => {
                Err(Error::InvalidConfig("mf-cnn needs positive kernels and filters".into()))
            }
            Architecture::FtMlp | Architecture::BiGruAtt | Architecture::Han if self.hidden == 0 => {
                Err(Error::InvalidConfig(format!("{} needs hidden > 0", self.arch)))
            }
            _ => Ok(()),
        }
    }
}

/// A document as table row ids, one list per sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedDoc {
    pub sentences: Vec<Vec<usize>>,
    pub label: usize,
}

impl EncodedDoc {
    pub fn flat(&self) -> Vec<usize> {
        self.sentences.concat()
    }

    pub fn len(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Word-level stack shared by the hierarchical classifier and the
/// multitask sentence encoder, plus the sentence-level stack.
#[derive(Debug, Clone)]
pub struct HanEncoder {
    pub word_gru: BiGru,
    pub word_attn: Attention,
    pub sent_gru: BiGru,
    pub sent_attn: Attention,
}

#[derive(Debug, Clone)]
pub struct SentenceCache {
    pub inputs: Array2<f64>,
    pub gru: BiGruCache,
    pub attn: AttentionCache,
}

#[derive(Debug, Clone)]
pub struct DocumentCache {
    pub sentences: Vec<SentenceCache>,
    pub sentence_vectors: Array2<f64>,
    pub gru: BiGruCache,
    pub attn: AttentionCache,
}

impl HanEncoder {
    pub fn new<R: Rng + ?Sized>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        HanEncoder {
            word_gru: BiGru::new(dim, hidden, rng),
            word_attn: Attention::new(2 * hidden, 2 * hidden, rng),
            sent_gru: BiGru::new(2 * hidden, hidden, rng),
            sent_attn: Attention::new(2 * hidden, 2 * hidden, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.sent_gru.output_dim()
    }

    /// Embeddings → word bi-GRU → word attention.
    pub fn encode_sentence(&self, table: &EmbeddingTable, ids: &[usize]) -> Result<(Array1<f64>, SentenceCache)> {
        let inputs = table.gather(ids);
        let gru = self.word_gru.run(inputs.view())?;
        let (s, attn) = self.word_attn.forward(gru.states.view())?;
        Ok((s, SentenceCache { inputs, gru, attn }))
    }

    pub fn sentence_backward(
        &mut self,
        table: &mut EmbeddingTable,
        ids: &[usize],
        cache: &SentenceCache,
        ds: ArrayView1<'_, f64>,
    ) {
        let d_states = self.word_attn.backward(cache.gru.states.view(), &cache.attn, ds);
        let dx = self.word_gru.backprop(cache.inputs.view(), &cache.gru, d_states.view());
        table.scatter_grad(ids, dx.view());
    }

    /// Sentence vectors → sentence bi-GRU → sentence attention.
    pub fn encode_document(&self, table: &EmbeddingTable, sentences: &[Vec<usize>]) -> Result<(Array1<f64>, DocumentCache)> {
        if sentences.is_empty() {
            return Err(Error::Precondition("document without sentences".into()));
        }
        let mut caches = Vec::with_capacity(sentences.len());
        let mut sentence_vectors = Array2::zeros((sentences.len(), self.word_attn.state_dim()));
        for (i, ids) in sentences.iter().enumerate() {
            let (v, c) = self.encode_sentence(table, ids)?;
            sentence_vectors.row_mut(i).assign(&v);
            caches.push(c);
        }
        let gru = self.sent_gru.run(sentence_vectors.view())?;
        let (d, attn) = self.sent_attn.forward(gru.states.view())?;
        Ok((
            d,
            DocumentCache {
                sentences: caches,
                sentence_vectors,
                gru,
                attn,
            },
        ))
    }

    pub fn document_backward(
        &mut self,
        table: &mut EmbeddingTable,
        sentences: &[Vec<usize>],
        cache: &DocumentCache,
        dd: ArrayView1<'_, f64>,
    ) {
        let d_states = self.sent_attn.backward(cache.gru.states.view(), &cache.attn, dd);
        let dv = self.sent_gru.backprop(cache.sentence_vectors.view(), &cache.gru, d_states.view());
        for ((ids, c), dvi) in sentences.iter().zip(&cache.sentences).zip(dv.rows()) {
            self.sentence_backward(table, ids, c, dvi);
        }
    }

    /// Parameters used by sentence encoding alone.
    pub fn visit_word_level(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        self.word_gru.visit(&join(prefix, "word_gru"), f);
        self.word_attn.visit(&join(prefix, "word_attn"), f);
    }
}

impl Module for HanEncoder {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        self.visit_word_level(prefix, f);
        self.sent_gru.visit(&join(prefix, "sent_gru"), f);
        self.sent_attn.visit(&join(prefix, "sent_attn"), f);
    }
}

/// Document → fixed-size feature vector, per architecture.
#[derive(Debug, Clone)]
pub enum Encoder {
    /// Mean of word vectors through one dense layer.
    Mean { hidden: Dense },
    /// Parallel convolutions, each max-pooled over time, concatenated.
    Cnn { convs: Vec<Conv1d> },
    /// Bidirectional GRU over tokens with attention pooling.
    Gru { gru: BiGru, attn: Attention },
    Han(HanEncoder),
}

#[derive(Debug, Clone)]
pub enum EncoderCache {
    Mean { means: Array2<f64>, hidden: Array2<f64> },
    Cnn(Vec<Vec<(ConvCache, MaxPool)>>),
    Gru(Vec<(Array2<f64>, BiGruCache, AttentionCache)>),
    Han(Vec<DocumentCache>),
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(config: &ArchConfig, dim: usize, rng: &mut R) -> Self {
        match config.arch {
            Architecture::FtMlp => Encoder::Mean {
                hidden: Dense::new(dim, config.hidden, Activation::Relu, rng),
            },
            Architecture::MfCnn => Encoder::Cnn {
                convs: config
                    .kernels
                    .iter()
                    .map(|&k| Conv1d::new(dim, k, config.filters, Activation::Relu, rng))
                    .collect(),
            },
            Architecture::BiGruAtt => {
                let gru = BiGru::new(dim, config.hidden, rng);
                let attn = Attention::new(gru.output_dim(), gru.output_dim(), rng);
                Encoder::Gru { gru, attn }
            }
            Architecture::Han => Encoder::Han(HanEncoder::new(dim, config.hidden, rng)),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Encoder::Mean { hidden } => hidden.output_dim(),
            Encoder::Cnn { convs } => convs.iter().map(Conv1d::filters).sum(),
            Encoder::Gru { gru, .. } => gru.output_dim(),
            Encoder::Han(h) => h.output_dim(),
        }
    }

    pub fn encode(&self, table: &EmbeddingTable, docs: &[&EncodedDoc]) -> Result<(Array2<f64>, EncoderCache)> {
        let mut features = Array2::zeros((docs.len(), self.output_dim()));
        let cache = match self {
            Encoder::Mean { hidden } => {
                let mut means = Array2::zeros((docs.len(), table.dim()));
                for (mut row, doc) in means.rows_mut().into_iter().zip(docs) {
                    let ids = doc.flat();
                    row.assign(&table.gather(&ids).mean_axis(Axis(0)).expect("non-empty document"));
                }
                let h = hidden.forward(means.view())?;
                features.assign(&h);
                EncoderCache::Mean { means, hidden: h }
            }
            Encoder::Cnn { convs } => {
                let mut all = Vec::with_capacity(docs.len());
                for (i, doc) in docs.iter().enumerate() {
                    let x = table.gather(&doc.flat());
                    let mut per_conv = Vec::with_capacity(convs.len());
                    let mut offset = 0;
                    for conv in convs {
                        let c = conv.forward(x.view())?;
                        let (pooled, pool) = max_over_time(c.output.view());
                        features.slice_mut(s![i, offset..offset + pooled.len()]).assign(&pooled);
                        offset += pooled.len();
                        per_conv.push((c, pool));
                    }
                    all.push(per_conv);
                }
                EncoderCache::Cnn(all)
            }
            Encoder::Gru { gru, attn } => {
                let mut all = Vec::with_capacity(docs.len());
                for (i, doc) in docs.iter().enumerate() {
                    let x = table.gather(&doc.flat());
                    let g = gru.run(x.view())?;
                    let (v, a) = attn.forward(g.states.view())?;
                    features.row_mut(i).assign(&v);
                    all.push((x, g, a));
                }
                EncoderCache::Gru(all)
            }
            Encoder::Han(han) => {
                let mut all = Vec::with_capacity(docs.len());
                for (i, doc) in docs.iter().enumerate() {
                    let (v, c) = han.encode_document(table, &doc.sentences)?;
                    features.row_mut(i).assign(&v);
                    all.push(c);
                }
                EncoderCache::Han(all)
            }
        };
        Ok((features, cache))
    }

    pub fn backward(
        &mut self,
        table: &mut EmbeddingTable,
        docs: &[&EncodedDoc],
        cache: &EncoderCache,
        d_features: ArrayView2<'_, f64>,
    ) {
        match (self, cache) {
            (Encoder::Mean { hidden }, EncoderCache::Mean { means, hidden: h }) => {
                let d_means = hidden.backward(means.view(), h.view(), d_features);
                if table.trainable() {
                    for (doc, dm) in docs.iter().zip(d_means.rows()) {
                        let ids = doc.flat();
                        let share = &dm / ids.len() as f64;
                        let block = share.broadcast((ids.len(), share.len())).expect("row broadcast");
                        table.scatter_grad(&ids, block);
                    }
                }
            }
            (Encoder::Cnn { convs }, EncoderCache::Cnn(all)) => {
                for ((doc, per_conv), df) in docs.iter().zip(all).zip(d_features.rows()) {
                    let ids = doc.flat();
                    let mut dx = Array2::zeros((ids.len(), table.dim()));
                    let mut offset = 0;
                    for (conv, (c, pool)) in convs.iter_mut().zip(per_conv) {
                        let f = conv.filters();
                        let d_maps = max_over_time_backward(pool, df.slice(s![offset..offset + f]));
                        dx += &conv.backward(c, d_maps.view());
                        offset += f;
                    }
                    table.scatter_grad(&ids, dx.view());
                }
            }
            (Encoder::Gru { gru, attn }, EncoderCache::Gru(all)) => {
                for ((doc, (x, g, a)), df) in docs.iter().zip(all).zip(d_features.rows()) {
                    let d_states = attn.backward(g.states.view(), a, df);
                    let dx = gru.backprop(x.view(), g, d_states.view());
                    table.scatter_grad(&doc.flat(), dx.view());
                }
            }
            (Encoder::Han(han), EncoderCache::Han(all)) => {
                for ((doc, c), df) in docs.iter().zip(all).zip(d_features.rows()) {
                    han.document_backward(table, &doc.sentences, c, df);
                }
            }
            _ => unreachable!("encoder cache from a different architecture"),
        }
    }
}

impl Module for Encoder {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        match self {
            Encoder::Mean { hidden } => hidden.visit(&join(prefix, "hidden"), f),
            Encoder::Cnn { convs } => {
                for (i, c) in convs.iter_mut().enumerate() {
                    c.visit(&join(prefix, &format!("conv{i}")), f);
                }
            }
            Encoder::Gru { gru, attn } => {
                gru.visit(&join(prefix, "gru"), f);
                attn.visit(&join(prefix, "attn"), f);
            }
            Encoder::Han(h) => h.visit(prefix, f),
        }
    }
}

/// Embedding table, architecture-specific encoder, dropout and a softmax
/// output layer.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    pub config: ArchConfig,
    pub classes: usize,
    pub embeddings: EmbeddingTable,
    pub encoder: Encoder,
    pub output: Dense,
}

/// Everything `backward` needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub probs: Array2<f64>,
    pub features: Array2<f64>,
    pub dropped: Array2<f64>,
    pub mask: Option<Array2<f64>>,
    pub encoder: EncoderCache,
}

impl ClassifierModel {
    pub fn new<R: Rng + ?Sized>(config: ArchConfig, mut embeddings: EmbeddingTable, classes: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if classes == 0 {
            return Err(Error::InvalidConfig("classifier needs at least one class".into()));
        }
        embeddings.table.trainable = config.train_embeddings;
        let encoder = Encoder::new(&config, embeddings.dim(), rng);
        let output = Dense::new(encoder.output_dim(), classes, Activation::Identity, rng);
        Ok(ClassifierModel {
            config,
            classes,
            embeddings,
            encoder,
            output,
        })
    }

    pub fn arch(&self) -> Architecture {
        self.config.arch
    }

    /// Maps tokens to table ids, dropping empty sentences and truncating
    /// to `max_tokens`.
    pub fn encode_example(&self, example: &LabeledExample) -> Result<EncodedDoc> {
        if example.label >= self.classes {
            return Err(Error::Precondition(format!(
                "label {} with {} classes",
                example.label, self.classes
            )));
        }
        let mut budget = self.config.max_tokens;
        let mut sentences = Vec::new();
        for sentence in &example.sentences {
            if budget == 0 {
                break;
            }
            let take = sentence.len().min(budget);
            if take > 0 {
                sentences.push(self.embeddings.ids(&example.language, &sentence[..take]));
                budget -= take;
            }
        }
        if sentences.is_empty() {
            return Err(Error::Precondition("document without tokens".into()));
        }
        Ok(EncodedDoc {
            sentences,
            label: example.label,
        })
    }

    pub fn encode_examples(&self, examples: &[LabeledExample]) -> Result<Vec<EncodedDoc>> {
        examples.iter().map(|e| self.encode_example(e)).collect()
    }

    /// Class probabilities, one row per document. Dropout is active only
    /// when `rng` is given.
    pub fn forward<R: Rng + ?Sized>(&self, docs: &[&EncodedDoc], rng: Option<&mut R>) -> Result<ForwardPass> {
        let (features, encoder) = self.encoder.encode(&self.embeddings, docs)?;
        let (dropped, mask) = dropout(&features, self.config.dropout, rng)?;
        let mut probs = self.output.forward(dropped.view())?;
        for mut row in probs.rows_mut() {
            let p = softmax(row.view());
            row.assign(&p);
        }
        Ok(ForwardPass {
            probs,
            features,
            dropped,
            mask,
            encoder,
        })
    }

    /// Accumulates gradients given `∂L/∂logits`.
    pub fn backward(&mut self, docs: &[&EncodedDoc], pass: &ForwardPass, d_logits: ArrayView2<'_, f64>) {
        // the output layer is linear, so its backward ignores the forward output
        let mut d_features = self.output.backward(pass.dropped.view(), pass.probs.view(), d_logits);
        if let Some(mask) = &pass.mask {
            d_features *= mask;
        }
        self.encoder
            .backward(&mut self.embeddings, docs, &pass.encoder, d_features.view());
    }

    pub fn predict_proba(&self, docs: &[EncodedDoc]) -> Result<Array2<f64>> {
        let mut parts = Vec::new();
        for chunk in docs.chunks(256) {
            let refs: Vec<&EncodedDoc> = chunk.iter().collect();
            parts.push(self.forward::<rand_chacha::ChaCha8Rng>(&refs, None)?.probs);
        }
        if parts.is_empty() {
            return Ok(Array2::zeros((0, self.classes)));
        }
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))
    }

    pub fn predict(&self, docs: &[EncodedDoc]) -> Result<Vec<usize>> {
        let probs = self.predict_proba(docs)?;
        Ok(probs
            .rows()
            .into_iter()
            .map(|r| {
                let mut best = 0;
                for (i, &p) in r.iter().enumerate() {
                    if p > r[best] {
                        best = i;
                    }
                }
                best
            })
            .collect())
    }
}

impl Module for ClassifierModel {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        self.embeddings.visit(&join(prefix, "embeddings"), f);
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.output.visit(&join(prefix, "output"), f);
    }
}
