//! Finite-difference gradient checks for every layer, loss and model on
//! small seeded configurations.

use ndarray::{Array1, Array2, Ix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::classifiers::{
    weighted_ce_logit_grad, weighted_ce_loss, ArchConfig, Architecture, ClassifierModel, EmbeddingTable, EncodedDoc,
    LabeledExample,
};
use crate::embedding::{EmbeddingSpace, MultilingualSpace};
use crate::error::Result;
use crate::multitask::{alignment_task_gradients, alignment_task_loss, MultitaskConfig, MultitaskModel};
use crate::nn::{
    dropout, grad_check, join, max_over_time, max_over_time_backward, softmax, zero_grad, Activation, Attention, BiGru,
    Conv1d, Dense, GradCheckReport, GruCell, Module, Parameter,
};
use crate::sent_align::{sent_align_gradients, sent_align_loss, AlignmentModel, SentAlignParams, SentencePair};

/// Step used for central differences.
pub const STEP: f64 = 1e-5;

/// Relative error every check must stay below.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Dense,
    ConvMaxPool,
    Gru,
    BiGru,
    Attention,
    Dropout,
    WeightedCrossEntropy,
    SentAlignLoss,
    AlignmentTaskLoss,
    FtMlp,
    MfCnn,
    BiGruAtt,
    Han,
    Multitask,
}

impl Component {
    pub const ALL: [Component; 14] = [
        Component::Dense,
        Component::ConvMaxPool,
        Component::Gru,
        Component::BiGru,
        Component::Attention,
        Component::Dropout,
        Component::WeightedCrossEntropy,
        Component::SentAlignLoss,
        Component::AlignmentTaskLoss,
        Component::FtMlp,
        Component::MfCnn,
        Component::BiGruAtt,
        Component::Han,
        Component::Multitask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::Dense => "layer/dense",
            Component::ConvMaxPool => "layer/conv1d+max-pool",
            Component::Gru => "layer/gru",
            Component::BiGru => "layer/bi-gru",
            Component::Attention => "layer/attention",
            Component::Dropout => "layer/dropout",
            Component::WeightedCrossEntropy => "loss/weighted-cross-entropy",
            Component::SentAlignLoss => "loss/sentence-alignment",
            Component::AlignmentTaskLoss => "loss/multitask-alignment",
            Component::FtMlp => "model/ft-mlp",
            Component::MfCnn => "model/mf-cnn",
            Component::BiGruAtt => "model/bi-gru-att",
            Component::Han => "model/han",
            Component::Multitask => "model/multitask",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub component: Component,
    pub configs: usize,
    /// Worst case over all configurations.
    pub report: GradCheckReport,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.report.passed(TOLERANCE)
    }
}

fn randn(rng: &mut ChaCha8Rng, shape: (usize, usize), scale: f64) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

fn randn1(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

/// Glorot init leaves biases at zero; random biases exercise more paths.
fn jitter_biases<M: Module + ?Sized>(m: &mut M, rng: &mut ChaCha8Rng, scale: f64) {
    m.visit("", &mut |_, p| {
        if p.shape().len() == 1 {
            p.value.mapv_inplace(|_| {
                let z: f64 = StandardNormal.sample(rng);
                scale * z
            });
        }
    });
}

fn as_mat(p: &Parameter) -> Array2<f64> {
    p.value.clone().into_dimensionality::<Ix2>().expect("matrix parameter")
}

/// A layer plus its input, both treated as trainable.
struct Probed<L> {
    layer: L,
    input: Parameter,
}

impl<L: Module> Module for Probed<L> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        self.layer.visit(&join(prefix, "layer"), f);
        f(&join(prefix, "input"), &mut self.input);
    }
}

fn check_dense(rng: &mut ChaCha8Rng, seed: u64) -> GradCheckReport {
    let act = [Activation::Identity, Activation::Tanh, Activation::Sigmoid, Activation::Relu][seed as usize % 4];
    let (n, i, o) = (1 + seed as usize % 3, 2 + seed as usize % 4, 1 + seed as usize % 3);
    let mut layer = Dense::new(i, o, act, rng);
    jitter_biases(&mut layer, rng, 0.3);
    let mut m = Probed {
        layer,
        input: Parameter::new(randn(rng, (n, i), 1.0).into_dyn()),
    };
    let probe = randn(rng, (n, o), 1.0);
    grad_check(
        &mut m,
        |m: &mut Probed<Dense>, grad| {
            let x = as_mat(&m.input);
            let y = m.layer.forward(x.view()).expect("dense forward");
            if grad {
                zero_grad(m);
                let dx = m.layer.backward(x.view(), y.view(), probe.view());
                m.input.grad_mat().assign(&dx);
            }
            (&y * &probe).sum()
        },
        STEP,
    )
}

fn check_conv(rng: &mut ChaCha8Rng, seed: u64) -> GradCheckReport {
    let k = 1 + seed as usize % 4;
    let n = 1 + seed as usize % 7;
    let (d, f) = (2 + seed as usize % 3, 1 + seed as usize % 4);
    let act = if seed % 2 == 0 { Activation::Tanh } else { Activation::Identity };
    let mut layer = Conv1d::new(d, k, f, act, rng);
    jitter_biases(&mut layer, rng, 0.3);
    let mut m = Probed {
        layer,
        input: Parameter::new(randn(rng, (n, d), 1.0).into_dyn()),
    };
    let probe = randn1(rng, f, 1.0);
    grad_check(
        &mut m,
        |m: &mut Probed<Conv1d>, grad| {
            let x = as_mat(&m.input);
            let cache = m.layer.forward(x.view()).expect("conv forward");
            let (pooled, pool) = max_over_time(cache.output.view());
            if grad {
                zero_grad(m);
                let d_maps = max_over_time_backward(&pool, probe.view());
                let dx = m.layer.backward(&cache, d_maps.view());
                m.input.grad_mat().assign(&dx);
            }
            pooled.dot(&probe)
        },
        STEP,
    )
}

struct GruWithState {
    cell: GruCell,
    xs: Parameter,
    h0: Parameter,
}

impl Module for GruWithState {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        self.cell.visit(&join(prefix, "cell"), f);
        f(&join(prefix, "xs"), &mut self.xs);
        f(&join(prefix, "h0"), &mut self.h0);
    }
}

fn check_gru(rng: &mut ChaCha8Rng, seed: u64) -> GradCheckReport {
    let steps = 1 + seed as usize % 5;
    let (d, h) = (2 + seed as usize % 3, 2 + seed as usize % 3);
    let mut cell = GruCell::new(d, h, rng);
    jitter_biases(&mut cell, rng, 0.5);
    let mut m = GruWithState {
        cell,
        xs: Parameter::new(randn(rng, (steps, d), 1.0).into_dyn()),
        h0: Parameter::new(randn1(rng, h, 0.5).into_dyn()),
    };
    let probe = randn(rng, (steps, h), 1.0);
    grad_check(
        &mut m,
        |m: &mut GruWithState, grad| {
            let xs = as_mat(&m.xs);
            let h0 = m.h0.vec().to_owned();
            let cache = m.cell.forward(xs.view(), Some(h0.view())).expect("gru forward");
            if grad {
                zero_grad(m);
                let (dx, dh0) = m.cell.backward(xs.view(), &cache, probe.view());
                m.xs.grad_mat().assign(&dx);
                m.h0.grad_vec().assign(&dh0);
            }
            (&cache.states * &probe).sum()
        },
        STEP,
    )
}

fn check_bigru(rng: &mut ChaCha8Rng, seed: u64) -> GradCheckReport {
    let steps = 1 + seed as usize % 6;
    let (d, h) = (2 + seed as usize % 3, 2 + seed as usize % 4);
    let mut layer = BiGru::new(d, h, rng);
    jitter_biases(&mut layer, rng, 0.5);
    let mut m = Probed {
        layer,
        input: Parameter::new(randn(rng, (steps, d), 1.0).into_dyn()),
    };
    let probe = randn(rng, (steps, 2 * h), 1.0);
    grad_check(
        &mut m,
        |m: &mut Probed<BiGru>, grad| {
            let xs = as_mat(&m.input);
            let cache = m.layer.run(xs.view()).expect("bi-gru forward");
            if grad {
                zero_grad(m);
                let dx = m.layer.backprop(xs.view(), &cache, probe.view());
                m.input.grad_mat().assign(&dx);
            }
            (&cache.states * &probe).sum()
        },
        STEP,
    )
}

fn check_attention(rng: &mut ChaCha8Rng, seed: u64) -> GradCheckReport {
    let n = 1 + seed as usize % 5;
    let (d, a) = (3 + seed as usize % 3, 2 + seed as usize % 4);
    let mut layer = Attention::new(d, a, rng);
    jitter_biases(&mut layer, rng, 0.3);
    let mut m = Probed {
        layer,
        input: Parameter::new(randn(rng, (n, d), 1.0).into_dyn()),
    };
    let probe = randn1(rng, d, 1.0);
    grad_check(
        &mut m,
        |m: &mut Probed<Attention>, grad| {
            let states = as_mat(&m.input);
            let (s, cache) = m.layer.forward(states.view()).expect("attention forward");
            if grad {
                zero_grad(m);
                let dstates = m.layer.backward(states.view(), &cache, probe.view());
                m.input.grad_mat().assign(&dstates);
            }
            s.dot(&probe)
        },
        STEP,
    )
}

/// Dense → dropout with a mask replayed from a fixed seed.
fn check_dropout(rng: &mut ChaCha8Rng, seed: u64) -> GradCheckReport {
    let (n, i, o) = (2, 3 + seed as usize % 3, 4 + seed as usize % 3);
    let rate = [0.1, 0.3, 0.5, 0.7][seed as usize % 4];
    let mut layer = Dense::new(i, o, Activation::Tanh, rng);
    jitter_biases(&mut layer, rng, 0.3);
    let mut m = Probed {
        layer,
        input: Parameter::new(randn(rng, (n, i), 1.0).into_dyn()),
    };
    let probe = randn(rng, (n, o), 1.0);
    let mask_seed = seed ^ 0xD5;
    grad_check(
        &mut m,
        |m: &mut Probed<Dense>, grad| {
            let x = as_mat(&m.input);
            let y = m.layer.forward(x.view()).expect("dense forward");
            let mut mask_rng = ChaCha8Rng::seed_from_u64(mask_seed);
            let (dropped, mask) = dropout(&y, rate, Some(&mut mask_rng)).expect("valid rate");
            if grad {
                zero_grad(m);
                let dy = &probe * &mask.expect("training mode");
                let dx = m.layer.backward(x.view(), y.view(), dy.view());
                m.input.grad_mat().assign(&dx);
            }
            (&dropped * &probe).sum()
        },
        STEP,
    )
}

struct Logits(Parameter);

impl Module for Logits {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        f(&join(prefix, "logits"), &mut self.0);
    }
}

fn check_weighted_ce(rng: &mut ChaCha8Rng, seed: u64) -> GradCheckReport {
    let (b, c) = (1 + seed as usize % 4, 2 + seed as usize % 4);
    let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..c)).collect();
    let weights: Vec<f64> = (0..c).map(|_| rng.random_range(0.2..3.0)).collect();
    let mut m = Logits(Parameter::new(randn(rng, (b, c), 1.5).into_dyn()));
    grad_check(
        &mut m,
        |m: &mut Logits, grad| {
            let mut probs = as_mat(&m.0);
            for mut r in probs.rows_mut() {
                let s = softmax(r.view());
                r.assign(&s);
            }
            if grad {
                let d = weighted_ce_logit_grad(probs.view(), &labels, &weights);
                m.0.grad_mat().assign(&d);
            }
            weighted_ce_loss(probs.view(), &labels, &weights).expect("distributions").mean()
        },
        STEP,
    )
}

fn space(lang: &str, prefix: &str, m: Array2<f64>) -> EmbeddingSpace {
    let words = (0..m.nrows()).map(|i| format!("{prefix}{i}")).collect();
    EmbeddingSpace::from_rows(lang, words, m).expect("valid toy space")
}

/// Compares analytic and central-difference gradients of `P` and `Q`.
fn check_sent_align(rng: &mut ChaCha8Rng, _seed: u64) -> Result<GradCheckReport> {
    let dim = rng.random_range(1..5);
    let (vs, vt) = (rng.random_range(2..7), rng.random_range(2..7));
    let init = MultilingualSpace::from_spaces([
        space("de", "s", randn(rng, (vs, dim), 1.0)),
        space("en", "t", randn(rng, (vt, dim), 1.0)),
    ])?;
    let params = SentAlignParams {
        mu: rng.random_range(0.1..1.0),
        mu_source: rng.random_range(0.01..0.1),
        mu_target: rng.random_range(0.01..0.1),
        ..SentAlignParams::default()
    };
    let mut model = AlignmentModel::from_space(&init, &["de".to_string()], "en", params)?;
    model.p += &randn(rng, model.p.dim(), 0.3);
    let pairs: Vec<SentencePair> = (0..rng.random_range(1..5))
        .map(|_| {
            let ls = rng.random_range(1..4);
            let lt = rng.random_range(1..4);
            SentencePair {
                source_lang: "de".into(),
                source: (0..ls).map(|_| format!("s{}", rng.random_range(0..vs))).collect(),
                target: (0..lt).map(|_| format!("t{}", rng.random_range(0..vt))).collect(),
            }
        })
        .collect();
    let (gp, gq) = sent_align_gradients(&model, &pairs);
    let mut report = GradCheckReport::default();
    for (which, grad) in [("P", &gp), ("Q", &gq)] {
        for ((i, j), &a) in grad.indexed_iter() {
            let mut plus = model.clone();
            let mut minus = model.clone();
            let (tp, tm) = if which == "P" { (&mut plus.p, &mut minus.p) } else { (&mut plus.q, &mut minus.q) };
            tp[[i, j]] += STEP;
            tm[[i, j]] -= STEP;
            let numeric = (sent_align_loss(&plus, &pairs)? - sent_align_loss(&minus, &pairs)?) / (2.0 * STEP);
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(1e-6);
            report.merge(&GradCheckReport {
                max_rel_error: rel,
                max_abs_error: abs,
                checked: 1,
                worst: format!("{which}[{i},{j}]"),
            });
        }
    }
    Ok(report)
}

fn toy_space(rng: &mut ChaCha8Rng, dim: usize, words: usize) -> Result<MultilingualSpace> {
    MultilingualSpace::from_spaces([
        space("en", "en", randn(rng, (words, dim), 1.0)),
        space("de", "de", randn(rng, (words, dim), 1.0)),
    ])
}

fn toy_doc(rng: &mut ChaCha8Rng, words: usize, classes: usize) -> LabeledExample {
    let lang = if rng.random::<bool>() { "en" } else { "de" };
    let sentences = (0..rng.random_range(1..=3))
        .map(|_| {
            (0..rng.random_range(1..=4))
                // roughly one token in eight is out of vocabulary
                .map(|_| format!("{lang}{}", rng.random_range(0..words + words / 7 + 1)))
                .collect()
        })
        .collect();
    LabeledExample::new(sentences, lang, rng.random_range(0..classes))
}

fn toy_arch(arch: Architecture) -> ArchConfig {
    ArchConfig {
        hidden: 3,
        kernels: vec![1, 2, 3],
        filters: 2,
        dropout: 0.25,
        train_embeddings: true,
        ..ArchConfig::for_arch(arch)
    }
}

/// Weighted cross-entropy through the whole classifier, dropout included,
/// with trainable embeddings.
fn check_classifier(model: &mut ClassifierModel, docs: &[EncodedDoc], weights: &[f64], dropout_seed: u64) -> GradCheckReport {
    grad_check(
        model,
        |m: &mut ClassifierModel, grad| {
            let refs: Vec<&EncodedDoc> = docs.iter().collect();
            let labels: Vec<usize> = docs.iter().map(|d| d.label).collect();
            let mut drop_rng = ChaCha8Rng::seed_from_u64(dropout_seed);
            let pass = m.forward(&refs, Some(&mut drop_rng)).expect("toy forward");
            if grad {
                zero_grad(m);
                let d = weighted_ce_logit_grad(pass.probs.view(), &labels, weights);
                m.backward(&refs, &pass, d.view());
            }
            weighted_ce_loss(pass.probs.view(), &labels, weights).expect("distributions").mean()
        },
        STEP,
    )
}

fn check_architecture(rng: &mut ChaCha8Rng, arch: Architecture, seed: u64) -> Result<GradCheckReport> {
    let classes = 3;
    let space = toy_space(rng, 4, 6)?;
    let table = EmbeddingTable::from_space(&space, true)?;
    let mut model = ClassifierModel::new(toy_arch(arch), table, classes, rng)?;
    jitter_biases(&mut model, rng, 0.3);
    let examples: Vec<LabeledExample> = (0..2).map(|_| toy_doc(rng, 6, classes)).collect();
    let docs = model.encode_examples(&examples)?;
    Ok(check_classifier(&mut model, &docs, &[1.0, 1.5, 0.7], seed ^ 0x5EED))
}

fn toy_multitask(rng: &mut ChaCha8Rng, beta: f64) -> Result<MultitaskModel> {
    let space = toy_space(rng, 5, 8)?;
    let table = EmbeddingTable::from_space(&space, true)?;
    let mut config = MultitaskConfig {
        beta,
        ..MultitaskConfig::default()
    };
    config.model.hidden = 3;
    let mut model = MultitaskModel::new(&config, table, 2, rng)?;
    jitter_biases(&mut model, rng, 0.3);
    Ok(model)
}

fn toy_pairs(rng: &mut ChaCha8Rng, n: usize) -> Vec<SentencePair> {
    (0..n)
        .map(|_| {
            let ids: Vec<usize> = (0..rng.random_range(1..5)).map(|_| rng.random_range(0..9)).collect();
            SentencePair {
                source_lang: "de".into(),
                source: ids.iter().map(|i| format!("de{i}")).collect(),
                target: ids.iter().rev().map(|i| format!("en{i}")).collect(),
            }
        })
        .collect()
}

fn check_alignment_task(rng: &mut ChaCha8Rng, _seed: u64) -> Result<GradCheckReport> {
    let beta = rng.random_range(0.0..0.1);
    let mut model = toy_multitask(rng, beta)?;
    let pairs = toy_pairs(rng, 3);
    Ok(grad_check(
        &mut model,
        |m: &mut MultitaskModel, grad| {
            if grad {
                zero_grad(m);
                alignment_task_gradients(m, "en", &pairs).expect("toy pairs").value
            } else {
                alignment_task_loss(m, "en", &pairs).expect("toy pairs").value
            }
        },
        STEP,
    ))
}

/// Both task objectives of the shared model: classification through the
/// full hierarchy, then alignment through the shared word-level stack.
fn check_multitask(rng: &mut ChaCha8Rng, seed: u64) -> Result<GradCheckReport> {
    let mut model = toy_multitask(rng, 0.01)?;
    let examples: Vec<LabeledExample> = (0..2)
        .map(|_| {
            let mut e = toy_doc(rng, 8, 2);
            e.label %= 2;
            e
        })
        .collect();
    let docs = model.classifier.encode_examples(&examples)?;
    let mut report = check_classifier(&mut model.classifier, &docs, &[1.0, 1.3], seed ^ 0x7A5C);
    report.merge(&check_alignment_task(rng, seed)?);
    Ok(report)
}

/// One seeded configuration of one component.
pub fn check_component(component: Component, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    Ok(match component {
        Component::Dense => check_dense(rng, seed),
        Component::ConvMaxPool => check_conv(rng, seed),
        Component::Gru => check_gru(rng, seed),
        Component::BiGru => check_bigru(rng, seed),
        Component::Attention => check_attention(rng, seed),
        Component::Dropout => check_dropout(rng, seed),
        Component::WeightedCrossEntropy => check_weighted_ce(rng, seed),
        Component::SentAlignLoss => check_sent_align(rng, seed)?,
        Component::AlignmentTaskLoss => check_alignment_task(rng, seed)?,
        Component::FtMlp => check_architecture(rng, Architecture::FtMlp, seed)?,
        Component::MfCnn => check_architecture(rng, Architecture::MfCnn, seed)?,
        Component::BiGruAtt => check_architecture(rng, Architecture::BiGruAtt, seed)?,
        Component::Han => check_architecture(rng, Architecture::Han, seed)?,
        Component::Multitask => check_multitask(rng, seed)?,
    })
}

/// Runs `configs` seeded configurations (seeds `base_seed..`) of every
/// component and keeps the worst report of each.
pub fn run_gradient_suite(configs: usize, base_seed: u64) -> Result<Vec<SuiteEntry>> {
    Component::ALL
        .iter()
        .map(|&component| {
            let mut report = GradCheckReport::default();
            for i in 0..configs as u64 {
                report.merge(&check_component(component, base_seed.wrapping_add(i))?);
            }
            Ok(SuiteEntry {
                component,
                configs,
                report,
            })
        })
        .collect()
}
