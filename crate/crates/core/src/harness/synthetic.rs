//! Desk-scale multilingual benchmark with a planted ground truth.
//!
//! A base space of unit concept vectors is shared by all languages. The
//! pivot language uses it as is; every other language sees it through its
//! own random rotation plus Gaussian noise. Each class owns a cluster of
//! topic concepts; documents mix topic tokens with background tokens.
//! A fraction of concepts is spelled identically in every language, which
//! gives identical-string dictionaries something true to find.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::data::{save_classification_tsv, ClassificationDataset};
use crate::align::{save_pairs, BilingualDictionary};
use crate::classifiers::LabeledExample;
use crate::embedding::{save_embeddings, EmbeddingSpace, MultilingualSpace};
use crate::error::{Error, Result};
use crate::linalg::random_orthogonal;
use crate::sent_align::{save_parallel_corpus, AlignmentCorpus, SentencePair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    /// The first language is the pivot; the others are rotated copies.
    pub languages: Vec<String>,
    pub vocab_size: usize,
    pub dim: usize,
    pub classes: usize,
    /// One count per language.
    pub docs_per_language: Vec<usize>,
    /// Standard deviation of the additive noise on rotated spaces.
    pub noise: f64,
    /// Fraction of concepts spelled identically in all languages.
    pub shared_fraction: f64,
    pub topic_words_per_class: usize,
    /// Probability that a document token comes from its class topic.
    pub topic_rate: f64,
    /// Spread of topic vectors around their class centre (0 = identical).
    pub topic_spread: f64,
    pub sentences_per_doc: (usize, usize),
    pub sentence_length: (usize, usize),
    /// Parallel pairs per non-pivot language.
    pub parallel_pairs: usize,
    /// Fraction of each dictionary held out for testing.
    pub dictionary_test_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            languages: vec!["en".into(), "de".into(), "it".into()],
            vocab_size: 1000,
            dim: 50,
            classes: 4,
            docs_per_language: vec![2000, 2000, 200],
            noise: 0.05,
            shared_fraction: 0.1,
            topic_words_per_class: 40,
            topic_rate: 0.1,
            topic_spread: 1.5,
            sentences_per_doc: (1, 3),
            sentence_length: (4, 10),
            parallel_pairs: 1000,
            dictionary_test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("synthetic: {m}")));
        if self.languages.is_empty() {
            return bad("no languages");
        }
        if self.docs_per_language.len() != self.languages.len() {
            return bad("docs_per_language needs one count per language");
        }
        if self.dim == 0 || self.classes == 0 {
            return bad("dim and classes must be positive");
        }
        if self.classes * self.topic_words_per_class >= self.vocab_size {
            return bad("topic vocabularies exhaust the vocabulary");
        }
        if !(0.0..=1.0).contains(&self.topic_rate) || !(0.0..=1.0).contains(&self.shared_fraction) {
            return bad("topic_rate and shared_fraction must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.dictionary_test_fraction) {
            return bad("dictionary_test_fraction must lie in [0, 1)");
        }
        if self.noise < 0.0 || self.topic_spread < 0.0 {
            return bad("noise and topic_spread must be non-negative");
        }
        let ok_range = |(lo, hi): (usize, usize)| lo >= 1 && lo <= hi;
        if !ok_range(self.sentences_per_doc) || !ok_range(self.sentence_length) {
            return bad("sentence ranges must satisfy 1 <= lo <= hi");
        }
        let mut seen = self.languages.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.languages.len() {
            return bad("duplicate language");
        }
        Ok(())
    }

    pub fn pivot(&self) -> &str {
        &self.languages[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// Monolingual spaces (non-pivot ones rotated, hence unaligned).
    pub spaces: MultilingualSpace,
    pub dataset: ClassificationDataset,
    pub corpus: AlignmentCorpus,
    /// Exact translation dictionaries, source language → pivot, already
    /// split into train and test pairs.
    pub dictionaries: BTreeMap<String, BilingualDictionary>,
    /// Rotation applied to each non-pivot language.
    pub rotations: BTreeMap<String, Array2<f64>>,
}

fn unit(v: Array1<f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    if n > 0.0 {
        v / n
    } else {
        v
    }
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    unit(Array1::from_shape_fn(dim, |_| StandardNormal.sample(rng)))
}

pub fn gen_synthetic(config: &SyntheticConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (v, d) = (config.vocab_size, config.dim);

    // concept ids, shuffled once, then carved into topics and background
    let mut concepts: Vec<usize> = (0..v).collect();
    concepts.shuffle(&mut rng);
    let topics: Vec<Vec<usize>> = (0..config.classes)
        .map(|k| concepts[k * config.topic_words_per_class..(k + 1) * config.topic_words_per_class].to_vec())
        .collect();
    let background: Vec<usize> = concepts[config.classes * config.topic_words_per_class..].to_vec();
    let mut shared = vec![false; v];
    let mut by_chance: Vec<usize> = (0..v).collect();
    by_chance.shuffle(&mut rng);
    for &c in by_chance.iter().take((config.shared_fraction * v as f64).round() as usize) {
        shared[c] = true;
    }

    let mut base = Array2::zeros((v, d));
    for c in 0..v {
        base.row_mut(c).assign(&random_unit(d, &mut rng));
    }
    let spread = config.topic_spread / (d as f64).sqrt();
    for topic in &topics {
        let centre = random_unit(d, &mut rng);
        for &c in topic {
            let jitter = Array1::from_shape_fn(d, |_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                spread * z
            });
            base.row_mut(c).assign(&unit(&centre + &jitter));
        }
    }

    let form = |lang: &str, c: usize| if shared[c] { format!("x{c}") } else { format!("{lang}{c}") };
    let pivot = config.pivot().to_string();
    let mut spaces = MultilingualSpace::new();
    let mut rotations = BTreeMap::new();
    for (li, lang) in config.languages.iter().enumerate() {
        let matrix = if li == 0 {
            base.clone()
        } else {
            let r = random_orthogonal(d, &mut rng);
            let mut m = base.dot(&r);
            if config.noise > 0.0 {
                let noise = Normal::new(0.0, config.noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
                m.mapv_inplace(|x| x + noise.sample(&mut rng));
            }
            rotations.insert(lang.clone(), r);
            m
        };
        let words = (0..v).map(|c| form(lang, c)).collect();
        spaces.insert(EmbeddingSpace::from_rows(lang, words, matrix)?)?;
    }

    let sentence = |rng: &mut ChaCha8Rng, lang: &str, label: Option<usize>| -> Vec<String> {
        let len = rng.random_range(config.sentence_length.0..=config.sentence_length.1);
        (0..len)
            .map(|_| {
                let c = match label {
                    Some(k) if rng.random::<f64>() < config.topic_rate => *topics[k].choose(rng).expect("topic words"),
                    Some(_) => *background.choose(rng).expect("background words"),
                    None => rng.random_range(0..v),
                };
                form(lang, c)
            })
            .collect()
    };

    let mut examples = Vec::new();
    for (lang, &n) in config.languages.iter().zip(&config.docs_per_language) {
        for _ in 0..n {
            let label = rng.random_range(0..config.classes);
            let sents = (0..rng.random_range(config.sentences_per_doc.0..=config.sentences_per_doc.1))
                .map(|_| sentence(&mut rng, lang, Some(label)))
                .collect();
            examples.push(LabeledExample::new(sents, lang.as_str(), label));
        }
    }
    let label_names = (0..config.classes).map(|k| format!("c{k}")).collect();
    let dataset = ClassificationDataset::new(label_names, examples)?;

    let mut pairs = Vec::new();
    for lang in &config.languages[1..] {
        for _ in 0..config.parallel_pairs {
            let len = rng.random_range(config.sentence_length.0..=config.sentence_length.1);
            let ids: Vec<usize> = (0..len).map(|_| rng.random_range(0..v)).collect();
            pairs.push(SentencePair {
                source_lang: lang.clone(),
                source: ids.iter().map(|&c| form(lang, c)).collect(),
                target: ids.iter().map(|&c| form(&pivot, c)).collect(),
            });
        }
    }
    let corpus = AlignmentCorpus::new(&pivot, pairs)?;

    let mut dictionaries = BTreeMap::new();
    for (i, lang) in config.languages.iter().enumerate().skip(1) {
        let pairs = (0..v).map(|c| (form(lang, c), form(&pivot, c))).collect();
        let test = (config.dictionary_test_fraction * v as f64).round() as usize;
        let dict = BilingualDictionary::new(lang, &pivot, pairs).split(test, config.seed.wrapping_add(i as u64));
        dictionaries.insert(lang.clone(), dict);
    }

    Ok(SyntheticData {
        spaces,
        dataset,
        corpus,
        dictionaries,
        rotations,
    })
}

/// Writes every artefact under `dir`: `emb.<lang>.txt`, `docs.tsv`,
/// `parallel.tsv`, `dict.<lang>-<pivot>.{train,test}.tsv`.
pub fn write_synthetic(data: &SyntheticData, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for space in data.spaces.spaces() {
        save_embeddings(space, dir.join(format!("emb.{}.txt", space.language())))?;
    }
    save_classification_tsv(&data.dataset, dir.join("docs.tsv"))?;
    save_parallel_corpus(&data.corpus, dir.join("parallel.tsv"))?;
    for (lang, dict) in &data.dictionaries {
        let stem = format!("dict.{lang}-{}", dict.target_lang);
        save_pairs(&dict.train, dir.join(format!("{stem}.train.tsv")))?;
        save_pairs(&dict.test, dir.join(format!("{stem}.test.tsv")))?;
    }
    Ok(())
}
