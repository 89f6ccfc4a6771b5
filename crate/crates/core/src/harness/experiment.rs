//! Mono / mono-transfer / multi experiment orchestration.
//!
//! Every run starts from the same monolingual spaces and the same split.
//! Mono trains and tests on one language over its own space. Mono-transfer
//! trains on the largest other language over the unaligned spaces and tests
//! on the target language. Multi pools every train language over one
//! multilingual variant built by an alignment recipe.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{load_classification_tsv, stratified_split, ClassificationDataset, Split};
use super::report::{save_report, MetricsReport, MetricsRow, Mode};
use super::synthetic::{gen_synthetic, SyntheticConfig};
use crate::align::{
    align_svd, apply_projection, build_pseudo_dictionary, eval_translation, load_dictionary, BilingualDictionary,
    ProjectionKind, ProjectionMatrix,
};
use crate::classifiers::{train_classifier, ArchConfig, Architecture, ClassifierModel, EmbeddingTable, LabeledExample, TrainConfig, TrainHistory};
use crate::embedding::{load_embeddings, save_embeddings, EmbeddingSpace, MultilingualSpace};
use crate::error::{Error, Result};
use crate::linalg::random_orthogonal;
use crate::merge::{merge_bilingual_spaces, MergeOptions};
use crate::metrics::macro_metrics;
use crate::sent_align::{load_parallel_corpus, train_sent_align, AlignmentCorpus, SentAlignConfig};

/// Recipe for one multilingual embedding space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// SVD alignment on the translation dictionary.
    ExpDict,
    /// SVD alignment on identically spelled words.
    PseudoDict,
    /// Sentence-alignment training on the parallel corpus.
    SentAli,
    /// Per-language bilingual spaces merged through the pivot.
    Merge,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::ExpDict, Variant::PseudoDict, Variant::SentAli, Variant::Merge];

    pub fn name(self) -> &'static str {
        match self {
            Variant::ExpDict => "exp_dict",
            Variant::PseudoDict => "pseudo_dict",
            Variant::SentAli => "sent_ali",
            Variant::Merge => "merge",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Used when `docs` is unset.
    pub synthetic: SyntheticConfig,
    /// Classification TSV; switches to file inputs.
    pub docs: Option<PathBuf>,
    /// Embedding file per language.
    pub embeddings: BTreeMap<String, PathBuf>,
    /// `<lang>\t<pivot>` dictionary per non-pivot language.
    pub dictionaries: BTreeMap<String, PathBuf>,
    /// `<lang>\t<source>\t<target>` corpus with the pivot as target.
    pub parallel: Option<PathBuf>,
    /// Defaults to the first language of the documents.
    pub pivot: Option<String>,
    pub split: [f64; 3],
    /// Keep at most this many documents per language (first in file order).
    pub limit_per_language: Option<usize>,
    /// Read at most this many embedding rows per file.
    pub embedding_limit: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            synthetic: SyntheticConfig::default(),
            docs: None,
            embeddings: BTreeMap::new(),
            dictionaries: BTreeMap::new(),
            parallel: None,
            pivot: None,
            split: [0.6, 0.2, 0.2],
            limit_per_language: None,
            embedding_limit: None,
        }
    }
}

/// Optional overrides on top of each architecture's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub archs: Vec<String>,
    pub hidden: Option<usize>,
    pub dropout: Option<f64>,
    pub learning_rate: Option<f64>,
    pub max_tokens: Option<usize>,
    pub train_embeddings: Option<bool>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            archs: vec![Architecture::FtMlp.name().into()],
            hidden: None,
            dropout: None,
            learning_rate: None,
            max_tokens: None,
            train_embeddings: None,
        }
    }
}

impl ModelConfig {
    pub fn architectures(&self) -> Result<Vec<Architecture>> {
        if self.archs.is_empty() {
            return Err(Error::InvalidConfig("no architecture selected".into()));
        }
        self.archs.iter().map(|a| a.parse()).collect()
    }

    pub fn arch_config(&self, arch: Architecture) -> ArchConfig {
        let mut c = ArchConfig::for_arch(arch);
        if let Some(h) = self.hidden {
            c.hidden = h;
        }
        if let Some(d) = self.dropout {
            c.dropout = d;
        }
        if let Some(lr) = self.learning_rate {
            c.learning_rate = lr;
        }
        if let Some(t) = self.max_tokens {
            c.max_tokens = t;
        }
        if let Some(t) = self.train_embeddings {
            c.train_embeddings = t;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub shuffle: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        OptimizerConfig {
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            shuffle: t.shuffle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub modes: Vec<Mode>,
    pub variants: Vec<Variant>,
    /// Languages pooled for multi training; all languages when unset.
    pub train_languages: Option<Vec<String>>,
    /// Languages evaluated; all languages when unset.
    pub test_languages: Option<Vec<String>>,
    /// Fixed mono-transfer training language; otherwise the language with
    /// the most training documents other than the test language.
    pub transfer_source: Option<String>,
    pub pseudo_max_pairs: usize,
    pub sent_align: SentAlignConfig,
    pub merge: MergeOptions,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            modes: vec![Mode::Mono, Mode::MonoTransfer, Mode::Multi],
            variants: Variant::ALL.to_vec(),
            train_languages: None,
            test_languages: None,
            transfer_source: None,
            pseudo_max_pairs: 5000,
            sent_align: SentAlignConfig::default(),
            merge: MergeOptions::default(),
            output_dir: None,
        }
    }
}

/// Top-level experiment description, read from TOML. A single `seed` drives
/// data generation, splitting, alignment and training.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub experiment: ExperimentSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Applies `key = value` overrides. A key is a dotted path
    /// (`optimizer.batch_size`), a top-level key (`seed`), or a leaf name
    /// (`batch_size`) resolved to its shallowest occurrence, which must be
    /// unique. Values are read as TOML literals, falling back to a
    /// bare string.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut value = toml::Value::try_from(self).map_err(|e| Error::Serde(e.to_string()))?;
        for (key, raw) in overrides {
            let path = resolve_key(&value, key)?;
            let parsed = parse_literal(raw);
            set_path(&mut value, &path, parsed)?;
        }
        value
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(format!("after overrides: {e}")))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.optimizer.batch_size,
            max_epochs: self.optimizer.max_epochs,
            patience: self.optimizer.patience,
            shuffle: self.optimizer.shuffle,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for arch in self.model.architectures()? {
            self.model.arch_config(arch).validate()?;
        }
        self.train_config().validate()?;
        if self.experiment.modes.is_empty() {
            return Err(Error::InvalidConfig("no mode selected".into()));
        }
        if self.experiment.modes.contains(&Mode::Multi) && self.experiment.variants.is_empty() {
            return Err(Error::InvalidConfig("multi mode needs at least one embedding variant".into()));
        }
        let [a, b, c] = self.data.split;
        if a <= 0.0 || b <= 0.0 || c <= 0.0 || ((a + b + c) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig("split fractions must be positive and sum to 1".into()));
        }
        if self.data.docs.is_none() {
            self.data.synthetic.validate()?;
        }
        Ok(())
    }
}

fn leaf_paths(value: &toml::Value, prefix: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    if let toml::Value::Table(t) = value {
        for (k, v) in t {
            prefix.push(k.clone());
            out.push(prefix.clone());
            leaf_paths(v, prefix, out);
            prefix.pop();
        }
    }
}

fn resolve_key(value: &toml::Value, key: &str) -> Result<Vec<String>> {
    let key = key.trim_start_matches("--").replace('-', "_");
    if key.contains('.') {
        return Ok(key.split('.').map(String::from).collect());
    }
    if value.get(&key).is_some() {
        return Ok(vec![key]);
    }
    let mut all = Vec::new();
    leaf_paths(value, &mut Vec::new(), &mut all);
    let mut hits: Vec<Vec<String>> = all.into_iter().filter(|p| p.last() == Some(&key)).collect();
    // the shallowest occurrences win
    if let Some(depth) = hits.iter().map(|p| p.len()).min() {
        hits.retain(|p| p.len() == depth);
    }
    match hits.len() {
        1 => Ok(hits.into_iter().next().expect("one hit")),
        0 => Err(Error::InvalidConfig(format!("unknown config key `{key}`"))),
        _ => Err(Error::InvalidConfig(format!(
            "ambiguous config key `{key}`: {}",
            hits.iter().map(|p| p.join(".")).collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(root: &mut toml::Value, path: &[String], value: toml::Value) -> Result<()> {
    let mut node = root;
    for (i, part) in path.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("`{}` is not a section", path[..i].join("."))))?;
        if i + 1 == path.len() {
            let value = match (table.get(part), value) {
                (Some(toml::Value::Float(_)), toml::Value::Integer(n)) => toml::Value::Float(n as f64),
                (_, v) => v,
            };
            table.insert(part.clone(), value);
            return Ok(());
        }
        node = table
            .entry(part.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(Error::InvalidConfig("empty config key".into()))
}

/// Inputs shared by every run of an experiment.
#[derive(Debug, Clone)]
pub struct ExperimentInputs {
    pub pivot: String,
    /// Row-normalized monolingual spaces.
    pub spaces: MultilingualSpace,
    pub dataset: ClassificationDataset,
    pub corpus: Option<AlignmentCorpus>,
    /// Non-pivot language → dictionary into the pivot.
    pub dictionaries: BTreeMap<String, BilingualDictionary>,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Loads or generates the documents, spaces, corpus and dictionaries, then
/// splits the documents.
pub fn prepare_inputs(config: &ExperimentConfig) -> Result<ExperimentInputs> {
    let data = &config.data;
    let (pivot, spaces, mut dataset, corpus, dictionaries) = match &data.docs {
        None => {
            let mut syn = data.synthetic.clone();
            syn.seed = config.seed;
            let generated = stage("generate synthetic data", gen_synthetic(&syn))?;
            (
                syn.pivot().to_string(),
                generated.spaces,
                generated.dataset,
                Some(generated.corpus),
                generated.dictionaries,
            )
        }
        Some(docs) => {
            let dataset = stage("load documents", load_classification_tsv(docs))?;
            let langs = dataset.languages();
            let pivot = data.pivot.clone().unwrap_or_else(|| langs[0].clone());
            let mut spaces = MultilingualSpace::new();
            for lang in &langs {
                let path = data.embeddings.get(lang).ok_or_else(|| {
                    Error::InvalidConfig(format!("no embeddings given for language `{lang}`")).in_stage("load embeddings")
                })?;
                let space = stage("load embeddings", load_embeddings(path, lang, data.embedding_limit))?;
                stage("load embeddings", spaces.insert(space))?;
            }
            let mut dictionaries = BTreeMap::new();
            for (lang, path) in &data.dictionaries {
                dictionaries.insert(lang.clone(), stage("load dictionaries", load_dictionary(path, lang, &pivot))?);
            }
            let corpus = match &data.parallel {
                Some(p) => Some(stage("load parallel corpus", load_parallel_corpus(p, &pivot))?),
                None => None,
            };
            (pivot, spaces, dataset, corpus, dictionaries)
        }
    };
    if let Some(limit) = data.limit_per_language {
        dataset = stage("limit documents", dataset.limit_per_language(limit))?;
    }
    let normalized = stage(
        "normalize embeddings",
        MultilingualSpace::from_spaces(spaces.spaces().map(|s| s.normalize_rows()).collect::<Result<Vec<_>>>()?),
    )?;
    if !normalized.contains(&pivot) {
        return Err(Error::PivotAbsent(pivot).in_stage("prepare inputs"));
    }
    let dataset = stage("split documents", stratified_split(&dataset, data.split, config.seed))?;
    Ok(ExperimentInputs {
        pivot,
        spaces: normalized,
        dataset,
        corpus,
        dictionaries,
    })
}

fn svd_aligned(inputs: &ExperimentInputs, dict_for: impl Fn(&EmbeddingSpace, &EmbeddingSpace) -> Result<BilingualDictionary>) -> Result<MultilingualSpace> {
    let pivot = inputs.spaces.space(&inputs.pivot).expect("pivot checked");
    let mut out = MultilingualSpace::new();
    out.insert(pivot.clone())?;
    for space in inputs.spaces.spaces().filter(|s| s.language() != inputs.pivot) {
        let dict = dict_for(space, pivot)?;
        let alignment = align_svd(space, pivot, &dict, None)?;
        out.insert(apply_projection(space, &alignment.reembedded_source())?)?;
    }
    Ok(out)
}

fn dictionary_for<'a>(inputs: &'a ExperimentInputs, lang: &str) -> Result<&'a BilingualDictionary> {
    inputs
        .dictionaries
        .get(lang)
        .ok_or_else(|| Error::InvalidConfig(format!("no dictionary for `{lang}`")))
}

/// Builds one multilingual space.
pub fn build_variant(inputs: &ExperimentInputs, variant: Variant, config: &ExperimentConfig) -> Result<MultilingualSpace> {
    let exp = &config.experiment;
    match variant {
        Variant::ExpDict => svd_aligned(inputs, |s, _| Ok(dictionary_for(inputs, s.language())?.clone())),
        Variant::PseudoDict => svd_aligned(inputs, |s, p| build_pseudo_dictionary(s, p, exp.pseudo_max_pairs)),
        Variant::SentAli => {
            let corpus = inputs
                .corpus
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("sent_ali needs a parallel corpus".into()))?;
            let mut cfg = exp.sent_align.clone();
            cfg.seed = config.seed;
            let (model, _) = train_sent_align(corpus, &inputs.spaces, &cfg)?;
            let trained = model.to_space()?;
            let mut out = trained.clone();
            for s in inputs.spaces.spaces() {
                if !trained.contains(s.language()) {
                    log::warn!("`{}` absent from the parallel corpus; keeping its monolingual space", s.language());
                    out.insert(s.clone())?;
                }
            }
            Ok(out)
        }
        Variant::Merge => {
            // each bilingual space lives in its own random frame
            let aligned = build_variant(inputs, Variant::ExpDict, config)?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let pivot = aligned.space(&inputs.pivot).expect("pivot kept");
            let dim = pivot.dim();
            let mut merged: Option<MultilingualSpace> = None;
            for space in aligned.spaces().filter(|s| s.language() != inputs.pivot) {
                let rotation = ProjectionMatrix {
                    matrix: random_orthogonal(dim, &mut rng),
                    kind: ProjectionKind::FullOrthogonal,
                    source_lang: space.language().into(),
                    target_lang: space.language().into(),
                };
                let bilingual =
                    MultilingualSpace::from_spaces([apply_projection(pivot, &rotation)?, apply_projection(space, &rotation)?])?;
                merged = Some(match merged {
                    None => bilingual,
                    Some(anchor) => {
                        let mut opts = exp.merge.clone();
                        opts.seed = config.seed;
                        merge_bilingual_spaces(&bilingual, &anchor, &inputs.pivot, &opts)?.merged
                    }
                });
            }
            match merged {
                Some(m) => Ok(m),
                None => Ok(aligned),
            }
        }
    }
}

/// Training record of one classifier run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub arch: Architecture,
    pub mode: Mode,
    pub embedding: String,
    pub train_languages: Vec<String>,
    pub history: TrainHistory,
}

/// Everything an experiment produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: MetricsReport,
    pub runs: Vec<RunRecord>,
    /// Variant → (language → P@1) on the held-out dictionary pairs.
    pub translation_p1: BTreeMap<String, BTreeMap<String, f64>>,
    pub variants: BTreeMap<String, MultilingualSpace>,
}

struct Cell<'a> {
    arch: ArchConfig,
    space: &'a MultilingualSpace,
    train_langs: Vec<String>,
    test_langs: Vec<String>,
}

fn run_cell(cell: &Cell<'_>, dataset: &ClassificationDataset, train_cfg: &TrainConfig) -> Result<(TrainHistory, Vec<(String, crate::metrics::MacroMetrics)>)> {
    let pick = |split: Split| -> Vec<LabeledExample> {
        cell.train_langs
            .iter()
            .flat_map(|l| dataset.select(split, Some(l)))
            .collect()
    };
    let (train, valid) = (pick(Split::Train), pick(Split::Valid));
    let table = EmbeddingTable::from_space(cell.space, cell.arch.train_embeddings)?;
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let model = ClassifierModel::new(cell.arch.clone(), table, dataset.classes(), &mut rng)?;
    let (model, history) = train_classifier(model, &train, &valid, train_cfg)?;
    let mut scores = Vec::new();
    for lang in &cell.test_langs {
        let test = model.encode_examples(&dataset.select(Split::Test, Some(lang)))?;
        let preds = model.predict(&test)?;
        let truths: Vec<usize> = test.iter().map(|d| d.label).collect();
        scores.push((lang.clone(), macro_metrics(&truths, &preds, dataset.classes())));
    }
    Ok((history, scores))
}

fn check_languages(what: &str, langs: &[String], available: &[String]) -> Result<()> {
    match langs.iter().find(|l| !available.contains(l)) {
        Some(l) => Err(Error::InvalidConfig(format!("{what} language `{l}` has no documents"))),
        None => Ok(()),
    }
}

/// Runs every configured mode, architecture and variant and returns the
/// full outcome without writing anything.
pub fn run_experiment_detailed(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    stage("validate config", config.validate())?;
    let archs = config.model.architectures()?;
    let inputs = prepare_inputs(config)?;
    let dataset = &inputs.dataset;
    let langs = dataset.languages();
    let test_langs = config.experiment.test_languages.clone().unwrap_or_else(|| langs.clone());
    let train_langs = config.experiment.train_languages.clone().unwrap_or_else(|| langs.clone());
    stage("validate config", check_languages("test", &test_langs, &langs))?;
    stage("validate config", check_languages("train", &train_langs, &langs))?;
    for l in &test_langs {
        if dataset.select(Split::Test, Some(l)).is_empty() {
            return Err(Error::Precondition(format!("no test documents for `{l}`")).in_stage("validate config"));
        }
    }
    let train_cfg = config.train_config();
    let train_counts: BTreeMap<String, usize> =
        langs.iter().map(|l| (l.clone(), dataset.select(Split::Train, Some(l)).len())).collect();

    let modes = &config.experiment.modes;
    let mut variants = BTreeMap::new();
    let mut translation_p1 = BTreeMap::new();
    if modes.contains(&Mode::Multi) {
        for &v in &config.experiment.variants {
            let space = stage(&format!("build {} embeddings", v.name()), build_variant(&inputs, v, config))?;
            let mut p1 = BTreeMap::new();
            for (lang, dict) in &inputs.dictionaries {
                if dict.test.is_empty() || !space.contains(lang) {
                    continue;
                }
                let at = stage("evaluate translation", eval_translation(&space, &dict.test_dictionary(), &[1]))?;
                p1.insert(lang.clone(), at[&1]);
            }
            translation_p1.insert(v.name().to_string(), p1);
            variants.insert(v.name().to_string(), space);
        }
    }

    let mut report = MetricsReport {
        seed: config.seed,
        rows: Vec::new(),
    };
    let mut runs = Vec::new();
    for &arch in &archs {
        let arch_cfg = config.model.arch_config(arch);
        let mut record = |mode: Mode, embedding: &str, cell: &Cell<'_>, report: &mut MetricsReport| -> Result<()> {
            let stage_name = format!("train {} {} {} on {}", arch, mode.name(), embedding, cell.train_langs.join("+"));
            let (history, scores) = stage(&stage_name, run_cell(cell, dataset, &train_cfg))?;
            log::info!("{stage_name}: best valid F1 {:.4} at epoch {}", history.best_valid_f1, history.best_epoch);
            for (language, metrics) in scores {
                report.rows.push(MetricsRow {
                    language,
                    mode,
                    arch,
                    embedding: embedding.to_string(),
                    metrics,
                });
            }
            runs.push(RunRecord {
                arch,
                mode,
                embedding: embedding.to_string(),
                train_languages: cell.train_langs.clone(),
                history,
            });
            Ok(())
        };

        if modes.contains(&Mode::Mono) {
            for lang in &test_langs {
                let own = MultilingualSpace::from_spaces([inputs.spaces.space(lang).expect("checked").clone()])?;
                let cell = Cell {
                    arch: arch_cfg.clone(),
                    space: &own,
                    train_langs: vec![lang.clone()],
                    test_langs: vec![lang.clone()],
                };
                record(Mode::Mono, "mono", &cell, &mut report)?;
            }
        }
        if modes.contains(&Mode::MonoTransfer) {
            // group test languages by their transfer source, first-seen order
            let mut groups: Vec<(String, Vec<String>)> = Vec::new();
            for lang in &test_langs {
                let source = match &config.experiment.transfer_source {
                    Some(s) if s != lang => Some(s.clone()),
                    _ => langs
                        .iter()
                        .filter(|l| *l != lang)
                        .fold(None, |best: Option<&String>, l| match best {
                            Some(b) if train_counts[b] >= train_counts[l] => Some(b),
                            _ => Some(l),
                        })
                        .cloned(),
                };
                let Some(source) = source else {
                    log::warn!("no other language to transfer from into `{lang}`");
                    continue;
                };
                match groups.iter_mut().find(|(s, _)| *s == source) {
                    Some((_, targets)) => targets.push(lang.clone()),
                    None => groups.push((source, vec![lang.clone()])),
                }
            }
            for (source, targets) in groups {
                let cell = Cell {
                    arch: arch_cfg.clone(),
                    space: &inputs.spaces,
                    train_langs: vec![source],
                    test_langs: targets,
                };
                record(Mode::MonoTransfer, "unaligned", &cell, &mut report)?;
            }
        }
        if modes.contains(&Mode::Multi) {
            for (name, space) in &variants {
                let cell = Cell {
                    arch: arch_cfg.clone(),
                    space,
                    train_langs: train_langs.clone(),
                    test_langs: test_langs.clone(),
                };
                record(Mode::Multi, name, &cell, &mut report)?;
            }
        }
    }
    Ok(ExperimentOutcome {
        report,
        runs,
        translation_p1,
        variants,
    })
}

/// Runs the experiment and, when `experiment.output_dir` is set, writes the
/// resolved config, report, training histories, translation scores and
/// multilingual spaces there.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsReport> {
    let outcome = run_experiment_detailed(config)?;
    if let Some(dir) = &config.experiment.output_dir {
        stage("persist artifacts", persist(config, &outcome, dir))?;
    }
    Ok(outcome.report)
}

fn persist(config: &ExperimentConfig, outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    write("config.toml", config.to_toml_string()?)?;
    save_report(&outcome.report, dir)?;
    write(
        "runs.json",
        serde_json::to_string_pretty(&outcome.runs).map_err(|e| Error::Serde(e.to_string()))?,
    )?;
    let mut p1 = String::from("variant\tlanguage\tp_at_1\n");
    for (variant, scores) in &outcome.translation_p1 {
        for (lang, v) in scores {
            p1.push_str(&format!("{variant}\t{lang}\t{v}\n"));
        }
    }
    write("translation.tsv", p1)?;
    for (variant, space) in &outcome.variants {
        let sub = dir.join("embeddings").join(variant);
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for s in space.spaces() {
            save_embeddings(s, sub.join(format!("emb.{}.txt", s.language())))?;
        }
    }
    Ok(())
}
