//! Joint training: a hierarchical classifier whose word-level encoder is
//! also pulled towards aligning parallel sentences, next to the same
//! classifier trained alone.
//!
//! cargo run --release --example multitask_training

use cltc::classifiers::{train_classifier, ClassifierModel, EmbeddingTable};
use cltc::harness::{gen_synthetic, macro_metrics, stratified_split, ClassificationDataset, Split, SyntheticConfig};
use cltc::multitask::{alternate_train, MultitaskConfig, MultitaskModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scores(model: &ClassifierModel, dataset: &ClassificationDataset) -> cltc::Result<String> {
    let mut out = String::new();
    for lang in dataset.languages() {
        let docs = model.encode_examples(&dataset.select(Split::Test, Some(&lang)))?;
        let truths: Vec<usize> = docs.iter().map(|d| d.label).collect();
        let m = macro_metrics(&truths, &model.predict(&docs)?, dataset.classes());
        out += &format!("  {lang} F1 {:.3}", m.f1);
    }
    Ok(out)
}

fn main() -> cltc::Result<()> {
    let data = gen_synthetic(&SyntheticConfig {
        languages: vec!["en".into(), "de".into()],
        vocab_size: 300,
        dim: 16,
        docs_per_language: vec![400, 400],
        topic_words_per_class: 20,
        topic_rate: 0.4,
        parallel_pairs: 200,
        ..SyntheticConfig::default()
    })?;
    let dataset = stratified_split(&data.dataset, [0.6, 0.2, 0.2], 0)?;
    let train = dataset.select(Split::Train, None);
    let valid = dataset.select(Split::Valid, None);
    let mut config = MultitaskConfig {
        max_epochs: 15,
        ..MultitaskConfig::default()
    };
    config.model.hidden = 16;

    let table = EmbeddingTable::from_space(&data.spaces, true)?;
    let alone = ClassifierModel::new(config.model.clone(), table.clone(), dataset.classes(), &mut ChaCha8Rng::seed_from_u64(0))?;
    let (alone, _) = train_classifier(alone, &train, &valid, &config.train_config())?;
    println!("classifier alone:{}", scores(&alone, &dataset)?);

    let model = MultitaskModel::new(&config, table, dataset.classes(), &mut ChaCha8Rng::seed_from_u64(0))?;
    let (model, history) = alternate_train(model, &train, &valid, &data.corpus, &config)?;
    let cls = history.classification.as_ref().expect("documents given");
    for (epoch, (c, a)) in cls.epoch_losses.iter().zip(&history.alignment_losses).enumerate() {
        println!("epoch {:>2}: classification {c:.4}  alignment {a:.4}  valid F1 {:.3}", epoch + 1, cls.valid_f1[epoch]);
    }
    println!("multitask:{}", scores(&model.classifier, &dataset)?);
    Ok(())
}
