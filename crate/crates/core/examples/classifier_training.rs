//! Training each classifier architecture on the synthetic benchmark over an
//! SVD-aligned multilingual space, then scoring every language.
//!
//! cargo run --release --example classifier_training [arch ...]

use cltc::align::{align_svd, apply_projection};
use cltc::classifiers::{train_classifier, ArchConfig, Architecture, ClassifierModel, EmbeddingTable, TrainConfig};
use cltc::embedding::MultilingualSpace;
use cltc::harness::{gen_synthetic, macro_metrics, stratified_split, Split, SyntheticConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cltc::Result<()> {
    let archs: Vec<Architecture> = match std::env::args().skip(1).map(|a| a.parse()).collect::<cltc::Result<Vec<_>>>()? {
        a if a.is_empty() => vec![Architecture::FtMlp, Architecture::MfCnn],
        a => a,
    };
    let data = gen_synthetic(&SyntheticConfig {
        docs_per_language: vec![600, 600, 100],
        ..SyntheticConfig::default()
    })?;
    let dataset = stratified_split(&data.dataset, [0.6, 0.2, 0.2], 0)?;

    let en = data.spaces.space("en").expect("pivot").clone();
    let mut space = MultilingualSpace::from_spaces([en.clone()])?;
    for (lang, dict) in &data.dictionaries {
        let src = data.spaces.space(lang).expect("generated");
        space.insert(apply_projection(src, &align_svd(src, &en, dict, None)?.source)?)?;
    }

    for arch in archs {
        let config = ArchConfig::for_arch(arch);
        let table = EmbeddingTable::from_space(&space, config.train_embeddings)?;
        let model = ClassifierModel::new(config, table, dataset.classes(), &mut ChaCha8Rng::seed_from_u64(0))?;
        let train_cfg = TrainConfig {
            max_epochs: 30,
            patience: 5,
            ..TrainConfig::default()
        };
        let (model, history) = train_classifier(model, &dataset.select(Split::Train, None), &dataset.select(Split::Valid, None), &train_cfg)?;
        print!("{arch:<11} best epoch {:>2}  valid F1 {:.3} |", history.best_epoch, history.best_valid_f1);
        for lang in dataset.languages() {
            let docs = model.encode_examples(&dataset.select(Split::Test, Some(&lang)))?;
            let truths: Vec<usize> = docs.iter().map(|d| d.label).collect();
            let m = macro_metrics(&truths, &model.predict(&docs)?, dataset.classes());
            print!("  {lang} F1 {:.3}", m.f1);
        }
        println!();
    }
    Ok(())
}
