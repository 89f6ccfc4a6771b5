//! Sentence-alignment training on a planted-rotation corpus: the German
//! space is a noisy rotation of the English one and the parallel sentences
//! are word-for-word translations.
//!
//! cargo run --release --example sentence_alignment

use cltc::harness::{gen_synthetic, SyntheticConfig};
use cltc::sent_align::{mean_pair_cosine, train_sent_align, AlignmentModel, SentAlignConfig};

fn main() -> cltc::Result<()> {
    let data = gen_synthetic(&SyntheticConfig {
        languages: vec!["en".into(), "de".into()],
        docs_per_language: vec![10, 10],
        parallel_pairs: 1000,
        dim: 50,
        ..SyntheticConfig::default()
    })?;
    let config = SentAlignConfig::default();
    let before = AlignmentModel::from_space(&data.spaces, &["de".to_string()], "en", config.params)?;
    println!("mean pair cosine before training: {:.4}", mean_pair_cosine(&before, &data.corpus.pairs));

    let (model, history) = train_sent_align(&data.corpus, &data.spaces, &config)?;
    println!("initial loss {:.6}", history.initial_loss);
    for (epoch, loss) in history.epoch_losses.iter().enumerate() {
        if epoch < 5 || (epoch + 1) % 10 == 0 {
            println!("epoch {:>2}: loss {loss:.6}", epoch + 1);
        }
    }
    println!("mean pair cosine after {} epochs: {:.4}", config.epochs, mean_pair_cosine(&model, &data.corpus.pairs));
    Ok(())
}
