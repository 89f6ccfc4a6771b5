//! Generating the synthetic benchmark and reading it back from disk.
//!
//! cargo run --release --example synthetic_corpus [out_dir]

use cltc::embedding::load_embeddings;
use cltc::harness::{gen_synthetic, load_classification_tsv, write_synthetic, SyntheticConfig};

fn main() -> cltc::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "synthetic-out".into());
    let config = SyntheticConfig::default();
    let data = gen_synthetic(&config)?;
    write_synthetic(&data, dir.as_ref())?;

    let docs = load_classification_tsv(format!("{dir}/docs.tsv"))?;
    println!("{} documents, {} classes, per language {:?}", docs.len(), docs.classes(), docs.language_counts());
    let en = load_embeddings(format!("{dir}/emb.en.txt"), "en", None)?;
    let first = &en.vocab().words()[0];
    println!("nearest neighbours of `{first}`:");
    for (word, cos) in en.nearest_neighbors(en.lookup(first), 5)? {
        println!("  {word:<8} {cos:.3}");
    }
    let e = &docs.examples[0];
    println!("first document ({}, {}): {:?}", e.language, docs.label_names[e.label], e.sentences);
    Ok(())
}
