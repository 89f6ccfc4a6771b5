//! Merging two bilingual spaces (de–en and it–en, each in its own frame)
//! through their shared English vocabulary.
//!
//! cargo run --release --example space_merge

use cltc::align::{apply_projection, eval_translation, ProjectionKind, ProjectionMatrix};
use cltc::embedding::MultilingualSpace;
use cltc::harness::{gen_synthetic, SyntheticConfig};
use cltc::linalg::random_orthogonal;
use cltc::merge::{merge_bilingual_spaces, MergeOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rotation(dim: usize, rng: &mut ChaCha8Rng) -> ProjectionMatrix {
    ProjectionMatrix {
        matrix: random_orthogonal(dim, rng),
        kind: ProjectionKind::FullOrthogonal,
        source_lang: "any".into(),
        target_lang: "any".into(),
    }
}

fn main() -> cltc::Result<()> {
    let data = gen_synthetic(&SyntheticConfig {
        docs_per_language: vec![10, 10, 10],
        noise: 0.0,
        ..SyntheticConfig::default()
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let en = data.spaces.space("en").expect("pivot");
    let dim = en.dim();

    // de and it are exact rotations of en; undo them, then give each
    // bilingual space a fresh random frame
    let mut bilingual = Vec::new();
    for lang in ["de", "it"] {
        let undo = ProjectionMatrix {
            matrix: data.rotations[lang].clone(),
            kind: ProjectionKind::FullOrthogonal,
            source_lang: lang.into(),
            target_lang: "en".into(),
        };
        let frame = rotation(dim, &mut rng);
        let aligned = apply_projection(data.spaces.space(lang).expect("generated"), &undo)?;
        bilingual.push(MultilingualSpace::from_spaces([apply_projection(en, &frame)?, apply_projection(&aligned, &frame)?])?);
    }

    let outcome = merge_bilingual_spaces(&bilingual[1], &bilingual[0], "en", &MergeOptions::default())?;
    println!(
        "fitted on {} pivot words, mean displacement {:.2e}",
        outcome.shared_pivot_words, outcome.mean_pivot_displacement
    );
    let p = eval_translation(&outcome.merged, &data.dictionaries["it"].test_dictionary(), &[1])?;
    println!("it→en P@1 in the merged space: {:.3}", p[&1]);
    Ok(())
}
