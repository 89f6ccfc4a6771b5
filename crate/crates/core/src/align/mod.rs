//! Offline alignment of a source-language space onto a target space from
//! dictionary pairs.
//!
//! Words are column vectors and a projection acts as `W·x`; stacked words
//! are matrix rows. With dictionary matrices `X` (source rows) and `Y`
//! (target rows), `M = Yᵀ·X = U·Σ·Vᵀ` and `W = U·Vᵀ` maximizes
//! `Σ yᵢᵀ·W·xᵢ` over orthogonal maps. On unit rows that sum is a sum of
//! cosines.

mod dictionary;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use ndarray::{Array2, Axis};

use crate::embedding::{EmbeddingSpace, MultilingualSpace};
use crate::error::{Error, Result};

pub use dictionary::{build_pseudo_dictionary, load_dictionary, save_pairs, BilingualDictionary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    FullOrthogonal,
    Reduced,
}

/// Linear map `W` (rows × cols) applied to column vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    pub matrix: Array2<f64>,
    pub kind: ProjectionKind,
    pub source_lang: String,
    pub target_lang: String,
}

impl ProjectionMatrix {
    pub fn identity(dim: usize, source_lang: &str, target_lang: &str) -> Self {
        ProjectionMatrix {
            matrix: Array2::eye(dim),
            kind: ProjectionKind::FullOrthogonal,
            source_lang: source_lang.into(),
            target_lang: target_lang.into(),
        }
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// `‖WᵀW − I‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        let wtw = self.matrix.t().dot(&self.matrix);
        let eye = Array2::<f64>::eye(wtw.nrows());
        (&wtw - &eye).mapv(|v| v * v).sum().sqrt()
    }
}

/// Result of [`align_svd`].
#[derive(Debug, Clone)]
pub struct Alignment {
    /// Maps source vectors. `W = U·Vᵀ` in full mode, `V_rᵀ` in reduced mode.
    pub source: ProjectionMatrix,
    /// Reduced mode only: `U_rᵀ`, applied to the target language.
    pub target: Option<ProjectionMatrix>,
    /// Singular values of `M`, descending.
    pub singular_values: Vec<f64>,
    pub used_pairs: usize,
    pub dropped_pairs: usize,
    u: Array2<f64>,
    v: Array2<f64>,
    kept: usize,
}

impl Alignment {
    /// Rank-`r` source map `U_r·V_rᵀ` that lands reduced vectors back in the
    /// full target space, leaving the target language untouched.
    pub fn reembedded_source(&self) -> ProjectionMatrix {
        let r = self.kept;
        let u_r = self.u.slice(ndarray::s![.., ..r]);
        let v_r = self.v.slice(ndarray::s![.., ..r]);
        let kind = if r == self.u.ncols() {
            ProjectionKind::FullOrthogonal
        } else {
            ProjectionKind::Reduced
        };
        ProjectionMatrix {
            matrix: u_r.dot(&v_r.t()),
            kind,
            source_lang: self.source.source_lang.clone(),
            target_lang: self.source.target_lang.clone(),
        }
    }

    pub fn kept_components(&self) -> usize {
        self.kept
    }
}

/// Learns the source→target map from the train split of `dict`.
///
/// Rows are unit-normalized first. Pairs with a token missing from either
/// vocabulary are dropped and counted. With `sv_threshold`, only singular
/// directions whose value reaches the threshold are kept and two reduced
/// maps are returned, one per language.
pub fn align_svd(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    dict: &BilingualDictionary,
    sv_threshold: Option<f64>,
) -> Result<Alignment> {
    if src.dim() != tgt.dim() {
        return Err(Error::DimensionMismatch {
            expected: tgt.dim(),
            found: src.dim(),
        });
    }
    let src_n;
    let src = if src.is_normalized() {
        src
    } else {
        src_n = src.normalize_rows()?;
        &src_n
    };
    let tgt_n;
    let tgt = if tgt.is_normalized() {
        tgt
    } else {
        tgt_n = tgt.normalize_rows()?;
        &tgt_n
    };

    let m = src.dim();
    let mut cross = Array2::<f64>::zeros((m, m));
    let mut used = 0;
    let mut dropped = 0;
    for (s, t) in &dict.train {
        match (src.get(s), tgt.get(t)) {
            (Some(x), Some(y)) => {
                // M += y·xᵀ
                let y2 = y.insert_axis(Axis(1));
                let x2 = x.insert_axis(Axis(0));
                cross += &y2.dot(&x2);
                used += 1;
            }
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        log::info!(
            "align {}→{}: dropped {dropped} of {} dictionary pairs with unknown tokens",
            src.language(),
            tgt.language(),
            dict.train.len()
        );
    }
    if used < 2 {
        return Err(Error::InsufficientPairs { found: used, needed: 2 });
    }

    let (u, sigma, v) = sorted_svd(&cross);
    let kept = match sv_threshold {
        None => m,
        Some(t) => {
            let k = sigma.iter().take_while(|&&s| s >= t).count();
            if k == 0 {
                return Err(Error::AllSingularValuesFiltered {
                    threshold: t,
                    largest: sigma.first().copied().unwrap_or(0.0),
                });
            }
            k
        }
    };

    let (source, target) = if sv_threshold.is_none() {
        let w = u.dot(&v.t());
        (
            ProjectionMatrix {
                matrix: w,
                kind: ProjectionKind::FullOrthogonal,
                source_lang: src.language().into(),
                target_lang: tgt.language().into(),
            },
            None,
        )
    } else {
        let v_rt = v.slice(ndarray::s![.., ..kept]).t().to_owned();
        let u_rt = u.slice(ndarray::s![.., ..kept]).t().to_owned();
        (
            ProjectionMatrix {
                matrix: v_rt,
                kind: ProjectionKind::Reduced,
                source_lang: src.language().into(),
                target_lang: tgt.language().into(),
            },
            Some(ProjectionMatrix {
                matrix: u_rt,
                kind: ProjectionKind::Reduced,
                source_lang: tgt.language().into(),
                target_lang: tgt.language().into(),
            }),
        )
    };

    Ok(Alignment {
        source,
        target,
        singular_values: sigma,
        used_pairs: used,
        dropped_pairs: dropped,
        u,
        v,
        kept,
    })
}

/// SVD `a = U·diag(σ)·Vᵀ` with singular values in descending order.
pub(crate) fn sorted_svd(a: &Array2<f64>) -> (Array2<f64>, Vec<f64>, Array2<f64>) {
    let (r, c) = a.dim();
    let dm = DMatrix::from_fn(r, c, |i, j| a[[i, j]]);
    let svd = dm.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let k = order.len();
    let u_out = Array2::from_shape_fn((r, k), |(i, j)| u[(i, order[j])]);
    let v_out = Array2::from_shape_fn((c, k), |(i, j)| vt[(order[j], i)]);
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    (u_out, sigma, v_out)
}

/// Replaces every row `x` with `W·x`.
pub fn apply_projection(space: &EmbeddingSpace, proj: &ProjectionMatrix) -> Result<EmbeddingSpace> {
    if proj.cols() != space.dim() {
        return Err(Error::DimensionMismatch {
            expected: proj.cols(),
            found: space.dim(),
        });
    }
    space.with_matrix(space.matrix().dot(&proj.matrix.t()))
}

/// Precision@k of translating test source words into the target language by
/// cosine nearest neighbours in `aligned`. A source word with several
/// reference translations counts as a hit if any of them is retrieved.
pub fn eval_translation(
    aligned: &MultilingualSpace,
    dict_test: &BilingualDictionary,
    ks: &[usize],
) -> Result<BTreeMap<usize, f64>> {
    let src = aligned
        .space(&dict_test.source_lang)
        .ok_or_else(|| Error::Precondition(format!("no `{}` space", dict_test.source_lang)))?;
    let tgt = aligned
        .space(&dict_test.target_lang)
        .ok_or_else(|| Error::Precondition(format!("no `{}` space", dict_test.target_lang)))?;
    let mut gold: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (s, t) in dict_test.train.iter().chain(&dict_test.test) {
        if let (true, Some(ti)) = (src.vocab().contains(s), tgt.vocab().get(t)) {
            gold.entry(s.as_str()).or_default().push(ti);
        }
    }
    if gold.is_empty() {
        return Err(Error::EmptyDictionary("no resolvable test pairs".into()));
    }
    let kmax = ks.iter().copied().max().unwrap_or(1).max(1);
    let mut hits: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    for (word, targets) in &gold {
        let q = src.lookup(word);
        let ranked = tgt.nearest_indices(q, kmax)?;
        for (&k, count) in hits.iter_mut() {
            if ranked.iter().take(k).any(|(i, _)| targets.contains(i)) {
                *count += 1;
            }
        }
    }
    let total = gold.len() as f64;
    Ok(hits.into_iter().map(|(k, h)| (k, h as f64 / total)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_orthogonal;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_space(lang: &str, prefix: &str, n: usize, m: usize, seed: u64) -> EmbeddingSpace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mat = Array2::from_shape_fn((n, m), |_| StandardNormal.sample(&mut rng));
        let words = (0..n).map(|i| format!("{prefix}{i}")).collect();
        EmbeddingSpace::from_rows(lang, words, mat).unwrap()
    }

    fn identity_dict(n: usize, src: &str, tgt: &str) -> BilingualDictionary {
        let pairs = (0..n).map(|i| (format!("w{i}"), format!("w{i}"))).collect();
        BilingualDictionary::new(src, tgt, pairs)
    }

    fn frob(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        (a - b).mapv(|v| v * v).sum().sqrt()
    }

    #[test]
    fn self_alignment_is_identity() {
        let s = gaussian_space("en", "w", 30, 6, 1);
        let d = identity_dict(30, "en", "en");
        let a = align_svd(&s, &s, &d, None).unwrap();
        assert!(frob(&a.source.matrix, &Array2::eye(6)) < 1e-6);
    }

    #[test]
    fn planted_rotation_recovered() {
        let m = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = random_orthogonal(m, &mut rng);
        let src = gaussian_space("fr", "w", 40, m, 5);
        // target rows = source rows · R, so column vectors satisfy y = Rᵀ·x
        let tgt = src.with_matrix(src.matrix().dot(&r)).unwrap();
        let tgt = EmbeddingSpace::from_rows("en", tgt.vocab().words().to_vec(), tgt.matrix().clone()).unwrap();
        let dict = identity_dict(40, "fr", "en").split(10, 3);
        let a = align_svd(&src, &tgt, &dict, None).unwrap();
        assert!(frob(&a.source.matrix, &r.t().to_owned()) < 1e-4);
        let aligned = MultilingualSpace::from_spaces([apply_projection(&src, &a.source).unwrap(), tgt]).unwrap();
        let p = eval_translation(&aligned, &dict.test_dictionary(), &[1]).unwrap();
        assert_eq!(p[&1], 1.0);
    }

    #[test]
    fn projection_shapes_and_inverse() {
        let m = 3;
        let src = gaussian_space("fr", "w", 5, m, 2);
        let same = apply_projection(&src, &ProjectionMatrix::identity(m, "fr", "fr")).unwrap();
        assert_eq!(same.matrix(), src.matrix());

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = random_orthogonal(m, &mut rng);
        let rotated = src.with_matrix(src.matrix().dot(&r)).unwrap();
        // rotated columns are Rᵀ·x; applying R undoes it
        let undo = ProjectionMatrix {
            matrix: r.clone(),
            kind: ProjectionKind::FullOrthogonal,
            source_lang: "fr".into(),
            target_lang: "fr".into(),
        };
        let back = apply_projection(&rotated, &undo).unwrap();
        assert!(frob(back.matrix(), src.matrix()) < 1e-6);

        let reduce = ProjectionMatrix {
            matrix: Array2::from_shape_fn((2, 3), |(i, j)| (i == j) as u8 as f64),
            kind: ProjectionKind::Reduced,
            source_lang: "fr".into(),
            target_lang: "en".into(),
        };
        assert_eq!(apply_projection(&src, &reduce).unwrap().dim(), 2);
        let bad = ProjectionMatrix::identity(4, "fr", "fr");
        assert!(matches!(apply_projection(&src, &bad), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn threshold_above_max_errors() {
        let s = gaussian_space("en", "w", 10, 4, 1);
        let d = identity_dict(10, "en", "en");
        let err = align_svd(&s, &s, &d, Some(1e6)).unwrap_err();
        assert!(matches!(err, Error::AllSingularValuesFiltered { .. }));
    }

    #[test]
    fn reduced_maps_share_space() {
        let m = 6;
        let src = gaussian_space("fr", "w", 50, m, 8);
        let tgt = gaussian_space("en", "w", 50, m, 9);
        let d = identity_dict(50, "fr", "en");
        let full = align_svd(&src, &tgt, &d, None).unwrap();
        let t = full.singular_values[2];
        let a = align_svd(&src, &tgt, &d, Some(t)).unwrap();
        assert_eq!(a.kept_components(), 3);
        assert_eq!(a.source.rows(), 3);
        let tp = a.target.as_ref().unwrap();
        assert_eq!(tp.rows(), 3);
        assert_eq!(apply_projection(&src, &a.source).unwrap().dim(), 3);
        assert_eq!(apply_projection(&tgt, tp).unwrap().dim(), 3);
        let re = a.reembedded_source();
        assert_eq!(re.matrix.dim(), (m, m));
    }

    #[test]
    fn oov_pairs_dropped_and_counted() {
        let s = gaussian_space("en", "w", 10, 3, 1);
        let mut d = identity_dict(10, "en", "en");
        d.train.push(("nope".into(), "w1".into()));
        let a = align_svd(&s, &s, &d, None).unwrap();
        assert_eq!(a.used_pairs, 10);
        assert_eq!(a.dropped_pairs, 1);
        let tiny = BilingualDictionary::new("en", "en", vec![("w0".into(), "w0".into()), ("x".into(), "w1".into())]);
        assert!(matches!(align_svd(&s, &s, &tiny, None), Err(Error::InsufficientPairs { found: 1, .. })));
    }

    #[test]
    fn unaligned_spaces_near_chance() {
        let src = gaussian_space("fr", "w", 50, 10, 21);
        let tgt = gaussian_space("en", "w", 50, 10, 22);
        let aligned = MultilingualSpace::from_spaces([src, tgt]).unwrap();
        let p = eval_translation(&aligned, &identity_dict(50, "fr", "en"), &[1, 5]).unwrap();
        assert!(p[&1] <= 0.2, "P@1 = {}", p[&1]);
        assert!(p[&5] >= p[&1]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn full_map_is_orthogonal(seed in 0u64..10_000, m in 2usize..12, n in 2usize..40) {
            let src = gaussian_space("fr", "w", n, m, seed);
            let tgt = gaussian_space("en", "w", n, m, seed + 1);
            let a = align_svd(&src, &tgt, &identity_dict(n, "fr", "en"), None).unwrap();
            prop_assert!(a.source.orthogonality_error() < 1e-6);
        }

        #[test]
        fn pair_order_does_not_matter(seed in 0u64..10_000, m in 2usize..8) {
            let n = 3 * m;
            let src = gaussian_space("fr", "w", n, m, seed);
            let tgt = gaussian_space("en", "w", n, m, seed + 7);
            let d = identity_dict(n, "fr", "en");
            let mut rev = d.clone();
            rev.train.reverse();
            let a = align_svd(&src, &tgt, &d, None).unwrap();
            let b = align_svd(&src, &tgt, &rev, None).unwrap();
            prop_assert!(frob(&a.source.matrix, &b.source.matrix) < 1e-10);
        }

        #[test]
        fn svd_map_beats_identity(seed in 0u64..10_000, m in 2usize..8) {
            let n = 4 * m;
            let src = gaussian_space("fr", "w", n, m, seed).normalize_rows().unwrap();
            let tgt = gaussian_space("en", "w", n, m, seed + 3).normalize_rows().unwrap();
            let a = align_svd(&src, &tgt, &identity_dict(n, "fr", "en"), None).unwrap();
            let mapped = apply_projection(&src, &a.source).unwrap();
            let cos = |x: ndarray::ArrayView1<f64>, y: ndarray::ArrayView1<f64>| x.dot(&y) / (x.dot(&x).sqrt() * y.dot(&y).sqrt());
            let with_w: f64 = (0..n).map(|i| cos(mapped.row(i), tgt.row(i))).sum();
            let with_i: f64 = (0..n).map(|i| cos(src.row(i), tgt.row(i))).sum();
            prop_assert!(with_w >= with_i - 1e-12);
        }
    }
}
