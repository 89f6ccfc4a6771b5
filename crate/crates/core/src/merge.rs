//! Merging two bilingual spaces that share a pivot language.
//!
//! A map `W*` with `u ≈ W*·v` is fitted over pivot words present in both
//! spaces (`u` from the anchor, `v` from the moving space) and applied to
//! every non-pivot language of the moving space. The fit is split into one
//! single-output regression per output dimension, each solved by SGD with
//! per-feature adaptive step sizes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::align::{apply_projection, ProjectionKind, ProjectionMatrix};
use crate::embedding::MultilingualSpace;
use crate::error::{Error, Result};
use crate::linalg::{from_na, to_na};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct MergeOptions {
    pub passes: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub allow_underdetermined: bool,
}

impl Default for MergeOptions {
    fn default() -> Self {
        MergeOptions {
            passes: 100,
            learning_rate: 0.5,
            seed: 0,
            allow_underdetermined: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MergeOutcome {
    pub projection: ProjectionMatrix,
    pub merged: MultilingualSpace,
    pub shared_pivot_words: usize,
    /// Mean `‖u − W*·v‖` over shared pivot words after the fit.
    pub mean_pivot_displacement: f64,
}

/// Fits `W*` on the shared pivot vocabulary and maps the moving space's
/// other languages into the anchor. Anchor spaces are returned untouched;
/// the moving space's own pivot vectors are discarded.
pub fn merge_bilingual_spaces(
    moving: &MultilingualSpace,
    anchor: &MultilingualSpace,
    pivot_lang: &str,
    opts: &MergeOptions,
) -> Result<MergeOutcome> {
    let mv = moving
        .space(pivot_lang)
        .ok_or_else(|| Error::PivotAbsent(pivot_lang.to_string()))?;
    let an = anchor
        .space(pivot_lang)
        .ok_or_else(|| Error::PivotAbsent(pivot_lang.to_string()))?;
    if mv.dim() != an.dim() {
        return Err(Error::DimensionMismatch {
            expected: an.dim(),
            found: mv.dim(),
        });
    }
    let shared: Vec<&String> = mv.vocab().words().iter().filter(|w| an.vocab().contains(w)).collect();
    let m = mv.dim();
    if shared.is_empty() {
        return Err(Error::EmptyDictionary(format!("no shared `{pivot_lang}` words")));
    }
    if shared.len() < m {
        if !opts.allow_underdetermined {
            return Err(Error::Underdetermined {
                shared: shared.len(),
                dim: m,
            });
        }
        log::warn!("underdetermined merge: {} shared words for dimension {m}", shared.len());
    }
    let targets = Array2::from_shape_fn((shared.len(), m), |(i, j)| an.lookup(shared[i])[j]);
    let features = Array2::from_shape_fn((shared.len(), m), |(i, j)| mv.lookup(shared[i])[j]);
    let w = fit_linear_map_sgd(targets.view(), features.view(), opts);

    let residual = &targets - &features.dot(&w.t());
    let displacement =
        residual.axis_iter(Axis(0)).map(|r| r.dot(&r).sqrt()).sum::<f64>() / shared.len() as f64;
    log::info!(
        "merged on {} shared `{pivot_lang}` words, mean pivot displacement {displacement:.6}",
        shared.len()
    );

    let projection = ProjectionMatrix {
        matrix: w,
        kind: ProjectionKind::Reduced,
        source_lang: pivot_lang.to_string(),
        target_lang: pivot_lang.to_string(),
    };
    let mut merged = anchor.clone();
    for space in moving.spaces() {
        if space.language() == pivot_lang {
            continue;
        }
        if anchor.contains(space.language()) {
            log::warn!("`{}` present in both spaces; keeping the anchor's", space.language());
            continue;
        }
        merged.insert(apply_projection(space, &projection)?)?;
    }
    Ok(MergeOutcome {
        projection,
        merged,
        shared_pivot_words: shared.len(),
        mean_pivot_displacement: displacement,
    })
}

/// SGD fit of `W` (m_out × m_in) minimizing `Σᵢ ‖uᵢ − W·vᵢ‖²`, where `targets`
/// holds the `uᵢ` and `features` the `vᵢ` as rows. Each output dimension is
/// fitted independently.
pub fn fit_linear_map_sgd(targets: ArrayView2<'_, f64>, features: ArrayView2<'_, f64>, opts: &MergeOptions) -> Array2<f64> {
    let out_dim = targets.ncols();
    let mut w = Array2::zeros((out_dim, features.ncols()));
    for j in 0..out_dim {
        let col = fit_single_output(targets.column(j), features, opts, opts.seed.wrapping_add(j as u64));
        w.row_mut(j).assign(&col);
    }
    w
}

fn fit_single_output(y: ArrayView1<'_, f64>, x: ArrayView2<'_, f64>, opts: &MergeOptions, seed: u64) -> Array1<f64> {
    let (n, d) = x.dim();
    let mut w = Array1::<f64>::zeros(d);
    let mut accum = Array1::<f64>::zeros(d);
    // iterates from the second half of the passes are averaged
    let mut avg = Array1::<f64>::zeros(d);
    let mut averaged = 0usize;
    let burn_in = opts.passes / 2;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for pass in 0..opts.passes {
        order.shuffle(&mut rng);
        for &i in &order {
            let row = x.row(i);
            let err = row.dot(&w) - y[i];
            for k in 0..d {
                let g = err * row[k];
                if g == 0.0 {
                    continue;
                }
                accum[k] += g * g;
                w[k] -= opts.learning_rate * g / accum[k].sqrt();
            }
            if pass >= burn_in {
                averaged += 1;
                let delta = &w - &avg;
                avg.scaled_add(1.0 / averaged as f64, &delta);
            }
        }
    }
    if averaged == 0 {
        w
    } else {
        avg
    }
}

/// Exact minimizer of `‖U − V·Wᵀ‖_F²` (rows of `u`, `v` are paired samples)
/// through the normal equations `(VᵀV)·Wᵀ = VᵀU`.
pub fn solve_least_squares_oracle(u: &Array2<f64>, v: &Array2<f64>) -> Result<ProjectionMatrix> {
    if u.nrows() != v.nrows() {
        return Err(Error::Shape(format!("{} target rows vs {} feature rows", u.nrows(), v.nrows())));
    }
    let vtv = to_na(&v.t().dot(v));
    let sv = vtv.singular_values();
    let max = sv.max();
    if v.nrows() < v.ncols() || max == 0.0 || sv.min() <= max * 1e-12 {
        return Err(Error::RankDeficient);
    }
    let chol = vtv.cholesky().ok_or(Error::RankDeficient)?;
    let wt = chol.solve(&to_na(&v.t().dot(u)));
    Ok(ProjectionMatrix {
        matrix: from_na(&wt).t().to_owned(),
        kind: ProjectionKind::Reduced,
        source_lang: String::new(),
        target_lang: String::new(),
    })
}

/// `‖U − V·Wᵀ‖_F²`.
pub fn regression_objective(u: &Array2<f64>, v: &Array2<f64>, w: &Array2<f64>) -> f64 {
    (u - &v.dot(&w.t())).mapv(|e| e * e).sum()
}
