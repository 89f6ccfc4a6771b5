//! Language-tagged embedding spaces: vocabularies, dense matrices, and
//! cosine nearest-neighbour queries.
//!
//! Spaces are immutable once built. Every transforming operation returns a
//! new space, so a loaded space can be shared read-only across threads.

mod io;

use std::collections::{BTreeMap, HashMap};

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

pub use io::{load_embeddings, save_embeddings};

/// Ordered, duplicate-free list of tokens for one language.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    language: String,
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(language: impl Into<String>, words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Precondition(format!("duplicate token `{w}`")));
            }
        }
        Ok(Vocabulary {
            language: language.into(),
            words,
            index,
        })
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }
}

/// A vocabulary paired with a `|vocab| x dim` matrix, one word per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    vocab: Vocabulary,
    matrix: Array2<f64>,
    normalized: bool,
    oov: Array1<f64>,
}

impl EmbeddingSpace {
    pub fn new(vocab: Vocabulary, matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() != vocab.len() {
            return Err(Error::Shape(format!(
                "{} rows for a vocabulary of {} words",
                matrix.nrows(),
                vocab.len()
            )));
        }
        if let Some(pos) = matrix.iter().position(|v| !v.is_finite()) {
            let row = pos / matrix.ncols().max(1);
            return Err(Error::Precondition(format!(
                "non-finite value in row for `{}`",
                vocab.word(row)
            )));
        }
        let dim = matrix.ncols();
        Ok(EmbeddingSpace {
            vocab,
            matrix,
            normalized: false,
            oov: Array1::zeros(dim),
        })
    }

    /// Builds a space from parallel word and row lists.
    pub fn from_rows(language: &str, words: Vec<String>, matrix: Array2<f64>) -> Result<Self> {
        Self::new(Vocabulary::new(language, words)?, matrix)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn language(&self) -> &str {
        self.vocab.language()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, idx: usize) -> ArrayView1<'_, f64> {
        self.matrix.row(idx)
    }

    /// Vector for `word`, or the all-zero out-of-vocabulary vector.
    pub fn lookup(&self, word: &str) -> ArrayView1<'_, f64> {
        match self.vocab.get(word) {
            Some(i) => self.matrix.row(i),
            None => self.oov.view(),
        }
    }

    pub fn get(&self, word: &str) -> Option<ArrayView1<'_, f64>> {
        self.vocab.get(word).map(|i| self.matrix.row(i))
    }

    /// Same vocabulary, new matrix. The `normalized` flag is cleared.
    pub fn with_matrix(&self, matrix: Array2<f64>) -> Result<Self> {
        Self::new(self.vocab.clone(), matrix)
    }

    /// Scales every row to unit Euclidean norm.
    pub fn normalize_rows(&self) -> Result<Self> {
        let mut matrix = self.matrix.clone();
        for (i, mut row) in matrix.axis_iter_mut(Axis(0)).enumerate() {
            let norm = row.dot(&row).sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroNorm {
                    token: self.vocab.word(i).to_string(),
                });
            }
            row.mapv_inplace(|v| v / norm);
        }
        let mut out = Self::new(self.vocab.clone(), matrix)?;
        out.normalized = true;
        Ok(out)
    }

    /// The `k` rows most cosine-similar to `query`, best first. Equal scores
    /// keep ascending row order.
    pub fn nearest_neighbors(&self, query: ArrayView1<'_, f64>, k: usize) -> Result<Vec<(String, f64)>> {
        Ok(self
            .nearest_indices(query, k)?
            .into_iter()
            .map(|(i, s)| (self.vocab.word(i).to_string(), s))
            .collect())
    }

    pub(crate) fn nearest_indices(&self, query: ArrayView1<'_, f64>, k: usize) -> Result<Vec<(usize, f64)>> {
        if query.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: query.len(),
            });
        }
        if k == 0 {
            return Err(Error::Precondition("k must be at least 1".into()));
        }
        let qnorm = query.dot(&query).sqrt();
        let mut scored: Vec<(usize, f64)> = self
            .matrix
            .axis_iter(Axis(0))
            .enumerate()
            .map(|(i, row)| {
                let rnorm = row.dot(&row).sqrt();
                let denom = qnorm * rnorm;
                let s = if denom == 0.0 { 0.0 } else { row.dot(&query) / denom };
                (i, s)
            })
            .collect();
        // stable sort keeps row order among ties
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        scored.truncate(k);
        Ok(scored)
    }
}

/// Several languages embedded in one space of a common dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MultilingualSpace {
    spaces: BTreeMap<String, EmbeddingSpace>,
}

impl MultilingualSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_spaces(spaces: impl IntoIterator<Item = EmbeddingSpace>) -> Result<Self> {
        let mut out = Self::new();
        for s in spaces {
            out.insert(s)?;
        }
        Ok(out)
    }

    /// Adds or replaces the space for its language.
    pub fn insert(&mut self, space: EmbeddingSpace) -> Result<()> {
        if let Some(d) = self.dim() {
            let replacing_only = self.spaces.len() == 1 && self.spaces.contains_key(space.language());
            if d != space.dim() && !replacing_only {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: space.dim(),
                });
            }
        }
        self.spaces.insert(space.language().to_string(), space);
        Ok(())
    }

    pub fn dim(&self) -> Option<usize> {
        self.spaces.values().next().map(EmbeddingSpace::dim)
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.spaces.keys().map(String::as_str)
    }

    pub fn space(&self, language: &str) -> Option<&EmbeddingSpace> {
        self.spaces.get(language)
    }

    pub fn spaces(&self) -> impl Iterator<Item = &EmbeddingSpace> {
        self.spaces.values()
    }

    pub fn contains(&self, language: &str) -> bool {
        self.spaces.contains_key(language)
    }

    pub fn len(&self) -> usize {
        self.spaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spaces.is_empty()
    }

    /// Vector for `(language, word)`; unknown pairs give the zero vector.
    pub fn lookup(&self, language: &str, word: &str) -> Option<ArrayView1<'_, f64>> {
        self.spaces.get(language).map(|s| s.lookup(word))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn space(words: &[&str], m: Array2<f64>) -> EmbeddingSpace {
        EmbeddingSpace::from_rows("xx", words.iter().map(|s| s.to_string()).collect(), m).unwrap()
    }

    fn random_space(seed: u64, n: usize, dim: usize) -> EmbeddingSpace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Array2::from_shape_fn((n, dim), |_| StandardNormal.sample(&mut rng));
        let words = (0..n).map(|i| format!("w{i}")).collect();
        EmbeddingSpace::from_rows("xx", words, m).unwrap()
    }

    // independent O(n) scan used as the reference
    fn brute_force(space: &EmbeddingSpace, q: &Array1<f64>, k: usize) -> Vec<usize> {
        let mut best: Vec<(usize, f64)> = Vec::new();
        for i in 0..space.len() {
            let r = space.row(i);
            let mut dot = 0.0;
            let mut nr = 0.0;
            let mut nq = 0.0;
            for j in 0..q.len() {
                dot += r[j] * q[j];
                nr += r[j] * r[j];
                nq += q[j] * q[j];
            }
            let s = if nr == 0.0 || nq == 0.0 { 0.0 } else { dot / (nr.sqrt() * nq.sqrt()) };
            best.push((i, s));
        }
        let mut picked = Vec::new();
        for _ in 0..k.min(best.len()) {
            let mut arg = None;
            for (pos, &(i, s)) in best.iter().enumerate() {
                match arg {
                    None => arg = Some((pos, i, s)),
                    Some((_, bi, bs)) if s > bs || (s == bs && i < bi) => arg = Some((pos, i, s)),
                    _ => {}
                }
            }
            let (pos, i, _) = arg.unwrap();
            picked.push(i);
            best.remove(pos);
        }
        picked
    }

    #[test]
    fn duplicate_tokens_rejected() {
        assert!(Vocabulary::new("en", vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn normalize_three_four_five() {
        let s = space(&["a"], array![[3.0, 4.0]]).normalize_rows().unwrap();
        assert!((s.row(0)[0] - 0.6).abs() < 1e-15);
        assert!((s.row(0)[1] - 0.8).abs() < 1e-15);
        assert!(s.is_normalized());
    }

    #[test]
    fn normalize_is_idempotent() {
        let s = random_space(3, 10, 4).normalize_rows().unwrap();
        let t = s.normalize_rows().unwrap();
        for (a, b) in s.matrix().iter().zip(t.matrix().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_row_names_token() {
        let err = space(&["a", "zero"], array![[1.0, 0.0], [0.0, 0.0]])
            .normalize_rows()
            .unwrap_err();
        assert!(matches!(err, Error::ZeroNorm { ref token } if token == "zero"));
    }

    #[test]
    fn self_query_ranks_first() {
        let s = random_space(1, 8, 5);
        let res = s.nearest_neighbors(s.row(3), 3).unwrap();
        assert_eq!(res[0].0, "w3");
        assert!((res[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_query_keeps_row_order() {
        let s = space(&["a", "b", "c"], array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]);
        let q = array![0.0, 0.0, 1.0];
        let res = s.nearest_neighbors(q.view(), 3).unwrap();
        let words: Vec<_> = res.iter().map(|r| r.0.as_str()).collect();
        assert_eq!(words, ["a", "b", "c"]);
        assert!(res.iter().all(|r| r.1 == 0.0));
    }

    #[test]
    fn five_word_space_matches_scan() {
        let s = random_space(42, 5, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = Array1::from_shape_fn(4, |_| StandardNormal.sample(&mut rng));
        let got: Vec<usize> = s.nearest_indices(q.view(), 5).unwrap().into_iter().map(|r| r.0).collect();
        assert_eq!(got, brute_force(&s, &q, 5));
    }

    #[test]
    fn query_dimension_checked() {
        let s = random_space(1, 3, 4);
        let q = Array1::zeros(3);
        assert!(matches!(
            s.nearest_neighbors(q.view(), 1),
            Err(Error::DimensionMismatch { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn oov_lookup_is_zero() {
        let s = random_space(1, 3, 4);
        assert!(s.lookup("missing").iter().all(|&v| v == 0.0));
    }

    #[test]
    fn multilingual_rejects_mixed_dims() {
        let mut m = MultilingualSpace::new();
        m.insert(random_space(1, 3, 4)).unwrap();
        let other = EmbeddingSpace::from_rows("yy", vec!["a".into()], Array2::zeros((1, 5))).unwrap();
        assert!(m.insert(other).is_err());
    }

    #[test]
    fn homographs_do_not_collide() {
        let en = EmbeddingSpace::from_rows("en", vec!["chat".into()], array![[1.0, 0.0]]).unwrap();
        let fr = EmbeddingSpace::from_rows("fr", vec!["chat".into()], array![[0.0, 1.0]]).unwrap();
        let m = MultilingualSpace::from_spaces([en, fr]).unwrap();
        assert_eq!(m.lookup("en", "chat").unwrap()[0], 1.0);
        assert_eq!(m.lookup("fr", "chat").unwrap()[1], 1.0);
    }

    proptest! {
        #[test]
        fn knn_matches_scan(seed in 0u64..1000, n in 1usize..30, dim in 1usize..8, k in 1usize..10) {
            let s = random_space(seed, n, dim);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdead);
            let q = Array1::from_shape_fn(dim, |_| StandardNormal.sample(&mut rng));
            let got: Vec<usize> = s.nearest_indices(q.view(), k).unwrap().into_iter().map(|r| r.0).collect();
            prop_assert_eq!(got, brute_force(&s, &q, k));
        }

        #[test]
        fn normalization_preserves_ranking(seed in 0u64..1000, n in 1usize..20) {
            let s = random_space(seed, n, 5);
            let t = s.normalize_rows().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let q = Array1::from_shape_fn(5, |_| StandardNormal.sample(&mut rng));
            let a: Vec<usize> = s.nearest_indices(q.view(), n).unwrap().into_iter().map(|r| r.0).collect();
            let b: Vec<usize> = t.nearest_indices(q.view(), n).unwrap().into_iter().map(|r| r.0).collect();
            prop_assert_eq!(a, b);
        }
    }
}
