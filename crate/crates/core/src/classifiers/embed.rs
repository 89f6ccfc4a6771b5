use std::collections::{BTreeMap, HashMap};

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::embedding::{EmbeddingSpace, MultilingualSpace};
use crate::error::{Error, Result};
use crate::nn::{join, Module, Parameter};

/// Row 0 of every table: the zero vector shared by unknown words.
pub const OOV_ID: usize = 0;

/// All languages' word vectors stacked into one parameter, keyed by
/// `(language, word)`. Row [`OOV_ID`] stays zero and never receives
/// gradient.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub table: Parameter,
    index: BTreeMap<String, HashMap<String, usize>>,
    keys: Vec<(String, String)>,
}

impl EmbeddingTable {
    pub fn from_space(space: &MultilingualSpace, trainable: bool) -> Result<Self> {
        let dim = space
            .dim()
            .ok_or_else(|| Error::Precondition("embedding table from an empty multilingual space".into()))?;
        let rows = 1 + space.spaces().map(EmbeddingSpace::len).sum::<usize>();
        let mut values = Array2::zeros((rows, dim));
        let mut index = BTreeMap::new();
        let mut keys = vec![(String::new(), String::new())];
        for s in space.spaces() {
            let lang_index: &mut HashMap<String, usize> = index.entry(s.language().to_string()).or_default();
            for (i, w) in s.vocab().words().iter().enumerate() {
                let id = keys.len();
                values.row_mut(id).assign(&s.row(i));
                lang_index.insert(w.clone(), id);
                keys.push((s.language().to_string(), w.clone()));
            }
        }
        let mut table = Parameter::new(values.into_dyn());
        table.trainable = trainable;
        Ok(EmbeddingTable { table, index, keys })
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    pub fn rows(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn trainable(&self) -> bool {
        self.table.trainable
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    pub fn has_language(&self, lang: &str) -> bool {
        self.index.contains_key(lang)
    }

    /// Row id of `word` in `lang`, or [`OOV_ID`].
    pub fn id(&self, lang: &str, word: &str) -> usize {
        self.index
            .get(lang)
            .and_then(|m| m.get(word))
            .copied()
            .unwrap_or(OOV_ID)
    }

    pub fn ids<S: AsRef<str>>(&self, lang: &str, words: &[S]) -> Vec<usize> {
        words.iter().map(|w| self.id(lang, w.as_ref())).collect()
    }

    pub fn row(&self, id: usize) -> ArrayView1<'_, f64> {
        self.table.mat().index_axis_move(ndarray::Axis(0), id)
    }

    /// `len(ids) x dim` block of vectors. [`OOV_ID`] always reads as zero,
    /// whatever the stored row holds.
    pub fn gather(&self, ids: &[usize]) -> Array2<f64> {
        let m = self.table.mat();
        let mut out = Array2::zeros((ids.len(), self.dim()));
        for (mut row, &id) in out.rows_mut().into_iter().zip(ids) {
            if id != OOV_ID {
                row.assign(&m.row(id));
            }
        }
        out
    }

    /// Adds row `i` of `grad` to the gradient of row `ids[i]`.
    pub fn scatter_grad(&mut self, ids: &[usize], grad: ArrayView2<'_, f64>) {
        if !self.table.trainable {
            return;
        }
        let mut g = self.table.grad_mat();
        for (&id, row) in ids.iter().zip(grad.rows()) {
            if id != OOV_ID {
                let mut target = g.row_mut(id);
                target += &row;
            }
        }
    }

    /// Current vectors as per-language spaces.
    pub fn to_multilingual_space(&self) -> Result<MultilingualSpace> {
        let m = self.table.mat();
        let mut out = MultilingualSpace::new();
        for (lang, words) in &self.index {
            let mut entries: Vec<(&String, &usize)> = words.iter().collect();
            entries.sort_by_key(|(_, &id)| id);
            let rows: Vec<usize> = entries.iter().map(|(_, &id)| id).collect();
            let matrix = m.select(ndarray::Axis(0), &rows);
            let vocab = entries.iter().map(|(w, _)| (*w).clone()).collect();
            out.insert(EmbeddingSpace::from_rows(lang, vocab, matrix)?)?;
        }
        Ok(out)
    }

    pub fn key(&self, id: usize) -> (&str, &str) {
        let (l, w) = &self.keys[id];
        (l, w)
    }
}

impl Module for EmbeddingTable {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        f(&join(prefix, "table"), &mut self.table);
    }
}
