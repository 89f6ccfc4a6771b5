use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifiers::LabeledExample;
use crate::error::{Error, Result};

/// Separates sentences inside the text column.
pub const SENTENCE_SEPARATOR: &str = " ||| ";

/// Lowercases, splits on Unicode whitespace and trims non-alphanumeric
/// characters from both ends of each token. Tokens left empty are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Labelled documents in several languages, optionally assigned to splits.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationDataset {
    pub label_names: Vec<String>,
    pub examples: Vec<LabeledExample>,
    /// One entry per example when present.
    pub splits: Option<Vec<Split>>,
}

impl ClassificationDataset {
    pub fn new(label_names: Vec<String>, examples: Vec<LabeledExample>) -> Result<Self> {
        for (i, e) in examples.iter().enumerate() {
            if e.label >= label_names.len() {
                return Err(Error::Precondition(format!("example {i} has label {} of {}", e.label, label_names.len())));
            }
            if e.token_count() == 0 {
                return Err(Error::Precondition(format!("example {i} has no tokens")));
            }
        }
        Ok(ClassificationDataset {
            label_names,
            examples,
            splits: None,
        })
    }

    pub fn classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Languages in first-seen order.
    pub fn languages(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.examples {
            if !out.contains(&e.language) {
                out.push(e.language.clone());
            }
        }
        out
    }

    pub fn language_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.examples {
            *counts.entry(e.language.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// Keeps the first `limit` examples of each language; splits are dropped.
    pub fn limit_per_language(self, limit: usize) -> Result<Self> {
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let examples = self
            .examples
            .into_iter()
            .filter(|e| {
                let n = seen.entry(e.language.clone()).or_insert(0);
                *n += 1;
                *n <= limit
            })
            .collect();
        ClassificationDataset::new(self.label_names, examples)
    }

    /// Examples of `split` (all examples when unsplit and `split` is
    /// `Train`), optionally restricted to one language.
    pub fn select(&self, split: Split, language: Option<&str>) -> Vec<LabeledExample> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(i, _)| match &self.splits {
                Some(s) => s[*i] == split,
                None => split == Split::Train,
            })
            .filter(|(_, e)| language.is_none_or(|l| e.language == l))
            .map(|(_, e)| e.clone())
            .collect()
    }
}

/// Reads `<label>\t<language>\t<text>` lines. Labels are numbered in
/// first-seen order; blank lines are skipped.
pub fn load_classification_tsv(path: impl AsRef<Path>) -> Result<ClassificationDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_classification_tsv(BufReader::new(file), &path.display().to_string())
}

pub fn read_classification_tsv<R: Read>(reader: BufReader<R>, name: &str) -> Result<ClassificationDataset> {
    let mut label_names: Vec<String> = Vec::new();
    let mut examples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(name, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.splitn(3, '\t').collect();
        if cols.len() != 3 || cols[0].is_empty() || cols[1].is_empty() {
            return Err(Error::parse(name, i + 1, "expected `<label>\\t<language>\\t<text>`"));
        }
        let sentences: Vec<Vec<String>> = cols[2]
            .split(SENTENCE_SEPARATOR.trim())
            .map(tokenize)
            .filter(|s| !s.is_empty())
            .collect();
        if sentences.is_empty() {
            return Err(Error::parse(name, i + 1, "document has no tokens"));
        }
        let label = match label_names.iter().position(|l| l == cols[0]) {
            Some(p) => p,
            None => {
                label_names.push(cols[0].to_string());
                label_names.len() - 1
            }
        };
        examples.push(LabeledExample::new(sentences, cols[1], label));
    }
    ClassificationDataset::new(label_names, examples)
}

pub fn save_classification_tsv(dataset: &ClassificationDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_classification_tsv(dataset, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_classification_tsv<W: Write>(dataset: &ClassificationDataset, w: &mut W) -> std::io::Result<()> {
    for e in &dataset.examples {
        let text: Vec<String> = e.sentences.iter().map(|s| s.join(" ")).collect();
        writeln!(w, "{}\t{}\t{}", dataset.label_names[e.label], e.language, text.join(SENTENCE_SEPARATOR))?;
    }
    Ok(())
}

/// Shuffles each `(language, label)` stratum with `seed` and cuts it at the
/// given train/valid/test fractions (rounded; test takes the remainder).
/// A single-example stratum always goes to train.
pub fn stratified_split(dataset: &ClassificationDataset, fractions: [f64; 3], seed: u64) -> Result<ClassificationDataset> {
    if fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!("split fractions {fractions:?} must be in [0, 1] and sum to 1")));
    }
    let mut strata: BTreeMap<(&str, usize), Vec<usize>> = BTreeMap::new();
    for (i, e) in dataset.examples.iter().enumerate() {
        strata.entry((e.language.as_str(), e.label)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = vec![Split::Train; dataset.len()];
    for ((lang, label), mut idx) in strata {
        idx.shuffle(&mut rng);
        let n = idx.len();
        if n == 1 {
            log::warn!("stratum ({lang}, {}) has one example; it goes to train", dataset.label_names[label]);
        }
        let n_train = ((n as f64 * fractions[0]).round() as usize).clamp(1, n);
        let n_valid = ((n as f64 * fractions[1]).round() as usize).min(n - n_train);
        for (k, &i) in idx.iter().enumerate() {
            splits[i] = if k < n_train {
                Split::Train
            } else if k < n_train + n_valid {
                Split::Valid
            } else {
                Split::Test
            };
        }
    }
    Ok(ClassificationDataset {
        splits: Some(splits),
        ..dataset.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ClassificationDataset> {
        read_classification_tsv(BufReader::new(text.as_bytes()), "mem")
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("  Hello, World!  (x) 'Tis"), vec!["hello", "world", "x", "tis"]);
        assert_eq!(tokenize("e-mail ... Straße"), vec!["e-mail", "straße"]);
    }

    #[test]
    fn three_lines_two_labels() {
        let d = parse("sport\ten\tThe match. ||| Goal!\npolitics\tde\tDie Wahl\nsport\tde\tTor\n").unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.classes(), 2);
        assert_eq!(d.examples[0].sentences, vec![vec!["the", "match"], vec!["goal"]]);
        assert_eq!(d.examples[2].label, 0);
    }

    #[test]
    fn missing_column_names_the_line() {
        let err = parse("a\ten\tok\nb\tonly-two\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn round_trip() {
        let d = parse("sport\ten\tThe match ||| goal\npolitics\tde\tDie Wahl\n").unwrap();
        let mut buf = Vec::new();
        write_classification_tsv(&d, &mut buf).unwrap();
        assert_eq!(parse(std::str::from_utf8(&buf).unwrap()).unwrap(), d);
    }

    fn one_stratum(n: usize) -> ClassificationDataset {
        let ex = (0..n).map(|i| LabeledExample::new(vec![vec![format!("w{i}")]], "en", 0)).collect();
        ClassificationDataset::new(vec!["a".into()], ex).unwrap()
    }

    fn counts(d: &ClassificationDataset) -> [usize; 3] {
        let s = d.splits.as_ref().unwrap();
        [Split::Train, Split::Valid, Split::Test].map(|k| s.iter().filter(|&&x| x == k).count())
    }

    #[test]
    fn sixty_twenty_twenty() {
        let d = stratified_split(&one_stratum(100), [0.6, 0.2, 0.2], 1).unwrap();
        assert_eq!(counts(&d), [60, 20, 20]);
    }

    #[test]
    fn seeds_change_membership_not_sizes() {
        let a = stratified_split(&one_stratum(50), [0.6, 0.2, 0.2], 1).unwrap();
        let b = stratified_split(&one_stratum(50), [0.6, 0.2, 0.2], 2).unwrap();
        assert_eq!(counts(&a), counts(&b));
        assert_ne!(a.splits, b.splits);
    }

    #[test]
    fn singleton_goes_to_train() {
        let d = stratified_split(&one_stratum(1), [0.6, 0.2, 0.2], 0).unwrap();
        assert_eq!(counts(&d), [1, 0, 0]);
    }

    #[test]
    fn strata_are_split_separately() {
        let mut ex = Vec::new();
        for i in 0..30 {
            ex.push(LabeledExample::new(vec![vec!["x".into()]], if i % 3 == 0 { "de" } else { "en" }, i % 2));
        }
        let d = ClassificationDataset::new(vec!["a".into(), "b".into()], ex).unwrap();
        let d = stratified_split(&d, [0.6, 0.2, 0.2], 3).unwrap();
        for lang in ["en", "de"] {
            for label in 0..2 {
                let members: Vec<Split> = d
                    .examples
                    .iter()
                    .zip(d.splits.as_ref().unwrap())
                    .filter(|(e, _)| e.language == lang && e.label == label)
                    .map(|(_, s)| *s)
                    .collect();
                let n = members.len() as f64;
                let train = members.iter().filter(|&&s| s == Split::Train).count() as f64;
                assert!((train - 0.6 * n).abs() <= 1.0);
            }
        }
    }
}
