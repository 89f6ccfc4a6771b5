use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::EmbeddingSpace;
use crate::error::{Error, Result};

/// Translation pairs from a source language into a target language, split
/// into disjoint train and test partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct BilingualDictionary {
    pub source_lang: String,
    pub target_lang: String,
    pub train: Vec<(String, String)>,
    pub test: Vec<(String, String)>,
}

impl BilingualDictionary {
    /// A dictionary whose pairs all sit in the train partition.
    pub fn new(source_lang: &str, target_lang: &str, pairs: Vec<(String, String)>) -> Self {
        BilingualDictionary {
            source_lang: source_lang.to_string(),
            target_lang: target_lang.to_string(),
            train: pairs,
            test: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Moves `test_count` randomly chosen source words (with all of their
    /// translations) into the test partition. Grouping by source word keeps
    /// the partitions disjoint on the source side.
    pub fn split(mut self, test_count: usize, seed: u64) -> Self {
        let mut all = std::mem::take(&mut self.train);
        all.append(&mut self.test);
        let mut sources: Vec<String> = Vec::new();
        for (s, _) in &all {
            if !sources.contains(s) {
                sources.push(s.clone());
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sources.shuffle(&mut rng);
        let held: std::collections::HashSet<&String> = sources.iter().take(test_count).collect();
        let (test, train): (Vec<_>, Vec<_>) = all.iter().cloned().partition(|(s, _)| held.contains(s));
        self.train = train;
        self.test = test;
        self
    }

    /// Test partition as its own dictionary.
    pub fn test_dictionary(&self) -> BilingualDictionary {
        BilingualDictionary::new(&self.source_lang, &self.target_lang, self.test.clone())
    }
}

/// Pairs every token spelled identically in both vocabularies, in source row
/// order, keeping at most `max_pairs`.
pub fn build_pseudo_dictionary(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    max_pairs: usize,
) -> Result<BilingualDictionary> {
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::Precondition("pseudo-dictionary needs non-empty vocabularies".into()));
    }
    let pairs: Vec<(String, String)> = src
        .vocab()
        .words()
        .iter()
        .filter(|w| tgt.vocab().contains(w))
        .take(max_pairs)
        .map(|w| (w.clone(), w.clone()))
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyDictionary(format!(
            "no identical strings shared by {} and {}",
            src.language(),
            tgt.language()
        )));
    }
    Ok(BilingualDictionary::new(src.language(), tgt.language(), pairs))
}

/// Reads `<source>\t<target>` lines. Blank lines are skipped.
pub fn load_dictionary(path: impl AsRef<Path>, source_lang: &str, target_lang: &str) -> Result<BilingualDictionary> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(s), Some(t), None) if !s.is_empty() && !t.is_empty() => {
                pairs.push((s.to_string(), t.to_string()))
            }
            _ => return Err(Error::parse(&name, i + 1, "expected `<source>\\t<target>`")),
        }
    }
    Ok(BilingualDictionary::new(source_lang, target_lang, pairs))
}

/// Writes the given pairs as `<source>\t<target>` lines.
pub fn save_pairs(pairs: &[(String, String)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (s, t) in pairs {
        writeln!(w, "{s}\t{t}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
