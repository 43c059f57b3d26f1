use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data_model::normalize_text;

/// Character n-grams kept as binary features, ordered by training frequency
/// (descending) with lexicographic tie-break.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    pub n: usize,
    grams: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    n: usize,
    grams: Vec<String>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::new(r.n, r.grams)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr { n: v.n, grams: v.grams }
    }
}

impl Vocabulary {
    pub fn new(n: usize, grams: Vec<String>) -> Self {
        let index = grams.iter().enumerate().map(|(i, g)| (g.clone(), i)).collect();
        Vocabulary { n, grams, index }
    }

    pub fn grams(&self) -> &[String] {
        &self.grams
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn get(&self, gram: &str) -> Option<usize> {
        self.index.get(gram).copied()
    }
}

/// Character n-grams of the normalized text, with repetition.
pub fn char_ngrams(text: &str, n: usize) -> Vec<String> {
    let chars: Vec<char> = normalize_text(text).chars().collect();
    if n == 0 || chars.len() < n {
        return Vec::new();
    }
    chars.windows(n).map(|w| w.iter().collect()).collect()
}

pub fn fit_ngram_vocabulary<'a>(texts: impl IntoIterator<Item = &'a str>, n: usize, top_k: usize) -> Vocabulary {
    let mut freq: HashMap<String, u64> = HashMap::new();
    for t in texts {
        for g in char_ngrams(t, n) {
            *freq.entry(g).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, u64)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_k);
    if ranked.is_empty() {
        log::warn!("n-gram vocabulary is empty; no n-gram columns will be produced");
    }
    Vocabulary::new(n, ranked.into_iter().map(|(g, _)| g).collect())
}

/// Sorted vocabulary indices present in each text. Out-of-vocabulary grams are ignored.
pub fn ngram_features<'a>(texts: impl IntoIterator<Item = &'a str>, vocab: &Vocabulary) -> Vec<Vec<usize>> {
    texts
        .into_iter()
        .map(|t| {
            let mut present: Vec<usize> = char_ngrams(t, vocab.n)
                .iter()
                .filter_map(|g| vocab.index.get(g).copied())
                .collect();
            present.sort_unstable();
            present.dedup();
            present
        })
        .collect()
}
