//! The independent model's feature matrix: content, sequential user,
//! follower-graph and character n-gram features.

pub mod content;
pub mod graph;
pub mod ngram;
pub mod user;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data_model::{Labels, Message};
use crate::error::{EggsError, Result};

pub use content::{extract_content_features, sentiment};
pub use graph::{
    build_follower_graph, degrees, k_core, pagerank, triangle_count, FollowerGraph, GraphFeatureTable,
    GraphFeatures, PageRank,
};
pub use ngram::{fit_ngram_vocabulary, ngram_features, Vocabulary};
pub use user::{extract_user_features_sequential, UserFeatures};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    /// Numeric column, standardized before training.
    Dense,
    /// 0/1 indicator, used raw.
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFamily {
    Content,
    User,
    Graph,
    Ngram,
}

impl FromStr for FeatureFamily {
    type Err = EggsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "content" => Ok(FeatureFamily::Content),
            "user" => Ok(FeatureFamily::User),
            "graph" => Ok(FeatureFamily::Graph),
            "ngram" | "ngrams" | "n-gram" => Ok(FeatureFamily::Ngram),
            other => Err(EggsError::Config(format!("unknown feature family `{other}`"))),
        }
    }
}

/// Column names and kinds, frozen once fitted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "ColumnList", into = "ColumnList")]
pub struct ColumnDictionary {
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct ColumnList {
    columns: Vec<(String, ColumnKind)>,
}

impl From<ColumnList> for ColumnDictionary {
    fn from(list: ColumnList) -> Self {
        let mut dict = ColumnDictionary::default();
        for (name, kind) in list.columns {
            dict.push(name, kind);
        }
        dict
    }
}

impl From<ColumnDictionary> for ColumnList {
    fn from(dict: ColumnDictionary) -> Self {
        ColumnList {
            columns: dict.names.into_iter().zip(dict.kinds).collect(),
        }
    }
}

impl ColumnDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a column, returning its index. Re-adding an existing name is a no-op.
    pub fn push(&mut self, name: impl Into<String>, kind: ColumnKind) -> usize {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            return i;
        }
        let i = self.names.len();
        self.index.insert(name.clone(), i);
        self.names.push(name);
        self.kinds.push(kind);
        i
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn kind(&self, i: usize) -> ColumnKind {
        self.kinds[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// FNV-1a over names and kinds; used to check model/matrix alignment.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for (n, k) in self.names.iter().zip(&self.kinds) {
            eat(n.as_bytes());
            eat(&[0, *k as u8, 0xff]);
        }
        format!("{h:016x}")
    }
}

/// Sparse rows of (column, value), columns ascending, zeros omitted.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub row_ids: Vec<String>,
    pub columns: ColumnDictionary,
    rows: Vec<Vec<(u32, f64)>>,
}

impl FeatureMatrix {
    pub fn new(columns: ColumnDictionary) -> Self {
        FeatureMatrix {
            row_ids: Vec::new(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[(u32, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[(u32, f64)]> {
        self.rows.iter().map(Vec::as_slice)
    }

    /// Appends a row. Entries may come in any order; zeros are dropped and
    /// non-finite values rejected.
    pub fn push_row(&mut self, id: impl Into<String>, mut entries: Vec<(u32, f64)>) -> Result<()> {
        let id = id.into();
        if let Some(&(c, v)) = entries.iter().find(|(_, v)| !v.is_finite()) {
            return Err(EggsError::InvalidInput(format!(
                "non-finite value {v} in row `{id}`, column `{}`",
                self.columns.name(c as usize)
            )));
        }
        if let Some(&(c, _)) = entries.iter().find(|(c, _)| *c as usize >= self.columns.len()) {
            return Err(EggsError::ColumnMismatch(format!("column index {c} out of range")));
        }
        entries.retain(|&(_, v)| v != 0.0);
        entries.sort_by_key(|&(c, _)| c);
        entries.dedup_by_key(|e| e.0);
        self.row_ids.push(id);
        self.rows.push(entries);
        Ok(())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let r = &self.rows[row];
        r.binary_search_by_key(&(col as u32), |&(c, _)| c)
            .map(|i| r[i].1)
            .unwrap_or(0.0)
    }

    pub fn select_rows(&self, indices: impl IntoIterator<Item = usize>) -> FeatureMatrix {
        let mut out = FeatureMatrix::new(self.columns.clone());
        for i in indices {
            out.row_ids.push(self.row_ids[i].clone());
            out.rows.push(self.rows[i].clone());
        }
        out
    }

    /// Copy of this matrix with extra dense columns appended; `values[r][j]`
    /// is row `r`'s value for `names[j]`.
    pub fn with_dense_columns(&self, names: &[String], values: &[Vec<f64>]) -> Result<FeatureMatrix> {
        if values.len() != self.n_rows() {
            return Err(EggsError::InvalidInput(format!(
                "{} extra rows for a {}-row matrix",
                values.len(),
                self.n_rows()
            )));
        }
        let mut columns = self.columns.clone();
        let base = columns.len();
        for name in names {
            if columns.get(name).is_some() {
                return Err(EggsError::InvalidInput(format!("column `{name}` already present")));
            }
            columns.push(name.clone(), ColumnKind::Dense);
        }
        let mut out = FeatureMatrix::new(columns);
        for (i, extra) in values.iter().enumerate() {
            let mut entries = self.rows[i].clone();
            entries.extend(extra.iter().enumerate().map(|(j, &v)| ((base + j) as u32, v)));
            out.push_row(self.row_ids[i].clone(), entries)?;
        }
        Ok(out)
    }

    /// Row-id / column-name / value triplets, preceded by the column dictionary
    /// and row order so that empty rows and columns survive a round trip.
    pub fn to_triplets(&self) -> String {
        let mut out = String::from("#eggs-features v1\n");
        for (i, name) in self.columns.names().iter().enumerate() {
            let kind = match self.columns.kind(i) {
                ColumnKind::Dense => "dense",
                ColumnKind::Binary => "binary",
            };
            let _ = writeln!(out, "#col\t{name}\t{kind}");
        }
        for id in &self.row_ids {
            let _ = writeln!(out, "#row\t{id}");
        }
        for (id, row) in self.row_ids.iter().zip(&self.rows) {
            for &(c, v) in row {
                let _ = writeln!(out, "{id}\t{}\t{v}", self.columns.name(c as usize));
            }
        }
        out
    }

    pub fn from_triplets(text: &str) -> Result<FeatureMatrix> {
        let bad = |line: usize, msg: &str| EggsError::Parse {
            path: "<triplets>".into(),
            line,
            message: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "#eggs-features v1")) => {}
            _ => return Err(bad(1, "missing `#eggs-features v1` header")),
        }
        let mut columns = ColumnDictionary::new();
        let mut row_ids = Vec::new();
        let mut row_index: HashMap<String, usize> = HashMap::new();
        let mut entries: Vec<Vec<(u32, f64)>> = Vec::new();
        for (i, line) in lines {
            let parts: Vec<&str> = line.split('\t').collect();
            match parts.as_slice() {
                ["#col", name, kind] => {
                    let kind = match *kind {
                        "dense" => ColumnKind::Dense,
                        "binary" => ColumnKind::Binary,
                        _ => return Err(bad(i + 1, "column kind must be dense or binary")),
                    };
                    columns.push(*name, kind);
                }
                ["#row", id] => {
                    row_index.insert(id.to_string(), row_ids.len());
                    row_ids.push(id.to_string());
                    entries.push(Vec::new());
                }
                [id, name, value] => {
                    let r = *row_index.get(*id).ok_or_else(|| bad(i + 1, "undeclared row"))?;
                    let c = columns.get(name).ok_or_else(|| bad(i + 1, "undeclared column"))?;
                    let v: f64 = value.parse().map_err(|_| bad(i + 1, "bad value"))?;
                    entries[r].push((c as u32, v));
                }
                [] | [""] => {}
                _ => return Err(bad(i + 1, "expected 3 tab-separated fields")),
            }
        }
        let mut m = FeatureMatrix::new(columns);
        for (id, e) in row_ids.into_iter().zip(entries) {
            m.push_row(id, e)?;
        }
        Ok(m)
    }

    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_triplets()).map_err(|e| EggsError::io(path, e))
    }

    pub fn read_triplets(path: &Path) -> Result<FeatureMatrix> {
        let text = std::fs::read_to_string(path).map_err(|e| EggsError::io(path, e))?;
        FeatureMatrix::from_triplets(&text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Families left out of the matrix ("limited" mode).
    #[serde(default)]
    pub excluded: Vec<FeatureFamily>,
    #[serde(default = "default_ngram_n")]
    pub ngram_n: usize,
    #[serde(default = "default_ngram_top_k")]
    pub ngram_top_k: usize,
}

fn default_ngram_n() -> usize {
    3
}

fn default_ngram_top_k() -> usize {
    10_000
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            excluded: Vec::new(),
            ngram_n: default_ngram_n(),
            ngram_top_k: default_ngram_top_k(),
        }
    }
}

impl FeatureConfig {
    pub fn includes(&self, family: FeatureFamily) -> bool {
        !self.excluded.contains(&family)
    }
}

/// Everything fitted on training data that the transform needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub config: FeatureConfig,
    pub vocabulary: Option<Vocabulary>,
    pub graph: GraphFeatureTable,
    pub columns: ColumnDictionary,
}

const CONTENT_COLUMNS: [&str; 7] = [
    "NumChars",
    "NumHashtags",
    "NumLinks",
    "NumMentions",
    "IsRetweet",
    "Polarity",
    "Subjectivity",
];

const GRAPH_COLUMNS: [&str; 5] = ["Pagerank", "TriCnt", "KCore", "InDegree", "OutDegree"];

impl FeatureExtractor {
    /// Fits the n-gram vocabulary on `train` texts and takes graph features
    /// from the follower graph.
    pub fn fit(config: FeatureConfig, train: &[Message], follows: &[(String, String)]) -> FeatureExtractor {
        let vocabulary = config.includes(FeatureFamily::Ngram).then(|| {
            fit_ngram_vocabulary(
                train.iter().map(|m| m.text.as_str()),
                config.ngram_n,
                config.ngram_top_k,
            )
        });
        let graph = if config.includes(FeatureFamily::Graph) {
            GraphFeatureTable::compute(&build_follower_graph(follows))
        } else {
            GraphFeatureTable::default()
        };
        let mut columns = ColumnDictionary::new();
        if config.includes(FeatureFamily::Content) {
            for c in CONTENT_COLUMNS {
                let kind = if c == "IsRetweet" {
                    ColumnKind::Binary
                } else {
                    ColumnKind::Dense
                };
                columns.push(c, kind);
            }
        }
        if config.includes(FeatureFamily::User) {
            for c in user::USER_COLUMNS {
                columns.push(c, ColumnKind::Dense);
            }
        }
        if config.includes(FeatureFamily::Graph) {
            for c in GRAPH_COLUMNS {
                columns.push(c, ColumnKind::Dense);
            }
        }
        if let Some(vocab) = &vocabulary {
            for g in vocab.grams() {
                columns.push(format!("ng:{g}"), ColumnKind::Binary);
            }
        }
        FeatureExtractor {
            config,
            vocabulary,
            graph,
            columns,
        }
    }

    /// Features for every message of a chronologically sorted list. Label-derived
    /// user features only see `known_labels`.
    pub fn transform(&self, messages: &[Message], known_labels: &Labels) -> Result<FeatureMatrix> {
        let user_feats = if self.config.includes(FeatureFamily::User) {
            Some(extract_user_features_sequential(messages, known_labels)?)
        } else {
            None
        };
        let ngram_rows = self
            .vocabulary
            .as_ref()
            .map(|v| ngram_features(messages.iter().map(|m| m.text.as_str()), v));
        let col = |name: &str| self.columns.get(name).expect("fitted column") as u32;
        // n-gram columns are contiguous, in vocabulary order
        let ngram_offset = self
            .vocabulary
            .as_ref()
            .and_then(|v| v.grams().first())
            .map(|g| col(&format!("ng:{g}")));
        let mut out = FeatureMatrix::new(self.columns.clone());
        for (i, m) in messages.iter().enumerate() {
            let mut entries = Vec::new();
            if self.config.includes(FeatureFamily::Content) {
                for (name, v) in extract_content_features(m) {
                    entries.push((col(name), v));
                }
            }
            if let Some(uf) = &user_feats {
                for (name, v) in uf[i].named() {
                    entries.push((col(name), v));
                }
            }
            if self.config.includes(FeatureFamily::Graph) {
                let g = self.graph.get(&m.user_id);
                for (name, v) in GRAPH_COLUMNS.iter().zip(g.values()) {
                    entries.push((col(name), v));
                }
            }
            if let (Some(rows), Some(offset)) = (&ngram_rows, ngram_offset) {
                entries.extend(rows[i].iter().map(|&j| (offset + j as u32, 1.0)));
            }
            out.push_row(m.id.clone(), entries)?;
        }
        Ok(out)
    }
}

/// Content feature name → value, in column order.
pub type FeatureMap = BTreeMap<&'static str, f64>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::Label;

    fn corpus() -> Vec<Message> {
        let texts = ["free followers http://x.co", "nice track #music", "love it @dj"];
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut m = Message::new(format!("m{i}"), format!("u{}", i % 2), *t);
                m.timestamp = i as i64;
                m
            })
            .collect()
    }

    #[test]
    fn triplets_roundtrip() {
        let ms = corpus();
        let fx = FeatureExtractor::fit(FeatureConfig::default(), &ms, &[("u0".into(), "u1".into())]);
        let x = fx.transform(&ms, &Labels::new()).unwrap();
        let back = FeatureMatrix::from_triplets(&x.to_triplets()).unwrap();
        assert_eq!(back, x);
        assert_eq!(back.columns.fingerprint(), x.columns.fingerprint());
    }

    #[test]
    fn transform_is_reproducible() {
        let ms = corpus();
        let fx = FeatureExtractor::fit(FeatureConfig::default(), &ms, &[]);
        let labels: Labels = [("m0".to_string(), Label::Spam)].into_iter().collect();
        let a = fx.transform(&ms, &labels).unwrap().to_triplets();
        let b = fx.transform(&ms, &labels).unwrap().to_triplets();
        assert_eq!(a, b);
    }

    #[test]
    fn limited_mode_drops_family_columns() {
        let ms = corpus();
        let cfg = FeatureConfig {
            excluded: vec![FeatureFamily::Ngram, FeatureFamily::Graph],
            ..FeatureConfig::default()
        };
        let fx = FeatureExtractor::fit(cfg, &ms, &[("u0".into(), "u1".into())]);
        assert!(fx.columns.names().iter().all(|n| !n.starts_with("ng:")));
        assert!(fx.columns.get("Pagerank").is_none());
        assert!(fx.columns.get("UMsgs").is_some());
    }

    #[test]
    fn non_finite_values_rejected() {
        let mut cols = ColumnDictionary::new();
        cols.push("a", ColumnKind::Dense);
        let mut m = FeatureMatrix::new(cols);
        assert!(m.push_row("r", vec![(0, f64::NAN)]).is_err());
        assert!(m.push_row("r", vec![(3, 1.0)]).is_err());
    }

    #[test]
    fn dense_columns_append() {
        let mut cols = ColumnDictionary::new();
        cols.push("a", ColumnKind::Binary);
        let mut m = FeatureMatrix::new(cols);
        m.push_row("r0", vec![(0, 1.0)]).unwrap();
        m.push_row("r1", vec![]).unwrap();
        let m2 = m
            .with_dense_columns(&["USRatio".into()], &[vec![0.25], vec![0.5]])
            .unwrap();
        assert_eq!(m2.get(0, 1), 0.25);
        assert_eq!(m2.get(1, 1), 0.5);
        assert_eq!(m2.get(1, 0), 0.0);
        assert_eq!(m2.columns.kind(1), ColumnKind::Dense);
    }
}
