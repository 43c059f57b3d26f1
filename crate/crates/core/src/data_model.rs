//! Messages, relation groups ("hubs") and chronological splitting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{EggsError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Ham,
    Spam,
}

impl Label {
    pub fn is_spam(self) -> bool {
        matches!(self, Label::Spam)
    }

    pub fn code(self) -> u8 {
        match self {
            Label::Ham => 0,
            Label::Spam => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Label> {
        match code {
            0 => Some(Label::Ham),
            1 => Some(Label::Spam),
            _ => None,
        }
    }
}

mod label_code {
    use super::Label;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(label: &Option<Label>, s: S) -> Result<S::Ok, S::Error> {
        match label {
            Some(l) => s.serialize_some(&l.code()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Label>, D::Error> {
        match Option::<u8>::deserialize(d)? {
            None => Ok(None),
            Some(code) => Label::from_code(code)
                .map(Some)
                .ok_or_else(|| D::Error::custom(format!("label must be 0 or 1, got {code}"))),
        }
    }
}

/// One social-network post.
///
/// `timestamp` is epoch seconds. When the input record has no timestamp the
/// loader substitutes the record's line index, so ordering falls back to
/// insertion order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub id: String,
    pub user_id: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_id: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hashtags: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mentions: Vec<String>,
    #[serde(default)]
    pub is_retweet: bool,
    #[serde(
        default,
        with = "label_code",
        skip_serializing_if = "Option::is_none"
    )]
    pub label: Option<Label>,
}

impl Message {
    pub fn new(id: impl Into<String>, user_id: impl Into<String>, text: impl Into<String>) -> Self {
        Message {
            id: id.into(),
            user_id: user_id.into(),
            text: text.into(),
            timestamp: 0,
            target_id: None,
            links: Vec::new(),
            hashtags: Vec::new(),
            mentions: Vec::new(),
            is_retweet: false,
            label: None,
        }
    }

    /// Annotated hashtags, or the ones found in the text when none are annotated.
    pub fn effective_hashtags(&self) -> Vec<String> {
        if self.hashtags.is_empty() {
            scan_text(&self.text).hashtags
        } else {
            self.hashtags
                .iter()
                .map(|h| h.trim_start_matches('#').to_lowercase())
                .collect()
        }
    }

    pub fn effective_links(&self) -> Vec<String> {
        if self.links.is_empty() {
            scan_text(&self.text).links
        } else {
            self.links.clone()
        }
    }

    pub fn effective_mentions(&self) -> Vec<String> {
        if self.mentions.is_empty() {
            scan_text(&self.text).mentions
        } else {
            self.mentions
                .iter()
                .map(|m| m.trim_start_matches('@').to_lowercase())
                .collect()
        }
    }
}

#[derive(Debug, Default, PartialEq)]
pub struct TextEntities {
    pub hashtags: Vec<String>,
    pub links: Vec<String>,
    pub mentions: Vec<String>,
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || ('\u{2000}'..='\u{206F}').contains(&c)
        || matches!(c, '¡' | '¿' | '«' | '»' | '、' | '。')
}

/// Whitespace tokens of the form `#tag`, `@user` and `http(s)://...` / `www.`.
pub fn scan_text(text: &str) -> TextEntities {
    let mut out = TextEntities::default();
    for tok in text.split_whitespace() {
        let lower = tok.to_lowercase();
        if lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.") {
            out.links.push(tok.trim_end_matches(is_punct).to_string());
        } else if let Some(rest) = tok.strip_prefix('#') {
            let tag = rest.trim_end_matches(is_punct);
            if !tag.is_empty() {
                out.hashtags.push(tag.to_lowercase());
            }
        } else if let Some(rest) = tok.strip_prefix('@') {
            let name = rest.trim_end_matches(is_punct);
            if !name.is_empty() {
                out.mentions.push(name.to_lowercase());
            }
        }
    }
    out
}

/// NFC, lowercase, whitespace runs collapsed, leading/trailing punctuation removed.
pub fn normalize_text(text: &str) -> String {
    let lowered: String = text.nfc().collect::<String>().to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut s = collapsed.as_str();
    loop {
        let trimmed = s.trim_matches(is_punct).trim();
        if trimmed.len() == s.len() {
            break;
        }
        s = trimmed;
    }
    s.to_string()
}

/// Lowercases scheme and host, leaves path/query untouched.
pub fn normalize_link(url: &str) -> String {
    let url = url.trim();
    let (scheme, rest) = match url.find("://") {
        Some(pos) => (Some(&url[..pos]), &url[pos + 3..]),
        None => (None, url),
    };
    let host_end = rest.find(['/', '?', '#']).unwrap_or(rest.len());
    let (host, tail) = rest.split_at(host_end);
    let mut out = String::with_capacity(url.len());
    if let Some(scheme) = scheme {
        out.push_str(&scheme.to_lowercase());
        out.push_str("://");
    }
    out.push_str(&host.to_lowercase());
    out.push_str(tail);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    User,
    Text,
    Link,
    Hashtag,
    Mention,
    Track,
    UserHashtag,
}

impl Relation {
    pub const ALL: [Relation; 7] = [
        Relation::User,
        Relation::Text,
        Relation::Link,
        Relation::Hashtag,
        Relation::Mention,
        Relation::Track,
        Relation::UserHashtag,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Relation::User => "user",
            Relation::Text => "text",
            Relation::Link => "link",
            Relation::Hashtag => "hashtag",
            Relation::Mention => "mention",
            Relation::Track => "track",
            Relation::UserHashtag => "user_hashtag",
        }
    }

    /// Grouping keys of `m` under this relation, deduplicated and sorted.
    pub fn keys(self, m: &Message) -> Vec<String> {
        let mut keys: Vec<String> = match self {
            Relation::User => vec![m.user_id.clone()],
            Relation::Text => {
                let t = normalize_text(&m.text);
                if t.is_empty() {
                    vec![]
                } else {
                    vec![t]
                }
            }
            Relation::Link => m.effective_links().iter().map(|l| normalize_link(l)).collect(),
            Relation::Hashtag => m.effective_hashtags(),
            Relation::Mention => m.effective_mentions(),
            Relation::Track => m.target_id.iter().cloned().collect(),
            Relation::UserHashtag => m
                .effective_hashtags()
                .into_iter()
                .map(|h| format!("{}\u{1f}{}", m.user_id, h))
                .collect(),
        };
        keys.sort();
        keys.dedup();
        keys
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Relation {
    type Err = EggsError;

    fn from_str(s: &str) -> Result<Self> {
        Relation::ALL
            .into_iter()
            .find(|r| r.name() == s.trim().to_lowercase().replace('-', "_"))
            .ok_or_else(|| EggsError::Config(format!("unknown relation `{s}`")))
    }
}

pub fn parse_relations(tags: &[impl AsRef<str>]) -> Result<Vec<Relation>> {
    tags.iter().map(|t| t.as_ref().parse()).collect()
}

/// A hub: every message sharing one relation key. Always at least two members.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub relation: Relation,
    pub key: String,
    /// Sorted, unique.
    pub member_ids: Vec<String>,
}

impl Group {
    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }
}

/// Groups for each relation, ordered by (relation, key). Independent of input order.
pub fn build_groups(messages: &[Message], relations: &[Relation]) -> Vec<Group> {
    let mut rels: Vec<Relation> = relations.to_vec();
    rels.sort();
    rels.dedup();
    let mut groups = Vec::new();
    for rel in rels {
        let mut buckets: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
        for m in messages {
            for key in rel.keys(m) {
                buckets.entry(key).or_default().insert(m.id.as_str());
            }
        }
        groups.extend(buckets.into_iter().filter(|(_, ids)| ids.len() >= 2).map(
            |(key, ids)| Group {
                relation: rel,
                key,
                member_ids: ids.into_iter().map(str::to_string).collect(),
            },
        ));
    }
    groups
}


/// Keeps only members accepted by `keep`; groups left with fewer than two
/// members are dropped.
pub fn restrict_groups(groups: &[Group], keep: impl Fn(&str) -> bool) -> Vec<Group> {
    groups
        .iter()
        .filter_map(|g| {
            let members: Vec<String> = g.member_ids.iter().filter(|m| keep(m)).cloned().collect();
            (members.len() >= 2).then(|| Group {
                relation: g.relation,
                key: g.key.clone(),
                member_ids: members,
            })
        })
        .collect()
}

/// Spam probability per message id.
pub type Predictions = BTreeMap<String, f64>;

/// Gold label per message id.
pub type Labels = BTreeMap<String, Label>;

pub fn labels_of(messages: &[Message]) -> Labels {
    messages
        .iter()
        .filter_map(|m| m.label.map(|l| (m.id.clone(), l)))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_messages: usize,
    pub duplicate_ids: Vec<String>,
    /// Ids whose timestamp is negative.
    pub invalid_timestamps: Vec<String>,
    pub label_coverage: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.duplicate_ids.is_empty() && self.invalid_timestamps.is_empty()
    }

    pub fn errors(&self) -> Vec<String> {
        let mut errs: Vec<String> = self
            .duplicate_ids
            .iter()
            .map(|id| format!("duplicate message id `{id}`"))
            .collect();
        errs.extend(
            self.invalid_timestamps
                .iter()
                .map(|id| format!("message `{id}` has a negative timestamp")),
        );
        errs
    }
}

pub fn validate_dataset(messages: &[Message]) -> ValidationReport {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for m in messages {
        *seen.entry(m.id.as_str()).or_default() += 1;
    }
    let mut duplicate_ids: Vec<String> = seen
        .into_iter()
        .filter(|&(_, n)| n > 1)
        .map(|(id, _)| id.to_string())
        .collect();
    duplicate_ids.sort();
    let invalid_timestamps = messages
        .iter()
        .filter(|m| m.timestamp < 0)
        .map(|m| m.id.clone())
        .collect();
    let labeled = messages.iter().filter(|m| m.label.is_some()).count();
    ValidationReport {
        n_messages: messages.len(),
        duplicate_ids,
        invalid_timestamps,
        label_coverage: if messages.is_empty() {
            0.0
        } else {
            labeled as f64 / messages.len() as f64
        },
    }
}

/// Sorts by (timestamp, id).
pub fn sort_chronologically(messages: &mut [Message]) {
    messages.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
}

pub fn is_chronological(messages: &[Message]) -> bool {
    messages
        .windows(2)
        .all(|w| (w[0].timestamp, &w[0].id) <= (w[1].timestamp, &w[1].id))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRange {
    pub start: usize,
    pub end: usize,
}

impl IndexRange {
    pub fn new(start: usize, end: usize) -> Self {
        IndexRange { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn as_range(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subset {
    pub train: IndexRange,
    pub validation: IndexRange,
    pub test: IndexRange,
}

impl Subset {
    /// Everything from the start of training through the end of the test range.
    pub fn span(&self) -> IndexRange {
        IndexRange::new(self.train.start, self.test.end)
    }
}

/// Index ranges over the chronologically sorted dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub n_messages: usize,
    pub subsets: Vec<Subset>,
}

impl SplitPlan {
    pub fn n_subsets(&self) -> usize {
        self.subsets.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, validation: f64, test: f64) -> Self {
        SplitFractions {
            train,
            validation,
            test,
        }
    }
}

/// Splits `n_messages` sorted messages into contiguous, non-overlapping subsets,
/// each laid out as train, then validation, then test.
pub fn chronological_split(
    n_messages: usize,
    n_subsets: usize,
    fractions: SplitFractions,
) -> Result<SplitPlan> {
    let SplitFractions {
        train,
        validation,
        test,
    } = fractions;
    if [train, validation, test].iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(EggsError::Config(format!(
            "split fractions must lie in [0, 1], got {fractions:?}"
        )));
    }
    if ((train + validation + test) - 1.0).abs() > 1e-9 {
        return Err(EggsError::Config(format!(
            "split fractions must sum to 1, got {}",
            train + validation + test
        )));
    }
    if n_subsets == 0 {
        return Err(EggsError::Config("n_subsets must be at least 1".into()));
    }
    if n_messages < n_subsets {
        return Err(EggsError::InvalidInput(format!(
            "{n_messages} messages cannot be split into {n_subsets} subsets"
        )));
    }
    let mut subsets = Vec::with_capacity(n_subsets);
    for s in 0..n_subsets {
        let start = s * n_messages / n_subsets;
        let end = (s + 1) * n_messages / n_subsets;
        let size = (end - start) as f64;
        let train_end = start + (size * train).round() as usize;
        let val_end = (start + (size * (train + validation)).round() as usize).clamp(train_end, end);
        subsets.push(Subset {
            train: IndexRange::new(start, train_end.min(end)),
            validation: IndexRange::new(train_end.min(end), val_end),
            test: IndexRange::new(val_end, end),
        });
    }
    Ok(SplitPlan {
        n_messages,
        subsets,
    })
}

/// Reads line-delimited JSON messages. Blank lines are skipped and unknown
/// fields ignored; a record without a timestamp gets its line index.
pub fn read_messages(path: &Path) -> Result<Vec<Message>> {
    let file = std::fs::File::open(path).map_err(|e| EggsError::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| EggsError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| EggsError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        if let Some(obj) = value.as_object_mut() {
            if obj.get("timestamp").is_none_or(|t| t.is_null()) {
                obj.insert("timestamp".into(), serde_json::json!(idx));
            }
        }
        let msg: Message = serde_json::from_value(value).map_err(|e| EggsError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(msg);
    }
    Ok(out)
}

pub fn write_messages(path: &Path, messages: &[Message]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| EggsError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for m in messages {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n").map_err(|e| EggsError::io(path, e))?;
    }
    w.flush().map_err(|e| EggsError::io(path, e))
}

/// Follow edges as `follower<TAB>followee` lines.
pub fn read_follows(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| EggsError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let mut parts = l.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => Ok((a.to_string(), b.to_string())),
                _ => Err(EggsError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected `follower<TAB>followee`".into(),
                }),
            }
        })
        .collect()
}

pub fn write_follows(path: &Path, follows: &[(String, String)]) -> Result<()> {
    let mut out = String::new();
    for (a, b) in follows {
        out.push_str(a);
        out.push('\t');
        out.push_str(b);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| EggsError::io(path, e))
}
