//! Per-user (and per-track) aggregates computed strictly from earlier messages.

use std::collections::HashMap;

use crate::data_model::{is_chronological, Label, Labels, Message};
use crate::error::{EggsError, Result};

pub const USER_COLUMNS: [&str; 10] = [
    "UMsgs",
    "UHRatio",
    "UMRatio",
    "ULRatio",
    "UBlacklist",
    "UWhitelist",
    "UMsgMax",
    "UMsgMin",
    "UMsgMean",
    "TMsgs",
];

const BLACKLIST_MIN_SPAM: usize = 3;
const WHITELIST_MIN_HAM: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UserFeatures {
    pub msgs: f64,
    pub hashtag_ratio: f64,
    pub mention_ratio: f64,
    pub link_ratio: f64,
    pub blacklist: f64,
    pub whitelist: f64,
    pub len_max: f64,
    pub len_min: f64,
    pub len_mean: f64,
    pub track_msgs: f64,
}

impl UserFeatures {
    pub fn named(&self) -> [(&'static str, f64); 10] {
        [
            ("UMsgs", self.msgs),
            ("UHRatio", self.hashtag_ratio),
            ("UMRatio", self.mention_ratio),
            ("ULRatio", self.link_ratio),
            ("UBlacklist", self.blacklist),
            ("UWhitelist", self.whitelist),
            ("UMsgMax", self.len_max),
            ("UMsgMin", self.len_min),
            ("UMsgMean", self.len_mean),
            ("TMsgs", self.track_msgs),
        ]
    }
}

#[derive(Default)]
struct History {
    n: usize,
    with_hashtag: usize,
    with_mention: usize,
    with_link: usize,
    spam: usize,
    ham: usize,
    len_max: usize,
    len_min: usize,
    len_sum: usize,
}

impl History {
    fn features(&self) -> UserFeatures {
        let ratio = |k: usize| if self.n == 0 { 0.0 } else { k as f64 / self.n as f64 };
        UserFeatures {
            msgs: self.n as f64,
            hashtag_ratio: ratio(self.with_hashtag),
            mention_ratio: ratio(self.with_mention),
            link_ratio: ratio(self.with_link),
            blacklist: (self.spam >= BLACKLIST_MIN_SPAM) as u8 as f64,
            whitelist: (self.ham >= WHITELIST_MIN_HAM) as u8 as f64,
            len_max: self.len_max as f64,
            len_min: self.len_min as f64,
            len_mean: ratio(self.len_sum),
            track_msgs: 0.0,
        }
    }

    fn record(&mut self, m: &Message, label: Option<Label>) {
        let len = m.text.chars().count();
        if self.n == 0 {
            self.len_min = len;
        }
        self.n += 1;
        self.with_hashtag += !m.effective_hashtags().is_empty() as usize;
        self.with_mention += !m.effective_mentions().is_empty() as usize;
        self.with_link += !m.effective_links().is_empty() as usize;
        match label {
            Some(Label::Spam) => self.spam += 1,
            Some(Label::Ham) => self.ham += 1,
            None => {}
        }
        self.len_max = self.len_max.max(len);
        self.len_min = self.len_min.min(len);
        self.len_sum += len;
    }
}

/// Features for message `i` depend only on messages `0..i`. `known_labels`
/// should hold training-period labels only.
pub fn extract_user_features_sequential(
    messages: &[Message],
    known_labels: &Labels,
) -> Result<Vec<UserFeatures>> {
    if !is_chronological(messages) {
        return Err(EggsError::InvalidInput(
            "messages must be sorted by (timestamp, id)".into(),
        ));
    }
    let mut users: HashMap<&str, History> = HashMap::new();
    let mut tracks: HashMap<&str, usize> = HashMap::new();
    let mut out = Vec::with_capacity(messages.len());
    for m in messages {
        let hist = users.entry(m.user_id.as_str()).or_default();
        let mut f = hist.features();
        hist.record(m, known_labels.get(&m.id).copied());
        if let Some(t) = m.target_id.as_deref() {
            let count = tracks.entry(t).or_default();
            f.track_msgs = *count as f64;
            *count += 1;
        }
        out.push(f);
    }
    Ok(out)
}
