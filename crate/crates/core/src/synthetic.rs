//! Synthetic social-network datasets with planted spam campaigns.
//!
//! Ham users post from a ham vocabulary, spam campaigns post bursts of
//! messages from a small set of dedicated accounts, reusing a text template,
//! a link and a hashtag. Both classes draw from a shared vocabulary and, with
//! probability `feature_noise`, from each other's, so text alone is an
//! imperfect signal. Campaign starts are spread over the timeline. A share of
//! messages (mostly spam) are "loud", carrying extra hashtags and mentions.

use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{labels_of, Label, Labels, Message};
use crate::error::{EggsError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_users: usize,
    pub n_messages: usize,
    pub spam_prevalence: f64,
    pub n_campaigns: usize,
    /// Relative campaign sizes are drawn uniformly from `[1 - d, 1 + d]`.
    pub campaign_size_dispersion: f64,
    pub spammers_per_campaign: usize,
    /// Fraction of campaign messages posted from random ham accounts.
    pub compromised_rate: f64,
    pub text_reuse: f64,
    pub link_reuse: f64,
    pub hashtag_reuse: f64,
    /// Campaign duration as a fraction of the whole time span. Campaign starts
    /// are stratified over the timeline.
    pub burst_width: f64,
    /// Mean out-degrees; each account's degree is uniform on `[0, 2 * mean]`.
    pub ham_out_degree: usize,
    pub spammer_out_degree: usize,
    /// Probability that a ham follow edge points at a spammer.
    pub spammer_follow_prob: f64,
    pub ham_vocab_size: usize,
    pub spam_vocab_size: usize,
    pub shared_vocab_size: usize,
    /// Share of tokens drawn from the shared vocabulary.
    pub shared_token_rate: f64,
    /// Share of class-specific tokens drawn from the other class.
    pub feature_noise: f64,
    pub ham_link_rate: f64,
    pub spam_link_rate: f64,
    pub ham_hashtag_rate: f64,
    pub ham_duplicate_rate: f64,
    pub mention_rate: f64,
    pub retweet_rate: f64,
    /// Share of spam (ham) messages that pile on extra hashtags and mentions.
    pub loud_spam_rate: f64,
    pub loud_ham_rate: f64,
    pub n_tracks: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 7,
            n_users: 2000,
            n_messages: 20_000,
            spam_prevalence: 0.05,
            n_campaigns: 40,
            campaign_size_dispersion: 0.5,
            spammers_per_campaign: 3,
            compromised_rate: 0.1,
            text_reuse: 0.5,
            link_reuse: 0.5,
            hashtag_reuse: 0.5,
            burst_width: 0.03,
            ham_out_degree: 8,
            spammer_out_degree: 10,
            spammer_follow_prob: 0.04,
            ham_vocab_size: 500,
            spam_vocab_size: 150,
            shared_vocab_size: 300,
            shared_token_rate: 0.4,
            feature_noise: 0.3,
            ham_link_rate: 0.35,
            spam_link_rate: 0.6,
            ham_hashtag_rate: 0.3,
            ham_duplicate_rate: 0.03,
            mention_rate: 0.2,
            retweet_rate: 0.1,
            loud_spam_rate: 0.8,
            loud_ham_rate: 0.02,
            n_tracks: 500,
        }
    }
}

impl GeneratorConfig {
    pub fn n_spam(&self) -> usize {
        (self.spam_prevalence * self.n_messages as f64).round() as usize
    }

    pub fn n_spammers(&self) -> usize {
        self.n_campaigns * self.spammers_per_campaign
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("spam_prevalence", self.spam_prevalence),
            ("compromised_rate", self.compromised_rate),
            ("text_reuse", self.text_reuse),
            ("link_reuse", self.link_reuse),
            ("hashtag_reuse", self.hashtag_reuse),
            ("burst_width", self.burst_width),
            ("spammer_follow_prob", self.spammer_follow_prob),
            ("shared_token_rate", self.shared_token_rate),
            ("feature_noise", self.feature_noise),
            ("ham_link_rate", self.ham_link_rate),
            ("spam_link_rate", self.spam_link_rate),
            ("ham_hashtag_rate", self.ham_hashtag_rate),
            ("ham_duplicate_rate", self.ham_duplicate_rate),
            ("mention_rate", self.mention_rate),
            ("retweet_rate", self.retweet_rate),
            ("loud_spam_rate", self.loud_spam_rate),
            ("loud_ham_rate", self.loud_ham_rate),
            ("campaign_size_dispersion", self.campaign_size_dispersion),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(EggsError::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        let sizes = [
            ("n_messages", self.n_messages),
            ("ham_vocab_size", self.ham_vocab_size),
            ("spam_vocab_size", self.spam_vocab_size),
            ("shared_vocab_size", self.shared_vocab_size),
            ("n_tracks", self.n_tracks),
        ];
        for (name, n) in sizes {
            if n == 0 {
                return Err(EggsError::Config(format!("{name} must be positive")));
            }
        }
        let n_spam = self.n_spam();
        if n_spam > 0 && (self.n_campaigns == 0 || self.spammers_per_campaign == 0) {
            return Err(EggsError::Config("spam messages need at least one campaign with one spammer".into()));
        }
        if self.n_campaigns > n_spam {
            return Err(EggsError::Config(format!(
                "{} campaigns do not fit in a budget of {n_spam} spam messages",
                self.n_campaigns
            )));
        }
        if self.n_users <= self.n_spammers() + 1 {
            return Err(EggsError::Config(format!(
                "{} users leave fewer than two ham accounts beside {} spammers",
                self.n_users,
                self.n_spammers()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    /// Sorted by (timestamp, id); ids follow that order.
    pub messages: Vec<Message>,
    pub follows: Vec<(String, String)>,
    pub labels: Labels,
    /// Campaign index for each spam message id.
    pub campaigns: Vec<(String, usize)>,
}

const SPAM_WORDS: &[&str] = &[
    "buy", "cash", "cheap", "click", "deal", "free", "guaranteed", "instant", "lucky", "money", "now", "offer", "prize",
    "win", "winner",
];

const HAM_WORDS: &[&str] = &[
    "amazing", "awesome", "bad", "beautiful", "boring", "cool", "dope", "fire", "good", "great", "happy", "love", "music",
    "nice", "sad", "song", "sweet", "track", "vibe", "wow",
];

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn make_vocab(rng: &mut ChaCha8Rng, size: usize, seeds: &[&str], taken: &mut HashSet<String>) -> Vec<String> {
    let mut out: Vec<String> = seeds.iter().map(|s| s.to_string()).collect();
    taken.extend(out.iter().cloned());
    while out.len() < size.max(seeds.len()) {
        let syllables = rng.random_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(*CONSONANTS.choose(rng).unwrap() as char);
            w.push(*VOWELS.choose(rng).unwrap() as char);
        }
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

struct Vocabularies {
    ham: Vec<String>,
    spam: Vec<String>,
    shared: Vec<String>,
}

impl Vocabularies {
    fn text(&self, rng: &mut ChaCha8Rng, cfg: &GeneratorConfig, spam: bool) -> String {
        let len = rng.random_range(4..=12);
        let (own, other) = if spam { (&self.spam, &self.ham) } else { (&self.ham, &self.spam) };
        let tokens: Vec<&str> = (0..len)
            .map(|_| {
                let pool = if rng.random_bool(cfg.shared_token_rate) {
                    &self.shared
                } else if rng.random_bool(cfg.feature_noise) {
                    other
                } else {
                    own
                };
                pool.choose(rng).unwrap().as_str()
            })
            .collect();
        tokens.join(" ")
    }
}

/// Adds 2-4 hashtags from `tags` and 1-3 mentions.
fn make_loud(m: &mut Message, rng: &mut ChaCha8Rng, tags: &[String], mentions: impl Fn(&mut ChaCha8Rng) -> String) {
    for _ in 0..rng.random_range(2..=4) {
        m.hashtags.push(tags.choose(rng).unwrap().clone());
    }
    for _ in 0..rng.random_range(1..=3) {
        m.mentions.push(mentions(rng));
    }
    m.hashtags.sort();
    m.hashtags.dedup();
    m.mentions.sort();
    m.mentions.dedup();
}

struct Campaign {
    spammers: Vec<usize>,
    template: String,
    link: String,
    hashtag: String,
    start: f64,
}

/// Largest-remainder allocation of `total` items over `weights`, at least one each.
fn allocate(total: usize, weights: &[f64]) -> Vec<usize> {
    let k = weights.len();
    let spare = total - k;
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * spare as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest: Vec<usize> = (0..k).collect();
    rest.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let missing = spare - sizes.iter().sum::<usize>();
    for &i in rest.iter().take(missing) {
        sizes[i] += 1;
    }
    sizes.iter().map(|s| s + 1).collect()
}

pub fn generate(cfg: &GeneratorConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut taken = HashSet::new();
    let vocab = Vocabularies {
        ham: make_vocab(&mut rng, cfg.ham_vocab_size, HAM_WORDS, &mut taken),
        spam: make_vocab(&mut rng, cfg.spam_vocab_size, SPAM_WORDS, &mut taken),
        shared: make_vocab(&mut rng, cfg.shared_vocab_size, &[], &mut taken),
    };

    // users 0..n_spammers are spammers; ids are shuffled so the number leaks nothing
    let n_users = cfg.n_users;
    let n_spammers = cfg.n_spammers();
    let mut user_numbers: Vec<usize> = (0..n_users).collect();
    rand::seq::SliceRandom::shuffle(user_numbers.as_mut_slice(), &mut rng);
    let user_name = |u: usize| format!("u{:05}", user_numbers[u]);
    let ham_users: Vec<usize> = (n_spammers..n_users).collect();
    let activity: Vec<f64> = (0..ham_users.len()).map(|r| 1.0 / (r as f64 + 1.0).powf(0.8)).collect();
    let ham_pick = WeightedIndex::new(&activity).map_err(|e| EggsError::Config(e.to_string()))?;

    let horizon = cfg.n_messages as f64 * 60.0;
    let n_spam = cfg.n_spam();
    let weights: Vec<f64> = (0..cfg.n_campaigns)
        .map(|_| 1.0 + cfg.campaign_size_dispersion * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    let sizes = if cfg.n_campaigns == 0 { Vec::new() } else { allocate(n_spam, &weights) };
    let campaigns: Vec<Campaign> = (0..cfg.n_campaigns)
        .map(|c| Campaign {
            spammers: (c * cfg.spammers_per_campaign..(c + 1) * cfg.spammers_per_campaign).collect(),
            template: vocab.text(&mut rng, cfg, true),
            link: format!("http://promo{c}.example.com/{}", rng.random_range(1000..10_000)),
            hashtag: format!("{}{c}", vocab.spam.choose(&mut rng).unwrap()),
            // one campaign per stratum of the timeline, so no long stretch is spam-free
            start: (c as f64 + rng.random::<f64>()) / cfg.n_campaigns as f64 * horizon * (1.0 - cfg.burst_width),
        })
        .collect();

    let ham_links: Vec<String> = (0..200).map(|i| format!("http://site{i}.example.org/page")).collect();
    let ham_link_pick = WeightedIndex::new((0..200).map(|r| 1.0 / (r as f64 + 1.0))).unwrap();
    let ham_tags: Vec<String> = (0..100).map(|i| format!("{}{i}", vocab.ham[i % vocab.ham.len()])).collect();
    let ham_tag_pick = WeightedIndex::new((0..100).map(|r| 1.0 / (r as f64 + 1.0))).unwrap();
    let spam_tags: Vec<String> = (0..50).map(|i| format!("{}{}", vocab.spam[i % vocab.spam.len()], 100 + i)).collect();
    let common_phrases: Vec<String> = (0..30).map(|_| vocab.text(&mut rng, cfg, false)).collect();

    // (timestamp, message, campaign)
    let mut drafts: Vec<(i64, Message, Option<usize>)> = Vec::with_capacity(cfg.n_messages);
    let mut unique_link = 0usize;
    for (c, camp) in campaigns.iter().enumerate() {
        for _ in 0..sizes[c] {
            let user = if rng.random_bool(cfg.compromised_rate) {
                ham_users[ham_pick.sample(&mut rng)]
            } else {
                *camp.spammers.choose(&mut rng).unwrap()
            };
            let text = if rng.random_bool(cfg.text_reuse) {
                camp.template.clone()
            } else {
                vocab.text(&mut rng, cfg, true)
            };
            let mut m = Message::new("", user_name(user), text);
            if rng.random_bool(cfg.spam_link_rate) {
                m.links = vec![if rng.random_bool(cfg.link_reuse) {
                    camp.link.clone()
                } else {
                    unique_link += 1;
                    format!("http://x{unique_link}.example.net/{}", rng.random_range(0..1_000_000))
                }];
            }
            if rng.random_bool(cfg.hashtag_reuse) {
                m.hashtags = vec![camp.hashtag.clone()];
            }
            if rng.random_bool(cfg.mention_rate) {
                m.mentions = vec![user_name(ham_users[ham_pick.sample(&mut rng)])];
            }
            if rng.random_bool(cfg.loud_spam_rate) {
                make_loud(&mut m, &mut rng, &spam_tags, |r| user_name(ham_users[ham_pick.sample(r)]));
            }
            m.is_retweet = rng.random_bool(cfg.retweet_rate);
            m.target_id = Some(format!("t{:04}", rng.random_range(0..cfg.n_tracks)));
            m.label = Some(Label::Spam);
            let ts = camp.start + rng.random::<f64>() * horizon * cfg.burst_width;
            drafts.push((ts as i64, m, Some(c)));
        }
    }
    for _ in 0..cfg.n_messages - n_spam {
        let user = ham_users[ham_pick.sample(&mut rng)];
        let text = if rng.random_bool(cfg.ham_duplicate_rate) {
            common_phrases.choose(&mut rng).unwrap().clone()
        } else {
            vocab.text(&mut rng, cfg, false)
        };
        let mut m = Message::new("", user_name(user), text);
        if rng.random_bool(cfg.ham_link_rate) {
            m.links = vec![ham_links[ham_link_pick.sample(&mut rng)].clone()];
        }
        if rng.random_bool(cfg.ham_hashtag_rate) {
            m.hashtags = vec![ham_tags[ham_tag_pick.sample(&mut rng)].clone()];
        }
        if rng.random_bool(cfg.mention_rate) {
            m.mentions = vec![user_name(ham_users[ham_pick.sample(&mut rng)])];
        }
        if rng.random_bool(cfg.loud_ham_rate) {
            make_loud(&mut m, &mut rng, &ham_tags, |r| user_name(ham_users[ham_pick.sample(r)]));
        }
        m.is_retweet = rng.random_bool(cfg.retweet_rate);
        m.target_id = Some(format!("t{:04}", rng.random_range(0..cfg.n_tracks)));
        m.label = Some(Label::Ham);
        let ts = rng.random::<f64>() * horizon;
        drafts.push((ts as i64, m, None));
    }
    // stable: equal timestamps keep generation order, and ids follow the final order
    drafts.sort_by_key(|d| d.0);
    let width = drafts.len().to_string().len().max(6);
    let mut messages = Vec::with_capacity(drafts.len());
    let mut campaign_of = Vec::new();
    for (i, (ts, mut m, c)) in drafts.into_iter().enumerate() {
        m.id = format!("m{i:0width$}");
        m.timestamp = ts;
        if let Some(c) = c {
            campaign_of.push((m.id.clone(), c));
        }
        messages.push(m);
    }

    let mut follows = Vec::new();
    for &u in &ham_users {
        for _ in 0..rng.random_range(0..=2 * cfg.ham_out_degree) {
            let v = if n_spammers > 0 && rng.random_bool(cfg.spammer_follow_prob) {
                rng.random_range(0..n_spammers)
            } else {
                ham_users[ham_pick.sample(&mut rng)]
            };
            if v != u {
                follows.push((user_name(u), user_name(v)));
            }
        }
    }
    for u in 0..n_spammers {
        for _ in 0..rng.random_range(0..=2 * cfg.spammer_out_degree) {
            let v = ham_users[rng.random_range(0..ham_users.len())];
            follows.push((user_name(u), user_name(v)));
        }
    }
    follows.sort();
    follows.dedup();

    let labels = labels_of(&messages);
    Ok(SyntheticDataset {
        messages,
        follows,
        labels,
        campaigns: campaign_of,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{build_groups, is_chronological, Relation};
    use std::collections::{BTreeMap, BTreeSet};

    fn small() -> GeneratorConfig {
        GeneratorConfig {
            n_users: 300,
            n_messages: 2000,
            n_campaigns: 8,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate(&GeneratorConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a.messages, c.messages);
    }

    #[test]
    fn prevalence_is_exact() {
        let cfg = GeneratorConfig {
            n_users: 1000,
            ..GeneratorConfig::default()
        };
        let d = generate(&cfg).unwrap();
        assert_eq!(d.messages.len(), 20_000);
        assert_eq!(d.labels.values().filter(|l| l.is_spam()).count(), 1000);
        assert!(is_chronological(&d.messages));
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let too_many_campaigns = GeneratorConfig {
            n_messages: 100,
            n_campaigns: 40,
            ..GeneratorConfig::default()
        };
        assert!(matches!(generate(&too_many_campaigns), Err(EggsError::Config(_))));
        let bad_prob = GeneratorConfig {
            text_reuse: 1.5,
            ..small()
        };
        assert!(generate(&bad_prob).is_err());
        let too_few_users = GeneratorConfig { n_users: 20, ..small() };
        assert!(generate(&too_few_users).is_err());
    }

    #[test]
    fn full_text_reuse_gives_one_text_group_per_campaign() {
        let cfg = GeneratorConfig {
            text_reuse: 1.0,
            feature_noise: 0.0,
            ..small()
        };
        let d = generate(&cfg).unwrap();
        let campaign: BTreeMap<&str, usize> = d.campaigns.iter().map(|(id, c)| (id.as_str(), *c)).collect();
        let groups = build_groups(&d.messages, &[Relation::Text]);
        let mut seen = BTreeSet::new();
        for g in groups.iter().filter(|g| campaign.contains_key(g.member_ids[0].as_str())) {
            let cs: BTreeSet<usize> = g.member_ids.iter().map(|m| campaign[m.as_str()]).collect();
            assert_eq!(cs.len(), 1, "text group mixes campaigns");
            assert_eq!(g.len(), d.campaigns.iter().filter(|(_, c)| cs.contains(c)).count());
            assert!(seen.insert(*cs.first().unwrap()));
        }
        assert_eq!(seen.len(), cfg.n_campaigns);
    }

    #[test]
    fn allocation_sums_to_budget() {
        let s = allocate(1000, &[1.0, 0.5, 1.5, 1.2]);
        assert_eq!(s.iter().sum::<usize>(), 1000);
        assert!(s.iter().all(|&v| v >= 1));
    }
}
