use crate::data_model::Message;

use super::FeatureMap;

/// (word, polarity in [-1, 1], subjectivity in [0, 1]).
const LEXICON: &[(&str, f64, f64)] = &[
    ("amazing", 0.6, 0.9),
    ("awesome", 1.0, 1.0),
    ("bad", -0.7, 0.67),
    ("beautiful", 0.85, 1.0),
    ("best", 1.0, 0.3),
    ("boring", -1.0, 1.0),
    ("buy", 0.0, 0.1),
    ("cash", 0.0, 0.2),
    ("cheap", 0.4, 0.7),
    ("click", 0.0, 0.2),
    ("cool", 0.35, 0.65),
    ("crap", -0.8, 0.8),
    ("deal", 0.0, 0.1),
    ("dope", 0.5, 0.7),
    ("easy", 0.43, 0.83),
    ("epic", 0.1, 0.2),
    ("fake", -0.5, 1.0),
    ("fantastic", 0.4, 0.9),
    ("fire", 0.3, 0.6),
    ("free", 0.4, 0.8),
    ("fresh", 0.3, 0.5),
    ("fun", 0.3, 0.2),
    ("good", 0.7, 0.6),
    ("great", 0.8, 0.75),
    ("guaranteed", 0.0, 0.1),
    ("happy", 0.8, 1.0),
    ("hate", -0.8, 0.9),
    ("horrible", -1.0, 1.0),
    ("hot", 0.25, 0.85),
    ("incredible", 0.9, 0.9),
    ("instant", 0.0, 0.0),
    ("lame", -0.5, 0.75),
    ("love", 0.5, 0.6),
    ("lovely", 0.5, 0.75),
    ("lucky", 0.33, 1.0),
    ("money", 0.0, 0.0),
    ("music", 0.0, 0.0),
    ("new", 0.14, 0.45),
    ("nice", 0.6, 1.0),
    ("now", 0.0, 0.0),
    ("offer", 0.0, 0.0),
    ("perfect", 1.0, 1.0),
    ("poor", -0.4, 0.6),
    ("prize", 0.0, 0.0),
    ("sad", -0.5, 1.0),
    ("scam", -0.6, 0.9),
    ("sick", -0.71, 0.86),
    ("song", 0.0, 0.0),
    ("stupid", -0.8, 1.0),
    ("sweet", 0.35, 0.65),
    ("terrible", -1.0, 1.0),
    ("track", 0.0, 0.0),
    ("ugly", -0.7, 1.0),
    ("vibe", 0.0, 0.0),
    ("win", 0.8, 0.4),
    ("winner", 0.5, 0.5),
    ("wonderful", 1.0, 1.0),
    ("worst", -1.0, 1.0),
    ("wow", 0.1, 1.0),
];

fn lookup(word: &str) -> Option<(f64, f64)> {
    LEXICON
        .binary_search_by(|(w, _, _)| (*w).cmp(word))
        .ok()
        .map(|i| (LEXICON[i].1, LEXICON[i].2))
}

/// Mean polarity and subjectivity over lexicon hits; (0, 0) without hits.
pub fn sentiment(text: &str) -> (f64, f64) {
    let mut hits = 0usize;
    let (mut pol, mut subj) = (0.0, 0.0);
    for word in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
    {
        if let Some((p, s)) = lookup(&word.to_lowercase()) {
            hits += 1;
            pol += p;
            subj += s;
        }
    }
    if hits == 0 {
        (0.0, 0.0)
    } else {
        (pol / hits as f64, subj / hits as f64)
    }
}

pub fn extract_content_features(m: &Message) -> FeatureMap {
    let (polarity, subjectivity) = sentiment(&m.text);
    FeatureMap::from([
        ("NumChars", m.text.chars().count() as f64),
        ("NumHashtags", m.effective_hashtags().len() as f64),
        ("NumLinks", m.effective_links().len() as f64),
        ("NumMentions", m.effective_mentions().len() as f64),
        ("IsRetweet", if m.is_retweet { 1.0 } else { 0.0 }),
        ("Polarity", polarity),
        ("Subjectivity", subjectivity),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicon_is_sorted() {
        assert!(LEXICON.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(LEXICON
            .iter()
            .all(|(_, p, s)| (-1.0..=1.0).contains(p) && (0.0..=1.0).contains(s)));
    }

    #[test]
    fn empty_text_yields_zeros() {
        let f = extract_content_features(&Message::new("m", "u", ""));
        assert!(f.values().all(|&v| v == 0.0));
    }

    #[test]
    fn counts_entities_in_text() {
        let f = extract_content_features(&Message::new("m", "u", "check #win #free http://x.co @bob"));
        assert_eq!(f["NumHashtags"], 2.0);
        assert_eq!(f["NumLinks"], 1.0);
        assert_eq!(f["NumMentions"], 1.0);
        assert_eq!(f["NumChars"], 33.0);
    }

    #[test]
    fn num_chars_counts_scalar_values() {
        let f = extract_content_features(&Message::new("m", "u", "héllo 🎵"));
        assert_eq!(f["NumChars"], 7.0);
    }

    #[test]
    fn neutral_words_have_zero_polarity() {
        assert_eq!(sentiment("music track song").0, 0.0);
        assert_eq!(sentiment("nothing here matches").0, 0.0);
        let (p, s) = sentiment("GOOD bad");
        assert!((p - 0.0).abs() < 1e-12);
        assert!((s - (0.6 + 0.67) / 2.0).abs() < 1e-12);
    }
}
