//! Built-in English word lists used by the rule annotator.
//!
//! Bump [`LEXICON_VERSION`] whenever a list changes; it is recorded in
//! annotation output so results stay comparable.

pub const LEXICON_VERSION: &str = "en-1";

pub const ARTICLES: &[&str] = &["the", "a", "an"];

pub const PREPOSITIONS: &[&str] = &[
    "about", "above", "across", "after", "against", "along", "amid", "among", "around", "as",
    "at", "before", "behind", "below", "beneath", "beside", "besides", "between", "beyond", "by",
    "despite", "down", "during", "except", "for", "from", "in", "inside", "into", "like", "near",
    "of", "off", "on", "onto", "out", "outside", "over", "past", "per", "since", "through",
    "throughout", "till", "to", "toward", "towards", "under", "underneath", "unlike", "until",
    "up", "upon", "via", "with", "within", "without",
];

/// Stop words that are neither articles nor prepositions.
pub const STOPWORDS: &[&str] = &[
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours",
    "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself",
    "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "what", "which",
    "who", "whom", "this", "that", "these", "those", "am", "is", "are", "was", "were", "be",
    "been", "being", "have", "has", "had", "having", "do", "does", "did", "doing", "and", "but",
    "if", "or", "because", "while", "so", "than", "too", "very", "can", "will", "just", "should",
    "now", "not", "no", "nor", "only", "own", "same", "such", "both", "each", "few", "more",
    "most", "other", "some", "any", "all", "there", "here", "when", "where", "why", "how",
    "again", "further", "then", "once",
];

/// Tokens before a period that do not end a sentence ("Mr. Smith").
pub const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "vs", "mt", "gen", "gov", "sen", "rep",
    "col", "lt", "sgt", "capt", "no", "fig", "approx", "etc",
];

pub fn is_article(word: &str) -> bool {
    contains_ci(ARTICLES, word)
}

pub fn is_preposition(word: &str) -> bool {
    contains_ci(PREPOSITIONS, word)
}

pub fn is_stopword(word: &str) -> bool {
    contains_ci(STOPWORDS, word)
}

pub fn is_abbreviation(word: &str) -> bool {
    contains_ci(ABBREVIATIONS, word)
}

fn contains_ci(list: &[&str], word: &str) -> bool {
    list.iter().any(|w| w.eq_ignore_ascii_case(word))
}
