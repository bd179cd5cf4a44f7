//! Text utilities shared by the metrics: answer normalization, bag-of-words
//! token sets and a rule-based sentence splitter.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

/// Lowercase, drop punctuation, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        let cleaned: String = word
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        if cleaned.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&cleaned);
    }
    out
}

/// Token set used by the Jaccard similarity: Unicode-whitespace split,
/// lowercased, punctuation removed, empty tokens dropped.
pub fn word_set(text: &str) -> BTreeSet<String> {
    normalize_answer(text)
        .split(' ')
        .filter(|w| !w.is_empty())
        .map(String::from)
        .collect()
}

/// `|A ∩ B| / |A ∪ B|`; two empty sets are identical.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Words that end in a period without ending a sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e", "cf", "no",
    "fig", "inc", "ltd", "co", "corp", "mt", "jan", "feb", "mar", "apr", "jun", "jul", "aug",
    "sep", "sept", "oct", "nov", "dec", "u.s", "u.k", "approx", "gen", "gov", "rev", "col",
];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '…')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '”' | '’' | '»')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '“' | '‘' | '«')
}

/// Splits text into sentences.
///
/// A boundary is a run of `.`, `!`, `?` or `…`, optionally followed by closing
/// quotes or brackets, then whitespace, then an uppercase letter (optionally
/// behind an opening quote or bracket). A single `.` after a known
/// abbreviation or a one-letter initial is not a boundary. Sentences are
/// trimmed slices of the input, so joining them with whitespace reproduces
/// the text up to whitespace.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < chars.len() && is_terminal(chars[i].1) {
            i += 1;
        }
        while i < chars.len() && is_closer(chars[i].1) {
            i += 1;
        }
        let end = chars.get(i).map_or(text.len(), |(b, _)| *b);
        let mut j = i;
        while j < chars.len() && chars[j].1.is_whitespace() {
            j += 1;
        }
        if j == i || j >= chars.len() {
            continue;
        }
        let mut k = j;
        while k < chars.len() && is_opener(chars[k].1) {
            k += 1;
        }
        if k >= chars.len() || !chars[k].1.is_uppercase() {
            continue;
        }
        let single_period = i - run_start == 1 && chars[run_start].1 == '.';
        if single_period && is_abbreviation(&text[start..chars[run_start].0]) {
            continue;
        }
        push_trimmed(&mut sentences, &text[start..end]);
        start = chars[j].0;
    }
    push_trimmed(&mut sentences, &text[start..]);
    sentences
}

fn is_abbreviation(before_period: &str) -> bool {
    let word = before_period
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(is_opener);
    let lower: String = word.chars().flat_map(char::to_lowercase).collect();
    let mut letters = word.chars();
    let initial = matches!((letters.next(), letters.next()), (Some(c), None) if c.is_alphabetic());
    initial || ABBREVIATIONS.contains(&lower.as_str())
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(String::from(s));
    }
}

/// 64-bit FNV-1a, used for content-addressed stub behaviour.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
