//! Corpus cleaning and explicit-gender neutralization of raw documents.
//!
//! Cleaning removes e-mail addresses and URLs, strips the periods of
//! abbreviations and dotted acronyms, collapses repeated `?`, `!` and `.`,
//! normalizes whitespace and truncates at a sentence boundary. Neutralization
//! replaces first names and gendered words token by token; it is idempotent
//! whenever no substitution value is itself a key.

mod rules;

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use rules::NeutralizeRules;

pub const DEFAULT_MAX_TOKENS: usize = 512;

static EMAIL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(?:\.[A-Za-z0-9\-]+)*\.[A-Za-z]{2,}").unwrap()
});
static URL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)\b(?:https?://|ftp://|www\.)[^\s<>"]*[^\s<>".,;:!?)\]'}]"#).unwrap()
});
static DOTTED_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([A-Za-z]+)\.").unwrap());
static REPEATED_PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\?{2,}|!{2,}|\.{2,}").unwrap());
static WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[\p{L}\p{N}]+(?:['’][\p{L}\p{N}]+)*").unwrap());

/// What cleaning and neutralization changed in one document.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub removed_urls: usize,
    pub removed_emails: usize,
    pub truncated: bool,
    pub replaced_names: usize,
    pub substituted_tokens: usize,
}

impl CleanReport {
    pub fn merge(&self, other: &CleanReport) -> CleanReport {
        CleanReport {
            removed_urls: self.removed_urls + other.removed_urls,
            removed_emails: self.removed_emails + other.removed_emails,
            truncated: self.truncated || other.truncated,
            replaced_names: self.replaced_names + other.replaced_names,
            substituted_tokens: self.substituted_tokens + other.substituted_tokens,
        }
    }
}

/// [`clean_text_with`] under the default abbreviation list and acronym
/// pattern.
pub fn clean_text(text: &str, max_tokens: usize) -> (String, CleanReport) {
    clean_text_with(text, max_tokens, &NeutralizeRules::default())
}

/// Cleans one document. Tokens are whitespace-separated; the result has at
/// most `max_tokens` of them and, when it had to be cut, ends at the last
/// sentence end that fits. A document whose first sentence alone exceeds the
/// limit is cut hard at `max_tokens`.
pub fn clean_text_with(text: &str, max_tokens: usize, rules: &NeutralizeRules) -> (String, CleanReport) {
    let max_tokens = max_tokens.max(1);
    let mut report = CleanReport {
        removed_emails: EMAIL.find_iter(text).count(),
        ..CleanReport::default()
    };
    let text = EMAIL.replace_all(text, "");
    report.removed_urls = URL.find_iter(&text).count();
    let text = URL.replace_all(&text, "");

    let text = DOTTED_WORD.replace_all(&text, |c: &regex::Captures<'_>| {
        let word = &c[1];
        if rules.abbreviations.contains(&word.to_lowercase()) {
            word.to_string()
        } else {
            c[0].to_string()
        }
    });
    let text = match Regex::new(&rules.acronym_pattern) {
        Ok(acronym) => acronym
            .replace_all(&text, |c: &regex::Captures<'_>| c[0].replace('.', ""))
            .into_owned(),
        Err(_) => text.into_owned(),
    };
    let text = REPEATED_PUNCT.replace_all(&text, |c: &regex::Captures<'_>| c[0][..1].to_string());

    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() <= max_tokens {
        return (tokens.join(" "), report);
    }
    report.truncated = true;
    let keep = tokens[..max_tokens]
        .iter()
        .rposition(|t| ends_sentence(t))
        .map_or(max_tokens, |i| i + 1);
    (tokens[..keep].join(" "), report)
}

fn ends_sentence(token: &str) -> bool {
    let core = token.trim_end_matches(['"', '\'', ')', ']', '”', '’']);
    core.ends_with(['.', '!', '?'])
}

/// Applies `pattern`'s capitalization to `value`: all-caps words (two or
/// more letters) stay all-caps and capitalized words stay capitalized.
fn match_case(pattern: &str, value: &str) -> String {
    let letters: Vec<char> = pattern.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase()) {
        return value.to_uppercase();
    }
    match (pattern.chars().next(), value.chars().next()) {
        (Some(p), Some(v)) if p.is_uppercase() => {
            v.to_uppercase().chain(value.chars().skip(1)).collect()
        }
        _ => value.to_string(),
    }
}

/// True when the next non-space character after `end` is clause punctuation
/// or there is none.
fn closes_clause(text: &str, end: usize) -> bool {
    match text[end..].chars().find(|c| !c.is_whitespace()) {
        None => true,
        Some(c) => matches!(c, '.' | ',' | ';' | ':' | '!' | '?'),
    }
}

/// Replaces first names and dictionary words. Words are maximal runs of
/// letters and digits, optionally joined by apostrophes; only the part
/// before the first apostrophe is looked up, so `Mary's` becomes `Sam's`.
/// A word deleted by the rules takes the following space with it.
pub fn neutralize(text: &str, rules: &NeutralizeRules) -> (String, CleanReport) {
    let mut report = CleanReport::default();
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;

    for m in WORD.find_iter(text) {
        if m.start() < cursor {
            continue;
        }
        out.push_str(&text[cursor..m.start()]);
        cursor = m.end();
        let word = m.as_str();
        let split = word.find(['\'', '’']).unwrap_or(word.len());
        let (base, suffix) = word.split_at(split);
        let lower = base.to_lowercase();

        if rules.first_names.contains(&lower) {
            report.replaced_names += 1;
            out.push_str(&rules.replacement_name);
            out.push_str(suffix);
            continue;
        }
        let value = if suffix.is_empty() && closes_clause(text, m.end()) {
            rules
                .final_substitutions
                .get(&lower)
                .or_else(|| rules.substitutions.get(&lower))
        } else {
            rules.substitutions.get(&lower)
        };
        let Some(value) = value else {
            out.push_str(word);
            continue;
        };
        report.substituted_tokens += 1;
        if !value.is_empty() {
            out.push_str(&match_case(base, value));
            out.push_str(suffix);
            continue;
        }
        // Deletion: drop an abbreviation period that is followed by more
        // words, then the whitespace after the word.
        let rest = &text[cursor..];
        if rest.starts_with('.')
            && rest[1..].starts_with(char::is_whitespace)
            && rest[1..].trim_start().starts_with(|c: char| c.is_alphanumeric())
        {
            cursor += 1;
        }
        let ws = text[cursor..].len() - text[cursor..].trim_start().len();
        if ws > 0 && cursor + ws < text.len() {
            cursor += ws;
        } else {
            let trimmed = out.trim_end().len();
            out.truncate(trimmed);
            cursor += ws;
        }
    }
    out.push_str(&text[cursor..]);
    (out, report)
}

/// Cleaning followed by neutralization, as applied to a corpus.
pub fn neutralize_document(
    text: &str,
    max_tokens: usize,
    rules: &NeutralizeRules,
) -> (String, CleanReport) {
    let (cleaned, a) = clean_text_with(text, max_tokens, rules);
    let (neutral, b) = neutralize(&cleaned, rules);
    (neutral, a.merge(&b))
}
