//! Whitespace-token word accounting.
//!
//! Every place that counts words (format constraints, response budgets,
//! disruptor length caps, the mock context cap) goes through these helpers so
//! the accounting is identical everywhere.

/// Counts whitespace-separated tokens.
pub fn count_words(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Keeps at most `n` whitespace-separated tokens, re-joined with single spaces.
pub fn truncate_words(text: &str, n: usize) -> String {
    text.split_whitespace()
        .take(n)
        .collect::<Vec<_>>()
        .join(" ")
}

/// True when `word` appears as a standalone token (punctuation-trimmed,
/// case-insensitive). Guards against substring false positives such as
/// "message" matching "age".
pub fn contains_word(text: &str, word: &str) -> bool {
    let needle = word.to_lowercase();
    text.split_whitespace()
        .map(|tok| tok.trim_matches(|c: char| !c.is_alphanumeric()))
        .any(|tok| tok.to_lowercase() == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_whitespace_tokens() {
        assert_eq!(count_words(""), 0);
        assert_eq!(count_words("one two  three\n four"), 4);
    }

    #[test]
    fn word_match_ignores_punctuation_and_case() {
        assert!(contains_word("reply with your AGE?", "age"));
        assert!(!contains_word("check your messages", "age"));
    }

    #[test]
    fn truncate_keeps_prefix() {
        assert_eq!(truncate_words("a b c d", 2), "a b");
        assert_eq!(truncate_words("a b", 5), "a b");
    }
}
