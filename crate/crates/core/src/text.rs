//! Text normalization shared by the embedding key rule and lexical matching.

use std::collections::BTreeSet;

use unicode_normalization::UnicodeNormalization;

/// Normalizes a string into an embedding-store key: Unicode NFC, runs of
/// whitespace collapsed to one space, leading/trailing whitespace removed.
/// Case is preserved.
pub fn normalize_key(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    let mut out = String::with_capacity(nfc.len());
    for word in nfc.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Tokens used for lexical overlap: NFC, lowercase, punctuation removed,
/// split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let folded: String = text
        .nfc()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    folded.split_whitespace().map(str::to_owned).collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_collapses_whitespace_and_keeps_case() {
        assert_eq!(normalize_key("  Am   Abend\t war  "), "Am Abend war");
        assert_eq!(normalize_key("Abend"), "Abend");
    }

    #[test]
    fn key_composes_umlauts() {
        // "u" + combining diaeresis becomes the precomposed "ü"
        let decomposed = "Tu\u{0308}r";
        assert_eq!(normalize_key(decomposed), "Tür");
    }

    #[test]
    fn tokens_fold_case_and_drop_punctuation() {
        assert_eq!(
            tokenize("Die Behandlung, (medizinisch)!"),
            vec!["die", "behandlung", "medizinisch"]
        );
        assert_eq!(tokenize("Übung ÄRGER"), vec!["übung", "ärger"]);
    }

    #[test]
    fn tokens_are_whole_words() {
        let set = token_set("Bankett");
        assert!(!set.contains("bank"));
    }
}
