//! Character-level normalization shared by the lexicon loader and the tokenizer.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Lowercases and NFC-normalizes `s`. With `fold_accents`, diacritics are
/// stripped as well (`"frío"` becomes `"frio"`, `"ñ"` becomes `"n"`).
pub fn normalize(s: &str, fold_accents: bool) -> String {
    let lower = s.to_lowercase();
    if fold_accents {
        lower
            .nfd()
            .filter(|c| !is_combining_mark(*c))
            .nfc()
            .collect()
    } else {
        lower.nfc().collect()
    }
}

/// Strips every leading and trailing character that is not alphanumeric.
pub fn trim_edges(s: &str) -> &str {
    s.trim_matches(|c: char| !c.is_alphanumeric())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_and_composes() {
        // "i" followed by a combining acute accent composes to "í".
        assert_eq!(normalize("FRI\u{301}O", false), "frío");
        assert_eq!(normalize("Año", false), "año");
    }

    #[test]
    fn folding_strips_diacritics() {
        assert_eq!(normalize("Frío", true), "frio");
        assert_eq!(normalize("añorar", true), "anorar");
        assert_eq!(normalize("pingüino", true), "pinguino");
    }

    #[test]
    fn trims_only_edges() {
        assert_eq!(trim_edges("¡¡piscina!!"), "piscina");
        assert_eq!(trim_edges("alusa-foil,"), "alusa-foil");
        assert_eq!(trim_edges("👍👍"), "");
    }
}
