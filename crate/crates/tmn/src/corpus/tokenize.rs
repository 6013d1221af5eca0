//! Whitespace- and punctuation-delimited tokenization.

/// Split text into tokens: maximal runs of alphanumeric characters and
/// apostrophes, with edge apostrophes trimmed, optionally lowercased.
/// Contractions survive ("i'll"), punctuation does not.
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    let source = if lowercase { text.to_lowercase() } else { text.to_owned() };
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in source.chars() {
        if ch.is_alphanumeric() || ch == '\'' {
            current.push(ch);
        } else {
            flush(&mut tokens, &mut current);
        }
    }
    flush(&mut tokens, &mut current);
    tokens
}

fn flush(tokens: &mut Vec<String>, current: &mut String) {
    if !current.is_empty() {
        let trimmed = current.trim_matches('\'');
        if !trimmed.is_empty() {
            tokens.push(trimmed.to_owned());
        }
        current.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_contractions_and_drops_punctuation() {
        assert_eq!(tokenize("I'll do anything!", true), vec!["i'll", "do", "anything"]);
    }

    #[test]
    fn empty_text_yields_no_tokens() {
        assert_eq!(tokenize("", true), Vec::<String>::new());
        assert_eq!(tokenize("  ... !!", true), Vec::<String>::new());
    }

    #[test]
    fn lowercases_when_asked() {
        assert_eq!(tokenize("Steelers win", true), vec!["steelers", "win"]);
        assert_eq!(tokenize("Steelers win", false), vec!["Steelers", "win"]);
    }

    #[test]
    fn trims_edge_apostrophes_but_keeps_inner_ones() {
        assert_eq!(tokenize("'tis rock'n'roll''", true), vec!["tis", "rock'n'roll"]);
    }

    #[test]
    fn splits_on_punctuation_and_keeps_digits() {
        assert_eq!(
            tokenize("win,lose:draw 3rd time", true),
            vec!["win", "lose", "draw", "3rd", "time"]
        );
    }

    #[test]
    fn handles_non_ascii_letters() {
        assert_eq!(tokenize("naïve café!", true), vec!["naïve", "café"]);
    }
}
