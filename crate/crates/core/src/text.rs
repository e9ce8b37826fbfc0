//! Small text utilities: sentence segmentation and normalization.
//!
//! Segmentation rule: a sentence ends at a run of `.`, `!` or `?` that is
//! followed by whitespace or the end of the text. Segments without any
//! alphanumeric character are dropped.

/// Split `text` into sentences, each trimmed and keeping its terminator.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (_, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i;
            while j + 1 < chars.len() && matches!(chars[j + 1].1, '.' | '!' | '?') {
                j += 1;
            }
            let at_boundary = j + 1 == chars.len() || chars[j + 1].1.is_whitespace();
            if at_boundary {
                let end = chars[j].0 + chars[j].1.len_utf8();
                push_segment(&mut out, &text[start..end]);
                start = end;
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    push_segment(&mut out, &text[start..]);
    out
}

fn push_segment<'a>(out: &mut Vec<&'a str>, seg: &'a str) {
    let seg = seg.trim();
    if seg.chars().any(char::is_alphanumeric) {
        out.push(seg);
    }
}

pub fn count_sentences(text: &str) -> usize {
    split_sentences(text).len()
}

/// Keep at most `max` sentences of `text`.
pub fn truncate_sentences(text: &str, max: usize) -> String {
    split_sentences(text)
        .into_iter()
        .take(max)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Lowercase and collapse whitespace. Used before embedding topic strings.
pub fn normalize_topic(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Lowercased alphanumeric words (apostrophes kept inside words).
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|w| w.trim_matches('\'').to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segmentation() {
        assert_eq!(count_sentences("One. Two! Three?"), 3);
        assert_eq!(count_sentences("No terminator at all"), 1);
        assert_eq!(count_sentences("Costs rose 3.5 percent. Then fell."), 2);
        assert_eq!(count_sentences("Wait... what?!"), 2);
        assert_eq!(count_sentences("   "), 0);
        assert_eq!(count_sentences("..."), 0);
    }

    #[test]
    fn truncation_keeps_prefix() {
        assert_eq!(truncate_sentences("A b. C d. E f.", 2), "A b. C d.");
    }

    #[test]
    fn topic_normalization() {
        assert_eq!(normalize_topic("  Nuclear\tWeapons "), "nuclear weapons");
    }

    #[test]
    fn word_split() {
        assert_eq!(words("GMOs are bad, aren't they?"), vec!["gmos", "are", "bad", "aren't", "they"]);
    }
}
