//! Raw-text normalization steps applied before tokenization.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Emoticons and the words they are replaced with. Matching is
/// longest-first, so `:-)` wins over `:)` at the same position.
pub const EMOTICONS: &[(&str, &str)] = &[
    (":-)", "smile"),
    (":)", "smile"),
    ("=)", "smile"),
    (":-(", "sad"),
    (":(", "sad"),
    ("=(", "sad"),
    (":'(", "cry"),
    (":')", "joy"),
    (":-D", "laugh"),
    (":D", "laugh"),
    ("XD", "laugh"),
    (";-)", "wink"),
    (";)", "wink"),
    (":-/", "skeptical"),
    (":/", "skeptical"),
    (":\\", "skeptical"),
    ("<3", "heart"),
    ("</3", "heartbreak"),
    (":-P", "tongue"),
    (":P", "tongue"),
    (":p", "tongue"),
    (":-O", "surprise"),
    (":O", "surprise"),
    (":o", "surprise"),
    (":-*", "kiss"),
    (":*", "kiss"),
    (":|", "neutral"),
    ("-_-", "annoyed"),
    ("^_^", "happy"),
    (">:(", "angry"),
    ("B-)", "cool"),
];

/// Lowercases, transliterates accented letters to ASCII, drops everything
/// that is not an ASCII letter or whitespace, and collapses whitespace.
pub fn canonicalize(text: &str) -> String {
    let mut kept = String::with_capacity(text.len());
    for c in text.nfd().filter(|c| !is_combining_mark(*c)) {
        if c.is_ascii_alphabetic() {
            kept.push(c.to_ascii_lowercase());
        } else if c.is_whitespace() {
            kept.push(' ');
        }
    }
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn url_prefix_len(rest: &str) -> Option<usize> {
    const PREFIXES: [&str; 3] = ["https://", "http://", "www."];
    PREFIXES
        .iter()
        .find(|p| {
            rest.len() >= p.len()
                && rest.is_char_boundary(p.len())
                && rest[..p.len()].eq_ignore_ascii_case(p)
        })
        .map(|p| p.len())
}

/// Removes `http://…`, `https://…` and `www.…` runs up to the next
/// whitespace character. A link must start at a word boundary.
pub fn strip_urls(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut prev: Option<char> = None;
    let mut i = 0;
    while i < text.len() {
        let rest = &text[i..];
        let at_boundary = prev.is_none_or(|p| !p.is_alphanumeric());
        if at_boundary && url_prefix_len(rest).is_some() {
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            i += end;
            // the removed link counts as a non-word character
            prev = Some(' ');
            continue;
        }
        let c = rest.chars().next().expect("non-empty remainder");
        out.push(c);
        prev = Some(c);
        i += c.len_utf8();
    }
    out
}

/// Replaces emoticons from [`EMOTICONS`] with their word, scanning left to
/// right and taking the longest table entry at each position.
pub fn replace_emoticons(text: &str) -> String {
    let mut table: Vec<&(&str, &str)> = EMOTICONS.iter().collect();
    table.sort_by_key(|(e, _)| std::cmp::Reverse(e.len()));

    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    'scan: while i < text.len() {
        let rest = &text[i..];
        for (emoticon, word) in &table {
            if rest.starts_with(emoticon) {
                out.push_str(word);
                i += emoticon.len();
                continue 'scan;
            }
        }
        let c = rest.chars().next().expect("non-empty remainder");
        out.push(c);
        i += c.len_utf8();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalize_examples() {
        assert_eq!(canonicalize("Héllo, World! 123"), "hello world");
        assert_eq!(canonicalize(""), "");
        assert_eq!(canonicalize("A.B.C"), "abc");
        assert_eq!(canonicalize("  tabs\tand\n\nnewlines  "), "tabs and newlines");
        assert_eq!(canonicalize("Crème brûlée façade"), "creme brulee facade");
        assert_eq!(canonicalize("日本 data"), "data");
    }

    #[test]
    fn strip_url_examples() {
        assert_eq!(strip_urls("see https://x.co/a now"), "see  now");
        assert_eq!(strip_urls("no links here"), "no links here");
        assert_eq!(strip_urls("www.a.com www.b.com"), " ");
        assert_eq!(strip_urls("HTTP://LOUD.example/x end"), " end");
        assert_eq!(strip_urls("awww. cute"), "awww. cute");
        assert_eq!(strip_urls("(http://x.y)"), "(");
    }

    #[test]
    fn emoticon_examples() {
        assert_eq!(replace_emoticons(":) great"), "smile great");
        assert_eq!(replace_emoticons("plain"), "plain");
        assert_eq!(replace_emoticons(":)) fun"), "smile) fun");
        assert_eq!(replace_emoticons(":-) and :-("), "smile and sad");
        assert_eq!(replace_emoticons("</3 <3"), "heartbreak heart");
        assert_eq!(replace_emoticons(">:( grr"), "angry grr");
    }

    #[test]
    fn emoticon_table_is_large_enough_and_unique() {
        assert!(EMOTICONS.len() >= 20);
        let mut keys: Vec<_> = EMOTICONS.iter().map(|(e, _)| *e).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), EMOTICONS.len());
        for (_, word) in EMOTICONS {
            assert!(word.chars().all(|c| c.is_ascii_lowercase()));
        }
    }
}
