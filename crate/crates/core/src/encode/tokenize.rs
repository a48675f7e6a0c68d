//! Text → subword ids.
//!
//! Pre-tokenization splits on whitespace, makes every punctuation character
//! a standalone word and drops underscores. Alphanumeric runs are further cut
//! at camel-case and letter/digit boundaries; those cuts stay inside one word,
//! so the pieces after the first are matched as `##` continuations. Everything
//! is lowercased before lookup.

use super::vocab::{Special, Vocabulary, CONTINUATION};

/// Longest candidate substring tried during greedy matching, in characters.
pub const MAX_SUBWORD_CHARS: usize = 100;

#[derive(Clone, Copy, PartialEq)]
enum Class {
    Lower,
    Upper,
    Digit,
    Other,
}

fn class(c: char) -> Class {
    if c.is_numeric() {
        Class::Digit
    } else if c.is_uppercase() {
        Class::Upper
    } else if c.is_lowercase() {
        Class::Lower
    } else {
        Class::Other
    }
}

/// Cut an alphanumeric run at case and digit transitions:
/// `HTTPServerError2` → `HTTP`, `Server`, `Error`, `2`.
fn camel_segments(run: &[char]) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..run.len() {
        let (prev, cur) = (class(run[i - 1]), class(run[i]));
        let next = run.get(i + 1).map(|c| class(*c));
        let cut = match (prev, cur) {
            (Class::Lower, Class::Upper) => true,
            (Class::Upper, Class::Upper) => next == Some(Class::Lower),
            (Class::Digit, Class::Digit) => false,
            (Class::Digit, _) | (_, Class::Digit) => true,
            _ => false,
        };
        if cut {
            out.push(run[start..i].iter().collect::<String>().to_lowercase());
            start = i;
        }
    }
    if start < run.len() {
        out.push(run[start..].iter().collect::<String>().to_lowercase());
    }
    out
}

/// Words of `text`, each as its lowercased segments.
pub fn pre_tokenize(text: &str) -> Vec<Vec<String>> {
    let mut words = Vec::new();
    let mut run: Vec<char> = Vec::new();
    let flush = |run: &mut Vec<char>, words: &mut Vec<Vec<String>>| {
        if !run.is_empty() {
            words.push(camel_segments(run));
            run.clear();
        }
    };
    for c in text.chars() {
        if c.is_alphanumeric() {
            run.push(c);
        } else {
            flush(&mut run, &mut words);
            if c.is_whitespace() || c.is_control() || c == '_' || c == '\u{FFFD}' {
                continue;
            }
            words.push(vec![c.to_lowercase().collect()]);
        }
    }
    flush(&mut run, &mut words);
    words
}

/// Greedy longest-match-first over one word's segments. A word with any
/// undecomposable segment becomes a single `[UNK]`.
fn wordpiece_word(segments: &[String], vocab: &Vocabulary, out: &mut Vec<u32>) {
    let mark = out.len();
    let mut candidate = String::new();
    for (si, seg) in segments.iter().enumerate() {
        let chars: Vec<char> = seg.chars().collect();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len().min(start + MAX_SUBWORD_CHARS);
            let mut found = None;
            while end > start {
                candidate.clear();
                if si > 0 || start > 0 {
                    candidate.push_str(CONTINUATION);
                }
                candidate.extend(&chars[start..end]);
                if let Some(id) = vocab.id(&candidate) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    out.push(id);
                    start = end;
                }
                None => {
                    out.truncate(mark);
                    out.push(vocab.special(Special::Unk));
                    return;
                }
            }
        }
    }
}

impl Vocabulary {
    /// Token ids for free text.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for word in pre_tokenize(text) {
            wordpiece_word(&word, self, &mut out);
        }
        out
    }
}

/// Subword strings for free text.
pub fn wordpiece_tokenize(text: &str, vocab: &Vocabulary) -> Vec<String> {
    vocab
        .tokenize(text)
        .into_iter()
        .map(|id| vocab.token(id).unwrap_or("[UNK]").to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(words: &[&str]) -> Vocabulary {
        Vocabulary::from_tokens(words.iter().copied()).unwrap()
    }

    #[test]
    fn camel_case_continuation() {
        let v = vocab(&["manager", "##servlet", "servlet"]);
        assert_eq!(
            wordpiece_tokenize("ManagerServlet", &v),
            ["manager", "##servlet"]
        );
        assert_eq!(
            wordpiece_tokenize("managerservlet", &v),
            ["manager", "##servlet"]
        );
    }

    #[test]
    fn exact_match_and_unknown() {
        let v = vocab(&["manager", "a"]);
        assert_eq!(wordpiece_tokenize("manager", &v), ["manager"]);
        assert_eq!(wordpiece_tokenize("zzz", &v), ["[UNK]"]);
        // partial decomposition still collapses to one [UNK]
        assert_eq!(wordpiece_tokenize("managerzz", &v), ["[UNK]"]);
    }

    #[test]
    fn greedy_prefers_longest() {
        let v = vocab(&["un", "una", "##ffable", "##affable", "##ble"]);
        assert_eq!(wordpiece_tokenize("unaffable", &v), ["una", "##ffable"]);
    }

    #[test]
    fn punctuation_and_snake_case() {
        assert_eq!(
            pre_tokenize("foo_bar(x);"),
            vec![
                vec!["foo".to_string()],
                vec!["bar".into()],
                vec!["(".into()],
                vec!["x".into()],
                vec![")".into()],
                vec![";".into()],
            ]
        );
        assert_eq!(
            pre_tokenize("HTTPServerError2 getX"),
            vec![
                vec![
                    "http".to_string(),
                    "server".into(),
                    "error".into(),
                    "2".into()
                ],
                vec!["get".into(), "x".into()],
            ]
        );
        assert_eq!(
            pre_tokenize("v128"),
            vec![vec!["v".to_string(), "128".into()]]
        );
    }

    #[test]
    fn long_words_are_bounded() {
        let long = "a".repeat(250);
        let v = vocab(&["a", "##a"]);
        assert_eq!(v.tokenize(&long).len(), 250);
        let v = vocab(&[&"a".repeat(100), &format!("##{}", "a".repeat(100)), "##a"]);
        let ids = v.tokenize(&long);
        assert_eq!(ids.len(), 2 + 50);
    }

    #[test]
    fn prefix_stable() {
        let v = Vocabulary::from_texts(["crash on save while closing the editor"], 1);
        let parts: Vec<u32> = ["crash", "on", "save"]
            .iter()
            .flat_map(|w| v.tokenize(w))
            .collect();
        assert_eq!(parts, v.tokenize("crash on save"));
    }
}
