use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::tokenize::pre_tokenize;
use super::EncodeError;

/// Reserved tokens every vocabulary carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Special {
    Cls,
    Sep,
    Pad,
    Unk,
    Query,
    Document,
    Added,
    Removed,
    Context,
}

impl Special {
    pub const ALL: [Special; 9] = [
        Special::Pad,
        Special::Unk,
        Special::Cls,
        Special::Sep,
        Special::Query,
        Special::Document,
        Special::Added,
        Special::Removed,
        Special::Context,
    ];

    pub fn surface(self) -> &'static str {
        match self {
            Special::Cls => "[CLS]",
            Special::Sep => "[SEP]",
            Special::Pad => "[PAD]",
            Special::Unk => "[UNK]",
            Special::Query => "[Q]",
            Special::Document => "[D]",
            Special::Added => "[A]",
            Special::Removed => "[R]",
            Special::Context => "[C]",
        }
    }

    fn slot(self) -> usize {
        Special::ALL.iter().position(|s| *s == self).unwrap()
    }
}

pub const CONTINUATION: &str = "##";

/// Token ↔ id mapping. Ids are line numbers of the vocabulary file; special
/// tokens missing from the file are appended after the last line.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    specials: [u32; 9],
    synthetic: Vec<Special>,
}

impl Vocabulary {
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, EncodeError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            ids: HashMap::new(),
            specials: [0; 9],
            synthetic: Vec::new(),
        };
        for tok in tokens {
            let tok = tok.into();
            // Blank lines keep their id slot but are never matched.
            if !tok.is_empty() && vocab.ids.contains_key(&tok) {
                return Err(EncodeError::DuplicateToken(tok));
            }
            let id = vocab.tokens.len() as u32;
            if !tok.is_empty() {
                vocab.ids.insert(tok.clone(), id);
            }
            vocab.tokens.push(tok);
        }
        for special in Special::ALL {
            let id = match vocab.ids.get(special.surface()) {
                Some(&id) => id,
                None => {
                    let id = vocab.tokens.len() as u32;
                    vocab.tokens.push(special.surface().to_string());
                    vocab.ids.insert(special.surface().to_string(), id);
                    vocab.synthetic.push(special);
                    id
                }
            };
            vocab.specials[special.slot()] = id;
        }
        Ok(vocab)
    }

    /// One token per line, UTF-8.
    pub fn load(path: &Path) -> Result<Self, EncodeError> {
        let text = std::fs::read_to_string(path).map_err(|e| EncodeError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, EncodeError> {
        Self::from_tokens(text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l)))
    }

    /// Whole-word vocabulary from raw texts: every pre-tokenized word seen at
    /// least `min_count` times, with camel-case continuation segments stored
    /// under the `##` prefix. Specials come first.
    pub fn from_texts<'a, I>(texts: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            for word in pre_tokenize(text) {
                for (i, seg) in word.into_iter().enumerate() {
                    let key = if i == 0 {
                        seg
                    } else {
                        format!("{CONTINUATION}{seg}")
                    };
                    *counts.entry(key).or_default() += 1;
                }
            }
        }
        let mut words: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_count.max(1) && !w.starts_with('['))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = Special::ALL
            .iter()
            .map(|s| s.surface().to_string())
            .chain(words.into_iter().map(|(w, _)| w));
        Self::from_tokens(tokens).expect("unique by construction")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn special(&self, s: Special) -> u32 {
        self.specials[s.slot()]
    }

    /// Specials that were missing from the source and got appended ids.
    pub fn synthetic_specials(&self) -> &[Special] {
        &self.synthetic
    }

    /// Serialized form, one token per line; reloading reproduces every id.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn appends_missing_specials() {
        let v = Vocabulary::parse("[PAD]\nhello\n##lo\n[CLS]\n").unwrap();
        assert_eq!(v.special(Special::Pad), 0);
        assert_eq!(v.special(Special::Cls), 3);
        assert_eq!(v.id("hello"), Some(1));
        assert_eq!(v.synthetic_specials().len(), 7);
        let ids: std::collections::HashSet<_> =
            Special::ALL.iter().map(|s| v.special(*s)).collect();
        assert_eq!(ids.len(), 9);
        // round trip keeps ids
        let again = Vocabulary::parse(&v.to_text()).unwrap();
        assert_eq!(again.id("[Q]"), v.id("[Q]"));
        assert!(again.synthetic_specials().is_empty());
        assert_eq!(again.content_hash(), v.content_hash());
    }

    #[test]
    fn rejects_duplicates() {
        assert!(matches!(
            Vocabulary::parse("a\nb\na\n"),
            Err(EncodeError::DuplicateToken(t)) if t == "a"
        ));
    }

    #[test]
    fn builds_from_texts() {
        let v = Vocabulary::from_texts(["ManagerServlet crash", "crash again"], 1);
        assert!(v.id("manager").is_some());
        assert!(v.id("##servlet").is_some());
        assert_eq!(v.id("crash"), Some(9)); // most frequent word right after specials
        let v2 = Vocabulary::from_texts(["ManagerServlet crash", "crash again"], 2);
        assert!(v2.id("manager").is_none());
    }
}
