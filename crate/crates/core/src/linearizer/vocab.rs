//! Self-trained WordPiece-style subword vocabulary.
//!
//! Training lowercases, splits on whitespace and punctuation, seeds the
//! vocabulary with the reserved tokens and every character (both as a word
//! start and as a `##` continuation), then merges the most frequent adjacent
//! pair until the target size is reached. Tokenization is greedy
//! longest-match-first per word.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const MASK: u32 = 4;
pub const RESERVED: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];
pub const CONTINUATION: &str = "##";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 6 {
            return Err(Error::Config(format!("vocabulary needs at least 6 tokens, got {}", tokens.len())));
        }
        for (i, r) in RESERVED.iter().enumerate() {
            if tokens[i] != *r {
                return Err(Error::Config(format!("token {i} must be {r}, found `{}`", tokens[i])));
            }
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Vocab { tokens, ids })
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

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// SHA-256 of the serialized vocabulary, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    /// One token per line; the line number is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocab::from_tokens(text.lines().map(str::to_owned).collect()).map_err(|e| Error::Schema {
            path: path.to_owned(),
            detail: e.to_string(),
        })
    }

    /// Test-only constructor from an explicit token list (reserved tokens are prepended).
    pub fn from_list(list: &[&str]) -> Result<Self> {
        let tokens = RESERVED
            .iter()
            .chain(list.iter())
            .map(|s| (*s).to_owned())
            .collect();
        Vocab::from_tokens(tokens)
    }
}

/// Lowercases and splits into words; each punctuation character is its own word.
pub fn pre_tokenize(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_whitespace() {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
        } else if ch.is_ascii_punctuation() || (!ch.is_alphanumeric() && !ch.is_whitespace()) {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
            words.push(ch.to_string());
        } else {
            cur.push(ch);
        }
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}

fn symbols(word: &str) -> Vec<String> {
    word.chars()
        .enumerate()
        .map(|(i, c)| if i == 0 { c.to_string() } else { format!("{CONTINUATION}{c}") })
        .collect()
}

fn merged(left: &str, right: &str) -> String {
    format!("{left}{}", right.strip_prefix(CONTINUATION).unwrap_or(right))
}

pub fn train_vocab<S: AsRef<str>>(names: &[S], target_size: usize) -> Result<Vocab> {
    if names.is_empty() {
        return Err(Error::Input("cannot train a vocabulary on an empty corpus".into()));
    }
    let mut word_freq: BTreeMap<String, u64> = BTreeMap::new();
    for n in names {
        for w in pre_tokenize(n.as_ref()) {
            *word_freq.entry(w).or_default() += 1;
        }
    }
    let alphabet: BTreeSet<char> = word_freq.keys().flat_map(|w| w.chars()).collect();
    let base = RESERVED.len() + 2 * alphabet.len();
    if target_size < base {
        return Err(Error::Config(format!(
            "target vocabulary size {target_size} is below reserved tokens plus alphabet ({base})"
        )));
    }

    let mut tokens: Vec<String> = RESERVED.iter().map(|s| (*s).to_owned()).collect();
    tokens.extend(alphabet.iter().map(|c| c.to_string()));
    tokens.extend(alphabet.iter().map(|c| format!("{CONTINUATION}{c}")));
    let mut known: BTreeSet<String> = tokens.iter().cloned().collect();

    let mut words: Vec<(Vec<String>, u64)> =
        word_freq.into_iter().map(|(w, f)| (symbols(&w), f)).collect();

    while tokens.len() < target_size {
        let mut pairs: BTreeMap<(&str, &str), u64> = BTreeMap::new();
        for (syms, f) in &words {
            for w in syms.windows(2) {
                *pairs.entry((w[0].as_str(), w[1].as_str())).or_default() += f;
            }
        }
        // highest count; BTreeMap order makes the lexicographically first pair win ties
        let Some(((l, r), _)) = pairs
            .iter()
            .fold(None, |best: Option<(&(&str, &str), &u64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            })
        else {
            break;
        };
        let (l, r) = (l.to_string(), r.to_string());
        let new_tok = merged(&l, &r);
        for (syms, _) in &mut words {
            let mut i = 0;
            while i + 1 < syms.len() {
                if syms[i] == l && syms[i + 1] == r {
                    syms[i] = new_tok.clone();
                    syms.remove(i + 1);
                }
                i += 1;
            }
        }
        if known.insert(new_tok.clone()) {
            tokens.push(new_tok);
        }
    }
    Vocab::from_tokens(tokens)
}

/// Greedy longest-match-first segmentation of one pre-split word.
fn wordpiece(word: &str, vocab: &Vocab, out: &mut Vec<u32>) {
    let chars: Vec<char> = word.chars().collect();
    let mut start = 0;
    while start < chars.len() {
        let mut end = chars.len();
        let mut found = None;
        while end > start {
            let piece: String = chars[start..end].iter().collect();
            let piece = if start > 0 { format!("{CONTINUATION}{piece}") } else { piece };
            if let Some(id) = vocab.id(&piece) {
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
                out.push(UNK);
                start += 1;
            }
        }
    }
}

pub fn tokenize(name: &str, vocab: &Vocab) -> Vec<u32> {
    let mut out = Vec::new();
    for w in pre_tokenize(name) {
        wordpiece(&w, vocab, &mut out);
    }
    out
}

/// Inverse of [`tokenize`] up to whitespace: continuation pieces are glued on.
pub fn detokenize(ids: &[u32], vocab: &Vocab) -> String {
    let mut s = String::new();
    for &id in ids {
        let tok = vocab.token(id).unwrap_or("[UNK]");
        match tok.strip_prefix(CONTINUATION) {
            Some(rest) => s.push_str(rest),
            None => {
                if !s.is_empty() {
                    s.push(' ');
                }
                s.push_str(tok);
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_merge_step() {
        let corpus = vec!["aa"; 10];
        // reserved (5) + "a" + "##a"
        assert!(train_vocab(&corpus, 6).is_err());
        let v = train_vocab(&corpus, 8).unwrap();
        assert!(v.contains("a") && v.contains("##a") && v.contains("aa"));
        assert_eq!(v.len(), 8);
        assert_eq!(tokenize("aa", &v), vec![v.id("aa").unwrap()]);
    }

    #[test]
    fn training_is_deterministic() {
        let names = ["Bell Museum", "Bloom Island Park", "St. Anthony Park", "Minneapolis"];
        assert_eq!(train_vocab(&names, 60).unwrap(), train_vocab(&names, 60).unwrap());
        assert!(train_vocab::<&str>(&[], 60).is_err());
    }

    #[test]
    fn greedy_longest_match() {
        let v = Vocab::from_list(&["university", "uni", "##x", "##versity", "x"]).unwrap();
        let ids = tokenize("universityx", &v);
        let toks: Vec<&str> = ids.iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(toks, ["university", "##x"]);
        assert_eq!(tokenize("University", &v), vec![v.id("university").unwrap()]);
    }

    #[test]
    fn unknown_character_falls_back() {
        let v = Vocab::from_list(&["a", "##a"]).unwrap();
        assert_eq!(tokenize("aza", &v), vec![v.id("a").unwrap(), UNK, v.id("##a").unwrap()]);
        assert_eq!(tokenize("é", &v), vec![UNK]);
    }

    #[test]
    fn punctuation_is_split() {
        assert_eq!(pre_tokenize("St. Anthony  Park"), ["st", ".", "anthony", "park"]);
    }

    #[test]
    fn file_round_trip() {
        let v = train_vocab(&["maple clinic", "oak hall"], 40).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        v.save(&p).unwrap();
        let back = Vocab::load(&p).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.hash(), v.hash());
        fs::write(&p, "[PAD]\nfoo\n").unwrap();
        assert!(Vocab::load(&p).is_err());
    }

    proptest! {
        #[test]
        fn alphabet_closure_and_round_trip(names in proptest::collection::vec("[a-z]{1,8}( [a-z]{1,8}){0,2}", 1..20), extra in 0usize..200) {
            let alphabet: BTreeSet<char> = names.iter().flat_map(|n| n.chars()).filter(|c| !c.is_whitespace()).collect();
            let v = train_vocab(&names, 5 + 2 * alphabet.len() + extra).unwrap();
            for n in &names {
                let ids = tokenize(n, &v);
                prop_assert!(!ids.is_empty());
                prop_assert!(!ids.contains(&UNK));
                prop_assert_eq!(detokenize(&ids, &v), n.split_whitespace().collect::<Vec<_>>().join(" "));
            }
        }
    }
}
