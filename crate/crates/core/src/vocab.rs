//! Whitespace tokenizer and the shared token-id space.
//!
//! The trie, the base model and the fusion engine all index tokens through
//! one [`Vocab`]. Ids are handed out first-come and never change once
//! assigned. Matching is exact and case-sensitive.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into a [`Vocab`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for TokenId {
    fn from(v: u32) -> Self {
        TokenId(v)
    }
}

/// Bijective map between surface forms and [`TokenId`]s.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    token_to_id: HashMap<String, TokenId>,
    id_to_token: Vec<String>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.id_to_token.get(id.index()).map(String::as_str)
    }

    /// Returns the id for `token`, registering it if unseen.
    pub fn intern(&mut self, token: &str) -> TokenId {
        if let Some(id) = self.get(token) {
            return id;
        }
        let id = TokenId(self.id_to_token.len() as u32);
        self.id_to_token.push(token.to_owned());
        self.token_to_id.insert(token.to_owned(), id);
        id
    }

    /// Splits `text` on whitespace and maps each piece to an id. With `grow`
    /// unseen pieces are registered, otherwise they are an error.
    pub fn tokenize(&mut self, text: &str, grow: bool) -> Result<Vec<TokenId>> {
        if text.trim().is_empty() {
            return Err(Error::EmptyInput);
        }
        if grow {
            return Ok(text.split_whitespace().map(|t| self.intern(t)).collect());
        }
        self.lookup(text)
    }

    /// Read-only variant of [`Vocab::tokenize`] with `grow = false`.
    pub fn lookup(&self, text: &str) -> Result<Vec<TokenId>> {
        if text.trim().is_empty() {
            return Err(Error::EmptyInput);
        }
        text.split_whitespace().map(|t| self.get(t).ok_or_else(|| Error::UnknownToken(t.to_owned()))).collect()
    }

    pub fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        let mut out = String::new();
        for (i, &id) in ids.iter().enumerate() {
            let tok = self.token(id).ok_or(Error::UnknownId(id.0))?;
            if i > 0 {
                out.push(' ');
            }
            out.push_str(tok);
        }
        Ok(out)
    }

    /// Writes one surface form per line; the line number is the id.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for tok in &self.id_to_token {
            writeln!(w, "{tok}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut vocab = Vocab::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() || line.split_whitespace().count() != 1 || line.trim() != line {
                return Err(Error::InvalidConfig(format!(
                    "vocabulary line {} is not a single token: {line:?}",
                    lineno + 1
                )));
            }
            if vocab.get(&line).is_some() {
                return Err(Error::InvalidConfig(format!("vocabulary line {} repeats token {line:?}", lineno + 1)));
            }
            vocab.intern(&line);
        }
        Ok(vocab)
    }
}

pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(v: &[u32]) -> Vec<TokenId> {
        v.iter().copied().map(TokenId).collect()
    }

    #[test]
    fn first_come_ids() {
        let mut v = Vocab::new();
        assert_eq!(v.tokenize("activate your plan", true).unwrap(), ids(&[0, 1, 2]));
        assert_eq!(v.len(), 3);
        assert_eq!(v.tokenize("plan plan", true).unwrap(), ids(&[2, 2]));
        assert!(matches!(v.tokenize("5G", false), Err(Error::UnknownToken(t)) if t == "5G"));
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn empty_input_rejected() {
        let mut v = Vocab::new();
        assert!(matches!(v.tokenize("   \t", true), Err(Error::EmptyInput)));
    }

    #[test]
    fn detokenize_cases() {
        let mut v = Vocab::new();
        v.tokenize("activate your plan", true).unwrap();
        assert_eq!(v.detokenize(&ids(&[0, 1, 2])).unwrap(), "activate your plan");
        assert_eq!(v.detokenize(&[]).unwrap(), "");
        assert!(matches!(v.detokenize(&ids(&[99])), Err(Error::UnknownId(99))));
    }

    #[test]
    fn case_sensitive() {
        let mut v = Vocab::new();
        let a = v.tokenize("5G 5g", true).unwrap();
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn persistence_round_trip() {
        let mut v = Vocab::new();
        v.tokenize("please activate your plan 5G", true).unwrap();
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        let back = Vocab::read_from(&buf[..]).unwrap();
        assert_eq!(back, v);
        assert!(Vocab::read_from(&b"a\na\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(words in proptest::collection::vec("[a-zA-Z0-9]{1,6}", 1..20)) {
            let s = words.join(" ");
            let mut v = Vocab::new();
            let t = v.tokenize(&s, true).unwrap();
            prop_assert_eq!(v.detokenize(&t).unwrap(), normalize_whitespace(&s));
        }

        #[test]
        fn ids_stable_under_growth(a in "[a-z]{1,4}( [a-z]{1,4}){0,8}", b in "[a-z]{1,4}( [a-z]{1,4}){0,8}") {
            let mut v = Vocab::new();
            let first = v.tokenize(&a, true).unwrap();
            v.tokenize(&b, true).unwrap();
            prop_assert_eq!(v.lookup(&a).unwrap(), first);
        }
    }
}
