//! Outcome alphabets and finite outcome words.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a symbol within its [`Alphabet`].
pub type Symbol = usize;

/// An ordered, finite set of outcome symbols. The declared order fixes the
/// lexicographic order used by every enumeration in the crate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Alphabet(Vec<String>);

impl Alphabet {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidAlphabet("empty alphabet".into()));
        }
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() || s.contains(',') || s.trim() != s {
                return Err(Error::InvalidAlphabet(format!("bad symbol {s:?}")));
            }
            if symbols[..i].contains(s) {
                return Err(Error::InvalidAlphabet(format!("duplicate symbol {s:?}")));
            }
        }
        Ok(Self(symbols))
    }

    /// The two-outcome detector alphabet `{-1, 1}`.
    pub fn plus_minus() -> Self {
        Self(vec!["-1".into(), "1".into()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.0
    }

    pub fn name(&self, symbol: Symbol) -> &str {
        &self.0[symbol]
    }

    pub fn index(&self, name: &str) -> Result<Symbol> {
        self.0
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::UnknownSymbol(name.to_string()))
    }

    /// Parses a comma-joined word such as `"1,-1,1"`. The empty string is the
    /// empty word.
    pub fn parse_word(&self, text: &str) -> Result<Vec<Symbol>> {
        let text = text.trim();
        if text.is_empty() {
            return Ok(Vec::new());
        }
        text.split(',').map(|s| self.index(s.trim())).collect()
    }

    pub fn format_word(&self, word: &[Symbol]) -> String {
        word.iter().map(|&s| self.0[s].as_str()).collect::<Vec<_>>().join(",")
    }

    /// All words of the given length in lexicographic order.
    pub fn words(&self, length: usize) -> Words {
        Words::new(self.len(), length)
    }

    /// Number of words of the given length, or `None` on overflow.
    pub fn word_count(&self, length: usize) -> Option<usize> {
        self.len().checked_pow(u32::try_from(length).ok()?)
    }
}

impl TryFrom<Vec<String>> for Alphabet {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Alphabet> for Vec<String> {
    fn from(a: Alphabet) -> Self {
        a.0
    }
}

/// Lexicographic odometer over `k^L` words.
#[derive(Clone, Debug)]
pub struct Words {
    k: usize,
    current: Option<Vec<Symbol>>,
}

impl Words {
    fn new(k: usize, length: usize) -> Self {
        Self { k, current: Some(vec![0; length]) }
    }
}

impl Iterator for Words {
    type Item = Vec<Symbol>;

    fn next(&mut self) -> Option<Vec<Symbol>> {
        let out = self.current.take()?;
        let mut next = out.clone();
        let mut pos = next.len();
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            next[pos] += 1;
            if next[pos] < self.k {
                self.current = Some(next);
                break;
            }
            next[pos] = 0;
        }
        Some(out)
    }
}

/// Rank of a word in lexicographic order.
pub fn word_rank(word: &[Symbol], k: usize) -> usize {
    word.iter().fold(0, |acc, &s| acc * k + s)
}
