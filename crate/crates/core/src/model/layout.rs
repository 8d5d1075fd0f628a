use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which guidance keywords occupy slots ahead of `bos`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum KeywordMode {
    #[default]
    #[serde(rename = "none")]
    None,
    /// Feature word only.
    F,
    /// Feature and opinion words.
    FO,
}

impl KeywordMode {
    pub fn num_slots(self) -> usize {
        match self {
            Self::None => 0,
            Self::F => 1,
            Self::FO => 2,
        }
    }
}

impl FromStr for KeywordMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "F" | "f" => Ok(Self::F),
            "FO" | "fo" => Ok(Self::FO),
            other => Err(Error::invalid(format!("unknown keyword mode `{other}`"))),
        }
    }
}

impl fmt::Display for KeywordMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::F => "F",
            Self::FO => "FO",
        })
    }
}

/// Row bookkeeping for `[user, item, k_1..k_K, bos, w_1..w_n]` (0-indexed).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceLayout {
    pub num_keywords: usize,
    pub num_words: usize,
}

impl SequenceLayout {
    pub const USER: usize = 0;
    pub const ITEM: usize = 1;

    pub fn new(num_keywords: usize, num_words: usize) -> Result<Self> {
        if num_keywords > 2 {
            return Err(Error::invalid("at most two keyword slots"));
        }
        if num_words == 0 {
            return Err(Error::invalid("word span must be non-empty"));
        }
        Ok(Self {
            num_keywords,
            num_words,
        })
    }

    pub fn keywords(&self) -> Range<usize> {
        2..2 + self.num_keywords
    }

    pub fn bos(&self) -> usize {
        self.num_keywords + 2
    }

    /// Rows that receive noise.
    pub fn word_span(&self) -> Range<usize> {
        self.bos() + 1..self.bos() + 1 + self.num_words
    }

    /// Rows whose outputs predict the next token: `bos` through the last word.
    pub fn generation_span(&self) -> Range<usize> {
        self.bos()..self.len()
    }

    /// Rows before the word span: user, item, keywords and bos.
    pub fn prefix_len(&self) -> usize {
        self.bos() + 1
    }

    pub fn len(&self) -> usize {
        self.prefix_len() + self.num_words
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_word(&self, row: usize) -> bool {
        self.word_span().contains(&row)
    }

    /// Whether `query` may attend to `key`: the prefix is mutually visible,
    /// word rows see the prefix and earlier-or-equal word rows.
    pub fn visible(&self, query: usize, key: usize) -> bool {
        let p = self.prefix_len();
        if key < p {
            true
        } else {
            query >= p && key <= query
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_keywords_puts_bos_at_two() {
        let l = SequenceLayout::new(KeywordMode::None.num_slots(), 4).unwrap();
        assert_eq!(l.bos(), 2);
        assert_eq!(l.word_span(), 3..7);
        assert_eq!(l.len(), 7);
    }

    #[test]
    fn fo_word_span_starts_at_five() {
        let l = SequenceLayout::new(KeywordMode::FO.num_slots(), 3).unwrap();
        assert_eq!(l.keywords(), 2..4);
        assert_eq!(l.word_span().start, 5);
    }

    #[test]
    fn generation_span_in_one_indexing() {
        // One-indexed, predictions run from |K| + 3 through the sequence length.
        for k in 0..=2 {
            let l = SequenceLayout::new(k, 6).unwrap();
            let g = l.generation_span();
            assert_eq!(g.start + 1, k + 3);
            assert_eq!(g.end, l.len());
            assert_eq!(g.len(), l.num_words + 1);
        }
    }

    #[test]
    fn mask_rules() {
        let l = SequenceLayout::new(1, 3).unwrap(); // u i k bos w1 w2 w3
        assert!(l.visible(0, 1) && l.visible(1, 0) && l.visible(0, 2) && l.visible(0, 3));
        assert!(!l.visible(0, 4) && !l.visible(3, 4));
        assert!(l.visible(5, 4) && l.visible(5, 5) && !l.visible(5, 6));
        assert!(l.visible(6, 0));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("FO".parse::<KeywordMode>().unwrap(), KeywordMode::FO);
        assert_eq!(KeywordMode::F.to_string(), "F");
        assert!("X".parse::<KeywordMode>().is_err());
    }
}
