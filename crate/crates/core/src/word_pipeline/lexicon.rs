//! Part-of-speech lexicon: `word<TAB>tag[,tag...]` per line.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::word_pipeline::singular::singularize;

const BUNDLED: &str = include_str!("../../data/lexicon.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PosTag {
    Noun,
    Verb,
    Adjective,
    Adverb,
    Determiner,
    Pronoun,
    Preposition,
    Conjunction,
    Numeral,
    Interjection,
    Particle,
}

impl PosTag {
    pub const ALL: [PosTag; 11] = [
        PosTag::Noun,
        PosTag::Verb,
        PosTag::Adjective,
        PosTag::Adverb,
        PosTag::Determiner,
        PosTag::Pronoun,
        PosTag::Preposition,
        PosTag::Conjunction,
        PosTag::Numeral,
        PosTag::Interjection,
        PosTag::Particle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PosTag::Noun => "noun",
            PosTag::Verb => "verb",
            PosTag::Adjective => "adjective",
            PosTag::Adverb => "adverb",
            PosTag::Determiner => "determiner",
            PosTag::Pronoun => "pronoun",
            PosTag::Preposition => "preposition",
            PosTag::Conjunction => "conjunction",
            PosTag::Numeral => "numeral",
            PosTag::Interjection => "interjection",
            PosTag::Particle => "particle",
        }
    }

    fn bit(self) -> u16 {
        1 << (self as u16)
    }
}

impl FromStr for PosTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PosTag::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown part-of-speech tag `{s}`")))
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A set of part-of-speech tags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TagSet(u16);

impl TagSet {
    pub fn of(tags: &[PosTag]) -> Self {
        Self(tags.iter().fold(0, |acc, t| acc | t.bit()))
    }

    pub fn contains(self, tag: PosTag) -> bool {
        self.0 & tag.bit() != 0
    }

    pub fn intersects(self, other: TagSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn insert(&mut self, tag: PosTag) {
        self.0 |= tag.bit();
    }

    pub fn union(self, other: TagSet) -> Self {
        Self(self.0 | other.0)
    }

    pub fn tags(self) -> impl Iterator<Item = PosTag> {
        PosTag::ALL.into_iter().filter(move |t| self.contains(*t))
    }
}

#[derive(Debug, Clone, Default)]
pub struct PosLexicon {
    entries: HashMap<String, TagSet>,
}

impl PosLexicon {
    /// The lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED, "bundled lexicon").expect("bundled lexicon is well formed")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parse lexicon text. Lines starting with `#` and blank lines are
    /// ignored. Each entry is stored under its lowercase form and under its
    /// singular form so lookups of standardized tokens succeed.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lex = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, tags) = line.split_once('\t').ok_or_else(|| {
                Error::format("lexicon", format!("{origin}:{}: expected word<TAB>tags", lineno + 1))
            })?;
            let mut set = TagSet::default();
            for tag in tags.split(',') {
                let tag = tag.trim().parse::<PosTag>().map_err(|e| {
                    Error::format("lexicon", format!("{origin}:{}: {e}", lineno + 1))
                })?;
                set.insert(tag);
            }
            let lower = word.trim().to_lowercase();
            if lower.is_empty() {
                return Err(Error::format("lexicon", format!("{origin}:{}: empty word", lineno + 1)));
            }
            lex.insert(singularize(&lower), set);
            lex.insert(lower, set);
        }
        Ok(lex)
    }

    pub fn insert(&mut self, word: String, tags: TagSet) {
        let entry = self.entries.entry(word).or_default();
        *entry = entry.union(tags);
    }

    pub fn tags(&self, word: &str) -> Option<TagSet> {
        self.entries.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
