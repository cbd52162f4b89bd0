//! Mnemonic tagset handling: fine-grained tags, tag inventories, and the
//! coarse lexical-category projection.
//!
//! A tag is a short character string where the first character names the
//! lexical category and the remaining characters encode morphological
//! features. Validation here is purely structural (length bounds); the
//! tagset file is the source of truth for which tags exist.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result, MAX_TAG_LEN};

/// A validated fine-grained morphosyntactic tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MnemonicTag {
    raw: String,
}

impl MnemonicTag {
    /// Parses a raw tag string. Rejects empty strings and strings longer
    /// than [`MAX_TAG_LEN`] characters; no semantic decoding of feature
    /// characters is performed.
    pub fn parse(raw: &str) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyTag);
        }
        if raw.chars().count() > MAX_TAG_LEN {
            return Err(Error::TagTooLong {
                tag: raw.to_string(),
            });
        }
        Ok(MnemonicTag {
            raw: raw.to_string(),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    /// The lexical category: the first character of the tag.
    pub fn category(&self) -> char {
        self.raw.chars().next().expect("tag is non-empty")
    }
}

impl fmt::Display for MnemonicTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

/// Projects a tag to its coarse lexical category.
pub fn coarse_of(tag: &MnemonicTag) -> char {
    tag.category()
}

/// A closed, ordered fine-grained tag inventory with a bijective
/// tag ↔ index mapping. Iteration order equals index order.
#[derive(Debug, Clone)]
pub struct TagInventory {
    tags: Vec<MnemonicTag>,
    index: HashMap<String, usize>,
}

impl TagInventory {
    /// Builds an inventory from raw tag strings. Duplicates are removed
    /// and the result is ordered lexicographically, so the assignment of
    /// indices does not depend on input order.
    pub fn build<I, S>(tags: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut parsed: Vec<MnemonicTag> = tags
            .into_iter()
            .map(|s| MnemonicTag::parse(s.as_ref()))
            .collect::<Result<_>>()?;
        parsed.sort();
        parsed.dedup();
        if parsed.is_empty() {
            return Err(Error::EmptyTagset);
        }
        let index = parsed
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str().to_string(), i))
            .collect();
        Ok(TagInventory {
            tags: parsed,
            index,
        })
    }

    /// Loads a tagset file: UTF-8, one tag per line, trailing whitespace
    /// trimmed, no comments or blank lines.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut tags = Vec::new();
        for line in text.lines() {
            let tag = line.trim_end();
            // A blank line is malformed input, not an empty inventory.
            MnemonicTag::parse(tag)?;
            tags.push(tag);
        }
        TagInventory::build(tags)
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn index_of(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn get(&self, index: usize) -> Option<&MnemonicTag> {
        self.tags.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &MnemonicTag> {
        self.tags.iter()
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.index.contains_key(tag)
    }
}

/// The coarse tagset: the distinct lexical-category characters of a fine
/// inventory, sorted.
#[derive(Debug, Clone)]
pub struct CoarseInventory {
    categories: Vec<char>,
    index: HashMap<char, usize>,
}

impl CoarseInventory {
    /// Derives the coarse inventory from a fine one by collecting the
    /// distinct first characters of its tags.
    pub fn from_fine(fine: &TagInventory) -> Self {
        let mut categories: Vec<char> = fine.iter().map(|t| t.category()).collect();
        categories.sort_unstable();
        categories.dedup();
        let index = categories.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        CoarseInventory { categories, index }
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn index_of(&self, category: char) -> Option<usize> {
        self.index.get(&category).copied()
    }

    pub fn get(&self, index: usize) -> Option<char> {
        self.categories.get(index).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = char> + '_ {
        self.categories.iter().copied()
    }
}
