use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// An IOB2 tag: `O`, `B-<type>` or `I-<type>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Outside,
    Begin(String),
    Inside(String),
}

impl Tag {
    pub fn entity_type(&self) -> Option<&str> {
        match self {
            Tag::Outside => None,
            Tag::Begin(t) | Tag::Inside(t) => Some(t),
        }
    }

    pub fn is_inside(&self) -> bool {
        matches!(self, Tag::Inside(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed tag `{0}`: expected `O`, `B-<type>` or `I-<type>`")]
pub struct MalformedTag(pub String);

impl FromStr for Tag {
    type Err = MalformedTag;

    fn from_str(s: &str) -> Result<Tag, MalformedTag> {
        if s == "O" {
            return Ok(Tag::Outside);
        }
        let bad = || MalformedTag(s.to_string());
        let (prefix, ty) = s.split_once('-').ok_or_else(bad)?;
        if ty.is_empty() || ty.chars().any(char::is_whitespace) {
            return Err(bad());
        }
        match prefix {
            "B" => Ok(Tag::Begin(ty.to_string())),
            "I" => Ok(Tag::Inside(ty.to_string())),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(t) => write!(f, "B-{t}"),
            Tag::Inside(t) => write!(f, "I-{t}"),
        }
    }
}

impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Tag, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// IOB2 tag inventory over a set of entity types.
///
/// Tag indices are `O` = 0, then `B-t`, `I-t` for each type in sorted order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "SchemeRepr", into = "SchemeRepr")]
pub struct TagScheme {
    entity_types: Vec<String>,
    tags: Vec<Tag>,
}

#[derive(Serialize, Deserialize)]
struct SchemeRepr {
    entity_types: Vec<String>,
}

impl From<SchemeRepr> for TagScheme {
    fn from(r: SchemeRepr) -> Self {
        TagScheme::new(r.entity_types)
    }
}

impl From<TagScheme> for SchemeRepr {
    fn from(s: TagScheme) -> Self {
        SchemeRepr {
            entity_types: s.entity_types,
        }
    }
}

impl TagScheme {
    pub fn new<I, S>(entity_types: I) -> TagScheme
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let types: BTreeSet<String> = entity_types.into_iter().map(Into::into).collect();
        let entity_types: Vec<String> = types.into_iter().collect();
        let mut tags = vec![Tag::Outside];
        for t in &entity_types {
            tags.push(Tag::Begin(t.clone()));
            tags.push(Tag::Inside(t.clone()));
        }
        TagScheme { entity_types, tags }
    }

    /// Scheme covering every entity type mentioned by `tags`.
    pub fn covering<'a>(tags: impl IntoIterator<Item = &'a Tag>) -> TagScheme {
        TagScheme::new(tags.into_iter().filter_map(|t| t.entity_type().map(str::to_string)))
    }

    pub fn entity_types(&self) -> &[String] {
        &self.entity_types
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, tag: &Tag) -> Option<usize> {
        match tag {
            Tag::Outside => Some(0),
            Tag::Begin(t) => self.type_index(t).map(|i| 1 + 2 * i),
            Tag::Inside(t) => self.type_index(t).map(|i| 2 + 2 * i),
        }
    }

    pub fn tag(&self, index: usize) -> &Tag {
        &self.tags[index]
    }

    pub fn contains(&self, tag: &Tag) -> bool {
        self.index_of(tag).is_some()
    }

    fn type_index(&self, ty: &str) -> Option<usize> {
        self.entity_types.binary_search_by(|t| t.as_str().cmp(ty)).ok()
    }

    /// Whether `next` may follow `prev` (`None` = sentence start) under IOB2.
    pub fn allows(prev: Option<&Tag>, next: &Tag) -> bool {
        match next {
            Tag::Inside(t) => matches!(prev, Some(Tag::Begin(p)) | Some(Tag::Inside(p)) if p == t),
            _ => true,
        }
    }
}
