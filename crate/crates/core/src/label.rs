use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::ids::LabelId;

/// Ontology category of a label.
///
/// `Phase`, `Action` and `Event` describe temporal-only annotations;
/// `Structure` annotations additionally carry a keyframed bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LabelKind {
    Phase,
    Action,
    Event,
    Structure,
}

impl LabelKind {
    pub const ALL: [LabelKind; 4] = [Self::Phase, Self::Action, Self::Event, Self::Structure];

    pub fn is_spatial(self) -> bool {
        matches!(self, Self::Structure)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Phase => "PHASE",
            Self::Action => "ACTION",
            Self::Event => "EVENT",
            Self::Structure => "STRUCTURE",
        }
    }
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `#RRGGBB` color, stored normalized to upper-case hex digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Color(String);

impl Color {
    pub fn parse(s: &str) -> Result<Self, CoreError> {
        let digits = s
            .strip_prefix('#')
            .filter(|d| d.len() == 6 && d.bytes().all(|b| b.is_ascii_hexdigit()))
            .ok_or_else(|| CoreError::InvalidColor(s.to_string()))?;
        Ok(Self(format!("#{}", digits.to_ascii_uppercase())))
    }

    pub fn rgb(&self) -> (u8, u8, u8) {
        let v = u32::from_str_radix(&self.0[1..], 16).expect("validated on construction");
        ((v >> 16) as u8, (v >> 8) as u8, v as u8)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for Color {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl TryFrom<String> for Color {
    type Error = CoreError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::parse(&s)
    }
}

impl From<Color> for String {
    fn from(c: Color) -> Self {
        c.0
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ontology entry. `(name, kind)` is unique platform-wide; the store enforces it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Label {
    pub id: LabelId,
    pub name: String,
    pub color: Color,
    pub kind: LabelKind,
}

impl Label {
    pub fn new(name: impl Into<String>, color: Color, kind: LabelKind) -> Result<Self, CoreError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(CoreError::EmptyLabelName);
        }
        Ok(Self { id: LabelId::new(), name, color, kind })
    }

    /// Identity used to match labels across platforms during import.
    pub fn identity(&self) -> (&str, LabelKind) {
        (&self.name, self.kind)
    }
}
