//! The three note attributes and a fixed-size container keyed by them.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Pitch,
    Duration,
    Rest,
}

impl Attribute {
    pub const ALL: [Attribute; 3] = [Attribute::Pitch, Attribute::Duration, Attribute::Rest];

    pub fn index(self) -> usize {
        match self {
            Attribute::Pitch => 0,
            Attribute::Duration => 1,
            Attribute::Rest => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Pitch => "pitch",
            Attribute::Duration => "duration",
            Attribute::Rest => "rest",
        }
    }

    /// Single-letter code used in radar-plot axis labels.
    pub fn letter(self) -> char {
        match self {
            Attribute::Pitch => 'P',
            Attribute::Duration => 'D',
            Attribute::Rest => 'R',
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pitch" | "p" => Some(Attribute::Pitch),
            "duration" | "dur" | "d" => Some(Attribute::Duration),
            "rest" | "r" => Some(Attribute::Rest),
            _ => None,
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per attribute, indexable by [`Attribute`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerAttr<T>(pub [T; 3]);

impl<T> PerAttr<T> {
    pub fn new(pitch: T, duration: T, rest: T) -> Self {
        PerAttr([pitch, duration, rest])
    }

    pub fn from_fn(mut f: impl FnMut(Attribute) -> T) -> Self {
        PerAttr([
            f(Attribute::Pitch),
            f(Attribute::Duration),
            f(Attribute::Rest),
        ])
    }

    pub fn map<U>(&self, mut f: impl FnMut(Attribute, &T) -> U) -> PerAttr<U> {
        PerAttr::from_fn(|a| f(a, &self[a]))
    }

    pub fn try_map<U, E>(&self, mut f: impl FnMut(Attribute, &T) -> Result<U, E>) -> Result<PerAttr<U>, E> {
        Ok(PerAttr([
            f(Attribute::Pitch, &self[Attribute::Pitch])?,
            f(Attribute::Duration, &self[Attribute::Duration])?,
            f(Attribute::Rest, &self[Attribute::Rest])?,
        ]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Attribute, &T)> {
        Attribute::ALL.into_iter().zip(self.0.iter())
    }
}

impl<T> Index<Attribute> for PerAttr<T> {
    type Output = T;
    fn index(&self, a: Attribute) -> &T {
        &self.0[a.index()]
    }
}

impl<T> IndexMut<Attribute> for PerAttr<T> {
    fn index_mut(&mut self, a: Attribute) -> &mut T {
        &mut self.0[a.index()]
    }
}
