use std::fmt;

use serde::{Deserialize, Serialize};

/// IOB tag of a single token. The declaration order `O < B < I` is the
/// canonical order used for tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IobLabel {
    O,
    B,
    I,
}

impl IobLabel {
    pub const ALL: [IobLabel; 3] = [IobLabel::O, IobLabel::B, IobLabel::I];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IobLabel::O => "O",
            IobLabel::B => "B",
            IobLabel::I => "I",
        }
    }
}

impl fmt::Display for IobLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
