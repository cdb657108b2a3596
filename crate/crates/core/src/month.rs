use std::fmt;

use serde::{Deserialize, Serialize};

/// A calendar month, 1 (January) through 12 (December).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Month(u8);

impl Month {
    pub const COUNT: usize = 12;

    pub fn new(month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(Month(month as u8))
    }

    /// Zero-based index, 0 for January.
    pub fn index(self) -> usize {
        usize::from(self.0) - 1
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::new(index as u32 + 1)
    }

    pub fn number(self) -> u32 {
        u32::from(self.0)
    }

    pub fn all() -> impl Iterator<Item = Month> {
        (1..=12u8).map(Month)
    }
}

impl TryFrom<u32> for Month {
    type Error = String;

    fn try_from(value: u32) -> Result<Self, Self::Error> {
        Month::new(value).ok_or_else(|| format!("month {value} outside 1-12"))
    }
}

impl From<Month> for u32 {
    fn from(m: Month) -> u32 {
        m.number()
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_is_enforced() {
        assert!(Month::new(0).is_none());
        assert!(Month::new(13).is_none());
        assert_eq!(Month::new(12).unwrap().index(), 11);
        assert_eq!(Month::all().count(), 12);
    }

    #[test]
    fn serde_rejects_out_of_range() {
        assert!(serde_json::from_str::<Month>("13").is_err());
        assert_eq!(serde_json::from_str::<Month>("7").unwrap(), Month::new(7).unwrap());
    }
}
