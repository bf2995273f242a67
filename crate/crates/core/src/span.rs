use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open token range `[start, end)` marking an aspect term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    /// Validates `0 <= start < end <= len`.
    pub fn new(start: usize, end: usize, len: usize) -> Result<Self> {
        if start < end && end <= len {
            Ok(Span { start, end })
        } else {
            Err(Error::InvalidSpan { start, end, len })
        }
    }

    /// From inclusive endpoints `[first, last]`.
    pub fn inclusive(first: usize, last: usize, len: usize) -> Result<Self> {
        if last < first {
            return Err(Error::InvalidSpan {
                start: first,
                end: last + 1,
                len,
            });
        }
        Span::new(first, last + 1, len)
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, i: usize) -> bool {
        (self.start..self.end).contains(&i)
    }

    pub fn indices(&self) -> Vec<usize> {
        (self.start..self.end).collect()
    }

    /// Token distance from `i` to the nearest span endpoint, 0 inside.
    pub fn distance(&self, i: usize) -> usize {
        if i < self.start {
            self.start - i
        } else if i >= self.end {
            i + 1 - self.end
        } else {
            0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances() {
        let s = Span::new(2, 4, 7).unwrap();
        let d: Vec<usize> = (0..7).map(|i| s.distance(i)).collect();
        assert_eq!(d, [2, 1, 0, 0, 1, 2, 3]);
    }

    #[test]
    fn validation() {
        assert!(Span::new(2, 2, 5).is_err());
        assert!(Span::new(0, 6, 5).is_err());
        assert_eq!(Span::inclusive(2, 2, 5).unwrap(), Span { start: 2, end: 3 });
        assert!(Span::inclusive(3, 2, 5).is_err());
    }
}
