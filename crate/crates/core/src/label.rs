use core::fmt;

/// Track label: frame of birth and index among the objects born in that frame.
///
/// Ordering is lexicographic on `(birth_time, birth_index)`, which gives every
/// label set a canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrackLabel {
    pub birth_time: u32,
    pub birth_index: u32,
}

impl TrackLabel {
    pub const fn new(birth_time: u32, birth_index: u32) -> Self {
        Self {
            birth_time,
            birth_index,
        }
    }

    /// Frames elapsed since birth, saturating at zero.
    pub fn age(&self, frame: u32) -> u32 {
        frame.saturating_sub(self.birth_time)
    }
}

impl fmt::Display for TrackLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.birth_time, self.birth_index)
    }
}
