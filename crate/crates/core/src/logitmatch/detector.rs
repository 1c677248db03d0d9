//! Character-level detector for the opening of a `"text"` value:
//! `"text"`, optional whitespace, `:`, optional whitespace, `"`.
//!
//! The detector sees decoded bytes regardless of how they were grouped into
//! tokens, so quotes fused into larger tokens are handled the same as
//! standalone ones.

/// Detector state. The numeric value is the progress through the pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Detector(u8);

/// Number of distinct detector states.
pub const DETECTOR_STATES: usize = 9;

const KEY: &[u8] = b"\"text\"";
// after `"text"` with no whitespace yet
const AFTER_KEY: u8 = 6;
// after `"text"` and at least one whitespace byte
const AFTER_KEY_WS: u8 = 7;
// after the colon (and maybe whitespace)
const AFTER_COLON: u8 = 8;

pub fn is_json_ws(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r')
}

/// Result of feeding one byte.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feed {
    Continue(Detector),
    /// The opening quote of the value was just consumed.
    Fired,
}

impl Detector {
    pub const IDLE: Detector = Detector(0);

    /// State right after a closing quote: the quote may start a new key.
    pub const AFTER_QUOTE: Detector = Detector(1);

    pub fn all() -> impl Iterator<Item = Detector> {
        (0..DETECTOR_STATES as u8).map(Detector)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    fn restart(b: u8) -> Detector {
        if b == b'"' {
            Detector(1)
        } else {
            Detector(0)
        }
    }

    pub fn feed(self, b: u8) -> Feed {
        let next = match self.0 {
            s @ 0..=5 => {
                if b == KEY[s as usize] {
                    Detector(s + 1)
                } else {
                    Self::restart(b)
                }
            }
            AFTER_KEY | AFTER_KEY_WS => {
                if is_json_ws(b) {
                    Detector(AFTER_KEY_WS)
                } else if b == b':' {
                    Detector(AFTER_COLON)
                } else if self.0 == AFTER_KEY && b == b't' {
                    // the closing quote of `"text"` may open another `"t...`
                    Detector(2)
                } else {
                    Self::restart(b)
                }
            }
            AFTER_COLON => {
                if b == b'"' {
                    return Feed::Fired;
                } else if is_json_ws(b) {
                    Detector(AFTER_COLON)
                } else {
                    Detector(0)
                }
            }
            _ => unreachable!("detector state out of range"),
        };
        Feed::Continue(next)
    }
}
