//! Byte-level automaton for the fixed output shape
//! `[{"text": string, "label": enum[, "occurrence": 1..=99]}, ...]`.
//!
//! The text value itself is not consumed here: reaching its opening quote
//! yields [`SchemaStep::EnterText`] and the copy machinery takes over until
//! the closing quote, after which decoding resumes at
//! [`Cursor::after_text_value`].

use super::detector::is_json_ws;
use super::escape::escape_json_str;

/// Longest whitespace run accepted between two structural tokens.
pub const MAX_WS: u8 = 4;

/// Largest accepted occurrence index.
pub const MAX_OCCURRENCE: u8 = 99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Field {
    Text,
    Label,
    Occurrence,
}

impl Field {
    fn key(self) -> &'static [u8] {
        match self {
            Field::Text => b"\"text\"",
            Field::Label => b"\"label\"",
            Field::Occurrence => b"\"occurrence\"",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cursor {
    /// Before `[`.
    Start {
        ws: u8,
    },
    /// After `[`: `{` or `]`.
    ArrayOpen {
        ws: u8,
    },
    /// After `{`: the `"text"` key.
    ObjectOpen {
        ws: u8,
    },
    /// Inside a key literal, `pos` bytes matched.
    Key {
        field: Field,
        pos: u8,
    },
    Colon {
        field: Field,
        ws: u8,
    },
    Value {
        field: Field,
        ws: u8,
    },
    /// Inside the label string; `[lo, hi)` is the range of labels (sorted by
    /// escaped bytes) consistent with the `pos` bytes so far.
    Label {
        lo: u16,
        hi: u16,
        pos: u8,
    },
    Occurrence {
        value: u8,
    },
    AfterValue {
        field: Field,
        ws: u8,
    },
    AfterComma {
        next: Field,
        ws: u8,
    },
    AfterObject {
        ws: u8,
    },
    AfterObjectComma {
        ws: u8,
    },
    /// The array is closed.
    Done {
        ws: u8,
    },
}

impl Cursor {
    pub const START: Cursor = Cursor::Start { ws: 0 };

    pub fn after_text_value() -> Cursor {
        Cursor::AfterValue {
            field: Field::Text,
            ws: 0,
        }
    }

    pub fn is_done(self) -> bool {
        matches!(self, Cursor::Done { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemaStep {
    Next(Cursor),
    /// The opening quote of a text value was consumed.
    EnterText,
}

/// Compiled schema: the category labels and whether items carry an
/// occurrence field.
#[derive(Clone, Debug)]
pub struct JsonSchema {
    labels: Vec<Vec<u8>>,
    occurrence: bool,
}

impl JsonSchema {
    pub fn new<S: AsRef<str>>(categories: &[S], occurrence: bool) -> Self {
        let mut labels: Vec<Vec<u8>> = categories
            .iter()
            .map(|c| escape_json_str(c.as_ref()).into_bytes())
            .collect();
        labels.sort();
        labels.dedup();
        assert!(labels.len() < u16::MAX as usize, "too many categories");
        Self { labels, occurrence }
    }

    pub fn has_occurrence(&self) -> bool {
        self.occurrence
    }

    /// Every byte the schema can require, for byte-fallback checks.
    pub fn alphabet(&self) -> Vec<u8> {
        let mut out: Vec<u8> = b"[]{},:\" ".to_vec();
        for f in [Field::Text, Field::Label, Field::Occurrence] {
            if f != Field::Occurrence || self.occurrence {
                out.extend_from_slice(f.key());
            }
        }
        for l in &self.labels {
            out.extend_from_slice(l);
        }
        if self.occurrence {
            out.extend_from_slice(b"0123456789");
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    fn next_field(&self, field: Field) -> Option<Field> {
        match field {
            Field::Text => Some(Field::Label),
            Field::Label if self.occurrence => Some(Field::Occurrence),
            _ => None,
        }
    }

    fn ws(ws: u8, b: u8, make: impl FnOnce(u8) -> Cursor) -> Option<SchemaStep> {
        (is_json_ws(b) && ws < MAX_WS).then(|| SchemaStep::Next(make(ws + 1)))
    }

    pub fn step(&self, cursor: Cursor, b: u8) -> Option<SchemaStep> {
        self.step_bounded(cursor, b, MAX_OCCURRENCE)
    }

    /// Like [`JsonSchema::step`], with occurrence values capped at `limit`.
    pub fn step_bounded(&self, cursor: Cursor, b: u8, limit: u8) -> Option<SchemaStep> {
        use Cursor::*;
        let next = |c| Some(SchemaStep::Next(c));
        match cursor {
            Start { ws } => match b {
                b'[' => next(ArrayOpen { ws: 0 }),
                _ => Self::ws(ws, b, |ws| Start { ws }),
            },
            ArrayOpen { ws } => match b {
                b'{' => next(ObjectOpen { ws: 0 }),
                b']' => next(Done { ws: 0 }),
                _ => Self::ws(ws, b, |ws| ArrayOpen { ws }),
            },
            ObjectOpen { ws } => match b {
                b'"' => next(Key {
                    field: Field::Text,
                    pos: 1,
                }),
                _ => Self::ws(ws, b, |ws| ObjectOpen { ws }),
            },
            Key { field, pos } => {
                let key = field.key();
                if key.get(pos as usize) != Some(&b) {
                    return None;
                }
                if pos as usize + 1 == key.len() {
                    next(Colon { field, ws: 0 })
                } else {
                    next(Key { field, pos: pos + 1 })
                }
            }
            Colon { field, ws } => match b {
                b':' => next(Value { field, ws: 0 }),
                _ => Self::ws(ws, b, |ws| Colon { field, ws }),
            },
            Value { field, ws } => {
                if is_json_ws(b) {
                    return Self::ws(ws, b, |ws| Value { field, ws });
                }
                match (field, b) {
                    (Field::Text, b'"') => Some(SchemaStep::EnterText),
                    (Field::Label, b'"') => next(Label {
                        lo: 0,
                        hi: self.labels.len() as u16,
                        pos: 0,
                    }),
                    (Field::Occurrence, b'1'..=b'9') if b - b'0' <= limit => next(Occurrence { value: b - b'0' }),
                    _ => None,
                }
            }
            Label { lo, hi, pos } => {
                let (lo, hi, pos) = (lo as usize, hi as usize, pos as usize);
                if b == b'"' && self.labels[lo].len() == pos {
                    return next(AfterValue {
                        field: Field::Label,
                        ws: 0,
                    });
                }
                let range = &self.labels[lo..hi];
                let start = range.partition_point(|l| l.get(pos).copied() < Some(b));
                let end = range.partition_point(|l| l.get(pos).copied() <= Some(b));
                if start == end || pos + 1 > u8::MAX as usize {
                    return None;
                }
                next(Label {
                    lo: (lo + start) as u16,
                    hi: (lo + end) as u16,
                    pos: (pos + 1) as u8,
                })
            }
            Occurrence { value } => match b {
                b'0'..=b'9' => {
                    let v = value as u32 * 10 + (b - b'0') as u32;
                    (v <= limit as u32).then(|| SchemaStep::Next(Occurrence { value: v as u8 }))
                }
                _ => self.step_bounded(
                    AfterValue {
                        field: Field::Occurrence,
                        ws: 0,
                    },
                    b,
                    limit,
                ),
            },
            AfterValue { field, ws } => match b {
                b',' => self.next_field(field).map(|next_field| {
                    SchemaStep::Next(AfterComma {
                        next: next_field,
                        ws: 0,
                    })
                }),
                b'}' => self
                    .next_field(field)
                    .is_none()
                    .then_some(SchemaStep::Next(AfterObject { ws: 0 })),
                _ => Self::ws(ws, b, |ws| AfterValue { field, ws }),
            },
            AfterComma { next: field, ws } => match b {
                b'"' => next(Key { field, pos: 1 }),
                _ => Self::ws(ws, b, |ws| AfterComma { next: field, ws }),
            },
            AfterObject { ws } => match b {
                b',' => next(AfterObjectComma { ws: 0 }),
                b']' => next(Done { ws: 0 }),
                _ => Self::ws(ws, b, |ws| AfterObject { ws }),
            },
            AfterObjectComma { ws } => match b {
                b'{' => next(ObjectOpen { ws: 0 }),
                _ => Self::ws(ws, b, |ws| AfterObjectComma { ws }),
            },
            // trailing whitespace is unbounded so a finished output never dead-ends
            Done { ws } => is_json_ws(b).then_some(SchemaStep::Next(Done { ws: ws.max(1) })),
        }
    }
}
