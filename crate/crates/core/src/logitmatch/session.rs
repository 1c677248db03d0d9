//! Stepwise mask service: the contract a serving stack talks to.
//!
//! Each decode sequence is a session keyed by a caller-chosen id. A step
//! carries the token sampled at the previous step (none on the first call)
//! and returns the mask for the next one.

use std::collections::HashMap;
use std::sync::Arc;

use super::{AdvanceError, DecodeState, LogitMatch, MaskResponse};
use crate::tokenmodel::TokenId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("no live session with id {0}")]
    UnknownSession(u64),
    #[error("session {0} already exists")]
    DuplicateSession(u64),
    #[error(transparent)]
    Advance(#[from] AdvanceError),
}

#[derive(Debug)]
struct Session {
    engine: Arc<LogitMatch>,
    state: DecodeState,
}

/// Table of live decode sequences.
#[derive(Debug, Default)]
pub struct MaskService {
    sessions: HashMap<u64, Session>,
}

impl MaskService {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open(&mut self, seq_id: u64, engine: Arc<LogitMatch>) -> Result<(), SessionError> {
        if self.sessions.contains_key(&seq_id) {
            return Err(SessionError::DuplicateSession(seq_id));
        }
        let state = engine.init_state();
        self.sessions.insert(seq_id, Session { engine, state });
        Ok(())
    }

    /// Advances by `last_token` (if any) and returns the next mask. On error
    /// the session state is left unchanged.
    pub fn step(&mut self, seq_id: u64, last_token: Option<TokenId>) -> Result<MaskResponse, SessionError> {
        let session = self
            .sessions
            .get_mut(&seq_id)
            .ok_or(SessionError::UnknownSession(seq_id))?;
        if let Some(token) = last_token {
            session.state = session.engine.advance(&session.state, token)?;
        }
        Ok(session.engine.allowed_tokens(&session.state))
    }

    pub fn state(&self, seq_id: u64) -> Option<DecodeState> {
        self.sessions.get(&seq_id).map(|s| s.state)
    }

    pub fn close(&mut self, seq_id: u64) -> Result<DecodeState, SessionError> {
        self.sessions
            .remove(&seq_id)
            .map(|s| s.state)
            .ok_or(SessionError::UnknownSession(seq_id))
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }
}
