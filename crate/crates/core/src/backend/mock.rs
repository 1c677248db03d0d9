use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::policy::{Choice, Runner};
use super::{Backend, BackendError, Constraint, Generation, GenerationRequest, ScriptedPolicy, TraceStep};
use crate::logitmatch::{LogitMatch, MaskResponse};
use crate::tokenmodel::{TokenId, Tokenizer, VocabTrie};

/// Deterministic offline backend. Each example id maps to a scripted policy
/// (or falls back to a default one); decoding follows the policy step by
/// step under the request's mask.
pub struct MockBackend {
    tokenizer: Arc<dyn Tokenizer + Send + Sync>,
    trie: VocabTrie,
    end_token: Option<TokenId>,
    policies: HashMap<String, ScriptedPolicy>,
    default_policy: Option<ScriptedPolicy>,
}

impl fmt::Debug for MockBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MockBackend")
            .field("vocab_size", &self.tokenizer.vocab().size())
            .field("end_token", &self.end_token)
            .field("policies", &self.policies.len())
            .finish()
    }
}

impl MockBackend {
    /// The end token is the vocabulary's first special token, if any.
    pub fn new(tokenizer: Arc<dyn Tokenizer + Send + Sync>) -> Self {
        let vocab = tokenizer.vocab();
        let trie = VocabTrie::new(vocab);
        let end_token = vocab.special_ids().iter().next().copied();
        Self {
            tokenizer,
            trie,
            end_token,
            policies: HashMap::new(),
            default_policy: None,
        }
    }

    pub fn with_policy(mut self, example_id: impl Into<String>, policy: ScriptedPolicy) -> Self {
        self.set_policy(example_id, policy);
        self
    }

    pub fn with_default_policy(mut self, policy: ScriptedPolicy) -> Self {
        self.default_policy = Some(policy);
        self
    }

    pub fn set_policy(&mut self, example_id: impl Into<String>, policy: ScriptedPolicy) {
        self.policies.insert(example_id.into(), policy);
    }

    pub fn tokenizer(&self) -> &Arc<dyn Tokenizer + Send + Sync> {
        &self.tokenizer
    }

    pub fn end_token(&self) -> Option<TokenId> {
        self.end_token
    }

    /// Decodes with an explicit policy.
    pub fn run_policy(&self, policy: &ScriptedPolicy, request: &GenerationRequest) -> Result<Generation, BackendError> {
        let vocab = self.tokenizer.vocab();
        let size = vocab.size();
        policy.validate(size)?;
        let engine: Option<&LogitMatch> = match &request.constraint {
            Constraint::None => None,
            Constraint::LogitMatch(e) => Some(e),
        };
        if engine.is_some_and(|e| e.vocab() != vocab) {
            return Err(BackendError::InvalidRequest(
                "the constraint uses a different vocabulary than the backend".into(),
            ));
        }
        let max_tokens = request.decoding.max_tokens;
        let mut state = engine.map(|e| e.init_state());
        let mut runner = Runner::new(policy, vocab, &self.trie, request.decoding.seed);
        let mut tokens = Vec::new();
        let mut trace = Vec::new();
        let mut truncated = false;
        loop {
            let mask = match (engine, &state) {
                (Some(e), Some(s)) => e.allowed_tokens(s),
                _ => MaskResponse::All,
            };
            let token = match runner.next(&mask)? {
                Choice::Token(t) => t,
                Choice::Done => match self.end_token {
                    Some(end) if mask.allows(end) && tokens.len() < max_tokens => end,
                    _ => break,
                },
            };
            if tokens.len() == max_tokens {
                truncated = true;
                break;
            }
            if !mask.allows(token) {
                return Err(BackendError::ScriptRejected {
                    step: tokens.len(),
                    token,
                });
            }
            trace.push(TraceStep {
                step: tokens.len(),
                mode: state.map(|s| s.mode()),
                allowed_count: mask.count(size),
                chosen_token: token,
            });
            if let (Some(e), Some(s)) = (engine, &mut state) {
                *s = e.advance(s, token).map_err(|_| BackendError::ScriptRejected {
                    step: tokens.len(),
                    token,
                })?;
            }
            tokens.push(token);
            if Some(token) == self.end_token {
                break;
            }
        }
        let text: Vec<TokenId> = tokens.iter().copied().filter(|&t| !vocab.is_special(t)).collect();
        Ok(Generation {
            output_text: String::from_utf8_lossy(&self.tokenizer.decode(&text)).into_owned(),
            token_count: tokens.len(),
            tokens,
            truncated,
            trace,
        })
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn supports_masks(&self) -> bool {
        true
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Generation, BackendError> {
        let policy = self
            .policies
            .get(&request.example_id)
            .or(self.default_policy.as_ref())
            .ok_or_else(|| BackendError::InvalidRequest(format!("no policy for example `{}`", request.example_id)))?;
        self.run_policy(policy, request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("trace step {step}: {reason}")]
pub struct TraceError {
    pub step: usize,
    pub reason: String,
}

/// Replays a trace against `engine` and checks that every chosen token was
/// allowed and that the recorded modes and counts match.
pub fn verify_trace(engine: &LogitMatch, trace: &[TraceStep]) -> Result<(), TraceError> {
    let size = engine.vocab().size();
    let mut state = engine.init_state();
    for (i, step) in trace.iter().enumerate() {
        let fail = |reason: String| TraceError { step: i, reason };
        if step.step != i {
            return Err(fail(format!("recorded as step {}", step.step)));
        }
        if step.mode != Some(state.mode()) {
            return Err(fail(format!("mode {:?}, engine is in {}", step.mode, state.mode())));
        }
        let mask = engine.allowed_tokens(&state);
        if mask.count(size) != step.allowed_count {
            return Err(fail(format!(
                "allowed count {}, engine allows {}",
                step.allowed_count,
                mask.count(size)
            )));
        }
        if !mask.allows(step.chosen_token) {
            return Err(fail(format!("token {} was not allowed", step.chosen_token)));
        }
        state = engine
            .advance(&state, step.chosen_token)
            .map_err(|e| fail(e.to_string()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{generate, DecodingParams};
    use crate::logitmatch::{SchemaKind, VocabIndex};
    use crate::span::{LabeledExample, Span, Task};
    use crate::strategies::{render_canonical, render_prompt, StrategyConfig, StrategyKind};
    use crate::tokenmodel::{make_synthetic_tokenizer, SyntheticTokenizer};

    const TURING: &str = "Turing was born in London.";
    const SAINT: &str = "He went to Saint - Gaudens yesterday .";

    fn tokenizer(texts: &[&str]) -> Arc<SyntheticTokenizer> {
        let corpus: Vec<String> = texts.iter().map(|s| s.to_string()).collect();
        Arc::new(make_synthetic_tokenizer(5, &corpus))
    }

    fn request(
        config: &StrategyConfig,
        example: &LabeledExample,
        constraint: Constraint,
        max_tokens: usize,
    ) -> GenerationRequest {
        GenerationRequest {
            example_id: example.id.clone(),
            strategy: config.tag(),
            prompt: render_prompt(config, example),
            decoding: DecodingParams {
                max_tokens,
                ..DecodingParams::default()
            },
            constraint,
        }
    }

    fn engine(tok: &SyntheticTokenizer, example: &LabeledExample, schema: SchemaKind) -> Arc<LogitMatch> {
        let vocab = Arc::new(VocabIndex::new(tok.vocab().clone()));
        Arc::new(LogitMatch::new(vocab, &example.text, schema, &example.categories).unwrap())
    }

    fn turing() -> LabeledExample {
        LabeledExample::new(
            "t",
            Task::Ner,
            TURING,
            &["PER", "LOC"],
            vec![Span::new(0, 6, "PER"), Span::new(19, 25, "LOC")],
        )
    }

    #[test]
    fn replay_reproduces_output_verbatim() {
        let tok = tokenizer(&[TURING]);
        let ex = turing();
        let config = StrategyConfig::new(StrategyKind::Match, false, Task::Ner).unwrap();
        let out = render_canonical(StrategyKind::Match, &ex);
        let backend =
            MockBackend::new(tok.clone()).with_policy("t", ScriptedPolicy::Replay(tok.encode(out.as_bytes())));
        let (pred, trace) = generate(&backend, &request(&config, &ex, Constraint::None, 500)).unwrap();
        assert_eq!(pred.output_text, out);
        assert!(!pred.truncated);
        assert_eq!(trace.len(), pred.token_count);
        assert!(trace
            .iter()
            .all(|s| s.mode.is_none() && s.allowed_count == tok.vocab().size()));
        assert_eq!(config.parse_prediction(&pred, &ex).spans.len(), 2);
    }

    #[test]
    fn constrained_preference_is_forced_onto_the_input() {
        let tok = tokenizer(&[SAINT]);
        let ex = LabeledExample::new("s", Task::Ner, SAINT, &["LOC"], vec![Span::new(11, 26, "LOC")]);
        let wanted = r#"[{"text": "Saint-Gaudens", "label": "LOC"}]"#;
        let backend = MockBackend::new(tok.clone()).with_default_policy(ScriptedPolicy::PreferText(wanted.into()));
        let free = StrategyConfig::new(StrategyKind::Match, false, Task::Ner).unwrap();
        let (pred, _) = generate(&backend, &request(&free, &ex, Constraint::None, 500)).unwrap();
        assert_eq!(pred.output_text, wanted);
        let parsed = free.parse_prediction(&pred, &ex);
        assert_eq!((parsed.span_content_errors, parsed.spans.len()), (1, 0));

        let lm = StrategyConfig::new(StrategyKind::LogitMatch, false, Task::Ner).unwrap();
        let e = engine(&tok, &ex, SchemaKind::None);
        let (pred, trace) = generate(&backend, &request(&lm, &ex, Constraint::LogitMatch(e.clone()), 500)).unwrap();
        assert_eq!(pred.output_text, r#"[{"text": "Saint - Gaudens", "label": "LOC"}]"#);
        verify_trace(&e, &trace).unwrap();
        let parsed = lm.parse_prediction(&pred, &ex);
        assert_eq!(parsed.span_content_errors, 0);
        assert_eq!(parsed.spans, ex.gold);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let tok = tokenizer(&[TURING]);
        let ex = turing();
        let config = StrategyConfig::new(StrategyKind::LogitMatch, false, Task::Ner).unwrap();
        let target = render_canonical(StrategyKind::Match, &ex);
        let backend = MockBackend::new(tok.clone()).with_default_policy(ScriptedPolicy::PreferText(target));
        let e = engine(&tok, &ex, SchemaKind::None);
        let (pred, trace) = generate(&backend, &request(&config, &ex, Constraint::LogitMatch(e), 3)).unwrap();
        assert!(pred.truncated);
        assert_eq!(pred.token_count, 3);
        assert_eq!(trace.len(), 3);
        let parsed = config.parse_prediction(&pred, &ex);
        assert_eq!(parsed.parse_error, Some(crate::span::ParseError::Truncated));
    }

    #[test]
    fn end_token_closes_free_output() {
        let tok = tokenizer(&[TURING]);
        let ex = turing();
        let config = StrategyConfig::new(StrategyKind::LogitMatchOcc, true, Task::Ner).unwrap();
        let target = render_canonical(StrategyKind::MatchOcc, &ex);
        let backend = MockBackend::new(tok.clone()).with_default_policy(ScriptedPolicy::PreferText(target.clone()));
        let e = engine(&tok, &ex, SchemaKind::WithOccurrence);
        let g = backend
            .run_policy(
                &ScriptedPolicy::PreferText(target.clone()),
                &request(&config, &ex, Constraint::LogitMatch(e.clone()), 500),
            )
            .unwrap();
        assert_eq!(g.output_text, target);
        assert_eq!(g.tokens.last(), Some(&tok.end_token()));
        verify_trace(&e, &g.trace).unwrap();
        let mut forged = g.trace.clone();
        forged[1].allowed_count += 1;
        assert_eq!(verify_trace(&e, &forged).unwrap_err().step, 1);
    }

    #[test]
    fn replay_of_forbidden_token_is_rejected() {
        let tok = tokenizer(&[TURING]);
        let ex = turing();
        let config = StrategyConfig::new(StrategyKind::LogitMatch, false, Task::Ner).unwrap();
        let script = tok.encode(br#"[{"text": "Paris"#);
        let backend = MockBackend::new(tok.clone()).with_default_policy(ScriptedPolicy::Replay(script));
        let e = engine(&tok, &ex, SchemaKind::None);
        let err = generate(&backend, &request(&config, &ex, Constraint::LogitMatch(e), 50)).unwrap_err();
        assert!(matches!(err, BackendError::ScriptRejected { .. }));
        let none = MockBackend::new(tok);
        assert!(matches!(
            generate(&none, &request(&config, &ex, Constraint::None, 50)),
            Err(BackendError::InvalidRequest(_))
        ));
    }

    #[test]
    fn ranked_takes_first_allowed() {
        let tok = tokenizer(&[TURING]);
        let ex = turing();
        let config = StrategyConfig::new(StrategyKind::LogitMatch, false, Task::Ner).unwrap();
        let opening = tok.encode(br#"[{"text": ""#);
        let mut steps: Vec<Vec<TokenId>> = opening.iter().map(|&t| vec![t]).collect();
        steps.push(vec![b'P' as TokenId, b'L' as TokenId]);
        let backend = MockBackend::new(tok.clone()).with_default_policy(ScriptedPolicy::Ranked(steps));
        let e = engine(&tok, &ex, SchemaKind::None);
        let (pred, _) = generate(&backend, &request(&config, &ex, Constraint::LogitMatch(e), 50)).unwrap();
        assert_eq!(pred.output_text, r#"[{"text": "L"#);
    }

    #[test]
    fn adversarial_runs_are_deterministic_and_compliant() {
        let tok = tokenizer(&[SAINT, TURING]);
        let ex = LabeledExample::new("s", Task::Ner, "a \"quoted\" \\ naïve Saint - Gaudens", &["X"], vec![]);
        let config = StrategyConfig::new(StrategyKind::LogitMatch, false, Task::Ner).unwrap();
        let policy = ScriptedPolicy::Adversarial {
            target: r#"[{"text": "quoted\" \\ naïve", "label": "X"}, {"text": "Saint-Gaudens", "label": "X"}]"#.into(),
            seed: 9,
            rate: 0.3,
        };
        let backend = MockBackend::new(tok.clone()).with_default_policy(policy);
        let e = engine(&tok, &ex, SchemaKind::None);
        let req = request(&config, &ex, Constraint::LogitMatch(e.clone()), 200);
        let a = generate(&backend, &req).unwrap();
        let b = generate(&backend, &req).unwrap();
        assert_eq!(a, b);
        verify_trace(&e, &a.1).unwrap();
        assert_eq!(
            config.parse_prediction(&a.0, &ex).span_content_errors,
            0,
            "{}",
            a.0.output_text
        );
    }
}
