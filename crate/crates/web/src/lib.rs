//! Browser demo: score spans, parse model outputs and step the LogitMatch
//! constraint over a typed output prefix.
//!
//! Each operation takes and returns JSON strings. The `*_json` functions hold
//! the logic and run natively; the `#[wasm_bindgen]` wrappers only turn
//! errors into JS exceptions.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use wasm_bindgen::prelude::*;

use spanlab::eval::{f1, span_overlap_precision, span_overlap_recall};
use spanlab::logitmatch::{escape_json_str, LogitMatch, MaskResponse, SchemaKind, VocabIndex};
use spanlab::span::span_text;
use spanlab::strategies::StrategyConfig;
use spanlab::tokenmodel::{GreedyTokenizer, TokenVocab, Tokenizer};
use spanlab::{LabeledExample, Span, Task};

/// Allowed tokens listed in a step response, at most.
const SAMPLE: usize = 40;

#[derive(Deserialize)]
struct EvalInput {
    gold: Vec<Span>,
    pred: Vec<Span>,
}

/// Hard and soft precision, recall and F1 of `pred` against `gold` for one
/// text. Input: `{"gold": [spans], "pred": [spans]}`.
pub fn evaluate_json(input: &str) -> Result<String, String> {
    let EvalInput { gold, pred } = serde_json::from_str(input).map_err(|e| format!("bad input: {e}"))?;
    let prf = |hard| {
        let p = span_overlap_precision(&gold, &pred, hard);
        let r = span_overlap_recall(&gold, &pred, hard);
        json!({"precision": p, "recall": r, "f1": f1(p, r)})
    };
    Ok(json!({"hard": prf(true), "soft": prf(false)}).to_string())
}

#[derive(Deserialize)]
struct ParseInput {
    strategy: String,
    #[serde(default)]
    task: Option<Task>,
    text: String,
    categories: Vec<String>,
    output: String,
}

/// Parses a model output under a strategy. Input: `{"strategy", "task"?,
/// "text", "categories", "output"}`.
pub fn parse_json(input: &str) -> Result<String, String> {
    let req: ParseInput = serde_json::from_str(input).map_err(|e| format!("bad input: {e}"))?;
    let task = req.task.unwrap_or(Task::Custom);
    let config = StrategyConfig::parse(&req.strategy, task).map_err(|e| e.to_string())?;
    let categories: Vec<&str> = req.categories.iter().map(String::as_str).collect();
    let example = LabeledExample::new("demo", task, req.text.as_str(), &categories, Vec::new());
    let parsed = config.parse_output(&req.output, &example);
    let spans: Vec<_> = parsed
        .spans
        .iter()
        .map(|s| json!({"start": s.start, "end": s.end, "label": s.label, "text": span_text(s, &req.text)}))
        .collect();
    Ok(json!({
        "spans": spans,
        "parse_error": parsed.parse_error,
        "items": parsed.items,
        "span_content_errors": parsed.span_content_errors,
        "category_errors": parsed.category_errors,
    })
    .to_string())
}

// single bytes, the JSON frame, and each input word in the shapes a BPE
// vocabulary tends to have: bare, space-led and quote-fused
fn demo_vocab(text: &str, categories: &[String]) -> TokenVocab {
    let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    let mut extra: BTreeSet<Vec<u8>> = BTreeSet::new();
    for frame in [
        "[{\"text\": \"",
        "{\"text\": \"",
        "\", \"label\": \"",
        "\"}",
        "\"}, ",
        "\"}]",
        ", \"occurrence\": ",
        "}, ",
        "}]",
    ] {
        extra.insert(frame.as_bytes().to_vec());
    }
    for c in categories {
        extra.insert(escape_json_str(c).into_bytes());
    }
    for word in escape_json_str(text).split(' ').filter(|w| !w.is_empty()) {
        for shape in [
            word.to_string(),
            format!(" {word}"),
            format!("\"{word}"),
            format!("{word}\""),
        ] {
            extra.insert(shape.into_bytes());
        }
    }
    tokens.extend(extra.into_iter().filter(|t| t.len() > 1));
    TokenVocab::new(tokens, []).expect("no special tokens")
}

#[derive(Deserialize)]
struct StepInput {
    text: String,
    categories: Vec<String>,
    /// `none`, `plain` or `occurrence`.
    #[serde(default)]
    schema: Option<String>,
    prefix: String,
}

#[derive(Serialize)]
struct StepOutput {
    /// Prefix bytes the constraint accepted.
    accepted: usize,
    /// Byte offset of the first refused byte, if any.
    refused_at: Option<usize>,
    tokens: Vec<String>,
    mode: String,
    /// `(start, copied)` anchors in the escaped input.
    candidates: Vec<(usize, usize)>,
    allowed_count: usize,
    vocab_size: usize,
    allowed_sample: Vec<String>,
    finished: bool,
}

/// Feeds `prefix` to a LogitMatch engine over a small demo vocabulary and
/// reports where decoding stands. Tokens are taken greedily; a refused token
/// is retried byte by byte so the exact refused byte can be shown.
pub fn step_json(input: &str) -> Result<String, String> {
    let req: StepInput = serde_json::from_str(input).map_err(|e| format!("bad input: {e}"))?;
    let schema = match req.schema.as_deref().unwrap_or("none") {
        "none" => SchemaKind::None,
        "plain" => SchemaKind::Plain,
        "occurrence" => SchemaKind::WithOccurrence,
        other => return Err(format!("unknown schema `{other}`")),
    };
    let vocab = demo_vocab(&req.text, &req.categories);
    let tokenizer = GreedyTokenizer::new(vocab.clone());
    let index = Arc::new(VocabIndex::new(vocab));
    let engine = LogitMatch::new(index, &req.text, schema, &req.categories).map_err(|e| e.to_string())?;
    let vocab = engine.vocab();

    let mut state = engine.init_state();
    let mut tokens = Vec::new();
    let mut accepted = 0;
    let mut refused_at = None;
    'feed: for id in tokenizer.encode(req.prefix.as_bytes()) {
        if let Ok(next) = engine.advance(&state, id) {
            state = next;
            accepted += vocab.bytes(id).len();
            tokens.push(String::from_utf8_lossy(vocab.bytes(id)).into_owned());
            continue;
        }
        for &b in vocab.bytes(id) {
            let single = vocab.single_byte_token(b).expect("byte vocabulary");
            match engine.advance(&state, single) {
                Ok(next) => {
                    state = next;
                    accepted += 1;
                    tokens.push(String::from_utf8_lossy(&[b]).into_owned());
                }
                Err(_) => {
                    refused_at = Some(accepted);
                    break 'feed;
                }
            }
        }
    }
    let mask = engine.allowed_tokens(&state);
    let allowed_sample = match &mask {
        MaskResponse::All => Vec::new(),
        MaskResponse::Allowed(ids) => {
            let mut sample: Vec<&[u8]> = ids.iter().map(|&id| vocab.bytes(id)).collect();
            // longer tokens first: they show what the engine expects
            sample.sort_by_key(|t| std::cmp::Reverse(t.len()));
            sample
                .into_iter()
                .take(SAMPLE)
                .map(|t| String::from_utf8_lossy(t).into_owned())
                .collect()
        }
    };
    let out = StepOutput {
        accepted,
        refused_at,
        tokens,
        mode: state.mode().to_string(),
        candidates: engine.candidates(&state),
        allowed_count: mask.count(vocab.size()),
        vocab_size: vocab.size(),
        allowed_sample,
        finished: state.is_finished(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

fn to_js(result: Result<String, String>) -> Result<String, JsError> {
    result.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn evaluate(input: &str) -> Result<String, JsError> {
    to_js(evaluate_json(input))
}

#[wasm_bindgen]
pub fn parse(input: &str) -> Result<String, JsError> {
    to_js(parse_json(input))
}

#[wasm_bindgen]
pub fn step(input: &str) -> Result<String, JsError> {
    to_js(step_json(input))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn call(f: fn(&str) -> Result<String, String>, input: Value) -> Value {
        serde_json::from_str(&f(&input.to_string()).unwrap()).unwrap()
    }

    #[test]
    fn evaluates_spans() {
        let out = call(
            evaluate_json,
            json!({"gold": [{"start": 0, "end": 10, "label": "A"}],
                   "pred": [{"start": 0, "end": 5, "label": "A"}, {"start": 5, "end": 15, "label": "B"}]}),
        );
        assert_eq!(out["hard"]["precision"], 0.5);
        assert_eq!(out["hard"]["recall"], 0.5);
        assert_eq!(out["soft"]["precision"], 0.75);
        assert_eq!(out["soft"]["recall"], 1.0);
        assert!(evaluate_json("{}").is_err());
    }

    #[test]
    fn parses_outputs() {
        let out = call(
            parse_json,
            json!({"strategy": "match", "task": "ner", "text": "Turing was born in London.",
                   "categories": ["PER", "LOC"],
                   "output": "[{\"text\": \"Turing\", \"label\": \"PER\"}, {\"text\": \"Londres\", \"label\": \"LOC\"}]"}),
        );
        assert_eq!(out["spans"][0]["text"], "Turing");
        assert_eq!(out["spans"][0]["end"], 6);
        assert_eq!(out["span_content_errors"], 1);
        assert_eq!(out["parse_error"], Value::Null);
        assert!(
            parse_json(&json!({"strategy": "bogus", "text": "a", "categories": ["A"], "output": ""}).to_string())
                .is_err()
        );
    }

    #[test]
    fn steps_the_constraint() {
        let base = json!({"text": "He went to Saint - Gaudens .", "categories": ["LOC"], "schema": "plain"});
        let with = |prefix: &str| {
            let mut v = base.clone();
            v["prefix"] = json!(prefix);
            call(step_json, v)
        };
        let out = with("[{\"text\": \"Saint");
        assert_eq!(out["mode"], "COPY");
        assert_eq!(out["refused_at"], Value::Null);
        assert_eq!(out["candidates"], json!([[11, 5]]));
        let sample: Vec<&str> = out["allowed_sample"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap())
            .collect();
        assert!(sample.contains(&" -"));
        assert!(!sample.contains(&"-"));

        let out = with("[{\"text\": \"Saint-Gaudens\"");
        assert_eq!(out["refused_at"], 16);
        assert_eq!(out["mode"], "COPY");

        let out = with("[{\"text\": \"Saint - Gaudens\", \"label\": \"LOC\"}]");
        assert_eq!(out["finished"], true);
        assert_eq!(out["refused_at"], Value::Null);

        let out = call(
            step_json,
            json!({"text": "a", "categories": ["X"], "prefix": "anything"}),
        );
        assert_eq!(out["mode"], "DEFAULT");
        assert_eq!(out["allowed_count"], out["vocab_size"]);
    }
}
