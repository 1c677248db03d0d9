//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p spanlab-cli --test acceptance`.

use std::collections::BTreeSet;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use spanlab::backend::{
    generate, verify_trace, Constraint, DecodingParams, GenerationRequest, MockBackend, ScriptedPolicy,
};
use spanlab::cpl::{generate_cpl_dataset, spec_of, CPL_LABEL};
use spanlab::dataset::to_jsonl;
use spanlab::eval::{evaluate_corpus, f1, span_overlap_precision, span_overlap_recall};
use spanlab::logitmatch::{escape_json_str, LogitMatch, MaskResponse, Mode, SchemaKind, VocabIndex};
use spanlab::spanmatch::occurrences;
use spanlab::strategies::{render_canonical, render_prompt, StrategyConfig, StrategyKind};
use spanlab::tokenmodel::{
    make_synthetic_tokenizer, make_synthetic_tokenizer_with, SyntheticOptions, SyntheticTokenizer, TokenId, TokenVocab,
    Tokenizer,
};
use spanlab::{LabeledExample, ParseResult, RawPrediction, Span, Task};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const TURING: &str = "Turing was born in London.";
const SAINT: &str = "He went to Saint - Gaudens yesterday .";

fn random_input(rng: &mut ChaCha8Rng, min: usize, max: usize) -> String {
    const SPECIAL: &[char] = &[
        '"', '\\', 'é', 'ß', '中', '😀', '\n', '\t', '{', '}', ':', ',', '.', '/',
    ];
    let n = rng.gen_range(min..=max);
    (0..n)
        .map(|_| match rng.gen_range(0..10) {
            0..=5 => rng.gen_range(b'a'..=b'h') as char,
            6 | 7 => ' ',
            _ => *SPECIAL.choose(rng).unwrap(),
        })
        .collect()
}

fn tokenizer_pool(rng: &mut ChaCha8Rng, size: usize) -> Vec<(Arc<SyntheticTokenizer>, Arc<VocabIndex>)> {
    (0..size)
        .map(|_| {
            let corpus: Vec<String> = (0..6).map(|_| random_input(rng, 80, 300)).collect();
            let options = SyntheticOptions {
                merges: rng.gen_range(40..300),
                noise: rng.gen_range(0.0..0.5),
                max_token_len: rng.gen_range(3..14),
                json_contexts: rng.gen_bool(0.8),
            };
            let tok = Arc::new(make_synthetic_tokenizer_with(rng.gen(), &corpus, &options));
            let index = Arc::new(VocabIndex::new(tok.vocab().clone()));
            (tok, index)
        })
        .collect()
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

// A model preference: each gold span's text, sometimes slightly wrong.
fn preferred_output(rng: &mut ChaCha8Rng, example: &LabeledExample, occurrence: bool) -> String {
    let items: Vec<String> = example
        .gold
        .iter()
        .map(|span| {
            let chars: Vec<char> = example.text.chars().collect();
            let mut text: String = chars[span.start..span.end].iter().collect();
            if rng.gen_bool(0.5) {
                let at = text
                    .char_indices()
                    .map(|(i, _)| i)
                    .nth(rng.gen_range(0..text.chars().count()))
                    .unwrap();
                match rng.gen_range(0..4) {
                    0 => text.insert(at, ' '),
                    1 => text.insert(at, 'Q'),
                    2 => text.push('"'),
                    _ => text.insert_str(at, "\\x"),
                }
            }
            let mut item = format!(
                "{{\"text\": \"{}\", \"label\": \"{}\"",
                escape_json_str(&text),
                span.label
            );
            if occurrence {
                let n = occurrences(&text, &example.text)
                    .iter()
                    .position(|&p| p == span.start)
                    .map_or(1, |i| i + 1);
                item.push_str(&format!(", \"occurrence\": {n}"));
            }
            item.push('}');
            item
        })
        .collect();
    format!("[{}]", items.join(", "))
}

fn random_gold(rng: &mut ChaCha8Rng, text: &str, labels: &[&str]) -> Vec<Span> {
    let len = text.chars().count();
    (0..rng.gen_range(1..=5))
        .map(|_| {
            let start = rng.gen_range(0..len);
            let end = (start + rng.gen_range(1..=20)).min(len);
            Span::new(start, end, *labels.choose(rng).unwrap())
        })
        .collect()
}

fn completed_text_fields(output: &str) -> Vec<Result<String, String>> {
    let re = Regex::new(r#""text"[ \t\n\r]*:[ \t\n\r]*"((?:[^"\\]|\\.)*)""#).unwrap();
    re.captures_iter(output)
        .map(|caps| {
            let literal = format!("\"{}\"", &caps[1]);
            serde_json::from_str::<String>(&literal).map_err(|e| format!("{literal}: {e}"))
        })
        .collect()
}

fn substring_guarantee() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let pool = tokenizer_pool(&mut rng, 16);
    let tags = ["logitmatch", "logitmatch-occ", "logitmatch-s", "logitmatch-occ-s"];
    let (mut fields, mut items, mut content_errors) = (0, 0, 0);
    let (mut contrast_items, mut contrast_errors) = (0, 0);
    for trial in 0..1000 {
        let input = random_input(&mut rng, 20, 500);
        let gold = random_gold(&mut rng, &input, &["A", "B"]);
        let example = LabeledExample::new(format!("t{trial}"), Task::Ner, input.clone(), &["A", "B"], gold);
        let config = StrategyConfig::parse(tags[trial % tags.len()], Task::Ner).map_err(|e| e.to_string())?;
        let target = preferred_output(&mut rng, &example, config.kind.uses_occurrence());
        let (tok, index) = pool.choose(&mut rng).unwrap();
        let engine = Arc::new(
            LogitMatch::new(index.clone(), &input, config.schema_kind(), &example.categories)
                .map_err(|e| e.to_string())?,
        );
        let policy = ScriptedPolicy::Adversarial {
            target: target.clone(),
            seed: rng.gen(),
            rate: rng.gen_range(0.05..0.6),
        };
        let backend = MockBackend::new(tok.clone()).with_default_policy(policy);
        let (pred, trace) = generate(
            &backend,
            &request(&config, &example, Constraint::LogitMatch(engine.clone()), 3000),
        )
        .map_err(|e| format!("trial {trial}: {e}"))?;
        verify_trace(&engine, &trace).map_err(|e| format!("trial {trial}: trace: {e}"))?;
        for field in completed_text_fields(&pred.output_text) {
            let value = field.map_err(|e| format!("trial {trial}: undecodable text field {e}"))?;
            ensure!(
                !value.is_empty() && input.contains(&value),
                "trial {trial}: {value:?} is not a substring of {input:?}"
            );
            fields += 1;
        }
        let parsed = config.parse_prediction(&pred, &example);
        items += parsed.items;
        content_errors += parsed.span_content_errors;
        ensure!(
            parsed.span_content_errors == 0,
            "trial {trial}: span content error in {:?}",
            pred.output_text
        );

        // the same preference without a constraint
        let free = StrategyConfig::new(
            if config.kind.uses_occurrence() {
                StrategyKind::MatchOcc
            } else {
                StrategyKind::Match
            },
            false,
            Task::Ner,
        )
        .map_err(|e| e.to_string())?;
        let backend = MockBackend::new(tok.clone()).with_default_policy(ScriptedPolicy::PreferText(target));
        let (pred, _) =
            generate(&backend, &request(&free, &example, Constraint::None, 3000)).map_err(|e| e.to_string())?;
        let parsed = free.parse_prediction(&pred, &example);
        contrast_items += parsed.items;
        contrast_errors += parsed.span_content_errors;
    }
    let elapsed = started.elapsed();
    ensure!(fields > 1000, "only {fields} completed text fields");
    ensure!(contrast_errors > 0, "unconstrained contrast produced no content errors");
    ensure!(elapsed <= Duration::from_secs(120), "took {elapsed:.1?}");
    Ok(format!(
        "1000 trials, {fields} text fields all substrings, content errors {content_errors}/{items}; \
         unconstrained {contrast_errors}/{contrast_items}; {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn vocab_of(tokens: &[&[u8]]) -> Arc<VocabIndex> {
    let tokens = tokens.iter().map(|t| t.to_vec()).collect();
    Arc::new(VocabIndex::new(TokenVocab::new(tokens, []).unwrap()))
}

fn allowed_strings(engine: &LogitMatch, mask: &MaskResponse) -> Vec<String> {
    let mut out: Vec<String> = mask
        .to_ids(engine.vocab().size())
        .into_iter()
        .map(|id| String::from_utf8_lossy(engine.vocab().bytes(id)).into_owned())
        .collect();
    out.sort();
    out
}

fn token_fixtures() -> Outcome {
    // split path: "Hel" + "lo" + "." then the closing quote
    let vocab = vocab_of(&[
        b"Hel",
        b"Hello",
        b".",
        b"xyz",
        b"lo",
        b"{\"text\": \"",
        b"\"",
        b".\"",
        b"\"}",
    ]);
    let engine = LogitMatch::new_unchecked(vocab, "Hello.", SchemaKind::None, &["X"]).map_err(|e| e.to_string())?;
    let s0 = engine.init_state();
    ensure!(
        engine.allowed_tokens(&s0) == MaskResponse::All,
        "initial mask is not ALL"
    );
    let steps: [(TokenId, Mode, Vec<TokenId>); 5] = [
        (5, Mode::Select, vec![0, 1, 2, 4, 7]),
        (0, Mode::Copy, vec![4, 6, 8]),
        (4, Mode::Copy, vec![2, 6, 7, 8]),
        (2, Mode::Copy, vec![6, 8]),
        (6, Mode::Default, vec![]),
    ];
    let mut state = s0;
    for (token, mode, expected) in steps {
        ensure!(
            engine.allowed_tokens(&state).allows(token),
            "token {token} not allowed in {:?}",
            state.mode()
        );
        state = engine.advance(&state, token).map_err(|e| e.to_string())?;
        ensure!(
            state.mode() == mode,
            "after token {token}: {:?} instead of {mode:?}",
            state.mode()
        );
        if mode != Mode::Default {
            ensure!(
                engine.allowed_tokens(&state) == MaskResponse::Allowed(expected.clone()),
                "after token {token}: mask {:?}, expected {expected:?}",
                engine.allowed_tokens(&state)
            );
        }
    }
    ensure!(engine.candidates(&state).is_empty(), "candidates left after closing");

    // fused opening quote
    let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    for t in [
        &b"{\"text\": "[..],
        b"\"London",
        b"\"Lon",
        b"don",
        b"d",
        b"don\"",
        b"don\"},",
        b"don\",",
        b"dan",
        b"Paris",
    ] {
        tokens.push(t.to_vec());
    }
    let refs: Vec<&[u8]> = tokens.iter().map(Vec::as_slice).collect();
    let vocab = vocab_of(&refs);
    let id = |bytes: &[u8]| refs.iter().rposition(|t| *t == bytes).unwrap() as TokenId;
    let engine = LogitMatch::new(vocab, TURING, SchemaKind::None, &["LOC"]).map_err(|e| e.to_string())?;
    let before = engine
        .advance(&engine.init_state(), id(b"{\"text\": "))
        .map_err(|e| e.to_string())?;
    ensure!(
        engine.allowed_tokens(&before).allows(id(b"\"London")),
        "fused token refused"
    );
    let london = engine.advance(&before, id(b"\"London")).map_err(|e| e.to_string())?;
    ensure!(
        london.mode() == Mode::Copy && engine.candidates(&london) == vec![(19, 6)],
        "\"London leads to {:?} {:?}",
        london.mode(),
        engine.candidates(&london)
    );
    let lon = engine.advance(&before, id(b"\"Lon")).map_err(|e| e.to_string())?;
    ensure!(
        engine.candidates(&lon) == vec![(19, 3)],
        "\"Lon candidates {:?}",
        engine.candidates(&lon)
    );
    let got = allowed_strings(&engine, &engine.allowed_tokens(&lon));
    let expected = ["\"", "\"Lon", "\"London", "d", "d", "don", "don\"", "don\",", "don\"},"];
    ensure!(got == expected, "mask after \"Lon is {got:?}");
    let closed = engine.advance(&lon, id(b"don\"},")).map_err(|e| e.to_string())?;
    ensure!(
        closed.mode() == Mode::Default,
        "fused closing token leaves {:?}",
        closed.mode()
    );
    Ok("split path and fused quote masks match exactly".into())
}

// brute force over character sets; zero-length targets test their point
fn oracle_side(targets: &[Span], others: &[Span], hard: bool) -> f64 {
    targets
        .iter()
        .map(|t| {
            let covers: Vec<&Span> = others.iter().filter(|o| !hard || o.label == t.label).collect();
            if t.start == t.end {
                return if covers.iter().any(|o| o.start <= t.start && t.start <= o.end) {
                    1.0
                } else {
                    0.0
                };
            }
            let covered: BTreeSet<usize> = covers.iter().flat_map(|o| o.start..o.end).collect();
            (t.start..t.end).filter(|c| covered.contains(c)).count() as f64 / (t.end - t.start) as f64
        })
        .sum()
}

fn oracle_prf(gold: &[Span], pred: &[Span], hard: bool) -> (f64, f64, f64) {
    let p = if pred.is_empty() {
        if gold.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        oracle_side(pred, gold, hard) / pred.len() as f64
    };
    let r = if gold.is_empty() {
        1.0
    } else {
        oracle_side(gold, pred, hard) / gold.len() as f64
    };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spans = |rng: &mut ChaCha8Rng| -> Vec<Span> {
        (0..rng.gen_range(0..6))
            .map(|_| {
                let start = rng.gen_range(0..40);
                let end = if rng.gen_bool(0.15) {
                    start
                } else {
                    rng.gen_range(start + 1..=45)
                };
                Span::new(start, end, ["A", "B"][rng.gen_range(0..2)])
            })
            .collect()
    };
    for i in 0..500 {
        let (gold, pred) = (spans(&mut rng), spans(&mut rng));
        let example = LabeledExample::new(i.to_string(), Task::Gec, "x".repeat(50), &["A", "B"], gold.clone());
        let parsed = ParseResult {
            items: pred.len(),
            spans: pred.clone(),
            ..ParseResult::default()
        };
        let report = evaluate_corpus(&[(example, parsed)]).map_err(|e| e.to_string())?;
        let mut got = Vec::new();
        for (hard, prf) in [(true, report.hard), (false, report.soft)] {
            let (p, r, f) = oracle_prf(&gold, &pred, hard);
            let direct_p = span_overlap_precision(&gold, &pred, hard);
            let direct_r = span_overlap_recall(&gold, &pred, hard);
            for (name, a, b) in [
                ("P", prf.precision, p),
                ("R", prf.recall, r),
                ("F1", prf.f1, f),
                ("direct P", direct_p, p),
                ("direct R", direct_r, r),
                ("direct F1", f1(direct_p, direct_r), f),
            ] {
                ensure!(
                    (a - b).abs() < 1e-9,
                    "instance {i} hard={hard} {name}: {a} vs oracle {b}"
                );
            }
            got.push(prf);
        }
        let (hard, soft) = (got[0], got[1]);
        ensure!(
            soft.precision >= hard.precision - 1e-12
                && soft.recall >= hard.recall - 1e-12
                && soft.f1 >= hard.f1 - 1e-12,
            "instance {i}: soft below hard"
        );
    }
    Ok("500 instances agree with the character-set oracle; soft >= hard".into())
}

// word-aligned, non-overlapping spans; GEC examples get some insertion points
fn round_trip_example(rng: &mut ChaCha8Rng, id: usize) -> LabeledExample {
    const WORDS: &[&str] = &[
        "alpha",
        "beta",
        "gamma",
        "délka",
        "naïve",
        "\"quoted\"",
        "back\\slash",
        "x",
        "Straße",
        "中文",
        "end.",
    ];
    let n = rng.gen_range(3..25);
    let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    let text = words.join(" ");
    let mut starts = Vec::new();
    let mut at = 0;
    for w in &words {
        starts.push(at);
        at += w.chars().count() + 1;
    }
    let word_end = |k: usize| starts[k] + words[k].chars().count();
    let gec = rng.gen_bool(0.4);
    let (task, labels): (Task, &[&str]) = if gec {
        (Task::Gec, &["R", "U", "M"])
    } else {
        (Task::Ner, &["PER", "LOC", "ORG"])
    };
    let mut gold = Vec::new();
    let mut k = 0;
    while k < n {
        if rng.gen_bool(0.3) {
            if gec && rng.gen_bool(0.3) {
                // an insertion before word k, which anchors it
                gold.push(Span::new(starts[k], starts[k], "M"));
                k += 1;
            } else {
                let last = (k + rng.gen_range(0..3)).min(n - 1);
                let label = labels[rng.gen_range(0..labels.len() - usize::from(gec))];
                gold.push(Span::new(starts[k], word_end(last), label));
                k = last + 1;
            }
        }
        k += 1;
    }
    LabeledExample::new(format!("rt{id}"), task, text, labels, gold)
}

fn sorted(mut spans: Vec<Span>) -> Vec<Span> {
    spans.sort_by(|a, b| (a.start, a.end, &a.label).cmp(&(b.start, b.end, &b.label)));
    spans
}

fn round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut lines = Vec::new();
    for kind in StrategyKind::ALL {
        let mut pairs = Vec::new();
        let mut skipped = 0;
        for i in 0..200 {
            let example = round_trip_example(&mut rng, i);
            let plain = matches!(kind, StrategyKind::Match | StrategyKind::LogitMatch);
            let chars: Vec<char> = example.text.chars().collect();
            let unique = example.gold.iter().all(|s| {
                let end = if s.start == s.end {
                    spanlab::strategies::gec_anchor_end(&example.text, s.start)
                } else {
                    s.end
                };
                let text: String = chars[s.start..end].iter().collect();
                occurrences(&text, &example.text).len() == 1
            });
            if plain && !unique {
                skipped += 1;
                continue;
            }
            let config = StrategyConfig::new(kind, false, example.task).map_err(|e| e.to_string())?;
            let output = render_canonical(kind, &example);
            let parsed = config.parse_output(&output, &example);
            ensure!(
                sorted(parsed.spans.clone()) == sorted(example.gold.clone()),
                "{kind}: {output:?} on {:?} parsed to {:?}, gold {:?}",
                example.text,
                parsed.spans,
                example.gold
            );
            ensure!(
                parsed.parse_error.is_none() && parsed.span_content_errors == 0,
                "{kind}: errors on {output:?}"
            );
            pairs.push((example, parsed));
        }
        let report = evaluate_corpus(&pairs).map_err(|e| e.to_string())?;
        ensure!(
            report.hard.f1 == 1.0 && report.soft.f1 == 1.0,
            "{kind}: F1 {}",
            report.hard.f1
        );
        lines.push(if skipped > 0 {
            format!("{kind} {} (+{skipped} repeated)", pairs.len())
        } else {
            format!("{kind} {}", pairs.len())
        });
    }
    Ok(format!("F1 1.0 for {}", lines.join(", ")))
}

fn turing_spans() -> Vec<Span> {
    vec![Span::new(0, 6, "PER"), Span::new(19, 25, "LOC")]
}

fn replay(
    tok: &Arc<SyntheticTokenizer>,
    tag: &str,
    example: &LabeledExample,
    output: &str,
) -> Result<(RawPrediction, ParseResult), String> {
    let config = StrategyConfig::parse(tag, example.task).map_err(|e| e.to_string())?;
    let index = Arc::new(VocabIndex::new(tok.vocab().clone()));
    let constraint = if config.kind.is_logitmatch() {
        Constraint::LogitMatch(Arc::new(
            LogitMatch::new(index, &example.text, config.schema_kind(), &example.categories)
                .map_err(|e| e.to_string())?,
        ))
    } else if config.structured {
        Constraint::LogitMatch(Arc::new(
            LogitMatch::schema_only(index, &example.categories, config.kind.uses_occurrence())
                .map_err(|e| e.to_string())?,
        ))
    } else {
        Constraint::None
    };
    let backend =
        MockBackend::new(tok.clone()).with_default_policy(ScriptedPolicy::Replay(tok.encode(output.as_bytes())));
    let (pred, _) =
        generate(&backend, &request(&config, example, constraint, 500)).map_err(|e| format!("{tag}: {e}"))?;
    let parsed = config.parse_prediction(&pred, example);
    Ok((pred, parsed))
}

fn worked_examples() -> Outcome {
    let tok = Arc::new(make_synthetic_tokenizer(1, &[TURING.to_string(), SAINT.to_string()]));
    let turing = LabeledExample::new("turing", Task::Ner, TURING, &["PER", "ORG", "LOC"], turing_spans());
    let xml = r#"<entity type="PER">Turing</entity> was born in <entity type="LOC">London</entity>."#;
    let index = "[0:6] = PER\n[19:25] = LOC";
    let json = r#"[{"text": "Turing", "label": "PER"}, {"text": "London", "label": "LOC"}]"#;
    let json_occ =
        r#"[{"text": "Turing", "label": "PER", "occurrence": 1}, {"text": "London", "label": "LOC", "occurrence": 1}]"#;
    let cases = [
        ("tag", xml),
        ("index", index),
        ("index-enriched", index),
        ("match", json),
        ("match-occ", json_occ),
        ("logitmatch", json),
        ("logitmatch-occ", json_occ),
        ("match-s", json),
        ("match-occ-s", json_occ),
        ("logitmatch-s", json),
        ("logitmatch-occ-s", json_occ),
    ];
    for (tag, output) in cases {
        let (pred, parsed) = replay(&tok, tag, &turing, output)?;
        ensure!(
            pred.output_text == output,
            "{tag}: replay produced {:?}",
            pred.output_text
        );
        ensure!(
            sorted(parsed.spans.clone()) == sorted(turing_spans()),
            "{tag}: spans {:?}",
            parsed.spans
        );
    }

    let saint = LabeledExample::new("saint", Task::Ner, SAINT, &["LOC"], vec![Span::new(11, 26, "LOC")]);
    let wanted = r#"[{"text": "Saint-Gaudens", "label": "LOC"}]"#;
    let backend = MockBackend::new(tok.clone()).with_default_policy(ScriptedPolicy::PreferText(wanted.into()));
    let free = StrategyConfig::parse("match", Task::Ner).map_err(|e| e.to_string())?;
    let (pred, _) = generate(&backend, &request(&free, &saint, Constraint::None, 500)).map_err(|e| e.to_string())?;
    let parsed = free.parse_prediction(&pred, &saint);
    ensure!(
        parsed.span_content_errors == 1,
        "match: {} content errors",
        parsed.span_content_errors
    );

    let lm = StrategyConfig::parse("logitmatch", Task::Ner).map_err(|e| e.to_string())?;
    let engine = Arc::new(
        LogitMatch::new(
            Arc::new(VocabIndex::new(tok.vocab().clone())),
            SAINT,
            SchemaKind::None,
            &saint.categories,
        )
        .map_err(|e| e.to_string())?,
    );
    let (pred, _) =
        generate(&backend, &request(&lm, &saint, Constraint::LogitMatch(engine), 500)).map_err(|e| e.to_string())?;
    let constrained = lm.parse_prediction(&pred, &saint);
    ensure!(
        constrained.span_content_errors == 0 && constrained.spans == saint.gold,
        "logitmatch: {:?} gives {constrained:?}",
        pred.output_text
    );
    Ok(format!(
        "{} replays recover both spans; hyphen case: 1 content error free, 0 under LogitMatch ({:?})",
        cases.len(),
        pred.output_text
    ))
}

// word windows via a second, unanchored matcher: regex search at word
// boundaries, then the neighbour-word condition
fn cpl_second_matcher(text: &str, pattern: &str, kind: &str, word: &str) -> Vec<Span> {
    let re = Regex::new(&format!(r"\b(?:{pattern})\b")).unwrap();
    re.find_iter(text)
        .filter(|m| {
            let before = text[..m.start()].split(' ').rev().nth(1);
            let after = text[m.end()..].split(' ').nth(1);
            match kind {
                "preceded_by" => before == Some(word),
                "not_preceded_by" => before != Some(word),
                "followed_by" => after == Some(word),
                "not_followed_by" => after != Some(word),
                other => panic!("unknown constraint {other}"),
            }
        })
        .map(|m| Span::new(m.start(), m.end(), CPL_LABEL))
        .collect()
}

fn cpl_integrity() -> Outcome {
    let data = generate_cpl_dataset(1000, 2024, 100).map_err(|e| e.to_string())?;
    ensure!(data.len() == 1000, "{} examples", data.len());
    let mut spans = 0;
    for ex in &data {
        ensure!(!ex.gold.is_empty(), "{} has no span", ex.id);
        ensure!(ex.text.is_ascii(), "{} is not ASCII", ex.id);
        let spec = spec_of(ex).ok_or_else(|| format!("{} has no spec", ex.id))?;
        let expected = cpl_second_matcher(
            &ex.text,
            &spec.pattern,
            spec.constraint_kind.as_str(),
            &spec.constraint_word,
        );
        ensure!(
            ex.gold == expected,
            "{}: gold {:?} vs second matcher {:?}",
            ex.id,
            ex.gold,
            expected
        );
        ex.validate().map_err(|e| e.to_string())?;
        spans += ex.gold.len();
    }
    let again = generate_cpl_dataset(1000, 2024, 100).map_err(|e| e.to_string())?;
    ensure!(to_jsonl(&data) == to_jsonl(&again), "regeneration differs");
    Ok(format!(
        "1000 examples, {spans} spans re-derived, regeneration byte-identical"
    ))
}

fn no_dead_ends() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let pool = tokenizer_pool(&mut rng, 6);
    let (mut constrained, mut total, mut sequences) = (0, 0, 0);
    while constrained < 10_000 {
        sequences += 1;
        let input = random_input(&mut rng, 1, 200);
        let (tok, index) = pool.choose(&mut rng).unwrap();
        let index = if rng.gen_bool(0.5) {
            index.clone()
        } else {
            // all bytes plus fragments of the escaped input, some fused with quotes
            let escaped = escape_json_str(&input).into_bytes();
            let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
            for _ in 0..rng.gen_range(5..60) {
                let a = rng.gen_range(0..escaped.len());
                let b = rng.gen_range(a + 1..=escaped.len().min(a + 8));
                let mut t = escaped[a..b].to_vec();
                match rng.gen_range(0..3) {
                    0 => t.insert(0, b'"'),
                    1 => t.extend_from_slice(b"\","),
                    _ => {}
                }
                tokens.push(t);
            }
            tokens.push(b"{\"text\": \"".to_vec());
            Arc::new(VocabIndex::new(TokenVocab::new(tokens, []).map_err(|e| e.to_string())?))
        };
        let schema = [SchemaKind::None, SchemaKind::Plain, SchemaKind::WithOccurrence][rng.gen_range(0..3)];
        let engine = LogitMatch::new(index.clone(), &input, schema, &["A", "BB"]).map_err(|e| e.to_string())?;
        let opener = tok.encode(b"{\"text\": \"");
        let mut state = engine.init_state();
        let mut pending: Vec<TokenId> = Vec::new();
        for _ in 0..200 {
            let mask = engine.allowed_tokens(&state);
            let mode = state.mode();
            if mode != Mode::Default {
                constrained += 1;
                ensure!(!mask.is_empty(), "empty mask in {mode:?} on {input:?}");
            }
            total += 1;
            if mode == Mode::Default && schema == SchemaKind::None && pending.is_empty() && rng.gen_bool(0.3) {
                pending = if index.vocab().size() == tok.vocab().size() {
                    opener.iter().rev().copied().collect()
                } else {
                    vec![(index.vocab().size() - 1) as TokenId]
                };
            }
            let ids: Vec<TokenId> = mask
                .to_ids(index.vocab().size())
                .into_iter()
                .filter(|&id| !index.vocab().is_special(id))
                .collect();
            let token = match pending.pop() {
                Some(t) if mask.allows(t) => t,
                _ => match ids.choose(&mut rng) {
                    Some(&t) => t,
                    None => break,
                },
            };
            state = engine
                .advance(&state, token)
                .map_err(|e| format!("allowed token refused: {e}"))?;
            if state.is_finished() {
                break;
            }
        }
    }
    Ok(format!(
        "{constrained} SELECT/COPY steps ({total} total, {sequences} sequences), no empty mask"
    ))
}

fn spanlab(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_spanlab"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "spanlab {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(())
}

fn pipeline(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    spanlab(dir, &["gen-cpl", "--count", "60", "--seed", "5", "--out", "cpl.jsonl"])?;
    let runs = [
        ("lm", "logitmatch-occ-s", "adversarial"),
        ("lmfree", "logitmatch", "adversarial"),
        ("noisy", "match", "noisy"),
    ];
    for (name, strategy, policy) in runs {
        let preds = format!("{name}.jsonl");
        spanlab(
            dir,
            &[
                "run",
                "--dataset",
                "cpl.jsonl",
                "--out",
                &preds,
                "--strategy",
                strategy,
                "--seed",
                "9",
                "--set",
                &format!("mock_policy={policy}"),
                "--set",
                &format!("trace={name}.trace.jsonl"),
            ],
        )?;
        spanlab(
            dir,
            &[
                "eval",
                "--predictions",
                &preds,
                "--dataset",
                "cpl.jsonl",
                "--out",
                &format!("{name}.json"),
            ],
        )?;
    }
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|entry| {
            let entry = entry.unwrap();
            (
                entry.file_name().to_string_lossy().into_owned(),
                fs::read(entry.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    Ok(files)
}

fn end_to_end_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path())?;
    let second = pipeline(b.path())?;
    // the dataset plus predictions, trace and report per run
    ensure!(first.len() == 10, "{} files written", first.len());
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        ensure!(x == y, "{name} differs between runs");
    }
    Ok(format!("{} files byte-identical across two runs", first.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("substring guarantee", substring_guarantee),
        ("token fixtures", token_fixtures),
        ("metric oracle", metric_oracle),
        ("round-trip parsing", round_trip),
        ("worked examples", worked_examples),
        ("CPL integrity", cpl_integrity),
        ("no dead ends", no_dead_ends),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        println!("all 8 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} of 8 criteria failed");
        ExitCode::FAILURE
    }
}
