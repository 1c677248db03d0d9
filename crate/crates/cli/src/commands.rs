use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::{bail, ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use spanlab::backend::{
    generate, Backend, Constraint, DecodingParams, GenerationRequest, HttpBackend, HttpConfig, MockBackend,
    ScriptedPolicy, TraceStep,
};
use spanlab::cpl::generate_cpl_dataset;
use spanlab::dataset::{align, read_examples, read_predictions, write_jsonl, PredictionRecord};
use spanlab::eval::{evaluate_corpus_with, render_grid, render_report, EvalReport, GridEntry, OverlapMode};
use spanlab::logitmatch::{escape_json_str, LogitMatch, VocabIndex};
use spanlab::strategies::{render_canonical, render_index, render_prompt, render_tag, StrategyConfig, StrategyKind};
use spanlab::tokenmodel::{make_synthetic_tokenizer, GreedyTokenizer, TokenVocab, Tokenizer};
use spanlab::{LabeledExample, Span};

use crate::config::{BackendKind, MockPolicy, RunConfig};

/// Writes `count` CPL examples to `out`.
pub fn gen_cpl(count: usize, seed: u64, approx_length: usize, out: &Path) -> Result<()> {
    ensure!(count >= 1, "count must be at least 1");
    let data = generate_cpl_dataset(count, seed, approx_length)?;
    write_jsonl(out, &data)?;
    Ok(())
}

/// Summary of a finished run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunSummary {
    pub examples: usize,
    pub transport_errors: usize,
    pub parse_failures: usize,
    pub truncated: usize,
}

/// One trace line: the example and one decode step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub example_id: String,
    #[serde(flatten)]
    pub step: TraceStep,
}

// a span's surface text with one deliberate slip
fn perturb(text: &str) -> String {
    match text.find(char::is_whitespace) {
        Some(i) => {
            let ws = text[i..].chars().next().map_or(1, char::len_utf8);
            format!("{}{}", &text[..i], &text[i + ws..])
        }
        None => match text.chars().last() {
            Some(c) => format!("{text}{c}"),
            None => text.to_string(),
        },
    }
}

/// The output the noisy mock aims for: the gold rendering with about
/// `rate` of the spans perturbed. Matching formats get a slip in the span
/// text, index outputs a shifted start, tag outputs lose the span.
pub fn noisy_output(kind: StrategyKind, example: &LabeledExample, rate: f64, rng: &mut ChaCha8Rng) -> String {
    let picked: Vec<bool> = example.gold.iter().map(|_| rng.gen_bool(rate)).collect();
    match kind {
        StrategyKind::Tag => {
            let kept: Vec<Span> = example
                .gold
                .iter()
                .zip(&picked)
                .filter(|(_, &p)| !p)
                .map(|(s, _)| s.clone())
                .collect();
            render_tag(&example.text, &kept, example.task)
        }
        StrategyKind::Index | StrategyKind::IndexEnriched => {
            let shifted: Vec<Span> = example
                .gold
                .iter()
                .zip(&picked)
                .map(|(s, &p)| {
                    let mut s = s.clone();
                    if p && s.start < s.end {
                        s.start += 1;
                    }
                    s
                })
                .collect();
            render_index(&shifted)
        }
        kind => {
            let canonical: Vec<serde_json::Value> =
                serde_json::from_str(&render_canonical(kind, example)).expect("canonical output is JSON");
            let items: Vec<String> = canonical
                .iter()
                .zip(&picked)
                .map(|(item, p)| {
                    let text = item["text"].as_str().unwrap_or_default();
                    let text = if *p { perturb(text) } else { text.to_string() };
                    let mut out = format!(
                        "{{\"text\": \"{}\", \"label\": \"{}\"",
                        escape_json_str(&text),
                        escape_json_str(item["label"].as_str().unwrap_or_default())
                    );
                    if let Some(n) = item.get("occurrence") {
                        out.push_str(&format!(", \"occurrence\": {n}"));
                    }
                    out.push('}');
                    out
                })
                .collect();
            format!("[{}]", items.join(", "))
        }
    }
}

fn strategy_for(config: &RunConfig, example: &LabeledExample) -> Result<StrategyConfig> {
    let task = config.task.unwrap_or(example.task);
    let mut strategy = StrategyConfig::parse(&config.strategy, task)?;
    if let Some(n) = config.shots {
        strategy = strategy.with_shots(n);
    }
    Ok(strategy)
}

fn mock_tokenizer(config: &RunConfig, examples: &[LabeledExample]) -> Result<Arc<dyn Tokenizer + Send + Sync>> {
    if let Some(path) = &config.vocab {
        let vocab = TokenVocab::load(path).with_context(|| format!("loading {}", path.display()))?;
        return Ok(Arc::new(GreedyTokenizer::new(vocab)));
    }
    let corpus: Vec<String> = examples
        .iter()
        .take(config.mock_train_texts.max(1))
        .map(|e| e.text.clone())
        .collect();
    Ok(Arc::new(make_synthetic_tokenizer(config.seed, &corpus)))
}

fn mock_backend(config: &RunConfig, examples: &[LabeledExample]) -> Result<MockBackend> {
    let mut backend = MockBackend::new(mock_tokenizer(config, examples)?);
    for (i, ex) in examples.iter().enumerate() {
        let kind = strategy_for(config, ex)?.kind;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ i as u64);
        let policy = match config.mock_policy {
            MockPolicy::Gold => ScriptedPolicy::PreferText(render_canonical(kind, ex)),
            MockPolicy::Noisy => ScriptedPolicy::PreferText(noisy_output(kind, ex, config.mock_rate, &mut rng)),
            MockPolicy::Adversarial => ScriptedPolicy::Adversarial {
                target: noisy_output(kind, ex, config.mock_rate, &mut rng),
                seed: rng.gen(),
                rate: config.hostile_rate,
            },
        };
        backend.set_policy(ex.id.clone(), policy);
    }
    Ok(backend)
}

fn constraint_for(
    strategy: &StrategyConfig,
    vocab: Option<&Arc<VocabIndex>>,
    example: &LabeledExample,
) -> Result<Constraint> {
    if !strategy.needs_mask() {
        return Ok(Constraint::None);
    }
    let Some(vocab) = vocab else {
        bail!("strategy `{}` needs a backend with per-step masks", strategy.tag());
    };
    let engine = if strategy.kind.is_logitmatch() {
        LogitMatch::new(
            vocab.clone(),
            &example.text,
            strategy.schema_kind(),
            &example.categories,
        )
    } else {
        LogitMatch::schema_only(vocab.clone(), &example.categories, strategy.kind.uses_occurrence())
    }
    .with_context(|| format!("example `{}`", example.id))?;
    Ok(Constraint::LogitMatch(Arc::new(engine)))
}

type Outcome = (PredictionRecord, Vec<TraceStep>);

/// Runs every example through the configured backend and writes one
/// prediction record per example, in dataset order.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let dataset = config.dataset.as_ref().expect("validated");
    let output = config.output.as_ref().expect("validated");
    let examples = read_examples(dataset)?;
    ensure!(!examples.is_empty(), "dataset {} is empty", dataset.display());

    let (backend, vocab): (Box<dyn Backend>, Option<Arc<VocabIndex>>) = match config.backend {
        BackendKind::Mock => {
            let mock = mock_backend(config, &examples)?;
            let vocab = Arc::new(VocabIndex::new(mock.tokenizer().vocab().clone()));
            (Box::new(mock), Some(vocab))
        }
        BackendKind::Http => {
            let http = HttpConfig {
                max_concurrency: config.concurrency,
                ..HttpConfig::new(&config.endpoint, &config.model)
            };
            (Box::new(HttpBackend::from_env(http)?), None)
        }
    };

    // build every request up front so configuration problems surface
    // before the first call
    let mut jobs = Vec::with_capacity(examples.len());
    for ex in &examples {
        let strategy = strategy_for(config, ex)?;
        let request = GenerationRequest {
            example_id: ex.id.clone(),
            strategy: strategy.tag(),
            prompt: render_prompt(&strategy, ex),
            decoding: DecodingParams {
                temperature: config.temperature,
                top_p: config.top_p,
                top_k: config.top_k,
                max_tokens: config.max_tokens,
                seed: config.seed,
            },
            constraint: constraint_for(&strategy, vocab.as_ref(), ex)?,
        };
        jobs.push((ex, strategy, request));
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Outcome>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..config.concurrency.min(jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((ex, strategy, request)) = jobs.get(i) else {
                    break;
                };
                let outcome = generate(backend.as_ref(), request)
                    .map(|(raw, trace)| {
                        let parsed = strategy.parse_prediction(&raw, ex);
                        (PredictionRecord { raw, parsed }, trace)
                    })
                    .with_context(|| format!("example `{}`", ex.id));
                results.lock().expect("results lock")[i] = Some(outcome);
            });
        }
    });

    let mut records = Vec::with_capacity(jobs.len());
    let mut traces = Vec::new();
    for outcome in results.into_inner().expect("results lock") {
        let (record, trace) = outcome.expect("every job ran")?;
        traces.extend(trace.into_iter().map(|step| TraceRecord {
            example_id: record.raw.example_id.clone(),
            step,
        }));
        records.push(record);
    }
    write_jsonl(output, &records)?;
    if let Some(path) = &config.trace {
        write_jsonl(path, &traces)?;
    }
    Ok(RunSummary {
        examples: records.len(),
        transport_errors: records.iter().filter(|r| r.raw.error.is_some()).count(),
        parse_failures: records.iter().filter(|r| r.parsed.parse_error.is_some()).count(),
        truncated: records.iter().filter(|r| r.raw.truncated).count(),
    })
}

/// An evaluation report as written to disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub method: String,
    pub dataset: String,
    #[serde(flatten)]
    pub report: EvalReport,
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Evaluates a predictions file against its dataset. Returns the report and
/// its rendered table; writes the report as JSON when `out` is given.
pub fn eval(predictions: &Path, dataset: &Path, out: Option<&Path>, mode: OverlapMode) -> Result<(ReportFile, String)> {
    let examples = read_examples(dataset)?;
    let records = read_predictions(predictions)?;
    ensure!(!records.is_empty(), "{} holds no predictions", predictions.display());
    let pairs = align(&examples, &records)?;
    let report = evaluate_corpus_with(&pairs, mode)?;
    let mut methods: Vec<&str> = records.iter().map(|r| r.raw.strategy.as_str()).collect();
    methods.sort_unstable();
    methods.dedup();
    let file = ReportFile {
        method: methods.join("+"),
        dataset: file_stem(dataset),
        report,
    };
    let table = render_report(&format!("{} on {}", file.method, file.dataset), &file.report);
    if let Some(out) = out {
        let json = serde_json::to_string_pretty(&file)? + "\n";
        fs::write(out, json).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok((file, table))
}

/// Renders a method-by-dataset table from report files.
pub fn report(inputs: &[impl AsRef<Path>]) -> Result<String> {
    ensure!(!inputs.is_empty(), "no report files given");
    let mut seen = HashMap::new();
    let mut entries = Vec::new();
    for path in inputs {
        let path = path.as_ref();
        let source = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: ReportFile =
            serde_json::from_str(&source).with_context(|| format!("{} is not a report file", path.display()))?;
        if let Some(prev) = seen.insert((file.method.clone(), file.dataset.clone()), path.to_path_buf()) {
            bail!(
                "{} and {} both report {} on {}",
                prev.display(),
                path.display(),
                file.method,
                file.dataset
            );
        }
        entries.push(GridEntry {
            method: file.method,
            dataset: file.dataset,
            report: file.report,
        });
    }
    Ok(render_grid(&entries))
}
