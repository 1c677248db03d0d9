//! Run configuration: a `key = value` file plus command-line overrides.
//!
//! ```text
//! # comments start with '#'
//! dataset = data/cpl.jsonl
//! output = out/predictions.jsonl
//! strategy = logitmatch-occ
//! backend = mock
//! mock_policy = adversarial
//! seed = 7
//! ```
//!
//! Credentials never come from this file; the HTTP backend reads its token
//! from the `SPANLAB_API_KEY` environment variable.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use spanlab::strategies::StrategyConfig;
use spanlab::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendKind {
    Mock,
    Http,
}

/// What the mock backend's scripted model tries to write.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MockPolicy {
    /// The canonical rendering of the gold spans.
    Gold,
    /// The gold rendering with some spans perturbed.
    Noisy,
    /// The noisy rendering, with hostile tokens taken at masked steps.
    Adversarial,
}

macro_rules! keyword_enum {
    ($ty:ident { $($name:literal => $variant:ident),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = anyhow::Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    _ => bail!("unknown {} `{s}` (expected one of: {})", stringify!($ty), [$($name),+].join(", ")),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name,)+ })
            }
        }
    };
}

keyword_enum!(BackendKind { "mock" => Mock, "http" => Http });
keyword_enum!(MockPolicy { "gold" => Gold, "noisy" => Noisy, "adversarial" => Adversarial });

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Per-step trace of the mock backend, as JSON lines.
    pub trace: Option<PathBuf>,
    pub strategy: String,
    /// Overrides the task of every example.
    pub task: Option<Task>,
    pub shots: Option<usize>,
    pub backend: BackendKind,
    pub mock_policy: MockPolicy,
    /// Share of perturbed spans for the noisy and adversarial mocks.
    pub mock_rate: f64,
    /// Chance that the adversarial mock takes a hostile token at a masked
    /// step.
    pub hostile_rate: f64,
    /// Number of dataset texts the mock tokenizer is trained on.
    pub mock_train_texts: usize,
    /// Vocabulary file for the mock backend instead of a trained tokenizer.
    pub vocab: Option<PathBuf>,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: Option<u32>,
    pub max_tokens: usize,
    pub seed: u64,
    pub concurrency: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            output: None,
            trace: None,
            strategy: "match".into(),
            task: None,
            shots: None,
            backend: BackendKind::Mock,
            mock_policy: MockPolicy::Gold,
            mock_rate: 0.3,
            hostile_rate: 0.05,
            mock_train_texts: 50,
            vocab: None,
            endpoint: "http://localhost:8000/v1".into(),
            model: "default".into(),
            temperature: 0.0,
            top_p: 1.0,
            top_k: None,
            max_tokens: 1024,
            seed: 0,
            concurrency: 4,
        }
    }
}

const SECRET_KEYS: &[&str] = &[
    "api_key",
    "apikey",
    "token",
    "auth_token",
    "authorization",
    "password",
    "secret",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("invalid value `{value}` for `{key}`: {e}"))
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let optional = |v: &str| (!v.is_empty() && v != "none").then(|| v.to_string());
        match key.trim() {
            "dataset" => self.dataset = optional(value).map(PathBuf::from),
            "output" => self.output = optional(value).map(PathBuf::from),
            "trace" => self.trace = optional(value).map(PathBuf::from),
            "strategy" => self.strategy = value.to_string(),
            "task" => self.task = optional(value).map(|v| parse("task", &v)).transpose()?,
            "shots" => self.shots = optional(value).map(|v| parse("shots", &v)).transpose()?,
            "backend" => self.backend = parse(key, value)?,
            "mock_policy" => self.mock_policy = parse(key, value)?,
            "mock_rate" => self.mock_rate = parse(key, value)?,
            "hostile_rate" => self.hostile_rate = parse(key, value)?,
            "mock_train_texts" => self.mock_train_texts = parse(key, value)?,
            "vocab" => self.vocab = optional(value).map(PathBuf::from),
            "endpoint" => self.endpoint = value.to_string(),
            "model" => self.model = value.to_string(),
            "temperature" => self.temperature = parse(key, value)?,
            "top_p" => self.top_p = parse(key, value)?,
            "top_k" => self.top_k = optional(value).map(|v| parse("top_k", &v)).transpose()?,
            "max_tokens" => self.max_tokens = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "concurrency" => self.concurrency = parse(key, value)?,
            k if SECRET_KEYS.contains(&k.to_ascii_lowercase().as_str()) => {
                bail!("`{k}` cannot be set in configuration; export SPANLAB_API_KEY instead")
            }
            k => bail!("unknown configuration key `{k}`"),
        }
        Ok(())
    }

    /// Applies a `key=value` override as given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("expected KEY=VALUE, got `{pair}`"))?;
        self.set(k, v)
    }

    pub fn parse_str(source: &str) -> Result<Self> {
        let mut config = Self::default();
        for (n, raw) in source.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", n + 1))?;
            config.set(k, v).with_context(|| format!("line {}", n + 1))?;
        }
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let source = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse_str(&source).with_context(|| format!("in {}", path.display()))
    }

    /// Checks everything that can be checked before touching the dataset or
    /// the network.
    pub fn validate(&self) -> Result<()> {
        let dataset = self.dataset.as_ref().ok_or_else(|| anyhow!("no dataset given"))?;
        if !dataset.exists() {
            bail!("dataset {} does not exist", dataset.display());
        }
        if self.output.is_none() {
            bail!("no output path given");
        }
        if let Some(vocab) = &self.vocab {
            if !vocab.exists() {
                bail!("vocabulary {} does not exist", vocab.display());
            }
        }
        if self.max_tokens == 0 {
            bail!("max_tokens must be at least 1");
        }
        if self.concurrency == 0 {
            bail!("concurrency must be at least 1");
        }
        for (key, rate) in [("mock_rate", self.mock_rate), ("hostile_rate", self.hostile_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                bail!("{key} must lie in [0, 1]");
            }
        }
        let strategy = StrategyConfig::parse(&self.strategy, self.task.unwrap_or(Task::Custom))?;
        if strategy.needs_mask() && self.backend == BackendKind::Http {
            bail!(
                "strategy `{}` constrains decoding, which needs per-step logits; the http backend cannot provide them",
                strategy.tag()
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_files_with_comments() {
        let c = RunConfig::parse_str("# run\nstrategy = match-occ-s\n\nseed=9\ntop_k = none\nmock_policy = noisy\n")
            .unwrap();
        assert_eq!(c.strategy, "match-occ-s");
        assert_eq!(c.seed, 9);
        assert_eq!(c.top_k, None);
        assert_eq!(c.mock_policy, MockPolicy::Noisy);
    }

    #[test]
    fn rejects_secrets_and_unknown_keys() {
        let err = RunConfig::parse_str("api_key = sk-123").unwrap_err();
        assert!(format!("{err:#}").contains("SPANLAB_API_KEY"));
        assert!(RunConfig::parse_str("colour = blue").is_err());
        assert!(RunConfig::parse_str("seed = many").is_err());
        assert!(RunConfig::parse_str("just words").is_err());
    }

    #[test]
    fn overrides() {
        let mut c = RunConfig::default();
        c.set_pair("backend=http").unwrap();
        c.set_pair("task=gec").unwrap();
        assert_eq!(c.backend, BackendKind::Http);
        assert_eq!(c.task, Some(Task::Gec));
        assert!(c.set_pair("backend").is_err());
    }

    #[test]
    fn capability_check() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("d.jsonl");
        std::fs::write(&data, "").unwrap();
        let mut c = RunConfig {
            dataset: Some(data),
            output: Some(dir.path().join("p.jsonl")),
            backend: BackendKind::Http,
            strategy: "logitmatch".into(),
            ..RunConfig::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("per-step logits"));
        c.strategy = "match-s".into();
        assert!(c.validate().is_err());
        c.strategy = "match".into();
        c.validate().unwrap();
        c.dataset = Some(dir.path().join("missing.jsonl"));
        assert!(c.validate().is_err());
    }
}
