//! Pipeline configuration. Every key resolves from, in order of precedence,
//! a command-line flag, an `EXPSTAR_<KEY>` environment variable, a TOML file
//! of flat `key = value` pairs, and the built-in default.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use labcast_core::knowledge_index::FusionMode;
use serde::Serialize;

pub const ENV_PREFIX: &str = "EXPSTAR_";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub k: usize,
    pub fusion_mode: FusionMode,
    pub top_p: f64,
    /// Candidates sampled per step for preference pairs (L).
    pub candidates: usize,
    pub sim_threshold: f64,
    pub max_pairs: usize,
    pub seed: u64,
    pub jobs: usize,
    pub batch_size: usize,
    pub max_tokens: usize,
    pub tokens_per_word: f64,
    pub judge: Option<String>,
    pub generator: Option<String>,
    pub embedder: Option<String>,
    pub scorer: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: 5,
            fusion_mode: FusionMode::VT,
            top_p: 0.9,
            candidates: 8,
            sim_threshold: 0.3,
            max_pairs: 4,
            seed: 0,
            jobs: 1,
            batch_size: 20,
            max_tokens: 4096,
            tokens_per_word: 1.3,
            judge: None,
            generator: None,
            embedder: None,
            scorer: None,
        }
    }
}

pub const KEYS: [&str; 15] = [
    "k",
    "fusion_mode",
    "top_p",
    "candidates",
    "sim_threshold",
    "max_pairs",
    "seed",
    "jobs",
    "batch_size",
    "max_tokens",
    "tokens_per_word",
    "judge",
    "generator",
    "embedder",
    "scorer",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Default,
    File,
    Env,
    Flag,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::File => "config file",
            Source::Env => "environment",
            Source::Flag => "flag",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{key} from {origin}: {value:?} is not {expected}")]
    Invalid {
        key: String,
        origin: Source,
        value: String,
        expected: &'static str,
    },
    #[error("unknown config key {key:?} in {origin}")]
    Unknown { key: String, origin: Source },
    #[error("config file: {0}")]
    File(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    #[serde(flatten)]
    pub config: PipelineConfig,
    #[serde(skip)]
    pub sources: BTreeMap<&'static str, Source>,
}

fn parse<T: FromStr>(key: &str, origin: Source, value: &str, expected: &'static str, ok: impl Fn(&T) -> bool) -> Result<T, ConfigError> {
    value
        .trim()
        .parse::<T>()
        .ok()
        .filter(|v| ok(v))
        .ok_or_else(|| ConfigError::Invalid {
            key: key.to_owned(),
            origin,
            value: value.to_owned(),
            expected,
        })
}

fn apply(config: &mut PipelineConfig, key: &str, origin: Source, value: &str) -> Result<(), ConfigError> {
    let text = |v: &str| Some(v.trim().to_owned()).filter(|v| !v.is_empty());
    match key {
        "k" => config.k = parse(key, origin, value, "a positive integer", |&v: &usize| v >= 1)?,
        "fusion_mode" => config.fusion_mode = parse(key, origin, value, "one of v, vt, vtp", |_| true)?,
        "top_p" => config.top_p = parse(key, origin, value, "a number in (0, 1]", |&v: &f64| v > 0.0 && v <= 1.0)?,
        "candidates" => config.candidates = parse(key, origin, value, "an integer of at least 2", |&v: &usize| v >= 2)?,
        "sim_threshold" => {
            config.sim_threshold = parse(key, origin, value, "a number in [0, 1]", |v: &f64| (0.0..=1.0).contains(v))?
        }
        "max_pairs" => config.max_pairs = parse(key, origin, value, "a positive integer", |&v: &usize| v >= 1)?,
        "seed" => config.seed = parse(key, origin, value, "a non-negative integer", |_| true)?,
        "jobs" => config.jobs = parse(key, origin, value, "a positive integer", |&v: &usize| v >= 1)?,
        "batch_size" => config.batch_size = parse(key, origin, value, "a positive integer", |&v: &usize| v >= 1)?,
        "max_tokens" => config.max_tokens = parse(key, origin, value, "a positive integer", |&v: &usize| v >= 1)?,
        "tokens_per_word" => {
            config.tokens_per_word = parse(key, origin, value, "a positive number", |&v: &f64| v > 0.0 && v.is_finite())?
        }
        "judge" => config.judge = text(value),
        "generator" => config.generator = text(value),
        "embedder" => config.embedder = text(value),
        "scorer" => config.scorer = text(value),
        _ => {
            return Err(ConfigError::Unknown {
                key: key.to_owned(),
                origin,
            })
        }
    }
    Ok(())
}

fn toml_scalar(key: &str, v: &toml::Value) -> Result<String, ConfigError> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        other => Err(ConfigError::Invalid {
            key: key.to_owned(),
            origin: Source::File,
            value: other.to_string(),
            expected: "a string or number",
        }),
    }
}

pub fn parse_file(text: &str) -> Result<toml::Table, ConfigError> {
    text.parse::<toml::Table>().map_err(|e| ConfigError::File(e.to_string()))
}

/// Resolves every key. `flags` and `file` use the plain key names; `env` is
/// the raw process environment.
pub fn resolve_config(
    flags: &BTreeMap<String, String>,
    env: &BTreeMap<String, String>,
    file: Option<&toml::Table>,
) -> Result<Resolved, ConfigError> {
    let mut config = PipelineConfig::default();
    let mut sources: BTreeMap<&'static str, Source> = KEYS.iter().map(|k| (*k, Source::Default)).collect();

    if let Some(table) = file {
        for (key, value) in table {
            let Some(k) = KEYS.iter().find(|k| **k == key) else {
                return Err(ConfigError::Unknown {
                    key: key.clone(),
                    origin: Source::File,
                });
            };
            apply(&mut config, k, Source::File, &toml_scalar(key, value)?)?;
            sources.insert(k, Source::File);
        }
    }
    for k in KEYS {
        if let Some(v) = env.get(&format!("{ENV_PREFIX}{}", k.to_ascii_uppercase())) {
            apply(&mut config, k, Source::Env, v)?;
            sources.insert(k, Source::Env);
        }
    }
    for (key, value) in flags {
        let Some(k) = KEYS.iter().find(|k| **k == key) else {
            return Err(ConfigError::Unknown {
                key: key.clone(),
                origin: Source::Flag,
            });
        };
        apply(&mut config, k, Source::Flag, value)?;
        sources.insert(k, Source::Flag);
    }
    Ok(Resolved { config, sources })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults() {
        let r = resolve_config(&map(&[]), &map(&[]), None).unwrap();
        assert_eq!(r.config, PipelineConfig::default());
        assert_eq!(r.config.k, 5);
        assert_eq!(r.config.top_p, 0.9);
        assert_eq!(r.config.candidates, 8);
        assert_eq!(r.config.sim_threshold, 0.3);
        assert_eq!(r.config.fusion_mode, FusionMode::VT);
    }

    #[test]
    fn precedence() {
        let file = parse_file("k = 2\ntop_p = 0.5\nseed = 7").unwrap();
        let env = map(&[("EXPSTAR_K", "3"), ("EXPSTAR_TOP_P", "0.8")]);
        let r = resolve_config(&map(&[("k", "8")]), &env, Some(&file)).unwrap();
        assert_eq!(r.config.k, 8);
        assert_eq!(r.config.top_p, 0.8);
        assert_eq!(r.config.seed, 7);
        assert_eq!(r.sources["k"], Source::Flag);
        assert_eq!(r.sources["top_p"], Source::Env);
        assert_eq!(r.sources["seed"], Source::File);
        assert_eq!(r.sources["jobs"], Source::Default);
    }

    #[test]
    fn invalid_value_names_key_and_source() {
        let file = parse_file("sim_threshold = \"high\"").unwrap();
        let err = resolve_config(&map(&[]), &map(&[]), Some(&file)).unwrap_err();
        assert_eq!(err.to_string(), "sim_threshold from config file: \"high\" is not a number in [0, 1]");
        let err = resolve_config(&map(&[]), &map(&[("EXPSTAR_K", "zero")]), None).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { origin: Source::Env, .. }));
        assert!(resolve_config(&map(&[("top_p", "1.5")]), &map(&[]), None).is_err());
        assert!(matches!(
            resolve_config(&map(&[]), &map(&[]), Some(&parse_file("kk = 1").unwrap())),
            Err(ConfigError::Unknown { .. })
        ));
    }
}
