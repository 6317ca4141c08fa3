//! Backend selection from `mock…`, `remote:<url>` and `hash:<dim>` specs.

use anyhow::{anyhow, bail};
use labcast_core::curation::{MockRules, RuleBasedJudge};
use labcast_core::embed::{EmbeddingProvider, HashEmbedder};
use labcast_core::evaluation::ExternalScorer;
use labcast_core::inference_engine::{Generator, ScriptedGenerator};
use labcast_core::judge::{Concurrency, Judge};
use labcast_core::remote::{RemoteEmbedder, RemoteGenerator, RemoteJudge, RemoteScorer};

fn missing(key: &str) -> anyhow::Error {
    anyhow!(
        "no {key} configured; set --{key}, EXPSTAR_{} or `{key}` in the config file",
        key.to_ascii_uppercase()
    )
}

pub fn judge(spec: Option<&str>, jobs: usize) -> anyhow::Result<Box<dyn Judge>> {
    let spec = spec.ok_or_else(|| missing("judge"))?;
    Ok(match spec.split_once(':') {
        None if spec == "mock" => Box::new(RuleBasedJudge::new(MockRules::builtin())),
        Some(("mock", path)) => Box::new(RuleBasedJudge::from_file(path)?),
        Some(("remote", url)) => Box::new(RemoteJudge::new(url, Concurrency::Parallel(jobs))),
        _ => bail!("judge must be mock, mock:<rules.json> or remote:<url>, got {spec:?}"),
    })
}

pub fn generator(spec: Option<&str>, jobs: usize) -> anyhow::Result<Box<dyn Generator>> {
    let spec = spec.ok_or_else(|| missing("generator"))?;
    Ok(match spec.split_once(':') {
        Some(("mock", path)) => Box::new(ScriptedGenerator::from_file(path)?),
        Some(("remote", url)) => Box::new(RemoteGenerator::new(url, jobs)),
        _ => bail!("generator must be mock:<script.jsonl> or remote:<url>, got {spec:?}"),
    })
}

pub fn embedder(spec: Option<&str>) -> anyhow::Result<Box<dyn EmbeddingProvider>> {
    let spec = spec.ok_or_else(|| missing("embedder"))?;
    Ok(match spec.split_once(':') {
        Some(("hash", dim)) => {
            let d: usize = dim.parse().map_err(|_| anyhow!("hash embedder dimension {dim:?} is not an integer"))?;
            if d == 0 {
                bail!("hash embedder dimension must be positive");
            }
            Box::new(HashEmbedder::new(d))
        }
        Some(("remote", url)) => Box::new(RemoteEmbedder::new(url)),
        _ => bail!("embedder must be hash:<dim> or remote:<url>, got {spec:?}"),
    })
}

pub fn scorer(spec: Option<&str>) -> anyhow::Result<Option<Box<dyn ExternalScorer>>> {
    let Some(spec) = spec else { return Ok(None) };
    match spec.split_once(':') {
        Some(("remote", url)) => Ok(Some(Box::new(RemoteScorer::new(url)))),
        _ => bail!("scorer must be remote:<url>, got {spec:?}"),
    }
}
