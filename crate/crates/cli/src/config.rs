// SPDX-License-Identifier: Apache-2.0

//! Project configuration: one TOML file plus `RTLFIX__SECTION__KEY`
//! environment overrides. Relative paths are taken from the file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rtlfix_agents::backend::{LiveConfig, ENV_KEY};
use rtlfix_agents::{AgentConfig, Budget, QueryCounting};
use rtlfix_core::lint::{ExternalLinter, DEFAULT_PARSE_REGEX};
use rtlfix_core::smt::{SolverConfig, DEFAULT_SOLVER_CMD};
use rtlfix_search::{HeuristicCoeffs, SearchConfig};
use serde::Deserialize;
use thiserror::Error;

pub const ENV_PREFIX: &str = "RTLFIX__";
pub const DEFAULT_RETRIES: usize = 10;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {err}")]
    Io { path: PathBuf, err: std::io::Error },
    #[error("{path}: {msg}")]
    Syntax { path: PathBuf, msg: String },
    #[error("{path} does not exist ({what})")]
    Missing { path: PathBuf, what: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct RawProject {
    top: String,
    sources: Vec<String>,
    work_dir: Option<String>,
    seed: Option<u64>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawTestbench {
    name: Option<String>,
    stimulus: String,
    golden: String,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct RawBudget {
    max_ops_per_hypothesis: Option<u32>,
    max_tokens_total: Option<u64>,
    max_wall_seconds: Option<u64>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct RawHeuristic {
    lambda1: Option<f64>,
    lambda2: Option<f64>,
    lambda3: Option<f64>,
    lambda4: Option<f64>,
    lambda5: Option<f64>,
    b: Option<f64>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct RawSearch {
    max_children_per_node: Option<usize>,
    retries: Option<usize>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct RawSmt {
    solver_cmd: Option<String>,
    timeout_s: Option<f64>,
    horizon: Option<usize>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct RawLint {
    external_cmd: Option<String>,
    parse_regex: Option<String>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct RawLlm {
    backend: Option<String>,
    replay: Option<String>,
    url: Option<String>,
    model: Option<String>,
    timeout_s: Option<u64>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    summary_cap: Option<usize>,
    max_nav_steps: Option<usize>,
    query_counting: Option<QueryCounting>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    project: RawProject,
    #[serde(default)]
    testbench: Vec<RawTestbench>,
    #[serde(default)]
    budget: RawBudget,
    #[serde(default)]
    heuristic: RawHeuristic,
    #[serde(default)]
    search: RawSearch,
    #[serde(default)]
    smt: RawSmt,
    #[serde(default)]
    lint: RawLint,
    #[serde(default)]
    llm: RawLlm,
    #[serde(default)]
    agent: RawAgent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestbenchPaths {
    pub name: String,
    pub stimulus: PathBuf,
    pub golden: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LlmSelection {
    /// Fixture path; `{seed}` is replaced by the trial seed.
    Replay(String),
    Live(LiveConfig),
}

#[derive(Clone, Debug)]
pub struct ProjectConfig {
    pub base_dir: PathBuf,
    pub top: String,
    /// Source paths as written, relative to `base_dir` unless absolute.
    pub sources: Vec<String>,
    pub testbenches: Vec<TestbenchPaths>,
    pub work_dir: PathBuf,
    pub seed: u64,
    pub budget: Budget,
    pub coeffs: HeuristicCoeffs,
    pub max_children_per_node: Option<usize>,
    pub retries: usize,
    pub solver: SolverConfig,
    pub smt_horizon: Option<usize>,
    pub linter: Option<ExternalLinter>,
    pub llm: LlmSelection,
    pub summary_cap: usize,
    pub max_nav_steps: usize,
    pub query_counting: QueryCounting,
}

/// Applies `RTLFIX__SECTION__KEY=value` pairs. Values are read as TOML
/// scalars when they parse, as strings otherwise.
pub fn apply_overrides(doc: &mut toml::Table, env: &BTreeMap<String, String>) -> Result<(), ConfigError> {
    for (k, v) in env {
        let Some(rest) = k.strip_prefix(ENV_PREFIX) else { continue };
        let parts: Vec<String> = rest.split("__").map(|s| s.to_ascii_lowercase()).collect();
        let [section, key] = parts.as_slice() else {
            return Err(ConfigError::Invalid(format!("{k}: expected {ENV_PREFIX}SECTION__KEY")));
        };
        let value = format!("v = {v}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(v.clone()));
        let entry = doc
            .entry(section.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let toml::Value::Table(t) = entry else {
            return Err(ConfigError::Invalid(format!("{k}: `{section}` is not a section")));
        };
        t.insert(key.clone(), value);
    }
    Ok(())
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn must_exist(path: &Path, what: &str) -> Result<(), ConfigError> {
    if path.exists() {
        Ok(())
    } else {
        Err(ConfigError::Missing {
            path: path.to_path_buf(),
            what: what.to_string(),
        })
    }
}

impl ProjectConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let env: BTreeMap<String, String> = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        Self::load_with_env(path, &env)
    }

    pub fn load_with_env(path: &Path, env: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|err| ConfigError::Io {
            path: path.to_path_buf(),
            err,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base, env).map_err(|e| match e {
            ConfigError::Syntax { msg, .. } => ConfigError::Syntax {
                path: path.to_path_buf(),
                msg,
            },
            e => e,
        })
    }

    pub fn parse(text: &str, base: &Path, env: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let syntax = |msg: String| ConfigError::Syntax {
            path: PathBuf::new(),
            msg,
        };
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| syntax(e.to_string()))?;
        apply_overrides(&mut doc, env)?;
        let raw: RawConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| syntax(e.to_string()))?;

        if raw.project.sources.is_empty() {
            return Err(ConfigError::Invalid("project.sources is empty".into()));
        }
        for s in &raw.project.sources {
            must_exist(&resolve(base, s), "source file")?;
        }
        let mut testbenches = Vec::new();
        for (i, tb) in raw.testbench.iter().enumerate() {
            let t = TestbenchPaths {
                name: tb.name.clone().unwrap_or_else(|| format!("tb{i}")),
                stimulus: resolve(base, &tb.stimulus),
                golden: resolve(base, &tb.golden),
            };
            must_exist(&t.stimulus, "stimulus")?;
            must_exist(&t.golden, "golden VCD")?;
            testbenches.push(t);
        }
        if testbenches.is_empty() {
            return Err(ConfigError::Invalid("no [[testbench]] given".into()));
        }

        let d = Budget::default();
        let budget = Budget {
            max_ops_per_hypothesis: raw.budget.max_ops_per_hypothesis.unwrap_or(d.max_ops_per_hypothesis),
            max_tokens_total: raw.budget.max_tokens_total.unwrap_or(d.max_tokens_total),
            max_wall_seconds: raw.budget.max_wall_seconds.unwrap_or(d.max_wall_seconds),
        };
        budget.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let c = HeuristicCoeffs::default();
        let h = &raw.heuristic;
        let coeffs = HeuristicCoeffs {
            lambda1: h.lambda1.unwrap_or(c.lambda1),
            lambda2: h.lambda2.unwrap_or(c.lambda2),
            lambda3: h.lambda3.unwrap_or(c.lambda3),
            lambda4: h.lambda4.unwrap_or(c.lambda4),
            lambda5: h.lambda5.unwrap_or(c.lambda5),
            base_b: h.b.unwrap_or(c.base_b),
        };
        if coeffs.base_b <= 0.0 {
            return Err(ConfigError::Invalid("heuristic.b must be positive".into()));
        }

        let retries = raw.search.retries.unwrap_or(DEFAULT_RETRIES);
        if retries == 0 {
            return Err(ConfigError::Invalid("search.retries must be at least 1".into()));
        }
        if raw.search.max_children_per_node == Some(0) {
            return Err(ConfigError::Invalid("search.max_children_per_node must be positive".into()));
        }

        let timeout_s = raw.smt.timeout_s.unwrap_or(30.0);
        if timeout_s.is_nan() || timeout_s <= 0.0 {
            return Err(ConfigError::Invalid("smt.timeout_s must be positive".into()));
        }
        let solver = SolverConfig {
            cmd: raw.smt.solver_cmd.unwrap_or_else(|| DEFAULT_SOLVER_CMD.to_string()),
            timeout: Duration::from_secs_f64(timeout_s),
            script_path: None,
        };
        let linter = raw.lint.external_cmd.filter(|c| !c.trim().is_empty()).map(|cmd| ExternalLinter {
            cmd,
            parse_regex: raw.lint.parse_regex.clone().unwrap_or_else(|| DEFAULT_PARSE_REGEX.to_string()),
        });
        if let Some(l) = &linter {
            regex::Regex::new(&l.parse_regex).map_err(|e| ConfigError::Invalid(format!("lint.parse_regex: {e}")))?;
        }

        let llm = match raw.llm.backend.as_deref().unwrap_or("replay") {
            "replay" => {
                let p = raw
                    .llm
                    .replay
                    .ok_or_else(|| ConfigError::Invalid("llm.replay is required for the replay backend".into()))?;
                let full = resolve(base, &p).to_string_lossy().into_owned();
                if !full.contains("{seed}") {
                    must_exist(Path::new(&full), "replay fixture")?;
                }
                LlmSelection::Replay(full)
            }
            "live" => {
                let mut live = LiveConfig::from_env();
                if let Some(u) = raw.llm.url {
                    live.url = Some(u);
                }
                if let Some(m) = raw.llm.model {
                    live.model = Some(m);
                }
                if let Some(t) = raw.llm.timeout_s {
                    live.timeout = Duration::from_secs(t);
                }
                if live.key.is_none() {
                    return Err(ConfigError::Invalid(format!("the live backend needs {ENV_KEY}")));
                }
                LlmSelection::Live(live)
            }
            other => return Err(ConfigError::Invalid(format!("unknown llm.backend `{other}`"))),
        };

        let a = AgentConfig::default();
        Ok(ProjectConfig {
            base_dir: base.to_path_buf(),
            top: raw.project.top,
            sources: raw.project.sources,
            testbenches,
            work_dir: resolve(base, raw.project.work_dir.as_deref().unwrap_or("work")),
            seed: raw.project.seed.unwrap_or(0),
            budget,
            coeffs,
            max_children_per_node: raw.search.max_children_per_node,
            retries,
            solver,
            smt_horizon: raw.smt.horizon,
            linter,
            llm,
            summary_cap: raw.agent.summary_cap.unwrap_or(a.summary_cap),
            max_nav_steps: raw.agent.max_nav_steps.unwrap_or(a.max_nav_steps),
            query_counting: raw.agent.query_counting.unwrap_or_default(),
        })
    }

    pub fn source_path(&self, s: &str) -> PathBuf {
        resolve(&self.base_dir, s)
    }

    pub fn search_config(&self, seed: u64, work_dir: Option<&Path>) -> SearchConfig {
        SearchConfig {
            coeffs: self.coeffs,
            rng_seed: seed,
            budget: self.budget.clone(),
            max_children_per_node: self.max_children_per_node,
            agent: AgentConfig {
                budget: self.budget.clone(),
                summary_cap: self.summary_cap,
                query_counting: self.query_counting,
                max_nav_steps: self.max_nav_steps,
                solver: self.solver.clone(),
                smt_horizon: self.smt_horizon,
                linter: self.linter.clone(),
                smt_dir: work_dir.map(|w| w.join("smt")),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_parses_scalars() {
        let mut doc: toml::Table = "[smt]\ntimeout_s = 5\n".parse().unwrap();
        let env = BTreeMap::from([
            ("RTLFIX__SMT__TIMEOUT_S".to_string(), "12.5".to_string()),
            ("RTLFIX__SMT__SOLVER_CMD".to_string(), "cvc5 --lang smt2".to_string()),
            ("OTHER".to_string(), "x".to_string()),
        ]);
        apply_overrides(&mut doc, &env).unwrap();
        assert_eq!(doc["smt"]["timeout_s"].as_float(), Some(12.5));
        assert_eq!(doc["smt"]["solver_cmd"].as_str(), Some("cvc5 --lang smt2"));
    }

    #[test]
    fn malformed_override_key() {
        let mut doc = toml::Table::new();
        let env = BTreeMap::from([("RTLFIX__SMT".to_string(), "1".to_string())]);
        assert!(apply_overrides(&mut doc, &env).is_err());
    }
}
