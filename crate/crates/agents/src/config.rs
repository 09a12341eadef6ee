// SPDX-License-Identifier: Apache-2.0

//! Budgets, hypotheses and agent settings.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rtlfix_core::lint::ExternalLinter;
use rtlfix_core::smt::SolverConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub max_ops_per_hypothesis: u32,
    pub max_tokens_total: u64,
    pub max_wall_seconds: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_ops_per_hypothesis: 12,
            max_tokens_total: 2_000_000,
            max_wall_seconds: 1800,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("budget field `{0}` must be positive")]
pub struct BudgetError(pub &'static str);

impl Budget {
    pub fn validate(&self) -> Result<(), BudgetError> {
        if self.max_ops_per_hypothesis == 0 {
            return Err(BudgetError("max_ops_per_hypothesis"));
        }
        if self.max_tokens_total == 0 {
            return Err(BudgetError("max_tokens_total"));
        }
        if self.max_wall_seconds == 0 {
            return Err(BudgetError("max_wall_seconds"));
        }
        Ok(())
    }
}

/// Global spend across every agent of one search.
#[derive(Clone, Debug)]
pub struct Meter {
    pub tokens: u64,
    pub max_tokens: u64,
    pub started: Instant,
    pub max_wall: Duration,
}

impl Meter {
    pub fn new(budget: &Budget) -> Self {
        Meter {
            tokens: 0,
            max_tokens: budget.max_tokens_total,
            started: Instant::now(),
            max_wall: Duration::from_secs(budget.max_wall_seconds),
        }
    }

    pub fn exhausted(&self) -> bool {
        self.tokens >= self.max_tokens || self.started.elapsed() >= self.max_wall
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub id: u64,
    pub text: String,
    pub parent: Option<u64>,
    /// Length of the parent's transcript when the hypothesis was proposed.
    pub created_from: usize,
}

impl Hypothesis {
    pub fn root() -> Self {
        Hypothesis {
            id: 0,
            text: "The design fails its testbenches; locate the root cause.".into(),
            parent: None,
            created_from: 0,
        }
    }
}

/// What counts towards the query feature.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryCounting {
    #[default]
    ContextAgent,
    AllTools,
}

#[derive(Clone, Debug)]
pub struct AgentConfig {
    pub budget: Budget,
    /// Maximum length of a context-agent summary, in characters.
    pub summary_cap: usize,
    pub query_counting: QueryCounting,
    /// Tool calls a sub-agent may make before it must answer.
    pub max_nav_steps: usize,
    pub solver: SolverConfig,
    pub smt_horizon: Option<usize>,
    pub linter: Option<ExternalLinter>,
    /// Where solver scripts are kept, one file per call.
    pub smt_dir: Option<PathBuf>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            budget: Budget::default(),
            summary_cap: 2000,
            query_counting: QueryCounting::default(),
            max_nav_steps: 8,
            solver: SolverConfig::default(),
            smt_horizon: None,
            linter: None,
            smt_dir: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_budget_rejected() {
        assert!(Budget::default().validate().is_ok());
        let b = Budget {
            max_tokens_total: 0,
            ..Budget::default()
        };
        assert_eq!(b.validate(), Err(BudgetError("max_tokens_total")));
        assert!(Meter::new(&b).exhausted());
    }
}
