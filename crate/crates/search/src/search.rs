// SPDX-License-Identifier: Apache-2.0

//! Sample, expand, repeat: the search loop.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rtlfix_agents::tools::run_testbenches;
use rtlfix_agents::{
    main_agent_step, AgentConfig, AgentError, AgentState, AgentTranscript, Budget, Env, LlmBackend, Meter,
    StepOutcome,
};
use rtlfix_core::rtl::{Patch, SourceProject};
use rtlfix_core::wave::Testbench;
use serde::{Deserialize, Serialize};

use crate::heuristic::{HeuristicCoeffs, NodeFeatures};
use crate::tree::{sample_node, HypothesisTree, NodeId, NodeStatus, TreeError};

/// Consecutive retryable agent failures tolerated before giving up.
pub const MAX_RETRIES: u32 = 3;

#[derive(Clone, Debug, Default)]
pub struct SearchConfig {
    pub coeffs: HeuristicCoeffs,
    pub rng_seed: u64,
    pub budget: Budget,
    pub max_children_per_node: Option<usize>,
    /// Agent settings; its budget is replaced by `budget`.
    pub agent: AgentConfig,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionKind {
    NewHypothesis,
    Fixed,
    OutOfPatience,
    BudgetExhausted,
    Failed,
}

/// One expansion, kept for the work directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRecord {
    pub node: NodeId,
    pub kind: ExpansionKind,
    pub child: Option<NodeId>,
    pub ops: u32,
    pub tokens: u64,
    pub main: AgentTranscript,
    pub context: AgentTranscript,
    pub lint_runs: Vec<AgentTranscript>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub wall_ms: u64,
    pub tokens: u64,
    pub nodes_created: usize,
    pub expansions: usize,
    /// Root to the node whose expansion produced the fix.
    pub winning_path: Vec<NodeId>,
    pub winning_features: Option<NodeFeatures>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SearchOutcome {
    Fixed {
        project: SourceProject,
        patches: Vec<Patch>,
        stats: SearchStats,
    },
    Failed {
        stats: SearchStats,
    },
}

impl SearchOutcome {
    pub fn is_fixed(&self) -> bool {
        matches!(self, SearchOutcome::Fixed { .. })
    }

    pub fn stats(&self) -> &SearchStats {
        match self {
            SearchOutcome::Fixed { stats, .. } | SearchOutcome::Failed { stats } => stats,
        }
    }
}

pub struct SearchRun {
    pub outcome: SearchOutcome,
    pub tree: HypothesisTree,
    pub expansions: Vec<ExpansionRecord>,
}

pub enum Expansion {
    Child(NodeId),
    Fixed(AgentState),
    Exhausted(Option<NodeId>),
    BudgetExhausted,
}

/// Restores `node`, runs one agent step and records the result in the tree.
pub fn expand(
    tree: &mut HypothesisTree,
    node: NodeId,
    env: &Env<'_>,
    max_children: Option<usize>,
    llm: &mut dyn LlmBackend,
    meter: &mut Meter,
    log: &mut Vec<ExpansionRecord>,
) -> Result<Expansion, ExpandError> {
    let n = tree.get_mut(node)?;
    if n.status != NodeStatus::Open {
        return Err(TreeError::NotOpen(node).into());
    }
    n.status = NodeStatus::Expanding;
    n.expansions += 1;
    let hyp = n.hypothesis.clone();
    let mut state = n.state.clone();
    let before = meter.tokens;
    let next = tree.next_id();
    let res = main_agent_step(&mut state, &hyp, next, env, llm, meter);
    let mut rec = ExpansionRecord {
        node,
        kind: ExpansionKind::Failed,
        child: None,
        ops: 0,
        tokens: meter.tokens - before,
        main: state.transcript.clone(),
        context: state.context.transcript.clone(),
        lint_runs: state.lint_runs.clone(),
        error: None,
    };
    let step = match res {
        Ok(s) => s,
        Err(e) => {
            tree.get_mut(node)?.status = NodeStatus::Open;
            rec.error = Some(e.to_string());
            log.push(rec);
            return Err(ExpandError::Agent(e));
        }
    };
    rec.ops = step.ops;
    let add = |tree: &mut HypothesisTree, h, state: &AgentState| -> Result<NodeId, TreeError> {
        let id = tree.add_child(h, state.for_child())?;
        Ok(id)
    };
    let out = match step.outcome {
        StepOutcome::NewHypothesis(h) => {
            let id = add(tree, h, &state)?;
            let n = tree.get_mut(node)?;
            n.status = if max_children.is_some_and(|m| n.children.len() >= m) {
                NodeStatus::Exhausted
            } else {
                NodeStatus::Open
            };
            rec.kind = ExpansionKind::NewHypothesis;
            rec.child = Some(id);
            Expansion::Child(id)
        }
        StepOutcome::Fixed(_) => {
            tree.get_mut(node)?.status = NodeStatus::Open;
            rec.kind = ExpansionKind::Fixed;
            Expansion::Fixed(state)
        }
        StepOutcome::OutOfPatience { forced } => {
            tree.get_mut(node)?.status = NodeStatus::Exhausted;
            let child = match forced {
                Some(h) => Some(add(tree, h, &state)?),
                None => None,
            };
            rec.kind = ExpansionKind::OutOfPatience;
            rec.child = child;
            Expansion::Exhausted(child)
        }
        StepOutcome::BudgetExhausted => {
            tree.get_mut(node)?.status = NodeStatus::Open;
            rec.kind = ExpansionKind::BudgetExhausted;
            Expansion::BudgetExhausted
        }
    };
    log.push(rec);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExpandError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// Searches until a verified fix is found or the budget runs out.
pub fn run_search(root: &SourceProject, tbs: &[Testbench], config: &SearchConfig, llm: &mut dyn LlmBackend) -> SearchRun {
    let started = Instant::now();
    let mut agent_cfg = config.agent.clone();
    agent_cfg.budget = config.budget.clone();
    let env = Env {
        testbenches: tbs,
        config: &agent_cfg,
    };
    let mut meter = Meter::new(&config.budget);
    let root_state = AgentState::new(root.clone(), tbs);
    let mut stats = SearchStats {
        wall_ms: 0,
        tokens: 0,
        nodes_created: 0,
        expansions: 0,
        winning_path: Vec::new(),
        winning_features: None,
        failure: None,
    };
    let already = root_state.tb.all_pass();
    let root_features = NodeFeatures::from_state(&root_state);
    let mut tree = match HypothesisTree::new(root_state, config.coeffs) {
        Ok(t) => t,
        Err(e) => {
            stats.failure = Some(e.to_string());
            stats.wall_ms = started.elapsed().as_millis() as u64;
            // a placeholder tree keeps the report shape uniform
            let tree = HypothesisTree {
                nodes: Vec::new(),
                coeffs: config.coeffs,
            };
            return SearchRun {
                outcome: SearchOutcome::Failed { stats },
                tree,
                expansions: Vec::new(),
            };
        }
    };
    stats.nodes_created = 1;
    if already {
        stats.winning_path = vec![0];
        stats.winning_features = Some(root_features);
        stats.wall_ms = started.elapsed().as_millis() as u64;
        return SearchRun {
            outcome: SearchOutcome::Fixed {
                project: root.clone(),
                patches: Vec::new(),
                stats,
            },
            tree,
            expansions: Vec::new(),
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut log = Vec::new();
    let mut retries = 0;
    let failure = loop {
        if meter.exhausted() {
            break "budget exhausted".to_string();
        }
        let node = match sample_node(&tree, &mut rng) {
            Ok(n) => n,
            Err(e) => break e.to_string(),
        };
        stats.expansions += 1;
        match expand(&mut tree, node, &env, config.max_children_per_node, llm, &mut meter, &mut log) {
            Ok(Expansion::Fixed(state)) => {
                let (st, _) = run_testbenches(&state.project, tbs);
                if !st.all_pass() {
                    // never trust the agent's verdict
                    tree.get_mut(node).expect("sampled").status = NodeStatus::Exhausted;
                    continue;
                }
                stats.winning_path = tree.path(node);
                stats.winning_features = Some(NodeFeatures::from_state(&state));
                stats.tokens = meter.tokens;
                stats.nodes_created = tree.nodes.len();
                stats.wall_ms = started.elapsed().as_millis() as u64;
                return SearchRun {
                    outcome: SearchOutcome::Fixed {
                        project: state.project,
                        patches: state.patches,
                        stats,
                    },
                    tree,
                    expansions: log,
                };
            }
            Ok(Expansion::BudgetExhausted) => break "budget exhausted".to_string(),
            Ok(_) => retries = 0,
            Err(ExpandError::Agent(e)) if e.is_retryable() && retries < MAX_RETRIES => retries += 1,
            Err(e) => break e.to_string(),
        }
    };
    stats.failure = Some(failure);
    stats.tokens = meter.tokens;
    stats.nodes_created = tree.nodes.len();
    stats.wall_ms = started.elapsed().as_millis() as u64;
    SearchRun {
        outcome: SearchOutcome::Failed { stats },
        tree,
        expansions: log,
    }
}
