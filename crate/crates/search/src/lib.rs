// SPDX-License-Identifier: Apache-2.0

//! Stochastic tree search over repair hypotheses. Each node pairs a code
//! snapshot with a dialogue history; nodes are drawn by a softmax over a
//! linear heuristic and expanded by one main-agent step.

pub mod heuristic;
pub mod report;
pub mod sample;
pub mod search;
pub mod tree;

pub use heuristic::{heuristic_value, HeuristicCoeffs, HeuristicError, NodeFeatures};
pub use report::{machine_report, render_tree};
pub use sample::{sample_index, softmax};
pub use search::{
    expand, run_search, ExpandError, Expansion, ExpansionKind, ExpansionRecord, SearchConfig, SearchOutcome,
    SearchRun, SearchStats,
};
pub use tree::{sample_node, HypothesisNode, HypothesisTree, NodeId, NodeStatus, TreeError};
