// SPDX-License-Identifier: Apache-2.0

//! Append-only hypothesis tree.

use rand::Rng;
use rtlfix_agents::{AgentState, AgentTranscript, Hypothesis};
use rtlfix_core::rtl::SourceProject;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heuristic::{heuristic_value, HeuristicCoeffs, HeuristicError, NodeFeatures};
use crate::sample::sample_index;

pub type NodeId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeStatus {
    Open,
    Expanding,
    Exhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisNode {
    pub id: NodeId,
    pub hypothesis: Hypothesis,
    /// Code, dialogue and counters at creation; restored on every expansion.
    pub state: AgentState,
    pub features: NodeFeatures,
    pub f_value: f64,
    pub status: NodeStatus,
    pub children: Vec<NodeId>,
    pub expansions: u32,
}

impl HypothesisNode {
    pub fn code_snapshot(&self) -> &SourceProject {
        &self.state.project
    }

    pub fn transcript_snapshot(&self) -> &AgentTranscript {
        &self.state.transcript
    }

    pub fn parent(&self) -> Option<NodeId> {
        self.hypothesis.parent
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("no open node to sample")]
    EmptyTree,
    #[error("node {0} does not exist")]
    NoSuchNode(NodeId),
    #[error("node {0} is not open")]
    NotOpen(NodeId),
    #[error(transparent)]
    Heuristic(#[from] HeuristicError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisTree {
    pub nodes: Vec<HypothesisNode>,
    pub coeffs: HeuristicCoeffs,
}

impl HypothesisTree {
    pub fn new(root: AgentState, coeffs: HeuristicCoeffs) -> Result<Self, TreeError> {
        let mut t = HypothesisTree {
            nodes: Vec::new(),
            coeffs,
        };
        t.push(Hypothesis::root(), root)?;
        Ok(t)
    }

    fn push(&mut self, hypothesis: Hypothesis, state: AgentState) -> Result<NodeId, TreeError> {
        let features = NodeFeatures::from_state(&state);
        let f_value = heuristic_value(&features, &self.coeffs)?;
        let id = self.nodes.len() as NodeId;
        debug_assert_eq!(hypothesis.id, id);
        self.nodes.push(HypothesisNode {
            id,
            hypothesis,
            state,
            features,
            f_value,
            status: NodeStatus::Open,
            children: Vec::new(),
            expansions: 0,
        });
        Ok(id)
    }

    /// Id the next node will get.
    pub fn next_id(&self) -> NodeId {
        self.nodes.len() as NodeId
    }

    pub fn get(&self, id: NodeId) -> Result<&HypothesisNode, TreeError> {
        self.nodes.get(id as usize).ok_or(TreeError::NoSuchNode(id))
    }

    pub fn get_mut(&mut self, id: NodeId) -> Result<&mut HypothesisNode, TreeError> {
        self.nodes.get_mut(id as usize).ok_or(TreeError::NoSuchNode(id))
    }

    /// Adds a child under `hypothesis.parent`, which must exist.
    pub fn add_child(&mut self, hypothesis: Hypothesis, state: AgentState) -> Result<NodeId, TreeError> {
        let parent = hypothesis.parent.ok_or(TreeError::NoSuchNode(u64::MAX))?;
        self.get(parent)?;
        let mut h = hypothesis;
        h.id = self.next_id();
        let id = self.push(h, state)?;
        self.nodes[parent as usize].children.push(id);
        Ok(id)
    }

    pub fn open_ids(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.status == NodeStatus::Open)
            .map(|n| n.id)
            .collect()
    }

    /// Path from the root to `id`.
    pub fn path(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes.get(cur as usize).and_then(|n| n.parent()) {
            out.push(p);
            cur = p;
        }
        out.reverse();
        out
    }
}

/// Draws an open node with probability proportional to `exp(f)`.
pub fn sample_node<R: Rng + ?Sized>(tree: &HypothesisTree, rng: &mut R) -> Result<NodeId, TreeError> {
    let open = tree.open_ids();
    let f: Vec<f64> = open.iter().map(|id| tree.nodes[*id as usize].f_value).collect();
    sample_index(&f, rng).map(|i| open[i]).ok_or(TreeError::EmptyTree)
}
