// SPDX-License-Identifier: Apache-2.0

//! Run reports: a machine-readable summary and an indented tree rendering.
//! Neither contains timing, so identical runs give identical bytes.

use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::search::{SearchOutcome, SearchRun};
use crate::tree::{HypothesisTree, NodeId, NodeStatus};

fn status(s: NodeStatus) -> &'static str {
    match s {
        NodeStatus::Open => "open",
        NodeStatus::Expanding => "expanding",
        NodeStatus::Exhausted => "exhausted",
    }
}

fn one_line(s: &str, max: usize) -> String {
    let flat: String = s.split_whitespace().collect::<Vec<_>>().join(" ");
    if flat.chars().count() > max {
        flat.chars().take(max).collect::<String>() + "..."
    } else {
        flat
    }
}

pub fn render_tree(tree: &HypothesisTree) -> String {
    fn walk(tree: &HypothesisTree, id: NodeId, depth: usize, out: &mut String) {
        let n = &tree.nodes[id as usize];
        let f = &n.features;
        let _ = writeln!(
            out,
            "{:indent$}#{} [{}] f={:.4} tb={}/{} Q={} CE={} tok={} P={} x{} | {}",
            "",
            n.id,
            status(n.status),
            n.f_value,
            f.tb_passed,
            f.tb_total,
            f.n_queries,
            f.n_compile_errors,
            f.n_tokens,
            f.n_patches,
            n.expansions,
            one_line(&n.hypothesis.text, 80),
            indent = depth * 2
        );
        for c in &n.children {
            walk(tree, *c, depth + 1, out);
        }
    }
    let mut out = String::new();
    if !tree.nodes.is_empty() {
        walk(tree, 0, 0, &mut out);
    }
    out
}

pub fn machine_report(run: &SearchRun) -> Value {
    let stats = run.outcome.stats();
    let nodes: Vec<Value> = run
        .tree
        .nodes
        .iter()
        .map(|n| {
            json!({
                "id": n.id,
                "parent": n.parent(),
                "status": status(n.status),
                "f_value": n.f_value,
                "features": n.features,
                "hypothesis": n.hypothesis.text,
                "children": n.children,
                "expansions": n.expansions,
            })
        })
        .collect();
    let expansions: Vec<Value> = run
        .expansions
        .iter()
        .map(|e| json!({"node": e.node, "kind": e.kind, "child": e.child, "ops": e.ops, "tokens": e.tokens, "error": e.error}))
        .collect();
    let (outcome, n_patches) = match &run.outcome {
        SearchOutcome::Fixed { patches, .. } => ("fixed", patches.len()),
        SearchOutcome::Failed { .. } => ("failed", 0),
    };
    json!({
        "outcome": outcome,
        "failure": stats.failure,
        "patches": n_patches,
        "tokens": stats.tokens,
        "nodes_created": stats.nodes_created,
        "expansions_run": stats.expansions,
        "winning_path": stats.winning_path,
        "winning_features": stats.winning_features,
        "coefficients": run.tree.coeffs,
        "nodes": nodes,
        "expansions": expansions,
    })
}
