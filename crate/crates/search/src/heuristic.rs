// SPDX-License-Identifier: Apache-2.0

//! Node value: a weighted sum of progress and cost features.

use rtlfix_agents::AgentState;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeFeatures {
    pub tb_passed: u64,
    pub tb_total: u64,
    pub n_queries: u64,
    pub n_compile_errors: u64,
    pub n_tokens: u64,
    pub n_patches: u64,
}

impl NodeFeatures {
    pub fn from_state(s: &AgentState) -> Self {
        NodeFeatures {
            tb_passed: s.tb.passed as u64,
            tb_total: s.tb.total as u64,
            n_queries: s.n_queries,
            n_compile_errors: s.n_compile_errors,
            n_tokens: s.tokens,
            n_patches: s.patches.len() as u64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeuristicCoeffs {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda5: f64,
    pub base_b: f64,
}

impl Default for HeuristicCoeffs {
    fn default() -> Self {
        HeuristicCoeffs {
            lambda1: 50.0,
            lambda2: 1.0,
            lambda3: 5.0,
            lambda4: 0.0005,
            lambda5: 3.0,
            base_b: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum HeuristicError {
    #[error("division by zero: the node has no testbenches")]
    DivisionByZero,
}

/// `l1*tb_p/N_tb + l2*N_Q - l3*N_CE - l4*N_tok - l5*N_P + b`
pub fn heuristic_value(f: &NodeFeatures, c: &HeuristicCoeffs) -> Result<f64, HeuristicError> {
    if f.tb_total == 0 {
        return Err(HeuristicError::DivisionByZero);
    }
    Ok(c.lambda1 * f.tb_passed as f64 / f.tb_total as f64 + c.lambda2 * f.n_queries as f64
        - c.lambda3 * f.n_compile_errors as f64
        - c.lambda4 * f.n_tokens as f64
        - c.lambda5 * f.n_patches as f64
        + c.base_b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_features_give_base() {
        let f = NodeFeatures {
            tb_total: 1,
            ..Default::default()
        };
        assert_eq!(heuristic_value(&f, &HeuristicCoeffs::default()), Ok(10.0));
    }

    #[test]
    fn hand_evaluated_example() {
        let f = NodeFeatures {
            tb_passed: 1,
            tb_total: 2,
            n_queries: 3,
            n_compile_errors: 1,
            n_tokens: 10_000,
            n_patches: 2,
        };
        // 25 + 3 - 5 - 5 - 6 + 10
        let v = heuristic_value(&f, &HeuristicCoeffs::default()).unwrap();
        assert!((v - 22.0).abs() < 1e-12);
        let zero = HeuristicCoeffs {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            lambda4: 0.0,
            lambda5: 0.0,
            base_b: 0.0,
        };
        assert_eq!(heuristic_value(&f, &zero), Ok(0.0));
        assert_eq!(
            heuristic_value(&NodeFeatures::default(), &zero),
            Err(HeuristicError::DivisionByZero)
        );
    }
}
