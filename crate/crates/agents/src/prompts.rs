// SPDX-License-Identifier: Apache-2.0

//! System prompts, shipped as text assets.

pub const MAIN: &str = include_str!("../prompts/main.txt");
pub const TEMPLATES: &str = include_str!("../prompts/templates.txt");
pub const CONTEXT: &str = include_str!("../prompts/context.txt");
pub const LINT_FIX: &str = include_str!("../prompts/lint_fix.txt");

fn body(asset: &str) -> &str {
    asset.split_once('\n').map_or(asset, |(first, rest)| {
        if first.starts_with("prompt-version:") {
            rest
        } else {
            asset
        }
    })
}

/// Main-agent system prompt including the template guidance.
pub fn main_system() -> String {
    format!("{}\n{}", body(MAIN).trim_end(), body(TEMPLATES).trim_end())
}

pub fn context_system() -> String {
    body(CONTEXT).trim_end().to_string()
}

pub fn lint_fix_system() -> String {
    body(LINT_FIX).trim_end().to_string()
}

/// Version tags of all assets, for run reports.
pub fn versions() -> Vec<(&'static str, String)> {
    [("main", MAIN), ("templates", TEMPLATES), ("context", CONTEXT), ("lint_fix", LINT_FIX)]
        .into_iter()
        .map(|(n, a)| {
            let v = a
                .lines()
                .next()
                .and_then(|l| l.strip_prefix("prompt-version:"))
                .map_or("unversioned".to_string(), |v| v.trim().to_string());
            (n, v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_template_is_described() {
        let p = main_system();
        for t in ["replace_literal", "add_guard", "conditional_overwrite", "cycle_shift"] {
            assert!(p.contains(t), "{t}");
        }
        assert!(!p.contains("prompt-version"));
        assert!(versions().iter().all(|(_, v)| v == "1"));
    }
}
