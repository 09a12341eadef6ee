// SPDX-License-Identifier: Apache-2.0

//! SMT-LIB session with an external solver process and the minimal-change
//! search over activation flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::bmc::SmtScript;
use super::instrument::FreeVarMap;
use super::sexpr::{self, Sexpr};
use crate::bits::Bv;

pub const DEFAULT_SOLVER_CMD: &str = "z3 -in -smt2";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Command line of an SMT-LIB solver reading commands on stdin.
    pub cmd: String,
    /// Wall-clock budget for one `solve` call.
    pub timeout: Duration,
    /// Where to keep a copy of every command sent to the solver.
    pub script_path: Option<PathBuf>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            cmd: DEFAULT_SOLVER_CMD.to_string(),
            timeout: Duration::from_secs(30),
            script_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverProcessError {
    #[error("cannot start solver `{0}`: {1}")]
    Spawn(String, String),
    #[error("solver i/o failed: {0}")]
    Io(String),
    #[error("unexpected solver response: {0}")]
    Protocol(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Sat,
    Unsat,
    Timeout,
    Unknown,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Sat => "sat",
            SolveStatus::Unsat => "unsat",
            SolveStatus::Timeout => "timeout",
            SolveStatus::Unknown => "unknown",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverStats {
    pub time_ms: u64,
    pub result: SolveStatus,
    /// Minimal number of active change flags when sat.
    pub active_flags: Option<usize>,
    pub checks: usize,
}

/// Outcome of the minimal-change search before decoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolveOutcome {
    pub stats: SolverStats,
    pub model: BTreeMap<String, Bv>,
}

enum Reply {
    Line(String),
    Eof,
}

pub struct Session {
    child: Child,
    stdin: ChildStdin,
    rx: Receiver<Reply>,
    log: Option<String>,
    deadline: Instant,
}

impl Session {
    pub fn start(cfg: &SolverConfig) -> Result<Session, SolverProcessError> {
        let mut parts = cfg.cmd.split_whitespace();
        let prog = parts
            .next()
            .ok_or_else(|| SolverProcessError::Spawn(cfg.cmd.clone(), "empty command".into()))?;
        let mut child = Command::new(prog)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| SolverProcessError::Spawn(cfg.cmd.clone(), e.to_string()))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) => {
                        if tx.send(Reply::Line(l)).is_err() {
                            return;
                        }
                    }
                    Err(_) => break,
                }
            }
            let _ = tx.send(Reply::Eof);
        });
        Ok(Session {
            child,
            stdin,
            rx,
            log: cfg.script_path.as_ref().map(|_| String::new()),
            deadline: Instant::now() + cfg.timeout,
        })
    }

    pub fn send(&mut self, cmd: &str) -> Result<(), SolverProcessError> {
        if let Some(log) = &mut self.log {
            log.push_str(cmd);
            if !cmd.ends_with('\n') {
                log.push('\n');
            }
        }
        self.stdin
            .write_all(cmd.as_bytes())
            .and_then(|_| self.stdin.write_all(b"\n"))
            .and_then(|_| self.stdin.flush())
            .map_err(|e| SolverProcessError::Io(e.to_string()))
    }

    /// One complete response; `None` when the deadline passes first.
    pub fn read(&mut self) -> Result<Option<String>, SolverProcessError> {
        let mut text = String::new();
        loop {
            let left = self.deadline.saturating_duration_since(Instant::now());
            match self.rx.recv_timeout(left) {
                Ok(Reply::Line(l)) => {
                    if text.is_empty() && l.trim().is_empty() {
                        continue;
                    }
                    text.push_str(&l);
                    text.push('\n');
                    if sexpr::depth(&text) <= 0 {
                        let t = text.trim();
                        if t.starts_with("(error") {
                            return Err(SolverProcessError::Protocol(t.to_string()));
                        }
                        return Ok(Some(t.to_string()));
                    }
                }
                Ok(Reply::Eof) | Err(RecvTimeoutError::Disconnected) => {
                    return Err(SolverProcessError::Io(format!(
                        "solver exited unexpectedly{}",
                        if text.is_empty() { String::new() } else { format!(" after `{}`", text.trim()) }
                    )))
                }
                Err(RecvTimeoutError::Timeout) => return Ok(None),
            }
        }
    }

    pub fn check(&mut self) -> Result<SolveStatus, SolverProcessError> {
        self.send("(check-sat)")?;
        match self.read()? {
            None => Ok(SolveStatus::Timeout),
            Some(r) => match r.as_str() {
                "sat" => Ok(SolveStatus::Sat),
                "unsat" => Ok(SolveStatus::Unsat),
                "unknown" => Ok(SolveStatus::Unknown),
                other => Err(SolverProcessError::Protocol(other.to_string())),
            },
        }
    }

    /// Bit-vector constants of the current model.
    pub fn model(&mut self) -> Result<Option<BTreeMap<String, Bv>>, SolverProcessError> {
        self.send("(get-model)")?;
        let Some(text) = self.read()? else { return Ok(None) };
        parse_model(&text).map(Some)
    }

    fn finish(mut self, path: Option<&PathBuf>) {
        let _ = self.send("(exit)");
        let _ = self.child.kill();
        let _ = self.child.wait();
        if let (Some(p), Some(log)) = (path, self.log.take()) {
            if let Some(dir) = p.parent() {
                let _ = std::fs::create_dir_all(dir);
            }
            let _ = std::fs::write(p, log);
        }
    }
}

/// Reads `(get-model)` output; only nullary bit-vector definitions are kept.
pub fn parse_model(text: &str) -> Result<BTreeMap<String, Bv>, SolverProcessError> {
    let parsed = sexpr::parse_all(text).map_err(SolverProcessError::Protocol)?;
    let mut out = BTreeMap::new();
    let Some(Sexpr::List(items)) = parsed.first() else {
        return Err(SolverProcessError::Protocol(text.to_string()));
    };
    for it in items {
        let Some(l) = it.list() else { continue };
        if let [Sexpr::Atom(kw), Sexpr::Atom(name), Sexpr::List(args), _, value] = l {
            if kw == "define-fun" && args.is_empty() {
                if let Some(v) = sexpr::parse_bv(value) {
                    out.insert(name.clone(), v);
                }
            }
        }
    }
    Ok(out)
}

pub fn at_most(flags: &[&str], k: usize) -> String {
    if flags.is_empty() {
        return "(assert true)".to_string();
    }
    let w = usize::BITS - flags.len().leading_zeros();
    let mut sum = String::new();
    for f in flags {
        let term = if w > 1 {
            format!("((_ zero_extend {}) |{f}|)", w - 1)
        } else {
            format!("|{f}|")
        };
        if sum.is_empty() {
            sum = term;
        } else {
            sum = format!("(bvadd {sum} {term})");
        }
    }
    let mut out = String::new();
    let _ = write!(out, "(assert (bvule {sum} (_ bv{k} {w})))");
    out
}

fn active(model: &BTreeMap<String, Bv>, flags: &[&str]) -> usize {
    flags.iter().filter(|f| model.get(**f).is_some_and(|v| v.is_true())).count()
}

/// Checks the script, then searches for the fewest active change flags:
/// unconstrained first, then `<= k` for increasing `k` below the count the
/// unconstrained model used.
pub fn solve_min(script: &SmtScript, fvm: &FreeVarMap, cfg: &SolverConfig) -> Result<SolveOutcome, SolverProcessError> {
    let start = Instant::now();
    let mut s = Session::start(cfg)?;
    let flags = fvm.flags();
    let result = (|| {
        s.send(&script.text)?;
        let mut checks = 1;
        let status = s.check()?;
        if status != SolveStatus::Sat {
            return Ok((status, None, BTreeMap::new(), checks));
        }
        let Some(mut best) = s.model()? else {
            return Ok((SolveStatus::Timeout, None, BTreeMap::new(), checks));
        };
        let mut best_k = active(&best, &flags);
        for k in 0..best_k {
            s.send("(push 1)")?;
            s.send(&at_most(&flags, k))?;
            checks += 1;
            let st = s.check()?;
            match st {
                SolveStatus::Sat => {
                    let Some(m) = s.model()? else {
                        return Ok((SolveStatus::Timeout, None, BTreeMap::new(), checks));
                    };
                    best_k = active(&m, &flags);
                    best = m;
                    break;
                }
                SolveStatus::Unsat => {
                    s.send("(pop 1)")?;
                }
                other => return Ok((other, None, BTreeMap::new(), checks)),
            }
        }
        Ok((SolveStatus::Sat, Some(best_k), best, checks))
    })();
    s.finish(cfg.script_path.as_ref());
    let (status, k, model, checks) = result?;
    Ok(SolveOutcome {
        stats: SolverStats {
            time_ms: start.elapsed().as_millis() as u64,
            result: status,
            active_flags: k,
            checks,
        },
        model,
    })
}

/// Satisfiability of a script with no further constraints.
pub fn check_script(script: &SmtScript, cfg: &SolverConfig) -> Result<SolveStatus, SolverProcessError> {
    let mut s = Session::start(cfg)?;
    let r = s.send(&script.text).and_then(|_| s.check());
    s.finish(cfg.script_path.as_ref());
    r
}

/// Whether the configured solver can be started.
pub fn solver_available(cfg: &SolverConfig) -> bool {
    let Ok(mut s) = Session::start(cfg) else { return false };
    let ok = s.send("(set-logic QF_BV)").and_then(|_| s.check()).is_ok_and(|r| r == SolveStatus::Sat);
    s.finish(None);
    ok
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinality_text() {
        assert_eq!(at_most(&["a"], 0), "(assert (bvule |a| (_ bv0 1)))");
        let t = at_most(&["a", "b", "c"], 1);
        assert!(t.contains("(_ bv1 2)"));
        assert_eq!(sexpr::depth(&t), 0);
    }

    #[test]
    fn model_parse() {
        let m = parse_model("(\n  (define-fun |$flag.s0| () (_ BitVec 1)\n    #b1)\n  (define-fun f ((x Int)) Int x))").unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m["$flag.s0"], Bv::new(1, 1));
    }
}
