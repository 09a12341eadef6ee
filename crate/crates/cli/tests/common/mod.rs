// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rtlfix_agents::{AgentKind, ChatRequest, LlmBackend, Message, Role, ToolCall};
use rtlfix_cli::commands::cmd_synth_bench;
use rtlfix_cli::oracle::{Oracle, OracleStyle};
use rtlfix_cli::synth::{BugClass, BugInjection};
use serde_json::{json, Value};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        if e.file_type().unwrap().is_file() {
            fs::copy(e.path(), to.join(e.file_name())).unwrap();
        }
    }
}

/// A generated bench in a fresh temporary directory.
pub fn bench(seed: u64, class: BugClass, fixture: Option<OracleStyle>) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth_bench(seed, class, dir.path(), fixture, &mut Vec::new()).unwrap();
    dir
}

pub fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Replaces `key = ...` in section `[section]` of a config text.
pub fn set_key(cfg: &Path, section: &str, key: &str, value: &str) {
    let text = read(cfg);
    let mut out = String::new();
    let mut cur = String::new();
    let mut done = false;
    for line in text.lines() {
        if line.starts_with('[') {
            if cur == section && !done {
                out.push_str(&format!("{key} = {value}\n"));
                done = true;
            }
            cur = line.trim_matches(|c| c == '[' || c == ']').to_string();
        }
        if cur == section && line.split('=').next().map(str::trim) == Some(key) {
            out.push_str(&format!("{key} = {value}\n"));
            done = true;
            continue;
        }
        out.push_str(line);
        out.push('\n');
    }
    if !done {
        if cur != section {
            out.push_str(&format!("\n[{section}]\n"));
        }
        out.push_str(&format!("{key} = {value}\n"));
    }
    fs::write(cfg, out).unwrap();
}

fn from_wire(v: &Value) -> Message {
    let role: Role = serde_json::from_value(v["role"].clone()).unwrap();
    let content = v["content"].as_str().unwrap_or("").to_string();
    let tool_call = v.pointer("/tool_calls/0/function").map(|f| {
        let args = serde_json::from_str(f["arguments"].as_str().unwrap_or("{}")).unwrap_or(json!({}));
        ToolCall::new(f["name"].as_str().unwrap(), args)
    });
    Message {
        role,
        content,
        tool_call,
    }
}

fn agent_of(body: &Value) -> AgentKind {
    let names: Vec<&str> = body["tools"]
        .as_array()
        .map(|a| a.iter().filter_map(|t| t.pointer("/function/name")?.as_str()).collect())
        .unwrap_or_default();
    if names.contains(&"run_sim") {
        AgentKind::Main
    } else if names.contains(&"emit_patch") {
        AgentKind::LintFix
    } else {
        AgentKind::Context
    }
}

pub struct MockServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
}

/// An OpenAI-style chat-completions endpoint answered by the scripted agent.
pub fn serve(bug: BugInjection, style: OracleStyle) -> MockServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        let mut oracle = Oracle::new(bug, style);
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut auth = false;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
                auth |= lower.starts_with("authorization: bearer ");
            }
            let mut body = vec![0u8; len];
            reader.read_exact(&mut body).unwrap();
            let body: Value = serde_json::from_slice(&body).unwrap();
            counter.fetch_add(1, Ordering::SeqCst);
            let (status, resp) = if !auth {
                ("401 Unauthorized", json!({"error": "no key"}))
            } else {
                let messages: Vec<Message> = body["messages"].as_array().unwrap().iter().map(from_wire).collect();
                let req = ChatRequest {
                    agent: agent_of(&body),
                    messages: &messages,
                    tools: &[],
                };
                let r = oracle.chat(&req).unwrap();
                let mut msg = json!({"role": "assistant", "content": r.content});
                if let Some(tc) = r.tool_call {
                    msg["tool_calls"] = json!([{"id": "x", "type": "function",
                        "function": {"name": tc.name, "arguments": tc.args.to_string()}}]);
                }
                ("200 OK", json!({"choices": [{"message": msg}], "usage": {"total_tokens": r.tokens}}))
            };
            let text = resp.to_string();
            let _ = write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            );
        }
    });
    MockServer { url, hits }
}
