// SPDX-License-Identifier: Apache-2.0

//! Chat-completions HTTP endpoint with native function calling.

use std::time::Duration;

use serde_json::{json, Value};

use super::{approx_call_tokens, ChatRequest, LlmBackend, LlmError, LlmReply};
use crate::transcript::{Message, Role, ToolCall};

pub const ENV_URL: &str = "RTLFIX_LLM_URL";
pub const ENV_MODEL: &str = "RTLFIX_LLM_MODEL";
pub const ENV_KEY: &str = "RTLFIX_LLM_KEY";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LiveConfig {
    pub url: Option<String>,
    pub model: Option<String>,
    pub key: Option<String>,
    pub timeout: Duration,
}

impl LiveConfig {
    pub fn from_env() -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        LiveConfig {
            url: var(ENV_URL),
            model: var(ENV_MODEL),
            key: var(ENV_KEY),
            timeout: Duration::from_secs(300),
        }
    }
}

/// Settings are checked lazily so that construction never fails; a missing
/// URL, model or key is a transport error on the first call.
pub struct LiveBackend {
    cfg: LiveConfig,
    agent: ureq::Agent,
}

impl LiveBackend {
    pub fn new(cfg: LiveConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(cfg.timeout).build();
        LiveBackend { cfg, agent }
    }

    fn endpoint(&self) -> Result<String, LlmError> {
        let base = self
            .cfg
            .url
            .as_deref()
            .ok_or_else(|| LlmError::Transport(format!("{ENV_URL} is not set")))?;
        let base = base.trim_end_matches('/');
        Ok(if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        })
    }
}

fn call_id(pos: usize) -> String {
    format!("call_{pos}")
}

/// Converts a transcript to the wire format. Tool calls get ids derived
/// from their position so tool results can refer to them.
pub(crate) fn wire_messages(messages: &[Message]) -> Vec<Value> {
    let mut out = Vec::with_capacity(messages.len());
    for (i, m) in messages.iter().enumerate() {
        let v = match (m.role, &m.tool_call) {
            (Role::Assistant, Some(tc)) => json!({
                "role": "assistant",
                "content": m.content,
                "tool_calls": [{
                    "id": call_id(i),
                    "type": "function",
                    "function": {"name": tc.name, "arguments": tc.args.to_string()},
                }],
            }),
            (Role::Tool, _) => json!({
                "role": "tool",
                "tool_call_id": call_id(i.saturating_sub(1)),
                "content": m.content,
            }),
            (role, _) => json!({"role": role.to_string(), "content": m.content}),
        };
        out.push(v);
    }
    out
}

pub(crate) fn parse_reply(body: &Value) -> Result<(String, Option<ToolCall>, Option<u64>), LlmError> {
    let msg = body
        .pointer("/choices/0/message")
        .ok_or_else(|| LlmError::Transport(format!("response has no choices: {body}")))?;
    let content = msg.get("content").and_then(Value::as_str).unwrap_or("").to_string();
    let tool_call = match msg.pointer("/tool_calls/0/function") {
        Some(f) => {
            let name = f
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| LlmError::Transport("tool call without a name".into()))?;
            let args = match f.get("arguments") {
                Some(Value::String(s)) if s.trim().is_empty() => json!({}),
                Some(Value::String(s)) => serde_json::from_str(s)
                    .map_err(|e| LlmError::Transport(format!("tool arguments are not JSON: {e}")))?,
                Some(v) => v.clone(),
                None => json!({}),
            };
            Some(ToolCall::new(name, args))
        }
        None => None,
    };
    let tokens = body.pointer("/usage/total_tokens").and_then(Value::as_u64);
    Ok((content, tool_call, tokens))
}

impl LlmBackend for LiveBackend {
    fn chat(&mut self, req: &ChatRequest<'_>) -> Result<LlmReply, LlmError> {
        let key = self
            .cfg
            .key
            .clone()
            .ok_or_else(|| LlmError::Transport(format!("{ENV_KEY} is not set")))?;
        let model = self
            .cfg
            .model
            .clone()
            .ok_or_else(|| LlmError::Transport(format!("{ENV_MODEL} is not set")))?;
        let url = self.endpoint()?;
        let mut body = json!({"model": model, "messages": wire_messages(req.messages)});
        if !req.tools.is_empty() {
            let tools: Vec<Value> = req
                .tools
                .iter()
                .map(|t| {
                    json!({"type": "function", "function": {
                        "name": t.name, "description": t.description, "parameters": t.parameters}})
                })
                .collect();
            body["tools"] = Value::Array(tools);
        }
        let resp = self
            .agent
            .post(&url)
            .set("Authorization", &format!("Bearer {key}"))
            .send_json(body)
            .map_err(|e| match e {
                ureq::Error::Status(code, r) => {
                    LlmError::Transport(format!("HTTP {code}: {}", r.into_string().unwrap_or_default()))
                }
                other => LlmError::Transport(other.to_string()),
            })?;
        let body: Value = resp
            .into_json()
            .map_err(|e| LlmError::Transport(format!("response is not JSON: {e}")))?;
        let (content, tool_call, tokens) = parse_reply(&body)?;
        let tokens = tokens.unwrap_or_else(|| approx_call_tokens(req.messages, &content, tool_call.as_ref()));
        Ok(LlmReply {
            content,
            tool_call,
            tokens,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::AgentKind;

    #[test]
    fn missing_key_fails_on_first_call() {
        let mut b = LiveBackend::new(LiveConfig {
            url: Some("http://127.0.0.1:9".into()),
            model: Some("m".into()),
            key: None,
            timeout: Duration::from_secs(1),
        });
        let e = b
            .chat(&ChatRequest {
                agent: AgentKind::Main,
                messages: &[],
                tools: &[],
            })
            .unwrap_err();
        assert!(e.is_retryable());
        assert!(e.to_string().contains(ENV_KEY));
    }

    #[test]
    fn wire_roundtrip() {
        let msgs = vec![
            Message::new(Role::User, "go"),
            Message {
                role: Role::Assistant,
                content: String::new(),
                tool_call: Some(ToolCall::new("read_file", json!({"file": "a.v"}))),
            },
            Message::new(Role::Tool, "text"),
        ];
        let w = wire_messages(&msgs);
        assert_eq!(w[1]["tool_calls"][0]["id"], "call_1");
        assert_eq!(w[2]["tool_call_id"], "call_1");
        let body = json!({"choices": [{"message": {"content": null, "tool_calls": [{"function":
            {"name": "run_sim", "arguments": "{\"testbench\": 0}"}}]}}], "usage": {"total_tokens": 42}});
        let (c, tc, t) = parse_reply(&body).unwrap();
        assert_eq!(c, "");
        assert_eq!(tc.unwrap().args["testbench"], 0);
        assert_eq!(t, Some(42));
    }
}
