//! Record/replay fixture files.
//!
//! One file per request, named `<digest>.fixture`, where `digest` is the hex
//! SHA-256 of the canonical request encoding. The file is plain text made of
//! header lines `key [arg] [length]`; a header carrying a length is followed
//! by exactly that many bytes of UTF-8 body and a newline:
//!
//! ```text
//! medchat-fixture 1
//! digest 9f86d081884c7d65...
//! model 7
//! gpt-4.1
//! temperature 0.0
//! messages 1
//! message user 11
//! hello world
//! completion 5
//! hi!!!
//! recorded_at 2026-10-14T09:30:00.000Z
//! latency_ms 812
//! ```
//!
//! The canonical request encoding is exactly the `model` through last
//! `message` records. Any change to model, temperature, or any message byte
//! yields a different digest, so replay fails loudly instead of serving a
//! stale answer.

use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use sha2::{Digest, Sha256};

use super::{ChatRequest, LlmError, Message, MessageRole};

const MAGIC: &str = "medchat-fixture 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub request: ChatRequest,
    pub completion: String,
    pub recorded_at: DateTime<Utc>,
    pub latency: Duration,
}

fn push_body(out: &mut String, header: &str, body: &str) {
    out.push_str(header);
    out.push(' ');
    out.push_str(&body.len().to_string());
    out.push('\n');
    out.push_str(body);
    out.push('\n');
}

/// Canonical byte encoding of a request; the digest input.
pub fn canonical_request(request: &ChatRequest) -> String {
    let mut out = String::new();
    push_body(&mut out, "model", &request.model);
    out.push_str(&format!("temperature {:?}\n", request.temperature));
    out.push_str(&format!("messages {}\n", request.messages.len()));
    for m in &request.messages {
        push_body(&mut out, &format!("message {}", m.role.as_str()), &m.content);
    }
    out
}

pub fn request_digest(request: &ChatRequest) -> String {
    hex::encode(Sha256::digest(canonical_request(request).as_bytes()))
}

pub fn fixture_path(dir: &Path, digest: &str) -> PathBuf {
    dir.join(format!("{digest}.fixture"))
}

/// Millisecond precision, so a timestamp survives the text round trip.
pub fn truncate_to_millis(at: DateTime<Utc>) -> DateTime<Utc> {
    DateTime::from_timestamp_millis(at.timestamp_millis()).expect("in range")
}

impl Fixture {
    pub fn digest(&self) -> String {
        request_digest(&self.request)
    }

    pub fn encode(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        out.push_str(&format!("digest {}\n", self.digest()));
        out.push_str(&canonical_request(&self.request));
        push_body(&mut out, "completion", &self.completion);
        out.push_str(&format!(
            "recorded_at {}\n",
            self.recorded_at.to_rfc3339_opts(SecondsFormat::Millis, true)
        ));
        out.push_str(&format!("latency_ms {}\n", self.latency.as_millis()));
        out
    }

    pub fn decode(text: &str) -> Result<Self, LlmError> {
        let mut p = Parser { rest: text };
        p.expect_line(MAGIC)?;
        let digest = p.field("digest")?.to_string();
        let model = p.body("model")?;
        let temperature: f64 = p
            .field("temperature")?
            .parse()
            .map_err(|_| bad("temperature is not a number"))?;
        let count: usize = p
            .field("messages")?
            .parse()
            .map_err(|_| bad("message count is not an integer"))?;
        let mut messages = Vec::with_capacity(count);
        for _ in 0..count {
            let (header, content) = p.body_with_arg("message")?;
            let role = MessageRole::parse(header).ok_or_else(|| bad(&format!("unknown role `{header}`")))?;
            messages.push(Message { role, content });
        }
        let completion = p.body("completion")?;
        let recorded_at = DateTime::parse_from_rfc3339(p.field("recorded_at")?)
            .map_err(|e| bad(&format!("recorded_at: {e}")))?
            .with_timezone(&Utc);
        let latency_ms: u64 = p
            .field("latency_ms")?
            .parse()
            .map_err(|_| bad("latency_ms is not an integer"))?;
        if !p.rest.is_empty() {
            return Err(bad("trailing data after latency_ms"));
        }
        let fixture = Fixture {
            request: ChatRequest {
                model,
                messages,
                temperature,
            },
            completion,
            recorded_at,
            latency: Duration::from_millis(latency_ms),
        };
        if fixture.digest() != digest {
            return Err(bad(&format!(
                "stored digest {digest} does not match request content {}",
                fixture.digest()
            )));
        }
        Ok(fixture)
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))?;
        Self::decode(&text).map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))
    }

    /// Writes `<dir>/<digest>.fixture` via a temp file and rename.
    pub fn store(&self, dir: &Path) -> Result<PathBuf, LlmError> {
        let io = |e: std::io::Error| LlmError::Fixture(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        let path = fixture_path(dir, &self.digest());
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        std::fs::write(&tmp, self.encode()).map_err(io)?;
        std::fs::rename(&tmp, &path).map_err(io)?;
        Ok(path)
    }
}

fn bad(msg: &str) -> LlmError {
    LlmError::Fixture(msg.to_string())
}

struct Parser<'a> {
    rest: &'a str,
}

impl<'a> Parser<'a> {
    fn line(&mut self) -> Result<&'a str, LlmError> {
        let (line, rest) = self
            .rest
            .split_once('\n')
            .ok_or_else(|| bad("unexpected end of fixture"))?;
        self.rest = rest;
        Ok(line)
    }

    fn expect_line(&mut self, want: &str) -> Result<(), LlmError> {
        let got = self.line()?;
        if got != want {
            return Err(bad(&format!("expected `{want}`, found `{got}`")));
        }
        Ok(())
    }

    fn field(&mut self, key: &str) -> Result<&'a str, LlmError> {
        let line = self.line()?;
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| bad(&format!("expected `{key}` record, found `{line}`")))
    }

    fn take_body(&mut self, len: usize) -> Result<String, LlmError> {
        if self.rest.len() < len + 1 || !self.rest.is_char_boundary(len) {
            return Err(bad("body shorter than its length prefix"));
        }
        let (body, rest) = self.rest.split_at(len);
        let rest = rest
            .strip_prefix('\n')
            .ok_or_else(|| bad("body not terminated by newline"))?;
        self.rest = rest;
        Ok(body.to_string())
    }

    fn parse_len(s: &str) -> Result<usize, LlmError> {
        s.parse().map_err(|_| bad(&format!("bad length `{s}`")))
    }

    fn body(&mut self, key: &str) -> Result<String, LlmError> {
        let len = Self::parse_len(self.field(key)?)?;
        self.take_body(len)
    }

    fn body_with_arg(&mut self, key: &str) -> Result<(&'a str, String), LlmError> {
        let rest = self.field(key)?;
        let (arg, len) = rest
            .rsplit_once(' ')
            .ok_or_else(|| bad(&format!("`{key}` record missing length")))?;
        let len = Self::parse_len(len)?;
        Ok((arg, self.take_body(len)?))
    }
}
