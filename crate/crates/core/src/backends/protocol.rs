//! The adapter wire protocol: one JSON object per line over a child
//! process's stdio or a TCP stream.
//!
//! The server speaks first with a `hello`; every `request` is answered by a
//! `response` or an `error` carrying the same id, in request order.
//!
//! ```
//! use comom::backends::protocol::{AdapterMessage, TaskKind};
//!
//! let line = r#"{"type":"request","id":7,"task":"tag","tokens":["A","tốt","hơn","B"]}"#;
//! let msg: AdapterMessage = serde_json::from_str(line).unwrap();
//! assert!(matches!(msg, AdapterMessage::Request { id: 7, task: TaskKind::Tag, .. }));
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{classify_quadruples, classify_sentence, tag_tokens, Backend, Capability};
use crate::error::{Error, Result};
use crate::types::{ElementKind, Quadruple, Sentence, TokenSpan};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Sentence,
    Tag,
    Quadruple,
}

impl TaskKind {
    pub fn capability(self) -> Capability {
        match self {
            TaskKind::Sentence => Capability::Sentence2Way,
            TaskKind::Tag => Capability::Token9Tag,
            TaskKind::Quadruple => Capability::Quintuple9Label,
        }
    }

    pub fn for_capability(capability: Capability) -> Self {
        match capability {
            Capability::Sentence2Way => TaskKind::Sentence,
            Capability::Token9Tag => TaskKind::Tag,
            Capability::Quintuple9Label => TaskKind::Quadruple,
        }
    }
}

/// Either one vector or one row per token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Logits {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

/// Slots in subject, object, aspect, predicate order.
pub type WireQuad = [Option<TokenSpan>; 4];

pub fn quad_to_wire(quad: &Quadruple) -> WireQuad {
    ElementKind::ALL.map(|k| quad.get(k))
}

pub fn quad_from_wire(wire: &WireQuad) -> Quadruple {
    let mut quad = Quadruple::default();
    for (kind, span) in ElementKind::ALL.into_iter().zip(wire) {
        quad.set(kind, *span);
    }
    quad
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum AdapterMessage {
    Hello {
        version: u32,
        capabilities: Vec<Capability>,
        tagset: Vec<String>,
        labelset: Vec<String>,
    },
    Request {
        id: u64,
        task: TaskKind,
        tokens: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        quad: Option<WireQuad>,
    },
    Response {
        id: u64,
        logits: Logits,
    },
    Error {
        id: Option<u64>,
        message: String,
    },
}

impl AdapterMessage {
    /// The hello a server with `capabilities` sends on connect.
    pub fn hello(capabilities: impl IntoIterator<Item = Capability>) -> Self {
        AdapterMessage::Hello {
            version: PROTOCOL_VERSION,
            capabilities: capabilities.into_iter().collect(),
            tagset: Capability::Token9Tag.alphabet(),
            labelset: Capability::Quintuple9Label.alphabet(),
        }
    }

    /// One line of JSON, newline included.
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("messages serialize");
        line.push('\n');
        line
    }
}

/// Counters from one [`serve`] session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServeStats {
    pub requests: usize,
    pub errors: usize,
}

/// Answers requests from `input` with `backend` until end of input. Malformed
/// lines get an error with a null id and the session continues.
pub fn serve(backend: &dyn Backend, input: impl BufRead, mut output: impl Write) -> Result<ServeStats> {
    output.write_all(AdapterMessage::hello(backend.capabilities()).to_line().as_bytes())?;
    output.flush()?;
    let mut stats = ServeStats::default();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<AdapterMessage>(&line) {
            Ok(AdapterMessage::Request { id, task, tokens, quad }) => {
                stats.requests += 1;
                match answer(backend, task, &tokens, quad.as_ref()) {
                    Ok(logits) => AdapterMessage::Response { id, logits },
                    Err(e) => AdapterMessage::Error { id: Some(id), message: e.to_string() },
                }
            }
            Ok(_) => AdapterMessage::Error { id: None, message: "expected a request".into() },
            Err(e) => AdapterMessage::Error { id: None, message: format!("malformed request: {e}") },
        };
        if matches!(reply, AdapterMessage::Error { .. }) {
            stats.errors += 1;
        }
        output.write_all(reply.to_line().as_bytes())?;
        output.flush()?;
    }
    Ok(stats)
}

fn answer(backend: &dyn Backend, task: TaskKind, tokens: &[String], quad: Option<&WireQuad>) -> Result<Logits> {
    if tokens.iter().any(|t| t.is_empty() || t.chars().any(char::is_whitespace)) {
        return Err(Error::Protocol("tokens must be non-empty and contain no whitespace".into()));
    }
    let sentence = Sentence::from_words("request", tokens, Vec::new())?;
    let batch = std::slice::from_ref(&sentence);
    match task {
        TaskKind::Sentence => {
            if quad.is_some() {
                return Err(Error::Protocol("quad is only allowed on quadruple requests".into()));
            }
            Ok(Logits::Flat(classify_sentence(backend, batch)?.remove(0).0))
        }
        TaskKind::Tag => {
            if quad.is_some() {
                return Err(Error::Protocol("quad is only allowed on quadruple requests".into()));
            }
            let rows = tag_tokens(backend, batch)?.remove(0);
            Ok(Logits::Rows(rows.0.into_iter().map(|r| r.0).collect()))
        }
        TaskKind::Quadruple => {
            let quad = quad_from_wire(quad.ok_or_else(|| Error::Protocol("quadruple request without quad".into()))?);
            if quad.is_empty() {
                return Err(Error::EmptyQuintuple);
            }
            Ok(Logits::Flat(classify_quadruples(backend, &sentence, &[quad])?.remove(0).0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_literal() {
        let hello = AdapterMessage::hello([Capability::Sentence2Way]);
        let expected = concat!(
            r#"{"type":"hello","version":1,"capabilities":["sentence-2way"],"#,
            r#""tagset":["O","B-SUB","I-SUB","B-OBJ","I-OBJ","B-ASP","I-ASP","B-PRED","I-PRED"],"#,
            r#""labelset":["DIF","EQL","SUP+","SUP-","SUP","COM+","COM-","COM","NONE"]}"#,
            "\n"
        );
        assert_eq!(hello.to_line(), expected);
    }

    #[test]
    fn messages_round_trip() {
        let msgs = [
            AdapterMessage::Request {
                id: 3,
                task: TaskKind::Quadruple,
                tokens: vec!["A".into(), "hơn".into()],
                quad: Some([Some(TokenSpan::single(0)), None, None, Some(TokenSpan::single(1))]),
            },
            AdapterMessage::Response { id: 3, logits: Logits::Rows(vec![vec![0.5; 9]]) },
            AdapterMessage::Error { id: None, message: "bad".into() },
        ];
        for m in msgs {
            assert_eq!(serde_json::from_str::<AdapterMessage>(m.to_line().trim()).unwrap(), m);
        }
        let req = r#"{"type":"request","id":1,"task":"quadruple","tokens":["A"],"quad":[[0,0],null,null,null]}"#;
        assert_eq!(serde_json::to_string(&serde_json::from_str::<AdapterMessage>(req).unwrap()).unwrap(), req);
    }

    #[test]
    fn unknown_fields_and_types_are_rejected() {
        assert!(serde_json::from_str::<AdapterMessage>(r#"{"type":"ping"}"#).is_err());
        assert!(serde_json::from_str::<AdapterMessage>(r#"{"type":"response","id":1,"logits":[1],"x":0}"#).is_err());
    }
}
