use std::collections::BTreeSet;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::protocol::{quad_to_wire, AdapterMessage, Logits, TaskKind, PROTOCOL_VERSION};
use super::{default_timeout, Backend, BackendDescriptor, BackendKind, Capability, Transport};
use crate::error::{Error, Result};
use crate::types::{LogitVector, Quadruple, Sentence, TagLogits};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConnectOptions {
    /// Applies to connecting, the hello, and every response.
    #[serde(with = "millis")]
    pub timeout: Duration,
}

impl Default for ConnectOptions {
    fn default() -> Self {
        ConnectOptions { timeout: default_timeout() }
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    next_id: u64,
    child: Option<Child>,
    socket: Option<TcpStream>,
}

/// A handle on a model process speaking the adapter protocol. Requests on
/// one handle are serialized.
pub struct ExternalBackend {
    name: String,
    capabilities: BTreeSet<Capability>,
    timeout: Duration,
    conn: Mutex<Connection>,
}

impl std::fmt::Debug for ExternalBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalBackend").field("name", &self.name).field("capabilities", &self.capabilities).finish()
    }
}

/// Starts or dials the process described by `descriptor` and completes the
/// handshake.
pub fn connect_external(descriptor: &BackendDescriptor, options: &ConnectOptions) -> Result<ExternalBackend> {
    descriptor.validate()?;
    let BackendKind::External { transport } = &descriptor.kind else {
        return Err(Error::InvalidConfig(format!("backend {:?} is not external", descriptor.name)));
    };
    let backend = match transport {
        Transport::ChildProcess { program, args } => {
            let mut child = Command::new(program)
                .args(args)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| Error::BackendUnavailable(format!("cannot start {program:?}: {e}")))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            let mut backend = ExternalBackend::from_streams(&descriptor.name, BufReader::new(stdout), stdin, options);
            if let Ok(b) = &mut backend {
                b.conn.get_mut().expect("fresh lock").child = Some(child);
            } else {
                let _ = child.kill();
                let _ = child.wait();
            }
            backend?
        }
        Transport::Tcp { address } => {
            let addr = address
                .to_socket_addrs()
                .map_err(|e| Error::BackendUnavailable(format!("cannot resolve {address:?}: {e}")))?
                .next()
                .ok_or_else(|| Error::BackendUnavailable(format!("{address:?} resolves to nothing")))?;
            let stream = TcpStream::connect_timeout(&addr, options.timeout).map_err(|e| match e.kind() {
                io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => Error::Timeout(format!("connecting to {address}")),
                _ => Error::BackendUnavailable(format!("cannot connect to {address}: {e}")),
            })?;
            let _ = stream.set_nodelay(true);
            let reader = BufReader::new(stream.try_clone()?);
            let socket = stream.try_clone()?;
            let mut backend = ExternalBackend::from_streams(&descriptor.name, reader, stream, options)?;
            backend.conn.get_mut().expect("fresh lock").socket = Some(socket);
            backend
        }
    };
    if let Some(cap) = descriptor.capabilities.iter().find(|c| !backend.capabilities.contains(c)) {
        return Err(Error::HandshakeFailure(format!("{:?} does not advertise {cap}", descriptor.name)));
    }
    Ok(backend)
}

impl ExternalBackend {
    /// Runs the handshake over an already-open pair of streams.
    pub fn from_streams(
        name: &str,
        reader: impl BufRead + Send + 'static,
        writer: impl Write + Send + 'static,
        options: &ConnectOptions,
    ) -> Result<Self> {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in reader.lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let conn = Connection { writer: Box::new(writer), lines: rx, next_id: 1, child: None, socket: None };
        let line = match conn.lines.recv_timeout(options.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(Error::HandshakeFailure(format!("reading hello: {e}"))),
            Err(RecvTimeoutError::Timeout) => return Err(Error::Timeout(format!("waiting for hello from {name:?}"))),
            Err(RecvTimeoutError::Disconnected) => return Err(Error::HandshakeFailure("closed before hello".into())),
        };
        let capabilities = match serde_json::from_str::<AdapterMessage>(&line) {
            Ok(AdapterMessage::Hello { version, capabilities, tagset, labelset }) => {
                if version != PROTOCOL_VERSION {
                    return Err(Error::HandshakeFailure(format!("unsupported protocol version {version}")));
                }
                if tagset != Capability::Token9Tag.alphabet() || labelset != Capability::Quintuple9Label.alphabet() {
                    return Err(Error::HandshakeFailure("tag or label set differs from the expected alphabet".into()));
                }
                capabilities.into_iter().collect()
            }
            Ok(_) => return Err(Error::HandshakeFailure("first message is not a hello".into())),
            Err(e) => return Err(Error::HandshakeFailure(format!("malformed hello: {e}"))),
        };
        Ok(ExternalBackend { name: name.to_string(), capabilities, timeout: options.timeout, conn: Mutex::new(conn) })
    }

    fn call(&self, task: TaskKind, sentence: &Sentence, quad: Option<&Quadruple>) -> Result<Logits> {
        let mut conn = self.conn.lock().map_err(|_| Error::BackendUnavailable("connection poisoned".into()))?;
        let id = conn.next_id;
        conn.next_id += 1;
        let request = AdapterMessage::Request {
            id,
            task,
            tokens: sentence.words().map(str::to_string).collect(),
            quad: quad.map(quad_to_wire),
        };
        let sent = conn.writer.write_all(request.to_line().as_bytes()).and_then(|_| conn.writer.flush());
        if let Err(e) = sent {
            return Err(Error::BackendUnavailable(format!("{}: {e}", self.name)));
        }
        let line = match conn.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(Error::BackendUnavailable(format!("{}: {e}", self.name))),
            Err(RecvTimeoutError::Timeout) => return Err(Error::Timeout(format!("request {id} to {:?}", self.name))),
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::BackendUnavailable(format!("{} closed the connection", self.name)))
            }
        };
        match serde_json::from_str::<AdapterMessage>(&line) {
            Ok(AdapterMessage::Response { id: got, logits }) if got == id => Ok(logits),
            Ok(AdapterMessage::Error { id: Some(got), message }) if got == id => Err(Error::Backend(message)),
            Ok(AdapterMessage::Error { id: None, message }) => Err(Error::Backend(message)),
            Ok(other) => Err(Error::Protocol(format!("unexpected reply to request {id}: {}", other.to_line().trim()))),
            Err(e) => Err(Error::Protocol(format!("malformed reply: {e}"))),
        }
    }
}

fn flat(logits: Logits) -> Result<LogitVector> {
    match logits {
        Logits::Flat(v) => Ok(LogitVector(v)),
        Logits::Rows(_) => Err(Error::Protocol("expected a flat logit vector".into())),
    }
}

impl Backend for ExternalBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> BTreeSet<Capability> {
        self.capabilities.clone()
    }

    fn sentence_logits(&self, batch: &[Sentence]) -> Result<Vec<LogitVector>> {
        batch.iter().map(|s| flat(self.call(TaskKind::Sentence, s, None)?)).collect()
    }

    fn token_logits(&self, batch: &[Sentence]) -> Result<Vec<TagLogits>> {
        batch
            .iter()
            .map(|s| match self.call(TaskKind::Tag, s, None)? {
                Logits::Rows(rows) => Ok(TagLogits(rows.into_iter().map(LogitVector).collect())),
                // `[]` parses as an empty flat vector: zero rows.
                Logits::Flat(v) if v.is_empty() => Ok(TagLogits::default()),
                Logits::Flat(_) => Err(Error::Protocol("expected one logit row per token".into())),
            })
            .collect()
    }

    fn quadruple_logits(&self, sentence: &Sentence, quads: &[Quadruple]) -> Result<Vec<LogitVector>> {
        quads.iter().map(|q| flat(self.call(TaskKind::Quadruple, sentence, Some(q))?)).collect()
    }
}

impl Drop for ExternalBackend {
    fn drop(&mut self) {
        if let Ok(conn) = self.conn.get_mut() {
            if let Some(child) = conn.child.as_mut() {
                let _ = child.kill();
                let _ = child.wait();
            }
            if let Some(socket) = &conn.socket {
                let _ = socket.shutdown(std::net::Shutdown::Both);
            }
        }
    }
}
