//! Newline-delimited JSON channel to an external worker process or TCP peer.
//!
//! Both the scorer and the tagger protocols run over this channel. Every
//! message is a single JSON object on one line. The session opens with
//! `{"hello":<service>,"version":1}`, answered by
//! `{"ack":<service>,"version":1,...}`. Requests may be pipelined and the
//! peer must answer in request order.
//!
//! Replies are read on a dedicated thread so that every wait can time out;
//! a peer that dies or stops answering turns into an error, never a hang.
//! After a transport failure the channel is poisoned and every later call
//! fails fast with [`ProtocolError::Unavailable`].

use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, TcpStream};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("peer unavailable: {0}")]
    Unavailable(String),
    #[error("handshake timed out after {0:?}")]
    HandshakeTimeout(Duration),
    #[error("no reply within {0:?}")]
    ReplyTimeout(Duration),
    #[error("protocol version mismatch: ours {ours}, theirs {theirs}")]
    VersionMismatch { ours: u64, theirs: u64 },
    #[error("protocol error: {0}")]
    Protocol(String),
}

/// Where an external worker lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Shell command line; the child speaks over stdin/stdout.
    Exec(String),
    /// `host:port` of a listening peer.
    Tcp(String),
}

impl Endpoint {
    pub fn open(&self, timeout: Duration) -> Result<LineChannel, ProtocolError> {
        match self {
            Endpoint::Exec(cmd) => LineChannel::spawn(cmd, timeout),
            Endpoint::Tcp(addr) => LineChannel::connect(addr, timeout),
        }
    }
}

pub struct LineChannel {
    writer: Box<dyn Write + Send>,
    replies: Receiver<io::Result<String>>,
    child: Option<Child>,
    socket: Option<TcpStream>,
    timeout: Duration,
    poisoned: Option<String>,
}

impl LineChannel {
    /// Run `cmd` through `sh -c` with piped stdin/stdout. The child's stderr is inherited.
    pub fn spawn(cmd: &str, timeout: Duration) -> Result<Self, ProtocolError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(cmd)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ProtocolError::Unavailable(format!("cannot start {cmd:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut channel = LineChannel::from_streams(stdout, stdin, timeout);
        channel.child = Some(child);
        Ok(channel)
    }

    pub fn connect(addr: &str, timeout: Duration) -> Result<Self, ProtocolError> {
        let stream = TcpStream::connect(addr)
            .map_err(|e| ProtocolError::Unavailable(format!("cannot connect to {addr}: {e}")))?;
        let reader = stream
            .try_clone()
            .map_err(|e| ProtocolError::Unavailable(format!("cannot clone socket: {e}")))?;
        let handle = stream
            .try_clone()
            .map_err(|e| ProtocolError::Unavailable(format!("cannot clone socket: {e}")))?;
        let mut channel = LineChannel::from_streams(reader, stream, timeout);
        channel.socket = Some(handle);
        Ok(channel)
    }

    pub fn from_streams<R, W>(reader: R, writer: W, timeout: Duration) -> Self
    where
        R: io::Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        LineChannel { writer: Box::new(writer), replies: rx, child: None, socket: None, timeout, poisoned: None }
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    fn check(&self) -> Result<(), ProtocolError> {
        match &self.poisoned {
            Some(why) => Err(ProtocolError::Unavailable(why.clone())),
            None => Ok(()),
        }
    }

    /// Mark the channel dead; later calls fail with `Unavailable`.
    pub fn poison(&mut self, err: &ProtocolError) {
        if self.poisoned.is_none() {
            self.poisoned = Some(err.to_string());
        }
    }

    pub fn send_all(&mut self, messages: &[Value]) -> Result<(), ProtocolError> {
        self.check()?;
        let mut buf = Vec::new();
        for m in messages {
            serde_json::to_writer(&mut buf, m).expect("serializing a JSON value");
            buf.push(b'\n');
        }
        let res = self.writer.write_all(&buf).and_then(|_| self.writer.flush());
        res.map_err(|e| {
            let err = ProtocolError::Unavailable(format!("write failed: {e}"));
            self.poison(&err);
            err
        })
    }

    pub fn send(&mut self, message: &Value) -> Result<(), ProtocolError> {
        self.send_all(std::slice::from_ref(message))
    }

    /// Next reply as a JSON object. Transport failures and malformed lines poison the channel.
    pub fn recv(&mut self) -> Result<Value, ProtocolError> {
        self.recv_within(self.timeout)
    }

    fn recv_within(&mut self, timeout: Duration) -> Result<Value, ProtocolError> {
        self.check()?;
        let res = match self.replies.recv_timeout(timeout) {
            Ok(Ok(line)) => match serde_json::from_str::<Value>(line.trim_end()) {
                Ok(v @ Value::Object(_)) => Ok(v),
                Ok(_) => Err(ProtocolError::Protocol(format!("reply is not a JSON object: {}", line.trim_end()))),
                Err(e) => Err(ProtocolError::Protocol(format!("unparseable reply {:?}: {e}", line.trim_end()))),
            },
            Ok(Err(e)) => Err(ProtocolError::Unavailable(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Disconnected) => Err(ProtocolError::Unavailable("peer closed the stream".into())),
            Err(RecvTimeoutError::Timeout) => Err(ProtocolError::ReplyTimeout(timeout)),
        };
        if let Err(e) = &res {
            self.poison(e);
        }
        res
    }

    /// Exchange the opening hello/ack for `service`. Returns the ack object.
    pub fn handshake(&mut self, service: &str) -> Result<Value, ProtocolError> {
        self.send(&json!({"hello": service, "version": PROTOCOL_VERSION}))?;
        let ack = match self.recv_within(self.timeout) {
            Err(ProtocolError::ReplyTimeout(t)) => {
                let err = ProtocolError::HandshakeTimeout(t);
                self.poisoned = Some(err.to_string());
                return Err(err);
            }
            other => other?,
        };
        let result = if ack.get("ack").and_then(Value::as_str) != Some(service) {
            Err(ProtocolError::Protocol(format!("expected ack for {service:?}, got {ack}")))
        } else {
            match ack.get("version").and_then(Value::as_u64) {
                Some(PROTOCOL_VERSION) => Ok(ack),
                Some(theirs) => Err(ProtocolError::VersionMismatch { ours: PROTOCOL_VERSION, theirs }),
                None => Err(ProtocolError::Protocol(format!("ack without version: {ack}"))),
            }
        };
        if let Err(e) = &result {
            self.poison(e);
        }
        result
    }
}

impl Drop for LineChannel {
    fn drop(&mut self) {
        // the reader thread holds a clone of the socket, so close it explicitly
        if let Some(socket) = self.socket.take() {
            let _ = socket.shutdown(Shutdown::Both);
        }
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Pull the `id` field of a reply and check it against the expected request id.
pub fn expect_reply_id(reply: &Value, expected: &str) -> Result<(), ProtocolError> {
    match reply.get("id").and_then(Value::as_str) {
        Some(id) if id == expected => Ok(()),
        Some(id) => Err(ProtocolError::Protocol(format!("reply id {id:?} does not match request id {expected:?}"))),
        None => Err(ProtocolError::Protocol(format!("reply without id: {reply}"))),
    }
}
