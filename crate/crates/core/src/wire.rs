//! Length-prefixed frames carrying one term each, and the message vocabulary.
//!
//! A frame is a 4-byte big-endian payload length followed by the canonical
//! text of a single term. Every request gets exactly one reply frame.

use std::fmt;
use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::time::Duration;

use crate::events::EventLog;
use crate::term::{canonical_text, parse_term, Atom, Term};

pub const MAX_FRAME: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("frame_too_large({0})")]
    FrameTooLarge(usize),
    #[error("protocol_error({0})")]
    Protocol(String),
    #[error("net_error({0})")]
    Net(String),
}

impl WireError {
    pub fn to_term(&self) -> Term {
        match self {
            WireError::FrameTooLarge(n) => Term::compound("frame_too_large", vec![Term::Int(*n as i64)]),
            WireError::Protocol(m) => Term::compound("protocol_error", vec![Term::atom(m)]),
            WireError::Net(m) => Term::compound("net_error", vec![Term::atom(m)]),
        }
    }
}

impl From<io::Error> for WireError {
    fn from(e: io::Error) -> WireError {
        WireError::Net(e.kind().to_string().replace(' ', "_"))
    }
}

/// Host, port and the password used for gated requests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub host: String,
    pub port: u16,
    pub password: Option<String>,
}

impl Endpoint {
    pub fn new(host: impl Into<String>, port: u16) -> Endpoint {
        Endpoint { host: host.into(), port, password: None }
    }

    pub fn with_password(mut self, pw: impl Into<String>) -> Endpoint {
        self.password = Some(pw.into());
        self
    }

    /// Reads `host:port`.
    pub fn parse(s: &str) -> Option<Endpoint> {
        let (h, p) = s.rsplit_once(':')?;
        let port = p.parse().ok()?;
        let host = if h.is_empty() { "127.0.0.1" } else { h };
        Some(Endpoint::new(host, port))
    }

    pub fn addr(&self) -> String {
        format!("{}:{}", self.host, self.port)
    }

    pub fn password_atom(&self) -> Atom {
        Atom::new(self.password.as_deref().unwrap_or(""))
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.host, self.port)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    LindaOut(Term),
    LindaIn(Term),
    LindaAll(Term),
    Run { pwd: Atom, goal: Term, vars: Term },
    Fetch { pwd: Atom, key: Term },
    Rload { pwd: Atom, file: Atom },
    Stop { pwd: Atom },
    Register(Term),
    Lookup(Term),
    Ok,
    The(Term),
    No,
    Tuples(Vec<Term>),
    Clauses(Vec<Term>),
    Denied,
    Err(Term),
}

fn list_items(t: &Term) -> Option<Vec<Term>> {
    let mut out = Vec::new();
    let mut cur = t;
    while cur.is_struct(".", 2) {
        out.push(cur.args()[0].clone());
        cur = &cur.args()[1];
    }
    if cur.is_atom("[]") {
        Some(out)
    } else {
        None
    }
}

impl Message {
    pub fn name(&self) -> &'static str {
        match self {
            Message::LindaOut(_) => "linda_out",
            Message::LindaIn(_) => "linda_in",
            Message::LindaAll(_) => "linda_all",
            Message::Run { .. } => "run",
            Message::Fetch { .. } => "fetch",
            Message::Rload { .. } => "rload",
            Message::Stop { .. } => "stop",
            Message::Register(_) => "register",
            Message::Lookup(_) => "lookup",
            Message::Ok => "ok",
            Message::The(_) => "the",
            Message::No => "no",
            Message::Tuples(_) => "tuples",
            Message::Clauses(_) => "clauses",
            Message::Denied => "denied",
            Message::Err(_) => "err",
        }
    }

    pub fn to_term(&self) -> Term {
        let c = |args: Vec<Term>| Term::compound(self.name(), args);
        match self {
            Message::LindaOut(t) | Message::LindaIn(t) | Message::LindaAll(t) => c(vec![t.clone()]),
            Message::Register(t) | Message::Lookup(t) | Message::The(t) | Message::Err(t) => c(vec![t.clone()]),
            Message::Run { pwd, goal, vars } => c(vec![Term::Atom(pwd.clone()), goal.clone(), vars.clone()]),
            Message::Fetch { pwd, key } => c(vec![Term::Atom(pwd.clone()), key.clone()]),
            Message::Rload { pwd, file } => c(vec![Term::Atom(pwd.clone()), Term::Atom(file.clone())]),
            Message::Stop { pwd } => c(vec![Term::Atom(pwd.clone())]),
            Message::Tuples(ts) | Message::Clauses(ts) => c(vec![Term::list(ts.clone())]),
            Message::Ok | Message::No | Message::Denied => Term::atom(self.name()),
        }
    }

    pub fn from_term(t: &Term) -> Result<Message, WireError> {
        let bad = || WireError::Protocol(format!("unknown message {}", canonical_text(t)));
        let (name, arity) = t.functor().ok_or_else(bad)?;
        let a = t.args();
        let atom = |i: usize| a[i].as_atom().cloned().ok_or_else(bad);
        let m = match (name.as_str(), arity) {
            ("linda_out", 1) => Message::LindaOut(a[0].clone()),
            ("linda_in", 1) => Message::LindaIn(a[0].clone()),
            ("linda_all", 1) => Message::LindaAll(a[0].clone()),
            ("run", 3) => Message::Run { pwd: atom(0)?, goal: a[1].clone(), vars: a[2].clone() },
            ("fetch", 2) => Message::Fetch { pwd: atom(0)?, key: a[1].clone() },
            ("rload", 2) => Message::Rload { pwd: atom(0)?, file: atom(1)? },
            ("stop", 1) => Message::Stop { pwd: atom(0)? },
            ("register", 1) => Message::Register(a[0].clone()),
            ("lookup", 1) => Message::Lookup(a[0].clone()),
            ("ok", 0) => Message::Ok,
            ("the", 1) => Message::The(a[0].clone()),
            ("no", 0) => Message::No,
            ("tuples", 1) => Message::Tuples(list_items(&a[0]).ok_or_else(bad)?),
            ("clauses", 1) => Message::Clauses(list_items(&a[0]).ok_or_else(bad)?),
            ("denied", 0) => Message::Denied,
            ("err", 1) => Message::Err(a[0].clone()),
            _ => return Err(bad()),
        };
        Ok(m)
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let payload = canonical_text(&self.to_term()).into_bytes();
        if payload.len() > MAX_FRAME {
            return Err(WireError::FrameTooLarge(payload.len()));
        }
        let mut out = Vec::with_capacity(payload.len() + 4);
        out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Message, WireError> {
        if bytes.len() < 4 {
            return Err(WireError::Protocol("truncated header".into()));
        }
        let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
        if len > MAX_FRAME {
            return Err(WireError::FrameTooLarge(len));
        }
        if bytes.len() != len + 4 {
            return Err(WireError::Protocol("truncated payload".into()));
        }
        Self::decode_payload(&bytes[4..])
    }

    fn decode_payload(payload: &[u8]) -> Result<Message, WireError> {
        let text = std::str::from_utf8(payload).map_err(|_| WireError::Protocol("invalid utf-8".into()))?;
        let t = parse_term(text).map_err(|e| WireError::Protocol(format!("syntax at {}", e.position)))?;
        Message::from_term(&t)
    }
}

pub fn write_frame(w: &mut impl Write, m: &Message) -> Result<(), WireError> {
    w.write_all(&m.encode()?)?;
    w.flush()?;
    Ok(())
}

pub fn read_frame(r: &mut impl Read) -> Result<Message, WireError> {
    let mut header = [0u8; 4];
    r.read_exact(&mut header).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => WireError::Protocol("truncated header".into()),
        _ => WireError::from(e),
    })?;
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME {
        return Err(WireError::FrameTooLarge(len));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => WireError::Protocol("truncated payload".into()),
        _ => WireError::from(e),
    })?;
    Message::decode_payload(&payload)
}

pub fn connect(ep: &Endpoint, timeout: Duration) -> Result<TcpStream, WireError> {
    let addr = ep.addr().to_socket_addrs()?.next().ok_or_else(|| WireError::Net(format!("unresolved_{}", ep.host)))?;
    Ok(TcpStream::connect_timeout(&addr, timeout)?)
}

/// One request, one reply. `timeout` bounds connecting and, if set, waiting
/// for the reply; blocking `linda_in` requests pass `None` for the reply.
pub fn request(
    ep: &Endpoint,
    m: &Message,
    reply_timeout: Option<Duration>,
    events: Option<&EventLog>,
) -> Result<Message, WireError> {
    let mut s = connect(ep, Duration::from_secs(5))?;
    s.set_nodelay(true).ok();
    s.set_read_timeout(reply_timeout)?;
    if let Some(ev) = events {
        ev.emit("send", format!("{} to={}", m.name(), ep));
    }
    write_frame(&mut s, m)?;
    let reply = read_frame(&mut s)?;
    if let Some(ev) = events {
        ev.emit("recv", format!("{} from={}", reply.name(), ep));
    }
    let _ = s.shutdown(Shutdown::Both);
    Ok(reply)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::is_variant;

    #[test]
    fn payload_is_canonical_text() {
        let m = Message::LindaOut(parse_term("f(1)").unwrap());
        let bytes = m.encode().unwrap();
        assert_eq!(&bytes[..4], &[0, 0, 0, 15]);
        assert_eq!(&bytes[4..], b"linda_out(f(1))");
    }

    #[test]
    fn run_keeps_sharing() {
        let g = parse_term("g(X,X)").unwrap();
        let vars = Term::list(vec![Term::var(0)]);
        let m = Message::Run { pwd: Atom::new("p"), goal: g, vars };
        let back = Message::decode(&m.encode().unwrap()).unwrap();
        assert!(is_variant(&back.to_term(), &m.to_term()));
        assert_eq!(canonical_text(&back.to_term()), "run(p,g(_V0,_V0),[_V0])");
    }

    #[test]
    fn truncated_and_unknown_frames() {
        let bytes = Message::Ok.encode().unwrap();
        assert!(matches!(Message::decode(&bytes[..bytes.len() - 1]), Err(WireError::Protocol(_))));
        let mut r = &bytes[..3];
        assert!(matches!(read_frame(&mut r), Err(WireError::Protocol(_))));
        let junk = Message::Err(Term::atom("x")).encode().unwrap();
        assert!(Message::decode(&junk).is_ok());
        let mut odd = vec![0, 0, 0, 6];
        odd.extend_from_slice(b"hello!");
        assert!(matches!(Message::decode(&odd), Err(WireError::Protocol(_))));
    }

    #[test]
    fn oversize_header_rejected() {
        let mut r: &[u8] = &[0x02, 0, 0, 0];
        assert!(matches!(read_frame(&mut r), Err(WireError::FrameTooLarge(_))));
    }

    #[test]
    fn endpoint_parse() {
        let e = Endpoint::parse("localhost:9001").unwrap();
        assert_eq!(e.addr(), "localhost:9001");
        assert!(Endpoint::parse("nope").is_none());
    }
}
