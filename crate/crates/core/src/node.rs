//! Networked node: the server loop, request dispatch, servants, the master
//! registry and the remote builtins.

use std::io;
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use rand::RngCore;

use crate::engine::{compile, Engine, Exception, Flow, Res, Runtime};
use crate::store::{Origin, PredKey};
use crate::term::{subsumes, Atom, Term};
use crate::wire::{self, read_frame, write_frame, Endpoint, Message, WireError};

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub host: String,
    /// 0 picks a free port.
    pub port: u16,
    pub password: Option<String>,
    pub master: Option<Endpoint>,
    pub channel: Term,
    /// Threads pulling `todo(Task)` from the local space.
    pub servants: usize,
    pub strict_servant: bool,
    /// Whether this server is the node's public identity (a code server
    /// started by `move` is not).
    pub announce: bool,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            host: "127.0.0.1".into(),
            port: 0,
            password: None,
            master: None,
            channel: Term::atom("default"),
            servants: 2,
            strict_servant: false,
            announce: true,
        }
    }
}

/// 128 random bits as hex.
pub fn generate_password() -> String {
    let mut bytes = [0u8; 16];
    rand::thread_rng().fill_bytes(&mut bytes);
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub struct NodeHandle {
    pub endpoint: Endpoint,
    stopped: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl NodeHandle {
    pub fn port(&self) -> u16 {
        self.endpoint.port
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped.load(Ordering::SeqCst)
    }

    /// Blocks until an authorized `stop` ends the accept loop.
    pub fn wait(mut self) {
        if let Some(j) = self.accept.take() {
            let _ = j.join();
        }
    }

    /// Stops the accept loop from this process.
    pub fn shutdown(mut self) {
        request_stop(&self.stopped, &self.endpoint);
        if let Some(j) = self.accept.take() {
            let _ = j.join();
        }
    }
}

impl Drop for NodeHandle {
    fn drop(&mut self) {
        if self.accept.is_some() && !self.is_stopped() {
            request_stop(&self.stopped, &self.endpoint);
        }
    }
}

fn request_stop(flag: &AtomicBool, ep: &Endpoint) {
    flag.store(true, Ordering::SeqCst);
    let _ = TcpStream::connect(ep.addr());
}

/// Binds and starts serving. Returns once the socket is listening.
pub fn start(rt: &Arc<Runtime>, cfg: NodeConfig) -> Result<NodeHandle, WireError> {
    let listener = TcpListener::bind((cfg.host.as_str(), cfg.port))?;
    let port = listener.local_addr()?.port();
    let password = cfg.password.clone().unwrap_or_else(generate_password);
    let endpoint = Endpoint::new(cfg.host.clone(), port).with_password(password.clone());
    if cfg.announce {
        *rt.identity.write().unwrap() = Some(endpoint.clone());
        rt.events.set_node(endpoint.addr());
        rt.update_config(|c| {
            if c.password.is_none() {
                c.password = Some(password.clone());
            }
            if c.master.is_none() {
                c.master = cfg.master.clone();
            }
        });
    }
    rt.events.emit("listen", endpoint.addr());
    let stopped = Arc::new(AtomicBool::new(false));
    let accept = {
        let rt = rt.clone();
        let stopped = stopped.clone();
        let ep = endpoint.clone();
        thread::spawn(move || accept_loop(rt, listener, ep, stopped))
    };
    for _ in 0..cfg.servants {
        let rt = rt.clone();
        let strict = cfg.strict_servant;
        thread::spawn(move || local_servant(&rt, strict));
    }
    let handle = NodeHandle { endpoint, stopped, accept: Some(accept) };
    if let Some(master) = &cfg.master {
        register_with_master(rt, master, &cfg.channel, &handle.endpoint)?;
    }
    Ok(handle)
}

fn accept_loop(rt: Arc<Runtime>, listener: TcpListener, ep: Endpoint, stopped: Arc<AtomicBool>) {
    for conn in listener.incoming() {
        if stopped.load(Ordering::SeqCst) {
            break;
        }
        let stream = match conn {
            Ok(s) => s,
            Err(_) => continue,
        };
        let rt = rt.clone();
        let ep = ep.clone();
        let stopped = stopped.clone();
        thread::spawn(move || handle_conn(&rt, stream, &ep, &stopped));
    }
    drop(listener);
    rt.events.emit("closed", ep.addr());
}

fn handle_conn(rt: &Arc<Runtime>, mut stream: TcpStream, ep: &Endpoint, stopped: &AtomicBool) {
    stream.set_nodelay(true).ok();
    let msg = match read_frame(&mut stream) {
        Ok(m) => m,
        Err(WireError::Protocol(m)) => {
            let _ = write_frame(&mut stream, &Message::Err(Term::compound("protocol_error", vec![Term::atom(&m)])));
            return;
        }
        Err(_) => return,
    };
    rt.events.emit("handle", format!("{} at={}", msg.name(), ep.addr()));
    let reply = match &msg {
        Message::LindaIn(p) => match blocking_take(rt, &stream, p) {
            Some(t) => Message::The(t),
            None => return,
        },
        Message::Stop { pwd } => {
            if Some(pwd.as_str()) == ep.password.as_deref() {
                let _ = write_frame(&mut stream, &Message::Ok);
                request_stop(stopped, ep);
                return;
            }
            Message::Denied
        }
        m => dispatch(rt, m, ep.password.as_deref().unwrap_or("")),
    };
    let _ = write_frame(&mut stream, &reply);
    let _ = stream.shutdown(Shutdown::Write);
}

/// Waits for a tuple, giving up when the client hangs up or the space closes.
fn blocking_take(rt: &Arc<Runtime>, stream: &TcpStream, pattern: &Term) -> Option<Term> {
    let ticket = rt.space.request_take(pattern);
    loop {
        if let Some(t) = ticket.wait_timeout(Duration::from_millis(100)) {
            return Some(t);
        }
        if rt.space.is_closed() || peer_closed(stream) {
            ticket.cancel();
            return None;
        }
    }
}

fn peer_closed(stream: &TcpStream) -> bool {
    if stream.set_nonblocking(true).is_err() {
        return true;
    }
    let mut b = [0u8; 1];
    let closed = match stream.peek(&mut b) {
        Ok(0) => true,
        Ok(_) => false,
        Err(e) => e.kind() != io::ErrorKind::WouldBlock,
    };
    let _ = stream.set_nonblocking(false);
    closed
}

/// Handles every message except the blocking `linda_in` and `stop`.
pub fn dispatch(rt: &Arc<Runtime>, m: &Message, password: &str) -> Message {
    let gated = |pwd: &Atom| pwd.as_str() == password;
    match m {
        Message::LindaOut(t) | Message::Register(t) => match rt.space.out(t) {
            Ok(()) => Message::Ok,
            Err(_) => Message::Err(Term::atom("cyclic_term")),
        },
        Message::LindaAll(p) => Message::Tuples(rt.space.all(p)),
        Message::LindaIn(p) => match rt.space.try_take(p) {
            Some(t) => Message::The(t),
            None => Message::No,
        },
        Message::Lookup(channel) => {
            let pattern = Term::compound("server_id", vec![Term::var(0), Term::var(1), Term::var(2)]);
            let found = rt.space.all(&pattern).into_iter().filter(|t| subsumes(channel, &t.args()[0])).collect();
            Message::Tuples(found)
        }
        Message::Run { pwd, goal, vars } => {
            if !gated(pwd) {
                return Message::Denied;
            }
            let mut e = Engine::new(rt);
            e.load(goal, vars);
            match e.ask() {
                Ok(Some(t)) => Message::The(t),
                Ok(None) => Message::No,
                Err(err) => Message::Err(err.ball()),
            }
        }
        Message::Fetch { pwd, key } => {
            if !gated(pwd) {
                return Message::Denied;
            }
            match PredKey::from_indicator(key).and_then(|k| rt.store.clauses(&k)) {
                Some(cs) => Message::Clauses(cs.iter().map(|c| c.to_term()).collect()),
                None => Message::No,
            }
        }
        Message::Rload { pwd, file } => {
            if !gated(pwd) {
                return Message::Denied;
            }
            let src = match std::fs::read_to_string(file.as_str()) {
                Ok(s) => s,
                Err(e) => return Message::Err(Term::compound("io_error", vec![Term::atom(&e.kind().to_string())])),
            };
            match compile(&src) {
                Ok((cs, _)) => Message::Clauses(cs.iter().map(|c| c.to_term()).collect()),
                Err(e) => Message::Err(Term::compound("load_error", vec![Term::atom(&e.to_string())])),
            }
        }
        Message::Stop { .. } => Message::Denied,
        other => Message::Err(Term::compound("protocol_error", vec![Term::atom(other.name())])),
    }
}

// ------------------------------------------------------------ servants

fn run_task(rt: &Arc<Runtime>, task: &Term) -> Result<bool, Term> {
    let mut e = Engine::new(rt);
    e.load(task, &Term::nil());
    match e.ask() {
        Ok(r) => Ok(r.is_some()),
        Err(err) => Err(err.ball()),
    }
}

fn todo_pattern() -> Term {
    Term::compound("todo", vec![Term::var(0)])
}

fn report(rt: &Arc<Runtime>, task: &Term, r: &Result<bool, Term>) -> bool {
    let ok = matches!(r, Ok(true));
    if !ok {
        let why = match r {
            Err(ball) => crate::term::canonical_text(ball),
            _ => "failed".into(),
        };
        rt.events.emit("servant", format!("task_failed {} reason={}", crate::term::canonical_text(task), why));
    }
    ok
}

/// Executes `todo(Task)` tuples from the node's own space until it closes.
pub fn local_servant(rt: &Arc<Runtime>, strict: bool) {
    while let Some(t) = rt.space.take(&todo_pattern()) {
        let task = t.args()[0].clone();
        let r = run_task(rt, &task);
        if !report(rt, &task, &r) && strict {
            return;
        }
    }
}

/// Pulls `todo(Task)` from a remote node and runs each task locally.
pub fn servant(rt: &Arc<Runtime>, target: &Endpoint, strict: bool) -> Result<(), WireError> {
    loop {
        let reply = wire::request(target, &Message::LindaIn(todo_pattern()), None, Some(&rt.events))?;
        let task = match reply {
            Message::The(t) if t.is_struct("todo", 1) => t.args()[0].clone(),
            other => return Err(WireError::Protocol(format!("unexpected {}", other.name()))),
        };
        let r = run_task(rt, &task);
        if !report(rt, &task, &r) && strict {
            return Ok(());
        }
    }
}

// ------------------------------------------------------------ master

pub fn server_id(channel: &Term, ep: &Endpoint) -> Term {
    Term::compound("server_id", vec![channel.clone(), Term::atom(&ep.host), Term::Int(ep.port as i64)])
}

pub fn register_with_master(rt: &Runtime, master: &Endpoint, channel: &Term, me: &Endpoint) -> Result<(), WireError> {
    match wire::request(
        master,
        &Message::Register(server_id(channel, me)),
        Some(Duration::from_secs(10)),
        Some(&rt.events),
    )? {
        Message::Ok => Ok(()),
        other => Err(WireError::Protocol(format!("register got {}", other.name()))),
    }
}

pub fn lookup_servers(rt: &Runtime, master: &Endpoint, channel: &Term) -> Result<Vec<Term>, WireError> {
    match wire::request(master, &Message::Lookup(channel.clone()), Some(Duration::from_secs(10)), Some(&rt.events))? {
        Message::Tuples(ts) => Ok(ts),
        other => Err(WireError::Protocol(format!("lookup got {}", other.name()))),
    }
}

// ------------------------------------------------------------ builtins

pub fn net_error(e: &WireError) -> Exception {
    Exception(e.to_term())
}

fn assumed_value(e: &Engine, name: &str) -> Option<Term> {
    e.peek_assumption(&Term::compound(name, vec![Term::var(0)])).map(|t| t.args()[0].clone())
}

fn text_value(t: &Term) -> Option<String> {
    match t {
        Term::Atom(a) => Some(a.as_str().to_string()),
        Term::Int(i) => Some(i.to_string()),
        _ => None,
    }
}

/// Where a remote operation goes: assumed `host/port` back-links first, then
/// the engine's `there` target, then the configured default server.
pub fn resolve_endpoint(e: &Engine) -> Result<Endpoint, Exception> {
    let cfg = e.runtime().config();
    let assumed = match (assumed_value(e, "host"), assumed_value(e, "port")) {
        (Some(h), Some(Term::Int(p))) => text_value(&h).map(|h| Endpoint::new(h, p as u16)),
        _ => None,
    };
    let mut ep = assumed
        .or_else(|| e.target.clone())
        .or(cfg.default_server)
        .ok_or_else(|| Exception::of("net_error", vec![Term::atom("no_server")]))?;
    if let Some(pw) = assumed_value(e, "password").as_ref().and_then(text_value) {
        ep.password = Some(pw);
    }
    if ep.password.is_none() {
        ep.password = cfg.password;
    }
    Ok(ep)
}

pub(crate) fn call_remote(
    e: &Engine,
    ep: &Endpoint,
    m: &Message,
    timeout: Option<Duration>,
) -> Result<Message, Exception> {
    wire::request(ep, m, timeout, Some(&e.runtime().events)).map_err(|err| net_error(&err))
}

fn reply_error(m: Message) -> Exception {
    match m {
        Message::Denied => Exception::atom("denied"),
        Message::Err(t) => Exception(t),
        other => Exception::of("protocol_error", vec![Term::atom(other.name())]),
    }
}

/// Sends `run(Pw, Goal, Answer)` and unifies `Answer` with the first answer.
fn remote_run_at(e: &mut Engine, ep: &Endpoint, answer: &Term, goal: &Term, k: &Term) -> Res {
    let pair = e.copy_out(&Term::compound("-", vec![goal.clone(), answer.clone()]))?;
    let m = Message::Run { pwd: ep.password_atom(), goal: pair.args()[0].clone(), vars: pair.args()[1].clone() };
    match call_remote(e, ep, &m, None)? {
        Message::The(t) => {
            let t = e.import(&t);
            e.unify_then(answer, &t, k)
        }
        Message::No => Ok(Flow::Fail),
        other => Err(reply_error(other)),
    }
}

fn b_remote_run1(e: &mut Engine, a: &[Term]) -> Res {
    let ep = resolve_endpoint(e)?;
    remote_run_at(e, &ep, &a[0], &a[0], &a[1])
}

fn b_remote_run2(e: &mut Engine, a: &[Term]) -> Res {
    let ep = resolve_endpoint(e)?;
    remote_run_at(e, &ep, &a[0], &a[1], &a[2])
}

/// `remote_run(Host, Port, Answer, Goal)`
fn b_remote_run4(e: &mut Engine, a: &[Term]) -> Res {
    let host = text_value(&e.walk(&a[0])).ok_or_else(Exception::instantiation)?;
    let port = crate::engine::int_arg(e, &a[1])?;
    let mut ep = Endpoint::new(host, port as u16);
    ep.password = resolve_endpoint(e).ok().and_then(|r| r.password).or(e.runtime().config().password);
    remote_run_at(e, &ep, &a[2], &a[3], &a[4])
}

fn b_remote_out(e: &mut Engine, a: &[Term]) -> Res {
    let ep = resolve_endpoint(e)?;
    let t = e.copy_out(&a[0])?;
    match call_remote(e, &ep, &Message::LindaOut(t), Some(Duration::from_secs(10)))? {
        Message::Ok => Ok(Flow::Goal(a[1].clone())),
        other => Err(reply_error(other)),
    }
}

fn b_remote_in(e: &mut Engine, a: &[Term]) -> Res {
    let ep = resolve_endpoint(e)?;
    let p = e.copy_out(&a[0])?;
    match call_remote(e, &ep, &Message::LindaIn(p), None)? {
        Message::The(t) => {
            let t = e.import(&t);
            e.unify_then(&a[0], &t, &a[1])
        }
        other => Err(reply_error(other)),
    }
}

fn b_remote_all(e: &mut Engine, a: &[Term]) -> Res {
    let ep = resolve_endpoint(e)?;
    let p = e.copy_out(&a[0])?;
    match call_remote(e, &ep, &Message::LindaAll(p), Some(Duration::from_secs(10)))? {
        Message::Tuples(ts) => {
            let list = Term::list(ts.iter().map(|t| e.import(t)).collect());
            e.unify_then(&a[1], &list, &a[2])
        }
        other => Err(reply_error(other)),
    }
}

fn stop_at(e: &mut Engine, ep: &Endpoint, k: &Term) -> Res {
    match call_remote(e, ep, &Message::Stop { pwd: ep.password_atom() }, Some(Duration::from_secs(10)))? {
        Message::Ok => Ok(Flow::Goal(k.clone())),
        other => Err(reply_error(other)),
    }
}

fn b_stop_server0(e: &mut Engine, a: &[Term]) -> Res {
    let ep = resolve_endpoint(e)?;
    stop_at(e, &ep, &a[0])
}

fn b_stop_server1(e: &mut Engine, a: &[Term]) -> Res {
    let mut ep = resolve_endpoint(e)?;
    ep.password = text_value(&e.walk(&a[0]));
    stop_at(e, &ep, &a[1])
}

/// `rload(File)`: the server reads and compiles the file; its clauses are
/// installed here.
fn b_rload(e: &mut Engine, a: &[Term]) -> Res {
    let ep = resolve_endpoint(e)?;
    let file = crate::engine::atom_arg(e, &a[0])?;
    match call_remote(e, &ep, &Message::Rload { pwd: ep.password_atom(), file }, Some(Duration::from_secs(30)))? {
        Message::Clauses(cs) => {
            let cs = cs.iter().filter_map(crate::binarizer::BinClause::from_term).collect();
            e.runtime().store.define(cs, Origin::Fetched(Atom::new(&ep.addr())));
            Ok(Flow::Goal(a[1].clone()))
        }
        other => Err(reply_error(other)),
    }
}

fn master_of(e: &Engine) -> Result<Endpoint, Exception> {
    e.runtime().config().master.ok_or_else(|| Exception::of("net_error", vec![Term::atom("no_master")]))
}

fn b_lookup_servers(e: &mut Engine, a: &[Term]) -> Res {
    let master = master_of(e)?;
    let channel = e.copy_out(&a[0])?;
    let ids = lookup_servers(e.runtime(), &master, &channel).map_err(|err| net_error(&err))?;
    let list = Term::list(ids.iter().map(|t| e.import(t)).collect());
    e.unify_then(&a[1], &list, &a[2])
}

/// `ask_all_servers(Channel, Goal)`: runs `Goal` once on every registered
/// server whose channel is an instance of `Channel`; failures are skipped.
fn b_ask_all_servers(e: &mut Engine, a: &[Term]) -> Res {
    let master = master_of(e)?;
    let channel = e.copy_out(&a[0])?;
    let goal = e.copy_out(&a[1])?;
    let ids = lookup_servers(e.runtime(), &master, &channel).map_err(|err| net_error(&err))?;
    let pw = e.runtime().config().password;
    for id in ids {
        let a = id.args();
        let (Some(host), Some(port)) = (text_value(&a[1]), a[2].as_int()) else { continue };
        let mut ep = Endpoint::new(host, port as u16);
        ep.password = pw.clone();
        let m = Message::Run { pwd: ep.password_atom(), goal: goal.clone(), vars: Term::nil() };
        let _ = call_remote(e, &ep, &m, Some(Duration::from_secs(30)));
    }
    Ok(Flow::Goal(a[2].clone()))
}

pub fn install(rt: &Runtime) {
    rt.register("remote_run", 2, b_remote_run1);
    rt.register("remote_run", 3, b_remote_run2);
    rt.register("remote_run", 5, b_remote_run4);
    rt.register("remote_out", 2, b_remote_out);
    rt.register("remote_in", 2, b_remote_in);
    rt.register("remote_all", 3, b_remote_all);
    rt.register("stop_server", 1, b_stop_server0);
    rt.register("stop_server", 2, b_stop_server1);
    rt.register("rload", 2, b_rload);
    rt.register("lookup_servers", 3, b_lookup_servers);
    rt.register("ask_all_servers", 3, b_ask_all_servers);
}
