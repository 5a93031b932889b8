//! Moving continuations between nodes.
//!
//! `move/0` ships the rest of the current AND-branch to the `there` target
//! and blocks until it finishes or `return/0` sends a remainder back. While
//! the segment runs remotely, the origin serves its own code on a temporary
//! port; the remote side fetches predicates it lacks one at a time.

use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crate::continuation::capture;
use crate::engine::{Engine, Exception, Flow, Res, Runtime};
use crate::events::now_micros;
use crate::node::{self, call_remote, generate_password, NodeConfig, NodeHandle};
use crate::store::{Origin, PredKey};
use crate::term::{Atom, Term};
use crate::wire::{self, Endpoint, Message};

pub const PRELUDE: &str = r#"
'$exec_moved'(Gs, Vars, back(H, P, Pw, Code), O) :-
    catch('$handshake'(H, P, Pw), E, O = raised(E)),
    (   var(O)
    ->  host(H) =>> port(P) =>> password(Pw) =>> code(Code) =>>
            '$run_moved'(Gs, Vars, O)
    ;   true
    ),
    catch('$stop_base'(H, P, Pw), _, true).

'$run_moved'(Gs, Vars, O) :-
    catch(( '$moved_call'(Gs, Vars, O) -> true ; O = failed ), E, O = raised(E)).

move_thread :- call_with_cont('$move_with_cont').
"#;

const HANDSHAKE_CAP: Duration = Duration::from_secs(10);

fn not_migrated() -> Exception {
    Exception::atom("not_migrated")
}

fn conj(goals: Vec<Term>) -> Term {
    if goals.is_empty() {
        Term::atom("true")
    } else {
        Term::conjunction(goals)
    }
}

/// Free variables of `t` in first-occurrence order, as a list.
fn var_list(e: &Engine, t: &Term) -> Result<Term, Exception> {
    let r = e.resolve(t)?;
    Ok(Term::list(r.vars().into_iter().map(Term::Var).collect()))
}

fn code_atom(ep: &Endpoint) -> Term {
    Term::atom(&format!("{}:{}", ep.addr(), now_micros()))
}

/// A code server for one migration cycle: fresh port, fresh password.
fn start_code_server(rt: &Arc<Runtime>) -> Result<NodeHandle, Exception> {
    let host = rt.identity.read().unwrap().as_ref().map(|i| i.host.clone()).unwrap_or_else(|| "127.0.0.1".into());
    let cfg = NodeConfig {
        host,
        port: 0,
        password: Some(generate_password()),
        servants: 0,
        announce: false,
        ..NodeConfig::default()
    };
    node::start(rt, cfg).map_err(|err| node::net_error(&err))
}

fn back_link(ep: &Endpoint, code: Term) -> Term {
    Term::compound(
        "back",
        vec![Term::atom(&ep.host), Term::Int(ep.port as i64), Term::atom(ep.password.as_deref().unwrap_or("")), code],
    )
}

fn reachable(ep: &Endpoint) -> bool {
    wire::connect(ep, Duration::from_secs(2)).is_ok()
}

fn move_target(e: &Engine) -> Result<Endpoint, Exception> {
    let mut ep = e.target.clone().ok_or_else(|| Exception::of("net_error", vec![Term::atom("no_server")]))?;
    if ep.password.is_none() {
        ep.password = e.runtime().config().password;
    }
    Ok(ep)
}

fn warn_unmoved(rt: &Runtime, ep: &Endpoint) {
    rt.events.emit("move", format!("unreachable to={}", ep.addr()));
    eprintln!("warning: {} unreachable, continuing locally", ep.addr());
}

/// `move`: runs the rest of this AND-branch at the `there` target.
fn b_move(e: &mut Engine, a: &[Term]) -> Res {
    let rt = e.runtime().clone();
    let target = move_target(e)?;
    if !reachable(&target) {
        warn_unmoved(&rt, &target);
        return Ok(Flow::Goal(a[0].clone()));
    }
    let (goals, end) = capture(e, &a[0]);
    e.prune_to(0);
    let gs = conj(goals);
    let vars = var_list(e, &gs)?;
    let server = start_code_server(&rt)?;
    let out = e.fresh_var();
    let code = code_atom(&server.endpoint);
    let pkg = e.copy_out(&Term::compound(
        "$exec_moved",
        vec![gs, vars.clone(), back_link(&server.endpoint, code), out.clone()],
    ))?;
    rt.events.emit("move", format!("start to={} back={}", target.addr(), server.endpoint.addr()));
    let vars_out = Term::list(vec![pkg_out(&pkg)]);
    let run = Message::Run { pwd: target.password_atom(), goal: pkg, vars: vars_out };
    let reply = call_remote(e, &target, &run, None);
    server.shutdown();
    rt.events.emit("move", format!("end to={}", target.addr()));
    let result = match reply? {
        Message::The(t) => e.import(&t),
        Message::No => return Ok(Flow::Fail),
        Message::Denied => return Err(Exception::atom("denied")),
        Message::Err(b) => return Err(Exception(b)),
        other => return Err(Exception::of("protocol_error", vec![Term::atom(other.name())])),
    };
    let outcome = list_head(e, &result).ok_or_else(|| Exception::of("protocol_error", vec![Term::atom("run")]))?;
    let outcome = e.walk(&outcome);
    resume(e, &outcome, &vars, end)
}

fn pkg_out(pkg: &Term) -> Term {
    pkg.args()[3].clone()
}

fn list_head(e: &Engine, t: &Term) -> Option<Term> {
    let t = e.walk(t);
    if t.is_struct(".", 2) {
        Some(t.args()[0].clone())
    } else {
        None
    }
}

/// Binds the moved variables and continues with whatever came back.
fn resume(e: &mut Engine, outcome: &Term, vars: &Term, end: Term) -> Res {
    match outcome.functor() {
        Some((name, 2)) if name.as_str() == "returned" => {
            let a = outcome.args();
            if !e.unify(vars, &a[0]) {
                return Ok(Flow::Fail);
            }
            let cut = Term::Int(e.choice_height() as i64);
            Ok(Flow::Goal(e.expand(&a[1], end, &cut)?))
        }
        Some((name, 1)) if name.as_str() == "done" => e.unify_then(vars, &outcome.args()[0], &end),
        Some((name, 1)) if name.as_str() == "raised" => Err(Exception(e.copy_out(&outcome.args()[0])?)),
        _ => Ok(Flow::Fail),
    }
}

/// `'$moved_call'(Gs, Vars, Out)`: runs a moved segment up to a
/// `'$moved_end'` frame.
fn b_moved_call(e: &mut Engine, a: &[Term]) -> Res {
    let end = Term::compound("$moved_end", vec![a[2].clone(), a[1].clone(), a[3].clone()]);
    let cut = Term::Int(e.choice_height() as i64);
    Ok(Flow::Goal(e.expand(&a[0], end, &cut)?))
}

/// Reached when a moved segment runs to completion without `return`.
fn b_moved_end(e: &mut Engine, a: &[Term]) -> Res {
    let done = Term::compound("done", vec![a[1].clone()]);
    e.unify_then(&a[0], &done, &a[2])
}

/// `return`: sends the rest of the moved segment back to its origin.
fn b_return(e: &mut Engine, a: &[Term]) -> Res {
    let (goals, end) = capture(e, &a[0]);
    let end = e.walk(&end);
    if !end.is_struct("$moved_end", 3) {
        return Err(not_migrated());
    }
    let m = end.args();
    let returned = Term::compound("returned", vec![m[1].clone(), conj(goals)]);
    e.unify_then(&m[0], &returned, &m[2])
}

fn b_there(e: &mut Engine, a: &[Term]) -> Res {
    let cfg = e.runtime().config();
    e.target = Some(cfg.default_server.ok_or_else(|| Exception::of("net_error", vec![Term::atom("no_server")]))?);
    Ok(Flow::Goal(a[0].clone()))
}

fn b_here(e: &mut Engine, a: &[Term]) -> Res {
    e.target = None;
    Ok(Flow::Goal(a[0].clone()))
}

fn back_endpoint(e: &Engine, a: &[Term]) -> Result<Endpoint, Exception> {
    let host = e.walk(&a[0]);
    let host = host.as_atom().ok_or_else(Exception::instantiation)?;
    let port = e.walk(&a[1]).as_int().ok_or_else(Exception::instantiation)?;
    let pw = e.walk(&a[2]);
    let mut ep = Endpoint::new(host.as_str(), port as u16);
    ep.password = pw.as_atom().map(|p| p.as_str().to_string());
    Ok(ep)
}

/// `'$handshake'(H, P, Pw)`: waits until the origin's code server answers.
fn b_handshake(e: &mut Engine, a: &[Term]) -> Res {
    let ep = back_endpoint(e, a)?;
    let ping = Message::Run { pwd: ep.password_atom(), goal: Term::atom("true"), vars: Term::nil() };
    let events = e.runtime().events.clone();
    if e.runtime().config().fixed_sleep {
        thread::sleep(Duration::from_secs(5));
    }
    let start = Instant::now();
    let mut delay = Duration::from_millis(5);
    loop {
        match wire::request(&ep, &ping, Some(HANDSHAKE_CAP), Some(&events)) {
            Ok(Message::The(_)) => return Ok(Flow::Goal(a[3].clone())),
            Ok(Message::Denied) => return Err(Exception::atom("denied")),
            _ if start.elapsed() + delay > HANDSHAKE_CAP => {
                return Err(Exception::of("net_error", vec![Term::atom("handshake_timeout")]))
            }
            _ => {
                thread::sleep(delay);
                delay = (delay * 2).min(Duration::from_secs(1));
            }
        }
    }
}

fn b_stop_base(e: &mut Engine, a: &[Term]) -> Res {
    let ep = back_endpoint(e, a)?;
    match call_remote(e, &ep, &Message::Stop { pwd: ep.password_atom() }, Some(Duration::from_secs(10)))? {
        Message::Ok => Ok(Flow::Goal(a[3].clone())),
        _ => Err(Exception::atom("denied")),
    }
}

/// `'$move_with_cont'(Gs)`: enqueues `Gs` as a task at the target and serves
/// code until the target stops the server.
fn b_move_with_cont(e: &mut Engine, a: &[Term]) -> Res {
    let rt = e.runtime().clone();
    let target = node::resolve_endpoint(e)?;
    let cut = Term::Int(e.choice_height() as i64);
    if !reachable(&target) {
        warn_unmoved(&rt, &target);
        return Ok(Flow::Goal(e.expand(&a[0], a[1].clone(), &cut)?));
    }
    let server = start_code_server(&rt)?;
    let back = &server.endpoint;
    let pw = Term::atom(back.password.as_deref().unwrap_or(""));
    let scoped = |name: &str, v: Term, g: Term| Term::compound("=>>", vec![Term::compound(name, vec![v]), g]);
    let tolerant =
        Term::compound(";", vec![Term::compound("->", vec![a[0].clone(), Term::atom("true")]), Term::atom("true")]);
    let guarded = Term::compound("catch", vec![tolerant, e.fresh_var(), Term::atom("true")]);
    let body = Term::conjunction(vec![
        Term::compound("$handshake", vec![Term::atom(&back.host), Term::Int(back.port as i64), pw.clone()]),
        guarded,
        Term::compound("stop_server", vec![pw.clone()]),
    ]);
    let task = scoped(
        "host",
        Term::atom(&back.host),
        scoped("port", Term::Int(back.port as i64), scoped("code", code_atom(back), scoped("password", pw, body))),
    );
    let todo = e.copy_out(&Term::compound("todo", vec![task]))?;
    rt.events.emit("move", format!("start to={} back={}", target.addr(), back.addr()));
    match call_remote(e, &target, &Message::LindaOut(todo), Some(Duration::from_secs(10))) {
        Ok(Message::Ok) => server.wait(),
        Ok(_) | Err(_) => {
            server.shutdown();
            warn_unmoved(&rt, &target);
            return Ok(Flow::Goal(e.expand(&a[0], a[1].clone(), &cut)?));
        }
    }
    rt.events.emit("move", format!("end to={}", target.addr()));
    Ok(Flow::Goal(a[1].clone()))
}

fn assumed(e: &Engine, name: &str) -> Option<Term> {
    e.peek_assumption(&Term::compound(name, vec![Term::var(0)])).map(|t| t.args()[0].clone())
}

/// Unknown-predicate hook: fetches `key` from the origin named by the
/// scoped `code/host/port` assumptions and installs it here.
pub fn lazy_fetch(e: &mut Engine, key: &PredKey) -> Result<bool, Exception> {
    let (Some(code), Some(host), Some(Term::Int(port))) = (assumed(e, "code"), assumed(e, "host"), assumed(e, "port"))
    else {
        return Ok(false);
    };
    let Some(host) = host.as_atom() else { return Ok(false) };
    let mut ep = Endpoint::new(host.as_str(), port as u16);
    ep.password = assumed(e, "password").and_then(|p| p.as_atom().map(|a| a.as_str().to_string()));
    let rt = e.runtime().clone();
    let lock = {
        let mut locks = rt.fetch_locks.lock().unwrap();
        locks.entry(key.clone()).or_insert_with(|| Arc::new(Mutex::new(()))).clone()
    };
    let _held = lock.lock().unwrap();
    if rt.store.contains(key) {
        return Ok(true);
    }
    let indicator = key.indicator();
    rt.events.emit("fetch", format!("{key} from={}", ep.addr()));
    let m = Message::Fetch { pwd: ep.password_atom(), key: indicator };
    match call_remote(e, &ep, &m, Some(Duration::from_secs(10)))? {
        Message::Clauses(cs) => {
            let cs = cs.iter().filter_map(crate::binarizer::BinClause::from_term).collect();
            let origin = code.as_atom().cloned().unwrap_or_else(|| Atom::new(&ep.addr()));
            rt.store.define(cs, Origin::Fetched(origin));
            Ok(true)
        }
        _ => Ok(false),
    }
}

pub fn install(rt: &Arc<Runtime>) {
    rt.register("move", 1, b_move);
    rt.register("return", 1, b_return);
    rt.register("there", 1, b_there);
    rt.register("here", 1, b_here);
    rt.register("$moved_call", 4, b_moved_call);
    rt.register("$moved_end", 3, b_moved_end);
    rt.register("$handshake", 4, b_handshake);
    rt.register("$stop_base", 4, b_stop_base);
    rt.register("$move_with_cont", 2, b_move_with_cont);
    rt.set_unknown_hook(lazy_fetch);
    rt.consult_str(PRELUDE).expect("mobility prelude");
}
