use std::sync::Arc;
use std::time::Duration;

use contina::engine::{Runtime, RuntimeConfig};
use contina::events::Event;
use contina::node::{self, NodeConfig, NodeHandle};
use contina::term::{canonical_text, parse_term, Term};
use contina::wire::Endpoint;

struct Pair {
    server: Arc<Runtime>,
    client: Arc<Runtime>,
    handle: Option<NodeHandle>,
}

impl Pair {
    fn new(server_program: &str, client_program: &str) -> Pair {
        let server = contina::runtime(RuntimeConfig::default());
        server.consult_str(server_program).unwrap();
        let cfg = NodeConfig { password: Some("target-pw".into()), ..NodeConfig::default() };
        let handle = node::start(&server, cfg).unwrap();
        let client = contina::runtime(RuntimeConfig {
            default_server: Some(handle.endpoint.clone()),
            ..RuntimeConfig::default()
        });
        client.consult_str(client_program).unwrap();
        Pair { server, client, handle: Some(handle) }
    }
}

impl Drop for Pair {
    fn drop(&mut self) {
        if let Some(h) = self.handle.take() {
            h.shutdown();
        }
    }
}

fn sends(events: &[Event], name: &str) -> usize {
    events.iter().filter(|e| e.kind == "send" && e.detail.starts_with(&format!("{name} "))).count()
}

#[test]
fn move_and_return_carry_the_first_solution_back() {
    let p = Pair::new("", "");
    let s = p.client.solve("there, move, println(on_server), member(X,[1,2,3]), return, println(back)", 5).unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].lines(), vec!["X=1"]);
    assert_eq!(p.server.console.lines(), vec!["on_server"]);
    assert_eq!(p.client.console.lines(), vec!["back"]);
    let on_server = p.server.events.snapshot().into_iter().find(|e| e.kind == "print").unwrap();
    let back = p.client.events.snapshot().into_iter().find(|e| e.kind == "print").unwrap();
    assert!(on_server.t <= back.t);
}

#[test]
fn segment_without_return_binds_and_ends() {
    let p = Pair::new("", "");
    let s = p.client.solve("there, move, X = f(Y), Y = 3", 2).unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].get("X").map(canonical_text).as_deref(), Some("f(3)"));
}

#[test]
fn findall_emulates_nondeterminism_with_one_cycle() {
    let p = Pair::new("", "");
    let s = p.client.solve_all("there, move, findall(X, for(X, 1, 1000), Xs), return, member(X, Xs)").unwrap();
    assert_eq!(s.len(), 1000);
    assert_eq!(s[999].get("X"), Some(&Term::Int(1000)));
    assert_eq!(p.client.events.count("move", "start"), 1);
}

#[test]
fn moved_segment_keeps_only_its_first_solution() {
    let p = Pair::new("", "");
    let moved = p.client.solve_all("there, move, member(X, [a, b, c]), return").unwrap();
    let local = p.client.solve_all("once(member(X, [a, b, c]))").unwrap();
    assert_eq!(
        moved.iter().map(|s| s.lines()).collect::<Vec<_>>(),
        local.iter().map(|s| s.lines()).collect::<Vec<_>>()
    );
}

#[test]
fn failure_at_target_fails_the_client() {
    let p = Pair::new("", "");
    assert!(p.client.solve("there, move, fail", 1).unwrap().is_empty());
}

#[test]
fn exceptions_at_target_reach_the_client() {
    let p = Pair::new("", "");
    let s = p.client.solve("catch((there, move, X is foo + 1), E, true)", 1).unwrap();
    assert_eq!(s[0].get("E").map(canonical_text).as_deref(), Some("type_error(evaluable,'/'(foo,0))"));
}

#[test]
fn base_predicates_are_fetched_once() {
    let p = Pair::new("", "inc(X, Y) :- Y is X + 1.\ntwice(X, Z) :- inc(X, Y), inc(Y, Z).");
    let s = p.client.solve("there, move, findall(Z, (for(I, 1, 10), twice(I, Z)), Zs), return", 1).unwrap();
    assert_eq!(s[0].get("Zs").map(canonical_text).as_deref(), Some("[3,4,5,6,7,8,9,10,11,12]"));
    assert_eq!(p.server.events.count("fetch", "inc/3 "), 1);
    assert_eq!(p.server.events.count("fetch", "twice/3 "), 1);
    let again = p.client.solve("there, move, twice(5, Z)", 1).unwrap();
    assert_eq!(again[0].get("Z"), Some(&Term::Int(7)));
    assert_eq!(p.server.events.count("fetch", "inc/3 "), 1);
}

#[test]
fn unknown_everywhere_is_still_unknown() {
    let p = Pair::new("", "");
    let s = p.client.solve("catch((there, move, nowhere(1)), E, true)", 1).unwrap();
    assert_eq!(s[0].get("E").map(canonical_text).as_deref(), Some("unknown_predicate('/'(nowhere,2))"));
}

#[test]
fn moving_costs_a_bounded_number_of_frames() {
    let p = Pair::new("", "");
    p.client.solve("for(I, 1, 100), remote_run(println(I)), fail ; true", 1).unwrap();
    assert!(sends(&p.client.events.snapshot(), "run") >= 100);
    p.client.events.clear();
    p.server.events.clear();
    p.client.solve("there, move, for(I, 1, 100), println(I), fail", 1).unwrap();
    let mut all = p.client.events.snapshot();
    all.extend(p.server.events.snapshot());
    let control = ["run", "stop", "linda_out", "linda_in"].iter().map(|m| sends(&all, m)).sum::<usize>();
    assert!(control <= 4, "{control} control frames");
    assert_eq!(sends(&all, "fetch"), 0);
}

#[test]
fn code_server_port_is_closed_after_a_cycle() {
    let p = Pair::new("", "");
    p.client.solve("there, move, true", 1).unwrap();
    let start = p.client.events.snapshot().into_iter().find(|e| e.kind == "move").unwrap();
    let back = start.detail.split(" back=").nth(1).unwrap();
    let ep = Endpoint::parse(back).unwrap();
    assert!(std::net::TcpStream::connect_timeout(&ep.addr().parse().unwrap(), Duration::from_millis(500)).is_err());
}

#[test]
fn returned_continuations_may_move_again() {
    let p = Pair::new("", "");
    let s = p.client.solve("there, move, X = 1, return, Y is X + 1, move, Z is Y * 10", 1).unwrap();
    assert_eq!(s[0].get("Z"), Some(&Term::Int(20)));
    let backs: Vec<String> = p
        .client
        .events
        .snapshot()
        .into_iter()
        .filter(|e| e.kind == "move" && e.detail.starts_with("start"))
        .map(|e| e.detail)
        .collect();
    assert_eq!(backs.len(), 2);
    assert_ne!(backs[0], backs[1]);
}

#[test]
fn return_outside_a_move_is_an_error() {
    let rt = contina::runtime(RuntimeConfig::default());
    let s = rt.solve("catch(return, E, true)", 1).unwrap();
    assert_eq!(s[0].get("E"), Some(&Term::atom("not_migrated")));
}

#[test]
fn unreachable_target_continues_locally() {
    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = dead.local_addr().unwrap().port();
    drop(dead);
    let rt = contina::runtime(RuntimeConfig {
        default_server: Some(Endpoint::new("127.0.0.1", port)),
        ..RuntimeConfig::default()
    });
    let s = rt.solve("there, move, println(here_anyway), X = 1", 1).unwrap();
    assert_eq!(s[0].lines(), vec!["X=1"]);
    assert_eq!(rt.console.lines(), vec!["here_anyway"]);
    assert_eq!(rt.events.count("move", "unreachable"), 1);
}

#[test]
fn here_clears_the_target() {
    let rt = contina::runtime(RuntimeConfig::default());
    let s = rt.solve("here, catch(move, E, true)", 1).unwrap();
    assert_eq!(s[0].get("E").map(canonical_text).as_deref(), Some("net_error(no_server)"));
}

#[test]
fn move_thread_runs_the_captured_rest_at_the_target() {
    let p = Pair::new("", "mark(X) :- out(moved(X)).");
    let s = p.client.solve("capture_cont_for((move_thread, mark(1), mark(2))), Y = after", 1).unwrap();
    assert_eq!(s[0].lines(), vec!["Y=after"]);
    let pattern = parse_term("moved(_)").unwrap();
    assert_eq!(p.server.space.all(&pattern).len(), 2);
    assert!(p.client.space.all(&pattern).is_empty());
    assert_eq!(p.server.events.count("fetch", "mark/2 "), 1);
}

#[test]
fn move_thread_outside_capture_is_an_error() {
    let p = Pair::new("", "");
    let s = p.client.solve("catch(move_thread, E, true)", 1).unwrap();
    assert_eq!(s[0].get("E").map(canonical_text).as_deref(), Some("assumption_missing(cont_marker)"));
}

#[test]
fn move_thread_releases_the_base_when_the_rest_raises() {
    let p = Pair::new("", "");
    let s =
        p.client.solve("capture_cont_for((move_thread, out(before), _ is foo + 1, out(never))), Y = after", 1).unwrap();
    assert_eq!(s[0].lines(), vec!["Y=after"]);
    assert_eq!(p.server.space.all(&parse_term("before").unwrap()).len(), 1);
    assert!(p.server.space.all(&parse_term("never").unwrap()).is_empty());
}
