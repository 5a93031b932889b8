use contina::engine::{Engine, EngineError, Runtime, RuntimeConfig};
use contina::term::{canonical_text, parse_term, parse_term_with_names, Term};
use std::sync::Arc;

fn rt(src: &str) -> Arc<Runtime> {
    let rt = Runtime::new(RuntimeConfig::default());
    rt.consult_str(src).unwrap();
    rt
}

fn answers(rt: &Arc<Runtime>, q: &str) -> Vec<String> {
    rt.solve_all(q).unwrap().iter().map(|s| s.lines().join(" ")).collect()
}

fn error(rt: &Arc<Runtime>, q: &str) -> String {
    match rt.solve_all(q) {
        Err(contina::engine::QueryError::Engine(e)) => canonical_text(&e.ball()),
        other => panic!("expected an error, got {other:?}"),
    }
}

#[test]
fn append_enumerates_splits() {
    let r = rt("");
    assert_eq!(answers(&r, "append(As, Bs, [1,2])"), vec!["As=[] Bs=[1,2]", "As=[1] Bs=[2]", "As=[1,2] Bs=[]"]);
}

#[test]
fn engine_stream_then_no() {
    let r = rt("");
    let (g, _) = parse_term_with_names("append(As,Bs,[1,2])").unwrap();
    let ans = parse_term("'+'(_V0,_V1)").unwrap();
    let mut e = Engine::new(&r);
    e.load(&g, &ans);
    let mut got = Vec::new();
    while let Some(t) = e.ask().unwrap() {
        got.push(canonical_text(&t));
    }
    assert_eq!(got, vec!["'+'([],[1,2])", "'+'([1],[2])", "'+'([1,2],[])"]);
    assert_eq!(e.ask().unwrap(), None);
    assert_eq!(e.trail_len(), 0);
}

#[test]
fn fail_gives_no_answers() {
    let r = rt("");
    assert!(answers(&r, "fail").is_empty());
}

#[test]
fn nrev_and_deep_recursion() {
    let r = rt("
        app([],Ys,Ys).
        app([X|Xs],Ys,[X|Zs]) :- app(Xs,Ys,Zs).
        nrev([],[]).
        nrev([X|Xs],Zs) :- nrev(Xs,Ys), app(Ys,[X],Zs).
        count(N,N) :- !.
        count(I,N) :- I1 is I+1, count(I1,N).
    ");
    assert_eq!(answers(&r, "nrev([1,2,3],R)"), vec!["R=[3,2,1]"]);
    assert_eq!(
        answers(&r, "numlist(1,400,L), nrev(L,R), R=[X|_]"),
        vec![format!("{}", {
            let s = r.solve("numlist(1,400,L), nrev(L,R), R=[X|_]", 1).unwrap();
            s[0].lines().join(" ")
        })]
    );
    assert_eq!(answers(&r, "count(0,200000)"), vec![""]);
}

#[test]
fn cut_commits_to_clause() {
    let r = rt("
        max(X,Y,X) :- X >= Y, !.
        max(_,Y,Y).
        first(X,[X|_]) :- !.
        first(X,[_|T]) :- first(X,T).
        t(X) :- member(X,[1,2,3]), X > 1, !.
    ");
    assert_eq!(answers(&r, "max(3,2,M)"), vec!["M=3"]);
    assert_eq!(answers(&r, "max(1,2,M)"), vec!["M=2"]);
    assert_eq!(answers(&r, "first(X,[a,b])"), vec!["X=a"]);
    assert_eq!(answers(&r, "t(X)"), vec!["X=2"]);
    assert_eq!(answers(&r, "member(X,[1,2,3]), !"), vec!["X=1"]);
    assert_eq!(answers(&r, "(member(X,[1,2,3]) ; X = 4), X > 1"), vec!["X=2", "X=3", "X=4"]);
}

#[test]
fn if_then_else_and_negation() {
    let r = rt("
        sign(X,S) :- ( X > 0 -> S = pos ; X < 0 -> S = neg ; S = zero ).
    ");
    assert_eq!(answers(&r, "sign(3,S)"), vec!["S=pos"]);
    assert_eq!(answers(&r, "sign(-3,S)"), vec!["S=neg"]);
    assert_eq!(answers(&r, "sign(0,S)"), vec!["S=zero"]);
    assert_eq!(answers(&r, "( member(X,[1,2]) -> true ; X = none )"), vec!["X=1"]);
    assert_eq!(answers(&r, "\\+ member(3,[1,2])"), vec![""]);
    assert!(answers(&r, "\\+ member(1,[1,2])").is_empty());
    assert_eq!(answers(&r, "once(member(X,[a,b]))"), vec!["X=a"]);
    assert_eq!(answers(&r, "forall(member(X,[1,2]), X > 0)"), vec![""]);
}

#[test]
fn catch_and_throw() {
    let r = rt("p :- throw(oops).");
    assert_eq!(answers(&r, "catch(p, E, true)"), vec!["E=oops"]);
    assert_eq!(answers(&r, "catch(member(X,[1,2]), _, true)"), vec!["X=1", "X=2"]);
    assert_eq!(answers(&r, "catch((member(X,[1,2]), X > 1, throw(found(X))), found(Y), true)"), vec!["Y=2"]);
    assert_eq!(error(&r, "p"), "oops");
    assert_eq!(answers(&r, "catch(_ is foo + 1, type_error(T, _), true)"), vec!["T=evaluable"]);
    assert_eq!(answers(&r, "catch(catch(throw(a), b, true), a, X = outer)"), vec!["X=outer"]);
}

#[test]
fn errors_are_formal_terms() {
    let r = rt("");
    assert_eq!(error(&r, "nosuch(1)"), "unknown_predicate('/'(nosuch,2))");
    assert_eq!(error(&r, "X is Y + 1"), "instantiation_error");
    assert_eq!(error(&r, "call(1)"), "type_error(callable,1)");
    assert_eq!(error(&r, "X is 1 // 0"), "evaluation_error(zero_divisor)");
}

#[test]
fn findall_and_between() {
    let r = rt("");
    assert_eq!(
        answers(&r, "findall(X-Y, (member(X,[1,2]), member(Y,[a,b])), L)"),
        vec!["L=['-'(1,a),'-'(1,b),'-'(2,a),'-'(2,b)]"]
    );
    assert_eq!(answers(&r, "findall(I, for(I,1,5), L)"), vec!["L=[1,2,3,4,5]"]);
    assert_eq!(answers(&r, "findall(I, between(3,1,I), L)"), vec!["L=[]"]);
    assert_eq!(answers(&r, "findall(X, member(X,[A,B,A]), L)"), vec!["L=[_V0,_V1,_V2]"]);
    assert_eq!(answers(&r, "findall(I, for(I,1,1000), L), length(L, N)").len(), 1);
}

#[test]
fn arithmetic_and_comparison() {
    let r = rt("");
    assert_eq!(answers(&r, "X is 7 mod -2, Y is -7 // 2, Z is 2 ** 10"), vec!["X=-1 Y=-3 Z=1024"]);
    assert_eq!(answers(&r, "compare(O, f(a), g)"), vec!["O='>'"]);
    assert_eq!(answers(&r, "msort([c,1,f(x),B,a], L)"), vec!["B=_V0 L=[_V0,1,a,c,f(x)]"]);
    assert_eq!(answers(&r, "sort([b,a,b], L)"), vec!["L=[a,b]"]);
    assert_eq!(answers(&r, "f(X,b) \\= f(a,c)"), vec![""]);
    assert_eq!(answers(&r, "X = f(Y), Y = 1, X == f(1)"), vec!["X=f(1) Y=1"]);
}

#[test]
fn term_inspection() {
    let r = rt("");
    assert_eq!(answers(&r, "functor(f(a,b), N, A)"), vec!["N=f A=2"]);
    assert_eq!(answers(&r, "functor(T, g, 2)"), vec!["T=g(_V0,_V1)"]);
    assert_eq!(answers(&r, "T =.. [h, 1, 2], arg(2, T, X)"), vec!["T=h(1,2) X=2"]);
    assert_eq!(answers(&r, "copy_term(f(X,X,Y), C)"), vec!["C=f(_V0,_V0,_V1)"]);
    assert_eq!(answers(&r, "length(L, 2)"), vec!["L=[_V0,_V1]"]);
    assert_eq!(answers(&r, "atom_codes(A, [104,105]), atom_length(A, N)"), vec!["A=hi N=2"]);
    assert_eq!(answers(&r, "term_to_atom(f(X,'A'), T)"), vec!["T='f(_V0,\\'A\\')'"]);
}

#[test]
fn database_updates() {
    let r = rt(":- assert(counter(0)).");
    assert_eq!(answers(&r, "counter(X)"), vec!["X=0"]);
    assert_eq!(answers(&r, "retract(counter(X)), Y is X+1, assert(counter(Y))"), vec!["X=0 Y=1"]);
    assert_eq!(answers(&r, "asserta(counter(9)), findall(X, counter(X), L)"), vec!["L=[9,1]"]);
    assert_eq!(answers(&r, "stats(counter/2, T, Temp, C, U)").len(), 1);
    assert!(answers(&r, "retract(nothing(_))").is_empty());
}

#[test]
fn output_goes_to_console() {
    let r = rt("hello :- write(hi), nl, println(f('X', [1])).");
    answers(&r, "hello");
    assert_eq!(r.console.lines(), vec!["hi", "f(X,[1])"]);
    assert_eq!(r.events.count("print", ""), 2);
}

#[test]
fn linear_assumptions_are_used_once() {
    let r = rt("");
    assert!(answers(&r, "assumeal(f(a)), assumed(f(X)), assumed(f(Y))").is_empty());
    assert_eq!(answers(&r, "assumeal(f(a)), assumeal(f(b)), assumed(f(X)), assumed(f(Y))"), vec!["X=b Y=a", "X=a Y=b"]);
}

#[test]
fn scoped_assumptions_vanish() {
    let r = rt("");
    assert_eq!(answers(&r, "host(h1) =>> assumed(host(H))"), vec!["H=h1"]);
    assert!(answers(&r, "(host(h1) =>> true), assumed(host(_))").is_empty());
    assert_eq!(answers(&r, "host(h1) =>> (assumed(host(A)), assumed(host(B)))"), vec!["A=h1 B=h1"]);
    assert_eq!(answers(&r, "(p(X) :- X = 3) =>> assumed(p(Y))"), vec!["Y=3"]);
}

#[test]
fn continuation_trio() {
    let r = rt("
        g(G) :- get_cont(C), strip_cont(C, G, _).
        foo(_).
        skip :- call_cont(true('$stop')).
    ");
    assert_eq!(answers(&r, "g(G), foo(1)"), vec!["G=foo(1)"]);
    assert_eq!(answers(&r, "X = 2, skip, fail"), vec!["X=2"]);
}

#[test]
fn capture_hands_goals_to_closure() {
    let r = rt("
        collect(Cs) :- assert(got(Cs)).
        a. b. c.
    ");
    assert_eq!(
        answers(&r, "capture_cont_for((call_with_cont(collect), a, b)), c, retract(got(X))"),
        vec!["X=','(a,b)"]
    );
    assert_eq!(answers(&r, "capture_cont_for((call_with_cont(collect))), retract(got(X))"), vec!["X=true"]);
    assert_eq!(error(&r, "assumeal(cont_marker(_)), call_with_cont(collect)"), "in_consume_cont(expected_marker(_V0))");
    assert_eq!(error(&r, "call_with_cont(collect)"), "assumption_missing(cont_marker)");
}

#[test]
fn nested_capture_stops_at_inner_marker() {
    let r = rt("
        collect(Cs) :- assert(got(Cs)).
        a. b.
    ");
    answers(&r, "capture_cont_for((capture_cont_for((call_with_cont(collect), a)), b))");
    assert_eq!(answers(&r, "got(X)"), vec!["X=a"]);
}

#[test]
fn engines_are_orthogonal() {
    let r = rt("");
    assert_eq!(
        answers(
            &r,
            "create_engine(E), load_engine(E, member(X,[a,b,c]), X), findall(A, (for(_,1,4), ask_engine(E, A)), L)"
        ),
        vec!["E=1 L=[a,b,c]"]
    );
    assert_eq!(error(&r, "ask_engine(99, _)"), "stale_handle(99)");
    let h = r.create_engine(None);
    r.load_engine(h, &parse_term("fail").unwrap(), &Term::nil()).unwrap();
    assert_eq!(r.ask_engine(h), Ok(None));
    r.destroy_engine(h).unwrap();
    assert_eq!(r.ask_engine(h), Err(EngineError::StaleHandle(h)));
}

#[test]
fn answers_are_copies() {
    let r = rt("");
    let h = r.create_engine(None);
    r.load_engine(h, &parse_term("member(_V0,[f(_V1),g])").unwrap(), &Term::var(0)).unwrap();
    let a = r.ask_engine(h).unwrap().unwrap();
    let b = r.ask_engine(h).unwrap().unwrap();
    assert_eq!(canonical_text(&a), "f(_V0)");
    assert_eq!(canonical_text(&b), "g");
}

#[test]
fn threads_deliver_answers() {
    let r = rt("slow(X) :- sleep_ms(10), X = done.");
    assert_eq!(
        answers(&r, "create_engine(E), load_engine(E, slow(X), X), ask_thread(E, T), thread_join(T), thread_join(T), in(answer(E, A))"),
        vec!["E=1 T=2 A=the(done)"]
    );
}

#[test]
fn synchronize_on_excludes() {
    let r = rt("
        :- assert(n(0)).
        inc :- retract(n(X)), sleep_ms(2), Y is X + 1, assert(n(Y)).
    ");
    let mut handles = Vec::new();
    for _ in 0..4 {
        let r = r.clone();
        handles.push(std::thread::spawn(move || {
            for _ in 0..5 {
                r.solve_all("synchronize_on(m, inc, _)").unwrap();
            }
        }));
    }
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(answers(&r, "n(X)"), vec!["X=20"]);
}

#[test]
fn binary_clauses_load_directly() {
    let r = rt("mytrue(K) ::- true(K).");
    assert_eq!(answers(&r, "mytrue"), vec![""]);
}

#[test]
fn capacity_limits_raise_resource_errors() {
    let r = rt("loop(X) :- loop(f(X)).");
    let h = r.create_engine(Some(contina::engine::Capacity { heap: 10_000, stack: 100, trail: 1000 }));
    r.load_engine(h, &parse_term("loop(a)").unwrap(), &Term::nil()).unwrap();
    let err = r.ask_engine(h).unwrap_err();
    assert_eq!(canonical_text(&err.ball()), "resource_error(heap)");
}
