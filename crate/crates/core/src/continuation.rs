//! First-order continuation capture.
//!
//! A continuation is the goal-register term itself: each frame is a
//! binarized goal whose last argument is the rest. `capture_cont_for/1`
//! brackets a goal with a linear `cont_marker(End)` assumption and an
//! `end_cont(End)` frame; `call_with_cont/1` walks the frames up to that
//! marker, hands the user-level goals to a closure and resumes past it.

use crate::binarizer::{strip_last, STOP};
use crate::engine::{BuiltinTable, Engine, Exception, Flow, Res};
use crate::term::{Atom, Term};

pub const PRELUDE: &str = r#"
capture_cont_for(Goal) :-
    assumeal(cont_marker(End)),
    Goal,
    end_cont(End).

call_with_cont(Closure) :-
    (   assumed(cont_marker(End))
    ->  consume_cont(Closure, End)
    ;   throw(assumption_missing(cont_marker))
    ).

consume_cont(Closure, Marker) :-
    get_cont(Cont),
    consume_cont1(Marker, Cs, Cont, NewCont),
    call(Closure, Cs),
    call_cont(NewCont).

consume_cont1(Marker, _, Cont, _) :-
    '$cont_end'(Cont), !,
    throw(in_consume_cont(expected_marker(Marker))).
consume_cont1(Marker, true, Cont, Last) :-
    '$cont_marker'(Cont, Marker, Last), !.
consume_cont1(Marker, Gs, Cont, Last) :-
    strip_cont(Cont, Goal, Next),
    (   '$cont_marker'(Next, Marker, L)
    ->  Gs = Goal, Last = L
    ;   '$cont_end'(Next)
    ->  throw(in_consume_cont(expected_marker(Marker)))
    ;   Gs = (Goal, Others),
        consume_cont1(Marker, Others, Next, Last)
    ).

wrap_thread(Goal) :- capture_cont_for(Goal).
"#;

/// One step of a continuation walk.
pub enum Frame {
    /// Nothing more to run here: `'$stop'`, a moved-segment end, or an
    /// opaque internal frame.
    End(Term),
    /// Bookkeeping frame with no user-level goal.
    Skip(Term),
    /// `end_cont(M)` followed by the rest.
    Marker(Term, Term),
    /// A user-level goal followed by the rest.
    Goal(Term, Term),
}

pub fn frame(e: &Engine, c: &Term) -> Frame {
    let c = e.walk(c);
    match &c {
        Term::Struct(s) => {
            let n = s.args.len();
            let last = s.args[n - 1].clone();
            match (s.name.as_str(), n) {
                ("$moved_end", 3) | ("$nafail", 1) => Frame::End(c),
                ("$unassume", 2) | ("$catch_exit", 2) | ("$cut", 2) | ("true", 1) => Frame::Skip(last),
                ("end_cont", 2) => Frame::Marker(s.args[0].clone(), last),
                ("$ite_then", 4) | ("$call_cut", 3) => Frame::Goal(s.args[n - 3].clone(), last),
                ("$or", 4) => Frame::Goal(Term::compound(";", s.args[..2].to_vec()), last),
                ("$ite", 5) => {
                    let a = &s.args;
                    let cond = Term::compound("->", vec![a[0].clone(), a[1].clone()]);
                    Frame::Goal(Term::compound(";", vec![cond, a[2].clone()]), last)
                }
                _ => {
                    let (g, _) = strip_last(&c);
                    Frame::Goal(g, last)
                }
            }
        }
        _ => Frame::End(c),
    }
}

/// Skips bookkeeping frames.
pub fn skip(e: &Engine, c: &Term) -> Term {
    let mut cur = c.clone();
    while let Frame::Skip(next) = frame(e, &cur) {
        cur = next;
    }
    e.walk(&cur)
}

/// User-level goals of continuation `k` up to its end, ignoring markers,
/// together with the terminating frame.
pub fn capture(e: &Engine, k: &Term) -> (Vec<Term>, Term) {
    let mut goals = Vec::new();
    let mut cur = k.clone();
    loop {
        match frame(e, &cur) {
            Frame::End(t) => return (goals, t),
            Frame::Skip(next) | Frame::Marker(_, next) => cur = next,
            Frame::Goal(g, next) => {
                goals.push(g);
                cur = next;
            }
        }
    }
}

pub fn is_stop(t: &Term) -> bool {
    t.is_atom(STOP)
}

pub(crate) fn install(t: &mut BuiltinTable) {
    let mut add = |name: &str, arity: usize, f: crate::engine::Builtin| {
        t.insert((Atom::new(name), arity), f);
    };
    add("get_cont", 2, b_get_cont);
    add("call_cont", 2, b_call_cont);
    add("strip_cont", 4, b_strip_cont);
    add("end_cont", 2, b_end_cont);
    add("$cont_end", 2, b_cont_end);
    add("$cont_marker", 4, b_cont_marker);
}

fn b_get_cont(e: &mut Engine, a: &[Term]) -> Res {
    e.unify_then(&a[0], &a[1], &a[1])
}

fn b_call_cont(_: &mut Engine, a: &[Term]) -> Res {
    Ok(Flow::Goal(a[0].clone()))
}

/// `strip_cont(Cont, Goal, Next)`: fails at the end of a continuation.
fn b_strip_cont(e: &mut Engine, a: &[Term]) -> Res {
    let c = skip(e, &a[0]);
    let (g, next) = match frame(e, &c) {
        Frame::Goal(g, next) => (g, next),
        Frame::Marker(m, next) => (Term::compound("end_cont", vec![m]), next),
        Frame::End(_) | Frame::Skip(_) => return Ok(Flow::Fail),
    };
    let next = skip(e, &next);
    if e.unify(&a[1], &g) {
        e.unify_then(&a[2], &next, &a[3])
    } else {
        Ok(Flow::Fail)
    }
}

/// `end_cont(M)`: retires the marker assumption `cont_marker(M)` if it is
/// still there.
fn b_end_cont(e: &mut Engine, a: &[Term]) -> Res {
    e.consume_marker(&a[0]);
    Ok(Flow::Goal(a[1].clone()))
}

fn b_cont_end(e: &mut Engine, a: &[Term]) -> Res {
    let c = skip(e, &a[0]);
    match frame(e, &c) {
        Frame::End(_) => Ok(Flow::Goal(a[1].clone())),
        _ => Ok(Flow::Fail),
    }
}

/// `'$cont_marker'(Cont, Marker, Rest)`: `Cont` starts with `end_cont(M)`
/// where `M` is the very variable `Marker`.
fn b_cont_marker(e: &mut Engine, a: &[Term]) -> Res {
    let c = skip(e, &a[0]);
    match frame(e, &c) {
        Frame::Marker(m, rest) if e.identical(&m, &a[1]) => e.unify_then(&a[2], &rest, &a[3]),
        _ => Ok(Flow::Fail),
    }
}

/// Error raised when `call_with_cont/1` runs outside any capture scope.
pub fn assumption_missing() -> Exception {
    Exception::of("assumption_missing", vec![Term::atom("cont_marker")])
}
